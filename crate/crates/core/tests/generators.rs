use std::collections::HashSet;

use rand_distr::{Distribution, Normal};
use tabaudit::generators::{
    fit_population_model, generate, ExternalGenerator, GeneratorSpec, LeakyGenerator,
    SyntheticGenerator,
};
use tabaudit::seed;
use tabaudit::tabular::{Cell, ColumnSchema, Dataset, Provenance, TableSchema};

fn mixed(n: usize, seed_value: u64) -> Dataset {
    let schema = TableSchema::new(vec![
        ColumnSchema::numeric("x"),
        ColumnSchema::numeric("y"),
        ColumnSchema::categorical("c", ["a", "b", "c"]),
    ])
    .unwrap();
    let mut rng = seed::rng(seed_value);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let rows = (0..n)
        .map(|i| {
            let x: f64 = normal.sample(&mut rng);
            vec![
                Cell::Num(x),
                Cell::Num(2.0 * x + normal.sample(&mut rng)),
                Cell::Cat((i % 3) as u32),
            ]
        })
        .collect();
    Dataset::new(schema, rows, Provenance::Real).unwrap()
}

fn spec(leakage: f64, noise_scale: f64) -> GeneratorSpec {
    GeneratorSpec {
        leakage,
        noise_scale,
        flip_prob: 0.0,
    }
}

fn key(row: &[Cell]) -> String {
    format!("{row:?}")
}

#[test]
fn pure_copies_come_from_members() {
    let aux = mixed(400, 1);
    let members = aux.subset(&(0..100).collect::<Vec<_>>());
    let pop = fit_population_model(&aux).unwrap();
    let synth = generate(&spec(1.0, 0.0), &members, &pop, 300, 7).unwrap();
    let member_rows: HashSet<String> = members.rows().iter().map(|r| key(r)).collect();
    assert_eq!(synth.len(), 300);
    assert_eq!(synth.provenance(), Provenance::Synthetic);
    assert_eq!(synth.schema(), members.schema());
    assert!(synth.rows().iter().all(|r| member_rows.contains(&key(r))));
}

#[test]
fn zero_leakage_matches_population_marginals() {
    let aux = mixed(600, 2);
    let members = aux.subset(&(0..50).collect::<Vec<_>>());
    let pop = fit_population_model(&aux).unwrap();
    let n = 30_000;
    let synth = generate(&spec(0.0, 0.3), &members, &pop, n, 11).unwrap();

    let freqs = pop.marginals()[2].frequencies().unwrap();
    let mut counts = [0usize; 3];
    for cell in synth.column(2) {
        counts[cell.as_f64() as usize] += 1;
    }
    for (count, f) in counts.iter().zip(&freqs) {
        // Binomial standard error is below 0.003 at this n.
        assert!((*count as f64 / n as f64 - f).abs() < 0.015, "{counts:?} vs {freqs:?}");
    }

    // Every numeric value is drawn from the population support.
    let support: HashSet<u64> = aux.column(0).map(|c| c.as_f64().to_bits()).collect();
    assert!(synth.column(0).all(|c| support.contains(&c.as_f64().to_bits())));
    let pop_mean = aux.column(0).map(Cell::as_f64).sum::<f64>() / aux.len() as f64;
    let synth_mean = synth.column(0).map(Cell::as_f64).sum::<f64>() / n as f64;
    assert!((pop_mean - synth_mean).abs() < 0.05);
}

#[test]
fn zero_leakage_output_ignores_member_identity() {
    let aux = mixed(300, 3);
    let pop = fit_population_model(&aux).unwrap();
    let a = aux.subset(&(0..100).collect::<Vec<_>>());
    let b = aux.subset(&(100..200).collect::<Vec<_>>());
    let sa = generate(&spec(0.0, 0.0), &a, &pop, 200, 5).unwrap();
    let sb = generate(&spec(0.0, 0.0), &b, &pop, 200, 5).unwrap();
    assert_eq!(sa.rows(), sb.rows());
}

/// Members rescaled to mean exactly 100 and population std exactly 10.
fn standardized_members(n: usize, seed_value: u64) -> Dataset {
    let mut rng = seed::rng(seed_value);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let raw: Vec<f64> = (0..n).map(|_| normal.sample(&mut rng)).collect();
    let mean = raw.iter().sum::<f64>() / n as f64;
    let std = (raw.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    let schema = TableSchema::new(vec![ColumnSchema::numeric("v")]).unwrap();
    let rows = raw
        .iter()
        .map(|v| vec![Cell::Num(100.0 + 10.0 * (v - mean) / std)])
        .collect();
    Dataset::new(schema, rows, Provenance::Real).unwrap()
}

#[test]
fn noisy_copies_keep_the_member_mean() {
    // Copied value = uniform member (sd 10) + N(0, (0.1 * 10)^2): the sample
    // mean has standard error below (10 * 0.1 + 10) / sqrt(n).
    let members = standardized_members(500, 9);
    let pop = fit_population_model(&members).unwrap();
    for n in [200usize, 1000, 5000] {
        for s in 0..5 {
            let synth = generate(&spec(1.0, 0.1), &members, &pop, n, s).unwrap();
            let mean = synth.column(0).map(Cell::as_f64).sum::<f64>() / n as f64;
            let bound = 3.0 * (10.0 * 0.1 + 10.0) / (n as f64).sqrt();
            assert!((mean - 100.0).abs() < bound, "n={n} seed={s}: {mean}");
        }
    }
}

#[test]
fn zero_variance_columns_get_no_noise() {
    let schema = TableSchema::new(vec![ColumnSchema::numeric("k")]).unwrap();
    let rows = vec![vec![Cell::Num(4.0)]; 20];
    let members = Dataset::new(schema, rows, Provenance::Real).unwrap();
    let pop = fit_population_model(&members).unwrap();
    let synth = generate(&spec(1.0, 2.0), &members, &pop, 50, 1).unwrap();
    assert!(synth.column(0).all(|c| c == Cell::Num(4.0)));
}

#[test]
fn flips_stay_valid_and_generation_is_deterministic() {
    let aux = mixed(200, 4);
    let pop = fit_population_model(&aux).unwrap();
    let s = GeneratorSpec {
        leakage: 0.7,
        noise_scale: 0.2,
        flip_prob: 0.5,
    };
    let a = generate(&s, &aux, &pop, 500, 99).unwrap();
    let b = generate(&s, &aux, &pop, 500, 99).unwrap();
    let c = generate(&s, &aux, &pop, 500, 100).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.rows(), c.rows());
    assert!(a.column(2).all(|cell| matches!(cell, Cell::Cat(i) if i < 3)));
}

#[test]
fn population_schema_must_match() {
    let aux = mixed(50, 5);
    let other = standardized_members(50, 5);
    let pop = fit_population_model(&other).unwrap();
    assert!(generate(&spec(0.5, 0.0), &aux, &pop, 10, 0).is_err());
    let empty = aux.subset(&[]);
    let pop = fit_population_model(&aux).unwrap();
    assert!(generate(&spec(0.5, 0.0), &empty, &pop, 10, 0).is_err());
}

#[test]
fn leaky_generator_implements_the_trait() {
    let aux = mixed(100, 6);
    let g = LeakyGenerator {
        spec: spec(1.0, 0.0),
        population: fit_population_model(&aux).unwrap(),
    };
    let dynamic: &dyn SyntheticGenerator = &g;
    assert_eq!(dynamic.name(), "leaky");
    assert_eq!(dynamic.generate(&aux, 10, 0).unwrap().len(), 10);
}

fn sh(script: &str) -> ExternalGenerator {
    ExternalGenerator::new(vec![
        "sh".into(),
        "-c".into(),
        script.into(),
        "sh".into(),
        "{input}".into(),
        "{output}".into(),
        "{n}".into(),
        "{seed}".into(),
    ])
    .unwrap()
}

#[test]
fn external_generator_round_trips_through_csv() {
    let members = mixed(30, 7);
    let synth = sh(r#"cp "$1" "$2""#).generate(&members, 30, 5).unwrap();
    assert_eq!(synth.provenance(), Provenance::Synthetic);
    assert_eq!(synth.rows(), members.rows());
}

#[test]
fn external_generator_sees_n_and_seed() {
    let members = mixed(30, 8);
    // Header plus the first n data rows; fails unless the seed came through.
    let synth = sh(r#"[ "$4" = 12345 ] && head -n $(($3 + 1)) "$1" > "$2""#)
        .generate(&members, 7, 12345)
        .unwrap();
    assert_eq!(synth.rows(), &members.rows()[..7]);
    assert!(sh(r#"[ "$4" = 1 ] && cp "$1" "$2""#).generate(&members, 30, 2).is_err());
}

#[test]
fn external_generator_failures_are_errors() {
    let members = mixed(30, 9);
    assert!(sh("exit 3").generate(&members, 30, 0).is_err());
    let err = sh(r#"cp "$1" "$2""#).generate(&members, 10, 0).unwrap_err();
    assert!(err.to_string().contains("expected 10"), "{err}");
    assert!(ExternalGenerator::new(vec![]).is_err());
}
