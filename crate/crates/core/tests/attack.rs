use rand::seq::SliceRandom;
use rand::Rng;
use tabaudit::attack::*;
use tabaudit::benchmark::{benchmark_scenario, sample_benchmark};
use tabaudit::gbdt::{GbdtHyperparams, GbdtModel};
use tabaudit::generators::{fit_population_model, generate, GeneratorSpec};
use tabaudit::metrics::auc;
use tabaudit::pipeline::with_threads;
use tabaudit::seed;
use tabaudit::tabular::{Cell, ColumnKind, ColumnSchema, Dataset, Provenance, TableSchema};
use tabaudit::Error;

fn num_cat_schema() -> TableSchema {
    TableSchema::new(vec![
        ColumnSchema::numeric("n"),
        ColumnSchema::categorical("c", ["a", "b"]),
    ])
    .unwrap()
}

fn constant_regressor(value: f64) -> GbdtModel {
    GbdtModel::from_json(&format!(
        r#"{{"version":"gbdt-v1","loss":"squared_error","n_features":1,"base_scores":[{value}],"trees":[]}}"#
    ))
    .unwrap()
}

fn constant_binary(class: usize) -> GbdtModel {
    let raw = if class == 1 { 2.0 } else { -2.0 };
    GbdtModel::from_json(&format!(
        r#"{{"version":"gbdt-v1","loss":"logistic_binary","n_features":1,"base_scores":[{raw}],"trees":[]}}"#
    ))
    .unwrap()
}

fn fixed_predictors(n_hat: f64, c_hat: usize) -> Vec<AttributePredictor> {
    vec![
        AttributePredictor {
            target: 0,
            inputs: vec![1],
            task: PredictorTask::Regression,
            model: constant_regressor(n_hat),
        },
        AttributePredictor {
            target: 1,
            inputs: vec![0],
            task: PredictorTask::Classification { n_classes: 2 },
            model: constant_binary(c_hat),
        },
    ]
}

#[test]
fn profile_values_follow_the_layout() {
    let layout = ProfileLayout::new(&num_cat_schema(), "actual+error+accuracy".parse().unwrap()).unwrap();
    let record = [Cell::Num(2.0), Cell::Cat(1)];
    let p = extract_profile(&fixed_predictors(1.5, 1), &layout, &record, 7).unwrap();
    assert_eq!(p.values, vec![2.0, 0.5, 1.0, 1.0]);
    assert_eq!(p.record_id, 7);
    let p = extract_profile(&fixed_predictors(2.0, 0), &layout, &record, 7).unwrap();
    assert_eq!(p.values, vec![2.0, 0.0, 1.0, 0.0]);
}

#[test]
fn full_profile_has_every_kind() {
    let layout = ProfileLayout::new(&num_cat_schema(), FeatureSet::all()).unwrap();
    let record = [Cell::Num(4.0), Cell::Cat(0)];
    let p = extract_profile(&fixed_predictors(5.0, 1), &layout, &record, 0).unwrap();
    // n: actual, prediction, error, error_ratio; c: actual, prediction, accuracy
    assert_eq!(p.values, vec![4.0, 5.0, 1.0, 0.25, 0.0, 1.0, 0.0]);
}

#[test]
fn profile_errors() {
    let layout = ProfileLayout::new(&num_cat_schema(), FeatureSet::all()).unwrap();
    let preds = fixed_predictors(1.0, 0);
    // Missing predictor for a layout column.
    assert!(extract_profile(&preds[..1], &layout, &[Cell::Num(1.0), Cell::Cat(0)], 0).is_err());
    // Record that does not conform.
    assert!(extract_profile(&preds, &layout, &[Cell::Num(1.0)], 0).is_err());
    assert!(extract_profile(&preds, &layout, &[Cell::Cat(0), Cell::Cat(0)], 0).is_err());
    assert!(extract_profile(&preds, &layout, &[Cell::Num(1.0), Cell::Cat(5)], 0).is_err());
    // Predictor whose task disagrees with the schema.
    let mut wrong = preds.clone();
    wrong[1].task = PredictorTask::Classification { n_classes: 3 };
    assert!(extract_profile(&wrong, &layout, &[Cell::Num(1.0), Cell::Cat(0)], 0).is_err());
}

fn synthetic(n: usize, seed_value: u64) -> Dataset {
    sample_benchmark(n, seed_value).unwrap().with_provenance(Provenance::Synthetic)
}

#[test]
fn accuracy_agrees_with_prediction_on_every_profile() {
    let s = synthetic(300, 1);
    let preds = train_attribute_predictors(&s, &PredictorOptions::default(), 5).unwrap();
    let layout = ProfileLayout::new(s.schema(), FeatureSet::all()).unwrap();
    let real = sample_benchmark(200, 2).unwrap();
    let set = extract_profiles(&preds, &layout, &real, None).unwrap();
    let pos = |col: usize, kind: FeatureKind| {
        layout
            .entries
            .iter()
            .position(|e| e.column == col && e.kind == kind)
            .unwrap()
    };
    for p in &set.profiles {
        assert_eq!(p.values.len(), layout.width());
        assert!(p.values.iter().all(|v| v.is_finite()));
        for c in 8..12 {
            let same = p.values[pos(c, FeatureKind::Prediction)] == p.values[pos(c, FeatureKind::Actual)];
            assert_eq!(p.values[pos(c, FeatureKind::Accuracy)] == 1.0, same);
        }
        for c in 0..8 {
            let err = (p.values[pos(c, FeatureKind::Actual)] - p.values[pos(c, FeatureKind::Prediction)]).abs();
            assert_eq!(p.values[pos(c, FeatureKind::Error)], err);
        }
    }
    assert_eq!(set.profiles.iter().map(|p| p.record_id).collect::<Vec<_>>(), real.ids());
}

fn three_columns(n: usize, seed_value: u64, f: impl Fn(f64, f64, &mut dyn rand::RngCore) -> Cell, c: ColumnSchema) -> Dataset {
    let schema = TableSchema::new(vec![ColumnSchema::numeric("a"), ColumnSchema::numeric("b"), c]).unwrap();
    let mut rng = seed::rng(seed_value);
    let rows = (0..n)
        .map(|_| {
            let a: f64 = rng.random();
            let b: f64 = rng.random();
            vec![Cell::Num(a), Cell::Num(b), f(a, b, &mut rng)]
        })
        .collect();
    Dataset::new(schema, rows, Provenance::Synthetic).unwrap()
}

fn std_dev(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

#[test]
fn sum_column_is_reconstructed() {
    let s = three_columns(500, 3, |a, b, _| Cell::Num(a + b), ColumnSchema::numeric("c"));
    let preds = train_attribute_predictors(&s, &PredictorOptions::default(), 1).unwrap();
    let target: Vec<f64> = s.column(2).map(Cell::as_f64).collect();
    // The best constant predictor has RMSE equal to the standard deviation.
    let oracle = std_dev(&target);
    let p = preds.iter().find(|p| p.target == 2).unwrap();
    assert_eq!(p.inputs, vec![0, 1]);
    let mse = s
        .rows()
        .iter()
        .map(|r| match p.predict(r).unwrap() {
            Predicted::Value(v) => (v - r[2].as_f64()).powi(2),
            Predicted::Class(_) => unreachable!(),
        })
        .sum::<f64>()
        / s.len() as f64;
    assert!(mse.sqrt() < 0.05 * oracle, "rmse {} vs std {oracle}", mse.sqrt());
}

#[test]
fn independent_category_is_not_predictable() {
    let k = 4u32;
    let cat = ColumnSchema::categorical("c", ["w", "x", "y", "z"]);
    let make = |n, s| three_columns(n, s, |_, _, rng| Cell::Cat(rng.random_range(0..k)), cat.clone());
    let preds = train_attribute_predictors(&make(400, 4), &PredictorOptions::default(), 2).unwrap();
    let p = preds.iter().find(|p| p.target == 2).unwrap();
    let held_out = make(4000, 5);
    let hits = held_out
        .rows()
        .iter()
        .filter(|r| p.predict(r).unwrap() == Predicted::Class(r[2].as_f64() as usize))
        .count();
    let acc = hits as f64 / held_out.len() as f64;
    assert!((acc - 0.25).abs() < 0.1, "accuracy {acc}");
}

#[test]
fn predictor_preconditions() {
    let one = Dataset::new(
        TableSchema::new(vec![ColumnSchema::numeric("a")]).unwrap(),
        vec![vec![Cell::Num(1.0)]; 200],
        Provenance::Synthetic,
    )
    .unwrap();
    let opts = PredictorOptions::default();
    assert!(matches!(train_attribute_predictors(&one, &opts, 0), Err(Error::TooFewColumns(1))));

    let real = sample_benchmark(200, 0).unwrap();
    assert!(matches!(train_attribute_predictors(&real, &opts, 0), Err(Error::NotSynthetic)));

    assert!(matches!(
        train_attribute_predictors(&synthetic(99, 0), &opts, 0),
        Err(Error::InsufficientRows { needed: 100, available: 99 })
    ));

    let s = three_columns(150, 1, |_, _, _| Cell::Cat(0), ColumnSchema::categorical("c", ["p", "q"]));
    let err = train_attribute_predictors(&s, &opts, 0).unwrap_err();
    assert!(err.to_string().contains("lacks category `q`"), "{err}");
}

#[test]
fn single_category_columns_get_a_constant_predictor() {
    let s = three_columns(150, 1, |_, _, _| Cell::Cat(0), ColumnSchema::categorical("c", ["only"]));
    let preds = train_attribute_predictors(&s, &PredictorOptions::default(), 0).unwrap();
    let p = preds.iter().find(|p| p.target == 2).unwrap();
    assert_eq!(p.predict(&s.rows()[0]).unwrap(), Predicted::Class(0));
}

#[test]
fn key_columns_are_neither_targets_nor_inputs() {
    let base = synthetic(150, 6);
    let mut cols = vec![ColumnSchema::numeric("id")];
    cols.extend(base.schema().columns.iter().cloned());
    let schema = TableSchema::new(cols).unwrap().with_key("id").unwrap();
    let rows = base
        .rows()
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut row = vec![Cell::Num(i as f64)];
            row.extend_from_slice(r);
            row
        })
        .collect();
    let s = Dataset::new(schema, rows, Provenance::Synthetic).unwrap();
    let preds = train_attribute_predictors(&s, &PredictorOptions::default(), 0).unwrap();
    assert_eq!(preds.len(), 12);
    for p in &preds {
        assert_ne!(p.target, 0);
        assert!(!p.inputs.contains(&0) && !p.inputs.contains(&p.target));
        assert_eq!(p.inputs.len(), 11);
    }
}

#[test]
fn predictors_do_not_depend_on_thread_count() {
    let s = synthetic(200, 7);
    let opts = PredictorOptions::default();
    let one = with_threads(Some(1), || train_attribute_predictors(&s, &opts, 3).unwrap()).unwrap();
    let many = with_threads(Some(6), || train_attribute_predictors(&s, &opts, 3).unwrap()).unwrap();
    assert_eq!(one, many);
}

fn labeled_set(layout: &ProfileLayout, values: Vec<Vec<f64>>, labels: Vec<u8>) -> ProfileSet {
    ProfileSet {
        layout: layout.clone(),
        profiles: values
            .into_iter()
            .zip(labels)
            .enumerate()
            .map(|(i, (values, label))| ErrorProfile {
                record_id: i as u64,
                values,
                label: Some(label),
            })
            .collect(),
    }
}

fn random_profiles(layout: &ProfileLayout, n: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..layout.width()).map(|_| rng.random::<f64>()).collect())
        .collect()
}

#[test]
fn label_coordinate_is_learned_perfectly() {
    let layout = ProfileLayout::new(&num_cat_schema(), FeatureSet::all()).unwrap();
    let mut rng = seed::rng(1);
    let labels: Vec<u8> = (0..200).map(|i| (i % 2) as u8).collect();
    let mut values = random_profiles(&layout, 200, &mut rng);
    for (v, &l) in values.iter_mut().zip(&labels) {
        v[2] = f64::from(l);
    }
    let set = labeled_set(&layout, values, labels.clone());
    let clf = train_attack_classifier(&[set.clone()], &default_attack_hyper(), 0).unwrap();
    let scores = clf.score_set(&set).unwrap();
    assert!(scores.iter().all(|s| (0.0..=1.0).contains(s)));
    assert_eq!(auc(&scores, &labels).unwrap(), 1.0);
}

#[test]
fn shuffled_labels_give_chance_auc() {
    let layout = ProfileLayout::new(&num_cat_schema(), FeatureSet::all()).unwrap();
    let mut aucs = Vec::new();
    for s in 0..5 {
        let mut rng = seed::rng(100 + s);
        let mut labels: Vec<u8> = (0..800).map(|i| (i % 2) as u8).collect();
        let values = random_profiles(&layout, 800, &mut rng);
        labels.shuffle(&mut rng);
        let train = labeled_set(&layout, values[..600].to_vec(), labels[..600].to_vec());
        let test = labeled_set(&layout, values[600..].to_vec(), labels[600..].to_vec());
        let clf = train_attack_classifier(&[train], &default_attack_hyper(), s).unwrap();
        let a = auc(&clf.score_set(&test).unwrap(), &labels[600..]).unwrap();
        assert!((0.4..=0.6).contains(&a), "seed {s}: {a}");
        aucs.push(a);
    }
    let mean = aucs.iter().sum::<f64>() / 5.0;
    assert!((0.45..=0.55).contains(&mean), "{mean}");
}

#[test]
fn classifier_input_errors() {
    let schema = num_cat_schema();
    let full = ProfileLayout::new(&schema, FeatureSet::all()).unwrap();
    let small = ProfileLayout::new(&schema, "actual".parse().unwrap()).unwrap();
    let mut rng = seed::rng(2);
    let a = labeled_set(&full, random_profiles(&full, 20, &mut rng), vec![0, 1].repeat(10));
    let b = labeled_set(&small, random_profiles(&small, 20, &mut rng), vec![0, 1].repeat(10));
    let hyper = default_attack_hyper();
    assert!(matches!(train_attack_classifier(&[a.clone(), b], &hyper, 0), Err(Error::LayoutMismatch)));

    let one_class = labeled_set(&full, random_profiles(&full, 20, &mut rng), vec![1; 20]);
    assert!(matches!(train_attack_classifier(&[one_class], &hyper, 0), Err(Error::SingleClass)));

    let mut unlabeled = a.clone();
    unlabeled.profiles[3].label = None;
    assert!(matches!(train_attack_classifier(&[unlabeled], &hyper, 0), Err(Error::Unlabeled(3))));

    let mut ragged = a;
    ragged.profiles[0].values.pop();
    assert!(train_attack_classifier(&[ragged], &hyper, 0).is_err());
}

#[test]
fn projection_matches_direct_extraction() {
    let s = synthetic(200, 8);
    let preds = train_attribute_predictors(&s, &PredictorOptions::default(), 0).unwrap();
    let real = sample_benchmark(50, 9).unwrap();
    let full = extract_profiles(&preds, &ProfileLayout::new(s.schema(), FeatureSet::all()).unwrap(), &real, Some(1)).unwrap();
    for fs in FeatureSet::all_subsets() {
        let direct = extract_profiles(&preds, &ProfileLayout::new(s.schema(), fs).unwrap(), &real, Some(1)).unwrap();
        assert_eq!(full.project(fs).unwrap(), direct);
    }
}

struct Target {
    classifier: AttackClassifier,
    predictors: Vec<AttributePredictor>,
    challenge: Dataset,
    labels: Vec<u8>,
}

/// Leaky target at `leakage`, attack trained on leaky shadows.
fn target_attack(leakage: f64, seed_value: u64) -> Target {
    use tabaudit::experiment::{shadow_attack, AttackSettings};
    use tabaudit::generators::LeakyGenerator;
    use tabaudit::shadow::ShadowRunPlan;

    let sc = benchmark_scenario(2000, 200, seed_value).unwrap();
    let spec = GeneratorSpec {
        leakage,
        noise_scale: 0.05,
        flip_prob: 0.0,
    };
    let population = fit_population_model(&sc.aux).unwrap();
    let target_synth = generate(&spec, &sc.target_members, &population, 200, seed_value + 1000).unwrap();
    let settings = AttackSettings {
        feature_set: FeatureSet::all(),
        predictors: PredictorOptions::default(),
        classifier: default_attack_hyper(),
        fpr_cap: 0.1,
        min_split_size: 50,
    };
    let generator = LeakyGenerator { spec, population };
    let plan = ShadowRunPlan::new(8, 6, 2, seed_value).unwrap();
    let (_, eval) = shadow_attack(&sc.aux, &generator, &plan, &settings).unwrap();
    let predictors = train_attribute_predictors(&target_synth, &settings.predictors, seed_value).unwrap();
    Target {
        classifier: eval.classifier,
        predictors,
        challenge: sc.challenge,
        labels: sc.challenge_labels,
    }
}

#[test]
fn target_members_score_higher() {
    for s in 0..5 {
        let t = target_attack(1.0, s);
        let scores = score_membership(&t.classifier, &t.predictors, &t.challenge).unwrap();
        let mean = |label: u8| {
            let v: Vec<f64> = scores
                .iter()
                .zip(&t.labels)
                .filter(|(_, &l)| l == label)
                .map(|(s, _)| s.score)
                .collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        assert!(mean(1) > mean(0), "seed {s}: {} vs {}", mean(1), mean(0));
    }
}

#[test]
fn scoring_contract() {
    let t = target_attack(1.0, 11);
    let empty = t.challenge.subset(&[]);
    assert!(score_membership(&t.classifier, &t.predictors, &empty).unwrap().is_empty());

    let dup = t.challenge.subset(&[3, 3, 0]);
    let scores = score_membership(&t.classifier, &t.predictors, &dup).unwrap();
    assert_eq!(scores[0].score, scores[1].score);
    assert_eq!(scores.iter().map(|s| s.record_id).collect::<Vec<_>>(), dup.ids());
    assert!(scores.iter().all(|s| (0.0..=1.0).contains(&s.score)));

    let other = Dataset::new(num_cat_schema(), vec![vec![Cell::Num(1.0), Cell::Cat(0)]], Provenance::Real).unwrap();
    assert!(matches!(
        score_membership(&t.classifier, &t.predictors, &other),
        Err(Error::SchemaMismatch(_))
    ));

    let csv = scores_csv(&scores);
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("record_id,score"));
    let first = lines.next().unwrap();
    assert_eq!(first.split(',').nth(1).unwrap().split('.').nth(1).unwrap().len(), 6);
}

#[test]
fn bundle_round_trip_preserves_scores() {
    let t = target_attack(1.0, 12);
    let bundle = AttackBundle::new(t.classifier.clone(), t.predictors.clone(), "gbdt-shallow", "abc");
    let dir = tempfile::tempdir().unwrap();
    bundle.save(dir.path()).unwrap();
    let loaded = AttackBundle::load(dir.path()).unwrap();
    assert_eq!(loaded, bundle);
    assert_eq!(loaded.manifest.config_hash, "abc");
    let a = score_membership(&t.classifier, &t.predictors, &t.challenge).unwrap();
    let b = score_membership(&loaded.classifier, &loaded.predictors, &t.challenge).unwrap();
    assert_eq!(a, b);

    std::fs::write(dir.path().join("classifier.json"), constant_binary(1).to_json().unwrap()).unwrap();
    assert!(AttackBundle::load(dir.path()).is_err());
}

#[test]
fn selection_needs_candidates() {
    let layout = ProfileLayout::new(&num_cat_schema(), FeatureSet::all()).unwrap();
    let mut rng = seed::rng(3);
    let set = labeled_set(&layout, random_profiles(&layout, 40, &mut rng), vec![0, 1].repeat(20));
    assert!(matches!(select_best_config(&[], &set, &set, 0.1, 0), Err(Error::NoCandidates)));
}

#[test]
fn selection_prefers_the_informative_feature() {
    // Only the error of column n carries the label.
    let schema = num_cat_schema();
    let layout = ProfileLayout::new(&schema, FeatureSet::all()).unwrap();
    let make = |s: u64| {
        let mut rng = seed::rng(s);
        let labels: Vec<u8> = (0..300).map(|i| (i % 2) as u8).collect();
        let mut values = random_profiles(&layout, 300, &mut rng);
        for (v, &l) in values.iter_mut().zip(&labels) {
            v[2] = rng.random::<f64>() + if l == 1 { 0.0 } else { 0.8 };
        }
        labeled_set(&layout, values, labels)
    };
    let hyper = GbdtHyperparams::default();
    let candidates: Vec<Candidate> = ["actual", "error", "accuracy"]
        .iter()
        .map(|fs| Candidate {
            classifier: "g".into(),
            feature_set: fs.parse().unwrap(),
            hyper: hyper.clone(),
        })
        .collect();
    let sel = select_best_config(&candidates, &make(1), &make(2), 0.1, 0).unwrap();
    assert_eq!(sel.report.len(), 3);
    assert_eq!(sel.best_row().feature_set, "error");
    assert_eq!(sel.report.iter().map(|r| r.feature_set.as_str()).collect::<Vec<_>>(), ["actual", "error", "accuracy"]);
    let csv = ablation_csv(&sel.report);
    assert!(csv.starts_with("classifier,feature_set,tpr_at_10fpr,auc_roc\n"));
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn layout_kinds_respect_column_types() {
    let schema = tabaudit::benchmark::benchmark_schema();
    for fs in FeatureSet::all_subsets() {
        let Ok(layout) = ProfileLayout::new(&schema, fs) else {
            continue;
        };
        for e in &layout.entries {
            assert!(fs.contains(e.kind));
            assert!(e.kind.applies_to(schema.columns[e.column].kind));
            if e.kind == FeatureKind::Accuracy {
                assert_eq!(schema.columns[e.column].kind, ColumnKind::Categorical);
            }
        }
    }
}
