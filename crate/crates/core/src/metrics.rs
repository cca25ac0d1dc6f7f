//! ROC curves, AUC-ROC and TPR at a capped FPR.
//!
//! All thresholds use the rule `score > threshold → member`, evaluated at
//! every distinct score plus one sentinel below the minimum. TPR at capped
//! FPR is read off that step function without interpolation.

use std::cmp::Ordering;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_FPR_CAP: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub auc_roc: f64,
    pub tpr_at_fpr: f64,
    pub fpr_cap: f64,
    pub n_members: usize,
    pub n_non_members: usize,
}

fn class_counts(scores: &[f64], labels: &[u8]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            found: labels.len(),
        });
    }
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(Error::NonFinite(i));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.iter().filter(|&&l| l == 0).count();
    if pos + neg != labels.len() {
        return Err(Error::LabelOutOfRange {
            label: labels.iter().copied().find(|&l| l > 1).unwrap_or(2) as usize,
            n_classes: 2,
        });
    }
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    Ok((pos, neg))
}

/// Positive and negative counts strictly above each distinct score, from the
/// highest threshold down, ending with the below-minimum sentinel (all rows).
fn sweep(scores: &[f64], labels: &[u8]) -> Vec<(usize, usize)> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut out = Vec::with_capacity(scores.len() + 1);
    // Threshold at the maximum score: nothing is strictly above it.
    out.push((0, 0));
    let (mut tp, mut fp) = (0, 0);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]].total_cmp(&s) == Ordering::Equal {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        // Counts strictly above the next-lower distinct score (or the
        // sentinel once all rows are consumed).
        out.push((tp, fp));
    }
    out
}

pub fn roc_curve(scores: &[f64], labels: &[u8]) -> Result<RocCurve> {
    let (pos, neg) = class_counts(scores, labels)?;
    let mut points: Vec<RocPoint> = sweep(scores, labels)
        .into_iter()
        .map(|(tp, fp)| RocPoint {
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
        })
        .collect();
    points.sort_by(|a, b| a.fpr.total_cmp(&b.fpr).then(a.tpr.total_cmp(&b.tpr)));
    points.dedup();
    Ok(RocCurve { points })
}

/// Mann-Whitney AUC: `(wins + ties / 2) / (n_members * n_non_members)`,
/// computed from average ranks.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (pos, neg) = class_counts(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Twice the rank sum of members keeps tied ranks integral.
    let mut twice_rank_sum: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]].total_cmp(&scores[order[i]]) == Ordering::Equal {
            j += 1;
        }
        // Ranks i+1 ..= j share the average (i + 1 + j) / 2.
        let twice_avg = (i + 1 + j) as u128;
        let members = order[i..j].iter().filter(|&&k| labels[k] == 1).count() as u128;
        twice_rank_sum += twice_avg * members;
        i = j;
    }
    let pos_u = pos as u128;
    // 2U = 2R - n1(n1+1)
    let twice_u = twice_rank_sum - pos_u * (pos_u + 1);
    Ok(twice_u as f64 / (2.0 * pos as f64 * neg as f64))
}

pub fn tpr_at_fpr(scores: &[f64], labels: &[u8], cap: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&cap) {
        return Err(Error::InvalidHyperparams(format!("fpr cap {cap} outside [0, 1]")));
    }
    let (pos, neg) = class_counts(scores, labels)?;
    Ok(sweep(scores, labels)
        .into_iter()
        .filter(|&(_, fp)| fp as f64 / neg as f64 <= cap)
        .map(|(tp, _)| tp as f64 / pos as f64)
        .fold(0.0, f64::max))
}

pub fn attack_report(scores: &[f64], labels: &[u8], fpr_cap: f64) -> Result<AttackReport> {
    let (pos, neg) = class_counts(scores, labels)?;
    Ok(AttackReport {
        auc_roc: auc(scores, labels)?,
        tpr_at_fpr: tpr_at_fpr(scores, labels, fpr_cap)?,
        fpr_cap,
        n_members: pos,
        n_non_members: neg,
    })
}

impl RocCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("fpr,tpr\n");
        for p in &self.points {
            let _ = writeln!(out, "{:.6},{:.6}", p.fpr, p.tpr);
        }
        out
    }

    /// ROC plot with a zoomed inset of the low-FPR region (`fpr <= 0.1`).
    pub fn to_svg(&self, title: &str) -> String {
        const W: f64 = 480.0;
        const M: f64 = 50.0;
        let plot = W - 2.0 * M;
        let path = |x0: f64, y0: f64, size: f64, xmax: f64, ymax: f64| -> String {
            let mut d = String::new();
            for (i, p) in self.points.iter().enumerate() {
                let x = x0 + (p.fpr.min(xmax) / xmax) * size;
                let y = y0 + size - (p.tpr.min(ymax) / ymax) * size;
                let _ = write!(d, "{}{x:.2},{y:.2} ", if i == 0 { "M" } else { "L" });
            }
            d
        };
        let inset_x = M + plot * 0.52;
        let inset_y = M + plot * 0.50;
        let inset = plot * 0.42;
        let mut svg = String::new();
        let _ = write!(
            svg,
            concat!(
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{w}\" font-family=\"sans-serif\" font-size=\"12\">\n",
                "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
                "<text x=\"{cx}\" y=\"25\" text-anchor=\"middle\">{title}</text>\n",
                "<rect x=\"{m}\" y=\"{m}\" width=\"{p}\" height=\"{p}\" fill=\"none\" stroke=\"black\"/>\n",
                "<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{m}\" stroke=\"gray\" stroke-dasharray=\"4 4\"/>\n",
                "<path d=\"{main}\" fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\"/>\n",
                "<text x=\"{cx}\" y=\"{xl}\" text-anchor=\"middle\">False positive rate</text>\n",
                "<text x=\"15\" y=\"{cx}\" text-anchor=\"middle\" transform=\"rotate(-90 15 {cx})\">True positive rate</text>\n",
                "<rect x=\"{ix}\" y=\"{iy}\" width=\"{is}\" height=\"{is}\" fill=\"white\" stroke=\"black\"/>\n",
                "<path d=\"{zoom}\" fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.5\"/>\n",
                "<text x=\"{ix}\" y=\"{il}\" font-size=\"10\">FPR 0-0.1</text>\n",
                "</svg>\n"
            ),
            w = W,
            cx = W / 2.0,
            title = title,
            m = M,
            p = plot,
            b = M + plot,
            r = M + plot,
            main = path(M, M, plot, 1.0, 1.0),
            xl = W - 12.0,
            ix = inset_x,
            iy = inset_y,
            is = inset,
            zoom = path(inset_x, inset_y, inset, 0.1, 1.0),
            il = inset_y - 4.0,
        );
        svg
    }
}

impl AttackReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
