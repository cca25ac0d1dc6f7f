use super::{Loss, Prediction};

/// Lower bound on per-row hessians so empty-curvature leaves stay finite.
const MIN_HESSIAN: f64 = 1e-16;

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn softmax(raw: &[f64]) -> Vec<f64> {
    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = raw.iter().map(|&r| (r - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn log_sum_exp(raw: &[f64]) -> f64 {
    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + raw.iter().map(|&r| (r - max).exp()).sum::<f64>().ln()
}

pub(super) fn transform(loss: Loss, raw: &[f64]) -> Prediction {
    match loss {
        Loss::SquaredError => Prediction::Value(raw[0]),
        Loss::LogisticBinary => {
            let p = sigmoid(raw[0]);
            Prediction::Probabilities(vec![1.0 - p, p])
        }
        Loss::SoftmaxMulticlass => Prediction::Probabilities(softmax(raw)),
    }
}

/// Targets in the form each loss consumes.
pub(super) enum Targets<'a> {
    Real(&'a [f64]),
    Class(&'a [usize]),
}

pub(super) struct Objective<'a> {
    pub loss: Loss,
    pub targets: Targets<'a>,
    pub n_outputs: usize,
}

impl Objective<'_> {
    pub fn n_rows(&self) -> usize {
        match self.targets {
            Targets::Real(y) => y.len(),
            Targets::Class(y) => y.len(),
        }
    }

    pub fn base_scores(&self) -> Vec<f64> {
        let n = self.n_rows() as f64;
        match (&self.targets, self.loss) {
            (Targets::Real(y), _) => vec![y.iter().sum::<f64>() / n],
            (Targets::Class(y), Loss::LogisticBinary) => {
                let p = y.iter().filter(|&&c| c == 1).count() as f64 / n;
                vec![(p / (1.0 - p)).ln()]
            }
            (Targets::Class(y), _) => {
                let mut counts = vec![0usize; self.n_outputs];
                for &c in *y {
                    counts[c] += 1;
                }
                counts.iter().map(|&c| (c as f64 / n).ln()).collect()
            }
        }
    }

    /// Mean training loss for raw scores laid out row-major (`n_rows x
    /// n_outputs`).
    pub fn loss_value(&self, raw: &[f64]) -> f64 {
        let k = self.n_outputs;
        let n = self.n_rows();
        let total: f64 = match (&self.targets, self.loss) {
            (Targets::Real(y), _) => y
                .iter()
                .zip(raw)
                .map(|(&t, &f)| 0.5 * (f - t) * (f - t))
                .sum(),
            (Targets::Class(y), Loss::LogisticBinary) => y
                .iter()
                .zip(raw)
                .map(|(&c, &f)| if c == 1 { softplus(-f) } else { softplus(f) })
                .sum(),
            (Targets::Class(y), _) => (0..n)
                .map(|i| {
                    let row = &raw[i * k..(i + 1) * k];
                    log_sum_exp(row) - row[y[i]]
                })
                .sum(),
        };
        total / n as f64
    }

    /// Gradients and hessians per output, each with one entry per row.
    pub fn gradients(&self, raw: &[f64]) -> Vec<(Vec<f64>, Vec<f64>)> {
        let k = self.n_outputs;
        let n = self.n_rows();
        match (&self.targets, self.loss) {
            (Targets::Real(y), _) => {
                let g = y.iter().zip(raw).map(|(&t, &f)| f - t).collect();
                vec![(g, vec![1.0; n])]
            }
            (Targets::Class(y), Loss::LogisticBinary) => {
                let (g, h) = y
                    .iter()
                    .zip(raw)
                    .map(|(&c, &f)| {
                        let p = sigmoid(f);
                        let target = if c == 1 { 1.0 } else { 0.0 };
                        (p - target, (p * (1.0 - p)).max(MIN_HESSIAN))
                    })
                    .unzip();
                vec![(g, h)]
            }
            (Targets::Class(y), _) => {
                let mut out = vec![(Vec::with_capacity(n), Vec::with_capacity(n)); k];
                for i in 0..n {
                    let p = softmax(&raw[i * k..(i + 1) * k]);
                    for (c, (g, h)) in out.iter_mut().enumerate() {
                        let target = if y[i] == c { 1.0 } else { 0.0 };
                        g.push(p[c] - target);
                        h.push((p[c] * (1.0 - p[c])).max(MIN_HESSIAN));
                    }
                }
                out
            }
        }
    }
}
