//! The four distillation objectives and their weighted combination.
//!
//! Each loss comes in two forms: a value-only function and a `_grad` variant
//! returning the value together with its gradient with respect to the direct
//! inputs. The tape uses the `_grad` variants; tests check them against
//! central finite differences.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("{0}: every position is masked; loss is undefined")]
    AllMasked(&'static str),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("target {target} outside vocabulary of {vocab}")]
    TargetOutOfRange { target: usize, vocab: usize },
    #[error("non-finite {component} component: {value}")]
    NonFinite { component: &'static str, value: f64 },
}

fn log_sum_exp(row: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = row.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + row.map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check_lm(logits: &ArrayView2<f64>, targets: &[usize], mask: &[bool]) -> Result<usize, LossError> {
    let (t, v) = logits.dim();
    if targets.len() != t || mask.len() != t {
        return Err(LossError::Shape(format!(
            "logits have {t} rows, targets {}, mask {}",
            targets.len(),
            mask.len()
        )));
    }
    let mut count = 0;
    for (&target, &m) in targets.iter().zip(mask) {
        if m {
            if target >= v {
                return Err(LossError::TargetOutOfRange { target, vocab: v });
            }
            count += 1;
        }
    }
    if count == 0 {
        return Err(LossError::AllMasked("lm_loss"));
    }
    Ok(count)
}

/// Mean over unmasked positions of `-log softmax(logits[t])[targets[t]]`.
pub fn lm_loss(logits: ArrayView2<f64>, targets: &[usize], mask: &[bool]) -> Result<f64, LossError> {
    let count = check_lm(&logits, targets, mask)?;
    let total: f64 = logits
        .rows()
        .into_iter()
        .zip(targets.iter().zip(mask))
        .filter(|(_, (_, m))| **m)
        .map(|(row, (&target, _))| log_sum_exp(row.iter().copied()) - row[target])
        .sum();
    Ok(total / count as f64)
}

pub fn lm_loss_grad(
    logits: ArrayView2<f64>,
    targets: &[usize],
    mask: &[bool],
) -> Result<(f64, Array2<f64>), LossError> {
    let count = check_lm(&logits, targets, mask)? as f64;
    let mut grad = Array2::zeros(logits.raw_dim());
    let mut total = 0.0;
    for ((row, mut g), (&target, &m)) in logits
        .rows()
        .into_iter()
        .zip(grad.rows_mut())
        .zip(targets.iter().zip(mask))
    {
        if !m {
            continue;
        }
        let lse = log_sum_exp(row.iter().copied());
        total += lse - row[target];
        for (gv, &x) in g.iter_mut().zip(row) {
            *gv = (x - lse).exp() / count;
        }
        g[target] -= 1.0 / count;
    }
    Ok((total / count, grad))
}

fn check_node(
    logits: &ArrayView2<f64>,
    labels: &ArrayView2<f64>,
    mask: &ArrayView2<bool>,
) -> Result<(), LossError> {
    if logits.dim() != labels.dim() || logits.dim() != mask.dim() {
        return Err(LossError::Shape(format!(
            "logits {:?}, labels {:?}, mask {:?}",
            logits.dim(),
            labels.dim(),
            mask.dim()
        )));
    }
    if !mask.iter().any(|&m| m) {
        return Err(LossError::AllMasked("node_loss"));
    }
    Ok(())
}

/// Binary cross-entropy with logits over `[B, N]` node scores: summed over the
/// unmasked nodes of each graph, averaged over the `B` graphs.
pub fn node_loss(
    logits: ArrayView2<f64>,
    labels: ArrayView2<f64>,
    mask: ArrayView2<bool>,
) -> Result<f64, LossError> {
    node_loss_grad(logits, labels, mask).map(|(v, _)| v)
}

pub fn node_loss_grad(
    logits: ArrayView2<f64>,
    labels: ArrayView2<f64>,
    mask: ArrayView2<bool>,
) -> Result<(f64, Array2<f64>), LossError> {
    check_node(&logits, &labels, &mask)?;
    let graphs = logits.nrows() as f64;
    let mut grad = Array2::zeros(logits.raw_dim());
    let mut total = 0.0;
    for (((h, y), m), g) in logits.iter().zip(labels.iter()).zip(mask.iter()).zip(grad.iter_mut()) {
        if *m {
            // -[y log σ(h) + (1-y) log(1-σ(h))] = softplus(h) - y h
            total += softplus(*h) - y * h;
            *g = (sigmoid(*h) - y) / graphs;
        }
    }
    Ok((total / graphs, grad))
}

/// Mean of `max(0, 1 - s⁺ + s⁻)` over paired chain scores.
pub fn contrastive_loss(pos: &[f64], neg: &[f64]) -> Result<f64, LossError> {
    contrastive_loss_grad(pos, neg).map(|(v, _, _)| v)
}

pub fn contrastive_loss_grad(pos: &[f64], neg: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>), LossError> {
    if pos.len() != neg.len() {
        return Err(LossError::Shape(format!("{} positive vs {} negative scores", pos.len(), neg.len())));
    }
    if pos.is_empty() {
        return Err(LossError::Shape("no score pairs".into()));
    }
    let n = pos.len() as f64;
    let mut total = 0.0;
    let mut gp = vec![0.0; pos.len()];
    let mut gn = vec![0.0; neg.len()];
    for i in 0..pos.len() {
        let slack = 1.0 - pos[i] + neg[i];
        if slack > 0.0 {
            total += slack;
            gp[i] = -1.0 / n;
            gn[i] = 1.0 / n;
        }
    }
    Ok((total / n, gp, gn))
}

/// `(1/N) Σ ‖z_dec,i − z_sol,i‖²` over rows.
pub fn alignment_loss(z_dec: ArrayView2<f64>, z_sol: ArrayView2<f64>) -> Result<f64, LossError> {
    alignment_loss_grad(z_dec, z_sol).map(|(v, _, _)| v)
}

pub fn alignment_loss_grad(
    z_dec: ArrayView2<f64>,
    z_sol: ArrayView2<f64>,
) -> Result<(f64, Array2<f64>, Array2<f64>), LossError> {
    if z_dec.dim() != z_sol.dim() {
        return Err(LossError::Shape(format!("{:?} vs {:?}", z_dec.dim(), z_sol.dim())));
    }
    if z_dec.nrows() == 0 {
        return Err(LossError::Shape("no embedding pairs".into()));
    }
    let n = z_dec.nrows() as f64;
    let diff = &z_dec - &z_sol;
    let value = diff.iter().map(|d| d * d).sum::<f64>() / n;
    let gd = &diff * (2.0 / n);
    let gs = -&gd;
    Ok((value, gd, gs))
}

/// Weights α, β, γ, δ on the LM, node, contrastive and alignment terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossCoefficients {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
}

impl Default for LossCoefficients {
    fn default() -> Self {
        LossCoefficients { alpha: 1.0, beta: 1.0, gamma: 0.1, delta: 0.5 }
    }
}

impl LossCoefficients {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma), ("delta", self.delta)] {
            if !v.is_finite() || v < 0.0 {
                return Err(format!("coefficient {name} = {v} must be finite and non-negative"));
            }
        }
        Ok(())
    }

    /// Parses `a,b,g,d`.
    pub fn parse(text: &str) -> Result<Self, String> {
        let parts: Vec<f64> = text
            .split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
            .collect::<Result<_, _>>()?;
        let [alpha, beta, gamma, delta] = parts[..] else {
            return Err(format!("expected four comma-separated coefficients, got {}", parts.len()));
        };
        let c = LossCoefficients { alpha, beta, gamma, delta };
        c.validate()?;
        Ok(c)
    }
}

/// Component values and the weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBundle {
    pub lm: f64,
    pub node: f64,
    pub contrast: f64,
    pub align: f64,
    pub total: f64,
}

pub fn total_loss(
    lm: f64,
    node: f64,
    contrast: f64,
    align: f64,
    coefficients: &LossCoefficients,
) -> Result<LossBundle, LossError> {
    for (component, value) in [("lm", lm), ("node", node), ("contrast", contrast), ("align", align)] {
        if !value.is_finite() {
            return Err(LossError::NonFinite { component, value });
        }
    }
    let c = coefficients;
    Ok(LossBundle {
        lm,
        node,
        contrast,
        align,
        total: c.alpha * lm + c.beta * node + c.gamma * contrast + c.delta * align,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Central-difference gradient of a scalar function of a matrix.
    fn numeric_grad(x: &Array2<f64>, f: impl Fn(&Array2<f64>) -> f64) -> Array2<f64> {
        let h = 1e-6;
        let mut g = Array2::zeros(x.raw_dim());
        for idx in 0..x.len() {
            let (r, c) = (idx / x.ncols(), idx % x.ncols());
            let mut p = x.clone();
            p[[r, c]] += h;
            let mut m = x.clone();
            m[[r, c]] -= h;
            g[[r, c]] = (f(&p) - f(&m)) / (2.0 * h);
        }
        g
    }

    fn assert_close_rel(a: &Array2<f64>, b: &Array2<f64>, tol: f64) {
        for (x, y) in a.iter().zip(b.iter()) {
            let err = (x - y).abs() / x.abs().max(y.abs()).max(1e-8);
            assert!(err <= tol || (x - y).abs() < 1e-9, "{x} vs {y}");
        }
    }

    fn random(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((rows, cols), |_| rng.random_range(-2.0..2.0))
    }

    #[test]
    fn lm_uniform_logits_give_log_vocab() {
        let logits = Array2::zeros((3, 4));
        let v = lm_loss(logits.view(), &[0, 1, 3], &[true; 3]).unwrap();
        assert!((v - 4f64.ln()).abs() < 1e-12);
        assert!((v - 1.3863).abs() < 1e-4);
    }

    #[test]
    fn lm_loss_vanishes_with_margin() {
        let mut prev = f64::INFINITY;
        for margin in [1.0, 5.0, 20.0, 50.0] {
            let logits = array![[margin, 0.0, 0.0]];
            let v = lm_loss(logits.view(), &[0], &[true]).unwrap();
            assert!(v < prev);
            prev = v;
        }
        assert!(prev < 1e-20);
    }

    #[test]
    fn lm_loss_matches_scalar_oracle() {
        let logits = random(3, 5, 11);
        let targets = [4, 0, 2];
        let mut total = 0.0;
        for t in 0..3 {
            let mut denom = 0.0;
            for v in 0..5 {
                denom += logits[[t, v]].exp();
            }
            total += -(logits[[t, targets[t]]].exp() / denom).ln();
        }
        let v = lm_loss(logits.view(), &targets, &[true; 3]).unwrap();
        assert!((v - total / 3.0).abs() < 1e-10);
    }

    #[test]
    fn lm_loss_errors() {
        let logits = Array2::zeros((2, 3));
        assert_eq!(lm_loss(logits.view(), &[0, 1], &[false, false]), Err(LossError::AllMasked("lm_loss")));
        assert!(matches!(lm_loss(logits.view(), &[0, 5], &[true, true]), Err(LossError::TargetOutOfRange { .. })));
        assert!(matches!(lm_loss(logits.view(), &[0], &[true]), Err(LossError::Shape(_))));
    }

    #[test]
    #[allow(clippy::approx_constant)] // the four-digit value is the point
    fn node_loss_closed_forms() {
        let v = node_loss(array![[0.0]].view(), array![[1.0]].view(), array![[true]].view()).unwrap();
        assert!((v - 2f64.ln()).abs() < 1e-12);
        assert!((v - 0.6931).abs() < 1e-4);
        let v = node_loss(array![[20.0]].view(), array![[1.0]].view(), array![[true]].view()).unwrap();
        assert!(v < 1e-8);
    }

    #[test]
    fn node_loss_matches_elementwise_oracle() {
        let logits = array![[0.3, -1.2, 2.5, 0.0]];
        let labels = array![[1.0, 0.0, 0.0, 1.0]];
        let mask = array![[true, true, true, true]];
        let mut oracle = 0.0;
        for i in 0..4 {
            let p = 1.0 / (1.0 + (-logits[[0, i]] as f64).exp());
            let y = labels[[0, i]];
            oracle += -(y * p.ln() + (1.0 - y) * (1.0 - p).ln());
        }
        let v = node_loss(logits.view(), labels.view(), mask.view()).unwrap();
        assert!((v - oracle).abs() < 1e-10);
    }

    #[test]
    fn node_loss_averages_per_graph_and_skips_mask() {
        let logits = array![[0.0, 9.0], [0.0, 0.0]];
        let labels = array![[1.0, 0.0], [0.0, 1.0]];
        let mask = array![[true, false], [true, true]];
        let v = node_loss(logits.view(), labels.view(), mask.view()).unwrap();
        assert!((v - 3.0 * 2f64.ln() / 2.0).abs() < 1e-12);
        let none = Array2::from_elem((2, 2), false);
        assert_eq!(node_loss(logits.view(), labels.view(), none.view()), Err(LossError::AllMasked("node_loss")));
    }

    #[test]
    fn node_loss_stays_finite_for_extreme_logits() {
        let logits = array![[800.0, -800.0]];
        let labels = array![[0.0, 1.0]];
        let v = node_loss(logits.view(), labels.view(), array![[true, true]].view()).unwrap();
        assert!(v.is_finite());
        assert!((v - 1600.0).abs() < 1e-9);
    }

    #[test]
    fn contrastive_cases() {
        assert_eq!(contrastive_loss(&[2.0], &[0.0]).unwrap(), 0.0);
        assert_eq!(contrastive_loss(&[0.4], &[0.4]).unwrap(), 1.0);
        assert_eq!(contrastive_loss(&[2.0, 1.0], &[0.0, 1.0]).unwrap(), 0.5);
        assert!(matches!(contrastive_loss(&[1.0], &[1.0, 2.0]), Err(LossError::Shape(_))));
    }

    #[test]
    fn contrastive_gradient_zero_beyond_margin() {
        let (_, gp, gn) = contrastive_loss_grad(&[3.0, 0.0], &[1.5, 0.0]).unwrap();
        assert_eq!((gp[0], gn[0]), (0.0, 0.0));
        assert_eq!((gp[1], gn[1]), (-0.5, 0.5));
    }

    #[test]
    fn alignment_cases() {
        let a = array![[1.0, 0.0]];
        let z = array![[0.0, 0.0]];
        assert_eq!(alignment_loss(a.view(), z.view()).unwrap(), 1.0);
        assert_eq!(alignment_loss(a.view(), a.view()).unwrap(), 0.0);
        let x = random(3, 4, 7);
        let y = random(3, 4, 8);
        let base = alignment_loss(x.view(), y.view()).unwrap();
        let doubled = alignment_loss((&x * 2.0).view(), (&y * 2.0).view()).unwrap();
        assert!((doubled - 4.0 * base).abs() < 1e-12);
        assert!(alignment_loss(x.view(), random(2, 4, 1).view()).is_err());
    }

    #[test]
    fn total_loss_combination() {
        let c = LossCoefficients::default();
        assert_eq!(total_loss(1.0, 1.0, 1.0, 1.0, &c).unwrap().total, 2.6);
        assert_eq!(total_loss(0.0, 0.0, 0.0, 0.0, &c).unwrap().total, 0.0);
        let no_contrast = LossCoefficients { gamma: 0.0, ..c };
        let with = total_loss(0.3, 0.4, 7.0, 0.2, &c).unwrap().total;
        let without = total_loss(0.3, 0.4, 7.0, 0.2, &no_contrast).unwrap().total;
        assert_eq!(without, 0.3 + 0.4 + 0.5 * 0.2);
        assert!((with - without - 0.7).abs() < 1e-12);
        assert!(matches!(
            total_loss(f64::NAN, 0.0, 0.0, 0.0, &c),
            Err(LossError::NonFinite { component: "lm", .. })
        ));
        assert!(matches!(
            total_loss(0.0, 0.0, f64::NAN, 0.0, &c),
            Err(LossError::NonFinite { component: "contrast", .. })
        ));
    }

    #[test]
    fn coefficient_parsing() {
        let c = LossCoefficients::parse("1,1,0.1,0.5").unwrap();
        assert_eq!(c, LossCoefficients::default());
        assert!(LossCoefficients::parse("1,1,0.1").is_err());
        assert!(LossCoefficients::parse("1,-1,0.1,0.5").is_err());
    }

    #[test]
    fn lm_gradient_matches_finite_differences() {
        let logits = random(4, 6, 21);
        let targets = [5, 0, 3, 3];
        let mask = [true, false, true, true];
        let (_, g) = lm_loss_grad(logits.view(), &targets, &mask).unwrap();
        let n = numeric_grad(&logits, |x| lm_loss(x.view(), &targets, &mask).unwrap());
        assert_close_rel(&g, &n, 1e-4);
    }

    #[test]
    fn node_gradient_matches_finite_differences() {
        let logits = random(2, 5, 22);
        let labels = array![[1.0, 0.0, 1.0, 1.0, 0.0], [0.0, 0.0, 1.0, 0.0, 1.0]];
        let mask = array![[true, true, true, false, true], [true, true, false, false, false]];
        let (_, g) = node_loss_grad(logits.view(), labels.view(), mask.view()).unwrap();
        let n = numeric_grad(&logits, |x| node_loss(x.view(), labels.view(), mask.view()).unwrap());
        assert_close_rel(&g, &n, 1e-4);
    }

    #[test]
    fn contrastive_gradient_matches_finite_differences() {
        // keep every pair away from the hinge kink
        let pos = vec![0.2, 1.9, -0.5, 3.0];
        let neg = vec![0.1, 0.3, 0.4, 1.0];
        let (_, gp, gn) = contrastive_loss_grad(&pos, &neg).unwrap();
        let h = 1e-6;
        for i in 0..pos.len() {
            let mut p = pos.clone();
            p[i] += h;
            let mut m = pos.clone();
            m[i] -= h;
            let np = (contrastive_loss(&p, &neg).unwrap() - contrastive_loss(&m, &neg).unwrap()) / (2.0 * h);
            assert!((np - gp[i]).abs() <= 1e-4 * np.abs().max(1e-8) || (np - gp[i]).abs() < 1e-9);
            let mut p = neg.clone();
            p[i] += h;
            let mut m = neg.clone();
            m[i] -= h;
            let nn = (contrastive_loss(&pos, &p).unwrap() - contrastive_loss(&pos, &m).unwrap()) / (2.0 * h);
            assert!((nn - gn[i]).abs() <= 1e-4 * nn.abs().max(1e-8) || (nn - gn[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn alignment_gradient_matches_finite_differences() {
        let a = random(3, 4, 31);
        let b = random(3, 4, 32);
        let (_, ga, gb) = alignment_loss_grad(a.view(), b.view()).unwrap();
        assert_close_rel(&ga, &numeric_grad(&a, |x| alignment_loss(x.view(), b.view()).unwrap()), 1e-4);
        assert_close_rel(&gb, &numeric_grad(&b, |x| alignment_loss(a.view(), x.view()).unwrap()), 1e-4);
    }

    proptest::proptest! {
        #[test]
        fn losses_non_negative(seed in 0u64..500) {
            let logits = random(3, 4, seed);
            proptest::prop_assert!(lm_loss(logits.view(), &[0, 1, 2], &[true; 3]).unwrap() >= 0.0);
            let labels = Array2::from_shape_fn((3, 4), |(i, j)| ((i + j + seed as usize) % 2) as f64);
            let mask = Array2::from_elem((3, 4), true);
            proptest::prop_assert!(node_loss(logits.view(), labels.view(), mask.view()).unwrap() >= 0.0);
            let col: Vec<f64> = logits.column(0).to_vec();
            let col2: Vec<f64> = logits.column(1).to_vec();
            proptest::prop_assert!(contrastive_loss(&col, &col2).unwrap() >= 0.0);
        }

        #[test]
        fn total_is_linear_in_each_component(
            base in proptest::array::uniform4(0.0f64..5.0),
            bump in 0.0f64..3.0,
        ) {
            let c = LossCoefficients::default();
            let t0 = total_loss(base[0], base[1], base[2], base[3], &c).unwrap().total;
            let slopes = [c.alpha, c.beta, c.gamma, c.delta];
            for k in 0..4 {
                let mut b = base;
                b[k] += bump;
                let t1 = total_loss(b[0], b[1], b[2], b[3], &c).unwrap().total;
                proptest::prop_assert!((t1 - t0 - slopes[k] * bump).abs() < 1e-9);
            }
        }
    }
}
