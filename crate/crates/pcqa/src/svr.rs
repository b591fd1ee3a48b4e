//! Epsilon-SVR with an RBF kernel, trained by sequential minimal
//! optimization, plus feature fusion, standardization, and model files.
//!
//! The dual is solved over the net coefficients `beta_i = alpha_i -
//! alpha*_i` in `[-C, C]` with the single constraint `sum(beta) = 0`:
//!
//! ```text
//! minimize 0.5 * beta' K beta + eps * sum |beta_i| - sum y_i beta_i
//! ```
//!
//! Each step picks the maximal-KKT-violation index, pairs it with the
//! admissible partner of maximal |E_i - E_j|, and solves the two-variable
//! subproblem exactly (the |beta| terms make it piecewise quadratic in the
//! step length). Convergence is declared when every estimate of the bias
//! interval overlaps within `tol`.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::StructuralFeatureVector;
use crate::metrics;
use crate::rating::LmmEvaluation;

/// Version tag of the serialized model file.
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SvrError {
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("non-finite regression target at sample {index}")]
    NonFiniteTarget { index: usize },
    #[error("invalid fused feature: {0}")]
    InvalidFeature(String),
    #[error("feature length {got} does not match expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("features ({x}) and targets ({y}) differ in length")]
    LengthMismatch { x: usize, y: usize },
    #[error("malformed model file: {0}")]
    MalformedModelFile(String),
    #[error("model file version {got} does not match supported version {expected}")]
    VersionMismatch { expected: u32, got: u32 },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// The fused 17-dimensional feature: five rating probabilities followed by
/// the twelve structural statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedFeature {
    values: Vec<f64>,
}

impl FusedFeature {
    pub const DIM: usize = 17;

    /// Validates length, finiteness, and that the leading five values form a
    /// probability vector (sum within 1e-6 of one).
    pub fn new(values: Vec<f64>) -> Result<Self, SvrError> {
        if values.len() != Self::DIM {
            return Err(SvrError::DimensionMismatch {
                expected: Self::DIM,
                got: values.len(),
            });
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(SvrError::InvalidFeature("non-finite entry".into()));
        }
        let prob_sum: f64 = values[..5].iter().sum();
        if (prob_sum - 1.0).abs() > 1e-6 {
            return Err(SvrError::InvalidFeature(format!(
                "leading probabilities sum to {prob_sum}, expected 1"
            )));
        }
        Ok(Self { values })
    }

    /// Concatenates the rating probabilities with the structural features.
    pub fn fuse(
        eval: &LmmEvaluation,
        structural: &StructuralFeatureVector,
    ) -> Result<Self, SvrError> {
        let mut values = Vec::with_capacity(Self::DIM);
        values.extend_from_slice(&eval.probs);
        values.extend_from_slice(structural.values());
        Self::new(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Per-dimension standardization fitted on training data only. Dimensions
/// with zero spread keep std 1 so they pass through unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Scaler {
    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

pub(crate) fn fit_scaler_raw(rows: &[Vec<f64>]) -> Result<Scaler, SvrError> {
    if rows.len() < 2 {
        return Err(SvrError::TooFewSamples {
            need: 2,
            got: rows.len(),
        });
    }
    let dim = rows[0].len();
    let n = rows.len() as f64;
    let mut mean = vec![0.0; dim];
    for row in rows {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut std = vec![0.0; dim];
    for row in rows {
        for (s, (v, m)) in std.iter_mut().zip(row.iter().zip(&mean)) {
            *s += (v - m) * (v - m);
        }
    }
    for s in &mut std {
        *s = (*s / n).sqrt();
        if *s == 0.0 {
            *s = 1.0;
        }
    }
    Ok(Scaler { mean, std })
}

/// Population mean/std standardizer over the training samples.
pub fn fit_standardizer(xs: &[FusedFeature]) -> Result<Scaler, SvrError> {
    let rows: Vec<Vec<f64>> = xs.iter().map(|x| x.values.clone()).collect();
    fit_scaler_raw(&rows)
}

/// SVR hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvrHyper {
    /// Penalty weight.
    #[serde(default = "default_c")]
    pub c: f64,
    /// Epsilon tube half-width.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// RBF width; `K(a, b) = exp(-gamma * ||a - b||^2)`.
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// KKT tolerance of the stopping criterion.
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Cap on SMO pair updates.
    #[serde(default = "default_max_passes")]
    pub max_passes: usize,
}

fn default_c() -> f64 {
    100.0
}

fn default_epsilon() -> f64 {
    0.1
}

fn default_gamma() -> f64 {
    1.0 / FusedFeature::DIM as f64
}

fn default_tol() -> f64 {
    1e-3
}

fn default_max_passes() -> usize {
    10_000
}

impl Default for SvrHyper {
    fn default() -> Self {
        Self {
            c: default_c(),
            epsilon: default_epsilon(),
            gamma: default_gamma(),
            tol: default_tol(),
            max_passes: default_max_passes(),
        }
    }
}

/// A trained model: standardizer, the support vectors in scaled space, their
/// net dual coefficients, and the bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrModel {
    pub version: u32,
    pub hyper: SvrHyper,
    pub scaler: Scaler,
    pub support_vectors: Vec<Vec<f64>>,
    pub dual_coeffs: Vec<f64>,
    pub bias: f64,
}

impl SvrModel {
    /// Prediction on a raw (unscaled) feature row.
    pub fn predict_raw(&self, x: &[f64]) -> f64 {
        let xs = self.scaler.transform(x);
        let mut acc = self.bias;
        for (sv, coeff) in self.support_vectors.iter().zip(&self.dual_coeffs) {
            acc += coeff * rbf(sv, &xs, self.hyper.gamma);
        }
        acc
    }

    pub fn predict(&self, x: &FusedFeature) -> f64 {
        self.predict_raw(x.values())
    }
}

/// Solver diagnostics, including the full dual coefficient vector (zeros
/// included) in training order.
#[derive(Debug, Clone)]
pub struct SmoReport {
    pub dual_coeffs: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Value of the minimized dual objective at the returned coefficients.
    pub dual_objective: f64,
}

#[inline]
fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let mut d2 = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        d2 += d * d;
    }
    (-gamma * d2).exp()
}

struct Smo<'a> {
    kernel: &'a [f64],
    n: usize,
    c: f64,
    eps: f64,
    tol: f64,
    beta: Vec<f64>,
    // Gradient of the smooth part: g_i = sum_j beta_j K_ij - y_i, i.e. the
    // prediction error before bias.
    grad: Vec<f64>,
}

impl<'a> Smo<'a> {
    fn new(kernel: &'a [f64], y: &[f64], hyper: &SvrHyper) -> Self {
        Smo {
            kernel,
            n: y.len(),
            c: hyper.c,
            eps: hyper.epsilon,
            tol: hyper.tol,
            beta: vec![0.0; y.len()],
            grad: y.iter().map(|v| -v).collect(),
        }
    }

    /// Lower bound on the bias contributed by sample i (valid when beta_i
    /// can still increase, beta_i < C).
    #[inline]
    fn up_value(&self, i: usize) -> f64 {
        if self.beta[i] < 0.0 {
            -self.grad[i] + self.eps
        } else {
            -self.grad[i] - self.eps
        }
    }

    /// Upper bound on the bias contributed by sample i (valid when beta_i
    /// can still decrease, beta_i > -C).
    #[inline]
    fn dn_value(&self, i: usize) -> f64 {
        if self.beta[i] > 0.0 {
            -self.grad[i] - self.eps
        } else {
            -self.grad[i] + self.eps
        }
    }

    /// Exact minimizer of the two-variable subproblem along
    /// `beta_i += t, beta_j -= t` for `t in [0, t_max]`. The objective is
    /// piecewise quadratic with breakpoints where either coefficient
    /// crosses zero; its derivative is nondecreasing, so the first segment
    /// whose derivative crosses zero holds the minimum.
    fn step_length(&self, i: usize, j: usize) -> f64 {
        let bi = self.beta[i];
        let bj = self.beta[j];
        let t_max = (self.c - bi).min(bj + self.c);
        let eta = (self.kernel[i * self.n + i] + self.kernel[j * self.n + j]
            - 2.0 * self.kernel[i * self.n + j])
            .max(1e-12);

        let mut breaks = Vec::with_capacity(2);
        if bi < 0.0 && -bi < t_max {
            breaks.push(-bi);
        }
        if bj > 0.0 && bj < t_max {
            breaks.push(bj);
        }
        breaks.sort_by(f64::total_cmp);
        breaks.push(t_max);

        let g_diff = self.grad[i] - self.grad[j];
        let mut seg_start = 0.0;
        for seg_end in breaks {
            if seg_end <= seg_start {
                continue;
            }
            let mid = 0.5 * (seg_start + seg_end);
            let s_i = if bi + mid > 0.0 { 1.0 } else { -1.0 };
            let s_j = if bj - mid > 0.0 { 1.0 } else { -1.0 };
            let base = g_diff + self.eps * (s_i - s_j);
            let d_start = base + seg_start * eta;
            let d_end = base + seg_end * eta;
            if d_start >= 0.0 {
                return seg_start;
            }
            if d_end <= 0.0 {
                seg_start = seg_end;
                continue;
            }
            return -base / eta;
        }
        t_max
    }

    fn solve(mut self, max_passes: usize) -> (Vec<f64>, f64, usize, bool) {
        let mut bias = 0.0;
        let mut converged = false;
        let mut iterations = 0;

        for iter in 0..max_passes {
            iterations = iter;
            let mut max_l = f64::NEG_INFINITY;
            let mut i_up = usize::MAX;
            let mut min_u = f64::INFINITY;
            let mut i_dn = usize::MAX;
            for i in 0..self.n {
                if self.beta[i] < self.c {
                    let l = self.up_value(i);
                    if l > max_l {
                        max_l = l;
                        i_up = i;
                    }
                }
                if self.beta[i] > -self.c {
                    let u = self.dn_value(i);
                    if u < min_u {
                        min_u = u;
                        i_dn = i;
                    }
                }
            }
            if i_up == usize::MAX || i_dn == usize::MAX || max_l - min_u <= self.tol {
                bias = 0.5 * (max_l + min_u);
                converged = true;
                break;
            }

            // Second index: the largest error gap |E_i - E_j| among partners
            // carrying at least half the maximal violation. The raw error
            // gap alone can point at a pair sitting exactly on the epsilon
            // kink (U_j == L_i up to round-off), which admits no step at
            // all; the violation floor keeps every candidate productive.
            let violation = max_l - min_u;
            let threshold = max_l - 0.5 * violation;
            let mut j = i_dn;
            let mut best_gap = f64::NEG_INFINITY;
            for cand in 0..self.n {
                if cand == i_up || self.beta[cand] <= -self.c {
                    continue;
                }
                if self.dn_value(cand) <= threshold {
                    let gap = (self.grad[i_up] - self.grad[cand]).abs();
                    if gap > best_gap {
                        best_gap = gap;
                        j = cand;
                    }
                }
            }

            let mut t = self.step_length(i_up, j);
            if t <= 0.0 && j != i_dn {
                // Numerically stuck partner; fall back to the maximal
                // violating pair, which always admits progress.
                j = i_dn;
                t = self.step_length(i_up, j);
            }
            if t <= 0.0 {
                bias = 0.5 * (max_l + min_u);
                break;
            }

            self.beta[i_up] += t;
            self.beta[j] -= t;
            // Snap coefficients sitting a few ulps off a box bound onto it,
            // otherwise they stay "eligible" with vanishing step room and
            // the same pair gets re-selected forever.
            let snap = 1e-10 * self.c.max(1.0);
            for idx in [i_up, j] {
                if (self.beta[idx] - self.c).abs() <= snap {
                    self.beta[idx] = self.c;
                } else if (self.beta[idx] + self.c).abs() <= snap {
                    self.beta[idx] = -self.c;
                }
            }
            let (row_i, row_j) = (i_up * self.n, j * self.n);
            for k in 0..self.n {
                self.grad[k] += t * (self.kernel[row_i + k] - self.kernel[row_j + k]);
            }
        }

        if !converged && iterations + 1 >= max_passes {
            // Ran out of sweeps; report the current bias interval midpoint.
            let mut max_l = f64::NEG_INFINITY;
            let mut min_u = f64::INFINITY;
            for i in 0..self.n {
                if self.beta[i] < self.c {
                    max_l = max_l.max(self.up_value(i));
                }
                if self.beta[i] > -self.c {
                    min_u = min_u.min(self.dn_value(i));
                }
            }
            bias = 0.5 * (max_l + min_u);
        }

        (self.beta, bias, iterations, converged)
    }
}

fn dual_objective(kernel: &[f64], y: &[f64], beta: &[f64], eps: f64) -> f64 {
    let n = y.len();
    let mut quad = 0.0;
    for i in 0..n {
        if beta[i] == 0.0 {
            continue;
        }
        let row = i * n;
        for j in 0..n {
            quad += beta[i] * beta[j] * kernel[row + j];
        }
    }
    let l1: f64 = beta.iter().map(|b| b.abs()).sum();
    let lin: f64 = beta.iter().zip(y).map(|(b, v)| b * v).sum();
    0.5 * quad + eps * l1 - lin
}

pub(crate) fn train_raw(
    rows: &[Vec<f64>],
    y: &[f64],
    hyper: &SvrHyper,
) -> Result<(SvrModel, SmoReport), SvrError> {
    if rows.len() != y.len() {
        return Err(SvrError::LengthMismatch {
            x: rows.len(),
            y: y.len(),
        });
    }
    if rows.len() < 2 {
        return Err(SvrError::TooFewSamples {
            need: 2,
            got: rows.len(),
        });
    }
    if let Some(index) = y.iter().position(|v| !v.is_finite()) {
        return Err(SvrError::NonFiniteTarget { index });
    }

    let scaler = fit_scaler_raw(rows)?;
    let scaled: Vec<Vec<f64>> = rows.iter().map(|r| scaler.transform(r)).collect();

    let n = scaled.len();
    let mut kernel = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let k = rbf(&scaled[i], &scaled[j], hyper.gamma);
            kernel[i * n + j] = k;
            kernel[j * n + i] = k;
        }
    }

    let (beta, bias, iterations, converged) = Smo::new(&kernel, y, hyper).solve(hyper.max_passes);
    let objective = dual_objective(&kernel, y, &beta, hyper.epsilon);

    let mut support_vectors = Vec::new();
    let mut dual_coeffs = Vec::new();
    for (i, &b) in beta.iter().enumerate() {
        if b != 0.0 {
            support_vectors.push(scaled[i].clone());
            dual_coeffs.push(b);
        }
    }

    Ok((
        SvrModel {
            version: MODEL_VERSION,
            hyper: *hyper,
            scaler,
            support_vectors,
            dual_coeffs,
            bias,
        },
        SmoReport {
            dual_coeffs: beta,
            bias,
            iterations,
            converged,
            dual_objective: objective,
        },
    ))
}

/// Trains the fusion regressor; features are standardized internally with
/// statistics from these samples only.
pub fn train_svr(
    xs: &[FusedFeature],
    y: &[f64],
    hyper: &SvrHyper,
) -> Result<SvrModel, SvrError> {
    train_svr_detailed(xs, y, hyper).map(|(model, _)| model)
}

/// [`train_svr`] plus solver diagnostics.
pub fn train_svr_detailed(
    xs: &[FusedFeature],
    y: &[f64],
    hyper: &SvrHyper,
) -> Result<(SvrModel, SmoReport), SvrError> {
    let rows: Vec<Vec<f64>> = xs.iter().map(|x| x.values.clone()).collect();
    train_raw(&rows, y, hyper)
}

/// Writes the model as versioned JSON.
pub fn save_model(model: &SvrModel, path: impl AsRef<Path>) -> Result<(), SvrError> {
    let json = serde_json::to_string_pretty(model)
        .map_err(|e| SvrError::MalformedModelFile(e.to_string()))?;
    std::fs::write(path, json)?;
    Ok(())
}

/// Reads a model file, enforcing the version tag.
pub fn load_model(path: impl AsRef<Path>) -> Result<SvrModel, SvrError> {
    let text = std::fs::read_to_string(path)?;
    #[derive(Deserialize)]
    struct VersionProbe {
        version: u32,
    }
    let probe: VersionProbe = serde_json::from_str(&text)
        .map_err(|e| SvrError::MalformedModelFile(e.to_string()))?;
    if probe.version != MODEL_VERSION {
        return Err(SvrError::VersionMismatch {
            expected: MODEL_VERSION,
            got: probe.version,
        });
    }
    serde_json::from_str(&text).map_err(|e| SvrError::MalformedModelFile(e.to_string()))
}

/// Leakage-free hyperparameter selection: grid search over C in 10^0..10^4
/// and gamma in 2^-6..2^2, scored by mean SRCC under an inner group-level
/// 3-fold split of the provided training samples.
pub fn grid_search(
    rows: &[Vec<f64>],
    y: &[f64],
    groups: &[String],
    base: &SvrHyper,
    seed: u64,
) -> Result<SvrHyper, SvrError> {
    if rows.len() != y.len() || rows.len() != groups.len() {
        return Err(SvrError::LengthMismatch {
            x: rows.len(),
            y: y.len(),
        });
    }
    // Distinct groups in first-appearance order, then a seeded shuffle.
    let mut distinct: Vec<String> = Vec::new();
    for g in groups {
        if !distinct.contains(g) {
            distinct.push(g.clone());
        }
    }
    if distinct.len() < 2 {
        return Ok(*base);
    }
    let inner_k = distinct.len().min(3);
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
    distinct.shuffle(&mut rng);

    let mut fold_of_group: BTreeMap<&str, usize> = BTreeMap::new();
    let per = distinct.len() / inner_k;
    let rem = distinct.len() % inner_k;
    let mut cursor = 0;
    for fold in 0..inner_k {
        let size = per + usize::from(fold < rem);
        for g in &distinct[cursor..cursor + size] {
            fold_of_group.insert(g, fold);
        }
        cursor += size;
    }

    let c_grid = [1.0, 10.0, 100.0, 1_000.0, 10_000.0];
    let gamma_grid: Vec<f64> = (-6..=2).map(|e| 2.0f64.powi(e)).collect();

    let mut best = (*base, f64::NEG_INFINITY, f64::INFINITY);
    for &c in &c_grid {
        for &gamma in &gamma_grid {
            let hyper = SvrHyper { c, gamma, ..*base };
            let mut srccs = Vec::new();
            let mut rmses = Vec::new();
            for fold in 0..inner_k {
                let mut train_rows = Vec::new();
                let mut train_y = Vec::new();
                let mut val_rows = Vec::new();
                let mut val_y = Vec::new();
                for i in 0..rows.len() {
                    if fold_of_group[groups[i].as_str()] == fold {
                        val_rows.push(rows[i].clone());
                        val_y.push(y[i]);
                    } else {
                        train_rows.push(rows[i].clone());
                        train_y.push(y[i]);
                    }
                }
                if train_rows.len() < 2 || val_rows.len() < 2 {
                    continue;
                }
                let (model, _) = train_raw(&train_rows, &train_y, &hyper)?;
                let preds: Vec<f64> = val_rows.iter().map(|r| model.predict_raw(r)).collect();
                let srcc = metrics::srcc(&preds, &val_y).unwrap_or(-1.0);
                let rmse = metrics::rmse(&preds, &val_y).unwrap_or(f64::INFINITY);
                srccs.push(srcc);
                rmses.push(rmse);
            }
            if srccs.is_empty() {
                continue;
            }
            let mean_srcc = srccs.iter().sum::<f64>() / srccs.len() as f64;
            let mean_rmse = rmses.iter().sum::<f64>() / rmses.len() as f64;
            if mean_srcc > best.1 + 1e-12
                || ((mean_srcc - best.1).abs() <= 1e-12 && mean_rmse < best.2)
            {
                best = (SvrHyper { c, gamma, ..*base }, mean_srcc, mean_rmse);
            }
        }
    }
    Ok(best.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn feature_with(values17: Vec<f64>) -> FusedFeature {
        FusedFeature::new(values17).unwrap()
    }

    fn uniform_probs_plus(rest: [f64; 12]) -> FusedFeature {
        let mut v = vec![0.2; 5];
        v.extend_from_slice(&rest);
        feature_with(v)
    }

    fn random_features(n: usize, seed: u64) -> (Vec<FusedFeature>, Vec<f64>) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<FusedFeature> = (0..n)
            .map(|_| {
                let logits: [f64; 5] = std::array::from_fn(|_| rng.gen_range(-2.0..2.0));
                let eval = crate::rating::logits_to_probabilities(logits).unwrap();
                let mut v = eval.probs.to_vec();
                for _ in 0..12 {
                    v.push(rng.gen_range(-1.0..1.0));
                }
                feature_with(v)
            })
            .collect();
        let y: Vec<f64> = xs
            .iter()
            .map(|x| {
                let v = x.values();
                30.0 + 40.0 * v[5] + 10.0 * v[6] * v[7] + 25.0 * v[1] + rng.gen_range(-0.5..0.5)
            })
            .collect();
        (xs, y)
    }

    #[test]
    fn fused_feature_validation() {
        assert!(matches!(
            FusedFeature::new(vec![0.0; 16]),
            Err(SvrError::DimensionMismatch { .. })
        ));
        let mut bad = vec![0.5; 5];
        bad.extend(vec![0.0; 12]);
        assert!(matches!(
            FusedFeature::new(bad),
            Err(SvrError::InvalidFeature(_))
        ));
        uniform_probs_plus([0.0; 12]);
    }

    #[test]
    fn standardizer_two_point_stats() {
        let a = uniform_probs_plus([0.0; 12]);
        let b = uniform_probs_plus([1.0; 12]);
        let scaler = fit_standardizer(&[a, b]).unwrap();
        for d in 5..17 {
            assert!((scaler.mean[d] - 0.5).abs() < 1e-15);
            assert!((scaler.std[d] - 0.5).abs() < 1e-15);
        }
        // The probability dimensions are constant, so std falls back to 1.
        for d in 0..5 {
            assert_eq!(scaler.std[d], 1.0);
        }
    }

    #[test]
    fn standardized_output_has_unit_stats() {
        let (xs, _) = random_features(50, 17);
        let scaler = fit_standardizer(&xs).unwrap();
        let scaled: Vec<Vec<f64>> = xs.iter().map(|x| scaler.transform(x.values())).collect();
        for d in 5..17 {
            let n = scaled.len() as f64;
            let mean = scaled.iter().map(|r| r[d]).sum::<f64>() / n;
            let var = scaled.iter().map(|r| (r[d] - mean) * (r[d] - mean)).sum::<f64>() / n;
            assert!(mean.abs() < 1e-9, "dim {d} mean {mean}");
            assert!((var.sqrt() - 1.0).abs() < 1e-9, "dim {d} std {}", var.sqrt());
        }
    }

    #[test]
    fn too_few_samples_is_rejected() {
        let x = uniform_probs_plus([0.0; 12]);
        assert!(matches!(
            fit_standardizer(std::slice::from_ref(&x)),
            Err(SvrError::TooFewSamples { .. })
        ));
        assert!(matches!(
            train_svr(&[x], &[1.0], &SvrHyper::default()),
            Err(SvrError::TooFewSamples { .. })
        ));
    }

    #[test]
    fn non_finite_target_is_rejected() {
        let (xs, _) = random_features(4, 3);
        let y = vec![1.0, f64::NAN, 2.0, 3.0];
        assert!(matches!(
            train_svr(&xs, &y, &SvrHyper::default()),
            Err(SvrError::NonFiniteTarget { index: 1 })
        ));
    }

    #[test]
    fn constant_target_yields_flat_model() {
        let (xs, _) = random_features(12, 5);
        let y = vec![42.5; 12];
        let (model, report) = train_svr_detailed(&xs, &y, &SvrHyper::default()).unwrap();
        assert!(report.dual_coeffs.iter().all(|&b| b == 0.0));
        assert!(model.support_vectors.is_empty());
        assert_eq!(model.bias, 42.5);
        let (probe, _) = random_features(5, 6);
        for x in &probe {
            assert_eq!(model.predict(x), 42.5);
        }
    }

    #[test]
    fn symmetric_pair_predicts_zero_at_midpoint() {
        let a = uniform_probs_plus([1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let b = uniform_probs_plus([-1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let hyper = SvrHyper {
            c: 1e6,
            ..SvrHyper::default()
        };
        let model = train_svr(&[a, b], &[1.0, -1.0], &hyper).unwrap();
        let mid = uniform_probs_plus([0.0; 12]);
        assert!(model.predict(&mid).abs() < 1e-9);
    }

    #[test]
    fn duals_are_feasible_and_residuals_bounded() {
        let (xs, y) = random_features(40, 11);
        let hyper = SvrHyper::default();
        let (model, report) = train_svr_detailed(&xs, &y, &hyper).unwrap();
        assert!(report.converged);
        let sum: f64 = report.dual_coeffs.iter().sum();
        assert!(sum.abs() <= hyper.tol * xs.len() as f64);
        for &b in &report.dual_coeffs {
            assert!(b.abs() <= hyper.c + 1e-12);
        }
        // Samples strictly inside the box must sit within the tube + tol.
        for (i, x) in xs.iter().enumerate() {
            let b = report.dual_coeffs[i];
            if b.abs() < hyper.c {
                let resid = (y[i] - model.predict(x)).abs();
                assert!(
                    resid <= hyper.epsilon + hyper.tol + 1e-9,
                    "sample {i}: resid {resid}"
                );
            }
        }
    }

    #[test]
    fn model_file_round_trip_is_bit_exact() {
        let (xs, y) = random_features(25, 23);
        let model = train_svr(&xs, &y, &SvrHyper::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_model(&model, &path).unwrap();
        let loaded = load_model(&path).unwrap();
        let (probe, _) = random_features(100, 29);
        for x in &probe {
            assert_eq!(model.predict(x).to_bits(), loaded.predict(x).to_bits());
        }
    }

    #[test]
    fn version_mismatch_and_malformed_files() {
        let (xs, y) = random_features(6, 31);
        let model = train_svr(&xs, &y, &SvrHyper::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();

        let path = dir.path().join("wrong_version.json");
        let mut json = serde_json::to_value(&model).unwrap();
        json["version"] = serde_json::json!(99);
        std::fs::write(&path, serde_json::to_string(&json).unwrap()).unwrap();
        assert!(matches!(
            load_model(&path),
            Err(SvrError::VersionMismatch { expected: 1, got: 99 })
        ));

        let truncated = dir.path().join("truncated.json");
        let full = serde_json::to_string(&model).unwrap();
        std::fs::write(&truncated, &full[..full.len() / 2]).unwrap();
        assert!(matches!(
            load_model(&truncated),
            Err(SvrError::MalformedModelFile(_))
        ));
    }

    #[test]
    fn prediction_is_locally_smooth() {
        let (xs, y) = random_features(30, 37);
        let model = train_svr(&xs, &y, &SvrHyper::default()).unwrap();
        let base = xs[0].values().to_vec();
        let p0 = model.predict_raw(&base);
        let mut nudged = base.clone();
        nudged[8] += 1e-6;
        let p1 = model.predict_raw(&nudged);
        assert!((p0 - p1).abs() < 1.0, "tiny input nudge moved output by {}", (p0 - p1).abs());
    }

    #[test]
    fn grid_search_returns_grid_member_and_respects_groups() {
        let (xs, y) = random_features(36, 41);
        let rows: Vec<Vec<f64>> = xs.iter().map(|x| x.values().to_vec()).collect();
        let groups: Vec<String> = (0..36).map(|i| format!("g{}", i % 6)).collect();
        let base = SvrHyper::default();
        let tuned = grid_search(&rows, &y, &groups, &base, 7).unwrap();
        assert!([1.0, 10.0, 100.0, 1_000.0, 10_000.0].contains(&tuned.c));
        let exps: Vec<f64> = (-6..=2).map(|e| 2.0f64.powi(e)).collect();
        assert!(exps.iter().any(|g| (g - tuned.gamma).abs() < 1e-12));
    }
}

