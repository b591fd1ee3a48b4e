//! Prediction-vs-MOS agreement metrics: Spearman, Pearson, and Kendall
//! correlations (tie-aware) plus RMSE, with an optional four-parameter
//! logistic mapping fitted by Nelder-Mead.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("input lengths differ: {a} vs {b}")]
    LengthMismatch { a: usize, b: usize },
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("correlation undefined: an argument has zero variance")]
    ZeroVariance,
    #[error("input contains a non-finite value")]
    NonFinite,
    #[error("logistic fit diverged to non-finite parameters")]
    FitDiverged,
}

/// One evaluation summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub srcc: f64,
    pub plcc: f64,
    pub krcc: f64,
    pub rmse: f64,
    pub n: usize,
    pub logistic_applied: bool,
}

fn validate(pred: &[f64], mos: &[f64], min_len: usize) -> Result<(), MetricError> {
    if pred.len() != mos.len() {
        return Err(MetricError::LengthMismatch {
            a: pred.len(),
            b: mos.len(),
        });
    }
    if pred.len() < min_len {
        return Err(MetricError::TooFewSamples {
            need: min_len,
            got: pred.len(),
        });
    }
    if !pred.iter().chain(mos).all(|v| v.is_finite()) {
        return Err(MetricError::NonFinite);
    }
    Ok(())
}

/// Fractional (average) ranks, 1-based; ties share the mean of their
/// positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> Result<f64, MetricError> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        let dx = x - ma;
        let dy = y - mb;
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(MetricError::ZeroVariance);
    }
    Ok(sab / (saa * sbb).sqrt())
}

/// Spearman rank correlation: Pearson correlation of average ranks.
pub fn srcc(pred: &[f64], mos: &[f64]) -> Result<f64, MetricError> {
    validate(pred, mos, 2)?;
    pearson(&average_ranks(pred), &average_ranks(mos))
}

/// Pearson linear correlation.
pub fn plcc(pred: &[f64], mos: &[f64]) -> Result<f64, MetricError> {
    validate(pred, mos, 2)?;
    pearson(pred, mos)
}

fn tied_pair_count(sorted: &[f64]) -> u64 {
    let mut total = 0u64;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as u64;
        total += t * (t - 1) / 2;
        i = j + 1;
    }
    total
}

fn merge_count_inversions(values: &mut [f64], scratch: &mut [f64]) -> u64 {
    let n = values.len();
    if n <= 1 {
        return 0;
    }
    let mid = n / 2;
    let mut inv = {
        let (left, right) = values.split_at_mut(mid);
        merge_count_inversions(left, &mut scratch[..mid])
            + merge_count_inversions(right, &mut scratch[mid..])
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if values[j] < values[i] {
            scratch[k] = values[j];
            j += 1;
            inv += (mid - i) as u64;
        } else {
            scratch[k] = values[i];
            i += 1;
        }
        k += 1;
    }
    while i < mid {
        scratch[k] = values[i];
        i += 1;
        k += 1;
    }
    while j < n {
        scratch[k] = values[j];
        j += 1;
        k += 1;
    }
    values.copy_from_slice(&scratch[..n]);
    inv
}

/// Kendall tau-b, tie-corrected, via sort plus merge-sort inversion
/// counting.
pub fn krcc(pred: &[f64], mos: &[f64]) -> Result<f64, MetricError> {
    validate(pred, mos, 2)?;
    let n = pred.len();
    // Flush -0.0 to +0.0: total_cmp orders the two zeros apart while the
    // tie-run detection uses numeric equality, and a pred-tie run holding
    // both zeros would not be mos-ascending internally, miscounting its
    // pairs as discordant.
    let pred: Vec<f64> = pred.iter().map(|v| v + 0.0).collect();
    let mos: Vec<f64> = mos.iter().map(|v| v + 0.0).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| pred[a].total_cmp(&pred[b]).then(mos[a].total_cmp(&mos[b])));
    let x_sorted: Vec<f64> = order.iter().map(|&i| pred[i]).collect();
    let mut y_in_x_order: Vec<f64> = order.iter().map(|&i| mos[i]).collect();

    let n0 = (n as u64) * (n as u64 - 1) / 2;
    let n1 = tied_pair_count(&x_sorted);
    // Joint ties: runs where both coordinates repeat.
    let mut n3 = 0u64;
    {
        let mut i = 0;
        while i < n {
            let mut j = i;
            while j + 1 < n
                && x_sorted[j + 1] == x_sorted[i]
                && y_in_x_order[j + 1] == y_in_x_order[i]
            {
                j += 1;
            }
            let t = (j - i + 1) as u64;
            n3 += t * (t - 1) / 2;
            i = j + 1;
        }
    }
    let mut y_sorted = mos.to_vec();
    y_sorted.sort_by(f64::total_cmp);
    let n2 = tied_pair_count(&y_sorted);

    if n0 == n1 || n0 == n2 {
        return Err(MetricError::ZeroVariance);
    }

    let mut scratch = vec![0.0; n];
    let swaps = merge_count_inversions(&mut y_in_x_order, &mut scratch);

    let con_minus_dis = n0 as f64 - n1 as f64 - n2 as f64 + n3 as f64 - 2.0 * swaps as f64;
    let denom = ((n0 - n1) as f64 * (n0 - n2) as f64).sqrt();
    Ok((con_minus_dis / denom).clamp(-1.0, 1.0))
}

/// Root mean squared error.
pub fn rmse(pred: &[f64], mos: &[f64]) -> Result<f64, MetricError> {
    validate(pred, mos, 1)?;
    let n = pred.len() as f64;
    let sq = pred
        .iter()
        .zip(mos)
        .map(|(p, m)| (p - m) * (p - m))
        .sum::<f64>();
    Ok((sq / n).sqrt())
}

fn logistic_map(params: &[f64; 5], x: f64) -> f64 {
    let (b1, b2, b3, b4, b5) = (params[0], params[1], params[2], params[3], params[4]);
    b1 * (0.5 - 1.0 / (1.0 + (b2 * (x - b3)).exp())) + b4 * x + b5
}

#[allow(clippy::needless_range_loop)]
fn nelder_mead<F: Fn(&[f64; 5]) -> f64>(f: F, x0: [f64; 5], max_iters: usize) -> [f64; 5] {
    const ALPHA: f64 = 1.0;
    const GAMMA: f64 = 2.0;
    const RHO: f64 = 0.5;
    const SIGMA: f64 = 0.5;

    let eval = |p: &[f64; 5]| -> f64 {
        let v = f(p);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };

    let mut simplex: Vec<([f64; 5], f64)> = Vec::with_capacity(6);
    simplex.push((x0, eval(&x0)));
    for d in 0..5 {
        let mut p = x0;
        p[d] += if x0[d] != 0.0 { 0.05 * x0[d] } else { 0.00025 };
        simplex.push((p, eval(&p)));
    }

    for _ in 0..max_iters {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0];
        let worst = simplex[5];
        let second_worst = simplex[4];

        let mut centroid = [0.0; 5];
        for (p, _) in &simplex[..5] {
            for d in 0..5 {
                centroid[d] += p[d] / 5.0;
            }
        }

        let mut reflected = [0.0; 5];
        for d in 0..5 {
            reflected[d] = centroid[d] + ALPHA * (centroid[d] - worst.0[d]);
        }
        let fr = eval(&reflected);

        if fr < best.1 {
            let mut expanded = [0.0; 5];
            for d in 0..5 {
                expanded[d] = centroid[d] + GAMMA * (reflected[d] - centroid[d]);
            }
            let fe = eval(&expanded);
            simplex[5] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
        } else if fr < second_worst.1 {
            simplex[5] = (reflected, fr);
        } else {
            let mut contracted = [0.0; 5];
            for d in 0..5 {
                contracted[d] = centroid[d] + RHO * (worst.0[d] - centroid[d]);
            }
            let fc = eval(&contracted);
            if fc < worst.1 {
                simplex[5] = (contracted, fc);
            } else {
                for i in 1..6 {
                    let mut p = [0.0; 5];
                    for d in 0..5 {
                        p[d] = best.0[d] + SIGMA * (simplex[i].0[d] - best.0[d]);
                    }
                    simplex[i] = (p, eval(&p));
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex[0].0
}

/// Fits the five-parameter logistic mapping by derivative-free simplex
/// minimization of the squared error and returns the mapped predictions.
pub fn logistic_fit(pred: &[f64], mos: &[f64]) -> Result<Vec<f64>, MetricError> {
    validate(pred, mos, 5)?;
    let n = pred.len() as f64;
    let mos_min = mos.iter().cloned().fold(f64::INFINITY, f64::min);
    let mos_max = mos.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let pred_mean = pred.iter().sum::<f64>() / n;
    let mos_mean = mos.iter().sum::<f64>() / n;
    let x0 = [mos_max - mos_min, 1.0, pred_mean, 1.0, mos_mean];

    let sse = |params: &[f64; 5]| -> f64 {
        pred.iter()
            .zip(mos)
            .map(|(p, m)| {
                let d = logistic_map(params, *p) - m;
                d * d
            })
            .sum()
    };
    let params = nelder_mead(sse, x0, 2000);
    if !params.iter().all(|v| v.is_finite()) {
        return Err(MetricError::FitDiverged);
    }
    let mapped: Vec<f64> = pred.iter().map(|p| logistic_map(&params, *p)).collect();
    if !mapped.iter().all(|v| v.is_finite()) {
        return Err(MetricError::FitDiverged);
    }
    Ok(mapped)
}

/// All four metrics at once. With `logistic` set, predictions first pass
/// through [`logistic_fit`] and every metric is computed on the mapped
/// values; the flag is recorded in the report.
pub fn compute_report(pred: &[f64], mos: &[f64], logistic: bool) -> Result<MetricReport, MetricError> {
    validate(pred, mos, 2)?;
    let mapped;
    let effective: &[f64] = if logistic {
        mapped = logistic_fit(pred, mos)?;
        &mapped
    } else {
        pred
    };
    Ok(MetricReport {
        srcc: srcc(effective, mos)?,
        plcc: plcc(effective, mos)?,
        krcc: krcc(effective, mos)?,
        rmse: rmse(effective, mos)?,
        n: pred.len(),
        logistic_applied: logistic,
    })
}
