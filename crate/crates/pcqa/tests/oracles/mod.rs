//! Independent reference implementations used to cross-check the library.
//!
//! Everything here deliberately avoids the production code paths: k-NN is a
//! full scan, eigenvalues come from bisection on the characteristic cubic,
//! the SVR dual is solved by projected-gradient descent with an active-set
//! polish, and the rank statistics are counted pairwise.

#![allow(dead_code)]
#![allow(clippy::needless_range_loop)]

/// Brute-force k nearest neighbors of `center` (self always included, then
/// by squared distance with index tie-break), matching the documented
/// neighborhood convention.
pub fn brute_knn(points: &[[f64; 3]], center: usize, k: usize) -> Vec<usize> {
    let q = points[center];
    let mut all: Vec<(u64, usize)> = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let dx = q[0] - p[0];
            let dy = q[1] - p[1];
            let dz = q[2] - p[2];
            let d2 = dx * dx + dy * dy + dz * dz;
            (d2.to_bits(), i)
        })
        .collect();
    all.sort_unstable();
    let mut members: Vec<(u64, usize)> = all[..k].to_vec();
    if !members.iter().any(|&(_, i)| i == center) {
        members.pop();
        members.push((0u64, center));
        members.sort_unstable();
    }
    members.into_iter().map(|(_, i)| i).collect()
}

/// Eigenvalues (descending) of a symmetric 3x3 matrix found as roots of the
/// characteristic cubic by bisection between the critical points.
pub fn charpoly_eigenvalues(a: &[[f64; 3]; 3]) -> [f64; 3] {
    let tr = a[0][0] + a[1][1] + a[2][2];
    // Sum of principal 2x2 minors.
    let m2 = a[0][0] * a[1][1] - a[0][1] * a[0][1]
        + a[0][0] * a[2][2]
        - a[0][2] * a[0][2]
        + a[1][1] * a[2][2]
        - a[1][2] * a[1][2];
    let det = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[1][2])
        - a[0][1] * (a[0][1] * a[2][2] - a[1][2] * a[0][2])
        + a[0][2] * (a[0][1] * a[1][2] - a[1][1] * a[0][2]);

    let q = |x: f64| ((x - tr) * x + m2) * x - det;

    // Gershgorin bounds.
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..3 {
        let radius: f64 = (0..3).filter(|&j| j != i).map(|j| a[i][j].abs()).sum();
        lo = lo.min(a[i][i] - radius);
        hi = hi.max(a[i][i] + radius);
    }
    lo -= 1.0;
    hi += 1.0;

    let bisect = |mut a: f64, mut b: f64| -> f64 {
        let fa = q(a);
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                break;
            }
            if (q(mid) <= 0.0) == (fa <= 0.0) {
                a = mid;
            } else {
                b = mid;
            }
        }
        0.5 * (a + b)
    };

    let disc = tr * tr - 3.0 * m2;
    if disc <= 0.0 {
        let r = tr / 3.0;
        return [r, r, r];
    }
    let s = disc.sqrt();
    let t1 = (tr - s) / 3.0;
    let t2 = (tr + s) / 3.0;
    // Three real roots: one in each of [lo, t1], [t1, t2], [t2, hi]. With a
    // (near-)double root the cubic barely grazes zero at a critical point;
    // the critical point itself is then the best estimate.
    let q1 = q(t1);
    let q2 = q(t2);
    let r_low = if q1 >= 0.0 { bisect(lo, t1) } else { t1 };
    let r_high = if q2 <= 0.0 { bisect(t2, hi) } else { t2 };
    let r_mid = if q1 >= 0.0 && q2 <= 0.0 {
        bisect(t1, t2)
    } else {
        tr - r_low - r_high
    };
    [r_high, r_mid, r_low]
}

/// Straight-line reference for the structural feature vector: brute-force
/// k-NN plus characteristic-polynomial eigenvalues plus naive statistics.
pub fn naive_structural_features(points: &[[f64; 3]], scales: &[usize]) -> Vec<f64> {
    let n = points.len();
    let mut scales = scales.to_vec();
    scales.sort_unstable();
    scales.dedup();
    let mut out = Vec::new();
    for &k in &scales {
        let mut lin = Vec::with_capacity(n);
        let mut pla = Vec::with_capacity(n);
        for center in 0..n {
            let members = brute_knn(points, center, k);
            let kf = members.len() as f64;
            let mut c = [0.0f64; 3];
            for &j in &members {
                for d in 0..3 {
                    c[d] += points[j][d];
                }
            }
            for v in &mut c {
                *v /= kf;
            }
            let mut cov = [[0.0f64; 3]; 3];
            for &j in &members {
                let d = [points[j][0] - c[0], points[j][1] - c[1], points[j][2] - c[2]];
                for r in 0..3 {
                    for s in 0..3 {
                        cov[r][s] += d[r] * d[s];
                    }
                }
            }
            for row in &mut cov {
                for v in row.iter_mut() {
                    *v /= kf;
                }
            }
            let eig = charpoly_eigenvalues(&cov).map(|l| l.max(0.0));
            if eig[0] == 0.0 {
                lin.push(0.0);
                pla.push(0.0);
            } else {
                lin.push((eig[0] - eig[1]) / eig[0]);
                pla.push((eig[1] - eig[2]) / eig[0]);
            }
        }
        for field in [&lin, &pla] {
            let (avg, std, ent) = naive_statistics(field);
            out.push(avg);
            out.push(std);
            out.push(ent);
        }
    }
    out
}

pub fn naive_statistics(field: &[f64]) -> (f64, f64, f64) {
    let clamped: Vec<f64> = field.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    let n = clamped.len() as f64;
    let mean = clamped.iter().sum::<f64>() / n;
    let var = clamped.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let mut counts = vec![0usize; 256];
    for &v in &clamped {
        counts[((v * 256.0) as usize).min(255)] += 1;
    }
    let ent: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum();
    (mean, var.sqrt(), ent)
}

/// Random rotation from a normalized quaternion.
pub fn random_rotation(rng: &mut impl rand::Rng) -> [[f64; 3]; 3] {
    loop {
        let q: [f64; 4] = [
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        ];
        let norm2: f64 = q.iter().map(|v| v * v).sum();
        if !(1e-3..=1.0).contains(&norm2) {
            continue;
        }
        let n = norm2.sqrt();
        let (w, x, y, z) = (q[0] / n, q[1] / n, q[2] / n, q[3] / n);
        return [
            [
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y - w * z),
                2.0 * (x * z + w * y),
            ],
            [
                2.0 * (x * y + w * z),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z - w * x),
            ],
            [
                2.0 * (x * z - w * y),
                2.0 * (y * z + w * x),
                1.0 - 2.0 * (x * x + y * y),
            ],
        ];
    }
}

pub fn apply_rigid(points: &[[f64; 3]], rot: &[[f64; 3]; 3], t: &[f64; 3]) -> Vec<[f64; 3]> {
    points
        .iter()
        .map(|p| {
            [
                rot[0][0] * p[0] + rot[0][1] * p[1] + rot[0][2] * p[2] + t[0],
                rot[1][0] * p[0] + rot[1][1] * p[1] + rot[1][2] * p[2] + t[1],
                rot[2][0] * p[0] + rot[2][1] * p[1] + rot[2][2] * p[2] + t[2],
            ]
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Dense reference solver for the epsilon-SVR dual.
// ---------------------------------------------------------------------------

pub struct QpSolution {
    pub beta: Vec<f64>,
    pub bias: f64,
    pub objective: f64,
}

fn rbf_kernel_matrix(rows: &[Vec<f64>], gamma: f64) -> Vec<Vec<f64>> {
    let n = rows.len();
    let mut k = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let d2: f64 = rows[i]
                .iter()
                .zip(&rows[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            let v = (-gamma * d2).exp();
            k[i][j] = v;
            k[j][i] = v;
        }
    }
    k
}

/// Minimized dual objective 0.5 b'Kb + eps*|b|_1 - y'b.
pub fn dual_objective(kmat: &[Vec<f64>], y: &[f64], beta: &[f64], eps: f64) -> f64 {
    let n = y.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += beta[i] * beta[j] * kmat[i][j];
        }
    }
    let l1: f64 = beta.iter().map(|b| b.abs()).sum();
    let lin: f64 = beta.iter().zip(y).map(|(b, v)| b * v).sum();
    0.5 * quad + eps * l1 - lin
}

/// Projection of (za, zs) onto {0 <= u <= C} intersected with
/// sum(alpha) - sum(alpha*) = 0, via bisection on the multiplier.
fn project(za: &[f64], zs: &[f64], c: f64) -> (Vec<f64>, Vec<f64>) {
    let constraint = |mu: f64| -> f64 {
        let pos: f64 = za.iter().map(|z| (z - mu).clamp(0.0, c)).sum();
        let neg: f64 = zs.iter().map(|z| (z + mu).clamp(0.0, c)).sum();
        pos - neg
    };
    let bound = za
        .iter()
        .chain(zs.iter())
        .fold(0.0f64, |m, z| m.max(z.abs()))
        + c
        + 1.0;
    let (mut lo, mut hi) = (-bound, bound);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if constraint(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mu = 0.5 * (lo + hi);
    (
        za.iter().map(|z| (z - mu).clamp(0.0, c)).collect(),
        zs.iter().map(|z| (z + mu).clamp(0.0, c)).collect(),
    )
}

/// Dense Gaussian elimination with partial pivoting.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}

/// Reference epsilon-SVR dual solver: accelerated projected gradient on the
/// 2n box formulation, then an exact equality-constrained solve on the
/// detected active set, iterated until the KKT system is consistent.
pub fn qp_reference(rows: &[Vec<f64>], y: &[f64], c: f64, eps: f64, gamma: f64) -> QpSolution {
    let n = y.len();
    let kmat = rbf_kernel_matrix(rows, gamma);

    // Lipschitz bound: twice the max row sum of K bounds 2*lambda_max.
    let lip = 2.0
        * kmat
            .iter()
            .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0f64, f64::max)
        + 1e-9;
    let step = 1.0 / lip;

    let mut alpha = vec![0.0; n];
    let mut alpha_star = vec![0.0; n];
    let mut ya = alpha.clone();
    let mut ys = alpha_star.clone();
    let mut t_acc = 1.0f64;
    let mut best_obj = f64::INFINITY;
    let mut best = (alpha.clone(), alpha_star.clone());
    let mut stall = 0usize;

    for iter in 0..300_000 {
        // Gradient at the extrapolated point.
        let beta: Vec<f64> = ya.iter().zip(&ys).map(|(a, s)| a - s).collect();
        let mut v = vec![0.0; n];
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                acc += kmat[i][j] * beta[j];
            }
            v[i] = acc - y[i];
        }
        let za: Vec<f64> = ya.iter().zip(&v).map(|(a, vi)| a - step * (vi + eps)).collect();
        let zs: Vec<f64> = ys
            .iter()
            .zip(&v)
            .map(|(s, vi)| s - step * (-vi + eps))
            .collect();
        let (next_a, next_s) = project(&za, &zs, c);

        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t_acc * t_acc).sqrt());
        let momentum = (t_acc - 1.0) / t_next;
        for i in 0..n {
            ya[i] = next_a[i] + momentum * (next_a[i] - alpha[i]);
            ys[i] = next_s[i] + momentum * (next_s[i] - alpha_star[i]);
        }
        alpha = next_a;
        alpha_star = next_s;
        t_acc = t_next;

        if iter % 100 == 99 {
            let beta: Vec<f64> = alpha.iter().zip(&alpha_star).map(|(a, s)| a - s).collect();
            let obj = dual_objective(&kmat, y, &beta, eps);
            if obj < best_obj - 1e-13 {
                best_obj = obj;
                best = (alpha.clone(), alpha_star.clone());
                stall = 0;
            } else {
                stall += 1;
                if stall > 30 {
                    break;
                }
            }
        }
    }

    let (alpha, alpha_star) = best;
    let mut beta: Vec<f64> = alpha.iter().zip(&alpha_star).map(|(a, s)| a - s).collect();

    // Active-set polish: fix coefficients at bounds / zero, solve the
    // equality-constrained KKT system exactly for the free ones.
    let tol_band = 1e-5 * c.max(1.0);
    let mut fixed: Vec<Option<f64>> = beta
        .iter()
        .map(|&b| {
            if (b - c).abs() < tol_band {
                Some(c)
            } else if (b + c).abs() < tol_band {
                Some(-c)
            } else if b.abs() < tol_band {
                Some(0.0)
            } else {
                None
            }
        })
        .collect();

    let mut bias = None;
    for _round in 0..12 {
        let free: Vec<usize> = fixed
            .iter()
            .enumerate()
            .filter_map(|(i, f)| f.is_none().then_some(i))
            .collect();
        if free.is_empty() {
            break;
        }
        let m = free.len();
        let mut mat = vec![vec![0.0; m + 1]; m + 1];
        let mut rhs = vec![0.0; m + 1];
        let mut fixed_sum = 0.0;
        for i in 0..n {
            if let Some(v) = fixed[i] {
                fixed_sum += v;
            }
        }
        for (r, &i) in free.iter().enumerate() {
            for (s, &j) in free.iter().enumerate() {
                mat[r][s] = kmat[i][j];
            }
            mat[r][m] = 1.0;
            mat[m][r] = 1.0;
            let mut fixed_contrib = 0.0;
            for j in 0..n {
                if let Some(v) = fixed[j] {
                    fixed_contrib += kmat[i][j] * v;
                }
            }
            let sign = if beta[i] >= 0.0 { 1.0 } else { -1.0 };
            rhs[r] = y[i] - eps * sign - fixed_contrib;
        }
        rhs[m] = -fixed_sum;

        let Some(sol) = solve_dense(mat, rhs) else { break };
        let mut candidate = beta.clone();
        for (r, &i) in free.iter().enumerate() {
            candidate[i] = sol[r];
        }
        // Demote coefficients that left their region; re-solve if any did.
        let mut changed = false;
        for (r, &i) in free.iter().enumerate() {
            let v = sol[r];
            let sign = if beta[i] >= 0.0 { 1.0 } else { -1.0 };
            if v * sign < 0.0 {
                fixed[i] = Some(0.0);
                changed = true;
            } else if v > c {
                fixed[i] = Some(c);
                changed = true;
            } else if v < -c {
                fixed[i] = Some(-c);
                changed = true;
            }
        }
        if changed {
            continue;
        }
        let polished_obj = dual_objective(&kmat, y, &candidate, eps);
        if polished_obj <= best_obj + 1e-9 {
            beta = candidate;
            bias = Some(sol[m]);
        }
        break;
    }

    let bias = bias.unwrap_or_else(|| bias_from_interval(&kmat, y, &beta, c, eps));
    let objective = dual_objective(&kmat, y, &beta, eps);
    QpSolution { beta, bias, objective }
}

/// Feasible-bias interval midpoint from the box case analysis, used when no
/// free coefficient pins the bias exactly. Coefficients within a round-off
/// band of a bound are treated as at the bound: without the band a value one
/// ulp inside the box adds a spurious equality that collapses the interval,
/// and with a degenerate (all-at-bound) optimum the midpoint convention is
/// what pins the bias.
pub fn bias_from_interval(kmat: &[Vec<f64>], y: &[f64], beta: &[f64], c: f64, eps: f64) -> f64 {
    let n = y.len();
    let edge = 1e-9 * c.max(1.0);
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for i in 0..n {
        let mut f0 = 0.0;
        for j in 0..n {
            f0 += kmat[i][j] * beta[j];
        }
        let g = f0 - y[i];
        let b = beta[i];
        if b < c - edge {
            lo = lo.max(if b < -edge { -g + eps } else { -g - eps });
        }
        if b > -c + edge {
            hi = hi.min(if b > edge { -g - eps } else { -g + eps });
        }
    }
    0.5 * (lo + hi)
}

/// Maximum epsilon-insensitive KKT violation over the training set, written
/// from the textbook case analysis rather than the solver's internals.
pub fn kkt_max_violation(
    kmat: &[Vec<f64>],
    y: &[f64],
    beta: &[f64],
    bias: f64,
    c: f64,
    eps: f64,
) -> f64 {
    let n = y.len();
    let edge = 1e-9 * c.max(1.0);
    let mut worst = 0.0f64;
    for i in 0..n {
        let mut f = bias;
        for j in 0..n {
            f += kmat[i][j] * beta[j];
        }
        let r = y[i] - f;
        let b = beta[i];
        let viol = if b.abs() <= edge {
            (r.abs() - eps).max(0.0)
        } else if b >= c - edge {
            (eps - r).max(0.0)
        } else if b <= -c + edge {
            (eps + r).max(0.0)
        } else if b > 0.0 {
            (r - eps).abs()
        } else {
            (r + eps).abs()
        };
        worst = worst.max(viol);
    }
    worst
}

pub fn kernel_matrix_for(rows: &[Vec<f64>], gamma: f64) -> Vec<Vec<f64>> {
    rbf_kernel_matrix(rows, gamma)
}

// ---------------------------------------------------------------------------
// Definitional metric oracles.
// ---------------------------------------------------------------------------

/// Average ranks by pairwise counting: rank_i = 1 + #{j : v_j < v_i} +
/// (#{j != i : v_j == v_i}) / 2.
pub fn naive_ranks(values: &[f64]) -> Vec<f64> {
    values
        .iter()
        .map(|&v| {
            let below = values.iter().filter(|&&w| w < v).count() as f64;
            let tied = values.iter().filter(|&&w| w == v).count() as f64 - 1.0;
            1.0 + below + tied / 2.0
        })
        .collect()
}

pub fn naive_pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma) * (x - ma)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb) * (y - mb)).sum();
    cov / (va * vb).sqrt()
}

pub fn naive_srcc(pred: &[f64], mos: &[f64]) -> f64 {
    naive_pearson(&naive_ranks(pred), &naive_ranks(mos))
}

/// Kendall tau-b by exhaustive pair counting:
/// (P - Q) / sqrt((n0 - Tx)(n0 - Ty)) with Tx counting every pair tied in
/// pred (joint ties included) and Ty likewise for mos.
pub fn naive_krcc(pred: &[f64], mos: &[f64]) -> f64 {
    let n = pred.len();
    let mut concordant = 0i64;
    let mut discordant = 0i64;
    let mut tied_x = 0i64;
    let mut tied_y = 0i64;
    for i in 0..n {
        for j in i + 1..n {
            let dx = pred[i] - pred[j];
            let dy = mos[i] - mos[j];
            if dx == 0.0 {
                tied_x += 1;
            }
            if dy == 0.0 {
                tied_y += 1;
            }
            if dx != 0.0 && dy != 0.0 {
                if (dx > 0.0) == (dy > 0.0) {
                    concordant += 1;
                } else {
                    discordant += 1;
                }
            }
        }
    }
    let n0 = (n * (n - 1) / 2) as f64;
    let denom = ((n0 - tied_x as f64) * (n0 - tied_y as f64)).sqrt();
    (concordant - discordant) as f64 / denom
}

pub fn naive_rmse(pred: &[f64], mos: &[f64]) -> f64 {
    let diffs: Vec<f64> = pred.iter().zip(mos).map(|(p, m)| p - m).collect();
    let sq: f64 = diffs.iter().map(|d| d * d).sum();
    (sq / diffs.len() as f64).sqrt()
}
