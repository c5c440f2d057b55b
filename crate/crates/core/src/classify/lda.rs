//! Linear discriminant analysis on the 8 feature bits.
//!
//! Gaussian classes with a shared covariance give linear decision scores
//! `x·w_k + b_k`; the pooled covariance is ridge-stabilized and the two
//! weight vectors come from direct linear solves (no matrix inverse).

use super::{ClassifyError, FeatureVector, RiskLabel, FEATURE_BITS};

const N: usize = FEATURE_BITS;

#[derive(Debug, Clone, PartialEq)]
pub struct LdaParams {
    pub w_high: [f64; N],
    pub b_high: f64,
    pub w_low: [f64; N],
    pub b_low: f64,
}

fn to_f64(f: FeatureVector) -> [f64; N] {
    let mut x = [0.0; N];
    for i in 0..N {
        x[i] = f.bit(i) as f64;
    }
    x
}

fn dot(a: &[f64; N], b: &[f64; N]) -> f64 {
    let mut s = 0.0;
    for i in 0..N {
        s += a[i] * b[i];
    }
    s
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
/// `A` is consumed per call, so the caller passes a copy for each RHS.
fn solve(mut a: [[f64; N]; N], mut b: [f64; N]) -> Result<[f64; N], ClassifyError> {
    for col in 0..N {
        let mut pivot = col;
        for row in col + 1..N {
            if a[row][col].abs() > a[pivot][col].abs() {
                pivot = row;
            }
        }
        if a[pivot][col].abs() < 1e-12 {
            return Err(ClassifyError::DegenerateTraining("singular pooled covariance"));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..N {
            let factor = a[row][col] / a[col][col];
            if factor == 0.0 {
                continue;
            }
            for k in col..N {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = [0.0; N];
    for col in (0..N).rev() {
        let mut s = b[col];
        for k in col + 1..N {
            s -= a[col][k] * x[k];
        }
        x[col] = s / a[col][col];
    }
    Ok(x)
}

pub fn train(
    samples: &[(FeatureVector, RiskLabel)],
    ridge: f64,
) -> Result<LdaParams, ClassifyError> {
    let n = samples.len();
    let mut mean_h = [0.0; N];
    let mut mean_l = [0.0; N];
    let mut n_h = 0usize;
    for (f, y) in samples {
        let x = to_f64(*f);
        let target = if *y == RiskLabel::High { &mut mean_h } else { &mut mean_l };
        for i in 0..N {
            target[i] += x[i];
        }
        if *y == RiskLabel::High {
            n_h += 1;
        }
    }
    let n_l = n - n_h;
    debug_assert!(n_h > 0 && n_l > 0, "caller validates both classes present");
    for i in 0..N {
        mean_h[i] /= n_h as f64;
        mean_l[i] /= n_l as f64;
    }

    // pooled within-class scatter, unbiased over (n - classes) with a floor
    let mut cov = [[0.0; N]; N];
    for (f, y) in samples {
        let x = to_f64(*f);
        let mu = if *y == RiskLabel::High { &mean_h } else { &mean_l };
        for i in 0..N {
            let di = x[i] - mu[i];
            for j in 0..N {
                cov[i][j] += di * (x[j] - mu[j]);
            }
        }
    }
    let denom = n.saturating_sub(2).max(1) as f64;
    for (i, row) in cov.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v /= denom;
            if i == j {
                *v += ridge;
            }
        }
    }

    let w_high = solve(cov, mean_h)?;
    let w_low = solve(cov, mean_l)?;
    let prior_h = (n_h as f64 / n as f64).ln();
    let prior_l = (n_l as f64 / n as f64).ln();
    Ok(LdaParams {
        b_high: prior_h - 0.5 * dot(&mean_h, &w_high),
        b_low: prior_l - 0.5 * dot(&mean_l, &w_low),
        w_high,
        w_low,
    })
}

pub fn predict(p: &LdaParams, feature: FeatureVector) -> RiskLabel {
    let x = to_f64(feature);
    let score_h = dot(&x, &p.w_high) + p.b_high;
    let score_l = dot(&x, &p.w_low) + p.b_low;
    // exact tie leans high-risk
    if score_h >= score_l {
        RiskLabel::High
    } else {
        RiskLabel::Low
    }
}

pub fn dump(p: &LdaParams) -> String {
    format!(
        "w_high={:?}\nb_high={:?}\nw_low={:?}\nb_low={:?}\n",
        p.w_high, p.b_high, p.w_low, p.b_low
    )
}
