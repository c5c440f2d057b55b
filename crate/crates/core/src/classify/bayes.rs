//! Bernoulli naive Bayes over the 8 feature bits, add-one smoothed.

use super::{FeatureVector, RiskLabel, FEATURE_BITS};

const N: usize = FEATURE_BITS;

/// Log-space parameters; smoothing keeps every log finite.
#[derive(Debug, Clone, PartialEq)]
pub struct NbParams {
    pub log_prior_high: f64,
    pub log_prior_low: f64,
    pub log_on_high: [f64; N],
    pub log_off_high: [f64; N],
    pub log_on_low: [f64; N],
    pub log_off_low: [f64; N],
}

pub fn train(samples: &[(FeatureVector, RiskLabel)], smoothing: f64) -> NbParams {
    debug_assert!(smoothing > 0.0);
    let n = samples.len();
    let mut ones_h = [0usize; N];
    let mut ones_l = [0usize; N];
    let mut n_h = 0usize;
    for (f, y) in samples {
        let ones = if *y == RiskLabel::High { &mut ones_h } else { &mut ones_l };
        for i in 0..N {
            ones[i] += f.bit(i) as usize;
        }
        if *y == RiskLabel::High {
            n_h += 1;
        }
    }
    let n_l = n - n_h;
    debug_assert!(n_h > 0 && n_l > 0, "caller validates both classes present");

    let mut p = NbParams {
        log_prior_high: (n_h as f64 / n as f64).ln(),
        log_prior_low: (n_l as f64 / n as f64).ln(),
        log_on_high: [0.0; N],
        log_off_high: [0.0; N],
        log_on_low: [0.0; N],
        log_off_low: [0.0; N],
    };
    for i in 0..N {
        let th = (ones_h[i] as f64 + smoothing) / (n_h as f64 + 2.0 * smoothing);
        let tl = (ones_l[i] as f64 + smoothing) / (n_l as f64 + 2.0 * smoothing);
        p.log_on_high[i] = th.ln();
        p.log_off_high[i] = (1.0 - th).ln();
        p.log_on_low[i] = tl.ln();
        p.log_off_low[i] = (1.0 - tl).ln();
    }
    p
}

pub fn predict(p: &NbParams, feature: FeatureVector) -> RiskLabel {
    let mut score_h = p.log_prior_high;
    let mut score_l = p.log_prior_low;
    for i in 0..N {
        if feature.bit(i) == 1 {
            score_h += p.log_on_high[i];
            score_l += p.log_on_low[i];
        } else {
            score_h += p.log_off_high[i];
            score_l += p.log_off_low[i];
        }
    }
    // exact tie leans high-risk
    if score_h >= score_l {
        RiskLabel::High
    } else {
        RiskLabel::Low
    }
}

pub fn dump(p: &NbParams) -> String {
    format!(
        "log_prior_high={:?}\nlog_prior_low={:?}\nlog_on_high={:?}\nlog_off_high={:?}\nlog_on_low={:?}\nlog_off_low={:?}\n",
        p.log_prior_high, p.log_prior_low, p.log_on_high, p.log_off_high, p.log_on_low, p.log_off_low
    )
}
