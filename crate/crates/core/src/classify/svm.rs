//! Linear soft-margin SVM trained by per-sample hinge subgradient descent.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{FeatureVector, Hyperparams, RiskLabel, FEATURE_BITS};

const N: usize = FEATURE_BITS;

#[derive(Debug, Clone, PartialEq)]
pub struct SvmParams {
    pub weights: [f64; N],
    pub bias: f64,
}

fn to_f64(f: FeatureVector) -> [f64; N] {
    let mut x = [0.0; N];
    for i in 0..N {
        x[i] = f.bit(i) as f64;
    }
    x
}

fn score(p: &SvmParams, x: &[f64; N]) -> f64 {
    let mut s = p.bias;
    for i in 0..N {
        s += p.weights[i] * x[i];
    }
    s
}

/// Fixed learning rate, L2 decay on the weights at every step (never on the
/// bias), margin update only when `y * f < 1`. The per-epoch visit order is
/// shuffled by a generator seeded once from `seed`, so training is a pure
/// function of `(samples, hyperparams, seed)`.
pub fn train(samples: &[(FeatureVector, RiskLabel)], hp: &Hyperparams, seed: u64) -> SvmParams {
    debug_assert!(!samples.is_empty());
    let data: Vec<([f64; N], f64)> = samples
        .iter()
        .map(|(f, y)| (to_f64(*f), y.value() as f64))
        .collect();

    let mut p = SvmParams { weights: [0.0; N], bias: 0.0 };
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lr = hp.svm_learning_rate;
    let l2 = hp.svm_l2;
    for _ in 0..hp.svm_epochs {
        order.shuffle(&mut rng);
        for &idx in &order {
            let (x, y) = &data[idx];
            let f = score(&p, x);
            let shrink = 1.0 - lr * l2;
            for w in &mut p.weights {
                *w *= shrink;
            }
            if y * f < 1.0 {
                for i in 0..N {
                    p.weights[i] += lr * y * x[i];
                }
                p.bias += lr * y;
            }
        }
    }
    p
}

/// Decision boundary zero; the boundary itself counts as high-risk.
pub fn predict(p: &SvmParams, feature: FeatureVector) -> RiskLabel {
    if score(p, &to_f64(feature)) >= 0.0 {
        RiskLabel::High
    } else {
        RiskLabel::Low
    }
}

pub fn dump(p: &SvmParams) -> String {
    format!("weights={:?}\nbias={:?}\n", p.weights, p.bias)
}
