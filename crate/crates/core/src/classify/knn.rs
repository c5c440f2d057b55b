//! k-nearest-neighbors with Hamming distance on the feature byte.
//!
//! The feature space has only 256 points, so training materializes the vote
//! for every possible query into a lookup table and prediction is one index.

use super::{FeatureVector, RiskLabel};

#[derive(Debug, Clone, PartialEq)]
pub struct KnnParams {
    pub k: usize,
    pub table: Box<[RiskLabel; 256]>,
}

/// Votes for one query byte. Neighbor ties at the cutoff distance are
/// resolved by training-set order; vote ties lean high-risk.
fn vote(samples: &[(FeatureVector, RiskLabel)], k: usize, query: u8) -> RiskLabel {
    let m = k.min(samples.len());
    let mut count = [0usize; 9];
    let mut highs = [0usize; 9];
    for (f, y) in samples {
        let d = (f.byte() ^ query).count_ones() as usize;
        count[d] += 1;
        if *y == RiskLabel::High {
            highs[d] += 1;
        }
    }

    let mut taken = 0usize;
    let mut high_votes = 0usize;
    let mut cutoff = 9usize;
    let mut need_at_cutoff = 0usize;
    for d in 0..9 {
        if taken + count[d] < m {
            taken += count[d];
            high_votes += highs[d];
        } else {
            cutoff = d;
            need_at_cutoff = m - taken;
            break;
        }
    }
    if cutoff < 9 && need_at_cutoff > 0 {
        if need_at_cutoff == count[cutoff] {
            high_votes += highs[cutoff];
        } else {
            let mut remaining = need_at_cutoff;
            for (f, y) in samples {
                if (f.byte() ^ query).count_ones() as usize == cutoff {
                    if *y == RiskLabel::High {
                        high_votes += 1;
                    }
                    remaining -= 1;
                    if remaining == 0 {
                        break;
                    }
                }
            }
        }
    }

    // exact tie leans high-risk
    if 2 * high_votes >= m {
        RiskLabel::High
    } else {
        RiskLabel::Low
    }
}

pub fn train(samples: &[(FeatureVector, RiskLabel)], k: usize) -> KnnParams {
    debug_assert!(k >= 1 && !samples.is_empty());
    let mut table = Box::new([RiskLabel::High; 256]);
    for q in 0..=255u8 {
        table[q as usize] = vote(samples, k, q);
    }
    KnnParams { k, table }
}

pub fn predict(p: &KnnParams, feature: FeatureVector) -> RiskLabel {
    p.table[feature.byte() as usize]
}

pub fn dump(p: &KnnParams) -> String {
    let cells: String = p
        .table
        .iter()
        .map(|l| if *l == RiskLabel::High { '+' } else { '-' })
        .collect();
    format!("k={}\ntable={cells}\n", p.k)
}
