//! Binary decision tree over the 8 feature bits (Gini splits, full depth).

use super::{FeatureVector, RiskLabel, FEATURE_BITS};

/// One node; splits test a single bit.
#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Leaf(RiskLabel),
    Split { bit: usize, zero: Box<TreeNode>, one: Box<TreeNode> },
}

fn gini(highs: usize, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let p = highs as f64 / total as f64;
    2.0 * p * (1.0 - p)
}

fn majority(highs: usize, total: usize) -> RiskLabel {
    // exact tie leans high-risk
    if 2 * highs >= total {
        RiskLabel::High
    } else {
        RiskLabel::Low
    }
}

/// Grows the full tree. A node keeps splitting while it is impure and some
/// bit still varies inside it — even a zero-gain split proceeds, which is
/// what lets parity-style labelings (resolved only two levels down) train to
/// consistency. Split-quality ties go to the lowest bit index.
pub fn train(samples: &[(FeatureVector, RiskLabel)]) -> TreeNode {
    debug_assert!(!samples.is_empty());
    let owned: Vec<(FeatureVector, RiskLabel)> = samples.to_vec();
    build(owned)
}

fn build(samples: Vec<(FeatureVector, RiskLabel)>) -> TreeNode {
    let total = samples.len();
    let highs = samples.iter().filter(|(_, y)| *y == RiskLabel::High).count();
    if highs == 0 {
        return TreeNode::Leaf(RiskLabel::Low);
    }
    if highs == total {
        return TreeNode::Leaf(RiskLabel::High);
    }

    let mut best: Option<(usize, f64)> = None;
    for bit in 0..FEATURE_BITS {
        let mut n1 = 0usize;
        let mut h1 = 0usize;
        for (f, y) in &samples {
            if f.bit(bit) == 1 {
                n1 += 1;
                if *y == RiskLabel::High {
                    h1 += 1;
                }
            }
        }
        let n0 = total - n1;
        if n0 == 0 || n1 == 0 {
            continue; // bit constant here: nothing to separate
        }
        let h0 = highs - h1;
        let weighted =
            (n0 as f64 * gini(h0, n0) + n1 as f64 * gini(h1, n1)) / total as f64;
        if best.map_or(true, |(_, w)| weighted < w) {
            best = Some((bit, weighted));
        }
    }

    match best {
        None => TreeNode::Leaf(majority(highs, total)), // identical vectors, mixed labels
        Some((bit, _)) => {
            let (ones, zeros): (Vec<_>, Vec<_>) =
                samples.into_iter().partition(|(f, _)| f.bit(bit) == 1);
            TreeNode::Split { bit, zero: Box::new(build(zeros)), one: Box::new(build(ones)) }
        }
    }
}

pub fn predict(root: &TreeNode, feature: FeatureVector) -> RiskLabel {
    let mut node = root;
    loop {
        match node {
            TreeNode::Leaf(label) => return *label,
            TreeNode::Split { bit, zero, one } => {
                node = if feature.bit(*bit) == 1 { one } else { zero };
            }
        }
    }
}

pub fn dump(root: &TreeNode) -> String {
    let mut out = String::new();
    dump_into(root, 0, &mut out);
    out
}

fn dump_into(node: &TreeNode, depth: usize, out: &mut String) {
    for _ in 0..depth {
        out.push_str("  ");
    }
    match node {
        TreeNode::Leaf(label) => {
            out.push_str(&format!("leaf {label}\n"));
        }
        TreeNode::Split { bit, zero, one } => {
            out.push_str(&format!("split bit={bit}\n"));
            dump_into(zero, depth + 1, out);
            dump_into(one, depth + 1, out);
        }
    }
}
