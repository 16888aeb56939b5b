//! Private ID3 over categorical features. Every count comes from a
//! federated round; the aggregator never sees a record.

use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use super::TrainerError;
use crate::data::CategoricalDataset;
use crate::dpcore::{Charge, Mechanism, NoiseSpec, PrivacyParams};
use crate::federation::{PrivacyMode, QueryPayload, Session, SplitSet};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DtHyper {
    /// Total budget for the whole tree.
    pub epsilon: f64,
    /// Defaults to `floor(|F| / 2)`.
    #[serde(default)]
    pub max_depth: Option<usize>,
}

impl DtHyper {
    pub fn new(epsilon: f64) -> Self {
        DtHyper {
            epsilon,
            max_depth: None,
        }
    }

    pub fn depth(&self, n_features: usize) -> usize {
        self.max_depth.unwrap_or(n_features / 2)
    }
}

fn exact(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite budget")
}

/// Largest float at most `target` whose `copies`-fold sum stays within it
/// in exact arithmetic.
fn exact_share(target: f64, copies: usize) -> f64 {
    let limit = exact(target);
    let k = BigRational::from_integer(copies.into());
    let mut share = target / copies as f64;
    while exact(share) * &k > limit {
        share = share.next_down();
    }
    share
}

/// Budget split across `d + 1` layers, each node spending `2 eps1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DtBudget {
    pub epsilon_total: f64,
    pub depth: usize,
    pub eps1: f64,
}

impl DtBudget {
    pub fn new(epsilon_total: f64, depth: usize) -> Result<Self, TrainerError> {
        if !(epsilon_total > 0.0) || !epsilon_total.is_finite() {
            return Err(TrainerError::Config(format!(
                "epsilon must be positive, got {epsilon_total}"
            )));
        }
        Ok(DtBudget {
            epsilon_total,
            depth,
            eps1: exact_share(epsilon_total, 2 * (depth + 1)),
        })
    }

    /// Per-histogram budget at a node with `n_features` live features.
    pub fn eps2(&self, n_features: usize) -> f64 {
        exact_share(self.eps1, 2 * n_features.max(1))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum TreeNode {
    Leaf {
        label: u32,
    },
    Split {
        feature: usize,
        /// Fallback for values without a child.
        majority: u32,
        children: Vec<TreeNode>,
    },
}

impl TreeNode {
    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { children, .. } => {
                1 + children.iter().map(TreeNode::depth).max().unwrap_or(0)
            }
        }
    }

    pub fn n_nodes(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { children, .. } => {
                1 + children.iter().map(TreeNode::n_nodes).sum::<usize>()
            }
        }
    }

    /// True when no feature repeats on any root-to-leaf path.
    pub fn paths_are_unique(&self) -> bool {
        fn walk(node: &TreeNode, used: &mut Vec<usize>) -> bool {
            match node {
                TreeNode::Leaf { .. } => true,
                TreeNode::Split {
                    feature, children, ..
                } => {
                    if used.contains(feature) {
                        return false;
                    }
                    used.push(*feature);
                    let ok = children.iter().all(|c| walk(c, used));
                    used.pop();
                    ok
                }
            }
        }
        walk(self, &mut Vec::new())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    pub root: TreeNode,
    pub depth_bound: usize,
    pub feature_names: Vec<String>,
    pub vocabularies: Vec<Vec<String>>,
    pub classes: Vec<String>,
}

impl TreeModel {
    pub fn predict(&self, row: &[u32]) -> u32 {
        dt_predict(&self.root, row)
    }

    pub fn predict_all(&self, data: &CategoricalDataset) -> Vec<u32> {
        data.rows.iter().map(|r| self.predict(r)).collect()
    }
}

/// Follows edges by feature value; a value without a child (or a missing
/// feature) yields the node's majority class.
pub fn dt_predict(node: &TreeNode, row: &[u32]) -> u32 {
    let mut node = node;
    loop {
        match node {
            TreeNode::Leaf { label } => return *label,
            TreeNode::Split {
                feature,
                majority,
                children,
            } => match row.get(*feature).and_then(|&v| children.get(v as usize)) {
                Some(child) => node = child,
                None => return *majority,
            },
        }
    }
}

/// `V_F = sum_i sum_c N_ic ln(N_ic / N_i)` with counts clamped at 0 and
/// non-positive terms dropped. `class_counts` is value-major.
pub fn split_score(value_counts: &[f64], class_counts: &[f64], n_classes: usize) -> f64 {
    assert_eq!(
        value_counts.len() * n_classes,
        class_counts.len(),
        "count shapes"
    );
    let mut score = 0.0;
    for (i, &n_i) in value_counts.iter().enumerate() {
        let n_i = n_i.max(0.0);
        if n_i <= 0.0 {
            continue;
        }
        for &n_ic in &class_counts[i * n_classes..(i + 1) * n_classes] {
            let n_ic = n_ic.max(0.0);
            if n_ic > 0.0 {
                score += n_ic * (n_ic / n_i).ln();
            }
        }
    }
    score
}

/// Index of the largest value; ties go to the lowest index.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

struct Builder<'a> {
    session: &'a mut Session,
    vocab_sizes: Vec<usize>,
    n_classes: usize,
    budget: DtBudget,
    private: bool,
    next_node: u64,
}

impl Builder<'_> {
    fn noise(&self, epsilon: f64) -> Option<NoiseSpec> {
        let mechanism = match self.session.config().mode {
            PrivacyMode::Hybrid => Mechanism::GammaShare,
            _ => Mechanism::Laplace,
        };
        self.session
            .noise(mechanism, PrivacyParams::laplace(epsilon, 1.0))
    }

    fn charges(&self, labels: Vec<String>, epsilon: f64, layer: usize, node: u64) -> Vec<Charge> {
        if !self.private {
            return Vec::new();
        }
        labels
            .into_iter()
            .map(|l| Charge::pure(l, epsilon).in_cell(format!("dt/layer{layer}"), node))
            .collect()
    }

    fn leaf(
        &mut self,
        split: &SplitSet,
        layer: usize,
        node: u64,
        fallback: u32,
    ) -> Result<TreeNode, TrainerError> {
        let eps1 = self.budget.eps1;
        let charges = self.charges(vec![format!("dt/n{node}/class_counts")], eps1, layer, node);
        let counts = self.session.run_round(
            QueryPayload::ClassCounts {
                splits: vec![split.clone()],
                n_classes: self.n_classes,
            },
            self.noise(eps1),
            charges,
        )?;
        let label = if counts.iter().all(|&c| c <= 0.0) {
            fallback
        } else {
            argmax(&counts) as u32
        };
        Ok(TreeNode::Leaf { label })
    }

    fn build(
        &mut self,
        split: SplitSet,
        features: Vec<usize>,
        depth_left: usize,
        layer: usize,
        fallback: u32,
    ) -> Result<TreeNode, TrainerError> {
        let node = self.next_node;
        self.next_node += 1;
        let eps1 = self.budget.eps1;

        let charges = self.charges(vec![format!("dt/n{node}/counts")], eps1, layer, node);
        let n = self.session.run_round(
            QueryPayload::Counts {
                splits: vec![split.clone()],
            },
            self.noise(eps1),
            charges,
        )?[0];

        let f = features
            .iter()
            .map(|&j| self.vocab_sizes[j])
            .max()
            .unwrap_or(0);
        let per_cell = n / (f * self.n_classes) as f64;
        let too_noisy = self.private && per_cell < std::f64::consts::SQRT_2 / eps1;
        if features.is_empty() || depth_left == 0 || too_noisy || n <= 0.0 {
            return self.leaf(&split, layer, node, fallback);
        }

        let eps2 = self.budget.eps2(features.len());
        let mut candidate_splits = Vec::new();
        for &j in &features {
            for v in 0..self.vocab_sizes[j] {
                let mut s = split.clone();
                s.push((j, v as u32));
                candidate_splits.push(s);
            }
        }
        let count_labels = features
            .iter()
            .map(|j| format!("dt/n{node}/counts/f{j}"))
            .collect();
        let class_labels = features
            .iter()
            .map(|j| format!("dt/n{node}/class_counts/f{j}"))
            .collect();
        let value_counts = self.session.run_round(
            QueryPayload::Counts {
                splits: candidate_splits.clone(),
            },
            self.noise(eps2),
            self.charges(count_labels, eps2, layer, node),
        )?;
        let class_counts = self.session.run_round(
            QueryPayload::ClassCounts {
                splits: candidate_splits,
                n_classes: self.n_classes,
            },
            self.noise(eps2),
            self.charges(class_labels, eps2, layer, node),
        )?;

        let mut best: Option<(usize, f64, usize)> = None;
        let mut offset = 0;
        for (pos, &j) in features.iter().enumerate() {
            let k = self.vocab_sizes[j];
            let score = split_score(
                &value_counts[offset..offset + k],
                &class_counts[offset * self.n_classes..(offset + k) * self.n_classes],
                self.n_classes,
            );
            if best.is_none_or(|(_, s, _)| score > s) {
                best = Some((pos, score, offset));
            }
            offset += k;
        }
        let (pos, _, offset) = best.expect("features is non-empty");
        let feature = features[pos];
        let k = self.vocab_sizes[feature];

        let mut totals = vec![0.0; self.n_classes];
        for i in 0..k {
            for (c, t) in totals.iter_mut().enumerate() {
                *t += class_counts[(offset + i) * self.n_classes + c].max(0.0);
            }
        }
        let majority = if totals.iter().all(|&t| t <= 0.0) {
            fallback
        } else {
            argmax(&totals) as u32
        };

        let remaining: Vec<usize> = features.iter().copied().filter(|&j| j != feature).collect();
        let mut children = Vec::with_capacity(k);
        for v in 0..k {
            let mut s = split.clone();
            s.push((feature, v as u32));
            children.push(self.build(s, remaining.clone(), depth_left - 1, layer + 1, majority)?);
        }
        Ok(TreeNode::Split {
            feature,
            majority,
            children,
        })
    }
}

/// Trains a tree over the parties' categorical shards. `schema` supplies
/// the public feature and class vocabularies; its rows are not read.
pub fn dt_train(
    session: &mut Session,
    schema: &CategoricalDataset,
    hyper: &DtHyper,
) -> Result<TreeModel, TrainerError> {
    let n_features = schema.n_features();
    let depth = hyper.depth(n_features);
    let budget = DtBudget::new(hyper.epsilon, depth)?;
    let private = session.config().mode != PrivacyMode::None;
    let mut builder = Builder {
        session,
        vocab_sizes: schema.vocabularies.iter().map(Vec::len).collect(),
        n_classes: schema.n_classes(),
        budget,
        private,
        next_node: 0,
    };
    if builder.n_classes == 0 || builder.vocab_sizes.contains(&0) {
        return Err(TrainerError::Config(
            "every feature and the class need a non-empty vocabulary".into(),
        ));
    }
    let root = builder.build(Vec::new(), (0..n_features).collect(), depth, 0, 0)?;
    Ok(TreeModel {
        root,
        depth_bound: depth,
        feature_names: schema.feature_names.clone(),
        vocabularies: schema.vocabularies.clone(),
        classes: schema.classes.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn budget_formulas() {
        let b = DtBudget::new(0.5, 4).unwrap();
        assert!((b.eps1 - 0.05).abs() < 1e-15);
        assert!((b.eps2(8) - 0.003125).abs() < 1e-15);
        assert!(exact(b.eps1) * BigRational::from_integer(10.into()) <= exact(0.5));
    }

    #[test]
    fn score_of_uniform_counts() {
        let v = split_score(&[4.0, 4.0], &[2.0, 2.0, 2.0, 2.0], 2);
        assert!((v - 8.0 * 0.5f64.ln()).abs() < 1e-12);
        assert!((v + 5.5452).abs() < 1e-4);
    }

    #[test]
    fn score_clamps_negative_counts() {
        assert_eq!(split_score(&[-3.0, 2.0], &[1.0, -1.0, 2.0, 0.0], 2), 0.0);
    }

    #[test]
    fn stop_rule_threshold() {
        let (eps1, f, c) = (0.05, 5.0, 5.0);
        let threshold = f * c * std::f64::consts::SQRT_2 / eps1;
        assert!((threshold - 707.1).abs() < 0.01);
    }

    #[test]
    fn prediction_falls_back_to_majority() {
        let tree = TreeNode::Split {
            feature: 1,
            majority: 2,
            children: vec![TreeNode::Leaf { label: 0 }, TreeNode::Leaf { label: 1 }],
        };
        assert_eq!(dt_predict(&tree, &[9, 1]), 1);
        assert_eq!(dt_predict(&tree, &[9, 0]), 0);
        assert_eq!(dt_predict(&tree, &[9, 7]), 2);
        assert_eq!(dt_predict(&TreeNode::Leaf { label: 4 }, &[0, 0]), 4);
        assert!(tree.paths_are_unique());
        assert_eq!(tree.depth(), 1);
    }

    proptest! {
        #[test]
        fn score_argmax_ignores_log_base(
            a in proptest::collection::vec(0.0f64..50.0, 6),
            b in proptest::collection::vec(0.0f64..50.0, 6),
        ) {
            let sums = |c: &[f64]| vec![c[0] + c[1] + c[2], c[3] + c[4] + c[5]];
            let (va, vb) = (split_score(&sums(&a), &a, 3), split_score(&sums(&b), &b, 3));
            let l2 = std::f64::consts::LN_2;
            prop_assert_eq!(va > vb, va / l2 > vb / l2);
        }

        #[test]
        fn exact_shares_never_exceed_target(eps in 1e-3f64..10.0, k in 1usize..40) {
            let s = exact_share(eps, k);
            prop_assert!(exact(s) * BigRational::from_integer(k.into()) <= exact(eps));
            prop_assert!(s > 0.0);
        }
    }
}
