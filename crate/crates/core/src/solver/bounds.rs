//! Per-support quantities: leaf objective and the lower bounds.
//!
//! Values here are scaled objectives `N * q * R` (see [`Regularizer`]).

use crate::dataset::{minority_total, BinaryDataset, EquivalenceClasses};
use crate::guess::ReferenceLabels;
use crate::objective::{Objective, Regularizer};
use crate::support::SupportSet;

/// Majority prediction (ties to 0) and its objective on `s`.
///
/// Panics on an empty support: splits producing an empty child are never
/// generated.
pub fn leaf_objective(bin: &BinaryDataset, s: &SupportSet) -> (u8, Objective) {
    assert!(!s.is_empty(), "leaf objective of an empty support");
    let ones = s.intersection_count(bin.positives());
    let zeros = s.count() - ones;
    let (prediction, errors) = if ones > zeros { (1, zeros) } else { (0, ones) };
    (
        prediction,
        Objective {
            errors: errors as u64,
            leaves: 1,
        },
    )
}

/// `q * |s ∩ incorrect| + p * N`: the reference model's mistakes on `s` plus
/// one leaf.
pub fn lb_guess_value(s: &SupportSet, reference: &ReferenceLabels, reg: &Regularizer) -> u128 {
    reg.scaled(s.intersection_count(&reference.incorrect) as u64, 1)
}

/// `q * minority_total(s) + p * N`: no tree puts identical rows in different
/// leaves, so each mixed group costs its minority count.
pub fn equiv_points_lb(s: &SupportSet, eq: &EquivalenceClasses, reg: &Regularizer) -> u128 {
    reg.scaled(minority_total(eq, s) as u64, 1)
}

/// Ordering weight of leaf counts inside an extended objective.
///
/// Extended objectives are `scaled * L + leaves` with `L = N + 1`. Every leaf
/// of a tree the solver builds holds at least one sample, so `leaves < L` and
/// comparing extended values compares `(scaled objective, leaves)`
/// lexicographically while staying additive over subtrees.
pub(crate) fn leaf_scale(n_samples: usize) -> u128 {
    n_samples as u128 + 1
}

#[derive(Clone, Debug)]
pub(crate) struct NodeInfo {
    pub count: usize,
    pub leaf_ext: u128,
    /// Sound lower bound on the extended value of any tree on this support.
    pub sound: u128,
    /// `max(sound, guess)`.
    pub active: u128,
    /// Guessed bound in scaled objective space, when lb guessing is on.
    pub guess_scaled: Option<u128>,
}

pub(crate) struct Bounds<'a> {
    pub bin: &'a BinaryDataset,
    pub reg: Regularizer,
    pub l: u128,
    pub eq: Option<&'a EquivalenceClasses>,
    pub reference: Option<&'a ReferenceLabels>,
}

impl Bounds<'_> {
    pub fn ext(&self, scaled: u128, leaves: u64) -> u128 {
        scaled * self.l + leaves as u128
    }

    /// A forced leaf: every bound equals the leaf objective.
    pub fn leaf_node(&self, s: &SupportSet) -> NodeInfo {
        let (_, leaf) = leaf_objective(self.bin, s);
        let leaf_ext = self.ext(leaf.scaled(&self.reg), 1);
        NodeInfo {
            count: s.count(),
            leaf_ext,
            sound: leaf_ext,
            active: leaf_ext,
            guess_scaled: None,
        }
    }

    pub fn node(&self, s: &SupportSet) -> NodeInfo {
        let (_, leaf) = leaf_objective(self.bin, s);
        let leaf_ext = self.ext(leaf.scaled(&self.reg), 1);
        let minority = match self.eq {
            Some(eq) => minority_total(eq, s) as u64,
            None => 0,
        };
        // a leaf, or any split tree: at least two leaves and the minority loss
        let split_floor = self.ext(self.reg.scaled(minority, 2), 2);
        let sound = leaf_ext.min(split_floor);
        let guess_scaled = self.reference.map(|r| lb_guess_value(s, r, &self.reg));
        let active = match guess_scaled {
            Some(g) => sound.max(self.ext(g, 1)),
            None => sound,
        };
        NodeInfo {
            count: s.count(),
            leaf_ext,
            sound,
            active,
            guess_scaled,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::equivalence_classes;
    use crate::objective::Lambda;

    fn bin(columns: Vec<Vec<bool>>, labels: Vec<u8>) -> BinaryDataset {
        let cols = columns.iter().map(|c| SupportSet::from_bools(c)).collect();
        BinaryDataset::from_columns(cols, None, labels, vec![]).unwrap()
    }

    #[test]
    fn leaf_objective_examples() {
        let b = bin(vec![vec![true; 4]], vec![1, 1, 1, 0]);
        let (pred, obj) = leaf_objective(&b, &b.full_support());
        assert_eq!((pred, obj.errors), (1, 1));
        // N is 4 here; the formula example uses N = 100
        let reg = Regularizer::new(Lambda::new(1, 100), 100);
        assert!((reg.value(obj.errors, 1) - 0.02).abs() < 1e-15);

        let tie = bin(vec![vec![true; 4]], vec![1, 0, 1, 0]);
        let (pred, obj) = leaf_objective(&tie, &tie.full_support());
        assert_eq!((pred, obj.errors), (0, 2));

        let pure = bin(vec![vec![true; 3]], vec![1, 1, 1]);
        assert_eq!(leaf_objective(&pure, &pure.full_support()).1.errors, 0);
    }

    #[test]
    fn lb_guess_examples() {
        let reg = Regularizer::new(Lambda::new(1, 100), 100);
        let labels = vec![0u8; 100];
        let mut pred = vec![0u8; 100];
        pred[3] = 1;
        pred[7] = 1;
        let r = ReferenceLabels::from_predictions(pred, &labels).unwrap();
        let all = SupportSet::full(100);
        // 2/100 + 0.01 = 0.03
        assert_eq!(lb_guess_value(&all, &r, &reg), 3 * 100);
        let clean = SupportSet::from_indices(100, [0, 1, 2]);
        assert_eq!(lb_guess_value(&clean, &r, &reg), reg.scaled(0, 1));
        assert_eq!(lb_guess_value(&r.incorrect, &r, &reg), reg.scaled(2, 1));
    }

    #[test]
    fn equiv_points_examples() {
        // rows 0 and 1 identical with labels 0 and 1
        let b = bin(
            vec![vec![true, true, false, true], vec![false, false, true, true]],
            vec![0, 1, 0, 1],
        );
        let eq = equivalence_classes(&b);
        let reg = Regularizer::new(Lambda::zero(), 4);
        assert_eq!(equiv_points_lb(&b.full_support(), &eq, &reg), reg.scaled(1, 0));
        let distinct = SupportSet::from_indices(4, [0, 2, 3]);
        let reg = Regularizer::new(Lambda::new(1, 10), 4);
        assert_eq!(equiv_points_lb(&distinct, &eq, &reg), reg.scaled(0, 1));
    }
}
