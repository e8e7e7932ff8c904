use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{DmlError, Result};
use crate::rng;

/// Random partition of `0..n` into `folds` groups whose sizes differ by at
/// most one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    n: usize,
    folds: usize,
    assignment: Vec<usize>,
    seed: u64,
    /// Single group whose fits train on every row (no sample splitting).
    #[serde(default)]
    pooled: bool,
}

/// Shuffles `0..n` with the seeded stream and deals positions round-robin.
pub fn make_folds(n: usize, folds: usize, seed: u64) -> Result<FoldPlan> {
    if folds < 2 {
        return Err(DmlError::Argument(format!(
            "fold count must be at least 2, got {folds}"
        )));
    }
    if folds > n {
        return Err(DmlError::Argument(format!(
            "fold count {folds} exceeds sample size {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed));
    let mut assignment = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        assignment[i] = pos % folds;
    }
    Ok(FoldPlan {
        n,
        folds,
        assignment,
        seed,
        pooled: false,
    })
}

impl FoldPlan {
    /// Builds a plan from an explicit assignment, checking it is a balanced
    /// partition.
    pub fn from_assignment(assignment: Vec<usize>, folds: usize, seed: u64) -> Result<Self> {
        let n = assignment.len();
        if folds < 2 || folds > n {
            return Err(DmlError::Argument(format!(
                "invalid fold count {folds} for n = {n}"
            )));
        }
        let plan = FoldPlan {
            n,
            folds,
            assignment,
            seed,
            pooled: false,
        };
        let sizes = plan.sizes();
        if plan.assignment.iter().any(|&f| f >= folds) {
            return Err(DmlError::Argument("fold id out of range".into()));
        }
        let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
        if hi - lo > 1 {
            return Err(DmlError::Argument(
                "fold sizes differ by more than one".into(),
            ));
        }
        Ok(plan)
    }

    /// Full-sample plan: nuisances are fitted and evaluated on the same rows.
    pub fn pooled(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(DmlError::Argument(
                "pooled plan needs at least one row".into(),
            ));
        }
        Ok(FoldPlan {
            n,
            folds: 1,
            assignment: vec![0; n],
            seed: 0,
            pooled: true,
        })
    }

    pub fn is_pooled(&self) -> bool {
        self.pooled
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn folds(&self) -> usize {
        self.folds
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    #[inline]
    pub fn fold_of(&self, i: usize) -> usize {
        self.assignment[i]
    }

    /// Rows of fold `fold`, ascending.
    pub fn members(&self, fold: usize) -> Vec<usize> {
        (0..self.n)
            .filter(|&i| self.assignment[i] == fold)
            .collect()
    }

    /// Rows outside fold `fold`, ascending; every row for a pooled plan.
    pub fn complement(&self, fold: usize) -> Vec<usize> {
        if self.pooled {
            return (0..self.n).collect();
        }
        (0..self.n)
            .filter(|&i| self.assignment[i] != fold)
            .collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.folds];
        for &f in &self.assignment {
            sizes[f] += 1;
        }
        sizes
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_division() {
        let plan = make_folds(10, 5, 3).unwrap();
        assert_eq!(plan.sizes(), vec![2; 5]);
    }

    #[test]
    fn remainder_rule() {
        let plan = make_folds(11, 5, 3).unwrap();
        let mut sizes = plan.sizes();
        sizes.sort();
        assert_eq!(sizes, vec![2, 2, 2, 2, 3]);
    }

    #[test]
    fn seeds_change_assignment() {
        let a = make_folds(100, 2, 1).unwrap();
        let b = make_folds(100, 2, 2).unwrap();
        assert_ne!(a.assignment(), b.assignment());
        assert_eq!(a, make_folds(100, 2, 1).unwrap());
    }

    #[test]
    fn argument_errors() {
        assert!(matches!(make_folds(3, 4, 0), Err(DmlError::Argument(_))));
        assert!(matches!(make_folds(3, 1, 0), Err(DmlError::Argument(_))));
    }

    #[test]
    fn pooled_trains_on_everything() {
        let plan = FoldPlan::pooled(6).unwrap();
        assert_eq!(plan.folds(), 1);
        assert_eq!(plan.members(0), plan.complement(0));
    }

    #[test]
    fn members_and_complement_partition() {
        let plan = make_folds(23, 4, 9).unwrap();
        for f in 0..4 {
            let mut all = plan.members(f);
            all.extend(plan.complement(f));
            all.sort();
            assert_eq!(all, (0..23).collect::<Vec<_>>());
        }
    }
}
