//! Maximum-weight assignment on square integer matrices.
//!
//! Small instances (up to [`EXHAUSTIVE_LIMIT`] rows) are solved by trying
//! every permutation in lexicographic order, keeping the first optimum, which
//! makes ties deterministic. Larger instances use Kuhn-Munkres.

use itertools::Itertools;
use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix;

use crate::error::{Error, Result};

pub const EXHAUSTIVE_LIMIT: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Solver {
    /// Exhaustive up to [`EXHAUSTIVE_LIMIT`], Kuhn-Munkres above.
    Auto,
    Exhaustive,
    KuhnMunkres,
}

/// Row-to-column assignment and its total weight.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    pub columns: Vec<usize>,
    pub total: i64,
}

pub fn max_weight_assignment(weights: &[Vec<i64>]) -> Result<Assignment> {
    max_weight_assignment_with(weights, Solver::Auto)
}

pub fn max_weight_assignment_with(weights: &[Vec<i64>], solver: Solver) -> Result<Assignment> {
    let n = weights.len();
    if weights.iter().any(|row| row.len() != n) {
        return Err(Error::validation("assignment weights must form a square matrix"));
    }
    if n == 0 {
        return Ok(Assignment { columns: vec![], total: 0 });
    }
    let exhaustive = match solver {
        Solver::Auto => n <= EXHAUSTIVE_LIMIT,
        Solver::Exhaustive => true,
        Solver::KuhnMunkres => false,
    };
    if exhaustive {
        let mut best: Option<Assignment> = None;
        for perm in (0..n).permutations(n) {
            let total = perm.iter().enumerate().map(|(r, &c)| weights[r][c]).sum();
            if best.as_ref().is_none_or(|b| total > b.total) {
                best = Some(Assignment { columns: perm, total });
            }
        }
        Ok(best.expect("n > 0"))
    } else {
        let matrix = Matrix::from_rows(weights.iter().cloned())
            .map_err(|e| Error::validation(format!("bad assignment matrix: {e}")))?;
        let (total, columns) = kuhn_munkres(&matrix);
        Ok(Assignment { columns, total })
    }
}
