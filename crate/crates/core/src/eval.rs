//! Scoring estimates against synthetic ground truth.

use crate::cube::AbundanceMatrix;
use crate::error::{Error, Result};

/// Minimum-cost assignment of rows to distinct columns (`rows <= cols`).
/// Returns the column assigned to each row.
pub fn hungarian(cost: &[Vec<f64>]) -> Result<Vec<usize>> {
    let n = cost.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let m = cost[0].len();
    if cost.iter().any(|r| r.len() != m) {
        return Err(Error::Dimension("cost matrix rows differ in length".into()));
    }
    if n > m {
        return Err(Error::Dimension(format!("{n} rows cannot be assigned to {m} columns")));
    }
    if cost.iter().flatten().any(|c| !c.is_finite()) {
        return Err(Error::InvalidArgument("assignment costs must be finite".into()));
    }

    // Shortest augmenting paths with row/column potentials; index 0 is a
    // sentinel, rows and columns are 1-based.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut min_v = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let reduced = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if reduced < min_v[j] {
                    min_v[j] = reduced;
                    way[j] = j0;
                }
                if min_v[j] < delta {
                    delta = min_v[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_v[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=m {
        if owner[j] != 0 {
            assignment[owner[j] - 1] = j - 1;
        }
    }
    Ok(assignment)
}

/// Label agreement after the best one-to-one matching of predicted to true
/// labels.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelMatch {
    /// `mapping[p]` is the true label matched to predicted label `p`.
    pub mapping: Vec<Option<usize>>,
    pub correct: usize,
    pub total: usize,
}

impl LabelMatch {
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            1.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }
}

/// Scores `predicted` against `truth` over every pixel that has a true
/// label. Pixels with no predicted label count as wrong.
pub fn match_labels(predicted: &[Option<usize>], truth: &[Option<usize>]) -> Result<LabelMatch> {
    if predicted.len() != truth.len() {
        return Err(Error::Dimension(format!(
            "{} predicted labels for {} true labels",
            predicted.len(),
            truth.len()
        )));
    }
    let kp = predicted.iter().flatten().max().map_or(0, |&l| l + 1);
    let kt = truth.iter().flatten().max().map_or(0, |&l| l + 1);
    let mut confusion = vec![vec![0usize; kt]; kp];
    for (p, t) in predicted.iter().zip(truth) {
        if let (Some(p), Some(t)) = (p, t) {
            confusion[*p][*t] += 1;
        }
    }
    let total = truth.iter().flatten().count();
    // Square the problem so either side may have more labels.
    let size = kp.max(kt);
    let cost: Vec<Vec<f64>> = (0..size)
        .map(|p| {
            (0..size)
                .map(|t| -(confusion.get(p).and_then(|r| r.get(t)).copied().unwrap_or(0) as f64))
                .collect()
        })
        .collect();
    let assignment = hungarian(&cost)?;
    let mapping: Vec<Option<usize>> = (0..kp).map(|p| Some(assignment[p]).filter(|&t| t < kt)).collect();
    let correct = mapping
        .iter()
        .enumerate()
        .filter_map(|(p, t)| t.map(|t| confusion[p][t]))
        .sum();
    Ok(LabelMatch { mapping, correct, total })
}

/// Matches each true spectrum to a distinct estimated spectrum by minimum
/// total Euclidean distance. `result[t]` indexes `estimated`.
pub fn match_spectra(truth: &[Vec<f64>], estimated: &[Vec<f64>]) -> Result<Vec<usize>> {
    let cost: Vec<Vec<f64>> = truth
        .iter()
        .map(|t| {
            estimated
                .iter()
                .map(|e| t.iter().zip(e).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
                .collect()
        })
        .collect();
    hungarian(&cost)
}

/// Mean absolute abundance error over the pixels present in both matrices
/// and every true endmember. `matched[t]` is the estimated column standing
/// for true column `t`; unmatched estimated columns are ignored.
pub fn abundance_mae(truth: &AbundanceMatrix, estimated: &AbundanceMatrix, matched: &[usize]) -> Result<f64> {
    if matched.len() != truth.m() {
        return Err(Error::Dimension(format!(
            "{} matched columns for {} true endmembers",
            matched.len(),
            truth.m()
        )));
    }
    if let Some(&c) = matched.iter().find(|&&c| c >= estimated.m()) {
        return Err(Error::Dimension(format!("estimated column {c} does not exist")));
    }
    let mut position = vec![None; estimated.width() * estimated.height()];
    for (i, &p) in estimated.pixels().iter().enumerate() {
        position[p] = Some(i);
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for (i, &p) in truth.pixels().iter().enumerate() {
        let Some(j) = position.get(p).copied().flatten() else {
            continue;
        };
        for (t, &c) in matched.iter().enumerate() {
            sum += (truth.row(i)[t] - estimated.row(j)[c]).abs();
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::InvalidArgument("no pixel has both true and estimated abundances".into()));
    }
    Ok(sum / n as f64)
}
