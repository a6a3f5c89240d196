//! Clustering and mapping-quality evaluation.

use std::collections::HashMap;

use crate::clustering::{lloyd, restart_seeds, row_normalize, LabelVector};
use crate::error::{MmcError, Result};
use crate::linalg::OrthonormalFactor;
use crate::mapping::MappingState;

/// Joint counts of two labelings over the same instances.
#[derive(Debug, Clone, PartialEq)]
pub struct ContingencyTable {
    counts: Vec<Vec<usize>>,
    n: usize,
}

impl ContingencyTable {
    /// Labels are compacted to `0..distinct` in order of first appearance.
    pub fn new(a: &[usize], b: &[usize]) -> Result<Self> {
        if a.len() != b.len() {
            return Err(MmcError::Dimension(format!(
                "label vectors differ in length: {} vs {}",
                a.len(),
                b.len()
            )));
        }
        let ia = compact(a);
        let ib = compact(b);
        let ra = ia.iter().max().map_or(0, |m| m + 1);
        let rb = ib.iter().max().map_or(0, |m| m + 1);
        let mut counts = vec![vec![0; rb]; ra];
        for (&x, &y) in ia.iter().zip(&ib) {
            counts[x][y] += 1;
        }
        Ok(ContingencyTable { counts, n: a.len() })
    }

    pub fn counts(&self) -> &[Vec<usize>] {
        &self.counts
    }

    pub fn total(&self) -> usize {
        self.n
    }

    fn row_sums(&self) -> Vec<usize> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    fn col_sums(&self) -> Vec<usize> {
        let cols = self.counts.first().map_or(0, Vec::len);
        (0..cols)
            .map(|j| self.counts.iter().map(|r| r[j]).sum())
            .collect()
    }
}

fn compact(labels: &[usize]) -> Vec<usize> {
    let mut ids = HashMap::new();
    labels
        .iter()
        .map(|l| {
            let next = ids.len();
            *ids.entry(*l).or_insert(next)
        })
        .collect()
}

fn entropy(marginal: &[usize], n: f64) -> f64 {
    marginal
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Normalized mutual information `I(a;b) / sqrt(H(a) H(b))`, natural logs.
///
/// A constant labeling has zero entropy; the score is then 0, unless both
/// labelings are constant, in which case they agree and the score is 1.
pub fn nmi(a: &LabelVector, b: &LabelVector) -> Result<f64> {
    nmi_slices(a.as_slice(), b.as_slice())
}

pub fn nmi_slices(a: &[usize], b: &[usize]) -> Result<f64> {
    let table = ContingencyTable::new(a, b)?;
    if table.n == 0 {
        return Err(MmcError::Dimension("nmi of empty labelings".into()));
    }
    let n = table.n as f64;
    let rows = table.row_sums();
    let cols = table.col_sums();
    let ha = entropy(&rows, n);
    let hb = entropy(&cols, n);
    if rows.len() == 1 && cols.len() == 1 {
        return Ok(1.0);
    }
    if ha == 0.0 || hb == 0.0 {
        return Ok(0.0);
    }
    let mut terms = Vec::new();
    for (i, row) in table.counts.iter().enumerate() {
        for (j, &nij) in row.iter().enumerate() {
            if nij == 0 {
                continue;
            }
            let nij = nij as f64;
            terms.push(nij / n * (n * nij / (rows[i] as f64 * cols[j] as f64)).ln());
        }
    }
    // sorted summation makes the result independent of argument order
    terms.sort_by(f64::total_cmp);
    let mi: f64 = terms.iter().sum();
    Ok((mi / (ha * hb).sqrt()).clamp(0.0, 1.0))
}

/// Mean and sample standard deviation of NMI over `runs` independent
/// single-restart k-means labelings of `factor`.
pub fn mean_nmi_protocol(
    factor: &OrthonormalFactor,
    c: usize,
    truth: &LabelVector,
    runs: usize,
    seed: u64,
    row_normalize_rows: bool,
) -> Result<(f64, f64)> {
    if runs == 0 {
        return Err(MmcError::InvalidConfig("protocol needs at least one run".into()));
    }
    if c == 0 || c > factor.nrows() {
        return Err(MmcError::Dimension(format!(
            "k-means needs 1 <= k <= n, got k = {c}, n = {}",
            factor.nrows()
        )));
    }
    if truth.len() != factor.nrows() {
        return Err(MmcError::Dimension(format!(
            "truth has {} labels for {} instances",
            truth.len(),
            factor.nrows()
        )));
    }
    let points = if row_normalize_rows {
        row_normalize(factor.values()).0
    } else {
        factor.values().clone()
    };
    let scores = restart_seeds(seed, runs)
        .into_iter()
        .map(|s| {
            let (labels, _, _) = lloyd(&points, c, s);
            nmi_slices(&labels, truth.as_slice())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(mean_std(&scores))
}

/// Mean and sample (n − 1) standard deviation; a single sample has std 0.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Quality of the inferred part of a mapping against ground-truth classes.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MappingAccuracy {
    pub unmapped: usize,
    pub matches: usize,
    pub accuracy: f64,
}

/// For every row without a known mapping, takes the most similar unmapped
/// column (lowest index on ties) and checks whether the classes agree.
pub fn mapping_inference_accuracy(
    map: &MappingState,
    labels_i: &LabelVector,
    labels_j: &LabelVector,
) -> Result<MappingAccuracy> {
    if labels_i.len() != map.nrows() || labels_j.len() != map.ncols() {
        return Err(MmcError::Dimension(format!(
            "mapping is {}x{} but labels have lengths {} and {}",
            map.nrows(),
            map.ncols(),
            labels_i.len(),
            labels_j.len()
        )));
    }
    let rows = map.unmapped_rows();
    let cols = map.unmapped_cols();
    if rows.is_empty() {
        return Ok(MappingAccuracy {
            unmapped: 0,
            matches: 0,
            accuracy: 1.0,
        });
    }
    let m = map.mapping();
    let mut matches = 0;
    for &a in &rows {
        let mut best: Option<(usize, f64)> = None;
        for &b in &cols {
            let v = m[(a, b)];
            if best.is_none_or(|(_, bv)| v > bv) {
                best = Some((b, v));
            }
        }
        if let Some((b, _)) = best {
            if labels_i[a] == labels_j[b] {
                matches += 1;
            }
        }
    }
    Ok(MappingAccuracy {
        unmapped: rows.len(),
        matches,
        accuracy: matches as f64 / rows.len() as f64,
    })
}
