//! Per-view kernel matrices and normalized graph Laplacians.

use nalgebra::DMatrix;

use crate::error::{MmcError, Result};
use crate::linalg::SymmetricMatrix;

/// Row sums below this value make `D^{-1/2}` undefined.
pub const MIN_ROW_SUM: f64 = 1e-12;

/// Where a view's matrix came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewKind {
    /// Raw `n × d` feature matrix; a Gaussian kernel is built from it.
    Features,
    /// Precomputed `n × n` similarity matrix.
    Similarity,
}

/// One view of one source.
#[derive(Debug, Clone)]
pub struct ViewData {
    pub kind: ViewKind,
    pub matrix: DMatrix<f64>,
    pub source_index: usize,
    pub view_index: usize,
}

impl ViewData {
    pub fn instances(&self) -> usize {
        self.matrix.nrows()
    }

    /// Builds the normalized Laplacian of this view. Returns the number of
    /// clamped negative similarities alongside it.
    pub fn laplacian(&self) -> Result<(SymmetricMatrix, usize)> {
        let (kernel, clamped) = match self.kind {
            ViewKind::Features => (gaussian_kernel(&self.matrix, None)?, 0),
            ViewKind::Similarity => validate_similarity(&self.matrix)?,
        };
        Ok((normalized_laplacian(&kernel)?, clamped))
    }
}

/// A symmetric non-negative similarity matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    values: DMatrix<f64>,
}

impl KernelMatrix {
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.nrows()
    }
}

fn squared_distance(x: &DMatrix<f64>, a: usize, b: usize) -> f64 {
    x.row(a)
        .iter()
        .zip(x.row(b).iter())
        .map(|(p, q)| (p - q) * (p - q))
        .sum()
}

/// Median of the `n(n-1)/2` distinct-pair Euclidean distances.
pub fn median_pairwise_distance(x: &DMatrix<f64>) -> Result<f64> {
    let n = x.nrows();
    if n < 2 {
        return Err(MmcError::Dimension(format!(
            "median distance needs at least 2 points, got {n}"
        )));
    }
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for a in 0..n {
        for b in (a + 1)..n {
            dists.push(squared_distance(x, a, b).sqrt());
        }
    }
    if dists.iter().any(|d| !d.is_finite()) {
        return Err(MmcError::NonFinite("feature matrix"));
    }
    dists.sort_by(f64::total_cmp);
    let m = dists.len();
    let median = if m % 2 == 1 {
        dists[m / 2]
    } else {
        0.5 * (dists[m / 2 - 1] + dists[m / 2])
    };
    if median == 0.0 {
        if dists[m - 1] == 0.0 {
            return Err(MmcError::DegenerateBandwidth);
        }
        // more than half the pairs coincide; fall back to the smallest positive distance
        let positive = dists.iter().copied().find(|&d| d > 0.0).unwrap_or(0.0);
        log::warn!("median pairwise distance is zero; using smallest positive distance {positive}");
        return Ok(positive);
    }
    Ok(median)
}

/// Gaussian kernel `K[a][b] = exp(-‖x_a − x_b‖² / (2σ²))`.
///
/// When `sigma` is `None` the bandwidth is the median pairwise distance.
pub fn gaussian_kernel(x: &DMatrix<f64>, sigma: Option<f64>) -> Result<KernelMatrix> {
    let n = x.nrows();
    if n < 2 {
        return Err(MmcError::Dimension(format!(
            "gaussian kernel needs at least 2 points, got {n}"
        )));
    }
    let sigma = match sigma {
        Some(s) if s > 0.0 && s.is_finite() => s,
        Some(s) => return Err(MmcError::InvalidConfig(format!("kernel bandwidth {s} must be > 0"))),
        None => median_pairwise_distance(x)?,
    };
    let denom = 2.0 * sigma * sigma;
    let mut values = DMatrix::identity(n, n);
    for a in 0..n {
        for b in (a + 1)..n {
            let k = (-squared_distance(x, a, b) / denom).exp();
            values[(a, b)] = k;
            values[(b, a)] = k;
        }
    }
    Ok(KernelMatrix { values })
}

/// `L = D^{-1/2} K D^{-1/2}` with `D` the diagonal of row sums of `K`.
pub fn normalized_laplacian(k: &KernelMatrix) -> Result<SymmetricMatrix> {
    let n = k.dim();
    let mut degree = Vec::with_capacity(n);
    for (row, r) in k.values.row_iter().enumerate() {
        let sum: f64 = r.iter().sum();
        if !(sum >= MIN_ROW_SUM) {
            return Err(MmcError::DisconnectedInstance { row, sum });
        }
        degree.push(sum);
    }
    let l = DMatrix::from_fn(n, n, |a, b| k.values[(a, b)] / (degree[a] * degree[b]).sqrt());
    SymmetricMatrix::new(l)
}

/// Accepts a precomputed similarity matrix: symmetrizes it and clamps negative
/// entries to zero. Returns the kernel and the number of clamped entries.
pub fn validate_similarity(s: &DMatrix<f64>) -> Result<(KernelMatrix, usize)> {
    if !s.is_square() {
        return Err(MmcError::Dimension(format!(
            "similarity matrix must be square, got {}x{}",
            s.nrows(),
            s.ncols()
        )));
    }
    let mut values = SymmetricMatrix::new(s.clone())?.into_inner();
    let mut clamped = 0;
    for v in values.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
            clamped += 1;
        }
    }
    if clamped > 0 {
        log::warn!("clamped {clamped} negative similarity entries to 0");
    }
    Ok((KernelMatrix { values }, clamped))
}
