//! Dense symmetric eigen-decomposition and orthogonalization.
//!
//! Every update in the optimizer reduces to "take the top-c eigenvectors of a
//! symmetric matrix", so this module pins down the contract precisely:
//! eigenvalues are ordered descending, ties keep the decomposition order, and
//! each eigenvector is sign-normalized so that its largest-magnitude entry is
//! non-negative. Together these make repeated calls bitwise reproducible.

use nalgebra::{DMatrix, SymmetricEigen, SVD};

use crate::error::{MmcError, Result};

/// Tolerance on `UᵀU = I` (Frobenius) for [`OrthonormalFactor`].
pub const ORTHONORMAL_TOL: f64 = 1e-8;

/// Relative singular-value floor below which a block is treated as rank deficient.
pub const RANK_TOL: f64 = 1e-10;

/// A real symmetric matrix. Construction symmetrizes the input as `(A + Aᵀ)/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix {
    values: DMatrix<f64>,
}

impl SymmetricMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if !values.is_square() {
            return Err(MmcError::Dimension(format!(
                "symmetric matrix must be square, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(MmcError::NonFinite("symmetric matrix"));
        }
        let mut values = values;
        symmetrize_in_place(&mut values);
        Ok(SymmetricMatrix { values })
    }

    pub fn identity(n: usize) -> Self {
        SymmetricMatrix {
            values: DMatrix::identity(n, n),
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(
            diag,
        )))
    }

    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.values
    }

    pub fn trace(&self) -> f64 {
        self.values.trace()
    }
}

fn symmetrize_in_place(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for a in 0..n {
        for b in (a + 1)..n {
            let avg = 0.5 * (m[(a, b)] + m[(b, a)]);
            m[(a, b)] = avg;
            m[(b, a)] = avg;
        }
    }
}

/// An `n × c` matrix with orthonormal columns under the canonical sign convention.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthonormalFactor {
    values: DMatrix<f64>,
}

impl OrthonormalFactor {
    /// Validates orthonormality and applies the sign convention to each column.
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.ncols() == 0 || values.ncols() > values.nrows() {
            return Err(MmcError::Dimension(format!(
                "orthonormal factor must satisfy 1 <= c <= n, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(MmcError::NonFinite("orthonormal factor"));
        }
        let err = orthonormality_error(&values);
        if err > ORTHONORMAL_TOL {
            return Err(MmcError::Dimension(format!(
                "columns are not orthonormal (|UᵀU - I|_F = {err:e})"
            )));
        }
        let mut values = values;
        canonicalize_signs(&mut values);
        Ok(OrthonormalFactor { values })
    }

    /// The first `c` canonical basis vectors of `R^n`.
    pub fn canonical(n: usize, c: usize) -> Result<Self> {
        Self::new(DMatrix::from_fn(n, c, |a, b| if a == b { 1.0 } else { 0.0 }))
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// Linear kernel `U Uᵀ` of the factor (the projector onto its column space).
    pub fn projector(&self) -> DMatrix<f64> {
        &self.values * self.values.transpose()
    }

    /// `tr(Uᵀ A U)`.
    pub fn rayleigh_trace(&self, a: &SymmetricMatrix) -> f64 {
        let au = a.values() * &self.values;
        self.values.dot(&au)
    }

    /// `tr(U Uᵀ V Vᵀ) = ‖Uᵀ V‖_F²`, the (negated) discrepancy between two factors.
    pub fn alignment(&self, other: &OrthonormalFactor) -> f64 {
        (self.values.transpose() * other.values()).norm_squared()
    }
}

/// `‖UᵀU − I‖_F`.
pub fn orthonormality_error(u: &DMatrix<f64>) -> f64 {
    let gram = u.transpose() * u;
    (gram - DMatrix::<f64>::identity(u.ncols(), u.ncols())).norm()
}

fn canonicalize_signs(u: &mut DMatrix<f64>) {
    for mut col in u.column_iter_mut() {
        let mut pivot = 0;
        let mut best = f64::NEG_INFINITY;
        for (a, v) in col.iter().enumerate() {
            // strict comparison keeps the lowest row index on ties
            if v.abs() > best {
                best = v.abs();
                pivot = a;
            }
        }
        if col[pivot] < 0.0 {
            col.neg_mut();
        }
    }
}

/// Eigenvectors for the `c` algebraically largest eigenvalues of `a`.
///
/// Returns the factor together with its eigenvalues in non-increasing order.
pub fn top_eigvecs(a: &SymmetricMatrix, c: usize) -> Result<(OrthonormalFactor, Vec<f64>)> {
    let n = a.dim();
    if c == 0 || c > n {
        return Err(MmcError::Dimension(format!(
            "requested {c} eigenvectors of a {n}x{n} matrix"
        )));
    }
    let eig = SymmetricEigen::new(a.values().clone());
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(MmcError::NonFinite("eigenvalues"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    // stable sort: equal eigenvalues keep the decomposition order
    order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));
    let chosen = &order[..c];
    let mut vectors = DMatrix::zeros(n, c);
    for (dst, &src) in chosen.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    canonicalize_signs(&mut vectors);
    let values = chosen.iter().map(|&i| eig.eigenvalues[i]).collect();
    Ok((OrthonormalFactor { values: vectors }, values))
}

/// Polar factor `P Qᵀ` of the thin SVD `B = P Σ Qᵀ`.
///
/// This is the semi-orthogonal matrix nearest to `B` in Frobenius norm; for
/// `r <= s` its rows are orthonormal.
pub fn polar_orthogonalize(b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if b.nrows() == 0 || b.ncols() == 0 {
        return Err(MmcError::Dimension("cannot orthogonalize an empty matrix".into()));
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(MmcError::NonFinite("orthogonalization input"));
    }
    let svd = SVD::new(b.clone(), true, true);
    let largest = svd.singular_values.max();
    let smallest = svd.singular_values.min();
    let threshold = RANK_TOL * largest;
    if largest <= 0.0 || smallest < threshold {
        return Err(MmcError::DegenerateMapping {
            smallest,
            threshold,
        });
    }
    let p = svd.u.expect("left singular vectors requested");
    let qt = svd.v_t.expect("right singular vectors requested");
    Ok(p * qt)
}
