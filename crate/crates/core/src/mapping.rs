//! Cross-source instance mappings.
//!
//! A [`MappingState`] couples the current similarity mapping `M` between two
//! sources with the indicator `W` of entries that are known correspondences.
//! Known entries are never modified after construction; unknown entries are
//! re-estimated from the consensus factors by similarity transitivity:
//! instances close to the same bridged instance in their own sources are
//! deemed similar across sources.

use nalgebra::DMatrix;

use crate::error::{MmcError, Result};
use crate::linalg::{polar_orthogonalize, OrthonormalFactor};

/// Mapping between source `source_i` (rows) and `source_j` (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct MappingState {
    pub source_i: usize,
    pub source_j: usize,
    m: DMatrix<f64>,
    w: DMatrix<f64>,
    row_known: Vec<bool>,
    col_known: Vec<bool>,
}

/// How [`init_unknown_block`] filled the unknown block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockInit {
    /// Nothing to fill: every row or every column is already mapped.
    Empty,
    /// Polar factor of the transitivity estimate.
    Orthogonalized,
    /// Uniform rows summing to one (no known pairs, or a rank-deficient estimate).
    UniformFallback,
}

impl MappingState {
    pub fn nrows(&self) -> usize {
        self.m.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.m.ncols()
    }

    /// Current similarity mapping `M`.
    pub fn mapping(&self) -> &DMatrix<f64> {
        &self.m
    }

    /// Known-entry indicator `W` (entries 0 or 1).
    pub fn indicator(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn is_known(&self, a: usize, b: usize) -> bool {
        self.w[(a, b)] != 0.0
    }

    pub fn row_is_mapped(&self, a: usize) -> bool {
        self.row_known[a]
    }

    pub fn col_is_mapped(&self, b: usize) -> bool {
        self.col_known[b]
    }

    pub fn known_count(&self) -> usize {
        self.row_known.iter().filter(|k| **k).count()
    }

    /// Known pairs in row order.
    pub fn known_pairs(&self) -> Vec<(usize, usize)> {
        let mut pairs = Vec::new();
        for a in 0..self.nrows() {
            if !self.row_known[a] {
                continue;
            }
            for b in 0..self.ncols() {
                if self.is_known(a, b) {
                    pairs.push((a, b));
                }
            }
        }
        pairs
    }

    pub fn unmapped_rows(&self) -> Vec<usize> {
        (0..self.nrows()).filter(|&a| !self.row_known[a]).collect()
    }

    pub fn unmapped_cols(&self) -> Vec<usize> {
        (0..self.ncols()).filter(|&b| !self.col_known[b]).collect()
    }

    /// The same mapping viewed from the other side (`Mᵀ`, `Wᵀ`).
    pub fn transposed(&self) -> MappingState {
        MappingState {
            source_i: self.source_j,
            source_j: self.source_i,
            m: self.m.transpose(),
            w: self.w.transpose(),
            row_known: self.col_known.clone(),
            col_known: self.row_known.clone(),
        }
    }

    /// True for entries in the unknown block: neither the row nor the column
    /// has a known correspondence. Every other entry is fixed by the known
    /// one-to-one pairs (1 on a pair, 0 elsewhere in its row and column).
    pub fn is_unknown(&self, a: usize, b: usize) -> bool {
        !self.row_known[a] && !self.col_known[b]
    }

    /// Replaces the unknown block of `M` with `candidate`; all other entries
    /// are kept as they are. Negative or non-finite candidates are stored as zero.
    pub fn with_unknown(&self, candidate: &DMatrix<f64>) -> Result<MappingState> {
        check_shape(self, candidate.nrows(), candidate.ncols())?;
        let mut next = self.clone();
        for b in 0..self.ncols() {
            if self.col_known[b] {
                continue;
            }
            for a in 0..self.nrows() {
                if !self.row_known[a] {
                    let c = candidate[(a, b)];
                    next.m[(a, b)] = if c > 0.0 && c.is_finite() { c } else { 0.0 };
                }
            }
        }
        Ok(next)
    }

    /// True when every known entry of `other` is bitwise equal to this one's.
    pub fn known_entries_identical(&self, other: &MappingState) -> bool {
        self.w == other.w
            && self
                .m
                .iter()
                .zip(other.m.iter())
                .zip(self.w.iter())
                .all(|((x, y), w)| *w == 0.0 || x.to_bits() == y.to_bits())
    }
}

fn check_shape(map: &MappingState, rows: usize, cols: usize) -> Result<()> {
    if map.nrows() != rows || map.ncols() != cols {
        return Err(MmcError::Dimension(format!(
            "mapping is {}x{}, got {}x{}",
            map.nrows(),
            map.ncols(),
            rows,
            cols
        )));
    }
    Ok(())
}

/// Builds the initial mapping from known one-to-one pairs `(a, b)`.
pub fn build_mapping(
    source_i: usize,
    source_j: usize,
    n_i: usize,
    n_j: usize,
    known_pairs: &[(usize, usize)],
) -> Result<MappingState> {
    let mut m = DMatrix::zeros(n_i, n_j);
    let mut row_known = vec![false; n_i];
    let mut col_known = vec![false; n_j];
    for &(a, b) in known_pairs {
        if a >= n_i {
            return Err(MmcError::OutOfRange {
                what: "mapping rows",
                index: a,
                len: n_i,
            });
        }
        if b >= n_j {
            return Err(MmcError::OutOfRange {
                what: "mapping columns",
                index: b,
                len: n_j,
            });
        }
        if row_known[a] {
            return Err(MmcError::NotOneToOne {
                side: "row",
                index: a,
            });
        }
        if col_known[b] {
            return Err(MmcError::NotOneToOne {
                side: "column",
                index: b,
            });
        }
        row_known[a] = true;
        col_known[b] = true;
        m[(a, b)] = 1.0;
    }
    Ok(MappingState {
        source_i,
        source_j,
        w: m.clone(),
        m,
        row_known,
        col_known,
    })
}

fn check_factors(map: &MappingState, ui: &OrthonormalFactor, uj: &OrthonormalFactor) -> Result<()> {
    if ui.nrows() != map.nrows() || uj.nrows() != map.ncols() {
        return Err(MmcError::Dimension(format!(
            "mapping is {}x{} but factors have {} and {} rows",
            map.nrows(),
            map.ncols(),
            ui.nrows(),
            uj.nrows()
        )));
    }
    Ok(())
}

/// Transitivity estimate `(Uᵢ Uᵢᵀ) M (Uⱼ Uⱼᵀ)` using linear kernels on the factors.
pub fn estimate_unknown(
    map: &MappingState,
    ui: &OrthonormalFactor,
    uj: &OrthonormalFactor,
) -> Result<DMatrix<f64>> {
    check_factors(map, ui, uj)?;
    // Uᵢ (Uᵢᵀ M Uⱼ) Uⱼᵀ avoids forming the n×n projectors
    let core = ui.values().transpose() * &map.m * uj.values();
    Ok(ui.values() * core * uj.values().transpose())
}

/// Fills the unknown block (unmapped rows × unmapped columns) with the polar
/// factor of the transitivity estimate restricted to that block.
pub fn init_unknown_block(
    map: &MappingState,
    ui: &OrthonormalFactor,
    uj: &OrthonormalFactor,
) -> Result<(MappingState, BlockInit)> {
    check_factors(map, ui, uj)?;
    let rows = map.unmapped_rows();
    let cols = map.unmapped_cols();
    if rows.is_empty() || cols.is_empty() {
        return Ok((map.clone(), BlockInit::Empty));
    }
    let block = if map.known_count() == 0 {
        log::warn!(
            "no known pairs between sources {} and {}; using a uniform initial mapping",
            map.source_i,
            map.source_j
        );
        None
    } else {
        let estimate = estimate_unknown(map, ui, uj)?;
        let sub = DMatrix::from_fn(rows.len(), cols.len(), |r, c| estimate[(rows[r], cols[c])]);
        match polar_orthogonalize(&sub) {
            Ok(p) => Some(p),
            Err(MmcError::DegenerateMapping { smallest, threshold }) => {
                log::warn!(
                    "unknown mapping block between sources {} and {} is rank deficient \
                     (sigma_min {smallest:e} < {threshold:e}); using a uniform initial mapping",
                    map.source_i,
                    map.source_j
                );
                None
            }
            Err(e) => return Err(e),
        }
    };
    let (block, how) = match block {
        Some(b) => (b, BlockInit::Orthogonalized),
        None => (
            DMatrix::from_element(rows.len(), cols.len(), 1.0 / cols.len() as f64),
            BlockInit::UniformFallback,
        ),
    };
    let mut next = map.clone();
    for (r, &a) in rows.iter().enumerate() {
        for (c, &b) in cols.iter().enumerate() {
            let v = block[(r, c)];
            next.m[(a, b)] = if v > 0.0 { v } else { 0.0 };
        }
    }
    Ok((next, how))
}

/// `M ← W∘M + (1 − W)∘M̃` on the unknown block, then negative entries clamped
/// to zero. Rows and columns that already hold a known pair keep their zeros,
/// since a known correspondence is one-to-one.
pub fn update_mapping(
    map: &MappingState,
    ui: &OrthonormalFactor,
    uj: &OrthonormalFactor,
) -> Result<MappingState> {
    let estimate = estimate_unknown(map, ui, uj)?;
    map.with_unknown(&estimate)
}

/// Relative change `‖M_new − M_old‖_F / max(1, ‖M_old‖_F)`.
pub fn mapping_delta(old: &MappingState, new: &MappingState) -> Result<f64> {
    check_shape(old, new.nrows(), new.ncols())?;
    Ok((&new.m - &old.m).norm() / old.m.norm().max(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn identity_factor(n: usize) -> OrthonormalFactor {
        OrthonormalFactor::canonical(n, n).unwrap()
    }

    #[test]
    fn full_identity_mapping() {
        let map = build_mapping(0, 1, 3, 3, &[(0, 0), (1, 1), (2, 2)]).unwrap();
        assert_eq!(map.mapping(), &DMatrix::identity(3, 3));
        assert_eq!(map.indicator(), &DMatrix::identity(3, 3));
    }

    #[test]
    fn empty_mapping() {
        let map = build_mapping(0, 1, 2, 3, &[]).unwrap();
        assert_eq!(map.mapping(), &DMatrix::zeros(2, 3));
        assert_eq!(map.known_count(), 0);
    }

    #[test]
    fn duplicate_row_is_rejected() {
        assert!(matches!(
            build_mapping(0, 1, 3, 3, &[(0, 1), (0, 2)]),
            Err(MmcError::NotOneToOne { side: "row", index: 0 })
        ));
        assert!(matches!(
            build_mapping(0, 1, 3, 3, &[(0, 1), (2, 1)]),
            Err(MmcError::NotOneToOne { side: "column", index: 1 })
        ));
    }

    #[test]
    fn out_of_range_pair_is_rejected() {
        assert!(matches!(
            build_mapping(0, 1, 2, 2, &[(0, 5)]),
            Err(MmcError::OutOfRange { .. })
        ));
    }

    #[test]
    fn zero_mapping_transfers_nothing() {
        let map = build_mapping(0, 1, 3, 3, &[]).unwrap();
        let u = OrthonormalFactor::canonical(3, 2).unwrap();
        assert_eq!(estimate_unknown(&map, &u, &u).unwrap(), DMatrix::zeros(3, 3));
    }

    #[test]
    fn complete_factors_reproduce_mapping() {
        let map = build_mapping(0, 1, 3, 3, &[(0, 2), (2, 0)]).unwrap();
        let est = estimate_unknown(&map, &identity_factor(3), &identity_factor(3)).unwrap();
        assert!((est - map.mapping()).norm() < 1e-15);
    }

    #[test]
    fn factor_dimension_mismatch() {
        let map = build_mapping(0, 1, 3, 4, &[]).unwrap();
        let u = OrthonormalFactor::canonical(3, 1).unwrap();
        assert!(estimate_unknown(&map, &u, &u).is_err());
    }

    #[test]
    fn fully_known_block_is_unchanged() {
        let map = build_mapping(0, 1, 2, 2, &[(0, 1), (1, 0)]).unwrap();
        let u = identity_factor(2);
        let (next, how) = init_unknown_block(&map, &u, &u).unwrap();
        assert_eq!(how, BlockInit::Empty);
        assert_eq!(next, map);
    }

    #[test]
    fn no_known_pairs_falls_back_to_uniform() {
        let map = build_mapping(0, 1, 2, 4, &[]).unwrap();
        let ui = identity_factor(2);
        let uj = OrthonormalFactor::canonical(4, 2).unwrap();
        let (next, how) = init_unknown_block(&map, &ui, &uj).unwrap();
        assert_eq!(how, BlockInit::UniformFallback);
        assert_eq!(next.mapping(), &DMatrix::from_element(2, 4, 0.25));
    }

    #[test]
    fn fully_known_update_is_identity() {
        let map = build_mapping(0, 1, 2, 2, &[(0, 0), (1, 1)]).unwrap();
        let u = OrthonormalFactor::canonical(2, 1).unwrap();
        assert_eq!(update_mapping(&map, &u, &u).unwrap(), map);
    }

    #[test]
    fn mixed_update_blends_elementwise() {
        // W = [[1,0],[0,0]], Ui = Uj = (0.6, 0.8)ᵀ so UUᵀ = [[.36,.48],[.48,.64]].
        // M̃ = UUᵀ e₀e₀ᵀ UUᵀ = (.36,.48)ᵀ(.36,.48); only entry (1,1) is unknown
        let map = build_mapping(0, 1, 2, 2, &[(0, 0)]).unwrap();
        let u = OrthonormalFactor::new(dmatrix![0.6; 0.8]).unwrap();
        let next = update_mapping(&map, &u, &u).unwrap();
        let expected = dmatrix![1.0, 0.0; 0.0, 0.48 * 0.48];
        assert!((next.mapping() - expected).norm() < 1e-15);
        assert_eq!(next.mapping()[(0, 0)].to_bits(), 1.0f64.to_bits());
    }

    #[test]
    fn rows_and_columns_of_known_pairs_stay_zero() {
        let map = build_mapping(0, 1, 3, 3, &[(0, 1)]).unwrap();
        let ui = OrthonormalFactor::new(DMatrix::from_element(3, 1, 1.0 / 3f64.sqrt())).unwrap();
        let next = update_mapping(&map, &ui, &ui).unwrap();
        let m = next.mapping();
        assert_eq!(m[(0, 0)], 0.0);
        assert_eq!(m[(0, 2)], 0.0);
        assert_eq!(m[(1, 1)], 0.0);
        assert_eq!(m[(2, 1)], 0.0);
        assert!(m[(1, 0)] > 0.0 && m[(2, 2)] > 0.0);
    }

    #[test]
    fn update_clamps_negative_estimates() {
        let map = build_mapping(0, 1, 2, 2, &[(0, 0)]).unwrap();
        let s = 0.5f64.sqrt();
        let u = OrthonormalFactor::new(dmatrix![s; -s]).unwrap();
        let next = update_mapping(&map, &u, &u).unwrap();
        assert!(next.mapping().iter().all(|v| *v >= 0.0));
        assert_eq!(next.mapping()[(0, 1)], 0.0);
    }

    #[test]
    fn delta_values() {
        let zero = build_mapping(0, 1, 2, 2, &[]).unwrap();
        let eye = build_mapping(0, 1, 2, 2, &[(0, 0), (1, 1)]).unwrap();
        assert_eq!(mapping_delta(&zero, &zero).unwrap(), 0.0);
        assert!((mapping_delta(&zero, &eye).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        let doubled = MappingState {
            m: eye.m.scale(2.0),
            ..eye.clone()
        };
        assert!((mapping_delta(&eye, &doubled).unwrap() - 1.0).abs() < 1e-15);
        let other = build_mapping(0, 1, 3, 2, &[]).unwrap();
        assert!(mapping_delta(&zero, &other).is_err());
    }

    #[test]
    fn transpose_swaps_sides() {
        let map = build_mapping(0, 1, 2, 3, &[(1, 2)]).unwrap();
        let t = map.transposed();
        assert_eq!((t.source_i, t.source_j), (1, 0));
        assert!(t.is_known(2, 1));
        assert!(t.row_is_mapped(2) && !t.row_is_mapped(0));
    }
}
