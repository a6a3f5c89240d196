//! Alternating maximization of the multi-source multi-view objective.
//!
//! For sources `k = 1..K` with views `i = 1..v_k`, the objective is
//!
//! ```text
//! O = Σ_k Σ_i [ tr(U_iᵀ L_i U_i) + α_i tr(U_i U_iᵀ U*_k U*_kᵀ) ]
//!   + Σ_{pairs i<j} β_ij tr(U*_j U*_jᵀ M_ijᵀ U*_i U*_iᵀ M_ij)
//! ```
//!
//! Every block update (one view factor, or one consensus factor with the
//! others fixed) is a trace maximization over orthonormal matrices, solved
//! exactly by the top eigenvectors of a modified Laplacian. The inner loop
//! therefore never decreases `O`. Between inner loops the unknown part of each
//! mapping is re-estimated from the consensus factors.

use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::{assign_clusters, ClusterOptions, LabelVector};
use crate::error::{MmcError, Result};
use crate::linalg::{top_eigvecs, OrthonormalFactor, SymmetricMatrix};
use crate::mapping::{init_unknown_block, mapping_delta, update_mapping, BlockInit, MappingState};

/// Views of one source, all over the same `n_k` instances.
#[derive(Debug, Clone)]
pub struct SourceProblem {
    pub name: String,
    pub laplacians: Vec<SymmetricMatrix>,
    /// One weight per view.
    pub alphas: Vec<f64>,
    pub clusters: usize,
}

impl SourceProblem {
    pub fn instances(&self) -> usize {
        self.laplacians.first().map_or(0, SymmetricMatrix::dim)
    }
}

/// The mapping between two sources and the weight of their coupling.
#[derive(Debug, Clone)]
pub struct SourcePair {
    /// Rows index `mapping.source_i`, columns `mapping.source_j`, with `source_i < source_j`.
    pub mapping: MappingState,
    pub beta: f64,
}

impl SourcePair {
    pub fn sources(&self) -> (usize, usize) {
        (self.mapping.source_i, self.mapping.source_j)
    }
}

/// A validated multi-source instance.
#[derive(Debug, Clone)]
pub struct MmcProblem {
    sources: Vec<SourceProblem>,
    pairs: Vec<SourcePair>,
}

fn check_weight(w: f64, what: &str) -> Result<()> {
    if !(w.is_finite() && w >= 0.0) {
        return Err(MmcError::InvalidProblem(format!(
            "{what} must be finite and non-negative, got {w}"
        )));
    }
    Ok(())
}

impl MmcProblem {
    /// Validates shapes and weights. Pairs given as `(j, i)` with `j > i` are
    /// stored transposed so each unordered pair has a single canonical state.
    pub fn new(sources: Vec<SourceProblem>, pairs: Vec<SourcePair>) -> Result<Self> {
        if sources.is_empty() {
            return Err(MmcError::InvalidProblem("at least one source is required".into()));
        }
        for (k, s) in sources.iter().enumerate() {
            if s.laplacians.is_empty() {
                return Err(MmcError::InvalidProblem(format!("source {k} has no views")));
            }
            if s.alphas.len() != s.laplacians.len() {
                return Err(MmcError::InvalidProblem(format!(
                    "source {k} has {} views but {} view weights",
                    s.laplacians.len(),
                    s.alphas.len()
                )));
            }
            let n = s.instances();
            if let Some(i) = s.laplacians.iter().position(|l| l.dim() != n) {
                return Err(MmcError::InvalidProblem(format!(
                    "source {k} view {i} has {} instances, expected {n}",
                    s.laplacians[i].dim()
                )));
            }
            if s.clusters == 0 || s.clusters > n {
                return Err(MmcError::InvalidProblem(format!(
                    "source {k}: cluster count {} outside 1..={n}",
                    s.clusters
                )));
            }
            for a in &s.alphas {
                check_weight(*a, "view weight")?;
            }
        }
        let mut canonical: Vec<SourcePair> = Vec::with_capacity(pairs.len());
        for p in pairs {
            check_weight(p.beta, "pair weight")?;
            let (i, j) = p.sources();
            if i == j || i >= sources.len() || j >= sources.len() {
                return Err(MmcError::InvalidProblem(format!(
                    "invalid source pair ({i}, {j}) for {} sources",
                    sources.len()
                )));
            }
            let mapping = if i < j { p.mapping } else { p.mapping.transposed() };
            let (i, j) = (mapping.source_i, mapping.source_j);
            if mapping.nrows() != sources[i].instances() || mapping.ncols() != sources[j].instances()
            {
                return Err(MmcError::InvalidProblem(format!(
                    "mapping ({i}, {j}) is {}x{}, sources have {} and {} instances",
                    mapping.nrows(),
                    mapping.ncols(),
                    sources[i].instances(),
                    sources[j].instances()
                )));
            }
            if canonical.iter().any(|q| q.sources() == (i, j)) {
                return Err(MmcError::InvalidProblem(format!(
                    "source pair ({i}, {j}) given twice"
                )));
            }
            canonical.push(SourcePair {
                mapping,
                beta: p.beta,
            });
        }
        canonical.sort_by_key(|p| p.sources());
        Ok(MmcProblem {
            sources,
            pairs: canonical,
        })
    }

    pub fn sources(&self) -> &[SourceProblem] {
        &self.sources
    }

    pub fn pairs(&self) -> &[SourcePair] {
        &self.pairs
    }

    pub fn set_all_alphas(&mut self, alpha: f64) -> Result<()> {
        check_weight(alpha, "view weight")?;
        for s in &mut self.sources {
            s.alphas.iter_mut().for_each(|a| *a = alpha);
        }
        Ok(())
    }

    pub fn set_all_betas(&mut self, beta: f64) -> Result<()> {
        check_weight(beta, "pair weight")?;
        self.pairs.iter_mut().for_each(|p| p.beta = beta);
        Ok(())
    }

    /// Replaces the mapping of an existing pair (same shape and orientation).
    pub fn set_mapping(&mut self, mapping: MappingState) -> Result<()> {
        let key = (mapping.source_i, mapping.source_j);
        let pair = self
            .pairs
            .iter_mut()
            .find(|p| p.sources() == key)
            .ok_or_else(|| MmcError::InvalidProblem(format!("no source pair {key:?}")))?;
        if pair.mapping.nrows() != mapping.nrows() || pair.mapping.ncols() != mapping.ncols() {
            return Err(MmcError::Dimension("replacement mapping has a different shape".into()));
        }
        pair.mapping = mapping;
        Ok(())
    }

    /// Problem restricted to a subset of sources (ascending), keeping pairs
    /// with both ends inside. Source indices are renumbered.
    pub fn subproblem(&self, sources: &[usize]) -> Result<MmcProblem> {
        let position = |k: usize| sources.iter().position(|&s| s == k);
        let subs = sources.iter().map(|&k| self.sources[k].clone()).collect();
        let pairs = self
            .pairs
            .iter()
            .filter_map(|p| {
                let (i, j) = p.sources();
                let (ni, nj) = (position(i)?, position(j)?);
                let mut mapping = p.mapping.clone();
                mapping.source_i = ni;
                mapping.source_j = nj;
                Some(SourcePair {
                    mapping,
                    beta: p.beta,
                })
            })
            .collect();
        MmcProblem::new(subs, pairs)
    }
}

/// Solver settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmcConfig {
    pub default_alpha: f64,
    pub default_beta: f64,
    pub inner_tol: f64,
    pub outer_tol: f64,
    pub max_inner: usize,
    pub max_outer: usize,
    pub seed: u64,
    pub row_normalize: bool,
    pub restarts: usize,
}

impl Default for MmcConfig {
    fn default() -> Self {
        MmcConfig {
            default_alpha: 0.1,
            default_beta: 1.0,
            inner_tol: 1e-6,
            outer_tol: 1e-4,
            max_inner: 100,
            max_outer: 50,
            seed: 0,
            row_normalize: true,
            restarts: 20,
        }
    }
}

impl MmcConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(MmcError::InvalidConfig(m));
        if !(self.inner_tol > 0.0) || !(self.outer_tol > 0.0) {
            return bad(format!(
                "tolerances must be > 0 (inner {}, outer {})",
                self.inner_tol, self.outer_tol
            ));
        }
        if self.max_inner == 0 || self.max_outer == 0 || self.restarts == 0 {
            return bad("iteration caps and restarts must be >= 1".into());
        }
        if !(self.default_alpha.is_finite() && self.default_alpha >= 0.0)
            || !(self.default_beta.is_finite() && self.default_beta >= 0.0)
        {
            return bad("default weights must be finite and non-negative".into());
        }
        Ok(())
    }

    pub fn cluster_options(&self) -> ClusterOptions {
        ClusterOptions {
            row_normalize: self.row_normalize,
            restarts: self.restarts,
            seed: self.seed,
        }
    }
}

/// One recorded objective value. `inner == 0` marks the value at the start of
/// an outer iteration (after initialization, or after a mapping update).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub outer: usize,
    pub inner: usize,
    pub objective: f64,
}

/// Mutable optimization state of a problem.
#[derive(Debug, Clone)]
pub struct MmcState {
    pub view_factors: Vec<Vec<OrthonormalFactor>>,
    pub consensus: Vec<OrthonormalFactor>,
    /// Parallel to [`MmcProblem::pairs`].
    pub mappings: Vec<MappingState>,
}

/// Top eigenvectors of the view Laplacian.
pub fn init_view_factor(l: &SymmetricMatrix, c: usize) -> Result<OrthonormalFactor> {
    Ok(top_eigvecs(l, c)?.0)
}

fn weighted_projector_sum(factors: &[OrthonormalFactor], alphas: &[f64], n: usize) -> DMatrix<f64> {
    let mut sum = DMatrix::zeros(n, n);
    for (u, &a) in factors.iter().zip(alphas) {
        if a != 0.0 {
            sum.gemm(a, u.values(), &u.values().transpose(), 1.0);
        }
    }
    sum
}

/// Top eigenvectors of `Σ_i α_i U_i U_iᵀ`.
pub fn init_consensus(
    factors: &[OrthonormalFactor],
    alphas: &[f64],
    c: usize,
) -> Result<OrthonormalFactor> {
    let n = factors
        .first()
        .map(OrthonormalFactor::nrows)
        .ok_or_else(|| MmcError::InvalidProblem("consensus needs at least one view".into()))?;
    if factors.len() != alphas.len() {
        return Err(MmcError::Dimension("one weight per view factor expected".into()));
    }
    if factors.iter().any(|u| u.nrows() != n) {
        return Err(MmcError::Dimension("view factors differ in row count".into()));
    }
    if alphas.iter().all(|&a| a == 0.0) {
        return Err(MmcError::ZeroWeights { source_index: 0 });
    }
    let sum = weighted_projector_sum(factors, alphas, n);
    Ok(top_eigvecs(&SymmetricMatrix::new(sum)?, c)?.0)
}

/// Top eigenvectors of `L + α U* U*ᵀ`.
pub fn update_view_factor(
    l: &SymmetricMatrix,
    alpha: f64,
    consensus: &OrthonormalFactor,
    c: usize,
) -> Result<OrthonormalFactor> {
    if consensus.nrows() != l.dim() {
        return Err(MmcError::Dimension(format!(
            "Laplacian is {0}x{0}, consensus has {1} rows",
            l.dim(),
            consensus.nrows()
        )));
    }
    if alpha == 0.0 {
        return init_view_factor(l, c);
    }
    let mut modified = l.values().clone();
    modified.gemm(alpha, consensus.values(), &consensus.values().transpose(), 1.0);
    Ok(top_eigvecs(&SymmetricMatrix::new(modified)?, c)?.0)
}

/// The modified Laplacian whose top eigenvectors give the consensus of source `k`:
/// `Σ_i α_i U_i U_iᵀ + Σ_{j≠k} β_kj M_kj U*_j U*_jᵀ M_kjᵀ`.
pub fn consensus_laplacian(problem: &MmcProblem, state: &MmcState, k: usize) -> Result<SymmetricMatrix> {
    let source = &problem.sources[k];
    let n = source.instances();
    let mut sum = weighted_projector_sum(&state.view_factors[k], &source.alphas, n);
    for (pair, mapping) in problem.pairs.iter().zip(&state.mappings) {
        if pair.beta == 0.0 {
            continue;
        }
        let (i, j) = pair.sources();
        // bridge = M U*_other, projected into source k's instances
        let bridge = if i == k {
            mapping.mapping() * state.consensus[j].values()
        } else if j == k {
            mapping.mapping().transpose() * state.consensus[i].values()
        } else {
            continue;
        };
        sum.gemm(pair.beta, &bridge, &bridge.transpose(), 1.0);
    }
    SymmetricMatrix::new(sum)
}

/// Top eigenvectors of [`consensus_laplacian`].
pub fn update_consensus(problem: &MmcProblem, state: &MmcState, k: usize) -> Result<OrthonormalFactor> {
    let l = consensus_laplacian(problem, state, k)?;
    Ok(top_eigvecs(&l, problem.sources[k].clusters)?.0)
}

/// Per-source objective `J_k`.
pub fn source_objective(problem: &MmcProblem, state: &MmcState, k: usize) -> f64 {
    let source = &problem.sources[k];
    source
        .laplacians
        .iter()
        .zip(&source.alphas)
        .zip(&state.view_factors[k])
        .map(|((l, &a), u)| u.rayleigh_trace(l) + a * u.alignment(&state.consensus[k]))
        .sum()
}

/// Cross-source agreement `tr(U*_j U*_jᵀ Mᵀ U*_i U*_iᵀ M) = ‖U*_iᵀ M U*_j‖_F²`.
pub fn cross_agreement(mapping: &MappingState, ui: &OrthonormalFactor, uj: &OrthonormalFactor) -> f64 {
    (ui.values().transpose() * mapping.mapping() * uj.values()).norm_squared()
}

/// Full objective `O`.
pub fn objective(problem: &MmcProblem, state: &MmcState) -> f64 {
    let within: f64 = (0..problem.sources.len())
        .map(|k| source_objective(problem, state, k))
        .sum();
    let across: f64 = problem
        .pairs
        .iter()
        .zip(&state.mappings)
        .filter(|(p, _)| p.beta != 0.0)
        .map(|(p, m)| {
            let (i, j) = p.sources();
            p.beta * cross_agreement(m, &state.consensus[i], &state.consensus[j])
        })
        .sum();
    within + across
}

/// Bookkeeping for one independently optimized group of coupled sources.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentRun {
    /// Source indices of the original problem, ascending.
    pub sources: Vec<usize>,
    pub trace: Vec<TracePoint>,
    pub outer_iters: usize,
    /// Inner sweeps performed in each outer iteration.
    pub inner_iters: Vec<usize>,
    /// Largest mapping change after each outer iteration.
    pub mapping_deltas: Vec<f64>,
    pub converged: bool,
    /// Outer iterations whose inner loop stopped at `max_inner`.
    pub inner_cap_hits: usize,
}

/// Outcome of [`fit`].
#[derive(Debug, Clone)]
pub struct MmcResult {
    pub consensus: Vec<OrthonormalFactor>,
    pub view_factors: Vec<Vec<OrthonormalFactor>>,
    pub labels: Vec<LabelVector>,
    pub inertias: Vec<f64>,
    /// Final mappings, parallel to [`MmcProblem::pairs`].
    pub mappings: Vec<MappingState>,
    pub block_inits: Vec<BlockInit>,
    pub components: Vec<ComponentRun>,
    pub mapping_updates: usize,
    /// Mapping updates that altered a known entry. Always zero unless something is broken.
    pub known_mapping_violations: usize,
    pub wall_time: Duration,
}

impl MmcResult {
    pub fn outer_iters(&self) -> usize {
        self.components.iter().map(|c| c.outer_iters).max().unwrap_or(0)
    }

    pub fn total_inner_iters(&self) -> usize {
        self.components.iter().flat_map(|c| &c.inner_iters).sum()
    }

    pub fn converged(&self) -> bool {
        self.components.iter().all(|c| c.converged)
    }

    /// Component containing source `k`.
    pub fn component_of(&self, k: usize) -> Option<&ComponentRun> {
        self.components.iter().find(|c| c.sources.contains(&k))
    }
}

/// Groups sources linked by pairs with positive weight. Components are
/// ordered by their smallest source index.
pub fn coupled_components(problem: &MmcProblem) -> Vec<Vec<usize>> {
    let n = problem.sources.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while parent[r] != r {
            r = parent[r];
        }
        parent[x] = r;
        r
    }
    for p in problem.pairs.iter().filter(|p| p.beta > 0.0) {
        let (a, b) = p.sources();
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for k in 0..n {
        let root = find(&mut parent, k);
        match groups.iter_mut().find(|g| g[0] == root) {
            Some(g) => g.push(k),
            None => groups.push(vec![k]),
        }
    }
    groups
}

fn initial_state(problem: &MmcProblem) -> Result<MmcState> {
    let view_factors = problem
        .sources
        .par_iter()
        .enumerate()
        .map(|(k, s)| {
            s.laplacians
                .iter()
                .enumerate()
                .map(|(i, l)| {
                    init_view_factor(l, s.clusters)
                        .map_err(|e| e.context(format!("initializing source {k} view {i}")))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let consensus = problem
        .sources
        .iter()
        .zip(&view_factors)
        .enumerate()
        .map(|(k, (s, f))| {
            init_consensus(f, &s.alphas, s.clusters).map_err(|e| match e {
                MmcError::ZeroWeights { .. } => MmcError::ZeroWeights { source_index: k },
                e => e.context(format!("initializing consensus of source {k}")),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MmcState {
        view_factors,
        consensus,
        mappings: problem.pairs.iter().map(|p| p.mapping.clone()).collect(),
    })
}

fn sweep(problem: &MmcProblem, state: &mut MmcState, outer: usize) -> Result<()> {
    // view factors are independent of each other given the consensus
    let consensus = &state.consensus;
    state.view_factors = problem
        .sources
        .par_iter()
        .enumerate()
        .map(|(k, s)| {
            s.laplacians
                .iter()
                .zip(&s.alphas)
                .enumerate()
                .map(|(i, (l, &a))| {
                    update_view_factor(l, a, &consensus[k], s.clusters).map_err(|e| {
                        e.context(format!("outer iteration {outer}: source {k} view {i}"))
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    for k in 0..problem.sources.len() {
        let next = update_consensus(problem, state, k)
            .map_err(|e| e.context(format!("outer iteration {outer}: consensus of source {k}")))?;
        state.consensus[k] = next;
    }
    Ok(())
}

struct MappingUpdate {
    max_delta: f64,
    violations: usize,
}

fn update_all_mappings(problem: &MmcProblem, state: &mut MmcState) -> Result<MappingUpdate> {
    let mut max_delta = 0.0f64;
    let mut violations = 0;
    for (p, mapping) in problem.pairs.iter().zip(state.mappings.iter_mut()) {
        let (i, j) = p.sources();
        let next = update_mapping(mapping, &state.consensus[i], &state.consensus[j])?;
        if !mapping.known_entries_identical(&next) {
            violations += 1;
        }
        max_delta = max_delta.max(mapping_delta(mapping, &next)?);
        *mapping = next;
    }
    Ok(MappingUpdate {
        max_delta,
        violations,
    })
}

fn relative_change(prev: f64, next: f64) -> f64 {
    (next - prev).abs() / prev.abs().max(1.0)
}

struct ComponentOutcome {
    state: MmcState,
    run: ComponentRun,
    block_inits: Vec<BlockInit>,
    mapping_updates: usize,
    violations: usize,
}

fn fit_component(problem: &MmcProblem, config: &MmcConfig) -> Result<ComponentOutcome> {
    let mut state = initial_state(problem)?;
    let mut block_inits = Vec::with_capacity(problem.pairs.len());
    for (idx, p) in problem.pairs.iter().enumerate() {
        let (i, j) = p.sources();
        let (next, how) = init_unknown_block(&state.mappings[idx], &state.consensus[i], &state.consensus[j])
            .map_err(|e| e.context(format!("initializing mapping ({i}, {j})")))?;
        state.mappings[idx] = next;
        block_inits.push(how);
    }

    let mut run = ComponentRun {
        sources: Vec::new(),
        trace: Vec::new(),
        outer_iters: 0,
        inner_iters: Vec::new(),
        mapping_deltas: Vec::new(),
        converged: false,
        inner_cap_hits: 0,
    };
    let mut mapping_updates = 0;
    let mut violations = 0;
    for outer in 1..=config.max_outer {
        let mut current = objective(problem, &state);
        run.trace.push(TracePoint {
            outer,
            inner: 0,
            objective: current,
        });
        let mut sweeps = 0;
        let mut inner_converged = false;
        for inner in 1..=config.max_inner {
            sweep(problem, &mut state, outer)?;
            let next = objective(problem, &state);
            if !next.is_finite() {
                return Err(MmcError::NonFinite("objective")
                    .context(format!("outer iteration {outer}, inner iteration {inner}")));
            }
            run.trace.push(TracePoint {
                outer,
                inner,
                objective: next,
            });
            sweeps = inner;
            let change = relative_change(current, next);
            current = next;
            if change < config.inner_tol {
                inner_converged = true;
                break;
            }
        }
        if !inner_converged {
            run.inner_cap_hits += 1;
        }
        run.inner_iters.push(sweeps);
        run.outer_iters = outer;

        let update = update_all_mappings(problem, &mut state)
            .map_err(|e| e.context(format!("outer iteration {outer}: mapping update")))?;
        mapping_updates += problem.pairs.len();
        violations += update.violations;
        run.mapping_deltas.push(update.max_delta);
        if update.max_delta < config.outer_tol {
            run.converged = true;
            break;
        }
    }
    if !run.converged {
        log::warn!(
            "outer loop stopped at max_outer = {} without mapping convergence",
            config.max_outer
        );
    }
    Ok(ComponentOutcome {
        state,
        run,
        block_inits,
        mapping_updates,
        violations,
    })
}

/// Runs the full alternating optimization and labels every source.
///
/// Sources connected only through zero-weight pairs are optimized
/// independently, so a zero-weight coupling never changes a source's result.
/// Mappings across such pairs are still inferred afterwards from the final
/// consensus factors.
pub fn fit(problem: &MmcProblem, config: &MmcConfig) -> Result<MmcResult> {
    config.validate()?;
    let start = Instant::now();
    let k_total = problem.sources.len();
    let mut consensus: Vec<Option<OrthonormalFactor>> = vec![None; k_total];
    let mut view_factors: Vec<Vec<OrthonormalFactor>> = vec![Vec::new(); k_total];
    let mut mappings: Vec<Option<MappingState>> = vec![None; problem.pairs.len()];
    let mut block_inits: Vec<Option<BlockInit>> = vec![None; problem.pairs.len()];
    let mut components = Vec::new();
    let mut mapping_updates = 0;
    let mut violations = 0;

    for group in coupled_components(problem) {
        let sub = problem.subproblem(&group)?;
        let outcome = fit_component(&sub, config)?;
        for (local, &k) in group.iter().enumerate() {
            consensus[k] = Some(outcome.state.consensus[local].clone());
            view_factors[k] = outcome.state.view_factors[local].clone();
        }
        for (local_pair, m) in sub.pairs.iter().zip(outcome.state.mappings) {
            let (li, lj) = local_pair.sources();
            let key = (group[li], group[lj]);
            let idx = problem
                .pairs
                .iter()
                .position(|p| p.sources() == key)
                .expect("subproblem pairs come from the parent problem");
            let mut m = m;
            m.source_i = key.0;
            m.source_j = key.1;
            mappings[idx] = Some(m);
        }
        for (local_pair, how) in sub.pairs.iter().zip(outcome.block_inits) {
            let (li, lj) = local_pair.sources();
            let key = (group[li], group[lj]);
            let idx = problem.pairs.iter().position(|p| p.sources() == key).unwrap();
            block_inits[idx] = Some(how);
        }
        mapping_updates += outcome.mapping_updates;
        violations += outcome.violations;
        let mut run = outcome.run;
        run.sources = group;
        components.push(run);
    }
    let consensus: Vec<OrthonormalFactor> = consensus.into_iter().map(|c| c.unwrap()).collect();

    // zero-weight pairs between components: infer the mapping from the final factors
    for (idx, p) in problem.pairs.iter().enumerate() {
        if mappings[idx].is_some() {
            continue;
        }
        let (i, j) = p.sources();
        let (mut m, how) = init_unknown_block(&p.mapping, &consensus[i], &consensus[j])?;
        block_inits[idx] = Some(how);
        for _ in 0..config.max_outer {
            let next = update_mapping(&m, &consensus[i], &consensus[j])?;
            mapping_updates += 1;
            if !m.known_entries_identical(&next) {
                violations += 1;
            }
            let delta = mapping_delta(&m, &next)?;
            m = next;
            if delta < config.outer_tol {
                break;
            }
        }
        mappings[idx] = Some(m);
    }

    let options = config.cluster_options();
    let clustered = consensus
        .iter()
        .zip(&problem.sources)
        .enumerate()
        .map(|(k, (u, s))| {
            assign_clusters(u, s.clusters, &options)
                .map_err(|e| e.context(format!("clustering source {k}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let (labels, inertias) = clustered.into_iter().map(|r| (r.labels, r.inertia)).unzip();

    Ok(MmcResult {
        consensus,
        view_factors,
        labels,
        inertias,
        mappings: mappings.into_iter().map(Option::unwrap).collect(),
        block_inits: block_inits.into_iter().map(Option::unwrap).collect(),
        components,
        mapping_updates,
        known_mapping_violations: violations,
        wall_time: start.elapsed(),
    })
}
