//! Dataset loading and synthetic problem generation.
//!
//! File formats:
//!
//! * matrices: dense text, comma- or whitespace-delimited, no header; the
//!   first line may be a `#` comment;
//! * pairs: one known correspondence `a<TAB>b` per line, 0-based;
//! * labels: one 0-based class id per line;
//! * dataset spec: a JSON [`DatasetSpec`] whose relative paths are resolved
//!   against the directory of the spec file.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::clustering::LabelVector;
use crate::error::{MmcError, Result};
use crate::kernels::{ViewData, ViewKind};
use crate::mapping::build_mapping;
use crate::optimizer::{MmcConfig, MmcProblem, SourcePair, SourceProblem};

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| MmcError::io(path, e))
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> MmcError {
    MmcError::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Parses matrix text. `path` is only used in error messages.
pub fn parse_matrix(text: &str, path: &Path, expected_rows: Option<usize>) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if idx == 0 && line.trim_start().starts_with('#') {
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| parse_error(path, lineno, format!("non-numeric token `{t}`")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(parse_error(
                    path,
                    lineno,
                    format!("expected {} columns, found {}", first.len(), row.len()),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(parse_error(path, 1, "empty matrix"));
    }
    if let Some(n) = expected_rows {
        if rows.len() != n {
            return Err(parse_error(
                path,
                text.lines().count(),
                format!("expected {n} rows, found {}", rows.len()),
            ));
        }
    }
    let cols = rows[0].len();
    Ok(DMatrix::from_fn(rows.len(), cols, |a, b| rows[a][b]))
}

pub fn load_matrix(path: &Path, expected_rows: Option<usize>) -> Result<DMatrix<f64>> {
    parse_matrix(&read_text(path)?, path, expected_rows)
}

/// Comma-separated text using the shortest round-tripping float format.
pub fn format_matrix(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for row in m.row_iter() {
        let mut first = true;
        for v in row.iter() {
            if !first {
                out.push(',');
            }
            first = false;
            write!(out, "{v}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    fs::write(path, format_matrix(m)).map_err(|e| MmcError::output(path, e))
}

pub fn load_pairs(path: &Path) -> Result<Vec<(usize, usize)>> {
    let text = read_text(path)?;
    let mut pairs = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let parse = |t: &str| {
            t.parse::<usize>()
                .map_err(|_| parse_error(path, idx + 1, format!("invalid instance index `{t}`")))
        };
        match fields.as_slice() {
            [a, b] => pairs.push((parse(a)?, parse(b)?)),
            _ => {
                return Err(parse_error(
                    path,
                    idx + 1,
                    format!("expected `a<TAB>b`, found {} fields", fields.len()),
                ))
            }
        }
    }
    Ok(pairs)
}

pub fn format_pairs(pairs: &[(usize, usize)]) -> String {
    pairs.iter().map(|(a, b)| format!("{a}\t{b}\n")).collect()
}

pub fn load_labels(path: &Path, expected: Option<usize>) -> Result<Vec<usize>> {
    let text = read_text(path)?;
    let mut labels = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        labels.push(
            t.parse::<usize>()
                .map_err(|_| parse_error(path, idx + 1, format!("invalid label `{t}`")))?,
        );
    }
    if let Some(n) = expected {
        if labels.len() != n {
            return Err(parse_error(
                path,
                text.lines().count(),
                format!("expected {n} labels, found {}", labels.len()),
            ));
        }
    }
    Ok(labels)
}

pub fn format_labels(labels: &[usize]) -> String {
    labels.iter().map(|l| format!("{l}\n")).collect()
}

/// One view file of a source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewSpec {
    pub path: PathBuf,
    pub kind: ViewKind,
    /// Overrides the configured default view weight.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub name: String,
    pub n_k: usize,
    pub views: Vec<ViewSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels_path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingSpec {
    pub source_a: usize,
    pub source_b: usize,
    pub pairs_path: PathBuf,
    /// Overrides the configured default pair weight.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
}

/// JSON description of a multi-source dataset on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub sources: Vec<SourceSpec>,
    #[serde(default)]
    pub mappings: Vec<MappingSpec>,
    pub cluster_counts: Vec<usize>,
}

impl DatasetSpec {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        serde_json::from_str(&text).map_err(|source| MmcError::Json {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("dataset spec serializes") + "\n"
    }
}

/// A problem ready for [`crate::optimizer::fit`] plus its evaluation data.
#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub problem: MmcProblem,
    pub names: Vec<String>,
    /// Ground truth per source, when available.
    pub truth: Vec<Option<LabelVector>>,
    /// `(source, view, count)` for every similarity view that needed clamping.
    pub clamp_warnings: Vec<(usize, usize, usize)>,
}

/// In-memory form of one source before Laplacians are built.
struct RawSource {
    name: String,
    views: Vec<(ViewData, Option<f64>)>,
    truth: Option<Vec<usize>>,
}

struct RawPair {
    source_a: usize,
    source_b: usize,
    pairs: Vec<(usize, usize)>,
    beta: Option<f64>,
}

fn assemble(
    sources: Vec<RawSource>,
    pairs: Vec<RawPair>,
    cluster_counts: &[usize],
    config: &MmcConfig,
) -> Result<LoadedDataset> {
    if cluster_counts.len() != sources.len() {
        return Err(MmcError::InvalidProblem(format!(
            "{} cluster counts for {} sources",
            cluster_counts.len(),
            sources.len()
        )));
    }
    let mut problems = Vec::with_capacity(sources.len());
    let mut names = Vec::new();
    let mut truth = Vec::new();
    let mut clamp_warnings = Vec::new();
    for (k, raw) in sources.into_iter().enumerate() {
        let mut laplacians = Vec::new();
        let mut alphas = Vec::new();
        for (i, (view, alpha)) in raw.views.iter().enumerate() {
            let (l, clamped) = view
                .laplacian()
                .map_err(|e| e.context(format!("source {k} ({}) view {i}", raw.name)))?;
            if clamped > 0 {
                clamp_warnings.push((k, i, clamped));
            }
            laplacians.push(l);
            alphas.push(alpha.unwrap_or(config.default_alpha));
        }
        let n = laplacians.first().map_or(0, |l| l.dim());
        truth.push(match raw.truth {
            Some(t) => Some(LabelVector::from_raw(t)),
            None => None,
        });
        if let Some(Some(t)) = truth.last() {
            if t.len() != n {
                return Err(MmcError::InvalidProblem(format!(
                    "source {} has {n} instances but {} labels",
                    raw.name,
                    t.len()
                )));
            }
        }
        problems.push(SourceProblem {
            name: raw.name.clone(),
            laplacians,
            alphas,
            clusters: cluster_counts[k],
        });
        names.push(raw.name);
    }
    let mut source_pairs = Vec::new();
    for p in pairs {
        let n_of = |k: usize| -> Result<usize> {
            problems.get(k).map(|s| s.instances()).ok_or(MmcError::OutOfRange {
                what: "sources",
                index: k,
                len: problems.len(),
            })
        };
        let mapping = build_mapping(p.source_a, p.source_b, n_of(p.source_a)?, n_of(p.source_b)?, &p.pairs)
            .map_err(|e| e.context(format!("mapping ({}, {})", p.source_a, p.source_b)))?;
        source_pairs.push(SourcePair {
            mapping,
            beta: p.beta.unwrap_or(config.default_beta),
        });
    }
    Ok(LoadedDataset {
        problem: MmcProblem::new(problems, source_pairs)?,
        names,
        truth,
        clamp_warnings,
    })
}

/// Loads every file referenced by `spec`; relative paths are resolved against `base_dir`.
pub fn load_dataset(spec: &DatasetSpec, base_dir: &Path, config: &MmcConfig) -> Result<LoadedDataset> {
    let resolve = |p: &Path| {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base_dir.join(p)
        }
    };
    let mut sources = Vec::new();
    for (k, s) in spec.sources.iter().enumerate() {
        if s.views.is_empty() {
            return Err(MmcError::InvalidProblem(format!("source {} has no views", s.name)));
        }
        let mut views = Vec::new();
        for (i, v) in s.views.iter().enumerate() {
            let matrix = load_matrix(&resolve(&v.path), Some(s.n_k))?;
            if v.kind == ViewKind::Similarity && matrix.ncols() != s.n_k {
                return Err(parse_error(
                    &resolve(&v.path),
                    1,
                    format!("similarity view must be {0}x{0}, found {0}x{1}", s.n_k, matrix.ncols()),
                ));
            }
            views.push((
                ViewData {
                    kind: v.kind,
                    matrix,
                    source_index: k,
                    view_index: i,
                },
                v.alpha,
            ));
        }
        let truth = match &s.labels_path {
            Some(p) => Some(load_labels(&resolve(p), Some(s.n_k))?),
            None => None,
        };
        sources.push(RawSource {
            name: s.name.clone(),
            views,
            truth,
        });
    }
    let pairs = spec
        .mappings
        .iter()
        .map(|m| {
            Ok(RawPair {
                source_a: m.source_a,
                source_b: m.source_b,
                pairs: load_pairs(&resolve(&m.pairs_path))?,
                beta: m.beta,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    assemble(sources, pairs, &spec.cluster_counts, config)
}

/// Parameters of the synthetic multi-source generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub sources: usize,
    pub views: usize,
    pub n: usize,
    pub clusters: usize,
    pub dim: usize,
    /// Scale of the cluster centers.
    pub separation: f64,
    /// Standard deviation of the per-instance noise.
    pub noise: f64,
    /// Fraction of the shared instances whose correspondence is revealed.
    pub known_fraction: f64,
    /// Fraction of each source's instances that exist in every source.
    pub overlap_fraction: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            sources: 2,
            views: 2,
            n: 200,
            clusters: 3,
            dim: 10,
            separation: 1.0,
            noise: 1.0,
            known_fraction: 0.6,
            overlap_fraction: 1.0,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        serde_json::from_str(&text).map_err(|source| MmcError::Json {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(MmcError::InvalidConfig(m));
        if self.sources == 0 || self.views == 0 || self.dim == 0 {
            return bad("sources, views and dim must be >= 1".into());
        }
        if self.clusters == 0 || self.clusters > self.n {
            return bad(format!("clusters must be in 1..={}, got {}", self.n, self.clusters));
        }
        for (name, f) in [
            ("known_fraction", self.known_fraction),
            ("overlap_fraction", self.overlap_fraction),
        ] {
            if !(0.0..=1.0).contains(&f) {
                return bad(format!("{name} must lie in [0, 1], got {f}"));
            }
        }
        if !(self.noise >= 0.0 && self.separation >= 0.0) {
            return bad("noise and separation must be non-negative".into());
        }
        Ok(())
    }

    /// Number of instances present in every source.
    pub fn shared_count(&self) -> usize {
        floor_fraction(self.overlap_fraction, self.n)
    }

    /// Number of revealed correspondences per source pair.
    pub fn known_count(&self) -> usize {
        floor_fraction(self.known_fraction, self.shared_count())
    }
}

/// `⌊f·m⌋`, robust to `f·m` landing a hair below an integer.
pub(crate) fn floor_fraction(f: f64, m: usize) -> usize {
    ((f * m as f64) + 1e-9).floor() as usize
}

/// Correspondences between two sources.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSet {
    pub source_a: usize,
    pub source_b: usize,
    pub pairs: Vec<(usize, usize)>,
}

/// A generated problem held in memory.
#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub spec: SynthSpec,
    /// `features[k][i]` is the `n × dim` feature matrix of view `i` in source `k`.
    pub features: Vec<Vec<DMatrix<f64>>>,
    pub labels: Vec<LabelVector>,
    /// Every genuine correspondence, per source pair `a < b`.
    pub true_pairs: Vec<PairSet>,
    /// The revealed subset of `true_pairs`.
    pub known_pairs: Vec<PairSet>,
}

/// Draws a synthetic multi-source multi-view problem.
///
/// Each source holds `n` instances, of which `⌊overlap·n⌋` are shared with
/// every other source. Every entity has one cluster id used in all views and
/// sources. A view draws its own cluster centers and adds isotropic Gaussian
/// noise to each instance.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<SynthDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let shared = spec.shared_count();
    let private = spec.n - shared;
    let entities = shared + spec.sources * private;
    let mut entity_cluster: Vec<usize> = (0..entities).map(|e| e % spec.clusters).collect();
    entity_cluster.shuffle(&mut rng);

    // row r of source k holds entity row_entity[k][r]
    let mut row_entity = Vec::with_capacity(spec.sources);
    for k in 0..spec.sources {
        let mut ents: Vec<usize> = (0..shared)
            .chain((0..private).map(|p| shared + k * private + p))
            .collect();
        ents.shuffle(&mut rng);
        row_entity.push(ents);
    }

    let gauss = |rng: &mut ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };
    let mut features = Vec::with_capacity(spec.sources);
    for rows in &row_entity {
        let mut views = Vec::with_capacity(spec.views);
        for _ in 0..spec.views {
            let centers = DMatrix::from_fn(spec.clusters, spec.dim, |_, _| spec.separation * gauss(&mut rng));
            let mut x = DMatrix::zeros(spec.n, spec.dim);
            for (r, &e) in rows.iter().enumerate() {
                let c = entity_cluster[e];
                for d in 0..spec.dim {
                    x[(r, d)] = centers[(c, d)] + spec.noise * gauss(&mut rng);
                }
            }
            views.push(x);
        }
        features.push(views);
    }

    let labels = row_entity
        .iter()
        .map(|rows| LabelVector::new(rows.iter().map(|&e| entity_cluster[e]).collect(), spec.clusters))
        .collect::<Result<Vec<_>>>()?;

    let mut true_pairs = Vec::new();
    let mut known_pairs = Vec::new();
    let known = spec.known_count();
    for a in 0..spec.sources {
        for b in (a + 1)..spec.sources {
            let mut row_of_b = vec![usize::MAX; shared];
            for (r, &e) in row_entity[b].iter().enumerate() {
                if e < shared {
                    row_of_b[e] = r;
                }
            }
            let mut pairs: Vec<(usize, usize)> = row_entity[a]
                .iter()
                .enumerate()
                .filter(|(_, &e)| e < shared)
                .map(|(r, &e)| (r, row_of_b[e]))
                .collect();
            let mut revealed: Vec<(usize, usize)> =
                pairs.choose_multiple(&mut rng, known).copied().collect();
            revealed.sort_unstable();
            pairs.sort_unstable();
            true_pairs.push(PairSet {
                source_a: a,
                source_b: b,
                pairs,
            });
            known_pairs.push(PairSet {
                source_a: a,
                source_b: b,
                pairs: revealed,
            });
        }
    }

    Ok(SynthDataset {
        spec: spec.clone(),
        features,
        labels,
        true_pairs,
        known_pairs,
    })
}

impl SynthDataset {
    pub fn source_name(k: usize) -> String {
        format!("source{k}")
    }

    /// The dataset spec describing the files written by [`SynthDataset::write`].
    pub fn dataset_spec(&self) -> DatasetSpec {
        let sources = (0..self.spec.sources)
            .map(|k| {
                let name = Self::source_name(k);
                SourceSpec {
                    views: (0..self.spec.views)
                        .map(|i| ViewSpec {
                            path: PathBuf::from(format!("{name}_view{i}.csv")),
                            kind: ViewKind::Features,
                            alpha: None,
                        })
                        .collect(),
                    labels_path: Some(PathBuf::from(format!("{name}_truth.labels"))),
                    n_k: self.spec.n,
                    name,
                }
            })
            .collect();
        let mappings = self
            .known_pairs
            .iter()
            .map(|p| MappingSpec {
                source_a: p.source_a,
                source_b: p.source_b,
                pairs_path: PathBuf::from(format!("pairs_{}_{}.tsv", p.source_a, p.source_b)),
                beta: None,
            })
            .collect();
        DatasetSpec {
            sources,
            mappings,
            cluster_counts: vec![self.spec.clusters; self.spec.sources],
        }
    }

    /// Builds the problem directly from memory, without touching the filesystem.
    pub fn to_loaded(&self, config: &MmcConfig) -> Result<LoadedDataset> {
        self.to_loaded_with_pairs(&self.known_pairs, config)
    }

    /// Same as [`SynthDataset::to_loaded`] but with a caller-chosen set of known pairs.
    pub fn to_loaded_with_pairs(&self, known: &[PairSet], config: &MmcConfig) -> Result<LoadedDataset> {
        let sources = self
            .features
            .iter()
            .enumerate()
            .map(|(k, views)| RawSource {
                name: Self::source_name(k),
                views: views
                    .iter()
                    .enumerate()
                    .map(|(i, x)| {
                        (
                            ViewData {
                                kind: ViewKind::Features,
                                matrix: x.clone(),
                                source_index: k,
                                view_index: i,
                            },
                            None,
                        )
                    })
                    .collect(),
                truth: Some(self.labels[k].as_slice().to_vec()),
            })
            .collect();
        let pairs = known
            .iter()
            .map(|p| RawPair {
                source_a: p.source_a,
                source_b: p.source_b,
                pairs: p.pairs.clone(),
                beta: None,
            })
            .collect();
        assemble(sources, pairs, &vec![self.spec.clusters; self.spec.sources], config)
    }

    /// Writes matrices, pairs, labels, the full true mapping and `dataset.json`
    /// into `out_dir`. Returns the path of the dataset spec.
    pub fn write(&self, out_dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(out_dir).map_err(|e| MmcError::output(out_dir, e))?;
        let spec = self.dataset_spec();
        let put = |name: &Path, text: String| {
            let path = out_dir.join(name);
            fs::write(&path, text).map_err(|e| MmcError::output(&path, e))
        };
        for (k, source) in spec.sources.iter().enumerate() {
            for (i, view) in source.views.iter().enumerate() {
                put(&view.path, format_matrix(&self.features[k][i]))?;
            }
            if let Some(p) = &source.labels_path {
                put(p, format_labels(self.labels[k].as_slice()))?;
            }
        }
        for (m, known) in spec.mappings.iter().zip(&self.known_pairs) {
            put(&m.pairs_path, format_pairs(&known.pairs))?;
        }
        for t in &self.true_pairs {
            put(
                Path::new(&format!("true_pairs_{}_{}.tsv", t.source_a, t.source_b)),
                format_pairs(&t.pairs),
            )?;
        }
        let spec_path = out_dir.join("dataset.json");
        fs::write(&spec_path, spec.to_json()).map_err(|e| MmcError::output(&spec_path, e))?;
        Ok(spec_path)
    }
}
