//! Round trip through the on-disk format: writes a synthetic dataset with
//! its JSON spec, loads it back the way the `mmc fit` command does, and
//! fits it.
//!
//! ```text
//! cargo run --release --example dataset_files -- [output-dir]
//! ```

use std::path::PathBuf;

use mmc::data::{generate_synthetic, load_dataset, DatasetSpec, SynthSpec};
use mmc::optimizer::{fit, MmcConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("mmc-dataset-example"));
    let spec_path = generate_synthetic(&SynthSpec {
        n: 80,
        ..SynthSpec::default()
    })?
    .write(&dir)?;
    println!("wrote {}", spec_path.display());

    let spec = DatasetSpec::from_json_file(&spec_path)?;
    let config = MmcConfig::default();
    let loaded = load_dataset(&spec, &dir, &config)?;
    for (s, src) in spec.sources.iter().zip(loaded.problem.sources()) {
        println!("{}: {} instances, {} views", s.name, src.instances(), src.laplacians.len());
    }
    for p in loaded.problem.pairs() {
        let (i, j) = p.sources();
        println!("pair ({i}, {j}): {} known correspondences", p.mapping.known_count());
    }

    let result = fit(&loaded.problem, &config)?;
    for (name, labels) in loaded.names.iter().zip(&result.labels) {
        let sizes = (0..3)
            .map(|g| labels.as_slice().iter().filter(|&&l| l == g).count())
            .collect::<Vec<_>>();
        println!("{name}: cluster sizes {sizes:?}");
    }
    Ok(())
}
