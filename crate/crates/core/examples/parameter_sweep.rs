//! Sweeps the view weight over several orders of magnitude and prints the
//! resulting NMI per source as CSV.
//!
//! ```text
//! cargo run --release --example parameter_sweep -- [alpha|beta|known_fraction]
//! ```

use mmc::cli::{sweep, sweep_csv, SweepParam};
use mmc::data::{generate_synthetic, SynthSpec};
use mmc::optimizer::MmcConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let param = match std::env::args().nth(1).as_deref() {
        None | Some("alpha") => SweepParam::Alpha,
        Some("beta") => SweepParam::Beta,
        Some("known_fraction") => SweepParam::KnownFraction,
        Some(other) => return Err(format!("unknown parameter {other}").into()),
    };
    let values: Vec<f64> = match param {
        SweepParam::KnownFraction => vec![0.2, 0.4, 0.6, 0.8, 1.0],
        _ => (-3..=3).map(|e| 10f64.powi(e)).collect(),
    };
    let spec = SynthSpec {
        n: 100,
        noise: 1.5,
        // the known-fraction sweep subsamples from the full correspondence
        known_fraction: if param == SweepParam::KnownFraction { 1.0 } else { 0.6 },
        ..SynthSpec::default()
    };
    let config = MmcConfig {
        restarts: 10,
        ..MmcConfig::default()
    };
    let loaded = generate_synthetic(&spec)?.to_loaded(&config)?;
    let rows = sweep(&loaded, param, &values, &config)?;
    print!("{}", sweep_csv(&loaded.names, &rows));
    Ok(())
}
