//! Infers the unknown part of a cross-source mapping from cluster structure.
//!
//! Two sources of six instances each share three classes. Only one instance
//! per class is linked across sources; similarity transfers through those
//! links to the unlinked instances.

use mmc::linalg::OrthonormalFactor;
use mmc::mapping::{build_mapping, init_unknown_block, update_mapping};
use nalgebra::DMatrix;

/// Orthonormal class indicators.
fn indicators(classes: &[usize], c: usize) -> Result<OrthonormalFactor, mmc::error::MmcError> {
    let size = |g: usize| classes.iter().filter(|&&x| x == g).count() as f64;
    OrthonormalFactor::new(DMatrix::from_fn(classes.len(), c, |a, g| {
        if classes[a] == g {
            1.0 / size(g).sqrt()
        } else {
            0.0
        }
    }))
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let left = [0, 0, 1, 1, 2, 2];
    let right = [2, 1, 0, 2, 1, 0];
    let (ui, uj) = (indicators(&left, 3)?, indicators(&right, 3)?);

    let known = [(0, 2), (2, 1), (4, 0)];
    let map = build_mapping(0, 1, 6, 6, &known)?;
    let (map, how) = init_unknown_block(&map, &ui, &uj)?;
    let map = update_mapping(&map, &ui, &uj)?;
    println!("unknown block initialized as {how:?}");
    println!("mapping after one update:\n{:.3}", map.mapping());

    for a in map.unmapped_rows() {
        let cols = map.unmapped_cols();
        let best = cols
            .iter()
            .copied()
            .max_by(|&x, &y| map.mapping()[(a, x)].total_cmp(&map.mapping()[(a, y)]))
            .expect("unmapped columns exist");
        println!(
            "left {a} (class {}) -> right {best} (class {})",
            left[a], right[best]
        );
    }
    Ok(())
}
