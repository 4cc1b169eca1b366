//! Moving-window statistics on a synthetic whitened field: pure noise plus
//! an optional offset in one quadrant.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rve_scope::score::WhitenedField;
use rve_scope::window::sweep_sizes;

fn field(offset: f64) -> WhitenedField {
    let (rows, cols, d) = (128, 128, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut values = Vec::with_capacity(rows * cols * d);
    for r in 0..rows {
        for c in 0..cols {
            for _ in 0..d {
                let shift = if r < rows / 2 && c < cols / 2 { offset } else { 0.0 };
                values.push(rng.random_range(-1.0..1.0) * 3f64.sqrt() + shift);
            }
        }
    }
    WhitenedField::from_values(rows, cols, d, values).unwrap()
}

fn main() -> rve_scope::Result<()> {
    let sizes = [4, 8, 16, 32, 64, 96];
    let flat = sweep_sizes(&field(0.0), &sizes, 1)?;
    let shifted = sweep_sizes(&field(0.3), &sizes, 1)?;
    println!("{:>4} {:>8} {:>12} {:>12}", "w", "N_k", "stationary", "shifted");
    for (a, b) in flat.iter().zip(&shifted) {
        println!("{:>4} {:>8} {:>12.4e} {:>12.4e}", a.w, a.n_positions, a.mean_d, b.mean_d);
    }
    Ok(())
}
