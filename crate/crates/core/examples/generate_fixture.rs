//! Writes one micrograph of each synthetic kind to a directory.
//!
//!     cargo run --release --example generate_fixture -- out/

use std::path::PathBuf;

use rve_scope::micrograph::{generate, save_pgm, write_scale_sidecar, GeneratorSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fixtures".into()));
    std::fs::create_dir_all(&dir)?;

    let specs = [
        ("disks.pgm", GeneratorSpec::boolean_disks(0.10, 6.0, 42)),
        ("two_region.pgm", GeneratorSpec::two_region(0.05, 0.20, 6.0, 42)),
        ("clustered.pgm", GeneratorSpec::clustered(0.15, 4.0, 6, 16.0, 42)),
    ];
    for (name, spec) in specs {
        let m = generate(&spec, 512, 512)?.with_scale(0.05)?;
        let path = dir.join(name);
        save_pgm(&m, &path)?;
        write_scale_sidecar(&path, m.scale())?;
        println!("{:<40} vf {:.4}", path.display(), m.volume_fraction());
    }
    Ok(())
}
