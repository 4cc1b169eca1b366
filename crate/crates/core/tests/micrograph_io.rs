use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rve_scope::micrograph::{
    binarize, generate, load_micrograph, otsu_threshold, read_intensity_image, read_scale_sidecar,
    save_pgm, sidecar_path, upsample_nn, write_scale_sidecar, GeneratorSpec, Micrograph,
};
use rve_scope::Error;

fn write_png(path: &Path, width: u32, height: u32, color: png::ColorType, depth: png::BitDepth, data: &[u8]) {
    let file = fs::File::create(path).unwrap();
    let mut enc = png::Encoder::new(std::io::BufWriter::new(file), width, height);
    enc.set_color(color);
    enc.set_depth(depth);
    enc.write_header().unwrap().write_image_data(data).unwrap();
}

#[test]
fn two_by_two_pgm_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("a.pgm");
    fs::write(&p, b"P2\n2 2\n255\n0 255\n0 255\n").unwrap();
    let m = load_micrograph(&p, Some(128), None).unwrap();
    assert_eq!(m.phases(), &[0, 1, 0, 1]);
    assert_eq!(m.scale(), 1.0);
}

#[test]
fn all_zero_image_is_all_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("z.pgm");
    let mut bytes = b"P5\n4 3\n255\n".to_vec();
    bytes.extend([0u8; 12]);
    fs::write(&p, bytes).unwrap();
    for t in [1, 50, 255] {
        let m = load_micrograph(&p, Some(t), None).unwrap();
        assert_eq!(m.volume_fraction(), 0.0);
    }
}

#[test]
fn p5_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("g.pgm");
    let m = generate(&GeneratorSpec::boolean_disks(0.2, 3.0, 9), 37, 53).unwrap();
    save_pgm(&m, &p).unwrap();
    let back = load_micrograph(&p, None, None).unwrap();
    assert_eq!(back, m);
    let bytes = fs::read(&p).unwrap();
    save_pgm(&back, &p).unwrap();
    assert_eq!(fs::read(&p).unwrap(), bytes);
}

#[test]
fn scale_comes_from_flag_then_sidecar_then_default() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("s.pgm");
    let m = Micrograph::from_rows(&[&[0, 1], &[1, 1]], 1.0).unwrap();
    save_pgm(&m, &p).unwrap();
    assert_eq!(load_micrograph(&p, None, None).unwrap().scale(), 1.0);
    write_scale_sidecar(&p, 0.125).unwrap();
    assert_eq!(sidecar_path(&p), dir.path().join("s.pgm.meta"));
    assert_eq!(read_scale_sidecar(&p).unwrap(), Some(0.125));
    assert_eq!(load_micrograph(&p, None, None).unwrap().scale(), 0.125);
    assert_eq!(load_micrograph(&p, None, Some(2.0)).unwrap().scale(), 2.0);
}

/// Exhaustive between-class variance scan in the `>= t` convention.
fn otsu_oracle(hist: &[u64]) -> (f64, Vec<u16>) {
    let total: f64 = hist.iter().map(|&c| c as f64).sum();
    let mut scores = Vec::new();
    for t in 1..hist.len() {
        let (mut n0, mut s0, mut n1, mut s1) = (0.0, 0.0, 0.0, 0.0);
        for (v, &c) in hist.iter().enumerate() {
            if v < t {
                n0 += c as f64;
                s0 += v as f64 * c as f64;
            } else {
                n1 += c as f64;
                s1 += v as f64 * c as f64;
            }
        }
        let var = if n0 == 0.0 || n1 == 0.0 {
            0.0
        } else {
            (n0 / total) * (n1 / total) * (s0 / n0 - s1 / n1).powi(2)
        };
        scores.push((t as u16, var));
    }
    let best = scores.iter().map(|s| s.1).fold(0.0, f64::max);
    let argmax = scores
        .iter()
        .filter(|s| (s.1 - best).abs() <= 1e-9 * best)
        .map(|s| s.0)
        .collect();
    (best, argmax)
}

#[test]
fn otsu_on_bimodal_image_matches_exhaustive_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pixels: Vec<u8> = (0..64 * 64)
        .map(|i| {
            let mode: i32 = if i % 2 == 0 { 30 } else { 220 };
            (mode + rng.random_range(-12..=12)) as u8
        })
        .collect();
    let img = rve_scope::micrograph::IntensityImage {
        height: 64,
        width: 64,
        maxval: 255,
        pixels,
    };
    let hist = img.histogram();
    let t = otsu_threshold(&hist);
    assert!(t > 30 && t < 220, "{t}");
    let (best, argmax) = otsu_oracle(&hist);
    assert!(argmax.contains(&t), "{t} not in {argmax:?}");
    assert!(best > 0.0);
    let m = binarize(&img, t, 1.0).unwrap();
    assert!((m.volume_fraction() - 0.5).abs() < 1e-12);
}

#[test]
fn otsu_matches_scan_on_random_histograms() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let hist: Vec<u64> = (0..256).map(|_| rng.random_range(0..40)).collect();
        let t = otsu_threshold(&hist);
        let (_, argmax) = otsu_oracle(&hist);
        assert!(argmax.contains(&t), "{t} not in {argmax:?}");
    }
}

#[test]
fn reads_grayscale_png() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("g.png");
    write_png(&p, 3, 2, png::ColorType::Grayscale, png::BitDepth::Eight, &[0, 10, 200, 255, 127, 128]);
    let img = read_intensity_image(&p).unwrap();
    assert_eq!((img.height, img.width), (2, 3));
    assert_eq!(img.pixels, vec![0, 10, 200, 255, 127, 128]);
    let m = load_micrograph(&p, Some(128), None).unwrap();
    assert_eq!(m.phases(), &[0, 0, 1, 1, 0, 1]);
}

#[test]
fn reads_one_bit_png_as_black_and_white() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("b.png");
    // 4 pixels packed into one byte per row: 1010 / 0110
    write_png(&p, 4, 2, png::ColorType::Grayscale, png::BitDepth::One, &[0b1010_0000, 0b0110_0000]);
    let m = load_micrograph(&p, None, None).unwrap();
    assert_eq!(m.phases(), &[1, 0, 1, 0, 0, 1, 1, 0]);
}

#[test]
fn rejects_multichannel_images() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.png");
    write_png(&p, 1, 1, png::ColorType::Rgb, png::BitDepth::Eight, &[1, 2, 3]);
    match read_intensity_image(&p) {
        Err(e @ Error::Format { .. }) => {
            assert!(e.to_string().contains("more than one channel"));
            assert_eq!(e.exit_code(), 3);
        }
        other => panic!("{other:?}"),
    }
    let q = dir.path().join("c.ppm");
    fs::write(&q, b"P6\n1 1\n255\n\x01\x02\x03").unwrap();
    assert!(read_intensity_image(&q).unwrap_err().to_string().contains("one channel"));
}

#[test]
fn rejects_malformed_files() {
    let dir = tempfile::tempdir().unwrap();
    let cases: [(&str, &[u8]); 4] = [
        ("trunc.pgm", b"P5\n4 4\n255\n\x00\x00"),
        ("deep.pgm", b"P2\n1 1\n65535\n7\n"),
        ("text.txt", b"hello"),
        ("big.pgm", b"P2\n1 1\n255\n300\n"),
    ];
    for (name, bytes) in cases {
        let p = dir.path().join(name);
        fs::write(&p, bytes).unwrap();
        let e = read_intensity_image(&p).unwrap_err();
        assert_eq!(e.exit_code(), 3, "{name}: {e}");
    }
    let e = read_intensity_image(dir.path().join("missing.pgm")).unwrap_err();
    assert!(matches!(e, Error::Io { .. }));
}

#[test]
fn generated_fixtures_hit_their_volume_fractions() {
    let m = generate(&GeneratorSpec::boolean_disks(0.10, 6.0, 42), 512, 512).unwrap();
    assert!((0.09..=0.11).contains(&m.volume_fraction()));
    let t = generate(&GeneratorSpec::two_region(0.05, 0.20, 6.0, 42), 512, 512).unwrap();
    let left = t.region_volume_fraction(0..512, 0..256);
    let right = t.region_volume_fraction(0..512, 256..512);
    assert!((0.045..=0.055).contains(&left), "{left}");
    assert!((0.18..=0.22).contains(&right), "{right}");
    let c = generate(&GeneratorSpec::clustered(0.15, 3.0, 6, 12.0, 1), 256, 256).unwrap();
    assert!((0.15..=0.165).contains(&c.volume_fraction()));
    let again = generate(&GeneratorSpec::boolean_disks(0.10, 6.0, 42), 512, 512).unwrap();
    assert_eq!(again, m);
}

#[test]
fn upsampling_preserves_volume_fraction_and_physical_size() {
    let m = generate(&GeneratorSpec::boolean_disks(0.3, 2.0, 5), 40, 30).unwrap().with_scale(0.6).unwrap();
    let up = upsample_nn(&m, 3).unwrap();
    assert_eq!((up.height(), up.width()), (120, 90));
    assert_eq!(up.volume_fraction(), m.volume_fraction());
    assert!((up.scale() - 0.2).abs() < 1e-15);
    assert_eq!(up.get(7, 5), m.get(2, 1));
    assert_eq!(upsample_nn(&m, 1).unwrap(), m);
}
