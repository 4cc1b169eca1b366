//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rve_scope::cli::output::{csv_text, curve_rows, parse_csv};
use rve_scope::dataset::extract_dataset;
use rve_scope::micrograph::{generate, load_micrograph, upsample_nn, GeneratorSpec, Micrograph};
use rve_scope::model::{LogisticModel, MlpModel, Model, HIDDEN_UNITS};
use rve_scope::rve::{fit_model, run_sweep, PipelineConfig, RveCurve, SizeGrid};
use rve_scope::score::{
    compute_score_field, estimate_covariance, score_logistic, score_mlp_last_layer, whiten,
    CovarianceMode, WhitenedField,
};
use rve_scope::window::{build_integral, sweep_sizes, window_mean_at, WindowSpec};

type Outcome = Result<String, String>;

struct Criterion {
    id: &'static str,
    title: &'static str,
    limit: Duration,
    run: fn() -> Outcome,
}

fn main() {
    let criteria = [
        Criterion { id: "1", title: "score matches finite differences", limit: secs(10), run: c1_scores },
        Criterion { id: "2", title: "stationary fit has zero mean score", limit: secs(120), run: c2_zero_mean },
        Criterion { id: "3", title: "integral-image window oracle", limit: secs(30), run: c3_window_oracle },
        Criterion { id: "4", title: "Mahalanobis equivalence", limit: secs(30), run: c4_mahalanobis },
        Criterion { id: "5", title: "window position counts", limit: secs(1), run: c5_geometry },
        Criterion { id: "6", title: "stationary decay", limit: secs(300), run: c6_decay },
        Criterion { id: "7", title: "nonstationarity sensitivity", limit: secs(600), run: c7_nonstationary },
        Criterion { id: "8", title: "full vs diag elbow", limit: secs(300), run: c8_a_mode },
        Criterion { id: "9", title: "resolution consistency", limit: secs(1200), run: c9_resolution },
        Criterion { id: "10", title: "determinism, formats, exit codes", limit: secs(60), run: c10_determinism },
    ];
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(c.run))
            .unwrap_or_else(|p| Err(panic_message(p.as_ref())));
        let took = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if took > c.limit => Err(format!("{detail}; exceeded {:?}", c.limit)),
            other => other,
        };
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!(
            "criterion {:>2} {tag} [{:>6.1}s] {}: {detail}",
            c.id,
            took.as_secs_f64(),
            c.title
        );
    }
    match c11_published_micrograph() {
        Some(Ok(d)) => println!("criterion 11 PASS (optional): {d}"),
        Some(Err(d)) => println!("criterion 11 FAIL (optional, not counted): {d}"),
        None => println!(
            "criterion 11 SKIP (optional): set RVE_SCOPE_ROUND_PARTICLE_IMAGE to a published micrograph"
        ),
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn panic_message(p: &(dyn std::any::Any + Send)) -> String {
    if let Some(s) = p.downcast_ref::<&str>() {
        format!("panicked: {s}")
    } else if let Some(s) = p.downcast_ref::<String>() {
        format!("panicked: {s}")
    } else {
        "panicked".into()
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn single_threaded<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(f)
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

fn log_lik(z: f64, y: u8) -> f64 {
    // stable log sigmoid
    let ls = |t: f64| -(1.0 + (-t.abs()).exp()).ln() + t.min(0.0);
    if y == 1 {
        ls(z)
    } else {
        ls(-z)
    }
}

/// Central differences of `f` at `theta` with step `h`.
fn central_diff(f: impl Fn(&[f64]) -> f64, theta: &[f64], h: f64) -> Vec<f64> {
    (0..theta.len())
        .map(|j| {
            let mut up = theta.to_vec();
            let mut dn = theta.to_vec();
            up[j] += h;
            dn[j] -= h;
            (f(&up) - f(&dn)) / (2.0 * h)
        })
        .collect()
}

fn vector_rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let norm: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    diff / norm.max(1e-300)
}

fn c1_scores() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let h = 1e-6;
    let mut worst = [0.0f64; 2];
    for _ in 0..100 {
        let d = [8, 24][rng.random_range(0..2)];
        let n = rng.random_range(50..5000);
        let lambda = [0.0, 1e-4, 0.1, 2.0][rng.random_range(0..4)];
        let x: Vec<f64> = (0..d).map(|_| f64::from(u8::from(rng.random_bool(0.4)))).collect();
        let y = u8::from(rng.random_bool(0.5));

        let w: Vec<f64> = (0..d).map(|_| rng.random_range(-0.5..0.5)).collect();
        let b = rng.random_range(-1.0..1.0);
        let model = LogisticModel::new(w.clone(), b, lambda).unwrap();
        let analytic = score_logistic(&model, &x, y, n).unwrap();
        let mut theta = w;
        theta.push(b);
        let objective = |t: &[f64]| {
            let z = t[..d].iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() + t[d];
            log_lik(z, y) - lambda / (2.0 * n as f64) * t[..d].iter().map(|v| v * v).sum::<f64>()
        };
        worst[0] = worst[0].max(vector_rel_err(&analytic, &central_diff(objective, &theta, h)));

        let mut mlp = MlpModel::initialize(d, lambda, rng.random());
        for v in mlp.output_weights.iter_mut() {
            *v += rng.random_range(-0.5..0.5);
        }
        mlp.output_bias = rng.random_range(-1.0..1.0);
        let hidden = mlp.hidden(&x);
        let analytic = score_mlp_last_layer(&mlp, &x, y, n).unwrap();
        let mut theta = mlp.output_weights.clone();
        theta.push(mlp.output_bias);
        let objective = |t: &[f64]| {
            let z = t[..HIDDEN_UNITS].iter().zip(&hidden).map(|(a, b)| a * b).sum::<f64>()
                + t[HIDDEN_UNITS];
            log_lik(z, y)
                - lambda / (2.0 * n as f64) * t[..HIDDEN_UNITS].iter().map(|v| v * v).sum::<f64>()
        };
        worst[1] = worst[1].max(vector_rel_err(&analytic, &central_diff(objective, &theta, h)));
    }
    let detail = format!("max relative error logistic {:.2e}, mlp {:.2e}", worst[0], worst[1]);
    ensure(worst[0] < 1e-5 && worst[1] < 1e-5, || detail.clone())?;
    Ok(detail)
}

fn c2_zero_mean() -> Outcome {
    let m = generate(&GeneratorSpec::boolean_disks(0.10, 6.0, 42), 256, 256).map_err(|e| e.to_string())?;
    let cfg = PipelineConfig {
        l_s: 9,
        lambda: 0.0,
        cv_folds: 0,
        seed: 42,
        ..Default::default()
    };
    let (model, fit) = fit_model(&m, &cfg).map_err(|e| e.to_string())?;
    let ds = extract_dataset(&m, cfg.l_s).unwrap();
    let field = compute_score_field(&ds, &model).unwrap();
    let inf = field.global_mean().iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let detail = format!(
        "converged {} after {} polish iterations, |mean score|_inf = {inf:.2e}",
        fit.converged, fit.polish_iterations
    );
    ensure(fit.converged && inf < 1e-5, || detail.clone())?;
    Ok(detail)
}

/// Box-Muller draw.
fn standard_normal(rng: &mut impl Rng) -> f64 {
    let u: f64 = 1.0 - rng.random::<f64>();
    let v: f64 = rng.random();
    (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
}

fn c3_window_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    let mut checked = 0;
    for _ in 0..20 {
        let rows = rng.random_range(1..=32);
        let cols = rng.random_range(1..=32);
        let d = rng.random_range(1..=8);
        let values: Vec<f64> = (0..rows * cols * d).map(|_| standard_normal(&mut rng)).collect();
        let z = WhitenedField::from_values(rows, cols, d, values.clone()).unwrap();
        let sizes: Vec<usize> = (1..=rows.min(cols)).collect();
        let stats = sweep_sizes(&z, &sizes, 1).map_err(|e| e.to_string())?;
        for (w, s) in sizes.iter().zip(&stats) {
            let mut total = 0.0;
            let mut count = 0;
            for r0 in 0..=rows - w {
                for c0 in 0..=cols - w {
                    let mut dist = 0.0;
                    for j in 0..d {
                        let mut sum = 0.0;
                        for r in r0..r0 + w {
                            for c in c0..c0 + w {
                                sum += values[(r * cols + c) * d + j];
                            }
                        }
                        let mean = sum / (w * w) as f64;
                        dist += mean * mean;
                    }
                    total += dist;
                    count += 1;
                }
            }
            ensure(s.n_positions == count, || format!("w={w}: {} positions vs {count}", s.n_positions))?;
            worst = worst.max(rel_err(s.mean_d, total / count as f64));
            checked += 1;
        }
    }
    let detail = format!("{checked} (field, size) pairs, max relative error {worst:.2e}");
    ensure(worst <= 1e-9, || detail.clone())?;
    Ok(detail)
}

fn c4_mahalanobis() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    let mut checked = 0;
    for instance in 0..4 {
        let (h, w) = (rng.random_range(20..=32), rng.random_range(20..=32));
        let phases = (0..h * w).map(|_| u8::from(rng.random_bool(0.35))).collect();
        let m = Micrograph::new(h, w, phases, 1.0).unwrap();
        let ds = extract_dataset(&m, 3).unwrap();
        let model = if instance % 2 == 0 {
            let weights = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
            Model::Logistic(LogisticModel::new(weights, 0.1, 1e-4).unwrap())
        } else {
            Model::Mlp(MlpModel::initialize(8, 1e-4, rng.random()))
        };
        let field = compute_score_field(&ds, &model).unwrap();
        let (rows, cols, d) = (field.rows(), field.cols(), field.dim());
        let smean = field.global_mean().to_vec();
        for mode in [CovarianceMode::Full, CovarianceMode::Diag] {
            let cov = estimate_covariance(&field, mode, 1e-8).map_err(|e| e.to_string())?;
            let z = whiten(&field, &cov).unwrap();
            let ints = build_integral(&z);
            let lu = DMatrix::from_row_slice(d, d, &cov.regularized_dense()).lu();
            let sizes: Vec<usize> = (1..=rows.min(cols)).step_by(3).collect();
            let stats = sweep_sizes(&z, &sizes, 1).unwrap();
            for (&size, s) in sizes.iter().zip(&stats) {
                let spec = WindowSpec::new(size, 1).unwrap();
                let mut total = 0.0;
                for r0 in 0..=rows - size {
                    for c0 in 0..=cols - size {
                        let mut sbar = vec![0.0; d];
                        for r in r0..r0 + size {
                            for c in c0..c0 + size {
                                for (acc, v) in sbar.iter_mut().zip(field.score(r * cols + c)) {
                                    *acc += v;
                                }
                            }
                        }
                        let delta = DVector::from_iterator(
                            d,
                            sbar.iter().zip(&smean).map(|(a, m)| a / (size * size) as f64 - m),
                        );
                        let direct = delta.dot(&lu.solve(&delta).expect("A is invertible"));
                        let center = (r0 + spec.before(), c0 + spec.before());
                        let zbar = window_mean_at(&ints, &spec, center).unwrap();
                        let whitened: f64 = zbar.iter().map(|v| v * v).sum();
                        worst = worst.max(rel_err(whitened, direct));
                        total += direct;
                        checked += 1;
                    }
                }
                worst = worst.max(rel_err(s.mean_d, total / s.n_positions as f64));
            }
        }
    }
    let detail = format!("{checked} windows over both modes, max relative error {worst:.2e}");
    ensure(worst <= 1e-8, || detail.clone())?;
    Ok(detail)
}

fn c5_geometry() -> Outcome {
    let z = WhitenedField::from_values(10, 10, 2, vec![0.5; 200]).unwrap();
    let stats = sweep_sizes(&z, &[3, 5], 1).map_err(|e| e.to_string())?;
    let counts = (stats[0].n_positions, stats[1].n_positions);
    let specs = (
        WindowSpec::new(3, 1).unwrap().n_positions(10, 10),
        WindowSpec::new(5, 1).unwrap().n_positions(10, 10),
    );
    let detail = format!("N(w=3) = {}, N(w=5) = {}", counts.0, counts.1);
    ensure(counts == (64, 36) && specs == (64, 36), || detail.clone())?;
    Ok(detail)
}

fn fixture6() -> Micrograph {
    generate(&GeneratorSpec::boolean_disks(0.10, 6.0, 42), 512, 512).unwrap()
}

fn fixture6_config(mode: CovarianceMode) -> PipelineConfig {
    PipelineConfig {
        l_s: 9,
        a_mode: mode,
        grid: Some(SizeGrid::linear(8, 160, 8).unwrap()),
        cv_folds: 0,
        seed: 42,
        ..Default::default()
    }
}

/// Diag-mode curve of fixture (6) and the single-threaded time it took.
fn fixture6_diag() -> &'static (RveCurve, Duration) {
    static CURVE: OnceLock<(RveCurve, Duration)> = OnceLock::new();
    CURVE.get_or_init(|| {
        single_threaded(|| {
            let start = Instant::now();
            let m = fixture6();
            let curve = run_sweep(&m, &fixture6_config(CovarianceMode::Diag)).unwrap();
            (curve, start.elapsed())
        })
    })
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let rank = 0.5 * (i + j) as f64 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = ra.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma) * (x - ma)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb) * (y - mb)).sum();
    cov / (va * vb).sqrt()
}

fn c6_decay() -> Outcome {
    let (curve, took) = fixture6_diag();
    let d = curve.mean_d();
    let k: Vec<f64> = (1..=d.len()).map(|i| i as f64).collect();
    let rho = spearman(&k, &d);
    let ratio = d[d.len() - 1] / d[0];
    let detail = format!(
        "Spearman {rho:.3}, D_K / D_1 = {ratio:.2e}, fit converged {}, single-threaded {:.1}s",
        curve.fit.converged,
        took.as_secs_f64()
    );
    ensure(rho <= -0.9 && ratio <= 0.2 && *took < secs(300), || detail.clone())?;
    Ok(detail)
}

fn c7_nonstationary() -> Outcome {
    // Small disks and a 3x3 neighborhood: the regions then differ in the
    // conditional law the classifier learns, not only in particle density.
    let (r, l_s, side, seed) = (3.0, 3, 512, 42);
    let cfg = PipelineConfig {
        l_s,
        a_mode: CovarianceMode::Diag,
        grid: Some(SizeGrid::linear(8, 160, 8).unwrap()),
        cv_folds: 0,
        seed,
        ..Default::default()
    };
    let two = generate(&GeneratorSpec::two_region(0.05, 0.20, r, seed), side, side).unwrap();
    let flat = generate(&GeneratorSpec::boolean_disks(0.125, r, seed), side, side).unwrap();
    let d_two = *run_sweep(&two, &cfg).map_err(|e| e.to_string())?.mean_d().last().unwrap();
    let d_flat = *run_sweep(&flat, &cfg).map_err(|e| e.to_string())?.mean_d().last().unwrap();
    let ratio = d_two / d_flat;
    let detail = format!(
        "D at w=160: two-region {d_two:.3e}, stationary {d_flat:.3e}, ratio {ratio:.2} (r = {r}, l_s = {l_s})"
    );
    ensure(ratio >= 3.0, || detail.clone())?;
    Ok(detail)
}

fn c8_a_mode() -> Outcome {
    let (diag, _) = fixture6_diag();
    let full = run_sweep(&fixture6(), &fixture6_config(CovarianceMode::Full)).map_err(|e| e.to_string())?;
    let (a, b) = (diag.elbow.elbow_index, full.elbow.elbow_index);
    let detail = format!(
        "elbow diag w={} (index {a}), full w={} (index {b})",
        diag.elbow_pixels(),
        full.elbow_pixels()
    );
    ensure(a.abs_diff(b) <= 1, || detail.clone())?;
    Ok(detail)
}

fn c9_resolution() -> Outcome {
    let (base, _) = fixture6_diag();
    let up = upsample_nn(&fixture6(), 2).unwrap();
    let cfg = PipelineConfig {
        l_s: 17,
        grid: Some(SizeGrid::linear(16, 320, 16).unwrap()),
        ..fixture6_config(CovarianceMode::Diag)
    };
    let curve = run_sweep(&up, &cfg).map_err(|e| e.to_string())?;
    let rel = (curve.rve_physical - base.rve_physical).abs() / base.rve_physical;
    let detail = format!(
        "rve {} um at 1x vs {} um at 2x ({:.0}% apart)",
        base.rve_physical,
        curve.rve_physical,
        100.0 * rel
    );
    ensure(rel <= 0.25, || detail.clone())?;
    Ok(detail)
}

fn bin(args: &[&str]) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_rve-scope"))
        .args(args)
        .env("RVE_SCOPE_THREADS", "1")
        .output()
        .expect("binary runs")
        .status
        .code()
        .unwrap_or(-1)
}

fn c10_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).to_str().unwrap().to_owned();
    let m = generate(&GeneratorSpec::boolean_disks(0.2, 3.0, 7), 128, 128).unwrap();
    let cfg = PipelineConfig {
        l_s: 5,
        grid: Some(SizeGrid::linear(8, 64, 8).unwrap()),
        cv_folds: 0,
        ..Default::default()
    };
    let texts: Vec<String> = [1, 2, 3]
        .iter()
        .map(|&threads| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| csv_text(&curve_rows(&run_sweep(&m, &cfg).unwrap())))
        })
        .collect();
    ensure(texts.iter().all(|t| *t == texts[0]), || "library CSV differs across runs".into())?;
    let rows = parse_csv(&texts[0]).map_err(|e| e.to_string())?;
    ensure(csv_text(&rows) == texts[0], || "CSV does not round-trip".into())?;

    let gen = ["generate", "--height", "96", "--vf", "0.2", "--radius", "3", "--seed", "5", "--output"];
    ensure(bin(&[&gen[..], &[&p("m.pgm")]].concat()) == 0, || "generate failed".into())?;
    let run = |csv: &str| {
        bin(&["run", "--input", &p("m.pgm"), "--ls", "5", "--sizes", "8:40:8", "--cv-folds", "0", "--csv", csv])
    };
    ensure(run(&p("a.csv")) == 0 && run(&p("b.csv")) == 0, || "run failed".into())?;
    let (a, b) = (std::fs::read(p("a.csv")).unwrap(), std::fs::read(p("b.csv")).unwrap());
    ensure(a == b, || "repeated CLI runs wrote different CSV files".into())?;

    let mut blank = b"P5\n40 40\n255\n".to_vec();
    blank.extend(vec![0u8; 1600]);
    std::fs::write(p("blank.pgm"), blank).unwrap();
    let codes = [
        (2, bin(&["run", "--input", &p("m.pgm"), "--ls", "20"])),
        (3, bin(&["run", "--input", &p("missing.pgm")])),
        (4, bin(&["generate", "--height", "256", "--vf", "0.95", "--radius", "40", "--output", &p("x.pgm")])),
        (5, run_code_blank(&p("blank.pgm"), &p("c.csv"))),
    ];
    for (want, got) in codes {
        ensure(want == got, || format!("expected exit code {want}, got {got}"))?;
    }
    Ok("CSV identical across 1/2/3 threads and repeated CLI runs; exit codes 0, 2, 3, 4, 5 observed".into())
}

fn run_code_blank(input: &str, csv: &str) -> i32 {
    bin(&["run", "--input", input, "--ls", "5", "--sizes", "8:32:8", "--cv-folds", "0", "--csv", csv])
}

fn c11_published_micrograph() -> Option<Outcome> {
    let path = std::env::var_os("RVE_SCOPE_ROUND_PARTICLE_IMAGE")?;
    let run = || -> Outcome {
        let m = load_micrograph(Path::new(&path), None, None).map_err(|e| e.to_string())?;
        let curve = run_sweep(&m, &PipelineConfig::default()).map_err(|e| e.to_string())?;
        let w = curve.elbow_pixels();
        let detail = format!("elbow at {w} px");
        ensure((240..=360).contains(&w), || detail.clone())?;
        Ok(detail)
    };
    Some(run())
}
