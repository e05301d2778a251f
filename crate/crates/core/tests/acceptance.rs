//! Acceptance criteria. Every criterion prints one `PASS` or `FAIL` line;
//! run with `cargo test -p kmpigment --test acceptance -- --nocapture` to
//! see them.
//!
//! All criteria run inside one test so that the runtime limits are measured
//! without other tests competing for cores.

use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

use kmpigment::classify::augment;
use kmpigment::dimensionality::{maxd_with, volume_function, DEFAULT_VOLUME_THRESHOLD};
use kmpigment::eval::{abundance_mae, match_labels, match_spectra};
use kmpigment::io::raster::read_png_bytes;
use kmpigment::km::{ks_to_reflectance, reflectance_to_ks};
use kmpigment::pipeline::{run_pipeline, write_scene_bundle, ERROR_PNG_FILE};
use kmpigment::synth::{synth_scene_with, SynthOptions};
use kmpigment::unmix::nnls;
use kmpigment::{AbundanceMatrix, Exec, PixelMask, SpectralCube};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

type Criterion<'a> = Box<dyn Fn() -> Outcome + 'a>;

fn km_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let samples: Vec<f64> = (0..1_000_000).map(|_| rng.random_range(1e-4..=1.0)).collect();
    let start = Instant::now();
    let mut worst = 0.0f64;
    for &r in &samples {
        let back = ks_to_reflectance(reflectance_to_ks(r)).expect("non-negative K/S");
        worst = worst.max((back - r).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-12 && secs < 1.0,
        format!("max |error| {worst:.2e} over 10^6 values in {secs:.3} s"),
    )
}

/// `min ||C y - d||^2` over `y >= 0` by trying every support set: the
/// optimum is the unconstrained least-squares solution on its own support.
fn brute_force_nnls(c: &DMatrix<f64>, d: &[f64]) -> f64 {
    let (rows, m) = c.shape();
    let dv = nalgebra::DVector::from_column_slice(d);
    let mut best = dv.norm_squared();
    for subset in 1u32..(1 << m) {
        let cols: Vec<usize> = (0..m).filter(|j| subset & (1 << j) != 0).collect();
        let sub = DMatrix::from_fn(rows, cols.len(), |i, k| c[(i, cols[k])]);
        let y = sub.clone().pseudo_inverse(1e-12).expect("pseudo-inverse") * &dv;
        if y.iter().all(|&v| v >= -1e-12) {
            best = best.min((&sub * y - &dv).norm_squared());
        }
    }
    best
}

fn objective(c: &DMatrix<f64>, d: &[f64], y: &[f64]) -> f64 {
    let r = c * nalgebra::DVector::from_column_slice(y) - nalgebra::DVector::from_column_slice(d);
    r.norm_squared()
}

fn kkt_holds(c: &DMatrix<f64>, d: &[f64], y: &[f64]) -> bool {
    let yv = nalgebra::DVector::from_column_slice(y);
    let dv = nalgebra::DVector::from_column_slice(d);
    let grad = c.transpose() * (c * &yv - &dv);
    let scale = (c.transpose() * &dv).amax().max(1.0);
    let tol = 1e-8 * scale;
    y.iter().zip(grad.iter()).all(|(&yj, &gj)| {
        yj >= 0.0 && if yj > 0.0 { gj.abs() <= tol } else { gj >= -tol }
    })
}

fn nnls_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    let mut kkt_failures = 0;
    let mut errors = 0;
    let start = Instant::now();
    for instance in 0..1000 {
        let bands = rng.random_range(1..=8);
        let m = rng.random_range(1..=4);
        // Alternate between general and non-negative (spectral) systems.
        let c = if instance % 2 == 0 {
            DMatrix::from_fn(bands, m, |_, _| rng.random_range(-1.0..1.0))
        } else {
            DMatrix::from_fn(bands, m, |_, _| rng.random_range(0.0..2.0))
        };
        let d: Vec<f64> = (0..bands).map(|_| rng.random_range(-1.0..2.0)).collect();
        match nnls(&c, &d) {
            Ok(y) => {
                worst = worst.max((objective(&c, &d, &y) - brute_force_nnls(&c, &d)).abs());
                if !kkt_holds(&c, &d, &y) {
                    kkt_failures += 1;
                }
            }
            Err(_) => errors += 1,
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-8 && kkt_failures == 0 && errors == 0 && secs < 10.0,
        format!(
            "max objective gap {worst:.2e}, {kkt_failures} KKT failures, {errors} errors, {secs:.2} s"
        ),
    )
}

fn dirichlet(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let g = Gamma::new(1.0, 1.0).unwrap();
    let w: Vec<f64> = (0..n).map(|_| g.sample(rng)).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// The index triple with the largest Gram determinant, by exhaustive search.
fn best_triple(pixels: &[Vec<f64>]) -> [usize; 3] {
    let n = pixels.len();
    let g: Vec<Vec<f64>> = pixels
        .iter()
        .map(|a| pixels.iter().map(|b| a.iter().zip(b).map(|(x, y)| x * y).sum()).collect())
        .collect();
    let mut best = (f64::NEG_INFINITY, [0; 3]);
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let det = g[i][i] * (g[j][j] * g[k][k] - g[j][k] * g[k][j])
                    - g[i][j] * (g[j][i] * g[k][k] - g[j][k] * g[k][i])
                    + g[i][k] * (g[j][i] * g[k][j] - g[j][j] * g[k][i]);
                if det > best.0 {
                    best = (det, [i, j, k]);
                }
            }
        }
    }
    best.1
}

fn maxd_vertices() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut misses = 0;
    let mut cross_checked = 0;
    let mut cross_mismatch = 0;
    let start = Instant::now();
    for _ in 0..100 {
        let v = rng.random_range(3..=5);
        let bands = rng.random_range(8..=32);
        let vertices: Vec<Vec<f64>> = (0..v)
            .map(|_| (0..bands).map(|_| rng.random_range(0.05..1.0)).collect())
            .collect();
        let mut pixels = vertices.clone();
        for _ in 0..200 {
            let w = dirichlet(&mut rng, v);
            pixels.push((0..bands).map(|b| (0..v).map(|i| w[i] * vertices[i][b]).sum()).collect());
        }
        // Scatter the vertices among the mixtures.
        let mut order: Vec<usize> = (0..pixels.len()).collect();
        for i in (1..order.len()).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        let placed: Vec<Vec<f64>> = order.iter().map(|&i| pixels[i].clone()).collect();
        let vertex_at: Vec<usize> = {
            let mut at: Vec<usize> = (0..placed.len()).filter(|&p| order[p] < v).collect();
            at.sort_unstable();
            at
        };

        let width = 29;
        let height = placed.len().div_ceil(width);
        let mut padded = placed.clone();
        padded.resize(width * height, vec![0.0; bands]);
        let cube = SpectralCube::from_pixels(width, height, (0..bands).map(|b| b as f64).collect(), &padded)
            .unwrap();
        let mask = PixelMask::from_fn(width, height, |r, c| r * width + c < placed.len());
        let Ok(set) = maxd_with(&cube, &mask, v, Exec::default()) else {
            misses += 1;
            continue;
        };
        let mut found: Vec<usize> = set.sources().iter().map(|&(r, c)| r * width + c).collect();
        found.sort_unstable();
        if found != vertex_at {
            misses += 1;
        }
        if v == 3 {
            cross_checked += 1;
            // Same spectra as the cube holds.
            let stored: Vec<Vec<f64>> = (0..placed.len()).map(|p| cube.pixel_at(p)).collect();
            let mut triple = best_triple(&stored).to_vec();
            triple.sort_unstable();
            if triple != vertex_at || triple != found {
                cross_mismatch += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        misses == 0 && cross_mismatch == 0 && secs < 30.0,
        format!(
            "{misses}/100 scenes missed a vertex; brute-force volume search disagreed on \
             {cross_mismatch}/{cross_checked} three-vertex scenes; {secs:.2} s"
        ),
    )
}

fn volume_dimensionality() -> Outcome {
    let mut detail = Vec::new();
    let mut pass = true;
    for rank in 2..=6usize {
        let mut hits = 0;
        for seed in 0..100u64 {
            let mut o = SynthOptions::new(rank - 1, 40, 40, 0.001, 1000 * rank as u64 + seed);
            o.mixed_fraction = 0.0;
            let scene = synth_scene_with(&o).expect("scene");
            let mask = PixelMask::full(40, 40);
            let set = maxd_with(&scene.cube, &mask, rank + 2, Exec::default()).expect("maxd");
            let vf = volume_function(&set, DEFAULT_VOLUME_THRESHOLD);
            if vf.estimated_dimensionality == rank {
                hits += 1;
            }
        }
        pass &= hits >= 95;
        detail.push(format!("r={rank}: {hits}/100"));
    }
    outcome(pass, detail.join(", "))
}

fn end_to_end(dir: &Path) -> Outcome {
    let scene = synth_scene_with(&SynthOptions::new(4, 100, 100, 0.002, 2024)).expect("scene");
    let cfg = write_scene_bundle(&scene, dir, 7).expect("bundle");
    let start = Instant::now();
    let report = match run_pipeline(&cfg, Exec::Sequential) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("pipeline failed: {e}")),
    };
    let secs = start.elapsed().as_secs_f64();
    let accuracy = match_labels(&report.classify.map.labels, &scene.true_labels)
        .expect("label match")
        .accuracy();

    let used = report.endmembers.extracted.truncated(report.endmembers.used);
    let mae = if used.len() >= scene.endmembers.len() {
        let matched = match_spectra(&scene.endmembers, used.spectra()).expect("spectra match");
        abundance_mae(&scene.true_abundances, &report.abundances, &matched).expect("mae")
    } else {
        f64::INFINITY
    };
    outcome(
        accuracy >= 0.95 && mae < 0.02 && secs < 60.0,
        format!(
            "accuracy {accuracy:.4}, abundance MAE {mae:.4} with {} endmembers, {secs:.2} s single-threaded",
            used.len()
        ),
    )
}

fn difference_example() -> Outcome {
    let a = AbundanceMatrix::new(1, 1, vec![0], vec![vec![0.48, 0.49, 0.02]]).unwrap();
    let f = augment(&a).remove(0);
    let want = [0.48, 0.49, 0.02, 0.01, 0.46, 0.47];
    let worst = f.iter().zip(want).map(|(g, w)| (g - w).abs()).fold(0.0, f64::max);
    outcome(
        f.len() == 6 && worst < 1e-12,
        format!("features {f:.4?}, max deviation {worst:.1e}"),
    )
}

fn csv_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn determinism(dir: &Path) -> Outcome {
    let scene = synth_scene_with(&SynthOptions::new(3, 48, 40, 0.002, 77)).expect("scene");
    let mut runs = Vec::new();
    for (i, threads) in [1usize, 4, 4, 2].into_iter().enumerate() {
        let mut cfg = write_scene_bundle(&scene, dir, 5).expect("bundle");
        cfg.paths.out_dir = dir.join(format!("run{i}"));
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let exec = if threads == 1 { Exec::Sequential } else { Exec::Parallel };
        if let Err(e) = pool.install(|| run_pipeline(&cfg, exec)) {
            return outcome(false, format!("pipeline failed: {e}"));
        }
        runs.push(csv_bytes(&cfg.paths.out_dir));
    }
    let identical = runs.windows(2).all(|w| w[0] == w[1]);
    outcome(
        identical && !runs[0].is_empty(),
        format!(
            "{} CSV artifacts compared across 1, 4, 4 and 2 threads: {}",
            runs[0].len(),
            if identical { "byte-identical" } else { "differ" }
        ),
    )
}

fn rmse_homogeneous(dir: &Path) -> Outcome {
    let mut o = SynthOptions::new(4, 60, 60, 0.0, 31);
    o.mixed_fraction = 0.0;
    let scene = synth_scene_with(&o).expect("scene");
    let cfg = write_scene_bundle(&scene, dir, 3).expect("bundle");
    let report = match run_pipeline(&cfg, Exec::default()) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("pipeline failed: {e}")),
    };
    let map = &report.classify.map;
    let max_rmse = map.rmse.iter().cloned().fold(0.0, f64::max);
    let (_, _, _, bytes) = read_png_bytes(cfg.paths.out_dir.join(ERROR_PNG_FILE)).expect("error png");
    let black = bytes.iter().all(|&b| b == 0);
    outcome(
        max_rmse == 0.0 && black,
        format!(
            "max RMSE {max_rmse:e} over {} classified pixels, error PNG {}",
            map.labels.iter().flatten().count(),
            if black { "all black" } else { "not black" }
        ),
    )
}

#[test]
fn acceptance_criteria() {
    let tmp = tempfile::tempdir().unwrap();
    let criteria: [(&str, Criterion<'_>); 8] = [
        ("K-M round trip", Box::new(km_round_trip)),
        ("NNLS oracle equivalence", Box::new(nnls_oracle)),
        ("MaxD vertex recovery", Box::new(maxd_vertices)),
        ("volume-function dimensionality", Box::new(volume_dimensionality)),
        ("end-to-end synthetic classification", Box::new(|| end_to_end(&tmp.path().join("e2e")))),
        ("difference features example", Box::new(difference_example)),
        ("determinism across thread counts", Box::new(|| determinism(&tmp.path().join("det")))),
        ("RMSE map on homogeneous classes", Box::new(|| rmse_homogeneous(&tmp.path().join("rmse")))),
    ];
    let mut failed = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("[{tag}] {}. {name}: {}", i + 1, o.detail);
        if !o.pass {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "acceptance criteria failed: {failed:?}");
}
