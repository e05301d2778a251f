use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};

use kmpigment::km::{cube_to_ks, ks_to_reflectance, reflectance_to_ks};
use kmpigment::synth::{synth_scene_with, SynthOptions};
use kmpigment::unmix::{prepare_endmembers, unmix_cube};
use kmpigment::{EndmemberSet, PixelMask, SpectralCube};

fn mean_abs(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let n: usize = a.iter().map(Vec::len).sum();
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs()))
        .sum::<f64>()
        / n as f64
}

/// 50x50 pixels of Dirichlet mixtures over four known pigments, composed
/// here in K/S space on top of the paper, with Gaussian reflectance noise.
fn dirichlet_cube(sigma: f64, seed: u64) -> (SpectralCube, EndmemberSet, kmpigment::PaperSpectrum, Vec<Vec<f64>>) {
    let source = synth_scene_with(&SynthOptions::new(4, 20, 20, 0.0, seed)).unwrap();
    let paper = source.paper.clone();
    let offsets: Vec<Vec<f64>> = source
        .endmembers
        .iter()
        .map(|e| e.iter().zip(&paper.ks).map(|(&r, p)| reflectance_to_ks(r) - p).collect())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gamma = Gamma::new(1.0, 1.0).unwrap();
    let noise = Normal::new(0.0, sigma.max(1e-300)).unwrap();
    let mut truth = Vec::new();
    let mut pixels = Vec::new();
    for _ in 0..2500 {
        let w: Vec<f64> = (0..4).map(|_| gamma.sample(&mut rng)).collect();
        let s: f64 = w.iter().sum();
        let a: Vec<f64> = w.iter().map(|v| v / s).collect();
        let px: Vec<f64> = (0..paper.bands())
            .map(|b| {
                let ks = paper.ks[b] + (0..4).map(|j| a[j] * offsets[j][b]).sum::<f64>();
                let r = ks_to_reflectance(ks).unwrap() + if sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                r.clamp(1e-4, 1.0)
            })
            .collect();
        truth.push(a);
        pixels.push(px);
    }
    let cube = SpectralCube::from_pixels(50, 50, source.cube.wavelengths().to_vec(), &pixels).unwrap();
    let sources = vec![(0, 0); 4];
    let endmembers = EndmemberSet::from_parts(source.endmembers.clone(), sources).unwrap();
    (cube, endmembers, paper, truth)
}

#[test]
fn noisy_dirichlet_mixtures_stay_within_regression_bound() {
    for seed in [1, 2, 3] {
        let (cube, endmembers, paper, truth) = dirichlet_cube(0.002, seed);
        let mask = PixelMask::full(50, 50);
        let ks = cube_to_ks(&cube, &mask).unwrap();
        let em = prepare_endmembers(&endmembers, Some(&paper)).unwrap();
        let a = unmix_cube(&ks, &em, Some(&paper), &mask).unwrap();
        let got: Vec<Vec<f64>> = a.rows().map(<[f64]>::to_vec).collect();
        let mae = mean_abs(&got, &truth);
        assert!(mae < 0.02, "seed {seed}: abundance MAE {mae}");
    }
}

#[test]
fn noiseless_synthetic_scene_is_recovered() {
    let scene = synth_scene_with(&SynthOptions::new(3, 30, 30, 0.0, 8)).unwrap();
    let sources = vec![(0, 0); 3];
    let endmembers = EndmemberSet::from_parts(scene.endmembers.clone(), sources).unwrap();
    let ks = cube_to_ks(&scene.cube, &scene.true_mask).unwrap();
    let em = prepare_endmembers(&endmembers, Some(&scene.paper)).unwrap();
    let a = unmix_cube(&ks, &em, Some(&scene.paper), &scene.true_mask).unwrap();
    assert_eq!(a.pixels(), scene.true_abundances.pixels());
    let got: Vec<Vec<f64>> = a.rows().map(<[f64]>::to_vec).collect();
    let want: Vec<Vec<f64>> = scene.true_abundances.rows().map(<[f64]>::to_vec).collect();
    let mae = mean_abs(&got, &want);
    assert!(mae < 1e-6, "abundance MAE {mae}");
}

#[test]
fn unmixing_is_thread_independent() {
    let (cube, endmembers, paper, _) = dirichlet_cube(0.002, 4);
    let mask = PixelMask::full(50, 50);
    let ks = cube_to_ks(&cube, &mask).unwrap();
    let em = prepare_endmembers(&endmembers, Some(&paper)).unwrap();
    let seq = kmpigment::unmix::unmix_cube_with(&ks, &em, Some(&paper), &mask, kmpigment::Exec::Sequential).unwrap();
    let par = kmpigment::unmix::unmix_cube_with(&ks, &em, Some(&paper), &mask, kmpigment::Exec::Parallel).unwrap();
    assert_eq!(seq, par);
}
