mod common;

use common::*;
use gptd_core::gptd::{exact_log_marginal as lib_exact_log_marginal, fit_exact};
use gptd_core::spgp::{
    fit_sparse, latent_likelihood_moments, log_marginal, log_marginal_grad, pseudo_posterior, PseudoInputSet,
};
use gptd_core::ModelParams;
use rand::seq::index::sample;
use rand::Rng;

fn random_z(rng: &mut rand_chacha::ChaCha8Rng, m: usize, dim: usize, lim: f64) -> PseudoInputSet {
    PseudoInputSet::new((0..m).map(|_| (0..dim).map(|_| rng.random_range(-lim..lim)).collect()).collect()).unwrap()
}

#[test]
fn summary_matches_dense_marginalization() {
    let mut rng = rng(21);
    for _ in 0..20 {
        let dim = rng.random_range(1..=2);
        let p = random_params(&mut rng, dim);
        let traj = random_trajectory(&mut rng, 8, dim, 1.5);
        let z = random_z(&mut rng, 3, dim, 1.5);
        let post = fit_sparse(&traj, &p, &z).unwrap();
        let (alpha, lambda) = sparse_summary(&sparse_blocks(&traj, &p, z.locations()));
        let scale = alpha.amax().max(1.0);
        assert!((post.alpha() - &alpha).amax() < 1e-8 * scale, "{} vs {}", post.alpha(), alpha);
        assert!((post.lambda() - &lambda).amax() < 1e-8 * lambda.amax().max(1.0));
    }
}

#[test]
fn log_marginal_matches_dense_covariance() {
    let mut rng = rng(22);
    for _ in 0..20 {
        let dim = rng.random_range(1..=3);
        let p = random_params(&mut rng, dim);
        let traj = random_trajectory(&mut rng, 8, dim, 1.5);
        let z = random_z(&mut rng, 3, dim, 1.5);
        let oracle = sparse_log_marginal(&sparse_blocks(&traj, &p, z.locations()));
        assert!(rel_err(log_marginal(&traj, &p, &z).unwrap(), oracle) < 1e-9);
    }
}

#[test]
fn single_transition_is_scalar_gaussian() {
    let p = ModelParams::new(gptd_core::KernelParams::isotropic(1.3, 0.8, 1).unwrap(), 0.2, 0.7).unwrap();
    let traj = gptd_core::Trajectory::single_episode(vec![vec![0.1], vec![0.9]], vec![0.4]).unwrap();
    let z = PseudoInputSet::new(vec![vec![0.1], vec![0.9]]).unwrap();
    let kxy = k(&[0.1], &[0.9], 1.3, &[0.8]);
    let var = 1.3 * (1.0 + 0.49) - 2.0 * 0.7 * kxy + 0.2;
    let expected = -0.5 * (0.16 / var + var.ln() + LN_2PI);
    assert!(rel_err(log_marginal(&traj, &p, &z).unwrap(), expected) < 1e-9);
}

#[test]
fn pseudo_posterior_matches_bayes_rule() {
    let mut rng = rng(23);
    for _ in 0..20 {
        let p = random_params(&mut rng, 2);
        let traj = random_trajectory(&mut rng, 7, 2, 1.5);
        let z = random_z(&mut rng, 4, 2, 1.5);
        let (mean, cov) = pseudo_posterior(&traj, &p, &z).unwrap();
        let (mo, co) = pseudo_conditional(&sparse_blocks(&traj, &p, z.locations()));
        assert!((mean - &mo).amax() < 1e-8 * mo.amax().max(1.0));
        assert!((cov - &co).amax() < 1e-8 * co.amax().max(1.0));
    }
}

#[test]
fn latent_moments_match_conditional_normal() {
    let mut rng = rng(24);
    for _ in 0..20 {
        let p = random_params(&mut rng, 2);
        let z = random_z(&mut rng, 3, 2, 1.5);
        let x: Vec<f64> = (0..2).map(|_| rng.random_range(-1.5..1.5)).collect();
        let (w, v) = latent_likelihood_moments(&x, &z, &p).unwrap();
        let d = Dense::of(&p);
        let kuu = d.kern(z.locations(), z.locations());
        let ku = d.kvec(z.locations(), &x);
        let wo = inv(&kuu) * &ku;
        let vo = d.sf - ku.dot(&wo);
        assert!((w - &wo).amax() < 1e-8 * wo.amax().max(1.0));
        assert!((v - vo.max(0.0)).abs() < 1e-8);
    }
    let p = random_params(&mut rng, 2);
    let z = random_z(&mut rng, 3, 2, 1.5);
    let at = z.locations()[0].clone();
    assert!(latent_likelihood_moments(&at, &z, &p).unwrap().1 <= 1e-8);
}

#[test]
fn pseudo_inputs_at_data_recover_exact_model() {
    let mut rng = rng(25);
    for _ in 0..20 {
        let dim = rng.random_range(1..=2);
        let p = random_params(&mut rng, dim);
        let n = rng.random_range(5..=40);
        let traj = random_trajectory(&mut rng, n, dim, 3.0);
        let z = PseudoInputSet::new(traj.inputs.clone()).unwrap();
        let exact = fit_exact(&traj, &p).unwrap();
        let sparse = fit_sparse(&traj, &p, &z).unwrap();
        let le = lib_exact_log_marginal(&traj, &p).unwrap();
        assert!(rel_err(log_marginal(&traj, &p, &z).unwrap(), le) < 1e-6);
        for _ in 0..100 {
            let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect();
            let (me, ve) = exact.predict(&x).unwrap();
            let (ms, vs) = sparse.predict(&x).unwrap();
            assert!((ms - me).abs() < 1e-6 * (1.0 + me.abs()), "mean {ms} vs {me}");
            assert!((vs - ve).abs() < 1e-6 * p.kernel.signal_variance(), "var {vs} vs {ve}");
        }
    }
}

#[test]
fn gradient_matches_central_differences_every_coordinate() {
    let mut rng = rng(26);
    for _ in 0..20 {
        let p = random_params(&mut rng, 2);
        let traj = random_trajectory(&mut rng, 10, 2, 1.5);
        let z = random_z(&mut rng, 4, 2, 1.5);
        let (_, g) = log_marginal_grad(&traj, &p, &z).unwrap();
        let theta = p.hyper_vec();
        let flat = z.to_flat();
        let nh = theta.len();
        assert_eq!(g.len(), nh + flat.len());
        let eval = |th: &[f64], zf: &[f64]| {
            log_marginal(&traj, &p.with_hyper_vec(th), &PseudoInputSet::from_flat(zf, 2).unwrap()).unwrap()
        };
        for i in 0..g.len() {
            let base = if i < nh { theta[i] } else { flat[i - nh] };
            let h = 1e-5 * base.abs().max(1.0);
            let shifted = |s: f64| {
                let (mut th, mut zf) = (theta.clone(), flat.clone());
                if i < nh {
                    th[i] += s;
                } else {
                    zf[i - nh] += s;
                }
                eval(&th, &zf)
            };
            let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
            assert!((g[i] - fd).abs() <= 1e-4 * fd.abs().max(1e-3), "coord {i}: {} vs {fd}", g[i]);
        }
    }
}

#[test]
fn variance_clamp_violations_are_small() {
    let mut rng = rng(27);
    let p = random_params(&mut rng, 2);
    let traj = random_trajectory(&mut rng, 30, 2, 2.0);
    let z = random_z(&mut rng, 6, 2, 2.0);
    let post = fit_sparse(&traj, &p, &z).unwrap();
    for _ in 0..1000 {
        let x: Vec<f64> = (0..2).map(|_| rng.random_range(-2.5..2.5)).collect();
        let (_, v) = post.predict_raw(&x).unwrap();
        assert!(v >= -1e-6 * p.kernel.signal_variance());
    }
}

#[test]
fn nested_pseudo_sets_improve_median_evidence() {
    let mut rng = rng(28);
    let mut small = Vec::new();
    let mut large = Vec::new();
    for _ in 0..25 {
        let p = random_params(&mut rng, 2);
        let traj = random_trajectory(&mut rng, 30, 2, 2.0);
        let picks = sample(&mut rng, traj.n_inputs(), 12).into_vec();
        let zs: Vec<Vec<f64>> = picks.iter().map(|&i| traj.inputs[i].clone()).collect();
        small.push(log_marginal(&traj, &p, &PseudoInputSet::new(zs[..4].to_vec()).unwrap()).unwrap());
        large.push(log_marginal(&traj, &p, &PseudoInputSet::new(zs).unwrap()).unwrap());
    }
    let median = |mut v: Vec<f64>| {
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    assert!(median(large) >= median(small));
}

#[test]
fn model_file_round_trip() {
    let mut rng = rng(29);
    let p = random_params(&mut rng, 2);
    let traj = random_trajectory(&mut rng, 8, 2, 1.0);
    let z = random_z(&mut rng, 2, 2, 1.0);
    let post = fit_sparse(&traj, &p, &z).unwrap();
    let text = serde_json::to_string(&post).unwrap();
    let back: gptd_core::SparsePosterior = serde_json::from_str(&text).unwrap();
    let x = [0.2, -0.3];
    assert_eq!(post.predict(&x).unwrap(), back.predict(&x).unwrap());
}
