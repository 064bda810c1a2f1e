use nalgebra::DMatrix;
use pggp_core::gibbs::{
    g_conditional, long_run, run_chains_with, step_w, Execution, GibbsChainState, LongRunConfig,
};
use pggp_core::kernel::{factorize, gram_matrix};
use pggp_core::{GibbsConfig, KernelSpec, RngStream};

/// Posterior moments for three latents on a regular grid.
fn grid3(k: &DMatrix<f64>, y: [u8; 3], half: f64, step: f64) -> ([f64; 3], [f64; 3]) {
    let p = k.clone().try_inverse().unwrap();
    let n = (2.0 * half / step).round() as usize + 1;
    let pts: Vec<f64> = (0..n).map(|i| -half + step * i as f64).collect();
    let ll = |g: f64, y: u8| {
        let t = if y == 1 { g } else { -g };
        -(-t).exp().ln_1p()
    };
    let (mut z, mut m, mut s) = (0.0, [0.0; 3], [0.0; 3]);
    for &a in &pts {
        for &b in &pts {
            for &c in &pts {
                let g = [a, b, c];
                let mut q = 0.0;
                for i in 0..3 {
                    for j in 0..3 {
                        q += g[i] * p[(i, j)] * g[j];
                    }
                }
                let w = (-0.5 * q + ll(a, y[0]) + ll(b, y[1]) + ll(c, y[2])).exp();
                z += w;
                for i in 0..3 {
                    m[i] += w * g[i];
                    s[i] += w * g[i] * g[i];
                }
            }
        }
    }
    let mean = m.map(|v| v / z);
    let var = [0, 1, 2].map(|i| s[i] / z - mean[i] * mean[i]);
    (mean, var)
}

#[test]
fn three_point_long_run_matches_grid() {
    let x = [vec![0.0], vec![0.8], vec![2.0]];
    let y = [1u8, 1, 0];
    let spec = KernelSpec::rbf(1.0, 1.5).unwrap();
    let k = gram_matrix(&x, &spec).unwrap();
    let (mean, var) = grid3(&k, y, 7.0, 0.05);
    let samples = long_run(
        &x,
        &y,
        &spec,
        &LongRunConfig {
            seed: 8,
            ..Default::default()
        },
    )
    .unwrap();
    let (gm, gv) = (samples.rb_mean(), samples.rb_variance());
    for i in 0..3 {
        assert!(
            (gm[i] - mean[i]).abs() < 0.05,
            "mean {i}: {} vs {}",
            gm[i],
            mean[i]
        );
        assert!(
            (gv[i] - var[i]).abs() < 0.05,
            "var {i}: {} vs {}",
            gv[i],
            var[i]
        );
    }
}

#[test]
fn raw_and_rao_blackwell_estimates_agree_on_long_chain() {
    let x = [vec![0.0], vec![1.0]];
    let y = [1u8, 1];
    let spec = KernelSpec::rbf(1.0, 1.0).unwrap();
    let cfg = LongRunConfig {
        n_steps: 200_000,
        seed: 3,
        ..Default::default()
    };
    let s = long_run(&x, &y, &spec, &cfg).unwrap();
    let (rm, rv, bm, bv) = (s.mean(), s.variance(), s.rb_mean(), s.rb_variance());
    for i in 0..2 {
        assert!((rm[i] - bm[i]).abs() < 0.03);
        assert!((rv[i] - bv[i]).abs() < 0.05);
    }
}

#[test]
fn conditional_is_permutation_equivariant() {
    let x = vec![
        vec![0.0, 1.0],
        vec![1.0, -0.5],
        vec![2.0, 0.3],
        vec![-1.0, 0.0],
    ];
    let y = vec![1u8, 0, 1, 0];
    let w = vec![0.2, 0.7, 0.4, 1.3];
    let perm = [2usize, 0, 3, 1];
    let spec = KernelSpec::rbf(1.2, 2.0).unwrap();

    let k = factorize(&gram_matrix(&x, &spec).unwrap(), 0.0).unwrap();
    let (m, s) = g_conditional(&w, &y, &k).unwrap();

    let xp: Vec<Vec<f64>> = perm.iter().map(|&i| x[i].clone()).collect();
    let yp: Vec<u8> = perm.iter().map(|&i| y[i]).collect();
    let wp: Vec<f64> = perm.iter().map(|&i| w[i]).collect();
    let kp = factorize(&gram_matrix(&xp, &spec).unwrap(), 0.0).unwrap();
    let (mp, sp) = g_conditional(&wp, &yp, &kp).unwrap();

    for (a, &i) in perm.iter().enumerate() {
        assert!((mp[a] - m[i]).abs() < 1e-12);
        for (b, &j) in perm.iter().enumerate() {
            assert!((sp[(a, b)] - s[(i, j)]).abs() < 1e-12);
        }
    }
}

#[test]
fn parallel_and_sequential_chains_are_identical() {
    let x: Vec<Vec<f64>> = (0..12)
        .map(|i| vec![i as f64 * 0.3, (i % 3) as f64])
        .collect();
    let y: Vec<u8> = (0..12).map(|i| u8::from(i % 2 == 0)).collect();
    let spec = KernelSpec::default();
    let cfg = GibbsConfig {
        n_chains: 8,
        n_steps: 5,
        seed: 4,
    };
    let par = run_chains_with(&x, &y, &spec, &cfg, Execution::Parallel).unwrap();
    let seq = run_chains_with(&x, &y, &spec, &cfg, Execution::Sequential).unwrap();
    assert_eq!(par, seq);
    assert!(par.iter().all(GibbsChainState::is_valid));
}

#[test]
fn w_step_at_zero_latent_has_pg_zero_mean() {
    let mut rng = RngStream::new(12, 0);
    let mut state = GibbsChainState {
        g: vec![0.0; 100],
        w: vec![1.0; 100],
        step: 0,
    };
    let mut all = Vec::new();
    for _ in 0..1_000 {
        step_w(&mut state, &mut rng).unwrap();
        all.extend_from_slice(&state.w);
    }
    let n = all.len() as f64;
    let mean = all.iter().sum::<f64>() / n;
    let var = all.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    assert!(
        ((mean - 0.25) / (var / n).sqrt()).abs() < 3.0,
        "mean {mean}"
    );
}
