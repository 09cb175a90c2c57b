use multiac6_core::nn::{AdamState, GradientSet};
use multiac6_core::{MlpNetwork, OutputActivation};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Straightforward triple-loop evaluation from the flat parameter vector.
fn naive_forward(net: &MlpNetwork, input: &[f64]) -> Vec<f64> {
    let params = net.export_parameters();
    let sizes = net.layer_sizes();
    let mut x = input.to_vec();
    let mut off = 0;
    for k in 0..sizes.len() - 1 {
        let (n_in, n_out) = (sizes[k], sizes[k + 1]);
        let w = &params[off..off + n_in * n_out];
        let b = &params[off + n_in * n_out..off + n_in * n_out + n_out];
        off += n_in * n_out + n_out;
        let mut y = vec![0.0; n_out];
        for o in 0..n_out {
            let mut acc = b[o];
            for i in 0..n_in {
                acc += w[o * n_in + i] * x[i];
            }
            y[o] = if k + 2 < sizes.len() {
                acc.max(0.0)
            } else if net.output_activation() == OutputActivation::Tanh {
                acc.tanh()
            } else {
                acc
            };
        }
        x = y;
    }
    x
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn close(analytic: f64, numeric: f64, rel: f64) -> bool {
    (analytic - numeric).abs() <= rel * analytic.abs().max(numeric.abs()) + 1e-8
}

#[test]
fn forward_matches_naive_evaluation() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for seed in 0..10 {
        for act in [OutputActivation::Tanh, OutputActivation::Identity] {
            let net = MlpNetwork::new(&[4, 3], act, seed).unwrap();
            let deep = MlpNetwork::new(&[4, 7, 5, 3], act, seed).unwrap();
            let x = random_vec(&mut rng, 4);
            for n in [&net, &deep] {
                let fast = n.forward(&x).unwrap();
                for (a, b) in fast.iter().zip(naive_forward(n, &x)) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn batch_forward_equals_row_by_row() {
    let net = MlpNetwork::new(&[5, 16, 16, 2], OutputActivation::Tanh, 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let rows = 9;
    let xs = random_vec(&mut rng, rows * 5);
    let batch = net.forward_batch(&xs, rows).unwrap();
    for (r, x) in xs.chunks_exact(5).enumerate() {
        let single = net.forward(x).unwrap();
        for (a, b) in single.iter().zip(&batch.output()[r * 2..r * 2 + 2]) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn different_seeds_differ() {
    let a = MlpNetwork::new(&[3, 4, 2], OutputActivation::Tanh, 1).unwrap();
    let b = MlpNetwork::new(&[3, 4, 2], OutputActivation::Tanh, 2).unwrap();
    let c = MlpNetwork::new(&[3, 4, 2], OutputActivation::Tanh, 1).unwrap();
    assert_ne!(a.export_parameters(), b.export_parameters());
    assert_eq!(a.export_parameters(), c.export_parameters());
}

fn fd_check(net: &MlpNetwork, x: &[f64], g: &[f64]) -> Result<(), String> {
    let h = 1e-5;
    let (grads, dx) = net.backward(x, g).unwrap();
    let analytic = grads.flatten();
    let base = net.export_parameters();
    let mut probe = net.clone();
    for i in 0..base.len() {
        let mut p = base.clone();
        p[i] = base[i] + h;
        probe.import_parameters(&p).unwrap();
        let up = dot(&probe.forward(x).unwrap(), g);
        p[i] = base[i] - h;
        probe.import_parameters(&p).unwrap();
        let down = dot(&probe.forward(x).unwrap(), g);
        let numeric = (up - down) / (2.0 * h);
        if !close(analytic[i], numeric, 1e-4) {
            return Err(format!("parameter {i}: analytic {} numeric {numeric}", analytic[i]));
        }
    }
    for i in 0..x.len() {
        let mut xp = x.to_vec();
        xp[i] += h;
        let up = dot(&net.forward(&xp).unwrap(), g);
        xp[i] -= 2.0 * h;
        let down = dot(&net.forward(&xp).unwrap(), g);
        let numeric = (up - down) / (2.0 * h);
        if !close(dx[i], numeric, 1e-4) {
            return Err(format!("input {i}: analytic {} numeric {numeric}", dx[i]));
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn backward_matches_central_differences(seed in 0u64..10_000, tanh in any::<bool>()) {
        let act = if tanh { OutputActivation::Tanh } else { OutputActivation::Identity };
        let net = MlpNetwork::new(&[6, 8, 2], act, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        let x = random_vec(&mut rng, 6);
        let g = random_vec(&mut rng, 2);
        prop_assert!(fd_check(&net, &x, &g).is_ok(), "{:?}", fd_check(&net, &x, &g));
    }

    #[test]
    fn deeper_backward_matches_central_differences(seed in 0u64..10_000) {
        let net = MlpNetwork::new(&[5, 7, 6, 3], OutputActivation::Tanh, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(31));
        let x = random_vec(&mut rng, 5);
        let g = random_vec(&mut rng, 3);
        prop_assert!(fd_check(&net, &x, &g).is_ok(), "{:?}", fd_check(&net, &x, &g));
    }
}

#[test]
fn zero_output_gradient_gives_zero_gradients() {
    let net = MlpNetwork::new(&[6, 8, 2], OutputActivation::Tanh, 9).unwrap();
    let (grads, dx) = net.backward(&[0.3; 6], &[0.0, 0.0]).unwrap();
    assert!(grads.is_zero());
    assert!(dx.iter().all(|&v| v == 0.0));
}

#[test]
fn adam_first_step_moves_by_learning_rate() {
    let mut net = MlpNetwork::zeros(&[1, 1], OutputActivation::Identity).unwrap();
    net.import_parameters(&[0.25, -0.5]).unwrap();
    let mut opt = AdamState::new(&net, 0.001);
    let mut grads = GradientSet::zeros_for(&net);
    grads.layers[0].weights[0] = 0.5;
    opt.step(&mut net, &grads).unwrap();
    // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
    let expected = 0.25 - 0.001 * 0.5 / (0.5 + 1e-8);
    let p = net.export_parameters();
    assert!((p[0] - expected).abs() < 1e-15);
    assert_eq!(p[1], -0.5);
    assert_eq!(opt.step_count, 1);
}

#[test]
fn adam_is_deterministic() {
    let net = MlpNetwork::new(&[3, 4, 1], OutputActivation::Identity, 5).unwrap();
    let (grads, _) = net.backward(&[0.1, 0.2, 0.3], &[1.0]).unwrap();
    let run = || {
        let mut n = net.clone();
        let mut o = AdamState::new(&n, 0.01);
        for _ in 0..3 {
            o.step(&mut n, &grads).unwrap();
        }
        (n, o)
    };
    assert_eq!(run(), run());
}
