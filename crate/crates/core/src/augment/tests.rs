use super::*;
use crate::numcore::{Activation, Matrix, Mlp};
use crate::rng;
use crate::gradcheck::{central_diff, rel_err};
use crate::Error;

fn two_class_data(n_per: usize, seed: u64) -> (Matrix<f64>, Vec<usize>, Matrix<f64>) {
    let mut r = rng::seeded(seed);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for c in 0..2 {
        let mu = if c == 0 { 2.0 } else { -2.0 };
        for _ in 0..n_per {
            rows.push((0..4).map(|_| mu + 0.3 * rng::normal::<f64, _>(&mut r)).collect::<Vec<_>>());
            labels.push(c);
        }
    }
    let attrs = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
    (Matrix::from_rows(&rows).unwrap(), labels, attrs)
}

#[test]
fn zero_net_scores_one_half() {
    let net = Mlp::zeros(&[5, 3, 1], &[Activation::Relu, Activation::Sigmoid]).unwrap();
    let cn = ContrastiveNet::from_mlp(net, 3).unwrap();
    let attrs = Matrix::from_fn(4, 2, |r, c| (r + c) as f64);
    let s = cn.scores(&[1.0, -2.0, 0.5], &attrs).unwrap();
    assert_eq!(s, vec![0.5; 4]);
}

#[test]
fn scores_increase_with_output_bias() {
    let mut r = rng::seeded(1);
    let mut cn = ContrastiveNet::<f64>::init(3, 2, 4, &mut r).unwrap();
    let attrs = Matrix::from_fn(2, 2, |_, _| rng::normal(&mut r));
    let x = [0.1, 0.2, 0.3];
    let mut prev = cn.scores(&x, &attrs).unwrap();
    for b in [1.0, 5.0, 20.0, 40.0] {
        cn.net.layers_mut()[1].bias = vec![b];
        let s = cn.scores(&x, &attrs).unwrap();
        assert!(s.iter().zip(&prev).all(|(a, p)| a >= p));
        prev = s;
    }
    assert!(prev.iter().all(|&s| s > 1.0 - 1e-12));
}

#[test]
fn scores_match_per_pair_evaluation() {
    let mut r = rng::seeded(2);
    let cn = ContrastiveNet::<f64>::init(5, 3, 8, &mut r).unwrap();
    let attrs = Matrix::from_fn(4, 3, |_, _| rng::normal(&mut r));
    let xs = Matrix::from_fn(3, 5, |_, _| rng::normal(&mut r));
    let batch = cn.scores_batch(&xs, &attrs).unwrap();
    for n in 0..3 {
        for i in 0..4 {
            let mut pair = xs.row(n).to_vec();
            pair.extend_from_slice(attrs.row(i));
            let direct = cn.net.forward(&Matrix::row_vector(&pair)).unwrap().get(0, 0);
            assert!((batch.get(n, i) - direct).abs() < 1e-12);
        }
    }
}

#[test]
fn loss_examples() {
    assert_eq!(contrastive_loss(&[0.0, 1.0, 0.0], 1), 0.0);
    assert_eq!(contrastive_loss(&[0.5, 0.5], 0), 0.5);
}

#[test]
fn entropy_examples() {
    assert!((prediction_entropy(&[0.5, 0.5]) + 2f64.ln()).abs() < 1e-12);
    assert!((prediction_entropy(&[0.5f64, 0.5]) - (-0.693147)).abs() < 1e-6);
    assert!(prediction_entropy(&[1.0f64 - 1e-12]).abs() < 1e-11);
    let h = prediction_entropy(&[0.9f64, 0.1]);
    assert!((h - (0.9 * 0.9f64.ln() + 0.1 * 0.1f64.ln())).abs() < 1e-15);
    assert!((h + 0.325083).abs() < 1e-6);
    // clamped at the ends rather than producing NaN
    assert!(prediction_entropy(&[0.0f64, 1.0]).is_finite());
    assert_eq!(shannon_entropy(&[0.5, 0.5]), 2f64.ln());
}

#[test]
fn input_gradient_matches_finite_differences() {
    let mut r = rng::seeded(3);
    let cn = ContrastiveNet::<f64>::init(4, 3, 10, &mut r).unwrap();
    let attrs = Matrix::from_fn(5, 3, |_, _| rng::uniform(&mut r, 0.0, 1.0));
    let x = Matrix::from_fn(1, 4, |_, _| rng::normal(&mut r));
    for weight in [0.0, 0.7] {
        let (obj, grad) = cn.objective_input_grad(&x, &[2], &attrs, weight).unwrap();
        let f = |p: &[f64]| {
            let s = cn.scores(p, &attrs).unwrap();
            contrastive_loss(&s, 2) + weight * prediction_entropy(&s)
        };
        assert!((obj[0] - f(x.as_slice())).abs() < 1e-12);
        let numeric = central_diff(x.as_slice(), 1e-6, f);
        for (a, n) in grad.as_slice().iter().zip(&numeric) {
            assert!(rel_err(*a, *n) < 1e-4, "{a} vs {n}");
        }
    }
}

#[test]
fn parameter_gradient_matches_finite_differences() {
    let mut r = rng::seeded(4);
    let cn = ContrastiveNet::<f64>::init(3, 2, 6, &mut r).unwrap();
    let attrs = Matrix::from_fn(3, 2, |_, _| rng::uniform(&mut r, 0.0, 1.0));
    let xs = Matrix::from_fn(4, 3, |_, _| rng::normal(&mut r));
    let targets = [0, 2, 1, 1];
    let (_, g) = cn.loss_and_grad(&xs, &targets, &attrs).unwrap();
    let numeric = central_diff(&cn.net.params(), 1e-6, |p| {
        let mut c = cn.clone();
        c.net.set_params(p).unwrap();
        c.loss_and_grad(&xs, &targets, &attrs).unwrap().0
    });
    for (a, n) in g.iter().zip(&numeric) {
        assert!(rel_err(*a, *n) < 1e-4, "{a} vs {n}");
    }
}

#[test]
fn training_separates_two_classes() {
    let (xs, labels, attrs) = two_class_data(50, 5);
    let mut r = rng::seeded(6);
    let mut cn = ContrastiveNet::<f64>::init(4, 2, 16, &mut r).unwrap();
    let cfg = ContrastiveConfig { hidden_dim: 16, epochs: 200, batch_size: 32, lr: 1e-2 };
    let hist = train_contrastive(&mut cn, &xs, &labels, &attrs, &cfg, &mut r).unwrap();
    assert!(hist.last().unwrap() < &hist[0]);
    let scores = cn.scores_batch(&xs, &attrs).unwrap();
    for (n, &y) in labels.iter().enumerate() {
        for i in 0..2 {
            if i == y {
                assert!(scores.get(n, i) > 0.9);
            } else {
                assert!(scores.get(n, i) < 0.1);
            }
        }
    }
}

#[test]
fn zero_epochs_leave_network_unchanged() {
    let (xs, labels, attrs) = two_class_data(5, 7);
    let mut r = rng::seeded(8);
    let mut cn = ContrastiveNet::<f64>::init(4, 2, 8, &mut r).unwrap();
    let before = cn.clone();
    let cfg = ContrastiveConfig { epochs: 0, ..ContrastiveConfig::default() };
    let hist = train_contrastive(&mut cn, &xs, &labels, &attrs, &cfg, &mut r).unwrap();
    assert_eq!(cn, before);
    assert_eq!(hist.len(), 1);
}

#[test]
fn mining_config_rejects_zero_steps() {
    let cfg = MiningConfig { steps: 0, ..MiningConfig::default() };
    assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    assert!(MiningConfig { eta: 0.0, ..MiningConfig::default() }.validate().is_err());
    assert!(MiningConfig { lambda_ent: -1.0, ..MiningConfig::default() }.validate().is_err());
}

#[test]
fn single_step_matches_finite_difference_step() {
    let mut r = rng::seeded(9);
    let cn = ContrastiveNet::<f64>::init(2, 2, 5, &mut r).unwrap();
    let attrs = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![0.5, 0.5]]).unwrap();
    let x = [0.4, -0.3];
    for (mode, lambda) in [(SignMode::Intent, 0.8), (SignMode::Literal, 0.8)] {
        let cfg = MiningConfig { eta: 0.1, steps: 1, lambda_ent: lambda, sign_mode: mode, cap_fraction: 1.0 };
        let mined = mine_boundary(&cn, &x, 1, &attrs, &cfg).unwrap();
        let signed_weight = if mode == SignMode::Intent { lambda } else { -lambda };
        let grad = central_diff(&x, 1e-6, |p| {
            let s = cn.scores(p, &attrs).unwrap();
            contrastive_loss(&s, 1) + signed_weight * prediction_entropy(&s)
        });
        let dir = if mode == SignMode::Intent { -1.0 } else { 1.0 };
        for k in 0..2 {
            let expect = x[k] + dir * 0.1 * grad[k];
            assert!((mined[k] - expect).abs() < 1e-8, "{mode:?}: {} vs {expect}", mined[k]);
        }
    }
}

#[test]
fn flat_objective_is_a_fixed_point() {
    // First layer ignores x entirely, so ∇ₓ vanishes.
    let mut r = rng::seeded(10);
    let mut cn = ContrastiveNet::<f64>::init(3, 2, 4, &mut r).unwrap();
    for row in 0..4 {
        for col in 0..3 {
            cn.net.layers_mut()[0].weight.set(row, col, 0.0);
        }
    }
    let attrs = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
    let cfg = MiningConfig { eta: 1e-3, steps: 5, lambda_ent: 0.0, ..MiningConfig::default() };
    let x = [0.3, 0.1, -0.7];
    assert_eq!(mine_boundary(&cn, &x, 0, &attrs, &cfg).unwrap(), x.to_vec());
}

#[test]
fn mining_raises_entropy_and_leaves_network_alone() {
    let (xs, labels, attrs) = two_class_data(30, 11);
    let mut r = rng::seeded(12);
    let mut cn = ContrastiveNet::<f64>::init(4, 2, 16, &mut r).unwrap();
    let cfg = ContrastiveConfig { hidden_dim: 16, epochs: 50, batch_size: 16, lr: 1e-2 };
    train_contrastive(&mut cn, &xs, &labels, &attrs, &cfg, &mut r).unwrap();
    let before = cn.fingerprint();
    let mcfg = MiningConfig { eta: 0.5, steps: 10, lambda_ent: 1.0, ..MiningConfig::default() };
    let mined = mine_batch(&cn, &xs, &labels, &attrs, &mcfg).unwrap();
    assert_eq!(cn.fingerprint(), before);
    let mean_h = |m: &Matrix<f64>| {
        let s = cn.scores_batch(m, &attrs).unwrap();
        s.iter_rows().map(shannon_entropy).sum::<f64>() / s.rows() as f64
    };
    assert!(mean_h(&mined) > mean_h(&xs));
}

#[test]
fn small_steps_without_entropy_never_raise_the_loss() {
    let (xs, labels, attrs) = two_class_data(10, 13);
    let mut r = rng::seeded(14);
    let mut cn = ContrastiveNet::<f64>::init(4, 2, 8, &mut r).unwrap();
    let cfg = ContrastiveConfig { hidden_dim: 8, epochs: 5, batch_size: 8, lr: 1e-2 };
    train_contrastive(&mut cn, &xs, &labels, &attrs, &cfg, &mut r).unwrap();
    let mcfg = MiningConfig { eta: 1e-3, steps: 1, lambda_ent: 0.0, ..MiningConfig::default() };
    let mut cur = xs.clone();
    let loss = |m: &Matrix<f64>| cn.objective_input_grad(m, &labels, &attrs, 0.0).unwrap().0;
    for _ in 0..20 {
        let next = mine_batch(&cn, &cur, &labels, &attrs, &mcfg).unwrap();
        for (a, b) in loss(&next).iter().zip(loss(&cur)) {
            assert!(*a <= b + 1e-9);
        }
        cur = next;
    }
}

#[test]
fn perturb_degenerate_cases() {
    let mut r = rng::seeded(15);
    let x = [1.0, -2.0, 3.5];
    assert_eq!(perturb(&x, &PerturbConfig { lambda_perturb: 0.0, p_drop: 1.0 }, &mut r), x.to_vec());
    assert_eq!(perturb(&x, &PerturbConfig { lambda_perturb: 0.7, p_drop: 0.0 }, &mut r), x.to_vec());
    assert!(PerturbConfig { lambda_perturb: 0.1, p_drop: 1.5 }.validate().is_err());
    assert!(PerturbConfig { lambda_perturb: -0.1, p_drop: 0.5 }.validate().is_err());
}

#[test]
fn perturbation_noise_is_standard_normal() {
    let mut r = rng::seeded(16);
    let cfg = PerturbConfig { lambda_perturb: 0.3, p_drop: 1.0 };
    let x = [0.5, -1.0, 2.0];
    let n = 100_000;
    let mut sum = [0.0; 3];
    let mut sq = [0.0; 3];
    for _ in 0..n {
        let v = perturb(&x, &cfg, &mut r);
        for k in 0..3 {
            let e = (v[k] - x[k]) / cfg.lambda_perturb;
            sum[k] += e;
            sq[k] += e * e;
        }
    }
    for k in 0..3 {
        let mean = sum[k] / n as f64;
        let var = sq[k] / n as f64 - mean * mean;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "var {var}");
    }
}

#[test]
fn perturbation_preserves_prototype_in_expectation() {
    let mut r = rng::seeded(17);
    let cfg = PerturbConfig { lambda_perturb: 0.5, p_drop: 0.6 };
    let x = [1.0, 2.0, -3.0, 0.0];
    let n = 10_000;
    let mut acc = [0.0; 4];
    for _ in 0..n {
        for (a, v) in acc.iter_mut().zip(perturb(&x, &cfg, &mut r)) {
            *a += v;
        }
    }
    for k in 0..4 {
        assert!((acc[k] / n as f64 - x[k]).abs() < 0.02 * cfg.lambda_perturb);
    }
}

#[test]
fn json_roundtrip() {
    let mut r = rng::seeded(18);
    let cn = ContrastiveNet::<f64>::init(3, 2, 4, &mut r).unwrap();
    let back = ContrastiveNet::<f64>::from_json(&cn.to_json()).unwrap();
    assert_eq!(back, cn);
    assert_eq!(back.fingerprint(), cn.fingerprint());
}
