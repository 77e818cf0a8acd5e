use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nrr_core::models::{build_autoencoder, build_mlp};
use nrr_core::nn::{gradient_check, CheckLoss, GradCheckOptions, Matrix, Network};

fn uniform(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_vec(
        rows,
        cols,
        (0..rows * cols)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect(),
    )
    .unwrap()
}

/// Fresh networks have zero biases, so a row whose inputs to a layer are all
/// dead sits exactly on the ReLU kink whatever the input jitter. Nudging every
/// parameter moves the check off that degenerate point.
fn perturb(net: &mut Network, rng: &mut ChaCha8Rng) {
    for s in net.param_slices_mut() {
        s.iter_mut().for_each(|v| *v += rng.random_range(-0.1..0.1));
    }
}

#[test]
fn mlp_gradients_match_central_differences() {
    for seed in 0..3 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = build_mlp(11, &[7, 5], 0.2, &mut rng).unwrap();
        perturb(&mut net, &mut rng);
        let x = uniform(6, 11, &mut rng);
        let y = uniform(6, 1, &mut rng);
        let masks = net.sample_masks(6, &mut rng);
        let r = gradient_check(
            &net,
            &x,
            &y,
            CheckLoss::Mse,
            Some(&masks),
            &GradCheckOptions::default(),
        )
        .unwrap();
        assert!(r.pass, "seed {seed}: {:.3e}", r.max_rel_error);
    }
}

#[test]
fn autoencoder_with_skips_matches_central_differences() {
    for seed in 0..3 {
        let mut rng = ChaCha8Rng::seed_from_u64(10 + seed);
        let mut ae = build_autoencoder(10, &[12, 6, 3], 0.1, &mut rng).unwrap();
        assert_eq!(ae.net.skips().len(), 2);
        perturb(&mut ae.net, &mut rng);
        let x = uniform(5, 10, &mut rng);
        let masks = ae.net.sample_masks(5, &mut rng);
        let r = gradient_check(
            &ae.net,
            &x,
            &x,
            CheckLoss::RowSumSquared,
            Some(&masks),
            &GradCheckOptions::default(),
        )
        .unwrap();
        assert!(r.pass, "seed {seed}: {:.3e}", r.max_rel_error);
    }
}
