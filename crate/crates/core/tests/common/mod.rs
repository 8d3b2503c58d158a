#![allow(dead_code)]

pub mod props;

use forcerl_core::nn::{Mlp, MlpSpec, OutputActivation};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Smallest |pre-activation| tolerated in a gradient-check case. Closer to a
/// ReLU kink the finite difference straddles it.
pub const KINK_MARGIN: f64 = 1e-3;
pub const FD_STEP: f64 = 1e-6;

pub struct GradCase {
    pub net: Mlp,
    pub x: Array2<f64>,
    pub dy: Array2<f64>,
}

/// Random small network, input batch and upstream gradient, widths at most
/// `[8, 16, 16, 1]`. Redraws until no hidden pre-activation sits near a kink.
pub fn grad_case(seed: u64) -> GradCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let depth = rng.random_range(1..=3);
        let mut sizes = vec![rng.random_range(1..=8)];
        for _ in 1..depth {
            sizes.push(rng.random_range(1..=16));
        }
        sizes.push(1);
        let output = if rng.random_bool(0.5) {
            OutputActivation::Identity
        } else {
            OutputActivation::Tanh {
                scale: rng.random_range(0.01..2.0),
            }
        };
        let spec = MlpSpec::new(sizes.clone(), output).unwrap();
        let mut net = Mlp::init(&spec, &mut rng);
        for b in net.biases.iter_mut() {
            b.mapv_inplace(|_| rng.random_range(-0.5..0.5));
        }
        let batch = rng.random_range(1..=4);
        let x = Array2::from_shape_fn((batch, sizes[0]), |_| rng.random_range(-1.0..1.0));
        let dy = Array2::from_shape_fn((batch, 1), |_| rng.random_range(-1.0..1.0));
        if min_hidden_preactivation(&net, &x) > KINK_MARGIN {
            return GradCase { net, x, dy };
        }
    }
}

/// Independent forward pass recording hidden pre-activations.
fn min_hidden_preactivation(net: &Mlp, x: &Array2<f64>) -> f64 {
    let mut h = x.clone();
    let mut min = f64::INFINITY;
    for l in 0..net.weights.len() {
        let z = h.dot(&net.weights[l].t()) + &net.biases[l];
        if l + 1 < net.weights.len() {
            min = z.iter().fold(min, |m, v| m.min(v.abs()));
            h = z.mapv(|v| v.max(0.0));
        }
    }
    min
}

fn loss(net: &Mlp, x: &Array2<f64>, dy: &Array2<f64>) -> f64 {
    (net.predict(x.view()) * dy).sum()
}

fn central<F: FnMut(f64) -> f64>(mut f: F, v: f64) -> f64 {
    (f(v + FD_STEP) - f(v - FD_STEP)) / (2.0 * FD_STEP)
}

pub fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / (a.abs() + n.abs()).max(1e-7)
}

/// Worst relative error between the analytic gradients and central
/// differences, over every weight, bias and input entry.
pub fn max_gradient_error(case: &GradCase) -> f64 {
    let GradCase { net, x, dy } = case;
    let (_, cache) = net.forward(x.view());
    let g = net.backward(&cache, dy.view());
    let mut worst: f64 = 0.0;
    for l in 0..net.weights.len() {
        for (idx, &analytic) in g.weights[l].indexed_iter() {
            let numeric = central(
                |v| {
                    let mut p = net.clone();
                    p.weights[l][idx] = v;
                    loss(&p, x, dy)
                },
                net.weights[l][idx],
            );
            worst = worst.max(relative_error(analytic, numeric));
        }
        for (i, &analytic) in g.biases[l].iter().enumerate() {
            let numeric = central(
                |v| {
                    let mut p = net.clone();
                    p.biases[l][i] = v;
                    loss(&p, x, dy)
                },
                net.biases[l][i],
            );
            worst = worst.max(relative_error(analytic, numeric));
        }
    }
    for (idx, &analytic) in g.input.indexed_iter() {
        let numeric = central(
            |v| {
                let mut xp = x.clone();
                xp[idx] = v;
                loss(net, &xp, dy)
            },
            x[idx],
        );
        worst = worst.max(relative_error(analytic, numeric));
    }
    worst
}
