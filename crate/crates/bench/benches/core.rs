use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use forcerl_core::env::{DrSample, EnvConfig, EnvState, Region};
use forcerl_core::nn::{Mlp, MlpSpec, OutputActivation};
use forcerl_core::trainer::{Agent, AgentConfig, Batch};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BATCH: usize = 256;

fn random_batch(obs_dim: usize, rng: &mut ChaCha8Rng) -> Batch {
    Batch {
        obs: Array2::from_shape_fn((BATCH, obs_dim), |_| rng.random_range(-1.0..1.0)),
        actions: Array1::from_shape_fn(BATCH, |_| rng.random_range(-0.02..0.02)),
        rewards: Array1::from_shape_fn(BATCH, |_| -rng.random_range(0.0..2.0)),
        next_obs: Array2::from_shape_fn((BATCH, obs_dim), |_| rng.random_range(-1.0..1.0)),
        terminals: Array1::zeros(BATCH),
        regions: (0..BATCH)
            .map(|i| if i < BATCH / 2 { Region::Left } else { Region::Right })
            .collect(),
    }
}

fn mlp(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let spec = MlpSpec::standard(14, 1, OutputActivation::Identity);
    let net = Mlp::init(&spec, &mut rng);
    let x = Array2::from_shape_fn((BATCH, 14), |_| rng.random_range(-1.0..1.0));
    c.bench_function("mlp_forward_b256", |b| b.iter(|| net.predict(x.view())));
    c.bench_function("mlp_forward_backward_b256", |b| {
        b.iter(|| {
            let (y, cache) = net.forward(x.view());
            net.backward(&cache, y.view())
        })
    });
    let obs = vec![0.1; 13];
    c.bench_function("mlp_predict_one", |b| b.iter(|| net.predict_one(&obs)));
}

fn env_step(c: &mut Criterion) {
    let cfg = EnvConfig::default();
    let sample = DrSample {
        contact_angle: 0.7,
        initial_force: 3.0,
        goal: 3.0,
        motion_velocity: 0.005,
    };
    c.bench_function("env_step", |b| {
        b.iter_batched(
            || EnvState::from_sample(&cfg, sample).unwrap(),
            |mut s| s.step(0.001).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

fn update(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cfg = EnvConfig::default();
    let agent = Agent::new(cfg.obs_dim(), cfg.a_max, Default::default(), Default::default(), &mut rng);
    let batch = random_batch(cfg.obs_dim(), &mut rng);
    let acfg = AgentConfig::default();
    c.bench_function("ddpg_update_step_b256", |b| {
        b.iter_batched(
            || agent.clone(),
            |mut a| a.update_step(&batch, &acfg).unwrap(),
            BatchSize::LargeInput,
        )
    });
}

criterion_group!(benches, mlp, env_step, update);
criterion_main!(benches);
