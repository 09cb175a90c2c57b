use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use multiac6_core::ddpg::Batch;
use multiac6_core::rewards;
use multiac6_core::task::state_p_dim;
use multiac6_core::{DVec3, DdpgAgent, GripperPose, Hyperparams, MlpNetwork, OutputActivation, Simulator, Transition};

const M: usize = 4;

fn random_batch(rng: &mut ChaCha8Rng, rows: usize, state_dim: usize, action_dim: usize) -> Batch {
    let mut v = |n: usize| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
    let ts: Vec<Transition> = (0..rows)
        .map(|i| Transition {
            state: v(state_dim),
            action: v(action_dim),
            next_state: v(state_dim),
            reward: -(i as f64) / rows as f64,
            terminal: i % 17 == 0,
        })
        .collect();
    Batch::from_transitions(&ts).unwrap()
}

fn mlp(c: &mut Criterion) {
    let sd = state_p_dim(M);
    let net = MlpNetwork::new(&[sd, 256, 256, 256, 3], OutputActivation::Tanh, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let inputs: Vec<f64> = (0..128 * sd).map(|_| rng.random_range(-1.0..1.0)).collect();
    let single = &inputs[..sd];
    c.bench_function("actor_forward_single", |b| b.iter(|| net.forward(black_box(single)).unwrap()));
    c.bench_function("actor_forward_batch128", |b| {
        b.iter(|| net.forward_batch(black_box(&inputs), 128).unwrap())
    });
    let acts = net.forward_batch(&inputs, 128).unwrap();
    let grads = vec![1.0 / 128.0; 128 * 3];
    c.bench_function("actor_backward_batch128", |b| {
        b.iter(|| net.backward_batch(black_box(&acts), black_box(&grads)).unwrap())
    });
}

fn learn(c: &mut Criterion) {
    let sd = state_p_dim(M);
    let hp = Hyperparams::default();
    let agent = DdpgAgent::new(sd, 3, &hp, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let batch = random_batch(&mut rng, hp.batch_size, sd, 3);
    let mut group = c.benchmark_group("ddpg");
    group.sample_size(20);
    group.bench_function("learn_step_batch128", |b| {
        b.iter_batched_ref(|| agent.clone(), |a| a.learn(black_box(&batch)).unwrap(), BatchSize::LargeInput)
    });
    group.finish();
}

fn sim(c: &mut Criterion) {
    let sim = Simulator::new(Default::default(), Default::default()).unwrap();
    let pose = GripperPose::new(DVec3::new(0.1, 0.0, 0.6), DVec3::ZERO);
    let start = sim.reset(pose).unwrap();
    let target = GripperPose::new(DVec3::new(0.106, 0.0, 0.6), DVec3::ZERO);
    c.bench_function("sim_control_step", |b| {
        b.iter_batched_ref(
            || start.clone(),
            |s| sim.step_in_place(s, black_box(target)).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

fn reward(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut pts = |n: usize| {
        (0..n)
            .map(|_| DVec3::new(rng.random(), rng.random(), rng.random()))
            .collect::<Vec<_>>()
    };
    let (f, fd) = (pts(M), pts(M));
    c.bench_function("reward_max_error", |b| {
        b.iter(|| rewards::reward_max_error(black_box(&f), black_box(&fd)).unwrap())
    });
    c.bench_function("reward_dtw", |b| b.iter(|| rewards::reward_dtw(black_box(&f), black_box(&fd)).unwrap()));
}

criterion_group!(benches, mlp, learn, sim, reward);
criterion_main!(benches);
