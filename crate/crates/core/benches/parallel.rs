//! Sequential vs rayon-parallel execution of the data-parallel kernels.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ndarray::Array2;

use evpinn::data::{prepare, synth_cycle, CycleSpec};
use evpinn::dynamics::VehiclePreset;
use evpinn::nn::{Activation, Network};
use evpinn::pinn::{objective, train_pinn, Collocation, PinnConfig, PinnModel};
use evpinn::rknn::{rk4_integrate_many, PowerTrace};
use evpinn::Execution;

const POLICIES: [Execution; 2] = [Execution::Sequential, Execution::Parallel];

fn name(e: Execution) -> &'static str {
    match e {
        Execution::Sequential => "sequential",
        Execution::Parallel => "parallel",
    }
}

fn batch_forward_backward(c: &mut Criterion) {
    let net = Network::new(&[2, 128, 128, 128, 128, 1], Activation::Tanh, 0).unwrap();
    let x = Array2::from_shape_fn((900, 2), |(i, j)| ((i * 3 + j) as f64 * 0.01).sin());
    let d = Array2::from_elem((900, 1), 1e-3);
    let mut group = c.benchmark_group("mlp_900x128x4");
    for exec in POLICIES {
        group.bench_function(BenchmarkId::new("forward_backward", name(exec)), |b| {
            b.iter(|| {
                let fwd = net.forward_batch(x.view(), exec).unwrap();
                black_box(net.backward_batch(&fwd, d.view(), exec))
            })
        });
    }
    group.finish();
}

fn pinn_objective(c: &mut Criterion) {
    let preset = VehiclePreset::model3lr();
    let log = synth_cycle(&CycleSpec::default(), &preset.fixed, &preset.initial).unwrap();
    let data = prepare(&log, 0.2, 0).unwrap();
    let model = PinnModel::new(&preset, data.scales, &[2, 128, 128, 128, 128, 1], 0).unwrap();
    let mut group = c.benchmark_group("pinn_objective_900");
    for exec in POLICIES {
        group.bench_function(BenchmarkId::new("epoch_gradient", name(exec)), |b| {
            b.iter(|| black_box(objective(&model, &data.train, Some(&data.val), 0.1, Collocation::All, exec).unwrap()))
        });
    }
    group.finish();
}

fn rk4_over_traces(c: &mut Criterion) {
    let traces: Vec<PowerTrace> = (0..64)
        .map(|k| PowerTrace::sample(|t| 10_000.0 + 5_000.0 * (t / (20.0 + k as f64)).sin(), 0.0, 1.0, 2100).unwrap())
        .collect();
    let mut group = c.benchmark_group("rk4_64_traces_2100");
    for exec in POLICIES {
        group.bench_function(BenchmarkId::new("integrate", name(exec)), |b| {
            b.iter(|| black_box(rk4_integrate_many(&traces, 0.5, 0.0, exec)))
        });
    }
    group.finish();
}

fn seed_sweep(c: &mut Criterion) {
    let preset = VehiclePreset::model3lr();
    let log = synth_cycle(&CycleSpec::default(), &preset.fixed, &preset.initial).unwrap();
    let data = prepare(&log, 0.2, 0).unwrap();
    let seeds: Vec<u64> = (0..4).collect();
    let mut group = c.benchmark_group("pinn_seed_sweep_4x20_epochs");
    group.sample_size(10);
    for exec in POLICIES {
        group.bench_function(BenchmarkId::new("train", name(exec)), |b| {
            b.iter(|| {
                exec.map(&seeds, |&seed| {
                    let config = PinnConfig {
                        epochs: 20,
                        layer_sizes: vec![2, 32, 32, 1],
                        seed,
                        execution: Execution::Sequential,
                        ..PinnConfig::default()
                    };
                    train_pinn(&data, &config, &preset).unwrap().1
                })
            })
        });
    }
    group.finish();
}

criterion_group!(benches, batch_forward_backward, pinn_objective, rk4_over_traces, seed_sweep);
criterion_main!(benches);
