//! Hot-path benchmarks: network forward/backward, SINAD, and the front-end
//! sampling chain.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;

use padc_core::metrics::sinad;
use padc_core::nets::NetSpec;
use padc_core::signal::sample_frontend;
use padc_core::{FrontEndConfig, WaveformSpec};

fn bench_net(c: &mut Criterion) {
    let net = NetSpec::linearization(1).build().unwrap();
    let len = 1000;
    let input: Vec<f64> = (0..len).map(|i| 0.25 * (0.05 * i as f64).sin()).collect();
    let inputs = vec![input];
    c.bench_function("linearization_forward_L1000", |b| {
        b.iter(|| net.forward(black_box(&inputs)).unwrap())
    });
    let cache = net.forward_training(&inputs).unwrap();
    let loss_grad = vec![1e-3; len];
    c.bench_function("linearization_backward_L1000", |b| {
        b.iter(|| net.backward(black_box(&cache), black_box(&loss_grad)).unwrap())
    });
    c.bench_function("linearization_train_step_L1000", |b| {
        b.iter_batched(
            || inputs.clone(),
            |x| {
                let cache = net.forward_training(&x).unwrap();
                net.backward(&cache, &loss_grad).unwrap()
            },
            BatchSize::SmallInput,
        )
    });
}

fn bench_metrics(c: &mut Criterion) {
    let n = 2000;
    let fs = 20e9;
    let x: Vec<f64> = (0..n)
        .map(|i| (2.0 * std::f64::consts::PI * 313.0 * i as f64 / n as f64).sin())
        .collect();
    c.bench_function("sinad_L2000", |b| {
        b.iter(|| sinad(black_box(&x), fs).unwrap())
    });
}

fn bench_frontend(c: &mut Criterion) {
    let mut cfg = FrontEndConfig::ideal(20e9, 2);
    cfg.noise_sigma = 1.3e-3;
    cfg.jitter_sigma = 26.5e-15;
    cfg.quant_bits = Some(8);
    let spec = WaveformSpec::sine(3.44e9, 0.4);
    c.bench_function("sample_frontend_2ch_L2000", |b| {
        b.iter(|| sample_frontend(black_box(&spec), black_box(&cfg), 2000).unwrap())
    });
}

criterion_group!(benches, bench_net, bench_metrics, bench_frontend);
criterion_main!(benches);
