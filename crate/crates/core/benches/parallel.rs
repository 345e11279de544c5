//! Sequential vs rayon-backed execution of the batch-parallel hot paths.
//! Run with `--no-default-features` to measure the fallback build alone.

use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use blackfx::effects::{EffectKind, EffectSpec};
use blackfx::encoder::MelConfig;
use blackfx::exec::Executor;
use blackfx::fx::{process_frames, FxFactory, ParamVector};
use blackfx::grad::PerturbationConfig;
use blackfx::io::{synth_sources, AudioClip, ClipPair, Dataset, SourceKind};
use blackfx::loss::{FrameLoss, LossConfig};
use blackfx::trainer::{Geometry, Model, Trainer, TrainerConfig};

const SR: f64 = 22050.0;

fn executors() -> Vec<(String, Executor)> {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).max(2);
    vec![
        ("sequential".to_string(), Executor::sequential()),
        (format!("parallel-{workers}"), Executor::new(workers).expect("worker pool")),
    ]
}

fn dataset(clips: usize) -> Dataset {
    let spec = EffectSpec::new(EffectKind::MultibandCompressor, SR);
    let factory = spec.factory().unwrap();
    let pairs = synth_sources(SourceKind::Plucks, clips, 3 * 22050, SR, 1)
        .unwrap()
        .into_iter()
        .map(|c| {
            let mut fx = factory.build();
            let y = process_frames(fx.as_mut(), &c.samples, 1024, |_| Ok(ParamVector::splat(21, 0.4))).unwrap();
            ClipPair::new(c.clone(), AudioClip::new(c.id.clone(), y, SR).unwrap()).unwrap()
        })
        .collect();
    Dataset::new(pairs)
}

fn train_step(c: &mut Criterion) {
    let data = dataset(8);
    let mut group = c.benchmark_group("train_step_m8");
    group.sample_size(10);
    for (name, exec) in executors() {
        let factory: Arc<dyn FxFactory> = Arc::new(EffectSpec::new(EffectKind::MultibandCompressor, SR).factory().unwrap());
        let model = Model::init(Geometry::default(), MelConfig::default(), vec![8, 16, 32], factory, 1).unwrap();
        let cfg = TrainerConfig {
            batch_size: 8,
            lr: 1e-3,
            ..TrainerConfig::default()
        };
        let mut trainer =
            Trainer::new(cfg, PerturbationConfig::default(), LossConfig::default(), model, data.clone(), exec).unwrap();
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| black_box(trainer.train_step().unwrap().total))
        });
    }
    group.finish();
}

fn frame_losses(c: &mut Criterion) {
    let loss = FrameLoss::new(LossConfig::default()).unwrap();
    let frames: Vec<(Vec<f64>, Vec<f64>)> = (0..64)
        .map(|k| {
            let base: Vec<f64> = (0..1536).map(|t| (t as f64 * (0.01 + 0.001 * k as f64)).sin()).collect();
            (base[k..k + 1024].to_vec(), base[256..1280].to_vec())
        })
        .collect();
    let mut group = c.benchmark_group("loss_64_frames");
    for (name, exec) in executors() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                let totals = exec.map(&frames, |_, (y_hat, y)| loss.total_loss(y_hat, y).unwrap().total);
                black_box(totals.iter().sum::<f64>())
            })
        });
    }
    group.finish();
}

criterion_group!(benches, train_step, frame_losses);
criterion_main!(benches);
