use super::*;
use crate::effects::{Gain, SoftClip};
use crate::fx::probe::ProbeFactory;
use crate::fx::{ParamSpec, ParamSpecSet};
use proptest::prelude::*;

/// `y_t = Σ_i θ_i · basis_i[t]`, linear in the normalized parameters.
#[derive(Clone)]
struct LinearProbe {
    specs: ParamSpecSet,
    basis: Vec<Vec<f64>>,
}

impl LinearProbe {
    fn new(basis: Vec<Vec<f64>>) -> Self {
        let specs = (0..basis.len())
            .map(|i| ParamSpec::linear(&format!("p{i}"), "", 0.0, 1.0))
            .collect();
        Self {
            specs: ParamSpecSet::new(specs).unwrap(),
            basis,
        }
    }
}

impl BlackboxFx for LinearProbe {
    fn param_specs(&self) -> &ParamSpecSet {
        &self.specs
    }

    fn block_size(&self) -> usize {
        self.basis[0].len()
    }

    fn process_block(&mut self, _input: &[f64], params: &ParamVector, output: &mut [f64]) {
        for (t, y) in output.iter_mut().enumerate() {
            *y = params
                .values()
                .iter()
                .zip(&self.basis)
                .map(|(p, b)| p * b[t])
                .sum();
        }
    }

    fn reset(&mut self) {}
}

/// Emits the constant frame `θ²`.
#[derive(Clone)]
struct SquareProbe {
    specs: ParamSpecSet,
}

impl BlackboxFx for SquareProbe {
    fn param_specs(&self) -> &ParamSpecSet {
        &self.specs
    }

    fn process_block(&mut self, _input: &[f64], params: &ParamVector, output: &mut [f64]) {
        output.fill(params.values()[0].powi(2));
    }

    fn reset(&mut self) {}
}

fn factory_of<E: BlackboxFx + Clone + 'static>(e: E) -> impl Fn() -> Box<dyn BlackboxFx> + Send + Sync
where
    E: Sync,
{
    move || Box::new(e.clone()) as Box<dyn BlackboxFx>
}

fn two_param_probe() -> LinearProbe {
    // v = [1, 1, 1]: c = (Σa, Σb) = (3, 5)
    LinearProbe::new(vec![vec![1.0, 1.0, 1.0], vec![2.0, 2.0, 1.0]])
}

#[test]
fn linear_two_param_pattern_and_average() {
    let f = factory_of(two_param_probe());
    let x = [0.0; 3];
    let v = [1.0; 3];
    let theta = ParamVector::splat(2, 0.5);
    let mut r = ReplicaSet::new(&f);
    let delta = PerturbationVector::new(vec![1.0, -1.0]).unwrap();
    let g = spsa_vjp_with(&mut r, &x, &theta, &v, 0.01, &delta).unwrap().grad;
    assert!((g[0] + 2.0).abs() < 1e-9 && (g[1] - 2.0).abs() < 1e-9, "{g:?}");

    let mut mean = [0.0; 2];
    for k in 0..4 {
        let d = PerturbationVector::pattern(2, k);
        let g = spsa_vjp_with(&mut r, &x, &theta, &v, 0.01, &d).unwrap().grad;
        mean[0] += g[0] / 4.0;
        mean[1] += g[1] / 4.0;
    }
    assert!((mean[0] - 3.0).abs() < 1e-9 && (mean[1] - 5.0).abs() < 1e-9, "{mean:?}");
}

#[test]
fn single_param_spsa_equals_sum() {
    let f = || Box::new(Gain::new(0.0, 1.0).unwrap()) as Box<dyn BlackboxFx>;
    let x = [0.3, -1.2, 0.7, 2.0];
    let v = [1.0; 4];
    let expected: f64 = x.iter().sum();
    for eps in [0.001, 0.01, 0.1] {
        for s in [1.0, -1.0] {
            let mut r = ReplicaSet::new(&f);
            let d = PerturbationVector::new(vec![s]).unwrap();
            let g = spsa_vjp_with(&mut r, &x, &ParamVector::splat(1, 0.5), &v, eps, &d)
                .unwrap()
                .grad;
            assert!((g[0] - expected).abs() < 1e-9, "eps {eps}: {g:?}");
        }
    }
}

#[test]
fn zero_upstream_gives_zero_gradient() {
    let f = || Box::new(SoftClip::new()) as Box<dyn BlackboxFx>;
    let x = [0.1, 0.5, -0.9];
    let mut r = ReplicaSet::new(&f);
    let mut rng = rng::stream(3, Purpose::Perturbation, &[0]);
    let out = spsa_vjp(&mut r, &x, &ParamVector::splat(2, 0.4), &[0.0; 3], 0.01, &mut rng).unwrap();
    assert_eq!(out.grad, vec![0.0, 0.0]);
    let mut pool = FdPool::new(&f);
    let out = fd_vjp(&mut pool, &x, &ParamVector::splat(2, 0.4), &[0.0; 3], 0.01).unwrap();
    assert_eq!(out.grad, vec![0.0, 0.0]);
}

#[test]
fn fd_is_exact_on_linear_and_quadratic() {
    let f = || Box::new(Gain::new(0.0, 1.0).unwrap()) as Box<dyn BlackboxFx>;
    let mut pool = FdPool::new(&f);
    let out = fd_vjp(&mut pool, &[1.0, 2.0], &ParamVector::splat(1, 0.5), &[1.0, 1.0], 0.01).unwrap();
    assert!((out.grad[0] - 3.0).abs() < 1e-12);
    assert_eq!(out.output, vec![0.5, 1.0]);

    let sq = SquareProbe {
        specs: ParamSpecSet::new(vec![ParamSpec::linear("t", "", 0.0, 1.0)]).unwrap(),
    };
    let f = factory_of(sq);
    for eps in [1e-4, 0.01, 0.1] {
        let mut pool = FdPool::new(&f);
        let out = fd_vjp(&mut pool, &[0.0; 4], &ParamVector::splat(1, 0.3), &[0.25; 4], eps).unwrap();
        assert!((out.grad[0] - 0.6).abs() < 1e-9, "eps {eps}: {}", out.grad[0]);
    }
}

#[test]
fn perturbed_call_counts() {
    let probe = ProbeFactory::new(|| {
        Box::new(crate::effects::MultibandCompressor::new(22050.0, &Default::default()).unwrap())
            as Box<dyn BlackboxFx>
    })
    .counters_only();
    let x = vec![0.1; 1024];
    let v = vec![1.0; 1024];
    let theta = ParamVector::splat(21, 0.5);

    let mut pool = FdPool::new(&probe);
    fd_backward(&mut pool, &x, &theta, &v, 0.01).unwrap();
    let perturbed: usize = probe.logs()[1..].iter().map(|l| crate::fx::probe::lock(l).blocks).sum();
    // the compressor works in 64-sample blocks
    assert_eq!(perturbed / (1024 / 64), 42);

    let probe = ProbeFactory::new(|| {
        Box::new(crate::effects::MultibandCompressor::new(22050.0, &Default::default()).unwrap())
            as Box<dyn BlackboxFx>
    })
    .with_block_size(1024)
    .counters_only();
    let mut r = ReplicaSet::new(&probe);
    let mut rng = rng::stream(0, Purpose::Perturbation, &[0]);
    spsa_vjp(&mut r, &x, &theta, &v, 0.01, &mut rng).unwrap();
    let logs = probe.logs();
    let counts: Vec<usize> = logs.iter().map(|l| crate::fx::probe::lock(l).blocks).collect();
    assert_eq!(counts, vec![1, 1, 1]);
}

#[test]
fn perturbation_support_and_balance() {
    let mut rng = rng::stream(11, Purpose::Perturbation, &[]);
    let mut sums = [0.0; 4];
    let draws = 100_000;
    for _ in 0..draws {
        let d = sample_perturbation(4, &mut rng);
        for (s, v) in sums.iter_mut().zip(d.values()) {
            assert!(*v == 1.0 || *v == -1.0);
            *s += v;
        }
    }
    for s in sums {
        assert!((s / draws as f64).abs() < 0.02);
    }
    let a = sample_perturbation(6, &mut rng::stream(5, Purpose::Perturbation, &[1, 2]));
    let b = sample_perturbation(6, &mut rng::stream(5, Purpose::Perturbation, &[1, 2]));
    assert_eq!(a, b);
    assert!(PerturbationVector::new(vec![1.0, 0.5]).is_err());
}

#[test]
fn soft_clip_gradcheck() {
    let x: Vec<f64> = (0..256).map(|i| (i as f64 * 0.07).sin() * 0.8).collect();
    let v: Vec<f64> = (0..256).map(|i| (i as f64 * 0.013).cos()).collect();
    let theta = ParamVector::new(vec![0.4, 0.6]).unwrap();
    let check = analytic_vjp_check(&SoftClip::new(), &x, &theta, &v, 1e-3, 1000, 9).unwrap();
    let fd_err = (0..2)
        .map(|i| (check.fd[i] - check.analytic[i]).abs())
        .fold(0.0, f64::max)
        / check.analytic.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    assert!(fd_err < 1e-4, "fd {fd_err}");
    for e in check.spsa_relative_error() {
        assert!(e < 0.05, "spsa {:?} vs {:?}", check.spsa_mean, check.analytic);
    }
}

#[test]
fn gain_gradcheck_matches_range_width() {
    let x = [0.5, -0.25, 1.0];
    let v = [2.0, 1.0, -1.0];
    let gain = Gain::new(-2.0, 6.0).unwrap();
    let check = analytic_vjp_check(&gain, &x, &ParamVector::splat(1, 0.5), &v, 0.01, 4, 0).unwrap();
    // Σ v·x = 1 − 0.25 − 1 = −0.25, times range width 8
    assert!((check.analytic[0] + 2.0).abs() < 1e-12);
    assert!(check.fd_relative_error()[0] < 1e-9);
}

#[test]
fn layer_dispatches_both_estimators() {
    let f = factory_of(two_param_probe());
    let x = [0.0; 3];
    let v = [1.0; 3];
    let theta = ParamVector::splat(2, 0.5);
    let mut fd = BlackboxLayer::new(Estimator::Fd, &f);
    fd.forward(&x, &theta).unwrap();
    let mut rng = rng::stream(0, Purpose::Perturbation, &[]);
    let g = fd.backward(&x, &theta, &v, 0.01, &mut rng).unwrap();
    assert!((g[0] - 3.0).abs() < 1e-9 && (g[1] - 5.0).abs() < 1e-9);
    assert_eq!(Estimator::Fd.instances_per_slot(21), 43);
    assert_eq!(Estimator::Spsa.instances_per_slot(21), 3);
    assert!(Estimator::parse("newton").is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn spsa_pattern_average_equals_fd(
        p in 1usize..=8,
        seed in any::<u64>(),
        theta in 0.05f64..0.95,
    ) {
        let n = 8;
        let mut r = rng::stream(seed, Purpose::GradCheck, &[]);
        let basis: Vec<Vec<f64>> = (0..p)
            .map(|_| (0..n).map(|_| r.gen_range(-1.0..1.0)).collect())
            .collect();
        let v: Vec<f64> = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
        let f = factory_of(LinearProbe::new(basis));
        let x = vec![0.0; n];
        let theta = ParamVector::splat(p, theta);
        let eps = 0.01;
        let fd = fd_vjp(&mut FdPool::new(&f), &x, &theta, &v, eps).unwrap().grad;
        let mut replicas = ReplicaSet::new(&f);
        let patterns = 1u64 << p;
        let mut mean = vec![0.0; p];
        for k in 0..patterns {
            let d = PerturbationVector::pattern(p, k);
            let g = spsa_vjp_with(&mut replicas, &x, &theta, &v, eps, &d).unwrap().grad;
            for (m, g) in mean.iter_mut().zip(g) {
                *m += g;
            }
        }
        let scale = fd.iter().fold(0.0f64, |m, g| m.max(g.abs())).max(1e-12);
        for (m, f) in mean.iter().zip(&fd) {
            prop_assert!((m / patterns as f64 - f).abs() / scale < 1e-9);
        }
    }
}
