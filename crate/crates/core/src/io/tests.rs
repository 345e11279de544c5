use super::dataset::{assign_splits, load_split, parse_manifest, read_manifest, write_dataset};
use super::synth::{chirp, chirp_frequency, pluck_envelope};
use super::*;
use crate::effects::{EffectKind, EffectSpec};
use crate::fx::{process_frames, FxFactory, ParamVector};
use crate::spectral::{hann_periodic, FftPlan};
use std::f64::consts::PI;
use std::path::Path;

const SR: f64 = 22050.0;

fn clip(samples: Vec<f64>) -> AudioClip {
    AudioClip::new("c", samples, SR).unwrap()
}

#[test]
fn float32_round_trip_is_exact() {
    let c = clip((0..1000).map(|i| ((i as f64) * 0.37).sin() * 0.9).collect()).quantized_f32();
    let bytes = wav::encode(&c, SampleFormat::Float32).unwrap();
    let back = wav::decode(&bytes, "c").unwrap();
    assert_eq!(back, c);
}

#[test]
fn pcm16_round_trip_within_one_lsb() {
    let ramp: Vec<f64> = (0..=2000).map(|i| -1.0 + i as f64 / 1000.0).collect();
    let c = clip(ramp.clone());
    let back = wav::decode(&wav::encode(&c, SampleFormat::Pcm16).unwrap(), "c").unwrap();
    let err = back.samples.iter().zip(&ramp).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err <= 2f64.powi(-15), "{err}");
    assert_eq!(back.sample_rate, SR);
}

#[test]
fn odd_rates_survive_the_header() {
    let c = AudioClip::new("c", vec![0.25; 7], 44100.0).unwrap();
    let back = wav::decode(&wav::encode(&c, SampleFormat::Pcm16).unwrap(), "c").unwrap();
    assert_eq!(back.sample_rate, 44100.0);
    assert_eq!(back.samples.len(), 7);
    assert!(wav::encode(&AudioClip::new("c", vec![0.0], 22050.5).unwrap(), SampleFormat::Pcm16).is_err());
}

#[test]
fn truncation_names_the_missing_chunk() {
    let c = clip(vec![0.1; 100]);
    let bytes = wav::encode(&c, SampleFormat::Float32).unwrap();
    let msg = |b: &[u8]| match wav::decode(b, "x") {
        Err(crate::Error::Parse { message, .. }) => message,
        other => panic!("expected a parse error, got {:?}", other.map(|_| ())),
    };
    assert!(msg(&bytes[..bytes.len() - 10]).contains("`data`"));
    assert!(msg(&bytes[..36]).contains("`data`"));
    assert!(msg(&bytes[..12]).contains("`fmt `"));
    assert!(msg(&bytes[..20]).contains("`fmt `"));
    assert!(msg(b"RIFX\0\0\0\0WAVE").contains("RIFF"));
}

fn stereo_pcm16(frames: &[(i16, i16)]) -> Vec<u8> {
    let data_len = frames.len() * 4;
    let mut b = Vec::new();
    b.extend_from_slice(b"RIFF");
    b.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    b.extend_from_slice(b"WAVE");
    // an unknown chunk before `fmt ` is skipped
    b.extend_from_slice(b"LIST");
    b.extend_from_slice(&3u32.to_le_bytes());
    b.extend_from_slice(&[1, 2, 3, 0]);
    b.extend_from_slice(b"fmt ");
    b.extend_from_slice(&16u32.to_le_bytes());
    b.extend_from_slice(&1u16.to_le_bytes());
    b.extend_from_slice(&2u16.to_le_bytes());
    b.extend_from_slice(&22050u32.to_le_bytes());
    b.extend_from_slice(&(22050u32 * 4).to_le_bytes());
    b.extend_from_slice(&4u16.to_le_bytes());
    b.extend_from_slice(&16u16.to_le_bytes());
    b.extend_from_slice(b"data");
    b.extend_from_slice(&(data_len as u32).to_le_bytes());
    for (l, r) in frames {
        b.extend_from_slice(&l.to_le_bytes());
        b.extend_from_slice(&r.to_le_bytes());
    }
    b
}

#[test]
fn stereo_is_averaged() {
    let c = wav::decode(&stereo_pcm16(&[(16384, 0), (-8192, -8192)]), "s").unwrap();
    assert_eq!(c.samples, vec![0.25, -0.25]);
}

#[test]
fn unsupported_codec_is_rejected() {
    let mut b = stereo_pcm16(&[(0, 0)]);
    // bits per sample 16 → 24
    let at = b.windows(4).position(|w| w == b"fmt ").unwrap() + 8 + 14;
    b[at] = 24;
    match wav::decode(&b, "x") {
        Err(crate::Error::Parse { message, offset }) => {
            assert!(message.contains("unsupported codec"));
            assert!(offset > 0);
        }
        other => panic!("{:?}", other.map(|_| ())),
    }
}

#[test]
fn loudness_targets_rms_dbfs() {
    let sine: Vec<f64> = (0..22050).map(|i| (2.0 * PI * 441.0 * i as f64 / SR).sin()).collect();
    let level = rms_dbfs(&sine);
    assert!((level + 3.0103).abs() < 1e-3, "{level}");
    let out = loudness_normalize(&clip(sine.clone()), -25.0).unwrap();
    assert!((rms_dbfs(&out.samples) + 25.0).abs() < 0.01);
    let expected_scale = 10f64.powf((-25.0 - 20.0 * (0.5f64).sqrt().log10()) / 20.0);
    assert!((out.samples[5] / sine[5] - expected_scale).abs() < 1e-9);
    assert!((expected_scale - 10f64.powf(-21.99 / 20.0)).abs() < 1e-4);

    let again = loudness_normalize(&out, -25.0).unwrap();
    assert!((again.samples[5] / out.samples[5] - 1.0).abs() < 1e-9);
    assert!(loudness_normalize(&clip(vec![0.0; 64]), -25.0).is_err());
}

#[test]
fn synthesis_is_deterministic() {
    for kind in [SourceKind::Tones, SourceKind::Chirps, SourceKind::NoiseBursts, SourceKind::Plucks] {
        let a = synth_sources(kind, 2, 22050, SR, 9).unwrap();
        let b = synth_sources(kind, 2, 22050, SR, 9).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0].samples, a[1].samples);
        assert!(a[0].samples.iter().any(|&s| s != 0.0));
        assert_eq!(SourceKind::parse(kind.id()).unwrap(), kind);
    }
}

#[test]
fn pluck_envelope_decays_after_onset() {
    let mut prev = pluck_envelope(0.0, 0.3);
    assert_eq!(prev, 1.0);
    assert_eq!(pluck_envelope(-0.1, 0.3), 0.0);
    for i in 1..1000 {
        let e = pluck_envelope(i as f64 * 0.005, 0.3);
        assert!(e < prev);
        prev = e;
    }
}

#[test]
fn chirp_ridge_follows_the_sweep() {
    let (f0, f1) = (100.0, 8000.0);
    let len = 4 * 22050;
    let x = chirp(f0, f1, len, SR);
    let n = 2048;
    let plan = FftPlan::new(n);
    let w = hann_periodic(n);
    let total = len as f64 / SR;
    let mut lowest = f64::MAX;
    let mut highest: f64 = 0.0;
    for start in (0..len - n).step_by(4096) {
        let seg: Vec<f64> = x[start..start + n].iter().zip(&w).map(|(a, b)| a * b).collect();
        let p = plan.power_spectrum(&seg);
        let k = (0..p.len()).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap();
        let ridge = k as f64 * SR / n as f64;
        let t_mid = (start + n / 2) as f64 / SR;
        let expected = chirp_frequency(f0, f1, t_mid, total);
        // within the sweep covered by one window, plus a bin
        let spread = chirp_frequency(f0, f1, t_mid + n as f64 / SR / 2.0, total) - expected;
        assert!((ridge - expected).abs() <= spread + SR / n as f64, "t={t_mid}: {ridge} vs {expected}");
        lowest = lowest.min(ridge);
        highest = highest.max(ridge);
    }
    assert!(lowest < 150.0 && highest > 7000.0, "{lowest}..{highest}");
}

fn teacher(kind: EffectKind, params: TeacherParams) -> TeacherSpec {
    TeacherSpec {
        effect: EffectSpec::new(kind, SR),
        params,
    }
}

#[test]
fn identity_and_gain_teachers() {
    let src = synth_sources(SourceKind::Tones, 2, 5000, SR, 1).unwrap();
    let id = generate_teacher_pairs(&src, &teacher(EffectKind::Identity { params: 1 }, TeacherParams::Fixed(vec![0.3])), 1024, 0)
        .unwrap();
    assert_eq!(id[0].pair.target.samples, id[0].pair.input.samples);
    let gain = teacher(EffectKind::Gain { min: 0.0, max: 1.0 }, TeacherParams::Fixed(vec![0.5]));
    let g = generate_teacher_pairs(&src, &gain, 1024, 0).unwrap();
    for (t, x) in g[1].pair.target.samples.iter().zip(&g[1].pair.input.samples) {
        assert_eq!(*t, 0.5 * x);
    }
    let wrong = teacher(EffectKind::Gain { min: 0.0, max: 1.0 }, TeacherParams::Fixed(vec![0.5, 0.5]));
    assert!(generate_teacher_pairs(&src, &wrong, 1024, 0).is_err());
    assert!(generate_teacher_pairs(&[], &gain, 1024, 0).is_err());
}

#[test]
fn stored_compressor_targets_are_reproducible() {
    let src = synth_sources(SourceKind::Plucks, 3, 3 * 1024 + 100, SR, 2).unwrap();
    let spec = teacher(EffectKind::MultibandCompressor, TeacherParams::Random { lo: 0.2, hi: 0.8 });
    let pairs = generate_teacher_pairs(&src, &spec, 1024, 7).unwrap();
    assert_eq!(pairs, generate_teacher_pairs(&src, &spec, 1024, 7).unwrap());
    let factory = spec.effect.factory().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let splits = vec![Split::Train, Split::Val, Split::Test];
    let manifest = write_dataset(dir.path(), &pairs, &splits, factory.param_specs(), 1024).unwrap();
    let rows = read_manifest(&manifest).unwrap();
    assert_eq!(rows.len(), 3);
    let val = load_split(&rows, Split::Val).unwrap();
    assert_eq!(val.len(), 1);
    let theta = match &pairs[1].trajectory {
        Trajectory::Constant(p) => p.clone(),
        other => panic!("{other:?}"),
    };
    let mut fx = factory.build();
    let y = process_frames(fx.as_mut(), &val.pairs[0].input.samples, 1024, |_| Ok(theta.clone())).unwrap();
    let err = y.iter().zip(&val.pairs[0].target.samples).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err < 1e-6, "{err}");
    let sidecar = std::fs::read_to_string(dir.path().join(dataset::HIDDEN_PARAMS_FILE)).unwrap();
    assert!(sidecar.starts_with("clip\tknot\ttime_s\tband1.threshold"));
    assert_eq!(sidecar.lines().count(), 4);
}

#[test]
fn piecewise_trajectories_interpolate() {
    let t = Trajectory::PiecewiseLinear {
        knots: vec![ParamVector::splat(1, 0.0), ParamVector::splat(1, 1.0)],
        segment_frames: 4.0,
    };
    assert_eq!(t.at(0).values(), &[0.0]);
    assert_eq!(t.at(2).values(), &[0.5]);
    assert_eq!(t.at(4).values(), &[1.0]);
    assert_eq!(t.at(40).values(), &[1.0]);

    let src = synth_sources(SourceKind::Tones, 1, 3 * 22050, SR, 3).unwrap();
    let spec = teacher(
        EffectKind::Gain { min: 0.0, max: 1.0 },
        TeacherParams::Piecewise {
            segment_seconds: 1.0,
            lo: 0.1,
            hi: 0.9,
        },
    );
    let p = generate_teacher_pairs(&src, &spec, 1024, 1).unwrap();
    match &p[0].trajectory {
        Trajectory::PiecewiseLinear { knots, .. } => assert!(knots.len() >= 4),
        other => panic!("{other:?}"),
    }
}

#[test]
fn split_proportions() {
    let s = assign_splits(100, 3);
    let count = |x: Split| s.iter().filter(|&&v| v == x).count();
    assert_eq!((count(Split::Train), count(Split::Val), count(Split::Test)), (80, 10, 10));
    assert_eq!(s, assign_splits(100, 3));
    let small = assign_splits(3, 1);
    assert_eq!(small.iter().filter(|&&v| v == Split::Train).count(), 1);
}

#[test]
fn manifest_errors_carry_offsets() {
    let text = "a.wav\tb.wav\ttrain\nc.wav\td.wav\tholdout\n";
    match parse_manifest(text, Path::new("/data")) {
        Err(crate::Error::Parse { offset, message }) => {
            assert_eq!(offset, 18);
            assert!(message.contains("holdout"));
        }
        other => panic!("{other:?}"),
    }
    let rows = parse_manifest("# header\na.wav\tb.wav\tval\n", Path::new("/data")).unwrap();
    assert_eq!(rows[0].input, Path::new("/data/a.wav"));
    assert!(parse_manifest("a.wav\tb.wav\n", Path::new(".")).is_err());
}
