use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use std::sync::Arc;

use blackfx::effects::{EffectKind, EffectSpec};
use blackfx::encoder::{checkpoint, MelConfig};
use blackfx::exec::Executor;
use blackfx::io::wav;
use blackfx::trainer::{render, Geometry, Model, SmootherConfig};

const TINY: &str = "\
task.name = smoke
effect.kind = multiband_compressor
teacher.params = random
data.source = plucks
data.count = 10
data.clip_seconds = 2
trainer.batch_size = 4
trainer.max_epochs = 2
trainer.steps_per_epoch = 5
encoder.channels = 4,8,16
";

const GAIN: &str = "\
effect.kind = gain
teacher.params = fixed
teacher.values = 0.5
data.source = tones
data.count = 6
data.clip_seconds = 1
";

const IDENTITY: &str = "\
effect.kind = identity
teacher.params = fixed
teacher.values = 0.5
data.source = plucks
data.count = 10
data.clip_seconds = 2
trainer.batch_size = 2
trainer.max_epochs = 1
trainer.steps_per_epoch = 2
encoder.channels = 2,4
";

fn blackfx(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_blackfx"))
        .args(args)
        .env("RUST_LOG", "info")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = blackfx(args);
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

fn manifest_rows(dir: &Path) -> usize {
    fs::read_to_string(dir.join("manifest.tsv")).unwrap().lines().count()
}

/// Generates and trains the tiny compressor task once per test.
fn trained(dir: &Path, extra: &[&str]) -> (String, PathBuf, PathBuf) {
    let conf = write_config(dir, "tiny.conf", TINY);
    let data = dir.join("data");
    let run = dir.join("run");
    ok(&["datagen", "--config", &conf, "--out", &s(&data)]);
    let mut args = vec!["train", "--config", &conf];
    let (d, r) = (s(&data), s(&run));
    args.extend(["--data", &d, "--out", &r]);
    args.extend(extra);
    ok(&args);
    (conf, data, run)
}

#[test]
fn datagen_writes_requested_pairs() {
    let tmp = tempfile::tempdir().unwrap();
    let conf = write_config(tmp.path(), "gain.conf", GAIN);
    let out = tmp.path().join("data");
    ok(&["datagen", "--config", &conf, "--out", &s(&out)]);
    assert_eq!(manifest_rows(&out), 6);
}

#[test]
fn datagen_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let conf = write_config(tmp.path(), "gain.conf", GAIN);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&["datagen", "--config", &conf, "--seed", "5", "--out", &s(&a)]);
    ok(&["datagen", "--config", &conf, "--seed", "5", "--out", &s(&b)]);
    let files = |root: &Path| {
        let mut out = Vec::new();
        for sub in [Path::new(""), Path::new("audio")] {
            for e in fs::read_dir(root.join(sub)).unwrap() {
                let path = e.unwrap().path();
                if path.is_file() {
                    out.push(path.strip_prefix(root).unwrap().to_path_buf());
                }
            }
        }
        out.sort();
        out
    };
    let names = files(&a);
    assert_eq!(names, files(&b));
    assert_eq!(names.len(), 3 + 2 * 6);
    for name in names {
        // The snapshot records its own output directory.
        if name == Path::new("config.snapshot") {
            continue;
        }
        assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap(), "{name:?} differs");
    }
}

#[test]
fn datagen_without_source_names_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let conf = write_config(tmp.path(), "bad.conf", "effect.kind = gain\nteacher.params = fixed\nteacher.values = 0.5\n");
    let out_dir = tmp.path().join("data");
    let out = blackfx(&["datagen", "--config", &conf, "--out", &s(&out_dir)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("data.source"));
    assert!(!out_dir.exists());
}

#[test]
fn unknown_config_key_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let conf = write_config(tmp.path(), "bad.conf", "trainer.learning_rate = 1\n");
    let out = blackfx(&["datagen", "--config", &conf, "--out", &s(&tmp.path().join("x"))]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 1") && err.contains("trainer.learning_rate"), "{err}");
}

#[test]
fn smoke_training_logs_increasing_epochs() {
    let tmp = tempfile::tempdir().unwrap();
    let t0 = Instant::now();
    let (_, _, run) = trained(tmp.path(), &[]);
    assert!(t0.elapsed().as_secs() < 60, "smoke run took {:?}", t0.elapsed());
    let metrics = fs::read_to_string(run.join("metrics.tsv")).unwrap();
    let mut lines = metrics.lines();
    assert_eq!(lines.next().unwrap().split('\t').next(), Some("epoch"));
    let epochs: Vec<usize> = lines
        .map(|l| {
            let cols: Vec<&str> = l.split('\t').collect();
            assert_eq!(cols.len(), 6);
            for c in &cols[1..5] {
                assert!(c.parse::<f64>().unwrap().is_finite());
            }
            cols[0].parse().unwrap()
        })
        .collect();
    assert_eq!(epochs, vec![1, 2]);
    assert!(run.join("checkpoint.bfx").exists());
    assert!(run.join("config.snapshot").exists());
}

#[test]
fn finite_difference_training_counts_instances() {
    let tmp = tempfile::tempdir().unwrap();
    let conf = write_config(tmp.path(), "tiny.conf", TINY);
    let data = tmp.path().join("data");
    ok(&["datagen", "--config", &conf, "--out", &s(&data)]);
    let out = ok(&[
        "train",
        "--config",
        &conf,
        "--set",
        "trainer.max_epochs=1",
        "--set",
        "trainer.steps_per_epoch=1",
        "--estimator",
        "fd",
        "--data",
        &s(&data),
        "--out",
        &s(&tmp.path().join("run")),
    ]);
    let log = String::from_utf8_lossy(&out.stderr);
    assert!(log.contains("172 live effect instances"), "{log}");
}

#[test]
fn resume_with_mismatched_effect_fails_before_training() {
    let tmp = tempfile::tempdir().unwrap();
    let (conf, data, run) = trained(tmp.path(), &[]);
    let again = tmp.path().join("again");
    let out = blackfx(&[
        "train",
        "--config",
        &conf,
        "--set",
        "effect.kind=multiband_gate",
        "--data",
        &s(&data),
        "--resume",
        &s(&run.join("checkpoint.bfx")),
        "--out",
        &s(&again),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("21") && err.contains("17"), "{err}");
    assert!(!again.exists());
}

#[test]
fn render_writes_audio_and_trajectory() {
    let tmp = tempfile::tempdir().unwrap();
    let (_, data, run) = trained(tmp.path(), &[]);
    let input = data.join("audio/plucks-0000_input.wav");
    assert!(input.exists());
    let ckpt = s(&run.join("checkpoint.bfx"));
    let rend = tmp.path().join("rend");
    let raw = tmp.path().join("raw");
    ok(&["render", "--checkpoint", &ckpt, "--input", &s(&input), "--out", &s(&rend)]);
    ok(&["render", "--checkpoint", &ckpt, "--input", &s(&input), "--smooth", "0", "--out", &s(&raw)]);

    let len: usize = 2 * 22050;
    let frames = len.div_ceil(1024);
    let csv = fs::read_to_string(rend.join("plucks-0000_input_trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(&header[..2], &["frame", "seconds"]);
    assert_eq!(header.len(), 2 + 21);
    assert!(header.iter().any(|h| h.ends_with("(dB)")));
    assert_eq!(lines.count(), frames);

    let samples = wav::read(&rend.join("plucks-0000_input_rendered.wav")).unwrap().samples.len();
    assert!(samples.abs_diff(len) <= 1024, "{samples} vs {len}");

    // With smoothing off the trajectory is the raw prediction, which differs
    // from the smoothed one after the first frame.
    let raw_csv = fs::read_to_string(raw.join("plucks-0000_input_trajectory.csv")).unwrap();
    assert_eq!(raw_csv.lines().count(), frames + 1);
    assert_eq!(raw_csv.lines().nth(1), csv.lines().nth(1));
    assert_ne!(raw_csv, csv);

    let effect = EffectSpec::new(EffectKind::MultibandCompressor, 22050.0).factory().unwrap();
    let specs = effect.param_specs().clone();
    let encoder = checkpoint::load(&run.join("checkpoint.bfx")).unwrap();
    let model = Model::new(Geometry::default(), MelConfig::default(), encoder, Arc::new(effect)).unwrap();
    let clip = wav::read(&input).unwrap();
    let smoother = SmootherConfig { coefficient: 0.0 };
    let r = render(&model, &clip, smoother, &Executor::sequential()).unwrap();
    for (line, theta) in raw_csv.lines().skip(1).zip(&r.raw) {
        let values: Vec<f64> = line.split(',').skip(2).map(|c| c.parse().unwrap()).collect();
        assert_eq!(values, specs.denormalize(theta).unwrap());
    }
}

#[test]
fn eval_identity_task_is_near_zero_and_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let conf = write_config(tmp.path(), "id.conf", IDENTITY);
    let data = tmp.path().join("data");
    let run = tmp.path().join("run");
    ok(&["datagen", "--config", &conf, "--out", &s(&data)]);
    ok(&["train", "--config", &conf, "--data", &s(&data), "--out", &s(&run)]);
    let ckpt = s(&run.join("checkpoint.bfx"));
    let first = ok(&["eval", "--checkpoint", &ckpt, "--data", &s(&data), "--out", &s(&tmp.path().join("e1"))]);
    let second = ok(&["eval", "--checkpoint", &ckpt, "--data", &s(&data), "--out", &s(&tmp.path().join("e2"))]);
    assert_eq!(first.stdout, second.stdout);

    let report = String::from_utf8(first.stdout).unwrap();
    let mut lines = report.lines();
    let header = lines.next().unwrap();
    assert!(header.contains("baseline"), "{header}");
    let mean: Vec<f64> = report
        .lines()
        .last()
        .unwrap()
        .split('\t')
        .skip(1)
        .map(|c| c.parse().unwrap())
        .collect();
    assert!(mean[0] < 1e-9, "rendered distance {}", mean[0]);
    assert!(mean[1] < 1e-9, "baseline distance {}", mean[1]);
}

#[test]
fn gradcheck_gain_fd_matches_analytic() {
    let out = ok(&["gradcheck", "--effect", "gain"]);
    let table = String::from_utf8(out.stdout).unwrap();
    let row: Vec<&str> = table.lines().nth(1).unwrap().split_whitespace().collect();
    let fd_rel: f64 = row[4].parse().unwrap();
    assert!(fd_rel <= 1e-9, "{table}");
}

#[test]
fn gradcheck_soft_clip_passes() {
    let out = ok(&["gradcheck"]);
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.lines().any(|l| l.starts_with("spsa") && l.ends_with("PASS")), "{table}");
    assert!(table.lines().any(|l| l.starts_with("fd") && l.ends_with("PASS")), "{table}");
}

#[test]
fn gradcheck_failure_exits_nonzero() {
    let out = blackfx(&["gradcheck", "--draws", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL"));
}

#[test]
fn presets_load_by_name() {
    for preset in ["tube-emulation", "gate-cleanup", "mastering"] {
        let out = blackfx(&["gradcheck", "--config", preset, "--effect", "gain", "--draws", "10"]);
        assert!(out.status.success(), "{preset}: {}", String::from_utf8_lossy(&out.stderr));
    }
}
