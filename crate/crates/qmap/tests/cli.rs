//! End-to-end checks of the `qmap` binary: subcommands, config overrides,
//! output files, and exit codes.

use std::path::Path;
use std::process::{Command, Output};

use qmap::image::synth::synth_corpus;
use qmap::image::write_pgm;

fn qmap_bin(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qmap"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

#[test]
fn sweep_iid_writes_deterministic_csv() {
    let dir = tempfile::tempdir().unwrap();
    write(
        &dir.path().join("model.kv"),
        "kind = iid\nq0 = 0.3\ndensity = uniform\natom = 0.5 0.7\n",
    );
    write(
        &dir.path().join("sweep.kv"),
        "model = model.kv\nsigma = 0.05 0.02\nb = 8\ntrials = 400\nout = sweep.csv\n",
    );
    let run = |seed: &str| {
        let out = qmap_bin(
            &["sweep-iid", "--config", "sweep.kv", "--seed", seed],
            dir.path(),
        );
        assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
        (
            std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap(),
            std::fs::read_to_string(dir.path().join("sweep.csv.mmse.csv")).unwrap(),
        )
    };
    let (a_q, a_m) = run("11");
    let (b_q, b_m) = run("11");
    assert_eq!(a_q, b_q, "same seed must produce byte-identical CSV");
    assert_eq!(a_m, b_m);
    let (c_q, _) = run("12");
    assert_ne!(a_q, c_q, "different seed must change the rows");
    assert!(a_q.starts_with("sigma,lambda,b,n,trials,mse,ratio,structure_error_rate,stderr,wall_time_s\n"));
    assert_eq!(a_q.lines().count(), 3); // header + 2 (sigma, b) rows
    assert!(a_m.lines().count() == 3);
}

#[test]
fn sweep_markov_runs_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    write(
        &dir.path().join("model.kv"),
        "kind = markov\nq0 = 0.2\ndensity = uniform\nbranch = identity 0.8\n",
    );
    write(
        &dir.path().join("sweep.kv"),
        "model = model.kv\nsigma = 0.05\nb = 5\nn = 32\ntrials = 5\n",
    );
    let out = qmap_bin(
        &["sweep-markov", "--config", "sweep.kv", "--seed", "3", "--trials", "3"],
        dir.path(),
    );
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("sigma,lambda,b,n,trials"));
    assert!(stdout.contains(",32,3,"), "override applied: {stdout}");
}

#[test]
fn id_command_reports_slope() {
    let dir = tempfile::tempdir().unwrap();
    write(
        &dir.path().join("model.kv"),
        "kind = markov\nq0 = 0.1\ndensity = uniform\nbranch = identity 0.9\n",
    );
    write(&dir.path().join("id.kv"), "model = model.kv\nb = 6..12\nmode = analytic\n");
    let out = qmap_bin(&["id", "--config", "id.kv", "--seed", "1"], dir.path());
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("slope"));
    assert!(stdout.contains("b=12"));
}

#[test]
fn train_and_denoise_image_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let corpus_dir = dir.path().join("corpus");
    std::fs::create_dir(&corpus_dir).unwrap();
    for (i, img) in synth_corpus(24, 48, 48, 5).iter().enumerate() {
        write_pgm(img, corpus_dir.join(format!("{i:02}.pgm"))).unwrap();
    }
    write(
        &dir.path().join("train.kv"),
        "corpus = corpus\npatches = 64\nout = prior.txt\n",
    );
    let out = qmap_bin(&["train", "--config", "train.kv", "--seed", "9"], dir.path());
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("stored codewords"));
    assert!(dir.path().join("prior.txt").exists());

    let scene = qmap::image::synth::synth_scene(48, 48, 999);
    write_pgm(&scene, dir.path().join("input.pgm")).unwrap();
    write(
        &dir.path().join("denoise.kv"),
        "prior = prior.txt\ninput = input.pgm\nsigma = 25/255\nlambda = 0.024\nout = out.pgm\n",
    );
    let out = qmap_bin(&["denoise-image", "--config", "denoise.kv", "--seed", "4"], dir.path());
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("measured PSNR"));
    assert!(stdout.contains("published reference"));
    assert!(dir.path().join("out.pgm").exists());
    assert!(dir.path().join("out.pgm.thresh.pgm").exists());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    // 2: config errors (missing file counts as unreadable config input)
    write(&dir.path().join("bad.kv"), "sigma = 0.05\nb = 8\n");
    let out = qmap_bin(&["sweep-iid", "--config", "bad.kv", "--seed", "1"], dir.path());
    assert_eq!(out.status.code(), Some(2), "missing model key is a config error");

    // clap usage errors also exit 2
    let out = qmap_bin(&["sweep-iid", "--config", "bad.kv"], dir.path());
    assert_eq!(out.status.code(), Some(2), "--seed is required");

    // 3: i/o errors
    write(&dir.path().join("train.kv"), "corpus = nowhere\nout = p.txt\n");
    let out = qmap_bin(&["train", "--config", "train.kv", "--seed", "1"], dir.path());
    assert_eq!(out.status.code(), Some(3), "missing corpus dir is an i/o error");

    // 4: numerical failures (degenerate breakpoints from constant images)
    let corpus_dir = dir.path().join("flat");
    std::fs::create_dir(&corpus_dir).unwrap();
    let flat = qmap::image::GrayImage::from_fn(16, 16, |_, _| 0.5);
    for i in 0..3 {
        write_pgm(&flat, corpus_dir.join(format!("{i}.pgm"))).unwrap();
    }
    write(&dir.path().join("train2.kv"), "corpus = flat\npatches = 32\nout = p.txt\n");
    let out = qmap_bin(&["train", "--config", "train2.kv", "--seed", "1"], dir.path());
    assert_eq!(out.status.code(), Some(4), "degenerate corpus is a numerical failure");
}

#[test]
fn set_overrides_apply() {
    let dir = tempfile::tempdir().unwrap();
    write(
        &dir.path().join("model.kv"),
        "kind = iid\nq0 = 1.0\ndensity = uniform\n",
    );
    write(&dir.path().join("id.kv"), "model = model.kv\nb = 4..8\nn = 60000\n");
    let out = qmap_bin(
        &["id", "--config", "id.kv", "--seed", "2", "--set", "b=4..7"],
        dir.path(),
    );
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("b=7"));
    assert!(!stdout.contains("b=8"));
}
