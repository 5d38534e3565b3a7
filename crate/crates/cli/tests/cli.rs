use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "synth.per_class = 20\nsynth.length = 24\nsynth.channels = 3\n\
                     model.hidden = 8\nmodel.layers = 2\nmodel.proj_dim = 8\n\
                     pretrain.epochs = 2\npretrain.batch = 16\nfinetune.epochs = 5\n";

fn tfa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tfa")).args(args).output().unwrap()
}

fn run(cmd: &str, cfg: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    tfa(&args)
}

fn small_config(dir: &Path) -> std::path::PathBuf {
    let p = dir.join("small.cfg");
    fs::write(&p, SMALL).unwrap();
    p
}

fn read(p: &Path) -> String {
    fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn gradcheck_passes_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g");
    let o = tfa(&["gradcheck", "--seed", "7", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report = read(&out.join("gradcheck.txt"));
    let worst: f64 = report
        .lines()
        .find_map(|l| l.strip_prefix("max_rel_error "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(worst <= 1e-3, "{report}");
    for suite in [
        "softdtw",
        "ntxent",
        "cmc",
        "tfa",
        "pipeline_unimodal",
        "pipeline_multimodal",
    ] {
        assert!(report.lines().any(|l| l.starts_with(&format!("{suite},"))), "{suite}");
    }
}

#[test]
fn misspelled_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = tfa(&[
        "pretrain",
        "--set",
        "loss.alpa=0",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("loss.alpa"));
}

#[test]
fn bad_value_and_missing_file_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = tfa(&["pretrain", "--set", "loss.tau=hot", "--out", out]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("loss.tau"));
    let o = tfa(&["pretrain", "--config", "/nonexistent/run.cfg", "--out", out]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(tfa(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(tfa(&["--help"]).status.code(), Some(0));
}

#[test]
fn zero_alpha_matches_disabled_alignment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(run("pretrain", &cfg, &a, &["--set", "loss.alpha=0"]).status.success());
    assert!(run("pretrain", &cfg, &b, &["--set", "loss.tfa=false"]).status.success());
    assert_eq!(read(&a.join("losses.csv")), read(&b.join("losses.csv")));
}

#[test]
fn echoed_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let first = dir.path().join("first");
    assert!(
        run("pretrain", &cfg, &first, &["--seed", "3", "--set", "loss.gamma=0.5"])
            .status
            .success()
    );
    let echo = first.join("config.echo");
    let second = dir.path().join("second");
    assert!(run("pretrain", &echo, &second, &[]).status.success());
    assert_eq!(read(&echo), read(&second.join("config.echo")));
    assert_eq!(read(&first.join("losses.csv")), read(&second.join("losses.csv")));
    assert_eq!(
        fs::read(first.join("checkpoint.bin")).unwrap(),
        fs::read(second.join("checkpoint.bin")).unwrap()
    );
}

#[test]
fn full_workflow_layout_and_eval() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("run");
    for cmd in ["synth", "pretrain", "finetune"] {
        let o = run(cmd, &cfg, &out, &[]);
        assert!(o.status.success(), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let finetune_metrics = read(&out.join("metrics.csv"));
    assert!(run("eval", &cfg, &out, &[]).status.success());
    assert_eq!(finetune_metrics, read(&out.join("metrics.csv")));
    assert!(finetune_metrics.starts_with("class,precision,recall,f1,support\n"));
    assert!(finetune_metrics.lines().last().unwrap().starts_with("macro,"));

    assert!(run("align", &cfg, &out, &["--set", "align.second=5"]).status.success());
    assert!(read(&out.join("summary.txt")).starts_with("pair,softdtw,path_mean_distance\npair_0_5,"));
    for f in [
        "config.echo",
        "checkpoint.bin",
        "classifier.bin",
        "losses.csv",
        "data/manifest.txt",
        "data/train.csv",
        "heatmaps/pair_0_5_alignment.csv",
        "heatmaps/pair_0_5_alignment.pgm",
        "heatmaps/pair_0_5_distances.pgm",
    ] {
        assert!(out.join(f).is_file(), "{f}");
    }

    let o = run("align", &cfg, &out, &["--set", "align.second=100000"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("align.second"));
}

#[test]
fn synthetic_csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("synth");
    assert!(run("synth", &cfg, &out, &[]).status.success());
    let summary = read(&out.join("summary.txt"));
    let windows: usize = summary
        .lines()
        .find_map(|l| l.strip_prefix("windows "))
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(windows, 80);

    let manifest = out.join("data/manifest.txt");
    let csv_cfg = dir.path().join("csv.cfg");
    fs::write(
        &csv_cfg,
        format!(
            "{SMALL}data.source = csv\ndata.manifest = {}\ndata.label_column = label\n\
             data.window = 24\ndata.overlap = 0\n",
            manifest.display()
        ),
    )
    .unwrap();
    let again = dir.path().join("again");
    let o = run("synth", &csv_cfg, &again, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(summary, read(&again.join("summary.txt")));
    for split in ["train", "val", "test"] {
        assert_eq!(
            read(&out.join(format!("data/{split}.csv"))),
            read(&again.join(format!("data/{split}.csv")))
        );
    }
}

#[test]
fn multimodal_align_writes_cross_maps() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("mm");
    let extra = [
        "--set",
        "pretrain.mode=multimodal",
        "--set",
        "synth.channels_b=4",
        "--set",
        "synth.length_b=20",
    ];
    for cmd in ["pretrain", "align"] {
        let o = run(cmd, &cfg, &out, &extra);
        assert!(o.status.success(), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["cross_0_alignment.csv", "cross_1_distances.pgm"] {
        assert!(out.join("heatmaps").join(f).is_file(), "{f}");
    }
}
