use std::path::Path;
use std::process::{Command, Output};

fn shadowgraph(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shadowgraph"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const TINY: &str = "\
synth.width=16
synth.height=16
synth.bubble_count_mean=2
synth.r_min=3
synth.r_max=4
unet.depth=2
unet.base_channels=4
train.epochs=2
train.batch_size=2
";

#[test]
fn no_arguments_prints_usage_and_fails() {
    let o = shadowgraph(&[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Usage"), "{}", stderr(&o));
    assert!(o.stdout.is_empty());
}

#[test]
fn unknown_subcommand_fails() {
    let o = shadowgraph(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(o.stdout.is_empty());
}

#[test]
fn help_goes_to_stderr() {
    let o = shadowgraph(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    assert!(stderr(&o).contains("compare"));
}

#[test]
fn unknown_config_key_is_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "synth.colour=blue\n").unwrap();
    let o = shadowgraph(&["gen", "--config", p(&cfg), "--out", p(&dir.path().join("d")), "--n", "1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("synth.colour"), "{}", stderr(&o));
}

#[test]
fn missing_input_is_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = shadowgraph(&[
        "measure",
        "--labels",
        p(&dir.path().join("absent.pgm")),
        "--out",
        p(&dir.path().join("m.csv")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("absent.pgm"));
}

#[test]
fn gen_is_byte_identical_and_paths_resolve_from_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, format!("{TINY}paths.out=data\n")).unwrap();
    let o = shadowgraph(&["gen", "--config", p(&cfg), "--n", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let data = dir.path().join("data");
    let mut files: Vec<_> = std::fs::read_dir(&data).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    assert_eq!(files.len(), 13);
    let before: Vec<Vec<u8>> = files.iter().map(|f| std::fs::read(f).unwrap()).collect();
    let o = shadowgraph(&["gen", "--config", p(&cfg), "--n", "3"]);
    assert_eq!(o.status.code(), Some(0));
    let after: Vec<Vec<u8>> = files.iter().map(|f| std::fs::read(f).unwrap()).collect();
    assert_eq!(before, after);
}

#[test]
fn ground_truth_against_itself() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert_eq!(shadowgraph(&["gen", "--out", p(&data), "--n", "2"]).status.code(), Some(0));
    let gt0 = data.join("00000_bubbles.csv");
    let gt1 = data.join("00001_bubbles.csv");
    let report = dir.path().join("self.csv");
    let o = shadowgraph(&[
        "eval", "--pred", p(&gt0), "--gt", p(&gt0), "--pred", p(&gt1), "--gt", p(&gt1), "--out", p(&report),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(&report).unwrap();
    assert!(text.contains("extraction_rate,1\n"), "{text}");
    assert!(text.contains("false_positive_rate,0\n"), "{text}");
}

#[test]
fn segment_measure_eval_on_ground_truth_channels() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "synth.width=64\nsynth.height=64\nsynth.bubble_count_mean=4\n").unwrap();
    assert_eq!(shadowgraph(&["gen", "--config", p(&cfg), "--out", p(&data), "--n", "1"]).status.code(), Some(0));
    let labels = dir.path().join("labels.pgm");
    let overlay = dir.path().join("overlay.pgm");
    let o = shadowgraph(&[
        "segment",
        "--binary",
        p(&data.join("00000_binary.pgm")),
        "--centroid",
        p(&data.join("00000_centroid.pgm")),
        "--out",
        p(&labels),
        "--image",
        p(&data.join("00000_image.pgm")),
        "--overlay",
        p(&overlay),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(overlay.exists());
    let meas = dir.path().join("m.csv");
    assert_eq!(shadowgraph(&["measure", "--labels", p(&labels), "--out", p(&meas)]).status.code(), Some(0));
    assert!(std::fs::read_to_string(&meas).unwrap().starts_with("label,area,cx,cy,r_eq,major,minor,aspect\n"));
    let report = dir.path().join("r.csv");
    let o = shadowgraph(&[
        "eval", "--pred", p(&meas), "--gt", p(&data.join("00000_bubbles.csv")), "--out", p(&report),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(std::fs::read_to_string(&report).unwrap().contains("hist,size,"));
}

#[test]
fn train_infer_compare_report_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.cfg");
    std::fs::write(&cfg, TINY).unwrap();
    let data = dir.path().join("data");
    let model_dir = dir.path().join("model");
    assert_eq!(shadowgraph(&["gen", "--config", p(&cfg), "--out", p(&data), "--n", "4"]).status.code(), Some(0));
    let o = shadowgraph(&["train", "--config", p(&cfg), "--data", p(&data), "--out", p(&model_dir)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let model = model_dir.join("model.stck");
    let history = std::fs::read_to_string(model_dir.join("loss_history.csv")).unwrap();
    assert_eq!(history.lines().count(), 3);
    assert!(history.starts_with("epoch,mean_loss,bce_component,tvmse_component\n"));

    let inferred = dir.path().join("inferred");
    let o = shadowgraph(&["infer", "--model", p(&model), "--input", p(&data), "--out", p(&inferred)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(inferred.join("00003_centroid.pgm").exists());

    let run = |out: &Path| {
        let o = shadowgraph(&[
            "compare", "--config", p(&cfg), "--data", p(&data), "--model", p(&model), "--out", p(out),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    };
    let (r1, r2) = (dir.path().join("r1"), dir.path().join("r2"));
    run(&r1);
    run(&r2);
    for f in [
        "learned_report.csv",
        "baseline_report.csv",
        "comparison.csv",
        "size_distribution.svg",
        "aspect_distribution.svg",
        "labels/00000_learned.pgm",
        "labels/00002_baseline.pgm",
    ] {
        let a = std::fs::read(r1.join(f)).unwrap();
        assert_eq!(a, std::fs::read(r2.join(f)).unwrap(), "{f} differs between runs");
    }
    let svg = std::fs::read_to_string(r1.join("size_distribution.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("learned") && svg.contains("baseline"));

    let charts = dir.path().join("charts");
    let o = shadowgraph(&[
        "report",
        "--input",
        p(&r1.join("learned_report.csv")),
        "--input",
        p(&r1.join("baseline_report.csv")),
        "--out",
        p(&charts),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let svg = std::fs::read_to_string(charts.join("aspect_distribution.svg")).unwrap();
    assert!(svg.contains("learned_report") && svg.contains("</svg>"));
}

#[test]
fn compare_without_model_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = shadowgraph(&["compare", "--data", p(dir.path()), "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--model"));
}
