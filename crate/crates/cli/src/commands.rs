//! Subcommand implementations.

use std::fs;
use std::path::{Path, PathBuf};

use shadowgraph::evalx::{compare_methods, parse_report, EvalReport, Evaluation, Histogram};
use shadowgraph::imgio::{
    load_gt_table, load_image, load_label_map, parse_gt_table, save_image, save_label_map, GtRecord, Plane, GT_HEADER,
};
use shadowgraph::measure::{load_measurements, parse_measurements, region_props, save_measurements, Region};
use shadowgraph::pipeline::{evaluate, Method};
use shadowgraph::segment::{edge_overlay, segment_image};
use shadowgraph::synth::{generate_dataset, Manifest};
use shadowgraph::train::{save_loss_history, train_epochs_with, TrainSample};
use shadowgraph::unet::{infer, init_params, load_checkpoint, save_checkpoint};
use shadowgraph::{Error, Result};

use crate::config::RunConfig;
use crate::svg::density_chart;
use crate::Command;

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| io_err(path, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

/// A flag value, falling back to the config's `paths.*` entry.
fn pick(flag: Option<PathBuf>, fallback: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
    flag.or_else(|| fallback.clone())
        .ok_or_else(|| Error::Config(format!("--{name} is required (or set paths.{name} in the config)")))
}

pub fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Gen { config, out, n } => {
            let cfg = RunConfig::load_or_default(config.as_deref())?;
            let out = pick(out, &cfg.paths.out, "out")?;
            let m = generate_dataset(&cfg.synth, n, &out)?;
            eprintln!("wrote {} samples to {}", m.entries.len(), out.display());
            Ok(())
        }
        Command::Train { config, data, out } => {
            let cfg = RunConfig::load_or_default(config.as_deref())?;
            train(&cfg, &pick(data, &cfg.paths.data, "data")?, &pick(out, &cfg.paths.out, "out")?)
        }
        Command::Infer {
            config,
            model,
            input,
            out,
        } => {
            let cfg = RunConfig::load_or_default(config.as_deref())?;
            run_infer(
                &pick(model, &cfg.paths.model, "model")?,
                &input,
                &pick(out, &cfg.paths.out, "out")?,
            )
        }
        Command::Segment {
            config,
            binary,
            centroid,
            out,
            image,
            overlay,
        } => {
            let cfg = RunConfig::load_or_default(config.as_deref())?;
            let b = Plane::from(&load_image(&binary)?);
            let c = Plane::from(&load_image(&centroid)?);
            let lm = segment_image(&b, &c, &cfg.segment)?;
            save_label_map(&lm, &out)?;
            if let (Some(image), Some(overlay)) = (image, overlay) {
                save_image(&edge_overlay(&load_image(&image)?, &lm)?, &overlay)?;
            }
            eprintln!("{} regions", lm.region_count());
            Ok(())
        }
        Command::Measure { labels, out } => {
            let regions = region_props(&load_label_map(&labels)?);
            save_measurements(&regions, &out)?;
            eprintln!("{} regions measured", regions.len());
            Ok(())
        }
        Command::Eval { config, pred, gt, out } => {
            let cfg = RunConfig::load_or_default(config.as_deref())?;
            if pred.len() != gt.len() {
                return Err(Error::Config(format!(
                    "{} --pred tables but {} --gt tables",
                    pred.len(),
                    gt.len()
                )));
            }
            let mut ev = Evaluation::new();
            for (p, g) in pred.iter().zip(&gt) {
                ev.add(&load_predictions(p)?, &load_gt_table(g)?, &cfg.eval);
            }
            let report = ev.report(&cfg.eval);
            report.save(&out)?;
            summarize("eval", &report);
            Ok(())
        }
        Command::Compare {
            config,
            data,
            model,
            out,
        } => {
            let cfg = RunConfig::load_or_default(config.as_deref())?;
            compare(
                &cfg,
                &pick(data, &cfg.paths.data, "data")?,
                &pick(model, &cfg.paths.model, "model")?,
                &pick(out, &cfg.paths.out, "out")?,
            )
        }
        Command::Report { input, name, out } => report(&input, &name, &out),
    }
}

fn train(cfg: &RunConfig, data: &Path, out: &Path) -> Result<()> {
    let manifest = Manifest::load(data)?;
    let samples = (0..manifest.entries.len())
        .map(|i| TrainSample::try_from(&manifest.load_sample(i)?))
        .collect::<Result<Vec<_>>>()?;
    create_dir(out)?;
    write(&out.join("run_config.txt"), &cfg.to_text())?;
    let mut params = init_params::<f32>(cfg.unet, cfg.train.seed)?;
    let epochs = cfg.train.epochs;
    let history = train_epochs_with(&mut params, &samples, &cfg.train, &cfg.loss, |l, p| {
        eprintln!(
            "epoch {}/{epochs}: loss {:.6} (bce {:.6}, tv-mse {:.6})",
            l.epoch, l.mean_loss, l.bce, l.tv_mse
        );
        if cfg.train.checkpoint_every > 0 && l.epoch % cfg.train.checkpoint_every == 0 {
            save_checkpoint(p, out.join(format!("epoch_{:04}.stck", l.epoch)))?;
        }
        Ok(())
    })?;
    save_checkpoint(&params, out.join("model.stck"))?;
    save_loss_history(&history, out.join("loss_history.csv"))
}

fn run_infer(model: &Path, input: &Path, out: &Path) -> Result<()> {
    let (params, _) = load_checkpoint(model)?;
    create_dir(out)?;
    let jobs: Vec<(PathBuf, String)> = if input.is_dir() {
        let m = Manifest::load(input)?;
        m.entries.iter().map(|e| (e.image.clone(), format!("{:05}", e.index))).collect()
    } else {
        let stem = input
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "image".into());
        vec![(input.to_path_buf(), stem)]
    };
    for (path, stem) in &jobs {
        let (b, c) = infer(&params, &load_image(path)?)?;
        save_image(&b.to_gray(), out.join(format!("{stem}_binary.pgm")))?;
        save_image(&c.to_gray(), out.join(format!("{stem}_centroid.pgm")))?;
    }
    eprintln!("inferred {} images", jobs.len());
    Ok(())
}

/// Accepts either a measurement table or a ground-truth table, so that
/// ground truth can be scored against itself.
fn load_predictions(path: &Path) -> Result<Vec<Region>> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    if text.lines().next().map(str::trim) == Some(GT_HEADER) {
        Ok(parse_gt_table(&text)?.iter().map(gt_as_region).collect())
    } else {
        parse_measurements(&text).or_else(|_| load_measurements(path))
    }
}

fn gt_as_region(g: &GtRecord) -> Region {
    let (px, py) = (g.cx.round().max(0.0) as usize, g.cy.round().max(0.0) as usize);
    Region {
        label: g.id,
        area: g.area_px,
        cx: g.cx,
        cy: g.cy,
        r_eq: g.r_eq,
        major: 0.0,
        minor: 0.0,
        aspect: g.aspect,
        bbox: (px, py, px, py),
    }
}

fn summarize(name: &str, r: &EvalReport) {
    let ext = r
        .extraction_rate
        .map_or("n/a (no ground truth)".to_string(), |v| format!("{v:.4}"));
    eprintln!(
        "{name}: extraction {ext}, false positives {:.4}, {} gt, {} detected, {} matched",
        r.false_positive_rate, r.n_gt, r.n_pred, r.n_matched
    );
}

fn compare(cfg: &RunConfig, data: &Path, model: &Path, out: &Path) -> Result<()> {
    let manifest = Manifest::load(data)?;
    let samples = (0..manifest.entries.len())
        .map(|i| manifest.load_sample(i))
        .collect::<Result<Vec<_>>>()?;
    let (params, _) = load_checkpoint(model)?;
    let (learned, learned_maps) = evaluate(Method::Learned(&params, &cfg.segment), &samples, &cfg.eval)?;
    let (base, base_maps) = evaluate(Method::Baseline(&cfg.baseline), &samples, &cfg.eval)?;
    let labels = out.join("labels");
    create_dir(&labels)?;
    for (e, (a, b)) in manifest.entries.iter().zip(learned_maps.iter().zip(&base_maps)) {
        save_label_map(a, labels.join(format!("{:05}_learned.pgm", e.index)))?;
        save_label_map(b, labels.join(format!("{:05}_baseline.pgm", e.index)))?;
    }
    learned.save(out.join("learned_report.csv"))?;
    base.save(out.join("baseline_report.csv"))?;
    let cmp = compare_methods(("learned", &learned), ("baseline", &base))?;
    write(&out.join("comparison.csv"), &cmp.to_csv())?;
    write_charts(out, &[("learned", &learned), ("baseline", &base)])?;
    for (name, r) in &cmp.summary {
        summarize(name, r);
    }
    Ok(())
}

fn write_charts(out: &Path, series: &[(&str, &EvalReport)]) -> Result<()> {
    let gt = series.first().map(|s| s.1);
    let size: Vec<(&str, &Histogram)> = series.iter().map(|(n, r)| (*n, &r.size_hist)).collect();
    let aspect: Vec<(&str, &Histogram)> = series.iter().map(|(n, r)| (*n, &r.aspect_hist)).collect();
    let gt_line = |h: fn(&EvalReport) -> &Histogram| gt.filter(|r| r.n_gt > 0).map(|r| ("ground truth", h(r)));
    write(
        &out.join("size_distribution.svg"),
        &density_chart(
            "Equivalent radius distribution",
            "equivalent radius (px)",
            &size,
            gt_line(|r| &r.gt_size_hist),
        ),
    )?;
    write(
        &out.join("aspect_distribution.svg"),
        &density_chart(
            "Aspect ratio distribution",
            "aspect ratio",
            &aspect,
            gt_line(|r| &r.gt_aspect_hist),
        ),
    )
}

/// Rebuilds a report's histograms and counts from its CSV form.
fn report_from_csv(path: &Path) -> Result<EvalReport> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let (metrics, rows) = parse_report(&text)?;
    let metric = |k: &str| metrics.iter().find(|m| m.0 == k).map(|m| m.1.as_str());
    let count = |k: &str| -> Result<usize> {
        metric(k)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Config(format!("{}: missing metric `{k}`", path.display())))
    };
    let hist = |name: &str| -> Histogram {
        let rows: Vec<_> = rows.iter().filter(|r| r.0 == name).collect();
        match rows.first() {
            None => Histogram {
                width: 1.0,
                first: 0,
                counts: Vec::new(),
            },
            Some(r0) => {
                let width = r0.2 - r0.1;
                Histogram {
                    width,
                    first: (r0.1 / width).round() as i64,
                    counts: rows.iter().map(|r| r.3).collect(),
                }
            }
        }
    };
    Ok(EvalReport {
        extraction_rate: metric("extraction_rate").and_then(|v| v.parse().ok()),
        false_positive_rate: metric("false_positive_rate").and_then(|v| v.parse().ok()).unwrap_or(0.0),
        n_gt: count("n_gt")?,
        n_pred: count("n_pred")?,
        n_matched: count("n_matched")?,
        size_hist: hist("size"),
        aspect_hist: hist("aspect"),
        gt_size_hist: hist("gt_size"),
        gt_aspect_hist: hist("gt_aspect"),
    })
}

fn report(inputs: &[PathBuf], names: &[String], out: &Path) -> Result<()> {
    if !names.is_empty() && names.len() != inputs.len() {
        return Err(Error::Config(format!(
            "{} --name values for {} --input files",
            names.len(),
            inputs.len()
        )));
    }
    let reports = inputs.iter().map(|p| report_from_csv(p)).collect::<Result<Vec<_>>>()?;
    let labels: Vec<String> = inputs
        .iter()
        .enumerate()
        .map(|(i, p)| {
            names.get(i).cloned().unwrap_or_else(|| {
                p.file_stem().map_or_else(|| format!("series {i}"), |s| s.to_string_lossy().into_owned())
            })
        })
        .collect();
    create_dir(out)?;
    let series: Vec<(&str, &EvalReport)> = labels.iter().map(String::as_str).zip(&reports).collect();
    write_charts(out, &series)?;
    eprintln!("wrote charts for {} reports to {}", reports.len(), out.display());
    Ok(())
}
