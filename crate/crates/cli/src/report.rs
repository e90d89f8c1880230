//! Static SVG plots and a markdown summary of training and evaluation runs.

use std::fmt::Write as _;
use std::path::Path;

use egopose::body::ablation::AblationReport;
use egopose::io;
use egopose::training::TrainHistory;
use plotters::prelude::*;
use serde::Deserialize;

use crate::config::ResolvedConfig;
use crate::error::{CliError, Stage};

/// One curve of a history file.
struct Curve {
    label: String,
    steps: Vec<(f64, f64, f64)>,
}

#[derive(Deserialize)]
struct CsvRow {
    step: usize,
    lr: f64,
    loss: f64,
}

fn parse_error(origin: &str, line: usize, message: impl std::fmt::Display) -> CliError {
    CliError::usage(format!("{origin}: parse error at line {line}: {message}"))
}

/// Parses a `step,lr,loss` history CSV into `(step, lr, loss)` triples.
pub fn parse_history_csv(text: &str, origin: &str) -> Result<Vec<(f64, f64, f64)>, CliError> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let mut steps = Vec::new();
    for (i, row) in r.deserialize::<CsvRow>().enumerate() {
        let row = row.map_err(|e| parse_error(origin, i + 2, e))?;
        if !(row.lr.is_finite() && row.loss.is_finite()) {
            return Err(parse_error(origin, i + 2, "non-finite value"));
        }
        steps.push((row.step as f64, row.lr, row.loss));
    }
    Ok(steps)
}

fn load_curve(path: &Path) -> Result<Curve, CliError> {
    let label = path.display().to_string();
    let is_json = path.extension().is_some_and(|e| e == "json");
    let steps = if is_json {
        let h: TrainHistory = io::load_json(path).or_usage()?;
        h.steps.iter().map(|s| (s.step as f64, s.lr, s.loss)).collect()
    } else {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        parse_history_csv(&text, &label)?
    };
    if steps.is_empty() {
        return Err(CliError::usage(format!("{}: history has no steps", path.display())));
    }
    Ok(Curve { label, steps })
}

/// A named scalar for the metric bar chart.
struct Bar {
    label: String,
    value: f64,
}

fn eval_bars(path: &Path) -> Result<Vec<Bar>, CliError> {
    let v: serde_json::Value = io::load_json(path).or_usage()?;
    let label = path.display().to_string();
    let keys = ["mpjpe", "pa_mpjpe", "mpjve_m_per_s", "top1", "mpjpe_plain_mm", "mpjpe_tta_mm"];
    let bars: Vec<Bar> = keys
        .iter()
        .filter_map(|k| v.get(*k).and_then(|x| x.as_f64()).map(|value| Bar { label: format!("{label} {k}"), value }))
        .collect();
    if bars.is_empty() {
        return Err(CliError::usage(format!("{}: no recognized metrics", path.display())));
    }
    Ok(bars)
}

fn plot_err(e: impl std::fmt::Display) -> CliError {
    CliError::usage(format!("plotting: {e}"))
}

fn line_plot(path: &Path, title: &str, y_label: &str, curves: &[(String, Vec<(f64, f64)>)]) -> Result<(), CliError> {
    let root = SVGBackend::new(path, (800, 500)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let x_max = curves
        .iter()
        .flat_map(|(_, c)| c.iter().map(|p| p.0))
        .fold(1.0, f64::max);
    let (mut y_min, mut y_max) = curves
        .iter()
        .flat_map(|(_, c)| c.iter().map(|p| p.1))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| (a.min(y), b.max(y)));
    if y_max <= y_min {
        y_min -= 0.5;
        y_max += 0.5;
    }
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(70)
        .build_cartesian_2d(0.0..x_max, y_min..y_max)
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc("step")
        .y_desc(y_label)
        .draw()
        .map_err(plot_err)?;
    for (i, (label, pts)) in curves.iter().enumerate() {
        let color = Palette99::pick(i).to_rgba();
        chart
            .draw_series(LineSeries::new(pts.iter().copied(), color.stroke_width(2)))
            .map_err(plot_err)?
            .label(label.as_str())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(plot_err)?;
    root.present().map_err(plot_err)
}

fn bar_plot(path: &Path, title: &str, bars: &[Bar]) -> Result<(), CliError> {
    let root = SVGBackend::new(path, (800, 500)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let top = bars.iter().map(|b| b.value).fold(0.0, f64::max).max(1e-12) * 1.1;
    let bottom = bars.iter().map(|b| b.value).fold(0.0, f64::min);
    let n = bars.len();
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(70)
        .build_cartesian_2d(0.0..n as f64, bottom..top)
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .disable_x_mesh()
        .x_labels(n)
        .x_label_formatter(&|x| {
            let i = x.floor() as usize;
            if (x - x.floor() - 0.5).abs() < 1e-9 && i < n {
                (i + 1).to_string()
            } else {
                String::new()
            }
        })
        .draw()
        .map_err(plot_err)?;
    chart
        .draw_series(bars.iter().enumerate().map(|(i, b)| {
            let x = i as f64;
            Rectangle::new([(x + 0.15, 0.0), (x + 0.85, b.value)], Palette99::pick(i).filled())
        }))
        .map_err(plot_err)?;
    root.present().map_err(plot_err)
}

pub fn report(histories: &[std::path::PathBuf], evals: &[std::path::PathBuf], ablation: Option<&Path>, out: &Path) -> Result<(), CliError> {
    if histories.is_empty() && evals.is_empty() && ablation.is_none() {
        return Err(CliError::usage("nothing to report: pass --history, --eval or --ablation"));
    }
    ResolvedConfig {
        params: Some({
            let mut t = toml::Table::new();
            let list = |v: &[std::path::PathBuf]| {
                toml::Value::Array(v.iter().map(|p| toml::Value::String(p.display().to_string())).collect())
            };
            t.insert("history".into(), list(histories));
            t.insert("eval".into(), list(evals));
            if let Some(a) = ablation {
                t.insert("ablation".into(), toml::Value::String(a.display().to_string()));
            }
            t
        }),
        ..ResolvedConfig::new("report", out)
    }
    .write()?;

    let curves: Vec<Curve> = histories.iter().map(|p| load_curve(p)).collect::<Result<_, _>>()?;
    let mut bars: Vec<Bar> = Vec::new();
    for e in evals {
        bars.extend(eval_bars(e)?);
    }
    let ablation: Option<AblationReport> = ablation.map(|p| io::load_json(p).or_usage()).transpose()?;
    if let Some(a) = &ablation {
        bars.extend(a.arms.iter().map(|arm| Bar {
            label: format!("ablation {} (cm)", arm.arm),
            value: arm.mean_val_mpjpe_cm,
        }));
    }

    let mut md = String::from("# Run summary\n\n");
    if !curves.is_empty() {
        let loss: Vec<_> = curves
            .iter()
            .map(|c| (c.label.clone(), c.steps.iter().map(|s| (s.0, s.2)).collect()))
            .collect();
        let lr: Vec<_> = curves
            .iter()
            .map(|c| (c.label.clone(), c.steps.iter().map(|s| (s.0, s.1)).collect()))
            .collect();
        line_plot(&out.join("loss_curve.svg"), "Training loss", "loss", &loss)?;
        line_plot(&out.join("lr_curve.svg"), "Learning rate", "lr", &lr)?;
        md.push_str("## Training\n\n![loss](loss_curve.svg)\n\n![lr](lr_curve.svg)\n\n");
        md.push_str("| history | steps | first loss | final loss | min loss |\n|---|---:|---:|---:|---:|\n");
        for c in &curves {
            let min = c.steps.iter().map(|s| s.2).fold(f64::INFINITY, f64::min);
            writeln!(
                md,
                "| {} | {} | {:.6} | {:.6} | {:.6} |",
                c.label,
                c.steps.len(),
                c.steps[0].2,
                c.steps[c.steps.len() - 1].2,
                min
            )
            .expect("writing to a String");
        }
        md.push('\n');
    }
    if !bars.is_empty() {
        bar_plot(&out.join("metrics.svg"), "Metrics", &bars)?;
        md.push_str("## Metrics\n\n![metrics](metrics.svg)\n\n| bar | metric | value |\n|---:|---|---:|\n");
        for (i, b) in bars.iter().enumerate() {
            writeln!(md, "| {} | {} | {:.6} |", i + 1, b.label, b.value).expect("writing to a String");
        }
        md.push('\n');
    }
    if let Some(a) = &ablation {
        md.push_str("## Modality ladder\n\n| arm | mean val MPJPE (cm) | per seed |\n|---|---:|---|\n");
        for arm in &a.arms {
            let per: Vec<String> = arm.val_mpjpe_cm.iter().map(|v| format!("{v:.4}")).collect();
            writeln!(md, "| {} | {:.6} | {} |", arm.arm, arm.mean_val_mpjpe_cm, per.join(", ")).expect("writing to a String");
        }
        writeln!(
            md,
            "\nMPJPE decreases at every step for every seed: {}.",
            if a.ordering_holds() { "yes" } else { "no" }
        )
        .expect("writing to a String");
    }
    io::write_text(&out.join("summary.md"), &md).or_usage()?;
    println!("wrote report to {}", out.display());
    Ok(())
}
