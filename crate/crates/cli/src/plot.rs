use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use vma3c::trainer::{TrainConfig, EVALS_CSV};

use crate::manifest::RunManifest;
use crate::{CliError, CliResult};

#[derive(Args, Debug)]
pub struct PlotArgs {
    /// Run directories, each holding an `evals.csv`.
    #[arg(required = true)]
    pub runs: Vec<PathBuf>,
    /// Output directory for `chart.svg` and `merged.csv`.
    #[arg(long, default_value = "plot")]
    pub out: PathBuf,
    #[arg(long, default_value = "Mean of total rewards")]
    pub title: String,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
pub struct EvalRow {
    pub step: u64,
    pub mean_reward: f64,
    pub stderr: f64,
    pub wallclock_s: f64,
}

#[derive(Clone, Debug)]
pub struct Series {
    pub label: String,
    pub method: String,
    pub error_rate: Option<f64>,
    pub rows: Vec<EvalRow>,
}

pub fn read_run(dir: &Path) -> CliResult<Series> {
    let csv_path = dir.join(EVALS_CSV);
    if !csv_path.is_file() {
        return Err(CliError::new(4, format!("{}: missing {EVALS_CSV}", dir.display())));
    }
    let mut reader = csv::Reader::from_path(&csv_path)
        .map_err(|e| CliError::new(4, format!("{}: {e}", csv_path.display())))?;
    let rows = reader
        .deserialize()
        .collect::<Result<Vec<EvalRow>, _>>()
        .map_err(|e| CliError::new(4, format!("{}: {e}", csv_path.display())))?;
    let cfg: Option<TrainConfig> = fs::read_to_string(dir.join("config.json"))
        .ok()
        .and_then(|t| serde_json::from_str(&t).ok());
    let name = dir
        .file_name()
        .map_or_else(|| dir.display().to_string(), |n| n.to_string_lossy().into_owned());
    let (label, method, error_rate) = match &cfg {
        Some(c) => {
            let method = if c.vismap_enabled { "VMA3C" } else { "A3C" };
            (format!("{method} seed {}", c.seed), method.to_string(), Some(c.env.error_rate))
        }
        None => (name.clone(), name, None),
    };
    Ok(Series {
        label,
        method,
        error_rate,
        rows,
    })
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2",
];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

struct Panel<'a> {
    title: String,
    series: Vec<(usize, &'a Series)>,
}

fn nice_ticks(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect()
}

fn draw_panel(svg: &mut String, panel: &Panel, x0: f64, y0: f64, w: f64, h: f64) {
    let (ml, mr, mt, mb) = (60.0, 15.0, 28.0, 40.0);
    let (pw, ph) = (w - ml - mr, h - mt - mb);
    let rows = panel.series.iter().flat_map(|(_, s)| s.rows.iter());
    let x_max = rows.clone().map(|r| r.step).max().unwrap_or(1).max(1) as f64;
    let y_lo = rows.clone().map(|r| r.mean_reward - r.stderr).fold(0.0, f64::min);
    let mut y_hi = rows.map(|r| r.mean_reward + r.stderr).fold(f64::MIN, f64::max);
    if !(y_hi > y_lo) {
        y_hi = y_lo + 1.0;
    }
    let y_hi = y_hi + 0.05 * (y_hi - y_lo);
    let sx = |s: f64| x0 + ml + pw * s / x_max;
    let sy = |v: f64| y0 + mt + ph * (1.0 - (v - y_lo) / (y_hi - y_lo));

    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" font-size="14" text-anchor="middle">{}</text>"#,
        x0 + ml + pw / 2.0,
        y0 + 18.0,
        esc(&panel.title)
    );
    let _ = writeln!(
        svg,
        r##"<rect x="{:.1}" y="{:.1}" width="{pw:.1}" height="{ph:.1}" fill="none" stroke="#444"/>"##,
        x0 + ml,
        y0 + mt
    );
    for t in nice_ticks(0.0, x_max, 4) {
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="middle">{:.0}</text>"#,
            sx(t),
            y0 + mt + ph + 14.0,
            t
        );
    }
    for t in nice_ticks(y_lo, y_hi, 4) {
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="end">{:.0}</text>"#,
            x0 + ml - 5.0,
            sy(t) + 3.0,
            t
        );
        let _ = writeln!(
            svg,
            r##"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#ddd"/>"##,
            x0 + ml,
            sy(t),
            x0 + ml + pw,
            sy(t)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle">training step</text>"#,
        x0 + ml + pw / 2.0,
        y0 + h - 8.0
    );

    for (k, (color_idx, s)) in panel.series.iter().enumerate() {
        let color = PALETTE[color_idx % PALETTE.len()];
        if s.rows.is_empty() {
            continue;
        }
        let upper: Vec<String> = s
            .rows
            .iter()
            .map(|r| format!("{:.2},{:.2}", sx(r.step as f64), sy(r.mean_reward + r.stderr)))
            .collect();
        let lower: Vec<String> = s
            .rows
            .iter()
            .rev()
            .map(|r| format!("{:.2},{:.2}", sx(r.step as f64), sy(r.mean_reward - r.stderr)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polygon points="{} {}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
            upper.join(" "),
            lower.join(" ")
        );
        let line: Vec<String> = s
            .rows
            .iter()
            .map(|r| format!("{:.2},{:.2}", sx(r.step as f64), sy(r.mean_reward)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.8"><title>{}</title></polyline>"#,
            line.join(" "),
            esc(&s.label)
        );
        let ly = y0 + mt + 12.0 + 14.0 * k as f64;
        let _ = writeln!(
            svg,
            r#"<rect x="{:.1}" y="{:.1}" width="10" height="10" fill="{color}"/><text x="{:.1}" y="{:.1}" font-size="11">{}</text>"#,
            x0 + ml + 8.0,
            ly - 9.0,
            x0 + ml + 22.0,
            ly,
            esc(&s.label)
        );
    }
}

/// One panel, or one panel per error rate when the runs span several.
pub fn render_svg(series: &[Series], title: &str) -> String {
    let mut by_er: BTreeMap<String, Vec<(usize, &Series)>> = BTreeMap::new();
    for (i, s) in series.iter().enumerate() {
        let key = s.error_rate.map_or("unknown".to_string(), |e| format!("{e}"));
        by_er.entry(key).or_default().push((i, s));
    }
    let panels: Vec<Panel> = if by_er.len() > 1 {
        by_er
            .into_iter()
            .map(|(er, series)| Panel {
                title: format!("{title} (ER = {er})"),
                series,
            })
            .collect()
    } else {
        vec![Panel {
            title: title.to_string(),
            series: series.iter().enumerate().collect(),
        }]
    };
    let cols = if panels.len() > 1 { 2 } else { 1 };
    let rows = panels.len().div_ceil(cols);
    let (pw, ph) = (560.0, 360.0);
    let (w, h) = (pw * cols as f64, ph * rows as f64);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    for (k, panel) in panels.iter().enumerate() {
        let (c, r) = (k % cols, k / cols);
        draw_panel(&mut svg, panel, c as f64 * pw, r as f64 * ph, pw, ph);
    }
    svg.push_str("</svg>\n");
    svg
}

pub fn run(args: PlotArgs) -> CliResult {
    let series = args
        .runs
        .iter()
        .map(|d| read_run(d))
        .collect::<CliResult<Vec<_>>>()?;
    let manifest = RunManifest::begin("plot", None, None);
    fs::create_dir_all(&args.out)?;

    let mut merged = csv::Writer::from_path(args.out.join("merged.csv"))
        .map_err(|e| CliError::new(1, e.to_string()))?;
    merged
        .write_record(["run", "label", "method", "error_rate", "step", "mean_reward", "stderr", "wallclock_s"])
        .map_err(|e| CliError::new(1, e.to_string()))?;
    for (dir, s) in args.runs.iter().zip(&series) {
        for r in &s.rows {
            merged
                .write_record([
                    dir.display().to_string(),
                    s.label.clone(),
                    s.method.clone(),
                    s.error_rate.map_or(String::new(), |e| e.to_string()),
                    r.step.to_string(),
                    r.mean_reward.to_string(),
                    r.stderr.to_string(),
                    r.wallclock_s.to_string(),
                ])
                .map_err(|e| CliError::new(1, e.to_string()))?;
        }
    }
    merged.flush()?;
    fs::write(args.out.join("chart.svg"), render_svg(&series, &args.title))?;
    println!("wrote {}", args.out.join("chart.svg").display());
    manifest.finish(&args.out, vec!["chart.svg".into(), "merged.csv".into()])
}
