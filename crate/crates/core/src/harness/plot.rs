//! Convergence curves: trailing moving average per run, then mean and
//! standard deviation across the seeds of each policy kind.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use plotters::prelude::*;

use crate::baselines::PolicyKind;
use crate::error::{Error, Result};
use crate::metrics::{read_metrics, EpisodeRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum XAxis {
    #[default]
    Episodes,
    /// Environment steps, averaged across seeds at each point.
    EnvSteps,
}

impl XAxis {
    fn title(self) -> &'static str {
        match self {
            XAxis::Episodes => "Episode",
            XAxis::EnvSteps => "Environment steps",
        }
    }

    fn csv_name(self) -> &'static str {
        match self {
            XAxis::Episodes => "episode",
            XAxis::EnvSteps => "env_steps",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub policy: PolicyKind,
    pub seeds: usize,
    pub axis: XAxis,
    pub x: Vec<f64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Mean of the last `min(window, i + 1)` values at each index.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(values.len());
    let mut sum = 0.0;
    for (i, &v) in values.iter().enumerate() {
        sum += v;
        if i >= window {
            sum -= values[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}

type Series = (Vec<f64>, Vec<f64>);

/// One curve per policy kind, truncated to that kind's shortest run.
/// Runs without episodes are ignored.
pub fn aggregate(runs: &[Vec<EpisodeRecord>], window: usize, axis: XAxis) -> Result<Vec<Curve>> {
    if window == 0 {
        return Err(Error::Usage("moving-average window must be at least 1".into()));
    }
    // per policy: one (x, smoothed AoI) pair per run
    let mut by_policy: BTreeMap<PolicyKind, Vec<Series>> = BTreeMap::new();
    for run in runs.iter().filter(|r| !r.is_empty()) {
        let series: Vec<f64> = run.iter().map(|r| r.episode_avg_aoi).collect();
        let x = run
            .iter()
            .enumerate()
            .map(|(i, r)| match axis {
                XAxis::Episodes => i as f64,
                XAxis::EnvSteps => r.env_steps as f64,
            })
            .collect();
        by_policy
            .entry(run[0].policy)
            .or_default()
            .push((x, moving_average(&series, window)));
    }
    if by_policy.is_empty() {
        return Err(Error::Plot("no episodes to plot".into()));
    }
    Ok(by_policy
        .into_iter()
        .map(|(policy, runs)| {
            let len = runs.iter().map(|(_, s)| s.len()).min().unwrap_or(0);
            let n = runs.len() as f64;
            let mut x = Vec::with_capacity(len);
            let mut mean = Vec::with_capacity(len);
            let mut std = Vec::with_capacity(len);
            for i in 0..len {
                let m = runs.iter().map(|(_, s)| s[i]).sum::<f64>() / n;
                let var = runs.iter().map(|(_, s)| (s[i] - m).powi(2)).sum::<f64>() / n;
                x.push(runs.iter().map(|(x, _)| x[i]).sum::<f64>() / n);
                mean.push(m);
                std.push(var.sqrt());
            }
            Curve {
                policy,
                seeds: runs.len(),
                axis,
                x,
                mean,
                std,
            }
        })
        .collect())
}

/// Expands a glob into the sorted list of matching files.
pub fn expand_glob(pattern: &str) -> Result<Vec<PathBuf>> {
    let paths = glob::glob(pattern).map_err(|e| Error::Usage(format!("bad glob `{pattern}`: {e}")))?;
    let mut files: Vec<PathBuf> = paths.filter_map(|p| p.ok()).filter(|p| p.is_file()).collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Usage(format!("no metrics files match `{pattern}`")));
    }
    Ok(files)
}

pub fn write_curves_csv(curves: &[Curve], path: &Path) -> Result<()> {
    let axis = curves.first().map_or(XAxis::Episodes, |c| c.axis);
    let mut text = format!("policy,seeds,{},mean_aoi,std_aoi\n", axis.csv_name());
    for c in curves {
        for i in 0..c.mean.len() {
            writeln!(text, "{},{},{},{},{}", c.policy, c.seeds, c.x[i], c.mean[i], c.std[i]).unwrap();
        }
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn colour(kind: PolicyKind) -> RGBColor {
    match kind {
        PolicyKind::Dtd3 => RGBColor(214, 39, 40),
        PolicyKind::Td3 => RGBColor(31, 119, 180),
        PolicyKind::NoChargeDtd3 => RGBColor(255, 127, 14),
        PolicyKind::NoChargeTd3 => RGBColor(44, 160, 44),
        PolicyKind::Random => RGBColor(127, 127, 127),
        PolicyKind::GreedyMaxAoi => RGBColor(148, 103, 189),
    }
}

fn label(kind: PolicyKind) -> &'static str {
    match kind {
        PolicyKind::Dtd3 => "DTD3",
        PolicyKind::Td3 => "TD3",
        PolicyKind::NoChargeDtd3 => "DTD3 (no charging)",
        PolicyKind::NoChargeTd3 => "TD3 (no charging)",
        PolicyKind::Random => "Random",
        PolicyKind::GreedyMaxAoi => "Greedy max-AoI",
    }
}

/// Mean lines with a shaded one-standard-deviation band.
pub fn render_svg(curves: &[Curve], path: &Path, window: usize) -> Result<()> {
    let plot_err = |e: &dyn std::fmt::Display| Error::Plot(e.to_string());
    let axis = curves.first().map_or(XAxis::Episodes, |c| c.axis);
    let x_max = curves.iter().filter_map(|c| c.x.last().copied()).fold(1.0, f64::max);
    let (mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for c in curves {
        for (m, s) in c.mean.iter().zip(&c.std) {
            y_min = y_min.min(m - s);
            y_max = y_max.max(m + s);
        }
    }
    if !y_min.is_finite() {
        (y_min, y_max) = (0.0, 1.0);
    }
    let pad = ((y_max - y_min) * 0.05).max(0.5);
    let (y_min, y_max) = ((y_min - pad).max(0.0), y_max + pad);

    let root = SVGBackend::new(path, (960, 600)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| plot_err(&e))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(
            format!("Average AoI per episode ({window}-episode moving average)"),
            ("sans-serif", 22),
        )
        .margin(16)
        .x_label_area_size(44)
        .y_label_area_size(60)
        .build_cartesian_2d(0.0..x_max, y_min..y_max)
        .map_err(|e| plot_err(&e))?;
    chart
        .configure_mesh()
        .x_desc(axis.title())
        .y_desc("Average AoI (slots)")
        .draw()
        .map_err(|e| plot_err(&e))?;
    for c in curves {
        let col = colour(c.policy);
        let upper = (0..c.mean.len()).map(|i| (c.x[i], c.mean[i] + c.std[i]));
        let lower = (0..c.mean.len()).rev().map(|i| (c.x[i], c.mean[i] - c.std[i]));
        let band: Vec<(f64, f64)> = upper.chain(lower).collect();
        chart
            .draw_series(std::iter::once(Polygon::new(band, col.mix(0.2).filled())))
            .map_err(|e| plot_err(&e))?;
        chart
            .draw_series(LineSeries::new(
                c.x.iter().copied().zip(c.mean.iter().copied()),
                col.stroke_width(2),
            ))
            .map_err(|e| plot_err(&e))?
            .label(format!("{} ({} seeds)", label(c.policy), c.seeds))
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], col.stroke_width(2)));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.85))
        .border_style(BLACK)
        .position(SeriesLabelPosition::UpperRight)
        .draw()
        .map_err(|e| plot_err(&e))?;
    root.present().map_err(|e| plot_err(&e))?;
    Ok(())
}

/// Reads metrics files, aggregates them, and writes the SVG and the curve CSV.
pub fn plot_files(
    inputs: &[PathBuf],
    svg_out: &Path,
    csv_out: &Path,
    window: usize,
    axis: XAxis,
) -> Result<Vec<Curve>> {
    let runs = inputs.iter().map(|p| read_metrics(p)).collect::<Result<Vec<_>>>()?;
    let curves = aggregate(&runs, window, axis)?;
    for out in [svg_out, csv_out] {
        if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    render_svg(&curves, svg_out, window)?;
    write_curves_csv(&curves, csv_out)?;
    Ok(curves)
}
