//! Gnuplot script emission.
//!
//! `emit_plots` pools the metric CSVs under a directory and writes a
//! `plots/` folder holding one `.dat` file per curve and `plots.gp`, which
//! renders SER-vs-SNR (log y) and MSE-vs-data-size figures to PNG. The
//! script names its data files relatively, so the folder can be moved and
//! rendered with `gnuplot plots.gp` from inside it.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::aggregate::{load_all, pool, Pooled, SeriesKey, AXIS_NAMES};
use crate::metrics::Metric;
use crate::BenchError;

pub const PLOT_DIR: &str = "plots";
pub const SCRIPT_FILE: &str = "plots.gp";

#[derive(Debug, Clone, PartialEq)]
pub struct PlotSummary {
    pub script: PathBuf,
    pub data_files: Vec<PathBuf>,
    pub figures: usize,
    pub curves: usize,
}

fn sanitize(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect()
}

fn axis_label(axis: usize) -> &'static str {
    ["SNR [dB]", "training samples n_t", "iterations Q", "measurements M"][axis]
}

/// Preferred x axes: SNR first for SER, data size first for MSE.
fn preference(metric: Metric) -> [usize; 4] {
    match metric {
        Metric::Ser => [0, 1, 2, 3],
        _ => [1, 3, 2, 0],
    }
}

struct Figure<'a> {
    experiment: &'a str,
    metric: Metric,
    x_axis: usize,
    /// Curve label → points `(x, pooled)` sorted by x.
    curves: BTreeMap<String, Vec<(f64, &'a Pooled)>>,
}

fn figures(pooled: &BTreeMap<SeriesKey, Pooled>) -> Vec<Figure<'_>> {
    let mut by_fig: BTreeMap<(&str, Metric), Vec<(&SeriesKey, &Pooled)>> = BTreeMap::new();
    for (k, v) in pooled {
        if matches!(k.metric, Metric::Ser | Metric::Mse) {
            by_fig.entry((k.experiment.as_str(), k.metric)).or_default().push((k, v));
        }
    }
    let mut out = Vec::new();
    for ((experiment, metric), series) in by_fig {
        let distinct = |axis: usize| {
            let mut vals: Vec<f64> = series.iter().filter_map(|(k, _)| k.point.axis(axis)).collect();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            vals.len()
        };
        let order = preference(metric);
        let Some(x_axis) = order
            .iter()
            .copied()
            .find(|&a| distinct(a) > 1)
            .or_else(|| order.iter().copied().find(|&a| distinct(a) > 0))
        else {
            continue;
        };
        let varying: Vec<usize> = (0..4).filter(|&a| a != x_axis && distinct(a) > 1).collect();
        let mut curves: BTreeMap<String, Vec<(f64, &Pooled)>> = BTreeMap::new();
        for (k, v) in series {
            let Some(x) = k.point.axis(x_axis) else { continue };
            let mut label = k.method.clone();
            for &a in &varying {
                if let Some(val) = k.point.axis(a) {
                    let _ = write!(label, " {}={val}", AXIS_NAMES[a]);
                }
            }
            curves.entry(label).or_default().push((x, v));
        }
        for pts in curves.values_mut() {
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        }
        out.push(Figure {
            experiment,
            metric,
            x_axis,
            curves,
        });
    }
    out
}

/// Writes the plot folder under `dir`. Fails when `dir` holds no metric
/// CSVs or a CSV lacks a required column.
pub fn emit_plots(dir: &Path) -> Result<PlotSummary, BenchError> {
    let rows = load_all(dir)?;
    let pooled = pool(&rows);
    let figs = figures(&pooled);
    let out_dir = dir.join(PLOT_DIR);
    std::fs::create_dir_all(&out_dir).map_err(|e| BenchError::io(&out_dir, e))?;

    let mut script = String::from("# Render with `gnuplot plots.gp` from this directory.\nset terminal pngcairo size 900,600\nset grid\nset key outside right\n");
    let mut data_files = Vec::new();
    let mut curves = 0;
    for fig in &figs {
        let metric = sanitize(&fig.metric.name().to_lowercase());
        let stem = format!("{}_{metric}", sanitize(fig.experiment));
        let _ = writeln!(script, "\nset output '{stem}.png'");
        let _ = writeln!(script, "set title '{} {}'", fig.experiment, fig.metric.name());
        let _ = writeln!(script, "set xlabel '{}'", axis_label(fig.x_axis));
        let _ = writeln!(script, "set ylabel '{}'", fig.metric.name());
        if fig.metric == Metric::Ser {
            script.push_str("set logscale y\n");
        } else {
            script.push_str("unset logscale y\n");
        }
        let mut decls = Vec::new();
        for (label, pts) in &fig.curves {
            let name = format!("{stem}_{}.dat", sanitize(label));
            let mut body = format!("# {}\tvalue\tlow\thigh\n", AXIS_NAMES[fig.x_axis]);
            for (x, p) in pts {
                let _ = writeln!(body, "{x}\t{}\t{}\t{}", p.value, p.lo, p.hi);
            }
            let path = out_dir.join(&name);
            std::fs::write(&path, body).map_err(|e| BenchError::io(&path, e))?;
            data_files.push(path);
            decls.push(format!("'{name}' using 1:2:3:4 with yerrorlines title '{label}'"));
        }
        curves += decls.len();
        let _ = writeln!(script, "plot {}", decls.join(", \\\n     "));
    }
    let script_path = out_dir.join(SCRIPT_FILE);
    std::fs::write(&script_path, script).map_err(|e| BenchError::io(&script_path, e))?;
    Ok(PlotSummary {
        script: script_path,
        data_files,
        figures: figs.len(),
        curves,
    })
}
