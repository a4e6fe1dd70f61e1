//! SVG figures for experiment runs: a histogram of the per-trial statistic
//! and the exceedance frequencies against ε with the theorem tail overlaid.

use std::fs;
use std::path::{Path, PathBuf};

use plotters::prelude::*;

use crate::error::{Error, Result};
use crate::experiment::{read_records, read_summary, SummaryRow};

const SIZE: (u32, u32) = (640, 480);
const BINS: usize = 30;

fn plot_err<E: std::fmt::Debug>(e: E) -> Error {
    Error::Plot(format!("{e:?}"))
}

/// Reads `trials.csv` and its sibling `summary.csv` and writes
/// `<stem>_histogram.svg` and `<stem>_exceedance.svg` next to them.
pub fn emit_plots(trials_csv: &Path) -> Result<Vec<PathBuf>> {
    let records = read_records(trials_csv)?;
    if records.is_empty() {
        return Err(Error::Malformed(format!("{}: no trials", trials_csv.display())));
    }
    let dir = trials_csv.parent().unwrap_or(Path::new("."));
    let summary = read_summary(&dir.join("summary.csv"))?;
    if summary.is_empty() {
        return Err(Error::Malformed("summary.csv has no rows".into()));
    }
    let stem = trials_csv.file_stem().and_then(|s| s.to_str()).unwrap_or("trials");
    let erm = records.iter().all(|r| r.excess.is_some());
    let (label, values): (&str, Vec<f64>) = if erm {
        ("ERM excess", records.iter().filter_map(|r| r.excess).collect())
    } else {
        ("deviation", records.iter().map(|r| r.deviation).collect())
    };
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Malformed("non-finite trial statistic".into()));
    }
    let hist = dir.join(format!("{stem}_histogram.svg"));
    let exceed = dir.join(format!("{stem}_exceedance.svg"));
    fs::write(&hist, histogram_svg(&values, label)?)?;
    fs::write(&exceed, exceedance_svg(&summary)?)?;
    Ok(vec![hist, exceed])
}

pub fn histogram_svg(values: &[f64], label: &str) -> Result<String> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
    let width = (hi - lo) / BINS as f64;
    let mut counts = [0usize; BINS];
    for v in values {
        counts[(((v - lo) / width) as usize).min(BINS - 1)] += 1;
    }
    let top = *counts.iter().max().unwrap_or(&1) as f64 * 1.1;
    let mut out = String::new();
    {
        let root = SVGBackend::with_string(&mut out, SIZE).into_drawing_area();
        root.fill(&WHITE).map_err(plot_err)?;
        let mut chart = ChartBuilder::on(&root)
            .margin(10)
            .x_label_area_size(40)
            .y_label_area_size(50)
            .caption(format!("{label} over {} trials", values.len()), ("sans-serif", 18))
            .build_cartesian_2d(lo..hi, 0.0..top)
            .map_err(plot_err)?;
        chart.configure_mesh().x_desc(label).y_desc("trials").draw().map_err(plot_err)?;
        chart
            .draw_series(counts.iter().enumerate().map(|(i, &c)| {
                let x0 = lo + i as f64 * width;
                Rectangle::new([(x0, 0.0), (x0 + width, c as f64)], BLUE.mix(0.5).filled())
            }))
            .map_err(plot_err)?;
        root.present().map_err(plot_err)?;
    }
    Ok(out)
}

pub fn exceedance_svg(rows: &[SummaryRow]) -> Result<String> {
    let mut eps: Vec<f64> = rows.iter().map(|r| r.eps).collect();
    eps.sort_by(f64::total_cmp);
    eps.dedup();
    let (x0, x1) = match (eps.first(), eps.last()) {
        (Some(a), Some(b)) if b > a => (*a, *b),
        (Some(a), _) => (*a - 0.05, *a + 0.05),
        _ => return Err(Error::Malformed("summary has no ε values".into())),
    };
    let series = |sign: &str, pick: fn(&SummaryRow) -> f64| -> Vec<(f64, f64)> {
        let mut pts: Vec<(f64, f64)> = rows.iter().filter(|r| r.sign == sign).map(|r| (r.eps, pick(r))).collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        pts
    };
    let mut out = String::new();
    {
        let root = SVGBackend::with_string(&mut out, SIZE).into_drawing_area();
        root.fill(&WHITE).map_err(plot_err)?;
        let mut chart = ChartBuilder::on(&root)
            .margin(10)
            .x_label_area_size(40)
            .y_label_area_size(50)
            .caption(format!("exceedance vs eps ({})", rows[0].scenario), ("sans-serif", 18))
            .build_cartesian_2d(x0..x1, 0.0..1.05)
            .map_err(plot_err)?;
        chart.configure_mesh().x_desc("eps").y_desc("frequency").draw().map_err(plot_err)?;
        let tail = series(&rows[0].sign, |r| r.tail);
        chart
            .draw_series(LineSeries::new(tail, RED.stroke_width(2)))
            .map_err(plot_err)?
            .label("tail bound")
            .legend(|(x, y)| PathElement::new([(x, y), (x + 20, y)], RED));
        for (sign, colour) in [("+", BLUE), ("-", GREEN)] {
            let pts = series(sign, |r| r.frequency);
            if pts.is_empty() {
                continue;
            }
            chart
                .draw_series(LineSeries::new(pts.clone(), colour))
                .map_err(plot_err)?
                .label(format!("frequency ({sign})"))
                .legend(move |(x, y)| PathElement::new([(x, y), (x + 20, y)], colour));
            chart.draw_series(pts.into_iter().map(|p| Circle::new(p, 3, colour.filled()))).map_err(plot_err)?;
        }
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(plot_err)?;
        root.present().map_err(plot_err)?;
    }
    Ok(out)
}
