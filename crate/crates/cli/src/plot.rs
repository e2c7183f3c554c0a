//! Static SVG line plots of the run results.

use plotters::prelude::*;

use crate::config::Experiment;
use crate::error::CliError;
use crate::run::{post_switch_errors, PointResult, SummaryRow};

const SIZE: (u32, u32) = (800, 500);

fn plot_err(e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("plot: {e}"))
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = ((hi - lo) * 0.05).max(1e-9);
    (lo - pad, hi + pad)
}

type Series = (String, Vec<(f64, f64)>);

fn line_chart(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series],
) -> Result<String, CliError> {
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, SIZE).into_drawing_area();
        root.fill(&WHITE).map_err(plot_err)?;
        let xs = bounds(series.iter().flat_map(|(_, s)| s.iter().map(|p| p.0)));
        let ys = bounds(series.iter().flat_map(|(_, s)| s.iter().map(|p| p.1)));
        let mut chart = ChartBuilder::on(&root)
            .caption(title, ("sans-serif", 20))
            .margin(12)
            .x_label_area_size(40)
            .y_label_area_size(60)
            .build_cartesian_2d(xs.0..xs.1, ys.0..ys.1)
            .map_err(plot_err)?;
        chart
            .configure_mesh()
            .x_desc(x_label)
            .y_desc(y_label)
            .draw()
            .map_err(plot_err)?;
        for (k, (name, points)) in series.iter().enumerate() {
            let color = Palette99::pick(k).to_rgba();
            chart
                .draw_series(LineSeries::new(
                    points.iter().copied(),
                    color.stroke_width(2),
                ))
                .map_err(plot_err)?
                .label(name.clone())
                .legend(move |(x, y)| {
                    PathElement::new(vec![(x, y), (x + 16, y)], color.stroke_width(2))
                });
            chart
                .draw_series(points.iter().map(|&p| Circle::new(p, 2, color.filled())))
                .map_err(plot_err)?;
        }
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(plot_err)?;
        root.present().map_err(plot_err)?;
    }
    Ok(svg)
}

/// Belief error of uncertain player 1 against the stage, one line per run.
pub fn belief_error(exp: &Experiment, points: &[PointResult]) -> Result<String, CliError> {
    let mut series = Vec::new();
    for p in points {
        for run in p.runs.iter().filter(|r| r.record.beliefs.is_some()) {
            let start = run.record.switch.as_ref().map_or(0, |s| s.stage);
            let errors = post_switch_errors(&run.record, 1)?;
            let line = errors
                .iter()
                .enumerate()
                .map(|(k, &e)| ((start + k) as f64, e))
                .collect();
            series.push((format!("{} theta={}", run.label, p.theta), line));
        }
    }
    let title = format!("{}: belief error", exp.spec.name);
    line_chart(&title, "stage", "|estimate - true intent|", &series)
}

/// Regret of the certain player against the true intent, one line per model.
pub fn regret(rows: &[SummaryRow]) -> Result<String, CliError> {
    let mut series: Vec<Series> = Vec::new();
    for r in rows.iter().filter(|r| r.player == 0) {
        match series.iter_mut().find(|(name, _)| *name == r.label) {
            Some((_, line)) => line.push((r.theta, r.regret)),
            None => series.push((r.label.clone(), vec![(r.theta, r.regret)])),
        }
    }
    line_chart("certain player regret", "true intent", "regret", &series)
}
