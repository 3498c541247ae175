//! SVG curve plots: one panel per channel, one line per input, edited
//! segments shaded.

use std::path::Path;

use anyhow::{bail, Result};
use facefill::anim::load_animation;
use facefill::editing::EditSpec;
use facefill::rig::{compute_distances, DISTANCE_NAMES};
use facefill::{Animation, DistanceRig, Segment};
use plotters::prelude::*;

use crate::args::PlotArgs;
use crate::RuntimeError;

const PALETTE: [RGBColor; 6] = [
    RGBColor(31, 119, 180),
    RGBColor(214, 39, 40),
    RGBColor(44, 160, 44),
    RGBColor(148, 103, 189),
    RGBColor(255, 127, 14),
    RGBColor(23, 190, 207),
];

/// One curve per input for a named channel.
pub struct Panel {
    pub channel: String,
    pub curves: Vec<Vec<f64>>,
}

fn channel_values(anim: &Animation, rig: &DistanceRig, name: &str) -> Result<Vec<f64>> {
    if let Some(c) = anim.channel_index(name) {
        return Ok(anim.frames().column(c).to_vec());
    }
    if let Some(d) = DISTANCE_NAMES.iter().position(|n| *n == name) {
        let track = compute_distances(anim, rig)?;
        return Ok(track.values.column(d).to_vec());
    }
    bail!(facefill::Error::InvalidConfig(format!("no blendshape or distance channel named {name:?}")))
}

pub fn panels(anims: &[Animation], channels: &[String]) -> Result<Vec<Panel>> {
    let rig = DistanceRig::canonical();
    channels
        .iter()
        .map(|name| {
            let curves = anims
                .iter()
                .map(|a| channel_values(a, &rig, name))
                .collect::<Result<Vec<_>>>()?;
            Ok(Panel {
                channel: name.clone(),
                curves,
            })
        })
        .collect()
}

pub fn render(panels: &[Panel], labels: &[String], segments: &[Segment], out: &Path, size: (u32, u32)) -> Result<()> {
    let height = size.1 * panels.len() as u32;
    let root = SVGBackend::new(out, (size.0, height)).into_drawing_area();
    let draw = |e: &dyn std::fmt::Display| RuntimeError(format!("drawing {}: {e}", out.display()));
    root.fill(&WHITE).map_err(|e| draw(&e))?;
    for (panel, area) in panels.iter().zip(root.split_evenly((panels.len(), 1))) {
        let len = panel.curves.iter().map(Vec::len).max().unwrap_or(0).max(2);
        let (lo, hi) = panel
            .curves
            .iter()
            .flatten()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let pad = ((hi - lo) * 0.05).max(0.02);
        let (y0, y1) = (lo - pad, hi + pad);
        let mut chart = ChartBuilder::on(&area)
            .caption(&panel.channel, ("sans-serif", 16))
            .margin(8)
            .x_label_area_size(28)
            .y_label_area_size(44)
            .build_cartesian_2d(0f64..(len - 1) as f64, y0..y1)
            .map_err(|e| draw(&e))?;
        chart
            .configure_mesh()
            .x_desc("frame")
            .disable_mesh()
            .draw()
            .map_err(|e| draw(&e))?;
        for seg in segments {
            let span = [(seg.start as f64 - 0.5, y0), (seg.end as f64 - 0.5, y1)];
            chart
                .draw_series(std::iter::once(Rectangle::new(span, RGBColor(200, 200, 200).mix(0.4).filled())))
                .map_err(|e| draw(&e))?;
        }
        for (i, curve) in panel.curves.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let series = chart
                .draw_series(LineSeries::new(
                    curve.iter().enumerate().map(|(t, &v)| (t as f64, v)),
                    color.stroke_width(2),
                ))
                .map_err(|e| draw(&e))?;
            if let Some(label) = labels.get(i) {
                series
                    .label(label.as_str())
                    .legend(move |(x, y)| PathElement::new([(x, y), (x + 16, y)], color.stroke_width(2)));
            }
        }
        if !labels.is_empty() {
            chart
                .configure_series_labels()
                .background_style(WHITE.mix(0.8))
                .border_style(BLACK)
                .draw()
                .map_err(|e| draw(&e))?;
        }
    }
    root.present().map_err(|e| draw(&e))?;
    Ok(())
}

pub fn plot(args: PlotArgs) -> Result<()> {
    let anims = args
        .inputs
        .iter()
        .map(|p| load_animation(p, false))
        .collect::<facefill::Result<Vec<_>>>()?;
    let mut channels = args.channels.clone();
    if args.distances {
        channels.extend(DISTANCE_NAMES.iter().map(|s| s.to_string()));
    }
    if channels.is_empty() {
        bail!(facefill::Error::InvalidConfig("select at least one --channel or --distances".into()));
    }
    let labels: Vec<String> = if args.labels.is_empty() {
        args.inputs
            .iter()
            .map(|p| p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default())
            .collect()
    } else if args.labels.len() == args.inputs.len() {
        args.labels.clone()
    } else {
        bail!(facefill::Error::InvalidConfig(format!(
            "{} labels for {} inputs",
            args.labels.len(),
            args.inputs.len()
        )));
    };
    let segments = match &args.spec {
        Some(p) => EditSpec::load(p)?.segments,
        None => Vec::new(),
    };
    let panels = panels(&anims, &channels)?;
    render(&panels, &labels, &segments, &args.out, (args.width, args.height))?;
    println!("wrote {} panel(s) to {}", panels.len(), args.out.display());
    Ok(())
}
