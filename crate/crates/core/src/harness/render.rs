//! Figure output: the backprojection heatmap as a graymap and the spike
//! trajectories as SVG.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::initializer::{DomainBox, SpectralImage};
use crate::model::SpikeTrain;
use crate::solver::Trace;

const SIZE: f64 = 600.0;
const MARGIN: f64 = 20.0;

struct Frame<'a> {
    domain: &'a DomainBox,
}

impl Frame<'_> {
    fn map(&self, p: &[f64]) -> (f64, f64) {
        let unit = |axis: usize| {
            let lo = self.domain.lower[axis];
            let span = self.domain.upper[axis] - lo;
            if span > 0.0 {
                (p[axis] - lo) / span
            } else {
                0.5
            }
        };
        let x = unit(0);
        let y = if p.len() > 1 { unit(1) } else { 0.5 };
        (MARGIN + x * SIZE, MARGIN + (1.0 - y) * SIZE)
    }
}

/// SVG with truth markers (circles), initial markers (crosses), final
/// markers and one polyline per tracked spike. Only the first two
/// coordinates are drawn.
pub fn trajectory_svg(
    trace: &Trace,
    truth: &SpikeTrain,
    init: &SpikeTrain,
    domain: &DomainBox,
) -> String {
    let frame = Frame { domain };
    let full = SIZE + 2.0 * MARGIN;
    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{full}" height="{full}" viewBox="0 0 {full} {full}">"#
    )
    .unwrap();
    writeln!(
        svg,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{SIZE}" height="{SIZE}" fill="white" stroke="black"/>"#
    )
    .unwrap();

    let d = trace.d;
    let mut tracks: BTreeMap<usize, Vec<(f64, f64)>> = BTreeMap::new();
    for (rec, ids) in trace.iterations.iter().zip(trace.spike_ids()) {
        let k = rec.spike_count(d);
        for (r, id) in ids.into_iter().enumerate() {
            let pos = &rec.theta[k + r * d..k + (r + 1) * d];
            tracks.entry(id).or_default().push(frame.map(pos));
        }
    }
    svg.push_str("<g fill=\"none\" stroke=\"steelblue\" stroke-width=\"1\">\n");
    for (id, points) in &tracks {
        let coords: Vec<String> = points
            .iter()
            .map(|(x, y)| format!("{x:.2},{y:.2}"))
            .collect();
        writeln!(
            svg,
            r#"<polyline class="trajectory" data-spike="{id}" points="{}"/>"#,
            coords.join(" ")
        )
        .unwrap();
    }
    svg.push_str("</g>\n");

    svg.push_str("<g stroke=\"darkorange\" stroke-width=\"1.5\">\n");
    for spike in init.spikes() {
        let (x, y) = frame.map(&spike.position);
        writeln!(
            svg,
            r#"<path class="init" d="M{:.2},{:.2} L{:.2},{:.2} M{:.2},{:.2} L{:.2},{:.2}"/>"#,
            x - 4.0,
            y - 4.0,
            x + 4.0,
            y + 4.0,
            x - 4.0,
            y + 4.0,
            x + 4.0,
            y - 4.0
        )
        .unwrap();
    }
    svg.push_str("</g>\n");

    if let Some(last) = trace.last() {
        let k = last.spike_count(d);
        svg.push_str("<g fill=\"steelblue\">\n");
        for r in 0..k {
            let (x, y) = frame.map(&last.theta[k + r * d..k + (r + 1) * d]);
            writeln!(
                svg,
                r#"<circle class="final" cx="{x:.2}" cy="{y:.2}" r="2.5"/>"#
            )
            .unwrap();
        }
        svg.push_str("</g>\n");
    }

    svg.push_str("<g fill=\"none\" stroke=\"crimson\" stroke-width=\"1.5\">\n");
    for spike in truth.spikes() {
        let (x, y) = frame.map(&spike.position);
        writeln!(
            svg,
            r#"<circle class="truth" cx="{x:.2}" cy="{y:.2}" r="5"/>"#
        )
        .unwrap();
    }
    svg.push_str("</g>\n</svg>\n");
    svg
}

/// Writes `spectral.pgm` (when the grid has at most two axes) and
/// `trajectories.svg` into `out_dir`, returning the written paths.
pub fn render_outputs(
    trace: &Trace,
    image: Option<&SpectralImage>,
    truth: &SpikeTrain,
    init: &SpikeTrain,
    domain: &DomainBox,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    if let Some(image) = image.filter(|im| im.grid().dimension() <= 2) {
        let path = out_dir.join("spectral.pgm");
        fs::write(&path, image.to_pgm()?)?;
        written.push(path);
    }
    let path = out_dir.join("trajectories.svg");
    fs::write(&path, trajectory_svg(trace, truth, init, domain))?;
    written.push(path);
    Ok(written)
}
