//! Minimal SVG line charts: per-category coefficient profiles and
//! reference-versus-probe trace overlays for the heart-rate and Alpha1
//! channels of example attempts.

use std::fmt::Write as _;
use std::path::Path;

use cras_core::enroll::RegisteredTemplate;
use cras_core::trace::{sanitize_stimulus, Channel, SampleSeries};

use crate::matrix::{AttemptCategory, MatrixReport, Probe};
use crate::HarnessError;

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 64.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 48.0;

const CATEGORY_COLORS: [(&str, &str); 4] = [
    ("valid", "#2ca02c"),
    ("same_user_different_music", "#1f77b4"),
    ("different_user_registered_music", "#ff7f0e"),
    ("invalid", "#d62728"),
];

fn color_for(category: AttemptCategory) -> &'static str {
    CATEGORY_COLORS
        .iter()
        .find(|(label, _)| *label == category.label())
        .map(|(_, c)| *c)
        .unwrap_or("#555555")
}

struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn x(&self, v: f64) -> f64 {
        let span = (self.x_max - self.x_min).max(1e-12);
        MARGIN_LEFT + (v - self.x_min) / span * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn y(&self, v: f64) -> f64 {
        let span = (self.y_max - self.y_min).max(1e-12);
        HEIGHT - MARGIN_BOTTOM - (v - self.y_min) / span * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    }
}

fn svg_header(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n\
         <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" text-anchor=\"middle\">{}</text>\n",
        WIDTH / 2.0,
        xml_escape(title)
    )
}

fn axes(out: &mut String, frame: &Frame, x_label: &str, y_label: &str) {
    let x0 = frame.x(frame.x_min);
    let x1 = frame.x(frame.x_max);
    let y0 = frame.y(frame.y_min);
    let y1 = frame.y(frame.y_max);
    let _ = write!(
        out,
        "<line x1=\"{x0:.1}\" y1=\"{y0:.1}\" x2=\"{x1:.1}\" y2=\"{y0:.1}\" stroke=\"#333\"/>\n\
         <line x1=\"{x0:.1}\" y1=\"{y0:.1}\" x2=\"{x0:.1}\" y2=\"{y1:.1}\" stroke=\"#333\"/>\n"
    );
    for i in 0..=4 {
        let vx = frame.x_min + (frame.x_max - frame.x_min) * i as f64 / 4.0;
        let vy = frame.y_min + (frame.y_max - frame.y_min) * i as f64 / 4.0;
        let px = frame.x(vx);
        let py = frame.y(vy);
        let _ = write!(
            out,
            "<text x=\"{px:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{vx:.1}</text>\n\
             <text x=\"{:.1}\" y=\"{py:.1}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{vy:.1}</text>\n",
            y0 + 18.0,
            x0 - 6.0,
        );
    }
    let _ = write!(
        out,
        "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">{}</text>\n\
         <text x=\"16\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.1})\">{}</text>\n",
        (x0 + x1) / 2.0,
        HEIGHT - 10.0,
        xml_escape(x_label),
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        xml_escape(y_label),
    );
}

fn polyline(out: &mut String, frame: &Frame, points: &[(f64, f64)], color: &str) {
    if points.is_empty() {
        return;
    }
    let coords: Vec<String> = points
        .iter()
        .map(|(x, y)| format!("{:.1},{:.1}", frame.x(*x), frame.y(*y)))
        .collect();
    let _ = writeln!(
        out,
        "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>",
        coords.join(" ")
    );
}

fn xml_escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Coefficient chart: attempts grouped by category, ascending within each
/// group, one colored segment per category.
pub fn coefficient_chart(report: &MatrixReport) -> String {
    let mut totals_by_category: Vec<(AttemptCategory, Vec<f64>)> = AttemptCategory::ALL
        .into_iter()
        .map(|category| {
            let mut totals: Vec<f64> = report
                .rows
                .iter()
                .filter(|r| r.category == category)
                .map(|r| r.total.unwrap_or(f64::NAN))
                .filter(|t| t.is_finite())
                .collect();
            totals.sort_by(f64::total_cmp);
            (category, totals)
        })
        .collect();
    totals_by_category.retain(|(_, t)| !t.is_empty());

    let n: usize = totals_by_category.iter().map(|(_, t)| t.len()).sum();
    let y_max = totals_by_category
        .iter()
        .flat_map(|(_, t)| t.iter().copied())
        .fold(2.5f64, f64::max);
    let frame = Frame {
        x_min: 0.0,
        x_max: n.max(1) as f64,
        y_min: 0.0,
        y_max: y_max * 1.05,
    };

    let mut out = svg_header("Coefficient of difference by attempt category");
    axes(
        &mut out,
        &frame,
        "attempt (grouped by category)",
        "coefficient of difference",
    );

    // Threshold rule.
    let ty = frame.y(2.0);
    let _ = write!(
        out,
        "<line x1=\"{:.1}\" y1=\"{ty:.1}\" x2=\"{:.1}\" y2=\"{ty:.1}\" stroke=\"#888\" stroke-dasharray=\"6 4\"/>\n\
         <text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#666\">threshold 2.0</text>\n",
        frame.x(0.0),
        frame.x(n as f64),
        frame.x(0.0) + 4.0,
        ty - 4.0
    );

    let mut offset = 0usize;
    let mut legend_y = MARGIN_TOP + 8.0;
    for (category, totals) in &totals_by_category {
        let color = color_for(*category);
        let points: Vec<(f64, f64)> = totals
            .iter()
            .enumerate()
            .map(|(i, t)| ((offset + i) as f64 + 0.5, *t))
            .collect();
        polyline(&mut out, &frame, &points, color);
        for (x, y) in &points {
            let _ = writeln!(
                out,
                "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"2.2\" fill=\"{color}\"/>",
                frame.x(*x),
                frame.y(*y)
            );
        }
        let _ = write!(
            out,
            "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"10\" height=\"10\" fill=\"{color}\"/>\n\
             <text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>\n",
            WIDTH - 260.0,
            legend_y,
            WIDTH - 244.0,
            legend_y + 9.0,
            category.label()
        );
        legend_y += 16.0;
        offset += totals.len();
    }
    out.push_str("</svg>\n");
    out
}

/// Overlay of the template's stored reference against a probe's sanitized
/// response on one channel.
pub fn trace_overlay(
    template: &RegisteredTemplate,
    probe: &Probe,
    channel: Channel,
    category: AttemptCategory,
) -> Result<Option<String>, HarnessError> {
    let Some(reference) = template.reference_channel(channel) else {
        return Ok(None);
    };
    let sanitized = sanitize_stimulus(&probe.cycle)?;
    let Some(probe_series) = sanitized.iter().find(|s| s.channel == channel) else {
        return Ok(None);
    };

    let series_points = |s: &SampleSeries| -> Vec<(f64, f64)> {
        s.values
            .iter()
            .enumerate()
            .map(|(i, v)| (s.timestamp(i), *v))
            .collect()
    };
    let ref_points = series_points(reference);
    let probe_points = series_points(probe_series);
    let all = ref_points.iter().chain(&probe_points);
    let (mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for (_, y) in all {
        y_min = y_min.min(*y);
        y_max = y_max.max(*y);
    }
    let pad = ((y_max - y_min) * 0.1).max(1.0);
    let frame = Frame {
        x_min: reference.start_offset,
        x_max: reference.timestamp(reference.len().saturating_sub(1)),
        y_min: (y_min - pad).max(0.0),
        y_max: y_max + pad,
    };

    let title = format!(
        "{} — {} vs {} ({})",
        channel,
        template.subject_id,
        probe.subject_id,
        category.label()
    );
    let mut out = svg_header(&title);
    let unit = if channel == Channel::HeartRate {
        "BPM"
    } else {
        "band power"
    };
    axes(&mut out, &frame, "seconds into stimulus", unit);
    polyline(&mut out, &frame, &ref_points, "#1f77b4");
    polyline(&mut out, &frame, &probe_points, color_for(category));
    let _ = write!(
        out,
        "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#1f77b4\">registered</text>\n\
         <text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"{}\">probe</text>\n",
        WIDTH - 160.0,
        MARGIN_TOP + 8.0,
        WIDTH - 160.0,
        MARGIN_TOP + 24.0,
        color_for(category),
    );
    out.push_str("</svg>\n");
    Ok(Some(out))
}

/// Write the coefficient chart, plus trace overlays for the first attempt
/// of each category when the probes and templates are available.
pub fn write_plots(
    report: &MatrixReport,
    templates: &[RegisteredTemplate],
    probes: &[Probe],
    out_dir: &Path,
) -> Result<Vec<std::path::PathBuf>, HarnessError> {
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();

    let path = out_dir.join("coefficients.svg");
    std::fs::write(&path, coefficient_chart(report))?;
    written.push(path);

    for category in AttemptCategory::ALL {
        let Some(row) = report.rows.iter().find(|r| r.category == category) else {
            continue;
        };
        let template = templates
            .iter()
            .find(|t| t.subject_id == row.template_subject && t.music_id == row.template_music);
        let probe = probes.iter().find(|p| {
            p.subject_id == row.probe_subject
                && p.music_id == row.probe_music
                && p.kind.label() == row.probe_kind
        });
        let (Some(template), Some(probe)) = (template, probe) else {
            continue;
        };
        for channel in [Channel::HeartRate, Channel::Alpha1] {
            if let Some(svg) = trace_overlay(template, probe, channel, category)? {
                let path = out_dir.join(format!(
                    "{}_{}.svg",
                    category.label(),
                    channel.name().to_lowercase()
                ));
                std::fs::write(&path, svg)?;
                written.push(path);
            }
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::HarnessConfig;
    use crate::matrix::{build_probes, run_matrix};
    use crate::population::demo_population;
    use crate::registration::run_registration;

    #[test]
    fn plots_render_for_the_demo_matrix() {
        let config = HarnessConfig::default();
        let population = demo_population();
        let enrollment = run_registration(&config, &population, 42).unwrap();
        let probes = build_probes(&config, &population, &enrollment.templates, 42).unwrap();
        let report = run_matrix(&config, &enrollment.templates, &probes).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let written = write_plots(&report, &enrollment.templates, &probes, dir.path()).unwrap();
        // Coefficient chart + 2 channels x 4 categories.
        assert_eq!(written.len(), 9);
        for path in written {
            let text = std::fs::read_to_string(path).unwrap();
            assert!(text.starts_with("<svg"));
            assert!(text.ends_with("</svg>\n"));
            assert!(text.contains("polyline"));
        }
    }
}
