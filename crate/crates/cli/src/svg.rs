//! Minimal hand-rolled SVG panels: one metric against tau2 per file.

use std::collections::BTreeMap;
use std::io;
use std::path::{Path, PathBuf};

use crate::csv::CsvRow;

const WIDTH: f64 = 840.0;
const HEIGHT: f64 = 560.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 150.0;
const MARGIN_TOP: f64 = 50.0;
const MARGIN_BOTTOM: f64 = 55.0;

const METHODS: [&str; 4] = ["dl", "mp", "reml", "ssw"];
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Metric {
    Coverage,
    BiasTheta,
    BiasTau2,
}

impl Metric {
    fn slug(self) -> &'static str {
        match self {
            Metric::Coverage => "coverage",
            Metric::BiasTheta => "bias-theta",
            Metric::BiasTau2 => "bias-tau2",
        }
    }

    fn axis_label(self) -> &'static str {
        match self {
            Metric::Coverage => "coverage",
            Metric::BiasTheta => "bias of theta",
            Metric::BiasTau2 => "bias of tau2",
        }
    }

    fn reference(self) -> f64 {
        match self {
            Metric::Coverage => 0.95,
            _ => 0.0,
        }
    }

    fn series(self, row: &CsvRow) -> Vec<f64> {
        match self {
            Metric::Coverage => row.coverage.to_vec(),
            Metric::BiasTheta => row.bias_theta.to_vec(),
            Metric::BiasTau2 => row.bias_tau2.to_vec(),
        }
    }
}

/// Groups rows into panels (everything fixed except tau2) and writes one SVG
/// per panel per metric into `out_dir`. Panels with fewer than two tau2
/// points are skipped with a warning on stderr. Returns the written paths.
pub fn plot_summary(rows: &[CsvRow], out_dir: &Path) -> io::Result<Vec<PathBuf>> {
    let mut groups: BTreeMap<String, Vec<&CsvRow>> = BTreeMap::new();
    for row in rows {
        groups.entry(panel_key(row)).or_default().push(row);
    }

    let mut written = Vec::new();
    for (key, mut group) in groups {
        group.sort_by(|a, b| a.tau2.total_cmp(&b.tau2));
        group.dedup_by(|a, b| a.tau2 == b.tau2);
        if group.len() < 2 {
            eprintln!("warning: panel {key} has fewer than 2 tau2 points, skipped");
            continue;
        }
        for metric in [Metric::Coverage, Metric::BiasTheta, Metric::BiasTau2] {
            let path = out_dir.join(format!("{}_{key}.svg", metric.slug()));
            std::fs::write(&path, render_panel(metric, &group))?;
            written.push(path);
        }
    }
    Ok(written)
}

fn panel_key(row: &CsvRow) -> String {
    let mut key = format!(
        "{}_{}_K{}_n{}_pC{}_t{}",
        row.mechanism.label(),
        row.size_kind.label(),
        row.k,
        row.n,
        compact(row.p_c),
        compact(row.theta),
    );
    if let Some(s2) = row.sigma2 {
        key.push_str(&format!("_s2{}", compact(s2)));
    }
    key
}

/// Short float form for names and tick labels.
fn compact(x: f64) -> String {
    let s = format!("{x:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() || s == "-" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn render_panel(metric: Metric, group: &[&CsvRow]) -> String {
    let first = group[0];
    let methods: usize = if metric == Metric::BiasTau2 { 3 } else { 4 };

    let xs: Vec<f64> = group.iter().map(|r| r.tau2).collect();
    let x_min = xs[0];
    let x_max = xs[xs.len() - 1];
    let mut y_min = metric.reference();
    let mut y_max = metric.reference();
    for row in group {
        for v in metric.series(row).into_iter().take(methods) {
            y_min = y_min.min(v);
            y_max = y_max.max(v);
        }
    }
    let pad = ((y_max - y_min) * 0.08).max(1e-6);
    let (y_min, y_max) = (y_min - pad, y_max + pad);

    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let sx = |x: f64| MARGIN_LEFT + (x - x_min) / (x_max - x_min) * plot_w;
    let sy = |y: f64| MARGIN_TOP + (y_max - y) / (y_max - y_min) * plot_h;

    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");

    let title = format!(
        "{} vs tau2: {} {} K={} n={} pC={}{} theta={}",
        metric.axis_label(),
        first.mechanism.label(),
        first.size_kind.label(),
        first.k,
        first.n,
        compact(first.p_c),
        first.sigma2.map(|s| format!(" sigma2={}", compact(s))).unwrap_or_default(),
        compact(first.theta),
    );
    out.push_str(&format!(
        "<text x=\"{}\" y=\"28\" font-family=\"sans-serif\" font-size=\"16\" \
         text-anchor=\"middle\">{}</text>\n",
        MARGIN_LEFT + plot_w / 2.0,
        escape(&title)
    ));

    // frame
    out.push_str(&format!(
        "<rect x=\"{MARGIN_LEFT}\" y=\"{MARGIN_TOP}\" width=\"{plot_w}\" height=\"{plot_h}\" \
         fill=\"none\" stroke=\"black\"/>\n"
    ));

    // x ticks at each tau2 value
    for &x in &xs {
        let px = sx(x);
        out.push_str(&format!(
            "<line x1=\"{px}\" y1=\"{0}\" x2=\"{px}\" y2=\"{1}\" stroke=\"black\"/>\n",
            MARGIN_TOP + plot_h,
            MARGIN_TOP + plot_h + 5.0
        ));
        out.push_str(&format!(
            "<text x=\"{px}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" \
             text-anchor=\"middle\">{}</text>\n",
            MARGIN_TOP + plot_h + 20.0,
            compact(x)
        ));
    }
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\" \
         text-anchor=\"middle\">tau2</text>\n",
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 12.0
    ));

    // y ticks: 5 evenly spaced
    for i in 0..=4 {
        let y = y_min + (y_max - y_min) * f64::from(i) / 4.0;
        let py = sy(y);
        out.push_str(&format!(
            "<line x1=\"{0}\" y1=\"{py}\" x2=\"{MARGIN_LEFT}\" y2=\"{py}\" stroke=\"black\"/>\n",
            MARGIN_LEFT - 5.0
        ));
        out.push_str(&format!(
            "<text x=\"{0}\" y=\"{1}\" font-family=\"sans-serif\" font-size=\"12\" \
             text-anchor=\"end\">{2}</text>\n",
            MARGIN_LEFT - 9.0,
            py + 4.0,
            compact(y)
        ));
    }
    out.push_str(&format!(
        "<text x=\"16\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\" \
         text-anchor=\"middle\" transform=\"rotate(-90 16 {0})\">{1}</text>\n",
        MARGIN_TOP + plot_h / 2.0,
        escape(metric.axis_label())
    ));

    // dashed reference line, clipped to range
    let reference = metric.reference();
    if reference >= y_min && reference <= y_max {
        let py = sy(reference);
        out.push_str(&format!(
            "<line x1=\"{MARGIN_LEFT}\" y1=\"{py}\" x2=\"{}\" y2=\"{py}\" stroke=\"gray\" \
             stroke-dasharray=\"6 4\"/>\n",
            MARGIN_LEFT + plot_w
        ));
    }

    for (m, (label, color)) in METHODS.iter().zip(COLORS).enumerate().take(methods) {
        let points: Vec<String> = group
            .iter()
            .map(|row| {
                let v = metric.series(row)[m];
                format!("{:.2},{:.2}", sx(row.tau2), sy(v))
            })
            .collect();
        out.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>\n",
            points.join(" ")
        ));
        let ly = MARGIN_TOP + 20.0 + m as f64 * 22.0;
        out.push_str(&format!(
            "<line x1=\"{0}\" y1=\"{ly}\" x2=\"{1}\" y2=\"{ly}\" stroke=\"{color}\" \
             stroke-width=\"2\"/>\n",
            WIDTH - MARGIN_RIGHT + 15.0,
            WIDTH - MARGIN_RIGHT + 45.0
        ));
        out.push_str(&format!(
            "<text x=\"{0}\" y=\"{1}\" font-family=\"sans-serif\" font-size=\"13\">{label}</text>\n",
            WIDTH - MARGIN_RIGHT + 52.0,
            ly + 4.0
        ));
    }

    out.push_str("</svg>\n");
    out
}
