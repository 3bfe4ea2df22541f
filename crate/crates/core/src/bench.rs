//! Benchmark rows, CSV output and box-plot summaries.

use std::fmt::Write as _;
use std::io;

use serde::{Deserialize, Serialize};

use crate::bendm::SolveReport;
use crate::instance::{rational_to_decimal, CostScheme, Instance};
use crate::mip::to_f64;

pub const CSV_HEADER: [&str; 14] = [
    "instance",
    "m",
    "cost",
    "method",
    "obj",
    "lb",
    "gap_pct",
    "time_s",
    "nodes",
    "cuts_std",
    "cuts_comb",
    "cuts_lift",
    "ycheck_calls",
    "ycheck_time_s",
];

/// One CSV record. Numeric fields are kept as their printed strings so that
/// writing and reading back is lossless.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub instance: String,
    pub m: usize,
    pub cost: String,
    pub method: String,
    pub obj: String,
    pub lb: String,
    pub gap_pct: String,
    pub time_s: String,
    pub nodes: u64,
    pub cuts_std: usize,
    pub cuts_comb: usize,
    pub cuts_lift: usize,
    pub ycheck_calls: u64,
    pub ycheck_time_s: String,
}

/// `100 (obj - lb) / obj` at one decimal.
pub fn format_gap(obj: f64, lb: f64) -> String {
    format!("{:.1}", 100.0 * (obj - lb) / obj)
}

/// Shortest of up to four decimals; integers print without a point.
pub fn format_number(v: f64) -> String {
    if (v - v.round()).abs() < 1e-6 {
        return format!("{}", v.round() as i64);
    }
    let s = format!("{v:.4}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// Cost scheme tag from a generated instance name (`<base>_m<m>_<tag>`).
pub fn cost_tag(name: &str) -> String {
    name.rsplit('_')
        .next()
        .and_then(|t| t.parse::<CostScheme>().ok())
        .map_or_else(|| "custom".to_string(), |s| s.tag().to_string())
}

impl BenchRow {
    pub fn from_report(inst: &Instance, rep: &SolveReport) -> Self {
        let obj = rep.objective();
        let lb = rep.lower_bound;
        let (obj_s, gap) = match obj {
            Some(o) if to_f64(o) > 0.0 => (rational_to_decimal(&o, 6), format_gap(to_f64(o), lb)),
            Some(o) => (rational_to_decimal(&o, 6), String::new()),
            None => (String::new(), String::new()),
        };
        Self {
            instance: inst.name.clone(),
            m: inst.n_strips(),
            cost: cost_tag(&inst.name),
            method: rep.method.tag().to_string(),
            obj: obj_s,
            lb: if lb.is_finite() { format_number(lb) } else { String::new() },
            gap_pct: gap,
            time_s: format!("{:.2}", rep.elapsed.as_secs_f64()),
            nodes: rep.nodes,
            cuts_std: rep.cut_counts.standard,
            cuts_comb: rep.cut_counts.combinatorial,
            cuts_lift: rep.cut_counts.lifted,
            ycheck_calls: rep.ycheck_calls,
            ycheck_time_s: format!("{:.3}", rep.ycheck_time.as_secs_f64()),
        }
    }

    fn value(field: &str) -> Option<f64> {
        field.parse().ok()
    }

    pub fn obj_value(&self) -> Option<f64> {
        Self::value(&self.obj)
    }

    pub fn lb_value(&self) -> Option<f64> {
        Self::value(&self.lb)
    }

    pub fn gap_value(&self) -> Option<f64> {
        Self::value(&self.gap_pct)
    }
}

pub fn write_csv<W: io::Write>(rows: &[BenchRow], out: W) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: io::Read>(input: R) -> csv::Result<Vec<BenchRow>> {
    csv::Reader::from_reader(input).deserialize().collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxStats {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub mean: f64,
    /// Most extreme data points within 1.5 IQR of the box.
    pub whisker_low: f64,
    pub whisker_high: f64,
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn box_stats(values: &[f64]) -> Option<BoxStats> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let (q1, median, q3) = (quantile(&v, 0.25), quantile(&v, 0.5), quantile(&v, 0.75));
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let whisker_low = v.iter().copied().find(|&x| x >= lo_fence).unwrap_or(q1);
    let whisker_high = v.iter().rev().copied().find(|&x| x <= hi_fence).unwrap_or(q3);
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    Some(BoxStats { q1, median, q3, mean, whisker_low, whisker_high })
}

/// Self-contained SVG box plot, one box per group.
pub fn render_box_plot(title: &str, groups: &[(String, Vec<f64>)]) -> String {
    let (w, h) = (140.0 * groups.len().max(1) as f64 + 80.0, 360.0);
    let (top, bottom, left) = (40.0, 310.0, 60.0);
    let all: Vec<f64> = groups.iter().flat_map(|g| g.1.iter().copied()).collect();
    let lo = all.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = all.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if all.is_empty() { (0.0, 1.0) } else if hi > lo { (lo, hi) } else { (lo - 1.0, hi + 1.0) };
    let y = |v: f64| bottom - (v - lo) / (hi - lo) * (bottom - top);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, w / 2.0, escape(title));
    let _ = writeln!(s, r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{bottom}" stroke="black"/>"#);
    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#,
            left - 6.0,
            y(v) + 4.0,
            format_number(v)
        );
    }
    for (g, (name, values)) in groups.iter().enumerate() {
        let cx = left + 70.0 + 140.0 * g as f64;
        let _ = writeln!(s, r#"<text x="{cx}" y="{}" text-anchor="middle">{}</text>"#, bottom + 20.0, escape(name));
        let Some(b) = box_stats(values) else { continue };
        let (x0, x1) = (cx - 30.0, cx + 30.0);
        let _ = writeln!(s, r#"<line x1="{cx}" y1="{:.1}" x2="{cx}" y2="{:.1}" stroke="black"/>"#, y(b.whisker_high), y(b.q3));
        let _ = writeln!(s, r#"<line x1="{cx}" y1="{:.1}" x2="{cx}" y2="{:.1}" stroke="black"/>"#, y(b.q1), y(b.whisker_low));
        for wv in [b.whisker_low, b.whisker_high] {
            let _ = writeln!(s, r#"<line x1="{}" y1="{:.1}" x2="{}" y2="{:.1}" stroke="black"/>"#, cx - 12.0, y(wv), cx + 12.0, y(wv));
        }
        let _ = writeln!(
            s,
            r#"<rect x="{x0}" y="{:.1}" width="60" height="{:.1}" fill="lightsteelblue" stroke="black"/>"#,
            y(b.q3),
            (y(b.q1) - y(b.q3)).max(0.5)
        );
        let _ = writeln!(s, r#"<line x1="{x0}" y1="{:.1}" x2="{x1}" y2="{:.1}" stroke="black" stroke-width="2"/>"#, y(b.median), y(b.median));
        for &v in values.iter().filter(|&&v| v < b.whisker_low || v > b.whisker_high) {
            let _ = writeln!(s, r#"<circle cx="{cx}" cy="{:.1}" r="3" fill="none" stroke="black"/>"#, y(v));
        }
        let my = y(b.mean);
        let _ = writeln!(
            s,
            r#"<polygon points="{cx},{:.1} {:.1},{my:.1} {cx},{:.1} {:.1},{my:.1}" fill="red"/>"#,
            my - 6.0,
            cx + 6.0,
            my + 6.0,
            cx - 6.0
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Obj, LB and gap plots grouped by method, in first-seen method order.
pub fn summary_plots(rows: &[BenchRow]) -> Vec<(&'static str, String)> {
    let mut methods: Vec<&str> = Vec::new();
    for r in rows {
        if !methods.contains(&r.method.as_str()) {
            methods.push(&r.method);
        }
    }
    let metrics: [(&'static str, &str, fn(&BenchRow) -> Option<f64>); 3] = [
        ("obj", "Objective", BenchRow::obj_value),
        ("lb", "Lower bound", BenchRow::lb_value),
        ("gap", "Gap (%)", BenchRow::gap_value),
    ];
    metrics
        .iter()
        .map(|&(key, title, get)| {
            let groups: Vec<(String, Vec<f64>)> = methods
                .iter()
                .map(|&m| (m.to_string(), rows.iter().filter(|r| r.method == m).filter_map(get).collect()))
                .collect();
            (key, render_box_plot(title, &groups))
        })
        .collect()
}
