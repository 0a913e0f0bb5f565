//! Comparison tables and a grouped bar chart.

use std::fmt::Write as _;

use crate::metrics::EvalReport;
use crate::trainer::{AblationReport, TransferReport};

pub const COLUMNS: [&str; 4] = ["AUC", "NDCG@10", "ECE↓", "Utility@10"];

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub name: String,
    /// AUC, NDCG@k, ECE, Utility@k.
    pub values: [f64; 4],
    /// Seed standard deviations when the row is an average.
    pub std: Option<[f64; 4]>,
}

impl ReportRow {
    pub fn from_eval(name: impl Into<String>, r: &EvalReport) -> Self {
        ReportRow {
            name: name.into(),
            values: r.headline(),
            std: None,
        }
    }
}

pub fn ablation_rows(report: &AblationReport) -> Vec<ReportRow> {
    report
        .summary
        .iter()
        .map(|s| ReportRow {
            name: s.variant.name().to_string(),
            values: s.mean,
            std: Some(s.std),
        })
        .collect()
}

fn cell(v: f64, std: Option<f64>) -> String {
    match std {
        Some(s) => format!("{v:.4} ± {s:.4}"),
        None => format!("{v:.4}"),
    }
}

/// Aligned plain-text table in the column order AUC, NDCG@10, ECE↓, Utility@10.
pub fn text_table(rows: &[ReportRow]) -> String {
    let mut grid: Vec<Vec<String>> = vec![std::iter::once("model".to_string())
        .chain(COLUMNS.iter().map(|c| c.to_string()))
        .collect()];
    for r in rows {
        let mut line = vec![r.name.clone()];
        for j in 0..4 {
            line.push(cell(r.values[j], r.std.map(|s| s[j])));
        }
        grid.push(line);
    }
    let widths: Vec<usize> = (0..5)
        .map(|j| grid.iter().map(|l| l[j].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, line) in grid.iter().enumerate() {
        let cells: Vec<String> = line
            .iter()
            .enumerate()
            .map(|(j, c)| {
                let pad = widths[j] - c.chars().count();
                if j == 0 {
                    format!("{c}{}", " ".repeat(pad))
                } else {
                    format!("{}{c}", " ".repeat(pad))
                }
            })
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
        if i == 0 {
            let total: usize = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
            out.push_str(&"-".repeat(total));
            out.push('\n');
        }
    }
    out
}

pub fn csv_table(rows: &[ReportRow]) -> String {
    let mut out = String::from("model,auc,ndcg_at_10,ece,utility_at_10,auc_std,ndcg_at_10_std,ece_std,utility_at_10_std\n");
    for r in rows {
        let std: Vec<String> = match r.std {
            Some(sd) => sd.iter().map(|x| x.to_string()).collect(),
            None => vec![String::new(); 4],
        };
        let vals: Vec<String> = r.values.iter().map(|x| x.to_string()).collect();
        let _ = writeln!(out, "{},{},{}", r.name.replace(',', ";"), vals.join(","), std.join(","));
    }
    out
}

pub fn transfer_table(report: &TransferReport) -> String {
    let mut out = String::from("variant  retention (mean ± std)\n");
    for s in &report.summary {
        let _ = writeln!(out, "{:<7}  {:.4} ± {:.4}", s.variant.name(), s.mean, s.std);
    }
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

const PALETTE: [&str; 6] = ["#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860"];

/// Grouped bar chart: one group per metric, one bar per row. Bars are scaled
/// by the largest value within each metric and labelled with the raw value.
pub fn svg_bar_chart(rows: &[ReportRow]) -> String {
    let (w, h) = (720.0, 360.0);
    let (left, right, top, bottom) = (40.0, 20.0, 30.0, 70.0);
    let plot_w = w - left - right;
    let plot_h = h - top - bottom;
    let group_w = plot_w / COLUMNS.len() as f64;
    let bar_w = if rows.is_empty() {
        0.0
    } else {
        group_w * 0.8 / rows.len() as f64
    };
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let base = top + plot_h;
    let _ = writeln!(
        s,
        r#"<line x1="{left}" y1="{base}" x2="{}" y2="{base}" stroke="black"/>"#,
        left + plot_w
    );
    for (j, col) in COLUMNS.iter().enumerate() {
        let max = rows
            .iter()
            .map(|r| r.values[j])
            .filter(|v| v.is_finite())
            .fold(0.0f64, |a, b| a.max(b.abs()));
        let gx = left + j as f64 * group_w + group_w * 0.1;
        for (i, r) in rows.iter().enumerate() {
            let v = r.values[j];
            let frac = if max > 0.0 && v.is_finite() { v.abs() / max } else { 0.0 };
            let bh = frac * plot_h;
            let x = gx + i as f64 * bar_w;
            let _ = writeln!(
                s,
                r#"<rect x="{x:.2}" y="{:.2}" width="{:.2}" height="{bh:.2}" fill="{}"><title>{}: {v}</title></rect>"#,
                base - bh,
                bar_w * 0.9,
                PALETTE[i % PALETTE.len()],
                escape(&r.name)
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="9">{v:.3}</text>"#,
                x + bar_w * 0.45,
                base - bh - 3.0
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            left + (j as f64 + 0.5) * group_w,
            base + 16.0,
            escape(col)
        );
    }
    for (i, r) in rows.iter().enumerate() {
        let x = left + (i % 4) as f64 * 170.0;
        let y = h - 28.0 + (i / 4) as f64 * 14.0;
        let _ = writeln!(
            s,
            r#"<rect x="{x}" y="{:.2}" width="10" height="10" fill="{}"/><text x="{}" y="{y:.2}">{}</text>"#,
            y - 9.0,
            PALETTE[i % PALETTE.len()],
            x + 14.0,
            escape(&r.name)
        );
    }
    s.push_str("</svg>\n");
    s
}
