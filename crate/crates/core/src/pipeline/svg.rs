//! Dependency-free SVG figures. Output depends only on the inputs, so
//! re-running a command reproduces the files byte for byte.

use std::fmt::Write as _;

use crate::events::{AccuracyRow, CorrelationGrid};

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Blue for -1, white for 0, red for +1.
pub fn diverging_color(v: f64) -> String {
    let t = v.clamp(-1.0, 1.0);
    let (r, g, b) = if t >= 0.0 {
        (255.0, 255.0 * (1.0 - t), 255.0 * (1.0 - t))
    } else {
        (255.0 * (1.0 + t), 255.0 * (1.0 + t), 255.0)
    };
    format!(
        "#{:02x}{:02x}{:02x}",
        r.round() as u8,
        g.round() as u8,
        b.round() as u8
    )
}

const CELL_W: usize = 90;
const CELL_H: usize = 36;
const LEFT: usize = 130;
const TOP: usize = 60;

/// Topics by return columns, coloured on a symmetric [-1, 1] scale with the
/// correlation printed in each cell. Absent cells are grey and read `n/a`.
pub fn correlation_heatmap(grid: &CorrelationGrid, title: &str) -> String {
    let width = LEFT + CELL_W * grid.cols.len().max(1) + 90;
    let height = TOP + CELL_H * grid.rows.len().max(1) + 30;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" font-size="15" text-anchor="middle">{}</text>"#,
        width / 2,
        escape(title)
    );
    for (j, col) in grid.cols.iter().enumerate() {
        let x = LEFT + j * CELL_W + CELL_W / 2;
        let _ = writeln!(
            s,
            r#"<text x="{x}" y="{}" text-anchor="middle">{}</text>"#,
            TOP - 8,
            escape(col)
        );
    }
    for (i, row) in grid.rows.iter().enumerate() {
        let y = TOP + i * CELL_H;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            LEFT - 8,
            y + CELL_H / 2 + 4,
            escape(row)
        );
        for j in 0..grid.cols.len() {
            let x = LEFT + j * CELL_W;
            let (fill, label) = match grid.get(i, j) {
                Some(v) => (diverging_color(v), format!("{v:.2}")),
                None => ("#d0d0d0".to_string(), "n/a".to_string()),
            };
            let _ = writeln!(
                s,
                r##"<rect x="{x}" y="{y}" width="{CELL_W}" height="{CELL_H}" fill="{fill}" stroke="#ffffff"/>"##
            );
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="middle">{label}</text>"#,
                x + CELL_W / 2,
                y + CELL_H / 2 + 4
            );
        }
    }
    let lx = LEFT + CELL_W * grid.cols.len().max(1) + 30;
    let steps = 10;
    let bar_h = CELL_H * grid.rows.len().max(1);
    for k in 0..steps {
        let v = 1.0 - 2.0 * (k as f64 + 0.5) / steps as f64;
        let y = TOP + k * bar_h / steps;
        let _ = writeln!(
            s,
            r#"<rect x="{lx}" y="{y}" width="14" height="{}" fill="{}"/>"#,
            bar_h / steps + 1,
            diverging_color(v)
        );
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}">+1</text>"#, lx + 18, TOP + 10);
    let _ = writeln!(s, r#"<text x="{}" y="{}">-1</text>"#, lx + 18, TOP + bar_h);
    s.push_str("</svg>\n");
    s
}

const PALETTE: [&str; 6] = [
    "#4c72b0", "#dd8452", "#55a868", "#8172b3", "#937860", "#da8bc3",
];

/// Accuracy per topic (groups) and model (bars) with a red dashed line at
/// the 0.5 coin-flip baseline.
pub fn accuracy_bars(rows: &[AccuracyRow], title: &str) -> String {
    let mut topics: Vec<&str> = Vec::new();
    let mut models: Vec<&str> = Vec::new();
    for r in rows {
        if !topics.contains(&r.topic.as_str()) {
            topics.push(&r.topic);
        }
        if !models.contains(&r.model.as_str()) {
            models.push(&r.model);
        }
    }
    let bar_w = 26;
    let group_w = bar_w * models.len().max(1) + 30;
    let plot_h = 240.0;
    let left = 60;
    let top = 50;
    let width = left + group_w * topics.len().max(1) + 160;
    let height = top + plot_h as usize + 60;
    let y_of = |v: f64| top as f64 + plot_h * (1.0 - v.clamp(0.0, 1.0));
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" font-size="15" text-anchor="middle">{}</text>"#,
        width / 2,
        escape(title)
    );
    for tick in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let y = y_of(tick);
        let _ = writeln!(
            s,
            r##"<line x1="{left}" y1="{y:.1}" x2="{}" y2="{y:.1}" stroke="#e0e0e0"/>"##,
            width - 150
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.1}" text-anchor="end">{tick:.2}</text>"#,
            left - 6,
            y + 4.0
        );
    }
    for (g, topic) in topics.iter().enumerate() {
        let gx = left + 15 + g * group_w;
        for (m, model) in models.iter().enumerate() {
            let Some(acc) = rows
                .iter()
                .find(|r| r.topic == *topic && r.model == *model)
                .and_then(|r| r.result)
            else {
                continue;
            };
            let x = gx + m * bar_w;
            let y = y_of(acc.accuracy);
            let h = y_of(0.0) - y;
            let _ = writeln!(
                s,
                r#"<rect x="{x}" y="{y:.1}" width="{}" height="{h:.1}" fill="{}"/>"#,
                bar_w - 4,
                PALETTE[m % PALETTE.len()]
            );
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{:.1}" text-anchor="middle" font-size="10">{:.2}</text>"#,
                x + (bar_w - 4) / 2,
                y - 3.0,
                acc.accuracy
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.1}" text-anchor="middle">{}</text>"#,
            gx + bar_w * models.len() / 2,
            y_of(0.0) + 18.0,
            escape(topic)
        );
    }
    let y = y_of(0.5);
    let _ = writeln!(
        s,
        r##"<line x1="{left}" y1="{y:.1}" x2="{}" y2="{y:.1}" stroke="#d62728" stroke-width="2" stroke-dasharray="6,4"/>"##,
        width - 150
    );
    let lx = width - 140;
    for (m, model) in models.iter().enumerate() {
        let ly = top + 10 + m * 20;
        let _ = writeln!(
            s,
            r#"<rect x="{lx}" y="{ly}" width="12" height="12" fill="{}"/>"#,
            PALETTE[m % PALETTE.len()]
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}">{}</text>"#,
            lx + 18,
            ly + 10,
            escape(model)
        );
    }
    let ly = top + 10 + models.len() * 20;
    let _ = writeln!(
        s,
        r##"<line x1="{lx}" y1="{}" x2="{}" y2="{}" stroke="#d62728" stroke-width="2" stroke-dasharray="6,4"/>"##,
        ly + 6,
        lx + 12,
        ly + 6
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}">random (0.5)</text>"#,
        lx + 18,
        ly + 10
    );
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::DirectionalAccuracy;

    #[test]
    fn colour_scale_endpoints() {
        assert_eq!(diverging_color(1.0), "#ff0000");
        assert_eq!(diverging_color(0.0), "#ffffff");
        assert_eq!(diverging_color(-1.0), "#0000ff");
        assert_eq!(diverging_color(7.0), "#ff0000");
    }

    #[test]
    fn heatmap_annotates_cells() {
        let grid = CorrelationGrid {
            model: "m".into(),
            rows: vec!["economy".into(), "politics".into()],
            cols: vec!["POOLED".into()],
            values: vec![Some(0.4321), None],
        };
        let svg = correlation_heatmap(&grid, "m <rolling>");
        assert!(svg.contains(">0.43<"));
        assert!(svg.contains(">n/a<"));
        assert!(svg.contains("m &lt;rolling&gt;"));
        assert_eq!(svg, correlation_heatmap(&grid, "m <rolling>"));
    }

    #[test]
    fn bars_have_baseline() {
        let acc = DirectionalAccuracy {
            accuracy: 0.75,
            correct: 3,
            n_events: 4,
            excluded_zero: 0,
            excluded_no_next: 0,
            p_value: 0.625,
        };
        let rows = vec![AccuracyRow {
            topic: "all".into(),
            model: "m".into(),
            result: Some(acc),
        }];
        let svg = accuracy_bars(&rows, "acc");
        assert!(svg.contains("stroke=\"#d62728\""));
        assert!(svg.contains(">0.75<"));
    }
}
