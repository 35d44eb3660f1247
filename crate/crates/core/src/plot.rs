//! Minimal SVG charts for run bundles.
//!
//! The CSV files in a bundle are the plot-ready data; these charts are a
//! quick look that needs no plotting toolkit.

use std::fmt::Write as _;

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

const LABEL_WIDTH: f64 = 260.0;
const BAR_AREA: f64 = 400.0;
const ROW: f64 = 18.0;

/// Horizontal bar chart, one bar per label, in the given order.
pub fn bar_chart(title: &str, labels: &[String], values: &[f64]) -> String {
    let max = values.iter().cloned().fold(0.0_f64, f64::max);
    let width = LABEL_WIDTH + BAR_AREA + 90.0;
    let height = 40.0 + ROW * labels.len() as f64 + 10.0;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<text x="10" y="20" font-size="14">{}</text>"#, escape(title));
    for (i, (label, &v)) in labels.iter().zip(values).enumerate() {
        let y = 40.0 + ROW * i as f64;
        let w = if max > 0.0 { BAR_AREA * v / max } else { 0.0 };
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            LABEL_WIDTH - 6.0,
            y + 12.0,
            escape(label)
        );
        let _ = writeln!(
            svg,
            r##"<rect x="{LABEL_WIDTH}" y="{}" width="{w:.2}" height="{}" fill="#4c72b0"/>"##,
            y + 2.0,
            ROW - 4.0
        );
        let _ = writeln!(svg, r#"<text x="{}" y="{}">{v:.4}</text>"#, LABEL_WIDTH + w + 4.0, y + 12.0);
    }
    svg.push_str("</svg>\n");
    svg
}

/// Square heatmap with row and column labels; cell shade scales with the
/// value relative to the largest cell.
pub fn heatmap(title: &str, labels: &[String], cells: &[Vec<f64>]) -> String {
    let cell = 48.0;
    let left = 60.0;
    let top = 60.0;
    let n = labels.len() as f64;
    let max = cells.iter().flatten().cloned().fold(0.0_f64, f64::max);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" font-family="sans-serif" font-size="12">"#,
        left + cell * n + 20.0,
        top + cell * n + 20.0
    );
    let _ = writeln!(svg, r#"<text x="10" y="20" font-size="14">{}</text>"#, escape(title));
    for (j, label) in labels.iter().enumerate() {
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            left + cell * (j as f64 + 0.5),
            top - 8.0,
            escape(label)
        );
    }
    for (i, row) in cells.iter().enumerate() {
        let y = top + cell * i as f64;
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            left - 8.0,
            y + cell / 2.0 + 4.0,
            escape(labels.get(i).map_or("", String::as_str))
        );
        for (j, &v) in row.iter().enumerate() {
            let shade = if max > 0.0 { v / max } else { 0.0 };
            let level = (255.0 * (1.0 - shade)).round() as u8;
            let ink = if shade > 0.5 { "white" } else { "black" };
            let x = left + cell * j as f64;
            let _ = writeln!(
                svg,
                r#"<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="rgb({level},{level},255)" stroke="white"/>"#
            );
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{}" text-anchor="middle" fill="{ink}">{v:.1}</text>"#,
                x + cell / 2.0,
                y + cell / 2.0 + 4.0
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bar_chart_has_one_bar_per_value() {
        let svg = bar_chart("t", &["a".into(), "b<c".into()], &[2.0, 1.0]);
        assert_eq!(svg.matches("<rect").count(), 2);
        assert!(svg.contains("b&lt;c"));
        assert!(svg.contains(r#"width="400.00""#));
    }

    #[test]
    fn heatmap_has_n_squared_cells() {
        let labels: Vec<String> = (1..=3).map(|c| c.to_string()).collect();
        let cells = vec![vec![1.0, 0.0, 0.0], vec![0.0, 2.0, 0.0], vec![0.0, 0.0, 3.0]];
        let svg = heatmap("cm", &labels, &cells);
        assert_eq!(svg.matches("<rect").count(), 9);
    }

    #[test]
    fn all_zero_values_do_not_divide_by_zero() {
        let svg = bar_chart("t", &["a".into()], &[0.0]);
        assert!(!svg.contains("NaN"));
    }
}
