//! Deterministic static SVG line plots of CSV columns: fixed 800x600
//! viewport, axes with end labels, fixed color palette, byte-stable output
//! for identical inputs.

use crate::error::{Error, Result};

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 600.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 780.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 560.0;

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn column_index(header: &[String], name: &str) -> Result<usize> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::config(format!("column `{name}` not found in CSV header")))
}

/// Render the named y columns against the x column as an SVG polyline chart.
pub fn render_svg(header: &[String], rows: &[Vec<f64>], x_col: &str, y_cols: &[String]) -> Result<String> {
    if y_cols.is_empty() {
        return Err(Error::config("at least one y column is required"));
    }
    if rows.len() < 2 {
        return Err(Error::config("need at least two data rows to draw a line"));
    }
    let xi = column_index(header, x_col)?;
    let yis: Vec<usize> =
        y_cols.iter().map(|c| column_index(header, c)).collect::<Result<_>>()?;

    let finite = |v: f64| v.is_finite();
    let mut xmin = f64::INFINITY;
    let mut xmax = f64::NEG_INFINITY;
    let mut ymin = f64::INFINITY;
    let mut ymax = f64::NEG_INFINITY;
    for row in rows {
        if finite(row[xi]) {
            xmin = xmin.min(row[xi]);
            xmax = xmax.max(row[xi]);
        }
        for &yi in &yis {
            if finite(row[yi]) {
                ymin = ymin.min(row[yi]);
                ymax = ymax.max(row[yi]);
            }
        }
    }
    if !xmin.is_finite() || !ymin.is_finite() {
        return Err(Error::config("no finite data points to plot"));
    }
    if xmax == xmin {
        xmin -= 0.5;
        xmax += 0.5;
    }
    if ymax == ymin {
        ymin -= 0.5;
        ymax += 0.5;
    }
    let sx = |x: f64| LEFT + (x - xmin) / (xmax - xmin) * (RIGHT - LEFT);
    let sy = |y: f64| BOTTOM - (y - ymin) / (ymax - ymin) * (BOTTOM - TOP);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str("<rect x=\"0\" y=\"0\" width=\"800\" height=\"600\" fill=\"#ffffff\"/>\n");
    // axes
    svg.push_str(&format!(
        "<line x1=\"{LEFT}\" y1=\"{BOTTOM}\" x2=\"{RIGHT}\" y2=\"{BOTTOM}\" stroke=\"#000000\" stroke-width=\"1\"/>\n"
    ));
    svg.push_str(&format!(
        "<line x1=\"{LEFT}\" y1=\"{TOP}\" x2=\"{LEFT}\" y2=\"{BOTTOM}\" stroke=\"#000000\" stroke-width=\"1\"/>\n"
    ));
    // end labels
    svg.push_str(&format!(
        "<text x=\"{LEFT}\" y=\"580\" font-family=\"monospace\" font-size=\"12\" fill=\"#000000\">{}</text>\n",
        format_args!("{xmin:.6e}")
    ));
    svg.push_str(&format!(
        "<text x=\"{RIGHT}\" y=\"580\" text-anchor=\"end\" font-family=\"monospace\" font-size=\"12\" fill=\"#000000\">{}</text>\n",
        format_args!("{xmax:.6e}")
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-family=\"monospace\" font-size=\"12\" fill=\"#000000\">{}</text>\n",
        LEFT - 5.0,
        BOTTOM,
        format_args!("{ymin:.6e}")
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-family=\"monospace\" font-size=\"12\" fill=\"#000000\">{}</text>\n",
        LEFT - 5.0,
        TOP + 10.0,
        format_args!("{ymax:.6e}")
    ));
    // x axis name
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"580\" text-anchor=\"middle\" font-family=\"monospace\" font-size=\"12\" fill=\"#000000\">{}</text>\n",
        (LEFT + RIGHT) / 2.0,
        x_col
    ));

    for (si, (&yi, name)) in yis.iter().zip(y_cols.iter()).enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        let mut points = String::new();
        for row in rows {
            if !finite(row[xi]) || !finite(row[yi]) {
                continue;
            }
            if !points.is_empty() {
                points.push(' ');
            }
            points.push_str(&format!("{:.3},{:.3}", sx(row[xi]), sy(row[yi])));
        }
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{points}\"/>\n"
        ));
        // legend entry
        let ly = TOP - 18.0;
        let lx = LEFT + 140.0 * si as f64;
        svg.push_str(&format!(
            "<line x1=\"{lx}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"3\"/>\n",
            lx + 24.0
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"12\" fill=\"#000000\">{name}</text>\n",
            lx + 30.0,
            ly + 4.0
        ));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
