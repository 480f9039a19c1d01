//! Minimal static SVG writers: line plots and heatmaps.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 420.0;
const MARGIN: f64 = 56.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn header(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\" text-anchor=\"middle\">{}</text>\n",
        W / 2.0,
        escape(title)
    )
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn range(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-300 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn axes(s: &mut String, xr: (f64, f64), yr: (f64, f64), xlabel: &str, ylabel: &str) {
    let (x0, x1, y0, y1) = (MARGIN, W - 20.0, H - MARGIN, 40.0);
    let _ = writeln!(
        s,
        "<polyline points=\"{x0},{y1} {x0},{y0} {x1},{y0}\" fill=\"none\" stroke=\"black\"/>"
    );
    let _ = writeln!(
        s,
        "<text x=\"{x0}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">{:.3e}</text>\
         <text x=\"{x1}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{:.3e}</text>",
        y0 + 16.0,
        xr.0,
        y0 + 16.0,
        xr.1
    );
    let _ = writeln!(
        s,
        "<text x=\"4\" y=\"{y0}\" font-family=\"sans-serif\" font-size=\"11\">{:.2e}</text>\
         <text x=\"4\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">{:.2e}</text>",
        yr.0,
        y1 + 10.0,
        yr.1
    );
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">{}</text>",
        (x0 + x1) / 2.0,
        H - 12.0,
        escape(xlabel)
    );
    let _ = writeln!(
        s,
        "<text x=\"14\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 14 {})\" text-anchor=\"middle\">{}</text>",
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(ylabel)
    );
}

/// Named polylines on shared axes. With `log_y` nonpositive values are dropped.
pub fn line_plot(title: &str, xlabel: &str, ylabel: &str, series: &[(String, Vec<(f64, f64)>)], log_y: bool) -> String {
    let tf = |y: f64| if log_y { y.log10() } else { y };
    let pts: Vec<(String, Vec<(f64, f64)>)> = series
        .iter()
        .map(|(n, v)| {
            let v = v
                .iter()
                .filter(|(x, y)| x.is_finite() && y.is_finite() && (!log_y || *y > 0.0))
                .map(|&(x, y)| (x, tf(y)))
                .collect();
            (n.clone(), v)
        })
        .collect();
    let xr = range(pts.iter().flat_map(|(_, v)| v.iter().map(|p| p.0)));
    let yr = range(pts.iter().flat_map(|(_, v)| v.iter().map(|p| p.1)));
    let mut s = header(title);
    let ylab = if log_y { format!("log10 {ylabel}") } else { ylabel.to_string() };
    axes(&mut s, xr, yr, xlabel, &ylab);
    let sx = |x: f64| MARGIN + (x - xr.0) / (xr.1 - xr.0) * (W - 20.0 - MARGIN);
    let sy = |y: f64| (H - MARGIN) - (y - yr.0) / (yr.1 - yr.0) * (H - MARGIN - 40.0);
    for (k, (name, v)) in pts.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let mut p = String::new();
        for &(x, y) in v {
            let _ = write!(p, "{:.2},{:.2} ", sx(x), sy(y));
        }
        let _ = writeln!(s, "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>", p.trim_end());
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"{color}\">{}</text>",
            W - 140.0,
            52.0 + 14.0 * k as f64,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn colormap(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    // Piecewise-linear blue → white → red.
    let (r, g, b) = if t < 0.5 {
        let u = t / 0.5;
        (40.0 + 215.0 * u, 70.0 + 185.0 * u, 200.0 + 55.0 * u)
    } else {
        let u = (t - 0.5) / 0.5;
        (255.0, 255.0 - 200.0 * u, 255.0 - 215.0 * u)
    };
    format!("#{:02x}{:02x}{:02x}", r as u8, g as u8, b as u8)
}

/// Heatmap of `values[ix * ny + iy]` over the rectangle `xr × yr`.
pub fn heatmap(title: &str, xlabel: &str, ylabel: &str, nx: usize, ny: usize, xr: (f64, f64), yr: (f64, f64), values: &[f64]) -> String {
    let vr = range(values.iter().copied());
    let mut s = header(title);
    axes(&mut s, xr, yr, xlabel, ylabel);
    let cw = (W - 20.0 - MARGIN) / nx as f64;
    let ch = (H - MARGIN - 40.0) / ny as f64;
    for ix in 0..nx {
        for iy in 0..ny {
            let v = values[ix * ny + iy];
            let color = if v.is_finite() { colormap((v - vr.0) / (vr.1 - vr.0)) } else { "#000000".into() };
            let _ = writeln!(
                s,
                "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{color}\"/>",
                MARGIN + ix as f64 * cw,
                (H - MARGIN) - (iy + 1) as f64 * ch,
                cw + 0.3,
                ch + 0.3
            );
        }
    }
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"36\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">range [{:.3e}, {:.3e}]</text>",
        W - 20.0,
        vr.0,
        vr.1
    );
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plots_are_well_formed() {
        let s = line_plot("t", "x", "y", &[("a".into(), vec![(0.0, 1.0), (1.0, 2.0)])], false);
        assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
        assert_eq!(s.matches("<polyline").count(), 2);
        let l = line_plot("t", "x", "y", &[("a".into(), vec![(0.0, 0.0), (1.0, 1e-3)])], true);
        assert!(l.contains("log10"));
        let h = heatmap("h", "x", "y", 2, 3, (0.0, 1.0), (0.0, 1.0), &[0.0, 1.0, 2.0, 3.0, 4.0, f64::NAN]);
        assert_eq!(h.matches("<rect").count(), 1 + 6);
    }
}
