//! Static SVG figures: a 1D prediction curve with its ±1.96σ_p band, and
//! heatmaps for 2D fields.

use std::fmt::Write as _;

const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: f64 = 56.0;

struct Axis {
    lo: f64,
    hi: f64,
    px_lo: f64,
    px_hi: f64,
}

impl Axis {
    fn new(lo: f64, hi: f64, px_lo: f64, px_hi: f64) -> Self {
        let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
        Self { lo, hi, px_lo, px_hi }
    }

    fn map(&self, v: f64) -> f64 {
        self.px_lo + (v - self.lo) / (self.hi - self.lo) * (self.px_hi - self.px_lo)
    }

    fn ticks(&self) -> Vec<f64> {
        (0..=4).map(|i| self.lo + (self.hi - self.lo) * i as f64 / 4.0).collect()
    }
}

fn header(svg: &mut String, title: &str) {
    let _ = write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">
<rect width="100%" height="100%" fill="white"/>
<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>
"#,
        W / 2.0,
        escape(title)
    );
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn axes(svg: &mut String, x: &Axis, y: &Axis, xlabel: &str, ylabel: &str) {
    let (x0, x1, y0, y1) = (x.px_lo, x.px_hi, y.px_lo, y.px_hi);
    let _ = writeln!(svg, r#"<rect x="{x0}" y="{y1}" width="{}" height="{}" fill="none" stroke="black"/>"#, x1 - x0, y0 - y1);
    for t in x.ticks() {
        let px = x.map(t);
        let _ = writeln!(
            svg,
            r#"<line x1="{px:.2}" y1="{y0}" x2="{px:.2}" y2="{}" stroke="black"/><text x="{px:.2}" y="{}" text-anchor="middle">{t:.2}</text>"#,
            y0 + 4.0,
            y0 + 18.0
        );
    }
    for t in y.ticks() {
        let py = y.map(t);
        let _ = writeln!(
            svg,
            r#"<line x1="{}" y1="{py:.2}" x2="{x0}" y2="{py:.2}" stroke="black"/><text x="{}" y="{:.2}" text-anchor="end">{t:.2}</text>"#,
            x0 - 4.0,
            x0 - 6.0,
            py + 4.0
        );
    }
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (x0 + x1) / 2.0, H - 8.0, escape(xlabel));
    let _ = writeln!(
        svg,
        r#"<text x="14" y="{0}" text-anchor="middle" transform="rotate(-90 14 {0})">{1}</text>"#,
        (y0 + y1) / 2.0,
        escape(ylabel)
    );
}

fn polyline(points: impl Iterator<Item = (f64, f64)>) -> String {
    points.map(|(x, y)| format!("{x:.2},{y:.2}")).collect::<Vec<_>>().join(" ")
}

/// Input for [`band_plot`]. All slices over `x` have equal length and `x`
/// is increasing.
pub struct BandPlot<'a> {
    pub title: &'a str,
    pub x: &'a [f64],
    pub mean: &'a [f64],
    pub sigma: &'a [f64],
    pub exact: &'a [f64],
    /// Shaded as the region where data were available.
    pub training_domain: (f64, f64),
    pub observations: &'a [(f64, f64)],
}

pub fn band_plot(p: &BandPlot) -> String {
    let lower: Vec<f64> = p.mean.iter().zip(p.sigma).map(|(m, s)| m - 1.96 * s).collect();
    let upper: Vec<f64> = p.mean.iter().zip(p.sigma).map(|(m, s)| m + 1.96 * s).collect();
    let finite = |v: &&f64| v.is_finite();
    let all = lower.iter().chain(&upper).chain(p.exact).chain(p.observations.iter().map(|o| &o.1)).filter(finite);
    let (ylo, yhi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let pad = 0.05 * (yhi - ylo).max(1e-9);
    let xs = Axis::new(p.x[0], p.x[p.x.len() - 1], MARGIN, W - 16.0);
    let ys = Axis::new(ylo - pad, yhi + pad, H - 40.0, 32.0);
    let clampy = |v: f64| ys.map(v.clamp(ys.lo, ys.hi));

    let mut svg = String::new();
    header(&mut svg, p.title);
    let (d0, d1) = (xs.map(p.training_domain.0.max(xs.lo)), xs.map(p.training_domain.1.min(xs.hi)));
    let _ = writeln!(svg, r##"<rect x="{d0:.2}" y="{}" width="{:.2}" height="{}" fill="#eeeeee"/>"##, ys.px_hi, d1 - d0, ys.px_lo - ys.px_hi);
    let band = polyline(
        p.x.iter().zip(&upper).map(|(&x, &u)| (xs.map(x), clampy(u)))
            .chain(p.x.iter().zip(&lower).rev().map(|(&x, &l)| (xs.map(x), clampy(l)))),
    );
    let _ = writeln!(svg, r##"<polygon points="{band}" fill="#9ecae1" fill-opacity="0.6" stroke="none"/>"##);
    for &(x, u) in p.observations {
        let _ = writeln!(svg, r##"<circle cx="{:.2}" cy="{:.2}" r="2" fill="#636363"/>"##, xs.map(x), clampy(u));
    }
    let exact = polyline(p.x.iter().zip(p.exact).map(|(&x, &u)| (xs.map(x), clampy(u))));
    let _ = writeln!(svg, r##"<polyline points="{exact}" fill="none" stroke="black" stroke-dasharray="5,3" stroke-width="1.5"/>"##);
    let mean = polyline(p.x.iter().zip(p.mean).map(|(&x, &u)| (xs.map(x), clampy(u))));
    let _ = writeln!(svg, r##"<polyline points="{mean}" fill="none" stroke="#08519c" stroke-width="1.5"/>"##);
    axes(&mut svg, &xs, &ys, "x", "u");
    let lx = MARGIN + 10.0;
    let _ = writeln!(
        svg,
        r##"<g font-size="11"><line x1="{lx}" y1="44" x2="{}" y2="44" stroke="#08519c" stroke-width="1.5"/><text x="{}" y="48">mean</text><line x1="{lx}" y1="60" x2="{}" y2="60" stroke="black" stroke-dasharray="5,3"/><text x="{}" y="64">exact</text><rect x="{lx}" y="70" width="20" height="10" fill="#9ecae1"/><text x="{}" y="80">mean ± 1.96 σ_p</text></g>"##,
        lx + 20.0, lx + 26.0, lx + 20.0, lx + 26.0, lx + 26.0
    );
    svg.push_str("</svg>\n");
    svg
}

/// Piecewise-linear viridis approximation on t ∈ [0, 1].
fn colormap(t: f64) -> (u8, u8, u8) {
    const STOPS: [(f64, f64, f64); 5] =
        [(68.0, 1.0, 84.0), (59.0, 82.0, 139.0), (33.0, 145.0, 140.0), (94.0, 201.0, 98.0), (253.0, 231.0, 37.0)];
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let s = t * (STOPS.len() - 1) as f64;
    let i = (s.floor() as usize).min(STOPS.len() - 2);
    let f = s - i as f64;
    let lerp = |a: f64, b: f64| (a + (b - a) * f).round() as u8;
    (lerp(STOPS[i].0, STOPS[i + 1].0), lerp(STOPS[i].1, STOPS[i + 1].1), lerp(STOPS[i].2, STOPS[i + 1].2))
}

/// Heatmap of `values` on an `nx × ny` tensor grid, row-major in y then x
/// (value `j * nx + i` sits at `(xs[i], ys[j])`).
pub fn heatmap(title: &str, xs: &[f64], ys: &[f64], values: &[f64]) -> String {
    let (nx, ny) = (xs.len(), ys.len());
    assert_eq!(values.len(), nx * ny, "heatmap grid size");
    let (vlo, vhi) = values
        .iter()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let span = if vhi > vlo { vhi - vlo } else { 1.0 };
    let plot_w = H - 72.0;
    let xa = Axis::new(xs[0], xs[nx - 1], MARGIN, MARGIN + plot_w);
    let ya = Axis::new(ys[0], ys[ny - 1], H - 40.0, H - 40.0 - plot_w);
    let cw = plot_w / nx.saturating_sub(1).max(1) as f64;
    let ch = plot_w / ny.saturating_sub(1).max(1) as f64;

    let mut svg = String::new();
    header(&mut svg, title);
    svg.push_str("<g shape-rendering=\"crispEdges\">\n");
    for j in 0..ny {
        for i in 0..nx {
            let (r, g, b) = colormap((values[j * nx + i] - vlo) / span);
            let _ = writeln!(
                svg,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="rgb({r},{g},{b})"/>"#,
                (xa.map(xs[i]) - cw / 2.0).max(xa.px_lo),
                (ya.map(ys[j]) - ch / 2.0).max(ya.px_hi),
                cw,
                ch
            );
        }
    }
    svg.push_str("</g>\n");
    axes(&mut svg, &xa, &ya, "x", "y");
    let bx = MARGIN + plot_w + 40.0;
    for k in 0..50 {
        let (r, g, b) = colormap(1.0 - k as f64 / 49.0);
        let y = ya.px_hi + plot_w * k as f64 / 50.0;
        let _ = writeln!(svg, r#"<rect x="{bx}" y="{y:.2}" width="18" height="{:.2}" fill="rgb({r},{g},{b})"/>"#, plot_w / 50.0 + 0.5);
    }
    let _ = writeln!(svg, r#"<text x="{}" y="{:.2}">{vhi:.3e}</text>"#, bx + 24.0, ya.px_hi + 10.0);
    let _ = writeln!(svg, r#"<text x="{}" y="{:.2}">{vlo:.3e}</text>"#, bx + 24.0, ya.px_lo);
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_plot_is_well_formed() {
        let x: Vec<f64> = (0..11).map(|i| i as f64 / 10.0).collect();
        let mean: Vec<f64> = x.iter().map(|v| v * v).collect();
        let sigma = vec![0.05; 11];
        let svg = band_plot(&BandPlot {
            title: "a < b",
            x: &x,
            mean: &mean,
            sigma: &sigma,
            exact: &mean,
            training_domain: (0.2, 0.7),
            observations: &[(0.3, 0.1)],
        });
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("a &lt; b") && svg.contains("<polygon") && svg.contains("<circle"));
        assert!(!svg.contains("NaN"));
    }

    #[test]
    fn heatmap_has_one_cell_per_value() {
        let g = [0.0, 0.5, 1.0];
        let svg = heatmap("u", &g, &g, &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        let cells = svg.matches("<rect").count();
        // background + 9 cells + frame + 50 legend swatches
        assert_eq!(cells, 1 + 9 + 1 + 50);
        assert_eq!(colormap(0.0), (68, 1, 84));
        assert_eq!(colormap(1.0), (253, 231, 37));
    }
}
