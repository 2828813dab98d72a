//! Minimal deterministic SVG rendering. All coordinates are printed with two
//! decimals so identical input always yields identical bytes.

use std::fmt::Write;

use super::{KmVpc, PercentileBand, WormPoint};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 36.0;
const BOTTOM: f64 = 52.0;
const BAND_COLOURS: [&str; 3] = ["#4477aa", "#cc3311", "#4477aa"];

pub enum PlotData<'a> {
    Wormplot(&'a [WormPoint]),
    Bands(&'a [PercentileBand]),
    KmVpc(&'a KmVpc),
}

pub fn render_svg(plot: &PlotData) -> String {
    match plot {
        PlotData::Wormplot(points) => wormplot(points),
        PlotData::Bands(bands) => band_plot(bands),
        PlotData::KmVpc(vpc) => km_vpc_plot(vpc),
    }
}

fn num(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

fn nice_step(span: f64) -> f64 {
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let f = raw / mag;
    let nice = if f < 1.5 {
        1.0
    } else if f < 3.5 {
        2.0
    } else if f < 7.5 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

struct Canvas {
    x: (f64, f64),
    y: (f64, f64),
    body: String,
}

impl Canvas {
    fn new(x: (f64, f64), y: (f64, f64)) -> Self {
        let widen = |(lo, hi): (f64, f64)| {
            if !(lo.is_finite() && hi.is_finite()) {
                (0.0, 1.0)
            } else if hi - lo < 1e-12 {
                (lo - 0.5, hi + 0.5)
            } else {
                let pad = 0.04 * (hi - lo);
                (lo - pad, hi + pad)
            }
        };
        Self { x: widen(x), y: widen(y), body: String::new() }
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - TOP - BOTTOM)
    }

    fn path(points: &[(f64, f64)]) -> String {
        points.iter().map(|&(x, y)| format!("{},{}", num(x), num(y))).collect::<Vec<_>>().join(" ")
    }

    fn polyline(&mut self, pts: &[(f64, f64)], style: &str) {
        let mapped: Vec<_> = pts.iter().map(|&(x, y)| (self.px(x), self.py(y))).collect();
        let _ = writeln!(self.body, r#"<polyline points="{}" fill="none" {style}/>"#, Self::path(&mapped));
    }

    fn polygon(&mut self, pts: &[(f64, f64)], style: &str) {
        let mapped: Vec<_> = pts.iter().map(|&(x, y)| (self.px(x), self.py(y))).collect();
        let _ = writeln!(self.body, r#"<polygon points="{}" {style}/>"#, Self::path(&mapped));
    }

    fn circle(&mut self, x: f64, y: f64, style: &str) {
        let _ = writeln!(self.body, r#"<circle cx="{}" cy="{}" r="2.5" {style}/>"#, num(self.px(x)), num(self.py(y)));
    }

    fn finish(self, title: &str, xlabel: &str, ylabel: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#,
            w = WIDTH,
            h = HEIGHT
        );
        let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{title}</text>"#, num(WIDTH / 2.0));
        let (x0, x1, y0, y1) = (LEFT, WIDTH - RIGHT, TOP, HEIGHT - BOTTOM);
        let _ = writeln!(
            s,
            r#"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            num(x0),
            num(y0),
            num(x1 - x0),
            num(y1 - y0)
        );
        for (axis, (lo, hi)) in [(0, self.x), (1, self.y)] {
            let step = nice_step(hi - lo);
            let mut v = (lo / step).ceil() * step;
            while v <= hi + 1e-9 * step {
                let label = num(v);
                if axis == 0 {
                    let p = num(self.px(v));
                    let _ = writeln!(s, r#"<line x1="{p}" y1="{}" x2="{p}" y2="{}" stroke="black"/>"#, num(y1), num(y1 + 4.0));
                    let _ = writeln!(s, r#"<text x="{p}" y="{}" text-anchor="middle">{label}</text>"#, num(y1 + 16.0));
                } else {
                    let p = num(self.py(v));
                    let _ = writeln!(s, r#"<line x1="{}" y1="{p}" x2="{}" y2="{p}" stroke="black"/>"#, num(x0 - 4.0), num(x0));
                    let _ = writeln!(s, r#"<text x="{}" y="{p}" text-anchor="end" dy="4">{label}</text>"#, num(x0 - 6.0));
                }
                v += step;
            }
        }
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{xlabel}</text>"#, num((x0 + x1) / 2.0), num(HEIGHT - 12.0));
        let _ = writeln!(
            s,
            r#"<text x="16" y="{c}" text-anchor="middle" transform="rotate(-90 16 {c})">{ylabel}</text>"#,
            c = num((y0 + y1) / 2.0)
        );
        s.push_str(&self.body);
        s.push_str("</svg>\n");
        s
    }
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

fn wormplot(points: &[WormPoint]) -> String {
    let x = range(points.iter().map(|p| p.time).chain([0.0]));
    let y = range(points.iter().flat_map(|p| [p.lower, p.upper, p.detrended]));
    let mut c = Canvas::new(x, y);
    if !points.is_empty() {
        c.polyline(&[(c.x.0, 0.0), (c.x.1, 0.0)], r##"stroke="#888888" stroke-dasharray="4 3""##);
    }
    for p in points {
        c.polyline(&[(p.time, p.lower), (p.time, p.upper)], r##"stroke="#bbbbbb""##);
    }
    for p in points {
        let style = if p.censored { r##"fill="white" stroke="#cc3311""## } else { r##"fill="#4477aa""## };
        c.circle(p.time, p.detrended, style);
    }
    c.finish("De-trended pd", "time (days)", "pd minus expected order statistic")
}

fn band_plot(bands: &[PercentileBand]) -> String {
    let x = range(bands.iter().map(|b| b.time_center));
    let y = range(bands.iter().flat_map(|b| b.percentiles.iter().flat_map(|p| [p.lower, p.upper, p.observed])));
    let mut c = Canvas::new(x, y);
    let levels = bands.first().map_or(0, |b| b.percentiles.len());
    for j in 0..levels {
        let colour = BAND_COLOURS[j.min(BAND_COLOURS.len() - 1)];
        let mut area: Vec<(f64, f64)> = bands.iter().map(|b| (b.time_center, b.percentiles[j].upper)).collect();
        area.extend(bands.iter().rev().map(|b| (b.time_center, b.percentiles[j].lower)));
        c.polygon(&area, &format!(r#"fill="{colour}" fill-opacity="0.2" stroke="none""#));
        let line: Vec<_> = bands.iter().map(|b| (b.time_center, b.percentiles[j].observed)).collect();
        c.polyline(&line, &format!(r#"stroke="{colour}" stroke-width="1.5""#));
        for &(t, v) in &line {
            c.circle(t, v, &format!(r#"fill="{colour}""#));
        }
    }
    c.finish("npd percentiles by time bin", "time (days)", "npd")
}

fn steps(grid: &[f64], values: &[f64]) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(2 * grid.len());
    for (i, (&t, &v)) in grid.iter().zip(values).enumerate() {
        if i > 0 {
            out.push((t, values[i - 1]));
        }
        out.push((t, v));
    }
    out
}

fn km_vpc_plot(vpc: &KmVpc) -> String {
    let x = range(vpc.grid.iter().copied().chain([0.0]));
    let mut c = Canvas::new(x, (0.0, 1.0));
    if !vpc.grid.is_empty() {
        let mut area = steps(&vpc.grid, &vpc.p95);
        area.extend(steps(&vpc.grid, &vpc.p05).into_iter().rev());
        c.polygon(&area, r##"fill="#4477aa" fill-opacity="0.25" stroke="none""##);
        c.polyline(&steps(&vpc.grid, &vpc.p50), r##"stroke="#4477aa" stroke-dasharray="5 3""##);
        c.polyline(&steps(&vpc.grid, &vpc.observed), r#"stroke="black" stroke-width="1.5""#);
    }
    c.finish("Kaplan-Meier VPC", "time (days)", "event-free probability")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::BandPercentile;

    #[test]
    fn rendering_is_deterministic() {
        let pts = vec![WormPoint {
            id: "1".into(),
            time: 120.0,
            censored: true,
            imputed: true,
            rank: 1,
            n: 1,
            pd: 0.6,
            detrended: 0.1,
            lower: -0.45,
            upper: 0.45,
        }];
        let a = render_svg(&PlotData::Wormplot(&pts));
        assert_eq!(a, render_svg(&PlotData::Wormplot(&pts)));
        assert!(a.starts_with("<svg") && a.ends_with("</svg>\n"));
        assert_eq!(a.matches("<circle").count(), 1);
    }

    #[test]
    fn empty_inputs_draw_empty_axes() {
        for svg in [
            render_svg(&PlotData::Bands(&[])),
            render_svg(&PlotData::Wormplot(&[])),
            render_svg(&PlotData::KmVpc(&KmVpc {
                grid: vec![],
                observed: vec![],
                p05: vec![],
                p50: vec![],
                p95: vec![],
            })),
        ] {
            assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
            assert!(!svg.contains("NaN") && !svg.contains("inf"));
            assert!(!svg.contains("<polyline") && !svg.contains("<circle"));
        }
    }

    #[test]
    fn band_plot_draws_one_area_per_percentile() {
        let bands: Vec<_> = (0..3)
            .map(|i| PercentileBand {
                time_center: 50.0 * i as f64,
                time_min: 50.0 * i as f64,
                time_max: 50.0 * i as f64,
                count: 10,
                merged: false,
                percentiles: vec![
                    BandPercentile { level: 0.05, observed: -1.6, lower: -2.5, upper: -1.0 },
                    BandPercentile { level: 0.5, observed: 0.1, lower: -0.5, upper: 0.5 },
                    BandPercentile { level: 0.95, observed: 1.7, lower: 1.0, upper: 2.5 },
                ],
            })
            .collect();
        let svg = render_svg(&PlotData::Bands(&bands));
        assert_eq!(svg.matches("<polygon").count(), 3);
        assert_eq!(svg.matches("<circle").count(), 9);
    }
}
