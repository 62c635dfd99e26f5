use std::fmt::Write;

use super::{Category, CostBreakdown};
use crate::telemetry::Tier;

const PALETTE: [&str; 6] = ["#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#76b7b2", "#b07aa1"];
const W: f64 = 900.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const BOTTOM: f64 = 80.0;
const TOP: f64 = 30.0;

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Grouped bar chart of cost per tier and category, one bar per series, on
/// a base-10 logarithmic axis. Zero cells draw no bar.
pub fn render_svg(series: &[(&str, &CostBreakdown)]) -> String {
    let values = series
        .iter()
        .flat_map(|(_, b)| Tier::ALL.into_iter().flat_map(move |t| Category::ALL.map(|c| b.get(t, c))))
        .filter(|v| *v > 0.0);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        (lo, hi) = (1e-3, 1.0);
    }
    let lo_exp = lo.log10().floor() as i32;
    let hi_exp = (hi.log10().ceil() as i32).max(lo_exp + 1);
    let plot_h = H - TOP - BOTTOM;
    let y_of = |v: f64| {
        let f = (v.log10() - lo_exp as f64) / (hi_exp - lo_exp) as f64;
        TOP + plot_h * (1.0 - f)
    };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
    );
    for e in lo_exp..=hi_exp {
        let y = y_of(10f64.powi(e));
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{y:.1}" x2="{}" y2="{y:.1}" stroke="#ddd"/><text x="{}" y="{:.1}" text-anchor="end">1e{e}</text>"##,
            W - 10.0,
            LEFT - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.1}" transform="rotate(-90 14 {:.1})" text-anchor="middle">USD (log scale)</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0
    );

    let groups: Vec<(Tier, Category)> = Tier::ALL
        .into_iter()
        .flat_map(|t| Category::ALL.map(|c| (t, c)))
        .collect();
    let group_w = (W - LEFT - 10.0) / groups.len() as f64;
    let bar_w = (group_w * 0.8) / series.len().max(1) as f64;
    let base_y = TOP + plot_h;
    for (gi, (tier, cat)) in groups.iter().enumerate() {
        let gx = LEFT + gi as f64 * group_w + group_w * 0.1;
        for (si, (name, b)) in series.iter().enumerate() {
            let v = b.get(*tier, *cat);
            if v <= 0.0 {
                continue;
            }
            let y = y_of(v).min(base_y);
            let _ = writeln!(
                s,
                r#"<rect x="{:.1}" y="{y:.1}" width="{bar_w:.1}" height="{:.1}" fill="{}"><title>{} {tier} {}: ${v:.6}</title></rect>"#,
                gx + si as f64 * bar_w,
                base_y - y,
                PALETTE[si % PALETTE.len()],
                esc(name),
                cat.as_str()
            );
        }
        let _ = writeln!(
            s,
            r##"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text><text x="{:.1}" y="{:.1}" text-anchor="middle" fill="#666">{tier}</text>"##,
            gx + group_w * 0.4,
            base_y + 16.0,
            cat.as_str(),
            gx + group_w * 0.4,
            base_y + 30.0
        );
    }
    for (si, (name, _)) in series.iter().enumerate() {
        let x = LEFT + si as f64 * 150.0;
        let y = H - 20.0;
        let _ = writeln!(
            s,
            r#"<rect x="{x}" y="{}" width="10" height="10" fill="{}"/><text x="{}" y="{y}">{}</text>"#,
            y - 9.0,
            PALETTE[si % PALETTE.len()],
            x + 14.0,
            esc(name)
        );
    }
    s.push_str("</svg>\n");
    s
}
