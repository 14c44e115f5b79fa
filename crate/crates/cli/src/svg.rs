//! Var/CR scatter plot as a standalone SVG document.

use std::fmt::Write;

use equm::metrics::FrontierPoint;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 200.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

pub fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// Series name of a label: its first whitespace-separated word.
fn series(label: &str) -> &str {
    label.split_whitespace().next().unwrap_or("")
}

fn padded_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let span = hi - lo;
    let pad = if span > 0.0 { 0.05 * span } else { lo.abs().max(1.0) * 0.5 };
    (lo - pad, hi + pad)
}

/// Dominated points are drawn hollow, non-dominated ones filled; colour
/// follows the series name.
pub fn frontier_svg(points: &[FrontierPoint], title: &str) -> String {
    let (x0, x1) = padded_range(points.iter().map(|p| p.var));
    let (y0, y1) = padded_range(points.iter().map(|p| p.cr));
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let sx = |v: f64| LEFT + (v - x0) / (x1 - x0) * plot_w;
    let sy = |v: f64| TOP + plot_h - (v - y0) / (y1 - y0) * plot_h;

    let mut names: Vec<&str> = Vec::new();
    for p in points {
        let s = series(&p.label);
        if !names.contains(&s) {
            names.push(s);
        }
    }
    let colour = |label: &str| {
        let i = names.iter().position(|n| *n == series(label)).unwrap_or(0);
        PALETTE[i % PALETTE.len()]
    };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        LEFT + plot_w / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<g class="axes" stroke="black"><line x1="{LEFT}" y1="{b}" x2="{r}" y2="{b}"/><line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{b}"/></g>"#,
        b = TOP + plot_h,
        r = LEFT + plot_w
    );
    for i in 0..=4 {
        let t = i as f64 / 4.0;
        let (vx, vy) = (x0 + t * (x1 - x0), y0 + t * (y1 - y0));
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            sx(vx),
            TOP + plot_h + 18.0,
            tick(vx)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            LEFT - 6.0,
            sy(vy) + 4.0,
            tick(vy)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">Var</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 18.0
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">CR</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0
    );

    let _ = writeln!(s, r#"<g class="points">"#);
    for p in points {
        let c = colour(&p.label);
        let (class, fill) = if p.dominated { ("dominated", "none") } else { ("frontier", c) };
        let _ = writeln!(
            s,
            r#"<circle class="{class}" cx="{:.2}" cy="{:.2}" r="5" fill="{fill}" stroke="{c}" stroke-width="1.5"><title>{}</title></circle>"#,
            sx(p.var),
            sy(p.cr),
            escape(&format!("{} (var {}, cr {})", p.label, p.var, p.cr))
        );
    }
    let _ = writeln!(s, "</g>");

    let lx = LEFT + plot_w + 20.0;
    let _ = writeln!(s, r#"<g class="legend">"#);
    for (i, name) in names.iter().enumerate() {
        let y = TOP + 10.0 + 20.0 * i as f64;
        let c = PALETTE[i % PALETTE.len()];
        let _ = writeln!(
            s,
            r#"<circle cx="{lx}" cy="{y}" r="5" fill="{c}"/><text x="{}" y="{}">{}</text>"#,
            lx + 12.0,
            y + 4.0,
            escape(name)
        );
    }
    let y = TOP + 20.0 + 20.0 * names.len() as f64;
    let _ = writeln!(
        s,
        r#"<circle cx="{lx}" cy="{y}" r="5" fill="black"/><text x="{}" y="{}">non-dominated</text>"#,
        lx + 12.0,
        y + 4.0
    );
    let _ = writeln!(
        s,
        r#"<circle cx="{lx}" cy="{}" r="5" fill="none" stroke="black"/><text x="{}" y="{}">dominated</text>"#,
        y + 20.0,
        lx + 12.0,
        y + 24.0
    );
    let _ = writeln!(s, "</g>");
    s.push_str("</svg>\n");
    s
}

fn tick(v: f64) -> String {
    if v.abs() >= 100.0 {
        format!("{v:.0}")
    } else if v.abs() >= 1.0 {
        format!("{v:.2}")
    } else {
        format!("{v:.3}")
    }
}
