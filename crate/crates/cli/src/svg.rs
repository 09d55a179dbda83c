use std::fmt::Write;

use fieldkit_core::Histogram;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 320.0;
const MARGIN: f64 = 40.0;

/// Minimal bar chart of the bin counts with the range labelled on the axis.
pub fn histogram_svg(h: &Histogram, metric: &str) -> String {
    let max = h.counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let bar_w = plot_w / h.n_bins as f64;
    let base = HEIGHT - MARGIN;

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    )
    .unwrap();
    writeln!(s, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##).unwrap();
    for (i, &c) in h.counts.iter().enumerate() {
        let bh = c as f64 / max * plot_h;
        writeln!(
            s,
            r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#1a9850"><title>[{}, {}): {c}</title></rect>"##,
            MARGIN + i as f64 * bar_w,
            base - bh,
            bar_w,
            bh,
            h.edge(i),
            h.edge(i + 1),
        )
        .unwrap();
    }
    writeln!(
        s,
        r##"<line x1="{MARGIN}" y1="{base}" x2="{}" y2="{base}" stroke="#000000"/>"##,
        WIDTH - MARGIN
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="{MARGIN}" y="{}" font-size="12">{}</text>"#,
        base + 16.0,
        h.lo
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="end">{}</text>"#,
        WIDTH - MARGIN,
        base + 16.0,
        h.hi
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="14" text-anchor="middle">{metric} (n = {}, max bin {max})</text>"#,
        WIDTH / 2.0,
        MARGIN - 12.0,
        h.total(),
    )
    .unwrap();
    s.push_str("</svg>\n");
    s
}
