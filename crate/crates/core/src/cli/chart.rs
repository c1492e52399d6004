//! Hand-emitted SVG grouped bar charts for the comparison figures.

/// One bar series across all groups (same length as the group list).
#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub values: Vec<f64>,
}

const PALETTE: [&str; 6] = [
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948",
];

const BAR_WIDTH: f64 = 16.0;
const BAR_GAP: f64 = 2.0;
const GROUP_GAP: f64 = 20.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 48.0;
const BOTTOM: f64 = 112.0;
const PLOT_HEIGHT: f64 = 260.0;

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders a grouped bar chart. Groups appear on the x axis; each group
/// holds one bar per series. Negative values hang below the zero line.
pub fn grouped_bar_svg(title: &str, y_label: &str, groups: &[String], series: &[Series]) -> String {
    let group_width = series.len() as f64 * (BAR_WIDTH + BAR_GAP) + GROUP_GAP;
    let width = LEFT + RIGHT + groups.len() as f64 * group_width;
    let height = TOP + PLOT_HEIGHT + BOTTOM;

    let mut lo = 0.0f64;
    let mut hi = 0.0f64;
    for s in series {
        for v in &s.values {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
    }
    if hi == lo {
        hi = lo + 1.0;
    }
    let span = (hi - lo) * 1.08;
    let hi = lo + span;
    let y_of = |v: f64| TOP + PLOT_HEIGHT * (1.0 - (v - lo) / (hi - lo));

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" \
         viewBox=\"0 0 {width:.0} {height:.0}\" font-family=\"sans-serif\">\n"
    ));
    svg.push_str(&format!(
        "  <text x=\"{:.1}\" y=\"24\" font-size=\"15\" text-anchor=\"middle\">{}</text>\n",
        width / 2.0,
        esc(title)
    ));
    svg.push_str(&format!(
        "  <text x=\"16\" y=\"{:.1}\" font-size=\"11\" text-anchor=\"middle\" \
         transform=\"rotate(-90 16 {:.1})\">{}</text>\n",
        TOP + PLOT_HEIGHT / 2.0,
        TOP + PLOT_HEIGHT / 2.0,
        esc(y_label)
    ));

    // Horizontal grid lines and tick labels.
    for tick in 0..=4 {
        let v = lo + (hi - lo) * tick as f64 / 4.0;
        let y = y_of(v);
        svg.push_str(&format!(
            "  <line x1=\"{LEFT:.1}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" \
             stroke=\"#dddddd\" stroke-width=\"1\"/>\n",
            width - RIGHT
        ));
        svg.push_str(&format!(
            "  <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"10\" text-anchor=\"end\">{v:.2}</text>\n",
            LEFT - 6.0,
            y + 3.5
        ));
    }

    // Bars.
    for (g, group) in groups.iter().enumerate() {
        let x0 = LEFT + g as f64 * group_width + GROUP_GAP / 2.0;
        for (s, serie) in series.iter().enumerate() {
            let v = serie.values.get(g).copied().unwrap_or(0.0);
            let x = x0 + s as f64 * (BAR_WIDTH + BAR_GAP);
            let y_zero = y_of(0.0f64.clamp(lo, hi));
            let y_v = y_of(v);
            let (y, h) = if y_v <= y_zero {
                (y_v, y_zero - y_v)
            } else {
                (y_zero, y_v - y_zero)
            };
            svg.push_str(&format!(
                "  <rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{BAR_WIDTH:.1}\" height=\"{h:.1}\" \
                 fill=\"{}\"><title>{}: {v}</title></rect>\n",
                PALETTE[s % PALETTE.len()],
                esc(&format!("{group} / {}", serie.name)),
            ));
        }
        let label_x = x0 + (series.len() as f64 * (BAR_WIDTH + BAR_GAP)) / 2.0;
        let label_y = TOP + PLOT_HEIGHT + 14.0;
        svg.push_str(&format!(
            "  <text x=\"{label_x:.1}\" y=\"{label_y:.1}\" font-size=\"10\" text-anchor=\"end\" \
             transform=\"rotate(-40 {label_x:.1} {label_y:.1})\">{}</text>\n",
            esc(group)
        ));
    }

    // Zero axis.
    let y_zero = y_of(0.0f64.clamp(lo, hi));
    svg.push_str(&format!(
        "  <line x1=\"{LEFT:.1}\" y1=\"{y_zero:.1}\" x2=\"{:.1}\" y2=\"{y_zero:.1}\" \
         stroke=\"#333333\" stroke-width=\"1\"/>\n",
        width - RIGHT
    ));

    // Legend.
    for (s, serie) in series.iter().enumerate() {
        let x = LEFT + s as f64 * 120.0;
        let y = height - 20.0;
        svg.push_str(&format!(
            "  <rect x=\"{x:.1}\" y=\"{:.1}\" width=\"12\" height=\"12\" fill=\"{}\"/>\n",
            y - 10.0,
            PALETTE[s % PALETTE.len()]
        ));
        svg.push_str(&format!(
            "  <text x=\"{:.1}\" y=\"{y:.1}\" font-size=\"11\">{}</text>\n",
            x + 16.0,
            esc(&serie.name)
        ));
    }

    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_deterministic_svg() {
        let groups = vec!["saliency".to_string(), "lime".to_string()];
        let series = vec![
            Series {
                name: "tp".into(),
                values: vec![0.5, -0.1],
            },
            Series {
                name: "loss".into(),
                values: vec![0.6, 0.2],
            },
        ];
        let a = grouped_bar_svg("test", "rho", &groups, &series);
        let b = grouped_bar_svg("test", "rho", &groups, &series);
        assert_eq!(a, b);
        assert!(a.starts_with("<svg"));
        assert!(a.contains("saliency"));
        assert!(a.contains("</svg>"));
        assert_eq!(a.matches("<rect").count(), 4 + 2); // bars + legend swatches
    }
}
