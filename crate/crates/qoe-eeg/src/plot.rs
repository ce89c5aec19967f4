//! Deterministic SVG rendering for report charts.
//!
//! The only chart type reports need is a grouped bar chart. Rendering is a
//! pure function of the chart data: coordinates are written with fixed
//! precision and there are no timestamps, generated ids, or other sources
//! of drift, so re-rendering the same data produces the same bytes.

use std::fmt::Write as _;

/// Fill colors assigned to series in order.
const PALETTE: [&str; 6] =
    ["#4878a8", "#e49444", "#5fa05a", "#d1605e", "#857aab", "#937860"];

const WIDTH: f64 = 960.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 30.0;
const MARGIN_TOP: f64 = 56.0;
const MARGIN_BOTTOM: f64 = 64.0;

/// One cluster of bars sharing an x-axis label.
#[derive(Debug, Clone, PartialEq)]
pub struct BarGroup {
    pub label: String,
    /// One value per series, in series order.
    pub values: Vec<f64>,
}

/// A grouped bar chart with a legend entry per series.
#[derive(Debug, Clone, PartialEq)]
pub struct BarChart {
    pub title: String,
    pub y_label: String,
    pub series: Vec<String>,
    pub groups: Vec<BarGroup>,
}

#[derive(Debug, thiserror::Error)]
pub enum PlotError {
    #[error("bad chart: {detail}")]
    Invalid { detail: String },
}

/// Maps data values into pixel y coordinates, top-down.
struct YScale {
    min: f64,
    max: f64,
    top: f64,
    height: f64,
}

impl YScale {
    /// Covers the data range extended to include zero, with a little
    /// headroom so the tallest bar does not touch the frame.
    fn fit(values: impl Iterator<Item = f64>) -> YScale {
        let mut lo = 0.0f64;
        let mut hi = 0.0f64;
        for v in values {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        let span = (hi - lo).max(1e-9);
        YScale {
            min: if lo < 0.0 { lo - 0.05 * span } else { 0.0 },
            max: if hi > 0.0 { hi + 0.05 * span } else { 0.0f64.max(hi) },
            top: MARGIN_TOP,
            height: HEIGHT - MARGIN_TOP - MARGIN_BOTTOM,
        }
    }

    fn y(&self, value: f64) -> f64 {
        let span = (self.max - self.min).max(1e-9);
        self.top + (self.max - value) / span * self.height
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl BarChart {
    fn validate(&self) -> Result<(), PlotError> {
        let fail = |detail: String| Err(PlotError::Invalid { detail });
        if self.series.is_empty() {
            return fail("chart needs at least one series".into());
        }
        if self.groups.is_empty() {
            return fail("chart needs at least one group".into());
        }
        for group in &self.groups {
            if group.values.len() != self.series.len() {
                return fail(format!(
                    "group '{}' has {} values for {} series",
                    group.label,
                    group.values.len(),
                    self.series.len()
                ));
            }
            if let Some(v) = group.values.iter().find(|v| !v.is_finite()) {
                return fail(format!("group '{}' has non-finite value {v}", group.label));
            }
        }
        Ok(())
    }

    /// Renders the chart to a standalone SVG document.
    pub fn render(&self) -> Result<String, PlotError> {
        self.validate()?;
        let scale = YScale::fit(self.groups.iter().flat_map(|g| g.values.iter().copied()));
        let plot_left = MARGIN_LEFT;
        let plot_width = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
        let plot_bottom = scale.top + scale.height;

        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif">"#
        );
        let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="28" text-anchor="middle" font-size="18">{}</text>"#,
            WIDTH / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            svg,
            r#"<text x="18" y="{:.2}" text-anchor="middle" font-size="13" transform="rotate(-90 18 {:.2})">{}</text>"#,
            scale.top + scale.height / 2.0,
            scale.top + scale.height / 2.0,
            escape(&self.y_label)
        );

        // Horizontal gridlines and tick labels on quarter intervals.
        for i in 0..=4 {
            let value = scale.min + (scale.max - scale.min) * i as f64 / 4.0;
            let y = scale.y(value);
            let _ = writeln!(
                svg,
                r##"<line x1="{plot_left:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/>"##,
                plot_left + plot_width
            );
            let _ = writeln!(
                svg,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end" font-size="12">{value:.2}</text>"#,
                plot_left - 8.0,
                y + 4.0
            );
        }

        // Bars, clustered per group with a fixed fraction of padding.
        let group_width = plot_width / self.groups.len() as f64;
        let bar_width = group_width * 0.8 / self.series.len() as f64;
        for (gi, group) in self.groups.iter().enumerate() {
            let group_left = plot_left + gi as f64 * group_width + group_width * 0.1;
            for (si, &value) in group.values.iter().enumerate() {
                let x = group_left + si as f64 * bar_width;
                let y0 = scale.y(value.max(0.0));
                let y1 = scale.y(value.min(0.0));
                let _ = writeln!(
                    svg,
                    r#"<rect x="{x:.2}" y="{y0:.2}" width="{bar_width:.2}" height="{:.2}" fill="{}"/>"#,
                    y1 - y0,
                    PALETTE[si % PALETTE.len()]
                );
            }
            let _ = writeln!(
                svg,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="12">{}</text>"#,
                plot_left + (gi as f64 + 0.5) * group_width,
                plot_bottom + 20.0,
                escape(&group.label)
            );
        }

        // Baseline at zero, over the bars so negative bars hang off it.
        let zero = scale.y(0.0);
        let _ = writeln!(
            svg,
            r##"<line x1="{plot_left:.2}" y1="{zero:.2}" x2="{:.2}" y2="{zero:.2}" stroke="#333"/>"##,
            plot_left + plot_width
        );

        // Legend, one swatch per series across the top.
        let mut legend_x = plot_left;
        for (si, name) in self.series.iter().enumerate() {
            let _ = writeln!(
                svg,
                r#"<rect x="{legend_x:.2}" y="38" width="12" height="12" fill="{}"/>"#,
                PALETTE[si % PALETTE.len()]
            );
            let _ = writeln!(
                svg,
                r#"<text x="{:.2}" y="48" font-size="12">{}</text>"#,
                legend_x + 16.0,
                escape(name)
            );
            legend_x += 24.0 + 7.0 * name.len() as f64;
        }

        let _ = writeln!(svg, "</svg>");
        Ok(svg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_chart() -> BarChart {
        BarChart {
            title: "Scores".into(),
            y_label: "accuracy".into(),
            series: vec!["run".into(), "reference".into()],
            groups: vec![
                BarGroup { label: "baseline".into(), values: vec![0.42, 0.79] },
                BarGroup { label: "alpha".into(), values: vec![0.31, 0.66] },
                BarGroup { label: "delta".into(), values: vec![0.40, 0.71] },
            ],
        }
    }

    #[test]
    fn renders_one_rect_per_bar_plus_chrome() {
        let svg = sample_chart().render().unwrap();
        assert!(svg.starts_with("<svg "));
        assert!(svg.trim_end().ends_with("</svg>"));
        // 6 bars + background + 2 legend swatches.
        assert_eq!(svg.matches("<rect ").count(), 9);
        assert!(svg.contains("baseline"));
        assert!(svg.contains("reference"));
    }

    #[test]
    fn rendering_is_reproducible() {
        assert_eq!(sample_chart().render().unwrap(), sample_chart().render().unwrap());
    }

    #[test]
    fn taller_values_map_to_higher_bars() {
        let scale = YScale::fit([0.0, 1.0, 2.0].into_iter());
        let y1 = scale.y(1.0);
        let y2 = scale.y(2.0);
        let y0 = scale.y(0.0);
        assert!(y2 < y1 && y1 < y0);
        assert!((y0 - y1) - (y1 - y2) < 1e-9);
    }

    #[test]
    fn negative_values_extend_the_scale_below_zero() {
        let scale = YScale::fit([-0.5, 1.0].into_iter());
        assert!(scale.min < -0.5);
        assert!(scale.y(-0.5) > scale.y(0.0));
        let chart = BarChart {
            title: "deltas".into(),
            y_label: "pp".into(),
            series: vec!["delta".into()],
            groups: vec![BarGroup { label: "alpha".into(), values: vec![-0.2] }],
        };
        chart.render().unwrap();
    }

    #[test]
    fn malformed_charts_are_rejected() {
        let mut chart = sample_chart();
        chart.groups[1].values.pop();
        assert!(chart.render().is_err());

        let mut chart = sample_chart();
        chart.groups[0].values[0] = f64::NAN;
        assert!(chart.render().is_err());

        let chart = BarChart {
            title: String::new(),
            y_label: String::new(),
            series: vec![],
            groups: vec![],
        };
        assert!(chart.render().is_err());
    }

    #[test]
    fn text_is_xml_escaped() {
        let chart = BarChart {
            title: "a < b & c".into(),
            y_label: "x".into(),
            series: vec!["s".into()],
            groups: vec![BarGroup { label: "g".into(), values: vec![1.0] }],
        };
        let svg = chart.render().unwrap();
        assert!(svg.contains("a &lt; b &amp; c"));
        assert!(!svg.contains("a < b"));
    }
}
