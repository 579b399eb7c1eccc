//! Deterministic SVG bar chart of per-layer scores.
//!
//! Bars show mean scores grouped by model, with ±1 SEM error bars, an
//! asterisk over significant bars and a gray band spanning the noise
//! ceiling. The canvas is fixed at 960x480 and the output has no
//! timestamps, so equal specs give equal bytes.
//!
//! Vertical axis: the value range runs from `min(0, lowest bar - sem)` to
//! `max(upper ceiling, highest bar + sem)`, widened by 5% of its span on
//! both ends, and maps linearly onto the plot area (see [`AxisTransform`]).

use std::fmt::Write;

use crate::error::{Error, Result};
use crate::model::NoiseCeiling;

pub const WIDTH: f64 = 960.0;
pub const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 80.0;
const MARGIN_RIGHT: f64 = 30.0;
const MARGIN_TOP: f64 = 50.0;
const MARGIN_BOTTOM: f64 = 90.0;
const TABLE_LINE: f64 = 14.0;
const FONT_FAMILY: &str = "DejaVu Sans, Arial, Helvetica, sans-serif";
const PALETTE: [&str; 8] = ["#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860", "#da8bc3", "#8c8c8c"];

#[derive(Debug, Clone, PartialEq)]
pub struct Bar {
    pub label: String,
    pub mean_score: f64,
    pub sem: Option<f64>,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarGroup {
    pub model: String,
    pub bars: Vec<Bar>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReportSpec {
    pub title: String,
    pub y_label: String,
    pub groups: Vec<BarGroup>,
    pub noise_ceiling: Option<NoiseCeiling>,
    /// Extra text lines printed under the chart (e.g. a weights table).
    pub table: Vec<String>,
}

impl ReportSpec {
    fn bar_count(&self) -> usize {
        self.groups.iter().map(|g| g.bars.len()).sum()
    }

    fn finite_ceiling(&self) -> Option<NoiseCeiling> {
        self.noise_ceiling.filter(|c| c.lower.is_finite() && c.upper.is_finite())
    }

    fn plot_bottom(&self) -> f64 {
        HEIGHT - MARGIN_BOTTOM - TABLE_LINE * self.table.len() as f64
    }

    /// Value-to-pixel mapping used by [`render_report`].
    pub fn axis(&self) -> AxisTransform {
        let bars = self.groups.iter().flat_map(|g| &g.bars);
        let mut lo = 0.0f64;
        let mut hi = f64::NEG_INFINITY;
        for b in bars {
            let s = b.sem.unwrap_or(0.0);
            lo = lo.min(b.mean_score - s);
            hi = hi.max(b.mean_score + s);
        }
        if let Some(c) = self.finite_ceiling() {
            hi = hi.max(c.upper);
        }
        if !hi.is_finite() || hi <= lo {
            hi = lo + 1.0;
        }
        let pad = 0.05 * (hi - lo);
        AxisTransform {
            lo: lo - pad,
            hi: hi + pad,
            top_px: MARGIN_TOP,
            bottom_px: self.plot_bottom(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisTransform {
    pub lo: f64,
    pub hi: f64,
    pub top_px: f64,
    pub bottom_px: f64,
}

impl AxisTransform {
    pub fn to_px(&self, value: f64) -> f64 {
        self.top_px + (self.hi - value) / (self.hi - self.lo) * (self.bottom_px - self.top_px)
    }

    pub fn to_value(&self, px: f64) -> f64 {
        self.hi - (px - self.top_px) / (self.bottom_px - self.top_px) * (self.hi - self.lo)
    }
}

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

pub fn render_report(spec: &ReportSpec) -> Result<String> {
    let n_bars = spec.bar_count();
    if n_bars == 0 {
        return Err(Error::EmptyInput("report has no bars".into()));
    }
    let axis = spec.axis();
    let plot_left = MARGIN_LEFT;
    let plot_right = WIDTH - MARGIN_RIGHT;
    let plot_w = plot_right - plot_left;
    let plot_top = axis.top_px;
    let plot_bottom = axis.bottom_px;

    // one empty slot between groups
    let slots = n_bars + spec.groups.len().saturating_sub(1);
    let slot_w = plot_w / slots as f64;
    let bar_w = slot_w * 0.8;

    let mut s = String::new();
    // writes into a String cannot fail
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="960" height="480" viewBox="0 0 960 480" font-family="{FONT_FAMILY}">"#
    );
    let _ = writeln!(s, r##"<rect x="0" y="0" width="960" height="480" fill="#ffffff"/>"##);
    let _ = writeln!(
        s,
        r#"<text class="title" x="{:.3}" y="28" font-size="16" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        escape(&spec.title)
    );

    if let Some(c) = spec.finite_ceiling() {
        let y_top = axis.to_px(c.upper);
        let y_bottom = axis.to_px(c.lower);
        let _ = writeln!(
            s,
            r##"<rect class="noise-ceiling" data-lower="{}" data-upper="{}" x="{plot_left:.3}" y="{y_top:.3}" width="{plot_w:.3}" height="{:.3}" fill="#808080" fill-opacity="0.3"/>"##,
            c.lower,
            c.upper,
            (y_bottom - y_top).max(0.0)
        );
    }

    // axes and ticks
    let _ = writeln!(
        s,
        r##"<line class="axis" x1="{plot_left:.3}" y1="{plot_top:.3}" x2="{plot_left:.3}" y2="{plot_bottom:.3}" stroke="#000000"/>"##
    );
    let zero = axis.to_px(0.0);
    let _ = writeln!(
        s,
        r##"<line class="axis" x1="{plot_left:.3}" y1="{zero:.3}" x2="{plot_right:.3}" y2="{zero:.3}" stroke="#000000"/>"##
    );
    for k in 0..=5 {
        let v = axis.lo + (axis.hi - axis.lo) * k as f64 / 5.0;
        let y = axis.to_px(v);
        let _ = writeln!(
            s,
            r##"<line class="tick" x1="{:.3}" y1="{y:.3}" x2="{plot_left:.3}" y2="{y:.3}" stroke="#000000"/>"##,
            plot_left - 5.0
        );
        let _ = writeln!(
            s,
            r#"<text class="tick-label" x="{:.3}" y="{:.3}" font-size="11" text-anchor="end">{v:.3}</text>"#,
            plot_left - 8.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text class="y-label" x="20" y="{:.3}" font-size="13" text-anchor="middle" transform="rotate(-90 20 {:.3})">{}</text>"#,
        (plot_top + plot_bottom) / 2.0,
        (plot_top + plot_bottom) / 2.0,
        escape(&spec.y_label)
    );

    let mut slot = 0usize;
    for (g, group) in spec.groups.iter().enumerate() {
        let color = PALETTE[g % PALETTE.len()];
        for bar in &group.bars {
            let cx = plot_left + slot_w * (slot as f64 + 0.5);
            let x = cx - bar_w / 2.0;
            let y_val = axis.to_px(bar.mean_score);
            let (y, h) = if y_val < zero { (y_val, zero - y_val) } else { (zero, y_val - zero) };
            let _ = writeln!(
                s,
                r#"<rect class="bar" data-model="{}" data-layer="{}" data-value="{}" x="{x:.3}" y="{y:.3}" width="{bar_w:.3}" height="{h:.3}" fill="{color}"/>"#,
                escape(&group.model),
                escape(&bar.label),
                bar.mean_score
            );
            let mut top = bar.mean_score.max(0.0);
            if let Some(sem) = bar.sem {
                let y1 = axis.to_px(bar.mean_score - sem);
                let y2 = axis.to_px(bar.mean_score + sem);
                let cap = bar_w * 0.2;
                let _ = writeln!(
                    s,
                    r##"<line class="error-bar" x1="{cx:.3}" y1="{y1:.3}" x2="{cx:.3}" y2="{y2:.3}" stroke="#000000"/>"##
                );
                for yc in [y1, y2] {
                    let _ = writeln!(
                        s,
                        r##"<line class="error-bar" x1="{:.3}" y1="{yc:.3}" x2="{:.3}" y2="{yc:.3}" stroke="#000000"/>"##,
                        cx - cap,
                        cx + cap
                    );
                }
                top = top.max(bar.mean_score + sem);
            }
            if bar.significant {
                let _ = writeln!(
                    s,
                    r#"<text class="significance" x="{cx:.3}" y="{:.3}" font-size="16" text-anchor="middle">*</text>"#,
                    axis.to_px(top) - 4.0
                );
            }
            let label_y = plot_bottom + 14.0;
            let _ = writeln!(
                s,
                r#"<text class="bar-label" x="{cx:.3}" y="{label_y:.3}" font-size="10" text-anchor="end" transform="rotate(-35 {cx:.3} {label_y:.3})">{}</text>"#,
                escape(&bar.label)
            );
            slot += 1;
        }
        slot += 1;
    }

    // legend, top right
    for (g, group) in spec.groups.iter().enumerate() {
        let y = MARGIN_TOP + 4.0 + 16.0 * g as f64;
        let x = plot_right - 160.0;
        let _ = writeln!(
            s,
            r#"<rect class="legend" x="{x:.3}" y="{y:.3}" width="10" height="10" fill="{}"/>"#,
            PALETTE[g % PALETTE.len()]
        );
        let _ = writeln!(
            s,
            r#"<text class="legend-label" x="{:.3}" y="{:.3}" font-size="11">{}</text>"#,
            x + 14.0,
            y + 9.0,
            escape(&group.model)
        );
    }

    for (i, line) in spec.table.iter().enumerate() {
        let y = plot_bottom + 76.0 + TABLE_LINE * i as f64;
        let _ = writeln!(
            s,
            r#"<text class="table-row" x="{plot_left:.3}" y="{y:.3}" font-size="11" font-family="DejaVu Sans Mono, monospace">{}</text>"#,
            escape(line)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}
