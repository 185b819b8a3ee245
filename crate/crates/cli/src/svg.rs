//! Self-contained SVG rendering for the toolkit's CSV outputs. No external
//! plotting dependencies; identical input bytes produce identical output
//! bytes.

use crate::csvio::Table;
use std::fmt::Write as _;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 86.0;
const MARGIN_RIGHT: f64 = 150.0;
const MARGIN_TOP: f64 = 44.0;
const MARGIN_BOTTOM: f64 = 58.0;

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    Sweep,
    Tune,
    Spectrum,
    Lock,
}

impl PlotKind {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "sweep" => Some(Self::Sweep),
            "tune" => Some(Self::Tune),
            "spectrum" => Some(Self::Spectrum),
            "lock" => Some(Self::Lock),
            _ => None,
        }
    }

    /// Infer the plot kind from the CSV header row.
    pub fn from_headers(headers: &[String]) -> Option<Self> {
        let h: Vec<&str> = headers.iter().map(String::as_str).collect();
        match h.as_slice() {
            ["phi_over_pi", "freq_hz", "s21_sq"] => Some(Self::Sweep),
            ["phi_over_pi", "b_ip_T", "omega_m_hz"] => Some(Self::Tune),
            ["freq_hz", "psd_v2_per_hz"] => Some(Self::Spectrum),
            ["step", "drift_phi0", "correction_phi0", "residual_phi0", "error_signal"] => {
                Some(Self::Lock)
            }
            _ => None,
        }
    }

    fn title(self) -> &'static str {
        match self {
            Self::Sweep => "Transmission vs flux",
            Self::Tune => "Mechanical tuning",
            Self::Spectrum => "Sideband spectrum",
            Self::Lock => "Flux lock",
        }
    }
}

struct Axis {
    lo: f64,
    hi: f64,
    scale_pow: i32,
}

impl Axis {
    fn new(values: impl Iterator<Item = f64>) -> Self {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for v in values {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if hi <= lo || !hi.is_finite() {
            // degenerate span: pad around the value
            let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
            lo -= pad;
            hi += pad;
        }
        let mag = lo.abs().max(hi.abs());
        let pow = if mag > 0.0 { mag.log10().floor() as i32 } else { 0 };
        let scale_pow = if !(-3..4).contains(&pow) { pow } else { 0 };
        Self { lo, hi, scale_pow }
    }

    fn scale(&self) -> f64 {
        10f64.powi(self.scale_pow)
    }

    /// 1-2-5 tick ladder over the axis range, in scaled units.
    fn ticks(&self) -> Vec<f64> {
        let lo = self.lo / self.scale();
        let hi = self.hi / self.scale();
        let span = hi - lo;
        let raw = span / 5.0;
        let pow = raw.log10().floor();
        let base = 10f64.powf(pow);
        let step = [1.0, 2.0, 5.0, 10.0]
            .iter()
            .map(|m| m * base)
            .find(|&s| span / s <= 6.0)
            .unwrap_or(10.0 * base);
        let first = (lo / step).ceil();
        let mut out = Vec::new();
        let mut k = first;
        while k * step <= hi + 1e-9 * step {
            out.push(k * step);
            k += 1.0;
        }
        out
    }

    fn label_suffix(&self) -> String {
        if self.scale_pow == 0 {
            String::new()
        } else {
            format!(" x1e{}", self.scale_pow)
        }
    }
}

fn px(v: f64) -> String {
    format!("{:.2}", v)
}

fn tick_label(v: f64) -> String {
    let s = format!("{:.3}", v);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() || s == "-" {
        "0".into()
    } else {
        s.into()
    }
}

struct Frame {
    x: Axis,
    y: Axis,
}

impl Frame {
    fn to_px(&self, x: f64, y: f64) -> (f64, f64) {
        let w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
        let h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
        let fx = MARGIN_LEFT + (x - self.x.lo) / (self.x.hi - self.x.lo) * w;
        let fy = HEIGHT - MARGIN_BOTTOM - (y - self.y.lo) / (self.y.hi - self.y.lo) * h;
        (fx, fy)
    }

    fn axes_svg(&self, x_label: &str, y_label: &str, title: &str) -> String {
        let mut s = String::new();
        let x0 = MARGIN_LEFT;
        let x1 = WIDTH - MARGIN_RIGHT;
        let y0 = MARGIN_TOP;
        let y1 = HEIGHT - MARGIN_BOTTOM;
        let _ = write!(
            s,
            r#"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="black" stroke-width="1"/>"#,
            px(x0),
            px(y0),
            px(x1 - x0),
            px(y1 - y0)
        );
        for t in self.x.ticks() {
            let (fx, _) = self.to_px(t * self.x.scale(), self.y.lo);
            let _ = write!(
                s,
                r#"<line x1="{0}" y1="{1}" x2="{0}" y2="{2}" stroke="black"/><text x="{0}" y="{3}" text-anchor="middle" font-size="12">{4}</text>"#,
                px(fx),
                px(y1),
                px(y1 + 5.0),
                px(y1 + 18.0),
                tick_label(t)
            );
        }
        for t in self.y.ticks() {
            let (_, fy) = self.to_px(self.x.lo, t * self.y.scale());
            let _ = write!(
                s,
                r#"<line x1="{1}" y1="{0}" x2="{2}" y2="{0}" stroke="black"/><text x="{3}" y="{4}" text-anchor="end" font-size="12">{5}</text>"#,
                px(fy),
                px(x0 - 5.0),
                px(x0),
                px(x0 - 8.0),
                px(fy + 4.0),
                tick_label(t)
            );
        }
        let _ = write!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle" font-size="14">{}{}</text>"#,
            px((x0 + x1) / 2.0),
            px(HEIGHT - 14.0),
            x_label,
            self.x.label_suffix()
        );
        let _ = write!(
            s,
            r#"<text x="18" y="{}" text-anchor="middle" font-size="14" transform="rotate(-90 18 {})">{}{}</text>"#,
            px((y0 + y1) / 2.0),
            px((y0 + y1) / 2.0),
            y_label,
            self.y.label_suffix()
        );
        let _ = write!(
            s,
            r#"<text x="{}" y="24" text-anchor="middle" font-size="16" font-weight="bold">{}</text>"#,
            px(WIDTH / 2.0),
            title
        );
        s
    }
}

fn series_path(frame: &Frame, points: &[(f64, f64)], color: &str) -> String {
    let mut d = String::new();
    for (i, &(x, y)) in points.iter().enumerate() {
        let (fx, fy) = frame.to_px(x, y);
        let _ = write!(d, "{}{} {}", if i == 0 { "M" } else { " L" }, px(fx), px(fy));
    }
    format!(
        r#"<path class="series" d="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
        d, color
    )
}

fn legend_svg(entries: &[(String, &str)]) -> String {
    let mut s = String::new();
    let x = WIDTH - MARGIN_RIGHT + 12.0;
    for (i, (label, color)) in entries.iter().enumerate() {
        let y = MARGIN_TOP + 14.0 + 18.0 * i as f64;
        let _ = write!(
            s,
            r#"<rect x="{}" y="{}" width="12" height="12" fill="{}"/><text x="{}" y="{}" font-size="12">{}</text>"#,
            px(x),
            px(y - 10.0),
            color,
            px(x + 16.0),
            px(y),
            label
        );
    }
    s
}

fn heat_color(t: f64) -> String {
    // dark blue (dip) to pale yellow (unity transmission)
    let t = t.clamp(0.0, 1.0);
    let lerp = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", lerp(13.0, 253.0), lerp(37.0, 231.0), lerp(110.0, 146.0))
}

fn render_line_groups(
    table: &Table,
    x_col: &str,
    y_col: &str,
    group_col: Option<&str>,
    title: &str,
) -> Result<String, String> {
    let xi = table
        .headers
        .iter()
        .position(|h| h == x_col)
        .ok_or_else(|| format!("missing column {x_col}"))?;
    let yi = table
        .headers
        .iter()
        .position(|h| h == y_col)
        .ok_or_else(|| format!("missing column {y_col}"))?;

    let mut groups: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    match group_col {
        Some(gc) => {
            let gi = table
                .headers
                .iter()
                .position(|h| h == gc)
                .ok_or_else(|| format!("missing column {gc}"))?;
            for row in &table.rows {
                let key = format!("{gc} = {}", row[gi]);
                match groups.iter_mut().find(|(k, _)| *k == key) {
                    Some((_, pts)) => pts.push((row[xi], row[yi])),
                    None => groups.push((key, vec![(row[xi], row[yi])])),
                }
            }
        }
        None => {
            groups.push((
                y_col.to_string(),
                table.rows.iter().map(|r| (r[xi], r[yi])).collect(),
            ));
        }
    }

    let frame = Frame {
        x: Axis::new(table.rows.iter().map(|r| r[xi])),
        y: Axis::new(table.rows.iter().map(|r| r[yi])),
    };
    let mut body = frame.axes_svg(x_col, y_col, title);
    let mut legend = Vec::new();
    for (i, (key, pts)) in groups.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        body.push_str(&series_path(&frame, pts, color));
        legend.push((key.clone(), color));
    }
    if groups.len() > 1 || group_col.is_some() {
        body.push_str(&legend_svg(&legend));
    }
    Ok(body)
}

fn render_lock(table: &Table) -> Result<String, String> {
    let step = table.column("step").ok_or("missing column step")?;
    let frame = Frame {
        x: Axis::new(step.iter().copied()),
        y: Axis::new(
            ["drift_phi0", "correction_phi0", "residual_phi0"]
                .iter()
                .filter_map(|c| table.column(c))
                .flatten(),
        ),
    };
    let mut body = frame.axes_svg("step", "flux (Phi0)", PlotKind::Lock.title());
    let mut legend = Vec::new();
    for (i, col) in ["drift_phi0", "correction_phi0", "residual_phi0"].iter().enumerate() {
        let ys = table.column(col).ok_or_else(|| format!("missing column {col}"))?;
        let pts: Vec<(f64, f64)> = step.iter().copied().zip(ys).collect();
        let color = COLORS[i % COLORS.len()];
        body.push_str(&series_path(&frame, &pts, color));
        legend.push((col.to_string(), color));
    }
    body.push_str(&legend_svg(&legend));
    Ok(body)
}

fn render_sweep(table: &Table) -> Result<String, String> {
    let phis = table.column("phi_over_pi").ok_or("missing column phi_over_pi")?;
    let freqs = table.column("freq_hz").ok_or("missing column freq_hz")?;
    let vals = table.column("s21_sq").ok_or("missing column s21_sq")?;

    let mut phi_axis: Vec<f64> = phis.clone();
    phi_axis.sort_by(|a, b| a.partial_cmp(b).unwrap());
    phi_axis.dedup();
    let mut freq_axis: Vec<f64> = freqs.clone();
    freq_axis.sort_by(|a, b| a.partial_cmp(b).unwrap());
    freq_axis.dedup();
    if phi_axis.len() < 2 || freq_axis.len() < 2 {
        return Err("sweep grid needs at least 2 x 2 cells".into());
    }

    let frame = Frame {
        x: Axis::new(phi_axis.iter().copied()),
        y: Axis::new(freq_axis.iter().copied()),
    };
    let (vmin, vmax) = vals
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = (vmax - vmin).max(f64::MIN_POSITIVE);

    let cell_w = (WIDTH - MARGIN_LEFT - MARGIN_RIGHT) / (phi_axis.len() - 1) as f64;
    let cell_h = (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM) / (freq_axis.len() - 1) as f64;

    let mut body = String::new();
    for ((&p, &f), &v) in phis.iter().zip(&freqs).zip(&vals) {
        let (fx, fy) = frame.to_px(p, f);
        let _ = write!(
            body,
            r#"<rect x="{}" y="{}" width="{}" height="{}" fill="{}"/>"#,
            px(fx - cell_w / 2.0),
            px(fy - cell_h / 2.0),
            px(cell_w),
            px(cell_h),
            heat_color((v - vmin) / span)
        );
    }
    body.push_str(&frame.axes_svg("phi_over_pi", "freq_hz", PlotKind::Sweep.title()));
    Ok(body)
}

/// Render a parsed table as a standalone SVG document.
pub fn render(kind: PlotKind, table: &Table) -> Result<String, String> {
    let body = match kind {
        PlotKind::Sweep => render_sweep(table)?,
        PlotKind::Tune => render_line_groups(
            table,
            "phi_over_pi",
            "omega_m_hz",
            Some("b_ip_T"),
            PlotKind::Tune.title(),
        )?,
        PlotKind::Spectrum => render_line_groups(
            table,
            "freq_hz",
            "psd_v2_per_hz",
            None,
            PlotKind::Spectrum.title(),
        )?,
        PlotKind::Lock => render_lock(table)?,
    };
    Ok(format!(
        concat!(
            r#"<svg version="1.1" width="{w}" height="{h}" xmlns="http://www.w3.org/2000/svg">"#,
            r#"<rect width="{w}" height="{h}" fill="white"/>{body}</svg>"#,
            "\n"
        ),
        w = WIDTH,
        h = HEIGHT,
        body = body
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::csvio::parse_table;

    #[test]
    fn tune_plot_has_one_path_per_series() {
        let csv = "phi_over_pi,b_ip_T,omega_m_hz\n\
                   -0.2,0.0062,5800100\n0.0,0.0062,5800200\n0.2,0.0062,5800100\n\
                   -0.2,0.035,5801000\n0.0,0.035,5802000\n0.2,0.035,5801000\n";
        let table = parse_table(csv).unwrap();
        let svg = render(PlotKind::Tune, &table).unwrap();
        assert_eq!(svg.matches(r#"class="series""#).count(), 2);
        assert!(svg.contains("omega_m_hz"));
    }

    #[test]
    fn identical_input_gives_identical_bytes() {
        let csv = "freq_hz,psd_v2_per_hz\n1,2\n2,5\n3,2\n";
        let table = parse_table(csv).unwrap();
        let a = render(PlotKind::Spectrum, &table).unwrap();
        let b = render(PlotKind::Spectrum, &table).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn kind_detection_from_headers() {
        let headers = |s: &str| s.split(',').map(str::to_string).collect::<Vec<_>>();
        assert_eq!(
            PlotKind::from_headers(&headers("phi_over_pi,freq_hz,s21_sq")),
            Some(PlotKind::Sweep)
        );
        assert_eq!(
            PlotKind::from_headers(&headers("phi_over_pi,b_ip_T,omega_m_hz")),
            Some(PlotKind::Tune)
        );
        assert_eq!(
            PlotKind::from_headers(&headers("freq_hz,psd_v2_per_hz")),
            Some(PlotKind::Spectrum)
        );
        assert_eq!(
            PlotKind::from_headers(&headers(
                "step,drift_phi0,correction_phi0,residual_phi0,error_signal"
            )),
            Some(PlotKind::Lock)
        );
        assert_eq!(PlotKind::from_headers(&headers("a,b")), None);
    }

    #[test]
    fn sweep_renders_heat_cells() {
        let csv = "phi_over_pi,freq_hz,s21_sq\n0,1e9,0.1\n0,2e9,0.9\n0.1,1e9,0.9\n0.1,2e9,0.1\n";
        let table = parse_table(csv).unwrap();
        let svg = render(PlotKind::Sweep, &table).unwrap();
        assert!(svg.matches("<rect").count() >= 4);
    }
}
