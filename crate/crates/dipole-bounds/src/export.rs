//! Plain-text serialization of curves, maps, and channel images.
//!
//! Every number is printed with the same fixed 12-significant-digit
//! scientific format, so identical runs serialize byte for byte.
//! Unbounded entries print as `inf`. Detector images go out as grayscale
//! PFM (header plus raw little-endian f32 rows, bottom row first); plots
//! are self-contained static SVG.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use crate::imaging::{Channel, ImageSet};
use crate::sweep::{BoundCurve, PolarMap};
use crate::Result;

/// Fixed numeric formatting: 12 significant digits, scientific.
fn number(value: f64) -> String {
    if value.is_nan() {
        "nan".into()
    } else if value.is_infinite() {
        if value < 0.0 { "-inf".into() } else { "inf".into() }
    } else {
        format!("{value:.11e}")
    }
}

/// Short labels for plot axes and legends.
fn short(value: f64) -> String {
    if value == 0.0 {
        "0".into()
    } else if (0.01..10000.0).contains(&value.abs()) {
        let s = format!("{value:.2}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{value:.1e}")
    }
}

/// CSV rows of a bound curve: separation, quantum limit, one classical
/// limit column per modality, one information column per channel.
pub fn bound_curve_csv(curve: &BoundCurve) -> String {
    let mut header = vec!["l_nm".to_string(), "qcrb_sigma_sqrtN_nm".to_string()];
    for m in &curve.modalities {
        header.push(format!("{}_crb_sigma_sqrtN_nm", m.label()));
    }
    for c in &Channel::ALL {
        header.push(format!("{}_fi_per_photon_nm2", c.label()));
    }
    let mut out = header.join(",");
    out.push('\n');
    for row in &curve.rows {
        let mut cells = vec![number(row.l_nm), number(row.sigma_qcrb_sqrt_n_nm)];
        cells.extend(row.sigma_crb_sqrt_n_nm.iter().map(|&v| number(v)));
        cells.extend(row.channel_fi_per_photon_nm2.iter().map(|&v| number(v)));
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// CSV rows of a ratio map: orientation, separation, quantum limit, one
/// ratio column per modality. Theta-major order.
pub fn polar_map_csv(map: &PolarMap) -> String {
    let mut header = vec![
        "theta_rad".to_string(),
        "phi_rad".to_string(),
        "l_nm".to_string(),
        "qcrb_sigma_sqrtN_nm".to_string(),
    ];
    for m in &map.modalities {
        header.push(format!("{}_crb_over_qcrb", m.label()));
    }
    let mut out = header.join(",");
    out.push('\n');
    for (i, &theta) in map.thetas.iter().enumerate() {
        for (j, &phi) in map.phis.iter().enumerate() {
            let mut cells = vec![
                number(theta),
                number(phi),
                number(map.l_nm),
                number(map.sigma_qcrb_sqrt_n_nm[(i, j)]),
            ];
            cells.extend(map.ratios.iter().map(|table| number(table[(i, j)])));
            out.push_str(&cells.join(","));
            out.push('\n');
        }
    }
    out
}

pub fn write_text(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents)?;
    Ok(())
}

/// Writes one grayscale image as PFM: `Pf`, dimensions, a negative scale
/// marking little-endian data, then rows bottom-to-top as raw f32. Row 0
/// of the array is the bottommost image row (most negative y), so array
/// order is already file order.
pub fn write_pfm(path: &Path, image: &Array2<f64>) -> Result<()> {
    let (rows, cols) = image.dim();
    let mut file = fs::File::create(path)?;
    write!(file, "Pf\n{cols} {rows}\n-1.0\n")?;
    let mut buf = Vec::with_capacity(rows * cols * 4);
    for row in image.rows() {
        for &v in row {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    file.write_all(&buf)?;
    Ok(())
}

/// Writes the probability image of each listed channel as
/// `{stem}_{channel}.pfm` inside `dir`, returning the paths written.
pub fn write_channel_images(
    dir: &Path,
    stem: &str,
    images: &ImageSet,
    channels: &[Channel],
) -> Result<Vec<PathBuf>> {
    let mut written = Vec::with_capacity(channels.len());
    for &channel in channels {
        let path = dir.join(format!("{stem}_{}.pfm", channel.label()));
        write_pfm(&path, &images.channel(channel).probability)?;
        written.push(path);
    }
    Ok(written)
}

/// Removes every tracked path on drop unless disarmed, so a failed
/// multi-file emission cannot leave a partial artifact set behind.
#[derive(Debug, Default)]
pub struct OutputGuard {
    paths: Vec<PathBuf>,
    disarmed: bool,
}

impl OutputGuard {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a path for removal if the guard drops while armed.
    pub fn track(&mut self, path: impl Into<PathBuf>) {
        self.paths.push(path.into());
    }

    /// Declares the emission complete; tracked files are kept.
    pub fn disarm(mut self) {
        self.disarmed = true;
    }
}

impl Drop for OutputGuard {
    fn drop(&mut self) {
        if !self.disarmed {
            for path in &self.paths {
                let _ = fs::remove_file(path);
            }
        }
    }
}

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
];

struct LogAxis {
    min: f64,
    max: f64,
    offset: f64,
    span: f64,
}

impl LogAxis {
    fn new(values: impl Iterator<Item = f64>, offset: f64, span: f64) -> Option<Self> {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for v in values {
            if v.is_finite() && v > 0.0 {
                min = min.min(v);
                max = max.max(v);
            }
        }
        if !min.is_finite() {
            return None;
        }
        if min == max {
            min *= 0.5;
            max *= 2.0;
        }
        Some(Self {
            min,
            max,
            offset,
            span,
        })
    }

    fn place(&self, v: f64) -> f64 {
        let t = (v / self.min).log10() / (self.max / self.min).log10();
        self.offset + t * self.span
    }

    fn decades(&self) -> Vec<f64> {
        let lo = self.min.log10().ceil() as i32;
        let hi = self.max.log10().floor() as i32;
        (lo..=hi).map(|d| 10f64.powi(d)).collect()
    }
}

/// Log-log plot of every bound in a curve: sigma sqrt(N) versus
/// separation, quantum limit in black, one color per modality. Rows with
/// unbounded entries break the polyline rather than bridging the gap.
pub fn bound_curve_svg(curve: &BoundCurve) -> String {
    let (width, height) = (820.0, 560.0);
    let (left, right, top, bottom) = (78.0, 210.0, 36.0, 64.0);
    let plot_w = width - left - right;
    let plot_h = height - top - bottom;

    let xs = LogAxis::new(curve.rows.iter().map(|r| r.l_nm), left, plot_w);
    let ys = LogAxis::new(
        curve.rows.iter().flat_map(|r| {
            std::iter::once(r.sigma_qcrb_sqrt_n_nm).chain(r.sigma_crb_sqrt_n_nm.iter().copied())
        }),
        0.0,
        plot_h,
    );
    let (Some(xs), Some(ys)) = (xs, ys) else {
        return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"820\" height=\"560\"><text x=\"20\" y=\"40\">no finite points to plot</text></svg>".into();
    };
    let sy = |v: f64| top + plot_h - (ys.place(v) - ys.offset);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\" font-family=\"sans-serif\" font-size=\"13\">"
    );
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    let _ = writeln!(
        svg,
        "<rect x=\"{left}\" y=\"{top}\" width=\"{plot_w}\" height=\"{plot_h}\" fill=\"none\" stroke=\"#444\"/>"
    );

    for d in xs.decades() {
        let x = xs.place(d);
        let _ = write!(
            svg,
            "<line x1=\"{x:.2}\" y1=\"{top}\" x2=\"{x:.2}\" y2=\"{:.2}\" stroke=\"#ddd\"/>\n<text x=\"{x:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>\n",
            top + plot_h,
            top + plot_h + 18.0,
            short(d)
        );
    }
    for d in ys.decades() {
        let y = sy(d);
        let _ = write!(
            svg,
            "<line x1=\"{left}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"#ddd\"/>\n<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>\n",
            left + plot_w,
            left - 8.0,
            y + 4.0,
            short(d)
        );
    }
    let _ = writeln!(
        svg,
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">separation l (nm)</text>",
        left + plot_w / 2.0,
        height - 18.0
    );
    let _ = writeln!(
        svg,
        "<text x=\"20\" y=\"{:.2}\" text-anchor=\"middle\" transform=\"rotate(-90 20 {:.2})\">sigma sqrt(N) (nm)</text>",
        top + plot_h / 2.0,
        top + plot_h / 2.0
    );

    let mut draw_series = |label: &str, color: &str, dash: &str, values: Vec<(f64, f64)>| {
        let mut runs: Vec<Vec<(f64, f64)>> = vec![Vec::new()];
        for (x, y) in values {
            if x.is_finite() && x > 0.0 && y.is_finite() && y > 0.0 {
                runs.last_mut().expect("nonempty").push((x, y));
            } else if !runs.last().expect("nonempty").is_empty() {
                runs.push(Vec::new());
            }
        }
        for run in runs.iter().filter(|r| !r.is_empty()) {
            let points: Vec<String> = run
                .iter()
                .map(|&(x, y)| format!("{:.2},{:.2}", xs.place(x), sy(y)))
                .collect();
            if run.len() == 1 {
                let _ = writeln!(
                    svg,
                    "<circle cx=\"{}\" r=\"3\" fill=\"{color}\"/>",
                    points[0].replace(',', "\" cy=\"")
                );
            } else {
                let _ = writeln!(
                    svg,
                    "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"{dash}/>",
                    points.join(" ")
                );
            }
        }
        let _ = label;
    };

    draw_series(
        "qcrb",
        "#000000",
        " stroke-dasharray=\"7 4\"",
        curve
            .rows
            .iter()
            .map(|r| (r.l_nm, r.sigma_qcrb_sqrt_n_nm))
            .collect(),
    );
    for (k, m) in curve.modalities.iter().enumerate() {
        draw_series(
            m.label(),
            PALETTE[k % PALETTE.len()],
            "",
            curve
                .rows
                .iter()
                .map(|r| (r.l_nm, r.sigma_crb_sqrt_n_nm[k]))
                .collect(),
        );
    }

    let legend_x = left + plot_w + 16.0;
    let mut legend_y = top + 10.0;
    let _ = writeln!(
        svg,
        "<line x1=\"{legend_x}\" y1=\"{legend_y}\" x2=\"{:.2}\" y2=\"{legend_y}\" stroke=\"#000\" stroke-width=\"2\" stroke-dasharray=\"7 4\"/><text x=\"{:.2}\" y=\"{:.2}\">qcrb</text>",
        legend_x + 26.0,
        legend_x + 32.0,
        legend_y + 4.0
    );
    for (k, m) in curve.modalities.iter().enumerate() {
        legend_y += 22.0;
        let _ = writeln!(
            svg,
            "<line x1=\"{legend_x}\" y1=\"{legend_y}\" x2=\"{:.2}\" y2=\"{legend_y}\" stroke=\"{}\" stroke-width=\"2\"/><text x=\"{:.2}\" y=\"{:.2}\">{}</text>",
            legend_x + 26.0,
            PALETTE[k % PALETTE.len()],
            legend_x + 32.0,
            legend_y + 4.0,
            m.label()
        );
    }
    let _ = writeln!(
        svg,
        "<text x=\"{left}\" y=\"22\">precision bounds, {}</text>",
        curve.emitter.label()
    );
    svg.push_str("</svg>\n");
    svg
}

fn viridis(t: f64) -> String {
    const STOPS: [(f64, f64, f64); 5] = [
        (0.267, 0.005, 0.329),
        (0.231, 0.322, 0.546),
        (0.129, 0.567, 0.551),
        (0.369, 0.788, 0.382),
        (0.993, 0.906, 0.144),
    ];
    let t = t.clamp(0.0, 1.0) * (STOPS.len() - 1) as f64;
    let i = (t.floor() as usize).min(STOPS.len() - 2);
    let f = t - i as f64;
    let mix = |a: f64, b: f64| ((a + (b - a) * f) * 255.0).round() as u8;
    format!(
        "#{:02x}{:02x}{:02x}",
        mix(STOPS[i].0, STOPS[i + 1].0),
        mix(STOPS[i].1, STOPS[i + 1].1),
        mix(STOPS[i].2, STOPS[i + 1].2)
    )
}

/// Polar heat map of one modality's ratio table: radius is theta, angle
/// is phi (quarter disk), color is sigma_CRB / sigma_QCRB on a log scale.
/// Cells without classical information are gray.
pub fn polar_map_svg(map: &PolarMap, modality_index: usize) -> String {
    let table = &map.ratios[modality_index];
    let (width, height) = (620.0, 560.0);
    let (cx, cy, radius) = (70.0, height - 70.0, 400.0);

    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &r in table {
        if r.is_finite() {
            lo = lo.min(r);
            hi = hi.max(r);
        }
    }
    if !lo.is_finite() {
        lo = 1.0;
        hi = 1.0;
    }
    if hi / lo < 1.0001 {
        hi = lo * 1.0001;
    }
    let scale = |r: f64| (r / lo).log10() / (hi / lo).log10();

    // Cell edges at midpoints of the sample lattice, closed at the ends.
    let edges = |centers: &[f64], end: f64| -> Vec<f64> {
        let mut e = vec![0.0];
        for w in centers.windows(2) {
            e.push(0.5 * (w[0] + w[1]));
        }
        e.push(end);
        e
    };
    let max_theta = *map.thetas.last().expect("nonempty");
    let max_phi = *map.phis.last().expect("nonempty");
    let r_edges = edges(&map.thetas, max_theta);
    let a_edges = edges(&map.phis, max_phi);
    let to_px = |r: f64, a: f64| -> (f64, f64) {
        let rr = radius * r / max_theta.max(1e-12);
        (cx + rr * a.cos(), cy - rr * a.sin())
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\" font-family=\"sans-serif\" font-size=\"13\">"
    );
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");

    for i in 0..map.thetas.len() {
        for j in 0..map.phis.len() {
            let ratio = table[(i, j)];
            let fill = if ratio.is_finite() {
                viridis(scale(ratio))
            } else {
                "#b0b0b0".into()
            };
            let (r0, r1) = (r_edges[i], r_edges[i + 1]);
            let (a0, a1) = (a_edges[j], a_edges[j + 1]);
            // Arcs drawn as short segments; no arc-flag bookkeeping.
            let segments = 8;
            let mut points = Vec::with_capacity(2 * segments + 2);
            for s in 0..=segments {
                let a = a0 + (a1 - a0) * s as f64 / segments as f64;
                points.push(to_px(r1, a));
            }
            for s in (0..=segments).rev() {
                let a = a0 + (a1 - a0) * s as f64 / segments as f64;
                points.push(to_px(r0, a));
            }
            let path: Vec<String> = points
                .iter()
                .map(|&(x, y)| format!("{x:.2},{y:.2}"))
                .collect();
            let _ = writeln!(
                svg,
                "<polygon points=\"{}\" fill=\"{fill}\" stroke=\"white\" stroke-width=\"0.6\"/>",
                path.join(" ")
            );
        }
    }

    let _ = writeln!(
        svg,
        "<text x=\"{cx}\" y=\"{:.2}\">theta: 0 center to pi/2 rim; phi: 0 right to pi/2 up</text>",
        cy + 40.0
    );
    let _ = writeln!(
        svg,
        "<text x=\"{cx}\" y=\"26\">{} sigma_CRB / sigma_QCRB at l = {} nm</text>",
        map.modalities[modality_index].label(),
        short(map.l_nm)
    );

    let bar_x = width - 90.0;
    let bar_top = 80.0;
    let bar_h = 320.0;
    let steps = 24;
    for s in 0..steps {
        let t = 1.0 - (s as f64 + 0.5) / steps as f64;
        let _ = writeln!(
            svg,
            "<rect x=\"{bar_x}\" y=\"{:.2}\" width=\"20\" height=\"{:.2}\" fill=\"{}\"/>",
            bar_top + bar_h * s as f64 / steps as f64,
            bar_h / steps as f64 + 0.5,
            viridis(t)
        );
    }
    let _ = write!(
        svg,
        "<text x=\"{:.2}\" y=\"{:.2}\">{}</text>\n<text x=\"{:.2}\" y=\"{:.2}\">{}</text>\n",
        bar_x + 26.0,
        bar_top + 10.0,
        short(hi),
        bar_x + 26.0,
        bar_top + bar_h,
        short(lo)
    );
    if table.iter().any(|r| !r.is_finite()) {
        let _ = writeln!(
            svg,
            "<rect x=\"{bar_x}\" y=\"{:.2}\" width=\"20\" height=\"14\" fill=\"#b0b0b0\"/><text x=\"{:.2}\" y=\"{:.2}\">no info</text>",
            bar_top + bar_h + 24.0,
            bar_x + 26.0,
            bar_top + bar_h + 36.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}
