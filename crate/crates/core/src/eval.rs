//! PSNR, noise-map statistics, the Net-1/2/3 ablation harness and the
//! static HTML report.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use imageproc::drawing::{draw_filled_rect_mut, draw_line_segment_mut};
use imageproc::rect::Rect;
use serde::{Deserialize, Serialize};

use crate::corpus::{create_dir, UnpairedCorpus};
use crate::error::{Error, Result};
use crate::models::Generator;
use crate::patch::{ImagePatch, NoiseMap, PEAK_8BIT};
use crate::pipeline::extract_noise_maps;
use crate::schedule::Variant;
use crate::training::{train, InputScaling, MetricsRow, TrainConfig, Work};

pub const HISTOGRAM_BINS: usize = 64;

/// `10 log10(peak^2 / MSE)`; `f64::INFINITY` for identical inputs.
pub fn psnr(a: &ImagePatch, b: &ImagePatch, peak: f64) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::shape(a.shape(), b.shape()));
    }
    let mse = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.data().len() as f64;
    Ok(if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    })
}

/// Mean per-patch PSNR over aligned collections.
pub fn mean_psnr(a: &[ImagePatch], b: &[ImagePatch], peak: f64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidShape(format!("{} vs {} patches", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(Error::Empty("PSNR inputs"));
    }
    let mut sum = 0.0;
    for (x, y) in a.iter().zip(b) {
        sum += psnr(x, y, peak)?;
    }
    Ok(sum / a.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    /// Fraction of values per bin; sums to 1.
    pub mass: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseStats {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    pub histogram: Histogram,
    /// Mean |Pearson correlation| between each map and its source's
    /// gradient magnitude; `None` without sources.
    pub edge_correlation: Option<f64>,
}

impl NoiseStats {
    /// Coarse normality check used for reporting only.
    pub fn looks_gaussian(&self) -> bool {
        self.skewness.abs() < 0.5 && self.excess_kurtosis.abs() < 1.0
    }
}

/// Gradient magnitude (central differences, clamped borders) of the
/// channel-averaged image.
pub fn edge_map(p: &ImagePatch) -> Vec<f64> {
    let (h, w, c) = p.shape();
    let lum: Vec<f64> = (0..h * w)
        .map(|i| (0..c).map(|ch| p.data()[ch * h * w + i]).sum::<f64>() / c as f64)
        .collect();
    let at = |y: usize, x: usize| lum[y * w + x];
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let gx = (at(y, (x + 1).min(w - 1)) - at(y, x.saturating_sub(1))) / 2.0;
            let gy = (at((y + 1).min(h - 1), x) - at(y.saturating_sub(1), x)) / 2.0;
            out.push((gx * gx + gy * gy).sqrt());
        }
    }
    out
}

/// Pearson correlation; 0 when either side is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

/// |Pearson| between the channel-averaged map and the source's edge map.
pub fn edge_correlation(map: &NoiseMap, source: &ImagePatch) -> Result<f64> {
    if map.shape() != source.shape() {
        return Err(Error::shape(source.shape(), map.shape()));
    }
    let (h, w, c) = map.shape();
    let m: Vec<f64> = (0..h * w)
        .map(|i| (0..c).map(|ch| map.data()[ch * h * w + i]).sum::<f64>() / c as f64)
        .collect();
    Ok(pearson(&m, &edge_map(source)).abs())
}

/// Pixel statistics over all maps. `sources` is empty or aligned with `maps`.
pub fn noise_stats(maps: &[NoiseMap], sources: &[ImagePatch]) -> Result<NoiseStats> {
    if maps.is_empty() {
        return Err(Error::Empty("noise maps"));
    }
    if !sources.is_empty() && sources.len() != maps.len() {
        return Err(Error::InvalidShape(format!(
            "{} maps but {} sources",
            maps.len(),
            sources.len()
        )));
    }
    let vals = || maps.iter().flat_map(|m| m.data().iter().copied());
    let count = vals().count();
    let n = count as f64;
    let mean = vals().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in vals() {
        let d = v - mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
        min = min.min(v);
        max = max.max(v);
    }
    let (m2, m3, m4) = (m2 / n, m3 / n, m4 / n);
    let std = m2.sqrt();
    let (skewness, excess_kurtosis) = if m2 > 0.0 {
        (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
    } else {
        (0.0, 0.0)
    };
    let mut mass = vec![0.0; HISTOGRAM_BINS];
    let span = max - min;
    for v in vals() {
        let bin = if span > 0.0 {
            (((v - min) / span) * HISTOGRAM_BINS as f64).floor() as usize
        } else {
            0
        };
        mass[bin.min(HISTOGRAM_BINS - 1)] += 1.0 / n;
    }
    let edge_correlation = if sources.is_empty() {
        None
    } else {
        let mut sum = 0.0;
        for (m, s) in maps.iter().zip(sources) {
            sum += edge_correlation(m, s)?;
        }
        Some(sum / maps.len() as f64)
    };
    Ok(NoiseStats {
        count,
        mean,
        std,
        min,
        max,
        skewness,
        excess_kurtosis,
        histogram: Histogram { lo: min, hi: max, mass },
        edge_correlation,
    })
}

/// Held-out evaluation data: noisy patches with their clean originals, and
/// clean patches for the clean-input response.
#[derive(Debug, Clone)]
pub struct HeldOut {
    pub noisy: Vec<ImagePatch>,
    pub truth: Vec<ImagePatch>,
    pub clean: Vec<ImagePatch>,
}

impl HeldOut {
    pub fn validate(&self) -> Result<()> {
        if self.noisy.is_empty() || self.clean.is_empty() {
            return Err(Error::Empty("held-out patches"));
        }
        if self.truth.len() != self.noisy.len() {
            return Err(Error::InvalidShape(format!(
                "{} held-out noisy patches but {} originals",
                self.noisy.len(),
                self.truth.len()
            )));
        }
        Ok(())
    }
}

/// How a generator behaves on held-out data. All values but the PSNR gain
/// are in normalized `[0, 1]` units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorEval {
    /// Statistics of `G(noisy)` (normalized units).
    pub stats: NoiseStats,
    /// `mean |G(J_c)|` over held-out clean patches.
    pub clean_response_mean_abs: f64,
    /// PSNR of `clip(noisy - G(noisy))` minus PSNR of `noisy`, against the
    /// originals.
    pub psnr_gain_db: f64,
}

pub fn evaluate_generator(g: &Generator<Work>, scaling: InputScaling, held: &HeldOut) -> Result<GeneratorEval> {
    held.validate()?;
    let maps = extract_noise_maps(g, scaling, &held.noisy)?;
    let normalized: Vec<NoiseMap> = maps.iter().map(|m| m.scaled(1.0 / PEAK_8BIT)).collect();
    let stats = noise_stats(&normalized, &held.truth)?;
    let clean_maps = extract_noise_maps(g, scaling, &held.clean)?;
    let total: f64 = clean_maps.iter().flat_map(|m| m.data()).map(|v| v.abs()).sum();
    let pixels: usize = clean_maps.iter().map(|m| m.data().len()).sum();
    let estimates: Vec<ImagePatch> = held
        .noisy
        .iter()
        .zip(&maps)
        .map(|(n, m)| Ok(n.sub_noise(m)?.clamp_storage()))
        .collect::<Result<_>>()?;
    let gain = mean_psnr(&estimates, &held.truth, PEAK_8BIT)? - mean_psnr(&held.noisy, &held.truth, PEAK_8BIT)?;
    Ok(GeneratorEval {
        stats,
        clean_response_mean_abs: total / pixels as f64 / PEAK_8BIT,
        psnr_gain_db: gain,
    })
}

#[derive(Debug, Clone)]
pub struct VariantResult {
    pub variant: Variant,
    pub eval: GeneratorEval,
    pub log: Vec<MetricsRow>,
    pub generator: Generator<Work>,
}

/// Trains every variant from the same seed and data order; only the loss
/// mask differs. With `out`, each run's checkpoints and metrics go to
/// `out/<variant>/`.
pub fn run_ablation(
    corpus: &UnpairedCorpus,
    base: &TrainConfig,
    variants: &[Variant],
    held: &HeldOut,
    out: Option<&Path>,
) -> Result<Vec<VariantResult>> {
    held.validate()?;
    variants
        .iter()
        .map(|&variant| {
            let config = TrainConfig {
                mask: variant.mask(),
                ..base.clone()
            };
            let dir = out.map(|o| o.join(variant.name()));
            let out = train(corpus, config, dir.as_deref())?;
            let eval = evaluate_generator(&out.model.generator, base.scaling, held)?;
            Ok(VariantResult {
                variant,
                eval,
                log: out.log,
                generator: out.model.generator,
            })
        })
        .collect()
}

/// One row of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub clean_response_mean_abs: f64,
    pub edge_correlation: Option<f64>,
    pub extracted_std: f64,
    pub psnr_gain_db: Option<f64>,
}

impl From<&GeneratorEval> for SummaryRow {
    fn from(e: &GeneratorEval) -> Self {
        Self {
            clean_response_mean_abs: e.clean_response_mean_abs,
            edge_correlation: e.stats.edge_correlation,
            extracted_std: e.stats.std,
            psnr_gain_db: Some(e.psnr_gain_db),
        }
    }
}

pub type Summary = BTreeMap<String, SummaryRow>;

/// One row of a noise-map grid: noisy input, extracted map, clean estimate.
#[derive(Debug, Clone)]
pub struct GridRow {
    pub noisy: ImagePatch,
    pub noise: NoiseMap,
    pub estimate: ImagePatch,
}

pub fn grid_rows(g: &Generator<Work>, scaling: InputScaling, noisy: &[ImagePatch]) -> Result<Vec<GridRow>> {
    let maps = extract_noise_maps(g, scaling, noisy)?;
    noisy
        .iter()
        .zip(maps)
        .map(|(n, m)| {
            Ok(GridRow {
                estimate: n.sub_noise(&m)?,
                noisy: n.clone(),
                noise: m,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Default)]
pub struct ReportInput {
    pub title: String,
    pub logs: Vec<(String, Vec<MetricsRow>)>,
    pub summary: Summary,
    pub grids: Vec<(String, Vec<GridRow>)>,
}

const CURVES: [(&str, [u8; 3]); 6] = [
    ("l_gan_d", [31, 119, 180]),
    ("l_gan_g", [255, 127, 14]),
    ("l_clean", [44, 160, 44]),
    ("l_pn", [214, 39, 40]),
    ("l_rec", [148, 103, 189]),
    ("total_g", [60, 60, 60]),
];

fn loss_plot(rows: &[MetricsRow]) -> RgbImage {
    let (w, h, m) = (720u32, 320u32, 24.0f32);
    let mut img = RgbImage::from_pixel(w, h, Rgb([255, 255, 255]));
    let (pw, ph) = (w as f32 - 2.0 * m, h as f32 - 2.0 * m);
    for k in 0..=4 {
        let y = m + ph * k as f32 / 4.0;
        draw_line_segment_mut(&mut img, (m, y), (m + pw, y), Rgb([225, 225, 225]));
    }
    let ymax = rows
        .iter()
        .flat_map(|r| r.losses.components().map(|(_, v)| v))
        .filter(|v| v.is_finite())
        .fold(0.0f64, f64::max)
        .max(1e-12);
    let n = rows.len().max(2) - 1;
    let px = |i: usize| m + pw * i as f32 / n as f32;
    let py = |v: f64| m + ph * (1.0 - (v / ymax) as f32);
    for i in 1..rows.len() {
        if rows[i].weights != rows[i - 1].weights {
            draw_line_segment_mut(&mut img, (px(i), m), (px(i), m + ph), Rgb([170, 170, 170]));
        }
    }
    for (k, (_, color)) in CURVES.iter().enumerate() {
        let val = |r: &MetricsRow| r.losses.components()[k].1;
        for i in 1..rows.len() {
            draw_line_segment_mut(
                &mut img,
                (px(i - 1), py(val(&rows[i - 1]))),
                (px(i), py(val(&rows[i]))),
                Rgb(*color),
            );
        }
    }
    img
}

fn to_rgb(v: f64) -> Rgb<u8> {
    let g = v.round().clamp(0.0, 255.0) as u8;
    Rgb([g, g, g])
}

fn blit(img: &mut RgbImage, x0: u32, y0: u32, p: &ImagePatch, f: impl Fn(f64) -> f64) {
    let (h, w, c) = p.shape();
    for y in 0..h {
        for x in 0..w {
            let px = if c == 3 {
                Rgb([0, 1, 2].map(|ch| f(p.get(ch, y, x)).round().clamp(0.0, 255.0) as u8))
            } else {
                to_rgb(f(p.get(0, y, x)))
            };
            img.put_pixel(x0 + x as u32, y0 + y as u32, px);
        }
    }
}

/// Rows of (noisy | noise shown as `128 + 2n` | clean estimate).
fn grid_image(rows: &[GridRow]) -> RgbImage {
    let (h, w, _) = rows[0].noisy.shape();
    let gap = 4u32;
    let (cw, ch) = (w as u32 + gap, h as u32 + gap);
    let mut img = RgbImage::from_pixel(3 * cw + gap, rows.len() as u32 * ch + gap, Rgb([255, 255, 255]));
    for (i, r) in rows.iter().enumerate() {
        let y0 = gap + i as u32 * ch;
        blit(&mut img, gap, y0, &r.noisy, |v| v);
        blit(&mut img, gap + cw, y0, &r.noise.as_patch(), |v| 128.0 + 2.0 * v);
        blit(&mut img, gap + 2 * cw, y0, &r.estimate, |v| v);
    }
    draw_filled_rect_mut(&mut img, Rect::at(0, 0).of_size(1, 1), Rgb([255, 255, 255]));
    img
}

fn save_png(img: &RgbImage, path: &Path) -> Result<()> {
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::Io {
            path: path.into(),
            source: std::io::Error::other(e.to_string()),
        })
}

fn slug(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x:.4}"),
        Some(x) => x.to_string(),
        None => "n/a".into(),
    }
}

/// Writes `index.html`, `summary.json`, one loss-curve PNG per log and one
/// grid PNG per variant into `dir`. Returns the HTML path.
pub fn report(input: &ReportInput, dir: &Path) -> Result<PathBuf> {
    create_dir(dir)?;
    let summary_path = dir.join("summary.json");
    let text = serde_json::to_string_pretty(&input.summary).map_err(|e| Error::Json {
        path: summary_path.clone(),
        source: e,
    })?;
    fs::write(&summary_path, text + "\n").map_err(|e| Error::io(&summary_path, e))?;

    let mut html = String::new();
    let title = if input.title.is_empty() {
        "SCGAN report"
    } else {
        &input.title
    };
    let _ = write!(
        html,
        "<!doctype html>\n<html><head><meta charset=\"utf-8\"><title>{title}</title>\n\
         <style>body{{font-family:sans-serif;max-width:60em;margin:2em auto}}\
         table{{border-collapse:collapse}}td,th{{border:1px solid #ccc;padding:.3em .6em}}\
         .sw{{display:inline-block;width:1em;height:.6em;margin:0 .3em}}</style></head><body>\n<h1>{title}</h1>\n"
    );

    html.push_str("<h2>Summary</h2>\n");
    if input.summary.is_empty() {
        html.push_str("<p class=\"nodata\">No data.</p>\n");
    } else {
        html.push_str(
            "<table><tr><th>run</th><th>mean |G(J_c)|</th><th>edge correlation</th><th>extracted std</th><th>PSNR gain (dB)</th></tr>\n",
        );
        for (name, r) in &input.summary {
            let _ = writeln!(
                html,
                "<tr><td>{name}</td><td>{:.5}</td><td>{}</td><td>{:.5}</td><td>{}</td></tr>",
                r.clean_response_mean_abs,
                fmt_opt(r.edge_correlation),
                r.extracted_std,
                fmt_opt(r.psnr_gain_db)
            );
        }
        html.push_str("</table>\n");
    }

    html.push_str("<h2>Loss curves</h2>\n");
    let logs: Vec<_> = input.logs.iter().filter(|(_, rows)| !rows.is_empty()).collect();
    if logs.is_empty() {
        html.push_str("<p class=\"nodata\">No data.</p>\n");
    } else {
        html.push_str("<p>");
        for (name, c) in CURVES {
            let _ = write!(
                html,
                "<span class=\"sw\" style=\"background:rgb({},{},{})\"></span>{name} ",
                c[0], c[1], c[2]
            );
        }
        html.push_str("&mdash; grey verticals mark weight changes.</p>\n");
        for (name, rows) in logs {
            let file = format!("loss_{}.png", slug(name));
            save_png(&loss_plot(rows), &dir.join(&file))?;
            let _ = writeln!(
                html,
                "<h3>{name}</h3><img src=\"{file}\" alt=\"loss curves for {name}\">"
            );
        }
    }

    html.push_str("<h2>Noise maps</h2>\n");
    let grids: Vec<_> = input.grids.iter().filter(|(_, rows)| !rows.is_empty()).collect();
    if grids.is_empty() {
        html.push_str("<p class=\"nodata\">No data.</p>\n");
    } else {
        html.push_str("<p>Columns: noisy input, extracted noise (128 + 2n), clean estimate.</p>\n");
        for (name, rows) in grids {
            let file = format!("grid_{}.png", slug(name));
            save_png(&grid_image(rows), &dir.join(&file))?;
            let _ = writeln!(
                html,
                "<h3>{name}</h3><img src=\"{file}\" alt=\"noise maps for {name}\">"
            );
        }
    }
    html.push_str("</body></html>\n");
    let index = dir.join("index.html");
    fs::write(&index, html).map_err(|e| Error::io(&index, e))?;
    Ok(index)
}
