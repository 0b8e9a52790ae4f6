//! Full-reference quality metrics.
//!
//! PSNR uses peak 1.0 and averages the squared error over every pixel and
//! channel. SSIM is the single-scale reference configuration on luminance:
//! 11x11 Gaussian window with sigma 1.5, `K1 = 0.01`, `K2 = 0.03`, dynamic
//! range 1.0, averaged over the positions where the window fits.

use serde::{Deserialize, Serialize, Serializer};

use crate::{Error, Image, Result};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

fn check_dims(a: &Image, b: &Image) -> Result<()> {
    if a.same_dims(b) && a.channels() == b.channels() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!(
            "{}x{}x{} vs {}x{}x{}",
            a.width(),
            a.height(),
            a.channels(),
            b.width(),
            b.height(),
            b.channels()
        )))
    }
}

/// Mean squared error with compensated summation.
pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    check_dims(a, b)?;
    let n = a.data().len();
    if n == 0 {
        return Ok(0.0);
    }
    // Neumaier summation keeps sums of many equal terms exact to the last bit
    // or two.
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for (x, y) in a.data().iter().zip(b.data()) {
        let d = x - y;
        let term = d * d;
        let t = sum + term;
        if sum.abs() >= term.abs() {
            comp += (sum - t) + term;
        } else {
            comp += (term - t) + sum;
        }
        sum = t;
    }
    Ok((sum + comp) / n as f64)
}

/// PSNR in dB for peak 1.0; identical images give `f64::INFINITY`.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    let mse = mse(a, b)?;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(-10.0 * mse.log10())
}

fn gaussian_window() -> Vec<f64> {
    let c = (SSIM_WINDOW / 2) as f64;
    let raw: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| {
            let d = i as f64 - c;
            (-(d * d) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Separable "valid" filtering: output is `(w - n + 1) x (h - n + 1)`.
fn filter_valid(src: &[f64], w: usize, h: usize, taps: &[f64]) -> Vec<f64> {
    let n = taps.len();
    let (ow, oh) = (w - n + 1, h - n + 1);
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        let line = &src[y * w..(y + 1) * w];
        for x in 0..ow {
            rows[y * ow + x] = taps.iter().zip(&line[x..x + n]).map(|(t, v)| t * v).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = taps.iter().enumerate().map(|(k, t)| t * rows[(y + k) * ow + x]).sum();
        }
    }
    out
}

/// Mean SSIM over luminance.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    check_dims(a, b)?;
    let (w, h) = (a.width(), a.height());
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::ImageTooSmall {
            width: w,
            height: h,
            window: SSIM_WINDOW,
        });
    }
    let (la, lb) = (a.luminance(), b.luminance());
    let taps = gaussian_window();
    let product = |p: &[f64], q: &[f64]| -> Vec<f64> { p.iter().zip(q).map(|(x, y)| x * y).collect() };

    let mu_a = filter_valid(&la, w, h, &taps);
    let mu_b = filter_valid(&lb, w, h, &taps);
    let aa = filter_valid(&product(&la, &la), w, h, &taps);
    let bb = filter_valid(&product(&lb, &lb), w, h, &taps);
    let ab = filter_valid(&product(&la, &lb), w, h, &taps);

    let c1 = K1 * K1;
    let c2 = K2 * K2;
    let n = mu_a.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let var_a = aa[i] - ma * ma;
            let var_b = bb[i] - mb * mb;
            let cov = ab[i] - ma * mb;
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2))
        })
        .sum();
    Ok(total / n as f64)
}

/// Writes `+inf` as the string `"inf"`, other values as numbers.
fn serialize_db<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() && *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

fn deserialize_db<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Db {
        Num(f64),
        Text(String),
    }
    match Db::deserialize(d)? {
        Db::Num(v) => Ok(v),
        Db::Text(t) if t == "inf" => Ok(f64::INFINITY),
        Db::Text(t) => Err(serde::de::Error::custom(format!("invalid dB value `{t}`"))),
    }
}

/// Formats a PSNR value for CSV output.
pub fn format_db(v: f64) -> String {
    if v.is_infinite() && v > 0.0 {
        "inf".to_owned()
    } else {
        format!("{v}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairMetric {
    pub path_a: String,
    pub path_b: String,
    #[serde(serialize_with = "serialize_db", deserialize_with = "deserialize_db")]
    pub psnr_db: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairFailure {
    pub row: usize,
    pub path_a: String,
    pub path_b: String,
    pub error: String,
}

/// Per-pair scores plus means in input order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub pairs: Vec<PairMetric>,
    pub failures: Vec<PairFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub count: usize,
    pub failed: usize,
    /// `None` for an empty report; `"inf"` when any pair is identical.
    #[serde(serialize_with = "serialize_opt_db", deserialize_with = "deserialize_opt_db")]
    pub mean_psnr_db: Option<f64>,
    pub mean_ssim: Option<f64>,
}

fn serialize_opt_db<S: Serializer>(v: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(v) => serialize_db(v, s),
        None => s.serialize_none(),
    }
}

fn deserialize_opt_db<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Option<f64>, D::Error> {
    #[derive(Deserialize)]
    struct Wrap(#[serde(deserialize_with = "deserialize_db")] f64);
    Ok(Option::<Wrap>::deserialize(d)?.map(|w| w.0))
}

impl MetricReport {
    pub fn summary(&self) -> MetricSummary {
        let n = self.pairs.len();
        let mean = |f: fn(&PairMetric) -> f64| -> Option<f64> {
            (n > 0).then(|| self.pairs.iter().map(f).sum::<f64>() / n as f64)
        };
        MetricSummary {
            count: n,
            failed: self.failures.len(),
            mean_psnr_db: mean(|p| p.psnr_db),
            mean_ssim: mean(|p| p.ssim),
        }
    }
}
