//! Isotropic atmospheric point spread function (APSF).
//!
//! The angular spread of a point source after multiple scattering is the
//! Legendre series
//!
//! ```text
//! APSF(T, mu) = sum_{m >= 1} (g_m(T) + g_{m+1}(T)) L_m(mu)
//! g_m(T)      = exp(-beta_m T - alpha_m ln T)
//! alpha_m     = m + 1
//! beta_m      = ((2m + 1) / m) (1 - q^(m - 1))
//! ```
//!
//! with optical thickness `T` and forward-scattering parameter `q`. The
//! kernel maps normalized pixel radius `rho` in `[0, 1]` to the scattering
//! angle `rho * pi`, so `mu = cos(rho * pi)` and the kernel edge is pure
//! back-scatter.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::{Error, Kernel, Result};

/// Series terms are dropped once their largest magnitude over the grid falls
/// below this.
pub const TERM_TOLERANCE: f64 = 1e-6;
/// Hard cap on the Legendre degree.
pub const MAX_ORDER: usize = 100;
/// A series still carrying this fraction of its leading term at the cap is
/// treated as divergent (optical thickness too close to or below 1).
const DIVERGENCE_RATIO: f64 = 1e-3;
/// Profile resolution used when rasterizing kernels.
pub const PROFILE_SAMPLES: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApsfParams {
    /// Optical thickness `T`, in `(0, 4]`.
    pub optical_thickness: f64,
    /// Forward-scattering parameter `q`, in `(0, 1)`.
    pub forward_scatter: f64,
    /// Kernel side length in pixels; odd and at least 3.
    pub size: usize,
}

impl ApsfParams {
    pub fn new(optical_thickness: f64, forward_scatter: f64, size: usize) -> Result<Self> {
        let params = Self {
            optical_thickness,
            forward_scatter,
            size,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.optical_thickness;
        if !(t > 0.0 && t <= 4.0) {
            return Err(Error::invalid(
                "T",
                format!("optical thickness must lie in (0, 4], got {t}"),
            ));
        }
        let q = self.forward_scatter;
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::invalid(
                "q",
                format!("forward scattering must lie in (0, 1), got {q}"),
            ));
        }
        if self.size < 3 || self.size.is_multiple_of(2) {
            return Err(Error::invalid(
                "size",
                format!("kernel size must be odd and >= 3, got {}", self.size),
            ));
        }
        Ok(())
    }
}

/// Kernel size for an image: `floor(scalor * max(h, w))`, bumped to the next
/// odd number when even, and never below 3.
pub fn kernel_size_for(scalor: f64, width: usize, height: usize) -> usize {
    let s = (scalor * width.max(height) as f64).floor().max(0.0) as usize;
    let s = if s.is_multiple_of(2) { s + 1 } else { s };
    s.max(3)
}

/// Intensity sampled on a uniform grid of normalized radii `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialProfile {
    intensity: Vec<f64>,
    /// Number of series terms summed.
    pub terms: usize,
}

impl RadialProfile {
    pub fn len(&self) -> usize {
        self.intensity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intensity.is_empty()
    }

    pub fn radius(&self, i: usize) -> f64 {
        i as f64 / (self.intensity.len() - 1) as f64
    }

    pub fn intensities(&self) -> &[f64] {
        &self.intensity
    }

    /// `(radius_fraction, intensity)` pairs.
    pub fn samples(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.intensity.iter().enumerate().map(|(i, &v)| (self.radius(i), v))
    }

    /// Linear interpolation at `rho`, clamped to `[0, 1]`.
    pub fn at(&self, rho: f64) -> f64 {
        let last = self.intensity.len() - 1;
        let pos = rho.clamp(0.0, 1.0) * last as f64;
        let i = (pos.floor() as usize).min(last - 1);
        let f = pos - i as f64;
        self.intensity[i] * (1.0 - f) + self.intensity[i + 1] * f
    }
}

fn series_weight(m: usize, t: f64, q: f64) -> f64 {
    let m = m as f64;
    let alpha = m + 1.0;
    let beta = (2.0 * m + 1.0) / m * (1.0 - q.powf(m - 1.0));
    (-beta * t - alpha * t.ln()).exp()
}

/// Evaluates the truncated Legendre series on `n_samples` radii.
///
/// Negative partial sums (truncation ripple in the back-scatter tail) are
/// clamped to zero.
pub fn apsf_radial_profile(params: &ApsfParams, n_samples: usize) -> Result<RadialProfile> {
    params.validate()?;
    if n_samples < 2 {
        return Err(Error::invalid(
            "n_samples",
            format!("need at least 2 samples, got {n_samples}"),
        ));
    }
    let (t, q) = (params.optical_thickness, params.forward_scatter);
    let mu: Vec<f64> = (0..n_samples)
        .map(|i| (PI * i as f64 / (n_samples - 1) as f64).cos())
        .collect();

    // Legendre recurrence: (m + 1) L_{m+1} = (2m + 1) mu L_m - m L_{m-1}.
    let mut prev = vec![1.0; n_samples];
    let mut cur = mu.clone();
    let mut sum = vec![0.0; n_samples];
    let mut leading = None;
    let mut last_term = 0.0;
    let mut terms = 0;

    for m in 1..=MAX_ORDER {
        let coeff = series_weight(m, t, q) + series_weight(m + 1, t, q);
        if !coeff.is_finite() {
            return Err(Error::Domain(format!(
                "APSF series term {m} is non-finite for T={t}, q={q}"
            )));
        }
        let mut peak = 0.0f64;
        for (acc, &l) in sum.iter_mut().zip(&cur) {
            let term = coeff * l;
            *acc += term;
            peak = peak.max(term.abs());
        }
        terms = m;
        last_term = peak;
        let leading = *leading.get_or_insert(peak);
        if peak < TERM_TOLERANCE {
            break;
        }
        if m < MAX_ORDER {
            let mf = m as f64;
            let next: Vec<f64> = cur
                .iter()
                .zip(&prev)
                .zip(&mu)
                .map(|((&lm, &lp), &x)| ((2.0 * mf + 1.0) * x * lm - mf * lp) / (mf + 1.0))
                .collect();
            prev = std::mem::replace(&mut cur, next);
        } else if peak > DIVERGENCE_RATIO * leading {
            return Err(Error::Domain(format!(
                "APSF series does not converge for T={t}, q={q} (term {m} = {peak:e})"
            )));
        }
    }
    if sum.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("APSF profile is non-finite for T={t}, q={q}")));
    }
    log::trace!("APSF T={t} q={q}: {terms} terms, last {last_term:e}");

    for v in &mut sum {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    Ok(RadialProfile { intensity: sum, terms })
}

/// Rasterizes the radial profile into a unit-sum `size x size` kernel.
pub fn generate_apsf(params: &ApsfParams) -> Result<Kernel> {
    let profile = apsf_radial_profile(params, PROFILE_SAMPLES)?;
    kernel_from_profile(&profile, params.size)
}

/// Pixel `(dx, dy)` from center takes `profile(min(1, r / (size / 2)))`.
pub fn kernel_from_profile(profile: &RadialProfile, size: usize) -> Result<Kernel> {
    let c = (size / 2) as f64;
    let half = size as f64 / 2.0;
    let kernel = Kernel::from_fn(size, |x, y| {
        let (dx, dy) = (x as f64 - c, y as f64 - c);
        let rho = ((dx * dx + dy * dy).sqrt() / half).min(1.0);
        profile.at(rho)
    })?;
    kernel.normalized()
}
