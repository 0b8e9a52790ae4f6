//! Anisotropic light spread function (ALSF): an APSF kernel warped by a
//! beam-shaped radial displacement field.
//!
//! For a kernel pixel at offset `(dx, dy)` from center, with polar angle
//! `theta` (image-up is 90 degrees) and radius `r`:
//!
//! ```text
//! G_i   = A_i exp(-delta_i^2 / sigma_i^2)      delta_i = angular distance to beam i
//! Phi   = sum_i G_i
//! D     = exp(-kappa r / (w / 2))
//! S'    = (1 + Phi) D,   r' = r / S',   dr = r' - r
//! (Dx, Dy) = (dr cos theta, -dr sin theta)
//! ALSF(u, v) = APSF(u + Dx, v + Dy) / det_J(u, v)
//! ```
//!
//! Each output pixel pulls its value from the displaced source position and
//! `det_J` is the determinant of that map `(u, v) -> (u + Dx, v + Dy)`.
//! Where a beam stretches the kernel the determinant is below one, so the
//! tail is brightened and the kernel's mass leans toward the beam. The
//! division does not conserve mass on its own; [`warp_apsf`] renormalizes by
//! default.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::apsf::{generate_apsf, kernel_size_for, ApsfParams};
use crate::imagecore::sample_bilinear;
use crate::rng::Uniform;
use crate::{Error, Kernel, Result};

/// Lower clamp for Jacobian determinants (fold-over guard).
pub const DET_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamSpec {
    /// Direction in degrees, `[0, 360)`, counter-clockwise from +x with
    /// image-up at 90.
    pub alpha: f64,
    /// Angular spread in degrees, `> 0`.
    pub sigma: f64,
    /// Beam intensity `A >= 0`.
    pub amplitude: f64,
}

impl BeamSpec {
    pub fn new(alpha: f64, sigma: f64, amplitude: f64) -> Result<Self> {
        let beam = Self {
            alpha: normalize_degrees(alpha),
            sigma,
            amplitude,
        };
        beam.validate()?;
        Ok(beam)
    }

    fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && (0.0..360.0).contains(&self.alpha)) {
            return Err(Error::invalid(
                "alpha",
                format!("expected [0, 360), got {}", self.alpha),
            ));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid(
                "sigma",
                format!("spread must be positive, got {}", self.sigma),
            ));
        }
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            return Err(Error::invalid(
                "A",
                format!("amplitude must be >= 0, got {}", self.amplitude),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlsfParams {
    pub beams: Vec<BeamSpec>,
    /// Global decay factor `kappa >= 0`.
    pub kappa: f64,
    pub base: ApsfParams,
}

impl AlsfParams {
    pub fn validate(&self) -> Result<()> {
        if self.beams.is_empty() {
            return Err(Error::invalid("beams", "at least one beam is required"));
        }
        for beam in &self.beams {
            beam.validate()?;
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(Error::invalid(
                "kappa",
                format!("decay must be >= 0, got {}", self.kappa),
            ));
        }
        self.base.validate()
    }
}

fn normalize_degrees(deg: f64) -> f64 {
    let d = deg.rem_euclid(360.0);
    if d >= 360.0 {
        0.0
    } else {
        d
    }
}

/// `atan2(-dy, dx)` in degrees, normalized to `[0, 360)`. Rows grow
/// downward, so `(0, -1)` (one row up) is 90.
pub fn polar_angle(dx: f64, dy: f64) -> f64 {
    normalize_degrees((-dy).atan2(dx).to_degrees())
}

/// Shortest angular distance, in `[0, 180]`.
pub fn angular_deviation(theta: f64, alpha: f64) -> f64 {
    let d = (theta - alpha).abs();
    d.min(360.0 - d)
}

pub fn beam_weight(delta: f64, beam: &BeamSpec) -> f64 {
    beam.amplitude * (-(delta * delta) / (beam.sigma * beam.sigma)).exp()
}

/// `exp(-kappa * r / (w / 2))` for kernel width `w`.
pub fn decay_term(r: f64, kappa: f64, w: f64) -> f64 {
    (-kappa * r / (w / 2.0)).exp()
}

/// Per-pixel offsets `(dx, dy)` plus the Jacobian determinant of the
/// deformation, on a `size x size` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementField {
    size: usize,
    dx: Vec<f64>,
    dy: Vec<f64>,
    det_j: Vec<f64>,
}

impl DisplacementField {
    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn displacement(&self, x: usize, y: usize) -> (f64, f64) {
        let i = y * self.size + x;
        (self.dx[i], self.dy[i])
    }

    #[inline]
    pub fn det_j(&self, x: usize, y: usize) -> f64 {
        self.det_j[y * self.size + x]
    }

    pub fn dx(&self) -> &[f64] {
        &self.dx
    }

    pub fn dy(&self) -> &[f64] {
        &self.dy
    }

    pub fn det_j_map(&self) -> &[f64] {
        &self.det_j
    }

    pub fn is_identity(&self) -> bool {
        self.dx.iter().chain(&self.dy).all(|&d| d == 0.0) && self.det_j.iter().all(|&d| d == 1.0)
    }

    /// Rows of `(x, y, dx, dy)` with `x`, `y` as offsets from the center.
    pub fn quiver(&self) -> impl Iterator<Item = (i64, i64, f64, f64)> + '_ {
        let c = (self.size / 2) as i64;
        (0..self.size).flat_map(move |y| {
            (0..self.size).map(move |x| {
                let (dx, dy) = self.displacement(x, y);
                (x as i64 - c, y as i64 - c, dx, dy)
            })
        })
    }
}

/// Builds the radial displacement field for `params` on a `size x size`
/// grid. The center pixel is never displaced.
pub fn build_displacement_field(params: &AlsfParams, size: usize) -> Result<DisplacementField> {
    params.validate()?;
    if size.is_multiple_of(2) {
        return Err(Error::invalid("size", format!("field size must be odd, got {size}")));
    }
    let c = (size / 2) as f64;
    let w = size as f64;
    let mut dx = vec![0.0; size * size];
    let mut dy = vec![0.0; size * size];

    for y in 0..size {
        for x in 0..size {
            let (ox, oy) = (x as f64 - c, y as f64 - c);
            if ox == 0.0 && oy == 0.0 {
                continue;
            }
            let theta = polar_angle(ox, oy);
            let phi: f64 = params
                .beams
                .iter()
                .map(|beam| beam_weight(angular_deviation(theta, beam.alpha), beam))
                .sum();
            let r = (ox * ox + oy * oy).sqrt();
            let scale = (1.0 + phi) * decay_term(r, params.kappa, w);
            if !(scale > 0.0 && scale.is_finite()) {
                return Err(Error::Domain(format!(
                    "warp scale {scale} at offset ({ox}, {oy}) is not positive"
                )));
            }
            let dr = r / scale - r;
            let theta_rad = theta.to_radians();
            dx[y * size + x] = dr * theta_rad.cos();
            dy[y * size + x] = -dr * theta_rad.sin();
        }
    }

    let det_j = jacobian(size, &dx, &dy);
    Ok(DisplacementField { size, dx, dy, det_j })
}

/// `det(d(u + dx, v + dy) / d(u, v))` by central differences (one-sided at
/// the border), clamped to `DET_EPSILON`.
fn jacobian(size: usize, dx: &[f64], dy: &[f64]) -> Vec<f64> {
    let at = |x: usize, y: usize| -> (f64, f64) {
        let i = y * size + x;
        (x as f64 + dx[i], y as f64 + dy[i])
    };
    // Derivative of the pull map along one axis at index `i` of `n`.
    let diff = |i: usize, n: usize, f: &dyn Fn(usize) -> (f64, f64)| -> (f64, f64) {
        let (lo, hi) = (i.saturating_sub(1), (i + 1).min(n - 1));
        let (a, b) = (f(lo), f(hi));
        let h = (hi - lo) as f64;
        ((b.0 - a.0) / h, (b.1 - a.1) / h)
    };

    let mut det = vec![1.0; size * size];
    if size == 1 {
        return det;
    }
    for y in 0..size {
        for x in 0..size {
            let (ux_x, uy_x) = diff(x, size, &|i| at(i, y));
            let (ux_y, uy_y) = diff(y, size, &|j| at(x, j));
            det[y * size + x] = (ux_x * uy_y - ux_y * uy_x).max(DET_EPSILON);
        }
    }
    det
}

/// Resamples `apsf` through `field` and compensates by `det_J`. With
/// `renormalize` the result is rescaled to unit sum. An identity field
/// returns the input unchanged.
pub fn warp_apsf(apsf: &Kernel, field: &DisplacementField, renormalize: bool) -> Result<Kernel> {
    if apsf.size() != field.size() {
        return Err(Error::DimensionMismatch(format!(
            "kernel is {0}x{0} but field is {1}x{1}",
            apsf.size(),
            field.size()
        )));
    }
    if field.is_identity() {
        return Ok(apsf.clone());
    }
    let mut kernel = Kernel::from_fn(apsf.size(), |x, y| {
        let (dx, dy) = field.displacement(x, y);
        sample_bilinear(apsf, x as f64 + dx, y as f64 + dy) / field.det_j(x, y)
    })?;
    if renormalize {
        kernel.normalize()?;
    }
    Ok(kernel)
}

/// Builds the APSF for `params.base`, warps it and returns the ALSF.
pub fn build_alsf(params: &AlsfParams, renormalize: bool) -> Result<Kernel> {
    let apsf = generate_apsf(&params.base)?;
    let field = build_displacement_field(params, params.base.size)?;
    warp_apsf(&apsf, &field, renormalize)
}

/// The three preset kernel families, indexed 0, 1, 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    Upward,
    Downward,
    Asymmetric,
}

impl KernelFamily {
    pub const ALL: [KernelFamily; 3] = [KernelFamily::Upward, KernelFamily::Downward, KernelFamily::Asymmetric];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::Upward => "upward",
            KernelFamily::Downward => "downward",
            KernelFamily::Asymmetric => "asymmetric",
        }
    }
}

impl std::str::FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::invalid("family", format!("unknown kernel family `{s}`")))
    }
}

/// Sampling distributions for preset kernels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PresetRanges {
    pub optical_thickness: Uniform,
    pub forward_scatter: Uniform,
    pub scalor: Uniform,
    pub spread: Uniform,
    pub decay: Uniform,
    pub amplitude: f64,
    pub upward_alpha: Uniform,
    pub downward_alpha: Uniform,
    pub asymmetric_alpha: Uniform,
    /// Inclusive beam-count bounds for the asymmetric family.
    pub asymmetric_beams: [usize; 2],
}

impl Default for PresetRanges {
    fn default() -> Self {
        Self {
            optical_thickness: Uniform::fixed(1.1, 1.8),
            forward_scatter: Uniform::fixed(0.2, 0.7),
            scalor: Uniform::fixed(0.75, 1.5),
            spread: Uniform::fixed(15.0, 60.0),
            decay: Uniform::fixed(0.5, 1.0),
            amplitude: 2.0,
            upward_alpha: Uniform::fixed(75.0, 105.0),
            downward_alpha: Uniform::fixed(255.0, 285.0),
            asymmetric_alpha: Uniform::fixed(0.0, 360.0),
            asymmetric_beams: [2, 4],
        }
    }
}

impl PresetRanges {
    /// Wide, large-kernel upward glow used for skyline sky glow.
    pub fn sky_glow() -> Self {
        Self {
            spread: Uniform::fixed(30.0, 60.0),
            scalor: Uniform::fixed(1.0, 1.5),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.asymmetric_beams;
        if lo == 0 || lo > hi {
            return Err(Error::invalid(
                "asymmetric_beams",
                format!("expected 1 <= lo <= hi, got [{lo}, {hi}]"),
            ));
        }
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            return Err(Error::invalid(
                "amplitude",
                format!("must be >= 0, got {}", self.amplitude),
            ));
        }
        if self.scalor.lo() <= 0.0 {
            return Err(Error::invalid("scalor", "lower bound must be positive"));
        }
        if self.spread.lo() <= 0.0 {
            return Err(Error::invalid("spread", "lower bound must be positive"));
        }
        if self.decay.lo() < 0.0 {
            return Err(Error::invalid("decay", "lower bound must be >= 0"));
        }
        let t = self.optical_thickness;
        if !(t.lo() > 0.0 && t.hi() <= 4.0) {
            return Err(Error::invalid("optical_thickness", "must lie in (0, 4]"));
        }
        let q = self.forward_scatter;
        if !(q.lo() > 0.0 && q.hi() < 1.0) {
            return Err(Error::invalid("forward_scatter", "must lie in (0, 1)"));
        }
        Ok(())
    }

    /// Draws the APSF base parameters for an image of the given size:
    /// `T`, `q`, then `scalor`.
    pub fn sample_apsf<R: Rng + ?Sized>(&self, rng: &mut R, width: usize, height: usize) -> ApsfParams {
        let optical_thickness = self.optical_thickness.sample(rng);
        let forward_scatter = self.forward_scatter.sample(rng);
        let scalor = self.scalor.sample(rng);
        ApsfParams {
            optical_thickness,
            forward_scatter,
            size: kernel_size_for(scalor, width, height),
        }
    }

    /// Draws a full parameter set for `family`. Draw order: APSF base,
    /// `kappa`, beam count (asymmetric only), then `alpha`, `sigma` per beam.
    pub fn sample_family<R: Rng + ?Sized>(
        &self,
        family: KernelFamily,
        rng: &mut R,
        width: usize,
        height: usize,
    ) -> AlsfParams {
        let base = self.sample_apsf(rng, width, height);
        let kappa = self.decay.sample(rng);
        let (count, alpha) = match family {
            KernelFamily::Upward => (1, self.upward_alpha),
            KernelFamily::Downward => (1, self.downward_alpha),
            KernelFamily::Asymmetric => {
                let [lo, hi] = self.asymmetric_beams;
                (rng.gen_range(lo..=hi), self.asymmetric_alpha)
            }
        };
        let beams = (0..count)
            .map(|_| {
                let a = alpha.sample(rng);
                let sigma = self.spread.sample(rng);
                BeamSpec {
                    alpha: normalize_degrees(a),
                    sigma,
                    amplitude: self.amplitude,
                }
            })
            .collect();
        AlsfParams { beams, kappa, base }
    }
}

/// Samples `family` parameters with the default ranges for a
/// `width x height` image and builds the renormalized kernel.
pub fn preset_kernel<R: Rng + ?Sized>(
    family: KernelFamily,
    rng: &mut R,
    width: usize,
    height: usize,
) -> Result<(Kernel, AlsfParams)> {
    let params = PresetRanges::default().sample_family(family, rng, width, height);
    let kernel = build_alsf(&params, true)?;
    Ok((kernel, params))
}
