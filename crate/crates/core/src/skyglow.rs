//! Skyline-induced sky glow: hidden area lights just below the skyline,
//! spread upward by a wide ALSF kernel (see
//! [`PresetRanges::sky_glow`](crate::alsf::PresetRanges::sky_glow)).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::imagecore::{fft_convolve, hsv_to_rgb};
use crate::rng::Uniform;
use crate::{BinaryMask, Error, Image, Kernel, Result};

/// Base hues in degrees: sodium orange, warm amber, cool white-blue,
/// magenta neon, green neon.
pub const PALETTE_HUES: [f64; 5] = [30.0, 45.0, 200.0, 300.0, 120.0];

/// Lowest sky row per column; `None` where the column has no sky.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkylineProfile {
    pub rows: Vec<Option<usize>>,
}

impl SkylineProfile {
    pub fn has_sky(&self) -> bool {
        self.rows.iter().any(Option::is_some)
    }
}

/// For each column, the largest row index marked as sky.
pub fn extract_skyline(sky_mask: &BinaryMask) -> SkylineProfile {
    let rows = (0..sky_mask.width())
        .map(|x| (0..sky_mask.height()).rev().find(|&y| sky_mask.get(x, y)))
        .collect();
    SkylineProfile { rows }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LightShape {
    Ellipse,
    Rectangle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HiddenLight {
    pub shape: LightShape,
    /// `[x, y]` in pixels.
    pub center: [f64; 2],
    /// `[half_width, half_height]` in pixels.
    pub half_extents: [f64; 2],
    pub color: [f64; 3],
    pub intensity: f64,
}

impl HiddenLight {
    pub fn covers(&self, x: usize, y: usize) -> bool {
        let (dx, dy) = (x as f64 - self.center[0], y as f64 - self.center[1]);
        let [hw, hh] = self.half_extents;
        match self.shape {
            LightShape::Rectangle => dx.abs() <= hw && dy.abs() <= hh,
            LightShape::Ellipse => (dx / hw).powi(2) + (dy / hh).powi(2) <= 1.0,
        }
    }

    /// Covered pixels inside a `width x height` frame, row-major.
    pub fn footprint(&self, width: usize, height: usize) -> Vec<(usize, usize)> {
        let [cx, cy] = self.center;
        let [hw, hh] = self.half_extents;
        let span = |c: f64, h: f64, n: usize| -> Option<(usize, usize)> {
            let lo = (c - h).ceil().max(0.0);
            let hi = (c + h).floor().min(n as f64 - 1.0);
            (lo <= hi).then_some((lo as usize, hi as usize))
        };
        let (Some((x0, x1)), Some((y0, y1))) = (span(cx, hw, width), span(cy, hh, height)) else {
            return Vec::new();
        };
        (y0..=y1)
            .flat_map(|y| (x0..=x1).map(move |x| (x, y)))
            .filter(|&(x, y)| self.covers(x, y))
            .collect()
    }
}

/// Placement and color distributions for hidden lights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlacementConfig {
    /// Inclusive bounds on the number of lights.
    pub light_count: [usize; 2],
    /// Half-width as a fraction of image width.
    pub half_width: Uniform,
    /// Half-height as a fraction of image height.
    pub half_height: Uniform,
    pub intensity: Uniform,
    /// Largest gap in pixels between the skyline and a light's top edge.
    pub max_offset: usize,
    pub max_attempts: usize,
    pub saturation: Uniform,
    /// Multiplicative hue jitter around each palette hue.
    pub hue_jitter: Uniform,
}

impl Default for PlacementConfig {
    fn default() -> Self {
        Self {
            light_count: [1, 4],
            half_width: Uniform::fixed(0.05, 0.25),
            half_height: Uniform::fixed(0.01, 0.05),
            intensity: Uniform::fixed(0.3, 1.0),
            max_offset: 15,
            max_attempts: 64,
            saturation: Uniform::fixed(0.7, 1.0),
            hue_jitter: Uniform::fixed(0.8, 1.2),
        }
    }
}

impl PlacementConfig {
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.light_count;
        if lo > hi {
            return Err(Error::invalid(
                "light_count",
                format!("expected lo <= hi, got [{lo}, {hi}]"),
            ));
        }
        if self.half_width.lo() < 0.0 || self.half_height.lo() < 0.0 || self.intensity.lo() <= 0.0 {
            return Err(Error::invalid("placement", "extents must be >= 0 and intensity > 0"));
        }
        Ok(())
    }
}

/// Places hidden lights with top edges 0 to `max_offset` pixels below the
/// skyline. Candidates overlapping sky pixels, ground above the local
/// skyline, or earlier lights are redrawn up to `max_attempts` times, after
/// which that light is dropped.
pub fn place_hidden_lights<R: Rng + ?Sized>(
    profile: &SkylineProfile,
    sky_mask: &BinaryMask,
    config: &PlacementConfig,
    rng: &mut R,
) -> Vec<HiddenLight> {
    let (w, h) = (sky_mask.width(), sky_mask.height());
    let columns: Vec<usize> = (0..w)
        .filter(|&x| profile.rows.get(x).copied().flatten().is_some())
        .collect();
    if columns.is_empty() {
        return Vec::new();
    }

    let [lo, hi] = config.light_count;
    let count = rng.gen_range(lo..=hi);
    let mut occupied = vec![false; w * h];
    let mut lights = Vec::with_capacity(count);

    for _ in 0..count {
        for _ in 0..config.max_attempts {
            let column = columns[rng.gen_range(0..columns.len())];
            let shape = if rng.gen_bool(0.5) {
                LightShape::Ellipse
            } else {
                LightShape::Rectangle
            };
            let half_w = (config.half_width.sample(rng) * w as f64).max(1.0);
            let half_h = (config.half_height.sample(rng) * h as f64).max(1.0);
            let offset = rng.gen_range(0..=config.max_offset);
            let base_hue = PALETTE_HUES[rng.gen_range(0..PALETTE_HUES.len())];
            let hue = (base_hue * config.hue_jitter.sample(rng)).rem_euclid(360.0);
            let saturation = config.saturation.sample(rng);
            let intensity = config.intensity.sample(rng);

            let skyline = profile.rows[column].expect("column has sky");
            let top = (skyline + 1 + offset) as f64;
            let light = HiddenLight {
                shape,
                center: [column as f64, top + half_h],
                half_extents: [half_w, half_h],
                color: hsv_to_rgb(hue, saturation, 1.0),
                intensity,
            };

            let footprint = light.footprint(w, h);
            let blocked = footprint.is_empty()
                || footprint.iter().any(|&(x, y)| {
                    occupied[y * w + x] || sky_mask.get(x, y) || profile.rows[x].is_some_and(|s| y <= s)
                });
            if blocked {
                continue;
            }
            for &(x, y) in &footprint {
                occupied[y * w + x] = true;
            }
            lights.push(light);
            break;
        }
    }
    lights
}

/// RGB emission of the hidden lights: `intensity * color` inside each shape.
pub fn emission_map(lights: &[HiddenLight], width: usize, height: usize) -> Image {
    let mut map = Image::zeros(width, height, 3);
    for light in lights {
        for (x, y) in light.footprint(width, height) {
            for c in 0..3 {
                let v = map.get(x, y, c) + light.intensity * light.color[c];
                map.set(x, y, c, v);
            }
        }
    }
    map
}

/// `P_sky`: the emission map convolved with the upward glow kernel over the
/// full frame.
pub fn render_sky_glow(lights: &[HiddenLight], glow_kernel: &Kernel, width: usize, height: usize) -> Result<Image> {
    if lights.is_empty() {
        return Ok(Image::zeros(width, height, 3));
    }
    fft_convolve(&emission_map(lights, width, height), glow_kernel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn half_sky(w: usize, h: usize) -> BinaryMask {
        BinaryMask::from_fn(w, h, |_, y| y < h / 2)
    }

    #[test]
    fn skyline_of_half_sky() {
        let profile = extract_skyline(&half_sky(20, 100));
        assert!(profile.rows.iter().all(|&r| r == Some(49)));
    }

    #[test]
    fn skyline_without_sky() {
        let profile = extract_skyline(&BinaryMask::from_fn(8, 8, |_, _| false));
        assert!(profile.rows.iter().all(Option::is_none));
        assert!(!profile.has_sky());
    }

    #[test]
    fn skyline_single_column() {
        let profile = extract_skyline(&BinaryMask::from_fn(5, 6, |x, y| x == 3 && y < 2));
        assert_eq!(profile.rows, vec![None, None, None, Some(1), None]);
    }

    #[test]
    fn no_sky_no_lights() {
        let mask = BinaryMask::from_fn(32, 32, |_, _| false);
        let lights = place_hidden_lights(
            &extract_skyline(&mask),
            &mask,
            &PlacementConfig::default(),
            &mut seeded(1),
        );
        assert!(lights.is_empty());
    }

    #[test]
    fn lights_stay_hidden_and_disjoint() {
        let (w, h) = (96, 64);
        // Stepped skyline.
        let mask = BinaryMask::from_fn(w, h, |x, y| y < 20 + (x / 16) * 3);
        let profile = extract_skyline(&mask);
        let config = PlacementConfig::default();
        for seed in 0..40 {
            let lights = place_hidden_lights(&profile, &mask, &config, &mut seeded(seed));
            assert!(lights.len() <= 4);
            let mut owner = vec![usize::MAX; w * h];
            for (i, light) in lights.iter().enumerate() {
                let fp = light.footprint(w, h);
                assert!(!fp.is_empty());
                let top = light.center[1] - light.half_extents[1];
                let col = light.center[0] as usize;
                let gap = top - (profile.rows[col].unwrap() + 1) as f64;
                assert!((0.0..=15.0).contains(&gap), "gap {gap}");
                for (x, y) in fp {
                    assert!(!mask.get(x, y));
                    assert_eq!(owner[y * w + x], usize::MAX, "overlap at ({x},{y})");
                    owner[y * w + x] = i;
                }
                assert!(light.color.iter().all(|c| (0.0..=1.0).contains(c)));
                assert!((0.3..=1.0).contains(&light.intensity));
            }
        }
    }

    #[test]
    fn placement_is_seeded() {
        let mask = half_sky(64, 48);
        let profile = extract_skyline(&mask);
        let config = PlacementConfig::default();
        let a = place_hidden_lights(&profile, &mask, &config, &mut seeded(9));
        let b = place_hidden_lights(&profile, &mask, &config, &mut seeded(9));
        assert_eq!(a, b);
        assert!(!a.is_empty());
    }

    #[test]
    fn empty_lights_render_zero() {
        let k = Kernel::new(3, vec![1.0 / 9.0; 9]).unwrap();
        assert!(render_sky_glow(&[], &k, 10, 8).unwrap().is_zero());
    }

    #[test]
    fn glow_is_linear_in_intensity() {
        let light = HiddenLight {
            shape: LightShape::Ellipse,
            center: [10.0, 12.0],
            half_extents: [4.0, 2.0],
            color: [1.0, 0.5, 0.25],
            intensity: 0.4,
        };
        let mut doubled = light.clone();
        doubled.intensity = 0.8;
        let k = Kernel::from_fn(7, |x, y| (1 + x * y) as f64)
            .unwrap()
            .normalized()
            .unwrap();
        let a = render_sky_glow(&[light], &k, 24, 20).unwrap();
        let b = render_sky_glow(&[doubled], &k, 24, 20).unwrap();
        let twice = a.map(|v| 2.0 * v);
        assert!(b.max_abs_diff(&twice) < 1e-12);
    }

    #[test]
    fn footprint_shapes() {
        let rect = HiddenLight {
            shape: LightShape::Rectangle,
            center: [5.0, 5.0],
            half_extents: [2.0, 1.0],
            color: [1.0; 3],
            intensity: 1.0,
        };
        assert_eq!(rect.footprint(20, 20).len(), 15);
        let ellipse = HiddenLight {
            shape: LightShape::Ellipse,
            ..rect.clone()
        };
        let fp = ellipse.footprint(20, 20);
        assert!(fp.contains(&(7, 5)) && fp.contains(&(5, 6)) && !fp.contains(&(7, 6)));
        // Clipped at the frame edge.
        let edge = HiddenLight {
            center: [0.0, 0.0],
            ..rect
        };
        assert_eq!(edge.footprint(20, 20).len(), 6);
    }
}
