use serde::{Deserialize, Serialize};

/// Display gamma used by [`TransferMode::Linear`].
pub const GAMMA: f64 = 2.2;

/// Rec. 601 luma weights.
#[inline]
pub fn luminance(r: f64, g: f64, b: f64) -> f64 {
    0.299 * r + 0.587 * g + 0.114 * b
}

/// Hexcone HSV to RGB. `h` in degrees (any value, wrapped to `[0, 360)`),
/// `s` and `v` in `[0, 1]`.
pub fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h = h.rem_euclid(360.0);
    let c = v * s;
    let sector = h / 60.0;
    let x = c * (1.0 - (sector % 2.0 - 1.0).abs());
    let (r, g, b) = match sector as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r + m, g + m, b + m]
}

/// How stored pixel values relate to the space layers are added in.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransferMode {
    /// Composite stored values directly.
    #[default]
    Stored,
    /// Decode with `v^2.2`, composite, re-encode with `v^(1/2.2)`.
    Linear,
}

impl TransferMode {
    pub fn decode(self, v: f64) -> f64 {
        match self {
            TransferMode::Stored => v,
            TransferMode::Linear => v.max(0.0).powf(GAMMA),
        }
    }

    pub fn encode(self, v: f64) -> f64 {
        match self {
            TransferMode::Stored => v,
            TransferMode::Linear => v.max(0.0).powf(1.0 / GAMMA),
        }
    }
}
