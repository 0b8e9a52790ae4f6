//! Reference implementations and fixtures shared by the integration tests.
//! The oracles are written from the definitions, without reusing library
//! internals beyond plain data access.
#![allow(dead_code)]

use std::path::Path;

use nocturne::imagecore::io::{write_png, BitDepth};
use nocturne::rng::seeded;
use nocturne::{BinaryMask, Image, Kernel};
use rand::Rng;

/// Brute-force spatial convolution with zero padding:
/// `out(x, y) = sum_{i, j} k(i, j) * img(x + i - r, y + j - r)` mirrored, i.e.
/// a true convolution where kernel pixel `(i, j)` pushes light by
/// `(i - r, j - r)`.
pub fn direct_convolve(image: &Image, kernel: &Kernel) -> Image {
    let (w, h, ch) = (image.width(), image.height(), image.channels());
    let s = kernel.size() as i64;
    let r = s / 2;
    let mut out = Image::zeros(w, h, ch);
    for c in 0..ch {
        for y in 0..h as i64 {
            for x in 0..w as i64 {
                let mut acc = 0.0;
                for j in 0..s {
                    for i in 0..s {
                        let (sx, sy) = (x - (i - r), y - (j - r));
                        if sx < 0 || sy < 0 || sx >= w as i64 || sy >= h as i64 {
                            continue;
                        }
                        acc += kernel.at(i as usize, j as usize) * image.get(sx as usize, sy as usize, c);
                    }
                }
                out.set(x as usize, y as usize, c, acc);
            }
        }
    }
    out
}

/// One beam as `(alpha_deg, sigma_deg, amplitude)`.
pub type Beam = (f64, f64, f64);

/// Displacement at grid pixel `(x, y)` of an `s x s` field.
pub fn field_at(beams: &[Beam], kappa: f64, s: usize, x: usize, y: usize) -> (f64, f64) {
    let c = (s / 2) as f64;
    let px = x as f64 - c;
    let py = y as f64 - c;
    let r = px.hypot(py);
    if r == 0.0 {
        return (0.0, 0.0);
    }
    let mut theta = (-py).atan2(px).to_degrees();
    if theta < 0.0 {
        theta += 360.0;
    }
    if theta >= 360.0 {
        theta -= 360.0;
    }
    let mut phi = 0.0;
    for &(alpha, sigma, amp) in beams {
        let d = (theta - alpha).abs();
        let delta = if d > 180.0 { 360.0 - d } else { d };
        phi += amp * (-(delta / sigma).powi(2)).exp();
    }
    let decay = (-kappa * r / (s as f64 / 2.0)).exp();
    let dr = r / ((1.0 + phi) * decay) - r;
    let t = theta.to_radians();
    (dr * t.cos(), -dr * t.sin())
}

/// Mass-weighted vertical split of a kernel: `(rows above centre, rows below)`.
pub fn mass_above_below(kernel: &Kernel) -> (f64, f64) {
    let s = kernel.size();
    let c = s / 2;
    let (mut above, mut below) = (0.0, 0.0);
    for y in 0..s {
        for x in 0..s {
            let v = kernel.at(x, y);
            if y < c {
                above += v;
            } else if y > c {
                below += v;
            }
        }
    }
    (above, below)
}

/// Labels via flood fill with 8-neighbours; returns per-pixel labels
/// (0 = none) after dropping components under `min_area`, renumbered in
/// raster order of first pixel.
pub fn flood_components(mask: &BinaryMask, min_area: usize) -> Vec<u32> {
    let (w, h) = (mask.width(), mask.height());
    let mut raw = vec![0u32; w * h];
    let mut sizes = vec![0usize];
    for y0 in 0..h {
        for x0 in 0..w {
            if !mask.get(x0, y0) || raw[y0 * w + x0] != 0 {
                continue;
            }
            let id = sizes.len() as u32;
            let mut stack = vec![(x0, y0)];
            raw[y0 * w + x0] = id;
            let mut n = 0;
            while let Some((x, y)) = stack.pop() {
                n += 1;
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                        if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                            continue;
                        }
                        let (nx, ny) = (nx as usize, ny as usize);
                        if mask.get(nx, ny) && raw[ny * w + nx] == 0 {
                            raw[ny * w + nx] = id;
                            stack.push((nx, ny));
                        }
                    }
                }
            }
            sizes.push(n);
        }
    }
    let mut next = 0;
    let remap: Vec<u32> = sizes
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            if i == 0 || n < min_area {
                0
            } else {
                next += 1;
                next
            }
        })
        .collect();
    raw.iter().map(|&l| remap[l as usize]).collect()
}

/// ALSF layer rendered one component at a time with direct convolution.
pub fn per_component_layer(lights: &Image, labels: &[u32], families: &[usize], kernels: &[Kernel; 3]) -> Image {
    let (w, h, ch) = (lights.width(), lights.height(), lights.channels());
    let mut layer = Image::zeros(w, h, ch);
    for (k, &family) in families.iter().enumerate() {
        let label = k as u32 + 1;
        let single = Image::from_fn(w, h, ch, |x, y, c| {
            if labels[y * w + x] == label {
                lights.get(x, y, c)
            } else {
                0.0
            }
        });
        let part = direct_convolve(&single, &kernels[family]);
        layer.add_scaled(&part, 1.0).unwrap();
    }
    layer
}

pub fn max_abs_diff(a: &Image, b: &Image) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// A night scene: dim clean image, sky above a wavy skyline, and `n_lights`
/// separated rectangular lights below it.
pub struct SyntheticScene {
    pub clean: Image,
    pub sky: BinaryMask,
    pub lights: Image,
}

pub fn synthetic_scene(seed: u64, width: usize, height: usize, n_lights: usize) -> SyntheticScene {
    let mut rng = seeded(seed);
    let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let skyline: Vec<usize> = (0..width)
        .map(|x| {
            let t = x as f64 / width as f64;
            ((0.3 + 0.08 * (t * 9.0 + phase).sin()) * height as f64) as usize
        })
        .collect();
    let sky = BinaryMask::from_fn(width, height, |x, y| y < skyline[x]);
    let clean = Image::from_fn(width, height, 3, |x, y, c| {
        let base = if y < skyline[x] { 0.05 } else { 0.15 };
        base + 0.1 * (x + y) as f64 / (width + height) as f64 + 0.02 * c as f64
    });

    let mut lights = Image::zeros(width, height, 3);
    let mut taken = BinaryMask::from_fn(width, height, |_, _| false);
    let mut placed = 0;
    let mut attempts = 0;
    while placed < n_lights && attempts < 10_000 {
        attempts += 1;
        let lw = rng.gen_range(2..=5usize);
        let lh = rng.gen_range(2..=5usize);
        let x0 = rng.gen_range(1..width - lw - 1);
        let y0 = rng.gen_range(height / 2..height - lh - 1);
        // One pixel of clearance so lights never touch, even diagonally.
        let clear = (y0 - 1..y0 + lh + 1).all(|y| (x0 - 1..x0 + lw + 1).all(|x| !taken.get(x, y)));
        if !clear {
            continue;
        }
        let colour = [
            rng.gen_range(0.5..1.0),
            rng.gen_range(0.4..1.0),
            rng.gen_range(0.3..1.0),
        ];
        let mut mark = Vec::new();
        for y in y0..y0 + lh {
            for x in x0..x0 + lw {
                for (c, v) in colour.iter().enumerate() {
                    lights.set(x, y, c, *v);
                }
                mark.push((x, y));
            }
        }
        taken = BinaryMask::from_fn(width, height, |x, y| taken.get(x, y) || mark.contains(&(x, y)));
        placed += 1;
    }
    assert_eq!(placed, n_lights, "scene too small for {n_lights} lights");
    SyntheticScene { clean, sky, lights }
}

/// Writes the three scene files into `dir`.
pub fn write_scene(dir: &Path, scene: &SyntheticScene) {
    std::fs::create_dir_all(dir).unwrap();
    write_png(&dir.join("clean.png"), &scene.clean, BitDepth::Eight).unwrap();
    write_png(&dir.join("sky_mask.png"), &scene.sky.to_image(), BitDepth::Eight).unwrap();
    write_png(&dir.join("lights.png"), &scene.lights, BitDepth::Eight).unwrap();
}

/// Writes `count` scenes named `scene_000..` under `root`.
pub fn write_scenes(root: &Path, count: usize, width: usize, height: usize) {
    for i in 0..count {
        let scene = synthetic_scene(1000 + i as u64, width, height, 1 + i % 4);
        write_scene(&root.join(format!("scene_{i:03}")), &scene);
    }
}
