//! Visible light sources: extraction, connected components, kernel-family
//! assignment and rendering of the `P_APSF` and `P_ALSF` layers.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::alsf::KernelFamily;
use crate::imagecore::{fft_convolve, io::encode_pgm16};
use crate::{BinaryMask, Error, Image, Kernel, Result};

/// Channel-max intensity above which a light-map pixel counts as a source.
pub const SOURCE_THRESHOLD: f64 = 0.02;
/// Components smaller than this many pixels are dropped.
pub const DEFAULT_MIN_AREA: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    ExternalFile,
    ThresholdFallback,
}

/// Radiance of visible emitters, same frame as the scene.
#[derive(Debug, Clone, PartialEq)]
pub struct LightSourceMap {
    intensity: Image,
    provenance: Provenance,
}

impl LightSourceMap {
    pub fn new(intensity: Image, provenance: Provenance) -> Result<Self> {
        if intensity.min_value() < 0.0 {
            return Err(Error::invalid("lights", "light intensities must be non-negative"));
        }
        Ok(Self { intensity, provenance })
    }

    pub fn intensity(&self) -> &Image {
        &self.intensity
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    /// Pixels whose brightest channel exceeds `threshold`.
    pub fn source_mask(&self, threshold: f64) -> BinaryMask {
        let img = &self.intensity;
        BinaryMask::from_fn(img.width(), img.height(), |x, y| {
            (0..img.channels()).any(|c| img.get(x, y, c) > threshold)
        })
    }
}

/// Keeps pixels whose luminance is at least `tau`, zeroing the rest.
pub fn extract_lights_threshold(image: &Image, tau: f64) -> Result<LightSourceMap> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::invalid(
            "tau",
            format!("threshold must lie in (0, 1), got {tau}"),
        ));
    }
    let luma = image.luminance();
    let w = image.width();
    let intensity = Image::from_fn(w, image.height(), image.channels(), |x, y, c| {
        if luma[y * w + x] >= tau {
            image.get(x, y, c)
        } else {
            0.0
        }
    });
    LightSourceMap::new(intensity, Provenance::ThresholdFallback)
}

/// 8-connected component labels. Label 0 is background; retained
/// components are numbered `1..=count` in raster order of first pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentMap {
    width: usize,
    height: usize,
    labels: Vec<u32>,
    areas: Vec<usize>,
}

impl ComponentMap {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn count(&self) -> usize {
        self.areas.len()
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    #[inline]
    pub fn label(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    /// Pixel count of each component, indexed by `label - 1`.
    pub fn areas(&self) -> &[usize] {
        &self.areas
    }

    /// Labels as a 16-bit PGM (values saturate at 65535).
    pub fn to_pgm16(&self) -> Result<Vec<u8>> {
        let codes: Vec<u16> = self.labels.iter().map(|&l| l.min(u16::MAX as u32) as u16).collect();
        encode_pgm16(self.width, self.height, &codes)
    }
}

struct DisjointSet {
    parent: Vec<u32>,
}

impl DisjointSet {
    fn new() -> Self {
        Self { parent: vec![0] }
    }

    fn make(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        id
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let grand = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = grand;
            x = grand;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi as usize] = lo;
        }
    }
}

/// Two-pass union-find labeling over the 3x3 neighborhood, followed by the
/// `min_area` filter and label compaction.
pub fn connected_components(mask: &BinaryMask, min_area: usize) -> Result<ComponentMap> {
    if min_area == 0 {
        return Err(Error::invalid("min_area", "must be at least 1"));
    }
    let (w, h) = (mask.width(), mask.height());
    let mut provisional = vec![0u32; w * h];
    let mut sets = DisjointSet::new();

    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) {
                continue;
            }
            // Already-visited neighbors: W, NW, N, NE.
            let mut neighbors = [0u32; 4];
            let mut n = 0;
            let mut push = |nx: usize, ny: usize| {
                let l = provisional[ny * w + nx];
                if l != 0 {
                    neighbors[n] = l;
                    n += 1;
                }
            };
            if x > 0 {
                push(x - 1, y);
            }
            if y > 0 {
                if x > 0 {
                    push(x - 1, y - 1);
                }
                push(x, y - 1);
                if x + 1 < w {
                    push(x + 1, y - 1);
                }
            }
            let label = match neighbors[..n].iter().min() {
                None => sets.make(),
                Some(&first) => {
                    for &other in &neighbors[..n] {
                        sets.union(first, other);
                    }
                    first
                }
            };
            provisional[y * w + x] = label;
        }
    }

    let mut roots = vec![0u32; w * h];
    let mut root_area = vec![0usize; sets.parent.len()];
    for (i, &l) in provisional.iter().enumerate() {
        if l != 0 {
            let r = sets.find(l);
            roots[i] = r;
            root_area[r as usize] += 1;
        }
    }

    let mut compact = vec![0u32; sets.parent.len()];
    let mut areas = Vec::new();
    let mut labels = vec![0u32; w * h];
    for (i, &r) in roots.iter().enumerate() {
        if r == 0 || root_area[r as usize] < min_area {
            continue;
        }
        if compact[r as usize] == 0 {
            areas.push(root_area[r as usize]);
            compact[r as usize] = areas.len() as u32;
        }
        labels[i] = compact[r as usize];
    }

    Ok(ComponentMap {
        width: w,
        height: h,
        labels,
        areas,
    })
}

/// One uniform draw from `{0, 1, 2}` per component, in label order.
pub fn assign_kernel_types<R: Rng + ?Sized>(components: &ComponentMap, rng: &mut R) -> Vec<KernelFamily> {
    (0..components.count())
        .map(|_| KernelFamily::from_index(rng.gen_range(0..3)).expect("index < 3"))
        .collect()
}

/// Sums component intensities per assigned family, convolves each non-empty
/// group with its family kernel and accumulates in family order.
pub fn render_alsf_layer(
    map: &LightSourceMap,
    components: &ComponentMap,
    assignment: &[KernelFamily],
    kernels: &[Kernel; 3],
) -> Result<Image> {
    let src = map.intensity();
    if components.width() != src.width() || components.height() != src.height() {
        return Err(Error::DimensionMismatch(format!(
            "component map is {}x{} but light map is {}x{}",
            components.width(),
            components.height(),
            src.width(),
            src.height()
        )));
    }
    if assignment.len() != components.count() {
        return Err(Error::DimensionMismatch(format!(
            "{} kernel assignments for {} components",
            assignment.len(),
            components.count()
        )));
    }

    let (w, h, ch) = (src.width(), src.height(), src.channels());
    let mut groups: Vec<Image> = (0..3).map(|_| Image::zeros(w, h, ch)).collect();
    for y in 0..h {
        for x in 0..w {
            let label = components.label(x, y);
            if label == 0 {
                continue;
            }
            let group = &mut groups[assignment[label as usize - 1].index()];
            for c in 0..ch {
                group.set(x, y, c, src.get(x, y, c));
            }
        }
    }

    let mut layer = Image::zeros(w, h, ch);
    for (group, kernel) in groups.iter().zip(kernels) {
        if group.is_zero() {
            continue;
        }
        layer.add_scaled(&fft_convolve(group, kernel)?, 1.0)?;
    }
    Ok(layer)
}

/// Convolves the whole light map with the isotropic kernel.
pub fn render_apsf_layer(map: &LightSourceMap, kernel: &Kernel) -> Result<Image> {
    fft_convolve(map.intensity(), kernel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn mask_from(rows: &[&str]) -> BinaryMask {
        let h = rows.len();
        let w = rows[0].len();
        BinaryMask::from_fn(w, h, |x, y| rows[y].as_bytes()[x] == b'#')
    }

    #[test]
    fn threshold_extraction() {
        let black = Image::zeros(4, 4, 3);
        assert!(extract_lights_threshold(&black, 0.5).unwrap().intensity().is_zero());

        let mut img = Image::zeros(4, 4, 3);
        for c in 0..3 {
            img.set(1, 2, c, 1.0);
            img.set(3, 0, c, 0.5);
        }
        let map = extract_lights_threshold(&img, 0.9).unwrap();
        assert_eq!(map.provenance(), Provenance::ThresholdFallback);
        let lit: Vec<_> = (0..16).filter(|i| map.intensity().get(i % 4, i / 4, 0) > 0.0).collect();
        assert_eq!(lit, vec![2 * 4 + 1]);

        assert!(extract_lights_threshold(&img, 0.0).is_err());
        assert!(extract_lights_threshold(&img, 1.0).is_err());
    }

    #[test]
    fn empty_mask_has_no_components() {
        let cc = connected_components(&BinaryMask::from_fn(5, 5, |_, _| false), 1).unwrap();
        assert_eq!(cc.count(), 0);
        assert!(cc.labels().iter().all(|&l| l == 0));
    }

    #[test]
    fn diagonal_contact_merges() {
        let mask = mask_from(&["##...", "##...", "..##.", "..##."]);
        let cc = connected_components(&mask, 1).unwrap();
        assert_eq!(cc.count(), 1);
        assert_eq!(cc.areas(), &[8]);
    }

    #[test]
    fn anti_diagonal_contact_merges() {
        let mask = mask_from(&["...#", "..#.", ".#..", "#..."]);
        assert_eq!(connected_components(&mask, 1).unwrap().count(), 1);
    }

    #[test]
    fn u_shape_unions_late() {
        let mask = mask_from(&["#.#", "#.#", "###"]);
        let cc = connected_components(&mask, 1).unwrap();
        assert_eq!(cc.count(), 1);
        assert_eq!(cc.areas(), &[7]);
    }

    #[test]
    fn area_filter_and_compaction() {
        let mask = mask_from(&["##....", "......", "..####", "..#..."]);
        let cc = connected_components(&mask, 3).unwrap();
        assert_eq!(cc.count(), 1);
        assert_eq!(cc.label(0, 0), 0);
        assert_eq!(cc.label(2, 2), 1);
        assert_eq!(cc.areas(), &[5]);

        let all = connected_components(&mask, 1).unwrap();
        assert_eq!(all.count(), 2);
        assert_eq!(all.label(0, 0), 1);
        assert_eq!(all.label(2, 3), 2);
        assert!(connected_components(&mask, 0).is_err());
    }

    #[test]
    fn assignment_is_seeded() {
        let mask = mask_from(&["#.#.#.#", ".......", "#.#.#.#"]);
        let cc = connected_components(&mask, 1).unwrap();
        assert_eq!(cc.count(), 8);
        let a = assign_kernel_types(&cc, &mut seeded(5));
        assert_eq!(a, assign_kernel_types(&cc, &mut seeded(5)));
        assert_eq!(a.len(), 8);

        let empty = connected_components(&BinaryMask::from_fn(3, 3, |_, _| false), 1).unwrap();
        assert!(assign_kernel_types(&empty, &mut seeded(5)).is_empty());
    }

    #[test]
    fn zero_map_renders_zero_layers() {
        let map = LightSourceMap::new(Image::zeros(8, 8, 3), Provenance::ExternalFile).unwrap();
        let cc = connected_components(&map.source_mask(SOURCE_THRESHOLD), DEFAULT_MIN_AREA).unwrap();
        let k = Kernel::new(3, vec![1.0 / 9.0; 9]).unwrap();
        let kernels = [k.clone(), k.clone(), k.clone()];
        assert!(render_alsf_layer(&map, &cc, &[], &kernels).unwrap().is_zero());
        assert!(render_apsf_layer(&map, &k).unwrap().is_zero());
    }

    #[test]
    fn apsf_layer_of_impulse_is_the_kernel() {
        let k = Kernel::from_fn(5, |x, y| (1 + x + 2 * y) as f64)
            .unwrap()
            .normalized()
            .unwrap();
        let mut img = Image::zeros(9, 9, 1);
        img.set(4, 4, 0, 0.5);
        let map = LightSourceMap::new(img, Provenance::ExternalFile).unwrap();
        let layer = render_apsf_layer(&map, &k).unwrap();
        for y in 0..5 {
            for x in 0..5 {
                assert!((layer.get(x + 2, y + 2, 0) - 0.5 * k.at(x, y)).abs() < 1e-12);
            }
        }
        assert!((layer.sum() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn negative_lights_rejected() {
        let img = Image::from_vec(1, 1, 1, vec![-0.1]).unwrap();
        assert!(LightSourceMap::new(img, Provenance::ExternalFile).is_err());
    }

    #[test]
    fn label_export() {
        let cc = connected_components(&mask_from(&["#.", ".."]), 1).unwrap();
        let bytes = cc.to_pgm16().unwrap();
        assert!(bytes.starts_with(b"P5"));
    }
}
