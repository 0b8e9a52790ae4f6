//! Parameter sampling and layer composition:
//!
//! ```text
//! I = clip(J + g_sky P_sky + g_alsf P_ALSF + g_apsf P_APSF)
//! ```
//!
//! Layers are accumulated in the order sky, ALSF, APSF. Every random
//! quantity derives from [`SynthesisParams::seed`]: kernel and gain draws
//! happen in [`SynthesisConfig::sample`], scene-dependent draws (hidden
//! light placement and kernel assignment) in [`synthesize`] from separate
//! seed-derived streams, so replaying a record reproduces `I` bit for bit.

use serde::{Deserialize, Serialize};

use crate::alsf::{build_alsf, AlsfParams, KernelFamily, PresetRanges};
use crate::apsf::{generate_apsf, ApsfParams};
use crate::imagecore::TransferMode;
use crate::lightmap::{
    assign_kernel_types, connected_components, render_alsf_layer, render_apsf_layer, LightSourceMap, DEFAULT_MIN_AREA,
    SOURCE_THRESHOLD,
};
use crate::rng::{derive_seed, seeded, Uniform};
use crate::skyglow::{extract_skyline, place_hidden_lights, render_sky_glow, HiddenLight, PlacementConfig};
use crate::{BinaryMask, Error, Image, Result};

/// Clean image, sky mask and visible-light map of one scene.
#[derive(Debug, Clone)]
pub struct SceneAssets {
    clean: Image,
    sky_mask: BinaryMask,
    lights: LightSourceMap,
}

impl SceneAssets {
    pub fn new(clean: Image, sky_mask: BinaryMask, lights: LightSourceMap) -> Result<Self> {
        if !sky_mask.matches(&clean) {
            return Err(Error::DimensionMismatch(format!(
                "sky mask is {}x{} but clean image is {}x{}",
                sky_mask.width(),
                sky_mask.height(),
                clean.width(),
                clean.height()
            )));
        }
        if !lights.intensity().same_dims(&clean) {
            return Err(Error::DimensionMismatch(format!(
                "light map is {}x{} but clean image is {}x{}",
                lights.intensity().width(),
                lights.intensity().height(),
                clean.width(),
                clean.height()
            )));
        }
        Ok(Self {
            clean,
            sky_mask,
            lights,
        })
    }

    pub fn clean(&self) -> &Image {
        &self.clean
    }

    pub fn sky_mask(&self) -> &BinaryMask {
        &self.sky_mask
    }

    pub fn lights(&self) -> &LightSourceMap {
        &self.lights
    }

    pub fn width(&self) -> usize {
        self.clean.width()
    }

    pub fn height(&self) -> usize {
        self.clean.height()
    }

    /// Digest over the three assets.
    pub fn digest(&self) -> String {
        let parts = [
            self.clean.digest(),
            self.sky_mask.to_image().digest(),
            self.lights.intensity().digest(),
        ];
        crate::imagecore::io::sha256_hex(parts.join(":").as_bytes())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClipMode {
    #[default]
    Clamp,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerGains {
    pub sky: f64,
    pub alsf: f64,
    pub apsf: f64,
}

impl LayerGains {
    pub const ZERO: LayerGains = LayerGains {
        sky: 0.0,
        alsf: 0.0,
        apsf: 0.0,
    };

    fn validate(&self) -> Result<()> {
        for (name, g) in [("g_sky", self.sky), ("g_alsf", self.alsf), ("g_apsf", self.apsf)] {
            if !(g >= 0.0 && g.is_finite()) {
                return Err(Error::invalid(
                    "gains",
                    format!("{name} must be finite and >= 0, got {g}"),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GainRanges {
    pub sky: Uniform,
    pub alsf: Uniform,
    pub apsf: Uniform,
}

impl Default for GainRanges {
    fn default() -> Self {
        Self {
            sky: Uniform::fixed(0.5, 1.0),
            alsf: Uniform::fixed(0.5, 1.0),
            apsf: Uniform::fixed(0.3, 0.8),
        }
    }
}

/// Every sampling bound and switch of the pipeline. Serialized as the JSON
/// config file; missing fields take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthesisConfig {
    /// Distributions for the APSF layer kernel and the three ALSF families.
    pub kernels: PresetRanges,
    /// Distributions for the upward sky-glow kernel.
    pub sky_glow_kernel: PresetRanges,
    pub placement: PlacementConfig,
    pub gains: GainRanges,
    pub clip: ClipMode,
    pub transfer: TransferMode,
    pub renormalize: bool,
    pub min_area: usize,
    pub source_threshold: f64,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            kernels: PresetRanges::default(),
            sky_glow_kernel: PresetRanges::sky_glow(),
            placement: PlacementConfig::default(),
            gains: GainRanges::default(),
            clip: ClipMode::Clamp,
            transfer: TransferMode::Stored,
            renormalize: true,
            min_area: DEFAULT_MIN_AREA,
            source_threshold: SOURCE_THRESHOLD,
        }
    }
}

impl SynthesisConfig {
    pub fn validate(&self) -> Result<()> {
        self.kernels.validate()?;
        self.sky_glow_kernel.validate()?;
        self.placement.validate()?;
        if self.min_area == 0 {
            return Err(Error::invalid("min_area", "must be at least 1"));
        }
        if !(self.source_threshold >= 0.0 && self.source_threshold < 1.0) {
            return Err(Error::invalid("source_threshold", "must lie in [0, 1)"));
        }
        for g in [self.gains.sky, self.gains.alsf, self.gains.apsf] {
            if g.lo() < 0.0 {
                return Err(Error::invalid("gains", "gain ranges must be non-negative"));
            }
        }
        Ok(())
    }

    /// Draws all scene-independent parameters for a `width x height` image.
    ///
    /// Draw order: APSF layer kernel, upward, downward and asymmetric ALSF
    /// families, sky-glow kernel, then the gains for sky, ALSF and APSF.
    pub fn sample(&self, seed: u64, width: usize, height: usize) -> Result<SynthesisParams> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(
                "dims",
                format!("image must be non-empty, got {width}x{height}"),
            ));
        }
        self.validate()?;
        let mut rng = seeded(seed);
        let apsf = self.kernels.sample_apsf(&mut rng, width, height);
        let upward = self
            .kernels
            .sample_family(KernelFamily::Upward, &mut rng, width, height);
        let downward = self
            .kernels
            .sample_family(KernelFamily::Downward, &mut rng, width, height);
        let asymmetric = self
            .kernels
            .sample_family(KernelFamily::Asymmetric, &mut rng, width, height);
        let sky_glow = self
            .sky_glow_kernel
            .sample_family(KernelFamily::Upward, &mut rng, width, height);
        let gains = LayerGains {
            sky: self.gains.sky.sample(&mut rng),
            alsf: self.gains.alsf.sample(&mut rng),
            apsf: self.gains.apsf.sample(&mut rng),
        };
        Ok(SynthesisParams {
            seed,
            width,
            height,
            apsf,
            alsf: FamilyParams {
                upward,
                downward,
                asymmetric,
            },
            sky_glow,
            gains,
            clip: self.clip,
            transfer: self.transfer,
            renormalize: self.renormalize,
            min_area: self.min_area,
            source_threshold: self.source_threshold,
            placement: self.placement.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyParams {
    pub upward: AlsfParams,
    pub downward: AlsfParams,
    pub asymmetric: AlsfParams,
}

impl FamilyParams {
    pub fn get(&self, family: KernelFamily) -> &AlsfParams {
        match family {
            KernelFamily::Upward => &self.upward,
            KernelFamily::Downward => &self.downward,
            KernelFamily::Asymmetric => &self.asymmetric,
        }
    }
}

/// Everything needed to replay one polluted variant of a scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisParams {
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub apsf: ApsfParams,
    pub alsf: FamilyParams,
    pub sky_glow: AlsfParams,
    pub gains: LayerGains,
    pub clip: ClipMode,
    pub transfer: TransferMode,
    pub renormalize: bool,
    pub min_area: usize,
    pub source_threshold: f64,
    pub placement: PlacementConfig,
}

impl SynthesisParams {
    pub fn validate(&self) -> Result<()> {
        self.apsf.validate()?;
        for family in KernelFamily::ALL {
            self.alsf.get(family).validate()?;
        }
        self.sky_glow.validate()?;
        self.gains.validate()?;
        self.placement.validate()?;
        if self.min_area == 0 {
            return Err(Error::invalid("min_area", "must be at least 1"));
        }
        Ok(())
    }
}

/// Samples parameters with the default configuration.
pub fn sample_params(seed: u64, width: usize, height: usize) -> Result<SynthesisParams> {
    SynthesisConfig::default().sample(seed, width, height)
}

/// Unscaled pollution layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Layers {
    pub sky: Image,
    pub alsf: Image,
    pub apsf: Image,
}

/// Scene-dependent random draws made during synthesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneDraws {
    pub hidden_lights: Vec<HiddenLight>,
    pub component_areas: Vec<usize>,
    pub assignment: Vec<KernelFamily>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Synthesis {
    pub image: Image,
    pub layers: Layers,
    pub draws: SceneDraws,
}

/// Renders the three layers for `assets` and composes the polluted image.
/// The output always has three channels.
pub fn synthesize(assets: &SceneAssets, params: &SynthesisParams) -> Result<Synthesis> {
    params.validate()?;
    let (w, h) = (assets.width(), assets.height());
    if (params.width, params.height) != (w, h) {
        return Err(Error::DimensionMismatch(format!(
            "parameters were sampled for {}x{} but the scene is {w}x{h}",
            params.width, params.height
        )));
    }
    let transfer = params.transfer;
    let clean = assets.clean().to_rgb().map(|v| transfer.decode(v));
    let lights = LightSourceMap::new(
        assets.lights().intensity().to_rgb().map(|v| transfer.decode(v)),
        assets.lights().provenance(),
    )?;

    let mut sky_rng = seeded(derive_seed(params.seed, "sky-lights", 0));
    let profile = extract_skyline(assets.sky_mask());
    let hidden_lights = place_hidden_lights(&profile, assets.sky_mask(), &params.placement, &mut sky_rng);
    let glow_kernel = build_alsf(&params.sky_glow, params.renormalize)?;
    let sky = render_sky_glow(&hidden_lights, &glow_kernel, w, h)?;

    let mut assign_rng = seeded(derive_seed(params.seed, "kernel-assignment", 0));
    let components = connected_components(&lights.source_mask(params.source_threshold), params.min_area)?;
    let assignment = assign_kernel_types(&components, &mut assign_rng);
    let kernels = [
        build_alsf(&params.alsf.upward, params.renormalize)?,
        build_alsf(&params.alsf.downward, params.renormalize)?,
        build_alsf(&params.alsf.asymmetric, params.renormalize)?,
    ];
    let alsf = render_alsf_layer(&lights, &components, &assignment, &kernels)?;

    let apsf = render_apsf_layer(&lights, &generate_apsf(&params.apsf)?)?;

    let layers = Layers { sky, alsf, apsf };
    let image = compose(&clean, &layers, &params.gains, params.clip, transfer)?;
    Ok(Synthesis {
        image,
        layers,
        draws: SceneDraws {
            hidden_lights,
            component_areas: components.areas().to_vec(),
            assignment,
        },
    })
}

/// `clip(J + g_sky P_sky + g_alsf P_ALSF + g_apsf P_APSF)`, accumulated in
/// that order. `clean` is in compositing space; the result is re-encoded.
pub fn compose(
    clean: &Image,
    layers: &Layers,
    gains: &LayerGains,
    clip: ClipMode,
    transfer: TransferMode,
) -> Result<Image> {
    let mut image = clean.clone();
    image.add_scaled(&layers.sky, gains.sky)?;
    image.add_scaled(&layers.alsf, gains.alsf)?;
    image.add_scaled(&layers.apsf, gains.apsf)?;
    if clip == ClipMode::Clamp {
        image.clamp01();
    }
    if transfer != TransferMode::Stored {
        image = image.map(|v| transfer.encode(v));
    }
    Ok(image)
}

/// One written (or writable) artifact of a variant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputFile {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisRecord {
    pub scene_id: String,
    pub variant: usize,
    pub params: SynthesisParams,
    pub draws: SceneDraws,
    /// Digest of the polluted image samples ([`Image::digest`]).
    pub image_digest: String,
    pub outputs: Vec<OutputFile>,
}

#[derive(Debug, Clone)]
pub struct Variant {
    pub record: SynthesisRecord,
    pub synthesis: Synthesis,
}

/// Seed of variant `k` of `scene_id`.
pub fn variant_seed(master_seed: u64, scene_id: &str, k: usize) -> u64 {
    derive_seed(master_seed, scene_id, k as u64)
}

/// Synthesizes one variant with its derived seed.
pub fn make_variant(
    assets: &SceneAssets,
    scene_id: &str,
    master_seed: u64,
    k: usize,
    config: &SynthesisConfig,
) -> Result<Variant> {
    let seed = variant_seed(master_seed, scene_id, k);
    let params = config.sample(seed, assets.width(), assets.height())?;
    let synthesis = synthesize(assets, &params)?;
    Ok(Variant {
        record: SynthesisRecord {
            scene_id: scene_id.to_owned(),
            variant: k,
            params,
            draws: synthesis.draws.clone(),
            image_digest: synthesis.image.digest(),
            outputs: Vec::new(),
        },
        synthesis,
    })
}

/// `n` polluted versions of one scene.
pub fn make_variants(
    assets: &SceneAssets,
    scene_id: &str,
    master_seed: u64,
    n: usize,
    config: &SynthesisConfig,
) -> Result<Vec<Variant>> {
    if n == 0 {
        return Err(Error::invalid("variants", "need at least one variant"));
    }
    (0..n)
        .map(|k| make_variant(assets, scene_id, master_seed, k, config))
        .collect()
}
