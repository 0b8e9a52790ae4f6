use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use nocturne::alsf::{build_displacement_field, warp_apsf, AlsfParams, BeamSpec, PresetRanges};
use nocturne::apsf::{apsf_radial_profile, generate_apsf, PROFILE_SAMPLES};
use nocturne::dataset::{
    build_dataset, evaluate_pairs, load_scene, write_report, DatasetOptions, LightsSource, Split, MANIFEST_FILE,
};
use nocturne::export::write_kernel_artifacts;
use nocturne::imagecore::io::{read_image, write_png, BitDepth};
use nocturne::imagecore::TransferMode;
use nocturne::lightmap::extract_lights_threshold;
use nocturne::rng::seeded;
use nocturne::synth::{synthesize, ClipMode, LayerGains, OutputFile, SynthesisConfig, SynthesisRecord};
use serde_json::{json, Value};

use crate::{Clip, DatasetArgs, EvalArgs, ExtractArgs, KernelArgs, SynthArgs, SynthOptions};

fn invalid(field: &'static str, reason: impl Into<String>) -> nocturne::Error {
    nocturne::Error::InvalidParameter {
        field,
        reason: reason.into(),
    }
}

fn apply_beam_overrides(params: &mut AlsfParams, args: &KernelArgs) -> Result<()> {
    let amplitude = args.amplitude.unwrap_or(params.beams[0].amplitude);
    if !args.alpha.is_empty() {
        let sigmas = match args.sigma.len() {
            0 => vec![params.beams[0].sigma; args.alpha.len()],
            1 => vec![args.sigma[0]; args.alpha.len()],
            n if n == args.alpha.len() => args.sigma.clone(),
            n => return Err(invalid("sigma", format!("{n} spreads for {} beams", args.alpha.len())).into()),
        };
        params.beams = args
            .alpha
            .iter()
            .zip(sigmas)
            .map(|(&a, s)| BeamSpec::new(a, s, amplitude))
            .collect::<nocturne::Result<_>>()?;
        return Ok(());
    }
    match args.sigma.len() {
        0 => {}
        1 => params.beams.iter_mut().for_each(|b| b.sigma = args.sigma[0]),
        n if n == params.beams.len() => params.beams.iter_mut().zip(&args.sigma).for_each(|(b, &s)| b.sigma = s),
        n => return Err(invalid("sigma", format!("{n} spreads for {} beams", params.beams.len())).into()),
    }
    for beam in &mut params.beams {
        beam.amplitude = amplitude;
    }
    Ok(())
}

pub fn kernel(args: KernelArgs) -> Result<Value> {
    let mut rng = seeded(args.seed);
    let mut params = PresetRanges::default().sample_family(args.family, &mut rng, args.width, args.height);
    if let Some(t) = args.optical_thickness {
        params.base.optical_thickness = t;
    }
    if let Some(q) = args.forward_scatter {
        params.base.forward_scatter = q;
    }
    if let Some(size) = args.size {
        params.base.size = size;
    }
    if let Some(kappa) = args.kappa {
        params.kappa = kappa;
    }
    apply_beam_overrides(&mut params, &args)?;
    params.validate()?;

    let renormalize = !args.no_renormalize;
    let apsf = generate_apsf(&params.base)?;
    let field = build_displacement_field(&params, params.base.size)?;
    let alsf = warp_apsf(&apsf, &field, renormalize)?;
    let profile = if args.profile {
        Some(apsf_radial_profile(&params.base, PROFILE_SAMPLES)?)
    } else {
        None
    };
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let outputs = write_kernel_artifacts(&args.out, &apsf, &field, &alsf, profile.as_ref())?;
    Ok(json!({
        "family": args.family,
        "seed": args.seed,
        "params": params,
        "renormalize": renormalize,
        "alsf_sum": alsf.sum(),
        "outputs": outputs,
    }))
}

fn load_config(options: &SynthOptions) -> Result<SynthesisConfig> {
    let mut config: SynthesisConfig = match &options.config {
        Some(path) => {
            let text = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_slice(&text)
                .map_err(nocturne::Error::from)
                .with_context(|| format!("parsing {}", path.display()))?
        }
        None => SynthesisConfig::default(),
    };
    if let Some(clip) = options.clip {
        config.clip = match clip {
            Clip::Clamp => ClipMode::Clamp,
            Clip::None => ClipMode::None,
        };
    }
    if options.linear {
        config.transfer = TransferMode::Linear;
    }
    if options.no_renormalize {
        config.renormalize = false;
    }
    config.validate()?;
    Ok(config)
}

fn lights_source(options: &SynthOptions) -> LightsSource {
    if options.extract_lights {
        LightsSource::Threshold(options.tau)
    } else {
        LightsSource::File
    }
}

fn write_output(out: &Path, role: &str, name: &str, image: &nocturne::Image, depth: BitDepth) -> Result<OutputFile> {
    let sha256 = write_png(&out.join(name), image, depth)?;
    Ok(OutputFile {
        role: role.to_owned(),
        path: name.to_owned(),
        sha256,
    })
}

pub fn synth(args: SynthArgs) -> Result<Value> {
    let config = load_config(&args.options)?;
    let scene = load_scene(&args.scene, lights_source(&args.options))?;
    let assets = &scene.assets;
    let mut params = config.sample(args.seed, assets.width(), assets.height())?;
    if let Some(gains) = &args.gains {
        let [sky, alsf, apsf] = gains[..] else {
            bail!(invalid(
                "gains",
                format!("expected three values sky,alsf,apsf, got {}", gains.len())
            ));
        };
        params.gains = LayerGains { sky, alsf, apsf };
    }
    let result = synthesize(assets, &params)?;

    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut outputs = vec![write_output(
        &args.out,
        "polluted",
        "polluted.png",
        &result.image,
        scene.depth,
    )?];
    if args.options.emit_layers {
        let layers = &result.layers;
        for (role, layer) in [
            ("p_sky", &layers.sky),
            ("p_alsf", &layers.alsf),
            ("p_apsf", &layers.apsf),
        ] {
            outputs.push(write_output(
                &args.out,
                role,
                &format!("{role}.png"),
                layer,
                BitDepth::Sixteen,
            )?);
        }
    }
    let scene_id = args
        .scene
        .canonicalize()
        .ok()
        .and_then(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .unwrap_or_default();
    let record = SynthesisRecord {
        scene_id,
        variant: 0,
        params,
        draws: result.draws,
        image_digest: result.image.digest(),
        outputs,
    };
    let mut text = serde_json::to_vec_pretty(&record)?;
    text.push(b'\n');
    nocturne::imagecore::io::write_atomic(&args.out.join("record.json"), &text)?;
    Ok(json!({
        "scene_id": record.scene_id,
        "image_digest": record.image_digest,
        "gains": record.params.gains,
        "outputs": record.outputs,
    }))
}

pub fn dataset(args: DatasetArgs) -> Result<Value> {
    let options = DatasetOptions {
        master_seed: args.seed,
        variants: args.variants,
        workers: args.workers,
        config: load_config(&args.options)?,
        lights: lights_source(&args.options),
        emit_layers: args.options.emit_layers,
    };
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let manifest = build_dataset(&args.root, &args.out, &options)?;
    for skipped in &manifest.skipped {
        log::warn!("skipped {}: {}", skipped.id, skipped.reason);
    }
    Ok(json!({
        "pairs": manifest.pair_count(),
        "train_groups": manifest.group_count(Split::Train),
        "val_groups": manifest.group_count(Split::Val),
        "skipped": manifest.skipped,
        "manifest": args.out.join(MANIFEST_FILE),
        "manifest_sha256": manifest.digest()?,
    }))
}

pub fn eval(args: EvalArgs) -> Result<Value> {
    let report = evaluate_pairs(&args.pairs)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    write_report(&report, &args.out)?;
    for failure in &report.failures {
        log::warn!("row {}: {}", failure.row, failure.error);
    }
    Ok(serde_json::to_value(report.summary())?)
}

pub fn extract_lights(args: ExtractArgs) -> Result<Value> {
    let (image, depth) = read_image(&args.image)?;
    let map = extract_lights_threshold(&image, args.tau)?;
    let sha256 = write_png(&args.out, map.intensity(), depth)?;
    let lit = map.source_mask(0.0).count();
    Ok(json!({ "out": args.out, "sha256": sha256, "lit_pixels": lit }))
}
