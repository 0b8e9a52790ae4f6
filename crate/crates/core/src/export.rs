//! Kernel visualization artifacts: heatmaps, the displacement field and
//! center cross-sections.

use std::path::Path;

use crate::alsf::DisplacementField;
use crate::apsf::RadialProfile;
use crate::imagecore::io::{encode_kernel_heatmap, write_atomic};
use crate::synth::OutputFile;
use crate::{Error, Kernel, Result};

pub const APSF_HEATMAP: &str = "apsf.pgm";
pub const ALSF_HEATMAP: &str = "alsf.pgm";
pub const FIELD_CSV: &str = "field.csv";
pub const APSF_SECTIONS: &str = "cross_section_apsf.csv";
pub const ALSF_SECTIONS: &str = "cross_section_alsf.csv";
pub const PROFILE_CSV: &str = "apsf_profile.csv";

fn to_csv<I, R>(header: &[&str], rows: I) -> Result<Vec<u8>>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(header)?;
    for row in rows {
        writer.write_record(row)?;
    }
    writer.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// `x, y, dx, dy, det_j` per grid pixel, positions relative to center.
pub fn field_csv(field: &DisplacementField) -> Result<Vec<u8>> {
    let dets = field.det_j_map();
    to_csv(
        &["x", "y", "dx", "dy", "det_j"],
        field.quiver().zip(dets).map(|((x, y, dx, dy), det)| {
            [
                x.to_string(),
                y.to_string(),
                dx.to_string(),
                dy.to_string(),
                det.to_string(),
            ]
        }),
    )
}

/// Center row and center column of a kernel, by offset from center.
pub fn cross_section_csv(kernel: &Kernel) -> Result<Vec<u8>> {
    let (horizontal, vertical) = kernel.cross_sections();
    let c = kernel.radius() as i64;
    to_csv(
        &["offset", "horizontal", "vertical"],
        horizontal
            .iter()
            .zip(&vertical)
            .enumerate()
            .map(|(i, (h, v))| [(i as i64 - c).to_string(), h.to_string(), v.to_string()]),
    )
}

pub fn profile_csv(profile: &RadialProfile) -> Result<Vec<u8>> {
    to_csv(
        &["rho", "intensity"],
        profile.samples().map(|(rho, v)| [rho.to_string(), v.to_string()]),
    )
}

/// Writes the five kernel artifacts (plus the radial profile when given)
/// into `out`, returning their paths relative to `out`.
pub fn write_kernel_artifacts(
    out: &Path,
    apsf: &Kernel,
    field: &DisplacementField,
    alsf: &Kernel,
    profile: Option<&RadialProfile>,
) -> Result<Vec<OutputFile>> {
    let mut files = vec![
        ("apsf_heatmap", APSF_HEATMAP, encode_kernel_heatmap(apsf)?),
        ("field", FIELD_CSV, field_csv(field)?),
        ("alsf_heatmap", ALSF_HEATMAP, encode_kernel_heatmap(alsf)?),
        ("apsf_cross_sections", APSF_SECTIONS, cross_section_csv(apsf)?),
        ("alsf_cross_sections", ALSF_SECTIONS, cross_section_csv(alsf)?),
    ];
    if let Some(profile) = profile {
        files.push(("apsf_profile", PROFILE_CSV, profile_csv(profile)?));
    }
    files
        .into_iter()
        .map(|(role, name, bytes)| {
            Ok(OutputFile {
                role: role.to_owned(),
                path: name.to_owned(),
                sha256: write_atomic(&out.join(name), &bytes)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alsf::{build_displacement_field, AlsfParams, BeamSpec};
    use crate::apsf::ApsfParams;

    #[test]
    fn cross_sections_are_centered() {
        let kernel = Kernel::from_fn(3, |x, y| (x + 3 * y) as f64).unwrap();
        let text = String::from_utf8(cross_section_csv(&kernel).unwrap()).unwrap();
        assert_eq!(text, "offset,horizontal,vertical\n-1,3,1\n0,4,4\n1,5,7\n");
    }

    #[test]
    fn field_rows_cover_the_grid() {
        let params = AlsfParams {
            beams: vec![BeamSpec::new(90.0, 30.0, 2.0).unwrap()],
            kappa: 0.5,
            base: ApsfParams::new(1.4, 0.5, 5).unwrap(),
        };
        let field = build_displacement_field(&params, 5).unwrap();
        let text = String::from_utf8(field_csv(&field).unwrap()).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 26);
        assert_eq!(lines[0], "x,y,dx,dy,det_j");
        assert!(lines[13].starts_with("0,0,0,0,"));
    }
}
