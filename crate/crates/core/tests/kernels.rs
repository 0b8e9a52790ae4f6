mod common;

use nocturne::alsf::{
    build_alsf, build_displacement_field, AlsfParams, BeamSpec, KernelFamily, PresetRanges, DET_EPSILON,
};
use nocturne::apsf::{apsf_radial_profile, generate_apsf, kernel_size_for, ApsfParams};
use nocturne::imagecore::fft_convolve;
use nocturne::rng::seeded;
use nocturne::{Image, Kernel};
use proptest::prelude::*;
use rand::Rng;

fn params(alpha: f64, sigma: f64, kappa: f64, size: usize) -> AlsfParams {
    AlsfParams {
        beams: vec![BeamSpec::new(alpha, sigma, 2.0).unwrap()],
        kappa,
        base: ApsfParams::new(1.4, 0.5, size).unwrap(),
    }
}

#[test]
fn jacobian_matches_finite_differences_of_the_oracle_field() {
    let mut rng = seeded(11);
    let ranges = PresetRanges::default();
    for draw in 0..30 {
        let mut p = ranges.sample_family(KernelFamily::ALL[draw % 3], &mut rng, 20, 20);
        p.base.size = 2 * rng.gen_range(2..=12) + 1;
        let s = p.base.size;
        let field = build_displacement_field(&p, s).unwrap();
        let beams: Vec<common::Beam> = p.beams.iter().map(|b| (b.alpha, b.sigma, b.amplitude)).collect();
        let warp = |x: usize, y: usize| {
            let (dx, dy) = common::field_at(&beams, p.kappa, s, x, y);
            (x as f64 + dx, y as f64 + dy)
        };
        for y in 0..s {
            for x in 0..s {
                let (x0, x1) = (x.saturating_sub(1), (x + 1).min(s - 1));
                let (y0, y1) = (y.saturating_sub(1), (y + 1).min(s - 1));
                let (a, b) = (warp(x0, y), warp(x1, y));
                let (c, d) = (warp(x, y0), warp(x, y1));
                let hx = (x1 - x0) as f64;
                let hy = (y1 - y0) as f64;
                let det = ((b.0 - a.0) / hx) * ((d.1 - c.1) / hy) - ((d.0 - c.0) / hy) * ((b.1 - a.1) / hx);
                let want = det.max(DET_EPSILON);
                let got = field.det_j(x, y);
                assert!(
                    (got - want).abs() <= 1e-9 * want.max(1.0),
                    "draw {draw} ({x},{y}): {got} vs {want}"
                );
            }
        }
    }
}

#[test]
fn rotating_the_beam_rotates_the_kernel() {
    // A beam at 0 degrees is the 90-degree kernel turned a quarter clockwise.
    let s = 31;
    let up = build_alsf(&params(90.0, 30.0, 0.6, s), true).unwrap();
    let right = build_alsf(&params(0.0, 30.0, 0.6, s), true).unwrap();
    for y in 0..s {
        for x in 0..s {
            let (ux, uy) = (y, s - 1 - x);
            assert!((right.at(x, y) - up.at(ux, uy)).abs() < 1e-9, "({x},{y})");
        }
    }
}

#[test]
fn downward_kernel_is_the_upward_one_flipped() {
    let s = 41;
    let up = build_alsf(&params(90.0, 40.0, 0.8, s), true).unwrap();
    let down = build_alsf(&params(270.0, 40.0, 0.8, s), true).unwrap();
    for y in 0..s {
        for x in 0..s {
            assert!((up.at(x, y) - down.at(x, s - 1 - y)).abs() < 1e-12);
        }
    }
}

#[test]
fn light_spreads_in_the_beam_direction() {
    let s = 41;
    let kernel = build_alsf(&params(90.0, 30.0, 0.6, s), true).unwrap();
    let mut image = Image::zeros(61, 61, 1);
    image.set(30, 40, 0, 1.0);
    let out = fft_convolve(&image, &kernel).unwrap();
    let above: f64 = (0..40).map(|y| out.get(30, y, 0)).sum();
    let below: f64 = (41..61).map(|y| out.get(30, y, 0)).sum();
    assert!(above > below, "above {above} below {below}");
}

#[test]
fn half_mass_radius_grows_with_thickness() {
    let half_mass = |t: f64| {
        let kernel = generate_apsf(&ApsfParams::new(t, 0.45, 101).unwrap()).unwrap();
        let c = 50.0;
        let mut by_radius: Vec<(f64, f64)> = (0..101 * 101)
            .map(|i| {
                let (x, y) = ((i % 101) as f64, (i / 101) as f64);
                ((x - c).hypot(y - c), kernel.weights()[i])
            })
            .collect();
        by_radius.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut acc = 0.0;
        by_radius
            .iter()
            .find(|(_, w)| {
                acc += w;
                acc >= 0.5
            })
            .unwrap()
            .0
    };
    let radii = [1.1, 1.45, 1.8].map(half_mass);
    assert!(radii[0] <= radii[1] && radii[1] <= radii[2], "{radii:?}");
}

#[test]
fn profile_starts_at_its_peak() {
    let profile = apsf_radial_profile(&ApsfParams::new(1.3, 0.6, 21).unwrap(), 512).unwrap();
    let peak = profile.intensities().iter().cloned().fold(0.0, f64::max);
    assert_eq!(profile.intensities()[0], peak);
    assert_eq!(profile.len(), 512);
}

#[test]
fn kernel_size_follows_the_larger_dimension() {
    assert_eq!(kernel_size_for(1.0, 640, 480), 641);
    assert_eq!(kernel_size_for(0.75, 100, 300), 225);
    assert_eq!(kernel_size_for(0.001, 10, 10), 3);
}

fn small_image() -> impl Strategy<Value = Image> {
    (1usize..12, 1usize..12, prop::sample::select(vec![1usize, 3])).prop_flat_map(|(w, h, c)| {
        prop::collection::vec(0.0f64..1.0, w * h * c).prop_map(move |data| Image::from_vec(w, h, c, data).unwrap())
    })
}

fn small_kernel() -> impl Strategy<Value = Kernel> {
    (0usize..4).prop_flat_map(|r| {
        let s = 2 * r + 1;
        prop::collection::vec(0.0f64..1.0, s * s).prop_map(move |w| Kernel::new(s, w).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fft_agrees_with_direct(image in small_image(), kernel in small_kernel()) {
        let got = fft_convolve(&image, &kernel).unwrap();
        prop_assert!(common::max_abs_diff(&got, &common::direct_convolve(&image, &kernel)) < 1e-9);
    }

    #[test]
    fn convolution_never_creates_negative_light(image in small_image(), kernel in small_kernel()) {
        let out = fft_convolve(&image, &kernel).unwrap();
        prop_assert!(out.data().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn alsf_is_non_negative_and_normalized(
        alpha in 0.0f64..360.0,
        sigma in 15.0f64..60.0,
        kappa in 0.0f64..1.0,
        r in 3usize..20,
    ) {
        let kernel = build_alsf(&params(alpha, sigma, kappa, 2 * r + 1), true).unwrap();
        prop_assert!(kernel.weights().iter().all(|&w| w >= 0.0 && w.is_finite()));
        prop_assert!((kernel.sum() - 1.0).abs() < 1e-9);
    }
}
