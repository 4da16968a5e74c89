//! Self-checks that recompute key quantities along independent routes.
//!
//! Every check pits the production code path against an oracle that
//! shares as little machinery as possible: closed-form integrals against
//! quadrature, analytic derivatives against finite differences, modal
//! compression against the raw pixel basis, zoomed-transform energy
//! against pupil energy at an exactly commensurate sampling. The suite
//! runs on small grids in a few seconds and backs the command-line
//! `validate` subcommand; a failure means the build cannot be trusted,
//! not that a tolerance is fussy.

use ndarray::Zip;

use crate::config::{OpticalConfig, PupilGrid};
use crate::field::{
    bfp_field, collection_efficiency_ratio, radial_azimuthal_split, separation_derivative,
    DipoleOrientation, SourceSign,
};
use crate::fisher::{self, fisher_information};
use crate::imaging::{Channel, ImagePair, ImageSimulator, Modality, NormalizationGroup};
use crate::microscope::{EmitterModel, Microscope};
use crate::quantum::compute_sld_qfi_subspace;
use crate::{Error, Result};

/// Outcome of one named self-check.
#[derive(Debug, Clone)]
pub struct CheckReport {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, run: impl FnOnce() -> Result<String>) -> CheckReport {
    match run() {
        Ok(detail) => CheckReport {
            name,
            passed: true,
            detail,
        },
        Err(e) => CheckReport {
            name,
            passed: false,
            detail: e.to_string(),
        },
    }
}

fn ensure(ok: bool, detail: String) -> Result<String> {
    if ok {
        Ok(detail)
    } else {
        Err(Error::Domain(detail))
    }
}

fn tiny_cfg() -> OpticalConfig {
    OpticalConfig::desk()
        .with_grid_side(33)
        .with_image_sampling(20.0, 600.0)
}

/// Runs the whole suite. Checks are independent; all of them run even if
/// an early one fails.
pub fn run_validation() -> Vec<CheckReport> {
    vec![
        check("collection_ratio_closed_form", zeta_closed_form),
        check("field_derivative_finite_difference", field_derivative_fd),
        check("polarization_split_closed_form", split_closed_form),
        check("image_derivative_finite_difference", image_derivative_fd),
        check("detector_energy_at_commensurate_sampling", detector_energy),
        check("channel_conservation", channel_conservation),
        check("density_matrix_invariants", density_invariants),
        check("dense_and_subspace_qfi_agree", dense_vs_subspace),
        check("pixel_and_modal_qfi_agree", pixel_vs_modal),
        check("pure_state_qfi_identity", pure_state_identity),
        check("gaussian_translation_information", gaussian_oracle),
        check("information_floor_insensitive", floor_sensitivity),
        check("information_bounded_by_qfi", information_ordering),
    ]
}

/// The axial-to-transverse collection ratio has a closed form in the
/// half-aperture angle T: zeta = 2 I4 / (2 I2 - I4) with
/// I2 = T/2 - sin(2T)/4 and I4 = 3T/8 - sin(2T)/4 + sin(4T)/32.
fn zeta_closed_form() -> Result<String> {
    let cfg = OpticalConfig::desk();
    let numeric = collection_efficiency_ratio(&cfg);
    let t = cfg.pupil_radius().asin();
    let i2 = t / 2.0 - (2.0 * t).sin() / 4.0;
    let i4 = 3.0 * t / 8.0 - (2.0 * t).sin() / 4.0 + (4.0 * t).sin() / 32.0;
    let analytic = 2.0 * i4 / (2.0 * i2 - i4);
    let gap = (numeric - analytic).abs() / analytic;
    ensure(
        gap < 1e-10,
        format!("quadrature {numeric:.12}, closed form {analytic:.12}, relative gap {gap:.2e}"),
    )
}

/// Analytic separation derivative of the pupil field against a central
/// finite difference in l.
fn field_derivative_fd() -> Result<String> {
    let cfg = tiny_cfg();
    let grid = PupilGrid::new(&cfg)?;
    let k1 = cfg.wavenumber_per_nm();
    let orientation = DipoleOrientation::new(1.1, 0.6)?;
    let l = 24.0;
    let h = 1e-3;
    let field = bfp_field(&grid, k1, orientation, SourceSign::Plus.offset_nm(l));
    let analytic = separation_derivative(&field, k1, SourceSign::Plus);
    let up = bfp_field(&grid, k1, orientation, SourceSign::Plus.offset_nm(l + h));
    let down = bfp_field(&grid, k1, orientation, SourceSign::Plus.offset_nm(l - h));
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for (a, (u, d)) in analytic
        .ex
        .iter()
        .chain(analytic.ey.iter())
        .zip(up.ex.iter().chain(up.ey.iter()).zip(
            down.ex.iter().chain(down.ey.iter()),
        ))
    {
        let fd = (u - d) / (2.0 * h);
        num += (a - fd).norm_sqr();
        den += a.norm_sqr();
    }
    let gap = (num / den.max(1e-300)).sqrt();
    ensure(gap < 1e-6, format!("relative derivative gap {gap:.2e}"))
}

/// The numerically split radial and azimuthal fields against their
/// closed forms: E_r = pref (u (x mx + y my)/r - r mz) and
/// E_phi = pref (y mx - x my)/r, carried onto the offset source by the
/// common propagation phase.
fn split_closed_form() -> Result<String> {
    let cfg = tiny_cfg();
    let grid = PupilGrid::new(&cfg)?;
    let k1 = cfg.wavenumber_per_nm();
    let orientation = DipoleOrientation::new(0.9, 2.2)?;
    let [mx, my, mz] = crate::field::dipole_unit_vector(orientation);
    let l = 30.0;
    let offset = SourceSign::Plus.offset_nm(l);
    let field = bfp_field(&grid, k1, orientation, offset);
    let (radial, azimuthal) = radial_azimuthal_split(&field);

    let side = grid.side();
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    for iy in 0..side {
        let y = grid.coord(iy);
        for ix in 0..side {
            let x = grid.coord(ix);
            let r2 = x * x + y * y;
            let r = r2.sqrt();
            if r2 >= grid.radius() * grid.radius() || r < 1e-12 {
                continue;
            }
            let u = (1.0 - r2).sqrt();
            let pref = (1.0 - r2).powf(-0.25);
            let (s, c) = (-k1 * x * offset).sin_cos();
            let phase = num_complex::Complex64::new(c, s);
            let er = phase * (pref * (u * (x * mx + y * my) / r - r * mz));
            let ephi = phase * (pref * (y * mx - x * my) / r);
            worst = worst
                .max((radial.values[[iy, ix]] - er).norm())
                .max((azimuthal.values[[iy, ix]] - ephi).norm());
            scale = scale.max(er.norm()).max(ephi.norm());
        }
    }
    let gap = worst / scale.max(1e-300);
    ensure(gap < 1e-10, format!("relative split gap {gap:.2e}"))
}

/// Analytic probability derivatives against a central finite difference
/// across every channel.
fn image_derivative_fd() -> Result<String> {
    let cfg = tiny_cfg();
    let grid = PupilGrid::new(&cfg)?;
    let sim = ImageSimulator::new(&cfg, grid)?;
    let orientation = DipoleOrientation::new(1.0, 0.8)?;
    let l = 40.0;
    let h = 0.01;
    let at = sim.simulate(orientation, l)?;
    let up = sim.simulate(orientation, l + h)?;
    let down = sim.simulate(orientation, l - h)?;
    let mut worst = 0.0f64;
    for &channel in &Channel::ALL {
        let mut num = 0.0;
        let mut den = 0.0;
        Zip::from(&at.channel(channel).derivative)
            .and(&up.channel(channel).probability)
            .and(&down.channel(channel).probability)
            .for_each(|&a, &pu, &pd| {
                num += (a - (pu - pd) / (2.0 * h)).abs();
                den += a.abs();
            });
        if den > 1e-12 {
            worst = worst.max(num / den);
        }
    }
    ensure(worst < 1e-4, format!("worst channel L1 gap {worst:.2e}"))
}

/// With the image period exactly commensurate with the pupil sampling,
/// the finite detector window holds one full period of the zoomed
/// transform, so the collected group power must equal the pupil-plane
/// power times the Parseval factor (2 pi / k1)^2 of the unit-prefactor
/// tube-lens kernel. This exercises the cell-area and pixel-area
/// bookkeeping of the whole imaging chain.
fn detector_energy() -> Result<String> {
    let base = OpticalConfig::desk().with_grid_side(17);
    let probe = PupilGrid::new(&base)?;
    let k1 = base.wavenumber_per_nm();
    let q = 129usize;
    let pitch = 2.0 * std::f64::consts::PI / (k1 * probe.step() * q as f64);
    let cfg = base.with_image_sampling(pitch, pitch * q as f64);
    if cfg.image_side() != q {
        return Err(Error::Domain(format!(
            "commensurate window needs {q} pixels, config gives {}",
            cfg.image_side()
        )));
    }
    let grid = PupilGrid::new(&cfg)?;
    let orientation = DipoleOrientation::new(0.7, 0.3)?;
    let l = 18.0;
    let images = ImageSimulator::new(&cfg, grid.clone())?.simulate(orientation, l)?;
    let pupil_power = bfp_field(&grid, k1, orientation, SourceSign::Plus.offset_nm(l)).power();
    let parseval = (2.0 * std::f64::consts::PI / k1).powi(2) * pupil_power;
    let mut worst = 0.0f64;
    for group in [NormalizationGroup::Direct, NormalizationGroup::Unpolarized] {
        let gap = (images.group_sum(group) - parseval).abs() / parseval;
        worst = worst.max(gap);
    }
    ensure(
        worst < 1e-10,
        format!("worst relative energy defect {worst:.2e}"),
    )
}

/// Channel probabilities sum to one and their derivatives to zero within
/// every normalization group; the two interferometer ports conserve the
/// direct-imaging power.
fn channel_conservation() -> Result<String> {
    let scope = Microscope::new(tiny_cfg())?;
    let mut detail = String::new();
    for emitter in [
        EmitterModel::Fixed(DipoleOrientation::new(1.2, 0.4)?),
        EmitterModel::Isotropic,
    ] {
        let images = scope.images(emitter, 35.0)?;
        for group in [
            NormalizationGroup::Direct,
            NormalizationGroup::Unpolarized,
            NormalizationGroup::Polarized,
        ] {
            let mut p = 0.0;
            let mut dp = 0.0;
            for &channel in Channel::ALL.iter().filter(|c| c.group() == group) {
                p += images.channel(channel).probability.sum();
                dp += images.channel(channel).derivative.sum();
            }
            ensure(
                (p - 1.0).abs() < 1e-9,
                format!("{group:?} probability sum {p}"),
            )?;
            ensure((dp).abs() < 1e-9, format!("{group:?} derivative sum {dp}"))?;
        }
        let direct = images.group_sum(NormalizationGroup::Direct);
        let ports = images.group_sum(NormalizationGroup::Unpolarized);
        let defect = (ports - direct).abs() / direct;
        ensure(defect < 1e-10, format!("two-port defect {defect:.2e}"))?;
        detail = format!("two-port power defect {defect:.2e}");
    }
    Ok(detail)
}

/// Hermiticity, unit trace, positive spectrum, traceless derivative.
fn density_invariants() -> Result<String> {
    let scope = Microscope::new(tiny_cfg())?;
    let dm = scope.density_matrix(EmitterModel::Isotropic, 22.0)?;
    let rho = dm.matrix();
    let mut herm = 0.0f64;
    for i in 0..dm.dim() {
        for j in 0..dm.dim() {
            herm = herm.max((rho[(i, j)] - rho[(j, i)].conj()).norm());
        }
    }
    ensure(herm < 1e-12, format!("Hermitian defect {herm:.2e}"))?;
    ensure(
        (dm.trace() - 1.0).abs() < 1e-10,
        format!("trace {}", dm.trace()),
    )?;
    ensure(
        dm.trace_derivative().abs() < 1e-10,
        format!("derivative trace {}", dm.trace_derivative()),
    )?;
    let spectrum = crate::quantum::compute_sld_qfi(&dm)?.eigenvalues;
    let most_negative = spectrum.iter().cloned().fold(0.0f64, f64::min);
    ensure(
        most_negative > -1e-10,
        format!("most negative eigenvalue {most_negative:.2e}"),
    )?;
    Ok(format!(
        "Hermitian defect {herm:.2e}, floor eigenvalue {most_negative:.2e}"
    ))
}

fn dense_vs_subspace() -> Result<String> {
    let scope = Microscope::new(tiny_cfg())?;
    let mut worst = 0.0f64;
    for emitter in [
        EmitterModel::Fixed(DipoleOrientation::new(std::f64::consts::FRAC_PI_2, 0.0)?),
        EmitterModel::Isotropic,
    ] {
        let fast = scope.quantum_information(emitter, 15.0)?.qfi;
        let dense = scope.quantum_information_dense(emitter, 15.0)?.qfi;
        worst = worst.max((fast - dense).abs() / dense);
    }
    ensure(worst < 1e-6, format!("worst relative gap {worst:.2e}"))
}

fn pixel_vs_modal() -> Result<String> {
    let scope = Microscope::new(tiny_cfg())?;
    let emitter = EmitterModel::Fixed(DipoleOrientation::new(1.0, 1.0)?);
    let mut worst = 0.0f64;
    for l in [10.0, 50.0] {
        let modal = scope.quantum_information(emitter, l)?.qfi;
        let pixel = scope.pixel_basis_quantum_information(emitter, l)?.qfi;
        worst = worst.max((modal - pixel).abs() / pixel);
    }
    ensure(worst < 0.01, format!("worst relative gap {worst:.2e}"))
}

/// For a single pure component the QFI collapses to the textbook
/// overlap form 4 (<du|du> - |<u|du>|^2).
fn pure_state_identity() -> Result<String> {
    let scope = Microscope::new(tiny_cfg())?;
    let orientation = DipoleOrientation::new(0.8, 1.9)?;
    let mut components = scope.mixture(EmitterModel::Fixed(orientation), 26.0)?;
    components.truncate(1);
    components[0].weight = 1.0;
    let solved = compute_sld_qfi_subspace(&components)?.qfi;
    let u = &components[0].state;
    let du = &components[0].derivative;
    let expected = 4.0 * (du.norm_squared() - u.dotc(du).norm_sqr());
    let gap = (solved - expected).abs() / expected;
    ensure(
        gap < 1e-9,
        format!("solver {solved:.6e}, overlap form {expected:.6e}, gap {gap:.2e}"),
    )
}

/// A translated Gaussian density must score 1/(4 sigma^2).
fn gaussian_oracle() -> Result<String> {
    let sigma = 70.0;
    let pitch = 4.0;
    let side = 281;
    let norm = 1.0 / (sigma * (2.0 * std::f64::consts::PI).sqrt());
    let g = |x: f64| norm * (-0.5 * (x / sigma).powi(2)).exp();
    let coord = |i: usize| (i as f64 - (side / 2) as f64) * pitch;
    let cell = pitch * pitch;
    let probability = ndarray::Array2::from_shape_fn((side, side), |(r, c)| {
        g(coord(c)) * g(coord(r)) * cell
    });
    let derivative = ndarray::Array2::from_shape_fn((side, side), |(r, c)| {
        let x = coord(c);
        x / (2.0 * sigma * sigma) * g(x) * g(coord(r)) * cell
    });
    let info = fisher_information(&ImagePair {
        probability,
        derivative,
    })?;
    let expected = 1.0 / (4.0 * sigma * sigma);
    let gap = (info - expected).abs() / expected;
    ensure(gap < 1e-6, format!("relative gap {gap:.2e}"))
}

/// Halving the intensity floor must not move any modality total by more
/// than a part in a thousand.
fn floor_sensitivity() -> Result<String> {
    let scope = Microscope::new(tiny_cfg())?;
    let images = scope.images(EmitterModel::Fixed(DipoleOrientation::new(1.0, 0.9)?), 30.0)?;
    let mut worst = 0.0f64;
    for &channel in &Channel::ALL {
        let pair = images.channel(channel);
        let full = fisher_information(pair)?;
        if full <= 1e-12 {
            continue;
        }
        // Recompute with a floor half as deep by pre-zeroing pixels the
        // halved floor would drop.
        let peak = pair
            .probability
            .iter()
            .cloned()
            .fold(0.0f64, f64::max);
        let halved_floor = 0.5 * fisher::INTENSITY_FLOOR * peak;
        let mut masked = ImagePair {
            probability: pair.probability.clone(),
            derivative: pair.derivative.clone(),
        };
        Zip::from(&mut masked.derivative)
            .and(&masked.probability)
            .for_each(|d, &p| {
                if p <= halved_floor {
                    *d = 0.0;
                }
            });
        let halved = fisher_information(&masked)?;
        worst = worst.max((full - halved).abs() / full);
    }
    ensure(worst < 1e-3, format!("worst relative shift {worst:.2e}"))
}

/// No modality may beat the quantum bound (half-percent slack for the
/// discretization).
fn information_ordering() -> Result<String> {
    let scope = Microscope::new(tiny_cfg())?;
    let mut worst = 0.0f64;
    for emitter in [
        EmitterModel::Fixed(DipoleOrientation::new(std::f64::consts::FRAC_PI_2, 0.0)?),
        EmitterModel::Fixed(DipoleOrientation::new(1.0, 0.7)?),
        EmitterModel::Isotropic,
    ] {
        for l in [20.0, 60.0] {
            let qfi = scope.quantum_information(emitter, l)?.qfi;
            let images = scope.images(emitter, l)?;
            for modality in Modality::ALL {
                let fi = fisher::modality_information(&images, modality)?.total();
                worst = worst.max(fi / qfi);
            }
        }
    }
    ensure(
        worst <= 1.005,
        format!("largest FI / QFI ratio {worst:.6}"),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_self_check_passes() {
        let reports = run_validation();
        assert_eq!(reports.len(), 13);
        for report in &reports {
            assert!(report.passed, "{}: {}", report.name, report.detail);
        }
    }
}
