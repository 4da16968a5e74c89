//! One assembled instrument: pupil grid, modal basis, detector model.
//!
//! A `Microscope` owns everything that is expensive to build and constant
//! across evaluation points: the discrete pupil, the orthonormalized
//! Zernike basis for quantum bounds, the zoom transforms that form
//! detector images, and the collection-efficiency ratio weighting the
//! isotropic mixture. Evaluating a `(emitter, separation)` point borrows
//! the instrument immutably and is pure, so points parallelize freely.
//!
//! Quantum bounds live on the collected one-photon state. Each source
//! contributes a pure state: the pupil field, compressed onto the modal
//! basis and renormalized, with the separation derivative corrected onto
//! the unit sphere. The two sources mix with equal weight; an isotropic
//! emitter additionally mixes dipole orientations x, y, z with weights
//! (1, 1, zeta) / (2 + zeta), zeta being the relative collection
//! efficiency of an axial dipole.

use std::sync::Arc;

use nalgebra::DVector;
use num_complex::Complex64;

use crate::config::{OpticalConfig, PupilGrid};
use crate::field::{
    bfp_field, collection_efficiency_ratio, separation_derivative, DipoleOrientation, PupilField,
    SourceSign,
};
use crate::fisher::{self, FisherBreakdown};
use crate::imaging::{ImageSet, ImageSimulator, Modality};
use crate::quantum::{
    compute_sld_qfi, compute_sld_qfi_subspace, unit_pair_from_raw, unit_state_and_derivative,
    DensityMatrix, MixtureComponent, SldResult,
};
use crate::zernike::ZernikeBasis;
use crate::Result;

/// Source model for the emitting pair. Both emitters always share the
/// model; the pair is separated by `l` along x and centered on the axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EmitterModel {
    /// Both dipoles share one fixed orientation.
    Fixed(DipoleOrientation),
    /// Each dipole is an incoherent equal-rate mixture of x, y, z
    /// orientations; collection weights the axial constituent by zeta.
    Isotropic,
}

impl EmitterModel {
    pub fn label(&self) -> String {
        match self {
            EmitterModel::Fixed(o) => format!("theta{:.4}_phi{:.4}", o.theta(), o.phi()),
            EmitterModel::Isotropic => "isotropic".into(),
        }
    }
}

/// Fully assembled imaging system, built once per configuration.
pub struct Microscope {
    cfg: OpticalConfig,
    grid: Arc<PupilGrid>,
    basis: ZernikeBasis,
    simulator: ImageSimulator,
    zeta: f64,
}

impl Microscope {
    pub fn new(cfg: OpticalConfig) -> Result<Self> {
        cfg.validate()?;
        let grid = PupilGrid::new(&cfg)?;
        let basis = ZernikeBasis::new(&grid, cfg.zernike_n_max)?;
        let simulator = ImageSimulator::new(&cfg, Arc::clone(&grid))?;
        let zeta = collection_efficiency_ratio(&cfg);
        Ok(Self {
            cfg,
            grid,
            basis,
            simulator,
            zeta,
        })
    }

    pub fn config(&self) -> &OpticalConfig {
        &self.cfg
    }

    pub fn grid(&self) -> &Arc<PupilGrid> {
        &self.grid
    }

    pub fn basis(&self) -> &ZernikeBasis {
        &self.basis
    }

    pub fn simulator(&self) -> &ImageSimulator {
        &self.simulator
    }

    /// Collection efficiency of an axial dipole relative to a transverse
    /// one; the isotropic mixing weight.
    pub fn zeta(&self) -> f64 {
        self.zeta
    }

    /// Detector pixel pitch in object-plane nanometers.
    pub fn pixel_pitch_nm(&self) -> f64 {
        self.simulator.pitch_nm()
    }

    /// Nearest separation representable on the detector pixel lattice.
    ///
    /// Sweeps and maps evaluate at snapped separations and record the
    /// snapped value, so a nominal 10 nm request runs at whatever the
    /// lattice actually offers.
    pub fn snap_separation(&self, l_nm: f64) -> f64 {
        let pitch = self.simulator.pitch_nm();
        (l_nm / pitch).round() * pitch
    }

    /// Detection-channel probability images and their l-derivatives.
    pub fn images(&self, emitter: EmitterModel, l_nm: f64) -> Result<ImageSet> {
        match emitter {
            EmitterModel::Fixed(orientation) => self.simulator.simulate(orientation, l_nm),
            EmitterModel::Isotropic => {
                let x = self.simulator.simulate(DipoleOrientation::x_axis(), l_nm)?;
                let y = self.simulator.simulate(DipoleOrientation::y_axis(), l_nm)?;
                let z = self.simulator.simulate(DipoleOrientation::z_axis(), l_nm)?;
                let w = 1.0 / (2.0 + self.zeta);
                ImageSet::convex_combination(&[(w, &x), (w, &y), (self.zeta * w, &z)])
            }
        }
    }

    /// Pure constituents of the collected one-photon state.
    ///
    /// The pupil field of the source at `-l/2` is the entrywise complex
    /// conjugate of the field at `+l/2` (real dipole moment, real
    /// collection tensor, opposite propagation phase), and the modal
    /// basis is real, so the minus-source projection is the conjugate of
    /// the plus-source one. Each orientation therefore costs two
    /// projections, not four.
    pub fn mixture(&self, emitter: EmitterModel, l_nm: f64) -> Result<Vec<MixtureComponent>> {
        match emitter {
            EmitterModel::Fixed(orientation) => self.oriented_pair(orientation, l_nm, 0.5),
            EmitterModel::Isotropic => {
                let transverse = 1.0 / (4.0 + 2.0 * self.zeta);
                let axial = self.zeta * transverse;
                let mut components =
                    self.oriented_pair(DipoleOrientation::x_axis(), l_nm, transverse)?;
                components.extend(self.oriented_pair(
                    DipoleOrientation::y_axis(),
                    l_nm,
                    transverse,
                )?);
                components.extend(self.oriented_pair(DipoleOrientation::z_axis(), l_nm, axial)?);
                Ok(components)
            }
        }
    }

    fn oriented_pair(
        &self,
        orientation: DipoleOrientation,
        l_nm: f64,
        weight: f64,
    ) -> Result<Vec<MixtureComponent>> {
        let k1 = self.cfg.wavenumber_per_nm();
        let offset = SourceSign::Plus.offset_nm(l_nm);
        let field = bfp_field(&self.grid, k1, orientation, offset);
        let derivative = separation_derivative(&field, k1, SourceSign::Plus);
        let state = self.basis.project(&field)?;
        let derivative_state = self.basis.project(&derivative)?;
        let (u, du) = unit_state_and_derivative(&state, &derivative_state)?;
        let (u_minus, du_minus) = (u.map(|z| z.conj()), du.map(|z| z.conj()));
        Ok(vec![
            MixtureComponent {
                weight,
                state: u,
                derivative: du,
            },
            MixtureComponent {
                weight,
                state: u_minus,
                derivative: du_minus,
            },
        ])
    }

    /// Quantum Fisher information via the span of the constituent states
    /// and their derivatives. Exact for these low-rank mixtures and far
    /// cheaper than dense diagonalization inside sweeps.
    pub fn quantum_information(&self, emitter: EmitterModel, l_nm: f64) -> Result<SldResult> {
        compute_sld_qfi_subspace(&self.mixture(emitter, l_nm)?)
    }

    /// Dense-diagonalization route over the full modal space; the
    /// cross-check for `quantum_information`.
    pub fn quantum_information_dense(&self, emitter: EmitterModel, l_nm: f64) -> Result<SldResult> {
        compute_sld_qfi(&self.density_matrix(emitter, l_nm)?)
    }

    /// Collected one-photon density matrix and its analytic l-derivative
    /// in the modal basis.
    pub fn density_matrix(&self, emitter: EmitterModel, l_nm: f64) -> Result<DensityMatrix> {
        DensityMatrix::from_mixture(&self.mixture(emitter, l_nm)?)
    }

    /// Classical Fisher information of one modality at one point.
    pub fn modality_fisher(
        &self,
        emitter: EmitterModel,
        l_nm: f64,
        modality: Modality,
    ) -> Result<FisherBreakdown> {
        fisher::modality_information(&self.images(emitter, l_nm)?, modality)
    }

    /// Quantum Fisher information computed directly in the discretized
    /// pupil position basis, bypassing the modal compression entirely.
    ///
    /// Pixel samples scaled by the square root of the cell area form an
    /// orthonormal discretization, so the same low-rank span algebra
    /// applies. Cost scales with the support size; this is an oracle for
    /// small grids, bounding the compression error of the modal route.
    pub fn pixel_basis_quantum_information(
        &self,
        emitter: EmitterModel,
        l_nm: f64,
    ) -> Result<SldResult> {
        let components = match emitter {
            EmitterModel::Fixed(orientation) => self.pixel_pair(orientation, l_nm, 0.5)?,
            EmitterModel::Isotropic => {
                let transverse = 1.0 / (4.0 + 2.0 * self.zeta);
                let axial = self.zeta * transverse;
                let mut components =
                    self.pixel_pair(DipoleOrientation::x_axis(), l_nm, transverse)?;
                components.extend(self.pixel_pair(DipoleOrientation::y_axis(), l_nm, transverse)?);
                components.extend(self.pixel_pair(DipoleOrientation::z_axis(), l_nm, axial)?);
                components
            }
        };
        compute_sld_qfi_subspace(&components)
    }

    fn pixel_pair(
        &self,
        orientation: DipoleOrientation,
        l_nm: f64,
        weight: f64,
    ) -> Result<Vec<MixtureComponent>> {
        let k1 = self.cfg.wavenumber_per_nm();
        let offset = SourceSign::Plus.offset_nm(l_nm);
        let field = bfp_field(&self.grid, k1, orientation, offset);
        let derivative = separation_derivative(&field, k1, SourceSign::Plus);
        let support = self.grid.support_indices();
        let sqrt_cell = self.grid.cell_area().sqrt();
        let embed = |f: &PupilField| -> DVector<Complex64> {
            DVector::from_iterator(
                2 * support.len(),
                support
                    .iter()
                    .map(|&(iy, ix)| f.ex[[iy, ix]] * sqrt_cell)
                    .chain(support.iter().map(|&(iy, ix)| f.ey[[iy, ix]] * sqrt_cell)),
            )
        };
        let (u, du) = unit_pair_from_raw(&embed(&field), &embed(&derivative))?;
        let (u_minus, du_minus) = (u.map(|z| z.conj()), du.map(|z| z.conj()));
        Ok(vec![
            MixtureComponent {
                weight,
                state: u,
                derivative: du,
            },
            MixtureComponent {
                weight,
                state: u_minus,
                derivative: du_minus,
            },
        ])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{Channel, NormalizationGroup};
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_3};

    fn tiny() -> Microscope {
        let cfg = OpticalConfig::desk()
            .with_grid_side(33)
            .with_image_sampling(20.0, 600.0);
        Microscope::new(cfg).unwrap()
    }

    #[test]
    fn conjugate_shortcut_matches_explicit_minus_source() {
        let scope = tiny();
        let orientation = DipoleOrientation::new(FRAC_PI_3, 0.9).unwrap();
        let l = 37.0;
        let components = scope.mixture(EmitterModel::Fixed(orientation), l).unwrap();

        let k1 = scope.config().wavenumber_per_nm();
        let field = bfp_field(
            scope.grid(),
            k1,
            orientation,
            SourceSign::Minus.offset_nm(l),
        );
        let derivative = separation_derivative(&field, k1, SourceSign::Minus);
        let state = scope.basis().project(&field).unwrap();
        let derivative_state = scope.basis().project(&derivative).unwrap();
        let (u, du) = unit_state_and_derivative(&state, &derivative_state).unwrap();

        let gap = (&components[1].state - &u).norm();
        let dgap = (&components[1].derivative - &du).norm();
        assert!(gap <= 1e-14 * u.norm(), "state gap {gap}");
        assert!(dgap <= 1e-14 * du.norm().max(1.0), "derivative gap {dgap}");
    }

    #[test]
    fn fixed_mixture_is_two_balanced_unit_states() {
        let scope = tiny();
        let orientation = DipoleOrientation::new(FRAC_PI_2, 0.0).unwrap();
        let components = scope.mixture(EmitterModel::Fixed(orientation), 24.0).unwrap();
        assert_eq!(components.len(), 2);
        for c in &components {
            assert!((c.weight - 0.5).abs() < 1e-15);
            assert!((c.state.norm() - 1.0).abs() < 1e-12);
            assert!(c.state.dotc(&c.derivative).re.abs() < 1e-12);
        }
    }

    #[test]
    fn isotropic_mixture_weights_follow_collection_efficiency() {
        let scope = tiny();
        let components = scope.mixture(EmitterModel::Isotropic, 24.0).unwrap();
        assert_eq!(components.len(), 6);
        let total: f64 = components.iter().map(|c| c.weight).sum();
        assert!((total - 1.0).abs() < 1e-12, "weights sum to {total}");
        let zeta = scope.zeta();
        assert!((components[4].weight / components[0].weight - zeta).abs() < 1e-12);
    }

    #[test]
    fn isotropic_images_stay_normalized() {
        let scope = tiny();
        let images = scope.images(EmitterModel::Isotropic, 24.0).unwrap();
        for group in [
            NormalizationGroup::Direct,
            NormalizationGroup::Unpolarized,
            NormalizationGroup::Polarized,
        ] {
            let mut p_total = 0.0;
            let mut d_total = 0.0;
            for &channel in &Channel::ALL {
                if channel.group() != group {
                    continue;
                }
                let pair = images.channel(channel);
                p_total += pair.probability.sum();
                d_total += pair.derivative.sum();
            }
            assert!(
                (p_total - 1.0).abs() < 1e-9,
                "{group:?} probabilities sum to {p_total}"
            );
            assert!(d_total.abs() < 1e-9, "{group:?} derivatives sum to {d_total}");
        }
    }

    #[test]
    fn subspace_and_dense_information_agree() {
        let scope = tiny();
        for emitter in [
            EmitterModel::Fixed(DipoleOrientation::new(FRAC_PI_3, FRAC_PI_3).unwrap()),
            EmitterModel::Isotropic,
        ] {
            let fast = scope.quantum_information(emitter, 20.0).unwrap();
            let dense = scope.quantum_information_dense(emitter, 20.0).unwrap();
            assert!(fast.qfi > 0.0);
            let gap = (fast.qfi - dense.qfi).abs();
            assert!(
                gap <= 1e-8 * dense.qfi,
                "{} subspace {} versus dense {}",
                emitter.label(),
                fast.qfi,
                dense.qfi
            );
        }
    }

    #[test]
    fn pixel_and_modal_bases_agree_on_tiny_grids() {
        let scope = tiny();
        let emitter = EmitterModel::Fixed(DipoleOrientation::new(FRAC_PI_3, FRAC_PI_3).unwrap());
        for l in [10.0, 50.0] {
            let modal = scope.quantum_information(emitter, l).unwrap().qfi;
            let pixel = scope.pixel_basis_quantum_information(emitter, l).unwrap().qfi;
            let gap = (modal - pixel).abs();
            assert!(
                gap <= 0.01 * pixel,
                "l = {l}: modal {modal} versus pixel {pixel}"
            );
        }
    }

    #[test]
    fn density_matrix_satisfies_state_invariants() {
        let scope = tiny();
        let dm = scope.density_matrix(EmitterModel::Isotropic, 15.0).unwrap();
        assert!((dm.trace() - 1.0).abs() < 1e-10);
        assert!(dm.trace_derivative().abs() < 1e-10);
    }

    #[test]
    fn separations_snap_to_the_pixel_lattice() {
        let scope = tiny();
        // 20 nm pixels in the tiny profile.
        assert_eq!(scope.snap_separation(9.0), 0.0);
        assert_eq!(scope.snap_separation(12.0), 20.0);
        assert_eq!(scope.snap_separation(47.0), 40.0);
        assert_eq!(scope.snap_separation(75.0), 80.0);
    }

    #[test]
    fn modality_fisher_never_exceeds_quantum_information() {
        let scope = tiny();
        let emitter = EmitterModel::Fixed(DipoleOrientation::new(FRAC_PI_3, FRAC_PI_3).unwrap());
        let l = 40.0;
        let qfi = scope.quantum_information(emitter, l).unwrap().qfi;
        for modality in Modality::ALL {
            let fi = scope.modality_fisher(emitter, l, modality).unwrap().total();
            assert!(
                fi <= qfi * 1.005,
                "{} information {} beats the quantum limit {}",
                modality.label(),
                fi,
                qfi
            );
        }
    }
}
