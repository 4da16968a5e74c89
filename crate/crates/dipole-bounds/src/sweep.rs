//! Sweeps of precision bounds over separation and orientation.
//!
//! A sweep point evaluates one `(emitter, separation)` pair: the quantum
//! bound from the modal state mixture and, per detection channel, the
//! classical Fisher information of the simulated images. Points are
//! independent pure computations, so they fan out across a worker pool
//! when the `parallel` feature is on; results are assembled in input
//! order either way, and both paths produce identical numbers.
//!
//! Vanishing information has no finite bound. Such entries are carried as
//! infinity and serialized as an explicit marker rather than an error, so
//! a curve that walks into Rayleigh's curse stays a single artifact.

use ndarray::Array2;

use crate::fisher::{self, channel_information};
use crate::imaging::{Channel, Modality};
use crate::microscope::{EmitterModel, Microscope};
use crate::{Error, Result};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// One separation's bounds: everything a curve row needs.
#[derive(Debug, Clone)]
pub struct BoundRow {
    /// Separation the row was evaluated at, snapped to the pixel lattice.
    pub l_nm: f64,
    /// Quantum Fisher information, nm^-2 per collected photon.
    pub qfi_per_photon_nm2: f64,
    /// Quantum precision limit sigma sqrt(N); infinite when the QFI
    /// vanishes (exactly coincident sources).
    pub sigma_qcrb_sqrt_n_nm: f64,
    /// Classical limits per modality, ordered as the curve's modality
    /// list; infinite where the modality carries no information.
    pub sigma_crb_sqrt_n_nm: Vec<f64>,
    /// Fisher information of every detection channel, ordered as
    /// `Channel::ALL`, nm^-2 per collected photon.
    pub channel_fi_per_photon_nm2: Vec<f64>,
}

/// Bound-versus-separation curve for one emitter model.
#[derive(Debug, Clone)]
pub struct BoundCurve {
    pub emitter: EmitterModel,
    pub modalities: Vec<Modality>,
    pub rows: Vec<BoundRow>,
}

/// Ratio map sigma_CRB / sigma_QCRB over dipole orientation at fixed
/// separation. Rows index theta, columns index phi.
#[derive(Debug, Clone)]
pub struct PolarMap {
    pub l_nm: f64,
    pub thetas: Vec<f64>,
    pub phis: Vec<f64>,
    pub modalities: Vec<Modality>,
    /// One theta-by-phi ratio table per modality.
    pub ratios: Vec<Array2<f64>>,
    /// Quantum limit sigma sqrt(N) per orientation, nm.
    pub sigma_qcrb_sqrt_n_nm: Array2<f64>,
}

/// Orientation lattice used by the ratio maps: theta and phi from 0 to
/// pi/2 inclusive in steps of pi/12, endpoints exact.
pub fn polar_grid() -> (Vec<f64>, Vec<f64>) {
    let axis: Vec<f64> = (0..7)
        .map(|i| (i as f64 / 6.0) * std::f64::consts::FRAC_PI_2)
        .collect();
    (axis.clone(), axis)
}

/// Information below this level is reported as unbounded.
///
/// A coincident pair has exactly zero quantum information by algebraic
/// cancellation, but the classical pixel sums retain rounding residue
/// around 1e-30 nm^-2 that would otherwise print as a finite bound of
/// astronomical size. The floor corresponds to sigma sqrt(N) of a
/// millimeter, a dozen orders above the residue and far below any
/// physically meaningful bound of this instrument.
pub const INFORMATION_FLOOR_NM2: f64 = 1e-12;

fn sigma_or_marker(information_nm2: f64) -> f64 {
    if information_nm2 > INFORMATION_FLOOR_NM2 {
        fisher::sigma_sqrt_n(information_nm2).unwrap_or(f64::INFINITY)
    } else {
        f64::INFINITY
    }
}

fn map_ordered<I, T>(items: Vec<I>, eval: impl Fn(I) -> Result<T> + Sync + Send) -> Result<Vec<T>>
where
    I: Send,
    T: Send,
{
    #[cfg(feature = "parallel")]
    {
        items.into_par_iter().map(eval).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.into_iter().map(eval).collect()
    }
}

fn bound_row(
    scope: &Microscope,
    emitter: EmitterModel,
    modalities: &[Modality],
    requested_l_nm: f64,
) -> Result<BoundRow> {
    let l_nm = scope.snap_separation(requested_l_nm);
    let qfi = scope.quantum_information(emitter, l_nm)?.qfi;
    let images = scope.images(emitter, l_nm)?;
    let channel_fi: Vec<f64> = Channel::ALL
        .iter()
        .map(|&c| channel_information(&images, c))
        .collect::<Result<_>>()?;
    let sigma_crb = modalities
        .iter()
        .map(|m| {
            let infos: Vec<f64> = m
                .channels()
                .iter()
                .map(|&c| channel_fi[c.index()])
                .collect();
            sigma_or_marker(crate::fisher::sum_pairwise(&infos))
        })
        .collect();
    Ok(BoundRow {
        l_nm,
        qfi_per_photon_nm2: qfi,
        sigma_qcrb_sqrt_n_nm: sigma_or_marker(qfi),
        sigma_crb_sqrt_n_nm: sigma_crb,
        channel_fi_per_photon_nm2: channel_fi,
    })
}

/// Evaluates bound curves over a separation list, row order matching the
/// input order. Requested separations are snapped to the pixel lattice
/// and the snapped values recorded in the rows.
pub fn run_sweep(
    scope: &Microscope,
    emitter: EmitterModel,
    modalities: &[Modality],
    separations_nm: &[f64],
) -> Result<BoundCurve> {
    if modalities.is_empty() {
        return Err(Error::InvalidConfig("no modalities selected".into()));
    }
    if separations_nm.is_empty() {
        return Err(Error::InvalidConfig("no separations given".into()));
    }
    for &l in separations_nm {
        if !(l.is_finite() && l >= 0.0) {
            return Err(Error::InvalidConfig(format!("separation {l} nm")));
        }
    }
    let rows = map_ordered(separations_nm.to_vec(), |l| {
        bound_row(scope, emitter, modalities, l)
    })?;
    Ok(BoundCurve {
        emitter,
        modalities: modalities.to_vec(),
        rows,
    })
}

/// Evaluates the ratio sigma_CRB / sigma_QCRB over an orientation grid at
/// one snapped separation. Entries with no classical information are
/// infinite; a vanishing quantum bound is an error because every ratio
/// on the map would be undefined.
pub fn run_polar_map(
    scope: &Microscope,
    modalities: &[Modality],
    thetas: &[f64],
    phis: &[f64],
    requested_l_nm: f64,
) -> Result<PolarMap> {
    if modalities.is_empty() {
        return Err(Error::InvalidConfig("no modalities selected".into()));
    }
    if thetas.is_empty() || phis.is_empty() {
        return Err(Error::InvalidConfig("empty orientation grid".into()));
    }
    let l_nm = scope.snap_separation(requested_l_nm);
    let points: Vec<(usize, usize)> = (0..thetas.len())
        .flat_map(|i| (0..phis.len()).map(move |j| (i, j)))
        .collect();
    let evaluated = map_ordered(points.clone(), |(i, j)| {
        let orientation = crate::field::DipoleOrientation::new(thetas[i], phis[j])?;
        bound_row(scope, EmitterModel::Fixed(orientation), modalities, l_nm)
    })?;

    let shape = (thetas.len(), phis.len());
    let mut sigma_qcrb = Array2::zeros(shape);
    let mut ratios = vec![Array2::zeros(shape); modalities.len()];
    for ((i, j), row) in points.into_iter().zip(evaluated) {
        if !row.sigma_qcrb_sqrt_n_nm.is_finite() {
            return Err(Error::NonPositiveInformation(row.qfi_per_photon_nm2));
        }
        sigma_qcrb[(i, j)] = row.sigma_qcrb_sqrt_n_nm;
        for (table, &sigma_crb) in ratios.iter_mut().zip(&row.sigma_crb_sqrt_n_nm) {
            table[(i, j)] = sigma_crb / row.sigma_qcrb_sqrt_n_nm;
        }
    }
    Ok(PolarMap {
        l_nm,
        thetas: thetas.to_vec(),
        phis: phis.to_vec(),
        modalities: modalities.to_vec(),
        ratios,
        sigma_qcrb_sqrt_n_nm: sigma_qcrb,
    })
}
