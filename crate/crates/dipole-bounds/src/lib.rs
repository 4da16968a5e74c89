//! Precision limits for resolving two close dipole emitters.
//!
//! Two equally bright, identically oriented emitters sit at `±l/2` on the
//! x axis of a high-NA microscope. The library models the vectorial field
//! they produce in the back focal plane, propagates it through one of three
//! measurements (direct imaging, image-inversion interferometry, and its
//! radially/azimuthally resolved variant), and computes both the classical
//! Fisher information of each photon-counting measurement and the quantum
//! Fisher information of the collected one-photon state. The headline
//! numbers are Cramér-Rao bounds on the separation estimate, reported as
//! `σ·√N` so they are independent of the photon budget.
//!
//! Module map:
//!
//! * [`config`]: optical parameters, pupil sampling, detector geometry.
//! * [`field`]: vectorial back-focal-plane fields of a displaced dipole.
//! * [`czt`]: chirp-z transform for pupil-to-detector propagation at an
//!   arbitrary detector pitch.
//! * [`zernike`]: orthonormal pupil modes and modal state vectors.
//! * [`quantum`]: density matrices, symmetric logarithmic derivative, QFI.
//! * [`imaging`]: tube-lens propagation and the interferometric channels.
//! * [`fisher`]: per-pixel Fisher information of the simulated images.
//! * [`microscope`]: one configured instrument tying the layers together.
//! * [`sweep`]: separation sweeps and orientation maps over all bounds.
//! * [`export`]: plain-text serialization of curves, maps, and images.
//! * [`validate`]: self-checks that recompute key quantities two ways.
//!
//! With the default `parallel` feature the sweep drivers fan out over a
//! rayon pool; disabling it gives a bit-identical sequential build.

pub mod config;
pub mod czt;
pub mod export;
pub mod field;
pub mod fisher;
pub mod imaging;
pub mod microscope;
pub mod quantum;
pub mod sweep;
pub mod validate;
pub mod zernike;

use thiserror::Error as ThisError;

/// Failure modes surfaced by the library.
#[derive(Debug, ThisError)]
pub enum Error {
    /// A configuration value is out of range or inconsistent.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    /// A numeric argument lies outside the physical domain.
    #[error("domain error: {0}")]
    Domain(String),
    /// Two objects that must share a grid or basis do not.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    /// The eigensolver failed to converge.
    #[error("eigendecomposition did not converge")]
    EigenFailure,
    /// Fisher information was not positive, so no finite bound exists.
    #[error("non-positive Fisher information {0}; the bound diverges")]
    NonPositiveInformation(f64),
    /// A probability came out negative beyond rounding tolerance.
    #[error("negative probability {0} in a density computation")]
    NegativeDensity(f64),
    /// The requested detector lattice exceeds the configured limit.
    #[error("image lattice of {requested} samples per side exceeds limit {limit}")]
    LatticeOverflow { requested: usize, limit: usize },
    /// An output file could not be written.
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub use config::{OpticalConfig, PupilGrid};
pub use export::{
    bound_curve_csv, bound_curve_svg, polar_map_csv, polar_map_svg, write_channel_images,
    write_pfm, write_text, OutputGuard,
};
pub use field::{
    bfp_field, collection_efficiency_ratio, dipole_unit_vector, green_tensor,
    radial_azimuthal_split, separation_derivative, DipoleOrientation, PupilField,
    ScalarPupilField, SourceSign,
};
pub use fisher::{
    channel_information, crb, fisher_information, modality_information, sigma_sqrt_n,
    FisherBreakdown, INTENSITY_FLOOR, NULL_PORT_FLOOR,
};
pub use imaging::{Channel, ImagePair, ImageSet, ImageSimulator, Modality, NormalizationGroup};
pub use microscope::{EmitterModel, Microscope};
pub use quantum::{
    compute_sld_qfi, compute_sld_qfi_subspace, qcrb, unit_pair_from_raw, unit_state_and_derivative,
    DensityMatrix, MixtureComponent, SldResult,
};
pub use sweep::{
    polar_grid, run_polar_map, run_sweep, BoundCurve, BoundRow, PolarMap, INFORMATION_FLOOR_NM2,
};
pub use validate::{run_validation, CheckReport};
pub use zernike::{ModalState, ZernikeBasis, ZernikeIndex};

/// Caps the rayon pool used by the sweep drivers. Returns whether the pool
/// size was applied; calling it after the pool is built has no effect, and
/// the sequential build accepts the call as a no-op.
#[cfg(feature = "parallel")]
pub fn set_worker_threads(threads: usize) -> bool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .is_ok()
}

#[cfg(not(feature = "parallel"))]
pub fn set_worker_threads(_threads: usize) -> bool {
    false
}
