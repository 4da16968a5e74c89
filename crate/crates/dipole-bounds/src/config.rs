//! Optical parameters and the discrete pupil-plane grid.
//!
//! Pupil coordinates are unitless: a point at radius `r` in the back focal
//! plane corresponds to a ray leaving the emitter at polar angle `asin(r)`
//! in the immersion medium, so the aperture occupies `r <= NA / n`. The grid
//! is a square of `pupil_grid_side` samples per axis with the aperture disk
//! sized to cover `support_fill` of the total grid area; samples are cell
//! centers and the center sample lies exactly on the optical axis.

use crate::{Error, Result};
use std::sync::Arc;

/// Physical and discretization parameters of the imaging system.
#[derive(Debug, Clone, PartialEq)]
pub struct OpticalConfig {
    /// Numerical aperture of the objective.
    pub numerical_aperture: f64,
    /// Refractive index of the immersion medium (must exceed the NA).
    pub immersion_index: f64,
    /// Vacuum emission wavelength in nanometers.
    pub vacuum_wavelength_nm: f64,
    /// Lateral magnification of the tube-lens image.
    pub magnification: f64,
    /// Samples per axis of the square pupil grid (odd).
    pub pupil_grid_side: usize,
    /// Fraction of the grid area covered by the aperture disk.
    pub support_fill: f64,
    /// Detector pixel pitch, projected back to object space, in nanometers.
    pub image_pixel_object_nm: f64,
    /// Side length of the retained image window in object-space nanometers.
    pub image_fov_object_nm: f64,
    /// Highest Zernike radial order kept in the modal expansion.
    pub zernike_n_max: u32,
}

/// Image lattices beyond this many samples per axis are rejected.
pub const MAX_IMAGE_SIDE: usize = 1 << 15;

impl OpticalConfig {
    /// Full-scale parameter set: 2049-point pupil grid.
    pub fn paper() -> Self {
        Self {
            pupil_grid_side: 2049,
            ..Self::desk()
        }
    }

    /// Workstation-scale parameter set: identical optics on a 513-point grid.
    pub fn desk() -> Self {
        Self {
            numerical_aperture: 1.45,
            immersion_index: 1.518,
            vacuum_wavelength_nm: 670.0,
            magnification: 100.0,
            pupil_grid_side: 513,
            support_fill: 0.60,
            image_pixel_object_nm: 5.0,
            image_fov_object_nm: 4000.0,
            zernike_n_max: 8,
        }
    }

    /// Same configuration with a different pupil grid, for convergence work.
    pub fn with_grid_side(mut self, side: usize) -> Self {
        self.pupil_grid_side = side;
        self
    }

    /// Same configuration with a different detector sampling, both in
    /// object-plane nanometers.
    pub fn with_image_sampling(mut self, pixel_nm: f64, fov_nm: f64) -> Self {
        self.image_pixel_object_nm = pixel_nm;
        self.image_fov_object_nm = fov_nm;
        self
    }

    /// Aperture radius in unitless pupil coordinates, `NA / n`.
    pub fn pupil_radius(&self) -> f64 {
        self.numerical_aperture / self.immersion_index
    }

    /// Wavenumber in the immersion medium, radians per nanometer.
    pub fn wavenumber_per_nm(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.immersion_index / self.vacuum_wavelength_nm
    }

    /// Samples per axis of the retained image window (odd, pixel on axis).
    pub fn image_side(&self) -> usize {
        let half = (self.image_fov_object_nm / (2.0 * self.image_pixel_object_nm)).floor();
        2 * (half as usize) + 1
    }

    /// Checks mutual consistency of all parameters.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.numerical_aperture.is_finite() && self.numerical_aperture > 0.0) {
            return fail(format!("numerical aperture {}", self.numerical_aperture));
        }
        if !(self.immersion_index.is_finite() && self.immersion_index > self.numerical_aperture) {
            return fail(format!(
                "immersion index {} must exceed the numerical aperture {}",
                self.immersion_index, self.numerical_aperture
            ));
        }
        if !(self.vacuum_wavelength_nm.is_finite() && self.vacuum_wavelength_nm > 0.0) {
            return fail(format!("wavelength {} nm", self.vacuum_wavelength_nm));
        }
        if !(self.magnification.is_finite() && self.magnification > 0.0) {
            return fail(format!("magnification {}", self.magnification));
        }
        if self.pupil_grid_side < 3 || self.pupil_grid_side.is_multiple_of(2) {
            return fail(format!(
                "pupil grid side {} must be odd and at least 3",
                self.pupil_grid_side
            ));
        }
        if !(self.support_fill > 0.0 && self.support_fill < 1.0) {
            return fail(format!("support fill {}", self.support_fill));
        }
        if !(self.image_pixel_object_nm.is_finite() && self.image_pixel_object_nm > 0.0) {
            return fail(format!("image pixel {} nm", self.image_pixel_object_nm));
        }
        if !(self.image_fov_object_nm.is_finite()
            && self.image_fov_object_nm >= 2.0 * self.image_pixel_object_nm)
        {
            return fail(format!(
                "image field of view {} nm is below two pixels",
                self.image_fov_object_nm
            ));
        }
        if self.image_side() > MAX_IMAGE_SIDE {
            return Err(Error::LatticeOverflow {
                requested: self.image_side(),
                limit: MAX_IMAGE_SIDE,
            });
        }
        if self.zernike_n_max < 1 || self.zernike_n_max > 40 {
            return fail(format!("Zernike order cap {}", self.zernike_n_max));
        }
        Ok(())
    }
}

/// Discrete sampling of the pupil plane.
///
/// `coord(i)` is exactly `-coord(side - 1 - i)`, so coordinate inversions
/// used by the interferometer are index permutations with no rounding.
#[derive(Debug)]
pub struct PupilGrid {
    side: usize,
    step: f64,
    radius: f64,
    coords: Vec<f64>,
}

impl PupilGrid {
    pub fn new(cfg: &OpticalConfig) -> Result<Arc<Self>> {
        cfg.validate()?;
        let radius = cfg.pupil_radius();
        // Disk area = support_fill * (side * step)^2 fixes the sample step.
        let extent = radius * (std::f64::consts::PI / cfg.support_fill).sqrt();
        let side = cfg.pupil_grid_side;
        let step = extent / side as f64;
        let center = (side / 2) as f64;
        let coords = (0..side).map(|i| (i as f64 - center) * step).collect();
        Ok(Arc::new(Self {
            side,
            step,
            radius,
            coords,
        }))
    }

    /// Samples per axis.
    pub fn side(&self) -> usize {
        self.side
    }

    /// Sample spacing in unitless pupil coordinates.
    pub fn step(&self) -> f64 {
        self.step
    }

    /// Quadrature weight of one cell.
    pub fn cell_area(&self) -> f64 {
        self.step * self.step
    }

    /// Aperture radius in unitless pupil coordinates.
    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Centered coordinate of sample `i` along either axis.
    pub fn coord(&self, i: usize) -> f64 {
        self.coords[i]
    }

    /// All sample coordinates along one axis.
    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// Index of the mirrored sample, `coord(flip(i)) == -coord(i)` exactly.
    pub fn flip(&self, i: usize) -> usize {
        self.side - 1 - i
    }

    /// Whether the cell center at `(iy, ix)` lies inside the aperture.
    pub fn in_support(&self, iy: usize, ix: usize) -> bool {
        let x = self.coords[ix];
        let y = self.coords[iy];
        x * x + y * y <= self.radius * self.radius
    }

    /// Row-major list of in-aperture sample indices.
    pub fn support_indices(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for iy in 0..self.side {
            for ix in 0..self.side {
                if self.in_support(iy, ix) {
                    out.push((iy, ix));
                }
            }
        }
        out
    }
}
