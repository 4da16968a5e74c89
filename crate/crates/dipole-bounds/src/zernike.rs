//! Orthonormal pupil modes and modal representations of vector fields.
//!
//! Quantum bounds need the collected one-photon states as vectors in a
//! finite orthonormal basis. We expand each polarization of the pupil field
//! in Zernike modes over the aperture disk: the real modes
//! \(Z_n^m(u,\phi) = R_n^{|m|}(u)\,\{\cos,\sin\}(m\phi)\) on the unit-scaled
//! radius `u = r / r_max`, with `n ≤ n_max` and `n - |m|` even.
//!
//! The analytic modes are only orthogonal under the continuum disk measure,
//! so after sampling we re-orthonormalize them against the discrete inner
//! product `⟨f, g⟩ = Σ f g ΔA` over the masked samples (modified
//! Gram-Schmidt, two passes). Projections onto the result are then exactly
//! consistent with the grid sums used everywhere else: the squared norm of
//! a coefficient vector is the field power captured by the basis.

use crate::config::PupilGrid;
use crate::field::PupilField;
use crate::{Error, Result};
use nalgebra::DVector;
use ndarray::{Array2, ArrayView1};
use num_complex::Complex64;
use std::sync::Arc;

/// Radial order `n` and signed azimuthal order `m` of one mode.
///
/// Negative `m` selects the `sin` branch, positive the `cos` branch, zero is
/// purely radial. Valid pairs satisfy `|m| ≤ n` with `n - |m|` even.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ZernikeIndex {
    pub n: u32,
    pub m: i32,
}

impl ZernikeIndex {
    /// All indices with radial order up to `n_max`, sorted by `n` then `m`.
    pub fn all(n_max: u32) -> Vec<ZernikeIndex> {
        let mut out = Vec::new();
        for n in 0..=n_max {
            let mut m = -(n as i32);
            while m <= n as i32 {
                out.push(ZernikeIndex { n, m });
                m += 2;
            }
        }
        out
    }

    /// Radial polynomial `R_n^{|m|}(u)` as the alternating factorial sum.
    pub fn radial(&self, u: f64) -> f64 {
        let n = self.n as i64;
        let m = self.m.unsigned_abs() as i64;
        debug_assert!(m <= n && (n - m) % 2 == 0);
        let half_diff = (n - m) / 2;
        let half_sum = (n + m) / 2;
        let mut acc = 0.0;
        for k in 0..=half_diff {
            let term = factorial(n - k)
                / (factorial(k) * factorial(half_sum - k) * factorial(half_diff - k));
            let signed = if k % 2 == 0 { term } else { -term };
            acc += signed * u.powi((n - 2 * k) as i32);
        }
        acc
    }

    /// Mode shape before discrete orthonormalization.
    pub fn evaluate(&self, u: f64, phi: f64) -> f64 {
        let angular = match self.m.cmp(&0) {
            std::cmp::Ordering::Less => (self.m.unsigned_abs() as f64 * phi).sin(),
            std::cmp::Ordering::Equal => 1.0,
            std::cmp::Ordering::Greater => (self.m as f64 * phi).cos(),
        };
        self.radial(u) * angular
    }
}

fn factorial(k: i64) -> f64 {
    debug_assert!((0..=170).contains(&k));
    (1..=k).map(|v| v as f64).product()
}

/// Discretely orthonormal Zernike modes on a pupil grid.
pub struct ZernikeBasis {
    grid: Arc<PupilGrid>,
    indices: Vec<ZernikeIndex>,
    support: Vec<(usize, usize)>,
    /// Row `j` holds mode `j` over `support`, orthonormal under `Σ f g ΔA`.
    modes: Array2<f64>,
}

impl ZernikeBasis {
    pub fn new(grid: &Arc<PupilGrid>, n_max: u32) -> Result<Self> {
        let indices = ZernikeIndex::all(n_max);
        let support = grid.support_indices();
        if support.len() < indices.len() {
            return Err(Error::InvalidConfig(format!(
                "{} aperture samples cannot carry {} modes",
                support.len(),
                indices.len()
            )));
        }
        let cell = grid.cell_area();
        let inv_r_max = 1.0 / grid.radius();

        let mut modes = Array2::<f64>::zeros((indices.len(), support.len()));
        for (j, idx) in indices.iter().enumerate() {
            for (s, &(iy, ix)) in support.iter().enumerate() {
                let (x, y) = (grid.coord(ix), grid.coord(iy));
                let u = (x * x + y * y).sqrt() * inv_r_max;
                modes[(j, s)] = idx.evaluate(u, y.atan2(x));
            }
        }

        // Modified Gram-Schmidt, two passes, against the ΔA-weighted dot
        // product. One pass leaves O(κ·ε) cross terms for the high orders;
        // the second brings the Gram defect to rounding level.
        for (j, idx) in indices.iter().enumerate() {
            for _ in 0..2 {
                for k in 0..j {
                    let overlap = weighted_dot(&modes, k, j, cell);
                    let prev = modes.row(k).to_owned();
                    let mut row = modes.row_mut(j);
                    row.iter_mut()
                        .zip(prev.iter())
                        .for_each(|(v, p)| *v -= overlap * p);
                }
            }
            let norm = weighted_dot(&modes, j, j, cell).sqrt();
            if !(norm.is_finite() && norm > 1e-12) {
                return Err(Error::InvalidConfig(format!(
                    "mode ({}, {}) is numerically dependent on this grid",
                    idx.n, idx.m
                )));
            }
            modes.row_mut(j).iter_mut().for_each(|v| *v /= norm);
        }

        Ok(Self {
            grid: Arc::clone(grid),
            indices,
            support,
            modes,
        })
    }

    pub fn grid(&self) -> &Arc<PupilGrid> {
        &self.grid
    }

    pub fn indices(&self) -> &[ZernikeIndex] {
        &self.indices
    }

    pub fn modes_per_polarization(&self) -> usize {
        self.indices.len()
    }

    /// Dimension of a modal state vector: both polarizations stacked.
    pub fn state_dim(&self) -> usize {
        2 * self.indices.len()
    }

    /// Aperture samples the basis lives on, as `(row, column)` grid indices.
    pub fn support(&self) -> &[(usize, usize)] {
        &self.support
    }

    /// Orthonormalized samples of mode `j` over [`Self::support`].
    pub fn mode(&self, j: usize) -> ArrayView1<'_, f64> {
        self.modes.row(j)
    }

    /// Expands both polarizations of `field` in the basis.
    ///
    /// Coefficient `j` holds the x polarization, `j + modes` the y
    /// polarization. Projection is linear in the field, so derivatives of
    /// fields project to derivatives of coefficients.
    pub fn project(&self, field: &PupilField) -> Result<ModalState> {
        if !Arc::ptr_eq(field.grid(), &self.grid) {
            return Err(Error::DimensionMismatch(
                "field and basis use different pupil grids".into(),
            ));
        }
        let m = self.indices.len();
        let cell = self.grid.cell_area();
        let mut coeffs = DVector::<Complex64>::zeros(2 * m);
        for j in 0..m {
            let row = self.modes.row(j);
            let mut cx = Complex64::default();
            let mut cy = Complex64::default();
            for (s, &(iy, ix)) in self.support.iter().enumerate() {
                let w = row[s];
                cx += field.ex[(iy, ix)] * w;
                cy += field.ey[(iy, ix)] * w;
            }
            coeffs[j] = cx * cell;
            coeffs[m + j] = cy * cell;
        }
        let norm = coeffs.norm();
        Ok(ModalState { coeffs, norm })
    }
}

fn weighted_dot(modes: &Array2<f64>, a: usize, b: usize, cell: f64) -> f64 {
    let (ra, rb) = (modes.row(a), modes.row(b));
    let dot: f64 = ra.iter().zip(rb.iter()).map(|(x, y)| x * y).sum();
    dot * cell
}

/// A pupil field expanded in a [`ZernikeBasis`]: raw projection
/// coefficients plus their Euclidean norm.
///
/// The squared norm is the field power captured by the basis, so comparing
/// it with the grid-sum power measures truncation loss.
#[derive(Debug, Clone)]
pub struct ModalState {
    coeffs: DVector<Complex64>,
    norm: f64,
}

impl ModalState {
    #[cfg(test)]
    pub(crate) fn test_only_new(coeffs: DVector<Complex64>, norm: f64) -> Self {
        Self { coeffs, norm }
    }

    pub fn coefficients(&self) -> &DVector<Complex64> {
        &self.coeffs
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    /// Pre-normalization Euclidean norm of the coefficients.
    pub fn norm(&self) -> f64 {
        self.norm
    }

    /// Unit state vector; fails on an empty (all-dark) projection.
    pub fn normalized(&self) -> Result<DVector<Complex64>> {
        if !(self.norm.is_finite() && self.norm > 0.0) {
            return Err(Error::Domain(format!(
                "cannot normalize a modal state of norm {}",
                self.norm
            )));
        }
        Ok(self.coeffs.map(|c| c / self.norm))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::OpticalConfig;
    use crate::field::{bfp_field, DipoleOrientation};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_2;

    const K1: f64 = 2.0 * std::f64::consts::PI * 1.518 / 670.0;

    fn basis(side: usize, n_max: u32) -> ZernikeBasis {
        let grid = PupilGrid::new(&OpticalConfig::desk().with_grid_side(side)).unwrap();
        ZernikeBasis::new(&grid, n_max).unwrap()
    }

    #[test]
    fn index_enumeration_is_sorted_and_complete() {
        let all = ZernikeIndex::all(8);
        assert_eq!(all.len(), 45);
        assert_eq!(all[0], ZernikeIndex { n: 0, m: 0 });
        assert_eq!(all[1], ZernikeIndex { n: 1, m: -1 });
        assert_eq!(all[2], ZernikeIndex { n: 1, m: 1 });
        assert_eq!(all[3], ZernikeIndex { n: 2, m: -2 });
        assert_eq!(all[4], ZernikeIndex { n: 2, m: 0 });
        for pair in all.windows(2) {
            assert!(pair[0].n < pair[1].n || (pair[0].n == pair[1].n && pair[0].m < pair[1].m));
        }
        assert!(all.iter().all(|i| (i.n as i32 - i.m.abs()) % 2 == 0));
    }

    #[test]
    fn radial_polynomials_match_textbook_forms() {
        for &u in &[0.0, 0.3, 0.71, 1.0] {
            assert_abs_diff_eq!(ZernikeIndex { n: 0, m: 0 }.radial(u), 1.0, epsilon = 1e-14);
            assert_abs_diff_eq!(ZernikeIndex { n: 1, m: 1 }.radial(u), u, epsilon = 1e-14);
            assert_abs_diff_eq!(
                ZernikeIndex { n: 2, m: 0 }.radial(u),
                2.0 * u * u - 1.0,
                epsilon = 1e-14
            );
            assert_abs_diff_eq!(
                ZernikeIndex { n: 3, m: -1 }.radial(u),
                3.0 * u.powi(3) - 2.0 * u,
                epsilon = 1e-13
            );
            assert_abs_diff_eq!(
                ZernikeIndex { n: 4, m: 0 }.radial(u),
                6.0 * u.powi(4) - 6.0 * u * u + 1.0,
                epsilon = 1e-13
            );
            assert_abs_diff_eq!(
                ZernikeIndex { n: 4, m: 2 }.radial(u),
                4.0 * u.powi(4) - 3.0 * u * u,
                epsilon = 1e-13
            );
        }
    }

    #[test]
    fn modes_are_orthonormal_after_reorthogonalization() {
        let basis = basis(65, 8);
        let cell = basis.grid().cell_area();
        let m = basis.modes_per_polarization();
        let mut worst = 0.0f64;
        for a in 0..m {
            for b in a..m {
                let dot: f64 = basis
                    .mode(a)
                    .iter()
                    .zip(basis.mode(b).iter())
                    .map(|(x, y)| x * y)
                    .sum::<f64>()
                    * cell;
                let want = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((dot - want).abs());
            }
        }
        assert!(worst < 1e-10, "Gram defect {worst}");
    }

    #[test]
    fn projection_is_linear() {
        let grid = PupilGrid::new(&OpticalConfig::desk().with_grid_side(33)).unwrap();
        let basis = ZernikeBasis::new(&grid, 4).unwrap();
        let f = bfp_field(&grid, K1, DipoleOrientation::x_axis(), 10.0);
        let g = bfp_field(
            &grid,
            K1,
            DipoleOrientation::new(0.4, 1.0).unwrap(),
            -25.0,
        );
        let combo = PupilField::new(
            Arc::clone(&grid),
            &f.ex * Complex64::new(0.0, 2.0) + &g.ex.mapv(|v| v * 0.5),
            &f.ey * Complex64::new(0.0, 2.0) + &g.ey.mapv(|v| v * 0.5),
        );
        let pf = basis.project(&f).unwrap();
        let pg = basis.project(&g).unwrap();
        let pc = basis.project(&combo).unwrap();
        let want = pf.coefficients() * Complex64::new(0.0, 2.0)
            + pg.coefficients().map(|v| v * 0.5);
        let err = (pc.coefficients() - want).norm();
        assert!(err <= 1e-12 * pc.norm(), "linearity defect {err}");
    }

    #[test]
    fn smooth_fields_are_captured_almost_completely() {
        let grid = PupilGrid::new(&OpticalConfig::desk().with_grid_side(65)).unwrap();
        let basis = ZernikeBasis::new(&grid, 8).unwrap();
        for (o, l) in [
            (DipoleOrientation::x_axis(), 0.0),
            (DipoleOrientation::new(0.9, 2.2).unwrap(), 50.0),
            (DipoleOrientation::z_axis(), 100.0),
        ] {
            let f = bfp_field(&grid, K1, o, 0.5 * l);
            let state = basis.project(&f).unwrap();
            let captured = state.norm().powi(2) / f.power();
            assert!(captured <= 1.0 + 1e-12, "Bessel bound violated: {captured}");
            assert!(captured > 0.995, "captured fraction {captured}");
        }
    }

    #[test]
    fn inversion_parity_separates_even_and_odd_orders() {
        // A transverse dipole at l = 0 gives an inversion-even field, so
        // only modes with even azimuthal order may carry weight.
        let grid = PupilGrid::new(&OpticalConfig::desk().with_grid_side(65)).unwrap();
        let basis = ZernikeBasis::new(&grid, 8).unwrap();
        let f = bfp_field(&grid, K1, DipoleOrientation::new(FRAC_PI_2, 0.3).unwrap(), 0.0);
        let state = basis.project(&f).unwrap();
        let m = basis.modes_per_polarization();
        let mut odd_power = 0.0;
        for (j, idx) in basis.indices().iter().enumerate() {
            if idx.m.rem_euclid(2) == 1 {
                odd_power += state.coefficients()[j].norm_sqr()
                    + state.coefficients()[m + j].norm_sqr();
            }
        }
        assert!(
            odd_power <= 1e-24 * state.norm().powi(2),
            "odd-parity leakage {odd_power}"
        );
    }

    #[test]
    fn normalized_states_have_unit_norm() {
        let grid = PupilGrid::new(&OpticalConfig::desk().with_grid_side(33)).unwrap();
        let basis = ZernikeBasis::new(&grid, 6).unwrap();
        let f = bfp_field(&grid, K1, DipoleOrientation::new(1.3, 5.1).unwrap(), 33.0);
        let state = basis.project(&f).unwrap();
        let u = state.normalized().unwrap();
        assert_abs_diff_eq!(u.norm(), 1.0, epsilon = 1e-13);

        let dark = ModalState {
            coeffs: DVector::zeros(basis.state_dim()),
            norm: 0.0,
        };
        assert!(dark.normalized().is_err());
    }

    #[test]
    fn projection_rejects_foreign_grids() {
        let grid_a = PupilGrid::new(&OpticalConfig::desk().with_grid_side(33)).unwrap();
        let grid_b = PupilGrid::new(&OpticalConfig::desk().with_grid_side(33)).unwrap();
        let basis = ZernikeBasis::new(&grid_a, 4).unwrap();
        let f = bfp_field(&grid_b, K1, DipoleOrientation::x_axis(), 0.0);
        assert!(matches!(
            basis.project(&f),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn basis_needs_enough_samples() {
        let grid = PupilGrid::new(&OpticalConfig::desk().with_grid_side(3)).unwrap();
        assert!(ZernikeBasis::new(&grid, 8).is_err());
    }
}
