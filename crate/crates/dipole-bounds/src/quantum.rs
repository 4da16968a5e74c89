//! Quantum Fisher information of the collected one-photon state.
//!
//! Conditioned on a photon reaching the detector, the optical state of a
//! two-emitter mixture is \(\rho(l) = \sum_i w_i \,|u_i(l)\rangle\langle
//! u_i(l)|\), with one normalized modal state per source (and per dipole
//! component for isotropic emitters). The quantum Fisher information is
//! obtained from the symmetric logarithmic derivative \(L\), the Hermitian
//! solution of \(\partial_l \rho = \tfrac12 (L\rho + \rho L)\):
//!
//! $$ F_Q = \operatorname{Tr}(\rho L^2)
//!        = \sum_{\lambda_k + \lambda_{k'} > 0}
//!          \frac{2\,|\langle k|\partial_l\rho|k'\rangle|^2}
//!               {\lambda_k + \lambda_{k'}} . $$
//!
//! Two routes are provided: a dense eigendecomposition of the full modal
//! matrix, and a fast path that first compresses onto the span of the
//! component states and their derivatives, where \(\rho\) and
//! \(\partial_l\rho\) act exactly. They agree to rounding and cross-check
//! each other in the test suite.

use crate::zernike::ModalState;
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

/// Eigenvalue pairs below this fraction of the largest eigenvalue are
/// treated as lying in the kernel of ρ, where the SLD is conventionally 0.
const EIGEN_CLIP_REL: f64 = 1e-12;

/// Vectors whose orthogonal residual falls below this fraction of their
/// norm add nothing to the component span.
const SPAN_DROP_REL: f64 = 1e-13;

/// One pure constituent of the collected mixture: a unit state, its
/// separation derivative, and the mixing weight.
#[derive(Debug, Clone)]
pub struct MixtureComponent {
    pub weight: f64,
    pub state: DVector<Complex64>,
    pub derivative: DVector<Complex64>,
}

/// Turns raw modal projections into a unit state and its derivative.
///
/// For `c(l)` with norm `s(l)`, the unit vector `u = c/s` evolves as
/// `u' = (c' - u Re⟨u, c'⟩)/s`; the subtracted piece is exactly the norm
/// rate `s'`, so `Re⟨u, u'⟩ = 0` and mixtures built from the result stay
/// trace-one at first order.
pub fn unit_state_and_derivative(
    raw: &ModalState,
    raw_derivative: &ModalState,
) -> Result<(DVector<Complex64>, DVector<Complex64>)> {
    unit_pair_from_raw(raw.coefficients(), raw_derivative.coefficients())
}

/// Same construction from raw coefficient vectors in any fixed
/// orthonormal discretization (for example pixel samples scaled by the
/// square root of the cell area).
pub fn unit_pair_from_raw(
    raw: &DVector<Complex64>,
    raw_derivative: &DVector<Complex64>,
) -> Result<(DVector<Complex64>, DVector<Complex64>)> {
    if raw.len() != raw_derivative.len() {
        return Err(Error::DimensionMismatch(format!(
            "state dimension {} versus derivative dimension {}",
            raw.len(),
            raw_derivative.len()
        )));
    }
    let norm = raw.norm();
    if norm <= 1e-12 {
        return Err(Error::Domain(format!(
            "cannot normalize a state of norm {norm}"
        )));
    }
    let u = raw / Complex64::new(norm, 0.0);
    let norm_rate = u.dotc(raw_derivative).re;
    let du = (raw_derivative - &u * Complex64::new(norm_rate, 0.0)) / Complex64::new(norm, 0.0);
    Ok((u, du))
}

fn validate_mixture(components: &[MixtureComponent]) -> Result<usize> {
    let dim = components
        .first()
        .ok_or_else(|| Error::DimensionMismatch("empty mixture".into()))?
        .state
        .len();
    let mut total = 0.0;
    for c in components {
        if c.state.len() != dim || c.derivative.len() != dim {
            return Err(Error::DimensionMismatch(format!(
                "mixture components of dimensions {} and {}",
                dim,
                c.state.len().max(c.derivative.len())
            )));
        }
        if !(c.weight.is_finite() && c.weight >= 0.0) {
            return Err(Error::NegativeDensity(c.weight));
        }
        if (c.state.norm() - 1.0).abs() > 1e-8 {
            return Err(Error::Domain(format!(
                "component state norm {} is not 1",
                c.state.norm()
            )));
        }
        if c.state.dotc(&c.derivative).re.abs() > 1e-8 {
            return Err(Error::Domain(
                "component derivative does not preserve normalization".into(),
            ));
        }
        total += c.weight;
    }
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Domain(format!("mixture weights sum to {total}")));
    }
    Ok(dim)
}

/// The collected state and its separation derivative in a fixed modal basis.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    matrix: DMatrix<Complex64>,
    derivative: DMatrix<Complex64>,
}

impl DensityMatrix {
    /// Assembles `ρ = Σ w uu†` and `∂ρ = Σ w (u'u† + uu'†)`.
    pub fn from_mixture(components: &[MixtureComponent]) -> Result<Self> {
        let dim = validate_mixture(components)?;
        let mut matrix = DMatrix::<Complex64>::zeros(dim, dim);
        let mut derivative = DMatrix::<Complex64>::zeros(dim, dim);
        for c in components {
            let w = Complex64::new(c.weight, 0.0);
            let u_row = c.state.adjoint();
            let du_row = c.derivative.adjoint();
            matrix += (&c.state * &u_row) * w;
            derivative += (&c.derivative * &u_row + &c.state * &du_row) * w;
        }
        Ok(Self { matrix, derivative })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn derivative(&self) -> &DMatrix<Complex64> {
        &self.derivative
    }

    pub fn trace(&self) -> f64 {
        self.matrix.diagonal().iter().map(|v| v.re).sum()
    }

    pub fn trace_derivative(&self) -> f64 {
        self.derivative.diagonal().iter().map(|v| v.re).sum()
    }
}

/// Output of an SLD solve.
#[derive(Debug, Clone)]
pub struct SldResult {
    /// Quantum Fisher information, `Tr(ρ L²)`.
    pub qfi: f64,
    /// The same quantity summed pairwise over the spectrum; agreement with
    /// `qfi` is a transcription check on the solver.
    pub pair_sum_qfi: f64,
    /// Symmetric logarithmic derivative in the modal basis.
    pub sld: DMatrix<Complex64>,
    /// Spectrum of ρ restricted to the solved space, descending. The dense
    /// route reports all eigenvalues, the subspace route only the span.
    pub eigenvalues: Vec<f64>,
}

/// Dense route: Hermitian eigendecomposition of the full modal matrix.
pub fn compute_sld_qfi(density: &DensityMatrix) -> Result<SldResult> {
    let rho = hermitize(density.matrix());
    let eigen = rho
        .try_symmetric_eigen(1e-13, 100_000)
        .ok_or(Error::EigenFailure)?;
    sld_from_eigen(
        &eigen.eigenvalues.iter().copied().collect::<Vec<_>>(),
        &eigen.eigenvectors,
        density.derivative(),
        None,
    )
}

/// Subspace route: compress onto `span{u_i, u'_i}` first.
///
/// Both ρ and ∂ρ vanish on the orthogonal complement of that span, so the
/// compression is exact rather than approximate; the eigenproblem shrinks
/// from the basis dimension to at most twice the component count.
pub fn compute_sld_qfi_subspace(components: &[MixtureComponent]) -> Result<SldResult> {
    let dim = validate_mixture(components)?;
    let mut span: Vec<DVector<Complex64>> = Vec::with_capacity(2 * components.len());
    for c in components {
        for vec in [&c.state, &c.derivative] {
            let mut v = vec.clone();
            let original = v.norm();
            if original == 0.0 {
                continue;
            }
            // Two-pass Gram-Schmidt keeps the span basis orthonormal to
            // rounding even when states are nearly parallel (small l).
            for _ in 0..2 {
                for q in &span {
                    let overlap = q.dotc(&v);
                    v -= q * overlap;
                }
            }
            let residual = v.norm();
            if residual > SPAN_DROP_REL * original {
                span.push(v / Complex64::new(residual, 0.0));
            }
        }
    }
    if span.is_empty() {
        return Err(Error::NegativeDensity(0.0));
    }

    let k = span.len();
    let mut basis = DMatrix::<Complex64>::zeros(dim, k);
    for (j, q) in span.iter().enumerate() {
        basis.set_column(j, q);
    }
    let compressed: Vec<MixtureComponent> = components
        .iter()
        .map(|c| MixtureComponent {
            weight: c.weight,
            state: basis.adjoint() * &c.state,
            derivative: basis.adjoint() * &c.derivative,
        })
        .collect();

    let mut small = DensityMatrix::from_mixture(&compressed)?;
    small.matrix = hermitize(&small.matrix);
    let eigen = small
        .matrix
        .try_symmetric_eigen(1e-13, 100_000)
        .ok_or(Error::EigenFailure)?;
    sld_from_eigen(
        &eigen.eigenvalues.iter().copied().collect::<Vec<_>>(),
        &eigen.eigenvectors,
        &small.derivative,
        Some(&basis),
    )
}

/// Variance bound per photon: `σ² N ≥ 1 / F_Q`.
pub fn qcrb(qfi: f64) -> Result<f64> {
    if !(qfi.is_finite() && qfi > 0.0) {
        return Err(Error::NonPositiveInformation(qfi));
    }
    Ok(1.0 / qfi)
}

fn hermitize(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    (m + m.adjoint()).map(|v| v * 0.5)
}

fn sld_from_eigen(
    eigenvalues: &[f64],
    eigenvectors: &DMatrix<Complex64>,
    derivative: &DMatrix<Complex64>,
    embed: Option<&DMatrix<Complex64>>,
) -> Result<SldResult> {
    let lambda_max = eigenvalues.iter().cloned().fold(0.0, f64::max);
    if lambda_max <= 0.0 {
        return Err(Error::NegativeDensity(lambda_max));
    }
    if let Some(worst) = eigenvalues
        .iter()
        .cloned()
        .filter(|l| *l < -1e-10 * lambda_max)
        .reduce(f64::min)
    {
        return Err(Error::NegativeDensity(worst));
    }
    let clip = EIGEN_CLIP_REL * lambda_max;

    // ∂ρ in the eigenbasis of ρ.
    let m = eigenvectors.adjoint() * derivative * eigenvectors;
    let n = eigenvalues.len();
    let mut l_eig = DMatrix::<Complex64>::zeros(n, n);
    let mut pair_sum = 0.0;
    for row in 0..n {
        for col in 0..n {
            let denom = eigenvalues[row] + eigenvalues[col];
            if denom > clip {
                l_eig[(row, col)] = m[(row, col)] * Complex64::new(2.0 / denom, 0.0);
                pair_sum += 2.0 * m[(row, col)].norm_sqr() / denom;
            }
        }
    }

    let mut qfi = 0.0;
    for row in 0..n {
        let weight = eigenvalues[row].max(0.0);
        for col in 0..n {
            qfi += weight * l_eig[(row, col)].norm_sqr();
        }
    }

    let sld_eigenbasis = eigenvectors * l_eig * eigenvectors.adjoint();
    let sld = match embed {
        Some(basis) => basis * sld_eigenbasis * basis.adjoint(),
        None => sld_eigenbasis,
    };

    let mut spectrum = eigenvalues.to_vec();
    spectrum.sort_by(|a, b| b.partial_cmp(a).expect("finite eigenvalues"));

    Ok(SldResult {
        qfi,
        pair_sum_qfi: pair_sum,
        sld,
        eigenvalues: spectrum,
    })
}
