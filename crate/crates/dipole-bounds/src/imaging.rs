//! Detector images for the three measurement arrangements.
//!
//! A tube lens maps each pupil-plane field to the detector as a scaled
//! Fourier transform, \(U(x') = \int E(x)\, e^{i k_1 (x x' + y y')/M}\,dA\),
//! evaluated here with a chirp-z zoom transform directly on the detector
//! lattice (coordinates are kept in object-plane nanometers, so the
//! magnification cancels out of the kernel). Before the lens the light may
//! pass an image-inversion interferometer whose output ports carry
//!
//! ```text
//! out1(x, y) = [E(-x, -y) - E(x, y)] / 2
//! out2(x, y) = i [E(-x, y) + E(x, -y)] / 2
//! ```
//!
//! and, for the polarized variant, a vortex half-wave plate that first
//! resolves the field into radial and azimuthal components, each feeding
//! its own interferometer. Since the flips are exact index permutations on
//! the centered lattices, the ports are composed after the transform from a
//! single zoom per scalar component, and the identity
//! `Σ|out1|² + Σ|out2|² = Σ|U|²` holds to rounding on every grid.
//!
//! The second emitter mirrors the first: its pupil field is the complex
//! conjugate of the field of the `+l/2` source, so every raw channel image
//! and its separation derivative are the point reflections of the ones
//! already computed. [`ImageSimulator::simulate`] uses that shortcut;
//! [`ImageSimulator::simulate_reference`] evaluates both sources explicitly
//! and exists to validate it.
//!
//! Images are reported as per-pixel detection probabilities: each
//! normalization group (direct; the unpolarized port pair; all four
//! polarized ports) is scaled to unit total over the field of view, and
//! probability derivatives include the derivative of that normalization.

use crate::config::OpticalConfig;
use crate::config::PupilGrid;
use crate::czt::ZoomTransform;
use crate::field::{
    bfp_field, flip_both, flip_x, flip_y, radial_azimuthal_split, separation_derivative,
    DipoleOrientation, PupilField, SourceSign,
};
use crate::{Error, Result};
use ndarray::Array2;
use num_complex::Complex64;
use std::sync::Arc;

/// One detector channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    Direct,
    IiiOut1,
    IiiOut2,
    RadialOut1,
    RadialOut2,
    AzimuthalOut1,
    AzimuthalOut2,
}

/// Channels that share a normalization: probabilities sum to one over each
/// group, mirroring which light a given instrument actually collects.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormalizationGroup {
    Direct,
    Unpolarized,
    Polarized,
}

impl Channel {
    pub const ALL: [Channel; 7] = [
        Channel::Direct,
        Channel::IiiOut1,
        Channel::IiiOut2,
        Channel::RadialOut1,
        Channel::RadialOut2,
        Channel::AzimuthalOut1,
        Channel::AzimuthalOut2,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Channel::Direct => "direct",
            Channel::IiiOut1 => "iii_out1",
            Channel::IiiOut2 => "iii_out2",
            Channel::RadialOut1 => "radial_out1",
            Channel::RadialOut2 => "radial_out2",
            Channel::AzimuthalOut1 => "azimuthal_out1",
            Channel::AzimuthalOut2 => "azimuthal_out2",
        }
    }

    pub fn group(&self) -> NormalizationGroup {
        match self {
            Channel::Direct => NormalizationGroup::Direct,
            Channel::IiiOut1 | Channel::IiiOut2 => NormalizationGroup::Unpolarized,
            _ => NormalizationGroup::Polarized,
        }
    }

    /// Position of this channel in [`Channel::ALL`]; the column order used
    /// by image sets and sweep rows.
    pub fn index(&self) -> usize {
        Channel::ALL.iter().position(|c| c == self).expect("listed")
    }
}

/// A measurement arrangement: which channels are read out together.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Modality {
    Direct,
    UnpolarizedIii,
    PolarizedIii,
    RadialIii,
    AzimuthalIii,
}

impl Modality {
    pub const ALL: [Modality; 5] = [
        Modality::Direct,
        Modality::UnpolarizedIii,
        Modality::PolarizedIii,
        Modality::RadialIii,
        Modality::AzimuthalIii,
    ];

    /// Channels whose counts enter this measurement's likelihood. The
    /// radial-only and azimuthal-only variants still normalize against all
    /// four polarized ports: discarding the other polarization loses its
    /// photons, it does not renormalize the kept ones.
    pub fn channels(&self) -> &'static [Channel] {
        match self {
            Modality::Direct => &[Channel::Direct],
            Modality::UnpolarizedIii => &[Channel::IiiOut1, Channel::IiiOut2],
            Modality::PolarizedIii => &[
                Channel::RadialOut1,
                Channel::RadialOut2,
                Channel::AzimuthalOut1,
                Channel::AzimuthalOut2,
            ],
            Modality::RadialIii => &[Channel::RadialOut1, Channel::RadialOut2],
            Modality::AzimuthalIii => &[Channel::AzimuthalOut1, Channel::AzimuthalOut2],
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Modality::Direct => "direct",
            Modality::UnpolarizedIii => "unpolarized_iii",
            Modality::PolarizedIii => "polarized_iii",
            Modality::RadialIii => "radial_iii",
            Modality::AzimuthalIii => "azimuthal_iii",
        }
    }

    /// Inverse of `label`, for configuration parsing.
    pub fn from_label(label: &str) -> Option<Modality> {
        Modality::ALL.into_iter().find(|m| m.label() == label)
    }
}

/// Per-pixel detection probability of one channel and its derivative with
/// respect to the separation, in 1/nm.
#[derive(Debug, Clone)]
pub struct ImagePair {
    pub probability: Array2<f64>,
    pub derivative: Array2<f64>,
}

/// All channels of one simulation, jointly normalized group by group.
#[derive(Debug, Clone)]
pub struct ImageSet {
    pitch_nm: f64,
    images: Vec<ImagePair>,
    group_sums: [f64; 3],
}

impl ImageSet {
    pub fn channel(&self, channel: Channel) -> &ImagePair {
        &self.images[channel.index()]
    }

    /// Detector pixel pitch in object-plane nanometers.
    pub fn pitch_nm(&self) -> f64 {
        self.pitch_nm
    }

    pub fn image_side(&self) -> usize {
        self.images[0].probability.nrows()
    }

    /// Raw (pre-normalization) power collected by a group over the field of
    /// view; the ratio between groups or separations measures how much
    /// light the finite detector window keeps.
    pub fn group_sum(&self, group: NormalizationGroup) -> f64 {
        self.group_sums[group_index(group)]
    }

    /// Mixes image sets from the same detector: probabilities and their
    /// derivatives combine linearly, so an incoherent source emitting
    /// through constituent channels with the given weights produces
    /// exactly this set. Weights must be nonnegative and sum to one so
    /// each group stays normalized.
    pub fn convex_combination(terms: &[(f64, &ImageSet)]) -> Result<ImageSet> {
        let (first_weight, first) = terms
            .first()
            .ok_or_else(|| Error::InvalidConfig("empty image combination".into()))?;
        let side = first.image_side();
        let mut weight_sum = 0.0;
        for &(w, set) in terms {
            if w < 0.0 || w.is_nan() {
                return Err(Error::InvalidConfig(format!(
                    "combination weight {w} must be a nonnegative number"
                )));
            }
            if set.pitch_nm != first.pitch_nm || set.image_side() != side {
                return Err(Error::DimensionMismatch(format!(
                    "image set {} px at {} nm mixed with {} px at {} nm",
                    set.image_side(),
                    set.pitch_nm,
                    side,
                    first.pitch_nm
                )));
            }
            weight_sum += w;
        }
        if (weight_sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "combination weights sum to {weight_sum}, not 1"
            )));
        }
        let mut images: Vec<ImagePair> = first
            .images
            .iter()
            .map(|pair| ImagePair {
                probability: pair.probability.mapv(|p| p * first_weight),
                derivative: pair.derivative.mapv(|d| d * first_weight),
            })
            .collect();
        let mut group_sums = first.group_sums.map(|s| s * first_weight);
        for &(w, set) in &terms[1..] {
            for (acc, pair) in images.iter_mut().zip(&set.images) {
                acc.probability.zip_mut_with(&pair.probability, |a, &b| *a += w * b);
                acc.derivative.zip_mut_with(&pair.derivative, |a, &b| *a += w * b);
            }
            for (acc, s) in group_sums.iter_mut().zip(set.group_sums) {
                *acc += w * s;
            }
        }
        Ok(ImageSet {
            pitch_nm: first.pitch_nm,
            images,
            group_sums,
        })
    }
}

fn group_index(group: NormalizationGroup) -> usize {
    match group {
        NormalizationGroup::Direct => 0,
        NormalizationGroup::Unpolarized => 1,
        NormalizationGroup::Polarized => 2,
    }
}

struct RawChannel {
    intensity: Array2<f64>,
    derivative: Array2<f64>,
}

/// Propagates pupil fields to the detector and assembles channel images.
pub struct ImageSimulator {
    grid: Arc<PupilGrid>,
    zoom: ZoomTransform,
    image_side: usize,
    pitch_nm: f64,
    k1_per_nm: f64,
}

impl ImageSimulator {
    pub fn new(cfg: &OpticalConfig, grid: Arc<PupilGrid>) -> Result<Self> {
        cfg.validate()?;
        if grid.side() != cfg.pupil_grid_side {
            return Err(Error::DimensionMismatch(format!(
                "grid of side {} does not match configuration side {}",
                grid.side(),
                cfg.pupil_grid_side
            )));
        }
        let image_side = cfg.image_side();
        let alpha = cfg.wavenumber_per_nm() * grid.step() * cfg.image_pixel_object_nm;
        Ok(Self {
            zoom: ZoomTransform::new(grid.side(), image_side, alpha)?,
            image_side,
            pitch_nm: cfg.image_pixel_object_nm,
            k1_per_nm: cfg.wavenumber_per_nm(),
            grid,
        })
    }

    pub fn grid(&self) -> &Arc<PupilGrid> {
        &self.grid
    }

    pub fn image_side(&self) -> usize {
        self.image_side
    }

    pub fn pitch_nm(&self) -> f64 {
        self.pitch_nm
    }

    /// All channel images for two emitters separated by `l_nm`.
    ///
    /// Only the `+l/2` source is propagated; the other source's raw images
    /// are its point reflections, see the module docs.
    pub fn simulate(&self, orientation: DipoleOrientation, l_nm: f64) -> Result<ImageSet> {
        if !(l_nm.is_finite() && l_nm >= 0.0) {
            return Err(Error::Domain(format!("separation {l_nm} nm")));
        }
        let field = bfp_field(
            &self.grid,
            self.k1_per_nm,
            orientation,
            SourceSign::Plus.offset_nm(l_nm),
        );
        let dfield = separation_derivative(&field, self.k1_per_nm, SourceSign::Plus);
        let mut raw = self.source_channels(&field, &dfield);
        for channel in &mut raw {
            channel.intensity = average_with_mirror(&channel.intensity);
            channel.derivative = average_with_mirror(&channel.derivative);
        }
        Ok(self.assemble(raw))
    }

    /// Validation twin of [`Self::simulate`]: both sources are propagated
    /// explicitly and averaged, with no mirror shortcut.
    pub fn simulate_reference(
        &self,
        orientation: DipoleOrientation,
        l_nm: f64,
    ) -> Result<ImageSet> {
        if !(l_nm.is_finite() && l_nm >= 0.0) {
            return Err(Error::Domain(format!("separation {l_nm} nm")));
        }
        let mut total: Option<Vec<RawChannel>> = None;
        for sign in [SourceSign::Plus, SourceSign::Minus] {
            let field = bfp_field(
                &self.grid,
                self.k1_per_nm,
                orientation,
                sign.offset_nm(l_nm),
            );
            let dfield = separation_derivative(&field, self.k1_per_nm, sign);
            let raw = self.source_channels(&field, &dfield);
            total = Some(match total {
                None => raw,
                Some(acc) => acc
                    .into_iter()
                    .zip(raw)
                    .map(|(a, b)| RawChannel {
                        intensity: a.intensity + b.intensity,
                        derivative: a.derivative + b.derivative,
                    })
                    .collect(),
            });
        }
        let halved: Vec<RawChannel> = total
            .expect("two sources accumulated")
            .into_iter()
            .map(|c| RawChannel {
                intensity: c.intensity.mapv(|v| 0.5 * v),
                derivative: c.derivative.mapv(|v| 0.5 * v),
            })
            .collect();
        Ok(self.assemble(halved))
    }

    /// Raw channel images of a single source given its pupil field and the
    /// field's separation derivative, in [`Channel::ALL`] order.
    fn source_channels(&self, field: &PupilField, dfield: &PupilField) -> Vec<RawChannel> {
        let scale = self.grid.cell_area();
        let zoom = |a: &Array2<Complex64>| {
            let mut out = self.zoom.process_square(a);
            out.mapv_inplace(|v| v * scale);
            out
        };

        let u = zoom(&field.ex);
        let v = zoom(&field.ey);
        let du = zoom(&dfield.ex);
        let dv = zoom(&dfield.ey);

        let (radial, azimuthal) = radial_azimuthal_split(field);
        let (dradial, dazimuthal) = radial_azimuthal_split(dfield);
        let w = zoom(&radial.values);
        let dw = zoom(&dradial.values);
        let z = zoom(&azimuthal.values);
        let dz = zoom(&dazimuthal.values);

        let pixel_area = self.pitch_nm * self.pitch_nm;
        let vector_raw = |a: &Array2<Complex64>,
                          da: &Array2<Complex64>,
                          b: &Array2<Complex64>,
                          db: &Array2<Complex64>| {
            let mut intensity = Array2::<f64>::zeros(a.dim());
            let mut derivative = Array2::<f64>::zeros(a.dim());
            for (((((i, d), a), da), b), db) in intensity
                .iter_mut()
                .zip(derivative.iter_mut())
                .zip(a)
                .zip(da)
                .zip(b)
                .zip(db)
            {
                *i = (a.norm_sqr() + b.norm_sqr()) * pixel_area;
                *d = 2.0 * ((a.conj() * da).re + (b.conj() * db).re) * pixel_area;
            }
            RawChannel {
                intensity,
                derivative,
            }
        };
        let scalar_raw = |a: &Array2<Complex64>, da: &Array2<Complex64>| {
            let mut intensity = Array2::<f64>::zeros(a.dim());
            let mut derivative = Array2::<f64>::zeros(a.dim());
            for (((i, d), a), da) in intensity
                .iter_mut()
                .zip(derivative.iter_mut())
                .zip(a)
                .zip(da)
            {
                *i = a.norm_sqr() * pixel_area;
                *d = 2.0 * (a.conj() * da).re * pixel_area;
            }
            RawChannel {
                intensity,
                derivative,
            }
        };

        let p1u = port1(&u);
        let p1v = port1(&v);
        let p1du = port1(&du);
        let p1dv = port1(&dv);
        let p2u = port2(&u);
        let p2v = port2(&v);
        let p2du = port2(&du);
        let p2dv = port2(&dv);

        vec![
            vector_raw(&u, &du, &v, &dv),
            vector_raw(&p1u, &p1du, &p1v, &p1dv),
            vector_raw(&p2u, &p2du, &p2v, &p2dv),
            scalar_raw(&port1(&w), &port1(&dw)),
            scalar_raw(&port2(&w), &port2(&dw)),
            scalar_raw(&port1(&z), &port1(&dz)),
            scalar_raw(&port2(&z), &port2(&dz)),
        ]
    }

    fn assemble(&self, raw: Vec<RawChannel>) -> ImageSet {
        let mut sums = [0.0f64; 3];
        let mut rates = [0.0f64; 3];
        for (channel, data) in Channel::ALL.iter().zip(&raw) {
            let g = group_index(channel.group());
            sums[g] += data.intensity.sum();
            rates[g] += data.derivative.sum();
        }
        let images = Channel::ALL
            .iter()
            .zip(raw)
            .map(|(channel, data)| {
                let g = group_index(channel.group());
                let s = sums[g];
                let rate_ratio = rates[g] / s;
                let probability = data.intensity.mapv(|v| v / s);
                // d(R/S) = R'/S - R S'/S²; keeps Σp = 1 exactly stationary.
                let derivative = ndarray::Zip::from(&data.derivative)
                    .and(&probability)
                    .map_collect(|&dr, &p| dr / s - p * rate_ratio);
                ImagePair {
                    probability,
                    derivative,
                }
            })
            .collect();
        ImageSet {
            pitch_nm: self.pitch_nm,
            images,
            group_sums: sums,
        }
    }
}

/// `[f(q) + f(-q)] / 2`: folds in the mirrored second source.
fn average_with_mirror(a: &Array2<f64>) -> Array2<f64> {
    let mirrored = flip_both(a);
    let mut out = a.clone();
    out.zip_mut_with(&mirrored, |x, m| *x = 0.5 * (*x + m));
    out
}

/// Antisymmetric interferometer port on the detector lattice.
fn port1(a: &Array2<Complex64>) -> Array2<Complex64> {
    let flipped = flip_both(a);
    let mut out = flipped;
    out.zip_mut_with(a, |f, v| *f = (*f - v) * 0.5);
    out
}

/// Symmetric interferometer port on the detector lattice.
fn port2(a: &Array2<Complex64>) -> Array2<Complex64> {
    let fx = flip_x(a);
    let fy = flip_y(a);
    let mut out = fx;
    out.zip_mut_with(&fy, |x, y| *x = (*x + y) * Complex64::new(0.0, 0.5));
    out
}
