//! Classical Fisher information of photon-counting measurements.
//!
//! A measurement that sends each collected photon to pixel i with
//! probability p_i(l) carries per-photon information
//! J = sum_i (dp_i/dl)^2 / p_i about the separation l, and no unbiased
//! estimator built from N photons beats the Cramer-Rao variance bound
//! 1/(N J). Channel probabilities are normalized jointly within their
//! detection group, so the information of a multi-channel modality is the
//! plain sum of its channel contributions: measuring the radial and
//! azimuthal interferometer ports together yields exactly
//! J_radial + J_azimuthal.

use crate::imaging::{Channel, ImagePair, ImageSet, Modality};
use crate::Error;

/// Pixels at or below this fraction of a channel's peak probability are
/// excluded from the information sum.
///
/// An exact null contributes 0/0 to J; floating point turns that into
/// noise over noise. Dark-fringe pixels that genuinely carry information
/// have probability vanishing quadratically with the fringe coordinate,
/// which keeps them far above this floor relative to the channel peak, so
/// the exclusion removes rounding artifacts without touching signal.
/// Halving the floor moves totals at the 1e-3 relative level or less.
pub const INTENSITY_FLOOR: f64 = 1e-12;

/// A channel whose brightest pixel sits at or below this fraction of its
/// normalization group's brightest pixel is treated as an exact null.
///
/// A port that cancels identically, like the symmetric inversion output
/// at zero separation, still holds pixel values at amplitude-rounding
/// scale, around 1e-26 of the group peak. Where a smooth nonnegative
/// probability vanishes its slope vanishes too, so such a port carries no
/// information; dividing by the rounding noise instead resurrects a noisy
/// one-sided limit of (dp/dl)^2 / p. The relative floor inside a single
/// channel cannot catch this case because the channel's own peak is the
/// noise. The dimmest port that carries real light in any computed
/// scenario stays more than six decades above this floor.
pub const NULL_PORT_FLOOR: f64 = 1e-20;

/// Per-modality Fisher information, split by detection channel.
///
/// All entries are per collected photon, in nm^-2. The total is the sum
/// of the channel entries; channels a modality discards contribute
/// nothing, their photons are simply lost.
#[derive(Debug, Clone)]
pub struct FisherBreakdown {
    modality: Modality,
    per_channel: Vec<(Channel, f64)>,
    total: f64,
}

impl FisherBreakdown {
    /// Modality this breakdown describes.
    pub fn modality(&self) -> Modality {
        self.modality
    }

    /// Channel contributions in the modality's channel order, nm^-2.
    pub fn per_channel(&self) -> &[(Channel, f64)] {
        &self.per_channel
    }

    /// Contribution of one channel, if the modality measures it.
    pub fn channel_information(&self, channel: Channel) -> Option<f64> {
        self.per_channel
            .iter()
            .find(|(c, _)| *c == channel)
            .map(|&(_, info)| info)
    }

    /// Total information of the modality, nm^-2 per collected photon.
    pub fn total(&self) -> f64 {
        self.total
    }
}

/// Fisher information of a single channel's pixel probabilities, nm^-2.
///
/// Sums (dp/dl)^2 / p over pixels above the intensity floor. The pair's
/// probabilities need not sum to one; partial measurements are summed
/// as-is.
pub fn fisher_information(pair: &ImagePair) -> Result<f64, Error> {
    if pair.probability.dim() != pair.derivative.dim() {
        return Err(Error::DimensionMismatch(format!(
            "probability image is {:?}, derivative image is {:?}",
            pair.probability.dim(),
            pair.derivative.dim()
        )));
    }
    let mut peak = 0.0f64;
    for &p in &pair.probability {
        if p < 0.0 {
            return Err(Error::NegativeDensity(p));
        }
        peak = peak.max(p);
    }
    let floor = INTENSITY_FLOOR * peak;
    let mut info = 0.0;
    for (&p, &dp) in pair.probability.iter().zip(&pair.derivative) {
        if p > floor {
            info += dp * dp / p;
        }
    }
    Ok(info)
}

/// Fisher information of one detection channel within an image set.
///
/// Equivalent to [`fisher_information`] on the channel's images, except
/// that a channel dimmer than [`NULL_PORT_FLOOR`] times the peak of its
/// normalization group reports exactly zero: it is an identically null
/// port, not a dark one.
pub fn channel_information(images: &ImageSet, channel: Channel) -> Result<f64, Error> {
    let group = channel.group();
    let mut group_peak = 0.0f64;
    for other in Channel::ALL {
        if other.group() == group {
            for &p in &images.channel(other).probability {
                group_peak = group_peak.max(p);
            }
        }
    }
    let pair = images.channel(channel);
    let own_peak = pair.probability.iter().fold(0.0f64, |m, &p| m.max(p));
    if own_peak <= NULL_PORT_FLOOR * group_peak {
        return Ok(0.0);
    }
    fisher_information(pair)
}

/// Pairwise sum of per-channel contributions. Channel-disjoint unions
/// then combine bitwise: the four polarized ports sum as (radial pair) +
/// (azimuthal pair), so the combined modality total equals the radial
/// total plus the azimuthal total exactly, not merely to rounding.
pub(crate) fn sum_pairwise(values: &[f64]) -> f64 {
    match values {
        [] => 0.0,
        [x] => *x,
        [x, y] => x + y,
        _ => {
            let mid = values.len() / 2;
            sum_pairwise(&values[..mid]) + sum_pairwise(&values[mid..])
        }
    }
}

/// Fisher information of a modality, summed over its channels.
pub fn modality_information(
    images: &ImageSet,
    modality: Modality,
) -> Result<FisherBreakdown, Error> {
    let mut per_channel = Vec::with_capacity(modality.channels().len());
    for &channel in modality.channels() {
        let info = channel_information(images, channel)?;
        per_channel.push((channel, info));
    }
    let infos: Vec<f64> = per_channel.iter().map(|&(_, info)| info).collect();
    Ok(FisherBreakdown {
        modality,
        per_channel,
        total: sum_pairwise(&infos),
    })
}

/// Cramer-Rao variance bound 1/J in nm^2 per collected photon.
///
/// Reporting layers quote sigma sqrt(N) = sqrt(1/J) so the bound is
/// photon-budget free.
pub fn crb(information_per_photon: f64) -> Result<f64, Error> {
    if information_per_photon > 0.0 && information_per_photon.is_finite() {
        Ok(information_per_photon.recip())
    } else {
        Err(Error::NonPositiveInformation(information_per_photon))
    }
}

/// Precision bound sigma sqrt(N) = J^(-1/2) in nm.
pub fn sigma_sqrt_n(information_per_photon: f64) -> Result<f64, Error> {
    crb(information_per_photon).map(f64::sqrt)
}
