//! Exposure banding and the aggregate loss distribution.
//!
//! Two evaluation routes produce the same [`LossDistribution`]: Panjer
//! recursion per sector followed by convolution ([`loss_dist_sector`]), and
//! inversion of the closed-form PGF on the roots of unity ([`loss_dist_fft`]).
//! [`loss_dist_poisson`] drops the gamma mixing entirely.

mod banding;
mod distribution;
mod fft;
mod panjer;

use serde::{Deserialize, Serialize};

pub use banding::{
    band_exposures, poisson_rate, severity_polynomial, Band, BandAssignment, BandedPortfolio,
    BandedSector, GammaShape, ObligorBands, SectorParams,
};
pub use distribution::{convolve, LossDistribution, MASS_SLACK, NEGATIVE_FLOOR};
pub use fft::loss_dist_fft;
pub use panjer::{loss_dist_poisson, loss_dist_sector, sector_pmf};

use crate::Result;

/// Truncation mass the automatic grid is grown to stay below.
pub const TRUNCATION_TARGET: f64 = 1e-10;

/// Largest grid [`auto_grid_size`] will grow to.
pub const MAX_GRID: usize = 1 << 24;

/// Standard deviations above the mean covered by the initial grid guess.
const GRID_SIGMAS: f64 = 20.0;
const GRID_PADDING: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Panjer,
    Fft,
}

impl Backend {
    pub fn as_str(&self) -> &'static str {
        match self {
            Backend::Panjer => "panjer",
            Backend::Fft => "fft",
        }
    }

    pub fn compute(&self, banded: &BandedPortfolio, grid_size: usize) -> Result<LossDistribution> {
        match self {
            Backend::Panjer => loss_dist_sector(banded, grid_size),
            Backend::Fft => loss_dist_fft(banded, grid_size),
        }
    }
}

impl std::str::FromStr for Backend {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "panjer" => Ok(Backend::Panjer),
            "fft" => Ok(Backend::Fft),
            other => Err(format!("unknown backend '{other}' (expected panjer or fft)")),
        }
    }
}

/// Smallest power of two covering `4 (mean + 20 sd) / L` and the FFT
/// anti-aliasing minimum `2 (1 + max v)`.
pub fn moment_grid_size(banded: &BandedPortfolio) -> usize {
    let bound = banded.expected_loss() + GRID_SIGMAS * banded.variance().sqrt();
    let points = (GRID_PADDING * bound / banded.unit).ceil();
    let floor = 2 * (banded.max_v() as usize + 1);
    let points = if points.is_finite() && points < MAX_GRID as f64 {
        points as usize
    } else {
        MAX_GRID
    };
    let cap = MAX_GRID.max(floor.next_power_of_two());
    points.max(floor).max(2).next_power_of_two().min(cap)
}

/// Starts from [`moment_grid_size`] and doubles until the Panjer
/// distribution leaves less than [`TRUNCATION_TARGET`] off the grid.
pub fn auto_grid_size(banded: &BandedPortfolio) -> Result<usize> {
    let mut n = moment_grid_size(banded);
    loop {
        let d = loss_dist_sector(banded, n)?;
        if d.truncation_mass() < TRUNCATION_TARGET || n >= MAX_GRID {
            return Ok(n);
        }
        n *= 2;
    }
}
