use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::portfolio::{SectorMode, SectorRate, SectoredPortfolio, SubExposure};
use crate::{Error, Result};

/// Sub-exposures sharing one integer exposure level within a sector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    /// Exposure level in units of L.
    pub v: u64,
    /// Expected loss in units of L.
    pub epsilon: f64,
    /// Expected number of defaults, `epsilon / v`.
    pub mu: f64,
}

impl Band {
    pub fn new(v: u64, epsilon: f64) -> Self {
        assert!(v >= 1, "band level must be >= 1");
        Self {
            v,
            epsilon,
            mu: epsilon / v as f64,
        }
    }
}

/// Gamma mixing parameters of one sector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaShape {
    pub alpha: f64,
    pub beta: f64,
    pub rho: f64,
}

/// Default-count parameters of a sector. `mu` and `sigma` are the mean and
/// standard deviation of the sector's default *count*; `gamma` is `None` when
/// `sigma` is zero and the sector is plain Poisson.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectorParams {
    mu: f64,
    sigma: f64,
    gamma: Option<GammaShape>,
}

impl SectorParams {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        let invalid = |message: String| Error::InvalidSector {
            sector: "-".into(),
            message,
        };
        if !(mu.is_finite() && mu >= 0.0) {
            return Err(invalid(format!("expected count must be >= 0, got {mu}")));
        }
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(invalid(format!("count stddev must be >= 0, got {sigma}")));
        }
        if mu == 0.0 && sigma > 0.0 {
            return Err(invalid("zero expected count with positive stddev".into()));
        }
        if sigma == 0.0 || mu == 0.0 {
            return Ok(Self { mu, sigma, gamma: None });
        }
        let alpha = mu * mu / (sigma * sigma);
        let beta = sigma * sigma / mu;
        let rho = beta / (1.0 + beta);
        if !(rho > 0.0 && rho < 1.0) || !alpha.is_finite() {
            return Err(invalid(format!("rho = {rho} outside (0, 1)")));
        }
        Ok(Self {
            mu,
            sigma,
            gamma: Some(GammaShape { alpha, beta, rho }),
        })
    }

    /// Parameters with the given negative-binomial shape `alpha` and success
    /// probability `rho`.
    pub fn from_shape(alpha: f64, rho: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) || !(rho > 0.0 && rho < 1.0) {
            return Err(Error::InvalidSector {
                sector: "-".into(),
                message: format!("need alpha > 0 and rho in (0, 1), got alpha = {alpha}, rho = {rho}"),
            });
        }
        let beta = rho / (1.0 - rho);
        let mu = alpha * beta;
        Ok(Self {
            mu,
            sigma: (beta * mu).sqrt(),
            gamma: Some(GammaShape { alpha, beta, rho }),
        })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn gamma(&self) -> Option<GammaShape> {
        self.gamma
    }

    /// Variance of the sector factor, `(sigma / mu)^2`; zero for Poisson sectors.
    pub fn variation_sq(&self) -> f64 {
        match self.gamma {
            Some(g) => 1.0 / g.alpha,
            None => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandedSector {
    pub name: String,
    pub rate: SectorRate,
    pub params: SectorParams,
    /// Sorted by `v`, one entry per distinct level.
    pub bands: Vec<Band>,
}

impl BandedSector {
    pub fn expected_loss_units(&self) -> f64 {
        self.bands.iter().map(|b| b.epsilon).sum()
    }

    pub fn max_v(&self) -> u64 {
        self.bands.iter().map(|b| b.v).max().unwrap_or(0)
    }

    pub fn intensity(&self) -> f64 {
        self.bands.iter().map(|b| b.mu).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandAssignment {
    pub sector: usize,
    pub v: u64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObligorBands {
    pub id: String,
    pub name: String,
    pub assignments: Vec<BandAssignment>,
}

impl ObligorBands {
    pub fn expected_loss_units(&self) -> f64 {
        self.assignments.iter().map(|a| a.epsilon).sum()
    }
}

/// Exposures discretized onto the grid `{0, L, 2L, ...}` and grouped into
/// bands per sector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandedPortfolio {
    pub unit: f64,
    pub mode: SectorMode,
    pub sectors: Vec<BandedSector>,
    pub obligors: Vec<ObligorBands>,
    /// The un-banded sub-exposures the bands were built from.
    pub exposures: Vec<SubExposure>,
}

impl BandedPortfolio {
    pub fn max_v(&self) -> u64 {
        self.sectors.iter().map(BandedSector::max_v).max().unwrap_or(0)
    }

    /// Expected loss in money, `sum(epsilon) * L`.
    pub fn expected_loss(&self) -> f64 {
        self.sectors.iter().map(BandedSector::expected_loss_units).sum::<f64>() * self.unit
    }

    /// Analytic variance of the aggregate loss in money squared:
    /// `L^2 * sum_k [sum_j eps_j v_j + (sigma_k/mu_k)^2 (sum_j eps_j)^2]`.
    pub fn variance(&self) -> f64 {
        let units: f64 = self
            .sectors
            .iter()
            .map(|s| {
                let el = s.expected_loss_units();
                let poisson: f64 = s.bands.iter().map(|b| b.epsilon * b.v as f64).sum();
                poisson + s.params.variation_sq() * el * el
            })
            .sum();
        units * self.unit * self.unit
    }

    pub fn total_exposure(&self) -> f64 {
        self.exposures.iter().map(|e| e.amount).sum()
    }
}

/// Discretizes each sub-exposure `x` with loss rate `p` to level
/// `v = ceil(x / unit)` carrying expected loss `x * p / unit`, then merges
/// entries sharing a (sector, v) pair.
pub fn band_exposures(sectored: &SectoredPortfolio, unit: f64) -> Result<BandedPortfolio> {
    if !(unit.is_finite() && unit > 0.0) {
        return Err(Error::InvalidUnit(unit));
    }
    let mut per_sector: Vec<BTreeMap<u64, f64>> = vec![BTreeMap::new(); sectored.sectors.len()];
    let mut obligors: Vec<ObligorBands> = sectored
        .obligors
        .iter()
        .map(|o| ObligorBands {
            id: o.id.clone(),
            name: o.name.clone(),
            assignments: Vec::new(),
        })
        .collect();

    for e in &sectored.exposures {
        if !(e.amount.is_finite() && e.amount > 0.0) {
            return Err(Error::InvalidObligor {
                id: sectored.obligors[e.obligor].id.clone(),
                message: format!("sub-exposure must be > 0, got {}", e.amount),
            });
        }
        let v = ((e.amount / unit).ceil() as u64).max(1);
        let epsilon = e.expected_loss() / unit;
        *per_sector[e.sector].entry(v).or_insert(0.0) += epsilon;
        obligors[e.obligor].assignments.push(BandAssignment {
            sector: e.sector,
            v,
            epsilon,
        });
    }

    let sectors = sectored
        .sectors
        .iter()
        .zip(per_sector)
        .map(|(sector, levels)| {
            let bands: Vec<Band> = levels.into_iter().map(|(v, eps)| Band::new(v, eps)).collect();
            let mu: f64 = bands.iter().map(|b| b.mu).sum();
            let sigma = sector.rate.variation_sq().sqrt() * mu;
            let params = SectorParams::new(mu, sigma).map_err(|e| match e {
                Error::InvalidSector { message, .. } => Error::InvalidSector {
                    sector: sector.name.clone(),
                    message,
                },
                other => other,
            })?;
            Ok(BandedSector {
                name: sector.name.clone(),
                rate: sector.rate,
                params,
                bands,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(BandedPortfolio {
        unit,
        mode: sectored.mode,
        sectors,
        obligors,
        exposures: sectored.exposures.clone(),
    })
}

/// Total expected number of defaults, `sum_j eps_j / v_j` over all sectors.
pub fn poisson_rate(banded: &BandedPortfolio) -> f64 {
    banded.sectors.iter().map(BandedSector::intensity).sum()
}

/// Normalized severity polynomial: coefficient `mu_j / sum(mu)` at degree `v_j`.
pub fn severity_polynomial(bands: &[Band]) -> Result<Vec<f64>> {
    let total: f64 = bands.iter().map(|b| b.mu).sum();
    if bands.is_empty() || total <= 0.0 {
        return Err(Error::DegenerateSector("-".into()));
    }
    let max_v = bands.iter().map(|b| b.v).max().unwrap_or(0) as usize;
    let mut coeffs = vec![0.0; max_v + 1];
    for b in bands {
        coeffs[b.v as usize] += b.mu / total;
    }
    Ok(coeffs)
}
