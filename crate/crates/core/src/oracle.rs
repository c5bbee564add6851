//! Monte Carlo simulation of the same portfolio model, independent of the
//! PGF machinery in [`crate::engine`].
//!
//! Draws are generated in fixed-size chunks, each from its own ChaCha8
//! stream keyed by `(seed, chunk index)`, so the sample is identical for any
//! thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::{exceedance_quantile, QuantileRow};
use crate::engine::{BandedPortfolio, LossDistribution};
use crate::{Error, Result};

const CHUNK: u64 = 1 << 14;

/// Standard errors tolerated before a level is flagged by [`compare`].
pub const FLAG_SIGMAS: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimMode {
    /// Poisson default counts per band, each default costing `v * L`.
    PoissonBanded,
    /// One Bernoulli default per sub-exposure, costing the un-banded amount.
    BernoulliExact,
}

impl SimMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            SimMode::PoissonBanded => "poisson-banded",
            SimMode::BernoulliExact => "bernoulli-exact",
        }
    }
}

impl std::str::FromStr for SimMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "poisson-banded" => Ok(SimMode::PoissonBanded),
            "bernoulli-exact" => Ok(SimMode::BernoulliExact),
            other => Err(format!(
                "unknown simulation mode '{other}' (expected poisson-banded or bernoulli-exact)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_draws: u64,
    pub seed: u64,
    pub mode: SimMode,
}

impl SimConfig {
    pub fn new(n_draws: u64, seed: u64, mode: SimMode) -> Result<Self> {
        if n_draws == 0 {
            return Err(Error::InvalidSimConfig("n_draws must be >= 1".into()));
        }
        Ok(Self { n_draws, seed, mode })
    }
}

/// Sorted sample of simulated aggregate losses.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDistribution {
    samples: Vec<f64>,
    /// Bernoulli probabilities `p * scaling` that exceeded 1 and were clamped.
    pub clamped: u64,
}

impl EmpiricalDistribution {
    pub fn from_samples(mut samples: Vec<f64>) -> Self {
        samples.sort_by(f64::total_cmp);
        Self { samples, clamped: 0 }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn n_draws(&self) -> usize {
        self.samples.len()
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    /// Sample standard deviation (n - 1 denominator).
    pub fn stddev(&self) -> f64 {
        let n = self.samples.len();
        if n < 2 {
            return 0.0;
        }
        let m = self.mean();
        let ss: f64 = self.samples.iter().map(|x| (x - m) * (x - m)).sum();
        (ss / (n - 1) as f64).sqrt()
    }

    /// Fraction of samples strictly above `x`.
    pub fn exceedance_prob(&self, x: f64) -> f64 {
        let at_or_below = self.samples.partition_point(|&s| s <= x);
        (self.samples.len() - at_or_below) as f64 / self.samples.len() as f64
    }

    /// Smallest sample value `x` with `#{samples > x} / n <= eps`.
    pub fn exceedance_quantile(&self, eps: f64) -> f64 {
        let n = self.samples.len();
        // number of samples allowed above the answer
        let allowed = ((eps * n as f64) + 1e-9).floor() as usize;
        self.samples[n - 1 - allowed.min(n - 1)]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.samples.len() * 12);
        out.push_str("loss\n");
        for s in &self.samples {
            out.push_str(&s.to_string());
            out.push('\n');
        }
        out
    }
}

pub fn empirical_exceedance_quantile(e: &EmpiricalDistribution, eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidLevel(eps));
    }
    Ok(e.exceedance_quantile(eps))
}

/// Per sector: `Some(Gamma(alpha, 1/alpha))`, a mean-one scaling factor, or
/// `None` for an unmixed sector.
fn sector_factors(banded: &BandedPortfolio) -> Result<Vec<Option<Gamma<f64>>>> {
    banded
        .sectors
        .iter()
        .map(|s| match s.params.gamma() {
            Some(g) => Gamma::new(g.alpha, 1.0 / g.alpha).map(Some).map_err(|e| {
                Error::InvalidSector {
                    sector: s.name.clone(),
                    message: format!("gamma sampler: {e}"),
                }
            }),
            None => Ok(None),
        })
        .collect()
}

/// Simulates `cfg.n_draws` aggregate losses of `banded`.
pub fn simulate(banded: &BandedPortfolio, cfg: &SimConfig) -> Result<EmpiricalDistribution> {
    if cfg.n_draws == 0 {
        return Err(Error::InvalidSimConfig("n_draws must be >= 1".into()));
    }
    let factors = sector_factors(banded)?;
    let chunks = cfg.n_draws.div_ceil(CHUNK);
    let results: Vec<(Vec<f64>, u64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(c);
            let draws = CHUNK.min(cfg.n_draws - c * CHUNK) as usize;
            let mut scaling = vec![1.0; factors.len()];
            let mut out = Vec::with_capacity(draws);
            let mut clamped = 0u64;
            for _ in 0..draws {
                for (s, f) in scaling.iter_mut().zip(&factors) {
                    *s = f.as_ref().map_or(1.0, |g| g.sample(&mut rng));
                }
                let loss = match cfg.mode {
                    SimMode::PoissonBanded => poisson_draw(banded, &scaling, &mut rng),
                    SimMode::BernoulliExact => bernoulli_draw(banded, &scaling, &mut rng, &mut clamped),
                };
                out.push(loss);
            }
            (out, clamped)
        })
        .collect();
    let clamped = results.iter().map(|r| r.1).sum();
    let samples = results.into_iter().flat_map(|r| r.0).collect();
    let mut e = EmpiricalDistribution::from_samples(samples);
    e.clamped = clamped;
    Ok(e)
}

fn poisson_draw(banded: &BandedPortfolio, scaling: &[f64], rng: &mut ChaCha8Rng) -> f64 {
    let mut units = 0u64;
    for (sector, &s) in banded.sectors.iter().zip(scaling) {
        for b in &sector.bands {
            let lambda = b.mu * s;
            if lambda > 0.0 {
                let count: f64 = Poisson::new(lambda)
                    .expect("positive finite intensity")
                    .sample(rng);
                units += count as u64 * b.v;
            }
        }
    }
    units as f64 * banded.unit
}

fn bernoulli_draw(
    banded: &BandedPortfolio,
    scaling: &[f64],
    rng: &mut ChaCha8Rng,
    clamped: &mut u64,
) -> f64 {
    let mut loss = 0.0;
    for e in &banded.exposures {
        let mut p = e.loss_rate * scaling[e.sector];
        if p > 1.0 {
            *clamped += 1;
            p = 1.0;
        }
        if p > 0.0 && rng.random::<f64>() < p {
            loss += e.amount;
        }
    }
    loss
}

/// Draws `n` losses from `d` by inverting its CDF. Mass beyond the grid is
/// placed one step past the last grid point.
pub fn sample_distribution(d: &LossDistribution, n: u64, seed: u64) -> EmpiricalDistribution {
    let cdf = d.cdf();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            let idx = cdf.partition_point(|&c| c < u);
            idx as f64 * d.unit()
        })
        .collect();
    EmpiricalDistribution::from_samples(samples)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSummary {
    pub n_draws: u64,
    pub seed: u64,
    pub mode: SimMode,
    pub mean: f64,
    pub stddev: f64,
    pub clamped: u64,
    pub quantiles: Vec<QuantileRow>,
}

pub fn summarize(e: &EmpiricalDistribution, cfg: &SimConfig, levels: &[f64]) -> SampleSummary {
    SampleSummary {
        n_draws: e.n_draws() as u64,
        seed: cfg.seed,
        mode: cfg.mode,
        mean: e.mean(),
        stddev: e.stddev(),
        clamped: e.clamped,
        quantiles: levels
            .iter()
            .map(|&eps| QuantileRow {
                exceedance_prob: eps,
                loss: e.exceedance_quantile(eps),
            })
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub level: f64,
    pub analytic: f64,
    pub empirical: f64,
    /// Binomial standard error of the empirical exceedance probability.
    pub std_error_prob: f64,
    /// The same error in money, through the local slope of the analytic CDF.
    pub std_error_loss: f64,
    /// Analytic quantiles at `level -/+ 3` probability standard errors.
    pub lower: f64,
    pub upper: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    pub flags: usize,
    pub analytic_mean: f64,
    pub empirical_mean: f64,
    pub total_exposure: f64,
    pub analytic_p_exceed_exposure: f64,
    pub empirical_p_exceed_exposure: f64,
}

/// Compares quantiles level by level. The empirical quantile is flagged when
/// it falls outside the analytic quantiles at `level +/- 3 se`, which is the
/// band `+/- 3 se / density` read off the lattice CDF itself.
pub fn compare(
    analytic: &LossDistribution,
    empirical: &EmpiricalDistribution,
    levels: &[f64],
    total_exposure: f64,
) -> Result<Comparison> {
    let n = empirical.n_draws() as f64;
    let last = analytic.len() as f64 * analytic.unit();
    let rows = levels
        .iter()
        .map(|&eps| {
            let q = exceedance_quantile(analytic, eps)?;
            let emp = empirical_exceedance_quantile(empirical, eps)?;
            let se = (eps * (1.0 - eps) / n).sqrt();
            let hi_eps = eps + FLAG_SIGMAS * se;
            let lo_eps = eps - FLAG_SIGMAS * se;
            let lower = if hi_eps < 1.0 {
                exceedance_quantile(analytic, hi_eps)?
            } else {
                0.0
            };
            let upper = if lo_eps > analytic.truncation_mass() {
                exceedance_quantile(analytic, lo_eps)?
            } else {
                last
            };
            Ok(ComparisonRow {
                level: eps,
                analytic: q,
                empirical: emp,
                std_error_prob: se,
                std_error_loss: (upper - lower) / (2.0 * FLAG_SIGMAS),
                lower,
                upper,
                flagged: emp < lower || emp > upper,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let flags = rows.iter().filter(|r| r.flagged).count();
    Ok(Comparison {
        flags,
        rows,
        analytic_mean: crate::analytics::moments(analytic).mean,
        empirical_mean: empirical.mean(),
        total_exposure,
        analytic_p_exceed_exposure: analytic.exceedance_prob(total_exposure),
        empirical_p_exceed_exposure: empirical.exceedance_prob(total_exposure),
    })
}
