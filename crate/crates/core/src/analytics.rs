//! Exceedance quantiles, moments and VaR allocation to obligors.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::engine::{BandedPortfolio, LossDistribution};
use crate::portfolio::Finding;
use crate::{Error, Result};

/// Truncation mass above which moments are flagged as understated.
pub const MOMENT_TRUNCATION_CAVEAT: f64 = 1e-9;

/// Exceedance levels reported by default.
pub const DEFAULT_LEVELS: [f64; 7] = [0.1, 0.05, 0.025, 0.01, 0.005, 0.0025, 0.001];

fn check_level(eps: f64) -> Result<()> {
    if eps > 0.0 && eps < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidLevel(eps))
    }
}

/// Smallest grid point `x` with `P(loss > x) <= eps`.
pub fn exceedance_quantile(d: &LossDistribution, eps: f64) -> Result<f64> {
    check_level(eps)?;
    if d.truncation_mass() >= eps {
        return Err(Error::TailOffGrid {
            truncation: d.truncation_mass(),
            eps,
        });
    }
    // walk down from the top; `tail` is P(loss > n) at each step
    let mut tail = d.truncation_mass();
    let mut answer = d.len() - 1;
    for (n, &p) in d.pmf().iter().enumerate().rev() {
        if tail > eps {
            break;
        }
        answer = n;
        tail += p;
    }
    Ok(answer as f64 * d.unit())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
    /// Set when the truncation mass exceeds [`MOMENT_TRUNCATION_CAVEAT`].
    pub truncated: bool,
}

impl Moments {
    pub fn stddev(&self) -> f64 {
        self.variance.max(0.0).sqrt()
    }
}

pub fn moments(d: &LossDistribution) -> Moments {
    let (m1, m2) = d
        .pmf()
        .iter()
        .enumerate()
        .fold((0.0, 0.0), |(m1, m2), (n, &p)| {
            let n = n as f64;
            (m1 + n * p, m2 + n * n * p)
        });
    let unit = d.unit();
    let mean = m1 * unit;
    Moments {
        mean,
        variance: m2 * unit * unit - mean * mean,
        truncated: d.truncation_mass() > MOMENT_TRUNCATION_CAVEAT,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileRow {
    pub exceedance_prob: f64,
    pub loss: f64,
}

pub fn quantile_rows(d: &LossDistribution, levels: &[f64]) -> Result<Vec<QuantileRow>> {
    levels
        .iter()
        .map(|&eps| {
            Ok(QuantileRow {
                exceedance_prob: eps,
                loss: exceedance_quantile(d, eps)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContributionRow {
    pub id: String,
    pub name: String,
    pub expected_loss: f64,
    /// One entry per level of the enclosing table.
    pub contributions: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContributionTable {
    pub levels: Vec<f64>,
    pub rows: Vec<ContributionRow>,
    pub total: ContributionRow,
}

/// Each obligor's share of the analytic loss variance:
/// `sum eps v L^2` over its sub-exposures plus, per sector,
/// `(sigma_k / mu_k)^2 (eps_i^k L) (E_k L)`.
pub fn variance_contributions(banded: &BandedPortfolio) -> Vec<f64> {
    let unit2 = banded.unit * banded.unit;
    let sector_el: Vec<f64> = banded
        .sectors
        .iter()
        .map(|s| s.expected_loss_units())
        .collect();
    banded
        .obligors
        .iter()
        .map(|o| {
            o.assignments
                .iter()
                .map(|a| {
                    let w = banded.sectors[a.sector].params.variation_sq();
                    (a.epsilon * a.v as f64 + w * a.epsilon * sector_el[a.sector]) * unit2
                })
                .sum()
        })
        .collect()
}

/// Allocates `VaR(eps)` as `EL_i + (VaR - EL) * VC_i / sum VC`, which adds up
/// to the VaR exactly.
pub fn risk_contributions(
    banded: &BandedPortfolio,
    d: &LossDistribution,
    levels: &[f64],
) -> Result<ContributionTable> {
    let vars: Vec<f64> = levels
        .iter()
        .map(|&eps| exceedance_quantile(d, eps))
        .collect::<Result<_>>()?;
    let el: Vec<f64> = banded
        .obligors
        .iter()
        .map(|o| o.expected_loss_units() * banded.unit)
        .collect();
    let el_total: f64 = el.iter().sum();
    let vc = variance_contributions(banded);
    let vc_total: f64 = vc.iter().sum();
    if !levels.is_empty() && vc_total <= 0.0 {
        return Err(Error::DegeneratePortfolio);
    }
    let rows = banded
        .obligors
        .iter()
        .zip(el.iter().zip(&vc))
        .map(|(o, (&el_i, &vc_i))| ContributionRow {
            id: o.id.clone(),
            name: o.name.clone(),
            expected_loss: el_i,
            contributions: vars
                .iter()
                .map(|&var| el_i + (var - el_total) * vc_i / vc_total)
                .collect(),
        })
        .collect();
    Ok(ContributionTable {
        levels: levels.to_vec(),
        rows,
        total: ContributionRow {
            id: "TOTAL".into(),
            name: "TOTAL".into(),
            expected_loss: el_total,
            contributions: vars,
        },
    })
}

/// Settings of the pipeline run a report came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub unit: f64,
    pub grid_size: usize,
    pub sector_mode: String,
    pub backend: String,
    pub discount_rate: f64,
    pub horizon: f64,
    pub obligors: usize,
    pub truncation_mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub run: RunSummary,
    pub expected_loss: f64,
    pub moments: Moments,
    pub quantiles: Vec<QuantileRow>,
    pub contributions: ContributionTable,
    pub findings: Vec<Finding>,
}

pub fn build_report(
    banded: &BandedPortfolio,
    d: &LossDistribution,
    levels: &[f64],
    run: RunSummary,
    findings: Vec<Finding>,
) -> Result<RiskReport> {
    Ok(RiskReport {
        run,
        expected_loss: banded.expected_loss(),
        moments: moments(d),
        quantiles: quantile_rows(d, levels)?,
        contributions: risk_contributions(banded, d, levels)?,
        findings,
    })
}

fn level_header(eps: f64) -> String {
    format!("p_{eps}")
}

impl RiskReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// `exceedance_prob,loss`, one row per level.
    pub fn quantiles_csv(&self) -> String {
        let mut out = String::from("exceedance_prob,loss\n");
        for q in &self.quantiles {
            let _ = writeln!(out, "{},{}", q.exceedance_prob, q.loss);
        }
        out
    }

    /// `id,name,expected_loss,p_<level>...`, one row per obligor plus TOTAL.
    pub fn contributions_csv(&self) -> String {
        let table = &self.contributions;
        let mut out = String::from("id,name,expected_loss");
        for &eps in &table.levels {
            out.push(',');
            out.push_str(&level_header(eps));
        }
        out.push('\n');
        for row in table.rows.iter().chain(std::iter::once(&table.total)) {
            let name = if row.name.contains(',') {
                format!("\"{}\"", row.name.replace('"', "\"\""))
            } else {
                row.name.clone()
            };
            let _ = write!(out, "{},{},{:.6}", row.id, name, row.expected_loss);
            for c in &row.contributions {
                let _ = write!(out, ",{c:.6}");
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{band_exposures, loss_dist_sector};
    use crate::portfolio::{assign_sectors, ObligorRecord, Portfolio, SectorAssignment, SectorMode};
    use approx::assert_relative_eq;

    fn poisson(lambda: f64, n: usize) -> LossDistribution {
        let mut pmf = Vec::with_capacity(n);
        let mut p = (-lambda).exp();
        for k in 0..n {
            pmf.push(p);
            p *= lambda / (k + 1) as f64;
        }
        LossDistribution::new(1.0, pmf).unwrap()
    }

    fn portfolio(rows: &[(&str, f64, f64, f64)], mode: SectorMode, unit: f64) -> BandedPortfolio {
        let obligors = rows
            .iter()
            .map(|&(id, x, p, sd)| ObligorRecord {
                id: id.into(),
                name: id.into(),
                exposure: x,
                mean_loss_rate: p,
                loss_rate_stddev: sd,
                crop_ratio: 0.4,
                livestock_ratio: 0.6,
                expected_loss_declared: None,
            })
            .collect();
        let p = Portfolio::new(obligors, "M").unwrap();
        let s = assign_sectors(&p, &SectorAssignment::new(mode)).unwrap();
        band_exposures(&s, unit).unwrap()
    }

    #[test]
    fn point_mass_quantile_and_moments() {
        let d = LossDistribution::point_mass(2.0, 5, 16).unwrap();
        assert_eq!(exceedance_quantile(&d, 0.01).unwrap(), 10.0);
        let m = moments(&d);
        assert_eq!(m.mean, 10.0);
        assert_eq!(m.variance, 0.0);
        assert!(!m.truncated);
    }

    #[test]
    fn poisson_tail_quantile() {
        // P(X > 4) = 0.0527, P(X > 5) = 0.0166
        let d = poisson(2.0, 64);
        assert_eq!(exceedance_quantile(&d, 0.05).unwrap(), 5.0);
        assert_eq!(exceedance_quantile(&d, 0.06).unwrap(), 4.0);
    }

    #[test]
    fn poisson_moments() {
        let m = moments(&poisson(3.0, 128));
        assert!((m.mean - 3.0).abs() < 1e-9);
        assert!((m.variance - 3.0).abs() < 1e-9);
    }

    #[test]
    fn quantile_errors() {
        let d = LossDistribution::new(1.0, vec![0.5, 0.3]).unwrap();
        assert!(matches!(exceedance_quantile(&d, 0.1), Err(Error::TailOffGrid { .. })));
        assert!(matches!(exceedance_quantile(&d, 0.0), Err(Error::InvalidLevel(_))));
        assert!(matches!(exceedance_quantile(&d, 1.0), Err(Error::InvalidLevel(_))));
        assert!(moments(&d).truncated);
    }

    #[test]
    fn sole_obligor_takes_all() {
        let b = portfolio(&[("A", 40.0, 0.05, 0.03)], SectorMode::Single, 1.0);
        let d = loss_dist_sector(&b, 4096).unwrap();
        let t = risk_contributions(&b, &d, &[0.1, 0.01]).unwrap();
        for (c, var) in t.rows[0].contributions.iter().zip(&t.total.contributions) {
            assert_relative_eq!(*c, *var, max_relative = 1e-12);
        }
    }

    #[test]
    fn identical_obligors_split_evenly() {
        let b = portfolio(
            &[("A", 20.0, 0.05, 0.03), ("B", 20.0, 0.05, 0.03)],
            SectorMode::Single,
            1.0,
        );
        let d = loss_dist_sector(&b, 4096).unwrap();
        let t = risk_contributions(&b, &d, &[0.05]).unwrap();
        assert_eq!(t.rows[0].contributions, t.rows[1].contributions);
        assert_relative_eq!(t.rows[0].contributions[0], t.total.contributions[0] / 2.0, max_relative = 1e-12);
    }

    #[test]
    fn variance_contributions_sum_to_portfolio_variance() {
        let b = portfolio(
            &[("A", 20.0, 0.05, 0.03), ("B", 7.5, 0.1, 0.01), ("C", 3.0, 0.2, 0.0)],
            SectorMode::CropLivestock,
            0.5,
        );
        let vc: f64 = variance_contributions(&b).iter().sum();
        assert_relative_eq!(vc, b.variance(), max_relative = 1e-12);
    }

    #[test]
    fn report_with_no_levels_and_round_trip() {
        let b = portfolio(&[("A", 20.0, 0.05, 0.03)], SectorMode::Single, 1.0);
        let d = loss_dist_sector(&b, 1024).unwrap();
        let run = RunSummary {
            unit: 1.0,
            grid_size: 1024,
            sector_mode: "single".into(),
            backend: "panjer".into(),
            discount_rate: 0.0,
            horizon: 0.0,
            obligors: 1,
            truncation_mass: d.truncation_mass(),
        };
        let r = build_report(&b, &d, &[], run.clone(), vec![]).unwrap();
        assert!(r.quantiles.is_empty());
        assert_relative_eq!(r.moments.mean, 1.0, max_relative = 1e-9);
        assert_eq!(r.quantiles_csv(), "exceedance_prob,loss\n");

        let full = build_report(&b, &d, &[0.1, 0.01], run, vec![]).unwrap();
        let back: RiskReport = serde_json::from_str(&full.to_json()).unwrap();
        assert_eq!(back, full);
        let csv = full.contributions_csv();
        assert!(csv.starts_with("id,name,expected_loss,p_0.1,p_0.01\n"));
        assert!(csv.lines().last().unwrap().starts_with("TOTAL,TOTAL,"));
    }
}
