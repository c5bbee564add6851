//! Panjer recursions for the compound Poisson and compound negative-binomial
//! laws of the (a, b, 0) class.

use std::collections::BTreeMap;

use rayon::prelude::*;

use super::banding::{BandedPortfolio, BandedSector, GammaShape};
use super::distribution::{convolve_slices, LossDistribution};
use crate::{Error, Result};

pub(crate) fn check_grid(banded: &BandedPortfolio, grid_size: usize) -> Result<()> {
    let required = banded.max_v() as usize + 1;
    if grid_size < required {
        return Err(Error::GridTooSmall {
            given: grid_size,
            required,
        });
    }
    Ok(())
}

/// Pure compound-Poisson loss: all bands of all sectors share one Poisson
/// count, no gamma mixing.
pub fn loss_dist_poisson(banded: &BandedPortfolio, grid_size: usize) -> Result<LossDistribution> {
    check_grid(banded, grid_size)?;
    let mut levels: BTreeMap<u64, f64> = BTreeMap::new();
    for b in banded.sectors.iter().flat_map(|s| &s.bands) {
        if b.mu > 0.0 {
            *levels.entry(b.v).or_insert(0.0) += b.mu;
        }
    }
    let terms: Vec<(usize, f64)> = levels.into_iter().map(|(v, mu)| (v as usize, mu)).collect();
    let pmf = compound_poisson(&terms, grid_size)?;
    LossDistribution::new(banded.unit, pmf)
}

/// Gamma-mixed sector model: one compound negative binomial per sector
/// (compound Poisson where the sector has no volatility), convolved across
/// independent sectors.
pub fn loss_dist_sector(banded: &BandedPortfolio, grid_size: usize) -> Result<LossDistribution> {
    check_grid(banded, grid_size)?;
    let parts = banded
        .sectors
        .par_iter()
        .filter(|s| s.intensity() > 0.0)
        .map(|s| sector_pmf(s, grid_size))
        .collect::<Result<Vec<_>>>()?;
    let pmf = parts
        .into_iter()
        .reduce(|acc, next| convolve_slices(&acc, &next, grid_size))
        .unwrap_or_else(|| {
            let mut point = vec![0.0; grid_size];
            point[0] = 1.0;
            point
        });
    LossDistribution::new(banded.unit, pmf)
}

/// Loss pmf of one sector on `grid_size` points.
pub fn sector_pmf(sector: &BandedSector, grid_size: usize) -> Result<Vec<f64>> {
    let intensity = sector.intensity();
    let terms: Vec<(usize, f64)> = sector
        .bands
        .iter()
        .filter(|b| b.mu > 0.0)
        .map(|b| (b.v as usize, b.mu))
        .collect();
    if terms.is_empty() {
        return Err(Error::DegenerateSector(sector.name.clone()));
    }
    match sector.params.gamma() {
        None => compound_poisson(&terms, grid_size),
        Some(shape) => {
            let severity: Vec<(usize, f64)> =
                terms.iter().map(|&(v, mu)| (v, mu / intensity)).collect();
            compound_negative_binomial(&severity, shape, grid_size)
        }
    }
    .map_err(|e| match e {
        Error::Invariant(m) => Error::Invariant(format!("sector '{}': {m}", sector.name)),
        other => other,
    })
}

/// `g_0 = exp(-sum mu)`, `g_n = (1/n) sum_j mu_j v_j g_{n - v_j}`.
/// `terms` are `(v, mu)` pairs sorted by `v`.
fn compound_poisson(terms: &[(usize, f64)], grid_size: usize) -> Result<Vec<f64>> {
    let lambda: f64 = terms.iter().map(|t| t.1).sum();
    let mut g = vec![0.0; grid_size];
    g[0] = (-lambda).exp();
    if g[0] == 0.0 {
        return Err(Error::Invariant(format!(
            "expected default count {lambda} underflows the recursion start"
        )));
    }
    let weights: Vec<(usize, f64)> = terms.iter().map(|&(v, mu)| (v, mu * v as f64)).collect();
    for n in 1..grid_size {
        let mut acc = 0.0;
        for &(v, w) in &weights {
            if v > n {
                break;
            }
            acc += w * g[n - v];
        }
        g[n] = acc / n as f64;
    }
    Ok(g)
}

/// Negative-binomial count with `a = rho`, `b = rho (alpha - 1)` and
/// `g_0 = (1 - rho)^alpha`; severity `(v, f_v)` with no mass at zero, so
/// `g_n = sum_v (a + b v / n) f_v g_{n - v}`.
fn compound_negative_binomial(
    severity: &[(usize, f64)],
    shape: GammaShape,
    grid_size: usize,
) -> Result<Vec<f64>> {
    let GammaShape { alpha, beta, rho } = shape;
    let a = rho;
    let b = rho * (alpha - 1.0);
    let mut g = vec![0.0; grid_size];
    // (1 - rho)^alpha = (1 + beta)^(-alpha)
    g[0] = (-alpha * beta.ln_1p()).exp();
    if g[0] == 0.0 {
        return Err(Error::Invariant(format!(
            "(1 - rho)^alpha underflows at alpha = {alpha}, rho = {rho}"
        )));
    }
    for n in 1..grid_size {
        let inv_n = 1.0 / n as f64;
        let mut acc = 0.0;
        for &(v, f) in severity {
            if v > n {
                break;
            }
            acc += (a + b * v as f64 * inv_n) * f * g[n - v];
        }
        g[n] = acc;
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::banding::{Band, SectorParams};
    use crate::portfolio::{SectorMode, SectorRate};

    fn banded(sectors: Vec<(Vec<Band>, SectorParams)>) -> BandedPortfolio {
        BandedPortfolio {
            unit: 1.0,
            mode: SectorMode::Single,
            sectors: sectors
                .into_iter()
                .enumerate()
                .map(|(k, (bands, params))| BandedSector {
                    name: format!("s{k}"),
                    rate: SectorRate { mean: 0.0, stddev: 0.0 },
                    params,
                    bands,
                })
                .collect(),
            obligors: vec![],
            exposures: vec![],
        }
    }

    fn poisson_only(bands: Vec<Band>) -> BandedPortfolio {
        let mu = bands.iter().map(|b| b.mu).sum();
        banded(vec![(bands, SectorParams::new(mu, 0.0).unwrap())])
    }

    // direct e^{-l} l^n / n! with n! as an explicit product
    fn poisson_direct(lambda: f64, n: usize) -> f64 {
        let factorial: f64 = (1..=n).map(|k| k as f64).product();
        (-lambda).exp() * lambda.powi(n as i32) / factorial
    }

    #[test]
    fn single_unit_band_is_poisson() {
        let b = poisson_only(vec![Band::new(1, 2.0)]);
        let d = loss_dist_poisson(&b, 64).unwrap();
        for n in 0..=10 {
            assert!((d.pmf()[n] - poisson_direct(2.0, n)).abs() < 1e-15, "n = {n}");
        }
        let s = loss_dist_sector(&b, 64).unwrap();
        assert!(s.sup_distance(&d) < 1e-16);
    }

    #[test]
    fn two_band_hand_enumeration() {
        // (v=1, mu=1), (v=2, mu=1): loss 2 from two unit defaults or one double
        let b = poisson_only(vec![Band::new(1, 1.0), Band::new(2, 2.0)]);
        let d = loss_dist_poisson(&b, 8).unwrap();
        let e2 = (-2.0f64).exp();
        assert!((d.pmf()[0] - e2).abs() < 1e-16);
        assert!((d.pmf()[1] - e2).abs() < 1e-16);
        assert!((d.pmf()[2] - e2 * 1.5).abs() < 1e-16);
    }

    #[test]
    fn vanishing_intensity_concentrates_at_zero() {
        let d = loss_dist_poisson(&poisson_only(vec![Band::new(3, 1e-12)]), 8).unwrap();
        assert!((d.pmf()[0] - 1.0).abs() < 1e-11);
        let empty = loss_dist_sector(&poisson_only(vec![Band::new(3, 0.0)]), 8).unwrap();
        assert_eq!(empty.pmf()[0], 1.0);
    }

    #[test]
    fn grid_too_small_names_minimum() {
        let b = poisson_only(vec![Band::new(5, 1.0)]);
        assert_eq!(
            loss_dist_poisson(&b, 5).unwrap_err(),
            Error::GridTooSmall { given: 5, required: 6 }
        );
        assert!(loss_dist_sector(&b, 4).is_err());
    }

    #[test]
    fn negative_binomial_closed_form() {
        let (alpha, rho) = (2.0, 0.3);
        let params = SectorParams::from_shape(alpha, rho).unwrap();
        let b = banded(vec![(vec![Band::new(1, params.mu())], params)]);
        let d = loss_dist_sector(&b, 64).unwrap();
        // C(n + 1, n) (0.7)^2 0.3^n = (n + 1) 0.49 0.3^n
        for n in 0..=10 {
            let expected = (n + 1) as f64 * 0.49 * 0.3f64.powi(n as i32);
            assert!((d.pmf()[n] - expected).abs() < 1e-15, "n = {n}");
        }
    }

    #[test]
    fn two_sectors_are_convolved() {
        let p1 = SectorParams::new(0.5, 0.4).unwrap();
        let p2 = SectorParams::new(0.3, 0.3).unwrap();
        let s1 = vec![Band::new(1, 0.2), Band::new(3, 0.9)];
        let s2 = vec![Band::new(2, 0.6)];
        let both = loss_dist_sector(&banded(vec![(s1.clone(), p1), (s2.clone(), p2)]), 256).unwrap();
        let a = loss_dist_sector(&banded(vec![(s1, p1)]), 256).unwrap();
        let b = loss_dist_sector(&banded(vec![(s2, p2)]), 256).unwrap();
        let manual = crate::engine::convolve(&a, &b).unwrap();
        assert!(both.total_variation(&manual) < 1e-12);
    }
}
