use std::fmt::Write as _;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Entries more negative than this cannot be FFT round-off.
pub const NEGATIVE_FLOOR: f64 = -1e-14;
/// Slack allowed on `sum(pmf) <= 1`.
pub const MASS_SLACK: f64 = 1e-9;

/// Products `len_a * len_b` above this are convolved by FFT.
const DIRECT_CONVOLUTION_LIMIT: usize = 1 << 16;

/// Probability mass of the aggregate loss on the lattice `{0, L, 2L, ...}`.
/// Mass beyond the grid is tracked in `truncation_mass` and never
/// renormalized away.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossDistribution {
    unit: f64,
    pmf: Vec<f64>,
    truncation_mass: f64,
}

impl LossDistribution {
    /// Clamps round-off negatives to zero and derives the truncation mass.
    pub fn new(unit: f64, mut pmf: Vec<f64>) -> Result<Self> {
        if !(unit.is_finite() && unit > 0.0) {
            return Err(Error::InvalidUnit(unit));
        }
        if pmf.is_empty() {
            return Err(Error::GridTooSmall { given: 0, required: 1 });
        }
        for (index, p) in pmf.iter_mut().enumerate() {
            if !p.is_finite() || *p < NEGATIVE_FLOOR {
                return Err(Error::NegativeMass { index, value: *p });
            }
            if *p < 0.0 {
                *p = 0.0;
            }
        }
        let total: f64 = pmf.iter().sum();
        if total > 1.0 + MASS_SLACK {
            return Err(Error::ExcessMass(total));
        }
        Ok(Self {
            unit,
            pmf,
            truncation_mass: (1.0 - total).max(0.0),
        })
    }

    /// All mass at `n * unit`.
    pub fn point_mass(unit: f64, n: usize, grid_size: usize) -> Result<Self> {
        if n >= grid_size {
            return Err(Error::GridTooSmall {
                given: grid_size,
                required: n + 1,
            });
        }
        let mut pmf = vec![0.0; grid_size];
        pmf[n] = 1.0;
        Self::new(unit, pmf)
    }

    pub fn unit(&self) -> f64 {
        self.unit
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn len(&self) -> usize {
        self.pmf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pmf.is_empty()
    }

    pub fn truncation_mass(&self) -> f64 {
        self.truncation_mass
    }

    pub fn cdf(&self) -> Vec<f64> {
        self.pmf
            .iter()
            .scan(0.0, |acc, p| {
                *acc += p;
                Some(*acc)
            })
            .collect()
    }

    /// `P(loss > x)` including the mass beyond the grid.
    pub fn exceedance_prob(&self, x: f64) -> f64 {
        let first_above = if x < 0.0 {
            0
        } else {
            ((x / self.unit).floor() as usize).saturating_add(1)
        };
        self.truncation_mass + self.pmf.iter().skip(first_above).sum::<f64>()
    }

    /// Total variation distance, counting the truncation masses as one extra atom.
    pub fn total_variation(&self, other: &Self) -> f64 {
        let n = self.len().max(other.len());
        let at = |d: &Self, i: usize| d.pmf.get(i).copied().unwrap_or(0.0);
        let body: f64 = (0..n).map(|i| (at(self, i) - at(other, i)).abs()).sum();
        0.5 * (body + (self.truncation_mass - other.truncation_mass).abs())
    }

    /// Largest absolute pmf difference.
    pub fn sup_distance(&self, other: &Self) -> f64 {
        let n = self.len().max(other.len());
        let at = |d: &Self, i: usize| d.pmf.get(i).copied().unwrap_or(0.0);
        (0..n)
            .map(|i| (at(self, i) - at(other, i)).abs())
            .fold(0.0, f64::max)
    }

    /// CSV with columns `loss_units,loss_money,pmf,cdf`.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.pmf.len() * 48);
        out.push_str("loss_units,loss_money,pmf,cdf\n");
        let mut cdf = 0.0;
        for (n, p) in self.pmf.iter().enumerate() {
            cdf += p;
            let _ = writeln!(out, "{n},{},{p:e},{cdf:.17}", n as f64 * self.unit);
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("finite floats serialize")
    }
}

impl<'de> Deserialize<'de> for LossDistribution {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            unit: f64,
            pmf: Vec<f64>,
        }
        let raw = Raw::deserialize(deserializer)?;
        LossDistribution::new(raw.unit, raw.pmf).map_err(serde::de::Error::custom)
    }
}

/// Distribution of the sum of two independent losses, truncated to the
/// longer of the two grids.
pub fn convolve(a: &LossDistribution, b: &LossDistribution) -> Result<LossDistribution> {
    if a.unit != b.unit {
        return Err(Error::UnitMismatch(a.unit, b.unit));
    }
    let len = a.len().max(b.len());
    let pmf = convolve_slices(&a.pmf, &b.pmf, len);
    LossDistribution::new(a.unit, pmf)
}

/// First `len` coefficients of the product of two power series.
pub(crate) fn convolve_slices(a: &[f64], b: &[f64], len: usize) -> Vec<f64> {
    // trailing zeros cost nothing in the result
    let trim = |s: &[f64]| s.iter().rposition(|&p| p != 0.0).map_or(0, |i| i + 1);
    let a = &a[..trim(a).min(len)];
    let b = &b[..trim(b).min(len)];
    let mut out = vec![0.0; len];
    if a.is_empty() || b.is_empty() {
        return out;
    }
    if a.len().saturating_mul(b.len()) <= DIRECT_CONVOLUTION_LIMIT {
        for (i, &x) in a.iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            for (o, &y) in out[i..].iter_mut().zip(b) {
                *o += x * y;
            }
        }
        return out;
    }
    let size = (a.len() + b.len() - 1).next_power_of_two();
    let mut planner = FftPlanner::new();
    let forward: Arc<dyn Fft<f64>> = planner.plan_fft_forward(size);
    let inverse = planner.plan_fft_inverse(size);
    let lift = |s: &[f64]| {
        let mut buf = vec![Complex64::new(0.0, 0.0); size];
        for (c, &x) in buf.iter_mut().zip(s) {
            c.re = x;
        }
        buf
    };
    let mut fa = lift(a);
    let mut fb = lift(b);
    forward.process(&mut fa);
    forward.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= y;
    }
    inverse.process(&mut fa);
    let scale = 1.0 / size as f64;
    for (o, c) in out.iter_mut().zip(&fa) {
        *o = c.re * scale;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
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

    #[test]
    fn point_mass_is_identity() {
        let d = poisson(2.0, 40);
        let zero = LossDistribution::point_mass(1.0, 0, 40).unwrap();
        assert_eq!(convolve(&zero, &d).unwrap(), d);
    }

    #[test]
    fn point_masses_shift() {
        let a = LossDistribution::point_mass(1.0, 2, 10).unwrap();
        let b = LossDistribution::point_mass(1.0, 3, 10).unwrap();
        assert_eq!(convolve(&a, &b).unwrap(), LossDistribution::point_mass(1.0, 5, 10).unwrap());
    }

    #[test]
    fn poisson_additivity_direct_and_fft() {
        for n in [60usize, 2048] {
            let c = convolve(&poisson(1.0, n), &poisson(2.0, n)).unwrap();
            assert!(c.sup_distance(&poisson(3.0, n)) < 1e-12);
            assert!(c.total_variation(&poisson(3.0, n)) < 1e-12);
        }
    }

    #[test]
    fn unit_mismatch() {
        let a = LossDistribution::point_mass(1.0, 0, 2).unwrap();
        let b = LossDistribution::point_mass(2.0, 0, 2).unwrap();
        assert!(matches!(convolve(&a, &b), Err(Error::UnitMismatch(..))));
    }

    #[test]
    fn clamps_round_off_and_rejects_real_negatives() {
        let d = LossDistribution::new(1.0, vec![0.5, -5e-15, 0.25]).unwrap();
        assert_eq!(d.pmf()[1], 0.0);
        assert_relative_eq!(d.truncation_mass(), 0.25);
        assert!(matches!(
            LossDistribution::new(1.0, vec![0.5, -1e-12]),
            Err(Error::NegativeMass { index: 1, .. })
        ));
        assert!(matches!(LossDistribution::new(1.0, vec![0.7, 0.7]), Err(Error::ExcessMass(_))));
    }

    #[test]
    fn exceedance_and_csv() {
        let d = LossDistribution::new(2.0, vec![0.5, 0.25, 0.125]).unwrap();
        assert_relative_eq!(d.exceedance_prob(0.0), 0.5);
        assert_relative_eq!(d.exceedance_prob(2.5), 0.25);
        assert_relative_eq!(d.exceedance_prob(-1.0), 1.0);
        let csv = d.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "loss_units,loss_money,pmf,cdf");
        assert!(lines[2].starts_with("1,2,"));
        assert_eq!(lines.len(), 4);
    }

    #[test]
    fn json_round_trip() {
        let d = poisson(1.5, 30);
        let back: LossDistribution = serde_json::from_str(&d.to_json()).unwrap();
        assert_eq!(back, d);
        let value: serde_json::Value = serde_json::from_str(&d.to_json()).unwrap();
        assert!(value.get("truncation_mass").is_some());
    }
}
