//! Characteristic-function inversion of the sector-model PGF.

use num_complex::Complex64;
use rustfft::FftPlanner;

use super::banding::BandedPortfolio;
use super::distribution::LossDistribution;
use crate::{Error, Result};

/// `ln(1 + w)` without cancellation for small `|w|`.
fn ln_1p(w: Complex64) -> Complex64 {
    let re = 0.5 * (2.0 * w.re + w.re * w.re + w.im * w.im).ln_1p();
    let im = w.im.atan2(1.0 + w.re);
    Complex64::new(re, im)
}

/// Evaluates `log G` at the `grid_size` roots of unity, exponentiates and
/// inverse-transforms. Sector factors contribute
/// `alpha [ln(1 - rho) - ln(1 - rho Q(z))]`, or `mu (Q(z) - 1)` without
/// gamma mixing.
pub fn loss_dist_fft(banded: &BandedPortfolio, grid_size: usize) -> Result<LossDistribution> {
    if !grid_size.is_power_of_two() {
        return Err(Error::GridNotPowerOfTwo(grid_size));
    }
    let required = 2 * (banded.max_v() as usize + 1);
    if grid_size < required {
        return Err(Error::GridTooSmall {
            given: grid_size,
            required,
        });
    }

    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(grid_size);
    let inverse = planner.plan_fft_inverse(grid_size);

    let mut log_g = vec![Complex64::new(0.0, 0.0); grid_size];
    let mut q = vec![Complex64::new(0.0, 0.0); grid_size];
    for sector in &banded.sectors {
        let intensity = sector.intensity();
        if intensity <= 0.0 {
            continue;
        }
        q.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        for b in &sector.bands {
            q[b.v as usize].re += b.mu / intensity;
        }
        forward.process(&mut q);
        match sector.params.gamma() {
            Some(shape) => {
                let base = -shape.alpha * shape.beta.ln_1p();
                for (acc, &qz) in log_g.iter_mut().zip(&q) {
                    let w = -shape.rho * qz;
                    if (Complex64::new(1.0, 0.0) + w).norm() == 0.0 {
                        return Err(Error::Invariant(format!(
                            "sector '{}': 1 - rho Q(z) vanishes on the unit circle",
                            sector.name
                        )));
                    }
                    *acc += base - shape.alpha * ln_1p(w);
                }
            }
            None => {
                for (acc, &qz) in log_g.iter_mut().zip(&q) {
                    *acc += intensity * (qz - 1.0);
                }
            }
        }
    }

    for c in log_g.iter_mut() {
        *c = c.exp();
    }
    inverse.process(&mut log_g);
    let scale = 1.0 / grid_size as f64;
    let pmf = log_g.iter().map(|c| c.re * scale).collect();
    LossDistribution::new(banded.unit, pmf)
}
