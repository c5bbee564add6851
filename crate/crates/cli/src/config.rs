use std::path::PathBuf;

use clap::Args;
use indemnity::engine::Backend;
use indemnity::oracle::SimMode;
use indemnity::portfolio::{SectorAssignment, SectorMode, SectorRate, DEFAULT_VALIDATION_TOLERANCE};

use crate::CliError;

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Obligor CSV.
    #[arg(long, default_value = "data/table1_eu22.csv")]
    pub input: PathBuf,

    /// Grid unit L, in the portfolio's currency unit.
    #[arg(long, default_value_t = 1.0)]
    pub unit: f64,

    #[arg(long, default_value = "crop-livestock", value_parser = ["single", "crop-livestock", "per-obligor"])]
    pub sector_mode: String,

    /// Sector rate override `name=mean,stddev` (fractions); repeatable.
    #[arg(long = "sector-rate", value_name = "K=MU,SIGMA")]
    pub sector_rates: Vec<String>,

    /// Continuously compounded discount rate.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub rate: f64,

    /// Discount horizon in years.
    #[arg(long, default_value_t = 0.0)]
    pub horizon: f64,

    #[arg(long, default_value = "panjer", value_parser = ["panjer", "fft"])]
    pub backend: String,

    /// Grid size: `auto` or a point count (a power of two for fft).
    #[arg(long, default_value = "auto")]
    pub grid: String,

    /// Comma-separated exceedance probabilities.
    #[arg(long, default_value = "0.1,0.05,0.025,0.01,0.005,0.0025,0.001")]
    pub levels: String,

    #[arg(long, default_value_t = 42)]
    pub seed: u64,

    #[arg(long, default_value_t = 1_000_000)]
    pub n_draws: u64,

    #[arg(long, default_value = "poisson-banded", value_parser = ["poisson-banded", "bernoulli-exact"])]
    pub mc_mode: String,

    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,

    /// Relative tolerance for validation findings.
    #[arg(long, default_value_t = DEFAULT_VALIDATION_TOLERANCE)]
    pub tolerance: f64,

    /// Also write every simulated loss to samples.csv (simulate only).
    #[arg(long)]
    pub samples_csv: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridChoice {
    Auto,
    Fixed(usize),
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub input: PathBuf,
    pub unit: f64,
    pub sectors: SectorAssignment,
    pub rate: f64,
    pub horizon: f64,
    pub backend: Backend,
    pub grid: GridChoice,
    pub levels: Vec<f64>,
    pub seed: u64,
    pub n_draws: u64,
    pub mc_mode: SimMode,
    pub out: PathBuf,
    pub tolerance: f64,
    pub samples_csv: bool,
}

fn usage(message: impl Into<String>) -> CliError {
    CliError::Usage(message.into())
}

pub fn parse_levels(text: &str) -> Result<Vec<f64>, CliError> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|s| {
            let eps: f64 = s
                .trim()
                .parse()
                .map_err(|_| usage(format!("--levels: '{s}' is not a number")))?;
            if eps > 0.0 && eps < 1.0 {
                Ok(eps)
            } else {
                Err(usage(format!("--levels: {eps} outside (0, 1)")))
            }
        })
        .collect()
}

fn parse_sector_rate(text: &str) -> Result<(String, SectorRate), CliError> {
    let bad = || usage(format!("--sector-rate: expected name=mean,stddev, got '{text}'"));
    let (name, values) = text.split_once('=').ok_or_else(bad)?;
    let (mean, stddev) = values.split_once(',').ok_or_else(bad)?;
    let mean: f64 = mean.trim().parse().map_err(|_| bad())?;
    let stddev: f64 = stddev.trim().parse().map_err(|_| bad())?;
    if name.trim().is_empty() {
        return Err(bad());
    }
    Ok((name.trim().to_string(), SectorRate { mean, stddev }))
}

impl RunConfig {
    pub fn from_args(args: &RunArgs) -> Result<Self, CliError> {
        if !(args.unit.is_finite() && args.unit > 0.0) {
            return Err(usage(format!("--unit must be positive, got {}", args.unit)));
        }
        if !(args.horizon.is_finite() && args.horizon >= 0.0) {
            return Err(usage(format!("--horizon must be >= 0, got {}", args.horizon)));
        }
        if !args.rate.is_finite() {
            return Err(usage("--rate must be finite"));
        }
        if !(args.tolerance.is_finite() && args.tolerance >= 0.0) {
            return Err(usage("--tolerance must be >= 0"));
        }
        if args.n_draws == 0 {
            return Err(usage("--n-draws must be >= 1"));
        }
        let mode: SectorMode = args.sector_mode.parse().map_err(usage)?;
        let mut sectors = SectorAssignment::new(mode);
        for text in &args.sector_rates {
            let (name, rate) = parse_sector_rate(text)?;
            sectors = sectors.with_rate(name, rate);
        }
        let grid = match args.grid.as_str() {
            "auto" => GridChoice::Auto,
            n => GridChoice::Fixed(
                n.parse()
                    .ok()
                    .filter(|&n: &usize| n > 0)
                    .ok_or_else(|| usage(format!("--grid: expected auto or a positive integer, got '{n}'")))?,
            ),
        };
        let levels = parse_levels(&args.levels)?;
        Ok(Self {
            input: args.input.clone(),
            unit: args.unit,
            sectors,
            rate: args.rate,
            horizon: args.horizon,
            backend: args.backend.parse().map_err(usage)?,
            grid,
            levels,
            seed: args.seed,
            n_draws: args.n_draws,
            mc_mode: args.mc_mode.parse().map_err(usage)?,
            out: args.out.clone(),
            tolerance: args.tolerance,
            samples_csv: args.samples_csv,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use indemnity::analytics::DEFAULT_LEVELS;

    #[test]
    fn default_levels_flag_matches_library_default() {
        assert_eq!(parse_levels("0.1,0.05,0.025,0.01,0.005,0.0025,0.001").unwrap(), DEFAULT_LEVELS);
    }

    #[test]
    fn levels_parse() {
        assert_eq!(parse_levels("0.1, 0.01").unwrap(), vec![0.1, 0.01]);
        assert!(parse_levels("").unwrap().is_empty());
        assert!(parse_levels("0.5,1.0").is_err());
        assert!(parse_levels("x").is_err());
    }

    #[test]
    fn sector_rate_parse() {
        let (name, rate) = parse_sector_rate("crop=0.02,0.015").unwrap();
        assert_eq!(name, "crop");
        assert_eq!(rate, SectorRate { mean: 0.02, stddev: 0.015 });
        assert!(parse_sector_rate("crop=0.02").is_err());
        assert!(parse_sector_rate("=0.1,0.1").is_err());
    }
}
