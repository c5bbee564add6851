use std::fs;
use std::path::Path;

use serde::Serialize;

use indemnity::analytics::{build_report, moments, RunSummary};
use indemnity::engine::{auto_grid_size, band_exposures, BandedPortfolio, LossDistribution};
use indemnity::oracle::{compare, simulate, summarize, Comparison, SampleSummary, SimConfig};
use indemnity::portfolio::{
    assign_sectors, discount_exposures, parse_portfolio, validate_portfolio, DiscountSpec, Finding,
    Portfolio, Severity,
};

use crate::config::{GridChoice, RunConfig};
use crate::CliError;

/// Everything the analytic pipeline produces for one configuration.
pub struct Pipeline {
    pub portfolio: Portfolio,
    pub findings: Vec<Finding>,
    pub banded: BandedPortfolio,
    pub grid_size: usize,
    pub distribution: LossDistribution,
}

pub fn load_portfolio(cfg: &RunConfig) -> Result<Portfolio, CliError> {
    let text = fs::read_to_string(&cfg.input)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", cfg.input.display())))?;
    parse_portfolio(&text).map_err(|e| CliError::Usage(format!("{}: {e}", cfg.input.display())))
}

/// parse, validate, discount, assign sectors, band, compute the distribution.
pub fn run_pipeline(cfg: &RunConfig) -> Result<Pipeline, CliError> {
    let raw = load_portfolio(cfg)?;
    let findings = validate_portfolio(&raw, cfg.tolerance);
    let discount = DiscountSpec::new(cfg.rate, cfg.horizon)?;
    let portfolio = discount_exposures(&raw, &discount);
    let sectored = assign_sectors(&portfolio, &cfg.sectors)?;
    let banded = band_exposures(&sectored, cfg.unit)?;
    let grid_size = match cfg.grid {
        GridChoice::Auto => auto_grid_size(&banded)?,
        GridChoice::Fixed(n) => n,
    };
    let distribution = cfg.backend.compute(&banded, grid_size)?;
    Ok(Pipeline {
        portfolio,
        findings,
        banded,
        grid_size,
        distribution,
    })
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Model(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| CliError::Model(format!("cannot write {}: {e}", path.display())))
}

fn run_summary(cfg: &RunConfig, p: &Pipeline) -> RunSummary {
    RunSummary {
        unit: cfg.unit,
        grid_size: p.grid_size,
        sector_mode: p.banded.mode.as_str().to_string(),
        backend: cfg.backend.as_str().to_string(),
        discount_rate: cfg.rate,
        horizon: cfg.horizon,
        obligors: p.portfolio.len(),
        truncation_mass: p.distribution.truncation_mass(),
    }
}

fn print_header(cfg: &RunConfig, p: &Pipeline) {
    println!(
        "obligors: {}  unit: {}  sector mode: {}  backend: {}  grid: {}",
        p.portfolio.len(),
        cfg.unit,
        p.banded.mode.as_str(),
        cfg.backend.as_str(),
        p.grid_size
    );
}

pub fn cmd_validate(cfg: &RunConfig) -> Result<u8, CliError> {
    let portfolio = load_portfolio(cfg)?;
    let findings = validate_portfolio(&portfolio, cfg.tolerance);
    for f in &findings {
        println!("{f}");
    }
    let errors = findings.iter().filter(|f| f.severity == Severity::Error).count();
    println!(
        "{} obligors, {} findings ({} warnings, {} errors) at tolerance {}",
        portfolio.len(),
        findings.len(),
        findings.len() - errors,
        errors,
        cfg.tolerance
    );
    Ok(if errors > 0 { 1 } else { 0 })
}

pub fn cmd_analyze(cfg: &RunConfig) -> Result<u8, CliError> {
    let p = run_pipeline(cfg)?;
    let report = build_report(
        &p.banded,
        &p.distribution,
        &cfg.levels,
        run_summary(cfg, &p),
        p.findings.clone(),
    )?;
    write_file(&cfg.out, "report.json", &report.to_json())?;
    write_file(&cfg.out, "quantiles.csv", &report.quantiles_csv())?;
    write_file(&cfg.out, "contributions.csv", &report.contributions_csv())?;

    print_header(cfg, &p);
    println!("validation findings: {}", report.findings.len());
    println!("expected loss: {:.2}", report.expected_loss);
    println!(
        "mean: {:.2}  stddev: {:.2}  truncation mass: {:.3e}",
        report.moments.mean,
        report.moments.stddev(),
        p.distribution.truncation_mass()
    );
    println!("{:>12} {:>14}", "P(L > x)", "x");
    for q in &report.quantiles {
        println!("{:>12} {:>14.2}", q.exceedance_prob, q.loss);
    }
    println!(
        "wrote {}",
        ["report.json", "quantiles.csv", "contributions.csv"]
            .map(|f| cfg.out.join(f).display().to_string())
            .join(", ")
    );
    Ok(0)
}

#[derive(Serialize)]
struct SimulationOutput<'a> {
    summary: &'a SampleSummary,
    comparison: &'a Comparison,
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<u8, CliError> {
    let p = run_pipeline(cfg)?;
    let sim = SimConfig::new(cfg.n_draws, cfg.seed, cfg.mc_mode)?;
    let sample = simulate(&p.banded, &sim)?;
    let summary = summarize(&sample, &sim, &cfg.levels);
    let comparison = compare(&p.distribution, &sample, &cfg.levels, p.banded.total_exposure())?;
    let json = serde_json::to_string_pretty(&SimulationOutput {
        summary: &summary,
        comparison: &comparison,
    })
    .map_err(|e| CliError::Model(e.to_string()))?;
    write_file(&cfg.out, "simulation.json", &json)?;
    if cfg.samples_csv {
        write_file(&cfg.out, "samples.csv", &sample.to_csv())?;
    }

    print_header(cfg, &p);
    println!(
        "draws: {}  seed: {}  mode: {}  clamped: {}",
        summary.n_draws,
        summary.seed,
        sim.mode.as_str(),
        summary.clamped
    );
    println!(
        "mean: analytic {:.2}  simulated {:.2} (stddev {:.2})",
        comparison.analytic_mean, comparison.empirical_mean, summary.stddev
    );
    println!(
        "P(L > total exposure {:.2}): analytic {:.3e}  simulated {:.3e}",
        comparison.total_exposure, comparison.analytic_p_exceed_exposure, comparison.empirical_p_exceed_exposure
    );
    println!(
        "{:>10} {:>12} {:>12} {:>12} {:>12} {:>5}",
        "P(L > x)", "analytic", "simulated", "lower", "upper", "flag"
    );
    for r in &comparison.rows {
        println!(
            "{:>10} {:>12.2} {:>12.2} {:>12.2} {:>12.2} {:>5}",
            r.level,
            r.analytic,
            r.empirical,
            r.lower,
            r.upper,
            if r.flagged { "*" } else { "" }
        );
    }
    println!("flags: {}", comparison.flags);
    Ok(0)
}

pub fn cmd_dist(cfg: &RunConfig) -> Result<u8, CliError> {
    let p = run_pipeline(cfg)?;
    write_file(&cfg.out, "distribution.csv", &p.distribution.to_csv())?;
    write_file(&cfg.out, "distribution.json", &p.distribution.to_json())?;
    let m = moments(&p.distribution);
    print_header(cfg, &p);
    println!("mean: {}", m.mean);
    println!("variance: {}", m.variance);
    println!("truncation_mass: {:e}", p.distribution.truncation_mass());
    Ok(0)
}
