//! Obligor data: CSV ingest, validation, present-value discounting and the
//! split of exposures into risk sectors.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Crop/livestock ratio sums further than this from 1 are renormalized.
pub const RATIO_RENORMALIZE_EPS: f64 = 1e-9;

/// Default relative tolerance for [`validate_portfolio`].
pub const DEFAULT_VALIDATION_TOLERANCE: f64 = 0.02;

/// Relative expected-loss mismatch above which a finding is an error rather
/// than a warning. A percent typed where a fraction is expected shows up as a
/// 100x mismatch.
pub const EXPECTED_LOSS_ERROR_THRESHOLD: f64 = 0.5;

/// One insured entity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObligorRecord {
    pub id: String,
    pub name: String,
    /// Maximum payable amount, in the portfolio's currency unit.
    pub exposure: f64,
    /// Mean loss rate as a fraction of exposure.
    pub mean_loss_rate: f64,
    /// Standard deviation of the loss rate, as a fraction.
    pub loss_rate_stddev: f64,
    pub crop_ratio: f64,
    pub livestock_ratio: f64,
    /// Declared expected loss, kept only to cross-check `exposure * mean_loss_rate`.
    pub expected_loss_declared: Option<f64>,
}

impl ObligorRecord {
    pub fn expected_loss(&self) -> f64 {
        self.exposure * self.mean_loss_rate
    }

    fn check(&self) -> Result<()> {
        let fail = |message: String| {
            Err(Error::InvalidObligor {
                id: self.id.clone(),
                message,
            })
        };
        if self.id.is_empty() {
            return fail("empty id".into());
        }
        if !(self.exposure.is_finite() && self.exposure > 0.0) {
            return fail(format!("exposure must be > 0, got {}", self.exposure));
        }
        if !(0.0..=1.0).contains(&self.mean_loss_rate) {
            return fail(format!(
                "mean_loss_rate must lie in [0, 1], got {}",
                self.mean_loss_rate
            ));
        }
        if !(self.loss_rate_stddev.is_finite() && self.loss_rate_stddev >= 0.0) {
            return fail(format!(
                "loss_rate_stddev must be >= 0, got {}",
                self.loss_rate_stddev
            ));
        }
        for (label, r) in [("crop_ratio", self.crop_ratio), ("livestock_ratio", self.livestock_ratio)] {
            if !(0.0..=1.0).contains(&r) {
                return fail(format!("{label} must lie in [0, 1], got {r}"));
            }
        }
        if let Some(el) = self.expected_loss_declared {
            if !(el.is_finite() && el >= 0.0) {
                return fail(format!("expected_loss must be >= 0, got {el}"));
            }
        }
        Ok(())
    }
}

/// A non-empty, id-unique, ordered list of obligors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Portfolio {
    obligors: Vec<ObligorRecord>,
    pub currency_unit: String,
    pub as_of: Option<String>,
}

impl Portfolio {
    pub fn new(obligors: Vec<ObligorRecord>, currency_unit: impl Into<String>) -> Result<Self> {
        if obligors.is_empty() {
            return Err(Error::EmptyPortfolio);
        }
        let mut seen = HashSet::new();
        for o in &obligors {
            o.check()?;
            if !seen.insert(o.id.as_str()) {
                return Err(Error::DuplicateId(o.id.clone()));
            }
        }
        Ok(Self {
            obligors,
            currency_unit: currency_unit.into(),
            as_of: None,
        })
    }

    pub fn obligors(&self) -> &[ObligorRecord] {
        &self.obligors
    }

    pub fn len(&self) -> usize {
        self.obligors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obligors.is_empty()
    }

    pub fn total_exposure(&self) -> f64 {
        self.obligors.iter().map(|o| o.exposure).sum()
    }

    /// Sum of `exposure * mean_loss_rate` over obligors.
    pub fn expected_loss(&self) -> f64 {
        self.obligors.iter().map(ObligorRecord::expected_loss).sum()
    }
}

const REQUIRED_COLUMNS: [&str; 7] = [
    "id",
    "name",
    "exposure",
    "mean_loss_rate",
    "loss_rate_stddev",
    "crop_ratio",
    "livestock_ratio",
];
const EXPECTED_LOSS_COLUMN: &str = "expected_loss";

/// Parses the obligor CSV. Columns are located by header name, so extra
/// columns (a rating, say) are ignored. Rates are fractions, never percents.
pub fn parse_portfolio(csv_text: &str) -> Result<Portfolio> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(csv_text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::Csv(e.to_string()))?
        .clone();
    let position = |name: &str| headers.iter().position(|h| h == name);
    let mut columns = [0usize; 7];
    for (slot, name) in columns.iter_mut().zip(REQUIRED_COLUMNS) {
        *slot = position(name).ok_or_else(|| Error::Malformed {
            row: 1,
            column: name.to_string(),
            message: "missing header column".into(),
        })?;
    }
    let el_column = position(EXPECTED_LOSS_COLUMN);

    let mut obligors = Vec::new();
    let mut seen = HashSet::new();
    for record in reader.records() {
        let record = record.map_err(|e| match e.position() {
            Some(pos) => Error::Malformed {
                row: pos.line() as usize,
                column: "-".into(),
                message: e.to_string(),
            },
            None => Error::Csv(e.to_string()),
        })?;
        let row = record.position().map_or(0, |p| p.line() as usize);
        if record.iter().all(str::is_empty) {
            continue;
        }
        let text = |idx: usize, name: &str| -> Result<String> {
            record
                .get(idx)
                .map(str::to_string)
                .ok_or_else(|| Error::Malformed {
                    row,
                    column: name.to_string(),
                    message: "missing field".into(),
                })
        };
        let number = |idx: usize, name: &str| -> Result<f64> {
            let raw = text(idx, name)?;
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Malformed {
                    row,
                    column: name.to_string(),
                    message: format!("not a number: '{raw}'"),
                })
        };
        let id = text(columns[0], "id")?;
        if id.is_empty() {
            return Err(Error::Malformed {
                row,
                column: "id".into(),
                message: "empty id".into(),
            });
        }
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateId(id));
        }
        let expected_loss_declared = match el_column {
            Some(idx) => match record.get(idx) {
                Some("") | None => None,
                Some(_) => Some(number(idx, EXPECTED_LOSS_COLUMN)?),
            },
            None => None,
        };
        let obligor = ObligorRecord {
            name: text(columns[1], "name")?,
            exposure: number(columns[2], "exposure")?,
            mean_loss_rate: number(columns[3], "mean_loss_rate")?,
            loss_rate_stddev: number(columns[4], "loss_rate_stddev")?,
            crop_ratio: number(columns[5], "crop_ratio")?,
            livestock_ratio: number(columns[6], "livestock_ratio")?,
            expected_loss_declared,
            id,
        };
        obligor.check().map_err(|e| Error::Malformed {
            row,
            column: "-".into(),
            message: e.to_string(),
        })?;
        obligors.push(obligor);
    }
    Portfolio::new(obligors, "M")
}

/// Writes a portfolio in the format [`parse_portfolio`] reads.
pub fn write_portfolio(p: &Portfolio) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<&str> = REQUIRED_COLUMNS.to_vec();
    header.push(EXPECTED_LOSS_COLUMN);
    writer.write_record(&header).expect("in-memory write");
    for o in p.obligors() {
        writer
            .write_record([
                o.id.clone(),
                o.name.clone(),
                o.exposure.to_string(),
                o.mean_loss_rate.to_string(),
                o.loss_rate_stddev.to_string(),
                o.crop_ratio.to_string(),
                o.livestock_ratio.to_string(),
                o.expected_loss_declared.map(|v| v.to_string()).unwrap_or_default(),
            ])
            .expect("in-memory write");
    }
    String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("utf-8 input")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FindingKind {
    ExpectedLossMismatch {
        computed: f64,
        declared: f64,
        relative: f64,
    },
    RatioSum {
        sum: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub obligor: String,
    pub severity: Severity,
    #[serde(flatten)]
    pub kind: FindingKind,
}

impl std::fmt::Display for Finding {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let level = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        match &self.kind {
            FindingKind::ExpectedLossMismatch {
                computed,
                declared,
                relative,
            } => write!(
                f,
                "{level}: {}: exposure x mean_loss_rate = {computed:.4} vs declared {declared} (relative {relative:.2e})",
                self.obligor
            ),
            FindingKind::RatioSum { sum } => write!(
                f,
                "{level}: {}: crop_ratio + livestock_ratio = {sum:.4}",
                self.obligor
            ),
        }
    }
}

/// Cross-checks declared expected losses and sector ratio sums. Findings are
/// data: nothing here fails.
pub fn validate_portfolio(p: &Portfolio, tol: f64) -> Vec<Finding> {
    let mut findings = Vec::new();
    for o in p.obligors() {
        if let Some(declared) = o.expected_loss_declared {
            let computed = o.expected_loss();
            let relative = (computed - declared).abs() / declared.max(1.0);
            if relative > tol {
                findings.push(Finding {
                    obligor: o.id.clone(),
                    severity: if relative > EXPECTED_LOSS_ERROR_THRESHOLD {
                        Severity::Error
                    } else {
                        Severity::Warning
                    },
                    kind: FindingKind::ExpectedLossMismatch {
                        computed,
                        declared,
                        relative,
                    },
                });
            }
        }
        let sum = o.crop_ratio + o.livestock_ratio;
        if (sum - 1.0).abs() > tol {
            findings.push(Finding {
                obligor: o.id.clone(),
                // a zero split cannot be renormalized
                severity: if sum > 0.0 { Severity::Warning } else { Severity::Error },
                kind: FindingKind::RatioSum { sum },
            });
        }
    }
    findings
}

/// Continuous-compounding discount to present value: `x = exp(-rate * horizon) * X`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscountSpec {
    rate: f64,
    horizon: f64,
}

impl DiscountSpec {
    pub fn new(rate: f64, horizon: f64) -> Result<Self> {
        if !rate.is_finite() {
            return Err(Error::InvalidDiscount(format!("rate {rate} is not finite")));
        }
        if !(horizon.is_finite() && horizon >= 0.0) {
            return Err(Error::InvalidDiscount(format!("horizon must be >= 0, got {horizon}")));
        }
        Ok(Self { rate, horizon })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn factor(&self) -> f64 {
        (-self.rate * self.horizon).exp()
    }
}

impl Default for DiscountSpec {
    fn default() -> Self {
        Self {
            rate: 0.0,
            horizon: 0.0,
        }
    }
}

pub fn discount_exposures(p: &Portfolio, d: &DiscountSpec) -> Portfolio {
    let factor = d.factor();
    let mut out = p.clone();
    if factor != 1.0 {
        for o in &mut out.obligors {
            o.exposure *= factor;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SectorMode {
    /// Whole portfolio in one sector.
    Single,
    /// Each obligor split into a crop and a livestock sub-exposure.
    CropLivestock,
    /// One sector per obligor, carrying the obligor's own rates.
    PerObligor,
}

impl SectorMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            SectorMode::Single => "single",
            SectorMode::CropLivestock => "crop-livestock",
            SectorMode::PerObligor => "per-obligor",
        }
    }
}

impl std::str::FromStr for SectorMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "single" => Ok(SectorMode::Single),
            "crop-livestock" => Ok(SectorMode::CropLivestock),
            "per-obligor" => Ok(SectorMode::PerObligor),
            other => Err(format!(
                "unknown sector mode '{other}' (expected single, crop-livestock or per-obligor)"
            )),
        }
    }
}

/// Mean and standard deviation of a sector's loss rate, both fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectorRate {
    pub mean: f64,
    pub stddev: f64,
}

impl SectorRate {
    /// Squared coefficient of variation of the sector factor, `(stddev / mean)^2`.
    pub fn variation_sq(&self) -> f64 {
        if self.stddev == 0.0 {
            0.0
        } else {
            (self.stddev / self.mean).powi(2)
        }
    }
}

pub const SINGLE_SECTOR: &str = "portfolio";
pub const CROP_SECTOR: &str = "crop";
pub const LIVESTOCK_SECTOR: &str = "livestock";

/// How obligor exposures map onto sectors. Sector rates not listed in
/// `rates` default to exposure-weighted averages of the contributing
/// obligors' rates.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SectorAssignment {
    pub mode: Option<SectorMode>,
    pub rates: BTreeMap<String, SectorRate>,
}

impl SectorAssignment {
    pub fn new(mode: SectorMode) -> Self {
        Self {
            mode: Some(mode),
            rates: BTreeMap::new(),
        }
    }

    pub fn with_rate(mut self, sector: impl Into<String>, rate: SectorRate) -> Self {
        self.rates.insert(sector.into(), rate);
        self
    }

    pub fn mode(&self) -> SectorMode {
        self.mode.unwrap_or(SectorMode::CropLivestock)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sector {
    pub name: String,
    pub rate: SectorRate,
}

/// The part of one obligor's exposure that sits in one sector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubExposure {
    /// Index into [`SectoredPortfolio::obligors`].
    pub obligor: usize,
    /// Index into [`SectoredPortfolio::sectors`].
    pub sector: usize,
    pub amount: f64,
    pub loss_rate: f64,
}

impl SubExposure {
    pub fn expected_loss(&self) -> f64 {
        self.amount * self.loss_rate
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObligorRef {
    pub id: String,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectoredPortfolio {
    pub mode: SectorMode,
    pub obligors: Vec<ObligorRef>,
    pub sectors: Vec<Sector>,
    pub exposures: Vec<SubExposure>,
}

impl SectoredPortfolio {
    pub fn sub_exposures_of(&self, obligor: usize) -> impl Iterator<Item = &SubExposure> {
        self.exposures.iter().filter(move |e| e.obligor == obligor)
    }
}

fn split_ratios(o: &ObligorRecord) -> Result<(f64, f64)> {
    let sum = o.crop_ratio + o.livestock_ratio;
    if sum <= 0.0 {
        return Err(Error::InvalidObligor {
            id: o.id.clone(),
            message: "crop_ratio + livestock_ratio is zero, cannot split exposure".into(),
        });
    }
    if (sum - 1.0).abs() > RATIO_RENORMALIZE_EPS {
        Ok((o.crop_ratio / sum, o.livestock_ratio / sum))
    } else {
        Ok((o.crop_ratio, o.livestock_ratio))
    }
}

fn weighted_rate(parts: &[(f64, &ObligorRecord)]) -> SectorRate {
    let weight: f64 = parts.iter().map(|(w, _)| w).sum();
    if weight <= 0.0 {
        return SectorRate { mean: 0.0, stddev: 0.0 };
    }
    let mean = parts.iter().map(|(w, o)| w * o.mean_loss_rate).sum::<f64>() / weight;
    let stddev = parts.iter().map(|(w, o)| w * o.loss_rate_stddev).sum::<f64>() / weight;
    SectorRate { mean, stddev }
}

fn check_rate(sector: &str, rate: &SectorRate) -> Result<()> {
    let fail = |message: &str| {
        Err(Error::InvalidSector {
            sector: sector.to_string(),
            message: message.to_string(),
        })
    };
    if !(rate.mean.is_finite() && rate.mean >= 0.0) {
        return fail("mean rate must be >= 0");
    }
    if !(rate.stddev.is_finite() && rate.stddev >= 0.0) {
        return fail("rate stddev must be >= 0");
    }
    if rate.mean == 0.0 && rate.stddev > 0.0 {
        return fail("mean rate is zero with positive stddev; gamma parameters are undefined");
    }
    Ok(())
}

/// Splits every obligor's exposure across sectors according to `s`.
pub fn assign_sectors(p: &Portfolio, s: &SectorAssignment) -> Result<SectoredPortfolio> {
    let mode = s.mode();
    let obligors: Vec<ObligorRef> = p
        .obligors()
        .iter()
        .map(|o| ObligorRef {
            id: o.id.clone(),
            name: o.name.clone(),
        })
        .collect();

    // (sector name, [(obligor index, share of exposure)])
    let layout: Vec<(String, Vec<(usize, f64)>)> = match mode {
        SectorMode::Single => vec![(
            SINGLE_SECTOR.to_string(),
            (0..p.len()).map(|i| (i, 1.0)).collect(),
        )],
        SectorMode::CropLivestock => {
            let mut crop = Vec::with_capacity(p.len());
            let mut livestock = Vec::with_capacity(p.len());
            for (i, o) in p.obligors().iter().enumerate() {
                let (c, l) = split_ratios(o)?;
                crop.push((i, c));
                livestock.push((i, l));
            }
            vec![
                (CROP_SECTOR.to_string(), crop),
                (LIVESTOCK_SECTOR.to_string(), livestock),
            ]
        }
        SectorMode::PerObligor => p
            .obligors()
            .iter()
            .enumerate()
            .map(|(i, o)| (o.id.clone(), vec![(i, 1.0)]))
            .collect(),
    };

    for name in s.rates.keys() {
        if !layout.iter().any(|(n, _)| n == name) {
            return Err(Error::InvalidSector {
                sector: name.clone(),
                message: format!("no such sector in {} mode", mode.as_str()),
            });
        }
    }

    let mut sectors = Vec::with_capacity(layout.len());
    let mut exposures = Vec::new();
    for (k, (name, members)) in layout.into_iter().enumerate() {
        let rate = match s.rates.get(&name) {
            Some(r) => *r,
            None if mode == SectorMode::PerObligor => {
                let o = &p.obligors()[members[0].0];
                SectorRate {
                    mean: o.mean_loss_rate,
                    stddev: o.loss_rate_stddev,
                }
            }
            None => {
                let parts: Vec<(f64, &ObligorRecord)> = members
                    .iter()
                    .map(|&(i, share)| {
                        let o = &p.obligors()[i];
                        (o.exposure * share, o)
                    })
                    .collect();
                weighted_rate(&parts)
            }
        };
        check_rate(&name, &rate)?;
        for (i, share) in members {
            if share <= 0.0 {
                continue;
            }
            let o = &p.obligors()[i];
            exposures.push(SubExposure {
                obligor: i,
                sector: k,
                amount: o.exposure * share,
                loss_rate: o.mean_loss_rate,
            });
        }
        sectors.push(Sector { name, rate });
    }

    Ok(SectoredPortfolio {
        mode,
        obligors,
        sectors,
        exposures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const HEADER: &str =
        "id,name,exposure,mean_loss_rate,loss_rate_stddev,crop_ratio,livestock_ratio,expected_loss\n";

    fn obligor(id: &str, exposure: f64, rate: f64, sd: f64, crop: f64, livestock: f64) -> ObligorRecord {
        ObligorRecord {
            id: id.into(),
            name: id.into(),
            exposure,
            mean_loss_rate: rate,
            loss_rate_stddev: sd,
            crop_ratio: crop,
            livestock_ratio: livestock,
            expected_loss_declared: None,
        }
    }

    #[test]
    fn parses_bulgaria_row() {
        let p = parse_portfolio(&format!(
            "{HEADER}BGR,Bulgaria,800.12,0.0312,0.0072,0.65,0.35,24.96\n"
        ))
        .unwrap();
        let o = &p.obligors()[0];
        assert_eq!(o.id, "BGR");
        assert_eq!(o.name, "Bulgaria");
        assert_eq!(o.exposure, 800.12);
        assert_eq!(o.mean_loss_rate, 0.0312);
        assert_eq!(o.loss_rate_stddev, 0.0072);
        assert_eq!(o.expected_loss_declared, Some(24.96));
    }

    #[test]
    fn header_only_is_empty_portfolio() {
        let err = parse_portfolio(HEADER).unwrap_err();
        assert_eq!(err, Error::EmptyPortfolio);
        assert_eq!(err.to_string(), "empty portfolio");
        assert_eq!(parse_portfolio("").unwrap_err(), Error::Malformed {
            row: 1,
            column: "id".into(),
            message: "missing header column".into()
        });
    }

    #[test]
    fn duplicate_id_rejected() {
        let text = format!(
            "{HEADER}ESP,Spain,8494.09,0.0435,0.0248,0.64,0.36,369.23\nESP,Spain again,1,0.01,0,0.5,0.5,\n"
        );
        assert_eq!(parse_portfolio(&text).unwrap_err(), Error::DuplicateId("ESP".into()));
    }

    #[test]
    fn malformed_field_names_row_and_column() {
        let text = format!("{HEADER}A,a,100,0.01,0,0.5,0.5,1\nB,b,abc,0.01,0,0.5,0.5,1\n");
        match parse_portfolio(&text).unwrap_err() {
            Error::Malformed { row, column, .. } => {
                assert_eq!(row, 3);
                assert_eq!(column, "exposure");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn percent_rate_rejected() {
        let text = format!("{HEADER}BGR,Bulgaria,800.12,3.12,0.72,0.65,0.35,24.96\n");
        assert!(matches!(parse_portfolio(&text), Err(Error::Malformed { row: 2, .. })));
    }

    #[test]
    fn expected_loss_column_optional_and_extra_columns_ignored() {
        let text = "id,rating,name,exposure,mean_loss_rate,loss_rate_stddev,crop_ratio,livestock_ratio\nX,AA,x,10,0.1,0.05,0.5,0.5\n";
        let p = parse_portfolio(text).unwrap();
        assert_eq!(p.obligors()[0].expected_loss_declared, None);
        assert_eq!(p.obligors()[0].exposure, 10.0);
    }

    #[test]
    fn validation_findings() {
        let mut bgr = obligor("BGR", 800.12, 0.0312, 0.0072, 0.65, 0.35);
        bgr.expected_loss_declared = Some(24.96);
        let uk = obligor("UKI", 1398.33, 0.0056, 0.0116, 0.44, 0.60);
        let mut esp = obligor("ESP", 8494.09, 0.0435, 0.0248, 0.64, 0.36);
        esp.expected_loss_declared = Some(369.23);
        let p = Portfolio::new(vec![bgr, uk, esp], "M").unwrap();

        let findings = validate_portfolio(&p, DEFAULT_VALIDATION_TOLERANCE);
        assert_eq!(findings.len(), 1);
        assert_eq!(findings[0].obligor, "UKI");
        assert!(matches!(findings[0].kind, FindingKind::RatioSum { sum } if (sum - 1.04).abs() < 1e-12));

        // 369.49 vs 369.23 is 7.1e-4 relative: silent at 1e-3, flagged at 5e-4.
        let at = |tol| {
            validate_portfolio(&p, tol)
                .into_iter()
                .filter(|f| f.obligor == "ESP")
                .count()
        };
        assert_eq!(at(1e-3), 0);
        assert_eq!(at(5e-4), 1);
    }

    #[test]
    fn percent_typed_as_fraction_is_an_error_finding() {
        let mut dan = obligor("DAN", 6577.06, 0.65, 0.0384, 0.34, 0.66);
        dan.expected_loss_declared = Some(42.75);
        let p = Portfolio::new(vec![dan], "M").unwrap();
        let f = validate_portfolio(&p, DEFAULT_VALIDATION_TOLERANCE);
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].severity, Severity::Error);
    }

    #[test]
    fn discounting() {
        let p = Portfolio::new(vec![obligor("A", 100.0, 0.1, 0.0, 0.5, 0.5)], "M").unwrap();
        let same = discount_exposures(&p, &DiscountSpec::new(0.0, 5.0).unwrap());
        assert_eq!(same, p);
        let same = discount_exposures(&p, &DiscountSpec::new(0.05, 0.0).unwrap());
        assert_eq!(same, p);
        let d = discount_exposures(&p, &DiscountSpec::new(0.05, 1.0).unwrap());
        // e^{-0.05} = 0.951229424500714...
        assert_relative_eq!(d.obligors()[0].exposure, 95.1229424500714, max_relative = 1e-14);
        assert_eq!(d.obligors()[0].mean_loss_rate, 0.1);
        assert!(DiscountSpec::new(0.05, -1.0).is_err());
    }

    #[test]
    fn cyprus_crop_livestock_split() {
        let p = Portfolio::new(vec![obligor("CYP", 328.82, 0.0684, 0.034, 0.49, 0.51)], "M").unwrap();
        let s = assign_sectors(&p, &SectorAssignment::new(SectorMode::CropLivestock)).unwrap();
        assert_eq!(s.sectors.len(), 2);
        assert_eq!(s.exposures.len(), 2);
        assert_relative_eq!(s.exposures[0].amount, 161.1218, max_relative = 1e-12);
        assert_relative_eq!(s.exposures[1].amount, 167.6982, max_relative = 1e-12);
        assert_relative_eq!(s.exposures[0].amount + s.exposures[1].amount, 328.82, max_relative = 1e-12);
        assert_eq!(s.exposures[0].loss_rate, 0.0684);
        assert_eq!(s.exposures[1].loss_rate, 0.0684);
    }

    #[test]
    fn ratios_renormalized() {
        let p = Portfolio::new(vec![obligor("HUN", 3382.78, 0.0096, 0.0354, 0.60, 0.10)], "M").unwrap();
        let s = assign_sectors(&p, &SectorAssignment::new(SectorMode::CropLivestock)).unwrap();
        assert_relative_eq!(s.exposures[0].amount, 3382.78 * 6.0 / 7.0, max_relative = 1e-12);
        assert_relative_eq!(s.exposures[1].amount, 3382.78 / 7.0, max_relative = 1e-12);
    }

    #[test]
    fn single_and_per_obligor_modes() {
        let p = Portfolio::new(
            vec![
                obligor("A", 100.0, 0.02, 0.01, 0.5, 0.5),
                obligor("B", 300.0, 0.04, 0.03, 0.5, 0.5),
            ],
            "M",
        )
        .unwrap();
        let single = assign_sectors(&p, &SectorAssignment::new(SectorMode::Single)).unwrap();
        assert_eq!(single.sectors.len(), 1);
        assert_eq!(single.exposures[0].amount, 100.0);
        assert_eq!(single.exposures[1].amount, 300.0);
        assert_relative_eq!(single.sectors[0].rate.mean, (2.0 + 12.0) / 400.0);
        assert_relative_eq!(single.sectors[0].rate.stddev, (1.0 + 9.0) / 400.0);

        let per = assign_sectors(&p, &SectorAssignment::new(SectorMode::PerObligor)).unwrap();
        assert_eq!(per.sectors.len(), 2);
        assert_eq!(per.sectors[1].name, "B");
        assert_eq!(per.sectors[1].rate, SectorRate { mean: 0.04, stddev: 0.03 });
    }

    #[test]
    fn rate_overrides_and_errors() {
        let p = Portfolio::new(vec![obligor("A", 100.0, 0.02, 0.01, 0.5, 0.5)], "M").unwrap();
        let s = SectorAssignment::new(SectorMode::Single)
            .with_rate(SINGLE_SECTOR, SectorRate { mean: 0.05, stddev: 0.02 });
        assert_eq!(assign_sectors(&p, &s).unwrap().sectors[0].rate.mean, 0.05);

        let bad = SectorAssignment::new(SectorMode::Single)
            .with_rate(SINGLE_SECTOR, SectorRate { mean: 0.0, stddev: 0.02 });
        assert!(matches!(assign_sectors(&p, &bad), Err(Error::InvalidSector { .. })));

        let unknown = SectorAssignment::new(SectorMode::Single)
            .with_rate("crop", SectorRate { mean: 0.1, stddev: 0.0 });
        assert!(assign_sectors(&p, &unknown).is_err());

        let zero_rate = Portfolio::new(vec![obligor("Z", 100.0, 0.0, 0.01, 0.5, 0.5)], "M").unwrap();
        assert!(assign_sectors(&zero_rate, &SectorAssignment::new(SectorMode::PerObligor)).is_err());
    }
}
