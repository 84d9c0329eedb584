//! Input time series: parsing, typing, role assignment and validation.
//!
//! A dataset is a dated table with one row per period. Columns are assigned
//! roles through [`VariableRoles`]; everything the modeling chain reads is
//! checked here once so downstream code can index without re-validating.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::ops::Range;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::decomposition::Component;
use crate::error::{bail, Error, Result};

pub const DATE_FORMAT: &str = "%Y-%m-%d";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frequency {
    Daily,
    Weekly,
}

impl Frequency {
    pub fn days(self) -> i64 {
        match self {
            Frequency::Daily => 1,
            Frequency::Weekly => 7,
        }
    }

    /// Minimum in-window observation count below which estimation is
    /// considered unreliable.
    pub fn minimum_observations(self) -> usize {
        match self {
            Frequency::Daily => 180,
            Frequency::Weekly => 104,
        }
    }
}

impl fmt::Display for Frequency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Frequency::Daily => "daily",
            Frequency::Weekly => "weekly",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DepVarType {
    /// Efficiency is reported as ROI / ROAS.
    Revenue,
    /// Efficiency is reported as CPA.
    Conversion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableRoles {
    pub dep_var: String,
    pub dep_var_type: DepVarType,
    pub paid_media_spends: Vec<String>,
    pub paid_media_vars: Vec<String>,
    #[serde(default)]
    pub organic_vars: Vec<String>,
    #[serde(default)]
    pub context_vars: Vec<String>,
    #[serde(default)]
    pub factor_vars: Vec<String>,
    #[serde(default)]
    pub prophet_vars: Vec<Component>,
    #[serde(default)]
    pub prophet_country: Option<String>,
}

impl VariableRoles {
    /// Roles with spend doubling as the exposure metric and no other variables.
    pub fn spend_only(dep_var: &str, spends: &[&str]) -> Self {
        let spends: Vec<String> = spends.iter().map(|s| s.to_string()).collect();
        VariableRoles {
            dep_var: dep_var.to_string(),
            dep_var_type: DepVarType::Revenue,
            paid_media_vars: spends.clone(),
            paid_media_spends: spends,
            organic_vars: Vec::new(),
            context_vars: Vec::new(),
            factor_vars: Vec::new(),
            prophet_vars: Vec::new(),
            prophet_country: None,
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.paid_media_spends.is_empty() {
            bail!(InvalidParameter, "paid_media_spends must not be empty");
        }
        if self.paid_media_vars.len() != self.paid_media_spends.len() {
            bail!(
                InvalidParameter,
                "paid_media_vars has {} entries but paid_media_spends has {}; they must align",
                self.paid_media_vars.len(),
                self.paid_media_spends.len()
            );
        }
        let allowed: HashSet<&str> = self
            .context_vars
            .iter()
            .chain(&self.organic_vars)
            .map(String::as_str)
            .collect();
        for f in &self.factor_vars {
            if !allowed.contains(f.as_str()) {
                bail!(
                    InvalidParameter,
                    "factor variable '{f}' must be one of context_vars or organic_vars"
                );
            }
        }

        // An exposure column may repeat its own spend column; nothing else may
        // hold two roles.
        let mut seen = HashSet::new();
        let mut claim = |name: &str, role: &str| -> Result<()> {
            if !seen.insert(name.to_string()) {
                bail!(InvalidParameter, "column '{name}' is assigned more than one role ({role})");
            }
            Ok(())
        };
        claim(&self.dep_var, "dep_var")?;
        for s in &self.paid_media_spends {
            claim(s, "paid_media_spends")?;
        }
        for (v, s) in self.paid_media_vars.iter().zip(&self.paid_media_spends) {
            if v != s {
                claim(v, "paid_media_vars")?;
            }
        }
        for o in &self.organic_vars {
            claim(o, "organic_vars")?;
        }
        for c in &self.context_vars {
            claim(c, "context_vars")?;
        }

        let mut comps = HashSet::new();
        for c in &self.prophet_vars {
            if !comps.insert(*c) {
                bail!(InvalidParameter, "prophet_vars lists '{c}' twice");
            }
        }
        Ok(())
    }

    fn numeric_columns(&self) -> impl Iterator<Item = &String> {
        std::iter::once(&self.dep_var)
            .chain(&self.paid_media_spends)
            .chain(&self.paid_media_vars)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl Window {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Self {
        Window { start, end }
    }

    pub fn parse(start: &str, end: &str) -> Result<Self> {
        Ok(Window {
            start: parse_date(start)?,
            end: parse_date(end)?,
        })
    }

    pub fn contains(&self, d: NaiveDate) -> bool {
        self.start <= d && d <= self.end
    }
}

pub fn parse_date(s: &str) -> Result<NaiveDate> {
    let s = s.trim();
    // chrono accepts unpadded fields; the format is strictly YYYY-MM-DD.
    let b = s.as_bytes();
    let shaped = b.len() == 10
        && b[4] == b'-'
        && b[7] == b'-'
        && b.iter()
            .enumerate()
            .all(|(i, c)| i == 4 || i == 7 || c.is_ascii_digit());
    if !shaped {
        bail!(Parse, "date '{s}' is not in YYYY-MM-DD format");
    }
    NaiveDate::parse_from_str(s, DATE_FORMAT)
        .map_err(|e| Error::Parse(format!("date '{s}': {e}")))
}

pub fn format_date(d: NaiveDate) -> String {
    d.format(DATE_FORMAT).to_string()
}

#[derive(Debug, Clone)]
pub enum Column {
    Numeric(Vec<f64>),
    Text(Vec<String>),
}

impl PartialEq for Column {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Column::Numeric(a), Column::Numeric(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
            }
            (Column::Text(a), Column::Text(b)) => a == b,
            _ => false,
        }
    }
}

impl Column {
    fn cell(&self, i: usize) -> String {
        match self {
            Column::Numeric(v) if v[i].is_nan() => String::new(),
            Column::Numeric(v) => v[i].to_string(),
            Column::Text(v) => v[i].clone(),
        }
    }

    fn levels_text(&self) -> Vec<String> {
        (0..self.len()).map(|i| self.cell(i)).collect()
    }

    fn len(&self) -> usize {
        match self {
            Column::Numeric(v) => v.len(),
            Column::Text(v) => v.len(),
        }
    }
}

/// One-hot indicator derived from a factor column.
#[derive(Debug, Clone, PartialEq)]
pub struct Indicator {
    pub name: String,
    pub source: String,
    pub level: String,
    pub values: Vec<f64>,
}

fn is_missing(cell: &str) -> bool {
    let c = cell.trim();
    c.is_empty() || c.eq_ignore_ascii_case("na") || c.eq_ignore_ascii_case("nan")
}

/// Dated observation table with role assignments and a modeling window.
#[derive(Debug, Clone, PartialEq)]
pub struct MmmDataset {
    date_column: String,
    dates: Vec<NaiveDate>,
    frequency: Frequency,
    roles: VariableRoles,
    window: Window,
    window_rows: Range<usize>,
    columns: Vec<(String, Column)>,
    indicators: Vec<Indicator>,
}

impl MmmDataset {
    /// Reads a comma-separated file with a header row.
    pub fn load(
        path: impl AsRef<Path>,
        roles: VariableRoles,
        window: Window,
        frequency_hint: Option<Frequency>,
    ) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_bytes(&bytes, roles, window, frequency_hint)
    }

    pub fn from_csv_bytes(
        bytes: &[u8],
        roles: VariableRoles,
        window: Window,
        frequency_hint: Option<Frequency>,
    ) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(bytes);
        let headers: Vec<String> = rdr
            .headers()
            .map_err(|e| Error::Parse(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        if headers.is_empty() {
            bail!(Parse, "missing header row");
        }
        let mut seen = HashSet::new();
        for h in &headers {
            if !seen.insert(h) {
                bail!(Parse, "duplicate column '{h}' in header");
            }
        }

        let date_idx = pick_date_column(&headers)?;
        let mut raw: Vec<Vec<String>> = vec![Vec::new(); headers.len()];
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
            if rec.len() != headers.len() {
                bail!(
                    Parse,
                    "row {} has {} fields, header has {}",
                    line + 2,
                    rec.len(),
                    headers.len()
                );
            }
            for (j, cell) in rec.iter().enumerate() {
                raw[j].push(cell.to_string());
            }
        }
        if raw[date_idx].is_empty() {
            bail!(Parse, "file has no data rows");
        }

        let dates = raw[date_idx]
            .iter()
            .map(|s| parse_date(s))
            .collect::<Result<Vec<_>>>()?;

        let must_be_numeric: HashSet<&String> = roles.numeric_columns().collect();
        let factor_set: HashSet<&String> = roles.factor_vars.iter().collect();
        let mut columns = Vec::with_capacity(headers.len() - 1);
        for (j, name) in headers.iter().enumerate() {
            if j == date_idx {
                continue;
            }
            let cells = std::mem::take(&mut raw[j]);
            let col = if factor_set.contains(name) {
                Column::Text(cells)
            } else {
                match parse_numeric(&cells) {
                    Some(v) => Column::Numeric(v),
                    None if must_be_numeric.contains(name) => {
                        bail!(Parse, "column '{name}' must be numeric")
                    }
                    None => Column::Text(cells),
                }
            };
            columns.push((name.clone(), col));
        }

        Self::from_columns(
            headers[date_idx].clone(),
            dates,
            columns,
            roles,
            window,
            frequency_hint,
        )
    }

    /// Builds and validates a dataset from in-memory columns.
    pub fn from_columns(
        date_column: String,
        dates: Vec<NaiveDate>,
        columns: Vec<(String, Column)>,
        roles: VariableRoles,
        window: Window,
        frequency_hint: Option<Frequency>,
    ) -> Result<Self> {
        roles.check()?;
        if dates.len() < 2 {
            bail!(InvalidData, "need at least two observations");
        }
        for (name, col) in &columns {
            if col.len() != dates.len() {
                bail!(InvalidData, "column '{name}' has {} values for {} dates", col.len(), dates.len());
            }
        }
        let frequency = infer_frequency(&dates, frequency_hint)?;

        if window.start > window.end {
            bail!(
                InvalidParameter,
                "window_start {} is after window_end {}",
                format_date(window.start),
                format_date(window.end)
            );
        }
        let (lo, hi) = (dates[0], *dates.last().unwrap());
        let step = chrono::Duration::days(frequency.days());
        if window.start <= lo - step || window.end >= hi + step {
            bail!(
                InvalidParameter,
                "window {}..{} is outside the data, which spans {}..{}",
                format_date(window.start),
                format_date(window.end),
                format_date(lo),
                format_date(hi)
            );
        }
        let first = dates.iter().position(|d| *d >= window.start);
        let last = dates.iter().rposition(|d| *d <= window.end);
        let window_rows = match (first, last) {
            (Some(a), Some(b)) if a <= b => a..b + 1,
            _ => bail!(
                InvalidParameter,
                "window {}..{} contains no observations (data spans {}..{})",
                format_date(window.start),
                format_date(window.end),
                format_date(dates[0]),
                format_date(*dates.last().unwrap())
            ),
        };

        let mut ds = MmmDataset {
            date_column,
            dates,
            frequency,
            roles,
            window,
            window_rows,
            columns,
            indicators: Vec::new(),
        };
        ds.check_roles()?;
        ds.indicators = ds.expand_factors();
        Ok(ds)
    }

    /// Same data, different modeling window.
    pub fn with_window(&self, window: Window) -> Result<Self> {
        Self::from_columns(
            self.date_column.clone(),
            self.dates.clone(),
            self.columns.clone(),
            self.roles.clone(),
            window,
            Some(self.frequency),
        )
    }

    fn check_roles(&self) -> Result<()> {
        let roles = &self.roles;
        let w = self.window_rows.clone();
        let role_cols = roles
            .numeric_columns()
            .chain(&roles.organic_vars)
            .chain(&roles.context_vars);
        for name in role_cols {
            let col = match self.column(name) {
                Some(c) => c,
                None => bail!(InvalidData, "role column '{name}' not found in data"),
            };
            if let Column::Numeric(v) = col {
                if let Some(i) = w.clone().find(|&i| v[i].is_nan()) {
                    bail!(
                        InvalidData,
                        "missing value in '{name}' at {} (inside the modeling window)",
                        format_date(self.dates[i])
                    );
                }
                if let Some(i) = v.iter().position(|x| x.is_infinite()) {
                    bail!(InvalidData, "non-finite value in '{name}' at {}", format_date(self.dates[i]));
                }
            } else if name == &roles.dep_var {
                bail!(Parse, "dependent variable '{name}' must be numeric");
            } else if let Column::Text(v) = col {
                if let Some(i) = w.clone().find(|&i| v[i].trim().is_empty()) {
                    bail!(
                        InvalidData,
                        "missing value in '{name}' at {} (inside the modeling window)",
                        format_date(self.dates[i])
                    );
                }
            }
        }

        let nonneg = roles
            .paid_media_spends
            .iter()
            .chain(&roles.paid_media_vars)
            .chain(roles.organic_vars.iter().filter(|o| !roles.factor_vars.contains(o)));
        for name in nonneg {
            match self.column(name) {
                Some(Column::Numeric(v)) => {
                    if let Some(i) = v.iter().position(|x| *x < 0.0) {
                        bail!(
                            InvalidData,
                            "negative value {} in '{name}' at {}",
                            v[i],
                            format_date(self.dates[i])
                        );
                    }
                }
                _ => bail!(Parse, "column '{name}' must be numeric"),
            }
        }

        for name in &roles.paid_media_spends {
            let v = &self.numeric(name).expect("checked above")[w.clone()];
            if v.iter().all(|x| *x == 0.0) {
                bail!(InvalidData, "media column has no variation: '{name}' is zero throughout the window");
            }
        }
        Ok(())
    }

    fn is_factor(&self, name: &str) -> bool {
        self.roles.factor_vars.iter().any(|f| f == name)
            || matches!(self.column(name), Some(Column::Text(_)))
    }

    fn expand_factors(&self) -> Vec<Indicator> {
        let mut out = Vec::new();
        let candidates = self.roles.context_vars.iter().chain(&self.roles.organic_vars);
        for name in candidates {
            if !self.is_factor(name) {
                continue;
            }
            let cells = self.column(name).expect("role columns exist").levels_text();
            let levels: BTreeSet<&str> = cells.iter().map(|s| s.trim()).collect();
            let reference = levels
                .iter()
                .find(|l| is_missing(l))
                .or_else(|| levels.iter().next())
                .copied();
            for level in levels.iter().filter(|l| Some(**l) != reference) {
                let values = cells
                    .iter()
                    .map(|c| if c.trim() == *level { 1.0 } else { 0.0 })
                    .collect();
                out.push(Indicator {
                    name: format!("{name}_{level}"),
                    source: name.clone(),
                    level: level.to_string(),
                    values,
                });
            }
        }
        out
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|(n, _)| n == name).map(|(_, c)| c)
    }

    /// Full-length numeric column (missing cells are NaN).
    pub fn numeric(&self, name: &str) -> Option<&[f64]> {
        match self.column(name)? {
            Column::Numeric(v) => Some(v),
            Column::Text(_) => None,
        }
    }

    pub fn roles(&self) -> &VariableRoles {
        &self.roles
    }

    pub fn frequency(&self) -> Frequency {
        self.frequency
    }

    pub fn window(&self) -> Window {
        self.window
    }

    pub fn date_column(&self) -> &str {
        &self.date_column
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn n_rows(&self) -> usize {
        self.dates.len()
    }

    /// Row indices inside the modeling window.
    pub fn window_rows(&self) -> Range<usize> {
        self.window_rows.clone()
    }

    pub fn window_len(&self) -> usize {
        self.window_rows.len()
    }

    pub fn window_dates(&self) -> &[NaiveDate] {
        &self.dates[self.window_rows.clone()]
    }

    pub fn window_values(&self, name: &str) -> Option<&[f64]> {
        self.numeric(name).map(|v| &v[self.window_rows.clone()])
    }

    pub fn dependent(&self) -> &[f64] {
        self.window_values(&self.roles.dep_var).expect("validated at load")
    }

    /// Series from the first row through the window end, for carryover
    /// transforms. Missing pre-window cells count as no activity.
    pub fn history(&self, name: &str) -> Option<Vec<f64>> {
        let v = self.numeric(name)?;
        Some(
            v[..self.window_rows.end]
                .iter()
                .map(|x| if x.is_nan() { 0.0 } else { *x })
                .collect(),
        )
    }

    /// Paid media followed by numeric organic variables: the channels that
    /// receive adstock and saturation.
    pub fn media_channels(&self) -> Vec<String> {
        self.roles
            .paid_media_spends
            .iter()
            .chain(self.organic_channels().iter())
            .cloned()
            .collect()
    }

    pub fn organic_channels(&self) -> Vec<String> {
        self.roles
            .organic_vars
            .iter()
            .filter(|o| !self.is_factor(o))
            .cloned()
            .collect()
    }

    pub fn indicators(&self) -> &[Indicator] {
        &self.indicators
    }

    /// In-window context regressors: numeric context columns followed by the
    /// indicator columns of every factor.
    pub fn context_regressors(&self) -> Vec<(String, Vec<f64>)> {
        let w = self.window_rows.clone();
        let mut out: Vec<(String, Vec<f64>)> = self
            .roles
            .context_vars
            .iter()
            .filter(|c| !self.is_factor(c))
            .map(|c| (c.clone(), self.numeric(c).expect("numeric context")[w.clone()].to_vec()))
            .collect();
        out.extend(
            self.indicators
                .iter()
                .map(|ind| (ind.name.clone(), ind.values[w.clone()].to_vec())),
        );
        out
    }

    /// Number of regressors (excluding intercept) the main model will use.
    pub fn design_width(&self) -> usize {
        self.media_channels().len() + self.context_regressors().len() + self.roles.prophet_vars.len()
    }

    pub fn to_csv_bytes(&self) -> Vec<u8> {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        let mut header = vec![self.date_column.clone()];
        header.extend(self.columns.iter().map(|(n, _)| n.clone()));
        wtr.write_record(&header).expect("in-memory write");
        for i in 0..self.dates.len() {
            let mut rec = vec![format_date(self.dates[i])];
            rec.extend(self.columns.iter().map(|(_, c)| c.cell(i)));
            wtr.write_record(&rec).expect("in-memory write");
        }
        wtr.into_inner().expect("in-memory flush")
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv_bytes()).map_err(|e| Error::io(path, e))
    }

    /// SHA-256 of the canonical CSV rendering.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.to_csv_bytes()))
    }
}

fn pick_date_column(headers: &[String]) -> Result<usize> {
    for cand in ["DATE", "date", "ds", "Date"] {
        if let Some(i) = headers.iter().position(|h| h == cand) {
            return Ok(i);
        }
    }
    // Fall back to the first column.
    Ok(0)
}

fn parse_numeric(cells: &[String]) -> Option<Vec<f64>> {
    cells
        .iter()
        .map(|c| {
            if is_missing(c) {
                Some(f64::NAN)
            } else {
                c.trim().parse::<f64>().ok()
            }
        })
        .collect()
}

fn infer_frequency(dates: &[NaiveDate], hint: Option<Frequency>) -> Result<Frequency> {
    let mut gaps: Vec<i64> = dates.windows(2).map(|w| (w[1] - w[0]).num_days()).collect();
    if let Some(i) = gaps.iter().position(|g| *g <= 0) {
        bail!(
            InvalidData,
            "dates must be strictly increasing ({} follows {})",
            format_date(dates[i + 1]),
            format_date(dates[i])
        );
    }
    let freq = match hint {
        Some(f) => f,
        None => {
            let mut sorted = gaps.clone();
            sorted.sort_unstable();
            match sorted[sorted.len() / 2] {
                1 => Frequency::Daily,
                7 => Frequency::Weekly,
                g => bail!(InvalidData, "cannot infer frequency: median date gap is {g} days"),
            }
        }
    };
    if let Some(i) = gaps.iter().position(|g| *g != freq.days()) {
        bail!(
            InvalidData,
            "non-uniform date spacing: {} to {} is {} days, expected {} ({freq})",
            format_date(dates[i]),
            format_date(dates[i + 1]),
            gaps[i],
            freq.days()
        );
    }
    gaps.clear();
    Ok(freq)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub errors: Vec<Finding>,
    pub warnings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn has_warning(&self, code: &str) -> bool {
        self.warnings.iter().any(|w| w.code == code)
    }

    fn warn(&mut self, code: &str, message: String) {
        self.warnings.push(Finding {
            code: code.to_string(),
            message,
        });
    }

    fn error(&mut self, code: &str, message: String) {
        self.errors.push(Finding {
            code: code.to_string(),
            message,
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.errors.is_empty() && self.warnings.is_empty() {
            return writeln!(f, "OK: no issues found");
        }
        for e in &self.errors {
            writeln!(f, "ERROR [{}] {}", e.code, e.message)?;
        }
        for w in &self.warnings {
            writeln!(f, "WARNING [{}] {}", w.code, w.message)?;
        }
        Ok(())
    }
}

pub const MIN_VARIATION_CV: f64 = 0.05;

/// Adoption checks on a loaded dataset for a model with `design_width`
/// regressors.
pub fn validate_dataset(ds: &MmmDataset, design_width: usize) -> ValidationReport {
    let mut report = ValidationReport::default();
    let n = ds.window_len();

    if design_width >= n {
        report.error(
            "too_few_observations",
            format!("{design_width} design columns cannot be estimated from {n} observations"),
        );
    }
    if design_width * 10 > n {
        report.warn(
            "one_in_ten",
            format!(
                "one-in-ten violated: {design_width} design columns need at least {} observations, window has {n}",
                design_width * 10
            ),
        );
    }
    let min = ds.frequency().minimum_observations();
    if n < min {
        report.warn(
            "short_history",
            format!("{n} {} observations in window; at least {min} recommended", ds.frequency()),
        );
    }

    let roles = ds.roles();
    let mut media: Vec<&String> = roles.paid_media_spends.iter().collect();
    for v in &roles.paid_media_vars {
        if !media.contains(&v) {
            media.push(v);
        }
    }
    media.extend(ds.roles().organic_vars.iter().filter(|o| ds.numeric(o).is_some()));
    for name in media {
        let v = ds.window_values(name).expect("validated at load");
        let cv = coefficient_of_variation(v);
        if cv < MIN_VARIATION_CV {
            report.warn(
                "low_variation",
                format!("'{name}' has insufficient variation (coefficient of variation {cv:.4})"),
            );
        }
    }
    report
}

fn coefficient_of_variation(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if mean == 0.0 {
        return 0.0;
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    var.sqrt() / mean.abs()
}

/// A single holiday occurrence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Holiday {
    #[serde(with = "iso_date")]
    pub ds: NaiveDate,
    pub holiday: String,
    pub country: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HolidayTable {
    pub entries: Vec<Holiday>,
}

impl HolidayTable {
    pub fn new(entries: Vec<Holiday>) -> Result<Self> {
        let mut seen = HashSet::new();
        for h in &entries {
            if !seen.insert((h.ds, h.holiday.as_str(), h.country.as_str())) {
                bail!(
                    InvalidData,
                    "duplicate holiday entry ({}, {}, {})",
                    format_date(h.ds),
                    h.holiday,
                    h.country
                );
            }
        }
        Ok(HolidayTable { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_bytes(&bytes)
    }

    /// Parses a table with at least the columns `ds,holiday,country`.
    pub fn from_csv_bytes(bytes: &[u8]) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes);
        let headers = rdr.headers().map_err(|e| Error::Parse(e.to_string()))?.clone();
        let idx = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Parse(format!("holiday table lacks column '{name}'")))
        };
        let (ids, ih, ic) = (idx("ds")?, idx("holiday")?, idx("country")?);
        let mut entries = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
            entries.push(Holiday {
                ds: parse_date(&rec[ids])?,
                holiday: rec[ih].to_string(),
                country: rec[ic].to_string(),
            });
        }
        Self::new(entries)
    }

    pub fn to_csv_bytes(&self) -> Vec<u8> {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        wtr.write_record(["ds", "holiday", "country"]).expect("in-memory write");
        for h in &self.entries {
            wtr.write_record([format_date(h.ds), h.holiday.clone(), h.country.clone()])
                .expect("in-memory write");
        }
        wtr.into_inner().expect("in-memory flush")
    }

    pub fn has_country(&self, country: &str) -> bool {
        self.entries.iter().any(|h| h.country == country)
    }

    pub fn for_country(&self, country: &str) -> HolidayTable {
        HolidayTable {
            entries: self
                .entries
                .iter()
                .filter(|h| h.country == country)
                .cloned()
                .collect(),
        }
    }
}

pub(crate) mod iso_date {
    use chrono::NaiveDate;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &NaiveDate, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::format_date(*d))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<NaiveDate, D::Error> {
        let s = String::deserialize(d)?;
        super::parse_date(&s).map_err(serde::de::Error::custom)
    }
}
