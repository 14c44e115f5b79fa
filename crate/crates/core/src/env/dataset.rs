//! Monthly asset-return matrices and the portfolio environment built on them.

use std::path::Path;
use std::sync::Arc;

use thiserror::Error;

use crate::mdp::{ActionId, Environment, StateVec, Step};
use crate::rng::RngStream;

use super::{ensure, ConfigError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Units {
    Percent,
    Fraction,
}

impl Units {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "percent" | "pct" | "%" => Some(Self::Percent),
            "fraction" | "decimal" => Some(Self::Fraction),
            _ => None,
        }
    }

    fn scale(self) -> f64 {
        match self {
            Self::Percent => 0.01,
            Self::Fraction => 1.0,
        }
    }
}

/// What to do with a missing-value sentinel inside the selected window.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SentinelPolicy {
    Reject,
    /// Replace the cell by a zero return.
    ZeroFill,
}

/// How to read a returns CSV.
///
/// `units: None` defers to a `# units=percent` (or `fraction`) metadata line
/// at the top of the file, defaulting to fractions when neither is given.
/// Rows outside `window` (inclusive `YYYYMM` bounds) are skipped before any
/// validation.
#[derive(Clone, Debug, PartialEq)]
pub struct FormatSpec {
    pub units: Option<Units>,
    pub date_column: String,
    pub sentinel_values: Vec<f64>,
    pub sentinel_policy: SentinelPolicy,
    pub window: Option<(u32, u32)>,
}

impl Default for FormatSpec {
    fn default() -> Self {
        Self {
            units: None,
            date_column: "date".into(),
            sentinel_values: vec![-99.99, -999.0],
            sentinel_policy: SentinelPolicy::Reject,
            window: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("row {row}: {msg}")]
    MalformedRow { row: u64, msg: String },
    #[error("no column named `{0}`")]
    MissingDateColumn(String),
    #[error("row {row}: bad date `{value}` (expected YYYYMM)")]
    BadDate { row: u64, value: String },
    #[error("row {row}: date {date} does not follow {prev}")]
    NonMonotoneDate { row: u64, prev: u32, date: u32 },
    #[error("row {row}, column `{column}`: missing-value sentinel {value}")]
    Sentinel { row: u64, column: String, value: f64 },
    #[error("file declares units `{file:?}` but the format spec says `{spec:?}`")]
    UnitsConflict { file: Units, spec: Units },
    #[error("unknown units metadata `{0}`")]
    BadUnits(String),
    #[error("no data rows")]
    Empty,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// `T x m` simple returns in fractional units, one row per month.
#[derive(Clone, Debug, PartialEq)]
pub struct ReturnsMatrix {
    asset_names: Vec<String>,
    dates: Vec<u32>,
    returns: Vec<Vec<f64>>,
}

impl ReturnsMatrix {
    pub fn new(asset_names: Vec<String>, dates: Vec<u32>, returns: Vec<Vec<f64>>) -> Result<Self, ConfigError> {
        ensure(!asset_names.is_empty(), || "at least one asset is required".into())?;
        ensure(dates.len() == returns.len(), || "one date per row is required".into())?;
        ensure(dates.windows(2).all(|w| w[0] < w[1]), || "dates must be strictly increasing".into())?;
        for (i, row) in returns.iter().enumerate() {
            ensure(row.len() == asset_names.len(), || format!("row {i} has {} cells", row.len()))?;
            ensure(row.iter().all(|v| v.is_finite() && *v > -1.0), || {
                format!("row {i} has a non-finite return or one at or below -100%")
            })?;
        }
        Ok(Self {
            asset_names,
            dates,
            returns,
        })
    }

    pub fn asset_names(&self) -> &[String] {
        &self.asset_names
    }

    pub fn dates(&self) -> &[u32] {
        &self.dates
    }

    pub fn n_months(&self) -> usize {
        self.dates.len()
    }

    pub fn n_assets(&self) -> usize {
        self.asset_names.len()
    }

    pub fn row(&self, month: usize) -> &[f64] {
        &self.returns[month]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.returns
    }

    /// Returns of months `month - lookback .. month`, oldest first, flattened
    /// row-major. `month >= lookback` is required.
    pub fn window(&self, month: usize, lookback: usize) -> StateVec {
        self.returns[month - lookback..month]
            .iter()
            .flat_map(|r| r.iter().copied())
            .collect()
    }
}

pub fn load_returns_csv(path: impl AsRef<Path>, spec: &FormatSpec) -> Result<ReturnsMatrix, IngestError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_returns_csv(&text, spec)
}

fn parse_date(raw: &str) -> Option<u32> {
    let raw = raw.trim();
    if raw.len() != 6 {
        return None;
    }
    let v: u32 = raw.parse().ok()?;
    let month = v % 100;
    (1..=12).contains(&month).then_some(v)
}

fn is_sentinel(v: f64, sentinels: &[f64]) -> bool {
    sentinels.iter().any(|s| (v - s).abs() < 1e-9)
}

pub fn parse_returns_csv(text: &str, spec: &FormatSpec) -> Result<ReturnsMatrix, IngestError> {
    let mut declared = None;
    for line in text.lines().take_while(|l| l.trim_start().starts_with('#')) {
        let body = line.trim_start().trim_start_matches('#').trim();
        if let Some((k, v)) = body.split_once(['=', ':']) {
            if k.trim().eq_ignore_ascii_case("units") {
                declared = Some(Units::parse(v).ok_or_else(|| IngestError::BadUnits(v.trim().into()))?);
            }
        }
    }
    let units = match (declared, spec.units) {
        (Some(file), Some(spec)) if file != spec => return Err(IngestError::UnitsConflict { file, spec }),
        (Some(u), _) | (None, Some(u)) => u,
        (None, None) => Units::Fraction,
    };

    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let date_idx = headers
        .iter()
        .position(|h| h.eq_ignore_ascii_case(&spec.date_column))
        .ok_or_else(|| IngestError::MissingDateColumn(spec.date_column.clone()))?;
    let names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != date_idx)
        .map(|(_, h)| h.to_string())
        .collect();

    let mut dates = Vec::new();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| IngestError::MalformedRow {
            row: e.position().map_or(0, |p| p.line()),
            msg: e.to_string(),
        })?;
        let row = record.position().map_or(0, |p| p.line());
        if record.len() != headers.len() {
            return Err(IngestError::MalformedRow {
                row,
                msg: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        let raw_date = &record[date_idx];
        let date = parse_date(raw_date).ok_or_else(|| IngestError::BadDate {
            row,
            value: raw_date.to_string(),
        })?;
        if let Some((lo, hi)) = spec.window {
            if date < lo || date > hi {
                continue;
            }
        }
        if let Some(&prev) = dates.last() {
            if date <= prev {
                return Err(IngestError::NonMonotoneDate { row, prev, date });
            }
        }
        let mut values = Vec::with_capacity(names.len());
        for (i, cell) in record.iter().enumerate() {
            if i == date_idx {
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| IngestError::MalformedRow {
                row,
                msg: format!("column `{}`: `{cell}` is not a number", &headers[i]),
            })?;
            if !v.is_finite() {
                return Err(IngestError::MalformedRow {
                    row,
                    msg: format!("column `{}`: non-finite value", &headers[i]),
                });
            }
            if is_sentinel(v, &spec.sentinel_values) {
                match spec.sentinel_policy {
                    SentinelPolicy::Reject => {
                        return Err(IngestError::Sentinel {
                            row,
                            column: headers[i].to_string(),
                            value: v,
                        })
                    }
                    SentinelPolicy::ZeroFill => {
                        values.push(0.0);
                        continue;
                    }
                }
            }
            let scaled = v * units.scale();
            if scaled <= -1.0 {
                return Err(IngestError::MalformedRow {
                    row,
                    msg: format!("column `{}`: return {v} is a total loss or worse", &headers[i]),
                });
            }
            values.push(scaled);
        }
        dates.push(date);
        rows.push(values);
    }
    if rows.is_empty() {
        return Err(IngestError::Empty);
    }
    ReturnsMatrix::new(names, dates, rows).map_err(|e| IngestError::MalformedRow { row: 0, msg: e.0 })
}

/// Writes `date,<assets...>` rows with a units metadata line.
pub fn write_returns_csv(matrix: &ReturnsMatrix, units: Units) -> String {
    let mut out = String::new();
    out.push_str(match units {
        Units::Percent => "# units=percent\n",
        Units::Fraction => "# units=fraction\n",
    });
    out.push_str("date");
    for n in matrix.asset_names() {
        out.push(',');
        out.push_str(n);
    }
    out.push('\n');
    for (d, row) in matrix.dates().iter().zip(matrix.rows()) {
        out.push_str(&d.to_string());
        for v in row {
            out.push(',');
            out.push_str(&(v / units.scale()).to_string());
        }
        out.push('\n');
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetPortfolioConfig {
    /// Months of history in the observation.
    pub lookback: usize,
    /// Months per episode.
    pub episode_len: usize,
    /// Month indices `[start, end)` that episode rewards must fall in.
    pub train_window: Option<(usize, usize)>,
}

impl Default for DatasetPortfolioConfig {
    fn default() -> Self {
        Self {
            lookback: 12,
            episode_len: 12,
            train_window: None,
        }
    }
}

/// Episodes over a returns matrix.
///
/// The policy's softmax output is the portfolio. For score-function
/// training the environment takes a discrete action, the index of one asset
/// drawn from that softmax, and pays its return; conditioned on the state
/// this has the same mean as holding the softmax weights. Deterministic
/// weight-holding goes through [`DatasetPortfolioEnv::step_weights`].
#[derive(Clone, Debug)]
pub struct DatasetPortfolioEnv {
    data: Arc<ReturnsMatrix>,
    cfg: DatasetPortfolioConfig,
    first_start: usize,
    last_start: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetState {
    pub start: usize,
    pub elapsed: usize,
}

impl DatasetState {
    pub fn month(&self) -> usize {
        self.start + self.elapsed
    }
}

impl DatasetPortfolioEnv {
    pub fn new(data: Arc<ReturnsMatrix>, cfg: DatasetPortfolioConfig) -> Result<Self, ConfigError> {
        ensure(cfg.lookback > 0 && cfg.episode_len > 0, || "lookback and episode_len must be positive".into())?;
        let (lo, hi) = cfg.train_window.unwrap_or((0, data.n_months()));
        ensure(hi <= data.n_months() && lo <= hi, || format!("window [{lo}, {hi}) outside the data"))?;
        let first_start = lo.max(cfg.lookback);
        ensure(first_start + cfg.episode_len <= hi, || {
            format!(
                "months [{lo}, {hi}) cannot hold a {}-month lookback followed by a {}-month episode",
                cfg.lookback, cfg.episode_len
            )
        })?;
        Ok(Self {
            last_start: hi - cfg.episode_len,
            first_start,
            data,
            cfg,
        })
    }

    pub fn data(&self) -> &ReturnsMatrix {
        &self.data
    }

    pub fn config(&self) -> &DatasetPortfolioConfig {
        &self.cfg
    }

    /// Observation for a decision taken just before `month`.
    pub fn observation_at(&self, month: usize) -> StateVec {
        self.data.window(month, self.cfg.lookback)
    }

    pub fn state_at(&self, start: usize) -> DatasetState {
        DatasetState { start, elapsed: 0 }
    }

    /// Holds `weights` for the current month. Weights must be nonnegative
    /// and sum to one.
    pub fn step_weights(&self, s: &mut DatasetState, weights: &[f64]) -> Result<Step, ConfigError> {
        ensure(weights.len() == self.data.n_assets(), || {
            format!("{} weights for {} assets", weights.len(), self.data.n_assets())
        })?;
        let total: f64 = weights.iter().sum();
        ensure(weights.iter().all(|w| *w >= 0.0) && (total - 1.0).abs() < 1e-9, || {
            "weights must be nonnegative and sum to one".into()
        })?;
        let reward = portfolio_return(self.data.row(s.month()), weights);
        s.elapsed += 1;
        Ok(Step {
            reward,
            terminal: s.elapsed >= self.cfg.episode_len,
        })
    }
}

/// `sum_j y_j w_j`
pub fn portfolio_return(returns: &[f64], weights: &[f64]) -> f64 {
    returns.iter().zip(weights).map(|(y, w)| y * w).sum()
}

impl Environment for DatasetPortfolioEnv {
    type State = DatasetState;

    fn action_count(&self) -> usize {
        self.data.n_assets()
    }

    fn state_dim(&self) -> usize {
        self.data.n_assets() * self.cfg.lookback
    }

    fn horizon_cap(&self) -> usize {
        10 * self.cfg.episode_len
    }

    fn reset(&self, rng: &mut RngStream) -> DatasetState {
        let start = self.first_start + rng.index(self.last_start - self.first_start + 1);
        self.state_at(start)
    }

    fn observe(&self, s: &DatasetState) -> StateVec {
        self.observation_at(s.month())
    }

    fn step(&self, s: &mut DatasetState, action: ActionId, _rng: &mut RngStream) -> Step {
        let reward = self.data.row(s.month())[action.0];
        s.elapsed += 1;
        Step {
            reward,
            terminal: s.elapsed >= self.cfg.episode_len,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> FormatSpec {
        FormatSpec::default()
    }

    #[test]
    fn small_fixture_round_trips() {
        let text = "date,a,b\n200001,0.01,-0.02\n200002,0.03,0.5\n200003,0,0.125\n";
        let m = parse_returns_csv(text, &spec()).unwrap();
        assert_eq!((m.n_months(), m.n_assets()), (3, 2));
        assert_eq!(m.rows(), &[vec![0.01, -0.02], vec![0.03, 0.5], vec![0.0, 0.125]]);
        assert_eq!(m.dates(), &[200001, 200002, 200003]);
        let again = parse_returns_csv(&write_returns_csv(&m, Units::Fraction), &spec()).unwrap();
        assert_eq!(again, m);
    }

    #[test]
    fn sentinel_names_row_and_column() {
        let text = "date,a,b\n200001,0.01,0.02\n200002,-99.99,0.03\n";
        let err = parse_returns_csv(text, &spec()).unwrap_err();
        match err {
            IngestError::Sentinel { row, column, .. } => {
                assert_eq!(row, 3);
                assert_eq!(column, "a");
            }
            e => panic!("{e}"),
        }
        let outside = FormatSpec {
            window: Some((200001, 200001)),
            ..spec()
        };
        assert_eq!(parse_returns_csv(text, &outside).unwrap().n_months(), 1);
        let filled = FormatSpec {
            sentinel_policy: SentinelPolicy::ZeroFill,
            ..spec()
        };
        assert_eq!(parse_returns_csv(text, &filled).unwrap().row(1)[0], 0.0);
    }

    #[test]
    fn percent_units() {
        let text = "# units=percent\ndate,a\n200001,1.5\n";
        let m = parse_returns_csv(text, &spec()).unwrap();
        assert!((m.row(0)[0] - 0.015).abs() < 1e-17);
        let by_spec = FormatSpec {
            units: Some(Units::Percent),
            ..spec()
        };
        let m = parse_returns_csv("date,a\n200001,1.5\n", &by_spec).unwrap();
        assert!((m.row(0)[0] - 0.015).abs() < 1e-17);
        let conflict = FormatSpec {
            units: Some(Units::Fraction),
            ..spec()
        };
        assert!(matches!(
            parse_returns_csv(text, &conflict),
            Err(IngestError::UnitsConflict { .. })
        ));
    }

    #[test]
    fn malformed_inputs() {
        let cases = [
            "date,a\n200002,0.1\n200001,0.2\n",
            "date,a\n2000-01,0.1\n",
            "date,a\n200013,0.1\n",
            "date,a\n200001,abc\n",
            "date,a\n200001,0.1,0.2\n",
            "when,a\n200001,0.1\n",
            "date,a\n",
        ];
        for text in cases {
            assert!(parse_returns_csv(text, &spec()).is_err(), "{text}");
        }
        match parse_returns_csv(cases[0], &spec()).unwrap_err() {
            IngestError::NonMonotoneDate { prev, date, .. } => assert_eq!((prev, date), (200002, 200001)),
            e => panic!("{e}"),
        }
    }

    fn matrix(rows: Vec<Vec<f64>>) -> Arc<ReturnsMatrix> {
        let m = rows[0].len();
        let names = (0..m).map(|i| format!("a{i}")).collect();
        let dates = (0..rows.len() as u32).map(|i| 200001 + (i / 12) * 100 + i % 12).collect();
        Arc::new(ReturnsMatrix::new(names, dates, rows).unwrap())
    }

    #[test]
    fn weight_steps() {
        let data = matrix(vec![vec![0.0, 0.0], vec![0.01, 0.03]]);
        let env = DatasetPortfolioEnv::new(
            data,
            DatasetPortfolioConfig {
                lookback: 1,
                episode_len: 1,
                train_window: None,
            },
        )
        .unwrap();
        let mut s = env.state_at(1);
        assert_eq!(env.observe(&s), vec![0.0, 0.0]);
        let step = env.step_weights(&mut s, &[0.5, 0.5]).unwrap();
        assert!((step.reward - 0.02).abs() < 1e-15);
        assert!(step.terminal);
        assert!(env.step_weights(&mut env.state_at(1), &[0.7, 0.7]).is_err());
    }

    #[test]
    fn single_asset_reward_is_asset_return() {
        let data = matrix((0..30).map(|i| vec![0.001 * i as f64]).collect());
        let env = DatasetPortfolioEnv::new(data.clone(), DatasetPortfolioConfig::default()).unwrap();
        let mut rng = RngStream::new(0, 0);
        let mut s = env.reset(&mut rng);
        loop {
            let month = s.month();
            let step = env.step(&mut s, ActionId(0), &mut rng);
            assert_eq!(step.reward, data.row(month)[0]);
            if step.terminal {
                break;
            }
        }
    }

    #[test]
    fn window_too_short() {
        let data = matrix((0..20).map(|_| vec![0.0]).collect());
        assert!(DatasetPortfolioEnv::new(data, DatasetPortfolioConfig::default()).is_err());
    }
}
