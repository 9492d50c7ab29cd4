//! Panel loading, cleaning, and normalization.
//!
//! This module turns tabular return data (CSV, long or wide layout) into a
//! validated [`ReturnPanel`]: complete T×N matrix, strictly increasing dates,
//! optional OHLC bars for realized-volatility proxies.  It also hosts the
//! Rogers–Satchell range estimator, market-wide volatility removal, and
//! per-column standardization with the population variance convention used
//! throughout the crate.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Layout of the input table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PanelFormat {
    /// One row per (date, asset) pair.  Columns: `date,asset,return` (or
    /// `value`), or `date,asset,open,high,low,close` with returns computed
    /// as close-to-close log-ratios.
    Long,
    /// One row per date, one return column per asset: `date,<a1>,<a2>,...`.
    Wide,
}

/// What to do when an asset is missing on some dates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum MissingPolicy {
    /// Keep only dates on which every asset is present (default).
    #[default]
    DropDate,
    /// Keep only assets present on every observed date.
    DropAsset,
}

/// Order of the two normalization passes in [`ReturnPanel::prepare`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum PrepOrder {
    /// Divide out the market-wide volatility, then standardize columns (default).
    #[default]
    RemoveThenStandardize,
    /// Standardize columns first, then divide out the market-wide volatility.
    StandardizeThenRemove,
}

/// Parsed load configuration.
#[derive(Debug, Clone, Copy)]
pub struct LoadSchema {
    pub format: PanelFormat,
    pub policy: MissingPolicy,
}

impl LoadSchema {
    pub fn new(format: PanelFormat, policy: MissingPolicy) -> Self {
        Self { format, policy }
    }
}

/// A single open/high/low/close bar; all prices must be strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OhlcBar {
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
}

impl OhlcBar {
    fn validate(&self) -> Result<()> {
        let ok = [self.open, self.high, self.low, self.close]
            .iter()
            .all(|p| p.is_finite() && *p > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("price", "all OHLC prices must be finite and strictly positive"))
        }
    }
}

/// Column-aligned OHLC bars for a panel (same T×N shape as the returns).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OhlcPanel {
    pub open: DMatrix<f64>,
    pub high: DMatrix<f64>,
    pub low: DMatrix<f64>,
    pub close: DMatrix<f64>,
}

impl OhlcPanel {
    /// Per-entry Rogers–Satchell squared-volatility proxies.
    pub fn rogers_satchell(&self) -> Result<DMatrix<f64>> {
        let (t, n) = self.open.shape();
        let mut out = DMatrix::zeros(t, n);
        for j in 0..n {
            for i in 0..t {
                let bar = OhlcBar {
                    open: self.open[(i, j)],
                    high: self.high[(i, j)],
                    low: self.low[(i, j)],
                    close: self.close[(i, j)],
                };
                out[(i, j)] = rogers_satchell_bar(&bar)?;
            }
        }
        Ok(out)
    }
}

/// A complete panel of log-returns with optional companion data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnPanel {
    /// ISO-8601 date stamps, strictly increasing.
    pub dates: Vec<String>,
    /// Asset identifiers, sorted; one per column.
    pub assets: Vec<String>,
    /// T×N matrix of log-returns (rows = dates).
    pub returns: DMatrix<f64>,
    /// Optional OHLC bars aligned with `returns`.
    pub ohlc: Option<OhlcPanel>,
    /// Optional squared-volatility series aligned with `returns`; rescaled
    /// together with the returns by the market-volatility removal.
    pub vol2: Option<DMatrix<f64>>,
    /// Set once every column has mean 0 and variance 1.
    pub standardized: bool,
}

impl ReturnPanel {
    /// Build a panel directly from parts, enforcing the shape invariants.
    pub fn new(dates: Vec<String>, assets: Vec<String>, returns: DMatrix<f64>) -> Result<Self> {
        let (t, n) = returns.shape();
        if t < 2 || n < 1 {
            return Err(Error::InsufficientData {
                what: "panel rows/columns".into(),
                need: 2,
                got: t.min(n),
            });
        }
        if dates.len() != t || assets.len() != n {
            return Err(Error::invalid("panel", "dates/assets lengths must match the matrix shape"));
        }
        check_dates_strictly_increasing(&dates)?;
        if returns.iter().any(|r| !r.is_finite()) {
            return Err(Error::MalformedInput("non-finite return in panel".into()));
        }
        Ok(Self { dates, assets, returns, ohlc: None, vol2: None, standardized: false })
    }

    pub fn n_dates(&self) -> usize {
        self.returns.nrows()
    }

    pub fn n_assets(&self) -> usize {
        self.returns.ncols()
    }

    /// Column of returns for one asset.
    pub fn column(&self, asset_index: usize) -> Vec<f64> {
        self.returns.column(asset_index).iter().copied().collect()
    }

    /// Compute Rogers–Satchell squared volatilities from the stored bars and
    /// attach them as the companion `vol2` series.
    pub fn attach_rogers_satchell(&mut self) -> Result<()> {
        let ohlc = self
            .ohlc
            .as_ref()
            .ok_or_else(|| Error::invalid("ohlc", "panel carries no OHLC bars"))?;
        self.vol2 = Some(ohlc.rogers_satchell()?);
        Ok(())
    }

    /// Divide every row by the market-wide volatility
    /// Σ_t = sqrt((1/N) Σ_i r²_{i,t}); the companion squared-volatility
    /// series, when present, is divided by Σ_t².
    pub fn remove_market_vol(&self) -> Result<Self> {
        let (t, n) = self.returns.shape();
        if n < 2 {
            return Err(Error::InsufficientData { what: "assets for market volatility".into(), need: 2, got: n });
        }
        let mut out = self.clone();
        for i in 0..t {
            let mean_sq = (0..n).map(|j| self.returns[(i, j)].powi(2)).sum::<f64>() / n as f64;
            if mean_sq <= 0.0 {
                return Err(Error::ZeroVariance { name: format!("market volatility on {}", self.dates[i]) });
            }
            let sigma = mean_sq.sqrt();
            for j in 0..n {
                out.returns[(i, j)] /= sigma;
            }
            if let Some(v) = out.vol2.as_mut() {
                for j in 0..n {
                    v[(i, j)] /= mean_sq;
                }
            }
        }
        out.standardized = false;
        Ok(out)
    }

    /// Center and scale every column to mean 0, variance 1 (divisor T).
    pub fn standardize(&self) -> Result<Self> {
        let (t, n) = self.returns.shape();
        let mut out = self.clone();
        for j in 0..n {
            let col: Vec<f64> = self.returns.column(j).iter().copied().collect();
            let mean = col.iter().sum::<f64>() / t as f64;
            let var = col.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / t as f64;
            if var <= 1e-300 {
                return Err(Error::ZeroVariance { name: self.assets[j].clone() });
            }
            let sd = var.sqrt();
            for i in 0..t {
                out.returns[(i, j)] = (self.returns[(i, j)] - mean) / sd;
            }
        }
        out.standardized = true;
        Ok(out)
    }

    /// Default cleaning pipeline: market-volatility removal and column
    /// standardization, in the configured order.
    pub fn prepare(&self, order: PrepOrder) -> Result<Self> {
        match order {
            PrepOrder::RemoveThenStandardize => self.remove_market_vol()?.standardize(),
            PrepOrder::StandardizeThenRemove => self.standardize()?.remove_market_vol(),
        }
    }
}

fn check_dates_strictly_increasing(dates: &[String]) -> Result<()> {
    for w in dates.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::BadDates(format!("dates not strictly increasing: {:?} then {:?}", w[0], w[1])));
        }
    }
    Ok(())
}

/// Rogers–Satchell squared-volatility proxy for one bar:
/// σ̂² = ln(H/O)·ln(H/C) + ln(L/O)·ln(L/C).
///
/// The estimator is drift-independent and invariant under uniform price
/// rescaling.
pub fn rogers_satchell_bar(bar: &OhlcBar) -> Result<f64> {
    bar.validate()?;
    let OhlcBar { open, high, low, close } = *bar;
    let h = (high / open).ln() * (high / close).ln();
    let l = (low / open).ln() * (low / close).ln();
    Ok(h + l)
}

/// Rogers–Satchell squared-volatility series for a sequence of bars.
pub fn rogers_satchell(bars: &[OhlcBar]) -> Result<Vec<f64>> {
    bars.iter().map(rogers_satchell_bar).collect()
}

/// Load a panel from a CSV stream per the declared schema.
///
/// Long layout rows carry `(date, asset, value…)`; wide layout rows carry a
/// date followed by one return per asset column.  The result keeps only the
/// dates/assets consistent with the missing-data policy, orders assets by
/// identifier, and validates the panel invariants.
pub fn load_panel<R: Read>(source: R, schema: &LoadSchema) -> Result<ReturnPanel> {
    match schema.format {
        PanelFormat::Wide => load_wide(source),
        PanelFormat::Long => load_long(source, schema.policy),
    }
}

/// Convenience wrapper over [`load_panel`] for a file path.
pub fn load_panel_path<P: AsRef<Path>>(path: P, schema: &LoadSchema) -> Result<ReturnPanel> {
    let file = std::fs::File::open(path)?;
    load_panel(file, schema)
}

fn parse_f64(field: &str, line: u64) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::MalformedInput(format!("line {line}: cannot parse number from {field:?}")))
}

fn load_wide<R: Read>(source: R) -> Result<ReturnPanel> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(source);
    let headers = reader.headers().map_err(Error::from)?.clone();
    if headers.len() < 2 {
        return Err(Error::MalformedInput("wide header needs a date column plus at least one asset".into()));
    }
    let assets: Vec<String> = headers.iter().skip(1).map(str::to_owned).collect();
    let mut dates = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(Error::from)?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != headers.len() {
            return Err(Error::MalformedInput(format!(
                "line {line}: expected {} fields, found {}",
                headers.len(),
                record.len()
            )));
        }
        dates.push(record[0].to_owned());
        let row = record
            .iter()
            .skip(1)
            .map(|f| parse_f64(f, line))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.len() < 2 {
        return Err(Error::InsufficientData { what: "dates".into(), need: 2, got: rows.len() });
    }
    // Wide input is taken as-is, so out-of-order dates are a data error.
    check_dates_strictly_increasing(&dates)?;
    let t = rows.len();
    let n = assets.len();
    let returns = DMatrix::from_fn(t, n, |i, j| rows[i][j]);
    // Column order: by asset identifier.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| assets[a].cmp(&assets[b]));
    let sorted_assets: Vec<String> = order.iter().map(|&j| assets[j].clone()).collect();
    let sorted_returns = DMatrix::from_fn(t, n, |i, j| returns[(i, order[j])]);
    ReturnPanel::new(dates, sorted_assets, sorted_returns)
}

#[derive(Default, Clone)]
struct LongCell {
    value: Option<f64>,
    bar: Option<OhlcBar>,
}

fn load_long<R: Read>(source: R, policy: MissingPolicy) -> Result<ReturnPanel> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(source);
    let headers = reader.headers().map_err(Error::from)?.clone();
    let find = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let date_col = find("date").ok_or_else(|| Error::MalformedInput("long header needs a `date` column".into()))?;
    let asset_col = find("asset").ok_or_else(|| Error::MalformedInput("long header needs an `asset` column".into()))?;
    let value_col = find("return").or_else(|| find("value"));
    let ohlc_cols = match (find("open"), find("high"), find("low"), find("close")) {
        (Some(o), Some(h), Some(l), Some(c)) => Some((o, h, l, c)),
        _ => None,
    };
    if value_col.is_none() && ohlc_cols.is_none() {
        return Err(Error::MalformedInput(
            "long header needs a `return`/`value` column or the full `open,high,low,close` set".into(),
        ));
    }

    // cells[asset][date] -> observed value and/or bar
    let mut cells: BTreeMap<String, BTreeMap<String, LongCell>> = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(Error::from)?;
        let line = record.position().map_or(0, |p| p.line());
        let date = record
            .get(date_col)
            .ok_or_else(|| Error::MalformedInput(format!("line {line}: missing date field")))?
            .to_owned();
        let asset = record
            .get(asset_col)
            .ok_or_else(|| Error::MalformedInput(format!("line {line}: missing asset field")))?
            .to_owned();
        let mut cell = LongCell::default();
        if let Some(vc) = value_col {
            if let Some(field) = record.get(vc) {
                if !field.is_empty() {
                    cell.value = Some(parse_f64(field, line)?);
                }
            }
        }
        if let Some((o, h, l, c)) = ohlc_cols {
            let get = |idx: usize| -> Result<f64> {
                let field = record
                    .get(idx)
                    .ok_or_else(|| Error::MalformedInput(format!("line {line}: missing price field")))?;
                parse_f64(field, line)
            };
            let bar = OhlcBar { open: get(o)?, high: get(h)?, low: get(l)?, close: get(c)? };
            bar.validate()?;
            cell.bar = Some(bar);
        }
        if cell.value.is_none() && cell.bar.is_none() {
            return Err(Error::MalformedInput(format!("line {line}: row carries neither a return nor a bar")));
        }
        let per_asset = cells.entry(asset).or_default();
        if per_asset.insert(date.clone(), cell).is_some() {
            return Err(Error::MalformedInput(format!("line {line}: duplicate (date, asset) observation on {date}")));
        }
    }
    if cells.is_empty() {
        return Err(Error::InsufficientData { what: "rows".into(), need: 2, got: 0 });
    }

    // When only bars were supplied, derive close-to-close log-returns; the
    // first date of each asset then has a bar but no return and is dropped.
    let from_bars = value_col.is_none();
    if from_bars {
        for per_asset in cells.values_mut() {
            let dates: Vec<String> = per_asset.keys().cloned().collect();
            let mut prev_close: Option<f64> = None;
            for d in &dates {
                let bar_close = per_asset[d].bar.expect("bar present in bar-only schema").close;
                if let Some(pc) = prev_close {
                    per_asset.get_mut(d).expect("date key").value = Some((bar_close / pc).ln());
                }
                prev_close = Some(bar_close);
            }
            per_asset.retain(|_, cell| cell.value.is_some());
        }
    }

    // All distinct dates (sorted by the BTreeMap key order = ISO-8601 order).
    let mut all_dates: Vec<String> = cells
        .values()
        .flat_map(|per_asset| per_asset.keys().cloned())
        .collect();
    all_dates.sort();
    all_dates.dedup();

    let (dates, assets): (Vec<String>, Vec<String>) = match policy {
        MissingPolicy::DropDate => {
            let shared: Vec<String> = all_dates
                .iter()
                .filter(|d| cells.values().all(|per_asset| per_asset.contains_key(*d)))
                .cloned()
                .collect();
            (shared, cells.keys().cloned().collect())
        }
        MissingPolicy::DropAsset => {
            let complete: Vec<String> = cells
                .iter()
                .filter(|(_, per_asset)| all_dates.iter().all(|d| per_asset.contains_key(d)))
                .map(|(a, _)| a.clone())
                .collect();
            (all_dates.clone(), complete)
        }
    };
    if dates.len() < 2 || assets.is_empty() {
        return Err(Error::InsufficientData { what: "shared dates/assets".into(), need: 2, got: dates.len().min(assets.len()) });
    }

    let t = dates.len();
    let n = assets.len();
    let mut returns = DMatrix::zeros(t, n);
    let has_bars = assets
        .iter()
        .all(|a| dates.iter().all(|d| cells[a][d].bar.is_some()));
    let mut ohlc = has_bars.then(|| OhlcPanel {
        open: DMatrix::zeros(t, n),
        high: DMatrix::zeros(t, n),
        low: DMatrix::zeros(t, n),
        close: DMatrix::zeros(t, n),
    });
    for (j, asset) in assets.iter().enumerate() {
        for (i, date) in dates.iter().enumerate() {
            let cell = &cells[asset][date];
            returns[(i, j)] = cell.value.expect("complete cell after policy filter");
            if let (Some(panel), Some(bar)) = (ohlc.as_mut(), cell.bar) {
                panel.open[(i, j)] = bar.open;
                panel.high[(i, j)] = bar.high;
                panel.low[(i, j)] = bar.low;
                panel.close[(i, j)] = bar.close;
            }
        }
    }
    let mut panel = ReturnPanel::new(dates, assets, returns)?;
    panel.ohlc = ohlc;
    Ok(panel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn bar(open: f64, high: f64, low: f64, close: f64) -> OhlcBar {
        OhlcBar { open, high, low, close }
    }

    #[test]
    fn rogers_satchell_reference_values() {
        assert_relative_eq!(rogers_satchell_bar(&bar(100.0, 100.0, 100.0, 100.0)).unwrap(), 0.0);
        assert_relative_eq!(
            rogers_satchell_bar(&bar(100.0, 110.0, 95.0, 105.0)).unwrap(),
            0.0095674414,
            epsilon = 1e-9
        );
        // H=C and L=O: both log products vanish.
        assert_relative_eq!(rogers_satchell_bar(&bar(98.0, 104.0, 98.0, 104.0)).unwrap(), 0.0);
        assert!(rogers_satchell_bar(&bar(100.0, 110.0, -5.0, 105.0)).is_err());
    }

    #[test]
    fn rogers_satchell_rescaling_invariance() {
        let b = bar(100.0, 111.0, 93.0, 104.0);
        let base = rogers_satchell_bar(&b).unwrap();
        for &c in &[0.01, 0.5, 3.0, 1e4] {
            let scaled = bar(b.open * c, b.high * c, b.low * c, b.close * c);
            assert_relative_eq!(rogers_satchell_bar(&scaled).unwrap(), base, epsilon = 1e-12);
        }
    }

    const WIDE_FIXTURE: &str = "date,aa,bb\n2020-01-01,0.01,-0.02\n2020-01-02,0.03,0.04\n2020-01-03,-0.01,0.00\n2020-01-06,0.02,-0.03\n";

    const LONG_FIXTURE: &str = "date,asset,return\n\
        2020-01-01,aa,0.01\n2020-01-01,bb,-0.02\n\
        2020-01-02,aa,0.03\n2020-01-02,bb,0.04\n\
        2020-01-03,aa,-0.01\n2020-01-03,bb,0.00\n\
        2020-01-06,aa,0.02\n2020-01-06,bb,-0.03\n";

    #[test]
    fn long_and_wide_formats_round_trip() {
        let schema_w = LoadSchema::new(PanelFormat::Wide, MissingPolicy::DropDate);
        let schema_l = LoadSchema::new(PanelFormat::Long, MissingPolicy::DropDate);
        let wide = load_panel(WIDE_FIXTURE.as_bytes(), &schema_w).unwrap();
        let long = load_panel(LONG_FIXTURE.as_bytes(), &schema_l).unwrap();
        assert_eq!(wide.dates, long.dates);
        assert_eq!(wide.assets, long.assets);
        assert_eq!(wide.returns, long.returns);
    }

    #[test]
    fn missing_policy_drops_date_or_asset() {
        // Three assets over five dates; `cc` misses 2020-01-03.
        let mut rows = String::from("date,asset,return\n");
        for d in ["2020-01-01", "2020-01-02", "2020-01-03", "2020-01-06", "2020-01-07"] {
            for a in ["aa", "bb", "cc"] {
                if a == "cc" && d == "2020-01-03" {
                    continue;
                }
                rows.push_str(&format!("{d},{a},0.01\n"));
            }
        }
        let drop_date = load_panel(
            rows.as_bytes(),
            &LoadSchema::new(PanelFormat::Long, MissingPolicy::DropDate),
        )
        .unwrap();
        assert_eq!((drop_date.n_dates(), drop_date.n_assets()), (4, 3));
        let drop_asset = load_panel(
            rows.as_bytes(),
            &LoadSchema::new(PanelFormat::Long, MissingPolicy::DropAsset),
        )
        .unwrap();
        assert_eq!((drop_asset.n_dates(), drop_asset.n_assets()), (5, 2));
        assert_eq!(drop_asset.assets, vec!["aa", "bb"]);
    }

    #[test]
    fn malformed_and_unordered_inputs_are_rejected() {
        let bad_number = "date,aa\n2020-01-01,0.01\n2020-01-02,oops\n";
        let err = load_panel(bad_number.as_bytes(), &LoadSchema::new(PanelFormat::Wide, MissingPolicy::DropDate))
            .unwrap_err();
        assert!(err.to_string().contains("line 3"), "unexpected message: {err}");

        let out_of_order = "date,aa\n2020-01-02,0.01\n2020-01-01,0.02\n";
        let err = load_panel(out_of_order.as_bytes(), &LoadSchema::new(PanelFormat::Wide, MissingPolicy::DropDate))
            .unwrap_err();
        assert!(matches!(err, Error::BadDates(_)));

        let disjoint = "date,asset,return\n2020-01-01,aa,0.1\n2020-01-02,bb,0.2\n";
        assert!(load_panel(disjoint.as_bytes(), &LoadSchema::new(PanelFormat::Long, MissingPolicy::DropDate)).is_err());
    }

    #[test]
    fn long_ohlc_schema_computes_close_to_close_returns() {
        let rows = "date,asset,open,high,low,close\n\
            2020-01-01,aa,100,101,99,100\n\
            2020-01-02,aa,100,105,98,104\n\
            2020-01-03,aa,104,106,101,102\n\
            2020-01-01,bb,50,51,49,50\n\
            2020-01-02,bb,50,52,50,51\n\
            2020-01-03,bb,51,53,50,52\n";
        let panel = load_panel(rows.as_bytes(), &LoadSchema::new(PanelFormat::Long, MissingPolicy::DropDate)).unwrap();
        assert_eq!(panel.dates, vec!["2020-01-02", "2020-01-03"]);
        assert_relative_eq!(panel.returns[(0, 0)], (104.0f64 / 100.0).ln(), epsilon = 1e-14);
        assert_relative_eq!(panel.returns[(1, 1)], (52.0f64 / 51.0).ln(), epsilon = 1e-14);
        let ohlc = panel.ohlc.as_ref().expect("bars retained");
        assert_relative_eq!(ohlc.high[(0, 0)], 105.0);
        let mut p = panel.clone();
        p.attach_rogers_satchell().unwrap();
        assert!(p.vol2.is_some());
    }

    #[test]
    fn market_vol_removal_matches_hand_values() {
        let returns = DMatrix::from_row_slice(3, 2, &[0.02, 0.0, -0.01, -0.01, 0.03, -0.04]);
        let panel = ReturnPanel::new(
            vec!["2020-01-01".into(), "2020-01-02".into(), "2020-01-03".into()],
            vec!["aa".into(), "bb".into()],
            returns,
        )
        .unwrap();
        let cleaned = panel.remove_market_vol().unwrap();
        // Row (r, 0): Σ = |r|/√2, so the scaled row is (√2·sign(r), 0).
        assert_relative_eq!(cleaned.returns[(0, 0)], 2.0f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(cleaned.returns[(0, 1)], 0.0);
        // Identical entries across assets scale to their sign.
        assert_relative_eq!(cleaned.returns[(1, 0)], -1.0, epsilon = 1e-12);
        assert_relative_eq!(cleaned.returns[(1, 1)], -1.0, epsilon = 1e-12);
        // Sign pattern is preserved everywhere.
        for i in 0..3 {
            for j in 0..2 {
                assert_eq!(cleaned.returns[(i, j)].signum() * panel.returns[(i, j)].signum() >= 0.0, true);
            }
        }

        let zero_row = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.01, 0.02]);
        let bad = ReturnPanel::new(
            vec!["2020-01-01".into(), "2020-01-02".into()],
            vec!["aa".into(), "bb".into()],
            zero_row,
        )
        .unwrap();
        assert!(matches!(bad.remove_market_vol(), Err(Error::ZeroVariance { .. })));
    }

    #[test]
    fn standardize_is_population_normalized_and_idempotent() {
        let returns = DMatrix::from_row_slice(2, 1, &[1.0, 3.0]);
        let panel = ReturnPanel::new(
            vec!["2020-01-01".into(), "2020-01-02".into()],
            vec!["aa".into()],
            returns,
        )
        .unwrap();
        let std1 = panel.standardize().unwrap();
        // Mean 2, population sd 1 → (−1, 1).
        assert_relative_eq!(std1.returns[(0, 0)], -1.0, epsilon = 1e-12);
        assert_relative_eq!(std1.returns[(1, 0)], 1.0, epsilon = 1e-12);
        assert!(std1.standardized);
        let std2 = std1.standardize().unwrap();
        for (a, b) in std1.returns.iter().zip(std2.returns.iter()) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }

        let constant = DMatrix::from_row_slice(3, 1, &[0.5, 0.5, 0.5]);
        let flat = ReturnPanel::new(
            vec!["2020-01-01".into(), "2020-01-02".into(), "2020-01-03".into()],
            vec!["aa".into()],
            constant,
        )
        .unwrap();
        let err = flat.standardize().unwrap_err();
        assert!(err.to_string().contains("aa"));
    }

    #[test]
    fn prepare_runs_both_passes() {
        let returns = DMatrix::from_row_slice(4, 2, &[0.02, 0.01, -0.01, -0.03, 0.03, 0.02, -0.02, 0.01]);
        let panel = ReturnPanel::new(
            vec!["2020-01-01".into(), "2020-01-02".into(), "2020-01-03".into(), "2020-01-06".into()],
            vec!["aa".into(), "bb".into()],
            returns,
        )
        .unwrap();
        let prepared = panel.prepare(PrepOrder::RemoveThenStandardize).unwrap();
        assert!(prepared.standardized);
        for j in 0..2 {
            let col: Vec<f64> = prepared.returns.column(j).iter().copied().collect();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let var = col.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / col.len() as f64;
            assert!(mean.abs() < 1e-10 && (var - 1.0).abs() < 1e-10);
        }
    }
}
