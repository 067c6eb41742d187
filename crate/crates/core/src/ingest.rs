//! Loading and validation of hourly price/demand data.
//!
//! Input files are headered CSV (`date,hour,price`, `date,hour,gross_demand`,
//! optionally `date,hour,wind_infeed`). Only Monday–Friday dates that are not
//! in the caller-supplied holiday set are kept. Prices above the outlier
//! threshold are flagged but retained, so that forecast evaluation can still
//! score them.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{Datelike, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_OUTLIER_THRESHOLD: f64 = 200.0;
pub const DEFAULT_MIN_VALID_PAIRS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IngestConfig {
    pub outlier_threshold: f64,
    pub min_valid_pairs: usize,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            outlier_threshold: DEFAULT_OUTLIER_THRESHOLD,
            min_valid_pairs: DEFAULT_MIN_VALID_PAIRS,
        }
    }
}

/// Closed demand interval `[lo, hi]` in MW.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub lo: f64,
    pub hi: f64,
}

impl Domain {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, u: f64) -> bool {
        u >= self.lo && u <= self.hi
    }

    pub fn union(self, other: Domain) -> Domain {
        Domain {
            lo: self.lo.min(other.lo),
            hi: self.hi.max(other.hi),
        }
    }
}

/// One hourly `(price, demand)` record. Missing values are stored as NaN
/// with `is_missing` set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourlyObservation {
    pub day_index: u32,
    pub calendar_date: NaiveDate,
    pub hour: u8,
    pub price: f64,
    pub demand: f64,
    pub is_outlier: bool,
    pub is_missing: bool,
}

impl HourlyObservation {
    /// Usable for curve estimation: observed and not an outlier.
    pub fn is_valid(&self) -> bool {
        !self.is_missing && !self.is_outlier
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayRecord {
    pub day_index: u32,
    pub calendar_date: NaiveDate,
    pub observations: Vec<HourlyObservation>,
    /// Number of non-missing, non-outlier pairs.
    pub n_valid: usize,
    /// `[min, max]` of valid demands; `None` with fewer than two valid pairs.
    pub domain: Option<Domain>,
    /// Fewer than `min_valid_pairs` valid pairs: excluded from curve fitting.
    pub degenerate: bool,
}

impl DayRecord {
    fn build(
        day_index: u32,
        date: NaiveDate,
        mut observations: Vec<HourlyObservation>,
        min_valid: usize,
    ) -> Self {
        observations.sort_by_key(|o| o.hour);
        let valid: Vec<f64> = observations
            .iter()
            .filter(|o| o.is_valid())
            .map(|o| o.demand)
            .collect();
        let n_valid = valid.len();
        let domain = if n_valid >= 2 {
            let lo = valid.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = valid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (lo < hi).then_some(Domain { lo, hi })
        } else {
            None
        };
        Self {
            day_index,
            calendar_date: date,
            observations,
            n_valid,
            domain,
            degenerate: n_valid < min_valid || domain.is_none(),
        }
    }

    /// Valid `(demand, price)` pairs in hour order.
    pub fn valid_pairs(&self) -> Vec<(f64, f64)> {
        self.observations
            .iter()
            .filter(|o| o.is_valid())
            .map(|o| (o.demand, o.price))
            .collect()
    }

    pub fn is_fit_eligible(&self) -> bool {
        !self.degenerate
    }

    pub fn observation(&self, hour: u8) -> Option<&HourlyObservation> {
        self.observations.iter().find(|o| o.hour == hour)
    }

    /// Observed price for `hour`, outliers included.
    pub fn price(&self, hour: u8) -> Option<f64> {
        self.observation(hour)
            .filter(|o| !o.is_missing)
            .map(|o| o.price)
    }

    /// Observed demand for `hour`.
    pub fn demand(&self, hour: u8) -> Option<f64> {
        self.observation(hour)
            .filter(|o| !o.is_missing)
            .map(|o| o.demand)
    }

    /// All 24 observed prices (outliers included), if complete.
    pub fn full_prices(&self) -> Option<[f64; 24]> {
        let mut out = [0.0; 24];
        for h in 1..=24u8 {
            out[h as usize - 1] = self.price(h)?;
        }
        Some(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub days: Vec<DayRecord>,
    /// `[A, B]`: union of the day domains.
    pub span: Option<Domain>,
    pub holiday_dates: BTreeSet<NaiveDate>,
    pub config: IngestConfig,
}

pub fn is_weekday(date: NaiveDate) -> bool {
    !matches!(date.weekday(), Weekday::Sat | Weekday::Sun)
}

/// The `n`-th Monday–Friday date after `date`.
pub fn add_workdays(date: NaiveDate, n: u32) -> NaiveDate {
    let mut d = date;
    let mut left = n;
    while left > 0 {
        d = d.succ_opt().expect("date overflow");
        if is_weekday(d) {
            left -= 1;
        }
    }
    d
}

/// 1-based Monday–Friday count from `origin` to `date` (holidays included).
pub fn workday_index(origin: NaiveDate, date: NaiveDate) -> u32 {
    let mut origin = origin;
    while !is_weekday(origin) {
        origin = origin.succ_opt().expect("date overflow");
    }
    let days = (date - origin).num_days();
    assert!(days >= 0, "date precedes origin");
    let weeks = days / 7;
    let rem = days % 7;
    let mut count = weeks * 5;
    let mut d = origin + chrono::Duration::days(weeks * 7);
    for _ in 0..=rem {
        if is_weekday(d) {
            count += 1;
        }
        d = d.succ_opt().expect("date overflow");
    }
    count as u32
}

impl Dataset {
    /// Builds a dataset from hourly observations. Outlier flags are
    /// recomputed from `config.outlier_threshold`; day indices must already
    /// be assigned.
    pub fn from_observations(
        observations: Vec<HourlyObservation>,
        holidays: BTreeSet<NaiveDate>,
        config: IngestConfig,
    ) -> Result<Self> {
        let mut by_day: BTreeMap<NaiveDate, Vec<HourlyObservation>> = BTreeMap::new();
        let mut seen = BTreeSet::new();
        for mut o in observations {
            if !(1..=24).contains(&o.hour) {
                return Err(Error::InvalidArgument(format!(
                    "hour {} out of range on {}",
                    o.hour, o.calendar_date
                )));
            }
            if !seen.insert((o.calendar_date, o.hour)) {
                return Err(Error::DuplicateKey {
                    date: o.calendar_date,
                    hour: o.hour,
                });
            }
            if !o.is_missing && !(o.demand > 0.0 && o.price.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "non-positive demand {} or invalid price {} on {} hour {}",
                    o.demand, o.price, o.calendar_date, o.hour
                )));
            }
            o.is_outlier = !o.is_missing && o.price > config.outlier_threshold;
            by_day.entry(o.calendar_date).or_default().push(o);
        }
        let mut days = Vec::with_capacity(by_day.len());
        let mut last_index = 0;
        for (date, obs) in by_day {
            if !is_weekday(date) || holidays.contains(&date) {
                return Err(Error::InvalidArgument(format!(
                    "{date} is not a working day"
                )));
            }
            let idx = obs[0].day_index;
            if obs.iter().any(|o| o.day_index != idx) {
                return Err(Error::InvalidArgument(format!(
                    "inconsistent day index on {date}"
                )));
            }
            if idx <= last_index {
                return Err(Error::InvalidArgument(format!(
                    "day indices not increasing at {date}"
                )));
            }
            last_index = idx;
            let day = DayRecord::build(idx, date, obs, config.min_valid_pairs);
            if day.degenerate {
                log::warn!(
                    "{date}: only {} valid pairs, excluded from curve fitting",
                    day.n_valid
                );
            }
            days.push(day);
        }
        Ok(Self::from_days(days, holidays, config))
    }

    fn from_days(
        days: Vec<DayRecord>,
        holidays: BTreeSet<NaiveDate>,
        config: IngestConfig,
    ) -> Self {
        let span = days.iter().filter_map(|d| d.domain).reduce(Domain::union);
        Self {
            days,
            span,
            holiday_dates: holidays,
            config,
        }
    }

    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }

    pub fn global_lo(&self) -> Option<f64> {
        self.span.map(|s| s.lo)
    }

    pub fn global_hi(&self) -> Option<f64> {
        self.span.map(|s| s.hi)
    }

    pub fn first_index(&self) -> Option<u32> {
        self.days.first().map(|d| d.day_index)
    }

    pub fn last_index(&self) -> Option<u32> {
        self.days.last().map(|d| d.day_index)
    }

    /// Number of workdays spanned (holidays included), i.e. the `T` of the
    /// workday axis.
    pub fn workday_span(&self) -> usize {
        match (self.first_index(), self.last_index()) {
            (Some(a), Some(b)) => (b - a + 1) as usize,
            _ => 0,
        }
    }

    pub fn day(&self, day_index: u32) -> Option<&DayRecord> {
        self.days
            .binary_search_by_key(&day_index, |d| d.day_index)
            .ok()
            .map(|i| &self.days[i])
    }

    /// Calendar date of a workday index, holidays and later days included.
    pub fn date_of(&self, day_index: u32) -> Option<NaiveDate> {
        let anchor = self.last_day_at_or_before(day_index)?;
        Some(add_workdays(
            anchor.calendar_date,
            day_index - anchor.day_index,
        ))
    }

    /// Last day with index `<= day_index`.
    pub fn last_day_at_or_before(&self, day_index: u32) -> Option<&DayRecord> {
        let pos = self.days.partition_point(|d| d.day_index <= day_index);
        pos.checked_sub(1).map(|i| &self.days[i])
    }

    pub fn eligible_days(&self) -> impl Iterator<Item = &DayRecord> {
        self.days.iter().filter(|d| d.is_fit_eligible())
    }

    pub fn outlier_count(&self) -> usize {
        self.days
            .iter()
            .flat_map(|d| &d.observations)
            .filter(|o| o.is_outlier)
            .count()
    }

    /// Re-flag outliers with a new threshold.
    pub fn with_outlier_threshold(&self, threshold: f64) -> Self {
        let config = IngestConfig {
            outlier_threshold: threshold,
            ..self.config.clone()
        };
        let days = self
            .days
            .iter()
            .map(|d| {
                let obs = d
                    .observations
                    .iter()
                    .cloned()
                    .map(|mut o| {
                        o.is_outlier = !o.is_missing && o.price > threshold;
                        o
                    })
                    .collect();
                DayRecord::build(d.day_index, d.calendar_date, obs, config.min_valid_pairs)
            })
            .collect();
        Self::from_days(days, self.holiday_dates.clone(), config)
    }

    /// Subset of days selected by `keep`, indices preserved.
    pub fn filter_days<P: FnMut(&DayRecord) -> bool>(&self, mut keep: P) -> Self {
        let days = self.days.iter().filter(|d| keep(d)).cloned().collect();
        Self::from_days(days, self.holiday_dates.clone(), self.config.clone())
    }

    /// Days with `lo <= day_index <= hi`.
    pub fn index_range(&self, lo: u32, hi: u32) -> Self {
        self.filter_days(|d| d.day_index >= lo && d.day_index <= hi)
    }
}

/// Splits into days strictly before `split_date` and the rest.
///
/// A split date before the first day returns `(empty, ds)`; after the last
/// day `(ds, empty)`.
pub fn split_learning_forecast(ds: &Dataset, split_date: NaiveDate) -> Result<(Dataset, Dataset)> {
    if ds.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot split an empty dataset".into(),
        ));
    }
    let learn = ds.filter_days(|d| d.calendar_date < split_date);
    let fcst = ds.filter_days(|d| d.calendar_date >= split_date);
    Ok((learn, fcst))
}

#[derive(Debug, Clone, Copy, Default)]
struct RawRow {
    price: Option<f64>,
    gross: Option<f64>,
    wind: Option<f64>,
}

fn parse_value(s: &str) -> std::result::Result<Option<f64>, String> {
    let t = s.trim();
    if t.is_empty() || t.eq_ignore_ascii_case("na") || t.eq_ignore_ascii_case("nan") {
        return Ok(None);
    }
    t.parse::<f64>()
        .map(Some)
        .map_err(|e| format!("invalid number {t:?}: {e}"))
}

fn read_hourly_csv(path: &Path, column: &str) -> Result<Vec<(NaiveDate, u8, Option<f64>)>> {
    let file = fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let headers = rdr
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    let expected = ["date", "hour", column];
    if headers.len() != 3 || headers.iter().zip(expected).any(|(h, e)| h != e) {
        return Err(parse_err(
            1,
            format!(
                "expected header `date,hour,{column}`, found `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let date = NaiveDate::parse_from_str(&rec[0], "%Y-%m-%d")
            .map_err(|e| parse_err(line, format!("invalid date {:?}: {e}", &rec[0])))?;
        let hour: u8 = rec[1]
            .parse()
            .map_err(|e| parse_err(line, format!("invalid hour {:?}: {e}", &rec[1])))?;
        if !(1..=24).contains(&hour) {
            return Err(parse_err(line, format!("hour {hour} outside 1..24")));
        }
        let value = parse_value(&rec[2]).map_err(|m| parse_err(line, m))?;
        out.push((date, hour, value));
    }
    Ok(out)
}

/// Reads a holiday file: one ISO date per line, blank lines and `#` comments ignored.
pub fn read_holidays(path: &Path) -> Result<BTreeSet<NaiveDate>> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut out = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let d = NaiveDate::parse_from_str(t, "%Y-%m-%d").map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i as u64 + 1,
            message: format!("invalid date {t:?}: {e}"),
        })?;
        out.insert(d);
    }
    Ok(out)
}

/// Loads prices and demand (optionally net of wind infeed).
pub fn load_dataset(
    price_file: &Path,
    demand_file: &Path,
    wind_file: Option<&Path>,
    holidays: &BTreeSet<NaiveDate>,
    config: &IngestConfig,
) -> Result<Dataset> {
    let mut rows: BTreeMap<(NaiveDate, u8), RawRow> = BTreeMap::new();
    let mut insert = |path: &Path,
                      data: Vec<(NaiveDate, u8, Option<f64>)>,
                      pick: fn(&mut RawRow) -> &mut Option<f64>|
     -> Result<()> {
        let mut seen = BTreeSet::new();
        for (date, hour, value) in data {
            if !seen.insert((date, hour)) {
                log::error!("{}: duplicate row for {date} hour {hour}", path.display());
                return Err(Error::DuplicateKey { date, hour });
            }
            *pick(rows.entry((date, hour)).or_default()) = value;
        }
        Ok(())
    };
    insert(price_file, read_hourly_csv(price_file, "price")?, |r| {
        &mut r.price
    })?;
    insert(
        demand_file,
        read_hourly_csv(demand_file, "gross_demand")?,
        |r| &mut r.gross,
    )?;
    if let Some(w) = wind_file {
        insert(w, read_hourly_csv(w, "wind_infeed")?, |r| &mut r.wind)?;
    }

    let origin = match rows.keys().next() {
        Some((d, _)) => *d,
        None => {
            return Ok(Dataset::from_days(
                Vec::new(),
                holidays.clone(),
                config.clone(),
            ));
        }
    };
    let mut observations = Vec::with_capacity(rows.len());
    for ((date, hour), raw) in rows {
        if !is_weekday(date) || holidays.contains(&date) {
            continue;
        }
        let demand = match (raw.gross, wind_file.is_some(), raw.wind) {
            (Some(g), false, _) => Some(g),
            (Some(g), true, Some(w)) => Some(g - w),
            _ => None,
        };
        let (price, demand, missing) = match (raw.price, demand) {
            (Some(p), Some(u)) => (p, u, false),
            _ => (f64::NAN, f64::NAN, true),
        };
        observations.push(HourlyObservation {
            day_index: workday_index(origin, date),
            calendar_date: date,
            hour,
            price,
            demand,
            is_outlier: false,
            is_missing: missing,
        });
    }
    Dataset::from_observations(observations, holidays.clone(), config.clone())
}

/// Paths written by [`write_dataset`].
#[derive(Debug, Clone)]
pub struct DatasetFiles {
    pub prices: PathBuf,
    pub demand: PathBuf,
    pub holidays: PathBuf,
}

impl DatasetFiles {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            prices: dir.join("prices.csv"),
            demand: dir.join("demand.csv"),
            holidays: dir.join("holidays.txt"),
        }
    }
}

fn fmt_value(v: f64, missing: bool) -> String {
    if missing {
        "NA".to_string()
    } else {
        format!("{v}")
    }
}

/// Writes the dataset in the input CSV formats (demand as `gross_demand`,
/// no wind file). Numbers use shortest round-trip formatting.
pub fn write_dataset(ds: &Dataset, dir: &Path) -> Result<DatasetFiles> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let files = DatasetFiles::in_dir(dir);
    let io = |path: &Path| {
        let p = path.to_path_buf();
        move |source| Error::Io { path: p, source }
    };
    let mut prices = String::from("date,hour,price\n");
    let mut demand = String::from("date,hour,gross_demand\n");
    for d in &ds.days {
        for o in &d.observations {
            prices.push_str(&format!(
                "{},{},{}\n",
                o.calendar_date,
                o.hour,
                fmt_value(o.price, o.is_missing)
            ));
            demand.push_str(&format!(
                "{},{},{}\n",
                o.calendar_date,
                o.hour,
                fmt_value(o.demand, o.is_missing)
            ));
        }
    }
    fs::write(&files.prices, prices).map_err(io(&files.prices))?;
    fs::write(&files.demand, demand).map_err(io(&files.demand))?;
    let mut f = fs::File::create(&files.holidays).map_err(io(&files.holidays))?;
    for h in &ds.holiday_dates {
        writeln!(f, "{h}").map_err(io(&files.holidays))?;
    }
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    #[test]
    fn add_workdays_inverts_workday_index() {
        let origin = d("2006-01-04");
        for n in 0..40 {
            let date = add_workdays(origin, n);
            assert!(is_weekday(date));
            assert_eq!(workday_index(origin, date), n + 1);
        }
        assert_eq!(add_workdays(d("2006-01-06"), 1), d("2006-01-09"));
    }

    #[test]
    fn demand_is_gross_minus_wind() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "p.csv", "date,hour,price\n2006-01-02,1,40\n");
        let g = write(
            dir.path(),
            "g.csv",
            "date,hour,gross_demand\n2006-01-02,1,60000\n",
        );
        let w = write(
            dir.path(),
            "w.csv",
            "date,hour,wind_infeed\n2006-01-02,1,2000\n",
        );
        let ds =
            load_dataset(&p, &g, Some(&w), &BTreeSet::new(), &IngestConfig::default()).unwrap();
        assert_eq!(ds.days[0].observations[0].demand, 58000.0);
    }

    #[test]
    fn outlier_flagged_and_retained() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "p.csv",
            "date,hour,price\n2006-01-02,1,250\n2006-01-02,2,40\n",
        );
        let g = write(
            dir.path(),
            "g.csv",
            "date,hour,gross_demand\n2006-01-02,1,60000\n2006-01-02,2,50000\n",
        );
        let ds = load_dataset(&p, &g, None, &BTreeSet::new(), &IngestConfig::default()).unwrap();
        let obs = &ds.days[0].observations;
        assert_eq!(obs.len(), 2);
        assert!(obs[0].is_outlier);
        assert_eq!(obs[0].price, 250.0);
        assert!(!obs[1].is_outlier);
        assert_eq!(ds.days[0].n_valid, 1);
        assert!(ds.days[0].degenerate);
    }

    #[test]
    fn weekends_and_holidays_dropped() {
        let dir = tempfile::tempdir().unwrap();
        // 2006-01-06 Fri, 2006-01-07 Sat, 2006-01-09 Mon (holiday), 2006-01-10 Tue
        let mut pb = String::from("date,hour,price\n");
        let mut gb = String::from("date,hour,gross_demand\n");
        for date in ["2006-01-06", "2006-01-07", "2006-01-09", "2006-01-10"] {
            for h in 1..=24 {
                pb.push_str(&format!("{date},{h},{}\n", 30 + h));
                gb.push_str(&format!("{date},{h},{}\n", 40000 + 1000 * h));
            }
        }
        let p = write(dir.path(), "p.csv", &pb);
        let g = write(dir.path(), "g.csv", &gb);
        let hol: BTreeSet<_> = [d("2006-01-09")].into_iter().collect();
        let ds = load_dataset(&p, &g, None, &hol, &IngestConfig::default()).unwrap();
        let dates: Vec<_> = ds.days.iter().map(|x| x.calendar_date).collect();
        assert_eq!(dates, vec![d("2006-01-06"), d("2006-01-10")]);
        // Holiday keeps its slot on the workday axis.
        assert_eq!(ds.days[0].day_index, 1);
        assert_eq!(ds.days[1].day_index, 3);
        assert_eq!(ds.workday_span(), 3);
        let dom = ds.days[0].domain.unwrap();
        assert_eq!((dom.lo, dom.hi), (41000.0, 64000.0));
    }

    #[test]
    fn malformed_row_names_file_and_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "p.csv",
            "date,hour,price\n2006-01-02,1,40\n2006-01-02,x,41\n",
        );
        let g = write(
            dir.path(),
            "g.csv",
            "date,hour,gross_demand\n2006-01-02,1,60000\n",
        );
        let err =
            load_dataset(&p, &g, None, &BTreeSet::new(), &IngestConfig::default()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("p.csv:3"), "{msg}");
    }

    #[test]
    fn duplicate_key_is_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "p.csv",
            "date,hour,price\n2006-01-02,1,40\n2006-01-02,1,41\n",
        );
        let g = write(
            dir.path(),
            "g.csv",
            "date,hour,gross_demand\n2006-01-02,1,60000\n",
        );
        assert!(matches!(
            load_dataset(&p, &g, None, &BTreeSet::new(), &IngestConfig::default()),
            Err(Error::DuplicateKey { .. })
        ));
    }

    #[test]
    fn workday_count_2006_to_sep_2008() {
        assert_eq!(workday_index(d("2006-01-01"), d("2008-09-30")), 717);
        assert_eq!(workday_index(d("2006-01-01"), d("2007-12-31")), 521);
    }
}
