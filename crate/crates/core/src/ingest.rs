//! Candle acquisition: CSV parsing/serialization, gap validation, and a paged
//! HTTP fetcher for JSON candle endpoints.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default candle interval (one day).
pub const DAILY: i64 = 86_400;

pub const CSV_HEADER: [&str; 6] = ["timestamp", "open", "high", "low", "close", "volume"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IngestError {
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("duplicate timestamp {timestamp} at line {line}")]
    DuplicateTimestamp { timestamp: i64, line: u64 },
    #[error("non-positive price at line {line}")]
    NonPositivePrice { line: u64 },
    #[error("negative volume at line {line}")]
    NegativeVolume { line: u64 },
    #[error("OHLC relation violated at line {line}: {reason}")]
    OhlcViolation { line: u64, reason: String },
    #[error("candle series is empty")]
    EmptySeries,
    #[error("interval must be positive, got {0}")]
    InvalidInterval(i64),
    #[error("invalid fetch configuration: {0}")]
    InvalidConfig(String),
    #[error("network error after {attempts} attempt(s): {message}")]
    NetworkError { attempts: u32, message: String },
    #[error("malformed payload: {0}")]
    MalformedPayload(String),
    #[error("no candles in requested range [{start}, {end})")]
    EmptyRange { start: i64, end: i64 },
}

/// One OHLCV observation. `timestamp` is UTC epoch seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candle {
    pub timestamp: i64,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: f64,
}

/// Which invariant a candle breaks, independent of where it came from.
#[derive(Debug, Clone, PartialEq)]
enum CandleFault {
    NonFinite,
    NonPositivePrice,
    NegativeVolume,
    Ohlc(String),
}

impl CandleFault {
    fn at_line(self, line: u64) -> IngestError {
        match self {
            CandleFault::NonFinite => IngestError::MalformedRow {
                line,
                reason: "non-finite value".into(),
            },
            CandleFault::NonPositivePrice => IngestError::NonPositivePrice { line },
            CandleFault::NegativeVolume => IngestError::NegativeVolume { line },
            CandleFault::Ohlc(reason) => IngestError::OhlcViolation { line, reason },
        }
    }
}

impl Candle {
    pub fn new(timestamp: i64, open: f64, high: f64, low: f64, close: f64, volume: f64) -> Self {
        Self { timestamp, open, high, low, close, volume }
    }

    fn check(&self) -> Result<(), CandleFault> {
        let fields = [self.open, self.high, self.low, self.close, self.volume];
        if fields.iter().any(|v| !v.is_finite()) {
            return Err(CandleFault::NonFinite);
        }
        if [self.open, self.high, self.low, self.close].iter().any(|&p| p <= 0.0) {
            return Err(CandleFault::NonPositivePrice);
        }
        if self.volume < 0.0 {
            return Err(CandleFault::NegativeVolume);
        }
        if self.high < self.low {
            return Err(CandleFault::Ohlc(format!("high {} < low {}", self.high, self.low)));
        }
        if self.low > self.open.min(self.close) {
            return Err(CandleFault::Ohlc(format!(
                "low {} above min(open, close)",
                self.low
            )));
        }
        if self.high < self.open.max(self.close) {
            return Err(CandleFault::Ohlc(format!(
                "high {} below max(open, close)",
                self.high
            )));
        }
        Ok(())
    }

    pub fn typical_price(&self) -> f64 {
        (self.high + self.low + self.close) / 3.0
    }
}

/// Candles in strictly increasing timestamp order with a nominal interval.
///
/// Construction enforces ordering and per-candle validity. Holes in the
/// spacing are allowed here and reported by [`validate_series`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandleSeries {
    candles: Vec<Candle>,
    interval: i64,
}

impl CandleSeries {
    /// Sorts `candles` by timestamp and validates every invariant except spacing.
    pub fn new(mut candles: Vec<Candle>, interval: i64) -> Result<Self, IngestError> {
        if interval <= 0 {
            return Err(IngestError::InvalidInterval(interval));
        }
        if candles.is_empty() {
            return Err(IngestError::EmptySeries);
        }
        for (i, c) in candles.iter().enumerate() {
            c.check().map_err(|f| f.at_line(i as u64 + 1))?;
        }
        candles.sort_by_key(|c| c.timestamp);
        if let Some(w) = candles.windows(2).find(|w| w[0].timestamp == w[1].timestamp) {
            return Err(IngestError::DuplicateTimestamp { timestamp: w[0].timestamp, line: 0 });
        }
        Ok(Self { candles, interval })
    }

    pub fn candles(&self) -> &[Candle] {
        &self.candles
    }

    pub fn interval(&self) -> i64 {
        self.interval
    }

    pub fn len(&self) -> usize {
        self.candles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candles.is_empty()
    }

    pub fn timestamps(&self) -> Vec<i64> {
        self.candles.iter().map(|c| c.timestamp).collect()
    }

    pub fn closes(&self) -> Vec<f64> {
        self.candles.iter().map(|c| c.close).collect()
    }

    /// First `len` candles as a new series.
    pub fn truncated(&self, len: usize) -> Result<Self, IngestError> {
        Self::new(self.candles[..len.min(self.candles.len())].to_vec(), self.interval)
    }
}

/// Parses a `timestamp,open,high,low,close,volume` document. Rows may arrive in
/// any order; the result is sorted ascending.
pub fn parse_candles_csv(text: &str, interval: i64) -> Result<CandleSeries, IngestError> {
    if interval <= 0 {
        return Err(IngestError::InvalidInterval(interval));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let headers = reader.headers().map_err(|e| IngestError::MalformedRow {
        line: 1,
        reason: e.to_string(),
    })?;
    if headers.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(IngestError::MalformedRow {
            line: 1,
            reason: format!("expected header `{}`", CSV_HEADER.join(",")),
        });
    }

    let mut seen: BTreeMap<i64, u64> = BTreeMap::new();
    let mut candles = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| IngestError::MalformedRow {
            line: e.position().map_or(0, |p| p.line()),
            reason: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 6 {
            return Err(IngestError::MalformedRow {
                line,
                reason: format!("expected 6 fields, found {}", record.len()),
            });
        }
        let timestamp: i64 = record[0].parse().map_err(|_| IngestError::MalformedRow {
            line,
            reason: format!("bad timestamp `{}`", &record[0]),
        })?;
        let mut values = [0.0f64; 5];
        for (slot, field) in values.iter_mut().zip(record.iter().skip(1)) {
            let v: f64 = field.parse().map_err(|_| IngestError::MalformedRow {
                line,
                reason: format!("bad number `{field}`"),
            })?;
            if !v.is_finite() {
                return Err(IngestError::MalformedRow {
                    line,
                    reason: format!("non-finite number `{field}`"),
                });
            }
            *slot = v;
        }
        let candle = Candle::new(timestamp, values[0], values[1], values[2], values[3], values[4]);
        candle.check().map_err(|f| f.at_line(line))?;
        if seen.insert(timestamp, line).is_some() {
            return Err(IngestError::DuplicateTimestamp { timestamp, line });
        }
        candles.push(candle);
    }
    CandleSeries::new(candles, interval)
}

/// Writes the canonical CSV form. Floats use the shortest round-trip decimal
/// representation, so `parse_candles_csv(&write_candles_csv(s))` reproduces `s`.
/// `YYYY-MM-DD` to the Unix timestamp of that day's UTC midnight.
pub fn date_to_timestamp(date: &str) -> Result<i64, IngestError> {
    let d = chrono::NaiveDate::parse_from_str(date, "%Y-%m-%d")
        .map_err(|e| IngestError::InvalidConfig(format!("date `{date}`: {e}")))?;
    Ok(d.and_hms_opt(0, 0, 0).expect("midnight").and_utc().timestamp())
}

pub fn write_candles_csv(series: &CandleSeries) -> String {
    let mut out = String::with_capacity(series.len() * 48);
    out.push_str(&CSV_HEADER.join(","));
    out.push('\n');
    for c in series.candles() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            c.timestamp, c.open, c.high, c.low, c.close, c.volume
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRecord {
    /// Index of the candle after the gap.
    pub index: usize,
    pub before: i64,
    pub after: i64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub gaps: Vec<GapRecord>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.gaps.is_empty()
    }
}

/// Lists every adjacent pair whose spacing differs from the series interval.
pub fn validate_series(series: &CandleSeries) -> ValidationReport {
    let gaps = series
        .candles()
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[1].timestamp - w[0].timestamp != series.interval())
        .map(|(i, w)| GapRecord { index: i + 1, before: w[0].timestamp, after: w[1].timestamp })
        .collect();
    ValidationReport { gaps }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FetchConfig {
    pub base_url: String,
    /// Request path with `{symbol}`, `{interval}`, `{start}`, `{end}` and
    /// `{limit}` placeholders, e.g. `/candles?s={symbol}&from={start}&to={end}&n={limit}`.
    pub path_template: String,
    pub page_limit: usize,
    pub max_retries: u32,
    #[serde(with = "duration_millis")]
    pub retry_backoff: Duration,
}

impl Default for FetchConfig {
    fn default() -> Self {
        Self {
            base_url: "http://127.0.0.1:8080".into(),
            path_template:
                "/candles?symbol={symbol}&interval={interval}&start={start}&end={end}&limit={limit}"
                    .into(),
            page_limit: 500,
            max_retries: 3,
            retry_backoff: Duration::from_millis(500),
        }
    }
}

impl FetchConfig {
    pub fn validate(&self) -> Result<(), IngestError> {
        if self.page_limit == 0 {
            return Err(IngestError::InvalidConfig("page_limit must be >= 1".into()));
        }
        if self.base_url.is_empty() {
            return Err(IngestError::InvalidConfig("base_url is empty".into()));
        }
        Ok(())
    }

    fn url(&self, symbol: &str, interval: i64, start: i64, end: i64) -> String {
        let path = self
            .path_template
            .replace("{symbol}", symbol)
            .replace("{interval}", &interval.to_string())
            .replace("{start}", &start.to_string())
            .replace("{end}", &end.to_string())
            .replace("{limit}", &self.page_limit.to_string());
        format!("{}{}", self.base_url.trim_end_matches('/'), path)
    }
}

mod duration_millis {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TransportError {
    /// Worth retrying: connection failures, timeouts, 5xx, 429.
    Transient(String),
    /// Not worth retrying: other 4xx responses.
    Fatal(String),
}

/// Blocking GET returning the response body.
pub trait HttpGet {
    fn get(&self, url: &str) -> Result<String, TransportError>;
}

/// Plain `ureq` transport.
#[derive(Debug, Default, Clone)]
pub struct UreqTransport;

impl HttpGet for UreqTransport {
    fn get(&self, url: &str) -> Result<String, TransportError> {
        match ureq::get(url).call() {
            Ok(mut resp) => resp
                .body_mut()
                .read_to_string()
                .map_err(|e| TransportError::Transient(e.to_string())),
            Err(ureq::Error::StatusCode(code)) if code == 429 || code >= 500 => {
                Err(TransportError::Transient(format!("HTTP {code}")))
            }
            Err(ureq::Error::StatusCode(code)) => Err(TransportError::Fatal(format!("HTTP {code}"))),
            Err(e) => Err(TransportError::Transient(e.to_string())),
        }
    }
}

/// Fetches `[start, end)` over HTTP with the default transport.
pub fn fetch_candles(
    config: &FetchConfig,
    symbol: &str,
    interval: i64,
    start: i64,
    end: i64,
) -> Result<CandleSeries, IngestError> {
    fetch_candles_with(&UreqTransport, config, symbol, interval, start, end)
}

/// Paged fetch. Each page covers `[cursor, end)` with at most `page_limit`
/// candles; the cursor advances past the last candle returned. Overlapping
/// pages are deduplicated keeping the first occurrence.
pub fn fetch_candles_with<T: HttpGet + ?Sized>(
    transport: &T,
    config: &FetchConfig,
    symbol: &str,
    interval: i64,
    start: i64,
    end: i64,
) -> Result<CandleSeries, IngestError> {
    config.validate()?;
    if interval <= 0 {
        return Err(IngestError::InvalidInterval(interval));
    }
    if start >= end {
        return Err(IngestError::EmptyRange { start, end });
    }

    let mut by_ts: BTreeMap<i64, Candle> = BTreeMap::new();
    let mut cursor = start;
    while cursor < end {
        let url = config.url(symbol, interval, cursor, end);
        let body = get_with_retries(transport, &url, config)?;
        let page = parse_page(&body)?;
        if page.is_empty() {
            break;
        }
        let last = page.iter().map(|c| c.timestamp).max().unwrap_or(cursor);
        let full = page.len() >= config.page_limit;
        for c in page {
            by_ts.entry(c.timestamp).or_insert(c);
        }
        if last < cursor || !full {
            break;
        }
        cursor = last + interval;
    }

    let candles: Vec<Candle> = by_ts.range(start..end).map(|(_, c)| *c).collect();
    if candles.is_empty() {
        return Err(IngestError::EmptyRange { start, end });
    }
    CandleSeries::new(candles, interval)
}

fn get_with_retries<T: HttpGet + ?Sized>(
    transport: &T,
    url: &str,
    config: &FetchConfig,
) -> Result<String, IngestError> {
    let mut attempts = 0;
    loop {
        attempts += 1;
        match transport.get(url) {
            Ok(body) => return Ok(body),
            Err(TransportError::Fatal(message)) => {
                return Err(IngestError::NetworkError { attempts, message })
            }
            Err(TransportError::Transient(message)) => {
                if attempts > config.max_retries {
                    return Err(IngestError::NetworkError { attempts, message });
                }
                if !config.retry_backoff.is_zero() {
                    std::thread::sleep(config.retry_backoff * attempts);
                }
            }
        }
    }
}

fn parse_page(body: &str) -> Result<Vec<Candle>, IngestError> {
    let rows: Vec<Vec<serde_json::Value>> =
        serde_json::from_str(body).map_err(|e| IngestError::MalformedPayload(e.to_string()))?;
    rows.iter()
        .enumerate()
        .map(|(i, row)| {
            if row.len() != 6 {
                return Err(IngestError::MalformedPayload(format!(
                    "entry {i}: expected 6 elements, found {}",
                    row.len()
                )));
            }
            let num = |v: &serde_json::Value| -> Option<f64> {
                match v {
                    serde_json::Value::Number(n) => n.as_f64(),
                    serde_json::Value::String(s) => s.parse().ok(),
                    _ => None,
                }
            };
            let timestamp = match &row[0] {
                serde_json::Value::Number(n) => n.as_i64(),
                serde_json::Value::String(s) => s.parse().ok(),
                _ => None,
            }
            .ok_or_else(|| IngestError::MalformedPayload(format!("entry {i}: bad timestamp")))?;
            let mut v = [0.0; 5];
            for (k, slot) in v.iter_mut().enumerate() {
                *slot = num(&row[k + 1]).ok_or_else(|| {
                    IngestError::MalformedPayload(format!("entry {i}: bad number at {}", k + 1))
                })?;
            }
            let c = Candle::new(timestamp, v[0], v[1], v[2], v[3], v[4]);
            c.check()
                .map_err(|f| IngestError::MalformedPayload(format!("entry {i}: {}", f.at_line(0))))?;
            Ok(c)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::{Cell, RefCell};

    const HEADER: &str = "timestamp,open,high,low,close,volume\n";

    #[test]
    fn single_row_maps_fields() {
        let s = parse_candles_csv(&format!("{HEADER}1700000000,100,110,90,105,5.0\n"), DAILY).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.candles()[0].close, 105.0);
        assert_eq!(s.candles()[0].volume, 5.0);
    }

    #[test]
    fn unordered_rows_are_sorted() {
        let text = format!("{HEADER}1700086400,1,2,1,2,1\r\n1700000000,1,2,1,1,1\r\n");
        let s = parse_candles_csv(&text, DAILY).unwrap();
        assert_eq!(s.timestamps(), vec![1700000000, 1700086400]);
    }

    #[test]
    fn ohlc_violation_reports_line() {
        let text = format!("{HEADER}1,100,101,99,100,1\n2,95,90,100,95,1\n");
        match parse_candles_csv(&text, 1) {
            Err(IngestError::OhlcViolation { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_and_bad_rows() {
        let dup = format!("{HEADER}1,1,1,1,1,1\n1,1,1,1,1,1\n");
        assert!(matches!(
            parse_candles_csv(&dup, 1),
            Err(IngestError::DuplicateTimestamp { timestamp: 1, line: 3 })
        ));
        let bad = format!("{HEADER}1,abc,1,1,1,1\n");
        assert!(matches!(parse_candles_csv(&bad, 1), Err(IngestError::MalformedRow { line: 2, .. })));
        let neg = format!("{HEADER}1,0,1,0,1,1\n");
        assert!(matches!(parse_candles_csv(&neg, 1), Err(IngestError::NonPositivePrice { line: 2 })));
        let inf = format!("{HEADER}1,inf,1,1,1,1\n");
        assert!(matches!(parse_candles_csv(&inf, 1), Err(IngestError::MalformedRow { .. })));
        assert!(matches!(
            parse_candles_csv("a,b\n1,2\n", 1),
            Err(IngestError::MalformedRow { line: 1, .. })
        ));
        assert_eq!(parse_candles_csv(HEADER, 1), Err(IngestError::EmptySeries));
    }

    fn daily(days: &[i64]) -> CandleSeries {
        let candles = days
            .iter()
            .map(|d| Candle::new(d * DAILY, 10.0, 11.0, 9.0, 10.0, 1.0))
            .collect();
        CandleSeries::new(candles, DAILY).unwrap()
    }

    #[test]
    fn validation_reports_gaps() {
        assert!(validate_series(&daily(&[0, 1, 2, 3])).is_clean());
        assert!(validate_series(&daily(&[5])).is_clean());
        let r = validate_series(&daily(&[0, 1, 3]));
        assert_eq!(r.gaps, vec![GapRecord { index: 2, before: DAILY, after: 3 * DAILY }]);
    }

    struct Pages {
        pages: Vec<&'static str>,
        failures_left: Cell<u32>,
        requests: RefCell<Vec<String>>,
    }

    impl HttpGet for Pages {
        fn get(&self, url: &str) -> Result<String, TransportError> {
            if self.failures_left.get() > 0 {
                self.failures_left.set(self.failures_left.get() - 1);
                return Err(TransportError::Transient("503".into()));
            }
            let mut reqs = self.requests.borrow_mut();
            reqs.push(url.to_string());
            Ok(self.pages.get(reqs.len() - 1).copied().unwrap_or("[]").to_string())
        }
    }

    fn cfg(limit: usize, retries: u32) -> FetchConfig {
        FetchConfig {
            base_url: "http://mock".into(),
            path_template: "/c?s={symbol}&from={start}&to={end}&n={limit}".into(),
            page_limit: limit,
            max_retries: retries,
            retry_backoff: Duration::ZERO,
        }
    }

    #[test]
    fn fetch_concatenates_pages() {
        let t = Pages {
            pages: vec![
                "[[0,1,2,1,1,5],[10,1,2,1,2,5]]",
                "[[20,2,3,2,2,5],[30,2,3,2,3,5]]",
                "[[40,3,4,3,3,5],[50,3,4,3,4,5]]",
            ],
            failures_left: Cell::new(0),
            requests: RefCell::new(vec![]),
        };
        let s = fetch_candles_with(&t, &cfg(2, 0), "BTC", 10, 0, 100).unwrap();
        assert_eq!(s.len(), 6);
        assert_eq!(s.timestamps(), vec![0, 10, 20, 30, 40, 50]);
        let reqs = t.requests.borrow();
        assert_eq!(reqs[0], "http://mock/c?s=BTC&from=0&to=100&n=2");
        assert_eq!(reqs[1], "http://mock/c?s=BTC&from=20&to=100&n=2");
    }

    #[test]
    fn fetch_retries_transient_failures() {
        let t = Pages {
            pages: vec!["[[0,1,2,1,1,5]]"],
            failures_left: Cell::new(2),
            requests: RefCell::new(vec![]),
        };
        assert_eq!(fetch_candles_with(&t, &cfg(5, 3), "X", 10, 0, 100).unwrap().len(), 1);

        let t = Pages {
            pages: vec!["[[0,1,2,1,1,5]]"],
            failures_left: Cell::new(4),
            requests: RefCell::new(vec![]),
        };
        assert!(matches!(
            fetch_candles_with(&t, &cfg(5, 3), "X", 10, 0, 100),
            Err(IngestError::NetworkError { attempts: 4, .. })
        ));
    }

    #[test]
    fn fetch_drops_overlapping_candles() {
        let pages = vec![
            "[[0,1,2,1,1,5],[10,1,2,1,2,5],[20,2,3,2,2,5]]",
            "[[20,2,3,2,2,5],[30,2,3,2,3,5],[40,3,4,3,3,5]]",
            "[[40,3,4,3,3,5]]",
        ];
        // Distinct timestamps across the fixture pages: 0, 10, 20, 30, 40.
        let distinct: std::collections::BTreeSet<i64> = pages
            .iter()
            .flat_map(|p| parse_page(p).unwrap())
            .map(|c| c.timestamp)
            .collect();
        let t = Pages { pages, failures_left: Cell::new(0), requests: RefCell::new(vec![]) };
        let s = fetch_candles_with(&t, &cfg(3, 0), "X", 10, 0, 1000).unwrap();
        assert_eq!(s.len(), distinct.len());
        assert_eq!(s.timestamps(), distinct.into_iter().collect::<Vec<_>>());
    }

    #[test]
    fn fetch_error_paths() {
        let t = Pages { pages: vec!["[]"], failures_left: Cell::new(0), requests: RefCell::new(vec![]) };
        assert!(matches!(
            fetch_candles_with(&t, &cfg(3, 0), "X", 10, 0, 100),
            Err(IngestError::EmptyRange { .. })
        ));
        assert!(matches!(
            fetch_candles_with(&t, &cfg(3, 0), "X", 10, 100, 100),
            Err(IngestError::EmptyRange { .. })
        ));
        let t = Pages { pages: vec!["{\"x\":1}"], failures_left: Cell::new(0), requests: RefCell::new(vec![]) };
        assert!(matches!(
            fetch_candles_with(&t, &cfg(3, 0), "X", 10, 0, 100),
            Err(IngestError::MalformedPayload(_))
        ));
        assert!(matches!(
            fetch_candles_with(&t, &cfg(0, 0), "X", 10, 0, 100),
            Err(IngestError::InvalidConfig(_))
        ));
    }
}
