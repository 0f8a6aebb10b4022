//! Earthquake catalogues: events, ordering, CSV/JSON ingestion and the
//! partition of a catalogue into pre-domain history and modelled events.
//!
//! Times are real-valued days relative to an arbitrary reference epoch. The
//! epoch is carried as metadata only.

use std::collections::HashSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single time-magnitude point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub magnitude: f64,
    pub id: u64,
}

impl Event {
    pub fn new(time: f64, magnitude: f64, id: u64) -> Self {
        Self { time, magnitude, id }
    }
}

/// Ascending time, then descending magnitude, then ascending id.
fn event_order(a: &Event, b: &Event) -> std::cmp::Ordering {
    a.time
        .total_cmp(&b.time)
        .then(b.magnitude.total_cmp(&a.magnitude))
        .then(a.id.cmp(&b.id))
}

/// An immutable, sorted collection of events with unique ids.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    events: Vec<Event>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    reference_epoch: Option<String>,
}

impl Catalog {
    /// Sorts the events and checks id uniqueness.
    pub fn new(mut events: Vec<Event>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(events.len());
        for e in &events {
            if !seen.insert(e.id) {
                return Err(Error::DuplicateId(e.id));
            }
        }
        events.sort_by(event_order);
        Ok(Self {
            events,
            reference_epoch: None,
        })
    }

    /// Builds a catalogue from `(time, magnitude)` pairs, numbering ids in
    /// input order.
    pub fn from_pairs(pairs: &[(f64, f64)]) -> Self {
        let events = pairs
            .iter()
            .enumerate()
            .map(|(i, &(t, m))| Event::new(t, m, i as u64))
            .collect();
        Self::new(events).expect("sequential ids are unique")
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn with_reference_epoch(mut self, epoch: impl Into<String>) -> Self {
        self.reference_epoch = Some(epoch.into());
        self
    }

    pub fn reference_epoch(&self) -> Option<&str> {
        self.reference_epoch.as_deref()
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Event> {
        self.events.iter()
    }

    /// Keeps the events matching `keep`; order and ids are preserved.
    pub fn filter(&self, mut keep: impl FnMut(&Event) -> bool) -> Self {
        Self {
            events: self.events.iter().copied().filter(|e| keep(e)).collect(),
            reference_epoch: self.reference_epoch.clone(),
        }
    }

    /// Number of events with time <= t (the counting process N(t)).
    pub fn count_until(&self, t: f64) -> usize {
        self.events.partition_point(|e| e.time <= t)
    }

    /// Serializes as CSV with header `time,magnitude,id`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["time", "magnitude", "id"])?;
        for e in &self.events {
            w.write_record([e.time.to_string(), e.magnitude.to_string(), e.id.to_string()])?;
        }
        w.flush().map_err(|e| Error::Csv(e.into()))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        self.write_csv(file)
    }

    /// JSON array of `{time, magnitude, id}` objects.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.events)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let events: Vec<Event> = serde_json::from_str(s)?;
        Self::new(events)
    }
}

impl<'a> IntoIterator for &'a Catalog {
    type Item = &'a Event;
    type IntoIter = std::slice::Iter<'a, Event>;

    fn into_iter(self) -> Self::IntoIter {
        self.events.iter()
    }
}

/// The modelled window `[t1, t2]` and the minimum modelled magnitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeDomain {
    pub t1: f64,
    pub t2: f64,
    pub m0: f64,
}

impl TimeDomain {
    pub fn new(t1: f64, t2: f64, m0: f64) -> Result<Self> {
        let dom = Self { t1, t2, m0 };
        dom.check()?;
        Ok(dom)
    }

    pub fn check(&self) -> Result<()> {
        if !(self.t1.is_finite() && self.t2.is_finite()) {
            return Err(Error::InvalidDomain("T1 and T2 must be finite".into()));
        }
        if self.t1 >= self.t2 {
            return Err(Error::InvalidDomain(format!(
                "T1={} must be less than T2={}",
                self.t1, self.t2
            )));
        }
        if !self.m0.is_finite() {
            return Err(Error::InvalidDomain("M0 must be finite".into()));
        }
        Ok(())
    }

    pub fn length(&self) -> f64 {
        self.t2 - self.t1
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.t1 && t <= self.t2
    }
}

/// Column names used when reading a catalogue CSV.
#[derive(Debug, Clone)]
pub struct CsvFormat {
    pub time: Vec<String>,
    pub magnitude: Vec<String>,
    pub id: Vec<String>,
}

impl Default for CsvFormat {
    fn default() -> Self {
        Self {
            time: vec!["time".into(), "t".into(), "ts".into()],
            magnitude: vec!["magnitude".into(), "mag".into(), "m".into()],
            id: vec!["id".into(), "idx.p".into()],
        }
    }
}

fn find_column(headers: &csv::StringRecord, names: &[String]) -> Option<usize> {
    headers
        .iter()
        .position(|h| names.iter().any(|n| n.eq_ignore_ascii_case(h.trim())))
}

/// Reads a catalogue from CSV text.
pub fn read_catalog<R: Read>(reader: R, format: &CsvFormat) -> Result<Catalog> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() {
        return Ok(Catalog::empty());
    }
    let time_col = find_column(&headers, &format.time).ok_or_else(|| Error::Parse {
        line: 1,
        message: "missing time column".into(),
    })?;
    let mag_col = find_column(&headers, &format.magnitude).ok_or_else(|| Error::Parse {
        line: 1,
        message: "missing magnitude column".into(),
    })?;
    let id_col = find_column(&headers, &format.id);

    let mut events = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let line = record
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or(row + 2);
        let field = |col: usize, name: &str| -> Result<f64> {
            let raw = record.get(col).ok_or_else(|| Error::Parse {
                line,
                message: format!("missing {name} field"),
            })?;
            raw.parse::<f64>().map_err(|_| Error::Parse {
                line,
                message: format!("cannot parse {name} from {raw:?}"),
            })
        };
        let time = field(time_col, "time")?;
        let magnitude = field(mag_col, "magnitude")?;
        if !time.is_finite() {
            return Err(Error::NonFinite { line, field: "time" });
        }
        if !magnitude.is_finite() {
            return Err(Error::NonFinite {
                line,
                field: "magnitude",
            });
        }
        let id = match id_col.and_then(|c| record.get(c)) {
            Some(raw) if !raw.is_empty() => raw.parse::<u64>().map_err(|_| Error::Parse {
                line,
                message: format!("cannot parse id from {raw:?}"),
            })?,
            _ => row as u64,
        };
        events.push(Event::new(time, magnitude, id));
    }
    Catalog::new(events)
}

/// Loads a catalogue file.
pub fn load_catalog(path: impl AsRef<Path>, format: &CsvFormat) -> Result<Catalog> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_catalog(file, format)
}

/// Splits into `(history, modeled)`: history holds events before `t1`,
/// modelled events lie in the closed window `[t1, t2]`. Events below `m0`
/// and after `t2` are discarded.
pub fn split_domain(cat: &Catalog, dom: &TimeDomain) -> (Catalog, Catalog) {
    let history = cat.filter(|e| e.time < dom.t1 && e.magnitude >= dom.m0);
    let modeled = cat.filter(|e| dom.contains(e.time) && e.magnitude >= dom.m0);
    (history, modeled)
}

/// Summary statistics of a catalogue relative to a domain.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub n_events: usize,
    pub min_time: Option<f64>,
    pub max_time: Option<f64>,
    pub min_magnitude: Option<f64>,
    pub max_magnitude: Option<f64>,
    pub below_m0: usize,
    pub duplicate_times: usize,
    pub outside_domain: usize,
}

pub fn validate(cat: &Catalog, dom: &TimeDomain) -> ValidationReport {
    let events = cat.events();
    let fold = |f: fn(f64, f64) -> f64, pick: fn(&Event) -> f64| {
        events.iter().map(pick).reduce(f)
    };
    ValidationReport {
        n_events: events.len(),
        min_time: fold(f64::min, |e| e.time),
        max_time: fold(f64::max, |e| e.time),
        min_magnitude: fold(f64::min, |e| e.magnitude),
        max_magnitude: fold(f64::max, |e| e.magnitude),
        below_m0: events.iter().filter(|e| e.magnitude < dom.m0).count(),
        duplicate_times: events.windows(2).filter(|w| w[0].time == w[1].time).count(),
        outside_domain: events.iter().filter(|e| !dom.contains(e.time)).count(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dom(t1: f64, t2: f64) -> TimeDomain {
        TimeDomain::new(t1, t2, 2.5).unwrap()
    }

    #[test]
    fn loads_and_sorts() {
        let cat = read_catalog("time,mag\n0.5,3.0\n0.2,2.6".as_bytes(), &CsvFormat::default())
            .unwrap();
        let pairs: Vec<_> = cat.iter().map(|e| (e.time, e.magnitude)).collect();
        assert_eq!(pairs, vec![(0.2, 2.6), (0.5, 3.0)]);
    }

    #[test]
    fn header_only_is_empty() {
        let cat = read_catalog("time,magnitude\n".as_bytes(), &CsvFormat::default()).unwrap();
        assert!(cat.is_empty());
    }

    #[test]
    fn malformed_row_names_line() {
        let err = read_catalog("time,magnitude\nabc,3.0\n".as_bytes(), &CsvFormat::default())
            .unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn non_finite_rejected() {
        let err = read_catalog("time,magnitude\n1.0,3.0\nNaN,3.0\n".as_bytes(), &CsvFormat::default())
            .unwrap_err();
        assert!(matches!(err, Error::NonFinite { line: 3, field: "time" }));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let err = Catalog::new(vec![Event::new(0.0, 3.0, 1), Event::new(1.0, 3.0, 1)]).unwrap_err();
        assert!(matches!(err, Error::DuplicateId(1)));
    }

    #[test]
    fn ties_put_larger_magnitude_first() {
        let cat = Catalog::new(vec![
            Event::new(5.0, 3.0, 0),
            Event::new(5.0, 6.7, 1),
            Event::new(5.0, 3.0, 2),
        ])
        .unwrap();
        let ids: Vec<_> = cat.iter().map(|e| e.id).collect();
        assert_eq!(ids, vec![1, 0, 2]);
    }

    #[test]
    fn split_by_threshold() {
        let cat = Catalog::from_pairs(&[(100.0, 3.0), (501.0, 3.0), (999.0, 3.0)]);
        let (h, m) = split_domain(&cat, &dom(500.0, 1000.0));
        assert_eq!(h.iter().map(|e| e.time).collect::<Vec<_>>(), vec![100.0]);
        assert_eq!(m.iter().map(|e| e.time).collect::<Vec<_>>(), vec![501.0, 999.0]);
    }

    #[test]
    fn split_all_inside() {
        let cat = Catalog::from_pairs(&[(1.0, 3.0), (2.0, 3.0)]);
        let (h, m) = split_domain(&cat, &dom(0.0, 1000.0));
        assert!(h.is_empty());
        assert_eq!(m.len(), 2);
    }

    #[test]
    fn boundaries_are_modeled() {
        let cat = Catalog::from_pairs(&[(500.0, 6.7), (1000.0, 3.0), (1000.5, 3.0)]);
        let (h, m) = split_domain(&cat, &dom(500.0, 1000.0));
        assert!(h.is_empty());
        assert_eq!(m.len(), 2);
    }

    #[test]
    fn split_drops_small_events() {
        let cat = Catalog::from_pairs(&[(1.0, 2.0), (600.0, 2.4), (700.0, 2.5)]);
        let (h, m) = split_domain(&cat, &dom(500.0, 1000.0));
        assert!(h.is_empty());
        assert_eq!(m.len(), 1);
    }

    #[test]
    fn validate_counts() {
        let d = dom(0.0, 1000.0);
        let empty = validate(&Catalog::empty(), &d);
        assert_eq!(empty.n_events, 0);
        assert_eq!(empty.duplicate_times, 0);
        assert_eq!(empty.below_m0, 0);

        let pairs: Vec<_> = (0..217).map(|i| (i as f64 * 4.5, 2.5 + (i % 7) as f64 * 0.1)).collect();
        let report = validate(&Catalog::from_pairs(&pairs), &d);
        assert_eq!(report.n_events, 217);

        let dup = validate(&Catalog::from_pairs(&[(3.0, 3.0), (3.0, 2.7), (4.0, 2.0)]), &d);
        assert_eq!(dup.duplicate_times, 1);
        assert_eq!(dup.below_m0, 1);
        assert_eq!(dup.min_time, Some(3.0));
        assert_eq!(dup.max_magnitude, Some(3.0));
    }

    #[test]
    fn invalid_domain() {
        assert!(TimeDomain::new(10.0, 10.0, 2.5).is_err());
        assert!(TimeDomain::new(0.0, 1.0, f64::NAN).is_err());
    }

    #[test]
    fn json_mirrors_csv() {
        let cat = Catalog::from_pairs(&[(0.25, 3.1), (1.5, 2.9)]);
        let back = Catalog::from_json(&cat.to_json().unwrap()).unwrap();
        assert_eq!(back.events(), cat.events());
    }

    #[test]
    fn counting_process() {
        let cat = Catalog::from_pairs(&[(1.0, 3.0), (2.0, 3.0), (2.0, 2.8), (5.0, 3.0)]);
        assert_eq!(cat.count_until(0.5), 0);
        assert_eq!(cat.count_until(2.0), 3);
        assert_eq!(cat.count_until(10.0), 4);
    }
}
