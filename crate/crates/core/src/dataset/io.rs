use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use chrono::{DateTime, NaiveDateTime, SecondsFormat, Utc};

use super::{Dataset, DatasetError, GeoSample};
use crate::geo::GeoPoint;

pub const CANONICAL_HEADER: [&str; 10] = [
    "timestamp",
    "lat_deg",
    "lon_deg",
    "alt_asl_m",
    "cell_id",
    "rsrp_dbm",
    "rsrq_db",
    "rssi_dbm",
    "pl_db",
    "snr_db",
];

const REQUIRED_FIELDS: [&str; 9] = [
    "timestamp",
    "latitude",
    "longitude",
    "altitude",
    "cell_id",
    "rsrp",
    "rsrq",
    "rssi",
    "pl",
];

/// Binds source header names to sample fields.
///
/// Text form: one `field = Header Name` per line, `#` starts a comment.
/// Fields: timestamp, latitude, longitude, altitude, cell_id, rsrp, rsrq,
/// rssi, pl and the optional snr.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnMap {
    fields: BTreeMap<String, String>,
}

impl ColumnMap {
    pub fn parse(text: &str) -> Result<Self, DatasetError> {
        let mut fields = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                DatasetError::ColumnMap(format!("line {}: expected `field = column`", lineno + 1))
            })?;
            let key = key.trim().to_ascii_lowercase();
            if !REQUIRED_FIELDS.contains(&key.as_str()) && key != "snr" {
                return Err(DatasetError::ColumnMap(format!(
                    "line {}: unknown field `{key}`",
                    lineno + 1
                )));
            }
            fields.insert(key, value.trim().to_string());
        }
        for f in REQUIRED_FIELDS {
            if !fields.contains_key(f) {
                return Err(DatasetError::ColumnMap(format!("missing entry for `{f}`")));
            }
        }
        Ok(Self { fields })
    }

    pub fn from_file(path: &Path) -> Result<Self, DatasetError> {
        let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    /// The map for files written by [`write_canonical_csv`].
    pub fn canonical() -> Self {
        let pairs = REQUIRED_FIELDS
            .iter()
            .chain(std::iter::once(&"snr"))
            .zip(CANONICAL_HEADER);
        Self {
            fields: pairs
                .map(|(f, h)| (f.to_string(), h.to_string()))
                .collect(),
        }
    }

    pub fn column(&self, field: &str) -> Option<&str> {
        self.fields.get(field).map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowRejection {
    /// 1-based line number in the source file (header is line 1).
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub rows_read: usize,
    pub rejected: Vec<RowRejection>,
}

/// Accepts RFC 3339 or a naive `YYYY-MM-DD[ T]HH:MM:SS[.fff]` read as UTC.
pub fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.with_timezone(&Utc));
    }
    ["%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M:%S%.f"]
        .iter()
        .find_map(|fmt| NaiveDateTime::parse_from_str(s, fmt).ok())
        .map(|n| n.and_utc())
}

fn parse_opt(field: &str, raw: &str) -> Result<Option<f64>, String> {
    let raw = raw.trim();
    if raw.is_empty() || raw.eq_ignore_ascii_case("nan") || raw.eq_ignore_ascii_case("na") {
        return Ok(None);
    }
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        _ => Err(format!("{field}: cannot parse `{raw}`")),
    }
}

fn parse_req(field: &str, raw: &str) -> Result<f64, String> {
    parse_opt(field, raw)?.ok_or_else(|| format!("{field}: missing"))
}

struct Indices {
    timestamp: usize,
    latitude: usize,
    longitude: usize,
    altitude: usize,
    cell_id: usize,
    rsrp: usize,
    rsrq: usize,
    rssi: usize,
    pl: usize,
    snr: Option<usize>,
}

fn row_to_sample(rec: &csv::StringRecord, ix: &Indices) -> Result<GeoSample, String> {
    let get = |i: usize| rec.get(i).unwrap_or("");
    let timestamp = parse_timestamp(get(ix.timestamp))
        .ok_or_else(|| format!("timestamp: cannot parse `{}`", get(ix.timestamp)))?;
    let position = GeoPoint::new(
        parse_req("latitude", get(ix.latitude))?,
        parse_req("longitude", get(ix.longitude))?,
        parse_req("altitude", get(ix.altitude))?,
    )
    .map_err(|e| e.to_string())?;
    let cell_id = get(ix.cell_id).trim().to_string();
    if cell_id.is_empty() {
        return Err("cell_id: missing".into());
    }
    Ok(GeoSample {
        timestamp,
        position,
        cell_id,
        rsrp: parse_opt("rsrp", get(ix.rsrp))?,
        rsrq: parse_opt("rsrq", get(ix.rsrq))?,
        rssi: parse_opt("rssi", get(ix.rssi))?,
        pl: parse_opt("pl", get(ix.pl))?,
        snr: match ix.snr {
            Some(i) => parse_opt("snr", get(i))?,
            None => None,
        },
    })
}

/// Reads a UTF-8 CSV with a header row.
///
/// Rows that cannot be turned into a sample are listed in the report; empty
/// KPI cells become `None` and are left for [`super::clean`].
pub fn load_csv(path: &Path, map: &ColumnMap) -> Result<(Dataset, LoadReport), DatasetError> {
    let display = path.display().to_string();
    let file = fs::File::open(path).map_err(|source| DatasetError::Io {
        path: display.clone(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(file);
    let header = match reader.headers() {
        Ok(h) => h.clone(),
        Err(e) if matches!(e.kind(), csv::ErrorKind::Io(_)) => return Err(e.into()),
        Err(_) => return Err(DatasetError::NoRows(display)),
    };
    if header.is_empty() {
        return Err(DatasetError::NoRows(display));
    }
    let find = |field: &str| -> Result<usize, DatasetError> {
        let name = map.column(field).unwrap_or(field);
        header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| DatasetError::MissingColumn(name.to_string()))
    };
    let ix = Indices {
        timestamp: find("timestamp")?,
        latitude: find("latitude")?,
        longitude: find("longitude")?,
        altitude: find("altitude")?,
        cell_id: find("cell_id")?,
        rsrp: find("rsrp")?,
        rsrq: find("rsrq")?,
        rssi: find("rssi")?,
        pl: find("pl")?,
        snr: match map.column("snr") {
            Some(_) => Some(find("snr")?),
            None => None,
        },
    };

    let mut samples = Vec::new();
    let mut report = LoadReport::default();
    for (i, rec) in reader.records().enumerate() {
        report.rows_read += 1;
        let line = i + 2;
        match rec {
            Ok(rec) => match row_to_sample(&rec, &ix) {
                Ok(s) => samples.push(s),
                Err(reason) => report.rejected.push(RowRejection { line, reason }),
            },
            Err(e) => report.rejected.push(RowRejection {
                line,
                reason: e.to_string(),
            }),
        }
    }
    if samples.is_empty() {
        return Err(DatasetError::NoRows(display));
    }
    let mut ds = Dataset::new(samples, display);
    ds.provenance.entries.push(format!(
        "load_csv: {} rows read, {} parsed, {} rejected",
        report.rows_read,
        ds.len(),
        report.rejected.len()
    ));
    Ok((ds, report))
}

pub fn read_canonical_csv(path: &Path) -> Result<Dataset, DatasetError> {
    load_csv(path, &ColumnMap::canonical()).map(|(ds, _)| ds)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Serializes samples under [`CANONICAL_HEADER`]; floats use shortest
/// round-trip formatting so re-reading is lossless.
pub fn write_canonical_csv<W: Write>(ds: &Dataset, out: W) -> Result<(), DatasetError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CANONICAL_HEADER)?;
    for s in &ds.samples {
        w.write_record([
            s.timestamp.to_rfc3339_opts(SecondsFormat::AutoSi, true),
            s.position.latitude.to_string(),
            s.position.longitude.to_string(),
            s.position.altitude_asl.to_string(),
            s.cell_id.clone(),
            fmt_opt(s.rsrp),
            fmt_opt(s.rsrq),
            fmt_opt(s.rssi),
            fmt_opt(s.pl),
            fmt_opt(s.snr),
        ])?;
    }
    w.flush().map_err(|source| DatasetError::Io {
        path: "<writer>".into(),
        source,
    })?;
    Ok(())
}
