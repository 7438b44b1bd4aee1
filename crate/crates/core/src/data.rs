//! Session records, datasets, CSV ingestion/emission and the synthetic
//! base-dataset generator.
//!
//! The CSV header is a public contract:
//!
//! ```text
//! session_id,content_type,device,encoding_profile,duration_s,bitrate_mean_kbps,
//! bitrate_std_kbps,vmaf_mean,vmaf_std,ssim_mean,qp_mean,stall_duration_s,stall_count,mos
//! ```
//!
//! Augmented files append `demographic,base_session_id`. Ingested files may
//! also carry non-predictive columns (`log_path`, or any name starting with
//! `meta_`); those are kept verbatim and flagged [`ColumnKind::Meta`].

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Exp, Normal, Poisson};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::demographics::compute_impact_factors;
use crate::error::{Error, Result};
use crate::seed;

pub const BASE_COLUMNS: [&str; 14] = [
    "session_id",
    "content_type",
    "device",
    "encoding_profile",
    "duration_s",
    "bitrate_mean_kbps",
    "bitrate_std_kbps",
    "vmaf_mean",
    "vmaf_std",
    "ssim_mean",
    "qp_mean",
    "stall_duration_s",
    "stall_count",
    "mos",
];

pub const DEMOGRAPHIC_COLUMN: &str = "demographic";
pub const GROUP_COLUMN: &str = "base_session_id";
pub const TARGET_COLUMN: &str = "mos";

pub const CONTENT_TYPES: [&str; 4] = ["sports", "movie", "news", "animation"];
pub const DEVICES: [&str; 4] = ["phone", "tablet", "tv", "desktop"];
pub const ENCODING_PROFILES: [&str; 4] = ["h264_main", "h264_high", "hevc_main", "av1_main"];

/// Lower clip bound for generated VMAF. Keeps the coefficient of variation
/// in the impact factors defined.
const GENERATED_VMAF_FLOOR: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    Categorical,
    Target,
    Group,
    Meta,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
}

impl Column {
    fn new(name: &str, kind: ColumnKind) -> Self {
        Column {
            name: name.to_string(),
            kind,
        }
    }
}

/// Kind of a known column, or `None` for names outside the contract.
pub fn column_kind(name: &str) -> Option<ColumnKind> {
    Some(match name {
        "session_id" => ColumnKind::Meta,
        "content_type" | "device" | "encoding_profile" | DEMOGRAPHIC_COLUMN => {
            ColumnKind::Categorical
        }
        "duration_s" | "bitrate_mean_kbps" | "bitrate_std_kbps" | "vmaf_mean" | "vmaf_std"
        | "ssim_mean" | "qp_mean" | "stall_duration_s" | "stall_count" => ColumnKind::Numeric,
        TARGET_COLUMN => ColumnKind::Target,
        GROUP_COLUMN => ColumnKind::Group,
        "log_path" => ColumnKind::Meta,
        n if n.starts_with("meta_") => ColumnKind::Meta,
        _ => return None,
    })
}

fn is_extra_meta(name: &str) -> bool {
    name == "log_path" || name.starts_with("meta_")
}

/// One HTTP adaptive streaming session with precomputed objective metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamingSession {
    pub session_id: u64,
    pub content_type: String,
    pub device: String,
    pub encoding_profile: String,
    pub duration_s: f64,
    pub bitrate_mean_kbps: f64,
    pub bitrate_std_kbps: f64,
    pub vmaf_mean: f64,
    pub vmaf_std: f64,
    pub ssim_mean: f64,
    pub qp_mean: f64,
    pub stall_duration_s: f64,
    pub stall_count: u32,
    pub mos: f64,
}

impl StreamingSession {
    /// Returns every violated invariant, empty when the session is valid.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let mut check = |ok: bool, msg: &str| {
            if !ok {
                v.push(msg.to_string());
            }
        };
        check(
            self.duration_s > 0.0 && self.duration_s.is_finite(),
            "duration_s must be > 0",
        );
        check(
            self.bitrate_mean_kbps > 0.0 && self.bitrate_mean_kbps.is_finite(),
            "bitrate_mean_kbps must be > 0",
        );
        check(
            self.bitrate_std_kbps >= 0.0 && self.bitrate_std_kbps.is_finite(),
            "bitrate_std_kbps must be >= 0",
        );
        check(
            (0.0..=100.0).contains(&self.vmaf_mean),
            "vmaf_mean must be in [0,100]",
        );
        check(
            self.vmaf_std >= 0.0 && self.vmaf_std.is_finite(),
            "vmaf_std must be >= 0",
        );
        check(
            (0.0..=1.0).contains(&self.ssim_mean),
            "ssim_mean must be in [0,1]",
        );
        check((0.0..=51.0).contains(&self.qp_mean), "qp_mean must be in [0,51]");
        check(
            self.stall_duration_s >= 0.0 && self.stall_duration_s.is_finite(),
            "stall_duration_s must be >= 0",
        );
        check(
            self.stall_count != 0 || self.stall_duration_s == 0.0,
            "stall_count = 0 requires stall_duration_s = 0",
        );
        check((0.0..=100.0).contains(&self.mos), "mos must be in [0,100]");
        v
    }

    pub fn numeric(&self, name: &str) -> Option<f64> {
        Some(match name {
            "duration_s" => self.duration_s,
            "bitrate_mean_kbps" => self.bitrate_mean_kbps,
            "bitrate_std_kbps" => self.bitrate_std_kbps,
            "vmaf_mean" => self.vmaf_mean,
            "vmaf_std" => self.vmaf_std,
            "ssim_mean" => self.ssim_mean,
            "qp_mean" => self.qp_mean,
            "stall_duration_s" => self.stall_duration_s,
            "stall_count" => self.stall_count as f64,
            "mos" => self.mos,
            _ => return None,
        })
    }
}

/// A session plus the columns added by augmentation and any meta columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub session: StreamingSession,
    pub demographic: Option<String>,
    pub base_session_id: Option<u64>,
    /// Values of the schema's extra meta columns, in schema order.
    pub meta: Vec<String>,
}

impl Record {
    pub fn plain(session: StreamingSession) -> Self {
        Record {
            session,
            demographic: None,
            base_session_id: None,
            meta: Vec::new(),
        }
    }

    /// Group id used for leakage-safe splitting.
    pub fn group_id(&self) -> u64 {
        self.base_session_id.unwrap_or(self.session.session_id)
    }

    pub fn categorical(&self, name: &str) -> Option<&str> {
        match name {
            "content_type" => Some(&self.session.content_type),
            "device" => Some(&self.session.device),
            "encoding_profile" => Some(&self.session.encoding_profile),
            DEMOGRAPHIC_COLUMN => self.demographic.as_deref(),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Synthetic,
    Ingested,
    Augmented,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: Source,
    pub seed: Option<u64>,
    pub parent_hash: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    schema: Vec<Column>,
    rows: Vec<Record>,
    provenance: Provenance,
}

impl Dataset {
    /// Assembles a dataset, checking row/schema conformance.
    pub fn new(schema: Vec<Column>, rows: Vec<Record>, provenance: Provenance) -> Result<Self> {
        let names: Vec<&str> = schema.iter().map(|c| c.name.as_str()).collect();
        for required in BASE_COLUMNS {
            if !names.contains(&required) {
                return Err(Error::SchemaMismatch(format!(
                    "missing required column `{required}`"
                )));
            }
        }
        let targets = schema.iter().filter(|c| c.kind == ColumnKind::Target).count();
        if targets != 1 {
            return Err(Error::SchemaMismatch(format!(
                "expected exactly one target column, found {targets}"
            )));
        }
        let has_demo = names.contains(&DEMOGRAPHIC_COLUMN);
        let has_group = names.contains(&GROUP_COLUMN);
        let n_meta = names.iter().filter(|n| is_extra_meta(n)).count();
        for (i, r) in rows.iter().enumerate() {
            if r.demographic.is_some() != has_demo
                || r.base_session_id.is_some() != has_group
                || r.meta.len() != n_meta
            {
                return Err(Error::SchemaMismatch(format!(
                    "row {} does not match the schema columns",
                    i + 1
                )));
            }
        }
        if provenance.source == Source::Augmented {
            let groups: HashSet<u64> = rows.iter().map(Record::group_id).collect();
            if rows.len() != 6 * groups.len() {
                return Err(Error::invalid(format!(
                    "augmented dataset has {} rows for {} base sessions",
                    rows.len(),
                    groups.len()
                )));
            }
        }
        Ok(Dataset {
            schema,
            rows,
            provenance,
        })
    }

    pub fn base_schema() -> Vec<Column> {
        BASE_COLUMNS
            .iter()
            .map(|n| Column::new(n, column_kind(n).expect("known column")))
            .collect()
    }

    pub fn augmented_schema() -> Vec<Column> {
        let mut s = Self::base_schema();
        s.push(Column::new(DEMOGRAPHIC_COLUMN, ColumnKind::Categorical));
        s.push(Column::new(GROUP_COLUMN, ColumnKind::Group));
        s
    }

    pub fn schema(&self) -> &[Column] {
        &self.schema
    }

    pub fn rows(&self) -> &[Record] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.schema.iter().any(|c| c.name == name)
    }

    pub fn column_kind(&self, name: &str) -> Option<ColumnKind> {
        self.schema.iter().find(|c| c.name == name).map(|c| c.kind)
    }

    pub fn targets(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.session.mos).collect()
    }

    /// Same schema and provenance, restricted to the given rows (in order).
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            provenance: self.provenance.clone(),
        }
    }

    /// Values of a numeric column by name.
    pub fn numeric_column(&self, name: &str) -> Result<Vec<f64>> {
        match self.column_kind(name) {
            Some(ColumnKind::Numeric) | Some(ColumnKind::Target) => Ok(self
                .rows
                .iter()
                .map(|r| r.session.numeric(name).expect("numeric column"))
                .collect()),
            Some(_) => Err(Error::invalid(format!("column `{name}` is not numeric"))),
            None => Err(Error::SchemaMismatch(format!("no column named `{name}`"))),
        }
    }

    fn cell(&self, row: &Record, col: usize) -> String {
        let name = self.schema[col].name.as_str();
        let s = &row.session;
        match name {
            "session_id" => s.session_id.to_string(),
            "content_type" => s.content_type.clone(),
            "device" => s.device.clone(),
            "encoding_profile" => s.encoding_profile.clone(),
            "stall_count" => s.stall_count.to_string(),
            DEMOGRAPHIC_COLUMN => row.demographic.clone().unwrap_or_default(),
            GROUP_COLUMN => row.base_session_id.map(|v| v.to_string()).unwrap_or_default(),
            _ => match s.numeric(name) {
                // `Display` for f64 is the shortest string that parses back
                // to the identical value.
                Some(v) => format!("{v}"),
                None => {
                    let meta_pos = self.schema[..col]
                        .iter()
                        .filter(|c| is_extra_meta(&c.name))
                        .count();
                    row.meta[meta_pos].clone()
                }
            },
        }
    }

    /// CSV emission in schema column order.
    pub fn to_csv_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)
            .map_err(|e| Error::invalid(format!("csv encoding failed: {e}")))?;
        Ok(buf)
    }

    fn write_to<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.schema.iter().map(|c| c.name.as_str()))?;
        for row in &self.rows {
            w.write_record((0..self.schema.len()).map(|c| self.cell(row, c)))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Hex SHA-256 of the CSV emission.
    pub fn content_hash(&self) -> String {
        let bytes = self.to_csv_bytes().unwrap_or_default();
        hex::encode(Sha256::digest(&bytes))
    }
}

pub fn write_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    if dataset.is_empty() {
        return Err(Error::invalid("refusing to write an empty dataset"));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    dataset.write_to(&mut out).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::invalid(format!("csv encoding failed: {other:?}")),
    })?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_csv(path: &Path) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv_from(file)
}

fn parse_cell<T: std::str::FromStr>(raw: &str, row: usize, column: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    raw.trim().parse::<T>().map_err(|e| Error::Parse {
        row,
        column: column.to_string(),
        message: format!("`{raw}`: {e}"),
    })
}

/// Parses a dataset from any CSV reader. Rows in errors are 1-based data rows.
pub fn read_csv_from<R: std::io::Read>(input: R) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let headers = reader
        .headers()
        .map_err(|e| Error::SchemaMismatch(format!("unreadable header: {e}")))?
        .clone();

    let mut schema = Vec::with_capacity(headers.len());
    let mut seen = HashSet::new();
    for name in headers.iter() {
        if !seen.insert(name.to_string()) {
            return Err(Error::SchemaMismatch(format!("duplicate column `{name}`")));
        }
        let kind = column_kind(name)
            .ok_or_else(|| Error::SchemaMismatch(format!("unexpected column `{name}`")))?;
        schema.push(Column::new(name, kind));
    }
    let missing: Vec<&str> = BASE_COLUMNS
        .iter()
        .copied()
        .filter(|c| !seen.contains(*c))
        .collect();
    if !missing.is_empty() {
        return Err(Error::SchemaMismatch(format!(
            "missing required columns: {}",
            missing.join(", ")
        )));
    }
    if seen.contains(DEMOGRAPHIC_COLUMN) != seen.contains(GROUP_COLUMN) {
        return Err(Error::SchemaMismatch(format!(
            "`{DEMOGRAPHIC_COLUMN}` and `{GROUP_COLUMN}` must appear together"
        )));
    }
    let pos = |name: &str| headers.iter().position(|h| h == name);
    let meta_positions: Vec<usize> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| is_extra_meta(h))
        .map(|(i, _)| i)
        .collect();
    let demo_pos = pos(DEMOGRAPHIC_COLUMN);
    let group_pos = pos(GROUP_COLUMN);

    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let row_no = i + 1;
        let rec = rec.map_err(|e| Error::Parse {
            row: row_no,
            column: String::new(),
            message: e.to_string(),
        })?;
        let get = |name: &str| rec.get(pos(name).expect("checked above")).unwrap_or("");
        let num = |name: &str| parse_cell::<f64>(get(name), row_no, name);
        let session = StreamingSession {
            session_id: parse_cell(get("session_id"), row_no, "session_id")?,
            content_type: get("content_type").to_string(),
            device: get("device").to_string(),
            encoding_profile: get("encoding_profile").to_string(),
            duration_s: num("duration_s")?,
            bitrate_mean_kbps: num("bitrate_mean_kbps")?,
            bitrate_std_kbps: num("bitrate_std_kbps")?,
            vmaf_mean: num("vmaf_mean")?,
            vmaf_std: num("vmaf_std")?,
            ssim_mean: num("ssim_mean")?,
            qp_mean: num("qp_mean")?,
            stall_duration_s: num("stall_duration_s")?,
            stall_count: parse_cell(get("stall_count"), row_no, "stall_count")?,
            mos: num(TARGET_COLUMN)?,
        };
        let demographic = demo_pos.map(|p| rec.get(p).unwrap_or("").to_string());
        let base_session_id = match group_pos {
            Some(p) => Some(parse_cell(rec.get(p).unwrap_or(""), row_no, GROUP_COLUMN)?),
            None => None,
        };
        let meta = meta_positions
            .iter()
            .map(|&p| rec.get(p).unwrap_or("").to_string())
            .collect();
        rows.push(Record {
            session,
            demographic,
            base_session_id,
            meta,
        });
    }
    validate_rows(&rows)?;
    Dataset::new(
        schema,
        rows,
        Provenance {
            source: Source::Ingested,
            seed: None,
            parent_hash: None,
        },
    )
}

fn validate_rows(rows: &[Record]) -> Result<()> {
    let mut offending = Vec::new();
    let mut messages = Vec::new();
    let mut ids = HashSet::new();
    for (i, r) in rows.iter().enumerate() {
        let mut v = r.session.violations();
        if !ids.insert(r.session.session_id) {
            v.push(format!("duplicate session_id {}", r.session.session_id));
        }
        if r.demographic.as_deref() == Some("") {
            v.push("empty demographic label".into());
        }
        if !v.is_empty() {
            offending.push(i + 1);
            messages.push(format!("row {}: {}", i + 1, v.join("; ")));
        }
    }
    if offending.is_empty() {
        Ok(())
    } else {
        Err(Error::Validation {
            rows: offending,
            message: messages.join(" | "),
        })
    }
}

/// Seeded synthetic stand-in for the unpublished base dataset.
///
/// MOS is planted as `100·quality_boost − 40·rebuff_impact − 15·quality_variance`
/// plus N(0, 2²) noise, clipped to [0, 100].
pub fn generate_base_dataset(n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    let mut rng = seed::rng(seed);
    let (lo, hi) = (300f64.ln(), 20000f64.ln());
    let bitrates: Vec<f64> = (0..n).map(|_| rng.random_range(lo..hi).exp()).collect();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| bitrates[a].total_cmp(&bitrates[b]).then(a.cmp(&b)));
    let mut rank = vec![0.5; n];
    if n > 1 {
        for (pos, &i) in order.iter().enumerate() {
            rank[i] = pos as f64 / (n - 1) as f64;
        }
    }

    let unit = Normal::new(0.0, 1.0).expect("valid normal");
    let stalls = Poisson::new(0.6).expect("valid poisson");
    let stall_len = Exp::new(1.0 / 1.5).expect("valid exp");

    let mut rows = Vec::with_capacity(n);
    for (i, &bitrate) in bitrates.iter().enumerate() {
        let content_type = CONTENT_TYPES.choose(&mut rng).expect("nonempty");
        let device = DEVICES.choose(&mut rng).expect("nonempty");
        let encoding_profile = ENCODING_PROFILES.choose(&mut rng).expect("nonempty");
        let duration_s = rng.random_range(30.0..600.0);
        let vmaf_mean = (100.0 * (1.0 - (-bitrate / 4000.0).exp()) + 3.0 * unit.sample(&mut rng))
            .clamp(GENERATED_VMAF_FLOOR, 100.0);
        let ssim_mean = (0.5 + 0.005 * vmaf_mean + 0.02 * unit.sample(&mut rng)).clamp(0.0, 1.0);
        let stall_count = stalls.sample(&mut rng) as u32;
        let stall_duration_s = if stall_count == 0 {
            0.0
        } else {
            stall_count as f64 * stall_len.sample(&mut rng)
        };
        let bitrate_std_kbps = bitrate * rng.random_range(0.02..0.25);
        let vmaf_std = vmaf_mean * rng.random_range(0.02..0.25);
        let qp_mean = (51.0 - 40.0 * rank[i] + 2.0 * unit.sample(&mut rng)).clamp(0.0, 51.0);

        let mut session = StreamingSession {
            session_id: i as u64,
            content_type: content_type.to_string(),
            device: device.to_string(),
            encoding_profile: encoding_profile.to_string(),
            duration_s,
            bitrate_mean_kbps: bitrate,
            bitrate_std_kbps,
            vmaf_mean,
            vmaf_std,
            ssim_mean,
            qp_mean,
            stall_duration_s,
            stall_count,
            mos: 0.0,
        };
        let f = compute_impact_factors(&session)?;
        session.mos = (100.0 * f.quality_boost - 40.0 * f.rebuff_impact
            - 15.0 * f.quality_variance
            + 2.0 * unit.sample(&mut rng))
        .clamp(0.0, 100.0);
        rows.push(Record::plain(session));
    }

    Dataset::new(
        Dataset::base_schema(),
        rows,
        Provenance {
            source: Source::Synthetic,
            seed: Some(seed),
            parent_hash: None,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "session_id,content_type,device,encoding_profile,duration_s,bitrate_mean_kbps,bitrate_std_kbps,vmaf_mean,vmaf_std,ssim_mean,qp_mean,stall_duration_s,stall_count,mos";

    fn csv_with(rows: &[&str]) -> String {
        let mut s = HEADER.to_string();
        for r in rows {
            s.push('\n');
            s.push_str(r);
        }
        s.push('\n');
        s
    }

    const ROW_A: &str = "0,sports,tv,h264_main,120,3000,300,80,5,0.9,30,0,0,75";
    const ROW_B: &str = "1,news,phone,hevc_main,60,800,100,50,4,0.75,40,1.5,1,48.5";
    const ROW_C: &str = "2,movie,desktop,av1_main,300,12000,900,95,2,0.97,20,0,0,90";

    #[test]
    fn reads_valid_three_row_file() {
        let ds = read_csv_from(csv_with(&[ROW_A, ROW_B, ROW_C]).as_bytes()).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.provenance().source, Source::Ingested);
        let names: Vec<_> = ds.schema().iter().map(|c| c.name.as_str()).collect();
        assert_eq!(names, BASE_COLUMNS);
        assert_eq!(ds.rows()[1].session.stall_count, 1);
        assert_eq!(ds.rows()[1].session.mos, 48.5);
    }

    #[test]
    fn out_of_range_mos_names_the_row() {
        let bad = "1,news,phone,hevc_main,60,800,100,50,4,0.75,40,1.5,1,120";
        let err = read_csv_from(csv_with(&[ROW_A, bad]).as_bytes()).unwrap_err();
        match err {
            Error::Validation { rows, message } => {
                assert_eq!(rows, vec![2]);
                assert!(message.contains("mos"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unparseable_cell_reports_coordinates() {
        let bad = "1,news,phone,hevc_main,60,fast,100,50,4,0.75,40,1.5,1,50";
        let err = read_csv_from(csv_with(&[ROW_A, bad]).as_bytes()).unwrap_err();
        match err {
            Error::Parse { row, column, .. } => {
                assert_eq!(row, 2);
                assert_eq!(column, "bitrate_mean_kbps");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_and_extra_columns_are_schema_errors() {
        let missing = HEADER.replace(",qp_mean", "");
        let err = read_csv_from(format!("{missing}\n").as_bytes()).unwrap_err();
        assert!(matches!(err, Error::SchemaMismatch(ref m) if m.contains("qp_mean")), "{err}");

        let extra = format!("{HEADER},bogus\n");
        let err = read_csv_from(extra.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::SchemaMismatch(ref m) if m.contains("bogus")), "{err}");

        let half = format!("{HEADER},demographic\n");
        assert!(matches!(
            read_csv_from(half.as_bytes()),
            Err(Error::SchemaMismatch(_))
        ));
    }

    #[test]
    fn meta_columns_are_retained_and_flagged() {
        let text = format!(
            "log_path,{HEADER}\nlogs/a.txt,{ROW_A}\nlogs/b.txt,{ROW_B}\n"
        );
        let ds = read_csv_from(text.as_bytes()).unwrap();
        assert_eq!(ds.column_kind("log_path"), Some(ColumnKind::Meta));
        assert_eq!(ds.rows()[1].meta, vec!["logs/b.txt".to_string()]);
        let back = String::from_utf8(ds.to_csv_bytes().unwrap()).unwrap();
        assert_eq!(back, text);
    }

    #[test]
    fn stall_count_zero_with_duration_is_rejected() {
        let bad = "1,news,phone,hevc_main,60,800,100,50,4,0.75,40,1.5,0,50";
        let err = read_csv_from(csv_with(&[bad]).as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Validation { ref rows, .. } if rows == &[1]));
    }

    #[test]
    fn duplicate_session_ids_are_rejected() {
        let err = read_csv_from(csv_with(&[ROW_A, ROW_A]).as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Validation { ref rows, .. } if rows == &[2]));
    }

    #[test]
    fn generate_rejects_zero_rows() {
        assert!(matches!(
            generate_base_dataset(0, 1),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn generate_single_row_is_deterministic() {
        let a = generate_base_dataset(1, 0).unwrap();
        let b = generate_base_dataset(1, 0).unwrap();
        assert_eq!(a.len(), 1);
        assert_eq!(a.to_csv_bytes().unwrap(), b.to_csv_bytes().unwrap());
        assert!(a.rows()[0].session.violations().is_empty());
    }

    #[test]
    fn generated_rows_satisfy_invariants() {
        let ds = generate_base_dataset(450, 42).unwrap();
        assert_eq!(ds.len(), 450);
        for r in ds.rows() {
            assert!(r.session.violations().is_empty(), "{:?}", r.session);
        }
        assert_ne!(
            ds.to_csv_bytes().unwrap(),
            generate_base_dataset(450, 43).unwrap().to_csv_bytes().unwrap()
        );
    }

    #[test]
    fn write_rejects_empty_and_reports_io() {
        let empty = generate_base_dataset(3, 1).unwrap().subset(&[]);
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            write_csv(&empty, &dir.path().join("x.csv")),
            Err(Error::InvalidArgument(_))
        ));
        let ds = generate_base_dataset(3, 1).unwrap();
        let err = write_csv(&ds, &dir.path().join("no/such/dir/x.csv")).unwrap_err();
        assert!(err.is_io());
    }
}
