use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::Write;
use std::path::Path;

use super::{DoctorProfile, EpisodeKind, EpisodeRecord, PatientProfile, Specialty, Year};
use crate::config::KeyValues;
use crate::error::{Error, Result};

/// Column names and validation window for episode files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    pub delimiter: u8,
    pub patient_id: String,
    pub doctor_id: String,
    pub year: String,
    pub hospital_id: String,
    pub episode_kind: String,
    pub specialty: String,
    pub mdc_code: String,
    pub first_year: Year,
    pub last_year: Year,
}

impl Default for Schema {
    fn default() -> Self {
        Schema {
            delimiter: b',',
            patient_id: "patient_id".into(),
            doctor_id: "doctor_id".into(),
            year: "year".into(),
            hospital_id: "hospital_id".into(),
            episode_kind: "episode_kind".into(),
            specialty: "specialty".into(),
            mdc_code: "mdc_code".into(),
            first_year: 2012,
            last_year: 2017,
        }
    }
}

impl Schema {
    pub const KEYS: [&'static str; 10] = [
        "delimiter",
        "patient_id",
        "doctor_id",
        "year",
        "hospital_id",
        "episode_kind",
        "specialty",
        "mdc_code",
        "first_year",
        "last_year",
    ];

    /// Reads overrides from `schema.*`-style keys (prefix already stripped).
    pub fn from_config(kv: &KeyValues) -> Result<Self> {
        kv.reject_unknown(|k| Self::KEYS.contains(&k))?;
        let mut schema = Schema::default();
        if let Some(d) = kv.get("delimiter") {
            schema.delimiter = match d {
                "tab" | "\\t" => b'\t',
                s if s.len() == 1 => s.as_bytes()[0],
                s => return Err(Error::Config(format!("delimiter must be one byte, got `{s}`"))),
            };
        }
        for (key, slot) in [
            ("patient_id", &mut schema.patient_id),
            ("doctor_id", &mut schema.doctor_id),
            ("year", &mut schema.year),
            ("hospital_id", &mut schema.hospital_id),
            ("episode_kind", &mut schema.episode_kind),
            ("specialty", &mut schema.specialty),
            ("mdc_code", &mut schema.mdc_code),
        ] {
            if let Some(v) = kv.get(key) {
                *slot = v.to_string();
            }
        }
        schema.first_year = kv.get_or("first_year", schema.first_year)?;
        schema.last_year = kv.get_or("last_year", schema.last_year)?;
        if schema.first_year > schema.last_year {
            return Err(Error::Config("first_year after last_year".into()));
        }
        Ok(schema)
    }
}

struct Table {
    reader: csv::Reader<File>,
    columns: HashMap<String, usize>,
}

impl Table {
    fn open(path: &Path, delimiter: u8) -> Result<Table> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new()
            .delimiter(delimiter)
            .has_headers(true)
            .from_reader(file);
        let headers = reader
            .headers()
            .map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?
            .clone();
        if headers.is_empty() || (headers.len() == 1 && headers[0].trim().is_empty()) {
            return Err(Error::Schema(format!("{}: empty file", path.display())));
        }
        let mut columns = HashMap::new();
        for (i, name) in headers.iter().enumerate() {
            let name = name.trim().to_string();
            if columns.insert(name.clone(), i).is_some() {
                return Err(Error::Schema(format!(
                    "{}: duplicated header column `{name}`",
                    path.display()
                )));
            }
        }
        Ok(Table { reader, columns })
    }

    fn require(&self, name: &str) -> Result<usize> {
        self.columns
            .get(name)
            .copied()
            .ok_or_else(|| Error::Schema(format!("missing column `{name}`")))
    }

    /// Iterates rows as (line number, record).
    fn rows(&mut self) -> impl Iterator<Item = Result<(usize, csv::StringRecord)>> + '_ {
        self.reader.records().map(|r| match r {
            Ok(rec) => {
                let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
                Ok((line, rec))
            }
            Err(e) => {
                let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
                Err(Error::Row {
                    row: line,
                    field: "*".into(),
                    message: e.to_string(),
                })
            }
        })
    }
}

fn field(rec: &csv::StringRecord, col: usize) -> &str {
    rec.get(col).unwrap_or("").trim()
}

fn row_error(row: usize, field: &str, message: impl Into<String>) -> Error {
    Error::Row {
        row,
        field: field.to_string(),
        message: message.into(),
    }
}

fn nonempty(row: usize, name: &str, value: &str) -> Result<String> {
    if value.is_empty() {
        Err(row_error(row, name, "empty value"))
    } else {
        Ok(value.to_string())
    }
}

/// Parses a calendar year, truncating finer timestamps such as `2014-05-03`.
fn parse_year(raw: &str) -> Option<Year> {
    let digits: String = raw.chars().take_while(|c| c.is_ascii_digit()).collect();
    if digits.len() < 4 {
        return None;
    }
    digits[..4].parse().ok()
}

/// Loads and validates episode rows.
pub fn load_episodes(path: &Path, schema: &Schema) -> Result<Vec<EpisodeRecord>> {
    let mut table = Table::open(path, schema.delimiter)?;
    let c_patient = table.require(&schema.patient_id)?;
    let c_doctor = table.require(&schema.doctor_id)?;
    let c_year = table.require(&schema.year)?;
    let c_hospital = table.require(&schema.hospital_id)?;
    let c_kind = table.require(&schema.episode_kind)?;
    let c_specialty = table.require(&schema.specialty)?;
    let c_mdc = table.columns.get(&schema.mdc_code).copied();

    let mut records = Vec::new();
    for row in table.rows() {
        let (line, rec) = row?;
        let year_raw = field(&rec, c_year);
        let year =
            parse_year(year_raw).ok_or_else(|| row_error(line, &schema.year, format!("not a year: `{year_raw}`")))?;
        if year < schema.first_year || year > schema.last_year {
            return Err(row_error(
                line,
                &schema.year,
                format!(
                    "year {year} outside window {}..={}",
                    schema.first_year, schema.last_year
                ),
            ));
        }
        let kind: EpisodeKind = field(&rec, c_kind)
            .parse()
            .map_err(|e: Error| row_error(line, &schema.episode_kind, e.to_string()))?;
        let specialty: Specialty = field(&rec, c_specialty)
            .parse()
            .map_err(|e: Error| row_error(line, &schema.specialty, e.to_string()))?;
        let mdc = match c_mdc.map(|c| field(&rec, c)).filter(|s| !s.is_empty()) {
            None => None,
            Some(raw) => {
                let code: u8 = raw
                    .parse()
                    .map_err(|_| row_error(line, &schema.mdc_code, format!("not a code: `{raw}`")))?;
                if !(1..=24).contains(&code) {
                    return Err(row_error(line, &schema.mdc_code, format!("code {code} outside 1..=24")));
                }
                if kind != EpisodeKind::Inpatient {
                    return Err(row_error(
                        line,
                        &schema.mdc_code,
                        "diagnostic category on a non-inpatient episode",
                    ));
                }
                Some(code)
            }
        };
        records.push(EpisodeRecord {
            patient_id: nonempty(line, &schema.patient_id, field(&rec, c_patient))?,
            doctor_id: nonempty(line, &schema.doctor_id, field(&rec, c_doctor))?,
            year,
            hospital_id: nonempty(line, &schema.hospital_id, field(&rec, c_hospital))?,
            kind,
            specialty,
            mdc,
            source_line: Some(line),
        });
    }
    if records.is_empty() {
        return Err(Error::Schema(format!("{}: no records", path.display())));
    }
    Ok(records)
}

fn optional<T: std::str::FromStr>(
    rec: &csv::StringRecord,
    col: Option<usize>,
    line: usize,
    name: &str,
) -> Result<Option<T>> {
    match col.map(|c| field(rec, c)).filter(|s| !s.is_empty()) {
        None => Ok(None),
        Some(raw) => raw
            .parse()
            .map(Some)
            .map_err(|_| row_error(line, name, format!("cannot parse `{raw}`"))),
    }
}

/// Loads patient metadata: `patient_id` plus optional `gender`, `age`, `region`.
pub fn load_patients(path: &Path, delimiter: u8) -> Result<Vec<PatientProfile>> {
    let mut table = Table::open(path, delimiter)?;
    let c_id = table.require("patient_id")?;
    let c_gender = table.columns.get("gender").copied();
    let c_age = table.columns.get("age").copied();
    let c_region = table.columns.get("region").copied();
    let mut out = Vec::new();
    for row in table.rows() {
        let (line, rec) = row?;
        out.push(PatientProfile {
            patient_id: nonempty(line, "patient_id", field(&rec, c_id))?,
            gender: optional(&rec, c_gender, line, "gender")?,
            age: optional(&rec, c_age, line, "age")?,
            region: optional(&rec, c_region, line, "region")?,
        });
    }
    Ok(out)
}

/// Loads doctor metadata: `doctor_id` plus optional `gender`, `age`,
/// `seniority`, `start_year`, `hospital_id`.
pub fn load_doctors(path: &Path, delimiter: u8) -> Result<Vec<DoctorProfile>> {
    let mut table = Table::open(path, delimiter)?;
    let c_id = table.require("doctor_id")?;
    let col = |name: &str| table.columns.get(name).copied();
    let (c_gender, c_age, c_seniority, c_start, c_hospital) = (
        col("gender"),
        col("age"),
        col("seniority"),
        col("start_year"),
        col("hospital_id"),
    );
    let mut out = Vec::new();
    for row in table.rows() {
        let (line, rec) = row?;
        out.push(DoctorProfile {
            doctor_id: nonempty(line, "doctor_id", field(&rec, c_id))?,
            gender: optional(&rec, c_gender, line, "gender")?,
            age: optional(&rec, c_age, line, "age")?,
            seniority: optional(&rec, c_seniority, line, "seniority")?,
            start_year: optional(&rec, c_start, line, "start_year")?,
            hospital_id: optional(&rec, c_hospital, line, "hospital_id")?,
        });
    }
    Ok(out)
}

fn write_rows(path: &Path, delimiter: u8, header: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new().delimiter(delimiter).from_writer(file);
    let io_err = |e: csv::Error| Error::io(path, std::io::Error::other(e.to_string()));
    w.write_record(header).map_err(io_err)?;
    for row in rows {
        w.write_record(&row).map_err(io_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes episodes with the column names of `schema`.
pub fn write_episodes(path: &Path, schema: &Schema, records: &[EpisodeRecord]) -> Result<()> {
    let header = [
        schema.patient_id.as_str(),
        &schema.doctor_id,
        &schema.year,
        &schema.hospital_id,
        &schema.episode_kind,
        &schema.specialty,
        &schema.mdc_code,
    ];
    let rows = records
        .iter()
        .map(|r| {
            vec![
                r.patient_id.clone(),
                r.doctor_id.clone(),
                r.year.to_string(),
                r.hospital_id.clone(),
                r.kind.to_string(),
                r.specialty.to_string(),
                r.mdc.map(|m| m.to_string()).unwrap_or_default(),
            ]
        })
        .collect();
    write_rows(path, schema.delimiter, &header, rows)
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_patients(path: &Path, delimiter: u8, patients: &[PatientProfile]) -> Result<()> {
    let rows = patients
        .iter()
        .map(|p| vec![p.patient_id.clone(), opt(&p.gender), opt(&p.age), opt(&p.region)])
        .collect();
    write_rows(path, delimiter, &["patient_id", "gender", "age", "region"], rows)
}

pub fn write_doctors(path: &Path, delimiter: u8, doctors: &[DoctorProfile]) -> Result<()> {
    let rows = doctors
        .iter()
        .map(|d| {
            vec![
                d.doctor_id.clone(),
                opt(&d.gender),
                opt(&d.age),
                opt(&d.seniority),
                opt(&d.start_year),
                opt(&d.hospital_id),
            ]
        })
        .collect();
    write_rows(
        path,
        delimiter,
        &["doctor_id", "gender", "age", "seniority", "start_year", "hospital_id"],
        rows,
    )
}

/// Pre-reconciled identifier aliases (`alias,canonical` rows).
#[derive(Debug, Clone, Default)]
pub struct AliasMap {
    canonical: BTreeMap<String, String>,
}

impl AliasMap {
    pub fn load(path: &Path, delimiter: u8) -> Result<Self> {
        let mut table = Table::open(path, delimiter)?;
        let c_alias = table.require("alias")?;
        let c_canon = table.require("canonical")?;
        let mut map = AliasMap::default();
        for row in table.rows() {
            let (line, rec) = row?;
            let alias = nonempty(line, "alias", field(&rec, c_alias))?;
            let canon = nonempty(line, "canonical", field(&rec, c_canon))?;
            map.insert(alias, canon);
        }
        Ok(map)
    }

    pub fn insert(&mut self, alias: impl Into<String>, canonical: impl Into<String>) {
        self.canonical.insert(alias.into(), canonical.into());
    }

    pub fn resolve<'a>(&'a self, id: &'a str) -> &'a str {
        self.canonical.get(id).map(String::as_str).unwrap_or(id)
    }

    /// Rewrites patient and doctor ids in place.
    pub fn apply(&self, records: &mut [EpisodeRecord]) {
        for r in records {
            if let Some(c) = self.canonical.get(&r.patient_id) {
                r.patient_id = c.clone();
            }
            if let Some(c) = self.canonical.get(&r.doctor_id) {
                r.doctor_id = c.clone();
            }
        }
    }
}

/// Writes raw text, used by tests and the command-line front end.
pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}
