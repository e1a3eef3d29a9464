//! Canonical record encoding: one JSON object per record, newline-delimited
//! for trace files. Field order is fixed by the struct definitions, so the
//! same records always serialize to the same bytes.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::DomainError;
use crate::record::MeasurementRecord;

pub fn encode_record(record: &MeasurementRecord) -> Result<String, DomainError> {
    Ok(serde_json::to_string(record)?)
}

pub fn decode_record(line: &str) -> Result<MeasurementRecord, DomainError> {
    Ok(serde_json::from_str(line)?)
}

/// Writes one record per line. The caller controls ordering.
pub fn write_records(path: &Path, records: &[MeasurementRecord]) -> Result<(), DomainError> {
    let mut out = Vec::with_capacity(records.len() * 128);
    for record in records {
        out.extend_from_slice(encode_record(record)?.as_bytes());
        out.push(b'\n');
    }
    let mut file = File::create(path)?;
    file.write_all(&out)?;
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<MeasurementRecord>, DomainError> {
    read_records_from(File::open(path)?)
}

pub fn read_records_from(reader: impl Read) -> Result<Vec<MeasurementRecord>, DomainError> {
    let reader = BufReader::new(reader);
    let mut records = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(decode_record(&line)?);
    }
    Ok(records)
}
