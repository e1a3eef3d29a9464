//! Embedded persistence: one SQLite file, two tables.
//!
//! ```text
//! batches  batch_seq INTEGER PRIMARY KEY AUTOINCREMENT,
//!          received_at_us INTEGER, source TEXT, submitter TEXT,
//!          idempotency_key TEXT UNIQUE
//! records  id TEXT PRIMARY KEY, batch_seq INTEGER -> batches,
//!          run_id TEXT, timestamp_us INTEGER, value REAL, unit TEXT,
//!          method TEXT, metric TEXT, metric_label TEXT, segment TEXT,
//!          direction TEXT, access_technology TEXT,
//!          cross_traffic_mbps REAL, num_clients INTEGER
//! ```
//!
//! Indices cover the descriptor fields, the timestamp and the run id.
//! Batch sequence numbers never repeat across restarts (AUTOINCREMENT).
//! Writes run with synchronous=FULL, so an acknowledged batch survives a
//! process kill.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use measurement_core::{
    encode_record, MeasurementRecord, Method, MetricKind, RecordBatch, RecordQuery,
    TraceDescriptor,
};
use rusqlite::{params, params_from_iter, Connection, OptionalExtension};
use trace_library::{Manifest, ManifestEntry};

use crate::error::StoreError;

/// A persisted batch, as stored.
#[derive(Debug, Clone)]
pub struct StoredBatch {
    pub batch_id: i64,
    pub received_at_us: i64,
    pub source: Method,
    pub submitter: String,
    pub records: Vec<MeasurementRecord>,
}

/// Result of a trace export: the manifest plus the file names written.
#[derive(Debug, Clone)]
pub struct ExportOutcome {
    pub manifest: Manifest,
    pub directory: PathBuf,
}

pub struct Store {
    conn: Connection,
}

impl Store {
    pub fn open(path: &Path) -> Result<Store, StoreError> {
        let conn = Connection::open(path)?;
        conn.pragma_update(None, "synchronous", "FULL")?;
        conn.pragma_update(None, "foreign_keys", "ON")?;
        conn.execute_batch(
            "CREATE TABLE IF NOT EXISTS batches (
                batch_seq INTEGER PRIMARY KEY AUTOINCREMENT,
                received_at_us INTEGER NOT NULL,
                source TEXT NOT NULL,
                submitter TEXT NOT NULL,
                idempotency_key TEXT UNIQUE
            );
            CREATE TABLE IF NOT EXISTS records (
                id TEXT PRIMARY KEY,
                batch_seq INTEGER NOT NULL REFERENCES batches(batch_seq),
                run_id TEXT NOT NULL,
                timestamp_us INTEGER NOT NULL,
                value REAL NOT NULL,
                unit TEXT NOT NULL,
                method TEXT NOT NULL,
                metric TEXT NOT NULL,
                metric_label TEXT,
                segment TEXT NOT NULL,
                direction TEXT NOT NULL,
                access_technology TEXT NOT NULL,
                cross_traffic_mbps REAL NOT NULL,
                num_clients INTEGER
            );
            CREATE INDEX IF NOT EXISTS idx_records_time ON records(timestamp_us);
            CREATE INDEX IF NOT EXISTS idx_records_run ON records(run_id);
            CREATE INDEX IF NOT EXISTS idx_records_descriptor
                ON records(method, metric, segment, direction, access_technology);",
        )?;
        Ok(Store { conn })
    }

    /// Validates and persists a batch in one transaction. With an
    /// idempotency key, resubmitting returns the original batch id and
    /// stores nothing new. The batch is durable once this returns.
    pub fn submit_batch(
        &mut self,
        batch: &RecordBatch,
        idempotency_key: Option<&str>,
    ) -> Result<i64, StoreError> {
        batch.validate()?;
        let tx = self.conn.transaction()?;
        if let Some(key) = idempotency_key {
            let existing: Option<i64> = tx
                .query_row(
                    "SELECT batch_seq FROM batches WHERE idempotency_key = ?1",
                    params![key],
                    |row| row.get(0),
                )
                .optional()?;
            if let Some(batch_seq) = existing {
                tx.commit()?;
                return Ok(batch_seq);
            }
        }
        // records of one run share a descriptor across batches too
        let descriptor = batch.descriptor().unwrap();
        for run_id in batch.records.iter().map(|r| &r.run_id) {
            let stored: Option<MeasurementRecord> = tx
                .query_row(
                    "SELECT id, run_id, timestamp_us, value, unit, method, metric, metric_label,
                            segment, direction, access_technology, cross_traffic_mbps, num_clients
                     FROM records WHERE run_id = ?1 LIMIT 1",
                    params![run_id],
                    row_to_record,
                )
                .optional()?;
            if let Some(stored) = stored {
                if &stored.descriptor != descriptor {
                    return Err(StoreError::rejected(format!(
                        "run `{run_id}` already exists with a different descriptor"
                    )));
                }
            }
        }
        tx.execute(
            "INSERT INTO batches (received_at_us, source, submitter, idempotency_key)
             VALUES (?1, ?2, ?3, ?4)",
            params![
                measurement_core::now_timestamp_us(),
                batch.source.to_string(),
                batch.submitter,
                idempotency_key,
            ],
        )?;
        let batch_seq = tx.last_insert_rowid();
        {
            let mut insert = tx.prepare(
                "INSERT INTO records (id, batch_seq, run_id, timestamp_us, value, unit,
                                      method, metric, metric_label, segment, direction,
                                      access_technology, cross_traffic_mbps, num_clients)
                 VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9, ?10, ?11, ?12, ?13, ?14)",
            )?;
            for record in &batch.records {
                let (metric, label) = metric_columns(&record.descriptor.metric);
                insert
                    .execute(params![
                        record.id,
                        batch_seq,
                        record.run_id,
                        record.timestamp_us,
                        record.value,
                        record.unit,
                        record.descriptor.method.to_string(),
                        metric,
                        label,
                        record.descriptor.segment.to_string(),
                        record.descriptor.direction.to_string(),
                        record.descriptor.access_technology.to_string(),
                        record.descriptor.cross_traffic_mbps,
                        record.descriptor.num_clients,
                    ])
                    .map_err(|e| match e {
                        rusqlite::Error::SqliteFailure(err, _)
                            if err.code == rusqlite::ErrorCode::ConstraintViolation =>
                        {
                            StoreError::rejected(format!("duplicate record id `{}`", record.id))
                        }
                        other => StoreError::Storage(other),
                    })?;
            }
        }
        tx.commit()?;
        Ok(batch_seq)
    }

    /// Persists one self-reported record and returns its id.
    pub fn ingest_self(
        &mut self,
        record: &MeasurementRecord,
        submitter: &str,
        idempotency_key: Option<&str>,
    ) -> Result<String, StoreError> {
        if record.descriptor.method != Method::SelfReported {
            return Err(StoreError::rejected(
                "self ingestion requires method `self`",
            ));
        }
        let batch = RecordBatch {
            source: Method::SelfReported,
            submitter: submitter.to_string(),
            records: vec![record.clone()],
        };
        self.submit_batch(&batch, idempotency_key)?;
        Ok(record.id.clone())
    }

    /// All persisted records matching the filter, ordered by timestamp
    /// (record id breaks ties).
    pub fn query(&self, filter: &RecordQuery) -> Result<Vec<MeasurementRecord>, StoreError> {
        filter.validate()?;
        let mut sql = String::from(
            "SELECT id, run_id, timestamp_us, value, unit, method, metric, metric_label,
                    segment, direction, access_technology, cross_traffic_mbps, num_clients
             FROM records WHERE 1=1",
        );
        let mut args: Vec<rusqlite::types::Value> = Vec::new();
        let mut push = |sql: &mut String, clause: &str, value: rusqlite::types::Value| {
            args.push(value);
            let _ = write!(sql, " AND {} = ?{}", clause, args.len());
        };
        let d = &filter.descriptor;
        if let Some(method) = d.method {
            push(&mut sql, "method", method.to_string().into());
        }
        if let Some(metric) = &d.metric {
            let (tag, label) = metric_columns(metric);
            push(&mut sql, "metric", tag.to_string().into());
            if let Some(label) = label {
                push(&mut sql, "metric_label", label.into());
            }
        }
        if let Some(segment) = d.segment {
            push(&mut sql, "segment", segment.to_string().into());
        }
        if let Some(direction) = d.direction {
            push(&mut sql, "direction", direction.to_string().into());
        }
        if let Some(tech) = d.access_technology {
            push(&mut sql, "access_technology", tech.to_string().into());
        }
        if let Some(cross) = d.cross_traffic_mbps {
            push(&mut sql, "cross_traffic_mbps", cross.into());
        }
        if let Some(clients) = d.num_clients {
            push(&mut sql, "num_clients", (clients as i64).into());
        }
        if let Some(run_id) = &filter.run_id {
            push(&mut sql, "run_id", run_id.clone().into());
        }
        if let Some(from) = filter.from_us {
            args.push(from.into());
            let _ = write!(sql, " AND timestamp_us >= ?{}", args.len());
        }
        if let Some(to) = filter.to_us {
            args.push(to.into());
            let _ = write!(sql, " AND timestamp_us <= ?{}", args.len());
        }
        sql.push_str(" ORDER BY timestamp_us, id");
        let mut stmt = self.conn.prepare(&sql)?;
        let rows = stmt.query_map(params_from_iter(args), row_to_record)?;
        let mut records = Vec::new();
        for row in rows {
            records.push(row?);
        }
        Ok(records)
    }

    /// Loads one stored batch by id.
    pub fn batch(&self, batch_id: i64) -> Result<Option<StoredBatch>, StoreError> {
        let header = self
            .conn
            .query_row(
                "SELECT received_at_us, source, submitter FROM batches WHERE batch_seq = ?1",
                params![batch_id],
                |row| {
                    Ok((
                        row.get::<_, i64>(0)?,
                        row.get::<_, String>(1)?,
                        row.get::<_, String>(2)?,
                    ))
                },
            )
            .optional()?;
        let Some((received_at_us, source, submitter)) = header else {
            return Ok(None);
        };
        let mut stmt = self.conn.prepare(
            "SELECT id, run_id, timestamp_us, value, unit, method, metric, metric_label,
                    segment, direction, access_technology, cross_traffic_mbps, num_clients
             FROM records WHERE batch_seq = ?1 ORDER BY timestamp_us, id",
        )?;
        let rows = stmt.query_map(params![batch_id], row_to_record)?;
        let mut records = Vec::new();
        for row in rows {
            records.push(row?);
        }
        Ok(Some(StoredBatch {
            batch_id,
            received_at_us,
            source: source
                .parse()
                .map_err(|e| StoreError::rejected(format!("corrupt source column: {e}")))?,
            submitter,
            records,
        }))
    }

    /// Exports matching records as one newline-delimited-JSON trace file
    /// per run id, plus a manifest mapping each file to its descriptor.
    /// Files are written atomically (temp + rename) and any failure
    /// removes everything written by this call. Re-exporting the same
    /// selection into the same directory is byte-identical.
    pub fn export(&self, filter: &RecordQuery, dest: &Path) -> Result<ExportOutcome, StoreError> {
        let records = self.query(filter)?;
        fs::create_dir_all(dest)?;
        let mut runs: BTreeMap<String, Vec<MeasurementRecord>> = BTreeMap::new();
        for record in records {
            runs.entry(record.run_id.clone()).or_default().push(record);
        }
        let mut manifest = Manifest::default();
        let mut written: Vec<PathBuf> = Vec::new();
        let result = (|| -> Result<(), StoreError> {
            for (run_id, records) in &runs {
                let file = trace_file_name(run_id);
                let path = dest.join(&file);
                let mut body = String::new();
                for record in records {
                    body.push_str(&encode_record(record)?);
                    body.push('\n');
                }
                write_atomic(&path, body.as_bytes())?;
                written.push(path);
                manifest.entries.push(ManifestEntry {
                    file,
                    run_id: run_id.clone(),
                    records: records.len() as u64,
                    descriptor: records[0].descriptor.clone(),
                });
            }
            let manifest_json = manifest
                .to_json_pretty()
                .map_err(|e| StoreError::rejected(e.to_string()))?;
            let manifest_path = dest.join(trace_library::MANIFEST_FILE);
            write_atomic(&manifest_path, (manifest_json + "\n").as_bytes())?;
            written.push(manifest_path);
            Ok(())
        })();
        if let Err(e) = result {
            for path in &written {
                let _ = fs::remove_file(path);
            }
            return Err(e);
        }
        Ok(ExportOutcome {
            manifest,
            directory: dest.to_path_buf(),
        })
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// File name for a run's trace file. Run ids are sanitized to a safe
/// character set; a short hash disambiguates ids that collide after
/// sanitization.
pub fn trace_file_name(run_id: &str) -> String {
    let sanitized: String = run_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect();
    if sanitized == run_id {
        format!("trace-{sanitized}.ndjson")
    } else {
        format!("trace-{sanitized}-{:08x}.ndjson", fnv1a(run_id.as_bytes()))
    }
}

fn fnv1a(bytes: &[u8]) -> u32 {
    let mut hash: u32 = 0x811C_9DC5;
    for b in bytes {
        hash ^= *b as u32;
        hash = hash.wrapping_mul(0x0100_0193);
    }
    hash
}

fn metric_columns(metric: &MetricKind) -> (&'static str, Option<String>) {
    match metric {
        MetricKind::TcpBandwidth => ("tcp_bandwidth", None),
        MetricKind::UdpCapacity => ("udp_capacity", None),
        MetricKind::TcpLatency => ("tcp_latency", None),
        MetricKind::UdpLatency => ("udp_latency", None),
        MetricKind::PassiveThroughput => ("passive_throughput", None),
        MetricKind::PassiveLatency => ("passive_latency", None),
        MetricKind::SelfMetric(label) => ("self_metric", Some(label.clone())),
    }
}

fn row_to_record(row: &rusqlite::Row<'_>) -> rusqlite::Result<MeasurementRecord> {
    let method: String = row.get(5)?;
    let metric_tag: String = row.get(6)?;
    let metric_label: Option<String> = row.get(7)?;
    let segment: String = row.get(8)?;
    let direction: String = row.get(9)?;
    let tech: String = row.get(10)?;
    let invalid = |msg: String| {
        rusqlite::Error::FromSqlConversionFailure(
            0,
            rusqlite::types::Type::Text,
            msg.into(),
        )
    };
    let metric = MetricKind::parse(&metric_tag, metric_label.as_deref())
        .map_err(|e| invalid(e.to_string()))?;
    Ok(MeasurementRecord {
        id: row.get(0)?,
        run_id: row.get(1)?,
        timestamp_us: row.get(2)?,
        value: row.get(3)?,
        unit: row.get(4)?,
        descriptor: TraceDescriptor {
            method: method.parse().map_err(|e| invalid(format!("{e}")))?,
            metric,
            segment: segment.parse().map_err(|e| invalid(format!("{e}")))?,
            direction: direction.parse().map_err(|e| invalid(format!("{e}")))?,
            access_technology: tech.parse().map_err(|e| invalid(format!("{e}")))?,
            cross_traffic_mbps: row.get(11)?,
            num_clients: row.get::<_, Option<u32>>(12)?,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use measurement_core::{AccessTechnology, Direction, SegmentId, UNIT_MBPS, UNIT_MS};

    fn descriptor(metric: MetricKind) -> TraceDescriptor {
        TraceDescriptor {
            method: metric.method(),
            metric,
            segment: SegmentId::AccessMec,
            direction: Direction::Downstream,
            access_technology: AccessTechnology::Wifi,
            cross_traffic_mbps: 0.0,
            num_clients: None,
        }
    }

    fn bandwidth_batch(run_id: &str, n: usize) -> RecordBatch {
        let descriptor = descriptor(MetricKind::TcpBandwidth);
        RecordBatch {
            source: Method::Active,
            submitter: "test".into(),
            records: (0..n)
                .map(|i| MeasurementRecord {
                    id: format!("{run_id}-{i}"),
                    run_id: run_id.into(),
                    timestamp_us: 1000 + i as i64,
                    value: 10.0 + i as f64,
                    unit: UNIT_MBPS.into(),
                    descriptor: descriptor.clone(),
                })
                .collect(),
        }
    }

    fn open_temp() -> (tempfile::TempDir, Store) {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(&dir.path().join("agg.sqlite")).unwrap();
        (dir, store)
    }

    #[test]
    fn write_then_read_returns_exactly_the_batch() {
        let (_dir, mut store) = open_temp();
        let batch = bandwidth_batch("run-a", 10);
        store.submit_batch(&batch, None).unwrap();
        let got = store.query(&RecordQuery::default()).unwrap();
        assert_eq!(got, batch.records);
    }

    #[test]
    fn mixed_descriptor_batch_rejected() {
        let (_dir, mut store) = open_temp();
        let mut batch = bandwidth_batch("run-a", 2);
        batch.records[1].descriptor.direction = Direction::Upstream;
        assert!(matches!(
            store.submit_batch(&batch, None),
            Err(StoreError::Rejected(_))
        ));
        assert!(store.query(&RecordQuery::default()).unwrap().is_empty());
    }

    #[test]
    fn idempotency_key_deduplicates() {
        let (_dir, mut store) = open_temp();
        let batch = bandwidth_batch("run-a", 5);
        let id1 = store.submit_batch(&batch, Some("key-1")).unwrap();
        let id2 = store.submit_batch(&batch, Some("key-1")).unwrap();
        assert_eq!(id1, id2);
        assert_eq!(store.query(&RecordQuery::default()).unwrap().len(), 5);
    }

    #[test]
    fn same_run_different_descriptor_rejected() {
        let (_dir, mut store) = open_temp();
        store.submit_batch(&bandwidth_batch("run-a", 2), None).unwrap();
        let mut second = bandwidth_batch("run-a", 2);
        for r in &mut second.records {
            r.id = format!("other-{}", r.id);
            r.descriptor.access_technology = AccessTechnology::Lte;
        }
        assert!(matches!(
            store.submit_batch(&second, None),
            Err(StoreError::Rejected(_))
        ));
    }

    #[test]
    fn self_metric_round_trip_and_label_query() {
        let (_dir, mut store) = open_temp();
        let mut d = descriptor(MetricKind::SelfMetric("dash_bitrate".into()));
        d.num_clients = Some(8);
        let record = MeasurementRecord {
            id: "self-1".into(),
            run_id: "self-run".into(),
            timestamp_us: 42,
            value: 0.7,
            unit: UNIT_MBPS.into(),
            descriptor: d,
        };
        let id = store.ingest_self(&record, "app", None).unwrap();
        assert_eq!(id, "self-1");
        let filter = RecordQuery {
            descriptor: measurement_core::DescriptorQuery {
                metric: Some(MetricKind::SelfMetric("dash_bitrate".into())),
                ..Default::default()
            },
            ..Default::default()
        };
        let got = store.query(&filter).unwrap();
        assert_eq!(got, vec![record]);
    }

    #[test]
    fn active_method_with_self_kind_rejected() {
        let (_dir, mut store) = open_temp();
        let mut record = bandwidth_batch("r", 1).records.remove(0);
        record.descriptor.metric = MetricKind::SelfMetric("x".into());
        assert!(store.ingest_self(&record, "app", None).is_err());
    }

    #[test]
    fn durability_across_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("agg.sqlite");
        let first_id;
        {
            let mut store = Store::open(&path).unwrap();
            first_id = store.submit_batch(&bandwidth_batch("run-a", 3), None).unwrap();
        }
        let mut store = Store::open(&path).unwrap();
        assert_eq!(store.query(&RecordQuery::default()).unwrap().len(), 3);
        // ids keep growing after restart
        let next_id = store.submit_batch(&bandwidth_batch("run-b", 1), None).unwrap();
        assert!(next_id > first_id);
        let stored = store.batch(first_id).unwrap().unwrap();
        assert_eq!(stored.records.len(), 3);
        assert_eq!(stored.source, Method::Active);
    }

    #[test]
    fn export_writes_per_run_files_and_manifest() {
        let (_dir, mut store) = open_temp();
        store.submit_batch(&bandwidth_batch("run-a", 3), None).unwrap();
        store.submit_batch(&bandwidth_batch("run-b", 2), None).unwrap();
        let mut latency = bandwidth_batch("run-c", 2);
        for (i, r) in latency.records.iter_mut().enumerate() {
            r.id = format!("lat-{i}");
            r.run_id = "run-c".into();
            r.unit = UNIT_MS.into();
            r.descriptor = descriptor(MetricKind::UdpLatency);
        }
        store.submit_batch(&latency, None).unwrap();

        let out = tempfile::tempdir().unwrap();
        let filter = RecordQuery {
            descriptor: measurement_core::DescriptorQuery {
                metric: Some(MetricKind::TcpBandwidth),
                ..Default::default()
            },
            ..Default::default()
        };
        let outcome = store.export(&filter, out.path()).unwrap();
        assert_eq!(outcome.manifest.entries.len(), 2);
        // deterministic re-export: byte-identical files
        let before: Vec<Vec<u8>> = outcome
            .manifest
            .entries
            .iter()
            .map(|e| fs::read(out.path().join(&e.file)).unwrap())
            .collect();
        let manifest_before = fs::read(out.path().join(trace_library::MANIFEST_FILE)).unwrap();
        store.export(&filter, out.path()).unwrap();
        for (entry, bytes) in outcome.manifest.entries.iter().zip(&before) {
            assert_eq!(&fs::read(out.path().join(&entry.file)).unwrap(), bytes);
        }
        assert_eq!(
            fs::read(out.path().join(trace_library::MANIFEST_FILE)).unwrap(),
            manifest_before
        );
        // the export opens as a trace repository
        let repo = trace_library::TraceRepository::open(out.path()).unwrap();
        assert_eq!(repo.manifest().entries.len(), 2);
    }

    #[test]
    fn empty_export_writes_empty_manifest() {
        let (_dir, store) = open_temp();
        let out = tempfile::tempdir().unwrap();
        let outcome = store.export(&RecordQuery::default(), out.path()).unwrap();
        assert!(outcome.manifest.entries.is_empty());
        assert!(out.path().join(trace_library::MANIFEST_FILE).exists());
    }

    #[test]
    fn file_names_sanitize_odd_run_ids() {
        assert_eq!(trace_file_name("run-a"), "trace-run-a.ndjson");
        let odd = trace_file_name("run/../x");
        assert!(odd.starts_with("trace-run_.._x-"));
        assert_ne!(trace_file_name("run/x"), trace_file_name("run x"));
    }
}
