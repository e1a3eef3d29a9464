//! Blocking HTTP client for the aggregator, used by probes, the passive
//! analyzer and the CLI. Implements [`RecordSink`] so measurement
//! producers stay decoupled from the transport.

use measurement_core::{MeasurementRecord, RecordBatch, RecordQuery, RecordSink, SinkError};
use serde::Deserialize;

use crate::http::{record_query_to_params, ExportResponse};

#[derive(Clone)]
pub struct AggregatorClient {
    base: String,
    token: Option<String>,
    http: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct BatchCreated {
    batch_id: String,
}

#[derive(Deserialize)]
struct RecordCreated {
    id: String,
}

#[derive(Deserialize)]
struct ErrorBody {
    error: String,
}

impl AggregatorClient {
    /// `base_url` like `http://127.0.0.1:8700`.
    pub fn new(base_url: &str) -> AggregatorClient {
        AggregatorClient {
            base: base_url.trim_end_matches('/').to_string(),
            token: None,
            http: reqwest::blocking::Client::new(),
        }
    }

    pub fn with_token(mut self, token: Option<String>) -> AggregatorClient {
        self.token = token;
        self
    }

    fn request(&self, req: reqwest::blocking::RequestBuilder) -> reqwest::blocking::RequestBuilder {
        match &self.token {
            Some(token) => req.bearer_auth(token),
            None => req,
        }
    }

    fn check(response: reqwest::blocking::Response) -> Result<reqwest::blocking::Response, SinkError> {
        if response.status().is_success() {
            return Ok(response);
        }
        let status = response.status();
        let message = response
            .json::<ErrorBody>()
            .map(|b| b.error)
            .unwrap_or_else(|_| "unreadable error body".into());
        Err(SinkError::Rejected(format!("{status}: {message}")))
    }

    pub fn health(&self) -> Result<(), SinkError> {
        let response = self
            .request(self.http.get(format!("{}/v1/health", self.base)))
            .send()
            .map_err(|e| SinkError::Transport(e.to_string()))?;
        Self::check(response).map(|_| ())
    }

    pub fn submit_batch(
        &self,
        batch: &RecordBatch,
        idempotency_key: Option<&str>,
    ) -> Result<String, SinkError> {
        let mut req = self
            .request(self.http.post(format!("{}/v1/measurements", self.base)))
            .json(batch);
        if let Some(key) = idempotency_key {
            req = req.header("idempotency-key", key);
        }
        let response = req.send().map_err(|e| SinkError::Transport(e.to_string()))?;
        let created: BatchCreated = Self::check(response)?
            .json()
            .map_err(|e| SinkError::Transport(e.to_string()))?;
        Ok(created.batch_id)
    }

    pub fn ingest_self(
        &self,
        record: &MeasurementRecord,
        submitter: &str,
    ) -> Result<String, SinkError> {
        let response = self
            .request(self.http.post(format!("{}/v1/self", self.base)))
            .query(&[("submitter", submitter)])
            .json(record)
            .send()
            .map_err(|e| SinkError::Transport(e.to_string()))?;
        let created: RecordCreated = Self::check(response)?
            .json()
            .map_err(|e| SinkError::Transport(e.to_string()))?;
        Ok(created.id)
    }

    pub fn query(&self, filter: &RecordQuery) -> Result<Vec<MeasurementRecord>, SinkError> {
        let response = self
            .request(self.http.get(format!("{}/v1/measurements", self.base)))
            .query(&record_query_to_params(filter))
            .send()
            .map_err(|e| SinkError::Transport(e.to_string()))?;
        Self::check(response)?
            .json()
            .map_err(|e| SinkError::Transport(e.to_string()))
    }

    /// Server-side export into `dest` (a path on the aggregator host).
    pub fn export(&self, filter: &RecordQuery, dest: &str) -> Result<ExportResponse, SinkError> {
        let mut params = record_query_to_params(filter);
        params.push(("dest".into(), dest.into()));
        let response = self
            .request(self.http.get(format!("{}/v1/export", self.base)))
            .query(&params)
            .send()
            .map_err(|e| SinkError::Transport(e.to_string()))?;
        Self::check(response)?
            .json()
            .map_err(|e| SinkError::Transport(e.to_string()))
    }
}

impl RecordSink for AggregatorClient {
    fn submit(&self, batch: &RecordBatch) -> Result<String, SinkError> {
        self.submit_batch(batch, None)
    }

    fn submit_self(&self, record: &MeasurementRecord) -> Result<String, SinkError> {
        self.ingest_self(record, "")
    }
}
