use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("config: {0}")]
    Config(String),
    #[error("trace: {0}")]
    Trace(#[from] trace_library::TraceError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
