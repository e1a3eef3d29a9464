use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProbeError {
    /// Could not establish or keep the session socket.
    #[error("session: {0}")]
    Session(#[from] std::io::Error),
    /// The peer is not speaking the probe protocol.
    #[error("handshake: {0}")]
    Handshake(String),
    /// The procedure ran but produced no usable measurement.
    #[error("measurement: {0}")]
    Measurement(String),
    /// The peer reported an error message.
    #[error("peer: {0}")]
    Peer(String),
    #[error("config: {0}")]
    Config(#[from] measurement_core::DomainError),
}
