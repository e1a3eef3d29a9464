use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalyzerError {
    #[error("bad capture magic 0x{0:08X}: not a classic pcap file")]
    BadMagic(u32),
    #[error("pcapng input is not supported; convert to classic pcap first")]
    PcapNg,
    #[error("capture truncated: {0}")]
    Truncated(&'static str),
    #[error("unsupported link type {0} (only Ethernet is supported)")]
    UnsupportedLinkType(u32),
    #[error("latency is only defined for TCP flows")]
    UnsupportedMetric,
    #[error("bin width must be positive, got {0}")]
    InvalidBinWidth(f64),
    #[error("descriptor: {0}")]
    Descriptor(String),
    #[error("domain: {0}")]
    Domain(#[from] measurement_core::DomainError),
}
