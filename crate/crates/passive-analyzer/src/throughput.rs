use crate::error::AnalyzerError;
use crate::pcap::PacketRecord;

/// One throughput bin. `mbps` is payload bytes scaled to megabits per
/// second over the bin width.
#[derive(Debug, Clone, PartialEq)]
pub struct ThroughputBin {
    pub start_us: i64,
    pub width_us: i64,
    pub bytes: u64,
    pub mbps: f64,
}

/// Bins the payload bytes of one flow direction into fixed-width bins
/// anchored at the first packet's timestamp. Bins are left-closed,
/// right-open: a packet exactly on a boundary counts in the later bin.
/// Empty interior bins are emitted with zero bytes. Bins tile
/// [first_timestamp, last_timestamp].
pub fn binned_throughput(
    records: &[PacketRecord],
    bin_width_s: f64,
) -> Result<Vec<ThroughputBin>, AnalyzerError> {
    if !(bin_width_s > 0.0) || !bin_width_s.is_finite() {
        return Err(AnalyzerError::InvalidBinWidth(bin_width_s));
    }
    let width_us = (bin_width_s * 1e6).round() as i64;
    if width_us < 1 {
        return Err(AnalyzerError::InvalidBinWidth(bin_width_s));
    }
    if records.is_empty() {
        return Ok(Vec::new());
    }
    let anchor = records.iter().map(|p| p.timestamp_us).min().unwrap();
    let last = records.iter().map(|p| p.timestamp_us).max().unwrap();
    let n_bins = ((last - anchor) / width_us + 1) as usize;
    let mut bins: Vec<ThroughputBin> = (0..n_bins)
        .map(|i| ThroughputBin {
            start_us: anchor + i as i64 * width_us,
            width_us,
            bytes: 0,
            mbps: 0.0,
        })
        .collect();
    for packet in records {
        let idx = ((packet.timestamp_us - anchor) / width_us) as usize;
        bins[idx].bytes += packet.payload_len as u64;
    }
    for bin in &mut bins {
        // bytes*8 / width_us == bits / microsecond == megabits / second
        bin.mbps = bin.bytes as f64 * 8.0 / width_us as f64;
    }
    Ok(bins)
}
