//! Delivery performance metrics and their bucketed time series.

use thiserror::Error;

use crate::sim::SimOutput;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("throughput interval must be positive, got {0}")]
    NonPositiveInterval(f64),
    #[error("packet delivery ratio is undefined when no packets were sent")]
    NoPacketsSent,
    #[error("received {received} packets but only {sent} were sent")]
    ReceivedExceedsSent { received: u64, sent: u64 },
    #[error("transmission delay needs a positive bit count")]
    ZeroBits,
    #[error("transmission delay needs a positive rate, got {0}")]
    NonPositiveRate(f64),
    #[error("bucket_slots must be at least 1")]
    ZeroBucket,
    #[error("slot_seconds must be positive, got {0}")]
    NonPositiveSlotSeconds(f64),
}

/// Throughput in the reporting convention of the evaluation figures:
/// bytes delivered over the interval, scaled by 1000.
pub fn throughput(bytes_delivered: u64, interval_seconds: f64) -> Result<f64, MetricsError> {
    if !(interval_seconds > 0.0) || !interval_seconds.is_finite() {
        return Err(MetricsError::NonPositiveInterval(interval_seconds));
    }
    Ok(bytes_delivered as f64 / interval_seconds * 1000.0)
}

/// Packet delivery ratio: received over sent.
pub fn pdr(received: u64, sent: u64) -> Result<f64, MetricsError> {
    if sent == 0 {
        return Err(MetricsError::NoPacketsSent);
    }
    if received > sent {
        return Err(MetricsError::ReceivedExceedsSent { received, sent });
    }
    Ok(received as f64 / sent as f64)
}

/// Time to clock one packet onto the medium: bits over link rate.
pub fn transmission_delay(n_bits: u64, rate_bits_per_sec: f64) -> Result<f64, MetricsError> {
    if n_bits == 0 {
        return Err(MetricsError::ZeroBits);
    }
    if !(rate_bits_per_sec > 0.0) || !rate_bits_per_sec.is_finite() {
        return Err(MetricsError::NonPositiveRate(rate_bits_per_sec));
    }
    Ok(n_bits as f64 / rate_bits_per_sec)
}

/// One bucket of the delivery time series.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSample {
    pub bucket_start_slot: u64,
    /// Packets whose final attempt completed in this bucket.
    pub packets_sent: u64,
    pub packets_received: u64,
    /// received / sent, or 0 for a bucket with no completions.
    pub pdr: f64,
    pub bytes_delivered: u64,
    /// Bytes over the bucket's wall-clock interval, scaled by 1000.
    pub throughput: f64,
    /// Mean slots from packet arrival to successful completion, inclusive of
    /// the delivery slot; 0 for a bucket with no deliveries.
    pub mean_delay_slots: f64,
}

/// Bucket all link deliveries by completion slot over `[0, total_slots)`.
///
/// Buckets are half-open `[k*bucket_slots, (k+1)*bucket_slots)`; a short
/// final bucket uses its true width as the throughput interval. Counters
/// aggregate in integers, so the series is independent of delivery
/// enumeration order.
pub fn time_series(
    output: &SimOutput,
    bucket_slots: u64,
    slot_seconds: f64,
) -> Result<Vec<MetricSample>, MetricsError> {
    if bucket_slots == 0 {
        return Err(MetricsError::ZeroBucket);
    }
    if !(slot_seconds > 0.0) || !slot_seconds.is_finite() {
        return Err(MetricsError::NonPositiveSlotSeconds(slot_seconds));
    }
    let n_buckets = output.total_slots.div_ceil(bucket_slots).max(1) as usize;
    let mut sent = vec![0u64; n_buckets];
    let mut received = vec![0u64; n_buckets];
    let mut delay_sum = vec![0u64; n_buckets];
    for link in &output.deliveries {
        for d in &link.deliveries {
            let bucket = (d.completion_slot / bucket_slots) as usize;
            sent[bucket] += 1;
            if d.delivered {
                received[bucket] += 1;
                delay_sum[bucket] += d.completion_slot - d.arrival_slot + 1;
            }
        }
    }
    let mut series = Vec::with_capacity(n_buckets);
    for k in 0..n_buckets {
        let bucket_start_slot = k as u64 * bucket_slots;
        let width = bucket_slots.min(output.total_slots.saturating_sub(bucket_start_slot));
        let width = if width == 0 { bucket_slots } else { width };
        let bytes_delivered = received[k] * output.packet_bytes;
        series.push(MetricSample {
            bucket_start_slot,
            packets_sent: sent[k],
            packets_received: received[k],
            pdr: if sent[k] == 0 {
                0.0
            } else {
                received[k] as f64 / sent[k] as f64
            },
            bytes_delivered,
            throughput: throughput(bytes_delivered, width as f64 * slot_seconds)?,
            mean_delay_slots: if received[k] == 0 {
                0.0
            } else {
                delay_sum[k] as f64 / received[k] as f64
            },
        });
    }
    Ok(series)
}
