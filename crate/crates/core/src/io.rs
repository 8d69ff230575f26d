//! On-disk formats: the pipeline's CSV artifacts and JSON sidecars.
//!
//! All CSVs use LF newlines, exact lowercase headers, and a trailing newline.
//! Node ids are restricted to `[A-Za-z0-9_-]`, so no field ever needs
//! quoting. Writers are deterministic functions of their inputs; parsers
//! reject anything a writer would not produce, with 1-based line numbers in
//! errors.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::MetricSample;
use crate::sim::{Delivery, LinkDeliveries, NodeId, TransmissionRecord};
use crate::sniffer::{CapturedRecord, CapturedTrace, MergedTrace, ObsSymbol, ObservationSequence};

#[derive(Debug, Error, PartialEq)]
pub enum FormatError {
    #[error("line {line}: {msg}")]
    Csv { line: usize, msg: String },
    #[error("{0}")]
    Json(String),
}

fn csv_err(line: usize, msg: impl Into<String>) -> FormatError {
    FormatError::Csv {
        line,
        msg: msg.into(),
    }
}

/// Split a CSV body into rows, checking the header and arity. Returns
/// (1-based line number, fields) per data row.
fn rows<'a>(
    text: &'a str,
    header: &str,
) -> Result<Vec<(usize, Vec<&'a str>)>, FormatError> {
    let n_fields = header.split(',').count();
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, first)) if first.trim_end_matches('\r') == header => {}
        Some((_, first)) => {
            return Err(csv_err(1, format!("expected header {header:?}, got {first:?}")));
        }
        None => return Err(csv_err(1, format!("empty file, expected header {header:?}"))),
    }
    let mut out = Vec::new();
    for (idx, line) in lines {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != n_fields {
            return Err(csv_err(
                idx + 1,
                format!("expected {n_fields} fields, got {}", fields.len()),
            ));
        }
        out.push((idx + 1, fields));
    }
    Ok(out)
}

fn parse_num<T: std::str::FromStr>(s: &str, line: usize, field: &str) -> Result<T, FormatError> {
    s.parse()
        .map_err(|_| csv_err(line, format!("invalid {field}: {s:?}")))
}

fn parse_flag(s: &str, line: usize, field: &str) -> Result<bool, FormatError> {
    match s {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(csv_err(line, format!("invalid {field}: {s:?}, expected 0 or 1"))),
    }
}

fn parse_node(s: &str, line: usize, field: &str) -> Result<NodeId, FormatError> {
    NodeId::new(s).map_err(|e| csv_err(line, format!("invalid {field}: {e}")))
}

pub const TRANSMISSIONS_HEADER: &str = "node_id,packet_id,attempt,start_slot,end_slot,success";

pub fn write_transmissions_csv(records: &[TransmissionRecord]) -> String {
    let mut out = String::from(TRANSMISSIONS_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.node_id,
            r.packet_id,
            r.attempt,
            r.start_slot,
            r.end_slot,
            u8::from(r.success)
        ));
    }
    out
}

pub fn parse_transmissions_csv(text: &str) -> Result<Vec<TransmissionRecord>, FormatError> {
    let mut records = Vec::new();
    for (line, f) in rows(text, TRANSMISSIONS_HEADER)? {
        records.push(TransmissionRecord {
            node_id: parse_node(f[0], line, "node_id")?,
            packet_id: parse_num(f[1], line, "packet_id")?,
            attempt: parse_num(f[2], line, "attempt")?,
            start_slot: parse_num(f[3], line, "start_slot")?,
            end_slot: parse_num(f[4], line, "end_slot")?,
            success: parse_flag(f[5], line, "success")?,
        });
    }
    Ok(records)
}

pub const TRACE_HEADER: &str = "sniffer_id,node_id,packet_id,attempt,start_slot,end_slot";

pub fn write_trace_csv(trace: &CapturedTrace) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for r in &trace.records {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            trace.sniffer_id, r.node_id, r.packet_id, r.attempt, r.start_slot, r.end_slot
        ));
    }
    out
}

/// Parse one sniffer's trace. The sniffer id lives only in data rows, so an
/// empty capture parses as `None`; callers supply the id they expect.
pub fn parse_trace_csv(text: &str) -> Result<(Option<String>, Vec<CapturedRecord>), FormatError> {
    let mut sniffer_id: Option<String> = None;
    let mut records = Vec::new();
    for (line, f) in rows(text, TRACE_HEADER)? {
        match &sniffer_id {
            None => sniffer_id = Some(f[0].to_string()),
            Some(id) if id == f[0] => {}
            Some(id) => {
                return Err(csv_err(
                    line,
                    format!("trace mixes sniffer ids {id:?} and {:?}", f[0]),
                ));
            }
        }
        records.push(CapturedRecord {
            node_id: parse_node(f[1], line, "node_id")?,
            packet_id: parse_num(f[2], line, "packet_id")?,
            attempt: parse_num(f[3], line, "attempt")?,
            start_slot: parse_num(f[4], line, "start_slot")?,
            end_slot: parse_num(f[5], line, "end_slot")?,
        });
    }
    Ok((sniffer_id, records))
}

pub const MERGED_HEADER: &str = "node_id,packet_id,attempt,start_slot,end_slot";

pub fn write_merged_csv(merged: &MergedTrace) -> String {
    let mut out = String::from(MERGED_HEADER);
    out.push('\n');
    for r in &merged.records {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.node_id, r.packet_id, r.attempt, r.start_slot, r.end_slot
        ));
    }
    out
}

pub fn parse_merged_csv(text: &str, total_slots: u64) -> Result<MergedTrace, FormatError> {
    let mut records = Vec::new();
    for (line, f) in rows(text, MERGED_HEADER)? {
        records.push(CapturedRecord {
            node_id: parse_node(f[0], line, "node_id")?,
            packet_id: parse_num(f[1], line, "packet_id")?,
            attempt: parse_num(f[2], line, "attempt")?,
            start_slot: parse_num(f[3], line, "start_slot")?,
            end_slot: parse_num(f[4], line, "end_slot")?,
        });
    }
    Ok(MergedTrace {
        total_slots,
        records,
    })
}

pub const OBSERVATIONS_HEADER: &str = "slot,symbol";

pub fn write_observations_csv(obs: &ObservationSequence) -> String {
    let mut out = String::from(OBSERVATIONS_HEADER);
    out.push('\n');
    for (t, sym) in obs.symbols.iter().enumerate() {
        out.push_str(&format!("{},{}\n", obs.first_slot + t as u64, sym.label()));
    }
    out
}

/// JSON sidecar naming the pair and window an observation CSV covers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationMeta {
    pub pair_x: String,
    pub pair_y: String,
    pub first_slot: u64,
    pub last_slot: u64,
}

impl ObservationMeta {
    pub fn of(obs: &ObservationSequence) -> Self {
        ObservationMeta {
            pair_x: obs.x.to_string(),
            pair_y: obs.y.to_string(),
            first_slot: obs.first_slot,
            last_slot: obs.last_slot,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("meta serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, FormatError> {
        serde_json::from_str(text).map_err(|e| FormatError::Json(e.to_string()))
    }
}

pub fn parse_observations_csv(
    text: &str,
    meta: &ObservationMeta,
) -> Result<ObservationSequence, FormatError> {
    let x = NodeId::new(meta.pair_x.clone()).map_err(|e| FormatError::Json(e.to_string()))?;
    let y = NodeId::new(meta.pair_y.clone()).map_err(|e| FormatError::Json(e.to_string()))?;
    let mut symbols = Vec::new();
    let mut expected = meta.first_slot;
    for (line, f) in rows(text, OBSERVATIONS_HEADER)? {
        let slot: u64 = parse_num(f[0], line, "slot")?;
        if slot != expected {
            return Err(csv_err(line, format!("expected slot {expected}, got {slot}")));
        }
        expected += 1;
        let sym = ObsSymbol::from_label(f[1])
            .ok_or_else(|| csv_err(line, format!("invalid symbol: {:?}", f[1])))?;
        symbols.push(sym);
    }
    let want = meta.last_slot - meta.first_slot + 1;
    if symbols.len() as u64 != want {
        return Err(csv_err(
            text.lines().count(),
            format!(
                "{} observation rows for a sidecar window of {want} slots",
                symbols.len()
            ),
        ));
    }
    Ok(ObservationSequence {
        x,
        y,
        first_slot: meta.first_slot,
        last_slot: meta.last_slot,
        symbols,
    })
}

pub const DELIVERIES_HEADER: &str =
    "sender,receiver,packet_id,arrival_slot,completion_slot,delivered";

pub fn write_deliveries_csv(links: &[LinkDeliveries]) -> String {
    let mut out = String::from(DELIVERIES_HEADER);
    out.push('\n');
    for link in links {
        for d in &link.deliveries {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                link.sender,
                link.receiver,
                d.packet_id,
                d.arrival_slot,
                d.completion_slot,
                u8::from(d.delivered)
            ));
        }
    }
    out
}

pub fn parse_deliveries_csv(text: &str) -> Result<Vec<LinkDeliveries>, FormatError> {
    let mut links: Vec<LinkDeliveries> = Vec::new();
    for (line, f) in rows(text, DELIVERIES_HEADER)? {
        let sender = parse_node(f[0], line, "sender")?;
        let receiver = parse_node(f[1], line, "receiver")?;
        let delivery = Delivery {
            packet_id: parse_num(f[2], line, "packet_id")?,
            arrival_slot: parse_num(f[3], line, "arrival_slot")?,
            completion_slot: parse_num(f[4], line, "completion_slot")?,
            delivered: parse_flag(f[5], line, "delivered")?,
        };
        match links
            .iter_mut()
            .find(|l| l.sender == sender && l.receiver == receiver)
        {
            Some(l) => l.deliveries.push(delivery),
            None => links.push(LinkDeliveries {
                sender,
                receiver,
                deliveries: vec![delivery],
            }),
        }
    }
    Ok(links)
}

pub const SERIES_HEADER: &str =
    "bucket_start_slot,packets_sent,packets_received,pdr,bytes_delivered,throughput,mean_delay_slots";

pub fn write_series_csv(series: &[MetricSample]) -> String {
    let mut out = String::from(SERIES_HEADER);
    out.push('\n');
    for s in series {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            s.bucket_start_slot,
            s.packets_sent,
            s.packets_received,
            s.pdr,
            s.bytes_delivered,
            s.throughput,
            s.mean_delay_slots
        ));
    }
    out
}
