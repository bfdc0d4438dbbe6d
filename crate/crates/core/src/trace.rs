//! Packet trace: one CSV row per packet event.

use std::fmt;

use crate::dsr::{write_hops, Packet};
use crate::sim::SimTime;
use crate::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceEvent {
    /// Transmission started.
    Tx,
    /// Packet received by its addressee (or any neighbour, for broadcasts).
    Rx,
    Drop,
}

impl TraceEvent {
    fn as_str(self) -> &'static str {
        match self {
            TraceEvent::Tx => "tx",
            TraceEvent::Rx => "rx",
            TraceEvent::Drop => "drop",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRecord {
    pub time: SimTime,
    pub node: NodeId,
    pub event: TraceEvent,
    pub packet: Packet,
}

impl TraceRecord {
    /// Intermediate nodes of a DATA packet's header route, if it is one.
    pub fn data_relays(&self) -> Option<&[NodeId]> {
        match &self.packet {
            Packet::Data(d) => Some(d.path.intermediates()),
            _ => None,
        }
    }
}

impl TraceRecord {
    /// Column values matching [`HEADER`].
    pub fn fields(&self) -> [String; 9] {
        let route = |hops: &[NodeId]| {
            let mut s = String::new();
            write_hops(&mut s, hops).expect("writing to a String");
            s
        };
        let (source, destination, id, path, flags) = match &self.packet {
            Packet::Rreq(p) => (
                p.source.to_string(),
                p.destination.to_string(),
                p.request_id.to_string(),
                route(&p.route_record),
                p.excluded.map_or("-".to_string(), |x| format!("x={x}")),
            ),
            Packet::Rrep(p) => (
                p.body.route.source().to_string(),
                p.body.route.destination().to_string(),
                p.body.request_id.to_string(),
                p.body.route.to_string(),
                "-".to_string(),
            ),
            Packet::Rerr(p) => (
                p.body.broken_from.to_string(),
                p.body.original_sender.to_string(),
                p.body.broken_to.to_string(),
                p.path.to_string(),
                if p.body.low_energy { "LE" } else { "-" }.to_string(),
            ),
            Packet::LowEnergy(p) => (
                p.origin.to_string(),
                "*".to_string(),
                "0".to_string(),
                p.origin.to_string(),
                if p.low_energy { "LE" } else { "-" }.to_string(),
            ),
            Packet::Data(p) | Packet::Ack(p) => (
                p.path.source().to_string(),
                p.path.destination().to_string(),
                p.body.seq.to_string(),
                p.path.to_string(),
                "-".to_string(),
            ),
        };
        [
            format!("{:.9}", self.time.secs()),
            self.node.to_string(),
            self.event.as_str().to_string(),
            self.packet.kind().to_string(),
            source,
            destination,
            id,
            path,
            flags,
        ]
    }
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.fields().join(" "))
    }
}

pub const HEADER: [&str; 9] = [
    "time",
    "node",
    "event",
    "kind",
    "source",
    "destination",
    "id",
    "route",
    "flags",
];

/// Renders records as CSV with a [`HEADER`] row.
pub fn render(records: &[TraceRecord]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(HEADER).expect("in-memory csv");
    for r in records {
        w.write_record(r.fields()).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf8 csv")
}
