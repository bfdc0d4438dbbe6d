//! Traffic flows and the run's measurements: energy traces, deaths, packet
//! counters and the lifetime figures derived from them.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::dsr::{PacketKind, ACK_BYTES, DATA_BYTES};
use crate::radio::{EnergyAccount, RadioParams, Topology};
use crate::sim::SimTime;
use crate::NodeId;

/// Constant-rate reliable flow: one DATA packet per `send_interval`, each
/// acknowledged end to end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSpec {
    pub source: NodeId,
    pub destination: NodeId,
    #[serde(default = "FlowSpec::default_interval")]
    pub send_interval: f64,
    #[serde(default)]
    pub start: f64,
    #[serde(default = "FlowSpec::default_data_bytes")]
    pub data_bytes: u32,
    #[serde(default = "FlowSpec::default_ack_bytes")]
    pub ack_bytes: u32,
}

impl FlowSpec {
    pub fn new(source: NodeId, destination: NodeId) -> Self {
        FlowSpec {
            source,
            destination,
            send_interval: Self::default_interval(),
            start: 0.0,
            data_bytes: DATA_BYTES,
            ack_bytes: ACK_BYTES,
        }
    }

    fn default_interval() -> f64 {
        0.05
    }
    fn default_data_bytes() -> u32 {
        DATA_BYTES
    }
    fn default_ack_bytes() -> u32 {
        ACK_BYTES
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlowState {
    Discovering,
    Sending,
    /// Discovery retries exhausted; no further injections.
    Stalled,
    /// The source ran out of energy.
    Dead,
}

/// Source-side state of a flow.
#[derive(Debug, Clone)]
pub struct Flow {
    pub id: usize,
    pub spec: FlowSpec,
    pub state: FlowState,
    next_seq: u64,
    /// Sequence numbers generated while no route was available.
    pub pending: VecDeque<u64>,
    pub discovery_attempts: u32,
    pub current_request: Option<u32>,
    /// Most recent low-energy culprit; carried by every new RREQ.
    pub excluded: Option<NodeId>,
}

impl Flow {
    pub fn new(id: usize, spec: FlowSpec) -> Self {
        Flow {
            id,
            spec,
            state: FlowState::Discovering,
            next_seq: 0,
            pending: VecDeque::new(),
            discovery_attempts: 0,
            current_request: None,
            excluded: None,
        }
    }

    /// Hands out the next sequence number; strictly increasing.
    pub fn take_seq(&mut self) -> u64 {
        let s = self.next_seq;
        self.next_seq += 1;
        s
    }

    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }

    pub fn is_active(&self) -> bool {
        matches!(self.state, FlowState::Discovering | FlowState::Sending)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub time: f64,
    pub node: NodeId,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Death {
    pub node: NodeId,
    pub time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowEventKind {
    Stalled,
    SourceDead,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowEvent {
    pub time: f64,
    pub flow: usize,
    pub kind: FlowEventKind,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KindCounters {
    pub tx: u64,
    pub rx: u64,
    pub drop: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowStats {
    pub injected: u64,
    pub delivered: u64,
    pub acked: u64,
    #[serde(skip)]
    delivered_seqs: std::collections::BTreeSet<u64>,
    #[serde(skip)]
    injected_seqs: std::collections::BTreeSet<u64>,
}

impl FlowStats {
    pub fn record_injection(&mut self, seq: u64) {
        if self.injected_seqs.insert(seq) {
            self.injected += 1;
        }
    }

    /// Counts a delivery once per sequence number. Returns whether it was new.
    pub fn record_delivery(&mut self, seq: u64) -> bool {
        let new = self.delivered_seqs.insert(seq);
        if new {
            self.delivered += 1;
        }
        new
    }

    pub fn was_injected(&self, seq: u64) -> bool {
        self.injected_seqs.contains(&seq)
    }
}

#[derive(Debug, Clone, Default)]
pub struct MetricsLog {
    pub snapshots: Vec<Snapshot>,
    pub deaths: Vec<Death>,
    pub flow_events: Vec<FlowEvent>,
    pub counters: BTreeMap<PacketKind, KindCounters>,
    pub flows: Vec<FlowStats>,
}

impl MetricsLog {
    pub fn new(flows: usize) -> Self {
        MetricsLog {
            flows: vec![FlowStats::default(); flows],
            counters: PacketKind::ALL
                .iter()
                .map(|&k| (k, KindCounters::default()))
                .collect(),
            ..Default::default()
        }
    }

    pub fn count(&mut self, kind: PacketKind) -> &mut KindCounters {
        self.counters.entry(kind).or_default()
    }

    /// Settles idle drain of every account to `now` and appends one row per
    /// node. Returns nodes found dead for the first time.
    pub fn record_snapshot(
        &mut self,
        accounts: &mut [EnergyAccount],
        now: SimTime,
        params: &RadioParams,
    ) -> Vec<NodeId> {
        let mut newly_dead = Vec::new();
        for (i, acct) in accounts.iter_mut().enumerate() {
            let was_alive = acct.is_alive();
            acct.settle(now, params);
            if was_alive && !acct.is_alive() {
                newly_dead.push(NodeId::from(i));
            }
            self.snapshots.push(Snapshot {
                time: now.secs(),
                node: NodeId::from(i),
                residual: acct.residual(),
            });
        }
        newly_dead
    }

    pub fn record_death(&mut self, node: NodeId, time: SimTime) {
        if self.deaths.iter().all(|d| d.node != node) {
            self.deaths.push(Death {
                node,
                time: time.secs(),
            });
        }
    }

    /// Time of the first stall of any flow.
    pub fn first_stall(&self) -> Option<f64> {
        self.flow_events
            .iter()
            .find(|e| e.kind == FlowEventKind::Stalled)
            .map(|e| e.time)
    }

    /// Energy trace as `time,node,residual_joules`.
    pub fn energy_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["time", "node", "residual_joules"])
            .expect("in-memory csv");
        for s in &self.snapshots {
            w.write_record([
                s.time.to_string(),
                s.node.to_string(),
                s.residual.to_string(),
            ])
            .expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf8 csv")
    }

    /// Deaths as `node,death_time`, ordered by time.
    pub fn deaths_csv(&self) -> String {
        let mut deaths = self.deaths.clone();
        deaths.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.node.cmp(&b.node)));
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["node", "death_time"])
            .expect("in-memory csv");
        for d in &deaths {
            w.write_record([d.node.to_string(), d.time.to_string()])
                .expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf8 csv")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LifetimeCause {
    Partition,
    Horizon,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkLifetime {
    pub value: f64,
    pub cause: LifetimeCause,
}

/// Whether `to` is reachable from `from` over alive nodes (both endpoints
/// must be alive).
pub fn connected(topology: &Topology, from: NodeId, to: NodeId, alive: &[bool]) -> bool {
    if !alive[from.index()] || !alive[to.index()] {
        return false;
    }
    let mut seen = vec![false; topology.len()];
    let mut queue = VecDeque::from([from]);
    seen[from.index()] = true;
    while let Some(n) = queue.pop_front() {
        if n == to {
            return true;
        }
        for &m in topology.links(n) {
            if alive[m.index()] && !seen[m.index()] {
                seen[m.index()] = true;
                queue.push_back(m);
            }
        }
    }
    false
}

/// Earliest time the source can no longer reach the destination over alive
/// nodes, found by replaying deaths in time order against the static
/// connectivity graph; the horizon if that never happens.
pub fn compute_network_lifetime(
    deaths: &[Death],
    topology: &Topology,
    source: NodeId,
    destination: NodeId,
    horizon: f64,
) -> NetworkLifetime {
    let mut alive = vec![true; topology.len()];
    if !connected(topology, source, destination, &alive) {
        return NetworkLifetime {
            value: 0.0,
            cause: LifetimeCause::Partition,
        };
    }
    let mut ordered: Vec<&Death> = deaths.iter().filter(|d| d.time <= horizon).collect();
    ordered.sort_by(|a, b| a.time.total_cmp(&b.time));
    let mut i = 0;
    while i < ordered.len() {
        // Deaths sharing a timestamp are applied together.
        let t = ordered[i].time;
        while i < ordered.len() && ordered[i].time == t {
            alive[ordered[i].node.index()] = false;
            i += 1;
        }
        if !connected(topology, source, destination, &alive) {
            return NetworkLifetime {
                value: t,
                cause: LifetimeCause::Partition,
            };
        }
    }
    NetworkLifetime {
        value: horizon,
        cause: LifetimeCause::Horizon,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeLifetime {
    pub node: NodeId,
    pub death_time: Option<f64>,
    pub final_residual: f64,
}

/// Per node: death time if it died, and the last recorded residual.
pub fn compute_node_lifetimes(log: &MetricsLog) -> Vec<NodeLifetime> {
    let mut last: BTreeMap<NodeId, f64> = BTreeMap::new();
    for s in &log.snapshots {
        last.insert(s.node, s.residual);
    }
    last.into_iter()
        .map(|(node, residual)| NodeLifetime {
            node,
            death_time: log.deaths.iter().find(|d| d.node == node).map(|d| d.time),
            final_residual: residual,
        })
        .collect()
}
