//! The simulator: owns node state, radio, flows and metrics, and reacts to
//! events popped from the queue.
//!
//! Transmission model: a frame sent at `t` occupies the air for its airtime
//! `d` and reaches receivers at `t + d`. The sender pays tx energy when it
//! starts; receivers pay rx energy on arrival. There is no MAC contention.
//! A unicast to a next hop that is dead or out of range is detected after
//! the retransmit timeout and retried; when the retries are used up the link
//! counts as broken.

use crate::dsr::{
    DropReason, DsrNode, Packet, PacketKind, Payload, RerrPacket, Routed, RrepAction, RrepPacket,
    RreqAction, SourceRoute,
};
use crate::essdsr::{
    energy_jitter, handle_low_energy, EnergyJitterParams, LowEnergyPacket, LowEnergyThreshold,
    RelayedFlow, SurvivalState,
};
use crate::metrics::{
    compute_network_lifetime, compute_node_lifetimes, Flow, FlowEvent, FlowEventKind, FlowSpec,
    FlowState, MetricsLog, NetworkLifetime, NodeLifetime,
};
use crate::radio::{tx_duration, EnergyAccount, EnergySpent, Position, RadioParams, Topology};
use crate::sim::{EventQueue, RngStream, SimTime};
use crate::trace::{TraceEvent, TraceRecord};
use crate::{NodeId, Protocol};

/// Everything that parameterises a run besides topology, energies and flows.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub protocol: Protocol,
    pub radio: RadioParams,
    pub jitter: EnergyJitterParams,
    pub threshold: LowEnergyThreshold,
    pub horizon: f64,
    pub seed: u64,
    /// Upper bound of DSR's uniform RREQ jitter.
    pub dsr_jitter_max: f64,
    pub retransmit_timeout: f64,
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub discovery_timeout: f64,
    pub max_discovery_attempts: u32,
    pub snapshot_interval: f64,
    pub intermediate_cache_reply: bool,
    /// Apply the energy delay to RREPs too, not only RREQs (ESSDSR).
    pub rrep_energy_jitter: bool,
    /// Charge rx energy to every neighbour that hears a unicast frame.
    pub promiscuous_rx: bool,
    /// Diagnostic: all protocol forwarding delays become zero.
    pub zero_jitter: bool,
    /// Diagnostic: no energy is ever charged.
    pub freeze_energy: bool,
}

impl SimConfig {
    pub fn new(protocol: Protocol) -> Self {
        SimConfig {
            protocol,
            radio: RadioParams::default(),
            jitter: EnergyJitterParams::default(),
            threshold: LowEnergyThreshold::default(),
            horizon: 60.0,
            seed: 1,
            dsr_jitter_max: 0.01,
            retransmit_timeout: 0.05,
            max_retries: 2,
            discovery_timeout: 0.5,
            max_discovery_attempts: 5,
            snapshot_interval: 0.5,
            intermediate_cache_reply: false,
            rrep_energy_jitter: true,
            promiscuous_rx: false,
            zero_jitter: false,
            freeze_energy: false,
        }
    }
}

#[derive(Debug, Clone)]
enum Event {
    Arrival {
        node: NodeId,
        from: NodeId,
        /// The packet as transmitted by `from`.
        packet: Packet,
        sent_at: SimTime,
        attempt: u32,
        overheard: bool,
    },
    JitterExpiry {
        node: NodeId,
        packet: Packet,
    },
    TrafficTick(usize),
    Snapshot(u64),
    RetransmitTimeout {
        node: NodeId,
        packet: Packet,
        attempt: u32,
    },
    DiscoveryTimeout {
        flow: usize,
        request_id: u32,
    },
}

struct NodeState {
    dsr: DsrNode,
    energy: EnergyAccount,
    survival: SurvivalState,
    relayed: Vec<RelayedFlow>,
}

/// Outcome of a finished run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub protocol: Protocol,
    pub seed: u64,
    pub horizon: f64,
    pub log: MetricsLog,
    pub trace: Vec<TraceRecord>,
    pub lifetime: NetworkLifetime,
    pub node_lifetimes: Vec<NodeLifetime>,
    pub initial_energy: Vec<f64>,
    pub final_residual: Vec<f64>,
    pub spent: Vec<EnergySpent>,
    /// Routes the sources switched to, in order, per flow.
    pub routes_used: Vec<Vec<(f64, SourceRoute)>>,
}

pub struct Simulation {
    cfg: SimConfig,
    topo: Topology,
    nodes: Vec<NodeState>,
    flows: Vec<Flow>,
    queue: EventQueue<Event>,
    rng: RngStream,
    log: MetricsLog,
    trace: Vec<TraceRecord>,
    routes_used: Vec<Vec<(f64, SourceRoute)>>,
}

impl Simulation {
    /// Builds a simulation over nodes placed at `positions` with the given
    /// initial energies.
    pub fn new(
        cfg: SimConfig,
        positions: Vec<Position>,
        energies: &[f64],
        flows: Vec<FlowSpec>,
    ) -> Self {
        let topo = Topology::new(positions, &cfg.radio);
        Self::with_topology(cfg, topo, energies, flows)
    }

    pub fn with_topology(
        cfg: SimConfig,
        topo: Topology,
        energies: &[f64],
        flows: Vec<FlowSpec>,
    ) -> Self {
        assert_eq!(topo.len(), energies.len(), "one energy per node");
        assert!(cfg.horizon >= 0.0, "negative horizon");
        let nodes = energies
            .iter()
            .enumerate()
            .map(|(i, &e)| {
                let mut dsr = DsrNode::new(NodeId::from(i));
                dsr.reply_from_cache = cfg.intermediate_cache_reply;
                NodeState {
                    dsr,
                    energy: EnergyAccount::new(e),
                    survival: SurvivalState::default(),
                    relayed: Vec::new(),
                }
            })
            .collect();
        let nflows = flows.len();
        Simulation {
            rng: RngStream::new(cfg.seed),
            topo,
            nodes,
            flows: flows
                .into_iter()
                .enumerate()
                .map(|(i, s)| Flow::new(i, s))
                .collect(),
            queue: EventQueue::new(),
            log: MetricsLog::new(nflows),
            trace: Vec::new(),
            routes_used: vec![Vec::new(); nflows],
            cfg,
        }
    }

    pub fn topology(&self) -> &Topology {
        &self.topo
    }

    pub fn now(&self) -> SimTime {
        self.queue.now()
    }

    pub fn route_cache(&self, node: NodeId) -> &crate::dsr::RouteCache {
        &self.nodes[node.index()].dsr.cache
    }

    pub fn flow(&self, id: usize) -> &Flow {
        &self.flows[id]
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }

    /// Broadcasts a route request from `source` without any traffic attached;
    /// the reply ends up in the source's route cache.
    pub fn discover(&mut self, source: NodeId, destination: NodeId) {
        let rreq = self.nodes[source.index()]
            .dsr
            .initiate_route_discovery(destination, None);
        self.transmit(source, Packet::Rreq(rreq), 0);
    }

    /// Dispatches events up to `until` (clamped to the horizon).
    pub fn advance(&mut self, until: f64) {
        let until = SimTime::new(until.min(self.cfg.horizon));
        while let Some((_, _, ev)) = self.queue.pop_until(until) {
            self.dispatch(ev);
        }
    }

    /// Runs the whole scenario and collects the results.
    pub fn run(mut self) -> RunResult {
        let horizon = SimTime::new(self.cfg.horizon);
        self.queue.schedule(SimTime::ZERO, Event::Snapshot(0));
        for (i, f) in self.flows.iter().enumerate() {
            if f.spec.start <= self.cfg.horizon {
                self.queue
                    .schedule(SimTime::new(f.spec.start), Event::TrafficTick(i));
            }
        }
        while let Some((_, _, ev)) = self.queue.pop_until(horizon) {
            self.dispatch(ev);
        }
        let last = self.log.snapshots.last().map(|s| s.time);
        if last != Some(horizon.secs()) {
            self.snapshot(horizon);
        }
        self.finish()
    }

    fn finish(self) -> RunResult {
        let lifetime = match self.flows.first() {
            Some(f) => compute_network_lifetime(
                &self.log.deaths,
                &self.topo,
                f.spec.source,
                f.spec.destination,
                self.cfg.horizon,
            ),
            None => NetworkLifetime {
                value: self.cfg.horizon,
                cause: crate::metrics::LifetimeCause::Horizon,
            },
        };
        RunResult {
            protocol: self.cfg.protocol,
            seed: self.cfg.seed,
            horizon: self.cfg.horizon,
            node_lifetimes: compute_node_lifetimes(&self.log),
            initial_energy: self.nodes.iter().map(|n| n.energy.initial()).collect(),
            final_residual: self.nodes.iter().map(|n| n.energy.residual()).collect(),
            spent: self.nodes.iter().map(|n| n.energy.spent()).collect(),
            lifetime,
            log: self.log,
            trace: self.trace,
            routes_used: self.routes_used,
        }
    }

    fn dispatch(&mut self, ev: Event) {
        match ev {
            Event::Arrival {
                node,
                from,
                packet,
                sent_at,
                attempt,
                overheard,
            } => self.on_arrival(node, from, packet, sent_at, attempt, overheard),
            Event::JitterExpiry { node, packet } => self.transmit(node, packet, 0),
            Event::TrafficTick(f) => self.on_tick(f),
            Event::Snapshot(k) => {
                let now = self.now();
                self.snapshot(now);
                let next = (k + 1) as f64 * self.cfg.snapshot_interval;
                if next <= self.cfg.horizon {
                    self.queue
                        .schedule(SimTime::new(next), Event::Snapshot(k + 1));
                }
            }
            Event::RetransmitTimeout {
                node,
                packet,
                attempt,
            } => {
                if attempt < self.cfg.max_retries {
                    self.transmit(node, packet, attempt + 1);
                } else {
                    self.on_link_failure(node, packet);
                }
            }
            Event::DiscoveryTimeout { flow, request_id } => {
                self.on_discovery_timeout(flow, request_id)
            }
        }
    }

    // ---- energy -------------------------------------------------------

    /// Settles `node` to now and reports whether it is alive, recording a
    /// death the first time it is observed.
    fn alive(&mut self, node: NodeId) -> bool {
        if self.cfg.freeze_energy {
            return self.nodes[node.index()].energy.is_alive();
        }
        let now = self.now();
        let acct = &mut self.nodes[node.index()].energy;
        let was = acct.is_alive();
        acct.settle(now, &self.cfg.radio);
        if was && !acct.is_alive() {
            self.on_death(node);
        }
        self.nodes[node.index()].energy.is_alive()
    }

    fn on_death(&mut self, node: NodeId) {
        let at = self.nodes[node.index()]
            .energy
            .dead_since()
            .expect("dead node has a death time");
        self.log.record_death(node, at);
        let now = self.now();
        self.snapshot(now);
    }

    fn snapshot(&mut self, now: SimTime) {
        if self.cfg.freeze_energy {
            return;
        }
        let mut accounts: Vec<EnergyAccount> =
            self.nodes.iter().map(|n| n.energy.clone()).collect();
        let dead = self
            .log
            .record_snapshot(&mut accounts, now, &self.cfg.radio);
        for (n, a) in self.nodes.iter_mut().zip(accounts) {
            n.energy = a;
        }
        for node in dead {
            let at = self.nodes[node.index()].energy.dead_since().expect("dead");
            self.log.record_death(node, at);
        }
    }

    // ---- radio --------------------------------------------------------

    fn record(&mut self, node: NodeId, event: TraceEvent, packet: &Packet) {
        self.trace.push(TraceRecord {
            time: self.now(),
            node,
            event,
            packet: packet.clone(),
        });
    }

    fn drop_packet(&mut self, node: NodeId, packet: &Packet) {
        self.log.count(packet.kind()).drop += 1;
        self.record(node, TraceEvent::Drop, packet);
    }

    /// Starts a transmission of `packet` by `node`: broadcast if the packet
    /// has no next hop, unicast otherwise.
    fn transmit(&mut self, node: NodeId, packet: Packet, attempt: u32) {
        if !self.alive(node) {
            self.drop_packet(node, &packet);
            return;
        }
        let bytes = packet.size_bytes();
        self.record(node, TraceEvent::Tx, &packet);
        self.log.count(packet.kind()).tx += 1;
        if !self.cfg.freeze_energy {
            let now = self.now();
            let charge = self.nodes[node.index()]
                .energy
                .charge_tx(bytes, &self.cfg.radio, now);
            if !charge.completed {
                self.on_death(node);
                self.drop_packet(node, &packet);
                return;
            }
        }
        let now = self.now();
        let arrive = now.after(tx_duration(bytes, &self.cfg.radio));
        let links: Vec<NodeId> = self.topo.links(node).to_vec();
        match packet.next_hop() {
            None => {
                for nb in links {
                    if self.alive(nb) {
                        self.queue.schedule(
                            arrive,
                            Event::Arrival {
                                node: nb,
                                from: node,
                                packet: packet.clone(),
                                sent_at: now,
                                attempt,
                                overheard: false,
                            },
                        );
                    }
                }
            }
            Some(next) => {
                if self.promiscuous() {
                    for &nb in links.iter().filter(|&&n| n != next) {
                        if self.alive(nb) {
                            self.queue.schedule(
                                arrive,
                                Event::Arrival {
                                    node: nb,
                                    from: node,
                                    packet: packet.clone(),
                                    sent_at: now,
                                    attempt,
                                    overheard: true,
                                },
                            );
                        }
                    }
                }
                if self.topo.linked(node, next) && self.alive(next) {
                    self.queue.schedule(
                        arrive,
                        Event::Arrival {
                            node: next,
                            from: node,
                            packet,
                            sent_at: now,
                            attempt,
                            overheard: false,
                        },
                    );
                } else {
                    self.arm_retransmit(node, packet, now, attempt);
                }
            }
        }
    }

    fn promiscuous(&self) -> bool {
        self.cfg.promiscuous_rx
    }

    fn arm_retransmit(&mut self, node: NodeId, packet: Packet, sent_at: SimTime, attempt: u32) {
        let at = sent_at.after(self.cfg.retransmit_timeout).max(self.now());
        self.queue.schedule(
            at,
            Event::RetransmitTimeout {
                node,
                packet,
                attempt,
            },
        );
    }

    fn on_arrival(
        &mut self,
        node: NodeId,
        from: NodeId,
        packet: Packet,
        sent_at: SimTime,
        attempt: u32,
        overheard: bool,
    ) {
        let unicast = packet.next_hop().is_some() && !overheard;
        if !self.alive(node) {
            if unicast {
                self.arm_retransmit(from, packet, sent_at, attempt);
            }
            return;
        }
        if !self.cfg.freeze_energy {
            let now = self.now();
            let charge = self.nodes[node.index()].energy.charge_rx(
                packet.size_bytes(),
                &self.cfg.radio,
                now,
            );
            if !charge.completed {
                self.on_death(node);
                if unicast {
                    self.arm_retransmit(from, packet, sent_at, attempt);
                }
                return;
            }
        }
        if overheard {
            return;
        }
        let packet = packet.advanced();
        self.record(node, TraceEvent::Rx, &packet);
        self.log.count(packet.kind()).rx += 1;
        match packet {
            Packet::Rreq(rreq) => self.on_rreq(node, rreq),
            Packet::Rrep(rrep) => self.on_rrep(node, rrep),
            Packet::Rerr(rerr) => self.on_rerr(node, rerr),
            Packet::LowEnergy(le) => self.on_low_energy(node, le),
            Packet::Data(data) => self.on_data(node, data),
            Packet::Ack(ack) => self.on_ack(node, ack),
        }
    }

    /// Protocol delay before `node` forwards a route-control packet.
    fn control_delay(&mut self, node: NodeId, kind: PacketKind) -> f64 {
        if self.cfg.zero_jitter {
            return 0.0;
        }
        match (self.cfg.protocol, kind) {
            (Protocol::Dsr, PacketKind::Rreq) => {
                self.rng.uniform_jitter(0.0, self.cfg.dsr_jitter_max)
            }
            (Protocol::Essdsr, PacketKind::Rreq) => {
                energy_jitter(self.nodes[node.index()].energy.residual(), &self.cfg.jitter)
            }
            (Protocol::Essdsr, PacketKind::Rrep) if self.cfg.rrep_energy_jitter => {
                energy_jitter(self.nodes[node.index()].energy.residual(), &self.cfg.jitter)
            }
            _ => 0.0,
        }
    }

    fn forward_after_delay(&mut self, node: NodeId, packet: Packet) {
        let delay = self.control_delay(node, packet.kind());
        if delay > 0.0 {
            self.queue
                .schedule_in(delay, Event::JitterExpiry { node, packet });
        } else {
            self.transmit(node, packet, 0);
        }
    }

    // ---- DSR ----------------------------------------------------------

    fn on_rreq(&mut self, node: NodeId, rreq: crate::dsr::RreqPacket) {
        let action = self.nodes[node.index()].dsr.handle_rreq(&rreq);
        match action {
            RreqAction::Drop(DropReason::Duplicate | DropReason::Loop) => {}
            RreqAction::Drop(DropReason::Excluded) => {
                self.drop_packet(node, &Packet::Rreq(rreq));
            }
            RreqAction::Reply(route) => {
                let at = route.position(node).expect("responder on route");
                let path = route.reversed_prefix(at).expect("responder past source");
                let rrep = Routed::new(
                    path,
                    RrepPacket {
                        request_id: rreq.request_id,
                        route,
                        responder: node,
                    },
                );
                self.transmit(node, Packet::Rrep(rrep), 0);
            }
            RreqAction::Forward(fwd) => self.forward_after_delay(node, Packet::Rreq(fwd)),
        }
    }

    fn on_rrep(&mut self, node: NodeId, rrep: Routed<RrepPacket>) {
        match self.nodes[node.index()].dsr.handle_rrep(&rrep) {
            RrepAction::Complete { route, .. } => self.on_route_discovered(node, route),
            RrepAction::Forward => self.forward_after_delay(node, Packet::Rrep(rrep)),
        }
    }

    fn on_rerr(&mut self, node: NodeId, rerr: Routed<RerrPacket>) {
        self.apply_route_error(node, &rerr.body);
        if rerr.at_tail() {
            self.on_source_error(node, rerr.body);
        } else {
            self.transmit(node, Packet::Rerr(rerr), 0);
        }
    }

    fn apply_route_error(&mut self, node: NodeId, err: &RerrPacket) {
        let st = &mut self.nodes[node.index()];
        if err.low_energy {
            st.dsr.cache.mark_low_energy(err.broken_to);
            st.dsr.cache.remove_through(err.broken_to);
        } else {
            st.dsr.cache.remove_link(err.broken_from, err.broken_to);
        }
    }

    fn on_link_failure(&mut self, node: NodeId, packet: Packet) {
        let next = packet.next_hop().expect("only unicasts time out");
        self.nodes[node.index()].dsr.cache.remove_link(node, next);
        self.drop_packet(node, &packet);
        let Packet::Data(data) = packet else {
            return;
        };
        let err = RerrPacket {
            broken_from: node,
            broken_to: next,
            original_sender: data.path.source(),
            low_energy: false,
        };
        if data.hop_index == 0 {
            self.on_source_error(node, err);
        } else if self.alive(node) {
            let back = data
                .path
                .reversed_prefix(data.hop_index)
                .expect("holder past the source");
            self.transmit(node, Packet::Rerr(Routed::new(back, err)), 0);
        }
    }

    fn on_data(&mut self, node: NodeId, data: Routed<Payload>) {
        self.note_relayed(node, data.body.flow, &data.path);
        if data.at_tail() {
            self.on_data_delivered(node, data);
        } else {
            self.maybe_emit_low_energy(node);
            self.transmit(node, Packet::Data(data), 0);
        }
    }

    fn on_data_delivered(&mut self, node: NodeId, data: Routed<Payload>) {
        let flow = data.body.flow;
        self.log.flows[flow].record_delivery(data.body.seq);
        let ack = Routed::new(
            data.path.reversed(),
            Payload {
                flow,
                seq: data.body.seq,
                bytes: self.flows[flow].spec.ack_bytes,
            },
        );
        self.maybe_emit_low_energy(node);
        self.transmit(node, Packet::Ack(ack), 0);
    }

    fn on_ack(&mut self, node: NodeId, ack: Routed<Payload>) {
        if ack.at_tail() {
            self.log.flows[ack.body.flow].acked += 1;
        } else {
            self.maybe_emit_low_energy(node);
            self.transmit(node, Packet::Ack(ack), 0);
        }
    }

    fn note_relayed(&mut self, node: NodeId, flow: usize, route: &SourceRoute) {
        let relayed = &mut self.nodes[node.index()].relayed;
        match relayed.iter_mut().find(|f| f.flow == flow) {
            Some(f) => {
                if f.route != *route {
                    f.route = route.clone();
                }
            }
            None => relayed.push(RelayedFlow {
                flow,
                route: route.clone(),
            }),
        }
    }

    // ---- ESSDSR -------------------------------------------------------

    /// Called whenever `node` is about to send or forward traffic.
    fn maybe_emit_low_energy(&mut self, node: NodeId) {
        if self.cfg.protocol != Protocol::Essdsr || !self.alive(node) {
            return;
        }
        let st = &mut self.nodes[node.index()];
        if let Some(pkt) = st
            .survival
            .emit_low_energy(node, &st.energy, self.cfg.threshold, true)
        {
            self.transmit(node, Packet::LowEnergy(pkt), 0);
        }
    }

    fn on_low_energy(&mut self, node: NodeId, pkt: LowEnergyPacket) {
        let st = &mut self.nodes[node.index()];
        let (errors, local) = handle_low_energy(&mut st.dsr, &pkt, &st.relayed);
        st.relayed.retain(|f| !f.route.has_intermediate(pkt.origin));
        for err in errors {
            self.transmit(node, Packet::Rerr(err), 0);
        }
        for flow in local {
            let err = RerrPacket {
                broken_from: node,
                broken_to: pkt.origin,
                original_sender: node,
                low_energy: true,
            };
            debug_assert_eq!(self.flows[flow].spec.source, node);
            self.on_source_error(node, err);
        }
    }

    // ---- flows --------------------------------------------------------

    fn on_tick(&mut self, id: usize) {
        if !self.flows[id].is_active() {
            return;
        }
        let source = self.flows[id].spec.source;
        if !self.alive(source) {
            self.flows[id].state = FlowState::Dead;
            self.flows[id].pending.clear();
            self.log.flow_events.push(FlowEvent {
                time: self.now().secs(),
                flow: id,
                kind: FlowEventKind::SourceDead,
            });
            return;
        }
        let seq = self.flows[id].take_seq();
        self.inject_data(id, seq);
        let interval = self.flows[id].spec.send_interval;
        self.queue.schedule_in(interval, Event::TrafficTick(id));
    }

    /// Sends `seq` if the flow has a route, otherwise queues it and makes
    /// sure a discovery is under way.
    fn inject_data(&mut self, id: usize, seq: u64) {
        let flow = &self.flows[id];
        let (source, dest) = (flow.spec.source, flow.spec.destination);
        if flow.state == FlowState::Sending {
            if let Some(route) = self.nodes[source.index()]
                .dsr
                .cache
                .select_route(dest)
                .cloned()
            {
                self.note_route(id, &route);
                self.send_data(id, seq, route);
                return;
            }
            self.flows[id].state = FlowState::Discovering;
            self.flows[id].discovery_attempts = 0;
            self.flows[id].current_request = None;
        }
        self.flows[id].pending.push_back(seq);
        if self.flows[id].current_request.is_none() {
            self.start_discovery(id);
        }
    }

    fn send_data(&mut self, id: usize, seq: u64, route: SourceRoute) {
        let source = route.source();
        self.log.flows[id].record_injection(seq);
        self.note_relayed(source, id, &route);
        let data = Routed::new(
            route,
            Payload {
                flow: id,
                seq,
                bytes: self.flows[id].spec.data_bytes,
            },
        );
        self.maybe_emit_low_energy(source);
        self.transmit(source, Packet::Data(data), 0);
    }

    fn note_route(&mut self, id: usize, route: &SourceRoute) {
        let used = &mut self.routes_used[id];
        if used.last().map(|(_, r)| r) != Some(route) {
            used.push((self.queue.now().secs(), route.clone()));
        }
    }

    fn start_discovery(&mut self, id: usize) {
        let flow = &mut self.flows[id];
        flow.state = FlowState::Discovering;
        flow.discovery_attempts += 1;
        let (source, dest, excluded) = (flow.spec.source, flow.spec.destination, flow.excluded);
        let rreq = self.nodes[source.index()]
            .dsr
            .initiate_route_discovery(dest, excluded);
        self.flows[id].current_request = Some(rreq.request_id);
        let request_id = rreq.request_id;
        self.transmit(source, Packet::Rreq(rreq), 0);
        self.queue.schedule_in(
            self.cfg.discovery_timeout,
            Event::DiscoveryTimeout {
                flow: id,
                request_id,
            },
        );
    }

    fn on_discovery_timeout(&mut self, id: usize, request_id: u32) {
        let flow = &self.flows[id];
        if flow.state != FlowState::Discovering || flow.current_request != Some(request_id) {
            return;
        }
        if flow.discovery_attempts < self.cfg.max_discovery_attempts {
            self.start_discovery(id);
            return;
        }
        let flow = &mut self.flows[id];
        flow.state = FlowState::Stalled;
        flow.current_request = None;
        let dropped = flow.pending.len() as u64;
        flow.pending.clear();
        self.log.count(PacketKind::Data).drop += dropped;
        self.log.flow_events.push(FlowEvent {
            time: self.now().secs(),
            flow: id,
            kind: FlowEventKind::Stalled,
        });
    }

    fn on_route_discovered(&mut self, node: NodeId, route: SourceRoute) {
        let dest = route.destination();
        for id in 0..self.flows.len() {
            let f = &self.flows[id];
            if f.spec.source != node
                || f.spec.destination != dest
                || f.state != FlowState::Discovering
            {
                continue;
            }
            let Some(best) = self.nodes[node.index()]
                .dsr
                .cache
                .select_route(dest)
                .cloned()
            else {
                continue;
            };
            let f = &mut self.flows[id];
            f.state = FlowState::Sending;
            f.discovery_attempts = 0;
            f.current_request = None;
            let pending: Vec<u64> = f.pending.drain(..).collect();
            self.note_route(id, &best);
            for seq in pending {
                self.send_data(id, seq, best.clone());
            }
        }
    }

    /// A route error (or local link failure, or neighbour low-energy notice)
    /// reached the source `node`.
    fn on_source_error(&mut self, node: NodeId, err: RerrPacket) {
        self.apply_route_error(node, &err);
        for id in 0..self.flows.len() {
            let f = &mut self.flows[id];
            if f.spec.source != node || !f.is_active() {
                continue;
            }
            if err.low_energy {
                if f.excluded == Some(err.broken_to) && f.state == FlowState::Discovering {
                    continue;
                }
                f.excluded = Some(err.broken_to);
                if f.state == FlowState::Sending {
                    // Rediscover with the culprit excluded instead of falling
                    // back on older cached routes.
                    f.state = FlowState::Discovering;
                    f.discovery_attempts = 0;
                    f.current_request = None;
                    self.start_discovery(id);
                }
            } else if f.state == FlowState::Sending
                && self.nodes[node.index()]
                    .dsr
                    .cache
                    .select_route(f.spec.destination)
                    .is_none()
            {
                f.state = FlowState::Discovering;
                f.discovery_attempts = 0;
                f.current_request = None;
                self.start_discovery(id);
            }
        }
    }
}
