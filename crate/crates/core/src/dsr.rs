//! Baseline DSR: packet formats, the route cache, duplicate suppression and
//! the per-node decisions taken on route requests and replies.
//!
//! Everything here is pure node-local logic. Timing, energy and delivery are
//! handled by [`crate::network`].

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::essdsr::LowEnergyPacket;
use crate::NodeId;

pub const DATA_BYTES: u32 = 1080;
pub const ACK_BYTES: u32 = 40;
pub const RREQ_BYTES: u32 = 64;
pub const RREP_BYTES: u32 = 64;
pub const RERR_BYTES: u32 = 40;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RouteError {
    #[error("route needs at least two hops, got {0}")]
    TooShort(usize),
    #[error("route visits node {0} twice")]
    Loop(NodeId),
}

/// Loop-free hop sequence from source to destination, both inclusive.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<NodeId>", into = "Vec<NodeId>")]
pub struct SourceRoute(Vec<NodeId>);

impl SourceRoute {
    pub fn new(hops: Vec<NodeId>) -> Result<Self, RouteError> {
        if hops.len() < 2 {
            return Err(RouteError::TooShort(hops.len()));
        }
        let mut seen = HashSet::with_capacity(hops.len());
        for &h in &hops {
            if !seen.insert(h) {
                return Err(RouteError::Loop(h));
            }
        }
        Ok(SourceRoute(hops))
    }

    pub fn hops(&self) -> &[NodeId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Number of transmissions needed to traverse the route.
    pub fn hop_count(&self) -> usize {
        self.0.len() - 1
    }

    pub fn source(&self) -> NodeId {
        self.0[0]
    }

    pub fn destination(&self) -> NodeId {
        *self.0.last().expect("non-empty route")
    }

    pub fn position(&self, node: NodeId) -> Option<usize> {
        self.0.iter().position(|&n| n == node)
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.0.contains(&node)
    }

    pub fn intermediates(&self) -> &[NodeId] {
        &self.0[1..self.0.len() - 1]
    }

    pub fn has_intermediate(&self, node: NodeId) -> bool {
        self.intermediates().contains(&node)
    }

    /// True if `a` and `b` are consecutive in either direction; links are
    /// symmetric.
    pub fn uses_link(&self, a: NodeId, b: NodeId) -> bool {
        self.0
            .windows(2)
            .any(|w| (w[0] == a && w[1] == b) || (w[0] == b && w[1] == a))
    }

    pub fn reversed(&self) -> SourceRoute {
        SourceRoute(self.0.iter().rev().copied().collect())
    }

    /// The part of the route starting at `node`, if `node` is on it and is
    /// not the destination.
    pub fn suffix_from(&self, node: NodeId) -> Option<SourceRoute> {
        let i = self.position(node)?;
        (i + 1 < self.0.len()).then(|| SourceRoute(self.0[i..].to_vec()))
    }

    /// `route[..=i]` reversed: the way back from hop `i` to the source.
    pub fn reversed_prefix(&self, i: usize) -> Option<SourceRoute> {
        (i >= 1 && i < self.0.len())
            .then(|| SourceRoute(self.0[..=i].iter().rev().copied().collect()))
    }
}

impl TryFrom<Vec<NodeId>> for SourceRoute {
    type Error = RouteError;

    fn try_from(hops: Vec<NodeId>) -> Result<Self, Self::Error> {
        SourceRoute::new(hops)
    }
}

impl From<SourceRoute> for Vec<NodeId> {
    fn from(r: SourceRoute) -> Self {
        r.0
    }
}

impl fmt::Display for SourceRoute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_hops(f, &self.0)
    }
}

pub(crate) fn write_hops(f: &mut impl fmt::Write, hops: &[NodeId]) -> fmt::Result {
    for (i, h) in hops.iter().enumerate() {
        if i > 0 {
            f.write_char('-')?;
        }
        write!(f, "{h}")?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RreqPacket {
    pub source: NodeId,
    pub destination: NodeId,
    pub request_id: u32,
    /// Nodes traversed so far, starting with `source`.
    pub route_record: Vec<NodeId>,
    /// Node that must not take part in this discovery (ESSDSR rediscovery).
    pub excluded: Option<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RrepPacket {
    pub request_id: u32,
    /// The discovered route, from the discovery's source to its destination.
    pub route: SourceRoute,
    pub responder: NodeId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RerrPacket {
    pub broken_from: NodeId,
    pub broken_to: NodeId,
    pub original_sender: NodeId,
    /// Set when the error reports a low-energy node rather than a dead link.
    pub low_energy: bool,
}

/// Application payload of DATA and ACK packets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Payload {
    pub flow: usize,
    pub seq: u64,
    pub bytes: u32,
}

/// A source-routed unicast packet. `path[hop_index]` is the node currently
/// holding it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Routed<T> {
    pub path: SourceRoute,
    pub hop_index: usize,
    pub body: T,
}

impl<T> Routed<T> {
    pub fn new(path: SourceRoute, body: T) -> Self {
        Routed {
            path,
            hop_index: 0,
            body,
        }
    }

    pub fn holder(&self) -> NodeId {
        self.path.hops()[self.hop_index]
    }

    pub fn next_hop(&self) -> Option<NodeId> {
        self.path.hops().get(self.hop_index + 1).copied()
    }

    pub fn at_tail(&self) -> bool {
        self.hop_index + 1 == self.path.len()
    }

    /// The packet as seen by the next hop.
    pub fn advanced(&self) -> Self
    where
        T: Clone,
    {
        assert!(!self.at_tail(), "packet already at its destination");
        Routed {
            path: self.path.clone(),
            hop_index: self.hop_index + 1,
            body: self.body.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PacketKind {
    Rreq,
    Rrep,
    Rerr,
    LowEnergy,
    Data,
    Ack,
}

impl PacketKind {
    pub const ALL: [PacketKind; 6] = [
        PacketKind::Rreq,
        PacketKind::Rrep,
        PacketKind::Rerr,
        PacketKind::LowEnergy,
        PacketKind::Data,
        PacketKind::Ack,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PacketKind::Rreq => "RREQ",
            PacketKind::Rrep => "RREP",
            PacketKind::Rerr => "RERR",
            PacketKind::LowEnergy => "LOW_ENERGY",
            PacketKind::Data => "DATA",
            PacketKind::Ack => "ACK",
        }
    }

    /// RREQ and RREP are the control packets subject to forwarding delay.
    pub fn is_route_control(self) -> bool {
        matches!(self, PacketKind::Rreq | PacketKind::Rrep)
    }
}

impl fmt::Display for PacketKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Packet {
    Rreq(RreqPacket),
    Rrep(Routed<RrepPacket>),
    Rerr(Routed<RerrPacket>),
    LowEnergy(LowEnergyPacket),
    Data(Routed<Payload>),
    Ack(Routed<Payload>),
}

impl Packet {
    pub fn kind(&self) -> PacketKind {
        match self {
            Packet::Rreq(_) => PacketKind::Rreq,
            Packet::Rrep(_) => PacketKind::Rrep,
            Packet::Rerr(_) => PacketKind::Rerr,
            Packet::LowEnergy(_) => PacketKind::LowEnergy,
            Packet::Data(_) => PacketKind::Data,
            Packet::Ack(_) => PacketKind::Ack,
        }
    }

    pub fn size_bytes(&self) -> u32 {
        match self {
            Packet::Rreq(_) => RREQ_BYTES,
            Packet::Rrep(_) => RREP_BYTES,
            Packet::Rerr(_) => RERR_BYTES,
            Packet::LowEnergy(_) => crate::essdsr::LOW_ENERGY_BYTES,
            Packet::Data(p) | Packet::Ack(p) => p.body.bytes,
        }
    }

    /// Next hop of a source-routed packet; `None` for broadcasts.
    pub fn next_hop(&self) -> Option<NodeId> {
        match self {
            Packet::Rreq(_) | Packet::LowEnergy(_) => None,
            Packet::Rrep(p) => p.next_hop(),
            Packet::Rerr(p) => p.next_hop(),
            Packet::Data(p) | Packet::Ack(p) => p.next_hop(),
        }
    }

    /// The packet as it arrives at its next hop. Broadcasts are unchanged.
    pub fn advanced(&self) -> Packet {
        match self {
            Packet::Rreq(_) | Packet::LowEnergy(_) => self.clone(),
            Packet::Rrep(p) => Packet::Rrep(p.advanced()),
            Packet::Rerr(p) => Packet::Rerr(p.advanced()),
            Packet::Data(p) => Packet::Data(p.advanced()),
            Packet::Ack(p) => Packet::Ack(p.advanced()),
        }
    }
}

/// Per-node store of full source routes, each starting at the owner.
///
/// Routes through nodes the owner knows to be low on energy are never
/// returned by [`RouteCache::select_route`].
#[derive(Debug, Clone)]
pub struct RouteCache {
    owner: NodeId,
    routes: Vec<SourceRoute>,
    low_energy: BTreeSet<NodeId>,
}

impl RouteCache {
    pub fn new(owner: NodeId) -> Self {
        RouteCache {
            owner,
            routes: Vec::new(),
            low_energy: BTreeSet::new(),
        }
    }

    pub fn owner(&self) -> NodeId {
        self.owner
    }

    pub fn routes(&self) -> &[SourceRoute] {
        &self.routes
    }

    pub fn len(&self) -> usize {
        self.routes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.routes.is_empty()
    }

    /// Stores `route` unless it is already present, does not start at the
    /// owner, or crosses a known low-energy node. Returns whether it was
    /// stored.
    pub fn insert(&mut self, route: SourceRoute) -> bool {
        if route.source() != self.owner
            || self.crosses_low_energy(&route)
            || self.routes.contains(&route)
        {
            return false;
        }
        self.routes.push(route);
        true
    }

    /// Minimum hop count among usable routes to `destination`; ties go to the
    /// earliest insertion.
    pub fn select_route(&self, destination: NodeId) -> Option<&SourceRoute> {
        self.routes
            .iter()
            .filter(|r| r.destination() == destination && !self.crosses_low_energy(r))
            .min_by_key(|r| r.hop_count())
    }

    /// Drops every route using the link between `a` and `b`. Returns the
    /// number removed.
    pub fn remove_link(&mut self, a: NodeId, b: NodeId) -> usize {
        let before = self.routes.len();
        self.routes.retain(|r| !r.uses_link(a, b));
        before - self.routes.len()
    }

    /// Drops every route relaying through `node`. Routes ending at `node`
    /// are kept.
    pub fn remove_through(&mut self, node: NodeId) -> usize {
        let before = self.routes.len();
        self.routes.retain(|r| !r.has_intermediate(node));
        before - self.routes.len()
    }

    pub fn mark_low_energy(&mut self, node: NodeId) {
        self.low_energy.insert(node);
    }

    pub fn is_low_energy(&self, node: NodeId) -> bool {
        self.low_energy.contains(&node)
    }

    pub fn low_energy_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.low_energy.iter().copied()
    }

    fn crosses_low_energy(&self, route: &SourceRoute) -> bool {
        route
            .intermediates()
            .iter()
            .any(|n| self.low_energy.contains(n))
    }
}

/// Free-function form of [`RouteCache::select_route`].
pub fn select_route(cache: &RouteCache, destination: NodeId) -> Option<SourceRoute> {
    cache.select_route(destination).cloned()
}

/// `(source, request_id)` pairs already processed by a node.
#[derive(Debug, Clone, Default)]
pub struct DedupTable {
    seen: HashSet<(NodeId, u32)>,
}

impl DedupTable {
    /// Records the pair; returns false if it had been seen before.
    pub fn insert(&mut self, source: NodeId, request_id: u32) -> bool {
        self.seen.insert((source, request_id))
    }

    pub fn contains(&self, source: NodeId, request_id: u32) -> bool {
        self.seen.contains(&(source, request_id))
    }

    pub fn len(&self) -> usize {
        self.seen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seen.is_empty()
    }
}

/// DSR state of one node.
#[derive(Debug, Clone)]
pub struct DsrNode {
    pub id: NodeId,
    pub cache: RouteCache,
    pub seen: DedupTable,
    next_request_id: u32,
    /// Answer RREQs from the route cache, not only at the destination.
    pub reply_from_cache: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropReason {
    Duplicate,
    Loop,
    Excluded,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RreqAction {
    Drop(DropReason),
    /// Send a reply carrying this route back along its reverse.
    Reply(SourceRoute),
    /// Re-broadcast this (extended) request.
    Forward(RreqPacket),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RrepAction {
    /// The reply reached the discovery's source; the route is now cached.
    Complete { route: SourceRoute, cached: bool },
    /// Relay one hop further toward the source.
    Forward,
}

impl DsrNode {
    pub fn new(id: NodeId) -> Self {
        DsrNode {
            id,
            cache: RouteCache::new(id),
            seen: DedupTable::default(),
            next_request_id: 0,
            reply_from_cache: false,
        }
    }

    pub fn next_request_id(&self) -> u32 {
        self.next_request_id
    }

    /// Builds a fresh RREQ for `destination` and marks it as seen locally.
    pub fn initiate_route_discovery(
        &mut self,
        destination: NodeId,
        excluded: Option<NodeId>,
    ) -> RreqPacket {
        let request_id = self.next_request_id;
        self.next_request_id += 1;
        self.seen.insert(self.id, request_id);
        RreqPacket {
            source: self.id,
            destination,
            request_id,
            route_record: vec![self.id],
            excluded,
        }
    }

    pub fn handle_rreq(&mut self, rreq: &RreqPacket) -> RreqAction {
        if rreq.excluded == Some(self.id) {
            return RreqAction::Drop(DropReason::Excluded);
        }
        if rreq.route_record.contains(&self.id) {
            return RreqAction::Drop(DropReason::Loop);
        }
        if !self.seen.insert(rreq.source, rreq.request_id) {
            return RreqAction::Drop(DropReason::Duplicate);
        }
        let mut record = rreq.route_record.clone();
        record.push(self.id);
        if rreq.destination == self.id {
            let route = SourceRoute::new(record).expect("route record is loop-free");
            return RreqAction::Reply(route);
        }
        if self.reply_from_cache {
            if let Some(cached) = self.cache.select_route(rreq.destination) {
                let tail = &cached.hops()[1..];
                if tail.iter().all(|n| !record.contains(n)) {
                    let mut full = record.clone();
                    full.extend_from_slice(tail);
                    return RreqAction::Reply(SourceRoute::new(full).expect("checked loop-free"));
                }
            }
        }
        RreqAction::Forward(RreqPacket {
            route_record: record,
            ..rreq.clone()
        })
    }

    /// Processes a reply held at `rrep.holder() == self.id`.
    pub fn handle_rrep(&mut self, rrep: &Routed<RrepPacket>) -> RrepAction {
        debug_assert_eq!(rrep.holder(), self.id);
        let route = &rrep.body.route;
        if route.source() == self.id {
            let cached = self.cache.insert(route.clone());
            return RrepAction::Complete {
                route: route.clone(),
                cached,
            };
        }
        if let Some(sub) = route.suffix_from(self.id) {
            self.cache.insert(sub);
        }
        RrepAction::Forward
    }
}
