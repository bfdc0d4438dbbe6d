//! Energy saving and survival extensions to DSR.
//!
//! Two mechanisms sit on top of [`crate::dsr`]:
//!
//! * RREQ and RREP forwarding is delayed by `min(max_delay, 1 / (scale * E))`
//!   where `E` is the forwarder's residual energy, so requests travelling
//!   through well-charged nodes reach the destination first and win the
//!   reply.
//! * A node whose residual energy falls to a fraction of its initial energy
//!   while it still has traffic to carry broadcasts a one-hop LOW_ENERGY
//!   packet. Neighbours stop routing through it and report it to the sources
//!   of flows they relay, which then rediscover a route that avoids it.

use serde::{Deserialize, Serialize};

use crate::dsr::{DsrNode, RerrPacket, Routed, SourceRoute};
use crate::radio::EnergyAccount;
use crate::{NodeId, Protocol};

pub const LOW_ENERGY_BYTES: u32 = 40;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyJitterParams {
    /// Per joule-second; the `100` of `1 / (100 * E)`.
    #[serde(default = "EnergyJitterParams::default_scale")]
    pub scale: f64,
    /// Seconds.
    #[serde(default = "EnergyJitterParams::default_max_delay")]
    pub max_delay: f64,
    /// Joules at and below which the delay saturates.
    #[serde(default = "EnergyJitterParams::default_min_energy")]
    pub min_energy: f64,
}

impl EnergyJitterParams {
    fn default_scale() -> f64 {
        100.0
    }
    fn default_max_delay() -> f64 {
        0.01
    }
    fn default_min_energy() -> f64 {
        1.0
    }

    /// The three constants must satisfy `1 / (scale * min_energy) == max_delay`.
    pub fn is_consistent(&self) -> bool {
        self.scale > 0.0
            && self.max_delay > 0.0
            && self.min_energy > 0.0
            && (1.0 / (self.scale * self.min_energy) - self.max_delay).abs()
                <= 1e-12 * self.max_delay
    }
}

impl Default for EnergyJitterParams {
    fn default() -> Self {
        EnergyJitterParams {
            scale: Self::default_scale(),
            max_delay: Self::default_max_delay(),
            min_energy: Self::default_min_energy(),
        }
    }
}

/// Forwarding delay for a node holding `residual` joules.
pub fn energy_jitter(residual: f64, params: &EnergyJitterParams) -> f64 {
    assert!(residual > 0.0, "energy jitter requested for a drained node");
    if residual <= params.min_energy {
        return params.max_delay;
    }
    (1.0 / (params.scale * residual)).min(params.max_delay)
}

/// Fraction of initial energy at or below which a node counts as low.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct LowEnergyThreshold(f64);

impl LowEnergyThreshold {
    pub fn new(fraction: f64) -> Option<Self> {
        (fraction > 0.0 && fraction < 1.0).then_some(LowEnergyThreshold(fraction))
    }

    pub fn fraction(self) -> f64 {
        self.0
    }
}

impl Default for LowEnergyThreshold {
    fn default() -> Self {
        LowEnergyThreshold(0.2)
    }
}

impl TryFrom<f64> for LowEnergyThreshold {
    type Error = String;

    fn try_from(v: f64) -> Result<Self, Self::Error> {
        LowEnergyThreshold::new(v).ok_or_else(|| format!("threshold fraction {v} not in (0, 1)"))
    }
}

impl From<LowEnergyThreshold> for f64 {
    fn from(t: LowEnergyThreshold) -> f64 {
        t.0
    }
}

pub fn check_low_energy(acct: &EnergyAccount, threshold: LowEnergyThreshold) -> bool {
    acct.residual() <= threshold.fraction() * acct.initial()
}

/// One-hop survival broadcast. The flag is always set on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LowEnergyPacket {
    pub origin: NodeId,
    pub low_energy: bool,
}

impl LowEnergyPacket {
    pub fn new(origin: NodeId) -> Self {
        LowEnergyPacket {
            origin,
            low_energy: true,
        }
    }
}

/// Tracks the once-per-run survival broadcast of a node.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SurvivalState {
    emitted: bool,
}

impl SurvivalState {
    pub fn emitted(&self) -> bool {
        self.emitted
    }

    /// Returns the broadcast to send if the node is low, has traffic and has
    /// not announced itself yet.
    pub fn emit_low_energy(
        &mut self,
        node: NodeId,
        acct: &EnergyAccount,
        threshold: LowEnergyThreshold,
        has_traffic: bool,
    ) -> Option<LowEnergyPacket> {
        assert!(acct.is_alive(), "dead node cannot emit");
        if self.emitted || !has_traffic || !check_low_energy(acct, threshold) {
            return None;
        }
        self.emitted = true;
        Some(LowEnergyPacket::new(node))
    }
}

/// A flow the node has recently relayed, with the route it was using.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelayedFlow {
    pub flow: usize,
    pub route: SourceRoute,
}

/// Applies a neighbour's LOW_ENERGY broadcast at `node`: marks the origin,
/// prunes cached routes relaying through it, and returns one RERR per relayed
/// flow whose route relays through the origin. Each RERR travels to the flow
/// source along the reversed route prefix, which for a node downstream of the
/// origin still passes the origin itself. Flows sourced at `node` come back
/// as the second element so the caller can react locally.
pub fn handle_low_energy(
    node: &mut DsrNode,
    pkt: &LowEnergyPacket,
    flows: &[RelayedFlow],
) -> (Vec<Routed<RerrPacket>>, Vec<usize>) {
    let origin = pkt.origin;
    node.cache.mark_low_energy(origin);
    node.cache.remove_through(origin);
    let mut errors = Vec::new();
    let mut local = Vec::new();
    for f in flows {
        if !f.route.has_intermediate(origin) {
            continue;
        }
        let Some(me) = f.route.position(node.id) else {
            continue;
        };
        if me == 0 {
            local.push(f.flow);
            continue;
        }
        let back = f
            .route
            .reversed_prefix(me)
            .expect("node is past the source");
        errors.push(Routed::new(
            back,
            RerrPacket {
                broken_from: node.id,
                broken_to: origin,
                original_sender: f.route.source(),
                low_energy: true,
            },
        ));
    }
    (errors, local)
}

/// Protocol delay applied before a node forwards a packet of `kind`.
///
/// Only ESSDSR delays are computed here; DSR's uniform RREQ jitter comes from
/// the simulation's random stream.
pub fn essdsr_control_delay(
    residual: f64,
    kind: crate::dsr::PacketKind,
    params: &EnergyJitterParams,
    rrep_jitter: bool,
) -> f64 {
    use crate::dsr::PacketKind;
    match kind {
        PacketKind::Rreq => energy_jitter(residual, params),
        PacketKind::Rrep if rrep_jitter => energy_jitter(residual, params),
        _ => 0.0,
    }
}

pub fn uses_energy_jitter(protocol: Protocol) -> bool {
    protocol == Protocol::Essdsr
}
