//! Disc connectivity model and per-node battery accounting.
//!
//! Propagation is reduced to a fixed-radius disc: two nodes are linked iff
//! their distance is at most the transmission range. Links are symmetric.

use serde::{Deserialize, Serialize};

use crate::sim::SimTime;
use crate::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn new(x: f64, y: f64) -> Self {
        Position { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadioParams {
    /// Watts drawn while transmitting.
    #[serde(default = "RadioParams::default_tx_power")]
    pub tx_power: f64,
    /// Watts drawn while receiving.
    #[serde(default = "RadioParams::default_rx_power")]
    pub rx_power: f64,
    /// Watts drawn continuously by a live node.
    #[serde(default = "RadioParams::default_sleep_power")]
    pub sleep_power: f64,
    /// Meters.
    #[serde(default = "RadioParams::default_range")]
    pub range: f64,
    /// Bits per second.
    #[serde(default = "RadioParams::default_bandwidth")]
    pub bandwidth: f64,
}

impl RadioParams {
    fn default_tx_power() -> f64 {
        1.43
    }
    fn default_rx_power() -> f64 {
        0.925
    }
    fn default_sleep_power() -> f64 {
        0.045
    }
    fn default_range() -> f64 {
        250.0
    }
    fn default_bandwidth() -> f64 {
        2.0e6
    }
}

impl Default for RadioParams {
    fn default() -> Self {
        RadioParams {
            tx_power: Self::default_tx_power(),
            rx_power: Self::default_rx_power(),
            sleep_power: Self::default_sleep_power(),
            range: Self::default_range(),
            bandwidth: Self::default_bandwidth(),
        }
    }
}

/// Inclusive range check: a pair exactly `range` apart is connected.
pub fn in_range(a: &Position, b: &Position, params: &RadioParams) -> bool {
    a.distance(b) <= params.range
}

/// Airtime of a `bytes`-long frame.
pub fn tx_duration(bytes: u32, params: &RadioParams) -> f64 {
    assert!(bytes > 0, "zero-length packet");
    f64::from(bytes) * 8.0 / params.bandwidth
}

/// Energy drawn per category; used to check conservation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergySpent {
    pub tx: f64,
    pub rx: f64,
    pub idle: f64,
}

impl EnergySpent {
    pub fn total(&self) -> f64 {
        self.tx + self.rx + self.idle
    }
}

/// Result of a tx or rx charge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Charge {
    pub consumed: f64,
    /// False when the battery ran out during the operation.
    pub completed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyAccount {
    initial: f64,
    residual: f64,
    last_update: SimTime,
    dead_since: Option<SimTime>,
    spent: EnergySpent,
}

impl EnergyAccount {
    pub fn new(initial: f64) -> Self {
        assert!(initial > 0.0, "initial energy must be positive");
        EnergyAccount {
            initial,
            residual: initial,
            last_update: SimTime::ZERO,
            dead_since: None,
            spent: EnergySpent::default(),
        }
    }

    pub fn initial(&self) -> f64 {
        self.initial
    }

    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn last_update(&self) -> SimTime {
        self.last_update
    }

    pub fn dead_since(&self) -> Option<SimTime> {
        self.dead_since
    }

    pub fn is_alive(&self) -> bool {
        self.dead_since.is_none()
    }

    pub fn spent(&self) -> EnergySpent {
        self.spent
    }

    /// Charges idle drain over `[from, to]`. A node that runs dry inside the
    /// interval dies at exactly `from + residual / sleep_power`.
    pub fn charge_idle(&mut self, from: SimTime, to: SimTime, params: &RadioParams) -> f64 {
        assert!(from <= to, "idle interval runs backwards");
        self.last_update = self.last_update.max(to);
        if !self.is_alive() || from == to {
            return 0.0;
        }
        let cost = params.sleep_power * (to.secs() - from.secs());
        if cost >= self.residual {
            let consumed = self.residual;
            self.dead_since = Some(SimTime::new(from.secs() + consumed / params.sleep_power));
            self.residual = 0.0;
            self.spent.idle += consumed;
            consumed
        } else {
            self.residual -= cost;
            self.spent.idle += cost;
            cost
        }
    }

    /// Brings the idle drain up to `now`.
    pub fn settle(&mut self, now: SimTime, params: &RadioParams) -> f64 {
        if now <= self.last_update {
            return 0.0;
        }
        self.charge_idle(self.last_update, now, params)
    }

    pub fn charge_tx(&mut self, bytes: u32, params: &RadioParams, now: SimTime) -> Charge {
        let cost = params.tx_power * tx_duration(bytes, params);
        let charge = self.draw(cost, now, params);
        self.spent.tx += charge.consumed;
        charge
    }

    pub fn charge_rx(&mut self, bytes: u32, params: &RadioParams, now: SimTime) -> Charge {
        let cost = params.rx_power * tx_duration(bytes, params);
        let charge = self.draw(cost, now, params);
        self.spent.rx += charge.consumed;
        charge
    }

    fn draw(&mut self, cost: f64, now: SimTime, params: &RadioParams) -> Charge {
        self.settle(now, params);
        assert!(self.is_alive(), "charging a dead node");
        if cost >= self.residual {
            let consumed = self.residual;
            self.residual = 0.0;
            self.dead_since = Some(now);
            Charge {
                consumed,
                completed: false,
            }
        } else {
            self.residual -= cost;
            Charge {
                consumed: cost,
                completed: true,
            }
        }
    }
}

/// Static connectivity graph over node positions.
#[derive(Debug, Clone)]
pub struct Topology {
    positions: Vec<Position>,
    adjacency: Vec<Vec<NodeId>>,
}

impl Topology {
    pub fn new(positions: Vec<Position>, params: &RadioParams) -> Self {
        let adjacency = positions
            .iter()
            .enumerate()
            .map(|(i, a)| {
                positions
                    .iter()
                    .enumerate()
                    .filter(|&(j, b)| j != i && in_range(a, b, params))
                    .map(|(j, _)| NodeId::from(j))
                    .collect()
            })
            .collect();
        Topology {
            positions,
            adjacency,
        }
    }

    /// Builds a topology straight from an adjacency list (used by tests).
    pub fn from_adjacency(adjacency: Vec<Vec<NodeId>>) -> Self {
        let positions = vec![Position::new(0.0, 0.0); adjacency.len()];
        Topology {
            positions,
            adjacency,
        }
    }

    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    pub fn position(&self, node: NodeId) -> Position {
        self.positions[node.index()]
    }

    /// Every node in range of `node`, alive or not.
    pub fn links(&self, node: NodeId) -> &[NodeId] {
        &self.adjacency[node.index()]
    }

    pub fn linked(&self, a: NodeId, b: NodeId) -> bool {
        self.adjacency[a.index()].contains(&b)
    }

    /// Alive nodes in range of `node`, excluding `node` itself.
    pub fn neighbors(&self, node: NodeId, alive: impl Fn(NodeId) -> bool) -> Vec<NodeId> {
        self.links(node)
            .iter()
            .copied()
            .filter(|&n| alive(n))
            .collect()
    }
}
