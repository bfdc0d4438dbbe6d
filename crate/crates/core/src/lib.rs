//! Packet-level discrete-event simulation of Dynamic Source Routing (DSR) and
//! of its energy saving and survival variant (ESSDSR) on static multi-hop
//! wireless networks.
//!
//! The crate is organised bottom-up:
//!
//! * [`sim`] — event queue, simulation clock and the seeded random stream.
//! * [`radio`] — disc connectivity and battery accounting.
//! * [`dsr`] — packets, route cache and the per-node DSR decisions.
//! * [`essdsr`] — residual-energy forwarding delay and the low-energy
//!   survival mechanism.
//! * [`network`] — the simulator that wires nodes, radio and protocols
//!   together and drives them from the event queue.
//! * [`metrics`] — flows, energy traces and lifetime computations.
//! * [`scenario`] and [`report`] — scenario files, run orchestration and the
//!   emitted artifacts.

use std::fmt;

use serde::{Deserialize, Serialize};

pub mod dsr;
pub mod essdsr;
pub mod metrics;
pub mod network;
pub mod radio;
pub mod report;
pub mod scenario;
pub mod sim;
pub mod trace;

/// Identifier of a node; also its index in the node table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for NodeId {
    fn from(i: usize) -> Self {
        NodeId(u32::try_from(i).expect("node index overflow"))
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Routing protocol run by every node of a simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Dsr,
    Essdsr,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::Dsr => "dsr",
            Protocol::Essdsr => "essdsr",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "dsr" => Ok(Protocol::Dsr),
            "essdsr" => Ok(Protocol::Essdsr),
            other => Err(format!(
                "unknown protocol `{other}` (expected dsr or essdsr)"
            )),
        }
    }
}

pub use network::{SimConfig, Simulation};
pub use radio::{Position, RadioParams};
pub use scenario::Scenario;
pub use sim::SimTime;
