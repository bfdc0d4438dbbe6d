//! Scenario files: the TOML schema, validation and the built-in default.
//!
//! ```toml
//! name = "example"
//! protocol = "essdsr"       # dsr | essdsr
//! horizon = 60.0            # seconds
//! seed = 1
//!
//! [area]                    # nodes must lie inside [0,width] x [0,height]
//! width = 300.0
//! height = 200.0
//!
//! [radio]                   # every key optional
//! tx_power = 1.43
//! rx_power = 0.925
//! sleep_power = 0.045
//! range = 250.0
//! bandwidth = 2000000.0
//!
//! [essdsr]
//! threshold_fraction = 0.2
//! [essdsr.jitter]
//! scale = 100.0
//! max_delay = 0.01
//! min_energy = 1.0
//!
//! [toggles]
//! intermediate_cache_reply = false
//! rrep_energy_jitter = true
//! promiscuous_rx = false
//!
//! [[nodes]]                 # ids must be 0..n-1, in any order
//! id = 0
//! x = 0.0
//! y = 0.0
//! energy = 20.0
//!
//! [[flows]]
//! source = 0
//! destination = 11
//! send_interval = 0.05      # optional
//! start = 0.0               # optional
//! ```

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::essdsr::{EnergyJitterParams, LowEnergyThreshold};
use crate::metrics::FlowSpec;
use crate::network::{RunResult, SimConfig, Simulation};
use crate::radio::{Position, RadioParams};
use crate::{NodeId, Protocol};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed scenario: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid `{key}`: {message}")]
    Invalid { key: String, message: String },
}

fn invalid(key: impl Into<String>, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        key: key.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Area {
    pub width: f64,
    pub height: f64,
}

impl Default for Area {
    fn default() -> Self {
        Area {
            width: 300.0,
            height: 200.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub id: NodeId,
    pub x: f64,
    pub y: f64,
    /// Initial charge in joules.
    pub energy: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EssdsrParams {
    #[serde(default)]
    pub threshold_fraction: LowEnergyThreshold,
    #[serde(default)]
    pub jitter: EnergyJitterParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Toggles {
    #[serde(default)]
    pub intermediate_cache_reply: bool,
    #[serde(default = "yes")]
    pub rrep_energy_jitter: bool,
    #[serde(default)]
    pub promiscuous_rx: bool,
}

fn yes() -> bool {
    true
}

impl Default for Toggles {
    fn default() -> Self {
        Toggles {
            intermediate_cache_reply: false,
            rrep_energy_jitter: true,
            promiscuous_rx: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    #[serde(default = "default_protocol")]
    pub protocol: Protocol,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub area: Area,
    #[serde(default)]
    pub radio: RadioParams,
    #[serde(default)]
    pub essdsr: EssdsrParams,
    #[serde(default)]
    pub toggles: Toggles,
    pub nodes: Vec<NodeSpec>,
    #[serde(default)]
    pub flows: Vec<FlowSpec>,
}

fn default_protocol() -> Protocol {
    Protocol::Essdsr
}

fn default_horizon() -> f64 {
    60.0
}

/// Positions of the built-in scenario, indexed by node id.
///
/// Node 0 and node 11 sit in opposite corners, 360 m apart. The only nodes
/// within range of both are 1 and 3, so every route crosses one of them and
/// the pair {1, 3} is the bottleneck. The remaining nodes cluster around the
/// source and only reach the destination through that pair.
const PAPER_DEFAULT_LAYOUT: [(f64, f64); 12] = [
    (0.0, 0.0),
    (150.0, 100.0),
    (0.0, 100.0),
    (100.0, 150.0),
    (100.0, 0.0),
    (0.0, 200.0),
    (50.0, 120.0),
    (60.0, 30.0),
    (130.0, 0.0),
    (30.0, 170.0),
    (70.0, 70.0),
    (300.0, 200.0),
];

impl Scenario {
    /// The built-in `paper-default` scenario: 12 nodes, even ids 20 J and
    /// odd ids 10 J, one flow from node 0 to node 11, 60 s. Every node in
    /// range pays receive energy for every frame it hears.
    pub fn paper_default() -> Self {
        let nodes = PAPER_DEFAULT_LAYOUT
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| NodeSpec {
                id: NodeId(i as u32),
                x,
                y,
                energy: if i % 2 == 0 { 20.0 } else { 10.0 },
            })
            .collect();
        Scenario {
            name: "paper-default".to_string(),
            protocol: Protocol::Essdsr,
            horizon: 60.0,
            seed: 1,
            area: Area::default(),
            radio: RadioParams::default(),
            essdsr: EssdsrParams::default(),
            toggles: Toggles {
                promiscuous_rx: true,
                ..Toggles::default()
            },
            nodes,
            flows: vec![FlowSpec::new(NodeId(0), NodeId(11))],
        }
    }

    /// Looks up a built-in scenario by name.
    pub fn builtin(name: &str) -> Option<Self> {
        (name == "paper-default").then(Self::paper_default)
    }

    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = toml::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    /// Loads a scenario file, or a built-in scenario if `path` names one.
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        if let Some(s) = path.to_str().and_then(Self::builtin) {
            return Ok(s);
        }
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes to TOML")
    }

    /// SHA-256 of the canonical TOML form.
    pub fn digest(&self) -> String {
        Sha256::digest(self.to_toml().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        positive("horizon", self.horizon)?;
        positive("area.width", self.area.width)?;
        positive("area.height", self.area.height)?;
        let r = &self.radio;
        positive("radio.tx_power", r.tx_power)?;
        positive("radio.rx_power", r.rx_power)?;
        positive("radio.sleep_power", r.sleep_power)?;
        positive("radio.range", r.range)?;
        positive("radio.bandwidth", r.bandwidth)?;
        let j = &self.essdsr.jitter;
        positive("essdsr.jitter.scale", j.scale)?;
        positive("essdsr.jitter.max_delay", j.max_delay)?;
        positive("essdsr.jitter.min_energy", j.min_energy)?;
        if !j.is_consistent() {
            return Err(invalid(
                "essdsr.jitter",
                "max_delay must equal 1/(scale*min_energy)",
            ));
        }

        if self.nodes.is_empty() {
            return Err(invalid("nodes", "at least one node is required"));
        }
        let mut ids = BTreeSet::new();
        for n in &self.nodes {
            if !ids.insert(n.id) {
                return Err(invalid("nodes.id", format!("duplicate node id {}", n.id)));
            }
            positive(&format!("nodes[{}].energy", n.id), n.energy)?;
            let inside =
                (0.0..=self.area.width).contains(&n.x) && (0.0..=self.area.height).contains(&n.y);
            if !inside {
                return Err(invalid(
                    format!("nodes[{}].x/y", n.id),
                    format!("({}, {}) lies outside the area", n.x, n.y),
                ));
            }
        }
        let n = self.nodes.len() as u32;
        if let Some(missing) = (0..n).find(|i| !ids.contains(&NodeId(*i))) {
            return Err(invalid(
                "nodes.id",
                format!("ids must be 0..{}; {} is missing", n - 1, missing),
            ));
        }

        for (i, f) in self.flows.iter().enumerate() {
            for (key, id) in [("source", f.source), ("destination", f.destination)] {
                if id.0 >= n {
                    return Err(invalid(
                        format!("flows[{i}].{key}"),
                        format!("unknown node {id}"),
                    ));
                }
            }
            if f.source == f.destination {
                return Err(invalid(
                    format!("flows[{i}].destination"),
                    "source and destination coincide",
                ));
            }
            positive(&format!("flows[{i}].send_interval"), f.send_interval)?;
            if !(f.start.is_finite() && f.start >= 0.0) {
                return Err(invalid(format!("flows[{i}].start"), "must be >= 0"));
            }
            if f.data_bytes == 0 || f.ack_bytes == 0 {
                return Err(invalid(format!("flows[{i}]"), "packet sizes must be > 0"));
            }
        }
        Ok(())
    }

    /// Node positions and energies ordered by id.
    pub fn layout(&self) -> (Vec<Position>, Vec<f64>) {
        let mut nodes = self.nodes.clone();
        nodes.sort_by_key(|n| n.id);
        nodes
            .iter()
            .map(|n| (Position::new(n.x, n.y), n.energy))
            .unzip()
    }

    pub fn sim_config(&self, protocol: Protocol) -> SimConfig {
        let mut cfg = SimConfig::new(protocol);
        cfg.radio = self.radio;
        cfg.jitter = self.essdsr.jitter;
        cfg.threshold = self.essdsr.threshold_fraction;
        cfg.horizon = self.horizon;
        cfg.seed = self.seed;
        cfg.intermediate_cache_reply = self.toggles.intermediate_cache_reply;
        cfg.rrep_energy_jitter = self.toggles.rrep_energy_jitter;
        cfg.promiscuous_rx = self.toggles.promiscuous_rx;
        cfg
    }

    pub fn simulation(&self, protocol: Protocol) -> Simulation {
        let (positions, energies) = self.layout();
        Simulation::new(
            self.sim_config(protocol),
            positions,
            &energies,
            self.flows.clone(),
        )
    }

    /// Runs the scenario under its own protocol.
    pub fn run(&self) -> RunResult {
        self.simulation(self.protocol).run()
    }

    /// Runs both protocols with the same seed, concurrently.
    pub fn run_both(&self) -> (RunResult, RunResult) {
        std::thread::scope(|s| {
            let dsr = s.spawn(|| self.simulation(Protocol::Dsr).run());
            let ess = self.simulation(Protocol::Essdsr).run();
            (dsr.join().expect("DSR run panicked"), ess)
        })
    }
}

fn positive(key: &str, v: f64) -> Result<(), ScenarioError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(key, format!("must be a positive number, got {v}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_default_matches_setup() {
        let s = Scenario::paper_default();
        s.validate().unwrap();
        assert_eq!(s.nodes.len(), 12);
        assert_eq!((s.area.width, s.area.height), (300.0, 200.0));
        assert_eq!(s.horizon, 60.0);
        for n in &s.nodes {
            let want = if n.id.0 % 2 == 0 { 20.0 } else { 10.0 };
            assert_eq!(n.energy, want);
        }
        assert_eq!(s.flows[0].source, NodeId(0));
        assert_eq!(s.flows[0].destination, NodeId(11));
        assert_eq!(s.flows[0].send_interval, 0.05);
        assert_eq!(s.essdsr.threshold_fraction.fraction(), 0.2);
    }

    #[test]
    fn paper_default_endpoints_are_multi_hop() {
        let s = Scenario::paper_default();
        let (pos, _) = s.layout();
        assert!(pos[0].distance(&pos[11]) > s.radio.range);
        let common: Vec<usize> = (1..11)
            .filter(|&i| {
                pos[i].distance(&pos[0]) <= s.radio.range
                    && pos[i].distance(&pos[11]) <= s.radio.range
            })
            .collect();
        assert_eq!(common, [1, 3]);
        let dest_links: Vec<usize> = (0..11)
            .filter(|&i| pos[i].distance(&pos[11]) <= s.radio.range)
            .collect();
        assert_eq!(dest_links, [1, 3]);
    }

    #[test]
    fn duplicate_id_is_named() {
        let text = r#"
            [[nodes]]
            id = 0
            x = 0.0
            y = 0.0
            energy = 1.0
            [[nodes]]
            id = 0
            x = 10.0
            y = 0.0
            energy = 1.0
        "#;
        let err = Scenario::from_toml(text).unwrap_err().to_string();
        assert!(err.contains("duplicate node id 0"), "{err}");
    }

    #[test]
    fn omitted_radio_block_gets_defaults() {
        let text = r#"
            [[nodes]]
            id = 0
            x = 0.0
            y = 0.0
            energy = 5.0
        "#;
        let s = Scenario::from_toml(text).unwrap();
        assert_eq!(s.radio, RadioParams::default());
        assert_eq!(s.radio.tx_power, 1.43);
        assert_eq!(s.radio.rx_power, 0.925);
        assert_eq!(s.radio.sleep_power, 0.045);
        assert_eq!(s.radio.range, 250.0);
    }

    #[test]
    fn bad_energy_names_key() {
        let mut s = Scenario::paper_default();
        s.nodes[3].energy = 0.0;
        let err = s.validate().unwrap_err().to_string();
        assert!(err.contains("nodes[3].energy"), "{err}");
    }

    #[test]
    fn unknown_key_is_rejected() {
        let mut text = Scenario::paper_default().to_toml();
        text = text.replace("[radio]", "[radio]\nwattage = 3.0");
        let err = Scenario::from_toml(&text).unwrap_err().to_string();
        assert!(err.contains("wattage"), "{err}");
    }

    #[test]
    fn round_trips_through_toml() {
        let s = Scenario::paper_default();
        let back = Scenario::from_toml(&s.to_toml()).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.digest(), s.digest());
    }
}
