//! JSON run and comparison reports, and writing a run's files to disk.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::metrics::{KindCounters, NetworkLifetime};
use crate::network::RunResult;
use crate::scenario::Scenario;
use crate::trace;
use crate::{NodeId, Protocol};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeReport {
    pub node: NodeId,
    pub initial_energy: f64,
    pub final_residual: f64,
    pub death_time: Option<f64>,
    pub tx_energy: f64,
    pub rx_energy: f64,
    pub idle_energy: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowReport {
    pub flow: usize,
    pub source: NodeId,
    pub destination: NodeId,
    pub injected: u64,
    pub delivered: u64,
    pub acked: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub scenario_digest: String,
    pub protocol: Protocol,
    pub seed: u64,
    pub horizon: f64,
    pub network_lifetime: NetworkLifetime,
    /// First time a flow gave up on route discovery, if any.
    pub first_stall: Option<f64>,
    pub nodes: Vec<NodeReport>,
    pub flows: Vec<FlowReport>,
    pub packets: BTreeMap<String, KindCounters>,
}

impl RunReport {
    pub fn new(scenario: &Scenario, result: &RunResult) -> Self {
        let nodes = (0..result.initial_energy.len())
            .map(|i| {
                let node = NodeId::from(i);
                let spent = result.spent[i];
                NodeReport {
                    node,
                    initial_energy: result.initial_energy[i],
                    final_residual: result.final_residual[i],
                    death_time: result
                        .log
                        .deaths
                        .iter()
                        .find(|d| d.node == node)
                        .map(|d| d.time),
                    tx_energy: spent.tx,
                    rx_energy: spent.rx,
                    idle_energy: spent.idle,
                }
            })
            .collect();
        let flows = scenario
            .flows
            .iter()
            .zip(&result.log.flows)
            .enumerate()
            .map(|(flow, (spec, stats))| FlowReport {
                flow,
                source: spec.source,
                destination: spec.destination,
                injected: stats.injected,
                delivered: stats.delivered,
                acked: stats.acked,
            })
            .collect();
        RunReport {
            scenario: scenario.name.clone(),
            scenario_digest: scenario.digest(),
            protocol: result.protocol,
            seed: result.seed,
            horizon: result.horizon,
            network_lifetime: result.lifetime,
            first_stall: result.log.first_stall(),
            nodes,
            flows,
            packets: result
                .log
                .counters
                .iter()
                .map(|(k, c)| (k.name().to_string(), *c))
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualDelta {
    pub node: NodeId,
    pub dsr: f64,
    pub essdsr: f64,
    /// `essdsr - dsr`.
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub dsr: RunReport,
    pub essdsr: RunReport,
    /// `100 * (L_essdsr - L_dsr) / L_dsr`.
    pub lifetime_improvement_percent: f64,
    pub residual_deltas: Vec<ResidualDelta>,
}

/// Relative lifetime gain of `essdsr` over `dsr`, in percent.
pub fn improvement_percent(dsr: f64, essdsr: f64) -> f64 {
    100.0 * (essdsr - dsr) / dsr
}

impl Comparison {
    pub fn new(dsr: RunReport, essdsr: RunReport) -> Self {
        let residual_deltas = dsr
            .nodes
            .iter()
            .zip(&essdsr.nodes)
            .map(|(d, e)| ResidualDelta {
                node: d.node,
                dsr: d.final_residual,
                essdsr: e.final_residual,
                delta: e.final_residual - d.final_residual,
            })
            .collect();
        Comparison {
            lifetime_improvement_percent: improvement_percent(
                dsr.network_lifetime.value,
                essdsr.network_lifetime.value,
            ),
            dsr,
            essdsr,
            residual_deltas,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("comparison serializes")
    }

    /// Plain-text summary for the terminal.
    pub fn summary(&self) -> String {
        let mut out = format!(
            "lifetime  dsr {:.3} s ({:?})  essdsr {:.3} s ({:?})  improvement {:.2}%\n",
            self.dsr.network_lifetime.value,
            self.dsr.network_lifetime.cause,
            self.essdsr.network_lifetime.value,
            self.essdsr.network_lifetime.cause,
            self.lifetime_improvement_percent
        );
        out.push_str("node  dsr_residual  essdsr_residual  delta\n");
        for d in &self.residual_deltas {
            out.push_str(&format!(
                "{:>4}  {:>12.4}  {:>15.4}  {:>+8.4}\n",
                d.node, d.dsr, d.essdsr, d.delta
            ));
        }
        out
    }
}

/// Writes `report.json`, `trace.csv`, `energy.csv` and `deaths.csv` into `dir`.
pub fn write_run(dir: &Path, report: &RunReport, result: &RunResult) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("report.json"), report.to_json() + "\n")?;
    fs::write(dir.join("trace.csv"), trace::render(&result.trace))?;
    fs::write(dir.join("energy.csv"), result.log.energy_csv())?;
    fs::write(dir.join("deaths.csv"), result.log.deaths_csv())?;
    Ok(())
}

/// Writes each protocol's run into its own subdirectory plus `compare.json`.
pub fn write_comparison(
    dir: &Path,
    cmp: &Comparison,
    dsr: &RunResult,
    essdsr: &RunResult,
) -> io::Result<()> {
    write_run(&dir.join("dsr"), &cmp.dsr, dsr)?;
    write_run(&dir.join("essdsr"), &cmp.essdsr, essdsr)?;
    fs::write(dir.join("compare.json"), cmp.to_json() + "\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn improvement_arithmetic() {
        let p = improvement_percent(31.016, 49.831);
        assert!((p - 60.66).abs() < 0.005, "{p}");
        assert_eq!(improvement_percent(10.0, 10.0), 0.0);
    }
}
