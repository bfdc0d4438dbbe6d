//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed. Tolerances and budgets are pinned below.

use std::collections::{BTreeSet, VecDeque};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use essdsr::dsr::{Packet, PacketKind, RREQ_BYTES};
use essdsr::essdsr::{energy_jitter, EnergyJitterParams};
use essdsr::metrics::{FlowSpec, LifetimeCause};
use essdsr::network::RunResult;
use essdsr::radio::{tx_duration, Position, RadioParams, Topology};
use essdsr::scenario::NodeSpec;
use essdsr::trace::TraceEvent;
use essdsr::{NodeId, Protocol, Scenario, SimConfig, Simulation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const JITTER_TOLERANCE: f64 = 1e-12;
const CONSERVATION_RELATIVE_TOLERANCE: f64 = 1e-9;
const LIFETIME_SEEDS: std::ops::RangeInclusive<u64> = 1..=10;
const MIN_MEDIAN_IMPROVEMENT_PERCENT: f64 = 30.0;
const DOMINANCE_SEED: u64 = 1;
const RANDOM_GRAPHS: usize = 50;
const MAX_GRAPH_NODES: usize = 8;
const LIFETIME_SCENARIOS: usize = 20;
const MAX_SCENARIO_NODES: usize = 12;
const DELAY_TIE: f64 = 1e-12;

const BUDGET_LIFETIME: Duration = Duration::from_secs(10);
const BUDGET_DOMINANCE: Duration = Duration::from_secs(2);
const BUDGET_MIN_HOP: Duration = Duration::from_secs(5);
const BUDGET_DELAY_RACE: Duration = Duration::from_secs(10);
const BUDGET_SURVIVAL: Duration = Duration::from_secs(2);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(budget: Duration, started: Instant, mut o: Outcome) -> Outcome {
    let took = started.elapsed();
    o.detail = format!("{} [{:.2?}, budget {:?}]", o.detail, took, budget);
    o.pass &= took <= budget;
    o
}

/// Every run the suite makes is kept for the conservation check.
#[derive(Default)]
struct Runs(Vec<(String, RunResult)>);

impl Runs {
    fn keep(&mut self, label: String, r: RunResult) -> &RunResult {
        self.0.push((label, r));
        &self.0.last().unwrap().1
    }
}

fn main() {
    let mut runs = Runs::default();
    let results: Vec<(&str, Outcome)> = vec![
        ("1 jitter anchors", jitter_anchors()),
        ("2 lifetime direction", lifetime_direction(&mut runs)),
        ("3 residual dominance", residual_dominance(&mut runs)),
        ("4 min-hop oracle", min_hop_oracle()),
        ("5 delay-race oracle", delay_race_oracle()),
        ("7 survival behaviour", survival_behaviour(&mut runs)),
        ("8 determinism", determinism()),
        ("9 lifetime oracle", lifetime_oracle(&mut runs)),
    ];
    // Conservation covers every run above, so it is evaluated last.
    let conservation = energy_conservation(&runs);
    let mut all: Vec<(&str, Outcome)> = results;
    all.insert(5, ("6 energy conservation", conservation));

    let mut failed = 0;
    for (name, o) in &all {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("[{tag}] {name}: {}", o.detail);
        failed += usize::from(!o.pass);
    }
    println!("{} of {} criteria passed", all.len() - failed, all.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

// ---- 1 --------------------------------------------------------------------

fn jitter_anchors() -> Outcome {
    let p = EnergyJitterParams::default();
    let at10 = energy_jitter(10.0, &p);
    let at1 = energy_jitter(1.0, &p);
    let pass = (at10 - 0.001).abs() <= JITTER_TOLERANCE && (at1 - 0.01).abs() <= JITTER_TOLERANCE;
    outcome(pass, format!("jitter(10 J) = {at10}, jitter(1 J) = {at1}"))
}

// ---- 2 --------------------------------------------------------------------

fn lifetime_direction(runs: &mut Runs) -> Outcome {
    let started = Instant::now();
    let mut improvements = Vec::new();
    let mut all_longer = true;
    let mut worst = String::new();
    for seed in LIFETIME_SEEDS {
        let mut s = Scenario::paper_default();
        s.seed = seed;
        let (dsr, ess) = s.run_both();
        let (ld, le) = (dsr.lifetime.value, ess.lifetime.value);
        if le <= ld {
            all_longer = false;
            worst = format!(" seed {seed}: dsr {ld:.3} >= essdsr {le:.3};");
        }
        improvements.push(100.0 * (le - ld) / ld);
        runs.keep(format!("paper-default dsr seed {seed}"), dsr);
        runs.keep(format!("paper-default essdsr seed {seed}"), ess);
    }
    let median = median(&mut improvements);
    let pass = all_longer && median >= MIN_MEDIAN_IMPROVEMENT_PERCENT;
    within(
        BUDGET_LIFETIME,
        started,
        outcome(
            pass,
            format!(
                "essdsr longer on every seed: {all_longer};{worst} median improvement {median:.2}% (min {:.2}%, need >= {MIN_MEDIAN_IMPROVEMENT_PERCENT}%)",
                improvements[0]
            ),
        ),
    )
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

// ---- 3 --------------------------------------------------------------------

fn residual_dominance(runs: &mut Runs) -> Outcome {
    let started = Instant::now();
    let mut s = Scenario::paper_default();
    s.seed = DOMINANCE_SEED;
    let (dsr, ess) = s.run_both();
    let mut violations = Vec::new();
    let mut checked = 0;
    let mut min_margin = f64::INFINITY;
    for i in 0..ess.final_residual.len() {
        let (e, d) = (ess.final_residual[i], dsr.final_residual[i]);
        if e <= 0.0 {
            continue;
        }
        checked += 1;
        min_margin = min_margin.min(e - d);
        if e < d {
            violations.push(format!("node {i}: essdsr {e:.6} < dsr {d:.6}"));
        }
    }
    runs.keep("dominance dsr".into(), dsr);
    runs.keep("dominance essdsr".into(), ess);
    within(
        BUDGET_DOMINANCE,
        started,
        outcome(
            violations.is_empty() && checked > 0,
            format!(
                "{checked} surviving nodes checked, smallest margin {min_margin:.4} J{}",
                if violations.is_empty() {
                    String::new()
                } else {
                    format!("; {}", violations.join(", "))
                }
            ),
        ),
    )
}

// ---- random graphs ---------------------------------------------------------

/// A connected random graph: a random spanning tree plus extra edges.
fn random_graph(rng: &mut ChaCha8Rng, n: usize) -> Vec<BTreeSet<usize>> {
    let mut adj = vec![BTreeSet::new(); n];
    for v in 1..n {
        let u = rng.gen_range(0..v);
        adj[u].insert(v);
        adj[v].insert(u);
    }
    let extra_p = rng.gen_range(0.0..0.5);
    for u in 0..n {
        for v in u + 1..n {
            if rng.gen_bool(extra_p) {
                adj[u].insert(v);
                adj[v].insert(u);
            }
        }
    }
    adj
}

fn to_topology(adj: &[BTreeSet<usize>]) -> Topology {
    Topology::from_adjacency(
        adj.iter()
            .map(|s| s.iter().map(|&v| NodeId::from(v)).collect())
            .collect(),
    )
}

fn bfs_hops(adj: &[BTreeSet<usize>], s: usize, t: usize) -> Option<usize> {
    let mut dist = vec![usize::MAX; adj.len()];
    dist[s] = 0;
    let mut q = VecDeque::from([s]);
    while let Some(u) = q.pop_front() {
        for &v in &adj[u] {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                q.push_back(v);
            }
        }
    }
    (dist[t] != usize::MAX).then_some(dist[t])
}

fn endpoints(rng: &mut ChaCha8Rng, n: usize) -> (usize, usize) {
    let s = rng.gen_range(0..n);
    let mut t = rng.gen_range(0..n - 1);
    if t >= s {
        t += 1;
    }
    (s, t)
}

// ---- 4 --------------------------------------------------------------------

fn min_hop_oracle() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut mismatches = Vec::new();
    for g in 0..RANDOM_GRAPHS {
        let n = rng.gen_range(2..=MAX_GRAPH_NODES);
        let adj = random_graph(&mut rng, n);
        let (s, t) = endpoints(&mut rng, n);
        let mut cfg = SimConfig::new(Protocol::Dsr);
        cfg.zero_jitter = true;
        cfg.horizon = 5.0;
        let mut sim = Simulation::with_topology(cfg, to_topology(&adj), &vec![100.0; n], vec![]);
        sim.discover(NodeId::from(s), NodeId::from(t));
        sim.advance(5.0);
        let got = sim
            .route_cache(NodeId::from(s))
            .select_route(NodeId::from(t))
            .map(|r| r.hop_count());
        let want = bfs_hops(&adj, s, t);
        if got != want {
            mismatches.push(format!("graph {g}: got {got:?}, oracle {want:?}"));
        }
    }
    within(
        BUDGET_MIN_HOP,
        started,
        outcome(
            mismatches.is_empty(),
            format!(
                "{} of {RANDOM_GRAPHS} graphs matched the BFS oracle{}",
                RANDOM_GRAPHS - mismatches.len(),
                first(&mismatches)
            ),
        ),
    )
}

fn first(v: &[String]) -> String {
    v.first()
        .map(|m| format!("; first mismatch {m}"))
        .unwrap_or_default()
}

// ---- 5 --------------------------------------------------------------------

/// All simple paths from `s` to `t`.
fn simple_paths(adj: &[BTreeSet<usize>], s: usize, t: usize) -> Vec<Vec<usize>> {
    fn walk(
        adj: &[BTreeSet<usize>],
        t: usize,
        path: &mut Vec<usize>,
        seen: &mut [bool],
        out: &mut Vec<Vec<usize>>,
    ) {
        let u = *path.last().unwrap();
        if u == t {
            out.push(path.clone());
            return;
        }
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                path.push(v);
                walk(adj, t, path, seen, out);
                path.pop();
                seen[v] = false;
            }
        }
    }
    let mut out = Vec::new();
    let mut seen = vec![false; adj.len()];
    seen[s] = true;
    walk(adj, t, &mut vec![s], &mut seen, &mut out);
    out
}

fn delay_race_oracle() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let jitter = EnergyJitterParams::default();
    let hop = tx_duration(RREQ_BYTES, &RadioParams::default());
    let mut mismatches = Vec::new();
    for g in 0..RANDOM_GRAPHS {
        let n = rng.gen_range(2..=MAX_GRAPH_NODES);
        let adj = random_graph(&mut rng, n);
        let (s, t) = endpoints(&mut rng, n);
        let energies: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..20.0)).collect();

        // Oracle: the source broadcasts at once; every relay waits its
        // energy delay and every hop costs one RREQ airtime.
        let cost = |p: &[usize]| -> f64 {
            p[1..p.len() - 1]
                .iter()
                .map(|&v| energy_jitter(energies[v], &jitter))
                .sum::<f64>()
                + (p.len() - 1) as f64 * hop
        };
        let paths = simple_paths(&adj, s, t);
        let best = paths.iter().map(|p| cost(p)).fold(f64::INFINITY, f64::min);
        let winners: Vec<&Vec<usize>> = paths
            .iter()
            .filter(|p| cost(p) <= best + DELAY_TIE)
            .collect();

        let mut cfg = SimConfig::new(Protocol::Essdsr);
        cfg.freeze_energy = true;
        cfg.horizon = 5.0;
        let mut sim = Simulation::with_topology(cfg, to_topology(&adj), &energies, vec![]);
        sim.discover(NodeId::from(s), NodeId::from(t));
        sim.advance(5.0);
        let observed = sim.trace().iter().find_map(|r| match &r.packet {
            Packet::Rreq(q) if r.event == TraceEvent::Rx && r.node == NodeId::from(t) => {
                let mut p: Vec<usize> = q.route_record.iter().map(|h| h.index()).collect();
                p.push(t);
                Some(p)
            }
            _ => None,
        });
        match observed {
            Some(p) if winners.iter().any(|w| **w == p) => {}
            other => mismatches.push(format!(
                "graph {g}: first copy {other:?}, oracle {:?} at {best:.6} s",
                winners.first()
            )),
        }
    }
    within(
        BUDGET_DELAY_RACE,
        started,
        outcome(
            mismatches.is_empty(),
            format!(
                "{} of {RANDOM_GRAPHS} first RREQ copies took the minimum-delay path{}",
                RANDOM_GRAPHS - mismatches.len(),
                first(&mismatches)
            ),
        ),
    )
}

// ---- 6 --------------------------------------------------------------------

fn energy_conservation(runs: &Runs) -> Outcome {
    let mut worst: f64 = 0.0;
    let mut bad = Vec::new();
    for (label, r) in &runs.0 {
        for i in 0..r.initial_energy.len() {
            let drawn = r.initial_energy[i] - r.final_residual[i];
            let rel = (drawn - r.spent[i].total()).abs() / r.initial_energy[i];
            worst = worst.max(rel);
            if rel > CONSERVATION_RELATIVE_TOLERANCE {
                bad.push(format!("{label} node {i}: relative error {rel:e}"));
            }
        }
    }
    outcome(
        bad.is_empty() && !runs.0.is_empty(),
        format!(
            "{} runs, worst relative error {worst:e} (limit {CONSERVATION_RELATIVE_TOLERANCE:e}){}",
            runs.0.len(),
            first(&bad)
        ),
    )
}

// ---- 7 --------------------------------------------------------------------

fn survival_behaviour(runs: &mut Runs) -> Outcome {
    let started = Instant::now();
    // 0 - {1, 2} - 3; relays 1 and 2 are out of each other's range. Relay 1
    // starts slightly richer, so it carries the flow first.
    let positions = vec![
        Position::new(0.0, 0.0),
        Position::new(150.0, 130.0),
        Position::new(150.0, -130.0),
        Position::new(300.0, 0.0),
    ];
    let mut cfg = SimConfig::new(Protocol::Essdsr);
    cfg.horizon = 20.0;
    let sim = Simulation::new(
        cfg,
        positions,
        &[50.0, 5.0, 4.9, 50.0],
        vec![FlowSpec::new(NodeId(0), NodeId(3))],
    );
    let r = runs.keep("diamond essdsr".into(), sim.run());
    let (src, relay, alt) = (NodeId(0), NodeId(1), NodeId(2));

    let mut problems = Vec::new();
    let le_tx: Vec<_> = r
        .trace
        .iter()
        .filter(|t| t.event == TraceEvent::Tx && t.packet.kind() == PacketKind::LowEnergy)
        .collect();
    if le_tx.len() != 1 {
        problems.push(format!("{} LOW_ENERGY broadcasts", le_tx.len()));
    }
    let le_time = le_tx
        .first()
        .map(|t| t.time.secs())
        .unwrap_or(f64::INFINITY);
    if let Some(t) = le_tx.first() {
        if t.node != relay {
            problems.push(format!("LOW_ENERGY came from node {}", t.node));
        }
    }

    let rerr_at_source = r.trace.iter().any(|t| {
        t.event == TraceEvent::Rx
            && t.node == src
            && matches!(&t.packet, Packet::Rerr(e) if e.body.low_energy && e.body.broken_to == relay)
    });
    if !rerr_at_source {
        problems.push("no low-energy RERR reached the source".into());
    }

    let rediscovery = r.trace.iter().find(|t| {
        t.event == TraceEvent::Tx
            && t.node == src
            && t.time.secs() >= le_time
            && matches!(&t.packet, Packet::Rreq(q) if q.excluded == Some(relay))
    });
    if rediscovery.is_none() {
        problems.push("no rediscovery excluding the relay".into());
    }

    // DATA the source injects after the new route is in use.
    let alt_dead = r
        .log
        .deaths
        .iter()
        .find(|d| d.node == alt)
        .map_or(f64::INFINITY, |d| d.time);
    let first_new_seq = r.trace.iter().find_map(|t| match &t.packet {
        Packet::Data(d)
            if t.event == TraceEvent::Tx
                && t.node == src
                && t.time.secs() >= le_time
                && !d.path.has_intermediate(relay) =>
        {
            Some(d.body.seq)
        }
        _ => None,
    });
    let mut transits = 0;
    match first_new_seq {
        None => problems.push("no DATA on the alternate path".into()),
        Some(seq0) => {
            for t in &r.trace {
                if let Packet::Data(d) = &t.packet {
                    let late = d.body.seq >= seq0
                        || (t.event == TraceEvent::Tx && t.node == src && t.time.secs() > le_time);
                    if late && t.time.secs() < alt_dead && d.path.has_intermediate(relay) {
                        transits += 1;
                    }
                }
            }
        }
    }
    if transits > 0 {
        problems.push(format!("{transits} later DATA events transit the relay"));
    }

    within(
        BUDGET_SURVIVAL,
        started,
        outcome(
            problems.is_empty(),
            if problems.is_empty() {
                format!(
                    "one LOW_ENERGY at {le_time:.3} s, RERR at source, rediscovery x={relay}, \
                     no later DATA through the relay"
                )
            } else {
                problems.join("; ")
            },
        ),
    )
}

// ---- 8 --------------------------------------------------------------------

fn determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_essdsr-sim");
    let dir = tempfile::tempdir().expect("temp dir");
    let mut runs = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let status = Command::new(bin)
            .args(["compare", "--seed", "42", "--out"])
            .arg(&out)
            .output()
            .expect("run binary");
        if !status.status.success() {
            return outcome(false, format!("compare exited with {}", status.status));
        }
        runs.push(out);
    }
    let files = [
        "compare.json",
        "dsr/report.json",
        "dsr/trace.csv",
        "dsr/energy.csv",
        "dsr/deaths.csv",
        "essdsr/report.json",
        "essdsr/trace.csv",
        "essdsr/energy.csv",
        "essdsr/deaths.csv",
    ];
    let differing: Vec<&str> = files
        .iter()
        .copied()
        .filter(|f| read(&runs[0].join(f)) != read(&runs[1].join(f)))
        .collect();
    outcome(
        differing.is_empty(),
        if differing.is_empty() {
            format!(
                "{} output files byte-identical across two runs",
                files.len()
            )
        } else {
            format!("differing: {}", differing.join(", "))
        },
    )
}

fn read(p: &Path) -> Option<Vec<u8>> {
    std::fs::read(p).ok()
}

// ---- 9 --------------------------------------------------------------------

/// Warshall closure over the survivors of the disc graph.
fn reachable(positions: &[Position], range: f64, alive: &[bool], s: usize, t: usize) -> bool {
    let n = positions.len();
    let mut reach = vec![vec![false; n]; n];
    for i in 0..n {
        for j in 0..n {
            let dx = positions[i].x - positions[j].x;
            let dy = positions[i].y - positions[j].y;
            reach[i][j] = alive[i] && alive[j] && (i == j || (dx * dx + dy * dy).sqrt() <= range);
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if reach[i][k] && reach[k][j] {
                    reach[i][j] = true;
                }
            }
        }
    }
    reach[s][t]
}

/// Brute force: at every death timestamp rebuild reachability among the
/// survivors and test source to destination.
fn lifetime_by_closure(
    positions: &[Position],
    range: f64,
    deaths: &[(usize, f64)],
    s: usize,
    t: usize,
    horizon: f64,
) -> f64 {
    let n = positions.len();
    let mut times: Vec<f64> = deaths
        .iter()
        .map(|d| d.1)
        .filter(|&x| x <= horizon)
        .collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    for &now in &times {
        let alive: Vec<bool> = (0..n)
            .map(|i| deaths.iter().all(|&(v, at)| v != i || at > now))
            .collect();
        if !reachable(positions, range, &alive, s, t) {
            return now;
        }
    }
    horizon
}

fn lifetime_oracle(runs: &mut Runs) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut mismatches = Vec::new();
    let mut partitions = 0;
    let mut made = 0;
    while made < LIFETIME_SCENARIOS {
        let n = rng.gen_range(4..=MAX_SCENARIO_NODES);
        let mut s = Scenario::paper_default();
        s.name = format!("random-{made}");
        s.seed = rng.gen();
        s.protocol = if rng.gen_bool(0.5) {
            Protocol::Dsr
        } else {
            Protocol::Essdsr
        };
        s.toggles.promiscuous_rx = rng.gen_bool(0.5);
        s.horizon = 30.0;
        s.nodes = (0..n)
            .map(|i| NodeSpec {
                id: NodeId::from(i),
                x: rng.gen_range(0.0..=300.0),
                y: rng.gen_range(0.0..=200.0),
                energy: rng.gen_range(0.3..4.0),
            })
            .collect();
        s.flows = vec![FlowSpec::new(NodeId(0), NodeId::from(n - 1))];
        let (positions, _) = s.layout();
        if !reachable(&positions, s.radio.range, &vec![true; n], 0, n - 1) {
            continue;
        }
        made += 1;
        let r = s.run();
        let deaths: Vec<(usize, f64)> = r
            .log
            .deaths
            .iter()
            .map(|d| (d.node.index(), d.time))
            .collect();
        let want = lifetime_by_closure(&positions, s.radio.range, &deaths, 0, n - 1, s.horizon);
        if r.lifetime.cause == LifetimeCause::Partition {
            partitions += 1;
        }
        if r.lifetime.value != want {
            mismatches.push(format!(
                "{}: replay {} vs oracle {want}",
                s.name, r.lifetime.value
            ));
        }
        runs.keep(s.name.clone(), r);
    }
    outcome(
        mismatches.is_empty(),
        format!(
            "{} of {LIFETIME_SCENARIOS} scenarios matched ({partitions} ended in partition){}",
            LIFETIME_SCENARIOS - mismatches.len(),
            first(&mismatches)
        ),
    )
}
