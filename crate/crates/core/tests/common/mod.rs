//! Brute-force oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::PathBuf;
use std::sync::{Arc, Barrier};
use std::thread;

use smartcity_core::bus::MessageBus;
use smartcity_core::city::{CityBuilder, CityGraph};
use smartcity_core::geo::EdgeWeighting;
use smartcity_core::incident::{tokenize, Label};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

// ---------------------------------------------------------------------------
// capacity

/// Capacity by walking the usable length in 1 cm cells. All inputs are in
/// whole centimeters so the discretization is exact.
pub fn capacity_oracle_cm(usable_cm: i64, spans_cm: &[(i64, i64)], slot_cm: i64) -> u32 {
    let free = (0..usable_cm)
        .filter(|&i| !spans_cm.iter().any(|&(s, e)| s <= i && i + 1 <= e))
        .count() as i64;
    (free / slot_cm) as u32
}

// ---------------------------------------------------------------------------
// routing

/// Small random graph description. Node ids `n00..`, edge ids `e00..`, so id
/// order equals index order.
#[derive(Debug, Clone)]
pub struct GraphSpec {
    pub nodes: usize,
    /// (from, to, directed, cost)
    pub edges: Vec<(usize, usize, bool, f64)>,
}

pub fn node_id(i: usize) -> String {
    format!("n{i:02}")
}

pub fn edge_id(i: usize) -> String {
    format!("e{i:02}")
}

impl GraphSpec {
    /// Nodes on a circle of radius 100 m; costs override edge lengths.
    pub fn build(&self) -> (CityGraph, EdgeWeighting) {
        let mut b = CityBuilder::new();
        for i in 0..self.nodes {
            let a = i as f64 / self.nodes as f64 * std::f64::consts::TAU;
            b = b.node(&node_id(i), 100.0 * a.cos(), 100.0 * a.sin());
        }
        let mut w = EdgeWeighting::identity();
        for (i, &(f, t, directed, cost)) in self.edges.iter().enumerate() {
            b = b.edge(&edge_id(i), &node_id(f), &node_id(t), "S", directed);
            w = w.with_base(&edge_id(i), cost);
        }
        (b.build().expect("valid random graph"), w)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OraclePath {
    pub nodes: Vec<String>,
    pub edges: Vec<String>,
    pub cost: f64,
}

/// Every simple path from `o` to `d`, by depth-first enumeration.
pub fn all_simple_paths(spec: &GraphSpec, o: usize, d: usize) -> Vec<OraclePath> {
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); spec.nodes];
    for (i, &(f, t, directed, _)) in spec.edges.iter().enumerate() {
        adj[f].push((i, t));
        if !directed && f != t {
            adj[t].push((i, f));
        }
    }
    let mut out = Vec::new();
    let mut nodes = vec![o];
    let mut edges = Vec::new();
    let mut seen = HashSet::from([o]);
    fn dfs(
        spec: &GraphSpec,
        adj: &[Vec<(usize, usize)>],
        d: usize,
        nodes: &mut Vec<usize>,
        edges: &mut Vec<usize>,
        seen: &mut HashSet<usize>,
        out: &mut Vec<OraclePath>,
    ) {
        let u = *nodes.last().unwrap();
        if u == d {
            let cost = edges.iter().fold(0.0, |acc, &e| acc + spec.edges[e].3);
            out.push(OraclePath {
                nodes: nodes.iter().map(|&i| node_id(i)).collect(),
                edges: edges.iter().map(|&i| edge_id(i)).collect(),
                cost,
            });
            return;
        }
        for &(e, v) in &adj[u] {
            if seen.insert(v) {
                nodes.push(v);
                edges.push(e);
                dfs(spec, adj, d, nodes, edges, seen, out);
                nodes.pop();
                edges.pop();
                seen.remove(&v);
            }
        }
    }
    dfs(spec, &adj, d, &mut nodes, &mut edges, &mut seen, &mut out);
    out.sort_by(|a, b| {
        a.cost
            .total_cmp(&b.cost)
            .then(a.edges.len().cmp(&b.edges.len()))
            .then_with(|| a.nodes.cmp(&b.nodes))
            .then_with(|| a.edges.cmp(&b.edges))
    });
    out
}

/// Whether `nodes`/`edges` is a simple walk in `spec` from `o` to `d`.
pub fn is_valid_simple_path(spec: &GraphSpec, nodes: &[String], edges: &[String], o: usize, d: usize) -> bool {
    if nodes.first() != Some(&node_id(o)) || nodes.last() != Some(&node_id(d)) {
        return false;
    }
    if nodes.len() != edges.len() + 1 {
        return false;
    }
    let unique: HashSet<&String> = nodes.iter().collect();
    if unique.len() != nodes.len() {
        return false;
    }
    edges.iter().enumerate().all(|(i, e)| {
        let idx: usize = e[1..].parse().unwrap();
        let (f, t, directed, _) = spec.edges[idx];
        let (a, b) = (node_id(f), node_id(t));
        (nodes[i] == a && nodes[i + 1] == b) || (!directed && nodes[i] == b && nodes[i + 1] == a)
    })
}

// ---------------------------------------------------------------------------
// classifier

/// Log posteriors by direct application of Bayes' rule with additive
/// smoothing, counting tokens from scratch.
pub fn bayes_log_posteriors(
    corpus: &[(String, Label)],
    alpha: f64,
    text: &str,
) -> BTreeMap<Label, f64> {
    let mut vocab: HashSet<String> = HashSet::new();
    let mut docs: BTreeMap<Label, usize> = BTreeMap::new();
    let mut counts: HashMap<(Label, String), usize> = HashMap::new();
    let mut totals: BTreeMap<Label, usize> = BTreeMap::new();
    for (t, l) in corpus {
        *docs.entry(*l).or_default() += 1;
        for tok in tokenize(t) {
            vocab.insert(tok.clone());
            *counts.entry((*l, tok)).or_default() += 1;
            *totals.entry(*l).or_default() += 1;
        }
    }
    let n_docs = corpus.len() as f64;
    let v = vocab.len() as f64;
    let query: Vec<String> = tokenize(text).into_iter().filter(|t| vocab.contains(t)).collect();
    let joint: BTreeMap<Label, f64> = docs
        .iter()
        .map(|(&l, &n)| {
            let denom = *totals.get(&l).unwrap_or(&0) as f64 + alpha * v;
            let mut s = (n as f64 / n_docs).ln();
            for tok in &query {
                let k = *counts.get(&(l, tok.clone())).unwrap_or(&0) as f64;
                s += ((k + alpha) / denom).ln();
            }
            (l, s)
        })
        .collect();
    let max = joint.values().copied().fold(f64::NEG_INFINITY, f64::max);
    let evidence = max + joint.values().map(|s| (s - max).exp()).sum::<f64>().ln();
    joint.into_iter().map(|(l, s)| (l, s - evidence)).collect()
}

// ---------------------------------------------------------------------------
// bus

#[derive(Debug)]
pub struct BusRun {
    pub messages: usize,
    pub violations: Vec<String>,
}

/// `publishers` threads each publish `per_publisher` messages spread over
/// `topics` topics while `subscribers` subscribers per topic read
/// concurrently. Checks per-topic order, exactly-once delivery, topic
/// isolation and identical fan-out.
pub fn bus_stress(publishers: usize, subscribers: usize, topics: usize, per_publisher: usize, seed: u64) -> BusRun {
    use rand::{Rng, SeedableRng};
    let bus = Arc::new(MessageBus::new());
    let names: Vec<String> = (0..topics).map(|i| format!("stress.t{i}")).collect();
    for n in &names {
        bus.create_topic(n).unwrap();
    }
    // precomputed per-topic totals so readers know when to stop
    let plans: Vec<Vec<usize>> = (0..publishers)
        .map(|p| {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed + p as u64);
            (0..per_publisher).map(|_| rng.random_range(0..topics)).collect()
        })
        .collect();
    let mut expected = vec![0usize; topics];
    for plan in &plans {
        for &t in plan {
            expected[t] += 1;
        }
    }

    let start = Arc::new(Barrier::new(publishers + subscribers * topics));
    let mut readers = Vec::new();
    for (ti, name) in names.iter().enumerate() {
        for _ in 0..subscribers {
            let mut sub = bus.subscribe(name, 0).unwrap();
            let want = expected[ti];
            let start = start.clone();
            let name = name.clone();
            readers.push(thread::spawn(move || {
                start.wait();
                let mut got = Vec::with_capacity(want);
                while got.len() < want {
                    match sub.next_timeout(std::time::Duration::from_secs(10)) {
                        Some(m) => got.push(m),
                        None => break,
                    }
                }
                (name, got)
            }));
        }
    }
    let mut writers = Vec::new();
    for (p, plan) in plans.into_iter().enumerate() {
        let bus = bus.clone();
        let names = names.clone();
        let start = start.clone();
        writers.push(thread::spawn(move || {
            start.wait();
            for (i, t) in plan.into_iter().enumerate() {
                let payload = format!("{p}:{i}");
                bus.publish(&names[t], "text/plain", payload.into_bytes(), i as i64)
                    .unwrap();
            }
        }));
    }
    for w in writers {
        w.join().unwrap();
    }

    let mut violations = Vec::new();
    let mut per_topic: BTreeMap<String, Vec<Vec<(u64, String)>>> = BTreeMap::new();
    for r in readers {
        let (name, got) = r.join().unwrap();
        let seen: Vec<(u64, String)> = got
            .iter()
            .map(|m| (m.seq, m.payload_str().unwrap().to_string()))
            .collect();
        if got.iter().any(|m| m.topic != name) {
            violations.push(format!("{name}: received a foreign message"));
        }
        per_topic.entry(name).or_default().push(seen);
    }
    for (ti, name) in names.iter().enumerate() {
        let views = &per_topic[name];
        for v in views {
            if v.len() != expected[ti] {
                violations.push(format!("{name}: got {} of {}", v.len(), expected[ti]));
            }
            if !v.iter().enumerate().all(|(i, (seq, _))| *seq == i as u64) {
                violations.push(format!("{name}: sequence gap or reorder"));
            }
            let unique: HashSet<&String> = v.iter().map(|(_, p)| p).collect();
            if unique.len() != v.len() {
                violations.push(format!("{name}: duplicate delivery"));
            }
            // per-publisher order preserved
            let mut last: HashMap<&str, usize> = HashMap::new();
            for (_, p) in v {
                let (who, idx) = p.split_once(':').unwrap();
                let idx: usize = idx.parse().unwrap();
                if last.get(who).is_some_and(|&prev| prev >= idx) {
                    violations.push(format!("{name}: publisher {who} reordered"));
                }
                last.insert(who, idx);
            }
        }
        if views.windows(2).any(|w| w[0] != w[1]) {
            violations.push(format!("{name}: subscribers saw different logs"));
        }
    }
    BusRun {
        messages: publishers * per_publisher,
        violations,
    }
}
