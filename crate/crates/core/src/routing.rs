//! Trusted-relay routing over QKD links whose key buffers limit how many
//! one-time-padded packets they can carry.
//!
//! A path is served when every edge on it is; edges are treated as
//! independent, so a path's probability is the product of its edge serve
//! probabilities. Selection compares `Σ log2 p_e - α·hops`, which for α = 0
//! orders paths exactly as the product does.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::{run_session, SessionConfig, SessionVerdict};

/// Scores closer than this are treated as equal before tie-breaking.
pub const SCORE_TIE_TOLERANCE: f64 = 1e-9;

/// Default hop penalty for circuit selection.
pub const DEFAULT_ALPHA: f64 = 0.5;

/// Probability that a link with `buffer_bits` of key can serve one of
/// `n_packets` packets of `packet_len` bits: `b / (nL)` below capacity,
/// 1 at or above it.
pub fn serve_probability(buffer_bits: u64, n_packets: u64, packet_len: u64) -> Result<f64> {
    if n_packets == 0 {
        return Err(Error::Domain {
            name: "n_packets",
            value: 0.0,
            domain: "[1, inf)",
        });
    }
    if packet_len == 0 {
        return Err(Error::Domain {
            name: "packet_len",
            value: 0.0,
            domain: "[1, inf)",
        });
    }
    let demand = u128::from(n_packets) * u128::from(packet_len);
    if u128::from(buffer_bits) >= demand {
        Ok(1.0)
    } else {
        Ok(buffer_bits as f64 / demand as f64)
    }
}

/// Unordered node pair, stored with the smaller id first.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EdgeKey(pub String, pub String);

impl EdgeKey {
    pub fn new(a: &str, b: &str) -> Self {
        if a <= b {
            Self(a.to_owned(), b.to_owned())
        } else {
            Self(b.to_owned(), a.to_owned())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeDoc {
    pub a: String,
    pub b: String,
    pub buffer_bits: u64,
}

/// Undirected relay graph with a key buffer on every link.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "GraphDoc", into = "GraphDoc")]
pub struct NetworkGraph {
    adjacency: BTreeMap<String, BTreeSet<String>>,
    buffers: BTreeMap<EdgeKey, u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphDoc {
    nodes: Vec<String>,
    edges: Vec<EdgeDoc>,
}

impl TryFrom<GraphDoc> for NetworkGraph {
    type Error = Error;

    fn try_from(doc: GraphDoc) -> Result<Self> {
        let mut g = NetworkGraph::new();
        for n in doc.nodes {
            g.add_node(&n)?;
        }
        for e in doc.edges {
            g.add_edge(&e.a, &e.b, e.buffer_bits)?;
        }
        Ok(g)
    }
}

impl From<NetworkGraph> for GraphDoc {
    fn from(g: NetworkGraph) -> Self {
        GraphDoc {
            nodes: g.nodes().cloned().collect(),
            edges: g.edges().collect(),
        }
    }
}

impl NetworkGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, id: &str) -> Result<()> {
        if self.adjacency.contains_key(id) {
            return Err(Error::InvalidNetwork(format!("duplicate node {id}")));
        }
        self.adjacency.insert(id.to_owned(), BTreeSet::new());
        Ok(())
    }

    pub fn add_edge(&mut self, a: &str, b: &str, buffer_bits: u64) -> Result<()> {
        if a == b {
            return Err(Error::InvalidNetwork(format!("self-loop on {a}")));
        }
        for n in [a, b] {
            if !self.adjacency.contains_key(n) {
                return Err(Error::UnknownNode(n.to_owned()));
            }
        }
        let key = EdgeKey::new(a, b);
        if self.buffers.contains_key(&key) {
            return Err(Error::InvalidNetwork(format!("duplicate edge {a}-{b}")));
        }
        self.buffers.insert(key, buffer_bits);
        self.adjacency.get_mut(a).expect("checked").insert(b.to_owned());
        self.adjacency.get_mut(b).expect("checked").insert(a.to_owned());
        Ok(())
    }

    pub fn contains(&self, id: &str) -> bool {
        self.adjacency.contains_key(id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &String> {
        self.adjacency.keys()
    }

    pub fn neighbors(&self, id: &str) -> impl Iterator<Item = &String> {
        self.adjacency.get(id).into_iter().flatten()
    }

    pub fn edges(&self) -> impl Iterator<Item = EdgeDoc> + '_ {
        self.buffers.iter().map(|(k, &b)| EdgeDoc {
            a: k.0.clone(),
            b: k.1.clone(),
            buffer_bits: b,
        })
    }

    pub fn buffer(&self, a: &str, b: &str) -> Option<u64> {
        self.buffers.get(&EdgeKey::new(a, b)).copied()
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edge_count(&self) -> usize {
        self.buffers.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficSpec {
    pub src: String,
    pub dst: String,
    pub n_packets: u64,
    pub packet_len: u64,
}

impl TrafficSpec {
    pub fn validate(&self, graph: &NetworkGraph) -> Result<()> {
        for n in [&self.src, &self.dst] {
            if !graph.contains(n) {
                return Err(Error::UnknownNode(n.clone()));
            }
        }
        if self.src == self.dst {
            return Err(Error::InvalidParam {
                name: "traffic",
                reason: "source and destination coincide".into(),
            });
        }
        if self.n_packets == 0 || self.packet_len == 0 {
            return Err(Error::InvalidParam {
                name: "traffic",
                reason: "n_packets and packet_len must be at least 1".into(),
            });
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        format!("{}->{}", self.src, self.dst)
    }
}

/// Network description: the graph plus one traffic demand.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkDoc {
    pub nodes: Vec<String>,
    pub edges: Vec<EdgeDoc>,
    pub traffic: TrafficSpec,
}

impl NetworkDoc {
    pub fn into_parts(self) -> Result<(NetworkGraph, TrafficSpec)> {
        let graph = NetworkGraph::try_from(GraphDoc {
            nodes: self.nodes,
            edges: self.edges,
        })?;
        self.traffic.validate(&graph)?;
        Ok((graph, self.traffic))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathChoice {
    pub nodes: Vec<String>,
    pub edge_probs: Vec<f64>,
    /// Product of `edge_probs` after discovery; the selection score after
    /// [`vc_select`].
    pub score: f64,
}

impl PathChoice {
    pub fn hops(&self) -> usize {
        self.edge_probs.len()
    }

    pub fn product(&self) -> f64 {
        self.edge_probs.iter().product()
    }

    pub fn log2_product(&self) -> f64 {
        self.edge_probs.iter().map(|p| p.log2()).sum()
    }

    pub fn edge_keys(&self) -> impl Iterator<Item = EdgeKey> + '_ {
        self.nodes.windows(2).map(|w| EdgeKey::new(&w[0], &w[1]))
    }
}

/// Result of flooding: every simple path and the provisional load per edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discovery {
    pub paths: Vec<PathChoice>,
    /// Candidate paths crossing each edge, times `n_packets`.
    pub loads: BTreeMap<EdgeKey, u64>,
}

fn simple_paths(graph: &NetworkGraph, src: &str, dst: &str) -> Vec<Vec<String>> {
    fn dfs<'g>(
        g: &'g NetworkGraph,
        dst: &str,
        stack: &mut Vec<&'g String>,
        on_path: &mut BTreeSet<&'g str>,
        out: &mut Vec<Vec<String>>,
    ) {
        let here = *stack.last().expect("non-empty");
        if here == dst {
            out.push(stack.iter().map(|s| (*s).clone()).collect());
            return;
        }
        for next in g.neighbors(here) {
            if on_path.insert(next) {
                stack.push(next);
                dfs(g, dst, stack, on_path, out);
                stack.pop();
                on_path.remove(next.as_str());
            }
        }
    }
    let Some((start, _)) = graph.adjacency.get_key_value(src) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    let mut on_path = BTreeSet::from([start.as_str()]);
    dfs(graph, dst, &mut vec![start], &mut on_path, &mut out);
    out
}

fn loads_for<'a>(paths: impl IntoIterator<Item = &'a Vec<String>>, n_packets: u64) -> BTreeMap<EdgeKey, u64> {
    let mut loads = BTreeMap::new();
    for p in paths {
        for w in p.windows(2) {
            *loads.entry(EdgeKey::new(&w[0], &w[1])).or_insert(0) += n_packets;
        }
    }
    loads
}

fn edge_prob(graph: &NetworkGraph, key: &EdgeKey, load: u64, packet_len: u64) -> Result<f64> {
    let b = graph.buffer(&key.0, &key.1).expect("edge from a discovered path");
    serve_probability(b, load, packet_len)
}

/// Floods a request from the source and collects every simple path to the
/// destination, in depth-first order over sorted neighbours.
pub fn flood_discover(graph: &NetworkGraph, traffic: &TrafficSpec) -> Result<Discovery> {
    traffic.validate(graph)?;
    let raw = simple_paths(graph, &traffic.src, &traffic.dst);
    let loads = loads_for(&raw, traffic.n_packets);
    let paths = raw
        .into_iter()
        .map(|nodes| {
            let edge_probs = nodes
                .windows(2)
                .map(|w| {
                    let k = EdgeKey::new(&w[0], &w[1]);
                    edge_prob(graph, &k, loads[&k], traffic.packet_len)
                })
                .collect::<Result<Vec<_>>>()?;
            let score = edge_probs.iter().product();
            Ok(PathChoice {
                nodes,
                edge_probs,
                score,
            })
        })
        .collect::<Result<_>>()?;
    Ok(Discovery { paths, loads })
}

// Higher score first, then fewer hops, then lexicographic node order.
fn rank(a: &(f64, &PathChoice), b: &(f64, &PathChoice)) -> Ordering {
    let scores = if a.0 == b.0 || (a.0 - b.0).abs() <= SCORE_TIE_TOLERANCE {
        Ordering::Equal
    } else {
        b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal)
    };
    scores
        .then(a.1.hops().cmp(&b.1.hops()))
        .then_with(|| a.1.nodes.cmp(&b.1.nodes))
}

fn best_by(paths: &[PathChoice], score: impl Fn(&PathChoice) -> f64) -> Result<(f64, &PathChoice)> {
    paths
        .iter()
        .map(|p| (score(p), p))
        .min_by(rank)
        .ok_or(Error::NoPaths)
}

/// Path with the highest product of edge serve probabilities.
pub fn datagram_select(paths: &[PathChoice]) -> Result<PathChoice> {
    let (_, best) = best_by(paths, PathChoice::log2_product)?;
    Ok(PathChoice {
        score: best.product(),
        ..best.clone()
    })
}

/// Path maximising `Σ log2 p_e - α·hops`.
pub fn vc_select(paths: &[PathChoice], alpha: f64) -> Result<PathChoice> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::Domain {
            name: "alpha",
            value: alpha,
            domain: "[0, inf)",
        });
    }
    let (score, best) = best_by(paths, |p| p.log2_product() - alpha * p.hops() as f64)?;
    if score == f64::NEG_INFINITY {
        return Err(Error::NoViableCircuit);
    }
    Ok(PathChoice {
        score,
        ..best.clone()
    })
}

/// How per-relay circuit commitments are realised.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum ReserveMode {
    /// Ledger entries only.
    #[default]
    Fast,
    /// A full commitment session per relay, seeded `seed + hop`.
    Full(Box<SessionConfig>),
}

impl ReserveMode {
    pub fn name(&self) -> &'static str {
        match self {
            ReserveMode::Fast => "fast",
            ReserveMode::Full(_) => "full",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitmentHandle {
    pub id: u64,
    pub relay: String,
    pub traffic: String,
    /// Session outcome in full mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_verdict: Option<SessionVerdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_id: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reservation {
    pub path: Vec<String>,
    pub handles: Vec<CommitmentHandle>,
}

/// Circuits committed so far, one per traffic label. Only one routing
/// decision mutates the ledger at a time.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReservationLedger {
    next_handle: u64,
    circuits: BTreeMap<String, Reservation>,
}

impl ReservationLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, traffic: &str) -> Option<&Reservation> {
        self.circuits.get(traffic)
    }

    pub fn len(&self) -> usize {
        self.circuits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.circuits.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeChange {
    pub a: String,
    pub b: String,
    pub buffer_bits: u64,
    pub load_before: u64,
    pub load_after: u64,
    pub prob_before: f64,
    pub prob_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReservationReport {
    pub traffic: TrafficSpec,
    pub mode: String,
    pub path: Vec<String>,
    /// Edges of the chosen path, in path order.
    pub path_edges: Vec<EdgeChange>,
    /// Edges only on non-chosen candidates; their load drops to zero.
    pub released: Vec<EdgeChange>,
    pub path_prob_before: f64,
    pub path_prob_after: f64,
    pub handles: Vec<CommitmentHandle>,
}

/// Commits the source to `chosen` at every relay after it and releases the
/// provisional load that the other candidates placed on their edges.
pub fn reserve_circuit(
    graph: &NetworkGraph,
    traffic: &TrafficSpec,
    discovery: &Discovery,
    chosen: &PathChoice,
    ledger: &mut ReservationLedger,
    mode: &ReserveMode,
) -> Result<ReservationReport> {
    traffic.validate(graph)?;
    if !discovery.paths.iter().any(|p| p.nodes == chosen.nodes) {
        return Err(Error::PathNotCandidate);
    }
    let label = traffic.label();
    if ledger.circuits.contains_key(&label) {
        return Err(Error::AlreadyCommitted(label));
    }

    let mut handles = Vec::with_capacity(chosen.nodes.len() - 1);
    for (hop, relay) in chosen.nodes.iter().enumerate().skip(1) {
        let (session_verdict, frame_id) = match mode {
            ReserveMode::Fast => (None, None),
            ReserveMode::Full(cfg) => {
                let cfg = SessionConfig {
                    seed: cfg.seed.wrapping_add(hop as u64),
                    commit_bit: 1,
                    ..(**cfg).clone()
                };
                let t = run_session(&cfg)?;
                if t.verdict != SessionVerdict::Accept1 {
                    return Err(Error::CommitmentFailed {
                        relay: relay.clone(),
                        outcome: format!("{:?}", t.verdict),
                    });
                }
                (Some(t.verdict), t.commitments.first().map(|c| c.frame_id))
            }
        };
        handles.push(CommitmentHandle {
            id: ledger.next_handle + handles.len() as u64,
            relay: relay.clone(),
            traffic: label.clone(),
            session_verdict,
            frame_id,
        });
    }

    let after = loads_for([&chosen.nodes], traffic.n_packets);
    let change = |k: &EdgeKey| -> Result<EdgeChange> {
        let before = discovery.loads.get(k).copied().unwrap_or(0);
        let now = after.get(k).copied().unwrap_or(0);
        let prob = |load: u64| {
            if load == 0 {
                Ok(1.0)
            } else {
                edge_prob(graph, k, load, traffic.packet_len)
            }
        };
        Ok(EdgeChange {
            a: k.0.clone(),
            b: k.1.clone(),
            buffer_bits: graph.buffer(&k.0, &k.1).expect("discovered edge"),
            load_before: before,
            load_after: now,
            prob_before: prob(before)?,
            prob_after: prob(now)?,
        })
    };
    let path_edges = chosen.edge_keys().map(|k| change(&k)).collect::<Result<Vec<_>>>()?;
    let released = discovery
        .loads
        .keys()
        .filter(|k| !after.contains_key(k))
        .map(change)
        .collect::<Result<Vec<_>>>()?;

    ledger.next_handle += handles.len() as u64;
    ledger.circuits.insert(
        label,
        Reservation {
            path: chosen.nodes.clone(),
            handles: handles.clone(),
        },
    );
    Ok(ReservationReport {
        traffic: traffic.clone(),
        mode: mode.name().into(),
        path: chosen.nodes.clone(),
        path_prob_before: path_edges.iter().map(|e| e.prob_before).product(),
        path_prob_after: path_edges.iter().map(|e| e.prob_after).product(),
        path_edges,
        released,
        handles,
    })
}
