//! Road network: nodes, links with volume-delay parameters, minimum-cost
//! routing and the road distances used as the spatial coordinate of the
//! propagation kernels.
//!
//! Links and nodes carry the ids used in the network file, but every
//! algorithm works on dense positions (`usize`) into [`Network::links`] and
//! [`Network::nodes`]. Links are stored sorted by id, so comparing positions
//! is the same as comparing ids.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::fmt;
use std::sync::OnceLock;

use thiserror::Error;

/// Node identifier as written in the network file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub u32);

/// Link identifier as written in the network file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LinkId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl fmt::Display for LinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

pub const DEFAULT_ALPHA: f64 = 0.15;
pub const DEFAULT_BETA: f64 = 4.0;

/// Header row required at the top of a network file.
pub const NETWORK_HEADER: &str = "link_id,from_node,to_node,length,t0,capacity,alpha,beta";

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: NodeId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub id: LinkId,
    /// Position of the tail node in [`Network::nodes`].
    pub from: usize,
    /// Position of the head node in [`Network::nodes`].
    pub to: usize,
    pub length: f64,
    /// Free-flow travel time in steps.
    pub t0: f64,
    /// Vehicles on the link at which the delay term equals `alpha`.
    pub capacity: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl Link {
    /// Free-flow travel time quantized to whole steps.
    pub fn free_flow_steps(&self) -> u32 {
        quantize(self.t0)
    }
}

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid network: {0}")]
    Validation(String),
    #[error("no path from node {origin} to node {dest}")]
    Unreachable { origin: NodeId, dest: NodeId },
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
}

/// Directed road graph. Immutable once built.
#[derive(Debug)]
pub struct Network {
    nodes: Vec<Node>,
    links: Vec<Link>,
    node_index: HashMap<NodeId, usize>,
    link_index: HashMap<LinkId, usize>,
    /// Outgoing link positions per node, ascending by link id.
    adjacency: Vec<Vec<usize>>,
    distances: OnceLock<DistanceTable>,
}

/// Raw link record used to build a [`Network`].
#[derive(Debug, Clone, PartialEq)]
pub struct LinkSpec {
    pub id: u32,
    pub from: u32,
    pub to: u32,
    pub length: f64,
    pub t0: f64,
    pub capacity: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl LinkSpec {
    pub fn new(id: u32, from: u32, to: u32, length: f64, t0: f64, capacity: f64) -> Self {
        Self {
            id,
            from,
            to,
            length,
            t0,
            capacity,
            alpha: DEFAULT_ALPHA,
            beta: DEFAULT_BETA,
        }
    }
}

impl Network {
    /// Builds and validates a network from link records plus optional
    /// isolated nodes.
    pub fn new(link_specs: &[LinkSpec], extra_nodes: &[u32]) -> Result<Self, NetworkError> {
        let mut node_ids: Vec<u32> = extra_nodes.to_vec();
        for l in link_specs {
            node_ids.push(l.from);
            node_ids.push(l.to);
        }
        Self::with_nodes(&node_ids, link_specs)
    }

    /// Builds a network over an explicit node list; every link endpoint must
    /// be one of `node_ids`.
    pub fn with_nodes(node_ids: &[u32], link_specs: &[LinkSpec]) -> Result<Self, NetworkError> {
        let mut node_ids = node_ids.to_vec();
        node_ids.sort_unstable();
        node_ids.dedup();
        if node_ids.is_empty() {
            return Err(NetworkError::Validation("network has no nodes".into()));
        }
        let nodes: Vec<Node> = node_ids.iter().map(|&id| Node { id: NodeId(id) }).collect();
        let node_index: HashMap<NodeId, usize> =
            nodes.iter().enumerate().map(|(i, n)| (n.id, i)).collect();

        let mut specs = link_specs.to_vec();
        specs.sort_by_key(|l| l.id);
        for pair in specs.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(NetworkError::Validation(format!(
                    "duplicate link id {}",
                    pair[0].id
                )));
            }
        }

        let mut links = Vec::with_capacity(specs.len());
        for s in &specs {
            validate_link(s)?;
            for end in [s.from, s.to] {
                if !node_index.contains_key(&NodeId(end)) {
                    return Err(NetworkError::Validation(format!(
                        "link {} references unknown node {end}",
                        s.id
                    )));
                }
            }
            links.push(Link {
                id: LinkId(s.id),
                from: node_index[&NodeId(s.from)],
                to: node_index[&NodeId(s.to)],
                length: s.length,
                t0: s.t0,
                capacity: s.capacity,
                alpha: s.alpha,
                beta: s.beta,
            });
        }
        let link_index = links.iter().enumerate().map(|(i, l)| (l.id, i)).collect();
        let mut adjacency = vec![Vec::new(); nodes.len()];
        for (i, l) in links.iter().enumerate() {
            adjacency[l.from].push(i);
        }

        Ok(Self {
            nodes,
            links,
            node_index,
            link_index,
            adjacency,
            distances: OnceLock::new(),
        })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn link(&self, ix: usize) -> &Link {
        &self.links[ix]
    }

    /// Outgoing link positions of a node, ascending by id.
    pub fn outgoing(&self, node: usize) -> &[usize] {
        &self.adjacency[node]
    }

    pub fn node_ix(&self, id: NodeId) -> Option<usize> {
        self.node_index.get(&id).copied()
    }

    pub fn link_ix(&self, id: LinkId) -> Option<usize> {
        self.link_index.get(&id).copied()
    }

    pub fn node_id(&self, ix: usize) -> NodeId {
        self.nodes[ix].id
    }

    /// Free-flow costs aligned with [`Network::links`].
    pub fn free_flow_costs(&self) -> Vec<f64> {
        self.links.iter().map(|l| l.free_flow_steps() as f64).collect()
    }

    /// All-pairs road distances, computed on first use.
    pub fn distances(&self) -> &DistanceTable {
        self.distances.get_or_init(|| DistanceTable::build(self))
    }

    /// Largest finite road distance between any two nodes.
    pub fn diameter(&self) -> f64 {
        self.distances()
            .values
            .iter()
            .copied()
            .filter(|d| d.is_finite())
            .fold(0.0, f64::max)
    }
}

fn validate_link(s: &LinkSpec) -> Result<(), NetworkError> {
    let bad = |what: &str| {
        Err(NetworkError::Validation(format!(
            "link {}: {what}",
            s.id
        )))
    };
    if s.from == s.to {
        return bad("self-loop");
    }
    if !(s.length > 0.0 && s.length.is_finite()) {
        return bad("length must be positive");
    }
    if !(s.t0 > 0.0 && s.t0.is_finite()) {
        return bad("t0 must be positive");
    }
    if !(s.capacity > 0.0 && s.capacity.is_finite()) {
        return bad("capacity must be positive");
    }
    if !(s.alpha >= 0.0 && s.alpha.is_finite()) {
        return bad("alpha must be non-negative");
    }
    if !(s.beta >= 1.0 && s.beta.is_finite()) {
        return bad("beta must be at least 1");
    }
    Ok(())
}

/// Parses the network CSV format.
///
/// ```text
/// link_id,from_node,to_node,length,t0,capacity,alpha,beta
/// 1,1,2,10.0,5,100,0.15,4
/// #nodes
/// 7
/// ```
///
/// Blank lines are ignored. Nodes are implied by link endpoints; the optional
/// `#nodes` section declares isolated nodes.
pub fn load_network(text: &str) -> Result<Network, NetworkError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());

    match lines.next() {
        Some((_, header)) if normalize_header(header) == NETWORK_HEADER => {}
        Some((line, _)) => {
            return Err(NetworkError::Parse {
                line,
                message: format!("expected header `{NETWORK_HEADER}`"),
            })
        }
        None => {
            return Err(NetworkError::Parse {
                line: 1,
                message: "empty network file".into(),
            })
        }
    }

    let mut specs = Vec::new();
    let mut extra_nodes = Vec::new();
    let mut in_nodes = false;
    for (line, row) in lines {
        if row.eq_ignore_ascii_case("#nodes") {
            in_nodes = true;
            continue;
        }
        let parse_err = |message: String| NetworkError::Parse { line, message };
        if in_nodes {
            let id = row
                .parse::<u32>()
                .map_err(|_| parse_err(format!("bad node id `{row}`")))?;
            extra_nodes.push(id);
            continue;
        }
        let fields: Vec<&str> = row.split(',').map(str::trim).collect();
        if fields.len() != 8 {
            return Err(parse_err(format!("expected 8 fields, found {}", fields.len())));
        }
        let int = |i: usize| {
            fields[i]
                .parse::<u32>()
                .map_err(|_| parse_err(format!("bad integer `{}`", fields[i])))
        };
        let real = |i: usize| {
            fields[i]
                .parse::<f64>()
                .map_err(|_| parse_err(format!("bad number `{}`", fields[i])))
        };
        specs.push(LinkSpec {
            id: int(0)?,
            from: int(1)?,
            to: int(2)?,
            length: real(3)?,
            t0: real(4)?,
            capacity: real(5)?,
            alpha: real(6)?,
            beta: real(7)?,
        });
    }
    Network::new(&specs, &extra_nodes)
}

fn normalize_header(h: &str) -> String {
    h.split(',').map(str::trim).collect::<Vec<_>>().join(",")
}

/// Serializes a network back to the CSV format accepted by [`load_network`].
pub fn write_network(net: &Network) -> String {
    let mut out = String::from(NETWORK_HEADER);
    out.push('\n');
    let mut used = vec![false; net.nodes.len()];
    for l in &net.links {
        used[l.from] = true;
        used[l.to] = true;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            l.id,
            net.node_id(l.from),
            net.node_id(l.to),
            l.length,
            l.t0,
            l.capacity,
            l.alpha,
            l.beta
        ));
    }
    let isolated: Vec<_> = used
        .iter()
        .enumerate()
        .filter(|(_, u)| !**u)
        .map(|(i, _)| net.node_id(i))
        .collect();
    if !isolated.is_empty() {
        out.push_str("#nodes\n");
        for id in isolated {
            out.push_str(&format!("{id}\n"));
        }
    }
    out
}

/// Quantizes a real travel time to whole steps: ceiling, at least 1.
fn quantize(t: f64) -> u32 {
    // Guards against `ceil` pushing values like 23.000000000000004 up a step.
    let steps = (t - 1e-9).ceil();
    if steps < 1.0 {
        1
    } else {
        steps as u32
    }
}

/// Volume-delay travel time `t0 * (1 + alpha * (volume / capacity)^beta)`,
/// rounded up to whole steps and never below one step.
pub fn link_travel_time(link: &Link, volume: f64) -> u32 {
    let ratio = volume.max(0.0) / link.capacity;
    quantize(link.t0 * (1.0 + link.alpha * ratio.powf(link.beta)))
}

#[derive(Clone, Copy, PartialEq)]
struct HeapEntry {
    cost: f64,
    node: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed for a min-heap; node position breaks ties for determinism.
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Single-source Dijkstra. Returns per-node distance and the incoming link
/// on the chosen tree; at equal cost the smaller link id wins.
fn dijkstra(
    net: &Network,
    origin: usize,
    weight: impl Fn(usize) -> f64,
    excluded: Option<usize>,
) -> (Vec<f64>, Vec<Option<usize>>) {
    let n = net.nodes.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut pred: Vec<Option<usize>> = vec![None; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[origin] = 0.0;
    heap.push(HeapEntry {
        cost: 0.0,
        node: origin,
    });
    while let Some(HeapEntry { cost, node }) = heap.pop() {
        if done[node] {
            continue;
        }
        done[node] = true;
        for &l in &net.adjacency[node] {
            if Some(l) == excluded {
                continue;
            }
            let to = net.links[l].to;
            if done[to] {
                continue;
            }
            let candidate = cost + weight(l);
            let better = match candidate.total_cmp(&dist[to]) {
                Ordering::Less => true,
                Ordering::Equal => pred[to].is_some_and(|p| l < p),
                Ordering::Greater => false,
            };
            if better {
                dist[to] = candidate;
                pred[to] = Some(l);
                heap.push(HeapEntry {
                    cost: candidate,
                    node: to,
                });
            }
        }
    }
    (dist, pred)
}

/// Minimum-cost path from `origin` to `dest` as link positions.
///
/// `costs` is aligned with [`Network::links`] and must be non-negative.
pub fn shortest_path(
    net: &Network,
    costs: &[f64],
    origin: usize,
    dest: usize,
) -> Result<Vec<usize>, NetworkError> {
    shortest_path_excluding(net, costs, origin, dest, None)
}

/// Like [`shortest_path`] but never uses the `excluded` link.
pub fn shortest_path_excluding(
    net: &Network,
    costs: &[f64],
    origin: usize,
    dest: usize,
    excluded: Option<usize>,
) -> Result<Vec<usize>, NetworkError> {
    debug_assert_eq!(costs.len(), net.links.len());
    let (dist, pred) = dijkstra(net, origin, |l| costs[l], excluded);
    if !dist[dest].is_finite() {
        return Err(NetworkError::Unreachable {
            origin: net.node_id(origin),
            dest: net.node_id(dest),
        });
    }
    let mut path = Vec::new();
    let mut at = dest;
    while at != origin {
        let l = pred[at].expect("finite distance implies a predecessor");
        path.push(l);
        at = net.links[l].from;
    }
    path.reverse();
    Ok(path)
}

/// Sum of `costs` along a path.
pub fn path_cost(costs: &[f64], path: &[usize]) -> f64 {
    path.iter().map(|&l| costs[l]).sum()
}

/// Road distance between two nodes.
///
/// Uses the directed shortest path by length from `origin` to `position`,
/// falling back to the reverse direction; `f64::INFINITY` when neither
/// direction is connected.
pub fn graph_distance(net: &Network, origin: usize, position: usize) -> f64 {
    net.distances().get(origin, position)
}

/// Precomputed all-pairs road distances with the reverse-direction fallback
/// of [`graph_distance`] already applied.
#[derive(Debug, Clone)]
pub struct DistanceTable {
    n: usize,
    values: Vec<f64>,
}

impl DistanceTable {
    fn build(net: &Network) -> Self {
        let n = net.nodes.len();
        let mut directed = vec![f64::INFINITY; n * n];
        for origin in 0..n {
            let (dist, _) = dijkstra(net, origin, |l| net.links[l].length, None);
            directed[origin * n..(origin + 1) * n].copy_from_slice(&dist);
        }
        let mut values = directed.clone();
        for a in 0..n {
            for b in 0..n {
                if !values[a * n + b].is_finite() {
                    values[a * n + b] = directed[b * n + a];
                }
            }
        }
        Self { n, values }
    }

    pub fn get(&self, origin: usize, position: usize) -> f64 {
        self.values[origin * self.n + position]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parallel(cost_ids: &[u32]) -> Network {
        let specs: Vec<_> = cost_ids
            .iter()
            .map(|&id| LinkSpec::new(id, 1, 2, 1.0, 1.0, 10.0))
            .collect();
        Network::new(&specs, &[]).unwrap()
    }

    #[test]
    fn parses_single_link() {
        let net = load_network(&format!("{NETWORK_HEADER}\n1,1,2,10.0,5,100,0.15,4\n")).unwrap();
        assert_eq!(net.links().len(), 1);
        assert_eq!(net.nodes().len(), 2);
        assert_eq!(net.link(0).t0, 5.0);
        assert_eq!(net.link(0).free_flow_steps(), 5);
    }

    #[test]
    fn nodes_section_adds_isolated_nodes() {
        let text = format!("{NETWORK_HEADER}\n1,1,2,1,1,1,0.15,4\n#nodes\n7\n");
        let net = load_network(&text).unwrap();
        assert_eq!(net.nodes().len(), 3);
        assert!(net.node_ix(NodeId(7)).is_some());
        assert_eq!(load_network(&write_network(&net)).unwrap().nodes().len(), 3);
    }

    #[test]
    fn rejects_dangling_endpoint() {
        let err =
            Network::with_nodes(&[1, 2], &[LinkSpec::new(1, 1, 99, 1.0, 1.0, 1.0)]).unwrap_err();
        assert!(matches!(err, NetworkError::Validation(_)));
        let self_loop = Network::new(&[LinkSpec::new(1, 1, 1, 1.0, 1.0, 1.0)], &[]);
        assert!(matches!(self_loop, Err(NetworkError::Validation(_))));
    }

    #[test]
    fn rejects_duplicate_link_id() {
        let text = format!("{NETWORK_HEADER}\n1,1,2,1,1,1,0.15,4\n1,2,3,1,1,1,0.15,4\n");
        assert!(matches!(
            load_network(&text),
            Err(NetworkError::Validation(_))
        ));
    }

    #[test]
    fn rejects_malformed_rows() {
        let short = format!("{NETWORK_HEADER}\n1,1,2,1\n");
        assert!(matches!(
            load_network(&short),
            Err(NetworkError::Parse { line: 2, .. })
        ));
        let bad_num = format!("{NETWORK_HEADER}\n1,1,2,x,1,1,0.15,4\n");
        assert!(matches!(load_network(&bad_num), Err(NetworkError::Parse { .. })));
        assert!(matches!(
            load_network("id,a,b\n"),
            Err(NetworkError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn rejects_non_positive_fields() {
        for row in [
            "1,1,2,0,1,1,0.15,4",
            "1,1,2,1,0,1,0.15,4",
            "1,1,2,1,1,0,0.15,4",
            "1,1,2,1,1,1,-1,4",
            "1,1,2,1,1,1,0.15,0.5",
        ] {
            let text = format!("{NETWORK_HEADER}\n{row}\n");
            assert!(
                matches!(load_network(&text), Err(NetworkError::Validation(_))),
                "{row}"
            );
        }
    }

    #[test]
    fn travel_time_closure() {
        let mut link = Network::new(&[LinkSpec::new(1, 1, 2, 1.0, 20.0, 10.0)], &[])
            .unwrap()
            .link(0)
            .clone();
        assert_eq!(link_travel_time(&link, 0.0), 20);
        assert_eq!(link_travel_time(&link, 10.0), 23);
        link.alpha = 0.0;
        assert_eq!(link_travel_time(&link, 1e6), 20);
        link.t0 = 0.2;
        assert_eq!(link_travel_time(&link, 0.0), 1);
    }

    #[test]
    fn shortest_path_prefers_cheaper_then_smaller_id() {
        let net = parallel(&[1, 2]);
        assert_eq!(shortest_path(&net, &[5.0, 7.0], 0, 1).unwrap(), vec![0]);
        assert_eq!(shortest_path(&net, &[7.0, 5.0], 0, 1).unwrap(), vec![1]);
        assert_eq!(shortest_path(&net, &[5.0, 5.0], 0, 1).unwrap(), vec![0]);
        assert_eq!(
            shortest_path_excluding(&net, &[5.0, 5.0], 0, 1, Some(0)).unwrap(),
            vec![1]
        );
    }

    #[test]
    fn unreachable_destination() {
        let net = Network::new(&[LinkSpec::new(1, 1, 2, 1.0, 1.0, 1.0)], &[3]).unwrap();
        let err = shortest_path(&net, &[1.0], 0, 2).unwrap_err();
        assert!(matches!(err, NetworkError::Unreachable { .. }));
    }

    #[test]
    fn distances() {
        let net = Network::new(
            &[
                LinkSpec::new(1, 1, 2, 3.0, 1.0, 1.0),
                LinkSpec::new(2, 2, 3, 4.0, 1.0, 1.0),
            ],
            &[9],
        )
        .unwrap();
        assert_eq!(graph_distance(&net, 0, 0), 0.0);
        assert_eq!(graph_distance(&net, 0, 2), 7.0);
        // Reverse direction fallback.
        assert_eq!(graph_distance(&net, 2, 0), 7.0);
        assert_eq!(graph_distance(&net, 0, 3), f64::INFINITY);
        assert_eq!(net.diameter(), 7.0);
    }
}
