//! Distributive cost learning.
//!
//! Every traveler keeps its own table of perceived link costs. A piece of
//! information about a link pulls the perceived cost toward the reported
//! cost by a convex update whose weight comes from the propagation kernel,
//! evaluated at the traveler's road distance from where the information
//! originated and at the information's age.

use thiserror::Error;

use crate::kernels::KernelSpec;
use crate::network::{graph_distance, DistanceTable, Network};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearningError {
    #[error("unknown link position {0}")]
    UnknownLink(usize),
    #[error("learning weight {0} outside [0, 1]")]
    InvalidWeight(f64),
}

/// One piece of traffic information: the realized travel time of a link,
/// originating at the link's tail node.
#[derive(Debug, Clone, PartialEq)]
pub struct InfoItem {
    pub id: u64,
    /// Link position in the network.
    pub link: usize,
    /// Reported travel time in steps.
    pub new_cost: f64,
    /// Node position where the information originates.
    pub origin_node: usize,
    pub birth_step: u64,
}

impl InfoItem {
    pub fn age(&self, now: u64) -> u64 {
        now.saturating_sub(self.birth_step)
    }
}

/// Per-traveler perceived cost of every link, aligned with
/// [`Network::links`].
#[derive(Debug, Clone, PartialEq)]
pub struct PerceivedCosts {
    costs: Vec<f64>,
}

impl PerceivedCosts {
    /// Static knowledge: every link at its free-flow time.
    pub fn free_flow(net: &Network) -> Self {
        Self {
            costs: net.free_flow_costs(),
        }
    }

    pub fn from_costs(costs: Vec<f64>) -> Self {
        Self { costs }
    }

    pub fn get(&self, link: usize) -> Option<f64> {
        self.costs.get(link).copied()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.costs
    }

    /// `old * (1 - p) + new_cost * p` for one link.
    pub fn apply_update(&mut self, link: usize, new_cost: f64, p: f64) -> Result<(), LearningError> {
        if !(0.0..=1.0).contains(&p) {
            return Err(LearningError::InvalidWeight(p));
        }
        let old = self
            .costs
            .get_mut(link)
            .ok_or(LearningError::UnknownLink(link))?;
        *old = blend(*old, new_cost, p);
        Ok(())
    }
}

#[inline]
fn blend(old: f64, new_cost: f64, p: f64) -> f64 {
    old * (1.0 - p) + new_cost * p
}

/// Free-function form of [`PerceivedCosts::apply_update`].
pub fn apply_update(
    perceived: &mut PerceivedCosts,
    link: usize,
    new_cost: f64,
    p: f64,
) -> Result<(), LearningError> {
    perceived.apply_update(link, new_cost, p)
}

/// Bounds on the set of active information items.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearningConfig {
    /// Items whose weight at distance zero falls below this are dropped.
    pub expire_epsilon: f64,
    /// Items older than this many steps are dropped.
    pub max_age: u64,
}

pub const DEFAULT_EXPIRE_EPSILON: f64 = 1e-4;

impl LearningConfig {
    /// Defaults for a kernel: epsilon `1e-4`, maximum age ten time scales.
    pub fn for_kernel(k: &KernelSpec) -> Self {
        let max_age = k
            .time_scale()
            .map(|s| (10.0 * s).ceil().max(1.0) as u64)
            .unwrap_or(1);
        Self {
            expire_epsilon: DEFAULT_EXPIRE_EPSILON,
            max_age,
        }
    }
}

/// Weight of `item` for a traveler at node `agent_position` at step `now`.
pub fn compute_weight(
    k: &KernelSpec,
    item: &InfoItem,
    agent_position: usize,
    now: u64,
    net: &Network,
) -> f64 {
    let x = graph_distance(net, item.origin_node, agent_position);
    k.eval(x, item.age(now) as f64)
}

/// A traveler that learns from information items.
pub trait Learner {
    /// Node position used as the traveler's location for distances.
    fn position(&self) -> usize;
    /// The traveler's perceived costs; `None` for travelers who do not
    /// receive information.
    fn perceived_mut(&mut self) -> Option<&mut PerceivedCosts>;
}

/// Per-step cache keyed by traveler position. Travelers at the same node
/// see identical weights, so the ordered updates for each link compose into
/// one affine map `c -> a * c + b` shared by everyone at that node.
pub struct WeightCache<'a> {
    kernel: &'a KernelSpec,
    distances: &'a DistanceTable,
    now: u64,
    by_position: Vec<Option<Vec<(usize, f64, f64)>>>,
}

impl<'a> WeightCache<'a> {
    pub fn new(kernel: &'a KernelSpec, net: &'a Network, now: u64) -> Self {
        Self {
            kernel,
            distances: net.distances(),
            now,
            by_position: vec![None; net.nodes().len()],
        }
    }

    fn maps(&mut self, position: usize, items: &[InfoItem]) -> &[(usize, f64, f64)] {
        let (kernel, distances, now) = (self.kernel, self.distances, self.now);
        self.by_position[position].get_or_insert_with(|| {
            let mut slot: Vec<Option<usize>> = Vec::new();
            let mut maps: Vec<(usize, f64, f64)> = Vec::new();
            for item in items {
                let x = distances.get(item.origin_node, position);
                let p = kernel.eval(x, item.age(now) as f64);
                if p <= 0.0 {
                    continue;
                }
                if slot.len() <= item.link {
                    slot.resize(item.link + 1, None);
                }
                let ix = *slot[item.link].get_or_insert_with(|| {
                    maps.push((item.link, 1.0, 0.0));
                    maps.len() - 1
                });
                let (_, a, b) = &mut maps[ix];
                *a *= 1.0 - p;
                *b = blend(*b, item.new_cost, p);
            }
            maps
        })
    }

    /// Applies every item, in order, to one traveler.
    pub fn apply<L: Learner + ?Sized>(&mut self, agent: &mut L, items: &[InfoItem]) {
        let position = agent.position();
        let Some(perceived) = agent.perceived_mut() else {
            return;
        };
        for &(link, a, b) in self.maps(position, items) {
            let c = &mut perceived.costs[link];
            *c = if a == 0.0 { b } else { a * *c + b };
        }
    }
}

/// One learning pass.
///
/// Items older than `cfg.max_age` are dropped first and never applied. Every
/// remaining item is then applied to every agent in `(birth_step, id)`
/// order, and afterwards items whose weight at distance zero is below
/// `cfg.expire_epsilon` are dropped.
pub fn step_learning<'a, L, I>(
    agents: I,
    items: &mut Vec<InfoItem>,
    k: &KernelSpec,
    now: u64,
    net: &Network,
    cfg: &LearningConfig,
) where
    L: Learner + 'a + ?Sized,
    I: IntoIterator<Item = &'a mut L>,
{
    items.retain(|item| item.age(now) <= cfg.max_age);
    debug_assert!(items
        .windows(2)
        .all(|w| (w[0].birth_step, w[0].id) <= (w[1].birth_step, w[1].id)));
    if !items.is_empty() {
        let mut cache = WeightCache::new(k, net, now);
        for agent in agents {
            cache.apply(agent, items);
        }
    }
    items.retain(|item| k.eval(0.0, item.age(now) as f64) >= cfg.expire_epsilon);
}
