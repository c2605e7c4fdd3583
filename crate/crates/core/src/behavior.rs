//! Traveler behavior: whether a guided traveler takes the information into
//! account (user selection), and how it turns perceived costs into a route
//! (information reaction).

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::learning::{Learner, PerceivedCosts};
use crate::network::{path_cost, shortest_path, shortest_path_excluding, Network, NetworkError};

/// Features of the selection model, each in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionContext {
    /// Service quality.
    pub x_serv: f64,
    /// Congestion: mean volume/capacity over links, clipped.
    pub x_tra: f64,
    /// Traveler's propensity to comply.
    pub x_user: f64,
}

impl SelectionContext {
    pub fn new(x_serv: f64, x_tra: f64, x_user: f64) -> Self {
        Self {
            x_serv: x_serv.clamp(0.0, 1.0),
            x_tra: x_tra.clamp(0.0, 1.0),
            x_user: x_user.clamp(0.0, 1.0),
        }
    }
}

/// Logistic selection model. The weights are free parameters; the defaults
/// (`bias = 0`, all weights `1`) carry no calibration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionModel {
    pub bias: f64,
    pub w_serv: f64,
    pub w_tra: f64,
    pub w_user: f64,
}

impl Default for SelectionModel {
    fn default() -> Self {
        Self {
            bias: 0.0,
            w_serv: 1.0,
            w_tra: 1.0,
            w_user: 1.0,
        }
    }
}

impl SelectionModel {
    /// A model that selects with probability `logistic(bias)` regardless of
    /// context.
    pub fn constant(bias: f64) -> Self {
        Self {
            bias,
            w_serv: 0.0,
            w_tra: 0.0,
            w_user: 0.0,
        }
    }
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Probability that a guided traveler acts on the guidance.
pub fn selection_probability(m: &SelectionModel, ctx: &SelectionContext) -> f64 {
    logistic(m.bias + m.w_serv * ctx.x_serv + m.w_tra * ctx.x_tra + m.w_user * ctx.x_user)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReactionStrategy {
    /// Take the shortest path under the perceived costs.
    MinPerceivedCost,
    /// Switch to the best alternative with probability proportional to the
    /// relative perceived saving, scaled by `gain`.
    EquilibriumFeedback { gain: f64 },
}

impl ReactionStrategy {
    pub fn validate(&self) -> Result<(), String> {
        match *self {
            ReactionStrategy::MinPerceivedCost => Ok(()),
            ReactionStrategy::EquilibriumFeedback { gain } if gain > 0.0 && gain <= 1.0 => Ok(()),
            ReactionStrategy::EquilibriumFeedback { gain } => {
                Err(format!("gain must lie in (0, 1], got {gain}"))
            }
        }
    }
}

/// Who runs the selection gate relative to route computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OrderingMode {
    /// The traveler decides first whether to use the information; no route is
    /// computed when it does not.
    #[default]
    Descriptive,
    /// The system computes a route first; the traveler then decides whether
    /// to adopt it.
    Prescriptive,
}

impl OrderingMode {
    /// Whether the selection gate is evaluated before the route is computed.
    pub fn gate_before_route(self) -> bool {
        matches!(self, OrderingMode::Descriptive)
    }
}

impl fmt::Display for OrderingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OrderingMode::Descriptive => "descriptive",
            OrderingMode::Prescriptive => "prescriptive",
        })
    }
}

impl FromStr for OrderingMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "descriptive" => Ok(OrderingMode::Descriptive),
            "prescriptive" => Ok(OrderingMode::Prescriptive),
            other => Err(format!("unknown mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Position {
    /// At a node, ready to take a decision.
    Node(usize),
    /// Travelling on a link; reaches node `to` at step `exit_step`.
    Link { link: usize, to: usize, exit_step: u64 },
}

#[derive(Debug, Clone)]
pub struct Agent {
    pub id: u64,
    pub origin: usize,
    pub dest: usize,
    pub depart_step: u64,
    pub guided: bool,
    pub position: Position,
    /// Present for guided travelers only.
    pub perceived: Option<PerceivedCosts>,
    /// Remaining planned links from the current (or next) node.
    pub route: Vec<usize>,
    pub trip_start: u64,
    pub trip_end: Option<u64>,
    rng: ChaCha8Rng,
}

impl Agent {
    /// A traveler at its origin following `route`. Guided travelers start
    /// from free-flow knowledge. Its random stream is derived from the run
    /// seed and its id, so decisions do not depend on other travelers.
    pub fn new(
        id: u64,
        origin: usize,
        dest: usize,
        depart_step: u64,
        guided: bool,
        route: Vec<usize>,
        net: &Network,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(id);
        Self {
            id,
            origin,
            dest,
            depart_step,
            guided,
            position: Position::Node(origin),
            perceived: guided.then(|| PerceivedCosts::free_flow(net)),
            route,
            trip_start: depart_step,
            trip_end: None,
            rng,
        }
    }

    pub fn node(&self) -> Option<usize> {
        match self.position {
            Position::Node(n) => Some(n),
            Position::Link { .. } => None,
        }
    }
}

impl Learner for Agent {
    fn position(&self) -> usize {
        match self.position {
            Position::Node(n) => n,
            Position::Link { to, .. } => to,
        }
    }

    fn perceived_mut(&mut self) -> Option<&mut PerceivedCosts> {
        self.perceived.as_mut()
    }
}

/// What happened at one decision point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Decision {
    /// A reaction route was computed.
    pub computed: bool,
    /// The traveler's planned route changed.
    pub switched: bool,
}

/// Deterministic part of a reaction, computed before any random draw.
enum Plan {
    Replace(Vec<usize>),
    Switch { alternative: Vec<usize>, probability: f64 },
    Keep,
}

fn plan(agent: &Agent, at: usize, net: &Network, strategy: &ReactionStrategy) -> Result<Plan, NetworkError> {
    let costs = agent
        .perceived
        .as_ref()
        .expect("guided travelers carry perceived costs")
        .as_slice();
    match *strategy {
        ReactionStrategy::MinPerceivedCost => Ok(Plan::Replace(shortest_path(net, costs, at, agent.dest)?)),
        ReactionStrategy::EquilibriumFeedback { gain } => {
            let Some(&next) = agent.route.first() else {
                return Ok(Plan::Replace(shortest_path(net, costs, at, agent.dest)?));
            };
            let current = path_cost(costs, &agent.route);
            match shortest_path_excluding(net, costs, at, agent.dest, Some(next)) {
                Ok(alternative) => {
                    let alt_cost = path_cost(costs, &alternative);
                    Ok(Plan::Switch {
                        alternative,
                        probability: switch_probability(gain, current, alt_cost),
                    })
                }
                Err(NetworkError::Unreachable { .. }) => Ok(Plan::Keep),
                Err(e) => Err(e),
            }
        }
    }
}

/// `gain * max(0, (current - alternative) / current)`.
pub fn switch_probability(gain: f64, current: f64, alternative: f64) -> f64 {
    if current <= 0.0 {
        return 0.0;
    }
    (gain * ((current - alternative) / current).max(0.0)).clamp(0.0, 1.0)
}

fn adopt(agent: &mut Agent, plan: Plan) -> bool {
    match plan {
        Plan::Replace(route) => {
            let changed = route != agent.route;
            agent.route = route;
            changed
        }
        Plan::Switch {
            alternative,
            probability,
        } => {
            let u: f64 = agent.rng.gen();
            if u < probability {
                agent.route = alternative;
                true
            } else {
                false
            }
        }
        Plan::Keep => false,
    }
}

/// Runs one decision for a traveler standing at a node.
///
/// Unguided travelers keep the free-flow route assigned at departure.
/// Guided travelers pass the selection gate with probability
/// [`selection_probability`] and then react according to `strategy`. The
/// gate consumes exactly one uniform draw from the traveler's stream in both
/// ordering modes, so both modes produce the same routes for the same seed;
/// they differ only in whether a route is computed when the gate fails.
pub fn choose_route(
    agent: &mut Agent,
    net: &Network,
    strategy: &ReactionStrategy,
    mode: OrderingMode,
    ctx: &SelectionContext,
    model: &SelectionModel,
) -> Result<Decision, NetworkError> {
    let Some(at) = agent.node() else {
        return Ok(Decision::default());
    };
    if !agent.guided || at == agent.dest {
        return Ok(Decision::default());
    }
    let p_sel = selection_probability(model, ctx);
    match mode {
        OrderingMode::Descriptive => {
            let u: f64 = agent.rng.gen();
            if u >= p_sel {
                return Ok(Decision::default());
            }
            let plan = plan(agent, at, net, strategy)?;
            Ok(Decision {
                computed: true,
                switched: adopt(agent, plan),
            })
        }
        OrderingMode::Prescriptive => {
            let plan = plan(agent, at, net, strategy)?;
            let u: f64 = agent.rng.gen();
            let switched = u < p_sel && adopt(agent, plan);
            Ok(Decision {
                computed: true,
                switched,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::LinkSpec;

    /// Node 1 to node 2 over two parallel links (ids 1 and 2).
    fn two_links() -> Network {
        Network::new(
            &[
                LinkSpec::new(1, 1, 2, 1.0, 5.0, 10.0),
                LinkSpec::new(2, 1, 2, 1.0, 5.0, 10.0),
            ],
            &[],
        )
        .unwrap()
    }

    fn guided(net: &Network, id: u64) -> Agent {
        Agent::new(id, 0, 1, 0, true, vec![0], net, 7)
    }

    const ALWAYS: f64 = 60.0;
    const NEVER: f64 = -60.0;

    #[test]
    fn logistic_examples() {
        let ctx = SelectionContext::new(0.3, 0.8, 0.1);
        assert_eq!(
            selection_probability(&SelectionModel::constant(0.0), &ctx),
            0.5
        );
        assert!(selection_probability(&SelectionModel::constant(-20.0), &ctx) < 1e-8);
    }

    #[test]
    fn selection_is_monotone_in_compliance() {
        let m = SelectionModel::default();
        for serv in [0.0, 0.5, 1.0] {
            for tra in [0.0, 0.5, 1.0] {
                let mut last = 0.0;
                for i in 0..=20 {
                    let p = selection_probability(&m, &SelectionContext::new(serv, tra, i as f64 / 20.0));
                    assert!(p > last && p < 1.0);
                    last = p;
                }
            }
        }
    }

    #[test]
    fn unguided_keeps_route() {
        let net = two_links();
        let mut a = Agent::new(0, 0, 1, 0, false, vec![0], &net, 1);
        let d = choose_route(
            &mut a,
            &net,
            &ReactionStrategy::MinPerceivedCost,
            OrderingMode::Descriptive,
            &SelectionContext::new(1.0, 1.0, 1.0),
            &SelectionModel::constant(ALWAYS),
        )
        .unwrap();
        assert_eq!(d, Decision::default());
        assert_eq!(a.route, vec![0]);
    }

    #[test]
    fn min_cost_picks_cheaper_perceived_route() {
        let net = two_links();
        let mut a = guided(&net, 0);
        a.perceived = Some(PerceivedCosts::from_costs(vec![9.0, 6.0]));
        let d = choose_route(
            &mut a,
            &net,
            &ReactionStrategy::MinPerceivedCost,
            OrderingMode::Descriptive,
            &SelectionContext::new(1.0, 0.0, 1.0),
            &SelectionModel::constant(ALWAYS),
        )
        .unwrap();
        assert!(d.computed && d.switched);
        assert_eq!(a.route, vec![1]);
    }

    #[test]
    fn ordering_modes() {
        let net = two_links();
        let ctx = SelectionContext::new(1.0, 0.0, 1.0);
        let strategy = ReactionStrategy::MinPerceivedCost;
        let run = |mode, bias| {
            let mut computed = 0;
            let mut routes = Vec::new();
            for id in 0..50 {
                let mut a = guided(&net, id);
                a.perceived = Some(PerceivedCosts::from_costs(vec![9.0, 6.0]));
                let d = choose_route(&mut a, &net, &strategy, mode, &ctx, &SelectionModel::constant(bias)).unwrap();
                computed += d.computed as usize;
                routes.push(a.route);
            }
            (computed, routes)
        };
        let (c, routes) = run(OrderingMode::Descriptive, NEVER);
        assert_eq!(c, 0);
        assert!(routes.iter().all(|r| r == &vec![0]));
        let (c, routes) = run(OrderingMode::Prescriptive, NEVER);
        assert_eq!(c, 50);
        assert!(routes.iter().all(|r| r == &vec![0]));
        assert_eq!(run(OrderingMode::Descriptive, ALWAYS).1, run(OrderingMode::Prescriptive, ALWAYS).1);
        // Same draws in both modes at intermediate selection rates too.
        assert_eq!(run(OrderingMode::Descriptive, 0.0).1, run(OrderingMode::Prescriptive, 0.0).1);
    }

    #[test]
    fn feedback_never_switches_at_equal_cost() {
        let net = two_links();
        let strategy = ReactionStrategy::EquilibriumFeedback { gain: 1.0 };
        let ctx = SelectionContext::new(1.0, 0.0, 1.0);
        let mut switches = 0;
        for id in 0..10_000 {
            let mut a = guided(&net, id);
            a.perceived = Some(PerceivedCosts::from_costs(vec![8.0, 8.0]));
            let d = choose_route(&mut a, &net, &strategy, OrderingMode::Descriptive, &ctx, &SelectionModel::constant(ALWAYS)).unwrap();
            switches += d.switched as usize;
        }
        assert_eq!(switches, 0);
    }

    #[test]
    fn feedback_switch_rate_tracks_saving() {
        let net = two_links();
        let strategy = ReactionStrategy::EquilibriumFeedback { gain: 0.5 };
        let ctx = SelectionContext::new(1.0, 0.0, 1.0);
        let n = 20_000;
        let mut switches = 0;
        for id in 0..n {
            let mut a = guided(&net, id);
            a.perceived = Some(PerceivedCosts::from_costs(vec![10.0, 6.0]));
            let d = choose_route(&mut a, &net, &strategy, OrderingMode::Descriptive, &ctx, &SelectionModel::constant(ALWAYS)).unwrap();
            switches += d.switched as usize;
        }
        // Expected rate 0.5 * 0.4 = 0.2.
        let rate = switches as f64 / n as f64;
        assert!((rate - 0.2).abs() < 0.015, "{rate}");
    }

    #[test]
    fn switch_probability_shape() {
        assert_eq!(switch_probability(1.0, 10.0, 10.0), 0.0);
        assert_eq!(switch_probability(1.0, 10.0, 12.0), 0.0);
        let mut last = 0.0;
        for alt in (0..=10).rev() {
            let p = switch_probability(0.7, 10.0, alt as f64);
            assert!(p >= last);
            last = p;
        }
    }

    #[test]
    fn true_costs_give_true_shortest_path() {
        let net = Network::new(
            &[
                LinkSpec::new(1, 1, 2, 1.0, 2.0, 10.0),
                LinkSpec::new(2, 2, 4, 1.0, 2.0, 10.0),
                LinkSpec::new(3, 1, 3, 1.0, 1.0, 10.0),
                LinkSpec::new(4, 3, 4, 1.0, 1.0, 10.0),
                LinkSpec::new(5, 2, 3, 1.0, 1.0, 10.0),
            ],
            &[],
        )
        .unwrap();
        let truth = vec![3.0, 1.0, 4.0, 2.5, 0.5];
        let mut a = Agent::new(0, 0, 3, 0, true, vec![0, 1], &net, 3);
        a.perceived = Some(PerceivedCosts::from_costs(truth.clone()));
        choose_route(
            &mut a,
            &net,
            &ReactionStrategy::MinPerceivedCost,
            OrderingMode::Prescriptive,
            &SelectionContext::new(1.0, 0.0, 1.0),
            &SelectionModel::constant(ALWAYS),
        )
        .unwrap();
        assert_eq!(a.route, shortest_path(&net, &truth, 0, 3).unwrap());
    }
}
