//! Online learning: the true quantity is revealed after every estimate, so
//! the posterior over the kernel parameter evolves during inference. The
//! optimal strategy is backward induction over the belief-augmented state
//! `(π_i, x)`, where the `π_i` range over the finite set of posteriors
//! reachable from the prior.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::known::argmin;
use crate::model::{check_index, Belief, ParametricFamily, Scenario, DRIFT_TOL, PROB_TOL};
use crate::offline::tilde_loss_unchecked;

pub const DEFAULT_NODE_CAP: usize = 1_000_000;

/// Grid used to bucket beliefs before the exact tolerance comparison.
const BUCKET_GRID: f64 = 1e-10;
/// Entries closer than this to a bucket edge are also probed in the
/// neighbouring bucket.
const EDGE_MARGIN: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefNode {
    pub id: usize,
    pub round: usize,
    pub belief: Belief,
}

/// Reachable posteriors per round and the Bayes-update transitions between
/// them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefGraph {
    pub nodes: Vec<Vec<BeliefNode>>,
    /// `transitions[i][node][x * |Y| + y]`: successor node at round `i + 1`,
    /// `None` for zero-probability `(x, y)`. Empty for the last round.
    pub transitions: Vec<Vec<Vec<Option<usize>>>>,
    pub n_y: usize,
}

impl BeliefGraph {
    pub fn node_counts(&self) -> Vec<usize> {
        self.nodes.iter().map(Vec::len).collect()
    }

    #[inline]
    pub fn successor(&self, round: usize, node: usize, x: usize, y: usize) -> Option<usize> {
        self.transitions[round][node][x * self.n_y + y]
    }

    /// Node at `round` within [`PROB_TOL`] (L∞) of `belief`.
    pub fn find(&self, round: usize, belief: &Belief) -> Option<usize> {
        self.nodes
            .get(round)?
            .iter()
            .position(|n| n.belief.linf_distance(belief) <= PROB_TOL)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlinePolicy {
    pub graph: BeliefGraph,
    /// `psi[i][node][x]`.
    pub psi: Vec<Vec<Vec<usize>>>,
    /// `v[i][node][x]`.
    pub v: Vec<Vec<Vec<f64>>>,
    /// `q[i][node][x][yhat]`.
    pub q: Vec<Vec<Vec<Vec<f64>>>>,
}

impl OnlinePolicy {
    pub fn root_belief(&self) -> &Belief {
        &self.graph.nodes[0][0].belief
    }

    fn check_shape(&self, s: &Scenario) -> Result<()> {
        let n = s.horizon;
        let ok = self.graph.nodes.len() == n
            && self.psi.len() == n
            && self.v.len() == n
            && self.q.len() == n
            && self.graph.n_y == s.n_y()
            && (0..n).all(|i| {
                let k = self.graph.nodes[i].len();
                self.psi[i].len() == k
                    && self.v[i].len() == k
                    && self.q[i].len() == k
                    && self.psi[i].iter().all(|r| r.len() == s.n_x())
                    && self.q[i].iter().flatten().all(|r| r.len() == s.n_yhat())
            });
        if ok {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(
                "online policy does not match the scenario shape".into(),
            ))
        }
    }
}

/// Prior-predictive probability `m_b(y|x) = Σ_w b[w]·P(y|x,w)`.
#[inline]
pub fn predictive(family: &ParametricFamily, belief: &Belief, x: usize, y: usize) -> f64 {
    family
        .members
        .iter()
        .zip(&belief.probs)
        .map(|(m, &b)| b * m.get(x, y))
        .sum()
}

fn update_unchecked(family: &ParametricFamily, belief: &Belief, x: usize, y: usize) -> Result<Belief> {
    let mut probs: Vec<f64> = family
        .members
        .iter()
        .zip(&belief.probs)
        .map(|(m, &b)| b * m.get(x, y))
        .collect();
    let total: f64 = probs.iter().sum();
    if total <= 0.0 {
        return Err(Error::ImpossibleObservation { x, y });
    }
    probs.iter_mut().for_each(|p| *p /= total);
    let drift = probs.iter().sum::<f64>() - 1.0;
    if drift.abs() > DRIFT_TOL {
        let sum: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= sum);
    }
    Ok(Belief::new(probs))
}

/// Bayes update of the parameter belief after observing `(x, y)`.
pub fn belief_update(family: &ParametricFamily, belief: &Belief, x: usize, y: usize) -> Result<Belief> {
    if belief.len() != family.n_params() {
        return Err(Error::ShapeMismatch("belief length differs from family size".into()));
    }
    let member = &family.members[0];
    check_index("x", x, member.n_x())?;
    check_index("y", y, member.n_y())?;
    update_unchecked(family, belief, x, y)
}

/// Bucketed belief lookup: quantize to [`BUCKET_GRID`], then confirm with
/// L∞ ≤ [`PROB_TOL`].
struct BeliefIndex {
    buckets: HashMap<Vec<i64>, Vec<usize>>,
}

impl BeliefIndex {
    fn new() -> Self {
        Self {
            buckets: HashMap::new(),
        }
    }

    fn key(belief: &Belief) -> Vec<i64> {
        belief.probs.iter().map(|p| (p / BUCKET_GRID).floor() as i64).collect()
    }

    fn find(&self, belief: &Belief, nodes: &[BeliefNode]) -> Option<usize> {
        let base = Self::key(belief);
        // dimensions whose entry sits near a bucket edge get a second probe
        let alternates: Vec<(usize, i64)> = belief
            .probs
            .iter()
            .enumerate()
            .filter_map(|(d, p)| {
                let frac = p / BUCKET_GRID - base[d] as f64;
                if frac < EDGE_MARGIN {
                    Some((d, base[d] - 1))
                } else if frac > 1.0 - EDGE_MARGIN {
                    Some((d, base[d] + 1))
                } else {
                    None
                }
            })
            .collect();
        let mut key = base.clone();
        for mask in 0u64..(1u64 << alternates.len().min(16)) {
            for (bit, &(d, alt)) in alternates.iter().enumerate().take(16) {
                key[d] = if mask & (1 << bit) != 0 { alt } else { base[d] };
            }
            if let Some(ids) = self.buckets.get(&key) {
                if let Some(&id) = ids
                    .iter()
                    .find(|&&id| nodes[id].belief.linf_distance(belief) <= PROB_TOL)
                {
                    return Some(id);
                }
            }
        }
        None
    }

    fn insert(&mut self, belief: &Belief, id: usize) {
        self.buckets.entry(Self::key(belief)).or_default().push(id);
    }
}

/// Enumerates the posteriors reachable at each round from the prior via
/// Bayes updates on positive-probability `(x, y)`, deduplicated per round.
/// Node ids follow discovery order (parent node, then `x`, then `y`).
pub fn reachable_beliefs(s: &Scenario, cap: usize) -> Result<BeliefGraph> {
    let (family, prior) = s.family_and_prior()?;
    let (nx, ny) = (s.n_x(), s.n_y());
    let mut nodes = vec![vec![BeliefNode {
        id: 0,
        round: 0,
        belief: prior.clone(),
    }]];
    let mut transitions = Vec::with_capacity(s.horizon);
    for round in 0..s.horizon.saturating_sub(1) {
        let mut index = BeliefIndex::new();
        let mut next: Vec<BeliefNode> = Vec::new();
        let mut round_transitions = Vec::with_capacity(nodes[round].len());
        for node in &nodes[round] {
            let mut row = vec![None; nx * ny];
            for x in 0..nx {
                for y in 0..ny {
                    if predictive(family, &node.belief, x, y) <= 0.0 {
                        continue;
                    }
                    let updated = update_unchecked(family, &node.belief, x, y)?;
                    let id = match index.find(&updated, &next) {
                        Some(id) => id,
                        None => {
                            let id = next.len();
                            if id >= cap {
                                return Err(Error::CapExceeded {
                                    what: format!("belief nodes at round {}", round + 2),
                                    count: id as u128 + 1,
                                    cap: cap as u128,
                                });
                            }
                            index.insert(&updated, id);
                            next.push(BeliefNode {
                                id,
                                round: round + 1,
                                belief: updated,
                            });
                            id
                        }
                    };
                    row[x * ny + y] = Some(id);
                }
            }
            round_transitions.push(row);
        }
        transitions.push(round_transitions);
        nodes.push(next);
    }
    transitions.push(Vec::new());
    Ok(BeliefGraph {
        nodes,
        transitions,
        n_y: ny,
    })
}

pub fn solve_online(s: &Scenario) -> Result<OnlinePolicy> {
    solve_online_capped(s, DEFAULT_NODE_CAP)
}

pub fn solve_online_capped(s: &Scenario, cap: usize) -> Result<OnlinePolicy> {
    s.ensure_valid()?;
    let (family, _) = s.family_and_prior()?;
    let graph = reachable_beliefs(s, cap)?;
    let (n, nx, ny, nyh) = (s.horizon, s.n_x(), s.n_y(), s.n_yhat());
    let mut psi = vec![Vec::new(); n];
    let mut v: Vec<Vec<Vec<f64>>> = vec![Vec::new(); n];
    let mut q = vec![Vec::new(); n];
    for i in (0..n).rev() {
        let round_nodes = &graph.nodes[i];
        let mut q_round = Vec::with_capacity(round_nodes.len());
        for (node_id, node) in round_nodes.iter().enumerate() {
            let b = &node.belief;
            let mut q_node = Vec::with_capacity(nx);
            for x in 0..nx {
                let row: Vec<f64> = (0..nyh)
                    .map(|yh| {
                        let mut value = tilde_loss_unchecked(family, &s.loss, b, x, yh);
                        if i + 1 < n {
                            let kernel_row = s.obs_kernel(i).row(x, yh);
                            let mut cont = 0.0;
                            for y in 0..ny {
                                let Some(succ) = graph.successor(i, node_id, x, y) else {
                                    continue;
                                };
                                let next_v = &v[i + 1][succ];
                                let inner: f64 = kernel_row.iter().zip(next_v).map(|(p, nv)| p * nv).sum();
                                cont += predictive(family, b, x, y) * inner;
                            }
                            value += cont;
                        }
                        value
                    })
                    .collect();
                q_node.push(row);
            }
            q_round.push(q_node);
        }
        psi[i] = q_round
            .iter()
            .map(|q_node: &Vec<Vec<f64>>| q_node.iter().map(|row| argmin(row)).collect::<Vec<_>>())
            .collect();
        v[i] = q_round
            .iter()
            .zip(&psi[i])
            .map(|(q_node, psi_node): (&Vec<Vec<f64>>, &Vec<usize>)| {
                q_node.iter().zip(psi_node).map(|(row, &a)| row[a]).collect()
            })
            .collect();
        q[i] = q_round;
    }
    Ok(OnlinePolicy { graph, psi, v, q })
}

/// `Σ_x P_{X_1}(x)·v[0][root][x]`.
pub fn value_online(s: &Scenario, p: &OnlinePolicy) -> Result<f64> {
    p.check_shape(s)?;
    Ok(s.init.probs.iter().zip(&p.v[0][0]).map(|(a, b)| a * b).sum())
}

/// Estimate for round `history.len()` after the revealed pairs `history`,
/// together with the current posterior.
pub fn act_online(s: &Scenario, p: &OnlinePolicy, history: &[(usize, usize)], x_now: usize) -> Result<(usize, Belief)> {
    let (family, _) = s.family_and_prior()?;
    p.check_shape(s)?;
    check_index("round", history.len(), s.horizon)?;
    s.check_x(x_now)?;
    let mut belief = p.root_belief().clone();
    for &(x, y) in history {
        belief = belief_update(family, &belief, x, y)?;
    }
    let round = history.len();
    let node = p.graph.find(round, &belief).ok_or(Error::NodeNotFound { round })?;
    Ok((p.psi[round][node][x_now], belief))
}

/// Conditional expected loss from 0-indexed round `round` onward given
/// `π_round` is the belief of `node` and `X_round = x`, following `p.psi`.
///
/// Draws the parameter from the node belief and pushes the joint
/// distribution of `(w, node, x)` forward, charging the raw loss. Only
/// `p.psi` and the transition map are read.
pub fn loss_to_go_online(s: &Scenario, p: &OnlinePolicy, round: usize, node: usize, x: usize) -> Result<f64> {
    let (family, _) = s.family_and_prior()?;
    p.check_shape(s)?;
    check_index("round", round, s.horizon)?;
    check_index("node", node, p.graph.nodes[round].len())?;
    s.check_x(x)?;
    let (nx, ny) = (s.n_x(), s.n_y());
    let belief = &p.graph.nodes[round][node].belief;
    let mut total = 0.0;
    for (w, &weight) in belief.probs.iter().enumerate() {
        if weight == 0.0 {
            continue;
        }
        let member = &family.members[w];
        // mass over (node, x) at the current round
        let mut dist: Vec<f64> = vec![0.0; p.graph.nodes[round].len() * nx];
        dist[node * nx + x] = weight;
        for i in round..s.horizon {
            let mut next = if i + 1 < s.horizon {
                vec![0.0; p.graph.nodes[i + 1].len() * nx]
            } else {
                Vec::new()
            };
            for (state, &mass) in dist.iter().enumerate() {
                if mass == 0.0 {
                    continue;
                }
                let (k, xs) = (state / nx, state % nx);
                let yh = p.psi[i][k][xs];
                for y in 0..ny {
                    let py = member.get(xs, y);
                    if py == 0.0 {
                        continue;
                    }
                    total += mass * py * s.loss.get(xs, y, yh);
                    if i + 1 < s.horizon {
                        let succ = p
                            .graph
                            .successor(i, k, xs, y)
                            .ok_or(Error::ImpossibleObservation { x: xs, y })?;
                        for (x2, &pk) in s.obs_kernel(i).row(xs, yh).iter().enumerate() {
                            next[succ * nx + x2] += mass * py * pk;
                        }
                    }
                }
            }
            dist = next;
        }
    }
    Ok(total)
}
