//! Known-model dynamic inference: the expected per-round loss with the
//! hidden quantity marginalized out, and backward induction over the
//! observation state.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{LossTensor, QuantityKernel, Scenario};

/// Per-round Q, V and greedy-estimate tables over a single observation
/// state. Rounds are 0-indexed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTables {
    /// `psi[i][x]`: estimate index.
    pub psi: Vec<Vec<usize>>,
    /// `v[i][x] = q[i][x][psi[i][x]]`.
    pub v: Vec<Vec<f64>>,
    /// `q[i][x][yhat]`.
    pub q: Vec<Vec<Vec<f64>>>,
}

impl StageTables {
    pub fn horizon(&self) -> usize {
        self.psi.len()
    }

    pub(crate) fn check_shape(&self, s: &Scenario) -> Result<()> {
        let ok = self.psi.len() == s.horizon
            && self.v.len() == s.horizon
            && self.q.len() == s.horizon
            && self.psi.iter().all(|r| r.len() == s.n_x())
            && self.v.iter().all(|r| r.len() == s.n_x())
            && self
                .q
                .iter()
                .all(|r| r.len() == s.n_x() && r.iter().all(|c| c.len() == s.n_yhat()));
        if ok {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(
                "policy tables do not match the scenario shape".into(),
            ))
        }
    }

    /// `Σ_x P_{X_1}(x)·v[0][x]`.
    pub fn initial_value(&self, s: &Scenario) -> f64 {
        s.init.probs.iter().zip(&self.v[0]).map(|(p, v)| p * v).sum()
    }
}

pub type KnownPolicy = StageTables;

/// First index attaining the minimum.
#[inline]
pub(crate) fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v < values[best] {
            best = i;
        }
    }
    best
}

#[inline]
pub(crate) fn expected_loss(kernel: &QuantityKernel, loss: &LossTensor, x: usize, yhat: usize) -> f64 {
    kernel
        .row(x)
        .iter()
        .enumerate()
        .map(|(y, p)| p * loss.get(x, y, yhat))
        .sum()
}

/// Backward induction over `x` with a caller-supplied immediate loss.
/// The continuation sums over `x'` in ascending order.
pub(crate) fn backward_induction(s: &Scenario, immediate: impl Fn(usize, usize) -> f64) -> StageTables {
    let (n, nx, nyh) = (s.horizon, s.n_x(), s.n_yhat());
    let mut psi = vec![Vec::new(); n];
    let mut v = vec![Vec::new(); n];
    let mut q = vec![Vec::new(); n];
    for i in (0..n).rev() {
        let mut q_round = Vec::with_capacity(nx);
        for x in 0..nx {
            let row: Vec<f64> = (0..nyh)
                .map(|yh| {
                    let mut value = immediate(x, yh);
                    if i + 1 < n {
                        let next = &v[i + 1];
                        let cont: f64 = s
                            .obs_kernel(i)
                            .row(x, yh)
                            .iter()
                            .zip(next.iter())
                            .map(|(p, v_next): (&f64, &f64)| p * v_next)
                            .sum();
                        value += cont;
                    }
                    value
                })
                .collect();
            q_round.push(row);
        }
        psi[i] = q_round.iter().map(|row| argmin(row)).collect();
        v[i] = q_round.iter().zip(&psi[i]).map(|(row, &a)| row[a]).collect();
        q[i] = q_round;
    }
    StageTables { psi, v, q }
}

/// `Σ_y K(y|x)·ℓ(x, y, ŷ)` under the scenario's known kernel.
pub fn bar_loss(s: &Scenario, x: usize, yhat: usize) -> Result<f64> {
    let kernel = s.known_kernel()?;
    s.check_x(x)?;
    s.check_yhat(yhat)?;
    Ok(expected_loss(kernel, &s.loss, x, yhat))
}

pub fn solve_known(s: &Scenario) -> Result<KnownPolicy> {
    s.ensure_valid()?;
    let kernel = s.known_kernel()?;
    Ok(backward_induction(s, |x, yh| expected_loss(kernel, &s.loss, x, yh)))
}

/// Expected total loss of the solved policy from the initial distribution.
pub fn value_known(s: &Scenario, p: &KnownPolicy) -> Result<f64> {
    p.check_shape(s)?;
    Ok(p.initial_value(s))
}

/// Expected loss accumulated from 0-indexed round `round` to the end when
/// `X_round = x` and the estimates follow `p.psi`, obtained by pushing the
/// state distribution forward round by round.
pub fn loss_to_go_known(s: &Scenario, p: &KnownPolicy, round: usize, x: usize) -> Result<f64> {
    let kernel = s.known_kernel()?;
    p.check_shape(s)?;
    s.check_x(x)?;
    if round >= s.horizon {
        return Err(Error::IndexOutOfRange {
            what: "round",
            index: round,
            size: s.horizon,
        });
    }
    let nx = s.n_x();
    let mut dist = vec![0.0; nx];
    dist[x] = 1.0;
    let mut total = 0.0;
    for i in round..s.horizon {
        let mut next = vec![0.0; nx];
        for (state, &mass) in dist.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            let yh = p.psi[i][state];
            for (y, &py) in kernel.row(state).iter().enumerate() {
                total += mass * py * s.loss.get(state, y, yh);
            }
            if i + 1 < s.horizon {
                for (x2, &pk) in s.obs_kernel(i).row(state, yh).iter().enumerate() {
                    next[x2] += mass * pk;
                }
            }
        }
        dist = next;
    }
    Ok(total)
}
