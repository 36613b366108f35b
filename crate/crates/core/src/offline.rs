//! Offline learning: a training set fixes the posterior over the unknown
//! quantity kernel before inference starts, and that posterior stays
//! constant for the whole horizon. The problem is then backward induction
//! over `(posterior, x)` with the belief-averaged loss.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::known::{backward_induction, StageTables};
use crate::model::{check_index, Belief, Dataset, LossTensor, ParametricFamily, Scenario};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfflinePolicy {
    /// Posterior the tables were solved for.
    pub belief: Belief,
    pub tables: StageTables,
}

impl OfflinePolicy {
    pub fn psi(&self) -> &[Vec<usize>] {
        &self.tables.psi
    }

    pub fn v(&self) -> &[Vec<f64>] {
        &self.tables.v
    }

    pub fn q(&self) -> &[Vec<Vec<f64>>] {
        &self.tables.q
    }
}

/// Posterior `b[w] ∝ prior[w]·Π_j P(y_j | x_j, w)`.
///
/// Under the imitation data model the observation factors of the data
/// likelihood do not depend on `w` and cancel. Log-likelihoods are
/// accumulated in dataset order.
pub fn posterior_from_dataset(family: &ParametricFamily, prior: &Belief, data: &Dataset) -> Result<Belief> {
    if prior.len() != family.n_params() {
        return Err(Error::ShapeMismatch(format!(
            "prior has {} entries, family has {} members",
            prior.len(),
            family.n_params()
        )));
    }
    let member = &family.members[0];
    data.check_bounds(member.n_x(), member.n_y())?;
    if data.is_empty() {
        return Ok(prior.clone());
    }
    let log_post: Vec<f64> = (0..family.n_params())
        .map(|w| {
            data.pairs.iter().fold(prior.probs[w].ln(), |acc, &(x, y)| {
                acc + family.likelihood(w, x, y).ln()
            })
        })
        .collect();
    let max = log_post.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::ImpossibleDataset);
    }
    let weights: Vec<f64> = log_post.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    Ok(Belief::new(weights.into_iter().map(|v| v / total).collect()))
}

#[inline]
pub(crate) fn tilde_loss_unchecked(
    family: &ParametricFamily,
    loss: &LossTensor,
    belief: &Belief,
    x: usize,
    yhat: usize,
) -> f64 {
    let mut total = 0.0;
    for (member, &weight) in family.members.iter().zip(&belief.probs) {
        if weight == 0.0 {
            continue;
        }
        for (y, &p) in member.row(x).iter().enumerate() {
            total += weight * p * loss.get(x, y, yhat);
        }
    }
    total
}

/// Belief-averaged expected loss `Σ_w Σ_y b[w]·P(y|x,w)·ℓ(x,y,ŷ)`.
pub fn tilde_loss(family: &ParametricFamily, loss: &LossTensor, belief: &Belief, x: usize, yhat: usize) -> Result<f64> {
    if belief.len() != family.n_params() {
        return Err(Error::ShapeMismatch("belief length differs from family size".into()));
    }
    let [nx, ny, nyh] = loss.dims();
    if family.members[0].n_x() != nx || family.members[0].n_y() != ny {
        return Err(Error::ShapeMismatch("loss tensor does not match family shape".into()));
    }
    check_index("x", x, nx)?;
    check_index("yhat", yhat, nyh)?;
    Ok(tilde_loss_unchecked(family, loss, belief, x, yhat))
}

pub fn solve_offline(s: &Scenario, belief: &Belief) -> Result<OfflinePolicy> {
    s.ensure_valid()?;
    let (family, _) = s.family_and_prior()?;
    if belief.len() != family.n_params() {
        return Err(Error::ShapeMismatch(format!(
            "belief has {} entries, family has {} members",
            belief.len(),
            family.n_params()
        )));
    }
    belief.check()?;
    let tables = backward_induction(s, |x, yh| tilde_loss_unchecked(family, &s.loss, belief, x, yh));
    Ok(OfflinePolicy {
        belief: belief.clone(),
        tables,
    })
}

/// Posterior from the training set, then backward induction at it.
pub fn offline_pipeline(s: &Scenario, data: &Dataset) -> Result<OfflinePolicy> {
    let (family, prior) = s.family_and_prior()?;
    let posterior = posterior_from_dataset(family, prior, data)?;
    solve_offline(s, &posterior)
}

pub fn value_offline(s: &Scenario, p: &OfflinePolicy) -> Result<f64> {
    p.tables.check_shape(s)?;
    Ok(p.tables.initial_value(s))
}

/// Conditional expected loss from 0-indexed round `round` to the end given
/// the policy's posterior and `X_round = x`.
///
/// Enumerates the parameter under the posterior and pushes the observation
/// distribution forward under `p.psi`, charging the raw loss against the
/// member's quantity kernel. It never touches `p.v` or `p.q`, so it also
/// evaluates arbitrary (perturbed) tables.
pub fn loss_to_go_offline(s: &Scenario, p: &OfflinePolicy, round: usize, x: usize) -> Result<f64> {
    let (family, _) = s.family_and_prior()?;
    p.tables.check_shape(s)?;
    s.check_x(x)?;
    check_index("round", round, s.horizon)?;
    let nx = s.n_x();
    let mut total = 0.0;
    for (member, &weight) in family.members.iter().zip(&p.belief.probs) {
        if weight == 0.0 {
            continue;
        }
        let mut dist = vec![0.0; nx];
        dist[x] = weight;
        for i in round..s.horizon {
            let mut next = vec![0.0; nx];
            for (state, &mass) in dist.iter().enumerate() {
                if mass == 0.0 {
                    continue;
                }
                let yh = p.tables.psi[i][state];
                for (y, &py) in member.row(state).iter().enumerate() {
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
    }
    Ok(total)
}

/// Every length-`m` training set with positive marginal probability under
/// the imitation data model, in lexicographic order of its pairs, with that
/// probability `Σ_w prior[w]·P(d | w)`.
pub fn enumerate_datasets(s: &Scenario, m: usize, cap: u128) -> Result<Vec<(Dataset, f64)>> {
    let (family, prior) = s.family_and_prior()?;
    let (nx, ny) = (s.n_x(), s.n_y());
    if m > 0 && ny > s.n_yhat() {
        return Err(Error::ShapeMismatch("imitation data needs |Y| <= |Yhat|".into()));
    }
    if m > 1 && s.obs_kernels.is_empty() {
        return Err(Error::ShapeMismatch(
            "datasets longer than one pair need an observation kernel".into(),
        ));
    }
    let count = ((nx * ny) as u128).checked_pow(m as u32).unwrap_or(u128::MAX);
    if count > cap {
        return Err(Error::CapExceeded {
            what: "dataset".into(),
            count,
            cap,
        });
    }
    let mut out = Vec::new();
    let mut pairs = Vec::with_capacity(m);
    let mut weights: Vec<f64> = prior.probs.clone();
    extend_datasets(s, family, m, &mut pairs, &mut weights, &mut out);
    Ok(out)
}

fn extend_datasets(
    s: &Scenario,
    family: &ParametricFamily,
    m: usize,
    pairs: &mut Vec<(usize, usize)>,
    weights: &mut Vec<f64>,
    out: &mut Vec<(Dataset, f64)>,
) {
    if pairs.len() == m {
        let total: f64 = weights.iter().sum();
        if total > 0.0 {
            out.push((Dataset::new(pairs.clone()), total));
        }
        return;
    }
    for x in 0..s.n_x() {
        let px = match pairs.last() {
            None => s.init.probs[x],
            Some(&(xp, yp)) => s.obs_kernel(pairs.len() - 1).get(xp, yp, x),
        };
        if px == 0.0 {
            continue;
        }
        for y in 0..s.n_y() {
            let saved = weights.clone();
            for (w, weight) in weights.iter_mut().enumerate() {
                *weight *= px * family.likelihood(w, x, y);
            }
            if weights.iter().any(|&v| v > 0.0) {
                pairs.push((x, y));
                extend_datasets(s, family, m, pairs, weights, out);
                pairs.pop();
            }
            *weights = saved;
        }
    }
}

/// Expected optimal inference loss before the training set is drawn:
/// `Σ_d P(d)·E[V*_1(π_d, X_1)]` over all length-`m` training sets.
pub fn marginal_value(s: &Scenario, m: usize, cap: u128) -> Result<f64> {
    let mut total = 0.0;
    for (data, prob) in enumerate_datasets(s, m, cap)? {
        let policy = offline_pipeline(s, &data)?;
        total += prob * value_offline(s, &policy)?;
    }
    Ok(total)
}
