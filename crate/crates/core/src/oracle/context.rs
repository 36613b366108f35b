use crate::error::{Error, Result};
use crate::known::expected_loss;
use crate::model::{Belief, Dataset, ParametricFamily, QuantityKernel, Scenario, PROB_TOL};
use crate::offline::{posterior_from_dataset, tilde_loss_unchecked};
use crate::online::{belief_update, predictive};

use super::{Conditioning, StrategyClass, StrategyTable};

/// Upper bound on training sets enumerated for the marginal offline loss.
const DATASET_CAP: usize = 1 << 20;

enum Params<'a> {
    Known(&'a QuantityKernel),
    /// Parameter drawn from fixed weights (posterior, belief or prior).
    Weighted {
        family: &'a ParametricFamily,
        weights: Vec<f64>,
    },
    /// Parameter drawn from the prior, then a training set from the data model.
    Marginal {
        family: &'a ParametricFamily,
        prior: &'a Belief,
    },
}

pub(super) struct TrainingSet {
    pub pairs: Vec<(usize, usize)>,
    /// Full data-model probability `P(z^m | w)` per parameter.
    pub likelihood: Vec<f64>,
    /// Posterior group; `None` when the set has probability zero.
    pub group: Option<usize>,
}

/// Precomputed information structure of one (scenario, class, conditioning).
pub(super) struct Context<'a> {
    pub s: &'a Scenario,
    pub class: StrategyClass,
    cond: Option<Conditioning>,
    params: Params<'a>,
    layout: Vec<usize>,
    datasets: Vec<TrainingSet>,
    n_offline_groups: usize,
    online_groups: Vec<Vec<Option<usize>>>,
    online_group_beliefs: Vec<Vec<Belief>>,
    x_pow: Vec<usize>,
}

/// Decodes a base-`nx·ny` code into `len` pairs, first pair most significant.
pub(super) fn decode_pairs(mut code: usize, len: usize, nx: usize, ny: usize) -> Vec<(usize, usize)> {
    let mut pairs = vec![(0, 0); len];
    for slot in pairs.iter_mut().rev() {
        let pair = code % (nx * ny);
        code /= nx * ny;
        *slot = (pair / ny, pair % ny);
    }
    pairs
}

fn encode_pairs(pairs: &[(usize, usize)], nx: usize, ny: usize) -> usize {
    pairs.iter().fold(0, |acc, &(x, y)| acc * nx * ny + x * ny + y)
}

fn group_of(groups: &mut Vec<Belief>, belief: Belief) -> usize {
    match groups.iter().position(|g| g.linf_distance(&belief) <= PROB_TOL) {
        Some(g) => g,
        None => {
            groups.push(belief);
            groups.len() - 1
        }
    }
}

/// `P(z^m | w)` under the imitation data model, observation factors included.
pub(super) fn data_likelihood(s: &Scenario, family: &ParametricFamily, w: usize, pairs: &[(usize, usize)]) -> f64 {
    let mut prob = 1.0;
    for (j, &(x, y)) in pairs.iter().enumerate() {
        let px = if j == 0 {
            s.init.probs[x]
        } else {
            let (xp, yp) = pairs[j - 1];
            s.obs_kernel(j - 1).get(xp, yp, x)
        };
        prob *= px * family.likelihood(w, x, y);
        if prob == 0.0 {
            break;
        }
    }
    prob
}

fn check_imitation_shape(s: &Scenario, m: usize) -> Result<()> {
    if m > 0 && s.n_y() > s.n_yhat() {
        return Err(Error::ShapeMismatch("imitation data needs |Y| <= |Yhat|".into()));
    }
    if m > 1 && s.obs_kernels.is_empty() {
        return Err(Error::ShapeMismatch(
            "training sets longer than one pair need an observation kernel".into(),
        ));
    }
    Ok(())
}

impl<'a> Context<'a> {
    pub fn new(s: &'a Scenario, class: StrategyClass, cond: Option<&Conditioning>) -> Result<Self> {
        s.ensure_valid()?;
        let (n, nx, ny) = (s.horizon, s.n_x(), s.n_y());
        let params = if class.is_known() {
            if cond.is_some() {
                return Err(Error::ModeMismatch(format!(
                    "{class} strategies take no training conditioning"
                )));
            }
            Params::Known(s.known_kernel()?)
        } else {
            let (family, prior) = s.family_and_prior()?;
            if class.is_online() {
                if cond.is_some() {
                    return Err(Error::ModeMismatch(format!(
                        "{class} strategies take no training conditioning"
                    )));
                }
                Params::Weighted {
                    family,
                    weights: prior.probs.clone(),
                }
            } else {
                match cond {
                    None => {
                        return Err(Error::ModeMismatch(format!(
                            "{class} strategies need a training set, a belief or a marginal sample size"
                        )))
                    }
                    Some(Conditioning::Dataset(d)) => Params::Weighted {
                        family,
                        weights: oracle_posterior(s, family, prior, d)?,
                    },
                    Some(Conditioning::Belief(b)) => {
                        if b.len() != family.n_params() {
                            return Err(Error::ShapeMismatch("belief length differs from family size".into()));
                        }
                        b.check()?;
                        Params::Weighted {
                            family,
                            weights: b.probs.clone(),
                        }
                    }
                    Some(Conditioning::Marginal { .. }) => Params::Marginal { family, prior },
                }
            }
        };

        let mut ctx = Context {
            s,
            class,
            cond: cond.cloned(),
            params,
            layout: Vec::new(),
            datasets: Vec::new(),
            n_offline_groups: 1,
            online_groups: Vec::new(),
            online_group_beliefs: Vec::new(),
            x_pow: (0..n).map(|i| nx.pow(i as u32 + 1)).collect(),
        };

        if let (Params::Marginal { family, prior }, Some(Conditioning::Marginal { m })) = (&ctx.params, cond) {
            check_imitation_shape(s, *m)?;
            let count = (nx * ny)
                .checked_pow(*m as u32)
                .filter(|&c| c <= DATASET_CAP)
                .ok_or_else(|| Error::CapExceeded {
                    what: "training set".into(),
                    count: ((nx * ny) as u128).saturating_pow(*m as u32),
                    cap: DATASET_CAP as u128,
                })?;
            let mut groups = Vec::new();
            for code in 0..count {
                let pairs = decode_pairs(code, *m, nx, ny);
                let likelihood: Vec<f64> = (0..family.n_params())
                    .map(|w| data_likelihood(s, family, w, &pairs))
                    .collect();
                let joint: Vec<f64> = likelihood.iter().zip(&prior.probs).map(|(l, p)| l * p).collect();
                let total: f64 = joint.iter().sum();
                let group = (total > 0.0)
                    .then(|| group_of(&mut groups, Belief::new(joint.iter().map(|j| j / total).collect())));
                ctx.datasets.push(TrainingSet {
                    pairs,
                    likelihood,
                    group,
                });
            }
            ctx.n_offline_groups = groups.len();
        }

        if class == StrategyClass::MarkovOnline {
            let (family, prior) = s.family_and_prior()?;
            for i in 0..n {
                let mut groups = Vec::new();
                let codes = (nx * ny).pow(i as u32);
                let mut map = Vec::with_capacity(codes);
                for code in 0..codes {
                    let pairs = decode_pairs(code, i, nx, ny);
                    let joint: Vec<f64> = (0..family.n_params())
                        .map(|w| {
                            pairs
                                .iter()
                                .fold(prior.probs[w], |acc, &(x, y)| acc * family.likelihood(w, x, y))
                        })
                        .collect();
                    let total: f64 = joint.iter().sum();
                    map.push(
                        (total > 0.0)
                            .then(|| group_of(&mut groups, Belief::new(joint.iter().map(|j| j / total).collect()))),
                    );
                }
                ctx.online_groups.push(map);
                ctx.online_group_beliefs.push(groups);
            }
        }

        let n_data = ctx.datasets.len().max(1);
        ctx.layout = (0..n)
            .map(|i| match class {
                StrategyClass::MarkovKnown => nx,
                StrategyClass::HistoryKnown => ctx.x_pow[i],
                StrategyClass::MarkovOffline => ctx.n_offline_groups * nx,
                StrategyClass::HistoryOffline => n_data * ctx.x_pow[i],
                StrategyClass::MarkovOnline => ctx.online_group_beliefs[i].len() * nx,
                StrategyClass::HistoryOnline => (nx * ny).pow(i as u32) * nx,
            })
            .collect();
        Ok(ctx)
    }

    pub fn layout(&self) -> &[usize] {
        &self.layout
    }

    pub fn is_marginal(&self) -> bool {
        matches!(self.params, Params::Marginal { .. })
    }

    pub fn datasets(&self) -> &[TrainingSet] {
        &self.datasets
    }

    pub fn online_group_beliefs(&self) -> &[Vec<Belief>] {
        &self.online_group_beliefs
    }

    /// `x`-history code of length one.
    pub fn x_pow(&self, round: usize) -> usize {
        self.x_pow[round]
    }

    pub fn check_table(&self, t: &StrategyTable) -> Result<()> {
        if t.class != self.class {
            return Err(Error::ModeMismatch(format!(
                "table is {}, expected {}",
                t.class, self.class
            )));
        }
        if t.layout() != self.layout {
            return Err(Error::ShapeMismatch(format!(
                "table layout {:?} differs from the information structure {:?}",
                t.layout(),
                self.layout
            )));
        }
        let nyh = self.s.n_yhat();
        if let Some(&bad) = t.choices.iter().flatten().find(|&&a| a >= nyh) {
            return Err(Error::IndexOutOfRange {
                what: "estimate",
                index: bad,
                size: nyh,
            });
        }
        Ok(())
    }

    /// Table index of the information set reached at round `i`.
    #[inline]
    pub fn info(&self, i: usize, x: usize, xcode: usize, zcode: usize, data: usize) -> Option<usize> {
        let nx = self.s.n_x();
        Some(match self.class {
            StrategyClass::MarkovKnown => x,
            StrategyClass::HistoryKnown => xcode,
            StrategyClass::MarkovOffline => match self.is_marginal() {
                true => self.datasets[data].group? * nx + x,
                false => x,
            },
            StrategyClass::HistoryOffline => match self.is_marginal() {
                true => data * self.x_pow[i] + xcode,
                false => xcode,
            },
            StrategyClass::MarkovOnline => self.online_groups[i][zcode]? * nx + x,
            StrategyClass::HistoryOnline => zcode * nx + x,
        })
    }

    fn kernel(&self, w: usize) -> &QuantityKernel {
        match &self.params {
            Params::Known(k) => k,
            Params::Weighted { family, .. } | Params::Marginal { family, .. } => &family.members[w],
        }
    }

    /// Full joint enumeration of `E[Σ ℓ]`.
    pub fn joint_loss(&self, t: &StrategyTable) -> f64 {
        match &self.params {
            Params::Known(_) => self.joint_from(t, 0, 0, 1.0),
            Params::Weighted { weights, .. } => weights
                .iter()
                .enumerate()
                .filter(|(_, &p)| p > 0.0)
                .map(|(w, &p)| self.joint_from(t, w, 0, p))
                .sum(),
            Params::Marginal { .. } => {
                let all: Vec<usize> = (0..self.datasets.len()).collect();
                self.joint_loss_over(t, &all)
            }
        }
    }

    /// Marginal mode: contribution of the listed training sets.
    pub fn joint_loss_over(&self, t: &StrategyTable, codes: &[usize]) -> f64 {
        let Params::Marginal { prior, .. } = &self.params else {
            return self.joint_loss(t);
        };
        let mut total = 0.0;
        for (w, &pw) in prior.probs.iter().enumerate() {
            if pw == 0.0 {
                continue;
            }
            for &code in codes {
                let lik = self.datasets[code].likelihood[w];
                if lik > 0.0 {
                    total += self.joint_from(t, w, code, pw * lik);
                }
            }
        }
        total
    }

    fn joint_from(&self, t: &StrategyTable, w: usize, data: usize, weight: f64) -> f64 {
        let kernel = self.kernel(w);
        self.s
            .init
            .probs
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(x, &p)| self.joint_rec(t, kernel, data, 0, x, x, 0, weight * p))
            .sum()
    }

    #[allow(clippy::too_many_arguments)]
    fn joint_rec(
        &self,
        t: &StrategyTable,
        kernel: &QuantityKernel,
        data: usize,
        i: usize,
        x: usize,
        xcode: usize,
        zcode: usize,
        prob: f64,
    ) -> f64 {
        let s = self.s;
        let (nx, ny) = (s.n_x(), s.n_y());
        let info = self
            .info(i, x, xcode, zcode, data)
            .expect("positive-probability history has an information set");
        let yh = t.choices[i][info];
        let last = i + 1 == s.horizon;
        let mut acc = 0.0;
        for y in 0..ny {
            let py = kernel.get(x, y);
            if py == 0.0 {
                continue;
            }
            let p = prob * py;
            acc += p * s.loss.get(x, y, yh);
            if !last {
                let z_next = zcode * nx * ny + x * ny + y;
                for (x2, &pk) in s.obs_kernel(i).row(x, yh).iter().enumerate() {
                    if pk > 0.0 {
                        acc += self.joint_rec(t, kernel, data, i + 1, x2, xcode * nx + x2, z_next, p * pk);
                    }
                }
            }
        }
        acc
    }

    /// Reduced-form expectation with the quantity integrated out.
    pub fn surrogate_loss(&self, t: &StrategyTable) -> Result<f64> {
        let s = self.s;
        match (&self.params, &self.cond) {
            (Params::Known(kernel), _) => {
                Ok(self.surrogate_markov(t, 0, &|x, yh| expected_loss(kernel, &s.loss, x, yh), 1.0))
            }
            (Params::Weighted { family, weights }, _) if self.class.is_online() => {
                let prior = Belief::new(weights.clone());
                let mut total = 0.0;
                for (x, &p) in s.init.probs.iter().enumerate() {
                    if p > 0.0 {
                        total += self.surrogate_online(t, family, 0, x, x, 0, &prior, p)?;
                    }
                }
                Ok(total)
            }
            (Params::Weighted { family, .. }, Some(cond)) => {
                let posterior = match cond {
                    Conditioning::Dataset(d) => {
                        let (_, prior) = s.family_and_prior()?;
                        posterior_from_dataset(family, prior, d)?
                    }
                    Conditioning::Belief(b) => b.clone(),
                    Conditioning::Marginal { .. } => unreachable!("marginal conditioning uses marginal params"),
                };
                Ok(self.surrogate_markov(
                    t,
                    0,
                    &|x, yh| tilde_loss_unchecked(family, &s.loss, &posterior, x, yh),
                    1.0,
                ))
            }
            (Params::Marginal { family, prior }, _) => {
                let mut total = 0.0;
                for (code, set) in self.datasets.iter().enumerate() {
                    let prob: f64 = set.likelihood.iter().zip(&prior.probs).map(|(l, p)| l * p).sum();
                    if prob == 0.0 {
                        continue;
                    }
                    let posterior = posterior_from_dataset(family, prior, &Dataset::new(set.pairs.clone()))?;
                    total += self.surrogate_markov(
                        t,
                        code,
                        &|x, yh| tilde_loss_unchecked(family, &s.loss, &posterior, x, yh),
                        prob,
                    );
                }
                Ok(total)
            }
            (Params::Weighted { .. }, None) => unreachable!("offline params always carry conditioning"),
        }
    }

    fn surrogate_markov(
        &self,
        t: &StrategyTable,
        data: usize,
        immediate: &dyn Fn(usize, usize) -> f64,
        weight: f64,
    ) -> f64 {
        let mut total = 0.0;
        for (x, &p) in self.s.init.probs.iter().enumerate() {
            if p > 0.0 {
                total += self.surrogate_rec(t, data, immediate, 0, x, x, weight * p);
            }
        }
        total
    }

    #[allow(clippy::too_many_arguments)]
    fn surrogate_rec(
        &self,
        t: &StrategyTable,
        data: usize,
        immediate: &dyn Fn(usize, usize) -> f64,
        i: usize,
        x: usize,
        xcode: usize,
        prob: f64,
    ) -> f64 {
        let s = self.s;
        let info = self
            .info(i, x, xcode, 0, data)
            .expect("observation-only information set");
        let yh = t.choices[i][info];
        let mut acc = prob * immediate(x, yh);
        if i + 1 < s.horizon {
            for (x2, &pk) in s.obs_kernel(i).row(x, yh).iter().enumerate() {
                if pk > 0.0 {
                    acc += self.surrogate_rec(t, data, immediate, i + 1, x2, xcode * s.n_x() + x2, prob * pk);
                }
            }
        }
        acc
    }

    #[allow(clippy::too_many_arguments)]
    fn surrogate_online(
        &self,
        t: &StrategyTable,
        family: &ParametricFamily,
        i: usize,
        x: usize,
        xcode: usize,
        zcode: usize,
        belief: &Belief,
        prob: f64,
    ) -> Result<f64> {
        let s = self.s;
        let (nx, ny) = (s.n_x(), s.n_y());
        let info = self
            .info(i, x, xcode, zcode, 0)
            .expect("positive-probability history has an information set");
        let yh = t.choices[i][info];
        let mut acc = prob * tilde_loss_unchecked(family, &s.loss, belief, x, yh);
        if i + 1 < s.horizon {
            for y in 0..ny {
                let m = predictive(family, belief, x, y);
                if m <= 0.0 {
                    continue;
                }
                let next = belief_update(family, belief, x, y)?;
                let z_next = zcode * nx * ny + x * ny + y;
                for (x2, &pk) in s.obs_kernel(i).row(x, yh).iter().enumerate() {
                    if pk > 0.0 {
                        acc +=
                            self.surrogate_online(t, family, i + 1, x2, xcode * nx + x2, z_next, &next, prob * m * pk)?;
                    }
                }
            }
        }
        Ok(acc)
    }

    /// Encodes a training set for marginal table lookups.
    pub fn dataset_code(&self, pairs: &[(usize, usize)]) -> usize {
        encode_pairs(pairs, self.s.n_x(), self.s.n_y())
    }

    pub fn weights(&self) -> Option<&[f64]> {
        match &self.params {
            Params::Weighted { weights, .. } => Some(weights),
            Params::Marginal { prior, .. } => Some(&prior.probs),
            Params::Known(_) => None,
        }
    }

    pub fn training_length(&self) -> Option<usize> {
        match self.cond {
            Some(Conditioning::Marginal { m }) => Some(m),
            _ => None,
        }
    }

    pub fn member(&self, w: usize) -> &QuantityKernel {
        self.kernel(w)
    }
}

/// Posterior over the parameter given a fixed training set, from the full
/// data-model joint `P(w)·P(z^m | w)`.
fn oracle_posterior(s: &Scenario, family: &ParametricFamily, prior: &Belief, d: &Dataset) -> Result<Vec<f64>> {
    d.check_bounds(s.n_x(), s.n_y())?;
    check_imitation_shape(s, d.len())?;
    let joint: Vec<f64> = (0..family.n_params())
        .map(|w| prior.probs[w] * data_likelihood(s, family, w, &d.pairs))
        .collect();
    let total: f64 = joint.iter().sum();
    if total <= 0.0 {
        return Err(Error::ImpossibleDataset);
    }
    Ok(joint.into_iter().map(|j| j / total).collect())
}
