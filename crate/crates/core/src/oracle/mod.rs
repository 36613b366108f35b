//! Ground truth by exhaustion. Everything here evaluates strategies by
//! summing over the full joint support of the generative process and finds
//! optima by enumerating every deterministic strategy table, so it shares
//! no recursion with the dynamic-programming solvers it checks.
//!
//! Information sets per class (rounds 0-indexed, `nx = |X|`, `ny = |Y|`):
//!
//! | class            | key at round `i`                  | entries at round `i`  |
//! |------------------|-----------------------------------|-----------------------|
//! | `markov-known`   | `x_i`                             | `nx`                  |
//! | `history-known`  | `x_0..=x_i`                       | `nx^(i+1)`            |
//! | `markov-offline` | `(π_m, x_i)`                      | `G·nx`                |
//! | `history-offline`| `(z^m, x_0..=x_i)`                | `D·nx^(i+1)`          |
//! | `markov-online`  | `(π_i, x_i)`                      | `G_i·nx`              |
//! | `history-online` | `((x_j, y_j)_{j<i}, x_i)`         | `(nx·ny)^i·nx`        |
//!
//! `G` counts distinct posteriors (one when the training set or belief is
//! fixed), `D` counts training sets (one when fixed). Past estimates are not
//! part of the key: under a deterministic strategy they are a function of
//! the other history entries, so keying on them only duplicates entries.

mod blackwell;
mod context;
mod search;
mod sim;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use blackwell::check_blackwell;
pub use search::{
    brute_force_optimum, brute_force_optimum_capped, max_surrogate_gap, strategy_count, DEFAULT_STRATEGY_CAP,
};
pub use sim::monte_carlo_loss;

use crate::error::{Error, Result};
use crate::known::KnownPolicy;
use crate::model::{Belief, Dataset, Scenario, PROB_TOL};
use crate::offline::OfflinePolicy;
use crate::online::OnlinePolicy;
use context::Context;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyClass {
    MarkovKnown,
    HistoryKnown,
    MarkovOffline,
    HistoryOffline,
    MarkovOnline,
    HistoryOnline,
}

impl StrategyClass {
    pub const ALL: [StrategyClass; 6] = [
        StrategyClass::MarkovKnown,
        StrategyClass::HistoryKnown,
        StrategyClass::MarkovOffline,
        StrategyClass::HistoryOffline,
        StrategyClass::MarkovOnline,
        StrategyClass::HistoryOnline,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyClass::MarkovKnown => "markov-known",
            StrategyClass::HistoryKnown => "history-known",
            StrategyClass::MarkovOffline => "markov-offline",
            StrategyClass::HistoryOffline => "history-offline",
            StrategyClass::MarkovOnline => "markov-online",
            StrategyClass::HistoryOnline => "history-online",
        }
    }

    pub fn is_markov(self) -> bool {
        matches!(
            self,
            StrategyClass::MarkovKnown | StrategyClass::MarkovOffline | StrategyClass::MarkovOnline
        )
    }

    pub fn is_known(self) -> bool {
        matches!(self, StrategyClass::MarkovKnown | StrategyClass::HistoryKnown)
    }

    pub fn is_offline(self) -> bool {
        matches!(self, StrategyClass::MarkovOffline | StrategyClass::HistoryOffline)
    }

    pub fn is_online(self) -> bool {
        matches!(self, StrategyClass::MarkovOnline | StrategyClass::HistoryOnline)
    }
}

impl fmt::Display for StrategyClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyClass {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        StrategyClass::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown strategy class '{s}'"))
    }
}

/// What the offline learner is conditioned on.
#[derive(Debug, Clone, PartialEq)]
pub enum Conditioning {
    /// Loss conditional on this training set.
    Dataset(Dataset),
    /// Loss conditional on the posterior being exactly this belief.
    Belief(Belief),
    /// Unconditional loss: training sets of length `m` are drawn from the
    /// imitation data model and enumerated.
    Marginal { m: usize },
}

/// A deterministic strategy: one estimate per information set per round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategyTable {
    pub class: StrategyClass,
    /// `choices[i][info]`.
    pub choices: Vec<Vec<usize>>,
}

impl StrategyTable {
    pub fn constant(class: StrategyClass, layout: &[usize], yhat: usize) -> Self {
        Self {
            class,
            choices: layout.iter().map(|&k| vec![yhat; k]).collect(),
        }
    }

    pub fn random<R: Rng + ?Sized>(class: StrategyClass, layout: &[usize], n_yhat: usize, rng: &mut R) -> Self {
        Self {
            class,
            choices: layout
                .iter()
                .map(|&k| (0..k).map(|_| rng.gen_range(0..n_yhat)).collect())
                .collect(),
        }
    }

    pub fn layout(&self) -> Vec<usize> {
        self.choices.iter().map(Vec::len).collect()
    }

    pub fn from_known_policy(p: &KnownPolicy) -> Self {
        Self {
            class: StrategyClass::MarkovKnown,
            choices: p.psi.clone(),
        }
    }

    /// Markov-offline table for a fixed training set or belief.
    pub fn from_offline_policy(p: &OfflinePolicy) -> Self {
        Self {
            class: StrategyClass::MarkovOffline,
            choices: p.tables.psi.clone(),
        }
    }

    /// Markov-online table keyed by the oracle's own posterior groups, each
    /// matched to the policy node with the same belief.
    pub fn from_online_policy(s: &Scenario, p: &OnlinePolicy) -> Result<Self> {
        let ctx = Context::new(s, StrategyClass::MarkovOnline, None)?;
        let nx = s.n_x();
        let mut choices = Vec::with_capacity(s.horizon);
        for (i, groups) in ctx.online_group_beliefs().iter().enumerate() {
            let mut row = Vec::with_capacity(groups.len() * nx);
            for belief in groups {
                let node = p
                    .graph
                    .nodes
                    .get(i)
                    .and_then(|nodes| nodes.iter().position(|n| n.belief.linf_distance(belief) <= PROB_TOL))
                    .ok_or(Error::NodeNotFound { round: i })?;
                row.extend_from_slice(&p.psi[i][node]);
            }
            choices.push(row);
        }
        Ok(Self {
            class: StrategyClass::MarkovOnline,
            choices,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalMode {
    Exact,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub mode: EvalMode,
    pub loss: f64,
    /// Standard error of the mean; 0 for exact evaluation.
    pub stderr: f64,
    pub samples: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// Number of table entries per round for `class` on `s`.
pub fn strategy_layout(s: &Scenario, class: StrategyClass, cond: Option<&Conditioning>) -> Result<Vec<usize>> {
    Ok(Context::new(s, class, cond)?.layout().to_vec())
}

/// `E[Σ_i ℓ(X_i, Y_i, Ŷ_i)]` by summation over the full joint support of
/// the parameter, training set (when marginal), observations and
/// quantities.
pub fn exact_loss(s: &Scenario, t: &StrategyTable, cond: Option<&Conditioning>) -> Result<f64> {
    let ctx = Context::new(s, t.class, cond)?;
    ctx.check_table(t)?;
    Ok(ctx.joint_loss(t))
}

/// The same expectation computed in the reduced form: the quantity is
/// integrated out round by round, through the known kernel (known mode) or
/// through the posterior mixture `ℓ̃(π, x, ŷ)` (learning modes). Posteriors
/// come from the crate's learning modules.
pub fn exact_surrogate_loss(s: &Scenario, t: &StrategyTable, cond: Option<&Conditioning>) -> Result<f64> {
    let ctx = Context::new(s, t.class, cond)?;
    ctx.check_table(t)?;
    ctx.surrogate_loss(t)
}

pub fn exact_report(s: &Scenario, t: &StrategyTable, cond: Option<&Conditioning>) -> Result<EvaluationReport> {
    Ok(EvaluationReport {
        mode: EvalMode::Exact,
        loss: exact_loss(s, t, cond)?,
        stderr: 0.0,
        samples: 0,
        seed: None,
    })
}
