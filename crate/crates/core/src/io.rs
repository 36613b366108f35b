//! JSON file formats: scenario configs, training sets, solved policies and
//! evaluation reports, plus the content hashes that tie them together.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result, Violation};
use crate::known::{KnownPolicy, StageTables};
use crate::model::{
    Belief, Dataset, Distribution, FiniteSpace, LossTensor, ObservationKernel, ParametricFamily, QuantityKernel,
    QuantityModel, Scenario,
};
use crate::offline::OfflinePolicy;
use crate::online::{BeliefGraph, BeliefNode, OnlinePolicy};
use crate::oracle::{EvaluationReport, StrategyClass};

pub const POLICY_FORMAT: &str = "dyninf-policy";
pub const DATASET_FORMAT: &str = "dyninf-dataset";
pub const REPORT_FORMAT: &str = "dyninf-report";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpacesConfig {
    pub x: usize,
    pub y: usize,
    pub yhat: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeConfig {
    Known,
    Learning,
}

/// One shared `[x][yhat][x']` kernel or one per transition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KernelsConfig {
    Shared(Vec<Vec<Vec<f64>>>),
    PerRound(Vec<Vec<Vec<Vec<f64>>>>),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelsConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub yhat: Option<Vec<String>>,
}

/// On-disk scenario description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub spaces: SpacesConfig,
    pub horizon: usize,
    pub init: Vec<f64>,
    pub obs_kernels: KernelsConfig,
    pub mode: ModeConfig,
    /// `[x][y]`, known mode only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantity: Option<Vec<Vec<f64>>>,
    /// `[w][x][y]`, learning mode only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<Vec<Vec<Vec<f64>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<Vec<f64>>,
    /// `[x][y][yhat]`.
    pub loss: Vec<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<LabelsConfig>,
}

fn structural(location: &str, err: Error) -> Violation {
    let message = match err {
        Error::ShapeMismatch(m) => m,
        other => other.to_string(),
    };
    Violation::new(location, message, 0.0)
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Builds the scenario. Structural problems (ragged arrays, missing
    /// mode-specific keys) are returned as violations; numeric invariants
    /// are left to [`crate::model::validate_scenario`].
    pub fn to_scenario(&self) -> std::result::Result<Scenario, Vec<Violation>> {
        let mut out = Vec::new();
        let space = |size: usize, name: &str, out: &mut Vec<Violation>| {
            FiniteSpace::new(size)
                .map_err(|e| out.push(structural(&format!("spaces.{name}"), e)))
                .ok()
        };
        let x_space = space(self.spaces.x, "x", &mut out);
        let y_space = space(self.spaces.y, "y", &mut out);
        let yhat_space = space(self.spaces.yhat, "yhat", &mut out);

        let obs_kernels: Vec<ObservationKernel> = match &self.obs_kernels {
            KernelsConfig::Shared(k) => ObservationKernel::from_nested(k.clone())
                .map_err(|e| out.push(structural("obs_kernels", e)))
                .into_iter()
                .collect(),
            KernelsConfig::PerRound(ks) => ks
                .iter()
                .enumerate()
                .filter_map(|(i, k)| {
                    ObservationKernel::from_nested(k.clone())
                        .map_err(|e| out.push(structural(&format!("obs_kernels[{i}]"), e)))
                        .ok()
                })
                .collect(),
        };

        let quantity = match self.mode {
            ModeConfig::Known => {
                if self.family.is_some() || self.prior.is_some() {
                    out.push(Violation::new(
                        "mode",
                        "known mode takes 'quantity', not 'family'/'prior'",
                        0.0,
                    ));
                }
                match &self.quantity {
                    None => {
                        out.push(Violation::new("quantity", "known mode needs a quantity kernel", 0.0));
                        None
                    }
                    Some(rows) => QuantityKernel::from_rows(rows.clone())
                        .map_err(|e| out.push(structural("quantity", e)))
                        .ok()
                        .map(QuantityModel::Known),
                }
            }
            ModeConfig::Learning => {
                if self.quantity.is_some() {
                    out.push(Violation::new(
                        "mode",
                        "learning mode takes 'family' and 'prior', not 'quantity'",
                        0.0,
                    ));
                }
                match (&self.family, &self.prior) {
                    (Some(members), Some(prior)) => {
                        let kernels: Vec<QuantityKernel> = members
                            .iter()
                            .enumerate()
                            .filter_map(|(w, rows)| {
                                QuantityKernel::from_rows(rows.clone())
                                    .map_err(|e| out.push(structural(&format!("family[{w}]"), e)))
                                    .ok()
                            })
                            .collect();
                        if kernels.len() == members.len() {
                            ParametricFamily::new(kernels)
                                .map_err(|e| out.push(structural("family", e)))
                                .ok()
                                .map(|family| QuantityModel::Learning {
                                    family,
                                    prior: Belief::new(prior.clone()),
                                })
                        } else {
                            None
                        }
                    }
                    _ => {
                        out.push(Violation::new(
                            "family",
                            "learning mode needs both 'family' and 'prior'",
                            0.0,
                        ));
                        None
                    }
                }
            }
        };

        let loss = LossTensor::from_nested(self.loss.clone())
            .map_err(|e| out.push(structural("loss", e)))
            .ok();

        if let Some(labels) = &self.labels {
            for (name, list, size) in [
                ("labels.x", &labels.x, self.spaces.x),
                ("labels.y", &labels.y, self.spaces.y),
                ("labels.yhat", &labels.yhat, self.spaces.yhat),
            ] {
                if let Some(list) = list {
                    if list.len() != size {
                        out.push(Violation::new(
                            name,
                            format!("{} labels for {size} elements", list.len()),
                            0.0,
                        ));
                    }
                }
            }
        }

        match (x_space, y_space, yhat_space, quantity, loss) {
            (Some(x_space), Some(y_space), Some(yhat_space), Some(quantity), Some(loss)) if out.is_empty() => {
                Ok(Scenario {
                    x_space,
                    y_space,
                    yhat_space,
                    horizon: self.horizon,
                    init: Distribution::new(self.init.clone()),
                    obs_kernels,
                    quantity,
                    loss,
                })
            }
            _ => Err(out),
        }
    }

    pub fn from_scenario(s: &Scenario) -> Self {
        let obs_kernels = if s.obs_kernels.len() == 1 {
            KernelsConfig::Shared(s.obs_kernels[0].to_nested())
        } else {
            KernelsConfig::PerRound(s.obs_kernels.iter().map(ObservationKernel::to_nested).collect())
        };
        let (mode, quantity, family, prior) = match &s.quantity {
            QuantityModel::Known(k) => (ModeConfig::Known, Some(k.to_rows()), None, None),
            QuantityModel::Learning { family, prior } => (
                ModeConfig::Learning,
                None,
                Some(family.members.iter().map(QuantityKernel::to_rows).collect()),
                Some(prior.probs.clone()),
            ),
        };
        Self {
            spaces: SpacesConfig {
                x: s.n_x(),
                y: s.n_y(),
                yhat: s.n_yhat(),
            },
            horizon: s.horizon,
            init: s.init.probs.clone(),
            obs_kernels,
            mode,
            quantity,
            family,
            prior,
            loss: s.loss.to_nested(),
            labels: None,
        }
    }
}

/// 17 significant digits; zero is canonicalized so `-0.0` hashes like `0.0`.
fn canonical(v: f64) -> String {
    let v = if v == 0.0 { 0.0 } else { v };
    format!("{v:.16e}")
}

fn push_numbers(out: &mut String, label: &str, values: &[f64]) {
    out.push_str(label);
    for v in values {
        out.push(' ');
        out.push_str(&canonical(*v));
    }
    out.push('\n');
}

fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Content hash of the canonicalized numeric content of a scenario.
/// Labels and formatting do not enter.
pub fn scenario_hash(s: &Scenario) -> String {
    let mut text = format!(
        "dyninf-scenario-v1\nspaces {} {} {}\nhorizon {}\n",
        s.n_x(),
        s.n_y(),
        s.n_yhat(),
        s.horizon
    );
    push_numbers(&mut text, "init", &s.init.probs);
    for (k, kernel) in s.obs_kernels.iter().enumerate() {
        push_numbers(&mut text, &format!("obs_kernel {k}"), kernel.entries());
    }
    match &s.quantity {
        QuantityModel::Known(q) => push_numbers(&mut text, "quantity", q.entries()),
        QuantityModel::Learning { family, prior } => {
            for (w, member) in family.members.iter().enumerate() {
                push_numbers(&mut text, &format!("family {w}"), member.entries());
            }
            push_numbers(&mut text, "prior", &prior.probs);
        }
    }
    push_numbers(&mut text, "loss", s.loss.entries());
    sha256_hex(&text)
}

pub fn dataset_hash(d: &Dataset) -> String {
    let mut text = String::from("dyninf-dataset-v1\n");
    for (x, y) in &d.pairs {
        text.push_str(&format!("{x},{y}\n"));
    }
    sha256_hex(&text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetFile {
    pub format: String,
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub m: usize,
    pub pairs: Vec<[usize; 2]>,
}

impl DatasetFile {
    pub fn new(d: &Dataset, w: Option<usize>, seed: Option<u64>) -> Self {
        Self {
            format: DATASET_FORMAT.into(),
            version: FORMAT_VERSION,
            w,
            seed,
            m: d.len(),
            pairs: d.pairs.iter().map(|&(x, y)| [x, y]).collect(),
        }
    }

    pub fn dataset(&self) -> Result<Dataset> {
        if self.format != DATASET_FORMAT {
            return Err(Error::ShapeMismatch(format!(
                "expected a {DATASET_FORMAT} file, got '{}'",
                self.format
            )));
        }
        if self.m != self.pairs.len() {
            return Err(Error::ShapeMismatch(format!(
                "dataset declares m = {} but holds {} pairs",
                self.m,
                self.pairs.len()
            )));
        }
        Ok(Dataset::new(self.pairs.iter().map(|p| (p[0], p[1])).collect()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyMode {
    Known,
    Offline,
    Online,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShapeMeta {
    pub x: usize,
    pub y: usize,
    pub yhat: usize,
    pub horizon: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeTables {
    pub node: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub belief: Option<Vec<f64>>,
    pub psi: Vec<usize>,
    pub v: Vec<f64>,
    pub q: Vec<Vec<f64>>,
    /// Online only: successor node per `x * |Y| + y`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transitions: Option<Vec<Option<usize>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTables {
    /// 1-based round label.
    pub round: usize,
    pub nodes: Vec<NodeTables>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyFile {
    pub format: String,
    pub version: u32,
    pub mode: PolicyMode,
    pub scenario_hash: String,
    pub shape: ShapeMeta,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub belief: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_hash: Option<String>,
    pub rounds: Vec<RoundTables>,
}

/// A solved policy of any mode.
#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    Known(KnownPolicy),
    Offline(OfflinePolicy),
    Online(OnlinePolicy),
}

fn shape_meta(s: &Scenario) -> ShapeMeta {
    ShapeMeta {
        x: s.n_x(),
        y: s.n_y(),
        yhat: s.n_yhat(),
        horizon: s.horizon,
    }
}

fn stage_rounds(t: &StageTables) -> Vec<RoundTables> {
    (0..t.horizon())
        .map(|i| RoundTables {
            round: i + 1,
            nodes: vec![NodeTables {
                node: 0,
                belief: None,
                psi: t.psi[i].clone(),
                v: t.v[i].clone(),
                q: t.q[i].clone(),
                transitions: None,
            }],
        })
        .collect()
}

impl PolicyFile {
    pub fn from_policy(s: &Scenario, policy: &Policy, value: f64, dataset_hash: Option<String>) -> Self {
        let (mode, belief, rounds) = match policy {
            Policy::Known(p) => (PolicyMode::Known, None, stage_rounds(p)),
            Policy::Offline(p) => (
                PolicyMode::Offline,
                Some(p.belief.probs.clone()),
                stage_rounds(&p.tables),
            ),
            Policy::Online(p) => (
                PolicyMode::Online,
                None,
                (0..s.horizon)
                    .map(|i| RoundTables {
                        round: i + 1,
                        nodes: p.graph.nodes[i]
                            .iter()
                            .enumerate()
                            .map(|(k, node)| NodeTables {
                                node: k,
                                belief: Some(node.belief.probs.clone()),
                                psi: p.psi[i][k].clone(),
                                v: p.v[i][k].clone(),
                                q: p.q[i][k].clone(),
                                transitions: p.graph.transitions[i].get(k).cloned(),
                            })
                            .collect(),
                    })
                    .collect(),
            ),
        };
        Self {
            format: POLICY_FORMAT.into(),
            version: FORMAT_VERSION,
            mode,
            scenario_hash: scenario_hash(s),
            shape: shape_meta(s),
            value,
            belief,
            dataset_hash,
            rounds,
        }
    }

    pub fn to_policy(&self) -> Result<Policy> {
        if self.format != POLICY_FORMAT {
            return Err(Error::ShapeMismatch(format!(
                "expected a {POLICY_FORMAT} file, got '{}'",
                self.format
            )));
        }
        if self.rounds.len() != self.shape.horizon
            || self
                .rounds
                .iter()
                .enumerate()
                .any(|(i, r)| r.round != i + 1 || r.nodes.is_empty())
        {
            return Err(Error::ShapeMismatch(
                "policy rounds must be labelled 1..n with at least one node".into(),
            ));
        }
        let single = |r: &RoundTables| -> Result<NodeTables> {
            match r.nodes.as_slice() {
                [only] => Ok(only.clone()),
                _ => Err(Error::ShapeMismatch(format!(
                    "round {} must hold a single node",
                    r.round
                ))),
            }
        };
        match self.mode {
            PolicyMode::Known | PolicyMode::Offline => {
                let nodes = self.rounds.iter().map(single).collect::<Result<Vec<_>>>()?;
                let tables = StageTables {
                    psi: nodes.iter().map(|n| n.psi.clone()).collect(),
                    v: nodes.iter().map(|n| n.v.clone()).collect(),
                    q: nodes.iter().map(|n| n.q.clone()).collect(),
                };
                if self.mode == PolicyMode::Known {
                    Ok(Policy::Known(tables))
                } else {
                    let belief = self
                        .belief
                        .clone()
                        .ok_or_else(|| Error::ShapeMismatch("offline policy file lacks its belief".into()))?;
                    Ok(Policy::Offline(OfflinePolicy {
                        belief: Belief::new(belief),
                        tables,
                    }))
                }
            }
            PolicyMode::Online => {
                let n = self.rounds.len();
                let mut nodes = Vec::with_capacity(n);
                let mut transitions = Vec::with_capacity(n);
                let (mut psi, mut v, mut q) = (Vec::new(), Vec::new(), Vec::new());
                for (i, r) in self.rounds.iter().enumerate() {
                    let mut round_nodes = Vec::new();
                    let mut round_trans = Vec::new();
                    for (k, node) in r.nodes.iter().enumerate() {
                        let belief = node.belief.clone().ok_or_else(|| {
                            Error::ShapeMismatch(format!("round {} node {k} lacks a belief", r.round))
                        })?;
                        round_nodes.push(BeliefNode {
                            id: k,
                            round: i,
                            belief: Belief::new(belief),
                        });
                        if i + 1 < n {
                            let t = node.transitions.clone().ok_or_else(|| {
                                Error::ShapeMismatch(format!("round {} node {k} lacks transitions", r.round))
                            })?;
                            round_trans.push(t);
                        }
                    }
                    nodes.push(round_nodes);
                    transitions.push(round_trans);
                    psi.push(r.nodes.iter().map(|n| n.psi.clone()).collect());
                    v.push(r.nodes.iter().map(|n| n.v.clone()).collect());
                    q.push(r.nodes.iter().map(|n| n.q.clone()).collect());
                }
                for (i, round) in transitions.iter().enumerate() {
                    let next = nodes.get(i + 1).map_or(0, Vec::len);
                    let bad = round.iter().flatten().flatten().any(|&succ| succ >= next)
                        || round.iter().any(|t| t.len() != self.shape.x * self.shape.y);
                    if bad {
                        return Err(Error::ShapeMismatch(format!(
                            "round {} has malformed transitions",
                            i + 1
                        )));
                    }
                }
                Ok(Policy::Online(OnlinePolicy {
                    graph: BeliefGraph {
                        nodes,
                        transitions,
                        n_y: self.shape.y,
                    },
                    psi,
                    v,
                    q,
                }))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub format: String,
    pub version: u32,
    pub strategy_class: StrategyClass,
    pub scenario_hash: String,
    #[serde(flatten)]
    pub report: EvaluationReport,
}

impl ReportFile {
    pub fn new(s: &Scenario, class: StrategyClass, report: EvaluationReport) -> Self {
        Self {
            format: REPORT_FORMAT.into(),
            version: FORMAT_VERSION,
            strategy_class: class,
            scenario_hash: scenario_hash(s),
            report,
        }
    }
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("file types serialize infallibly");
    text.push('\n');
    text
}
