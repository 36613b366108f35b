//! Finite probabilistic objects: spaces, kernels, loss tensors, parametric
//! families, beliefs and whole scenarios, plus the imitation-style training
//! data generator.
//!
//! Elements of every space are plain indices `0..size`. Tensors are stored
//! flat in row-major order with the last index varying fastest.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation};

/// Tolerance on probability-vector normalization.
pub const PROB_TOL: f64 = 1e-9;
/// Drift beyond which internally produced rows are renormalized.
pub const DRIFT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FiniteSpace(usize);

impl FiniteSpace {
    pub fn new(size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::ShapeMismatch(
                "finite space must have at least one element".into(),
            ));
        }
        Ok(Self(size))
    }

    pub fn size(self) -> usize {
        self.0
    }

    pub fn contains(self, index: usize) -> bool {
        index < self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub probs: Vec<f64>,
}

impl Distribution {
    pub fn new(probs: Vec<f64>) -> Self {
        Self { probs }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// Next-observation kernel, indexed `[x_prev][yhat_prev][x_next]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationKernel {
    n_x: usize,
    n_yhat: usize,
    table: Vec<f64>,
}

impl ObservationKernel {
    pub fn from_nested(rows: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let (dims, table) = flatten3(rows, "observation kernel")?;
        if dims[0] != dims[2] {
            return Err(Error::ShapeMismatch(format!(
                "observation kernel maps {} observations to {}",
                dims[0], dims[2]
            )));
        }
        Ok(Self {
            n_x: dims[0],
            n_yhat: dims[1],
            table,
        })
    }

    pub fn from_fn(n_x: usize, n_yhat: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut table = Vec::with_capacity(n_x * n_yhat * n_x);
        for x in 0..n_x {
            for yh in 0..n_yhat {
                for x2 in 0..n_x {
                    table.push(f(x, yh, x2));
                }
            }
        }
        Self { n_x, n_yhat, table }
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn n_yhat(&self) -> usize {
        self.n_yhat
    }

    #[inline]
    pub fn row(&self, x: usize, yhat: usize) -> &[f64] {
        let start = (x * self.n_yhat + yhat) * self.n_x;
        &self.table[start..start + self.n_x]
    }

    #[inline]
    pub fn get(&self, x: usize, yhat: usize, x_next: usize) -> f64 {
        self.table[(x * self.n_yhat + yhat) * self.n_x + x_next]
    }

    pub fn entries(&self) -> &[f64] {
        &self.table
    }

    pub fn to_nested(&self) -> Vec<Vec<Vec<f64>>> {
        (0..self.n_x)
            .map(|x| (0..self.n_yhat).map(|yh| self.row(x, yh).to_vec()).collect())
            .collect()
    }
}

/// Quantity-generation kernel, indexed `[x][y]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantityKernel {
    n_x: usize,
    n_y: usize,
    table: Vec<f64>,
}

impl QuantityKernel {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let (dims, table) = flatten2(rows, "quantity kernel")?;
        Ok(Self {
            n_x: dims[0],
            n_y: dims[1],
            table,
        })
    }

    pub fn from_fn(n_x: usize, n_y: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut table = Vec::with_capacity(n_x * n_y);
        for x in 0..n_x {
            for y in 0..n_y {
                table.push(f(x, y));
            }
        }
        Self { n_x, n_y, table }
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn n_y(&self) -> usize {
        self.n_y
    }

    #[inline]
    pub fn row(&self, x: usize) -> &[f64] {
        &self.table[x * self.n_y..(x + 1) * self.n_y]
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.table[x * self.n_y + y]
    }

    pub fn entries(&self) -> &[f64] {
        &self.table
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n_x).map(|x| self.row(x).to_vec()).collect()
    }
}

/// Per-round loss, indexed `[x][y][yhat]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossTensor {
    n_x: usize,
    n_y: usize,
    n_yhat: usize,
    table: Vec<f64>,
}

impl LossTensor {
    pub fn from_nested(rows: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let (dims, table) = flatten3(rows, "loss tensor")?;
        Ok(Self {
            n_x: dims[0],
            n_y: dims[1],
            n_yhat: dims[2],
            table,
        })
    }

    pub fn from_fn(n_x: usize, n_y: usize, n_yhat: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut table = Vec::with_capacity(n_x * n_y * n_yhat);
        for x in 0..n_x {
            for y in 0..n_y {
                for yh in 0..n_yhat {
                    table.push(f(x, y, yh));
                }
            }
        }
        Self {
            n_x,
            n_y,
            n_yhat,
            table,
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.n_x, self.n_y, self.n_yhat]
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, yhat: usize) -> f64 {
        self.table[(x * self.n_y + y) * self.n_yhat + yhat]
    }

    pub fn entries(&self) -> &[f64] {
        &self.table
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            table: self.table.iter().map(|v| v * alpha).collect(),
            ..self.clone()
        }
    }

    pub fn to_nested(&self) -> Vec<Vec<Vec<f64>>> {
        (0..self.n_x)
            .map(|x| {
                (0..self.n_y)
                    .map(|y| (0..self.n_yhat).map(|yh| self.get(x, y, yh)).collect())
                    .collect()
            })
            .collect()
    }
}

/// The candidate quantity-generation kernels, one per parameter value.
#[derive(Debug, Clone, PartialEq)]
pub struct ParametricFamily {
    pub members: Vec<QuantityKernel>,
}

impl ParametricFamily {
    pub fn new(members: Vec<QuantityKernel>) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| Error::ShapeMismatch("parametric family is empty".into()))?;
        let shape = (first.n_x, first.n_y);
        if let Some((w, _)) = members.iter().enumerate().find(|(_, m)| (m.n_x, m.n_y) != shape) {
            return Err(Error::ShapeMismatch(format!(
                "family member {w} differs in shape from member 0"
            )));
        }
        Ok(Self { members })
    }

    pub fn n_params(&self) -> usize {
        self.members.len()
    }

    /// `P(y | x, w)`.
    #[inline]
    pub fn likelihood(&self, w: usize, x: usize, y: usize) -> f64 {
        self.members[w].get(x, y)
    }
}

/// A probability vector over the parameter set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Belief {
    pub probs: Vec<f64>,
}

impl Belief {
    pub fn new(probs: Vec<f64>) -> Self {
        Self { probs }
    }

    pub fn dirac(n_params: usize, w: usize) -> Self {
        let mut probs = vec![0.0; n_params];
        probs[w] = 1.0;
        Self { probs }
    }

    pub fn uniform(n_params: usize) -> Self {
        Self {
            probs: vec![1.0 / n_params as f64; n_params],
        }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn linf_distance(&self, other: &Belief) -> f64 {
        self.probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Checks entries and normalization at [`PROB_TOL`].
    pub fn check(&self) -> Result<()> {
        let mut violations = Vec::new();
        check_probability_row(&self.probs, "belief".to_string(), &mut violations);
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::Invalid(violations))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum QuantityModel {
    Known(QuantityKernel),
    Learning { family: ParametricFamily, prior: Belief },
}

/// A complete finite dynamic-inference instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub x_space: FiniteSpace,
    pub y_space: FiniteSpace,
    pub yhat_space: FiniteSpace,
    pub horizon: usize,
    pub init: Distribution,
    /// Either one shared kernel or one per transition (`horizon - 1`).
    pub obs_kernels: Vec<ObservationKernel>,
    pub quantity: QuantityModel,
    pub loss: LossTensor,
}

impl Scenario {
    pub fn n_x(&self) -> usize {
        self.x_space.size()
    }

    pub fn n_y(&self) -> usize {
        self.y_space.size()
    }

    pub fn n_yhat(&self) -> usize {
        self.yhat_space.size()
    }

    pub fn is_learning(&self) -> bool {
        matches!(self.quantity, QuantityModel::Learning { .. })
    }

    /// Kernel driving the transition out of 0-indexed round `round`.
    /// Rounds past the last configured kernel reuse it.
    #[inline]
    pub fn obs_kernel(&self, round: usize) -> &ObservationKernel {
        let last = self.obs_kernels.len() - 1;
        &self.obs_kernels[round.min(last)]
    }

    pub fn known_kernel(&self) -> Result<&QuantityKernel> {
        match &self.quantity {
            QuantityModel::Known(k) => Ok(k),
            QuantityModel::Learning { .. } => Err(Error::ModeMismatch(
                "operation needs a known quantity kernel but the scenario is in learning mode".into(),
            )),
        }
    }

    pub fn family_and_prior(&self) -> Result<(&ParametricFamily, &Belief)> {
        match &self.quantity {
            QuantityModel::Learning { family, prior } => Ok((family, prior)),
            QuantityModel::Known(_) => Err(Error::ModeMismatch(
                "operation needs a parametric family but the scenario is in known-model mode".into(),
            )),
        }
    }

    /// Same scenario with the quantity model replaced by a known kernel.
    pub fn with_known_kernel(&self, kernel: QuantityKernel) -> Scenario {
        Scenario {
            quantity: QuantityModel::Known(kernel),
            ..self.clone()
        }
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let violations = validate_scenario(self);
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::Invalid(violations))
        }
    }

    pub(crate) fn check_x(&self, x: usize) -> Result<()> {
        check_index("x", x, self.n_x())
    }

    pub(crate) fn check_yhat(&self, yhat: usize) -> Result<()> {
        check_index("yhat", yhat, self.n_yhat())
    }
}

pub(crate) fn check_index(what: &'static str, index: usize, size: usize) -> Result<()> {
    if index < size {
        Ok(())
    } else {
        Err(Error::IndexOutOfRange { what, index, size })
    }
}

/// Training data: an ordered list of `(x, y)` index pairs.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Dataset {
    pub pairs: Vec<(usize, usize)>,
}

impl Dataset {
    pub fn new(pairs: Vec<(usize, usize)>) -> Self {
        Self { pairs }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn check_bounds(&self, n_x: usize, n_y: usize) -> Result<()> {
        for &(x, y) in &self.pairs {
            check_index("dataset x", x, n_x)?;
            check_index("dataset y", y, n_y)?;
        }
        Ok(())
    }
}

fn check_probability_row(row: &[f64], location: String, out: &mut Vec<Violation>) {
    if let Some(bad) = row.iter().find(|p| !p.is_finite()) {
        out.push(Violation::new(location, format!("non-finite probability {bad}"), 0.0));
        return;
    }
    if let Some(neg) = row.iter().copied().find(|p| *p < 0.0) {
        out.push(Violation::new(location.clone(), "negative probability", -neg));
    }
    let sum: f64 = row.iter().sum();
    let defect = (sum - 1.0).abs();
    if defect > PROB_TOL {
        out.push(Violation::new(location, format!("row sums to {sum}"), defect));
    }
}

fn shape_violation(out: &mut Vec<Violation>, location: &str, expected: &[usize], got: &[usize]) {
    out.push(Violation::new(
        location,
        format!("shape {got:?} does not match expected {expected:?}"),
        0.0,
    ));
}

/// Checks every type invariant of a scenario and reports all violations.
/// An empty list means the scenario is valid.
pub fn validate_scenario(s: &Scenario) -> Vec<Violation> {
    let mut out = Vec::new();
    let (nx, ny, nyh) = (s.n_x(), s.n_y(), s.n_yhat());
    if s.horizon == 0 {
        out.push(Violation::new("horizon", "horizon must be at least 1", 0.0));
    }

    if s.init.len() != nx {
        shape_violation(&mut out, "init", &[nx], &[s.init.len()]);
    } else {
        check_probability_row(&s.init.probs, "init".into(), &mut out);
    }

    let expected_kernels = s.horizon.saturating_sub(1);
    let count_ok = match s.obs_kernels.len() {
        0 => s.horizon <= 1,
        1 => true,
        k => k == expected_kernels,
    };
    if !count_ok {
        out.push(Violation::new(
            "obs_kernels",
            format!(
                "expected 1 shared kernel or {expected_kernels} per-round kernels, got {}",
                s.obs_kernels.len()
            ),
            0.0,
        ));
    }
    for (k, kernel) in s.obs_kernels.iter().enumerate() {
        if kernel.n_x != nx || kernel.n_yhat != nyh {
            shape_violation(
                &mut out,
                &format!("obs_kernels[{k}]"),
                &[nx, nyh, nx],
                &[kernel.n_x, kernel.n_yhat, kernel.n_x],
            );
            continue;
        }
        for x in 0..nx {
            for yh in 0..nyh {
                check_probability_row(kernel.row(x, yh), format!("obs_kernels[{k}][{x}][{yh}][·]"), &mut out);
            }
        }
    }

    let check_quantity = |kernel: &QuantityKernel, name: &str, out: &mut Vec<Violation>| {
        if kernel.n_x != nx || kernel.n_y != ny {
            shape_violation(out, name, &[nx, ny], &[kernel.n_x, kernel.n_y]);
            return;
        }
        for x in 0..nx {
            check_probability_row(kernel.row(x), format!("{name}[{x}][·]"), out);
        }
    };
    match &s.quantity {
        QuantityModel::Known(kernel) => check_quantity(kernel, "quantity", &mut out),
        QuantityModel::Learning { family, prior } => {
            if family.members.is_empty() {
                out.push(Violation::new("family", "parametric family is empty", 0.0));
            }
            for (w, member) in family.members.iter().enumerate() {
                check_quantity(member, &format!("family[{w}]"), &mut out);
            }
            if prior.len() != family.members.len() {
                shape_violation(&mut out, "prior", &[family.members.len()], &[prior.len()]);
            } else {
                check_probability_row(&prior.probs, "prior".into(), &mut out);
            }
        }
    }

    if s.loss.dims() != [nx, ny, nyh] {
        shape_violation(&mut out, "loss", &[nx, ny, nyh], &s.loss.dims());
    } else if let Some(i) = s.loss.table.iter().position(|v| !v.is_finite()) {
        let (x, rest) = (i / (ny * nyh), i % (ny * nyh));
        out.push(Violation::new(
            format!("loss[{x}][{}][{}]", rest / nyh, rest % nyh),
            "non-finite loss",
            0.0,
        ));
    }
    out
}

/// Mixture kernel `Σ_w b[w]·P(y|x,w)`.
pub fn mixture_kernel(family: &ParametricFamily, belief: &Belief) -> Result<QuantityKernel> {
    if belief.len() != family.n_params() {
        return Err(Error::ShapeMismatch(format!(
            "belief has {} entries, family has {} members",
            belief.len(),
            family.n_params()
        )));
    }
    let first = &family.members[0];
    let (nx, ny) = (first.n_x, first.n_y);
    let mut table = vec![0.0; nx * ny];
    for (member, &weight) in family.members.iter().zip(&belief.probs) {
        for (acc, p) in table.iter_mut().zip(&member.table) {
            *acc += weight * p;
        }
    }
    for row in table.chunks_mut(ny) {
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > DRIFT_TOL && sum > 0.0 {
            row.iter_mut().for_each(|p| *p /= sum);
        }
    }
    Ok(QuantityKernel {
        n_x: nx,
        n_y: ny,
        table,
    })
}

/// Inverse-CDF draw over the stored entry order.
pub(crate) fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut cumulative = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        cumulative += p;
        if u < cumulative {
            return i;
        }
    }
    // u landed in the rounding gap above the final cumulative sum
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

/// Samples an `m`-pair training set from parameter `w` under the
/// imitation-learning data model: `X'_1 ~ P_{X_1}`, `Y'_j ~ P(·|X'_j, w)` and
/// `X'_{j+1} ~ K(·|X'_j, Y'_j)` with the true quantity in the estimate slot.
///
/// Uses `ChaCha8Rng::seed_from_u64(seed)` and one inverse-CDF draw per sampled
/// variable in the order x, y, x, y, ...
pub fn generate_dataset(s: &Scenario, w: usize, m: usize, seed: u64) -> Result<Dataset> {
    let (family, _) = s.family_and_prior()?;
    check_index("parameter", w, family.n_params())?;
    if m == 0 {
        return Ok(Dataset::default());
    }
    if s.n_y() > s.n_yhat() {
        return Err(Error::ShapeMismatch(format!(
            "imitation data feeds y into the estimate slot of the observation kernel, \
             which needs |Y| ({}) <= |Yhat| ({})",
            s.n_y(),
            s.n_yhat()
        )));
    }
    if m > 1 && s.obs_kernels.is_empty() {
        return Err(Error::ShapeMismatch(
            "datasets longer than one pair need an observation kernel".into(),
        ));
    }
    let member = &family.members[w];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(m);
    let mut x = sample_index(&s.init.probs, &mut rng);
    for j in 0..m {
        let y = sample_index(member.row(x), &mut rng);
        pairs.push((x, y));
        if j + 1 < m {
            x = sample_index(s.obs_kernel(j).row(x, y), &mut rng);
        }
    }
    Ok(Dataset { pairs })
}

fn flatten2(rows: Vec<Vec<f64>>, what: &str) -> Result<([usize; 2], Vec<f64>)> {
    let n0 = rows.len();
    let n1 = rows.first().map_or(0, Vec::len);
    if n0 == 0 || n1 == 0 {
        return Err(Error::ShapeMismatch(format!("{what} is empty")));
    }
    let mut table = Vec::with_capacity(n0 * n1);
    for (i, row) in rows.into_iter().enumerate() {
        if row.len() != n1 {
            return Err(Error::ShapeMismatch(format!(
                "{what} row {i} has length {}, expected {n1}",
                row.len()
            )));
        }
        table.extend(row);
    }
    Ok(([n0, n1], table))
}

fn flatten3(rows: Vec<Vec<Vec<f64>>>, what: &str) -> Result<([usize; 3], Vec<f64>)> {
    let n0 = rows.len();
    let n1 = rows.first().map_or(0, Vec::len);
    let n2 = rows.first().and_then(|r| r.first()).map_or(0, Vec::len);
    if n0 == 0 || n1 == 0 || n2 == 0 {
        return Err(Error::ShapeMismatch(format!("{what} is empty")));
    }
    let mut table = Vec::with_capacity(n0 * n1 * n2);
    for (i, plane) in rows.into_iter().enumerate() {
        if plane.len() != n1 {
            return Err(Error::ShapeMismatch(format!(
                "{what}[{i}] has {} rows, expected {n1}",
                plane.len()
            )));
        }
        for (j, row) in plane.into_iter().enumerate() {
            if row.len() != n2 {
                return Err(Error::ShapeMismatch(format!(
                    "{what}[{i}][{j}] has length {}, expected {n2}",
                    row.len()
                )));
            }
            table.extend(row);
        }
    }
    Ok(([n0, n1, n2], table))
}
