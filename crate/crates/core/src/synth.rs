//! Random tiny scenarios for tests and benchmarks.

use rand::Rng;

use crate::model::{
    Belief, Distribution, FiniteSpace, LossTensor, ObservationKernel, ParametricFamily, QuantityKernel, QuantityModel,
    Scenario,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub n_x: usize,
    pub n_y: usize,
    pub n_yhat: usize,
    pub horizon: usize,
    /// 0 for a known quantity kernel.
    pub n_params: usize,
}

/// A random probability vector. Each entry is zeroed with probability
/// `sparsity`, but at least one entry stays positive.
pub fn random_distribution<R: Rng + ?Sized>(rng: &mut R, len: usize, sparsity: f64) -> Vec<f64> {
    let mut p: Vec<f64> = (0..len)
        .map(|_| {
            if rng.gen::<f64>() < sparsity {
                0.0
            } else {
                rng.gen_range(0.05..1.0)
            }
        })
        .collect();
    if p.iter().all(|&v| v == 0.0) {
        p[rng.gen_range(0..len)] = 1.0;
    }
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= total);
    p
}

pub fn random_scenario<R: Rng + ?Sized>(rng: &mut R, shape: Shape, sparsity: f64) -> Scenario {
    let Shape {
        n_x,
        n_y,
        n_yhat,
        horizon,
        n_params,
    } = shape;
    let init = random_distribution(rng, n_x, 0.0);
    let rows: Vec<Vec<f64>> = (0..n_x * n_yhat)
        .map(|_| random_distribution(rng, n_x, sparsity))
        .collect();
    let obs = ObservationKernel::from_fn(n_x, n_yhat, |x, yh, x2| rows[x * n_yhat + yh][x2]);
    let kernel = |rng: &mut R| {
        let rows: Vec<Vec<f64>> = (0..n_x).map(|_| random_distribution(rng, n_y, sparsity)).collect();
        QuantityKernel::from_fn(n_x, n_y, |x, y| rows[x][y])
    };
    let quantity = if n_params == 0 {
        QuantityModel::Known(kernel(rng))
    } else {
        let members = (0..n_params).map(|_| kernel(rng)).collect();
        QuantityModel::Learning {
            family: ParametricFamily::new(members).expect("non-empty family of equal shapes"),
            prior: Belief::new(random_distribution(rng, n_params, 0.0)),
        }
    };
    let losses: Vec<f64> = (0..n_x * n_y * n_yhat).map(|_| rng.gen::<f64>()).collect();
    let loss = LossTensor::from_fn(n_x, n_y, n_yhat, |x, y, yh| losses[(x * n_y + y) * n_yhat + yh]);
    Scenario {
        x_space: FiniteSpace::new(n_x).expect("non-empty"),
        y_space: FiniteSpace::new(n_y).expect("non-empty"),
        yhat_space: FiniteSpace::new(n_yhat).expect("non-empty"),
        horizon,
        init: Distribution::new(init),
        obs_kernels: vec![obs],
        quantity,
        loss,
    }
}
