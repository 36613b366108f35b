use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{sample_index, Scenario};

use super::context::Context;
use super::{Conditioning, EvalMode, EvaluationReport, StrategyTable};

/// Monte Carlo estimate of the inference loss of `t`.
///
/// Trajectory `k` draws from `ChaCha8Rng::seed_from_u64(seed)` switched to
/// stream `k`, so trajectories are independent of scheduling and the report
/// is reproducible given the seed. Each trajectory draws the parameter
/// (learning modes), the training set (marginal offline mode), then rolls
/// the controlled chain with the table's estimates feeding the observation
/// kernel.
pub fn monte_carlo_loss(
    s: &Scenario,
    t: &StrategyTable,
    samples: u64,
    seed: u64,
    cond: Option<&Conditioning>,
) -> Result<EvaluationReport> {
    if samples == 0 {
        return Err(Error::ShapeMismatch(
            "monte carlo evaluation needs at least one sample".into(),
        ));
    }
    let ctx = Context::new(s, t.class, cond)?;
    ctx.check_table(t)?;
    let losses: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k);
            trajectory(&ctx, t, &mut rng)
        })
        .collect::<Result<_>>()?;
    let n = losses.len() as f64;
    if losses.iter().all(|&l| l == losses[0]) {
        // no spread at all; avoid rounding noise in the mean and variance
        return Ok(EvaluationReport {
            mode: EvalMode::MonteCarlo,
            loss: losses[0],
            stderr: 0.0,
            samples,
            seed: Some(seed),
        });
    }
    let mean = losses.iter().sum::<f64>() / n;
    let stderr = {
        let var = losses.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    };
    Ok(EvaluationReport {
        mode: EvalMode::MonteCarlo,
        loss: mean,
        stderr,
        samples,
        seed: Some(seed),
    })
}

fn trajectory(ctx: &Context, t: &StrategyTable, rng: &mut ChaCha8Rng) -> Result<f64> {
    let s = ctx.s;
    let (nx, ny) = (s.n_x(), s.n_y());
    let w = match ctx.weights() {
        Some(weights) => sample_index(weights, rng),
        None => 0,
    };
    let kernel = ctx.member(w);
    let data = match ctx.training_length() {
        Some(m) if m > 0 => {
            let mut pairs = Vec::with_capacity(m);
            let mut x = sample_index(&s.init.probs, rng);
            for j in 0..m {
                let y = sample_index(kernel.row(x), rng);
                pairs.push((x, y));
                if j + 1 < m {
                    x = sample_index(s.obs_kernel(j).row(x, y), rng);
                }
            }
            ctx.dataset_code(&pairs)
        }
        _ => 0,
    };

    let mut x = sample_index(&s.init.probs, rng);
    let (mut xcode, mut zcode) = (x, 0);
    let mut total = 0.0;
    for i in 0..s.horizon {
        let info = ctx
            .info(i, x, xcode, zcode, data)
            .ok_or(Error::ImpossibleObservation { x, y: 0 })?;
        let yh = t.choices[i][info];
        let y = sample_index(kernel.row(x), rng);
        total += s.loss.get(x, y, yh);
        if i + 1 < s.horizon {
            zcode = zcode * nx * ny + x * ny + y;
            x = sample_index(s.obs_kernel(i).row(x, yh), rng);
            xcode = xcode * nx + x;
        }
    }
    Ok(total)
}
