use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::Scenario;

use super::context::Context;
use super::{Conditioning, StrategyClass, StrategyTable};

pub const DEFAULT_STRATEGY_CAP: u128 = 10_000_000;

/// Entries enumerated together: `(round, first index, length)` slices of the
/// table plus the training sets whose loss they influence.
struct Block {
    slices: Vec<(usize, usize, usize)>,
    datasets: Vec<usize>,
}

fn pow_saturating(base: usize, exp: usize) -> u128 {
    (base as u128).checked_pow(exp as u32).unwrap_or(u128::MAX)
}

/// Number of deterministic strategies that would be evaluated, i.e. the
/// enumeration work `brute_force_optimum` checks against its cap.
pub fn strategy_count(s: &Scenario, class: StrategyClass, cond: Option<&Conditioning>) -> Result<u128> {
    let ctx = Context::new(s, class, cond)?;
    Ok(blocks(&ctx)
        .iter()
        .map(|b| pow_saturating(s.n_yhat(), b.slices.iter().map(|s| s.2).sum()))
        .fold(0u128, u128::saturating_add))
}

/// Partition of the table into independently optimizable blocks.
///
/// With a fixed conditioning the whole table is one block. In marginal
/// offline mode the loss is a sum over training sets and each set only
/// reads the entries of its own posterior group (Markov) or its own
/// training set (history), so the exhaustive minimum over the product space
/// is the sum of exhaustive per-block minima.
fn blocks(ctx: &Context) -> Vec<Block> {
    let n = ctx.s.horizon;
    let nx = ctx.s.n_x();
    if !ctx.is_marginal() {
        return vec![Block {
            slices: ctx.layout().iter().enumerate().map(|(i, &k)| (i, 0, k)).collect(),
            datasets: Vec::new(),
        }];
    }
    let live: Vec<(usize, Option<usize>)> = ctx
        .datasets()
        .iter()
        .enumerate()
        .filter(|(_, d)| d.group.is_some())
        .map(|(code, d)| (code, d.group))
        .collect();
    match ctx.class {
        StrategyClass::MarkovOffline => {
            let n_groups = ctx.layout()[0] / nx;
            (0..n_groups)
                .map(|g| Block {
                    slices: (0..n).map(|i| (i, g * nx, nx)).collect(),
                    datasets: live
                        .iter()
                        .filter(|(_, grp)| *grp == Some(g))
                        .map(|(c, _)| *c)
                        .collect(),
                })
                .collect()
        }
        _ => live
            .iter()
            .map(|&(code, _)| Block {
                slices: (0..n).map(|i| (i, code * ctx.x_pow(i), ctx.x_pow(i))).collect(),
                datasets: vec![code],
            })
            .collect(),
    }
}

pub fn brute_force_optimum(
    s: &Scenario,
    class: StrategyClass,
    cond: Option<&Conditioning>,
) -> Result<(StrategyTable, f64)> {
    brute_force_optimum_capped(s, class, cond, DEFAULT_STRATEGY_CAP)
}

/// Exhaustive minimum over every deterministic strategy of `class`.
///
/// Tables are enumerated in lexicographic order of their entries (round
/// 0 first, last entry fastest) and the first minimizer is kept. Work is
/// split across threads by the leading entries; results are merged by
/// `(loss, index)` so the outcome matches a sequential scan.
pub fn brute_force_optimum_capped(
    s: &Scenario,
    class: StrategyClass,
    cond: Option<&Conditioning>,
    cap: u128,
) -> Result<(StrategyTable, f64)> {
    let ctx = Context::new(s, class, cond)?;
    let nyh = s.n_yhat();
    let blocks = blocks(&ctx);
    let work = blocks
        .iter()
        .map(|b| pow_saturating(nyh, b.slices.iter().map(|s| s.2).sum()))
        .fold(0u128, u128::saturating_add);
    if work > cap {
        return Err(Error::CapExceeded {
            what: format!("{class} strategy"),
            count: work,
            cap,
        });
    }
    let mut table = StrategyTable::constant(class, ctx.layout(), 0);
    let mut total = 0.0;
    for block in &blocks {
        let (choices, loss) = search_block(&ctx, &table, block);
        write_entries(&mut table, block, &choices);
        total += loss;
    }
    Ok((table, total))
}

fn block_loss(ctx: &Context, table: &StrategyTable, block: &Block) -> f64 {
    if ctx.is_marginal() {
        ctx.joint_loss_over(table, &block.datasets)
    } else {
        ctx.joint_loss(table)
    }
}

fn write_entries(table: &mut StrategyTable, block: &Block, entries: &[usize]) {
    let mut k = 0;
    for &(round, start, len) in &block.slices {
        table.choices[round][start..start + len].copy_from_slice(&entries[k..k + len]);
        k += len;
    }
}

/// Increments `entries` as a base-`radix` odometer (last entry fastest).
/// Returns false after the final assignment.
fn advance(entries: &mut [usize], radix: usize) -> bool {
    for e in entries.iter_mut().rev() {
        *e += 1;
        if *e < radix {
            return true;
        }
        *e = 0;
    }
    false
}

fn search_block(ctx: &Context, base: &StrategyTable, block: &Block) -> (Vec<usize>, f64) {
    let nyh = ctx.s.n_yhat();
    let len: usize = block.slices.iter().map(|s| s.2).sum();
    if len == 0 {
        return (Vec::new(), block_loss(ctx, base, block));
    }
    // fix the first `prefix` entries per task
    let prefix = len.min(if nyh >= 4 { 2 } else { 3 });
    let tasks = nyh.pow(prefix as u32);
    let best = (0..tasks)
        .into_par_iter()
        .map(|task| {
            let mut entries = vec![0usize; len];
            let mut rest = task;
            for slot in entries[..prefix].iter_mut().rev() {
                *slot = rest % nyh;
                rest /= nyh;
            }
            let mut table = base.clone();
            let mut best: Option<(f64, Vec<usize>)> = None;
            loop {
                write_entries(&mut table, block, &entries);
                let loss = block_loss(ctx, &table, block);
                if best.as_ref().is_none_or(|(b, _)| loss < *b) {
                    best = Some((loss, entries.clone()));
                }
                if !advance(&mut entries[prefix..], nyh) {
                    break;
                }
            }
            let (loss, entries) = best.expect("at least one assignment");
            (task, loss, entries)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(None::<(usize, f64, Vec<usize>)>, |acc, cand| match acc {
            Some(a) if a.1 <= cand.1 => Some(a),
            _ => Some(cand),
        })
        .expect("at least one task");
    (best.2, best.1)
}

/// Largest `|exact loss − surrogate loss|` over every deterministic
/// strategy of `class`, with the number of strategies visited. Both losses
/// are computed for each table as in [`super::exact_loss`] and
/// [`super::exact_surrogate_loss`].
pub fn max_surrogate_gap(
    s: &Scenario,
    class: StrategyClass,
    cond: Option<&Conditioning>,
    cap: u128,
) -> Result<(f64, u128)> {
    let ctx = Context::new(s, class, cond)?;
    let nyh = s.n_yhat();
    let len: usize = ctx.layout().iter().sum();
    let count = pow_saturating(nyh, len);
    if count > cap {
        return Err(Error::CapExceeded {
            what: format!("{class} strategy"),
            count,
            cap,
        });
    }
    let whole = Block {
        slices: ctx.layout().iter().enumerate().map(|(i, &k)| (i, 0, k)).collect(),
        datasets: Vec::new(),
    };
    let prefix = len.min(3);
    let gaps = (0..nyh.pow(prefix as u32))
        .into_par_iter()
        .map(|task| {
            let mut entries = vec![0usize; len];
            let mut rest = task;
            for slot in entries[..prefix].iter_mut().rev() {
                *slot = rest % nyh;
                rest /= nyh;
            }
            let mut table = StrategyTable::constant(class, ctx.layout(), 0);
            let mut gap: f64 = 0.0;
            loop {
                write_entries(&mut table, &whole, &entries);
                gap = gap.max((ctx.joint_loss(&table) - ctx.surrogate_loss(&table)?).abs());
                if !advance(&mut entries[prefix..], nyh) {
                    return Ok(gap);
                }
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok((gaps.into_iter().fold(0.0, f64::max), count))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn odometer_visits_every_assignment_in_order() {
        let mut e = vec![0, 0, 0];
        let mut seen = vec![e.clone()];
        while advance(&mut e, 2) {
            seen.push(e.clone());
        }
        assert_eq!(seen.len(), 8);
        assert_eq!(seen[1], vec![0, 0, 1]);
        assert_eq!(seen[7], vec![1, 1, 1]);
    }
}
