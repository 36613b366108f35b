use crate::error::{Error, Result};

/// Optimal expected loss of estimating `f(X)` from `X` (lhs) and from
/// `f(X)` alone (rhs), both by enumerating every decision table.
///
/// `loss[y][yhat]`, `f[x]` in `0..loss.len()`, `px[x]` a distribution.
pub fn check_blackwell(loss: &[Vec<f64>], f: &[usize], px: &[f64]) -> Result<(f64, f64)> {
    let ny = loss.len();
    let nyh = loss.first().map_or(0, Vec::len);
    if ny == 0 || nyh == 0 || loss.iter().any(|r| r.len() != nyh) {
        return Err(Error::ShapeMismatch("loss table must be a non-empty rectangle".into()));
    }
    if f.len() != px.len() || f.is_empty() {
        return Err(Error::ShapeMismatch(
            "f and px must cover the same non-empty space".into(),
        ));
    }
    if let Some(&bad) = f.iter().find(|&&y| y >= ny) {
        return Err(Error::IndexOutOfRange {
            what: "f(x)",
            index: bad,
            size: ny,
        });
    }
    let nx = f.len();

    let lhs = min_over_tables(nx, nyh, |g| (0..nx).map(|x| px[x] * loss[f[x]][g[x]]).sum());
    let rhs = min_over_tables(ny, nyh, |g| (0..nx).map(|x| px[x] * loss[f[x]][g[f[x]]]).sum());
    Ok((lhs, rhs))
}

fn min_over_tables(domain: usize, codomain: usize, eval: impl Fn(&[usize]) -> f64) -> f64 {
    let mut g = vec![0usize; domain];
    let mut best = f64::INFINITY;
    loop {
        best = best.min(eval(&g));
        let mut carry = true;
        for e in g.iter_mut().rev() {
            *e += 1;
            if *e < codomain {
                carry = false;
                break;
            }
            *e = 0;
        }
        if carry {
            return best;
        }
    }
}
