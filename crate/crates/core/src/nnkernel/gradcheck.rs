use super::params::ParamStore;
use super::tape::{Tape, Var};
use crate::error::{Error, Result};

pub const DEFAULT_EPS: f64 = 1e-3;

/// Compares tape gradients against five-point central differences for every
/// parameter element. Each element is tried at step `eps` and, if that
/// disagrees, at `eps / 100`; the better agreement counts. Large steps keep
/// rounding noise below tiny gradients, small steps avoid straddling ReLU
/// kinks, and a wrong gradient disagrees at both. `f` must build a `1 x 1` output. Returns the largest
/// `|analytic - numeric| / max(1e-8, |analytic| + |numeric|)`.
pub fn grad_check<F>(f: F, params: &mut ParamStore<f64>, eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape<'_, f64>) -> Result<Var>,
{
    let analytic = {
        let mut tape = Tape::new(params);
        let out = f(&mut tape)?;
        tape.backward(out)?
    };
    let eval = |params: &ParamStore<f64>| -> Result<f64> {
        let mut tape = Tape::new(params);
        let out = f(&mut tape)?;
        Ok(tape.value(out).as_slice()[0])
    };
    let mut worst = 0.0f64;
    for p in 0..params.len() {
        let n = params.entry(p).value.len();
        for i in 0..n {
            let a = analytic.get(p).map_or(0.0, |g| g.as_slice()[i]);
            let mut rel = f64::INFINITY;
            for h in [eps, eps / 100.0] {
                let numeric = stencil(params, p, i, h, &eval)?;
                if !numeric.is_finite() || !a.is_finite() {
                    return Err(Error::NonFinite { index: i });
                }
                rel = rel.min((a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8));
                if rel < 1e-7 {
                    break;
                }
            }
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

fn stencil(
    params: &mut ParamStore<f64>,
    p: usize,
    i: usize,
    h: f64,
    eval: &impl Fn(&ParamStore<f64>) -> Result<f64>,
) -> Result<f64> {
    let orig = params.entry(p).value.as_slice()[i];
    let mut at = |k: f64| -> Result<f64> {
        params.entries_mut()[p].value.as_mut_slice()[i] = orig + k * h;
        eval(params)
    };
    let (p2, p1, m1, m2) = (at(2.0)?, at(1.0)?, at(-1.0)?, at(-2.0)?);
    params.entries_mut()[p].value.as_mut_slice()[i] = orig;
    Ok((8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * h))
}
