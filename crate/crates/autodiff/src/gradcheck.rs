use crate::error::Result;
use crate::graph::{Graph, Mode, Var};
use crate::param::{ParamId, ParamStore};

/// Outcome of comparing analytic gradients with central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub coordinates: usize,
}

/// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

const CHECK_SEED: u64 = 0x0dd5_eed5;

fn evaluate<F>(store: &ParamStore<f64>, f: &F) -> Result<(Graph<f64>, Var)>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    // Dropout masks depend only on the seed and call order, so every
    // evaluation below sees the same mask.
    let mut g = Graph::with_seed(Mode::Train, CHECK_SEED);
    let params = g.bind_params(store)?;
    let loss = f(&mut g, &params)?;
    Ok((g, loss))
}

/// Checks every coordinate of every parameter in `store` against the central
/// difference `(f(p + eps) - f(p - eps)) / 2 eps`.
pub fn grad_check<F>(store: &ParamStore<f64>, eps: f64, f: F) -> Result<GradCheck>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let (g, loss) = evaluate(store, &f)?;
    let grads = g.backward(loss)?;
    let mut work = store.clone();
    let mut report = GradCheck {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        coordinates: 0,
    };
    for p in 0..store.len() {
        let id = ParamId(p);
        for i in 0..store.get(id).len() {
            let original = store.get(id).data()[i];
            work.get_mut(id).data_mut()[i] = original + eps;
            let (gp, lp) = evaluate(&work, &f)?;
            let plus = gp.value(lp).data()[0];
            work.get_mut(id).data_mut()[i] = original - eps;
            let (gm, lm) = evaluate(&work, &f)?;
            let minus = gm.value(lm).data()[0];
            work.get_mut(id).data_mut()[i] = original;

            let numeric = (plus - minus) / (2.0 * eps);
            let analytic = grads.get(id).map_or(0.0, |t| t.data()[i]);
            let err = relative_error(analytic, numeric);
            report.coordinates += 1;
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst_param = store.name(id).to_string();
                report.worst_index = i;
            }
        }
    }
    Ok(report)
}
