use super::graph::{Graph, Var};
use super::params::ParamStore;
use crate::error::{Error, Result};

/// Largest discrepancy found by [`grad_check_report`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub n_checked: usize,
}

fn evaluate<F>(store: &ParamStore, f: &F) -> Result<f64>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<Var>,
{
    let mut g = Graph::new();
    let out = f(&mut g, store)?;
    g.value(out)
        .item()
        .ok_or_else(|| Error::shape("grad_check", format!("non-scalar output {:?}", g.shape(out))))
}

/// Compares reverse-mode gradients of `f` with central differences at step
/// `eps` for every coordinate of every parameter. Relative error is
/// `|a - n| / max(1e-8, |a| + |n|)`.
pub fn grad_check_report<F>(store: &ParamStore, eps: f64, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<Var>,
{
    let mut analytic = store.clone();
    let mut g = Graph::new();
    let out = f(&mut g, &analytic)?;
    g.backward(out, &mut analytic)?;

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        param: String::new(),
        index: 0,
        analytic: 0.0,
        numeric: 0.0,
        n_checked: 0,
    };
    let names: Vec<String> = store.names().map(str::to_string).collect();
    let mut probe = store.clone();
    for name in names {
        let grad = analytic.grad(&name).expect("backward fills every gradient").clone();
        for i in 0..grad.len() {
            let orig = probe.get(&name).expect("known")[i];
            probe.get_mut(&name).expect("known").data_mut()[i] = orig + eps;
            let up = evaluate(&probe, &f)?;
            probe.get_mut(&name).expect("known").data_mut()[i] = orig - eps;
            let down = evaluate(&probe, &f)?;
            probe.get_mut(&name).expect("known").data_mut()[i] = orig;
            let n = (up - down) / (2.0 * eps);
            let a = grad.data()[i];
            let rel = (a - n).abs() / (a.abs() + n.abs()).max(1e-8);
            report.n_checked += 1;
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.param = name.clone();
                report.index = i;
                report.analytic = a;
                report.numeric = n;
            }
        }
    }
    Ok(report)
}

/// Maximum relative error of [`grad_check_report`].
pub fn grad_check<F>(store: &ParamStore, eps: f64, f: F) -> Result<f64>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<Var>,
{
    grad_check_report(store, eps, f).map(|r| r.max_rel_error)
}
