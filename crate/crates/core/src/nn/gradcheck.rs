//! Central finite differences over a [`ParamStore`], used as the oracle
//! for every hand-written backward pass.

use super::matrix::Matrix;
use super::params::ParamStore;

pub const DEFAULT_EPS: f64 = 1e-5;

/// Numerical gradient of `f` at `store`, one coordinate at a time:
/// `(f(θ + eps·e) − f(θ − eps·e)) / (2·eps)`.
pub fn finite_difference_grad<F>(mut f: F, store: &ParamStore, eps: f64) -> ParamStore
where
    F: FnMut(&ParamStore) -> f64,
{
    let mut probe = store.clone();
    let mut grads = store.zeros_like();
    let names: Vec<String> = store.names().map(str::to_owned).collect();
    for name in &names {
        let len = store.get(name).map(Matrix::len).unwrap_or(0);
        for i in 0..len {
            let orig = probe.get(name).unwrap().as_slice()[i];
            probe.get_mut(name).unwrap().as_mut_slice()[i] = orig + eps;
            let up = f(&probe);
            probe.get_mut(name).unwrap().as_mut_slice()[i] = orig - eps;
            let down = f(&probe);
            probe.get_mut(name).unwrap().as_mut_slice()[i] = orig;
            grads.get_mut(name).unwrap().as_mut_slice()[i] = (up - down) / (2.0 * eps);
        }
    }
    grads
}

/// `‖a − n‖∞ / max(1e-8, ‖a‖∞ + ‖n‖∞)`.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic
        .iter()
        .zip(numeric)
        .fold(0.0f64, |m, (a, n)| m.max((a - n).abs()));
    let scale = analytic.iter().fold(0.0f64, |m, a| m.max(a.abs()))
        + numeric.iter().fold(0.0f64, |m, n| m.max(n.abs()));
    diff / scale.max(1e-8)
}

/// Per-parameter relative errors between two gradient stores, in name order.
pub fn compare_grads(analytic: &ParamStore, numeric: &ParamStore) -> Vec<(String, f64)> {
    analytic
        .iter()
        .map(|(name, a)| {
            let n = numeric.get(name).map(Matrix::as_slice).unwrap_or(&[]);
            (name.to_owned(), relative_error(a.as_slice(), n))
        })
        .collect()
}
