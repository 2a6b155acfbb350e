use crate::autodiff::param::ParamStore;
use crate::autodiff::tape::{Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Outcome of [`finite_diff_check`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat entry index where the maximum occurred.
    pub worst: Option<(String, usize)>,
    /// Analytic and numeric derivative at the worst entry.
    pub worst_values: (f64, f64),
    pub entries_checked: usize,
}

/// Symmetric relative error `|a - n| / max(1e-8, |a| + |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Compares reverse-mode gradients of the scalar built by `f` against central
/// differences `(f(p+h) - f(p-h)) / 2h` for every trainable entry of `store`.
///
/// `f` is re-run on a fresh tape for each perturbation, so it must be
/// deterministic; a tape that recorded train-mode dropout is rejected. On
/// return the store holds the original values and the analytic gradients.
pub fn finite_diff_check<T, F>(store: &mut ParamStore<T>, h: f64, mut f: F) -> Result<GradCheckReport>
where
    T: Scalar,
    F: FnMut(&mut Tape<T>, &ParamStore<T>) -> Result<Var>,
{
    if !(h > 0.0) {
        return Err(Error::Parameter(format!("step must be positive, got {h}")));
    }
    store.zero_grads();
    let mut tape = Tape::new();
    let loss = f(&mut tape, store)?;
    if tape.is_stochastic() {
        return Err(Error::Contract("finite differences need a deterministic function; disable dropout".into()));
    }
    tape.backward_into(loss, store)?;

    let mut eval = |store: &ParamStore<T>| -> Result<f64> {
        let mut tape = Tape::new();
        let loss = f(&mut tape, store)?;
        Ok(tape.value(loss).item()?.to_f64_lossy())
    };

    let ids: Vec<_> = store.iter().filter(|(_, p)| p.trainable).map(|(id, _)| id).collect();
    let mut report = GradCheckReport { max_rel_error: 0.0, worst: None, worst_values: (0.0, 0.0), entries_checked: 0 };
    for id in ids {
        for i in 0..store.get(id).value.len() {
            let orig = store.get(id).value.data()[i];
            store.get_mut(id).value.data_mut()[i] = orig + T::of(h);
            let plus = eval(store)?;
            store.get_mut(id).value.data_mut()[i] = orig - T::of(h);
            let minus = eval(store)?;
            store.get_mut(id).value.data_mut()[i] = orig;

            let numeric = (plus - minus) / (2.0 * h);
            let analytic = store.get(id).grad.data()[i].to_f64_lossy();
            let err = relative_error(analytic, numeric);
            report.entries_checked += 1;
            if report.worst.is_none() || err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some((store.get(id).name.clone(), i));
                report.worst_values = (analytic, numeric);
            }
        }
    }
    Ok(report)
}
