//! Central finite-difference verification of tape gradients.

use super::{AutodiffError, ParamStore, Tape, Var};

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Largest `|g_ad − g_fd| / max(1, |g_ad|, |g_fd|)` over all checked entries.
    pub max_rel_error: f64,
    /// Per-parameter maximum, in registration order.
    pub per_param: Vec<(String, f64)>,
    pub entries_checked: usize,
    /// Largest analytic gradient magnitude seen; zero means the check is vacuous.
    pub max_abs_grad: f64,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / 1f64.max(analytic.abs()).max(numeric.abs())
}

/// Compares analytic gradients of `loss_fn` against central differences with
/// step `h`. Parameters with more than `max_entries` scalars are subsampled at
/// evenly spaced positions. Gradients in `store` are zero on return.
pub fn grad_check<E, F>(
    store: &mut ParamStore,
    h: f64,
    max_entries: usize,
    mut loss_fn: F,
) -> Result<GradCheckReport, E>
where
    E: From<AutodiffError>,
    F: FnMut(&mut Tape, &ParamStore) -> Result<Var, E>,
{
    store.zero_grad();
    let mut tape = Tape::new();
    let loss = loss_fn(&mut tape, store)?;
    tape.backward(loss, store)?;
    let analytic: Vec<Vec<f64>> = store.iter().map(|p| p.grad.data().to_vec()).collect();
    store.zero_grad();

    let mut eval = |store: &ParamStore| -> Result<f64, E> {
        let mut tape = Tape::new();
        let l = loss_fn(&mut tape, store)?;
        Ok(tape.value(l).item())
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        per_param: Vec::new(),
        entries_checked: 0,
        max_abs_grad: 0.0,
    };
    for (pi, id) in store.ids().collect::<Vec<_>>().into_iter().enumerate() {
        let n = store.get(id).value.data().len();
        let stride = if n > max_entries && max_entries > 0 {
            n.div_ceil(max_entries)
        } else {
            1
        };
        let mut worst: f64 = 0.0;
        for j in (0..n).step_by(stride) {
            let orig = store.get(id).value.data()[j];
            store.get_mut(id).value.data_mut()[j] = orig + h;
            let plus = eval(store)?;
            store.get_mut(id).value.data_mut()[j] = orig - h;
            let minus = eval(store)?;
            store.get_mut(id).value.data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[pi][j];
            worst = worst.max(relative_error(a, numeric));
            report.max_abs_grad = report.max_abs_grad.max(a.abs());
            report.entries_checked += 1;
        }
        report.max_rel_error = report.max_rel_error.max(worst);
        report.per_param.push((store.get(id).name.clone(), worst));
    }
    Ok(report)
}
