use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ParamStore, Tape, Tensor, TensorError, Var};

/// Worst disagreement between tape and central-difference gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub coordinates_checked: usize,
    /// Worst relative error over coordinates whose gradient magnitude is at
    /// least [`RESOLUTION_FACTOR`] times the rounding step of the difference
    /// quotient, `ulp(L) / 2h`.
    pub resolved_max_rel_error: f64,
    pub resolved_coordinates: usize,
}

/// Denominator floor for the relative error.
pub const REL_ERROR_FLOOR: f64 = 1e-8;

/// Gradients below this many rounding steps of the central difference are
/// dominated by rounding of the loss itself.
pub const RESOLUTION_FACTOR: f64 = 1e5;

/// Gradients of `build`'s scalar output with respect to every parameter.
pub fn analytic_gradients<F>(params: &mut ParamStore, build: &mut F) -> Result<Vec<Tensor>, TensorError>
where
    F: FnMut(&mut Tape, &ParamStore) -> Result<Var, TensorError>,
{
    params.zero_grads();
    let mut tape = Tape::new();
    let loss = build(&mut tape, params)?;
    tape.backward(loss, params)?;
    Ok(params.ids().map(|id| params.grad(id).clone()).collect())
}

fn evaluate<F>(params: &ParamStore, build: &mut F) -> Result<f64, TensorError>
where
    F: FnMut(&mut Tape, &ParamStore) -> Result<Var, TensorError>,
{
    let mut tape = Tape::new();
    let loss = build(&mut tape, params)?;
    Ok(tape.scalar_value(loss))
}

/// Compares `grads` against central differences at up to `coordinates`
/// randomly chosen scalar positions. Parameters are restored afterwards.
pub fn compare_with_finite_differences<F>(
    params: &mut ParamStore,
    build: &mut F,
    grads: &[Tensor],
    h: f64,
    coordinates: usize,
    seed: u64,
) -> Result<GradCheckReport, TensorError>
where
    F: FnMut(&mut Tape, &ParamStore) -> Result<Var, TensorError>,
{
    let mut flat = Vec::new();
    for id in params.ids() {
        for k in 0..params.value(id).len() {
            flat.push((id, k));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = sample(&mut rng, flat.len(), coordinates.min(flat.len()));
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        coordinates_checked: 0,
        resolved_max_rel_error: 0.0,
        resolved_coordinates: 0,
    };
    for p in picks.iter() {
        let (id, k) = flat[p];
        let orig = params.value(id).data()[k];
        params.value_mut(id).data_mut()[k] = orig + h;
        let plus = evaluate(params, build);
        params.value_mut(id).data_mut()[k] = orig - h;
        let minus = evaluate(params, build);
        params.value_mut(id).data_mut()[k] = orig;
        let (plus, minus) = (plus?, minus?);
        let numeric = (plus - minus) / (2.0 * h);
        let analytic = grads[id].data()[k];
        let scale = analytic.abs().max(numeric.abs());
        let rel = (analytic - numeric).abs() / scale.max(REL_ERROR_FLOOR);
        report.coordinates_checked += 1;
        let step = f64::EPSILON * plus.abs().max(minus.abs()) / (2.0 * h);
        if scale >= RESOLUTION_FACTOR * step {
            report.resolved_coordinates += 1;
            report.resolved_max_rel_error = report.resolved_max_rel_error.max(rel);
        }
        if rel > report.max_rel_error || report.worst_param.is_empty() {
            report.max_rel_error = rel;
            report.worst_param = params.name(id).to_string();
            report.worst_index = k;
            report.analytic = analytic;
            report.numeric = numeric;
        }
    }
    Ok(report)
}

/// Tape gradients checked against central differences.
pub fn finite_difference_check<F>(
    params: &mut ParamStore,
    mut build: F,
    h: f64,
    coordinates: usize,
    seed: u64,
) -> Result<GradCheckReport, TensorError>
where
    F: FnMut(&mut Tape, &ParamStore) -> Result<Var, TensorError>,
{
    let grads = analytic_gradients(params, &mut build)?;
    compare_with_finite_differences(params, &mut build, &grads, h, coordinates, seed)
}
