//! Central finite-difference verification of analytic gradients.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Graph, NumericsError, ParamId, ParameterStore, Real, Var};

/// A deterministic scalar function of a parameter store, buildable at any
/// precision.
pub trait Objective {
    type Error: From<NumericsError>;

    fn build<T: Real>(&self, g: &mut Graph<T>, params: &ParameterStore<T>) -> Result<Var, Self::Error>;
}

#[derive(Clone, Debug)]
pub struct GradCheckConfig {
    /// Finite-difference step.
    pub step: f64,
    /// Check at most this many randomly sampled coordinates; `None` checks all.
    pub max_coords: Option<usize>,
    pub seed: u64,
    /// Lower bound on the relative-error denominator, so coordinates whose
    /// true gradient is zero are judged on absolute error.
    pub floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-3,
            max_coords: None,
            seed: 0,
            floor: 1e-8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub coords_checked: usize,
    /// `(parameter, index, analytic, central difference)` at the worst coordinate.
    pub worst: Option<(String, usize, f64, f64)>,
}

/// Relative error used by [`grad_check`].
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(floor)
}

/// Compares the analytic gradient of `objective` with central differences,
/// evaluating everything in precision `T`. Returns the maximum relative
/// error over the checked coordinates.
pub fn grad_check<T: Real, O: Objective>(
    objective: &O,
    store: &ParameterStore<f32>,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport, O::Error> {
    check::<T, T, O>(objective, store, cfg)
}

/// Checks the 32-bit training gradients against central differences taken
/// on the 64-bit shadow path, which keeps the reference free of 32-bit
/// cancellation noise.
pub fn grad_check_shadowed<O: Objective>(
    objective: &O,
    store: &ParameterStore<f32>,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport, O::Error> {
    check::<f32, f64, O>(objective, store, cfg)
}

fn check<A: Real, T: Real, O: Objective>(
    objective: &O,
    store: &ParameterStore<f32>,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport, O::Error> {
    if !(cfg.step > 0.0) || (T::NAME == "f32" && !(1e-4..=1e-2).contains(&cfg.step)) {
        return Err(NumericsError::BadStep(cfg.step).into());
    }
    let mut analytic_params: ParameterStore<A> = store.cast();
    let mut params: ParameterStore<T> = store.cast();

    let forward = |params: &ParameterStore<T>| -> Result<f64, O::Error> {
        let mut g = Graph::new();
        let loss = objective.build(&mut g, params)?;
        Ok(g.value(loss).item().as_f64())
    };

    let first = forward(&params)?;
    let second = forward(&params)?;
    if first.to_bits() != second.to_bits() {
        return Err(NumericsError::NonDeterministic { first, second }.into());
    }
    let mut g = Graph::new();
    let loss = objective.build(&mut g, &analytic_params)?;
    g.backward(loss, &mut analytic_params)?;

    let mut coords: Vec<(ParamId, usize)> = params
        .iter()
        .filter(|(_, p)| p.is_trainable())
        .flat_map(|(id, p)| (0..p.value().len()).map(move |i| (id, i)))
        .collect();
    if let Some(k) = cfg.max_coords {
        if k < coords.len() {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            coords.shuffle(&mut rng);
            coords.truncate(k);
        }
    }

    let h = T::from_f64(cfg.step);
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        coords_checked: coords.len(),
        worst: None,
    };
    for (id, i) in coords {
        let analytic = analytic_params.get(id).grad()[i].as_f64();
        let orig = params.get(id).value().data()[i];
        params.set_entry(id, i, orig + h);
        let plus = forward(&params)?;
        params.set_entry(id, i, orig - h);
        let minus = forward(&params)?;
        params.set_entry(id, i, orig);
        // the actual perturbation may differ from h after rounding
        let span = ((orig + h) - (orig - h)).as_f64();
        let numeric = (plus - minus) / span;
        let err = relative_error(analytic, numeric, cfg.floor);
        if err > report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = report.max_rel_error.max(err);
            report.worst = Some((params.get(id).name().to_string(), i, analytic, numeric));
        }
    }
    Ok(report)
}
