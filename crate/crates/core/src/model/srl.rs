use rand::{Rng, RngCore};

use super::layers::{attend, dropout, Linear, Norm};
use crate::numerics::{Graph, NumericsError, ParameterStore, Real, Var};

/// The paired extraction (`p`) and generation (`a`) streams after `layer`
/// relation layers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TaskRepresentations {
    pub p: Var,
    pub a: Var,
    pub layer: usize,
}

/// Parameters of one relation layer.
#[derive(Clone, Debug)]
pub struct SrlLayer {
    pub proj_p: Linear,
    pub proj_a: Linear,
    pub ln_p: Norm,
    pub ln_a: Norm,
    pub ln_co_p: Norm,
    pub ln_co_a: Norm,
}

impl SrlLayer {
    pub fn init<T: Real, R: Rng + ?Sized>(
        store: &mut ParameterStore<T>,
        name: &str,
        d: usize,
        rng: &mut R,
    ) -> Result<Self, NumericsError> {
        Ok(Self {
            proj_p: Linear::init(store, &format!("{name}.proj_p"), d, d, rng)?,
            proj_a: Linear::init(store, &format!("{name}.proj_a"), d, d, rng)?,
            ln_p: Norm::init(store, &format!("{name}.ln_p"), d)?,
            ln_a: Norm::init(store, &format!("{name}.ln_a"), d)?,
            ln_co_p: Norm::init(store, &format!("{name}.ln_co_p"), d)?,
            ln_co_a: Norm::init(store, &format!("{name}.ln_co_a"), d)?,
        })
    }
}

fn specialize_one<T: Real>(
    g: &mut Graph<T>,
    store: &ParameterStore<T>,
    x: Var,
    proj: &Linear,
    norm: &Norm,
) -> Result<Var, NumericsError> {
    let z = proj.apply(g, store, x)?;
    let z = g.relu(z)?;
    let r = g.add(x, z)?;
    norm.apply(g, store, r)
}

/// Task-specific projection with residual: `LN(x + relu(xW + b))` for each
/// stream with its own weights.
pub fn srl_specialize<T: Real>(
    g: &mut Graph<T>,
    store: &ParameterStore<T>,
    layer: &SrlLayer,
    p: Var,
    a: Var,
) -> Result<(Var, Var), NumericsError> {
    let p2 = specialize_one(g, store, p, &layer.proj_p, &layer.ln_p)?;
    let a2 = specialize_one(g, store, a, &layer.proj_a, &layer.ln_a)?;
    Ok((p2, a2))
}

/// Unscaled co-attention between the streams:
/// `P'' = LN(P' + softmax(P'A'ᵀ)A')` and symmetrically for `A`.
///
/// `mask` is an additive `T×T` mask applied to both score matrices. Passing
/// the sequence mask keeps source rows from reading target positions.
pub fn srl_coattend<T: Real>(
    g: &mut Graph<T>,
    store: &ParameterStore<T>,
    layer: &SrlLayer,
    p: Var,
    a: Var,
    mask: Option<Var>,
) -> Result<(Var, Var), NumericsError> {
    let from_a = attend(g, p, a, a, None, mask)?;
    let from_p = attend(g, a, p, p, None, mask)?;
    let p_sum = g.add(p, from_a)?;
    let a_sum = g.add(a, from_p)?;
    let p_next = layer.ln_co_p.apply(g, store, p_sum)?;
    let a_next = layer.ln_co_a.apply(g, store, a_sum)?;
    Ok((p_next, a_next))
}

/// Applies every layer in `layers` to `(h, h)`. With no layers the streams
/// are both `h`. Dropout is applied to each layer's outputs when `rng` is
/// given.
pub fn srl_stack<T: Real>(
    g: &mut Graph<T>,
    store: &ParameterStore<T>,
    layers: &[SrlLayer],
    h: Var,
    mask: Option<Var>,
    dropout_rate: f64,
    mut rng: Option<&mut dyn RngCore>,
) -> Result<TaskRepresentations, NumericsError> {
    let mut reps = TaskRepresentations { p: h, a: h, layer: 0 };
    for layer in layers {
        let (p, a) = srl_specialize(g, store, layer, reps.p, reps.a)?;
        let (mut p, mut a) = srl_coattend(g, store, layer, p, a, mask)?;
        if let Some(r) = rng.as_deref_mut() {
            p = dropout(g, p, dropout_rate, r)?;
            a = dropout(g, a, dropout_rate, r)?;
        }
        reps = TaskRepresentations {
            p,
            a,
            layer: reps.layer + 1,
        };
    }
    Ok(reps)
}
