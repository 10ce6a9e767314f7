//! Building blocks shared by the encoder and the relation stack. Each takes
//! vars already on the tape, so the same code runs at both precisions.

use rand::{Rng, RngCore};

use crate::numerics::{Graph, NumericsError, ParamId, ParameterStore, Real, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn init<T: Real, R: Rng + ?Sized>(
        store: &mut ParameterStore<T>,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> Result<Self, NumericsError> {
        Ok(Self {
            w: store.insert_uniform(format!("{name}.w"), fan_in, fan_out, rng)?,
            b: store.insert_filled(format!("{name}.b"), vec![fan_out], 0.0)?,
        })
    }

    pub fn apply<T: Real>(&self, g: &mut Graph<T>, store: &ParameterStore<T>, x: Var) -> Result<Var, NumericsError> {
        let w = g.param(store, self.w)?;
        let b = g.param(store, self.b)?;
        let y = g.matmul(x, w)?;
        g.add_row(y, b)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Norm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl Norm {
    pub fn init<T: Real>(store: &mut ParameterStore<T>, name: &str, d: usize) -> Result<Self, NumericsError> {
        Ok(Self {
            gain: store.insert_filled(format!("{name}.gain"), vec![d], 1.0)?,
            bias: store.insert_filled(format!("{name}.bias"), vec![d], 0.0)?,
        })
    }

    pub fn apply<T: Real>(&self, g: &mut Graph<T>, store: &ParameterStore<T>, x: Var) -> Result<Var, NumericsError> {
        let gain = g.param(store, self.gain)?;
        let bias = g.param(store, self.bias)?;
        g.layer_norm(x, gain, bias)
    }
}

/// Multiplies by a fresh inverted-dropout mask. A zero rate is a no-op.
pub fn dropout<T: Real>(g: &mut Graph<T>, x: Var, rate: f64, rng: &mut dyn RngCore) -> Result<Var, NumericsError> {
    if rate <= 0.0 {
        return Ok(x);
    }
    let keep = 1.0 - rate;
    let shape = g.value(x).shape().to_vec();
    let n = g.value(x).len();
    let scale = T::from_f64(1.0 / keep);
    let mask = (0..n)
        .map(|_| if rng.gen_bool(keep) { scale } else { T::zero() })
        .collect();
    let m = g.constant(Tensor::new(shape, mask)?)?;
    g.mul(x, m)
}

/// Masked scaled dot-product attention for one head, `softmax(c·qkᵀ + mask)·v`.
pub fn attend<T: Real>(
    g: &mut Graph<T>,
    q: Var,
    k: Var,
    v: Var,
    scale: Option<T>,
    mask: Option<Var>,
) -> Result<Var, NumericsError> {
    let mut s = g.matmul_nt(q, k)?;
    if let Some(c) = scale {
        s = g.scale(s, c)?;
    }
    if let Some(m) = mask {
        s = g.add(s, m)?;
    }
    let w = g.row_softmax(s)?;
    g.matmul(w, v)
}
