use rand::Rng;

use super::layers::{attend, Linear, Norm};
use super::ModelConfig;
use crate::numerics::{Graph, NumericsError, ParamId, ParameterStore, Real, Tensor, Var};

#[derive(Clone, Debug)]
pub struct EncoderLayer {
    pub ln_attn: Norm,
    pub qkv: Linear,
    pub out: Linear,
    pub ln_ff: Norm,
    pub ff_in: Linear,
    pub ff_out: Linear,
}

#[derive(Clone, Debug)]
pub struct Encoder {
    pub tokens: ParamId,
    pub positions: ParamId,
    pub segments: ParamId,
    pub layers: Vec<EncoderLayer>,
    pub ln_final: Norm,
}

fn embedding<T: Real, R: Rng + ?Sized>(
    store: &mut ParameterStore<T>,
    name: &str,
    rows: usize,
    d: usize,
    rng: &mut R,
) -> Result<ParamId, NumericsError> {
    let bound = 1.0 / (d as f64).sqrt();
    let data = (0..rows * d).map(|_| T::from_f64(rng.gen_range(-bound..bound))).collect();
    store.insert(name, Tensor::matrix(rows, d, data)?)
}

impl Encoder {
    pub fn init<T: Real, R: Rng + ?Sized>(
        cfg: &ModelConfig,
        store: &mut ParameterStore<T>,
        rng: &mut R,
    ) -> Result<Self, NumericsError> {
        let d = cfg.d_model;
        let tokens = embedding(store, "embed.tokens", cfg.vocab_size, d, rng)?;
        let positions = embedding(store, "embed.positions", cfg.max_len, d, rng)?;
        let segments = embedding(store, "embed.segments", 2, d, rng)?;
        let mut layers = Vec::with_capacity(cfg.n_layers);
        for l in 0..cfg.n_layers {
            let p = format!("encoder.{l}");
            layers.push(EncoderLayer {
                ln_attn: Norm::init(store, &format!("{p}.ln_attn"), d)?,
                qkv: Linear::init(store, &format!("{p}.qkv"), d, 3 * d, rng)?,
                out: Linear::init(store, &format!("{p}.out"), d, d, rng)?,
                ln_ff: Norm::init(store, &format!("{p}.ln_ff"), d)?,
                ff_in: Linear::init(store, &format!("{p}.ff_in"), d, cfg.ff_width, rng)?,
                ff_out: Linear::init(store, &format!("{p}.ff_out"), cfg.ff_width, d, rng)?,
            });
        }
        let ln_final = Norm::init(store, "encoder.ln_final", d)?;
        Ok(Self {
            tokens,
            positions,
            segments,
            layers,
            ln_final,
        })
    }

    /// Pre-norm transformer over the summed token, position and segment
    /// embeddings. `mask` is the additive `T×T` attention mask.
    pub fn forward<T: Real>(
        &self,
        cfg: &ModelConfig,
        g: &mut Graph<T>,
        store: &ParameterStore<T>,
        ids: &[usize],
        segments: &[usize],
        mask: Var,
    ) -> Result<Var, NumericsError> {
        let t = ids.len();
        let tok = g.param(store, self.tokens)?;
        let pos = g.param(store, self.positions)?;
        let seg = g.param(store, self.segments)?;
        let e_tok = g.gather_rows(tok, ids)?;
        let positions: Vec<usize> = (0..t).collect();
        let e_pos = g.gather_rows(pos, &positions)?;
        let e_seg = g.gather_rows(seg, segments)?;
        let x = g.add(e_tok, e_pos)?;
        let mut x = g.add(x, e_seg)?;

        let d = cfg.d_model;
        let dh = cfg.head_dim();
        let scale = T::from_f64(1.0 / (dh as f64).sqrt());
        for layer in &self.layers {
            let h = layer.ln_attn.apply(g, store, x)?;
            let qkv = layer.qkv.apply(g, store, h)?;
            let mut heads = Vec::with_capacity(cfg.n_heads);
            for i in 0..cfg.n_heads {
                let q = g.slice_cols(qkv, i * dh, dh)?;
                let k = g.slice_cols(qkv, d + i * dh, dh)?;
                let v = g.slice_cols(qkv, 2 * d + i * dh, dh)?;
                heads.push(attend(g, q, k, v, Some(scale), Some(mask))?);
            }
            let ctx = if heads.len() == 1 { heads[0] } else { g.concat_cols(&heads)? };
            let o = layer.out.apply(g, store, ctx)?;
            x = g.add(x, o)?;
            let h = layer.ln_ff.apply(g, store, x)?;
            let f = layer.ff_in.apply(g, store, h)?;
            let f = g.relu(f)?;
            let f = layer.ff_out.apply(g, store, f)?;
            x = g.add(x, f)?;
        }
        self.ln_final.apply(g, store, x)
    }
}
