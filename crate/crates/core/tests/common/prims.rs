//! One objective per differentiable primitive.

use unikp::numerics::{Graph, NumericsError, Objective, ParameterStore, Real, Tensor, Var};

/// Deterministic pseudo-random values for fixtures.
pub fn fill(n: usize, seed: u64, scale: f64) -> Vec<f32> {
    (0..n)
        .map(|i| {
            let x = ((i as f64 + 1.0) * 12.9898 + seed as f64 * 78.233).sin() * 43758.5453;
            ((x - x.floor()) * 2.0 - 1.0) as f32 * scale as f32
        })
        .collect()
}

pub fn store() -> ParameterStore<f32> {
    let mut s = ParameterStore::new();
    s.insert("a", Tensor::matrix(3, 4, fill(12, 1, 1.0)).unwrap()).unwrap();
    s.insert("b", Tensor::matrix(4, 3, fill(12, 2, 1.0)).unwrap()).unwrap();
    // kept at least 0.3 away from zero so relu checks never straddle the kink
    let c = fill(12, 3, 1.0).into_iter().map(|v| v.signum() * (0.3 + v.abs())).collect();
    s.insert("c", Tensor::matrix(3, 4, c).unwrap()).unwrap();
    s.insert("v", Tensor::vector(fill(4, 4, 1.0)).unwrap()).unwrap();
    s.insert("w", Tensor::vector(fill(4, 5, 1.0)).unwrap()).unwrap();
    s
}

#[derive(Clone, Copy, Debug)]
pub enum Prim {
    MatMul,
    MatMulNt,
    Add,
    AddRow,
    Mul,
    Scale,
    Relu,
    Softmax,
    LayerNorm,
    GatherRows,
    SliceConcat,
    CrossEntropy,
    PickSegment,
    ColumnSums,
    Mse,
}

pub const ALL: [Prim; 15] = [
    Prim::MatMul,
    Prim::MatMulNt,
    Prim::Add,
    Prim::AddRow,
    Prim::Mul,
    Prim::Scale,
    Prim::Relu,
    Prim::Softmax,
    Prim::LayerNorm,
    Prim::GatherRows,
    Prim::SliceConcat,
    Prim::CrossEntropy,
    Prim::PickSegment,
    Prim::ColumnSums,
    Prim::Mse,
];

/// Reduces any output to a scalar through a fixed random projection so no
/// gradient is structurally zero.
fn project<T: Real>(g: &mut Graph<T>, x: Var) -> Result<Var, NumericsError> {
    let t = g.value(x);
    let r: Vec<T> = fill(t.len(), 99, 1.0).into_iter().map(|v| T::from_f64(v as f64)).collect();
    let r = g.constant(Tensor::new(t.shape().to_vec(), r)?)?;
    let y = g.mul(x, r)?;
    g.sum(y)
}

impl Objective for Prim {
    type Error = NumericsError;

    fn build<T: Real>(&self, g: &mut Graph<T>, s: &ParameterStore<T>) -> Result<Var, NumericsError> {
        let a = g.param(s, s.id("a")?)?;
        let b = g.param(s, s.id("b")?)?;
        let c = g.param(s, s.id("c")?)?;
        let v = g.param(s, s.id("v")?)?;
        let w = g.param(s, s.id("w")?)?;
        let out = match self {
            Prim::MatMul => g.matmul(a, b)?,
            Prim::MatMulNt => g.matmul_nt(a, c)?,
            Prim::Add => g.add(a, c)?,
            Prim::AddRow => g.add_row(a, v)?,
            Prim::Mul => g.mul(a, c)?,
            Prim::Scale => g.scale(a, T::from_f64(-1.7))?,
            Prim::Relu => g.relu(c)?,
            Prim::Softmax => g.row_softmax(a)?,
            Prim::LayerNorm => g.layer_norm(a, v, w)?,
            Prim::GatherRows => g.gather_rows(b, &[3, 0, 3, 1])?,
            Prim::SliceConcat => {
                let left = g.slice_cols(a, 0, 1)?;
                let right = g.slice_cols(a, 1, 3)?;
                g.concat_cols(&[right, left, right])?
            }
            Prim::CrossEntropy => return g.cross_entropy(a, &[0, 3, 1], &[1.0, 5.0, 2.0].map(T::from_f64)),
            Prim::PickSegment => {
                let probs = g.row_softmax(a)?;
                let picked = g.pick(probs, &[(0, 1), (2, 3), (1, 1), (0, 0)])?;
                g.segment_sum(picked, &[0, 1, 1, 2], 3)?
            }
            Prim::ColumnSums => g.column_sums(a, &[3, 1])?,
            Prim::Mse => {
                let flat = g.column_sums(a, &[0, 1, 2, 3])?;
                return g.mse(flat, &[0.5, -1.0, 2.0, 0.0].map(T::from_f64));
            }
        };
        project(g, out)
    }
}
