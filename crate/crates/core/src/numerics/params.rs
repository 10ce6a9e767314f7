use std::collections::HashMap;

use rand::Rng;

use super::{NumericsError, Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// One named parameter with its gradient accumulator and Adam moments.
#[derive(Clone, Debug)]
pub struct Parameter<T: Real = f32> {
    name: String,
    value: Tensor<T>,
    grad: Vec<T>,
    grad_ready: bool,
    pub(crate) first_moment: Vec<T>,
    pub(crate) second_moment: Vec<T>,
    pub(crate) steps: u64,
    trainable: bool,
}

impl<T: Real> Parameter<T> {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn value(&self) -> &Tensor<T> {
        &self.value
    }

    pub fn grad(&self) -> &[T] {
        &self.grad
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn is_trainable(&self) -> bool {
        self.trainable
    }

    pub(crate) fn parts_mut(&mut self) -> (&mut [T], &[T], &mut [T], &mut [T]) {
        (
            self.value.data_mut(),
            &self.grad,
            &mut self.first_moment,
            &mut self.second_moment,
        )
    }
}

/// Ordered, uniquely named set of parameters. Shapes are fixed at insertion.
#[derive(Clone, Debug, Default)]
pub struct ParameterStore<T: Real = f32> {
    params: Vec<Parameter<T>>,
    by_name: HashMap<String, ParamId>,
}

impl<T: Real> ParameterStore<T> {
    pub fn new() -> Self {
        Self {
            params: Vec::new(),
            by_name: HashMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<ParamId, NumericsError> {
        self.insert_with(name.into(), value, true)
    }

    /// Inserts a parameter that is never updated and never collects gradients.
    pub fn insert_frozen(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<ParamId, NumericsError> {
        self.insert_with(name.into(), value, false)
    }

    fn insert_with(&mut self, name: String, value: Tensor<T>, trainable: bool) -> Result<ParamId, NumericsError> {
        if self.by_name.contains_key(&name) {
            return Err(NumericsError::DuplicateParameter(name));
        }
        if !value.all_finite() {
            return Err(NumericsError::NonFinite { op: "parameter" });
        }
        let n = value.len();
        let id = ParamId(self.params.len());
        self.by_name.insert(name.clone(), id);
        self.params.push(Parameter {
            name,
            value,
            grad: vec![T::zero(); n],
            grad_ready: false,
            first_moment: vec![T::zero(); n],
            second_moment: vec![T::zero(); n],
            steps: 0,
            trainable,
        });
        Ok(id)
    }

    /// Weight matrix `[fan_in × fan_out]` drawn from `U(-1/√fan_in, 1/√fan_in)`.
    pub fn insert_uniform<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> Result<ParamId, NumericsError> {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| T::from_f64(rng.gen_range(-bound..bound)))
            .collect();
        self.insert(name, Tensor::matrix(fan_in, fan_out, data)?)
    }

    pub fn insert_filled(&mut self, name: impl Into<String>, shape: Vec<usize>, fill: f64) -> Result<ParamId, NumericsError> {
        let n = shape.iter().product();
        self.insert(name, Tensor::new(shape, vec![T::from_f64(fill); n])?)
    }

    pub fn id(&self, name: &str) -> Result<ParamId, NumericsError> {
        self.by_name
            .get(name)
            .copied()
            .ok_or_else(|| NumericsError::UnknownParameter(name.to_string()))
    }

    pub fn get(&self, id: ParamId) -> &Parameter<T> {
        &self.params[id.0]
    }

    pub fn by_name(&self, name: &str) -> Result<&Parameter<T>, NumericsError> {
        Ok(self.get(self.id(name)?))
    }

    pub(crate) fn get_mut(&mut self, id: ParamId) -> &mut Parameter<T> {
        &mut self.params[id.0]
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter<T>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    /// Total number of scalar entries.
    pub fn numel(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Replaces a parameter's values; the shape must not change.
    pub fn set_value(&mut self, id: ParamId, value: Tensor<T>) -> Result<(), NumericsError> {
        let p = &mut self.params[id.0];
        if p.value.shape() != value.shape() {
            return Err(NumericsError::ShapeMismatch {
                op: "set_value",
                left: p.value.shape().to_vec(),
                right: value.shape().to_vec(),
            });
        }
        p.value = value;
        Ok(())
    }

    pub fn set_entry(&mut self, id: ParamId, index: usize, value: T) {
        self.params[id.0].value.data_mut()[index] = value;
    }

    pub(crate) fn accumulate_grad(&mut self, id: ParamId, g: &[T]) {
        let p = &mut self.params[id.0];
        if !p.trainable {
            return;
        }
        for (acc, &v) in p.grad.iter_mut().zip(g) {
            *acc += v;
        }
    }

    pub(crate) fn mark_grads_ready(&mut self) {
        for p in &mut self.params {
            p.grad_ready = true;
        }
    }

    /// Name of the first trainable parameter that has not received a
    /// gradient since the last reset.
    pub fn missing_grad(&self) -> Option<&str> {
        self.params
            .iter()
            .find(|p| p.trainable && !p.grad_ready)
            .map(|p| p.name.as_str())
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g = T::zero());
            p.grad_ready = false;
        }
    }

    /// Copy of the values in another precision; gradients and optimizer
    /// state start fresh. Ids are preserved.
    pub fn cast<U: Real>(&self) -> ParameterStore<U> {
        let mut out = ParameterStore::new();
        for p in &self.params {
            out.insert_with(p.name.clone(), p.value.cast(), p.trainable)
                .expect("names already unique and values finite");
        }
        out
    }

    /// Bitwise equality of names, shapes and values.
    pub fn same_values(&self, other: &Self) -> bool {
        self.params.len() == other.params.len()
            && self.params.iter().zip(&other.params).all(|(a, b)| {
                a.name == b.name
                    && a.value.shape() == b.value.shape()
                    && a.value
                        .data()
                        .iter()
                        .zip(b.value.data())
                        .all(|(x, y)| x.as_f64().to_bits() == y.as_f64().to_bits())
            })
    }
}
