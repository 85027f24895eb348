use rand::Rng;

use super::layers::Saved;
use super::{Layer, LayerSpec, Scalar};
use crate::error::{Error, Result};

/// A feed-forward stack of layers over a fixed input shape.
#[derive(Clone, Debug)]
pub struct Network<T> {
    input_shape: Vec<usize>,
    layers: Vec<Layer<T>>,
    /// `shapes[i]` is the input shape of layer `i`; the last entry is the output shape.
    shapes: Vec<Vec<usize>>,
    /// Index of each layer's first tensor in the flat parameter list.
    param_start: Vec<usize>,
}

/// Intermediate values of one forward pass, needed for backprop.
#[derive(Clone, Debug)]
pub struct Trace<T> {
    saved: Vec<Saved<T>>,
    pub output: Vec<T>,
}

/// Gradient buffers laid out like [`Network::params`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    pub tensors: Vec<Vec<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn add_assign(&mut self, other: &Gradients<T>) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += *y;
            }
        }
    }

    pub fn scale(&mut self, f: T) {
        self.tensors
            .iter_mut()
            .flat_map(|t| t.iter_mut())
            .for_each(|v| *v *= f);
    }

    pub fn flat(&self) -> Vec<T> {
        self.tensors.iter().flatten().copied().collect()
    }
}

impl<T: Scalar> Network<T> {
    /// Build with seeded fan-in-scaled uniform init: `±sqrt(6/fan_in)` for
    /// hidden layers and `±sqrt(1/fan_in)` for the last parametric layer.
    pub fn new<R: Rng>(input_shape: &[usize], specs: &[LayerSpec], rng: &mut R) -> Result<Self> {
        let mut shapes = vec![input_shape.to_vec()];
        for spec in specs {
            let next = spec.output_shape(shapes.last().unwrap())?;
            shapes.push(next);
        }
        let last_param = specs
            .iter()
            .rposition(|s| matches!(s, LayerSpec::Conv { .. } | LayerSpec::Dense { .. }));
        let mut layers = Vec::with_capacity(specs.len());
        let mut param_start = Vec::with_capacity(specs.len());
        let mut n_tensors = 0;
        for (i, spec) in specs.iter().enumerate() {
            let gain = if Some(i) == last_param { 1.0 } else { 6.0 };
            let layer = Layer::build(*spec, &shapes[i], gain, rng);
            param_start.push(n_tensors);
            n_tensors += layer.params().len();
            layers.push(layer);
        }
        Ok(Network {
            input_shape: input_shape.to_vec(),
            layers,
            shapes,
            param_start,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn output_len(&self) -> usize {
        self.shapes.last().unwrap().iter().product()
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(Layer::spec).collect()
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn params(&self) -> Vec<&Vec<T>> {
        self.layers.iter().flat_map(Layer::params).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Vec<T>> {
        self.layers.iter_mut().flat_map(Layer::params_mut).collect()
    }

    pub fn flat_params(&self) -> Vec<T> {
        self.params().into_iter().flatten().copied().collect()
    }

    pub fn set_flat_params(&mut self, values: &[T]) -> Result<()> {
        if values.len() != self.param_count() {
            return Err(Error::Config(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                values.len()
            )));
        }
        let mut rest = values;
        for p in self.params_mut() {
            let (head, tail) = rest.split_at(p.len());
            p.copy_from_slice(head);
            rest = tail;
        }
        Ok(())
    }

    pub fn zero_grads(&self) -> Gradients<T> {
        Gradients {
            tensors: self.params().iter().map(|p| vec![T::zero(); p.len()]).collect(),
        }
    }

    fn check_input(&self, x: &[T]) {
        assert_eq!(
            x.len(),
            self.input_len(),
            "input length does not match shape {:?}",
            self.input_shape
        );
    }

    pub fn forward(&self, x: &[T]) -> Vec<T> {
        self.check_input(x);
        let mut cur = x.to_vec();
        for layer in &self.layers {
            cur = layer.forward(&cur, false).0;
        }
        cur
    }

    pub fn forward_traced(&self, x: &[T]) -> Trace<T> {
        self.check_input(x);
        let mut cur = x.to_vec();
        let mut saved = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (y, s) = layer.forward(&cur, true);
            saved.push(s);
            cur = y;
        }
        Trace { saved, output: cur }
    }

    /// Backpropagate `dy` (gradient w.r.t. the output), accumulating into
    /// `grads` (laid out like [`Network::params`]). Returns the input
    /// gradient when `need_input_grad` is set.
    pub fn backward(
        &self,
        trace: &Trace<T>,
        dy: &[T],
        grads: &mut [Vec<T>],
        need_input_grad: bool,
    ) -> Option<Vec<T>> {
        assert_eq!(dy.len(), self.output_len());
        assert_eq!(grads.len(), self.params().len());
        // Layers below the first parametric one never need an input gradient.
        let first_param = self
            .layers
            .iter()
            .position(|l| !l.params().is_empty())
            .unwrap_or(self.layers.len());
        let mut cur = dy.to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let n = layer.params().len();
            let start = self.param_start[i];
            let need = need_input_grad || i > first_param;
            cur = layer.backward(&trace.saved[i], &cur, &mut grads[start..start + n], need)?;
        }
        Some(cur)
    }
}
