use super::{Gradients, Scalar};

/// SGD with classical momentum: `v = m*v - lr*g; w += v`.
#[derive(Clone, Debug)]
pub struct Sgd<T> {
    pub momentum: T,
    velocity: Vec<Vec<T>>,
}

impl<T: Scalar> Sgd<T> {
    pub fn new(momentum: T) -> Self {
        Sgd {
            momentum,
            velocity: Vec::new(),
        }
    }

    /// Update `params` in place; tensors pair with `grads.tensors` by position.
    pub fn step(&mut self, params: Vec<&mut Vec<T>>, grads: &Gradients<T>, lr: T) {
        assert_eq!(params.len(), grads.tensors.len());
        if self.velocity.is_empty() {
            self.velocity = grads.tensors.iter().map(|g| vec![T::zero(); g.len()]).collect();
        }
        for ((w, g), v) in params.into_iter().zip(&grads.tensors).zip(&mut self.velocity) {
            for ((wi, &gi), vi) in w.iter_mut().zip(g).zip(v.iter_mut()) {
                *vi = self.momentum * *vi - lr * gi;
                *wi += *vi;
            }
        }
    }
}
