use crate::error::{Error, Result};
use crate::nn::{ParamId, ParamStore};

/// In-place momentum step: `v ← μ·v + g + λ·θ; θ ← θ − lr·v`.
pub fn sgd_step(theta: &mut [f32], grad: &[f32], velocity: &mut [f32], lr: f32, momentum: f32, weight_decay: f32) -> Result<()> {
    if theta.len() != grad.len() || theta.len() != velocity.len() {
        return Err(Error::shape(
            "sgd_step",
            "parameter",
            format!("param {}, grad {}, velocity {}", theta.len(), grad.len(), velocity.len()),
        ));
    }
    for ((t, &g), v) in theta.iter_mut().zip(grad).zip(velocity.iter_mut()) {
        *v = momentum * *v + g + weight_decay * *t;
        *t -= lr * *v;
    }
    Ok(())
}

/// Momentum SGD over a [`ParamStore`], one velocity buffer per trainable tensor.
#[derive(Clone, Debug)]
pub struct Sgd {
    pub momentum: f32,
    pub weight_decay: f32,
    velocity: Vec<Vec<f32>>,
}

impl Sgd {
    pub fn new(store: &ParamStore, momentum: f32, weight_decay: f32) -> Self {
        let velocity = store
            .ids()
            .map(|id| if store.is_trainable(id) { vec![0.0; store.tensor(id).numel()] } else { Vec::new() })
            .collect();
        Sgd {
            momentum,
            weight_decay,
            velocity,
        }
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &[(ParamId, &[f32])], lr: f32) -> Result<()> {
        for &(id, g) in grads {
            if !store.is_trainable(id) {
                continue;
            }
            let v = &mut self.velocity[id.index()];
            sgd_step(store.tensor_mut(id).data_mut(), g, v, lr, self.momentum, self.weight_decay)?;
        }
        Ok(())
    }

    pub fn velocity(&self, id: ParamId) -> &[f32] {
        &self.velocity[id.index()]
    }

    pub fn set_velocity(&mut self, store: &ParamStore, id: ParamId, v: Vec<f32>) -> Result<()> {
        let expected = store.tensor(id).numel();
        if !store.is_trainable(id) || v.len() != expected {
            return Err(Error::Checkpoint(format!("velocity for {} has {} values, expected {expected}", store.name(id), v.len())));
        }
        self.velocity[id.index()] = v;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_step() {
        let (mut t, mut v) = ([1.0f32], [0.0f32]);
        sgd_step(&mut t, &[2.0], &mut v, 0.1, 0.0, 0.0).unwrap();
        assert!((t[0] - 0.8).abs() < 1e-7);
    }

    #[test]
    fn momentum_recurrence() {
        let (mut t, mut v) = ([0.0f32], [0.0f32]);
        sgd_step(&mut t, &[1.0], &mut v, 1.0, 0.9, 0.0).unwrap();
        sgd_step(&mut t, &[1.0], &mut v, 1.0, 0.9, 0.0).unwrap();
        assert!((t[0] + 2.9).abs() < 1e-6);
    }

    #[test]
    fn weight_decay_joins_gradient() {
        let (mut t, mut v) = ([2.0f32], [0.0f32]);
        sgd_step(&mut t, &[0.5], &mut v, 1.0, 0.9, 1e-4).unwrap();
        assert!((v[0] - (0.5 + 1e-4 * 2.0)).abs() < 1e-7);
    }

    #[test]
    fn shape_mismatch() {
        let (mut t, mut v) = ([0.0f32; 2], [0.0f32; 2]);
        assert!(sgd_step(&mut t, &[1.0], &mut v, 1.0, 0.0, 0.0).is_err());
    }
}
