use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Adam with bias correction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step_count: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl Adam {
    pub fn new(params: &[Tensor], lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step_count: 0,
            first: params.iter().map(|p| Tensor::zeros(&p.shape)).collect(),
            second: params.iter().map(|p| Tensor::zeros(&p.shape)).collect(),
        }
    }

    pub fn first_moment(&self, i: usize) -> &Tensor {
        &self.first[i]
    }

    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != params.len() {
            return Err(Error::Shape {
                op: "adam parameter count",
                left: vec![self.first.len()],
                right: vec![params.len(), grads.len()],
            });
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape != self.first[i].shape || g.shape != p.shape {
                return Err(Error::Shape { op: "adam", left: p.shape.clone(), right: g.shape.clone() });
            }
            if let Some(k) = g.data.iter().position(|v| !v.is_finite()) {
                let bad = g.data.iter().filter(|v| !v.is_finite()).count();
                return Err(Error::NonFinite(format!(
                    "gradient of parameter {i} (shape {:?}) has {bad} non-finite entries, first at {k} = {}",
                    g.shape, g.data[k]
                )));
            }
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.first.iter_mut().zip(self.second.iter_mut())) {
            for j in 0..p.data.len() {
                let gj = g.data[j];
                m.data[j] = self.beta1 * m.data[j] + (1.0 - self.beta1) * gj;
                v.data[j] = self.beta2 * v.data[j] + (1.0 - self.beta2) * gj * gj;
                let mh = m.data[j] / c1;
                let vh = v.data[j] / c2;
                p.data[j] -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = vec![Tensor::full(&[3], 1.5)];
        let mut opt = Adam::new(&p, 0.1);
        opt.step(&mut p, &[Tensor::zeros(&[3])]).unwrap();
        assert_eq!(p[0].data, vec![1.5; 3]);
    }

    #[test]
    fn moves_against_constant_gradient() {
        let mut p = vec![Tensor::full(&[2], 0.0)];
        let mut opt = Adam::new(&p, 0.01);
        let g = Tensor::new(vec![2], vec![3.0, -0.5]).unwrap();
        for _ in 0..50 {
            opt.step(&mut p, std::slice::from_ref(&g)).unwrap();
        }
        assert!(p[0].data[0] < 0.0 && p[0].data[1] > 0.0);
    }

    #[test]
    fn quadratic_bowl_converges() {
        // f(x) = Σ (x_i - c_i)^2
        let c = [2.0, -1.0, 0.5];
        let mut p = vec![Tensor::zeros(&[3])];
        let mut opt = Adam::new(&p, 0.05);
        let loss = |x: &Tensor| x.data.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        let mut history = Vec::new();
        for _ in 0..400 {
            let g = Tensor::new(vec![3], p[0].data.iter().zip(&c).map(|(a, b)| 2.0 * (a - b)).collect()).unwrap();
            opt.step(&mut p, &[g]).unwrap();
            history.push(loss(&p[0]));
        }
        // monotone over the first stretch where Adam behaves like sign descent
        assert!(history[..30].windows(2).all(|w| w[1] <= w[0]));
        assert!(*history.last().unwrap() < 1e-3);
    }

    #[test]
    fn rejects_non_finite() {
        let mut p = vec![Tensor::zeros(&[2])];
        let mut opt = Adam::new(&p, 0.1);
        let err = opt.step(&mut p, &[Tensor::new(vec![2], vec![0.0, f64::NAN]).unwrap()]).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
        assert_eq!(opt.step_count, 0);
    }
}
