use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::network::Network;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    #[default]
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Per-network optimizer state.
#[derive(Clone, Debug, PartialEq)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub step: u64,
    /// First and second moments (Adam only), one per parameter.
    pub moments: Vec<(Array2<f64>, Array2<f64>)>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, net: &Network) -> Self {
        let moments = match kind {
            OptimizerKind::Sgd => Vec::new(),
            OptimizerKind::Adam { .. } => {
                net.params().iter().map(|p| (Array2::zeros(p.dim()), Array2::zeros(p.dim()))).collect()
            }
        };
        Self { kind, lr, step: 0, moments }
    }

    pub fn apply(&mut self, net: &mut Network, grads: &[Array2<f64>]) {
        self.step += 1;
        let t = self.step as i32;
        let lr = self.lr;
        let mut params = net.params_mut();
        assert_eq!(params.len(), grads.len());
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    p.scaled_add(-lr, g);
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let (c1, c2) = (1.0 - beta1.powi(t), 1.0 - beta2.powi(t));
                for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(&mut self.moments) {
                    m.zip_mut_with(g, |m, &g| *m = beta1 * *m + (1.0 - beta1) * g);
                    v.zip_mut_with(g, |v, &g| *v = beta2 * *v + (1.0 - beta2) * g * g);
                    ndarray::Zip::from(&mut **p).and(&*m).and(&*v).for_each(|p, &m, &v| {
                        *p -= lr * (m / c1) / ((v / c2).sqrt() + eps);
                    });
                }
            }
        }
        net.enforce_masks();
    }
}
