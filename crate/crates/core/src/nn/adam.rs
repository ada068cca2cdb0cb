//! Adam on flat f32 tensors, in the order the parameter set visits them.

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment buffers plus the shared step counter.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Vec<f32>>,
    pub v: Vec<Vec<f32>>,
}

impl AdamState {
    pub fn new(tensor_sizes: &[usize]) -> Self {
        AdamState {
            step: 0,
            m: tensor_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: tensor_sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// Call once per optimization step, before the per-tensor updates.
    pub fn begin_step(&mut self) {
        self.step += 1;
    }

    /// Update tensor `idx` in place given its gradient.
    pub fn update(
        &mut self,
        hyper: &AdamHyper,
        lr: f64,
        idx: usize,
        param: &mut [f32],
        grad: &[f32],
    ) {
        debug_assert_eq!(param.len(), grad.len());
        let t = self.step as i32;
        let c1 = 1.0 - hyper.beta1.powi(t);
        let c2 = 1.0 - hyper.beta2.powi(t);
        let b1 = hyper.beta1 as f32;
        let b2 = hyper.beta2 as f32;
        let one_m_b1 = 1.0 - b1;
        let one_m_b2 = 1.0 - b2;
        let step_size = (lr / c1) as f32;
        let inv_c2 = (1.0 / c2) as f32;
        let eps = hyper.eps as f32;

        let m = &mut self.m[idx];
        let v = &mut self.v[idx];
        for i in 0..param.len() {
            let g = grad[i];
            m[i] = b1 * m[i] + one_m_b1 * g;
            v[i] = b2 * v[i] + one_m_b2 * g * g;
            param[i] -= step_size * m[i] / ((v[i] * inv_c2).sqrt() + eps);
        }
    }
}
