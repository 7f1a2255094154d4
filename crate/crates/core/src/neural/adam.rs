use super::Parameters;

/// Bias-corrected Adam moments for a parameter set of type `P`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<P> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    pub m: P,
    pub v: P,
}

impl<P: Parameters> AdamState<P> {
    pub fn new(params: &P, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    /// Applies one update of `params` along gradient `grad`.
    pub fn step(&mut self, params: &mut P, grad: &P) {
        assert!(
            params.same_shape(grad) && params.same_shape(&self.m),
            "adam parameter and gradient shapes differ"
        );
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        let lr = self.lr;
        let eps = self.eps;
        for (((p, g), m), v) in params
            .blocks_mut()
            .into_iter()
            .zip(grad.blocks())
            .zip(self.m.blocks_mut())
            .zip(self.v.blocks_mut())
        {
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = b1 * m[i] + (1.0 - b1) * gi;
                v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_bit_identical() {
        let mut p = vec![0.25, -3.0, 1e-300];
        let before = p.clone();
        let mut st = AdamState::new(&p, 1e-3);
        st.step(&mut p, &vec![0.0; 3]);
        assert_eq!(p, before);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = vec![0.0];
        let mut st = AdamState::new(&p, 1e-3);
        st.step(&mut p, &vec![1.0]);
        // m_hat = 1, v_hat = 1, so the step is lr / (1 + eps).
        let expected = -1e-3 / (1.0 + 1e-8);
        assert!((p[0] - expected).abs() < 1e-18, "{}", p[0]);
    }

    #[test]
    fn update_is_pure() {
        let p0 = vec![0.5, -0.5];
        let g = vec![0.3, -2.0];
        let run = || {
            let mut p = p0.clone();
            let mut st = AdamState::new(&p, 1e-3);
            st.step(&mut p, &g);
            st.step(&mut p, &g);
            (p, st)
        };
        assert_eq!(run(), run());
    }
}
