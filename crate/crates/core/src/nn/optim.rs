use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    /// Weight decay added to the gradient (L2 penalty).
    Adam,
    /// Decoupled weight decay.
    AdamW,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig::adam(0.001, 0.0)
    }
}

impl OptimizerConfig {
    pub fn adam(lr: f64, weight_decay: f64) -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Adam,
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn adamw(lr: f64, weight_decay: f64) -> Self {
        OptimizerConfig {
            kind: OptimizerKind::AdamW,
            ..Self::adam(lr, weight_decay)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !(self.weight_decay >= 0.0) || !(self.eps > 0.0) {
            return Err(Error::config(
                "optimizer lr and eps must be > 0, weight_decay >= 0",
            ));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::config("optimizer betas must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Moment buffers and step counter for one set of parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: OptimizerConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl OptimizerState {
    pub fn new(config: OptimizerConfig, shapes: &[usize]) -> Self {
        OptimizerState {
            config,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }

    pub fn for_params(config: OptimizerConfig, params: &[&[f64]]) -> Self {
        let shapes: Vec<usize> = params.iter().map(|p| p.len()).collect();
        Self::new(config, &shapes)
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update of every tensor; dispatches on the configured kind.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::shape("optimizer tensor count mismatch"));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.m) {
            if p.len() != m.len() || g.len() != m.len() {
                return Err(Error::shape("optimizer tensor shape mismatch"));
            }
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let coupled = c.kind == OptimizerKind::Adam && c.weight_decay != 0.0;
        let decoupled = c.kind == OptimizerKind::AdamW && c.weight_decay != 0.0;
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = &mut self.m[k];
            let v = &mut self.v[k];
            for i in 0..p.len() {
                let mut gi = g[i];
                if coupled {
                    gi += c.weight_decay * p[i];
                }
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * gi;
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * gi * gi;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                let before = p[i];
                p[i] -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
                if decoupled {
                    p[i] -= c.lr * c.weight_decay * before;
                }
            }
        }
        Ok(())
    }
}

/// One Adam step (coupled decay) regardless of the state's configured kind.
pub fn adam_step(
    state: &mut OptimizerState,
    params: &mut [&mut [f64]],
    grads: &[&[f64]],
) -> Result<()> {
    state.config.kind = OptimizerKind::Adam;
    state.step(params, grads)
}

/// One AdamW step (decoupled decay) regardless of the state's configured kind.
pub fn adamw_step(
    state: &mut OptimizerState,
    params: &mut [&mut [f64]],
    grads: &[&[f64]],
) -> Result<()> {
    state.config.kind = OptimizerKind::AdamW;
    state.step(params, grads)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(config: OptimizerConfig, steps: usize) -> Vec<f64> {
        let mut p = vec![0.5, -1.5, 2.0];
        let mut st = OptimizerState::new(config, &[3]);
        for s in 0..steps {
            // Gradient of sum (p - s/10)^2 with a deterministic drift.
            let g: Vec<f64> = p.iter().map(|x| 2.0 * (x - s as f64 * 0.1)).collect();
            st.step(&mut [p.as_mut_slice()], &[g.as_slice()]).unwrap();
        }
        p
    }

    #[test]
    fn zero_decay_adam_and_adamw_are_bit_identical() {
        let a = run(OptimizerConfig::adam(0.01, 0.0), 50);
        let b = run(OptimizerConfig::adamw(0.01, 0.0), 50);
        assert_eq!(a, b);
        let c = run(OptimizerConfig::adam(0.01, 0.1), 50);
        let d = run(OptimizerConfig::adamw(0.01, 0.1), 50);
        assert_ne!(c, d);
    }

    #[test]
    fn first_step_hand_value() {
        // t = 1: m = 0.1 g, v = 0.001 g^2, m_hat = g, v_hat = g^2,
        // delta = -lr g / (|g| + eps).
        let lr = 0.001;
        let g = 0.3;
        let mut p = [1.0];
        let mut st = OptimizerState::new(OptimizerConfig::adam(lr, 0.0), &[1]);
        st.step(&mut [&mut p[..]], &[&[g][..]]).unwrap();
        let m_hat = (0.1 * g) / (1.0 - 0.9);
        let v_hat = (0.001 * g * g) / (1.0 - 0.999);
        let expected = 1.0 - lr * m_hat / (f64::sqrt(v_hat) + 1e-8);
        assert!((p[0] - expected).abs() < 1e-15);
        assert!((p[0] - (1.0 - lr * g / (g + 1e-8))).abs() < 1e-12);
    }

    #[test]
    fn adamw_applies_decoupled_decay_after_adaptive_step() {
        let (lr, wd, g) = (0.01, 0.1, -0.2);
        let mut p = [2.0];
        let mut st = OptimizerState::new(OptimizerConfig::adamw(lr, wd), &[1]);
        st.step(&mut [&mut p[..]], &[&[g][..]]).unwrap();
        let adaptive = 2.0 - lr * g / (g.abs() + 1e-8);
        assert!((p[0] - (adaptive - lr * wd * 2.0)).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_zero_decay_is_fixed_point() {
        for cfg in [
            OptimizerConfig::adam(0.1, 0.0),
            OptimizerConfig::adamw(0.1, 0.0),
        ] {
            let mut p = [0.3, -7.0];
            let mut st = OptimizerState::new(cfg, &[2]);
            for _ in 0..5 {
                st.step(&mut [&mut p[..]], &[&[0.0, 0.0][..]]).unwrap();
            }
            assert_eq!(p, [0.3, -7.0]);
            assert_eq!(st.steps(), 5);
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut st = OptimizerState::new(OptimizerConfig::default(), &[2]);
        let mut p = [0.0; 3];
        assert!(st.step(&mut [&mut p[..]], &[&[0.0; 3][..]]).is_err());
    }

    #[test]
    fn named_steps_override_kind() {
        let mut p1 = [1.0];
        let mut p2 = [1.0];
        let mut s1 = OptimizerState::new(OptimizerConfig::adamw(0.1, 0.5), &[1]);
        let mut s2 = OptimizerState::new(OptimizerConfig::adam(0.1, 0.5), &[1]);
        adam_step(&mut s1, &mut [&mut p1[..]], &[&[0.2][..]]).unwrap();
        s2.step(&mut [&mut p2[..]], &[&[0.2][..]]).unwrap();
        assert_eq!(p1, p2);
        adamw_step(&mut s1, &mut [&mut p1[..]], &[&[0.2][..]]).unwrap();
        assert_eq!(s1.config.kind, OptimizerKind::AdamW);
    }
}
