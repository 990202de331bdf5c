use serde::{Deserialize, Serialize};

use super::{Gradients, Net};
use crate::error::{Error, Result};

/// Adam moment estimates for one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step: u64,
    pub learning_rate: f64,
    pub betas: (f64, f64),
    pub epsilon: f64,
}

impl OptState {
    pub fn new(net: &Net, learning_rate: f64) -> Self {
        OptState {
            first_moment: vec![0.0; net.param_count()],
            second_moment: vec![0.0; net.param_count()],
            step: 0,
            learning_rate,
            betas: (0.9, 0.999),
            epsilon: 1e-8,
        }
    }
}

/// One bias-corrected Adam update.
///
/// The update is computed in full before it is applied; if any new parameter
/// or moment would be non-finite the network and state are left untouched and
/// a numeric error is returned.
pub fn adam_step(net: &mut Net, grads: &Gradients, opt: &mut OptState) -> Result<()> {
    let n = net.param_count();
    if grads.len() != n || opt.first_moment.len() != n || opt.second_moment.len() != n {
        return Err(Error::usage(format!(
            "shape mismatch: {} parameters, {} gradients, {} moments",
            n,
            grads.len(),
            opt.first_moment.len()
        )));
    }
    if !grads.is_finite() {
        return Err(Error::numeric("non-finite gradient passed to optimizer"));
    }
    let (b1, b2) = opt.betas;
    let t = opt.step + 1;
    let c1 = 1.0 - b1.powi(t as i32);
    let c2 = 1.0 - b2.powi(t as i32);
    let mut m = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    let mut p = Vec::with_capacity(n);
    for i in 0..n {
        let g = grads.0[i];
        let mi = b1 * opt.first_moment[i] + (1.0 - b1) * g;
        let vi = b2 * opt.second_moment[i] + (1.0 - b2) * g * g;
        let update = opt.learning_rate * (mi / c1) / ((vi / c2).sqrt() + opt.epsilon);
        let pi = net.params()[i] - update;
        if !pi.is_finite() || !vi.is_finite() {
            return Err(Error::numeric(format!(
                "optimizer step would make parameter {i} non-finite"
            )));
        }
        m.push(mi);
        v.push(vi);
        p.push(pi);
    }
    net.params_mut().copy_from_slice(&p);
    opt.first_moment = m;
    opt.second_moment = v;
    opt.step = t;
    Ok(())
}
