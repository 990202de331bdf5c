//! Actor and critic objectives with hand-derived gradients.
//!
//! `L_imit = −mean_i w_i·log π(a_i|s_i)` over demonstration samples.
//! `L_RL = −mean_s [Σ_a π(a|s)·Q(s,a) + α_ent·H(π(·|s))]`, the expectation
//! taken exactly over the catalog. Minimizing `L_RL` raises entropy, so a
//! larger `α_ent` keeps the policy more spread out.

use crate::error::{Error, Result};
use crate::neural::{Gradients, Net};

/// `(state, action, weight)` for the imitation loss.
pub type WeightedPair<'a> = (&'a [f64], usize, f64);

pub fn entropy(probs: &[f64]) -> f64 {
    -probs.iter().filter(|p| **p > 0.0).map(|p| p * p.ln()).sum::<f64>()
}

pub fn imitation_loss(actor: &Net, batch: &[WeightedPair<'_>]) -> Result<(f64, Gradients)> {
    let mut grads = actor.zero_grads();
    if batch.is_empty() {
        return Ok((0.0, grads));
    }
    let n = batch.len() as f64;
    let mut loss = 0.0;
    for &(state, action, w) in batch {
        if action >= actor.output_dim() {
            return Err(Error::usage(format!("action {action} outside the actor's {} outputs", actor.output_dim())));
        }
        if w == 0.0 {
            continue;
        }
        let trace = actor.trace(state)?;
        let log_p = crate::neural::log_softmax(&trace.logits);
        loss -= w * log_p[action] / n;
        let d: Vec<f64> = trace
            .output
            .iter()
            .enumerate()
            .map(|(k, p)| w * (p - if k == action { 1.0 } else { 0.0 }) / n)
            .collect();
        actor.accumulate_from_logits(&trace, &d, &mut grads);
    }
    Ok((loss, grads))
}

/// `L_RL` for states with precomputed critic rows `q_values[i] = Q(s_i, ·)`.
pub fn rl_loss(actor: &Net, states: &[&[f64]], q_values: &[Vec<f64>], alpha_ent: f64) -> Result<(f64, Gradients)> {
    if states.len() != q_values.len() {
        return Err(Error::usage("one critic row per state is required"));
    }
    let mut grads = actor.zero_grads();
    if states.is_empty() {
        return Ok((0.0, grads));
    }
    let n = states.len() as f64;
    let mut loss = 0.0;
    for (state, q) in states.iter().zip(q_values) {
        let trace = actor.trace(state)?;
        let p = &trace.output;
        let log_p = crate::neural::log_softmax(&trace.logits);
        let q_bar: f64 = p.iter().zip(q).map(|(a, b)| a * b).sum();
        let h: f64 = -p.iter().zip(&log_p).map(|(a, b)| a * b).sum::<f64>();
        loss -= (q_bar + alpha_ent * h) / n;
        let d: Vec<f64> = (0..p.len())
            .map(|k| (-p[k] * (q[k] - q_bar) + alpha_ent * p[k] * (log_p[k] + h)) / n)
            .collect();
        actor.accumulate_from_logits(&trace, &d, &mut grads);
    }
    Ok((loss, grads))
}

/// `Q(s, ·)` for every state.
pub fn q_rows(q: &Net, states: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
    states.iter().map(|s| q.forward(s)).collect()
}

/// Returns `(L_imit, L_RL, λ_imit·L_imit + L_RL, ∇total)`. With `λ_imit = 0`
/// the gradient is exactly the `L_RL` gradient.
pub fn total_loss(
    actor: &Net,
    imitation: &[WeightedPair<'_>],
    states: &[&[f64]],
    q_values: &[Vec<f64>],
    lambda_imit: f64,
    alpha_ent: f64,
) -> Result<(f64, f64, f64, Gradients)> {
    let (l_rl, mut grads) = rl_loss(actor, states, q_values, alpha_ent)?;
    let mut l_imit = 0.0;
    if lambda_imit != 0.0 {
        let (li, gi) = imitation_loss(actor, imitation)?;
        l_imit = li;
        grads.add_scaled(&gi, lambda_imit);
    } else if !imitation.is_empty() {
        l_imit = imitation_loss(actor, imitation)?.0;
    }
    Ok((l_imit, l_rl, lambda_imit * l_imit + l_rl, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{adam_step, gradient_check, Activation, Head, OptState};
    use crate::seed;
    use rand::Rng;

    fn random_states(n: usize, dim: usize, seed_value: u64) -> Vec<Vec<f64>> {
        let mut rng = seed::rng(seed_value);
        (0..n).map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()
    }

    #[test]
    fn imitation_examples() {
        let actor = Net::zeros(&[3, 5], Activation::Tanh, Head::Softmax).unwrap();
        let s = [0.1, 0.2, 0.3];
        let (l, g) = imitation_loss(&actor, &[(&s, 2, 0.0), (&s, 1, 0.0)]).unwrap();
        assert_eq!(l, 0.0);
        assert_eq!(g.max_abs(), 0.0);
        let (l, _) = imitation_loss(&actor, &[(&s, 2, 1.0)]).unwrap();
        assert!((l - 5f64.ln()).abs() < 1e-12);
        let actor = Net::new(&[3, 4, 5], Activation::Tanh, Head::Softmax, 1).unwrap();
        let (l1, _) = imitation_loss(&actor, &[(&s, 2, 0.7), (&s, 4, 1.3)]).unwrap();
        let (l2, _) = imitation_loss(&actor, &[(&s, 2, 1.4), (&s, 4, 2.6)]).unwrap();
        assert_eq!(2.0 * l1, l2);
        assert_eq!(imitation_loss(&actor, &[]).unwrap().0, 0.0);
    }

    #[test]
    fn rl_examples() {
        let s = [0.5, -0.5];
        let actor = Net::new(&[2, 3, 4], Activation::Tanh, Head::Softmax, 3).unwrap();
        let (l, _) = rl_loss(&actor, &[&s], &[vec![0.0; 4]], 0.0).unwrap();
        assert_eq!(l, 0.0);
        let uniform = Net::zeros(&[2, 4], Activation::Tanh, Head::Softmax).unwrap();
        let (l, g) = rl_loss(&uniform, &[&s], &[vec![0.0; 4]], 0.3).unwrap();
        assert!((l + 0.3 * 4f64.ln()).abs() < 1e-12);
        // Entropy is maximal, so its gradient vanishes.
        assert!(g.max_abs() < 1e-12);
    }

    #[test]
    fn rl_ascent_concentrates_on_rewarded_action() {
        let s = [0.2, 0.4];
        let mut actor = Net::new(&[2, 8, 5], Activation::Tanh, Head::Softmax, 7).unwrap();
        let mut opt = OptState::new(&actor, 0.05);
        let q = vec![vec![0.0, 0.0, 1.0, 0.0, 0.0]];
        for _ in 0..200 {
            let (_, g) = rl_loss(&actor, &[&s], &q, 0.01).unwrap();
            adam_step(&mut actor, &g, &mut opt).unwrap();
        }
        assert!(actor.forward(&s).unwrap()[2] >= 0.9);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let states = random_states(6, 4, 11);
        let refs: Vec<&[f64]> = states.iter().map(|v| v.as_slice()).collect();
        let mut rng = seed::rng(12);
        let q: Vec<Vec<f64>> = (0..6).map(|_| (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
        let pairs: Vec<WeightedPair> = refs.iter().enumerate().map(|(i, s)| (*s, i % 5, 0.5 + i as f64 * 0.3)).collect();
        let actor = Net::new(&[4, 6, 5], Activation::Tanh, Head::Softmax, 2).unwrap();
        let err = gradient_check(&actor, |a| total_loss(a, &pairs, &refs, &q, 0.7, 0.2).map(|r| (r.2, r.3)), 1e-5).unwrap();
        assert!(err < 1e-4, "relative error {err}");
    }

    #[test]
    fn total_is_additive() {
        let states = random_states(4, 3, 1);
        let refs: Vec<&[f64]> = states.iter().map(|v| v.as_slice()).collect();
        let q = vec![vec![1.0, -1.0, 0.5]; 4];
        let pairs: Vec<WeightedPair> = refs.iter().map(|s| (*s, 1, 2.0)).collect();
        let actor = Net::new(&[3, 5, 3], Activation::Tanh, Head::Softmax, 4).unwrap();
        let (_, gi) = imitation_loss(&actor, &pairs).unwrap();
        let (_, gr) = rl_loss(&actor, &refs, &q, 0.1).unwrap();
        let (_, _, _, gt) = total_loss(&actor, &pairs, &refs, &q, 0.5, 0.1).unwrap();
        for ((a, b), t) in gi.0.iter().zip(&gr.0).zip(&gt.0) {
            assert!((0.5 * a + b - t).abs() < 1e-12);
        }
        let (_, _, _, g0) = total_loss(&actor, &pairs, &refs, &q, 0.0, 0.1).unwrap();
        assert_eq!(g0, gr);
    }
}
