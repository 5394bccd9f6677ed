//! ADAM with bias correction.

use crate::error::OptimError;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// First/second moment buffers, one per parameter, plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T: Scalar> {
    pub first_moment: Vec<Vec<T>>,
    pub second_moment: Vec<Vec<T>>,
    pub step_count: u64,
    pub beta1: T,
    pub beta2: T,
    pub epsilon: T,
}

impl<T: Scalar> AdamState<T> {
    /// Zeroed moments shaped like `sizes`.
    pub fn new(sizes: impl IntoIterator<Item = usize>, config: AdamConfig) -> Self {
        let sizes: Vec<usize> = sizes.into_iter().collect();
        Self {
            first_moment: sizes.iter().map(|&n| vec![T::zero(); n]).collect(),
            second_moment: sizes.iter().map(|&n| vec![T::zero(); n]).collect(),
            step_count: 0,
            beta1: T::from_f64_lossy(config.beta1),
            beta2: T::from_f64_lossy(config.beta2),
            epsilon: T::from_f64_lossy(config.epsilon),
        }
    }
}

/// One ADAM update in place. All gradients are validated before any parameter
/// changes, so a rejected step leaves `params` and `state` untouched.
pub fn adam_step<T: Scalar>(
    params: &mut [&mut [T]],
    grads: &[&[T]],
    names: &[&str],
    state: &mut AdamState<T>,
    lr: T,
) -> Result<(), OptimError> {
    if !(lr > T::zero()) {
        return Err(OptimError::LearningRate(lr.to_f64_lossy()));
    }
    if params.len() != grads.len() || params.len() != state.first_moment.len() || names.len() != params.len() {
        return Err(OptimError::StateMismatch(format!(
            "{} params, {} grads, {} names, {} moment buffers",
            params.len(),
            grads.len(),
            names.len(),
            state.first_moment.len()
        )));
    }
    for (i, ((p, g), m)) in params.iter().zip(grads).zip(&state.first_moment).enumerate() {
        if p.len() != g.len() || p.len() != m.len() {
            return Err(OptimError::StateMismatch(format!("parameter `{}` size mismatch", names[i])));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(OptimError::NonFiniteGradient(names[i].to_string()));
        }
    }

    state.step_count += 1;
    let one = T::one();
    let (b1, b2, eps) = (state.beta1, state.beta2, state.epsilon);
    let t = i32::try_from(state.step_count).unwrap_or(i32::MAX);
    let bc1 = one - b1.powi(t);
    let bc2 = one - b2.powi(t);
    for (((p, g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(state.first_moment.iter_mut())
        .zip(state.second_moment.iter_mut())
    {
        for (((pv, &gv), mv), vv) in p.iter_mut().zip(g.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mv = b1 * *mv + (one - b1) * gv;
            *vv = b2 * *vv + (one - b2) * gv * gv;
            let m_hat = *mv / bc1;
            let v_hat = *vv / bc2;
            *pv -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn step(p: &mut Vec<f64>, g: &[f64], s: &mut AdamState<f64>, lr: f64) -> Result<(), OptimError> {
        adam_step(&mut [p.as_mut_slice()], &[g], &["p"], s, lr)
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = vec![1.0];
        let mut s = AdamState::new([1], AdamConfig::default());
        step(&mut p, &[1.0], &mut s, 0.1).unwrap();
        // m_hat = v_hat = 1, update = 0.1 / (1 + 1e-8)
        assert_abs_diff_eq!(p[0], 1.0 - 0.1 / (1.0 + 1e-8), epsilon = 1e-15);
        assert_eq!(s.step_count, 1);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = vec![0.3, -2.0];
        let mut s = AdamState::new([2], AdamConfig::default());
        for _ in 0..5 {
            step(&mut p, &[0.0, 0.0], &mut s, 0.01).unwrap();
        }
        assert_eq!(p, vec![0.3, -2.0]);
        assert_eq!(s.step_count, 5);
    }

    #[test]
    fn identical_runs_are_bit_identical() {
        let run = || {
            let mut p = vec![0.5f32, -0.25, 1.5];
            let mut s = AdamState::new([3], AdamConfig::default());
            for i in 0..10 {
                let g = [0.1 * i as f32, -0.3, (i as f32).sin()];
                adam_step(&mut [p.as_mut_slice()], &[&g], &["p"], &mut s, 1e-3).unwrap();
            }
            p
        };
        let (a, b) = (run(), run());
        assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut a = vec![1.0];
        let mut b = vec![2.0];
        let mut s = AdamState::new([1, 1], AdamConfig::default());
        let err = adam_step(&mut [a.as_mut_slice(), b.as_mut_slice()], &[&[0.5], &[f64::NAN]], &["a", "b"], &mut s, 0.1)
            .unwrap_err();
        assert!(matches!(err, OptimError::NonFiniteGradient(ref n) if n == "b"));
        assert_eq!((a[0], b[0], s.step_count), (1.0, 2.0, 0));
    }

    #[test]
    fn rejects_non_positive_lr() {
        let mut p = vec![1.0];
        let mut s = AdamState::new([1], AdamConfig::default());
        assert!(step(&mut p, &[1.0], &mut s, 0.0).is_err());
    }
}
