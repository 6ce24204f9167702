//! Softmax and cross-entropy in log space.

use crate::scalar::Real;

/// Index of the largest entry; ties resolve to the lowest index.
pub fn argmax<T: Real>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub fn log_sum_exp<T: Real>(logits: &[T]) -> T {
    let m = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let s: T = logits.iter().map(|&z| (z - m).exp()).sum();
    m + s.ln()
}

/// Max-subtracted softmax.
pub fn softmax<T: Real>(logits: &[T]) -> Vec<T> {
    let m = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&z| (z - m).exp()).collect();
    let s: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / s).collect()
}

/// `−log softmax(logits)[label]`.
pub fn cross_entropy<T: Real>(logits: &[T], label: usize) -> T {
    log_sum_exp(logits) - logits[label]
}

/// `softmax(logits) − onehot(label)`: gradient of [`cross_entropy`] w.r.t. the
/// logits.
pub fn cross_entropy_grad<T: Real>(logits: &[T], label: usize) -> (Vec<T>, Vec<T>) {
    let p = softmax(logits);
    let mut g = p.clone();
    g[label] -= T::one();
    (p, g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_of_zeros_is_uniform() {
        assert_eq!(softmax(&[0.0f64; 4]), vec![0.25; 4]);
    }

    #[test]
    fn softmax_of_log_ratio() {
        let p = softmax(&[1.0f64.ln(), 3.0f64.ln()]);
        assert!((p[0] - 0.25).abs() < 1e-15);
        assert!((p[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn large_logits_do_not_overflow() {
        let p = softmax(&[1000.0f64, 1000.0, -1000.0]);
        assert!((p[0] - 0.5).abs() < 1e-15);
        assert!(p.iter().all(|x| x.is_finite()));
        assert!(cross_entropy(&[1000.0f64, -1000.0], 1).is_finite());
    }

    #[test]
    fn cross_entropy_matches_direct_formula() {
        let z = [0.3f64, -1.2, 2.0];
        let p = softmax(&z);
        assert!((cross_entropy(&z, 2) + p[2].ln()).abs() < 1e-14);
    }

    #[test]
    fn argmax_prefers_first_tie() {
        assert_eq!(argmax(&[1.0f64, 3.0, 3.0]), 1);
    }
}
