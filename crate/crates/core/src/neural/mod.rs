//! Minimal numerical core: tensors, reverse-mode gradients for the layers the
//! models use, Adam and the learning-rate schedule.

mod config;
mod gradcheck;
mod graph;
pub mod layers;
mod optim;
mod params;
mod schedule;
mod tensor;

use thiserror::Error;

pub use config::ModelConfig;
pub use gradcheck::{grad_check, relative_error, GradCheck, FD_STEP, REL_ERR_FLOOR};
pub use graph::{AttnMask, Gradients, Graph, NodeId, LAYER_NORM_EPS};
pub use optim::{adam_step, clip_global_norm, OptimState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use params::{to_storage, ParamId, ParamStore};
pub use schedule::{cosine_annealing, lr_at, LrSchedule};
pub use tensor::Tensor;

#[derive(Debug, Error, PartialEq)]
pub enum NeuralError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite value encountered")]
    NonFinite,
    #[error("every position is ignored; nothing to average")]
    EmptyBatch,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// Numerically stable softmax of a vector.
pub fn softmax(x: &[f64]) -> Result<Vec<f64>, NeuralError> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(NeuralError::NonFinite);
    }
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// `log(softmax(x))`, with `-inf` entries allowed (they stay `-inf`).
pub fn log_softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return vec![f64::NEG_INFINITY; x.len()];
    }
    let sum: f64 = x.iter().map(|v| (v - max).exp()).sum();
    let log_z = max + sum.ln();
    x.iter().map(|v| v - log_z).collect()
}

/// Attention on plain tensors: `q: (m, d_k)`, `k: (n, d_k)`, `v: (n, d_v)`,
/// optional `(m, n)` mask.
pub fn scaled_dot_product_attention(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    mask: Option<&AttnMask>,
) -> Result<Tensor, NeuralError> {
    if q.rank() != 2 || k.rank() != 2 || v.rank() != 2 {
        return Err(NeuralError::ShapeMismatch("attention operands must be 2-D".into()));
    }
    if q.cols() != k.cols() || k.rows() != v.rows() {
        return Err(NeuralError::ShapeMismatch(format!(
            "q {:?}, k {:?}, v {:?}",
            q.shape(),
            k.shape(),
            v.shape()
        )));
    }
    if let Some(m) = mask {
        if (m.rows, m.cols) != (q.rows(), k.rows()) || m.blocked.len() != m.rows * m.cols {
            return Err(NeuralError::ShapeMismatch(format!(
                "mask ({}, {}) for scores ({}, {})",
                m.rows,
                m.cols,
                q.rows(),
                k.rows()
            )));
        }
    }
    let store = ParamStore::new();
    let mut g = Graph::new(&store);
    let (qn, kn, vn) = (g.input(q.clone()), g.input(k.clone()), g.input(v.clone()));
    let out = layers::scaled_dot_product_attention(&mut g, qn, kn, vn, mask);
    Ok(g.value(out).clone())
}

/// Mean token cross-entropy over `(n, V)` logits, skipping `ignore_id`
/// targets. Returns the loss and its gradient with respect to the logits.
pub fn cross_entropy_loss(logits: &Tensor, targets: &[u32], ignore_id: u32) -> Result<(f64, Tensor), NeuralError> {
    if logits.rank() != 2 || logits.rows() != targets.len() {
        return Err(NeuralError::ShapeMismatch(format!(
            "logits {:?} for {} targets",
            logits.shape(),
            targets.len()
        )));
    }
    let vocab = logits.cols();
    let mut mapped = Vec::with_capacity(targets.len());
    for &t in targets {
        if t == ignore_id {
            mapped.push(None);
        } else if (t as usize) < vocab {
            mapped.push(Some(t as usize));
        } else {
            return Err(NeuralError::ShapeMismatch(format!(
                "target {t} outside vocabulary {vocab}"
            )));
        }
    }
    let store = ParamStore::new();
    let mut g = Graph::new(&store);
    let x = g.variable(logits.clone());
    let loss = g.cross_entropy(x, &mapped).ok_or(NeuralError::EmptyBatch)?;
    let value = g.value(loss).data()[0];
    if !value.is_finite() {
        return Err(NeuralError::NonFinite);
    }
    let grads = g.backward(loss);
    Ok((value, grads.wrt(x).expect("logits need grad").clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&[0.0; 4]).unwrap(), vec![0.25; 4]);
        assert_eq!(softmax(&[1000.0, 1000.0]).unwrap(), vec![0.5, 0.5]);
        let p = softmax(&[2.0, 0.0]).unwrap();
        let e2 = 2f64.exp();
        assert!((p[0] - e2 / (e2 + 1.0)).abs() < 1e-6);
        assert!((p[0] - 0.8808).abs() < 1e-4 && (p[1] - 0.1192).abs() < 1e-4);
        assert_eq!(softmax(&[f64::NAN]), Err(NeuralError::NonFinite));
        assert_eq!(softmax(&[f64::INFINITY, 0.0]), Err(NeuralError::NonFinite));
    }

    #[test]
    fn attention_examples() {
        let q = Tensor::from_rows(&[vec![1.0, 0.0]]);
        let one = scaled_dot_product_attention(&q, &q, &Tensor::from_rows(&[vec![7.0]]), None).unwrap();
        assert_eq!(one.data(), &[7.0]);

        let q = Tensor::from_rows(&[vec![0.0, 1.0]]);
        let k = Tensor::from_rows(&[vec![1.0, 0.0], vec![-1.0, 0.0]]);
        let v = Tensor::from_rows(&[vec![2.0, 4.0], vec![6.0, 8.0]]);
        let mean = scaled_dot_product_attention(&q, &k, &v, None).unwrap();
        assert_eq!(mean.data(), &[4.0, 6.0]);

        let x = Tensor::from_rows(&[vec![0.3, -1.0], vec![2.0, 0.5], vec![-0.7, 1.1]]);
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let xn = g.input(x.clone());
        let scores = g.matmul_bt(xn, xn);
        let w = g.softmax(scores, Some(&AttnMask::causal(3)));
        assert_eq!(g.value(w).row(0), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn attention_shape_errors() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[2, 4]);
        assert!(matches!(
            scaled_dot_product_attention(&a, &b, &b, None),
            Err(NeuralError::ShapeMismatch(_))
        ));
        let mask = AttnMask::causal(3);
        assert!(scaled_dot_product_attention(&a, &a, &a, Some(&mask)).is_err());
    }

    #[test]
    fn cross_entropy_examples() {
        let uniform = Tensor::zeros(&[1, 4]);
        let (loss, _) = cross_entropy_loss(&uniform, &[1], 0).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-6);

        let logits = Tensor::from_rows(&[vec![2.0, 0.0]]);
        let (loss, grad) = cross_entropy_loss(&logits, &[0], 99).unwrap();
        let p0 = 2f64.exp() / (2f64.exp() + 1.0);
        assert!((loss + p0.ln()).abs() < 1e-6);
        assert!((loss - 0.1269).abs() < 1e-4);
        assert!((grad.data()[0] - (p0 - 1.0)).abs() < 1e-6);

        assert_eq!(
            cross_entropy_loss(&Tensor::zeros(&[2, 3]), &[0, 0], 0),
            Err(NeuralError::EmptyBatch)
        );
    }

    #[test]
    fn cross_entropy_gradient_matches_finite_differences() {
        let logits = Tensor::from_rows(&[vec![0.5, -1.0, 2.0], vec![0.1, 0.2, -0.3], vec![1.0, 1.0, 1.0]]);
        let targets = [2, 0, 1];
        let (_, grad) = cross_entropy_loss(&logits, &targets, 0).unwrap();
        let h = 1e-3f64;
        for j in 0..logits.len() {
            let mut plus = logits.clone();
            plus.data_mut()[j] += h;
            let mut minus = logits.clone();
            minus.data_mut()[j] -= h;
            let fd = (cross_entropy_loss(&plus, &targets, 0).unwrap().0
                - cross_entropy_loss(&minus, &targets, 0).unwrap().0)
                / (2.0 * h);
            // row 1 targets the ignored id and contributes nothing
            assert!(relative_error(grad.data()[j], fd) < 1e-2, "coord {j}");
        }
        assert!(grad.row(1).iter().all(|g| *g == 0.0));
    }

    proptest! {
        #[test]
        fn softmax_is_shift_invariant(xs in proptest::collection::vec(-20f64..20.0, 1..16), c in -50f64..50.0) {
            let a = softmax(&xs).unwrap();
            let shifted: Vec<f64> = xs.iter().map(|x| x + c).collect();
            let b = softmax(&shifted).unwrap();
            // the shifted logits are themselves rounded by up to half an ulp of 70
            let tol = 2.0 * 70f64 * f64::EPSILON;
            for (p, q) in a.iter().zip(&b) {
                prop_assert!((p - q).abs() <= tol);
            }
            prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            prop_assert!(a.iter().all(|p| *p >= 0.0));
        }

        #[test]
        fn attention_rows_sum_to_one(m in 1usize..5, n in 1usize..5, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut rand_t = |r: usize, c: usize| Tensor::new(vec![r, c], (0..r * c).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
            let q = rand_t(m, 3);
            let k = rand_t(n, 3);
            let store = ParamStore::new();
            let mut g = Graph::new(&store);
            let (qn, kn) = (g.input(q), g.input(k));
            let s = g.matmul_bt(qn, kn);
            let w = g.softmax(s, None);
            for r in 0..m {
                prop_assert!((g.value(w).row(r).iter().sum::<f64>() - 1.0).abs() < 1e-5);
            }
        }
    }
}
