use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Graph, NodeId, ParamStore, Tensor};

/// Central-difference step used by the gradient suite.
pub const FD_STEP: f64 = 1e-3;

/// Magnitude below which gradient errors are measured absolutely rather
/// than relative to the gradient itself.
pub const REL_ERR_FLOOR: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// Name of the worst coordinate, e.g. `input0[3]` or `enc.0.ff.inner.w[17]`.
    pub worst: String,
    pub checked: usize,
    /// Coordinates left out because the perturbation moved a ReLU input
    /// across zero, where the function has no derivative.
    pub skipped_kinks: usize,
}

impl GradCheck {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error <= tolerance
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR);
    (analytic - numeric).abs() / scale
}

/// Compares reverse-mode gradients of `forward` against central differences.
///
/// The scalar being differentiated is `sum_i w_i * y_i` over the forward
/// output `y`, with fixed pseudo-random weights `w` drawn from `seed`; the
/// analytic side seeds backpropagation with `w`. Every input tensor and every
/// parameter in `store` is perturbed coordinate by coordinate; coordinates
/// whose perturbation flips a ReLU are counted in `skipped_kinks` instead.
pub fn grad_check<F>(store: &ParamStore, inputs: &[Tensor], step: f64, seed: u64, forward: F) -> GradCheck
where
    F: Fn(&mut Graph, &[NodeId]) -> NodeId,
{
    let run = |store: &ParamStore, inputs: &[Tensor]| -> (Tensor, Vec<bool>) {
        let mut g = Graph::new(store);
        let ids: Vec<NodeId> = inputs.iter().map(|t| g.variable(t.clone())).collect();
        let out = forward(&mut g, &ids);
        (g.value(out).clone(), g.relu_pattern())
    };

    let (probe, _) = run(store, inputs);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights: Vec<f64> = (0..probe.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let objective = |(y, pattern): (Tensor, Vec<bool>)| -> (f64, Vec<bool>) {
        let value = y.data().iter().zip(&weights).map(|(a, w)| *a * *w).sum();
        (value, pattern)
    };

    // analytic
    let mut g = Graph::new(store);
    let ids: Vec<NodeId> = inputs.iter().map(|t| g.variable(t.clone())).collect();
    let out = forward(&mut g, &ids);
    let seed_grad = Tensor::new(g.value(out).shape().to_vec(), weights.clone()).expect("same shape");
    let grads = g.backward_with(out, seed_grad);
    let input_grads: Vec<Tensor> = ids
        .iter()
        .zip(inputs)
        .map(|(id, t)| grads.wrt(*id).cloned().unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect();
    let mut param_grads: Vec<Tensor> = store.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
    for (pid, grad) in g.param_grads(&grads) {
        param_grads[pid.index()] = grad;
    }

    let mut report = GradCheck {
        max_rel_error: 0.0,
        worst: String::new(),
        checked: 0,
        skipped_kinks: 0,
    };
    let mut record =
        |name: String, analytic: f64, (plus, p_hi): (f64, Vec<bool>), (minus, p_lo): (f64, Vec<bool>), width: f64| {
            if p_hi != p_lo {
                report.skipped_kinks += 1;
                return;
            }
            let numeric = (plus - minus) / width;
            let err = relative_error(analytic, numeric);
            report.checked += 1;
            if report.worst.is_empty() || err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = name;
            }
        };

    let mut perturbed = inputs.to_vec();
    for (i, t) in inputs.iter().enumerate() {
        for j in 0..t.len() {
            let orig = t.data()[j];
            let (hi, lo) = (orig + step, orig - step);
            perturbed[i].data_mut()[j] = hi;
            let plus = objective(run(store, &perturbed));
            perturbed[i].data_mut()[j] = lo;
            let minus = objective(run(store, &perturbed));
            perturbed[i].data_mut()[j] = orig;
            record(format!("input{i}[{j}]"), input_grads[i].data()[j], plus, minus, hi - lo);
        }
    }

    let mut params = store.clone();
    for pid in store.ids() {
        for j in 0..store.get(pid).len() {
            let orig = store.get(pid).data()[j];
            let (hi, lo) = (orig + step, orig - step);
            params.get_mut(pid).data_mut()[j] = hi;
            let plus = objective(run(&params, inputs));
            params.get_mut(pid).data_mut()[j] = lo;
            let minus = objective(run(&params, inputs));
            params.get_mut(pid).data_mut()[j] = orig;
            record(
                format!("{}[{j}]", store.name(pid)),
                param_grads[pid.index()].data()[j],
                plus,
                minus,
                hi - lo,
            );
        }
    }
    report
}
