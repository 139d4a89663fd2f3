//! Central finite-difference gradient checks.

use rand::Rng;
use rand_distr::StandardNormal;

use super::{Graph, MathError, NodeId, OpKind, Tensor};

/// Perturbation used for the central differences.
pub const FD_STEP: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    /// Max over coordinates of `|analytic - numeric| / max(1, |analytic|, |numeric|)`.
    pub max_rel_error: f64,
    /// `(parameter index, flat coordinate)` of the worst coordinate.
    pub worst: Option<(usize, usize)>,
    pub coords: usize,
}

/// Compares the graph gradient of the scalar built by `f` against central
/// differences, for every coordinate of every tensor in `params`.
pub fn grad_check<F>(params: &[Tensor], f: F) -> Result<GradCheck, MathError>
where
    F: Fn(&mut Graph, &[NodeId]) -> Result<NodeId, MathError>,
{
    grad_check_with_fault(params, None, f)
}

/// Same as [`grad_check`], with an optional deliberately broken backward rule.
pub fn grad_check_with_fault<F>(
    params: &[Tensor],
    fault: Option<OpKind>,
    f: F,
) -> Result<GradCheck, MathError>
where
    F: Fn(&mut Graph, &[NodeId]) -> Result<NodeId, MathError>,
{
    check_impl(params, fault, None, f)
}

/// Checks the vector-Jacobian product of a root of any shape: the scalar
/// under test is `⟨w, root⟩` with a fixed Gaussian `w` drawn from `seed`.
/// No graph op sits between the op under test and the probe, so a faulty
/// rule is attributed to exactly the op that has it.
pub fn vjp_check<F>(params: &[Tensor], seed: u64, fault: Option<OpKind>, f: F) -> Result<GradCheck, MathError>
where
    F: Fn(&mut Graph, &[NodeId]) -> Result<NodeId, MathError>,
{
    check_impl(params, fault, Some(seed), f)
}

fn check_impl<F>(params: &[Tensor], fault: Option<OpKind>, probe: Option<u64>, f: F) -> Result<GradCheck, MathError>
where
    F: Fn(&mut Graph, &[NodeId]) -> Result<NodeId, MathError>,
{
    let mut graph = Graph::new();
    if let Some(kind) = fault {
        graph.inject_fault(kind);
    }
    let ids: Vec<NodeId> = params.iter().map(|p| graph.param(p.clone())).collect();
    let root = f(&mut graph, &ids)?;
    let weights = match probe {
        Some(seed) => {
            let mut rng = crate::seed::rng(seed, "vjp-probe");
            let shape = graph.value(root).shape().to_vec();
            let n = shape.iter().product();
            Tensor::new(&shape, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())?
        }
        None => Tensor::scalar(1.0),
    };
    if probe.is_some() {
        graph.backward_with(root, weights.clone())?;
    } else {
        graph.backward(root)?;
    }
    let analytic: Vec<Tensor> = ids.iter().map(|&id| graph.grad(id).clone()).collect();

    let eval = |perturbed: &[Tensor]| -> Result<f64, MathError> {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = perturbed.iter().map(|p| g.param(p.clone())).collect();
        let root = f(&mut g, &ids)?;
        let out = g.value(root);
        Ok(out.data().iter().zip(weights.data()).map(|(a, w)| a * w).sum())
    };

    let mut work = params.to_vec();
    let mut report = GradCheck {
        max_rel_error: 0.0,
        worst: None,
        coords: 0,
    };
    for (pi, grad) in analytic.iter().enumerate() {
        for j in 0..grad.numel() {
            let orig = work[pi].data()[j];
            work[pi].data_mut()[j] = orig + FD_STEP;
            let plus = eval(&work)?;
            work[pi].data_mut()[j] = orig - FD_STEP;
            let minus = eval(&work)?;
            work[pi].data_mut()[j] = orig;

            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let a = grad.data()[j];
            let rel = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
            report.coords += 1;
            if rel >= report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some((pi, j));
            }
        }
    }
    Ok(report)
}

fn gaussian(rng: &mut impl Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()).expect("shape and length agree")
}

/// Gaussian values pushed at least `margin` away from zero, so ReLU kinks
/// stay outside the finite-difference stencil.
fn away_from_zero(rng: &mut impl Rng, shape: &[usize], margin: f64) -> Tensor {
    gaussian(rng, shape).map(|x| if x >= 0.0 { x + margin } else { x - margin })
}

type Builder<'a> = &'a dyn Fn(&mut Graph, &[NodeId]) -> Result<NodeId, MathError>;

/// Gradient check of a single op on random inputs drawn from `seed`.
pub fn check_op(kind: OpKind, seed: u64, fault: Option<OpKind>) -> Result<GradCheck, MathError> {
    let mut rng = crate::seed::rng_indexed(seed, kind.name(), 0);
    let r = &mut rng;
    let run = |params: Vec<Tensor>, f: Builder| {
        vjp_check(&params, seed, fault, f)
    };
    match kind {
        OpKind::Leaf => Err(MathError::Contract("leaves have no backward rule".into())),
        OpKind::Affine => run(vec![gaussian(r, &[3, 4]), gaussian(r, &[4, 5]), gaussian(r, &[5])], &|g, p| {
            g.affine(p[0], p[1], p[2])
        }),
        OpKind::Conv1d => run(vec![gaussian(r, &[5, 3]), gaussian(r, &[3, 3, 4]), gaussian(r, &[4])], &|g, p| {
            g.conv1d(p[0], p[1], p[2])
        }),
        OpKind::Relu => run(vec![away_from_zero(r, &[4, 3], 0.05)], &|g, p| g.relu(p[0])),
        OpKind::Concat => run(vec![gaussian(r, &[3, 2]), gaussian(r, &[3, 4])], &|g, p| g.concat(&[p[0], p[1]], 1)),
        OpKind::Stack => run(vec![gaussian(r, &[4]), gaussian(r, &[4]), gaussian(r, &[4])], &|g, p| {
            g.stack(&[p[0], p[1], p[2]])
        }),
        OpKind::RepeatRows => run(vec![gaussian(r, &[3])], &|g, p| g.repeat_rows(p[0], 4)),
        OpKind::MeanAxis => run(vec![gaussian(r, &[4, 3])], &|g, p| g.mean_axis(p[0], 0)),
        OpKind::L2Normalize => run(vec![gaussian(r, &[3, 4])], &|g, p| g.l2_normalize(p[0])),
        OpKind::Add => run(vec![gaussian(r, &[3, 4]), gaussian(r, &[3, 4])], &|g, p| g.add(p[0], p[1])),
        OpKind::Scale => run(vec![gaussian(r, &[3, 4]), gaussian(r, &[]).map(|x| 0.5 * x)], &|g, p| {
            g.scale(p[0], p[1])
        }),
        OpKind::MatMulNt => run(vec![gaussian(r, &[3, 4]), gaussian(r, &[5, 4])], &|g, p| g.matmul_nt(p[0], p[1])),
        OpKind::Sum => run(vec![gaussian(r, &[3, 4])], &|g, p| g.sum(p[0])),
        OpKind::CrossEntropy => {
            let targets: Vec<usize> = (0..4).map(|_| r.random_range(0..5)).collect();
            run(vec![gaussian(r, &[4, 5])], &move |g, p| g.cross_entropy(p[0], &targets))
        }
        OpKind::Mse => {
            let target = gaussian(r, &[3, 4]);
            run(vec![gaussian(r, &[3, 4])], &move |g, p| g.mse(p[0], target.clone()))
        }
    }
}
