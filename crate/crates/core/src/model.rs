//! Per-block local model and its proximal minimization.
//!
//! At the current point the chosen block `i` minimizes the strongly convex
//! surrogate
//!
//! ```text
//! q_i(s) = grad' s + 0.5 s' Q_i s + g_i(x_i + s)
//! ```
//!
//! whose minimizer is the weighted proximal step
//!
//! ```text
//! x_i + d_i = prox_{Q_i^{-1}, g_i}(x_i - Q_i^{-1} grad),
//! prox_{W, phi}(v) = argmin_z  phi(z) + 0.5 |z - v|^2_{W^{-1}}.
//! ```
//!
//! With `Q_i` at least `L_i I` the true objective decreases by at least
//! `L_i/2 |d_i|^2` per step even for non-convex smooth parts. Strategies
//! that undershoot the Lipschitz constant (an aggressive scaled identity)
//! are allowed but lose that guarantee, so dominance is checked separately
//! by [`verify_weight_dominance`] and surfaced as a warning upstream.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::problem::{PartitionedProblem, Regularizer};

/// Stop tolerance on the step norm of the inner proximal-gradient loop.
pub const INNER_PROX_TOL: f64 = 1e-10;
/// Iteration cap of the inner proximal-gradient loop.
pub const INNER_PROX_MAX_ITERS: usize = 10_000;
/// Relative slack accepted by the dominance check.
pub const DOMINANCE_REL_TOL: f64 = 1e-12;
/// Substitute weight for blocks whose smooth part is constant (L_i = 0).
const ZERO_LIPSCHITZ_WEIGHT: f64 = 1e-12;

/// How the model curvature `Q_i` is chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightStrategy {
    /// `Q_i = L_i I`. Satisfies the descent condition by construction.
    LipschitzIdentity,
    /// `Q_i = (1/alpha) I` with a common `alpha > 0`. May violate the
    /// descent condition when `1/alpha < L_i`.
    ScaledIdentity { alpha: f64 },
    /// `Q_i = hess_ii + eps I` from analytic Hessian blocks. With
    /// `eps = None` a per-block default `max(0, L_i - lambda_min) + 1e-6`
    /// restores dominance.
    SecondOrder { eps: Option<f64> },
}

impl FromStr for WeightStrategy {
    type Err = Error;

    /// Parses `lipschitz`, `scaled_identity:alpha=<v>`, `second_order`, or
    /// `second_order:eps=<v>`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, args) = match s.split_once(':') {
            Some((n, a)) => (n.trim(), Some(a.trim())),
            None => (s.trim(), None),
        };
        let parse_kv = |args: &str, key: &str| -> Result<f64> {
            let (k, v) = args.split_once('=').ok_or_else(|| {
                Error::InvalidParameter(format!("expected {key}=<value> in \"{args}\""))
            })?;
            if k.trim() != key {
                return Err(Error::InvalidParameter(format!(
                    "unknown parameter \"{}\" (expected \"{key}\")",
                    k.trim()
                )));
            }
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidParameter(format!("bad numeric value \"{}\"", v.trim())))
        };
        match (name, args) {
            ("lipschitz", None) => Ok(Self::LipschitzIdentity),
            ("scaled_identity", Some(a)) => {
                let alpha = parse_kv(a, "alpha")?;
                if !(alpha > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "alpha must be positive, got {alpha}"
                    )));
                }
                Ok(Self::ScaledIdentity { alpha })
            }
            ("second_order", None) => Ok(Self::SecondOrder { eps: None }),
            ("second_order", Some(a)) => {
                let eps = parse_kv(a, "eps")?;
                if !(eps >= 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "eps must be nonnegative, got {eps}"
                    )));
                }
                Ok(Self::SecondOrder { eps: Some(eps) })
            }
            _ => Err(Error::InvalidParameter(format!(
                "unknown weight strategy \"{s}\""
            ))),
        }
    }
}

impl fmt::Display for WeightStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::LipschitzIdentity => write!(f, "lipschitz"),
            Self::ScaledIdentity { alpha } => write!(f, "scaled_identity:alpha={alpha}"),
            Self::SecondOrder { eps: None } => write!(f, "second_order"),
            Self::SecondOrder { eps: Some(e) } => write!(f, "second_order:eps={e}"),
        }
    }
}

/// Concrete symmetric positive definite model curvature for one block.
#[derive(Debug, Clone)]
pub enum BlockWeight {
    /// `q * I`.
    Scalar(f64),
    Dense(DMatrix<f64>),
}

impl BlockWeight {
    pub fn min_eigenvalue(&self) -> f64 {
        match self {
            Self::Scalar(q) => *q,
            Self::Dense(m) => linalg::min_eigenvalue(m),
        }
    }

    pub fn max_eigenvalue(&self) -> f64 {
        match self {
            Self::Scalar(q) => *q,
            Self::Dense(m) => linalg::max_eigenvalue(m),
        }
    }

    pub fn is_diagonal(&self) -> bool {
        match self {
            Self::Scalar(_) => true,
            Self::Dense(m) => linalg::is_diagonal(m),
        }
    }

    /// `Q v`.
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            Self::Scalar(q) => v * *q,
            Self::Dense(m) => m * v,
        }
    }

    /// `Q^{-1} v`. Fails when the weight is not positive definite.
    pub fn solve(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        match self {
            Self::Scalar(q) => {
                if !(*q > 0.0) {
                    return Err(Error::NotPositiveDefinite);
                }
                Ok(v / *q)
            }
            Self::Dense(m) => {
                let chol = Cholesky::new(m.clone()).ok_or(Error::NotPositiveDefinite)?;
                Ok(chol.solve(v))
            }
        }
    }

    /// `v' Q v`.
    pub fn quadratic_form(&self, v: &DVector<f64>) -> f64 {
        match self {
            Self::Scalar(q) => q * v.norm_squared(),
            Self::Dense(m) => v.dot(&(m * v)),
        }
    }
}

/// Builds `Q_i` at the current point according to the strategy.
pub fn block_weight(
    problem: &PartitionedProblem,
    x: &DVector<f64>,
    i: usize,
    strategy: &WeightStrategy,
) -> Result<BlockWeight> {
    if i >= problem.num_nodes() {
        return Err(Error::BlockIndex {
            index: i,
            count: problem.num_nodes(),
        });
    }
    match strategy {
        WeightStrategy::LipschitzIdentity => {
            let l = problem.block_lipschitz(i);
            // A block whose smooth part is constant has L_i = 0; any positive
            // weight yields the same prox target there.
            Ok(BlockWeight::Scalar(if l > 0.0 { l } else { ZERO_LIPSCHITZ_WEIGHT }))
        }
        WeightStrategy::ScaledIdentity { alpha } => {
            if !(*alpha > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "alpha must be positive, got {alpha}"
                )));
            }
            Ok(BlockWeight::Scalar(1.0 / alpha))
        }
        WeightStrategy::SecondOrder { eps } => {
            let dim = problem.layout().block_dim(i);
            let mut hess = DMatrix::zeros(dim, dim);
            for &j in problem.graph().neighbors(i) {
                let block = problem.term(j).hessian_block(i).ok_or_else(|| {
                    Error::InvalidParameter(format!(
                        "second-order weights need analytic Hessian blocks, term {j} has none"
                    ))
                })?;
                if block.nrows() != dim || block.ncols() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: block.nrows().max(block.ncols()),
                    });
                }
                hess += block;
            }
            let eps = match eps {
                Some(e) if *e >= 0.0 => *e,
                Some(e) => {
                    return Err(Error::InvalidParameter(format!(
                        "eps must be nonnegative, got {e}"
                    )))
                }
                None => {
                    let lambda_min = linalg::min_eigenvalue(&hess);
                    (problem.block_lipschitz(i) - lambda_min).max(0.0) + 1e-6
                }
            };
            for k in 0..dim {
                hess[(k, k)] += eps;
            }
            let _ = x; // curvature of quadratic terms is point-independent
            Ok(BlockWeight::Dense(hess))
        }
    }
}

/// Checks `Q_i >= L_i I` up to a small relative slack.
pub fn verify_weight_dominance(weight: &BlockWeight, block_lipschitz: f64) -> bool {
    let slack = DOMINANCE_REL_TOL * block_lipschitz.abs().max(1.0);
    weight.min_eigenvalue() + slack >= block_lipschitz
}

/// `argmin_z  g(z) + 0.5 |z - v|^2_M` for a positive definite metric `M`.
///
/// This is [`weighted_prox`] reparameterized by the metric `M = W^{-1}`; the
/// descent step calls it with `M = Q_i` directly so that no inversion is
/// needed. Diagonal metrics with box or zero regularizers reduce to a
/// componentwise clamp (weight-independent); a dense metric with a box runs
/// a projected-gradient inner loop to tolerance [`INNER_PROX_TOL`].
pub fn prox_in_metric(
    metric: &BlockWeight,
    g: &Regularizer,
    v: &DVector<f64>,
) -> Result<DVector<f64>> {
    if !(metric.min_eigenvalue() > 0.0) {
        return Err(Error::NotPositiveDefinite);
    }
    match g {
        Regularizer::Zero => Ok(v.clone()),
        Regularizer::Box { .. } => {
            if metric.is_diagonal() {
                return Ok(g.project(v));
            }
            let m = match metric {
                BlockWeight::Dense(m) => m,
                BlockWeight::Scalar(_) => unreachable!("scalar metrics are diagonal"),
            };
            // Projected gradient on 0.5 (z-v)' M (z-v) with step 1/lambda_max.
            let step = 1.0 / linalg::max_eigenvalue(m);
            let mut z = g.project(v);
            let mut delta = f64::INFINITY;
            for _ in 0..INNER_PROX_MAX_ITERS {
                let grad = m * (&z - v);
                let next = g.project(&(&z - grad * step));
                delta = (&next - &z).norm();
                z = next;
                if delta <= INNER_PROX_TOL {
                    return Ok(z);
                }
            }
            Err(Error::ToleranceNotMet {
                achieved: delta,
                required: INNER_PROX_TOL,
            })
        }
    }
}

/// Weighted proximal operator `prox_{W, g}(v) = argmin_z g(z) + 0.5 |z - v|^2_{W^{-1}}`
/// for symmetric positive definite `W`.
pub fn weighted_prox(w: &DMatrix<f64>, g: &Regularizer, v: &DVector<f64>) -> Result<DVector<f64>> {
    if w.nrows() != w.ncols() || w.nrows() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: v.len(),
            got: w.nrows().max(w.ncols()),
        });
    }
    let scale = w.iter().fold(1.0f64, |acc, x| acc.max(x.abs()));
    if linalg::symmetry_error(w) > 1e-12 * scale {
        return Err(Error::InvalidParameter("prox weight must be symmetric".into()));
    }
    if linalg::is_diagonal(w) {
        if (0..w.nrows()).any(|k| !(w[(k, k)] > 0.0)) {
            return Err(Error::NotPositiveDefinite);
        }
        // The minimizer of a separable positive-weighted square over a box
        // does not depend on the weights.
        return prox_in_metric(&BlockWeight::Scalar(1.0), g, v);
    }
    let chol = Cholesky::new(w.clone()).ok_or(Error::NotPositiveDefinite)?;
    prox_in_metric(&BlockWeight::Dense(chol.inverse()), g, v)
}

/// Minimizes the local model of block `i` at `x`.
///
/// Returns the step `d_i` and the model decrease `q_i(0) - q_i(d_i) >= 0`.
/// The new block value is the prox target `x_i + d_i`; callers should assign
/// the target rather than re-adding `d_i` so that centralized and simulated
/// executions stay bit-identical.
pub fn descent_direction(
    problem: &PartitionedProblem,
    x: &DVector<f64>,
    i: usize,
    strategy: &WeightStrategy,
) -> Result<(DVector<f64>, f64)> {
    let grad = problem.partial_grad_f(x, i)?;
    let q = block_weight(problem, x, i, strategy)?;
    let xi = problem.layout().extract_block(x, i)?;
    let v = &xi - q.solve(&grad)?;
    let target = prox_in_metric(&q, problem.regularizer(i), &v)?;
    let d = &target - &xi;
    let reg = problem.regularizer(i);
    let model_decrease =
        -(grad.dot(&d) + 0.5 * q.quadratic_form(&d) + reg.value(&target) - reg.value(&xi));
    Ok((d, model_decrease))
}

/// Prox target of block `i` at `x`, the value the block moves to.
pub fn prox_target(
    problem: &PartitionedProblem,
    x: &DVector<f64>,
    i: usize,
    strategy: &WeightStrategy,
) -> Result<DVector<f64>> {
    let grad = problem.partial_grad_f(x, i)?;
    let q = block_weight(problem, x, i, strategy)?;
    let xi = problem.layout().extract_block(x, i)?;
    let v = &xi - q.solve(&grad)?;
    prox_in_metric(&q, problem.regularizer(i), &v)
}

/// First-order-condition residual of the solved block subproblem.
///
/// The subproblem minimizer `z = x_i + d` must be a fixed point of the
/// projected gradient map of `q_i` for any step size, so the residual
/// `|z - proj(z - gamma (grad + Q d))|` with `gamma = 1/lambda_max(Q)` is an
/// algebraic optimality check that does not reuse the prox computation that
/// produced `d`.
pub fn fnc_residual(
    problem: &PartitionedProblem,
    x: &DVector<f64>,
    i: usize,
    strategy: &WeightStrategy,
    d: &DVector<f64>,
) -> Result<f64> {
    let grad = problem.partial_grad_f(x, i)?;
    let q = block_weight(problem, x, i, strategy)?;
    let xi = problem.layout().extract_block(x, i)?;
    let z = &xi + d;
    let gamma = 1.0 / q.max_eigenvalue();
    let inner = &z - (grad + q.apply(d)) * gamma;
    let mapped = problem.regularizer(i).project(&inner);
    Ok((&z - mapped).norm())
}

/// `max_i |d_i(x)|` under the given strategy. Zero exactly at points that
/// are first-order stationary for the composite objective.
pub fn stationarity_residual(
    problem: &PartitionedProblem,
    x: &DVector<f64>,
    strategy: &WeightStrategy,
) -> Result<f64> {
    let mut worst = 0.0f64;
    for i in 0..problem.num_nodes() {
        let (d, _) = descent_direction(problem, x, i, strategy)?;
        worst = worst.max(d.norm());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::CommGraph;
    use crate::partition::PartitionLayout;
    use crate::problem::{IndefiniteQpTerm, SmoothLocalTerm};

    fn v(data: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(data)
    }

    /// One node, self-edge only, f(x) = h x^2 + r x on a box.
    fn single_node(h: f64, r: f64, lo: f64, hi: f64) -> PartitionedProblem {
        let graph = CommGraph::from_edges(1, &[]).unwrap();
        let term = IndefiniteQpTerm::new(
            0,
            vec![0],
            vec![1],
            DMatrix::from_row_slice(1, 1, &[h]),
            v(&[r]),
        )
        .unwrap();
        PartitionedProblem::new(
            PartitionLayout::scalar_blocks(1).unwrap(),
            graph,
            vec![Box::new(term)],
            vec![Regularizer::scalar_box(lo, hi).unwrap()],
        )
        .unwrap()
    }

    #[test]
    fn strategy_strings_roundtrip() {
        for s in [
            "lipschitz",
            "scaled_identity:alpha=0.01",
            "second_order",
            "second_order:eps=0.000001",
        ] {
            let parsed: WeightStrategy = s.parse().unwrap();
            let shown = parsed.to_string();
            let reparsed: WeightStrategy = shown.parse().unwrap();
            assert_eq!(parsed, reparsed);
        }
        assert!("scaled_identity".parse::<WeightStrategy>().is_err());
        assert!("scaled_identity:alpha=0".parse::<WeightStrategy>().is_err());
        assert!("scaled_identity:alpha=-3".parse::<WeightStrategy>().is_err());
        assert!("newton".parse::<WeightStrategy>().is_err());
        assert!("second_order:eps=-1".parse::<WeightStrategy>().is_err());
    }

    #[test]
    fn prox_with_zero_regularizer_is_identity() {
        let w = DMatrix::identity(3, 3);
        let point = v(&[1.0, -2.0, 0.5]);
        let out = weighted_prox(&w, &Regularizer::Zero, &point).unwrap();
        assert_eq!(out, point);
    }

    #[test]
    fn diagonal_prox_on_box_is_clamp_and_weight_independent() {
        let g = Regularizer::bounded_box(v(&[0.0, 0.0]), v(&[1.0, 1.0])).unwrap();
        let point = v(&[-1.0, 0.5]);
        let w1 = DMatrix::from_diagonal(&v(&[1.0, 4.0]));
        let w2 = DMatrix::from_diagonal(&v(&[0.03, 17.0]));
        let out1 = weighted_prox(&w1, &g, &point).unwrap();
        let out2 = weighted_prox(&w2, &g, &point).unwrap();
        assert_eq!(out1, v(&[0.0, 0.5]));
        assert_eq!(out1, out2);
    }

    #[test]
    fn scalar_box_prox_clamps() {
        let g = Regularizer::scalar_box(-30.0, 20.0).unwrap();
        let w = DMatrix::from_row_slice(1, 1, &[2.0]);
        assert_eq!(weighted_prox(&w, &g, &v(&[25.0])).unwrap(), v(&[20.0]));
        assert_eq!(weighted_prox(&w, &g, &v(&[-31.0])).unwrap(), v(&[-30.0]));
        assert_eq!(weighted_prox(&w, &g, &v(&[3.0])).unwrap(), v(&[3.0]));
    }

    #[test]
    fn indefinite_weight_rejected() {
        let g = Regularizer::scalar_box(-1.0, 1.0).unwrap();
        let w = DMatrix::from_row_slice(1, 1, &[-2.0]);
        assert!(matches!(
            weighted_prox(&w, &g, &v(&[0.0])),
            Err(Error::NotPositiveDefinite)
        ));
        let w2 = DMatrix::from_row_slice(2, 2, &[1.0, 3.0, 3.0, 1.0]);
        let g2 = Regularizer::bounded_box(v(&[-1.0, -1.0]), v(&[1.0, 1.0])).unwrap();
        assert!(matches!(
            weighted_prox(&w2, &g2, &v(&[0.0, 0.0])),
            Err(Error::NotPositiveDefinite)
        ));
    }

    #[test]
    fn dense_metric_prox_agrees_with_kkt() {
        // Minimize 0.5 (z-v)' M (z-v) over the box, M dense SPD.
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let g = Regularizer::bounded_box(v(&[-1.0, -1.0]), v(&[1.0, 1.0])).unwrap();
        let point = v(&[2.0, 0.2]);
        let z = prox_in_metric(&BlockWeight::Dense(m.clone()), &g, &point).unwrap();
        // KKT: components strictly inside the box need zero gradient, clipped
        // components need the gradient pushing outward.
        let grad = &m * (&z - &point);
        for k in 0..2 {
            if z[k] < 1.0 - 1e-9 && z[k] > -1.0 + 1e-9 {
                assert!(grad[k].abs() <= 1e-8, "interior component {k} grad {}", grad[k]);
            } else if (z[k] - 1.0).abs() <= 1e-9 {
                assert!(grad[k] <= 1e-8);
            } else {
                assert!(grad[k] >= -1e-8);
            }
        }
    }

    #[test]
    fn dense_weight_matches_diagonal_limit() {
        // A dense W that is numerically diagonal must agree with the clamp.
        let w = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 5.0]);
        let g = Regularizer::bounded_box(v(&[0.0, 0.0]), v(&[1.0, 1.0])).unwrap();
        let out = weighted_prox(&w, &g, &v(&[9.0, -9.0])).unwrap();
        assert_eq!(out, v(&[1.0, 0.0]));
    }

    #[test]
    fn descent_direction_on_convex_scalar_example() {
        // f = x^2, gradient 10 at x = 5, Q = L = 2: clamp(5 - 10/2) = 0.
        let p = single_node(1.0, 0.0, -30.0, 20.0);
        let x = v(&[5.0]);
        let (d, decrease) = descent_direction(&p, &x, 0, &WeightStrategy::LipschitzIdentity).unwrap();
        assert_eq!(d, v(&[-5.0]));
        // q(0) - q(d) = -(10*(-5) + 0.5*2*25) = 25
        assert_eq!(decrease, 25.0);
        assert!(fnc_residual(&p, &x, 0, &WeightStrategy::LipschitzIdentity, &d).unwrap() <= 1e-12);
    }

    #[test]
    fn descent_direction_on_nonconvex_scalar_example() {
        // f = -x^2 at x = 1: gradient -2, L = 2, step to clamp(1 + 1) = 2.
        let p = single_node(-1.0, 0.0, -30.0, 20.0);
        let x = v(&[1.0]);
        let (d, _) = descent_direction(&p, &x, 0, &WeightStrategy::LipschitzIdentity).unwrap();
        assert_eq!(d, v(&[1.0]));
        // Direct objective evaluation: V(2) = -4 <= V(1) - (L/2) d^2 = -2.
        let v_before = p.aggregate_value(&x).unwrap();
        let v_after = p.aggregate_value(&v(&[2.0])).unwrap();
        assert!(v_after <= v_before - 0.5 * p.block_lipschitz(0) * d.norm_squared());
    }

    #[test]
    fn step_respects_box_boundary() {
        // Steep descent pushed against the upper bound.
        let p = single_node(-1.0, 0.0, -30.0, 20.0);
        let x = v(&[15.0]);
        let (d, _) = descent_direction(&p, &x, 0, &WeightStrategy::LipschitzIdentity).unwrap();
        // v = 15 + 30/2 = 30 -> clamp at 20.
        assert_eq!(d, v(&[5.0]));
    }

    #[test]
    fn stationary_point_has_zero_direction() {
        // f = x^2 - 4x has its unconstrained minimum at 2, inside the box.
        let p = single_node(1.0, -4.0, -30.0, 20.0);
        let x = v(&[2.0]);
        let (d, decrease) = descent_direction(&p, &x, 0, &WeightStrategy::LipschitzIdentity).unwrap();
        assert_eq!(d, v(&[0.0]));
        assert_eq!(decrease, 0.0);
        assert_eq!(
            stationarity_residual(&p, &x, &WeightStrategy::LipschitzIdentity).unwrap(),
            0.0
        );
    }

    #[test]
    fn boundary_stationary_point_detected() {
        // Gradient pushes up but the box stops at 20.
        let p = single_node(-1.0, 0.0, -30.0, 20.0);
        let x = v(&[20.0]);
        assert_eq!(
            stationarity_residual(&p, &x, &WeightStrategy::LipschitzIdentity).unwrap(),
            0.0
        );
    }

    #[test]
    fn dominance_check_on_diagonal_weights() {
        // Q = diag(5, 3) dominates L = 3 but not L = 4.
        let q = BlockWeight::Dense(DMatrix::from_diagonal(&v(&[5.0, 3.0])));
        assert!(verify_weight_dominance(&q, 3.0));
        assert!(!verify_weight_dominance(&q, 4.0));
        assert!(verify_weight_dominance(&BlockWeight::Scalar(2.0), 2.0));
    }

    #[test]
    fn lipschitz_weight_matches_block_constant() {
        let p = single_node(1.0, 0.0, -1.0, 1.0);
        let q = block_weight(&p, &v(&[0.0]), 0, &WeightStrategy::LipschitzIdentity).unwrap();
        match q {
            BlockWeight::Scalar(l) => assert_eq!(l, 2.0),
            _ => panic!("expected scalar weight"),
        }
    }

    #[test]
    fn scaled_identity_weight_is_inverse_alpha() {
        let p = single_node(1.0, 0.0, -1.0, 1.0);
        let q = block_weight(&p, &v(&[0.0]), 0, &WeightStrategy::ScaledIdentity { alpha: 0.01 }).unwrap();
        match q {
            BlockWeight::Scalar(w) => assert_eq!(w, 100.0),
            _ => panic!("expected scalar weight"),
        }
    }

    #[test]
    fn second_order_default_eps_restores_dominance() {
        // Indefinite curvature: hessian = -2, L = 2, default eps = L - (-2) + 1e-6.
        let p = single_node(-1.0, 0.0, -1.0, 1.0);
        let q = block_weight(&p, &v(&[0.0]), 0, &WeightStrategy::SecondOrder { eps: None }).unwrap();
        assert!(verify_weight_dominance(&q, p.block_lipschitz(0)));
        match q {
            BlockWeight::Dense(m) => assert!((m[(0, 0)] - (2.0 + 1e-6)).abs() < 1e-12),
            _ => panic!("expected dense weight"),
        }
    }

    #[test]
    fn zero_smooth_part_still_steps_into_box() {
        // Constant smooth part, infeasible x: the step is the projection.
        let graph = CommGraph::from_edges(1, &[]).unwrap();
        let term = IndefiniteQpTerm::new(
            0,
            vec![0],
            vec![1],
            DMatrix::from_row_slice(1, 1, &[0.0]),
            v(&[0.0]),
        )
        .unwrap();
        let p = PartitionedProblem::new(
            PartitionLayout::scalar_blocks(1).unwrap(),
            graph,
            vec![Box::new(term)],
            vec![Regularizer::scalar_box(-1.0, 1.0).unwrap()],
        )
        .unwrap();
        assert_eq!(p.block_lipschitz(0), 0.0);
        let (d, _) = descent_direction(&p, &v(&[0.25]), 0, &WeightStrategy::LipschitzIdentity).unwrap();
        assert_eq!(d, v(&[0.0]));
    }

    #[test]
    fn second_order_unavailable_without_hessian() {
        struct NoHess;
        impl SmoothLocalTerm for NoHess {
            fn owner(&self) -> usize {
                0
            }
            fn support(&self) -> &[usize] {
                &[0]
            }
            fn input_dim(&self) -> usize {
                1
            }
            fn value(&self, x: &DVector<f64>) -> f64 {
                x[0].powi(4)
            }
            fn partial_gradient(&self, x: &DVector<f64>, _block: usize) -> DVector<f64> {
                DVector::from_element(1, 4.0 * x[0].powi(3))
            }
            fn block_constant(&self, _block: usize) -> f64 {
                48.0 // valid on |x| <= 2
            }
            fn hessian_block(&self, _block: usize) -> Option<DMatrix<f64>> {
                None
            }
        }
        let graph = CommGraph::from_edges(1, &[]).unwrap();
        let p = PartitionedProblem::new(
            PartitionLayout::scalar_blocks(1).unwrap(),
            graph,
            vec![Box::new(NoHess)],
            vec![Regularizer::scalar_box(-2.0, 2.0).unwrap()],
        )
        .unwrap();
        let err = block_weight(&p, &v(&[1.0]), 0, &WeightStrategy::SecondOrder { eps: None });
        assert!(err.is_err());
        // The Lipschitz strategy still works for the non-quadratic term.
        let (d, _) = descent_direction(&p, &v(&[1.0]), 0, &WeightStrategy::LipschitzIdentity).unwrap();
        assert!(d[0] < 0.0);
    }
}
