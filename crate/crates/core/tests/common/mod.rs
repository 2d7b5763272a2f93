//! Shared instance builders for the integration suites.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use pcd_core::{
    CommGraph, IndefiniteQpTerm, PartitionLayout, PartitionedProblem, Regularizer, SmoothLocalTerm,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn uniform_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.gen_range(lo..=hi))
}

/// Random symmetric (generally indefinite) quadratic term per node over its
/// closed neighborhood, with optional uniform box constraints.
pub fn random_vector_problem(
    graph: &CommGraph,
    dims: &[usize],
    seed: u64,
    boxed: Option<(f64, f64)>,
) -> PartitionedProblem {
    let n = graph.num_nodes();
    assert_eq!(dims.len(), n);
    let layout = PartitionLayout::new(dims).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut terms: Vec<Box<dyn SmoothLocalTerm>> = Vec::new();
    let mut regs = Vec::new();
    for i in 0..n {
        let support = graph.neighbors(i).to_vec();
        let sdims: Vec<usize> = support.iter().map(|&j| dims[j]).collect();
        let m: usize = sdims.iter().sum();
        let b = DMatrix::from_fn(m, m, |_, _| rng.gen_range(-1.0..=1.0));
        let h = (&b + &b.transpose()) * 0.5;
        let r = uniform_vec(&mut rng, m, -5.0, 5.0);
        terms.push(Box::new(
            IndefiniteQpTerm::new(i, support, sdims, h, r).unwrap(),
        ));
        regs.push(match boxed {
            Some((lo, hi)) => Regularizer::bounded_box(
                DVector::from_element(dims[i], lo),
                DVector::from_element(dims[i], hi),
            )
            .unwrap(),
            None => Regularizer::Zero,
        });
    }
    PartitionedProblem::new(layout, graph.clone(), terms, regs).unwrap()
}

/// All-zero quadratic data: every model step is zero and the objective stays
/// zero, which isolates timer and scheduling behavior.
pub fn zero_problem(graph: &CommGraph) -> PartitionedProblem {
    let n = graph.num_nodes();
    let layout = PartitionLayout::new(&vec![1; n]).unwrap();
    let mut terms: Vec<Box<dyn SmoothLocalTerm>> = Vec::new();
    let mut regs = Vec::new();
    for i in 0..n {
        let support = graph.neighbors(i).to_vec();
        let m = support.len();
        terms.push(Box::new(
            IndefiniteQpTerm::new(
                i,
                support,
                vec![1; m],
                DMatrix::zeros(m, m),
                DVector::zeros(m),
            )
            .unwrap(),
        ));
        regs.push(Regularizer::Zero);
    }
    PartitionedProblem::new(layout, graph.clone(), terms, regs).unwrap()
}

/// Strictly convex decoupled problem: the graph has self-edges only, every
/// term is positive definite, and there are no constraints, so each block
/// has the closed-form minimizer of its own quadratic.
pub fn decoupled_convex_problem(dims: &[usize], seed: u64) -> PartitionedProblem {
    let n = dims.len();
    let graph = CommGraph::from_edges(n, &[]).unwrap();
    let layout = PartitionLayout::new(dims).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut terms: Vec<Box<dyn SmoothLocalTerm>> = Vec::new();
    let mut regs = Vec::new();
    for (i, &m) in dims.iter().enumerate() {
        let a = DMatrix::from_fn(m, m, |_, _| rng.gen_range(-1.0..=1.0));
        let h = a.transpose() * &a + DMatrix::identity(m, m);
        let r = uniform_vec(&mut rng, m, -5.0, 5.0);
        terms.push(Box::new(
            IndefiniteQpTerm::new(i, vec![i], vec![m], h, r).unwrap(),
        ));
        regs.push(Regularizer::Zero);
    }
    PartitionedProblem::new(layout, graph, terms, regs).unwrap()
}
