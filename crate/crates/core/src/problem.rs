//! Problem data: smooth local terms, convex per-block regularizers, and the
//! aggregate partitioned objective
//!
//! ```text
//! V(x) = sum_i f_i(x_{N_i}) + g_i(x_i)
//! ```
//!
//! Each term `f_i` is owned by node `i` and reads only the blocks in the
//! closed neighborhood `N_i`. Terms may be non-convex; regularizers must be
//! proper closed convex. The partial gradient of the full smooth part with
//! respect to block `i` sums contributions from every term whose owner
//! neighbors `i`, and its block Lipschitz constant is the matching sum of
//! per-term constants
//!
//! ```text
//! L_i = sum_{j in N_i} L_{ji}
//! ```
//!
//! where `L_{ji}` bounds how fast the gradient of term `j` with respect to
//! block `i` can change when only block `i` moves.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::CommGraph;
use crate::linalg;
use crate::partition::PartitionLayout;

/// A smooth function of the blocks in one node's closed neighborhood.
///
/// Inputs arrive as the stacked neighborhood vector in ascending block
/// order, matching [`PartitionedProblem::gather_neighborhood`].
pub trait SmoothLocalTerm: Send + Sync {
    /// Owning node. The term contributes `f_owner` to the objective.
    fn owner(&self) -> usize;

    /// Blocks this term reads, sorted ascending, always containing the owner.
    fn support(&self) -> &[usize];

    /// Length of the stacked neighborhood input vector.
    fn input_dim(&self) -> usize;

    fn value(&self, x_nbhd: &DVector<f64>) -> f64;

    /// Gradient with respect to one supported block, evaluated at the
    /// stacked neighborhood point. Panics if `block` is not in the support.
    fn partial_gradient(&self, x_nbhd: &DVector<f64>, block: usize) -> DVector<f64>;

    /// Lipschitz constant of `partial_gradient(. , block)` under changes of
    /// that same block only.
    fn block_constant(&self, block: usize) -> f64;

    /// Diagonal Hessian block with respect to `block`, if available in
    /// closed form. `None` disables curvature-based step weights.
    fn hessian_block(&self, block: usize) -> Option<DMatrix<f64>>;
}

/// Quadratic local term `f_i(z) = z' H z + r' z` on the stacked neighborhood
/// vector `z = x_{N_i}`. `H` is symmetric but deliberately allowed to be
/// indefinite, so `f_i` is non-convex in general. The gradient is
/// `2 H z + r` and the per-block constants are `L_{ij} = 2 |H_jj|_2` with
/// `H_jj` the diagonal sub-block of the paired block.
#[derive(Debug, Clone)]
pub struct IndefiniteQpTerm {
    owner: usize,
    support: Vec<usize>,
    block_dims: Vec<usize>,
    slot_offsets: Vec<usize>,
    h: DMatrix<f64>,
    r: DVector<f64>,
    constants: Vec<f64>,
}

impl IndefiniteQpTerm {
    pub fn new(
        owner: usize,
        support: Vec<usize>,
        block_dims: Vec<usize>,
        h: DMatrix<f64>,
        r: DVector<f64>,
    ) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::InvalidParameter("term support is empty".into()));
        }
        if !support.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidParameter(
                "term support must be sorted strictly ascending".into(),
            ));
        }
        if support.binary_search(&owner).is_err() {
            return Err(Error::InvalidParameter(format!(
                "term owner {owner} missing from its own support"
            )));
        }
        if block_dims.len() != support.len() || block_dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidParameter(
                "term block dimensions must match the support and be positive".into(),
            ));
        }
        let dim: usize = block_dims.iter().sum();
        if h.nrows() != dim || h.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: h.nrows().max(h.ncols()),
            });
        }
        if r.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: r.len(),
            });
        }
        let scale = h.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
        if linalg::symmetry_error(&h) > 1e-12 * scale {
            return Err(Error::InvalidParameter(
                "quadratic term matrix must be symmetric".into(),
            ));
        }
        // Exact for already-symmetric input, repairs last-ulp asymmetry.
        let h = (&h + h.transpose()) * 0.5;

        let mut slot_offsets = Vec::with_capacity(support.len());
        let mut pos = 0usize;
        for &d in &block_dims {
            slot_offsets.push(pos);
            pos += d;
        }
        let constants = (0..support.len())
            .map(|s| {
                let sub = h.view((slot_offsets[s], slot_offsets[s]), (block_dims[s], block_dims[s]));
                2.0 * linalg::spectral_norm_sym(&sub.into_owned())
            })
            .collect();
        Ok(Self {
            owner,
            support,
            block_dims,
            slot_offsets,
            h,
            r,
            constants,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn linear(&self) -> &DVector<f64> {
        &self.r
    }

    fn slot(&self, block: usize) -> usize {
        self.support
            .binary_search(&block)
            .unwrap_or_else(|_| panic!("term {} does not depend on block {block}", self.owner))
    }
}

impl SmoothLocalTerm for IndefiniteQpTerm {
    fn owner(&self) -> usize {
        self.owner
    }

    fn support(&self) -> &[usize] {
        &self.support
    }

    fn input_dim(&self) -> usize {
        self.h.nrows()
    }

    fn value(&self, x_nbhd: &DVector<f64>) -> f64 {
        x_nbhd.dot(&(&self.h * x_nbhd)) + self.r.dot(x_nbhd)
    }

    fn partial_gradient(&self, x_nbhd: &DVector<f64>, block: usize) -> DVector<f64> {
        let s = self.slot(block);
        let full = (&self.h * x_nbhd) * 2.0 + &self.r;
        full.rows(self.slot_offsets[s], self.block_dims[s]).into_owned()
    }

    fn block_constant(&self, block: usize) -> f64 {
        self.constants[self.slot(block)]
    }

    fn hessian_block(&self, block: usize) -> Option<DMatrix<f64>> {
        let s = self.slot(block);
        let sub = self
            .h
            .view((self.slot_offsets[s], self.slot_offsets[s]), (self.block_dims[s], self.block_dims[s]));
        Some(sub.into_owned() * 2.0)
    }
}

/// Proper closed convex per-block regularizer. Extended-real valued: box
/// indicators return `+inf` outside their box and never produce NaN.
#[derive(Debug, Clone, PartialEq)]
pub enum Regularizer {
    Zero,
    Box {
        lower: DVector<f64>,
        upper: DVector<f64>,
    },
}

impl Regularizer {
    pub fn bounded_box(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        for k in 0..lower.len() {
            if !(lower[k] <= upper[k]) {
                return Err(Error::InvalidParameter(format!(
                    "box bounds must satisfy lower <= upper, got [{}, {}] in component {k}",
                    lower[k], upper[k]
                )));
            }
        }
        Ok(Self::Box { lower, upper })
    }

    pub fn scalar_box(lo: f64, hi: f64) -> Result<Self> {
        Self::bounded_box(DVector::from_element(1, lo), DVector::from_element(1, hi))
    }

    pub fn value(&self, v: &DVector<f64>) -> f64 {
        match self {
            Regularizer::Zero => 0.0,
            Regularizer::Box { lower, upper } => {
                for k in 0..v.len() {
                    if v[k] < lower[k] || v[k] > upper[k] {
                        return f64::INFINITY;
                    }
                }
                0.0
            }
        }
    }

    pub fn is_feasible(&self, v: &DVector<f64>) -> bool {
        self.value(v) == 0.0
    }

    /// Euclidean projection; the identity for [`Regularizer::Zero`].
    pub fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            Regularizer::Zero => v.clone(),
            Regularizer::Box { lower, upper } => {
                DVector::from_fn(v.len(), |k, _| v[k].clamp(lower[k], upper[k]))
            }
        }
    }
}

/// The aggregate objective over all nodes of the communication graph.
///
/// Validated so that term `i` reads exactly the closed neighborhood of node
/// `i` and every dimension lines up. Shared read-only across threads.
pub struct PartitionedProblem {
    layout: PartitionLayout,
    graph: CommGraph,
    terms: Vec<Box<dyn SmoothLocalTerm>>,
    regularizers: Vec<Regularizer>,
    lipschitz: Vec<f64>,
}

impl PartitionedProblem {
    pub fn new(
        layout: PartitionLayout,
        graph: CommGraph,
        terms: Vec<Box<dyn SmoothLocalTerm>>,
        regularizers: Vec<Regularizer>,
    ) -> Result<Self> {
        let n = graph.num_nodes();
        if layout.num_blocks() != n {
            return Err(Error::InvalidParameter(format!(
                "layout has {} blocks but the graph has {n} nodes",
                layout.num_blocks()
            )));
        }
        if terms.len() != n || regularizers.len() != n {
            return Err(Error::InvalidParameter(format!(
                "expected {n} terms and regularizers, got {} and {}",
                terms.len(),
                regularizers.len()
            )));
        }
        for (i, term) in terms.iter().enumerate() {
            if term.owner() != i {
                return Err(Error::InvalidParameter(format!(
                    "term at position {i} claims owner {}",
                    term.owner()
                )));
            }
            if term.support() != graph.neighbors(i) {
                return Err(Error::InvalidParameter(format!(
                    "term {i} support {:?} does not match neighborhood {:?}",
                    term.support(),
                    graph.neighbors(i)
                )));
            }
            let dim: usize = graph.neighbors(i).iter().map(|&j| layout.block_dim(j)).sum();
            if term.input_dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: term.input_dim(),
                });
            }
        }
        for (i, reg) in regularizers.iter().enumerate() {
            if let Regularizer::Box { lower, .. } = reg {
                if lower.len() != layout.block_dim(i) {
                    return Err(Error::DimensionMismatch {
                        expected: layout.block_dim(i),
                        got: lower.len(),
                    });
                }
            }
        }
        let lipschitz = (0..n)
            .map(|i| {
                graph
                    .neighbors(i)
                    .iter()
                    .map(|&j| terms[j].block_constant(i))
                    .sum()
            })
            .collect();
        Ok(Self {
            layout,
            graph,
            terms,
            regularizers,
            lipschitz,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.graph.num_nodes()
    }

    pub fn layout(&self) -> &PartitionLayout {
        &self.layout
    }

    pub fn graph(&self) -> &CommGraph {
        &self.graph
    }

    pub fn term(&self, i: usize) -> &dyn SmoothLocalTerm {
        self.terms[i].as_ref()
    }

    pub fn regularizer(&self, i: usize) -> &Regularizer {
        &self.regularizers[i]
    }

    /// Stacks the blocks of the closed neighborhood of `node` ascending.
    pub fn gather_neighborhood(&self, x: &DVector<f64>, node: usize) -> DVector<f64> {
        let nbrs = self.graph.neighbors(node);
        let dim: usize = nbrs.iter().map(|&j| self.layout.block_dim(j)).sum();
        let mut out = DVector::zeros(dim);
        let mut pos = 0usize;
        for &j in nbrs {
            let d = self.layout.block_dim(j);
            out.rows_mut(pos, d).copy_from(&x.rows(self.layout.offset(j), d));
            pos += d;
        }
        out
    }

    /// Smooth part `sum_i f_i(x_{N_i})`.
    pub fn smooth_value(&self, x: &DVector<f64>) -> Result<f64> {
        self.check_dim(x)?;
        let mut total = 0.0;
        for i in 0..self.num_nodes() {
            total += self.terms[i].value(&self.gather_neighborhood(x, i));
        }
        Ok(total)
    }

    /// Full objective `V(x)`. Returns `+inf` exactly when some block violates
    /// its regularizer domain; never NaN for finite `x`.
    pub fn aggregate_value(&self, x: &DVector<f64>) -> Result<f64> {
        self.check_dim(x)?;
        for i in 0..self.num_nodes() {
            let xi = x.rows(self.layout.offset(i), self.layout.block_dim(i)).into_owned();
            if self.regularizers[i].value(&xi) == f64::INFINITY {
                return Ok(f64::INFINITY);
            }
        }
        self.smooth_value(x)
    }

    /// Gradient of term `term` with respect to block `block`, evaluated on
    /// the global point. `block` must neighbor `term`.
    pub fn partial_gradient_of_term(
        &self,
        x: &DVector<f64>,
        term: usize,
        block: usize,
    ) -> DVector<f64> {
        self.terms[term].partial_gradient(&self.gather_neighborhood(x, term), block)
    }

    /// Partial gradient of the smooth part with respect to block `i`:
    /// the sum of `grad_i f_j` over `j in N_i`, accumulated in ascending
    /// neighbor order so the floating-point reduction is reproducible.
    pub fn partial_grad_f(&self, x: &DVector<f64>, i: usize) -> Result<DVector<f64>> {
        self.check_dim(x)?;
        if i >= self.num_nodes() {
            return Err(Error::BlockIndex {
                index: i,
                count: self.num_nodes(),
            });
        }
        let mut grad = DVector::zeros(self.layout.block_dim(i));
        for &j in self.graph.neighbors(i) {
            grad += self.partial_gradient_of_term(x, j, i);
        }
        Ok(grad)
    }

    /// Block Lipschitz constant `L_i` of `partial_grad_f(. , i)`.
    pub fn block_lipschitz(&self, i: usize) -> f64 {
        self.lipschitz[i]
    }

    fn check_dim(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.layout.total_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.layout.total_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }
}

const INSTANCE_FORMAT: &str = "qp-box-instance/1";

/// Serializable description of a quadratic instance: layout, edge list,
/// per-node dense `H_i` (row-major), `r_i`, optional box bounds, and the
/// seeds that produced the data.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct InstanceDoc {
    pub format: String,
    pub block_dims: Vec<usize>,
    pub edges: Vec<(usize, usize)>,
    pub nodes: Vec<InstanceNode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct InstanceNode {
    /// Row-major dense symmetric matrix of size (neighborhood dim)^2.
    pub h: Vec<f64>,
    pub r: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct Provenance {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge_prob: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl InstanceDoc {
    pub fn build(&self) -> Result<PartitionedProblem> {
        if self.format != INSTANCE_FORMAT {
            return Err(Error::InstanceFormat(format!(
                "unsupported format tag \"{}\" (expected \"{INSTANCE_FORMAT}\")",
                self.format
            )));
        }
        let layout = PartitionLayout::new(&self.block_dims)?;
        let graph = CommGraph::from_edges(self.block_dims.len(), &self.edges)?;
        if self.nodes.len() != graph.num_nodes() {
            return Err(Error::InstanceFormat(format!(
                "expected {} node entries, got {}",
                graph.num_nodes(),
                self.nodes.len()
            )));
        }
        let mut terms: Vec<Box<dyn SmoothLocalTerm>> = Vec::with_capacity(self.nodes.len());
        let mut regularizers = Vec::with_capacity(self.nodes.len());
        for (i, node) in self.nodes.iter().enumerate() {
            let support = graph.neighbors(i).to_vec();
            let dims: Vec<usize> = support.iter().map(|&j| layout.block_dim(j)).collect();
            let dim: usize = dims.iter().sum();
            if node.h.len() != dim * dim {
                return Err(Error::InstanceFormat(format!(
                    "node {i}: matrix has {} entries, expected {}",
                    node.h.len(),
                    dim * dim
                )));
            }
            if node.r.len() != dim {
                return Err(Error::InstanceFormat(format!(
                    "node {i}: linear part has {} entries, expected {dim}",
                    node.r.len()
                )));
            }
            let h = DMatrix::from_row_slice(dim, dim, &node.h);
            let r = DVector::from_row_slice(&node.r);
            terms.push(Box::new(IndefiniteQpTerm::new(i, support, dims, h, r)?));
            let reg = match (&node.lower, &node.upper) {
                (None, None) => Regularizer::Zero,
                (Some(lo), Some(hi)) => Regularizer::bounded_box(
                    DVector::from_row_slice(lo),
                    DVector::from_row_slice(hi),
                )?,
                _ => {
                    return Err(Error::InstanceFormat(format!(
                        "node {i}: bounds must give both sides or neither"
                    )))
                }
            };
            regularizers.push(reg);
        }
        PartitionedProblem::new(layout, graph, terms, regularizers)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json_string()?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }
}

/// Generates the scalar-block benchmark family on a given graph.
///
/// Per node `i` with closed neighborhood size `m`: draw `A` as an `m x m`
/// matrix with entries uniform on [-1, 1], set `H_i = (A'A + I) - shift*I`,
/// and draw `r_i` uniform on [-10, 10]. `A'A + I` is positive definite, so a
/// positive `shift` beyond its smallest eigenvalue makes `H_i` indefinite and
/// the local terms non-convex. Box bounds become indicator regularizers.
/// Fully determined by `(graph, seed, bounds, shift)`.
pub fn paper_instance_doc(
    graph: &CommGraph,
    seed: u64,
    bounds: &[(f64, f64)],
    shift: f64,
) -> Result<InstanceDoc> {
    if bounds.len() != graph.num_nodes() {
        return Err(Error::InvalidParameter(format!(
            "expected {} bound pairs, got {}",
            graph.num_nodes(),
            bounds.len()
        )));
    }
    for (i, &(lo, hi)) in bounds.iter().enumerate() {
        if !(lo < hi) {
            return Err(Error::InvalidParameter(format!(
                "node {i}: bounds must satisfy lower < upper, got [{lo}, {hi}]"
            )));
        }
    }
    if !(shift > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "shift must be positive (got {shift}); without it every local term stays convex"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nodes = Vec::with_capacity(graph.num_nodes());
    for i in 0..graph.num_nodes() {
        let m = graph.degree(i);
        let entries: Vec<f64> = (0..m * m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let a = DMatrix::from_row_slice(m, m, &entries);
        let mut h = a.transpose() * &a;
        for k in 0..m {
            h[(k, k)] += 1.0;
            h[(k, k)] -= shift;
        }
        let r: Vec<f64> = (0..m).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let (lo, hi) = bounds[i];
        let mut h_row_major = Vec::with_capacity(m * m);
        for row in 0..m {
            for col in 0..m {
                h_row_major.push(h[(row, col)]);
            }
        }
        nodes.push(InstanceNode {
            h: h_row_major,
            r,
            lower: Some(vec![lo]),
            upper: Some(vec![hi]),
        });
    }
    Ok(InstanceDoc {
        format: INSTANCE_FORMAT.to_string(),
        block_dims: vec![1; graph.num_nodes()],
        edges: graph.edges(),
        nodes,
        provenance: Some(Provenance {
            data_seed: Some(seed),
            shift: Some(shift),
            ..Provenance::default()
        }),
    })
}

/// Convenience wrapper building the problem directly. See
/// [`paper_instance_doc`] for the construction.
pub fn generate_paper_instance(
    graph: &CommGraph,
    seed: u64,
    bounds: &[(f64, f64)],
    shift: f64,
) -> Result<PartitionedProblem> {
    paper_instance_doc(graph, seed, bounds, shift)?.build()
}
