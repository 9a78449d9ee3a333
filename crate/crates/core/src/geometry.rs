//! Discretized bodies, embeddings and deformation measures.
//!
//! A body is a uniform tensor-product grid with its origin at zero. Nodes are
//! numbered row-major (the first axis varies slowest). An embedding stores one
//! ambient point per node; its differential is obtained by finite differences.

use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forms::{self, Tensor};

/// Uniform tensor-product grid over `[0, (c_a - 1) h_a]` in every axis `a`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridRepr", into = "GridRepr")]
pub struct BodyGrid {
    counts: Vec<usize>,
    spacing: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct GridRepr {
    dims: usize,
    counts: Vec<usize>,
    spacing: Vec<f64>,
}

impl TryFrom<GridRepr> for BodyGrid {
    type Error = Error;

    fn try_from(r: GridRepr) -> Result<Self> {
        if r.dims != r.counts.len() {
            return Err(Error::Shape(format!(
                "grid declares {} dims but lists {} counts",
                r.dims,
                r.counts.len()
            )));
        }
        BodyGrid::new(r.counts, r.spacing)
    }
}

impl From<BodyGrid> for GridRepr {
    fn from(g: BodyGrid) -> Self {
        GridRepr {
            dims: g.counts.len(),
            counts: g.counts,
            spacing: g.spacing,
        }
    }
}

/// One outer face of a grid: the nodes whose index along `axis` is 0 (`upper = false`)
/// or maximal (`upper = true`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Face {
    pub axis: usize,
    pub upper: bool,
}

impl std::fmt::Display for Face {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}{}", if self.upper { "+" } else { "-" }, self.axis)
    }
}

/// Finite-difference stencil for first derivatives.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stencil {
    /// Central interior, second-order one-sided boundary rows.
    #[default]
    SecondOrder,
    /// Central interior, first-order one-sided boundary rows. Together with
    /// trapezoid weights this satisfies summation by parts, which makes
    /// discrete integration by parts exact.
    SummationByParts,
}

impl BodyGrid {
    pub fn new(counts: Vec<usize>, spacing: Vec<f64>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::Shape("body grid needs at least one axis".into()));
        }
        if counts.len() != spacing.len() {
            return Err(Error::Shape(format!(
                "{} counts but {} spacings",
                counts.len(),
                spacing.len()
            )));
        }
        if let Some(c) = counts.iter().find(|&&c| c < 2) {
            return Err(Error::Shape(format!("axis sample count {c} < 2")));
        }
        if let Some(h) = spacing.iter().find(|&&h| !(h > 0.0 && h.is_finite())) {
            return Err(Error::Shape(format!("grid spacing {h} is not positive")));
        }
        Ok(BodyGrid { counts, spacing })
    }

    /// Grid with `counts[a]` nodes spread over `[0, lengths[a]]`.
    pub fn with_extent(counts: Vec<usize>, lengths: &[f64]) -> Result<Self> {
        if counts.len() != lengths.len() {
            return Err(Error::Shape("counts and lengths differ in length".into()));
        }
        let spacing = counts
            .iter()
            .zip(lengths)
            .map(|(&c, &l)| l / (c.max(2) - 1) as f64)
            .collect();
        BodyGrid::new(counts, spacing)
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn stride(&self, axis: usize) -> usize {
        self.counts[axis + 1..].iter().product()
    }

    pub fn node(&self, multi: &[usize]) -> usize {
        multi.iter().zip(&self.counts).fold(0, |acc, (&i, &c)| acc * c + i)
    }

    pub fn multi_index(&self, mut node: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim()];
        for a in (0..self.dim()).rev() {
            out[a] = node % self.counts[a];
            node /= self.counts[a];
        }
        out
    }

    pub fn coords(&self, node: usize) -> Vec<f64> {
        self.multi_index(node)
            .iter()
            .zip(&self.spacing)
            .map(|(&i, &h)| i as f64 * h)
            .collect()
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        self.multi_index(node)
            .iter()
            .zip(&self.counts)
            .any(|(&i, &c)| i == 0 || i == c - 1)
    }

    pub fn boundary_mask(&self) -> Vec<bool> {
        (0..self.len()).map(|i| self.is_boundary(i)).collect()
    }

    pub fn faces(&self) -> Vec<Face> {
        (0..self.dim())
            .flat_map(|axis| [Face { axis, upper: false }, Face { axis, upper: true }])
            .collect()
    }

    /// Faces containing `node`; empty for interior nodes.
    pub fn faces_of(&self, node: usize) -> Vec<Face> {
        let m = self.multi_index(node);
        let mut out = Vec::new();
        for (axis, (&i, &c)) in m.iter().zip(&self.counts).enumerate() {
            if i == 0 {
                out.push(Face { axis, upper: false });
            }
            if i == c - 1 {
                out.push(Face { axis, upper: true });
            }
        }
        out
    }

    /// Trapezoid quadrature weight of a node.
    pub fn weight(&self, node: usize) -> f64 {
        self.multi_index(node)
            .iter()
            .zip(&self.counts)
            .zip(&self.spacing)
            .map(|((&i, &c), &h)| if i == 0 || i == c - 1 { 0.5 * h } else { h })
            .product()
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.weight(i)).collect()
    }

    /// Total measure of the grid box.
    pub fn volume(&self) -> f64 {
        self.counts
            .iter()
            .zip(&self.spacing)
            .map(|(&c, &h)| (c - 1) as f64 * h)
            .product()
    }

    /// Nonzero entries `(node, coefficient)` of the derivative along `axis` at `node`.
    pub fn stencil(&self, node: usize, axis: usize, kind: Stencil) -> Vec<(usize, f64)> {
        let c = self.counts[axis];
        let h = self.spacing[axis];
        let q = self.multi_index(node)[axis];
        let s = self.stride(axis);
        let at = |offset: isize| (node as isize + offset * s as isize) as usize;
        if q > 0 && q < c - 1 {
            return vec![(at(-1), -0.5 / h), (at(1), 0.5 / h)];
        }
        let sign = if q == 0 { 1.0 } else { -1.0 };
        let dir: isize = if q == 0 { 1 } else { -1 };
        match kind {
            Stencil::SecondOrder if c >= 3 => vec![
                (at(0), -1.5 * sign / h),
                (at(dir), 2.0 * sign / h),
                (at(2 * dir), -0.5 * sign / h),
            ],
            _ => vec![(at(0), -sign / h), (at(dir), sign / h)],
        }
    }

    /// All stencils, indexed `[node][axis]`.
    pub fn stencils(&self, kind: Stencil) -> Vec<Vec<Vec<(usize, f64)>>> {
        (0..self.len())
            .map(|i| (0..self.dim()).map(|a| self.stencil(i, a, kind)).collect())
            .collect()
    }
}

/// Grid-sampled map from the body chart into an `n`-dimensional ambient chart.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EmbeddingRepr", into = "EmbeddingRepr")]
pub struct EmbeddingField {
    grid: BodyGrid,
    n: usize,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct EmbeddingRepr {
    grid: BodyGrid,
    values: Vec<Vec<f64>>,
}

impl TryFrom<EmbeddingRepr> for EmbeddingField {
    type Error = Error;

    fn try_from(r: EmbeddingRepr) -> Result<Self> {
        let n = r.values.first().map_or(0, Vec::len);
        if r.values.iter().any(|v| v.len() != n) {
            return Err(Error::Shape("embedding points have unequal lengths".into()));
        }
        EmbeddingField::new(r.grid, n, r.values.concat())
    }
}

impl From<EmbeddingField> for EmbeddingRepr {
    fn from(e: EmbeddingField) -> Self {
        EmbeddingRepr {
            values: e.values.chunks(e.n).map(<[f64]>::to_vec).collect(),
            grid: e.grid,
        }
    }
}

impl EmbeddingField {
    pub fn new(grid: BodyGrid, n: usize, values: Vec<f64>) -> Result<Self> {
        if n < grid.dim() {
            return Err(Error::Shape(format!(
                "ambient dimension {n} is smaller than body dimension {}",
                grid.dim()
            )));
        }
        if values.len() != n * grid.len() {
            return Err(Error::Shape(format!(
                "expected {} values for {} nodes in dimension {n}, got {}",
                n * grid.len(),
                grid.len(),
                values.len()
            )));
        }
        Ok(EmbeddingField { grid, n, values })
    }

    /// Samples `f` at the body coordinates of every node.
    pub fn from_fn(grid: &BodyGrid, n: usize, f: impl Fn(&[f64]) -> Vec<f64>) -> Result<Self> {
        let mut values = Vec::with_capacity(n * grid.len());
        for i in 0..grid.len() {
            let p = f(&grid.coords(i));
            if p.len() != n {
                return Err(Error::Shape(format!(
                    "embedding function returned {} components, expected {n}",
                    p.len()
                )));
            }
            values.extend(p);
        }
        EmbeddingField::new(grid.clone(), n, values)
    }

    /// `x(xi) = xi` into the body's own dimension.
    pub fn identity(grid: &BodyGrid) -> Self {
        EmbeddingField::from_fn(grid, grid.dim(), <[f64]>::to_vec).expect("identity embedding")
    }

    /// `x(xi) = a xi + b` with `a` an `n x d` matrix.
    pub fn affine(grid: &BodyGrid, a: &DMatrix<f64>, b: &[f64]) -> Result<Self> {
        if a.ncols() != grid.dim() || a.nrows() != b.len() {
            return Err(Error::Shape(format!(
                "affine map {}x{} + {} does not fit a {}-dimensional body",
                a.nrows(),
                a.ncols(),
                b.len(),
                grid.dim()
            )));
        }
        EmbeddingField::from_fn(grid, a.nrows(), |xi| {
            (0..a.nrows())
                .map(|r| b[r] + (0..a.ncols()).map(|c| a[(r, c)] * xi[c]).sum::<f64>())
                .collect()
        })
    }

    pub fn grid(&self) -> &BodyGrid {
        &self.grid
    }

    pub fn ambient_dim(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn point(&self, node: usize) -> &[f64] {
        &self.values[node * self.n..(node + 1) * self.n]
    }

    pub fn point_mut(&mut self, node: usize) -> &mut [f64] {
        &mut self.values[node * self.n..(node + 1) * self.n]
    }

    /// Applies `x -> q x + t` to every point.
    pub fn map_points(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> Result<Self> {
        let mut values = Vec::with_capacity(self.values.len());
        for p in self.values.chunks(self.n) {
            let q = f(p);
            if q.len() != self.n {
                return Err(Error::Shape("point map changed the ambient dimension".into()));
            }
            values.extend(q);
        }
        EmbeddingField::new(self.grid.clone(), self.n, values)
    }

    pub fn differential(&self) -> Vec<DMatrix<f64>> {
        self.differential_with(Stencil::SecondOrder)
    }

    /// `n x d` matrices `(Dx)^A_alpha` at every node.
    pub fn differential_with(&self, kind: Stencil) -> Vec<DMatrix<f64>> {
        let d = self.grid.dim();
        (0..self.grid.len())
            .into_par_iter()
            .map(|i| {
                let mut m = DMatrix::zeros(self.n, d);
                for axis in 0..d {
                    for (j, c) in self.grid.stencil(i, axis, kind) {
                        for (a, x) in self.point(j).iter().enumerate() {
                            m[(a, axis)] += c * x;
                        }
                    }
                }
                m
            })
            .collect()
    }
}

type TensorFn = dyn Fn(&[f64]) -> Tensor + Send + Sync;
type GradientFn = dyn Fn(&[f64]) -> Vec<Tensor> + Send + Sync;

/// Degree-`p` covariant form on the ambient chart.
#[derive(Clone)]
pub struct AmbientMetric {
    n: usize,
    degree: usize,
    constant: Option<Tensor>,
    eval: Arc<TensorFn>,
    gradient: Option<Arc<GradientFn>>,
}

impl std::fmt::Debug for AmbientMetric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AmbientMetric")
            .field("n", &self.n)
            .field("degree", &self.degree)
            .field("constant", &self.constant.is_some())
            .field("analytic_gradient", &self.gradient.is_some())
            .finish()
    }
}

/// Relative central-difference step used when no analytic gradient is supplied.
pub const FD_STEP: f64 = 1e-5;

impl AmbientMetric {
    pub fn constant(t: Tensor) -> Self {
        let n = t.dim();
        let degree = t.degree();
        let c = t.clone();
        AmbientMetric {
            n,
            degree,
            constant: Some(t),
            eval: Arc::new(move |_| c.clone()),
            gradient: Some(Arc::new(move |_| vec![Tensor::zeros(degree, n); n])),
        }
    }

    pub fn euclidean(n: usize) -> Self {
        AmbientMetric::constant(Tensor::identity(1, n))
    }

    /// `diag(-1, 1, ..., 1)`.
    pub fn minkowski(n: usize) -> Self {
        let mut t = Tensor::identity(1, n);
        t.set(&[0, 0], -1.0);
        AmbientMetric::constant(t)
    }

    /// The unit `E` of degree `2k`; its pullback flattens to `(Dx^T Dx)^{(x)k}`.
    pub fn euclidean_power(n: usize, k: usize) -> Self {
        AmbientMetric::constant(Tensor::identity(k, n))
    }

    /// `Theta(x) = base + sum_B x^B slopes[B]`, with exact gradient.
    pub fn affine(base: Tensor, slopes: Vec<Tensor>) -> Result<Self> {
        let (n, degree) = (base.dim(), base.degree());
        if slopes.len() != n || slopes.iter().any(|s| s.dim() != n || s.degree() != degree) {
            return Err(Error::Shape(
                "affine metric needs one slope tensor per ambient direction".into(),
            ));
        }
        let b = base.clone();
        let sl = slopes.clone();
        Ok(AmbientMetric {
            n,
            degree,
            constant: None,
            eval: Arc::new(move |x| {
                let mut t = b.clone();
                for (xb, s) in x.iter().zip(&sl) {
                    t.axpy(*xb, s).expect("checked shapes");
                }
                t
            }),
            gradient: Some(Arc::new(move |_| slopes.clone())),
        })
    }

    /// `Theta(x) = exp(2 c.x) base`.
    pub fn conformal_exp(base: Tensor, c: Vec<f64>) -> Result<Self> {
        let (n, degree) = (base.dim(), base.degree());
        if c.len() != n {
            return Err(Error::Shape("conformal exponent needs n coefficients".into()));
        }
        let b = base.clone();
        let cc = c.clone();
        let factor = move |x: &[f64], c: &[f64]| (2.0 * x.iter().zip(c).map(|(a, b)| a * b).sum::<f64>()).exp();
        Ok(AmbientMetric {
            n,
            degree,
            constant: None,
            eval: Arc::new(move |x| b.scale(factor(x, &cc))),
            gradient: Some(Arc::new(move |x| {
                let f = factor(x, &c);
                c.iter().map(|&ci| base.scale(2.0 * ci * f)).collect()
            })),
        })
    }

    /// Arbitrary closed-form metric. Without `gradient`, derivatives use central
    /// differences with step [`FD_STEP`] times the coordinate scale.
    pub fn from_fn(
        n: usize,
        degree: usize,
        eval: impl Fn(&[f64]) -> Tensor + Send + Sync + 'static,
        gradient: Option<Arc<GradientFn>>,
    ) -> Self {
        AmbientMetric {
            n,
            degree,
            constant: None,
            eval: Arc::new(eval),
            gradient,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn is_constant(&self) -> bool {
        self.constant.is_some()
    }

    pub fn has_analytic_gradient(&self) -> bool {
        self.gradient.is_some()
    }

    pub fn eval(&self, x: &[f64]) -> Result<Tensor> {
        let t = (self.eval)(x);
        if t.dim() != self.n || t.degree() != self.degree {
            return Err(Error::Shape(format!(
                "metric evaluator returned degree {} over {}, declared degree {} over {}",
                t.degree(),
                t.dim(),
                self.degree,
                self.n
            )));
        }
        Ok(t)
    }

    /// `d Theta / d x^B` for every ambient direction `B`.
    pub fn gradient(&self, x: &[f64]) -> Result<Vec<Tensor>> {
        match &self.gradient {
            Some(g) => Ok(g(x)),
            None => self.gradient_fd(x),
        }
    }

    /// Central finite-difference gradient, regardless of any analytic one.
    pub fn gradient_fd(&self, x: &[f64]) -> Result<Vec<Tensor>> {
        self.gradient_fd_step(x, FD_STEP)
    }

    pub fn gradient_fd_step(&self, x: &[f64], rel_step: f64) -> Result<Vec<Tensor>> {
        let mut out = Vec::with_capacity(self.n);
        let mut xp = x.to_vec();
        for b in 0..self.n {
            let h = rel_step * x[b].abs().max(1.0);
            xp[b] = x[b] + h;
            let plus = self.eval(&xp)?;
            xp[b] = x[b] - h;
            let minus = self.eval(&xp)?;
            xp[b] = x[b];
            out.push(plus.sub(&minus)?.scale(0.5 / h));
        }
        Ok(out)
    }
}

/// A tensor per node of a grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TensorField {
    pub degree: usize,
    pub dim: usize,
    pub values: Vec<Tensor>,
}

impl TensorField {
    pub fn zeros(degree: usize, dim: usize, nodes: usize) -> Self {
        TensorField {
            degree,
            dim,
            values: vec![Tensor::zeros(degree, dim); nodes],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sub(&self, other: &TensorField) -> Result<TensorField> {
        if self.len() != other.len() {
            return Err(Error::Shape(format!(
                "tensor fields over {} and {} nodes",
                self.len(),
                other.len()
            )));
        }
        Ok(TensorField {
            degree: self.degree,
            dim: self.dim,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a.sub(b))
                .collect::<Result<_>>()?,
        })
    }

    /// Largest absolute component over all nodes.
    pub fn norm_inf(&self) -> f64 {
        self.values.iter().fold(0.0, |m, t| m.max(t.norm_inf()))
    }

    /// CSV with the node multi-index followed by one column per component.
    pub fn to_csv(&self, grid: &BodyGrid) -> String {
        let mut s = String::new();
        let idx: Vec<String> = (0..grid.dim()).map(|a| format!("i{a}")).collect();
        let comps: Vec<String> = (0..self.values.first().map_or(0, |t| t.components().len()))
            .map(|c| format!("c{c}"))
            .collect();
        let _ = writeln!(s, "{}", [idx, comps].concat().join(","));
        for (node, t) in self.values.iter().enumerate() {
            let mut row: Vec<String> = grid.multi_index(node).iter().map(ToString::to_string).collect();
            row.extend(t.components().iter().map(|c| format!("{c:e}")));
            let _ = writeln!(s, "{}", row.join(","));
        }
        s
    }
}

/// CSV with the node multi-index followed by one column per named scalar field.
pub fn scalar_fields_csv(grid: &BodyGrid, names: &[&str], fields: &[Vec<f64>]) -> String {
    let mut s = String::new();
    let mut header: Vec<String> = (0..grid.dim()).map(|a| format!("i{a}")).collect();
    header.extend(names.iter().map(ToString::to_string));
    let _ = writeln!(s, "{}", header.join(","));
    for node in 0..grid.len() {
        let mut row: Vec<String> = grid.multi_index(node).iter().map(ToString::to_string).collect();
        row.extend(fields.iter().map(|f| format!("{:e}", f[node])));
        let _ = writeln!(s, "{}", row.join(","));
    }
    s
}

/// Contracts slot `slot` of a dense array of shape `shape` with `m`
/// (`shape[slot] x new`), replacing that extent by `m.ncols()`.
pub(crate) fn contract_slot(data: &[f64], shape: &[usize], slot: usize, m: &DMatrix<f64>) -> (Vec<f64>, Vec<usize>) {
    let outer: usize = shape[..slot].iter().product();
    let inner: usize = shape[slot + 1..].iter().product();
    let (old, new) = (shape[slot], m.ncols());
    let mut out = vec![0.0; outer * new * inner];
    for o in 0..outer {
        for a in 0..old {
            let src = &data[(o * old + a) * inner..(o * old + a + 1) * inner];
            for b in 0..new {
                let c = m[(a, b)];
                if c == 0.0 {
                    continue;
                }
                let dst = &mut out[(o * new + b) * inner..(o * new + b + 1) * inner];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += c * s;
                }
            }
        }
    }
    let mut new_shape = shape.to_vec();
    new_shape[slot] = new;
    (out, new_shape)
}

/// `Theta_B[a_1..a_p] = Theta[A_1..A_p] dx[A_1][a_1] ... dx[A_p][a_p]`.
pub fn pullback_tensor(theta: &Tensor, dx: &DMatrix<f64>) -> Tensor {
    let p = theta.degree();
    let mut data = theta.components().to_vec();
    let mut shape = vec![theta.dim(); p];
    for slot in 0..p {
        (data, shape) = contract_slot(&data, &shape, slot, dx);
    }
    Tensor::new(p, dx.ncols(), data).expect("pullback shape")
}

fn check_immersion(dx: &DMatrix<f64>, node: usize, grid: &BodyGrid) -> Result<()> {
    let sv = dx.singular_values();
    let max = sv.max();
    if !(sv.min() > 1e-10 * max) {
        return Err(Error::Embedding(format!(
            "differential is rank deficient at node {:?}",
            grid.multi_index(node)
        )));
    }
    Ok(())
}

pub fn pullback(e: &EmbeddingField, theta: &AmbientMetric) -> Result<TensorField> {
    pullback_with(e, theta, Stencil::SecondOrder)
}

pub fn pullback_with(e: &EmbeddingField, theta: &AmbientMetric, kind: Stencil) -> Result<TensorField> {
    check_ambient(e, theta)?;
    let dx = e.differential_with(kind);
    let values = dx
        .par_iter()
        .enumerate()
        .map(|(i, m)| {
            check_immersion(m, i, e.grid())?;
            Ok(pullback_tensor(&theta.eval(e.point(i))?, m))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TensorField {
        degree: theta.degree(),
        dim: e.grid().dim(),
        values,
    })
}

fn check_ambient(e: &EmbeddingField, theta: &AmbientMetric) -> Result<()> {
    if e.ambient_dim() != theta.dim() {
        return Err(Error::Shape(format!(
            "embedding into dimension {} but metric over {}",
            e.ambient_dim(),
            theta.dim()
        )));
    }
    Ok(())
}

/// Pulled-back form, background form and their difference on one grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DeformationMeasure {
    pub theta_b: TensorField,
    pub theta0_b: TensorField,
    pub delta: TensorField,
    pub delta_dot: Option<TensorField>,
}

impl DeformationMeasure {
    /// Builds the measure from already pulled-back fields.
    pub fn from_fields(theta_b: TensorField, theta0_b: TensorField) -> Result<Self> {
        let delta = theta_b.sub(&theta0_b)?;
        Ok(DeformationMeasure {
            theta_b,
            theta0_b,
            delta,
            delta_dot: None,
        })
    }
}

pub fn deformation_measure(
    current: &EmbeddingField,
    reference: &EmbeddingField,
    theta: &AmbientMetric,
) -> Result<DeformationMeasure> {
    if current.grid() != reference.grid() {
        return Err(Error::Shape("current and reference embeddings use different grids".into()));
    }
    DeformationMeasure::from_fields(pullback(current, theta)?, pullback(reference, theta)?)
}

/// Traces `tr(X^i)`, `i = 1..=s`, of a square matrix.
pub fn power_traces(x: &DMatrix<f64>, s: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(s);
    let mut p = x.clone();
    for i in 0..s {
        if i > 0 {
            p = &p * x;
        }
        out.push(p.trace());
    }
    out
}

/// `Delta^(i) = Tr((Delta . Theta0^-1)^i)` per node for `i = 1..=s`; the outer
/// vector is indexed by `i - 1`.
pub fn invariants(dm: &DeformationMeasure, s: usize) -> Result<Vec<Vec<f64>>> {
    let per_node = dm
        .delta
        .values
        .par_iter()
        .zip(&dm.theta0_b.values)
        .enumerate()
        .map(|(node, (delta, theta0))| {
            let g = forms::flat_inverse(theta0).map_err(|e| e.at(format!("node {node}")))?;
            let bar = forms::flat_multiply(delta, &g)?;
            Ok(power_traces(&forms::flatten(&bar)?.matrix, s))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((0..s).map(|i| per_node.iter().map(|v| v[i]).collect()).collect())
}

/// Time derivative of the pulled-back form along a uniformly sampled history:
/// central differences inside, second-order one-sided at the ends (first order
/// when only two samples exist).
pub fn time_derivative(history: &[EmbeddingField], dt: f64, theta: &AmbientMetric) -> Result<Vec<TensorField>> {
    if history.len() < 2 {
        return Err(Error::History(format!(
            "need at least 2 time samples, got {}",
            history.len()
        )));
    }
    if !(dt > 0.0) {
        return Err(Error::History(format!("time step {dt} is not positive")));
    }
    if history.iter().any(|e| e.grid() != history[0].grid()) {
        return Err(Error::Shape("history slices use different grids".into()));
    }
    let pulled = history
        .iter()
        .map(|e| pullback(e, theta))
        .collect::<Result<Vec<_>>>()?;
    let t_len = pulled.len();
    let combine = |terms: &[(usize, f64)]| -> Result<TensorField> {
        let mut out = TensorField::zeros(pulled[0].degree, pulled[0].dim, pulled[0].len());
        for &(t, c) in terms {
            for (o, v) in out.values.iter_mut().zip(&pulled[t].values) {
                o.axpy(c / dt, v)?;
            }
        }
        Ok(out)
    };
    (0..t_len)
        .map(|t| {
            if t > 0 && t + 1 < t_len {
                combine(&[(t - 1, -0.5), (t + 1, 0.5)])
            } else if t_len == 2 {
                combine(&[(0, -1.0), (1, 1.0)])
            } else if t == 0 {
                combine(&[(0, -1.5), (1, 2.0), (2, -0.5)])
            } else {
                combine(&[(t, 1.5), (t - 1, -2.0), (t - 2, 0.5)])
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(count: usize, length: f64) -> BodyGrid {
        BodyGrid::with_extent(vec![count], &[length]).unwrap()
    }

    #[test]
    fn grid_indexing_round_trip() {
        let g = BodyGrid::new(vec![3, 4, 2], vec![1.0, 0.5, 2.0]).unwrap();
        for i in 0..g.len() {
            assert_eq!(g.node(&g.multi_index(i)), i);
        }
        // first axis slowest
        assert_eq!(g.multi_index(1), vec![0, 0, 1]);
        assert_eq!(g.coords(g.node(&[2, 3, 1])), vec![2.0, 1.5, 2.0]);
    }

    #[test]
    fn boundary_mask_is_outer_shell() {
        let g = BodyGrid::new(vec![4, 5], vec![1.0, 1.0]).unwrap();
        let interior = g.boundary_mask().iter().filter(|b| !**b).count();
        assert_eq!(interior, 2 * 3);
        assert!(g.faces_of(0).len() == 2);
    }

    #[test]
    fn invalid_grids_rejected() {
        assert!(BodyGrid::new(vec![1], vec![1.0]).is_err());
        assert!(BodyGrid::new(vec![3], vec![0.0]).is_err());
        assert!(BodyGrid::new(vec![3], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn trapezoid_weights_sum_to_volume() {
        let g = BodyGrid::new(vec![5, 3], vec![0.25, 0.5]).unwrap();
        assert!((g.weights().iter().sum::<f64>() - g.volume()).abs() < 1e-15);
    }

    #[test]
    fn identity_differential_is_identity() {
        let g = BodyGrid::new(vec![4, 3], vec![0.3, 0.7]).unwrap();
        for dx in EmbeddingField::identity(&g).differential() {
            assert!((dx - DMatrix::identity(2, 2)).abs().max() < 1e-14);
        }
    }

    #[test]
    fn scaled_line_differential() {
        let g = line(7, 1.0);
        let e = EmbeddingField::from_fn(&g, 1, |x| vec![2.5 * x[0]]).unwrap();
        for kind in [Stencil::SecondOrder, Stencil::SummationByParts] {
            for dx in e.differential_with(kind) {
                assert!((dx[(0, 0)] - 2.5).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn quadratic_differential_is_exact() {
        let g = line(101, 1.0);
        let e = EmbeddingField::from_fn(&g, 1, |x| vec![x[0] * x[0]]).unwrap();
        for (i, dx) in e.differential().iter().enumerate() {
            let xi = g.coords(i)[0];
            assert!((dx[(0, 0)] - 2.0 * xi).abs() <= 1e-10);
        }
    }

    #[test]
    fn sbp_property() {
        // H D + D^T H = B on a 1D grid
        let g = line(6, 1.0);
        let n = g.len();
        let mut d = DMatrix::zeros(n, n);
        for i in 0..n {
            for (j, c) in g.stencil(i, 0, Stencil::SummationByParts) {
                d[(i, j)] = c;
            }
        }
        let h = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(g.weights()));
        let q = &h * &d + d.transpose() * &h;
        let mut b = DMatrix::zeros(n, n);
        b[(0, 0)] = -1.0;
        b[(n - 1, n - 1)] = 1.0;
        assert!((q - b).abs().max() < 1e-12);
    }

    #[test]
    fn pullback_examples() {
        let g = line(5, 1.0);
        let e = EmbeddingField::from_fn(&g, 1, |x| vec![1.7 * x[0]]).unwrap();
        let tb = pullback(&e, &AmbientMetric::euclidean(1)).unwrap();
        for t in &tb.values {
            assert!((t.get(&[0, 0]) - 1.7 * 1.7).abs() < 1e-13);
        }
        let g2 = BodyGrid::new(vec![3, 3], vec![0.5, 0.5]).unwrap();
        let plane = EmbeddingField::from_fn(&g2, 4, |x| vec![0.0, x[0], 0.0, x[1]]).unwrap();
        let tb = pullback(&plane, &AmbientMetric::euclidean(4)).unwrap();
        for t in &tb.values {
            assert!(t.sub(&Tensor::identity(1, 2)).unwrap().norm_inf() < 1e-14);
        }
    }

    #[test]
    fn pullback_matches_matrix_form_for_p2() {
        let theta = Tensor::new(2, 3, vec![2.0, 0.5, 0.1, 0.3, 1.0, -0.2, 0.0, 0.4, 3.0]).unwrap();
        let dx = DMatrix::from_row_slice(3, 2, &[1.0, 0.2, -0.5, 2.0, 0.3, 0.7]);
        let t = DMatrix::from_row_slice(3, 3, theta.components());
        let oracle = dx.transpose() * t * &dx;
        let pb = pullback_tensor(&theta, &dx);
        for a in 0..2 {
            for b in 0..2 {
                assert!((pb.get(&[a, b]) - oracle[(a, b)]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn rank_deficient_embedding_rejected() {
        let g = BodyGrid::new(vec![3, 3], vec![1.0, 1.0]).unwrap();
        let e = EmbeddingField::from_fn(&g, 2, |x| vec![x[0] + x[1], x[0] + x[1]]).unwrap();
        assert!(matches!(
            pullback(&e, &AmbientMetric::euclidean(2)),
            Err(Error::Embedding(_))
        ));
    }

    #[test]
    fn stretch_invariants() {
        let g = line(4, 1.0);
        let lambda = 1.3;
        let cur = EmbeddingField::from_fn(&g, 1, |x| vec![lambda * x[0]]).unwrap();
        let dm = deformation_measure(&cur, &EmbeddingField::identity(&g), &AmbientMetric::euclidean(1)).unwrap();
        let inv = invariants(&dm, 2).unwrap();
        let e = lambda * lambda - 1.0;
        for node in 0..g.len() {
            assert!((inv[0][node] - e).abs() < 1e-12);
            assert!((inv[1][node] - e * e).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_background_reports_node() {
        let g = line(3, 1.0);
        let dm = DeformationMeasure::from_fields(
            TensorField::zeros(2, 1, 3),
            TensorField::zeros(2, 1, 3),
        )
        .unwrap();
        let err = invariants(&dm, 1).unwrap_err();
        assert!(matches!(err, Error::Singular { location: Some(ref l), .. } if l == "node 0"));
        let _ = g;
    }

    #[test]
    fn time_derivative_of_growing_stretch() {
        let g = line(5, 1.0);
        let (v, dt) = (0.3, 0.1);
        let history: Vec<_> = (0..6)
            .map(|t| {
                let s = 1.0 + v * t as f64 * dt;
                EmbeddingField::from_fn(&g, 1, |x| vec![s * x[0]]).unwrap()
            })
            .collect();
        let dd = time_derivative(&history, dt, &AmbientMetric::euclidean(1)).unwrap();
        for (t, f) in dd.iter().enumerate() {
            let oracle = 2.0 * v * (1.0 + v * t as f64 * dt);
            for val in &f.values {
                assert!((val.get(&[0, 0]) - oracle).abs() < 1e-12, "t={t}");
            }
        }
        assert!(matches!(
            time_derivative(&history[..1], dt, &AmbientMetric::euclidean(1)),
            Err(Error::History(_))
        ));
    }

    #[test]
    fn fd_gradient_matches_affine_metric() {
        let base = Tensor::identity(1, 2);
        let mut s0 = Tensor::zeros(2, 2);
        s0.set(&[0, 0], 1.0);
        let theta = AmbientMetric::affine(base, vec![s0, Tensor::zeros(2, 2)]).unwrap();
        let x = [0.4, -1.2];
        let a = theta.gradient(&x).unwrap();
        let f = theta.gradient_fd(&x).unwrap();
        for (ga, gf) in a.iter().zip(&f) {
            assert!(ga.sub(gf).unwrap().norm_inf() < 1e-9);
        }
    }

    #[test]
    fn embedding_json_shape() {
        let g = line(2, 1.0);
        let e = EmbeddingField::identity(&g);
        let s = serde_json::to_string(&e).unwrap();
        assert_eq!(s, r#"{"grid":{"dims":1,"counts":[2],"spacing":[1.0]},"values":[[0.0],[1.0]]}"#);
        let back: EmbeddingField = serde_json::from_str(&s).unwrap();
        assert_eq!(back, e);
    }

    #[test]
    fn tensor_field_csv_has_index_columns() {
        let g = line(2, 1.0);
        let f = TensorField::zeros(2, 1, 2);
        let csv = f.to_csv(&g);
        assert!(csv.starts_with("i0,c0\n0,0e0\n"));
    }
}
