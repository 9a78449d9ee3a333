//! Flattened matrix calculus for covariant tensors of even degree `2k`.
//!
//! A degree-`2k` tensor over dimension `d` is viewed as a `d^k x d^k` matrix by
//! splitting its arguments into the first `k` and the last `k` slots and
//! numbering each group with a [`FlatOrdering`]. Multiplication, inversion,
//! determinant and trace are then ordinary matrix operations on that view.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest-to-largest singular value ratio below which a flattened matrix is
/// treated as singular.
pub const SINGULAR_RATIO: f64 = 1e-12;

/// Dense covariant tensor of order `degree` over a `dim`-dimensional space.
///
/// Components are stored row-major: the first index varies slowest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TensorRepr", into = "TensorRepr")]
pub struct Tensor {
    degree: usize,
    dim: usize,
    components: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct TensorRepr {
    degree: usize,
    dim: usize,
    components: Vec<f64>,
}

impl TryFrom<TensorRepr> for Tensor {
    type Error = Error;

    fn try_from(r: TensorRepr) -> Result<Self> {
        Tensor::new(r.degree, r.dim, r.components)
    }
}

impl From<Tensor> for TensorRepr {
    fn from(t: Tensor) -> Self {
        TensorRepr {
            degree: t.degree,
            dim: t.dim,
            components: t.components,
        }
    }
}

fn checked_len(dim: usize, degree: usize) -> Result<usize> {
    u32::try_from(degree)
        .ok()
        .and_then(|p| dim.checked_pow(p))
        .ok_or_else(|| Error::Shape(format!("{dim}^{degree} components overflow")))
}

impl Tensor {
    pub fn new(degree: usize, dim: usize, components: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Shape("tensor dimension must be positive".into()));
        }
        let len = checked_len(dim, degree)?;
        if components.len() != len {
            return Err(Error::Shape(format!(
                "degree {degree} tensor over dimension {dim} needs {len} components, got {}",
                components.len()
            )));
        }
        Ok(Tensor {
            degree,
            dim,
            components,
        })
    }

    pub fn zeros(degree: usize, dim: usize) -> Self {
        let len = checked_len(dim, degree).expect("tensor size overflow");
        Tensor {
            degree,
            dim,
            components: vec![0.0; len],
        }
    }

    /// Builds a tensor from a function of the multi-index.
    pub fn from_fn(degree: usize, dim: usize, mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let mut t = Tensor::zeros(degree, dim);
        let mut idx = vec![0; degree];
        for c in t.components.iter_mut() {
            *c = f(&idx);
            increment(&mut idx, dim);
        }
        t
    }

    /// The unit `E` of flat multiplication: `E_{a1..ak b1..bk} = prod delta(a_i, b_i)`.
    pub fn identity(k: usize, dim: usize) -> Self {
        Tensor::from_fn(2 * k, dim, |idx| {
            let (first, last) = idx.split_at(k);
            if first == last {
                1.0
            } else {
                0.0
            }
        })
    }

    /// Degree-2 tensor from a square matrix.
    pub fn from_matrix(m: &DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::Shape(format!(
                "{}x{} matrix is not square",
                m.nrows(),
                m.ncols()
            )));
        }
        let d = m.nrows();
        Ok(Tensor::from_fn(2, d, |i| m[(i[0], i[1])]))
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[f64] {
        &self.components
    }

    pub fn components_mut(&mut self) -> &mut [f64] {
        &mut self.components
    }

    pub fn into_components(self) -> Vec<f64> {
        self.components
    }

    /// Linear position of a multi-index.
    pub fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.degree);
        idx.iter().fold(0, |acc, &i| acc * self.dim + i)
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.components[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], value: f64) {
        let o = self.offset(idx);
        self.components[o] = value;
    }

    /// Half the degree, or a [`Error::Degree`] for odd tensors.
    pub fn half_degree(&self) -> Result<usize> {
        if self.degree == 0 || self.degree % 2 == 1 {
            Err(Error::Degree(format!(
                "flat calculus needs an even positive degree, got {}",
                self.degree
            )))
        } else {
            Ok(self.degree / 2)
        }
    }

    fn same_shape(&self, other: &Tensor) -> Result<()> {
        if self.degree != other.degree || self.dim != other.dim {
            return Err(Error::Shape(format!(
                "degree {} / dim {} vs degree {} / dim {}",
                self.degree, self.dim, other.degree, other.dim
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.same_shape(other)?;
        Ok(self.zip_map(other, |a, b| a + b))
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.same_shape(other)?;
        Ok(self.zip_map(other, |a, b| a - b))
    }

    fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
        Tensor {
            degree: self.degree,
            dim: self.dim,
            components: self
                .components
                .iter()
                .zip(&other.components)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Tensor {
        Tensor {
            degree: self.degree,
            dim: self.dim,
            components: self.components.iter().map(|c| c * s).collect(),
        }
    }

    /// `self += s * other`.
    pub fn axpy(&mut self, s: f64, other: &Tensor) -> Result<()> {
        self.same_shape(other)?;
        for (a, b) in self.components.iter_mut().zip(&other.components) {
            *a += s * b;
        }
        Ok(())
    }

    /// Full contraction `sum_I a_I b_I`, the pairing of a contravariant and a
    /// covariant tensor written in the same basis.
    pub fn pairing(&self, other: &Tensor) -> Result<f64> {
        self.same_shape(other)?;
        Ok(self
            .components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| a * b)
            .sum())
    }

    pub fn norm_inf(&self) -> f64 {
        self.components.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    pub fn norm_frobenius(&self) -> f64 {
        self.components.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    /// Swaps the first and last argument groups (matrix transpose of the flat view).
    pub fn flat_transpose(&self) -> Result<Tensor> {
        let k = self.half_degree()?;
        Ok(Tensor::from_fn(self.degree, self.dim, |idx| {
            let mut swapped = Vec::with_capacity(idx.len());
            swapped.extend_from_slice(&idx[k..]);
            swapped.extend_from_slice(&idx[..k]);
            self.get(&swapped)
        }))
    }
}

/// Advances a row-major multi-index; returns false after wrapping around.
pub(crate) fn increment(idx: &mut [usize], dim: usize) -> bool {
    for slot in idx.iter_mut().rev() {
        *slot += 1;
        if *slot < dim {
            return true;
        }
        *slot = 0;
    }
    false
}

/// Numbering of `k`-tuples over `{0..d}`, used to flatten each half of a
/// `2k`-form.
///
/// Only the d-adic positional encoding `a = i_1 + i_2 d + ... + i_k d^(k-1)`
/// is provided; the kind is carried so alternative orderings can be added.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlatOrdering {
    pub k: usize,
    pub d: usize,
    pub kind: OrderingKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderingKind {
    DAdic,
}

impl FlatOrdering {
    pub fn d_adic(k: usize, d: usize) -> Self {
        FlatOrdering {
            k,
            d,
            kind: OrderingKind::DAdic,
        }
    }

    /// Number of rows (and columns) of the flat view, `d^k`.
    pub fn size(&self) -> usize {
        self.d.pow(self.k as u32)
    }

    pub fn encode(&self, tuple: &[usize]) -> usize {
        debug_assert_eq!(tuple.len(), self.k);
        match self.kind {
            OrderingKind::DAdic => tuple.iter().rev().fold(0, |acc, &i| acc * self.d + i),
        }
    }

    pub fn decode(&self, mut a: usize) -> Vec<usize> {
        match self.kind {
            OrderingKind::DAdic => (0..self.k)
                .map(|_| {
                    let digit = a % self.d;
                    a /= self.d;
                    digit
                })
                .collect(),
        }
    }
}

/// Square matrix image of a `2k`-form under a [`FlatOrdering`].
#[derive(Clone, Debug, PartialEq)]
pub struct FlatView {
    pub ordering: FlatOrdering,
    pub matrix: DMatrix<f64>,
}

pub fn flatten(t: &Tensor) -> Result<FlatView> {
    flatten_with(t, FlatOrdering::d_adic(t.half_degree()?, t.dim()))
}

pub fn flatten_with(t: &Tensor, ordering: FlatOrdering) -> Result<FlatView> {
    let k = t.half_degree()?;
    if ordering.k != k || ordering.d != t.dim() {
        return Err(Error::Shape(format!(
            "ordering for (k={}, d={}) applied to a degree {} tensor over {}",
            ordering.k,
            ordering.d,
            t.degree(),
            t.dim()
        )));
    }
    let n = ordering.size();
    let mut matrix = DMatrix::zeros(n, n);
    let mut idx = vec![0; 2 * k];
    for &c in t.components() {
        let a = ordering.encode(&idx[..k]);
        let b = ordering.encode(&idx[k..]);
        matrix[(a, b)] = c;
        increment(&mut idx, t.dim());
    }
    Ok(FlatView { ordering, matrix })
}

pub fn unflatten(view: &FlatView) -> Tensor {
    let FlatOrdering { k, d, .. } = view.ordering;
    Tensor::from_fn(2 * k, d, |idx| {
        view.matrix[(view.ordering.encode(&idx[..k]), view.ordering.encode(&idx[k..]))]
    })
}

fn from_flat(like: &FlatView, matrix: DMatrix<f64>) -> Tensor {
    unflatten(&FlatView {
        ordering: like.ordering,
        matrix,
    })
}

/// Flat product: contraction of the trailing `k` indices of `a` with the
/// leading `k` indices of `b`.
pub fn flat_multiply(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    a.same_shape(b)?;
    let fa = flatten(a)?;
    let fb = flatten(b)?;
    Ok(from_flat(&fa, &fa.matrix * &fb.matrix))
}

/// Whether the flattened matrix counts as singular under [`SINGULAR_RATIO`].
pub fn is_flat_singular(m: &DMatrix<f64>) -> bool {
    let sv = m.singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    !(max > 0.0) || min <= SINGULAR_RATIO * max
}

pub fn flat_inverse(t: &Tensor) -> Result<Tensor> {
    let view = flatten(t)?;
    if is_flat_singular(&view.matrix) {
        return Err(Error::singular(
            "flattened matrix condition number exceeds 1e12",
        ));
    }
    let inv = view
        .matrix
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::singular("LU inversion failed"))?;
    Ok(from_flat(&view, inv))
}

/// Determinant of the flattened matrix.
pub fn overline_det(t: &Tensor) -> Result<f64> {
    Ok(flatten(t)?.matrix.determinant())
}

/// Trace of the flattened matrix.
pub fn flat_trace(t: &Tensor) -> Result<f64> {
    Ok(flatten(t)?.matrix.trace())
}

/// Solution data of `3^k - 2 k d^(k-1) = 4m + 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Admissibility {
    pub k: usize,
    pub d: usize,
    /// Present exactly when `(k, d)` admits a volume density.
    pub m: Option<i64>,
    /// Root order of the density, `2 k d^(k-1)`.
    pub l: u64,
    /// Number of row transpositions induced in the flat Jacobian, `(3^k - 1) / 2`.
    pub p: u64,
}

impl Admissibility {
    pub fn is_admissible(&self) -> bool {
        self.m.is_some()
    }
}

pub fn admissibility(k: usize, d: usize) -> Admissibility {
    assert!(k >= 1 && d >= 1, "admissibility needs k >= 1 and d >= 1");
    let three_k = 3i128.pow(k as u32);
    let l = 2 * (k as i128) * (d as i128).pow(k as u32 - 1);
    let lhs = three_k - l;
    let m = ((lhs - 1).rem_euclid(4) == 0).then(|| ((lhs - 1) / 4) as i64);
    Admissibility {
        k,
        d,
        m,
        l: l as u64,
        p: ((three_k - 1) / 2) as u64,
    }
}

/// One row of the admissibility table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct AdmissibleTriple {
    pub m: i64,
    pub k: usize,
    pub d: usize,
    pub l: u64,
    pub p: u64,
}

/// All admissible `(m, k, d)` with `m` in the closed range, `1 <= k <= k_max`
/// and `1 <= d <= d_max`. Zero-dimensional bodies are never listed.
pub fn admissible_table(m_min: i64, m_max: i64, k_max: usize, d_max: usize) -> Vec<AdmissibleTriple> {
    let mut rows = Vec::new();
    for k in 1..=k_max {
        for d in 1..=d_max {
            let a = admissibility(k, d);
            if let Some(m) = a.m {
                if (m_min..=m_max).contains(&m) {
                    rows.push(AdmissibleTriple {
                        m,
                        k,
                        d,
                        l: a.l,
                        p: a.p,
                    });
                }
            }
        }
    }
    rows
}

/// Invariant volume density `|det flat(t)|^(1/l)`.
pub fn volume_density(t: &Tensor, adm: &Admissibility) -> Result<f64> {
    let k = t.half_degree()?;
    if k != adm.k || t.dim() != adm.d {
        return Err(Error::Shape(format!(
            "degree {} tensor over {} used with admissibility data for (k={}, d={})",
            t.degree(),
            t.dim(),
            adm.k,
            adm.d
        )));
    }
    if adm.m.is_none() {
        return Err(Error::Admissibility { k: adm.k, d: adm.d });
    }
    let det = overline_det(t)?;
    if det == 0.0 || !det.is_finite() {
        return Err(Error::singular("zero flat determinant"));
    }
    Ok(det.abs().powf(1.0 / adm.l as f64))
}

/// `J = j^{(x)k}` as a `2k` tensor with components `J[b_1..b_k, a_1..a_k] = prod j[b_i][a_i]`.
pub fn tensor_power(j: &DMatrix<f64>, k: usize) -> Result<Tensor> {
    if j.nrows() != j.ncols() || j.nrows() == 0 {
        return Err(Error::Shape("tensor power needs a non-empty square matrix".into()));
    }
    Ok(Tensor::from_fn(2 * k, j.nrows(), |idx| {
        let (rows, cols) = idx.split_at(k);
        rows.iter().zip(cols).map(|(&r, &c)| j[(r, c)]).product()
    }))
}

/// Change of coordinates `xi' = xi'(xi)` with Jacobian `j`, acting on a `2k`-form.
///
/// Returns `flat(t') = flat(J^-1)^T flat(t) flat(J^-1)` with `J^-1 = (j^-1)^{(x)k}`.
pub fn transform_form(t: &Tensor, j: &DMatrix<f64>) -> Result<Tensor> {
    let k = t.half_degree()?;
    if j.nrows() != t.dim() || j.ncols() != t.dim() {
        return Err(Error::Shape(format!(
            "{}x{} Jacobian for a form over {}",
            j.nrows(),
            j.ncols(),
            t.dim()
        )));
    }
    let jinv = j
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::singular("Jacobian is not invertible"))?;
    let m = flatten(&tensor_power(&jinv, k)?)?.matrix;
    let view = flatten(t)?;
    let image = m.transpose() * &view.matrix * m;
    Ok(from_flat(&view, image))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DensityReport {
    /// Density of the transformed form.
    pub density_lhs: f64,
    /// Density of the original form divided by `|det j|`.
    pub density_rhs: f64,
    pub density_rel_error: f64,
    /// `det flat(j^{(x)k})`.
    pub jacobian_det_lhs: f64,
    /// `(det j)^(l/2)` with `l/2 = k d^(k-1)`.
    pub jacobian_det_rhs: f64,
    pub jacobian_rel_error: f64,
}

fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Checks that the volume density has weight -1 under the coordinate change
/// with Jacobian `j`, and that `det flat(J) = (det j)^(k d^(k-1))`.
pub fn density_transform_check(t: &Tensor, j: &DMatrix<f64>) -> Result<DensityReport> {
    let k = t.half_degree()?;
    let adm = admissibility(k, t.dim());
    if adm.m.is_none() {
        return Err(Error::Admissibility { k, d: t.dim() });
    }
    let det_j = j.determinant();
    if det_j == 0.0 {
        return Err(Error::singular("Jacobian determinant vanishes"));
    }
    let transformed = transform_form(t, j)?;
    let density_lhs = volume_density(&transformed, &adm)?;
    let density_rhs = volume_density(t, &adm)? / det_j.abs();
    let jacobian_det_lhs = overline_det(&tensor_power(j, k)?)?;
    let jacobian_det_rhs = det_j.powi((adm.l / 2) as i32);
    Ok(DensityReport {
        density_lhs,
        density_rhs,
        density_rel_error: rel_err(density_lhs, density_rhs),
        jacobian_det_lhs,
        jacobian_det_rhs,
        jacobian_rel_error: rel_err(jacobian_det_lhs, jacobian_det_rhs),
    })
}

/// Result of the induced-form nondegeneracy test.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Nondegeneracy {
    pub nondegenerate: bool,
    pub rank: usize,
}

/// Relative tolerance used for numerical rank decisions.
pub const RANK_TOL: f64 = 1e-10;

pub(crate) fn numerical_rank(m: &DMatrix<f64>, scale: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let tol = RANK_TOL * scale.max(f64::MIN_POSITIVE);
    m.singular_values().iter().filter(|&&s| s > tol).count()
}

/// Flat image `chi_(nd)((dx)^{(x)k})`, an `n^k x d^k` matrix.
pub fn flat_codifferential(dx: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let (n, d) = (dx.nrows(), dx.ncols());
    let on = FlatOrdering::d_adic(k, n);
    let od = FlatOrdering::d_adic(k, d);
    DMatrix::from_fn(on.size(), od.size(), |a, b| {
        let ai = on.decode(a);
        let bi = od.decode(b);
        ai.iter().zip(&bi).map(|(&r, &c)| dx[(r, c)]).product()
    })
}

/// Tests whether the pullback of an ambient `2k`-form along an embedding with
/// differential `dx` (`n x d`) is nondegenerate, by the rank of
/// `Lambda_b = A^T Lambda_s A`.
pub fn induced_nondegeneracy(theta_ambient: &Tensor, dx: &DMatrix<f64>, k: usize) -> Result<Nondegeneracy> {
    if theta_ambient.half_degree()? != k {
        return Err(Error::Degree(format!(
            "expected degree {}, got {}",
            2 * k,
            theta_ambient.degree()
        )));
    }
    if dx.nrows() != theta_ambient.dim() {
        return Err(Error::Shape(format!(
            "differential has {} rows, ambient dimension is {}",
            dx.nrows(),
            theta_ambient.dim()
        )));
    }
    let dx_norm = dx.norm();
    if numerical_rank(dx, dx_norm) < dx.ncols() {
        return Err(Error::Embedding(
            "differential is rank deficient, the map is not an immersion".into(),
        ));
    }
    let a = flat_codifferential(dx, k);
    let lambda_s = flatten(theta_ambient)?.matrix;
    let lambda_b = a.transpose() * &lambda_s * &a;
    let scale = lambda_s.norm() * a.norm().powi(2);
    let rank = numerical_rank(&lambda_b, scale);
    Ok(Nondegeneracy {
        nondegenerate: rank == a.ncols(),
        rank,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(v: &[f64]) -> Tensor {
        Tensor::from_matrix(&DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(v))).unwrap()
    }

    #[test]
    fn k1_flatten_is_identity_layout() {
        let t = diag(&[2.0, 3.0]);
        let v = flatten(&t).unwrap();
        assert_eq!(v.matrix, DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 3.0]));
    }

    #[test]
    fn unit_flattens_to_identity() {
        let e = Tensor::identity(2, 2);
        assert_eq!(flatten(&e).unwrap().matrix, DMatrix::identity(4, 4));
        assert_eq!(overline_det(&e).unwrap(), 1.0);
    }

    #[test]
    fn odd_degree_rejected() {
        let t = Tensor::zeros(3, 2);
        assert!(matches!(flatten(&t), Err(Error::Degree(_))));
        assert!(matches!(overline_det(&t), Err(Error::Degree(_))));
    }

    #[test]
    fn wrong_component_count_rejected() {
        assert!(matches!(Tensor::new(2, 2, vec![1.0; 3]), Err(Error::Shape(_))));
    }

    #[test]
    fn multiply_shape_mismatch() {
        let a = Tensor::identity(1, 2);
        let b = Tensor::identity(1, 3);
        assert!(matches!(flat_multiply(&a, &b), Err(Error::Shape(_))));
    }

    #[test]
    fn ordering_round_trip() {
        for (k, d) in [(1, 1), (1, 4), (2, 3), (3, 2)] {
            let o = FlatOrdering::d_adic(k, d);
            for a in 0..o.size() {
                assert_eq!(o.encode(&o.decode(a)), a);
            }
        }
        // first index is the least significant digit
        assert_eq!(FlatOrdering::d_adic(2, 3).encode(&[1, 0]), 1);
        assert_eq!(FlatOrdering::d_adic(2, 3).encode(&[0, 1]), 3);
    }

    #[test]
    fn determinant_examples() {
        assert_eq!(overline_det(&diag(&[2.0, 3.0])).unwrap(), 6.0);
        let j = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        let jj = tensor_power(&j, 2).unwrap();
        assert!((overline_det(&jj).unwrap() - 16.0).abs() < 1e-12);
    }

    #[test]
    fn inverse_of_unit_and_euclidean() {
        let e = Tensor::identity(2, 3);
        assert_eq!(flat_inverse(&e).unwrap(), e);
        let g = diag(&[1.0, 1.0]);
        assert_eq!(flat_inverse(&g).unwrap(), g);
    }

    #[test]
    fn singular_inverse_rejected() {
        let t = diag(&[1.0, 0.0]);
        assert!(matches!(flat_inverse(&t), Err(Error::Singular { .. })));
        let tiny = diag(&[1.0, 1e-13]);
        assert!(matches!(flat_inverse(&tiny), Err(Error::Singular { .. })));
    }

    #[test]
    fn admissibility_examples() {
        let a = admissibility(1, 5);
        assert_eq!((a.m, a.l, a.p), (Some(0), 2, 1));
        let a = admissibility(2, 2);
        assert_eq!((a.m, a.l, a.p), (Some(0), 8, 4));
        let a = admissibility(3, 2);
        assert_eq!(a.m, None);
        assert_eq!(a.l, 24);
    }

    #[test]
    fn volume_density_examples() {
        let adm = admissibility(1, 2);
        assert_eq!(volume_density(&diag(&[1.0, 1.0]), &adm).unwrap(), 1.0);
        assert!((volume_density(&diag(&[4.0, 9.0]), &adm).unwrap() - 6.0).abs() < 1e-14);
        // k = 2, d = 2: flat determinant 256 -> 256^(1/8) = 2
        let j = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 2.0]);
        let t = tensor_power(&j, 2).unwrap();
        assert!((overline_det(&t).unwrap() - 256.0).abs() < 1e-9);
        let adm = admissibility(2, 2);
        assert!((volume_density(&t, &adm).unwrap() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn volume_density_errors() {
        let t = Tensor::identity(3, 2);
        assert!(matches!(
            volume_density(&t, &admissibility(3, 2)),
            Err(Error::Admissibility { k: 3, d: 2 })
        ));
        let z = diag(&[0.0, 1.0]);
        assert!(matches!(
            volume_density(&z, &admissibility(1, 2)),
            Err(Error::Singular { .. })
        ));
    }

    #[test]
    fn density_check_identity_has_no_residual() {
        let t = diag(&[2.0, 5.0]);
        let r = density_transform_check(&t, &DMatrix::identity(2, 2)).unwrap();
        assert_eq!(r.density_rel_error, 0.0);
        assert_eq!(r.jacobian_rel_error, 0.0);
    }

    #[test]
    fn density_check_scaling() {
        let t = Tensor::identity(2, 2);
        let j = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        let r = density_transform_check(&t, &j).unwrap();
        assert!((r.jacobian_det_lhs - 16.0).abs() < 1e-12);
        assert!(r.density_rel_error < 1e-14);
    }

    #[test]
    fn minkowski_null_line_is_degenerate() {
        let eta = diag(&[-1.0, 1.0, 1.0]);
        let dx = DMatrix::from_column_slice(3, 1, &[1.0, 1.0, 0.0]);
        let r = induced_nondegeneracy(&eta, &dx, 1).unwrap();
        assert_eq!(r, Nondegeneracy { nondegenerate: false, rank: 0 });
    }

    #[test]
    fn euclidean_orthonormal_frame_is_nondegenerate() {
        let eta = diag(&[1.0, 1.0, 1.0]);
        let c = std::f64::consts::FRAC_1_SQRT_2;
        let dx = DMatrix::from_column_slice(3, 2, &[c, c, 0.0, 0.0, 0.0, 1.0]);
        let r = induced_nondegeneracy(&eta, &dx, 1).unwrap();
        assert_eq!(r, Nondegeneracy { nondegenerate: true, rank: 2 });
    }

    #[test]
    fn rank_deficient_differential_is_not_an_embedding() {
        let eta = diag(&[1.0, 1.0]);
        let dx = DMatrix::from_column_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(
            induced_nondegeneracy(&eta, &dx, 1),
            Err(Error::Embedding(_))
        ));
    }

    #[test]
    fn tensor_json_round_trip_and_validation() {
        let t = Tensor::identity(1, 2);
        let s = serde_json::to_string(&t).unwrap();
        assert_eq!(s, r#"{"degree":2,"dim":2,"components":[1.0,0.0,0.0,1.0]}"#);
        let back: Tensor = serde_json::from_str(&s).unwrap();
        assert_eq!(back, t);
        assert!(serde_json::from_str::<Tensor>(r#"{"degree":2,"dim":2,"components":[1.0]}"#).is_err());
    }
}
