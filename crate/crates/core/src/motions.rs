//! Lie derivatives of ambient forms, generalized Killing checks and the
//! symplectic gauge identity `L_A omega = d(i_A omega)`.

use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forms::Tensor;
use crate::geometry::{self, AmbientMetric, EmbeddingField, FD_STEP};

/// Real polynomial in `m` variables as a list of `(coefficient, exponents)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    pub vars: usize,
    pub terms: Vec<(f64, Vec<u32>)>,
}

impl Polynomial {
    pub fn new(vars: usize, terms: Vec<(f64, Vec<u32>)>) -> Result<Self> {
        if terms.iter().any(|(_, e)| e.len() != vars) {
            return Err(Error::Shape(format!("monomial exponents must have {vars} entries")));
        }
        Ok(Polynomial { vars, terms })
    }

    pub fn constant(vars: usize, c: f64) -> Self {
        Polynomial {
            vars,
            terms: vec![(c, vec![0; vars])],
        }
    }

    /// The coordinate function `x^i`.
    pub fn coordinate(vars: usize, i: usize) -> Self {
        let mut e = vec![0; vars];
        e[i] = 1;
        Polynomial {
            vars,
            terms: vec![(1.0, e)],
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(c, e)| c * e.iter().zip(x).map(|(&p, &v)| v.powi(p as i32)).product::<f64>())
            .sum()
    }

    pub fn derivative(&self, i: usize) -> Polynomial {
        let terms = self
            .terms
            .iter()
            .filter(|(_, e)| e[i] > 0)
            .map(|(c, e)| {
                let mut e2 = e.clone();
                e2[i] -= 1;
                (c * e[i] as f64, e2)
            })
            .collect();
        Polynomial { vars: self.vars, terms }
    }

    pub fn scale(&self, s: f64) -> Polynomial {
        Polynomial {
            vars: self.vars,
            terms: self.terms.iter().map(|(c, e)| (c * s, e.clone())).collect(),
        }
    }
}

type VecFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;
type JacFn = dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync;

/// Vector field on an `n`-dimensional chart with optional analytic Jacobian
/// `J[(B, A)] = d v^B / d x^A`.
#[derive(Clone)]
pub struct VectorField {
    n: usize,
    eval: Arc<VecFn>,
    jacobian: Option<Arc<JacFn>>,
}

impl std::fmt::Debug for VectorField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("VectorField")
            .field("n", &self.n)
            .field("analytic_jacobian", &self.jacobian.is_some())
            .finish()
    }
}

impl VectorField {
    pub fn from_fn(n: usize, eval: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        VectorField {
            n,
            eval: Arc::new(eval),
            jacobian: None,
        }
    }

    pub fn with_jacobian(mut self, j: impl Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static) -> Self {
        self.jacobian = Some(Arc::new(j));
        self
    }

    /// `v(x) = m x + b`.
    pub fn affine(m: DMatrix<f64>, b: Vec<f64>) -> Result<Self> {
        if !m.is_square() || m.nrows() != b.len() {
            return Err(Error::Shape("affine field needs a square matrix and matching offset".into()));
        }
        let n = b.len();
        let mm = m.clone();
        Ok(VectorField::from_fn(n, move |x| {
            (0..n).map(|r| b[r] + (0..n).map(|c| mm[(r, c)] * x[c]).sum::<f64>()).collect()
        })
        .with_jacobian(move |_| m.clone()))
    }

    /// Polynomial components with their exact Jacobian.
    pub fn polynomial(components: Vec<Polynomial>) -> Result<Self> {
        let n = components.len();
        if components.iter().any(|p| p.vars != n) {
            return Err(Error::Shape("polynomial field components must use n variables".into()));
        }
        let derivs: Vec<Vec<Polynomial>> = components
            .iter()
            .map(|p| (0..n).map(|a| p.derivative(a)).collect())
            .collect();
        let comps = components.clone();
        Ok(VectorField::from_fn(n, move |x| comps.iter().map(|p| p.eval(x)).collect())
            .with_jacobian(move |x| DMatrix::from_fn(n, n, |b, a| derivs[b][a].eval(x))))
    }

    /// Hamiltonian field of `h` on `(q_1..q_m, p_1..p_m)`: `(dh/dp, -dh/dq)`,
    /// so that `i_A omega = dh` for the canonical form.
    pub fn hamiltonian(h: &Polynomial) -> Result<Self> {
        if h.vars % 2 == 1 {
            return Err(Error::Shape("phase space dimension must be even".into()));
        }
        let m = h.vars / 2;
        let comps = (0..h.vars)
            .map(|i| if i < m { h.derivative(i + m) } else { h.derivative(i - m).scale(-1.0) })
            .collect();
        VectorField::polynomial(comps)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn has_analytic_jacobian(&self) -> bool {
        self.jacobian.is_some()
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        (self.eval)(x)
    }

    pub fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        match &self.jacobian {
            Some(j) => j(x),
            None => self.jacobian_fd(x, FD_STEP),
        }
    }

    /// Central-difference Jacobian with step `rel_step` times the coordinate scale.
    pub fn jacobian_fd(&self, x: &[f64], rel_step: f64) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        let mut xp = x.to_vec();
        for a in 0..self.n {
            let h = rel_step * x[a].abs().max(1.0);
            xp[a] = x[a] + h;
            let plus = self.eval(&xp);
            xp[a] = x[a] - h;
            let minus = self.eval(&xp);
            xp[a] = x[a];
            for b in 0..self.n {
                m[(b, a)] = (plus[b] - minus[b]) / (2.0 * h);
            }
        }
        m
    }

    /// `a v + b w`.
    pub fn combine(a: f64, v: &VectorField, b: f64, w: &VectorField) -> Result<Self> {
        if v.n != w.n {
            return Err(Error::Shape("fields over different dimensions".into()));
        }
        let (v1, w1) = (v.clone(), w.clone());
        let out = VectorField::from_fn(v.n, move |x| {
            v1.eval(x).iter().zip(w1.eval(x)).map(|(p, q)| a * p + b * q).collect()
        });
        Ok(match (v.jacobian.is_some(), w.jacobian.is_some()) {
            (true, true) => {
                let (v2, w2) = (v.clone(), w.clone());
                out.with_jacobian(move |x| v2.jacobian(x) * a + w2.jacobian(x) * b)
            }
            _ => out,
        })
    }
}

/// How derivatives of the form and the field are obtained.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum Derivatives {
    /// Analytic when available, central differences otherwise.
    #[default]
    Preferred,
    /// Central differences with the given relative step.
    FiniteDifference(f64),
}

/// `(L_v Theta)` at every point.
pub fn lie_derivative(theta: &AmbientMetric, v: &VectorField, points: &[Vec<f64>]) -> Result<Vec<Tensor>> {
    lie_derivative_with(theta, v, points, Derivatives::Preferred)
}

pub fn lie_derivative_with(
    theta: &AmbientMetric,
    v: &VectorField,
    points: &[Vec<f64>],
    how: Derivatives,
) -> Result<Vec<Tensor>> {
    if theta.dim() != v.dim() {
        return Err(Error::Shape(format!(
            "form over {} and field over {}",
            theta.dim(),
            v.dim()
        )));
    }
    points
        .par_iter()
        .map(|x| {
            if x.len() != v.dim() {
                return Err(Error::Shape("sample point has the wrong dimension".into()));
            }
            let t = theta.eval(x)?;
            let (grad, jac) = match how {
                Derivatives::Preferred => (theta.gradient(x)?, v.jacobian(x)),
                Derivatives::FiniteDifference(h) => (theta.gradient_fd_step(x, h)?, v.jacobian_fd(x, h)),
            };
            let vx = v.eval(x);
            let mut out = Tensor::zeros(t.degree(), t.dim());
            for (vb, gb) in vx.iter().zip(&grad) {
                out.axpy(*vb, gb)?;
            }
            let shape = vec![t.dim(); t.degree()];
            for slot in 0..t.degree() {
                let (data, _) = geometry::contract_slot(t.components(), &shape, slot, &jac);
                for (o, d) in out.components_mut().iter_mut().zip(data) {
                    *o += d;
                }
            }
            Ok(out)
        })
        .collect()
}

/// Forms with a Frobenius norm below this are excluded from conformal fits.
pub const CONFORMAL_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KillingReport {
    pub residual: Vec<Tensor>,
    pub max_norm: f64,
    pub mean_norm: f64,
    /// Fitted conformal factor per point (conformal mode only); `None` at
    /// flagged points.
    pub phi: Option<Vec<Option<f64>>>,
    /// Indices of points where the conformal fit is ill-posed.
    pub flagged: Vec<usize>,
    pub tolerance: f64,
    pub is_motion: bool,
}

/// Residual of the (conformal) Killing equation at the sample points; the
/// norm is the largest absolute component.
pub fn killing_residual(
    theta: &AmbientMetric,
    v: &VectorField,
    points: &[Vec<f64>],
    conformal: bool,
    tolerance: f64,
) -> Result<KillingReport> {
    let lie = lie_derivative(theta, v, points)?;
    let mut residual = Vec::with_capacity(lie.len());
    let mut phi = Vec::with_capacity(lie.len());
    let mut flagged = Vec::new();
    for (i, (l, x)) in lie.into_iter().zip(points).enumerate() {
        if conformal {
            let t = theta.eval(x)?;
            let nn = t.pairing(&t)?;
            if nn.sqrt() < CONFORMAL_FLOOR {
                flagged.push(i);
                phi.push(None);
                residual.push(l);
                continue;
            }
            let f = l.pairing(&t)? / nn;
            let mut r = l;
            r.axpy(-f, &t)?;
            phi.push(Some(f));
            residual.push(r);
        } else {
            residual.push(l);
        }
    }
    let norms: Vec<f64> = residual
        .iter()
        .enumerate()
        .filter(|(i, _)| !flagged.contains(i))
        .map(|(_, r)| r.norm_inf())
        .collect();
    let max_norm = norms.iter().cloned().fold(0.0, f64::max);
    let mean_norm = if norms.is_empty() { 0.0 } else { norms.iter().sum::<f64>() / norms.len() as f64 };
    Ok(KillingReport {
        residual,
        max_norm,
        mean_norm,
        phi: conformal.then_some(phi),
        flagged,
        tolerance,
        is_motion: max_norm <= tolerance,
    })
}

/// Tensor-product sample of the box `[lo, hi]`.
pub fn sample_box(lo: &[f64], hi: &[f64], counts: &[usize]) -> Result<Vec<Vec<f64>>> {
    if lo.len() != hi.len() || lo.len() != counts.len() || counts.iter().any(|&c| c == 0) {
        return Err(Error::Shape("sample box bounds and counts must agree".into()));
    }
    let total: usize = counts.iter().product();
    Ok((0..total)
        .map(|mut k| {
            let mut p = vec![0.0; lo.len()];
            for a in (0..lo.len()).rev() {
                let i = k % counts[a];
                k /= counts[a];
                p[a] = if counts[a] == 1 {
                    0.5 * (lo[a] + hi[a])
                } else {
                    lo[a] + (hi[a] - lo[a]) * i as f64 / (counts[a] - 1) as f64
                };
            }
            p
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MotionCheck {
    /// `max |Theta_B^t - Theta_B^0|` per slice.
    pub per_slice: Vec<f64>,
    pub tolerance: f64,
    pub is_motion: bool,
}

/// A history is a motion when its pulled-back form does not change.
pub fn history_motion_check(history: &[EmbeddingField], theta: &AmbientMetric, tolerance: f64) -> Result<MotionCheck> {
    if history.len() < 2 {
        return Err(Error::History("a motion check needs at least two slices".into()));
    }
    if history.iter().any(|e| e.grid() != history[0].grid()) {
        return Err(Error::Shape("history slices use different grids".into()));
    }
    let pulled = history
        .iter()
        .map(|e| geometry::pullback(e, theta))
        .collect::<Result<Vec<_>>>()?;
    let per_slice = pulled
        .iter()
        .map(|p| Ok(p.sub(&pulled[0])?.norm_inf()))
        .collect::<Result<Vec<f64>>>()?;
    let worst = per_slice.iter().cloned().fold(0.0, f64::max);
    Ok(MotionCheck {
        per_slice,
        tolerance,
        is_motion: worst <= tolerance,
    })
}

/// History obtained by explicit Euler steps of the flow of `v`.
pub fn euler_flow(start: &EmbeddingField, v: &VectorField, dt: f64, steps: usize) -> Result<Vec<EmbeddingField>> {
    if start.ambient_dim() != v.dim() {
        return Err(Error::Shape("field and embedding dimensions differ".into()));
    }
    let mut out = vec![start.clone()];
    for _ in 0..steps {
        let last = out.last().expect("non-empty");
        let next = last.map_points(|p| p.iter().zip(v.eval(p)).map(|(x, vx)| x + dt * vx).collect())?;
        out.push(next);
    }
    Ok(out)
}

/// Canonical symplectic matrix on `(q_1..q_m, p_1..p_m)`: `omega(q_i, p_i) = 1`.
pub fn canonical_omega(dim: usize) -> Result<DMatrix<f64>> {
    if dim == 0 || dim % 2 == 1 {
        return Err(Error::Shape(format!("phase space dimension {dim} is not even and positive")));
    }
    let m = dim / 2;
    let mut w = DMatrix::zeros(dim, dim);
    for i in 0..m {
        w[(i, i + m)] = 1.0;
        w[(i + m, i)] = -1.0;
    }
    Ok(w)
}

/// `(i_A omega)_j = A^k omega_kj`.
pub fn contract_omega(a: &[f64], omega: &DMatrix<f64>) -> Vec<f64> {
    (0..a.len()).map(|j| (0..a.len()).map(|k| a[k] * omega[(k, j)]).sum()).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SymplecticReport {
    /// `L_A omega` from the field Jacobian.
    pub f_hat: Vec<DMatrix<f64>>,
    /// `d(i_A omega)` by central differences of the one-form.
    pub d_a_hat: Vec<DMatrix<f64>>,
    pub max_discrepancy: f64,
    /// Largest `|F + F^T|` entry.
    pub antisymmetry: f64,
    /// Largest component of `dF` by central differences.
    pub closedness: f64,
}

fn lie_omega(a: &VectorField, omega: &DMatrix<f64>, x: &[f64]) -> DMatrix<f64> {
    let j = a.jacobian(x);
    j.transpose() * omega + omega * j
}

/// Both sides of Cartan's identity for a constant form `omega` at the points.
pub fn symplectic_demo(a: &VectorField, omega: &DMatrix<f64>, points: &[Vec<f64>]) -> Result<SymplecticReport> {
    let n = a.dim();
    if omega.nrows() != n || omega.ncols() != n {
        return Err(Error::Shape("omega must be n x n".into()));
    }
    let per_point = points
        .par_iter()
        .map(|x| {
            let f = lie_omega(a, omega, x);
            let mut da = DMatrix::zeros(n, n);
            let mut df: f64 = 0.0;
            let mut xp = x.clone();
            let mut dfs = Vec::with_capacity(n);
            for i in 0..n {
                let h = FD_STEP * x[i].abs().max(1.0);
                xp[i] = x[i] + h;
                let ap = contract_omega(&a.eval(&xp), omega);
                let fp = lie_omega(a, omega, &xp);
                xp[i] = x[i] - h;
                let am = contract_omega(&a.eval(&xp), omega);
                let fm = lie_omega(a, omega, &xp);
                xp[i] = x[i];
                for j in 0..n {
                    // d_i A^_j; the exterior derivative antisymmetrizes below
                    da[(i, j)] = (ap[j] - am[j]) / (2.0 * h);
                }
                dfs.push((fp - fm) / (2.0 * h));
            }
            let da = &da - da.transpose();
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        let v = dfs[i][(j, k)] + dfs[j][(k, i)] + dfs[k][(i, j)];
                        df = df.max(v.abs());
                    }
                }
            }
            (f, da, df)
        })
        .collect::<Vec<_>>();
    let mut report = SymplecticReport {
        f_hat: Vec::with_capacity(points.len()),
        d_a_hat: Vec::with_capacity(points.len()),
        max_discrepancy: 0.0,
        antisymmetry: 0.0,
        closedness: 0.0,
    };
    for (f, da, df) in per_point {
        report.max_discrepancy = report.max_discrepancy.max((&f - &da).amax());
        report.antisymmetry = report.antisymmetry.max((&f + f.transpose()).amax());
        report.closedness = report.closedness.max(df);
        report.f_hat.push(f);
        report.d_a_hat.push(da);
    }
    Ok(report)
}
