//! Discrete action, Euler-Lagrange residuals and the static / evolutional solvers.
//!
//! The action is a trapezoid sum over the body grid (and over time slices in
//! the evolutional case) of `(F_0 + U) e varpi`. Spatial derivatives use the
//! summation-by-parts stencil, so the residual is the exact discrete gradient
//! of the action rescaled by the quadrature weights:
//!
//! `r_i = -(1 / (w_i e varpi_i)) dA/dx_i = div_h Sigma + f_Theta + f_ext`.
//!
//! Kinetic terms live on time cells: the rate is the difference quotient of
//! consecutive slices and the cell form is their average.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::{EnergyModel, LameTable, VolumeWeight};
use crate::error::{Error, Result};
use crate::forms::{self, FlatOrdering, FlatView, Tensor};
use crate::geometry::{self, AmbientMetric, BodyGrid, EmbeddingField, Face, Stencil};

/// Row of a solver trace.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub action: f64,
    pub grad_norm: f64,
}

/// Affine constraint surface `{x : n_i . (x - point) = 0}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlidingChart {
    pub point: Vec<f64>,
    pub normals: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryCondition {
    Pinned,
    Free,
    Sliding(SlidingChart),
    /// Prescribed variations; parsed but not supported by the solvers.
    Given,
}

impl BoundaryCondition {
    pub fn name(&self) -> &'static str {
        match self {
            BoundaryCondition::Pinned => "pinned",
            BoundaryCondition::Free => "free",
            BoundaryCondition::Sliding(_) => "sliding",
            BoundaryCondition::Given => "given",
        }
    }
}

/// Per-face conditions; faces not listed use `default`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundarySpec {
    pub default: BoundaryCondition,
    pub faces: Vec<(Face, BoundaryCondition)>,
}

impl Default for BoundarySpec {
    fn default() -> Self {
        BoundarySpec::pinned()
    }
}

impl BoundarySpec {
    pub fn pinned() -> Self {
        BoundarySpec {
            default: BoundaryCondition::Pinned,
            faces: Vec::new(),
        }
    }

    pub fn with_face(mut self, face: Face, c: BoundaryCondition) -> Self {
        self.faces.retain(|(f, _)| *f != face);
        self.faces.push((face, c));
        self
    }

    pub fn condition(&self, face: Face) -> &BoundaryCondition {
        self.faces
            .iter()
            .find(|(f, _)| *f == face)
            .map_or(&self.default, |(_, c)| c)
    }
}

/// Uniform time axis with `slices` samples including both ends.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeAxis {
    pub t0: f64,
    pub t1: f64,
    pub slices: usize,
}

impl TimeAxis {
    pub fn dt(&self) -> f64 {
        (self.t1 - self.t0) / (self.slices - 1) as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.slices).map(|i| self.t0 + i as f64 * self.dt()).collect()
    }

    fn weights(&self) -> Vec<f64> {
        let dt = self.dt();
        (0..self.slices)
            .map(|i| if i == 0 || i + 1 == self.slices { 0.5 * dt } else { dt })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Mode {
    Static { initial: EmbeddingField },
    /// `history` holds the initial guess for every slice; the end slices are
    /// held fixed.
    Evolution { time: TimeAxis, history: Vec<EmbeddingField> },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-8,
            max_iters: 20_000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub ambient: AmbientMetric,
    /// Reference embedding `x_0`; its pullback is the background form.
    pub reference: EmbeddingField,
    pub model: EnergyModel,
    pub boundary: BoundarySpec,
    pub weight: VolumeWeight,
    /// Constant time metric `e`.
    pub time_metric: f64,
    /// Optional per-node factor on the elastic energy (inhomogeneous bodies).
    pub stiffness: Option<Vec<f64>>,
    pub solver: SolverOptions,
    pub mode: Mode,
}

impl Scenario {
    pub fn new_static(ambient: AmbientMetric, reference: EmbeddingField, model: EnergyModel, initial: EmbeddingField) -> Self {
        Scenario {
            ambient,
            reference,
            model,
            boundary: BoundarySpec::pinned(),
            weight: VolumeWeight::default(),
            time_metric: 1.0,
            stiffness: None,
            solver: SolverOptions::default(),
            mode: Mode::Static { initial },
        }
    }

    pub fn grid(&self) -> &BodyGrid {
        self.reference.grid()
    }

    pub fn is_static(&self) -> bool {
        matches!(self.mode, Mode::Static { .. })
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.ambient.dim();
        if self.reference.ambient_dim() != n {
            return Err(Error::Shape(format!(
                "reference embeds into dimension {}, ambient has {n}",
                self.reference.ambient_dim()
            )));
        }
        self.model.check_ambient(n)?;
        if !(self.time_metric > 0.0) {
            return Err(Error::Shape("time metric must be positive".into()));
        }
        if let Some(s) = &self.stiffness {
            if s.len() != self.grid().len() {
                return Err(Error::Shape("stiffness field length differs from node count".into()));
            }
        }
        for face in self.grid().faces() {
            match self.boundary.condition(face) {
                BoundaryCondition::Given => {
                    return Err(Error::Unsupported(format!(
                        "boundary condition 'given variations' on face {face}"
                    )))
                }
                BoundaryCondition::Sliding(c) => {
                    if c.point.len() != n || c.normals.is_empty() || c.normals.iter().any(|v| v.len() != n) {
                        return Err(Error::Shape(format!("sliding chart on face {face} does not match dimension {n}")));
                    }
                }
                _ => {}
            }
        }
        let check = |e: &EmbeddingField| {
            if e.grid() != self.grid() || e.ambient_dim() != n {
                Err(Error::Shape("candidate grid or ambient dimension differs from the reference".into()))
            } else {
                Ok(())
            }
        };
        match &self.mode {
            Mode::Static { initial } => check(initial),
            Mode::Evolution { time, history } => {
                if time.slices < 2 || history.len() != time.slices {
                    return Err(Error::History(format!(
                        "time axis with {} slices and a history of {}",
                        time.slices,
                        history.len()
                    )));
                }
                if !(time.t1 > time.t0) {
                    return Err(Error::History("time interval is empty".into()));
                }
                history.iter().try_for_each(check)
            }
        }
    }

    fn slice_weights(&self) -> Vec<f64> {
        match &self.mode {
            Mode::Static { .. } => vec![1.0],
            Mode::Evolution { time, .. } => time.weights(),
        }
    }
}

/// How a node moves during a solve.
#[derive(Clone, Debug)]
enum NodeKind {
    Fixed,
    Free,
    /// Orthogonal projector onto the tangent space of the sliding chart.
    Tangent(DMatrix<f64>, SlidingChart),
}

fn tangent_projector(normals: &[Vec<f64>], n: usize) -> DMatrix<f64> {
    let nm = DMatrix::from_fn(n, normals.len(), |r, c| normals[c][r]);
    let gram = nm.transpose() * &nm;
    let pinv = gram.pseudo_inverse(1e-12).expect("pseudo inverse");
    DMatrix::identity(n, n) - &nm * pinv * nm.transpose()
}

fn node_kinds(s: &Scenario) -> Vec<NodeKind> {
    let grid = s.grid();
    let n = s.ambient.dim();
    (0..grid.len())
        .map(|i| {
            let faces = grid.faces_of(i);
            if faces.is_empty() {
                return NodeKind::Free;
            }
            let conds: Vec<&BoundaryCondition> = faces.iter().map(|f| s.boundary.condition(*f)).collect();
            if conds.iter().any(|c| matches!(c, BoundaryCondition::Pinned | BoundaryCondition::Given)) {
                return NodeKind::Fixed;
            }
            let charts: Vec<&SlidingChart> = conds
                .iter()
                .filter_map(|c| match c {
                    BoundaryCondition::Sliding(ch) => Some(ch),
                    _ => None,
                })
                .collect();
            if charts.is_empty() {
                return NodeKind::Free;
            }
            let normals: Vec<Vec<f64>> = charts.iter().flat_map(|c| c.normals.clone()).collect();
            let chart = SlidingChart {
                point: charts[0].point.clone(),
                normals,
            };
            NodeKind::Tangent(tangent_projector(&chart.normals, n), chart)
        })
        .collect()
}

/// Moves a point onto an affine chart along the chart normals.
fn project_onto_chart(p: &mut [f64], proj: &DMatrix<f64>, chart: &SlidingChart) {
    let rel: Vec<f64> = p.iter().zip(&chart.point).map(|(a, b)| a - b).collect();
    for (r, pr) in p.iter_mut().enumerate() {
        *pr = chart.point[r] + (0..rel.len()).map(|c| proj[(r, c)] * rel[c]).sum::<f64>();
    }
}

/// Grid data shared by every evaluation of one scenario.
struct Prepared {
    n: usize,
    p: usize,
    stencils: Vec<Vec<Vec<(usize, f64)>>>,
    weights: Vec<f64>,
    slice_weights: Vec<f64>,
    dt: f64,
    e: f64,
    theta0: Vec<DMatrix<f64>>,
    g: Vec<DMatrix<f64>>,
    varpi0: Vec<f64>,
    ordering: FlatOrdering,
    l: f64,
    stiffness: Vec<f64>,
}

fn prepare(s: &Scenario) -> Result<Prepared> {
    s.validate()?;
    let grid = s.grid();
    let p = s.ambient.degree();
    let k = p / 2;
    if p == 0 || p % 2 == 1 {
        return Err(Error::Degree(format!("ambient form degree {p} is not even")));
    }
    let adm = forms::admissibility(k, grid.dim());
    if !adm.is_admissible() {
        return Err(Error::Admissibility { k, d: grid.dim() });
    }
    let theta0_b = geometry::pullback_with(&s.reference, &s.ambient, Stencil::SummationByParts)?;
    let mut theta0 = Vec::with_capacity(grid.len());
    let mut g = Vec::with_capacity(grid.len());
    let mut varpi0 = Vec::with_capacity(grid.len());
    for (i, t) in theta0_b.values.iter().enumerate() {
        let at = |e: Error| e.at(format!("node {:?}", grid.multi_index(i)));
        g.push(forms::flatten(&forms::flat_inverse(t).map_err(at)?)?.matrix);
        varpi0.push(forms::volume_density(t, &adm).map_err(at)?);
        theta0.push(forms::flatten(t)?.matrix);
    }
    let dt = match &s.mode {
        Mode::Static { .. } => 1.0,
        Mode::Evolution { time, .. } => time.dt(),
    };
    Ok(Prepared {
        n: s.ambient.dim(),
        p,
        stencils: grid.stencils(Stencil::SummationByParts),
        weights: grid.weights(),
        slice_weights: s.slice_weights(),
        dt,
        e: s.time_metric,
        theta0,
        g,
        varpi0,
        ordering: FlatOrdering::d_adic(k, grid.dim()),
        l: adm.l as f64,
        stiffness: s.stiffness.clone().unwrap_or_else(|| vec![1.0; grid.len()]),
    })
}

/// Per-node geometric state of one slice.
struct NodeState {
    dx: DMatrix<f64>,
    theta: Tensor,
    flat: DMatrix<f64>,
}

fn differential_at(prep: &Prepared, e: &EmbeddingField, i: usize) -> DMatrix<f64> {
    let d = prep.stencils[i].len();
    let mut m = DMatrix::zeros(prep.n, d);
    for (axis, st) in prep.stencils[i].iter().enumerate() {
        for &(j, c) in st {
            for (a, x) in e.point(j).iter().enumerate() {
                m[(a, axis)] += c * x;
            }
        }
    }
    m
}

fn pullback_flat(prep: &Prepared, theta: &Tensor, dx: &DMatrix<f64>) -> DMatrix<f64> {
    if prep.p == 2 {
        let t = DMatrix::from_row_slice(prep.n, prep.n, theta.components());
        dx.transpose() * t * dx
    } else {
        forms::flatten(&geometry::pullback_tensor(theta, dx))
            .expect("even degree")
            .matrix
    }
}

fn slice_states(s: &Scenario, prep: &Prepared, e: &EmbeddingField) -> Result<Vec<NodeState>> {
    (0..e.grid().len())
        .into_par_iter()
        .map(|i| {
            let dx = differential_at(prep, e, i);
            let theta = s.ambient.eval(e.point(i))?;
            let flat = pullback_flat(prep, &theta, &dx);
            Ok(NodeState { dx, theta, flat })
        })
        .collect()
}

/// Weight and `(ln varpi)_{|Delta}` (flat) of a flat pulled-back form.
fn weight_terms(s: &Scenario, prep: &Prepared, flat: &DMatrix<f64>, node: usize) -> Result<(f64, Option<DMatrix<f64>>)> {
    match s.weight {
        VolumeWeight::Background => Ok((prep.varpi0[node], None)),
        VolumeWeight::Current => {
            let lu = flat.clone().lu();
            let det = lu.determinant();
            if !(det.abs() > 0.0) || !det.is_finite() {
                return Err(Error::singular("pulled-back form has zero flat determinant"));
            }
            let inv = lu.try_inverse().ok_or_else(|| Error::singular("pulled-back form is not invertible"))?;
            Ok((det.abs().powf(1.0 / prep.l), Some(inv.transpose() / prep.l)))
        }
    }
}

/// `Sigma~^beta_A`: the pairing of a contravariant `P` with the derivative of
/// the pullback with respect to `Dx^A_beta`.
fn sigma_tilde(prep: &Prepared, p_flat: &DMatrix<f64>, theta: &Tensor, dx: &DMatrix<f64>) -> DMatrix<f64> {
    let n = prep.n;
    let d = dx.ncols();
    if prep.p == 2 {
        let t = DMatrix::from_row_slice(n, n, theta.components());
        return &t * dx * p_flat.transpose() + t.transpose() * dx * p_flat;
    }
    let p = prep.p;
    let pt = forms::unflatten(&FlatView {
        ordering: prep.ordering,
        matrix: p_flat.clone(),
    });
    let mut out = DMatrix::zeros(n, d);
    for slot in 0..p {
        let mut data = theta.components().to_vec();
        let mut shape = vec![n; p];
        for other in (0..p).filter(|&o| o != slot) {
            (data, shape) = geometry::contract_slot(&data, &shape, other, dx);
        }
        // shape is d everywhere except n at `slot`
        let mut idx = vec![0usize; p];
        for &pc in pt.components() {
            if pc != 0.0 {
                let beta = idx[slot];
                for a in 0..n {
                    let off = idx
                        .iter()
                        .enumerate()
                        .fold(0, |acc, (s2, &v)| acc * shape[s2] + if s2 == slot { a } else { v });
                    out[(a, beta)] += pc * data[off];
                }
            }
            crate::forms::increment(&mut idx, d);
        }
    }
    out
}

/// Full evaluation of the discrete action over a list of slices.
struct Evaluation {
    action: f64,
    /// Sum of absolute node contributions, a scale for rounding noise.
    action_abs: f64,
    /// `dA/dx` split into the divergence, metric-gradient and potential parts.
    grad_div: Vec<Vec<f64>>,
    grad_theta: Vec<Vec<f64>>,
    grad_ext: Vec<Vec<f64>>,
    /// `wt w e varpi` per slice and node.
    mass: Vec<Vec<f64>>,
    /// Per-slice total derivative of the action with respect to the flat pulled-back form.
    dadtheta: Vec<Vec<DMatrix<f64>>>,
}

impl Evaluation {
    fn gradient(&self, t: usize) -> Vec<f64> {
        self.grad_div[t]
            .iter()
            .zip(&self.grad_theta[t])
            .zip(&self.grad_ext[t])
            .map(|((a, b), c)| a + b + c)
            .collect()
    }
}

fn evaluate(s: &Scenario, prep: &Prepared, slices: &[EmbeddingField], with_gradient: bool) -> Result<Evaluation> {
    let grid = s.grid();
    let nodes = grid.len();
    let order = s.model.order();
    let elastic = *s.model.elastic();
    let states = slices
        .iter()
        .map(|e| slice_states(s, prep, e))
        .collect::<Result<Vec<_>>>()?;

    // node terms: value and dA/dTheta_B
    let mut action = 0.0;
    let mut action_abs = 0.0;
    let mut dadtheta: Vec<Vec<DMatrix<f64>>> = Vec::with_capacity(slices.len());
    let mut mass = Vec::with_capacity(slices.len());
    for (t, (e, st)) in slices.iter().zip(&states).enumerate() {
        let scale = prep.slice_weights[t] * prep.e;
        let terms = (0..nodes)
            .into_par_iter()
            .map(|i| {
                let at = |err: Error| err.at(format!("node {:?}", grid.multi_index(i)));
                let (varpi, dln) = weight_terms(s, prep, &st[i].flat, i).map_err(at)?;
                let delta = &st[i].flat - &prep.theta0[i];
                let (f, sigma) = elastic.value_and_gradient(order, &delta, &prep.g[i]);
                let f = f * prep.stiffness[i];
                let u = s.model.potential().value(e.point(i));
                let w = prep.weights[i] * scale;
                let mut q = sigma * (prep.stiffness[i] * varpi * w);
                if let Some(dln) = dln {
                    q += dln * ((f + u) * varpi * w);
                }
                Ok((w * (f + u) * varpi, q, w * varpi))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut qs = Vec::with_capacity(nodes);
        let mut ms = Vec::with_capacity(nodes);
        for (a, q, m) in terms {
            action += a;
            action_abs += a.abs();
            qs.push(q);
            ms.push(m);
        }
        dadtheta.push(qs);
        mass.push(ms);
    }

    // kinetic cells
    if let (Some(kin), true) = (s.model.kinetic(), slices.len() > 1) {
        let kin: LameTable = *kin;
        for t in 0..slices.len() - 1 {
            let cells = (0..nodes)
                .into_par_iter()
                .map(|i| {
                    let at = |err: Error| err.at(format!("node {:?}, cell {t}", grid.multi_index(i)));
                    let mid = (&states[t][i].flat + &states[t + 1][i].flat) * 0.5;
                    let rate = (&states[t + 1][i].flat - &states[t][i].flat) / prep.dt;
                    let (varpi, dln) = weight_terms(s, prep, &mid, i).map_err(at)?;
                    let (f, pi) = kin.value_and_gradient(order, &rate, &prep.g[i]);
                    let w = prep.weights[i] * prep.dt * prep.e;
                    let flux = pi * (varpi * w / prep.dt);
                    let mut common = DMatrix::zeros(flux.nrows(), flux.ncols());
                    if let Some(dln) = dln {
                        common = dln * (0.5 * f * varpi * w);
                    }
                    Ok((w * f * varpi, &common - &flux, &common + &flux))
                })
                .collect::<Result<Vec<_>>>()?;
            for (i, (a, lo, hi)) in cells.into_iter().enumerate() {
                action += a;
                action_abs += a.abs();
                dadtheta[t][i] += lo;
                dadtheta[t + 1][i] += hi;
            }
        }
    }

    let n = prep.n;
    let mut grad_div = vec![vec![0.0; nodes * n]; slices.len()];
    let mut grad_theta = vec![vec![0.0; nodes * n]; slices.len()];
    let mut grad_ext = vec![vec![0.0; nodes * n]; slices.len()];
    if with_gradient {
        for (t, e) in slices.iter().enumerate() {
            let local = (0..nodes)
                .into_par_iter()
                .map(|i| {
                    let st = &states[t][i];
                    let q = &dadtheta[t][i];
                    let tilde = sigma_tilde(prep, q, &st.theta, &st.dx);
                    let mut ft = vec![0.0; n];
                    if !s.ambient.is_constant() {
                        let qt = forms::unflatten(&FlatView {
                            ordering: prep.ordering,
                            matrix: q.clone(),
                        });
                        for (a, ga) in s.ambient.gradient(e.point(i))?.iter().enumerate() {
                            ft[a] = qt.pairing(&geometry::pullback_tensor(ga, &st.dx))?;
                        }
                    }
                    Ok((tilde, ft))
                })
                .collect::<Result<Vec<_>>>()?;
            for (i, (tilde, ft)) in local.into_iter().enumerate() {
                for (axis, stc) in prep.stencils[i].iter().enumerate() {
                    for &(j, c) in stc {
                        for a in 0..n {
                            grad_div[t][j * n + a] += c * tilde[(a, axis)];
                        }
                    }
                }
                for a in 0..n {
                    grad_theta[t][i * n + a] += ft[a];
                }
                if !s.model.is_closed() {
                    let gu = s.model.potential().gradient(e.point(i));
                    for a in 0..n {
                        grad_ext[t][i * n + a] += mass[t][i] * gu[a];
                    }
                }
            }
        }
    }
    Ok(Evaluation {
        action,
        action_abs,
        grad_div,
        grad_theta,
        grad_ext,
        mass,
        dadtheta,
    })
}

fn candidate_slices<'a>(s: &Scenario, candidate: &'a [EmbeddingField]) -> Result<&'a [EmbeddingField]> {
    let expected = match &s.mode {
        Mode::Static { .. } => 1,
        Mode::Evolution { time, .. } => time.slices,
    };
    if candidate.len() != expected {
        return Err(Error::Shape(format!(
            "candidate has {} slices, scenario expects {expected}",
            candidate.len()
        )));
    }
    for e in candidate {
        if e.grid() != s.grid() || e.ambient_dim() != s.ambient.dim() {
            return Err(Error::Shape("candidate grid or ambient dimension differs from the scenario".into()));
        }
    }
    Ok(candidate)
}

/// Discrete action of a candidate (one slice for static scenarios, the whole
/// history for evolutional ones).
pub fn action(s: &Scenario, candidate: &[EmbeddingField]) -> Result<f64> {
    let prep = prepare(s)?;
    Ok(evaluate(s, &prep, candidate_slices(s, candidate)?, false)?.action)
}

/// Gradient of the action with respect to every node coordinate, per slice.
pub fn action_gradient(s: &Scenario, candidate: &[EmbeddingField]) -> Result<(f64, Vec<Vec<f64>>)> {
    let prep = prepare(s)?;
    let ev = evaluate(s, &prep, candidate_slices(s, candidate)?, true)?;
    Ok((ev.action, (0..candidate.len()).map(|t| ev.gradient(t)).collect()))
}

/// Norms of a residual over the active nodes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct ResidualNorms {
    pub max: f64,
    /// `sqrt(sum m_i |r_i|^2 / sum m_i)` with `m = wt w e varpi`.
    pub l2: f64,
}

/// Boundary residual of one face.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FaceReport {
    pub face: String,
    pub condition: String,
    pub residual_norm: f64,
}

/// Euler-Lagrange residual `r = div Sigma + f_Theta + f_ext`, per slice and
/// node (ambient vectors flattened node-major).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ElResidual {
    pub residual: Vec<Vec<f64>>,
    pub divergence: Vec<Vec<f64>>,
    pub f_theta: Vec<Vec<f64>>,
    pub f_ext: Vec<Vec<f64>>,
    /// Quadrature weights `wt w e varpi`; `sum weights r . dx = -dA[dx]`.
    pub weights: Vec<Vec<f64>>,
    /// Generalized stress per slice and node, as the discrete total derivative
    /// of the action by the pulled-back form divided by the weight.
    pub sigma_gen: Vec<Vec<Tensor>>,
    /// Norms over interior nodes of interior slices (all slices when static).
    pub interior: ResidualNorms,
    pub boundary: Vec<FaceReport>,
    /// Static: 0. Evolutional: largest boundary flux on the end slices.
    pub endpoint_flux: f64,
}

impl ElResidual {
    pub fn at(&self, slice: usize, node: usize, n: usize) -> &[f64] {
        &self.residual[slice][node * n..(node + 1) * n]
    }
}

fn build_residual(s: &Scenario, prep: &Prepared, ev: &Evaluation, slices: &[EmbeddingField]) -> ElResidual {
    let grid = s.grid();
    let n = prep.n;
    let kinds = node_kinds(s);
    let scale = |part: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        part.iter()
            .zip(&ev.mass)
            .map(|(g, m)| g.iter().enumerate().map(|(k, v)| -v / m[k / n]).collect())
            .collect()
    };
    let divergence = scale(&ev.grad_div);
    let f_theta = scale(&ev.grad_theta);
    let f_ext = scale(&ev.grad_ext);
    let residual: Vec<Vec<f64>> = (0..slices.len())
        .map(|t| (0..grid.len() * n).map(|k| divergence[t][k] + f_theta[t][k] + f_ext[t][k]).collect())
        .collect();
    let sigma_gen = ev
        .dadtheta
        .iter()
        .zip(&ev.mass)
        .map(|(qs, ms)| {
            qs.iter()
                .zip(ms)
                .map(|(q, m)| {
                    forms::unflatten(&FlatView {
                        ordering: prep.ordering,
                        matrix: q / *m,
                    })
                })
                .collect()
        })
        .collect();

    let interior_slices: Vec<usize> = if slices.len() == 1 { vec![0] } else { (1..slices.len() - 1).collect() };
    let mut norms = ResidualNorms::default();
    let (mut num, mut den) = (0.0, 0.0);
    for &t in &interior_slices {
        for i in (0..grid.len()).filter(|&i| !grid.is_boundary(i)) {
            let r = &residual[t][i * n..(i + 1) * n];
            let r2: f64 = r.iter().map(|v| v * v).sum();
            norms.max = r.iter().fold(norms.max, |m, v| m.max(v.abs()));
            num += ev.mass[t][i] * r2;
            den += ev.mass[t][i];
        }
    }
    norms.l2 = if den > 0.0 { (num / den).sqrt() } else { 0.0 };

    let mut boundary = Vec::new();
    for face in grid.faces() {
        let cond = s.boundary.condition(face);
        let mut worst: f64 = 0.0;
        if !matches!(cond, BoundaryCondition::Pinned | BoundaryCondition::Given) {
            let h = grid.spacing()[face.axis];
            for i in (0..grid.len()).filter(|&i| grid.faces_of(i).contains(&face)) {
                let proj = match &kinds[i] {
                    NodeKind::Fixed => continue,
                    NodeKind::Free => None,
                    NodeKind::Tangent(p, _) => Some(p),
                };
                for &t in &interior_slices {
                    // flux per unit face measure
                    let x: Vec<f64> = residual[t][i * n..(i + 1) * n].iter().map(|v| v * 0.5 * h).collect();
                    let x = match proj {
                        Some(p) => (0..n).map(|r| (0..n).map(|c| p[(r, c)] * x[c]).sum()).collect(),
                        None => x,
                    };
                    worst = x.iter().fold(worst, |m, v| m.max(v.abs()));
                }
            }
        }
        boundary.push(FaceReport {
            face: face.to_string(),
            condition: cond.name().to_string(),
            residual_norm: worst,
        });
    }

    let mut endpoint_flux: f64 = 0.0;
    if slices.len() > 1 {
        let dt = prep.dt;
        for t in [0, slices.len() - 1] {
            for i in (0..grid.len()).filter(|&i| !grid.is_boundary(i)) {
                for v in &residual[t][i * n..(i + 1) * n] {
                    endpoint_flux = endpoint_flux.max((v * 0.5 * dt).abs());
                }
            }
        }
    }

    ElResidual {
        residual,
        divergence,
        f_theta,
        f_ext,
        weights: ev.mass.clone(),
        sigma_gen,
        interior: norms,
        boundary,
        endpoint_flux,
    }
}

pub fn el_residual(s: &Scenario, candidate: &[EmbeddingField]) -> Result<ElResidual> {
    let prep = prepare(s)?;
    let slices = candidate_slices(s, candidate)?;
    let ev = evaluate(s, &prep, slices, true)?;
    Ok(build_residual(s, &prep, &ev, slices))
}

pub fn boundary_report(s: &Scenario, candidate: &[EmbeddingField]) -> Result<Vec<FaceReport>> {
    Ok(el_residual(s, candidate)?.boundary)
}

/// Result of a static or evolutional solve.
#[derive(Clone, Debug, Serialize)]
pub struct Solution {
    pub slices: Vec<EmbeddingField>,
    pub action: f64,
    pub iterations: usize,
    pub residual: ElResidual,
    pub trace: Vec<TraceRow>,
}

/// Armijo constant and backtracking factor.
const ARMIJO_C: f64 = 1e-4;
const SHRINK: f64 = 0.5;
/// Relative size of action changes treated as rounding noise.
const NOISE: f64 = 1e-12;

struct Dofs {
    /// `kinds[t][i]`
    kinds: Vec<Vec<NodeKind>>,
}

impl Dofs {
    fn new(s: &Scenario, slices: usize) -> Self {
        let spatial = node_kinds(s);
        let kinds = (0..slices)
            .map(|t| {
                if slices > 1 && (t == 0 || t + 1 == slices) {
                    vec![NodeKind::Fixed; spatial.len()]
                } else {
                    spatial.clone()
                }
            })
            .collect();
        Dofs { kinds }
    }

    /// Projects per-node vectors onto the admissible directions (in place).
    fn project(&self, t: usize, v: &mut [f64], n: usize) {
        for (i, kind) in self.kinds[t].iter().enumerate() {
            let block = &mut v[i * n..(i + 1) * n];
            match kind {
                NodeKind::Fixed => block.fill(0.0),
                NodeKind::Free => {}
                NodeKind::Tangent(p, _) => {
                    let orig = block.to_vec();
                    for (r, b) in block.iter_mut().enumerate() {
                        *b = (0..n).map(|c| p[(r, c)] * orig[c]).sum();
                    }
                }
            }
        }
    }

    fn snap(&self, slices: &mut [EmbeddingField]) {
        for (t, e) in slices.iter_mut().enumerate() {
            for (i, kind) in self.kinds[t].iter().enumerate() {
                if let NodeKind::Tangent(p, chart) = kind {
                    project_onto_chart(e.point_mut(i), p, chart);
                }
            }
        }
    }
}

fn dot(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>()).sum()
}

fn minimize(s: &Scenario, initial: Vec<EmbeddingField>) -> Result<Solution> {
    let prep = prepare(s)?;
    let n = prep.n;
    let dofs = Dofs::new(s, initial.len());
    let mut x = initial;
    dofs.snap(&mut x);
    let opts = s.solver;
    let min_h = s.grid().spacing().iter().cloned().fold(f64::INFINITY, f64::min);

    // fixed metric for the descent direction: quadrature weights without varpi
    let metric: Vec<Vec<f64>> = prep
        .slice_weights
        .iter()
        .map(|wt| prep.weights.iter().map(|w| wt * w * prep.e).collect())
        .collect();

    struct State {
        ev: Evaluation,
        grad: Vec<Vec<f64>>,
        res_norm: f64,
    }
    let assess = |x: &[EmbeddingField]| -> Result<State> {
        let ev = evaluate(s, &prep, x, true)?;
        let mut grad = Vec::with_capacity(x.len());
        let mut res_norm: f64 = 0.0;
        for t in 0..x.len() {
            let mut g = ev.gradient(t);
            dofs.project(t, &mut g, n);
            for (k, v) in g.iter().enumerate() {
                res_norm = res_norm.max((v / ev.mass[t][k / n]).abs());
            }
            grad.push(g);
        }
        Ok(State { ev, grad, res_norm })
    };

    let mut st = assess(&x)?;
    let mut trace = vec![TraceRow {
        iteration: 0,
        action: st.ev.action,
        grad_norm: st.res_norm,
    }];
    let mut alpha = f64::NAN;
    let mut prev: Option<(Vec<Vec<f64>>, Vec<Vec<f64>>)> = None; // (step, grad)
    let mut iter = 0;
    while st.res_norm > opts.tol {
        if iter >= opts.max_iters {
            return Err(Error::Convergence {
                iterations: iter,
                grad_norm: st.res_norm,
                trace,
            });
        }
        iter += 1;
        let dir: Vec<Vec<f64>> = st
            .grad
            .iter()
            .zip(&metric)
            .map(|(g, m)| g.iter().enumerate().map(|(k, v)| -v / m[k / n]).collect())
            .collect();
        let slope = dot(&st.grad, &dir);
        if !(slope < 0.0) {
            break;
        }
        // Barzilai-Borwein trial step in the weighted metric
        if let Some((step, old_grad)) = &prev {
            let y: Vec<Vec<f64>> = st
                .grad
                .iter()
                .zip(old_grad)
                .map(|(a, b)| a.iter().zip(b).map(|(p, q)| p - q).collect())
                .collect();
            let sy = dot(step, &y);
            let ss: f64 = step
                .iter()
                .zip(&metric)
                .map(|(sv, m)| sv.iter().enumerate().map(|(k, v)| m[k / n] * v * v).sum::<f64>())
                .sum();
            alpha = if sy > 0.0 { ss / sy } else { 2.0 * alpha };
        } else {
            let dmax = dir.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
            alpha = 0.1 * min_h / dmax.max(f64::MIN_POSITIVE);
        }
        let noise = NOISE * st.ev.action_abs.max(st.ev.action.abs());
        let mut accepted = None;
        for _ in 0..80 {
            let mut trial = x.clone();
            for (t, e) in trial.iter_mut().enumerate() {
                for (v, d) in e.values_mut().iter_mut().zip(&dir[t]) {
                    *v += alpha * d;
                }
            }
            dofs.snap(&mut trial);
            match assess(&trial) {
                Ok(ts) => {
                    let armijo = ts.ev.action <= st.ev.action + ARMIJO_C * alpha * slope;
                    // near convergence the decrease drops below rounding noise;
                    // fall back to the slope form of the sufficient-decrease test
                    let in_noise = -alpha * slope <= noise;
                    let new_slope = dot(&ts.grad, &dir);
                    let approx = in_noise
                        && ts.ev.action <= st.ev.action + noise
                        && new_slope <= (1.0 - 2.0 * ARMIJO_C) * -slope
                        && ts.res_norm < st.res_norm;
                    if armijo || approx {
                        accepted = Some((trial, ts));
                        break;
                    }
                }
                Err(Error::Singular { .. } | Error::Embedding(_)) => {}
                Err(e) => return Err(e),
            }
            alpha *= SHRINK;
        }
        let Some((trial, ts)) = accepted else {
            return Err(Error::Convergence {
                iterations: iter,
                grad_norm: st.res_norm,
                trace,
            });
        };
        let step: Vec<Vec<f64>> = dir.iter().map(|d| d.iter().map(|v| alpha * v).collect()).collect();
        prev = Some((step, std::mem::take(&mut st.grad)));
        x = trial;
        st = ts;
        trace.push(TraceRow {
            iteration: iter,
            action: st.ev.action,
            grad_norm: st.res_norm,
        });
    }
    let residual = build_residual(s, &prep, &st.ev, &x);
    Ok(Solution {
        action: st.ev.action,
        iterations: iter,
        slices: x,
        residual,
        trace,
    })
}

/// Minimizes the static action over interior, free and sliding nodes.
pub fn solve_static(s: &Scenario) -> Result<Solution> {
    let Mode::Static { initial } = &s.mode else {
        return Err(Error::Shape("solve_static needs a static scenario".into()));
    };
    minimize(s, vec![initial.clone()])
}

/// Minimizes the space-time action over the interior slices, holding the end
/// slices fixed.
pub fn solve_evolution(s: &Scenario) -> Result<Solution> {
    let Mode::Evolution { history, .. } = &s.mode else {
        return Err(Error::Shape("solve_evolution needs an evolutional scenario".into()));
    };
    minimize(s, history.clone())
}

/// Residuals of the two equations obtained by varying the flat-ambient
/// Polyakov action in the final (`y`) and the initial (`x0`) embedding:
/// `div Dy` and `div(Dx0 - 2 (Theta (x) Theta0^-1)(Dy, Dx0) Dy)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoupledResiduals {
    pub div_dy: Vec<Vec<f64>>,
    pub second: Vec<Vec<f64>>,
    pub div_dy_max: f64,
    pub second_max: f64,
}

/// Both fields use the discrete divergence of the solvers,
/// `div_h F = -(1/(w varpi0)) D^T (w varpi0 Theta F Theta0^-1)`, at interior nodes.
pub fn polyakov_coupled_residuals(theta: &AmbientMetric, y: &EmbeddingField, x0: &EmbeddingField) -> Result<CoupledResiduals> {
    if theta.degree() != 2 || !theta.is_constant() {
        return Err(Error::Unsupported("coupled residuals need a constant degree-2 ambient form".into()));
    }
    if y.grid() != x0.grid() || y.ambient_dim() != x0.ambient_dim() || y.ambient_dim() != theta.dim() {
        return Err(Error::Shape("y and x0 must share grid and ambient dimension".into()));
    }
    let grid = y.grid();
    let n = theta.dim();
    let t = DMatrix::from_row_slice(n, n, theta.eval(&vec![0.0; n])?.components());
    let dy = y.differential_with(Stencil::SummationByParts);
    let dx0 = x0.differential_with(Stencil::SummationByParts);
    let stencils = grid.stencils(Stencil::SummationByParts);
    let w = grid.weights();
    let mut flux_a = Vec::with_capacity(grid.len());
    let mut flux_b = Vec::with_capacity(grid.len());
    let mut mass = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let theta0 = dx0[i].transpose() * &t * &dx0[i];
        let det = theta0.determinant();
        let g = theta0
            .try_inverse()
            .filter(|_| det > 0.0)
            .ok_or_else(|| Error::singular("background form").at(format!("node {:?}", grid.multi_index(i))))?;
        let varpi0 = det.sqrt();
        let mixed = (dy[i].transpose() * &t * &dx0[i]).component_mul(&g).sum();
        let v = &dx0[i] - &dy[i] * (2.0 * mixed);
        flux_a.push(&t * &dy[i] * &g * (w[i] * varpi0));
        flux_b.push(&t * v * &g * (w[i] * varpi0));
        mass.push(w[i] * varpi0);
    }
    let div = |flux: &[DMatrix<f64>]| -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; n]; grid.len()];
        for (j, f) in flux.iter().enumerate() {
            for (axis, st) in stencils[j].iter().enumerate() {
                for &(i, c) in st {
                    for a in 0..n {
                        out[i][a] -= c * f[(a, axis)];
                    }
                }
            }
        }
        for (i, o) in out.iter_mut().enumerate() {
            for v in o.iter_mut() {
                *v /= mass[i];
            }
        }
        out
    };
    let div_dy = div(&flux_a);
    let second = div(&flux_b);
    let interior_max = |f: &[Vec<f64>]| {
        (0..grid.len())
            .filter(|&i| !grid.is_boundary(i))
            .flat_map(|i| f[i].iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    };
    Ok(CoupledResiduals {
        div_dy_max: interior_max(&div_dy),
        second_max: interior_max(&second),
        div_dy,
        second,
    })
}
