//! Polynomial energies in the trace invariants and the tensors derived from them.
//!
//! Contravariant results (stress, momentum, generalized stress) are stored as
//! [`Tensor`]s in the same component layout as the covariant forms they pair
//! with, so `<sigma, delta>` is a plain component-wise sum.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forms::{self, FlatView, Tensor};
use crate::geometry::{self, AmbientMetric, DeformationMeasure, EmbeddingField, TensorField};

/// Generalized Lamé coefficients up to cubic order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LameTable {
    pub mu0: f64,
    pub mu1_1: f64,
    pub mu2_01: f64,
    pub mu2_20: f64,
    pub mu3_001: f64,
    pub mu3_110: f64,
    pub mu3_300: f64,
}

impl LameTable {
    /// `mu Delta^(2) + (lambda/2) (Delta^(1))^2`.
    pub fn hooke(mu: f64, lambda: f64) -> Self {
        LameTable {
            mu2_01: mu,
            mu2_20: 0.5 * lambda,
            ..Default::default()
        }
    }

    /// `(T/2) Delta^(1)`.
    pub fn polyakov(tension: f64) -> Self {
        LameTable {
            mu1_1: 0.5 * tension,
            ..Default::default()
        }
    }

    /// Smallest order whose truncation keeps every nonzero coefficient.
    pub fn min_order(&self) -> usize {
        if self.mu3_001 != 0.0 || self.mu3_110 != 0.0 || self.mu3_300 != 0.0 {
            3
        } else if self.mu2_01 != 0.0 || self.mu2_20 != 0.0 {
            2
        } else if self.mu1_1 != 0.0 {
            1
        } else {
            0
        }
    }

    /// Energy from the invariants `t = [Delta^(1), Delta^(2), Delta^(3)]`,
    /// reading only coefficients up to `order`.
    pub fn value(&self, order: usize, t: [f64; 3]) -> f64 {
        let [t1, t2, t3] = t;
        let mut f = self.mu0;
        if order >= 1 {
            f += self.mu1_1 * t1;
        }
        if order >= 2 {
            f += self.mu2_01 * t2 + self.mu2_20 * t1 * t1;
        }
        if order >= 3 {
            f += self.mu3_001 * t3 + self.mu3_110 * t1 * t2 + self.mu3_300 * t1 * t1 * t1;
        }
        f
    }

    /// Partial derivatives of [`LameTable::value`] with respect to the invariants.
    pub fn partials(&self, order: usize, t: [f64; 3]) -> [f64; 3] {
        let [t1, t2, _] = t;
        let mut p = [0.0; 3];
        if order >= 1 {
            p[0] += self.mu1_1;
        }
        if order >= 2 {
            p[0] += 2.0 * self.mu2_20 * t1;
            p[1] += self.mu2_01;
        }
        if order >= 3 {
            p[0] += self.mu3_110 * t2 + 3.0 * self.mu3_300 * t1 * t1;
            p[1] += self.mu3_110 * t1;
            p[2] += self.mu3_001;
        }
        p
    }

    /// Energy and its gradient with respect to the flat matrix `d` of the
    /// argument form, for the inverse background `g` (both flat).
    ///
    /// The gradient of `Tr((d g)^i)` is `i ((g d)^(i-1) g)^T`; for symmetric
    /// forms the transpose is immaterial.
    pub fn value_and_gradient(&self, order: usize, d: &DMatrix<f64>, g: &DMatrix<f64>) -> (f64, DMatrix<f64>) {
        let gd = g * d;
        let x = d * g;
        let x2 = &x * &x;
        let t = [x.trace(), x2.trace(), (&x2 * &x).trace()];
        let p = self.partials(order, t);
        let mut grad = g.scale(p[0]);
        if p[1] != 0.0 || p[2] != 0.0 {
            let gdg = &gd * g;
            grad += gdg.scale(2.0 * p[1]);
            if p[2] != 0.0 {
                grad += (&gd * &gdg).scale(3.0 * p[2]);
            }
        }
        (self.value(order, t), grad.transpose())
    }
}

/// External potential `U(x)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum Potential {
    #[default]
    None,
    /// `U = g . x`.
    Linear(Vec<f64>),
    /// `U = 1/2 sum_A c_A (x^A)^2`.
    Quadratic(Vec<f64>),
}

impl Potential {
    pub fn is_closed(&self) -> bool {
        match self {
            Potential::None => true,
            Potential::Linear(g) => g.iter().all(|&c| c == 0.0),
            Potential::Quadratic(c) => c.iter().all(|&c| c == 0.0),
        }
    }

    fn check(&self, n: usize) -> Result<()> {
        match self {
            Potential::None => Ok(()),
            Potential::Linear(p) | Potential::Quadratic(p) if p.len() == n => Ok(()),
            Potential::Linear(p) | Potential::Quadratic(p) => Err(Error::Shape(format!(
                "potential has {} parameters for ambient dimension {n}",
                p.len()
            ))),
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            Potential::None => 0.0,
            Potential::Linear(g) => g.iter().zip(x).map(|(a, b)| a * b).sum(),
            Potential::Quadratic(c) => 0.5 * c.iter().zip(x).map(|(a, b)| a * b * b).sum::<f64>(),
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Potential::None => vec![0.0; x.len()],
            Potential::Linear(g) => g.clone(),
            Potential::Quadratic(c) => c.iter().zip(x).map(|(a, b)| a * b).collect(),
        }
    }
}

/// Which form supplies the volume weight of the action.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VolumeWeight {
    /// Density of the current pulled-back form; varies with the embedding.
    #[default]
    Current,
    /// Density of the background form; fixed during a solve.
    Background,
}

/// Elastic table, optional kinetic table and external potential.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyModel {
    order: usize,
    elastic: LameTable,
    kinetic: Option<LameTable>,
    potential: Potential,
}

impl EnergyModel {
    /// Validates that no coefficient above `order` is nonzero.
    pub fn new(order: usize, elastic: LameTable, kinetic: Option<LameTable>, potential: Potential) -> Result<Self> {
        if order > 3 {
            return Err(Error::Unsupported(format!("model order {order} > 3")));
        }
        for (name, table) in [("elastic", Some(&elastic)), ("kinetic", kinetic.as_ref())] {
            if let Some(t) = table {
                if t.min_order() > order {
                    return Err(Error::Unsupported(format!(
                        "{name} coefficients of order {} in an order-{order} model",
                        t.min_order()
                    )));
                }
            }
        }
        Ok(EnergyModel {
            order,
            elastic,
            kinetic,
            potential,
        })
    }

    pub fn elastic_only(order: usize, elastic: LameTable) -> Result<Self> {
        EnergyModel::new(order, elastic, None, Potential::None)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn elastic(&self) -> &LameTable {
        &self.elastic
    }

    pub fn kinetic(&self) -> Option<&LameTable> {
        self.kinetic.as_ref()
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    pub fn is_closed(&self) -> bool {
        self.potential.is_closed()
    }

    pub(crate) fn check_ambient(&self, n: usize) -> Result<()> {
        self.potential.check(n)
    }
}

/// `F_0` per node from invariant fields `[Delta^(1), Delta^(2), Delta^(3)]`
/// (missing higher invariants count as zero).
pub fn energy_density(model: &EnergyModel, invariants: &[Vec<f64>]) -> Vec<f64> {
    let nodes = invariants.first().map_or(0, Vec::len);
    (0..nodes)
        .map(|i| {
            let t = std::array::from_fn(|j| invariants.get(j).map_or(0.0, |f| f[i]));
            model.elastic.value(model.order, t)
        })
        .collect()
}

fn flat_pair(delta: &Tensor, theta0: &Tensor, node: usize) -> Result<(FlatView, DMatrix<f64>)> {
    let view = forms::flatten(delta)?;
    let g = forms::flatten(&forms::flat_inverse(theta0).map_err(|e| e.at(format!("node {node}")))?)?;
    Ok((view, g.matrix))
}

fn table_field(table: &LameTable, order: usize, args: &TensorField, theta0: &TensorField) -> Result<TensorField> {
    let values = args
        .values
        .par_iter()
        .zip(&theta0.values)
        .enumerate()
        .map(|(node, (a, t0))| {
            let (view, g) = flat_pair(a, t0, node)?;
            let (_, grad) = table.value_and_gradient(order, &view.matrix, &g);
            Ok(forms::unflatten(&FlatView {
                ordering: view.ordering,
                matrix: grad,
            }))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TensorField {
        degree: args.degree,
        dim: args.dim,
        values,
    })
}

/// `sigma = dF_0 / d Delta`.
pub fn stress(model: &EnergyModel, dm: &DeformationMeasure) -> Result<TensorField> {
    table_field(&model.elastic, model.order, &dm.delta, &dm.theta0_b)
}

/// `pi = dF_0 / d Delta_dot` from the kinetic table; zero without one or
/// without a rate.
pub fn momentum(model: &EnergyModel, dm: &DeformationMeasure) -> Result<TensorField> {
    let zero = || TensorField::zeros(dm.delta.degree, dm.delta.dim, dm.delta.len());
    match (&model.kinetic, &dm.delta_dot) {
        (Some(k), Some(rate)) => table_field(k, model.order, rate, &dm.theta0_b),
        (Some(k), None) => table_field(k, model.order, &zero(), &dm.theta0_b),
        (None, _) => Ok(zero()),
    }
}

/// Kinetic energy density per node (zero without a kinetic table).
pub fn kinetic_density(model: &EnergyModel, dm: &DeformationMeasure) -> Result<Vec<f64>> {
    let Some(k) = &model.kinetic else {
        return Ok(vec![0.0; dm.delta.len()]);
    };
    let zero = TensorField::zeros(dm.delta.degree, dm.delta.dim, dm.delta.len());
    let rate = dm.delta_dot.as_ref().unwrap_or(&zero);
    rate.values
        .iter()
        .zip(&dm.theta0_b.values)
        .enumerate()
        .map(|(node, (r, t0))| {
            let (view, g) = flat_pair(r, t0, node)?;
            Ok(k.value_and_gradient(model.order, &view.matrix, &g).0)
        })
        .collect()
}

/// Energy-momentum affinnor at one node: `w -> pi <delta_dot, w> - (F_0 + U) w`.
#[derive(Clone, Debug, PartialEq)]
pub struct Affinnor {
    pub pi: Tensor,
    pub delta_dot: Tensor,
    pub energy: f64,
}

impl Affinnor {
    pub fn apply(&self, w: &Tensor) -> Result<Tensor> {
        let mut out = self.pi.scale(self.delta_dot.pairing(w)?);
        out.axpy(-self.energy, w)?;
        Ok(out)
    }
}

/// `F_0 + U` is passed per node; without a rate the affinnor is `-(F_0 + U) I`.
pub fn affinnor(pi: &TensorField, delta_dot: Option<&TensorField>, energy: &[f64]) -> Vec<Affinnor> {
    pi.values
        .iter()
        .enumerate()
        .map(|(i, p)| Affinnor {
            pi: p.clone(),
            delta_dot: delta_dot.map_or_else(|| Tensor::zeros(p.degree(), p.dim()), |r| r.values[i].clone()),
            energy: energy[i],
        })
        .collect()
}

/// `(ln varpi)_{|Delta} = (1/l) flat(theta_b)^{-T}` with `l = 2 k d^(k-1)`.
pub fn dlnvarpi(theta_b: &Tensor) -> Result<Tensor> {
    let k = theta_b.half_degree()?;
    let adm = forms::admissibility(k, theta_b.dim());
    if !adm.is_admissible() {
        return Err(Error::Admissibility { k, d: theta_b.dim() });
    }
    let inv = forms::flat_inverse(theta_b)?;
    Ok(inv.flat_transpose()?.scale(1.0 / adm.l as f64))
}

/// Volume weight value at a node.
pub fn varpi(theta: &Tensor) -> Result<f64> {
    let k = theta.half_degree()?;
    forms::volume_density(theta, &forms::admissibility(k, theta.dim()))
}

/// Stress, momentum, affinnor and generalized stress per node.
#[derive(Clone, Debug)]
pub struct StressState {
    pub sigma: TensorField,
    pub pi: TensorField,
    pub affinnor: Vec<Affinnor>,
    pub sigma_gen: TensorField,
}

/// `Sigma = sigma - pi_dot - T (ln varpi)_{|Delta}`.
///
/// `potential` holds `U` per node; `pi_dot` is omitted in the static case.
/// With [`VolumeWeight::Background`] the weight does not depend on `Delta` and
/// the last term vanishes.
pub fn generalized_stress(
    model: &EnergyModel,
    dm: &DeformationMeasure,
    potential: &[f64],
    pi_dot: Option<&TensorField>,
    weight: VolumeWeight,
) -> Result<StressState> {
    let sigma = stress(model, dm)?;
    let pi = momentum(model, dm)?;
    let inv = geometry::invariants(dm, 3)?;
    let f_el = energy_density(model, &inv);
    let f_kin = kinetic_density(model, dm)?;
    let energy: Vec<f64> = (0..f_el.len()).map(|i| f_el[i] + f_kin[i] + potential[i]).collect();
    let aff = affinnor(&pi, dm.delta_dot.as_ref(), &energy);
    let values = (0..sigma.len())
        .map(|i| {
            let mut s = sigma.values[i].clone();
            if let Some(pd) = pi_dot {
                s.axpy(-1.0, &pd.values[i])?;
            }
            if weight == VolumeWeight::Current {
                let w = dlnvarpi(&dm.theta_b.values[i]).map_err(|e| e.at(format!("node {i}")))?;
                s.axpy(-1.0, &aff[i].apply(&w)?)?;
            }
            Ok(s)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(StressState {
        sigma_gen: TensorField {
            degree: sigma.degree,
            dim: sigma.dim,
            values,
        },
        sigma,
        pi,
        affinnor: aff,
    })
}

/// Force densities per node, as ambient vectors.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Forces {
    pub f_theta: Vec<Vec<f64>>,
    pub f_ext: Vec<Vec<f64>>,
}

/// `f_Theta = -<Sigma, L Theta_{|x}>` and `f_ext = -U_{|x}`.
pub fn forces(theta: &AmbientMetric, e: &EmbeddingField, sigma_gen: &TensorField, model: &EnergyModel) -> Result<Forces> {
    model.check_ambient(e.ambient_dim())?;
    let dx = e.differential();
    let f_theta = (0..e.grid().len())
        .into_par_iter()
        .map(|i| {
            if theta.is_constant() {
                return Ok(vec![0.0; theta.dim()]);
            }
            theta
                .gradient(e.point(i))?
                .iter()
                .map(|g| Ok(-sigma_gen.values[i].pairing(&geometry::pullback_tensor(g, &dx[i]))?))
                .collect()
        })
        .collect::<Result<Vec<_>>>()?;
    let f_ext = (0..e.grid().len())
        .map(|i| model.potential.gradient(e.point(i)).iter().map(|g| -g).collect())
        .collect();
    Ok(Forces { f_theta, f_ext })
}
