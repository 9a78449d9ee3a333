//! TOML scenario files and their conversion into core objects.
//!
//! Every section is optional at the parse level; each subcommand asks for the
//! sections it needs and reports the missing ones by name.

use std::path::Path;

use dstruct::dynamics::{self, BoundaryCondition, BoundarySpec, Mode, SlidingChart, TimeAxis};
use dstruct::energy::{EnergyModel, LameTable, Potential, VolumeWeight};
use dstruct::geometry::{AmbientMetric, BodyGrid, EmbeddingField, Face};
use dstruct::motions::{Polynomial, VectorField};
use dstruct::regions::{Affine, AffineDeformation, Region};
use dstruct::Tensor;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body: Option<BodySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ambient: Option<AmbientSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<EmbeddingSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy: Option<EnergySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary: Option<BoundarySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classify: Option<ClassifySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub killing: Option<KillingSection>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BodySection {
    pub counts: Vec<usize>,
    pub lengths: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmbientKind {
    Euclidean,
    Minkowski,
    Constant,
    Conformal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmbientSection {
    pub kind: AmbientKind,
    pub dim: usize,
    /// Half degree of the form.
    #[serde(default = "one")]
    pub k: usize,
    /// Row-major components of the (base) form, `dim^(2k)` of them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub components: Option<Vec<f64>>,
    /// Exponent vector `c` of `exp(2 c.x)` for the conformal kind.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exponent: Option<Vec<f64>>,
    /// Where `flatten` evaluates the form; the origin by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<Vec<f64>>,
}

fn one() -> usize {
    1
}

/// How node coordinates are mapped into the ambient chart.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EmbeddingSpec {
    /// `x = (xi, 0, ..., 0)`.
    Padded,
    /// `x = matrix . xi + offset`, matrix given by rows.
    Affine { matrix: Vec<Vec<f64>>, offset: Vec<f64> },
    /// Padded plus `amplitude sin(mode pi xi_axis / L_axis)` on one component.
    Mode {
        amplitude: f64,
        mode: u32,
        #[serde(default)]
        axis: usize,
        #[serde(default)]
        component: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingSection {
    pub reference: EmbeddingSpec,
    /// Deformed state for `strain`/`energy`; boundary data for solves.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub current: Option<EmbeddingSpec>,
    /// Final slice of an evolution (the start slice by default).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end: Option<EmbeddingSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergySection {
    pub order: usize,
    pub elastic: LameTable,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kinetic: Option<LameTable>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potential: Option<Potential>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<VolumeWeight>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_metric: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stiffness: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionKind {
    Pinned,
    Free,
    Sliding,
    Given,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaceEntry {
    /// `-a` or `+a` for the lower or upper face along axis `a`.
    pub face: String,
    pub condition: ConditionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normals: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundarySection {
    pub default: ConditionKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub faces: Vec<FaceEntry>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMode {
    Static,
    Evolution,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub mode: SolveMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slices: Option<usize>,
    /// Amplitude of seeded uniform noise added to interior nodes of the
    /// initial guess.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init_noise: Option<f64>,
}

/// Exactly one of the shapes must be given.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intervals: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polygon: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rect: Option<[[f64; 2]; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segment: Option<[[f64; 2]; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<[f64; 2]>,
}

/// `translation + (matrix or rotation about center)`; the linear part is
/// the identity when neither is given.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<f64>>>,
    /// Rotation angle in radians (2D only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angle: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub translation: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSpec {
    pub region: RegionSpec,
    pub map: MapSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifySection {
    pub domain: RegionSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map: Option<MapSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cells: Vec<CellSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<RegionSpec>,
    /// Also write `graph.dot`.
    #[serde(default)]
    pub dot: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Term {
    pub c: f64,
    pub e: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    Affine { matrix: Vec<Vec<f64>>, offset: Vec<f64> },
    Polynomial { components: Vec<Vec<Term>> },
    Hamiltonian { h: Vec<Term> },
    /// Seeded random polynomial components of total degree at most `degree`.
    Random { degree: u32, terms: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KillingSection {
    pub field: FieldSpec,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub counts: Vec<usize>,
    #[serde(default)]
    pub conformal: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

fn need<'a, T>(section: &'a Option<T>, name: &str) -> Result<&'a T, CliError> {
    section
        .as_ref()
        .ok_or_else(|| invalid(format!("missing section [{name}]")))
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| invalid(e.to_string().trim_end().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Validation(m) => invalid(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| invalid(e.to_string()))
    }

    pub fn grid(&self) -> Result<BodyGrid, CliError> {
        let b = need(&self.body, "body")?;
        Ok(BodyGrid::with_extent(b.counts.clone(), &b.lengths)?)
    }

    pub fn ambient_metric(&self) -> Result<AmbientMetric, CliError> {
        let a = need(&self.ambient, "ambient")?;
        let base = |a: &AmbientSection| -> Result<Tensor, CliError> {
            match &a.components {
                Some(c) => Ok(Tensor::new(2 * a.k, a.dim, c.clone())?),
                None => Ok(Tensor::identity(a.k, a.dim)),
            }
        };
        Ok(match a.kind {
            AmbientKind::Euclidean => AmbientMetric::euclidean_power(a.dim, a.k),
            AmbientKind::Minkowski if a.k == 1 => AmbientMetric::minkowski(a.dim),
            AmbientKind::Minkowski => return Err(invalid("[ambient] minkowski needs k = 1")),
            AmbientKind::Constant if a.components.is_some() => AmbientMetric::constant(base(a)?),
            AmbientKind::Constant => return Err(invalid("[ambient] constant kind needs 'components'")),
            AmbientKind::Conformal => {
                let c = a
                    .exponent
                    .clone()
                    .ok_or_else(|| invalid("[ambient] conformal kind needs 'exponent'"))?;
                AmbientMetric::conformal_exp(base(a)?, c)?
            }
        })
    }

    pub fn ambient_point(&self) -> Result<Vec<f64>, CliError> {
        let a = need(&self.ambient, "ambient")?;
        Ok(a.point.clone().unwrap_or_else(|| vec![0.0; a.dim]))
    }

    fn ambient_dim(&self) -> Result<usize, CliError> {
        Ok(need(&self.ambient, "ambient")?.dim)
    }

    fn embed(&self, spec: &EmbeddingSpec) -> Result<EmbeddingField, CliError> {
        let g = self.grid()?;
        let n = self.ambient_dim()?;
        let d = g.dim();
        if n < d {
            return Err(invalid(format!("ambient dimension {n} is below the body dimension {d}")));
        }
        let padded = |xi: &[f64]| {
            let mut x = xi.to_vec();
            x.resize(n, 0.0);
            x
        };
        Ok(match spec {
            EmbeddingSpec::Padded => EmbeddingField::from_fn(&g, n, padded)?,
            EmbeddingSpec::Affine { matrix, offset } => {
                if matrix.len() != n || matrix.iter().any(|r| r.len() != d) {
                    return Err(invalid(format!("[embedding] affine matrix must be {n} x {d}")));
                }
                let m = DMatrix::from_fn(n, d, |r, c| matrix[r][c]);
                EmbeddingField::affine(&g, &m, offset)?
            }
            EmbeddingSpec::Mode {
                amplitude,
                mode,
                axis,
                component,
            } => {
                if *axis >= d || *component >= n {
                    return Err(invalid("[embedding] mode axis or component out of range"));
                }
                let len = g.spacing()[*axis] * (g.counts()[*axis] - 1) as f64;
                let k = *mode as f64 * std::f64::consts::PI / len;
                EmbeddingField::from_fn(&g, n, |xi| {
                    let mut x = padded(xi);
                    x[*component] += amplitude * (k * xi[*axis]).sin();
                    x
                })?
            }
        })
    }

    pub fn reference(&self) -> Result<EmbeddingField, CliError> {
        self.embed(&need(&self.embedding, "embedding")?.reference)
    }

    pub fn current(&self) -> Result<EmbeddingField, CliError> {
        let e = need(&self.embedding, "embedding")?;
        let spec = e
            .current
            .as_ref()
            .ok_or_else(|| invalid("[embedding] needs 'current' for this command"))?;
        self.embed(spec)
    }

    pub fn model(&self) -> Result<EnergyModel, CliError> {
        let e = need(&self.energy, "energy")?;
        Ok(EnergyModel::new(
            e.order,
            e.elastic,
            e.kinetic,
            e.potential.clone().unwrap_or_default(),
        )?)
    }

    fn boundary_spec(&self) -> Result<BoundarySpec, CliError> {
        let Some(b) = &self.boundary else {
            return Ok(BoundarySpec::pinned());
        };
        let plain = |k: ConditionKind| match k {
            ConditionKind::Pinned => Ok(BoundaryCondition::Pinned),
            ConditionKind::Free => Ok(BoundaryCondition::Free),
            ConditionKind::Given => Ok(BoundaryCondition::Given),
            ConditionKind::Sliding => Err(invalid("[boundary] default cannot be sliding")),
        };
        let mut spec = BoundarySpec {
            default: plain(b.default)?,
            faces: Vec::new(),
        };
        for f in &b.faces {
            let face = parse_face(&f.face)?;
            let c = match f.condition {
                ConditionKind::Sliding => BoundaryCondition::Sliding(SlidingChart {
                    point: f.point.clone().ok_or_else(|| invalid(format!("sliding face {} needs 'point'", f.face)))?,
                    normals: f
                        .normals
                        .clone()
                        .ok_or_else(|| invalid(format!("sliding face {} needs 'normals'", f.face)))?,
                }),
                k => plain(k)?,
            };
            spec = spec.with_face(face, c);
        }
        Ok(spec)
    }

    /// Full solver scenario; `seed` drives the optional initial-guess noise.
    pub fn dynamics(&self, seed: u64) -> Result<dynamics::Scenario, CliError> {
        let solver = need(&self.solver, "solver")?;
        let energy = need(&self.energy, "energy")?;
        let reference = self.reference()?;
        let boundary_data = match need(&self.embedding, "embedding")?.current {
            Some(_) => self.current()?,
            None => reference.clone(),
        };
        let g = reference.grid().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = solver.init_noise.unwrap_or(0.0);
        let mut guess = |data: &EmbeddingField| {
            let mut out = reference.clone();
            for i in 0..g.len() {
                if g.is_boundary(i) {
                    out.point_mut(i).copy_from_slice(data.point(i));
                } else if noise != 0.0 {
                    for v in out.point_mut(i) {
                        *v += rng.gen_range(-noise..noise);
                    }
                }
            }
            out
        };
        let mode = match solver.mode {
            SolveMode::Static => Mode::Static {
                initial: guess(&boundary_data),
            },
            SolveMode::Evolution => {
                let time = TimeAxis {
                    t0: solver.t0.unwrap_or(0.0),
                    t1: solver.t1.ok_or_else(|| invalid("[solver] evolution needs 't1'"))?,
                    slices: solver.slices.ok_or_else(|| invalid("[solver] evolution needs 'slices'"))?,
                };
                let end = match &need(&self.embedding, "embedding")?.end {
                    Some(spec) => self.embed(spec)?,
                    None => boundary_data.clone(),
                };
                if time.slices < 2 {
                    return Err(invalid("[solver] evolution needs at least two slices"));
                }
                let last = time.slices - 1;
                let history = (0..time.slices)
                    .map(|t| match t {
                        0 => boundary_data.clone(),
                        t if t == last => end.clone(),
                        _ => {
                            // straight-line guess between the end slices
                            let s = t as f64 / last as f64;
                            let mut e = boundary_data.clone();
                            for (v, w) in e.values_mut().iter_mut().zip(end.values()) {
                                *v = (1.0 - s) * *v + s * w;
                            }
                            e
                        }
                    })
                    .collect();
                Mode::Evolution { time, history }
            }
        };
        let mut s = dynamics::Scenario::new_static(self.ambient_metric()?, reference.clone(), self.model()?, reference);
        s.mode = mode;
        s.boundary = self.boundary_spec()?;
        s.weight = energy.weight.unwrap_or_default();
        s.time_metric = energy.time_metric.unwrap_or(1.0);
        s.stiffness = energy.stiffness.clone();
        if let Some(t) = solver.tol {
            s.solver.tol = t;
        }
        if let Some(m) = solver.max_iters {
            s.solver.max_iters = m;
        }
        s.validate()?;
        Ok(s)
    }

    pub fn classify_section(&self) -> Result<&ClassifySection, CliError> {
        need(&self.classify, "classify")
    }

    pub fn killing_section(&self) -> Result<&KillingSection, CliError> {
        need(&self.killing, "killing")
    }
}

fn parse_face(s: &str) -> Result<Face, CliError> {
    let bad = || invalid(format!("face '{s}' is not of the form -a or +a"));
    let (upper, rest) = match s.split_at_checked(1).ok_or_else(bad)? {
        ("-", r) => (false, r),
        ("+", r) => (true, r),
        _ => return Err(bad()),
    };
    Ok(Face {
        axis: rest.parse().map_err(|_| bad())?,
        upper,
    })
}

impl RegionSpec {
    pub fn build(&self) -> Result<Region, CliError> {
        let given = [
            self.intervals.is_some(),
            self.polygon.is_some(),
            self.rect.is_some(),
            self.segment.is_some(),
            self.point.is_some(),
        ];
        if given.iter().filter(|&&g| g).count() != 1 {
            return Err(invalid(
                "a region needs exactly one of intervals, polygon, rect, segment, point",
            ));
        }
        Ok(if let Some(iv) = &self.intervals {
            let list: Vec<(f64, f64)> = iv.iter().map(|[a, b]| (*a, *b)).collect();
            Region::intervals(&list)?
        } else if let Some(p) = &self.polygon {
            Region::polygon(p)?
        } else if let Some([lo, hi]) = self.rect {
            Region::rect(lo, hi)?
        } else if let Some([a, b]) = self.segment {
            Region::segment(a, b)?
        } else {
            Region::point(self.point.expect("one shape is present"))?
        })
    }
}

impl MapSpec {
    pub fn build(&self, dim: usize) -> Result<Affine, CliError> {
        let linear = match (&self.matrix, self.angle) {
            (Some(_), Some(_)) => return Err(invalid("a map takes either 'matrix' or 'angle', not both")),
            (Some(m), None) => {
                if m.len() != dim || m.iter().any(|r| r.len() != dim) {
                    return Err(invalid(format!("map matrix must be {dim} x {dim}")));
                }
                Affine::new(dim, m.concat(), vec![0.0; dim])?
            }
            (None, Some(a)) if dim == 2 => Affine::rotation(a, self.center.unwrap_or([0.0, 0.0])),
            (None, Some(_)) => return Err(invalid("rotations need a two-dimensional region")),
            (None, None) => Affine::identity(dim)?,
        };
        if self.center.is_some() && self.angle.is_none() {
            return Err(invalid("'center' only applies to rotations"));
        }
        Ok(match &self.translation {
            Some(t) if t.len() != dim => return Err(invalid(format!("translation must have {dim} entries"))),
            Some(t) => linear.then(&Affine::translation(t.clone())?),
            None => linear,
        })
    }
}

impl ClassifySection {
    pub fn deformation(&self) -> Result<AffineDeformation, CliError> {
        let domain = self.domain.build()?;
        let dim = domain.dim();
        match (&self.map, self.cells.is_empty()) {
            (Some(m), true) => Ok(AffineDeformation::new(domain, m.build(dim)?)?),
            (None, false) => {
                let cells = self
                    .cells
                    .iter()
                    .map(|c| Ok((c.region.build()?, c.map.build(dim)?)))
                    .collect::<Result<Vec<_>, CliError>>()?;
                Ok(AffineDeformation::piecewise(domain, cells)?)
            }
            _ => Err(invalid("[classify] needs either 'map' or 'cells'")),
        }
    }

    pub fn window_region(&self) -> Result<Option<Region>, CliError> {
        self.window.as_ref().map(RegionSpec::build).transpose()
    }
}

fn polynomial(vars: usize, terms: &[Term]) -> Result<Polynomial, CliError> {
    Ok(Polynomial::new(vars, terms.iter().map(|t| (t.c, t.e.clone())).collect())?)
}

impl KillingSection {
    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn field(&self, seed: u64) -> Result<VectorField, CliError> {
        let n = self.dim();
        Ok(match &self.field {
            FieldSpec::Affine { matrix, offset } => {
                if matrix.len() != n || matrix.iter().any(|r| r.len() != n) {
                    return Err(invalid(format!("field matrix must be {n} x {n}")));
                }
                VectorField::affine(DMatrix::from_fn(n, n, |r, c| matrix[r][c]), offset.clone())?
            }
            FieldSpec::Polynomial { components } => VectorField::polynomial(
                components
                    .iter()
                    .map(|t| polynomial(n, t))
                    .collect::<Result<Vec<_>, _>>()?,
            )?,
            FieldSpec::Hamiltonian { h } => VectorField::hamiltonian(&polynomial(n, h)?)?,
            FieldSpec::Random { degree, terms } => VectorField::polynomial(random_components(n, *degree, *terms, seed))?,
        })
    }

    pub fn points(&self) -> Result<Vec<Vec<f64>>, CliError> {
        Ok(dstruct::motions::sample_box(&self.lo, &self.hi, &self.counts)?)
    }
}

/// Components with `terms` monomials each, coefficients uniform in `[-1, 1]`.
pub fn random_components(n: usize, degree: u32, terms: usize, seed: u64) -> Vec<Polynomial> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let t = (0..terms)
                .map(|_| {
                    let mut e = vec![0u32; n];
                    for _ in 0..rng.gen_range(0..=degree) {
                        e[rng.gen_range(0..n)] += 1;
                    }
                    (rng.gen_range(-1.0..1.0), e)
                })
                .collect();
            Polynomial::new(n, t).expect("exponents sized to n")
        })
        .collect()
}
