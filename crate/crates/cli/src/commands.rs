use std::fmt::Write as _;
use std::path::Path;

use dstruct::dynamics::{self, Solution, TraceRow};
use dstruct::energy;
use dstruct::forms::{self, FlatView};
use dstruct::geometry;
use dstruct::motions::{self, canonical_omega};
use dstruct::regions::{continuation_graph, ContinuationGraph, GraphOptions, Label, Measure, Region, DEFAULT_MAX_DEPTH};
use nalgebra::DMatrix;
use serde::Serialize;

use crate::output::{self, cells, csv, OutDir};
use crate::scenario::ScenarioFile;
use crate::{bundled, Cli, CliError, Command, GlobalOpts};

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let g = &cli.global;
    let mut out = OutDir::create(&g.out, g.json_indent)?;
    match &cli.command {
        Command::Admissible { m_range, k_max, d_max } => admissible(&mut out, m_range[0], m_range[1], *k_max, *d_max)?,
        Command::Flatten { scenario } => flatten(&mut out, &load(scenario)?)?,
        Command::Strain { scenario } => strain(&mut out, &load(scenario)?)?,
        Command::Energy { scenario } => energy_cmd(&mut out, &load(scenario)?)?,
        Command::SolveStatic { scenario, max_iters } => solve(&mut out, &load(scenario)?, g, *max_iters, false)?,
        Command::SolveEvolution { scenario, max_iters } => solve(&mut out, &load(scenario)?, g, *max_iters, true)?,
        Command::KillingCheck { scenario, conformal } => killing(&mut out, &load(scenario)?, g, *conformal)?,
        Command::Classify { scenario, dot } => classify(&mut out, &load(scenario)?, *dot)?,
        Command::DemoSymplectic { scenario } => symplectic(&mut out, &load(scenario)?, g)?,
        Command::BundleExamples { dir } => {
            let dir = dir.clone().unwrap_or_else(|| g.out.join("scenarios"));
            let mut target = OutDir::create(&dir, g.json_indent)?;
            for (name, text) in bundled::SCENARIOS {
                target.write_text(name, text)?;
            }
            print!("{}", output::summary(target.written()));
        }
    }
    print!("{}", output::summary(out.written()));
    Ok(())
}

fn load(path: &Path) -> Result<ScenarioFile, CliError> {
    ScenarioFile::load(path)
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect()
}

pub fn admissible_csv(m_min: i64, m_max: i64, k_max: usize, d_max: usize) -> String {
    let rows = forms::admissible_table(m_min, m_max, k_max, d_max)
        .into_iter()
        .map(|t| vec![t.m.to_string(), t.k.to_string(), t.d.to_string(), t.l.to_string(), t.p.to_string()]);
    csv(&["m", "k", "d", "l", "P"].map(String::from), rows)
}

fn admissible(out: &mut OutDir, m_min: i64, m_max: i64, k_max: usize, d_max: usize) -> Result<(), CliError> {
    if m_min > m_max || k_max == 0 || d_max == 0 {
        return Err(CliError::Validation("need MIN <= MAX, --k-max >= 1 and --d-max >= 1".into()));
    }
    let text = admissible_csv(m_min, m_max, k_max, d_max);
    print!("{text}");
    out.write_text("admissible.csv", &text)?;
    Ok(())
}

#[derive(Serialize)]
struct FlattenReport {
    point: Vec<f64>,
    degree: usize,
    dim: usize,
    flat: Vec<Vec<f64>>,
    det: f64,
    trace: f64,
    /// Flat inverse, absent when the form is singular.
    inverse: Option<Vec<Vec<f64>>>,
    admissibility: forms::Admissibility,
}

fn flatten(out: &mut OutDir, s: &ScenarioFile) -> Result<(), CliError> {
    let theta = s.ambient_metric()?;
    let point = s.ambient_point()?;
    let t = theta.eval(&point)?;
    let FlatView { matrix, .. } = forms::flatten(&t)?;
    let inverse = match forms::flat_inverse(&t) {
        Ok(inv) => Some(matrix_rows(&forms::flatten(&inv)?.matrix)),
        Err(dstruct::Error::Singular { .. }) => None,
        Err(e) => return Err(e.into()),
    };
    let report = FlattenReport {
        point,
        degree: t.degree(),
        dim: t.dim(),
        flat: matrix_rows(&matrix),
        det: forms::overline_det(&t)?,
        trace: forms::flat_trace(&t)?,
        inverse,
        admissibility: forms::admissibility(t.degree() / 2, t.dim()),
    };
    out.write_json("flatten.json", &report)?;
    Ok(())
}

#[derive(Serialize)]
struct StrainReport {
    nodes: usize,
    max_abs_delta: f64,
    /// `[Delta^(1), Delta^(2), Delta^(3)]` per node.
    invariants: Vec<[f64; 3]>,
    delta: geometry::TensorField,
}

fn measure_current(s: &ScenarioFile) -> Result<(geometry::DeformationMeasure, dstruct::geometry::EmbeddingField), CliError> {
    let theta = s.ambient_metric()?;
    let current = s.current()?;
    let dm = geometry::deformation_measure(&current, &s.reference()?, &theta)?;
    Ok((dm, current))
}

fn per_node(inv: &[Vec<f64>]) -> Vec<[f64; 3]> {
    (0..inv[0].len()).map(|i| [inv[0][i], inv[1][i], inv[2][i]]).collect()
}

fn strain(out: &mut OutDir, s: &ScenarioFile) -> Result<(), CliError> {
    let (dm, current) = measure_current(s)?;
    let inv = geometry::invariants(&dm, 3)?;
    let report = StrainReport {
        nodes: dm.delta.len(),
        max_abs_delta: dm.delta.values.iter().map(|t| t.norm_inf()).fold(0.0, f64::max),
        invariants: per_node(&inv),
        delta: dm.delta,
    };
    out.write_json("strain.json", &report)?;
    let cols: Vec<(&str, Vec<Vec<f64>>)> = ["delta1", "delta2", "delta3"]
        .into_iter()
        .zip(inv)
        .map(|(n, v)| (n, vec![v]))
        .collect();
    out.write_text("plotdata.csv", &output::plotdata(&[current], &cols))?;
    Ok(())
}

#[derive(Serialize)]
struct EnergyReport {
    order: usize,
    /// `sum_i w_i F_0(i)` with the grid's trapezoidal weights.
    integral: f64,
    density: Vec<f64>,
    stress_max: f64,
    stress: geometry::TensorField,
}

fn energy_cmd(out: &mut OutDir, s: &ScenarioFile) -> Result<(), CliError> {
    let model = s.model()?;
    let (dm, current) = measure_current(s)?;
    let inv = geometry::invariants(&dm, 3)?;
    let density = energy::energy_density(&model, &inv);
    let sigma = energy::stress(&model, &dm)?;
    let weights = current.grid().weights();
    let report = EnergyReport {
        order: model.order(),
        integral: density.iter().zip(&weights).map(|(f, w)| f * w).sum(),
        stress_max: sigma.values.iter().map(|t| t.norm_inf()).fold(0.0, f64::max),
        density: density.clone(),
        stress: sigma,
    };
    out.write_json("energy.json", &report)?;
    out.write_text("plotdata.csv", &output::plotdata(&[current], &[("energy", vec![density])]))?;
    Ok(())
}

fn trace_csv(trace: &[TraceRow]) -> String {
    csv(
        &["iteration", "action", "grad_norm"].map(String::from),
        trace
            .iter()
            .map(|r| vec![r.iteration.to_string(), r.action.to_string(), r.grad_norm.to_string()]),
    )
}

fn residuals_csv(sol: &Solution) -> String {
    let n = sol.slices[0].ambient_dim();
    let mut header = vec!["slice".to_string(), "node".to_string()];
    header.extend((0..n).map(|a| format!("r_{a}")));
    header.push("weight".into());
    let nodes = sol.slices[0].grid().len();
    let rows = (0..sol.slices.len()).flat_map(|t| {
        (0..nodes).map(move |i| {
            let mut r = vec![t.to_string(), i.to_string()];
            r.extend(cells(sol.residual.at(t, i, n)));
            r.push(sol.residual.weights[t][i].to_string());
            r
        })
    });
    csv(&header, rows)
}

#[derive(Serialize)]
struct SolutionReport<'a> {
    mode: &'static str,
    action: f64,
    iterations: usize,
    interior_residual: dynamics::ResidualNorms,
    boundary: &'a [dynamics::FaceReport],
    endpoint_flux: f64,
    slices: &'a [geometry::EmbeddingField],
}

fn solve(out: &mut OutDir, s: &ScenarioFile, g: &GlobalOpts, max_iters: Option<usize>, evolution: bool) -> Result<(), CliError> {
    let mut sc = s.dynamics(g.seed)?;
    if sc.is_static() == evolution {
        let want = if evolution { "evolution" } else { "static" };
        return Err(CliError::Validation(format!("[solver] mode must be \"{want}\" for this command")));
    }
    if let Some(t) = g.tol {
        sc.solver.tol = t;
    }
    if let Some(m) = max_iters {
        sc.solver.max_iters = m;
    }
    let result = if evolution {
        dynamics::solve_evolution(&sc)
    } else {
        dynamics::solve_static(&sc)
    };
    let sol = match result {
        Ok(sol) => sol,
        Err(dstruct::Error::Convergence { iterations, grad_norm, trace }) => {
            out.write_text("trace.csv", &trace_csv(&trace))?;
            print!("{}", output::summary(out.written()));
            return Err(CliError::Convergence(format!(
                "no convergence after {iterations} iterations (gradient norm {grad_norm:.3e})"
            )));
        }
        Err(e) => return Err(e.into()),
    };
    let report = SolutionReport {
        mode: if evolution { "evolution" } else { "static" },
        action: sol.action,
        iterations: sol.iterations,
        interior_residual: sol.residual.interior,
        boundary: &sol.residual.boundary,
        endpoint_flux: sol.residual.endpoint_flux,
        slices: &sol.slices,
    };
    out.write_json("solution.json", &report)?;
    out.write_text("residuals.csv", &residuals_csv(&sol))?;
    out.write_text("trace.csv", &trace_csv(&sol.trace))?;
    out.write_text("plotdata.csv", &output::plotdata(&sol.slices, &[]))?;
    Ok(())
}

#[derive(Serialize)]
struct PhiStats {
    min: f64,
    max: f64,
    mean: f64,
}

#[derive(Serialize)]
struct KillingOutput {
    conformal: bool,
    points: usize,
    max_norm: f64,
    mean_norm: f64,
    tolerance: f64,
    is_motion: bool,
    flagged: Vec<usize>,
    phi: Option<PhiStats>,
    residual_norms: Vec<f64>,
}

fn killing(out: &mut OutDir, s: &ScenarioFile, g: &GlobalOpts, conformal_flag: bool) -> Result<(), CliError> {
    let k = s.killing_section()?;
    let theta = s.ambient_metric()?;
    let v = k.field(g.seed)?;
    let pts = k.points()?;
    let conformal = conformal_flag || k.conformal;
    let tol = g.tol.or(k.tolerance).unwrap_or(1e-10);
    let r = motions::killing_residual(&theta, &v, &pts, conformal, tol)?;
    let phi = r.phi.as_ref().and_then(|phi| {
        let vals: Vec<f64> = phi.iter().flatten().copied().collect();
        (!vals.is_empty()).then(|| PhiStats {
            min: vals.iter().copied().fold(f64::INFINITY, f64::min),
            max: vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean: vals.iter().sum::<f64>() / vals.len() as f64,
        })
    });
    let report = KillingOutput {
        conformal,
        points: pts.len(),
        max_norm: r.max_norm,
        mean_norm: r.mean_norm,
        tolerance: r.tolerance,
        is_motion: r.is_motion,
        flagged: r.flagged.clone(),
        phi,
        residual_norms: r.residual.iter().map(|t| t.norm_inf()).collect(),
    };
    out.write_json("killing_report.json", &report)?;
    Ok(())
}

#[derive(Serialize)]
struct Node<'a> {
    n: usize,
    s: i64,
    code: &'a str,
    label: Label,
    measure: Measure,
    components: usize,
    fixed_set: Option<&'a Region>,
}

#[derive(Serialize)]
struct TypeInfo<'a> {
    order: usize,
    classes: &'a [Label],
    fixed_set: Option<&'a Region>,
}

#[derive(Serialize)]
struct ClassificationOutput<'a> {
    nodes: Vec<Node<'a>>,
    #[serde(rename = "type")]
    kind: Option<TypeInfo<'a>>,
    type_string: String,
    depth: usize,
    diamond_violations: usize,
    absorbing_violations: usize,
    disconnected_orders: &'a [usize],
}

pub fn classification_json(g: &ContinuationGraph, indent: usize) -> Result<String, CliError> {
    let nodes = g
        .arrows
        .iter()
        .map(|a| Node {
            n: a.n,
            s: a.s,
            code: &a.code,
            label: a.label,
            measure: a.measure,
            components: a.components,
            fixed_set: a.fixed_set.as_ref(),
        })
        .collect();
    let kind = g.stabilization.as_ref().map(|st| TypeInfo {
        order: st.order,
        classes: &st.classes,
        fixed_set: st.fixed_set.as_ref(),
    });
    output::to_json(
        &ClassificationOutput {
            nodes,
            kind,
            type_string: g.type_string(),
            depth: g.depth,
            diamond_violations: g.diamond_violations,
            absorbing_violations: g.absorbing_violations,
            disconnected_orders: &g.disconnected_orders,
        },
        indent,
    )
}

/// One vertex per `(n, s)`, one edge per continuation.
pub fn graph_dot(g: &ContinuationGraph) -> String {
    let mut s = String::from("digraph continuations {\n  rankdir=LR;\n");
    let mut seen = std::collections::BTreeSet::new();
    for a in &g.arrows {
        if seen.insert((a.n, a.s)) {
            let _ = writeln!(s, "  \"{}_{}\" [label=\"({}, {})\\n{}\"];", a.n, a.s, a.n, a.s, a.label);
        }
    }
    for a in g.arrows.iter().filter(|a| a.n > 0) {
        let step = if a.code.ends_with('+') { 1 } else { -1 };
        let _ = writeln!(
            s,
            "  \"{}_{}\" -> \"{}_{}\" [label=\"{}\"];",
            a.n - 1,
            a.s - step,
            a.n,
            a.s,
            if step > 0 { "+" } else { "-" }
        );
    }
    s.push_str("}\n");
    s
}

pub fn classify_graph(s: &ScenarioFile) -> Result<ContinuationGraph, CliError> {
    let c = s.classify_section()?;
    let z = c.deformation()?;
    let opts = GraphOptions {
        max_depth: c.depth.unwrap_or(DEFAULT_MAX_DEPTH),
        window: c.window_region()?,
    };
    Ok(continuation_graph(&z, &opts)?)
}

fn classify(out: &mut OutDir, s: &ScenarioFile, dot_flag: bool) -> Result<(), CliError> {
    let g = classify_graph(s)?;
    let indent = out.indent();
    out.write_text("classification.json", &classification_json(&g, indent)?)?;
    if dot_flag || s.classify_section()?.dot {
        out.write_text("graph.dot", &graph_dot(&g))?;
    }
    println!("{}", g.type_string());
    Ok(())
}

#[derive(Serialize)]
struct SymplecticOutput {
    dim: usize,
    points: usize,
    max_discrepancy: f64,
    antisymmetry: f64,
    closedness: f64,
    tolerance: f64,
    holds: bool,
}

fn symplectic(out: &mut OutDir, s: &ScenarioFile, g: &GlobalOpts) -> Result<(), CliError> {
    let k = s.killing_section()?;
    let a = k.field(g.seed)?;
    let pts = k.points()?;
    let omega = canonical_omega(k.dim())?;
    let r = motions::symplectic_demo(&a, &omega, &pts)?;
    let tolerance = g.tol.or(k.tolerance).unwrap_or(1e-8);
    out.write_json(
        "symplectic_report.json",
        &SymplecticOutput {
            dim: k.dim(),
            points: pts.len(),
            max_discrepancy: r.max_discrepancy,
            antisymmetry: r.antisymmetry,
            closedness: r.closedness,
            tolerance,
            holds: r.max_discrepancy <= tolerance,
        },
    )?;
    Ok(())
}
