use dstruct::dynamics::{
    self, BoundaryCondition, BoundarySpec, Mode, Scenario, SlidingChart, TimeAxis,
};
use dstruct::energy::{EnergyModel, LameTable, Potential, VolumeWeight};
use dstruct::geometry::{AmbientMetric, BodyGrid, EmbeddingField, Face, Stencil};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn with_boundary_of(init: &EmbeddingField, boundary: &EmbeddingField) -> EmbeddingField {
    let mut out = init.clone();
    let g = init.grid().clone();
    for i in 0..g.len() {
        if g.is_boundary(i) {
            out.point_mut(i).copy_from_slice(boundary.point(i));
        }
    }
    out
}

fn polyakov_scenario(count: usize, a: &DMatrix<f64>, b: &[f64]) -> (Scenario, EmbeddingField) {
    let g = BodyGrid::with_extent(vec![count, count], &[1.0, 1.0]).unwrap();
    let reference = EmbeddingField::from_fn(&g, 3, |x| vec![x[0], x[1], 0.0]).unwrap();
    let target = EmbeddingField::affine(&g, a, b).unwrap();
    let model = EnergyModel::elastic_only(1, LameTable::polyakov(1.0)).unwrap();
    let init = with_boundary_of(&reference, &target);
    let mut s = Scenario::new_static(AmbientMetric::euclidean(3), reference, model, init);
    s.weight = VolumeWeight::Background;
    (s, target)
}

fn random_interior_perturbation(g: &BodyGrid, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..g.len() * n)
        .map(|k| if g.is_boundary(k / n) { 0.0 } else { rng.gen_range(-1.0..1.0) })
        .collect()
}

#[test]
fn polyakov_pinned_affine_converges_to_affine() {
    let a = DMatrix::from_row_slice(3, 2, &[1.1, 0.2, -0.1, 0.9, 0.3, 0.4]);
    let b = [0.5, -0.2, 1.0];
    let (s, target) = polyakov_scenario(33, &a, &b);
    let sol = dynamics::solve_static(&s).unwrap();
    let err = sol.slices[0]
        .values()
        .iter()
        .zip(target.values())
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    assert!(err <= 1e-6, "node error {err}");
    assert!(sol.residual.interior.max <= 1e-8);
    // with T = 1 the residual is exactly div Dy
    let coupled = dynamics::polyakov_coupled_residuals(&s.ambient, &sol.slices[0], &s.reference).unwrap();
    assert!(coupled.div_dy_max <= 1e-8);
}

#[test]
fn polyakov_solution_is_independent_of_initial_guess() {
    let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.1, 0.0, 1.2, 0.2, 0.1]);
    let (mut s, target) = polyakov_scenario(9, &a, &[0.0; 3]);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut results = Vec::new();
    for _ in 0..2 {
        let noise: Vec<f64> = (0..target.values().len()).map(|_| rng.gen_range(-0.2..0.2)).collect();
        let mut init = target.clone();
        for (v, e) in init.values_mut().iter_mut().zip(&noise) {
            *v += e;
        }
        s.mode = Mode::Static { initial: with_boundary_of(&init, &target) };
        results.push(dynamics::solve_static(&s).unwrap().slices.remove(0));
    }
    let diff = results[0]
        .values()
        .iter()
        .zip(results[1].values())
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    assert!(diff <= 1e-6, "{diff}");
}

#[test]
fn descent_is_monotone() {
    let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.5, 0.5]);
    let (mut s, target) = polyakov_scenario(9, &a, &[0.0; 3]);
    let init = target.map_points(|p| vec![p[0] + 0.3 * (3.0 * p[1]).sin(), p[1], p[2] * p[2]]).unwrap();
    s.mode = Mode::Static { initial: with_boundary_of(&init, &target) };
    let sol = dynamics::solve_static(&s).unwrap();
    for w in sol.trace.windows(2) {
        // strict for all steps above rounding noise of the action
        assert!(w[1].action <= w[0].action + 1e-12 * w[0].action.abs().max(1.0), "{w:?}");
    }
    assert!(sol.trace.len() > 2);
}

/// Dense linear-solve oracle for a Hooke bar under a small body force,
/// linearized about the reference: (4 mu + 2 lambda) 2 D^T W D u = -W g.
#[test]
fn hooke_bar_matches_linear_oracle() {
    let (mu, lambda, gforce) = (1.0, 1.5, 1e-2);
    let g = BodyGrid::with_extent(vec![21], &[1.0]).unwrap();
    let reference = EmbeddingField::identity(&g);
    let model = EnergyModel::new(2, LameTable::hooke(mu, lambda), None, Potential::Linear(vec![gforce])).unwrap();
    let mut s = Scenario::new_static(AmbientMetric::euclidean(1), reference.clone(), model, reference.clone());
    s.weight = VolumeWeight::Background;
    s.solver.tol = 1e-12;
    let sol = dynamics::solve_static(&s).unwrap();

    let n = g.len();
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        for (j, c) in g.stencil(i, 0, Stencil::SummationByParts) {
            d[(i, j)] = c;
        }
    }
    let w = DMatrix::from_diagonal(&DVector::from_vec(g.weights()));
    let k = d.transpose() * &w * &d * (2.0 * (4.0 * mu + 2.0 * lambda));
    let interior: Vec<usize> = (1..n - 1).collect();
    let kk = DMatrix::from_fn(interior.len(), interior.len(), |r, c| k[(interior[r], interior[c])]);
    let rhs = DVector::from_fn(interior.len(), |r, _| -g.weight(interior[r]) * gforce);
    let u = kk.lu().solve(&rhs).unwrap();
    let mut err: f64 = 0.0;
    for (r, &i) in interior.iter().enumerate() {
        let disp = sol.slices[0].point(i)[0] - g.coords(i)[0];
        err = err.max((disp - u[r]).abs());
    }
    assert!(u.amax() > 1e-5, "oracle displacement should be visible");
    assert!(err <= 1e-6, "{err} vs oracle amplitude {}", u.amax());
}

#[test]
fn static_action_gradient_matches_finite_differences() {
    let g = BodyGrid::new(vec![5, 4], vec![0.25, 0.3]).unwrap();
    let reference = EmbeddingField::identity(&g);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let table = LameTable { mu1_1: 0.8, mu2_01: 1.0, mu2_20: 0.5, mu3_001: 0.3, mu3_110: 0.1, mu3_300: 0.2, mu0: 0.1 };
    let model = EnergyModel::new(3, table, None, Potential::Quadratic(vec![0.5, 1.0])).unwrap();
    let theta = AmbientMetric::conformal_exp(dstruct::Tensor::identity(1, 2), vec![0.2, -0.1]).unwrap();
    let cur = reference
        .map_points(|p| vec![p[0] + 0.05 * (2.0 * p[1]).sin(), p[1] * 1.1 + 0.03 * p[0] * p[0]])
        .unwrap();
    let s = Scenario::new_static(theta, reference, model, cur.clone());
    let r = dynamics::el_residual(&s, std::slice::from_ref(&cur)).unwrap();
    for _ in 0..20 {
        let dx = random_interior_perturbation(&g, 2, &mut rng);
        let shifted = |h: f64| {
            let mut e = cur.clone();
            for (v, d) in e.values_mut().iter_mut().zip(&dx) {
                *v += h * d;
            }
            dynamics::action(&s, &[e]).unwrap()
        };
        let fd = |h: f64| (shifted(h) - shifted(-h)) / (2.0 * h);
        let h = 1e-4;
        let rich = (4.0 * fd(h / 2.0) - fd(h)) / 3.0;
        let pairing: f64 = (0..dx.len()).map(|k| r.weights[0][k / 2] * r.residual[0][k] * dx[k]).sum();
        let rel = (rich + pairing).abs() / rich.abs().max(1e-12);
        assert!(rel <= 1e-5, "{rich} vs {}", -pairing);
    }
}

fn bar_history(g: &BodyGrid, slices: usize, amp: f64) -> Vec<EmbeddingField> {
    let ends = EmbeddingField::from_fn(g, 1, |x| vec![x[0] + amp * (std::f64::consts::PI * x[0]).sin()]).unwrap();
    let mid = EmbeddingField::identity(g);
    (0..slices)
        .map(|t| if t == 0 || t + 1 == slices { ends.clone() } else { mid.clone() })
        .collect()
}

#[test]
fn evolution_action_gradient_matches_finite_differences() {
    let g = BodyGrid::new(vec![4, 3], vec![0.3, 0.4]).unwrap();
    let reference = EmbeddingField::identity(&g);
    let kin = LameTable { mu2_01: 0.5, mu1_1: 0.1, ..Default::default() };
    let model = EnergyModel::new(2, LameTable::hooke(1.0, 0.7), Some(kin), Potential::Linear(vec![0.0, 0.3])).unwrap();
    let time = TimeAxis { t0: 0.0, t1: 0.5, slices: 5 };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let history: Vec<EmbeddingField> = (0..time.slices)
        .map(|t| {
            let s = t as f64 * 0.1;
            reference
                .map_points(|p| vec![p[0] * (1.0 + 0.1 * s) + 0.02 * p[1] * p[1], p[1] + 0.05 * s * p[0]])
                .unwrap()
        })
        .collect();
    let mut s = Scenario::new_static(AmbientMetric::euclidean(2), reference.clone(), model, reference);
    s.mode = Mode::Evolution { time, history: history.clone() };
    s.time_metric = 1.3;
    let r = dynamics::el_residual(&s, &history).unwrap();
    for _ in 0..20 {
        let dx: Vec<Vec<f64>> = (0..time.slices)
            .map(|t| {
                if t == 0 || t + 1 == time.slices {
                    vec![0.0; g.len() * 2]
                } else {
                    random_interior_perturbation(&g, 2, &mut rng)
                }
            })
            .collect();
        let shifted = |h: f64| {
            let moved: Vec<EmbeddingField> = history
                .iter()
                .zip(&dx)
                .map(|(e, d)| {
                    let mut e = e.clone();
                    for (v, dv) in e.values_mut().iter_mut().zip(d) {
                        *v += h * dv;
                    }
                    e
                })
                .collect();
            dynamics::action(&s, &moved).unwrap()
        };
        let fd = |h: f64| (shifted(h) - shifted(-h)) / (2.0 * h);
        let h = 1e-4;
        let rich = (4.0 * fd(h / 2.0) - fd(h)) / 3.0;
        let pairing: f64 = (0..time.slices)
            .map(|t| (0..dx[t].len()).map(|k| r.weights[t][k / 2] * r.residual[t][k] * dx[t][k]).sum::<f64>())
            .sum();
        let rel = (rich + pairing).abs() / rich.abs().max(1e-12);
        assert!(rel <= 1e-5, "{rich} vs {}", -pairing);
    }
}

#[test]
fn equal_endpoints_give_constant_history() {
    let g = BodyGrid::with_extent(vec![5], &[1.0]).unwrap();
    let reference = EmbeddingField::identity(&g);
    let stretched = reference.map_points(|p| vec![1.1 * p[0]]).unwrap();
    let kinetic = LameTable { mu2_01: 0.5, ..LameTable::default() };
    let model = EnergyModel::new(2, LameTable::hooke(1.0, 1.0), Some(kinetic), Potential::None).unwrap();
    let mut s = Scenario::new_static(AmbientMetric::euclidean(1), reference.clone(), model, reference);
    let time = TimeAxis { t0: 0.0, t1: 1.0, slices: 6 };
    let mut history = vec![stretched.clone(); time.slices];
    // interior-node kick as the initial guess; the pinned ends keep the stretch
    history[2] = stretched.map_points(|p| vec![p[0] + 0.01 * p[0] * (1.1 - p[0])]).unwrap();
    s.mode = Mode::Evolution { time, history };
    let sol = dynamics::solve_evolution(&s).unwrap();
    assert!(sol.residual.interior.max <= 1e-8);
    for e in &sol.slices {
        for (a, b) in e.values().iter().zip(stretched.values()) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}

#[test]
fn rigid_translation_history_has_zero_action() {
    let g = BodyGrid::new(vec![4, 4], vec![0.3, 0.3]).unwrap();
    let reference = EmbeddingField::identity(&g);
    let model = EnergyModel::elastic_only(2, LameTable::hooke(1.0, 1.0)).unwrap();
    let time = TimeAxis { t0: 0.0, t1: 1.0, slices: 5 };
    let history: Vec<EmbeddingField> = (0..time.slices)
        .map(|t| {
            let c = if t + 1 == time.slices { 1.0 } else { 0.0 };
            reference.map_points(|p| vec![p[0] + 2.0 * c, p[1] - c]).unwrap()
        })
        .collect();
    let mut s = Scenario::new_static(AmbientMetric::euclidean(2), reference.clone(), model, reference);
    s.boundary = BoundarySpec { default: BoundaryCondition::Free, faces: vec![] };
    s.mode = Mode::Evolution { time, history };
    let sol = dynamics::solve_evolution(&s).unwrap();
    assert!(sol.action.abs() < 1e-12, "{}", sol.action);
    assert!(sol.residual.interior.max <= 1e-8);
}

/// Kinetic 1/2 Delta_dot^(2) plus Hooke on a pinned bar: the linearized mode
/// amplitude obeys q'' = kappa^2 q with kappa^2 = 2 mu + lambda, so with equal
/// end amplitudes q(t) = q_end cosh(kappa (t - T/2)) / cosh(kappa T / 2).
#[test]
fn evolution_normal_mode_matches_linear_oracles() {
    let (mu, lambda, amp) = (1.0, 1.0, 1e-4);
    let g = BodyGrid::with_extent(vec![8], &[1.0]).unwrap();
    let reference = EmbeddingField::identity(&g);
    let kin = LameTable { mu2_01: 0.5, ..Default::default() };
    let model = EnergyModel::new(2, LameTable::hooke(mu, lambda), Some(kin), Potential::None).unwrap();
    let time = TimeAxis { t0: 0.0, t1: 1.0, slices: 16 };
    let mut s = Scenario::new_static(AmbientMetric::euclidean(1), reference.clone(), model, reference);
    s.weight = VolumeWeight::Background;
    s.solver.tol = 1e-11;
    s.mode = Mode::Evolution { time, history: bar_history(&g, time.slices, amp) };
    let sol = dynamics::solve_evolution(&s).unwrap();

    let node = 3;
    let disp = |t: usize| sol.slices[t].point(node)[0] - g.coords(node)[0];
    // time-discrete oracle: minimize sum_c dt a ((q_{t+1}-q_t)/dt)^2 + sum_t wt b q_t^2
    let (a, b) = (2.0, 4.0 * mu + 2.0 * lambda);
    let m = time.slices;
    let dt = time.dt();
    let mut k = DMatrix::<f64>::zeros(m, m);
    for c in 0..m - 1 {
        let v = 2.0 * a / dt;
        k[(c, c)] += v;
        k[(c + 1, c + 1)] += v;
        k[(c, c + 1)] -= v;
        k[(c + 1, c)] -= v;
    }
    for t in 0..m {
        let wt = if t == 0 || t + 1 == m { 0.5 * dt } else { dt };
        k[(t, t)] += 2.0 * b * wt;
    }
    let q_end = disp(0);
    let inner = DMatrix::from_fn(m - 2, m - 2, |r, c| k[(r + 1, c + 1)]);
    let rhs = DVector::from_fn(m - 2, |r, _| -(k[(r + 1, 0)] + k[(r + 1, m - 1)]) * q_end);
    let q = inner.lu().solve(&rhs).unwrap();
    for t in 1..m - 1 {
        assert!((disp(t) - q[t - 1]).abs() <= 1e-3 * q_end.abs(), "t={t}");
    }

    let kappa = (2.0 * mu + lambda).sqrt();
    let mid = 0.5 * (disp(m / 2 - 1) + disp(m / 2));
    let half = 0.5 * (time.t1 - time.t0);
    // the two middle samples straddle T/2 by dt/2
    let ratio = q_end / mid * (kappa * 0.5 * dt).cosh();
    let kappa_est = ratio.acosh() / half;
    assert!((kappa_est - kappa).abs() <= 0.02 * kappa, "{kappa_est} vs {kappa}");
}

#[test]
fn free_boundary_flux_vanishes_at_minimizer() {
    let g = BodyGrid::with_extent(vec![7, 7], &[1.0, 1.0]).unwrap();
    let reference = EmbeddingField::identity(&g);
    let init = reference.map_points(|p| vec![1.2 * p[0], p[1] + 0.1 * p[0] * p[1]]).unwrap();
    let init = with_boundary_of(&init, &init);
    let model = EnergyModel::elastic_only(2, LameTable::hooke(1.0, 1.0)).unwrap();
    let mut s = Scenario::new_static(AmbientMetric::euclidean(2), reference, model, init);
    s.boundary = BoundarySpec::pinned()
        .with_face(Face { axis: 1, upper: true }, BoundaryCondition::Free);
    let sol = dynamics::solve_static(&s).unwrap();
    let free = sol.residual.boundary.iter().find(|f| f.condition == "free").unwrap();
    assert!(free.residual_norm <= 1e-6, "{}", free.residual_norm);
    let pinned_report: Vec<_> = sol.residual.boundary.iter().filter(|f| f.condition == "pinned").collect();
    assert!(pinned_report.iter().all(|f| f.residual_norm == 0.0));
}

#[test]
fn sliding_boundary_is_tangentially_stationary() {
    let g = BodyGrid::with_extent(vec![7, 7], &[1.0, 1.0]).unwrap();
    let reference = EmbeddingField::identity(&g);
    // push the body to the right; the upper x face may slide along x = 1.3
    let init = reference.map_points(|p| vec![1.3 * p[0], p[1]]).unwrap();
    let model = EnergyModel::elastic_only(2, LameTable::hooke(1.0, 0.5)).unwrap();
    let mut s = Scenario::new_static(AmbientMetric::euclidean(2), reference, model, init);
    let chart = SlidingChart { point: vec![1.3, 0.0], normals: vec![vec![1.0, 0.0]] };
    s.boundary = BoundarySpec::pinned()
        .with_face(Face { axis: 0, upper: true }, BoundaryCondition::Sliding(chart))
        .with_face(Face { axis: 1, upper: false }, BoundaryCondition::Free)
        .with_face(Face { axis: 1, upper: true }, BoundaryCondition::Free);
    let sol = dynamics::solve_static(&s).unwrap();
    let sliding = sol.residual.boundary.iter().find(|f| f.condition == "sliding").unwrap();
    assert!(sliding.residual_norm <= 1e-6);
    // nodes stay on the chart
    for i in (0..g.len()).filter(|&i| g.multi_index(i)[0] == 6) {
        assert!((sol.slices[0].point(i)[0] - 1.3).abs() < 1e-12);
    }
    // the normal reaction does not vanish
    let i = g.node(&[6, 3]);
    assert!(sol.residual.residual[0][2 * i].abs() > 1e-3);
}

#[test]
fn rigid_motion_of_solution_stays_converged() {
    let g = BodyGrid::with_extent(vec![7, 7], &[1.0, 1.0]).unwrap();
    let reference = EmbeddingField::identity(&g);
    let target = reference.map_points(|p| vec![1.1 * p[0] + 0.1 * p[1] * p[1], p[1]]).unwrap();
    let model = EnergyModel::elastic_only(2, LameTable::hooke(1.0, 1.0)).unwrap();
    let init = with_boundary_of(&reference, &target);
    let mut s = Scenario::new_static(AmbientMetric::euclidean(2), reference.clone(), model, init);
    let sol = dynamics::solve_static(&s).unwrap();
    let (c, sn) = (0.6f64, 0.8f64);
    let moved = sol.slices[0].map_points(|p| vec![c * p[0] - sn * p[1] + 3.0, sn * p[0] + c * p[1] - 1.0]).unwrap();
    s.mode = Mode::Static { initial: moved.clone() };
    let r = dynamics::el_residual(&s, std::slice::from_ref(&moved)).unwrap();
    assert!(r.interior.max <= 1e-8);
    let a0 = sol.action;
    let a1 = dynamics::action(&s, &[moved]).unwrap();
    assert!((a0 - a1).abs() <= 1e-10);
}
