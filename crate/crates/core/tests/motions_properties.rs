use dstruct::geometry::{AmbientMetric, BodyGrid, EmbeddingField};
use dstruct::motions::{
    canonical_omega, contract_omega, euler_flow, history_motion_check, lie_derivative, lie_derivative_with,
    sample_box, symplectic_demo, Derivatives, Polynomial, VectorField,
};
use dstruct::Tensor;
use nalgebra::DMatrix;
use proptest::prelude::*;

/// Random polynomial of total degree at most 3 in `vars` variables.
fn polynomial(vars: usize) -> impl Strategy<Value = Polynomial> {
    prop::collection::vec((-1.0f64..1.0, prop::collection::vec(0u32..=3, vars)), 1..6).prop_map(move |terms| {
        let terms = terms
            .into_iter()
            .filter(|(_, e)| e.iter().sum::<u32>() <= 3)
            .collect();
        Polynomial::new(vars, terms).unwrap()
    })
}

fn field(n: usize) -> impl Strategy<Value = VectorField> {
    prop::collection::vec(polynomial(n), n).prop_map(|c| VectorField::polynomial(c).unwrap())
}

fn point(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, n)
}

fn max_diff(a: &[Tensor], b: &[Tensor]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.sub(y).unwrap().norm_inf()).fold(0.0, f64::max)
}

fn curved_metric(c: &[f64]) -> AmbientMetric {
    let base = Tensor::from_matrix(&DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0])).unwrap();
    AmbientMetric::conformal_exp(base, c.to_vec()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    /// Central differences are second order, so one Richardson step lands on
    /// the analytic result far below the raw error.
    #[test]
    fn finite_differences_converge_to_analytic(
        v in field(2),
        c in prop::collection::vec(-0.5f64..0.5, 2),
        x in point(2),
    ) {
        let theta = curved_metric(&c);
        let pts = vec![x];
        let exact = lie_derivative(&theta, &v, &pts).unwrap();
        let coarse = lie_derivative_with(&theta, &v, &pts, Derivatives::FiniteDifference(1e-3)).unwrap();
        let fine = lie_derivative_with(&theta, &v, &pts, Derivatives::FiniteDifference(5e-4)).unwrap();
        let rich: Vec<Tensor> = fine
            .iter()
            .zip(&coarse)
            .map(|(f, c)| f.scale(4.0 / 3.0).sub(&c.scale(1.0 / 3.0)).unwrap())
            .collect();
        let scale = exact[0].norm_inf().max(1.0);
        prop_assert!(max_diff(&coarse, &exact) <= 1e-4 * scale);
        prop_assert!(max_diff(&rich, &exact) <= 1e-8 * scale, "{}", max_diff(&rich, &exact));
    }

    #[test]
    fn lie_derivative_is_linear_in_the_field(
        v in field(2),
        w in field(2),
        a in -2.0f64..2.0,
        b in -2.0f64..2.0,
        c in prop::collection::vec(-0.5f64..0.5, 2),
        x in point(2),
    ) {
        let theta = curved_metric(&c);
        let pts = vec![x];
        let sum = VectorField::combine(a, &v, b, &w).unwrap();
        let lhs = lie_derivative(&theta, &sum, &pts).unwrap();
        let lv = lie_derivative(&theta, &v, &pts).unwrap();
        let lw = lie_derivative(&theta, &w, &pts).unwrap();
        let rhs = lv[0].scale(a).add(&lw[0].scale(b)).unwrap();
        prop_assert!(lhs[0].sub(&rhs).unwrap().norm_inf() <= 1e-12 * rhs.norm_inf().max(1.0));
    }

    /// Skew linear parts generate isometries of the flat metric; the explicit
    /// Euler flow stays a motion up to its own `O(dt^2)` drift.
    #[test]
    fn killing_fields_generate_motions(s in -1.0f64..1.0, b in point(2)) {
        let v = VectorField::affine(DMatrix::from_row_slice(2, 2, &[0.0, -s, s, 0.0]), b).unwrap();
        let theta = AmbientMetric::euclidean(2);
        let pts = sample_box(&[-1.0, -1.0], &[1.0, 1.0], &[4, 4]).unwrap();
        let lie = lie_derivative(&theta, &v, &pts).unwrap();
        prop_assert!(lie.iter().all(|t| t.norm_inf() <= 1e-14));

        let g = BodyGrid::with_extent(vec![5, 5], &[1.0, 1.0]).unwrap();
        let start = EmbeddingField::identity(&g);
        let history = euler_flow(&start, &v, 1e-4, 20).unwrap();
        prop_assert!(history_motion_check(&history, &theta, 1e-6).unwrap().is_motion);
    }

    #[test]
    fn stretching_fields_are_not_motions(s in 0.1f64..1.0) {
        let v = VectorField::affine(DMatrix::from_row_slice(2, 2, &[s, 0.0, 0.0, 0.0]), vec![0.0, 0.0]).unwrap();
        let g = BodyGrid::with_extent(vec![5, 5], &[1.0, 1.0]).unwrap();
        let history = euler_flow(&EmbeddingField::identity(&g), &v, 1e-2, 10).unwrap();
        prop_assert!(!history_motion_check(&history, &AmbientMetric::euclidean(2), 1e-6).unwrap().is_motion);
    }

    /// Adding a Hamiltonian field shifts the contracted one-form by `dh`.
    #[test]
    fn gauge_shift_by_hamiltonian(m in 1usize..=2, seed in prop::collection::vec(-1.0f64..1.0, 4)) {
        let n = 2 * m;
        let omega = canonical_omega(n).unwrap();
        let h = Polynomial::new(
            n,
            (0..n)
                .map(|i| {
                    let mut e = vec![0; n];
                    e[i] = 2;
                    e[(i + 1) % n] += 1;
                    (seed[i % 4], e)
                })
                .collect(),
        )
        .unwrap();
        let xh = VectorField::hamiltonian(&h).unwrap();
        let a = VectorField::affine(DMatrix::from_fn(n, n, |r, c| seed[(r + 2 * c) % 4]), vec![0.5; n]).unwrap();
        let sum = VectorField::combine(1.0, &a, 1.0, &xh).unwrap();
        let x: Vec<f64> = (0..n).map(|i| 0.3 * seed[(i + 1) % 4] + 0.1).collect();
        let lhs = contract_omega(&sum.eval(&x), &omega);
        let base = contract_omega(&a.eval(&x), &omega);
        for i in 0..n {
            let dh = h.derivative(i).eval(&x);
            prop_assert!((lhs[i] - base[i] - dh).abs() <= 1e-12, "{i}: {} vs {}", lhs[i] - base[i], dh);
        }
    }

    #[test]
    fn cartan_identity_on_r2(v in field(2)) {
        let pts = sample_box(&[-1.0, -1.0], &[1.0, 1.0], &[3, 3]).unwrap();
        let r = symplectic_demo(&v, &canonical_omega(2).unwrap(), &pts).unwrap();
        prop_assert!(r.max_discrepancy <= 1e-6, "{}", r.max_discrepancy);
        prop_assert!(r.antisymmetry <= 1e-12);
    }

    #[test]
    fn cartan_identity_on_r4(v in field(4)) {
        let pts = sample_box(&[-1.0; 4], &[1.0; 4], &[2, 2, 2, 2]).unwrap();
        let r = symplectic_demo(&v, &canonical_omega(4).unwrap(), &pts).unwrap();
        prop_assert!(r.max_discrepancy <= 1e-6, "{}", r.max_discrepancy);
        prop_assert!(r.closedness <= 1e-6);
    }
}

#[test]
fn hamiltonian_fields_preserve_omega() {
    let h = Polynomial::new(2, vec![(0.5, vec![2, 0]), (0.5, vec![0, 2]), (0.3, vec![3, 1])]).unwrap();
    let xh = VectorField::hamiltonian(&h).unwrap();
    let pts = sample_box(&[-1.0, -1.0], &[1.0, 1.0], &[4, 4]).unwrap();
    let r = symplectic_demo(&xh, &canonical_omega(2).unwrap(), &pts).unwrap();
    let worst = r.f_hat.iter().map(|f| f.amax()).fold(0.0, f64::max);
    assert!(worst <= 1e-12, "{worst}");
}

#[test]
fn odd_phase_space_is_rejected() {
    assert!(canonical_omega(3).is_err());
    assert!(VectorField::hamiltonian(&Polynomial::coordinate(3, 0)).is_err());
}
