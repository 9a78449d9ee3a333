//! Dyadic data keeps every vertex exactly representable, so the set algebra
//! below is exact up to the snapping tolerance.

use dstruct::regions::{
    classify_simple, consequent_identities, continuation_graph, self_intersection_code, Affine,
    AffineDeformation, BoolMatrix, GraphOptions, Label, Region,
};
use proptest::prelude::*;

fn dyadic(lo: i32, hi: i32) -> impl Strategy<Value = f64> {
    (lo..=hi).prop_map(|k| k as f64 / 4.0)
}

fn interval() -> impl Strategy<Value = Region> {
    (dyadic(-8, 8), dyadic(1, 12)).prop_map(|(lo, len)| Region::interval(lo, lo + len).unwrap())
}

fn rect() -> impl Strategy<Value = Region> {
    (dyadic(-8, 8), dyadic(-8, 8), dyadic(1, 8), dyadic(1, 8))
        .prop_map(|(x, y, w, h)| Region::rect([x, y], [x + w, y + h]).unwrap())
}

fn scale2() -> impl Strategy<Value = f64> {
    (-1i32..=1).prop_map(|a| 2f64.powi(a))
}

fn affine1() -> impl Strategy<Value = Affine> {
    (scale2(), prop::bool::ANY, dyadic(-12, 12))
        .prop_map(|(s, flip, b)| Affine::new(1, vec![if flip { -s } else { s }], vec![b]).unwrap())
}

/// `diag(2^a, 2^b)` times a dyadic shear, plus a dyadic shift.
fn affine2() -> impl Strategy<Value = Affine> {
    (scale2(), scale2(), dyadic(-4, 4), dyadic(-12, 12), dyadic(-12, 12)).prop_map(|(sx, sy, sh, bx, by)| {
        Affine::new(2, vec![sx, sx * sh, 0.0, sy], vec![bx, by]).unwrap()
    })
}

fn deformation1() -> impl Strategy<Value = AffineDeformation> {
    (interval(), affine1()).prop_map(|(s, a)| AffineDeformation::new(s, a).unwrap())
}

fn deformation2() -> impl Strategy<Value = AffineDeformation> {
    (rect(), affine2()).prop_map(|(s, a)| AffineDeformation::new(s, a).unwrap())
}

fn deformation() -> impl Strategy<Value = AffineDeformation> {
    prop_oneof![deformation1(), deformation2()]
}

/// A deformation and a second one starting on its image.
fn consequent_pair() -> impl Strategy<Value = (AffineDeformation, AffineDeformation)> {
    prop_oneof![
        (deformation1(), affine1()).prop_map(|(z, a)| {
            let z2 = AffineDeformation::new(z.image().clone(), a).unwrap();
            (z, z2)
        }),
        (deformation2(), affine2()).prop_map(|(z, a)| {
            let z2 = AffineDeformation::new(z.image().clone(), a).unwrap();
            (z, z2)
        }),
    ]
}

fn shallow() -> GraphOptions {
    GraphOptions {
        max_depth: 4,
        window: None,
    }
}

fn codes(len: usize) -> Vec<String> {
    (0..1usize << len)
        .map(|bits| (0..len).map(|i| if bits >> i & 1 == 1 { '+' } else { '-' }).collect())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn intersection_determinant_is_empty(
        (z1, z2) in prop_oneof![(deformation1(), deformation1()), (deformation2(), deformation2())]
    ) {
        prop_assert!(BoolMatrix::intersection(&z1, &z2).unwrap().det().unwrap().is_empty());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn consequent_relation_identity((z1, z2) in consequent_pair()) {
        let r = consequent_identities(&z1, &z2).unwrap();
        prop_assert!(r.relation_holds, "defect {}", r.relation_defect);
        prop_assert!(r.all_parallel.holds(), "{:?}", r.all_parallel);
        prop_assert!(r.composite_parallel.holds(), "{:?}", r.composite_parallel);
    }

    /// Codes with the same number of `+` and `-` give the same self-intersection.
    #[test]
    fn diamond_identity(z in deformation()) {
        let g = continuation_graph(&z, &shallow()).unwrap();
        prop_assert_eq!(g.diamond_violations, 0);
        for prefix in ["", "+", "-", "++", "+-", "--"] {
            let a = self_intersection_code(&z, &format!("{prefix}+-")).unwrap();
            let b = self_intersection_code(&z, &format!("{prefix}-+")).unwrap();
            prop_assert!(a.approx_eq(&b).unwrap(), "prefix {prefix:?}");
        }
    }

    #[test]
    fn simplest_classes_are_absorbing(z in deformation()) {
        let g = continuation_graph(&z, &shallow()).unwrap();
        prop_assert_eq!(g.absorbing_violations, 0);
        // a simplest order stays simplest
        if let Some(st) = &g.stabilization {
            for n in st.order..=g.depth {
                prop_assert!(g.at_order(n).all(|a| a.label.is_simplest()));
            }
        }
    }

    /// Self-intersections shrink along every code.
    #[test]
    fn self_intersections_are_nested(z in deformation()) {
        for len in 0..3 {
            for c in codes(len) {
                let parent = self_intersection_code(&z, &c).unwrap();
                for sign in ['+', '-'] {
                    let child = self_intersection_code(&z, &format!("{c}{sign}")).unwrap();
                    prop_assert!(child.is_subset(&parent).unwrap());
                }
            }
        }
    }

    #[test]
    fn stretch_and_contraction_together_slide(z in deformation()) {
        let (s, sp) = (z.domain(), z.image());
        let (inside, outside) = (s.is_subset(sp).unwrap(), sp.is_subset(s).unwrap());
        let label = classify_simple(&z).unwrap().label;
        if inside && outside {
            prop_assert_eq!(label, Label::Sl);
        }
        match label {
            Label::Str => prop_assert!(inside && !outside),
            Label::Ctr => prop_assert!(outside && !inside),
            Label::Par => prop_assert!(s.intersect(sp).unwrap().is_empty()),
            _ => {}
        }
    }

    #[test]
    fn pseudogroup_laws(
        s in rect(),
        (a, b, c) in (affine2(), affine2(), affine2()),
    ) {
        let z1 = AffineDeformation::new(s, a).unwrap();
        let z2 = AffineDeformation::new(z1.image().clone(), b).unwrap();
        let z3 = AffineDeformation::new(z2.image().clone(), c).unwrap();
        let left = z1.compose(&z2).unwrap().compose(&z3).unwrap();
        let right = z1.compose(&z2.compose(&z3).unwrap()).unwrap();
        prop_assert!(left.same_as(&right, 1e-12).unwrap());
        prop_assert!(left.image().approx_eq(z3.image()).unwrap());

        let id = AffineDeformation::identity(z1.domain().clone()).unwrap();
        prop_assert!(id.compose(&z1).unwrap().same_as(&z1, 1e-12).unwrap());
        prop_assert!(z1.compose(&AffineDeformation::identity(z1.image().clone()).unwrap()).unwrap().same_as(&z1, 1e-12).unwrap());
        prop_assert!(z1.compose(&z1.inverse().unwrap()).unwrap().same_as(&id, 1e-12).unwrap());
        prop_assert!(z1.inverse().unwrap().inverse().unwrap().same_as(&z1, 1e-12).unwrap());
    }

    /// `g zeta g^-1` on `g(S)` has the same type as `zeta`.
    #[test]
    fn conjugation_invariance(s in rect(), a in affine2(), g in affine2()) {
        let z = AffineDeformation::new(s.clone(), a.clone()).unwrap();
        let moved = AffineDeformation::new(s, g.clone()).unwrap().image().clone();
        let conj = g.inverse().unwrap().then(&a).then(&g);
        let zc = AffineDeformation::new(moved, conj).unwrap();
        prop_assert_eq!(classify_simple(&z).unwrap().label, classify_simple(&zc).unwrap().label);
        let (gz, gc) = (continuation_graph(&z, &shallow()).unwrap(), continuation_graph(&zc, &shallow()).unwrap());
        prop_assert_eq!(gz.type_string(), gc.type_string());
        for (x, y) in gz.arrows.iter().zip(&gc.arrows) {
            prop_assert_eq!(x.label, y.label);
        }
    }
}

#[test]
fn parallel_criteria_positive_and_negative() {
    let s = Region::rect([0.0, 0.0], [1.0, 1.0]).unwrap();
    let far = AffineDeformation::new(s.clone(), Affine::translation(vec![4.0, 0.0]).unwrap()).unwrap();
    let further = AffineDeformation::new(far.image().clone(), Affine::translation(vec![4.0, 0.0]).unwrap()).unwrap();
    let r = consequent_identities(&far, &further).unwrap();
    assert!(r.all_parallel.condition && r.all_parallel.matrix_form);
    assert!(r.composite_parallel.condition && r.composite_parallel.matrix_form);

    // back to the start: each step is parallel, the composite is not
    let back = AffineDeformation::new(far.image().clone(), Affine::translation(vec![-4.0, 0.0]).unwrap()).unwrap();
    let r = consequent_identities(&far, &back).unwrap();
    assert!(!r.all_parallel.condition && !r.all_parallel.matrix_form);
    assert!(!r.composite_parallel.condition && !r.composite_parallel.matrix_form);

    let overlap = AffineDeformation::new(s, Affine::translation(vec![0.5, 0.0]).unwrap()).unwrap();
    let away = AffineDeformation::new(overlap.image().clone(), Affine::translation(vec![5.0, 0.0]).unwrap()).unwrap();
    let r = consequent_identities(&overlap, &away).unwrap();
    assert!(!r.all_parallel.condition && !r.all_parallel.matrix_form);
    assert!(r.composite_parallel.condition && r.composite_parallel.matrix_form);
    assert!(r.relation_holds);
}

#[test]
fn non_consequent_pair_is_rejected() {
    let s = Region::interval(0.0, 1.0).unwrap();
    let z = AffineDeformation::new(s.clone(), Affine::translation(vec![3.0]).unwrap()).unwrap();
    assert!(consequent_identities(&z, &z).is_err());
    assert!(z.compose(&z).is_err());
}
