use std::fmt;

use serde::Serialize;

use super::{AffineDeformation, Measure, Region};
use crate::error::{Error, Result};

/// Simplest classes of a deformation `S -> S'`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Label {
    /// `S` and `S'` are disjoint.
    Par,
    /// `S = S'`, or `S` and `S'` meet only in fixed points.
    Sl,
    /// `S` inside `S'`.
    Str,
    /// `S'` inside `S`.
    Ctr,
    #[serde(rename = "nonsimple")]
    Nonsimple,
}

impl Label {
    pub fn is_simplest(self) -> bool {
        self != Label::Nonsimple
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Par => "Par",
            Label::Sl => "Sl",
            Label::Str => "Str",
            Label::Ctr => "Ctr",
            Label::Nonsimple => "nonsimple",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Classification {
    pub label: Label,
    /// For sliding on fixed points: the set `S n S'`, pointwise fixed.
    pub fixed_set: Option<Region>,
}

/// Emptiness and equality, optionally seen only through a window.
struct View<'a>(Option<&'a Region>);

impl View<'_> {
    fn empty(&self, x: &Region) -> Result<bool> {
        match self.0 {
            Some(w) => Ok(x.intersect(w)?.is_empty()),
            None => Ok(x.is_empty()),
        }
    }

    fn eq(&self, a: &Region, b: &Region) -> Result<bool> {
        Ok(self.empty(&a.difference(b)?)? && self.empty(&b.difference(a)?)?)
    }
}

pub fn classify_simple(z: &AffineDeformation) -> Result<Classification> {
    classify_in(z, None)
}

/// Classification with set comparisons restricted to `window`, which keeps
/// truncation artefacts of long bodies out of view.
pub fn classify_in(z: &AffineDeformation, window: Option<&Region>) -> Result<Classification> {
    let view = View(window);
    let (s, s1) = (z.domain(), z.image());
    let x = s.intersect(s1)?;
    let plain = |label| Ok(Classification { label, fixed_set: None });
    if view.empty(&x)? {
        return plain(Label::Par);
    }
    if view.eq(s, s1)? {
        return plain(Label::Sl);
    }
    match (view.eq(&x, s)?, view.eq(&x, s1)?) {
        (true, true) => return plain(Label::Sl),
        (true, false) => return plain(Label::Str),
        (false, true) => return plain(Label::Ctr),
        _ => {}
    }
    if z.fixes(&x)? {
        return Ok(Classification {
            label: Label::Sl,
            fixed_set: Some(x),
        });
    }
    plain(Label::Nonsimple)
}

/// 2x2 matrix over closed subsets, with `n` as product and `u` as sum.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoolMatrix {
    pub entries: [[Region; 2]; 2],
}

impl BoolMatrix {
    /// `[[S1 n S2, S1 n S2'], [S1' n S2, S1' n S2']]`.
    pub fn intersection(z1: &AffineDeformation, z2: &AffineDeformation) -> Result<Self> {
        let (a, a1, b, b1) = (z1.domain(), z1.image(), z2.domain(), z2.image());
        Ok(BoolMatrix {
            entries: [[a.intersect(b)?, a.intersect(b1)?], [a1.intersect(b)?, a1.intersect(b1)?]],
        })
    }

    pub fn product(&self, other: &BoolMatrix) -> Result<Self> {
        let e = |i: usize, j: usize| -> Result<Region> {
            self.entries[i][0]
                .intersect(&other.entries[0][j])?
                .union(&self.entries[i][1].intersect(&other.entries[1][j])?)
        };
        Ok(BoolMatrix {
            entries: [[e(0, 0)?, e(0, 1)?], [e(1, 0)?, e(1, 1)?]],
        })
    }

    /// `(a n d) \ (b n c)`.
    pub fn det(&self) -> Result<Region> {
        let [[a, b], [c, d]] = &self.entries;
        a.intersect(d)?.difference(&b.intersect(c)?)
    }

    /// Entrywise intersection with `x`.
    pub fn scaled(&self, x: &Region) -> Result<Self> {
        let [[a, b], [c, d]] = &self.entries;
        Ok(BoolMatrix {
            entries: [[x.intersect(a)?, x.intersect(b)?], [x.intersect(c)?, x.intersect(d)?]],
        })
    }

    pub fn approx_eq(&self, other: &BoolMatrix) -> Result<bool> {
        for i in 0..2 {
            for j in 0..2 {
                if !self.entries[i][j].approx_eq(&other.entries[i][j])? {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    /// Largest symmetric-difference measure over the entries.
    pub fn defect(&self, other: &BoolMatrix) -> Result<f64> {
        let mut worst = 0.0f64;
        for i in 0..2 {
            for j in 0..2 {
                let m = self.entries[i][j].symmetric_difference(&other.entries[i][j])?.measure();
                if m.dim.is_some() {
                    worst = worst.max(m.value);
                }
            }
        }
        Ok(worst)
    }
}

/// An "if and only if" checked on one instance: both sides evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IffCheck {
    pub condition: bool,
    pub matrix_form: bool,
}

impl IffCheck {
    pub fn holds(&self) -> bool {
        self.condition == self.matrix_form
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConsequentReport {
    /// `I(z1,z1) I(z2,z2) = ((S1 u S2) n S1') I(z1,z2)`.
    pub relation_holds: bool,
    pub relation_defect: f64,
    /// Both maps and their composite parallel vs `I(z1,z2) = [[0,0],[S1',0]]`.
    pub all_parallel: IffCheck,
    /// Composite parallel vs `I(z1,z2) = S1' [[S1,0],[M,S2]]`.
    pub composite_parallel: IffCheck,
}

fn parallel(z: &AffineDeformation) -> Result<bool> {
    Ok(z.domain().intersect(z.image())?.is_empty())
}

/// Identities for consequent deformations `z1: S1 -> S1'`, `z2: S1' -> S2`.
pub fn consequent_identities(z1: &AffineDeformation, z2: &AffineDeformation) -> Result<ConsequentReport> {
    if z1.dim() != z2.dim() || !z1.image().approx_eq(z2.domain())? {
        return Err(Error::Composition("deformations are not consequent".into()));
    }
    let (s1, s1p, s2) = (z1.domain(), z1.image(), z2.image());
    let lhs = BoolMatrix::intersection(z1, z1)?.product(&BoolMatrix::intersection(z2, z2)?)?;
    let cross = BoolMatrix::intersection(z1, z2)?;
    let rhs = cross.scaled(&s1.union(s2)?.intersect(s1p)?)?;
    let composite = z1.compose(z2)?;
    let none = Region::empty(z1.dim())?;
    let six = BoolMatrix {
        entries: [[none.clone(), none.clone()], [s1p.clone(), none.clone()]],
    };
    let seven = BoolMatrix {
        entries: [[s1p.intersect(s1)?, none], [s1p.clone(), s1p.intersect(s2)?]],
    };
    let comp_par = parallel(&composite)?;
    Ok(ConsequentReport {
        relation_holds: lhs.approx_eq(&rhs)?,
        relation_defect: lhs.defect(&rhs)?,
        all_parallel: IffCheck {
            condition: parallel(z1)? && parallel(z2)? && comp_par,
            matrix_form: cross.approx_eq(&six)?,
        },
        composite_parallel: IffCheck {
            condition: comp_par,
            matrix_form: cross.approx_eq(&seven)?,
        },
    })
}

/// `S_code` for a code over `{+, -}`; the empty code gives `S n zeta(S)`.
pub fn self_intersection_code(z: &AffineDeformation, code: &str) -> Result<Region> {
    let inv = z.inverse()?;
    let mut r = z.domain().intersect(z.image())?;
    for c in code.chars() {
        let img = match c {
            '+' => z.map_region(&r)?,
            '-' => inv.map_region(&r)?,
            _ => return Err(Error::Geometry(format!("continuation code uses '+' and '-', not {c:?}"))),
        };
        r = r.intersect(&img)?;
    }
    Ok(r)
}

pub const DEFAULT_MAX_DEPTH: usize = 12;

#[derive(Clone, Debug, PartialEq)]
pub struct GraphOptions {
    pub max_depth: usize,
    pub window: Option<Region>,
}

impl Default for GraphOptions {
    fn default() -> Self {
        GraphOptions {
            max_depth: DEFAULT_MAX_DEPTH,
            window: None,
        }
    }
}

/// One continuation `zeta_code`, keyed by order `n` and signature `s`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GraphArrow {
    pub n: usize,
    pub s: i64,
    /// A representative code; codes with equal `(n, s)` share `S_(n,s)`.
    pub code: String,
    pub label: Label,
    pub fixed_set: Option<Region>,
    /// Measure of the self-intersection `S_(n,s)`.
    pub measure: Measure,
    pub components: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Stabilization {
    pub order: usize,
    pub classes: Vec<Label>,
    /// Union of fixed sets of the arrows at the stabilization order.
    pub fixed_set: Option<Region>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ContinuationGraph {
    pub arrows: Vec<GraphArrow>,
    /// `S_(n,s)` at `regions[n][(s + n) / 2]`.
    #[serde(skip)]
    pub regions: Vec<Vec<Region>>,
    /// `None` when no order up to `depth` is entirely simplest.
    pub stabilization: Option<Stabilization>,
    pub depth: usize,
    /// Pairs of codes with equal `(n, s)` but different self-intersections.
    pub diamond_violations: usize,
    /// Nonsimple arrows continuing a simplest one.
    pub absorbing_violations: usize,
    /// Orders holding a disconnected self-intersection.
    pub disconnected_orders: Vec<usize>,
}

impl ContinuationGraph {
    pub fn at_order(&self, n: usize) -> impl Iterator<Item = &GraphArrow> {
        self.arrows.iter().filter(move |a| a.n == n)
    }

    /// `(order, classes)` in the usual notation, e.g. `(3, Par)`.
    pub fn type_string(&self) -> String {
        match &self.stabilization {
            Some(st) => {
                let names: Vec<String> = st
                    .classes
                    .iter()
                    .map(|l| match (l, &st.fixed_set) {
                        (Label::Sl, Some(_)) => "Sl(fixed)".to_string(),
                        _ => l.to_string(),
                    })
                    .collect();
                format!("({}, {})", st.order, names.join(", "))
            }
            None => format!("order > {} (possibly infinite)", self.depth),
        }
    }
}

pub fn continuation_graph(z: &AffineDeformation, opts: &GraphOptions) -> Result<ContinuationGraph> {
    let view = View(opts.window.as_ref());
    let inv = z.inverse()?;
    let base = classify_in(z, opts.window.as_ref())?;
    let s0 = z.domain().intersect(z.image())?;
    let mut arrows = vec![GraphArrow {
        n: 0,
        s: 0,
        code: String::new(),
        label: base.label,
        fixed_set: base.fixed_set,
        measure: s0.measure(),
        components: s0.components(),
    }];
    let mut regions = vec![vec![s0]];
    let mut codes = vec![vec![String::new()]];
    let mut diamond_violations = 0;
    let mut absorbing_violations = 0;
    for n in 1..=opts.max_depth {
        let mut level: Vec<Option<Region>> = vec![None; n + 1];
        let mut level_codes = vec![String::new(); n + 1];
        for j in 0..n {
            let domain = &regions[n - 1][j];
            let s_prev = 2 * j as i64 - (n as i64 - 1);
            let parent_simplest = arrows.iter().any(|a| a.n == n - 1 && a.s == s_prev && a.label.is_simplest());
            for (sign, map, dj) in [('+', z, 1usize), ('-', &inv, 0usize)] {
                let cont = map.restrict(domain)?;
                let c = classify_in(&cont, opts.window.as_ref())?;
                let s_next = domain.intersect(cont.image())?;
                let slot = j + dj;
                let code = format!("{}{sign}", codes[n - 1][j]);
                match &level[slot] {
                    Some(prev) => {
                        if !view.eq(prev, &s_next)? {
                            diamond_violations += 1;
                        }
                    }
                    None => {
                        level[slot] = Some(s_next.clone());
                        level_codes[slot] = code.clone();
                    }
                }
                if parent_simplest && !c.label.is_simplest() {
                    absorbing_violations += 1;
                }
                arrows.push(GraphArrow {
                    n,
                    s: s_prev + if sign == '+' { 1 } else { -1 },
                    code,
                    label: c.label,
                    fixed_set: c.fixed_set,
                    measure: s_next.measure(),
                    components: s_next.components(),
                });
            }
        }
        regions.push(level.into_iter().map(|r| r.expect("every slot has a parent")).collect());
        codes.push(level_codes);
    }
    let stabilization = (0..=opts.max_depth)
        .find(|&n| arrows.iter().filter(|a| a.n == n).all(|a| a.label.is_simplest()))
        .map(|order| -> Result<Stabilization> {
            let at: Vec<&GraphArrow> = arrows.iter().filter(|a| a.n == order).collect();
            let mut classes: Vec<Label> = at.iter().map(|a| a.label).collect();
            classes.sort();
            classes.dedup();
            let mut fixed: Option<Region> = None;
            for f in at.iter().filter_map(|a| a.fixed_set.as_ref()) {
                fixed = Some(match fixed {
                    Some(acc) => acc.union(f)?,
                    None => f.clone(),
                });
            }
            Ok(Stabilization {
                order,
                classes,
                fixed_set: fixed,
            })
        })
        .transpose()?;
    let mut disconnected_orders: Vec<usize> = arrows.iter().filter(|a| a.components > 1).map(|a| a.n).collect();
    disconnected_orders.dedup();
    Ok(ContinuationGraph {
        arrows,
        regions,
        stabilization,
        depth: opts.max_depth,
        diamond_violations,
        absorbing_violations,
        disconnected_orders,
    })
}

#[cfg(test)]
mod tests {
    use super::super::Affine;
    use super::*;
    use std::f64::consts::FRAC_PI_4;

    fn unit() -> Region {
        Region::rect([0.0, 0.0], [1.0, 1.0]).unwrap()
    }

    fn shift(s: &Region, b: Vec<f64>) -> AffineDeformation {
        AffineDeformation::new(s.clone(), Affine::translation(b).unwrap()).unwrap()
    }

    #[test]
    fn simple_labels() {
        assert_eq!(classify_simple(&shift(&unit(), vec![10.0, 10.0])).unwrap().label, Label::Par);
        assert_eq!(classify_simple(&AffineDeformation::identity(unit()).unwrap()).unwrap().label, Label::Sl);
        let s = Region::interval(0.0, 1.0).unwrap();
        let stretch = AffineDeformation::new(s.clone(), Affine::new(1, vec![2.0], vec![0.0]).unwrap()).unwrap();
        assert_eq!(classify_simple(&stretch).unwrap().label, Label::Str);
        assert_eq!(classify_simple(&stretch.inverse().unwrap()).unwrap().label, Label::Ctr);
        assert_eq!(classify_simple(&shift(&unit(), vec![0.5, 0.0])).unwrap().label, Label::Nonsimple);
    }

    #[test]
    fn sliding_matrix_is_all_s() {
        let r = AffineDeformation::new(unit(), Affine::rotation(std::f64::consts::FRAC_PI_2, [0.5, 0.5])).unwrap();
        let m = BoolMatrix::intersection(&r, &r).unwrap();
        for row in &m.entries {
            for e in row {
                assert!(e.approx_eq(&unit()).unwrap());
            }
        }
        assert_eq!(classify_simple(&r).unwrap().label, Label::Sl);
    }

    #[test]
    fn square_shift_is_order_three_parallel() {
        let g = continuation_graph(&shift(&unit(), vec![1.0 / 3.0, 1.0 / 3.0]), &GraphOptions::default()).unwrap();
        let st = g.stabilization.as_ref().unwrap();
        assert_eq!((st.order, st.classes.clone()), (3, vec![Label::Par]));
        assert_eq!(g.type_string(), "(3, Par)");
        assert_eq!(g.diamond_violations, 0);
        assert_eq!(g.absorbing_violations, 0);
    }

    #[test]
    fn rotation_about_vertex_slides_on_it() {
        let z = AffineDeformation::new(unit(), Affine::rotation(FRAC_PI_4, [0.0, 0.0])).unwrap();
        let g = continuation_graph(&z, &GraphOptions::default()).unwrap();
        let st = g.stabilization.as_ref().unwrap();
        assert_eq!((st.order, st.classes.clone()), (2, vec![Label::Sl]));
        let f = st.fixed_set.as_ref().unwrap();
        assert!(f.approx_eq(&Region::point([0.0, 0.0]).unwrap()).unwrap());
        // literal sliding (S = S') first appears one order later
        assert!(g.at_order(3).all(|a| a.label == Label::Sl && a.fixed_set.is_none()));
        assert_eq!(g.absorbing_violations, 0);
    }

    #[test]
    fn bent_line_is_contraction_and_stretch() {
        let (l, a, theta) = (16.0, -1.0, FRAC_PI_4 * 1.5);
        let dom = Region::segment([-l, 0.0], [l, 0.0]).unwrap();
        let left = Region::segment([-l, 0.0], [0.0, 0.0]).unwrap();
        let right = Region::segment([0.0, 0.0], [l, 0.0]).unwrap();
        let bend = Affine::rotation(theta, [0.0, 0.0]).then(&Affine::translation(vec![a, 0.0]).unwrap());
        let z = AffineDeformation::piecewise(
            dom,
            vec![(left, Affine::translation(vec![a, 0.0]).unwrap()), (right, bend)],
        )
        .unwrap();
        let opts = GraphOptions {
            max_depth: 6,
            window: Some(Region::rect([-l / 2.0, -l / 2.0], [l / 2.0, l / 2.0]).unwrap()),
        };
        let g = continuation_graph(&z, &opts).unwrap();
        assert_eq!(g.type_string(), "(1, Str, Ctr)");
        let plus = g.at_order(1).find(|a| a.code == "+").unwrap();
        let minus = g.at_order(1).find(|a| a.code == "-").unwrap();
        assert_eq!((plus.label, minus.label), (Label::Ctr, Label::Str));
        assert_eq!(g.absorbing_violations, 0);
    }

    #[test]
    fn boolean_determinant_vanishes() {
        let z1 = shift(&unit(), vec![0.4, 0.2]);
        let z2 = AffineDeformation::new(
            Region::rect([0.3, -0.5], [1.2, 0.7]).unwrap(),
            Affine::rotation(0.3, [0.1, 0.2]),
        )
        .unwrap();
        assert!(BoolMatrix::intersection(&z1, &z2).unwrap().det().unwrap().is_empty());
    }

    #[test]
    fn far_translations_are_all_parallel() {
        let z1 = shift(&unit(), vec![5.0, 0.0]);
        let z2 = shift(z1.image(), vec![5.0, 0.0]);
        let r = consequent_identities(&z1, &z2).unwrap();
        assert!(r.relation_holds);
        assert!(r.all_parallel.condition && r.all_parallel.matrix_form);
        assert!(r.composite_parallel.condition && r.composite_parallel.matrix_form);
        let back = shift(z1.image(), vec![-5.0, 0.0]);
        let r = consequent_identities(&z1, &back).unwrap();
        assert!(!r.composite_parallel.condition && r.composite_parallel.holds());
        assert!(!r.all_parallel.condition && r.all_parallel.holds());
        assert!(matches!(consequent_identities(&z1, &z1), Err(Error::Composition(_))));
    }
}
