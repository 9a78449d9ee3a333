//! Boolean calculus of deformations between closed subsets of a line or a
//! plane: region algebra, (self-)intersection matrices, the simplest classes,
//! the continuation graph and the pseudogroup of deformations.
//!
//! Regions are closed sets. A shared corner or edge is a nonempty
//! intersection, and differences are closures. Emptiness and equality are
//! decided up to a snap tolerance of `1e-9` times the coordinate scale.

mod classify;
mod deform;
mod plane;

pub use classify::{
    classify_in, classify_simple, consequent_identities, continuation_graph, self_intersection_code, BoolMatrix,
    Classification, ConsequentReport, ContinuationGraph, GraphArrow, GraphOptions, IffCheck, Label, Stabilization,
    DEFAULT_MAX_DEPTH,
};
pub use deform::{Affine, AffineDeformation};

use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use plane::{Convex, P2};

/// Relative snap tolerance.
pub const SNAP_REL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
enum Repr {
    /// Sorted, pairwise disjoint closed intervals.
    Line(Vec<(f64, f64)>),
    /// Closed convex pieces with disjoint relative interiors.
    Plane(Vec<Convex>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Region {
    repr: Repr,
}

/// Size of the top-dimensional part of a region.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Measure {
    /// Dimension of the largest piece; `None` for the empty set.
    pub dim: Option<usize>,
    /// Length, area, or point count of the pieces of that dimension.
    pub value: f64,
}

impl Region {
    pub fn empty(dim: usize) -> Result<Self> {
        match dim {
            1 => Ok(Region { repr: Repr::Line(vec![]) }),
            2 => Ok(Region { repr: Repr::Plane(vec![]) }),
            _ => Err(Error::Geometry(format!("regions live in dimension 1 or 2, not {dim}"))),
        }
    }

    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        Region::intervals(&[(lo, hi)])
    }

    pub fn intervals(list: &[(f64, f64)]) -> Result<Self> {
        if list.iter().any(|&(a, b)| !a.is_finite() || !b.is_finite() || a > b) {
            return Err(Error::Geometry("intervals need finite lo <= hi".into()));
        }
        Ok(Region::line(list.to_vec()))
    }

    fn line(mut v: Vec<(f64, f64)>) -> Self {
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
        let scale = v.iter().fold(1.0f64, |m, &(a, b)| m.max(a.abs()).max(b.abs()));
        let tol = SNAP_REL * scale;
        let mut out: Vec<(f64, f64)> = Vec::with_capacity(v.len());
        for (a, b) in v {
            match out.last_mut() {
                Some(last) if a <= last.1 + tol => last.1 = last.1.max(b),
                _ => out.push((a, b)),
            }
        }
        Region { repr: Repr::Line(out) }
    }

    fn plane(pieces: Vec<Convex>) -> Self {
        let mut r = Region {
            repr: Repr::Plane(pieces),
        };
        r.normalize();
        r
    }

    /// Simple polygon given by its vertex loop (either orientation).
    pub fn polygon(verts: &[[f64; 2]]) -> Result<Self> {
        if verts.len() < 3 || verts.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Geometry("a polygon needs at least three finite vertices".into()));
        }
        let scale = verts.iter().flatten().fold(1.0f64, |m, v| m.max(v.abs()));
        let tol = SNAP_REL * scale;
        let m = verts.len();
        for i in 0..m {
            for j in i + 1..m {
                let adjacent = j == i + 1 || (i == 0 && j == m - 1);
                if !adjacent && plane::segments_meet(verts[i], verts[(i + 1) % m], verts[j], verts[(j + 1) % m]) {
                    return Err(Error::Geometry(format!("polygon edges {i} and {j} intersect")));
                }
            }
        }
        let area = plane::signed_area(verts);
        if area.abs() <= tol * scale {
            return Err(Error::Geometry("polygon has zero area".into()));
        }
        let mut loop_: Vec<P2> = verts.to_vec();
        if area < 0.0 {
            loop_.reverse();
        }
        let pieces = if plane::is_convex_ccw(&loop_, tol) {
            plane::hull(&loop_, tol).into_iter().collect()
        } else {
            plane::triangulate(&loop_, tol)
        };
        Ok(Region::plane(pieces))
    }

    pub fn rect(lo: [f64; 2], hi: [f64; 2]) -> Result<Self> {
        Region::polygon(&[lo, [hi[0], lo[1]], hi, [lo[0], hi[1]]])
    }

    /// Convex hull of planar points; may be a point or a segment.
    pub fn convex_hull(points: &[[f64; 2]]) -> Result<Self> {
        if points.is_empty() || points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Geometry("convex hull needs finite points".into()));
        }
        let scale = points.iter().flatten().fold(1.0f64, |m, v| m.max(v.abs()));
        Ok(Region::plane(plane::hull(points, SNAP_REL * scale).into_iter().collect()))
    }

    pub fn segment(a: [f64; 2], b: [f64; 2]) -> Result<Self> {
        Region::convex_hull(&[a, b])
    }

    pub fn point(p: [f64; 2]) -> Result<Self> {
        Region::convex_hull(&[p])
    }

    /// Union of convex hulls, one per vertex list.
    pub fn from_convex_pieces(pieces: &[Vec<[f64; 2]>]) -> Result<Self> {
        let mut out = Region::empty(2)?;
        for p in pieces {
            out = out.union(&Region::convex_hull(p)?)?;
        }
        Ok(out)
    }

    pub fn dim(&self) -> usize {
        match self.repr {
            Repr::Line(_) => 1,
            Repr::Plane(_) => 2,
        }
    }

    pub fn is_empty(&self) -> bool {
        match &self.repr {
            Repr::Line(v) => v.is_empty(),
            Repr::Plane(v) => v.is_empty(),
        }
    }

    /// Sorted intervals of a 1D region.
    pub fn intervals_1d(&self) -> Option<&[(f64, f64)]> {
        match &self.repr {
            Repr::Line(v) => Some(v),
            Repr::Plane(_) => None,
        }
    }

    /// Counterclockwise vertex lists of the convex pieces of a 2D region.
    pub fn pieces_2d(&self) -> Option<Vec<Vec<[f64; 2]>>> {
        match &self.repr {
            Repr::Line(_) => None,
            Repr::Plane(v) => Some(v.iter().map(|c| c.verts.clone()).collect()),
        }
    }

    /// All extreme points, as coordinate vectors.
    pub fn vertices(&self) -> Vec<Vec<f64>> {
        match &self.repr {
            Repr::Line(v) => {
                let mut out: Vec<Vec<f64>> = Vec::new();
                for &(a, b) in v {
                    out.push(vec![a]);
                    if b != a {
                        out.push(vec![b]);
                    }
                }
                out
            }
            Repr::Plane(v) => v.iter().flat_map(|c| c.verts.iter().map(|p| p.to_vec())).collect(),
        }
    }

    pub fn scale(&self) -> f64 {
        match &self.repr {
            Repr::Line(v) => v.iter().fold(0.0f64, |m, &(a, b)| m.max(a.abs()).max(b.abs())),
            Repr::Plane(v) => v.iter().fold(0.0f64, |m, c| m.max(c.scale())),
        }
    }

    fn tol_with(&self, other: &Region) -> f64 {
        SNAP_REL * 1.0f64.max(self.scale()).max(other.scale())
    }

    fn same_dim(&self, other: &Region) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::Geometry(format!(
                "regions of dimension {} and {}",
                self.dim(),
                other.dim()
            )));
        }
        Ok(())
    }

    pub fn intersect(&self, other: &Region) -> Result<Region> {
        self.same_dim(other)?;
        let tol = self.tol_with(other);
        Ok(match (&self.repr, &other.repr) {
            (Repr::Line(a), Repr::Line(b)) => {
                let mut out = Vec::new();
                for &(p, q) in a {
                    for &(r, s) in b {
                        let (lo, hi) = (p.max(r), q.min(s));
                        if lo <= hi + tol {
                            out.push((lo, hi.max(lo)));
                        }
                    }
                }
                Region::line(out)
            }
            (Repr::Plane(a), Repr::Plane(b)) => {
                Region::plane(a.iter().flat_map(|p| b.iter().filter_map(move |q| p.intersect(q, tol))).collect())
            }
            _ => unreachable!("dimensions checked"),
        })
    }

    pub fn union(&self, other: &Region) -> Result<Region> {
        self.same_dim(other)?;
        Ok(match (&self.repr, &other.repr) {
            (Repr::Line(a), Repr::Line(b)) => Region::line(a.iter().chain(b).cloned().collect()),
            (Repr::Plane(a), Repr::Plane(_)) => {
                let extra = other.difference(self)?;
                let Repr::Plane(e) = extra.repr else { unreachable!() };
                Region::plane(a.iter().cloned().chain(e).collect())
            }
            _ => unreachable!("dimensions checked"),
        })
    }

    /// Closure of `self \ other`.
    pub fn difference(&self, other: &Region) -> Result<Region> {
        self.same_dim(other)?;
        let tol = self.tol_with(other);
        Ok(match (&self.repr, &other.repr) {
            (Repr::Line(a), Repr::Line(b)) => {
                let mut cur = a.clone();
                for &(c, d) in b {
                    let mut next = Vec::with_capacity(cur.len() + 1);
                    for (p, q) in cur {
                        if c > q + tol || d < p - tol {
                            next.push((p, q));
                            continue;
                        }
                        if c - p > tol {
                            next.push((p, c));
                        }
                        if q - d > tol {
                            next.push((d, q));
                        }
                    }
                    cur = next;
                }
                Region::line(cur)
            }
            (Repr::Plane(a), Repr::Plane(b)) => {
                let mut cur = a.clone();
                for q in b {
                    cur = cur.iter().flat_map(|p| p.difference(q, tol)).collect();
                }
                Region::plane(cur)
            }
            _ => unreachable!("dimensions checked"),
        })
    }

    pub fn is_subset(&self, other: &Region) -> Result<bool> {
        Ok(self.difference(other)?.is_empty())
    }

    /// Equality of closed sets up to the snap tolerance.
    pub fn approx_eq(&self, other: &Region) -> Result<bool> {
        Ok(self.is_subset(other)? && other.is_subset(self)?)
    }

    pub fn symmetric_difference(&self, other: &Region) -> Result<Region> {
        self.difference(other)?.union(&other.difference(self)?)
    }

    pub fn measure(&self) -> Measure {
        let sizes: Vec<(usize, f64)> = match &self.repr {
            Repr::Line(v) => v.iter().map(|&(a, b)| if b > a { (1, b - a) } else { (0, 1.0) }).collect(),
            Repr::Plane(v) => v.iter().map(|c| (c.dim(), c.size())).collect(),
        };
        let dim = sizes.iter().map(|s| s.0).max();
        Measure {
            dim,
            value: sizes.iter().filter(|s| Some(s.0) == dim).map(|s| s.1).sum(),
        }
    }

    /// Number of connected components.
    pub fn components(&self) -> usize {
        match &self.repr {
            Repr::Line(v) => v.len(),
            Repr::Plane(v) => {
                let tol = SNAP_REL * 1.0f64.max(self.scale());
                let mut parent: Vec<usize> = (0..v.len()).collect();
                fn find(p: &mut [usize], i: usize) -> usize {
                    let mut r = i;
                    while p[r] != r {
                        r = p[r];
                    }
                    p[i] = r;
                    r
                }
                for i in 0..v.len() {
                    for j in i + 1..v.len() {
                        if v[i].intersect(&v[j], tol).is_some() {
                            let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                            parent[a] = b;
                        }
                    }
                }
                (0..v.len()).filter(|&i| find(&mut parent, i) == i).count()
            }
        }
    }

    pub fn contains_point(&self, x: &[f64]) -> bool {
        let tol = SNAP_REL * x.iter().fold(1.0f64.max(self.scale()), |m, v| m.max(v.abs()));
        match &self.repr {
            Repr::Line(v) => x.len() == 1 && v.iter().any(|&(a, b)| x[0] >= a - tol && x[0] <= b + tol),
            Repr::Plane(v) => x.len() == 2 && v.iter().any(|c| c.contains_point([x[0], x[1]], tol)),
        }
    }

    /// Image under a pointwise map that is affine on the whole region.
    pub(crate) fn map_affine(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> Region {
        match &self.repr {
            Repr::Line(v) => Region::line(
                v.iter()
                    .map(|&(a, b)| {
                        let (p, q) = (f(&[a])[0], f(&[b])[0]);
                        (p.min(q), p.max(q))
                    })
                    .collect(),
            ),
            Repr::Plane(v) => {
                let mapped: Vec<Vec<P2>> = v
                    .iter()
                    .map(|c| {
                        c.verts
                            .iter()
                            .map(|p| {
                                let y = f(p);
                                [y[0], y[1]]
                            })
                            .collect()
                    })
                    .collect();
                let scale = mapped.iter().flatten().flatten().fold(1.0f64, |m, v| m.max(v.abs()));
                let tol = SNAP_REL * scale;
                Region::plane(mapped.iter().filter_map(|p| plane::hull(p, tol)).collect())
            }
        }
    }

    /// Drops pieces covered by a single other piece.
    fn normalize(&mut self) {
        let tol = SNAP_REL * 1.0f64.max(self.scale());
        let Repr::Plane(v) = &mut self.repr else { return };
        let mut dropped = vec![false; v.len()];
        for i in 0..v.len() {
            for j in 0..v.len() {
                if i == j || dropped[j] || !v[i].inside(&v[j], tol) {
                    continue;
                }
                let mutual = v[j].dim() == v[i].dim() && v[j].inside(&v[i], tol);
                if v[j].dim() > v[i].dim() || !mutual || j < i {
                    dropped[i] = true;
                    break;
                }
            }
        }
        let mut k = 0;
        v.retain(|_| {
            k += 1;
            !dropped[k - 1]
        });
    }
}

impl Serialize for Region {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("Region", 3)?;
        st.serialize_field("dim", &self.dim())?;
        match &self.repr {
            Repr::Line(v) => st.serialize_field("intervals", v)?,
            Repr::Plane(_) => st.serialize_field("pieces", &self.pieces_2d())?,
        }
        st.serialize_field("measure", &self.measure())?;
        st.end()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> Region {
        Region::rect([0.0, 0.0], [1.0, 1.0]).unwrap()
    }

    #[test]
    fn self_operations() {
        let a = unit();
        assert!(a.intersect(&a).unwrap().approx_eq(&a).unwrap());
        assert!(a.difference(&a).unwrap().is_empty());
        assert!(a.union(&a).unwrap().approx_eq(&a).unwrap());
    }

    #[test]
    fn half_overlap_has_area_half() {
        let b = Region::rect([0.5, 0.0], [1.5, 1.0]).unwrap();
        let m = unit().intersect(&b).unwrap().measure();
        assert_eq!(m.dim, Some(2));
        assert!((m.value - 0.5).abs() < 1e-12);
        let u = unit().union(&b).unwrap().measure();
        assert!((u.value - 1.5).abs() < 1e-12);
    }

    #[test]
    fn disjoint_intervals() {
        let a = Region::interval(0.0, 1.0).unwrap();
        let b = Region::interval(2.0, 3.0).unwrap();
        assert!(a.intersect(&b).unwrap().is_empty());
        let touch = Region::interval(1.0, 3.0).unwrap();
        let p = a.intersect(&touch).unwrap();
        assert_eq!(p.intervals_1d().unwrap(), &[(1.0, 1.0)]);
        assert_eq!(a.union(&b).unwrap().components(), 2);
        assert_eq!(a.union(&touch).unwrap().components(), 1);
        let d = Region::interval(0.0, 3.0).unwrap().difference(&Region::interval(1.0, 2.0).unwrap()).unwrap();
        assert_eq!(d.intervals_1d().unwrap(), &[(0.0, 1.0), (2.0, 3.0)]);
    }

    #[test]
    fn degenerate_polygons_are_rejected() {
        assert!(Region::polygon(&[[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]).is_err());
        assert!(Region::polygon(&[[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]]).is_err());
        assert!(Region::polygon(&[[0.0, 0.0], [1.0, 0.0]]).is_err());
    }

    #[test]
    fn nonconvex_polygon_area_and_components() {
        let l = Region::polygon(&[[0.0, 0.0], [2.0, 0.0], [2.0, 1.0], [1.0, 1.0], [1.0, 2.0], [0.0, 2.0]]).unwrap();
        assert!((l.measure().value - 3.0).abs() < 1e-12);
        assert_eq!(l.components(), 1);
        let far = Region::rect([5.0, 5.0], [6.0, 6.0]).unwrap();
        assert_eq!(l.union(&far).unwrap().components(), 2);
    }

    #[test]
    fn lower_dimensional_pieces() {
        let s = Region::segment([0.0, 0.0], [2.0, 0.0]).unwrap();
        assert_eq!(s.measure().dim, Some(1));
        let cut = s.intersect(&unit()).unwrap();
        assert!((cut.measure().value - 1.0).abs() < 1e-12);
        // a point inside a square adds nothing to the union
        let p = Region::point([0.5, 0.5]).unwrap();
        assert!(unit().union(&p).unwrap().approx_eq(&unit()).unwrap());
        assert!(!p.is_empty() && p.difference(&unit()).unwrap().is_empty());
    }
}
