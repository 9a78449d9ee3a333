//! Closed convex pieces of the plane: points, segments and polygons, stored
//! as counterclockwise hull vertices. Boolean operations go through the
//! half-plane description and vertex enumeration, which handles degenerate
//! results (a shared corner, a shared edge) uniformly.

pub(crate) type P2 = [f64; 2];

/// `n . x <= c` with unit `n`.
#[derive(Clone, Copy, Debug)]
struct HalfPlane {
    n: P2,
    c: f64,
}

impl HalfPlane {
    fn new(n: P2, c: f64) -> Self {
        let len = n[0].hypot(n[1]);
        HalfPlane {
            n: [n[0] / len, n[1] / len],
            c: c / len,
        }
    }

    fn eval(&self, x: P2) -> f64 {
        self.n[0] * x[0] + self.n[1] * x[1] - self.c
    }

    fn flipped(&self) -> Self {
        HalfPlane {
            n: [-self.n[0], -self.n[1]],
            c: -self.c,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Convex {
    pub(crate) verts: Vec<P2>,
}

fn cross(o: P2, a: P2, b: P2) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn dist(a: P2, b: P2) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Convex hull with points closer than `tol` merged and near-collinear
/// vertices dropped.
pub(crate) fn hull(points: &[P2], tol: f64) -> Option<Convex> {
    let mut pts: Vec<P2> = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    let mut uniq: Vec<P2> = Vec::with_capacity(pts.len());
    for p in pts {
        if !uniq.iter().any(|q| dist(*q, p) <= tol) {
            uniq.push(p);
        }
    }
    match uniq.len() {
        0 => return None,
        1 => return Some(Convex { verts: uniq }),
        _ => {}
    }
    // area-based collinearity: |cross| is twice the triangle area
    let keep = |o: P2, a: P2, b: P2| cross(o, a, b) > tol * dist(o, b).max(tol);
    let mut lower: Vec<P2> = Vec::new();
    for &p in &uniq {
        while lower.len() >= 2 && !keep(lower[lower.len() - 2], lower[lower.len() - 1], p) {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<P2> = Vec::new();
    for &p in uniq.iter().rev() {
        while upper.len() >= 2 && !keep(upper[upper.len() - 2], upper[upper.len() - 1], p) {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    if lower.len() <= 2 {
        // collinear: keep the two extreme points
        let (a, b) = (uniq[0], *uniq.last().expect("non-empty"));
        return Some(if dist(a, b) <= tol {
            Convex { verts: vec![a] }
        } else {
            Convex { verts: vec![a, b] }
        });
    }
    Some(Convex { verts: lower })
}

impl Convex {
    /// 0 for a point, 1 for a segment, 2 for a polygon.
    pub(crate) fn dim(&self) -> usize {
        self.verts.len().min(3) - 1
    }

    pub(crate) fn size(&self) -> f64 {
        match self.verts.len() {
            1 => 1.0,
            2 => dist(self.verts[0], self.verts[1]),
            _ => {
                let v = &self.verts;
                0.5 * (0..v.len())
                    .map(|i| {
                        let (a, b) = (v[i], v[(i + 1) % v.len()]);
                        a[0] * b[1] - a[1] * b[0]
                    })
                    .sum::<f64>()
            }
        }
    }

    pub(crate) fn scale(&self) -> f64 {
        self.verts
            .iter()
            .flat_map(|p| p.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }

    fn halfplanes(&self) -> Vec<HalfPlane> {
        let v = &self.verts;
        match v.len() {
            1 => {
                let p = v[0];
                vec![
                    HalfPlane::new([1.0, 0.0], p[0]),
                    HalfPlane::new([-1.0, 0.0], -p[0]),
                    HalfPlane::new([0.0, 1.0], p[1]),
                    HalfPlane::new([0.0, -1.0], -p[1]),
                ]
            }
            2 => {
                let (a, b) = (v[0], v[1]);
                let d = [b[0] - a[0], b[1] - a[1]];
                let n = [-d[1], d[0]];
                let line = HalfPlane::new(n, n[0] * a[0] + n[1] * a[1]);
                vec![
                    line,
                    line.flipped(),
                    HalfPlane::new(d, d[0] * b[0] + d[1] * b[1]),
                    HalfPlane::new([-d[0], -d[1]], -(d[0] * a[0] + d[1] * a[1])),
                ]
            }
            m => (0..m)
                .map(|i| {
                    let (a, b) = (v[i], v[(i + 1) % m]);
                    let n = [b[1] - a[1], a[0] - b[0]];
                    HalfPlane::new(n, n[0] * a[0] + n[1] * a[1])
                })
                .collect(),
        }
    }

    pub(crate) fn contains_point(&self, x: P2, tol: f64) -> bool {
        self.halfplanes().iter().all(|h| h.eval(x) <= tol)
    }

    /// Every vertex of `self` lies in `other`.
    pub(crate) fn inside(&self, other: &Convex, tol: f64) -> bool {
        let hs = other.halfplanes();
        self.verts.iter().all(|&x| hs.iter().all(|h| h.eval(x) <= tol))
    }

    pub(crate) fn intersect(&self, other: &Convex, tol: f64) -> Option<Convex> {
        if !self.bbox_overlaps(other, tol) {
            return None;
        }
        let mut hs = self.halfplanes();
        hs.extend(other.halfplanes());
        enumerate(&hs, tol)
    }

    fn bbox_overlaps(&self, other: &Convex, tol: f64) -> bool {
        let (a, b) = (self.bbox(), other.bbox());
        (0..2).all(|i| a.0[i] <= b.1[i] + tol && b.0[i] <= a.1[i] + tol)
    }

    pub(crate) fn bbox(&self) -> (P2, P2) {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in &self.verts {
            for i in 0..2 {
                lo[i] = lo[i].min(p[i]);
                hi[i] = hi[i].max(p[i]);
            }
        }
        (lo, hi)
    }

    /// Closure of `self` minus `other`, as convex pieces with disjoint
    /// relative interiors.
    pub(crate) fn difference(&self, other: &Convex, tol: f64) -> Vec<Convex> {
        if self.intersect(other, tol).is_none() {
            return vec![self.clone()];
        }
        let own = self.halfplanes();
        let cut = other.halfplanes();
        let mut out = Vec::new();
        for (i, h) in cut.iter().enumerate() {
            let mut hs = own.clone();
            hs.push(h.flipped());
            hs.extend_from_slice(&cut[..i]);
            if let Some(piece) = enumerate(&hs, tol) {
                // keep only pieces reaching strictly outside `other`
                if piece.verts.iter().any(|&x| h.eval(x) > tol) {
                    out.push(piece);
                }
            }
        }
        out
    }
}

fn enumerate(hs: &[HalfPlane], tol: f64) -> Option<Convex> {
    let mut pts = Vec::new();
    for i in 0..hs.len() {
        for j in i + 1..hs.len() {
            let (a, b) = (hs[i], hs[j]);
            let det = a.n[0] * b.n[1] - a.n[1] * b.n[0];
            if det.abs() < 1e-12 {
                continue;
            }
            let x = [(a.c * b.n[1] - b.c * a.n[1]) / det, (a.n[0] * b.c - b.n[0] * a.c) / det];
            if hs.iter().all(|h| h.eval(x) <= tol) {
                pts.push(x);
            }
        }
    }
    hull(&pts, tol)
}

/// Ear-clipping triangulation of a simple counterclockwise polygon.
pub(crate) fn triangulate(poly: &[P2], tol: f64) -> Vec<Convex> {
    let mut idx: Vec<usize> = (0..poly.len()).collect();
    let mut out = Vec::new();
    while idx.len() > 3 {
        let m = idx.len();
        let ear = (0..m).find(|&i| {
            let (a, b, c) = (poly[idx[(i + m - 1) % m]], poly[idx[i]], poly[idx[(i + 1) % m]]);
            if cross(a, b, c) <= tol * tol {
                return false;
            }
            idx.iter().all(|&k| {
                let p = poly[k];
                p == a || p == b || p == c || !(cross(a, b, p) >= 0.0 && cross(b, c, p) >= 0.0 && cross(c, a, p) >= 0.0)
            })
        });
        let Some(i) = ear else { break };
        let (a, b, c) = (poly[idx[(i + m - 1) % m]], poly[idx[i]], poly[idx[(i + 1) % m]]);
        if let Some(t) = hull(&[a, b, c], tol) {
            out.push(t);
        }
        idx.remove(i);
    }
    let rest: Vec<P2> = idx.iter().map(|&k| poly[k]).collect();
    if let Some(t) = hull(&rest, tol) {
        out.push(t);
    }
    out
}

pub(crate) fn signed_area(poly: &[P2]) -> f64 {
    0.5 * (0..poly.len())
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
            a[0] * b[1] - a[1] * b[0]
        })
        .sum::<f64>()
}

pub(crate) fn is_convex_ccw(poly: &[P2], tol: f64) -> bool {
    let m = poly.len();
    (0..m).all(|i| cross(poly[i], poly[(i + 1) % m], poly[(i + 2) % m]) >= -tol * tol)
}

/// Proper or touching intersection of closed segments `ab` and `cd`.
pub(crate) fn segments_meet(a: P2, b: P2, c: P2, d: P2) -> bool {
    let o = |p: P2, q: P2, r: P2| cross(p, q, r).signum();
    let on = |p: P2, q: P2, r: P2| {
        cross(p, q, r) == 0.0
            && r[0] >= p[0].min(q[0])
            && r[0] <= p[0].max(q[0])
            && r[1] >= p[1].min(q[1])
            && r[1] <= p[1].max(q[1])
    };
    let (d1, d2, d3, d4) = (o(a, b, c), o(a, b, d), o(c, d, a), o(c, d, b));
    (d1 * d2 < 0.0 && d3 * d4 < 0.0) || on(a, b, c) || on(a, b, d) || on(c, d, a) || on(c, d, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sq(x0: f64, y0: f64, s: f64) -> Convex {
        hull(&[[x0, y0], [x0 + s, y0], [x0 + s, y0 + s], [x0, y0 + s]], 1e-12).unwrap()
    }

    #[test]
    fn corner_contact_is_a_point() {
        let r = sq(0.0, 0.0, 1.0).intersect(&sq(1.0, 1.0, 1.0), 1e-12).unwrap();
        assert_eq!(r.verts.len(), 1);
        assert!(dist(r.verts[0], [1.0, 1.0]) < 1e-12);
        let e = sq(0.0, 0.0, 1.0).intersect(&sq(1.0, 0.5, 1.0), 1e-12).unwrap();
        assert_eq!(e.dim(), 1);
        assert!((e.size() - 0.5).abs() < 1e-12);
        assert!(sq(0.0, 0.0, 1.0).intersect(&sq(1.5, 0.0, 1.0), 1e-12).is_none());
    }

    #[test]
    fn difference_of_overlapping_squares() {
        let d = sq(0.0, 0.0, 1.0).difference(&sq(0.5, 0.0, 1.0), 1e-12);
        let area: f64 = d.iter().filter(|p| p.dim() == 2).map(Convex::size).sum();
        assert!((area - 0.5).abs() < 1e-12);
        assert!(sq(0.0, 0.0, 1.0).difference(&sq(0.0, 0.0, 1.0), 1e-12).is_empty());
        let seg = hull(&[[0.0, 0.0], [2.0, 0.0]], 1e-12).unwrap();
        let left = seg.difference(&sq(1.0, -1.0, 2.0), 1e-12);
        assert_eq!(left.len(), 1);
        assert!((left[0].size() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ears_cover_an_l_shape() {
        let l = [[0.0, 0.0], [2.0, 0.0], [2.0, 1.0], [1.0, 1.0], [1.0, 2.0], [0.0, 2.0]];
        let t = triangulate(&l, 1e-12);
        assert!((t.iter().map(Convex::size).sum::<f64>() - 3.0).abs() < 1e-12);
    }
}
