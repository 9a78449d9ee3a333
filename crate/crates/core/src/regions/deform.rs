use serde::Serialize;

use super::{Region, SNAP_REL};
use crate::error::{Error, Result};

/// `x -> m x + b` on a line or a plane; `m` is row-major.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Affine {
    dim: usize,
    m: Vec<f64>,
    b: Vec<f64>,
}

impl Affine {
    pub fn new(dim: usize, m: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if !(1..=2).contains(&dim) || m.len() != dim * dim || b.len() != dim {
            return Err(Error::Shape(format!("affine map in dimension {dim} needs a {dim}x{dim} matrix")));
        }
        if m.iter().chain(&b).any(|v| !v.is_finite()) {
            return Err(Error::Geometry("affine map has non-finite entries".into()));
        }
        Ok(Affine { dim, m, b })
    }

    pub fn identity(dim: usize) -> Result<Self> {
        let m = (0..dim * dim).map(|i| if i % (dim + 1) == 0 { 1.0 } else { 0.0 }).collect();
        Affine::new(dim, m, vec![0.0; dim])
    }

    pub fn translation(b: Vec<f64>) -> Result<Self> {
        let mut a = Affine::identity(b.len())?;
        a.b = b;
        Ok(a)
    }

    /// Rotation of the plane by `angle` about `center`.
    pub fn rotation(angle: f64, center: [f64; 2]) -> Self {
        let (s, c) = angle.sin_cos();
        let m = vec![c, -s, s, c];
        let b = vec![
            center[0] - (c * center[0] - s * center[1]),
            center[1] - (s * center[0] + c * center[1]),
        ];
        Affine { dim: 2, m, b }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &[f64] {
        &self.m
    }

    pub fn offset(&self) -> &[f64] {
        &self.b
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim;
        (0..d)
            .map(|r| self.b[r] + (0..d).map(|c| self.m[r * d + c] * x[c]).sum::<f64>())
            .collect()
    }

    pub fn det(&self) -> f64 {
        match self.dim {
            1 => self.m[0],
            _ => self.m[0] * self.m[3] - self.m[1] * self.m[2],
        }
    }

    pub fn inverse(&self) -> Result<Affine> {
        let det = self.det();
        let scale = self.m.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if det == 0.0 || det.abs() <= 1e-14 * scale.powi(self.dim as i32) {
            return Err(Error::Geometry(format!("affine map is not invertible (det {det:e})")));
        }
        let inv = match self.dim {
            1 => vec![1.0 / det],
            _ => vec![self.m[3] / det, -self.m[1] / det, -self.m[2] / det, self.m[0] / det],
        };
        let mut out = Affine {
            dim: self.dim,
            m: inv,
            b: vec![0.0; self.dim],
        };
        let shift = out.apply(&self.b);
        out.b = shift.iter().map(|v| -v).collect();
        Ok(out)
    }

    /// `next` after `self`.
    pub fn then(&self, next: &Affine) -> Affine {
        let d = self.dim;
        let m = (0..d * d)
            .map(|k| {
                let (r, c) = (k / d, k % d);
                (0..d).map(|j| next.m[r * d + j] * self.m[j * d + c]).sum()
            })
            .collect();
        Affine { dim: d, m, b: next.apply(&self.b) }
    }
}

/// Invertible map between regions that is affine on each cell of its domain.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineDeformation {
    domain: Region,
    pieces: Vec<(Region, Affine)>,
    image: Region,
}

impl AffineDeformation {
    pub fn new(domain: Region, map: Affine) -> Result<Self> {
        AffineDeformation::piecewise(domain.clone(), vec![(domain, map)])
    }

    /// Cells are clipped to the domain and must cover it; neighbouring
    /// cells must agree on shared points and have overlapping images only
    /// there.
    pub fn piecewise(domain: Region, cells: Vec<(Region, Affine)>) -> Result<Self> {
        let mut pieces = Vec::with_capacity(cells.len());
        for (cell, map) in cells {
            if map.dim() != domain.dim() || cell.dim() != domain.dim() {
                return Err(Error::Geometry("cell, map and domain dimensions differ".into()));
            }
            map.inverse()?;
            let c = cell.intersect(&domain)?;
            if !c.is_empty() {
                pieces.push((c, map));
            }
        }
        let mut covered = Region::empty(domain.dim())?;
        for (c, _) in &pieces {
            covered = covered.union(c)?;
        }
        if !domain.is_subset(&covered)? {
            return Err(Error::Geometry("cells do not cover the domain".into()));
        }
        for i in 0..pieces.len() {
            for j in i + 1..pieces.len() {
                let shared = pieces[i].0.intersect(&pieces[j].0)?;
                let tol = SNAP_REL * 1.0f64.max(shared.scale()).max(10.0 * domain.scale());
                for v in shared.vertices() {
                    let (a, b) = (pieces[i].1.apply(&v), pieces[j].1.apply(&v));
                    if a.iter().zip(&b).any(|(x, y)| (x - y).abs() > tol) {
                        return Err(Error::Geometry(format!("cells {i} and {j} disagree on their common boundary")));
                    }
                }
                let (ii, jj) = (pieces[i].0.map_affine(|x| pieces[i].1.apply(x)), pieces[j].0.map_affine(|x| pieces[j].1.apply(x)));
                let seam = shared.map_affine(|x| pieces[i].1.apply(x));
                if !ii.intersect(&jj)?.is_subset(&seam)? {
                    return Err(Error::Geometry(format!("images of cells {i} and {j} overlap")));
                }
            }
        }
        let image = Self::image_of(&pieces, &domain)?;
        Ok(AffineDeformation { domain, pieces, image })
    }

    fn image_of(pieces: &[(Region, Affine)], x: &Region) -> Result<Region> {
        let mut out = Region::empty(x.dim())?;
        for (c, a) in pieces {
            let part = x.intersect(c)?;
            if !part.is_empty() {
                out = out.union(&part.map_affine(|p| a.apply(p)))?;
            }
        }
        Ok(out)
    }

    pub fn identity(region: Region) -> Result<Self> {
        let id = Affine::identity(region.dim())?;
        AffineDeformation::new(region, id)
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn domain(&self) -> &Region {
        &self.domain
    }

    pub fn image(&self) -> &Region {
        &self.image
    }

    pub fn pieces(&self) -> &[(Region, Affine)] {
        &self.pieces
    }

    /// `zeta(x)` for a subset of the domain.
    pub fn map_region(&self, x: &Region) -> Result<Region> {
        Self::image_of(&self.pieces, x)
    }

    /// `zeta^{-1}(y)` for a subset of the image.
    pub fn preimage(&self, y: &Region) -> Result<Region> {
        let mut out = Region::empty(y.dim())?;
        for (c, a) in &self.pieces {
            let part = y.intersect(&c.map_affine(|p| a.apply(p)))?;
            if !part.is_empty() {
                let inv = a.inverse()?;
                out = out.union(&part.map_affine(|p| inv.apply(p)))?;
            }
        }
        Ok(out)
    }

    pub fn restrict(&self, x: &Region) -> Result<Self> {
        let domain = self.domain.intersect(x)?;
        let pieces: Vec<(Region, Affine)> = self
            .pieces
            .iter()
            .map(|(c, a)| Ok((c.intersect(&domain)?, a.clone())))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .filter(|(c, _)| !c.is_empty())
            .collect();
        let image = Self::image_of(&pieces, &domain)?;
        Ok(AffineDeformation { domain, pieces, image })
    }

    pub fn inverse(&self) -> Result<Self> {
        let pieces = self
            .pieces
            .iter()
            .map(|(c, a)| Ok((c.map_affine(|p| a.apply(p)), a.inverse()?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(AffineDeformation {
            domain: self.image.clone(),
            pieces,
            image: self.domain.clone(),
        })
    }

    /// `second` after `self`; defined only when the image of `self` is the
    /// domain of `second`.
    pub fn compose(&self, second: &AffineDeformation) -> Result<Self> {
        if self.dim() != second.dim() || !self.image.approx_eq(&second.domain)? {
            return Err(Error::Composition(
                "image of the first deformation is not the domain of the second".into(),
            ));
        }
        let mut pieces: Vec<(Region, Affine)> = Vec::new();
        for (c1, a1) in &self.pieces {
            let mapped = c1.map_affine(|p| a1.apply(p));
            let inv = a1.inverse()?;
            for (c2, a2) in &second.pieces {
                let part = mapped.intersect(c2)?;
                if part.is_empty() {
                    continue;
                }
                let cell = part.map_affine(|p| inv.apply(p)).intersect(c1)?;
                if !cell.is_empty() {
                    pieces.push((cell, a1.then(a2)));
                }
            }
        }
        // drop sliver cells covered by a neighbour with the same footprint
        let mut keep = vec![true; pieces.len()];
        for i in 0..pieces.len() {
            for j in 0..pieces.len() {
                if i != j && keep[j] && pieces[i].0.measure().dim < pieces[j].0.measure().dim && pieces[i].0.is_subset(&pieces[j].0)? {
                    keep[i] = false;
                    break;
                }
            }
        }
        let pieces: Vec<_> = pieces.into_iter().zip(keep).filter(|(_, k)| *k).map(|(p, _)| p).collect();
        let image = Self::image_of(&pieces, &self.domain)?;
        Ok(AffineDeformation {
            domain: self.domain.clone(),
            pieces,
            image,
        })
    }

    pub fn eval(&self, x: &[f64]) -> Option<Vec<f64>> {
        self.pieces.iter().find(|(c, _)| c.contains_point(x)).map(|(_, a)| a.apply(x))
    }

    /// Same domain and pointwise agreement within `tol` at every cell vertex
    /// of either map.
    pub fn same_as(&self, other: &AffineDeformation, tol: f64) -> Result<bool> {
        if self.dim() != other.dim() || !self.domain.approx_eq(&other.domain)? {
            return Ok(false);
        }
        for (a, b) in [(self, other), (other, self)] {
            for (c, map) in &a.pieces {
                for v in c.vertices() {
                    let Some(y) = b.eval(&v) else { return Ok(false) };
                    if map.apply(&v).iter().zip(&y).any(|(p, q)| (p - q).abs() > tol) {
                        return Ok(false);
                    }
                }
            }
        }
        Ok(true)
    }

    /// Every point of `x` (within the domain) is a fixed point.
    pub fn fixes(&self, x: &Region) -> Result<bool> {
        let tol = SNAP_REL * 1.0f64.max(x.scale()).max(self.domain.scale());
        for (c, a) in &self.pieces {
            // a convex piece is fixed when its vertices are
            for v in x.intersect(c)?.vertices() {
                if a.apply(&v).iter().zip(&v).any(|(p, q)| (p - q).abs() > tol) {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_algebra() {
        let a = Affine::new(2, vec![2.0, 1.0, 0.0, 0.5], vec![1.0, -2.0]).unwrap();
        let inv = a.inverse().unwrap();
        assert_eq!(a.then(&inv), Affine::identity(2).unwrap());
        let r = Affine::rotation(std::f64::consts::FRAC_PI_2, [1.0, 1.0]);
        let y = r.apply(&[2.0, 1.0]);
        assert!((y[0] - 1.0).abs() < 1e-15 && (y[1] - 2.0).abs() < 1e-15);
        assert!(Affine::new(1, vec![0.0], vec![1.0]).unwrap().inverse().is_err());
    }

    #[test]
    fn stretch_of_interval() {
        let z = AffineDeformation::new(Region::interval(0.0, 1.0).unwrap(), Affine::new(1, vec![2.0], vec![0.0]).unwrap())
            .unwrap();
        assert_eq!(z.image().intervals_1d().unwrap(), &[(0.0, 2.0)]);
        let back = z.preimage(&Region::interval(0.0, 1.0).unwrap()).unwrap();
        assert_eq!(back.intervals_1d().unwrap(), &[(0.0, 0.5)]);
    }

    #[test]
    fn broken_line_is_piecewise() {
        let dom = Region::segment([-2.0, 0.0], [2.0, 0.0]).unwrap();
        let left = Region::segment([-2.0, 0.0], [0.0, 0.0]).unwrap();
        let right = Region::segment([0.0, 0.0], [2.0, 0.0]).unwrap();
        let z = AffineDeformation::piecewise(
            dom.clone(),
            vec![
                (left.clone(), Affine::identity(2).unwrap()),
                (right.clone(), Affine::rotation(std::f64::consts::FRAC_PI_2, [0.0, 0.0])),
            ],
        )
        .unwrap();
        assert!((z.image().measure().value - 4.0).abs() < 1e-12);
        assert!(z.preimage(z.image()).unwrap().approx_eq(&dom).unwrap());
        // disagreeing at the seam
        let bad = AffineDeformation::piecewise(
            dom,
            vec![
                (left, Affine::identity(2).unwrap()),
                (right, Affine::translation(vec![0.0, 1.0]).unwrap()),
            ],
        );
        assert!(bad.is_err());
    }

    #[test]
    fn composition_requires_matching_regions() {
        let s = Region::rect([0.0, 0.0], [1.0, 1.0]).unwrap();
        let z = AffineDeformation::new(s.clone(), Affine::translation(vec![2.0, 0.0]).unwrap()).unwrap();
        assert!(matches!(z.compose(&z), Err(Error::Composition(_))));
        let back = z.compose(&z.inverse().unwrap()).unwrap();
        assert!(back.same_as(&AffineDeformation::identity(s).unwrap(), 0.0).unwrap());
    }
}
