use alloc::vec::Vec;

use crate::lattice::{Edge, Site, MAX_DIM};
use crate::{Error, Result};

/// What a field looks like outside the box.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Boundary {
    /// Fields vanish outside the box.
    Dirichlet,
    /// The box is a torus; coordinates wrap.
    Periodic,
}

/// A lattice box: the centered window `Lambda_r = [-r, r]^d` with zero
/// boundary values, or a periodic torus `[0, L_1) x ... x [0, L_d)`.
///
/// Sites are indexed row-major with axis 0 slowest.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Window {
    dim: usize,
    lower: [i64; MAX_DIM],
    sides: [usize; MAX_DIM],
    strides: [usize; MAX_DIM],
    len: usize,
    boundary: Boundary,
    radius: Option<usize>,
}

impl Window {
    /// `Lambda_r = [-r, r]^d`.
    pub fn centered(dim: usize, radius: usize) -> Result<Window> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::UnsupportedDimension(dim));
        }
        let side = 2 * radius + 1;
        let mut w = Window::build(dim, [-(radius as i64); MAX_DIM], [side; MAX_DIM], Boundary::Dirichlet);
        w.radius = Some(radius);
        Ok(w)
    }

    pub fn torus(sides: &[usize]) -> Result<Window> {
        let dim = sides.len();
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::UnsupportedDimension(dim));
        }
        if sides.iter().any(|&s| s == 0) {
            return Err(Error::invalid("torus sides must be positive"));
        }
        let mut s = [1; MAX_DIM];
        s[..dim].copy_from_slice(sides);
        Ok(Window::build(dim, [0; MAX_DIM], s, Boundary::Periodic))
    }

    fn build(dim: usize, lower: [i64; MAX_DIM], sides: [usize; MAX_DIM], boundary: Boundary) -> Window {
        let mut strides = [0; MAX_DIM];
        let mut acc = 1;
        for i in (0..dim).rev() {
            strides[i] = acc;
            acc *= sides[i];
        }
        Window { dim, lower, sides, strides, len: acc, boundary, radius: None }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    /// Radius of a centered window; `None` for a torus.
    pub fn radius(&self) -> Option<usize> {
        self.radius
    }

    pub fn sides(&self) -> &[usize] {
        &self.sides[..self.dim]
    }

    #[inline]
    pub fn site(&self, index: usize) -> Site {
        let mut c = [0i64; MAX_DIM];
        let mut rem = index;
        for i in 0..self.dim {
            c[i] = self.lower[i] + (rem / self.strides[i]) as i64;
            rem %= self.strides[i];
        }
        Site::from_array(c, self.dim)
    }

    /// Index of `x`; on a torus every site maps (by wrapping), on a centered
    /// window sites outside give `None`.
    #[inline]
    pub fn index(&self, x: &Site) -> Option<usize> {
        let mut idx = 0;
        for i in 0..self.dim {
            let rel = x.get(i) - self.lower[i];
            let side = self.sides[i] as i64;
            let rel = match self.boundary {
                Boundary::Dirichlet => {
                    if rel < 0 || rel >= side {
                        return None;
                    }
                    rel
                }
                Boundary::Periodic => rel.rem_euclid(side),
            };
            idx += rel as usize * self.strides[i];
        }
        Some(idx)
    }

    pub fn contains(&self, x: &Site) -> bool {
        x.dim() == self.dim && (self.boundary == Boundary::Periodic || self.index(x).is_some())
    }

    pub fn sites(&self) -> impl Iterator<Item = Site> + '_ {
        (0..self.len).map(move |i| self.site(i))
    }

    /// Canonical edges of the box.
    ///
    /// Centered window: `E(Lambda_r)`, every edge with at least one endpoint in
    /// the window, each once. Torus: the `d * |cell|` edges `(x, x + e_i)` with
    /// the head wrapped.
    pub fn edges(&self) -> Vec<Edge> {
        let mut out = Vec::with_capacity(self.len * self.dim + self.len);
        for x in self.sites() {
            for axis in 0..self.dim {
                out.push(Edge { base: x, axis });
                if self.boundary == Boundary::Dirichlet && x.get(axis) == self.lower[axis] {
                    out.push(Edge { base: x.offset(axis, -1), axis });
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centered_window_counts() {
        let w = Window::centered(2, 3).unwrap();
        assert_eq!(w.len(), 49);
        // d (2r+1)^{d-1} (2r+2) edges incident to the box
        assert_eq!(w.edges().len(), 2 * 7 * 8);
        for i in 0..w.len() {
            assert_eq!(w.index(&w.site(i)), Some(i));
        }
        assert_eq!(w.index(&Site::new(&[4, 0]).unwrap()), None);
        let mut edges = w.edges();
        edges.sort();
        edges.dedup();
        assert_eq!(edges.len(), 112);
    }

    #[test]
    fn torus_wraps() {
        let t = Window::torus(&[2, 3]).unwrap();
        assert_eq!(t.len(), 6);
        assert_eq!(t.index(&Site::new(&[-1, 4]).unwrap()), t.index(&Site::new(&[1, 1]).unwrap()));
        assert_eq!(t.edges().len(), 12);
    }
}
