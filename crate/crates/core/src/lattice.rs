//! Sites and nearest-neighbor edges of `Z^d`.

use core::cmp::Ordering;
use core::fmt;
use core::ops::{Add, Neg, Sub};

use crate::{Error, Result};

/// Largest lattice dimension supported by the fixed-size [`Site`] representation.
pub const MAX_DIM: usize = 4;

/// A point of `Z^d`. Copyable; unused trailing coordinates are kept at zero.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Site {
    coords: [i64; MAX_DIM],
    dim: u8,
}

impl Site {
    pub fn new(coords: &[i64]) -> Result<Site> {
        let d = coords.len();
        if d == 0 || d > MAX_DIM {
            return Err(Error::UnsupportedDimension(d));
        }
        let mut c = [0; MAX_DIM];
        c[..d].copy_from_slice(coords);
        Ok(Site { coords: c, dim: d as u8 })
    }

    pub fn origin(dim: usize) -> Result<Site> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::UnsupportedDimension(dim));
        }
        Ok(Site { coords: [0; MAX_DIM], dim: dim as u8 })
    }

    /// `Site::new` for callers that already validated the dimension.
    pub(crate) fn from_array(coords: [i64; MAX_DIM], dim: usize) -> Site {
        debug_assert!(dim >= 1 && dim <= MAX_DIM);
        Site { coords, dim: dim as u8 }
    }

    /// The unit vector `e_axis` (axes are 0-based).
    pub fn unit(dim: usize, axis: usize) -> Result<Site> {
        let mut s = Site::origin(dim)?;
        if axis >= dim {
            return Err(Error::AxisOutOfRange { axis, dim });
        }
        s.coords[axis] = 1;
        Ok(s)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    #[inline]
    pub fn coords(&self) -> &[i64] {
        &self.coords[..self.dim as usize]
    }

    #[inline]
    pub fn get(&self, axis: usize) -> i64 {
        self.coords[axis]
    }

    /// `self + delta * e_axis`.
    #[inline]
    pub fn offset(mut self, axis: usize, delta: i64) -> Site {
        self.coords[axis] += delta;
        self
    }

    /// Supremum norm.
    pub fn norm_inf(&self) -> i64 {
        self.coords().iter().map(|c| c.abs()).max().unwrap_or(0)
    }

    pub fn norm_l1(&self) -> i64 {
        self.coords().iter().map(|c| c.abs()).sum()
    }

    pub fn norm_sq(&self) -> i64 {
        self.coords().iter().map(|c| c * c).sum()
    }
}

impl Add for Site {
    type Output = Site;
    #[inline]
    fn add(mut self, rhs: Site) -> Site {
        debug_assert_eq!(self.dim, rhs.dim);
        for i in 0..MAX_DIM {
            self.coords[i] += rhs.coords[i];
        }
        self
    }
}

impl Sub for Site {
    type Output = Site;
    #[inline]
    fn sub(mut self, rhs: Site) -> Site {
        debug_assert_eq!(self.dim, rhs.dim);
        for i in 0..MAX_DIM {
            self.coords[i] -= rhs.coords[i];
        }
        self
    }
}

impl Neg for Site {
    type Output = Site;
    fn neg(mut self) -> Site {
        for c in &mut self.coords {
            *c = -*c;
        }
        self
    }
}

impl Ord for Site {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.dim, self.coords).cmp(&(other.dim, other.coords))
    }
}

impl PartialOrd for Site {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.coords())
    }
}

/// The undirected edge `{base, base + e_axis}` in canonical orientation.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct Edge {
    pub base: Site,
    pub axis: usize,
}

impl Edge {
    pub fn new(base: Site, axis: usize) -> Result<Edge> {
        if axis >= base.dim() {
            return Err(Error::AxisOutOfRange { axis, dim: base.dim() });
        }
        Ok(Edge { base, axis })
    }

    /// Canonical edge joining two nearest neighbors, in either order.
    pub fn between(x: Site, y: Site) -> Option<Edge> {
        if x.dim() != y.dim() {
            return None;
        }
        let diff = y - x;
        if diff.norm_l1() != 1 {
            return None;
        }
        let axis = diff.coords().iter().position(|&c| c != 0)?;
        let base = if diff.get(axis) == 1 { x } else { y };
        Some(Edge { base, axis })
    }

    #[inline]
    pub fn head(&self) -> Site {
        self.base.offset(self.axis, 1)
    }
}
