//! Finite hypercubic lattices, regions, and the axis isometries acting on them.
//!
//! Sites are indexed row-major with axis order `(x_1, ..., x_d)`: the last axis
//! varies fastest, so in 2D the site `(x_1, x_2)` has index `x_1 * n_2 + x_2`.
//! Every module uses this map; [`LatticeGeometry::index`] and
//! [`LatticeGeometry::coords`] are its two directions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported site count. Indices must fit in 32 bits.
pub const MAX_SITES: u64 = 1 << 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Periodic,
    /// Field pinned to zero on a ghost layer just outside the lattice.
    Dirichlet,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct GeometrySpec {
    dim: usize,
    extents: Vec<usize>,
    spacing: f64,
    boundary: Boundary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GeometrySpec", into = "GeometrySpec")]
pub struct LatticeGeometry {
    extents: Vec<usize>,
    strides: Vec<usize>,
    spacing: f64,
    boundary: Boundary,
    n_sites: usize,
}

impl TryFrom<GeometrySpec> for LatticeGeometry {
    type Error = Error;

    fn try_from(s: GeometrySpec) -> Result<Self> {
        LatticeGeometry::new(s.dim, &s.extents, s.spacing, s.boundary)
    }
}

impl From<LatticeGeometry> for GeometrySpec {
    fn from(g: LatticeGeometry) -> Self {
        GeometrySpec {
            dim: g.dim(),
            extents: g.extents,
            spacing: g.spacing,
            boundary: g.boundary,
        }
    }
}

impl LatticeGeometry {
    pub fn new(dim: usize, extents: &[usize], spacing: f64, boundary: Boundary) -> Result<Self> {
        if !matches!(dim, 1 | 2 | 4) {
            return Err(Error::Geometry(format!("dim must be 1, 2 or 4, got {dim}")));
        }
        if extents.len() != dim {
            return Err(Error::Geometry(format!(
                "expected {dim} extents, got {}",
                extents.len()
            )));
        }
        if let Some(e) = extents.iter().find(|&&e| e < 2) {
            return Err(Error::Geometry(format!("every extent must be >= 2, got {e}")));
        }
        if !(spacing > 0.0) || !spacing.is_finite() {
            return Err(Error::Geometry(format!("spacing must be positive, got {spacing}")));
        }
        let mut total: u64 = 1;
        for &e in extents {
            total = total
                .checked_mul(e as u64)
                .filter(|&t| t <= MAX_SITES)
                .ok_or_else(|| Error::Overflow(format!("extents {extents:?}")))?;
        }
        let mut strides = vec![1; dim];
        for i in (0..dim.saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * extents[i + 1];
        }
        Ok(LatticeGeometry {
            extents: extents.to_vec(),
            strides,
            spacing,
            boundary,
            n_sites: total as usize,
        })
    }

    pub fn dim(&self) -> usize {
        self.extents.len()
    }

    pub fn extents(&self) -> &[usize] {
        &self.extents
    }

    pub fn extent(&self, axis: usize) -> usize {
        self.extents[axis]
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn num_sites(&self) -> usize {
        self.n_sites
    }

    /// Volume element `a^d`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.dim() as i32)
    }

    pub fn index(&self, coords: &[usize]) -> usize {
        coords.iter().zip(&self.strides).map(|(c, s)| c * s).sum()
    }

    pub fn coords(&self, mut site: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim()];
        for (axis, stride) in self.strides.iter().enumerate() {
            out[axis] = site / stride;
            site %= stride;
        }
        out
    }

    pub fn coord(&self, site: usize, axis: usize) -> usize {
        (site / self.strides[axis]) % self.extents[axis]
    }

    /// Neighbor of `site` one step along `axis` in direction `forward`.
    /// `None` means the ghost layer of a Dirichlet lattice.
    pub fn neighbor(&self, site: usize, axis: usize, forward: bool) -> Option<usize> {
        let n = self.extents[axis];
        let c = self.coord(site, axis);
        let stride = self.strides[axis];
        let next = match (forward, self.boundary) {
            (true, _) if c + 1 < n => c + 1,
            (false, _) if c > 0 => c - 1,
            (true, Boundary::Periodic) => 0,
            (false, Boundary::Periodic) => n - 1,
            (_, Boundary::Dirichlet) => return None,
        };
        Some(site - c * stride + next * stride)
    }

    /// All `2 d` neighbor slots of a site, forward then backward per axis.
    pub fn neighbors(&self, site: usize) -> impl Iterator<Item = Option<usize>> + '_ {
        (0..self.dim())
            .flat_map(move |axis| [self.neighbor(site, axis, true), self.neighbor(site, axis, false)])
    }

    /// Splits the lattice along the coordinate plane `x_axis = plane` into
    /// `A = {x_axis <= plane}`, `B = {x_axis >= plane}` and `sigma = A ∩ B`.
    pub fn split_by_hyperplane(&self, axis: usize, plane: usize) -> Result<(Region, Region, Region)> {
        if axis >= self.dim() {
            return Err(Error::OutOfRange(format!("axis {axis} for dim {}", self.dim())));
        }
        if plane >= self.extents[axis] {
            return Err(Error::OutOfRange(format!(
                "plane {plane} on axis of extent {}",
                self.extents[axis]
            )));
        }
        let a = self.region_where(|s| self.coord(s, axis) <= plane);
        let b = self.region_where(|s| self.coord(s, axis) >= plane);
        let sigma = self.region_where(|s| self.coord(s, axis) == plane);
        Ok((a, b, sigma))
    }

    /// The time slice `x_axis = t`.
    pub fn slice(&self, axis: usize, t: usize) -> Result<Region> {
        Ok(self.split_by_hyperplane(axis, t)?.2)
    }

    pub fn region_where(&self, pred: impl Fn(usize) -> bool) -> Region {
        Region::from_sorted(self.n_sites, (0..self.n_sites).filter(|&s| pred(s)).collect())
    }

    pub fn full_region(&self) -> Region {
        self.region_where(|_| true)
    }

    /// Image of `site` under `element`.
    pub fn map_site(&self, element: &IsometryElement, site: usize) -> Result<usize> {
        self.check_isometry(element)?;
        Ok(self.map_site_unchecked(element, site))
    }

    fn map_site_unchecked(&self, element: &IsometryElement, site: usize) -> usize {
        let axis = element.axis();
        let n = self.extents[axis] as i64;
        let c = self.coord(site, axis) as i64;
        let image = match *element {
            IsometryElement::Translation { offset, .. } => (c + offset).rem_euclid(n),
            IsometryElement::Reflection { plane, .. } => (2 * plane as i64 - c).rem_euclid(n),
        };
        let stride = self.strides[axis];
        site - c as usize * stride + image as usize * stride
    }

    fn check_isometry(&self, element: &IsometryElement) -> Result<()> {
        let axis = element.axis();
        if axis >= self.dim() {
            return Err(Error::OutOfRange(format!("axis {axis} for dim {}", self.dim())));
        }
        let n = self.extents[axis];
        match (*element, self.boundary) {
            (IsometryElement::Reflection { plane, .. }, _) if plane >= n => Err(
                Error::OutOfRange(format!("mirror plane {plane} on axis of extent {n}")),
            ),
            (_, Boundary::Periodic) => Ok(()),
            (IsometryElement::Translation { offset, .. }, Boundary::Dirichlet) => {
                if offset == 0 {
                    Ok(())
                } else {
                    Err(Error::InvalidIsometry(format!(
                        "translation by {offset} does not map a Dirichlet lattice onto itself"
                    )))
                }
            }
            (IsometryElement::Reflection { plane, .. }, Boundary::Dirichlet) => {
                if 2 * plane + 1 == n {
                    Ok(())
                } else {
                    Err(Error::InvalidIsometry(format!(
                        "plane {plane} is not the symmetry plane of a Dirichlet axis of extent {n}"
                    )))
                }
            }
        }
    }

    /// `(g f)(x) = f(g^{-1} x)`.
    pub fn apply_isometry(
        &self,
        element: &IsometryElement,
        field: &FieldConfiguration,
    ) -> Result<FieldConfiguration> {
        self.check_field(field)?;
        self.check_isometry(element)?;
        let mut out = vec![0.0; self.n_sites];
        for (site, &v) in field.values().iter().enumerate() {
            out[self.map_site_unchecked(element, site)] = v;
        }
        Ok(FieldConfiguration::new(out))
    }

    pub fn check_field(&self, field: &FieldConfiguration) -> Result<()> {
        self.check_len(field.len())
    }

    pub fn check_len(&self, len: usize) -> Result<()> {
        if len == self.n_sites {
            Ok(())
        } else {
            Err(Error::GeometryMismatch { expected: self.n_sites, got: len })
        }
    }

    /// Same lattice with two axes exchanged.
    pub fn transposed(&self, a: usize, b: usize) -> Result<Self> {
        let mut ext = self.extents.clone();
        ext.swap(a, b);
        LatticeGeometry::new(self.dim(), &ext, self.spacing, self.boundary)
    }
}

/// A set of sites of one lattice, kept sorted and deduplicated.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Region {
    n_sites: usize,
    sites: Vec<usize>,
}

impl Region {
    pub fn new(geometry: &LatticeGeometry, mut sites: Vec<usize>) -> Result<Self> {
        sites.sort_unstable();
        sites.dedup();
        if let Some(&s) = sites.last() {
            if s >= geometry.num_sites() {
                return Err(Error::OutOfRange(format!(
                    "site {s} in a lattice of {} sites",
                    geometry.num_sites()
                )));
            }
        }
        Ok(Region { n_sites: geometry.num_sites(), sites })
    }

    fn from_sorted(n_sites: usize, sites: Vec<usize>) -> Self {
        Region { n_sites, sites }
    }

    pub fn sites(&self) -> &[usize] {
        &self.sites
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn lattice_size(&self) -> usize {
        self.n_sites
    }

    pub fn contains(&self, site: usize) -> bool {
        self.sites.binary_search(&site).is_ok()
    }

    pub fn mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.n_sites];
        for &s in &self.sites {
            m[s] = true;
        }
        m
    }

    pub fn union(&self, other: &Region) -> Region {
        let mut s: Vec<usize> = self.sites.iter().chain(&other.sites).copied().collect();
        s.sort_unstable();
        s.dedup();
        Region::from_sorted(self.n_sites, s)
    }

    pub fn intersection(&self, other: &Region) -> Region {
        let s = self.sites.iter().copied().filter(|&x| other.contains(x)).collect();
        Region::from_sorted(self.n_sites, s)
    }

    pub fn difference(&self, other: &Region) -> Region {
        let s = self.sites.iter().copied().filter(|&x| !other.contains(x)).collect();
        Region::from_sorted(self.n_sites, s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum IsometryElement {
    /// `x_axis -> x_axis + offset`.
    Translation { axis: usize, offset: i64 },
    /// `x_axis -> 2 plane - x_axis`.
    Reflection { axis: usize, plane: usize },
}

impl IsometryElement {
    pub fn axis(&self) -> usize {
        match *self {
            IsometryElement::Translation { axis, .. } | IsometryElement::Reflection { axis, .. } => {
                axis
            }
        }
    }

    pub fn inverse(&self) -> Self {
        match *self {
            IsometryElement::Translation { axis, offset } => {
                IsometryElement::Translation { axis, offset: -offset }
            }
            r @ IsometryElement::Reflection { .. } => r,
        }
    }
}

/// One real value per lattice site: a point of Q space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldConfiguration {
    values: Vec<f64>,
}

impl FieldConfiguration {
    pub fn new(values: Vec<f64>) -> Self {
        FieldConfiguration { values }
    }

    pub fn zeros(n: usize) -> Self {
        FieldConfiguration { values: vec![0.0; n] }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl std::ops::Index<usize> for FieldConfiguration {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}
