//! Geometry of `Z^d`: vertices, edges, the nearest-neighbor and spread-out
//! adjacency, and closed-form regions with their vertex boundaries.
//!
//! Regions are descriptions, never materialized vertex lists. Membership is
//! `O(d)`; boundaries are enumerated only for finite regions and only up to
//! an enumeration cap.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use rustc_hash::FxHashSet;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Largest supported dimension.
pub const MAX_DIM: usize = 10;

/// Default cap on the number of lattice sites a boundary enumeration may visit.
pub const DEFAULT_ENUMERATION_CAP: u64 = 100_000_000;

/// A site of `Z^d`. Coordinates beyond `dim` are always zero.
#[derive(Clone, Copy)]
pub struct Vertex {
    dim: u8,
    coords: [i32; MAX_DIM],
}

impl Vertex {
    pub fn new(coords: &[i32]) -> Result<Self> {
        if coords.is_empty() || coords.len() > MAX_DIM {
            return Err(Error::arg(format!(
                "vertex dimension must be in 1..={MAX_DIM}, got {}",
                coords.len()
            )));
        }
        let mut c = [0; MAX_DIM];
        c[..coords.len()].copy_from_slice(coords);
        Ok(Vertex {
            dim: coords.len() as u8,
            coords: c,
        })
    }

    /// Panicking constructor for literals in tests and fixtures.
    pub fn from_slice(coords: &[i32]) -> Self {
        Self::new(coords).expect("valid vertex literal")
    }

    pub fn origin(dim: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&dim), "dimension out of range");
        Vertex {
            dim: dim as u8,
            coords: [0; MAX_DIM],
        }
    }

    /// `scale * e_axis` (axes are zero-based).
    pub fn axis(dim: usize, axis: usize, scale: i32) -> Self {
        let mut v = Self::origin(dim);
        v.coords[axis] = scale;
        v
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    #[inline]
    pub fn coords(&self) -> &[i32] {
        &self.coords[..self.dim as usize]
    }

    #[inline]
    pub fn get(&self, axis: usize) -> i32 {
        self.coords[axis]
    }

    #[inline]
    pub fn set(&mut self, axis: usize, value: i32) {
        debug_assert!(axis < self.dim());
        self.coords[axis] = value;
    }

    #[inline]
    pub fn add(&self, other: &Vertex) -> Vertex {
        debug_assert_eq!(self.dim, other.dim);
        let mut out = *self;
        for i in 0..self.dim() {
            out.coords[i] += other.coords[i];
        }
        out
    }

    #[inline]
    pub fn sub(&self, other: &Vertex) -> Vertex {
        debug_assert_eq!(self.dim, other.dim);
        let mut out = *self;
        for i in 0..self.dim() {
            out.coords[i] -= other.coords[i];
        }
        out
    }

    #[inline]
    pub fn linf_norm(&self) -> i64 {
        self.coords()
            .iter()
            .map(|c| (*c as i64).abs())
            .max()
            .unwrap_or(0)
    }

    #[inline]
    pub fn l1_norm(&self) -> i64 {
        self.coords().iter().map(|c| (*c as i64).abs()).sum()
    }

    #[inline]
    pub fn linf_dist(&self, other: &Vertex) -> i64 {
        self.coords()
            .iter()
            .zip(other.coords())
            .map(|(a, b)| (*a as i64 - *b as i64).abs())
            .max()
            .unwrap_or(0)
    }

    #[inline]
    pub fn l1_dist(&self, other: &Vertex) -> i64 {
        self.coords()
            .iter()
            .zip(other.coords())
            .map(|(a, b)| (*a as i64 - *b as i64).abs())
            .sum()
    }
}

impl PartialEq for Vertex {
    #[inline]
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.coords == other.coords
    }
}

impl Eq for Vertex {}

impl Hash for Vertex {
    #[inline]
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.coords().hash(state);
    }
}

impl Ord for Vertex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dim
            .cmp(&other.dim)
            .then_with(|| self.coords().cmp(other.coords()))
    }
}

impl PartialOrd for Vertex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for Vertex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.coords())
    }
}

impl fmt::Display for Vertex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, c) in self.coords().iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{c}")?;
        }
        f.write_str(")")
    }
}

impl Serialize for Vertex {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.coords().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Vertex {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let coords = Vec::<i32>::deserialize(d)?;
        Vertex::new(&coords).map_err(serde::de::Error::custom)
    }
}

/// Edge structure of the base graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Adjacency {
    /// `{x, y}` is an edge iff `||x - y||_1 = 1`.
    NearestNeighbor,
    /// `{x, y}` is an edge iff `0 < ||x - y||_inf <= lambda`.
    SpreadOut { lambda: u32 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatticeModel {
    pub d: usize,
    #[serde(flatten)]
    pub adjacency: Adjacency,
}

impl LatticeModel {
    pub fn nearest_neighbor(d: usize) -> Self {
        LatticeModel {
            d,
            adjacency: Adjacency::NearestNeighbor,
        }
    }

    pub fn spread_out(d: usize, lambda: u32) -> Self {
        LatticeModel {
            d,
            adjacency: Adjacency::SpreadOut { lambda },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.d > MAX_DIM {
            return Err(Error::arg(format!(
                "dimension must be in 1..={MAX_DIM}, got {}",
                self.d
            )));
        }
        if let Adjacency::SpreadOut { lambda } = self.adjacency {
            if lambda == 0 {
                return Err(Error::arg("spread-out range must be positive"));
            }
        }
        Ok(())
    }

    pub fn degree(&self) -> usize {
        match self.adjacency {
            Adjacency::NearestNeighbor => 2 * self.d,
            Adjacency::SpreadOut { lambda } => (2 * lambda as usize + 1).pow(self.d as u32) - 1,
        }
    }

    pub fn is_edge(&self, a: &Vertex, b: &Vertex) -> bool {
        if a.dim() != self.d || b.dim() != self.d || a == b {
            return false;
        }
        match self.adjacency {
            Adjacency::NearestNeighbor => a.l1_dist(b) == 1,
            Adjacency::SpreadOut { lambda } => a.linf_dist(b) <= lambda as i64,
        }
    }

    /// Neighbor displacements in the fixed exploration order: axis-major with
    /// the negative step first for nearest-neighbor, lexicographic over
    /// `[-lambda, lambda]^d \ {0}` for spread-out.
    pub fn offsets(&self) -> Vec<Vertex> {
        match self.adjacency {
            Adjacency::NearestNeighbor => (0..self.d)
                .flat_map(|axis| [-1, 1].map(|s| Vertex::axis(self.d, axis, s)))
                .collect(),
            Adjacency::SpreadOut { lambda } => {
                let l = lambda as i64;
                let lo = vec![-l; self.d];
                let hi = vec![l; self.d];
                let mut out = Vec::with_capacity(self.degree());
                for_each_in_block(&lo, &hi, |v| {
                    if v.coords().iter().any(|c| *c != 0) {
                        out.push(*v);
                    }
                });
                out
            }
        }
    }
}

/// Adjacency of `v` in `model`, in the deterministic exploration order.
pub fn neighbors(v: &Vertex, model: &LatticeModel) -> Vec<Vertex> {
    model.offsets().iter().map(|o| v.add(o)).collect()
}

/// Nearest-neighbor offsets, used for boundary geometry under every model.
pub(crate) fn unit_offsets(d: usize) -> Vec<Vertex> {
    LatticeModel::nearest_neighbor(d).offsets()
}

/// An undirected bond with endpoints in lexicographic order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    a: Vertex,
    b: Vertex,
}

impl Edge {
    /// Canonical edge between two adjacent vertices of `model`.
    pub fn new(x: Vertex, y: Vertex, model: &LatticeModel) -> Result<Self> {
        if !model.is_edge(&x, &y) {
            return Err(Error::arg(format!("{x} and {y} are not adjacent in {model:?}")));
        }
        Ok(Self::canonical(x, y))
    }

    /// Orders the endpoints without checking adjacency.
    #[inline]
    pub fn canonical(x: Vertex, y: Vertex) -> Self {
        if x <= y {
            Edge { a: x, b: y }
        } else {
            Edge { a: y, b: x }
        }
    }

    #[inline]
    pub fn a(&self) -> &Vertex {
        &self.a
    }

    #[inline]
    pub fn b(&self) -> &Vertex {
        &self.b
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Orientation {
    /// `x(axis) >= offset`
    Upper,
    /// `x(axis) <= offset`
    Lower,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    Right,
    West,
}

/// Closed description of a vertex set of `Z^d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case")]
pub enum Region {
    Full,
    /// `center + [-radius, radius]^d`
    Box { center: Vertex, radius: i64 },
    HalfSpace {
        axis: usize,
        orientation: Orientation,
        offset: i64,
    },
    /// `B(radius) ∩ {x(1) >= 0}`
    HalfBox { dim: usize, radius: i64 },
    /// `B(center; outer) \ B(center; inner)`
    Annulus {
        center: Vertex,
        inner: i64,
        outer: i64,
    },
    /// `shift + [-alpha n, n] x [-alpha n, alpha n]^(d-1)`, empty when `n < 0`.
    Rect { alpha: i64, n: i64, shift: Vertex },
    /// Axis-aligned product of intervals `prod [lo_i, hi_i]`.
    Block { lo: Vertex, hi: Vertex },
    /// `base` minus `removed`; `anchor`, when set, is exempt from the removal.
    Difference {
        base: Box<Region>,
        removed: Arc<FxHashSet<Vertex>>,
        anchor: Option<Vertex>,
    },
}

impl Region {
    pub fn ball(n: i64, dim: usize) -> Region {
        Region::Box {
            center: Vertex::origin(dim),
            radius: n,
        }
    }

    /// `Z^d_+ = {x(1) >= 0}`
    pub fn upper_half_space() -> Region {
        Region::HalfSpace {
            axis: 0,
            orientation: Orientation::Upper,
            offset: 0,
        }
    }

    pub fn rect(alpha: i64, n: i64, shift: Vertex) -> Region {
        Region::Rect { alpha, n, shift }
    }

    pub fn difference(base: Region, removed: impl IntoIterator<Item = Vertex>, anchor: Option<Vertex>) -> Region {
        Region::Difference {
            base: Box::new(base),
            removed: Arc::new(removed.into_iter().collect()),
            anchor,
        }
    }

    /// Membership, honoring the anchor exemption of difference regions.
    pub fn contains(&self, v: &Vertex) -> bool {
        match self {
            Region::Full => true,
            Region::Box { center, radius } => v.linf_dist(center) <= *radius,
            Region::HalfSpace {
                axis,
                orientation,
                offset,
            } => {
                let x = v.get(*axis) as i64;
                match orientation {
                    Orientation::Upper => x >= *offset,
                    Orientation::Lower => x <= *offset,
                }
            }
            Region::HalfBox { radius, .. } => v.get(0) >= 0 && v.linf_norm() <= *radius,
            Region::Annulus {
                center,
                inner,
                outer,
            } => {
                let r = v.linf_dist(center);
                r > *inner && r <= *outer
            }
            Region::Rect { alpha, n, shift } => {
                if *n < 0 || *alpha < 0 {
                    return false;
                }
                let an = alpha * n;
                (0..v.dim()).all(|i| {
                    let x = v.get(i) as i64 - shift.get(i) as i64;
                    -an <= x && x <= if i == 0 { *n } else { an }
                })
            }
            Region::Block { lo, hi } => {
                lo.dim() == v.dim()
                    && (0..v.dim()).all(|i| lo.get(i) <= v.get(i) && v.get(i) <= hi.get(i))
            }
            Region::Difference {
                base,
                removed,
                anchor,
            } => base.contains(v) && (anchor.as_ref() == Some(v) || !removed.contains(v)),
        }
    }

    /// Whether an exploration may start at `v`.
    pub fn admits_source(&self, v: &Vertex) -> bool {
        match self {
            Region::Difference { anchor, .. } if anchor.as_ref() == Some(v) => true,
            _ => self.contains(v),
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            Region::Full | Region::HalfSpace { .. } => false,
            Region::Difference { base, .. } => base.is_finite(),
            _ => true,
        }
    }

    /// Dimension the region is tied to, if any.
    pub fn dim(&self) -> Option<usize> {
        match self {
            Region::Full | Region::HalfSpace { .. } => None,
            Region::Box { center, .. } | Region::Annulus { center, .. } => Some(center.dim()),
            Region::HalfBox { dim, .. } => Some(*dim),
            Region::Rect { shift, .. } => Some(shift.dim()),
            Region::Block { lo, .. } => Some(lo.dim()),
            Region::Difference { base, .. } => base.dim(),
        }
    }

    /// Bounding box `(lo, hi)` of a finite region; `None` when the region is
    /// infinite or its bounding box is empty.
    pub fn bounds(&self) -> Option<(Vec<i64>, Vec<i64>)> {
        let cube = |c: &Vertex, r: i64| -> Option<(Vec<i64>, Vec<i64>)> {
            if r < 0 {
                return None;
            }
            Some((
                c.coords().iter().map(|x| *x as i64 - r).collect(),
                c.coords().iter().map(|x| *x as i64 + r).collect(),
            ))
        };
        match self {
            Region::Full | Region::HalfSpace { .. } => None,
            Region::Box { center, radius } => cube(center, *radius),
            Region::Annulus { center, outer, .. } => cube(center, *outer),
            Region::HalfBox { dim, radius } => {
                let (mut lo, hi) = cube(&Vertex::origin(*dim), *radius)?;
                lo[0] = 0;
                Some((lo, hi))
            }
            Region::Rect { alpha, n, shift } => {
                if *n < 0 || *alpha < 0 {
                    return None;
                }
                let an = alpha * n;
                let lo = (0..shift.dim())
                    .map(|i| shift.get(i) as i64 - an)
                    .collect();
                let hi = (0..shift.dim())
                    .map(|i| shift.get(i) as i64 + if i == 0 { *n } else { an })
                    .collect();
                Some((lo, hi))
            }
            Region::Block { lo, hi } => {
                if lo.dim() != hi.dim() || (0..lo.dim()).any(|i| lo.get(i) > hi.get(i)) {
                    return None;
                }
                Some((
                    lo.coords().iter().map(|x| *x as i64).collect(),
                    hi.coords().iter().map(|x| *x as i64).collect(),
                ))
            }
            Region::Difference { base, .. } => base.bounds(),
        }
    }

    /// All vertices of a finite region in lexicographic order.
    pub fn vertices(&self, cap: u64) -> Result<Vec<Vertex>> {
        if !self.is_finite() {
            return Err(Error::UnsupportedRegion(format!(
                "cannot enumerate infinite region {self:?}"
            )));
        }
        let Some((lo, hi)) = self.bounds() else {
            return Ok(Vec::new());
        };
        let sites = block_size(&lo, &hi);
        if sites > cap {
            return Err(Error::ResourceCap {
                what: "region enumeration".into(),
                needed: sites,
                cap,
            });
        }
        let mut out = Vec::new();
        for_each_in_block(&lo, &hi, |v| {
            if self.contains(v) {
                out.push(*v);
            }
        });
        Ok(out)
    }

    /// `{x in r : exists y not in r with ||y - x||_1 = 1}`, always under
    /// nearest-neighbor adjacency.
    pub fn boundary(&self) -> Result<BTreeSet<Vertex>> {
        self.boundary_with_cap(DEFAULT_ENUMERATION_CAP)
    }

    pub fn boundary_with_cap(&self, cap: u64) -> Result<BTreeSet<Vertex>> {
        let verts = self.vertices(cap)?;
        let Some(d) = verts.first().map(Vertex::dim) else {
            return Ok(BTreeSet::new());
        };
        let units = unit_offsets(d);
        Ok(verts
            .into_iter()
            .filter(|x| units.iter().any(|u| !self.contains(&x.add(u))))
            .collect())
    }

    /// Whether `v` (assumed to be in the region) lies on its boundary.
    pub(crate) fn on_boundary(&self, v: &Vertex, units: &[Vertex]) -> bool {
        units.iter().any(|u| !self.contains(&v.add(u)))
    }

    /// Right or west boundary of a rectangle. The right boundary is the set
    /// of sites with a neighbor beyond the largest first coordinate; the west
    /// boundary is the rest of the vertex boundary.
    pub fn partial_boundary(&self, side: Side) -> Result<BTreeSet<Vertex>> {
        if !matches!(self, Region::Rect { .. } | Region::Block { .. }) {
            return Err(Error::UnsupportedRegion(format!(
                "partial boundary needs a rectangle, got {self:?}"
            )));
        }
        let Some((_, hi)) = self.bounds() else {
            return Ok(BTreeSet::new());
        };
        let full = self.boundary()?;
        let right = |v: &Vertex| v.get(0) as i64 == hi[0];
        Ok(full
            .into_iter()
            .filter(|v| match side {
                Side::Right => right(v),
                Side::West => !right(v),
            })
            .collect())
    }

    /// `∂_D A = {x in A : exists y in D \ A with ||y - x||_1 = 1}`.
    pub fn relative_boundary(&self, outer: &Region) -> Result<BTreeSet<Vertex>> {
        let verts = self.vertices(DEFAULT_ENUMERATION_CAP)?;
        if let Some(bad) = verts.iter().find(|v| !outer.contains(v)) {
            return Err(Error::arg(format!("{bad} lies in the inner region but not the outer one")));
        }
        let Some(d) = verts.first().map(Vertex::dim) else {
            return Ok(BTreeSet::new());
        };
        let units = unit_offsets(d);
        Ok(verts
            .into_iter()
            .filter(|x| {
                units.iter().any(|u| {
                    let y = x.add(u);
                    outer.contains(&y) && !self.contains(&y)
                })
            })
            .collect())
    }
}

pub(crate) fn block_size(lo: &[i64], hi: &[i64]) -> u64 {
    lo.iter()
        .zip(hi)
        .map(|(l, h)| (h - l + 1).max(0) as u64)
        .fold(1u64, |acc, s| acc.saturating_mul(s))
}

/// Visits every site of `prod [lo_i, hi_i]` in lexicographic order.
pub(crate) fn for_each_in_block(lo: &[i64], hi: &[i64], mut f: impl FnMut(&Vertex)) {
    let d = lo.len();
    if d == 0 || lo.iter().zip(hi).any(|(l, h)| l > h) {
        return;
    }
    let start: Vec<i32> = lo.iter().map(|x| *x as i32).collect();
    let mut v = Vertex::from_slice(&start);
    loop {
        f(&v);
        let mut axis = d;
        loop {
            if axis == 0 {
                return;
            }
            axis -= 1;
            if (v.get(axis) as i64) < hi[axis] {
                v.set(axis, v.get(axis) + 1);
                break;
            }
            v.set(axis, lo[axis] as i32);
        }
    }
}
