//! Spanning-cluster census of `B(n)`: union-find over every open edge with
//! both endpoints in the box. Sites are indexed by mixed-radix encoding and
//! edge states are streamed from the sampler, never stored.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{for_each_in_block, Vertex};
use crate::sampler::{check_probability, SamplerConfig};

pub const DEFAULT_SITE_CAP: u64 = 20_000_000;

/// Disjoint-set forest with union by size and path halving.
#[derive(Clone, Debug)]
pub struct UnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl UnionFind {
    pub fn new(len: usize) -> Self {
        UnionFind {
            parent: (0..len as u32).collect(),
            size: vec![1; len],
        }
    }

    pub fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let grand = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = grand;
            x = grand;
        }
        x
    }

    pub fn union(&mut self, a: u32, b: u32) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra as usize] < self.size[rb as usize] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb as usize] = ra;
        self.size[ra as usize] += self.size[rb as usize];
        true
    }

    pub fn size_of(&mut self, x: u32) -> u32 {
        let r = self.find(x);
        self.size[r as usize]
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanningCensus {
    /// Number of clusters of `B(n)` touching both `x(1) = -n` and `x(1) = n`.
    pub count: usize,
    /// Their sizes, largest first.
    pub sizes: Vec<u64>,
}

/// Open clusters of `B(n)` for one trial.
pub struct BoxClusters {
    n: i64,
    d: usize,
    side: u64,
    uf: UnionFind,
}

impl BoxClusters {
    pub fn label(n: i64, p: f64, cfg: &SamplerConfig, site_cap: u64) -> Result<Self> {
        check_probability(p)?;
        if n < 0 {
            return Err(Error::arg("box radius must be nonnegative"));
        }
        let d = cfg.model.d;
        let side = 2 * n as u64 + 1;
        let sites = side.checked_pow(d as u32).unwrap_or(u64::MAX);
        if sites > site_cap || sites > u32::MAX as u64 {
            return Err(Error::ResourceCap {
                what: format!("spanning census of B({n}) in d={d}"),
                needed: sites,
                cap: site_cap,
            });
        }
        let mut uf = UnionFind::new(sites as usize);
        let field = cfg.field();
        // Each edge once: only offsets that are lexicographically positive.
        let forward: Vec<Vertex> = cfg
            .model
            .offsets()
            .into_iter()
            .filter(|o| o > &Vertex::origin(d))
            .collect();
        let lo = vec![-n; d];
        let hi = vec![n; d];
        let mut this = BoxClusters { n, d, side, uf: UnionFind::new(0) };
        for_each_in_block(&lo, &hi, |v| {
            let iv = this.index(v);
            for o in &forward {
                let w = v.add(o);
                if w.linf_norm() <= n && field.is_open(v, &w, p) {
                    uf.union(iv, this.index(&w));
                }
            }
        });
        this.uf = uf;
        Ok(this)
    }

    #[inline]
    pub fn index(&self, v: &Vertex) -> u32 {
        let mut idx = 0u64;
        for i in 0..self.d {
            idx = idx * self.side + (v.get(i) as i64 + self.n) as u64;
        }
        idx as u32
    }

    pub fn connected(&mut self, a: &Vertex, b: &Vertex) -> bool {
        let (ia, ib) = (self.index(a), self.index(b));
        self.uf.find(ia) == self.uf.find(ib)
    }

    /// Roots of clusters meeting the face `x(1) = x1`.
    fn face_roots(&mut self, x1: i64) -> Vec<u32> {
        let mut lo = vec![-self.n; self.d];
        let mut hi = vec![self.n; self.d];
        lo[0] = x1;
        hi[0] = x1;
        let mut idx = Vec::new();
        for_each_in_block(&lo, &hi, |v| idx.push(self.index(v)));
        let mut roots: Vec<u32> = idx.into_iter().map(|i| self.uf.find(i)).collect();
        roots.sort_unstable();
        roots.dedup();
        roots
    }

    fn spanning_roots(&mut self) -> Vec<u32> {
        let west = self.face_roots(-self.n);
        let east = self.face_roots(self.n);
        west.into_iter()
            .filter(|r| east.binary_search(r).is_ok())
            .collect()
    }

    pub fn census(&mut self) -> SpanningCensus {
        let roots = self.spanning_roots();
        let mut sizes: Vec<u64> = roots.iter().map(|r| self.uf.size_of(*r) as u64).collect();
        sizes.sort_unstable_by(|a, b| b.cmp(a));
        SpanningCensus {
            count: sizes.len(),
            sizes,
        }
    }

    /// Per-site flag: the site belongs to some spanning cluster.
    pub fn spanning_sites(&mut self) -> Vec<bool> {
        let roots = self.spanning_roots();
        (0..self.uf.parent.len() as u32)
            .map(|i| roots.binary_search(&self.uf.find(i)).is_ok())
            .collect()
    }
}

pub fn spanning_census(n: i64, p: f64, cfg: &SamplerConfig) -> Result<SpanningCensus> {
    spanning_census_capped(n, p, cfg, DEFAULT_SITE_CAP)
}

pub fn spanning_census_capped(n: i64, p: f64, cfg: &SamplerConfig, site_cap: u64) -> Result<SpanningCensus> {
    Ok(BoxClusters::label(n, p, cfg, site_cap)?.census())
}
