//! Breadth-first exploration of a single open cluster.
//!
//! The cluster of `origin` in region `G` is the component of `origin` in the
//! open subgraph of `G ∪ {origin}`: every vertex other than the origin must be
//! admitted by the region. BFS layers are chemical distances, and the
//! neighbor order is fixed so a report is reproducible bit for bit.

use rustc_hash::FxHashSet;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, TruncationReason};
use crate::lattice::{unit_offsets, Region, Vertex};
use crate::sampler::{check_probability, SamplerConfig};

/// Exploration limits. A trial that hits either limit is reported as
/// truncated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    pub max_volume: u64,
    pub max_intrinsic_radius: u32,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            max_volume: 1_000_000,
            max_intrinsic_radius: 100_000,
        }
    }
}

impl Budget {
    pub fn volume(max_volume: u64) -> Self {
        Budget {
            max_volume,
            ..Budget::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_volume == 0 || self.max_intrinsic_radius == 0 {
            return Err(Error::arg("budgets must be positive"));
        }
        Ok(())
    }
}

/// A set the exploration measures chemical distance to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Target {
    Vertex { at: Vertex },
    /// Sites at `l_inf` distance at least `radius` from the origin. For
    /// nearest-neighbor steps the first such site reached lies on
    /// `∂B(origin; radius)`.
    Reach { radius: i64 },
    /// The vertex boundary of a finite region.
    Boundary { of: Region },
    /// Any site of a region.
    Within { region: Region },
    /// Any site at chemical distance at least `layers`.
    Depth { layers: u32 },
}

impl Target {
    pub fn vertex(at: Vertex) -> Self {
        Target::Vertex { at }
    }

    pub fn reach(radius: i64) -> Self {
        Target::Reach { radius }
    }

    fn hit(&self, v: &Vertex, depth: u32, origin: &Vertex, units: &[Vertex]) -> bool {
        match self {
            Target::Depth { layers } => depth >= *layers,
            Target::Vertex { at } => v == at,
            Target::Reach { radius } => v.linf_dist(origin) >= *radius,
            Target::Boundary { of } => of.contains(v) && of.on_boundary(v, units),
            Target::Within { region } => region.contains(v),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExploreOptions {
    /// Stop as soon as every target has been reached.
    pub stop_when_resolved: bool,
    /// Collect `cluster ∩ ∂region` (finite regions only).
    pub record_boundary: bool,
    /// Keep the cluster's vertices in discovery order.
    pub record_members: bool,
}

impl Default for ExploreOptions {
    fn default() -> Self {
        ExploreOptions {
            stop_when_resolved: true,
            record_boundary: false,
            record_members: false,
        }
    }
}

impl ExploreOptions {
    pub fn exhaustive() -> Self {
        ExploreOptions {
            stop_when_resolved: false,
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterReport {
    pub origin: Vertex,
    pub region: Region,
    pub p: f64,
    /// Sites discovered. Equals `|C_G(origin)|` when `exhausted`.
    pub volume: u64,
    /// Sorted `C_G(origin) ∩ ∂G`, when requested and the region is finite.
    pub boundary_hits: Option<Vec<Vertex>>,
    pub extrinsic_radius: i64,
    pub intrinsic_radius: u32,
    /// Chemical distance to each target, in the order the targets were given.
    pub chem_dist: Vec<Option<u32>>,
    pub truncated: Option<TruncationReason>,
    /// The whole cluster was explored.
    pub exhausted: bool,
    pub members: Option<Vec<Vertex>>,
}

impl ClusterReport {
    pub fn resolved(&self) -> bool {
        self.chem_dist.iter().all(Option::is_some)
    }
}

pub fn explore(
    origin: &Vertex,
    region: &Region,
    p: f64,
    cfg: &SamplerConfig,
    budget: Budget,
    targets: &[Target],
) -> Result<ClusterReport> {
    explore_with(origin, region, p, cfg, budget, targets, ExploreOptions::default())
}

pub fn explore_with(
    origin: &Vertex,
    region: &Region,
    p: f64,
    cfg: &SamplerConfig,
    budget: Budget,
    targets: &[Target],
    opts: ExploreOptions,
) -> Result<ClusterReport> {
    check_probability(p)?;
    budget.validate()?;
    if origin.dim() != cfg.model.d {
        return Err(Error::arg(format!(
            "origin {origin} does not live in dimension {}",
            cfg.model.d
        )));
    }
    if !region.admits_source(origin) {
        return Err(Error::arg(format!("origin {origin} is not admissible in {region:?}")));
    }

    let field = cfg.field();
    let offsets = cfg.model.offsets();
    let units = unit_offsets(origin.dim());

    let mut chem_dist: Vec<Option<u32>> = vec![None; targets.len()];
    let mut unresolved = targets.len();
    let note = |v: &Vertex, depth: u32, chem: &mut Vec<Option<u32>>, unresolved: &mut usize| {
        for (slot, t) in chem.iter_mut().zip(targets) {
            if slot.is_none() && t.hit(v, depth, origin, &units) {
                *slot = Some(depth);
                *unresolved -= 1;
            }
        }
    };

    let mut seen: FxHashSet<Vertex> = FxHashSet::default();
    let mut order: Vec<Vertex> = vec![*origin];
    let mut depth: Vec<u32> = vec![0];
    seen.insert(*origin);
    note(origin, 0, &mut chem_dist, &mut unresolved);

    let stop_early = opts.stop_when_resolved && !targets.is_empty();
    let mut extrinsic = 0i64;
    let mut truncated = None;
    let mut head = 0usize;

    'bfs: while head < order.len() {
        if stop_early && unresolved == 0 {
            break;
        }
        let v = order[head];
        let dv = depth[head];
        head += 1;
        for o in &offsets {
            let w = v.add(o);
            if !region.contains(&w) || seen.contains(&w) || !field.is_open(&v, &w, p) {
                continue;
            }
            if order.len() as u64 >= budget.max_volume {
                truncated = Some(TruncationReason::Volume);
                break 'bfs;
            }
            if dv + 1 > budget.max_intrinsic_radius {
                truncated = Some(TruncationReason::Radius);
                break 'bfs;
            }
            seen.insert(w);
            order.push(w);
            depth.push(dv + 1);
            extrinsic = extrinsic.max(w.linf_dist(origin));
            if unresolved > 0 {
                note(&w, dv + 1, &mut chem_dist, &mut unresolved);
                if stop_early && unresolved == 0 {
                    break 'bfs;
                }
            }
        }
    }

    let exhausted = truncated.is_none() && head == order.len();
    let boundary_hits = if opts.record_boundary && region.is_finite() {
        let mut hits: Vec<Vertex> = order
            .iter()
            .filter(|v| region.contains(v) && region.on_boundary(v, &units))
            .copied()
            .collect();
        hits.sort();
        Some(hits)
    } else {
        None
    };

    Ok(ClusterReport {
        origin: *origin,
        region: region.clone(),
        p,
        volume: order.len() as u64,
        boundary_hits,
        extrinsic_radius: extrinsic,
        intrinsic_radius: depth.last().copied().unwrap_or(0),
        chem_dist,
        truncated,
        exhausted,
        members: opts.record_members.then_some(order),
    })
}

/// Exact chemical distance from `origin` to `target` inside `region`.
/// `Ok(None)` means the cluster was exhausted without contact; a budget stop
/// before contact is an error.
pub fn chemical_distance(
    origin: &Vertex,
    target: &Target,
    region: &Region,
    p: f64,
    cfg: &SamplerConfig,
    budget: Budget,
) -> Result<Option<u32>> {
    let report = explore(origin, region, p, cfg, budget, std::slice::from_ref(target))?;
    match (report.chem_dist[0], report.truncated) {
        (Some(d), _) => Ok(Some(d)),
        (None, Some(reason)) => Err(Error::BudgetExhausted(reason)),
        (None, None) => Ok(None),
    }
}

/// Outcome of a farthest-first search for `||y - origin||_inf >= n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ArmReach {
    /// Largest `l_inf` distance seen, capped at the requested radius.
    pub reached: i64,
    pub volume: u64,
    pub truncated: Option<TruncationReason>,
}

impl ArmReach {
    pub fn hit(&self, n: i64) -> bool {
        self.reached >= n
    }
}

/// Searches the full-lattice cluster of `origin` for a site at `l_inf`
/// distance `n`, always expanding a site of largest distance first.
///
/// Whether the cluster reaches distance `n` does not depend on the search
/// order, so the event agrees with BFS trial by trial. The gain is cost: in a
/// supercritical cluster BFS fills a whole spatial ball before its frontier
/// reaches the sphere, while this search runs outward along one path. Only
/// `max_volume` applies; no chemical distances are tracked.
pub fn farthest_reach(origin: &Vertex, n: i64, p: f64, cfg: &SamplerConfig, budget: Budget) -> Result<ArmReach> {
    check_probability(p)?;
    budget.validate()?;
    if n < 1 {
        return Err(Error::arg("arm radius must be at least 1"));
    }
    if origin.dim() != cfg.model.d {
        return Err(Error::arg(format!(
            "origin {origin} does not live in dimension {}",
            cfg.model.d
        )));
    }
    let field = cfg.field();
    let offsets = cfg.model.offsets();

    // Bucket queue keyed by distance; every queued site is closer than `n`.
    let mut buckets: Vec<Vec<Vertex>> = vec![Vec::new(); n as usize];
    let mut seen: FxHashSet<Vertex> = FxHashSet::default();
    seen.insert(*origin);
    buckets[0].push(*origin);
    let mut top = 0usize;
    let mut reached = 0i64;

    loop {
        while buckets[top].is_empty() {
            if top == 0 {
                return Ok(ArmReach { reached, volume: seen.len() as u64, truncated: None });
            }
            top -= 1;
        }
        let v = buckets[top].pop().expect("bucket is nonempty");
        for o in &offsets {
            let w = v.add(o);
            if seen.contains(&w) || !field.is_open(&v, &w, p) {
                continue;
            }
            if seen.len() as u64 >= budget.max_volume {
                return Ok(ArmReach {
                    reached,
                    volume: seen.len() as u64,
                    truncated: Some(TruncationReason::Volume),
                });
            }
            seen.insert(w);
            let dw = w.linf_dist(origin);
            if dw >= n {
                return Ok(ArmReach { reached: n, volume: seen.len() as u64, truncated: None });
            }
            reached = reached.max(dw);
            buckets[dw as usize].push(w);
            top = top.max(dw as usize);
        }
    }
}

/// `sup{||y - origin||_inf : y in C(origin)} >= n` in the full lattice.
/// A trial that exhausts its budget first counts as no arm.
pub fn arm_event(origin: &Vertex, n: i64, p: f64, cfg: &SamplerConfig, budget: Budget) -> Result<bool> {
    Ok(farthest_reach(origin, n, p, cfg, budget)?.hit(n))
}

/// The cluster of `origin` contains a site at chemical distance `n`, i.e. the
/// intrinsic ball of radius `n - 1` does not exhaust it.
pub fn intrinsic_arm_event(origin: &Vertex, n: u32, p: f64, cfg: &SamplerConfig, budget: Budget) -> Result<bool> {
    if n < 1 {
        return Err(Error::arg("intrinsic arm length must be at least 1"));
    }
    let r = explore(origin, &Region::Full, p, cfg, budget, &[Target::Depth { layers: n }])?;
    Ok(r.chem_dist[0].is_some())
}
