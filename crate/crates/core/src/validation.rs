//! Estimators checked against exact enumeration on tiny instances.
//!
//! Each fixture pairs a Monte Carlo estimator with an event or statistic on
//! a finite graph whose value provably equals the estimand (the estimand only
//! depends on edges of that graph), evaluated exactly by the oracle.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_traits::ToPrimitive;
use rustc_hash::FxHashSet;
use serde::Serialize;

use crate::census::{BoxClusters, DEFAULT_SITE_CAP};
use crate::explorer::{explore, explore_with, Budget, ExploreOptions, Target};
use crate::sampler::SamplerConfig;
use crate::error::Result;
use crate::estimators::{Estimate, MonteCarlo};
use crate::lattice::{LatticeModel, Region, Vertex};
use crate::oracle::catalog::{Catalog, CheckOutcome};
use crate::oracle::{event_polynomial, oracle_expectation, rational, Config, FiniteGraph};

/// Agreement threshold in standard errors.
pub const SIGMAS: f64 = 4.0;

type Runner = Arc<dyn Fn(&MonteCarlo) -> Result<Estimate> + Send + Sync>;

#[derive(Clone)]
pub struct CrossFixture {
    pub name: String,
    pub estimand: String,
    pub model: LatticeModel,
    pub exact: f64,
    run: Runner,
}

#[derive(Clone, Debug, Serialize)]
pub struct CrossCheck {
    pub name: String,
    pub estimand: String,
    pub exact: f64,
    pub estimate: Estimate,
    /// `|mean - exact| / stderr`.
    pub z: f64,
    pub passed: bool,
}

fn v(c: &[i32]) -> Vertex {
    Vertex::from_slice(c)
}

fn graph(region: &Region, model: &LatticeModel) -> FiniteGraph {
    FiniteGraph::induced(region, model).expect("fixture graph within cap")
}

fn prob(g: &FiniteGraph, p: (i64, i64), event: impl Fn(&Config) -> bool) -> f64 {
    event_polynomial(g, event).unwrap().eval(&rational(p.0, p.1)).to_f64().unwrap()
}

fn mean(g: &FiniteGraph, p: (i64, i64), stat: impl Fn(&Config) -> i64) -> f64 {
    oracle_expectation(g, stat).unwrap().eval(&rational(p.0, p.1)).to_f64().unwrap()
}

/// Index set of `C(at)` as a label test.
fn cluster_of(c: &Config, at: &Vertex) -> impl Fn(&Vertex) -> bool {
    let l = c.labels();
    let g = c.graph();
    let la = l[g.index_of(at).unwrap()];
    let members: Vec<bool> = l.iter().map(|x| *x == la).collect();
    let g = g.clone();
    move |x: &Vertex| g.index_of(x).is_some_and(|i| members[i])
}

fn fixture(
    name: &str,
    estimand: &str,
    model: LatticeModel,
    exact: f64,
    run: impl Fn(&MonteCarlo) -> Result<Estimate> + Send + Sync + 'static,
) -> CrossFixture {
    CrossFixture {
        name: name.into(),
        estimand: estimand.into(),
        model,
        exact,
        run: Arc::new(run),
    }
}

pub fn standard_fixtures() -> Vec<CrossFixture> {
    let line = LatticeModel::nearest_neighbor(1);
    let plane = LatticeModel::nearest_neighbor(2);
    let half = (1, 2);
    let o1 = v(&[0]);
    let o2 = v(&[0, 0]);
    let seg1 = graph(&Region::ball(1, 1), &line);
    let seg2 = graph(&Region::ball(2, 1), &line);
    let seg10 = graph(&Region::ball(10, 1), &line);
    let ball = graph(&Region::ball(1, 2), &plane);
    let square_region = Region::Block {
        lo: v(&[0, 0]),
        hi: v(&[1, 1]),
    };
    let square = graph(&square_region, &plane);
    let path = graph(&Region::Block { lo: v(&[0]), hi: v(&[2]) }, &line);
    let ball_boundary: Vec<Vertex> = ball.vertices().iter().filter(|x| x.linf_norm() == 1).copied().collect();

    let mut out = Vec::new();

    let exact = prob(&seg2, half, |c| {
        let inside = cluster_of(c, &o1);
        inside(&v(&[-2])) || inside(&v(&[2]))
    });
    out.push(fixture("one-arm, d=1, n=2, p=1/2", "pi", line, exact, |mc| mc.estimate_pi(0.5, 2)));

    let exact = prob(&ball, half, |c| {
        let inside = cluster_of(c, &o2);
        ball_boundary.iter().any(inside)
    });
    out.push(fixture("one-arm, d=2, n=1, p=1/2", "pi", plane, exact, |mc| mc.estimate_pi(0.5, 1)));

    let exact = prob(&seg2, half, |c| {
        let inside = cluster_of(c, &o1);
        inside(&v(&[-2])) || inside(&v(&[2]))
    });
    out.push(fixture("intrinsic arm, d=1, n=2, p=1/2", "intrinsic-arm", line, exact, |mc| {
        mc.estimate_intrinsic_arm(0.5, 2)
    }));

    let exact = prob(&square, half, |c| c.connected(&o2, &v(&[1, 1])));
    let region = square_region.clone();
    out.push(fixture("two-point in the unit square, p=1/2", "tau", plane, exact, move |mc| {
        mc.estimate_tau(0.5, &v(&[0, 0]), &v(&[1, 1]), &region)
    }));

    let exact = prob(&path, half, |c| c.connected(&o1, &v(&[2])));
    out.push(fixture("two-point τ(0, 2e1), d=1, p=1/2", "tau", line, exact, |mc| {
        mc.estimate_tau(0.5, &v(&[0]), &v(&[2]), &Region::Full)
    }));

    let exact = mean(&seg1, half, |c| {
        let inside = cluster_of(c, &o1);
        inside(&v(&[-1])) as i64 + inside(&v(&[1])) as i64
    });
    out.push(fixture("X_B(1), d=1, p=1/2", "exd", line, exact, |mc| mc.estimate_exd(0.5, 1)));

    let bb = ball_boundary.clone();
    let exact = mean(&ball, (2, 5), move |c| {
        let inside = cluster_of(c, &o2);
        bb.iter().filter(|b| inside(b)).count() as i64
    });
    out.push(fixture("X_B(1), d=2, p=2/5", "exd", plane, exact, |mc| mc.estimate_exd(0.4, 1)));

    let spanning = |c: &Config| {
        let l = c.labels();
        let g = c.graph();
        let mut roots: Vec<usize> = g
            .vertices()
            .iter()
            .enumerate()
            .filter(|(_, x)| x.get(0) == -1)
            .map(|(i, _)| l[i])
            .filter(|r| g.vertices().iter().enumerate().any(|(j, y)| y.get(0) == 1 && l[j] == *r))
            .collect();
        roots.sort_unstable();
        roots.dedup();
        roots.len() as i64
    };
    let exact = mean(&seg1, half, spanning);
    out.push(fixture("spanning count, d=1, n=1, p=1/2", "spanning", line, exact, |mc| {
        Ok(mc.estimate_spanning(0.5, 1)?.estimate)
    }));
    let exact = mean(&ball, half, spanning);
    out.push(fixture("spanning count, d=2, n=1, p=1/2", "spanning", plane, exact, |mc| {
        Ok(mc.estimate_spanning(0.5, 1)?.estimate)
    }));

    // |C(0)| on Z^1 truncated to B(10); the remainder 2·2^-11 is far below
    // the Monte Carlo resolution.
    let exact = mean(&seg10, half, |c| c.cluster(&o1).len() as i64);
    out.push(fixture("mean cluster size, d=1, p=1/2", "chi", line, exact, |mc| mc.estimate_chi(0.5)));

    let exact = prob(&seg1, half, |c| c.cluster(&o1).len() > 1);
    out.push(fixture("P(|C| > 1), d=1, p=1/2", "cluster-tail", line, exact, |mc| {
        Ok(mc.estimate_cluster_tail(0.5, &[1])?.estimates.remove(0))
    }));
    let exact = prob(&seg2, half, |c| c.cluster(&o1).len() > 2);
    out.push(fixture("P(|C| > 2), d=1, p=1/2", "cluster-tail", line, exact, |mc| {
        Ok(mc.estimate_cluster_tail(0.5, &[1, 2])?.estimates.remove(1))
    }));

    // Conditioned volume CDF: P(|C_B(2)| <= 3 | 0 <-> ∂B(2)) on the line.
    let arm = |c: &Config| {
        let inside = cluster_of(c, &o1);
        inside(&v(&[-2])) || inside(&v(&[2]))
    };
    let joint = prob(&seg2, half, |c| arm(c) && c.cluster(&o1).len() <= 3);
    let exact = joint / prob(&seg2, half, arm);
    out.push(fixture("volume CDF given arm, d=1, n=2, p=1/2", "volume-lower", line, exact, |mc| {
        let min_accepted = (mc.trials / 4).max(1);
        Ok(mc.estimate_volume_tail(0.5, 2, &[3.0 / 16.0], min_accepted)?.estimates.remove(0))
    }));

    out
}

pub fn run_cross_checks(fixtures: &[CrossFixture], base: &MonteCarlo) -> Result<Vec<CrossCheck>> {
    let mut out = Vec::new();
    for f in fixtures {
        let mut mc = base.clone();
        mc.model = f.model;
        let estimate = (f.run)(&mc)?;
        let diff = (estimate.mean - f.exact).abs();
        let z = if estimate.stderr > 0.0 {
            diff / estimate.stderr
        } else if diff < 1e-12 {
            0.0
        } else {
            f64::INFINITY
        };
        out.push(CrossCheck {
            name: f.name.clone(),
            estimand: f.estimand.clone(),
            exact: f.exact,
            passed: z <= SIGMAS,
            z,
            estimate,
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub total: usize,
    pub passed: usize,
    pub failed: usize,
    /// No checks ran; a pass means nothing.
    pub vacuous: bool,
    pub identities: Vec<CheckOutcome>,
    pub estimators: Vec<CrossCheck>,
}

impl SuiteReport {
    pub fn all_passed(&self) -> bool {
        self.failed == 0
    }
}

pub fn run_suite(catalog: &Catalog, fixtures: &[CrossFixture], base: &MonteCarlo) -> Result<SuiteReport> {
    let identities = catalog.run()?;
    let estimators = run_cross_checks(fixtures, base)?;
    let passed = identities.iter().filter(|c| c.passed).count() + estimators.iter().filter(|c| c.passed).count();
    let total = identities.len() + estimators.len();
    Ok(SuiteReport {
        total,
        passed,
        failed: total - passed,
        vacuous: total == 0,
        identities,
        estimators,
    })
}

/// Per-trial monotonicity checks of the coupling across a grid of `p`.
#[derive(Clone, Debug, Default, Serialize)]
pub struct CouplingReport {
    pub seeds: u64,
    pub p_grid: Vec<f64>,
    /// Comparisons made, by property.
    pub comparisons: BTreeMap<String, u64>,
    /// Violations found, by property.
    pub violations: BTreeMap<String, u64>,
    /// Decreases of the raw spanning-cluster count. Merging can lower the
    /// count as `p` grows, so these are expected and not violations.
    pub spanning_count_decreases: u64,
    /// Intrinsic arms present at `p` and gone at `p'`. An opened shortcut
    /// can bring every site within chemical distance `n`, so the event is
    /// not increasing and these are not violations either.
    pub intrinsic_arm_losses: u64,
    /// Comparisons skipped because an exploration hit its budget.
    pub undecided: u64,
}

impl CouplingReport {
    pub fn total_violations(&self) -> u64 {
        self.violations.values().sum()
    }

    fn record(&mut self, what: &str, ok: bool) {
        *self.comparisons.entry(what.into()).or_default() += 1;
        let v = self.violations.entry(what.into()).or_default();
        if !ok {
            *v += 1;
        }
    }
}

fn subset(a: &[Vertex], b: &[Vertex]) -> bool {
    let b: FxHashSet<&Vertex> = b.iter().collect();
    a.iter().all(|x| b.contains(x))
}

/// For each seed (trial 0) and consecutive `p < p'` of the grid: open edges,
/// clusters, arm events, spanning existence and spanning sites only grow; `S_n` only shrinks; and connections inside `B(n)` or the
/// half-space imply connections in the larger region.
pub fn coupling_suite(model: LatticeModel, seeds: u64, p_grid: &[f64], n: i64) -> Result<CouplingReport> {
    if p_grid.windows(2).any(|w| w[0] >= w[1]) || n < 2 {
        return Err(crate::Error::InvalidArgument("need an increasing p grid and n >= 2".into()));
    }
    let d = model.d;
    let origin = Vertex::origin(d);
    let small = Region::ball(n, d);
    let large = Region::ball(n + 1, d);
    let budget = Budget::volume(50_000);
    let y = Vertex::axis(d, 0, 2);
    let half = Region::upper_half_space();
    let exhaustive = ExploreOptions {
        record_members: true,
        ..ExploreOptions::exhaustive()
    };
    let edges: Vec<(Vertex, Vertex)> = {
        let forward: Vec<Vertex> = model.offsets().into_iter().filter(|o| *o > origin).collect();
        let mut out = Vec::new();
        for v in small.vertices(1 << 20)? {
            for o in &forward {
                out.push((v, v.add(o)));
            }
        }
        out
    };

    struct Snapshot {
        open: Vec<bool>,
        cluster: Vec<Vertex>,
        arm: bool,
        intrinsic: bool,
        chem: Option<u32>,
        spans: bool,
        spanning_sites: Vec<bool>,
        count: usize,
    }

    let mut report = CouplingReport {
        seeds,
        p_grid: p_grid.to_vec(),
        ..Default::default()
    };
    for seed in 0..seeds {
        let cfg = SamplerConfig::new(seed, 0, model);
        let field = cfg.field();
        let mut prev: Option<Snapshot> = None;
        for &p in p_grid {
            let open: Vec<bool> = edges.iter().map(|(a, b)| field.is_open(a, b, p)).collect();
            let c_small = explore_with(&origin, &small, p, &cfg, budget, &[], exhaustive)?;
            let c_large = explore_with(&origin, &large, p, &cfg, budget, &[], exhaustive)?;
            let small_members = c_small.members.clone().unwrap_or_default();
            report.record("cluster-region-nesting", subset(&small_members, c_large.members.as_deref().unwrap_or(&[])));

            let chem = explore(&origin, &Region::Full, p, &cfg, budget, &[Target::reach(n)])?;
            let intrinsic = explore(&origin, &Region::Full, p, &cfg, budget, &[Target::Depth { layers: 2 * n as u32 }])?;
            let in_half = explore(&origin, &half, p, &cfg, budget, &[Target::vertex(y)])?;
            let in_full = explore(&origin, &Region::Full, p, &cfg, budget, &[Target::vertex(y)])?;
            if in_half.chem_dist[0].is_some() {
                if in_full.chem_dist[0].is_some() || in_full.truncated.is_none() {
                    report.record("half-space-domination", in_full.chem_dist[0].is_some());
                } else {
                    report.undecided += 1;
                }
            }

            let mut boxes = BoxClusters::label(n, p, &cfg, DEFAULT_SITE_CAP)?;
            let census = boxes.census();
            let snap = Snapshot {
                open,
                cluster: small_members,
                arm: chem.chem_dist[0].is_some(),
                intrinsic: intrinsic.chem_dist[0].is_some(),
                chem: chem.chem_dist[0],
                spans: census.count > 0,
                spanning_sites: boxes.spanning_sites(),
                count: census.count,
            };
            let undecided = (chem.truncated.is_some() && !chem.resolved()) as u64
                + (intrinsic.truncated.is_some() && !intrinsic.resolved()) as u64;
            report.undecided += undecided;

            if let Some(before) = &prev {
                report.record("open-edges", before.open.iter().zip(&snap.open).all(|(a, b)| !a || *b));
                report.record("cluster", subset(&before.cluster, &snap.cluster));
                if undecided == 0 {
                    report.record("arm", !before.arm || snap.arm);
                    if before.intrinsic && !snap.intrinsic {
                        report.intrinsic_arm_losses += 1;
                    }
                    if let (Some(a), Some(b)) = (before.chem, snap.chem) {
                        report.record("chemical-distance", b <= a);
                    }
                }
                report.record("spanning-exists", !before.spans || snap.spans);
                report.record(
                    "spanning-sites",
                    before.spanning_sites.iter().zip(&snap.spanning_sites).all(|(a, b)| !a || *b),
                );
                if snap.count < before.count {
                    report.spanning_count_decreases += 1;
                }
            }
            prev = Some(snap);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms_of_fixtures() {
        let f = standard_fixtures();
        let exact = |name: &str| f.iter().find(|x| x.name.starts_with(name)).unwrap().exact;
        assert_eq!(exact("one-arm, d=1"), 0.4375);
        assert_eq!(exact("one-arm, d=2"), 0.9375);
        assert_eq!(exact("two-point in the unit square"), 0.4375);
        assert_eq!(exact("two-point τ(0, 2e1)"), 0.25);
        assert_eq!(exact("X_B(1), d=1"), 1.0);
        assert_eq!(exact("spanning count, d=1"), 0.25);
        assert_eq!(exact("P(|C| > 1)"), 0.75);
        assert!((exact("mean cluster size") - 2.998046875).abs() < 1e-12);
        // P(|C| > 2) on the line: 1 - P(|C| = 1) - P(|C| = 2) = 1 - 1/4 - 2·(1/2)(1/2)(1/2)
        assert_eq!(exact("P(|C| > 2)"), 0.5);
    }

    #[test]
    fn empty_suite_is_vacuous() {
        let mc = MonteCarlo::new(LatticeModel::nearest_neighbor(1), 1, 10);
        let r = run_suite(&Catalog::empty(), &[], &mc).unwrap();
        assert!(r.vacuous && r.all_passed() && r.total == 0);
    }

    #[test]
    fn small_coupling_run_is_clean() {
        let r = coupling_suite(LatticeModel::nearest_neighbor(3), 20, &[0.15, 0.2, 0.25, 0.3, 0.4], 3).unwrap();
        assert_eq!(r.total_violations(), 0, "{r:?}");
        assert!(r.comparisons["cluster"] == 80);
    }
}
