//! Monte Carlo estimators.
//!
//! Trial `t` always uses the edge field `(seed, t)`, so estimators sharing a
//! seed are coupled: comparing two values of `p` compares the same
//! configurations. Trials are processed in fixed blocks and every estimator
//! accumulates integer counters merged in block order, which makes results
//! bit-identical for any worker count.

use std::collections::BTreeMap;
use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::census::{BoxClusters, DEFAULT_SITE_CAP};
use crate::error::{Error, Result, TruncationReason};
use crate::explorer::{explore, explore_with, farthest_reach, Budget, ExploreOptions, Target};
use crate::lattice::{LatticeModel, Region, Vertex};
use crate::sampler::{check_probability, SamplerConfig};
use crate::scaling::{exp_rate_fit, FitResult};

/// Trials per scheduling block. Part of the reproducibility contract only
/// through conditioned estimators, which stop inside a block at a fixed trial.
pub const BLOCK: u64 = 256;

/// Two-sided 95% normal quantile used for confidence intervals.
pub const Z95: f64 = 1.959_963_984_540_054;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    /// Sample standard deviation over `sqrt(accepted)`.
    pub stderr: f64,
    pub trials: u64,
    /// Trials contributing to the mean; equals `trials` unless conditioned.
    pub accepted: u64,
    pub truncated: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl Estimate {
    pub fn ci(&self) -> (f64, f64) {
        (self.mean - Z95 * self.stderr, self.mean + Z95 * self.stderr)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailCurve {
    pub estimand: String,
    pub abscissae: Vec<f64>,
    pub estimates: Vec<Estimate>,
    /// Set when a conditioned run hit its trial cap before `min_accepted`.
    #[serde(default)]
    pub partial: bool,
}

impl TailCurve {
    pub fn points(&self) -> Vec<(f64, f64, f64)> {
        self.abscissae
            .iter()
            .zip(&self.estimates)
            .map(|(x, e)| (*x, e.mean, e.stderr))
            .collect()
    }
}

/// Integer moment accumulator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Moments {
    pub n: u64,
    pub sum: u128,
    pub sumsq: u128,
}

impl Moments {
    pub fn push(&mut self, x: u64) {
        self.n += 1;
        self.sum += x as u128;
        self.sumsq += (x as u128) * (x as u128);
    }

    pub fn merge(&mut self, o: &Moments) {
        self.n += o.n;
        self.sum += o.sum;
        self.sumsq += o.sumsq;
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        self.sum as f64 / self.n as f64
    }

    /// Standard error with the `n - 1` sample variance; zero below two samples.
    pub fn stderr(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        let mean = self.sum as f64 / n;
        let var = ((self.sumsq as f64 - n * mean * mean) / (n - 1.0)).max(0.0);
        (var / n).sqrt()
    }

    pub fn estimate(&self, trials: u64, truncated: u64) -> Estimate {
        Estimate {
            mean: self.mean(),
            stderr: self.stderr(),
            trials,
            accepted: self.n,
            truncated,
            warnings: Vec::new(),
        }
    }
}

fn binomial(hits: u64, n: u64) -> Moments {
    Moments {
        n,
        sum: hits as u128,
        sumsq: hits as u128,
    }
}

/// Per-block accumulator.
pub trait Tally: Default + Send {
    fn merge(&mut self, other: Self);
}

/// Shared Monte Carlo settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarlo {
    pub model: LatticeModel,
    pub seed: u64,
    /// Trial count, or the trial cap for conditioned estimators.
    pub trials: u64,
    #[serde(default)]
    pub budget: Budget,
    /// Worker threads; 0 uses the ambient rayon pool. Never affects results.
    #[serde(default)]
    pub workers: usize,
    #[serde(skip)]
    corrupted_unit: Option<f64>,
}

impl MonteCarlo {
    pub fn new(model: LatticeModel, seed: u64, trials: u64) -> Self {
        MonteCarlo {
            model,
            seed,
            trials,
            budget: Budget::default(),
            workers: 0,
            corrupted_unit: None,
        }
    }

    pub fn with_budget(mut self, budget: Budget) -> Self {
        self.budget = budget;
        self
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }

    pub fn with_trials(mut self, trials: u64) -> Self {
        self.trials = trials;
        self
    }

    #[doc(hidden)]
    pub fn with_corrupted_sampler(mut self, unit: f64) -> Self {
        self.corrupted_unit = Some(unit);
        self
    }

    pub fn sampler(&self, trial: u64) -> SamplerConfig {
        let cfg = SamplerConfig::new(self.seed, trial, self.model);
        match self.corrupted_unit {
            Some(u) => cfg.with_corrupted_unit(u),
            None => cfg,
        }
    }

    fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.budget.validate()?;
        if self.trials == 0 {
            return Err(Error::arg("trials must be at least 1"));
        }
        Ok(())
    }

    fn in_pool<R: Send>(&self, job: impl FnOnce() -> R + Send) -> Result<R> {
        if self.workers == 0 {
            return Ok(job());
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| Error::arg(format!("cannot start {} workers: {e}", self.workers)))?;
        Ok(pool.install(job))
    }

    /// Runs `trial` over `range` in fixed blocks and merges block tallies in
    /// index order.
    pub fn run_blocks<A, F>(&self, range: Range<u64>, trial: F) -> Result<Vec<A>>
    where
        A: Tally,
        F: Fn(&SamplerConfig, &mut A) -> Result<()> + Sync,
    {
        let blocks: Vec<Range<u64>> = range
            .clone()
            .step_by(BLOCK as usize)
            .map(|s| s..(s + BLOCK).min(range.end))
            .collect();
        self.in_pool(|| {
            blocks
                .par_iter()
                .map(|b| {
                    let mut acc = A::default();
                    for t in b.clone() {
                        trial(&self.sampler(t), &mut acc)?;
                    }
                    Ok(acc)
                })
                .collect::<Result<Vec<A>>>()
        })?
    }

    pub fn run_trials<A, F>(&self, trial: F) -> Result<A>
    where
        A: Tally,
        F: Fn(&SamplerConfig, &mut A) -> Result<()> + Sync,
    {
        self.validate()?;
        let mut total = A::default();
        for part in self.run_blocks(0..self.trials, trial)? {
            total.merge(part);
        }
        Ok(total)
    }
}

#[derive(Default)]
struct Hits {
    hits: Vec<u64>,
    truncated: u64,
}

impl Tally for Hits {
    fn merge(&mut self, o: Self) {
        if self.hits.len() < o.hits.len() {
            self.hits.resize(o.hits.len(), 0);
        }
        for (a, b) in self.hits.iter_mut().zip(&o.hits) {
            *a += b;
        }
        self.truncated += o.truncated;
    }
}

#[derive(Default)]
struct Sum {
    m: Moments,
    truncated: u64,
}

impl Tally for Sum {
    fn merge(&mut self, o: Self) {
        self.m.merge(&o.m);
        self.truncated += o.truncated;
    }
}

fn strictly_increasing<T: PartialOrd + Copy>(grid: &[T], what: &str) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::arg(format!("{what} grid is empty")));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::arg(format!("{what} grid must be strictly increasing")));
    }
    Ok(())
}

/// Accepted samples of a run conditioned on `0 <-> ∂B(n)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionedSamples {
    pub n: i64,
    pub trials: u64,
    pub accepted: u64,
    /// Trials stopped by the budget before the arm question was settled.
    pub truncated: u64,
    pub partial: bool,
    /// `S_n` for each accepted trial, in trial order.
    pub chem: Vec<u32>,
    /// `|C_{B(n)}(0)|` for each accepted trial; `None` when the volume budget
    /// stopped the exploration after contact.
    pub volume: Vec<Option<u64>>,
}

#[derive(Default)]
struct Accepted {
    // (trial, S_n, volume)
    rows: Vec<(u64, u32, Option<u64>)>,
    unresolved: Vec<u64>,
}

impl Tally for Accepted {
    fn merge(&mut self, mut o: Self) {
        self.rows.append(&mut o.rows);
        self.unresolved.append(&mut o.unresolved);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpanningEstimate {
    /// Mean number of spanning clusters.
    pub estimate: Estimate,
    /// Trials by spanning-cluster count.
    pub count_histogram: BTreeMap<usize, u64>,
    /// Spanning clusters by size.
    pub size_histogram: BTreeMap<u64, u64>,
}

#[derive(Default)]
struct Spanning {
    m: Moments,
    counts: BTreeMap<usize, u64>,
    sizes: BTreeMap<u64, u64>,
}

impl Tally for Spanning {
    fn merge(&mut self, o: Self) {
        self.m.merge(&o.m);
        for (k, v) in o.counts {
            *self.counts.entry(k).or_default() += v;
        }
        for (k, v) in o.sizes {
            *self.sizes.entry(k).or_default() += v;
        }
    }
}

/// Box-restricted `L_δ(p)`: the smallest `n` with `E[X_{B(n)}] <= δ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LDelta {
    /// Smallest `n` whose interval for `E[X_{B(n)}]` reaches down to `δ`.
    pub estimate: Option<i64>,
    /// `[estimate, smallest n whose whole interval lies at or below δ]`.
    pub ci: (Option<i64>, Option<i64>),
    pub curve: TailCurve,
    pub reached: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct XiEstimate {
    pub xi: f64,
    pub ci: (f64, f64),
    pub fit: FitResult,
    pub curve: TailCurve,
    pub arm_exponent: f64,
}

/// Prefactor exponent `a` in `π_p(n) ≈ n^{-a} e^{-n/ξ}` used by default: 0 on
/// the line, where `π_p(n) ≈ 2p^n`, and 2 in high dimensions.
pub fn default_arm_exponent(d: usize) -> Option<f64> {
    match d {
        1 => Some(0.0),
        d if d > 6 => Some(2.0),
        _ => None,
    }
}

impl MonteCarlo {
    /// One-arm probability `π_p(n)` for each `n` of the grid, from one
    /// exploration per trial. A budget stop before reaching `n` counts as no
    /// arm and is reported as truncated.
    pub fn estimate_pi_curve(&self, p: f64, n_grid: &[i64]) -> Result<TailCurve> {
        check_probability(p)?;
        strictly_increasing(n_grid, "n")?;
        if n_grid[0] < 1 {
            return Err(Error::arg("arm radius must be at least 1"));
        }
        let origin = Vertex::origin(self.model.d);
        let n_max = *n_grid.last().expect("grid is nonempty");
        let k = n_grid.len();
        let tally: Hits = self.run_trials(|cfg, acc: &mut Hits| {
            let r = farthest_reach(&origin, n_max, p, cfg, self.budget)?;
            acc.hits.resize(k, 0);
            for (h, n) in acc.hits.iter_mut().zip(n_grid) {
                *h += r.hit(*n) as u64;
            }
            if r.truncated.is_some() {
                acc.truncated += 1;
            }
            Ok(())
        })?;
        Ok(self.hit_curve("pi", n_grid.iter().map(|n| *n as f64).collect(), tally))
    }

    fn hit_curve(&self, estimand: &str, abscissae: Vec<f64>, mut tally: Hits) -> TailCurve {
        tally.hits.resize(abscissae.len(), 0);
        TailCurve {
            estimand: estimand.into(),
            estimates: tally
                .hits
                .iter()
                .map(|h| binomial(*h, self.trials).estimate(self.trials, tally.truncated))
                .collect(),
            abscissae,
            partial: false,
        }
    }

    pub fn estimate_pi(&self, p: f64, n: i64) -> Result<Estimate> {
        Ok(self.estimate_pi_curve(p, &[n])?.estimates.remove(0))
    }

    /// `P(y ∈ C_region(x))`. The full lattice gives `τ`, a half-space `τ_H`
    /// and a box the restricted two-point function.
    pub fn estimate_tau(&self, p: f64, x: &Vertex, y: &Vertex, region: &Region) -> Result<Estimate> {
        check_probability(p)?;
        if !region.admits_source(x) || !region.contains(y) {
            return Err(Error::arg(format!("{x} and {y} must both be admissible in the region")));
        }
        let targets = [Target::vertex(*y)];
        let tally: Hits = self.run_trials(|cfg, acc: &mut Hits| {
            let r = explore(x, region, p, cfg, self.budget, &targets)?;
            acc.hits.resize(1, 0);
            acc.hits[0] += r.chem_dist[0].is_some() as u64;
            if r.truncated.is_some() && !r.resolved() {
                acc.truncated += 1;
            }
            Ok(())
        })?;
        Ok(self.hit_curve("tau", vec![0.0], tally).estimates.remove(0))
    }

    /// `τ_p(0, r e_1)` for each radius, averaged over the `2d` images `±r e_i`
    /// of one exhaustive exploration per trial. Each trial contributes the
    /// number of images in `C(0)` out of `2d`; the stderr uses the per-trial
    /// averages. Trials stopped by the budget count only the images found so
    /// far, so the curve is a lower bound with the truncation count attached.
    pub fn estimate_tau_axis_orbit(&self, p: f64, radii: &[i64]) -> Result<TailCurve> {
        check_probability(p)?;
        strictly_increasing(radii, "radius")?;
        if radii[0] < 1 {
            return Err(Error::arg("radii must be positive"));
        }
        let d = self.model.d;
        let origin = Vertex::origin(d);
        let images: Vec<Vec<Vertex>> = radii
            .iter()
            .map(|r| {
                (0..d)
                    .flat_map(|i| [Vertex::axis(d, i, *r as i32), Vertex::axis(d, i, -*r as i32)])
                    .collect()
            })
            .collect();
        let targets: Vec<Target> = images.iter().flatten().map(|v| Target::vertex(*v)).collect();
        let k = radii.len();
        let per = 2 * d;

        #[derive(Default)]
        struct Orbit {
            m: Vec<Moments>,
            truncated: u64,
        }
        impl Tally for Orbit {
            fn merge(&mut self, o: Self) {
                if self.m.len() < o.m.len() {
                    self.m.resize(o.m.len(), Moments::default());
                }
                for (a, b) in self.m.iter_mut().zip(&o.m) {
                    a.merge(b);
                }
                self.truncated += o.truncated;
            }
        }

        let tally: Orbit = self.run_trials(|cfg, acc: &mut Orbit| {
            let r = explore(&origin, &Region::Full, p, cfg, self.budget, &targets)?;
            acc.m.resize(k, Moments::default());
            for (i, m) in acc.m.iter_mut().enumerate() {
                let found = r.chem_dist[i * per..(i + 1) * per].iter().filter(|c| c.is_some()).count();
                m.push(found as u64);
            }
            if r.truncated.is_some() && !r.resolved() {
                acc.truncated += 1;
            }
            Ok(())
        })?;
        let scale = per as f64;
        Ok(TailCurve {
            estimand: "tau-axis-orbit".into(),
            abscissae: radii.iter().map(|r| *r as f64).collect(),
            estimates: (0..k)
                .map(|i| {
                    let mut e = tally.m.get(i).copied().unwrap_or_default().estimate(self.trials, tally.truncated);
                    e.mean /= scale;
                    e.stderr /= scale;
                    e
                })
                .collect(),
            partial: false,
        })
    }

    /// Rejection sampling of `{0 <-> ∂B(n)}`: trials run in index order until
    /// the `min_accepted`-th acceptance or the trial cap. Each trial explores
    /// `C_{B(n)}(0)` completely, recording `S_n` and the volume.
    pub fn conditioned_arm_samples(&self, p: f64, n: i64, min_accepted: u64) -> Result<ConditionedSamples> {
        check_probability(p)?;
        self.validate()?;
        if n < 1 || min_accepted == 0 {
            return Err(Error::arg("need n >= 1 and min_accepted >= 1"));
        }
        let origin = Vertex::origin(self.model.d);
        let region = Region::ball(n, self.model.d);
        let targets = [Target::reach(n)];
        let opts = ExploreOptions::exhaustive();

        let mut out = ConditionedSamples {
            n,
            trials: 0,
            accepted: 0,
            truncated: 0,
            partial: false,
            chem: Vec::new(),
            volume: Vec::new(),
        };
        let mut next = 0u64;
        while next < self.trials {
            let missing = min_accepted - out.accepted;
            let round = (missing * 4).clamp(BLOCK * 4, BLOCK * 256).min(self.trials - next);
            let parts: Vec<Accepted> = self.run_blocks(next..next + round, |cfg, acc: &mut Accepted| {
                let r = explore_with(&origin, &region, p, cfg, self.budget, &targets, opts)?;
                match (r.chem_dist[0], r.truncated) {
                    (Some(s), None) => acc.rows.push((cfg.trial, s, Some(r.volume))),
                    (Some(s), Some(TruncationReason::Volume)) => acc.rows.push((cfg.trial, s, None)),
                    (Some(_), Some(TruncationReason::Radius)) | (None, Some(_)) => acc.unresolved.push(cfg.trial),
                    (None, None) => {}
                }
                Ok(())
            })?;
            let mut merged = Accepted::default();
            for part in parts {
                merged.merge(part);
            }
            let stop = if out.accepted + merged.rows.len() as u64 >= min_accepted {
                let idx = (min_accepted - out.accepted - 1) as usize;
                merged.rows[idx].0 + 1
            } else {
                next + round
            };
            for (t, s, v) in merged.rows.into_iter().filter(|row| row.0 < stop) {
                let _ = t;
                out.chem.push(s);
                out.volume.push(v);
                out.accepted += 1;
            }
            out.truncated += merged.unresolved.iter().filter(|t| **t < stop).count() as u64;
            out.trials = stop;
            next = stop;
            if out.accepted >= min_accepted {
                return Ok(out);
            }
        }
        out.partial = true;
        Ok(out)
    }

    /// Conditioned lower-tail CDF `P(S_n <= λn² | 0 <-> ∂B(n))` and survival
    /// `P(S_n >= λn² | 0 <-> ∂B(n))` on the grid.
    pub fn estimate_sn_tails(
        &self,
        p: f64,
        n: i64,
        lambda_grid: &[f64],
        min_accepted: u64,
    ) -> Result<(TailCurve, TailCurve)> {
        if n < 2 {
            return Err(Error::arg("S_n tails need n >= 2"));
        }
        strictly_increasing(lambda_grid, "λ")?;
        let s = self.conditioned_arm_samples(p, n, min_accepted)?;
        Ok(sn_tails(&s, lambda_grid))
    }

    /// Conditioned CDF `P(|C_{B(n)}(0)| <= λn⁴ | 0 <-> ∂B(n))`.
    pub fn estimate_volume_tail(&self, p: f64, n: i64, lambda_grid: &[f64], min_accepted: u64) -> Result<TailCurve> {
        strictly_increasing(lambda_grid, "λ")?;
        let s = self.conditioned_arm_samples(p, n, min_accepted)?;
        Ok(volume_tail(&s, lambda_grid, self.budget.max_volume))
    }

    /// `P(|C(0)| > t)` on the grid from one exploration per trial. The
    /// exploration stops once the volume exceeds `max(t)`; such trials count
    /// for every `t` and are reported as truncated.
    pub fn estimate_cluster_tail(&self, p: f64, t_grid: &[u64]) -> Result<TailCurve> {
        check_probability(p)?;
        strictly_increasing(t_grid, "t")?;
        let t_max = *t_grid.last().unwrap();
        if t_max > self.budget.max_volume {
            return Err(Error::arg(format!(
                "largest t = {t_max} exceeds the volume budget {}",
                self.budget.max_volume
            )));
        }
        let origin = Vertex::origin(self.model.d);
        let budget = Budget {
            max_volume: t_max.max(1),
            ..self.budget
        };
        let k = t_grid.len();
        let tally: Hits = self.run_trials(|cfg, acc: &mut Hits| {
            let r = explore_with(&origin, &Region::Full, p, cfg, budget, &[], ExploreOptions::exhaustive())?;
            acc.hits.resize(k, 0);
            let above_all = r.truncated == Some(TruncationReason::Volume);
            for (h, t) in acc.hits.iter_mut().zip(t_grid) {
                *h += (above_all || r.volume > *t) as u64;
            }
            acc.truncated += r.truncated.is_some() as u64;
            Ok(())
        })?;
        Ok(self.hit_curve("cluster-tail", t_grid.iter().map(|t| *t as f64).collect(), tally))
    }

    pub fn estimate_intrinsic_arm_curve(&self, p: f64, n_grid: &[u32]) -> Result<TailCurve> {
        check_probability(p)?;
        strictly_increasing(n_grid, "n")?;
        if n_grid[0] < 1 {
            return Err(Error::arg("intrinsic arm length must be at least 1"));
        }
        let origin = Vertex::origin(self.model.d);
        let targets: Vec<Target> = n_grid.iter().map(|n| Target::Depth { layers: *n }).collect();
        let k = n_grid.len();
        let tally: Hits = self.run_trials(|cfg, acc: &mut Hits| {
            let r = explore(&origin, &Region::Full, p, cfg, self.budget, &targets)?;
            acc.hits.resize(k, 0);
            for (h, c) in acc.hits.iter_mut().zip(&r.chem_dist) {
                *h += c.is_some() as u64;
            }
            if r.truncated.is_some() && !r.resolved() {
                acc.truncated += 1;
            }
            Ok(())
        })?;
        Ok(self.hit_curve("intrinsic-arm", n_grid.iter().map(|n| *n as f64).collect(), tally))
    }

    pub fn estimate_intrinsic_arm(&self, p: f64, n: u32) -> Result<Estimate> {
        Ok(self.estimate_intrinsic_arm_curve(p, &[n])?.estimates.remove(0))
    }

    /// Number of spanning clusters of `B(n)`.
    pub fn estimate_spanning(&self, p: f64, n: i64) -> Result<SpanningEstimate> {
        check_probability(p)?;
        let tally: Spanning = self.run_trials(|cfg, acc: &mut Spanning| {
            let c = BoxClusters::label(n, p, cfg, DEFAULT_SITE_CAP)?.census();
            acc.m.push(c.count as u64);
            *acc.counts.entry(c.count).or_default() += 1;
            for s in c.sizes {
                *acc.sizes.entry(s).or_default() += 1;
            }
            Ok(())
        })?;
        Ok(SpanningEstimate {
            estimate: tally.m.estimate(self.trials, 0),
            count_histogram: tally.counts,
            size_histogram: tally.sizes,
        })
    }

    /// `E[X_{B(n)}]` with `X_D = |C_D(0) ∩ ∂D|`.
    pub fn estimate_exd(&self, p: f64, n: i64) -> Result<Estimate> {
        Ok(self.estimate_exd_curve(p, &[n])?.estimates.remove(0))
    }

    pub fn estimate_exd_curve(&self, p: f64, n_grid: &[i64]) -> Result<TailCurve> {
        check_probability(p)?;
        strictly_increasing(n_grid, "n")?;
        if n_grid[0] < 1 {
            return Err(Error::arg("box radius must be at least 1"));
        }
        let origin = Vertex::origin(self.model.d);
        let opts = ExploreOptions {
            record_boundary: true,
            ..ExploreOptions::exhaustive()
        };
        let regions: Vec<Region> = n_grid.iter().map(|n| Region::ball(*n, self.model.d)).collect();

        #[derive(Default)]
        struct Multi {
            m: Vec<Moments>,
            truncated: u64,
        }
        impl Tally for Multi {
            fn merge(&mut self, o: Self) {
                if self.m.len() < o.m.len() {
                    self.m.resize(o.m.len(), Moments::default());
                }
                for (a, b) in self.m.iter_mut().zip(&o.m) {
                    a.merge(b);
                }
                self.truncated += o.truncated;
            }
        }

        let k = n_grid.len();
        let tally: Multi = self.run_trials(|cfg, acc: &mut Multi| {
            acc.m.resize(k, Moments::default());
            for (m, region) in acc.m.iter_mut().zip(&regions) {
                let r = explore_with(&origin, region, p, cfg, self.budget, &[], opts)?;
                m.push(r.boundary_hits.map_or(0, |h| h.len() as u64));
                acc.truncated += r.truncated.is_some() as u64;
            }
            Ok(())
        })?;
        Ok(TailCurve {
            estimand: "exd".into(),
            abscissae: n_grid.iter().map(|n| *n as f64).collect(),
            estimates: (0..k)
                .map(|i| tally.m[i].estimate(self.trials, tally.truncated))
                .collect(),
            partial: false,
        })
    }

    /// Box-restricted `L_δ(p)` over `n = 1..=n_max`, all radii on shared
    /// trials.
    pub fn estimate_l_delta(&self, p: f64, delta: f64, n_max: i64) -> Result<LDelta> {
        if !(delta > 0.0) {
            return Err(Error::arg("δ must be positive"));
        }
        if n_max < 1 {
            return Err(Error::arg("n_max must be at least 1"));
        }
        let grid: Vec<i64> = (1..=n_max).collect();
        let curve = self.estimate_exd_curve(p, &grid)?;
        let first = |pred: &dyn Fn(&Estimate) -> bool| {
            grid.iter().zip(&curve.estimates).find(|(_, e)| pred(e)).map(|(n, _)| *n)
        };
        let estimate = first(&|e| e.ci().0 <= delta);
        let upper = first(&|e| e.ci().1 <= delta);
        Ok(LDelta {
            estimate,
            ci: (estimate, upper),
            reached: estimate.is_some(),
            curve,
        })
    }

    /// Correlation length from the exponential rate of `n^a π_p(n)`.
    pub fn estimate_xi(&self, p: f64, n_grid: &[i64], arm_exponent: f64) -> Result<XiEstimate> {
        strictly_increasing(n_grid, "n")?;
        if (n_grid[n_grid.len() - 1] as f64) < 3.0 * n_grid[0] as f64 {
            return Err(Error::arg("n grid must span at least a factor 3"));
        }
        let curve = self.estimate_pi_curve(p, n_grid)?;
        self.xi_from_curve(curve, arm_exponent)
    }

    /// The fit behind [`MonteCarlo::estimate_xi`], for a π curve already in
    /// hand.
    pub fn xi_from_curve(&self, curve: TailCurve, arm_exponent: f64) -> Result<XiEstimate> {
        if let Some((n, _)) = curve.abscissae.iter().zip(&curve.estimates).find(|(_, e)| e.mean == 0.0) {
            return Err(Error::InsufficientSignal(format!(
                "no arm to distance {n} in {} trials; use smaller n or more trials",
                self.trials
            )));
        }
        let points: Vec<(f64, f64, f64)> = curve
            .points()
            .into_iter()
            .map(|(n, y, s)| {
                let f = n.powf(arm_exponent);
                (n, f * y, f * s)
            })
            .collect();
        let fit = exp_rate_fit(&points)?;
        if fit.slope >= 0.0 {
            return Err(Error::InsufficientSignal(format!(
                "arm probability does not decay on this grid (rate {:.3e})",
                -fit.slope
            )));
        }
        let xi = -1.0 / fit.slope;
        let (lo, hi) = fit.slope_ci;
        let ci = (-1.0 / lo, if hi < 0.0 { -1.0 / hi } else { f64::INFINITY });
        Ok(XiEstimate {
            xi,
            ci,
            fit,
            curve,
            arm_exponent,
        })
    }

    /// Mean cluster size. A trial stopped by the budget contributes the
    /// volume found so far.
    pub fn estimate_chi(&self, p: f64) -> Result<Estimate> {
        check_probability(p)?;
        let origin = Vertex::origin(self.model.d);
        let tally: Sum = self.run_trials(|cfg, acc: &mut Sum| {
            let r = explore_with(&origin, &Region::Full, p, cfg, self.budget, &[], ExploreOptions::exhaustive())?;
            acc.m.push(r.volume);
            acc.truncated += r.truncated.is_some() as u64;
            Ok(())
        })?;
        let mut e = tally.m.estimate(self.trials, tally.truncated);
        if tally.truncated * 100 > self.trials {
            e.warnings.push(format!(
                "{} of {} explorations hit the budget; the mean is a lower bound",
                tally.truncated, self.trials
            ));
        }
        Ok(e)
    }
}

fn proportion_curve(estimand: &str, grid: &[f64], s: &ConditionedSamples, hit: impl Fn(usize, f64) -> bool) -> TailCurve {
    TailCurve {
        estimand: estimand.into(),
        abscissae: grid.to_vec(),
        estimates: grid
            .iter()
            .map(|l| {
                let hits = (0..s.chem.len()).filter(|i| hit(*i, *l)).count() as u64;
                let mut e = binomial(hits, s.accepted).estimate(s.trials, s.truncated);
                if s.partial {
                    e.warnings.push(format!("trial cap reached with {} accepted", s.accepted));
                }
                e
            })
            .collect(),
        partial: s.partial,
    }
}

pub fn sn_tails(s: &ConditionedSamples, lambda_grid: &[f64]) -> (TailCurve, TailCurve) {
    let n2 = (s.n * s.n) as f64;
    let lower = proportion_curve("sn-lower", lambda_grid, s, |i, l| s.chem[i] as f64 <= l * n2);
    let upper = proportion_curve("sn-upper", lambda_grid, s, |i, l| s.chem[i] as f64 >= l * n2);
    (lower, upper)
}

/// Volumes stopped by the budget count as larger than every grid point,
/// which is exact for `λn⁴ < max_volume`.
pub fn volume_tail(s: &ConditionedSamples, lambda_grid: &[f64], max_volume: u64) -> TailCurve {
    let n4 = (s.n as f64).powi(4);
    let mut c = proportion_curve("volume-lower", lambda_grid, s, |i, l| {
        s.volume[i].is_some_and(|v| v as f64 <= l * n4)
    });
    if lambda_grid.iter().any(|l| l * n4 >= max_volume as f64) {
        for e in &mut c.estimates {
            e.warnings
                .push(format!("grid reaches the volume budget {max_volume}; CDF is a lower bound there"));
        }
    }
    c
}
