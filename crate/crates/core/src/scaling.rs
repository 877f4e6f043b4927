//! Exponent and rate fits, scaling collapse and the drift bisection for `p_c`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{Estimate, MonteCarlo, TailCurve};

pub const DEFAULT_RESAMPLES: usize = 200;
const FIT_SEED: u64 = 0x5CA1_1AB1_E5EE_D000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// 95% bootstrap interval for the slope.
    pub slope_ci: (f64, f64),
    pub points_used: usize,
}

#[derive(Clone, Copy, Debug)]
struct Line {
    slope: f64,
    intercept: f64,
    r_squared: f64,
}

fn wls(x: &[f64], y: &[f64], w: &[f64]) -> Line {
    let sw: f64 = w.iter().sum();
    let mx = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let my = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..x.len() {
        let (dx, dy) = (x[i] - mx, y[i] - my);
        sxx += w[i] * dx * dx;
        sxy += w[i] * dx * dy;
        syy += w[i] * dy * dy;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = (0..x.len())
        .map(|i| w[i] * (y[i] - intercept - slope * x[i]).powi(2))
        .sum();
    let r_squared = if syy <= f64::EPSILON * sw * (1.0 + my * my) {
        1.0
    } else {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    };
    Line {
        slope,
        intercept,
        r_squared,
    }
}

/// Weighted fit of `log y` on `t(x)`. Weights are `1 / σ²` with
/// `σ = stderr / y`; zero stderrs are floored at the smallest positive one,
/// and an all-zero set gives equal weights.
fn log_fit(points: &[(f64, f64, f64)], t: impl Fn(f64) -> f64, resamples: usize, seed: u64) -> Result<FitResult> {
    if points.len() < 3 {
        return Err(Error::arg(format!("a fit needs at least 3 points, got {}", points.len())));
    }
    for (x, y, s) in points {
        if !(y.is_finite() && s.is_finite() && *s >= 0.0) {
            return Err(Error::arg(format!("non-finite point ({x}, {y}, {s})")));
        }
        if *y - 2.0 * s <= 0.0 {
            return Err(Error::arg(format!(
                "point ({x}, {y} ± {s}) is not positive at two standard errors"
            )));
        }
    }
    let xs: Vec<f64> = points.iter().map(|p| t(p.0)).collect();
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(Error::arg("abscissae must be positive for a log-log fit"));
    }
    if xs.windows(2).all(|w| w[0] == w[1]) {
        return Err(Error::arg("abscissae are all equal"));
    }
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let rel: Vec<f64> = points.iter().map(|p| p.2 / p.1).collect();
    let floor = rel.iter().copied().filter(|r| *r > 0.0).fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = if floor.is_infinite() {
        vec![1.0; rel.len()]
    } else {
        rel.iter().map(|r| 1.0 / r.max(floor).powi(2)).collect()
    };
    let fit = wls(&xs, &ys, &w);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut slopes = Vec::with_capacity(resamples);
    let mut yb = vec![0.0; ys.len()];
    for _ in 0..resamples {
        for (i, (_, y, s)) in points.iter().enumerate() {
            let mut draw;
            loop {
                let z: f64 = rng.sample(StandardNormal);
                draw = y + s * z;
                if draw > 0.0 {
                    break;
                }
            }
            yb[i] = draw.ln();
        }
        slopes.push(wls(&xs, &yb, &w).slope);
    }
    slopes.sort_by(f64::total_cmp);
    let q = |f: f64| {
        if slopes.is_empty() {
            return fit.slope;
        }
        let idx = ((slopes.len() - 1) as f64 * f).round() as usize;
        slopes[idx]
    };
    Ok(FitResult {
        slope: fit.slope,
        intercept: fit.intercept,
        r_squared: fit.r_squared,
        slope_ci: (q(0.025).min(fit.slope), q(0.975).max(fit.slope)),
        points_used: points.len(),
    })
}

/// Power law `y ≈ e^b x^slope`; points are `(x, y, stderr)`.
pub fn loglog_fit(points: &[(f64, f64, f64)]) -> Result<FitResult> {
    loglog_fit_with(points, DEFAULT_RESAMPLES, FIT_SEED)
}

pub fn loglog_fit_with(points: &[(f64, f64, f64)], resamples: usize, seed: u64) -> Result<FitResult> {
    if points.iter().any(|p| p.0 <= 0.0) {
        return Err(Error::arg("abscissae must be positive for a log-log fit"));
    }
    log_fit(points, f64::ln, resamples, seed)
}

/// Exponential `y ≈ e^{b + slope·n}`; `-slope` is the decay rate.
pub fn exp_rate_fit(points: &[(f64, f64, f64)]) -> Result<FitResult> {
    exp_rate_fit_with(points, DEFAULT_RESAMPLES, FIT_SEED)
}

pub fn exp_rate_fit_with(points: &[(f64, f64, f64)], resamples: usize, seed: u64) -> Result<FitResult> {
    log_fit(points, |x| x, resamples, seed)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Collapse {
    /// RMS over the common grid of the across-curve standard deviation of
    /// `log(π_p / π_pc)`, divided by the standard deviation of the mean curve
    /// along the grid. Zero is a perfect collapse.
    pub dispersion: f64,
    /// The numerator alone.
    pub raw_dispersion: f64,
    pub grid: Vec<f64>,
    pub curves_used: usize,
}

const COLLAPSE_GRID: usize = 24;

/// Largest `stderr / mean` a point may have and still enter a collapse. About
/// 16 binomial hits.
pub const COLLAPSE_MAX_REL_SE: f64 = 0.25;

fn interp_log(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let lx = x.ln();
    let i = xs.partition_point(|v| v.ln() <= lx).clamp(1, xs.len() - 1);
    let (x0, x1) = (xs[i - 1].ln(), xs[i].ln());
    let (y0, y1) = (ys[i - 1], ys[i]);
    if x1 == x0 {
        return y0;
    }
    y0 + (y1 - y0) * (lx - x0) / (x1 - x0)
}

/// Collapse of `π_p(n) / π_pc(n)` against `n √(pc - p)`.
///
/// `reference` holds `π` at `pc` on the same abscissae as every curve. Curves
/// with `p >= pc` are skipped; at least two must remain. Each curve is used up
/// to its last point before a zero estimate or a relative standard error
/// above [`COLLAPSE_MAX_REL_SE`], in the curve or the reference.
pub fn scaling_collapse(curves: &[(f64, TailCurve)], reference: &TailCurve, pc: f64) -> Result<Collapse> {
    let mut rescaled: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    for (p, c) in curves {
        if *p >= pc {
            continue;
        }
        if c.abscissae != reference.abscissae {
            return Err(Error::arg(format!("curve at p = {p} and the reference use different n")));
        }
        let scale = (pc - p).sqrt();
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        // A curve ends where its log ratio stops being measured: at the first
        // zero or the first point resolved worse than COLLAPSE_MAX_REL_SE.
        let resolved = |e: &Estimate| e.mean > 0.0 && e.stderr <= COLLAPSE_MAX_REL_SE * e.mean;
        for ((n, e), r) in c.abscissae.iter().zip(&c.estimates).zip(&reference.estimates) {
            if !resolved(e) || !resolved(r) {
                break;
            }
            xs.push(n * scale);
            ys.push((e.mean / r.mean).ln());
        }
        if xs.len() < 2 {
            return Err(Error::InsufficientSignal(format!(
                "the curve at p = {p} has fewer than two positive points"
            )));
        }
        rescaled.push((xs, ys));
    }
    if rescaled.len() < 2 {
        return Err(Error::arg("scaling collapse needs at least two curves with p < pc"));
    }
    let lo = rescaled.iter().map(|c| c.0[0]).fold(f64::MIN, f64::max);
    let hi = rescaled.iter().map(|c| *c.0.last().unwrap()).fold(f64::MAX, f64::min);
    if !(lo < hi) {
        return Err(Error::NoOverlap(format!(
            "rescaled abscissae share no interval (largest start {lo:.4}, smallest end {hi:.4})"
        )));
    }
    let grid: Vec<f64> = (0..COLLAPSE_GRID)
        .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (COLLAPSE_GRID - 1) as f64).exp())
        .collect();
    // Normalizing by the mean curve's own variation keeps candidates
    // comparable: a lower candidate's reference decays too, which shrinks every
    // log ratio and with it the raw spread.
    let k = rescaled.len() as f64;
    let mut acc = 0.0;
    let mut means = Vec::with_capacity(grid.len());
    for x in &grid {
        let vals: Vec<f64> = rescaled.iter().map(|(xs, ys)| interp_log(xs, ys, *x)).collect();
        let m = vals.iter().sum::<f64>() / k;
        acc += vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / k;
        means.push(m);
    }
    let raw = (acc / grid.len() as f64).sqrt();
    let g = means.len() as f64;
    let centre = means.iter().sum::<f64>() / g;
    let spread = (means.iter().map(|m| (m - centre).powi(2)).sum::<f64>() / g).sqrt();
    if !(spread > 0.0) {
        return Err(Error::InsufficientSignal(
            "the collapsed curve is flat, so dispersion has no scale".into(),
        ));
    }
    Ok(Collapse {
        dispersion: raw / spread,
        raw_dispersion: raw,
        grid,
        curves_used: rescaled.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcOptions {
    /// Initial bracket; `lo` must test subcritical and `hi` not.
    pub bracket: (f64, f64),
    /// Exponent `a` in the plateau statistic `n^a π_p(n)`.
    pub arm_exponent: f64,
    /// Multiplier of the drift standard error giving the threshold `ε`.
    pub sigmas: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftSample {
    pub p: f64,
    pub pi_n1: f64,
    pub pi_n2: f64,
    /// `log[n2^a π(n2)] - log[n1^a π(n1)]`; `-inf` when no arm reached `n2`.
    pub drift: f64,
    pub sigma: f64,
    pub subcritical: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcEstimate {
    pub pc: f64,
    pub bracket: (f64, f64),
    pub rounds: usize,
    pub history: Vec<DriftSample>,
}

/// Drift statistic at `p` on trials shared with every other `p`.
pub fn drift(mc: &MonteCarlo, p: f64, n1: i64, n2: i64, arm_exponent: f64, sigmas: f64) -> Result<DriftSample> {
    let c = mc.estimate_pi_curve(p, &[n1, n2])?;
    let (p1, p2) = (c.estimates[0].mean, c.estimates[1].mean);
    let prefactor = arm_exponent * (n2 as f64 / n1 as f64).ln();
    let n = mc.trials as f64;
    let (drift, sigma) = if p1 == 0.0 || p2 == 0.0 {
        // No arms at all, or none reaching n2: the strongest possible decay.
        (f64::NEG_INFINITY, 0.0)
    } else {
        // Arms to n2 are a subset of arms to n1 on the same trials, so
        // Var log(π̂2/π̂1) ≈ (1/π2 - 1/π1) / N.
        (prefactor + (p2 / p1).ln(), ((1.0 / p2 - 1.0 / p1) / n).max(0.0).sqrt())
    };
    Ok(DriftSample {
        p,
        pi_n1: p1,
        pi_n2: p2,
        drift,
        sigma,
        subcritical: drift < -sigmas * sigma,
    })
}

/// Bisection on the sign of the drift statistic until the bracket is no
/// wider than `tolerance`.
pub fn estimate_pc(mc: &MonteCarlo, n1: i64, n2: i64, tolerance: f64, opts: &PcOptions) -> Result<PcEstimate> {
    if !(n1 >= 4 && n2 >= 2 * n1) {
        return Err(Error::Precondition(format!("need n2 >= 2·n1 >= 8, got n1 = {n1}, n2 = {n2}")));
    }
    if !(tolerance > 0.0) {
        return Err(Error::arg("tolerance must be positive"));
    }
    let (mut lo, mut hi) = opts.bracket;
    if !(0.0 <= lo && lo < hi && hi <= 1.0) {
        return Err(Error::arg(format!("invalid bracket [{lo}, {hi}]")));
    }
    let a = opts.arm_exponent;
    let at_lo = drift(mc, lo, n1, n2, a, opts.sigmas)?;
    let at_hi = drift(mc, hi, n1, n2, a, opts.sigmas)?;
    let separation = at_hi.drift - at_lo.drift;
    let combined = (at_lo.sigma.powi(2) + at_hi.sigma.powi(2)).sqrt();
    if !at_lo.subcritical || at_hi.subcritical || separation < opts.sigmas * combined {
        let hint = if separation.is_finite() && separation > 0.0 {
            let factor = (opts.sigmas * combined / separation).powi(2).max(1.0) * 4.0;
            format!("roughly {:.0} trials may separate them", factor * mc.trials as f64)
        } else {
            "widen the bracket or increase trials".to_string()
        };
        return Err(Error::Inconclusive(format!(
            "bracket endpoints are not separated: drift {:.4} ± {:.4} at p = {lo}, {:.4} ± {:.4} at p = {hi}; {hint}",
            at_lo.drift, at_lo.sigma, at_hi.drift, at_hi.sigma
        )));
    }
    let mut history = vec![at_lo, at_hi];
    let mut rounds = 0;
    while hi - lo > tolerance {
        let mid = 0.5 * (lo + hi);
        let s = drift(mc, mid, n1, n2, a, opts.sigmas)?;
        if s.subcritical {
            lo = mid;
        } else {
            hi = mid;
        }
        history.push(s);
        rounds += 1;
    }
    Ok(PcEstimate {
        pc: 0.5 * (lo + hi),
        bracket: (lo, hi),
        rounds,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::Estimate;
    use crate::lattice::LatticeModel;

    fn exact(xs: &[f64], f: impl Fn(f64) -> f64) -> Vec<(f64, f64, f64)> {
        xs.iter().map(|x| (*x, f(*x), 0.0)).collect()
    }

    #[test]
    fn exact_power_law() {
        let f = loglog_fit(&exact(&[1.0, 2.0, 4.0], |x| x * x)).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        assert_eq!(f.slope_ci.0, f.slope_ci.1);
        let flat = loglog_fit(&exact(&[1.0, 2.0, 4.0], |_| 3.0)).unwrap();
        assert!(flat.slope.abs() < 1e-12);
    }

    #[test]
    fn exact_exponential() {
        let f = exp_rate_fit(&exact(&[1.0, 2.0, 3.0, 5.0], |n| (-n).exp())).unwrap();
        assert!((f.slope + 1.0).abs() < 1e-12);
        let g = exp_rate_fit(&exact(&[1.0, 2.0, 3.0, 4.0], |n| 0.5f64.powf(n))).unwrap();
        assert!((g.slope - 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn exponential_is_not_a_power_law() {
        let pts = exact(&[1.0, 2.0, 4.0, 8.0, 16.0], |n| 0.5f64.powf(n));
        let ll = loglog_fit(&pts).unwrap();
        let ex = exp_rate_fit(&pts).unwrap();
        assert!(ll.r_squared < 0.9, "{}", ll.r_squared);
        assert!((ex.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fit_rejections() {
        assert!(loglog_fit(&exact(&[1.0, 2.0], |x| x)).is_err());
        assert!(loglog_fit(&[(1.0, 1.0, 0.0), (2.0, -1.0, 0.0), (3.0, 1.0, 0.0)]).is_err());
        assert!(loglog_fit(&[(1.0, 1.0, 0.6), (2.0, 1.0, 0.0), (3.0, 1.0, 0.0)]).is_err());
        assert!(loglog_fit(&[(0.0, 1.0, 0.0), (2.0, 1.0, 0.0), (3.0, 1.0, 0.0)]).is_err());
    }

    #[test]
    fn noisy_ci_brackets_slope() {
        let pts: Vec<_> = [1.0, 2.0, 4.0, 8.0].iter().map(|x: &f64| (*x, x.powf(-0.5), 0.05 * x.powf(-0.5))).collect();
        let f = loglog_fit(&pts).unwrap();
        assert!(f.slope_ci.0 < f.slope && f.slope < f.slope_ci.1);
        assert!(f.slope_ci.0 < -0.5 && -0.5 < f.slope_ci.1);
    }

    fn curve(ns: &[f64], f: impl Fn(f64) -> f64) -> TailCurve {
        TailCurve {
            estimand: "pi".into(),
            abscissae: ns.to_vec(),
            estimates: ns
                .iter()
                .map(|n| Estimate {
                    mean: f(*n),
                    stderr: 0.0,
                    trials: 1,
                    accepted: 1,
                    truncated: 0,
                    warnings: vec![],
                })
                .collect(),
            partial: false,
        }
    }

    #[test]
    fn collapse_of_synthetic_law() {
        let ns = [1.0, 2.0, 3.0, 4.0, 6.0, 8.0, 12.0, 16.0];
        let pc = 0.3;
        let reference = curve(&ns, |n| n.powi(-2));
        let law = |p: f64| move |n: f64| n.powi(-2) * (-(n * (pc - p).sqrt()) * 2.0).exp();
        let curves: Vec<(f64, TailCurve)> = [0.2, 0.25, 0.28].iter().map(|p| (*p, curve(&ns, law(*p)))).collect();
        let c = scaling_collapse(&curves, &reference, pc).unwrap();
        assert!(c.dispersion < 0.05, "{}", c.dispersion);
        let twins = vec![(0.2, curve(&ns, law(0.2))), (0.2, curve(&ns, law(0.2)))];
        assert_eq!(scaling_collapse(&twins, &reference, pc).unwrap().dispersion, 0.0);
    }

    #[test]
    fn collapse_is_scale_invariant_and_checks_overlap() {
        let ns = [1.0, 2.0, 4.0];
        let reference = curve(&ns, |n| 1.0 / n);
        let curves = vec![(0.1, curve(&ns, |n| 0.5 / (n * n))), (0.2, curve(&ns, |n| 0.3 / n.powf(1.5)))];
        let scaled: Vec<_> = curves
            .iter()
            .map(|(p, c)| {
                let mut c = c.clone();
                c.estimates.iter_mut().for_each(|e| e.mean *= 7.0);
                (*p, c)
            })
            .collect();
        let a = scaling_collapse(&curves, &reference, 0.3).unwrap().dispersion;
        let b = scaling_collapse(&scaled, &reference, 0.3).unwrap().dispersion;
        assert!((a - b).abs() < 1e-12);

        let flat = vec![(0.1, curve(&ns, |n| 0.5 / n)), (0.2, curve(&ns, |n| 0.5 / n))];
        assert!(matches!(
            scaling_collapse(&flat, &reference, 0.3).unwrap_err(),
            Error::InsufficientSignal(_)
        ));

        let far = vec![(0.0, curve(&ns, |n| 1.0 / n)), (0.2999, curve(&ns, |n| 1.0 / n))];
        assert!(matches!(
            scaling_collapse(&far, &reference, 0.3).unwrap_err(),
            Error::NoOverlap(_)
        ));
    }

    #[test]
    fn collapse_stops_each_curve_at_its_first_zero() {
        let ns = [1.0, 2.0, 4.0, 8.0];
        let pc = 0.3;
        let reference = curve(&ns, |n| n.powi(-2));
        let law = |p: f64| move |n: f64| n.powi(-2) * (-(n * (pc - p).sqrt()) * 2.0).exp();
        let full: Vec<(f64, TailCurve)> = [0.2, 0.25].iter().map(|p| (*p, curve(&ns, law(*p)))).collect();
        let mut cut = full.clone();
        cut[0].1.estimates[3].mean = 0.0;
        let a = scaling_collapse(&full, &reference, pc).unwrap();
        let b = scaling_collapse(&cut, &reference, pc).unwrap();
        assert!(b.grid.last().unwrap() < a.grid.last().unwrap());
        assert!(b.dispersion < 0.05, "{}", b.dispersion);

        let mut noisy = full.clone();
        noisy[0].1.estimates[3].stderr = 0.5 * noisy[0].1.estimates[3].mean;
        assert_eq!(scaling_collapse(&noisy, &reference, pc).unwrap().grid, b.grid);

        cut[0].1.estimates[1].mean = 0.0;
        assert!(matches!(
            scaling_collapse(&cut, &reference, pc).unwrap_err(),
            Error::InsufficientSignal(_)
        ));
    }

    #[test]
    fn pc_on_the_line() {
        let mc = MonteCarlo::new(LatticeModel::nearest_neighbor(1), 5, 4000);
        let opts = PcOptions {
            bracket: (0.0, 1.0),
            arm_exponent: 0.0,
            sigmas: 2.0,
        };
        let est = estimate_pc(&mc, 4, 8, 0.1, &opts).unwrap();
        assert!(est.rounds <= 4);
        assert_eq!(est.bracket.1, 1.0);
        let fine = estimate_pc(&mc.with_trials(20_000), 4, 8, 0.01, &opts).unwrap();
        assert!(fine.pc > 0.99 && fine.bracket.1 == 1.0);
    }

    #[test]
    fn pc_rejects_bad_inputs() {
        let mc = MonteCarlo::new(LatticeModel::nearest_neighbor(1), 5, 100);
        let opts = PcOptions {
            bracket: (0.5, 0.6),
            arm_exponent: 0.0,
            sigmas: 2.0,
        };
        assert!(matches!(estimate_pc(&mc, 4, 6, 0.1, &opts).unwrap_err(), Error::Precondition(_)));
        assert!(matches!(estimate_pc(&mc, 4, 8, 0.01, &opts).unwrap_err(), Error::Inconclusive(_)));
    }
}
