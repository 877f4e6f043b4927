use std::collections::BTreeSet;

use percolab::explorer::{explore_with, Budget, ExploreOptions, Target};
use percolab::lattice::{Edge, LatticeModel, Orientation, Region, Side, Vertex};
use percolab::oracle::{event_polynomial, is_increasing, rational, FiniteGraph};
use percolab::sampler::SamplerConfig;
use percolab::scaling::{exp_rate_fit, loglog_fit};
use proptest::prelude::*;

fn vertex(d: usize, r: i32) -> impl Strategy<Value = Vertex> {
    proptest::collection::vec(-r..=r, d).prop_map(|c| Vertex::from_slice(&c))
}

/// Finite regions in dimension 1..=3 with at most a few hundred sites.
fn finite_region() -> impl Strategy<Value = Region> {
    (1usize..=3).prop_flat_map(|d| {
        prop_oneof![
            (vertex(d, 3), 0i64..=3).prop_map(|(center, radius)| Region::Box { center, radius }),
            (0i64..=3).prop_map(move |radius| Region::HalfBox { dim: d, radius }),
            (vertex(d, 2), 0i64..=2, 1i64..=2)
                .prop_map(|(center, inner, extra)| Region::Annulus { center, inner, outer: inner + extra }),
            (0i64..=2, -1i64..=3, vertex(d, 2)).prop_map(|(alpha, n, shift)| Region::Rect { alpha, n, shift }),
            (vertex(d, 2), proptest::collection::vec(0i32..=3, d)).prop_map(|(lo, ext)| {
                let hi: Vec<i32> = lo.coords().iter().zip(&ext).map(|(a, e)| a + e).collect();
                Region::Block { lo, hi: Vertex::from_slice(&hi) }
            }),
            (0i64..=3, proptest::collection::vec(vertex(d, 3), 0..6), any::<bool>()).prop_map(move |(r, removed, anchor)| {
                let a = anchor.then(|| removed.first().copied()).flatten();
                Region::difference(Region::ball(r, d), removed, a)
            }),
        ]
    })
}

/// Membership from the textual definitions, written independently of the
/// library.
fn defined_member(r: &Region, v: &Vertex) -> bool {
    let c = v.coords();
    match r {
        Region::Box { center, radius } => c.iter().zip(center.coords()).all(|(x, m)| (*x as i64 - *m as i64).abs() <= *radius),
        Region::HalfBox { radius, .. } => c[0] >= 0 && c.iter().all(|x| (*x as i64).abs() <= *radius),
        Region::Annulus { center, inner, outer } => {
            let dist = c.iter().zip(center.coords()).map(|(x, m)| (*x as i64 - *m as i64).abs()).max().unwrap();
            *inner < dist && dist <= *outer
        }
        Region::Rect { alpha, n, shift } => {
            *n >= 0
                && c.iter().zip(shift.coords()).enumerate().all(|(i, (x, s))| {
                    let y = (*x - *s) as i64;
                    let hi = if i == 0 { *n } else { alpha * n };
                    -alpha * n <= y && y <= hi
                })
        }
        Region::Block { lo, hi } => c.iter().enumerate().all(|(i, x)| lo.get(i) <= *x && *x <= hi.get(i)),
        Region::Difference { base, removed, anchor } => {
            defined_member(base, v) && (anchor.as_ref() == Some(v) || !removed.contains(v))
        }
        Region::Full | Region::HalfSpace { .. } => unreachable!(),
    }
}

fn scan_box(d: usize, r: i32) -> Vec<Vertex> {
    let mut out = vec![];
    let side = (2 * r + 1) as usize;
    for k in 0..side.pow(d as u32) {
        let mut rem = k;
        let coords: Vec<i32> = (0..d)
            .map(|_| {
                let c = (rem % side) as i32 - r;
                rem /= side;
                c
            })
            .collect();
        out.push(Vertex::from_slice(&coords));
    }
    out
}

fn units(d: usize) -> Vec<Vertex> {
    (0..d).flat_map(|i| [Vertex::axis(d, i, 1), Vertex::axis(d, i, -1)]).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn contains_matches_enumeration(r in finite_region()) {
        let d = r.dim().unwrap();
        let listed: BTreeSet<Vertex> = r.vertices(1 << 20).unwrap().into_iter().collect();
        let scanned: BTreeSet<Vertex> = scan_box(d, 9).into_iter().filter(|v| defined_member(&r, v)).collect();
        prop_assert_eq!(&listed, &scanned);
        for v in scan_box(d, 9) {
            prop_assert_eq!(r.contains(&v), defined_member(&r, &v));
        }
    }

    #[test]
    fn boundary_is_inside_and_matches_definition(r in finite_region()) {
        let d = r.dim().unwrap();
        let b = r.boundary().unwrap();
        let u = units(d);
        for v in &b {
            prop_assert!(r.contains(v));
        }
        let expected: BTreeSet<Vertex> = scan_box(d, 9)
            .into_iter()
            .filter(|x| defined_member(&r, x) && u.iter().any(|e| !defined_member(&r, &x.add(e))))
            .collect();
        prop_assert_eq!(b, expected);
    }

    #[test]
    fn box_boundary_cardinality(d in 1usize..=4, n in 1i64..=3) {
        let b = Region::ball(n, d).boundary().unwrap();
        let expected = (2 * n + 1).pow(d as u32) - (2 * n - 1).pow(d as u32);
        prop_assert_eq!(b.len() as i64, expected);
    }

    #[test]
    fn rect_boundary_splits(d in 1usize..=3, alpha in 0i64..=2, n in -1i64..=3, shift in vertex(3, 2)) {
        let shift = Vertex::from_slice(&shift.coords()[..d]);
        let r = Region::rect(alpha, n, shift);
        let right = r.partial_boundary(Side::Right).unwrap();
        let west = r.partial_boundary(Side::West).unwrap();
        prop_assert!(right.is_disjoint(&west));
        let union: BTreeSet<Vertex> = right.union(&west).copied().collect();
        prop_assert_eq!(union, r.boundary().unwrap());
    }

    #[test]
    fn edge_canonicalization_is_total(x in vertex(3, 5), axis in 0usize..3, step in prop_oneof![Just(-1), Just(1)]) {
        let model = LatticeModel::nearest_neighbor(3);
        let y = x.add(&Vertex::axis(3, axis, step));
        let e1 = Edge::new(x, y, &model).unwrap();
        let e2 = Edge::new(y, x, &model).unwrap();
        prop_assert_eq!(e1, e2);
        prop_assert!(e1.a() < e1.b());
    }

    #[test]
    fn sampler_is_pure_and_monotone(seed: u64, trial: u64, x in vertex(4, 1000), axis in 0usize..4, p1 in 0.0f64..=1.0, p2 in 0.0f64..=1.0) {
        let model = LatticeModel::nearest_neighbor(4);
        let cfg = SamplerConfig::new(seed, trial, model);
        let y = x.add(&Vertex::axis(4, axis, 1));
        let u = cfg.uniform(&x, &y).unwrap();
        prop_assert_eq!(u.to_bits(), cfg.uniform(&y, &x).unwrap().to_bits());
        prop_assert!((0.0..1.0).contains(&u));
        let (lo, hi) = if p1 <= p2 { (p1, p2) } else { (p2, p1) };
        prop_assert!(!cfg.is_open(&x, &y, lo).unwrap() || cfg.is_open(&x, &y, hi).unwrap());
    }

    #[test]
    fn cluster_invariants(seed: u64, p in 0.0f64..=1.0, d in 1usize..=3, n in 1i64..=3) {
        let model = LatticeModel::nearest_neighbor(d);
        let cfg = SamplerConfig::new(seed, 0, model);
        let origin = Vertex::origin(d);
        let region = Region::ball(n, d);
        let opts = ExploreOptions { record_boundary: true, record_members: true, ..ExploreOptions::exhaustive() };
        let r = explore_with(&origin, &region, p, &cfg, Budget::default(), &[Target::reach(n)], opts).unwrap();
        prop_assert!(r.exhausted);
        prop_assert!(r.intrinsic_radius as i64 >= r.extrinsic_radius);
        let boundary = region.boundary().unwrap();
        for h in r.boundary_hits.as_ref().unwrap() {
            prop_assert!(boundary.contains(h));
        }
        if let Some(s) = r.chem_dist[0] {
            prop_assert!(s as i64 >= n);
        }
        // Nesting in the region and in p.
        let bigger = explore_with(&origin, &Region::ball(n + 1, d), p, &cfg, Budget::default(), &[], opts).unwrap();
        let higher = explore_with(&origin, &region, (p + 0.1).min(1.0), &cfg, Budget::default(), &[], opts).unwrap();
        let members: BTreeSet<Vertex> = r.members.unwrap().into_iter().collect();
        let big: BTreeSet<Vertex> = bigger.members.unwrap().into_iter().collect();
        let high: BTreeSet<Vertex> = higher.members.unwrap().into_iter().collect();
        prop_assert!(members.is_subset(&big));
        prop_assert!(members.is_subset(&high));
    }

    #[test]
    fn complement_polynomials_sum_to_one(truth in proptest::collection::vec(any::<bool>(), 16)) {
        let g = FiniteGraph::induced(&Region::Block { lo: Vertex::from_slice(&[0, 0]), hi: Vertex::from_slice(&[1, 1]) }, &LatticeModel::nearest_neighbor(2)).unwrap();
        let a = event_polynomial(&g, |c| truth[c.mask() as usize]).unwrap();
        let b = event_polynomial(&g, |c| !truth[c.mask() as usize]).unwrap();
        prop_assert_eq!(&a + &b, percolab::oracle::PPolynomial::constant(1));
    }

    #[test]
    fn increasing_events_have_nonnegative_derivative(seeds in proptest::collection::vec(0u32..16, 1..4)) {
        // Up-closure of a few random configurations of the unit square.
        let g = FiniteGraph::induced(&Region::Block { lo: Vertex::from_slice(&[0, 0]), hi: Vertex::from_slice(&[1, 1]) }, &LatticeModel::nearest_neighbor(2)).unwrap();
        let event = |c: &percolab::oracle::Config| seeds.iter().any(|s| c.mask() & s == *s);
        prop_assert!(is_increasing(&g, event).unwrap());
        let deriv = event_polynomial(&g, event).unwrap().derivative();
        for k in 0..=1000 {
            prop_assert!(deriv.eval(&rational(k, 1000)) >= rational(0, 1));
        }
    }

    #[test]
    fn noiseless_fits_are_exact(a in -3.0f64..3.0, b in -2.0f64..2.0, rate in 0.05f64..2.0) {
        let pts: Vec<_> = [1.0, 2.0, 3.0, 5.0, 8.0].iter().map(|x: &f64| (*x, b.exp() * x.powf(a), 0.0)).collect();
        let f = loglog_fit(&pts).unwrap();
        prop_assert!((f.slope - a).abs() < 1e-9);
        prop_assert!(f.r_squared > 1.0 - 1e-9);
        prop_assert_eq!(f.slope_ci.0, f.slope_ci.1);
        let pts: Vec<_> = [1.0, 2.0, 3.0, 5.0].iter().map(|n: &f64| (*n, (b - rate * n).exp(), 0.0)).collect();
        let g = exp_rate_fit(&pts).unwrap();
        prop_assert!((g.slope + rate).abs() < 1e-9);
    }
}

#[test]
fn half_space_orientation() {
    let lower = Region::HalfSpace { axis: 1, orientation: Orientation::Lower, offset: 2 };
    assert!(lower.contains(&Vertex::from_slice(&[9, 2])));
    assert!(!lower.contains(&Vertex::from_slice(&[9, 3])));
    assert!(lower.boundary().is_err());
}
