use percolab::lattice::{neighbors, LatticeModel, Vertex};
use percolab::sampler::{SamplerConfig, SAMPLER_ID};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

fn random_edge(rng: &mut ChaCha8Rng, model: &LatticeModel) -> (Vertex, Vertex) {
    let coords: Vec<i32> = (0..model.d).map(|_| rng.random_range(-1000..1000)).collect();
    let a = Vertex::from_slice(&coords);
    let nbrs = neighbors(&a, model);
    let b = nbrs[rng.random_range(0..nbrs.len())];
    (a, b)
}

#[test]
fn frozen_test_vectors() {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/sampler_vectors.json")).unwrap();
    let doc: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(doc["sampler"], SAMPLER_ID);
    let vectors = doc["vectors"].as_array().unwrap();
    assert!(vectors.len() >= 10);
    for t in vectors {
        let seed: u64 = t["seed"].as_str().unwrap().parse().unwrap();
        let trial: u64 = t["trial"].as_str().unwrap().parse().unwrap();
        let coords = |k: &str| -> Vec<i32> { t[k].as_array().unwrap().iter().map(|c| c.as_i64().unwrap() as i32).collect() };
        let (a, b) = (Vertex::from_slice(&coords("a")), Vertex::from_slice(&coords("b")));
        let mantissa: u64 = t["mantissa"].as_str().unwrap().parse().unwrap();
        let cfg = SamplerConfig::new(seed, trial, LatticeModel::nearest_neighbor(a.dim()));
        let field = cfg.field();
        assert_eq!(field.bits(&a, &b) >> 11, mantissa, "vector {t}");
        assert_eq!(field.bits(&b, &a) >> 11, mantissa, "reversed {t}");
        let u = field.uniform(&a, &b);
        assert_eq!(u, mantissa as f64 * 2f64.powi(-53));
        assert!((u - t["uniform"].as_f64().unwrap()).abs() < 1e-15);
    }
}

#[test]
fn trials_decorrelate_edges() {
    let model = LatticeModel::nearest_neighbor(3);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cfg = SamplerConfig::new(99, 5, model);
    let next = cfg.with_trial(6);
    let n = 100_000;
    let same = (0..n)
        .filter(|_| {
            let (a, b) = random_edge(&mut rng, &model);
            cfg.uniform(&a, &b).unwrap() == next.uniform(&a, &b).unwrap()
        })
        .count();
    assert!(same * 1000 <= n, "{same} of {n} unchanged");
}

/// Upper quantile of chi-square with `k` degrees of freedom (Wilson-Hilferty).
fn chi2_quantile(k: f64, z: f64) -> f64 {
    let a = 2.0 / (9.0 * k);
    k * (1.0 - a + z * a.sqrt()).powi(3)
}

#[test]
fn marginal_is_uniform() {
    let model = LatticeModel::nearest_neighbor(7);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let field = SamplerConfig::new(2024, 0, model).field();
    let n = 1_000_000;
    let mut bins = [0u64; 100];
    for _ in 0..n {
        let (a, b) = random_edge(&mut rng, &model);
        let u = field.uniform(&a, &b);
        assert!((0.0..1.0).contains(&u));
        bins[(u * 100.0) as usize] += 1;
    }
    let expected = n as f64 / 100.0;
    let stat: f64 = bins.iter().map(|c| (*c as f64 - expected).powi(2) / expected).sum();
    // z for the 0.999 quantile of the standard normal
    let limit = chi2_quantile(99.0, 3.090_232);
    assert!(stat < limit, "chi-square {stat} above {limit}");
}

#[test]
fn pairs_of_edges_are_uncorrelated() {
    let model = LatticeModel::nearest_neighbor(2);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let trials = 10_000u64;
    let bound = 4.0 / (trials as f64).sqrt();
    for _ in 0..2_000 {
        let (a1, b1) = random_edge(&mut rng, &model);
        let (a2, b2) = random_edge(&mut rng, &model);
        if (a1.min(b1), a1.max(b1)) == (a2.min(b2), a2.max(b2)) {
            continue;
        }
        let (mut sx, mut sy, mut sxy) = (0.0, 0.0, 0.0);
        for t in 0..trials {
            let f = SamplerConfig::new(77, t, model).field();
            let x = f.is_open(&a1, &b1, 0.5) as u8 as f64;
            let y = f.is_open(&a2, &b2, 0.5) as u8 as f64;
            sx += x;
            sy += y;
            sxy += x * y;
        }
        let n = trials as f64;
        let (mx, my) = (sx / n, sy / n);
        let corr = (sxy / n - mx * my) / ((mx * (1.0 - mx)).sqrt() * (my * (1.0 - my)).sqrt());
        assert!(corr.abs() <= bound, "correlation {corr} between {a1}-{b1} and {a2}-{b2}");
    }
}

#[test]
fn openness_is_monotone_in_p() {
    let model = LatticeModel::spread_out(3, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for i in 0..1_000_000u64 {
        let (a, b) = random_edge(&mut rng, &model);
        let cfg = SamplerConfig::new(i % 17, i, model);
        let p1: f64 = rng.random();
        let p2: f64 = rng.random_range(p1..=1.0);
        if cfg.is_open(&a, &b, p1).unwrap() {
            assert!(cfg.is_open(&a, &b, p2).unwrap());
        }
    }
}
