//! Fixed catalog of tiny graphs and events for the exact identity audits.

use std::sync::Arc;

use num_rational::BigRational;
use serde::Serialize;

use super::{bk_check_connections, event_polynomial, fkg_check, rational, russo_check, Config, FiniteGraph, PPolynomial};
use crate::error::Result;
use crate::lattice::{LatticeModel, Region, Vertex};

type Pred = Arc<dyn Fn(&Config) -> bool + Send + Sync>;

#[derive(Clone)]
pub struct Event {
    pub name: String,
    pred: Pred,
}

impl Event {
    pub fn new(name: impl Into<String>, pred: impl Fn(&Config) -> bool + Send + Sync + 'static) -> Self {
        Event {
            name: name.into(),
            pred: Arc::new(pred),
        }
    }

    pub fn holds(&self, c: &Config) -> bool {
        (self.pred)(c)
    }
}

#[derive(Clone)]
pub struct Fixture {
    pub graph_name: String,
    pub graph: Arc<FiniteGraph>,
}

#[derive(Clone)]
pub struct RussoCase {
    pub on: Fixture,
    pub event: Event,
}

#[derive(Clone)]
pub struct FkgCase {
    pub on: Fixture,
    pub a: Event,
    pub b: Event,
    pub p: BigRational,
}

#[derive(Clone)]
pub struct BkCase {
    pub on: Fixture,
    pub pair1: (Vertex, Vertex),
    pub pair2: (Vertex, Vertex),
    pub p: BigRational,
}

/// Result of one audit line.
#[derive(Clone, Debug, Serialize)]
pub struct CheckOutcome {
    pub suite: String,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Default)]
pub struct Catalog {
    pub russo: Vec<RussoCase>,
    pub fkg: Vec<FkgCase>,
    pub bk: Vec<BkCase>,
}

fn v(c: &[i32]) -> Vertex {
    Vertex::from_slice(c)
}

fn block(lo: &[i32], hi: &[i32]) -> Region {
    Region::Block { lo: v(lo), hi: v(hi) }
}

fn fixture(name: &str, region: &Region, model: &LatticeModel) -> Fixture {
    Fixture {
        graph_name: name.into(),
        graph: Arc::new(FiniteGraph::induced(region, model).expect("catalog graph within cap")),
    }
}

fn connected(a: Vertex, b: Vertex) -> Event {
    Event::new(format!("{a}<->{b}"), move |c| c.connected(&a, &b))
}

/// Origin connected to some vertex of `targets`.
fn reaches(name: &str, from: Vertex, targets: Vec<Vertex>) -> Event {
    Event::new(name, move |c| {
        let l = c.labels();
        let g = c.graph();
        let lf = l[g.index_of(&from).unwrap()];
        targets.iter().any(|t| l[g.index_of(t).unwrap()] == lf)
    })
}

/// Some cluster meets both `left` and `right`.
fn crossing(name: &str, left: Vec<Vertex>, right: Vec<Vertex>) -> Event {
    Event::new(name, move |c| {
        let l = c.labels();
        let g = c.graph();
        left.iter()
            .any(|a| right.iter().any(|b| l[g.index_of(a).unwrap()] == l[g.index_of(b).unwrap()]))
    })
}

fn cluster_at_least(at: Vertex, k: usize) -> Event {
    Event::new(format!("|C({at})|>={k}"), move |c| c.cluster(&at).len() >= k)
}

/// Number of vertices of `set` in the cluster of `at` is at least `k`.
fn hits_at_least(name: &str, at: Vertex, set: Vec<Vertex>, k: usize) -> Event {
    Event::new(name, move |c| {
        let l = c.labels();
        let g = c.graph();
        let la = l[g.index_of(&at).unwrap()];
        set.iter().filter(|s| l[g.index_of(s).unwrap()] == la).count() >= k
    })
}

fn face(g: &FiniteGraph, axis: usize, value: i32) -> Vec<Vertex> {
    g.vertices().iter().filter(|x| x.get(axis) == value).copied().collect()
}

impl Catalog {
    pub fn empty() -> Self {
        Catalog::default()
    }

    pub fn len(&self) -> usize {
        self.russo.len() + self.fkg.len() + self.bk.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn standard() -> Self {
        let nn1 = LatticeModel::nearest_neighbor(1);
        let nn2 = LatticeModel::nearest_neighbor(2);
        let nn3 = LatticeModel::nearest_neighbor(3);

        let edge = fixture("single edge", &block(&[0], &[1]), &nn1);
        let segment = fixture("segment B(2), d=1", &Region::ball(2, 1), &nn1);
        let square = fixture("unit square", &block(&[0, 0], &[1, 1]), &nn2);
        let grid23 = fixture("3x2 grid", &block(&[0, 0], &[2, 1]), &nn2);
        let ball = fixture("B(1), d=2", &Region::ball(1, 2), &nn2);
        let cube = fixture("unit cube", &block(&[0, 0, 0], &[1, 1, 1]), &nn3);
        let grid34 = fixture("4x3 grid", &block(&[0, 0], &[3, 2]), &nn2);
        let spread = fixture("spread-out line, Λ=2", &block(&[0], &[3]), &LatticeModel::spread_out(1, 2));
        let pair_graph = Fixture {
            graph_name: "two separate edges".into(),
            graph: Arc::new(
                FiniteGraph::new(
                    vec![v(&[0, 0]), v(&[1, 0]), v(&[0, 5]), v(&[1, 5])],
                    &[(v(&[0, 0]), v(&[1, 0])), (v(&[0, 5]), v(&[1, 5]))],
                )
                .expect("two edges"),
            ),
        };

        let o2 = v(&[0, 0]);
        let ball_boundary: Vec<Vertex> = ball.graph.vertices().iter().filter(|x| x.linf_norm() == 1).copied().collect();
        let ball_left = face(&ball.graph, 0, -1);
        let ball_right = face(&ball.graph, 0, 1);

        let mut russo = Vec::new();
        let mut add = |on: &Fixture, event: Event| russo.push(RussoCase { on: on.clone(), event });
        add(&edge, Event::new("edge open", |c| c.is_open(0)));
        add(&edge, Event::new("always", |_| true));
        add(&segment, reaches("0<->∂B(2)", v(&[0]), vec![v(&[-2]), v(&[2])]));
        add(&square, connected(o2, v(&[1, 1])));
        add(&square, connected(o2, v(&[1, 0])));
        add(&square, Event::new("at least 3 open edges", |c| c.open_count() >= 3));
        add(&grid23, crossing("left-right crossing", face(&grid23.graph, 0, 0), face(&grid23.graph, 0, 2)));
        add(&ball, reaches("0<->∂B(1)", o2, ball_boundary.clone()));
        add(&ball, cluster_at_least(o2, 4));
        add(&ball, crossing("spanning cluster", ball_left.clone(), ball_right.clone()));
        add(&ball, hits_at_least("X_D>=2", o2, ball_boundary.clone(), 2));
        add(&cube, connected(v(&[0, 0, 0]), v(&[1, 1, 1])));
        add(&grid34, connected(o2, v(&[3, 2])));
        add(&grid34, Event::new("at least 9 open edges", |c| c.open_count() >= 9));
        add(&spread, connected(v(&[0]), v(&[3])));
        add(&pair_graph, Event::new("both edges open", |c| c.is_open(0) && c.is_open(1)));

        // FKG: all pairs of six increasing events on B(1), plus a few extras.
        let ball_events = [
            connected(o2, v(&[1, 1])),
            connected(o2, v(&[-1, -1])),
            connected(v(&[-1, 0]), v(&[1, 0])),
            reaches("0<->∂B(1)", o2, ball_boundary.clone()),
            cluster_at_least(o2, 3),
            crossing("spanning cluster", ball_left, ball_right),
        ];
        let ps = [rational(1, 2), rational(1, 3), rational(3, 4)];
        let mut fkg = Vec::new();
        let mut k = 0;
        for i in 0..ball_events.len() {
            for j in i + 1..ball_events.len() {
                fkg.push(FkgCase {
                    on: ball.clone(),
                    a: ball_events[i].clone(),
                    b: ball_events[j].clone(),
                    p: ps[k % ps.len()].clone(),
                });
                k += 1;
            }
        }
        let e1 = v(&[1, 0]);
        let e1e2 = v(&[1, 1]);
        let sq_a = connected(o2, e1);
        fkg.push(FkgCase {
            on: square.clone(),
            a: sq_a.clone(),
            b: connected(e1, e1e2),
            p: rational(1, 2),
        });
        fkg.push(FkgCase {
            on: square.clone(),
            a: sq_a.clone(),
            b: sq_a.clone(),
            p: rational(1, 5),
        });
        fkg.push(FkgCase {
            on: square.clone(),
            a: sq_a,
            b: Event::new("always", |_| true),
            p: rational(2, 3),
        });
        fkg.push(FkgCase {
            on: cube.clone(),
            a: connected(v(&[0, 0, 0]), v(&[1, 1, 1])),
            b: connected(v(&[1, 0, 0]), v(&[0, 1, 1])),
            p: rational(1, 2),
        });
        fkg.push(FkgCase {
            on: grid34.clone(),
            a: connected(o2, v(&[3, 2])),
            b: crossing("left-right crossing", face(&grid34.graph, 0, 0), face(&grid34.graph, 0, 3)),
            p: rational(2, 5),
        });

        // BK: every unordered pair (with repetition) from six connection
        // events on B(1), plus identical and independent pairs elsewhere.
        let ball_pairs = [
            (v(&[-1, -1]), v(&[1, 1])),
            (v(&[-1, 1]), v(&[1, -1])),
            (v(&[-1, 0]), v(&[1, 0])),
            (v(&[0, -1]), v(&[0, 1])),
            (o2, v(&[1, 1])),
            (v(&[-1, -1]), o2),
        ];
        let mut bk = Vec::new();
        let mut k = 0;
        for i in 0..ball_pairs.len() {
            for j in i..ball_pairs.len() {
                bk.push(BkCase {
                    on: ball.clone(),
                    pair1: ball_pairs[i],
                    pair2: ball_pairs[j],
                    p: ps[k % ps.len()].clone(),
                });
                k += 1;
            }
        }
        let extra = [
            (&square, (o2, v(&[1, 1])), (o2, v(&[1, 1])), rational(1, 2)),
            (&edge, (v(&[0]), v(&[1])), (v(&[0]), v(&[1])), rational(1, 2)),
            (&pair_graph, (o2, v(&[1, 0])), (v(&[0, 5]), v(&[1, 5])), rational(1, 3)),
            (&square, (o2, v(&[1, 1])), (v(&[1, 0]), v(&[0, 1])), rational(1, 2)),
            (&grid23, (o2, v(&[2, 1])), (v(&[0, 1]), v(&[2, 0])), rational(3, 5)),
            (&cube, (v(&[0, 0, 0]), v(&[1, 1, 1])), (v(&[0, 0, 0]), v(&[1, 1, 1])), rational(1, 2)),
            (&spread, (v(&[0]), v(&[3])), (v(&[1]), v(&[2])), rational(1, 2)),
        ];
        for (on, pair1, pair2, p) in extra {
            bk.push(BkCase {
                on: on.clone(),
                pair1,
                pair2,
                p,
            });
        }

        Catalog { russo, fkg, bk }
    }

    /// Runs every audit plus the total-probability check on every Russo
    /// event.
    pub fn run(&self) -> Result<Vec<CheckOutcome>> {
        let mut out = Vec::new();
        for case in &self.russo {
            let g = &case.on.graph;
            let name = format!("{}: {}", case.on.graph_name, case.event.name);
            let audit = russo_check(g, |c| case.event.holds(c))?;
            out.push(CheckOutcome {
                suite: "russo".into(),
                name: name.clone(),
                passed: audit.holds(),
                detail: format!("d/dp P = {}; sum of pivotal probabilities = {}", audit.lhs, audit.rhs),
            });
            let a = event_polynomial(g, |c| case.event.holds(c))?;
            let not_a = event_polynomial(g, |c| !case.event.holds(c))?;
            let total = &a + &not_a;
            out.push(CheckOutcome {
                suite: "total".into(),
                name,
                passed: total == PPolynomial::constant(1),
                detail: format!("P(A) + P(not A) = {total}"),
            });
        }
        for case in &self.fkg {
            let audit = fkg_check(&case.on.graph, |c| case.a.holds(c), |c| case.b.holds(c), &case.p)?;
            out.push(CheckOutcome {
                suite: "fkg".into(),
                name: format!("{}: {} & {} at p={}", case.on.graph_name, case.a.name, case.b.name, case.p),
                passed: audit.holds(),
                detail: format!("P(AB) = {}, P(A)P(B) = {}", audit.p_ab, &audit.p_a * &audit.p_b),
            });
        }
        for case in &self.bk {
            let audit = bk_check_connections(&case.on.graph, case.pair1, case.pair2, &case.p)?;
            out.push(CheckOutcome {
                suite: "bk".into(),
                name: format!(
                    "{}: {}<->{} ∘ {}<->{} at p={}",
                    case.on.graph_name, case.pair1.0, case.pair1.1, case.pair2.0, case.pair2.1, case.p
                ),
                passed: audit.holds(),
                detail: format!(
                    "P(disjoint) = {}, product = {}",
                    audit.disjoint,
                    &audit.first * &audit.second
                ),
            });
        }
        Ok(out)
    }
}
