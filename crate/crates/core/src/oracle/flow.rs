use std::collections::VecDeque;

/// Edmonds-Karp max flow on a small directed graph with integer capacities.
pub struct FlowNetwork {
    cap: Vec<Vec<i32>>,
}

impl FlowNetwork {
    pub fn new(nodes: usize) -> Self {
        FlowNetwork {
            cap: vec![vec![0; nodes]; nodes],
        }
    }

    pub fn add_arc(&mut self, from: usize, to: usize, c: i32) {
        self.cap[from][to] += c;
    }

    /// Undirected unit edge: usable once in either direction.
    pub fn add_edge(&mut self, a: usize, b: usize) {
        self.add_arc(a, b, 1);
        self.add_arc(b, a, 1);
    }

    /// Flow value from `s` to `t`, stopping once `limit` is reached.
    pub fn max_flow(mut self, s: usize, t: usize, limit: i32) -> i32 {
        let n = self.cap.len();
        let mut flow = 0;
        while flow < limit {
            let mut prev = vec![usize::MAX; n];
            prev[s] = s;
            let mut queue = VecDeque::from([s]);
            while let Some(u) = queue.pop_front() {
                if u == t {
                    break;
                }
                for v in 0..n {
                    if prev[v] == usize::MAX && self.cap[u][v] > 0 {
                        prev[v] = u;
                        queue.push_back(v);
                    }
                }
            }
            if prev[t] == usize::MAX {
                break;
            }
            let mut push = i32::MAX;
            let mut v = t;
            while v != s {
                let u = prev[v];
                push = push.min(self.cap[u][v]);
                v = u;
            }
            let mut v = t;
            while v != s {
                let u = prev[v];
                self.cap[u][v] -= push;
                self.cap[v][u] += push;
                v = u;
            }
            flow += push;
        }
        flow.min(limit)
    }
}
