//! Maximum flow over `f64` capacities (Dinic's algorithm).

pub(crate) struct FlowNetwork {
    head: Vec<usize>,
    next: Vec<usize>,
    to: Vec<usize>,
    cap: Vec<f64>,
    level: Vec<i32>,
    cursor: Vec<usize>,
}

pub(crate) const NIL: usize = usize::MAX;
pub(crate) const FLOW_EPS: f64 = 1e-15;

impl FlowNetwork {
    pub(crate) fn new(nodes: usize) -> Self {
        FlowNetwork {
            head: vec![NIL; nodes],
            next: Vec::new(),
            to: Vec::new(),
            cap: Vec::new(),
            level: vec![0; nodes],
            cursor: vec![0; nodes],
        }
    }

    pub(crate) fn add_edge(&mut self, u: usize, v: usize, cap: f64) -> usize {
        let id = self.to.len();
        for (a, b, c) in [(u, v, cap), (v, u, 0.0)] {
            self.to.push(b);
            self.cap.push(c);
            self.next.push(self.head[a]);
            self.head[a] = self.to.len() - 1;
        }
        id
    }

    pub(crate) fn residual(&self, arc: usize) -> f64 {
        self.cap[arc]
    }

    /// Nodes reachable from `s` through arcs with residual capacity.
    pub(crate) fn source_side(&self, s: usize) -> Vec<bool> {
        let mut seen = vec![false; self.head.len()];
        seen[s] = true;
        let mut stack = vec![s];
        while let Some(u) = stack.pop() {
            let mut e = self.head[u];
            while e != NIL {
                let v = self.to[e];
                if self.cap[e] > FLOW_EPS && !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
                e = self.next[e];
            }
        }
        seen
    }

    pub(crate) fn max_flow(&mut self, s: usize, t: usize) -> f64 {
        let mut total = 0.0;
        let mut queue = Vec::with_capacity(self.head.len());
        loop {
            self.level.iter_mut().for_each(|l| *l = -1);
            self.level[s] = 0;
            queue.clear();
            queue.push(s);
            let mut qi = 0;
            while qi < queue.len() {
                let u = queue[qi];
                qi += 1;
                let mut e = self.head[u];
                while e != NIL {
                    let v = self.to[e];
                    if self.cap[e] > FLOW_EPS && self.level[v] < 0 {
                        self.level[v] = self.level[u] + 1;
                        queue.push(v);
                    }
                    e = self.next[e];
                }
            }
            if self.level[t] < 0 {
                return total;
            }
            self.cursor.copy_from_slice(&self.head);
            loop {
                let pushed = self.augment(s, t);
                if pushed <= FLOW_EPS {
                    break;
                }
                total += pushed;
            }
        }
    }

    /// One blocking-flow augmentation along the level graph, iteratively.
    fn augment(&mut self, s: usize, t: usize) -> f64 {
        let mut path: Vec<usize> = Vec::new();
        let mut u = s;
        loop {
            if u == t {
                let amount = path.iter().map(|&e| self.cap[e]).fold(f64::INFINITY, f64::min);
                for &e in &path {
                    self.cap[e] -= amount;
                    self.cap[e ^ 1] += amount;
                }
                return amount;
            }
            let mut advanced = false;
            while self.cursor[u] != NIL {
                let e = self.cursor[u];
                let v = self.to[e];
                if self.cap[e] > FLOW_EPS && self.level[v] == self.level[u] + 1 {
                    path.push(e);
                    u = v;
                    advanced = true;
                    break;
                }
                self.cursor[u] = self.next[e];
            }
            if !advanced {
                if u == s {
                    return 0.0;
                }
                self.level[u] = -1;
                let e = path.pop().expect("non-empty path");
                u = self.to[e ^ 1];
                self.cursor[u] = self.next[self.cursor[u]];
            }
        }
    }
}
