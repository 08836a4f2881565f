//! Primal network simplex for the uncapacitated transportation problem.
//!
//! Big-M start with an artificial root, strongly feasible spanning trees
//! (Cunningham's leaving-arc rule) and block-search pricing.

use crate::error::{Error, Result};

const NONE: usize = usize::MAX;

pub(crate) struct Solution {
    /// Row-major `sources x targets` flows.
    pub flows: Vec<f64>,
    pub cost: f64,
    /// `u_i + v_j <= c_ij`, with equality on the support of the plan.
    pub source_potentials: Vec<f64>,
    pub target_potentials: Vec<f64>,
}

struct Network {
    ns: usize,
    nt: usize,
    root: usize,
    src: Vec<usize>,
    tgt: Vec<usize>,
    cost: Vec<f64>,
    flow: Vec<f64>,
    pi: Vec<f64>,
    parent: Vec<usize>,
    pred: Vec<usize>,
    /// `pred` arc points from the node to its parent.
    up: Vec<bool>,
    depth: Vec<usize>,
    children: Vec<Vec<usize>>,
    slot: Vec<usize>,
    in_tree: Vec<bool>,
}

impl Network {
    fn real_arcs(&self) -> usize {
        self.ns * self.nt
    }

    fn reduced_cost(&self, a: usize) -> f64 {
        self.cost[a] + self.pi[self.src[a]] - self.pi[self.tgt[a]]
    }

    fn detach(&mut self, x: usize) {
        let p = self.parent[x];
        let k = self.slot[x];
        self.children[p].swap_remove(k);
        if let Some(&moved) = self.children[p].get(k) {
            self.slot[moved] = k;
        }
        self.parent[x] = NONE;
    }

    fn attach(&mut self, x: usize, p: usize, arc: usize) {
        self.parent[x] = p;
        self.pred[x] = arc;
        self.up[x] = self.src[arc] == x;
        self.slot[x] = self.children[p].len();
        self.children[p].push(x);
    }

    fn join(&self, mut a: usize, mut b: usize) -> usize {
        while a != b {
            if self.depth[a] >= self.depth[b] {
                a = self.parent[a];
            } else {
                b = self.parent[b];
            }
        }
        a
    }

    fn pivot(&mut self, entering: usize, stack: &mut Vec<usize>) {
        let u = self.src[entering];
        let v = self.tgt[entering];
        let apex = self.join(u, v);

        // Cycle oriented along the entering arc: apex down to u, u -> v,
        // v up to apex. Cunningham's rule takes the last blocking arc.
        let mut u_path = Vec::new();
        let mut x = u;
        while x != apex {
            u_path.push(x);
            x = self.parent[x];
        }
        let mut delta = f64::INFINITY;
        let mut leaving = NONE;
        for &x in u_path.iter().rev() {
            // Traversed parent -> x; decreases if the arc points up.
            if self.up[x] && self.flow[self.pred[x]] <= delta {
                delta = self.flow[self.pred[x]];
                leaving = x;
            }
        }
        let mut x = v;
        while x != apex {
            if !self.up[x] && self.flow[self.pred[x]] <= delta {
                delta = self.flow[self.pred[x]];
                leaving = x;
            }
            x = self.parent[x];
        }
        debug_assert!(leaving != NONE, "unbounded cycle in a bounded problem");

        if delta > 0.0 {
            self.flow[entering] += delta;
            for &x in &u_path {
                let a = self.pred[x];
                if self.up[x] {
                    self.flow[a] -= delta;
                } else {
                    self.flow[a] += delta;
                }
            }
            let mut x = v;
            while x != apex {
                let a = self.pred[x];
                if self.up[x] {
                    self.flow[a] += delta;
                } else {
                    self.flow[a] -= delta;
                }
                x = self.parent[x];
            }
        }
        self.flow[self.pred[leaving]] = 0.0;
        self.in_tree[self.pred[leaving]] = false;
        self.in_tree[entering] = true;

        // The subtree below the leaving arc contains exactly one of u, v.
        let on_u_side = {
            let mut x = u;
            loop {
                if x == leaving {
                    break true;
                }
                if x == apex {
                    break false;
                }
                x = self.parent[x];
            }
        };
        let (inner, outer) = if on_u_side { (u, v) } else { (v, u) };
        let rc = self.reduced_cost(entering);
        let shift = if inner == v { rc } else { -rc };

        // Re-hang the path inner .. leaving below `outer`, reversing it.
        let mut path = Vec::new();
        let mut x = inner;
        loop {
            path.push(x);
            if x == leaving {
                break;
            }
            x = self.parent[x];
        }
        let old_preds: Vec<usize> = path.iter().map(|&x| self.pred[x]).collect();
        for &x in &path {
            self.detach(x);
        }
        self.attach(path[0], outer, entering);
        for k in 1..path.len() {
            self.attach(path[k], path[k - 1], old_preds[k - 1]);
        }

        stack.clear();
        stack.push(inner);
        while let Some(x) = stack.pop() {
            self.pi[x] += shift;
            self.depth[x] = self.depth[self.parent[x]] + 1;
            stack.extend_from_slice(&self.children[x]);
        }
    }
}

/// Approximate target potentials from a damped dual ascent on the loads;
/// only the speed of the exact solve depends on their quality.
fn potential_guess(supply: &[f64], demand: &[f64], costs: &[f64]) -> Vec<f64> {
    let nt = demand.len();
    let (lo, hi) = costs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), c| (a.min(*c), b.max(*c)));
    let mut step = (hi - lo).max(1e-12);
    let mut v = vec![0.0; nt];
    let mut best = (f64::INFINITY, v.clone());
    let mut loads = vec![0.0; nt];
    for _ in 0..64 {
        loads.iter_mut().for_each(|l| *l = 0.0);
        for (i, a) in supply.iter().enumerate() {
            loads[preferred(&costs[i * nt..(i + 1) * nt], &v)] += a;
        }
        let imbalance: f64 = loads.iter().zip(demand).map(|(l, b)| (l - b).abs()).sum();
        if imbalance < best.0 {
            best = (imbalance, v.clone());
        }
        if imbalance == 0.0 {
            break;
        }
        for j in 0..nt {
            v[j] += step * (demand[j] - loads[j]);
        }
        step *= 0.93;
    }
    best.1
}

fn preferred(row: &[f64], v: &[f64]) -> usize {
    let mut best = 0;
    for j in 1..row.len() {
        if row[j] - v[j] < row[best] - v[best] {
            best = j;
        }
    }
    best
}

pub(crate) fn solve(supply: &[f64], demand: &[f64], costs: &[f64]) -> Result<Solution> {
    let ns = supply.len();
    let nt = demand.len();
    let m_real = ns * nt;
    debug_assert_eq!(costs.len(), m_real);
    let total_supply: f64 = supply.iter().sum();
    let total_demand: f64 = demand.iter().sum();
    if (total_supply - total_demand).abs() > 1e-9 {
        return Err(Error::Infeasible(format!(
            "supply {total_supply} differs from demand {total_demand}"
        )));
    }
    let root = ns + nt;
    let nodes = root + 1;
    let max_cost = costs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    // Rerouting a source between two targets changes the cost by at most
    // 2 max|c|, less than a round trip through the root, so artificial flow
    // vanishes at the optimum. A small big-M keeps reduced costs accurate.
    let art = 2.0 * (max_cost + 1.0);
    let eps = 1e-11 * (max_cost + 1.0);

    // Arcs: real (i, j) row-major, then root -> j and j -> root per target.
    let arcs = m_real + 2 * nt;
    let mut src = Vec::with_capacity(arcs);
    let mut tgt = Vec::with_capacity(arcs);
    for i in 0..ns {
        for j in 0..nt {
            src.push(i);
            tgt.push(ns + j);
        }
    }
    for j in 0..nt {
        src.push(root);
        tgt.push(ns + j);
        src.push(ns + j);
        tgt.push(root);
    }
    let mut cost = costs.to_vec();
    cost.resize(arcs, art);

    // Start from every source sending all its mass to its preferred target
    // and targets settling their imbalance with the root. All tree flows are
    // positive except root -> target arcs, which point away from the root,
    // so the tree is strongly feasible.
    let v = potential_guess(supply, demand, costs);
    let mut flow = vec![0.0; arcs];
    let mut parent = vec![NONE; nodes];
    let mut pred = vec![NONE; nodes];
    let mut up = vec![false; nodes];
    let mut pi = vec![0.0; nodes];
    let mut depth = vec![0; nodes];
    let mut in_tree = vec![false; arcs];
    let mut children = vec![Vec::new(); nodes];
    let mut slot = vec![0; nodes];
    let mut loads = vec![0.0; nt];
    let mut choice = vec![0; ns];
    for i in 0..ns {
        let j = preferred(&costs[i * nt..(i + 1) * nt], &v);
        choice[i] = j;
        loads[j] += supply[i];
    }
    for j in 0..nt {
        let node = ns + j;
        let excess = loads[j] - demand[j];
        let (arc, is_up, f) = if excess > 0.0 {
            (m_real + 2 * j + 1, true, excess)
        } else {
            (m_real + 2 * j, false, -excess)
        };
        flow[arc] = f;
        in_tree[arc] = true;
        parent[node] = root;
        pred[node] = arc;
        up[node] = is_up;
        pi[node] = if is_up { -art } else { art };
        depth[node] = 1;
        slot[node] = children[root].len();
        children[root].push(node);
    }
    for i in 0..ns {
        let j = choice[i];
        let arc = i * nt + j;
        flow[arc] = supply[i];
        in_tree[arc] = true;
        parent[i] = ns + j;
        pred[i] = arc;
        up[i] = true;
        pi[i] = pi[ns + j] - costs[arc];
        depth[i] = 2;
        slot[i] = children[ns + j].len();
        children[ns + j].push(i);
    }

    let mut net = Network {
        ns,
        nt,
        root,
        src,
        tgt,
        cost,
        flow,
        pi,
        parent,
        pred,
        up,
        depth,
        children,
        slot,
        in_tree,
    };

    let arcs = net.src.len();
    let block = ((arcs as f64).sqrt().ceil() as usize).max(10);
    let mut next = 0;
    let mut stack = Vec::new();
    loop {
        // Block search: the most negative reduced cost in the first block
        // that contains any candidate, resuming where the last scan stopped.
        let mut best = NONE;
        let mut best_rc = -eps;
        let mut scanned = 0;
        let mut in_block = 0;
        while scanned < arcs {
            let a = next;
            next = if next + 1 == arcs { 0 } else { next + 1 };
            scanned += 1;
            in_block += 1;
            let rc = if net.in_tree[a] { 0.0 } else { net.reduced_cost(a) };
            if rc < best_rc {
                best_rc = rc;
                best = a;
            }
            if in_block == block {
                if best != NONE {
                    break;
                }
                in_block = 0;
            }
        }
        if best == NONE {
            break;
        }
        net.pivot(best, &mut stack);
    }

    let art_flow: f64 = net.flow[m_real..].iter().sum();
    if art_flow > 1e-9 {
        return Err(Error::Infeasible(format!(
            "artificial flow {art_flow:e} remains; supplies and demands differ"
        )));
    }
    let flows = net.flow[..m_real].to_vec();
    let total = flows.iter().zip(costs).map(|(f, c)| f * c).sum();
    debug_assert_eq!(net.real_arcs(), m_real);
    let source_potentials = (0..ns).map(|i| -(net.pi[i] - net.pi[net.root])).collect();
    let target_potentials = (0..nt).map(|j| net.pi[ns + j] - net.pi[net.root]).collect();
    Ok(Solution {
        flows,
        cost: total,
        source_potentials,
        target_potentials,
    })
}
