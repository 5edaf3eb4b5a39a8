//! Exact transportation solver (earth mover's distance).
//!
//! Transportation simplex: a northwest-corner basis of `m + n - 1` cells,
//! dual potentials from the basis tree, and pivots along the unique tree
//! cycle closed by the entering cell. Entering and leaving cells follow
//! Bland's smallest-index rule so degenerate pivots cannot cycle.

use std::collections::VecDeque;

use crate::error::{Error, Result};

pub const BALANCE_TOLERANCE: f64 = 1e-6;

/// Optimal flows and the flow-normalized cost `sum(h * c) / sum(h)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub flows: Vec<Vec<f64>>,
    pub total_cost: f64,
}

impl TransportPlan {
    /// Unnormalized objective `sum(h * c)`.
    pub fn work(&self, costs: &[Vec<f64>]) -> f64 {
        self.flows
            .iter()
            .zip(costs)
            .flat_map(|(h, c)| h.iter().zip(c).map(|(a, b)| a * b))
            .sum()
    }

    pub fn moved_mass(&self) -> f64 {
        self.flows.iter().flatten().sum()
    }
}

fn validate(supplies: &[f64], demands: &[f64], costs: &[Vec<f64>]) -> Result<()> {
    if supplies.is_empty() || demands.is_empty() {
        return Err(Error::InvalidArgument("supplies and demands must be nonempty".into()));
    }
    if costs.len() != supplies.len() || costs.iter().any(|r| r.len() != demands.len()) {
        return Err(Error::Shape(format!(
            "cost matrix must be {}x{}",
            supplies.len(),
            demands.len()
        )));
    }
    let bad = |v: &f64| !v.is_finite() || *v < 0.0;
    if supplies.iter().chain(demands).any(bad) {
        return Err(Error::InvalidArgument("masses must be finite and nonnegative".into()));
    }
    if costs.iter().flatten().any(bad) {
        return Err(Error::InvalidArgument("costs must be finite and nonnegative".into()));
    }
    let (s, d): (f64, f64) = (supplies.iter().sum(), demands.iter().sum());
    if (s - d).abs() > BALANCE_TOLERANCE {
        return Err(Error::InvalidArgument(format!(
            "unbalanced problem: supply {s} vs demand {d}"
        )));
    }
    Ok(())
}

/// Solves `min sum h[k][j] c[k][j]` subject to row sums `supplies`, column
/// sums `demands`, `h >= 0`. Totals may differ by at most
/// [`BALANCE_TOLERANCE`]; the excess side is then left partially unshipped
/// so the moved mass equals the smaller total.
pub fn solve_emd(supplies: &[f64], demands: &[f64], costs: &[Vec<f64>]) -> Result<TransportPlan> {
    validate(supplies, demands, costs)?;
    let (m0, n0) = (supplies.len(), demands.len());
    let mut s = supplies.to_vec();
    let mut d = demands.to_vec();
    let mut c: Vec<Vec<f64>> = costs.to_vec();
    let (total_s, total_d): (f64, f64) = (s.iter().sum(), d.iter().sum());
    if total_s > total_d {
        d.push(total_s - total_d);
        c.iter_mut().for_each(|row| row.push(0.0));
    } else if total_d > total_s {
        s.push(total_d - total_s);
        c.push(vec![0.0; d.len()]);
    }

    let flows = TransportSimplex::new(&s, &d, &c).solve()?;
    let flows: Vec<Vec<f64>> = flows.into_iter().take(m0).map(|row| row[..n0].to_vec()).collect();
    let mut plan = TransportPlan {
        flows,
        total_cost: 0.0,
    };
    let mass = plan.moved_mass();
    plan.total_cost = if mass > 0.0 { plan.work(costs) / mass } else { 0.0 };
    Ok(plan)
}

struct TransportSimplex<'a> {
    m: usize,
    n: usize,
    costs: &'a [Vec<f64>],
    flow: Vec<f64>,
    basic: Vec<bool>,
}

impl<'a> TransportSimplex<'a> {
    fn new(supplies: &[f64], demands: &[f64], costs: &'a [Vec<f64>]) -> Self {
        let (m, n) = (supplies.len(), demands.len());
        let mut flow = vec![0.0; m * n];
        let mut basic = vec![false; m * n];
        let mut s = supplies.to_vec();
        let mut d = demands.to_vec();
        let (mut i, mut j) = (0, 0);
        loop {
            let cell = i * n + j;
            basic[cell] = true;
            if i == m - 1 && j == n - 1 {
                flow[cell] = s[i].max(0.0);
                break;
            }
            let x = s[i].min(d[j]);
            flow[cell] = x;
            if (s[i] <= d[j] && i < m - 1) || j == n - 1 {
                d[j] -= x;
                s[i] = 0.0;
                i += 1;
            } else {
                s[i] -= x;
                d[j] = 0.0;
                j += 1;
            }
        }
        TransportSimplex {
            m,
            n,
            costs,
            flow,
            basic,
        }
    }

    /// Basis adjacency on the bipartite graph: rows are nodes `0..m`,
    /// columns are nodes `m..m+n`.
    fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.m + self.n];
        for cell in (0..self.m * self.n).filter(|&c| self.basic[c]) {
            let (i, j) = (cell / self.n, cell % self.n);
            adj[i].push(self.m + j);
            adj[self.m + j].push(i);
        }
        adj
    }

    fn potentials(&self, adj: &[Vec<usize>]) -> (Vec<f64>, Vec<f64>) {
        let (m, n) = (self.m, self.n);
        let mut u = vec![f64::NAN; m];
        let mut v = vec![f64::NAN; n];
        u[0] = 0.0;
        let mut queue = VecDeque::from([0usize]);
        while let Some(node) = queue.pop_front() {
            for &next in &adj[node] {
                if node < m {
                    let j = next - m;
                    if v[j].is_nan() {
                        v[j] = self.costs[node][j] - u[node];
                        queue.push_back(next);
                    }
                } else {
                    let j = node - m;
                    if u[next].is_nan() {
                        u[next] = self.costs[next][j] - v[j];
                        queue.push_back(next);
                    }
                }
            }
        }
        (u, v)
    }

    /// Tree path from row node `row` to column node `m + col`, as a list of
    /// basic cells in order starting from the column end.
    fn tree_path(&self, adj: &[Vec<usize>], row: usize, col: usize) -> Vec<usize> {
        let total = self.m + self.n;
        let mut parent = vec![usize::MAX; total];
        parent[row] = row;
        let mut queue = VecDeque::from([row]);
        while let Some(node) = queue.pop_front() {
            for &next in &adj[node] {
                if parent[next] == usize::MAX {
                    parent[next] = node;
                    queue.push_back(next);
                }
            }
        }
        let mut path = Vec::new();
        let mut node = self.m + col;
        while node != row {
            let up = parent[node];
            let (r, c) = if node < self.m { (node, up - self.m) } else { (up, node - self.m) };
            path.push(r * self.n + c);
            node = up;
        }
        path
    }

    fn solve(mut self) -> Result<Vec<Vec<f64>>> {
        let scale = self.costs.iter().flatten().fold(1.0f64, |a, b| a.max(*b));
        let tol = 1e-12 * scale;
        let max_pivots = 1000 + 100 * (self.m * self.n) * (self.m + self.n);

        for _ in 0..max_pivots {
            let adj = self.adjacency();
            let (u, v) = self.potentials(&adj);
            let entering = (0..self.m * self.n).find(|&cell| {
                let (i, j) = (cell / self.n, cell % self.n);
                !self.basic[cell] && self.costs[i][j] - u[i] - v[j] < -tol
            });
            let Some(entering) = entering else {
                return Ok(self.flow.chunks(self.n).map(<[f64]>::to_vec).collect());
            };
            let (ei, ej) = (entering / self.n, entering % self.n);
            let path = self.tree_path(&adj, ei, ej);
            // path cells alternate -, +, -, ... starting next to the column
            let theta = path.iter().step_by(2).map(|&c| self.flow[c]).fold(f64::INFINITY, f64::min);
            let leaving = path
                .iter()
                .step_by(2)
                .copied()
                .filter(|&c| self.flow[c] == theta)
                .min()
                .expect("cycle has at least one donor cell");
            for (k, &cell) in path.iter().enumerate() {
                if k % 2 == 0 {
                    self.flow[cell] -= theta;
                } else {
                    self.flow[cell] += theta;
                }
            }
            self.flow[entering] = theta;
            self.flow[leaving] = 0.0;
            self.basic[leaving] = false;
            self.basic[entering] = true;
        }
        Err(Error::InvalidArgument(
            "transportation simplex did not converge".into(),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row_col_sums(p: &TransportPlan) -> (Vec<f64>, Vec<f64>) {
        let rows = p.flows.iter().map(|r| r.iter().sum()).collect();
        let cols = (0..p.flows[0].len()).map(|j| p.flows.iter().map(|r| r[j]).sum()).collect();
        (rows, cols)
    }

    #[test]
    fn perfect_matching_costs_nothing() {
        let p = solve_emd(&[0.5, 0.5], &[0.5, 0.5], &[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(p.total_cost, 0.0);
        assert_eq!(p.flows, vec![vec![0.5, 0.0], vec![0.0, 0.5]]);
    }

    #[test]
    fn single_source_flow_is_forced() {
        let p = solve_emd(&[1.0], &[0.3, 0.7], &[vec![2.0, 4.0]]).unwrap();
        assert_eq!(p.flows, vec![vec![0.3, 0.7]]);
        assert!((p.total_cost - 3.4).abs() < 1e-12);
    }

    #[test]
    fn two_by_two_optimum() {
        let costs = vec![vec![1.0, 3.0], vec![2.0, 1.0]];
        let p = solve_emd(&[0.6, 0.4], &[0.5, 0.5], &costs).unwrap();
        // 0.5 * 1 + 0.1 * 3 + 0.4 * 1
        assert!((p.total_cost - 1.2).abs() < 1e-12);
        let expected = [[0.5, 0.1], [0.0, 0.4]];
        for (row, exp) in p.flows.iter().zip(expected) {
            for (a, b) in row.iter().zip(exp) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn northwest_start_gets_improved() {
        // the northwest corner puts everything on the expensive diagonal
        let costs = vec![vec![10.0, 0.0], vec![0.0, 10.0]];
        let p = solve_emd(&[0.5, 0.5], &[0.5, 0.5], &costs).unwrap();
        assert_eq!(p.total_cost, 0.0);
    }

    #[test]
    fn slight_imbalance_moves_the_smaller_total() {
        let p = solve_emd(&[0.5, 0.5 + 5e-7], &[0.5, 0.5], &[vec![1.0, 2.0], vec![3.0, 1.0]]).unwrap();
        let (rows, cols) = row_col_sums(&p);
        assert!((p.moved_mass() - 1.0).abs() < 1e-9);
        assert!(rows[0] <= 0.5 + 1e-9 && rows[1] <= 0.5 + 5e-7 + 1e-9);
        assert!(cols.iter().all(|c| *c <= 0.5 + 1e-9));
    }

    #[test]
    fn zero_masses_and_degenerate_rows() {
        let costs = vec![vec![1.0, 2.0, 3.0], vec![4.0, 0.5, 1.0], vec![2.0, 2.0, 2.0]];
        let p = solve_emd(&[0.0, 0.5, 0.5], &[0.5, 0.0, 0.5], &costs).unwrap();
        let (rows, cols) = row_col_sums(&p);
        assert!((rows[1] - 0.5).abs() < 1e-12 && (cols[1]).abs() < 1e-12);
        // best: row1 -> col2 (1.0), row2 -> col0 (2.0)
        assert!((p.total_cost - 1.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_problems() {
        assert!(matches!(
            solve_emd(&[1.0], &[0.5], &[vec![1.0]]),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            solve_emd(&[1.0], &[1.0], &[vec![1.0, 2.0]]),
            Err(Error::Shape(_))
        ));
        assert!(solve_emd(&[1.0], &[1.0], &[vec![-1.0]]).is_err());
    }
}
