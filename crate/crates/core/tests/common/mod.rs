//! Reference implementations written independently of the library, plus
//! random instance generators shared by the integration tests.
#![allow(dead_code)]

use mtlsa::labels::LabelVector;
use mtlsa::nn::{Activation, HeadTargets, MultiTaskNet, NetShape};
use rand::Rng;

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
/// `None` when the system is singular.
#[allow(clippy::needless_range_loop)]
pub fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    Some(x)
}

/// Minimum of `sum h * c` over the transportation polytope, by enumerating
/// every basis of `m + n - 1` cells. Only sensible for tiny problems.
pub fn brute_force_emd(supplies: &[f64], demands: &[f64], costs: &[Vec<f64>]) -> f64 {
    let (m, n) = (supplies.len(), demands.len());
    let cells: Vec<(usize, usize)> = (0..m).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    let k = m + n - 1;
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << cells.len()) {
        if mask.count_ones() as usize != k {
            continue;
        }
        let chosen: Vec<(usize, usize)> = cells
            .iter()
            .enumerate()
            .filter(|(c, _)| mask & (1 << c) != 0)
            .map(|(_, &cell)| cell)
            .collect();
        // row constraints, then all but the last column constraint
        let mut a = vec![vec![0.0; k]; k];
        let mut b = vec![0.0; k];
        for (v, &(i, j)) in chosen.iter().enumerate() {
            a[i][v] = 1.0;
            if j + 1 < n {
                a[m + j][v] = 1.0;
            }
        }
        b[..m].copy_from_slice(supplies);
        b[m..].copy_from_slice(&demands[..n - 1]);
        let Some(x) = solve_linear(a, b) else { continue };
        if x.iter().any(|&v| v < -1e-12) {
            continue;
        }
        let cost: f64 = chosen.iter().zip(&x).map(|(&(i, j), v)| v * costs[i][j]).sum();
        best = best.min(cost);
    }
    best
}

/// A balanced random transportation problem of the given size. Some masses
/// are zero so degenerate bases show up.
pub fn random_transport<R: Rng>(rng: &mut R, m: usize, n: usize) -> (Vec<f64>, Vec<f64>, Vec<Vec<f64>>) {
    let mass = |rng: &mut R| if rng.random::<f64>() < 0.1 { 0.0 } else { rng.random::<f64>() };
    let mut supplies: Vec<f64> = (0..m).map(|_| mass(rng)).collect();
    let mut demands: Vec<f64> = (0..n).map(|_| mass(rng)).collect();
    if supplies.iter().sum::<f64>() == 0.0 {
        supplies[0] = 1.0;
    }
    if demands.iter().sum::<f64>() == 0.0 {
        demands[0] = 1.0;
    }
    let (s, d): (f64, f64) = (supplies.iter().sum(), demands.iter().sum());
    for v in &mut demands {
        *v *= s / d;
    }
    let costs = (0..m)
        .map(|_| (0..n).map(|_| rng.random_range(0.0..10.0)).collect())
        .collect();
    (supplies, demands, costs)
}

/// Double-loop squared distances, full sort, exact integer rank
/// `ceil(k * n^2 / 1000)` for `kappa = k / 1000`, then strict-inequality counts.
pub fn density_oracle(points: &[Vec<f64>], kappa_thousandths: u64) -> (f64, Vec<usize>) {
    let n = points.len();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for (a, b) in points[i].iter().zip(&points[j]) {
                s += (a - b) * (a - b);
            }
            d[i][j] = s;
        }
    }
    let mut all: Vec<f64> = d.iter().flatten().copied().collect();
    all.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let total = (n * n) as u64;
    let rank = (kappa_thousandths * total).div_ceil(1000).max(1);
    let cutoff = all[rank as usize - 1];
    let rho = d.iter().map(|row| row.iter().filter(|&&v| v < cutoff).count()).collect();
    (cutoff, rho)
}

/// Points in `dim` dimensions; half the groups sit on a coarse integer
/// grid so distance ties are common.
pub fn random_group<R: Rng>(rng: &mut R, n: usize, dim: usize) -> Vec<Vec<f64>> {
    let grid = rng.random::<bool>();
    (0..n)
        .map(|_| {
            (0..dim)
                .map(|_| {
                    if grid {
                        rng.random_range(0..4) as f64
                    } else {
                        rng.random_range(-5.0..5.0)
                    }
                })
                .collect()
        })
        .collect()
}

pub fn random_label<R: Rng>(rng: &mut R, classes: usize) -> LabelVector {
    let raw: Vec<f64> = (0..classes).map(|_| rng.random::<f64>() + 1e-3).collect();
    let total: f64 = raw.iter().sum();
    LabelVector::new(raw.into_iter().map(|v| v / total).collect()).unwrap()
}

/// A small random network with a batch of inputs and head targets.
pub fn random_problem<R: Rng>(rng: &mut R) -> (MultiTaskNet, Vec<Vec<f64>>, Vec<HeadTargets>) {
    let input = rng.random_range(1..=4);
    let mut layer_sizes = vec![input];
    for _ in 0..rng.random_range(0..=2) {
        layer_sizes.push(rng.random_range(1..=5));
    }
    let head_hidden = (0..rng.random_range(0..=1)).map(|_| rng.random_range(1..=4)).collect();
    let activation = if rng.random::<bool>() { Activation::Tanh } else { Activation::Relu };
    let shape = NetShape {
        layer_sizes,
        head_hidden,
        classes_a: rng.random_range(2..=4),
        classes_b: rng.random_range(2..=4),
        activation,
    };
    let mut net = MultiTaskNet::new(shape.clone(), rng.random()).unwrap();
    // nonzero biases, otherwise a dead relu upstream pins the next
    // pre-activation exactly on the kink
    for group in net.params_mut() {
        for p in group.iter_mut() {
            *p += rng.random_range(-0.3..0.3);
        }
    }
    let batch = rng.random_range(1..=4);
    let inputs = (0..batch)
        .map(|_| (0..input).map(|_| rng.random_range(-2.0..2.0)).collect())
        .collect();
    let targets = (0..batch)
        .map(|_| {
            let which = rng.random_range(0..3);
            HeadTargets {
                a: (which != 1).then(|| random_label(rng, shape.classes_a)),
                b: (which != 0).then(|| random_label(rng, shape.classes_b)),
            }
        })
        .collect();
    (net, inputs, targets)
}

/// Central differences of the batch loss, one parameter at a time.
pub fn numeric_gradients(net: &MultiTaskNet, inputs: &[Vec<f64>], targets: &[HeadTargets], h: f64) -> Vec<Vec<f64>> {
    let rows: Vec<&[f64]> = inputs.iter().map(Vec::as_slice).collect();
    let mut probe = net.clone();
    let lens: Vec<usize> = net.params().iter().map(|p| p.len()).collect();
    let mut grads = Vec::new();
    for (g, &len) in lens.iter().enumerate() {
        let mut out = vec![0.0; len];
        for (k, slot) in out.iter_mut().enumerate() {
            let orig = probe.params()[g][k];
            probe.params_mut()[g][k] = orig + h;
            let up = probe.batch_loss(&rows, targets).unwrap();
            probe.params_mut()[g][k] = orig - h;
            let down = probe.batch_loss(&rows, targets).unwrap();
            probe.params_mut()[g][k] = orig;
            *slot = (up - down) / (2.0 * h);
        }
        grads.push(out);
    }
    grads
}

/// `|a - b| / max(|a|, |b|)` over the flattened vectors; 0 when both vanish.
pub fn relative_error(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let norm = |v: &[Vec<f64>]| v.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
    let diff: f64 = a
        .iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let scale = norm(a).max(norm(b));
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}
