//! Nested Clenshaw-Curtis collocation on `[-1, 1]` with the uniform density.
//!
//! Nodes at level `l` are `y_j = cos(j pi / (m(l) - 1))`, `j = 0..m(l)`, with
//! `m(0) = 0`, `m(1) = 1` and `m(l) = 2^(l-1) + 1`. The single node of level 1
//! is the midpoint `0`, which belongs to every finer level.
//!
//! Quadrature weights are the expected values of the Lagrange basis
//! polynomials under the density `1/2`. They are obtained by integrating the
//! (barycentric) Lagrange basis with a Gauss-Legendre reference rule that is
//! exact to degree `2m + 1`, so the same code works for any node family.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{Error, Result};

/// Number of nodes at a given interpolation level.
pub fn level_to_nodes(level: u32) -> usize {
    match level {
        0 => 0,
        1 => 1,
        l => (1usize << (l - 1)) + 1,
    }
}

/// Nodes added when going from `level - 1` to `level` (nested rules).
pub fn new_points(level: u32) -> usize {
    if level == 0 {
        return 0;
    }
    level_to_nodes(level) - level_to_nodes(level - 1)
}

/// Exact identity of a Clenshaw-Curtis node, independent of the level it is
/// listed at: the node is `cos(num * pi / 2^exp)` with `num / 2^exp` reduced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeKey {
    pub num: u32,
    pub exp: u32,
}

impl NodeKey {
    fn reduced(mut num: u32, mut exp: u32) -> Self {
        if num == 0 {
            return Self { num: 0, exp: 0 };
        }
        while exp > 0 && num.is_multiple_of(2) {
            num /= 2;
            exp -= 1;
        }
        Self { num, exp }
    }

    /// Abscissa of the node.
    pub fn abscissa(self) -> f64 {
        // sin(pi/2 - theta) keeps the family exactly antisymmetric and puts
        // the middle node at exactly 0.
        let scale = (1u64 << (self.exp + 1)) as f64;
        let shifted = (1i64 << self.exp) - 2 * self.num as i64;
        libm::sin(PI * shifted as f64 / scale)
    }
}

/// Keys of the nodes at `level`, in cosine order (from `+1` down to `-1`).
pub fn cc_node_keys(level: u32) -> Vec<NodeKey> {
    match level {
        0 => Vec::new(),
        1 => vec![NodeKey::reduced(1, 1)],
        l => {
            let intervals = 1u32 << (l - 1);
            (0..=intervals)
                .map(|j| NodeKey::reduced(j, l - 1))
                .collect()
        }
    }
}

/// Clenshaw-Curtis nodes at `level`; empty for level 0.
pub fn cc_nodes(level: u32) -> Vec<f64> {
    cc_node_keys(level).into_iter().map(NodeKey::abscissa).collect()
}

/// Quadrature weights for [`cc_nodes`] under the uniform density on `[-1, 1]`.
pub fn cc_weights(level: u32) -> Vec<f64> {
    interpolatory_weights(&cc_nodes(level))
}

/// Expected values (density 1/2 on `[-1, 1]`) of the Lagrange basis built on
/// `nodes`. The nodes must be distinct.
pub fn interpolatory_weights(nodes: &[f64]) -> Vec<f64> {
    let m = nodes.len();
    match m {
        0 => return Vec::new(),
        1 => return vec![1.0],
        _ => {}
    }
    let bary = barycentric_weights(nodes);
    let (gx, gw) = gauss_legendre(m + 1);
    let mut weights = vec![0.0; m];
    let mut basis = vec![0.0; m];
    for (&x, &w) in gx.iter().zip(&gw) {
        lagrange_basis(nodes, &bary, x, &mut basis);
        for (acc, b) in weights.iter_mut().zip(&basis) {
            *acc += 0.5 * w * b;
        }
    }
    weights
}

/// Barycentric weights `1 / prod_{k != j} (x_j - x_k)`, rescaled so the
/// largest has magnitude one (the second barycentric form is scale free).
fn barycentric_weights(nodes: &[f64]) -> Vec<f64> {
    let m = nodes.len();
    let mut log_mag = vec![0.0; m];
    let mut sign = vec![1.0; m];
    for j in 0..m {
        for k in 0..m {
            if k != j {
                let d = nodes[j] - nodes[k];
                log_mag[j] -= libm::log(d.abs());
                if d < 0.0 {
                    sign[j] = -sign[j];
                }
            }
        }
    }
    let top = log_mag.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    log_mag
        .iter()
        .zip(&sign)
        .map(|(&l, &s)| s * libm::exp(l - top))
        .collect()
}

fn lagrange_basis(nodes: &[f64], bary: &[f64], x: f64, out: &mut [f64]) {
    if let Some(hit) = nodes.iter().position(|&n| n == x) {
        out.iter_mut().for_each(|v| *v = 0.0);
        out[hit] = 1.0;
        return;
    }
    let mut denom = 0.0;
    for ((o, &n), &w) in out.iter_mut().zip(nodes).zip(bary) {
        *o = w / (x - n);
        denom += *o;
    }
    out.iter_mut().for_each(|v| *v /= denom);
}

/// Gauss-Legendre rule with `k` points on `[-1, 1]` (weights sum to 2).
fn gauss_legendre(k: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xs = vec![0.0; k];
    let mut ws = vec![0.0; k];
    let kf = k as f64;
    for i in 0..k.div_ceil(2) {
        let mut x = libm::cos(PI * (i as f64 + 0.75) / (kf + 0.5));
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(k, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(k, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        xs[i] = x;
        xs[k - 1 - i] = -x;
        ws[i] = w;
        ws[k - 1 - i] = w;
    }
    if k % 2 == 1 {
        xs[k / 2] = 0.0;
    }
    (xs, ws)
}

/// `(P_k(x), P_k'(x))` by the three-term recurrence.
fn legendre(k: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if k == 0 {
        return (1.0, 0.0);
    }
    for n in 2..=k {
        let nf = n as f64;
        let p2 = ((2.0 * nf - 1.0) * x * p1 - (nf - 1.0) * p0) / nf;
        p0 = p1;
        p1 = p2;
    }
    let d = k as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Affine map of reference nodes from `[-1, 1]` onto `[a, b]`.
pub fn map_to_interval(nodes: &[f64], interval: (f64, f64)) -> Result<Vec<f64>> {
    let (a, b) = interval;
    if !(a < b) || !a.is_finite() || !b.is_finite() {
        return Err(Error::DegenerateInterval { lo: a, hi: b });
    }
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    Ok(nodes.iter().map(|&y| mid + half * y).collect())
}

/// One univariate rule: nodes, weights and node identities at a level.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub level: u32,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub keys: Vec<NodeKey>,
}

impl Rule {
    pub fn new(level: u32) -> Self {
        let keys = cc_node_keys(level);
        let nodes: Vec<f64> = keys.iter().map(|k| k.abscissa()).collect();
        let weights = interpolatory_weights(&nodes);
        Self {
            level,
            nodes,
            weights,
            keys,
        }
    }
}

/// Lazily grown table of rules, index `l - 1` holds level `l`.
#[derive(Debug, Clone, Default)]
pub struct RuleTable {
    rules: Vec<Rule>,
}

impl RuleTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn rule(&mut self, level: u32) -> &Rule {
        assert!(level >= 1, "rules start at level 1");
        while self.rules.len() < level as usize {
            let next = self.rules.len() as u32 + 1;
            self.rules.push(Rule::new(next));
        }
        &self.rules[level as usize - 1]
    }
}

/// Full tensor grid for a vector of levels.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorGrid {
    pub levels: Vec<u32>,
    /// Points in lexicographic order, last direction varying fastest.
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl TensorGrid {
    pub fn cardinality(&self) -> usize {
        self.points.len()
    }
}

/// Tensor product of the per-direction rules, mapped onto `intervals`.
///
/// With no directions the grid has a single empty point of weight one.
pub fn tensor_grid(levels: &[u32], intervals: &[(f64, f64)]) -> Result<TensorGrid> {
    if levels.len() != intervals.len() {
        return Err(Error::DimensionMismatch {
            expected: levels.len(),
            found: intervals.len(),
        });
    }
    if let Some(&l) = levels.iter().find(|&&l| l == 0) {
        return Err(Error::InvalidArgument(alloc::format!(
            "tensor grid level must be >= 1, got {l}"
        )));
    }
    let mut axes = Vec::with_capacity(levels.len());
    for (&l, &iv) in levels.iter().zip(intervals) {
        let rule = Rule::new(l);
        axes.push((map_to_interval(&rule.nodes, iv)?, rule.weights));
    }
    let mut points = vec![Vec::new()];
    let mut weights = vec![1.0];
    for (nodes, ws) in &axes {
        let mut next_p = Vec::with_capacity(points.len() * nodes.len());
        let mut next_w = Vec::with_capacity(points.len() * nodes.len());
        for (p, w) in points.iter().zip(&weights) {
            for (&y, &wy) in nodes.iter().zip(ws) {
                let mut q = p.clone();
                q.push(y);
                next_p.push(q);
                next_w.push(w * wy);
            }
        }
        points = next_p;
        weights = next_w;
    }
    Ok(TensorGrid {
        levels: levels.to_vec(),
        points,
        weights,
    })
}

/// Tensor quadrature of `f` on the reference cube `[-1, 1]^N`.
pub fn tensor_quadrature(levels: &[u32], f: impl Fn(&[f64]) -> f64) -> Result<f64> {
    let grid = tensor_grid(levels, &vec![(-1.0, 1.0); levels.len()])?;
    Ok(grid
        .points
        .iter()
        .zip(&grid.weights)
        .map(|(p, w)| w * f(p))
        .sum())
}

/// Upper estimate of the Lebesgue-type constant of the tensor interpolant.
pub fn lebesgue_estimate(levels: &[u32]) -> f64 {
    levels
        .iter()
        .map(|&l| {
            let q = level_to_nodes(l);
            if q <= 1 {
                1.0
            } else {
                2.0 / PI * libm::log((q - 1) as f64) + 1.0
            }
        })
        .product()
}
