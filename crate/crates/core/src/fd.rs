//! Tensorized finite differences for `-div(a grad u) = f` on `[0, 1]^d` with
//! homogeneous Dirichlet conditions.
//!
//! Direction `i` has mesh size `h_i = h0 2^-alpha_i` and `n_i = 1/h_i - 1`
//! interior nodes at `x = k h_i`, `k = 1..=n_i`. The flux along direction `i`
//! uses `a` at the half points `x +- h_i e_i / 2`, which gives a symmetric
//! positive definite, second-order operator. Unknowns are stored with the
//! first direction varying fastest.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::field::{FieldSpec, QoiSpec};

/// Default refusal threshold for linear systems.
pub const DEFAULT_DOF_CAP: usize = 1 << 17;

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    alpha: Vec<u32>,
    h0: f64,
    h: Vec<f64>,
    n: Vec<usize>,
    strides: Vec<usize>,
}

/// Grid for spatial level `alpha` and base mesh size `h0` (`1/h0` integer).
pub fn build_grid(alpha: &[u32], h0: f64) -> Result<Grid> {
    let inv = 1.0 / h0;
    let cells0 = libm::round(inv);
    if !(h0 > 0.0) || (inv - cells0).abs() > 1e-9 * inv.max(1.0) || cells0 < 1.0 {
        return Err(Error::NonIntegerMeshRatio(inv));
    }
    if alpha.is_empty() {
        return Err(Error::InvalidArgument("spatial level must have D >= 1".into()));
    }
    if let Some(&a) = alpha.iter().find(|&&a| a == 0) {
        return Err(Error::InvalidArgument(alloc::format!(
            "spatial level components must be >= 1, got {a}"
        )));
    }
    let cells0 = cells0 as usize;
    let n: Vec<usize> = alpha.iter().map(|&a| (cells0 << a) - 1).collect();
    let h = alpha
        .iter()
        .map(|&a| 1.0 / (cells0 << a) as f64)
        .collect();
    let mut strides = Vec::with_capacity(n.len());
    let mut s = 1;
    for &ni in &n {
        strides.push(s);
        s *= ni;
    }
    Ok(Grid {
        alpha: alpha.to_vec(),
        h0,
        h,
        n,
        strides,
    })
}

impl Grid {
    pub fn alpha(&self) -> &[u32] {
        &self.alpha
    }

    pub fn h0(&self) -> f64 {
        self.h0
    }

    pub fn dim(&self) -> usize {
        self.n.len()
    }

    /// Mesh sizes per direction.
    pub fn spacing(&self) -> &[f64] {
        &self.h
    }

    /// Interior nodes per direction.
    pub fn extents(&self) -> &[usize] {
        &self.n
    }

    pub fn dof(&self) -> usize {
        self.n.iter().product()
    }

    /// Interior coordinates along one direction.
    pub fn coordinates(&self, dir: usize) -> Vec<f64> {
        (1..=self.n[dir]).map(|k| k as f64 * self.h[dir]).collect()
    }

    /// Physical point of the node with linear index `p`.
    pub fn node_point(&self, p: usize) -> Vec<f64> {
        let mut rest = p;
        self.n
            .iter()
            .zip(&self.h)
            .map(|(&ni, &hi)| {
                let k = rest % ni;
                rest /= ni;
                (k + 1) as f64 * hi
            })
            .collect()
    }

    fn cell_volume(&self) -> f64 {
        self.h.iter().product()
    }

    /// Extents of the face array of direction `dir`.
    fn face_extents(&self, dir: usize) -> Vec<usize> {
        let mut e = self.n.clone();
        e[dir] += 1;
        e
    }

    /// Physical point of face `f` (linear index) of direction `dir`.
    fn face_point(&self, dir: usize, f: usize) -> Vec<f64> {
        let mut rest = f;
        self.face_extents(dir)
            .iter()
            .enumerate()
            .map(|(j, &e)| {
                let k = rest % e;
                rest /= e;
                if j == dir {
                    (k as f64 + 0.5) * self.h[j]
                } else {
                    (k + 1) as f64 * self.h[j]
                }
            })
            .collect()
    }

    fn face_count(&self, dir: usize) -> usize {
        self.face_extents(dir).iter().product()
    }
}

/// Degrees of freedom and the `prod h_i^-theta` work model of one solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorkTally {
    pub dof: usize,
    pub solver_iterations: usize,
    pub model_work: f64,
}

pub fn work_of_solve(grid: &Grid, theta: f64) -> WorkTally {
    WorkTally {
        dof: grid.dof(),
        solver_iterations: 0,
        model_work: grid.h.iter().map(|h| libm::pow(*h, -theta)).product(),
    }
}

/// Assembled operator in stencil form plus right-hand side.
#[derive(Debug, Clone)]
pub struct StencilSystem {
    grid: Grid,
    /// Diffusion coefficient at the faces of each direction.
    faces: Vec<Vec<f64>>,
    rhs: Vec<f64>,
}

/// Assemble with a general coefficient and source.
pub fn assemble(
    grid: &Grid,
    coefficient: impl Fn(&[f64]) -> f64,
    source: impl Fn(&[f64]) -> f64,
) -> StencilSystem {
    let faces = (0..grid.dim())
        .map(|dir| {
            (0..grid.face_count(dir))
                .map(|f| coefficient(&grid.face_point(dir, f)))
                .collect()
        })
        .collect();
    let rhs = (0..grid.dof()).map(|p| source(&grid.node_point(p))).collect();
    StencilSystem {
        grid: grid.clone(),
        faces,
        rhs,
    }
}

/// Assemble the random-coefficient problem at parameter `y` with `f = 1`.
pub fn assemble_field(field: &FieldSpec, y: &[f64], grid: &Grid) -> StencilSystem {
    assemble(grid, |x| field.diffusion(x, y), |_| 1.0)
}

impl StencilSystem {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    fn face_strides(&self, dir: usize) -> Vec<usize> {
        let mut strides = Vec::with_capacity(self.grid.dim());
        let mut s = 1;
        for e in self.grid.face_extents(dir) {
            strides.push(s);
            s *= e;
        }
        strides
    }

    /// Visit every node with its multi-index.
    fn for_each_node(&self, mut visit: impl FnMut(usize, &[usize])) {
        let n = &self.grid.n;
        let mut k = vec![0usize; n.len()];
        for p in 0..self.grid.dof() {
            visit(p, &k);
            for (kj, &nj) in k.iter_mut().zip(n) {
                *kj += 1;
                if *kj < nj {
                    break;
                }
                *kj = 0;
            }
        }
    }

    /// Lower/upper face coefficients of node `k` along `dir`, scaled by `1/h^2`.
    fn couplings(&self, dir: usize, k: &[usize], fstrides: &[usize]) -> (f64, f64) {
        let lo: usize = k.iter().zip(fstrides).map(|(a, b)| a * b).sum();
        let inv_h2 = 1.0 / (self.grid.h[dir] * self.grid.h[dir]);
        (
            self.faces[dir][lo] * inv_h2,
            self.faces[dir][lo + fstrides[dir]] * inv_h2,
        )
    }

    /// Matrix-vector product `out = A x`.
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        let fstrides: Vec<Vec<usize>> = (0..self.grid.dim()).map(|d| self.face_strides(d)).collect();
        let n = &self.grid.n;
        let strides = &self.grid.strides;
        self.for_each_node(|p, k| {
            let mut acc = 0.0;
            for dir in 0..n.len() {
                let (lo, hi) = self.couplings(dir, k, &fstrides[dir]);
                acc += (lo + hi) * x[p];
                if k[dir] > 0 {
                    acc -= lo * x[p - strides[dir]];
                }
                if k[dir] + 1 < n[dir] {
                    acc -= hi * x[p + strides[dir]];
                }
            }
            out[p] = acc;
        });
    }

    /// Nonzero entries `(row, col, value)` of the operator.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let fstrides: Vec<Vec<usize>> = (0..self.grid.dim()).map(|d| self.face_strides(d)).collect();
        let n = &self.grid.n;
        let strides = &self.grid.strides;
        let mut out = Vec::new();
        self.for_each_node(|p, k| {
            let mut diag = 0.0;
            for dir in 0..n.len() {
                let (lo, hi) = self.couplings(dir, k, &fstrides[dir]);
                diag += lo + hi;
                if k[dir] > 0 {
                    out.push((p, p - strides[dir], -lo));
                }
                if k[dir] + 1 < n[dir] {
                    out.push((p, p + strides[dir], -hi));
                }
            }
            out.push((p, p, diag));
        });
        out.sort_by_key(|a| (a.0, a.1));
        out
    }

    fn diagonal(&self) -> Vec<f64> {
        let fstrides: Vec<Vec<usize>> = (0..self.grid.dim()).map(|d| self.face_strides(d)).collect();
        let mut diag = vec![0.0; self.grid.dof()];
        self.for_each_node(|p, k| {
            diag[p] = (0..k.len())
                .map(|dir| {
                    let (lo, hi) = self.couplings(dir, k, &fstrides[dir]);
                    lo + hi
                })
                .sum();
        });
        diag
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Relative residual target `||r|| <= tol ||b||`.
    pub tol: f64,
    /// Iteration cap as a multiple of the number of unknowns.
    pub max_iter_factor: usize,
    pub dof_cap: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter_factor: 10,
            dof_cap: DEFAULT_DOF_CAP,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DiscreteSolution {
    pub values: Vec<f64>,
    pub grid: Grid,
    pub iterations: usize,
    /// Final relative residual `||b - A u|| / ||b||`.
    pub residual: f64,
}

/// Solve the assembled system: tridiagonal elimination in one dimension,
/// line-preconditioned conjugate gradients otherwise.
pub fn solve(system: &StencilSystem, opts: &SolverOptions) -> Result<DiscreteSolution> {
    let dof = system.grid.dof();
    if dof > opts.dof_cap {
        return Err(Error::DofCapExceeded {
            dof,
            cap: opts.dof_cap,
        });
    }
    let (values, iterations) = if system.grid.dim() == 1 {
        (solve_tridiagonal_1d(system), 0)
    } else {
        pcg(system, opts)?
    };
    let residual = relative_residual(system, &values);
    Ok(DiscreteSolution {
        values,
        grid: system.grid.clone(),
        iterations,
        residual,
    })
}

fn norm(v: &[f64]) -> f64 {
    libm::sqrt(v.iter().map(|x| x * x).sum())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn relative_residual(system: &StencilSystem, u: &[f64]) -> f64 {
    let mut au = vec![0.0; u.len()];
    system.apply(u, &mut au);
    let r: Vec<f64> = system.rhs.iter().zip(&au).map(|(b, a)| b - a).collect();
    let bn = norm(&system.rhs);
    if bn == 0.0 {
        norm(&r)
    } else {
        norm(&r) / bn
    }
}

/// Thomas algorithm; `lower[k]` couples `k` to `k-1`, `upper[k]` to `k+1`.
fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &mut [f64], scratch: &mut [f64]) {
    let n = diag.len();
    let mut denom = diag[0];
    scratch[0] = upper[0] / denom;
    rhs[0] /= denom;
    for k in 1..n {
        denom = diag[k] - lower[k] * scratch[k - 1];
        scratch[k] = upper[k] / denom;
        rhs[k] = (rhs[k] - lower[k] * rhs[k - 1]) / denom;
    }
    for k in (0..n - 1).rev() {
        rhs[k] -= scratch[k] * rhs[k + 1];
    }
}

fn solve_tridiagonal_1d(system: &StencilSystem) -> Vec<f64> {
    let n = system.grid.n[0];
    let inv_h2 = 1.0 / (system.grid.h[0] * system.grid.h[0]);
    let a = &system.faces[0];
    let diag: Vec<f64> = (0..n).map(|k| (a[k] + a[k + 1]) * inv_h2).collect();
    let lower: Vec<f64> = (0..n).map(|k| -a[k] * inv_h2).collect();
    let upper: Vec<f64> = (0..n).map(|k| -a[k + 1] * inv_h2).collect();
    let mut x = system.rhs.clone();
    let mut scratch = vec![0.0; n];
    thomas(&lower, &diag, &upper, &mut x, &mut scratch);
    x
}

/// Block-Jacobi preconditioner made of the tridiagonal lines along one
/// direction (the most refined one, where the operator is stiffest).
struct LinePreconditioner {
    dir: usize,
    len: usize,
    stride: usize,
    starts: Vec<usize>,
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
}

impl LinePreconditioner {
    fn new(system: &StencilSystem) -> Self {
        let grid = &system.grid;
        let dir = (0..grid.dim())
            .max_by(|&a, &b| grid.n[a].cmp(&grid.n[b]).then(b.cmp(&a)))
            .unwrap_or(0);
        let len = grid.n[dir];
        let stride = grid.strides[dir];
        let diag_full = system.diagonal();
        let fstrides = system.face_strides(dir);
        let dof = grid.dof();
        let mut lower = vec![0.0; dof];
        let mut upper = vec![0.0; dof];
        let mut diag = vec![0.0; dof];
        let mut starts = Vec::with_capacity(dof / len);
        // Reorder so each line is contiguous: slot = line * len + position.
        let mut line_of = vec![0usize; dof];
        system.for_each_node(|p, k| {
            if k[dir] == 0 {
                line_of[p] = starts.len();
                starts.push(p);
            }
        });
        system.for_each_node(|p, k| {
            let line = line_of[p - k[dir] * stride];
            let slot = line * len + k[dir];
            let (lo, hi) = system.couplings(dir, k, &fstrides);
            diag[slot] = diag_full[p];
            lower[slot] = -lo;
            upper[slot] = -hi;
        });
        Self {
            dir,
            len,
            stride,
            starts,
            lower,
            diag,
            upper,
        }
    }

    fn apply(&self, r: &[f64], z: &mut [f64], buf: &mut [f64], scratch: &mut [f64]) {
        for (line, &start) in self.starts.iter().enumerate() {
            let off = line * self.len;
            for k in 0..self.len {
                buf[k] = r[start + k * self.stride];
            }
            thomas(
                &self.lower[off..off + self.len],
                &self.diag[off..off + self.len],
                &self.upper[off..off + self.len],
                &mut buf[..self.len],
                &mut scratch[..self.len],
            );
            for k in 0..self.len {
                z[start + k * self.stride] = buf[k];
            }
        }
    }
}

fn pcg(system: &StencilSystem, opts: &SolverOptions) -> Result<(Vec<f64>, usize)> {
    let dof = system.grid.dof();
    let b = &system.rhs;
    let bn = norm(b);
    let mut x = vec![0.0; dof];
    if bn == 0.0 {
        return Ok((x, 0));
    }
    let pre = LinePreconditioner::new(system);
    debug_assert!(pre.dir < system.grid.dim());
    let mut buf = vec![0.0; pre.len];
    let mut scratch = vec![0.0; pre.len];
    let mut r = b.clone();
    let mut z = vec![0.0; dof];
    pre.apply(&r, &mut z, &mut buf, &mut scratch);
    let mut p = z.clone();
    let mut ap = vec![0.0; dof];
    let mut rz = dot(&r, &z);
    let cap = opts.max_iter_factor.saturating_mul(dof).max(1);
    let target = opts.tol * bn;
    for it in 1..=cap {
        system.apply(&p, &mut ap);
        let step = rz / dot(&p, &ap);
        for i in 0..dof {
            x[i] += step * p[i];
            r[i] -= step * ap[i];
        }
        if norm(&r) <= target {
            return Ok((x, it));
        }
        pre.apply(&r, &mut z, &mut buf, &mut scratch);
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..dof {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::NotConverged {
        iterations: cap,
        residual: norm(&r) / bn,
    })
}

/// Tensor trapezoidal weights `Q(x_k) prod h_i` on the interior nodes; the
/// boundary terms vanish with `u`.
pub fn qoi_weights(grid: &Grid, qoi: &QoiSpec) -> Vec<f64> {
    let vol = grid.cell_volume();
    (0..grid.dof())
        .map(|p| qoi.weight(&grid.node_point(p)) * vol)
        .collect()
}

/// Discrete `int u_h Q dx`.
pub fn evaluate_qoi(solution: &DiscreteSolution, qoi: &QoiSpec) -> f64 {
    dot(&solution.values, &qoi_weights(&solution.grid, qoi))
}

/// Per-level precomputation for the random-coefficient problem: `psi_n` at
/// every face and the QoI weights at every node, reused across `y`.
#[derive(Debug, Clone)]
pub struct FieldDiscretization {
    grid: Grid,
    lambdas: Vec<f64>,
    /// `psi[dir][face * n_vars + n]`.
    psi: Vec<Vec<f64>>,
    qoi_weights: Vec<f64>,
}

impl FieldDiscretization {
    pub fn new(
        field: &FieldSpec,
        qoi: &QoiSpec,
        alpha: &[u32],
        h0: f64,
        dof_cap: usize,
    ) -> Result<Self> {
        if alpha.len() != field.dim() || qoi.dim() != field.dim() {
            return Err(Error::DimensionMismatch {
                expected: field.dim(),
                found: alpha.len(),
            });
        }
        let grid = build_grid(alpha, h0)?;
        if grid.dof() > dof_cap {
            return Err(Error::DofCapExceeded {
                dof: grid.dof(),
                cap: dof_cap,
            });
        }
        let nv = field.n_vars();
        let psi = (0..grid.dim())
            .map(|dir| {
                let mut v = Vec::with_capacity(grid.face_count(dir) * nv);
                for f in 0..grid.face_count(dir) {
                    let x = grid.face_point(dir, f);
                    v.extend((1..=nv).map(|n| field.psi_unchecked(n, &x)));
                }
                v
            })
            .collect();
        let qoi_weights = qoi_weights(&grid, qoi);
        Ok(Self {
            grid,
            lambdas: field.lambdas().to_vec(),
            psi,
            qoi_weights,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn system(&self, y: &[f64]) -> StencilSystem {
        let nv = self.lambdas.len();
        let scaled: Vec<f64> = self.lambdas.iter().zip(y).map(|(l, y)| l * y).collect();
        let faces = self
            .psi
            .iter()
            .map(|psi| {
                psi.chunks_exact(nv.max(1))
                    .map(|modes| {
                        libm::exp(modes.iter().zip(&scaled).map(|(p, s)| p * s).sum::<f64>())
                    })
                    .collect()
            })
            .collect();
        StencilSystem {
            grid: self.grid.clone(),
            faces,
            rhs: vec![1.0; self.grid.dof()],
        }
    }

    /// `F^alpha(y)` together with the solver iteration count.
    pub fn evaluate(&self, y: &[f64], opts: &SolverOptions) -> Result<(f64, usize)> {
        let sol = solve(&self.system(y), opts)?;
        Ok((dot(&sol.values, &self.qoi_weights), sol.iterations))
    }
}
