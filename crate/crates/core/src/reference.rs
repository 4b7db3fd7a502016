//! Reference committors used to score trained models.
//!
//! The double well reduces to the one-dimensional problem
//! `q'' − βW'(x) q' = 0` with `W(s) = (s² − 1)²`, `q(−1) = 0`, `q(1) = 1`,
//! whose solution is a ratio of integrals of `e^{βW}`. The rugged Müller
//! surface is solved on a uniform grid in the `(x1, x2)` plane.

use std::io::{Read, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::net::CommittorModel;
use crate::potentials::RuggedMullerParams;

/// Anything that can supply `q*(x)` for a full state vector.
pub trait ReferenceSolution: Sync {
    fn eval(&self, x: &[f64]) -> Result<f64>;
}

impl<F> ReferenceSolution for F
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    fn eval(&self, x: &[f64]) -> Result<f64> {
        self(x)
    }
}

// ---------------------------------------------------------------------------
// one dimension

#[derive(Clone, Debug, PartialEq)]
pub struct Reference1D {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let diff = left + right - whole;
    if depth == 0 || diff.abs() <= 15.0 * tol {
        return left + right + diff / 15.0;
    }
    simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson(&f, a, b, fa, fm, fb, whole, tol, 50)
}

/// `q(x) = ∫_{−1}^x e^{βW} / ∫_{−1}^1 e^{βW}` on `node_count` uniform nodes.
pub fn solve_double_well_1d(beta: f64, node_count: usize) -> Result<Reference1D> {
    if node_count < 100 {
        return Err(Error::Input(format!("node_count must be at least 100, got {node_count}")));
    }
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::Input("beta must be positive and finite".into()));
    }
    let w = |s: f64| (beta * (s * s - 1.0).powi(2)).exp();
    let cells = node_count - 1;
    let h = 2.0 / cells as f64;
    let grid: Vec<f64> = (0..node_count).map(|i| -1.0 + i as f64 * h).collect();
    // absolute tolerance 1e-10 on the normalised profile
    let scale = integrate(w, -1.0, 1.0, 1e-6);
    let tol = 1e-10 * scale / cells as f64;
    let pieces: Vec<f64> = (0..cells).into_par_iter().map(|i| integrate(w, grid[i], grid[i + 1], tol)).collect();
    let mut values = Vec::with_capacity(node_count);
    let mut acc = 0.0;
    values.push(0.0);
    for p in &pieces {
        acc += p;
        values.push(acc);
    }
    for v in &mut values {
        *v /= acc;
    }
    *values.last_mut().unwrap() = 1.0;
    Ok(Reference1D { grid, values })
}

impl Reference1D {
    /// Linear interpolation at `x1`; constant beyond the grid ends.
    pub fn at(&self, x1: f64) -> Result<f64> {
        let lo = self.grid[0];
        let hi = *self.grid.last().unwrap();
        if x1.is_nan() {
            return Err(Error::Input("x1 is NaN".into()));
        }
        // A and B lie beyond the grid ends, where q keeps its boundary value
        if x1 <= lo {
            return Ok(self.values[0]);
        }
        if x1 >= hi {
            return Ok(*self.values.last().unwrap());
        }
        let i = self.grid.partition_point(|&g| g <= x1).clamp(1, self.grid.len() - 1);
        let (x0, x1n) = (self.grid[i - 1], self.grid[i]);
        let t = (x1 - x0) / (x1n - x0);
        Ok(self.values[i - 1] + t * (self.values[i] - self.values[i - 1]))
    }
}

impl ReferenceSolution for Reference1D {
    fn eval(&self, x: &[f64]) -> Result<f64> {
        match x.first() {
            Some(&x1) => self.at(x1),
            None => Err(Error::Input("empty point".into())),
        }
    }
}

// ---------------------------------------------------------------------------
// two dimensions

/// Node labels of a [`Reference2D`] grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum NodeMask {
    Free = 0,
    InA = 1,
    InB = 2,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Reference2D {
    /// Lower-left corner of the grid.
    pub origin: [f64; 2],
    pub spacing: f64,
    /// Nodes per axis (`resolution + 1`).
    pub nx: usize,
    pub ny: usize,
    /// Row-major with `x1` fastest.
    pub mask: Vec<NodeMask>,
    pub values: Vec<f64>,
}

/// A Dirichlet disc in the plane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Disc {
    pub center: [f64; 2],
    pub radius: f64,
    pub value: f64,
}

impl Disc {
    fn contains(&self, p: [f64; 2]) -> bool {
        let dx = p[0] - self.center[0];
        let dy = p[1] - self.center[1];
        dx * dx + dy * dy <= self.radius * self.radius
    }

    /// Fraction `θ ∈ (0, 1]` along `from → to` where the segment first
    /// enters the disc, given `from` outside and `to` inside.
    fn crossing(&self, from: [f64; 2], to: [f64; 2]) -> f64 {
        let d = [to[0] - from[0], to[1] - from[1]];
        let f = [from[0] - self.center[0], from[1] - self.center[1]];
        let a = d[0] * d[0] + d[1] * d[1];
        let b = 2.0 * (f[0] * d[0] + f[1] * d[1]);
        let c = f[0] * f[0] + f[1] * f[1] - self.radius * self.radius;
        let disc = (b * b - 4.0 * a * c).max(0.0);
        // smaller root; c > 0 so both roots share a sign
        let t = (-b - disc.sqrt()) / (2.0 * a);
        t.clamp(0.0, 1.0)
    }
}

/// Smallest admissible cut fraction; keeps the diagonal finite when a node
/// sits on a disc boundary to rounding.
const MIN_THETA: f64 = 1e-8;

/// The domain `[−1.5, 1] × [−0.5, 2]` with the two discs of the rugged Müller problem.
pub const RM_BOX: ([f64; 2], [f64; 2]) = ([-1.5, -0.5], [1.0, 2.0]);
pub const RM_DISC_A: ([f64; 2], f64) = ([-0.57, 1.43], 0.3);
pub const RM_DISC_B: ([f64; 2], f64) = ([0.56, 0.044], 0.3);

/// Solves `∇·(e^{−βṼ}∇q) = 0` with `q = 0` on the A disc, `q = 1` on the B disc
/// and zero flux through the outer rectangle.
pub fn solve_rugged_muller_2d(params: &RuggedMullerParams, temperature: f64, resolution: usize) -> Result<Reference2D> {
    solve_rugged_muller_2d_with(params, temperature, resolution, (0.0, 1.0))
}

/// As [`solve_rugged_muller_2d`] with arbitrary Dirichlet values on the two discs.
pub fn solve_rugged_muller_2d_with(
    params: &RuggedMullerParams,
    temperature: f64,
    resolution: usize,
    values: (f64, f64),
) -> Result<Reference2D> {
    let mut levels = rugged_muller_hierarchy(params, temperature, resolution, values)?;
    Ok(levels.pop().expect("hierarchy is never empty"))
}

/// All refinement levels computed on the way to `resolution`, coarsest first.
pub fn rugged_muller_hierarchy(
    params: &RuggedMullerParams,
    temperature: f64,
    resolution: usize,
    values: (f64, f64),
) -> Result<Vec<Reference2D>> {
    if resolution < 200 {
        return Err(Error::Input(format!("resolution must be at least 200, got {resolution}")));
    }
    if !(temperature > 0.0) {
        return Err(Error::Input("temperature must be positive".into()));
    }
    let discs = [
        Disc {
            center: RM_DISC_A.0,
            radius: RM_DISC_A.1,
            value: values.0,
        },
        Disc {
            center: RM_DISC_B.0,
            radius: RM_DISC_B.1,
            value: values.1,
        },
    ];
    let beta = 1.0 / temperature;
    let v = |x: f64, y: f64| params.surface(x, y);
    solve_hierarchy(RM_BOX.0, RM_BOX.1, resolution, &discs, beta, &v)
}

/// Five-point conservative solve of `∇·(e^{−βV}∇q) = 0` on a rectangle with
/// Dirichlet discs and zero-flux outer edges.
///
/// Links cut by a disc boundary use the distance to the crossing point
/// instead of the grid spacing, which keeps the scheme symmetric and second
/// order without aligning the grid to the circles.
pub fn solve_divergence_form(
    lo: [f64; 2],
    hi: [f64; 2],
    resolution: usize,
    discs: &[Disc],
    beta: f64,
    potential: &(dyn Fn(f64, f64) -> f64 + Sync),
) -> Result<Reference2D> {
    let mut levels = solve_hierarchy(lo, hi, resolution, discs, beta, potential)?;
    Ok(levels.pop().expect("hierarchy is never empty"))
}

/// Solves at `resolution` and every halving of it down to 50 cells, each
/// level warm-started from the one below. Returned coarsest first.
pub fn solve_hierarchy(
    lo: [f64; 2],
    hi: [f64; 2],
    resolution: usize,
    discs: &[Disc],
    beta: f64,
    potential: &(dyn Fn(f64, f64) -> f64 + Sync),
) -> Result<Vec<Reference2D>> {
    let (w, h_y) = (hi[0] - lo[0], hi[1] - lo[1]);
    if (w - h_y).abs() > 1e-12 * w {
        return Err(Error::Input("the grid must be square".into()));
    }
    let h = w / resolution as f64;
    let n = resolution + 1;
    let node = |i: usize, j: usize| [lo[0] + i as f64 * h, lo[1] + j as f64 * h];

    let mut mask = vec![NodeMask::Free; n * n];
    let mut values = vec![0.0; n * n];
    for j in 0..n {
        for i in 0..n {
            let p = node(i, j);
            for (k, d) in discs.iter().enumerate() {
                if d.contains(p) {
                    mask[j * n + i] = if k == 0 { NodeMask::InA } else { NodeMask::InB };
                    values[j * n + i] = d.value;
                    break;
                }
            }
        }
    }
    let disc_of = |m: NodeMask| match m {
        NodeMask::InA => &discs[0],
        NodeMask::InB => &discs[1],
        NodeMask::Free => unreachable!(),
    };

    // shift the exponent so the largest weight is O(1)
    let vmin = (0..n * n)
        .into_par_iter()
        .map(|k| potential(lo[0] + (k % n) as f64 * h, lo[1] + (k / n) as f64 * h))
        .reduce(|| f64::INFINITY, f64::min);
    let rho = |p: [f64; 2]| (-beta * (potential(p[0], p[1]) - vmin)).exp();

    // east and north link weights between free nodes, diagonal, right-hand side
    let mut east = vec![0.0; n * n];
    let mut north = vec![0.0; n * n];
    let mut diag = vec![0.0; n * n];
    let mut rhs = vec![0.0; n * n];
    for j in 0..n {
        for i in 0..n {
            let k = j * n + i;
            if mask[k] != NodeMask::Free {
                continue;
            }
            let p = node(i, j);
            let neighbours = [
                (i + 1 < n, i + 1, j, 0usize),
                (i > 0, i.wrapping_sub(1), j, 0),
                (j + 1 < n, i, j + 1, 1),
                (j > 0, i, j.wrapping_sub(1), 1),
            ];
            for &(ok, ni, nj, axis) in &neighbours {
                if !ok {
                    continue;
                }
                // links along an outer edge carry half a control-volume face
                let on_edge = if axis == 0 { j == 0 || j == n - 1 } else { i == 0 || i == n - 1 };
                let face = if on_edge { 0.5 } else { 1.0 };
                let q = node(ni, nj);
                let nk = nj * n + ni;
                if mask[nk] == NodeMask::Free {
                    let wgt = face * rho([0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]);
                    diag[k] += wgt;
                    if ni > i {
                        east[k] = wgt;
                    } else if nj > j {
                        north[k] = wgt;
                    }
                } else {
                    let d = disc_of(mask[nk]);
                    let theta = d.crossing(p, q).max(MIN_THETA);
                    let mid = [p[0] + 0.5 * theta * (q[0] - p[0]), p[1] + 0.5 * theta * (q[1] - p[1])];
                    let wgt = face * rho(mid) / theta;
                    diag[k] += wgt;
                    rhs[k] += wgt * d.value;
                }
            }
        }
    }

    let op = Stencil {
        n,
        east: &east,
        north: &north,
        diag: &diag,
    };
    let mut levels = if resolution % 2 == 0 && resolution >= 100 {
        solve_hierarchy(lo, hi, resolution / 2, discs, beta, potential)?
    } else {
        Vec::new()
    };
    let coarse = levels.last();
    let mean_bc = discs.iter().map(|d| d.value).sum::<f64>() / discs.len().max(1) as f64;
    let mut guess = vec![0.0; n * n];
    for j in 0..n {
        for i in 0..n {
            let k = j * n + i;
            if mask[k] == NodeMask::Free {
                let p = node(i, j);
                guess[k] = match coarse {
                    Some(c) => c.at(p[0], p[1])?,
                    None => mean_bc,
                };
            }
        }
    }
    let sol = conjugate_gradient(&op, &rhs, guess, 1e-14, 20 * n * n)?;
    for k in 0..n * n {
        if mask[k] == NodeMask::Free {
            values[k] = sol[k];
        }
    }
    levels.push(Reference2D {
        origin: lo,
        spacing: h,
        nx: n,
        ny: n,
        mask,
        values,
    });
    Ok(levels)
}

struct Stencil<'a> {
    n: usize,
    east: &'a [f64],
    north: &'a [f64],
    diag: &'a [f64],
}

impl Stencil<'_> {
    /// `y = A x`. Masked nodes carry zero coefficients, so their rows vanish.
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.n;
        y.par_chunks_mut(n).enumerate().for_each(|(j, row)| {
            let base = j * n;
            for (i, out) in row.iter_mut().enumerate() {
                let k = base + i;
                let mut acc = self.diag[k] * x[k];
                if i + 1 < n {
                    acc -= self.east[k] * x[k + 1];
                }
                if i > 0 {
                    acc -= self.east[k - 1] * x[k - 1];
                }
                if j + 1 < n {
                    acc -= self.north[k] * x[k + n];
                }
                if j > 0 {
                    acc -= self.north[k - n] * x[k - n];
                }
                *out = acc;
            }
        });
    }
}

/// Jacobi-preconditioned conjugate gradients on the free nodes.
///
/// Convergence is measured on the diagonally scaled residual, which removes
/// the large dynamic range of `e^{−βV}`.
fn conjugate_gradient(op: &Stencil, b: &[f64], mut x: Vec<f64>, rel_tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let len = b.len();
    let inv_diag: Vec<f64> = op.diag.iter().map(|&d| if d > 0.0 { 1.0 / d } else { 0.0 }).collect();
    let mut ap = vec![0.0; len];
    op.apply(&x, &mut ap);
    let mut r: Vec<f64> = (0..len).map(|k| if inv_diag[k] > 0.0 { b[k] - ap[k] } else { 0.0 }).collect();
    let b_scaled = b.iter().zip(&inv_diag).map(|(b, s)| (b * s).powi(2)).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, s)| r * s).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(r, z)| r * z).sum();
    let mut res = z.iter().map(|z| z * z).sum::<f64>().sqrt() / b_scaled;
    for _ in 0..max_iter {
        if res <= rel_tol {
            return Ok(x);
        }
        op.apply(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(p, a)| p * a).sum();
        if !(pap > 0.0) {
            return Err(Error::Numeric(format!("conjugate gradients broke down, residual {res:e}")));
        }
        let alpha = rz / pap;
        let mut rz_new = 0.0;
        let mut zz = 0.0;
        for k in 0..len {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
            z[k] = r[k] * inv_diag[k];
            rz_new += r[k] * z[k];
            zz += z[k] * z[k];
        }
        let beta = rz_new / rz;
        rz = rz_new;
        for (p, z) in p.iter_mut().zip(&z) {
            *p = z + beta * *p;
        }
        res = zz.sqrt() / b_scaled;
    }
    Err(Error::Numeric(format!(
        "conjugate gradients did not converge in {max_iter} iterations, relative residual {res:e}"
    )))
}

impl Reference2D {
    /// Bilinear interpolation at `(x1, x2)`.
    pub fn at(&self, x1: f64, x2: f64) -> Result<f64> {
        let h = self.spacing;
        let fx = (x1 - self.origin[0]) / h;
        let fy = (x2 - self.origin[1]) / h;
        let (mx, my) = ((self.nx - 1) as f64, (self.ny - 1) as f64);
        let slack = 1e-9;
        if !(fx >= -slack && fx <= mx + slack && fy >= -slack && fy <= my + slack) {
            return Err(Error::Input(format!("({x1}, {x2}) lies outside the reference grid")));
        }
        let fx = fx.clamp(0.0, mx);
        let fy = fy.clamp(0.0, my);
        let i = (fx.floor() as usize).min(self.nx - 2);
        let j = (fy.floor() as usize).min(self.ny - 2);
        let (tx, ty) = (fx - i as f64, fy - j as f64);
        let v = |i: usize, j: usize| self.values[j * self.nx + i];
        Ok((1.0 - ty) * ((1.0 - tx) * v(i, j) + tx * v(i + 1, j)) + ty * ((1.0 - tx) * v(i, j + 1) + tx * v(i + 1, j + 1)))
    }

    pub fn node(&self, i: usize, j: usize) -> [f64; 2] {
        [self.origin[0] + i as f64 * self.spacing, self.origin[1] + j as f64 * self.spacing]
    }

    /// `h·‖self − finer‖₂` over the nodes of `self` that are free in both
    /// grids. `finer` must have exactly half the spacing.
    pub fn coarse_difference(&self, finer: &Reference2D) -> Result<f64> {
        if finer.nx != 2 * self.nx - 1 || finer.ny != 2 * self.ny - 1 {
            return Err(Error::Input("finer grid must halve the spacing".into()));
        }
        let mut sum = 0.0;
        for j in 0..self.ny {
            for i in 0..self.nx {
                let k = j * self.nx + i;
                let kf = 2 * j * finer.nx + 2 * i;
                if self.mask[k] == NodeMask::Free && finer.mask[kf] == NodeMask::Free {
                    sum += (self.values[k] - finer.values[kf]).powi(2);
                }
            }
        }
        Ok(self.spacing * sum.sqrt())
    }

    const MAGIC: &'static [u8; 8] = b"CMTREF2D";
    const VERSION: u32 = 1;

    /// Writes the grid in a little-endian binary layout: magic, version,
    /// `nx`, `ny` (u64), origin and spacing (f64), one mask byte per node,
    /// then one f64 value per node.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(Self::MAGIC)?;
        w.write_all(&Self::VERSION.to_le_bytes())?;
        w.write_all(&(self.nx as u64).to_le_bytes())?;
        w.write_all(&(self.ny as u64).to_le_bytes())?;
        for v in [self.origin[0], self.origin[1], self.spacing] {
            w.write_all(&v.to_le_bytes())?;
        }
        let mask: Vec<u8> = self.mask.iter().map(|&m| m as u8).collect();
        w.write_all(&mask)?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != Self::MAGIC {
            return Err(Error::Format("not a reference grid file".into()));
        }
        let version = read_u32(&mut r)?;
        if version != Self::VERSION {
            return Err(Error::Format(format!("unsupported reference grid version {version}")));
        }
        let nx = read_u64(&mut r)? as usize;
        let ny = read_u64(&mut r)? as usize;
        if nx < 2 || ny < 2 || nx.checked_mul(ny).is_none_or(|c| c > 1 << 32) {
            return Err(Error::Format(format!("implausible grid size {nx}x{ny}")));
        }
        let origin = [read_f64(&mut r)?, read_f64(&mut r)?];
        let spacing = read_f64(&mut r)?;
        let mut raw = vec![0u8; nx * ny];
        r.read_exact(&mut raw)?;
        let mask = raw
            .into_iter()
            .map(|b| match b {
                0 => Ok(NodeMask::Free),
                1 => Ok(NodeMask::InA),
                2 => Ok(NodeMask::InB),
                other => Err(Error::Format(format!("bad mask byte {other}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        let values = (0..nx * ny).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            origin,
            spacing,
            nx,
            ny,
            mask,
            values,
        })
    }
}

impl ReferenceSolution for Reference2D {
    fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() < 2 {
            return Err(Error::Input("two-dimensional reference needs at least two coordinates".into()));
        }
        self.at(x[0], x[1])
    }
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub(crate) fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

// ---------------------------------------------------------------------------
// error metric

/// `sqrt(Σ(a − b)²) / sqrt(Σ b²)`.
pub fn relative_error_values(approx: &[f64], exact: &[f64]) -> Result<f64> {
    if approx.len() != exact.len() || approx.is_empty() {
        return Err(Error::Input("relative error needs two nonempty vectors of equal length".into()));
    }
    let num: f64 = approx.iter().zip(exact).map(|(a, b)| (a - b) * (a - b)).sum();
    let den: f64 = exact.iter().map(|b| b * b).sum();
    if den == 0.0 {
        return Err(Error::Input("reference values vanish on the validation set".into()));
    }
    Ok((num / den).sqrt())
}

/// Relative L² error of `model` against `reference` over `validation` points.
pub fn relative_error(model: &CommittorModel, reference: &dyn ReferenceSolution, validation: &[Vec<f64>]) -> Result<f64> {
    if validation.is_empty() {
        return Err(Error::Input("validation set is empty".into()));
    }
    let d = model.dim();
    let mut flat = Vec::with_capacity(validation.len() * d);
    for p in validation {
        crate::error::check_dim(d, p.len())?;
        flat.extend_from_slice(p);
    }
    let q = model.eval_batch(&flat, validation.len())?;
    let exact = validation.par_iter().map(|p| reference.eval(p)).collect::<Result<Vec<_>>>()?;
    relative_error_values(&q, &exact)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn simpson_polynomial_and_exp() {
        assert_abs_diff_eq!(integrate(|x| x * x * x, 0.0, 2.0, 1e-12), 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(integrate(f64::exp, 0.0, 1.0, 1e-12), std::f64::consts::E - 1.0, epsilon = 1e-11);
    }

    #[test]
    fn one_d_boundary_values_and_symmetry() {
        let r = solve_double_well_1d(2.0, 201).unwrap();
        assert_eq!(r.values[0], 0.0);
        assert_eq!(*r.values.last().unwrap(), 1.0);
        assert_abs_diff_eq!(r.at(0.0).unwrap(), 0.5, epsilon = 1e-10);
        assert!(r.values.windows(2).all(|w| w[1] >= w[0]));
        assert_eq!(r.at(1.2).unwrap(), 1.0);
        assert_eq!(r.at(-7.0).unwrap(), 0.0);
        assert!(r.at(f64::NAN).is_err());
        assert!(solve_double_well_1d(2.0, 99).is_err());
    }

    #[test]
    fn one_d_interpolation_is_linear_between_nodes() {
        let r = solve_double_well_1d(1.0, 101).unwrap();
        let (a, b) = (r.grid[10], r.grid[11]);
        let mid = r.at(0.5 * (a + b)).unwrap();
        assert_abs_diff_eq!(mid, 0.5 * (r.values[10] + r.values[11]), epsilon = 1e-15);
    }

    #[test]
    fn crossing_fraction() {
        let d = Disc {
            center: [0.0, 0.0],
            radius: 1.0,
            value: 0.0,
        };
        assert_abs_diff_eq!(d.crossing([2.0, 0.0], [0.0, 0.0]), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(d.crossing([1.5, 0.0], [0.5, 0.0]), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn two_d_mirror_symmetric_problem() {
        // swapping x ↦ 1 − x exchanges the discs, so q + q∘mirror = 1
        let discs = [
            Disc {
                center: [0.2, 0.5],
                radius: 0.1,
                value: 0.0,
            },
            Disc {
                center: [0.8, 0.5],
                radius: 0.1,
                value: 1.0,
            },
        ];
        let r = solve_divergence_form([0.0, 0.0], [1.0, 1.0], 40, &discs, 1.0, &|_, _| 0.0).unwrap();
        assert!(r.values.iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert_abs_diff_eq!(r.at(0.5, 0.5).unwrap(), 0.5, epsilon = 1e-8);
    }

    #[test]
    fn grid_file_round_trip() {
        let discs = [Disc {
            center: [0.5, 0.5],
            radius: 0.2,
            value: 1.0,
        }];
        let r = solve_divergence_form([0.0, 0.0], [1.0, 1.0], 10, &discs, 1.0, &|x, _| x).unwrap();
        let mut buf = Vec::new();
        r.write_to(&mut buf).unwrap();
        assert_eq!(Reference2D::read_from(buf.as_slice()).unwrap(), r);
        buf[0] = b'X';
        assert!(matches!(Reference2D::read_from(buf.as_slice()), Err(Error::Format(_))));
    }

    #[test]
    fn relative_error_scaling() {
        let exact = [0.2, 0.5, 0.9];
        assert_eq!(relative_error_values(&exact, &exact).unwrap(), 0.0);
        let doubled: Vec<f64> = exact.iter().map(|v| 2.0 * v).collect();
        assert_abs_diff_eq!(relative_error_values(&doubled, &exact).unwrap(), 1.0, epsilon = 1e-15);
        assert!(relative_error_values(&[], &[]).is_err());
    }
}
