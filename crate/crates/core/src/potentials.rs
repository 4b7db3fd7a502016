//! Potential energy landscapes, metastable regions and boundary samplers.
//!
//! Three landscapes are provided:
//!
//! * the double well `V(x) = (x1² − 1)² + 0.3 Σ_{i≥2} xi²` with half-space
//!   regions `A = {x1 ≤ −1}`, `B = {x1 ≥ 1}`;
//! * the rugged Müller–Brown surface in `(x1, x2)` plus stiff harmonic
//!   confinement of the remaining coordinates, with cylindrical regions;
//! * a finite-difference discretisation of the 1D Ginzburg–Landau energy, with
//!   spherical regions around its two minimisers.
//!
//! Points exactly on a region boundary count as inside the region.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Parameters of the rugged Müller–Brown surface.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuggedMullerParams {
    pub a: [f64; 4],
    pub b: [f64; 4],
    pub c: [f64; 4],
    #[serde(rename = "D")]
    pub depth: [f64; 4],
    #[serde(rename = "X")]
    pub x0: [f64; 4],
    #[serde(rename = "Y")]
    pub y0: [f64; 4],
    pub gamma: f64,
    pub k: f64,
    pub sigma: f64,
}

impl Default for RuggedMullerParams {
    fn default() -> Self {
        Self {
            a: [-1.0, -1.0, -6.5, 0.7],
            b: [0.0, 0.0, 11.0, 0.6],
            c: [-10.0, -10.0, -6.5, 0.7],
            depth: [-200.0, -100.0, -170.0, 15.0],
            x0: [1.0, 0.0, -0.5, -1.0],
            y0: [0.0, 0.5, 1.5, 1.0],
            gamma: 9.0,
            k: 5.0,
            sigma: 0.05,
        }
    }
}

impl RuggedMullerParams {
    /// The two-dimensional surface `Ṽ(x1, x2)`.
    pub fn surface(&self, x1: f64, x2: f64) -> f64 {
        let mut v = 0.0;
        for i in 0..4 {
            let dx = x1 - self.x0[i];
            let dy = x2 - self.y0[i];
            v += self.depth[i] * (self.a[i] * dx * dx + self.b[i] * dx * dy + self.c[i] * dy * dy).exp();
        }
        let w = 2.0 * self.k * std::f64::consts::PI;
        v + self.gamma * (w * x1).sin() * (w * x2).sin()
    }

    /// Gradient of [`surface`](Self::surface).
    pub fn surface_grad(&self, x1: f64, x2: f64) -> [f64; 2] {
        let mut g = [0.0, 0.0];
        for i in 0..4 {
            let dx = x1 - self.x0[i];
            let dy = x2 - self.y0[i];
            let e = self.depth[i] * (self.a[i] * dx * dx + self.b[i] * dx * dy + self.c[i] * dy * dy).exp();
            g[0] += e * (2.0 * self.a[i] * dx + self.b[i] * dy);
            g[1] += e * (self.b[i] * dx + 2.0 * self.c[i] * dy);
        }
        let w = 2.0 * self.k * std::f64::consts::PI;
        let (s1, c1) = (w * x1).sin_cos();
        let (s2, c2) = (w * x2).sin_cos();
        g[0] += self.gamma * w * c1 * s2;
        g[1] += self.gamma * w * s1 * c2;
        g
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum PotentialKind {
    DoubleWell,
    RuggedMuller(RuggedMullerParams),
    /// Discrete Ginzburg–Landau energy with `lambda` and grid size `h = 1/(d+1)`.
    GinzburgLandau { lambda: f64, h: f64 },
}

/// Axis-aligned box in two coordinates; the sampler reflects off its walls.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReflectingBox {
    pub coords: [usize; 2],
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

impl ReflectingBox {
    /// Mirror `x` back into the box. Large excursions are folded repeatedly.
    pub fn reflect(&self, x: &mut [f64]) {
        for k in 0..2 {
            let (lo, hi) = (self.lo[k], self.hi[k]);
            let width = hi - lo;
            let v = &mut x[self.coords[k]];
            if *v >= lo && *v <= hi {
                continue;
            }
            // fold onto a period of length 2·width
            let mut t = (*v - lo).rem_euclid(2.0 * width);
            if t > width {
                t = 2.0 * width - t;
            }
            *v = lo + t;
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        (0..2).all(|k| {
            let v = x[self.coords[k]];
            v >= self.lo[k] && v <= self.hi[k]
        })
    }
}

/// A potential landscape of fixed dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub kind: PotentialKind,
    pub dim: usize,
    /// Present for landscapes posed on a truncated domain.
    pub domain: Option<ReflectingBox>,
}

impl PotentialSpec {
    pub fn double_well(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::Input(format!("double well needs d >= 2, got {dim}")));
        }
        Ok(Self {
            kind: PotentialKind::DoubleWell,
            dim,
            domain: None,
        })
    }

    /// Rugged Müller–Brown landscape on `[−1.5, 1] × [−0.5, 2] × R^{d−2}`.
    pub fn rugged_muller(dim: usize, params: RuggedMullerParams) -> Result<Self> {
        if dim < 2 {
            return Err(Error::Input(format!("rugged Muller needs d >= 2, got {dim}")));
        }
        if params.sigma <= 0.0 {
            return Err(Error::Input("rugged Muller sigma must be positive".into()));
        }
        Ok(Self {
            kind: PotentialKind::RuggedMuller(params),
            dim,
            domain: Some(ReflectingBox {
                coords: [0, 1],
                lo: [-1.5, -0.5],
                hi: [1.0, 2.0],
            }),
        })
    }

    /// Discrete Ginzburg–Landau energy; `h` must equal `1/(d+1)`.
    pub fn ginzburg_landau(lambda: f64, h: f64) -> Result<Self> {
        if !(lambda > 0.0) || !(h > 0.0) || h >= 1.0 {
            return Err(Error::Input(format!("invalid Ginzburg-Landau lambda={lambda} h={h}")));
        }
        let d = 1.0 / h - 1.0;
        let dim = d.round();
        if (d - dim).abs() > 1e-9 || dim < 1.0 {
            return Err(Error::Input(format!("1/h - 1 must be a positive integer, got {d}")));
        }
        Ok(Self {
            kind: PotentialKind::GinzburgLandau { lambda, h },
            dim: dim as usize,
            domain: None,
        })
    }

    pub fn energy(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim, x.len())?;
        Ok(self.energy_unchecked(x))
    }

    pub fn grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, x.len())?;
        let mut g = vec![0.0; self.dim];
        self.grad_into(x, &mut g);
        Ok(g)
    }

    pub(crate) fn energy_unchecked(&self, x: &[f64]) -> f64 {
        match &self.kind {
            PotentialKind::DoubleWell => {
                let w = x[0] * x[0] - 1.0;
                w * w + 0.3 * x[1..].iter().map(|v| v * v).sum::<f64>()
            }
            PotentialKind::RuggedMuller(p) => {
                let tail: f64 = x[2..].iter().map(|v| v * v).sum();
                p.surface(x[0], x[1]) + tail / (2.0 * p.sigma * p.sigma)
            }
            PotentialKind::GinzburgLandau { lambda, h } => {
                let n = x.len();
                let mut v = 0.0;
                let mut prev = 0.0;
                for i in 0..=n {
                    let u = if i < n { x[i] } else { 0.0 };
                    let du = (u - prev) / h;
                    let w = 1.0 - u * u;
                    v += 0.5 * lambda * du * du + w * w / (4.0 * lambda);
                    prev = u;
                }
                v
            }
        }
    }

    /// Writes `∇V(x)` into `g`; both slices must have length `dim`.
    pub fn grad_into(&self, x: &[f64], g: &mut [f64]) {
        match &self.kind {
            PotentialKind::DoubleWell => {
                g[0] = 4.0 * x[0] * (x[0] * x[0] - 1.0);
                for (gi, xi) in g[1..].iter_mut().zip(&x[1..]) {
                    *gi = 0.6 * xi;
                }
            }
            PotentialKind::RuggedMuller(p) => {
                let [g1, g2] = p.surface_grad(x[0], x[1]);
                g[0] = g1;
                g[1] = g2;
                let stiff = 1.0 / (p.sigma * p.sigma);
                for (gi, xi) in g[2..].iter_mut().zip(&x[2..]) {
                    *gi = stiff * xi;
                }
            }
            PotentialKind::GinzburgLandau { lambda, h } => {
                let n = x.len();
                let coupling = lambda / (h * h);
                for k in 0..n {
                    let left = if k > 0 { x[k - 1] } else { 0.0 };
                    let right = if k + 1 < n { x[k + 1] } else { 0.0 };
                    let u = x[k];
                    g[k] = coupling * (2.0 * u - left - right) - u * (1.0 - u * u) / lambda;
                }
            }
        }
    }
}

/// The two local minimisers of the discrete Ginzburg–Landau energy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GLMinimizers {
    pub u_minus: Vec<f64>,
    pub u_plus: Vec<f64>,
}

impl GLMinimizers {
    /// Gradient descent from the profile `sin(πx)` until `‖∇V‖ ≤ tol`.
    /// `u_minus` is the exact mirror image of `u_plus`.
    pub fn compute(spec: &PotentialSpec, tol: f64) -> Result<Self> {
        let (lambda, h) = match spec.kind {
            PotentialKind::GinzburgLandau { lambda, h } => (lambda, h),
            _ => return Err(Error::Input("minimisers only defined for Ginzburg-Landau".into())),
        };
        let n = spec.dim;
        let mut u: Vec<f64> = (1..=n)
            .map(|i| (std::f64::consts::PI * i as f64 * h).sin())
            .collect();
        // Lipschitz bound of the gradient on |u| <= 1.5
        let lip = 4.0 * lambda / (h * h) + (3.0 * 2.25 + 1.0) / lambda;
        let step = 1.0 / lip;
        let mut g = vec![0.0; n];
        for _ in 0..1_000_000 {
            spec.grad_into(&u, &mut g);
            let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm <= tol {
                let u_minus = u.iter().map(|v| -v).collect();
                return Ok(Self { u_minus, u_plus: u });
            }
            for (ui, gi) in u.iter_mut().zip(&g) {
                *ui -= step * gi;
            }
        }
        Err(Error::Numeric("Ginzburg-Landau minimisation did not converge".into()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Which {
    A,
    B,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Membership {
    Interior,
    InA,
    InB,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum RegionKind {
    /// `A = {x[axis] ≤ a_level}`, `B = {x[axis] ≥ b_level}`.
    HalfSpacePair { axis: usize, a_level: f64, b_level: f64 },
    /// Discs of `radius` in the coordinate pair `coords`, extended along all others.
    CylinderPair { coords: [usize; 2], radius: f64 },
    /// Euclidean balls of `radius`.
    SpherePair { radius: f64 },
}

/// The metastable sets `A` and `B`.
///
/// `transverse_std` is the standard deviation used for the coordinates not
/// pinned by the boundary when sampling half-space and cylinder boundaries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionSpec {
    pub kind: RegionKind,
    pub center_a: Vec<f64>,
    pub center_b: Vec<f64>,
    pub transverse_std: f64,
}

impl RegionSpec {
    pub fn new(kind: RegionKind, center_a: Vec<f64>, center_b: Vec<f64>, transverse_std: f64) -> Result<Self> {
        check_dim(center_a.len(), center_b.len())?;
        let region = Self {
            kind,
            center_a,
            center_b,
            transverse_std,
        };
        let d = region.dim();
        match &region.kind {
            RegionKind::HalfSpacePair { axis, a_level, b_level } => {
                if *axis >= d || a_level >= b_level {
                    return Err(Error::Input("half spaces must be disjoint and axis in range".into()));
                }
            }
            RegionKind::CylinderPair { coords, radius } => {
                if coords[0] >= d || coords[1] >= d || coords[0] == coords[1] || *radius < 0.0 {
                    return Err(Error::Input("invalid cylinder coordinates or radius".into()));
                }
                let sep = region.projected_sq(&region.center_a, &region.center_b, *coords).sqrt();
                if sep <= 2.0 * radius {
                    return Err(Error::Input("cylinders A and B overlap".into()));
                }
            }
            RegionKind::SpherePair { radius } => {
                if *radius < 0.0 {
                    return Err(Error::Input("negative sphere radius".into()));
                }
                if dist_sq(&region.center_a, &region.center_b).sqrt() <= 2.0 * radius {
                    return Err(Error::Input("spheres A and B overlap".into()));
                }
            }
        }
        if region.classify_unchecked(&region.center_a) != Membership::InA
            || region.classify_unchecked(&region.center_b) != Membership::InB
        {
            return Err(Error::Input("region centers must lie inside their regions".into()));
        }
        Ok(region)
    }

    /// `{x1 ≤ −1}` and `{x1 ≥ 1}`; transverse coordinates on the boundary are
    /// drawn from `exp(−0.3 β xi²)`.
    pub fn double_well(dim: usize, temperature: f64) -> Result<Self> {
        let mut a = vec![0.0; dim];
        let mut b = vec![0.0; dim];
        a[0] = -1.0;
        b[0] = 1.0;
        Self::new(
            RegionKind::HalfSpacePair { axis: 0, a_level: -1.0, b_level: 1.0 },
            a,
            b,
            (temperature / 0.6).sqrt(),
        )
    }

    /// Cylinders of radius 0.3 around `(−0.57, 1.43)` and `(0.56, 0.044)`.
    pub fn rugged_muller(dim: usize, temperature: f64, sigma: f64) -> Result<Self> {
        let mut a = vec![0.0; dim];
        let mut b = vec![0.0; dim];
        a[0] = -0.57;
        a[1] = 1.43;
        b[0] = 0.56;
        b[1] = 0.044;
        Self::new(
            RegionKind::CylinderPair { coords: [0, 1], radius: 0.3 },
            a,
            b,
            sigma * temperature.sqrt(),
        )
    }

    /// Balls of `radius` around `u_minus` (A) and `u_plus` (B).
    pub fn ginzburg_landau(minimizers: &GLMinimizers, radius: f64) -> Result<Self> {
        Self::new(
            RegionKind::SpherePair { radius },
            minimizers.u_minus.clone(),
            minimizers.u_plus.clone(),
            0.0,
        )
    }

    pub fn dim(&self) -> usize {
        self.center_a.len()
    }

    pub fn center(&self, which: Which) -> &[f64] {
        match which {
            Which::A => &self.center_a,
            Which::B => &self.center_b,
        }
    }

    pub fn classify(&self, x: &[f64]) -> Result<Membership> {
        check_dim(self.dim(), x.len())?;
        Ok(self.classify_unchecked(x))
    }

    pub(crate) fn classify_unchecked(&self, x: &[f64]) -> Membership {
        match &self.kind {
            RegionKind::HalfSpacePair { axis, a_level, b_level } => {
                if x[*axis] <= *a_level {
                    Membership::InA
                } else if x[*axis] >= *b_level {
                    Membership::InB
                } else {
                    Membership::Interior
                }
            }
            RegionKind::CylinderPair { coords, radius } => {
                let r2 = radius * radius;
                if self.projected_sq(x, &self.center_a, *coords) <= r2 {
                    Membership::InA
                } else if self.projected_sq(x, &self.center_b, *coords) <= r2 {
                    Membership::InB
                } else {
                    Membership::Interior
                }
            }
            RegionKind::SpherePair { radius } => {
                let r2 = radius * radius;
                if dist_sq(x, &self.center_a) <= r2 {
                    Membership::InA
                } else if dist_sq(x, &self.center_b) <= r2 {
                    Membership::InB
                } else {
                    Membership::Interior
                }
            }
        }
    }

    fn projected_sq(&self, x: &[f64], c: &[f64], coords: [usize; 2]) -> f64 {
        let dx = x[coords[0]] - c[coords[0]];
        let dy = x[coords[1]] - c[coords[1]];
        dx * dx + dy * dy
    }

    /// Draws `count` points on `∂A` or `∂B`.
    pub fn sample_boundary<R: Rng + ?Sized>(&self, which: Which, count: usize, rng: &mut R) -> Vec<Vec<f64>> {
        let d = self.dim();
        let center = self.center(which);
        (0..count)
            .map(|_| match &self.kind {
                RegionKind::HalfSpacePair { axis, a_level, b_level } => {
                    let mut x: Vec<f64> = (0..d)
                        .map(|_| self.transverse_std * rng.sample::<f64, _>(StandardNormal))
                        .collect();
                    x[*axis] = match which {
                        Which::A => *a_level,
                        Which::B => *b_level,
                    };
                    x
                }
                RegionKind::CylinderPair { coords, radius } => {
                    let mut x: Vec<f64> = (0..d)
                        .map(|_| self.transverse_std * rng.sample::<f64, _>(StandardNormal))
                        .collect();
                    let phi = Uniform::new(0.0, std::f64::consts::TAU)
                        .expect("valid range")
                        .sample(rng);
                    x[coords[0]] = center[coords[0]] + radius * phi.cos();
                    x[coords[1]] = center[coords[1]] + radius * phi.sin();
                    x
                }
                RegionKind::SpherePair { radius } => {
                    let mut dir: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
                    for (v, c) in dir.iter_mut().zip(center) {
                        *v = c + radius * *v / norm;
                    }
                    dir
                }
            })
            .collect()
    }
}

pub(crate) fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
