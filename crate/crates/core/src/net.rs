//! The committor parameterisation
//!
//! ```text
//! q(x) = n_A(x)·S_A(x − y^A) + n_B(x)·S_B(x − y^B) + n_0(x)
//! ```
//!
//! where `n_A`, `n_B` are ReLU networks, `n_0` is a ReLU network whose last
//! hidden layer uses `tanh`, and `S_A`, `S_B` are fundamental-solution
//! features (a planar logarithm or a power law). A side network whose feature
//! is [`SingularityKind::None`] is left out of the model entirely.
//!
//! All three nets are evaluated on row-major batches. Gradients are
//! hand-written reverse passes, including the reverse pass through the input
//! gradient that the gradient-squared baseline needs.
//!
//! The flat parameter vector `θ` is laid out as `n_0`, then `n_A`, then `n_B`;
//! inside one net every layer contributes its weight matrix (row-major,
//! `out × in`) followed by its bias.

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

#[inline]
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    rsa: usize,
    csa: usize,
    b: &[f64],
    rsb: usize,
    csb: usize,
    beta: f64,
    c: &mut [f64],
    rsc: usize,
    csc: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    debug_assert!(a.len() >= (m - 1) * rsa + (k.max(1) - 1) * csa + 1 || k == 0);
    debug_assert!(c.len() >= (m - 1) * rsc + (n - 1) * csc + 1);
    // SAFETY: the slices cover every index touched by the given shapes and strides.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FinalNonlinearity {
    /// ReLU on every hidden layer.
    None,
    /// ReLU on all hidden layers but the last, which uses `tanh`.
    TanhLastHidden,
}

/// A fully connected network with scalar output.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseNet {
    widths: Vec<usize>,
    final_nl: FinalNonlinearity,
    params: Vec<f64>,
    offsets: Vec<usize>,
}

/// Activations of one batch, kept for the reverse passes.
pub struct NetCache {
    batch: usize,
    /// `h[0]` is the input, `h[l]` the output of hidden layer `l`.
    h: Vec<Vec<f64>>,
    /// Pre-activations of the hidden layers; `z[l - 1]` belongs to layer `l`.
    z: Vec<Vec<f64>>,
    pub out: Vec<f64>,
}

impl DenseNet {
    /// `widths` lists input, hidden and output widths; the output width must be 1.
    pub fn zeros(widths: Vec<usize>, final_nl: FinalNonlinearity) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::Input("a net needs at least input and output widths, all nonzero".into()));
        }
        if *widths.last().unwrap() != 1 {
            return Err(Error::Input("output width must be 1".into()));
        }
        let mut offsets = vec![0];
        for w in widths.windows(2) {
            let last = *offsets.last().unwrap();
            offsets.push(last + w[0] * w[1] + w[1]);
        }
        let n = *offsets.last().unwrap();
        Ok(Self {
            widths,
            final_nl,
            params: vec![0.0; n],
            offsets,
        })
    }

    /// Weights uniform in `±√(6/(fan_in + fan_out))`, biases zero.
    pub fn init<R: Rng + ?Sized>(widths: Vec<usize>, final_nl: FinalNonlinearity, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(widths, final_nl)?;
        for l in 0..net.layers() {
            let (fan_in, fan_out) = (net.widths[l], net.widths[l + 1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            let (w, _) = net.layer_mut(l);
            for v in w.iter_mut() {
                *v = dist.sample(rng);
            }
        }
        Ok(net)
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn final_nonlinearity(&self) -> FinalNonlinearity {
        self.final_nl
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Weight matrix (row-major `out × in`) and bias of layer `l`.
    pub fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let (start, nin, nout) = (self.offsets[l], self.widths[l], self.widths[l + 1]);
        let w = &self.params[start..start + nin * nout];
        let b = &self.params[start + nin * nout..self.offsets[l + 1]];
        (w, b)
    }

    pub fn layer_mut(&mut self, l: usize) -> (&mut [f64], &mut [f64]) {
        let (start, nin, nout) = (self.offsets[l], self.widths[l], self.widths[l + 1]);
        let end = self.offsets[l + 1];
        let (w, b) = self.params[start..end].split_at_mut(nin * nout);
        (w, b)
    }

    fn is_tanh(&self, hidden: usize) -> bool {
        self.final_nl == FinalNonlinearity::TanhLastHidden && hidden == self.layers() - 1
    }

    /// Forward pass over `batch` rows of `x` (row-major, `batch × input_dim`).
    pub fn forward_batch(&self, x: &[f64], batch: usize) -> NetCache {
        debug_assert_eq!(x.len(), batch * self.input_dim());
        let nl = self.layers();
        let mut h = Vec::with_capacity(nl);
        let mut z = Vec::with_capacity(nl - 1);
        h.push(x.to_vec());
        for l in 0..nl - 1 {
            let (nin, nout) = (self.widths[l], self.widths[l + 1]);
            let (w, b) = self.layer(l);
            let mut zl = vec![0.0; batch * nout];
            for row in zl.chunks_exact_mut(nout) {
                row.copy_from_slice(b);
            }
            gemm(batch, nin, nout, 1.0, &h[l], nin, 1, w, 1, nin, 1.0, &mut zl, nout, 1);
            let hl: Vec<f64> = if self.is_tanh(l + 1) {
                zl.iter().map(|v| v.tanh()).collect()
            } else {
                zl.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect()
            };
            z.push(zl);
            h.push(hl);
        }
        let (w, b) = self.layer(nl - 1);
        let nin = self.widths[nl - 1];
        let top = &h[nl - 1];
        let out = top
            .chunks_exact(nin)
            .map(|row| b[0] + row.iter().zip(w).map(|(a, c)| a * c).sum::<f64>())
            .collect();
        NetCache { batch, h, z, out }
    }

    /// `σ'(z)` for hidden layer `hidden` (1-based), with `relu'(0) = 0`.
    fn act_deriv(&self, hidden: usize, z: &[f64], h: &[f64]) -> Vec<f64> {
        if self.is_tanh(hidden) {
            h.iter().map(|t| 1.0 - t * t).collect()
        } else {
            z.iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }).collect()
        }
    }

    /// Input gradients of every row, row-major `batch × input_dim`.
    pub fn input_grad(&self, cache: &NetCache) -> Vec<f64> {
        let nl = self.layers();
        let batch = cache.batch;
        let (w_top, _) = self.layer(nl - 1);
        let mut g: Vec<f64> = (0..batch).flat_map(|_| w_top.iter().copied()).collect();
        for l in (1..nl).rev() {
            let (nin, nout) = (self.widths[l - 1], self.widths[l]);
            let sd = self.act_deriv(l, &cache.z[l - 1], &cache.h[l]);
            let d: Vec<f64> = g.iter().zip(&sd).map(|(a, b)| a * b).collect();
            let (w, _) = self.layer(l - 1);
            let mut prev = vec![0.0; batch * nin];
            gemm(batch, nout, nin, 1.0, &d, nout, 1, w, nin, 1, 0.0, &mut prev, nin, 1);
            g = prev;
        }
        g
    }

    /// Accumulates into `grad` the parameter gradient of
    /// `Σ_b seed_out[b]·n(x_b) + seed_grad[b]·∇ₓn(x_b)`.
    ///
    /// With `seed_grad = None` this is ordinary backpropagation; otherwise the
    /// input-gradient computation is itself reversed first.
    pub fn backward(&self, cache: &NetCache, seed_out: &[f64], seed_grad: Option<&[f64]>, grad: &mut [f64]) {
        let nl = self.layers();
        let batch = cache.batch;
        debug_assert_eq!(grad.len(), self.num_params());
        debug_assert_eq!(seed_out.len(), batch);

        // σ' of every hidden layer, index l-1 for layer l
        let sd: Vec<Vec<f64>> = (1..nl).map(|l| self.act_deriv(l, &cache.z[l - 1], &cache.h[l])).collect();
        // extra pre-activation adjoints from the second-order pass
        let mut z_extra: Vec<Option<Vec<f64>>> = vec![None; nl - 1];

        if let Some(seed_grad) = seed_grad {
            debug_assert_eq!(seed_grad.len(), batch * self.input_dim());
            // replay the input-gradient pass, storing g_l and d_l
            let (w_top, _) = self.layer(nl - 1);
            let mut gs: Vec<Vec<f64>> = vec![Vec::new(); nl];
            let mut ds: Vec<Vec<f64>> = vec![Vec::new(); nl];
            gs[nl - 1] = (0..batch).flat_map(|_| w_top.iter().copied()).collect();
            for l in (1..nl).rev() {
                let (nin, nout) = (self.widths[l - 1], self.widths[l]);
                let d: Vec<f64> = gs[l].iter().zip(&sd[l - 1]).map(|(a, b)| a * b).collect();
                if l > 1 {
                    let (w, _) = self.layer(l - 1);
                    let mut prev = vec![0.0; batch * nin];
                    gemm(batch, nout, nin, 1.0, &d, nout, 1, w, nin, 1, 0.0, &mut prev, nin, 1);
                    gs[l - 1] = prev;
                }
                ds[l] = d;
            }
            // reverse it, bottom layer first
            let mut g_bar = seed_grad.to_vec();
            for l in 1..nl {
                let (nin, nout) = (self.widths[l - 1], self.widths[l]);
                let off = self.offsets[l - 1];
                // g_{l-1} = d_l W_l
                gemm(nout, batch, nin, 1.0, &ds[l], 1, nout, &g_bar, nin, 1, 1.0, &mut grad[off..], nin, 1);
                let (w, _) = self.layer(l - 1);
                let mut d_bar = vec![0.0; batch * nout];
                gemm(batch, nin, nout, 1.0, &g_bar, nin, 1, w, 1, nin, 0.0, &mut d_bar, nout, 1);
                // d_l = g_l ⊙ σ'(z_l)
                if self.is_tanh(l) {
                    let h = &cache.h[l];
                    let extra: Vec<f64> = d_bar
                        .iter()
                        .zip(&gs[l])
                        .zip(h)
                        .map(|((db, g), t)| db * g * (-2.0 * t * (1.0 - t * t)))
                        .collect();
                    z_extra[l - 1] = Some(extra);
                }
                g_bar = d_bar.iter().zip(&sd[l - 1]).map(|(a, b)| a * b).collect();
            }
            // g_{L-1} is w_top broadcast over the batch
            let nin = self.widths[nl - 1];
            let off = self.offsets[nl - 1];
            for row in g_bar.chunks_exact(nin) {
                for (gw, v) in grad[off..off + nin].iter_mut().zip(row) {
                    *gw += v;
                }
            }
        }

        // ordinary reverse pass through the forward computation
        let nin = self.widths[nl - 1];
        let off = self.offsets[nl - 1];
        let (w_top, _) = self.layer(nl - 1);
        let top = &cache.h[nl - 1];
        for (row, s) in top.chunks_exact(nin).zip(seed_out) {
            for (gw, v) in grad[off..off + nin].iter_mut().zip(row) {
                *gw += s * v;
            }
        }
        grad[off + nin] += seed_out.iter().sum::<f64>();
        let mut h_bar: Vec<f64> = seed_out
            .iter()
            .flat_map(|s| w_top.iter().map(move |w| s * w))
            .collect();
        for l in (1..nl).rev() {
            let (nin, nout) = (self.widths[l - 1], self.widths[l]);
            let mut z_bar: Vec<f64> = h_bar.iter().zip(&sd[l - 1]).map(|(a, b)| a * b).collect();
            if let Some(extra) = &z_extra[l - 1] {
                for (zb, e) in z_bar.iter_mut().zip(extra) {
                    *zb += e;
                }
            }
            let off = self.offsets[l - 1];
            gemm(nout, batch, nin, 1.0, &z_bar, 1, nout, &cache.h[l - 1], nin, 1, 1.0, &mut grad[off..], nin, 1);
            let boff = off + nin * nout;
            for row in z_bar.chunks_exact(nout) {
                for (gb, v) in grad[boff..boff + nout].iter_mut().zip(row) {
                    *gb += v;
                }
            }
            if l > 1 {
                let (w, _) = self.layer(l - 1);
                let mut prev = vec![0.0; batch * nin];
                gemm(batch, nout, nin, 1.0, &z_bar, nout, 1, w, nin, 1, 0.0, &mut prev, nin, 1);
                h_bar = prev;
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum SingularityKind {
    None,
    /// `log((x_i − c_i)² + (x_j − c_j)²)`.
    Log2D { coords: [usize; 2] },
    /// `‖x − c‖^exponent`, the exponent being `2 − n`.
    PowerLaw { exponent: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingularitySpec {
    pub kind: SingularityKind,
    pub center: Vec<f64>,
}

impl SingularitySpec {
    pub fn none(dim: usize) -> Self {
        Self {
            kind: SingularityKind::None,
            center: vec![0.0; dim],
        }
    }

    pub fn log2d(coords: [usize; 2], center: Vec<f64>) -> Result<Self> {
        if coords[0] == coords[1] || coords.iter().any(|&c| c >= center.len()) {
            return Err(Error::Input("Log2D needs two distinct in-range coordinates".into()));
        }
        Ok(Self {
            kind: SingularityKind::Log2D { coords },
            center,
        })
    }

    /// Fundamental-solution power law `‖x − c‖^{2−n}` for intrinsic dimension `n ≥ 3`.
    pub fn power_law(n: usize, center: Vec<f64>) -> Result<Self> {
        if n < 3 {
            return Err(Error::Input(format!("power-law feature needs n >= 3, got {n}")));
        }
        Ok(Self {
            kind: SingularityKind::PowerLaw {
                exponent: 2.0 - n as f64,
            },
            center,
        })
    }

    pub fn is_none(&self) -> bool {
        matches!(self.kind, SingularityKind::None)
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.center.len(), x.len())?;
        self.value_unchecked(x)
    }

    fn value_unchecked(&self, x: &[f64]) -> Result<f64> {
        match &self.kind {
            SingularityKind::None => Ok(0.0),
            SingularityKind::Log2D { coords: [i, j] } => {
                let (dx, dy) = (x[*i] - self.center[*i], x[*j] - self.center[*j]);
                let r2 = dx * dx + dy * dy;
                if r2 == 0.0 {
                    return Err(Error::Singular);
                }
                Ok(r2.ln())
            }
            SingularityKind::PowerLaw { exponent } => {
                let r2: f64 = x.iter().zip(&self.center).map(|(a, c)| (a - c) * (a - c)).sum();
                if r2 == 0.0 {
                    return Err(Error::Singular);
                }
                Ok(r2.powf(0.5 * exponent))
            }
        }
    }

    /// Writes `∇S(x)` into `g`.
    fn grad_into(&self, x: &[f64], g: &mut [f64]) -> Result<()> {
        g.iter_mut().for_each(|v| *v = 0.0);
        match &self.kind {
            SingularityKind::None => {}
            SingularityKind::Log2D { coords: [i, j] } => {
                let (dx, dy) = (x[*i] - self.center[*i], x[*j] - self.center[*j]);
                let r2 = dx * dx + dy * dy;
                if r2 == 0.0 {
                    return Err(Error::Singular);
                }
                g[*i] = 2.0 * dx / r2;
                g[*j] = 2.0 * dy / r2;
            }
            SingularityKind::PowerLaw { exponent } => {
                let r2: f64 = x.iter().zip(&self.center).map(|(a, c)| (a - c) * (a - c)).sum();
                if r2 == 0.0 {
                    return Err(Error::Singular);
                }
                let f = exponent * r2.powf(0.5 * exponent - 1.0);
                for ((gk, a), c) in g.iter_mut().zip(x).zip(&self.center) {
                    *gk = f * (a - c);
                }
            }
        }
        Ok(())
    }
}

/// Architecture description used to build fresh models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub dim: usize,
    /// Hidden widths of `n_0`.
    pub hidden_0: Vec<usize>,
    /// Hidden widths of `n_A` and `n_B`.
    pub hidden_side: Vec<usize>,
    pub sing_a: SingularitySpec,
    pub sing_b: SingularitySpec,
}

impl ArchConfig {
    /// `n_0` with three hidden layers of width 40, no side networks.
    pub fn plain(dim: usize) -> Self {
        Self {
            dim,
            hidden_0: vec![40, 40, 40],
            hidden_side: vec![20, 20],
            sing_a: SingularitySpec::none(dim),
            sing_b: SingularitySpec::none(dim),
        }
    }
}

/// `q_θ(x) = n_A(x)·S_A(x) + n_B(x)·S_B(x) + n_0(x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CommittorModel {
    pub net_0: DenseNet,
    pub net_a: Option<DenseNet>,
    pub net_b: Option<DenseNet>,
    pub sing_a: SingularitySpec,
    pub sing_b: SingularitySpec,
}

/// Forward state of one batch through the whole model.
pub struct ModelCache {
    pub batch: usize,
    pub q: Vec<f64>,
    c0: NetCache,
    ca: Option<(NetCache, Vec<f64>)>,
    cb: Option<(NetCache, Vec<f64>)>,
}

fn widths_with(dim: usize, hidden: &[usize]) -> Vec<usize> {
    let mut w = Vec::with_capacity(hidden.len() + 2);
    w.push(dim);
    w.extend_from_slice(hidden);
    w.push(1);
    w
}

impl CommittorModel {
    /// Builds a model with all parameters zero.
    pub fn zeros(arch: &ArchConfig) -> Result<Self> {
        Self::build(arch, DenseNet::zeros)
    }

    /// Builds a freshly initialised model; deterministic given the rng state.
    pub fn init<R: Rng + ?Sized>(arch: &ArchConfig, rng: &mut R) -> Result<Self> {
        Self::build(arch, |w, nl| DenseNet::init(w, nl, rng))
    }

    fn build(arch: &ArchConfig, mut make: impl FnMut(Vec<usize>, FinalNonlinearity) -> Result<DenseNet>) -> Result<Self> {
        check_dim(arch.dim, arch.sing_a.center.len())?;
        check_dim(arch.dim, arch.sing_b.center.len())?;
        let net_0 = make(widths_with(arch.dim, &arch.hidden_0), FinalNonlinearity::TanhLastHidden)?;
        let net_a = if arch.sing_a.is_none() {
            None
        } else {
            Some(make(widths_with(arch.dim, &arch.hidden_side), FinalNonlinearity::None)?)
        };
        let net_b = if arch.sing_b.is_none() {
            None
        } else {
            Some(make(widths_with(arch.dim, &arch.hidden_side), FinalNonlinearity::None)?)
        };
        Ok(Self {
            net_0,
            net_a,
            net_b,
            sing_a: arch.sing_a.clone(),
            sing_b: arch.sing_b.clone(),
        })
    }

    pub fn dim(&self) -> usize {
        self.net_0.input_dim()
    }

    fn nets(&self) -> impl Iterator<Item = &DenseNet> {
        std::iter::once(&self.net_0).chain(self.net_a.iter()).chain(self.net_b.iter())
    }

    pub fn num_params(&self) -> usize {
        self.nets().map(DenseNet::num_params).sum()
    }

    /// The flat parameter vector `θ`.
    pub fn theta(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for net in self.nets() {
            out.extend_from_slice(net.params());
        }
        out
    }

    pub fn set_theta(&mut self, theta: &[f64]) -> Result<()> {
        check_dim(self.num_params(), theta.len())?;
        let mut rest = theta;
        let nets = std::iter::once(&mut self.net_0)
            .chain(self.net_a.as_mut())
            .chain(self.net_b.as_mut());
        for net in nets {
            let (head, tail) = rest.split_at(net.num_params());
            net.params_mut().copy_from_slice(head);
            rest = tail;
        }
        Ok(())
    }

    /// Parameter offsets of `n_0`, `n_A`, `n_B` in `θ`.
    fn offsets(&self) -> (usize, usize, usize) {
        let a = self.net_0.num_params();
        let b = a + self.net_a.as_ref().map_or(0, DenseNet::num_params);
        (0, a, b)
    }

    fn features(&self, sing: &SingularitySpec, x: &[f64], batch: usize) -> Result<Vec<f64>> {
        let d = self.dim();
        (0..batch).map(|b| sing.value_unchecked(&x[b * d..(b + 1) * d])).collect()
    }

    /// Evaluates a batch of `batch` points stored row-major in `x`.
    pub fn forward_cached(&self, x: &[f64], batch: usize) -> Result<ModelCache> {
        check_dim(batch * self.dim(), x.len())?;
        let c0 = self.net_0.forward_batch(x, batch);
        let mut q = c0.out.clone();
        let mut side = |net: &Option<DenseNet>, sing: &SingularitySpec| -> Result<Option<(NetCache, Vec<f64>)>> {
            match net {
                None => Ok(None),
                Some(net) => {
                    let s = self.features(sing, x, batch)?;
                    let c = net.forward_batch(x, batch);
                    for ((qb, n), sv) in q.iter_mut().zip(&c.out).zip(&s) {
                        *qb += n * sv;
                    }
                    Ok(Some((c, s)))
                }
            }
        };
        let ca = side(&self.net_a, &self.sing_a)?;
        let cb = side(&self.net_b, &self.sing_b)?;
        Ok(ModelCache { batch, q, c0, ca, cb })
    }

    /// `q` at each row of `x`.
    pub fn eval_batch(&self, x: &[f64], batch: usize) -> Result<Vec<f64>> {
        const CHUNK: usize = 2048;
        let d = self.dim();
        check_dim(batch * d, x.len())?;
        let mut out = Vec::with_capacity(batch);
        for chunk in x.chunks(CHUNK * d) {
            out.extend(self.forward_cached(chunk, chunk.len() / d)?.q);
        }
        Ok(out)
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        Ok(self.forward_cached(x, 1)?.q[0])
    }

    /// Accumulates `Σ_b seeds[b]·∇_θ q(x_b)` into `grad`.
    pub fn backward(&self, cache: &ModelCache, seeds: &[f64], grad: &mut [f64]) {
        self.backward_full(cache, seeds, None, grad)
    }

    /// Accumulates the θ-gradient of `Σ_b seeds[b]·q(x_b) + seed_grad[b]·∇ₓq(x_b)`.
    pub fn backward_full(&self, cache: &ModelCache, seeds: &[f64], seed_grad: Option<&[f64]>, grad: &mut [f64]) {
        let (o0, oa, ob) = self.offsets();
        let n0 = self.net_0.num_params();
        self.net_0.backward(&cache.c0, seeds, seed_grad, &mut grad[o0..o0 + n0]);
        let d = self.dim();
        let mut side = |net: &Option<DenseNet>, c: &Option<(NetCache, Vec<f64>)>, sing: &SingularitySpec, off: usize| {
            if let (Some(net), Some((c, s))) = (net, c) {
                let seeds_s: Vec<f64> = seeds.iter().zip(s).map(|(a, b)| a * b).collect();
                let sg = seed_grad.map(|sg| {
                    // ∇ₓ(n·S) = S ∇ₓn + n ∇ₓS: seed S·ḡ into ∇ₓn and ḡ·∇S into n
                    let mut scaled = vec![0.0; sg.len()];
                    let mut gs = vec![0.0; d];
                    let mut extra = vec![0.0; cache.batch];
                    for b in 0..cache.batch {
                        let row = &sg[b * d..(b + 1) * d];
                        for (o, v) in scaled[b * d..(b + 1) * d].iter_mut().zip(row) {
                            *o = s[b] * v;
                        }
                        let x = &c.h[0][b * d..(b + 1) * d];
                        sing.grad_into(x, &mut gs).expect("finite feature");
                        extra[b] = gs.iter().zip(row).map(|(a, b)| a * b).sum();
                    }
                    (scaled, extra)
                });
                let n = net.num_params();
                match sg {
                    None => net.backward(c, &seeds_s, None, &mut grad[off..off + n]),
                    Some((scaled, extra)) => {
                        let seeds_tot: Vec<f64> = seeds_s.iter().zip(&extra).map(|(a, b)| a + b).collect();
                        net.backward(c, &seeds_tot, Some(&scaled), &mut grad[off..off + n]);
                    }
                }
            }
        };
        side(&self.net_a, &cache.ca, &self.sing_a, oa);
        side(&self.net_b, &cache.cb, &self.sing_b, ob);
    }

    /// `∇ₓq` of every row, row-major `batch × dim`.
    pub fn input_grad_batch(&self, cache: &ModelCache) -> Result<Vec<f64>> {
        let d = self.dim();
        let mut g = self.net_0.input_grad(&cache.c0);
        let mut gs = vec![0.0; d];
        for (net, c, sing) in [(&self.net_a, &cache.ca, &self.sing_a), (&self.net_b, &cache.cb, &self.sing_b)] {
            if let (Some(net), Some((c, s))) = (net, c) {
                let gn = net.input_grad(c);
                for b in 0..cache.batch {
                    sing.grad_into(&c.h[0][b * d..(b + 1) * d], &mut gs)?;
                    for k in 0..d {
                        g[b * d + k] += s[b] * gn[b * d + k] + c.out[b] * gs[k];
                    }
                }
            }
        }
        Ok(g)
    }

    /// `∇_θ q(x)` in flat-θ order.
    pub fn grad_params(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        let cache = self.forward_cached(x, 1)?;
        let mut g = vec![0.0; self.num_params()];
        self.backward(&cache, &[1.0], &mut g);
        Ok(g)
    }

    /// `∇ₓq(x)`.
    pub fn grad_input(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        let cache = self.forward_cached(x, 1)?;
        self.input_grad_batch(&cache)
    }

    pub fn arch(&self) -> ArchConfig {
        let hidden = |n: &DenseNet| n.widths()[1..n.widths().len() - 1].to_vec();
        ArchConfig {
            dim: self.dim(),
            hidden_0: hidden(&self.net_0),
            hidden_side: self
                .net_a
                .as_ref()
                .or(self.net_b.as_ref())
                .map(hidden)
                .unwrap_or_else(|| vec![20, 20]),
            sing_a: self.sing_a.clone(),
            sing_b: self.sing_b.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn rejects_bad_widths() {
        assert!(DenseNet::zeros(vec![3], FinalNonlinearity::None).is_err());
        assert!(DenseNet::zeros(vec![3, 4, 2], FinalNonlinearity::None).is_err());
        assert!(DenseNet::zeros(vec![3, 0, 1], FinalNonlinearity::None).is_err());
    }

    #[test]
    fn singularity_values() {
        let c = vec![0.0, 0.0, 0.0];
        let log = SingularitySpec::log2d([0, 1], c.clone()).unwrap();
        assert_eq!(log.value(&[1.0, 0.0, 5.0]).unwrap(), 0.0);
        let on_circle = [-0.57 + 0.3, 1.43];
        let log_a = SingularitySpec::log2d([0, 1], vec![-0.57, 1.43]).unwrap();
        assert_relative_eq!(log_a.value(&on_circle).unwrap(), 0.09f64.ln(), max_relative = 1e-12);
        assert_relative_eq!(0.09f64.ln(), -2.407_945_608_651_872, max_relative = 1e-12);

        let mut center = vec![0.0; 49];
        center[3] = 2.0;
        let pw = SingularitySpec::power_law(49, center.clone()).unwrap();
        let mut x = center.clone();
        x[10] += 1.0;
        assert_relative_eq!(pw.value(&x).unwrap(), 1.0);
        assert!(matches!(pw.kind, SingularityKind::PowerLaw { exponent } if exponent == -47.0));
        assert!(matches!(pw.value(&center), Err(Error::Singular)));
        assert!(matches!(log.value(&[0.0, 0.0, 1.0]), Err(Error::Singular)));
        assert_eq!(SingularitySpec::none(3).value(&[0.0; 3]).unwrap(), 0.0);
        assert!(SingularitySpec::power_law(2, center).is_err());
        assert!(SingularitySpec::log2d([1, 1], c).is_err());
    }

    #[test]
    fn zero_model_is_zero_and_bias_passes_through() {
        let arch = ArchConfig::plain(4);
        let mut m = CommittorModel::zeros(&arch).unwrap();
        assert_eq!(m.forward(&[0.3, -1.0, 2.0, 0.5]).unwrap(), 0.0);
        let mut theta = m.theta();
        *theta.last_mut().unwrap() = 0.7;
        m.set_theta(&theta).unwrap();
        assert_eq!(m.forward(&[0.3, -1.0, 2.0, 0.5]).unwrap(), 0.7);
        let g = m.grad_params(&[0.3, -1.0, 2.0, 0.5]).unwrap();
        assert_eq!(*g.last().unwrap(), 1.0);
        // dead units: nothing else moves
        assert!(g[..g.len() - 1].iter().all(|&v| v == 0.0));
        assert_eq!(m.grad_input(&[0.3, -1.0, 2.0, 0.5]).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn pure_log_feature_input_gradient() {
        // n_A ≡ 1 via its output bias, n_0 ≡ 0
        let c = vec![0.5, -0.2, 0.0];
        let arch = ArchConfig {
            dim: 3,
            hidden_0: vec![4],
            hidden_side: vec![4],
            sing_a: SingularitySpec::log2d([0, 1], c.clone()).unwrap(),
            sing_b: SingularitySpec::none(3),
        };
        let mut m = CommittorModel::zeros(&arch).unwrap();
        let mut theta = m.theta();
        *theta.last_mut().unwrap() = 1.0;
        m.set_theta(&theta).unwrap();
        let x = [1.1, 0.4, -3.0];
        let (dx, dy) = (x[0] - c[0], x[1] - c[1]);
        let r2 = dx * dx + dy * dy;
        let g = m.grad_input(&x).unwrap();
        assert_relative_eq!(g[0], 2.0 * dx / r2, max_relative = 1e-14);
        assert_relative_eq!(g[1], 2.0 * dy / r2, max_relative = 1e-14);
        assert_eq!(g[2], 0.0);
        assert_relative_eq!(m.forward(&x).unwrap(), r2.ln(), max_relative = 1e-14);
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let arch = ArchConfig::plain(10);
        let a = CommittorModel::init(&arch, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let b = CommittorModel::init(&arch, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a.theta(), b.theta());
        assert_eq!(a.num_params(), 10 * 40 + 40 + 40 * 40 + 40 + 40 * 40 + 40 + 40 + 1);
        let (w, bias) = a.net_0.layer(0);
        let bound = (6.0f64 / 50.0).sqrt();
        assert!(w.iter().all(|v| v.abs() <= bound));
        assert!(bias.iter().all(|&v| v == 0.0));

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let xs: Vec<f64> = (0..10_000).map(|_| rng.sample(StandardNormal)).collect();
        let q = a.eval_batch(&xs, 1000).unwrap();
        let mean = q.iter().sum::<f64>() / 1000.0;
        let sd = (q.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 999.0).sqrt();
        assert!(sd > 1e-3 && sd < 10.0, "sd {sd}");
    }

    #[test]
    fn theta_round_trip() {
        let arch = ArchConfig {
            dim: 5,
            hidden_0: vec![6, 7],
            hidden_side: vec![3],
            sing_a: SingularitySpec::log2d([0, 1], vec![0.0; 5]).unwrap(),
            sing_b: SingularitySpec::power_law(5, vec![1.0; 5]).unwrap(),
        };
        let mut m = CommittorModel::init(&arch, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let theta = m.theta();
        let copy = m.clone();
        m.set_theta(&theta).unwrap();
        assert_eq!(m, copy);
        assert!(m.set_theta(&theta[1..]).is_err());
        assert_eq!(m.arch(), arch);
    }

    #[test]
    fn batch_matches_single_rows() {
        let arch = ArchConfig::plain(3);
        let m = CommittorModel::init(&arch, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let xs = [0.1, 0.2, 0.3, -1.0, 0.5, 2.0];
        let q = m.eval_batch(&xs, 2).unwrap();
        assert_eq!(q[0], m.forward(&xs[..3]).unwrap());
        assert_eq!(q[1], m.forward(&xs[3..]).unwrap());
        assert!(m.forward(&xs[..2]).is_err());
    }
}
