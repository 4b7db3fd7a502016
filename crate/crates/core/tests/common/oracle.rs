//! Straight-line re-implementation of the committor model on top of nalgebra,
//! used as an independent oracle for the hand-written reverse passes.

use committor::net::{CommittorModel, DenseNet, FinalNonlinearity, SingularityKind, SingularitySpec};
use nalgebra::{DMatrix, DVector};

/// Output and ReLU on/off pattern of one net.
fn dense(widths: &[usize], tanh_last: bool, params: &[f64], x: &DVector<f64>, pattern: &mut Vec<bool>) -> f64 {
    let mut h = x.clone();
    let mut off = 0;
    let layers = widths.len() - 1;
    for l in 0..layers {
        let (nin, nout) = (widths[l], widths[l + 1]);
        let w = DMatrix::from_row_slice(nout, nin, &params[off..off + nin * nout]);
        let b = DVector::from_column_slice(&params[off + nin * nout..off + nin * nout + nout]);
        off += nin * nout + nout;
        let z = w * &h + b;
        if l == layers - 1 {
            return z[0];
        }
        h = if tanh_last && l == layers - 2 {
            z.map(f64::tanh)
        } else {
            pattern.extend(z.iter().map(|&v| v > 0.0));
            z.map(|v| v.max(0.0))
        };
    }
    unreachable!("a net has an output layer")
}

fn feature(s: &SingularitySpec, x: &DVector<f64>) -> f64 {
    let c = DVector::from_column_slice(&s.center);
    match &s.kind {
        SingularityKind::None => 0.0,
        SingularityKind::Log2D { coords: [i, j] } => {
            let (a, b) = (x[*i] - c[*i], x[*j] - c[*j]);
            (a * a + b * b).ln()
        }
        SingularityKind::PowerLaw { exponent } => (x - c).norm().powf(*exponent),
    }
}

/// The model's layout, captured once so `eval` can take any `θ`.
pub struct Oracle {
    nets: Vec<(Vec<usize>, bool, usize)>,
    sings: Vec<SingularitySpec>,
}

impl Oracle {
    pub fn new(model: &CommittorModel) -> Self {
        let entry = |n: &DenseNet| {
            (
                n.widths().to_vec(),
                n.final_nonlinearity() == FinalNonlinearity::TanhLastHidden,
                n.num_params(),
            )
        };
        let mut nets = vec![entry(&model.net_0)];
        let mut sings = Vec::new();
        if let Some(n) = &model.net_a {
            nets.push(entry(n));
            sings.push(model.sing_a.clone());
        }
        if let Some(n) = &model.net_b {
            nets.push(entry(n));
            sings.push(model.sing_b.clone());
        }
        Self { nets, sings }
    }

    /// `q(θ, x)` and the ReLU pattern at that point.
    pub fn eval(&self, theta: &[f64], x: &[f64]) -> (f64, Vec<bool>) {
        let xv = DVector::from_column_slice(x);
        let mut pattern = Vec::new();
        let mut off = 0;
        let mut q = 0.0;
        for (k, (widths, tanh_last, n)) in self.nets.iter().enumerate() {
            let v = dense(widths, *tanh_last, &theta[off..off + n], &xv, &mut pattern);
            off += n;
            q += if k == 0 { v } else { v * feature(&self.sings[k - 1], &xv) };
        }
        (q, pattern)
    }
}

/// Central differences of `q` in `θ`; coordinates whose stencil crosses a ReLU
/// kink come back as `None`.
pub fn fd_params(oracle: &Oracle, theta: &[f64], x: &[f64], h: f64) -> Vec<Option<f64>> {
    let (_, base) = oracle.eval(theta, x);
    let mut t = theta.to_vec();
    (0..theta.len())
        .map(|i| {
            t[i] = theta[i] + h;
            let (up, pu) = oracle.eval(&t, x);
            t[i] = theta[i] - h;
            let (dn, pd) = oracle.eval(&t, x);
            t[i] = theta[i];
            (pu == base && pd == base).then(|| (up - dn) / (2.0 * h))
        })
        .collect()
}

/// Central differences of `q` in `x`, with the same kink rule.
pub fn fd_input(oracle: &Oracle, theta: &[f64], x: &[f64], h: f64) -> Vec<Option<f64>> {
    let (_, base) = oracle.eval(theta, x);
    let mut y = x.to_vec();
    (0..x.len())
        .map(|i| {
            y[i] = x[i] + h;
            let (up, pu) = oracle.eval(theta, &y);
            y[i] = x[i] - h;
            let (dn, pd) = oracle.eval(theta, &y);
            y[i] = x[i];
            (pu == base && pd == base).then(|| (up - dn) / (2.0 * h))
        })
        .collect()
}

/// `max |fd − ad| / max |ad|` over the coordinates `fd` could resolve, and
/// how many it resolved.
pub fn relative_mismatch(ad: &[f64], fd: &[Option<f64>]) -> (f64, usize) {
    let scale = ad.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let mut worst = 0.0f64;
    let mut used = 0;
    for (a, f) in ad.iter().zip(fd) {
        if let Some(f) = f {
            worst = worst.max((a - f).abs());
            used += 1;
        }
    }
    (worst / scale, used)
}
