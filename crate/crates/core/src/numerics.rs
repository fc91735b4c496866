//! Quadrature rules and finite-difference stencils shared by every module.

use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Uniform trapezoid grid over the support box of a test function.
///
/// `n` is the number of intervals per axis. Test functions vanish to all
/// orders at the edge of their support, so the rule converges faster than any
/// power of `1/n` and doubling `n` gives a usable error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuadratureGrid {
    n: usize,
}

impl QuadratureGrid {
    pub const DEFAULT_1D: QuadratureGrid = QuadratureGrid { n: 4096 };
    pub const DEFAULT_2D: QuadratureGrid = QuadratureGrid { n: 512 };

    pub fn new(n: usize) -> Result<Self> {
        if n < 64 || !n.is_power_of_two() {
            return Err(Error::InvalidArgument(format!(
                "quadrature node count {n} must be a power of two >= 64"
            )));
        }
        Ok(QuadratureGrid { n })
    }

    pub fn default_for(dim: usize) -> Self {
        if dim == 1 {
            Self::DEFAULT_1D
        } else {
            Self::DEFAULT_2D
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn doubled(&self) -> Self {
        QuadratureGrid { n: self.n * 2 }
    }
}

/// Interior trapezoid nodes on `[a, b]` with `n` intervals (endpoint values
/// are assumed to vanish) and the common weight.
pub fn trapezoid_interior(a: f64, b: f64, n: usize) -> (impl Iterator<Item = f64>, f64) {
    let h = (b - a) / n as f64;
    ((1..n).map(move |j| a + j as f64 * h), h)
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn gl20() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(20))
}

/// Composite 20-point Gauss-Legendre rule with `panels` equal panels.
pub fn gauss_legendre_composite<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, panels: usize) -> f64 {
    if b <= a {
        return 0.0;
    }
    let (nodes, weights) = gl20();
    let w = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * w;
        let mut s = 0.0;
        for (x, wt) in nodes.iter().zip(weights) {
            s += wt * f(mid + 0.5 * w * x);
        }
        total += 0.5 * w * s;
    }
    total
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Plain central difference for the `order`-th derivative with step `h`
/// (half-integer offsets for odd orders). Error expands in even powers of h.
pub fn central_difference<F: Fn(f64) -> f64>(f: &F, x: f64, order: u32, h: f64) -> f64 {
    if order == 0 {
        return f(x);
    }
    let half = order as f64 / 2.0;
    let mut s = 0.0;
    for j in 0..=order {
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        s += sign * binomial(order, j) * f(x + (half - j as f64) * h);
    }
    s / h.powi(order as i32)
}

/// Central difference with `levels` Richardson extrapolation steps (h, h/2, ...).
pub fn richardson_derivative<F: Fn(f64) -> f64>(f: &F, x: f64, order: u32, h: f64, levels: usize) -> f64 {
    if order == 0 {
        return f(x);
    }
    let mut table: Vec<f64> = (0..=levels)
        .map(|i| central_difference(f, x, order, h / 2f64.powi(i as i32)))
        .collect();
    for level in 1..=levels {
        let factor = 4f64.powi(level as i32);
        for i in 0..table.len() - level {
            table[i] = (factor * table[i + 1] - table[i]) / (factor - 1.0);
        }
    }
    table[0]
}

/// Step (relative to the support radius) used for derivatives of exact test
/// function evaluators. Order 1 uses 1e-4; larger steps for higher orders keep
/// the cancellation error `eps_mach * (r/h)^k` small.
pub fn relative_step(order: u32) -> f64 {
    match order {
        0 | 1 => 1e-4,
        2 => 3e-3,
        3 => 1e-2,
        _ => 2e-2,
    }
}

/// Least-squares line `y = slope * x + intercept`; returns (slope, intercept, residual 2-norm).
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let res = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let r = y - (slope * x + intercept);
            r * r
        })
        .sum::<f64>()
        .sqrt();
    (slope, intercept, res)
}
