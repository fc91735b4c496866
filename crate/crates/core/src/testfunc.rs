//! Compactly supported smooth test functions on R^s (s = 1, 2).
//!
//! Internally constructed functions are finite bump-monomial series
//! `sum_k c_k t^k B(|t|)` with `t = (xi - c) / r` and
//! `B(u) = exp(-1 / (1 - u^2))` on the open unit ball. Scaling keeps this
//! form; translation, linear combinations and transformations wrap the series
//! in a small expression tree whose leaves are either series or opaque
//! evaluators. Moments are always computed by trapezoid quadrature over the
//! support box.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::{self, check_dim, MultiIndex, Point};
use crate::numerics::{self, QuadratureGrid};

pub type Evaluator = Arc<dyn Fn(&Point) -> f64 + Send + Sync>;

/// Largest accepted 1-norm condition estimate of the moment matrix.
pub const MAX_MOMENT_CONDITION: f64 = 1e12;

/// Default absolute tolerance on moment integrals.
pub const DEFAULT_MOMENT_TOL: f64 = 1e-10;

/// The unnormalized bump `exp(-1/(1-u^2))` for `|u| < 1`, else 0.
pub fn bump(u2: f64) -> f64 {
    if u2 >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - u2)).exp()
    }
}

#[derive(Clone)]
struct BumpSeries {
    center: Point,
    radius: f64,
    amplitude: f64,
    terms: Vec<(MultiIndex, f64)>,
}

impl BumpSeries {
    fn local(&self, x: &Point) -> (Point, f64) {
        let t = [(x[0] - self.center[0]) / self.radius, (x[1] - self.center[1]) / self.radius];
        (t, t[0] * t[0] + t[1] * t[1])
    }

    fn poly(&self, t: &Point) -> f64 {
        self.terms.iter().map(|(k, c)| c * k.monomial(t)).sum()
    }

    fn eval(&self, x: &Point) -> f64 {
        let (t, t2) = self.local(x);
        if t2 >= 1.0 {
            return 0.0;
        }
        self.amplitude * self.poly(&t) * bump(t2)
    }

    fn expansion(&self) -> Expansion {
        vec![(0, self.terms.clone())]
    }

    /// Evaluates `amplitude r^-|alpha| sum_m Q_m(t) s^m exp(-s)`, `s = 1 / (1 - |t|^2)`.
    fn eval_expansion(&self, expansion: &Expansion, order: MultiIndex, x: &Point) -> f64 {
        let (t, t2) = self.local(x);
        if t2 >= 1.0 {
            return 0.0;
        }
        let s = 1.0 / (1.0 - t2);
        if s > 700.0 {
            return 0.0;
        }
        let b = (-s).exp();
        let mut acc = 0.0;
        for (m, poly) in expansion {
            let q: f64 = poly.iter().map(|(k, c)| c * k.monomial(&t)).sum();
            acc += q * s.powi(*m);
        }
        self.amplitude * self.radius.powi(-(order.order() as i32)) * b * acc
    }
}

/// `sum_m Q_m(t) s^m exp(-s)` as `(m, Q_m)` pairs.
type Expansion = Vec<(i32, Vec<(MultiIndex, f64)>)>;

/// `d/dt_axis` of an expansion, using `ds/dt_axis = 2 t_axis s^2`.
fn differentiate(expansion: &Expansion, axis: usize) -> Expansion {
    let mut acc: BTreeMap<(i32, [u32; 2]), f64> = BTreeMap::new();
    let unit = MultiIndex::unit(axis);
    for (m, poly) in expansion {
        for (k, c) in poly {
            if k.0[axis] > 0 {
                let mut km = *k;
                km.0[axis] -= 1;
                *acc.entry((*m, km.0)).or_insert(0.0) += c * k.0[axis] as f64;
            }
            let up = k.plus(&unit).0;
            if *m != 0 {
                *acc.entry((m + 1, up)).or_insert(0.0) += 2.0 * *m as f64 * c;
            }
            *acc.entry((m + 2, up)).or_insert(0.0) -= 2.0 * c;
        }
    }
    let mut out: Expansion = Vec::new();
    for ((m, k), c) in acc {
        if c == 0.0 {
            continue;
        }
        match out.last_mut() {
            Some((last, poly)) if *last == m => poly.push((MultiIndex(k), c)),
            _ => out.push((m, vec![(MultiIndex(k), c)])),
        }
    }
    out
}

enum Node {
    Series(BumpSeries),
    SeriesPartial { series: BumpSeries, order: MultiIndex, expansion: Expansion },
    Sum(Vec<(f64, TestFunction)>),
    Shifted { inner: TestFunction, offset: Point },
    Scaled { inner: TestFunction, eps: f64, factor: f64 },
    NumericPartial { inner: TestFunction, axis: usize },
    Opaque(Evaluator),
}

/// A smooth function with support in the closed ball `B(center, radius)`.
#[derive(Clone)]
pub struct TestFunction {
    dim: usize,
    center: Point,
    radius: f64,
    node: Arc<Node>,
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &*self.node {
            Node::Series(_) => "series",
            Node::SeriesPartial { .. } => "series-partial",
            Node::Sum(_) => "sum",
            Node::Shifted { .. } => "shifted",
            Node::Scaled { .. } => "scaled",
            Node::NumericPartial { .. } => "numeric-partial",
            Node::Opaque(_) => "opaque",
        };
        f.debug_struct("TestFunction")
            .field("dim", &self.dim)
            .field("center", &&self.center[..self.dim])
            .field("radius", &self.radius)
            .field("kind", &kind)
            .finish()
    }
}

impl TestFunction {
    fn with_node(dim: usize, center: Point, radius: f64, node: Node) -> Self {
        TestFunction {
            dim,
            center,
            radius,
            node: Arc::new(node),
        }
    }

    /// Wraps an arbitrary evaluator. Values outside `B(center, radius)` are
    /// forced to zero.
    pub fn from_evaluator(dim: usize, center: Point, radius: f64, f: Evaluator) -> Result<Self> {
        check_dim(dim)?;
        if !(radius > 0.0 && radius.is_finite()) || !center.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "support ball needs finite center and positive radius (got {radius})"
            )));
        }
        Ok(Self::with_node(dim, center, radius, Node::Opaque(f)))
    }

    /// A raw bump-monomial series `amplitude * sum c_k t^k B(|t|)`.
    pub fn from_series(
        dim: usize,
        center: Point,
        radius: f64,
        amplitude: f64,
        terms: Vec<(MultiIndex, f64)>,
    ) -> Result<Self> {
        check_dim(dim)?;
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidArgument(format!("radius must be positive, got {radius}")));
        }
        let series = BumpSeries {
            center,
            radius,
            amplitude,
            terms,
        };
        Ok(Self::with_node(dim, center, radius, Node::Series(series)))
    }

    /// `sum a_i f_i`; the support ball is the smallest ball around the bounding
    /// box of the member supports (exact in one dimension).
    pub fn linear_combination(terms: Vec<(f64, TestFunction)>) -> Result<Self> {
        let first = terms
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty linear combination".into()))?;
        let dim = first.1.dim;
        if terms.iter().any(|(_, f)| f.dim != dim) {
            return Err(Error::InvalidArgument("mixed dimensions in linear combination".into()));
        }
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for (_, f) in &terms {
            for i in 0..dim {
                lo[i] = lo[i].min(f.center[i] - f.radius);
                hi[i] = hi[i].max(f.center[i] + f.radius);
            }
        }
        let mut center = [0.0; 2];
        let mut half = [0.0; 2];
        for i in 0..dim {
            center[i] = 0.5 * (lo[i] + hi[i]);
            half[i] = 0.5 * (hi[i] - lo[i]);
        }
        let radius = if dim == 1 { half[0] } else { half[0].hypot(half[1]) };
        Ok(Self::with_node(dim, center, radius, Node::Sum(terms)))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn center(&self) -> Point {
        self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Coefficients of a plain bump-monomial series, if this is one.
    pub fn series_coefficients(&self) -> Option<Vec<(MultiIndex, f64)>> {
        match &*self.node {
            Node::Series(s) => Some(s.terms.clone()),
            _ => None,
        }
    }

    pub fn eval(&self, x: &Point) -> f64 {
        if geometry::norm(&geometry::sub(x, &self.center), self.dim) >= self.radius {
            return 0.0;
        }
        match &*self.node {
            Node::Series(s) => s.eval(x),
            Node::SeriesPartial { series, order, expansion } => series.eval_expansion(expansion, *order, x),
            Node::Sum(terms) => terms.iter().map(|(a, f)| a * f.eval(x)).sum(),
            Node::Shifted { inner, offset } => inner.eval(&geometry::sub(x, offset)),
            Node::Scaled { inner, eps, factor } => factor * inner.eval(&[x[0] / eps, x[1] / eps]),
            Node::NumericPartial { inner, axis } => {
                let h = numerics::relative_step(1) * inner.radius;
                let (axis, y) = (*axis, *x);
                let g = |s: f64| {
                    let mut p = y;
                    p[axis] = s;
                    inner.eval(&p)
                };
                numerics::richardson_derivative(&g, y[axis], 1, h, 2)
            }
            Node::Opaque(f) => f(x),
        }
    }

    pub fn eval1(&self, x: f64) -> f64 {
        self.eval(&geometry::point1(x))
    }

    /// `S_eps f = eps^{-s} f(. / eps)` for `eps` in (0, 1].
    pub fn scale(&self, eps: f64) -> Result<TestFunction> {
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(Error::InvalidArgument(format!("scale parameter {eps} not in (0, 1]")));
        }
        Ok(self.scale_unchecked(eps))
    }

    fn scale_unchecked(&self, eps: f64) -> TestFunction {
        if eps == 1.0 {
            return self.clone();
        }
        let factor = eps.powi(-(self.dim as i32));
        let center = geometry::scale(&self.center, eps);
        let radius = self.radius * eps;
        let node = match &*self.node {
            Node::Series(s) => Node::Series(BumpSeries {
                center: geometry::scale(&s.center, eps),
                radius: s.radius * eps,
                amplitude: s.amplitude * factor,
                terms: s.terms.clone(),
            }),
            Node::Sum(terms) => Node::Sum(terms.iter().map(|(a, f)| (*a, f.scale_unchecked(eps))).collect()),
            Node::Shifted { inner, offset } => Node::Shifted {
                inner: inner.scale_unchecked(eps),
                offset: geometry::scale(offset, eps),
            },
            Node::Scaled {
                inner,
                eps: e,
                factor: f,
            } => Node::Scaled {
                inner: inner.clone(),
                eps: e * eps,
                factor: f * factor,
            },
            _ => Node::Scaled {
                inner: self.clone(),
                eps,
                factor,
            },
        };
        Self::with_node(self.dim, center, radius, node)
    }

    /// `xi -> f(xi - x)`. Translating back by the exact negative offset
    /// returns the original function.
    pub fn translate(&self, x: &Point) -> TestFunction {
        if x[..self.dim].iter().all(|v| *v == 0.0) {
            return self.clone();
        }
        if let Node::Shifted { inner, offset } = &*self.node {
            let total = geometry::add(offset, x);
            if total[..self.dim].iter().all(|v| *v == 0.0) {
                return inner.clone();
            }
        }
        Self::with_node(
            self.dim,
            geometry::add(&self.center, x),
            self.radius,
            Node::Shifted {
                inner: self.clone(),
                offset: *x,
            },
        )
    }

    pub fn translate1(&self, x: f64) -> TestFunction {
        self.translate(&geometry::point1(x))
    }

    /// Partial derivative along `axis`; analytic for bump series, Richardson
    /// central differences otherwise.
    pub fn partial(&self, axis: usize) -> TestFunction {
        let node = match &*self.node {
            Node::Series(s) => Node::SeriesPartial {
                series: s.clone(),
                order: MultiIndex::unit(axis),
                expansion: differentiate(&s.expansion(), axis),
            },
            Node::SeriesPartial { series, order, expansion } => Node::SeriesPartial {
                series: series.clone(),
                order: order.plus(&MultiIndex::unit(axis)),
                expansion: differentiate(expansion, axis),
            },
            Node::Sum(terms) => Node::Sum(terms.iter().map(|(a, f)| (*a, f.partial(axis))).collect()),
            Node::Shifted { inner, offset } => Node::Shifted {
                inner: inner.partial(axis),
                offset: *offset,
            },
            Node::Scaled { inner, eps, factor } => Node::Scaled {
                inner: inner.partial(axis),
                eps: *eps,
                factor: factor / eps,
            },
            _ => Node::NumericPartial {
                inner: self.clone(),
                axis,
            },
        };
        Self::with_node(self.dim, self.center, self.radius, node)
    }

    /// `partial^alpha f(x)`: exact for bump-monomial series and their sums,
    /// shifts and scalings; otherwise Richardson-extrapolated central
    /// differences on the evaluator (two levels, step relative to radius).
    pub fn derivative_at(&self, x: &Point, alpha: MultiIndex) -> f64 {
        if let Some(v) = self.analytic_derivative(x, alpha) {
            return v;
        }
        fn nested(f: &TestFunction, x: &Point, alpha: [u32; 2], axis: usize) -> f64 {
            if axis == 2 {
                return f.eval(x);
            }
            let k = alpha[axis];
            if k == 0 {
                return nested(f, x, alpha, axis + 1);
            }
            let h = numerics::relative_step(k) * f.radius;
            let g = |s: f64| {
                let mut p = *x;
                p[axis] = s;
                nested(f, &p, alpha, axis + 1)
            };
            numerics::richardson_derivative(&g, x[axis], k, h, 2)
        }
        nested(self, x, alpha.0, 0)
    }

    fn analytic_derivative(&self, x: &Point, alpha: MultiIndex) -> Option<f64> {
        if alpha.order() == 0 {
            return Some(self.eval(x));
        }
        if geometry::norm(&geometry::sub(x, &self.center), self.dim) >= self.radius {
            return Some(0.0);
        }
        match &*self.node {
            Node::Series(s) => {
                let mut e = s.expansion();
                for axis in 0..2 {
                    for _ in 0..alpha.0[axis] {
                        e = differentiate(&e, axis);
                    }
                }
                Some(s.eval_expansion(&e, alpha, x))
            }
            Node::SeriesPartial { series, order, expansion } => {
                let mut e = expansion.clone();
                for axis in 0..2 {
                    for _ in 0..alpha.0[axis] {
                        e = differentiate(&e, axis);
                    }
                }
                Some(series.eval_expansion(&e, order.plus(&alpha), x))
            }
            Node::Sum(terms) => terms
                .iter()
                .map(|(a, f)| f.analytic_derivative(x, alpha).map(|v| a * v))
                .sum(),
            Node::Shifted { inner, offset } => inner.analytic_derivative(&geometry::sub(x, offset), alpha),
            Node::Scaled { inner, eps, factor } => inner
                .analytic_derivative(&[x[0] / eps, x[1] / eps], alpha)
                .map(|v| factor * eps.powi(-(alpha.order() as i32)) * v),
            _ => None,
        }
    }

    /// Calls `visit(node, weight)` for every interior trapezoid node of the
    /// support box.
    pub fn for_each_node<F: FnMut(&Point, f64)>(&self, grid: QuadratureGrid, mut visit: F) {
        let n = grid.n();
        let (c, r) = (self.center, self.radius);
        if self.dim == 1 {
            let (nodes, h) = numerics::trapezoid_interior(c[0] - r, c[0] + r, n);
            for x in nodes {
                visit(&[x, 0.0], h);
            }
        } else {
            let h = 2.0 * r / n as f64;
            for i in 1..n {
                let x0 = c[0] - r + i as f64 * h;
                for j in 1..n {
                    visit(&[x0, c[1] - r + j as f64 * h], h * h);
                }
            }
        }
    }

    /// `int w(xi) f(xi) dxi` over the support box.
    pub fn integrate_weighted<W: Fn(&Point) -> f64>(&self, grid: QuadratureGrid, w: W) -> f64 {
        let mut s = 0.0;
        self.for_each_node(grid, |x, h| {
            let v = self.eval(x);
            if v != 0.0 {
                s += h * w(x) * v;
            }
        });
        s
    }

    pub fn integral(&self) -> f64 {
        self.integrate_weighted(QuadratureGrid::default_for(self.dim), |_| 1.0)
    }

    pub fn moment_with(&self, alpha: MultiIndex, grid: QuadratureGrid) -> f64 {
        self.integrate_weighted(grid, |x| alpha.monomial(x))
    }

    /// `int xi^alpha f` with the default grid and an N-doubling error estimate.
    pub fn moment(&self, alpha: MultiIndex) -> Moment {
        moment(self, alpha)
    }

    /// Approximate sup norm from samples on a uniform grid over the support.
    pub fn sup_norm(&self) -> f64 {
        let n = if self.dim == 1 { 2048 } else { 128 };
        let mut m: f64 = 0.0;
        let grid = QuadratureGrid::new(n).expect("valid sampling grid");
        self.for_each_node(grid, |x, _| m = m.max(self.eval(x).abs()));
        m
    }
}

/// A quadrature moment with its N-doubling error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moment {
    pub value: f64,
    pub error_estimate: f64,
}

/// `int xi^alpha phi(xi) dxi` by trapezoid quadrature over the support box.
pub fn moment(phi: &TestFunction, alpha: MultiIndex) -> Moment {
    let grid = QuadratureGrid::default_for(phi.dim);
    let value = phi.moment_with(alpha, grid);
    let fine = phi.moment_with(alpha, grid.doubled());
    Moment {
        value,
        error_estimate: (fine - value).abs(),
    }
}

/// `int xi^beta partial^gamma phi(xi) dxi`, computed by integration by parts as
/// `(-1)^|gamma| int partial^gamma(xi^beta) phi`; no numerical differentiation.
pub fn derivative_moment(phi: &TestFunction, beta: MultiIndex, gamma: MultiIndex) -> f64 {
    let Some(rest) = beta.checked_minus(&gamma) else {
        return 0.0;
    };
    let falling = |n: u32, k: u32| (0..k).fold(1.0, |acc, i| acc * (n - i) as f64);
    let coeff = falling(beta.0[0], gamma.0[0]) * falling(beta.0[1], gamma.0[1]);
    let sign = if gamma.order().is_multiple_of(2) { 1.0 } else { -1.0 };
    sign * coeff * phi.moment_with(rest, QuadratureGrid::default_for(phi.dim))
}

/// Vanishing-moment requirement `A_q` with an absolute tolerance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentSpec {
    pub q: u32,
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentReport {
    pub mass_error: f64,
    pub moments: Vec<(MultiIndex, f64)>,
    pub max_violation: f64,
    pub passed: bool,
}

impl MomentSpec {
    pub fn new(q: u32, tol: f64) -> Result<Self> {
        if !(tol > 0.0) {
            return Err(Error::InvalidArgument(format!("moment tolerance must be positive, got {tol}")));
        }
        Ok(MomentSpec { q, tol })
    }

    pub fn check(&self, phi: &TestFunction) -> MomentReport {
        let grid = QuadratureGrid::default_for(phi.dim);
        let mass_error = (phi.moment_with(MultiIndex::ZERO, grid) - 1.0).abs();
        let moments: Vec<_> = MultiIndex::all(phi.dim, 1, self.q)
            .into_iter()
            .map(|a| (a, phi.moment_with(a, grid)))
            .collect();
        let max_violation = moments.iter().map(|(_, m)| m.abs()).fold(mass_error, f64::max);
        MomentReport {
            mass_error,
            moments,
            max_violation,
            passed: max_violation <= self.tol,
        }
    }
}

/// Discrete moments of the unit bump on the reference grid, indexed by exponent.
fn reference_bump_moments(dim: usize, max_order: u32, grid: QuadratureGrid) -> Vec<(MultiIndex, f64)> {
    let exps = MultiIndex::all(dim, 0, max_order);
    let mut acc = vec![0.0; exps.len()];
    let reference = TestFunction::from_series(dim, [0.0; 2], 1.0, 1.0, vec![(MultiIndex::ZERO, 1.0)])
        .expect("unit bump");
    reference.for_each_node(grid, |t, h| {
        let b = reference.eval(t);
        if b != 0.0 {
            for (slot, e) in acc.iter_mut().zip(&exps) {
                *slot += h * b * e.monomial(t);
            }
        }
    });
    exps.into_iter().zip(acc).collect()
}

/// A mollifier in `A_q(R^s)`: unit mass and vanishing moments of orders
/// `1..=q`, supported in `B(0, radius)`.
pub fn build_mollifier(q: u32, dim: usize, radius: f64) -> Result<TestFunction> {
    build_mollifier_at(q, dim, radius, [0.0; 2])
}

/// Like [`build_mollifier`] with the bump basis centered at `center`; the
/// moments are still taken about the origin.
pub fn build_mollifier_at(q: u32, dim: usize, radius: f64, center: Point) -> Result<TestFunction> {
    check_dim(dim)?;
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidArgument(format!("radius must be positive, got {radius}")));
    }
    let grid = QuadratureGrid::default_for(dim);
    let basis = MultiIndex::all(dim, 0, q);
    let table = reference_bump_moments(dim, 2 * q, grid);
    let lookup = |m: MultiIndex| {
        table
            .iter()
            .find(|(e, _)| *e == m)
            .map(|(_, v)| *v)
            .expect("moment table covers 2q")
    };
    let m = basis.len();
    let h = DMatrix::from_fn(m, m, |i, j| lookup(basis[i].plus(&basis[j])));
    let shift = [-center[0] / radius, -center[1] / radius];
    let rhs = DVector::from_fn(m, |i, _| basis[i].monomial(&shift));

    let norm1 = |a: &DMatrix<f64>| {
        (0..a.ncols())
            .map(|j| a.column(j).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    };
    let inverse = h
        .clone()
        .try_inverse()
        .ok_or(Error::IllConditioned { q, condition: f64::INFINITY })?;
    let condition = norm1(&h) * norm1(&inverse);
    if !condition.is_finite() || condition > MAX_MOMENT_CONDITION {
        return Err(Error::IllConditioned { q, condition });
    }
    let coeffs = h
        .lu()
        .solve(&rhs)
        .ok_or(Error::IllConditioned { q, condition })?;
    let terms = basis.into_iter().zip(coeffs.iter().copied()).collect();
    TestFunction::from_series(dim, center, radius, radius.powi(-(dim as i32)), terms)
}

/// `build_mollifier(0, dim, 1)`: the normalized standard bump.
pub fn standard_bump(dim: usize) -> TestFunction {
    build_mollifier(0, dim, 1.0).expect("q = 0 system is 1x1")
}

/// Unit-mass bump of radius `radius` centered at `center` (no moment conditions).
pub fn unit_bump(dim: usize, center: Point, radius: f64) -> Result<TestFunction> {
    build_mollifier_at(0, dim, radius, center)
}

pub fn scale(phi: &TestFunction, eps: f64) -> Result<TestFunction> {
    phi.scale(eps)
}

pub fn translate(phi: &TestFunction, x: &Point) -> TestFunction {
    phi.translate(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Independent oracle: composite trapezoid on a uniform grid over a
    /// generous box, at twice the default node count.
    fn oracle_moment(f: &TestFunction, k: i32) -> f64 {
        let n = 8192;
        let (a, b) = (f.center()[0] - f.radius() * 1.5, f.center()[0] + f.radius() * 1.5);
        let h = (b - a) / n as f64;
        (0..=n)
            .map(|j| {
                let x = a + j as f64 * h;
                let w = if j == 0 || j == n { 0.5 } else { 1.0 };
                w * h * x.powi(k) * f.eval1(x)
            })
            .sum()
    }

    #[test]
    fn standard_bump_has_unit_mass() {
        let f = build_mollifier(0, 1, 1.0).unwrap();
        assert!((f.moment(MultiIndex::ZERO).value - 1.0).abs() < 1e-12);
        assert!((oracle_moment(&f, 0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn q2_mollifier_moments_vanish_under_oracle() {
        let f = build_mollifier(2, 1, 1.0).unwrap();
        assert!(oracle_moment(&f, 1).abs() <= 1e-10);
        assert!(oracle_moment(&f, 2).abs() <= 1e-10);
        assert!((oracle_moment(&f, 0) - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn q2_mollifier_changes_sign() {
        let f = build_mollifier(2, 1, 1.0).unwrap();
        let negative = (1..2000).any(|j| f.eval1(-1.0 + j as f64 / 1000.0) < 0.0);
        assert!(negative);
    }

    #[test]
    fn third_moment_of_q2_is_visible() {
        // The symmetric q = 2 mollifier has m3 = 0 by parity; the basis offset
        // breaks the symmetry and exposes the first non-vanishing odd moment.
        let sym = build_mollifier(2, 1, 1.0).unwrap();
        assert!(sym.moment(MultiIndex::d1(3)).value.abs() < 1e-13);
        let asym = build_mollifier_at(2, 1, 1.0, [0.2, 0.0]).unwrap();
        let m3 = asym.moment(MultiIndex::d1(3)).value;
        assert!(m3.abs() > 1e-3, "m3 = {m3}");
        assert!((m3 - oracle_moment(&asym, 3)).abs() < 1e-11);
        let m4 = sym.moment(MultiIndex::d1(4)).value;
        assert!(m4.abs() > 1e-3);
    }

    #[test]
    fn moment_error_estimates_are_tiny() {
        for q in 0..=6 {
            let f = build_mollifier(q, 1, 1.0).unwrap();
            for k in 0..=8 {
                let m = f.moment(MultiIndex::d1(k));
                assert!(m.error_estimate <= 1e-11, "q={q} k={k}: {m:?}");
            }
        }
    }

    #[test]
    fn mollifiers_pass_moment_spec() {
        for q in 0..=6 {
            let f = build_mollifier(q, 1, 1.0).unwrap();
            let report = MomentSpec::new(q, DEFAULT_MOMENT_TOL).unwrap().check(&f);
            assert!(report.passed, "q={q}: {report:?}");
        }
    }

    #[test]
    fn two_dimensional_mollifier() {
        let f = build_mollifier(2, 2, 1.0).unwrap();
        let report = MomentSpec::new(2, DEFAULT_MOMENT_TOL).unwrap().check(&f);
        assert!(report.passed, "{report:?}");
        assert_eq!(report.moments.len(), 5);
        let g = build_mollifier_at(1, 2, 0.8, [0.1, -0.1]).unwrap();
        assert!(MomentSpec::new(1, DEFAULT_MOMENT_TOL).unwrap().check(&g).passed);
    }

    #[test]
    fn ill_conditioned_systems_are_rejected() {
        let err = build_mollifier(20, 1, 1.0).unwrap_err();
        assert!(matches!(err, Error::IllConditioned { q: 20, .. }), "{err}");
    }

    #[test]
    fn support_is_respected() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let fs = [
            build_mollifier(3, 1, 0.7).unwrap(),
            build_mollifier_at(2, 1, 0.5, [0.3, 0.0]).unwrap().scale(0.25).unwrap(),
            build_mollifier(1, 1, 1.0).unwrap().translate1(2.0),
        ];
        for f in &fs {
            for _ in 0..1000 {
                let d = f.radius() * (1.0 + rng.gen::<f64>() * 3.0);
                let x = f.center()[0] + if rng.gen::<bool>() { d } else { -d };
                assert_eq!(f.eval1(x), 0.0);
            }
        }
        let g = build_mollifier(2, 2, 1.0).unwrap();
        for _ in 0..1000 {
            let th = rng.gen::<f64>() * std::f64::consts::TAU;
            let d = 1.0 + rng.gen::<f64>();
            assert_eq!(g.eval(&[d * th.cos(), d * th.sin()]), 0.0);
        }
    }

    #[test]
    fn scaling_definition() {
        let f = build_mollifier(2, 1, 1.0).unwrap();
        let s = f.scale(0.5).unwrap();
        assert!((s.eval1(0.3) - 2.0 * f.eval1(0.6)).abs() <= 1e-15 * f.eval1(0.6).abs());
        let id = f.scale(1.0).unwrap();
        for j in 0..50 {
            let x = -1.0 + j as f64 / 25.0;
            assert_eq!(id.eval1(x), f.eval1(x));
        }
        assert!(f.scale(0.0).is_err());
        assert!(f.scale(1.5).is_err());
    }

    #[test]
    fn scaling_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let f = build_mollifier_at(1, 1, 0.9, [0.15, 0.0]).unwrap();
        for _ in 0..5 {
            let eps = rng.gen_range(0.01..1.0);
            let s = f.scale(eps).unwrap();
            for k in 0..=4 {
                let base = f.moment(MultiIndex::d1(k)).value;
                let scaled = s.moment(MultiIndex::d1(k)).value;
                let expected = eps.powi(k as i32) * base;
                assert!(
                    (scaled - expected).abs() <= 1e-10 * expected.abs().max(1e-3),
                    "eps={eps} k={k}: {scaled} vs {expected}"
                );
            }
        }
    }

    #[test]
    fn translation_round_trip_and_moment() {
        let f = build_mollifier(0, 1, 1.0).unwrap();
        let g = f.translate1(0.37).translate1(-0.37);
        for j in 0..100 {
            let x = -1.2 + j as f64 * 0.024;
            assert_eq!(g.eval1(x).to_bits(), f.eval1(x).to_bits());
        }
        let shifted = f.translate1(0.37);
        let m1 = shifted.moment(MultiIndex::d1(1)).value;
        let expected = f.moment(MultiIndex::d1(1)).value + 0.37 * f.moment(MultiIndex::ZERO).value;
        assert!((m1 - expected).abs() < 1e-12);
        assert!((m1 - oracle_moment(&shifted, 1)).abs() < 1e-12);
        assert_eq!(f.translate1(0.0).eval1(0.2), f.eval1(0.2));
    }

    #[test]
    fn derivative_moment_by_parts() {
        let f = build_mollifier_at(1, 1, 0.8, [0.1, 0.0]).unwrap();
        let m1 = f.moment(MultiIndex::d1(1)).value;
        let dm = derivative_moment(&f, MultiIndex::d1(2), MultiIndex::d1(1));
        assert!((dm + 2.0 * m1).abs() < 1e-14);
        assert_eq!(derivative_moment(&f, MultiIndex::d1(1), MultiIndex::d1(2)), 0.0);
        let g = build_mollifier(2, 1, 1.0).unwrap();
        assert!(derivative_moment(&g, MultiIndex::d1(2), MultiIndex::d1(1)).abs() <= 2e-10);
    }

    #[test]
    fn derivative_moment_matches_numerical_differentiation() {
        let fs = [
            build_mollifier(2, 1, 1.0).unwrap(),
            build_mollifier_at(1, 1, 0.6, [-0.2, 0.0]).unwrap(),
        ];
        for f in &fs {
            for (b, g) in [(1, 1), (2, 1), (3, 2), (2, 2), (4, 1)] {
                let h = 1e-5;
                let mut direct = 0.0;
                f.for_each_node(QuadratureGrid::DEFAULT_1D, |x, w| {
                    let d = if g == 1 {
                        (f.eval1(x[0] + h) - f.eval1(x[0] - h)) / (2.0 * h)
                    } else {
                        (f.eval1(x[0] + h) - 2.0 * f.eval1(x[0]) + f.eval1(x[0] - h)) / (h * h)
                    };
                    direct += w * x[0].powi(b) * d;
                });
                let exact = derivative_moment(f, MultiIndex::d1(b as u32), MultiIndex::d1(g));
                assert!((direct - exact).abs() < 1e-6, "b={b} g={g}: {direct} vs {exact}");
            }
        }
    }

    #[test]
    fn analytic_partial_matches_richardson() {
        let f = build_mollifier_at(2, 1, 0.8, [0.1, 0.0]).unwrap().scale(0.3).unwrap();
        let df = f.partial(0);
        for j in 1..20 {
            let x = f.center()[0] - f.radius() + j as f64 * f.radius() / 10.0;
            let numeric = f.derivative_at(&[x, 0.0], MultiIndex::d1(1));
            assert!((df.eval1(x) - numeric).abs() < 1e-9 * f.sup_norm() / f.radius());
        }
        let mass = df.integral();
        assert!(mass.abs() < 1e-12);
    }

    #[test]
    fn closed_form_derivatives_match_differences() {
        let phi = build_mollifier_at(3, 1, 0.8, [0.1, 0.0]).unwrap();
        for k in 1..=4u32 {
            let h = numerics::relative_step(k) * phi.radius();
            for x in [-0.5, -0.1, 0.0, 0.37, 0.8] {
                let exact = phi.derivative_at(&[x, 0.0], MultiIndex::d1(k));
                let fd = numerics::richardson_derivative(&|s: f64| phi.eval1(s), x, k, h, 2);
                let tol = [0.0, 1e-9, 1e-8, 1e-6, 1e-4][k as usize];
                assert!((exact - fd).abs() <= tol * exact.abs().max(1.0), "k={k} x={x}: {exact} vs {fd}");
            }
        }
        // Closed form through partial() agrees with derivative_at.
        let d2 = phi.partial(0).partial(0);
        assert!((d2.eval1(0.2) - phi.derivative_at(&[0.2, 0.0], MultiIndex::d1(2))).abs() < 1e-12);
        let psi = build_mollifier(1, 2, 1.0).unwrap().scale(0.5).unwrap().translate(&[0.1, -0.2]);
        let mixed = psi.derivative_at(&[0.05, -0.1], MultiIndex([1, 1]));
        let h = 1e-3;
        let fd = (psi.eval(&[0.05 + h, -0.1 + h]) - psi.eval(&[0.05 + h, -0.1 - h]) - psi.eval(&[0.05 - h, -0.1 + h])
            + psi.eval(&[0.05 - h, -0.1 - h]))
            / (4.0 * h * h);
        assert!((mixed - fd).abs() <= 1e-4 * mixed.abs().max(1.0), "{mixed} vs {fd}");
    }
}
