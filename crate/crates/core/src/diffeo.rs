//! Diffeomorphisms, their action on representatives and the transformation of
//! test objects, with partial domains.

use std::fmt;
use std::sync::Arc;

use crate::basic_space::{Formalism, Representative};
use crate::error::{Error, Result};
use crate::geometry::{self, Domain, MultiIndex, Point};
use crate::numerics;
use crate::test_objects::{PathMode, TestObjectPath};
use crate::testfunc::TestFunction;

pub type PointMap = Arc<dyn Fn(&Point) -> Point + Send + Sync>;
pub type Matrix2 = [[f64; 2]; 2];
pub type JacobianMap = Arc<dyn Fn(&Point) -> Matrix2 + Send + Sync>;

/// Safety factor applied to sampled Lipschitz constants in two dimensions.
pub const LIPSCHITZ_SAFETY: f64 = 1.1;

/// Smallest accepted `eps_0`.
pub const MIN_EPS0: f64 = 9.5367431640625e-7; // 2^-20

/// Names accepted by [`Diffeomorphism::catalog`].
pub const CATALOG: &[&str] = &["id", "scale2", "shift1", "sine", "cubic", "affine:A:B", "sine:A:B", "cubic:C"];

/// A diffeomorphism `mu: source -> target` with its inverse and the Jacobian
/// of the inverse.
#[derive(Clone)]
pub struct Diffeomorphism {
    name: String,
    dim: usize,
    forward: PointMap,
    inverse: PointMap,
    inverse_jacobian: JacobianMap,
    /// One-pass `(mu^-1 y, det D mu^-1 y)` for maps with an iterative inverse.
    inverse_with_det: Option<Arc<dyn Fn(&Point) -> (Point, f64) + Send + Sync>>,
    /// `mu'` of a one-dimensional map.
    derivative1: Option<Arc<dyn Fn(f64) -> f64 + Send + Sync>>,
    /// `(d, det D mu^-1)` with `mu(x + d) - mu(x) = dy`, solved without cancellation.
    increment_inverse: Option<Arc<dyn Fn(f64, f64) -> (f64, f64) + Send + Sync>>,
    source: Domain,
    target: Domain,
    identity: bool,
}

impl fmt::Debug for Diffeomorphism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Diffeomorphism({}: {} -> {})", self.name, self.source, self.target)
    }
}

fn det2(m: &Matrix2) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

fn inv2(m: &Matrix2) -> Matrix2 {
    let d = det2(m);
    [[m[1][1] / d, -m[0][1] / d], [-m[1][0] / d, m[0][0] / d]]
}

fn matmul2(a: &Matrix2, b: &Matrix2) -> Matrix2 {
    let mut c = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

/// Spectral norm of a 2x2 matrix.
fn norm2(m: &Matrix2) -> f64 {
    let a = m[0][0] * m[0][0] + m[1][0] * m[1][0];
    let b = m[0][0] * m[0][1] + m[1][0] * m[1][1];
    let d = m[0][1] * m[0][1] + m[1][1] * m[1][1];
    let tr = a + d;
    let disc = ((a - d) * (a - d) + 4.0 * b * b).sqrt();
    (0.5 * (tr + disc)).sqrt()
}

fn jac1(d: f64) -> Matrix2 {
    [[d, 0.0], [0.0, 1.0]]
}

fn newton1<F: Fn(f64) -> (f64, f64)>(f: F, y: f64, start: f64) -> f64 {
    let mut x = start;
    let mut last = f64::INFINITY;
    for _ in 0..60 {
        let (v, dv) = f(x);
        let step = (v - y) / dv;
        // Stop at rounding level: tiny or no longer shrinking steps.
        if step == 0.0 || (step.abs() >= last && step.abs() <= 1e-12 * x.abs().max(1e-300)) {
            break;
        }
        x -= step;
        if step.abs() <= f64::EPSILON * x.abs() {
            break;
        }
        last = step.abs();
    }
    x
}

fn solve_increment(inc: &dyn Fn(f64, f64) -> f64, deriv: &dyn Fn(f64) -> f64, x: f64, dy: f64) -> (f64, f64) {
    let mut d = dy / deriv(x);
    let mut last = f64::INFINITY;
    for _ in 0..60 {
        let step = (inc(x, d) - dy) / deriv(x + d);
        if step == 0.0 || (step.abs() >= last && step.abs() <= 1e-12 * d.abs()) {
            break;
        }
        d -= step;
        if step.abs() <= f64::EPSILON * d.abs() {
            break;
        }
        last = step.abs();
    }
    (d, 1.0 / deriv(x + d))
}

impl Diffeomorphism {
    /// A one-dimensional map from closures for `mu`, `mu^-1` and `mu'`.
    pub fn from_1d<F, G, D>(name: &str, forward: F, inverse: G, derivative: D) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
        G: Fn(f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let inverse = Arc::new(inverse);
        let derivative = Arc::new(derivative);
        let (inv2, inv3, d2) = (inverse.clone(), inverse.clone(), derivative.clone());
        let d3: Arc<dyn Fn(f64) -> f64 + Send + Sync> = derivative.clone();
        Diffeomorphism {
            name: name.to_string(),
            dim: 1,
            forward: Arc::new(move |x| [forward(x[0]), 0.0]),
            inverse: Arc::new(move |y| [inverse(y[0]), 0.0]),
            inverse_jacobian: Arc::new(move |y| jac1(1.0 / derivative(inv2(y[0])))),
            inverse_with_det: Some(Arc::new(move |y| {
                let x = inv3(y[0]);
                ([x, 0.0], 1.0 / d2(x))
            })),
            derivative1: Some(d3),
            increment_inverse: None,
            source: Domain::whole(1),
            target: Domain::whole(1),
            identity: false,
        }
    }

    /// Registers `inc(x, d) = mu(x + d) - mu(x)` evaluated without
    /// cancellation; transformed test objects then resolve small increments to
    /// full relative precision.
    pub fn with_increment<I>(mut self, inc: I) -> Self
    where
        I: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        if let Some(deriv) = self.derivative1.clone() {
            self.increment_inverse = Some(Arc::new(move |x, dy| solve_increment(&inc, &*deriv, x, dy)));
        }
        self
    }

    pub fn identity(dim: usize) -> Self {
        Diffeomorphism {
            name: "id".into(),
            dim,
            forward: Arc::new(|x| *x),
            inverse: Arc::new(|y| *y),
            inverse_jacobian: Arc::new(|_| [[1.0, 0.0], [0.0, 1.0]]),
            inverse_with_det: None,
            derivative1: None,
            increment_inverse: None,
            source: Domain::whole(dim),
            target: Domain::whole(dim),
            identity: true,
        }
    }

    /// `x -> a x + b`.
    pub fn affine(a: f64, b: f64) -> Result<Self> {
        if a == 0.0 || !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidArgument(format!("affine map needs finite a != 0 (got a = {a})")));
        }
        Ok(Self::from_1d(&format!("affine:{a}:{b}"), move |x| a * x + b, move |y| (y - b) / a, move |_| a).with_increment(move |_, d| a * d))
    }

    /// `x -> x + a sin(b x)`, a global diffeomorphism when `|a b| < 1`.
    pub fn sine(a: f64, b: f64) -> Result<Self> {
        if (a * b).abs() >= 1.0 {
            return Err(Error::InvalidArgument(format!("x + {a} sin({b} x) is not monotone")));
        }
        let f = move |x: f64| (x + a * (b * x).sin(), 1.0 + a * b * (b * x).cos());
        Ok(Self::from_1d(
            &format!("sine:{a}:{b}"),
            move |x| x + a * (b * x).sin(),
            move |y| newton1(f, y, y),
            move |x| 1.0 + a * b * (b * x).cos(),
        )
        .with_increment(move |x, d| d + 2.0 * a * (b * (x + 0.5 * d)).cos() * (0.5 * b * d).sin()))
    }

    /// `x -> x^3 + c x` for `c > 0`.
    pub fn cubic(c: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(Error::InvalidArgument(format!("x^3 + {c} x needs c > 0")));
        }
        let f = move |x: f64| (x * x * x + c * x, 3.0 * x * x + c);
        Ok(Self::from_1d(
            &format!("cubic:{c}"),
            move |x| x * x * x + c * x,
            move |y| {
                let disc = (0.25 * y * y + c * c * c / 27.0).sqrt();
                let start = (0.5 * y + disc).cbrt() + (0.5 * y - disc).cbrt();
                newton1(f, y, start)
            },
            move |x| 3.0 * x * x + c,
        )
        .with_increment(move |x, d| d * (3.0 * x * x + 3.0 * x * d + d * d + c)))
    }

    /// `x -> A x + b` in the plane.
    pub fn linear2(a: Matrix2, b: Point) -> Result<Self> {
        let d = det2(&a);
        if d == 0.0 || !d.is_finite() {
            return Err(Error::InvalidArgument("singular linear map".into()));
        }
        let ai = inv2(&a);
        Ok(Diffeomorphism {
            name: format!("linear2:{a:?}:{b:?}"),
            dim: 2,
            forward: Arc::new(move |x| {
                [a[0][0] * x[0] + a[0][1] * x[1] + b[0], a[1][0] * x[0] + a[1][1] * x[1] + b[1]]
            }),
            inverse: Arc::new(move |y| {
                let z = [y[0] - b[0], y[1] - b[1]];
                [ai[0][0] * z[0] + ai[0][1] * z[1], ai[1][0] * z[0] + ai[1][1] * z[1]]
            }),
            inverse_jacobian: Arc::new(move |_| ai),
            inverse_with_det: None,
            derivative1: None,
            increment_inverse: None,
            source: Domain::whole(2),
            target: Domain::whole(2),
            identity: false,
        })
    }

    /// Looks up a named one-dimensional map. Parametrized forms are
    /// `affine:A:B`, `sine:A:B` and `cubic:C`.
    pub fn catalog(name: &str) -> Result<Self> {
        let unknown = || Error::UnknownName {
            kind: "diffeomorphism",
            name: name.to_string(),
        };
        let parts: Vec<&str> = name.split(':').collect();
        let params = |n: usize| -> Result<Vec<f64>> {
            if parts.len() != n + 1 {
                return Err(unknown());
            }
            parts[1..].iter().map(|p| p.trim().parse::<f64>().map_err(|_| unknown())).collect()
        };
        let mut map = match parts[0] {
            "id" if parts.len() == 1 => Self::identity(1),
            "scale2" if parts.len() == 1 => Self::affine(2.0, 0.0)?,
            "shift1" if parts.len() == 1 => Self::affine(1.0, 1.0)?,
            "sine" if parts.len() == 1 => Self::sine(0.25, 1.0)?,
            "cubic" if parts.len() == 1 => Self::cubic(1.0)?,
            "affine" => {
                let p = params(2)?;
                Self::affine(p[0], p[1])?
            }
            "sine" => {
                let p = params(2)?;
                Self::sine(p[0], p[1])?
            }
            "cubic" => {
                let p = params(1)?;
                Self::cubic(p[0])?
            }
            _ => return Err(unknown()),
        };
        map.name = name.to_string();
        Ok(map)
    }

    /// Restricts the target to `target` and sets the source to its preimage.
    pub fn restrict(mut self, target: Domain) -> Result<Self> {
        if target.dim != self.dim {
            return Err(Error::InvalidArgument("domain dimension mismatch".into()));
        }
        self.source = self.preimage(&target)?;
        self.target = target;
        Ok(self)
    }

    fn preimage(&self, target: &Domain) -> Result<Domain> {
        if target.is_whole() {
            return Ok(Domain::whole(self.dim));
        }
        if self.identity {
            return Ok(*target);
        }
        if self.dim == 1 {
            let end = |v: f64| if v.is_finite() { (self.inverse)(&[v, 0.0])[0] } else { v };
            let (a, b) = (end(target.lo[0]), end(target.hi[0]));
            if a <= b {
                return Ok(Domain::interval(a, b));
            }
            return Ok(Domain::interval(
                if b.is_finite() { b } else { -b },
                if a.is_finite() { a } else { -a },
            ));
        }
        Err(Error::InvalidArgument("planar maps are only supported on the whole plane".into()))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn source(&self) -> &Domain {
        &self.source
    }

    pub fn target(&self) -> &Domain {
        &self.target
    }

    pub fn is_identity(&self) -> bool {
        self.identity
    }

    pub fn forward(&self, x: &Point) -> Point {
        (self.forward)(x)
    }

    pub fn inverse(&self, y: &Point) -> Point {
        (self.inverse)(y)
    }

    /// `D mu^-1 (y)`.
    pub fn inverse_jacobian(&self, y: &Point) -> Matrix2 {
        (self.inverse_jacobian)(y)
    }

    /// `det D mu^-1 (y)`.
    pub fn inverse_det(&self, y: &Point) -> f64 {
        let j = self.inverse_jacobian(y);
        if self.dim == 1 {
            j[0][0]
        } else {
            det2(&j)
        }
    }

    /// `(mu^-1 y, det D mu^-1 y)`, inverting only once.
    pub fn inverse_and_det(&self, y: &Point) -> (Point, f64) {
        match &self.inverse_with_det {
            Some(f) => f(y),
            None => (self.inverse(y), self.inverse_det(y)),
        }
    }

    /// `(d, det D mu^-1 (mu x + dy))` with `mu(x + d) = mu(x) + dy`.
    pub fn inverse_increment(&self, x: &Point, dy: &Point) -> (Point, f64) {
        if self.identity {
            return (*dy, 1.0);
        }
        if let Some(f) = &self.increment_inverse {
            let (d, det) = f(x[0], dy[0]);
            return ([d, 0.0], det);
        }
        let (pre, det) = self.inverse_and_det(&geometry::add(&self.forward(x), dy));
        (geometry::sub(&pre, x), det)
    }

    /// `|| D mu (x) ||`.
    fn forward_jacobian_norm(&self, x: &Point) -> f64 {
        let j = self.inverse_jacobian(&self.forward(x));
        if self.dim == 1 {
            1.0 / j[0][0].abs()
        } else {
            norm2(&inv2(&j))
        }
    }

    /// Lipschitz bound of `mu` on `B(center, radius)`, sampled with a safety factor.
    pub fn lipschitz_on_ball(&self, center: &Point, radius: f64) -> f64 {
        let n = 8;
        let mut best: f64 = 0.0;
        for i in 0..=n {
            let u = -1.0 + 2.0 * i as f64 / n as f64;
            if self.dim == 1 {
                best = best.max(self.forward_jacobian_norm(&[center[0] + radius * u, 0.0]));
                continue;
            }
            for j in 0..=n {
                let v = -1.0 + 2.0 * j as f64 / n as f64;
                if u * u + v * v <= 1.0 {
                    best = best.max(self.forward_jacobian_norm(&[center[0] + radius * u, center[1] + radius * v]));
                }
            }
        }
        best * LIPSCHITZ_SAFETY
    }

    /// A ball containing `mu(B(center, radius))`; exact in one dimension.
    pub fn image_ball(&self, center: &Point, radius: f64) -> (Point, f64) {
        if self.dim == 1 {
            let a = self.forward(&[center[0] - radius, 0.0])[0];
            let b = self.forward(&[center[0] + radius, 0.0])[0];
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            return ([0.5 * (lo + hi), 0.0], 0.5 * (hi - lo));
        }
        (self.forward(center), radius * self.lipschitz_on_ball(center, radius))
    }

    /// `(psi o mu^-1) |det D mu^-1|`, supported in `mu(supp psi)`.
    pub fn push_density(&self, psi: &TestFunction) -> Result<TestFunction> {
        if self.identity {
            return Ok(psi.clone());
        }
        let (center, radius) = self.image_ball(&psi.center(), psi.radius());
        let (map, inner) = (self.clone(), psi.clone());
        TestFunction::from_evaluator(
            self.dim,
            center,
            radius,
            Arc::new(move |y| {
                let (x, det) = map.inverse_and_det(y);
                inner.eval(&x) * det.abs()
            }),
        )
    }

    /// `mu o nu`, acting `nu.source -> mu.target`.
    pub fn compose(mu: &Diffeomorphism, nu: &Diffeomorphism) -> Result<Diffeomorphism> {
        if mu.dim != nu.dim {
            return Err(Error::InvalidArgument("dimension mismatch in composition".into()));
        }
        let (m1, n1) = (mu.clone(), nu.clone());
        let (m2, n2) = (mu.clone(), nu.clone());
        let (m3, n3) = (mu.clone(), nu.clone());
        let dim = mu.dim;
        let composed = Diffeomorphism {
            name: format!("{}.{}", mu.name, nu.name),
            dim,
            forward: Arc::new(move |x| m1.forward(&n1.forward(x))),
            inverse: Arc::new(move |y| n2.inverse(&m2.inverse(y))),
            inverse_jacobian: Arc::new(move |y| {
                let z = m3.inverse(y);
                let outer = n3.inverse_jacobian(&z);
                let inner = m3.inverse_jacobian(y);
                if dim == 1 {
                    jac1(outer[0][0] * inner[0][0])
                } else {
                    matmul2(&outer, &inner)
                }
            }),
            inverse_with_det: None,
            derivative1: None,
            increment_inverse: None,
            source: Domain::whole(dim),
            target: Domain::whole(dim),
            identity: mu.identity && nu.identity,
        };
        composed.restrict(mu.target)
    }

    /// The inverse map `mu^-1: target -> source`.
    pub fn inverted(&self) -> Result<Diffeomorphism> {
        let (a, b, c) = (self.clone(), self.clone(), self.clone());
        let dim = self.dim;
        Ok(Diffeomorphism {
            name: format!("inv({})", self.name),
            dim,
            forward: Arc::new(move |y| a.inverse(y)),
            inverse: Arc::new(move |x| b.forward(x)),
            inverse_jacobian: Arc::new(move |x| {
                let j = c.inverse_jacobian(&c.forward(x));
                if dim == 1 {
                    jac1(1.0 / j[0][0])
                } else {
                    inv2(&j)
                }
            }),
            inverse_with_det: None,
            derivative1: None,
            increment_inverse: None,
            source: self.target,
            target: self.source,
            identity: self.identity,
        })
    }

    /// The test function inserted into `R` by the pullback at `x_src`:
    /// `xi -> phi(mu^-1(xi + mu x_src) - x_src) |det D mu^-1(xi + mu x_src)|`.
    pub fn transported_test_function(&self, phi: &TestFunction, x_src: &Point) -> Result<TestFunction> {
        let y = self.forward(x_src);
        Ok(self.push_density(&phi.translate(x_src))?.translate(&geometry::scale(&y, -1.0)))
    }
}

/// `mu^ R (phi, x) = R(T(phi, x), mu x)` for `R` in the C convention on the
/// target of `mu`. The identity map returns `R` itself.
pub fn pullback_rep(map: &Diffeomorphism, r: &Representative) -> Result<Representative> {
    if map.is_identity() {
        return Ok(r.clone());
    }
    if r.formalism() == Formalism::J {
        return Err(Error::FormalismMismatch {
            left: "C",
            right: "J",
        });
    }
    if r.dim() != map.dim() {
        return Err(Error::InvalidArgument("dimension mismatch in pullback".into()));
    }
    let (m1, r1) = (map.clone(), r.clone());
    let eval = Arc::new(move |phi: &TestFunction, x: &Point| {
        let t = m1.transported_test_function(phi, x)?;
        r1.eval(&t, &m1.forward(x))
    });
    let exp_phase = r.exp_phase.as_ref().map(|_| {
        let (m2, r2) = (map.clone(), r.clone());
        Arc::new(move |phi: &TestFunction, x: &Point| {
            let t = m2.transported_test_function(phi, x)?;
            let y = m2.forward(x);
            r2.phase_exponent(&t, &y).expect("exp-phase representative")
        }) as crate::basic_space::RealRepFn
    });
    Ok(Representative {
        dim: r.dim(),
        formalism: Formalism::C,
        domain: *map.source(),
        linear: r.is_linear(),
        phi_independent: r.is_phi_independent(),
        x_independent: false,
        eval,
        exp_phase,
        label: format!("{}^({})", map.name(), r.label()),
    })
}

/// Partial domain `D` of a transformed test object with the `eps_0` found
/// for each registered compact.
#[derive(Clone)]
pub struct PartialDomain {
    predicate: Arc<dyn Fn(f64, &Point) -> bool + Send + Sync>,
    full: bool,
    records: Vec<(Vec<Point>, Option<f64>)>,
}

impl fmt::Debug for PartialDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PartialDomain")
            .field("full", &self.full)
            .field("eps0", &self.records.iter().map(|r| r.1).collect::<Vec<_>>())
            .finish()
    }
}

impl PartialDomain {
    pub fn full() -> Self {
        PartialDomain {
            predicate: Arc::new(|_, _| true),
            full: true,
            records: Vec::new(),
        }
    }

    pub fn from_predicate<F: Fn(f64, &Point) -> bool + Send + Sync + 'static>(f: F) -> Self {
        PartialDomain {
            predicate: Arc::new(f),
            full: false,
            records: Vec::new(),
        }
    }

    pub fn is_full(&self) -> bool {
        self.full
    }

    pub fn contains(&self, eps: f64, x: &Point) -> bool {
        eps > 0.0 && eps <= 1.0 && (self.predicate)(eps, x)
    }

    /// Largest `eps_0 = 2^-j <= 1` with `(eps, x)` admissible for every
    /// sampled `eps <= eps_0` and `x` in `compact`, or `None` below 2^-20.
    pub fn search_eps0(&self, compact: &[Point]) -> Option<f64> {
        let mut eps0 = 1.0;
        while eps0 >= MIN_EPS0 {
            let fits = (0..=24).all(|j| {
                let eps = eps0 * 0.5f64.powi(j);
                compact.iter().all(|x| self.contains(eps, x))
            });
            if fits {
                return Some(eps0);
            }
            eps0 *= 0.5;
        }
        None
    }

    pub fn register(&mut self, compact: Vec<Point>) -> Option<f64> {
        let eps0 = self.search_eps0(&compact);
        self.records.push((compact, eps0));
        eps0
    }

    pub fn records(&self) -> &[(Vec<Point>, Option<f64>)] {
        &self.records
    }

    /// `eps_0` recorded for a compact containing every point of `compact`.
    pub fn eps0_for(&self, compact: &[Point]) -> Option<f64> {
        self.records
            .iter()
            .filter(|(l, _)| compact.iter().all(|p| l.contains(p)))
            .filter_map(|(_, e)| *e)
            .fold(None, |acc: Option<f64>, e| Some(acc.map_or(e, |a| a.max(e))))
    }
}

/// The transformed test object
/// `phi(eps, x)(xi) = phi~(eps, mu^-1 x)((mu^-1(eps xi + x) - mu^-1 x) / eps) |det D mu^-1(eps xi + x)|`
/// together with its partial domain; `eps_0` is registered for each compact.
pub fn transform_test_object(
    map: &Diffeomorphism,
    source: &TestObjectPath,
    compacts: &[Vec<Point>],
) -> Result<(TestObjectPath, PartialDomain)> {
    if map.dim() != source.dim() {
        return Err(Error::InvalidArgument("dimension mismatch in transformation".into()));
    }
    if map.is_identity() {
        let mut domain = source.partial_domain().cloned().unwrap_or_else(PartialDomain::full);
        for l in compacts {
            domain.register(l.clone());
        }
        return Ok((source.clone().with_partial_domain(Some(domain.clone())), domain));
    }
    let reach = source.support_bound();
    let (m, s) = (map.clone(), source.clone());
    let mut domain = PartialDomain::from_predicate(move |eps, x| {
        if !m.target().contains(x) {
            return false;
        }
        let xs = m.inverse(x);
        let inside_source = match s.partial_domain() {
            Some(d) => d.contains(eps, &xs),
            None => true,
        };
        inside_source && m.source().contains_ball(&xs, eps * reach)
    });
    for l in compacts {
        domain.register(l.clone());
    }

    // Declared support bound: the source bound stretched by the largest
    // derivative of mu near the registered compacts.
    // Without registered compacts the window [-4, 4]^s stands in for them.
    let mut lip: f64 = 0.0;
    for (l, eps0) in domain.records() {
        let e = eps0.unwrap_or(MIN_EPS0);
        for x in l {
            let xs = map.inverse(x);
            lip = lip.max(map.lipschitz_on_ball(&xs, e * reach));
        }
    }
    if domain.records().is_empty() {
        lip = map.lipschitz_on_ball(&[0.0; 2], 4.0 + reach);
    }
    let bound = reach * lip * if map.dim() == 1 { 1.0 } else { LIPSCHITZ_SAFETY };

    let (m, s) = (map.clone(), source.clone());
    let eval = move |eps: f64, x: &Point| -> Result<TestFunction> {
        let xs = m.inverse(x);
        let base = s.at(eps, &xs)?;
        let dim = m.dim();
        let (center, radius) = {
            let (c, r) = m.image_ball(&geometry::add(&xs, &geometry::scale(&base.center(), eps)), eps * base.radius());
            (geometry::scale(&geometry::sub(&c, x), 1.0 / eps), r / eps)
        };
        let m2 = m.clone();
        TestFunction::from_evaluator(
            dim,
            center,
            radius,
            Arc::new(move |xi| {
                let (d, det) = m2.inverse_increment(&xs, &geometry::scale(xi, eps));
                base.eval(&geometry::scale(&d, 1.0 / eps)) * det.abs()
            }),
        )
    };
    let mode = match source.mode() {
        PathMode::Static | PathMode::EpsPath => PathMode::FullPath,
        m => m,
    };
    let path = TestObjectPath::new(
        &format!("{}^{}", map.name(), source.id()),
        map.dim(),
        mode,
        bound,
        eval,
    )
    .with_partial_domain(Some(domain.clone()));
    Ok((path, domain))
}

/// Outcome of the numerical check of the test-object requirements on a
/// compact.
#[derive(Debug, Clone, PartialEq)]
pub struct ZReport {
    pub membership: bool,
    pub support: bool,
    pub max_support_reach: f64,
    pub declared_bound: f64,
    pub derivative_bounds: Vec<(MultiIndex, f64)>,
    pub bounded: bool,
    pub passed: bool,
}

/// Checks membership in `D`, the uniform support bound, and uniform bounds on
/// `xi`-derivatives up to order 4 over `(0, eps0] x L`.
pub fn check_z_requirements(path: &TestObjectPath, domain: &PartialDomain, compact: &[Point], eps0: f64) -> ZReport {
    let levels = 8;
    let eps_grid: Vec<f64> = (0..levels).map(|j| eps0 * 0.5f64.powi(j)).collect();
    let membership = eps_grid.iter().all(|e| compact.iter().all(|x| domain.contains(*e, x)));
    let declared_bound = path.support_bound();
    let betas = MultiIndex::all(path.dim(), 0, 4);
    let mut reach_per_eps = Vec::with_capacity(levels as usize);
    let mut sup_per_eps: Vec<Vec<f64>> = Vec::with_capacity(levels as usize);
    let mut ok = true;
    for &eps in &eps_grid {
        let mut reach: f64 = 0.0;
        let mut sups = vec![0.0f64; betas.len()];
        for x in compact {
            let Ok(phi) = path.at(eps, x) else {
                ok = false;
                continue;
            };
            reach = reach.max(geometry::norm(&phi.center(), path.dim()) + phi.radius());
            let samples = sample_points(&phi, 16);
            for (slot, beta) in sups.iter_mut().zip(&betas) {
                for p in &samples {
                    *slot = slot.max(phi.derivative_at(p, *beta).abs());
                }
            }
        }
        reach_per_eps.push(reach);
        sup_per_eps.push(sups);
    }
    let max_support_reach = reach_per_eps.iter().copied().fold(0.0, f64::max);
    let growth = |series: &[f64]| -> bool {
        let first = series.first().copied().unwrap_or(0.0);
        let last = series.last().copied().unwrap_or(0.0);
        let xs: Vec<f64> = eps_grid.iter().map(|e| e.ln()).collect();
        let ys: Vec<f64> = series.iter().map(|v| v.max(1e-300).ln()).collect();
        let (slope, _, _) = numerics::linear_fit(&xs, &ys);
        slope < -0.3 && last > 2.0 * first
    };
    let support = ok && max_support_reach <= declared_bound * (1.0 + 1e-12) && !growth(&reach_per_eps);
    let derivative_bounds: Vec<(MultiIndex, f64)> = betas
        .iter()
        .enumerate()
        .map(|(i, b)| (*b, sup_per_eps.iter().map(|s| s[i]).fold(0.0, f64::max)))
        .collect();
    let bounded = ok
        && derivative_bounds.iter().all(|(_, v)| v.is_finite())
        && (0..betas.len()).all(|i| !growth(&sup_per_eps.iter().map(|s| s[i]).collect::<Vec<_>>()));
    ZReport {
        membership,
        support,
        max_support_reach,
        declared_bound,
        derivative_bounds,
        bounded,
        passed: membership && support && bounded,
    }
}

fn sample_points(phi: &TestFunction, n: usize) -> Vec<Point> {
    let (c, r) = (phi.center(), phi.radius());
    let mut out = Vec::new();
    for i in 1..n {
        let u = -1.0 + 2.0 * i as f64 / n as f64;
        if phi.dim() == 1 {
            out.push([c[0] + r * u, 0.0]);
        } else {
            for j in 1..n {
                let v = -1.0 + 2.0 * j as f64 / n as f64;
                if u * u + v * v < 1.0 {
                    out.push([c[0] + r * u, c[1] + r * v]);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basic_space::{embed_c, embed_sigma};
    use crate::distributions::{classical_pullback, Distribution, SmoothFn};
    use crate::testfunc::{build_mollifier, build_mollifier_at};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn catalog() -> Vec<Diffeomorphism> {
        ["scale2", "shift1", "sine", "cubic", "affine:-1.5:0.25", "sine:0.5:1.5", "cubic:0.3"]
            .iter()
            .map(|n| Diffeomorphism::catalog(n).unwrap())
            .collect()
    }

    #[test]
    fn inverse_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for m in catalog() {
            for _ in 0..200 {
                let x = rng.gen_range(-5.0..5.0);
                let back = m.inverse(&m.forward(&[x, 0.0]))[0];
                assert!((back - x).abs() <= 1e-10 * x.abs().max(1.0), "{}: {x} -> {back}", m.name());
            }
        }
    }

    #[test]
    fn inverse_determinant_matches_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for m in catalog() {
            for _ in 0..50 {
                let y: f64 = rng.gen_range(-5.0..5.0);
                let h = 1e-5 * y.abs().max(1.0);
                let fd = (m.inverse(&[y + h, 0.0])[0] - m.inverse(&[y - h, 0.0])[0]) / (2.0 * h);
                let det = m.inverse_det(&[y, 0.0]);
                assert!((fd - det).abs() <= 1e-6 * det.abs(), "{}: {fd} vs {det}", m.name());
            }
        }
    }

    #[test]
    fn catalog_rejects_unknown_names() {
        assert!(matches!(Diffeomorphism::catalog("warp"), Err(Error::UnknownName { .. })));
        assert!(Diffeomorphism::catalog("affine:1").is_err());
        assert!(Diffeomorphism::catalog("sine:1:2").is_err());
        assert!(Diffeomorphism::catalog("id").unwrap().is_identity());
    }

    #[test]
    fn restricted_domains() {
        let m = Diffeomorphism::catalog("scale2").unwrap().restrict(Domain::interval(-4.0, 4.0)).unwrap();
        assert_eq!(m.source(), &Domain::interval(-2.0, 2.0));
        let n = Diffeomorphism::affine(-2.0, 0.0).unwrap().restrict(Domain::interval(-4.0, 2.0)).unwrap();
        assert_eq!(n.source(), &Domain::interval(-1.0, 2.0));
    }

    #[test]
    fn classical_pullback_examples() {
        let psi = build_mollifier_at(1, 1, 0.7, [0.1, 0.0]).unwrap();
        let delta = Distribution::dirac(1, [0.0; 2]).unwrap();
        let id = Diffeomorphism::identity(1);
        assert_eq!(classical_pullback(&id, &delta, &psi).unwrap(), delta.pair(&psi).unwrap());
        let m = Diffeomorphism::catalog("scale2").unwrap();
        let v = classical_pullback(&m, &delta, &psi).unwrap().re;
        assert!((v - 0.5 * psi.eval1(0.0)).abs() < 1e-12);
        // Oracle: pair the transformed function against a narrow unit-mass bump.
        let narrow = build_mollifier(2, 1, 1e-3).unwrap();
        let pushed = m.push_density(&psi).unwrap();
        let mut oracle = 0.0;
        narrow.for_each_node(crate::numerics::QuadratureGrid::DEFAULT_1D, |x, h| oracle += h * narrow.eval(x) * pushed.eval(x));
        assert!((v - oracle).abs() < 1e-8);

        let f = SmoothFn::sin();
        let s = m.clone();
        let u = Distribution::density(1, f.clone()).unwrap();
        let lhs = classical_pullback(&Diffeomorphism::catalog("sine").unwrap(), &u, &psi).unwrap().re;
        let sine = Diffeomorphism::catalog("sine").unwrap();
        let rhs = psi.integrate_weighted(crate::numerics::QuadratureGrid::DEFAULT_1D, |x| f.eval(&sine.forward(x)));
        assert!((lhs - rhs).abs() < 1e-8, "{lhs} vs {rhs}");
        let _ = s;
    }

    #[test]
    fn pullback_identity_and_functoriality() {
        let u = Distribution::density(1, SmoothFn::sin()).unwrap();
        let r = embed_c(&u);
        let id = pullback_rep(&Diffeomorphism::identity(1), &r).unwrap();
        let phi = build_mollifier_at(2, 1, 0.6, [0.1, 0.0]).unwrap().scale(0.2).unwrap();
        assert_eq!(id.eval1(&phi, 0.3).unwrap(), r.eval1(&phi, 0.3).unwrap());

        let mu = Diffeomorphism::catalog("scale2").unwrap();
        let nu = Diffeomorphism::catalog("shift1").unwrap();
        let composed = pullback_rep(&Diffeomorphism::compose(&mu, &nu).unwrap(), &r).unwrap();
        let sequential = pullback_rep(&nu, &pullback_rep(&mu, &r).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let x = rng.gen_range(-1.0..1.0);
            let a = composed.eval1(&phi, x).unwrap();
            let b = sequential.eval1(&phi, x).unwrap();
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn pullback_commutes_with_embedding() {
        let mu = Diffeomorphism::catalog("scale2").unwrap();
        for u in [Distribution::dirac(1, [0.0; 2]).unwrap(), Distribution::heaviside()] {
            let lhs = pullback_rep(&mu, &embed_c(&u)).unwrap();
            let rhs = embed_c(&Distribution::pullback(&mu, &u).unwrap());
            let phi = build_mollifier_at(1, 1, 0.5, [0.05, 0.0]).unwrap();
            for x in [-0.2, 0.0, 0.1] {
                let (a, b) = (lhs.eval1(&phi, x).unwrap(), rhs.eval1(&phi, x).unwrap());
                assert!((a - b).norm() < 1e-8, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn pullback_then_inverse_pullback_is_identity() {
        let mu = Diffeomorphism::catalog("sine").unwrap();
        let r = embed_c(&Distribution::density(1, SmoothFn::poly1(&[0.0, 1.0, 0.5])).unwrap());
        let back = pullback_rep(&mu.inverted().unwrap(), &pullback_rep(&mu, &r).unwrap()).unwrap();
        let phi = build_mollifier_at(1, 1, 0.5, [0.05, 0.0]).unwrap();
        for x in [-0.4, 0.3] {
            let (a, b) = (back.eval1(&phi, x).unwrap(), r.eval1(&phi, x).unwrap());
            assert!((a - b).norm() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn sigma_pullback_composes_with_map() {
        let mu = Diffeomorphism::catalog("cubic").unwrap();
        let r = pullback_rep(&mu, &embed_sigma(1, &SmoothFn::sin()).unwrap()).unwrap();
        let phi = build_mollifier(0, 1, 1.0).unwrap();
        let v = r.eval1(&phi, 0.7).unwrap().re;
        assert_eq!(v, (0.7f64.powi(3) + 0.7).sin());
    }

    #[test]
    fn pullback_reports_support_escape() {
        let mu = Diffeomorphism::catalog("scale2").unwrap().restrict(Domain::interval(-4.0, 4.0)).unwrap();
        let r = embed_c(&Distribution::heaviside().on(Domain::interval(-4.0, 4.0)).unwrap());
        let pulled = pullback_rep(&mu, &r).unwrap();
        let phi = build_mollifier(0, 1, 0.5).unwrap();
        assert!(pulled.eval1(&phi, 0.5).is_ok());
        assert!(pulled.eval1(&phi, 1.7).unwrap_err().is_domain());
    }

    #[test]
    fn transformed_object_formula_for_doubling() {
        let base = build_mollifier_at(2, 1, 0.8, [0.1, 0.0]).unwrap();
        let source = TestObjectPath::constant("c", base.clone());
        let mu = Diffeomorphism::catalog("scale2").unwrap();
        let (t, d) = transform_test_object(&mu, &source, &[]).unwrap();
        assert!(d.contains(0.3, &[0.5, 0.0]));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let eps = rng.gen_range(0.01..1.0);
            let x = rng.gen_range(-2.0..2.0);
            let xi = rng.gen_range(-2.0..2.0);
            let v = t.at(eps, &[x, 0.0]).unwrap().eval1(xi);
            let expected = 0.5 * base.eval1(xi / 2.0);
            assert!((v - expected).abs() < 1e-12, "{v} vs {expected}");
        }
    }

    #[test]
    fn transformed_mass_is_one() {
        let source = TestObjectPath::constant("c", build_mollifier_at(2, 1, 0.8, [0.1, 0.0]).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for name in ["sine", "cubic", "scale2"] {
            let mu = Diffeomorphism::catalog(name).unwrap();
            let (t, _) = transform_test_object(&mu, &source, &[]).unwrap();
            for _ in 0..10 {
                let eps = rng.gen_range(0.01..1.0);
                let x = rng.gen_range(-1.0..1.0);
                let m = t.at(eps, &[x, 0.0]).unwrap().integral();
                assert!((m - 1.0).abs() < 1e-9, "{name}: {m}");
            }
        }
    }

    #[test]
    fn identity_transformation_is_trivial() {
        let base = build_mollifier(1, 1, 1.0).unwrap();
        let source = TestObjectPath::constant("c", base.clone());
        let (t, d) = transform_test_object(&Diffeomorphism::identity(1), &source, &[]).unwrap();
        assert!(d.is_full());
        assert_eq!(t.at(0.1, &[0.3, 0.0]).unwrap().eval1(0.2), base.eval1(0.2));
    }

    #[test]
    fn eps0_on_restricted_domain() {
        let omega = Domain::interval(-4.0, 4.0);
        let mu = Diffeomorphism::catalog("scale2").unwrap().restrict(omega).unwrap();
        let source = TestObjectPath::constant("c", build_mollifier(1, 1, 1.0).unwrap());
        let l: Vec<Point> = (0..=20).map(|i| [3.0 + 0.05 * i as f64 - 0.5, 0.0]).collect();
        let (t, d) = transform_test_object(&mu, &source, std::slice::from_ref(&l)).unwrap();
        // mu^-1(L) = [1.25, 1.75] in (-2, 2): room 0.25, source reach 1.
        let eps0 = d.eps0_for(&l).unwrap();
        assert_eq!(eps0, 0.125);
        assert!(!d.contains(0.5, &[3.5, 0.0]));
        let report = check_z_requirements(&t, &d, &l, eps0);
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn z_requirements_catch_growing_support() {
        let base = build_mollifier(0, 1, 1.0).unwrap();
        let b2 = base.clone();
        let growing = TestObjectPath::new("grow", 1, PathMode::EpsPath, 1.0, move |eps, _| {
            let spread = b2.scale(eps).unwrap();
            // support radius 1/eps, unit mass
            TestFunction::from_evaluator(1, [0.0; 2], 1.0 / eps, {
                let s = spread.clone();
                Arc::new(move |x| s.eval(&[x[0] * eps * eps, 0.0]) * eps * eps)
            })
        });
        let l = vec![[0.0, 0.0], [0.5, 0.0]];
        let report = check_z_requirements(&growing, &PartialDomain::full(), &l, 0.5);
        assert!(!report.support);
        let constant = TestObjectPath::constant("c", base.clone());
        let ok = check_z_requirements(&constant, &PartialDomain::full(), &l, 1.0);
        assert!(ok.passed, "{ok:?}");
        let sup0 = ok.derivative_bounds[0].1;
        assert!((sup0 - base.sup_norm()).abs() < 1e-3 * sup0);
    }
}
