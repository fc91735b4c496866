//! Distributions as pairings against test functions.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;

use crate::diffeo::Diffeomorphism;
use crate::error::{Error, Result};
use crate::geometry::{check_dim, Domain, MultiIndex, Point};
use crate::numerics::{self, QuadratureGrid};
use crate::testfunc::TestFunction;

/// A smooth real function on R^s with symbolic derivatives where available.
#[derive(Clone)]
pub enum SmoothFn {
    /// `amp * sin(freq * x[axis] + phase)`
    Sine { amp: f64, freq: f64, phase: f64, axis: usize },
    /// `sum c_k x^k`
    Poly(Vec<(MultiIndex, f64)>),
    Custom(Arc<dyn Fn(&Point) -> f64 + Send + Sync>),
}

impl fmt::Debug for SmoothFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SmoothFn::Sine { amp, freq, phase, axis } => {
                write!(f, "{amp}*sin({freq}*x{axis}+{phase})")
            }
            SmoothFn::Poly(terms) => f.debug_list().entries(terms).finish(),
            SmoothFn::Custom(_) => f.write_str("custom"),
        }
    }
}

impl SmoothFn {
    pub fn sin() -> Self {
        SmoothFn::Sine {
            amp: 1.0,
            freq: 1.0,
            phase: 0.0,
            axis: 0,
        }
    }

    pub fn constant(c: f64) -> Self {
        SmoothFn::Poly(vec![(MultiIndex::ZERO, c)])
    }

    /// `x^k` in one variable.
    pub fn power(k: u32) -> Self {
        SmoothFn::Poly(vec![(MultiIndex::d1(k), 1.0)])
    }

    /// `sum_k coeffs[k] x^k` in one variable.
    pub fn poly1(coeffs: &[f64]) -> Self {
        SmoothFn::Poly(
            coeffs
                .iter()
                .enumerate()
                .map(|(k, c)| (MultiIndex::d1(k as u32), *c))
                .collect(),
        )
    }

    pub fn custom<F: Fn(&Point) -> f64 + Send + Sync + 'static>(f: F) -> Self {
        SmoothFn::Custom(Arc::new(f))
    }

    pub fn eval(&self, x: &Point) -> f64 {
        match self {
            SmoothFn::Sine { amp, freq, phase, axis } => amp * (freq * x[*axis] + phase).sin(),
            SmoothFn::Poly(terms) => terms.iter().map(|(k, c)| c * k.monomial(x)).sum(),
            SmoothFn::Custom(f) => f(x),
        }
    }

    pub fn eval1(&self, x: f64) -> f64 {
        self.eval(&[x, 0.0])
    }

    pub fn partial(&self, axis: usize) -> SmoothFn {
        match self {
            SmoothFn::Sine {
                amp,
                freq,
                phase,
                axis: a,
            } => {
                if *a != axis {
                    return SmoothFn::Poly(Vec::new());
                }
                SmoothFn::Sine {
                    amp: amp * freq,
                    freq: *freq,
                    phase: phase + FRAC_PI_2,
                    axis,
                }
            }
            SmoothFn::Poly(terms) => SmoothFn::Poly(
                terms
                    .iter()
                    .filter(|(k, _)| k.0[axis] > 0)
                    .map(|(k, c)| {
                        let mut d = *k;
                        d.0[axis] -= 1;
                        (d, c * k.0[axis] as f64)
                    })
                    .collect(),
            ),
            SmoothFn::Custom(f) => {
                let f = f.clone();
                SmoothFn::custom(move |x| {
                    let g = |s: f64| {
                        let mut p = *x;
                        p[axis] = s;
                        f(&p)
                    };
                    numerics::richardson_derivative(&g, x[axis], 1, 1e-3, 3)
                })
            }
        }
    }

    pub fn derivative(&self, alpha: MultiIndex) -> SmoothFn {
        let mut f = self.clone();
        for axis in 0..2 {
            for _ in 0..alpha.0[axis] {
                f = f.partial(axis);
            }
        }
        f
    }

    pub fn mul(&self, other: &SmoothFn) -> SmoothFn {
        match (self, other) {
            (SmoothFn::Poly(a), SmoothFn::Poly(b)) => {
                let mut out: Vec<(MultiIndex, f64)> = Vec::new();
                for (ka, ca) in a {
                    for (kb, cb) in b {
                        let k = ka.plus(kb);
                        match out.iter_mut().find(|(e, _)| *e == k) {
                            Some(slot) => slot.1 += ca * cb,
                            None => out.push((k, ca * cb)),
                        }
                    }
                }
                SmoothFn::Poly(out)
            }
            _ => {
                let (f, g) = (self.clone(), other.clone());
                SmoothFn::custom(move |x| f.eval(x) * g.eval(x))
            }
        }
    }
}

#[derive(Clone)]
enum Kind {
    Density(SmoothFn),
    Dirac { order: MultiIndex, position: Point },
    Heaviside,
    PrincipalValue,
    Combination(Vec<(Complex64, Distribution)>),
    Derivative { inner: Distribution, axis: usize },
    Pullback { map: Diffeomorphism, inner: Distribution },
}

/// A distribution on an open set, evaluated by pairing.
#[derive(Clone)]
pub struct Distribution {
    dim: usize,
    domain: Domain,
    grid: QuadratureGrid,
    kind: Arc<Kind>,
}

impl fmt::Debug for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &*self.kind {
            Kind::Density(g) => write!(f, "density({g:?})"),
            Kind::Dirac { order, position } => {
                write!(f, "dirac^{order}({:?})", &position[..self.dim])
            }
            Kind::Heaviside => f.write_str("heaviside"),
            Kind::PrincipalValue => f.write_str("pv(1/x)"),
            Kind::Combination(terms) => {
                f.write_str("sum(")?;
                for (a, w) in terms {
                    write!(f, "{a}*{w:?};")?;
                }
                f.write_str(")")
            }
            Kind::Derivative { inner, axis } => write!(f, "d{axis}({inner:?})"),
            Kind::Pullback { map, inner } => write!(f, "pullback[{}]({inner:?})", map.name()),
        }
    }
}

impl Distribution {
    fn new(dim: usize, kind: Kind) -> Self {
        Distribution {
            dim,
            domain: Domain::whole(dim),
            grid: QuadratureGrid::default_for(dim),
            kind: Arc::new(kind),
        }
    }

    pub fn density(dim: usize, f: SmoothFn) -> Result<Self> {
        check_dim(dim)?;
        Ok(Self::new(dim, Kind::Density(f)))
    }

    pub fn dirac(dim: usize, position: Point) -> Result<Self> {
        Self::dirac_derivative(dim, MultiIndex::ZERO, position)
    }

    /// `<w, psi> = (-1)^|k| psi^(k)(a)`.
    pub fn dirac_derivative(dim: usize, order: MultiIndex, position: Point) -> Result<Self> {
        check_dim(dim)?;
        if dim == 1 && order.0[1] != 0 {
            return Err(Error::InvalidArgument(format!("multi-index {order} in one dimension")));
        }
        Ok(Self::new(dim, Kind::Dirac { order, position }))
    }

    pub fn heaviside() -> Self {
        Self::new(1, Kind::Heaviside)
    }

    pub fn principal_value() -> Self {
        Self::new(1, Kind::PrincipalValue)
    }

    pub fn zero(dim: usize) -> Self {
        Self::new(dim, Kind::Combination(Vec::new()))
    }

    pub fn combination(dim: usize, terms: Vec<(Complex64, Distribution)>) -> Result<Self> {
        check_dim(dim)?;
        if terms.iter().any(|(_, w)| w.dim != dim) {
            return Err(Error::InvalidArgument("mixed dimensions in linear combination".into()));
        }
        Ok(Self::new(dim, Kind::Combination(terms)))
    }

    /// The classical pullback `mu^* u`, living on the source of `mu`.
    pub fn pullback(map: &Diffeomorphism, inner: &Distribution) -> Result<Self> {
        if map.dim() != inner.dim {
            return Err(Error::InvalidArgument("diffeomorphism and distribution dimensions differ".into()));
        }
        let mut d = Self::new(
            inner.dim,
            Kind::Pullback {
                map: map.clone(),
                inner: inner.clone(),
            },
        );
        d.domain = *map.source();
        d.grid = inner.grid;
        Ok(d)
    }

    /// Restricts the admissible supports to the open set `domain`.
    pub fn on(mut self, domain: Domain) -> Result<Self> {
        if domain.dim != self.dim {
            return Err(Error::InvalidArgument("domain dimension mismatch".into()));
        }
        self.domain = domain;
        Ok(self)
    }

    pub fn with_grid(mut self, grid: QuadratureGrid) -> Self {
        self.grid = grid;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn grid(&self) -> QuadratureGrid {
        self.grid
    }

    /// Whether pairing is exactly an evaluation of finitely many point values.
    pub fn is_point_supported(&self) -> bool {
        match &*self.kind {
            Kind::Dirac { .. } => true,
            Kind::Combination(terms) => terms.iter().all(|(_, w)| w.is_point_supported()),
            Kind::Derivative { inner, .. } => inner.is_point_supported(),
            _ => false,
        }
    }

    pub fn pair(&self, psi: &TestFunction) -> Result<Complex64> {
        if psi.dim() != self.dim {
            return Err(Error::InvalidArgument(format!(
                "test function of dimension {} paired with distribution of dimension {}",
                psi.dim(),
                self.dim
            )));
        }
        self.domain.require_ball(&psi.center(), psi.radius(), "test function support")?;
        let v = match &*self.kind {
            Kind::Density(f) => Complex64::from(psi.integrate_weighted(self.grid, |x| f.eval(x))),
            Kind::Dirac { order, position } => {
                let sign = if order.order() % 2 == 0 { 1.0 } else { -1.0 };
                Complex64::from(sign * psi.derivative_at(position, *order))
            }
            Kind::Heaviside => Complex64::from(pair_heaviside(psi)),
            Kind::PrincipalValue => Complex64::from(pair_principal_value(psi, self.grid)),
            Kind::Combination(terms) => {
                let mut s = Complex64::new(0.0, 0.0);
                for (a, w) in terms {
                    s += a * w.pair(psi)?;
                }
                s
            }
            Kind::Derivative { inner, axis } => -inner.pair(&psi.partial(*axis))?,
            Kind::Pullback { map, inner } => classical_pullback(map, inner, psi)?,
        };
        Ok(v)
    }

    /// `w'` with `<w', psi> = -<w, d_axis psi>`; closed forms where known.
    pub fn derivative(&self, axis: usize) -> Result<Distribution> {
        if axis >= self.dim {
            return Err(Error::InvalidArgument(format!("axis {axis} out of range for dimension {}", self.dim)));
        }
        let kind = match &*self.kind {
            Kind::Density(f) => Kind::Density(f.partial(axis)),
            Kind::Dirac { order, position } => Kind::Dirac {
                order: order.plus(&MultiIndex::unit(axis)),
                position: *position,
            },
            Kind::Heaviside => Kind::Dirac {
                order: MultiIndex::ZERO,
                position: [0.0; 2],
            },
            Kind::Combination(terms) => Kind::Combination(
                terms
                    .iter()
                    .map(|(a, w)| Ok((*a, w.derivative(axis)?)))
                    .collect::<Result<_>>()?,
            ),
            _ => Kind::Derivative {
                inner: self.clone(),
                axis,
            },
        };
        Ok(Distribution {
            dim: self.dim,
            domain: self.domain,
            grid: self.grid,
            kind: Arc::new(kind),
        })
    }
}

fn pair_heaviside(psi: &TestFunction) -> f64 {
    let (c, r) = (psi.center()[0], psi.radius());
    let a = (c - r).max(0.0);
    let b = c + r;
    if b <= a {
        return 0.0;
    }
    numerics::gauss_legendre_composite(|t| psi.eval1(t), a, b, 32)
}

/// `int_0^inf (psi(t) - psi(-t)) / t dt` as half the trapezoid sum of the even
/// integrand over a symmetric grid; the node at 0 takes the limit `2 psi'(0)`.
fn pair_principal_value(psi: &TestFunction, grid: QuadratureGrid) -> f64 {
    let reach = psi.center()[0].abs() + psi.radius();
    let n = grid.n();
    let h = reach / n as f64;
    let origin = 2.0 * psi.derivative_at(&[0.0, 0.0], MultiIndex::d1(1));
    let mut s = 0.5 * origin;
    for j in 1..n {
        let t = j as f64 * h;
        s += (psi.eval1(t) - psi.eval1(-t)) / t;
    }
    h * s
}

/// `<u, (psi o mu^-1) |det D mu^-1|>`; the identity map pairs directly.
pub fn classical_pullback(map: &Diffeomorphism, u: &Distribution, psi: &TestFunction) -> Result<Complex64> {
    if map.is_identity() {
        return u.pair(psi);
    }
    map.source().require_ball(&psi.center(), psi.radius(), "test function support")?;
    let pushed = map.push_density(psi)?;
    u.pair(&pushed)
}
