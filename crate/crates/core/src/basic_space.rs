//! Representatives `R(phi, x)` of generalized functions, embeddings, algebra
//! operations and derivatives.

use std::fmt;
use std::ops::{Add, Mul, Sub};
use std::sync::Arc;

use num_complex::Complex64;

use crate::distributions::{Distribution, SmoothFn};
use crate::error::{Error, Result};
use crate::geometry::{self, Domain, MultiIndex, Point};
use crate::testfunc::{TestFunction, DEFAULT_MOMENT_TOL};

pub type RepFn = Arc<dyn Fn(&TestFunction, &Point) -> Result<Complex64> + Send + Sync>;
pub type RealRepFn = Arc<dyn Fn(&TestFunction, &Point) -> Result<f64> + Send + Sync>;

/// Default x-step when no scale parameter is attached to the test function slot.
pub const DEFAULT_X_STEP: f64 = 1e-5;

/// x-step for a slot holding an object scaled by `eps`.
pub fn x_step_for(eps: Option<f64>) -> f64 {
    match eps {
        Some(e) => e * 2f64.powi(-7),
        None => DEFAULT_X_STEP,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Formalism {
    /// Convolution convention: the point enters through `phi(. - x)`.
    C,
    /// Action convention: the test function is used as given.
    J,
    /// Independent of the test function; valid in both conventions.
    Neutral,
}

impl Formalism {
    pub fn name(&self) -> &'static str {
        match self {
            Formalism::C => "C",
            Formalism::J => "J",
            Formalism::Neutral => "neutral",
        }
    }

    fn join(self, other: Formalism) -> Result<Formalism> {
        match (self, other) {
            (a, b) if a == b => Ok(a),
            (Formalism::Neutral, b) => Ok(b),
            (a, Formalism::Neutral) => Ok(a),
            (a, b) => Err(Error::FormalismMismatch {
                left: a.name(),
                right: b.name(),
            }),
        }
    }
}

/// An element of the basic space: a map `(phi, x) -> C` on `U(Omega)`.
#[derive(Clone)]
pub struct Representative {
    pub(crate) dim: usize,
    pub(crate) formalism: Formalism,
    pub(crate) domain: Domain,
    pub(crate) linear: bool,
    pub(crate) phi_independent: bool,
    pub(crate) x_independent: bool,
    pub(crate) eval: RepFn,
    /// `R = exp(i exp(G))`; holds `G` so magnitudes of derivatives can be
    /// computed in log space.
    pub(crate) exp_phase: Option<RealRepFn>,
    pub(crate) label: String,
}

impl fmt::Debug for Representative {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Representative")
            .field("label", &self.label)
            .field("formalism", &self.formalism)
            .field("linear", &self.linear)
            .finish()
    }
}

impl Representative {
    /// A general representative from an evaluator.
    pub fn new<F>(dim: usize, formalism: Formalism, domain: Domain, label: &str, f: F) -> Result<Self>
    where
        F: Fn(&TestFunction, &Point) -> Result<Complex64> + Send + Sync + 'static,
    {
        geometry::check_dim(dim)?;
        Ok(Representative {
            dim,
            formalism,
            domain,
            linear: false,
            phi_independent: false,
            x_independent: false,
            eval: Arc::new(f),
            exp_phase: None,
            label: label.to_string(),
        })
    }

    /// `R(phi, x) = exp(i exp(G(phi, x)))` with the exponent kept available for
    /// log-space analysis.
    pub fn exp_phase<G>(dim: usize, formalism: Formalism, domain: Domain, label: &str, g: G) -> Result<Self>
    where
        G: Fn(&TestFunction, &Point) -> Result<f64> + Send + Sync + 'static,
    {
        let g: RealRepFn = Arc::new(g);
        let inner = g.clone();
        let mut r = Self::new(dim, formalism, domain, label, move |phi, x| {
            let e = inner(phi, x)?.exp();
            Ok(Complex64::new(0.0, e).exp())
        })?;
        r.exp_phase = Some(g);
        Ok(r)
    }

    pub fn zero(dim: usize) -> Self {
        let mut r = Self::new(dim, Formalism::Neutral, Domain::whole(dim), "0", |_, _| Ok(Complex64::new(0.0, 0.0)))
            .expect("valid dimension");
        r.linear = true;
        r.phi_independent = true;
        r.x_independent = true;
        r
    }

    pub fn with_flags(mut self, linear: bool, x_independent: bool) -> Self {
        self.linear = linear;
        self.x_independent = x_independent;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn formalism(&self) -> Formalism {
        self.formalism
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn is_linear(&self) -> bool {
        self.linear
    }

    pub fn is_phi_independent(&self) -> bool {
        self.phi_independent
    }

    pub fn is_x_independent(&self) -> bool {
        self.x_independent
    }

    pub fn has_exp_phase(&self) -> bool {
        self.exp_phase.is_some()
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn relabel(mut self, label: &str) -> Self {
        self.label = label.to_string();
        self
    }

    /// Membership of `(phi, x)` in `U(Omega)` for this formalism.
    pub fn admissible(&self, phi: &TestFunction, x: &Point) -> Result<()> {
        if !self.domain.contains(x) {
            return Err(Error::Domain(format!("point {:?} outside {}", &x[..self.dim], self.domain)));
        }
        if self.phi_independent {
            return Ok(());
        }
        let center = match self.formalism {
            Formalism::C => geometry::add(&phi.center(), x),
            _ => phi.center(),
        };
        self.domain.require_ball(&center, phi.radius(), "test function support")
    }

    pub fn eval(&self, phi: &TestFunction, x: &Point) -> Result<Complex64> {
        if phi.dim() != self.dim {
            return Err(Error::InvalidArgument("test function dimension mismatch".into()));
        }
        self.admissible(phi, x)?;
        (self.eval)(phi, x)
    }

    pub fn eval1(&self, phi: &TestFunction, x: f64) -> Result<Complex64> {
        self.eval(phi, &geometry::point1(x))
    }

    /// The exponent `G` of an exp-phase representative.
    pub fn phase_exponent(&self, phi: &TestFunction, x: &Point) -> Option<Result<f64>> {
        let g = self.exp_phase.as_ref()?;
        Some(self.admissible(phi, x).and_then(|_| g(phi, x)))
    }

    /// `(ln |R|, arg R)`; exp-phase representatives never overflow here.
    pub fn log_magnitude(&self, phi: &TestFunction, x: &Point) -> Result<(f64, f64)> {
        if let Some(g) = self.phase_exponent(phi, x) {
            let phase = g?.exp().rem_euclid(std::f64::consts::TAU);
            return Ok((0.0, phase));
        }
        let v = self.eval(phi, x)?;
        Ok((v.norm().ln(), v.arg()))
    }

    /// `d^alpha_x R(slot(x), x)` by Richardson-extrapolated central differences
    /// with step `h`; the slot may depend on x (total derivative).
    pub fn partial_x_path<S>(&self, slot: S, x: &Point, alpha: MultiIndex, h: f64) -> Result<Complex64>
    where
        S: Fn(&Point) -> Result<TestFunction>,
    {
        if alpha.order() == 0 {
            return self.eval(&slot(x)?, x);
        }
        stencil_derivative(&|p: &Point| self.eval(&slot(p)?, p), x, alpha, h)
    }

    /// `d^alpha_x R(phi, x)` with the test function held fixed.
    pub fn partial_x(&self, phi: &TestFunction, x: &Point, alpha: MultiIndex, h: f64) -> Result<Complex64> {
        if alpha.order() > 0 && self.x_independent {
            self.admissible(phi, x)?;
            return Ok(Complex64::new(0.0, 0.0));
        }
        self.partial_x_path(|_| Ok(phi.clone()), x, alpha, h)
    }

    /// `ln |d^alpha_x R(slot(x), x)|` for exp-phase representatives, from
    /// finite differences of the exponent only.
    pub fn log_abs_partial_x_path<S>(&self, slot: S, x: &Point, alpha: MultiIndex, h: f64) -> Result<f64>
    where
        S: Fn(&Point) -> Result<TestFunction>,
    {
        let g = self
            .exp_phase
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument(format!("`{}` has no log channel", self.label)))?;
        let eval_g = |p: &Point| -> Result<f64> {
            let phi = slot(p)?;
            self.admissible(&phi, p)?;
            g(&phi, p)
        };
        let g0 = eval_g(x)?;
        match alpha.order() {
            0 => Ok(0.0),
            1 => {
                let dg: f64 = stencil_derivative(&eval_g, x, alpha, h)?;
                Ok(g0 + dg.abs().ln())
            }
            2 => {
                let axes: Vec<usize> = (0..2).flat_map(|a| std::iter::repeat_n(a, alpha.0[a] as usize)).collect();
                let d1: f64 = stencil_derivative(&eval_g, x, MultiIndex::unit(axes[0]), h)?;
                let d2: f64 = stencil_derivative(&eval_g, x, MultiIndex::unit(axes[1]), h)?;
                let d12: f64 = stencil_derivative(&eval_g, x, alpha, h)?;
                let a = 2.0 * (d12 + d1 * d2).abs().ln();
                let b = 2.0 * g0 + 2.0 * (d1 * d2).abs().ln();
                Ok(g0 + 0.5 * logaddexp(a, b))
            }
            k => Err(Error::InvalidArgument(format!("log-space derivatives of order {k} are not supported"))),
        }
    }
}

fn logaddexp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

#[derive(Clone, Copy)]
enum Stencil {
    Central,
    Forward,
    Backward,
}

fn stencil_weights(kind: Stencil, k: u32) -> Option<Vec<(f64, f64)>> {
    match kind {
        Stencil::Central => {
            let half = k as f64 / 2.0;
            let mut binom = 1.0;
            let mut out = Vec::new();
            for j in 0..=k {
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                out.push((half - j as f64, sign * binom));
                binom = binom * (k - j) as f64 / (j + 1) as f64;
            }
            Some(out)
        }
        Stencil::Forward | Stencil::Backward => {
            let base: Vec<(f64, f64)> = match k {
                1 => vec![(0.0, -1.5), (1.0, 2.0), (2.0, -0.5)],
                2 => vec![(0.0, 2.0), (1.0, -5.0), (2.0, 4.0), (3.0, -1.0)],
                _ => return None,
            };
            if let Stencil::Backward = kind {
                let sign = if k.is_multiple_of(2) { 1.0 } else { -1.0 };
                Some(base.into_iter().map(|(o, w)| (-o, sign * w)).collect())
            } else {
                Some(base)
            }
        }
    }
}

fn one_axis<T, G>(g: &G, x0: f64, k: u32, h: f64, kind: Stencil) -> Result<T>
where
    T: Copy + Default + Add<Output = T> + Sub<Output = T> + Mul<f64, Output = T>,
    G: Fn(f64) -> Result<T>,
{
    let weights = stencil_weights(kind, k)
        .ok_or_else(|| Error::Domain(format!("no one-sided stencil of order {k}")))?;
    let levels = if let Stencil::Central = kind { 2 } else { 1 };
    let mut table = Vec::with_capacity(levels + 1);
    for i in 0..=levels {
        let step = h / 2f64.powi(i as i32);
        let mut s = T::default();
        for (offset, w) in &weights {
            s = s + g(x0 + offset * step)? * *w;
        }
        table.push(s * step.powi(-(k as i32)));
    }
    for level in 1..=levels {
        let factor = 4f64.powi(level as i32);
        for i in 0..table.len() - level {
            table[i] = (table[i + 1] * factor - table[i]) * (1.0 / (factor - 1.0));
        }
    }
    Ok(table[0])
}

/// Mixed partial `d^alpha f(x)`, axis by axis; falls back to one-sided
/// stencils when the central one leaves the admissible domain.
pub(crate) fn stencil_derivative<T, F>(f: &F, x: &Point, alpha: MultiIndex, h: f64) -> Result<T>
where
    T: Copy + Default + Add<Output = T> + Sub<Output = T> + Mul<f64, Output = T>,
    F: Fn(&Point) -> Result<T>,
{
    fn axis_rec<T, F>(f: &F, x: &Point, alpha: [u32; 2], axis: usize, h: f64) -> Result<T>
    where
        T: Copy + Default + Add<Output = T> + Sub<Output = T> + Mul<f64, Output = T>,
        F: Fn(&Point) -> Result<T>,
    {
        if axis == 2 {
            return f(x);
        }
        let k = alpha[axis];
        if k == 0 {
            return axis_rec(f, x, alpha, axis + 1, h);
        }
        let g = |s: f64| {
            let mut p = *x;
            p[axis] = s;
            axis_rec(f, &p, alpha, axis + 1, h)
        };
        match one_axis(&g, x[axis], k, h, Stencil::Central) {
            Err(e) if e.is_domain() => one_axis(&g, x[axis], k, h, Stencil::Forward)
                .or_else(|_| one_axis(&g, x[axis], k, h, Stencil::Backward))
                .map_err(|_| e),
            r => r,
        }
    }
    axis_rec(f, x, alpha.0, 0, h)
}

/// `iota(w)(phi, x) = <w, phi(. - x)>`.
pub fn embed_c(w: &Distribution) -> Representative {
    let w2 = w.clone();
    let mut r = Representative::new(w.dim(), Formalism::C, *w.domain(), &format!("iota({w:?})"), move |phi, x| {
        w2.pair(&phi.translate(x))
    })
    .expect("distribution has valid dimension");
    r.linear = true;
    r
}

/// `iota^J(w)(phi, x) = <w, phi>`.
pub fn embed_j(w: &Distribution) -> Representative {
    let w2 = w.clone();
    let mut r = Representative::new(w.dim(), Formalism::J, *w.domain(), &format!("iotaJ({w:?})"), move |phi, _| {
        w2.pair(phi)
    })
    .expect("distribution has valid dimension");
    r.linear = true;
    r.x_independent = true;
    r
}

/// `sigma(f)(phi, x) = f(x)`.
pub fn embed_sigma(dim: usize, f: &SmoothFn) -> Result<Representative> {
    let f2 = f.clone();
    let mut r = Representative::new(dim, Formalism::Neutral, Domain::whole(dim), &format!("sigma({f:?})"), move |_, x| {
        Ok(Complex64::from(f2.eval(x)))
    })?;
    r.phi_independent = true;
    Ok(r)
}

/// Switches between the C and J conventions:
/// C to J is `(phi, x) -> R(phi(. + x), x)`, J to C is `(phi, x) -> R(phi(. - x), x)`.
pub fn translate_formalism(r: &Representative) -> Representative {
    let inner = r.clone();
    let (target, sign) = match r.formalism {
        Formalism::Neutral => return r.clone(),
        Formalism::C => (Formalism::J, -1.0),
        Formalism::J => (Formalism::C, 1.0),
    };
    let eval_inner = inner.clone();
    let mut out = Representative {
        formalism: target,
        eval: Arc::new(move |phi, x| (eval_inner.eval)(&phi.translate(&geometry::scale(x, sign)), x)),
        exp_phase: None,
        label: format!("T({})", r.label),
        ..r.clone()
    };
    // x-independence does not survive the change of convention in general.
    out.x_independent = r.phi_independent && r.x_independent;
    if let Some(g) = &inner.exp_phase {
        let g = g.clone();
        out.exp_phase = Some(Arc::new(move |phi, x| g(&phi.translate(&geometry::scale(x, sign)), x)));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlgOp {
    Add,
    Sub,
    Mul,
}

/// Pointwise ring operations on representatives of the same formalism.
pub fn alg_op(op: AlgOp, a: &Representative, b: &Representative) -> Result<Representative> {
    if a.dim != b.dim {
        return Err(Error::InvalidArgument("representative dimensions differ".into()));
    }
    let formalism = a.formalism.join(b.formalism)?;
    let (fa, fb) = (a.eval.clone(), b.eval.clone());
    let eval: RepFn = match op {
        AlgOp::Add => Arc::new(move |phi, x| Ok(fa(phi, x)? + fb(phi, x)?)),
        AlgOp::Sub => Arc::new(move |phi, x| Ok(fa(phi, x)? - fb(phi, x)?)),
        AlgOp::Mul => Arc::new(move |phi, x| Ok(fa(phi, x)? * fb(phi, x)?)),
    };
    let symbol = match op {
        AlgOp::Add => "+",
        AlgOp::Sub => "-",
        AlgOp::Mul => "*",
    };
    Ok(Representative {
        dim: a.dim,
        formalism,
        domain: a.domain.intersect(&b.domain),
        linear: op != AlgOp::Mul && a.linear && b.linear,
        phi_independent: a.phi_independent && b.phi_independent,
        x_independent: a.x_independent && b.x_independent,
        eval,
        exp_phase: None,
        label: format!("({} {symbol} {})", a.label, b.label),
    })
}

pub fn add(a: &Representative, b: &Representative) -> Result<Representative> {
    alg_op(AlgOp::Add, a, b)
}

pub fn sub(a: &Representative, b: &Representative) -> Result<Representative> {
    alg_op(AlgOp::Sub, a, b)
}

pub fn mul(a: &Representative, b: &Representative) -> Result<Representative> {
    alg_op(AlgOp::Mul, a, b)
}

pub fn scalar(c: Complex64, a: &Representative) -> Representative {
    let f = a.eval.clone();
    Representative {
        eval: Arc::new(move |phi, x| Ok(c * f(phi, x)?)),
        exp_phase: None,
        label: format!("{c}*{}", a.label),
        ..a.clone()
    }
}

/// `d_1^k R(phi, x)(psi_1, ..., psi_k)` for `k <= 2`; directions must have
/// zero mass.
pub fn d1_derivative(r: &Representative, phi: &TestFunction, x: &Point, directions: &[TestFunction]) -> Result<Complex64> {
    if directions.len() > 2 {
        return Err(Error::InvalidArgument(format!(
            "directional derivatives of order {} are not supported",
            directions.len()
        )));
    }
    check_zero_mass(directions)?;
    d1_derivative_unchecked(r, phi, x, directions)
}

/// Rejects directions outside the zero-mass tangent space.
pub fn check_zero_mass(directions: &[TestFunction]) -> Result<()> {
    for (index, psi) in directions.iter().enumerate() {
        let integral = psi.integral();
        if integral.abs() > DEFAULT_MOMENT_TOL {
            return Err(Error::NotZeroMass { index, integral });
        }
    }
    Ok(())
}

/// [`d1_derivative`] for directions already validated by [`check_zero_mass`].
pub(crate) fn d1_derivative_unchecked(
    r: &Representative,
    phi: &TestFunction,
    x: &Point,
    directions: &[TestFunction],
) -> Result<Complex64> {
    let zero = Complex64::new(0.0, 0.0);
    match directions {
        [] => r.eval(phi, x),
        _ if r.phi_independent => {
            r.admissible(phi, x)?;
            Ok(zero)
        }
        [psi] if r.linear => r.eval(psi, x),
        [_, _] if r.linear => {
            r.admissible(phi, x)?;
            Ok(zero)
        }
        _ => {
            let scale = phi.sup_norm();
            let steps: Vec<f64> = directions.iter().map(|psi| 1e-4 * scale / psi.sup_norm()).collect();
            let at = |coeffs: &[f64]| -> Result<Complex64> {
                let mut terms = vec![(1.0, phi.clone())];
                terms.extend(coeffs.iter().zip(directions).map(|(c, psi)| (*c, psi.clone())));
                r.eval(&TestFunction::linear_combination(terms)?, x)
            };
            if directions.len() == 1 {
                let t = steps[0];
                Ok((at(&[t])? - at(&[-t])?) * (0.5 / t))
            } else {
                let (t1, t2) = (steps[0], steps[1]);
                let v = at(&[t1, t2])? - at(&[t1, -t2])? - at(&[-t1, t2])? + at(&[-t1, -t2])?;
                Ok(v * (0.25 / (t1 * t2)))
            }
        }
    }
}

/// `D_i^J R(phi, x) = -d_1 R(phi, x)(d_i phi) + (d_i R)(phi, x)`.
pub fn dj_derivative(r: &Representative, axis: usize, phi: &TestFunction, x: &Point) -> Result<Complex64> {
    if r.formalism == Formalism::C {
        return Err(Error::FormalismMismatch {
            left: "J",
            right: r.formalism.name(),
        });
    }
    let slot_term = d1_derivative(r, phi, x, &[phi.partial(axis)])?;
    let x_term = r.partial_x(phi, x, MultiIndex::unit(axis), DEFAULT_X_STEP)?;
    Ok(x_term - slot_term)
}
