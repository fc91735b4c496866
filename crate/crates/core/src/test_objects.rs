//! Test objects: static mollifiers, eps-paths and (eps, x)-paths, moment
//! classes and zero-mass perturbation directions.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{fit_order, Series};
use crate::diffeo::{transform_test_object, Diffeomorphism, PartialDomain};
use crate::error::{Error, Result};
use crate::geometry::{self, MultiIndex, Point};
use crate::numerics;
use crate::testfunc::{build_mollifier_at, derivative_moment, unit_bump, TestFunction, DEFAULT_MOMENT_TOL};

pub type PathFn = Arc<dyn Fn(f64, &Point) -> Result<TestFunction> + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathMode {
    Static,
    EpsPath,
    FullPath,
}

impl PathMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "static" | "elementary" => Ok(PathMode::Static),
            "eps_path" | "eps-path" | "cm-path" => Ok(PathMode::EpsPath),
            "full_path" | "full-path" | "full" => Ok(PathMode::FullPath),
            _ => Err(Error::UnknownName {
                kind: "battery mode",
                name: s.to_string(),
            }),
        }
    }
}

/// A bounded family `(eps, x) -> phi(eps, x)`, possibly on a partial domain.
#[derive(Clone)]
pub struct TestObjectPath {
    id: String,
    dim: usize,
    mode: PathMode,
    support_bound: f64,
    eval: PathFn,
    domain: Option<PartialDomain>,
}

impl fmt::Debug for TestObjectPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestObjectPath")
            .field("id", &self.id)
            .field("mode", &self.mode)
            .field("support_bound", &self.support_bound)
            .finish()
    }
}

impl TestObjectPath {
    /// `support_bound` bounds `|center| + radius` of every member.
    pub fn new<F>(id: &str, dim: usize, mode: PathMode, support_bound: f64, f: F) -> Self
    where
        F: Fn(f64, &Point) -> Result<TestFunction> + Send + Sync + 'static,
    {
        TestObjectPath {
            id: id.to_string(),
            dim,
            mode,
            support_bound,
            eval: Arc::new(f),
            domain: None,
        }
    }

    pub fn constant(id: &str, phi: TestFunction) -> Self {
        let bound = geometry::norm(&phi.center(), phi.dim()) + phi.radius();
        let dim = phi.dim();
        Self::new(id, dim, PathMode::Static, bound, move |_, _| Ok(phi.clone()))
    }

    pub fn with_partial_domain(mut self, domain: Option<PartialDomain>) -> Self {
        self.domain = domain.filter(|d| !d.is_full() || !d.records().is_empty());
        self
    }

    pub fn with_id(mut self, id: &str) -> Self {
        self.id = id.to_string();
        self
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mode(&self) -> PathMode {
        self.mode
    }

    pub fn support_bound(&self) -> f64 {
        self.support_bound
    }

    pub fn partial_domain(&self) -> Option<&PartialDomain> {
        self.domain.as_ref()
    }

    /// `phi(eps, x)`.
    pub fn at(&self, eps: f64, x: &Point) -> Result<TestFunction> {
        if let Some(d) = &self.domain {
            if !d.contains(eps, x) {
                return Err(Error::OutsidePartialDomain {
                    path: self.id.clone(),
                    eps,
                    x: x[..self.dim].to_vec(),
                });
            }
        }
        (self.eval)(eps, x)
    }

    /// `S_eps phi(eps, x)`.
    pub fn scaled_at(&self, eps: f64, x: &Point) -> Result<TestFunction> {
        self.at(eps, x)?.scale(eps)
    }
}

fn random_mollifier(rng: &mut ChaCha8Rng, q: u32, dim: usize) -> Result<TestFunction> {
    let r = rng.gen_range(0.6..1.0);
    let mut c = [0.0; 2];
    for slot in c.iter_mut().take(dim) {
        *slot = rng.gen_range(-0.25..0.25);
    }
    build_mollifier_at(q, dim, r, c)
}

/// Zero-mass difference of two unit-mass bumps.
fn random_direction(rng: &mut ChaCha8Rng, dim: usize) -> Result<TestFunction> {
    let mut pick = || -> Result<TestFunction> {
        let r = rng.gen_range(0.3..0.6);
        let mut c = [0.0; 2];
        for slot in c.iter_mut().take(dim) {
            *slot = rng.gen_range(-0.4..0.4);
        }
        unit_bump(dim, c, r)
    };
    let (a, b) = (pick()?, pick()?);
    TestFunction::linear_combination(vec![(1.0, a), (-1.0, b)])
}

/// Catalog maps used to transform full-path battery members.
const TRANSFORM_MAPS: &[&str] = &["scale2", "sine", "cubic"];

/// Seeded battery of `count` test objects of class (at least) `A_q`.
///
/// `Static` members are distinct strict mollifiers (member 0 is the symmetric
/// unit-radius one); `EpsPath` members are `phi_q + eps^q rho(eps) chi` with
/// `chi` zero-mass and `rho` smooth and bounded; `FullPath` members alternate
/// between x-modulated convex mixes of two strict mollifiers and strict
/// mollifiers transformed by catalog maps.
pub fn make_battery(mode: PathMode, q: u32, count: usize, seed: u64) -> Result<Vec<TestObjectPath>> {
    make_battery_dim(mode, q, count, seed, 1)
}

pub fn make_battery_dim(mode: PathMode, q: u32, count: usize, seed: u64, dim: usize) -> Result<Vec<TestObjectPath>> {
    if count == 0 {
        return Err(Error::InvalidArgument("battery needs at least one member".into()));
    }
    geometry::check_dim(dim)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((q as u64) << 32));
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let base = if i == 0 {
            build_mollifier_at(q, dim, 1.0, [0.0; 2])?
        } else {
            random_mollifier(&mut rng, q, dim)?
        };
        let path = match mode {
            PathMode::Static => TestObjectPath::constant(&format!("static-q{q}-{i}"), base),
            PathMode::EpsPath => {
                let chi = random_direction(&mut rng, dim)?;
                let a = rng.gen_range(0.5..1.0);
                let b = rng.gen_range(0.0..0.5);
                let omega = rng.gen_range(1.0..5.0);
                let bound = (geometry::norm(&base.center(), dim) + base.radius())
                    .max(geometry::norm(&chi.center(), dim) + chi.radius());
                TestObjectPath::new(&format!("eps-q{q}-{i}"), dim, PathMode::EpsPath, bound, move |eps, _| {
                    let rho = a + b * (omega * eps).cos();
                    TestFunction::linear_combination(vec![(1.0, base.clone()), (eps.powi(q as i32) * rho, chi.clone())])
                })
            }
            PathMode::FullPath if i % 2 == 1 => {
                let name = TRANSFORM_MAPS[(i / 2) % TRANSFORM_MAPS.len()];
                let map = Diffeomorphism::catalog(name)?;
                let source = TestObjectPath::constant("src", base);
                let (t, _) = transform_test_object(&map, &source, &[])?;
                t.with_id(&format!("full-q{q}-{i}-{name}"))
            }
            PathMode::FullPath => {
                let other = random_mollifier(&mut rng, q, dim)?;
                let kappa = rng.gen_range(0.5..3.0);
                let theta = rng.gen_range(0.0..std::f64::consts::TAU);
                let omega = rng.gen_range(1.0..5.0);
                let bound = (geometry::norm(&base.center(), dim) + base.radius())
                    .max(geometry::norm(&other.center(), dim) + other.radius());
                TestObjectPath::new(&format!("full-q{q}-{i}-mix"), dim, PathMode::FullPath, bound, move |eps, x| {
                    let w = 0.5 + 0.4 * (kappa * x[0] + theta + omega * eps).sin();
                    TestFunction::linear_combination(vec![(w, base.clone()), (1.0 - w, other.clone())])
                })
            }
        };
        out.push(path);
    }
    Ok(out)
}

/// Zero-mass perturbation directions (differences of unit-mass bumps).
pub fn perturbation_directions(count: usize, seed: u64) -> Result<Vec<TestFunction>> {
    perturbation_directions_dim(count, seed, 1)
}

pub fn perturbation_directions_dim(count: usize, seed: u64, dim: usize) -> Result<Vec<TestFunction>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x5eed));
    (0..count).map(|_| random_direction(&mut rng, dim)).collect()
}

/// Uniform bound on the sup norms of a direction battery.
pub fn direction_bound(directions: &[TestFunction]) -> f64 {
    directions.iter().map(|d| d.sup_norm()).fold(0.0, f64::max)
}

/// Moment classes used to classify test objects.
#[derive(Debug, Clone, PartialEq)]
pub enum MomentClass {
    /// Unit mass and vanishing moments `1..=q` for every `(eps, x)`.
    StrictAq(u32),
    /// Moments `1..=q` of `phi(eps)` are `O(eps^q)`.
    AsymptCm(u32),
    /// Moments `1 <= |beta| <= q` and their x-derivatives of order up to
    /// `gamma_cap` are `O(eps^q)` uniformly on the compact. A failing verdict
    /// lists the orders computed up to the first failure.
    ALInf { q: u32, compact: Vec<Point>, gamma_cap: u32 },
}

impl MomentClass {
    pub fn q(&self) -> u32 {
        match self {
            MomentClass::StrictAq(q) | MomentClass::AsymptCm(q) => *q,
            MomentClass::ALInf { q, .. } => *q,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassVerdict {
    pub passed: bool,
    /// `(label, fitted order)`; `None` order means identically zero to rounding.
    pub orders: Vec<(String, Option<f64>)>,
    pub max_abs: f64,
}

/// Order threshold slack for asymptotic moment classes.
pub const MOMENT_ORDER_SLACK: f64 = 0.3;

/// Step in x for derivatives of moments along full paths.
const MOMENT_X_STEP: f64 = 1e-2;

fn moments_series(
    path: &TestObjectPath,
    eps_grid: &[f64],
    compact: &[Point],
    value: &dyn Fn(&TestFunction, &Point, f64) -> Result<f64>,
) -> Result<Vec<f64>> {
    eps_grid
        .iter()
        .map(|&eps| {
            let mut sup: f64 = 0.0;
            for x in compact {
                let phi = path.at(eps, x)?;
                sup = sup.max(value(&phi, x, eps)?.abs());
            }
            Ok(sup)
        })
        .collect()
}

/// Classifies `path` against `class` on the given eps grid and compact.
pub fn check_moment_class(path: &TestObjectPath, class: &MomentClass, eps_grid: &[f64], compact: &[Point]) -> Result<ClassVerdict> {
    let dim = path.dim();
    let q = class.q();
    let betas = MultiIndex::all(dim, 1, q);
    match class {
        MomentClass::StrictAq(_) => {
            let mut max_abs: f64 = 0.0;
            for &eps in eps_grid {
                for x in compact {
                    let phi = path.at(eps, x)?;
                    let grid = numerics::QuadratureGrid::default_for(dim);
                    max_abs = max_abs.max((phi.moment_with(MultiIndex::ZERO, grid) - 1.0).abs());
                    for b in &betas {
                        max_abs = max_abs.max(phi.moment_with(*b, grid).abs());
                    }
                }
            }
            Ok(ClassVerdict {
                passed: max_abs <= DEFAULT_MOMENT_TOL,
                orders: Vec::new(),
                max_abs,
            })
        }
        MomentClass::AsymptCm(_) => {
            let mut orders = Vec::new();
            let mut passed = true;
            let mut max_abs: f64 = 0.0;
            for b in &betas {
                let b = *b;
                let values = moments_series(path, eps_grid, compact, &|phi, _, _| Ok(phi.moment(b).value))?;
                max_abs = values.iter().copied().fold(max_abs, f64::max);
                let order = series_order(eps_grid, &values, DEFAULT_MOMENT_TOL * 1e-3);
                passed &= order.is_none_or(|o| o >= q as f64 - MOMENT_ORDER_SLACK);
                orders.push((format!("m{b}"), order));
            }
            Ok(ClassVerdict { passed, orders, max_abs })
        }
        MomentClass::ALInf { compact: k, gamma_cap, .. } => {
            // Cheapest series first; classification stops at the first failure.
            let x_independent = matches!(path.mode(), PathMode::Static | PathMode::EpsPath);
            let mut jobs: Vec<(MultiIndex, MultiIndex, bool)> = betas.iter().map(|b| (*b, MultiIndex::ZERO, false)).collect();
            for b in &betas {
                for gamma in MultiIndex::all(dim, 1, *gamma_cap) {
                    if matches!(b.checked_minus(&gamma), Some(rest) if rest.order() > 0) {
                        jobs.push((*b, gamma, true));
                    }
                }
            }
            if !x_independent {
                for gamma in MultiIndex::all(dim, 1, *gamma_cap) {
                    jobs.extend(betas.iter().map(|b| (*b, gamma, false)));
                }
            }
            let mut orders = Vec::new();
            let mut passed = true;
            let mut max_abs: f64 = 0.0;
            for (b, gamma, in_xi) in jobs {
                let (label, floor, values) = if in_xi {
                    // xi-derivative moments without the pure mass term.
                    let values = moments_series(path, eps_grid, k, &|phi, _, _| Ok(derivative_moment(phi, b, gamma)))?;
                    (format!("m{b} d{gamma}"), DEFAULT_MOMENT_TOL * 1e-3, values)
                } else {
                    let floor = DEFAULT_MOMENT_TOL * 1e-3 / MOMENT_X_STEP.powi(gamma.order() as i32);
                    let values = moments_series(path, eps_grid, k, &|_, x, eps| {
                        if gamma.order() == 0 {
                            return Ok(path.at(eps, x)?.moment(b).value);
                        }
                        crate::basic_space::stencil_derivative(
                            &|p: &Point| Ok(path.at(eps, p)?.moment(b).value),
                            x,
                            gamma,
                            MOMENT_X_STEP,
                        )
                    })?;
                    max_abs = values.iter().copied().fold(max_abs, f64::max);
                    (format!("dx{gamma} m{b}"), floor, values)
                };
                let order = series_order(eps_grid, &values, floor);
                passed &= order.is_none_or(|o| o >= q as f64 - MOMENT_ORDER_SLACK);
                orders.push((label, order));
                if !passed {
                    break;
                }
            }
            Ok(ClassVerdict { passed, orders, max_abs })
        }
    }
}

fn series_order(eps_grid: &[f64], values: &[f64], floor: f64) -> Option<f64> {
    let series = Series::from_values("moment", MultiIndex::ZERO, eps_grid, values, false);
    let fit = fit_order(&series, eps_grid.len().max(4), floor);
    if fit.machine_zero {
        None
    } else {
        Some(fit.slope)
    }
}
