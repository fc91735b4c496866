//! The eps-sweep engine: sup-norm tables along scaled test objects, log-log
//! order fits and moderateness / negligibility verdicts.
//!
//! Verdicts are evidence from finite batteries, finite compact grids and a
//! finite eps range; they are not proofs.

use std::fmt;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::basic_space::{check_zero_mass, d1_derivative_unchecked, stencil_derivative, x_step_for, Formalism, Representative};
use crate::diffeo::{pullback_rep, Diffeomorphism};
use crate::error::{Error, Result};
use crate::geometry::{Domain, MultiIndex, Point};
use crate::numerics::{self, QuadratureGrid};
use crate::test_objects::{check_moment_class, make_battery, MomentClass, PathMode, TestObjectPath};
use crate::testfunc::TestFunction;

/// Slack on fitted slopes when assigning orders.
pub const SLOPE_SLACK: f64 = 0.3;

/// Default absolute floor below which a sup value counts as rounding noise.
pub const DEFAULT_NOISE_FLOOR: f64 = 1e-13;

/// Sweep over `eps_i = 2^-i`, `i_min <= i <= i_max`, with sups over a point
/// grid `compact`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub i_min: u32,
    pub i_max: u32,
    pub compact: Vec<Point>,
    pub alphas: Vec<MultiIndex>,
    pub fit_window: usize,
    pub noise_floor: f64,
}

/// `n` equally spaced points on `[lo, hi]` (one dimension).
pub fn uniform_compact(lo: f64, hi: f64, n: usize) -> Vec<Point> {
    if n == 1 {
        return vec![[0.5 * (lo + hi), 0.0]];
    }
    (0..n).map(|j| [lo + (hi - lo) * j as f64 / (n - 1) as f64, 0.0]).collect()
}

impl SweepSpec {
    pub fn new(i_min: u32, i_max: u32, compact: Vec<Point>) -> Result<Self> {
        let spec = SweepSpec {
            i_min,
            i_max,
            compact,
            alphas: vec![MultiIndex::ZERO, MultiIndex::d1(1)],
            fit_window: 6,
            noise_floor: DEFAULT_NOISE_FLOOR,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// `i = 2..14` on a 41-point grid over `[-1, 1]`.
    pub fn default_1d() -> Self {
        Self::new(2, 14, uniform_compact(-1.0, 1.0, 41)).expect("default sweep is valid")
    }

    pub fn validate(&self) -> Result<()> {
        if self.i_min < 2 || self.i_max > 20 || self.i_min > self.i_max {
            return Err(Error::InvalidArgument(format!(
                "sweep range {}..{} must satisfy 2 <= i_min <= i_max <= 20",
                self.i_min, self.i_max
            )));
        }
        if self.fit_window < 4 {
            return Err(Error::InvalidArgument(format!("fit window {} < 4", self.fit_window)));
        }
        if self.compact.is_empty() {
            return Err(Error::InvalidArgument("empty compact grid".into()));
        }
        if self.alphas.is_empty() {
            return Err(Error::InvalidArgument("empty derivative set".into()));
        }
        Ok(())
    }

    pub fn with_alphas(mut self, alphas: Vec<MultiIndex>) -> Result<Self> {
        self.alphas = alphas;
        self.validate()?;
        Ok(self)
    }

    pub fn with_window(mut self, w: usize) -> Result<Self> {
        self.fit_window = w;
        self.validate()?;
        Ok(self)
    }

    pub fn eps(&self) -> Vec<f64> {
        (self.i_min..=self.i_max).map(|i| 0.5f64.powi(i as i32)).collect()
    }

    /// Noise floor for a row at `eps` and derivative order `alpha`.
    pub fn floor_at(&self, eps: f64, alpha: MultiIndex) -> f64 {
        self.noise_floor / x_step_for(Some(eps)).powi(alpha.order() as i32)
    }
}

/// One `(alpha, member)` column of a sweep table.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub member_id: String,
    pub alpha: MultiIndex,
    pub eps: Vec<f64>,
    /// `ln sup`; `-inf` for an exact zero.
    pub log_values: Vec<f64>,
    /// Whether the values were computed in log space.
    pub log_channel: bool,
}

impl Series {
    /// From plain sup values, or from logs when `log_channel` is set.
    pub fn from_values(member_id: &str, alpha: MultiIndex, eps: &[f64], values: &[f64], log_channel: bool) -> Self {
        let log_values = if log_channel {
            values.to_vec()
        } else {
            values.iter().map(|v| v.abs().ln()).collect()
        };
        Series {
            member_id: member_id.to_string(),
            alpha,
            eps: eps.to_vec(),
            log_values,
            log_channel,
        }
    }

    /// The reported value: the sup itself, or its logarithm on the log channel.
    pub fn reported(&self, i: usize) -> f64 {
        if self.log_channel {
            self.log_values[i]
        } else {
            self.log_values[i].exp()
        }
    }

    /// Slopes of `ln v` against `ln eps` between adjacent rows.
    pub fn local_slopes(&self) -> Vec<Option<f64>> {
        let mut out = vec![None];
        for i in 1..self.eps.len() {
            let (a, b) = (self.log_values[i - 1], self.log_values[i]);
            if a.is_finite() && b.is_finite() {
                out.push(Some((b - a) / (self.eps[i].ln() - self.eps[i - 1].ln())));
            } else {
                out.push(None);
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    /// `O(eps^-N)`.
    Moderate(u32),
    /// `O(eps^n)`; `None` for values at rounding level throughout.
    Negligible(Option<u32>),
    SuperPolynomial,
    Fail,
}

impl Verdict {
    pub fn is_moderate(&self) -> bool {
        matches!(self, Verdict::Moderate(_) | Verdict::Negligible(_))
    }

    /// The moderateness exponent `N` (0 for decaying series).
    pub fn moderate_n(&self) -> Option<u32> {
        match self {
            Verdict::Moderate(n) => Some(*n),
            Verdict::Negligible(_) => Some(0),
            _ => None,
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Moderate(n) => write!(f, "moderate({n})"),
            Verdict::Negligible(Some(n)) => write!(f, "negligible({n})"),
            Verdict::Negligible(None) => f.write_str("negligible(inf)"),
            Verdict::SuperPolynomial => f.write_str("super-polynomial"),
            Verdict::Fail => f.write_str("fail"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fit {
    pub slope: f64,
    pub intercept: f64,
    pub residual: f64,
    /// Local slopes between adjacent rows of the fit window.
    pub local_slopes: Vec<f64>,
    pub usable: usize,
    pub machine_zero: bool,
    pub verdict: Verdict,
}

impl Fit {
    /// Fitted order, `+inf` for machine-zero series.
    pub fn order(&self) -> f64 {
        if self.machine_zero {
            f64::INFINITY
        } else {
            self.slope
        }
    }
}

/// Whether local slopes are negative, strictly growing in magnitude, and the
/// last is at least ten times the first (or 10 when the first is small).
pub fn is_super_polynomial(local: &[f64]) -> bool {
    if local.len() < 3 || local.iter().any(|s| *s >= 0.0) {
        return false;
    }
    let increasing = local.windows(2).all(|w| w[1].abs() > w[0].abs());
    increasing && local[local.len() - 1].abs() >= 10.0 * local[0].abs().max(1.0)
}

/// Least-squares order over the last `window` usable rows (values above the
/// per-row noise floor `floor / h^|alpha|`).
pub fn fit_order(series: &Series, window: usize, floor: f64) -> Fit {
    let step_power = series.alpha.order() as i32;
    let usable: Vec<usize> = (0..series.eps.len())
        .filter(|&i| {
            let v = series.log_values[i];
            if series.log_channel {
                v.is_finite()
            } else {
                let row_floor = floor / x_step_for(Some(series.eps[i])).powi(step_power);
                v.is_finite() && v > row_floor.ln()
            }
        })
        .collect();
    if series.log_values.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
        return Fit {
            slope: f64::NAN,
            intercept: f64::NAN,
            residual: f64::NAN,
            local_slopes: Vec::new(),
            usable: usable.len(),
            machine_zero: false,
            verdict: Verdict::Fail,
        };
    }
    if usable.len() < 3 {
        return Fit {
            slope: f64::INFINITY,
            intercept: 0.0,
            residual: 0.0,
            local_slopes: Vec::new(),
            usable: usable.len(),
            machine_zero: true,
            verdict: Verdict::Negligible(None),
        };
    }
    let rows = &usable[usable.len().saturating_sub(window)..];
    let xs: Vec<f64> = rows.iter().map(|&i| series.eps[i].ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|&i| series.log_values[i]).collect();
    let (slope, intercept, residual) = numerics::linear_fit(&xs, &ys);
    let local_slopes: Vec<f64> = xs.windows(2).zip(ys.windows(2)).map(|(x, y)| (y[1] - y[0]) / (x[1] - x[0])).collect();
    let verdict = classify(slope, &local_slopes);
    Fit {
        slope,
        intercept,
        residual,
        local_slopes,
        usable: usable.len(),
        machine_zero: false,
        verdict,
    }
}

fn classify(slope: f64, local: &[f64]) -> Verdict {
    if is_super_polynomial(local) {
        return Verdict::SuperPolynomial;
    }
    let accelerating = local.len() >= 3
        && local.iter().all(|s| *s < 0.0)
        && local.windows(2).all(|w| w[1] < w[0])
        && local[local.len() - 1] < local[0] - 1.0;
    if accelerating {
        return Verdict::Fail;
    }
    let n = (slope + SLOPE_SLACK).floor();
    if n >= 1.0 {
        return Verdict::Negligible(Some(n as u32));
    }
    Verdict::Moderate((-slope - SLOPE_SLACK).ceil().max(0.0) as u32)
}

fn tag_point(e: Error, eps: f64, x: &Point) -> Error {
    match e {
        Error::Domain(msg) => Error::Domain(format!("{msg} (at eps = {eps:e}, x = {})", x[0])),
        other => other,
    }
}

/// Computes `sup_{x in K} |d^alpha_x R(S_eps phi(eps, x), x)|` for every eps
/// and alpha of `spec`, one [`Series`] per alpha. Representatives with a log
/// channel are swept in log space.
pub fn sweep(r: &Representative, path: &TestObjectPath, spec: &SweepSpec) -> Result<Vec<Series>> {
    spec.validate()?;
    let eps = spec.eps();
    let log = r.has_exp_phase();
    let cells: Vec<(usize, usize)> = (0..eps.len()).flat_map(|i| (0..spec.compact.len()).map(move |j| (i, j))).collect();
    let values: Vec<Vec<f64>> = cells
        .par_iter()
        .map(|&(i, j)| {
            let (e, x) = (eps[i], spec.compact[j]);
            let h = x_step_for(Some(e));
            let slot = |p: &Point| path.scaled_at(e, p);
            spec.alphas
                .iter()
                .map(|alpha| {
                    if log {
                        r.log_abs_partial_x_path(slot, &x, *alpha, h)
                    } else {
                        r.partial_x_path(slot, &x, *alpha, h).map(|v| v.norm())
                    }
                    .map_err(|err| tag_point(err, e, &x))
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    Ok(collect_series(path.id(), spec, &eps, &values, log))
}

fn collect_series(member: &str, spec: &SweepSpec, eps: &[f64], values: &[Vec<f64>], log: bool) -> Vec<Series> {
    let nk = spec.compact.len();
    spec.alphas
        .iter()
        .enumerate()
        .map(|(a, alpha)| {
            let sups: Vec<f64> = (0..eps.len())
                .map(|i| {
                    let init = if log { f64::NEG_INFINITY } else { 0.0 };
                    values[i * nk..(i + 1) * nk].iter().map(|row| row[a]).fold(init, f64::max)
                })
                .collect();
            Series::from_values(member, *alpha, eps, &sups, log)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct ModerateReport {
    pub table: Vec<Series>,
    pub fits: Vec<Fit>,
    /// Largest moderateness exponent over the battery, if every series is moderate.
    pub n: Option<u32>,
    pub passed: bool,
}

fn summarize(table: Vec<Series>, spec: &SweepSpec) -> ModerateReport {
    let fits: Vec<Fit> = table.iter().map(|s| fit_order(s, spec.fit_window, spec.noise_floor)).collect();
    let n = fits
        .iter()
        .map(|f| f.verdict.moderate_n())
        .try_fold(0u32, |acc, n| n.map(|n| acc.max(n)));
    ModerateReport {
        passed: n.is_some(),
        table,
        fits,
        n,
    }
}

/// Sweeps every battery member and alpha; moderate with the largest `N`
/// unless some series is super-polynomial or fails.
pub fn test_moderate(r: &Representative, battery: &[TestObjectPath], spec: &SweepSpec) -> Result<ModerateReport> {
    let mut table = Vec::new();
    for path in battery {
        table.extend(sweep(r, path, spec)?);
    }
    Ok(summarize(table, spec))
}

#[derive(Debug, Clone, PartialEq)]
pub struct NegligibleOutcome {
    pub n: u32,
    /// Smallest `q` for which every classified member reaches order `n`.
    pub witness: Option<u32>,
    /// `(q, member id, class, worst order)` for every member tested.
    pub evidence: Vec<(u32, String, String, f64)>,
}

/// Options for the negligibility search.
#[derive(Debug, Clone, PartialEq)]
pub struct NegligibleSearch {
    pub q_max: u32,
    pub count: usize,
    pub seed: u64,
    pub modes: Vec<PathMode>,
    pub gamma_cap: u32,
}

impl Default for NegligibleSearch {
    fn default() -> Self {
        NegligibleSearch {
            q_max: 6,
            count: 4,
            seed: 1,
            modes: vec![PathMode::Static, PathMode::FullPath],
            gamma_cap: 2,
        }
    }
}

fn classification_compact(compact: &[Point]) -> Vec<Point> {
    let stride = (compact.len() / 4).max(1);
    compact.iter().step_by(stride).copied().collect()
}

/// For each target `n`, searches `q = n..=q_max` for a witness: all battery
/// members of class strict `A_q` or `[A_l^inf]_{K,q}` give fitted order
/// `>= n - 0.3`.
pub fn test_negligible(r: &Representative, targets: &[u32], search: &NegligibleSearch, spec: &SweepSpec) -> Result<Vec<NegligibleOutcome>> {
    let eps = spec.eps();
    let k_class = classification_compact(&spec.compact);
    let mut out = Vec::new();
    for &n in targets {
        let mut evidence = Vec::new();
        let mut witness = None;
        for q in n.max(1)..=search.q_max.max(n) {
            let mut members = Vec::new();
            for mode in &search.modes {
                for path in make_battery(*mode, q, search.count, search.seed)? {
                    let strict = check_moment_class(&path, &MomentClass::StrictAq(q), &eps[..2], &k_class)?;
                    if strict.passed {
                        members.push((path, "strict_Aq"));
                        continue;
                    }
                    let linf = MomentClass::ALInf {
                        q,
                        compact: k_class.clone(),
                        gamma_cap: search.gamma_cap,
                    };
                    if check_moment_class(&path, &linf, &eps, &k_class)?.passed {
                        members.push((path, "A_l_inf"));
                    }
                }
            }
            if members.is_empty() {
                continue;
            }
            let mut all = true;
            for (path, class) in &members {
                let worst = sweep(r, path, spec)?
                    .iter()
                    .map(|s| fit_order(s, spec.fit_window, spec.noise_floor).order())
                    .fold(f64::INFINITY, f64::min);
                all &= worst >= n as f64 - SLOPE_SLACK;
                evidence.push((q, path.id().to_string(), class.to_string(), worst));
            }
            if all {
                witness = Some(q);
                break;
            }
        }
        out.push(NegligibleOutcome { n, witness, evidence });
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct D1Report {
    pub table: Vec<Series>,
    pub fits: Vec<Fit>,
    pub n: Option<u32>,
    pub moderate: bool,
    /// Classification of [`test_moderate`] on the same battery.
    pub reference_moderate: bool,
    pub agrees: bool,
}

/// Sweeps `d^alpha_x d_1^k (R o S_eps)(phi, x)(psi_1..psi_k)` for `k <= k_max`
/// over the static members of `battery`, and compares the resulting
/// moderateness classification with [`test_moderate`] on the whole battery.
///
/// On the log channel only `k = 0`, and `k = 1` with `alpha = 0`, are swept.
pub fn d1_form_test(
    r: &Representative,
    battery: &[TestObjectPath],
    directions: &[TestFunction],
    k_max: usize,
    spec: &SweepSpec,
) -> Result<D1Report> {
    spec.validate()?;
    check_zero_mass(directions)?;
    let eps = spec.eps();
    let log = r.has_exp_phase();
    let mut table = Vec::new();
    for path in battery.iter().filter(|p| p.mode() == PathMode::Static) {
        let phi = path.at(1.0, &[0.0; 2])?;
        let mut tuples: Vec<Vec<usize>> = vec![vec![]];
        if k_max >= 1 {
            tuples.extend((0..directions.len().min(2)).map(|j| vec![j]));
        }
        if k_max >= 2 && directions.len() >= 2 && !log {
            tuples.push(vec![0, 1]);
        }
        for tuple in tuples {
            let alphas: Vec<MultiIndex> = spec
                .alphas
                .iter()
                .copied()
                .filter(|a| !(log && !tuple.is_empty() && a.order() > 0))
                .collect();
            if alphas.is_empty() {
                continue;
            }
            let cells: Vec<(usize, usize)> = (0..eps.len()).flat_map(|i| (0..spec.compact.len()).map(move |j| (i, j))).collect();
            let values: Vec<Vec<f64>> = cells
                .par_iter()
                .map(|&(i, j)| {
                    let (e, x) = (eps[i], spec.compact[j]);
                    let h = x_step_for(Some(e));
                    let s_phi = phi.scale(e)?;
                    let dirs: Vec<TestFunction> = tuple.iter().map(|&d| directions[d].scale(e)).collect::<Result<_>>()?;
                    alphas
                        .iter()
                        .map(|alpha| {
                            if log && dirs.is_empty() {
                                r.log_abs_partial_x_path(|_| Ok(s_phi.clone()), &x, *alpha, h)
                            } else if log {
                                log_d1(r, &s_phi, &x, &dirs[0])
                            } else if alpha.order() == 0 {
                                d1_derivative_unchecked(r, &s_phi, &x, &dirs).map(|v| v.norm())
                            } else {
                                stencil_derivative(&|p: &Point| d1_derivative_unchecked(r, &s_phi, p, &dirs), &x, *alpha, h)
                                    .map(|v: Complex64| v.norm())
                            }
                            .map_err(|err| tag_point(err, e, &x))
                        })
                        .collect::<Result<Vec<f64>>>()
                })
                .collect::<Result<_>>()?;
            let member = if tuple.is_empty() {
                format!("{}-k0", path.id())
            } else {
                format!("{}-k{}-d{}", path.id(), tuple.len(), tuple.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("."))
            };
            let sub = SweepSpec {
                alphas: alphas.clone(),
                ..spec.clone()
            };
            table.extend(collect_series(&member, &sub, &eps, &values, log));
        }
    }
    let report = summarize(table, spec);
    let reference = test_moderate(r, battery, spec)?;
    Ok(D1Report {
        agrees: report.passed == reference.passed,
        reference_moderate: reference.passed,
        moderate: report.passed,
        n: report.n,
        fits: report.fits,
        table: report.table,
    })
}

/// `ln |d_1 R(phi, x)(psi)| = G + ln |d_1 G|` for `R = exp(i exp(G))`.
fn log_d1(r: &Representative, phi: &TestFunction, x: &Point, psi: &TestFunction) -> Result<f64> {
    let g = |c: f64| -> Result<f64> {
        let f = TestFunction::linear_combination(vec![(1.0, phi.clone()), (c, psi.clone())])?;
        r.phase_exponent(&f, x).expect("log channel present")
    };
    let t = 1e-4 * phi.sup_norm() / psi.sup_norm();
    let g0 = r.phase_exponent(phi, x).expect("log channel present")?;
    let dg = (g(t)? - g(-t)?) / (2.0 * t);
    Ok(g0 + dg.abs().ln())
}

/// `R(phi, x) = exp(i exp(int |phi|^2))`, swept through its log channel.
pub fn counterexample_representative(domain: Domain, grid: QuadratureGrid) -> Result<Representative> {
    Representative::exp_phase(domain.dim, Formalism::C, domain, "exp(i exp(|phi|^2))", move |phi, _| {
        Ok(phi.integrate_weighted(grid, |p| phi.eval(p)))
    })
}

#[derive(Debug, Clone)]
pub struct CounterexampleReport {
    /// Value-level moderateness of the untransformed representative.
    pub untransformed: ModerateReport,
    pub unit_modulus: bool,
    /// `ln sup |d_x mu^R|` per member.
    pub transformed: Vec<Series>,
    pub fits: Vec<Fit>,
    /// Local slopes of the first member over the whole sweep.
    pub local_slopes: Vec<f64>,
    pub monotone: bool,
    pub ratio: f64,
    pub super_polynomial: bool,
}

/// Runs the counterexample: the untransformed representative is moderate at
/// value level on x-independent eps-paths, while its pullback along a
/// nonlinear map has a super-polynomially growing first x-derivative.
pub fn counterexample_scenario(
    map: &Diffeomorphism,
    battery: &[TestObjectPath],
    spec: &SweepSpec,
    grid: QuadratureGrid,
) -> Result<CounterexampleReport> {
    let r = counterexample_representative(Domain::whole(map.dim()), grid)?;
    let value_spec = spec.clone().with_alphas(vec![MultiIndex::ZERO])?;
    let untransformed = test_moderate(&r, battery, &value_spec)?;
    let mut unit_modulus = true;
    for path in battery {
        for &e in &spec.eps() {
            for x in spec.compact.iter().step_by(8) {
                let v = r.eval(&path.scaled_at(e, x)?, x)?;
                unit_modulus &= v.is_nan() || (v.norm() - 1.0).abs() < 1e-12;
                let (lm, _) = r.log_magnitude(&path.scaled_at(e, x)?, x)?;
                unit_modulus &= lm == 0.0;
            }
        }
    }
    let pulled = pullback_rep(map, &r)?;
    let d_spec = spec.clone().with_alphas(vec![MultiIndex::d1(1)])?;
    let mut transformed = Vec::new();
    for path in battery {
        transformed.extend(sweep(&pulled, path, &d_spec)?);
    }
    let fits: Vec<Fit> = transformed.iter().map(|s| fit_order(s, spec.fit_window, spec.noise_floor)).collect();
    let local_slopes: Vec<f64> = transformed
        .first()
        .map(|s| s.local_slopes().into_iter().flatten().collect())
        .unwrap_or_default();
    let monotone = local_slopes.len() >= 2
        && local_slopes.iter().all(|s| *s < 0.0)
        && local_slopes.windows(2).all(|w| w[1].abs() > w[0].abs());
    let ratio = match (local_slopes.first(), local_slopes.last()) {
        (Some(a), Some(b)) => b.abs() / a.abs(),
        _ => 0.0,
    };
    let super_polynomial = monotone && ratio >= 10.0 && fits.iter().all(|f| f.verdict == Verdict::SuperPolynomial);
    Ok(CounterexampleReport {
        untransformed,
        unit_modulus,
        transformed,
        fits,
        local_slopes,
        monotone,
        ratio,
        super_polynomial,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basic_space::{embed_c, embed_sigma, sub};
    use crate::distributions::{Distribution, SmoothFn};
    use crate::test_objects::make_battery;
    use crate::testfunc::build_mollifier;

    fn series_from(f: impl Fn(f64) -> f64, log: bool) -> Series {
        let eps: Vec<f64> = (2..=14).map(|i| 0.5f64.powi(i)).collect();
        let v: Vec<f64> = eps.iter().map(|e| f(*e)).collect();
        Series::from_values("m", MultiIndex::ZERO, &eps, &v, log)
    }

    #[test]
    fn exact_power_laws() {
        let fit = fit_order(&series_from(|e| e * e, false), 6, 1e-13);
        assert!((fit.slope - 2.0).abs() < 0.01);
        assert_eq!(fit.verdict, Verdict::Negligible(Some(2)));
        let fit = fit_order(&series_from(|e| 1.0 / e, false), 6, 1e-13);
        assert!((fit.slope + 1.0).abs() < 0.01);
        assert_eq!(fit.verdict, Verdict::Moderate(1));
        let fit = fit_order(&series_from(|_| 3.0, false), 6, 1e-13);
        assert_eq!(fit.verdict, Verdict::Moderate(0));
    }

    #[test]
    fn exponential_growth_in_log_space() {
        let s = series_from(|e| 1.0 / e, true);
        let fit = fit_order(&s, 6, 1e-13);
        assert_eq!(fit.verdict, Verdict::SuperPolynomial);
        let local: Vec<f64> = s.local_slopes().into_iter().flatten().collect();
        assert!(local.windows(2).all(|w| w[1].abs() > w[0].abs()));
        assert!(local.last().unwrap().abs() >= 10.0 * local[0].abs());
    }

    #[test]
    fn zero_rows_are_machine_zero() {
        let fit = fit_order(&series_from(|_| 0.0, false), 6, 1e-13);
        assert!(fit.machine_zero);
        assert_eq!(fit.verdict, Verdict::Negligible(None));
        assert_eq!(fit.order(), f64::INFINITY);
        let fit = fit_order(&series_from(|_| 1e-15, false), 6, 1e-13);
        assert!(fit.machine_zero);
    }

    #[test]
    fn spec_validation() {
        let k = uniform_compact(-1.0, 1.0, 5);
        assert!(SweepSpec::new(1, 10, k.clone()).is_err());
        assert!(SweepSpec::new(2, 21, k.clone()).is_err());
        assert!(SweepSpec::new(2, 10, k.clone()).unwrap().with_window(3).is_err());
        assert_eq!(SweepSpec::new(3, 5, k).unwrap().eps(), vec![0.125, 0.0625, 0.03125]);
    }

    #[test]
    fn delta_table_rows() {
        let r = embed_c(&Distribution::dirac(1, [0.0; 2]).unwrap());
        let battery = make_battery(PathMode::Static, 1, 2, 3).unwrap();
        let spec = SweepSpec::new(2, 8, vec![[0.0, 0.0]]).unwrap().with_alphas(vec![MultiIndex::ZERO]).unwrap();
        let t = sweep(&r, &battery[1], &spec).unwrap();
        let phi = battery[1].at(1.0, &[0.0; 2]).unwrap();
        for (i, e) in spec.eps().iter().enumerate() {
            let expected = phi.eval1(0.0).abs() / e;
            assert!((t[0].reported(i) - expected).abs() <= 1e-12 * expected);
        }
        let report = test_moderate(&r, &battery, &spec).unwrap();
        assert_eq!(report.n, Some(1));
    }

    #[test]
    fn sigma_table_is_constant() {
        let r = embed_sigma(1, &SmoothFn::sin()).unwrap();
        let battery = make_battery(PathMode::Static, 1, 1, 3).unwrap();
        let spec = SweepSpec::new(2, 8, uniform_compact(-1.0, 1.0, 41)).unwrap();
        let t = sweep(&r, &battery[0], &spec).unwrap();
        for i in 0..t[0].eps.len() {
            assert!((t[0].reported(i) - 1f64.sin()).abs() < 1e-15);
            assert!((t[1].reported(i) - 1.0).abs() < 1e-8);
        }
        assert_eq!(test_moderate(&r, &battery, &spec).unwrap().n, Some(0));
    }

    #[test]
    fn embedding_defect_order() {
        let w = Distribution::density(1, SmoothFn::sin()).unwrap().with_grid(QuadratureGrid::new(1024).unwrap());
        let r = sub(&embed_c(&w), &embed_sigma(1, &SmoothFn::sin()).unwrap()).unwrap();
        let battery = make_battery(PathMode::Static, 2, 2, 3).unwrap();
        let spec = SweepSpec::new(2, 9, uniform_compact(-1.0, 1.0, 11)).unwrap().with_alphas(vec![MultiIndex::ZERO]).unwrap();
        let report = test_moderate(&r, &battery, &spec).unwrap();
        for f in &report.fits {
            assert!(f.slope >= 2.8, "{f:?}");
        }
        // m3 of the off-center member drives the eps^3 term.
        let phi = battery[1].at(1.0, &[0.0; 2]).unwrap();
        let m3 = phi.moment(MultiIndex::d1(3)).value;
        let e = 2f64.powi(-6);
        let v = r.eval1(&phi.scale(e).unwrap(), 1.0).unwrap().re;
        let leading = -1f64.cos() * e.powi(3) * m3 / 6.0;
        assert!((v - leading).abs() < 0.1 * leading.abs(), "{v} vs {leading}");
    }

    #[test]
    fn negligible_zero_representative() {
        let r = crate::basic_space::Representative::zero(1);
        let spec = SweepSpec::new(2, 7, uniform_compact(-1.0, 1.0, 5)).unwrap();
        let search = NegligibleSearch {
            q_max: 3,
            count: 2,
            ..Default::default()
        };
        for o in test_negligible(&r, &[1, 2], &search, &spec).unwrap() {
            assert_eq!(o.witness, Some(o.n));
        }
    }

    #[test]
    fn counterexample_exponent_scales_like_inverse_eps() {
        let grid = QuadratureGrid::new(1024).unwrap();
        let r = counterexample_representative(Domain::whole(1), grid).unwrap();
        let phi = build_mollifier(1, 1, 1.0).unwrap();
        let base = r.phase_exponent(&phi, &[0.0; 2]).unwrap().unwrap();
        let mut oracle = 0.0;
        let n = 20000;
        for j in 1..n {
            let x = -1.0 + 2.0 * j as f64 / n as f64;
            oracle += 2.0 / n as f64 * phi.eval1(x).powi(2);
        }
        assert!((base - oracle).abs() < 1e-10);
        for e in [0.5, 0.01] {
            let g = r.phase_exponent(&phi.scale(e).unwrap(), &[0.3, 0.0]).unwrap().unwrap();
            assert!((g - base / e).abs() < 1e-9 * base / e);
        }
    }
}
