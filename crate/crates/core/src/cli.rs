//! Scenario runner behind the `gfn` binary.
//!
//! One scenario per invocation. Settings come from an optional JSON config
//! file, then command-line flags override individual keys. Every run writes
//! CSV files into the output directory plus a `run.log` sidecar; timestamps
//! live only in the sidecar so the CSVs are byte-reproducible.
//!
//! CSV schemas (version 1):
//!
//! * `<scenario>-sweep.csv`: `epsilon,alpha,member_id,sup_value_or_log,local_slope`
//! * `<scenario>-fit.csv`: `member_id,alpha,slope,intercept_log2,residual,usable,verdict`
//! * `<scenario>-plot.csv`: `member_id,alpha,log2_epsilon,log2_value`
//! * `<scenario>-summary.csv`: `scenario,check,value,threshold,passed`
//! * `mollifier-moments.csv` (mollifier only): `alpha,value,error_estimate`
//!
//! `alpha` is the derivative order (`a:b` in two dimensions). Log-channel
//! series report `ln sup` instead of the sup.

use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Parser;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{self, counterexample_scenario, d1_form_test, fit_order, uniform_compact, Fit, Series, SweepSpec};
use crate::basic_space::{dj_derivative, embed_c, embed_j, embed_sigma, mul, sub, translate_formalism, Representative};
use crate::diffeo::{pullback_rep, transform_test_object, Diffeomorphism};
use crate::distributions::{Distribution, SmoothFn};
use crate::error::{Error, Result};
use crate::geometry::{Domain, MultiIndex, Point};
use crate::numerics::QuadratureGrid;
use crate::test_objects::{make_battery, perturbation_directions, PathMode, TestObjectPath};
use crate::testfunc::{build_mollifier, build_mollifier_at, TestFunction};

pub const CSV_SCHEMA_VERSION: u32 = 1;

pub const SCENARIOS: &[&str] = &[
    "mollifier",
    "embed-order",
    "delta-scaling",
    "association",
    "moment-invariance",
    "counterexample",
    "jform-commute",
    "d1-form",
    "pullback-functor",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    Mollifier,
    EmbedOrder,
    DeltaScaling,
    Association,
    MomentInvariance,
    Counterexample,
    JformCommute,
    D1Form,
    PullbackFunctor,
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Mollifier => "mollifier",
            Scenario::EmbedOrder => "embed-order",
            Scenario::DeltaScaling => "delta-scaling",
            Scenario::Association => "association",
            Scenario::MomentInvariance => "moment-invariance",
            Scenario::Counterexample => "counterexample",
            Scenario::JformCommute => "jform-commute",
            Scenario::D1Form => "d1-form",
            Scenario::PullbackFunctor => "pullback-functor",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "mollifier" => Scenario::Mollifier,
            "embed-order" => Scenario::EmbedOrder,
            "delta-scaling" => Scenario::DeltaScaling,
            "association" => Scenario::Association,
            "moment-invariance" => Scenario::MomentInvariance,
            "counterexample" => Scenario::Counterexample,
            "jform-commute" => Scenario::JformCommute,
            "d1-form" => Scenario::D1Form,
            "pullback-functor" => Scenario::PullbackFunctor,
            _ => {
                return Err(Error::UnknownName {
                    kind: "scenario",
                    name: s.to_string(),
                })
            }
        })
    }
}

/// Battery keys of the config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatteryFile {
    pub mode: Option<String>,
    pub count: Option<usize>,
    pub seed: Option<u64>,
}

/// The config file as written; every key is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub scenario: Option<String>,
    pub dim: Option<usize>,
    /// `[lo, hi]` (one dimension) or `[lo0, lo1, hi0, hi1]`.
    pub domain: Option<Vec<f64>>,
    /// Interval carrying the compact grid `K`.
    pub compact: Option<[f64; 2]>,
    pub compact_points: Option<usize>,
    pub q: Option<u32>,
    pub i_min: Option<u32>,
    pub i_max: Option<u32>,
    pub fit_window: Option<usize>,
    pub battery: Option<BatteryFile>,
    pub diffeo: Option<String>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub quadrature_nodes: Option<usize>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// Fully resolved settings of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub dim: usize,
    pub domain: Domain,
    pub compact: [f64; 2],
    pub compact_points: usize,
    pub q: u32,
    pub i_min: u32,
    pub i_max: u32,
    pub fit_window: usize,
    pub battery_mode: Option<PathMode>,
    pub battery_count: usize,
    pub battery_seed: u64,
    pub diffeo: String,
    pub out: PathBuf,
    pub seed: u64,
    pub quadrature_nodes: usize,
}

impl ScenarioConfig {
    /// Defaults for `scenario`.
    pub fn new(scenario: Scenario) -> Self {
        ScenarioConfig {
            scenario,
            dim: 1,
            domain: Domain::whole(1),
            compact: [-1.0, 1.0],
            compact_points: 41,
            q: 2,
            i_min: 2,
            i_max: 14,
            fit_window: 6,
            battery_mode: None,
            battery_count: 8,
            battery_seed: 1,
            diffeo: "sine".into(),
            out: PathBuf::from("gfn-out"),
            seed: 1,
            quadrature_nodes: QuadratureGrid::DEFAULT_1D.n(),
        }
    }

    /// Applies the keys present in `file`.
    pub fn from_file(scenario: Scenario, file: &ConfigFile) -> Result<Self> {
        let mut c = Self::new(scenario);
        if let Some(d) = file.dim {
            c.dim = d;
            c.domain = Domain::whole(d);
        }
        if let Some(d) = &file.domain {
            c.domain = match d.as_slice() {
                [lo, hi] => Domain::interval(*lo, *hi),
                [a, b, c2, d2] => Domain::rect([*a, *b], [*c2, *d2]),
                _ => return Err(Error::Config("`domain` needs 2 or 4 numbers".into())),
            };
        }
        if let Some(k) = file.compact {
            c.compact = k;
        }
        if let Some(n) = file.compact_points {
            c.compact_points = n;
        }
        if let Some(q) = file.q {
            c.q = q;
        }
        if let Some(i) = file.i_min {
            c.i_min = i;
        }
        if let Some(i) = file.i_max {
            c.i_max = i;
        }
        if let Some(w) = file.fit_window {
            c.fit_window = w;
        }
        if let Some(b) = &file.battery {
            if let Some(m) = &b.mode {
                c.battery_mode = Some(PathMode::parse(m)?);
            }
            if let Some(n) = b.count {
                c.battery_count = n;
            }
            if let Some(s) = b.seed {
                c.battery_seed = s;
            }
        }
        if let Some(d) = &file.diffeo {
            c.diffeo = d.clone();
        }
        if let Some(o) = &file.out {
            c.out = o.clone();
        }
        if let Some(s) = file.seed {
            c.seed = s;
            if file.battery.as_ref().and_then(|b| b.seed).is_none() {
                c.battery_seed = s;
            }
        }
        if let Some(n) = file.quadrature_nodes {
            c.quadrature_nodes = n;
        }
        Ok(c)
    }

    /// Checks that every referenced name resolves and every range is valid.
    pub fn validate(&self) -> Result<()> {
        crate::geometry::check_dim(self.dim)?;
        if self.domain.dim != self.dim {
            return Err(Error::Config(format!("domain {} does not match dimension {}", self.domain, self.dim)));
        }
        if self.dim != 1 && self.scenario != Scenario::Mollifier {
            return Err(Error::Config(format!("scenario `{}` runs in one dimension only", self.scenario)));
        }
        self.sweep_spec()?;
        Diffeomorphism::catalog(&self.diffeo)?;
        QuadratureGrid::new(self.quadrature_nodes)?;
        if self.battery_count == 0 {
            return Err(Error::Config("battery count must be positive".into()));
        }
        if !(self.compact[0] < self.compact[1]) || self.compact_points < 2 {
            return Err(Error::Config("compact needs lo < hi and at least 2 points".into()));
        }
        for x in [self.compact[0], self.compact[1]] {
            if !self.domain.contains(&[x, 0.0]) {
                return Err(Error::Config(format!("compact endpoint {x} outside {}", self.domain)));
            }
        }
        Ok(())
    }

    pub fn sweep_spec(&self) -> Result<SweepSpec> {
        SweepSpec::new(self.i_min, self.i_max, self.compact_grid())?.with_window(self.fit_window)
    }

    pub fn compact_grid(&self) -> Vec<Point> {
        uniform_compact(self.compact[0], self.compact[1], self.compact_points)
    }

    pub fn grid(&self) -> QuadratureGrid {
        QuadratureGrid::new(self.quadrature_nodes).unwrap_or(QuadratureGrid::DEFAULT_1D)
    }

    fn density(&self, f: SmoothFn) -> Result<Distribution> {
        Distribution::density(self.dim, f)?.with_grid(self.grid()).on(self.domain)
    }

    fn point_dist(&self, d: Distribution) -> Result<Distribution> {
        d.with_grid(self.grid()).on(self.domain)
    }
}

/// Command-line flags; each overrides the matching config key.
#[derive(Debug, Parser)]
#[command(name = "gfn", version, about = "Run a named generalized-function scenario and emit CSV tables")]
pub struct Args {
    /// One of: mollifier, embed-order, delta-scaling, association,
    /// moment-invariance, counterexample, jform-commute, d1-form, pullback-functor.
    pub scenario: Option<String>,
    /// JSON config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Moment order of the mollifier batteries.
    #[arg(long)]
    pub q: Option<u32>,
    /// Smallest epsilon as an exponent: eps_min = 2^-I (the sweep's i_max).
    #[arg(long = "eps-min", value_name = "I")]
    pub eps_min: Option<u32>,
    /// Largest epsilon as an exponent: eps_max = 2^-I (the sweep's i_min).
    #[arg(long = "eps-max", value_name = "I")]
    pub eps_max: Option<u32>,
    /// Diffeomorphism catalog name (id, scale2, shift1, sine, cubic, affine:A:B, sine:A:B, cubic:C).
    #[arg(long)]
    pub diffeo: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Resolves file keys and flag overrides into a validated config.
pub fn resolve(args: &Args) -> Result<ScenarioConfig> {
    let file = match &args.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let name = args
        .scenario
        .clone()
        .or_else(|| file.scenario.clone())
        .ok_or_else(|| Error::Config("no scenario given".into()))?;
    let scenario: Scenario = name.parse()?;
    let mut c = ScenarioConfig::from_file(scenario, &file)?;
    if let Some(q) = args.q {
        c.q = q;
    }
    if let Some(i) = args.eps_min {
        c.i_max = i;
    }
    if let Some(i) = args.eps_max {
        c.i_min = i;
    }
    if let Some(d) = &args.diffeo {
        c.diffeo = d.clone();
    }
    if let Some(s) = args.seed {
        c.seed = s;
        c.battery_seed = s;
    }
    if let Some(o) = &args.out {
        c.out = o.clone();
    }
    c.validate()?;
    Ok(c)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: String,
    pub passed: bool,
}

impl Check {
    fn new(name: impl Into<String>, value: f64, threshold: impl Into<String>, passed: bool) -> Self {
        Check {
            name: name.into(),
            value,
            threshold: threshold.into(),
            passed,
        }
    }
}

/// An extra CSV written next to the standard ones.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtraTable {
    pub file: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

#[derive(Debug, Clone)]
pub struct ScenarioReport {
    pub scenario: Scenario,
    pub dim: usize,
    pub series: Vec<Series>,
    pub fits: Vec<Fit>,
    pub checks: Vec<Check>,
    pub extra: Vec<ExtraTable>,
}

impl ScenarioReport {
    fn new(config: &ScenarioConfig) -> Self {
        ScenarioReport {
            scenario: config.scenario,
            dim: config.dim,
            series: Vec::new(),
            fits: Vec::new(),
            checks: Vec::new(),
            extra: Vec::new(),
        }
    }

    fn add_series(&mut self, series: Vec<Series>, fits: Vec<Fit>) {
        self.series.extend(series);
        self.fits.extend(fits);
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

pub fn alpha_label(alpha: MultiIndex, dim: usize) -> String {
    if dim == 1 {
        alpha.0[0].to_string()
    } else {
        format!("{}:{}", alpha.0[0], alpha.0[1])
    }
}

fn fits_for(series: &[Series], spec: &SweepSpec) -> Vec<Fit> {
    series.iter().map(|s| fit_order(s, spec.fit_window, spec.noise_floor)).collect()
}

fn min_order(fits: &[Fit]) -> f64 {
    fits.iter().map(|f| f.order()).fold(f64::INFINITY, f64::min)
}

/// Runs one scenario without touching the file system.
pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioReport> {
    config.validate()?;
    match config.scenario {
        Scenario::Mollifier => mollifier(config),
        Scenario::EmbedOrder => embed_order(config),
        Scenario::DeltaScaling => delta_scaling(config),
        Scenario::Association => association(config),
        Scenario::MomentInvariance => moment_invariance(config),
        Scenario::Counterexample => counterexample(config),
        Scenario::JformCommute => jform_commute(config),
        Scenario::D1Form => d1_form(config),
        Scenario::PullbackFunctor => pullback_functor(config),
    }
}

fn mollifier(c: &ScenarioConfig) -> Result<ScenarioReport> {
    let mut report = ScenarioReport::new(c);
    let phi = build_mollifier(c.q, c.dim, 1.0)?;
    let grid = QuadratureGrid::default_for(c.dim);
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    for alpha in MultiIndex::all(c.dim, 0, c.q + 1) {
        let m = phi.moment(alpha);
        rows.push(vec![alpha_label(alpha, c.dim), num(m.value), num(m.error_estimate)]);
        if (1..=c.q).contains(&alpha.order()) {
            worst = worst.max(m.value.abs());
        }
    }
    let mass = phi.moment_with(MultiIndex::ZERO, grid);
    report.checks.push(Check::new("mass error", (mass - 1.0).abs(), "<= 1e-12", (mass - 1.0).abs() <= 1e-12));
    report.checks.push(Check::new("max |m_k|, 1 <= k <= q", worst, "<= 1e-10", worst <= 1e-10));
    report.extra.push(ExtraTable {
        file: "mollifier-moments.csv".into(),
        header: vec!["alpha".into(), "value".into(), "error_estimate".into()],
        rows,
    });
    Ok(report)
}

fn battery(c: &ScenarioConfig, default: PathMode, q: u32) -> Result<Vec<TestObjectPath>> {
    make_battery(c.battery_mode.unwrap_or(default), q, c.battery_count, c.battery_seed)
}

fn embed_order(c: &ScenarioConfig) -> Result<ScenarioReport> {
    let mut report = ScenarioReport::new(c);
    let spec = c.sweep_spec()?;
    let b = battery(c, PathMode::Static, c.q)?;
    for (name, f) in [("sin", SmoothFn::sin()), ("x^4", SmoothFn::power(4))] {
        let r = sub(&embed_c(&c.density(f.clone())?), &embed_sigma(1, &f)?)?;
        let table: Vec<Series> = b
            .iter()
            .map(|p| asymptotics::sweep(&r, p, &spec))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .map(|mut s| {
                s.member_id = format!("{name}:{}", s.member_id);
                s
            })
            .collect();
        let fits = fits_for(&table, &spec);
        let order = min_order(&fits);
        let target = (c.q + 1) as f64 - 0.2;
        report.checks.push(Check::new(
            format!("iota({name}) - sigma({name}) order"),
            order,
            format!(">= {target}"),
            order >= target,
        ));
        report.add_series(table, fits);
    }
    Ok(report)
}

fn delta_scaling(c: &ScenarioConfig) -> Result<ScenarioReport> {
    let mut report = ScenarioReport::new(c);
    let r = embed_c(&c.point_dist(Distribution::dirac(1, [0.0; 2])?)?);
    let spec = c.sweep_spec()?.with_alphas(vec![MultiIndex::ZERO])?;
    let b = battery(c, PathMode::FullPath, c.q)?;
    let moderate = asymptotics::test_moderate(&r, &b, &spec)?;
    let worst = moderate.fits.iter().map(|f| (f.slope + 1.0).abs()).fold(0.0, f64::max);
    report.checks.push(Check::new("max |slope + 1|", worst, "<= 0.02", worst <= 0.02));
    report.checks.push(Check::new(
        "moderateness N",
        moderate.n.map_or(f64::NAN, f64::from),
        "== 1",
        moderate.n == Some(1),
    ));
    report.add_series(moderate.table, moderate.fits);
    Ok(report)
}

fn association(c: &ScenarioConfig) -> Result<ScenarioReport> {
    let mut report = ScenarioReport::new(c);
    let x = c.density(SmoothFn::power(1))?;
    let x2 = c.density(SmoothFn::power(2))?;
    let r = sub(&mul(&embed_c(&x), &embed_c(&x))?, &embed_c(&x2))?;
    let spec = c.sweep_spec()?.with_alphas(vec![MultiIndex::ZERO])?;
    let strict_q = c.q.max(2);
    let mut strict_max: f64 = 0.0;
    for path in make_battery(PathMode::Static, strict_q, c.battery_count, c.battery_seed)? {
        for e in spec.eps() {
            for p in &spec.compact {
                strict_max = strict_max.max(r.eval(&path.scaled_at(e, p)?, p)?.norm());
            }
        }
    }
    report.checks.push(Check::new(
        format!("strict A_{strict_q} sup |iota(x)^2 - iota(x^2)|"),
        strict_max,
        "<= 1e-12",
        strict_max <= 1e-12,
    ));
    let b = make_battery(PathMode::EpsPath, c.q, c.battery_count, c.battery_seed)?;
    let moderate = asymptotics::test_moderate(&r, &b, &spec)?;
    let order = min_order(&moderate.fits);
    let target = (c.q + 2) as f64 - 0.2;
    report.checks.push(Check::new(
        format!("eps-path order, q = {}", c.q),
        order,
        format!(">= {target}"),
        order >= target,
    ));
    report.add_series(moderate.table, moderate.fits);
    Ok(report)
}

fn moment_invariance(c: &ScenarioConfig) -> Result<ScenarioReport> {
    let mut report = ScenarioReport::new(c);
    let map = Diffeomorphism::catalog(&c.diffeo)?;
    let spec = c.sweep_spec()?;
    let eps = spec.eps();
    let compact = &spec.compact;
    let sources = [
        TestObjectPath::constant("centered", build_mollifier(c.q, 1, 0.8)?),
        TestObjectPath::constant("offset", build_mollifier_at(c.q, 1, 0.8, [0.1, 0.0])?),
    ];
    let mut mass_gap: f64 = 0.0;
    for source in &sources {
        let (path, _) = transform_test_object(&map, source, std::slice::from_ref(compact))?;
        for k in 1..=c.q {
            let alpha = MultiIndex::d1(k);
            let mut values = Vec::with_capacity(eps.len());
            for &e in &eps {
                let mut sup: f64 = 0.0;
                for x in compact {
                    let phi = path.at(e, x)?;
                    sup = sup.max(phi.moment(alpha).value.abs());
                    if k == 1 {
                        mass_gap = mass_gap.max((phi.integral() - 1.0).abs());
                    }
                }
                values.push(sup);
            }
            let series = Series::from_values(&format!("{}:m{k}", path.id()), MultiIndex::ZERO, &eps, &values, false);
            let fit = fit_order(&series, spec.fit_window, 1e-13);
            let target = c.q as f64 - 0.3;
            report.checks.push(Check::new(
                format!("{} moment {k} order", path.id()),
                fit.order(),
                format!(">= {target}"),
                fit.order() >= target,
            ));
            report.add_series(vec![series], vec![fit]);
        }
    }
    report.checks.push(Check::new("mass gap", mass_gap, "<= 1e-9", mass_gap <= 1e-9));
    Ok(report)
}

fn counterexample(c: &ScenarioConfig) -> Result<ScenarioReport> {
    let mut report = ScenarioReport::new(c);
    let map = Diffeomorphism::catalog(&c.diffeo)?;
    let b = battery(c, PathMode::EpsPath, c.q)?;
    let spec = c.sweep_spec()?;
    let out = counterexample_scenario(&map, &b, &spec, c.grid())?;
    report.checks.push(Check::new("|R| == 1", if out.unit_modulus { 1.0 } else { 0.0 }, "== 1", out.unit_modulus));
    report.checks.push(Check::new(
        "untransformed moderateness N",
        out.untransformed.n.map_or(f64::NAN, f64::from),
        "== 0",
        out.untransformed.n == Some(0),
    ));
    report.checks.push(Check::new(
        "local slope magnitudes strictly increasing",
        if out.monotone { 1.0 } else { 0.0 },
        "== 1",
        out.monotone,
    ));
    report.checks.push(Check::new("last / first local slope", out.ratio, ">= 10", out.ratio >= 10.0));
    report.checks.push(Check::new(
        "transformed verdict super-polynomial",
        if out.super_polynomial { 1.0 } else { 0.0 },
        "== 1",
        out.super_polynomial,
    ));
    report.add_series(out.untransformed.table, out.untransformed.fits);
    report.add_series(
        out.transformed
            .into_iter()
            .map(|mut s| {
                s.member_id = format!("{}^:{}", map.name(), s.member_id);
                s
            })
            .collect(),
        out.fits,
    );
    Ok(report)
}

fn jform_sources(c: &ScenarioConfig) -> Result<Vec<(&'static str, Distribution)>> {
    Ok(vec![
        ("delta", c.point_dist(Distribution::dirac(1, [0.0; 2])?)?),
        ("delta'", c.point_dist(Distribution::dirac_derivative(1, MultiIndex::d1(1), [0.0; 2])?)?),
        ("H", c.point_dist(Distribution::heaviside())?),
        ("sin", c.density(SmoothFn::sin())?),
    ])
}

fn bits_equal(a: Complex64, b: Complex64) -> bool {
    a.re.to_bits() == b.re.to_bits() && a.im.to_bits() == b.im.to_bits()
}

fn random_probe(rng: &mut ChaCha8Rng, compact: [f64; 2]) -> Result<(TestFunction, Point)> {
    let q = rng.gen_range(0..4);
    let phi = build_mollifier_at(q, 1, rng.gen_range(0.3..1.0), [rng.gen_range(-0.3..0.3), 0.0])?
        .scale(0.5f64.powi(rng.gen_range(0..5)))?;
    Ok((phi, [rng.gen_range(compact[0]..compact[1]), 0.0]))
}

fn jform_commute(c: &ScenarioConfig) -> Result<ScenarioReport> {
    let mut report = ScenarioReport::new(c);
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let mut rows = Vec::new();
    for (name, u) in jform_sources(c)? {
        let lhs_rep = embed_j(&u);
        let rhs_rep = embed_j(&u.derivative(0)?);
        let c_rep = embed_c(&u);
        let round_trip = translate_formalism(&translate_formalism(&c_rep));
        let mut gap: f64 = 0.0;
        let mut identical = true;
        for _ in 0..20 {
            let (phi, x) = random_probe(&mut rng, c.compact)?;
            let lhs = dj_derivative(&lhs_rep, 0, &phi, &x)?;
            let rhs = rhs_rep.eval(&phi, &x)?;
            gap = gap.max((lhs - rhs).norm() / rhs.norm().max(1.0));
            identical &= bits_equal(c_rep.eval(&phi, &x)?, round_trip.eval(&phi, &x)?);
            rows.push(vec![name.to_string(), num(x[0]), num(lhs.re), num(rhs.re)]);
        }
        report.checks.push(Check::new(format!("{name}: max |D^J iota(u) - iota(u')|"), gap, "<= 1e-8", gap <= 1e-8));
        report.checks.push(Check::new(
            format!("{name}: C/J round trip bit-identical"),
            if identical { 1.0 } else { 0.0 },
            "== 1",
            identical,
        ));
    }
    report.extra.push(ExtraTable {
        file: "jform-commute-probes.csv".into(),
        header: vec!["source".into(), "x".into(), "dj_value".into(), "embedded_derivative".into()],
        rows,
    });
    Ok(report)
}

fn d1_form(c: &ScenarioConfig) -> Result<ScenarioReport> {
    let mut report = ScenarioReport::new(c);
    let spec = c.sweep_spec()?;
    let sin = SmoothFn::sin();
    let x = c.density(SmoothFn::power(1))?;
    let x2 = c.density(SmoothFn::power(2))?;
    let ce = asymptotics::counterexample_representative(c.domain, c.grid())?;
    let map = Diffeomorphism::catalog(&c.diffeo)?;
    let catalog: Vec<(String, Representative)> = vec![
        ("iota(delta)".into(), embed_c(&c.point_dist(Distribution::dirac(1, [0.0; 2])?)?)),
        ("iota(H)".into(), embed_c(&c.point_dist(Distribution::heaviside())?)),
        ("iota(sin)".into(), embed_c(&c.density(sin.clone())?)),
        ("sigma(sin)".into(), embed_sigma(1, &sin)?),
        ("iota(sin)-sigma(sin)".into(), sub(&embed_c(&c.density(sin.clone())?), &embed_sigma(1, &sin)?)?),
        ("iota(x)^2-iota(x^2)".into(), sub(&mul(&embed_c(&x), &embed_c(&x))?, &embed_c(&x2))?),
        ("counterexample".into(), ce.clone()),
        (format!("{}^counterexample", map.name()), pullback_rep(&map, &ce)?),
    ];
    let count = c.battery_count.min(3);
    let mut b = make_battery(PathMode::Static, c.q, count, c.battery_seed)?;
    b.extend(make_battery(PathMode::FullPath, c.q, count, c.battery_seed)?);
    let directions = perturbation_directions(2, c.seed)?;
    for (name, r) in &catalog {
        let out = d1_form_test(r, &b, &directions, 2, &spec)?;
        report.checks.push(Check::new(
            format!("{name}: d1 moderate == test_moderate ({})", if out.moderate { "moderate" } else { "not moderate" }),
            if out.agrees { 1.0 } else { 0.0 },
            "== 1",
            out.agrees,
        ));
        let table = out
            .table
            .into_iter()
            .map(|mut s| {
                s.member_id = format!("{name}:{}", s.member_id);
                s
            })
            .collect();
        report.add_series(table, out.fits);
    }
    Ok(report)
}

fn pullback_functor(c: &ScenarioConfig) -> Result<ScenarioReport> {
    let mut report = ScenarioReport::new(c);
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let mu = Diffeomorphism::catalog(&c.diffeo)?;
    let nu = Diffeomorphism::catalog(if c.diffeo == "cubic" { "sine" } else { "cubic" })?;
    let reps = vec![
        embed_c(&c.point_dist(Distribution::dirac(1, [0.0; 2])?)?),
        embed_c(&c.point_dist(Distribution::heaviside())?),
        embed_c(&c.density(SmoothFn::sin())?),
    ];
    let id = Diffeomorphism::identity(1);
    let mut identical = true;
    for r in &reps {
        let pulled = pullback_rep(&id, r)?;
        for _ in 0..10 {
            let (phi, x) = random_probe(&mut rng, c.compact)?;
            identical &= bits_equal(r.eval(&phi, &x)?, pulled.eval(&phi, &x)?);
        }
    }
    report.checks.push(Check::new("identity pullback bit-identical", if identical { 1.0 } else { 0.0 }, "== 1", identical));
    let composed = Diffeomorphism::compose(&mu, &nu)?;
    let mut gap: f64 = 0.0;
    for r in &reps {
        let direct = pullback_rep(&composed, r)?;
        let sequential = pullback_rep(&nu, &pullback_rep(&mu, r)?)?;
        for _ in 0..17 {
            let (phi, x) = random_probe(&mut rng, c.compact)?;
            let (a, b) = (direct.eval(&phi, &x)?, sequential.eval(&phi, &x)?);
            gap = gap.max((a - b).norm() / a.norm().max(1.0));
        }
    }
    report.checks.push(Check::new(
        format!("({}.{})^ vs {}^ {}^", mu.name(), nu.name(), nu.name(), mu.name()),
        gap,
        "<= 1e-9",
        gap <= 1e-9,
    ));
    for (name, u) in [
        ("delta", c.point_dist(Distribution::dirac(1, [0.0; 2])?)?),
        ("H", c.point_dist(Distribution::heaviside())?),
    ] {
        let lhs = pullback_rep(&mu, &embed_c(&u))?;
        let rhs = embed_c(&Distribution::pullback(&mu, &u)?);
        let mut gap: f64 = 0.0;
        for _ in 0..10 {
            let (phi, x) = random_probe(&mut rng, c.compact)?;
            let (a, b) = (lhs.eval(&phi, &x)?, rhs.eval(&phi, &x)?);
            gap = gap.max((a - b).norm() / a.norm().max(1.0));
        }
        report.checks.push(Check::new(
            format!("{}^ iota({name}) vs iota({}^* {name})", mu.name(), mu.name()),
            gap,
            "<= 1e-8",
            gap <= 1e-8,
        ));
    }
    Ok(report)
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let io = |e: csv::Error| Error::Io(format!("{}: {e}", path.display()));
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(&row).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the sweep table in the fixed `epsilon,alpha,member_id,sup_value_or_log,local_slope` schema.
pub fn emit_sweep(series: &[Series], dim: usize, path: &Path) -> Result<()> {
    let rows = series.iter().flat_map(|s| {
        let local = s.local_slopes();
        (0..s.eps.len()).map(move |i| {
            vec![
                num(s.eps[i]),
                alpha_label(s.alpha, dim),
                s.member_id.clone(),
                num(s.reported(i)),
                local[i].map(num).unwrap_or_default(),
            ]
        })
    });
    write_csv(path, &["epsilon", "alpha", "member_id", "sup_value_or_log", "local_slope"], rows)
}

/// Writes `log2 eps` against `log2 value` per series (`plot`), and the
/// fitted line of each series (`fit`). The fitted slope is the
/// [`fit_order`] slope; the intercept is converted to base 2.
pub fn emit_plotdata(series: &[Series], fits: &[Fit], dim: usize, plot: &Path, fit: &Path) -> Result<()> {
    let ln2 = std::f64::consts::LN_2;
    let rows = series.iter().flat_map(|s| {
        (0..s.eps.len()).map(move |i| {
            vec![
                s.member_id.clone(),
                alpha_label(s.alpha, dim),
                num(s.eps[i].log2()),
                num(s.log_values[i] / ln2),
            ]
        })
    });
    write_csv(plot, &["member_id", "alpha", "log2_epsilon", "log2_value"], rows)?;
    let rows = series.iter().zip(fits).map(|(s, f)| {
        vec![
            s.member_id.clone(),
            alpha_label(s.alpha, dim),
            num(f.slope),
            num(f.intercept / ln2),
            num(f.residual),
            f.usable.to_string(),
            f.verdict.to_string(),
        ]
    });
    write_csv(fit, &["member_id", "alpha", "slope", "intercept_log2", "residual", "usable", "verdict"], rows)
}

/// Writes every CSV of `report` into `dir` and returns the written paths.
pub fn emit(report: &ScenarioReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let name = report.scenario.name();
    let file = |suffix: &str| dir.join(format!("{name}-{suffix}.csv"));
    let (sweep, plot, fit, summary) = (file("sweep"), file("plot"), file("fit"), file("summary"));
    emit_sweep(&report.series, report.dim, &sweep)?;
    emit_plotdata(&report.series, &report.fits, report.dim, &plot, &fit)?;
    let rows = report.checks.iter().map(|c| {
        vec![
            name.to_string(),
            c.name.clone(),
            num(c.value),
            c.threshold.clone(),
            c.passed.to_string(),
        ]
    });
    write_csv(&summary, &["scenario", "check", "value", "threshold", "passed"], rows)?;
    let mut written = vec![sweep, plot, fit, summary];
    for t in &report.extra {
        let path = dir.join(&t.file);
        let header: Vec<&str> = t.header.iter().map(String::as_str).collect();
        write_csv(&path, &header, t.rows.clone())?;
        written.push(path);
    }
    Ok(written)
}

fn write_run_log(config: &ScenarioConfig, report: &ScenarioReport, secs: f64) -> Result<()> {
    let stamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let mut text = format!(
        "unix_time = {stamp}\nelapsed_seconds = {secs:.3}\ncsv_schema = {CSV_SCHEMA_VERSION}\nconfig = {config:?}\n"
    );
    for c in &report.checks {
        text.push_str(&format!("{} {}: {} ({})\n", if c.passed { "PASS" } else { "FAIL" }, c.name, num(c.value), c.threshold));
    }
    fs::write(config.out.join("run.log"), text)?;
    Ok(())
}

/// Exit status for a passing run.
pub const EXIT_PASS: i32 = 0;
/// Exit status when some scenario assertion fails.
pub const EXIT_FAIL: i32 = 1;
/// Exit status for usage, config and runtime errors.
pub const EXIT_ERROR: i32 = 2;

/// Entry point of the binary; returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let mut argv: Vec<OsString> = args.into_iter().map(Into::into).collect();
    // `gfn run <scenario>` is accepted as a synonym of `gfn <scenario>`.
    if argv.get(1).is_some_and(|a| a == "run") {
        argv.remove(1);
    }
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_PASS };
        }
    };
    let config = match resolve(&args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("gfn: {e}");
            if matches!(e, Error::UnknownName { kind: "scenario", .. }) {
                eprintln!("available scenarios: {}", SCENARIOS.join(", "));
            }
            return EXIT_ERROR;
        }
    };
    let start = std::time::Instant::now();
    let report = match run_scenario(&config) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("gfn: scenario `{}` failed: {e}", config.scenario);
            return EXIT_ERROR;
        }
    };
    let written = match emit(&report, &config.out).and_then(|w| {
        write_run_log(&config, &report, start.elapsed().as_secs_f64())?;
        Ok(w)
    }) {
        Ok(w) => w,
        Err(e) => {
            eprintln!("gfn: {e}");
            return EXIT_ERROR;
        }
    };
    for c in &report.checks {
        println!("{} {}: {} ({})", if c.passed { "PASS" } else { "FAIL" }, c.name, num(c.value), c.threshold);
    }
    for p in written {
        println!("wrote {}", p.display());
    }
    if report.passed() {
        EXIT_PASS
    } else {
        EXIT_FAIL
    }
}
