//! Acceptance criteria, one PASS/FAIL line each. Tolerances are pinned here.

use std::panic::{self, AssertUnwindSafe};
use std::process::{Command, ExitCode, Stdio};

use gfn_core::asymptotics::{counterexample_scenario, d1_form_test, uniform_compact, NegligibleSearch};
use gfn_core::basic_space::{dj_derivative, embed_c, embed_j, embed_sigma, mul, sub, translate_formalism};
use gfn_core::diffeo::transform_test_object;
use gfn_core::test_objects::{make_battery, perturbation_directions};
use gfn_core::{
    build_mollifier, build_mollifier_at, fit_order, pullback_rep, test_moderate, test_negligible, Diffeomorphism, Distribution,
    MultiIndex, PathMode, Point, QuadratureGrid, Representative, Series, SmoothFn, SweepSpec, TestFunction, TestObjectPath,
};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MASS_TOL: f64 = 1e-12;
const MOMENT_TOL: f64 = 1e-10;
const DOUBLED_GRID_TOL: f64 = 1e-11;
const DELTA_SLOPE_TOL: f64 = 0.02;
const EMBED_ORDER_SLACK: f64 = 0.2;
const ASSOC_STRICT_TOL: f64 = 1e-12;
const ASSOC_ORDER_SLACK: f64 = 0.2;
const INVARIANCE_ORDER_SLACK: f64 = 0.3;
const INVARIANCE_MASS_TOL: f64 = 1e-9;
const SUPER_POLY_RATIO: f64 = 10.0;
const JFORM_TOL: f64 = 1e-8;
const COMPOSE_TOL: f64 = 1e-9;
const EMBED_PULLBACK_TOL: f64 = 1e-8;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg)
    }
}

fn k41() -> Vec<Point> {
    uniform_compact(-1.0, 1.0, 41)
}

fn density(f: SmoothFn) -> Distribution {
    Distribution::density(1, f).unwrap()
}

fn mollifier_construction() -> Outcome {
    let mut worst = (0.0f64, 0.0f64, 0.0f64);
    for q in 1..=6 {
        let phi = build_mollifier(q, 1, 1.0).map_err(|e| e.to_string())?;
        let grid = QuadratureGrid::default_for(1);
        let fine = grid.doubled();
        let mass = phi.moment_with(MultiIndex::ZERO, grid);
        check((mass - 1.0).abs() <= MASS_TOL, format!("q={q}: mass {mass}"))?;
        worst.0 = worst.0.max((mass - 1.0).abs());
        for k in 0..=q {
            let a = MultiIndex::d1(k);
            let (coarse, doubled) = (phi.moment_with(a, grid), phi.moment_with(a, fine));
            if k > 0 {
                check(coarse.abs() <= MOMENT_TOL, format!("q={q}: m{k} = {coarse:e}"))?;
                worst.1 = worst.1.max(coarse.abs());
            }
            check((coarse - doubled).abs() <= DOUBLED_GRID_TOL, format!("q={q}: m{k} doubled grid {coarse} vs {doubled}"))?;
            worst.2 = worst.2.max((coarse - doubled).abs());
        }
    }
    Ok(format!("max mass error {:.1e}, max moment {:.1e}, doubled-grid gap {:.1e}", worst.0, worst.1, worst.2))
}

fn delta_scaling() -> Outcome {
    let r = embed_c(&Distribution::dirac(1, [0.0; 2]).unwrap());
    let battery = make_battery(PathMode::FullPath, 2, 8, 17).map_err(|e| e.to_string())?;
    let spec = SweepSpec::new(2, 14, k41()).unwrap().with_alphas(vec![MultiIndex::ZERO]).unwrap();
    let report = test_moderate(&r, &battery, &spec).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for f in &report.fits {
        check((f.slope + 1.0).abs() <= DELTA_SLOPE_TOL, format!("slope {}", f.slope))?;
        worst = worst.max((f.slope + 1.0).abs());
    }
    check(report.n == Some(1), format!("N = {:?}", report.n))?;
    Ok(format!("8 members, |slope + 1| <= {worst:.4}, N = 1"))
}

fn embedding_consistency() -> Outcome {
    let spec = SweepSpec::new(2, 14, k41()).unwrap();
    let mut summary = Vec::new();
    for (name, f) in [("sin", SmoothFn::sin()), ("x^4", SmoothFn::power(4))] {
        let r = sub(&embed_c(&density(f.clone())), &embed_sigma(1, &f).unwrap()).unwrap();
        for q in 1..=3u32 {
            let battery = make_battery(PathMode::Static, q, 8, 5).map_err(|e| e.to_string())?;
            let report = test_moderate(&r, &battery, &spec).map_err(|e| e.to_string())?;
            let worst = report.fits.iter().map(|f| f.order()).fold(f64::INFINITY, f64::min);
            check(worst >= (q + 1) as f64 - EMBED_ORDER_SLACK, format!("{name}, q={q}: order {worst}"))?;
            summary.push(format!("{name} q={q}: {worst:.2}"));
        }
        let search = NegligibleSearch {
            q_max: 5,
            count: 4,
            ..Default::default()
        };
        let neg_spec = SweepSpec::new(2, 12, uniform_compact(-1.0, 1.0, 21)).unwrap();
        for o in test_negligible(&r, &[1, 2, 3], &search, &neg_spec).map_err(|e| e.to_string())? {
            check(o.witness.is_some(), format!("{name}: no witness for n={}", o.n))?;
            summary.push(format!("{name} n={} witness q={}", o.n, o.witness.unwrap()));
        }
    }
    Ok(summary.join(", "))
}

fn association_repair() -> Outcome {
    let x = density(SmoothFn::power(1));
    let x2 = density(SmoothFn::power(2));
    let r = sub(&mul(&embed_c(&x), &embed_c(&x)).unwrap(), &embed_c(&x2)).unwrap();
    let spec = SweepSpec::new(2, 14, k41()).unwrap();
    let strict = make_battery(PathMode::Static, 2, 8, 9).map_err(|e| e.to_string())?;
    let mut strict_max: f64 = 0.0;
    for path in &strict {
        for &e in &spec.eps() {
            for p in spec.compact.iter() {
                let v = r.eval(&path.scaled_at(e, p).unwrap(), p).map_err(|e| e.to_string())?;
                strict_max = strict_max.max(v.norm());
            }
        }
    }
    let mut failures = Vec::new();
    if strict_max > ASSOC_STRICT_TOL {
        failures.push(format!("strict A2 max {strict_max:e}"));
    }
    let value_spec = spec.clone().with_alphas(vec![MultiIndex::ZERO]).unwrap();
    let mut orders = Vec::new();
    for q in 1..=3u32 {
        let battery = make_battery(PathMode::EpsPath, q, 8, 9).map_err(|e| e.to_string())?;
        let report = test_moderate(&r, &battery, &value_spec).map_err(|e| e.to_string())?;
        let worst = report.fits.iter().map(|f| f.order()).fold(f64::INFINITY, f64::min);
        orders.push(format!("q={q}: {worst:.2}"));
        if worst < (q + 2) as f64 - ASSOC_ORDER_SLACK {
            failures.push(format!("q={q}: order {worst:.3} < {}", (q + 2) as f64 - ASSOC_ORDER_SLACK));
        }
    }
    let detail = format!("strict max {strict_max:.1e}; eps-path orders {}", orders.join(", "));
    if failures.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{} ({detail})", failures.join("; ")))
    }
}

fn moment_invariance() -> Outcome {
    let eps: Vec<f64> = (2..=12).map(|i| 0.5f64.powi(i)).collect();
    let compact: Vec<Point> = uniform_compact(-1.0, 1.0, 9);
    let mut failures = Vec::new();
    let mut mass_gap: f64 = 0.0;
    let mut orders = Vec::new();
    for name in ["scale2", "sine", "cubic"] {
        let map = Diffeomorphism::catalog(name).unwrap();
        for q in [2u32, 4] {
            let source = TestObjectPath::constant("src", build_mollifier_at(q, 1, 0.8, [0.1, 0.0]).unwrap());
            let (path, _) = transform_test_object(&map, &source, std::slice::from_ref(&compact)).map_err(|e| e.to_string())?;
            for k in 1..=q {
                let values: Vec<f64> = eps
                    .iter()
                    .map(|&e| {
                        compact
                            .iter()
                            .map(|x| path.at(e, x).unwrap().moment(MultiIndex::d1(k)).value.abs())
                            .fold(0.0, f64::max)
                    })
                    .collect();
                let series = Series::from_values("moment", MultiIndex::ZERO, &eps, &values, false);
                let order = fit_order(&series, eps.len(), MOMENT_TOL * 1e-3).order();
                orders.push(format!("{name} q={q} m{k}: {order:.2}"));
                if order < q as f64 - INVARIANCE_ORDER_SLACK {
                    failures.push(format!("{name} q={q} m{k}: {order:.2}"));
                }
            }
            for &e in &eps {
                for x in &compact {
                    mass_gap = mass_gap.max((path.at(e, x).unwrap().integral() - 1.0).abs());
                }
            }
        }
    }
    if mass_gap > INVARIANCE_MASS_TOL {
        failures.push(format!("mass gap {mass_gap:e}"));
    }
    if failures.is_empty() {
        Ok(format!("mass gap {mass_gap:.1e}; {}", orders.join(", ")))
    } else {
        Err(format!("orders below q - 0.3: {} (mass gap {mass_gap:.1e})", failures.join(", ")))
    }
}

fn counterexample() -> Outcome {
    let map = Diffeomorphism::catalog("sine").unwrap();
    let battery = make_battery(PathMode::EpsPath, 1, 4, 21).map_err(|e| e.to_string())?;
    let spec = SweepSpec::new(4, 14, k41()).unwrap();
    let report = counterexample_scenario(&map, &battery, &spec, QuadratureGrid::new(1024).unwrap()).map_err(|e| e.to_string())?;
    check(report.unit_modulus, "|R| != 1 somewhere".into())?;
    check(report.untransformed.n == Some(0), format!("untransformed N = {:?}", report.untransformed.n))?;
    check(report.monotone, format!("local slopes not monotone: {:?}", report.local_slopes))?;
    check(report.ratio >= SUPER_POLY_RATIO, format!("ratio {}", report.ratio))?;
    check(report.super_polynomial, "verdict is not super-polynomial".into())?;
    for s in &report.transformed {
        let local: Vec<f64> = s.local_slopes().into_iter().flatten().collect();
        check(
            local.windows(2).all(|w| w[1].abs() > w[0].abs()) && local.last().unwrap().abs() >= SUPER_POLY_RATIO * local[0].abs(),
            format!("{}: {local:?}", s.member_id),
        )?;
    }
    Ok(format!(
        "untransformed N = 0 with |R| = 1; local slopes {:.2} .. {:.1} (ratio {:.0}), super-polynomial",
        report.local_slopes[0],
        report.local_slopes.last().unwrap(),
        report.ratio
    ))
}

fn jform_commutation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let sources = [
        ("delta", Distribution::dirac(1, [0.0; 2]).unwrap()),
        ("delta'", Distribution::dirac_derivative(1, MultiIndex::d1(1), [0.0; 2]).unwrap()),
        ("H", Distribution::heaviside()),
        ("sin", density(SmoothFn::sin())),
    ];
    let mut worst: f64 = 0.0;
    for (name, u) in &sources {
        let lhs_rep = embed_j(u);
        let rhs_rep = embed_j(&u.derivative(0).unwrap());
        let c_rep = embed_c(u);
        let round_trip = translate_formalism(&translate_formalism(&c_rep));
        for _ in 0..20 {
            let q = rng.gen_range(0..4);
            let r = rng.gen_range(0.3..1.0);
            let c = rng.gen_range(-0.5..0.5);
            let eps = 0.5f64.powi(rng.gen_range(0..4));
            let phi = build_mollifier_at(q, 1, r, [c, 0.0]).unwrap().scale(eps).unwrap();
            let x = [rng.gen_range(-1.0..1.0), 0.0];
            let lhs = dj_derivative(&lhs_rep, 0, &phi, &x).map_err(|e| e.to_string())?;
            let rhs = rhs_rep.eval(&phi, &x).map_err(|e| e.to_string())?;
            let gap = (lhs - rhs).norm() / rhs.norm().max(1.0);
            check(gap <= JFORM_TOL, format!("{name}: {lhs} vs {rhs}"))?;
            worst = worst.max(gap);
            let (a, b) = (c_rep.eval(&phi, &x).unwrap(), round_trip.eval(&phi, &x).unwrap());
            check(
                a.re.to_bits() == b.re.to_bits() && a.im.to_bits() == b.im.to_bits(),
                format!("{name}: round trip {a} vs {b}"),
            )?;
            let j_via_t = translate_formalism(&c_rep).eval(&phi, &x).unwrap();
            let j = embed_j(u).eval(&phi, &x).unwrap();
            check(j_via_t == j, format!("{name}: T(iota) {j_via_t} vs iotaJ {j}"))?;
        }
    }
    Ok(format!("80 probes, max gap {worst:.1e}; C/J round trip bit-identical"))
}

fn bits_equal(a: Complex64, b: Complex64) -> bool {
    a.re.to_bits() == b.re.to_bits() && a.im.to_bits() == b.im.to_bits()
}

fn functoriality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let probe = |rng: &mut ChaCha8Rng| -> (TestFunction, Point) {
        let q = rng.gen_range(0..3);
        let phi = build_mollifier_at(q, 1, rng.gen_range(0.3..1.0), [rng.gen_range(-0.3..0.3), 0.0])
            .unwrap()
            .scale(rng.gen_range(0.05..1.0))
            .unwrap();
        (phi, [rng.gen_range(-1.5..1.5), 0.0])
    };
    let reps: Vec<Representative> = vec![
        embed_c(&Distribution::dirac(1, [0.0; 2]).unwrap()),
        embed_c(&Distribution::heaviside()),
        embed_c(&density(SmoothFn::sin())),
    ];
    let id = Diffeomorphism::identity(1);
    for r in &reps {
        let pulled = pullback_rep(&id, r).unwrap();
        for _ in 0..10 {
            let (phi, x) = probe(&mut rng);
            let (a, b) = (r.eval(&phi, &x).unwrap(), pulled.eval(&phi, &x).unwrap());
            check(bits_equal(a, b), format!("identity pullback {a} vs {b}"))?;
        }
    }
    let names = ["scale2", "sine", "cubic"];
    let mut compose_gap: f64 = 0.0;
    let mut probes = 0;
    for (i, mu_name) in names.iter().enumerate() {
        let nu_name = names[(i + 1) % names.len()];
        let mu = Diffeomorphism::catalog(mu_name).unwrap();
        let nu = Diffeomorphism::catalog(nu_name).unwrap();
        let composed = Diffeomorphism::compose(&mu, &nu).unwrap();
        for r in &reps {
            let direct = pullback_rep(&composed, r).unwrap();
            let sequential = pullback_rep(&nu, &pullback_rep(&mu, r).unwrap()).unwrap();
            for _ in 0..6 {
                let (phi, x) = probe(&mut rng);
                let (a, b) = (direct.eval(&phi, &x).unwrap(), sequential.eval(&phi, &x).unwrap());
                let gap = (a - b).norm() / a.norm().max(1.0);
                check(gap <= COMPOSE_TOL, format!("{mu_name}.{nu_name}: {a} vs {b}"))?;
                compose_gap = compose_gap.max(gap);
                probes += 1;
            }
        }
    }
    check(probes >= 50, format!("only {probes} composition probes"))?;
    let mut embed_gap: f64 = 0.0;
    for name in names {
        let mu = Diffeomorphism::catalog(name).unwrap();
        for u in [Distribution::dirac(1, [0.0; 2]).unwrap(), Distribution::heaviside()] {
            let lhs = pullback_rep(&mu, &embed_c(&u)).unwrap();
            let rhs = embed_c(&Distribution::pullback(&mu, &u).unwrap());
            for _ in 0..10 {
                let (phi, x) = probe(&mut rng);
                let (a, b) = (lhs.eval(&phi, &x).unwrap(), rhs.eval(&phi, &x).unwrap());
                let gap = (a - b).norm() / a.norm().max(1.0);
                check(gap <= EMBED_PULLBACK_TOL, format!("{name}: {a} vs {b}"))?;
                embed_gap = embed_gap.max(gap);
            }
        }
    }
    Ok(format!("identity bit-identical; {probes} composition probes, max gap {compose_gap:.1e}; pullback of embedding gap {embed_gap:.1e}"))
}

fn test_equivalence() -> Outcome {
    // Classification only: a 512-node rule already resolves these pairings to ~1e-14.
    let grid = QuadratureGrid::new(512).unwrap();
    let density = |f: SmoothFn| Distribution::density(1, f).unwrap().with_grid(grid);
    let x = density(SmoothFn::power(1));
    let x2 = density(SmoothFn::power(2));
    let sin = SmoothFn::sin();
    let ce = gfn_core::asymptotics::counterexample_representative(gfn_core::Domain::whole(1), grid).unwrap();
    let catalog: Vec<(&str, Representative)> = vec![
        ("iota(delta)", embed_c(&Distribution::dirac(1, [0.0; 2]).unwrap())),
        ("iota(H)", embed_c(&Distribution::heaviside())),
        ("iota(sin)", embed_c(&density(sin.clone()))),
        ("sigma(sin)", embed_sigma(1, &sin).unwrap()),
        ("iota(sin)-sigma(sin)", sub(&embed_c(&density(sin.clone())), &embed_sigma(1, &sin).unwrap()).unwrap()),
        ("iota(x)^2-iota(x^2)", sub(&mul(&embed_c(&x), &embed_c(&x)).unwrap(), &embed_c(&x2)).unwrap()),
        ("counterexample", ce.clone()),
        ("sine^counterexample", pullback_rep(&Diffeomorphism::catalog("sine").unwrap(), &ce).unwrap()),
    ];
    let mut battery = make_battery(PathMode::Static, 2, 3, 31).map_err(|e| e.to_string())?;
    battery.extend(make_battery(PathMode::FullPath, 2, 3, 31).map_err(|e| e.to_string())?);
    let directions = perturbation_directions(2, 31).map_err(|e| e.to_string())?;
    let spec = SweepSpec::new(3, 12, uniform_compact(-1.0, 1.0, 21)).unwrap();
    let mut lines = Vec::new();
    for (name, r) in &catalog {
        let report = d1_form_test(r, &battery, &directions, 2, &spec).map_err(|e| format!("{name}: {e}"))?;
        check(
            report.agrees,
            format!("{name}: d1 says {}, test_moderate says {}", report.moderate, report.reference_moderate),
        )?;
        lines.push(format!("{name}: {}", if report.moderate { "moderate" } else { "not moderate" }));
    }
    Ok(lines.join(", "))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for run in 0..2 {
        let out = dir.path().join(format!("run{run}"));
        let status = Command::new(env!("CARGO_BIN_EXE_gfn"))
            .args(["delta-scaling", "--seed", "3", "--eps-min", "10", "--out"])
            .arg(&out)
            .stdout(Stdio::null())
            .status()
            .map_err(|e| e.to_string())?;
        check(status.success(), format!("run {run} exited with {status}"))?;
        let mut files: Vec<_> = std::fs::read_dir(&out)
            .map_err(|e| e.to_string())?
            .map(|e| e.unwrap().path())
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect();
        files.sort();
        let contents: Vec<(String, Vec<u8>)> = files
            .iter()
            .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(p).unwrap()))
            .collect();
        outputs.push(contents);
    }
    check(!outputs[0].is_empty(), "no CSV files emitted".into())?;
    check(outputs[0] == outputs[1], "CSV outputs differ between runs".into())?;
    Ok(format!("{} CSV files byte-identical across two runs", outputs[0].len()))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("mollifier construction", mollifier_construction),
        ("delta scaling", delta_scaling),
        ("embedding consistency", embedding_consistency),
        ("association repair", association_repair),
        ("moment invariance", moment_invariance),
        ("counterexample", counterexample),
        ("J-formalism commutation", jform_commutation),
        ("functoriality and identity", functoriality),
        ("test-equivalence evidence", test_equivalence),
        ("determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = std::time::Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {} ({name}) [{secs:.1}s]: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {} ({name}) [{secs:.1}s]: {detail}", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}
