//! Acceptance criteria, one PASS/FAIL line each. Runs as a plain binary so the
//! lines show up under `cargo test` without `--nocapture`.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use ddm_core::asymptotics::{
    h_integral, h_integrand, BOUNDARY_CONST_EPS, BOUNDARY_CONST_P15, LNEPS_SLOPE, OUTER_COEFF_EPS,
};
use ddm_core::ddm_ops::{assemble_poisson, Family, Geometry, GeometryOptions, ProblemFields, SchemeKind};
use ddm_core::grid::{norm_l2_weighted, norm_linf_masked, GridSpec, ScalarField, VectorField};
use ddm_core::harness::*;
use ddm_core::levelset::{extend_constant_normal, reinitialize, LevelSetField};
use ddm_core::solvers::{prolong, restrict, solve, MgConfig};
use ddm_core::Result;

// Brackets, pinned.
const FIRST_ORDER: (f64, f64) = (0.85, 1.15);
const LNEPS_SLOPE_REL: f64 = 0.05;
const MODIFIED_K2_MIN: f64 = 1.85;
const MODIFIED_KINF: (f64, f64) = (1.35, 1.7);
const BOUNDARY_CONST_REL: f64 = 0.02;
const MDDM2_CONST_REL: f64 = 0.03;
const H_PRINTED: f64 = 2.92;
const H_TOL: f64 = 0.01;
const SUPER_K2_MIN: f64 = 1.8;
const QUAD_FIT_RESIDUAL: f64 = 0.05;
const HEAT_K2: (f64, f64) = (1.85, 2.15);
const HEAT_KINF_C4_MIN: f64 = 1.85;
const HEAT_KINF_C128: (f64, f64) = (1.35, 1.7);
const STAR_K2_MIN: f64 = 1.8;
const STAR_KINF: (f64, f64) = (1.4, 2.1);
const TORUS_KINF_MIN: f64 = 1.5;
const MG_SPREAD: usize = 2;
const SPLIT_ORDER: (f64, f64) = (1.8, 2.2);
const SPLIT_PRINTED: f64 = -5.7e-3;
const SPLIT_REL: f64 = 0.05;

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new() -> Self {
        Verdict { pass: true, detail: String::new() }
    }

    fn check(&mut self, ok: bool, what: String) {
        self.pass &= ok;
        if !self.detail.is_empty() {
            self.detail.push_str("; ");
        }
        self.detail.push_str(&what);
        if !ok {
            self.detail.push_str(" [out]");
        }
    }

    fn within(&mut self, label: &str, v: f64, (lo, hi): (f64, f64)) {
        self.check(v >= lo && v <= hi, format!("{label} {v:.4} in [{lo}, {hi}]"));
    }

    fn at_least(&mut self, label: &str, v: f64, lo: f64) {
        self.check(v >= lo, format!("{label} {v:.4} >= {lo}"));
    }

    fn near(&mut self, label: &str, v: f64, target: f64, rel: f64) {
        let gap = ((v - target) / target).abs();
        self.check(gap <= rel, format!("{label} {v:.5} vs {target:.5} ({:.2}% <= {}%)", 100.0 * gap, 100.0 * rel));
    }
}

fn orders(t: &ConvergenceTable) -> (f64, f64) {
    (t.fitted_order_l2().unwrap_or(f64::NAN), t.fitted_order_linf().unwrap_or(f64::NAN))
}

fn case1() -> CaseSpec {
    find_case("case1").expect("catalog")
}

fn slope_a(case: &CaseSpec) -> f64 {
    case.a.expect("interval case")
}

fn measured(rows: &[ConstantRow], name: &str) -> f64 {
    rows.iter().find(|r| r.constant_name == name).map(|r| r.measured).unwrap_or(f64::NAN)
}

fn criterion_1() -> Result<Verdict> {
    let mut v = Verdict::new();
    let (k2, kinf) = orders(&run_elliptic(&case1(), SchemeKind::new(Family::Ddm2))?);
    v.within("DDM2 k2", k2, FIRST_ORDER);
    v.within("DDM2 kinf", kinf, FIRST_ORDER);
    Ok(v)
}

fn criterion_2() -> Result<Verdict> {
    let mut v = Verdict::new();
    let case = case1();
    let target = -slope_a(&case) / 6.0;
    v.near("-A/6", target, -0.18517, 1e-4);
    for fam in [Family::Ddm1, Family::Ddm3] {
        let rows = run_constant_validation(&case, SchemeKind::new(fam))?;
        v.near(&format!("{fam:?} slope"), measured(&rows, LNEPS_SLOPE), target, LNEPS_SLOPE_REL);
    }
    Ok(v)
}

fn criterion_3() -> Result<Verdict> {
    let mut v = Verdict::new();
    for fam in [Family::MDdm1, Family::MDdm3] {
        let (k2, kinf) = orders(&run_elliptic(&case1(), SchemeKind::new(fam))?);
        v.at_least(&format!("{fam:?} k2"), k2, MODIFIED_K2_MIN);
        v.within(&format!("{fam:?} kinf"), kinf, MODIFIED_KINF);
    }
    Ok(v)
}

fn criterion_4() -> Result<Verdict> {
    let mut v = Verdict::new();
    let (k2, kinf) = orders(&run_elliptic(&case1(), SchemeKind::new(Family::MDdm2))?);
    v.within("MDdm2 k2", k2, FIRST_ORDER);
    v.within("MDdm2 kinf", kinf, FIRST_ORDER);
    Ok(v)
}

fn criterion_5() -> Result<Verdict> {
    let mut v = Verdict::new();
    let case = case1();
    let a = slope_a(&case);
    for (fam, target, printed) in [
        (Family::MDdm1, -a / (2.0 * PI).sqrt(), -0.44319),
        (Family::MDdm3, -a / (6.0 * PI).sqrt(), -0.25590),
    ] {
        v.near(&format!("{fam:?} closed form"), target, printed, 1e-4);
        let rows = run_constant_validation(&case, SchemeKind::new(fam))?;
        v.near(&format!("{fam:?} boundary constant"), measured(&rows, BOUNDARY_CONST_P15), target, BOUNDARY_CONST_REL);
    }
    Ok(v)
}

fn criterion_6() -> Result<Verdict> {
    let mut v = Verdict::new();
    let case = case1();
    let a = slope_a(&case);
    let big_h = h_integral();
    v.check((big_h - H_PRINTED).abs() <= H_TOL, format!("H {big_h:.5} = {H_PRINTED} +- {H_TOL}"));
    let rows = run_constant_validation(&case, SchemeKind::new(Family::MDdm2))?;
    v.near("interior", measured(&rows, OUTER_COEFF_EPS), -a / big_h, MDDM2_CONST_REL);
    v.near("boundary", measured(&rows, BOUNDARY_CONST_EPS), -a * h_integrand(0.0) / big_h, MDDM2_CONST_REL);
    Ok(v)
}

fn criterion_7() -> Result<Verdict> {
    let mut v = Verdict::new();
    let case = find_case("case2")?;
    v.check(case.a == Some(0.0), "A = 0".into());
    for fam in [Family::Ddm2, Family::MDdm2] {
        let (k2, _) = orders(&run_elliptic(&case, SchemeKind::new(fam))?);
        v.at_least(&format!("{fam:?} k2"), k2, SUPER_K2_MIN);
    }
    for fam in [Family::Ddm1, Family::Ddm3] {
        let (_, fit) = lneps_quadratic_defect(&case, SchemeKind::new(fam), &ConstantOptions::default())?;
        v.check(
            fit.relative_residual <= QUAD_FIT_RESIDUAL,
            format!("{fam:?} quadratic fit residual {:.2e} <= {QUAD_FIT_RESIDUAL}", fit.relative_residual),
        );
    }
    Ok(v)
}

fn heat(id: &str) -> Result<Verdict> {
    let mut v = Verdict::new();
    let scheme = SchemeKind::time_dependent(Family::MDdm3);
    for c in [4.0, 16.0, 128.0] {
        let case = find_case(id)?.with_h_rule(HRule::EpsOver(c));
        let (k2, kinf) = orders(&run_parabolic(&case, scheme)?);
        v.within(&format!("c={c} k2"), k2, HEAT_K2);
        if c == 4.0 {
            v.at_least("c=4 kinf", kinf, HEAT_KINF_C4_MIN);
        } else if c == 128.0 {
            v.within("c=128 kinf", kinf, HEAT_KINF_C128);
        }
    }
    Ok(v)
}

fn criterion_8() -> Result<Verdict> {
    heat("heat1d")
}

fn criterion_9() -> Result<Verdict> {
    heat("heat1d_moving")
}

fn criterion_10() -> Result<Verdict> {
    let mut v = Verdict::new();
    let case = find_case("star2d")?;
    let (k2, kinf) = orders(&run_parabolic(&case, SchemeKind::time_dependent(Family::MDdm3))?);
    v.at_least("k2", k2, STAR_K2_MIN);
    v.within("kinf", kinf, STAR_KINF);
    Ok(v)
}

fn criterion_11() -> Result<Verdict> {
    let mut v = Verdict::new();
    let t = run_elliptic(&find_case("torus3d")?, SchemeKind::new(Family::MDdm3))?;
    v.at_least("kinf", orders(&t).1, TORUS_KINF_MIN);
    Ok(v)
}

fn criterion_12() -> Result<Verdict> {
    let mut v = Verdict::new();
    let case = find_case("star2d_poisson")?;
    let opts = RunOptions::default();
    let counts = [1.0 / 64.0, 1.0 / 128.0, 1.0 / 256.0]
        .into_iter()
        .map(|h| Ok(solve_elliptic_at(&case, SchemeKind::new(Family::MDdm3), 0.1, h, &opts)?.iterations))
        .collect::<Result<Vec<usize>>>()?;
    let spread = counts.iter().max().unwrap() - counts.iter().min().unwrap();
    v.check(spread <= MG_SPREAD, format!("V-cycles {counts:?} to {:e}, spread {spread} <= {MG_SPREAD}", opts.mg.tolerance));
    Ok(v)
}

fn criterion_13() -> Result<Verdict> {
    let mut v = Verdict::new();
    let split = truncation_split(
        &case1(),
        SchemeKind::new(Family::MDdm3),
        0.05,
        &[4.0, 8.0, 16.0, 32.0, 64.0],
        &RunOptions::default(),
    )?;
    v.check(split.all_consecutive_positive(), format!("consecutive {} positive", split.consecutive.iter().map(|e| format!("{e:.2e}")).collect::<Vec<_>>().join(" ")));
    for (k, o) in split.consecutive_orders.iter().enumerate() {
        v.within(&format!("order {k}"), *o, SPLIT_ORDER);
    }
    let analytic = split.analytic_error.unwrap_or(f64::NAN);
    v.near("analytic error", analytic, SPLIT_PRINTED, SPLIT_REL);
    Ok(v)
}

/// Deterministic samples of the invariants that the per-module suites check
/// with generated inputs.
fn criterion_14() -> Result<Verdict> {
    let mut v = Verdict::new();
    let g = GridSpec::cube(2, -2.0, 2.0, 65)?;
    let r = LevelSetField::new(ScalarField::from_fn(g, |p| p[0].hypot(p[1]) - 1.0), 1.0);
    let eps = 0.2;
    let geom = Geometry::from_level_set(&r, eps, &GeometryOptions::default())?;
    let fields = ProblemFields {
        beta: ScalarField::from_fn(g, |p| 2.0 + 0.5 * p[0]),
        advection: Some(VectorField::from_fn(g, |p| [0.3 - p[1], 0.2 * p[0], 0.0])),
        reaction: Some(ScalarField::from_fn(g, |p| -1.0 - 0.1 * p[0] * p[1])),
        f: ScalarField::constant(g, 1.0),
        g: ScalarField::from_fn(g, |p| 0.5 + 0.1 * p[0]),
    };
    let u = ScalarField::from_fn(g, |p| (1.3 * p[0] - 0.4 * p[1]).cos());
    let w = ScalarField::from_fn(g, |p| (p[0] - p[1]).exp());
    let combo = u.zip_with(&w, |x, y| 2.0 * x - 0.5 * y)?;

    let mut linear = 0.0f64;
    let mut interior = 0.0f64;
    for fam in Family::ALL {
        let op = assemble_poisson(&fields, SchemeKind::new(fam), &geom)?;
        let scale = op.stencil.diag.iter().fold(0.0f64, |m, d| m.max(d.abs())) * (2.0 * u.max_abs() + 0.5 * w.max_abs());
        let lhs = op.apply(&combo);
        let rhs = op.apply(&u).zip_with(&op.apply(&w), |x, y| 2.0 * x - 0.5 * y)?;
        linear = linear.max(lhs.zip_with(&rhs, |a, b| a - b)?.max_abs() / scale);
        let reference = assemble_poisson(&fields, SchemeKind::new(Family::Ddm2), &geom)?.apply(&u);
        let au = op.apply(&u);
        for i in (0..g.len()).filter(|&i| r.r[i] < -5.0 * eps && !g.is_boundary(i)) {
            interior = interior.max((au[i] - reference[i]).abs() / reference.max_abs());
        }
    }
    v.check(linear <= 1e-12, format!("linearity {linear:.1e}"));
    v.check(interior <= 1e-8, format!("deep-interior equivalence {interior:.1e}"));

    let bc = fields.g.clone();
    let plain = ProblemFields { beta: ScalarField::constant(g, 1.0), advection: None, reaction: None, f: ScalarField::zeros(g), g: bc.clone() };
    let mut clamp = 0.0f64;
    for fam in [Family::Ddm1, Family::Ddm2, Family::MDdm1, Family::MDdm2] {
        let op = assemble_poisson(&plain, SchemeKind::new(fam), &Geometry::from_level_set(&r, 0.1, &GeometryOptions::default())?)?;
        let (sol, _) = solve(&op, &MgConfig::default(), &bc)?;
        for i in (0..g.len()).filter(|&i| r.r[i] > 0.5) {
            clamp = clamp.max((sol[i] - bc[i]).abs());
        }
    }
    v.check(clamp <= 1e-6, format!("exterior clamping {clamp:.1e}"));

    let h = g.spacing();
    let reinit = reinitialize(&r, 200);
    let drift = (0..g.len())
        .filter(|&i| r.r[i].abs() <= 0.3 && (r.r[i] + 1.0) > 0.2)
        .map(|i| (reinit.r[i] - r.r[i]).abs())
        .fold(0.0, f64::max);
    v.check(drift <= 1e-3 * h, format!("reinit idempotence {:.1e} h", drift / h));
    let psi = ScalarField::from_fn(g, |p| (2.0 * p[1].atan2(p[0])).cos() * p[0].hypot(p[1]));
    let once = extend_constant_normal(&psi, &r, 0.3)?;
    let twice = extend_constant_normal(&once, &r, 0.3)?;
    let proj = once.zip_with(&twice, |a, b| a - b)?.max_abs() / once.max_abs();
    v.check(proj <= 1e-10, format!("extension projection {proj:.1e}"));

    let one = ScalarField::constant(g, 1.0);
    let scaled = u.map(|x| -3.5 * x);
    let hom2 = (norm_l2_weighted(&one, &scaled)? - 3.5 * norm_l2_weighted(&one, &u)?).abs();
    let inside = |i: usize| r.r[i] <= 0.0;
    let homi = (norm_linf_masked(inside, &scaled)? - 3.5 * norm_linf_masked(inside, &u)?).abs();
    v.check(hom2.max(homi) <= 1e-12, format!("norm homogeneity {:.1e}", hom2.max(homi)));

    let mut dual = 0.0f64;
    for dim in 1..=3 {
        let fine = GridSpec::cube(dim, -1.0, 1.0, 9)?;
        let coarse = fine.coarsen(5).expect("coarsens");
        let a = ScalarField::from_fn(fine, |p| (3.0 * p[0] + p[1]).sin() + p[2]);
        let b = ScalarField::from_fn(coarse, |p| (1.0 - p[0] * p[0]) * (1.0 - p[1] * p[1]) * (1.0 - p[2] * p[2]) * (p[0] + 2.0));
        let dot = |x: &ScalarField, y: &ScalarField| x.values().iter().zip(y.values()).map(|(s, t)| s * t).sum::<f64>();
        let lhs = dot(&restrict(&a, &coarse), &b);
        let rhs = dot(&a, &prolong(&b, &fine)) / f64::powi(2.0, dim as i32);
        dual = dual.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()));
    }
    v.check(dual <= 1e-12, format!("restriction/prolongation duality {dual:.1e}"));
    Ok(v)
}

type Criterion = fn() -> Result<Verdict>;

fn main() -> ExitCode {
    let filter: Option<Vec<usize>> = std::env::var("DDM_ACCEPTANCE")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    // `cargo test -- --list` and friends pass arguments; a plain run passes none
    // that matter here.
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let all: [(usize, Criterion); 14] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
        (10, criterion_10),
        (11, criterion_11),
        (12, criterion_12),
        (13, criterion_13),
        (14, criterion_14),
    ];
    let mut failed = Vec::new();
    for (id, run) in all {
        if filter.as_ref().is_some_and(|f| !f.contains(&id)) {
            continue;
        }
        let t0 = Instant::now();
        let (pass, detail) = match run() {
            Ok(v) => (v.pass, v.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        let secs = t0.elapsed().as_secs_f64();
        println!("criterion {id:>2}: {} ({secs:.1}s) {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed criteria: {failed:?}");
        ExitCode::FAILURE
    }
}
