use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ddm_core::grid::{write_field, ScalarField};
use ddm_core::harness::{
    advance_level_set, run_constant_validation_with, run_elliptic_with, run_parabolic_with,
    solve_elliptic_at, solve_parabolic_at, truncation_split, write_constants_csv, ConstantOptions,
    RunOutcome,
};
use ddm_core::levelset::{analytic_seed, max_slope_defect, LevelSetField};
use ddm_core::{DdmError, Result};

use crate::config::{Command, Resolved};

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| DdmError::from(e).context(path.display().to_string()))
}

fn dump(dir: &Path, name: &str, f: &ScalarField) -> Result<()> {
    let mut w = create(&dir.join(name))?;
    write_field(&mut w, f)?;
    w.flush()?;
    Ok(())
}

/// Stem for files written at time `t`.
fn time_tag(t: f64) -> String {
    format!("t{t:.6}")
}

/// Calls `hit` once for each requested time, at the first step reaching it.
struct DumpSchedule {
    times: Vec<f64>,
    next: usize,
    half_dt: f64,
}

impl DumpSchedule {
    fn new(mut times: Vec<f64>, dt: f64) -> Self {
        times.sort_by(f64::total_cmp);
        DumpSchedule {
            times,
            next: 0,
            half_dt: 0.5 * dt,
        }
    }

    fn due(&mut self, t: f64) -> bool {
        let mut hit = false;
        while self.next < self.times.len() && t >= self.times[self.next] - self.half_dt {
            self.next += 1;
            hit = true;
        }
        hit
    }
}

pub fn write_effective(res: &Resolved) -> Result<()> {
    let mut w = create(&res.out.join("effective_config.toml"))?;
    w.write_all(res.effective.to_toml().as_bytes())?;
    w.flush()?;
    Ok(())
}

pub fn run(res: &Resolved, stdout: &mut dyn Write) -> Result<()> {
    match res.command {
        Command::Solve => solve(res, stdout),
        Command::Converge => converge(res, stdout),
        Command::Constants => constants(res, stdout),
        Command::Split => split(res, stdout),
        Command::LevelsetDemo => levelset_demo(res, stdout),
    }
}

fn solve(res: &Resolved, stdout: &mut dyn Write) -> Result<()> {
    let outcome: RunOutcome = match (res.dt, res.t_end) {
        (Some(dt), Some(t_end)) => {
            let mut schedule = DumpSchedule::new(res.dump_times.clone(), dt);
            let mut observer = |t: f64, u: &ScalarField, r: &LevelSetField| -> Result<()> {
                if schedule.due(t) {
                    dump(&res.out, &format!("u_{}.txt", time_tag(t)), u)?;
                    dump(&res.out, &format!("r_{}.txt", time_tag(t)), &r.r)?;
                }
                Ok(())
            };
            solve_parabolic_at(
                &res.case,
                res.scheme,
                res.eps,
                res.h,
                dt,
                t_end,
                &res.run,
                &mut observer,
            )?
        }
        _ => solve_elliptic_at(&res.case, res.scheme, res.eps, res.h, &res.run)?,
    };
    dump(&res.out, "u.txt", &outcome.u)?;
    dump(&res.out, "u_exact.txt", &outcome.u_exact)?;
    dump(&res.out, "r.txt", &outcome.level_set.r)?;
    dump(&res.out, "phi.txt", &outcome.phi)?;
    let mut w = csv::Writer::from_writer(stdout);
    w.write_record([
        "epsilon",
        "h",
        "dt",
        "steps",
        "t",
        "E2",
        "Einf",
        "max_error",
        "iterations",
        "residual",
    ])?;
    w.write_record([
        outcome.eps.to_string(),
        outcome.h.to_string(),
        outcome.dt.map(|d| d.to_string()).unwrap_or_default(),
        outcome.steps.to_string(),
        outcome.t.to_string(),
        format!("{:.6e}", outcome.e2),
        format!("{:.6e}", outcome.einf),
        format!("{:.6e}", outcome.max_error()),
        outcome.iterations.to_string(),
        format!("{:.3e}", outcome.residual),
    ])?;
    w.flush()?;
    Ok(())
}

fn converge(res: &Resolved, stdout: &mut dyn Write) -> Result<()> {
    let table = if res.case.is_time_dependent() {
        run_parabolic_with(&res.case, res.scheme, &res.run)?
    } else {
        run_elliptic_with(&res.case, res.scheme, &res.run)?
    };
    let csv = table.to_csv_string(true);
    let mut w = create(
        &res.out
            .join(format!("converge_{}_{}.csv", res.case.id, res.scheme)),
    )?;
    w.write_all(csv.as_bytes())?;
    w.flush()?;
    stdout.write_all(csv.as_bytes())?;
    Ok(())
}

fn constants(res: &Resolved, stdout: &mut dyn Write) -> Result<()> {
    let opts = ConstantOptions {
        run: res.run.clone(),
        h_rule: res.case.h_rule,
        ..ConstantOptions::default()
    };
    let rows = run_constant_validation_with(&res.case, res.scheme, &opts)?;
    let mut buf = Vec::new();
    write_constants_csv(&rows, &mut buf)?;
    let mut w = create(
        &res.out
            .join(format!("constants_{}_{}.csv", res.case.id, res.scheme)),
    )?;
    w.write_all(&buf)?;
    w.flush()?;
    stdout.write_all(&buf)?;
    Ok(())
}

fn split(res: &Resolved, stdout: &mut dyn Write) -> Result<()> {
    let report = truncation_split(&res.case, res.scheme, res.eps, &res.c, &res.run)?;
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(["c", "h", "Einf", "consecutive", "consecutive_order"])?;
        for (k, (&c, &h)) in res.c.iter().zip(&report.h).enumerate() {
            let opt = |v: Option<&f64>| v.map(|x| format!("{x:.6e}")).unwrap_or_default();
            w.write_record([
                c.to_string(),
                format!("{h:.6e}"),
                format!("{:.6e}", report.total_errors[k]),
                opt(report.consecutive.get(k)),
                opt(k
                    .checked_sub(1)
                    .and_then(|j| report.consecutive_orders.get(j))),
            ])?;
        }
        w.flush()?;
    }
    let mut summary = create(
        &res.out
            .join(format!("split_{}_{}.csv", res.case.id, res.scheme)),
    )?;
    summary.write_all(&buf)?;
    writeln!(summary)?;
    writeln!(
        summary,
        "truncation_estimate,{:.6e}",
        report.truncation_estimate
    )?;
    if let Some(a) = report.analytic_error {
        writeln!(summary, "analytic_error,{a:.6e}")?;
    }
    if let Some(o) = report.opposite_signs() {
        writeln!(summary, "opposite_signs,{o}")?;
    }
    summary.flush()?;
    stdout.write_all(&buf)?;
    Ok(())
}

/// Moves the case's level set to the end time, reporting the enclosed
/// volume and slope defect at each requested time.
fn levelset_demo(res: &Resolved, stdout: &mut dyn Write) -> Result<()> {
    let case = &res.case;
    let p = &case.problem;
    let lo = p.lo[0];
    let hi = p.hi[0];
    let grid = ddm_core::grid::GridSpec::cube_with_spacing(p.dim(), lo, hi, res.h)?;
    let band = res.run.reinit_band * res.eps;
    let mut r = analytic_seed(&p.shape, &grid, band)?;
    let dt = res.dt.unwrap_or(0.5 * res.h);
    let t_end = res.t_end.unwrap_or(0.0);
    let steps = if t_end > 0.0 {
        ((t_end / dt).round() as usize).max(1)
    } else {
        0
    };
    let dt = if steps > 0 { t_end / steps as f64 } else { dt };
    let mut schedule = DumpSchedule::new(res.dump_times.clone(), dt);
    let cell = (0..grid.dim()).map(|a| grid.h(a)).product::<f64>();
    let mut w = csv::Writer::from_writer(stdout);
    w.write_record(["t", "volume", "slope_defect"])?;
    let mut report = |t: f64,
                      r: &LevelSetField,
                      force: bool,
                      w: &mut csv::Writer<&mut dyn Write>|
     -> Result<()> {
        if schedule.due(t) || force {
            let volume = r.r.values().iter().filter(|&&v| v <= 0.0).count() as f64 * cell;
            w.write_record([
                t.to_string(),
                format!("{volume:.6e}"),
                format!("{:.6e}", max_slope_defect(r, band)),
            ])?;
            dump(&res.out, &format!("r_{}.txt", time_tag(t)), &r.r)?;
        }
        Ok(())
    };
    report(0.0, &r, steps == 0, &mut w)?;
    for n in 0..steps {
        let t = n as f64 * dt;
        r = advance_level_set(case, &r, t, dt, &res.run)
            .map_err(|e| e.context(format!("step {}", n + 1)))?;
        report((n + 1) as f64 * dt, &r, n + 1 == steps, &mut w)?;
    }
    w.flush()?;
    Ok(())
}
