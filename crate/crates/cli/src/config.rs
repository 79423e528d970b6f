use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ddm_core::ddm_ops::{GeometryOptions, SchemeKind};
use ddm_core::harness::{find_case, CaseSpec, RunOptions};
use ddm_core::solvers::{CoarseOperator, MgConfig};
use ddm_core::DdmError;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Solve,
    Converge,
    Constants,
    Split,
    LevelsetDemo,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Command::Solve => "solve",
            Command::Converge => "converge",
            Command::Constants => "constants",
            Command::Split => "split",
            Command::LevelsetDemo => "levelset-demo",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub case: Option<String>,
    pub scheme: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscretizationSection {
    pub eps: Option<f64>,
    pub eps_schedule: Option<Vec<f64>>,
    pub h: Option<f64>,
    pub h_rule: Option<String>,
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    /// `h = eps / c` for each entry (split).
    pub c: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
    pub dump_times: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    pub tau: Option<f64>,
    pub mask_normal: Option<bool>,
    pub analytic_grad: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultigridSection {
    pub levels: Option<usize>,
    pub pre_smooth: Option<usize>,
    pub post_smooth: Option<usize>,
    pub tolerance: Option<f64>,
    pub max_vcycles: Option<usize>,
    pub min_coarse_nodes: Option<usize>,
    pub coarse_operator: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelSetSection {
    pub reinit_steps: Option<usize>,
    pub reinit_band: Option<f64>,
    pub extension_band: Option<f64>,
}

/// Everything a run reads; every entry is optional until resolved.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<Command>,
    #[serde(default)]
    pub problem: ProblemSection,
    #[serde(default)]
    pub discretization: DiscretizationSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub geometry: GeometrySection,
    #[serde(default)]
    pub multigrid: MultigridSection,
    #[serde(default)]
    pub levelset: LevelSetSection,
}

macro_rules! overlay {
    ($dst:expr, $src:expr, $($field:ident),+) => {
        $(if $src.$field.is_some() { $dst.$field = $src.$field.clone(); })+
    };
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, DdmError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| DdmError::from(e).context(path.display().to_string()))?;
        toml::from_str(&text).map_err(|e| DdmError::Parse(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Entries set in `other` replace those in `self`.
    pub fn overlay(&mut self, other: &RunConfig) {
        if other.command.is_some() {
            self.command = other.command;
        }
        overlay!(self.problem, other.problem, case, scheme);
        overlay!(
            self.discretization,
            other.discretization,
            eps,
            eps_schedule,
            h,
            h_rule,
            dt,
            t_end,
            c
        );
        overlay!(self.output, other.output, dir, dump_times);
        overlay!(
            self.geometry,
            other.geometry,
            tau,
            mask_normal,
            analytic_grad
        );
        overlay!(
            self.multigrid,
            other.multigrid,
            levels,
            pre_smooth,
            post_smooth,
            tolerance,
            max_vcycles,
            min_coarse_nodes,
            coarse_operator
        );
        overlay!(
            self.levelset,
            other.levelset,
            reinit_steps,
            reinit_band,
            extension_band
        );
    }
}

/// A config with every default filled in and checked against the catalog.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub command: Command,
    pub case: CaseSpec,
    pub scheme: SchemeKind,
    pub eps: f64,
    pub h: f64,
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    pub c: Vec<f64>,
    pub out: PathBuf,
    pub dump_times: Vec<f64>,
    pub run: RunOptions,
    pub effective: RunConfig,
}

fn parse<T: FromStr<Err = DdmError>>(s: &str) -> Result<T, DdmError> {
    s.parse()
}

const DEFAULT_SPLIT_C: [f64; 5] = [4.0, 8.0, 16.0, 32.0, 64.0];

pub fn resolve(cfg: &RunConfig) -> Result<Resolved, DdmError> {
    let command = cfg
        .command
        .ok_or_else(|| DdmError::InvalidParameter("no command given".into()))?;
    let case_id = cfg
        .problem
        .case
        .clone()
        .ok_or_else(|| DdmError::InvalidParameter("no case given".into()))?;
    let mut case = find_case(&case_id)?;
    let scheme = match &cfg.problem.scheme {
        Some(s) => parse::<SchemeKind>(s)?,
        None => case.default_scheme(),
    };
    if scheme.time_dependent != case.is_time_dependent() && command != Command::LevelsetDemo {
        return Err(DdmError::InvalidParameter(format!(
            "scheme {scheme} does not match case {}, which is {}",
            case.id,
            if case.is_time_dependent() {
                "time-dependent"
            } else {
                "steady"
            }
        )));
    }
    let d = &cfg.discretization;
    if let Some(rule) = &d.h_rule {
        case = case.with_h_rule(parse(rule)?);
    }
    if let Some(eps) = &d.eps_schedule {
        case = case.with_eps_schedule(eps.clone());
    }
    if let Some(t) = d.t_end {
        if !case.is_time_dependent() {
            return Err(DdmError::InvalidParameter(format!(
                "case {} has no end time",
                case.id
            )));
        }
        case = case.with_t_end(t);
    }
    let g = &cfg.geometry;
    case.geometry = GeometryOptions {
        tau: g.tau.unwrap_or(case.geometry.tau),
        mask_normal: g.mask_normal.unwrap_or(case.geometry.mask_normal),
        analytic_grad: g.analytic_grad.unwrap_or(case.geometry.analytic_grad),
    };
    case.validate()?;

    let h_rule = case.h_rule_for(scheme);
    let eps = d.eps.unwrap_or(
        *case
            .eps_schedule
            .last()
            .expect("validated schedule is nonempty"),
    );
    let h = d.h.unwrap_or_else(|| h_rule.h(eps));
    if !(eps > 0.0) || !(h > 0.0) {
        return Err(DdmError::InvalidParameter(format!(
            "eps = {eps} and h = {h} must be positive"
        )));
    }
    let t_end = case.time.map(|t| t.t_end);
    let dt = match case.time {
        Some(t) => Some(d.dt.unwrap_or_else(|| t.dt.dt(eps, h))),
        None => {
            d.dt.map(|_| {
                Err(DdmError::InvalidParameter(format!(
                    "case {} is steady",
                    case.id
                )))
            })
            .transpose()?
        }
    };
    if dt.is_some_and(|v| !(v > 0.0)) {
        return Err(DdmError::InvalidParameter("dt must be positive".into()));
    }
    let c = d.c.clone().unwrap_or_else(|| DEFAULT_SPLIT_C.to_vec());

    let defaults = MgConfig::default();
    let m = &cfg.multigrid;
    let mg = MgConfig {
        n_levels: m.levels.unwrap_or(defaults.n_levels),
        pre_smooth: m.pre_smooth.unwrap_or(defaults.pre_smooth),
        post_smooth: m.post_smooth.unwrap_or(defaults.post_smooth),
        tolerance: m.tolerance.unwrap_or(defaults.tolerance),
        max_vcycles: m.max_vcycles.unwrap_or(defaults.max_vcycles),
        min_coarse_nodes: m.min_coarse_nodes.unwrap_or(defaults.min_coarse_nodes),
        coarse_operator: m
            .coarse_operator
            .as_deref()
            .map(CoarseOperator::from_str)
            .transpose()?
            .unwrap_or(defaults.coarse_operator),
    };
    let base = RunOptions::default();
    let l = &cfg.levelset;
    let run = RunOptions {
        mg,
        geometry: Some(case.geometry),
        reinit_steps: l.reinit_steps.unwrap_or(base.reinit_steps),
        reinit_band: l.reinit_band.unwrap_or(base.reinit_band),
        extension_band: l.extension_band.unwrap_or(base.extension_band),
    };
    let out = cfg
        .output
        .dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("out"));
    let dump_times = cfg.output.dump_times.clone().unwrap_or_default();

    let effective = RunConfig {
        command: Some(command),
        problem: ProblemSection {
            case: Some(case.id.clone()),
            scheme: Some(scheme.to_string()),
        },
        discretization: DiscretizationSection {
            eps: Some(eps),
            eps_schedule: Some(case.eps_schedule.clone()),
            h: Some(h),
            h_rule: Some(h_rule.to_string()),
            dt,
            t_end,
            c: Some(c.clone()),
        },
        output: OutputSection {
            dir: Some(out.clone()),
            dump_times: Some(dump_times.clone()),
        },
        geometry: GeometrySection {
            tau: Some(case.geometry.tau),
            mask_normal: Some(case.geometry.mask_normal),
            analytic_grad: Some(case.geometry.analytic_grad),
        },
        multigrid: MultigridSection {
            levels: Some(mg.n_levels),
            pre_smooth: Some(mg.pre_smooth),
            post_smooth: Some(mg.post_smooth),
            tolerance: Some(mg.tolerance),
            max_vcycles: Some(mg.max_vcycles),
            min_coarse_nodes: Some(mg.min_coarse_nodes),
            coarse_operator: Some(mg.coarse_operator.to_string()),
        },
        levelset: LevelSetSection {
            reinit_steps: Some(run.reinit_steps),
            reinit_band: Some(run.reinit_band),
            extension_band: Some(run.extension_band),
        },
    };
    Ok(Resolved {
        command,
        case,
        scheme,
        eps,
        h,
        dt,
        t_end,
        c,
        out,
        dump_times,
        run,
        effective,
    })
}

impl Resolved {
    /// Every eps this run will solve at.
    pub fn eps_values(&self) -> Vec<f64> {
        match self.command {
            Command::Converge => self.case.eps_schedule.clone(),
            _ => vec![self.eps],
        }
    }

    /// Checks the problem invariants and the output directory without solving.
    pub fn preflight(&self) -> Result<(), DdmError> {
        if self.command != Command::Constants {
            for eps in self.eps_values() {
                self.case.problem.check_invariants(eps)?;
            }
        }
        if self.command == Command::Split && self.c.len() < 3 {
            return Err(DdmError::InvalidParameter(format!(
                "split needs at least 3 values of c, got {}",
                self.c.len()
            )));
        }
        if self.command == Command::Constants && self.case.a.is_none() {
            return Err(DdmError::InvalidParameter(format!(
                "case {} has no boundary slope",
                self.case.id
            )));
        }
        std::fs::create_dir_all(&self.out)
            .map_err(|e| DdmError::from(e).context(self.out.display().to_string()))?;
        Ok(())
    }
}
