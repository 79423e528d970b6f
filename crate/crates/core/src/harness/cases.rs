use std::fmt;
use std::str::FromStr;

use crate::ddm_ops::{
    scalar_fn, vector_fn, Family, GeometryOptions, InvariantLimits, Motion, ProblemSpec, SchemeKind,
};
use crate::error::{DdmError, Result};
use crate::levelset::Shape;

/// Half-width of the 1D domain.
pub const BOUNDARY_X: f64 = 1.111;

/// Grid spacing as a function of eps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HRule {
    /// `h = eps / c`
    EpsOver(f64),
    /// `h = eps^1.5 / c`
    Eps15Over(f64),
}

impl HRule {
    pub fn h(&self, eps: f64) -> f64 {
        match *self {
            HRule::EpsOver(c) => eps / c,
            HRule::Eps15Over(c) => eps.powf(1.5) / c,
        }
    }
}

impl fmt::Display for HRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HRule::EpsOver(c) => write!(f, "eps/{c}"),
            HRule::Eps15Over(c) => write!(f, "eps^1.5/{c}"),
        }
    }
}

impl FromStr for HRule {
    type Err = DdmError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().replace(' ', "");
        let bad = || DdmError::Unknown {
            kind: "h rule",
            name: s.to_string(),
        };
        let (head, c) = s.split_once('/').ok_or_else(bad)?;
        let c: f64 = c.parse().map_err(|_| bad())?;
        if !(c > 0.0) {
            return Err(bad());
        }
        match head {
            "eps" => Ok(HRule::EpsOver(c)),
            "eps^1.5" => Ok(HRule::Eps15Over(c)),
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DtRule {
    /// `dt = h`
    EqualH,
    /// `dt = dt0 * eps / eps0`
    Scaled { dt0: f64, eps0: f64 },
}

impl DtRule {
    pub fn dt(&self, eps: f64, h: f64) -> f64 {
        match *self {
            DtRule::EqualH => h,
            DtRule::Scaled { dt0, eps0 } => dt0 * eps / eps0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeRule {
    pub t_end: f64,
    pub dt: DtRule,
}

/// How boundary data is continued off the boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataExtension {
    /// `g(x) = g(closest point of x)`.
    ClosestPoint,
    /// Closest-point values next to the boundary, continued by the
    /// constant-normal extension equation.
    Transport,
}

#[derive(Debug, Clone)]
pub struct CaseSpec {
    pub id: String,
    pub description: String,
    pub problem: ProblemSpec,
    pub eps_schedule: Vec<f64>,
    /// Fixed spacing rule; `None` picks one from the scheme.
    pub h_rule: Option<HRule>,
    pub time: Option<TimeRule>,
    /// Outward normal derivative of the exact solution on the boundary.
    pub a: Option<f64>,
    pub geometry: GeometryOptions,
    pub extension: DataExtension,
    pub default_family: Family,
}

impl CaseSpec {
    pub fn is_time_dependent(&self) -> bool {
        self.time.is_some()
    }

    pub fn default_scheme(&self) -> SchemeKind {
        if self.is_time_dependent() {
            SchemeKind::time_dependent(self.default_family)
        } else {
            SchemeKind::new(self.default_family)
        }
    }

    /// `eps/4` for the plain families, `eps^1.5/4` for the modified ones.
    pub fn h_rule_for(&self, scheme: SchemeKind) -> HRule {
        self.h_rule.unwrap_or(if scheme.family.is_modified() {
            HRule::Eps15Over(4.0)
        } else {
            HRule::EpsOver(4.0)
        })
    }

    pub fn with_h_rule(mut self, rule: HRule) -> Self {
        self.h_rule = Some(rule);
        self
    }

    pub fn with_eps_schedule(mut self, eps: Vec<f64>) -> Self {
        self.eps_schedule = eps;
        self
    }

    pub fn with_t_end(mut self, t_end: f64) -> Self {
        if let Some(t) = self.time.as_mut() {
            t.t_end = t_end;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.eps_schedule.is_empty() {
            return Err(DdmError::InvalidParameter(format!(
                "case {} has an empty eps schedule",
                self.id
            )));
        }
        if self.eps_schedule.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(DdmError::InvalidParameter(format!(
                "eps schedule of {} is not strictly decreasing",
                self.id
            )));
        }
        for &e in &self.eps_schedule {
            self.problem
                .check_invariants(e)
                .map_err(|err| err.context(format!("case {} at eps {e}", self.id)))?;
        }
        Ok(())
    }
}

const SCHEDULE_1D: [f64; 4] = [0.05, 0.025, 0.0125, 0.00625];

fn interval_case(
    id: &str,
    description: &str,
    u: fn(f64) -> f64,
    du: fn(f64) -> f64,
    d2u: fn(f64) -> f64,
) -> CaseSpec {
    let a = BOUNDARY_X;
    CaseSpec {
        id: id.into(),
        description: description.into(),
        problem: ProblemSpec {
            lo: vec![-2.0],
            hi: vec![2.0],
            shape: Shape::Interval { a: -a, b: a },
            motion: Motion::Stationary,
            beta: None,
            advection: None,
            reaction: None,
            forcing: scalar_fn(move |x, _| d2u(x[0])),
            boundary: scalar_fn(move |x, _| u(x[0])),
            exact: Some(scalar_fn(move |x, _| u(x[0]))),
            initial: None,
            limits: InvariantLimits::default(),
        },
        eps_schedule: SCHEDULE_1D.to_vec(),
        h_rule: None,
        time: None,
        a: Some(du(a)),
        geometry: GeometryOptions {
            mask_normal: false,
            ..GeometryOptions::default()
        },
        extension: DataExtension::ClosestPoint,
        default_family: Family::Ddm2,
    }
}

fn heat_1d(id: &str, description: &str, moving: bool) -> CaseSpec {
    let mut case = interval_case(id, description, f64::cos, |x| -x.sin(), |x| -x.cos());
    let p = &mut case.problem;
    p.forcing = scalar_fn(|x, t| x[0].cos() * (t.cos() + t.sin()));
    p.boundary = scalar_fn(|x, t| x[0].cos() * t.sin());
    p.exact = Some(scalar_fn(|x, t| x[0].cos() * t.sin()));
    p.initial = Some(scalar_fn(|_, _| 0.0));
    if moving {
        // 0 for x <= -0.5, 0.5 for x >= 0.5: the left end is fixed, the right
        // end moves at speed 0.5.
        p.motion = Motion::NormalSpeed(scalar_fn(|x, _| {
            let s = (x[0] + 0.5).clamp(0.0, 1.0);
            0.5 * s * s * (3.0 - 2.0 * s)
        }));
    }
    case.a = None;
    case.h_rule = Some(HRule::EpsOver(4.0));
    case.time = Some(TimeRule {
        t_end: 1.0,
        dt: DtRule::EqualH,
    });
    case.default_family = Family::MDdm3;
    case
}

/// Exact boundary of the moving star at time `t`.
pub fn moving_star_shape(t: f64) -> Shape {
    Shape::PolarStar {
        base: 1.0,
        modes: vec![
            (0.1 * (1.0 + 2.0 * t + 2.0 * t * t), 3.0),
            (0.02 * (1.0 + 6.0 * t + 18.0 * t * t), 5.0),
        ],
    }
}

fn star_case(id: &str, description: &str, half: f64, moving: bool) -> CaseSpec {
    let motion = if moving {
        Motion::Velocity(vector_fn(|x, t| {
            let rho = x[0].hypot(x[1]);
            if rho < 1e-12 {
                return [0.0; 3];
            }
            let th = x[1].atan2(x[0]);
            let s = 0.2 * (1.0 + 2.0 * t) * (3.0 * th).cos()
                + 0.12 * (1.0 + 6.0 * t) * (5.0 * th).cos();
            [s * x[0] / rho, s * x[1] / rho, 0.0]
        }))
    } else {
        Motion::Stationary
    };
    let quarter = scalar_fn(|x, _| 0.25 * (x[0] * x[0] + x[1] * x[1]));
    CaseSpec {
        id: id.into(),
        description: description.into(),
        problem: ProblemSpec {
            lo: vec![-half; 2],
            hi: vec![half; 2],
            shape: Shape::star(),
            motion,
            beta: None,
            advection: None,
            reaction: None,
            forcing: scalar_fn(move |_, _| if moving { -1.0 } else { 1.0 }),
            boundary: quarter.clone(),
            exact: Some(quarter.clone()),
            initial: if moving { Some(quarter) } else { None },
            limits: InvariantLimits {
                min_buffer: 4.0,
                max_eps_curvature: 0.5,
            },
        },
        eps_schedule: vec![0.2, 0.1, 0.05],
        h_rule: Some(HRule::EpsOver(6.4)),
        time: None,
        a: None,
        geometry: GeometryOptions::default(),
        extension: DataExtension::Transport,
        default_family: Family::MDdm3,
    }
}

fn torus_case() -> CaseSpec {
    let u = |x: [f64; 3]| x[0] * x[1].exp() + x[2].exp() * (1.0 + x[1] * x[1]).sqrt();
    CaseSpec {
        id: "torus3d".into(),
        description: "variable-coefficient Poisson problem inside a tilted torus".into(),
        problem: ProblemSpec {
            lo: vec![-1.0; 3],
            hi: vec![1.0; 3],
            shape: Shape::torus(),
            motion: Motion::Stationary,
            beta: Some(scalar_fn(|x, _| 7.0 + x[0] + 2.0 * x[1] + 3.0 * x[2])),
            advection: None,
            reaction: None,
            forcing: scalar_fn(|x, _| {
                let (ey, ez) = (x[1].exp(), x[2].exp());
                let q = (1.0 + x[1] * x[1]).sqrt();
                let ux = ey;
                let uy = x[0] * ey + ez * x[1] / q;
                let uz = ez * q;
                let lap = x[0] * ey + ez / (q * q * q) + ez * q;
                let beta = 7.0 + x[0] + 2.0 * x[1] + 3.0 * x[2];
                ux + 2.0 * uy + 3.0 * uz + beta * lap
            }),
            boundary: scalar_fn(move |x, _| u(x)),
            exact: Some(scalar_fn(move |x, _| u(x))),
            initial: None,
            limits: InvariantLimits {
                min_buffer: 0.5,
                max_eps_curvature: 0.7,
            },
        },
        eps_schedule: vec![0.2, 0.1],
        h_rule: Some(HRule::EpsOver(3.2)),
        time: None,
        a: None,
        geometry: GeometryOptions::default(),
        extension: DataExtension::ClosestPoint,
        default_family: Family::MDdm3,
    }
}

pub fn builtin_cases() -> Vec<CaseSpec> {
    const C: f64 = BOUNDARY_X;
    let mut cases = vec![
        interval_case("case1", "u = x^2/2", |x| 0.5 * x * x, |x| x, |_| 1.0),
        interval_case(
            "case2",
            "u = (x^2 - 1.111^2)^2, flat at the boundary",
            |x| (x * x - C * C).powi(2),
            |x| 4.0 * x * (x * x - C * C),
            |x| 12.0 * x * x - 4.0 * C * C,
        ),
        interval_case(
            "case3",
            "u = 1/(x^2 + 1)",
            |x| 1.0 / (x * x + 1.0),
            |x| -2.0 * x / (x * x + 1.0).powi(2),
            |x| (6.0 * x * x - 2.0) / (x * x + 1.0).powi(3),
        ),
        interval_case("case4", "u = cos x", f64::cos, |x| -x.sin(), |x| -x.cos()),
        interval_case(
            "case5",
            "u = (x^2 + 1)^2",
            |x| (x * x + 1.0).powi(2),
            |x| 4.0 * x * (x * x + 1.0),
            |x| 12.0 * x * x + 4.0,
        ),
        interval_case(
            "case6",
            "u = ln(x^2 + 1)",
            |x| (x * x + 1.0).ln(),
            |x| 2.0 * x / (x * x + 1.0),
            |x| 2.0 * (1.0 - x * x) / (x * x + 1.0).powi(2),
        ),
        interval_case(
            "case7",
            "u = sqrt(x^2 + 1)",
            |x| (x * x + 1.0).sqrt(),
            |x| x / (x * x + 1.0).sqrt(),
            |x| (x * x + 1.0).powf(-1.5),
        ),
        heat_1d("heat1d", "u = cos x sin t on a fixed interval", false),
        heat_1d(
            "heat1d_moving",
            "u = cos x sin t, right end at 1.111 + 0.5 t",
            true,
        ),
    ];
    let mut star = star_case("star2d", "u = |x|^2/4 inside a moving star", 2.0, true);
    star.time = Some(TimeRule {
        t_end: 0.1,
        dt: DtRule::Scaled {
            dt0: 0.1 / 128.0,
            eps0: 0.2,
        },
    });
    cases.push(star);
    cases.push(star_case(
        "star2d_poisson",
        "Poisson problem with u = |x|^2/4 inside the star",
        2.0,
        false,
    ));
    let mut long = star_case("star2d_long", "moving star on an enlarged box", 4.0, true);
    long.eps_schedule = vec![0.025];
    long.h_rule = Some(HRule::EpsOver(1.6));
    long.time = Some(TimeRule {
        t_end: 1.9,
        dt: DtRule::Scaled {
            dt0: 0.1 / 512.0,
            eps0: 0.025,
        },
    });
    cases.push(long);
    cases.push(torus_case());
    cases
}

pub fn find_case(id: &str) -> Result<CaseSpec> {
    builtin_cases()
        .into_iter()
        .find(|c| c.id == id)
        .ok_or_else(|| DdmError::Unknown {
            kind: "case",
            name: id.to_string(),
        })
}
