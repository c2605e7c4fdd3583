//! Information propagation kernels.
//!
//! A kernel maps the space-time offset `(x, t)` between a piece of traffic
//! information and a traveler to the learning weight `p` in `[0, 1]`. Six
//! strategy families are provided, from "no propagation" through window and
//! exponential-decay variants in time and/or space. On top of pointwise
//! evaluation this module provides the total influence (double integral of
//! `p`), an L2 distance between kernels, the pointwise lead/lag ordering and
//! the admissibility checks against a reference kernel.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("invalid kernel parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid integration domain: {0}")]
    InvalidDomain(String),
    #[error("reference kernel must have finite total influence, got {0}")]
    InvalidReference(KernelFamily),
    #[error("unknown kernel family `{0}`")]
    UnknownFamily(String),
}

/// The six strategy families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KernelFamily {
    Zero,
    GlobalGap,
    NaturalGlobal,
    LocalGap,
    NaturalLocal,
    NaturalSpaceTime,
}

impl KernelFamily {
    pub const ALL: [KernelFamily; 6] = [
        KernelFamily::Zero,
        KernelFamily::GlobalGap,
        KernelFamily::NaturalGlobal,
        KernelFamily::LocalGap,
        KernelFamily::NaturalLocal,
        KernelFamily::NaturalSpaceTime,
    ];

    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::Zero => "zero",
            KernelFamily::GlobalGap => "global-gap",
            KernelFamily::NaturalGlobal => "natural-global",
            KernelFamily::LocalGap => "local-gap",
            KernelFamily::NaturalLocal => "natural-local",
            KernelFamily::NaturalSpaceTime => "natural-spacetime",
        }
    }

    /// Names of the parameter vector used by [`KernelFamily::build`], in order.
    /// They match the keys of the scenario file's `[kernel]` section.
    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            KernelFamily::Zero => &[],
            KernelFamily::GlobalGap => &["dt"],
            KernelFamily::NaturalGlobal => &["mt", "ct"],
            KernelFamily::LocalGap => &["x_radius", "dt"],
            KernelFamily::NaturalLocal => &["x_radius", "mt", "ct"],
            KernelFamily::NaturalSpaceTime => &["mx", "cx", "mt", "ct"],
        }
    }

    /// Parameter vector used when a key is not given.
    pub fn default_params(self) -> Vec<f64> {
        use std::f64::consts::E;
        match self {
            KernelFamily::Zero => vec![],
            KernelFamily::GlobalGap => vec![5.0],
            KernelFamily::NaturalGlobal => vec![E, 5.0],
            KernelFamily::LocalGap => vec![1.0, 5.0],
            KernelFamily::NaturalLocal => vec![1.0, E, 5.0],
            KernelFamily::NaturalSpaceTime => vec![E, 1.0, E, 5.0],
        }
    }

    /// Families whose spatial factor is constant, so their total influence
    /// over an unbounded space diverges.
    pub fn is_spatially_uniform(self) -> bool {
        matches!(self, KernelFamily::GlobalGap | KernelFamily::NaturalGlobal)
    }

    /// Builds a kernel from a parameter vector ordered as [`param_names`].
    ///
    /// [`param_names`]: KernelFamily::param_names
    pub fn build(self, params: &[f64], velocity: Option<f64>) -> Result<KernelSpec, KernelError> {
        let names = self.param_names();
        if params.len() != names.len() {
            return Err(KernelError::InvalidParameter(format!(
                "{} takes {} parameters ({}), got {}",
                self,
                names.len(),
                names.join(", "),
                params.len()
            )));
        }
        let p = params;
        let shape = match self {
            KernelFamily::Zero => KernelShape::Zero,
            KernelFamily::GlobalGap => KernelShape::GlobalGap { dt: p[0] },
            KernelFamily::NaturalGlobal => KernelShape::NaturalGlobal { mt: p[0], ct: p[1] },
            KernelFamily::LocalGap => KernelShape::LocalGap {
                x_radius: p[0],
                dt: p[1],
            },
            KernelFamily::NaturalLocal => KernelShape::NaturalLocal {
                x_radius: p[0],
                mt: p[1],
                ct: p[2],
            },
            KernelFamily::NaturalSpaceTime => KernelShape::NaturalSpaceTime {
                mx: p[0],
                cx: p[1],
                mt: p[2],
                ct: p[3],
            },
        };
        KernelSpec::new(shape, velocity)
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelFamily {
    type Err = KernelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        KernelFamily::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| KernelError::UnknownFamily(s.to_string()))
    }
}

/// Functional form and parameters of a kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelShape {
    /// No propagation: `p = 0` everywhere.
    Zero,
    /// `p = 1` for elapsed time in `[0, dt)`, everywhere in space.
    GlobalGap { dt: f64 },
    /// `p = mt^(-t/ct)`, everywhere in space.
    NaturalGlobal { mt: f64, ct: f64 },
    /// `p = 1` inside the ball `x <= x_radius` for elapsed time in `[0, dt)`.
    LocalGap { x_radius: f64, dt: f64 },
    /// `p = mt^(-t/ct)` inside the ball `x <= x_radius`.
    NaturalLocal { x_radius: f64, mt: f64, ct: f64 },
    /// `p = mx^(-x/cx) * mt^(-t/ct)`.
    NaturalSpaceTime { mx: f64, cx: f64, mt: f64, ct: f64 },
}

/// A kernel plus its optional propagation velocity (distance per step).
/// Without a velocity information arrives everywhere instantly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub shape: KernelShape,
    pub velocity: Option<f64>,
}

fn check_positive(name: &str, v: f64) -> Result<(), KernelError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(KernelError::InvalidParameter(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

fn check_base(name: &str, v: f64) -> Result<(), KernelError> {
    if v > 1.0 && v.is_finite() {
        Ok(())
    } else {
        Err(KernelError::InvalidParameter(format!(
            "{name} must be greater than 1, got {v}"
        )))
    }
}

impl KernelSpec {
    pub fn new(shape: KernelShape, velocity: Option<f64>) -> Result<Self, KernelError> {
        let spec = Self { shape, velocity };
        spec.validate()?;
        Ok(spec)
    }

    pub const ZERO: KernelSpec = KernelSpec {
        shape: KernelShape::Zero,
        velocity: None,
    };

    pub fn global_gap(dt: f64) -> Result<Self, KernelError> {
        Self::new(KernelShape::GlobalGap { dt }, None)
    }

    pub fn natural_global(mt: f64, ct: f64) -> Result<Self, KernelError> {
        Self::new(KernelShape::NaturalGlobal { mt, ct }, None)
    }

    pub fn local_gap(x_radius: f64, dt: f64) -> Result<Self, KernelError> {
        Self::new(KernelShape::LocalGap { x_radius, dt }, None)
    }

    pub fn natural_local(x_radius: f64, mt: f64, ct: f64) -> Result<Self, KernelError> {
        Self::new(KernelShape::NaturalLocal { x_radius, mt, ct }, None)
    }

    pub fn natural_spacetime(mx: f64, cx: f64, mt: f64, ct: f64) -> Result<Self, KernelError> {
        Self::new(KernelShape::NaturalSpaceTime { mx, cx, mt, ct }, None)
    }

    pub fn with_velocity(mut self, velocity: Option<f64>) -> Result<Self, KernelError> {
        self.velocity = velocity;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), KernelError> {
        match self.shape {
            KernelShape::Zero => {}
            KernelShape::GlobalGap { dt } => check_positive("dt", dt)?,
            KernelShape::NaturalGlobal { mt, ct } => {
                check_base("mt", mt)?;
                check_positive("ct", ct)?;
            }
            KernelShape::LocalGap { x_radius, dt } => {
                check_positive("x_radius", x_radius)?;
                check_positive("dt", dt)?;
            }
            KernelShape::NaturalLocal { x_radius, mt, ct } => {
                check_positive("x_radius", x_radius)?;
                check_base("mt", mt)?;
                check_positive("ct", ct)?;
            }
            KernelShape::NaturalSpaceTime { mx, cx, mt, ct } => {
                check_base("mx", mx)?;
                check_positive("cx", cx)?;
                check_base("mt", mt)?;
                check_positive("ct", ct)?;
            }
        }
        if let Some(v) = self.velocity {
            check_positive("v", v)?;
        }
        Ok(())
    }

    pub fn family(&self) -> KernelFamily {
        match self.shape {
            KernelShape::Zero => KernelFamily::Zero,
            KernelShape::GlobalGap { .. } => KernelFamily::GlobalGap,
            KernelShape::NaturalGlobal { .. } => KernelFamily::NaturalGlobal,
            KernelShape::LocalGap { .. } => KernelFamily::LocalGap,
            KernelShape::NaturalLocal { .. } => KernelFamily::NaturalLocal,
            KernelShape::NaturalSpaceTime { .. } => KernelFamily::NaturalSpaceTime,
        }
    }

    /// Parameter vector in [`KernelFamily::param_names`] order.
    pub fn params(&self) -> Vec<f64> {
        match self.shape {
            KernelShape::Zero => vec![],
            KernelShape::GlobalGap { dt } => vec![dt],
            KernelShape::NaturalGlobal { mt, ct } => vec![mt, ct],
            KernelShape::LocalGap { x_radius, dt } => vec![x_radius, dt],
            KernelShape::NaturalLocal { x_radius, mt, ct } => vec![x_radius, mt, ct],
            KernelShape::NaturalSpaceTime { mx, cx, mt, ct } => vec![mx, cx, mt, ct],
        }
    }

    /// Natural time scale of the kernel: `dt` for windows, `ct` for decays.
    pub fn time_scale(&self) -> Option<f64> {
        match self.shape {
            KernelShape::Zero => None,
            KernelShape::GlobalGap { dt } | KernelShape::LocalGap { dt, .. } => Some(dt),
            KernelShape::NaturalGlobal { ct, .. }
            | KernelShape::NaturalLocal { ct, .. }
            | KernelShape::NaturalSpaceTime { ct, .. } => Some(ct),
        }
    }

    /// Learning weight at distance `x` and elapsed time `t`.
    ///
    /// `x` may be `f64::INFINITY` for positions the information can never
    /// reach; only the spatially uniform families are non-zero there, and
    /// only when no finite velocity is set.
    pub fn eval(&self, x: f64, t: f64) -> f64 {
        if let Some(v) = self.velocity {
            if t < x / v {
                return 0.0;
            }
        }
        let p = match self.shape {
            KernelShape::Zero => 0.0,
            KernelShape::GlobalGap { dt } => window(t, dt),
            KernelShape::NaturalGlobal { mt, ct } => decay(mt, ct, t),
            KernelShape::LocalGap { x_radius, dt } => ball(x, x_radius) * window(t, dt),
            KernelShape::NaturalLocal { x_radius, mt, ct } => {
                ball(x, x_radius) * decay(mt, ct, t)
            }
            KernelShape::NaturalSpaceTime { mx, cx, mt, ct } => {
                decay(mx, cx, x) * decay(mt, ct, t)
            }
        };
        p.clamp(0.0, 1.0)
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let family = self.family();
        write!(f, "{family}")?;
        for (name, value) in family.param_names().iter().zip(self.params()) {
            write!(f, " {name}={value}")?;
        }
        if let Some(v) = self.velocity {
            write!(f, " v={v}")?;
        }
        Ok(())
    }
}

fn window(t: f64, dt: f64) -> f64 {
    if (0.0..dt).contains(&t) {
        1.0
    } else {
        0.0
    }
}

fn ball(x: f64, radius: f64) -> f64 {
    if x <= radius {
        1.0
    } else {
        0.0
    }
}

/// `base^(-v/scale)`; zero at `v = +inf`.
fn decay(base: f64, scale: f64, v: f64) -> f64 {
    if v.is_infinite() {
        return 0.0;
    }
    (-v / scale * base.ln()).exp()
}

/// Rectangular integration region `[0, x_max] x [0, t_max]` with its grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain2D {
    pub x_max: f64,
    pub t_max: f64,
    pub dx: f64,
    pub dt_grid: f64,
}

impl Domain2D {
    pub fn new(x_max: f64, t_max: f64, dx: f64, dt_grid: f64) -> Result<Self, KernelError> {
        let dom = Self {
            x_max,
            t_max,
            dx,
            dt_grid,
        };
        dom.validate()?;
        Ok(dom)
    }

    pub fn validate(&self) -> Result<(), KernelError> {
        let all_positive = [self.x_max, self.t_max, self.dx, self.dt_grid]
            .iter()
            .all(|v| *v > 0.0 && v.is_finite());
        if !all_positive {
            return Err(KernelError::InvalidDomain(
                "all extents and spacings must be positive".into(),
            ));
        }
        if self.x_max < self.dx || self.t_max < self.dt_grid {
            return Err(KernelError::InvalidDomain(
                "grid spacing exceeds domain extent".into(),
            ));
        }
        Ok(())
    }

    /// Number of cells and effective cell width along x and t. The requested
    /// spacing is adjusted so that a whole number of cells tiles the domain.
    fn cells(&self) -> ((usize, f64), (usize, f64)) {
        let nx = (self.x_max / self.dx).round().max(1.0) as usize;
        let nt = (self.t_max / self.dt_grid).round().max(1.0) as usize;
        ((nx, self.x_max / nx as f64), (nt, self.t_max / nt as f64))
    }

    /// Visits every cell midpoint with its `(x, t)` coordinates.
    fn for_each_midpoint(&self, mut f: impl FnMut(f64, f64)) -> f64 {
        let ((nx, hx), (nt, ht)) = self.cells();
        for i in 0..nx {
            let x = (i as f64 + 0.5) * hx;
            for j in 0..nt {
                f(x, (j as f64 + 0.5) * ht);
            }
        }
        hx * ht
    }
}

/// Midpoint-rule double integral of the kernel over the domain.
pub fn total_influence(k: &KernelSpec, dom: &Domain2D) -> f64 {
    let mut sum = 0.0;
    let cell = dom.for_each_midpoint(|x, t| sum += k.eval(x, t));
    sum * cell
}

/// Discretized L2 distance between two kernels over the domain.
pub fn phase_distance(k1: &KernelSpec, k2: &KernelSpec, dom: &Domain2D) -> f64 {
    let mut sum = 0.0;
    let cell = dom.for_each_midpoint(|x, t| {
        let d = k1.eval(x, t) - k2.eval(x, t);
        sum += d * d;
    });
    (sum * cell).sqrt()
}

/// Pointwise ordering of two kernels' weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Lead,
    Lag,
    Equal,
}

pub fn phase_lead(k1: &KernelSpec, k2: &KernelSpec, x: f64, t: f64) -> Phase {
    let (p1, p2) = (k1.eval(x, t), k2.eval(x, t));
    if p1 > p2 {
        Phase::Lead
    } else if p1 < p2 {
        Phase::Lag
    } else {
        Phase::Equal
    }
}

/// Outcome of the finiteness check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Principle1 {
    Pass,
    DivergesInSpace,
    DivergesInTime,
    BelowReference,
}

impl Principle1 {
    pub fn is_finite(self) -> bool {
        !matches!(self, Principle1::DivergesInSpace | Principle1::DivergesInTime)
    }

    pub fn name(self) -> &'static str {
        match self {
            Principle1::Pass => "pass",
            Principle1::DivergesInSpace => "diverges-in-space",
            Principle1::DivergesInTime => "diverges-in-time",
            Principle1::BelowReference => "below-reference",
        }
    }
}

impl fmt::Display for Principle1 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrincipleReport {
    pub principle1: Principle1,
    /// Total influence on the domain, `f64::INFINITY` when divergent.
    pub principle1_integral: f64,
    /// L2 distance to the reference kernel.
    pub principle2_distance: f64,
}

/// Classifies a kernel's total influence. Divergence is decided from the
/// functional form: a constant spatial factor integrates to infinity over an
/// unbounded network, which no bounded quadrature can detect.
pub fn finiteness(k: &KernelSpec) -> Principle1 {
    if k.family().is_spatially_uniform() {
        Principle1::DivergesInSpace
    } else {
        Principle1::Pass
    }
}

/// Checks `k` against a reference kernel describing the natural influence
/// of information.
///
/// The amplification check requires the kernel's integral to be finite and
/// strictly greater than the reference integral on `dom`. The phase check is
/// reported as a distance; thresholds belong to the caller.
pub fn check_principles(
    k: &KernelSpec,
    reference_f: &KernelSpec,
    dom: &Domain2D,
) -> Result<PrincipleReport, KernelError> {
    dom.validate()?;
    if !finiteness(reference_f).is_finite() {
        return Err(KernelError::InvalidReference(reference_f.family()));
    }
    let reference_integral = total_influence(reference_f, dom);
    let (principle1, principle1_integral) = match finiteness(k) {
        Principle1::Pass => {
            let integral = total_influence(k, dom);
            let class = if integral > reference_integral {
                Principle1::Pass
            } else {
                Principle1::BelowReference
            };
            (class, integral)
        }
        divergent => (divergent, f64::INFINITY),
    };
    Ok(PrincipleReport {
        principle1,
        principle1_integral,
        principle2_distance: phase_distance(k, reference_f, dom),
    })
}

/// Samples the kernel on the inclusive grid `0..=x_max` by `dx`, `0..=t_max`
/// by `dt`, as `(x, t, p)` triples in row-major order over x.
pub fn sample_grid(k: &KernelSpec, x_max: f64, t_max: f64, dx: f64, dt: f64) -> Vec<(f64, f64, f64)> {
    let nx = (x_max / dx).round() as usize;
    let nt = (t_max / dt).round() as usize;
    let mut out = Vec::with_capacity((nx + 1) * (nt + 1));
    for i in 0..=nx {
        let x = i as f64 * dx;
        for j in 0..=nt {
            let t = j as f64 * dt;
            out.push((x, t, k.eval(x, t)));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::E;

    fn fine(x_max: f64, t_max: f64) -> Domain2D {
        Domain2D::new(x_max, t_max, 0.05, 0.05).unwrap()
    }

    #[test]
    fn closed_forms() {
        let z = KernelSpec::ZERO;
        assert_eq!(z.eval(0.0, 0.0), 0.0);
        assert_eq!(z.eval(3.0, 100.0), 0.0);

        let g = KernelSpec::global_gap(10.0).unwrap();
        assert_eq!(g.eval(500.0, 3.0), 1.0);
        assert_eq!(g.eval(500.0, 10.0), 0.0);
        assert_eq!(g.eval(f64::INFINITY, 0.0), 1.0);

        let ng = KernelSpec::natural_global(E, 20.0).unwrap();
        assert!((ng.eval(123.0, 20.0) - (-1.0f64).exp()).abs() < 1e-12);

        let st = KernelSpec::natural_spacetime(E, 2.0, E, 3.0).unwrap();
        assert!((st.eval(2.0, 3.0) - (-2.0f64).exp()).abs() < 1e-12);
        assert_eq!(st.eval(0.0, 0.0), 1.0);
        assert_eq!(st.eval(f64::INFINITY, 0.0), 0.0);

        let lg = KernelSpec::local_gap(2.0, 3.0).unwrap();
        assert_eq!(lg.eval(2.0, 0.0), 1.0);
        assert_eq!(lg.eval(2.0 + 1e-9, 0.0), 0.0);
        assert_eq!(lg.eval(0.0, 3.0), 0.0);
        assert_eq!(lg.eval(f64::INFINITY, 0.0), 0.0);

        let nl = KernelSpec::natural_local(2.0, E, 4.0).unwrap();
        assert!((nl.eval(1.0, 4.0) - (-1.0f64).exp()).abs() < 1e-12);
        assert_eq!(nl.eval(2.5, 0.0), 0.0);
    }

    #[test]
    fn velocity_gates_arrival() {
        let ng = KernelSpec::natural_global(E, 20.0)
            .unwrap()
            .with_velocity(Some(1.0))
            .unwrap();
        assert_eq!(ng.eval(50.0, 10.0), 0.0);
        assert!(ng.eval(50.0, 50.0) > 0.0);
        assert_eq!(ng.eval(f64::INFINITY, 1e9), 0.0);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(KernelSpec::global_gap(0.0).is_err());
        assert!(KernelSpec::natural_global(1.0, 3.0).is_err());
        assert!(KernelSpec::natural_spacetime(E, -1.0, E, 3.0).is_err());
        assert!(KernelSpec::ZERO.with_velocity(Some(0.0)).is_err());
        assert!(KernelFamily::LocalGap.build(&[1.0], None).is_err());
        assert!(Domain2D::new(1.0, 1.0, 2.0, 0.5).is_err());
        assert!("nope".parse::<KernelFamily>().is_err());
    }

    #[test]
    fn family_round_trip() {
        for family in KernelFamily::ALL {
            assert_eq!(family.name().parse::<KernelFamily>().unwrap(), family);
            let k = family.build(&family.default_params(), None).unwrap();
            assert_eq!(k.family(), family);
            assert_eq!(k.params(), family.default_params());
        }
    }

    #[test]
    fn integrals() {
        assert_eq!(total_influence(&KernelSpec::ZERO, &fine(5.0, 5.0)), 0.0);
        let box_area = total_influence(&KernelSpec::local_gap(2.0, 3.0).unwrap(), &fine(10.0, 10.0));
        assert!((box_area - 6.0).abs() / 6.0 < 0.005, "{box_area}");
        let st = KernelSpec::natural_spacetime(E, 2.0, E, 3.0).unwrap();
        let dom = fine(40.0, 60.0);
        let i = total_influence(&st, &dom);
        assert!((i - 6.0).abs() / 6.0 < 0.01, "{i}");
    }

    #[test]
    fn distance_examples() {
        let dom = Domain2D::new(2.0, 10.0, 0.01, 0.01).unwrap();
        let g = KernelSpec::global_gap(3.0).unwrap();
        let d = phase_distance(&KernelSpec::ZERO, &g, &dom);
        assert!((d - 6f64.sqrt()).abs() / 6f64.sqrt() < 0.01, "{d}");
        assert_eq!(phase_distance(&g, &g, &dom), 0.0);
        assert_eq!(
            phase_distance(&KernelSpec::ZERO, &g, &dom),
            phase_distance(&g, &KernelSpec::ZERO, &dom)
        );
    }

    #[test]
    fn lead_lag() {
        let g = KernelSpec::global_gap(5.0).unwrap();
        let l = KernelSpec::local_gap(1.0, 5.0).unwrap();
        assert_eq!(phase_lead(&g, &l, 10.0, 2.0), Phase::Lead);
        assert_eq!(phase_lead(&l, &g, 10.0, 2.0), Phase::Lag);
        assert_eq!(phase_lead(&g, &g, 10.0, 2.0), Phase::Equal);
        let ng = KernelSpec::natural_global(E, 3.0).unwrap();
        assert_eq!(phase_lead(&KernelSpec::ZERO, &ng, 0.0, 0.0), Phase::Lag);
    }

    #[test]
    fn principles() {
        let dom = Domain2D::new(40.0, 60.0, 0.1, 0.1).unwrap();
        let reference = KernelSpec::natural_spacetime(E, 2.0, E, 3.0).unwrap();

        let r = check_principles(&KernelSpec::global_gap(3.0).unwrap(), &reference, &dom).unwrap();
        assert_eq!(r.principle1, Principle1::DivergesInSpace);
        assert!(r.principle1_integral.is_infinite());

        let r = check_principles(&KernelSpec::ZERO, &reference, &dom).unwrap();
        assert_eq!(r.principle1, Principle1::BelowReference);
        assert_eq!(r.principle1_integral, 0.0);

        // Equal integrals fail the strict inequality.
        let r = check_principles(&reference, &reference, &dom).unwrap();
        assert_eq!(r.principle1, Principle1::BelowReference);
        assert_eq!(r.principle2_distance, 0.0);

        let wider = KernelSpec::natural_spacetime(E, 4.0, E, 3.0).unwrap();
        let r = check_principles(&wider, &reference, &dom).unwrap();
        assert_eq!(r.principle1, Principle1::Pass);
        assert!(r.principle2_distance > 0.0);

        let err = check_principles(&wider, &KernelSpec::global_gap(1.0).unwrap(), &dom);
        assert_eq!(err, Err(KernelError::InvalidReference(KernelFamily::GlobalGap)));
    }

    fn any_kernel() -> impl Strategy<Value = KernelSpec> {
        let family = prop::sample::select(KernelFamily::ALL.to_vec());
        (family, prop::collection::vec(0.05f64..20.0, 4)).prop_map(|(family, raw)| {
            let params: Vec<f64> = family
                .param_names()
                .iter()
                .zip(raw)
                .map(|(name, v)| if name.starts_with('m') { 1.0 + v } else { v })
                .collect();
            family.build(&params, None).unwrap()
        })
    }

    proptest! {
        #[test]
        fn eval_in_unit_interval_and_monotone(
            k in any_kernel(),
            x in 0.0f64..100.0,
            t in 0.0f64..100.0,
            dx in 0.0f64..10.0,
            dt in 0.0f64..10.0,
        ) {
            let p = k.eval(x, t);
            prop_assert!((0.0..=1.0).contains(&p));
            prop_assert!(k.eval(x, t + dt) <= p);
            prop_assert!(k.eval(x + dx, t) <= p);
        }

        #[test]
        fn phase_distance_is_pseudometric(a in any_kernel(), b in any_kernel(), c in any_kernel()) {
            let dom = Domain2D::new(10.0, 10.0, 0.25, 0.25).unwrap();
            let ab = phase_distance(&a, &b, &dom);
            let bc = phase_distance(&b, &c, &dom);
            let ac = phase_distance(&a, &c, &dom);
            prop_assert!(ab >= 0.0);
            prop_assert_eq!(ab, phase_distance(&b, &a, &dom));
            prop_assert_eq!(phase_distance(&a, &a, &dom), 0.0);
            prop_assert!(ac <= ab + bc + 1e-9);
        }
    }
}
