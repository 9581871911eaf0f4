//! Run configuration: a text file of flat dotted keys,
//!
//! ```text
//! # comment
//! pendulum.J.diag = 0.13, 0.28, 0.17
//! init.kappa = 8
//! output.snapshot_times = 0, 0.1, 0.2
//! ```
//!
//! Unset keys take the reference values. Lists are comma separated and
//! matrices are 9 values in row-major order.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use sha2::{Digest, Sha256};

use crate::density::{GaussianParams, VelocityBox, VonMisesSo3Params};
use crate::dynamics::{PendulumParams, RigidBodyState, StepConfig};
use crate::error::{Error, Result};
use crate::estimation::MeasurementModel;
use crate::harmonic::QuadratureRule;
use crate::marginals::{MarginalMethod, SphereGrid, DEFAULT_CIRCLE_NODES};
use crate::parallel::Workers;
use crate::so3::{Euler313, Mat3, Rotation, Vec3};

pub const TOOL_NAME: &str = "so3-density";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Where propagated snapshots pull their values from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    /// The closed-form initial density, pulled back from step 0.
    Initial,
    /// The previous grid, interpolated.
    Grid,
}

impl Source {
    pub fn name(self) -> &'static str {
        match self {
            Source::Initial => "initial",
            Source::Grid => "grid",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub pendulum: PendulumParams,
    pub step: StepConfig,
    pub attitude_nodes: usize,
    pub attitude_rule: QuadratureRule,
    pub velocity_nodes: usize,
    /// Half-width of the initial velocity box in standard deviations.
    pub velocity_sigmas: f64,
    pub velocity_box: VelocityBox,
    pub sphere: SphereGrid,
    pub circle_nodes: usize,
    pub marginal_method: MarginalMethod,
    pub bandlimit: usize,
    pub init_mean: Rotation,
    pub kappa: f64,
    pub omega_mean: Vec3,
    pub omega_cov: Mat3,
    pub source: Source,
    pub renormalize: bool,
    pub snapshot_times: Vec<f64>,
    pub write_density: bool,
    pub measurement_reference: Vec3,
    pub measurement_direction_cov: Mat3,
    pub measurement_omega_cov: Mat3,
    pub estimate_until: Option<f64>,
    pub trajectory_duration: f64,
    pub trajectory_start: RigidBodyState,
    pub out_dir: PathBuf,
    pub workers: Workers,
}

impl Default for RunConfig {
    fn default() -> Self {
        let p = PendulumParams::reference();
        RunConfig {
            pendulum: p,
            step: StepConfig::default(),
            attitude_nodes: 17,
            attitude_rule: QuadratureRule::Spectral,
            velocity_nodes: 13,
            velocity_sigmas: 6.0,
            velocity_box: VelocityBox::default(),
            sphere: SphereGrid::default(),
            circle_nodes: DEFAULT_CIRCLE_NODES,
            marginal_method: MarginalMethod::Series,
            bandlimit: 8,
            init_mean: Rotation::identity(),
            kappa: 8.0,
            omega_mean: Vec3::repeat(4.14),
            omega_cov: Mat3::identity() * 0.1414f64.powi(2),
            source: Source::Initial,
            renormalize: false,
            snapshot_times: vec![0.0, 0.1, 0.2, 0.4, 1.0],
            write_density: true,
            measurement_reference: Vec3::new(0.0, 0.6, 0.8),
            measurement_direction_cov: Mat3::identity() * 0.05f64.powi(2),
            measurement_omega_cov: Mat3::identity() * 0.05f64.powi(2),
            estimate_until: None,
            trajectory_duration: 10.0,
            trajectory_start: RigidBodyState::new(Rotation::identity(), Vec3::repeat(4.14)),
            out_dir: PathBuf::from("out"),
            workers: Workers::available(),
        }
    }
}

fn config_err(field: &str, message: impl Into<String>) -> Error {
    Error::Config {
        field: field.to_string(),
        message: message.into(),
    }
}

/// Splits `key = value` lines. Later lines override earlier ones.
pub fn parse_entries(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| config_err(&format!("line {}", n + 1), "expected `key = value`"))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(config_err(&format!("line {}", n + 1), "empty key"));
        }
        out.insert(k.to_string(), v.trim().to_string());
    }
    Ok(out)
}

struct Entries {
    map: BTreeMap<String, String>,
}

impl Entries {
    fn take(&mut self, key: &str) -> Option<String> {
        self.map.remove(key)
    }

    fn f64(&mut self, key: &str, default: f64) -> Result<f64> {
        match self.take(key) {
            None => Ok(default),
            Some(v) => parse_f64(key, &v),
        }
    }

    fn usize(&mut self, key: &str, default: usize) -> Result<usize> {
        match self.take(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| config_err(key, format!("expected a non-negative integer, got `{v}`"))),
        }
    }

    fn bool(&mut self, key: &str, default: bool) -> Result<bool> {
        match self.take(key).as_deref() {
            None => Ok(default),
            Some("true") => Ok(true),
            Some("false") => Ok(false),
            Some(v) => Err(config_err(key, format!("expected true or false, got `{v}`"))),
        }
    }

    fn list(&mut self, key: &str) -> Result<Option<Vec<f64>>> {
        self.take(key).map(|v| parse_list(key, &v)).transpose()
    }

    fn vec3(&mut self, key: &str, default: Vec3) -> Result<Vec3> {
        match self.list(key)? {
            None => Ok(default),
            Some(v) if v.len() == 3 => Ok(Vec3::new(v[0], v[1], v[2])),
            Some(v) => Err(config_err(key, format!("expected 3 values, got {}", v.len()))),
        }
    }

    fn mat3(&mut self, key: &str) -> Result<Option<Mat3>> {
        match self.list(key)? {
            None => Ok(None),
            Some(v) if v.len() == 9 => Ok(Some(Mat3::from_row_slice(&v))),
            Some(v) => Err(config_err(key, format!("expected 9 values, got {}", v.len()))),
        }
    }

    /// A covariance given in full or as an isotropic standard deviation
    /// (`σ² I`), not both.
    fn covariance(&mut self, full: &str, sigma: &str, default: Mat3) -> Result<Mat3> {
        let m = self.mat3(full)?;
        let s = self.take(sigma).map(|v| parse_f64(sigma, &v)).transpose()?;
        match (m, s) {
            (Some(_), Some(_)) => Err(config_err(full, format!("set either `{full}` or `{sigma}`, not both"))),
            (Some(m), None) => Ok(m),
            (None, Some(s)) if s > 0.0 => Ok(Mat3::identity() * (s * s)),
            (None, Some(s)) => Err(config_err(sigma, format!("must be positive, got {s}"))),
            (None, None) => Ok(default),
        }
    }

    fn rotation(&mut self, key: &str, default: Rotation) -> Result<Rotation> {
        let euler_key = format!("{key}.euler");
        let m = self.mat3(key)?;
        let e = self.list(&euler_key)?;
        match (m, e) {
            (Some(_), Some(_)) => Err(config_err(
                key,
                format!("set either `{key}` or `{euler_key}`, not both"),
            )),
            (Some(m), None) => Rotation::from_matrix(m).map_err(|e| config_err(key, e.to_string())),
            (None, Some(e)) if e.len() == 3 => Euler313::new(e[0], e[1], e[2])
                .map(|e| e.to_rotation())
                .map_err(|err| config_err(&euler_key, err.to_string())),
            (None, Some(e)) => Err(config_err(&euler_key, format!("expected 3 angles, got {}", e.len()))),
            (None, None) => Ok(default),
        }
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    let x: f64 = v
        .trim()
        .parse()
        .map_err(|_| config_err(key, format!("expected a number, got `{v}`")))?;
    if !x.is_finite() {
        return Err(config_err(key, "must be finite"));
    }
    Ok(x)
}

fn parse_list(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',').map(|x| parse_f64(key, x)).collect()
}

/// Parses a comma-separated list of snapshot times.
pub fn parse_times(v: &str) -> Result<Vec<f64>> {
    parse_list("output.snapshot_times", v)
}

impl RunConfig {
    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_entries(parse_entries(text)?)
    }

    pub fn from_entries(map: BTreeMap<String, String>) -> Result<Self> {
        let d = RunConfig::default();
        let mut e = Entries { map };

        let inertia = match (e.mat3("pendulum.J")?, e.list("pendulum.J.diag")?) {
            (Some(_), Some(_)) => {
                return Err(config_err(
                    "pendulum.J",
                    "set either `pendulum.J` or `pendulum.J.diag`, not both",
                ))
            }
            (Some(m), None) => m,
            (None, Some(v)) if v.len() == 3 => Mat3::from_diagonal(&Vec3::new(v[0], v[1], v[2])),
            (None, Some(v)) => {
                return Err(config_err(
                    "pendulum.J.diag",
                    format!("expected 3 values, got {}", v.len()),
                ))
            }
            (None, None) => *d.pendulum.inertia(),
        };
        let pendulum = PendulumParams::new(
            inertia,
            e.f64("pendulum.m", d.pendulum.mass())?,
            e.vec3("pendulum.rho", *d.pendulum.rho())?,
            e.f64("pendulum.g", d.pendulum.gravity())?,
        )?;
        let step = StepConfig {
            h: e.f64("step.h", d.step.h)?,
            newton_tol: e.f64("step.newton_tol", d.step.newton_tol)?,
            newton_max_iter: e.usize("step.newton_max_iter", d.step.newton_max_iter)?,
        };

        let attitude_nodes = e.usize("grid.attitude.n", d.attitude_nodes)?;
        let attitude_rule = match e.take("grid.attitude.rule") {
            None => d.attitude_rule,
            Some(v) => QuadratureRule::from_name(&v)
                .ok_or_else(|| config_err("grid.attitude.rule", format!("expected spectral or simpson, got `{v}`")))?,
        };
        let velocity_nodes = e.usize("grid.velocity.n", d.velocity_nodes)?;
        let velocity_sigmas = e.f64("grid.velocity.sigmas", d.velocity_sigmas)?;
        let VelocityBox::Track {
            tail,
            padding,
            max_samples,
        } = VelocityBox::default()
        else {
            unreachable!("the default box tracks")
        };
        let velocity_box = match e.take("grid.velocity.box").as_deref() {
            None | Some("track") => VelocityBox::Track {
                tail: e.f64("grid.velocity.track_tail", tail)?,
                padding: e.f64("grid.velocity.track_padding", padding)?,
                max_samples: e.usize("grid.velocity.track_samples", max_samples)?,
            },
            Some("fixed") => VelocityBox::Fixed,
            Some(v) => {
                return Err(config_err(
                    "grid.velocity.box",
                    format!("expected track or fixed, got `{v}`"),
                ))
            }
        };
        let sphere = SphereGrid::new(
            e.usize("grid.sphere.colatitude", d.sphere.n_colat())?,
            e.usize("grid.sphere.longitude", d.sphere.n_lon())?,
        )?;
        let circle_nodes = e.usize("marginal.circle_nodes", d.circle_nodes)?;
        let marginal_method = match e.take("marginal.method") {
            None => d.marginal_method,
            Some(v) => MarginalMethod::from_name(&v)
                .ok_or_else(|| config_err("marginal.method", format!("expected series or trilinear, got `{v}`")))?,
        };
        // the largest bandlimit the attitude grid resolves, up to the reference 10
        let bandlimit = e.usize("harmonic.L", d.bandlimit.min((attitude_nodes.max(1) - 1) / 2))?;

        let init_mean = e.rotation("init.R0", d.init_mean)?;
        let kappa = e.f64("init.kappa", d.kappa)?;
        let omega_mean = e.vec3("init.omega_mean", d.omega_mean)?;
        let omega_cov = e.covariance("init.cov", "init.sigma", d.omega_cov)?;

        let source = match e.take("propagate.source").as_deref() {
            None => d.source,
            Some("initial") => Source::Initial,
            Some("grid") => Source::Grid,
            Some(v) => {
                return Err(config_err(
                    "propagate.source",
                    format!("expected initial or grid, got `{v}`"),
                ))
            }
        };
        let renormalize = e.bool("propagate.renormalize", d.renormalize)?;
        let snapshot_times = e.list("output.snapshot_times")?.unwrap_or(d.snapshot_times);
        let write_density = e.bool("output.density", d.write_density)?;

        let measurement_reference = e.vec3("measurement.a", d.measurement_reference)?;
        let measurement_direction_cov = e.covariance(
            "measurement.direction_cov",
            "measurement.sigma_direction",
            d.measurement_direction_cov,
        )?;
        let measurement_omega_cov = e.covariance(
            "measurement.omega_cov",
            "measurement.sigma_omega",
            d.measurement_omega_cov,
        )?;
        let estimate_until = e
            .take("estimate.until")
            .map(|v| parse_f64("estimate.until", &v))
            .transpose()?;

        let trajectory_duration = e.f64("trajectory.duration", d.trajectory_duration)?;
        let trajectory_start = RigidBodyState::new(
            e.rotation("trajectory.R0", init_mean)?,
            e.vec3("trajectory.omega", omega_mean)?,
        );
        let out_dir = e.take("output.dir").map(PathBuf::from).unwrap_or(d.out_dir);
        let workers = match e.usize("run.workers", 0)? {
            0 => d.workers,
            n => Workers::new(n),
        };

        if let Some(k) = e.map.keys().next() {
            return Err(config_err(k, "unknown key"));
        }
        let cfg = RunConfig {
            pendulum,
            step,
            attitude_nodes,
            attitude_rule,
            velocity_nodes,
            velocity_sigmas,
            velocity_box,
            sphere,
            circle_nodes,
            marginal_method,
            bandlimit,
            init_mean,
            kappa,
            omega_mean,
            omega_cov,
            source,
            renormalize,
            snapshot_times,
            write_density,
            measurement_reference,
            measurement_direction_cov,
            measurement_omega_cov,
            estimate_until,
            trajectory_duration,
            trajectory_start,
            out_dir,
            workers,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks everything that can be checked without building grids.
    pub fn validate(&self) -> Result<()> {
        self.step.validate()?;
        if self.attitude_nodes < 3 || self.attitude_nodes.is_multiple_of(2) {
            return Err(config_err("grid.attitude.n", "must be odd and >= 3"));
        }
        if self.velocity_nodes < 3 || self.velocity_nodes.is_multiple_of(2) {
            return Err(config_err("grid.velocity.n", "must be odd and >= 3"));
        }
        if !(self.velocity_sigmas > 0.0) {
            return Err(config_err("grid.velocity.sigmas", "must be positive"));
        }
        if self.circle_nodes < 8 {
            return Err(config_err("marginal.circle_nodes", "must be at least 8"));
        }
        if 2 * self.bandlimit + 1 > self.attitude_nodes {
            return Err(config_err(
                "harmonic.L",
                format!("needs 2L+1 <= grid.attitude.n = {}", self.attitude_nodes),
            ));
        }
        VonMisesSo3Params::new(self.init_mean, self.kappa).map_err(|e| config_err("init.kappa", e.to_string()))?;
        GaussianParams::new(self.omega_mean, self.omega_cov).map_err(|e| config_err("init.cov", e.to_string()))?;
        if self.snapshot_times.is_empty() {
            return Err(config_err("output.snapshot_times", "at least one time is needed"));
        }
        if self.snapshot_times[0] < 0.0 || self.snapshot_times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(config_err(
                "output.snapshot_times",
                "times must be non-negative and increasing",
            ));
        }
        for &t in &self.snapshot_times {
            self.steps_for(t, "output.snapshot_times")?;
        }
        if let Some(t) = self.estimate_until {
            self.steps_for(t, "estimate.until")?;
        }
        self.measurement_model()
            .map_err(|e| config_err("measurement", e.to_string()))?;
        if !(self.trajectory_duration >= 0.0) {
            return Err(config_err("trajectory.duration", "must be non-negative"));
        }
        self.steps_for(self.trajectory_duration, "trajectory.duration")?;
        Ok(())
    }

    /// Number of steps of size `h` that reach time `t` exactly.
    pub fn steps_for(&self, t: f64, field: &str) -> Result<u64> {
        if t < 0.0 {
            return Err(config_err(field, format!("time {t} is negative")));
        }
        let k = (t / self.step.h).round();
        if (k * self.step.h - t).abs() > 1e-9 * t.abs().max(1.0) {
            return Err(config_err(
                field,
                format!("time {t} is not a multiple of step.h = {}", self.step.h),
            ));
        }
        Ok(k as u64)
    }

    pub fn vm(&self) -> Result<VonMisesSo3Params> {
        VonMisesSo3Params::new(self.init_mean, self.kappa)
    }

    pub fn gaussian(&self) -> Result<GaussianParams> {
        GaussianParams::new(self.omega_mean, self.omega_cov)
    }

    pub fn measurement_model(&self) -> Result<MeasurementModel> {
        MeasurementModel::new(
            self.measurement_reference,
            self.measurement_direction_cov,
            self.measurement_omega_cov,
        )
    }

    /// Every setting that affects results, one `key = value` per line in a
    /// fixed order. Worker count and output directory are left out.
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        let f = |x: f64| format!("{x:?}");
        let list = |v: &[f64]| v.iter().map(|x| f(*x)).collect::<Vec<_>>().join(", ");
        let mat = |m: &Mat3| list(m.transpose().as_slice());
        let mut line = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        line("pendulum.J", mat(self.pendulum.inertia()));
        line("pendulum.m", f(self.pendulum.mass()));
        line("pendulum.rho", list(self.pendulum.rho().as_slice()));
        line("pendulum.g", f(self.pendulum.gravity()));
        line("step.h", f(self.step.h));
        line("step.newton_tol", f(self.step.newton_tol));
        line("step.newton_max_iter", self.step.newton_max_iter.to_string());
        line("grid.attitude.n", self.attitude_nodes.to_string());
        line("grid.attitude.rule", self.attitude_rule.name().to_string());
        line("grid.velocity.n", self.velocity_nodes.to_string());
        line("grid.velocity.sigmas", f(self.velocity_sigmas));
        match self.velocity_box {
            VelocityBox::Fixed => line("grid.velocity.box", "fixed".into()),
            VelocityBox::Track {
                tail,
                padding,
                max_samples,
            } => {
                line("grid.velocity.box", "track".into());
                line("grid.velocity.track_tail", f(tail));
                line("grid.velocity.track_padding", f(padding));
                line("grid.velocity.track_samples", max_samples.to_string());
            }
        }
        line("grid.sphere.colatitude", self.sphere.n_colat().to_string());
        line("grid.sphere.longitude", self.sphere.n_lon().to_string());
        line("marginal.circle_nodes", self.circle_nodes.to_string());
        line("marginal.method", self.marginal_method.name().to_string());
        line("harmonic.L", self.bandlimit.to_string());
        line("init.R0", mat(self.init_mean.matrix()));
        line("init.kappa", f(self.kappa));
        line("init.omega_mean", list(self.omega_mean.as_slice()));
        line("init.cov", mat(&self.omega_cov));
        line("propagate.source", self.source.name().into());
        line("propagate.renormalize", self.renormalize.to_string());
        line("output.snapshot_times", list(&self.snapshot_times));
        line("output.density", self.write_density.to_string());
        line("measurement.a", list(self.measurement_reference.as_slice()));
        line("measurement.direction_cov", mat(&self.measurement_direction_cov));
        line("measurement.omega_cov", mat(&self.measurement_omega_cov));
        if let Some(t) = self.estimate_until {
            line("estimate.until", f(t));
        }
        line("trajectory.duration", f(self.trajectory_duration));
        line("trajectory.R0", mat(self.trajectory_start.attitude.matrix()));
        line("trajectory.omega", list(self.trajectory_start.omega.as_slice()));
        s
    }

    /// Hex SHA-256 of [`RunConfig::canonical`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
