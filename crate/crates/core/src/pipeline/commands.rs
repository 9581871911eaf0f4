use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use super::config::{RunConfig, Source, TOOL_NAME, TOOL_VERSION};
use crate::density::{
    attitude_spectrum, init_density, propagate, propagate_from, read_density_tagged, write_density_spectrum,
    write_density_tagged, DensityGrid, InitialDensity, PropagateOptions, PropagationReport,
};
use crate::dynamics::{Lgvi, RigidBodyState};
use crate::error::{Error, Result};
use crate::estimation::{estimate_cycle, estimate_cycle_exact, mean_log_evidence, EstimateStep, Measurement};
use crate::harmonic::{write_spectrum_text, So3Quadrature};
use crate::marginals::{attitude_marginal, export_sphere, sphere_file_name, sphere_marginals_by};
use crate::so3::Axis;

/// Receives one line per finished unit of work.
pub type Progress<'a> = &'a mut dyn FnMut(&str);

/// Lines written at the top of every output file.
pub fn header_lines(cfg: &RunConfig) -> Vec<String> {
    vec![
        format!("{TOOL_NAME} {TOOL_VERSION}"),
        format!("config sha256:{}", cfg.hash()),
    ]
}

fn meta(cfg: &RunConfig) -> String {
    header_lines(cfg).join("\n")
}

fn prepare_out(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out_dir)?;
    let mut text = String::new();
    for l in header_lines(cfg) {
        text.push_str(&format!("# {l}\n"));
    }
    text.push_str(&cfg.canonical());
    fs::write(cfg.out_dir.join("config.resolved.txt"), text)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

pub fn density_file_name(prefix: &str, step: u64) -> String {
    format!("{prefix}_t{step}.bin")
}

pub fn read_density_file(path: &Path) -> Result<DensityGrid> {
    Ok(read_density_tagged(&mut BufReader::new(File::open(path)?))?.0)
}

fn lgvi(cfg: &RunConfig) -> Result<Lgvi> {
    Lgvi::new(cfg.pendulum.clone(), cfg.step)
}

fn options(cfg: &RunConfig) -> PropagateOptions {
    PropagateOptions {
        workers: cfg.workers,
        velocity_box: cfg.velocity_box,
        renormalize: cfg.renormalize,
    }
}

/// The initial density on the configured grid, with its closed form scaled
/// by the grid normalization.
pub fn initial_density(cfg: &RunConfig) -> Result<(DensityGrid, InitialDensity)> {
    let vm = cfg.vm()?;
    let gp = cfg.gaussian()?;
    let n = cfg.attitude_nodes;
    let quad = So3Quadrature::new(n, n, n, cfg.attitude_rule)?;
    let vel = gp.box_grid(cfg.velocity_sigmas, cfg.velocity_nodes)?;
    let (d, c) = init_density(&vm, &gp, quad, vel, cfg.workers)?;
    Ok((
        d,
        InitialDensity {
            attitude: vm,
            velocity: gp,
            c,
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarginalSummary {
    /// Body axis, 1 to 3.
    pub axis: usize,
    pub integral: f64,
    pub circular_variance: f64,
    pub argmax: [f64; 3],
}

/// Writes the three sphere marginals of `d` as `axis{i}_t{k}.csv`.
fn export_marginals(cfg: &RunConfig, d: &DensityGrid, step: u64) -> Result<Vec<MarginalSummary>> {
    let a = attitude_marginal(d, cfg.workers);
    let header = header_lines(cfg);
    let mut out = Vec::new();
    for s in sphere_marginals_by(
        &a,
        cfg.marginal_method,
        cfg.bandlimit,
        cfg.sphere,
        cfg.circle_nodes,
        cfg.workers,
    )? {
        export_sphere(&s, &cfg.out_dir.join(sphere_file_name(s.axis(), step)), &header)?;
        let m = s.argmax();
        out.push(MarginalSummary {
            axis: s.axis().index(),
            integral: s.integral(),
            circular_variance: s.circular_variance(),
            argmax: [m[0], m[1], m[2]],
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SnapshotSummary {
    pub time: f64,
    pub step: u64,
    pub mass: f64,
    pub escaped_mass: f64,
    pub out_of_support_nodes: usize,
    pub velocity_lo: [f64; 3],
    pub velocity_hi: [f64; 3],
    pub marginals: Vec<MarginalSummary>,
}

impl SnapshotSummary {
    /// Circular variance of the sphere marginal of `axis`.
    pub fn circular_variance(&self, axis: Axis) -> f64 {
        self.marginals[axis.index() - 1].circular_variance
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropagateSummary {
    pub tool: String,
    pub config_sha256: String,
    pub source: String,
    pub snapshots: Vec<SnapshotSummary>,
}

fn snapshot(cfg: &RunConfig, d: &DensityGrid, time: f64, report: &PropagationReport) -> Result<SnapshotSummary> {
    if cfg.write_density {
        let mut w = create(&cfg.out_dir.join(density_file_name("density", d.step())))?;
        write_density_tagged(&mut w, d, &meta(cfg))?;
        w.flush()?;
    }
    let marginals = export_marginals(cfg, d, d.step())?;
    let (lo, hi) = (d.velocity().lo(), d.velocity().hi());
    Ok(SnapshotSummary {
        time,
        step: d.step(),
        mass: report.mass,
        escaped_mass: report.escaped_mass,
        out_of_support_nodes: report.out_of_support_nodes,
        velocity_lo: [lo[0], lo[1], lo[2]],
        velocity_hi: [hi[0], hi[1], hi[2]],
        marginals,
    })
}

/// Initializes the density, propagates it to every snapshot time and writes
/// `density_t{k}.bin`, `axis{i}_t{k}.csv` and `summary.json` to the output
/// directory. Snapshot `k` is named by its step count.
pub fn cmd_propagate(cfg: &RunConfig, progress: Progress) -> Result<PropagateSummary> {
    cfg.validate()?;
    prepare_out(cfg)?;
    let lgvi = lgvi(cfg)?;
    let opts = options(cfg);
    let (d0, initial) = initial_density(cfg)?;
    let mut snapshots = Vec::new();
    let mut previous: Option<DensityGrid> = None;
    for &t in &cfg.snapshot_times {
        let k = cfg.steps_for(t, "output.snapshot_times")?;
        let (d, report) = match (cfg.source, &previous) {
            _ if k == 0 => propagate(&d0, &lgvi, 0, &opts)?,
            (Source::Initial, _) | (Source::Grid, None) => propagate_from(&d0, &initial, &lgvi, k as usize, &opts)?,
            (Source::Grid, Some(p)) => propagate(p, &lgvi, (k - p.step()) as usize, &opts)?,
        };
        let s = snapshot(cfg, &d, t, &report)?;
        progress(&format!(
            "t = {t}: mass {:.6}, axis-3 circular variance {:.6}",
            s.mass,
            s.circular_variance(Axis::Z)
        ));
        snapshots.push(s);
        if cfg.source == Source::Grid {
            previous = Some(d);
        }
    }
    let summary = PropagateSummary {
        tool: format!("{TOOL_NAME} {TOOL_VERSION}"),
        config_sha256: cfg.hash(),
        source: cfg.source.name().to_string(),
        snapshots,
    };
    write_json(&cfg.out_dir.join("summary.json"), &summary)?;
    Ok(summary)
}

/// Parses `k,z1,...,z6` rows; `#` lines and a header row starting with `k`
/// are skipped.
pub fn read_measurements<R: BufRead>(r: R) -> Result<Vec<Measurement>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with('k') {
            continue;
        }
        out.push(parse_measurement(line).map_err(|e| Error::Format(format!("line {}: {e}", i + 1)))?);
    }
    Ok(out)
}

/// One `k,z1,...,z6` record.
pub fn parse_measurement(text: &str) -> Result<Measurement> {
    let fields: Vec<&str> = text.split(',').map(str::trim).collect();
    if fields.len() != 7 {
        return Err(Error::Format(format!("expected 7 fields, got {}", fields.len())));
    }
    let k: u64 = fields[0]
        .parse()
        .map_err(|_| Error::Format(format!("bad step `{}`", fields[0])))?;
    let mut z = [0.0; 6];
    for (slot, f) in z.iter_mut().zip(&fields[1..]) {
        *slot = f.parse().map_err(|_| Error::Format(format!("bad value `{f}`")))?;
    }
    Measurement::new(k, z)
}

pub fn write_measurements<W: Write>(w: &mut W, ms: &[Measurement], header: &[String]) -> Result<()> {
    for l in header {
        writeln!(w, "# {l}")?;
    }
    writeln!(w, "k,z1,z2,z3,z4,z5,z6")?;
    for m in ms {
        write!(w, "{}", m.step)?;
        for z in m.z.iter() {
            write!(w, ",{z}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Noisy measurements of the trajectory from `cfg.trajectory_start`, one
/// every `every` steps for `count` epochs, drawn from the configured model.
/// Returns the measurements and the true states at their steps.
pub fn simulate_measurements(
    cfg: &RunConfig,
    every: u64,
    count: usize,
    seed: u64,
) -> Result<(Vec<Measurement>, Vec<RigidBodyState>)> {
    if every == 0 {
        return Err(Error::param("simulate.every", "must be at least 1"));
    }
    let model = cfg.measurement_model()?;
    let lgvi = lgvi(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dir = model
        .cov_direction()
        .cholesky()
        .ok_or_else(|| Error::param("measurement", "covariance is not positive definite"))?;
    let omg = model
        .cov_omega()
        .cholesky()
        .ok_or_else(|| Error::param("measurement", "covariance is not positive definite"))?;
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut state = cfg.trajectory_start;
    let mut ms = Vec::with_capacity(count);
    let mut truth = Vec::with_capacity(count);
    for j in 1..=count as u64 {
        state = lgvi.flow(&state, every as usize)?;
        let clean = model.observe(&state.attitude, &state.omega);
        let mut e = [0.0; 6];
        for x in e.iter_mut() {
            *x = normal.sample(&mut rng);
        }
        let nd = dir.l() * crate::so3::Vec3::new(e[0], e[1], e[2]);
        let nw = omg.l() * crate::so3::Vec3::new(e[3], e[4], e[5]);
        let z: [f64; 6] = std::array::from_fn(|i| clean[i] + if i < 3 { nd[i] } else { nw[i - 3] });
        ms.push(Measurement::new(j * every, z)?);
        truth.push(state);
    }
    Ok((ms, truth))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateEntry {
    pub step: u64,
    pub time: f64,
    pub evidence: Option<f64>,
    pub mass: f64,
    pub escaped_mass: f64,
    /// Attitude (row-major) and angular velocity of the posterior mode: the
    /// refined continuous mode for exact runs, the largest node otherwise.
    pub mode_attitude: [f64; 9],
    pub mode_omega: [f64; 3],
    pub marginals: Vec<MarginalSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateSummary {
    pub tool: String,
    pub config_sha256: String,
    pub exact: bool,
    pub mean_log_evidence: Option<f64>,
    pub steps: Vec<EstimateEntry>,
}

/// Runs the estimation cycle over `measurements` and writes
/// `posterior_t{k}.bin`, `axis{i}_t{k}.csv` and `estimate.json` for every
/// entry. With `exact` each grid is filled from the closed-form posterior
/// rather than by interpolating the previous grid.
pub fn cmd_estimate(
    cfg: &RunConfig,
    measurements: &[Measurement],
    exact: bool,
    progress: Progress,
) -> Result<EstimateSummary> {
    cfg.validate()?;
    if measurements.windows(2).any(|w| w[1].step < w[0].step) {
        return Err(Error::param("measurements", "measurements must be in step order"));
    }
    prepare_out(cfg)?;
    let lgvi = lgvi(cfg)?;
    let model = cfg.measurement_model()?;
    let opts = options(cfg);
    let until = cfg
        .estimate_until
        .map(|t| cfg.steps_for(t, "estimate.until"))
        .transpose()?;
    let (d0, initial) = initial_density(cfg)?;

    let mut record = |s: &EstimateStep, mode: RigidBodyState| -> Result<EstimateEntry> {
        if cfg.write_density {
            let mut w = create(&cfg.out_dir.join(density_file_name("posterior", s.step)))?;
            write_density_tagged(&mut w, &s.density, &meta(cfg))?;
            w.flush()?;
        }
        let marginals = export_marginals(cfg, &s.density, s.step)?;
        progress(&format!(
            "step {}: evidence {}, mass {:.6}",
            s.step,
            s.evidence.map_or("none".to_string(), |c| format!("{c:.6e}")),
            s.propagation.mass
        ));
        Ok(EstimateEntry {
            step: s.step,
            time: s.step as f64 * cfg.step.h,
            evidence: s.evidence,
            mass: s.propagation.mass,
            escaped_mass: s.propagation.escaped_mass,
            mode_attitude: mode.attitude.to_row_array(),
            mode_omega: [mode.omega[0], mode.omega[1], mode.omega[2]],
            marginals,
        })
    };
    let node_mode = |d: &DensityGrid| {
        let i = d.argmax();
        let nv = d.velocity().len();
        RigidBodyState::new(d.quadrature().rotation(i / nv), d.velocity().node(i % nv))
    };

    let (steps, entries) = if exact {
        let (steps, _) = estimate_cycle_exact(&initial, &d0, &lgvi, &model, measurements, until, &opts)?;
        // the posterior is rebuilt per entry so each mode is taken at its own step
        let mut entries = Vec::new();
        let mut post = crate::estimation::ExactPosterior::new(initial, &lgvi, &model);
        for s in &steps {
            match s.evidence {
                Some(c) => {
                    let m = measurements
                        .iter()
                        .find(|m| m.step == s.step)
                        .expect("entry has a measurement");
                    post.condition(*m, c);
                }
                None => post.advance_to(s.step),
            }
            entries.push(record(s, post.mode_from_grid(&s.density)?)?);
        }
        (steps, entries)
    } else {
        let steps = estimate_cycle(&d0, &lgvi, &model, measurements, until, &opts)?;
        let entries = steps
            .iter()
            .map(|s| record(s, node_mode(&s.density)))
            .collect::<Result<_>>()?;
        (steps, entries)
    };
    let summary = EstimateSummary {
        tool: format!("{TOOL_NAME} {TOOL_VERSION}"),
        config_sha256: cfg.hash(),
        exact,
        mean_log_evidence: mean_log_evidence(&steps),
        steps: entries,
    };
    write_json(&cfg.out_dir.join("estimate.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectorySummary {
    pub tool: String,
    pub config_sha256: String,
    pub steps: u64,
    pub initial_energy: f64,
    pub max_relative_energy_error: f64,
    pub final_relative_energy_error: f64,
    pub max_orthogonality_defect: f64,
}

/// Integrates `cfg.trajectory_start` for `cfg.trajectory_duration` and writes
/// `trajectory.csv` (`t`, `R` row-major, `Ω`, energy, relative energy error,
/// orthogonality defect) and `trajectory.json`.
pub fn cmd_trajectory(cfg: &RunConfig) -> Result<TrajectorySummary> {
    cfg.validate()?;
    prepare_out(cfg)?;
    let lgvi = lgvi(cfg)?;
    let n = cfg.steps_for(cfg.trajectory_duration, "trajectory.duration")?;
    let states = lgvi.trajectory(&cfg.trajectory_start, n as usize)?;
    let e0 = lgvi.energy(&states[0]);
    let scale = if e0 == 0.0 { 1.0 } else { e0.abs() };
    let mut w = create(&cfg.out_dir.join("trajectory.csv"))?;
    for l in header_lines(cfg) {
        writeln!(w, "# {l}")?;
    }
    writeln!(
        w,
        "t,R11,R12,R13,R21,R22,R23,R31,R32,R33,omega1,omega2,omega3,energy,energy_error,defect"
    )?;
    let (mut max_err, mut max_defect) = (0.0f64, 0.0f64);
    let mut last_err = 0.0;
    for (k, s) in states.iter().enumerate() {
        let e = lgvi.energy(s);
        let err = (e - e0) / scale;
        let defect = s.attitude.defect();
        max_err = max_err.max(err.abs());
        max_defect = max_defect.max(defect);
        last_err = err;
        write!(w, "{}", k as f64 * cfg.step.h)?;
        for x in s.attitude.to_row_array() {
            write!(w, ",{x}")?;
        }
        writeln!(w, ",{},{},{},{e},{err},{defect}", s.omega[0], s.omega[1], s.omega[2])?;
    }
    w.flush()?;
    let summary = TrajectorySummary {
        tool: format!("{TOOL_NAME} {TOOL_VERSION}"),
        config_sha256: cfg.hash(),
        steps: n,
        initial_energy: e0,
        max_relative_energy_error: max_err,
        final_relative_energy_error: last_err,
        max_orthogonality_defect: max_defect,
    };
    write_json(&cfg.out_dir.join("trajectory.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransformSummary {
    pub step: u64,
    pub bandlimit: usize,
    /// Energy per degree of the attitude-marginal spectrum.
    pub degree_energy: Vec<f64>,
    pub spectrum_file: PathBuf,
}

/// Forward transform of a density file at every velocity node. Writes
/// `spectrum_t{k}.bin` and the attitude-marginal coefficients as
/// `spectrum_t{k}.txt`.
pub fn cmd_transform(cfg: &RunConfig, density: &Path) -> Result<TransformSummary> {
    let d = read_density_file(density)?;
    prepare_out(cfg)?;
    let s = attitude_spectrum(&d, cfg.bandlimit, cfg.workers)?;
    let path = cfg.out_dir.join(format!("spectrum_t{}.bin", d.step()));
    let mut w = create(&path)?;
    write_density_spectrum(&mut w, &s, Some(&meta(cfg)))?;
    w.flush()?;
    let marginal = s.attitude_marginal();
    let mut t = create(&cfg.out_dir.join(format!("spectrum_t{}.txt", d.step())))?;
    for l in header_lines(cfg) {
        writeln!(t, "# {l}")?;
    }
    writeln!(t, "# attitude-marginal spectrum, bandlimit {}", s.bandlimit())?;
    write_spectrum_text(&mut t, &marginal)?;
    t.flush()?;
    Ok(TransformSummary {
        step: d.step(),
        bandlimit: s.bandlimit(),
        degree_energy: marginal.degree_energy(),
        spectrum_file: path,
    })
}

/// Sphere marginals of a density file, written as `axis{i}_t{k}.csv`.
pub fn cmd_marginal(cfg: &RunConfig, density: &Path) -> Result<Vec<MarginalSummary>> {
    let d = read_density_file(density)?;
    prepare_out(cfg)?;
    export_marginals(cfg, &d, d.step())
}
