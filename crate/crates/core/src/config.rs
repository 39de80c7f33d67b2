//! Flat `key = value` run configuration with dotted namespaces.
//!
//! Lines starting with `#` are comments. Lists are comma separated and
//! optional values accept `auto`. Unknown keys are rejected.

use std::fmt::Write as _;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::frac::FracParams;
use crate::fujita::{critical_exponent, Amplitude, SweepAxis, SweepConfig};
use crate::mild::NonlinearitySpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Relax,
    Decay,
    Evolve,
    Sweep,
    Verify,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Relax => "relax",
            Mode::Decay => "decay",
            Mode::Evolve => "evolve",
            Mode::Sweep => "sweep",
            Mode::Verify => "verify",
        }
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "relax" => Ok(Mode::Relax),
            "decay" => Ok(Mode::Decay),
            "evolve" => Ok(Mode::Evolve),
            "sweep" => Ok(Mode::Sweep),
            "verify" => Ok(Mode::Verify),
            _ => Err(format!("unknown mode `{s}` (relax|decay|evolve|sweep|verify)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelaxMethod {
    Volterra,
    Contour,
    Both,
}

impl RelaxMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            RelaxMethod::Volterra => "volterra",
            RelaxMethod::Contour => "contour",
            RelaxMethod::Both => "both",
        }
    }
}

impl FromStr for RelaxMethod {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "volterra" => Ok(RelaxMethod::Volterra),
            "contour" => Ok(RelaxMethod::Contour),
            "both" => Ok(RelaxMethod::Both),
            _ => Err(format!("unknown method `{s}` (volterra|contour|both)")),
        }
    }
}

/// Every experiment parameter, with defaults for the desk-scale runs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: Option<Mode>,
    pub alpha: f64,
    pub k: f64,

    pub relax_mu: Vec<f64>,
    pub relax_t_end: f64,
    pub relax_nodes: usize,
    pub relax_grading: f64,
    pub relax_method: RelaxMethod,

    pub grid_dim: usize,
    pub grid_points: usize,
    pub grid_half_length: Option<f64>,

    pub sigma: f64,
    pub gamma: f64,
    pub system: bool,
    pub rho: f64,
    pub rho1: f64,
    pub rho2: f64,
    pub epsilon: Option<f64>,

    pub data_amplitude: f64,
    pub data_width: f64,

    pub decay_r: f64,
    pub decay_p: f64,
    pub decay_t0: f64,
    pub decay_t1: f64,
    pub decay_samples: usize,

    pub evolve_t_end: f64,
    pub evolve_dt_max: f64,
    pub evolve_cfl: f64,
    pub evolve_r: f64,
    pub evolve_p: f64,
    pub blow_factor: f64,
    pub positivity_tol: f64,
    pub picard_tol: f64,
    pub picard_max_iterations: usize,
    pub snapshot_times: Vec<f64>,

    pub sweep_axis: Vec<f64>,
    pub sweep_amplitude_rule: String,
    pub sweep_factor: f64,
    pub c_op: f64,
    pub tie_low: f64,
    pub tie_high: f64,

    pub verify_t_values: Vec<f64>,

    pub output_metadata: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let sweep = SweepConfig::default();
        Self {
            mode: None,
            alpha: 0.5,
            k: 1.0,
            relax_mu: vec![1.0],
            relax_t_end: 10.0,
            relax_nodes: 512,
            relax_grading: 2.0,
            relax_method: RelaxMethod::Both,
            grid_dim: 1,
            grid_points: sweep.points_per_axis,
            grid_half_length: None,
            sigma: 0.0,
            gamma: 0.0,
            system: false,
            rho: 2.0,
            rho1: 3.0,
            rho2: 1.0,
            epsilon: None,
            data_amplitude: 0.01,
            data_width: sweep.gaussian_width,
            decay_r: 1.5,
            decay_p: 3.0,
            decay_t0: 1.0,
            decay_t1: 100.0,
            decay_samples: 8,
            evolve_t_end: sweep.t_end,
            evolve_dt_max: sweep.dt_max,
            evolve_cfl: sweep.cfl,
            evolve_r: 1.5,
            evolve_p: 3.0,
            blow_factor: sweep.blow_factor,
            positivity_tol: sweep.positivity_tol,
            picard_tol: sweep.picard_tol,
            picard_max_iterations: sweep.picard_max_iterations,
            snapshot_times: Vec::new(),
            sweep_axis: sweep.axis.values().to_vec(),
            sweep_amplitude_rule: "contraction".into(),
            sweep_factor: 0.1,
            c_op: 1.0,
            tie_low: sweep.tie_low,
            tie_high: sweep.tie_high,
            verify_t_values: vec![1.0, 4.0, 16.0],
            output_metadata: true,
        }
    }
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "auto".to_string(), |x| x.to_string())
}

fn num<T: FromStr>(value: &str) -> std::result::Result<T, String> {
    value
        .parse::<T>()
        .map_err(|_| format!("cannot parse `{value}` as {}", std::any::type_name::<T>()))
}

fn list(value: &str) -> std::result::Result<Vec<f64>, String> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|s| num::<f64>(s.trim())).collect()
}

fn opt(value: &str) -> std::result::Result<Option<f64>, String> {
    if value == "auto" {
        Ok(None)
    } else {
        num(value).map(Some)
    }
}

fn boolean(value: &str) -> std::result::Result<bool, String> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("expected true or false, got `{value}`")),
    }
}

impl RunConfig {
    /// All recognized keys in canonical order, with current values.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("mode", self.mode.map_or_else(|| "auto".into(), |m| m.as_str().into())),
            ("frac.alpha", self.alpha.to_string()),
            ("frac.k", self.k.to_string()),
            ("relax.mu", fmt_list(&self.relax_mu)),
            ("relax.t_end", self.relax_t_end.to_string()),
            ("relax.nodes", self.relax_nodes.to_string()),
            ("relax.grading", self.relax_grading.to_string()),
            ("relax.method", self.relax_method.as_str().into()),
            ("grid.dim", self.grid_dim.to_string()),
            ("grid.points", self.grid_points.to_string()),
            ("grid.half_length", fmt_opt(self.grid_half_length)),
            ("nonlinear.sigma", self.sigma.to_string()),
            ("nonlinear.gamma", self.gamma.to_string()),
            ("nonlinear.system", self.system.to_string()),
            ("nonlinear.rho", self.rho.to_string()),
            ("nonlinear.rho1", self.rho1.to_string()),
            ("nonlinear.rho2", self.rho2.to_string()),
            ("nonlinear.epsilon", fmt_opt(self.epsilon)),
            ("data.amplitude", self.data_amplitude.to_string()),
            ("data.width", self.data_width.to_string()),
            ("decay.r", self.decay_r.to_string()),
            ("decay.p", self.decay_p.to_string()),
            ("decay.t0", self.decay_t0.to_string()),
            ("decay.t1", self.decay_t1.to_string()),
            ("decay.samples", self.decay_samples.to_string()),
            ("evolve.t_end", self.evolve_t_end.to_string()),
            ("evolve.dt_max", self.evolve_dt_max.to_string()),
            ("evolve.cfl", self.evolve_cfl.to_string()),
            ("evolve.r", self.evolve_r.to_string()),
            ("evolve.p", self.evolve_p.to_string()),
            ("evolve.blow_factor", self.blow_factor.to_string()),
            ("evolve.positivity_tol", self.positivity_tol.to_string()),
            ("evolve.picard_tol", self.picard_tol.to_string()),
            ("evolve.picard_max_iterations", self.picard_max_iterations.to_string()),
            ("evolve.snapshot_times", fmt_list(&self.snapshot_times)),
            ("sweep.axis", fmt_list(&self.sweep_axis)),
            ("sweep.amplitude", self.sweep_amplitude_rule.clone()),
            ("sweep.factor", self.sweep_factor.to_string()),
            ("sweep.c_op", self.c_op.to_string()),
            ("sweep.tie_low", self.tie_low.to_string()),
            ("sweep.tie_high", self.tie_high.to_string()),
            ("verify.t_values", fmt_list(&self.verify_t_values)),
            ("output.metadata", self.output_metadata.to_string()),
        ]
    }

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let r: std::result::Result<(), String> = (|| {
            match key {
                "mode" => self.mode = if value == "auto" { None } else { Some(value.parse()?) },
                "frac.alpha" => self.alpha = num(value)?,
                "frac.k" => self.k = num(value)?,
                "relax.mu" => self.relax_mu = list(value)?,
                "relax.t_end" => self.relax_t_end = num(value)?,
                "relax.nodes" => self.relax_nodes = num(value)?,
                "relax.grading" => self.relax_grading = num(value)?,
                "relax.method" => self.relax_method = value.parse()?,
                "grid.dim" => self.grid_dim = num(value)?,
                "grid.points" => self.grid_points = num(value)?,
                "grid.half_length" => self.grid_half_length = opt(value)?,
                "nonlinear.sigma" => self.sigma = num(value)?,
                "nonlinear.gamma" => self.gamma = num(value)?,
                "nonlinear.system" => self.system = boolean(value)?,
                "nonlinear.rho" => self.rho = num(value)?,
                "nonlinear.rho1" => self.rho1 = num(value)?,
                "nonlinear.rho2" => self.rho2 = num(value)?,
                "nonlinear.epsilon" => self.epsilon = opt(value)?,
                "data.amplitude" => self.data_amplitude = num(value)?,
                "data.width" => self.data_width = num(value)?,
                "decay.r" => self.decay_r = num(value)?,
                "decay.p" => self.decay_p = num(value)?,
                "decay.t0" => self.decay_t0 = num(value)?,
                "decay.t1" => self.decay_t1 = num(value)?,
                "decay.samples" => self.decay_samples = num(value)?,
                "evolve.t_end" => self.evolve_t_end = num(value)?,
                "evolve.dt_max" => self.evolve_dt_max = num(value)?,
                "evolve.cfl" => self.evolve_cfl = num(value)?,
                "evolve.r" => self.evolve_r = num(value)?,
                "evolve.p" => self.evolve_p = num(value)?,
                "evolve.blow_factor" => self.blow_factor = num(value)?,
                "evolve.positivity_tol" => self.positivity_tol = num(value)?,
                "evolve.picard_tol" => self.picard_tol = num(value)?,
                "evolve.picard_max_iterations" => self.picard_max_iterations = num(value)?,
                "evolve.snapshot_times" => self.snapshot_times = list(value)?,
                "sweep.axis" => self.sweep_axis = list(value)?,
                "sweep.amplitude" => {
                    if value != "contraction" && value != "explicit" {
                        return Err(format!("expected contraction or explicit, got `{value}`"));
                    }
                    self.sweep_amplitude_rule = value.into()
                }
                "sweep.factor" => self.sweep_factor = num(value)?,
                "sweep.c_op" => self.c_op = num(value)?,
                "sweep.tie_low" => self.tie_low = num(value)?,
                "sweep.tie_high" => self.tie_high = num(value)?,
                "verify.t_values" => self.verify_t_values = list(value)?,
                "output.metadata" => self.output_metadata = boolean(value)?,
                _ => return Err("unknown key".into()),
            }
            Ok(())
        })();
        r.map_err(|msg| Error::config(key, msg))
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::config(assignment.trim(), "override must look like key=value"))?;
        self.set(key.trim(), value)?;
        self.validate()
    }

    /// Canonical text form; parses back to an equal config.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// SHA-256 of the canonical text form.
    pub fn hash(&self) -> String {
        hash_hex(self.to_text().as_bytes())
    }

    pub fn params(&self) -> Result<FracParams> {
        FracParams::new(self.alpha, self.k)
    }

    /// Nonlinearity with ε resolved against the grid spacing.
    pub fn nonlinearity(&self, dx: f64) -> Result<NonlinearitySpec> {
        let eps = self.epsilon.unwrap_or(dx);
        if self.system {
            NonlinearitySpec::system(self.sigma, self.gamma, self.rho1, self.rho2, eps)
        } else {
            NonlinearitySpec::scalar(self.sigma, self.gamma, self.rho, eps)
        }
    }

    pub fn sweep_config(&self) -> SweepConfig {
        SweepConfig {
            dim: self.grid_dim,
            sigma: self.sigma,
            gamma: self.gamma,
            alpha: self.alpha,
            k: self.k,
            axis: if self.system {
                SweepAxis::System {
                    rho1: self.rho1,
                    rho2s: self.sweep_axis.clone(),
                }
            } else {
                SweepAxis::Scalar {
                    rhos: self.sweep_axis.clone(),
                }
            },
            points_per_axis: self.grid_points,
            box_half_length: self.grid_half_length,
            t_end: self.evolve_t_end,
            dt_max: self.evolve_dt_max,
            cfl: self.evolve_cfl,
            gaussian_width: self.data_width,
            amplitude: if self.sweep_amplitude_rule == "explicit" {
                Amplitude::Explicit {
                    value: self.data_amplitude,
                }
            } else {
                Amplitude::Contraction {
                    factor: self.sweep_factor,
                    c_op: self.c_op,
                }
            },
            blow_factor: self.blow_factor,
            positivity_tol: self.positivity_tol,
            picard_tol: self.picard_tol,
            picard_max_iterations: self.picard_max_iterations,
            epsilon: self.epsilon,
            tie_low: self.tie_low,
            tie_high: self.tie_high,
        }
    }

    /// Checks every module-level precondition, naming the offending field.
    pub fn validate(&self) -> Result<()> {
        let fail = |field: &str, msg: String| Err(Error::config(field, msg));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return fail(
                "frac.alpha",
                format!("alpha must lie in open (0,1), got {}", self.alpha),
            );
        }
        if !(self.k >= 0.0 && self.k.is_finite()) {
            return fail("frac.k", format!("k must be >= 0, got {}", self.k));
        }
        if self.relax_mu.is_empty() || self.relax_mu.iter().any(|m| !(*m >= 0.0 && m.is_finite())) {
            return fail("relax.mu", "need at least one finite mu >= 0".into());
        }
        if !(self.relax_t_end > 0.0 && self.relax_t_end.is_finite()) {
            return fail("relax.t_end", format!("must be > 0, got {}", self.relax_t_end));
        }
        if self.relax_nodes < 2 {
            return fail(
                "relax.nodes",
                format!("need at least 2 nodes, got {}", self.relax_nodes),
            );
        }
        if !(self.relax_grading >= 1.0) {
            return fail("relax.grading", format!("must be >= 1, got {}", self.relax_grading));
        }
        if !(self.grid_dim == 1 || self.grid_dim == 2) {
            return fail("grid.dim", format!("must be 1 or 2, got {}", self.grid_dim));
        }
        if !(self.grid_points >= 64 && self.grid_points.is_power_of_two()) {
            return fail(
                "grid.points",
                format!("must be a power of two >= 64, got {}", self.grid_points),
            );
        }
        if let Some(l) = self.grid_half_length {
            if !(l > 0.0 && l.is_finite()) {
                return fail("grid.half_length", format!("must be > 0, got {l}"));
            }
        }
        if !(self.sigma <= 0.0) {
            return fail("nonlinear.sigma", format!("sigma must be <= 0, got {}", self.sigma));
        }
        if !(self.gamma <= 0.0) {
            return fail("nonlinear.gamma", format!("gamma must be <= 0, got {}", self.gamma));
        }
        if !(self.sigma + 2.0 * (self.gamma + 1.0) > 0.0) {
            return fail("nonlinear.sigma", "sigma+2(gamma+1)>0 violated".into());
        }
        if !self.system && !(self.rho > 1.0) {
            return fail("nonlinear.rho", format!("rho must be > 1, got {}", self.rho));
        }
        if self.system && !(self.rho1 >= 1.0 && self.rho2 >= 1.0 && self.rho1 * self.rho2 > 1.0) {
            return fail("nonlinear.rho1", "need rho1, rho2 >= 1 and rho1*rho2 > 1".into());
        }
        if let Some(e) = self.epsilon {
            if !(e >= 0.0) {
                return fail("nonlinear.epsilon", format!("must be >= 0, got {e}"));
            }
        }
        if !(self.data_amplitude >= 0.0 && self.data_amplitude.is_finite()) {
            return fail("data.amplitude", format!("must be >= 0, got {}", self.data_amplitude));
        }
        if !(self.data_width > 0.0) {
            return fail("data.width", format!("must be > 0, got {}", self.data_width));
        }
        if !(self.decay_r >= 1.0 && self.decay_p > self.decay_r) {
            return fail("decay.p", "need 1 <= decay.r < decay.p".into());
        }
        if !(self.decay_t0 > 0.0 && self.decay_t1 > self.decay_t0) {
            return fail("decay.t1", "need 0 < decay.t0 < decay.t1".into());
        }
        if self.decay_samples < 2 {
            return fail("decay.samples", "need at least 2 samples".into());
        }
        for (field, v) in [
            ("evolve.t_end", self.evolve_t_end),
            ("evolve.dt_max", self.evolve_dt_max),
            ("evolve.cfl", self.evolve_cfl),
            ("evolve.picard_tol", self.picard_tol),
            ("sweep.factor", self.sweep_factor),
            ("sweep.c_op", self.c_op),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return fail(field, format!("must be > 0, got {v}"));
            }
        }
        if !(self.evolve_r >= 1.0 && self.evolve_p > self.evolve_r) {
            return fail("evolve.p", "need 1 <= evolve.r < evolve.p".into());
        }
        if !(self.blow_factor > 1.0) {
            return fail("evolve.blow_factor", format!("must be > 1, got {}", self.blow_factor));
        }
        if !(self.positivity_tol >= 0.0) {
            return fail(
                "evolve.positivity_tol",
                format!("must be >= 0, got {}", self.positivity_tol),
            );
        }
        if self.picard_max_iterations == 0 {
            return fail("evolve.picard_max_iterations", "must be >= 1".into());
        }
        if self
            .snapshot_times
            .iter()
            .any(|t| !(*t > 0.0 && *t <= self.evolve_t_end))
        {
            return fail("evolve.snapshot_times", "times must lie in (0, evolve.t_end]".into());
        }
        if self.system {
            if self.sweep_axis.iter().any(|r| !(*r >= 1.0 && r * self.rho1 > 1.0)) {
                return fail(
                    "sweep.axis",
                    "system axis values need rho2 >= 1 and rho1*rho2 > 1".into(),
                );
            }
        } else if self.sweep_axis.iter().any(|r| !(*r > 1.0)) {
            return fail("sweep.axis", "scalar axis values must be > 1".into());
        }
        if !(self.tie_low > 0.0 && self.tie_high > self.tie_low) {
            return fail("sweep.tie_high", "need 0 < tie_low < tie_high".into());
        }
        if self.verify_t_values.iter().any(|t| !(*t > 0.0)) {
            return fail("verify.t_values", "times must be > 0".into());
        }
        critical_exponent(self.grid_dim, self.sigma, self.gamma)
            .map_err(|e| Error::config("nonlinear.sigma", e.to_string()))?;
        Ok(())
    }
}

/// Parses and validates a config document.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    let mut seen = std::collections::HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let at = |field: Option<String>, msg: String| Error::Config {
            line: Some(i + 1),
            field,
            msg,
        };
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| at(None, format!("expected `key = value`, got `{line}`")))?;
        let key = key.trim();
        if !seen.insert(key.to_string()) {
            return Err(at(Some(key.into()), "duplicate key".into()));
        }
        cfg.set(key, value).map_err(|e| match e {
            Error::Config { field, msg, .. } => at(field, msg),
            other => other,
        })?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Hex-encoded SHA-256.
pub fn hash_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
