//! Experiment configuration: flat `key = value` text with `#` comments.
//!
//! Complex numbers are written `re+imi` (`1`, `0.5i`, `-1e-3+2i`); lists of
//! them are comma separated. Repeatable keys (`monomial`, `guess`) may also
//! carry several entries separated by `;`.

use std::path::PathBuf;
use std::str::FromStr;

use num_complex::Complex64;

use crate::dynamics::{IntegratorSettings, StepControl, Xi, DEFAULT_MAX_PHASE_STEP};
use crate::error::{Error, Result};
use crate::hamiltonian::{
    build_harmonic, build_kerr_pair, HamiltonianModel, KerrPairModel, Monomial, DEFAULT_MAX_DEGREE,
};
use crate::shooting::ShootingSettings;

/// Prefix of environment variables that override config keys.
pub const ENV_PREFIX: &str = "SCPROP_";

/// Every recognised key with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("scenario", "harmonic | kerr | custom (default: chosen by the subcommand)"),
    ("hbar", "reduced Planck constant, > 0 (default 1)"),
    ("omega", "harmonic angular frequency (default 1)"),
    ("omega_x", "Kerr frequency of mode x (default 1)"),
    ("omega_y", "Kerr frequency of mode y (default 1)"),
    ("lambda", "Kerr coupling (default 0.1)"),
    ("n_modes", "number of modes of a custom model, 1 or 2 (default 2)"),
    ("max_degree", "largest monomial degree of a custom model (default 8)"),
    ("monomial", "custom term: coeff_re, coeff_im, m_x, n_x, m_y, n_y for coeff v_x^m_x u_x^n_x v_y^m_y u_y^n_y (repeatable)"),
    ("z0", "initial coherent amplitudes for purity runs (default 1, 1)"),
    ("z1", "ket amplitudes of the propagator (default 0.5 per mode)"),
    ("z2", "bra amplitudes of the propagator (default 0.5 per mode)"),
    ("t_start", "first duration of the T grid"),
    ("t_stop", "last duration of the T grid"),
    ("t_count", "number of grid points, >= 1"),
    ("xi", "+1 for the propagator, -1 for its conjugate (default 1)"),
    ("integrator", "auto | fixed | adaptive (default auto)"),
    ("max_phase_step", "auto mode: bound on frequency * step (default 0.003)"),
    ("steps", "fixed mode: number of RK4 steps (required by integrator = fixed)"),
    ("adaptive_tol", "adaptive mode: step-doubling tolerance (default 1e-10)"),
    ("escape_bound", "abort when |u| or |v| exceeds this (default 1e6)"),
    ("max_steps", "abort after this many steps (default 10000000)"),
    ("bvp_tol", "boundary residual tolerance (default 1e-10)"),
    ("bvp_max_iter", "Newton steps per guess (default 50)"),
    ("guess", "free-end guess, complex list (repeatable)"),
    ("n_cut", "Fock cutoff of the exact oracle (default: from the Poisson tail)"),
    ("n_quad", "Gauss-Hermite points per axis (default 64)"),
    ("output", "CSV output path (default: stdout)"),
    ("seed", "seed of every random draw (default 20240917)"),
    ("threads", "worker threads (default: all cores)"),
    ("inject_fault", "none | tangent_det | energy_drift (property suite only)"),
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scenario {
    Harmonic,
    Kerr,
    Custom,
}

impl FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "harmonic" => Ok(Scenario::Harmonic),
            "kerr" => Ok(Scenario::Kerr),
            "custom" => Ok(Scenario::Custom),
            _ => Err(Error::Config(format!("unknown scenario `{s}`"))),
        }
    }
}

/// Deliberate corruption of one property-suite measurement.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    None,
    TangentDet,
    EnergyDrift,
}

impl FromStr for Fault {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Fault::None),
            "tangent_det" => Ok(Fault::TangentDet),
            "energy_drift" => Ok(Fault::EnergyDrift),
            _ => Err(Error::Config(format!("unknown fault `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IntegratorMode {
    Auto,
    Fixed,
    Adaptive,
}

impl FromStr for IntegratorMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(IntegratorMode::Auto),
            "fixed" => Ok(IntegratorMode::Fixed),
            "adaptive" => Ok(IntegratorMode::Adaptive),
            _ => Err(Error::Config(format!("unknown integrator `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TGrid {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

impl TGrid {
    pub fn new(start: f64, stop: f64, count: usize) -> Result<Self> {
        let g = TGrid { start, stop, count };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::Config("the T grid is empty (t_count = 0)".into()));
        }
        if !(self.start >= 0.0 && self.start.is_finite() && self.stop.is_finite()) {
            return Err(Error::Config("T grid bounds must be finite and non-negative".into()));
        }
        if self.count > 1 && !(self.stop > self.start) {
            return Err(Error::Config("T grid must be strictly increasing (t_stop > t_start)".into()));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.start];
        }
        let step = (self.stop - self.start) / (self.count - 1) as f64;
        (0..self.count)
            .map(|k| if k + 1 == self.count { self.stop } else { self.start + step * k as f64 })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: Option<Scenario>,
    pub hbar: f64,
    pub omega: f64,
    pub omega_x: f64,
    pub omega_y: f64,
    pub lambda: f64,
    pub n_modes: usize,
    pub max_degree: u32,
    pub monomials: Vec<Monomial>,
    pub z0: Vec<Complex64>,
    pub z1: Option<Vec<Complex64>>,
    pub z2: Option<Vec<Complex64>>,
    t_start: Option<f64>,
    t_stop: Option<f64>,
    t_count: Option<usize>,
    pub xi: Xi,
    pub integrator_mode: IntegratorMode,
    pub max_phase_step: f64,
    pub steps: Option<usize>,
    pub adaptive_tol: f64,
    pub escape_bound: f64,
    pub max_steps: usize,
    pub bvp_tol: f64,
    pub bvp_max_iter: usize,
    pub guesses: Vec<Vec<Complex64>>,
    pub n_cut: Option<usize>,
    pub n_quad: usize,
    pub output: Option<PathBuf>,
    pub seed: u64,
    pub threads: Option<usize>,
    pub fault: Fault,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            scenario: None,
            hbar: 1.0,
            omega: 1.0,
            omega_x: 1.0,
            omega_y: 1.0,
            lambda: 0.1,
            n_modes: 2,
            max_degree: DEFAULT_MAX_DEGREE,
            monomials: Vec::new(),
            z0: vec![Complex64::new(1.0, 0.0); 2],
            z1: None,
            z2: None,
            t_start: None,
            t_stop: None,
            t_count: None,
            xi: Xi::Plus,
            integrator_mode: IntegratorMode::Auto,
            max_phase_step: DEFAULT_MAX_PHASE_STEP,
            steps: None,
            adaptive_tol: 1e-10,
            escape_bound: 1e6,
            max_steps: 10_000_000,
            bvp_tol: 1e-10,
            bvp_max_iter: 50,
            guesses: Vec::new(),
            n_cut: None,
            n_quad: 64,
            output: None,
            seed: 20240917,
            threads: None,
            fault: Fault::None,
        }
    }
}

/// Parses `re+imi`, `re`, or `imi`.
pub fn parse_complex(text: &str) -> Result<Complex64> {
    let s: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    let bad = || Error::Config(format!("cannot parse complex number `{text}`"));
    if s.is_empty() {
        return Err(bad());
    }
    let Some(body) = s.strip_suffix('i') else {
        return s.parse::<f64>().map(|re| Complex64::new(re, 0.0)).map_err(|_| bad());
    };
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&k| (bytes[k] == b'+' || bytes[k] == b'-') && !matches!(bytes[k - 1], b'e' | b'E'));
    let imag = |t: &str| -> Result<f64> {
        match t {
            "" | "+" => Ok(1.0),
            "-" => Ok(-1.0),
            _ => t.parse::<f64>().map_err(|_| bad()),
        }
    };
    match split {
        Some(k) => {
            let re = body[..k].parse::<f64>().map_err(|_| bad())?;
            Ok(Complex64::new(re, imag(&body[k..])?))
        }
        None => Ok(Complex64::new(0.0, imag(body)?)),
    }
}

pub fn parse_complex_list(text: &str) -> Result<Vec<Complex64>> {
    text.split(',').map(parse_complex).collect()
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse::<T>()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

fn parse_monomial(value: &str) -> Result<Monomial> {
    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
    if parts.len() != 6 {
        return Err(Error::Config(format!(
            "monomial needs coeff_re, coeff_im, m_x, n_x, m_y, n_y; got `{value}`"
        )));
    }
    let re: f64 = parse_num("monomial", parts[0])?;
    let im: f64 = parse_num("monomial", parts[1])?;
    let p: Vec<u32> = parts[2..].iter().map(|s| parse_num("monomial", s)).collect::<Result<_>>()?;
    Ok(Monomial::new(Complex64::new(re, im), [(p[0], p[1]), (p[2], p[3])]))
}

impl ExperimentConfig {
    /// Defaults overridden by the lines of `text`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", no + 1)))?;
            self.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", no + 1)))?;
        }
        Ok(())
    }

    /// Applies `SCPROP_<KEY>` variables; unrelated variables are ignored.
    pub fn apply_env<I: IntoIterator<Item = (String, String)>>(&mut self, vars: I) -> Result<()> {
        let mut pairs: Vec<(String, String)> = vars
            .into_iter()
            .filter_map(|(k, v)| k.strip_prefix(ENV_PREFIX).map(|key| (key.to_ascii_lowercase(), v)))
            .filter(|(k, _)| KEYS.iter().any(|(name, _)| name == k))
            .collect();
        pairs.sort();
        for (k, v) in pairs {
            self.set(&k, &v)
                .map_err(|e| Error::Config(format!("{ENV_PREFIX}{}: {e}", k.to_ascii_uppercase())))?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "scenario" => self.scenario = Some(value.parse()?),
            "hbar" => self.hbar = parse_num(key, value)?,
            "omega" => self.omega = parse_num(key, value)?,
            "omega_x" => self.omega_x = parse_num(key, value)?,
            "omega_y" => self.omega_y = parse_num(key, value)?,
            "lambda" => self.lambda = parse_num(key, value)?,
            "n_modes" => self.n_modes = parse_num(key, value)?,
            "max_degree" => self.max_degree = parse_num(key, value)?,
            "monomial" => {
                for entry in value.split(';').filter(|e| !e.trim().is_empty()) {
                    self.monomials.push(parse_monomial(entry)?);
                }
            }
            "z0" => self.z0 = parse_complex_list(value)?,
            "z1" => self.z1 = Some(parse_complex_list(value)?),
            "z2" => self.z2 = Some(parse_complex_list(value)?),
            "t_start" => self.t_start = Some(parse_num(key, value)?),
            "t_stop" => self.t_stop = Some(parse_num(key, value)?),
            "t_count" => self.t_count = Some(parse_num(key, value)?),
            "xi" => self.xi = Xi::from_sign(parse_num(key, value)?)?,
            "integrator" => self.integrator_mode = value.parse()?,
            "max_phase_step" => self.max_phase_step = parse_num(key, value)?,
            "steps" => self.steps = Some(parse_num(key, value)?),
            "adaptive_tol" => self.adaptive_tol = parse_num(key, value)?,
            "escape_bound" => self.escape_bound = parse_num(key, value)?,
            "max_steps" => self.max_steps = parse_num::<f64>(key, value)? as usize,
            "bvp_tol" => self.bvp_tol = parse_num(key, value)?,
            "bvp_max_iter" => self.bvp_max_iter = parse_num(key, value)?,
            "guess" => {
                for entry in value.split(';').filter(|e| !e.trim().is_empty()) {
                    self.guesses.push(parse_complex_list(entry)?);
                }
            }
            "n_cut" => self.n_cut = Some(parse_num(key, value)?),
            "n_quad" => self.n_quad = parse_num(key, value)?,
            "output" => self.output = Some(PathBuf::from(value)),
            "seed" => self.seed = parse_num(key, value)?,
            "threads" => self.threads = Some(parse_num(key, value)?),
            "inject_fault" => self.fault = value.parse()?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Explicitly configured T grid, if any key of it was given; missing
    /// parts come from `fallback`.
    pub fn t_grid(&self, fallback: TGrid) -> Result<TGrid> {
        let g = TGrid {
            start: self.t_start.unwrap_or(fallback.start),
            stop: self.t_stop.unwrap_or(fallback.stop),
            count: self.t_count.unwrap_or(fallback.count),
        };
        g.validate()?;
        Ok(g)
    }

    pub fn has_t_grid(&self) -> bool {
        self.t_start.is_some() || self.t_stop.is_some() || self.t_count.is_some()
    }

    pub fn set_t_grid(&mut self, grid: TGrid) {
        self.t_start = Some(grid.start);
        self.t_stop = Some(grid.stop);
        self.t_count = Some(grid.count);
    }

    pub fn integrator(&self) -> Result<IntegratorSettings> {
        let control = match self.integrator_mode {
            IntegratorMode::Auto if self.max_phase_step > 0.0 => StepControl::Auto {
                max_phase_step: self.max_phase_step,
            },
            IntegratorMode::Fixed => match self.steps {
                Some(n) if n > 0 => StepControl::Fixed(n),
                _ => return Err(Error::Config("integrator = fixed needs a positive `steps`".into())),
            },
            IntegratorMode::Adaptive if self.adaptive_tol > 0.0 => StepControl::Adaptive { tol: self.adaptive_tol },
            _ => return Err(Error::Config("step-control parameter must be positive".into())),
        };
        if !(self.escape_bound > 0.0) || self.max_steps == 0 {
            return Err(Error::Config("escape_bound and max_steps must be positive".into()));
        }
        Ok(IntegratorSettings {
            control,
            escape_bound: self.escape_bound,
            max_steps: self.max_steps,
        })
    }

    pub fn shooting(&self) -> Result<ShootingSettings> {
        Ok(ShootingSettings {
            tol: self.bvp_tol,
            max_iter: self.bvp_max_iter,
            integrator: self.integrator()?,
        })
    }

    pub fn kerr(&self) -> Result<KerrPairModel> {
        KerrPairModel::new(self.omega_x, self.omega_y, self.lambda, self.hbar)
    }

    /// The model of `scenario` (or of `default` when none is configured).
    pub fn model(&self, default: Scenario) -> Result<(HamiltonianModel, Option<KerrPairModel>)> {
        match self.scenario.unwrap_or(default) {
            Scenario::Harmonic => Ok((build_harmonic(self.omega, self.hbar)?, None)),
            Scenario::Kerr => {
                let (m, k) = build_kerr_pair(self.omega_x, self.omega_y, self.lambda, self.hbar)?;
                Ok((m, Some(k)))
            }
            Scenario::Custom => {
                if self.monomials.is_empty() {
                    return Err(Error::Config("custom scenario needs at least one `monomial`".into()));
                }
                let model = HamiltonianModel::with_max_degree(
                    self.monomials.clone(),
                    self.n_modes,
                    self.hbar,
                    self.max_degree,
                )?;
                Ok((model, None))
            }
        }
    }

    /// Fails unless the configured scenario (if any) is one of `allowed`.
    pub fn require_scenario(&self, allowed: &[Scenario]) -> Result<()> {
        match self.scenario {
            Some(s) if !allowed.contains(&s) => Err(Error::Config(format!(
                "scenario {s:?} is not valid here; expected one of {allowed:?}"
            ))),
            _ => Ok(()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.hbar > 0.0 && self.hbar.is_finite()) {
            return Err(Error::Config("hbar must be positive".into()));
        }
        if self.has_t_grid() {
            // missing parts are supplied by each subcommand; check what is given
            let start = self.t_start.unwrap_or(0.0);
            self.t_grid(TGrid { start, stop: start + 1.0, count: 1 })?;
        }
        self.integrator()?;
        if !(self.bvp_tol > 0.0) {
            return Err(Error::Config("bvp_tol must be positive".into()));
        }
        if self.n_quad == 0 {
            return Err(Error::Config("n_quad must be positive".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn complex_syntax() {
        assert_eq!(parse_complex("1+0.5i").unwrap(), c(1.0, 0.5));
        assert_eq!(parse_complex("-0.5-2i").unwrap(), c(-0.5, -2.0));
        assert_eq!(parse_complex("0.5i").unwrap(), c(0.0, 0.5));
        assert_eq!(parse_complex("-i").unwrap(), c(0.0, -1.0));
        assert_eq!(parse_complex(" 3 ").unwrap(), c(3.0, 0.0));
        assert_eq!(parse_complex("1e-3+2E+1i").unwrap(), c(1e-3, 20.0));
        assert_eq!(parse_complex("-1e-3i").unwrap(), c(0.0, -1e-3));
        assert!(parse_complex("1+").is_err());
        assert!(parse_complex("x").is_err());
        assert_eq!(parse_complex_list("1, 0.5i").unwrap(), vec![c(1.0, 0.0), c(0.0, 0.5)]);
    }

    #[test]
    fn file_and_env_layers() {
        let text = "# Kerr run\nscenario = kerr\nlambda = 0.2 # coupling\nz0 = 1+1i, 0.5\nt_start = 0\nt_stop = 2\nt_count = 5\nguess = 1, 1; 0.5, 0.5\n";
        let mut cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!(cfg.scenario, Some(Scenario::Kerr));
        assert_eq!(cfg.lambda, 0.2);
        assert_eq!(cfg.z0, vec![c(1.0, 1.0), c(0.5, 0.0)]);
        assert_eq!(cfg.guesses.len(), 2);
        let grid = cfg.t_grid(TGrid { start: 0.0, stop: 1.0, count: 1 }).unwrap();
        assert_eq!(grid.values(), vec![0.0, 0.5, 1.0, 1.5, 2.0]);
        cfg.apply_env(vec![
            ("SCPROP_LAMBDA".to_string(), "0.3".to_string()),
            ("HOME".to_string(), "/root".to_string()),
        ])
        .unwrap();
        assert_eq!(cfg.lambda, 0.3);
    }

    #[test]
    fn config_errors() {
        assert!(ExperimentConfig::parse("nonsense = 1").is_err());
        assert!(ExperimentConfig::parse("hbar 1").is_err());
        let empty = ExperimentConfig::parse("t_count = 0").unwrap();
        assert!(matches!(empty.validate(), Err(Error::Config(_))));
        let backwards = ExperimentConfig::parse("t_start = 2\nt_stop = 1\nt_count = 3").unwrap();
        assert!(backwards.validate().is_err());
        assert!(ExperimentConfig::parse("monomial = 1, 0, 1, 1").is_err());
        let stepless = ExperimentConfig::parse("integrator = fixed").unwrap();
        assert!(stepless.validate().is_err());
        let fixed = ExperimentConfig::parse("integrator = fixed\nsteps = 40").unwrap();
        assert_eq!(fixed.integrator().unwrap().control, StepControl::Fixed(40));
    }

    #[test]
    fn custom_model_from_monomials() {
        let text = "scenario = custom\nn_modes = 1\nmonomial = 1, 0, 1, 1, 0, 0\nmonomial = 0.5, 0, 0, 0, 0, 0";
        let cfg = ExperimentConfig::parse(text).unwrap();
        let (m, k) = cfg.model(Scenario::Harmonic).unwrap();
        assert!(k.is_none());
        assert_eq!(m.monomials().len(), 2);
        m.hermiticity_check().unwrap();
    }

    #[test]
    fn every_key_is_settable() {
        let sample = |k: &str| match k {
            "scenario" => "kerr",
            "monomial" => "1, 0, 1, 1, 0, 0",
            "z0" | "z1" | "z2" | "guess" => "1, 1",
            "xi" => "-1",
            "integrator" => "adaptive",
            "output" => "out.csv",
            "inject_fault" => "tangent_det",
            "t_count" | "steps" | "n_cut" | "n_quad" | "threads" | "bvp_max_iter" | "n_modes" | "max_degree" | "seed" => "3",
            _ => "0.5",
        };
        for (key, _) in KEYS {
            let mut cfg = ExperimentConfig::default();
            cfg.set(key, sample(key)).unwrap_or_else(|e| panic!("{key}: {e}"));
        }
    }
}
