//! Excitonic system definition, simulation parameters and unit conversions.
//!
//! Energies are carried in cm^-1, temperatures in K. The propagator works
//! with ħ = 1 and angular frequencies in rad/ps.

use std::fmt;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light in cm/ps.
pub const SPEED_OF_LIGHT_CM_PER_PS: f64 = 0.029_979_245_8;

/// Boltzmann constant in cm^-1/K (k_B / (h c)).
pub const BOLTZMANN_CM1_PER_K: f64 = 0.695_034_800_4;

/// Asymmetry above which a Hamiltonian is symmetrized with a warning.
pub const ASYMMETRY_WARN: f64 = 1e-9;
/// Asymmetry above which a Hamiltonian is rejected.
pub const ASYMMETRY_LIMIT: f64 = 1e-6;

const FMO_TEXT: &str = include_str!("../data/fmo7.txt");

/// Converts a wavenumber in cm^-1 into an angular frequency in rad/ps.
pub fn cm1_to_angular_frequency(x: f64) -> f64 {
    2.0 * std::f64::consts::PI * SPEED_OF_LIGHT_CM_PER_PS * x
}

/// k_B T in cm^-1.
pub fn thermal_energy(temperature: f64) -> Result<f64> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::Invalid(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    Ok(BOLTZMANN_CM1_PER_K * temperature)
}

/// A Frenkel exciton Hamiltonian in the site basis.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    pub name: String,
    pub n_sites: usize,
    /// Real symmetric site Hamiltonian, cm^-1.
    pub hamiltonian: DMatrix<f64>,
    /// Zero-based site initially excited for each label `j`.
    pub excitation_sites: Vec<usize>,
}

impl SystemSpec {
    /// Builds a system from a symmetric Hamiltonian.
    ///
    /// Label `j = 0` excites site 1 and `j = 1` excites site 6 when the system
    /// has at least six sites; smaller systems map `j = 1` to the last site.
    pub fn new(name: impl Into<String>, hamiltonian: DMatrix<f64>) -> Result<Self> {
        let n = hamiltonian.nrows();
        if n != hamiltonian.ncols() {
            return Err(Error::Shape(format!(
                "hamiltonian is {}x{}, expected square",
                n,
                hamiltonian.ncols()
            )));
        }
        if n < 2 {
            return Err(Error::Invalid(format!("need at least 2 sites, got {n}")));
        }
        if hamiltonian.iter().any(|x| !x.is_finite()) {
            return Err(Error::Invalid("hamiltonian has non-finite entries".into()));
        }
        let asym = max_asymmetry(&hamiltonian);
        if asym > ASYMMETRY_LIMIT {
            return Err(Error::Asymmetric {
                max_asymmetry: asym,
                limit: ASYMMETRY_LIMIT,
            });
        }
        let hamiltonian = if asym > 0.0 {
            if asym > ASYMMETRY_WARN {
                log::warn!("hamiltonian asymmetry {asym:e} cm^-1, symmetrizing");
            }
            (&hamiltonian + hamiltonian.transpose()) * 0.5
        } else {
            hamiltonian
        };
        let excitation_sites = if n >= 6 { vec![0, 5] } else { vec![0, n - 1] };
        Ok(SystemSpec {
            name: name.into(),
            n_sites: n,
            hamiltonian,
            excitation_sites,
        })
    }

    /// The 7-site FMO Hamiltonian shipped in `data/fmo7.txt`.
    pub fn fmo() -> Self {
        parse_system("fmo7", FMO_TEXT).expect("bundled FMO hamiltonian is valid")
    }

    /// Site index excited by label `j`.
    pub fn initial_site(&self, j: u8) -> Result<usize> {
        self.excitation_sites
            .get(j as usize)
            .copied()
            .ok_or_else(|| Error::Invalid(format!("no initial site for label j={j}")))
    }
}

fn max_asymmetry(h: &DMatrix<f64>) -> f64 {
    let n = h.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for k in (i + 1)..n {
            worst = worst.max((h[(i, k)] - h[(k, i)]).abs());
        }
    }
    worst
}

/// Parses the plain-text Hamiltonian format: first data line `n_sites`, then
/// `n_sites` rows of whitespace-separated values. `#` starts a comment line.
pub fn parse_system(name: &str, text: &str) -> Result<SystemSpec> {
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'));
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty hamiltonian file".into()))?;
    let n: usize = header
        .parse()
        .map_err(|_| Error::Parse(format!("bad site count {header:?}")))?;
    let mut values = Vec::with_capacity(n * n);
    let mut rows = 0;
    for line in lines {
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .map_err(|_| Error::Parse(format!("bad number {tok:?}")))
            })
            .collect::<Result<_>>()?;
        if row.len() != n {
            return Err(Error::Shape(format!(
                "row {} has {} entries, expected {n}",
                rows + 1,
                row.len()
            )));
        }
        values.extend(row);
        rows += 1;
    }
    if rows != n {
        return Err(Error::Shape(format!("found {rows} rows, expected {n}")));
    }
    SystemSpec::new(name, DMatrix::from_row_slice(n, n, &values))
}

/// Loads a Hamiltonian file.
pub fn load_system(path: impl AsRef<Path>) -> Result<SystemSpec> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "system".into());
    parse_system(&name, &text)
}

/// Renders a system in the text format read by [`parse_system`]. Values use
/// shortest round-trip formatting, so reloading is bit-exact.
pub fn format_system(sys: &SystemSpec) -> String {
    let mut out = format!("# {}\n{}\n", sys.name, sys.n_sites);
    for i in 0..sys.n_sites {
        let row: Vec<String> = (0..sys.n_sites)
            .map(|k| format!("{:?}", sys.hamiltonian[(i, k)]))
            .collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

pub fn save_system(sys: &SystemSpec, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_system(sys)).map_err(|e| Error::io(path, e))
}

/// The four inputs identifying one trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationPoint {
    /// Initial-excitation label, 0 or 1.
    pub j: u8,
    /// Reorganization energy, cm^-1.
    pub lambda: f64,
    /// Characteristic bath frequency, cm^-1.
    pub gamma: f64,
    /// Temperature, K.
    pub temperature: f64,
}

impl SimulationPoint {
    pub fn new(j: u8, lambda: f64, gamma: f64, temperature: f64) -> Result<Self> {
        let p = SimulationPoint {
            j,
            lambda,
            gamma,
            temperature,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.j > 1 {
            return Err(Error::Invalid(format!("site label j={} not in {{0,1}}", self.j)));
        }
        for (name, v) in [
            ("lambda", self.lambda),
            ("gamma", self.gamma),
            ("temperature", self.temperature),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Invalid(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

impl fmt::Display for SimulationPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "j={} lambda={} gamma={} T={}",
            self.j, self.lambda, self.gamma, self.temperature
        )
    }
}

/// Cartesian grid of simulation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterGrid {
    pub lambdas: Vec<f64>,
    pub gammas: Vec<f64>,
    pub temperatures: Vec<f64>,
    pub sites: Vec<u8>,
}

impl ParameterGrid {
    pub fn new(
        lambdas: Vec<f64>,
        gammas: Vec<f64>,
        temperatures: Vec<f64>,
        sites: Vec<u8>,
    ) -> Result<Self> {
        let grid = ParameterGrid {
            lambdas,
            gammas,
            temperatures,
            sites,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, values) in [
            ("lambdas", &self.lambdas),
            ("gammas", &self.gammas),
            ("temperatures", &self.temperatures),
        ] {
            if values.is_empty() {
                return Err(Error::Invalid(format!("{name} is empty")));
            }
            if values.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
                return Err(Error::Invalid(format!("{name} must be positive")));
            }
            if values.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::Invalid(format!("{name} must be strictly increasing")));
            }
        }
        if self.sites.is_empty()
            || self.sites.iter().any(|&j| j > 1)
            || self.sites.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(Error::Invalid(
                "sites must be a strictly increasing subset of {0, 1}".into(),
            ));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.lambdas.len() * self.gammas.len() * self.temperatures.len() * self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Normalization maxima `(lambda_max, gamma_max, temperature_max)`.
    pub fn maxima(&self) -> [f64; 3] {
        let max = |v: &[f64]| v.iter().copied().fold(f64::MIN, f64::max);
        [
            max(&self.lambdas),
            max(&self.gammas),
            max(&self.temperatures),
        ]
    }

    /// All grid points, ordered by site label, then lambda, gamma, temperature.
    pub fn points(&self) -> Vec<SimulationPoint> {
        let mut out = Vec::with_capacity(self.len());
        for &j in &self.sites {
            for &lambda in &self.lambdas {
                for &gamma in &self.gammas {
                    for &temperature in &self.temperatures {
                        out.push(SimulationPoint {
                            j,
                            lambda,
                            gamma,
                            temperature,
                        });
                    }
                }
            }
        }
        out
    }

    /// Parses the TOML grid file format:
    ///
    /// ```toml
    /// lambdas = [10, 160, 310]
    /// gammas = [25, 150, 300]
    /// temperatures = [30, 170, 310]
    /// sites = [0, 1]
    /// ```
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let grid: ParameterGrid =
            toml::from_str(text).map_err(|e| Error::Parse(format!("grid file: {e}")))?;
        grid.validate()?;
        Ok(grid)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("grid serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }
}

/// The full parameter grid: 11 reorganization energies, 12 bath frequencies,
/// 15 temperatures and both initial-excitation labels (3960 points).
pub fn paper_grid() -> ParameterGrid {
    let lambdas = (0..11).map(|i| 10.0 + 30.0 * i as f64).collect();
    let gammas = (1..=12).map(|i| 25.0 * i as f64).collect();
    let temperatures = (0..15).map(|i| 30.0 + 20.0 * i as f64).collect();
    ParameterGrid {
        lambdas,
        gammas,
        temperatures,
        sites: vec![0, 1],
    }
}

/// The reduced 3x3x3x2 grid used for quick end-to-end runs.
pub fn desk_grid() -> ParameterGrid {
    ParameterGrid {
        lambdas: vec![10.0, 160.0, 310.0],
        gammas: vec![25.0, 150.0, 300.0],
        temperatures: vec![30.0, 170.0, 310.0],
        sites: vec![0, 1],
    }
}
