use nalgebra::{DMatrix, DVector};

use super::C64;
use crate::error::{Error, Result};
use crate::exciton::{cm1_to_angular_frequency, thermal_energy, SimulationPoint, SystemSpec};

/// Downhill rate is `RATE_PREFACTOR * J(w) * (1 + n(w))`, converted to rad/ps.
/// Scaling it rescales every relaxation and dephasing time uniformly.
pub const RATE_PREFACTOR: f64 = 2.0;

/// Minimum exciton energy gap accepted by the secular construction, cm^-1.
const DEGENERACY_GAP: f64 = 1e-9;

/// Drude-Lorentz spectral density `2 lambda gamma w / (w^2 + gamma^2)`, cm^-1.
pub fn spectral_density(omega: f64, lambda: f64, gamma: f64) -> f64 {
    2.0 * lambda * gamma * omega / (omega * omega + gamma * gamma)
}

/// Bose-Einstein occupation `1 / (exp(w / kT) - 1)` with `w` in cm^-1.
pub fn bose_occupation(omega: f64, temperature: f64) -> Result<f64> {
    if omega == 0.0 {
        return Err(Error::Invalid(
            "bose occupation diverges at zero frequency".into(),
        ));
    }
    let kt = thermal_energy(temperature)?;
    Ok(1.0 / (omega / kt).exp_m1())
}

/// `J(w) (1 + n(w))` for `w != 0`, evaluated without cancellation for `w < 0`
/// where it equals `J(|w|) n(|w|)`.
fn emission_weight(omega: f64, lambda: f64, gamma: f64, kt: f64) -> f64 {
    let x = omega.abs() / kt;
    let j = spectral_density(omega.abs(), lambda, gamma);
    if omega > 0.0 {
        // 1 + n = 1 / (1 - exp(-x))
        j / -(-x).exp_m1()
    } else {
        j / x.exp_m1()
    }
}

/// Lindblad generator in the exciton eigenbasis.
///
/// `matrix` acts on column-stacked exciton-basis density matrices,
/// `vec(rho)[a + n b] = rho[a, b]`, in rad/ps.
#[derive(Debug, Clone)]
pub struct LindbladGenerator {
    pub dimension: usize,
    pub matrix: DMatrix<C64>,
    /// Ascending exciton energies, cm^-1.
    pub exciton_energies: Vec<f64>,
    /// Columns are exciton eigenvectors in the site basis.
    pub exciton_vectors: DMatrix<f64>,
    /// `rates[(a, b)]` is the transfer rate b -> a in rad/ps (zero diagonal).
    pub rates: DMatrix<f64>,
    /// Pure-dephasing rate of each exciton projector, rad/ps.
    pub dephasing_rate: f64,
    /// k_B T, cm^-1.
    pub thermal_energy: f64,
}

impl LindbladGenerator {
    pub fn n_sites(&self) -> usize {
        self.exciton_energies.len()
    }

    /// Site-basis matrix to exciton basis: `U^T rho U`.
    pub fn to_exciton(&self, rho: &DMatrix<C64>) -> DMatrix<C64> {
        let u = self.exciton_vectors.map(|x| C64::new(x, 0.0));
        u.transpose() * rho * u
    }

    /// Exciton-basis matrix to site basis: `U rho U^T`.
    pub fn to_site(&self, rho: &DMatrix<C64>) -> DMatrix<C64> {
        let u = self.exciton_vectors.map(|x| C64::new(x, 0.0));
        &u * rho * u.transpose()
    }

    /// `d rho / dt` for an exciton-basis density matrix.
    pub fn apply(&self, rho: &DMatrix<C64>) -> DMatrix<C64> {
        let n = self.n_sites();
        let v = DVector::from_column_slice(rho.as_slice());
        let out = &self.matrix * v;
        DMatrix::from_column_slice(n, n, out.as_slice())
    }

    /// `d rho / dt` for a site-basis density matrix.
    pub fn apply_site(&self, rho: &DMatrix<C64>) -> DMatrix<C64> {
        self.to_site(&self.apply(&self.to_exciton(rho)))
    }

    /// Gibbs populations `exp(-E_a / kT) / Z` of the exciton states.
    pub fn gibbs_populations(&self) -> Vec<f64> {
        let e0 = self.exciton_energies[0];
        let w: Vec<f64> = self
            .exciton_energies
            .iter()
            .map(|e| (-(e - e0) / self.thermal_energy).exp())
            .collect();
        let z: f64 = w.iter().sum();
        w.into_iter().map(|x| x / z).collect()
    }
}

/// `vec(A rho B) = (B^T kron A) vec(rho)` accumulated with weight `scale`.
fn add_sandwich(
    sup: &mut DMatrix<C64>,
    left: &DMatrix<C64>,
    right: &DMatrix<C64>,
    scale: C64,
) {
    let n = left.nrows();
    for b in 0..n {
        for a in 0..n {
            let row = a + n * b;
            for d in 0..n {
                let rb = right[(d, b)];
                if rb == C64::new(0.0, 0.0) {
                    continue;
                }
                for c in 0..n {
                    let la = left[(a, c)];
                    if la == C64::new(0.0, 0.0) {
                        continue;
                    }
                    sup[(row, c + n * d)] += scale * la * rb;
                }
            }
        }
    }
}

fn add_dissipator(sup: &mut DMatrix<C64>, jump: &DMatrix<C64>, rate: f64) {
    let n = jump.nrows();
    let eye = DMatrix::<C64>::identity(n, n);
    let jd = jump.adjoint();
    let jdj = &jd * jump;
    let r = C64::new(rate, 0.0);
    let half = C64::new(-0.5 * rate, 0.0);
    add_sandwich(sup, jump, &jd, r);
    add_sandwich(sup, &jdj, &eye, half);
    add_sandwich(sup, &eye, &jdj, half);
}

fn projector(n: usize, a: usize, b: usize) -> DMatrix<C64> {
    let mut m = DMatrix::zeros(n, n);
    m[(a, b)] = C64::new(1.0, 0.0);
    m
}

/// Diagonalizes `h` with ascending eigenvalues and a fixed eigenvector sign
/// (largest-magnitude component positive).
fn sorted_eigen(h: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = h.nrows();
    let eig = h.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let energies = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        let v = eig.eigenvectors.column(i);
        let pivot = v
            .iter()
            .copied()
            .max_by(|x, y| x.abs().total_cmp(&y.abs()))
            .unwrap_or(1.0);
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        vectors.set_column(col, &(v * sign));
    }
    (energies, vectors)
}

/// Builds the secular LTLME generator for one parameter point.
pub fn build_generator(sys: &SystemSpec, point: &SimulationPoint) -> Result<LindbladGenerator> {
    point.validate()?;
    let n = sys.n_sites;
    let kt = thermal_energy(point.temperature)?;
    let (energies, vectors) = sorted_eigen(&sys.hamiltonian);
    for a in 1..n {
        if energies[a] - energies[a - 1] < DEGENERACY_GAP {
            return Err(Error::Degenerate(a - 1, a));
        }
    }

    let dim = n * n;
    let mut sup = DMatrix::<C64>::zeros(dim, dim);

    // Coherent part: -i[H, rho] with H diagonal in the exciton basis.
    for b in 0..n {
        for a in 0..n {
            let w = cm1_to_angular_frequency(energies[a] - energies[b]);
            sup[(a + n * b, a + n * b)] += C64::new(0.0, -w);
        }
    }

    let mut rates = DMatrix::zeros(n, n);
    for b in 0..n {
        for a in 0..n {
            if a == b {
                continue;
            }
            // Energy released when going b -> a.
            let omega = energies[b] - energies[a];
            let rate = cm1_to_angular_frequency(
                RATE_PREFACTOR * emission_weight(omega, point.lambda, point.gamma, kt),
            );
            rates[(a, b)] = rate;
            add_dissipator(&mut sup, &projector(n, a, b), rate);
        }
    }

    // Zero-frequency limit: J(w)(1 + n(w)) -> 2 lambda kT / gamma.
    let dephasing_rate =
        cm1_to_angular_frequency(RATE_PREFACTOR * 2.0 * point.lambda * kt / point.gamma);
    for a in 0..n {
        add_dissipator(&mut sup, &projector(n, a, a), dephasing_rate);
    }

    Ok(LindbladGenerator {
        dimension: dim,
        matrix: sup,
        exciton_energies: energies,
        exciton_vectors: vectors,
        rates,
        dephasing_rate,
        thermal_energy: kt,
    })
}
