use nalgebra::{DMatrix, DVector};

use super::{build_generator, DensityMatrix, LindbladGenerator, TimeGrid, Trajectory, C64};
use crate::error::{Error, Result};
use crate::exciton::{SimulationPoint, SystemSpec};

/// `|s><s|` for the site selected by `point.j`.
pub fn initial_state(sys: &SystemSpec, point: &SimulationPoint) -> Result<DensityMatrix> {
    Ok(DensityMatrix::pure_site(sys.n_sites, sys.initial_site(point.j)?))
}

/// Exciton-basis Gibbs state written in the site basis.
pub fn gibbs_state(gen: &LindbladGenerator) -> DensityMatrix {
    let p = gen.gibbs_populations();
    let n = p.len();
    let diag = DMatrix::from_fn(n, n, |a, b| if a == b { C64::new(p[a], 0.0) } else { C64::new(0.0, 0.0) });
    DensityMatrix(gen.to_site(&diag))
}

/// Propagates the initial excitation of `point` over `grid`.
pub fn propagate(sys: &SystemSpec, point: &SimulationPoint, grid: &TimeGrid) -> Result<Trajectory> {
    let gen = build_generator(sys, point)?;
    propagate_with(&gen, initial_state(sys, point)?, *point, grid)
}

/// Propagates an arbitrary site-basis initial state with a prebuilt generator.
///
/// One step propagator `exp(L dt)` is computed per distinct step size in the
/// grid (two for the dual-rate grid) and applied repeatedly.
pub fn propagate_with(
    gen: &LindbladGenerator,
    rho0: DensityMatrix,
    point: SimulationPoint,
    grid: &TimeGrid,
) -> Result<Trajectory> {
    grid.validate()?;
    let n = gen.n_sites();
    if rho0.n_sites() != n {
        return Err(Error::Shape(format!(
            "initial state is {}x{}, generator has {n} sites",
            rho0.n_sites(),
            rho0.n_sites()
        )));
    }

    let mut cache: Vec<(f64, DMatrix<C64>)> = Vec::new();
    let mut states = Vec::with_capacity(grid.len());
    let mut v = DVector::from_column_slice(gen.to_exciton(&rho0.0).as_slice());
    states.push(rho0);

    for (step, w) in grid.times.windows(2).enumerate() {
        let dt = w[1] - w[0];
        let idx = match cache.iter().position(|(h, _)| *h == dt) {
            Some(i) => i,
            None => {
                cache.push((dt, step_propagator(gen, dt)));
                cache.len() - 1
            }
        };
        v = &cache[idx].1 * v;
        if v.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite { step: step + 1 });
        }
        let exc = DMatrix::from_column_slice(n, n, v.as_slice());
        states.push(DensityMatrix(gen.to_site(&exc)));
    }

    Ok(Trajectory {
        point,
        grid: grid.clone(),
        states,
    })
}

/// `exp(L dt)` with `dt` in fs.
pub(crate) fn step_propagator(gen: &LindbladGenerator, dt_fs: f64) -> DMatrix<C64> {
    let dt_ps = dt_fs * 1e-3;
    (&gen.matrix * C64::new(dt_ps, 0.0)).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_site() -> SystemSpec {
        SystemSpec::new("two", DMatrix::from_row_slice(2, 2, &[0.0, 100.0, 100.0, 200.0])).unwrap()
    }

    #[test]
    fn initial_state_is_exact() {
        let sys = SystemSpec::fmo();
        let p = SimulationPoint::new(1, 40.0, 75.0, 290.0).unwrap();
        let traj = propagate(&sys, &p, &TimeGrid::paper_until(50.0)).unwrap();
        assert_eq!(traj.states[0], DensityMatrix::pure_site(7, 5));
        assert_eq!(traj.states.len(), traj.grid.len());
    }

    #[test]
    fn two_site_relaxes_to_gibbs() {
        let sys = two_site();
        let p = SimulationPoint::new(0, 100.0, 100.0, 300.0).unwrap();
        let gen = build_generator(&sys, &p).unwrap();
        let traj = propagate(&sys, &p, &TimeGrid::paper()).unwrap();
        let gibbs = gibbs_state(&gen);
        let last = traj.states.last().unwrap();
        for i in 0..2 {
            assert!((last.0[(i, i)].re - gibbs.0[(i, i)].re).abs() < 1e-6);
        }
    }

    #[test]
    fn weak_coupling_keeps_exciton_populations() {
        let sys = SystemSpec::fmo();
        let p = SimulationPoint::new(0, 1e-8, 100.0, 300.0).unwrap();
        let gen = build_generator(&sys, &p).unwrap();
        let traj = propagate(&sys, &p, &TimeGrid::paper_until(1000.0)).unwrap();
        let p0 = gen.to_exciton(&traj.states[0].0);
        let p1 = gen.to_exciton(&traj.states.last().unwrap().0);
        for a in 0..7 {
            assert!((p0[(a, a)].re - p1[(a, a)].re).abs() < 1e-6);
        }
    }

    #[test]
    fn step_propagators_compose() {
        let sys = SystemSpec::fmo();
        let p = SimulationPoint::new(0, 310.0, 25.0, 310.0).unwrap();
        let gen = build_generator(&sys, &p).unwrap();
        let fine = step_propagator(&gen, 5.0);
        let coarse = step_propagator(&gen, 25.0);
        let five = &fine * &fine * &fine * &fine * &fine;
        assert!((five - coarse).camax() < 1e-10);
    }

    #[test]
    fn gibbs_state_is_stationary() {
        let sys = SystemSpec::fmo();
        let p = SimulationPoint::new(0, 160.0, 150.0, 170.0).unwrap();
        let gen = build_generator(&sys, &p).unwrap();
        let rho = gibbs_state(&gen);
        let traj = propagate_with(&gen, rho.clone(), p, &TimeGrid::new(vec![0.0, 25.0]).unwrap()).unwrap();
        assert!((&traj.states[1].0 - &rho.0).camax() < 1e-10);
    }

    #[test]
    fn fmo_site1_shows_quantum_beating() {
        let sys = SystemSpec::fmo();
        let p = SimulationPoint::new(0, 10.0, 300.0, 50.0).unwrap();
        let traj = propagate(&sys, &p, &TimeGrid::paper_until(1000.0)).unwrap();
        let pop: Vec<f64> = traj.states.iter().map(|s| s.0[(0, 0)].re).collect();
        let rises = pop.windows(2).filter(|w| w[1] > w[0] + 1e-9).count();
        let falls = pop.windows(2).filter(|w| w[1] < w[0] - 1e-9).count();
        assert!(rises > 0 && falls > 0, "site-1 population is monotone");
    }
}
