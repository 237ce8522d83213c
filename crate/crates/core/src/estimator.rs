//! Pseudorange positioning by iterated (weighted) least squares.
//!
//! Each iteration linearizes the pseudorange model around the current state
//! `(position, clock bias)`. Row `j` of the design matrix holds the unit
//! vector from the state toward satellite `j` and a trailing `1` for the
//! clock; the residual is measured minus predicted pseudorange. Because the
//! predicted range *shrinks* as the receiver moves toward a satellite, the
//! position step is the negated spatial part of the least-squares solution.

use nalgebra::{DMatrix, DVector, Matrix4, Vector4};

use crate::ephemeris::look_angles;
use crate::error::{Error, Result};
use crate::geo::{EcefPoint, EnuPoint, LocalFrame};
use crate::measurement::SimulatedMeasurement;

pub const MIN_SATELLITES: usize = 4;

/// Iteration limits for the Gauss-Newton loop.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverSettings {
    pub max_iterations: u32,
    /// Convergence threshold on the norm of the 4-element update (m).
    pub tolerance: f64,
    /// Normal matrices worse conditioned than this are rejected.
    pub max_condition: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            max_iterations: 20,
            tolerance: 1e-4,
            max_condition: 1e12,
        }
    }
}

/// Estimated receiver state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PositionSolution {
    pub position: EnuPoint,
    /// Receiver clock bias times the speed of light (m).
    pub clock_bias: f64,
    pub iterations: u32,
    pub converged: bool,
    pub satellite_count: usize,
}

impl PositionSolution {
    /// A starting state for the solver.
    pub fn initial(position: EnuPoint, clock_bias: f64) -> Self {
        PositionSolution {
            position,
            clock_bias,
            iterations: 0,
            converged: false,
            satellite_count: 0,
        }
    }

    pub fn ecef(&self, frame: &LocalFrame) -> EcefPoint {
        frame.to_ecef(&self.position)
    }
}

/// `|sat − position| + clock_bias`, with the satellite in the same frame as
/// the state.
pub fn predicted_pseudorange(state: &PositionSolution, sat: &EnuPoint) -> f64 {
    state.position.distance(sat) + state.clock_bias
}

/// Linearized system at one iterate.
#[derive(Clone, Debug, PartialEq)]
pub struct GeometrySystem {
    /// `m × 4`: toward-satellite unit vectors and a clock column of ones.
    pub design: DMatrix<f64>,
    /// Measured minus predicted pseudorange.
    pub residual: DVector<f64>,
}

pub fn build_geometry_system(state: &PositionSolution, meas: &[SimulatedMeasurement]) -> Result<GeometrySystem> {
    if meas.len() < MIN_SATELLITES {
        return Err(Error::InsufficientSatellites(meas.len()));
    }
    let m = meas.len();
    let mut design = DMatrix::zeros(m, 4);
    let mut residual = DVector::zeros(m);
    for (j, obs) in meas.iter().enumerate() {
        let toward = obs.sat_enu - state.position;
        let range = toward.norm();
        let unit = toward / range;
        design[(j, 0)] = unit.x;
        design[(j, 1)] = unit.y;
        design[(j, 2)] = unit.z;
        design[(j, 3)] = 1.0;
        residual[j] = obs.pseudorange - (range + state.clock_bias);
    }
    Ok(GeometrySystem { design, residual })
}

fn normal_equations(system: &GeometrySystem, weights: Option<&[f64]>) -> (Matrix4<f64>, Vector4<f64>) {
    let mut normal = Matrix4::zeros();
    let mut rhs = Vector4::zeros();
    for j in 0..system.design.nrows() {
        let row = Vector4::new(
            system.design[(j, 0)],
            system.design[(j, 1)],
            system.design[(j, 2)],
            system.design[(j, 3)],
        );
        let w = weights.map_or(1.0, |w| w[j]);
        normal += row * row.transpose() * w;
        rhs += row * (w * system.residual[j]);
    }
    (normal, rhs)
}

fn condition_number(normal: &Matrix4<f64>) -> f64 {
    let eig = normal.symmetric_eigenvalues();
    let max = eig.max();
    let min = eig.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Gauss-Newton with optional diagonal weights.
pub fn solve_with(
    meas: &[SimulatedMeasurement],
    weights: Option<&[f64]>,
    init: &PositionSolution,
    settings: &SolverSettings,
) -> Result<PositionSolution> {
    if meas.len() < MIN_SATELLITES {
        return Err(Error::InsufficientSatellites(meas.len()));
    }
    if let Some(w) = weights {
        if w.len() != meas.len() {
            return Err(Error::Validation(format!(
                "{} weights for {} measurements",
                w.len(),
                meas.len()
            )));
        }
        if let Some((obs, &weight)) = meas.iter().zip(w).find(|(_, &w)| !(w > 0.0) || !w.is_finite()) {
            return Err(Error::NonPositiveWeight {
                sat_id: obs.sat_id.clone(),
                weight,
            });
        }
    }

    let mut state = PositionSolution {
        satellite_count: meas.len(),
        converged: false,
        iterations: 0,
        ..*init
    };
    for iteration in 1..=settings.max_iterations {
        let system = build_geometry_system(&state, meas)?;
        let (normal, rhs) = normal_equations(&system, weights);
        let cond = condition_number(&normal);
        if !(cond <= settings.max_condition) {
            return Err(Error::SingularGeometry(cond));
        }
        let step = normal
            .cholesky()
            .ok_or(Error::SingularGeometry(cond))?
            .solve(&rhs);
        state.position = EnuPoint::new(
            state.position.east - step[0],
            state.position.north - step[1],
            state.position.up - step[2],
        );
        state.clock_bias += step[3];
        state.iterations = iteration;
        if step.norm() <= settings.tolerance {
            state.converged = true;
            break;
        }
    }
    Ok(state)
}

/// Ordinary least squares.
pub fn solve_ols(meas: &[SimulatedMeasurement], init: &PositionSolution) -> Result<PositionSolution> {
    solve_with(meas, None, init, &SolverSettings::default())
}

/// Weighted least squares with one positive weight per measurement.
pub fn solve_wls(meas: &[SimulatedMeasurement], weights: &[f64], init: &PositionSolution) -> Result<PositionSolution> {
    solve_with(meas, Some(weights), init, &SolverSettings::default())
}

/// Elevation floor used by [`elevation_weights`] (degrees).
pub const WEIGHT_ELEVATION_FLOOR: f64 = 5.0;

/// `sin²(max(elevation, 5°))` per measurement, elevation taken at
/// `receiver`.
pub fn elevation_weights(meas: &[SimulatedMeasurement], receiver: &EnuPoint) -> Vec<f64> {
    meas.iter()
        .map(|m| {
            let (el, _) = look_angles(&m.sat_enu, receiver);
            el.max(WEIGHT_ELEVATION_FLOOR).to_radians().sin().powi(2)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raytrace::ReceptionPath;

    fn sky(count: usize) -> Vec<EnuPoint> {
        (0..count)
            .map(|i| {
                let az = (i as f64 * 360.0 / count as f64 + 17.0).to_radians();
                let el = (15.0 + 70.0 * ((i * 5) % count) as f64 / count as f64).to_radians();
                let r = 2.25e7;
                EnuPoint::new(r * el.cos() * az.sin(), r * el.cos() * az.cos(), r * el.sin())
            })
            .collect()
    }

    fn measure(truth: &EnuPoint, clock: f64, sats: &[EnuPoint], extra: &[f64]) -> Vec<SimulatedMeasurement> {
        sats.iter()
            .enumerate()
            .map(|(i, s)| {
                let range = truth.distance(s);
                SimulatedMeasurement {
                    sat_id: format!("G{:02}", i + 1),
                    sat_position: EcefPoint::new(0.0, 0.0, 0.0),
                    sat_enu: *s,
                    pseudorange: range + clock + extra.get(i).copied().unwrap_or(0.0),
                    path: ReceptionPath::los(range),
                }
            })
            .collect()
    }

    #[test]
    fn predicted_range_adds_clock() {
        let sat = EnuPoint::new(0.0, 0.0, 2.0e7);
        let state = PositionSolution::initial(EnuPoint::default(), 0.0);
        assert_eq!(predicted_pseudorange(&state, &sat), 2.0e7);
        let state = PositionSolution::initial(EnuPoint::default(), 1000.0);
        assert_eq!(predicted_pseudorange(&state, &sat), 2.0e7 + 1000.0);
        let state = PositionSolution::initial(EnuPoint::new(3.0, 4.0, 0.0), 2.5);
        let sat = EnuPoint::new(3.0, 4.0 + 12.0, 5.0);
        // hand-computed: sqrt(12² + 5²) = 13
        assert_eq!(predicted_pseudorange(&state, &sat), 15.5);
    }

    #[test]
    fn zero_residual_at_truth_and_zenith_row() {
        let truth = EnuPoint::new(5.0, -3.0, 1.0);
        let mut sats = sky(5);
        sats[0] = EnuPoint::new(5.0, -3.0, 2.0e7);
        let meas = measure(&truth, 0.0, &sats, &[]);
        let sys = build_geometry_system(&PositionSolution::initial(truth, 0.0), &meas).unwrap();
        assert!(sys.residual.iter().all(|r| r.abs() < 1e-6));
        assert_eq!(sys.design.row(0).iter().copied().collect::<Vec<_>>(), vec![0.0, 0.0, 1.0, 1.0]);
        for j in 0..sys.design.nrows() {
            let n = sys.design.fixed_view::<1, 3>(j, 0).norm();
            assert!((n - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn three_satellites_are_insufficient() {
        let meas = measure(&EnuPoint::default(), 0.0, &sky(3), &[]);
        let init = PositionSolution::initial(EnuPoint::default(), 0.0);
        assert!(matches!(build_geometry_system(&init, &meas), Err(Error::InsufficientSatellites(3))));
        assert!(matches!(solve_ols(&meas, &init), Err(Error::InsufficientSatellites(3))));
    }

    #[test]
    fn exact_data_recovers_truth_and_clock() {
        let truth = EnuPoint::new(12.0, -40.0, 1.0);
        for clock in [0.0, 3.0e5] {
            let meas = measure(&truth, clock, &sky(8), &[]);
            let sol = solve_ols(&meas, &PositionSolution::initial(EnuPoint::default(), 0.0)).unwrap();
            assert!(sol.converged);
            assert!(sol.position.distance(&truth) < 1e-6, "{:?}", sol.position);
            assert!((sol.clock_bias - clock).abs() < 1e-6, "{}", sol.clock_bias);
            assert_eq!(sol.satellite_count, 8);
        }
    }

    #[test]
    fn coplanar_geometry_is_singular() {
        // all satellites on the horizon plane through the receiver
        let sats: Vec<EnuPoint> = (0..6)
            .map(|i| {
                let az = (i as f64 * 60.0).to_radians();
                EnuPoint::new(2.0e7 * az.sin(), 2.0e7 * az.cos(), 0.0)
            })
            .collect();
        let meas = measure(&EnuPoint::default(), 0.0, &sats, &[]);
        let err = solve_ols(&meas, &PositionSolution::initial(EnuPoint::default(), 0.0)).unwrap_err();
        assert!(matches!(err, Error::SingularGeometry(_)), "{err}");
    }

    #[test]
    fn unit_weights_match_ols() {
        let truth = EnuPoint::new(1.0, 2.0, 1.0);
        let meas = measure(&truth, 50.0, &sky(7), &[0.0, 25.0, 0.0, 0.0, 7.0]);
        let init = PositionSolution::initial(EnuPoint::default(), 0.0);
        let ols = solve_ols(&meas, &init).unwrap();
        let wls = solve_wls(&meas, &[1.0; 7], &init).unwrap();
        assert!(ols.position.distance(&wls.position) < 1e-9);
    }

    #[test]
    fn non_positive_weight_is_rejected() {
        let meas = measure(&EnuPoint::default(), 0.0, &sky(5), &[]);
        let init = PositionSolution::initial(EnuPoint::default(), 0.0);
        let err = solve_wls(&meas, &[1.0, 1.0, 0.0, 1.0, 1.0], &init).unwrap_err();
        assert!(matches!(err, Error::NonPositiveWeight { ref sat_id, .. } if sat_id == "G03"));
    }

    #[test]
    fn down_weighting_the_nlos_satellite_helps() {
        let truth = EnuPoint::new(0.0, 0.0, 1.0);
        let mut extra = vec![0.0; 8];
        extra[2] = 40.0;
        let meas = measure(&truth, 0.0, &sky(8), &extra);
        let init = PositionSolution::initial(EnuPoint::default(), 0.0);
        let equal = solve_ols(&meas, &init).unwrap();
        let mut w = vec![1.0; 8];
        w[2] = 1e-6;
        let weighted = solve_wls(&meas, &w, &init).unwrap();
        let err2d = |p: &EnuPoint| (p.east - truth.east).hypot(p.north - truth.north);
        assert!(err2d(&weighted.position) < err2d(&equal.position));
    }

    #[test]
    fn elevation_weights_follow_sin_squared() {
        let sats = vec![
            EnuPoint::new(0.0, 0.0, 2.0e7),
            EnuPoint::new(2.0e7, 0.0, 0.0),
            EnuPoint::new(0.0, 2.0e7, 2.0e7),
            EnuPoint::new(0.0, -2.0e7, -1.0e6),
        ];
        let meas = measure(&EnuPoint::default(), 0.0, &sats, &[]);
        let w = elevation_weights(&meas, &EnuPoint::default());
        let floor = 5.0_f64.to_radians().sin().powi(2);
        assert!((w[0] - 1.0).abs() < 1e-12);
        assert!((w[1] - floor).abs() < 1e-12);
        assert!((w[2] - 0.5).abs() < 1e-12);
        assert!((w[3] - floor).abs() < 1e-12);
    }
}
