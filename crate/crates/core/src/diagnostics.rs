//! A-posteriori checks that certify a computed torus without being needed by
//! the iteration: translation averages in the frame basis, twist, parameter
//! non-degeneracy, Lagrangian trends and an independent orbit oracle.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;
use crate::fourier::{FourierSeries, TorusEmbedding};
use crate::geometry::{self, PresymplecticCheck, PresymplecticStructure};
use crate::linalg;
use crate::models::MapFamily;
use crate::newton::{invariance_error, StepReport, RANK_RTOL};
use crate::reducibility::{BlockResiduals, ReducedFrame, TangentFrame};

/// Floor of the tolerance used to call the action-block averages zero.
pub const VANISHING_FLOOR: f64 = 1e-9;

/// Average translation `mu = avg((f_lambda - f_0) o K)` and its components in
/// the frame basis `{X, J^{-1} Y, Z}`.
#[derive(Debug, Clone, Serialize)]
pub struct VanishingReport {
    pub mu_bar: Vec<f64>,
    /// `avg_theta M(theta)^{-1} mu_bar`, ordered `(x, y, z)`.
    pub components: Vec<f64>,
    /// Largest `|component|` over the action block.
    pub action_block: f64,
    pub tolerance: f64,
    pub vanishes: bool,
}

/// `error_norm` is the invariance error of `(K, lambda)`; it widens the
/// tolerance to `max(1e-9, 10 ||e|| sup ||M^{-1}||)`.
pub fn vanishing_average(
    k: &TorusEmbedding,
    f: &dyn MapFamily,
    lambda: &[f64],
    frame: &TangentFrame,
    error_norm: f64,
) -> Result<VanishingReport> {
    let d = k.d();
    let dim = k.state_dim();
    let values = k.to_grid(frame.dims())?;
    let zero = vec![0.0; f.param_dim()];
    let np = values.num_points();

    let diffs: Vec<Vec<f64>> = (0..np)
        .into_par_iter()
        .map(|p| {
            let u = values.point(p);
            let a = f.eval(u, lambda);
            let b = f.eval(u, &zero);
            a.iter().zip(&b).map(|(x, y)| x - y).collect()
        })
        .collect();
    let mut mu_bar = vec![0.0; dim];
    for row in &diffs {
        for (acc, v) in mu_bar.iter_mut().zip(row) {
            *acc += v;
        }
    }
    mu_bar.iter_mut().for_each(|v| *v /= np as f64);

    let mu = DVector::from_column_slice(&mu_bar);
    let mut components = vec![0.0; dim];
    let mut frame_norm = 0.0f64;
    for p in 0..np {
        let m_inv = frame.m_inv.matrix_at(p);
        frame_norm = frame_norm.max(linalg::norm_inf(&m_inv));
        for (acc, v) in components.iter_mut().zip((&m_inv * &mu).iter()) {
            *acc += v;
        }
    }
    components.iter_mut().for_each(|v| *v /= np as f64);

    let action_block = components[d..2 * d].iter().map(|v| v.abs()).fold(0.0, f64::max);
    let tolerance = VANISHING_FLOOR.max(10.0 * error_norm * frame_norm);
    Ok(VanishingReport {
        mu_bar,
        components,
        action_block,
        tolerance,
        vanishes: action_block <= tolerance,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct TwistReport {
    /// `avg S`, row-major `d x d`.
    pub avg_s: Vec<f64>,
    pub determinant: f64,
    /// Ratio of extreme singular values; infinite when singular.
    pub condition: f64,
    pub singular: bool,
}

pub fn twist_matrix(frame: &ReducedFrame) -> TwistReport {
    let d = frame.d;
    let avg_s = frame.s.average();
    let m = DMatrix::from_row_slice(d, d, &avg_s);
    let sv = linalg::singular_values(&m);
    let (hi, lo) = (sv[0], sv[sv.len() - 1]);
    let singular = lo <= RANK_RTOL * hi.max(1.0);
    TwistReport {
        avg_s,
        determinant: m.determinant(),
        condition: if singular { f64::INFINITY } else { hi / lo },
        singular,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct NondegeneracyReport {
    pub active_parameters: usize,
    pub rank_avg_lambda: usize,
    pub sigma_min_avg_lambda: f64,
    pub cond_v: f64,
    /// Sup of `|Q M - V|` over the grid.
    pub qm_residual: f64,
    pub lagrangian_norm: f64,
}

impl NondegeneracyReport {
    /// Full rank in the active parameters.
    pub fn full_rank(&self) -> bool {
        self.rank_avg_lambda == self.active_parameters
    }
}

pub fn nondegeneracy_report(
    frame: &ReducedFrame,
    k: &TorusEmbedding,
    s: &PresymplecticStructure,
    active: &[usize],
) -> Result<NondegeneracyReport> {
    let dim = 2 * frame.d + frame.n;
    let avg = DMatrix::from_row_slice(dim, frame.m_params, &frame.lambda.average());
    let sub = DMatrix::from_fn(dim, active.len(), |i, j| avg[(i, active[j])]);
    let sv = linalg::singular_values(&sub);
    Ok(NondegeneracyReport {
        active_parameters: active.len(),
        rank_avg_lambda: linalg::rank(&sub, RANK_RTOL),
        sigma_min_avg_lambda: sv.last().copied().unwrap_or(0.0),
        cond_v: frame.cond_v(),
        qm_residual: frame.here.qm_residual,
        lagrangian_norm: geometry::lagrangian_defect(k, s)?.norm,
    })
}

/// `||L_m|| / ||e_m||` per step, the quantity expected to stay bounded.
pub fn lagrangian_trend(reports: &[StepReport]) -> Vec<f64> {
    reports
        .iter()
        .map(|r| r.lagrangian_norm / r.err_before)
        .collect()
}

/// Result of checking `K` against `f_lambda` away from the solver's grids.
#[derive(Debug, Clone, Serialize)]
pub struct Verification {
    pub samples: usize,
    /// `max |f_lambda(K(theta)) - K(theta + omega)|` at random phases.
    pub off_grid_sup: f64,
    pub orbit_length: usize,
    /// `max_m |f^m(K(theta_0)) - K(theta_0 + m omega)|` between lifts.
    pub shadowing: f64,
}

/// Direct summation of `K` at `samples` random phases and along one orbit of
/// length `orbit_length` started at a random phase.
pub fn verify_torus(
    k: &TorusEmbedding,
    f: &dyn MapFamily,
    lambda: &[f64],
    omega: &[f64],
    samples: usize,
    orbit_length: usize,
    seed: u64,
) -> Verification {
    let r = k.torus_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phases: Vec<Vec<f64>> = (0..samples)
        .map(|_| (0..r).map(|_| rng.gen::<f64>()).collect())
        .collect();
    let off_grid_sup = phases
        .par_iter()
        .map(|theta| {
            let image = f.eval(&k.evaluate(theta), lambda);
            let ahead: Vec<f64> = theta.iter().zip(omega).map(|(t, w)| t + w).collect();
            let target = k.evaluate(&ahead);
            (0..image.len())
                .map(|i| {
                    let mut e = image[i] - target[i];
                    if k.is_angle_row(i) {
                        e -= e.round();
                    }
                    e.abs()
                })
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max);

    let theta0: Vec<f64> = (0..r).map(|_| rng.gen::<f64>()).collect();
    let mut u = k.evaluate(&theta0);
    let mut shadowing = 0.0f64;
    for m in 1..=orbit_length {
        u = f.eval(&u, lambda);
        let theta: Vec<f64> = theta0
            .iter()
            .zip(omega)
            .map(|(t, w)| t + m as f64 * w)
            .collect();
        let target = k.evaluate(&theta);
        let gap = u.iter().zip(&target).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        shadowing = shadowing.max(gap);
    }
    Verification {
        samples,
        off_grid_sup,
        orbit_length,
        shadowing,
    }
}

/// Cauchy-type bound `||d_axis u||_{rho - delta} <= ||u||_rho / (e delta)`
/// evaluated for the periodic part of `K`: returns `(actual, bound)` for the
/// worst axis. A diagnostic of how much analyticity strip the torus carries.
pub fn cauchy_check(k: &TorusEmbedding, rho: f64, delta: f64) -> Result<(f64, f64)> {
    let full = k.periodic().analytic_norm(rho)?;
    let bound = full / (std::f64::consts::E * delta);
    let mut actual = 0.0f64;
    for axis in 0..k.torus_dim() {
        let der: FourierSeries = k.periodic().derivative(axis);
        actual = actual.max(der.analytic_norm(rho - delta)?);
    }
    Ok((actual, bound))
}

/// Knobs for [`run_suite`].
#[derive(Debug, Clone, Serialize)]
pub struct SuiteOptions {
    pub samples: usize,
    pub orbit_length: usize,
    pub flux_points: usize,
    pub presymplectic_samples: usize,
    pub seed: u64,
}

/// Everything known about a torus without iterating.
#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticReport {
    pub error_norm: f64,
    pub error_sup: f64,
    pub lagrangian_norm: f64,
    pub blocks: BlockResiduals,
    pub vanishing: VanishingReport,
    pub twist: TwistReport,
    pub nondegeneracy: NondegeneracyReport,
    /// Flux of `f_0` over the coordinate loops of the torus.
    pub reference_flux: Vec<f64>,
    pub presymplectic: PresymplecticCheck,
    pub verification: Verification,
}

/// Tolerances a verified torus must meet.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Thresholds {
    pub off_grid: f64,
    pub shadowing: f64,
    pub presymplectic: f64,
    pub flux: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            off_grid: 1e-10,
            shadowing: 1e-6,
            presymplectic: 1e-11,
            flux: 1e-10,
        }
    }
}

impl DiagnosticReport {
    /// Names of the failed checks; empty when the torus is certified.
    pub fn failures(&self, t: &Thresholds, exact_reference: bool) -> Vec<&'static str> {
        let mut out = Vec::new();
        if !(self.verification.off_grid_sup <= t.off_grid) {
            out.push("off_grid");
        }
        if !(self.verification.shadowing <= t.shadowing) {
            out.push("shadowing");
        }
        if !self.presymplectic.passes(t.presymplectic) {
            out.push("presymplectic");
        }
        if exact_reference && !self.reference_flux.iter().all(|v| v.abs() <= t.flux) {
            out.push("flux");
        }
        out
    }
}

/// Builds the frame of `K` and runs every a-posteriori check.
pub fn run_suite(
    k: &TorusEmbedding,
    f: &dyn MapFamily,
    lambda: &[f64],
    s: &PresymplecticStructure,
    omega: &[f64],
    active: &[usize],
    options: &SuiteOptions,
) -> Result<DiagnosticReport> {
    let dims = k.truncation().padded_grid();
    let e = invariance_error(k, f, lambda, omega, &dims)?;
    let frame = ReducedFrame::build(k, f, lambda, s, omega, &dims)?;
    let nondegeneracy = nondegeneracy_report(&frame, k, s, active)?;
    Ok(DiagnosticReport {
        error_norm: e.norm,
        error_sup: e.sup,
        lagrangian_norm: nondegeneracy.lagrangian_norm,
        blocks: frame.blocks,
        vanishing: vanishing_average(k, f, lambda, &frame.here, e.norm)?,
        twist: twist_matrix(&frame),
        nondegeneracy,
        reference_flux: geometry::flux(f, &vec![0.0; f.param_dim()], s, k, options.flux_points)?,
        presymplectic: geometry::verify_presymplectic(
            f,
            lambda,
            s,
            options.presymplectic_samples,
            options.seed,
        ),
        verification: verify_torus(
            k,
            f,
            lambda,
            omega,
            options.samples,
            options.orbit_length,
            options.seed,
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier::Truncation;
    use crate::models::CoupledStandardFamily;
    use num_complex::Complex64;

    fn golden_pair() -> Vec<f64> {
        vec![(5f64.sqrt() - 1.0) / 2.0, 2f64.sqrt() - 1.0]
    }

    fn flat(radius: usize) -> TorusEmbedding {
        let w = golden_pair();
        TorusEmbedding::flat(1, 1, Truncation::new(vec![radius, radius]), &[w[0]], 0.0).unwrap()
    }

    #[test]
    fn zero_parameters_give_zero_average() {
        let k = flat(4);
        let s = PresymplecticStructure::standard(1, 1);
        let f = CoupledStandardFamily::new(0.3, 0.1, golden_pair()[1]);
        let frame = TangentFrame::build(&k, &s, &k.truncation().padded_grid()).unwrap();
        let rep = vanishing_average(&k, &f, &[0.0; 3], &frame, 0.0).unwrap();
        assert!(rep.components.iter().all(|&c| c == 0.0));
        assert!(rep.vanishes);
    }

    #[test]
    fn action_translation_shows_in_frame_component() {
        // flat frame: M = diag(1, -1, 1) for the standard J, and the action
        // translation moves both x and y by lambda_y
        let k = flat(4);
        let s = PresymplecticStructure::standard(1, 1);
        let f = CoupledStandardFamily::integrable(golden_pair()[1]);
        let frame = TangentFrame::build(&k, &s, &k.truncation().padded_grid()).unwrap();
        let rep = vanishing_average(&k, &f, &[0.0, 0.01, 0.0], &frame, 0.0).unwrap();
        assert!((rep.mu_bar[0] - 0.01).abs() < 1e-15);
        assert!((rep.mu_bar[1] - 0.01).abs() < 1e-15);
        assert!((rep.components[1] + 0.01).abs() < 1e-15);
        assert!(!rep.vanishes);
    }

    #[test]
    fn integrable_twist_is_unit_in_modulus() {
        let k = flat(4);
        let s = PresymplecticStructure::standard(1, 1);
        let w = golden_pair();
        let f = CoupledStandardFamily::integrable(w[1]);
        let frame = ReducedFrame::build(&k, &f, &[0.0; 3], &s, &w, &k.truncation().padded_grid())
            .unwrap();
        let t = twist_matrix(&frame);
        assert!((t.avg_s[0] + 1.0).abs() < 1e-14);
        assert!(!t.singular);
        assert!((t.condition - 1.0).abs() < 1e-14);
    }

    #[test]
    fn shear_free_map_has_singular_twist() {
        let w = golden_pair();
        let f = crate::models::FiniteDifferenceFamily::new("rotation", 1, 1, 3, move |u, l, out| {
            out[0] = u[0] + w[0] + l[0];
            out[1] = u[1] + l[1];
            out[2] = u[2] + w[1] + l[2];
        });
        let k = flat(3);
        let s = PresymplecticStructure::standard(1, 1);
        let frame = ReducedFrame::build(&k, &f, &[0.0; 3], &s, &golden_pair(), &k.truncation().padded_grid())
            .unwrap();
        let t = twist_matrix(&frame);
        assert!(t.singular);
        assert_eq!(t.condition, f64::INFINITY);
    }

    #[test]
    fn translation_family_rank() {
        let k = flat(4);
        let s = PresymplecticStructure::standard(1, 1);
        let w = golden_pair();
        let f = CoupledStandardFamily::new(0.3, 0.1, w[1]);
        let frame = ReducedFrame::build(&k, &f, &[0.0; 3], &s, &w, &k.truncation().padded_grid())
            .unwrap();
        let full = nondegeneracy_report(&frame, &k, &s, &[0, 1, 2]).unwrap();
        assert_eq!(full.rank_avg_lambda, 3);
        assert!(full.full_rank());
        assert_eq!(full.lagrangian_norm, 0.0);
        let one = nondegeneracy_report(&frame, &k, &s, &[1]).unwrap();
        assert_eq!(one.rank_avg_lambda, 1);
    }

    #[test]
    fn reports_are_phase_invariant() {
        let mut k = flat(6);
        k.periodic_mut().set_coeff(1, &[1, 0], Complex64::new(0.01, 0.02));
        k.periodic_mut().set_coeff(1, &[-1, 0], Complex64::new(0.01, -0.02));
        let s = PresymplecticStructure::standard(1, 1);
        let w = golden_pair();
        let f = CoupledStandardFamily::new(0.3, 0.1, w[1]);
        let dims = k.truncation().padded_grid();
        let lam = [0.001, 0.002, 0.0];
        // shift by a whole grid cell so both grids see the same points
        let cell: Vec<f64> = dims.iter().map(|&g| 3.0 / g as f64).collect();
        let moved = k.shift(&cell);
        let a = ReducedFrame::build(&k, &f, &lam, &s, &w, &dims).unwrap();
        let b = ReducedFrame::build(&moved, &f, &lam, &s, &w, &dims).unwrap();
        let (ta, tb) = (twist_matrix(&a), twist_matrix(&b));
        assert!((ta.avg_s[0] - tb.avg_s[0]).abs() < 1e-12);
        let va = vanishing_average(&k, &f, &lam, &a.here, 0.0).unwrap();
        let vb = vanishing_average(&moved, &f, &lam, &b.here, 0.0).unwrap();
        for (x, y) in va.components.iter().zip(&vb.components) {
            assert!((x - y).abs() < 1e-12);
        }
        let na = nondegeneracy_report(&a, &k, &s, &[0, 1, 2]).unwrap();
        let nb = nondegeneracy_report(&b, &moved, &s, &[0, 1, 2]).unwrap();
        assert!((na.sigma_min_avg_lambda - nb.sigma_min_avg_lambda).abs() < 1e-12);
        assert!((na.lagrangian_norm - nb.lagrangian_norm).abs() < 1e-12);
    }

    #[test]
    fn exact_torus_verifies() {
        let w = golden_pair();
        let k = flat(3);
        let f = CoupledStandardFamily::integrable(w[1]);
        let v = verify_torus(&k, &f, &[0.0; 3], &w, 100, 1000, 5);
        assert!(v.off_grid_sup < 1e-14);
        assert!(v.shadowing < 1e-10, "{}", v.shadowing);
    }

    #[test]
    fn cauchy_bound_holds_for_a_single_mode() {
        let mut k = flat(8);
        k.periodic_mut().set_coeff(1, &[5, 0], Complex64::new(0.1, 0.0));
        k.periodic_mut().set_coeff(1, &[-5, 0], Complex64::new(0.1, 0.0));
        let (actual, bound) = cauchy_check(&k, 0.2, 0.05).unwrap();
        assert!(actual <= bound, "{actual} > {bound}");
    }
}
