//! Quasi-Newton iteration for the invariance equation
//! `f_lambda(K(theta)) = K(theta + omega)`.

use std::time::Instant;

use log::{debug, info, warn};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cohomology::{self, Denominators};
use crate::diophantine::Frequency;
use crate::error::{BestIterate, Error, Result};
use crate::fourier::{FourierSeries, GridField, TorusEmbedding, Truncation};
use crate::geometry::{self, PresymplecticStructure};
use crate::linalg;
use crate::models::MapFamily;
use crate::reducibility::ReducedFrame;

/// Relative singular-value cutoff for rank decisions.
pub const RANK_RTOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrowthPolicy {
    pub enabled: bool,
    /// Grow an axis when its spectral tail ratio exceeds `threshold * ||e||`.
    pub threshold: f64,
    pub max_radius: usize,
}

impl Default for GrowthPolicy {
    fn default() -> Self {
        Self {
            enabled: true,
            threshold: 1e-3,
            max_radius: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveConfig {
    pub max_iterations: usize,
    pub target_error: f64,
    pub growth: GrowthPolicy,
    /// Step halvings allowed before a step is rejected.
    pub max_halvings: usize,
    /// Undamped iteration: every full step is accepted.
    pub pure: bool,
    /// Active parameter components; empty means all active.
    pub parameter_mask: Vec<bool>,
    /// Admissible leftover average of the transformed equations; defaults to
    /// `1e-10 ||eta||`.
    pub avg_tolerance: Option<f64>,
    /// Initial strip loss, only used for the smallness indicator.
    pub delta0: f64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            max_iterations: 20,
            target_error: 1e-12,
            growth: GrowthPolicy::default(),
            max_halvings: 5,
            pure: false,
            parameter_mask: Vec::new(),
            avg_tolerance: None,
            delta0: 0.1,
        }
    }
}

impl SolveConfig {
    pub const ERROR_FLOOR: f64 = 1e-14;

    pub fn validate(&self, param_dim: usize) -> Result<()> {
        if !(self.target_error > Self::ERROR_FLOOR) {
            return Err(Error::Config(format!(
                "target_error = {:e} must exceed the floor {:e}",
                self.target_error,
                Self::ERROR_FLOOR
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be positive".into()));
        }
        if !self.parameter_mask.is_empty() && self.parameter_mask.len() != param_dim {
            return Err(Error::Config(format!(
                "parameter_mask has {} entries, the family has {param_dim} parameters",
                self.parameter_mask.len()
            )));
        }
        if !(self.delta0 > 0.0) {
            return Err(Error::Config("delta0 must be positive".into()));
        }
        if self.growth.threshold < 0.0 {
            return Err(Error::Config("growth threshold must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn active(&self, param_dim: usize) -> Vec<usize> {
        (0..param_dim)
            .filter(|&j| self.parameter_mask.get(j).copied().unwrap_or(true))
            .collect()
    }
}

/// `e = f_lambda(K) - K(. + omega)` sampled on a grid, angle rows unwrapped to
/// the nearest lift.
#[derive(Debug, Clone)]
pub struct InvarianceError {
    pub grid: GridField,
    /// Coefficients up to the largest radius the grid resolves.
    pub series: FourierSeries,
    /// Weighted-l1 norm of `series` at the torus strip width.
    pub norm: f64,
    /// Largest absolute grid value.
    pub sup: f64,
}

/// Evaluates the invariance error on `dims`; `DomainEscape` if some `K(theta)`
/// or its image leaves the declared action domain.
pub fn invariance_error(
    k: &TorusEmbedding,
    f: &dyn MapFamily,
    lambda: &[f64],
    omega: &[f64],
    dims: &[usize],
) -> Result<InvarianceError> {
    let (d, dim) = (k.d(), k.state_dim());
    if f.d() != k.d() || f.n() != k.n() || omega.len() != k.torus_dim() {
        return Err(Error::DimensionMismatch(
            "map, torus and frequency dimensions disagree".into(),
        ));
    }
    let here = k.to_grid(dims)?;
    let ahead = k.shift(omega).to_grid(dims)?;
    let bounds = f.y_bounds();
    let mut grid = GridField::zeros(dims.to_vec(), dim, 1);
    let mut image = vec![0.0; dim];
    for p in 0..grid.num_points() {
        let u = here.point(p);
        f.apply(u, lambda, &mut image);
        if let Some((lo, hi)) = bounds {
            for i in d..2 * d {
                for v in [u[i], image[i]] {
                    if !(v >= lo && v <= hi) {
                        return Err(Error::DomainEscape {
                            theta: grid.theta(p),
                            value: v,
                        });
                    }
                }
            }
        }
        let target = ahead.point(p);
        let out = grid.point_mut(p);
        for i in 0..dim {
            let mut e = image[i] - target[i];
            if k.is_angle_row(i) {
                e -= e.round();
            }
            out[i] = e;
        }
    }
    let resolved = Truncation::new(dims.iter().map(|g| g / 2 - 1).collect());
    let series = FourierSeries::from_grid(&grid, &resolved)?;
    let norm = series.analytic_norm(k.rho())?;
    let sup = grid.values().iter().map(|v| v.abs()).fold(0.0, f64::max);
    Ok(InvarianceError {
        grid,
        series,
        norm,
        sup,
    })
}

/// Solution of the transformed linear system.
#[derive(Debug, Clone)]
pub struct LinearizedSolution {
    /// Correction in frame coordinates, `(2d+n) x 1`.
    pub xi: FourierSeries,
    /// Full-length parameter correction (zero on masked components).
    pub eps: Vec<f64>,
    /// Constant added to `avg(xi_y)` by the twist reduction.
    pub twist_shift: Vec<f64>,
    /// Largest leftover average of the difference equations that were solved.
    pub avg_residual: f64,
    /// Leftover average of the `y` equations when they were dropped, else 0.
    pub action_average: f64,
    pub divisor_floor: f64,
    /// Rank of `avg(Lambda)` restricted to the active parameters.
    pub rank_avg_lambda: usize,
    pub singular_min_avg_lambda: f64,
}

fn grid_apply(field: &GridField, v: &FourierSeries, trunc: &Truncation) -> Result<FourierSeries> {
    let g = v.to_grid(field.dims())?;
    FourierSeries::from_grid(&field.matmul(&g)?, trunc)
}

fn column(series: &FourierSeries, col: usize, r0: usize, r1: usize) -> FourierSeries {
    series.block(r0, r1, col, col + 1)
}

/// Solves `C xi - xi o T_omega + Lambda eps = eta` with `eta = -M^{-1}(theta +
/// omega) e`, keeping only the triangular pattern of `C`.
///
/// `eps` is fixed by linear response: `xi_y` depends on `eps` through
/// `Lambda_y`, so `xi_y = xi_y^0 - sum_j eps_j xi_y^j (+ c)` and the averaged
/// `x`, `y` and `z` equations form a `(2d+n) x (active [+ d])` system.
///
/// When no active parameter translates the actions, the averaged `y`
/// equations are dropped: for exact maps their leftover is quadratically
/// small (vanishing lemma) and is reported as `action_average` instead of
/// being checked. The twist columns `c` (a shift of `avg(xi_y)`) are used
/// when fewer parameters are active than averaged equations are kept.
pub fn solve_linearized(
    frame: &ReducedFrame,
    e: &GridField,
    trunc: &Truncation,
    omega: &[f64],
    active: &[usize],
    avg_tolerance: Option<f64>,
) -> Result<LinearizedSolution> {
    let (d, n) = (frame.d, frame.n);
    let dim = 2 * d + n;
    let den = Denominators::new(trunc, omega);

    let mut eta_grid = frame.ahead.m_inv.matmul(e)?;
    eta_grid.values_mut().iter_mut().for_each(|v| *v = -*v);
    let eta = FourierSeries::from_grid(&eta_grid, trunc)?;
    let lam = FourierSeries::from_grid(&frame.lambda, trunc)?;
    let avg_lam = DMatrix::from_row_slice(dim, frame.m_params, &lam.average());
    let avg_lam_active = DMatrix::from_fn(dim, active.len(), |i, j| avg_lam[(i, active[j])]);
    let sv = linalg::singular_values(&avg_lam_active);
    let rank_avg_lambda = linalg::rank(&avg_lam_active, RANK_RTOL);

    let solve0 = |h: &FourierSeries| -> Result<FourierSeries> {
        let (h0, _) = cohomology::remove_average(h);
        Ok(cohomology::solve_with(&h0, &den, Some(f64::INFINITY))?.v)
    };

    // responses of xi_y
    let eta_y = eta.block(d, 2 * d, 0, 1);
    let xi_y0 = solve0(&eta_y)?;
    let xi_yj: Vec<FourierSeries> = active
        .iter()
        .map(|&j| solve0(&column(&lam, j, d, 2 * d)))
        .collect::<Result<_>>()?;

    let s_of = |v: &FourierSeries| grid_apply(&frame.s, v, trunc);
    let a_of = |v: &FourierSeries| grid_apply(&frame.a, v, trunc);
    let s_xi0 = s_of(&xi_y0)?;
    let a_xi0 = a_of(&xi_y0)?;
    let s_xij: Vec<FourierSeries> = xi_yj.iter().map(&s_of).collect::<Result<_>>()?;
    let a_xij: Vec<FourierSeries> = xi_yj.iter().map(&a_of).collect::<Result<_>>()?;

    // y equations are kept only if the active parameters move the actions
    let raw = frame.ahead.m.matmul(&frame.lambda)?.average();
    let raw_y = DMatrix::from_fn(d, active.len(), |i, j| raw[(d + i) * frame.m_params + active[j]]);
    let raw_scale = active
        .iter()
        .flat_map(|&j| (0..dim).map(|i| raw[i * frame.m_params + j].abs()).collect::<Vec<_>>())
        .fold(1.0, f64::max);
    let y_kept = linalg::singular_values(&raw_y)
        .iter()
        .filter(|&&v| v > RANK_RTOL * raw_scale)
        .count()
        == d;
    let rows: Vec<usize> = (0..dim).filter(|i| y_kept || !(d..2 * d).contains(i)).collect();

    let twist = active.len() < rows.len();
    let ncols = active.len() + if twist { d } else { 0 };
    let mut g = DMatrix::zeros(dim, ncols);
    let mut rhs = DVector::zeros(dim);
    let eta_avg = eta.average();
    let s_avg = frame.s.average();
    let a_avg = frame.a.average();
    let (s0, a0) = (s_xi0.average(), a_xi0.average());
    for i in 0..d {
        rhs[d + i] = eta_avg[d + i];
        rhs[i] = eta_avg[i] - s0[i];
    }
    for i in 0..n {
        rhs[2 * d + i] = eta_avg[2 * d + i] - a0[i];
    }
    for (c, &j) in active.iter().enumerate() {
        let (sj, aj) = (s_xij[c].average(), a_xij[c].average());
        for i in 0..d {
            g[(d + i, c)] = avg_lam[(d + i, j)];
            g[(i, c)] = avg_lam[(i, j)] - sj[i];
        }
        for i in 0..n {
            g[(2 * d + i, c)] = avg_lam[(2 * d + i, j)] - aj[i];
        }
    }
    if twist {
        for a in 0..d {
            let col = active.len() + a;
            for i in 0..d {
                g[(i, col)] = s_avg[i * d + a];
            }
            for i in 0..n {
                g[(2 * d + i, col)] = a_avg[i * d + a];
            }
        }
    }
    let g = g.select_rows(&rows);
    let rhs = rhs.select_rows(&rows);
    let (sol, rank_g) = linalg::solve_linear(&g, &rhs, RANK_RTOL);
    if rank_g < ncols.min(rows.len()) {
        return Err(Error::RankDeficient {
            rank: rank_g,
            expected: ncols.min(rows.len()),
        });
    }

    let mut eps = vec![0.0; frame.m_params];
    for (c, &j) in active.iter().enumerate() {
        eps[j] = sol[c];
    }
    let twist_shift: Vec<f64> = if twist {
        (0..d).map(|a| sol[active.len() + a]).collect()
    } else {
        vec![0.0; d]
    };

    // xi_y = xi_y^0 - sum eps_j xi_y^j + c
    let mut xi_y = xi_y0.clone();
    for (c, &j) in active.iter().enumerate() {
        xi_y.axpy(-eps[j], &xi_yj[c]);
    }
    xi_y.add_constant(&twist_shift);

    // remaining right-hand sides
    let mut lam_eps = FourierSeries::zeros(trunc.clone(), dim, 1);
    for &j in active {
        lam_eps.axpy(eps[j], &column(&lam, j, 0, dim));
    }
    let mut h = eta.clone();
    h.axpy(-1.0, &lam_eps);
    let h_y = h.block(d, 2 * d, 0, 1);
    let mut h_x = h.block(0, d, 0, 1);
    h_x.axpy(-1.0, &s_of(&xi_y)?);
    let mut h_z = h.block(2 * d, dim, 0, 1);
    h_z.axpy(-1.0, &a_of(&xi_y)?);

    let worst = |v: Vec<f64>| v.into_iter().map(f64::abs).fold(0.0, f64::max);
    let y_leftover = worst(h_y.average());
    let (leftover, action_average) = if y_kept {
        (worst(h_x.average()).max(y_leftover).max(worst(h_z.average())), 0.0)
    } else {
        (worst(h_x.average()).max(worst(h_z.average())), y_leftover)
    };
    let tol = avg_tolerance.unwrap_or_else(|| {
        cohomology::DEFAULT_AVG_RTOL * eta.analytic_norm(0.0).unwrap_or(f64::INFINITY)
    });
    if leftover > tol {
        return Err(Error::NonzeroAverage(leftover));
    }
    let xi_x = solve0(&h_x)?;
    let xi_z = solve0(&h_z)?;

    let mut xi = FourierSeries::zeros(trunc.clone(), dim, 1);
    xi.set_block(0, 0, &xi_x);
    xi.set_block(d, 0, &xi_y);
    xi.set_block(2 * d, 0, &xi_z);
    Ok(LinearizedSolution {
        xi,
        eps,
        twist_shift,
        avg_residual: leftover,
        action_average,
        divisor_floor: den.floor(),
        rank_avg_lambda,
        singular_min_avg_lambda: sv.last().copied().unwrap_or(0.0),
    })
}

/// One row of the run log.
#[derive(Debug, Clone, Serialize)]
pub struct StepReport {
    pub iteration: usize,
    pub err_before: f64,
    pub err_after: f64,
    pub sup_before: f64,
    pub delta_norm: f64,
    pub d_delta_norm: f64,
    pub eps_norm: f64,
    pub divisor_floor: f64,
    pub cond_m: f64,
    pub cond_v: f64,
    pub rank_avg_lambda: usize,
    pub sigma_min_avg_lambda: f64,
    pub tail_ratio: f64,
    pub accepted: bool,
    pub halvings: usize,
    pub step_length: f64,
    pub avg_residual: f64,
    pub action_average: f64,
    pub block_residual: f64,
    pub qm_residual: f64,
    pub v_inv_r: f64,
    pub lambda_placement_gap: f64,
    pub lagrangian_norm: f64,
    pub dk_norm: f64,
    pub radii: Vec<usize>,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub torus: TorusEmbedding,
    pub lambda: Vec<f64>,
    pub report: StepReport,
    /// Invariance error of the returned pair.
    pub error: InvarianceError,
}

/// One damped quasi-Newton step `K' = K + t M xi`, `lambda' = lambda + t eps`.
pub fn kam_step(
    k: &TorusEmbedding,
    lambda: &[f64],
    f: &dyn MapFamily,
    s: &PresymplecticStructure,
    omega: &[f64],
    config: &SolveConfig,
) -> Result<StepOutcome> {
    config.validate(f.param_dim())?;
    let dims = k.truncation().padded_grid();
    let e = invariance_error(k, f, lambda, omega, &dims)?;
    step_from(k, lambda, f, s, omega, config, e, 1)
}

#[allow(clippy::too_many_arguments)]
fn step_from(
    k: &TorusEmbedding,
    lambda: &[f64],
    f: &dyn MapFamily,
    s: &PresymplecticStructure,
    omega: &[f64],
    config: &SolveConfig,
    e: InvarianceError,
    iteration: usize,
) -> Result<StepOutcome> {
    let start = Instant::now();
    let trunc = k.truncation().clone();
    let dims = trunc.padded_grid();
    let frame = ReducedFrame::build(k, f, lambda, s, omega, &dims)?;
    let active = config.active(f.param_dim());
    let lin = solve_linearized(&frame, &e.grid, &trunc, omega, &active, config.avg_tolerance)?;

    let delta = grid_apply(&frame.here.m, &lin.xi, &trunc)?;
    let delta_norm = delta.analytic_norm(k.rho())?;
    let d_delta_norm = (0..k.torus_dim())
        .map(|a| delta.derivative(a).analytic_norm(k.rho()))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let eps_norm = lin.eps.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let lagrangian_norm = geometry::lagrangian_defect(k, s)?.norm;
    let dk_norm = frame.here.dk.sup_norm();

    let mut t = 1.0;
    let mut halvings = 0;
    let mut best_err = f64::INFINITY;
    let (torus, lam, err) = loop {
        let cand = k.add_periodic(&delta, t);
        let cand_lambda: Vec<f64> = lambda.iter().zip(&lin.eps).map(|(l, de)| l + t * de).collect();
        let trial = invariance_error(&cand, f, &cand_lambda, omega, &dims);
        let ok = match &trial {
            Ok(te) => {
                best_err = best_err.min(te.norm);
                config.pure || te.norm <= e.norm || te.norm <= config.target_error
            }
            Err(Error::DomainEscape { .. }) if !config.pure => false,
            Err(_) => false,
        };
        if ok {
            break (cand, cand_lambda, trial?);
        }
        if config.pure {
            // only reachable through a domain escape
            return Err(trial.unwrap_err());
        }
        if halvings == config.max_halvings {
            return Err(Error::StepRejected {
                halvings,
                err_before: e.norm,
                err_best: best_err,
            });
        }
        halvings += 1;
        t *= 0.5;
        debug!("step {iteration}: halving to t = {t}");
    };

    let tail_ratio = (0..torus.torus_dim())
        .map(|a| torus.periodic().tail_ratio(a))
        .fold(0.0, f64::max);
    let report = StepReport {
        iteration,
        err_before: e.norm,
        err_after: err.norm,
        sup_before: e.sup,
        delta_norm,
        d_delta_norm,
        eps_norm,
        divisor_floor: lin.divisor_floor,
        cond_m: frame.cond_m(),
        cond_v: frame.cond_v(),
        rank_avg_lambda: lin.rank_avg_lambda,
        sigma_min_avg_lambda: lin.singular_min_avg_lambda,
        tail_ratio,
        accepted: true,
        halvings,
        step_length: t,
        avg_residual: lin.avg_residual,
        action_average: lin.action_average,
        block_residual: frame.blocks.max(),
        qm_residual: frame.here.qm_residual,
        v_inv_r: frame.here.v_inv_r,
        lambda_placement_gap: frame.lambda_placement_gap,
        lagrangian_norm,
        dk_norm,
        radii: trunc.radii().to_vec(),
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    Ok(StepOutcome {
        torus,
        lambda: lam,
        report,
        error: err,
    })
}

/// Per-iteration reports plus run-level indicators.
#[derive(Debug, Clone, Serialize)]
pub struct RunLog {
    pub reports: Vec<StepReport>,
    /// `gamma_L^{-4} delta_0^{-4 sigma} ||e_0||`: dimensionless smallness
    /// indicator; small values suggest the start is in the convergence basin.
    pub smallness_indicator: f64,
    pub initial_error: f64,
    pub final_error: f64,
    pub final_sup: f64,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub torus: TorusEmbedding,
    pub lambda: Vec<f64>,
    pub log: RunLog,
}

/// Iterates [`kam_step`] until `||e|| <= target_error`. At least one step is
/// always taken.
pub fn solve(
    k0: &TorusEmbedding,
    lambda0: &[f64],
    f: &dyn MapFamily,
    s: &PresymplecticStructure,
    freq: &Frequency,
    config: &SolveConfig,
) -> Result<Solution> {
    solve_with_observer(k0, lambda0, f, s, freq, config, |_| {})
}

/// As [`solve`], calling `observe` after every accepted step.
pub fn solve_with_observer(
    k0: &TorusEmbedding,
    lambda0: &[f64],
    f: &dyn MapFamily,
    s: &PresymplecticStructure,
    freq: &Frequency,
    config: &SolveConfig,
    mut observe: impl FnMut(&StepReport),
) -> Result<Solution> {
    config.validate(f.param_dim())?;
    if lambda0.len() != f.param_dim() {
        return Err(Error::DimensionMismatch(format!(
            "lambda has {} entries, the family has {} parameters",
            lambda0.len(),
            f.param_dim()
        )));
    }
    let omega = &freq.omega;
    let mut k = k0.clone();
    let mut lambda = lambda0.to_vec();
    let mut e = invariance_error(&k, f, &lambda, omega, &k.truncation().padded_grid())?;
    let initial_error = e.norm;
    let indicator = initial_error
        / (freq.gamma_estimate.powi(4) * config.delta0.powf(4.0 * freq.sigma));
    info!("initial error {initial_error:e}, smallness indicator {indicator:e}");
    let mut best = BestIterate {
        torus: k.clone(),
        lambda: lambda.clone(),
        error_norm: e.norm,
    };
    let mut reports = Vec::new();
    for iteration in 1..=config.max_iterations {
        let outcome = match step_from(&k, &lambda, f, s, omega, config, e, iteration) {
            Ok(o) => o,
            Err(Error::StepRejected { .. }) | Err(Error::DomainEscape { .. }) => {
                warn!("iteration {iteration}: step rejected");
                return Err(Error::NoConvergence {
                    iterations: iteration,
                    best: Box::new(best),
                });
            }
            Err(other) => return Err(other),
        };
        info!(
            "iteration {iteration}: {:e} -> {:e} (eps {:e}, halvings {})",
            outcome.report.err_before,
            outcome.report.err_after,
            outcome.report.eps_norm,
            outcome.report.halvings
        );
        observe(&outcome.report);
        let done = outcome.report.err_after <= config.target_error;
        reports.push(outcome.report);
        k = outcome.torus;
        lambda = outcome.lambda;
        e = outcome.error;
        if e.norm < best.error_norm {
            best = BestIterate {
                torus: k.clone(),
                lambda: lambda.clone(),
                error_norm: e.norm,
            };
        }
        if done {
            return Ok(Solution {
                torus: k,
                lambda,
                log: RunLog {
                    reports,
                    smallness_indicator: indicator,
                    initial_error,
                    final_error: e.norm,
                    final_sup: e.sup,
                },
            });
        }
        if config.growth.enabled {
            if let Some(grown) = grow_truncation(&k, e.norm, &config.growth) {
                info!("truncation grown to {:?}", grown.radii());
                k = k.retruncate(&grown);
                e = invariance_error(&k, f, &lambda, omega, &grown.padded_grid())?;
            }
        }
    }
    Err(Error::NoConvergence {
        iterations: config.max_iterations,
        best: Box::new(best),
    })
}

/// Doubles every axis whose tail ratio exceeds `threshold * err`, capped at
/// `max_radius`; `None` when nothing changes.
pub fn grow_truncation(k: &TorusEmbedding, err: f64, policy: &GrowthPolicy) -> Option<Truncation> {
    let mut trunc = k.truncation().clone();
    let mut changed = false;
    for axis in 0..trunc.dim() {
        let r = trunc.radii()[axis];
        if r >= policy.max_radius {
            continue;
        }
        if k.periodic().tail_ratio(axis) > policy.threshold * err {
            let mut radii = trunc.grown(axis).radii().to_vec();
            radii[axis] = radii[axis].min(policy.max_radius);
            trunc = Truncation::new(radii);
            changed = true;
        }
    }
    changed.then_some(trunc)
}

/// One stage of a continuation sweep.
#[derive(Debug, Clone)]
pub struct Stage {
    pub knob: f64,
    pub solution: Solution,
}

#[derive(Debug)]
pub struct Continuation {
    pub stages: Vec<Stage>,
    /// Knob value and error of the first failed stage, if any.
    pub failure: Option<(f64, Error)>,
}

/// Solves along `schedule`, seeding each stage with the previous torus.
pub fn continue_in_parameter<F>(
    k0: &TorusEmbedding,
    lambda0: &[f64],
    schedule: &[f64],
    mut family: F,
    s: &PresymplecticStructure,
    freq: &Frequency,
    config: &SolveConfig,
) -> Continuation
where
    F: FnMut(f64) -> Result<Box<dyn MapFamily>>,
{
    let mut stages = Vec::new();
    let mut k = k0.clone();
    let mut lambda = lambda0.to_vec();
    for &knob in schedule {
        let result = family(knob).and_then(|f| solve(&k, &lambda, f.as_ref(), s, freq, config));
        match result {
            Ok(sol) => {
                k = sol.torus.clone();
                lambda = sol.lambda.clone();
                stages.push(Stage { knob, solution: sol });
            }
            Err(err) => {
                warn!("continuation stopped at {knob}: {err}");
                return Continuation {
                    stages,
                    failure: Some((knob, err)),
                };
            }
        }
    }
    Continuation {
        stages,
        failure: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::CoupledStandardFamily;
    use num_complex::Complex64;

    fn golden() -> f64 {
        (5f64.sqrt() - 1.0) / 2.0
    }

    fn setup(radius: usize) -> (TorusEmbedding, PresymplecticStructure, Vec<f64>) {
        let omega = vec![golden(), 2f64.sqrt() - 1.0];
        let k = TorusEmbedding::flat(1, 1, Truncation::new(vec![radius, radius]), &[omega[0]], 0.0)
            .unwrap();
        (k, PresymplecticStructure::standard(1, 1), omega)
    }

    #[test]
    fn exact_torus_has_zero_error() {
        let (k, _, omega) = setup(4);
        let f = CoupledStandardFamily::integrable(omega[1]);
        let e = invariance_error(&k, &f, &[0.0; 3], &omega, &k.truncation().padded_grid()).unwrap();
        assert!(e.norm <= 1e-14, "{}", e.norm);
    }

    #[test]
    fn translation_passes_through() {
        let (k, _, omega) = setup(4);
        let f = CoupledStandardFamily::integrable(omega[1]);
        let e = invariance_error(&k, &f, &[0.0, 1e-3, 0.0], &omega, &k.truncation().padded_grid())
            .unwrap();
        // y and x both pick up 1e-3
        assert!((e.norm - 1e-3).abs() < 1e-15);
        assert!((e.series.average()[0] - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn domain_escape_is_reported() {
        let (k, _, omega) = setup(2);
        let mut f = CoupledStandardFamily::integrable(omega[1]);
        f.y_bound = 0.5;
        let err = invariance_error(&k, &f, &[0.0; 3], &omega, &k.truncation().padded_grid());
        assert!(matches!(err, Err(Error::DomainEscape { .. })));
    }

    #[test]
    fn zero_error_gives_zero_correction() {
        let (k, s, omega) = setup(4);
        let f = CoupledStandardFamily::integrable(omega[1]);
        let dims = k.truncation().padded_grid();
        let frame = ReducedFrame::build(&k, &f, &[0.0; 3], &s, &omega, &dims).unwrap();
        let e = GridField::zeros(dims, 3, 1);
        let lin = solve_linearized(&frame, &e, k.truncation(), &omega, &[0, 1, 2], None).unwrap();
        assert_eq!(lin.eps, vec![0.0; 3]);
        assert_eq!(lin.xi.analytic_norm(0.0).unwrap(), 0.0);
    }

    #[test]
    fn constant_error_is_absorbed_by_parameters() {
        let (k, s, omega) = setup(3);
        let f = CoupledStandardFamily::integrable(omega[1]);
        let dims = k.truncation().padded_grid();
        let frame = ReducedFrame::build(&k, &f, &[0.0; 3], &s, &omega, &dims).unwrap();
        let c = [0.01, -0.02, 0.005];
        let e = GridField::from_fn(dims, 3, 1, |_, out| out.copy_from_slice(&c));
        let lin = solve_linearized(&frame, &e, k.truncation(), &omega, &[0, 1, 2], None).unwrap();
        // oracle: df/dlambda eps = -c with columns e_x, e_x + e_y, e_z
        let expected = [-(c[0] - c[1]), -c[1], -c[2]];
        for (got, want) in lin.eps.iter().zip(expected) {
            assert!((got - want).abs() < 1e-15, "{:?}", lin.eps);
        }
        assert!(lin.xi.analytic_norm(0.0).unwrap() < 1e-15);
    }

    #[test]
    fn solved_system_residual_is_small() {
        let (mut k, s, omega) = setup(8);
        // a slightly deformed torus so that S and A vary
        k.periodic_mut().set_coeff(1, &[1, 0], Complex64::new(0.01, 0.0));
        k.periodic_mut().set_coeff(1, &[-1, 0], Complex64::new(0.01, 0.0));
        let f = CoupledStandardFamily::new(0.2, 0.1, omega[1]);
        let trunc = k.truncation().clone();
        let dims = trunc.padded_grid();
        let frame = ReducedFrame::build(&k, &f, &[0.0; 3], &s, &omega, &dims).unwrap();
        let e = invariance_error(&k, &f, &[0.0; 3], &omega, &dims).unwrap();
        let lin = solve_linearized(&frame, &e.grid, &trunc, &omega, &[0, 1, 2], None).unwrap();
        // substitute back: triangular part of C xi - xi o T + Lambda eps - eta
        let xi_grid = lin.xi.to_grid(&dims).unwrap();
        let xi_ahead = lin.xi.shift(&omega).to_grid(&dims).unwrap();
        let mut res = GridField::zeros(dims.clone(), 3, 1);
        for p in 0..res.num_points() {
            let c = frame.c.matrix_at(p);
            let mut tri = DMatrix::<f64>::identity(3, 3);
            tri[(0, 1)] = c[(0, 1)];
            tri[(2, 1)] = c[(2, 1)];
            let xi = DVector::from_column_slice(xi_grid.point(p));
            let lam = frame.lambda.matrix_at(p);
            let eta = -(frame.ahead.m_inv.matrix_at(p) * DVector::from_column_slice(e.grid.point(p)));
            let r = tri * xi - DVector::from_column_slice(xi_ahead.point(p))
                + lam * DVector::from_column_slice(&lin.eps)
                - eta;
            res.point_mut(p).copy_from_slice(r.as_slice());
        }
        let series = FourierSeries::from_grid(&res, &trunc).unwrap();
        let worst = series.coeffs().iter().map(|c| c.norm()).fold(0.0, f64::max);
        assert!(worst <= 1e-11, "{worst}");
    }

    #[test]
    fn exact_solution_is_a_fixed_point() {
        let (k, s, omega) = setup(4);
        let f = CoupledStandardFamily::integrable(omega[1]);
        let out = kam_step(&k, &[0.0; 3], &f, &s, &omega, &SolveConfig::default()).unwrap();
        assert!(out.torus.periodic().max_abs_diff(k.periodic()) <= 1e-15);
        assert!(out.lambda.iter().all(|v| v.abs() <= 1e-15));
    }

    #[test]
    fn config_validation() {
        let mut c = SolveConfig::default();
        assert!(c.validate(3).is_ok());
        c.target_error = 1e-15;
        assert!(c.validate(3).is_err());
        c.target_error = 1e-10;
        c.parameter_mask = vec![true];
        assert!(c.validate(3).is_err());
        assert_eq!(SolveConfig::default().active(3), vec![0, 1, 2]);
    }
}
