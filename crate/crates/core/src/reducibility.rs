//! Automatic-reducibility frame along an approximately invariant torus.
//!
//! With `DK = (X, Z)`, `X = (X_V; X_N)`, `Z = (Z_V; Z_N)` split along
//! `V = T^d x R^d` and `N = T^n`:
//!
//! ```text
//! N = (X_V^T X_V)^{-1},  Y = X_V N,  W = J^{-1} Y,
//! M = [[X_V, W, Z_V], [X_N, 0, Z_N]],
//! Q = [[X_V^T J, 0], [W^T J, 0], [0, I_n]],
//! V = [[0, I, 0], [-I, -Y^T J^{-1} Y, W^T J Z_V], [X_N, 0, Z_N]].
//! ```
//!
//! `Q M - V` vanishes except for the blocks `X_V^T J X_V` and `X_V^T J Z_V`,
//! which are zero on Lagrangian tori. In the frame the linearized map
//! `C = M^{-1}(theta + omega) Df(K(theta)) M(theta)` is close to
//! `[[I, S, 0], [0, I, 0], [0, A, I]]`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fourier::{GridField, TorusEmbedding};
use crate::geometry::PresymplecticStructure;
use crate::linalg;
use crate::models::MapFamily;

/// Pointwise inverses with a larger 1-norm condition number are degenerate.
pub const CONDITION_LIMIT: f64 = 1e12;

struct PointFrame {
    m: DMatrix<f64>,
    m_inv: DMatrix<f64>,
    v: DMatrix<f64>,
    v_inv: DMatrix<f64>,
    n: DMatrix<f64>,
    cond_m: f64,
    cond_v: f64,
    r_xx: f64,
    r_xz: f64,
    qm_residual: f64,
    v_inv_r: f64,
}

struct Degeneracy {
    condition: &'static str,
    cond: f64,
}

fn point_frame(
    dk: &DMatrix<f64>,
    j: &DMatrix<f64>,
    j_inv: &DMatrix<f64>,
    d: usize,
    n: usize,
) -> std::result::Result<PointFrame, Degeneracy> {
    let dim = 2 * d + n;
    let xv = dk.view((0, 0), (2 * d, d)).into_owned();
    let xn = dk.view((2 * d, 0), (n, d)).into_owned();
    let zv = dk.view((0, d), (2 * d, n)).into_owned();
    let zn = dk.view((2 * d, d), (n, n)).into_owned();

    let gram = xv.transpose() * &xv;
    let (nmat, cond_g) = linalg::inverse_with_condition(&gram).ok_or(Degeneracy {
        condition: "X_V^T X_V is singular",
        cond: f64::INFINITY,
    })?;
    if cond_g > CONDITION_LIMIT {
        return Err(Degeneracy {
            condition: "X_V^T X_V is singular",
            cond: cond_g,
        });
    }
    let yv = &xv * &nmat;
    let w = j_inv * &yv;

    let mut m = DMatrix::zeros(dim, dim);
    m.view_mut((0, 0), (2 * d, d)).copy_from(&xv);
    m.view_mut((2 * d, 0), (n, d)).copy_from(&xn);
    m.view_mut((0, d), (2 * d, d)).copy_from(&w);
    m.view_mut((0, 2 * d), (2 * d, n)).copy_from(&zv);
    m.view_mut((2 * d, 2 * d), (n, n)).copy_from(&zn);
    let (m_inv, cond_m) = linalg::inverse_with_condition(&m).ok_or(Degeneracy {
        condition: "frame matrix M is singular",
        cond: f64::INFINITY,
    })?;
    if cond_m > CONDITION_LIMIT {
        return Err(Degeneracy {
            condition: "frame matrix M is singular",
            cond: cond_m,
        });
    }

    let wt_j = w.transpose() * j;
    let mut q = DMatrix::zeros(dim, dim);
    q.view_mut((0, 0), (d, 2 * d)).copy_from(&(xv.transpose() * j));
    q.view_mut((d, 0), (d, 2 * d)).copy_from(&wt_j);
    q.view_mut((2 * d, 2 * d), (n, n)).fill_with_identity();

    let mut v = DMatrix::zeros(dim, dim);
    v.view_mut((0, d), (d, d)).fill_with_identity();
    v.view_mut((d, 0), (d, d)).copy_from(&(-DMatrix::<f64>::identity(d, d)));
    v.view_mut((d, d), (d, d))
        .copy_from(&(-(yv.transpose() * j_inv * &yv)));
    v.view_mut((d, 2 * d), (d, n)).copy_from(&(&wt_j * &zv));
    v.view_mut((2 * d, 0), (n, d)).copy_from(&xn);
    v.view_mut((2 * d, 2 * d), (n, n)).copy_from(&zn);
    let (v_inv, cond_v) = linalg::inverse_with_condition(&v).ok_or(Degeneracy {
        condition: "matrix V is singular",
        cond: f64::INFINITY,
    })?;
    if cond_v > CONDITION_LIMIT {
        return Err(Degeneracy {
            condition: "matrix V is singular",
            cond: cond_v,
        });
    }

    let r = &q * &m - &v;
    let r_xx = linalg::norm_inf(&(xv.transpose() * j * &xv));
    let r_xz = linalg::norm_inf(&(xv.transpose() * j * &zv));
    Ok(PointFrame {
        qm_residual: linalg::norm_inf(&r),
        v_inv_r: linalg::norm_inf(&(&v_inv * &r)),
        m,
        m_inv,
        v,
        v_inv,
        n: nmat,
        cond_m,
        cond_v,
        r_xx,
        r_xz,
    })
}

/// The frame `M` of a torus alone, without reference to a map.
#[derive(Debug, Clone)]
pub struct TangentFrame {
    pub d: usize,
    pub n: usize,
    /// `DK` samples, `(2d+n) x (d+n)`.
    pub dk: GridField,
    pub n_field: GridField,
    pub m: GridField,
    pub m_inv: GridField,
    pub v: GridField,
    pub v_inv: GridField,
    pub cond_m: f64,
    pub cond_v: f64,
    /// Sup of `||Q M - V||`.
    pub qm_residual: f64,
    /// Sups of the blocks `X_V^T J X_V` and `X_V^T J Z_V` of `R = Q M - V`.
    pub r_blocks: [f64; 2],
    /// Sup of `||V^{-1} R||`.
    pub v_inv_r: f64,
}

impl TangentFrame {
    pub fn build(k: &TorusEmbedding, s: &PresymplecticStructure, dims: &[usize]) -> Result<Self> {
        let (d, n) = (k.d(), k.n());
        if s.d() != d || s.n() != n {
            return Err(Error::DimensionMismatch(format!(
                "torus has (d, n) = ({d}, {n}), structure has ({}, {})",
                s.d(),
                s.n()
            )));
        }
        let dim = 2 * d + n;
        let values = k.to_grid(dims)?;
        let dk = k.jacobian_series().to_grid(dims)?;
        let points: Vec<std::result::Result<PointFrame, Degeneracy>> = (0..dk.num_points())
            .into_par_iter()
            .map(|p| {
                let u = values.point(p);
                point_frame(&dk.matrix_at(p), s.j(u), s.j_inv(u), d, n)
            })
            .collect();

        let mut out = Self {
            d,
            n,
            n_field: GridField::zeros(dims.to_vec(), d, d),
            m: GridField::zeros(dims.to_vec(), dim, dim),
            m_inv: GridField::zeros(dims.to_vec(), dim, dim),
            v: GridField::zeros(dims.to_vec(), dim, dim),
            v_inv: GridField::zeros(dims.to_vec(), dim, dim),
            dk,
            cond_m: 0.0,
            cond_v: 0.0,
            qm_residual: 0.0,
            r_blocks: [0.0; 2],
            v_inv_r: 0.0,
        };
        for (p, pf) in points.into_iter().enumerate() {
            let pf = pf.map_err(|e| Error::DegenerateTorus {
                theta: out.m.theta(p),
                condition: e.condition.to_string(),
                cond: e.cond,
            })?;
            out.m.set_matrix(p, &pf.m);
            out.m_inv.set_matrix(p, &pf.m_inv);
            out.v.set_matrix(p, &pf.v);
            out.v_inv.set_matrix(p, &pf.v_inv);
            out.n_field.set_matrix(p, &pf.n);
            out.cond_m = out.cond_m.max(pf.cond_m);
            out.cond_v = out.cond_v.max(pf.cond_v);
            out.qm_residual = out.qm_residual.max(pf.qm_residual);
            out.r_blocks[0] = out.r_blocks[0].max(pf.r_xx);
            out.r_blocks[1] = out.r_blocks[1].max(pf.r_xz);
            out.v_inv_r = out.v_inv_r.max(pf.v_inv_r);
        }
        Ok(out)
    }

    pub fn dims(&self) -> &[usize] {
        self.m.dims()
    }

    /// Sup of `||M M^{-1} - I||`.
    pub fn inverse_defect(&self) -> f64 {
        let dim = 2 * self.d + self.n;
        let id = DMatrix::<f64>::identity(dim, dim);
        (0..self.m.num_points())
            .map(|p| linalg::norm_inf(&(self.m.matrix_at(p) * self.m_inv.matrix_at(p) - &id)))
            .fold(0.0, f64::max)
    }
}

/// Sup norms of the blocks of `C` that vanish (or equal `I`) on an
/// invariant torus.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct BlockResiduals {
    pub c11_minus_i: f64,
    pub c13: f64,
    pub c21: f64,
    pub c22_minus_i: f64,
    pub c23: f64,
    pub c31: f64,
    pub c33_minus_i: f64,
}

impl BlockResiduals {
    pub fn max(&self) -> f64 {
        [
            self.c11_minus_i,
            self.c13,
            self.c21,
            self.c22_minus_i,
            self.c23,
            self.c31,
            self.c33_minus_i,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Frame of `K` at `theta` and `theta + omega`, the transformed cocycle
/// `C`, its torsion blocks `S` and `A`, and the parameter response `Lambda`.
#[derive(Debug, Clone)]
pub struct ReducedFrame {
    pub d: usize,
    pub n: usize,
    pub m_params: usize,
    pub here: TangentFrame,
    pub ahead: TangentFrame,
    pub c: GridField,
    /// `d x d` block `C_12`.
    pub s: GridField,
    /// `n x d` block `C_32`.
    pub a: GridField,
    /// `M^{-1}(theta + omega) df/dlambda(K(theta))`, `(2d+n) x m`.
    pub lambda: GridField,
    /// Sup distance between `Lambda` and the alternative placement
    /// `V^{-1}(theta) Q(theta) df/dlambda(K(theta))`.
    pub lambda_placement_gap: f64,
    pub blocks: BlockResiduals,
}

impl ReducedFrame {
    /// Builds the frame on `dims` (usually the padded grid of `K`).
    pub fn build(
        k: &TorusEmbedding,
        f: &dyn MapFamily,
        lambda: &[f64],
        s: &PresymplecticStructure,
        omega: &[f64],
        dims: &[usize],
    ) -> Result<Self> {
        let (d, n) = (k.d(), k.n());
        if f.d() != d || f.n() != n {
            return Err(Error::DimensionMismatch(format!(
                "map acts on (d, n) = ({}, {}), torus has ({d}, {n})",
                f.d(),
                f.n()
            )));
        }
        if omega.len() != d + n || lambda.len() != f.param_dim() {
            return Err(Error::DimensionMismatch(
                "omega or lambda has the wrong length".into(),
            ));
        }
        let dim = 2 * d + n;
        let mp = f.param_dim();
        let here = TangentFrame::build(k, s, dims)?;
        let ahead = TangentFrame::build(&k.shift(omega), s, dims)?;
        let values = k.to_grid(dims)?;

        struct Out {
            c: DMatrix<f64>,
            lambda: DMatrix<f64>,
            gap: f64,
        }
        let per_point: Vec<Out> = (0..values.num_points())
            .into_par_iter()
            .map(|p| {
                let u = values.point(p);
                let df = f.jacobian(u, lambda);
                let dl = f.param_jacobian(u, lambda);
                let m_inv_ahead = ahead.m_inv.matrix_at(p);
                let c = &m_inv_ahead * df * here.m.matrix_at(p);
                let lam = &m_inv_ahead * &dl;
                let q = q_matrix(&here, p, s.j(u));
                let alt = here.v_inv.matrix_at(p) * q * &dl;
                let gap = (&lam - alt).amax();
                Out { c, lambda: lam, gap }
            })
            .collect();

        let mut c = GridField::zeros(dims.to_vec(), dim, dim);
        let mut sf = GridField::zeros(dims.to_vec(), d, d);
        let mut af = GridField::zeros(dims.to_vec(), n, d);
        let mut lf = GridField::zeros(dims.to_vec(), dim, mp);
        let mut blocks = BlockResiduals::default();
        let mut gap = 0.0f64;
        let id_d = DMatrix::<f64>::identity(d, d);
        let id_n = DMatrix::<f64>::identity(n, n);
        for (p, o) in per_point.into_iter().enumerate() {
            let cm = &o.c;
            let blk = |r0, nr, c0, nc| cm.view((r0, c0), (nr, nc)).into_owned();
            blocks.c11_minus_i = blocks.c11_minus_i.max(linalg::norm_inf(&(blk(0, d, 0, d) - &id_d)));
            blocks.c13 = blocks.c13.max(linalg::norm_inf(&blk(0, d, 2 * d, n)));
            blocks.c21 = blocks.c21.max(linalg::norm_inf(&blk(d, d, 0, d)));
            blocks.c22_minus_i = blocks.c22_minus_i.max(linalg::norm_inf(&(blk(d, d, d, d) - &id_d)));
            blocks.c23 = blocks.c23.max(linalg::norm_inf(&blk(d, d, 2 * d, n)));
            blocks.c31 = blocks.c31.max(linalg::norm_inf(&blk(2 * d, n, 0, d)));
            blocks.c33_minus_i = blocks.c33_minus_i.max(linalg::norm_inf(&(blk(2 * d, n, 2 * d, n) - &id_n)));
            sf.set_matrix(p, &blk(0, d, d, d));
            af.set_matrix(p, &blk(2 * d, n, d, d));
            c.set_matrix(p, cm);
            lf.set_matrix(p, &o.lambda);
            gap = gap.max(o.gap);
        }
        Ok(Self {
            d,
            n,
            m_params: mp,
            here,
            ahead,
            c,
            s: sf,
            a: af,
            lambda: lf,
            lambda_placement_gap: gap,
            blocks,
        })
    }

    pub fn dims(&self) -> &[usize] {
        self.here.dims()
    }

    pub fn cond_m(&self) -> f64 {
        self.here.cond_m.max(self.ahead.cond_m)
    }

    pub fn cond_v(&self) -> f64 {
        self.here.cond_v
    }
}

fn q_matrix(frame: &TangentFrame, p: usize, j: &DMatrix<f64>) -> DMatrix<f64> {
    let (d, n) = (frame.d, frame.n);
    let dim = 2 * d + n;
    let m = frame.m.matrix_at(p);
    let xv = m.view((0, 0), (2 * d, d));
    let w = m.view((0, d), (2 * d, d));
    let mut q = DMatrix::zeros(dim, dim);
    q.view_mut((0, 0), (d, 2 * d)).copy_from(&(xv.transpose() * j));
    q.view_mut((d, 0), (d, 2 * d)).copy_from(&(w.transpose() * j));
    q.view_mut((2 * d, 2 * d), (n, n)).fill_with_identity();
    q
}

/// Reported blocks of `R = Q M - V`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LagrangianResidual {
    pub xv_j_xv: f64,
    pub xv_j_zv: f64,
    pub v_inv_r: f64,
}

pub fn lagrangian_residual_frame(frame: &TangentFrame) -> LagrangianResidual {
    LagrangianResidual {
        xv_j_xv: frame.r_blocks[0],
        xv_j_zv: frame.r_blocks[1],
        v_inv_r: frame.v_inv_r,
    }
}
