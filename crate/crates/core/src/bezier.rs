//! Bicubic rational Bézier patches: Bernstein bases, surface evaluation,
//! partial derivatives, per-patch tessellation, and analytic reverse-mode
//! gradients with respect to control points and weights.
//!
//! A patch is a 4×4 grid of control points `c[i][j]` with positive weights
//! `w[i][j]`; index `i` runs along `u`, index `j` along `v`. The surface is
//! the rational combination
//!
//! ```text
//! S(u,v) = Σ_ij B_i(u) B_j(v) w_ij c_ij  /  Σ_ij B_i(u) B_j(v) w_ij
//! ```
//!
//! with cubic Bernstein blending. Partials come from one accumulation pass
//! over numerator and denominator followed by the quotient rule; no symbolic
//! differentiation anywhere.

use crate::error::{Error, Result};
use crate::math::{vec3, Vec3};

/// Fixed surface degree in both parameter directions.
pub const DEGREE: usize = 3;

/// Bernstein basis row `B_i^n(u)` for `i = 0..=n`.
///
/// Entries sum to 1 (partition of unity). `n` is only variable for testing;
/// the surface kernel always runs at `n = 3`.
pub fn bernstein_vector(n: usize, u: f64) -> Result<Vec<f64>> {
    if n < 1 {
        return Err(Error::Config(format!("bernstein degree must be >= 1, got {n}")));
    }
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::Domain(format!("bernstein parameter {u} outside [0,1]")));
    }
    let mut out = Vec::with_capacity(n + 1);
    let mut binom = 1.0f64;
    for i in 0..=n {
        if i > 0 {
            binom *= (n - i + 1) as f64 / i as f64;
        }
        out.push(binom * u.powi(i as i32) * (1.0 - u).powi((n - i) as i32));
    }
    Ok(out)
}

/// Cubic Bernstein row, unchecked hot path.
#[inline]
pub fn bernstein_cubic(u: f64) -> [f64; 4] {
    let s = 1.0 - u;
    let ss = s * s;
    let uu = u * u;
    [ss * s, 3.0 * ss * u, 3.0 * s * uu, uu * u]
}

/// Derivatives of the cubic Bernstein row: `B'_i^3(u) = 3(B_{i-1}^2 - B_i^2)`.
#[inline]
pub fn bernstein_cubic_deriv(u: f64) -> [f64; 4] {
    let s = 1.0 - u;
    let b2 = [s * s, 2.0 * s * u, u * u];
    [
        -3.0 * b2[0],
        3.0 * (b2[0] - b2[1]),
        3.0 * (b2[1] - b2[2]),
        3.0 * b2[2],
    ]
}

/// Precomputed basis values at one parameter pair; reused heavily by the
/// tessellator, which shares rows across every patch in a complex.
#[derive(Debug, Clone, Copy)]
pub struct BasisPair {
    pub bu: [f64; 4],
    pub bv: [f64; 4],
    pub dbu: [f64; 4],
    pub dbv: [f64; 4],
}

impl BasisPair {
    pub fn at(u: f64, v: f64) -> BasisPair {
        BasisPair {
            bu: bernstein_cubic(u),
            bv: bernstein_cubic(v),
            dbu: bernstein_cubic_deriv(u),
            dbv: bernstein_cubic_deriv(v),
        }
    }
}

/// 4×4 control net of a bicubic rational Bézier patch.
///
/// Invariants: every weight strictly positive, every coordinate finite.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlGrid {
    /// Control points, `points[i][j]` with `i` along `u` and `j` along `v`.
    pub points: [[Vec3; 4]; 4],
    /// Positive weights, same layout as `points`.
    pub weights: [[f64; 4]; 4],
}

/// Point on the surface together with exact first partials.
#[derive(Debug, Clone, Copy)]
pub struct SurfacePoint {
    pub position: Vec3,
    /// ∂S/∂u at the query parameters.
    pub du: Vec3,
    /// ∂S/∂v at the query parameters.
    pub dv: Vec3,
}

impl SurfacePoint {
    /// Unit normal `du × dv / |du × dv|`, or `None` when degenerate.
    pub fn normal(&self) -> Option<Vec3> {
        self.du.cross(self.dv).normalized(1e-12)
    }
}

/// Reverse-mode cotangents on a patch's control net.
#[derive(Debug, Clone)]
pub struct PatchGradients {
    pub d_points: [[Vec3; 4]; 4],
    pub d_weights: [[f64; 4]; 4],
}

impl PatchGradients {
    pub fn zero() -> PatchGradients {
        PatchGradients {
            d_points: [[Vec3::ZERO; 4]; 4],
            d_weights: [[0.0; 4]; 4],
        }
    }
}

/// Local tessellation of a single patch on the closed uniform `r × r`
/// parameter grid `u,v = k/(r-1)`.
#[derive(Debug, Clone)]
pub struct PatchMesh {
    /// Samples in v-major order: index `iv * r + iu`.
    pub points: Vec<SurfacePoint>,
    pub triangles: Vec<[u32; 3]>,
    pub resolution: usize,
}

impl ControlGrid {
    /// Grid with points on the Greville lattice of the unit square, unit
    /// weights; evaluates to the identity parameterization `(u, v, 0)`.
    pub fn planar_unit() -> ControlGrid {
        let mut points = [[Vec3::ZERO; 4]; 4];
        for (i, row) in points.iter_mut().enumerate() {
            for (j, p) in row.iter_mut().enumerate() {
                *p = vec3(i as f64 / 3.0, j as f64 / 3.0, 0.0);
            }
        }
        ControlGrid {
            points,
            weights: [[1.0; 4]; 4],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for i in 0..4 {
            for j in 0..4 {
                if !self.points[i][j].is_finite() {
                    return Err(Error::Domain(format!("non-finite control point at ({i},{j})")));
                }
                if !(self.weights[i][j] > 0.0) || !self.weights[i][j].is_finite() {
                    return Err(Error::Domain(format!(
                        "weight at ({i},{j}) must be strictly positive and finite, got {}",
                        self.weights[i][j]
                    )));
                }
            }
        }
        Ok(())
    }

    /// Evaluate position and first partials at `(u, v) ∈ [0,1]²`.
    pub fn eval(&self, u: f64, v: f64) -> Result<SurfacePoint> {
        if !(0.0..=1.0).contains(&u) || !(0.0..=1.0).contains(&v) {
            return Err(Error::Domain(format!("patch parameters ({u},{v}) outside [0,1]^2")));
        }
        Ok(self.eval_with_bases(&BasisPair::at(u, v)))
    }

    /// Position-only evaluation for the tessellation hot path.
    pub fn eval_position_with_bases(&self, bu: &[f64; 4], bv: &[f64; 4]) -> Vec3 {
        let mut num = Vec3::ZERO;
        let mut den = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                let w = self.weights[i][j] * bu[i] * bv[j];
                num += self.points[i][j] * w;
                den += w;
            }
        }
        num / den
    }

    /// Reverse-mode position gradients through precomputed bases; the
    /// tangent paths of `gradients_full` are skipped entirely.
    pub fn gradients_position_with_bases(&self, bu: &[f64; 4], bv: &[f64; 4], g_pos: Vec3) -> PatchGradients {
        let mut num = Vec3::ZERO;
        let mut den = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                let w = self.weights[i][j] * bu[i] * bv[j];
                num += self.points[i][j] * w;
                den += w;
            }
        }
        let s = num / den;
        let g_num = g_pos / den;
        let g_den = -g_pos.dot(s) / den;
        let mut out = PatchGradients::zero();
        for i in 0..4 {
            for j in 0..4 {
                let phi = bu[i] * bv[j];
                out.d_points[i][j] = g_num * (phi * self.weights[i][j]);
                out.d_weights[i][j] = phi * (g_num.dot(self.points[i][j]) + g_den);
            }
        }
        out
    }

    /// Evaluation hot path with precomputed bases. One pass accumulates the
    /// numerator/denominator polynomials and their u/v derivatives, then the
    /// quotient rule yields S, ∂S/∂u, ∂S/∂v.
    pub fn eval_with_bases(&self, b: &BasisPair) -> SurfacePoint {
        let mut num = Vec3::ZERO;
        let mut den = 0.0;
        let mut num_u = Vec3::ZERO;
        let mut den_u = 0.0;
        let mut num_v = Vec3::ZERO;
        let mut den_v = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                let w = self.weights[i][j];
                let wc = self.points[i][j] * w;
                let phi = b.bu[i] * b.bv[j];
                let phi_u = b.dbu[i] * b.bv[j];
                let phi_v = b.bu[i] * b.dbv[j];
                num += wc * phi;
                den += w * phi;
                num_u += wc * phi_u;
                den_u += w * phi_u;
                num_v += wc * phi_v;
                den_v += w * phi_v;
            }
        }
        let position = num / den;
        let du = (num_u - position * den_u) / den;
        let dv = (num_v - position * den_v) / den;
        SurfacePoint { position, du, dv }
    }

    /// Reverse-mode gradients of the surface position with respect to every
    /// control point component and weight:
    /// `∂S/∂c_ij = (B_i B_j w_ij / D) I` and `∂S/∂w_ij = B_i B_j (c_ij − S)/D`.
    pub fn gradients(&self, u: f64, v: f64, upstream: Vec3) -> Result<PatchGradients> {
        if !(0.0..=1.0).contains(&u) || !(0.0..=1.0).contains(&v) {
            return Err(Error::Domain(format!("patch parameters ({u},{v}) outside [0,1]^2")));
        }
        let b = BasisPair::at(u, v);
        Ok(self.gradients_full(&b, upstream, Vec3::ZERO, Vec3::ZERO))
    }

    /// Full reverse pass with cotangents on position, ∂S/∂u and ∂S/∂v.
    ///
    /// Mirrors `eval_with_bases`: the forward intermediates (N, D and their
    /// parameter derivatives) are re-accumulated, the quotient rule is
    /// reversed, and the basis products scatter into the 4×4 net.
    pub fn gradients_full(
        &self,
        b: &BasisPair,
        g_pos: Vec3,
        g_du: Vec3,
        g_dv: Vec3,
    ) -> PatchGradients {
        // Forward intermediates.
        let mut num = Vec3::ZERO;
        let mut den = 0.0;
        let mut num_u = Vec3::ZERO;
        let mut den_u = 0.0;
        let mut num_v = Vec3::ZERO;
        let mut den_v = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                let w = self.weights[i][j];
                let wc = self.points[i][j] * w;
                let phi = b.bu[i] * b.bv[j];
                let phi_u = b.dbu[i] * b.bv[j];
                let phi_v = b.bu[i] * b.dbv[j];
                num += wc * phi;
                den += w * phi;
                num_u += wc * phi_u;
                den_u += w * phi_u;
                num_v += wc * phi_v;
                den_v += w * phi_v;
            }
        }
        let s = num / den;
        let du = (num_u - s * den_u) / den;
        let dv = (num_v - s * den_v) / den;

        // Reverse through du = (N_u − S·D_u)/D and dv analogously.
        let mut g_num_u = Vec3::ZERO;
        let mut g_den_u = 0.0;
        let mut g_num_v = Vec3::ZERO;
        let mut g_den_v = 0.0;
        let mut g_s = g_pos;
        let mut g_den = 0.0;

        g_num_u += g_du / den;
        g_s += -g_du * (den_u / den);
        g_den_u += -g_du.dot(s) / den;
        g_den += -g_du.dot(du) / den;

        g_num_v += g_dv / den;
        g_s += -g_dv * (den_v / den);
        g_den_v += -g_dv.dot(s) / den;
        g_den += -g_dv.dot(dv) / den;

        // Reverse through S = N/D.
        let g_num = g_s / den;
        g_den += -g_s.dot(s) / den;

        // Scatter into the control net.
        let mut out = PatchGradients::zero();
        for i in 0..4 {
            for j in 0..4 {
                let phi = b.bu[i] * b.bv[j];
                let phi_u = b.dbu[i] * b.bv[j];
                let phi_v = b.bu[i] * b.dbv[j];
                let w = self.weights[i][j];
                let c = self.points[i][j];
                out.d_points[i][j] = (g_num * phi + g_num_u * phi_u + g_num_v * phi_v) * w;
                out.d_weights[i][j] = phi * (g_num.dot(c) + g_den)
                    + phi_u * (g_num_u.dot(c) + g_den_u)
                    + phi_v * (g_num_v.dot(c) + g_den_v);
            }
        }
        out
    }

    /// Tessellate on the closed uniform grid `u,v = k/(r-1)` with `r ≥ 2`.
    ///
    /// Produces `r²` samples and `2(r-1)²` triangles. Winding follows the
    /// geometric normal `du × dv`, reversed when `flipped` is set, so that
    /// triangle normals agree with the patch orientation flag.
    pub fn tessellate(&self, r: usize, flipped: bool) -> Result<PatchMesh> {
        if r < 2 {
            return Err(Error::Config(format!("tessellation resolution must be >= 2, got {r}")));
        }
        let params = closed_uniform_params(r);
        let bu: Vec<[f64; 4]> = params.iter().map(|&u| bernstein_cubic(u)).collect();
        let dbu: Vec<[f64; 4]> = params.iter().map(|&u| bernstein_cubic_deriv(u)).collect();
        let mut points = Vec::with_capacity(r * r);
        for iv in 0..r {
            for iu in 0..r {
                let b = BasisPair {
                    bu: bu[iu],
                    bv: bu[iv],
                    dbu: dbu[iu],
                    dbv: dbu[iv],
                };
                points.push(self.eval_with_bases(&b));
            }
        }
        let triangles = grid_triangles(r, flipped, |iu, iv| (iv * r + iu) as u32);
        Ok(PatchMesh {
            points,
            triangles,
            resolution: r,
        })
    }
}

/// Closed uniform parameter row `k/(r-1)` with exact endpoints.
pub fn closed_uniform_params(r: usize) -> Vec<f64> {
    (0..r)
        .map(|k| {
            if k == r - 1 {
                1.0
            } else {
                k as f64 / (r - 1) as f64
            }
        })
        .collect()
}

/// Two triangles per uv cell with winding chosen from the orientation flag.
pub fn grid_triangles(r: usize, flipped: bool, vertex_id: impl Fn(usize, usize) -> u32) -> Vec<[u32; 3]> {
    let mut triangles = Vec::with_capacity(2 * (r - 1) * (r - 1));
    for iv in 0..r - 1 {
        for iu in 0..r - 1 {
            let a = vertex_id(iu, iv);
            let b = vertex_id(iu + 1, iv);
            let c = vertex_id(iu + 1, iv + 1);
            let d = vertex_id(iu, iv + 1);
            if flipped {
                triangles.push([a, c, b]);
                triangles.push([a, d, c]);
            } else {
                triangles.push([a, b, c]);
                triangles.push([a, c, d]);
            }
        }
    }
    triangles
}
