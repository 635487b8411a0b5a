//! Green function and Poisson kernel of the Laplacian on the unit ball.
//!
//! Sign convention: `D_x G(x, y) = -delta_y`, `G = 0` on the sphere. The volume
//! potential carries an extra minus sign so that `D volume_potential(v) = v`.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::geometry::{
    check_dim, dist_sq, dot, integrate, norm_sq, pairwise_sum2_by, singular_ball_rule,
    sphere_area, Point, QuadratureRule,
};

/// Tolerance for "on the unit sphere".
pub const SPHERE_TOL: f64 = 1e-12;

/// Dimension-dependent constants of the kernels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelContext {
    n: usize,
    surface_area: f64,
    c_n: f64,
}

impl KernelContext {
    pub fn new(n: usize) -> Result<Self> {
        check_dim(n)?;
        let surface_area = sphere_area(n);
        let c_n = if n == 2 {
            1.0 / (2.0 * PI)
        } else {
            1.0 / ((n as f64 - 2.0) * surface_area)
        };
        Ok(KernelContext {
            n,
            surface_area,
            c_n,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn surface_area(&self) -> f64 {
        self.surface_area
    }

    pub fn normalization(&self) -> f64 {
        self.c_n
    }

    /// The constant `1/(2n)` bounding `sup_x int G(x, y) dy`.
    pub fn c1(&self) -> f64 {
        1.0 / (2.0 * self.n as f64)
    }

    fn check(&self, p: &[f64]) -> Result<()> {
        if p.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: p.len(),
            });
        }
        if p.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinitePoint(p.to_vec()));
        }
        Ok(())
    }

    /// `G(x, y)` by Kelvin reflection, written in the symmetric form
    /// `|y| |x - y*| = sqrt(|x|^2 |y|^2 - 2 x.y + 1)`, which also covers `y = 0`.
    pub fn green(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.check(x)?;
        self.check(y)?;
        if norm_sq(y) >= 1.0 {
            return Err(Error::Domain {
                point: y.to_vec(),
                reason: "green requires |y| < 1".into(),
            });
        }
        if norm_sq(x).sqrt() > 1.0 + SPHERE_TOL {
            return Err(Error::Domain {
                point: x.to_vec(),
                reason: "green requires |x| <= 1".into(),
            });
        }
        let d2 = dist_sq(x, y);
        if d2 == 0.0 {
            return Err(Error::Singularity(x.to_vec()));
        }
        Ok(self.green_unchecked(x, y, d2))
    }

    #[inline]
    fn green_unchecked(&self, x: &[f64], y: &[f64], d2: f64) -> f64 {
        let s2 = (norm_sq(x) * norm_sq(y) - 2.0 * dot(x, y) + 1.0).max(d2);
        if self.n == 2 {
            self.c_n * 0.5 * (s2 / d2).ln()
        } else {
            let e = 1.0 - 0.5 * self.n as f64;
            self.c_n * (d2.powf(e) - s2.powf(e))
        }
    }

    /// Poisson kernel `(1 - |x|^2) / (|S| |x - y|^n)` for `|y| = 1`.
    pub fn poisson(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.check(x)?;
        self.check(y)?;
        if norm_sq(x) >= 1.0 {
            return Err(Error::Domain {
                point: x.to_vec(),
                reason: "poisson requires |x| < 1".into(),
            });
        }
        if (norm_sq(y).sqrt() - 1.0).abs() > SPHERE_TOL {
            return Err(Error::Domain {
                point: y.to_vec(),
                reason: "poisson requires |y| = 1".into(),
            });
        }
        Ok(self.poisson_unchecked(1.0 - norm_sq(x), x, y))
    }

    #[inline]
    fn poisson_unchecked(&self, one_minus_x2: f64, x: &[f64], y: &[f64]) -> f64 {
        let d2 = dist_sq(x, y);
        let dn = match self.n {
            2 => d2,
            4 => d2 * d2,
            6 => d2 * d2 * d2,
            _ => d2.powi(self.n as i32 / 2) * d2.sqrt(),
        };
        one_minus_x2 / (self.surface_area * dn)
    }
}

/// Values of a function at the nodes of a sphere rule.
#[derive(Debug, Clone)]
pub struct SphereData {
    rule: Arc<QuadratureRule>,
    values: Vec<f64>,
}

impl SphereData {
    pub fn new(rule: Arc<QuadratureRule>, values: Vec<f64>) -> Result<Self> {
        if values.len() != rule.len() {
            return Err(Error::DimensionMismatch {
                expected: rule.len(),
                got: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteIntegrand {
                index,
                node: rule.node(index).to_vec(),
                value: values[index],
            });
        }
        Ok(SphereData { rule, values })
    }

    /// Sample `g` at the nodes of `rule`.
    pub fn sample(rule: Arc<QuadratureRule>, g: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let values = rule.nodes().map(g).collect();
        SphereData::new(rule, values)
    }

    pub fn rule(&self) -> &Arc<QuadratureRule> {
        &self.rule
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }
}

/// Poisson integral of sphere data at an interior point.
///
/// The quadrature sum is divided by the discrete integral of the kernel
/// itself, so constants are reproduced exactly and the result is a convex
/// combination of the data (a discrete maximum principle).
pub fn harmonic_extend(ctx: &KernelContext, g: &SphereData, x: &[f64]) -> Result<f64> {
    ctx.check(x)?;
    if g.rule.dim() != ctx.n {
        return Err(Error::DimensionMismatch {
            expected: ctx.n,
            got: g.rule.dim(),
        });
    }
    let x2 = norm_sq(x);
    if x2 >= 1.0 {
        return Err(Error::Domain {
            point: x.to_vec(),
            reason: "harmonic_extend requires |x| < 1".into(),
        });
    }
    Ok(harmonic_extend_unchecked(ctx, g, x, x2))
}

pub(crate) fn harmonic_extend_unchecked(
    ctx: &KernelContext,
    g: &SphereData,
    x: &[f64],
    x2: f64,
) -> f64 {
    let rule = &g.rule;
    let w = rule.weights();
    let (num, den) = pairwise_sum2_by(rule.len(), |i| {
        let k = w[i] * ctx.poisson_unchecked(1.0 - x2, x, rule.node(i));
        (k * g.values[i], k)
    });
    num / den
}

/// `-int_{B_1} G(x, y) v(y) dy`, so that `D_x` of the result is `v(x)` and it
/// vanishes on the sphere.
pub fn volume_potential(
    ctx: &KernelContext,
    v: &dyn ScalarField,
    x: &[f64],
    level: usize,
) -> Result<f64> {
    ctx.check(x)?;
    let center = Point::new(x.to_vec())?;
    let rule = singular_ball_rule(ctx.n, &center, level)?;
    let integral = integrate(&rule, |y| {
        let d2 = dist_sq(x, y);
        ctx.green_unchecked(x, y, d2) * v.eval(y)
    })?;
    Ok(-integral)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::laplacian_fd;
    use crate::field::{FieldMeta, FnField};
    use crate::geometry::{sphere_rule, sphere_rule_shared};
    use approx::assert_abs_diff_eq;

    fn fn_field(n: usize, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> FnField {
        FnField::new(FieldMeta::smooth(n, 1, 1.0), f)
    }

    #[test]
    fn context_constants() {
        let c3 = KernelContext::new(3).unwrap();
        assert_abs_diff_eq!(c3.surface_area(), 4.0 * PI, epsilon = 1e-12);
        assert_abs_diff_eq!(c3.normalization(), 1.0 / (4.0 * PI), epsilon = 1e-15);
        assert_abs_diff_eq!(KernelContext::new(2).unwrap().normalization(), 0.5 / PI);
        assert!(KernelContext::new(7).is_err());
    }

    #[test]
    fn green_examples() {
        let c3 = KernelContext::new(3).unwrap();
        let g = c3.green(&[0.0, 0.0, 0.0], &[0.5, 0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(g, (2.0 - 1.0) / (4.0 * PI), epsilon = 1e-9);
        let c2 = KernelContext::new(2).unwrap();
        assert_abs_diff_eq!(c2.green(&[1.0, 0.0], &[0.3, 0.2]).unwrap(), 0.0, epsilon = 1e-12);
        let x = [0.2, 0.1, 0.0];
        let y = [-0.4, 0.3, 0.1];
        assert_abs_diff_eq!(
            c3.green(&x, &y).unwrap(),
            c3.green(&y, &x).unwrap(),
            epsilon = 1e-12
        );
        // y = 0 limit
        let g0 = c2.green(&[0.5, 0.0], &[0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(g0, (2.0f64).ln() / (2.0 * PI), epsilon = 1e-15);
    }

    #[test]
    fn green_errors() {
        let c3 = KernelContext::new(3).unwrap();
        assert!(matches!(
            c3.green(&[0.1, 0.0, 0.0], &[0.1, 0.0, 0.0]),
            Err(Error::Singularity(_))
        ));
        assert!(matches!(
            c3.green(&[0.1, 0.0, 0.0], &[1.0, 0.0, 0.0]),
            Err(Error::Domain { .. })
        ));
        assert!(c3.green(&[0.1, 0.0], &[0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn green_positive_and_vanishing_on_sphere() {
        for n in 2..=6 {
            let ctx = KernelContext::new(n).unwrap();
            let mut y = vec![0.0; n];
            y[0] = 0.3;
            y[n - 1] = -0.2;
            let s = sphere_rule(n, 1).unwrap();
            for x in s.nodes() {
                assert!(ctx.green(x, &y).unwrap().abs() <= 1e-10);
                let inner: Vec<f64> = x.iter().map(|c| 0.6 * c).collect();
                assert!(ctx.green(&inner, &y).unwrap() > 0.0);
            }
        }
    }

    #[test]
    fn green_is_harmonic_away_from_pole() {
        for n in [2, 3, 5] {
            let ctx = KernelContext::new(n).unwrap();
            let mut y = vec![0.0; n];
            y[1] = 0.4;
            let yc = y.clone();
            let f = fn_field(n, move |x| ctx.green(x, &yc).unwrap());
            let mut x = vec![0.0; n];
            x[0] = -0.3;
            x[1] = 0.1;
            assert_abs_diff_eq!(laplacian_fd(&f, &x, 1e-3).unwrap(), 0.0, epsilon = 1e-4);
        }
    }

    #[test]
    fn poisson_examples() {
        let c3 = KernelContext::new(3).unwrap();
        assert_abs_diff_eq!(
            c3.poisson(&[0.0; 3], &[0.0, 1.0, 0.0]).unwrap(),
            1.0 / (4.0 * PI),
            epsilon = 1e-15
        );
        let c2 = KernelContext::new(2).unwrap();
        assert_abs_diff_eq!(
            c2.poisson(&[0.0; 2], &[1.0, 0.0]).unwrap(),
            0.5 / PI,
            epsilon = 1e-15
        );
        let rule = sphere_rule(3, 8).unwrap();
        let x = [0.3, -0.4, 0.0];
        let total = integrate(&rule, |y| c3.poisson(&x, y).unwrap()).unwrap();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-6);
        assert!(matches!(
            c3.poisson(&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]),
            Err(Error::Domain { .. })
        ));
        assert!(c3.poisson(&[0.0; 3], &[0.0, 0.9, 0.0]).is_err());
    }

    #[test]
    fn poisson_normalization_up_to_08() {
        for n in [2, 3] {
            let ctx = KernelContext::new(n).unwrap();
            let rule = sphere_rule(n, 8).unwrap();
            for r in [0.0, 0.4, 0.7, 0.8] {
                let mut x = vec![0.0; n];
                x[0] = r * 0.6;
                x[1] = r * 0.8;
                let total = integrate(&rule, |y| ctx.poisson(&x, y).unwrap()).unwrap();
                assert_abs_diff_eq!(total, 1.0, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn harmonic_extend_examples() {
        let ctx = KernelContext::new(3).unwrap();
        let rule = sphere_rule_shared(3, 8).unwrap();
        let six = SphereData::sample(rule.clone(), |_| 6.0).unwrap();
        assert_abs_diff_eq!(
            harmonic_extend(&ctx, &six, &[0.5, 0.5, 0.5]).unwrap(),
            6.0,
            epsilon = 1e-8
        );
        let y1 = SphereData::sample(rule.clone(), |y| y[0]).unwrap();
        assert_abs_diff_eq!(
            harmonic_extend(&ctx, &y1, &[0.3, 0.2, 0.1]).unwrap(),
            0.3,
            epsilon = 1e-6
        );
        let y1y2 = SphereData::sample(rule.clone(), |y| y[0] * y[1]).unwrap();
        assert_abs_diff_eq!(
            harmonic_extend(&ctx, &y1y2, &[0.2, -0.3, 0.4]).unwrap(),
            -0.06,
            epsilon = 1e-6
        );
        assert!(harmonic_extend(&ctx, &y1, &[1.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn harmonic_extend_maximum_principle() {
        let ctx = KernelContext::new(2).unwrap();
        let rule = sphere_rule_shared(2, 4).unwrap();
        let g = SphereData::sample(rule, |y| (5.0 * y[0]).sin() + y[1].powi(3)).unwrap();
        let gmax = g.max_abs();
        for i in 0..50 {
            let t = i as f64 * 0.37;
            let r = 0.999 * (i as f64 / 50.0);
            let v = harmonic_extend(&ctx, &g, &[r * t.cos(), r * t.sin()]).unwrap();
            assert!(v.abs() <= gmax + 1e-8);
        }
    }

    #[test]
    fn volume_potential_examples() {
        let ctx = KernelContext::new(3).unwrap();
        let one = fn_field(3, |_| 1.0);
        let v = volume_potential(&ctx, &one, &[0.0; 3], 8).unwrap();
        assert_abs_diff_eq!(v, -1.0 / 6.0, epsilon = 1e-5);
        let zero = fn_field(3, |_| 0.0);
        assert_eq!(volume_potential(&ctx, &zero, &[0.2, 0.1, 0.0], 8).unwrap(), 0.0);
    }

    #[test]
    fn torsion_function_and_c1() {
        for n in [2, 3, 4] {
            let ctx = KernelContext::new(n).unwrap();
            let one = fn_field(n, |_| 1.0);
            let mut best: f64 = 0.0;
            for r in [0.0, 0.2, 0.5, 0.8] {
                let mut x = vec![0.0; n];
                x[n - 1] = r;
                let w = -volume_potential(&ctx, &one, &x, 8).unwrap();
                assert_abs_diff_eq!(w, (1.0 - r * r) / (2.0 * n as f64), epsilon = 1e-6);
                best = best.max(w);
            }
            assert_abs_diff_eq!(best, ctx.c1(), epsilon = 1e-4);
        }
    }

    /// For harmonic h: the Dirichlet solution of D w = h is
    /// (|x|^2 - 1)/4 * int_0^1 t^(n/2 - 1) h(t x) dt.
    #[test]
    fn volume_potential_matches_almansi_oracle() {
        let ctx = KernelContext::new(3).unwrap();
        let h = fn_field(3, |y| y[0]);
        let x = [0.4, -0.2, 0.3];
        let r2: f64 = x.iter().map(|c| c * c).sum();
        let expect = (r2 - 1.0) * x[0] / 10.0;
        assert_abs_diff_eq!(volume_potential(&ctx, &h, &x, 8).unwrap(), expect, epsilon = 1e-7);
        let ctx2 = KernelContext::new(2).unwrap();
        let h2 = fn_field(2, |y| y[0] * y[0] - y[1] * y[1]);
        let x2 = [0.5, 0.3];
        let r2 = 0.34;
        let expect = (r2 - 1.0) / 4.0 * (0.25 - 0.09) / 3.0;
        assert_abs_diff_eq!(volume_potential(&ctx2, &h2, &x2, 8).unwrap(), expect, epsilon = 1e-7);
    }

    #[test]
    fn volume_potential_inverts_laplacian() {
        let ctx = KernelContext::new(3).unwrap();
        let v = fn_field(3, |y| 1.0 + y[0] * y[1] + y[2].powi(2));
        let vc = fn_field(3, |y| 1.0 + y[0] * y[1] + y[2].powi(2));
        let pot = fn_field(3, move |x| volume_potential(&ctx, &vc, x, 8).unwrap());
        for x in [[0.0, 0.0, 0.0], [0.3, 0.2, -0.1], [0.0, 0.5, 0.45]] {
            let lap = laplacian_fd(&pot, &x, 1e-2).unwrap();
            assert_abs_diff_eq!(lap, v.eval(&x), epsilon = 5e-3);
        }
    }
}
