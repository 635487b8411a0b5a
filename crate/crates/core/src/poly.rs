//! Multivariate polynomials in the monomial basis: exact Laplacian, exact
//! Dirichlet solve on the unit ball, and least-squares fitting.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Largest total degree accepted by [`Polynomial::eval`]'s power table.
pub const MAX_DEGREE: u32 = 31;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Polynomial {
    n: usize,
    terms: BTreeMap<Vec<u32>, f64>,
}

impl Polynomial {
    pub fn zero(n: usize) -> Self {
        Polynomial {
            n,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(n: usize, c: f64) -> Self {
        let mut p = Polynomial::zero(n);
        p.add_term(vec![0; n], c);
        p
    }

    /// `c * x^alpha`; panics if `alpha.len() != n`.
    pub fn monomial(n: usize, c: f64, alpha: Vec<u32>) -> Self {
        assert_eq!(alpha.len(), n, "exponent vector length must equal n");
        let mut p = Polynomial::zero(n);
        p.add_term(alpha, c);
        p
    }

    /// `|x|^2`.
    pub fn r2(n: usize) -> Self {
        let mut p = Polynomial::zero(n);
        for i in 0..n {
            let mut e = vec![0; n];
            e[i] = 2;
            p.add_term(e, 1.0);
        }
        p
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&[u32], f64)> {
        self.terms.iter().map(|(e, c)| (e.as_slice(), *c))
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|e| e.iter().sum()).max().unwrap_or(0)
    }

    pub fn add_term(&mut self, alpha: Vec<u32>, c: f64) {
        if c == 0.0 {
            return;
        }
        let slot = self.terms.entry(alpha).or_insert(0.0);
        *slot += c;
        if *slot == 0.0 {
            self.terms.retain(|_, v| *v != 0.0);
        }
    }

    pub fn add(&self, other: &Polynomial) -> Polynomial {
        assert_eq!(self.n, other.n, "adding polynomials of different dimension");
        let mut out = self.clone();
        for (e, c) in &other.terms {
            *out.terms.entry(e.clone()).or_insert(0.0) += c;
        }
        out.terms.retain(|_, c| *c != 0.0);
        out
    }

    pub fn sub(&self, other: &Polynomial) -> Polynomial {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, factor: f64) -> Polynomial {
        if factor == 0.0 {
            return Polynomial::zero(self.n);
        }
        Polynomial {
            n: self.n,
            terms: self.terms.iter().map(|(e, c)| (e.clone(), c * factor)).collect(),
        }
    }

    pub fn laplacian(&self) -> Polynomial {
        let mut out = Polynomial::zero(self.n);
        for (e, c) in &self.terms {
            for i in 0..self.n {
                if e[i] >= 2 {
                    let mut d = e.clone();
                    d[i] -= 2;
                    *out.terms.entry(d).or_insert(0.0) += c * f64::from(e[i] * (e[i] - 1));
                }
            }
        }
        out.terms.retain(|_, c| *c != 0.0);
        out
    }

    /// `|x|^2 * self`.
    pub fn mul_r2(&self) -> Polynomial {
        let mut out = Polynomial::zero(self.n);
        for (e, c) in &self.terms {
            for i in 0..self.n {
                let mut d = e.clone();
                d[i] += 2;
                *out.terms.entry(d).or_insert(0.0) += c;
            }
        }
        out.terms.retain(|_, c| *c != 0.0);
        out
    }

    /// Homogeneous component of degree `d`.
    pub fn homogeneous_part(&self, d: u32) -> Polynomial {
        Polynomial {
            n: self.n,
            terms: self
                .terms
                .iter()
                .filter(|(e, _)| e.iter().sum::<u32>() == d)
                .map(|(e, c)| (e.clone(), *c))
                .collect(),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.n);
        let deg = self.degree().min(MAX_DEGREE) as usize;
        let mut pow = [[1.0f64; MAX_DEGREE as usize + 1]; 6];
        for (i, &xi) in x.iter().enumerate().take(self.n) {
            for k in 1..=deg {
                pow[i][k] = pow[i][k - 1] * xi;
            }
        }
        let mut s = 0.0;
        for (e, c) in &self.terms {
            let mut t = *c;
            for (i, &k) in e.iter().enumerate() {
                t *= pow[i][k as usize];
            }
            s += t;
        }
        s
    }

    /// The unique `w` with `D w = self` in the unit ball and `w = 0` on the
    /// sphere. It has the form `(|x|^2 - 1) s` with `deg s = deg self`.
    ///
    /// With `A_d(f) = D(|x|^2 f) = (2n + 4d) f + |x|^2 D f` on homogeneous
    /// polynomials of degree d, the components of s satisfy
    /// `A_d(s_d) = p_d + D s_{d+2}`, solved from the top degree down.
    /// `A_d` is inverted by the finite series `sum_j g_j |x|^{2j} D^j`.
    pub fn dirichlet_solve(&self) -> Polynomial {
        let n = self.n as f64;
        let top = self.degree();
        let mut rhs: Vec<Polynomial> = (0..=top).map(|d| self.homogeneous_part(d)).collect();
        let mut s = Polynomial::zero(self.n);
        for d in (0..=top).rev() {
            let g = std::mem::take(&mut rhs[d as usize]);
            if g.is_zero() {
                continue;
            }
            let df = f64::from(d);
            let mut sd = Polynomial::zero(self.n);
            let mut lap_j = g;
            let mut gamma = 0.0;
            let mut j = 0u32;
            while !lap_j.is_zero() {
                let jf = f64::from(j);
                let mu = 2.0 * n + 4.0 * df + 2.0 * jf * (n - 2.0 + 2.0 * df - 2.0 * jf);
                gamma = if j == 0 { 1.0 / mu } else { -gamma / mu };
                let mut term = lap_j.scale(gamma);
                for _ in 0..j {
                    term = term.mul_r2();
                }
                sd = sd.add(&term);
                lap_j = lap_j.laplacian();
                j += 1;
            }
            if d >= 2 {
                let idx = (d - 2) as usize;
                rhs[idx] = rhs[idx].add(&sd.laplacian());
            }
            s = s.add(&sd);
        }
        s.mul_r2().sub(&s)
    }

    /// Least-squares fit of `values` at the `points` (flat, `n` per point)
    /// by a polynomial of total degree `<= degree`. Columns are scaled to unit
    /// norm and the system is solved by SVD with a relative singular value
    /// cutoff, so rank deficiency does not blow up the coefficients.
    pub fn fit(n: usize, degree: u32, points: &[f64], values: &[f64]) -> Result<Polynomial> {
        let basis = monomial_exponents(n, degree);
        let rows = values.len();
        if points.len() != rows * n {
            return Err(Error::DimensionMismatch {
                expected: rows * n,
                got: points.len(),
            });
        }
        if rows < basis.len() {
            return Err(Error::InvalidParameter(format!(
                "{rows} fit points cannot determine {} coefficients",
                basis.len()
            )));
        }
        let mut a = DMatrix::<f64>::zeros(rows, basis.len());
        for (r, x) in points.chunks_exact(n).enumerate() {
            for (c, e) in basis.iter().enumerate() {
                a[(r, c)] = e.iter().zip(x).map(|(&k, xi)| xi.powi(k as i32)).product();
            }
        }
        let scales: Vec<f64> = (0..basis.len())
            .map(|c| {
                let s = a.column(c).norm();
                if s > 0.0 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        for (c, s) in scales.iter().enumerate() {
            a.column_mut(c).unscale_mut(*s);
        }
        let b = DVector::from_column_slice(values);
        let svd = a.svd(true, true);
        let cutoff = 1e-13 * svd.singular_values.max();
        let coef = svd
            .solve(&b, cutoff)
            .map_err(|e| Error::LinearAlgebra(e.to_string()))?;
        let mut p = Polynomial::zero(n);
        for (c, e) in basis.into_iter().enumerate() {
            p.add_term(e, coef[c] / scales[c]);
        }
        Ok(p)
    }
}

/// Exponent vectors of all monomials in n variables with total degree
/// `<= degree`, graded by degree.
pub fn monomial_exponents(n: usize, degree: u32) -> Vec<Vec<u32>> {
    fn rec(n: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if cur.len() == n - 1 {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for k in (0..=left).rev() {
            cur.push(k);
            rec(n, left - k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    for d in 0..=degree {
        rec(n, d, &mut Vec::with_capacity(n), &mut out);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{FieldMeta, FnField};
    use crate::geometry::sphere_rule;
    use crate::kernel::{volume_potential, KernelContext};
    use approx::assert_abs_diff_eq;

    fn sample_poly(n: usize) -> Polynomial {
        let mut p = Polynomial::constant(n, 0.7);
        let mut e = vec![0; n];
        e[0] = 3;
        p.add_term(e.clone(), -1.5);
        e[0] = 1;
        e[1] = 2;
        p.add_term(e.clone(), 2.0);
        e = vec![0; n];
        e[n - 1] = 4;
        p.add_term(e, 0.25);
        p
    }

    #[test]
    fn monomial_counts() {
        assert_eq!(monomial_exponents(3, 8).len(), 165);
        assert_eq!(monomial_exponents(2, 12).len(), 91);
        assert_eq!(monomial_exponents(6, 4).len(), 210);
    }

    #[test]
    fn laplacian_and_eval() {
        let p = sample_poly(3);
        let lap = p.laplacian();
        // D(-1.5 x^3 + 2 x y^2 + 0.25 z^4) = -9 x + 4 x + 3 z^2
        let x = [0.3, -0.7, 0.2];
        assert_abs_diff_eq!(lap.eval(&x), -5.0 * 0.3 + 3.0 * 0.04, epsilon = 1e-14);
        assert_eq!(p.degree(), 4);
        assert_abs_diff_eq!(Polynomial::r2(3).eval(&x), 0.62, epsilon = 1e-15);
    }

    #[test]
    fn dirichlet_solve_inverts_laplacian_with_zero_trace() {
        for n in 2..=6 {
            let p = sample_poly(n);
            let w = p.dirichlet_solve();
            let residual = w.laplacian().sub(&p);
            assert!(
                residual.terms().all(|(_, c)| c.abs() < 1e-12),
                "n={n}: {residual:?}"
            );
            for y in sphere_rule(n, 1).unwrap().nodes() {
                assert_abs_diff_eq!(w.eval(y), 0.0, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn dirichlet_solve_torsion() {
        let w = Polynomial::constant(3, 1.0).dirichlet_solve();
        assert_abs_diff_eq!(w.eval(&[0.0; 3]), -1.0 / 6.0, epsilon = 1e-15);
    }

    #[test]
    fn dirichlet_solve_matches_quadrature_potential() {
        let ctx = KernelContext::new(3).unwrap();
        let p = sample_poly(3);
        let w = p.dirichlet_solve();
        let pc = p.clone();
        let f = FnField::new(FieldMeta::smooth(3, 1, 1.0), move |y| pc.eval(y));
        for x in [[0.0, 0.0, 0.0], [0.2, -0.3, 0.5], [0.6, 0.1, 0.1]] {
            let q = volume_potential(&ctx, &f, &x, 12).unwrap();
            assert_abs_diff_eq!(w.eval(&x), q, epsilon = 1e-8);
        }
    }

    #[test]
    fn fit_recovers_polynomial() {
        let p = sample_poly(3);
        let mut pts = Vec::new();
        let mut vals = Vec::new();
        for i in 0..400 {
            let t = i as f64;
            let x = [
                0.9 * (0.37 * t).sin(),
                0.9 * (0.61 * t + 1.0).sin() * 0.7,
                0.5 * (1.3 * t).cos(),
            ];
            vals.push(p.eval(&x));
            pts.extend_from_slice(&x);
        }
        let q = Polynomial::fit(3, 6, &pts, &vals).unwrap();
        for x in [[0.1, 0.2, 0.3], [-0.5, 0.5, 0.0]] {
            assert_abs_diff_eq!(q.eval(&x), p.eval(&x), epsilon = 1e-10);
        }
        assert!(Polynomial::fit(3, 6, &pts[..30], &vals[..10]).is_err());
    }
}
