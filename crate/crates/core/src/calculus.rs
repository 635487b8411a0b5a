//! Finite-difference Laplacians, exact Laplacians of radial power-log terms,
//! the mollifier and the mollifier-side transfer of Laplacians.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex, OnceLock};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::geometry::{
    ball_rule_composite, check_dim, gauss_legendre_on, norm, pairwise_sum, sphere_area,
    QuadratureRule,
};

/// Largest supported order of a nested finite-difference Laplacian.
pub const MAX_FD_ORDER: usize = 4;

/// Largest Laplacian order tabulated for the mollifier profile.
pub const MAX_TRANSFER_ORDER: usize = 4;

/// Step floors for k-fold nested stencils. Round-off grows like
/// `eps * |f| / h^(2k)`, so higher orders need coarser steps.
pub const NESTED_STEP_FLOOR: [f64; MAX_FD_ORDER + 1] = [0.0, 0.0, 5e-3, 3e-2, 6e-2];

/// Step used for a k-fold nested stencil when the base step is `h`.
pub fn nested_step(k: usize, h: f64) -> f64 {
    h.max(NESTED_STEP_FLOOR[k.min(MAX_FD_ORDER)])
}

// ---------------------------------------------------------------------------
// Radial term algebra

/// `coefficient * r^power * log(1/r)^log_exponent` with `log_exponent` in {0, 1}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RadialTerm {
    pub coefficient: f64,
    pub power: f64,
    pub log_exponent: u8,
}

impl RadialTerm {
    pub fn power(coefficient: f64, power: f64) -> Self {
        RadialTerm {
            coefficient,
            power,
            log_exponent: 0,
        }
    }

    pub fn power_log(coefficient: f64, power: f64) -> Self {
        RadialTerm {
            coefficient,
            power,
            log_exponent: 1,
        }
    }

    pub fn eval(&self, r: f64) -> f64 {
        if r == 0.0 {
            return if self.power > 0.0 {
                0.0
            } else if self.power == 0.0 && self.log_exponent == 0 {
                self.coefficient
            } else {
                f64::INFINITY.copysign(self.coefficient)
            };
        }
        let base = self.coefficient * r.powf(self.power);
        if self.log_exponent == 1 {
            base * (1.0 / r).ln()
        } else {
            base
        }
    }

    /// True when the term is a polynomial in x (an even power without log).
    pub fn is_smooth(&self) -> bool {
        self.log_exponent == 0
            && self.power >= 0.0
            && self.power.fract() == 0.0
            && (self.power as u64).is_multiple_of(2)
    }
}

/// Merge terms with equal `(power, log_exponent)` and drop zero coefficients.
/// Output is sorted by descending power, log terms first.
pub fn normalize_terms(terms: impl IntoIterator<Item = RadialTerm>) -> Vec<RadialTerm> {
    let mut acc: BTreeMap<(u8, i64), RadialTerm> = BTreeMap::new();
    for t in terms {
        if t.coefficient == 0.0 {
            continue;
        }
        let key = (1 - t.log_exponent, -ordered_key(t.power));
        acc.entry(key)
            .and_modify(|e| e.coefficient += t.coefficient)
            .or_insert(t);
    }
    let mut out: Vec<RadialTerm> = acc.into_values().filter(|t| t.coefficient != 0.0).collect();
    out.sort_by(|a, b| {
        b.power
            .total_cmp(&a.power)
            .then(b.log_exponent.cmp(&a.log_exponent))
    });
    out
}

fn ordered_key(x: f64) -> i64 {
    let bits = x.to_bits() as i64;
    if bits < 0 {
        i64::MIN - bits
    } else {
        bits
    }
}

/// Exact Laplacian in R^n of a radial term:
/// `D(r^a) = a(a+n-2) r^(a-2)` and
/// `D(r^a L) = a(a+n-2) r^(a-2) L - (2a+n-2) r^(a-2)` with `L = log(1/r)`.
pub fn radial_laplacian(t: &RadialTerm, n: usize) -> Vec<RadialTerm> {
    let a = t.power;
    let nf = n as f64;
    let main = t.coefficient * a * (a + nf - 2.0);
    let mut out = vec![RadialTerm {
        coefficient: main,
        power: a - 2.0,
        log_exponent: t.log_exponent,
    }];
    if t.log_exponent == 1 {
        out.push(RadialTerm::power(
            -t.coefficient * (2.0 * a + nf - 2.0),
            a - 2.0,
        ));
    }
    normalize_terms(out)
}

/// Laplacian of a sum of radial terms.
pub fn radial_laplacian_sum(terms: &[RadialTerm], n: usize) -> Vec<RadialTerm> {
    normalize_terms(terms.iter().flat_map(|t| radial_laplacian(t, n)))
}

/// Whether `|x|^(2m-n)` is a non-removable fundamental solution with a
/// nonzero `A_{m,n}`: n >= 3 and either n odd, or n even with m <= n/2 - 1.
pub fn gamma_covered(m: usize, n: usize) -> bool {
    n >= 3 && m >= 1 && (n % 2 == 1 || m < n / 2)
}

/// `A_{m,n}` in `D^(m-1) |x|^(2m-n) = A_{m,n} |x|^(2-n)`, obtained by applying
/// the radial Laplacian `m - 1` times.
pub fn amn_constant(m: usize, n: usize) -> Result<f64> {
    if !gamma_covered(m, n) {
        return Err(Error::NotCovered { m, n });
    }
    let mut terms = vec![RadialTerm::power(1.0, 2.0 * m as f64 - n as f64)];
    for _ in 1..m {
        terms = radial_laplacian_sum(&terms, n);
    }
    match terms.as_slice() {
        [t] if t.log_exponent == 0 && t.power == 2.0 - n as f64 => Ok(t.coefficient),
        _ => Err(Error::NotCovered { m, n }),
    }
}

// ---------------------------------------------------------------------------
// Finite differences

type Stencil = Arc<Vec<(Vec<i32>, f64)>>;

fn stencil_cache() -> &'static Mutex<HashMap<(usize, usize), Stencil>> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Stencil>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Integer offsets and weights of the k-fold composed (2n+1)-point
/// Laplacian stencil, scaled so that `D_h^k f(x) = h^(-2k) sum w f(x + h o)`.
pub fn composed_stencil(n: usize, k: usize) -> Stencil {
    if let Some(s) = stencil_cache().lock().unwrap().get(&(n, k)) {
        return Arc::clone(s);
    }
    let mut current: BTreeMap<Vec<i32>, f64> = BTreeMap::new();
    current.insert(vec![0; n], 1.0);
    for _ in 0..k {
        let mut next: BTreeMap<Vec<i32>, f64> = BTreeMap::new();
        for (off, w) in &current {
            *next.entry(off.clone()).or_insert(0.0) -= 2.0 * n as f64 * w;
            for i in 0..n {
                for d in [-1, 1] {
                    let mut o = off.clone();
                    o[i] += d;
                    *next.entry(o).or_insert(0.0) += w;
                }
            }
        }
        next.retain(|_, w| *w != 0.0);
        current = next;
    }
    let stencil = Arc::new(current.into_iter().collect::<Vec<_>>());
    stencil_cache()
        .lock()
        .unwrap()
        .insert((n, k), Arc::clone(&stencil));
    stencil
}

/// Second-order central (2n+1)-point approximation of `Df(x)`.
pub fn laplacian_fd(f: &dyn ScalarField, x: &[f64], h: f64) -> Result<f64> {
    iterated_laplacian_fd(f, x, 1, h)
}

/// `D_h^k f(x)` by composing the central stencil k times. The error is
/// O(h^2) with a constant growing in k, and round-off grows like
/// `eps |f| / h^(2k)`.
pub fn iterated_laplacian_fd(f: &dyn ScalarField, x: &[f64], k: usize, h: f64) -> Result<f64> {
    iterated_laplacian_fd_estimate(f, x, k, h).map(|e| e.value)
}

/// A computed sum together with the sum of the absolute values of its terms
/// (same scaling). `magnitude * eps` bounds the cancellation error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub magnitude: f64,
}

impl Estimate {
    /// Round-off scale of the value: `magnitude` times a generous multiple of
    /// machine epsilon.
    pub fn noise(&self) -> f64 {
        1e3 * f64::EPSILON * self.magnitude
    }
}

/// [`iterated_laplacian_fd`] with its cancellation magnitude.
pub fn iterated_laplacian_fd_estimate(
    f: &dyn ScalarField,
    x: &[f64],
    k: usize,
    h: f64,
) -> Result<Estimate> {
    let meta = f.meta();
    if x.len() != meta.n {
        return Err(Error::DimensionMismatch {
            expected: meta.n,
            got: x.len(),
        });
    }
    if k == 0 {
        let v = f.eval(x);
        return Ok(Estimate {
            value: v,
            magnitude: v.abs(),
        });
    }
    if k > MAX_FD_ORDER {
        return Err(Error::InvalidParameter(format!(
            "nested finite-difference order {k} exceeds {MAX_FD_ORDER}"
        )));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidParameter(format!("step h={h} must be positive")));
    }
    if meta.punctured && norm(x) <= k as f64 * h {
        return Err(Error::StencilOutsideDomain {
            point: x.to_vec(),
            reason: format!("stencil of reach {} touches the puncture", k as f64 * h),
        });
    }
    let stencil = composed_stencil(meta.n, k);
    let mut p = vec![0.0; meta.n];
    let mut terms = Vec::with_capacity(stencil.len());
    for (off, w) in stencil.iter() {
        for ((pi, xi), oi) in p.iter_mut().zip(x).zip(off) {
            *pi = xi + h * f64::from(*oi);
        }
        if norm(&p) >= meta.domain_radius {
            return Err(Error::StencilOutsideDomain {
                point: p.clone(),
                reason: format!("outside the ball of radius {}", meta.domain_radius),
            });
        }
        terms.push(w * f.eval(&p));
    }
    let scale = h.powi(2 * k as i32);
    let magnitude = terms.iter().map(|t| t.abs()).sum::<f64>() / scale;
    Ok(Estimate {
        value: pairwise_sum(&terms) / scale,
        magnitude,
    })
}

// ---------------------------------------------------------------------------
// Mollifier

const PLATEAU: f64 = 0.5;
const PROFILE_GRID: usize = 4096;
const MASS_PANELS: usize = 64;

/// C-infinity step: 1 at t <= 0, 0 at t >= 1, built from `exp(-1/t)`.
fn smooth_step_down(t: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    if t >= 1.0 {
        return 0.0;
    }
    let a = (-1.0 / (1.0 - t)).exp();
    let b = (-1.0 / t).exp();
    a / (a + b)
}

fn profile_with_cutoff(r: f64, cutoff: f64) -> f64 {
    if r <= PLATEAU {
        1.0
    } else if r >= cutoff {
        0.0
    } else {
        smooth_step_down((r - PLATEAU) / (cutoff - PLATEAU))
    }
}

fn mass_with_cutoff(n: usize, cutoff: f64) -> f64 {
    let plateau = PLATEAU.powi(n as i32) / n as f64;
    let width = (cutoff - PLATEAU) / MASS_PANELS as f64;
    let mut terms = Vec::with_capacity(MASS_PANELS * 16);
    for p in 0..MASS_PANELS {
        let a = PLATEAU + p as f64 * width;
        for (r, w) in gauss_legendre_on(16, a, a + width) {
            terms.push(w * profile_with_cutoff(r, cutoff) * r.powi(n as i32 - 1));
        }
    }
    sphere_area(n) * (plateau + pairwise_sum(&terms))
}

/// Radially symmetric bump with `phi = 1` on `|z| <= 1/2`, support in
/// `|z| <= cutoff <= 1` and unit mass. The iterated radial Laplacians of the
/// profile are tabulated once on a uniform grid.
#[derive(Debug, Clone)]
pub struct Mollifier {
    n: usize,
    cutoff: f64,
    grid_step: f64,
    laplacians: Vec<Vec<f64>>,
    rule: QuadratureRule,
    annulus_rule: QuadratureRule,
}

impl Mollifier {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn plateau(&self) -> f64 {
        PLATEAU
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    /// Radial profile psi with `phi(z) = psi(|z|)`.
    pub fn profile(&self, r: f64) -> f64 {
        profile_with_cutoff(r, self.cutoff)
    }

    pub fn phi(&self, z: &[f64]) -> f64 {
        self.profile(norm(z))
    }

    /// `(D^k phi)` as a function of the radius, interpolated from the grid.
    pub fn laplacian_profile(&self, k: usize, r: f64) -> f64 {
        if k == 0 {
            return self.profile(r);
        }
        if r <= PLATEAU || r >= self.cutoff {
            return 0.0;
        }
        let g = &self.laplacians[k];
        let s = r / self.grid_step;
        let i = (s.floor() as usize).clamp(1, g.len() - 3);
        let u = s - i as f64;
        // cubic Lagrange through i-1, i, i+1, i+2
        let (p0, p1, p2, p3) = (g[i - 1], g[i], g[i + 1], g[i + 2]);
        -u * (u - 1.0) * (u - 2.0) / 6.0 * p0 + (u + 1.0) * (u - 1.0) * (u - 2.0) / 2.0 * p1
            - (u + 1.0) * u * (u - 2.0) / 2.0 * p2
            + (u + 1.0) * u * (u - 1.0) / 6.0 * p3
    }

    /// Ball quadrature adapted to the profile breakpoints `1/2` and `cutoff`.
    pub fn rule(&self) -> &QuadratureRule {
        &self.rule
    }

    /// Quadrature on the transition annulus `1/2 <= |z| <= cutoff`, the
    /// support of `D^k phi` for k >= 1.
    pub fn annulus_rule(&self) -> &QuadratureRule {
        &self.annulus_rule
    }

    /// `int phi` evaluated with [`Mollifier::rule`].
    pub fn mass(&self) -> f64 {
        let terms: Vec<f64> = self
            .rule
            .nodes()
            .zip(self.rule.weights())
            .map(|(z, w)| w * self.phi(z))
            .collect();
        pairwise_sum(&terms)
    }
}

fn tabulate_laplacians(n: usize, cutoff: f64) -> (f64, Vec<Vec<f64>>) {
    let h = 1.0 / PROFILE_GRID as f64;
    let len = PROFILE_GRID + 9;
    let mut grids = Vec::with_capacity(MAX_TRANSFER_ORDER + 1);
    grids.push(
        (0..len)
            .map(|i| profile_with_cutoff(i as f64 * h, cutoff))
            .collect::<Vec<_>>(),
    );
    let nm1 = n as f64 - 1.0;
    for _ in 0..MAX_TRANSFER_ORDER {
        let g = grids.last().unwrap();
        // even extension across r = 0, zero beyond the support
        let at = |i: isize| -> f64 {
            let j = i.unsigned_abs();
            if j < len {
                g[j]
            } else {
                0.0
            }
        };
        let next: Vec<f64> = (0..len as isize)
            .map(|i| {
                let d2 = (2.0 * at(i - 3) - 27.0 * at(i - 2) + 270.0 * at(i - 1) - 490.0 * at(i)
                    + 270.0 * at(i + 1)
                    - 27.0 * at(i + 2)
                    + 2.0 * at(i + 3))
                    / (180.0 * h * h);
                if i == 0 {
                    return n as f64 * d2;
                }
                let d1 = (-at(i - 3) + 9.0 * at(i - 2) - 45.0 * at(i - 1) + 45.0 * at(i + 1)
                    - 9.0 * at(i + 2)
                    + at(i + 3))
                    / (60.0 * h);
                d2 + nm1 * d1 / (i as f64 * h)
            })
            .collect();
        grids.push(next);
    }
    (h, grids)
}

/// Construct the mollifier for R^n: the cutoff is found by bisection so that
/// the mass is 1 to within 1e-12.
pub fn build_mollifier(n: usize) -> Result<Mollifier> {
    check_dim(n)?;
    let (mut lo, mut hi) = (PLATEAU, 1.0);
    if mass_with_cutoff(n, lo) >= 1.0 || mass_with_cutoff(n, hi) <= 1.0 {
        return Err(Error::Mollifier(format!(
            "no cutoff in (1/2, 1] gives unit mass for n={n}"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mass_with_cutoff(n, mid) < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    let cutoff = 0.5 * (lo + hi);
    if (mass_with_cutoff(n, cutoff) - 1.0).abs() > 1e-12 {
        return Err(Error::Mollifier("bisection did not converge".into()));
    }
    let (grid_step, laplacians) = tabulate_laplacians(n, cutoff);
    let sphere_level = if n <= 3 { 1 } else { 2 };
    let rule = ball_rule_composite(
        n,
        sphere_level,
        &[(0.0, PLATEAU, 8), (PLATEAU, cutoff, 64)],
    )?;
    let annulus_rule = ball_rule_composite(
        n,
        sphere_level,
        &[
            (PLATEAU, 0.5 * (PLATEAU + cutoff), 32),
            (0.5 * (PLATEAU + cutoff), cutoff, 32),
        ],
    )?;
    // The composite rules above start at 0 or 1/2; ball_rule_composite only
    // checks that segments are increasing, so the annulus rule is valid.
    Ok(Mollifier {
        n,
        cutoff,
        grid_step,
        laplacians,
        rule,
        annulus_rule,
    })
}

/// Shared mollifier for dimension n (construction is a pure function of n).
pub fn mollifier(n: usize) -> Result<Arc<Mollifier>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Mollifier>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(m) = cache.lock().unwrap().get(&n) {
        return Ok(Arc::clone(m));
    }
    let m = Arc::new(build_mollifier(n)?);
    cache.lock().unwrap().insert(n, Arc::clone(&m));
    Ok(m)
}

fn check_mollifier_support(f: &dyn ScalarField, eps: f64, x: &[f64]) -> Result<()> {
    let meta = f.meta();
    if x.len() != meta.n {
        return Err(Error::DimensionMismatch {
            expected: meta.n,
            got: x.len(),
        });
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidParameter(format!("radius eps={eps} must be positive")));
    }
    let r = norm(x);
    if r + eps >= meta.domain_radius {
        return Err(Error::Domain {
            point: x.to_vec(),
            reason: format!(
                "ball of radius {eps} leaves the domain of radius {}",
                meta.domain_radius
            ),
        });
    }
    if meta.punctured && r <= eps {
        return Err(Error::Domain {
            point: x.to_vec(),
            reason: format!("ball of radius {eps} contains the puncture"),
        });
    }
    Ok(())
}

/// `(phi_eps * f)(x) = eps^-n int_{|z|<=eps} f(x - z) phi(z / eps) dz`.
pub fn mollify(f: &dyn ScalarField, eps: f64, x: &[f64]) -> Result<f64> {
    check_mollifier_support(f, eps, x)?;
    let moll = mollifier(f.meta().n)?;
    let rule = moll.rule();
    let mut p = vec![0.0; x.len()];
    let mut terms = Vec::with_capacity(rule.len());
    for (i, (w, &wt)) in rule.nodes().zip(rule.weights()).enumerate() {
        for ((pi, xi), wi) in p.iter_mut().zip(x).zip(w) {
            *pi = xi - eps * wi;
        }
        let v = f.eval(&p);
        if !v.is_finite() {
            return Err(Error::NonFiniteIntegrand {
                index: i,
                node: p,
                value: v,
            });
        }
        terms.push(wt * moll.phi(w) * v);
    }
    Ok(pairwise_sum(&terms))
}

/// `((D^k phi_eps) * u)(x)` with `eps = |x| / 2`: the k Laplacians are moved
/// from u onto the mollifier. For u with `D^k u` harmonic near x this equals
/// `D^k u(x)`; only the smooth bump is differentiated, so it stays stable
/// arbitrarily close to the puncture.
pub fn laplacian_transfer(u: &dyn ScalarField, k: usize, x: &[f64]) -> Result<f64> {
    laplacian_transfer_estimate(u, k, x).map(|e| e.value)
}

/// [`laplacian_transfer`] with its cancellation magnitude.
pub fn laplacian_transfer_estimate(u: &dyn ScalarField, k: usize, x: &[f64]) -> Result<Estimate> {
    let meta = u.meta();
    if k + 1 > meta.m.max(1) {
        return Err(Error::InvalidParameter(format!(
            "transfer order k={k} exceeds m-1={}",
            meta.m.saturating_sub(1)
        )));
    }
    if k > MAX_TRANSFER_ORDER {
        return Err(Error::InvalidParameter(format!(
            "transfer order k={k} exceeds {MAX_TRANSFER_ORDER}"
        )));
    }
    let r = norm(x);
    if !(r > 0.0 && r <= 0.5 * meta.domain_radius) {
        return Err(Error::Domain {
            point: x.to_vec(),
            reason: format!(
                "transfer needs 0 < |x| <= {}",
                0.5 * meta.domain_radius
            ),
        });
    }
    let eps = 0.5 * r;
    if k == 0 {
        let v = mollify(u, eps, x)?;
        return Ok(Estimate {
            value: v,
            magnitude: v.abs(),
        });
    }
    check_mollifier_support(u, eps, x)?;
    let moll = mollifier(meta.n)?;
    let rule = moll.annulus_rule();
    let center = u.eval(x);
    let mut p = vec![0.0; x.len()];
    let mut terms = Vec::with_capacity(rule.len());
    let mut magnitude = 0.0;
    // int D^k phi = 0, so subtracting u(x) changes nothing but cancellation
    for (i, (w, &wt)) in rule.nodes().zip(rule.weights()).enumerate() {
        for ((pi, xi), wi) in p.iter_mut().zip(x).zip(w) {
            *pi = xi - eps * wi;
        }
        let v = u.eval(&p);
        if !v.is_finite() {
            return Err(Error::NonFiniteIntegrand {
                index: i,
                node: p,
                value: v,
            });
        }
        let kernel = wt * moll.laplacian_profile(k, norm(w));
        magnitude += kernel.abs() * (v.abs() + center.abs());
        terms.push(kernel * (v - center));
    }
    let scale = eps.powi(2 * k as i32);
    Ok(Estimate {
        value: pairwise_sum(&terms) / scale,
        magnitude: magnitude / scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{FieldExpr, FieldMeta, FnField};
    use approx::assert_abs_diff_eq;

    fn smooth(n: usize, m: usize, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> FnField {
        FnField::new(FieldMeta::smooth(n, m, 2.0), f)
    }

    #[test]
    fn radial_laplacian_examples() {
        assert_eq!(
            radial_laplacian(&RadialTerm::power(1.0, 2.0), 3),
            vec![RadialTerm::power(6.0, 0.0)]
        );
        assert!(radial_laplacian(&RadialTerm::power_log(1.0, 0.0), 2).is_empty());
        let mut t = vec![RadialTerm::power(1.0, 1.0)];
        for _ in 0..2 {
            t = radial_laplacian_sum(&t, 5);
        }
        assert_eq!(t, vec![RadialTerm::power(-8.0, -3.0)]);
    }

    #[test]
    fn radial_laplacian_of_log_term() {
        // D(r^2 log(1/r)) in R^3 = 6 r^0 log(1/r) - 5
        let t = radial_laplacian(&RadialTerm::power_log(1.0, 2.0), 3);
        assert_eq!(
            t,
            vec![RadialTerm::power_log(6.0, 0.0), RadialTerm::power(-5.0, 0.0)]
        );
    }

    #[test]
    fn amn_examples() {
        assert_eq!(amn_constant(2, 3).unwrap(), 2.0);
        assert_eq!(amn_constant(3, 5).unwrap(), -8.0);
        assert_eq!(amn_constant(1, 3).unwrap(), 1.0);
        assert_eq!(amn_constant(2, 5).unwrap(), -2.0);
        assert!(matches!(amn_constant(2, 4), Err(Error::NotCovered { .. })));
        assert!(matches!(amn_constant(3, 4), Err(Error::NotCovered { .. })));
        assert!(matches!(amn_constant(1, 2), Err(Error::NotCovered { .. })));
        assert_eq!(amn_constant(2, 6).unwrap(), -4.0);
    }

    /// Independent product formula `prod_{j=0}^{m-2} (2m-n-2j)(2m-2-2j)`.
    fn amn_product(m: usize, n: usize) -> f64 {
        (0..m.saturating_sub(1))
            .map(|j| {
                let (m, n, j) = (m as f64, n as f64, j as f64);
                (2.0 * m - n - 2.0 * j) * (2.0 * m - 2.0 - 2.0 * j)
            })
            .product()
    }

    #[test]
    fn amn_nonzero_and_matches_product_formula() {
        for n in 3..=6 {
            for m in 1..=5 {
                if gamma_covered(m, n) {
                    let a = amn_constant(m, n).unwrap();
                    assert_ne!(a, 0.0);
                    assert_eq!(a, amn_product(m, n), "m={m} n={n}");
                }
            }
        }
    }

    #[test]
    fn laplacian_fd_examples() {
        let r2 = smooth(3, 1, |x| x.iter().map(|c| c * c).sum());
        let v = laplacian_fd(&r2, &[0.1, -0.2, 0.3], 1e-3).unwrap();
        assert_abs_diff_eq!(v, 6.0, epsilon = 1e-6);
        let xy = smooth(3, 1, |x| x[0] * x[1]);
        assert_abs_diff_eq!(laplacian_fd(&xy, &[0.3, 0.2, 0.1], 1e-3).unwrap(), 0.0, epsilon = 1e-8);
        let inv = FieldExpr::parse("r^-1", 3).unwrap().into_field(1, 2.0);
        // Leading truncation term h^2/12 * sum d^4 f/dx_i^4 = 1.12e-4 here.
        let v = laplacian_fd(&inv, &[0.5, 0.0, 0.0], 1e-3).unwrap();
        assert_abs_diff_eq!(v, 1344.0e-6 / 12.0, epsilon = 1e-6);
        let v = laplacian_fd(&inv, &[0.5, 0.0, 0.0], 5e-4).unwrap();
        assert_abs_diff_eq!(v, 0.0, epsilon = 1e-4);
    }

    #[test]
    fn iterated_fd_examples() {
        let r4 = FieldExpr::parse("r^4", 3).unwrap().into_field(3, 2.0);
        let v = iterated_laplacian_fd(&r4, &[0.5, 0.0, 0.0], 2, 2e-3).unwrap();
        assert_abs_diff_eq!(v, 120.0, epsilon = 0.1);
        assert_eq!(iterated_laplacian_fd(&r4, &[0.5, 0.0, 0.0], 0, 2e-3).unwrap(), 0.0625);
        let gamma = FieldExpr::parse("r", 3).unwrap().into_field(2, 2.0);
        let v = iterated_laplacian_fd(&gamma, &[0.0, 0.5, 0.0], 1, 1e-3).unwrap();
        assert_abs_diff_eq!(v, 4.0, epsilon = 1e-3);
    }

    #[test]
    fn fd_stencil_domain_errors() {
        let f = FieldExpr::parse("r^-1", 3).unwrap().into_field(1, 1.0);
        assert!(matches!(
            laplacian_fd(&f, &[0.9995, 0.0, 0.0], 1e-3),
            Err(Error::StencilOutsideDomain { .. })
        ));
        assert!(matches!(
            laplacian_fd(&f, &[5e-4, 0.0, 0.0], 1e-3),
            Err(Error::StencilOutsideDomain { .. })
        ));
        assert!(iterated_laplacian_fd(&f, &[0.5, 0.0, 0.0], 5, 1e-2).is_err());
    }

    #[test]
    fn composed_stencil_weights_sum_to_zero() {
        for n in 2..=4 {
            for k in 1..=3 {
                let s = composed_stencil(n, k);
                let total: f64 = s.iter().map(|(_, w)| w).sum();
                assert_eq!(total, 0.0);
            }
        }
        assert_eq!(composed_stencil(2, 1).len(), 5);
    }

    #[test]
    fn radial_algebra_agrees_with_fd() {
        for n in [2usize, 3] {
            for &a in &[-2.0, -1.5, -1.0, 0.5, 1.0, 2.5, 3.0, 4.0] {
                let f = FieldExpr::from_radial(n, vec![RadialTerm::power(1.0, a)]).into_field(1, 2.0);
                let exact: f64 = radial_laplacian(&RadialTerm::power(1.0, a), n)
                    .iter()
                    .map(|t| t.eval(0.5))
                    .sum();
                let mut x = vec![0.0; n];
                x[0] = 0.3;
                x[1] = 0.4;
                let fd = laplacian_fd(&f, &x, 1e-3).unwrap();
                assert!((fd - exact).abs() <= 1e-3, "n={n} a={a}: {fd} vs {exact}");
            }
        }
    }

    #[test]
    fn mollifier_invariants() {
        for n in 2..=6 {
            let m = build_mollifier(n).unwrap();
            assert!(m.cutoff() > 0.5 && m.cutoff() <= 1.0);
            assert_eq!(m.phi(&vec![0.3 / (n as f64).sqrt(); n]), 1.0);
            let mut far = vec![0.0; n];
            far[0] = 1.05;
            assert_eq!(m.phi(&far), 0.0);
            assert!((m.mass() - 1.0).abs() <= 1e-8, "n={n}: mass {}", m.mass());
            for i in 0..200 {
                let p = m.profile(i as f64 / 199.0);
                assert!((0.0..=1.0).contains(&p));
            }
        }
    }

    #[test]
    fn laplacian_profile_matches_fd_of_profile() {
        let m = build_mollifier(3).unwrap();
        let r = 0.5 * (0.5 + m.cutoff());
        let h = 1e-4;
        let psi = |r: f64| m.profile(r);
        let lap = (psi(r + h) - 2.0 * psi(r) + psi(r - h)) / (h * h)
            + 2.0 * (psi(r + h) - psi(r - h)) / (2.0 * h) / r;
        assert!((m.laplacian_profile(1, r) - lap).abs() <= 1e-3 * lap.abs().max(1.0));
    }

    #[test]
    fn mollify_examples() {
        let c = smooth(3, 1, |_| 2.5);
        assert_abs_diff_eq!(mollify(&c, 0.2, &[0.1, 0.0, 0.0]).unwrap(), 2.5, epsilon = 1e-8);
        let xy = smooth(3, 1, |x| x[0] * x[1]);
        let x = [0.4, 0.4, 0.0];
        let eps = norm(&x) / 2.0;
        assert_abs_diff_eq!(mollify(&xy, eps, &x).unwrap(), 0.16, epsilon = 1e-6);
        let lin = smooth(2, 1, |x| x[0]);
        assert_abs_diff_eq!(mollify(&lin, 0.1, &[0.5, 0.0]).unwrap(), 0.5, epsilon = 1e-7);
    }

    #[test]
    fn transfer_examples() {
        let harmonic = smooth(3, 2, |x| x[0] * x[1] - x[2] * x[2] + 0.5 * (x[0] * x[0] + x[1] * x[1]));
        let v = laplacian_transfer(&harmonic, 1, &[0.3, 0.1, 0.2]).unwrap();
        assert_abs_diff_eq!(v, 0.0, epsilon = 1e-4);
        let r2 = smooth(3, 2, |x| x.iter().map(|c| c * c).sum());
        let v = laplacian_transfer(&r2, 1, &[0.5, 0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(v, 6.0, epsilon = 1e-3);
        let gamma = FieldExpr::parse("r", 3).unwrap().into_field(2, 1.25);
        let v = laplacian_transfer(&gamma, 1, &[0.0, 0.5, 0.0]).unwrap();
        assert_abs_diff_eq!(v, 4.0, epsilon = 5e-3);
    }

    #[test]
    fn transfer_rejects_order_and_domain() {
        let gamma = FieldExpr::parse("r", 3).unwrap().into_field(2, 1.25);
        assert!(laplacian_transfer(&gamma, 2, &[0.3, 0.0, 0.0]).is_err());
        assert!(laplacian_transfer(&gamma, 1, &[0.0, 0.0, 0.0]).is_err());
        assert!(laplacian_transfer(&gamma, 1, &[0.7, 0.0, 0.0]).is_err());
    }
}
