//! Growth of a field near the puncture: dyadic sup profiles, exponent fits,
//! and the ratio test used to decide `o(gauge)` from finite data.
//!
//! A profile `M(r_j) = max |f|` over a scaled sphere rule at `r_j = r0 2^-j`
//! is compared with a gauge `g` through `q_j = M(r_j) / g(r_j)`. The little-o
//! condition holds when `q` is non-increasing (10% slack) and decays by at
//! least 10x; it fails when the decay is weaker than 2x; anything in between
//! is undecided.

use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::calculus::{
    iterated_laplacian_fd_estimate, laplacian_transfer_estimate, Estimate, RadialTerm,
};
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::geometry::{sphere_rule_shared, MAX_DIM};

pub const MIN_PROFILE_LEN: usize = 6;

/// Monotonicity slack: `q_{j+1} <= (1 + MONOTONE_SLACK) q_j`.
pub const MONOTONE_SLACK: f64 = 0.1;
/// `q_last / q_first` at or below this passes.
pub const DECAY_PASS: f64 = 0.1;
/// `q_last / q_first` at or above this fails.
pub const DECAY_FAIL: f64 = 0.5;

/// Sampling parameters for growth profiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProfileConfig {
    /// Largest radius.
    pub r0: f64,
    /// Number of dyadic radii.
    pub count: usize,
    /// Sphere rule level for the directions.
    pub level: usize,
    /// Below this radius `D^k u` is computed by mollifier transfer instead of
    /// finite differences.
    pub transfer_radius: f64,
    /// Finite-difference step at radius r is `r / step_divisor`.
    pub step_divisor: f64,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        ProfileConfig {
            r0: 0.4,
            count: 8,
            level: 1,
            transfer_radius: 0.05,
            step_divisor: 20.0,
        }
    }
}

impl ProfileConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.r0 > 0.0 && self.r0.is_finite()) {
            return Err(Error::InvalidParameter(format!("r0={} must be positive", self.r0)));
        }
        if self.count < MIN_PROFILE_LEN {
            return Err(Error::InvalidParameter(format!(
                "profiles need at least {MIN_PROFILE_LEN} radii, got {}",
                self.count
            )));
        }
        if self.level == 0 {
            return Err(Error::InvalidLevel(0));
        }
        if !(self.step_divisor > 4.0) {
            return Err(Error::InvalidParameter(
                "step divisor must exceed 4 so nested stencils avoid the puncture".into(),
            ));
        }
        Ok(())
    }

    pub fn radii(&self) -> Vec<f64> {
        (0..self.count)
            .map(|j| self.r0 * 0.5f64.powi(j as i32))
            .collect()
    }
}

/// Sup of |f| on dyadic spheres, radii strictly decreasing.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadialProfile {
    radii: Vec<f64>,
    max_abs: Vec<f64>,
}

impl RadialProfile {
    pub fn new(radii: Vec<f64>, max_abs: Vec<f64>) -> Result<Self> {
        if radii.len() != max_abs.len() || radii.len() < MIN_PROFILE_LEN {
            return Err(Error::InvalidParameter(format!(
                "profile needs equal-length lists of at least {MIN_PROFILE_LEN} entries"
            )));
        }
        if radii.iter().any(|r| !(*r > 0.0)) || radii.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidParameter(
                "profile radii must be positive and strictly decreasing".into(),
            ));
        }
        if max_abs.iter().any(|m| !(*m >= 0.0) || !m.is_finite()) {
            return Err(Error::InvalidParameter(
                "profile maxima must be finite and non-negative".into(),
            ));
        }
        Ok(RadialProfile { radii, max_abs })
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn max_abs(&self) -> &[f64] {
        &self.max_abs
    }

    pub fn scaled(&self, c: f64) -> RadialProfile {
        RadialProfile {
            radii: self.radii.clone(),
            max_abs: self.max_abs.iter().map(|m| m * c.abs()).collect(),
        }
    }
}

/// Profile of a pointwise evaluator returning a value and its round-off
/// scale; values within their round-off scale count as zero.
pub fn profile_by<F>(n: usize, radii: &[f64], level: usize, eval: F) -> Result<RadialProfile>
where
    F: Fn(&[f64]) -> Result<Estimate> + Sync,
{
    let dirs = sphere_rule_shared(n, level)?;
    let mut maxima = Vec::with_capacity(radii.len());
    for &r in radii {
        let vals: Vec<f64> = (0..dirs.len())
            .into_par_iter()
            .map(|j| {
                let mut x = [0.0; MAX_DIM];
                for (xi, d) in x.iter_mut().zip(dirs.node(j)) {
                    *xi = r * d;
                }
                let x = &x[..n];
                let e = eval(x)?;
                if !e.value.is_finite() {
                    return Err(Error::NonFiniteIntegrand {
                        index: j,
                        node: x.to_vec(),
                        value: e.value,
                    });
                }
                Ok(if e.value.abs() <= e.noise() { 0.0 } else { e.value.abs() })
            })
            .collect::<Result<_>>()?;
        maxima.push(vals.into_iter().fold(0.0, f64::max));
    }
    RadialProfile::new(radii.to_vec(), maxima)
}

/// `M(r_j) = max |f|` over `sphere_rule(n, level)` scaled to `r_j = r0 2^-j`.
pub fn radial_max_profile(f: &dyn ScalarField, r0: f64, count: usize, level: usize) -> Result<RadialProfile> {
    let meta = f.meta();
    if r0 > meta.domain_radius {
        return Err(Error::InvalidParameter(format!(
            "r0={r0} exceeds the domain radius {}",
            meta.domain_radius
        )));
    }
    let cfg = ProfileConfig {
        r0,
        count,
        level,
        ..ProfileConfig::default()
    };
    cfg.validate()?;
    profile_by(meta.n, &cfg.radii(), level, |x| {
        let v = f.eval(x);
        Ok(Estimate {
            value: v,
            magnitude: 0.0,
        })
    })
}

/// Exponent of a power-law fit, serialized as the string `"inf"` when the
/// profile vanishes somewhere (the field is identically zero near 0 at the
/// sampled resolution).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exponent(pub f64);

impl Serialize for Exponent {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            s.serialize_f64(self.0)
        } else {
            s.serialize_str("inf")
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExponentFit {
    pub exponent: Exponent,
    pub log_flag: bool,
    pub fit_residual: f64,
}

/// Least squares for `y ~ X beta` with 2 or 3 columns via normal equations on
/// centered data; returns coefficients and the RMS residual.
fn lsq(cols: &[Vec<f64>], y: &[f64]) -> Option<(Vec<f64>, f64)> {
    let k = cols.len();
    let m = y.len() as f64;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / m;
    let ym = mean(y);
    let cm: Vec<f64> = cols.iter().map(|c| mean(c)).collect();
    let cc: Vec<Vec<f64>> = cols
        .iter()
        .zip(&cm)
        .map(|(c, mu)| c.iter().map(|v| v - mu).collect())
        .collect();
    let yc: Vec<f64> = y.iter().map(|v| v - ym).collect();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
    let mut a = nalgebra::DMatrix::<f64>::zeros(k, k);
    let mut b = nalgebra::DVector::<f64>::zeros(k);
    for i in 0..k {
        b[i] = dot(&cc[i], &yc);
        for j in 0..k {
            a[(i, j)] = dot(&cc[i], &cc[j]);
        }
    }
    let beta = a.lu().solve(&b)?;
    let mut ss = 0.0;
    for (t, yt) in yc.iter().enumerate() {
        let pred: f64 = (0..k).map(|i| beta[i] * cc[i][t]).sum();
        ss += (yt - pred).powi(2);
    }
    Some((beta.iter().copied().collect(), (ss / m).sqrt()))
}

/// Slope of `log M` against `log r`. If a further `log log(1/r)` regressor
/// cuts the RMS residual at least 4x with coefficient within 0.3 of 1, the
/// profile is flagged as carrying a `log(1/r)` factor and the slope of that
/// model is reported.
pub fn fit_exponent(p: &RadialProfile) -> ExponentFit {
    if p.max_abs.contains(&0.0) {
        return ExponentFit {
            exponent: Exponent(f64::INFINITY),
            log_flag: false,
            fit_residual: 0.0,
        };
    }
    let t: Vec<f64> = p.radii.iter().map(|r| r.ln()).collect();
    let y: Vec<f64> = p.max_abs.iter().map(|m| m.ln()).collect();
    let (base, res_base) = lsq(std::slice::from_ref(&t), &y).expect("distinct radii");
    let mut fit = ExponentFit {
        exponent: Exponent(base[0]),
        log_flag: false,
        fit_residual: res_base,
    };
    if p.radii.iter().all(|r| *r < 1.0) && res_base > 1e-12 {
        let ll: Vec<f64> = p.radii.iter().map(|r| (1.0 / r).ln().ln()).collect();
        if let Some((coef, res_log)) = lsq(&[t, ll], &y) {
            if 4.0 * res_log <= res_base && (coef[1] - 1.0).abs() <= 0.3 {
                fit = ExponentFit {
                    exponent: Exponent(coef[0]),
                    log_flag: true,
                    fit_residual: res_log,
                };
            }
        }
    }
    fit
}

/// Outcome of the finite-data little-o decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LittleO {
    Holds,
    Fails,
    Undecided,
}

/// `q_j = M(r_j) / g(r_j)`.
pub fn little_o_ratios(p: &RadialProfile, gauge: &RadialTerm) -> Result<Vec<f64>> {
    p.radii
        .iter()
        .zip(&p.max_abs)
        .map(|(&r, &m)| {
            let g = gauge.eval(r);
            if g > 0.0 && g.is_finite() {
                Ok(m / g)
            } else {
                Err(Error::InvalidParameter(format!(
                    "gauge is not positive at r={r} (value {g})"
                )))
            }
        })
        .collect()
}

pub fn decide_little_o(ratios: &[f64]) -> LittleO {
    let first = ratios[0];
    let last = ratios[ratios.len() - 1];
    if ratios.iter().all(|q| *q == 0.0) {
        return LittleO::Holds;
    }
    let monotone = ratios
        .windows(2)
        .all(|w| w[1] <= (1.0 + MONOTONE_SLACK) * w[0]);
    if first == 0.0 {
        return LittleO::Fails;
    }
    let decay = last / first;
    if decay >= DECAY_FAIL {
        LittleO::Fails
    } else if monotone && decay <= DECAY_PASS {
        LittleO::Holds
    } else {
        LittleO::Undecided
    }
}

/// Ratio test for `M = o(g)`; returns the verdict and the ratios.
pub fn check_little_o(p: &RadialProfile, gauge: &RadialTerm) -> Result<(bool, Vec<f64>)> {
    let q = little_o_ratios(p, gauge)?;
    Ok((decide_little_o(&q) == LittleO::Holds, q))
}

/// The profile, fit and little-o outcome for one field against one gauge.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthReport {
    /// Laplacian order profiled (`D^k u`).
    pub k: usize,
    pub gauge: RadialTerm,
    pub profile: RadialProfile,
    pub exponent: Exponent,
    pub log_flag: bool,
    pub fit_residual: f64,
    pub little_o_ratios: Vec<f64>,
    pub outcome: LittleO,
}

impl GrowthReport {
    pub fn build(k: usize, gauge: RadialTerm, profile: RadialProfile) -> Result<Self> {
        let fit = fit_exponent(&profile);
        let ratios = little_o_ratios(&profile, &gauge)?;
        Ok(GrowthReport {
            k,
            gauge,
            outcome: decide_little_o(&ratios),
            profile,
            exponent: fit.exponent,
            log_flag: fit.log_flag,
            fit_residual: fit.fit_residual,
            little_o_ratios: ratios,
        })
    }

    pub fn passes(&self) -> bool {
        self.outcome == LittleO::Holds
    }
}

/// Combine per-report outcomes: any failure fails, then any undecided.
pub fn combine(outcomes: impl IntoIterator<Item = LittleO>) -> LittleO {
    let mut out = LittleO::Holds;
    for o in outcomes {
        match o {
            LittleO::Fails => return LittleO::Fails,
            LittleO::Undecided => out = LittleO::Undecided,
            LittleO::Holds => {}
        }
    }
    out
}

/// `r^{2-n}` for n >= 3, `log(1/r)` for n = 2.
pub fn theorem1_gauge(n: usize) -> RadialTerm {
    if n == 2 {
        RadialTerm::power_log(1.0, 0.0)
    } else {
        RadialTerm::power(1.0, 2.0 - n as f64)
    }
}

/// `r^{2m-n}` for n >= 3, `r^{2m-2} log(1/r)` for n = 2.
pub fn theorem2_gauge(m: usize, n: usize) -> RadialTerm {
    if n == 2 {
        RadialTerm::power_log(1.0, 2.0 * m as f64 - 2.0)
    } else {
        RadialTerm::power(1.0, 2.0 * m as f64 - n as f64)
    }
}

/// `D^k u(x)`: nested finite differences with step `|x| / step_divisor`, or
/// mollifier transfer below `transfer_radius`.
pub fn laplacian_near_puncture(
    u: &dyn ScalarField,
    k: usize,
    x: &[f64],
    cfg: &ProfileConfig,
) -> Result<Estimate> {
    if k == 0 {
        let v = u.eval(x);
        return Ok(Estimate {
            value: v,
            magnitude: 0.0,
        });
    }
    let r = crate::geometry::norm(x);
    if r < cfg.transfer_radius {
        laplacian_transfer_estimate(u, k, x)
    } else {
        iterated_laplacian_fd_estimate(u, x, k, r / cfg.step_divisor)
    }
}

/// Profiles `D^k u` for `k = 0..m-1` against the first theorem's gauge.
pub fn theorem1_criterion(u: &dyn ScalarField, cfg: &ProfileConfig) -> Result<(Vec<GrowthReport>, LittleO)> {
    cfg.validate()?;
    let meta = u.meta();
    check_profile_domain(u, cfg)?;
    let radii = cfg.radii();
    let gauge = theorem1_gauge(meta.n);
    let mut reports = Vec::with_capacity(meta.m);
    for k in 0..meta.m.max(1) {
        let profile = profile_by(meta.n, &radii, cfg.level, |x| laplacian_near_puncture(u, k, x, cfg))?;
        reports.push(GrowthReport::build(k, gauge, profile)?);
    }
    let outcome = combine(reports.iter().map(|r| r.outcome));
    Ok((reports, outcome))
}

/// Profiles u itself against the second theorem's gauge.
pub fn theorem2_criterion(u: &dyn ScalarField, cfg: &ProfileConfig) -> Result<(GrowthReport, LittleO)> {
    cfg.validate()?;
    let meta = u.meta();
    check_profile_domain(u, cfg)?;
    let gauge = theorem2_gauge(meta.m, meta.n);
    let profile = profile_by(meta.n, &cfg.radii(), cfg.level, |x| {
        laplacian_near_puncture(u, 0, x, cfg)
    })?;
    let report = GrowthReport::build(0, gauge, profile)?;
    let outcome = report.outcome;
    Ok((report, outcome))
}

fn check_profile_domain(u: &dyn ScalarField, cfg: &ProfileConfig) -> Result<()> {
    let meta = u.meta();
    let reach = cfg.r0 * (1.0 + 4.0 / cfg.step_divisor);
    if reach >= meta.domain_radius {
        return Err(Error::DomainTooSmall {
            radius: meta.domain_radius,
            required: reach,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{FieldExpr, FieldMeta, FnField};
    use approx::assert_abs_diff_eq;

    fn expr(spec: &str, n: usize, m: usize) -> crate::field::ExprField {
        FieldExpr::parse(spec, n).unwrap().into_field(m, 1.25)
    }

    fn synthetic(f: impl Fn(f64) -> f64) -> RadialProfile {
        let radii: Vec<f64> = (0..8).map(|j| 0.4 * 0.5f64.powi(j)).collect();
        let m = radii.iter().map(|r| f(*r)).collect();
        RadialProfile::new(radii, m).unwrap()
    }

    #[test]
    fn profile_examples() {
        let p = radial_max_profile(&expr("r^-1", 3, 1), 0.5, 8, 2).unwrap();
        for (j, m) in p.max_abs().iter().enumerate() {
            assert_abs_diff_eq!(*m, 2.0 * 2f64.powi(j as i32), epsilon = 1e-12 * m);
        }
        let five = FnField::new(FieldMeta::smooth(3, 1, 1.25), |_| 5.0);
        let p = radial_max_profile(&five, 0.4, 8, 1).unwrap();
        assert!(p.max_abs().iter().all(|m| *m == 5.0));
        let p = radial_max_profile(&expr("x1", 3, 1), 0.4, 8, 1).unwrap();
        for (r, m) in p.radii().iter().zip(p.max_abs()) {
            assert_abs_diff_eq!(*m, *r, epsilon = 1e-10);
        }
        assert!(radial_max_profile(&five, 0.4, 5, 1).is_err());
        assert!(radial_max_profile(&five, 2.0, 8, 1).is_err());
    }

    #[test]
    fn profile_rejects_non_finite() {
        let bad = FnField::new(FieldMeta::smooth(2, 1, 1.25), |x| if x[0] > 0.0 { f64::NAN } else { 0.0 });
        assert!(matches!(
            radial_max_profile(&bad, 0.4, 8, 1),
            Err(Error::NonFiniteIntegrand { .. })
        ));
    }

    #[test]
    fn exponent_examples() {
        let f = fit_exponent(&synthetic(|r| r.powf(1.5)));
        assert_abs_diff_eq!(f.exponent.0, 1.5, epsilon = 0.02);
        assert!(!f.log_flag);
        let f = fit_exponent(&synthetic(|r| (1.0 / r).ln()));
        assert_abs_diff_eq!(f.exponent.0, 0.0, epsilon = 0.05);
        assert!(f.log_flag);
        let f = fit_exponent(&synthetic(|_| 3.0));
        assert_abs_diff_eq!(f.exponent.0, 0.0, epsilon = 1e-6);
        assert!(!f.log_flag);
        let f = fit_exponent(&synthetic(|r| if r < 0.01 { 0.0 } else { r }));
        assert!(f.exponent.0.is_infinite());
        assert_eq!(serde_json::to_string(&f.exponent).unwrap(), "\"inf\"");
    }

    #[test]
    fn exponent_recovery_and_scale_invariance() {
        for p in [-2.0, -1.0, 0.0, 0.5, 1.0, 2.0] {
            let prof = synthetic(|r| r.powf(p));
            let f = fit_exponent(&prof);
            assert_abs_diff_eq!(f.exponent.0, p, epsilon = 0.02);
            let g = fit_exponent(&prof.scaled(1e3));
            assert_abs_diff_eq!(f.exponent.0, g.exponent.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn little_o_examples() {
        let g = RadialTerm::power(1.0, 1.0);
        assert!(check_little_o(&synthetic(|r| r * r), &g).unwrap().0);
        assert!(!check_little_o(&synthetic(|r| r), &g).unwrap().0);
        let g = RadialTerm::power(1.0, -1.0);
        let (ok, q) = check_little_o(&synthetic(|r| 2.0 / r), &g).unwrap();
        assert!(!ok);
        assert!(q.iter().all(|v| (v - 2.0).abs() < 1e-12));
        assert_eq!(decide_little_o(&[0.0; 8]), LittleO::Holds);
        // decay by 4x only: undecided
        let q: Vec<f64> = (0..8).map(|j| 1.0 - 0.107 * j as f64).collect();
        assert_eq!(decide_little_o(&q), LittleO::Undecided);
        assert_eq!(decide_little_o(&[0.0, 1.0, 1.0, 1.0, 1.0, 1.0]), LittleO::Fails);
    }

    #[test]
    fn gauge_monotonicity() {
        let prof = synthetic(|r| r.powf(0.6));
        let g = RadialTerm::power(1.0, 0.0);
        assert!(check_little_o(&prof, &g).unwrap().0);
        // g' = r^-1 >= g, g'/g grows as r -> 0
        assert!(check_little_o(&prof, &RadialTerm::power(1.0, -1.0)).unwrap().0);
        assert!(check_little_o(&prof, &RadialTerm::power_log(1.0, 0.0)).unwrap().0);
    }

    #[test]
    fn theorem1_examples() {
        let cfg = ProfileConfig::default();
        let (reports, out) = theorem1_criterion(&expr("x1*x2 - x2*x3", 3, 2), &cfg).unwrap();
        assert_eq!(out, LittleO::Holds);
        assert_eq!(reports.len(), 2);
        let (reports, out) = theorem1_criterion(&expr("r", 3, 2), &cfg).unwrap();
        assert_eq!(out, LittleO::Fails);
        assert!(reports[0].passes());
        assert_eq!(reports[1].outcome, LittleO::Fails);
        assert_abs_diff_eq!(reports[1].exponent.0, -1.0, epsilon = 1e-3);
        let (_, out) = theorem1_criterion(&expr("x1^2 + x2^2", 3, 2), &cfg).unwrap();
        assert_eq!(out, LittleO::Holds);
    }

    #[test]
    fn theorem2_examples() {
        let cfg = ProfileConfig::default();
        let (_, out) = theorem2_criterion(&expr("x1^2 + x2^2", 3, 2), &cfg).unwrap();
        assert_eq!(out, LittleO::Holds);
        let (rep, out) = theorem2_criterion(&expr("r^-1", 3, 2), &cfg).unwrap();
        assert_eq!(out, LittleO::Fails);
        assert!(rep.little_o_ratios.windows(2).all(|w| w[1] > w[0]));
        let zero = FnField::new(FieldMeta::punctured(3, 2, 1.25), |_| 0.0);
        assert_eq!(theorem2_criterion(&zero, &cfg).unwrap().1, LittleO::Holds);
    }

    #[test]
    fn transfer_profiles_match_gauge_rate_for_gamma() {
        // D^{m-1} Gamma = A |x|^{2-n}: ratios stay at |A| all the way down.
        let cfg = ProfileConfig::default();
        let (reports, _) = theorem1_criterion(&expr("r", 3, 2), &cfg).unwrap();
        for q in &reports[1].little_o_ratios {
            assert_abs_diff_eq!(*q, 2.0, epsilon = 5e-3);
        }
    }
}
