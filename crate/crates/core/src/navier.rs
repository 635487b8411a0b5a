//! Navier traces and the recursion `v_1 = P[D^{m-1} u]`,
//! `v_i = V(v_{i-1}) + P[D^{m-i} u]`, where `P` is the Poisson integral and
//! `V` the (sign-corrected) Green volume potential.
//!
//! Nesting `V` through quadrature costs a factor of the rule size per level,
//! so each harmonic part `P[...]` is also fitted by a polynomial on the ball
//! of radius [`QUADRATURE_RADIUS`]. `V` of a polynomial is again a polynomial
//! ([`Polynomial::dirichlet_solve`]), which makes every `v_i` the sum of an
//! exact polynomial volume part and a Poisson integral evaluated directly.
//! Beyond [`QUADRATURE_RADIUS`], where a fixed sphere rule no longer
//! resolves the Poisson kernel, the fitted polynomial replaces the
//! quadrature; at sphere nodes the trace itself is returned.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::calculus::{iterated_laplacian_fd, nested_step, MAX_FD_ORDER};
use crate::error::{Error, Result};
use crate::field::{FieldMeta, ScalarField};
use crate::geometry::{dist_sq, halton_shell_points, norm, norm_sq, sphere_rule_shared, QuadratureRule};
use crate::kernel::{harmonic_extend_unchecked, KernelContext, SphereData, SPHERE_TOL};
use crate::poly::{monomial_exponents, Polynomial};

/// Largest |x| at which the Poisson integral is evaluated by quadrature.
pub const QUADRATURE_RADIUS: f64 = 0.9;

/// Default sphere level for traces.
pub const DEFAULT_LEVEL: usize = 8;

/// Default base finite-difference step.
pub const DEFAULT_STEP: f64 = 1e-3;

/// Total degree of the polynomial fitted to each harmonic part.
pub fn default_fit_degree(n: usize) -> u32 {
    match n {
        2 => 12,
        3 => 8,
        4 => 6,
        _ => 4,
    }
}

/// `D^k u` sampled at the nodes of a sphere rule, for `k = 0..m-1`.
#[derive(Debug, Clone)]
pub struct BoundaryTraces {
    m: usize,
    n: usize,
    rule: Arc<QuadratureRule>,
    values: Vec<Vec<f64>>,
    steps: Vec<f64>,
}

impl BoundaryTraces {
    /// Build from precomputed rows; row k holds `D^k u` at the nodes.
    pub fn from_rows(rule: Arc<QuadratureRule>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidParameter("traces need m >= 1 rows".into()));
        }
        for row in &rows {
            SphereData::new(Arc::clone(&rule), row.clone())?;
        }
        Ok(BoundaryTraces {
            m: rows.len(),
            n: rule.dim(),
            steps: vec![0.0; rows.len()],
            rule,
            values: rows,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn rule(&self) -> &Arc<QuadratureRule> {
        &self.rule
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.values[k]
    }

    /// Finite-difference step used for each row (0 when supplied directly).
    pub fn steps(&self) -> &[f64] {
        &self.steps
    }

    pub fn row_max(&self, k: usize) -> f64 {
        self.values[k].iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// Largest trace magnitude over all rows.
    pub fn scale(&self) -> f64 {
        (0..self.m).map(|k| self.row_max(k)).fold(0.0, f64::max)
    }

    fn sphere_data(&self, k: usize) -> SphereData {
        SphereData::new(Arc::clone(&self.rule), self.values[k].clone())
            .expect("rows validated at construction")
    }
}

/// Domain radius a field needs for traces up to order `m - 1` with base step `h`.
pub fn required_trace_radius(m: usize, h: f64) -> f64 {
    1.0 + (1..m)
        .map(|k| k as f64 * nested_step(k, h))
        .fold(0.0, f64::max)
}

/// `values[k][j] = D^k u(y_j)` by nested finite differences at the nodes of
/// `sphere_rule(n, level)`. Row k uses the step `nested_step(k, h)`.
pub fn extract_traces(u: &dyn ScalarField, m: usize, level: usize, h: f64) -> Result<BoundaryTraces> {
    let meta = u.meta();
    if m == 0 || m > MAX_FD_ORDER + 1 {
        return Err(Error::InvalidParameter(format!(
            "order m={m} must be in 1..={}",
            MAX_FD_ORDER + 1
        )));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidParameter(format!("step h={h} must be positive")));
    }
    let required = required_trace_radius(m, h);
    if meta.domain_radius <= required {
        return Err(Error::DomainTooSmall {
            radius: meta.domain_radius,
            required,
        });
    }
    let rule = sphere_rule_shared(meta.n, level)?;
    let steps: Vec<f64> = (0..m).map(|k| nested_step(k, h)).collect();
    let mut values = Vec::with_capacity(m);
    for (k, &hk) in steps.iter().enumerate() {
        let row: Vec<f64> = (0..rule.len())
            .into_par_iter()
            .map(|j| iterated_laplacian_fd(u, rule.node(j), k, hk))
            .collect::<Result<_>>()?;
        if let Some(index) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteIntegrand {
                index,
                node: rule.node(index).to_vec(),
                value: row[index],
            });
        }
        values.push(row);
    }
    Ok(BoundaryTraces {
        m,
        n: meta.n,
        rule,
        values,
        steps,
    })
}

/// The chain `B_i = sum_{j<i} C1^j max|row(m-i+j)|`, `C1 = 1/(2n)`, bounding
/// `sup |v_i|`.
pub fn bound_chain(traces: &BoundaryTraces) -> Vec<f64> {
    let c1 = 1.0 / (2.0 * traces.n as f64);
    let m = traces.m;
    (1..=m)
        .map(|i| {
            (0..i)
                .map(|j| c1.powi(j as i32) * traces.row_max(m - i + j))
                .sum()
        })
        .collect()
}

/// One recursion field `v_i`, defined on the closed unit ball.
#[derive(Debug, Clone)]
pub struct NavierField {
    ctx: KernelContext,
    m: usize,
    index: usize,
    volume: Polynomial,
    boundary: SphereData,
    harmonic_fit: Polynomial,
}

impl NavierField {
    /// `i` in `1..=m`.
    pub fn index(&self) -> usize {
        self.index
    }

    /// The exact polynomial volume part `V(v_{i-1})` (zero for i = 1).
    pub fn volume_part(&self) -> &Polynomial {
        &self.volume
    }

    /// Polynomial fit of the harmonic part.
    pub fn harmonic_fit(&self) -> &Polynomial {
        &self.harmonic_fit
    }

    /// The polynomial surrogate `volume + harmonic_fit` of the whole field.
    pub fn surrogate(&self) -> Polynomial {
        self.volume.add(&self.harmonic_fit)
    }

    /// Trace data `D^{m-i} u` on the sphere.
    pub fn boundary(&self) -> &SphereData {
        &self.boundary
    }

    fn boundary_lookup(&self, x: &[f64]) -> Option<f64> {
        let rule = self.boundary.rule();
        (0..rule.len())
            .find(|&j| dist_sq(rule.node(j), x) <= 1e-20)
            .map(|j| self.boundary.values()[j])
    }
}

impl ScalarField for NavierField {
    fn meta(&self) -> FieldMeta {
        FieldMeta::smooth(self.ctx.dim(), self.m, 1.0)
    }

    /// NaN outside the closed unit ball.
    fn eval(&self, x: &[f64]) -> f64 {
        let x2 = norm_sq(x);
        let r = x2.sqrt();
        if r <= QUADRATURE_RADIUS {
            return self.volume.eval(x) + harmonic_extend_unchecked(&self.ctx, &self.boundary, x, x2);
        }
        if r > 1.0 + SPHERE_TOL {
            return f64::NAN;
        }
        if r >= 1.0 - SPHERE_TOL {
            if let Some(v) = self.boundary_lookup(x) {
                return v;
            }
        }
        self.volume.eval(x) + self.harmonic_fit.eval(x)
    }
}

/// `v_1..v_m` together with the bound chain.
#[derive(Debug, Clone)]
pub struct NavierSolution {
    fields: Vec<Arc<NavierField>>,
    bound_chain: Vec<f64>,
    c1: f64,
    fit_degree: u32,
}

impl NavierSolution {
    pub fn m(&self) -> usize {
        self.fields.len()
    }

    /// `v_i` for `i` in `1..=m`.
    pub fn field(&self, i: usize) -> &Arc<NavierField> {
        &self.fields[i - 1]
    }

    pub fn fields(&self) -> &[Arc<NavierField>] {
        &self.fields
    }

    pub fn bound_chain(&self) -> &[f64] {
        &self.bound_chain
    }

    pub fn c1(&self) -> f64 {
        self.c1
    }

    pub fn fit_degree(&self) -> u32 {
        self.fit_degree
    }

    /// The extension `v_m`.
    pub fn extension(&self) -> &Arc<NavierField> {
        self.fields.last().expect("m >= 1")
    }
}

/// Solve the recursion with the default fit degree for the dimension.
pub fn navier_solve(traces: &BoundaryTraces) -> Result<NavierSolution> {
    navier_solve_with(traces, default_fit_degree(traces.n))
}

pub fn navier_solve_with(traces: &BoundaryTraces, fit_degree: u32) -> Result<NavierSolution> {
    let n = traces.n;
    let m = traces.m;
    let ctx = KernelContext::new(n)?;
    let basis = monomial_exponents(n, fit_degree).len();
    let fit_points = halton_shell_points(n, 3 * basis + 50, 0.0, QUADRATURE_RADIUS)?;
    // The sphere nodes pin the fit to the trace data where it is used.
    let mut all_points = fit_points.clone();
    for node in traces.rule.nodes() {
        all_points.extend_from_slice(node);
    }

    let mut fields = Vec::with_capacity(m);
    let mut volume = Polynomial::zero(n);
    for i in 1..=m {
        let boundary = traces.sphere_data(m - i);
        let mut samples: Vec<f64> = fit_points
            .par_chunks_exact(n)
            .map(|x| harmonic_extend_unchecked(&ctx, &boundary, x, norm_sq(x)))
            .collect();
        samples.extend_from_slice(boundary.values());
        let harmonic_fit = Polynomial::fit(n, fit_degree, &all_points, &samples)?;
        let next_volume = if i < m {
            volume.add(&harmonic_fit).dirichlet_solve()
        } else {
            Polynomial::zero(n)
        };
        fields.push(Arc::new(NavierField {
            ctx,
            m,
            index: i,
            volume: std::mem::replace(&mut volume, next_volume),
            boundary,
            harmonic_fit,
        }));
    }
    Ok(NavierSolution {
        fields,
        bound_chain: bound_chain(traces),
        c1: ctx.c1(),
        fit_degree,
    })
}

/// Per-i residual of `D^{m-i} u = v_i`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualReport {
    /// `residuals[i-1] = max_x |D^{m-i} u(x) - v_i(x)|`.
    pub residuals: Vec<f64>,
    /// Sample at which each maximum was attained.
    pub argmax: Vec<Vec<f64>>,
}

impl ResidualReport {
    pub fn max(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }
}

/// Deterministic interior samples in the shell `0.05 <= |x| <= 0.85`.
pub fn interior_samples(n: usize, count: usize) -> Result<Vec<Vec<f64>>> {
    Ok(halton_shell_points(n, count, 0.05, 0.85)?
        .chunks_exact(n)
        .map(<[f64]>::to_vec)
        .collect())
}

/// Nested step for order k at a sample, kept clear of the puncture.
fn residual_step(k: usize, h: f64, x: &[f64], punctured: bool) -> f64 {
    let hk = nested_step(k, h);
    if punctured && k > 0 {
        hk.min(0.5 * norm(x) / k as f64)
    } else {
        hk
    }
}

/// `max over samples |D^{m-i} u - v_i|` for each i, with `D^{m-i} u` by
/// nested finite differences.
pub fn residuals(
    u: &dyn ScalarField,
    sol: &NavierSolution,
    samples: &[Vec<f64>],
    h: f64,
) -> Result<ResidualReport> {
    let meta = u.meta();
    let m = sol.m();
    for x in samples {
        if x.len() != meta.n {
            return Err(Error::DimensionMismatch {
                expected: meta.n,
                got: x.len(),
            });
        }
        if norm(x) < 10.0 * h {
            return Err(Error::Domain {
                point: x.clone(),
                reason: format!("residual samples must keep |x| >= 10 h = {}", 10.0 * h),
            });
        }
    }
    let mut residuals = Vec::with_capacity(m);
    let mut argmax = Vec::with_capacity(m);
    for i in 1..=m {
        let k = m - i;
        let v = sol.field(i);
        let errs: Vec<f64> = samples
            .par_iter()
            .map(|x| {
                let hk = residual_step(k, h, x, meta.punctured);
                Ok((iterated_laplacian_fd(u, x, k, hk)? - v.eval(x)).abs())
            })
            .collect::<Result<_>>()?;
        let mut best = 0;
        for (j, e) in errs.iter().enumerate() {
            if !e.is_finite() {
                return Err(Error::NonFiniteIntegrand {
                    index: j,
                    node: samples[j].clone(),
                    value: *e,
                });
            }
            if *e > errs[best] {
                best = j;
            }
        }
        residuals.push(errs.get(best).copied().unwrap_or(0.0));
        argmax.push(samples.get(best).cloned().unwrap_or_default());
    }
    Ok(ResidualReport { residuals, argmax })
}
