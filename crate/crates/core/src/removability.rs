//! End-to-end removability pipeline: growth classification, Navier
//! reconstruction, residual verification; plus the test-field generators.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::calculus::{gamma_covered, RadialTerm};
use crate::error::{Error, Result};
use crate::field::{ExprField, FieldExpr, FieldMeta, ScalarField};
use crate::geometry::{check_dim, Point};
use crate::growth::{theorem1_criterion, theorem2_criterion, GrowthReport, LittleO, ProfileConfig};
use crate::navier::{
    extract_traces, interior_samples, navier_solve, residuals, NavierField, NavierSolution,
    DEFAULT_LEVEL, DEFAULT_STEP,
};

/// Domain radius of generated fields and of translated problems.
pub const PIPELINE_RADIUS: f64 = 1.25;

/// Largest supported order.
pub const MAX_ORDER: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Theorem {
    /// Growth of `D^k u = o(r^{2-n})` (or `o(log 1/r)`) for every `k < m`.
    T1,
    /// Growth of `u = o(r^{2m-n})` (or `o(r^{2m-2} log 1/r)`).
    T2,
}

impl fmt::Display for Theorem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Theorem::T1 => write!(f, "T1"),
            Theorem::T2 => write!(f, "T2"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Decision {
    Removable,
    NotRemovable,
    Inconclusive,
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PipelineConfig {
    pub theorem: Theorem,
    pub m: usize,
    pub n: usize,
    /// Sphere level of the trace rule.
    pub level: usize,
    /// Base finite-difference step for traces and residuals.
    pub fd_step: f64,
    /// Residual tolerance, relative to the largest trace magnitude.
    pub tol: f64,
    /// Number of interior residual samples.
    pub samples: usize,
    pub profile: ProfileConfig,
}

impl PipelineConfig {
    pub fn new(theorem: Theorem, m: usize, n: usize) -> Self {
        PipelineConfig {
            theorem,
            m,
            n,
            level: DEFAULT_LEVEL,
            fd_step: DEFAULT_STEP,
            tol: 5e-3,
            samples: 200,
            profile: ProfileConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_dim(self.n)?;
        if self.m == 0 || self.m > MAX_ORDER {
            return Err(Error::InvalidParameter(format!(
                "order m={} must be in 1..={MAX_ORDER}",
                self.m
            )));
        }
        if self.theorem == Theorem::T2 && self.m < 2 {
            return Err(Error::InvalidParameter("T2 requires m >= 2".into()));
        }
        if self.level == 0 {
            return Err(Error::InvalidLevel(0));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::InvalidParameter(format!("tolerance {} must be positive", self.tol)));
        }
        if !(self.fd_step > 0.0 && self.fd_step.is_finite()) {
            return Err(Error::InvalidParameter(format!("fd step {} must be positive", self.fd_step)));
        }
        if self.samples == 0 {
            return Err(Error::InvalidParameter("need at least one residual sample".into()));
        }
        self.profile.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RemovabilityVerdict {
    pub decision: Decision,
    pub theorem_used: Theorem,
    /// One report per k for T1, a single report for T2.
    pub per_k_reports: Vec<GrowthReport>,
    /// Outcome of the growth criterion alone.
    pub growth_outcome: LittleO,
    /// Largest absolute residual of `D^{m-i} u = v_i`, when reconstructed.
    pub extension_residual: Option<f64>,
    /// The same divided by the largest trace magnitude.
    pub relative_residual: Option<f64>,
    pub bound_chain: Vec<f64>,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct ExtensionResult {
    pub verdict: RemovabilityVerdict,
    /// `v_m`, present iff the verdict is Removable.
    pub extension: Option<Arc<NavierField>>,
    /// Per-i residuals (empty when no reconstruction ran).
    pub residuals: Vec<f64>,
    /// Sample attaining each residual.
    pub residual_argmax: Vec<Vec<f64>>,
    /// The full recursion, whenever it ran.
    pub solution: Option<NavierSolution>,
}

/// `Gamma = |x|^{2m-n}` on the punctured ball of radius 1.25.
pub fn fundamental_solution(m: usize, n: usize) -> Result<ExprField> {
    check_dim(n)?;
    if !gamma_covered(m, n) {
        return Err(Error::NotCovered { m, n });
    }
    Ok(gamma_expr(m, n).into_field(m, PIPELINE_RADIUS))
}

fn gamma_expr(m: usize, n: usize) -> FieldExpr {
    FieldExpr::from_radial(n, vec![RadialTerm::power(1.0, 2.0 * m as f64 - n as f64)])
}

/// Kinds of generated test fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ManufacturedKind {
    /// A polynomial spec with `D^m w = 0`.
    PolyharmonicPolynomial { spec: String },
    /// `w + c Gamma` for a harmonic polynomial spec `w`.
    HarmonicPlusGamma { harmonic: String, c: f64 },
    /// `Gamma` itself.
    PureGamma,
    /// `|x|^alpha`.
    ScaledGauge { alpha: f64 },
}

pub fn manufactured_field(kind: &ManufacturedKind, m: usize, n: usize) -> Result<ExprField> {
    check_dim(n)?;
    if m == 0 || m > MAX_ORDER {
        return Err(Error::InvalidParameter(format!("order m={m} must be in 1..={MAX_ORDER}")));
    }
    let expr = match kind {
        ManufacturedKind::PolyharmonicPolynomial { spec } => {
            let w = FieldExpr::parse(spec, n)?;
            if !w.is_smooth() {
                return Err(Error::InvalidParameter(format!("'{spec}' is not a polynomial")));
            }
            if !w.iterated_laplacian(m).is_zero() {
                return Err(Error::InvalidParameter(format!(
                    "'{spec}' does not satisfy D^{m} w = 0"
                )));
            }
            w
        }
        ManufacturedKind::HarmonicPlusGamma { harmonic, c } => {
            let w = FieldExpr::parse(harmonic, n)?;
            if !w.is_smooth() || !w.laplacian().is_zero() {
                return Err(Error::InvalidParameter(format!(
                    "'{harmonic}' is not a harmonic polynomial"
                )));
            }
            if !gamma_covered(m, n) {
                return Err(Error::NotCovered { m, n });
            }
            w.add(&gamma_expr(m, n).scale(*c))
        }
        ManufacturedKind::PureGamma => return fundamental_solution(m, n),
        ManufacturedKind::ScaledGauge { alpha } => {
            if !alpha.is_finite() {
                return Err(Error::InvalidParameter("alpha must be finite".into()));
            }
            FieldExpr::from_radial(n, vec![RadialTerm::power(1.0, *alpha)])
        }
    };
    Ok(expr.into_field(m, PIPELINE_RADIUS))
}

/// Classify u by the configured growth criterion and, when it holds,
/// rebuild u from its Navier traces and check `D^{m-i} u = v_i` inside.
pub fn remove_singularity(u: &dyn ScalarField, cfg: &PipelineConfig) -> Result<ExtensionResult> {
    cfg.validate()?;
    let meta = u.meta();
    if meta.n != cfg.n || meta.m != cfg.m {
        return Err(Error::InvalidParameter(format!(
            "field is tagged (m={}, n={}) but the pipeline runs (m={}, n={})",
            meta.m, meta.n, cfg.m, cfg.n
        )));
    }
    let (per_k_reports, growth_outcome) = match cfg.theorem {
        Theorem::T1 => theorem1_criterion(u, &cfg.profile)?,
        Theorem::T2 => {
            let (r, o) = theorem2_criterion(u, &cfg.profile)?;
            (vec![r], o)
        }
    };
    let mut verdict = RemovabilityVerdict {
        decision: Decision::Inconclusive,
        theorem_used: cfg.theorem,
        per_k_reports,
        growth_outcome,
        extension_residual: None,
        relative_residual: None,
        bound_chain: Vec::new(),
        diagnostics: Vec::new(),
    };
    match growth_outcome {
        LittleO::Fails => {
            let failing: Vec<String> = verdict
                .per_k_reports
                .iter()
                .filter(|r| r.outcome == LittleO::Fails)
                .map(|r| r.k.to_string())
                .collect();
            verdict.decision = Decision::NotRemovable;
            verdict
                .diagnostics
                .push(format!("growth criterion fails for k = {}", failing.join(", ")));
            return Ok(no_extension(verdict));
        }
        LittleO::Undecided => {
            verdict
                .diagnostics
                .push("growth ratios decay too slowly to decide".into());
            return Ok(no_extension(verdict));
        }
        LittleO::Holds => {}
    }

    let traces = extract_traces(u, cfg.m, cfg.level, cfg.fd_step)?;
    let solution = navier_solve(&traces)?;
    let samples = interior_samples(cfg.n, cfg.samples)?;
    let report = residuals(u, &solution, &samples, cfg.fd_step)?;
    let abs = report.max();
    let scale = traces.scale();
    let rel = if scale > 0.0 { abs / scale } else { abs };
    verdict.bound_chain = solution.bound_chain().to_vec();
    verdict.extension_residual = Some(abs);
    verdict.relative_residual = Some(rel);
    let extension = if rel <= cfg.tol {
        verdict.decision = Decision::Removable;
        Some(Arc::clone(solution.extension()))
    } else {
        let worst = report
            .residuals
            .iter()
            .enumerate()
            .fold((0, 0.0), |a, (i, r)| if *r > a.1 { (i + 1, *r) } else { a });
        verdict.diagnostics.push(format!(
            "relative residual {rel:.3e} exceeds tolerance {:.3e} (worst at v_{} near {:?})",
            cfg.tol,
            worst.0,
            report.argmax[worst.0.max(1) - 1]
        ));
        None
    };
    Ok(ExtensionResult {
        verdict,
        extension,
        residuals: report.residuals,
        residual_argmax: report.argmax,
        solution: Some(solution),
    })
}

fn no_extension(verdict: RemovabilityVerdict) -> ExtensionResult {
    ExtensionResult {
        verdict,
        extension: None,
        residuals: Vec::new(),
        residual_argmax: Vec::new(),
        solution: None,
    }
}

/// `x -> u(x0 + rho x)` on the ball of radius 1.25, where
/// `rho = (R - |x0|) / 1.25` uses the whole ball of u around x0.
#[derive(Debug, Clone)]
pub struct Translated<F> {
    inner: F,
    x0: Vec<f64>,
    rho: f64,
}

impl<F: ScalarField> Translated<F> {
    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn center(&self) -> &[f64] {
        &self.x0
    }
}

impl<F: ScalarField> ScalarField for Translated<F> {
    fn meta(&self) -> FieldMeta {
        let inner = self.inner.meta();
        FieldMeta::punctured(inner.n, inner.m, PIPELINE_RADIUS)
    }

    fn eval(&self, x: &[f64]) -> f64 {
        let mut y = [0.0; crate::geometry::MAX_DIM];
        for ((yi, ci), xi) in y.iter_mut().zip(&self.x0).zip(x) {
            *yi = ci + self.rho * xi;
        }
        self.inner.eval(&y[..x.len()])
    }
}

pub fn translate_problem<F: ScalarField>(u: F, x0: &Point) -> Result<Translated<F>> {
    let meta = u.meta();
    x0.expect_dim(meta.n)?;
    let rho = (meta.domain_radius - x0.norm()) / PIPELINE_RADIUS;
    if !(rho > 0.0) {
        return Err(Error::DomainTooSmall {
            radius: meta.domain_radius,
            required: x0.norm(),
        });
    }
    Ok(Translated {
        inner: u,
        x0: x0.coords().to_vec(),
        rho,
    })
}

/// One corpus entry with the verdict it must receive.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusEntry {
    pub name: &'static str,
    pub spec: &'static str,
    pub m: usize,
    pub n: usize,
    pub theorem: Theorem,
    pub expected: Decision,
}

impl CorpusEntry {
    pub fn field(&self) -> Result<ExprField> {
        Ok(FieldExpr::parse(self.spec, self.n)?.into_field(self.m, PIPELINE_RADIUS))
    }

    pub fn config(&self) -> PipelineConfig {
        PipelineConfig::new(self.theorem, self.m, self.n)
    }
}

/// Twelve fields with known answers: polyharmonic polynomials (removable)
/// and fundamental-solution singularities (not removable).
pub fn corpus() -> Vec<CorpusEntry> {
    use Decision::*;
    use Theorem::*;
    let e = |name, spec, m, n, theorem, expected| CorpusEntry {
        name,
        spec,
        m,
        n,
        theorem,
        expected,
    };
    vec![
        e("r2", "r^2", 2, 3, T1, Removable),
        e("x1_cubed", "x1^3", 2, 3, T1, Removable),
        e("x1x2_planar", "x1*x2", 2, 2, T1, Removable),
        e("r4", "r^4", 3, 3, T1, Removable),
        e("x1sq_plus_x2sq", "x1^2 + x2^2", 2, 3, T2, Removable),
        e("harmonic_quadratic", "x1*x2 - x2*x3", 2, 3, T1, Removable),
        e("gamma_2_3_t1", "r", 2, 3, T1, NotRemovable),
        e("gamma_2_3_t2", "r", 2, 3, T2, NotRemovable),
        e("gamma_3_5_t1", "r", 3, 5, T1, NotRemovable),
        e("gamma_2_5_t2", "r^-1", 2, 5, T2, NotRemovable),
        e("harmonic_plus_gamma", "x1 + r", 2, 3, T1, NotRemovable),
        e("planar_cubic_t2", "x1^3 - 3*x1*x2^2", 2, 2, T2, Removable),
    ]
}
