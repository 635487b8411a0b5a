//! Points, unit spheres and balls in R^n, and deterministic product quadrature.
//!
//! Sphere rules are built recursively: the circle uses equispaced nodes, and
//! each further dimension adds a polar coordinate `t = cos(theta)` integrated
//! by a symmetric Gauss rule for the weight `(1 - t^2)^((n-3)/2)`. For n = 3
//! that weight is constant and the polar rule is plain Gauss-Legendre. Every
//! rule is closed under `y -> -y`, so odd integrands cancel to round-off.
//!
//! Ball rules are products of a radial Gauss rule (with the `r^(n-1)` Jacobian
//! folded into the weights) and a sphere rule. The singular ball rule is a
//! polar rule around an interior center: the `t^(n-1)` Jacobian of the
//! center-local coordinates absorbs the `|y - c|^(2-n)` kernel singularity.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::ops::Deref;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

pub const MIN_DIM: usize = 2;
pub const MAX_DIM: usize = 6;

/// Integrands cheaper than this many nodes are evaluated sequentially.
const PARALLEL_MIN_NODES: usize = 4096;

pub fn check_dim(n: usize) -> Result<()> {
    if (MIN_DIM..=MAX_DIM).contains(&n) {
        Ok(())
    } else {
        Err(Error::UnsupportedDimension(n))
    }
}

/// A finite coordinate vector in R^n.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.iter().all(|c| c.is_finite()) {
            Ok(Point(coords))
        } else {
            Err(Error::NonFinitePoint(coords))
        }
    }

    pub fn origin(n: usize) -> Self {
        Point(vec![0.0; n])
    }

    /// `r * e_axis` in R^n.
    pub fn on_axis(n: usize, axis: usize, r: f64) -> Self {
        let mut c = vec![0.0; n];
        c[axis] = r;
        Point(c)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub fn expect_dim(&self, n: usize) -> Result<()> {
        if self.dim() == n {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: n,
                got: self.dim(),
            })
        }
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for Point {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

#[inline]
pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    dist_sq(a, b).sqrt()
}

/// `Gamma(k / 2)` for a positive integer `k`.
pub fn gamma_half(k: u32) -> f64 {
    assert!(k > 0, "Gamma(0) is undefined");
    if k.is_multiple_of(2) {
        (1..k / 2).map(f64::from).product()
    } else {
        let mut g = PI.sqrt();
        let mut x = 0.5;
        while x < f64::from(k) / 2.0 - 0.25 {
            g *= x;
            x += 1.0;
        }
        g
    }
}

/// Surface area of the unit sphere in R^n, `2 pi^(n/2) / Gamma(n/2)`.
pub fn sphere_area(n: usize) -> f64 {
    2.0 * PI.powf(n as f64 / 2.0) / gamma_half(n as u32)
}

/// Volume of the unit ball in R^n.
pub fn ball_volume(n: usize) -> f64 {
    sphere_area(n) / n as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum DomainKind {
    Sphere,
    Ball,
    SingularBall,
}

/// Nodes and positive weights approximating an integral over the unit sphere,
/// the unit ball, or the unit ball with a weak singularity at `center`.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    kind: DomainKind,
    dim: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    center: Option<Point>,
    level: usize,
}

impl QuadratureRule {
    pub fn kind(&self) -> DomainKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn center(&self) -> Option<&Point> {
        self.center.as_ref()
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.nodes[i * self.dim..(i + 1) * self.dim]
    }

    pub fn nodes(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.nodes.chunks_exact(self.dim)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight_sum(&self) -> f64 {
        pairwise_sum(&self.weights)
    }
}

/// Pairwise (cascade) summation in a fixed association order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 16;
    if values.len() <= BLOCK {
        let mut s = 0.0;
        for v in values {
            s += v;
        }
        s
    } else {
        let mid = values.len() / 2;
        pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
    }
}

/// Pairwise sum of `f(0) + ... + f(len - 1)` without materializing the
/// terms; same association order as [`pairwise_sum`].
pub fn pairwise_sum_by<F: Fn(usize) -> f64>(len: usize, f: F) -> f64 {
    fn rec<F: Fn(usize) -> f64>(lo: usize, hi: usize, f: &F) -> f64 {
        if hi - lo <= 16 {
            let mut s = 0.0;
            for i in lo..hi {
                s += f(i);
            }
            s
        } else {
            let mid = lo + (hi - lo) / 2;
            rec(lo, mid, f) + rec(mid, hi, f)
        }
    }
    rec(0, len, &f)
}

/// Two pairwise sums computed in one pass, for terms that share work.
pub fn pairwise_sum2_by<F: Fn(usize) -> (f64, f64)>(len: usize, f: F) -> (f64, f64) {
    fn rec<F: Fn(usize) -> (f64, f64)>(lo: usize, hi: usize, f: &F) -> (f64, f64) {
        if hi - lo <= 16 {
            let mut s = (0.0, 0.0);
            for i in lo..hi {
                let (a, b) = f(i);
                s.0 += a;
                s.1 += b;
            }
            s
        } else {
            let mid = lo + (hi - lo) / 2;
            let (a, b) = rec(lo, mid, f);
            let (c, d) = rec(mid, hi, f);
            (a + c, b + d)
        }
    }
    rec(0, len, &f)
}

/// `sum_i w_i f(node_i)`, reduced pairwise. Terms may be computed in parallel
/// but the reduction order is fixed, so the result does not depend on the
/// thread count.
pub fn integrate<F>(rule: &QuadratureRule, f: F) -> Result<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let values: Vec<f64> = if rule.len() >= PARALLEL_MIN_NODES {
        (0..rule.len())
            .into_par_iter()
            .map(|i| f(rule.node(i)))
            .collect()
    } else {
        rule.nodes().map(&f).collect()
    };
    if let Some(index) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteIntegrand {
            index,
            node: rule.node(index).to_vec(),
            value: values[index],
        });
    }
    let terms: Vec<f64> = values
        .iter()
        .zip(&rule.weights)
        .map(|(v, w)| v * w)
        .collect();
    Ok(pairwise_sum(&terms))
}

// ---------------------------------------------------------------------------
// One-dimensional Gauss rules

type Rule1d = Arc<(Vec<f64>, Vec<f64>)>;

fn rule_cache() -> &'static Mutex<HashMap<(usize, u32), Rule1d>> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, u32), Rule1d>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Gauss-Legendre nodes (ascending) and weights on [-1, 1].
pub fn gauss_legendre(q: usize) -> Rule1d {
    gauss_jacobi_symmetric(q, 0)
}

/// Symmetric Gauss rule on [-1, 1] for the weight `(1 - t^2)^(twice_a / 2)`.
/// Nodes are exactly mirrored and odd counts contain `t = 0`.
pub fn gauss_jacobi_symmetric(q: usize, twice_a: u32) -> Rule1d {
    assert!(q > 0, "a Gauss rule needs at least one node");
    let key = (q, twice_a);
    if let Some(r) = rule_cache().lock().unwrap().get(&key) {
        return Arc::clone(r);
    }
    let (mut t, mut w) = if twice_a == 0 {
        legendre_newton(q)
    } else {
        golub_welsch_symmetric(q, f64::from(twice_a) / 2.0)
    };
    for i in 0..q / 2 {
        let j = q - 1 - i;
        let node = 0.5 * (t[j] - t[i]);
        let weight = 0.5 * (w[i] + w[j]);
        t[i] = -node;
        t[j] = node;
        w[i] = weight;
        w[j] = weight;
    }
    if q % 2 == 1 {
        t[q / 2] = 0.0;
    }
    let rule = Arc::new((t, w));
    rule_cache().lock().unwrap().insert(key, Arc::clone(&rule));
    rule
}

fn legendre_newton(q: usize) -> (Vec<f64>, Vec<f64>) {
    let mut t = vec![0.0; q];
    let mut w = vec![0.0; q];
    let qf = q as f64;
    for i in 0..q.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (qf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, p_prev) = legendre_pair(q, x);
            dp = qf * (x * p - p_prev) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (p, p_prev) = legendre_pair(q, x);
        if (x * x - 1.0).abs() > 0.0 {
            dp = qf * (x * p - p_prev) / (x * x - 1.0);
        }
        let weight = 2.0 / ((1.0 - x * x) * dp * dp);
        t[q - 1 - i] = x;
        t[i] = -x;
        w[q - 1 - i] = weight;
        w[i] = weight;
    }
    (t, w)
}

/// `(P_q(x), P_{q-1}(x))`.
fn legendre_pair(q: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if q == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=q {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    (p1, p0)
}

fn golub_welsch_symmetric(q: usize, a: f64) -> (Vec<f64>, Vec<f64>) {
    let mut jac = DMatrix::<f64>::zeros(q, q);
    for k in 1..q {
        let kf = k as f64;
        let beta = kf * (kf + 2.0 * a) / ((2.0 * kf + 2.0 * a - 1.0) * (2.0 * kf + 2.0 * a + 1.0));
        jac[(k, k - 1)] = beta.sqrt();
        jac[(k - 1, k)] = beta.sqrt();
    }
    // integral of (1 - t^2)^a over [-1, 1]
    let mu0 = PI.sqrt() * gamma_half((2.0 * a + 2.0) as u32) / gamma_half((2.0 * a + 3.0) as u32);
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> = (0..q)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], mu0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    pairs.into_iter().unzip()
}

/// Gauss-Legendre rule mapped to [a, b].
pub fn gauss_legendre_on(q: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let gl = gauss_legendre(q);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    gl.0.iter()
        .zip(&gl.1)
        .map(|(t, w)| (mid + half * t, half * w))
        .collect()
}

// ---------------------------------------------------------------------------
// Sphere rules

/// Angular resolution for a sphere rule of the given level. The circle gets
/// `2p` azimuthal nodes and every polar coordinate an odd count near `p`.
fn angular_resolution(n: usize, level: usize) -> usize {
    match n {
        2 | 3 => 8 * level,
        4 => 2 * level,
        _ => level,
    }
}

fn polar_count(p: usize) -> usize {
    if p.is_multiple_of(2) {
        p + 1
    } else {
        p + 2
    }
}

fn build_sphere(n: usize, p: usize) -> (Vec<f64>, Vec<f64>) {
    if n == 2 {
        let count = 2 * p;
        let half = count / 2;
        let mut nodes = vec![0.0; 2 * count];
        for j in 0..half {
            let phi = 2.0 * PI * j as f64 / count as f64;
            let (s, c) = phi.sin_cos();
            nodes[2 * j] = c;
            nodes[2 * j + 1] = s;
            nodes[2 * (j + half)] = -c;
            nodes[2 * (j + half) + 1] = -s;
        }
        return (nodes, vec![2.0 * PI / count as f64; count]);
    }
    let (sub_nodes, sub_weights) = build_sphere(n - 1, p);
    let polar = gauss_jacobi_symmetric(polar_count(p), (n - 3) as u32);
    let mut nodes = Vec::with_capacity(polar.0.len() * sub_nodes.len() / (n - 1) * n);
    let mut weights = Vec::with_capacity(polar.0.len() * sub_weights.len());
    for (&t, &wt) in polar.0.iter().zip(&polar.1) {
        let s = (1.0 - t * t).sqrt();
        for (z, &wz) in sub_nodes.chunks_exact(n - 1).zip(&sub_weights) {
            nodes.extend(z.iter().map(|zi| s * zi));
            nodes.push(t);
            weights.push(wt * wz);
        }
    }
    (nodes, weights)
}

type RuleCache = Mutex<HashMap<(usize, usize), Arc<QuadratureRule>>>;

fn sphere_cache() -> &'static RuleCache {
    static CACHE: OnceLock<RuleCache> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Shared, cached sphere rule.
pub fn sphere_rule_shared(n: usize, level: usize) -> Result<Arc<QuadratureRule>> {
    check_dim(n)?;
    if level == 0 {
        return Err(Error::InvalidLevel(level));
    }
    if let Some(r) = sphere_cache().lock().unwrap().get(&(n, level)) {
        return Ok(Arc::clone(r));
    }
    let (nodes, weights) = build_sphere(n, angular_resolution(n, level));
    let rule = Arc::new(QuadratureRule {
        kind: DomainKind::Sphere,
        dim: n,
        nodes,
        weights,
        center: None,
        level,
    });
    sphere_cache()
        .lock()
        .unwrap()
        .insert((n, level), Arc::clone(&rule));
    Ok(rule)
}

/// Quadrature on the unit sphere. For n = 2 and n = 3 the rule integrates
/// spherical harmonics of degree up to `16 * level - 1` exactly.
pub fn sphere_rule(n: usize, level: usize) -> Result<QuadratureRule> {
    sphere_rule_shared(n, level).map(|r| (*r).clone())
}

// ---------------------------------------------------------------------------
// Ball rules

/// A radial rule: `(r, w)` pairs with the `r^(n-1)` Jacobian already applied.
pub type RadialRule = Vec<(f64, f64)>;

/// Composite Gauss-Legendre radial rule over consecutive segments
/// `[(a, b, q), ...]` with the `r^(n-1)` Jacobian folded in.
pub fn radial_rule(n: usize, segments: &[(f64, f64, usize)]) -> RadialRule {
    segments
        .iter()
        .flat_map(|&(a, b, q)| gauss_legendre_on(q, a, b))
        .map(|(r, w)| (r, w * r.powi(n as i32 - 1)))
        .collect()
}

fn product_rule(
    kind: DomainKind,
    sphere: &QuadratureRule,
    radial: &[(f64, f64)],
    level: usize,
) -> QuadratureRule {
    let n = sphere.dim();
    let mut nodes = Vec::with_capacity(radial.len() * sphere.len() * n);
    let mut weights = Vec::with_capacity(radial.len() * sphere.len());
    for &(r, wr) in radial {
        for (y, &wy) in sphere.nodes().zip(sphere.weights()) {
            nodes.extend(y.iter().map(|c| r * c));
            weights.push(wr * wy);
        }
    }
    QuadratureRule {
        kind,
        dim: n,
        nodes,
        weights,
        center: None,
        level,
    }
}

/// Product quadrature on the unit ball: `level + 2` radial Gauss points times
/// `sphere_rule(n, level)`.
pub fn ball_rule(n: usize, level: usize) -> Result<QuadratureRule> {
    let sphere = sphere_rule_shared(n, level)?;
    let radial = radial_rule(n, &[(0.0, 1.0, level + 2)]);
    Ok(product_rule(DomainKind::Ball, &sphere, &radial, level))
}

/// Product rule on the ball of radius `segments.last().1` whose radial factor
/// is a composite Gauss rule over the given segments. Used where the
/// integrand has radial breakpoints (the mollifier profile).
pub fn ball_rule_composite(
    n: usize,
    sphere_level: usize,
    segments: &[(f64, f64, usize)],
) -> Result<QuadratureRule> {
    let sphere = sphere_rule_shared(n, sphere_level)?;
    if segments.is_empty() || segments.iter().any(|s| s.2 == 0 || !(s.1 > s.0)) {
        return Err(Error::InvalidParameter(
            "radial segments must be non-empty increasing intervals with q > 0".into(),
        ));
    }
    let radial = radial_rule(n, segments);
    Ok(product_rule(DomainKind::Ball, &sphere, &radial, sphere_level))
}

/// Splitting radius of the local patch around a singular center.
pub fn singular_patch_radius(center_norm: f64) -> f64 {
    (0.5 * (1.0 - center_norm)).min(0.25)
}

/// Distance from `center` to the unit sphere along the unit direction `dir`.
#[inline]
fn exit_distance(center: &[f64], dir: &[f64], c2: f64) -> f64 {
    let cw = dot(center, dir);
    let disc = cw * cw + (1.0 - c2);
    // the two forms agree; the second avoids cancellation when cw > 0
    if cw <= 0.0 {
        -cw + disc.sqrt()
    } else {
        (1.0 - c2) / (cw + disc.sqrt())
    }
}

/// Rule for `int_{B_1} f(y) dy` with `f ~ |y - center|^(2-n)` (or a log for
/// n = 2). B_1 is star-shaped about `center`; in center-local polar
/// coordinates `y = center + t w` the Jacobian `t^(n-1)` cancels the
/// singularity. The radial range is split at
/// `rho = min((1 - |center|) / 2, 1/4)`: the inner patch `[0, rho]` uses the
/// substitution `t = rho s^2` (smoothing log terms), the remainder
/// `[rho, R(w)]` plain Gauss. Directions come from `sphere_rule(n, ceil(level / 4))`
/// and each radial segment carries `level` points.
pub fn singular_ball_rule(n: usize, center: &Point, level: usize) -> Result<QuadratureRule> {
    check_dim(n)?;
    center.expect_dim(n)?;
    if level == 0 {
        return Err(Error::InvalidLevel(level));
    }
    let c2 = norm_sq(center);
    if c2.sqrt() >= 1.0 {
        return Err(Error::Domain {
            point: center.coords().to_vec(),
            reason: "singular center must satisfy |center| < 1".into(),
        });
    }
    let dirs = sphere_rule_shared(n, level.div_ceil(4))?;
    let rho = singular_patch_radius(c2.sqrt());
    let gl = gauss_legendre(level);
    let total = dirs.len() * 2 * level;
    let mut nodes = Vec::with_capacity(total * n);
    let mut weights = Vec::with_capacity(total);
    let nm1 = n as i32 - 1;

    for (w, &ww) in dirs.nodes().zip(dirs.weights()) {
        let r_exit = exit_distance(center, w, c2);
        // inner patch, t = rho s^2, dt = 2 rho s ds, s in [0, 1]
        for (s_ref, ws_ref) in gl.0.iter().zip(&gl.1) {
            let s = 0.5 * (s_ref + 1.0);
            let ws = 0.5 * ws_ref;
            let t = rho * s * s;
            nodes.extend(center.iter().zip(w).map(|(c, d)| c + t * d));
            weights.push(ww * ws * 2.0 * rho * s * t.powi(nm1));
        }
        // remainder [rho, r_exit]
        let half = 0.5 * (r_exit - rho);
        let mid = 0.5 * (r_exit + rho);
        for (x_ref, wx_ref) in gl.0.iter().zip(&gl.1) {
            let t = mid + half * x_ref;
            nodes.extend(center.iter().zip(w).map(|(c, d)| c + t * d));
            weights.push(ww * half * wx_ref * t.powi(nm1));
        }
    }
    Ok(QuadratureRule {
        kind: DomainKind::SingularBall,
        dim: n,
        nodes,
        weights,
        center: Some(center.clone()),
        level,
    })
}

// ---------------------------------------------------------------------------
// Deterministic scattered points

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

/// The first `count` points of the Halton sequence (bases 2, 3, 5, 7, 11,
/// 13), mapped to the cube `[-r_max, r_max]^n`, that fall in the shell
/// `r_min <= |x| <= r_max`. Flat storage, `n` coordinates per point.
pub fn halton_shell_points(n: usize, count: usize, r_min: f64, r_max: f64) -> Result<Vec<f64>> {
    const BASES: [u64; MAX_DIM] = [2, 3, 5, 7, 11, 13];
    check_dim(n)?;
    if !(0.0 <= r_min && r_min < r_max) {
        return Err(Error::InvalidParameter(format!(
            "shell radii must satisfy 0 <= r_min < r_max, got {r_min}, {r_max}"
        )));
    }
    let mut out = Vec::with_capacity(count * n);
    let mut x = vec![0.0; n];
    let mut i = 1u64;
    while out.len() < count * n {
        for (d, xd) in x.iter_mut().enumerate() {
            *xd = r_max * (2.0 * radical_inverse(i, BASES[d]) - 1.0);
        }
        let r = norm(&x);
        if r >= r_min && r <= r_max {
            out.extend_from_slice(&x);
        }
        i += 1;
    }
    Ok(out)
}
