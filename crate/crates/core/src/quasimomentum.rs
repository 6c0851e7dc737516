//! Quasimomentum branches `k_j = arccos Δ_j`, the averaged quasimomentum
//! `𝕜 = (k₁ + k₂ + k₃)/3` with `𝔮 = Im 𝕜`, its moments computed by gap sums
//! and by an asymptotic fit on the imaginary axis, and the gap inequalities
//! built on them.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::floquet::{char_data, discriminant_centered};
use crate::linalg::{c, eigenvalues, j3, match3, C64, I};
use crate::monodromy::{monodromy, psi_tilde};
use crate::potential::{MotionConstants, PeriodicPotential};
use crate::quad::gauss_legendre;
use crate::spectra::{BranchKind, BranchPoint, Gap};

/// Floor for the anchor height `λ_c`.
pub const LAMBDA_C_FLOOR: f64 = 2.0;

/// Two arccos determinations closer to each other than this (in distance
/// to the target) are ambiguous.
const AMBIGUITY_TOL: f64 = 1e-6;

/// Allowed `||τ_a τ_b| − 1|` and `||τ₃| − 1|` at a gap node.
const PAIR_TOL: f64 = 1e-6;

/// Largest step when following a branch down a vertical segment.
const TRACK_STEP: f64 = 0.1;

/// Largest condition number of the (column-scaled) fit design.
const MAX_FIT_COND: f64 = 1e8;

#[derive(Debug, Clone, PartialEq)]
pub struct QmConfig {
    /// Anchor height: branches are defined for `Im λ ≥ λ_c`.
    pub lambda_c: f64,
    pub fit_heights: Vec<f64>,
}

impl QmConfig {
    pub fn new(lambda_c: f64, fit_heights: Vec<f64>) -> Result<Self> {
        if !(lambda_c >= 1.0) {
            return Err(Error::InvalidArgument(format!("lambda_c = {lambda_c} < 1")));
        }
        if fit_heights.len() < 4 {
            return Err(Error::InvalidArgument(format!("{} fit heights, need at least 4", fit_heights.len())));
        }
        if let Some(h) = fit_heights.iter().find(|&&h| !(h >= lambda_c)) {
            return Err(Error::InvalidArgument(format!("fit height {h} below lambda_c = {lambda_c}")));
        }
        Ok(Self { lambda_c, fit_heights })
    }

    /// `λ_c = max(2, 1 + max |Im λ|)` over the complex branch points, with
    /// the default fit heights.
    pub fn from_branch_points(points: &[BranchPoint]) -> Self {
        let im = points
            .iter()
            .filter(|p| p.kind != BranchKind::Real)
            .map(|p| p.location.im.abs())
            .fold(f64::NEG_INFINITY, f64::max);
        let lambda_c = if im.is_finite() { (1.0 + im).max(LAMBDA_C_FLOOR) } else { LAMBDA_C_FLOOR };
        let fit_heights = default_fit_heights().into_iter().map(|h| h.max(lambda_c)).collect();
        Self { lambda_c, fit_heights }
    }
}

impl Default for QmConfig {
    fn default() -> Self {
        Self { lambda_c: LAMBDA_C_FLOOR, fit_heights: default_fit_heights() }
    }
}

/// Eight logarithmically spaced heights in `[20, 120]`.
pub fn default_fit_heights() -> Vec<f64> {
    let (a, b) = (20f64.ln(), 120f64.ln());
    (0..8).map(|i| (a + (b - a) * i as f64 / 7.0).exp()).collect()
}

/// Lyapunov values as eigenvalues of `Λ = (ψ + ψ⁻¹)/2`, `ψ⁻¹ = Jψ̃J`.
///
/// Away from the real axis `ψ` has one growing and two decaying
/// multipliers; the decaying ones cannot be recovered from `ψ` alone, but
/// all three Lyapunov values are of the same size.
pub fn lyapunov_values(v: &PeriodicPotential, lambda: C64) -> Result<[C64; 3]> {
    let psi = monodromy(v, lambda)?.psi;
    let inv = j3() * psi_tilde(v, lambda)?.psi * j3();
    Ok(eigenvalues(&((psi + inv) * c(0.5, 0.0))))
}

/// `k₀` with `cos k₀ = Δ` and `Im k₀ ≥ 0`; the other determinations are
/// `±k₀ + 2πm`.
fn arccos_base(d: C64) -> C64 {
    let s = (d * d - 1.0).sqrt();
    let (w1, w2) = (d + s, d - s);
    let big = if w1.norm() >= w2.norm() { w1 } else { w2 };
    // e^{ik₀} = 1/big, the root of modulus ≤ 1.
    I * big.ln()
}

/// The determination of `arccos` nearest `target`, and the distance gap to
/// the runner-up.
fn nearest_determination(k0: C64, target: C64) -> (C64, f64) {
    let mut cands: Vec<(f64, C64)> = Vec::with_capacity(6);
    for sign in [1.0, -1.0] {
        let base = k0 * sign;
        let m = ((target - base).re / (2.0 * PI)).round();
        for dm in [-1.0, 0.0, 1.0] {
            let k = base + 2.0 * PI * (m + dm);
            cands.push(((k - target).norm(), k));
        }
    }
    cands.sort_by(|a, b| a.0.total_cmp(&b.0));
    (cands[0].1, cands[1].0 - cands[0].0)
}

/// The three branches `k_j(λ)`, `Im λ ≥ λ_c`, ordered as `β₁, β₂, β₃`.
///
/// The determination is fixed at the anchor `Re λ + i·max(Im λ, 2λ_c)` by
/// proximity to `λ`, then followed by continuity down to `λ`.
pub fn k_branches(v: &PeriodicPotential, lambda: C64, cfg: &QmConfig) -> Result<[C64; 3]> {
    if !(lambda.im >= cfg.lambda_c) {
        return Err(Error::InvalidArgument(format!("Im lambda = {} below lambda_c = {}", lambda.im, cfg.lambda_c)));
    }
    let top = lambda.im.max(2.0 * cfg.lambda_c);
    let anchor = c(lambda.re, top);
    let mut ks = [c(0.0, 0.0); 3];
    let d = ordered_lyapunov(v, anchor)?;
    for j in 0..3 {
        let (k, gap) = nearest_determination(arccos_base(d[j]), anchor);
        if gap < AMBIGUITY_TOL {
            return Err(Error::BranchAmbiguity { lambda: anchor });
        }
        ks[j] = k;
    }
    let steps = ((top - lambda.im) / TRACK_STEP).ceil() as usize;
    for s in 1..=steps {
        let z = c(lambda.re, top - (top - lambda.im) * s as f64 / steps as f64);
        let d = lyapunov_values(v, z)?;
        // Follow each branch to the Lyapunov value and determination nearest
        // its previous position.
        let mut next = [c(0.0, 0.0); 3];
        let mut used = [false; 3];
        for j in 0..3 {
            let mut best: Option<(f64, usize, C64)> = None;
            for (i, di) in d.iter().enumerate() {
                if used[i] {
                    continue;
                }
                let (k, _) = nearest_determination(arccos_base(*di), ks[j]);
                let dist = (k - ks[j]).norm();
                if best.map_or(true, |b| dist < b.0) {
                    best = Some((dist, i, k));
                }
            }
            let (_, i, k) = best.expect("three candidates");
            used[i] = true;
            next[j] = k;
        }
        ks = next;
    }
    Ok(ks)
}

/// Lyapunov values ordered to match `cos(λ − β_j/(2λ))`.
fn ordered_lyapunov(v: &PeriodicPotential, lambda: C64) -> Result<[C64; 3]> {
    let d = lyapunov_values(v, lambda)?;
    let b = v.beta_spectrum();
    let model = [b.beta1, b.beta2, b.beta3].map(|bj| (lambda - bj / (lambda * 2.0)).cos());
    // The values grow like e^{|Im λ|}; compare relative to that size.
    let scale = model[2].norm().max(1.0);
    let ordered = match3(&model.map(|z| z / scale), &d.map(|z| z / scale));
    Ok(ordered.map(|z| z * scale))
}

/// `𝕜(λ) = (k₁ + k₂ + k₃)/3`.
pub fn averaged_k(v: &PeriodicPotential, lambda: C64, cfg: &QmConfig) -> Result<C64> {
    let k = k_branches(v, lambda, cfg)?;
    Ok((k[0] + k[1] + k[2]) / 3.0)
}

/// Multiplier data at a real `λ` inside a gap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapNode {
    pub lambda: f64,
    /// `ln|τ_a|` for the multiplier outside the circle.
    pub q1: f64,
    /// `−ln|τ_b|` for the multiplier inside the circle.
    pub q2: f64,
    /// `p₁ + p₂ = arg τ_b − arg τ_a`, wrapped to `(−π, π]`.
    pub p1p2: f64,
    /// `arg τ_a`, the phase of the off-circle pair.
    pub pair_phase: f64,
    /// `arg τ₃` of the unimodular multiplier.
    pub unimodular_phase: f64,
    /// Largest `|τ_j|`.
    pub tau_max: f64,
    pub d: f64,
}

impl GapNode {
    /// `𝔮 = (q₁ + q₂)/3`.
    pub fn q(&self) -> f64 {
        (self.q1 + self.q2) / 3.0
    }
}

/// Splits the multipliers at a real `λ` into one unimodular and a pair
/// `τ_a, τ_b = 1/τ̄_a` off the circle.
pub fn gap_node(v: &PeriodicPotential, lambda: f64) -> Result<GapNode> {
    let cd = char_data(v, c(lambda, 0.0))?;
    let tau = eigenvalues(&cd.psi);
    let off = |t: &C64| (t.norm() - 1.0).abs();
    let i3 = (0..3).min_by(|&a, &b| off(&tau[a]).total_cmp(&off(&tau[b]))).unwrap();
    let mut pair: Vec<C64> = (0..3).filter(|&i| i != i3).map(|i| tau[i]).collect();
    pair.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
    let (ta, tb) = (pair[0], pair[1]);
    let product = ta.norm() * tb.norm();
    if (product - 1.0).abs() > PAIR_TOL || off(&tau[i3]) > PAIR_TOL {
        return Err(Error::LabelingFailure { lambda, product });
    }
    let wrap = |x: f64| {
        let y = (x + PI).rem_euclid(2.0 * PI) - PI;
        if y == -PI {
            PI
        } else {
            y
        }
    };
    Ok(GapNode {
        lambda,
        q1: ta.norm().ln(),
        q2: -tb.norm().ln(),
        p1p2: wrap(tb.arg() - ta.arg()),
        pair_phase: ta.arg(),
        unimodular_phase: tau[i3].arg(),
        tau_max: ta.norm().max(tau[i3].norm()),
        d: discriminant_centered(&cd).re,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapProfile {
    pub gap: Gap,
    pub nodes: Vec<GapNode>,
}

impl GapProfile {
    pub fn q_values(&self) -> Vec<f64> {
        self.nodes.iter().map(GapNode::q).collect()
    }

    pub fn max_q(&self) -> f64 {
        self.nodes.iter().map(GapNode::q).fold(0.0, f64::max)
    }
}

/// `𝔮` and the branch diagnostics at `nodes` Chebyshev points strictly
/// inside the gap. An empty gap gives an empty profile. The returned gap
/// carries `height = max 𝔮`.
pub fn averaged_q_on_gap(v: &PeriodicPotential, gap: &Gap, nodes: usize) -> Result<GapProfile> {
    let mut gap = *gap;
    if gap.is_empty() || nodes == 0 {
        gap.height = 0.0;
        return Ok(GapProfile { gap, nodes: vec![] });
    }
    let mid = 0.5 * (gap.lam_minus + gap.lam_plus);
    let hw = 0.5 * gap.width();
    let pts: Vec<GapNode> = (0..nodes)
        .map(|i| {
            let t = ((2 * i + 1) as f64 * PI / (2 * nodes) as f64).cos();
            gap_node(v, mid - hw * t)
        })
        .collect::<Result<_>>()?;
    gap.height = pts.iter().map(GapNode::q).fold(0.0, f64::max);
    Ok(GapProfile { gap, nodes: pts })
}

/// Profiles for all gaps, in parallel.
pub fn gap_profiles(v: &PeriodicPotential, gaps: &[Gap], nodes: usize) -> Result<Vec<GapProfile>> {
    gaps.par_iter().map(|g| averaged_q_on_gap(v, g, nodes)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapInvariantReport {
    /// `max |q₁ − q₂|`.
    pub q_mismatch: f64,
    /// Largest spread of `p₁ + p₂` within one gap.
    pub p_spread: f64,
    /// Largest distance of `p₁ + p₂` to `2πℤ`.
    pub p_lattice: f64,
    pub min_q: f64,
    pub max_q: f64,
    /// `(2/3)‖v‖`.
    pub q_bound: f64,
}

impl GapInvariantReport {
    pub fn holds(&self, q_tol: f64, p_tol: f64) -> bool {
        self.q_mismatch <= q_tol
            && self.p_spread <= p_tol
            && self.p_lattice <= p_tol
            && self.min_q > 0.0
            && self.max_q <= self.q_bound
    }
}

pub fn gap_invariants(v: &PeriodicPotential, profiles: &[GapProfile]) -> GapInvariantReport {
    let mut r = GapInvariantReport {
        q_mismatch: 0.0,
        p_spread: 0.0,
        p_lattice: 0.0,
        min_q: f64::INFINITY,
        max_q: 0.0,
        q_bound: 2.0 / 3.0 * v.norm(),
    };
    for p in profiles.iter().filter(|p| !p.nodes.is_empty()) {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for nd in &p.nodes {
            r.q_mismatch = r.q_mismatch.max((nd.q1 - nd.q2).abs());
            lo = lo.min(nd.p1p2);
            hi = hi.max(nd.p1p2);
            r.p_lattice = r.p_lattice.max(nd.p1p2.abs());
            r.min_q = r.min_q.min(nd.q());
            r.max_q = r.max_q.max(nd.q());
        }
        r.p_spread = r.p_spread.max(hi - lo);
    }
    r
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscriminantBoundReport {
    /// `max |−𝔇 − ¼ sinh²q (cosh q − cos(θ − φ₃))²| / |𝔇|`.
    pub max_relative: f64,
    /// Nodes where `q⁶/16 < −𝔇` fails.
    pub lower_violations: usize,
    /// Nodes where `−𝔇 ≤ sinh²q cosh²q ≤ e^{4q}/16` fails.
    pub upper_violations: usize,
    pub nodes: usize,
}

/// Checks `−𝔇 = ¼ sinh²q (cosh q − cos(θ − φ₃))²` and the bounds around
/// it, `q = q₁`, `θ` the phase of the off-circle pair and `φ₃` that of the
/// unimodular multiplier.
pub fn gap_discriminant_bounds(profiles: &[GapProfile]) -> DiscriminantBoundReport {
    let mut r = DiscriminantBoundReport { max_relative: 0.0, lower_violations: 0, upper_violations: 0, nodes: 0 };
    for nd in profiles.iter().flat_map(|p| &p.nodes) {
        let q = nd.q1;
        let minus_d = -nd.d;
        let model = 0.25 * q.sinh().powi(2) * (q.cosh() - (nd.pair_phase - nd.unimodular_phase).cos()).powi(2);
        let rel = (minus_d - model).abs() / minus_d.abs().max(f64::MIN_POSITIVE);
        r.max_relative = r.max_relative.max(rel);
        if !(q.powi(6) / 16.0 < minus_d) {
            r.lower_violations += 1;
        }
        let sc = q.sinh().powi(2) * q.cosh().powi(2);
        if !(minus_d <= sc * (1.0 + 1e-12) && sc <= (4.0 * q).exp() / 16.0 * (1.0 + 1e-12)) {
            r.upper_violations += 1;
        }
        r.nodes += 1;
    }
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentRoute {
    GapSum,
    AsymptoticFit,
    TiltedFit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QMoments {
    pub route: MomentRoute,
    /// `Q₀, Q₁, Q₂`.
    pub q: [f64; 3],
    /// Error bars (truncation plus quadrature, or fit model error).
    pub error: [f64; 3],
    pub targets: MotionConstants,
    /// Fit residual (zero for gap sums).
    pub residual: f64,
}

impl QMoments {
    /// `|Q_m − (2/3)H_m| / |H_m|` (absolute when `H_m = 0`).
    pub fn relative_to_targets(&self) -> [f64; 3] {
        let h = [self.targets.h0, self.targets.h1, self.targets.h2];
        std::array::from_fn(|m| {
            let d = (self.q[m] - 2.0 / 3.0 * h[m]).abs();
            if h[m] == 0.0 {
                d
            } else {
                d / h[m].abs()
            }
        })
    }
}

/// Per-gap integrals `(1/π)∫ ξ^m 𝔮(ξ) dξ`, `m = 0, 1, 2`, with the
/// substitution `ξ = mid + hw·sin θ` and `order`-point Gauss–Legendre in
/// `θ`; the second array is the change against the half-order rule.
pub fn gap_moment_integrals(v: &PeriodicPotential, gap: &Gap, order: usize) -> Result<([f64; 3], [f64; 3])> {
    if gap.is_empty() {
        return Ok(([0.0; 3], [0.0; 3]));
    }
    let fine = gap_rule(v, gap, order)?;
    let coarse = gap_rule(v, gap, (order / 2).max(2))?;
    Ok((fine, std::array::from_fn(|m| (fine[m] - coarse[m]).abs())))
}

fn gap_rule(v: &PeriodicPotential, gap: &Gap, order: usize) -> Result<[f64; 3]> {
    let (x, w) = gauss_legendre(order);
    let mid = 0.5 * (gap.lam_minus + gap.lam_plus);
    let hw = 0.5 * gap.width();
    let mut s = [0.0; 3];
    for (xi, wi) in x.iter().zip(&w) {
        let th = 0.5 * PI * xi;
        let xs = mid + hw * th.sin();
        let q = gap_node(v, xs)?.q();
        let jac = wi * 0.5 * PI * hw * th.cos() / PI;
        s[0] += jac * q;
        s[1] += jac * q * xs;
        s[2] += jac * q * xs * xs;
    }
    Ok(s)
}

/// Tail of a series from the trend of its last five shells `|n|`: zero
/// when they all vanish, otherwise a power law `c (n/N)^{−p}` fitted to the
/// nonzero ones gives `c_N N/(p − 1)`; with no measurable decay the largest
/// of them times `N` is returned.
pub fn tail_estimate(shells: &[(u64, f64)]) -> f64 {
    let last = &shells[shells.len().saturating_sub(5)..];
    let Some(&(n_last, _)) = last.last() else { return 0.0 };
    let pts: Vec<(f64, f64)> =
        last.iter().filter(|s| s.1 > 0.0 && s.0 > 0).map(|s| ((s.0 as f64).ln(), s.1.ln())).collect();
    if pts.is_empty() {
        return 0.0;
    }
    let n = n_last.max(1) as f64;
    let cmax = pts.iter().map(|p| p.1.exp()).fold(0.0, f64::max);
    if pts.len() < 2 {
        return cmax * n;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let p = -sxy / sxx;
    if p > 1.0 {
        // Value of the fitted law at the last shell.
        let cn = (my - p * (n.ln() - mx)).exp();
        cn * n / (p - 1.0)
    } else {
        cmax * n
    }
}

/// Groups per-gap contributions `(n, x)` into shells `|n|` (absolute
/// values summed).
fn shells(per_gap: &[(i64, f64)]) -> Vec<(u64, f64)> {
    let mut out: Vec<(u64, f64)> = Vec::new();
    for &(n, x) in per_gap {
        let a = n.unsigned_abs();
        match out.iter_mut().find(|s| s.0 == a) {
            Some(s) => s.1 += x.abs(),
            None => out.push((a, x.abs())),
        }
    }
    out.sort_by_key(|s| s.0);
    out
}

/// `Q_m = (1/π) Σ_gaps ∫ ξ^m 𝔮(ξ) dξ` with a per-moment error bar from the
/// quadrature change and the tail trend over `|n|`.
pub fn moments_gap_sum(v: &PeriodicPotential, gaps: &[Gap], order: usize) -> Result<QMoments> {
    let per: Vec<([f64; 3], [f64; 3])> = gaps.par_iter().map(|g| gap_moment_integrals(v, g, order)).collect::<Result<_>>()?;
    let mut q = [0.0; 3];
    let mut error = [0.0; 3];
    for m in 0..3 {
        q[m] = per.iter().map(|p| p.0[m]).sum();
        let quad: f64 = per.iter().map(|p| p.1[m]).sum();
        let contrib: Vec<(i64, f64)> = gaps.iter().zip(&per).map(|(g, p)| (g.n, p.0[m])).collect();
        error[m] = quad + tail_estimate(&shells(&contrib));
    }
    Ok(QMoments { route: MomentRoute::GapSum, q, error, targets: v.motion_constants(), residual: 0.0 })
}

/// Real least squares for `λ(𝕜(λ) − λ) = −Σ_{m<terms} Q_m λ^{−m}` over the
/// sample points, columns scaled to unit norm. Returns the coefficients,
/// the RMS residual and the condition number of the scaled design.
fn fit_moments(points: &[(C64, C64)], terms: usize) -> Result<(Vec<f64>, f64, f64)> {
    let rows = 2 * points.len();
    let mut a = DMatrix::<f64>::zeros(rows, terms);
    let mut b = DVector::<f64>::zeros(rows);
    for (i, (lam, kk)) in points.iter().enumerate() {
        let y = lam * (kk - lam);
        b[2 * i] = y.re;
        b[2 * i + 1] = y.im;
        for m in 0..terms {
            let col = -lam.powi(-(m as i32));
            a[(2 * i, m)] = col.re;
            a[(2 * i + 1, m)] = col.im;
        }
    }
    let scale: Vec<f64> = (0..terms).map(|m| a.column(m).norm()).collect();
    for m in 0..terms {
        if scale[m] > 0.0 {
            a.column_mut(m).scale_mut(1.0 / scale[m]);
        }
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let cond = smax / smin;
    if !(cond <= MAX_FIT_COND) {
        return Err(Error::IllConditionedFit { cond });
    }
    let x = svd.solve(&b, f64::EPSILON * smax).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let res = (&a * &x - &b).norm() / (rows as f64).sqrt();
    Ok(((0..terms).map(|m| x[m] / scale[m]).collect(), res, cond))
}

fn fit_on(points: &[(C64, C64)], route: MomentRoute, targets: MotionConstants) -> Result<QMoments> {
    let (hi, res, _) = fit_moments(points, 5)?;
    // On the imaginary axis odd and even moments sit in separate components,
    // so dropping one term leaves half of them unchanged; compare with both.
    let (lo4, _, _) = fit_moments(points, 4)?;
    let (lo3, _, _) = fit_moments(points, 3)?;
    Ok(QMoments {
        route,
        q: [hi[0], hi[1], hi[2]],
        error: std::array::from_fn(|m| (hi[m] - lo4[m]).abs().max((hi[m] - lo3[m]).abs()) + res),
        targets,
        residual: res,
    })
}

/// Moments from `𝕜(iν)` at the configured heights, fitted to
/// `ν(𝕜(iν) − iν) = iQ₀ + Q₁/ν − iQ₂/ν² + …` (the model
/// `𝕜 = λ − Q₀/λ − Q₁/λ² − Q₂/λ³ − …` at `λ = iν`), with two more terms
/// absorbing the higher orders. The error bar is the larger change against
/// fits with one and two terms fewer, plus the residual.
pub fn moments_asymptotic_fit(v: &PeriodicPotential, cfg: &QmConfig) -> Result<QMoments> {
    let pts: Vec<(C64, C64)> = cfg
        .fit_heights
        .par_iter()
        .map(|&h| {
            let lam = c(0.0, h);
            Ok((lam, averaged_k(v, lam, cfg)?))
        })
        .collect::<Result<_>>()?;
    fit_on(&pts, MomentRoute::AsymptoticFit, v.motion_constants())
}

/// The same fit on the tilted ray `λ = ν e^{iπ/3}`, which stays inside the
/// sector `Im λ ≥ |Re λ|`.
pub fn moments_tilted_fit(v: &PeriodicPotential, cfg: &QmConfig) -> Result<QMoments> {
    let dir = (I * (PI / 3.0)).exp();
    let pts: Vec<(C64, C64)> = cfg
        .fit_heights
        .par_iter()
        .map(|&h| {
            // Radius chosen so the imaginary part equals the height.
            let lam = dir * (h / dir.im);
            Ok((lam, averaged_k(v, lam, cfg)?))
        })
        .collect::<Result<_>>()?;
    fit_on(&pts, MomentRoute::TiltedFit, v.motion_constants())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HerglotzRow {
    pub lambda: C64,
    pub direct: C64,
    pub represented: C64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HerglotzReport {
    pub rows: Vec<HerglotzRow>,
    /// Bound on the contribution of the gaps outside the range plus the
    /// quadrature change.
    pub truncation: f64,
}

impl HerglotzReport {
    pub fn max_residual(&self) -> f64 {
        self.rows.iter().map(|r| r.residual).fold(0.0, f64::max)
    }
}

/// Compares `𝕜(λ)` with `λ + (1/π) Σ_gaps ∫ 𝔮(t)/(t − λ) dt`.
pub fn herglotz_check(
    v: &PeriodicPotential,
    gaps: &[Gap],
    points: &[C64],
    cfg: &QmConfig,
    order: usize,
) -> Result<HerglotzReport> {
    for p in points {
        if !(p.im >= cfg.lambda_c) {
            return Err(Error::InvalidArgument(format!("test point {p} below lambda_c = {}", cfg.lambda_c)));
        }
    }
    let live: Vec<&Gap> = gaps.iter().filter(|g| !g.is_empty()).collect();
    let (x, w) = gauss_legendre(order);
    // 𝔮 at the substitution nodes of every gap, reused for all test points.
    let samples: Vec<Vec<(f64, f64)>> = live
        .par_iter()
        .map(|g| {
            let mid = 0.5 * (g.lam_minus + g.lam_plus);
            let hw = 0.5 * g.width();
            x.iter()
                .zip(&w)
                .map(|(xi, wi)| {
                    let th = 0.5 * PI * xi;
                    let t = mid + hw * th.sin();
                    Ok((t, gap_node(v, t)?.q() * wi * 0.5 * PI * hw * th.cos() / PI))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let rows: Vec<HerglotzRow> = points
        .par_iter()
        .map(|&lam| {
            let direct = averaged_k(v, lam, cfg)?;
            let mut represented = lam;
            for g in &samples {
                for &(t, wq) in g {
                    represented += wq / (t - lam);
                }
            }
            Ok(HerglotzRow { lambda: lam, direct, represented, residual: (direct - represented).norm() })
        })
        .collect::<Result<_>>()?;
    let q0 = moments_gap_sum(v, gaps, order)?;
    let n_max = gaps.iter().map(|g| g.n.unsigned_abs()).max().unwrap_or(0) as f64;
    let dist = points
        .iter()
        .map(|p| (PI * (n_max + 0.5) - p.re.abs()).max(p.im))
        .fold(f64::INFINITY, f64::min);
    Ok(HerglotzReport { rows, truncation: q0.error[0] / dist })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionVariable {
    pub n: i64,
    pub j: u8,
    /// `(2/π) ∫_γ 𝔮 dλ`.
    pub value: f64,
}

/// `A_ω = (2/π)∫_{γ_ω} 𝔮 dλ` per gap and their sum, which is reported next
/// to `‖v‖²`.
pub fn action_variables(v: &PeriodicPotential, gaps: &[Gap], order: usize) -> Result<(Vec<ActionVariable>, f64)> {
    let out: Vec<ActionVariable> = gaps
        .par_iter()
        .map(|g| {
            let (m, _) = gap_moment_integrals(v, g, order)?;
            Ok(ActionVariable { n: g.n, j: g.j, value: 2.0 * m[0] })
        })
        .collect::<Result<_>>()?;
    let sum = out.iter().map(|a| a.value).sum();
    Ok((out, sum))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HamiltonianBounds {
    pub h2: f64,
    /// Right-hand side of `𝓗₂ ≤ (‖v‖/3π) Σ |γ|(|λ⁺| + |λ⁻|)²` over the
    /// located gaps.
    pub rhs_h1: f64,
    /// Right-hand side of `𝓗₂ ≤ ((2τ•⁴)^{1/6}/3π) Σ |γ|^{7/6}(|λ⁺| + |λ⁻|)²`.
    pub rhs_h2: f64,
    /// Estimated contribution of the gaps outside the range to each sum.
    pub tail_h1: f64,
    pub tail_h2: f64,
    /// `sup |τ_j|` over the gap nodes.
    pub tau_plus: f64,
    /// `max(1, τ₊/2)`.
    pub tau_bullet: f64,
}

impl HamiltonianBounds {
    /// `rhs + tail − 𝓗₂` for (H1) and (H2).
    pub fn slack(&self) -> [f64; 2] {
        [self.rhs_h1 + self.tail_h1 - self.h2, self.rhs_h2 + self.tail_h2 - self.h2]
    }
}

/// Evaluates both Hamiltonian inequalities over the gaps of `profiles`,
/// with `τ₊` taken from the gap nodes.
pub fn hamiltonian_bounds(v: &PeriodicPotential, profiles: &[GapProfile]) -> HamiltonianBounds {
    let tau_plus = profiles.iter().flat_map(|p| &p.nodes).map(|n| n.tau_max).fold(1.0, f64::max);
    let tau_bullet = (tau_plus / 2.0).max(1.0);
    let norm = v.norm();
    let c1 = norm / (3.0 * PI);
    let c2 = (2.0 * tau_bullet.powi(4)).powf(1.0 / 6.0) / (3.0 * PI);
    let term = |g: &Gap, e: f64| g.width().powf(e) * (g.lam_plus.abs() + g.lam_minus.abs()).powi(2);
    // Empty gaps contribute zero but still count as shells for the tail.
    let gaps: Vec<&Gap> = profiles.iter().map(|p| &p.gap).collect();
    let s1: Vec<(i64, f64)> = gaps.iter().map(|g| (g.n, c1 * term(g, 1.0))).collect();
    let s2: Vec<(i64, f64)> = gaps.iter().map(|g| (g.n, c2 * term(g, 7.0 / 6.0))).collect();
    HamiltonianBounds {
        h2: v.motion_constants().h2,
        rhs_h1: s1.iter().map(|s| s.1).sum(),
        rhs_h2: s2.iter().map(|s| s.1).sum(),
        tail_h1: tail_estimate(&shells(&s1)),
        tail_h2: tail_estimate(&shells(&s2)),
        tau_plus,
        tau_bullet,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectra::{assemble_gaps, locate_branch_points, SpectraOptions};

    fn single(a: f64) -> PeriodicPotential {
        PeriodicPotential::from_modes(&[(1, c(a, 0.0), c(0.0, 0.0))]).unwrap()
    }

    #[test]
    fn free_branches_are_lambda() {
        let v = PeriodicPotential::zero();
        let cfg = QmConfig::default();
        for lam in [c(0.0, 3.0), c(1.7, 2.5), c(-4.0, 30.0)] {
            for k in k_branches(&v, lam, &cfg).unwrap() {
                assert!((k - lam).norm() < 1e-10, "{k} {lam}");
            }
        }
        let m = moments_asymptotic_fit(&v, &cfg).unwrap();
        assert!(m.q.iter().all(|q| q.abs() < 1e-8), "{:?}", m.q);
    }

    #[test]
    fn branches_follow_beta_asymptotics() {
        let v = PeriodicPotential::from_modes(&[(1, c(0.3, 0.0), c(0.0, 0.1)), (-2, c(0.0, 0.0), c(0.2, 0.0))]).unwrap();
        let b = v.beta_spectrum();
        let cfg = QmConfig::default();
        let lam = c(0.0, 60.0);
        let k = k_branches(&v, lam, &cfg).unwrap();
        for (kj, bj) in k.iter().zip([b.beta1, b.beta2, b.beta3]) {
            let pred = lam - bj / (lam * 2.0);
            assert!((kj - pred).norm() < 0.2 / lam.norm(), "{kj} {pred}");
        }
    }

    #[test]
    fn below_anchor_is_rejected() {
        let v = single(0.2);
        assert!(k_branches(&v, c(0.0, 1.0), &QmConfig::default()).is_err());
        assert!(QmConfig::new(0.5, default_fit_heights()).is_err());
        assert!(QmConfig::new(2.0, vec![20.0, 30.0, 40.0]).is_err());
    }

    #[test]
    fn gap_nodes_have_reciprocal_pair() {
        let v = single(0.15);
        let opts = SpectraOptions::default();
        let pts = locate_branch_points(&v, &[1], &opts).unwrap();
        let gaps = assemble_gaps(&pts);
        let profiles = gap_profiles(&v, &gaps, 8).unwrap();
        let live: Vec<&GapProfile> = profiles.iter().filter(|p| !p.nodes.is_empty()).collect();
        assert!(!live.is_empty());
        let inv = gap_invariants(&v, &profiles);
        assert!(inv.holds(1e-7, 1e-6), "{inv:?}");
        let db = gap_discriminant_bounds(&profiles);
        assert!(db.max_relative < 1e-6 && db.lower_violations == 0 && db.upper_violations == 0, "{db:?}");
    }

    #[test]
    fn tail_of_power_law() {
        let s: Vec<(u64, f64)> = (1..=20).map(|n| (n, (n as f64).powi(-3))).collect();
        let exact: f64 = (21..200000).map(|n| (n as f64).powi(-3)).sum();
        let est = tail_estimate(&s);
        assert!((est - exact).abs() < 0.2 * exact, "{est} {exact}");
        assert_eq!(tail_estimate(&[]), 0.0);
    }
}
