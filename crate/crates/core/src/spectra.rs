//! Global spectral structure over λ: zeros of `𝔇`, `D±` and `𝔣` disc by
//! disc around `πn`, the Σ₁/Σ₃ labelling of the real line, and gaps.
//!
//! Each disc is first counted by the argument principle. Real zeros are then
//! searched on the diameter of the disc: sign changes of a real-valued
//! function give the simple zeros, and crossings of Krein-typed multiplier
//! phases give zeros of even multiplicity (a search on function values can
//! place those only to the square root of the noise). When the real zeros
//! do not account for the count, the disc falls back to contour location.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::floquet::{
    char_data, d_at, discriminant_centered, f_via_det, krein_signatures, multipliers, CharData,
};
use crate::linalg::{c, C64, I};
use crate::potential::PeriodicPotential;
use crate::roots::{brent, contour_sample, locate_zeros, Circle, ContourOptions, ContourSample, LocateOptions, Root};

/// Relative distance at which two bisection results are the same root.
const SAME_ROOT: f64 = 1e-12;

/// Default disc radius around `πn`.
pub const DISC_RADIUS: f64 = 0.25;

/// `|κ|` below this marks a multiplier as neutral (off the circle or at a
/// collision).
pub(crate) const KREIN_MIN: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectraOptions {
    pub disc_radius: f64,
    pub quad_nodes: usize,
    /// Samples on the real diameter of each disc.
    pub scan_points: usize,
    /// `|Im z|` at or below this counts as real.
    pub real_tol: f64,
    /// Gaps narrower than this, relative to `max(1, |λ|)`, are reported
    /// closed (one double branch point).
    pub min_gap_width: f64,
    /// Relative distance below which located zeros merge into one entry.
    pub merge_tol: f64,
    /// `|𝔇|` at or below this is labelled an endpoint by
    /// [`classify_spectrum`].
    pub endpoint_tol: f64,
    /// `||τ| − 1|` at or below this counts as unimodular.
    pub unimodular_tol: f64,
    pub locate: LocateOptions,
}

impl Default for SpectraOptions {
    fn default() -> Self {
        Self {
            disc_radius: DISC_RADIUS,
            quad_nodes: 64,
            scan_points: 32,
            real_tol: 1e-8,
            min_gap_width: 1e-10,
            merge_tol: 1e-9,
            endpoint_tol: 1e-12,
            unimodular_tol: 1e-6,
            locate: LocateOptions::default(),
        }
    }
}

impl SpectraOptions {
    /// Scale every numerical tolerance by `x` (counts and radii unchanged).
    pub fn with_tol_scale(mut self, x: f64) -> Self {
        self.real_tol *= x;
        self.min_gap_width *= x;
        self.merge_tol *= x;
        self.endpoint_tol *= x;
        self.unimodular_tol *= x;
        self.locate.newton_tol *= x;
        self.locate.cluster_tol *= x;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchKind {
    Real,
    ComplexPair,
    /// Unresolved cluster of three or more.
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchPoint {
    pub location: C64,
    pub n: i64,
    pub j: u8,
    pub kind: BranchKind,
    pub multiplicity: usize,
    /// `|𝔇|` at `location`.
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gap {
    pub n: i64,
    pub j: u8,
    pub lam_minus: f64,
    pub lam_plus: f64,
    /// `max 𝔮` over the gap; zero until the quasimomentum module fills it.
    pub height: f64,
}

impl Gap {
    pub fn is_empty(&self) -> bool {
        self.lam_minus == self.lam_plus
    }

    pub fn width(&self) -> f64 {
        self.lam_plus - self.lam_minus
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Parity {
    Periodic,
    Antiperiodic,
}

impl Parity {
    pub fn of(n: i64) -> Self {
        if n.rem_euclid(2) == 0 {
            Parity::Periodic
        } else {
            Parity::Antiperiodic
        }
    }

    /// The multiplier value `s = ±1` whose crossings are the eigenvalues.
    pub fn sign(self) -> f64 {
        match self {
            Parity::Periodic => 1.0,
            Parity::Antiperiodic => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodicEigenvalue {
    pub value: C64,
    pub parity: Parity,
    pub n: i64,
    pub j: u8,
    pub multiplicity: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FZero {
    pub n: i64,
    pub value: C64,
    pub multiplicity: usize,
}

/// High-energy predictions built from the β-spectrum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsymptoticModel {
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    pub beta_o: f64,
}

impl AsymptoticModel {
    pub fn new(v: &PeriodicPotential) -> Self {
        let b = v.beta_spectrum();
        Self { beta1: b.beta1, beta2: b.beta2, beta3: b.beta3, beta_o: b.beta_o }
    }

    fn beta(&self, m: u8) -> f64 {
        match m {
            1 => self.beta1,
            2 => self.beta2,
            _ => self.beta3,
        }
    }

    /// `k₃ₘ = (β₃ + β_m)/(4λ)`.
    pub fn center(&self, lambda: C64, m: u8) -> C64 {
        c(self.beta3 + self.beta(m), 0.0) / (lambda * 4.0)
    }

    /// `πn + (β₃ + β_j)/(4πn)`.
    pub fn branch_prediction(&self, n: i64, j: u8) -> f64 {
        let pn = PI * n as f64;
        pn + (self.beta3 + self.beta(j)) / (4.0 * pn)
    }

    /// `πn + β₃/(4πn)`.
    pub fn f_zero_prediction(&self, n: i64) -> f64 {
        let pn = PI * n as f64;
        pn + self.beta3 / (4.0 * pn)
    }
}

/// `πn + {−|v̂_n|, 0, |v̂_n|}`, ascending.
pub fn eigenvalue_prediction(v: &PeriodicPotential, n: i64) -> [f64; 3] {
    let [a, b] = v.gap_coefficient(n);
    let w = (a.norm_sqr() + b.norm_sqr()).sqrt();
    let pn = PI * n as f64;
    [pn - w, pn, pn + w]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectrumLabel {
    Sigma1,
    Sigma3,
    Endpoint,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumPoint {
    pub lambda: f64,
    /// `Re 𝔇(λ)`.
    pub d: f64,
    pub label: SpectrumLabel,
    pub unimodular: usize,
    /// The multiplier count agrees with the label (3 on Σ₃, 1 on Σ₁).
    pub consistent: bool,
}

/// Number of zeros of `f` inside `contour`, by the argument principle.
pub fn count_zeros<F: Fn(C64) -> Result<C64>>(f: &F, contour: Circle, quad_nodes: usize) -> Result<usize> {
    crate::roots::count_zeros(f, contour, quad_nodes)
}

fn disc_center(n: i64) -> C64 {
    c(PI * n as f64, 0.0)
}

/// Contour data for the disc around `πn`, nudging the radius when the
/// contour passes too close to a zero and doubling the nodes on a
/// non-integer winding.
pub(crate) fn disc_sample<F: Fn(C64) -> Result<C64>>(f: &F, n: i64, opts: &SpectraOptions) -> Result<(Circle, ContourSample)> {
    let center = disc_center(n);
    let mut last = None;
    for scale in [1.0, 1.04, 0.96, 1.08, 0.92] {
        let circle = Circle { center, radius: opts.disc_radius * scale };
        let mut copts = opts.locate.contour;
        copts.quad_nodes = opts.quad_nodes;
        for _ in 0..3 {
            match contour_sample(f, circle, &copts) {
                Ok(s) => return Ok((circle, s)),
                Err(e @ Error::NonIntegerWinding { .. }) => {
                    last = Some(e);
                    copts.quad_nodes *= 2;
                }
                Err(e @ Error::ContourTooClose { .. }) => {
                    last = Some(e);
                    break;
                }
                Err(e) => return Err(e),
            }
        }
    }
    Err(last.expect("at least one attempt"))
}

fn wrap(x: f64) -> f64 {
    (x + PI).rem_euclid(2.0 * PI) - PI
}

/// Phases of `s·τ` for the `+` multiplier and the two `−` multipliers
/// (ascending). `None` when the signatures are not `(+, −, −)`, i.e. inside
/// a gap or at a collision.
fn typed_phases(cd: &CharData, s: f64) -> Option<(f64, [f64; 2])> {
    let tau = multipliers(cd).tau;
    let kappa = krein_signatures(&cd.psi, &tau);
    let ip = (0..3).max_by(|&a, &b| kappa[a].total_cmp(&kappa[b])).unwrap();
    if kappa[ip] < KREIN_MIN {
        return None;
    }
    let others: Vec<usize> = (0..3).filter(|&i| i != ip).collect();
    if others.iter().any(|&i| kappa[i] > -KREIN_MIN) {
        return None;
    }
    let ph = |t: C64| (t * s).arg();
    let mut m = [ph(tau[others[0]]), ph(tau[others[1]])];
    m.sort_by(f64::total_cmp);
    Some((ph(tau[ip]), m))
}

fn real_cd(v: &PeriodicPotential, x: f64) -> Result<CharData> {
    char_data(v, c(x, 0.0))
}

fn real_d(v: &PeriodicPotential, x: f64) -> Result<f64> {
    Ok(discriminant_centered(&real_cd(v, x)?).re)
}

/// Sign-change brackets of a sampled function with holes (`None`). Phases
/// (`cut = true`) ignore jumps across the `±π` cut.
pub(crate) fn brackets(xs: &[f64], ys: &[Option<f64>], cut: bool) -> Vec<(f64, f64)> {
    let valid: Vec<(f64, f64)> = xs.iter().zip(ys).filter_map(|(x, y)| y.map(|y| (*x, y))).collect();
    valid
        .windows(2)
        .filter(|w| w[0].1.signum() != w[1].1.signum())
        .filter(|w| !cut || (w[0].1.abs() < PI / 2.0 && w[1].1.abs() < PI / 2.0))
        .map(|w| (w[0].0, w[1].0))
        .collect()
}

pub(crate) fn scan_grid(circle: Circle, points: usize) -> Vec<f64> {
    let (lo, hi) = (circle.center.re - circle.radius, circle.center.re + circle.radius);
    let m = points.max(4);
    (0..=m).map(|i| lo + (hi - lo) * i as f64 / m as f64).collect()
}

pub(crate) fn brent_tol(x: f64) -> f64 {
    4.0 * f64::EPSILON * x.abs().max(1.0)
}

/// Real zeros of `𝔇` on the diameter of the disc as `(x, multiplicity)`.
pub fn real_branch_points(
    v: &PeriodicPotential,
    n: i64,
    circle: Circle,
    opts: &SpectraOptions,
) -> Result<Vec<(f64, usize)>> {
    let s = Parity::of(n).sign();
    let xs = scan_grid(circle, opts.scan_points);
    let typed: Vec<Option<(f64, [f64; 2])>> =
        xs.iter().map(|&x| Ok(typed_phases(&real_cd(v, x)?, s))).collect::<Result<_>>()?;
    let mut out = Vec::new();
    for k in 0..2 {
        let ys: Vec<Option<f64>> = typed.iter().map(|t| t.map(|(p, m)| wrap(p - m[k]))).collect();
        for (a, b) in brackets(&xs, &ys, true) {
            let g = |x: f64| -> Result<f64> {
                Ok(typed_phases(&real_cd(v, x)?, s).map_or(0.0, |(p, m)| wrap(p - m[k])))
            };
            let xc = brent(g, a, b, brent_tol(a))?;
            out.extend(resolve_crossing(v, xc, a, b, opts)?.into_iter().map(|(x, m)| (x, m, k)));
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    // The `+` phase meeting both `−` phases at one point means all three
    // multipliers coincide there: every pairwise difference vanishes, so
    // the zero of 𝔇 has multiplicity six.
    let mut merged: Vec<(f64, usize, usize)> = Vec::new();
    for (x, m, k) in out {
        match merged.last_mut() {
            Some((y, mm, kk)) if *kk != k && (x - *y).abs() <= opts.merge_tol * x.abs().max(1.0) => {
                *mm = if *mm == 2 && m == 2 { 6 } else { *mm + m };
            }
            _ => merged.push((x, m, k)),
        }
    }
    Ok(merged.into_iter().map(|(x, m, _)| (x, m)).collect())
}

/// A crossing of the `+` phase with a `−` phase is either a closed gap
/// (double zero at the crossing) or an open gap whose edges are simple
/// zeros, recognisable by `𝔇 < 0` at the crossing.
fn resolve_crossing(v: &PeriodicPotential, xc: f64, a: f64, b: f64, opts: &SpectraOptions) -> Result<Vec<(f64, usize)>> {
    if real_d(v, xc)? >= 0.0 {
        return Ok(vec![(xc, 2)]);
    }
    let scale = xc.abs().max(1.0);
    let edge = |dir: f64, limit: f64| -> Result<Option<f64>> {
        let mut inner = xc;
        let mut h = 1e-12 * scale;
        loop {
            let x = if dir < 0.0 { (xc - h).max(limit) } else { (xc + h).min(limit) };
            if real_d(v, x)? > 0.0 {
                return Ok(Some(brent(|y| real_d(v, y), x.min(inner), x.max(inner), brent_tol(x))?));
            }
            if x == limit {
                return Ok(None);
            }
            inner = x;
            h *= 4.0;
        }
    };
    match (edge(-1.0, a)?, edge(1.0, b)?) {
        (Some(l), Some(r)) if r - l >= opts.min_gap_width * scale => Ok(vec![(l, 1), (r, 1)]),
        (Some(l), Some(r)) => Ok(vec![(0.5 * (l + r), 2)]),
        _ => Ok(vec![(xc, 2)]),
    }
}

/// Assign `j = 1, 2, …` in ascending real part, two zeros (with
/// multiplicity) per label.
fn label_pairs(mut pts: Vec<(C64, usize)>) -> Vec<(C64, usize, u8)> {
    pts.sort_by(|a, b| a.0.re.total_cmp(&b.0.re).then(a.0.im.total_cmp(&b.0.im)));
    let mut acc = 0usize;
    pts.into_iter()
        .map(|(z, m)| {
            let j = (acc / 2 + 1) as u8;
            acc += m;
            (z, m, j)
        })
        .collect()
}

fn classify_root(z: C64, m: usize, real_tol: f64) -> BranchKind {
    if m > 2 {
        BranchKind::Degenerate
    } else if z.im.abs() <= real_tol {
        BranchKind::Real
    } else {
        BranchKind::ComplexPair
    }
}

/// Zeros of `𝔇` in the disc around `πn`.
pub fn branch_points_in_disc(v: &PeriodicPotential, n: i64, opts: &SpectraOptions) -> Result<Vec<BranchPoint>> {
    let f = |z: C64| Ok(discriminant_centered(&char_data(v, z)?));
    let (circle, sample) = disc_sample(&f, n, opts)?;
    if sample.count == 0 {
        return Ok(vec![]);
    }
    let real = real_branch_points(v, n, circle, opts)?;
    let found: usize = real.iter().map(|r| r.1).sum();
    let pts: Vec<(C64, usize)> = if found == sample.count {
        real.into_iter().map(|(x, m)| (c(x, 0.0), m)).collect()
    } else if let Some(z) = tight_cluster(&f, &real, sample.count, opts)? {
        vec![(z, sample.count)]
    } else {
        fallback(&f, circle, opts, n)?
    };
    label_pairs(pts)
        .into_iter()
        .map(|(z, m, j)| {
            let kind = classify_root(z, m, opts.real_tol);
            let z = if kind == BranchKind::Real { c(z.re, 0.0) } else { z };
            Ok(BranchPoint { location: z, n, j, kind, multiplicity: m, residual: f(z)?.norm() })
        })
        .collect()
}

/// When the real crossings sit within a tiny interval but account for only
/// part of the count, check whether a circle around them (well inside the
/// disc) holds all `count` zeros; if so they form one unresolved cluster at
/// the centroid of the crossings.
fn tight_cluster<F: Fn(C64) -> Result<C64>>(
    f: &F,
    real: &[(f64, usize)],
    count: usize,
    opts: &SpectraOptions,
) -> Result<Option<C64>> {
    if real.is_empty() {
        return Ok(None);
    }
    let m: usize = real.iter().map(|r| r.1).sum();
    let x0 = real.iter().map(|r| r.0 * r.1 as f64).sum::<f64>() / m as f64;
    let spread = real.iter().map(|r| (r.0 - x0).abs()).fold(0.0, f64::max);
    let scale = x0.abs().max(1.0);
    if spread > 1e-6 * scale {
        return Ok(None);
    }
    // Grow the circle until it clears the noise floor around a flat
    // high-order zero.
    let mut radius = (10.0 * spread).max(1e-7 * scale);
    // A flat zero of high order is tiny on the small circle but not zero.
    let copts = ContourOptions { degenerate_floor: f64::MIN_POSITIVE, ..opts.locate.contour };
    while radius <= 0.2 * opts.disc_radius {
        let circle = Circle { center: c(x0, 0.0), radius };
        if let Ok(s) = contour_sample(f, circle, &copts) {
            if s.count == count {
                return Ok(Some(c(x0, 0.0)));
            }
        }
        radius *= 4.0;
    }
    Ok(None)
}

/// Contour location, with near-real simple zeros snapped to the axis and
/// re-polished there by bisection when `f` is real on ℝ.
pub(crate) fn fallback<F: Fn(C64) -> Result<C64>>(f: &F, circle: Circle, opts: &SpectraOptions, n: i64) -> Result<Vec<(C64, usize)>> {
    let roots: Vec<Root> = locate_zeros(f, circle, &opts.locate, n)?;
    roots
        .into_iter()
        .map(|r| {
            if r.z.im.abs() > opts.real_tol {
                return Ok((r.z, r.multiplicity));
            }
            let x = r.z.re;
            if r.multiplicity == 1 {
                let h = 1e-7 * x.abs().max(1.0);
                let g = |y: f64| Ok(f(c(y, 0.0))?.re);
                if g(x - h)?.signum() != g(x + h)?.signum() {
                    return Ok((c(brent(g, x - h, x + h, brent_tol(x))?, 0.0), 1));
                }
            }
            Ok((c(x, 0.0), r.multiplicity))
        })
        .collect()
}

/// Zeros of `𝔇` in the discs `|λ − πn| ≤ ϖ`, `n ∈ ns`, in parallel over `n`.
///
/// Refuses `β_o = 0`, where the leading term of `𝔇` vanishes and the
/// four-zeros-per-disc structure is not available.
pub fn locate_branch_points(v: &PeriodicPotential, ns: &[i64], opts: &SpectraOptions) -> Result<Vec<BranchPoint>> {
    let beta_o = v.beta_spectrum().beta_o;
    if !(beta_o > 1e-14 * v.norm_sq().powi(2)) || v.is_zero() {
        return Err(Error::DegenerateFamily { beta_o });
    }
    let per: Vec<Vec<BranchPoint>> = ns.par_iter().map(|&n| branch_points_in_disc(v, n, opts)).collect::<Result<_>>()?;
    Ok(per.into_iter().flatten().collect())
}

/// Label each real λ by the sign of `Re 𝔇`, with an endpoint band, and
/// cross-check against the number of unimodular multipliers.
pub fn classify_spectrum(v: &PeriodicPotential, grid: &[f64], opts: &SpectraOptions) -> Result<Vec<SpectrumPoint>> {
    grid.par_iter()
        .map(|&x| {
            let cd = real_cd(v, x)?;
            let d = discriminant_centered(&cd).re;
            let unimodular = multipliers(&cd).tau.iter().filter(|t| (t.norm() - 1.0).abs() <= opts.unimodular_tol).count();
            let label = if d.abs() <= opts.endpoint_tol {
                SpectrumLabel::Endpoint
            } else if d < 0.0 {
                SpectrumLabel::Sigma1
            } else {
                SpectrumLabel::Sigma3
            };
            let consistent = match label {
                SpectrumLabel::Sigma1 => unimodular == 1,
                SpectrumLabel::Sigma3 => unimodular == 3,
                SpectrumLabel::Endpoint => true,
            };
            Ok(SpectrumPoint { lambda: x, d, label, unimodular, consistent })
        })
        .collect()
}

/// `D_s(λ) = det(ψ(λ) − s)`.
pub fn d_sign(v: &PeriodicPotential, s: f64, lambda: C64) -> Result<C64> {
    Ok(d_at(&char_data(v, lambda)?, c(s, 0.0)))
}

/// Zeros of `D_s`, `s = (−1)^n`, in the disc around `πn`.
pub fn eigenvalues_in_disc(v: &PeriodicPotential, n: i64, opts: &SpectraOptions) -> Result<Vec<PeriodicEigenvalue>> {
    let parity = Parity::of(n);
    let s = parity.sign();
    let pts: Vec<(C64, usize)> = if v.is_zero() {
        vec![(disc_center(n), 3)]
    } else {
        let f = |z: C64| d_sign(v, s, z);
        let (circle, sample) = disc_sample(&f, n, opts)?;
        let real = real_eigenvalues(v, s, circle, opts)?;
        let found: usize = real.iter().map(|r| r.1).sum();
        if found == sample.count {
            real.into_iter().map(|(x, m)| (c(x, 0.0), m)).collect()
        } else {
            fallback(&f, circle, opts, n)?
        }
    };
    let mut pts = pts;
    pts.sort_by(|a, b| a.0.re.total_cmp(&b.0.re));
    let mut j = 1u8;
    Ok(pts
        .into_iter()
        .map(|(z, m)| {
            let e = PeriodicEigenvalue { value: z, parity, n, j, multiplicity: m };
            j += m as u8;
            e
        })
        .collect())
}

/// `R_s(λ) = D_s(λ) e^{−iλ/2} ω` with `ω = i` for `s = 1` and `ω = 1` for
/// `s = −1`; real on ℝ because `conj D_s = −s e^{−iλ} D_s` there.
fn r_sign(cd: &CharData, s: f64) -> f64 {
    let w = if s > 0.0 { I } else { c(1.0, 0.0) };
    (d_at(cd, c(s, 0.0)) * (-I * cd.lambda * 0.5).exp() * w).re
}

/// Real zeros of `D_s` on the diameter as `(x, multiplicity)`.
///
/// Simple zeros come from sign changes of `R_s`. Each typed multiplier
/// phase is also followed through `s`: coinciding crossings give zeros of
/// higher multiplicity, and a crossing that lands where the multipliers are
/// off the circle marks a gap whose edges are zeros (the two-sheeted case).
fn real_eigenvalues(v: &PeriodicPotential, s: f64, circle: Circle, opts: &SpectraOptions) -> Result<Vec<(f64, usize)>> {
    let xs = scan_grid(circle, opts.scan_points);
    let cds: Vec<CharData> = xs.iter().map(|&x| real_cd(v, x)).collect::<Result<_>>()?;
    let r = |x: f64| Ok(r_sign(&real_cd(v, x)?, s));
    let rs: Vec<Option<f64>> = cds.iter().map(|cd| Some(r_sign(cd, s))).collect();
    let r_scale = rs.iter().flatten().fold(0.0f64, |m, y| m.max(y.abs()));
    let mut simple = Vec::new();
    for (a, b) in brackets(&xs, &rs, false) {
        simple.push(brent(r, a, b, brent_tol(a))?);
    }

    let typed: Vec<Option<(f64, [f64; 2])>> = cds.iter().map(|cd| typed_phases(cd, s)).collect();
    let pick = |t: Option<(f64, [f64; 2])>, k: usize| t.map(|(p, m)| if k == 0 { p } else { m[k - 1] });
    let mut hits = Vec::new();
    let mut edges: Vec<(f64, usize)> = Vec::new();
    for k in 0..3 {
        let ys: Vec<Option<f64>> = typed.iter().map(|t| pick(*t, k)).collect();
        for (a, b) in brackets(&xs, &ys, true) {
            let g = |x: f64| -> Result<f64> { Ok(pick(typed_phases(&real_cd(v, x)?, s), k).unwrap_or(0.0)) };
            let x = brent(g, a, b, brent_tol(a))?;
            if typed_phases(&real_cd(v, x)?, s).is_some() {
                hits.push(x);
                continue;
            }
            match sign_edges(&r, x, a, b)? {
                Some((l, rr)) if rr - l >= opts.min_gap_width * x.abs().max(1.0) => {
                    edges.push((l, 1));
                    edges.push((rr, 1));
                }
                Some((l, rr)) => hits.push(0.5 * (l + rr)),
                None if r(x)?.abs() <= 1e-8 * r_scale => hits.push(x),
                None => {}
            }
        }
    }
    hits.sort_by(f64::total_cmp);
    let mut out: Vec<(f64, usize)> = Vec::new();
    for x in hits {
        match out.last_mut() {
            Some((y, m)) if (x - *y).abs() <= opts.merge_tol * x.abs().max(1.0) => *m += 1,
            _ => out.push((x, 1)),
        }
    }
    for e in edges {
        if !out.iter().any(|(y, _)| (e.0 - y).abs() <= SAME_ROOT * y.abs().max(1.0)) {
            out.push(e);
        }
    }
    for x in simple {
        if !out.iter().any(|(y, _)| (x - y).abs() <= SAME_ROOT * y.abs().max(1.0)) {
            out.push((x, 1));
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(out)
}

/// Nearest points on each side of `x` within `[a, b]` where `g` takes the
/// opposite sign to `g(x)`, refined to zeros.
pub(crate) fn sign_edges<G: Fn(f64) -> Result<f64>>(g: &G, x: f64, a: f64, b: f64) -> Result<Option<(f64, f64)>> {
    let g0 = g(x)?;
    if g0 == 0.0 {
        return Ok(None);
    }
    let scale = x.abs().max(1.0);
    let side = |dir: f64, limit: f64| -> Result<Option<f64>> {
        let mut inner = x;
        let mut h = 1e-12 * scale;
        loop {
            let y = if dir < 0.0 { (x - h).max(limit) } else { (x + h).min(limit) };
            if g(y)?.signum() != g0.signum() {
                return Ok(Some(brent(g, y.min(inner), y.max(inner), brent_tol(y))?));
            }
            if y == limit {
                return Ok(None);
            }
            inner = y;
            h *= 4.0;
        }
    };
    Ok(match (side(-1.0, a)?, side(1.0, b)?) {
        (Some(l), Some(r)) => Some((l, r)),
        _ => None,
    })
}

/// Periodic (`n` even) and antiperiodic (`n` odd) eigenvalues in the discs
/// around `πn`, `n ∈ ns`, sorted ascending.
pub fn periodic_eigenvalues(v: &PeriodicPotential, ns: &[i64], opts: &SpectraOptions) -> Result<Vec<PeriodicEigenvalue>> {
    let per: Vec<Vec<PeriodicEigenvalue>> = ns.par_iter().map(|&n| eigenvalues_in_disc(v, n, opts)).collect::<Result<_>>()?;
    let mut out: Vec<PeriodicEigenvalue> = per.into_iter().flatten().collect();
    out.sort_by(|a, b| a.value.re.total_cmp(&b.value.re));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HadamardRecovery {
    pub t: C64,
    pub ttil: C64,
    pub d_plus: C64,
    pub d_minus: C64,
    /// Truncation estimate for `t` and `ttil`.
    pub est_error: f64,
}

/// `Σ_{n > m, n ≡ parity} 2/(πn)²` (tail of the symmetric product).
fn tail_sum(m: i64, parity: Parity) -> f64 {
    let start = m + 1;
    let mut s = 0.0;
    let mut n = start;
    while n < start + 20000 {
        if Parity::of(n) == parity {
            s += 2.0 / (PI * n as f64).powi(2);
        }
        n += 1;
    }
    // Integral remainder for the terms not summed.
    s + 1.0 / (PI * PI * n as f64)
}

/// Rebuild `D±(λ)` from their zeros by the truncated symmetric product
/// `D±(0) e^{iλ/2} Π (1 − λ/z)`, then `T = ½(D₋ + D₊) − e^{iλ}` and
/// `W̃T = e^{−iλ}(½(D₋ − D₊) − 1)`.
///
/// `eigs` must hold every disc `|n| ≤ ⌊radius_cap/π⌋` with three zeros each.
/// The estimate assumes unperturbed tails, three zeros per disc, with a
/// safety factor of 2.
pub fn hadamard_recover(
    eigs: &[PeriodicEigenvalue],
    d0_plus: C64,
    d0_minus: C64,
    lambda: C64,
    radius_cap: f64,
) -> Result<HadamardRecovery> {
    if radius_cap < 4.0 * lambda.norm() {
        return Err(Error::InsufficientCoverage { radius_cap, needed: 4.0 * lambda.norm() });
    }
    let m = (radius_cap / PI).floor() as i64;
    for n in -m..=m {
        let k: usize = eigs.iter().filter(|e| e.n == n).map(|e| e.multiplicity).sum();
        if k != 3 {
            return Err(Error::InsufficientCoverage { radius_cap, needed: radius_cap });
        }
    }
    let product = |parity: Parity, d0: C64| -> Result<C64> {
        if d0.norm() == 0.0 {
            return Err(Error::ZeroAtOrigin { parity: parity.sign() as i32 });
        }
        let mut p = d0 * (I * lambda * 0.5).exp();
        for e in eigs.iter().filter(|e| e.parity == parity && e.n.abs() <= m) {
            p *= (c(1.0, 0.0) - lambda / e.value).powi(e.multiplicity as i32);
        }
        Ok(p)
    };
    let d_plus = product(Parity::Periodic, d0_plus)?;
    let d_minus = product(Parity::Antiperiodic, d0_minus)?;
    let e = (I * lambda).exp();
    let t = (d_minus + d_plus) * 0.5 - e;
    let ttil = ((d_minus - d_plus) * 0.5 - 1.0) / e;
    let l2 = lambda.norm_sqr();
    let tp = 3.0 * l2 * tail_sum(m, Parity::Periodic);
    let tm = 3.0 * l2 * tail_sum(m, Parity::Antiperiodic);
    let est = 2.0 * 0.5 * (d_plus.norm() * tp + d_minus.norm() * tm) * e.norm().max(1.0 / e.norm());
    Ok(HadamardRecovery { t, ttil, d_plus, d_minus, est_error: est })
}

/// `D₊(0) = 2i Im T(0)` and `D₋(0) = 2(1 + Re T(0))` from a direct trace.
pub fn d_at_origin(v: &PeriodicPotential) -> Result<(C64, C64)> {
    let t = char_data(v, c(0.0, 0.0))?.t;
    Ok((c(0.0, 2.0 * t.im), c(2.0 * (1.0 + t.re), 0.0)))
}

/// Zeros of `𝔣` in the discs around `πn`.
///
/// Requires `β₁β₂ > 0`: when `β₁ = 0` (the family `v = u·e`) `𝔣` vanishes
/// identically.
pub fn f_zeros(v: &PeriodicPotential, ns: &[i64], opts: &SpectraOptions) -> Result<Vec<FZero>> {
    let b = v.beta_spectrum();
    if !(b.beta1 * b.beta2 > 1e-14 * v.norm_sq().powi(2)) {
        return Err(Error::Refused(format!(
            "beta1 * beta2 = {:e}: f has no nondegenerate leading term (f = 0 when v = u e)",
            b.beta1 * b.beta2
        )));
    }
    let per: Vec<Vec<FZero>> = ns
        .par_iter()
        .map(|&n| {
            let f = |z: C64| Ok(f_via_det(&char_data(v, z)?));
            let (circle, sample) = disc_sample(&f, n, opts)?;
            let xs = scan_grid(circle, opts.scan_points);
            let g = |x: f64| Ok(f(c(x, 0.0))?.re);
            let ys: Vec<Option<f64>> = xs.iter().map(|&x| g(x).map(Some)).collect::<Result<_>>()?;
            let mut real = Vec::new();
            for (a, b) in brackets(&xs, &ys, false) {
                real.push((c(brent(g, a, b, brent_tol(a))?, 0.0), 1usize));
            }
            let pts = if real.len() == sample.count { real } else { fallback(&f, circle, opts, n)? };
            Ok(pts.into_iter().map(|(z, m)| FZero { n, value: z, multiplicity: m }).collect())
        })
        .collect::<Result<_>>()?;
    Ok(per.into_iter().flatten().collect())
}

/// Pair real branch points into gaps: a double point is an empty gap, and
/// consecutive simple points in the same disc bound a nonempty one.
pub fn assemble_gaps(points: &[BranchPoint]) -> Vec<Gap> {
    let mut real: Vec<&BranchPoint> = points.iter().filter(|p| p.kind == BranchKind::Real).collect();
    real.sort_by(|a, b| a.location.re.total_cmp(&b.location.re));
    let mut gaps = Vec::new();
    let mut i = 0;
    while i < real.len() {
        let p = real[i];
        let x = p.location.re;
        if p.multiplicity == 2 {
            gaps.push(Gap { n: p.n, j: p.j, lam_minus: x, lam_plus: x, height: 0.0 });
            i += 1;
        } else if i + 1 < real.len() && real[i + 1].multiplicity == 1 && real[i + 1].n == p.n {
            gaps.push(Gap { n: p.n, j: p.j, lam_minus: x, lam_plus: real[i + 1].location.re, height: 0.0 });
            i += 2;
        } else {
            i += 1;
        }
    }
    gaps
}

/// Sign audit of `𝔇` around the gaps: the largest `𝔇` on `nodes` interior
/// points of each nonempty gap (should be negative) and the smallest `𝔇`
/// on the sampled band between consecutive gaps (should be nonnegative).
#[derive(Debug, Clone, PartialEq)]
pub struct GapSignAudit {
    pub max_inside: f64,
    pub min_between: f64,
}

pub fn audit_gap_signs(v: &PeriodicPotential, gaps: &[Gap], nodes: usize) -> Result<GapSignAudit> {
    let mut max_inside = f64::NEG_INFINITY;
    for g in gaps.iter().filter(|g| !g.is_empty()) {
        for i in 1..=nodes {
            let x = g.lam_minus + g.width() * i as f64 / (nodes + 1) as f64;
            max_inside = max_inside.max(real_d(v, x)?);
        }
    }
    let mut min_between = f64::INFINITY;
    for w in gaps.windows(2) {
        let (a, b) = (w[0].lam_plus, w[1].lam_minus);
        if b <= a {
            continue;
        }
        for i in 1..=nodes {
            let x = a + (b - a) * i as f64 / (nodes + 1) as f64;
            min_between = min_between.min(real_d(v, x)?);
        }
    }
    Ok(GapSignAudit { max_inside, min_between })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> PeriodicPotential {
        PeriodicPotential::from_modes(&[(1, c(0.4, 0.0), c(0.0, 0.0)), (0, c(0.0, 0.0), c(0.25, 0.0))]).unwrap()
    }

    #[test]
    fn sine_count() {
        let circle = Circle { center: c(PI * 3.0, 0.0), radius: 0.25 };
        assert_eq!(count_zeros(&|z: C64| Ok(z.sin()), circle, 64).unwrap(), 1);
    }

    #[test]
    fn zero_potential_discriminant_is_degenerate() {
        let v = PeriodicPotential::zero();
        let f = |z: C64| Ok(discriminant_centered(&char_data(&v, z)?));
        let circle = Circle { center: c(PI * 5.0, 0.0), radius: 0.25 };
        assert!(matches!(count_zeros(&f, circle, 64), Err(Error::DegenerateFunction { .. })));
        assert!(matches!(locate_branch_points(&v, &[5], &Default::default()), Err(Error::DegenerateFamily { .. })));
    }

    #[test]
    fn equal_norm_orthogonal_components_are_refused() {
        let v = PeriodicPotential::from_modes(&[(1, c(0.3, 0.0), c(0.0, 0.0)), (0, c(0.0, 0.0), c(0.3, 0.0))]).unwrap();
        assert!(matches!(locate_branch_points(&v, &[5], &Default::default()), Err(Error::DegenerateFamily { .. })));
    }

    #[test]
    fn four_real_branch_points_per_disc() {
        let v = small();
        let bps = locate_branch_points(&v, &[6, -7], &Default::default()).unwrap();
        for n in [6, -7] {
            let here: Vec<_> = bps.iter().filter(|b| b.n == n).collect();
            assert_eq!(here.iter().map(|b| b.multiplicity).sum::<usize>(), 4);
            assert!(here.iter().all(|b| b.kind == BranchKind::Real));
        }
    }

    #[test]
    fn free_eigenvalues_are_triple() {
        let e = periodic_eigenvalues(&PeriodicPotential::zero(), &[2, 3], &Default::default()).unwrap();
        assert_eq!(e.len(), 2);
        assert_eq!(e[0].multiplicity, 3);
        assert_eq!(e[0].parity, Parity::Periodic);
        assert_eq!(e[1].parity, Parity::Antiperiodic);
    }

    #[test]
    fn eigenvalues_are_zeros_of_d() {
        let v = small();
        let e = periodic_eigenvalues(&v, &[4, 5], &Default::default()).unwrap();
        assert_eq!(e.iter().map(|x| x.multiplicity).sum::<usize>(), 6);
        for x in &e {
            let d = d_sign(&v, x.parity.sign(), x.value).unwrap();
            assert!(d.norm() < 1e-8, "{:?} {}", x, d);
        }
    }

    #[test]
    fn classify_free_line_is_sigma3() {
        let pts = classify_spectrum(&PeriodicPotential::zero(), &[0.3, 1.7, 4.0], &Default::default()).unwrap();
        assert!(pts.iter().all(|p| p.unimodular == 3));
    }

    #[test]
    fn gaps_from_points() {
        let mk = |x: f64, m: usize, j: u8| BranchPoint {
            location: c(x, 0.0),
            n: 5,
            j,
            kind: BranchKind::Real,
            multiplicity: m,
            residual: 0.0,
        };
        let g = assemble_gaps(&[mk(1.0, 1, 1), mk(1.1, 1, 1), mk(2.0, 2, 2)]);
        assert_eq!(g.len(), 2);
        assert_eq!((g[0].lam_minus, g[0].lam_plus), (1.0, 1.1));
        assert!(g[1].is_empty());
    }

    #[test]
    fn hadamard_needs_coverage() {
        let r = hadamard_recover(&[], c(1.0, 0.0), c(1.0, 0.0), c(3.0, 0.0), 10.0);
        assert!(matches!(r, Err(Error::InsufficientCoverage { .. })));
    }
}
