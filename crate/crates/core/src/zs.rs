//! The scalar Zakharov–Shabat problem `iJ_zs y' + V_zs y = λy` with
//! `J_zs = diag(1, −1)`, `V_zs = [[0, ū], [u, 0]]`, integrated on its own.
//!
//! For `v = u·e` with a constant unit vector `e` the 3x3 operator splits
//! into this one plus the free operator `i d/dx`, so the 2x2 solver is an
//! oracle for the vector pipeline: one multiplier is `e^{iλ}`, the Lyapunov
//! triple is `{cos λ, Δ_zs, Δ_zs}`, `𝔣` and `𝔇_Δ` vanish, and
//! `𝔇 = ¼(1 − Δ_zs²)(Δ_zs − cos λ)²`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::floquet::{char_data, delta_discriminant, discriminant_centered, f_function};
use crate::linalg::{c, eigenvalues, is_finite, match3, max_abs, Mat2, C64, I};
use crate::magnus;
use crate::potential::{PeriodicPotential, DEFAULT_K_MAX};
use crate::roots::{brent, Circle};
use crate::spectra::{
    brackets, brent_tol, disc_sample, fallback, scan_grid, sign_edges, Parity, SpectraOptions, KREIN_MIN,
};

/// Relative distance at which two bisection results are the same root.
const SAME_ROOT: f64 = 1e-12;

/// Allowed deviation of `|e|` from 1.
pub const UNIT_TOL: f64 = 1e-12;

/// Scalar potential `u(x) = Σ û_k e^{2πikx}` together with the direction
/// `e` of the embedding `v = u·e`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZsPotential {
    coeffs: BTreeMap<i64, C64>,
    e: [C64; 2],
    k_max: u32,
}

impl ZsPotential {
    pub fn new<It>(k_max: u32, u: It, e: [C64; 2]) -> Result<Self>
    where
        It: IntoIterator<Item = (i64, C64)>,
    {
        let len = (e[0].norm_sqr() + e[1].norm_sqr()).sqrt();
        if !len.is_finite() || (len - 1.0).abs() > UNIT_TOL {
            return Err(Error::InvalidPotential(format!("|e| = {len}, expected 1")));
        }
        let mut coeffs = BTreeMap::new();
        for (k, a) in u {
            if k.unsigned_abs() > k_max as u64 {
                return Err(Error::InvalidPotential(format!("frequency {k} exceeds K_max = {k_max}")));
            }
            if !(a.re.is_finite() && a.im.is_finite()) {
                return Err(Error::InvalidPotential(format!("non-finite coefficient at k = {k}")));
            }
            *coeffs.entry(k).or_insert(c(0.0, 0.0)) += a;
        }
        coeffs.retain(|_, a| a.norm() > 0.0);
        Ok(Self { coeffs, e, k_max })
    }

    /// [`ZsPotential::new`] with the default `K_max` (or the largest
    /// frequency, if larger).
    pub fn from_modes(u: &[(i64, C64)], e: [C64; 2]) -> Result<Self> {
        let kmax = u.iter().map(|m| m.0.unsigned_abs() as u32).max().unwrap_or(0);
        Self::new(kmax.max(DEFAULT_K_MAX), u.iter().copied(), e)
    }

    /// Same `u` along another unit vector.
    pub fn with_direction(&self, e: [C64; 2]) -> Result<Self> {
        Self::new(self.k_max, self.coeffs.iter().map(|(&k, &a)| (k, a)), e)
    }

    pub fn e(&self) -> [C64; 2] {
        self.e
    }

    pub fn k_max(&self) -> u32 {
        self.k_max
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn coeff(&self, k: i64) -> C64 {
        self.coeffs.get(&k).copied().unwrap_or(c(0.0, 0.0))
    }

    pub fn modes(&self) -> impl Iterator<Item = (i64, C64)> + '_ {
        self.coeffs.iter().map(|(&k, &a)| (k, a))
    }

    pub fn eval(&self, x: f64) -> C64 {
        self.coeffs.iter().map(|(&k, &a)| a * (I * (2.0 * PI * k as f64 * x)).exp()).sum()
    }

    /// `‖u‖ = (∫₀¹ |u|²)^{1/2}`.
    pub fn norm(&self) -> f64 {
        self.coeffs.values().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// The vector potential `v = u·e`.
    pub fn to_vector(&self) -> Result<PeriodicPotential> {
        let u: Vec<(i64, C64)> = self.modes().collect();
        PeriodicPotential::from_scalar(self.k_max, &u, self.e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZsMonodromy {
    pub lambda: C64,
    pub psi: Mat2,
    /// Richardson estimate of the max-entry error of `psi`.
    pub est_error: f64,
    pub steps: usize,
}

/// `A(x) = −iJ_zs(λ − V_zs(x))`; trace-free, so `det y_zs ≡ 1`.
pub fn zs_coefficient(u: &ZsPotential, lambda: C64, x: f64) -> Mat2 {
    let ux = u.eval(x);
    Mat2::new(-I * lambda, I * ux.conj(), -I * ux, I * lambda)
}

fn zs_steps(u: &ZsPotential, lambda: C64) -> usize {
    64usize.max(8 * u.k_max as usize).max((8.0 * lambda.norm()).ceil() as usize)
}

fn zs_propagate(u: &ZsPotential, lambda: C64, steps: usize) -> Result<Mat2> {
    let psi = magnus::propagate(|x| zs_coefficient(u, lambda, x), steps);
    if is_finite(&psi) {
        Ok(psi)
    } else {
        Err(Error::NonFinite { lambda, steps })
    }
}

/// `y_zs(1, λ)` on `2·steps` cells, with the error taken against `steps`
/// cells, `steps = max(64, 8 K_max, ⌈8|λ|⌉)`.
pub fn zs_monodromy(u: &ZsPotential, lambda: C64) -> Result<ZsMonodromy> {
    let steps = zs_steps(u, lambda);
    if u.is_zero() {
        let e = (I * lambda).exp();
        let psi = Mat2::new(e.inv(), c(0.0, 0.0), c(0.0, 0.0), e);
        return Ok(ZsMonodromy { lambda, psi, est_error: 0.0, steps });
    }
    let coarse = zs_propagate(u, lambda, steps)?;
    let fine = zs_propagate(u, lambda, 2 * steps)?;
    let denom = (1u64 << magnus::ORDER) as f64 - 1.0;
    let rounding = 2.0 * steps as f64 * f64::EPSILON * max_abs(&fine);
    Ok(ZsMonodromy {
        lambda,
        psi: fine,
        est_error: (max_abs(&(fine - coarse)) / denom).max(rounding),
        steps: 2 * steps,
    })
}

/// `Δ_zs(λ) = ½ Tr y_zs(1, λ)`.
pub fn delta_zs(u: &ZsPotential, lambda: C64) -> Result<C64> {
    let m = zs_monodromy(u, lambda)?;
    Ok(m.psi.trace() * 0.5)
}

/// Residuals of the reduction at one real `λ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReductionRow {
    pub lambda: f64,
    pub delta_zs: f64,
    /// `min_j |τ_j − e^{iλ}|`.
    pub multiplier: f64,
    /// Lyapunov triple against `{cos λ, Δ_zs, Δ_zs}` (max after matching).
    pub lyapunov: f64,
    /// `max(|𝔣|, |𝔇_Δ|)`.
    pub vanishing: f64,
    /// `|𝔇 − ¼(1 − Δ_zs²)(Δ_zs − cos λ)²|`.
    pub discriminant: f64,
    /// Sum of the two integrators' error estimates.
    pub integrator_error: f64,
}

impl ReductionRow {
    pub fn max_residual(&self) -> f64 {
        self.multiplier.max(self.lyapunov).max(self.vanishing).max(self.discriminant)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReductionReport {
    pub rows: Vec<ReductionRow>,
    /// Column maxima of the four residuals, in the order of [`ReductionRow`].
    pub max: [f64; 4],
    pub max_integrator_error: f64,
}

/// Runs the 3x3 pipeline on `v = u·e` and the 2x2 solver on `u` over real
/// `grid` points and compares them.
pub fn reduction_check(zsv: &ZsPotential, grid: &[f64]) -> Result<ReductionReport> {
    let v = zsv.to_vector()?;
    let rows: Vec<ReductionRow> = grid.par_iter().map(|&x| reduction_row(zsv, &v, x)).collect::<Result<_>>()?;
    let mut max = [0.0f64; 4];
    let mut max_err = 0.0f64;
    for r in &rows {
        for (m, y) in max.iter_mut().zip([r.multiplier, r.lyapunov, r.vanishing, r.discriminant]) {
            *m = m.max(y);
        }
        max_err = max_err.max(r.integrator_error);
    }
    Ok(ReductionReport { rows, max, max_integrator_error: max_err })
}

fn reduction_row(zsv: &ZsPotential, v: &PeriodicPotential, x: f64) -> Result<ReductionRow> {
    let lambda = c(x, 0.0);
    let cd = char_data(v, lambda)?;
    let zm = zs_monodromy(zsv, lambda)?;
    let dz = zm.psi.trace() * 0.5;
    let e = (I * lambda).exp();
    let tau = eigenvalues(&cd.psi);
    let multiplier = tau.iter().map(|t| (t - e).norm()).fold(f64::INFINITY, f64::min);
    let lyap = tau.map(|t| (t + t.inv()) * 0.5);
    let expect = [c(x.cos(), 0.0), dz, dz];
    let lyapunov = match3(&expect, &lyap).iter().zip(&expect).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    let vanishing = f_function(&cd).norm().max(delta_discriminant(&cd).norm());
    let one = c(1.0, 0.0);
    let model = (one - dz * dz) * (dz - x.cos()) * (dz - x.cos()) * 0.25;
    let discriminant = (discriminant_centered(&cd) - model).norm();
    Ok(ReductionRow {
        lambda: x,
        delta_zs: dz.re,
        multiplier,
        lyapunov,
        vanishing,
        discriminant,
        integrator_error: cd.est_error + zm.est_error,
    })
}

/// A 2-periodic ZS eigenvalue (periodic for even `n`, antiperiodic for odd).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZsEigenvalue {
    pub value: C64,
    pub n: i64,
    pub multiplicity: usize,
}

/// `Δ_zs² − 1 = ((a − d)/2)² + bc` for `ψ = [[a, b], [c, d]]` with
/// `det ψ = 1`. Free of the cancellation in `Δ² − 1` near `Δ = ±1`, so gaps
/// far narrower than `√ε` stay visible.
pub fn delta_sq_minus_one(psi: &Mat2) -> C64 {
    let hd = (psi[(0, 0)] - psi[(1, 1)]) * 0.5;
    hd * hd + psi[(0, 1)] * psi[(1, 0)]
}

/// Phase of `s·τ` for the multiplier with positive `J_zs`-signature, when
/// the multipliers are on the circle and distinct.
pub fn typed_phase(psi: &Mat2, s: f64) -> Option<f64> {
    let half = psi.trace() * 0.5;
    let root = delta_sq_minus_one(psi).sqrt();
    [half + root, half - root].into_iter().find_map(|t| {
        let a = (psi[(0, 1)], t - psi[(0, 0)]);
        let b = (t - psi[(1, 1)], psi[(1, 0)]);
        let (x, y) = if a.0.norm_sqr() + a.1.norm_sqr() >= b.0.norm_sqr() + b.1.norm_sqr() { a } else { b };
        let n2 = x.norm_sqr() + y.norm_sqr();
        let kappa = (x.norm_sqr() - y.norm_sqr()) / n2;
        (n2 > 0.0 && kappa >= KREIN_MIN).then(|| (t * s).arg())
    })
}

/// Real zeros of `1 − Δ_zs²` on the diameter of the disc as
/// `(x, multiplicity)`: simple zeros from sign changes, double zeros where
/// the typed multiplier passes through `s = (−1)ⁿ` inside a band.
fn real_zs_eigenvalues(u: &ZsPotential, n: i64, circle: Circle, opts: &SpectraOptions) -> Result<Vec<(f64, usize)>> {
    let s = Parity::of(n).sign();
    let xs = scan_grid(circle, opts.scan_points);
    let mons: Vec<Mat2> = xs.iter().map(|&x| Ok(zs_monodromy(u, c(x, 0.0))?.psi)).collect::<Result<_>>()?;
    let g = |x: f64| -> Result<f64> { Ok(-delta_sq_minus_one(&zs_monodromy(u, c(x, 0.0))?.psi).re) };
    let gs: Vec<Option<f64>> = mons.iter().map(|m| Some(-delta_sq_minus_one(m).re)).collect();
    let mut simple = Vec::new();
    for (a, b) in brackets(&xs, &gs, false) {
        simple.push(brent(g, a, b, brent_tol(a))?);
    }
    let phase = |x: f64| -> Result<Option<f64>> { Ok(typed_phase(&zs_monodromy(u, c(x, 0.0))?.psi, s)) };
    let ps: Vec<Option<f64>> = mons.iter().map(|m| typed_phase(m, s)).collect();
    let mut out: Vec<(f64, usize)> = Vec::new();
    let mut edges = Vec::new();
    for (a, b) in brackets(&xs, &ps, true) {
        let x = brent(|y| Ok(phase(y)?.unwrap_or(0.0)), a, b, brent_tol(a))?;
        if phase(x)?.is_some() {
            out.push((x, 2));
            continue;
        }
        match sign_edges(&g, x, a, b)? {
            Some((l, r)) if r - l >= opts.min_gap_width * x.abs().max(1.0) => edges.extend([l, r]),
            Some((l, r)) => out.push((0.5 * (l + r), 2)),
            None => {}
        }
    }
    for x in edges.into_iter().chain(simple) {
        if !out.iter().any(|(y, _)| (x - y).abs() <= SAME_ROOT * y.abs().max(1.0)) {
            out.push((x, 1));
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(out)
}

/// Zeros of `Δ_zs² − 1` in the disc `|λ − πn| ≤ ϖ`.
pub fn zs_eigenvalues_in_disc(u: &ZsPotential, n: i64, opts: &SpectraOptions) -> Result<Vec<ZsEigenvalue>> {
    if u.is_zero() {
        return Ok(vec![ZsEigenvalue { value: c(PI * n as f64, 0.0), n, multiplicity: 2 }]);
    }
    let f = |z: C64| Ok(delta_sq_minus_one(&zs_monodromy(u, z)?.psi));
    let (circle, sample) = disc_sample(&f, n, opts)?;
    if sample.count == 0 {
        return Ok(vec![]);
    }
    let real = real_zs_eigenvalues(u, n, circle, opts)?;
    let found: usize = real.iter().map(|r| r.1).sum();
    let pts: Vec<(C64, usize)> = if found == sample.count {
        real.into_iter().map(|(x, m)| (c(x, 0.0), m)).collect()
    } else {
        fallback(&f, circle, opts, n)?
    };
    let found: usize = pts.iter().map(|p| p.1).sum();
    if found != sample.count {
        return Err(Error::CountMismatch { n, expected: sample.count, found });
    }
    Ok(pts.into_iter().map(|(value, multiplicity)| ZsEigenvalue { value, n, multiplicity }).collect())
}

/// [`zs_eigenvalues_in_disc`] over `ns` in parallel, sorted by real part.
pub fn zs_eigenvalues(u: &ZsPotential, ns: &[i64], opts: &SpectraOptions) -> Result<Vec<ZsEigenvalue>> {
    let per: Vec<Vec<ZsEigenvalue>> = ns.par_iter().map(|&n| zs_eigenvalues_in_disc(u, n, opts)).collect::<Result<_>>()?;
    let mut out: Vec<ZsEigenvalue> = per.into_iter().flatten().collect();
    out.sort_by(|a, b| a.value.re.total_cmp(&b.value.re));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZsGap {
    pub n: i64,
    pub lam_minus: f64,
    pub lam_plus: f64,
    /// `|v̂(πn)|`, the first-order half-width.
    pub predicted: f64,
    /// `max_± |λ_n^± − πn ∓ |v̂(πn)||`.
    pub asymptotic_residual: f64,
    /// `max_± |Δ_zs(λ_n^±) − (−1)ⁿ|`.
    pub delta_residual: f64,
}

impl ZsGap {
    pub fn width(&self) -> f64 {
        self.lam_plus - self.lam_minus
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapEstimate {
    pub gaps: Vec<ZsGap>,
    pub norm_u: f64,
    /// `g` over the located gaps.
    pub g: f64,
    /// First-order size of the gaps outside the range,
    /// `(Σ_{n ∉ range} 4|v̂(πn)|²)^{1/2}`.
    pub tail: f64,
    /// `‖u‖ − g/√2` with the truncated `g` (truncation only shrinks `g`,
    /// so a negative value is a genuine violation).
    pub lower_slack: f64,
    /// `2ĝ(1 + ĝ) − ‖u‖` with `ĝ = (g² + tail²)^{1/2}`.
    pub upper_slack: f64,
}

impl GapEstimate {
    pub fn lower_holds(&self) -> bool {
        self.lower_slack >= 0.0
    }

    pub fn upper_holds(&self) -> bool {
        self.upper_slack >= 0.0
    }
}

/// Locates the 2-periodic eigenvalues in the discs `ns`, forms
/// `g = (Σ|γ_n|²)^{1/2}` and evaluates `g/√2 ≤ ‖u‖ ≤ 2g(1 + g)` and the
/// first-order positions `λ_n^± ≈ πn ± |v̂(πn)|`.
pub fn zs_gap_estimate(u: &ZsPotential, ns: &[i64], opts: &SpectraOptions) -> Result<GapEstimate> {
    let v = u.to_vector()?;
    let width = |n: i64| {
        let [a, b] = v.gap_coefficient(n);
        (a.norm_sqr() + b.norm_sqr()).sqrt()
    };
    let gaps: Vec<ZsGap> = ns
        .par_iter()
        .map(|&n| {
            let eig = zs_eigenvalues_in_disc(u, n, opts)?;
            let found: usize = eig.iter().map(|e| e.multiplicity).sum();
            if found != 2 {
                return Err(Error::CountMismatch { n, expected: 2, found });
            }
            let lam_minus = eig.iter().map(|e| e.value.re).fold(f64::INFINITY, f64::min);
            let lam_plus = eig.iter().map(|e| e.value.re).fold(f64::NEG_INFINITY, f64::max);
            let center = PI * n as f64;
            let predicted = width(n);
            let asymptotic_residual =
                (lam_minus - center + predicted).abs().max((lam_plus - center - predicted).abs());
            let s = Parity::of(n).sign();
            let delta_residual = [lam_minus, lam_plus]
                .iter()
                .map(|&x| Ok((delta_zs(u, c(x, 0.0))? - s).norm()))
                .collect::<Result<Vec<f64>>>()?
                .into_iter()
                .fold(0.0, f64::max);
            Ok(ZsGap { n, lam_minus, lam_plus, predicted, asymptotic_residual, delta_residual })
        })
        .collect::<Result<_>>()?;
    let g = gaps.iter().map(|gp| gp.width().powi(2)).sum::<f64>().sqrt();
    let bw = u.modes().map(|(k, _)| k.abs()).max().unwrap_or(0);
    let tail = (-bw..=bw)
        .filter(|n| !ns.contains(n))
        .map(|n| 4.0 * width(n).powi(2))
        .sum::<f64>()
        .sqrt();
    let norm_u = u.norm();
    let g_hi = g.hypot(tail);
    Ok(GapEstimate {
        gaps,
        norm_u,
        g,
        tail,
        lower_slack: norm_u - g / 2f64.sqrt(),
        upper_slack: 2.0 * g_hi * (1.0 + g_hi) - norm_u,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cosine(a: f64, e: [C64; 2]) -> ZsPotential {
        ZsPotential::from_modes(&[(1, c(a / 2.0, 0.0)), (-1, c(a / 2.0, 0.0))], e).unwrap()
    }

    const E1: [C64; 2] = [C64 { re: 1.0, im: 0.0 }, C64 { re: 0.0, im: 0.0 }];

    #[test]
    fn rejects_non_unit_direction() {
        assert!(ZsPotential::from_modes(&[], [c(1.0, 0.0), c(1e-5, 0.0)]).is_err());
        assert!(ZsPotential::from_modes(&[], [c(0.6, 0.0), c(0.0, 0.8)]).is_ok());
    }

    #[test]
    fn free_monodromy() {
        let u = ZsPotential::from_modes(&[], E1).unwrap();
        let l = c(1.3, 0.2);
        let m = zs_monodromy(&u, l).unwrap();
        assert!((m.psi[(0, 0)] - (-I * l).exp()).norm() < 1e-15);
        assert!((m.psi[(1, 1)] - (I * l).exp()).norm() < 1e-15);
    }

    #[test]
    fn unit_determinant_and_real_lyapunov() {
        let u = ZsPotential::from_modes(&[(1, c(0.3, 0.1)), (-2, c(0.0, 0.2))], E1).unwrap();
        for l in [c(0.4, 0.0), c(-2.2, 0.7), c(5.0, -1.0)] {
            let m = zs_monodromy(&u, l).unwrap();
            assert!((m.psi.determinant() - 1.0).norm() < 1e-11);
        }
        for x in [-3.0, 0.1, 7.7] {
            assert!(delta_zs(&u, c(x, 0.0)).unwrap().im.abs() < 1e-12);
        }
    }

    #[test]
    fn reduction_zero_and_cosine() {
        let grid: Vec<f64> = (0..41).map(|i| -10.0 + 0.5 * i as f64 + 0.013).collect();
        let zero = ZsPotential::from_modes(&[], E1).unwrap();
        let r = reduction_check(&zero, &grid).unwrap();
        assert!(r.max.iter().all(|&m| m < 1e-12), "{:?}", r.max);
        let u = cosine(0.4, E1);
        let r = reduction_check(&u, &grid).unwrap();
        assert!(r.max.iter().all(|&m| m < 1e-7), "{:?}", r.max);
        let s = 0.5f64.sqrt();
        let rot = reduction_check(&u.with_direction([c(s, 0.0), c(0.0, s)]).unwrap(), &grid).unwrap();
        assert!(rot.max.iter().all(|&m| m < 1e-7), "{:?}", rot.max);
    }

    #[test]
    fn small_cosine_first_order_gaps() {
        // u = 2c·cos 2πx: γ_{±1} ≈ 2c, other gaps o(c).
        let cc = 0.01;
        let u = cosine(2.0 * cc, E1);
        let opts = SpectraOptions::default();
        let est = zs_gap_estimate(&u, &[-3, -2, -1, 0, 1, 2, 3], &opts).unwrap();
        for gp in &est.gaps {
            if gp.n.abs() == 1 {
                assert!((gp.width() - 2.0 * cc).abs() < 0.05 * cc, "{gp:?}");
            } else {
                assert!(gp.width() < 0.05 * cc, "{gp:?}");
            }
            assert!(gp.delta_residual < 1e-9, "{gp:?}");
        }
        assert!(est.upper_holds());
    }

    #[test]
    fn zero_potential_gap_estimate() {
        let u = ZsPotential::from_modes(&[], E1).unwrap();
        let est = zs_gap_estimate(&u, &[-1, 0, 1], &SpectraOptions::default()).unwrap();
        assert_eq!(est.g, 0.0);
        assert!(est.lower_holds() && est.upper_holds());
    }
}
