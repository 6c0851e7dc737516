//! Pointwise spectral algebra at fixed λ: characteristic polynomial,
//! multipliers, Lyapunov functions and the discriminants.
//!
//! `D(τ, λ) = det(ψ − τ) = −τ³ + τ²T − τ e^{iλ} W̃T + e^{iλ}` with
//! `T = Tr ψ` and `W̃T = Tr ψ⁻¹`.

use std::cmp::Ordering;

use crate::error::Result;
use nalgebra::Vector3;

use crate::linalg::{c2, depressed_cubic_roots, det3, eigenvalues, match3, Mat3, C64, I};
use crate::monodromy::{self, Monodromy};
use crate::potential::PeriodicPotential;

/// Two multipliers closer than this (relative to max |τ|) are reported as a
/// degenerate pair.
pub const CLUSTER_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharData {
    pub lambda: C64,
    pub t: C64,
    pub ttil: C64,
    pub est_error: f64,
    pub psi: Mat3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelingMode {
    AsymptoticAnchor,
    Continuity,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultiplierTriple {
    pub tau: [C64; 3],
    pub mode: LabelingMode,
    /// Two roots within [`CLUSTER_TOL`]: labels are provisional.
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovTriple {
    pub delta: [C64; 3],
}

/// Coefficients of `det(Λ − α) = −α³ + α²𝒯 − α𝒯₁ + det Λ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaPoly {
    pub trace: C64,
    pub t1: C64,
    pub det: C64,
}

impl CharData {
    /// `W̃T` is `conj T` on the real axis (from `ψ⁻¹ = Jψ*J`) and
    /// `e^{-iλ} c₂(ψ)` elsewhere.
    pub fn from_monodromy(m: &Monodromy) -> Self {
        let psi = m.psi;
        let t = psi.trace();
        let lambda = m.lambda;
        let ttil = if lambda.im == 0.0 {
            t.conj()
        } else {
            (-I * lambda).exp() * c2(&psi)
        };
        Self { lambda, t, ttil, est_error: m.est_error, psi }
    }

    pub fn e(&self) -> C64 {
        (I * self.lambda).exp()
    }

    /// Depressed-cubic coefficients `(p, q)` of the centered matrix
    /// `ψ − (T/3)·1`, whose eigenvalues are `τ_j − T/3`.
    pub fn centered(&self) -> (C64, C64) {
        let a = self.psi - Mat3::identity() * (self.t / 3.0);
        (c2(&a), -det3(&a))
    }
}

pub fn char_data(v: &PeriodicPotential, lambda: C64) -> Result<CharData> {
    Ok(CharData::from_monodromy(&monodromy::monodromy(v, lambda)?))
}

/// `W̃T(λ) = conj T(λ̄)` by a second integration at `λ̄`.
pub fn ttil_by_conjugation(v: &PeriodicPotential, lambda: C64) -> Result<C64> {
    Ok(monodromy::monodromy(v, lambda.conj())?.psi.trace().conj())
}

/// `D(τ, λ)` from `(T, W̃T)`.
pub fn char_poly(cd: &CharData, tau: C64) -> C64 {
    let e = cd.e();
    -tau * tau * tau + tau * tau * cd.t - tau * e * cd.ttil + e
}

/// `D(s, λ) = det(ψ − s)` straight from the matrix; `s = 1` gives `D₊`,
/// `s = −1` gives `D₋`.
pub fn d_at(cd: &CharData, s: C64) -> C64 {
    det3(&(cd.psi - Mat3::identity() * s))
}

/// Multipliers as the Schur eigenvalues of `ψ`, labelled by the asymptotic
/// anchor rule. A semisimple double multiplier (always present at `v = 0`)
/// is resolved to rounding this way, where any route through the cubic
/// only gets `√ε`; [`multipliers_from_cubic`] is the cross-check.
pub fn multipliers(cd: &CharData) -> MultiplierTriple {
    let roots = eigenvalues(&cd.psi);
    let tau = label_asymptotic(cd.lambda, roots);
    MultiplierTriple { tau, mode: LabelingMode::AsymptoticAnchor, degenerate: is_degenerate(&tau) }
}

/// `T/3` plus the roots of the centered depressed cubic.
pub fn multipliers_from_cubic(cd: &CharData) -> MultiplierTriple {
    let (p, q) = cd.centered();
    let shift = cd.t / 3.0;
    let roots = depressed_cubic_roots(p, q).map(|r| r + shift);
    let tau = label_asymptotic(cd.lambda, roots);
    MultiplierTriple { tau, mode: LabelingMode::AsymptoticAnchor, degenerate: is_degenerate(&tau) }
}

fn is_degenerate(tau: &[C64; 3]) -> bool {
    let scale = tau.iter().map(|t| t.norm()).fold(1.0, f64::max);
    min_separation(tau) < CLUSTER_TOL * scale
}

pub fn min_separation(tau: &[C64; 3]) -> f64 {
    (tau[0] - tau[1]).norm().min((tau[0] - tau[2]).norm()).min((tau[1] - tau[2]).norm())
}

/// `τ₃` nearest `e^{-iλ}`; `τ₁, τ₂` by distance to `e^{iλ}`, ties broken by
/// argument.
pub fn label_asymptotic(lambda: C64, roots: [C64; 3]) -> [C64; 3] {
    let em = (-I * lambda).exp();
    let ep = (I * lambda).exp();
    let i3 = (0..3)
        .min_by(|&a, &b| (roots[a] - em).norm().total_cmp(&(roots[b] - em).norm()))
        .unwrap();
    let mut rest: Vec<C64> = (0..3).filter(|&i| i != i3).map(|i| roots[i]).collect();
    rest.sort_by(|a, b| {
        let (da, db) = ((a - ep).norm(), (b - ep).norm());
        if (da - db).abs() <= 1e-12 * (1.0 + da.max(db)) {
            a.arg().partial_cmp(&b.arg()).unwrap_or(Ordering::Equal)
        } else {
            da.total_cmp(&db)
        }
    });
    [rest[0], rest[1], roots[i3]]
}

/// Multipliers along a path, the first point anchored and the rest matched
/// to their predecessor by minimal total distance.
pub fn label_by_continuity(path: &[CharData]) -> Vec<MultiplierTriple> {
    let mut out: Vec<MultiplierTriple> = Vec::with_capacity(path.len());
    for (i, cd) in path.iter().enumerate() {
        let m = multipliers(cd);
        if i == 0 {
            out.push(m);
        } else {
            let tau = match3(&out[i - 1].tau, &m.tau);
            out.push(MultiplierTriple { tau, mode: LabelingMode::Continuity, degenerate: m.degenerate });
        }
    }
    out
}

impl MultiplierTriple {
    pub fn product(&self) -> C64 {
        self.tau[0] * self.tau[1] * self.tau[2]
    }

    pub fn lyapunov(&self) -> LyapunovTriple {
        LyapunovTriple { delta: self.tau.map(|t| (t + t.inv()) * 0.5) }
    }
}

/// Krein signature `ξ*Jξ / ξ*ξ` of an eigenvector `ξ` of `ψ` for each
/// multiplier. On the real axis `ψ*Jψ = J`, so unimodular simple
/// multipliers have definite signature (`+` for the branch asymptotic to
/// `e^{-iλ}`, `−` for the other two), and a pair that has left the circle is
/// neutral. A double multiplier gets the signature of the extreme point of
/// the form on its two-dimensional eigenspace, signed by the form's
/// definiteness (0 when indefinite).
pub fn krein_signatures(psi: &Mat3, tau: &[C64; 3]) -> [f64; 3] {
    tau.map(|t| krein_signature(psi, t))
}

fn krein_signature(psi: &Mat3, tau: C64) -> f64 {
    let m = psi - Mat3::identity() * tau;
    let rows: [Vector3<C64>; 3] = std::array::from_fn(|i| m.row(i).transpose());
    let scale = m.norm().max(f64::MIN_POSITIVE);
    let mut best = Vector3::zeros();
    for (a, b) in [(0, 1), (0, 2), (1, 2)] {
        let x = rows[a].cross(&rows[b]);
        if x.norm() > best.norm() {
            best = x;
        }
    }
    let form = |x: &Vector3<C64>| (x[0].norm_sqr() - x[1].norm_sqr() - x[2].norm_sqr()) / x.norm_squared();
    if best.norm() > 1e-6 * scale * scale {
        return form(&best);
    }
    // Rank one: the null space is the bilinear complement of the largest row.
    let r = rows.iter().copied().max_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap();
    let seed = if r[0].norm() <= r[1].norm().max(r[2].norm()) { Vector3::x() } else { Vector3::y() };
    let seed = seed.map(|x: f64| C64::new(x, 0.0));
    let u = r.cross(&seed);
    let w = r.cross(&u);
    if u.norm() == 0.0 || w.norm() == 0.0 {
        return 0.0;
    }
    let (u, w) = (u.normalize(), w.normalize());
    let jf = |x: &Vector3<C64>, y: &Vector3<C64>| x[0].conj() * y[0] - x[1].conj() * y[1] - x[2].conj() * y[2];
    let g = nalgebra::Matrix2::new(jf(&u, &u), jf(&u, &w), jf(&w, &u), jf(&w, &w));
    let gram = nalgebra::Matrix2::new(
        u.dotc(&u),
        u.dotc(&w),
        w.dotc(&u),
        w.dotc(&w),
    );
    // Generalized Rayleigh extremes of the J-form on the eigenspace.
    let ev = match gram.try_inverse() {
        Some(gi) => (gi * g).eigenvalues().map(|e| [e[0].re, e[1].re]),
        None => None,
    };
    match ev {
        Some([a, b]) if a > 0.0 && b > 0.0 => a.min(b),
        Some([a, b]) if a < 0.0 && b < 0.0 => a.max(b),
        _ => 0.0,
    }
}

/// `𝔇` from `(T, W̃T)`:
/// `−(1/64)(T²W̃T² − 4e^{-iλ}T³ − 4e^{iλ}W̃T³ + 18TW̃T − 27)`.
pub fn discriminant(cd: &CharData) -> C64 {
    let (t, w, e) = (cd.t, cd.ttil, cd.e());
    let s = t * t * w * w - t * t * t * 4.0 / e - e * w * w * w * 4.0 + t * w * 18.0 - 27.0;
    -s / 64.0
}

/// `𝔇 = −(e^{-2iλ}/64) Π_{i<j} (τ_i − τ_j)²`.
pub fn discriminant_product(lambda: C64, tau: &[C64; 3]) -> C64 {
    let d = (tau[0] - tau[1]) * (tau[0] - tau[2]) * (tau[1] - tau[2]);
    -(-I * lambda * 2.0).exp() * d * d / 64.0
}

/// `𝔇 = e^{-2iλ}(4p³ + 27q²)/64` from the centered matrix. Stays accurate
/// when all three multipliers cluster, where the `(T, W̃T)` form cancels.
pub fn discriminant_centered(cd: &CharData) -> C64 {
    let (p, q) = cd.centered();
    (-I * cd.lambda * 2.0).exp() * (p * p * p * 4.0 + q * q * 27.0) / 64.0
}

/// `𝔣 = (T − W̃T)/(2i) − sin λ`.
pub fn f_function(cd: &CharData) -> C64 {
    (cd.t - cd.ttil) / (I * 2.0) - cd.lambda.sin()
}

/// `𝔣 = D(e^{iλ}, λ) / (2i e^{2iλ})` with the determinant taken from `ψ`.
pub fn f_via_det(cd: &CharData) -> C64 {
    let e = cd.e();
    d_at(cd, e) / (I * 2.0 * e * e)
}

/// Coefficients of the characteristic polynomial of `Λ = (ψ + ψ⁻¹)/2`:
/// `𝒯 = (T + W̃T)/2`, `𝒯₁ = ¼(e^{-iλ}T + 1)(e^{iλ}W̃T + 1) − 1` and
/// `det Λ = ⅛(2cos λ + e^{iλ}Tr ψ̃² + e^{-iλ}Tr ψ²)`.
pub fn lambda_poly(cd: &CharData) -> LambdaPoly {
    let (t, w, e) = (cd.t, cd.ttil, cd.e());
    let tr_psi2 = t * t - e * w * 2.0;
    let tr_psit2 = w * w - t * 2.0 / e;
    LambdaPoly {
        trace: (t + w) * 0.5,
        t1: (t / e + 1.0) * (e * w + 1.0) * 0.25 - 1.0,
        det: (cd.lambda.cos() * 2.0 + e * tr_psit2 + tr_psi2 / e) / 8.0,
    }
}

/// `𝔇_Δ = Π_{i<j}(Δ_i − Δ_j)²` from the coefficients of [`lambda_poly`].
///
/// Loses relative accuracy when two Lyapunov values nearly coincide (which
/// happens wherever `𝔣` is small); see [`delta_discriminant_product`].
pub fn delta_discriminant(cd: &CharData) -> C64 {
    let LambdaPoly { trace: a, t1: b, det: d } = lambda_poly(cd);
    a * a * b * b - d * a * a * a * 4.0 - b * b * b * 4.0 + d * a * b * 18.0 - d * d * 27.0
}

/// `𝔇_Δ` as the product of squared differences of the Lyapunov values.
pub fn delta_discriminant_product(l: &LyapunovTriple) -> C64 {
    let d = l.delta;
    let p = (d[0] - d[1]) * (d[0] - d[2]) * (d[1] - d[2]);
    p * p
}

/// Roots of `det(Λ − α)`, i.e. the Lyapunov values, from the cubic
/// coefficients alone.
pub fn lambda_poly_roots(lp: &LambdaPoly) -> [C64; 3] {
    // α³ − 𝒯α² + 𝒯₁α − det Λ, shifted by 𝒯/3.
    let s = lp.trace / 3.0;
    let p = lp.t1 - lp.trace * lp.trace / 3.0;
    let q = -lp.det + lp.t1 * s - s * s * s * 2.0;
    depressed_cubic_roots(p, q).map(|r| r + s)
}

/// A scale for relative comparisons of `𝔇`-type quantities.
pub fn scale_of(values: &[C64]) -> f64 {
    values.iter().map(|z| z.norm()).fold(0.0, f64::max) + 1e-12
}

/// `|T| ≤ 4 e^{|Im λ|} cosh ‖v‖`.
pub fn trace_bound(lambda: C64, norm: f64) -> f64 {
    4.0 * lambda.im.abs().exp() * norm.cosh()
}

/// Free-case trace `2e^{iλ} + e^{-iλ}`.
pub fn free_trace(lambda: C64) -> C64 {
    let e = (I * lambda).exp();
    e * 2.0 + e.inv()
}

/// Residuals of the exact identities at one λ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityResiduals {
    pub lambda: C64,
    /// `|det ψ − e^{iλ}| e^{−|Im λ|}`.
    pub det: f64,
    /// `‖ψ Jψ̃J − 1₃‖`.
    pub symmetry: f64,
    /// `|τ₁τ₂τ₃ − e^{iλ}|`.
    pub product: f64,
    /// `|4𝔇𝔣² − 𝔇_Δ|` divided by the larger of the two moduli.
    pub delta_disc: f64,
    /// `|Im 𝔇| / max(1, |𝔇|)`, zero off the real axis.
    pub im_d: f64,
    pub est_error: f64,
}

impl IdentityResiduals {
    /// Each residual against its tolerance from [`IDENTITY_TOL`], scaled.
    pub fn holds(&self, tol_scale: f64) -> bool {
        let t = IDENTITY_TOL.map(|x| x * tol_scale);
        self.det <= t[0]
            && self.symmetry <= t[1]
            && self.product <= t[2]
            && self.delta_disc <= t[3]
            && self.im_d <= t[4]
    }
}

/// Tolerances for det, symmetry, product, `4𝔇𝔣² = 𝔇_Δ` and `Im 𝔇`.
pub const IDENTITY_TOL: [f64; 5] = [1e-9, 1e-8, 1e-8, 1e-7, 1e-9];

pub fn identity_residuals(v: &PeriodicPotential, lambda: C64) -> Result<IdentityResiduals> {
    let m = monodromy::monodromy(v, lambda)?;
    let cd = CharData::from_monodromy(&m);
    let e = cd.e();
    let det = (det3(&cd.psi) - e).norm() / lambda.im.abs().exp();
    let symmetry = monodromy::symmetry_residual(v, lambda)?;
    let mt = multipliers(&cd);
    let product = (mt.product() - e).norm();
    let d = discriminant_centered(&cd);
    let f = f_function(&cd);
    let dd = delta_discriminant_product(&mt.lyapunov());
    let lhs = d * f * f * 4.0;
    let delta_disc = (lhs - dd).norm() / scale_of(&[lhs, dd]);
    let im_d = if lambda.im == 0.0 { d.im.abs() / d.norm().max(1.0) } else { 0.0 };
    Ok(IdentityResiduals { lambda, det, symmetry, product, delta_disc, im_d, est_error: m.est_error })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, match3};

    fn generic() -> PeriodicPotential {
        PeriodicPotential::from_modes(&[
            (0, c(0.1, 0.05), c(-0.05, 0.1)),
            (1, c(0.2, 0.0), c(0.0, 0.1)),
            (-2, c(0.0, 0.1), c(0.15, 0.0)),
        ])
        .unwrap()
    }

    #[test]
    fn schur_and_cubic_multipliers_agree() {
        let v = generic();
        for lam in [c(2.3, 0.6), c(0.4, 0.0), c(5.0, -1.5)] {
            let cd = char_data(&v, lam).unwrap();
            let a = multipliers(&cd).tau;
            let b = match3(&a, &multipliers_from_cubic(&cd).tau);
            for j in 0..3 {
                assert!((a[j] - b[j]).norm() < 1e-8, "{lam}");
            }
        }
    }

    #[test]
    fn identity_residuals_free_and_generic() {
        for v in [PeriodicPotential::zero(), generic()] {
            for lam in [c(0.0, 0.0), c(3.1, 0.0), c(1.7, 1.9), c(8.2, -2.0)] {
                let r = identity_residuals(&v, lam).unwrap();
                assert!(r.holds(1.0), "{r:?}");
            }
        }
    }

    #[test]
    fn free_case() {
        let lam = c(0.8, 0.3);
        let cd = char_data(&PeriodicPotential::zero(), lam).unwrap();
        let e = (I * lam).exp();
        assert!((cd.t - (e * 2.0 + e.inv())).norm() < 1e-14);
        assert!((cd.ttil - (e.inv() * 2.0 + e)).norm() < 1e-14);
        let m = multipliers(&cd);
        assert!((m.tau[0] - e).norm() < 1e-14 && (m.tau[1] - e).norm() < 1e-14);
        assert!((m.tau[2] - e.inv()).norm() < 1e-14);
        assert!((m.product() - e).norm() < 1e-14);
        assert!(m.degenerate);
        assert!(discriminant(&cd).norm() < 1e-13);
        assert!(f_function(&cd).norm() < 1e-14);
        assert!(delta_discriminant(&cd).norm() < 1e-12);
        let lp = lambda_poly(&cd);
        assert!((lp.trace - lam.cos() * 3.0).norm() < 1e-14);
    }

    #[test]
    fn real_axis_identities() {
        let v = generic();
        for lam in [0.3, 2.0, 5.5, -3.1] {
            let cd = char_data(&v, c(lam, 0.0)).unwrap();
            assert!((cd.ttil - cd.t.conj()).norm() < 1e-12);
            let w = c2(&cd.psi) * (-I * cd.lambda).exp();
            assert!((w - cd.t.conj()).norm() < 1e-9);
            let f = f_function(&cd);
            assert!(f.im.abs() < 1e-14);
            assert!((f - f_via_det(&cd)).norm() < 1e-9);
            assert!(cd.t.norm() <= trace_bound(cd.lambda, v.norm()));
        }
    }

    #[test]
    fn conjugation_route_for_complex_lambda() {
        let v = generic();
        let lam = c(1.1, 0.7);
        let cd = char_data(&v, lam).unwrap();
        let w = ttil_by_conjugation(&v, lam).unwrap();
        assert!((cd.ttil - w).norm() < 1e-10);
    }

    #[test]
    fn char_poly_matches_determinant() {
        let v = generic();
        let cd = char_data(&v, c(1.7, -0.4)).unwrap();
        for tau in [c(0.3, 0.2), c(-1.0, 0.5), c(2.0, -1.0)] {
            let d = (cd.psi - Mat3::identity() * tau).determinant();
            assert!((char_poly(&cd, tau) - d).norm() < 1e-10);
        }
    }

    #[test]
    fn multipliers_and_lyapunov() {
        let v = generic();
        let cd = char_data(&v, c(2.3, 0.6)).unwrap();
        let m = multipliers(&cd);
        let e = cd.e();
        assert!((m.product() - e).norm() < 1e-10);
        let s1: C64 = m.tau.iter().sum();
        let s2 = m.tau[0] * m.tau[1] + m.tau[1] * m.tau[2] + m.tau[0] * m.tau[2];
        assert!((s1 - cd.t).norm() < 1e-10);
        assert!((s2 - e * cd.ttil).norm() < 1e-10);
        let d = discriminant(&cd);
        let dp = discriminant_product(cd.lambda, &m.tau);
        let dc = discriminant_centered(&cd);
        assert!((d - dp).norm() < 1e-8 * d.norm());
        assert!((d - dc).norm() < 1e-8 * d.norm());
        let l = m.lyapunov();
        let lp = lambda_poly(&cd);
        assert!((l.delta.iter().sum::<C64>() - lp.trace).norm() < 1e-9);
        assert!((l.delta[0] * l.delta[1] * l.delta[2] - lp.det).norm() < 1e-9);
        let r = match3(&l.delta, &lambda_poly_roots(&lp));
        for j in 0..3 {
            assert!((r[j] - l.delta[j]).norm() < 1e-8);
        }
        let f = f_function(&cd);
        let dd = delta_discriminant_product(&l);
        assert!((d * f * f * 4.0 - dd).norm() < 1e-8 * scale_of(&[dd, d * f * f * 4.0]));
        // The coefficient route only holds in absolute terms.
        assert!((delta_discriminant(&cd) - dd).norm() < 1e-12);
    }

    #[test]
    fn continuity_labels_follow_the_path() {
        let v = generic();
        let path: Vec<CharData> =
            (0..20).map(|i| char_data(&v, c(0.5 + 0.05 * i as f64, 1.0)).unwrap()).collect();
        let labels = label_by_continuity(&path);
        for w in labels.windows(2) {
            for j in 0..3 {
                assert!((w[0].tau[j] - w[1].tau[j]).norm() < 0.2);
            }
        }
        assert_eq!(labels[1].mode, LabelingMode::Continuity);
    }

    #[test]
    fn anchor_labels_at_height() {
        let v = generic();
        let cd = char_data(&v, c(0.4, 4.0)).unwrap();
        let m = multipliers(&cd);
        assert!(m.tau[2].norm() > 10.0 && m.tau[0].norm() < 0.1 && m.tau[1].norm() < 0.1);
    }
}
