//! Monodromy matrix `ψ(λ) = y(1, λ)` of `iJy' + Vy = λy`, `y(0) = 1₃`.

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::linalg::{c, is_finite, j3, max_abs, Mat3, C64, I};
use crate::magnus;
use crate::potential::PeriodicPotential;
use crate::quad::gauss_legendre;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Monodromy {
    pub lambda: C64,
    pub psi: Mat3,
    /// Richardson estimate of the max-entry error of `psi`.
    pub est_error: f64,
    /// Cells of the mesh that produced `psi`.
    pub steps: usize,
}

/// `max(64, 8 K_max, ⌈8|λ|⌉)`.
pub fn default_steps(v: &PeriodicPotential, lambda: C64) -> usize {
    64usize
        .max(8 * v.k_max() as usize)
        .max((8.0 * lambda.norm()).ceil() as usize)
}

/// `ψ` for `v = 0`: `diag(e^{-iλ}, e^{iλ}, e^{iλ})`.
pub fn free_monodromy(lambda: C64) -> Mat3 {
    let e = (I * lambda).exp();
    Mat3::from_diagonal(&Vector3::new(e.inv(), e, e))
}

/// Coefficient `A(x) = -iJ(λ - V(x))`.
pub fn coefficient(v: &PeriodicPotential, lambda: C64, x: f64) -> Mat3 {
    let [v1, v2] = v.eval(x);
    let z = c(0.0, 0.0);
    let d = -I * lambda;
    Mat3::new(
        d,
        I * v1.conj(),
        I * v2.conj(),
        -I * v1,
        -d,
        z,
        -I * v2,
        z,
        -d,
    )
}

/// One Magnus pass on `steps` cells, without an error estimate.
pub fn propagate(v: &PeriodicPotential, lambda: C64, steps: usize) -> Result<Mat3> {
    if v.is_zero() {
        return Ok(free_monodromy(lambda));
    }
    let psi = magnus::propagate(|x| coefficient(v, lambda, x), steps);
    if is_finite(&psi) {
        Ok(psi)
    } else {
        Err(Error::NonFinite { lambda, steps })
    }
}

/// `ψ(λ)` on `2·steps` cells with the error estimated against `steps` cells.
pub fn integrate(v: &PeriodicPotential, lambda: C64, steps: usize) -> Result<Monodromy> {
    if steps < 8 {
        return Err(Error::InvalidArgument(format!("steps = {steps} < 8")));
    }
    if v.is_zero() {
        return Ok(Monodromy { lambda, psi: free_monodromy(lambda), est_error: 0.0, steps });
    }
    let coarse = propagate(v, lambda, steps)?;
    let fine = propagate(v, lambda, 2 * steps)?;
    let denom = (1u64 << magnus::ORDER) as f64 - 1.0;
    // Rounding accumulates roughly linearly in the number of cells.
    let rounding = 2.0 * steps as f64 * f64::EPSILON * max_abs(&fine);
    Ok(Monodromy {
        lambda,
        psi: fine,
        est_error: (max_abs(&(fine - coarse)) / denom).max(rounding),
        steps: 2 * steps,
    })
}

/// [`integrate`] with [`default_steps`].
pub fn monodromy(v: &PeriodicPotential, lambda: C64) -> Result<Monodromy> {
    integrate(v, lambda, default_steps(v, lambda))
}

/// `ψ̃(λ) = ψ(λ̄)^*`.
pub fn psi_tilde(v: &PeriodicPotential, lambda: C64) -> Result<Monodromy> {
    let m = monodromy(v, lambda.conj())?;
    Ok(Monodromy { lambda, psi: m.psi.adjoint(), ..m })
}

/// `‖ψ(λ) J ψ̃(λ) J − 1₃‖` (Frobenius) from two integrations.
pub fn symmetry_residual(v: &PeriodicPotential, lambda: C64) -> Result<f64> {
    let a = monodromy(v, lambda)?;
    let b = psi_tilde(v, lambda)?;
    let j = j3();
    Ok((a.psi * j * b.psi * j - Mat3::identity()).norm())
}

/// Partial Picard sum `y°(1) + Σ_{n ≤ order} y_n(1)`.
///
/// Works in the interaction frame `y = e^{-iλJx} w`, where
/// `w_n(x) = ∫₀ˣ B(s) w_{n-1}(s) ds` with `B = e^{iλJs} iJV e^{-iλJs}`.
/// The iterated integrals use panel-wise Gauss–Legendre spectral
/// integration.
pub fn picard_partial(v: &PeriodicPotential, lambda: C64, order: usize) -> Mat3 {
    let y0 = free_monodromy(lambda);
    if v.is_zero() || order == 0 {
        return y0;
    }
    const Q: usize = 12;
    let omega = 2.0 * std::f64::consts::PI * v.bandwidth() as f64 + 2.0 * lambda.norm();
    let panels = 8usize.max(omega.ceil() as usize);
    let h = 1.0 / panels as f64;
    let (x, w) = gauss_legendre(Q);
    let smat = integration_matrix(&x);

    let b_at = |s: f64| -> Mat3 {
        let jv = j3() * v.v_matrix(s);
        let ph = (I * lambda * 2.0 * s).exp();
        let mut b = jv * I;
        b[(0, 1)] *= ph;
        b[(0, 2)] *= ph;
        b[(1, 0)] /= ph;
        b[(2, 0)] /= ph;
        b
    };
    let bvals: Vec<Mat3> = (0..panels)
        .flat_map(|p| {
            let lo = p as f64 * h;
            x.iter().map(move |xi| lo + 0.5 * h * (xi + 1.0)).collect::<Vec<_>>()
        })
        .map(b_at)
        .collect();

    let mut prev = vec![Mat3::identity(); panels * Q];
    let mut total = Mat3::identity();
    for _ in 0..order {
        let mut next = vec![Mat3::zeros(); panels * Q];
        let mut acc = Mat3::zeros();
        for p in 0..panels {
            let f: Vec<Mat3> = (0..Q).map(|j| bvals[p * Q + j] * prev[p * Q + j]).collect();
            for i in 0..Q {
                let mut s = Mat3::zeros();
                for j in 0..Q {
                    s += f[j] * c(smat[i][j], 0.0);
                }
                next[p * Q + i] = acc + s * c(0.5 * h, 0.0);
            }
            let mut full = Mat3::zeros();
            for j in 0..Q {
                full += f[j] * c(w[j], 0.0);
            }
            acc += full * c(0.5 * h, 0.0);
        }
        total += acc;
        prev = next;
    }
    y0 * total
}

/// `S[i][j] = ∫_{-1}^{x_i} ℓ_j(t) dt` for the Lagrange basis on `x`.
fn integration_matrix(x: &[f64]) -> Vec<Vec<f64>> {
    let q = x.len();
    let (gx, gw) = gauss_legendre(q);
    let lagrange = |j: usize, t: f64| -> f64 {
        (0..q).filter(|&m| m != j).map(|m| (t - x[m]) / (x[j] - x[m])).product()
    };
    (0..q)
        .map(|i| {
            let half = 0.5 * (x[i] + 1.0);
            (0..q)
                .map(|j| {
                    gx.iter()
                        .zip(&gw)
                        .map(|(g, wg)| wg * lagrange(j, -1.0 + half * (g + 1.0)))
                        .sum::<f64>()
                        * half
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn generic() -> PeriodicPotential {
        PeriodicPotential::from_modes(&[
            (0, c(0.1, 0.05), c(-0.05, 0.1)),
            (1, c(0.2, 0.0), c(0.0, 0.1)),
            (-2, c(0.0, 0.1), c(0.15, 0.0)),
        ])
        .unwrap()
    }

    #[test]
    fn free_case_closed_form() {
        let lam = c(1.3, -0.4);
        let m = monodromy(&PeriodicPotential::zero(), lam).unwrap();
        assert_eq!(m.psi, free_monodromy(lam));
        assert_eq!(m.est_error, 0.0);
    }

    #[test]
    fn determinant_at_two() {
        let m = monodromy(&generic(), c(2.0, 0.0)).unwrap();
        assert!((m.psi.determinant() - c(0.0, 2.0).exp()).norm() < 1e-10);
    }

    #[test]
    fn rejects_tiny_meshes() {
        assert!(integrate(&generic(), c(1.0, 0.0), 4).is_err());
    }

    #[test]
    fn overflow_is_reported() {
        let r = integrate(&generic(), c(0.0, 800.0), 8);
        assert!(matches!(r, Err(Error::NonFinite { .. })));
    }

    #[test]
    fn symmetry_on_and_off_axis() {
        let v = generic();
        for lam in [c(1.7, 0.0), c(1.0, 0.5)] {
            let est = monodromy(&v, lam).unwrap().est_error.max(1e-15);
            let r = symmetry_residual(&v, lam).unwrap();
            assert!(r <= 10.0 * est + 1e-12, "residual {r} est {est}");
        }
        assert!(symmetry_residual(&PeriodicPotential::zero(), c(0.3, 0.9)).unwrap() < 1e-14);
    }

    #[test]
    fn picard_free_case() {
        let lam = c(0.4, 0.2);
        assert_eq!(picard_partial(&PeriodicPotential::zero(), lam, 3), free_monodromy(lam));
    }

    #[test]
    fn picard_remainder_bound() {
        let v = PeriodicPotential::from_modes(&[(1, c(0.06, 0.0), c(0.0, 0.05)), (0, c(0.0, 0.0), c(0.05, 0.0))])
            .unwrap();
        let nv = v.norm();
        let lam = c(1.0, 0.0);
        let psi = monodromy(&v, lam).unwrap().psi;
        let p4 = picard_partial(&v, lam, 4);
        let bound = nv.powi(5) / 120.0 * (1.0 + nv).exp() + 1e-8;
        assert!((psi - p4).norm() <= bound);
    }
}
