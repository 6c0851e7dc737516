//! Small dense complex linear algebra used throughout the crate.

use std::ops::{Add, Mul, Sub};

use nalgebra::{SMatrix, Schur, SymmetricEigen};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type Mat2 = SMatrix<C64, 2, 2>;
pub type Mat3 = SMatrix<C64, 3, 3>;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// `J = diag(1, -1, -1)`.
pub fn j3() -> Mat3 {
    Mat3::from_diagonal(&nalgebra::Vector3::new(c(1.0, 0.0), c(-1.0, 0.0), c(-1.0, 0.0)))
}

/// Square matrices the one-step kernel can propagate.
pub trait KernelMatrix:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Mul<C64, Output = Self>
{
    fn eye() -> Self;
    fn expm(&self) -> Self;
}

macro_rules! kernel_matrix {
    ($t:ty) => {
        impl KernelMatrix for $t {
            fn eye() -> Self {
                <$t>::identity()
            }
            fn expm(&self) -> Self {
                self.exp()
            }
        }
    };
}
kernel_matrix!(Mat2);
kernel_matrix!(Mat3);

/// Largest entry modulus.
pub fn max_abs<const N: usize>(m: &SMatrix<C64, N, N>) -> f64 {
    m.iter().fold(0.0f64, |acc, z| acc.max(z.norm()))
}

pub fn is_finite<const N: usize>(m: &SMatrix<C64, N, N>) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Sum of the principal 2x2 minors, i.e. the second elementary symmetric
/// function of the eigenvalues.
pub fn c2(m: &Mat3) -> C64 {
    m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)] + m[(0, 0)] * m[(2, 2)]
        - m[(0, 2)] * m[(2, 0)]
        + m[(1, 1)] * m[(2, 2)]
        - m[(1, 2)] * m[(2, 1)]
}

pub fn det3(m: &Mat3) -> C64 {
    m[(0, 0)] * (m[(1, 1)] * m[(2, 2)] - m[(1, 2)] * m[(2, 1)])
        - m[(0, 1)] * (m[(1, 0)] * m[(2, 2)] - m[(1, 2)] * m[(2, 0)])
        + m[(0, 2)] * (m[(1, 0)] * m[(2, 1)] - m[(1, 1)] * m[(2, 0)])
}

/// QR sweeps allowed before the Schur iteration is abandoned (nalgebra's
/// default is unbounded, and nilpotent-like inputs can cycle).
pub(crate) const SCHUR_MAX_ITER: usize = 500;

/// Eigenvalues of a general complex square matrix from its Schur form, or
/// from the centered characteristic cubic when the iteration stalls.
pub fn eigenvalues(m: &Mat3) -> [C64; 3] {
    match Schur::try_new(*m, f64::EPSILON, SCHUR_MAX_ITER) {
        Some(schur) => {
            let (_, t) = schur.unpack();
            std::array::from_fn(|i| t[(i, i)])
        }
        None => {
            let shift = m.trace() / 3.0;
            let a = m - Mat3::identity() * shift;
            cardano_roots(c2(&a), -det3(&a)).map(|r| r + shift)
        }
    }
}

/// Eigenvalues (ascending) of a Hermitian matrix; the input is symmetrized
/// first.
pub fn hermitian_eigenvalues(m: &Mat3) -> [f64; 3] {
    let h = (m + m.adjoint()) * c(0.5, 0.0);
    let eig = SymmetricEigen::new(h);
    let mut ev: [f64; 3] = std::array::from_fn(|i| eig.eigenvalues[i]);
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// Roots of the depressed cubic `t^3 + p t + q`.
///
/// The companion matrix eigenvalues are the primary route; each root then
/// gets Newton polishing on the cubic itself.
pub fn depressed_cubic_roots(p: C64, q: C64) -> [C64; 3] {
    let zero = c(0.0, 0.0);
    let one = c(1.0, 0.0);
    if p == zero && q == zero {
        return [zero; 3];
    }
    let comp = Mat3::new(zero, zero, -q, one, zero, -p, zero, one, zero);
    let mut roots = eigenvalues(&comp);
    for r in roots.iter_mut() {
        *r = newton_polish_cubic(*r, p, q);
    }
    roots
}

fn newton_polish_cubic(mut t: C64, p: C64, q: C64) -> C64 {
    for _ in 0..3 {
        let f = t * t * t + p * t + q;
        let df = c(3.0, 0.0) * t * t + p;
        if df.norm() == 0.0 {
            break;
        }
        let step = f / df;
        // A step larger than the root itself means we sit on a cluster;
        // the eigenvalue estimate is already the better answer there.
        if !(step.norm() <= 1e-3 * (t.norm() + p.norm().sqrt() + q.norm().cbrt())) {
            break;
        }
        let next = t - step;
        let fnext = next * next * next + p * next + q;
        if fnext.norm() >= f.norm() {
            break;
        }
        t = next;
    }
    t
}

/// Closed-form (Cardano) roots of `t^3 + p t + q`, with the cube root chosen
/// to avoid cancellation. Used as an independent cross-check.
pub fn cardano_roots(p: C64, q: C64) -> [C64; 3] {
    let omega = c(-0.5, 3f64.sqrt() / 2.0);
    let disc = (q * q / 4.0 + p * p * p / 27.0).sqrt();
    let s1 = -q / 2.0 + disc;
    let s2 = -q / 2.0 - disc;
    let s = if s1.norm() >= s2.norm() { s1 } else { s2 };
    if s.norm() == 0.0 {
        return [c(0.0, 0.0); 3];
    }
    let u = s.cbrt();
    let mut out = [c(0.0, 0.0); 3];
    let mut w = c(1.0, 0.0);
    for o in out.iter_mut() {
        let uk = u * w;
        *o = uk - p / (c(3.0, 0.0) * uk);
        w *= omega;
    }
    out
}

/// Minimal-total-distance assignment of `b` onto `a` over all 3! orderings.
/// Returns `b` reordered.
pub fn match3(a: &[C64; 3], b: &[C64; 3]) -> [C64; 3] {
    const PERMS: [[usize; 3]; 6] = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];
    let mut best = PERMS[0];
    let mut best_cost = f64::INFINITY;
    for p in PERMS {
        let cost: f64 = (0..3).map(|i| (a[i] - b[p[i]]).norm()).sum();
        if cost < best_cost {
            best_cost = cost;
            best = p;
        }
    }
    [b[best[0]], b[best[1]], b[best[2]]]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_routes_agree() {
        let roots = [c(0.3, 0.1), c(-0.5, 0.2), c(0.2, -0.3)];
        let p = roots[0] * roots[1] + roots[1] * roots[2] + roots[0] * roots[2];
        let q = -roots[0] * roots[1] * roots[2];
        let a = depressed_cubic_roots(p, q);
        let b = cardano_roots(p, q);
        let a = match3(&roots, &a);
        let b = match3(&roots, &b);
        for i in 0..3 {
            assert!((a[i] - roots[i]).norm() < 1e-13);
            assert!((b[i] - roots[i]).norm() < 1e-13);
        }
    }

    #[test]
    fn minors_and_det() {
        let m = Mat3::new(
            c(1.0, 0.5),
            c(2.0, 0.0),
            c(0.0, 1.0),
            c(-1.0, 0.0),
            c(3.0, -1.0),
            c(0.5, 0.5),
            c(0.0, 2.0),
            c(1.0, 1.0),
            c(-2.0, 0.0),
        );
        let ev = eigenvalues(&m);
        let e2 = ev[0] * ev[1] + ev[1] * ev[2] + ev[0] * ev[2];
        let e3 = ev[0] * ev[1] * ev[2];
        assert!((c2(&m) - e2).norm() < 1e-12);
        assert!((det3(&m) - e3).norm() < 1e-12);
        assert!((det3(&m) - m.determinant()).norm() < 1e-12);
    }
}
