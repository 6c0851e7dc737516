//! Sixth-order Magnus one-step kernel for linear systems `y' = A(x) y` on
//! the unit interval, generic in the dimension.

use crate::linalg::{c, KernelMatrix};

/// Nominal order of [`propagate`].
pub const ORDER: u32 = 6;

/// Fundamental matrix at `x = 1` with `y(0) = 1`, on a uniform mesh of
/// `steps` cells. Each cell samples `A` at the three Gauss–Legendre nodes.
pub fn propagate<M: KernelMatrix, F: Fn(f64) -> M>(a: F, steps: usize) -> M {
    let h = 1.0 / steps as f64;
    let d = 15f64.sqrt() / 10.0;
    let nodes = [0.5 - d, 0.5, 0.5 + d];
    let mut y = M::eye();
    for s in 0..steps {
        let x0 = s as f64 * h;
        let [a1, a2, a3] = nodes.map(|t| a(x0 + t * h));
        let omega = magnus_omega(&a1, &a2, &a3, h);
        y = omega.expm() * y;
    }
    y
}

/// Sixth-order Magnus exponent for one cell of width `h` from the values of
/// `A` at the three Gauss–Legendre nodes.
pub fn magnus_omega<M: KernelMatrix>(a1: &M, a2: &M, a3: &M, h: f64) -> M {
    let s15 = 15f64.sqrt();
    let (a1, a2, a3) = (*a1, *a2, *a3);
    let alpha1 = a2 * c(h, 0.0);
    let alpha2 = (a3 - a1) * c(s15 * h / 3.0, 0.0);
    let alpha3 = (a3 - a2 * c(2.0, 0.0) + a1) * c(10.0 * h / 3.0, 0.0);
    let comm = |x: &M, y: &M| *x * *y - *y * *x;
    let c1 = comm(&alpha1, &alpha2);
    let c2 = comm(&alpha1, &(alpha3 * c(2.0, 0.0) + c1)) * c(-1.0 / 60.0, 0.0);
    let lhs = alpha1 * c(-20.0, 0.0) - alpha3 + c1;
    let rhs = alpha2 + c2;
    alpha1 + alpha3 * c(1.0 / 12.0, 0.0) + comm(&lhs, &rhs) * c(1.0 / 240.0, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Mat2 as M2;

    #[test]
    fn constant_coefficient_is_exact() {
        let a = M2::new(c(0.1, 1.0), c(0.3, 0.0), c(-0.2, 0.5), c(0.0, -0.7));
        let y = propagate(|_| a, 8);
        let exact = a.expm();
        assert!((y - exact).norm() < 1e-13);
    }

    #[test]
    fn sixth_order_convergence() {
        let b = M2::new(c(0.0, 1.0), c(0.5, 0.0), c(-0.5, 0.0), c(0.0, -1.0));
        let d = M2::new(c(0.0, 0.0), c(0.0, 1.0), c(0.0, 1.0), c(0.0, 0.0));
        let a = |x: f64| b * c((3.0 * x).cos(), 0.0) + d * c(2.0 * x, 0.0);
        let y1 = propagate(a, 8);
        let y2 = propagate(a, 16);
        let y3 = propagate(a, 32);
        let order = ((y1 - y2).norm() / (y2 - y3).norm()).log2();
        assert!((order - 6.0).abs() < 0.5, "observed order {order}");
    }
}
