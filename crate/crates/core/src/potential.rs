//! Periodic ℂ²-valued potentials stored as finite Fourier series.
//!
//! Convention: `v(x) = Σ_k v̂_k e^{2πikx}` on the unit period. The
//! functional `∫₀¹ e^{2πinx} v(x) dx` picks out the stored coefficient with
//! index `PIN_INDEX_SIGN * n`, i.e. `v̂_{-n}`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::linalg::{c, hermitian_eigenvalues, Mat3, C64};

/// Stored index read by [`PeriodicPotential::fourier_at_pin`] for argument `n`.
pub const PIN_INDEX_SIGN: i64 = -1;

pub const DEFAULT_K_MAX: u32 = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicPotential {
    coeffs: BTreeMap<i64, [C64; 2]>,
    k_max: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionConstants {
    pub h0: f64,
    pub h1: f64,
    pub h2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaSpectrum {
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    pub beta_o: f64,
    pub gamma12: C64,
}

impl PeriodicPotential {
    pub fn new<I>(k_max: u32, coeffs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (i64, [C64; 2])>,
    {
        let mut map = BTreeMap::new();
        for (k, v) in coeffs {
            if k.unsigned_abs() > k_max as u64 {
                return Err(Error::InvalidPotential(format!(
                    "frequency {k} exceeds K_max = {k_max}"
                )));
            }
            if !(v[0].re.is_finite() && v[0].im.is_finite() && v[1].re.is_finite() && v[1].im.is_finite()) {
                return Err(Error::InvalidPotential(format!("non-finite coefficient at k = {k}")));
            }
            let e = map.entry(k).or_insert([c(0.0, 0.0); 2]);
            e[0] += v[0];
            e[1] += v[1];
        }
        map.retain(|_, v| v[0].norm() > 0.0 || v[1].norm() > 0.0);
        Ok(Self { coeffs: map, k_max })
    }

    pub fn zero() -> Self {
        Self { coeffs: BTreeMap::new(), k_max: DEFAULT_K_MAX }
    }

    /// Convenience constructor from `(k, v1, v2)` triples with `K_max` set to
    /// the default or the largest frequency, whichever is larger.
    pub fn from_modes(modes: &[(i64, C64, C64)]) -> Result<Self> {
        let kmax = modes.iter().map(|m| m.0.unsigned_abs() as u32).max().unwrap_or(0);
        Self::new(kmax.max(DEFAULT_K_MAX), modes.iter().map(|&(k, a, b)| (k, [a, b])))
    }

    pub fn k_max(&self) -> u32 {
        self.k_max
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn coeff(&self, k: i64) -> [C64; 2] {
        self.coeffs.get(&k).copied().unwrap_or([c(0.0, 0.0); 2])
    }

    /// Nonzero stored modes in ascending frequency.
    pub fn modes(&self) -> impl Iterator<Item = (i64, [C64; 2])> + '_ {
        self.coeffs.iter().map(|(k, v)| (*k, *v))
    }

    /// Largest |k| among nonzero modes.
    pub fn bandwidth(&self) -> u32 {
        self.coeffs.keys().map(|k| k.unsigned_abs() as u32).max().unwrap_or(0)
    }

    pub fn eval(&self, x: f64) -> [C64; 2] {
        let mut out = [c(0.0, 0.0); 2];
        for (k, v) in &self.coeffs {
            let e = C64::cis(2.0 * PI * (*k as f64) * x);
            out[0] += v[0] * e;
            out[1] += v[1] * e;
        }
        out
    }

    /// `V(x)` as the 3x3 matrix `[[0, v̄₁, v̄₂], [v₁, 0, 0], [v₂, 0, 0]]`.
    pub fn v_matrix(&self, x: f64) -> Mat3 {
        let [v1, v2] = self.eval(x);
        let z = c(0.0, 0.0);
        Mat3::new(z, v1.conj(), v2.conj(), v1, z, z, v2, z, z)
    }

    pub fn norm_sq(&self) -> f64 {
        self.coeffs.values().map(|v| v[0].norm_sqr() + v[1].norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Max of |v(x)| on a fine grid.
    pub fn sup_norm(&self) -> f64 {
        let n = 16 * (self.bandwidth() as usize + 1);
        (0..n)
            .map(|m| {
                let [a, b] = self.eval(m as f64 / n as f64);
                (a.norm_sqr() + b.norm_sqr()).sqrt()
            })
            .fold(0.0, f64::max)
    }

    /// `∫₀¹ e^{2πinx} v(x) dx`.
    pub fn fourier_at_pin(&self, n: i64) -> [C64; 2] {
        self.coeff(PIN_INDEX_SIGN * n)
    }

    /// The coefficient that sets the width of the spectral clusters at `πn`:
    /// `v̂_n` in the stored convention.
    pub fn gap_coefficient(&self, n: i64) -> [C64; 2] {
        self.coeff(n)
    }

    /// `∫₀¹ |v|⁴ dx` by equispaced quadrature, exact for the stored
    /// trigonometric polynomial.
    pub fn quartic_integral(&self) -> f64 {
        let n = 4 * self.k_max.max(self.bandwidth()) as usize + 1;
        let s: f64 = (0..n)
            .map(|m| {
                let [a, b] = self.eval(m as f64 / n as f64);
                let r = a.norm_sqr() + b.norm_sqr();
                r * r
            })
            .sum();
        s / n as f64
    }

    pub fn motion_constants(&self) -> MotionConstants {
        let mut h0 = 0.0;
        let mut h1 = 0.0;
        let mut d2 = 0.0;
        for (k, v) in &self.coeffs {
            let w = 2.0 * PI * *k as f64;
            let a = v[0].norm_sqr() + v[1].norm_sqr();
            h0 += a;
            h1 += w * a;
            d2 += w * w * a;
        }
        MotionConstants { h0, h1, h2: 0.5 * (d2 + self.quartic_integral()) }
    }

    /// `-i⟨v′, v⟩` before taking the real part; its imaginary part measures
    /// how far the computed value is from real.
    pub fn momentum_raw(&self) -> C64 {
        let mut s = c(0.0, 0.0);
        for (k, v) in &self.coeffs {
            let dv = c(0.0, 2.0 * PI * *k as f64);
            for j in 0..2 {
                s += dv * v[j] * v[j].conj();
            }
        }
        c(0.0, -1.0) * s
    }

    pub fn gamma12(&self) -> C64 {
        self.coeffs.values().map(|v| v[0] * v[1].conj()).sum()
    }

    /// `𝒱 = ∫₀¹ V(x)² dx`.
    pub fn v2_integral(&self) -> Mat3 {
        let n1: f64 = self.coeffs.values().map(|v| v[0].norm_sqr()).sum();
        let n2: f64 = self.coeffs.values().map(|v| v[1].norm_sqr()).sum();
        let g = self.gamma12();
        let z = c(0.0, 0.0);
        Mat3::new(c(n1 + n2, 0.0), z, z, z, c(n1, 0.0), g, z, g.conj(), c(n2, 0.0))
    }

    pub fn beta_spectrum(&self) -> BetaSpectrum {
        let n1: f64 = self.coeffs.values().map(|v| v[0].norm_sqr()).sum();
        let n2: f64 = self.coeffs.values().map(|v| v[1].norm_sqr()).sum();
        let g = self.gamma12();
        let beta_o = (n1 - n2).powi(2) + 4.0 * g.norm_sqr();
        let h0 = n1 + n2;
        let s = beta_o.sqrt();
        BetaSpectrum {
            beta1: ((h0 - s) / 2.0).max(0.0),
            beta2: (h0 + s) / 2.0,
            beta3: h0,
            beta_o,
            gamma12: g,
        }
    }

    /// Eigenvalues of `𝒱`, ascending; an independent route to the β-spectrum.
    pub fn v2_eigenvalues(&self) -> [f64; 3] {
        hermitian_eigenvalues(&self.v2_integral())
    }

    /// Project equispaced samples `v(m/N)`, `m = 0..N`, onto `|k| ≤ k_max`.
    /// Returns the potential and the L² norm of the discarded part.
    pub fn from_samples(samples: &[[C64; 2]], k_max: u32) -> Result<(Self, f64)> {
        let n = samples.len();
        if n < 2 * k_max as usize + 1 {
            return Err(Error::InvalidPotential(format!(
                "{n} samples cannot resolve K_max = {k_max}"
            )));
        }
        let mut planner = FftPlanner::<f64>::new();
        let fft = planner.plan_fft_forward(n);
        let mut comps = [Vec::new(), Vec::new()];
        for (j, comp) in comps.iter_mut().enumerate() {
            let mut buf: Vec<C64> = samples.iter().map(|s| s[j]).collect();
            fft.process(&mut buf);
            *comp = buf.into_iter().map(|z| z / n as f64).collect();
        }
        let mut kept = Vec::new();
        let mut dropped = 0.0;
        for idx in 0..n {
            let k = if idx <= n / 2 { idx as i64 } else { idx as i64 - n as i64 };
            let v = [comps[0][idx], comps[1][idx]];
            if k.unsigned_abs() <= k_max as u64 {
                kept.push((k, v));
            } else {
                dropped += v[0].norm_sqr() + v[1].norm_sqr();
            }
        }
        Ok((Self::new(k_max, kept)?, dropped.sqrt()))
    }

    /// `v = u·e` for a scalar series `u` and a constant vector `e`.
    pub fn from_scalar(k_max: u32, u: &[(i64, C64)], e: [C64; 2]) -> Result<Self> {
        Self::new(k_max, u.iter().map(|&(k, a)| (k, [a * e[0], a * e[1]])))
    }
}


#[cfg(test)]
mod tests {
    use super::*;

    fn trapezoid<F: Fn(f64) -> C64>(f: F, n: usize) -> C64 {
        (0..n).map(|m| f(m as f64 / n as f64)).sum::<C64>() / n as f64
    }

    #[test]
    fn eval_examples() {
        assert_eq!(PeriodicPotential::zero().eval(0.3), [c(0.0, 0.0); 2]);
        let a = 0.7;
        let v = PeriodicPotential::from_modes(&[(1, c(a, 0.0), c(0.0, 0.0))]).unwrap();
        let z = v.eval(0.25);
        assert!((z[0] - c(0.0, a)).norm() < 1e-15);
        let k = PeriodicPotential::from_modes(&[(0, c(0.3, 0.1), c(0.0, 0.0))]).unwrap();
        assert!((k.eval(0.77)[0] - c(0.3, 0.1)).norm() < 1e-15);
    }

    #[test]
    fn rejects_out_of_range_frequency() {
        assert!(PeriodicPotential::new(2, [(3, [c(1.0, 0.0), c(0.0, 0.0)])]).is_err());
    }

    #[test]
    fn pin_convention() {
        // ∫ e^{2πinx} v dx against the stored index, by quadrature.
        let v = PeriodicPotential::from_modes(&[
            (-1, c(0.5, 0.1), c(0.0, 0.2)),
            (1, c(0.2, 0.0), c(0.1, -0.1)),
            (3, c(0.0, 0.3), c(0.0, 0.0)),
        ])
        .unwrap();
        for n in -4..=4 {
            let q0 = trapezoid(|x| C64::cis(2.0 * PI * n as f64 * x) * v.eval(x)[0], 64);
            let q1 = trapezoid(|x| C64::cis(2.0 * PI * n as f64 * x) * v.eval(x)[1], 64);
            let f = v.fourier_at_pin(n);
            assert!((f[0] - q0).norm() < 1e-14 && (f[1] - q1).norm() < 1e-14, "n = {n}");
            assert_eq!(v.gap_coefficient(n), v.coeff(n));
        }
        assert_eq!(v.fourier_at_pin(1), v.coeff(-1));
        assert_eq!(v.fourier_at_pin(20), [c(0.0, 0.0); 2]);
    }

    #[test]
    fn motion_constants_examples() {
        let m = PeriodicPotential::zero().motion_constants();
        assert_eq!((m.h0, m.h1, m.h2), (0.0, 0.0, 0.0));
        let cc = 0.6;
        let m = PeriodicPotential::from_modes(&[(0, c(cc, 0.0), c(0.0, 0.0))]).unwrap().motion_constants();
        assert!((m.h0 - cc * cc).abs() < 1e-15 && m.h1 == 0.0);
        assert!((m.h2 - cc.powi(4) / 2.0).abs() < 1e-15);
        let a = 0.4;
        let m = PeriodicPotential::from_modes(&[(1, c(a, 0.0), c(0.0, 0.0))]).unwrap().motion_constants();
        assert!((m.h0 - a * a).abs() < 1e-15);
        assert!((m.h1 - 2.0 * PI * a * a).abs() < 1e-14);
        let h2 = 0.5 * ((2.0 * PI).powi(2) * a * a + a.powi(4));
        assert!((m.h2 - h2).abs() < 1e-13);
    }

    #[test]
    fn beta_examples() {
        let v = PeriodicPotential::from_modes(&[(2, c(0.6, 0.0), c(0.0, 0.0)), (-1, c(0.0, 0.8), c(0.0, 0.0))])
            .unwrap();
        let b = v.beta_spectrum();
        assert!((b.beta3 - 1.0).abs() < 1e-15 && (b.beta_o - 1.0).abs() < 1e-15);
        assert!((b.beta2 - 1.0).abs() < 1e-15 && b.beta1.abs() < 1e-15);

        let v = PeriodicPotential::from_modes(&[(1, c(0.3, 0.0), c(0.0, 0.0)), (2, c(0.0, 0.0), c(0.3, 0.0))])
            .unwrap();
        let b = v.beta_spectrum();
        assert!(b.beta_o.abs() < 1e-15 && (b.beta1 - b.beta2).abs() < 1e-15);

        let (a, bb) = (0.5, 0.2);
        let v = PeriodicPotential::from_modes(&[(1, c(a, 0.0), c(0.0, 0.0)), (0, c(0.0, 0.0), c(bb, 0.0))])
            .unwrap();
        let s = v.beta_spectrum();
        let g = trapezoid(|x| { let z = v.eval(x); z[0] * z[1].conj() }, 32);
        assert!(g.norm() < 1e-15 && s.gamma12.norm() < 1e-15);
        assert!((s.beta_o - (a * a - bb * bb).powi(2)).abs() < 1e-15);
    }

    #[test]
    fn samples_round_trip() {
        let v = PeriodicPotential::from_modes(&[(1, c(0.3, 0.1), c(0.0, 0.2)), (-3, c(0.1, 0.0), c(0.05, 0.05))])
            .unwrap();
        let n = 64;
        let s: Vec<[C64; 2]> = (0..n).map(|m| v.eval(m as f64 / n as f64)).collect();
        let (w, resid) = PeriodicPotential::from_samples(&s, 16).unwrap();
        assert!(resid < 1e-14);
        for k in -16..=16 {
            let (a, b) = (v.coeff(k), w.coeff(k));
            assert!((a[0] - b[0]).norm() < 1e-14 && (a[1] - b[1]).norm() < 1e-14);
        }
    }
}
