//! Zero counting and location for analytic functions on discs, plus real
//! bracketing helpers.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{c, C64, I};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Circle {
    pub center: C64,
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContourOptions {
    pub quad_nodes: usize,
    /// Central-difference step, relative to the contour radius.
    pub fd_step: f64,
    /// Below this max |f| on the contour the function counts as vanishing.
    pub degenerate_floor: f64,
    /// Reject when `min |f| < close_ratio · max |f|` on the contour.
    pub close_ratio: f64,
    /// Reject when the raw winding is farther than this from an integer.
    pub integer_tol: f64,
}

impl Default for ContourOptions {
    fn default() -> Self {
        Self { quad_nodes: 64, fd_step: 1e-4, degenerate_floor: 1e-14, close_ratio: 1e-9, integer_tol: 0.1 }
    }
}

/// Result of one pass around a circle.
#[derive(Debug, Clone, PartialEq)]
pub struct ContourSample {
    pub count: usize,
    pub winding_raw: f64,
    /// `Σ (z_i − center)^p` over the enclosed zeros, `p = 0..=count`.
    pub power_sums: Vec<C64>,
    pub min_abs: f64,
    pub max_abs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root {
    pub z: C64,
    pub multiplicity: usize,
    /// |f| at the polished point.
    pub residual: f64,
}

/// Central difference with absolute step `h`.
pub fn central_diff<F: Fn(C64) -> Result<C64>>(f: &F, z: C64, h: f64) -> Result<C64> {
    Ok((f(z + h)? - f(z - h)?) / (2.0 * h))
}

/// Winding number of `f` around the circle by trapezoid quadrature of
/// `f′/f`, together with the power sums of the enclosed zeros. The
/// derivative uses central differences with step `fd_step · radius`.
pub fn contour_sample<F: Fn(C64) -> Result<C64>>(
    f: &F,
    circle: Circle,
    opts: &ContourOptions,
) -> Result<ContourSample> {
    let m = opts.quad_nodes.max(8);
    let h = opts.fd_step * circle.radius;
    let mut vals = Vec::with_capacity(m);
    for k in 0..m {
        let w = C64::cis(2.0 * std::f64::consts::PI * k as f64 / m as f64) * circle.radius;
        let z = circle.center + w;
        let fz = f(z)?;
        let dz = central_diff(f, z, h)?;
        vals.push((w, fz, dz));
    }
    let min_abs = vals.iter().map(|v| v.1.norm()).fold(f64::INFINITY, f64::min);
    let max_abs = vals.iter().map(|v| v.1.norm()).fold(0.0, f64::max);
    if !(max_abs > opts.degenerate_floor) {
        return Err(Error::DegenerateFunction { max_abs });
    }
    let threshold = opts.close_ratio * max_abs;
    if min_abs < threshold {
        return Err(Error::ContourTooClose { min_abs, threshold });
    }
    let g: Vec<(C64, C64)> = vals.iter().map(|(w, fz, dz)| (*w, dz / fz * w)).collect();
    let s0: C64 = g.iter().map(|x| x.1).sum::<C64>() / m as f64;
    let winding_raw = s0.re;
    let count = winding_raw.round();
    if (winding_raw - count).abs() > opts.integer_tol || s0.im.abs() > opts.integer_tol || count < 0.0 {
        return Err(Error::NonIntegerWinding { value: winding_raw });
    }
    let count = count as usize;
    let mut power_sums = vec![c(count as f64, 0.0)];
    for p in 1..=count {
        let s: C64 = g.iter().map(|(w, x)| x * w.powi(p as i32)).sum::<C64>() / m as f64;
        power_sums.push(s);
    }
    Ok(ContourSample { count, winding_raw, power_sums, min_abs, max_abs })
}

/// Number of zeros of `f` inside the circle.
pub fn count_zeros<F: Fn(C64) -> Result<C64>>(f: &F, circle: Circle, quad_nodes: usize) -> Result<usize> {
    let opts = ContourOptions { quad_nodes, ..Default::default() };
    Ok(contour_sample(f, circle, &opts)?.count)
}

/// Roots of the polynomial with the given power sums (Newton identities,
/// then companion eigenvalues).
pub fn roots_from_power_sums(s: &[C64]) -> Vec<C64> {
    let n = s.len() - 1;
    if n == 0 {
        return vec![];
    }
    // k e_k = Σ_{i=1}^k (−1)^{i−1} e_{k−i} p_i
    let mut e = vec![c(1.0, 0.0)];
    for k in 1..=n {
        let mut acc = c(0.0, 0.0);
        for i in 1..=k {
            let sign = if i % 2 == 1 { 1.0 } else { -1.0 };
            acc += e[k - i] * s[i] * sign;
        }
        e.push(acc / k as f64);
    }
    let mut comp = DMatrix::<C64>::zeros(n, n);
    for i in 1..n {
        comp[(i, i - 1)] = c(1.0, 0.0);
    }
    for k in 1..=n {
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        comp[(n - k, n - 1)] = e[k] * sign;
    }
    match nalgebra::Schur::try_new(comp, f64::EPSILON, crate::linalg::SCHUR_MAX_ITER) {
        Some(schur) => {
            let (_, t) = schur.unpack();
            (0..n).map(|i| t[(i, i)]).collect()
        }
        None => durand_kerner(&e),
    }
}

/// Simultaneous iteration on `Σ (−1)^k e_k x^{n−k}`, the fallback when the
/// companion Schur iteration stalls.
fn durand_kerner(e: &[C64]) -> Vec<C64> {
    let n = e.len() - 1;
    let poly = |x: C64| {
        let mut acc = c(1.0, 0.0);
        for (k, ek) in e.iter().enumerate().skip(1) {
            let sign = if k % 2 == 1 { -1.0 } else { 1.0 };
            acc = acc * x + ek * sign;
        }
        acc
    };
    let radius = 1.0 + e.iter().skip(1).map(|z| z.norm()).fold(0.0, f64::max);
    let seed = c(0.4, 0.9);
    let mut z: Vec<C64> = (0..n).map(|k| seed.powu(k as u32) * radius).collect();
    for _ in 0..500 {
        let mut moved = 0.0f64;
        for i in 0..n {
            let mut den = c(1.0, 0.0);
            for j in 0..n {
                if j != i {
                    den *= z[i] - z[j];
                }
            }
            if den.norm() == 0.0 {
                continue;
            }
            let step = poly(z[i]) / den;
            z[i] -= step;
            moved = moved.max(step.norm());
        }
        if moved <= 1e-15 * radius {
            break;
        }
    }
    z
}

/// Newton iteration with multiplicity `m`; the derivative uses central
/// differences with absolute step `h`. Stops on a step below `tol`, on a
/// residual that no longer decreases, or after 50 iterations.
pub fn newton<F: Fn(C64) -> Result<C64>>(f: &F, z0: C64, multiplicity: usize, h: f64, tol: f64) -> Result<C64> {
    let mut z = z0;
    let mut fz = f(z)?;
    for _ in 0..50 {
        if fz.norm() == 0.0 {
            break;
        }
        let d = central_diff(f, z, h)?;
        if d.norm() == 0.0 {
            break;
        }
        let step = fz / d * multiplicity as f64;
        let znew = z - step;
        let fnew = f(znew)?;
        if fnew.norm() >= fz.norm() {
            let zh = z - step * 0.5;
            let fh = f(zh)?;
            if fh.norm() >= fz.norm() {
                break;
            }
            z = zh;
            fz = fh;
            continue;
        }
        z = znew;
        fz = fnew;
        if step.norm() <= tol * z.norm().max(1.0) {
            break;
        }
    }
    Ok(z)
}

/// Group points closer than `tol` (single linkage). Returns member indices.
pub fn clusters(points: &[C64], tol: f64) -> Vec<Vec<usize>> {
    let n = points.len();
    let mut label: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in (i + 1)..n {
            if (points[i] - points[j]).norm() <= tol {
                let (a, b) = (label[i], label[j]);
                if a != b {
                    for l in label.iter_mut() {
                        if *l == b {
                            *l = a;
                        }
                    }
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut seen: Vec<usize> = Vec::new();
    for i in 0..n {
        match seen.iter().position(|&l| l == label[i]) {
            Some(g) => groups[g].push(i),
            None => {
                seen.push(label[i]);
                groups.push(vec![i]);
            }
        }
    }
    groups
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocateOptions {
    pub contour: ContourOptions,
    pub newton_tol: f64,
    /// Roots closer than this are merged into one entry with multiplicity.
    pub cluster_tol: f64,
    /// Smallest sub-contour radius, relative to `max(1, |center|)`.
    pub min_radius: f64,
}

impl Default for LocateOptions {
    fn default() -> Self {
        Self { contour: ContourOptions::default(), newton_tol: 1e-12, cluster_tol: 1e-6, min_radius: 1e-9 }
    }
}

/// All zeros inside the circle.
///
/// The contour count and Delves–Lyness power sums give initial guesses.
/// Guesses that are well separated relative to the radius get Newton
/// polishing. Tight groups are re-examined on a smaller circle around their
/// centroid, recursively. A group that cannot be split further is reported
/// as one root at its moment centroid with its contour multiplicity.
/// Returns `CountMismatch` (tagged `n = tag`) if the multiplicities do not add
/// up to the count.
pub fn locate_zeros<F: Fn(C64) -> Result<C64>>(
    f: &F,
    circle: Circle,
    opts: &LocateOptions,
    tag: i64,
) -> Result<Vec<Root>> {
    let sample = contour_sample(f, circle, &opts.contour)?;
    let n = sample.count;
    let raw = refine(f, circle, &sample, opts, 0)?;
    let pts: Vec<C64> = raw.iter().map(|p| p.0).collect();
    let mut out = Vec::new();
    for g in clusters(&pts, opts.cluster_tol) {
        let mult: usize = g.iter().map(|&i| raw[i].1).sum();
        let z = g.iter().map(|&i| raw[i].0 * raw[i].1 as f64).sum::<C64>() / mult as f64;
        out.push(Root { z, multiplicity: mult, residual: f(z)?.norm() });
    }
    let found: usize = out.iter().map(|r| r.multiplicity).sum();
    if found != n {
        return Err(Error::CountMismatch { n: tag, expected: n, found });
    }
    out.sort_by(|a, b| a.z.re.total_cmp(&b.z.re).then(a.z.im.total_cmp(&b.z.im)));
    Ok(out)
}

fn refine<F: Fn(C64) -> Result<C64>>(
    f: &F,
    circle: Circle,
    sample: &ContourSample,
    opts: &LocateOptions,
    depth: usize,
) -> Result<Vec<(C64, usize)>> {
    let n = sample.count;
    if n == 0 {
        return Ok(vec![]);
    }
    let centroid = circle.center + sample.power_sums[1] / n as f64;
    if n == 1 {
        let z = newton(f, centroid, 1, 1e-4 * circle.radius, opts.newton_tol)?;
        let z = if (z - centroid).norm() <= circle.radius { z } else { centroid };
        return Ok(vec![(z, 1)]);
    }
    let guesses: Vec<C64> =
        roots_from_power_sums(&sample.power_sums).into_iter().map(|w| w + circle.center).collect();
    let floor = opts.min_radius * circle.center.norm().max(1.0);
    // Zoom: all zeros sit well inside, so shrink the circle around them
    // before trying to tell them apart.
    let spread = guesses.iter().map(|z| (z - centroid).norm()).fold(0.0, f64::max);
    if depth < 40 && spread < 0.3 * circle.radius {
        let mut radius = (2.0 * spread).max(0.02 * circle.radius).max(floor);
        while radius < 0.8 * circle.radius {
            let sub = Circle { center: centroid, radius };
            if let Ok(s) = contour_sample(f, sub, &opts.contour) {
                if s.count == n {
                    return refine(f, sub, &s, opts, depth + 1);
                }
            }
            radius *= 2.0;
        }
    }
    let groups = clusters(&guesses, 0.05 * circle.radius);
    let mut out = Vec::new();
    for g in &groups {
        let pts: Vec<C64> = g.iter().map(|&i| guesses[i]).collect();
        let m = pts.len();
        let c0 = pts.iter().sum::<C64>() / m as f64;
        if m == 1 {
            let others = guesses
                .iter()
                .filter(|z| (**z - c0).norm() > 0.0)
                .map(|z| (z - c0).norm())
                .fold(circle.radius, f64::min);
            let z = newton(f, c0, 1, 1e-4 * others, opts.newton_tol)?;
            out.push((if (z - c0).norm() <= 0.5 * others { z } else { c0 }, 1));
            continue;
        }
        // Sub-circle: large enough for the group, clear of the others.
        let spread = pts.iter().map(|z| (z - c0).norm()).fold(0.0, f64::max);
        let gap = guesses
            .iter()
            .enumerate()
            .filter(|(i, _)| !g.contains(i))
            .map(|(_, z)| (z - c0).norm())
            .fold(f64::INFINITY, f64::min);
        let mut radius = (3.0 * spread).max(0.02 * circle.radius).min(0.5 * gap).min(0.5 * circle.radius);
        let mut done = None;
        if depth < 12 && radius > floor {
            for _ in 0..3 {
                let sub = Circle { center: c0, radius };
                match contour_sample(f, sub, &opts.contour) {
                    Ok(s) if s.count == m => {
                        done = Some(refine(f, sub, &s, opts, depth + 1)?);
                        break;
                    }
                    Ok(s) if s.count < m && 2.0 * radius < 0.5 * gap.min(circle.radius) => radius *= 2.0,
                    _ => break,
                }
            }
        }
        match done {
            Some(r) => out.extend(r),
            None => out.push((c0, m)),
        }
    }
    Ok(out)
}

/// Bisection-safeguarded secant (Brent-style) for a sign change of a real
/// function on `[a, b]`.
pub fn brent<F: FnMut(f64) -> Result<f64>>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> Result<f64> {
    let mut fa = f(a)?;
    let mut fb = f(b)?;
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::InvalidArgument(format!("no sign change on [{a}, {b}]")));
    }
    let (mut cpt, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..200 {
        if fb.signum() == fc.signum() {
            cpt = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = cpt;
            cpt = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol;
        let xm = 0.5 * (cpt - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == cpt {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            if 2.0 * p < (3.0 * xm * q - (tol1 * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b)?;
    }
    Ok(b)
}

/// Points of a circle, for callers that sample contours themselves.
pub fn circle_point(circle: Circle, theta: f64) -> C64 {
    circle.center + (I * theta).exp() * circle.radius
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn sine_has_one_zero_near_pi_n() {
        let f = |z: C64| Ok(z.sin());
        for n in [-3i64, 1, 7] {
            let circ = Circle { center: c(PI * n as f64, 0.0), radius: 0.25 };
            assert_eq!(count_zeros(&f, circ, 64).unwrap(), 1);
        }
    }

    #[test]
    fn durand_kerner_fallback() {
        // e_k of the roots {1, -2, i}
        let r = [c(1.0, 0.0), c(-2.0, 0.0), c(0.0, 1.0)];
        let e = [
            c(1.0, 0.0),
            r[0] + r[1] + r[2],
            r[0] * r[1] + r[1] * r[2] + r[0] * r[2],
            r[0] * r[1] * r[2],
        ];
        let z = durand_kerner(&e);
        for x in r {
            assert!(z.iter().any(|y| (y - x).norm() < 1e-12));
        }
    }

    #[test]
    fn zero_function_is_degenerate() {
        let f = |_z: C64| Ok(c(0.0, 0.0));
        let circ = Circle { center: c(1.0, 0.0), radius: 0.25 };
        assert!(matches!(count_zeros(&f, circ, 64), Err(Error::DegenerateFunction { .. })));
    }

    #[test]
    fn contour_through_zero_is_rejected() {
        let f = |z: C64| Ok(z - c(1.25, 0.0));
        let circ = Circle { center: c(1.0, 0.0), radius: 0.25 };
        assert!(matches!(count_zeros(&f, circ, 64), Err(Error::ContourTooClose { .. })));
    }

    #[test]
    fn locates_simple_and_double_roots() {
        let r = [c(0.02, 0.01), c(-0.05, 0.0), c(0.1, -0.03)];
        let f = move |z: C64| Ok((z - r[0]) * (z - r[1]) * (z - r[1]) * (z - r[2]) * (z + 3.0).exp());
        let roots = locate_zeros(&f, Circle { center: c(0.0, 0.0), radius: 0.25 }, &LocateOptions::default(), 0)
            .unwrap();
        assert_eq!(roots.iter().map(|x| x.multiplicity).sum::<usize>(), 4);
        let double = roots.iter().find(|x| x.multiplicity == 2).unwrap();
        assert!((double.z - r[1]).norm() < 1e-7);
        for x in roots.iter().filter(|x| x.multiplicity == 1) {
            assert!(r.iter().any(|y| (x.z - y).norm() < 1e-10));
        }
    }

    #[test]
    fn close_pair_is_resolved() {
        let r = [c(0.1, 0.0), c(0.1 + 2e-5, 0.0)];
        let f = move |z: C64| Ok((z - r[0]) * (z - r[1]));
        let roots = locate_zeros(&f, Circle { center: c(0.0, 0.0), radius: 0.25 }, &LocateOptions::default(), 0)
            .unwrap();
        assert_eq!(roots.len(), 2);
        assert!((roots[0].z - r[0]).norm() < 1e-10 && (roots[1].z - r[1]).norm() < 1e-10);
    }

    #[test]
    fn brent_finds_cosine_zero() {
        let z = brent(|x| Ok(x.cos()), 1.0, 2.0, 1e-14).unwrap();
        assert!((z - PI / 2.0).abs() < 1e-13);
    }
}
