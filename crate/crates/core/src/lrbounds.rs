//! Light-cone constants (kappa, v, C) for free-fermion quenches and the gap bounds built from them.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::freefermion::{bloch_projector, BlochModel};
use crate::numerics::{c, general_eig, herm_eigvals, max_abs, scan_max, spectral_norm, CMat};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

#[derive(Debug, Clone, Serialize)]
pub struct LRConstants {
    pub kappa: f64,
    pub v: f64,
    pub c: f64,
    pub strip_valid: bool,
    /// Quadrature points used for the converged C.
    pub nk: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct VelocityReport {
    pub v_max: f64,
    pub v_mr: f64,
    /// (k, dE_alpha/dk for each band in ascending energy order).
    pub per_k: Vec<(f64, Vec<f64>)>,
}

/// Projector at k + i kappa for every grid node, plus the diagonalizability check on the target model.
fn strip_nodes_ok(model0: &BlochModel, model: &BlochModel, kappa: f64, n_k: usize) -> bool {
    for sign in [1.0, -1.0] {
        let projs: Option<Vec<CMat>> = (0..n_k)
            .into_par_iter()
            .map(|j| {
                let z = c(TWO_PI * (j as f64 + 0.5) / n_k as f64, sign * kappa);
                if general_eig(&model.at(z)).defective_flag {
                    return None;
                }
                bloch_projector(model0, z).ok()
            })
            .collect();
        let Some(projs) = projs else { return false };
        // past a branch point the occupied band swaps partners and P jumps between neighbours
        let h = TWO_PI / n_k as f64;
        for j in 0..n_k {
            let ka = TWO_PI * (j as f64 + 0.5) / n_k as f64;
            if !continuous_between(model0, sign * kappa, ka, ka + h, &projs[j], &projs[(j + 1) % n_k], 24) {
                return false;
            }
        }
    }
    true
}

/// Bisects until neighbouring projectors are close; a jump that survives refinement is a discontinuity.
fn continuous_between(model0: &BlochModel, im: f64, ka: f64, kb: f64, pa: &CMat, pb: &CMat, depth: usize) -> bool {
    if max_abs(&(pb - pa)) <= 0.25 {
        return true;
    }
    if depth == 0 {
        return false;
    }
    let km = 0.5 * (ka + kb);
    let Ok(pm) = bloch_projector(model0, c(km, im)) else { return false };
    continuous_between(model0, im, ka, km, pa, &pm, depth - 1) && continuous_between(model0, im, km, kb, &pm, pb, depth - 1)
}

/// Largest scanned kappa for which every kappa' up to it passes the analyticity and diagonalizability checks.
pub fn continuation_strip(model0: &BlochModel, model: &BlochModel, kappa_max_scan: f64) -> Result<f64> {
    continuation_strip_with(model0, model, kappa_max_scan, 64, 256)
}

pub fn continuation_strip_with(
    model0: &BlochModel,
    model: &BlochModel,
    kappa_max_scan: f64,
    n_kappa: usize,
    n_k: usize,
) -> Result<f64> {
    let mut best = None;
    for i in 1..=n_kappa {
        let kappa = kappa_max_scan * i as f64 / n_kappa as f64;
        if !strip_nodes_ok(model0, model, kappa, n_k) {
            break;
        }
        best = Some(kappa);
    }
    best.ok_or(Error::NoValidStrip)
}

/// kappa * v at one k: the largest Im(eps_a - eps_b) at k + i kappa.
fn imag_spread(model: &BlochModel, k: f64, kappa: f64) -> f64 {
    let vals = general_eig(&model.at(c(k, kappa))).values;
    let hi = vals.iter().map(|z| z.im).fold(f64::NEG_INFINITY, f64::max);
    let lo = vals.iter().map(|z| z.im).fold(f64::INFINITY, f64::min);
    hi - lo
}

/// v(kappa) = kappa^{-1} max_k max_{a,b} Im(eps_a - eps_b) at k + i kappa.
pub fn lr_velocity(model: &BlochModel, kappa: f64) -> Result<f64> {
    if kappa <= 0.0 {
        return Err(Error::InvalidParameter(format!("kappa = {kappa} must be positive")));
    }
    let (_, m) = scan_max(|k| imag_spread(model, k, kappa), 0.0, TWO_PI, 1024);
    Ok(m / kappa)
}

/// Integrand (sum_a ||u^R_a|| ||u^L_a||)^2 ||P0(k + i kappa)||.
fn c_integrand(model0: &BlochModel, model: &BlochModel, k: f64, kappa: f64) -> Result<f64> {
    let z = c(k, kappa);
    let eig = general_eig(&model.at(z));
    if eig.defective_flag {
        return Err(Error::DefectivePoint { k, kappa });
    }
    let s: f64 = (0..model.bands)
        .map(|a| eig.right_vectors.column(a).norm() * eig.left_vectors.column(a).norm())
        .sum();
    let p0 = bloch_projector(model0, z)?;
    Ok(s * s * spectral_norm(&p0))
}

fn c_trapezoid(model0: &BlochModel, model: &BlochModel, kappa: f64, nk: usize) -> Result<f64> {
    let vals = (0..nk)
        .into_par_iter()
        .map(|j| c_integrand(model0, model, TWO_PI * j as f64 / nk as f64, kappa))
        .collect::<Result<Vec<f64>>>()?;
    Ok(vals.iter().sum::<f64>() / nk as f64)
}

/// Prefactor C, doubling the trapezoid grid until successive values agree to `rel_tol`.
pub fn lr_prefactor(model0: &BlochModel, model: &BlochModel, kappa: f64, rel_tol: f64) -> Result<(f64, usize)> {
    let mut nk = 256;
    let mut prev = c_trapezoid(model0, model, kappa, nk)?;
    while nk < 1 << 16 {
        nk *= 2;
        let cur = c_trapezoid(model0, model, kappa, nk)?;
        if (cur - prev).abs() <= rel_tol * cur.abs() {
            return Ok((cur, nk));
        }
        prev = cur;
    }
    Err(Error::ConvergenceFailure(format!("C did not converge (last {prev})")))
}

pub fn lr_constants(model0: &BlochModel, model: &BlochModel, kappa: f64) -> Result<LRConstants> {
    let attempt = |kap: f64| -> Result<LRConstants> {
        let (cval, nk) = lr_prefactor(model0, model, kap, 1e-6)?;
        let v = lr_velocity(model, kap)?;
        Ok(LRConstants { kappa: kap, v, c: cval, strip_valid: true, nk })
    };
    match attempt(kappa) {
        Err(Error::DefectivePoint { .. }) => attempt(kappa + 1e-6),
        other => other,
    }
}

fn band_energies(model: &BlochModel, k: f64) -> Vec<f64> {
    herm_eigvals(&model.at_real(k)).expect("Bloch Hamiltonian is Hermitian at real k")
}

/// Five-point derivative of each (energy-ordered) band.
fn band_velocities(model: &BlochModel, k: f64, h: f64) -> Vec<f64> {
    let e = |dk: f64| band_energies(model, k + dk);
    let (m2, m1, p1, p2) = (e(-2.0 * h), e(-h), e(h), e(2.0 * h));
    (0..model.bands)
        .map(|a| (m2[a] - 8.0 * m1[a] + 8.0 * p1[a] - p2[a]) / (12.0 * h))
        .collect()
}

fn min_band_separation(model: &BlochModel, k: f64) -> f64 {
    let e = band_energies(model, k);
    e.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
}

pub fn group_velocities(model: &BlochModel) -> Result<VelocityReport> {
    group_velocities_with(model, 2048)
}

pub fn group_velocities_with(model: &BlochModel, nk: usize) -> Result<VelocityReport> {
    let h = 1e-3;
    let ks: Vec<f64> = (0..nk).map(|i| TWO_PI * i as f64 / nk as f64).collect();
    for &k in &ks {
        if model.bands > 1 && min_band_separation(model, k) < 1e-6 {
            return Err(Error::BandTrackingFailure(k));
        }
    }
    let per_k: Vec<(f64, Vec<f64>)> = ks.par_iter().map(|&k| (k, band_velocities(model, k, h))).collect();
    let vmax_at = |k: f64| band_velocities(model, k, h).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let vmr_at = |k: f64| {
        let v = band_velocities(model, k, h);
        let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        hi - lo
    };
    let refine = |f: &dyn Fn(f64) -> f64| -> f64 {
        let (mut best_k, mut best) = (0.0, f64::NEG_INFINITY);
        for &k in &ks {
            let v = f(k);
            if v > best {
                best = v;
                best_k = k;
            }
        }
        let step = TWO_PI / nk as f64;
        crate::numerics::golden_max(f, best_k - step, best_k + step, 60).1.max(best)
    };
    let v_max = refine(&vmax_at);
    let v_mr = refine(&vmr_at);
    Ok(VelocityReport { v_max, v_mr, per_k })
}

/// C e^{-kappa (l - v t)}.
pub fn gap_bound(consts: &LRConstants, l: usize, t: f64) -> f64 {
    consts.c * (-consts.kappa * (l as f64 - consts.v * t)).exp()
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

pub fn lcm(a: u64, b: u64) -> u64 {
    a / gcd(a, b) * b
}

/// (segment correction, finite-ring gap bound) for a length-l segment of a length-L ring.
pub fn finite_size_bounds(consts: &LRConstants, l: usize, big_l: usize, t: f64) -> Result<(f64, f64)> {
    if l == 0 || l >= big_l {
        return Err(Error::InvalidGeometry(format!("need 1 <= l < L, got l = {l}, L = {big_l}")));
    }
    let k = consts.kappa;
    let growth = (k * consts.v * t).exp();
    let shape = (k * l as f64).sinh() / k.sinh();
    let inv = |x: f64| 1.0 / x.exp_m1();
    let segment = 2.0 * consts.c * growth * shape * inv(k * big_l as f64);
    let m = lcm(big_l as u64, 2 * l as u64) as f64;
    let bracket = inv(k * big_l as f64) + inv(2.0 * k * l as f64) - 2.0 * inv(k * m);
    let finite = 4.0 * consts.c * shape * growth * bracket;
    Ok((segment, finite))
}

/// v(kappa) on an ascending grid; true when nondecreasing within 1e-9.
pub fn velocity_monotonicity_scan(model: &BlochModel, kappas: &[f64]) -> Result<(bool, Vec<(f64, f64)>)> {
    let table = kappas
        .par_iter()
        .map(|&k| lr_velocity(model, k).map(|v| (k, v)))
        .collect::<Result<Vec<_>>>()?;
    let mono = table.windows(2).all(|w| w[1].1 >= w[0].1 - 1e-9);
    Ok((mono, table))
}

fn kernel_y(k: f64, kappa2: f64, kappa1: f64) -> f64 {
    let x = std::f64::consts::PI * k / kappa1;
    if x.abs() > 700.0 {
        return 0.0;
    }
    if kappa2 == 0.0 {
        return std::f64::consts::PI / (2.0 * kappa1 * (x.cosh() + 1.0));
    }
    let a = kappa2 * std::f64::consts::PI / kappa1;
    a.sin() / (2.0 * kappa2 * (x.cosh() + a.cos()))
}

/// Periodized kernel relating v at kappa2 to v at kappa1 (kappa1 > kappa2 >= 0).
pub fn majorization_kernel(k: f64, kappa1: f64, kappa2: f64, image_terms: usize) -> f64 {
    let n = image_terms as i64;
    (-n..=n).map(|m| kernel_y(k + TWO_PI * m as f64, kappa2, kappa1)).sum()
}

/// Closed-form Fourier coefficient of the kernel.
pub fn majorization_fourier(n: i64, kappa1: f64, kappa2: f64) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let nf = n.unsigned_abs() as f64;
    if kappa2 == 0.0 {
        return kappa1 * nf / (nf * kappa1).sinh();
    }
    kappa1 * (nf * kappa2).sinh() / (kappa2 * (nf * kappa1).sinh())
}

#[derive(Debug, Clone)]
pub struct HarmonicReport {
    pub rows: Vec<Vec<f64>>,
    pub max_increments: Vec<f64>,
    pub increments_monotone: bool,
    pub normalized_max_monotone: bool,
    pub laplace_residual: f64,
}

/// Discrete harmonic function with f = 0 on row 0 and `boundary` on row 1 (periodic columns),
/// continued upward row by row; checks that the row-max increments are nondecreasing.
pub fn discrete_harmonic_check(boundary: &[f64], rows: usize) -> Result<HarmonicReport> {
    if rows < 3 {
        return Err(Error::InvalidGeometry(format!("rows = {rows} below 3")));
    }
    let n = boundary.len();
    if n < 3 {
        return Err(Error::InvalidGeometry("boundary too short".into()));
    }
    let mut f = vec![vec![0.0; n], boundary.to_vec()];
    for r in 1..rows - 1 {
        let cur = &f[r];
        let prev = &f[r - 1];
        let next: Vec<f64> = (0..n)
            .map(|j| 4.0 * cur[j] - cur[(j + 1) % n] - cur[(j + n - 1) % n] - prev[j])
            .collect();
        f.push(next);
    }
    let mut resid = 0.0f64;
    let scale = f.iter().flatten().fold(1.0f64, |m, x| m.max(x.abs()));
    for r in 1..rows - 1 {
        for j in 0..n {
            let lap = f[r + 1][j] + f[r - 1][j] + f[r][(j + 1) % n] + f[r][(j + n - 1) % n] - 4.0 * f[r][j];
            resid = resid.max(lap.abs() / scale);
        }
    }
    if !resid.is_finite() || resid > 1e-10 {
        return Err(Error::NoConvergence(resid));
    }
    let maxes: Vec<f64> = f.iter().map(|row| row.iter().cloned().fold(f64::NEG_INFINITY, f64::max)).collect();
    let inc: Vec<f64> = maxes.windows(2).map(|w| w[1] - w[0]).collect();
    let tol = 1e-12 * scale;
    let increments_monotone = inc.windows(2).all(|w| w[1] >= w[0] - tol);
    let normalized: Vec<f64> = (1..rows).map(|r| maxes[r] / r as f64).collect();
    let normalized_max_monotone = normalized.windows(2).all(|w| w[1] >= w[0] - tol);
    Ok(HarmonicReport {
        rows: f,
        max_increments: inc,
        increments_monotone,
        normalized_max_monotone,
        laplace_residual: resid,
    })
}

/// Largest ratio ||<j|P(t)|j'>|| / (C e^{-kappa(|j-j'| - v t)}) over the given blocks (index r + max_sep).
pub fn correlation_domination_ratio(consts: &LRConstants, blocks: &[CMat], t: f64) -> f64 {
    let max_sep = (blocks.len() - 1) / 2;
    blocks
        .iter()
        .enumerate()
        .map(|(idx, b)| {
            let r = (idx as f64 - max_sep as f64).abs();
            spectral_norm(b) / (consts.c * (-consts.kappa * (r - consts.v * t)).exp())
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::pauli_x;

    fn ssh(j1: f64, j2: f64) -> BlochModel {
        let h0 = pauli_x() * c(-j1, 0.0);
        let h1 = CMat::from_row_slice(2, 2, &[c(0., 0.), c(0., 0.), c(-j2, 0.), c(0., 0.)]);
        BlochModel::from_hops(h0, vec![(1, h1)]).unwrap()
    }

    #[test]
    fn gap_bound_arithmetic() {
        let k = LRConstants { kappa: 0.6, v: 1.0, c: 12.225, strip_valid: true, nk: 0 };
        assert!((gap_bound(&k, 40, 0.0) - 12.225 * (-24f64).exp()).abs() < 1e-20);
        assert!((gap_bound(&k, 40, 40.0) - 12.225).abs() < 1e-12);
    }

    #[test]
    fn finite_bounds_shapes() {
        let k = LRConstants { kappa: 0.6, v: 1.0, c: 12.225, strip_valid: true, nk: 0 };
        let (_, f) = finite_size_bounds(&k, 10, 20, 3.0).unwrap();
        assert_eq!(f, 0.0);
        assert!(finite_size_bounds(&k, 10, 10, 0.0).is_err());
        let (s_far, _) = finite_size_bounds(&k, 10, 400, 3.0).unwrap();
        assert!(s_far < 1e-90);
    }

    #[test]
    fn ssh_velocities() {
        let r = group_velocities(&ssh(1.0, 0.5)).unwrap();
        assert!((r.v_max - 0.5).abs() < 1e-6, "{}", r.v_max);
        assert!((r.v_mr - 1.0).abs() < 1e-6, "{}", r.v_mr);
    }

    #[test]
    fn strip_for_ssh_quench() {
        let k = continuation_strip_with(&ssh(0.5, 1.0), &ssh(1.0, 0.5), 1.0, 32, 128).unwrap();
        assert!(k < 2f64.ln() && k > 0.6, "{k}");
        assert!(matches!(
            continuation_strip_with(&ssh(1.0, 1.0), &ssh(1.0, 0.5), 1.0, 8, 64),
            Err(Error::NoValidStrip)
        ));
    }

    #[test]
    fn kernel_normalization_and_fourier() {
        let (k1, k2) = (0.6, 0.3);
        let n = 4000;
        let h = TWO_PI / n as f64;
        let ks: Vec<f64> = (0..n).map(|i| -std::f64::consts::PI + h * i as f64).collect();
        let mass: f64 = ks.iter().map(|&k| majorization_kernel(k, k1, k2, 6)).sum::<f64>() * h;
        assert!((mass - 1.0).abs() < 1e-6, "{mass}");
        for m in 1..4 {
            let coef: f64 = ks.iter().map(|&k| majorization_kernel(k, k1, k2, 6) * (m as f64 * k).cos()).sum::<f64>() * h;
            assert!((coef - majorization_fourier(m, k1, k2)).abs() < 1e-6);
        }
        let zero = majorization_kernel(0.0, k1, 0.0, 0);
        assert!((zero - std::f64::consts::PI / (4.0 * k1)).abs() < 1e-14);
    }

    #[test]
    fn harmonic_sinusoid() {
        let n = 64;
        let b: Vec<f64> = (0..n).map(|j| (TWO_PI * j as f64 / n as f64).sin()).collect();
        let r = discrete_harmonic_check(&b, 9).unwrap();
        assert!(r.increments_monotone && r.normalized_max_monotone);
        let z = discrete_harmonic_check(&vec![0.0; 10], 5).unwrap();
        assert!(z.rows.iter().flatten().all(|&x| x == 0.0));
    }

    #[test]
    fn ssh_prefactor_and_velocity() {
        let k = lr_constants(&ssh(0.5, 1.0), &ssh(1.0, 0.5), 0.6).unwrap();
        // operator-norm definition; frozen from an independent closed-form quadrature
        assert!((k.c - 5.7785).abs() < 1e-3, "{}", k.c);
        let v_small = lr_velocity(&ssh(1.0, 0.5), 1e-3).unwrap();
        assert!((v_small - 1.0).abs() < 0.02, "{v_small}");
    }
}
