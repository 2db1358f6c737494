//! Minimal polynomials, Blaschke products, convergence bounds for channel powers,
//! and the many-body gap bounds built from them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{c, cluster_complex, general_eig, golden_max, mat_pow, numerical_rank, spectral_norm, CMat, C64};
use crate::tensornet::TransferChannel;

const E2: f64 = std::f64::consts::E * std::f64::consts::E;
/// Points of the dense circle scan before golden refinement.
pub const CIRCLE_POINTS: usize = 720;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MinimalPolynomial {
    pub roots: Vec<(f64, f64)>,
    pub jordan_sizes: Vec<usize>,
    pub residual: f64,
}

impl MinimalPolynomial {
    pub fn degree(&self) -> usize {
        self.jordan_sizes.iter().sum()
    }

    pub fn root(&self, j: usize) -> C64 {
        c(self.roots[j].0, self.roots[j].1)
    }

    pub fn radius(&self) -> f64 {
        (0..self.roots.len()).map(|j| self.root(j).norm()).fold(0.0, f64::max)
    }

    /// m(M) = prod (M - mu_j)^{s_j}.
    pub fn evaluate(&self, m: &CMat) -> CMat {
        let n = m.nrows();
        let mut out = CMat::identity(n, n);
        for (j, &s) in self.jordan_sizes.iter().enumerate() {
            let shifted = m - CMat::identity(n, n) * self.root(j);
            out *= mat_pow(&shifted, s);
        }
        out
    }
}

pub fn minimal_polynomial(m: &CMat) -> Result<MinimalPolynomial> {
    let n = m.nrows();
    let norm = spectral_norm(m);
    if norm == 0.0 {
        return Ok(MinimalPolynomial { roots: vec![(0.0, 0.0)], jordan_sizes: vec![1], residual: 0.0 });
    }
    let eig = general_eig(m);
    let tol = 1e-8 * norm.max(1.0);
    let groups = cluster_complex(&eig.values, tol);
    let mut roots = Vec::new();
    let mut sizes = Vec::new();
    for g in &groups {
        let mu = g.iter().map(|&i| eig.values[i]).sum::<C64>() / c(g.len() as f64, 0.0);
        let a = m - CMat::identity(n, n) * mu;
        // index of the eigenvalue: first s where the rank of a^s stops dropping
        let mut s = 1;
        let mut prev = numerical_rank(&a, tol);
        let mut pw = a.clone();
        while s < g.len() {
            pw = &pw * &a;
            let r = numerical_rank(&pw, tol.max(1e-8 * spectral_norm(&pw)));
            if r == prev {
                break;
            }
            prev = r;
            s += 1;
        }
        roots.push(mu);
        sizes.push(s);
    }
    let mut mp = MinimalPolynomial {
        roots: roots.iter().map(|z| (z.re, z.im)).collect(),
        jordan_sizes: sizes,
        residual: 0.0,
    };
    let deg = mp.degree() as i32;
    mp.residual = spectral_norm(&mp.evaluate(m));
    if mp.residual >= 1e-6 * norm.powi(deg).max(1e-300) && mp.residual > 1e-12 {
        return Err(Error::VerificationFailure(mp.residual));
    }
    Ok(mp)
}

pub fn blaschke(z: C64, m: &MinimalPolynomial) -> Result<C64> {
    let mut out = c(1.0, 0.0);
    for (j, &s) in m.jordan_sizes.iter().enumerate() {
        let mu = m.root(j);
        let den = c(1.0, 0.0) - mu.conj() * z;
        if den.norm() < 1e-14 {
            return Err(Error::PoleHit);
        }
        out *= ((z - mu) / den).powu(s as u32);
    }
    Ok(out)
}

/// sup over |z| = r of ln|1/B(z)|, by a dense scan refined by golden section.
pub fn log_sup_inverse_blaschke(r: f64, m: &MinimalPolynomial) -> f64 {
    let f = |phi: f64| -> f64 {
        let z = C64::from_polar(r, phi);
        match blaschke(z, m) {
            Ok(b) => -b.norm().ln(),
            Err(_) => f64::INFINITY,
        }
    };
    let step = 2.0 * std::f64::consts::PI / CIRCLE_POINTS as f64;
    let (mut best_phi, mut best) = (0.0, f64::NEG_INFINITY);
    for i in 0..CIRCLE_POINTS {
        let phi = i as f64 * step;
        let v = f(phi);
        if v > best {
            best = v;
            best_phi = phi;
        }
    }
    let (_, refined) = golden_max(f, best_phi - step, best_phi + step, 60);
    best.max(refined)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundMode {
    Sharp,
    WorstCase,
}

/// Upper bound on ||E^l - E^infinity|| from the minimal polynomial of E - E^infinity.
pub fn convergence_bound(l: usize, m: &MinimalPolynomial, cc: f64, mode: BoundMode) -> Result<f64> {
    let mu = m.radius();
    let deg = m.degree() as f64;
    let lf = l as f64;
    if mu < 1e-15 {
        return if l >= m.degree() {
            Ok(0.0)
        } else {
            Err(Error::ValidityViolated(format!("l = {l} below nilpotency degree {}", m.degree())))
        };
    }
    if mu >= 1.0 {
        return Err(Error::ValidityViolated(format!("spectral radius {mu} not below one")));
    }
    let pre = (4.0 * E2 * cc * deg.sqrt() * (deg + 1.0)).ln();
    match mode {
        BoundMode::Sharp => {
            if lf <= mu / (1.0 - mu) {
                return Err(Error::ValidityViolated(format!("need l > mu/(1-mu), l = {l}, mu = {mu}")));
            }
            let r = (1.0 + 1.0 / lf) * mu;
            let log = (lf + 1.0) * mu.ln() + pre - lf.ln() - 1.5 * (1.0 - r).ln() + log_sup_inverse_blaschke(r, m);
            Ok(log.exp())
        }
        BoundMode::WorstCase => {
            if lf < (1.0 + mu) / (1.0 - mu) {
                return Err(Error::ValidityViolated(format!("need l >= (1+mu)/(1-mu), l = {l}, mu = {mu}")));
            }
            let log = pre + 1.5 * ((1.0 + mu) / (1.0 - mu)).ln() + (deg - 1.0) * ((1.0 - mu * mu) / mu * lf).ln() + lf * mu.ln();
            Ok(log.exp())
        }
    }
}

/// ||E^l - E^infinity|| as a spectral norm in the Hilbert-Schmidt representation.
///
/// For l >= 1 this is evaluated as ||(E - E^infinity)^l||, which is the same operator but avoids
/// the cancellation that floors the direct difference near 1e-16.
pub fn channel_distance(ch: &TransferChannel, l: usize) -> f64 {
    let inf = ch.infinity();
    if l == 0 {
        let n = inf.nrows();
        return spectral_norm(&(CMat::identity(n, n) - inf));
    }
    spectral_norm(&mat_pow(&(&ch.matrix - inf), l))
}

/// Rank-one limit r l^dagger of a matrix with a simple leading eigenvalue one.
pub fn limit_projector(t: &CMat) -> CMat {
    let eig = general_eig(t);
    let lead = (0..eig.values.len())
        .max_by(|&a, &b| eig.values[a].norm().total_cmp(&eig.values[b].norm()))
        .unwrap_or(0);
    let r = eig.right_vectors.column(lead).into_owned();
    let l = eig.left_vectors.column(lead).into_owned();
    &r * l.adjoint()
}

/// sup_n ||E^n|| estimated as max over n <= n_max plus the remaining distance to the limit.
pub fn power_sup_norm(t: &CMat, n_max: usize) -> f64 {
    let inf = limit_projector(t);
    let mut p = CMat::identity(t.nrows(), t.ncols());
    let mut best: f64 = 1.0;
    for _ in 0..n_max {
        p = &p * t;
        best = best.max(spectral_norm(&p));
    }
    best + spectral_norm(&(p - inf))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundInputs {
    /// Bond dimension D of the initial MPS.
    pub bond: usize,
    /// MPU bond dimension D_U.
    pub mpu_bond: usize,
    pub mu: f64,
    pub k0: usize,
    pub l: usize,
    pub t: usize,
    /// Ring length, if finite.
    pub ring: Option<usize>,
    /// Tr E^L for the ring; computed by the caller from the initial channel.
    pub trace_power: Option<f64>,
}

fn check_inputs(b: &BoundInputs) -> Result<()> {
    if b.bond < 1 || b.mpu_bond < 1 || b.k0 < 1 || b.l < 1 {
        return Err(Error::InvalidParameter("bond dimensions, k0 and l must be positive".into()));
    }
    if !(0.0..1.0).contains(&b.mu) {
        return Err(Error::InvalidParameter(format!("mu = {} outside [0, 1)", b.mu)));
    }
    Ok(())
}

fn effective_length(len: usize, b: &BoundInputs) -> Result<f64> {
    let eff = len as f64 - 2.0 * (b.k0 * b.t) as f64;
    if eff < (1.0 + b.mu) / (1.0 - b.mu) {
        return Err(Error::ValidityViolated(format!("length {len} - 2 k0 t = {eff} below (1+mu)/(1-mu)")));
    }
    Ok(eff)
}

/// Infinite-chain many-body gap bound C (l - 2 k0 t)^{D^2-1} e^{-kappa (l - v t)}.
pub fn thm2_bound(b: &BoundInputs) -> Result<f64> {
    check_inputs(b)?;
    let eff = effective_length(b.l, b)?;
    let d2 = (b.bond * b.bond) as f64;
    if b.mu == 0.0 {
        return if eff >= d2 { Ok(0.0) } else { Err(Error::ValidityViolated("mu = 0 needs l - 2 k0 t >= D^2".into())) };
    }
    let mu = b.mu;
    let kappa = -mu.ln();
    let v = 2.0 * b.k0 as f64 - (b.mpu_bond as f64).ln() / mu.ln();
    let log_c = (4.0 * E2 * d2 * (d2 + 1.0)).ln() + (1.0 - d2) * mu.ln() + (d2 + 0.5) * (1.0 + mu).ln() + (d2 - 2.5) * (1.0 - mu).ln();
    let log = log_c + (d2 - 1.0) * eff.ln() - kappa * (b.l as f64 - v * b.t as f64);
    Ok(log.exp())
}

fn b_alpha(alpha: f64, len: usize, b: &BoundInputs) -> Result<f64> {
    let eff = effective_length(len, b)?;
    let d = b.bond as f64;
    let d2 = d * d;
    if b.mu == 0.0 {
        return if eff >= d2 { Ok(0.0) } else { Err(Error::ValidityViolated("mu = 0 needs length - 2 k0 t >= D^2".into())) };
    }
    let mu = b.mu;
    let xi = -1.0 / mu.ln();
    let v = 2.0 * b.k0 as f64 - (alpha + 0.5) * (b.mpu_bond as f64).ln() / mu.ln();
    let log_c = E2.ln() + (2.5 - alpha) * 2f64.ln() + (1.5 + alpha) * d.ln() + (d2 + 1.0).ln() + (1.0 - d2) * mu.ln()
        + (d2 + 0.5) * (1.0 + mu).ln()
        + (d2 - 2.5) * (1.0 - mu).ln();
    Ok((log_c + (d2 - 1.0) * eff.ln() - (len as f64 - v * b.t as f64) / xi).exp())
}

/// Finite-ring many-body gap bound.
pub fn finite_thm_bound(b: &BoundInputs) -> Result<f64> {
    check_inputs(b)?;
    let ring = b.ring.ok_or_else(|| Error::InvalidParameter("ring length required".into()))?;
    if b.l >= ring {
        return Err(Error::InvalidGeometry(format!("l = {} not below L = {ring}", b.l)));
    }
    let rest = ring - b.l;
    let tr = b.trace_power.unwrap_or(1.0);
    let first = b_alpha(0.5, b.l, b)? + b_alpha(0.75, rest, b)?;
    let second = b_alpha(0.5, rest, b)? + b_alpha(0.75, b.l, b)?;
    let cross = 4.0 * b_alpha(1.0, b.l, b)? * b_alpha(1.0, rest, b)?;
    Ok((first.min(second) + cross) / tr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{ginibre, stream};
    use crate::tensornet::{canonicalize, transfer_analysis, UniformMPS};

    fn z2z2(p: f64) -> UniformMPS {
        UniformMPS::new(vec![
            CMat::identity(2, 2) * c(1.0 - p, 0.0),
            crate::numerics::pauli_x() * c((p * (1.0 - p)).sqrt(), 0.0),
            crate::numerics::pauli_y() * c(0.0, (p * (1.0 - p)).sqrt()),
            crate::numerics::pauli_z() * c(p, 0.0),
        ])
        .unwrap()
    }

    #[test]
    fn minpoly_examples() {
        let j = CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        let m = minimal_polynomial(&j).unwrap();
        assert_eq!(m.jordan_sizes, vec![2]);
        let ch = transfer_analysis(&z2z2(0.49)).unwrap();
        let m = minimal_polynomial(&(&ch.matrix - ch.infinity())).unwrap();
        assert_eq!(m.degree(), 3);
        assert!((m.radius() - 0.02).abs() < 1e-12);
    }

    #[test]
    fn blaschke_modulus() {
        let m = MinimalPolynomial { roots: vec![(0.3, 0.1), (0.0, 0.0)], jordan_sizes: vec![1, 2], residual: 0.0 };
        for k in 0..10 {
            let z = C64::from_polar(1.0, k as f64 * 0.7);
            assert!((blaschke(z, &m).unwrap().norm() - 1.0).abs() < 1e-10);
        }
        assert!(blaschke(c(0.3, 0.1), &m).unwrap().norm() < 1e-15);
    }

    #[test]
    fn bounds_dominate_random_channels() {
        let mut rng = stream(4, "chan", 0);
        for trial in 0..6 {
            let dim = 2 + trial % 3;
            let a: Vec<CMat> = (0..2).map(|_| ginibre(&mut rng, dim, dim)).collect();
            let mps = canonicalize(&UniformMPS::new(a).unwrap()).unwrap();
            let ch = transfer_analysis(&mps).unwrap();
            let m = minimal_polynomial(&(&ch.matrix - ch.infinity())).unwrap();
            let cc = power_sup_norm(&ch.matrix, 200);
            for l in 1..=50 {
                let dist = channel_distance(&ch, l);
                if let Ok(b) = convergence_bound(l, &m, cc, BoundMode::Sharp) {
                    assert!(b + 1e-12 >= dist, "sharp l={l} {b} < {dist}");
                }
                if let Ok(b) = convergence_bound(l, &m, cc, BoundMode::WorstCase) {
                    assert!(b + 1e-12 >= dist, "worst l={l} {b} < {dist}");
                }
            }
        }
    }

    #[test]
    fn thm2_examples() {
        let b = BoundInputs { bond: 2, mpu_bond: 4, mu: 0.02, k0: 1, l: 20, t: 3, ring: None, trace_power: None };
        let v = thm2_bound(&b).unwrap();
        assert!(v.is_finite() && v > 0.0);
        let bad = BoundInputs { l: 7, ..b.clone() };
        assert!(matches!(thm2_bound(&bad), Err(Error::ValidityViolated(_))));
        let ok = BoundInputs { l: 8, ..b.clone() };
        assert!(thm2_bound(&ok).is_ok());
        let zero = BoundInputs { mu: 0.0, l: 10, ..b.clone() };
        assert_eq!(thm2_bound(&zero).unwrap(), 0.0);
        let sym = BoundInputs { l: 20, ring: Some(40), trace_power: Some(1.0), ..b };
        assert!(finite_thm_bound(&sym).unwrap() > 0.0);
    }
}
