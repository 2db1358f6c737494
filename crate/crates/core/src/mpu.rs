//! Matrix-product unitaries on rings: validation, blocking, simpleness length, action on MPS.
//!
//! A tensor is stored as d^2 bond matrices, `tensors[j * d + jp]` = U_{j jp}, and the
//! ring operator is sum Tr(U_{j1 j1'} ... U_{jL jL'}) |j1..jL><j1'..jL'|.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{c, general_eig, herm_eigvals, mat_pow, max_abs, spectral_norm, svd, unvectorize, CMat, CVec, C64};
use crate::tensornet::UniformMPS;

/// Largest number of stored entries allowed for a blocked tensor.
pub const BLOCK_BUDGET: usize = 1 << 24;
/// Largest Hilbert-space dimension for dense ring checks.
pub const DENSE_LIMIT: usize = 4096;

#[derive(Debug, Clone)]
pub struct MPUTensor {
    pub d: usize,
    pub bond: usize,
    pub tensors: Vec<CMat>,
    /// Right fixed point of the channel, Hermitian, trace one.
    pub rho: CMat,
    pub validated: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    /// max_k |Tr E_U^k - 1| for k = 1..D_U^2.
    pub channel_residual: f64,
    /// (L, ||U^dagger U - 1||_max) per dense length.
    pub dense_residuals: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimplenessCertificate {
    pub k: usize,
    pub residual: f64,
    pub mirrored_residual: f64,
}

impl MPUTensor {
    pub fn new(d: usize, tensors: Vec<CMat>) -> Result<Self> {
        if d == 0 || tensors.len() != d * d {
            return Err(Error::DimensionMismatch(format!("expected {} bond matrices, got {}", d * d, tensors.len())));
        }
        let bond = tensors[0].nrows();
        for t in &tensors {
            if t.shape() != (bond, bond) {
                return Err(Error::DimensionMismatch("bond matrices differ in shape".into()));
            }
            if t.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::NonFinite);
            }
        }
        let mut m = MPUTensor { d, bond, tensors, rho: CMat::zeros(bond, bond), validated: false };
        m.rho = m.fixed_points().0;
        Ok(m)
    }

    pub fn at(&self, j: usize, jp: usize) -> &CMat {
        &self.tensors[j * self.d + jp]
    }

    /// Matrix of X -> d^-1 sum U_{jj'} X U_{jj'}^dagger (column-stacking).
    pub fn channel(&self) -> CMat {
        let dd = self.bond * self.bond;
        let mut e = CMat::zeros(dd, dd);
        for t in &self.tensors {
            e += t.conjugate().kronecker(t);
        }
        e / c(self.d as f64, 0.0)
    }

    /// (rho, left) with E(rho) = rho, left^dagger E = left^dagger, Tr rho = 1, <left, rho> = 1.
    pub fn fixed_points(&self) -> (CMat, CMat) {
        let e = self.channel();
        let eig = general_eig(&e);
        let lead = (0..eig.values.len())
            .max_by(|&a, &b| eig.values[a].norm().total_cmp(&eig.values[b].norm()))
            .unwrap_or(0);
        let r = unvectorize(&eig.right_vectors.column(lead).into_owned(), self.bond);
        let l = unvectorize(&eig.left_vectors.column(lead).into_owned(), self.bond);
        let tr = r.trace();
        let r = if tr.norm() > 1e-300 { r / tr } else { r };
        let r = (&r + r.adjoint()) * c(0.5, 0.0);
        // <l|r> = Tr(l^dagger r)
        let ov = (l.adjoint() * &r).trace();
        let l = if ov.norm() > 1e-300 { l / ov.conj() } else { l };
        (r, l)
    }

    /// Dense ring operator on `sites` sites, first site most significant.
    pub fn dense(&self, sites: usize) -> Result<CMat> {
        let dim = checked_pow(self.d, sites)?;
        if dim > DENSE_LIMIT {
            return Err(Error::SizeOverflow(format!("d^L = {dim} exceeds {DENSE_LIMIT}")));
        }
        let mut out = CMat::zeros(dim, dim);
        let id = CMat::identity(self.bond, self.bond);
        self.fill_dense(&id, sites, 0, 0, &mut out);
        Ok(out)
    }

    fn fill_dense(&self, prefix: &CMat, remaining: usize, row: usize, col: usize, out: &mut CMat) {
        if remaining == 0 {
            out[(row, col)] = prefix.trace();
            return;
        }
        for j in 0..self.d {
            for jp in 0..self.d {
                let next = prefix * self.at(j, jp);
                if next.iter().all(|z| z.norm() == 0.0) {
                    continue;
                }
                self.fill_dense(&next, remaining - 1, row * self.d + j, col * self.d + jp, out);
            }
        }
    }

    pub fn validate(&self, dense_lengths: &[usize]) -> Result<ValidationReport> {
        let e = self.channel();
        let mut power = e.clone();
        let mut channel_residual: f64 = 0.0;
        for k in 1..=(self.bond * self.bond).max(1) {
            if k > 1 {
                power = &power * &e;
            }
            channel_residual = channel_residual.max((power.trace() - c(1.0, 0.0)).norm());
        }
        if channel_residual > 1e-8 {
            return Err(Error::NotUnitary(format!("channel spectrum is not {{1,0,..}}: trace-power residual {channel_residual:.3e}")));
        }
        let mut dense_residuals = Vec::new();
        for &l in dense_lengths {
            let u = self.dense(l)?;
            let n = u.nrows();
            let res = max_abs(&(u.adjoint() * &u - CMat::identity(n, n)));
            if res > 1e-10 {
                return Err(Error::NotUnitary(format!("dense U^dagger U on L = {l}: residual {res:.3e}")));
            }
            dense_residuals.push((l, res));
        }
        Ok(ValidationReport { channel_residual, dense_residuals })
    }

    pub fn validated(mut self, dense_lengths: &[usize]) -> Result<Self> {
        self.validate(dense_lengths)?;
        self.validated = true;
        Ok(self)
    }

    /// Merge k consecutive sites into one.
    pub fn block(&self, k: usize) -> Result<MPUTensor> {
        if k == 0 {
            return Err(Error::InvalidParameter("block size 0".into()));
        }
        let dk = checked_pow(self.d, k)?;
        let entries = dk.checked_mul(dk).and_then(|x| x.checked_mul(self.bond * self.bond));
        match entries {
            Some(n) if n <= BLOCK_BUDGET => {}
            _ => return Err(Error::SizeOverflow(format!("blocking {k} sites of dimension {}", self.d))),
        }
        let mut tensors = vec![CMat::zeros(self.bond, self.bond); dk * dk];
        for j in 0..dk {
            for jp in 0..dk {
                let mut m = CMat::identity(self.bond, self.bond);
                for s in (0..k).rev() {
                    let p = self.d.pow(s as u32);
                    m = m * self.at((j / p) % self.d, (jp / p) % self.d);
                }
                tensors[j * dk + jp] = m;
            }
        }
        let mut out = MPUTensor::new(dk, tensors)?;
        out.validated = self.validated;
        Ok(out)
    }

    /// Doubled tensors Y_{a b} = sum_j conj(U_{j a}) (x) U_{j b} (U^dagger U order) or, mirrored,
    /// sum_j conj(U_{a j}) (x) U_{b j} (U U^dagger order).
    fn doubled(&self, mirrored: bool) -> Vec<CMat> {
        let dd = self.bond * self.bond;
        let mut out = vec![CMat::zeros(dd, dd); self.d * self.d];
        for a in 0..self.d {
            for b in 0..self.d {
                let mut y = CMat::zeros(dd, dd);
                for j in 0..self.d {
                    let (ua, ub) = if mirrored { (self.at(a, j), self.at(b, j)) } else { (self.at(j, a), self.at(j, b)) };
                    y += ua.conjugate().kronecker(ub);
                }
                out[a * self.d + b] = y;
            }
        }
        out
    }

    /// Relative Frobenius residual of Y1 Y2 = Y1 |rho><left| Y2 over all physical indices.
    pub fn simpleness_residual(&self, mirrored: bool) -> f64 {
        let (r, l) = self.fixed_points();
        let rv = crate::numerics::vectorize(&r);
        let lv = crate::numerics::vectorize(&l);
        let proj = &rv * lv.adjoint();
        let ys = self.doubled(mirrored);
        let mut num = 0.0;
        let mut den = 0.0;
        let left: Vec<CMat> = ys.iter().map(|y| y * &proj).collect();
        for (y1, y1p) in ys.iter().zip(&left) {
            for y2 in &ys {
                let full = y1 * y2;
                let fac = y1p * y2;
                num += (&full - fac).norm_squared();
                den += full.norm_squared();
            }
        }
        if den == 0.0 {
            return 0.0;
        }
        (num / den).sqrt()
    }

    /// Smallest blocking k <= k_max for which both orientations of the factorization hold.
    pub fn simpleness_k0(&self, k_max: usize) -> Result<(usize, Vec<SimplenessCertificate>)> {
        let mut certs = Vec::new();
        for k in 1..=k_max {
            let b = self.block(k)?;
            let residual = b.simpleness_residual(false);
            let mirrored_residual = b.simpleness_residual(true);
            certs.push(SimplenessCertificate { k, residual, mirrored_residual });
            if residual < 1e-10 && mirrored_residual < 1e-10 {
                return Ok((k, certs));
            }
        }
        Err(Error::NotSimpleWithin(k_max))
    }

    /// A'_j = sum_j' U_{jj'} (x) A_j', virtual order (MPU bond, MPS bond). Not re-canonicalized.
    pub fn apply_raw(&self, mps: &UniformMPS) -> Result<UniformMPS> {
        if mps.d != self.d {
            return Err(Error::DimensionMismatch(format!("MPU d = {}, MPS d = {}", self.d, mps.d)));
        }
        let mut tensors = Vec::with_capacity(self.d);
        for j in 0..self.d {
            let mut a = CMat::zeros(self.bond * mps.bond, self.bond * mps.bond);
            for jp in 0..self.d {
                a += self.at(j, jp).kronecker(&mps.tensors[jp]);
            }
            tensors.push(a);
        }
        UniformMPS::new(tensors)
    }

    pub fn apply(&self, mps: &UniformMPS) -> Result<UniformMPS> {
        crate::tensornet::canonicalize(&self.apply_raw(mps)?)
    }

    /// Dense check that rho_g^{(x)L} commutes with the ring operator.
    pub fn symmetry_residual(&self, rho_g: &CMat, sites: usize) -> Result<f64> {
        let u = self.dense(sites)?;
        let mut g = CMat::identity(1, 1);
        for _ in 0..sites {
            g = g.kronecker(rho_g);
        }
        Ok(max_abs(&(&g * &u - &u * &g)))
    }
}

fn checked_pow(d: usize, n: usize) -> Result<usize> {
    d.checked_pow(n as u32).ok_or_else(|| Error::SizeOverflow(format!("{d}^{n}")))
}

/// Bilayer circuit on sites of two q-level halves (a, b): u acts inside each site,
/// then v acts on (b of site s, a of site s+1). Bond dimension is the operator Schmidt rank of v.
pub fn bilayer_circuit(q: usize, u: &CMat, v: &CMat) -> Result<MPUTensor> {
    let d = q * q;
    if u.shape() != (d, d) || v.shape() != (d, d) {
        return Err(Error::DimensionMismatch("gates must be q^2 x q^2".into()));
    }
    // v_{(b a),(b' a')} -> matrix over ((b b'), (a a'))
    let resh = CMat::from_fn(d, d, |r, col| {
        let (b, bp) = (r / q, r % q);
        let (a, ap) = (col / q, col % q);
        v[(b * q + a, bp * q + ap)]
    });
    let s = svd(&resh)?;
    let smax = s.singular_values.first().cloned().unwrap_or(0.0);
    let rank = s.singular_values.iter().filter(|&&x| x > 1e-12 * smax).count();
    let left: Vec<CMat> = (0..rank)
        .map(|k| {
            let w = s.singular_values[k].sqrt();
            CMat::from_fn(q, q, |b, bp| s.u[(b * q + bp, k)] * w)
        })
        .collect();
    let right: Vec<CMat> = (0..rank)
        .map(|k| {
            let w = s.singular_values[k].sqrt();
            CMat::from_fn(q, q, |a, ap| s.v[(a * q + ap, k)].conj() * w)
        })
        .collect();
    let mut tensors = vec![CMat::zeros(rank, rank); d * d];
    for alpha in 0..rank {
        for beta in 0..rank {
            // operator on site (a, b): right[alpha] on a, left[beta] on b, after u
            let site = right[alpha].kronecker(&left[beta]) * u;
            for j in 0..d {
                for jp in 0..d {
                    tensors[j * d + jp][(alpha, beta)] = site[(j, jp)];
                }
            }
        }
    }
    MPUTensor::new(d, tensors)
}

/// Commuting phase gates followed by an on-site unitary w.
///
/// Site state x passes the label `label[x]` to the right neighbour, which then acquires
/// the phase `phase[label][y]` in its own state y. Bond dimension is the number of labels.
pub fn phase_gate_mpu(w: &CMat, label: &[usize], phase: &[Vec<f64>]) -> Result<MPUTensor> {
    let d = w.nrows();
    let bond = phase.len();
    if label.len() != d || phase.iter().any(|p| p.len() != d) || label.iter().any(|&x| x >= bond) {
        return Err(Error::DimensionMismatch("phase table does not fit".into()));
    }
    let mut tensors = vec![CMat::zeros(bond, bond); d * d];
    for j in 0..d {
        for jp in 0..d {
            for alpha in 0..bond {
                let ph = C64::from_polar(1.0, phase[alpha][jp]);
                tensors[j * d + jp][(alpha, label[jp])] = w[(j, jp)] * ph;
            }
        }
    }
    MPUTensor::new(d, tensors)
}

/// Keep the listed sites (ascending) of an operator on `sites` qudits and trace out the rest.
pub fn partial_trace_keep(op: &CMat, d: usize, sites: usize, keep: &[usize]) -> CMat {
    let dk = d.pow(keep.len() as u32);
    let rest: Vec<usize> = (0..sites).filter(|s| !keep.contains(s)).collect();
    let dr = d.pow(rest.len() as u32);
    let compose = |k: usize, r: usize| -> usize {
        let mut idx = 0;
        for s in 0..sites {
            let digit = if let Some(p) = keep.iter().position(|&x| x == s) {
                (k / d.pow((keep.len() - 1 - p) as u32)) % d
            } else {
                let p = rest.iter().position(|&x| x == s).unwrap();
                (r / d.pow((rest.len() - 1 - p) as u32)) % d
            };
            idx = idx * d + digit;
        }
        idx
    };
    let mut out = CMat::zeros(dk, dk);
    for k1 in 0..dk {
        for k2 in 0..dk {
            let mut acc = c(0.0, 0.0);
            for r in 0..dr {
                acc += op[(compose(k1, r), compose(k2, r))];
            }
            out[(k1, k2)] = acc;
        }
    }
    out
}

/// Support check for a conjugated single-site operator: max entry of O - O_W (x) 1 / d^{rest},
/// with O_W obtained by tracing out everything outside `window`.
pub fn outside_window_residual(op: &CMat, d: usize, sites: usize, window: &[usize]) -> f64 {
    let reduced = partial_trace_keep(op, d, sites, window);
    let rest = sites - window.len();
    let scale = 1.0 / d.pow(rest as u32) as f64;
    let mut worst: f64 = 0.0;
    let dim = op.nrows();
    let digits = |x: usize| -> Vec<usize> { (0..sites).map(|s| (x / d.pow((sites - 1 - s) as u32)) % d).collect() };
    for i in 0..dim {
        let di = digits(i);
        for j in 0..dim {
            let dj = digits(j);
            let outside_equal = (0..sites).filter(|s| !window.contains(s)).all(|s| di[s] == dj[s]);
            let expect = if outside_equal {
                let ki = window.iter().fold(0, |acc, &s| acc * d + di[s]);
                let kj = window.iter().fold(0, |acc, &s| acc * d + dj[s]);
                reduced[(ki, kj)] * scale
            } else {
                c(0.0, 0.0)
            };
            worst = worst.max((op[(i, j)] - expect).norm());
        }
    }
    worst
}

/// Embed a single-site operator at `site` on a chain of `sites` qudits.
pub fn embed_site(op: &CMat, d: usize, sites: usize, site: usize) -> CMat {
    let mut out = CMat::identity(1, 1);
    for s in 0..sites {
        out = if s == site { out.kronecker(op) } else { out.kronecker(&CMat::identity(d, d)) };
    }
    out
}

/// Reduced density matrix of the first `cut` sites of a pure state.
pub fn reduced_density(psi: &CVec, d: usize, sites: usize, cut: usize) -> CMat {
    let rows = d.pow(cut as u32);
    let cols = d.pow((sites - cut) as u32);
    let m = CMat::from_fn(rows, cols, |i, j| psi[i * cols + j]);
    &m * m.adjoint()
}

/// (||rho_S - rho'_S||, ||U - U'||) for states U psi0, U' psi0 cut after `cut` sites.
pub fn reduced_density_stability_check(u: &CMat, up: &CMat, psi0: &CVec, d: usize, cut: usize) -> Result<(f64, f64)> {
    let dim = u.nrows();
    let mut sites = 0;
    while d.pow(sites as u32) < dim {
        sites += 1;
    }
    if d.pow(sites as u32) != dim || up.shape() != u.shape() || psi0.len() != dim {
        return Err(Error::DimensionMismatch("dense operator sizes".into()));
    }
    if dim > DENSE_LIMIT {
        return Err(Error::SizeOverflow(format!("dimension {dim}")));
    }
    let n0 = psi0.norm();
    let psi = u * psi0 / c(n0, 0.0);
    let psip = up * psi0 / c(n0, 0.0);
    let diff = reduced_density(&psi, d, sites, cut) - reduced_density(&psip, d, sites, cut);
    let diff = (&diff + diff.adjoint()) * c(0.5, 0.0);
    let lhs = herm_eigvals(&diff)?.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok((lhs, spectral_norm(&(u - up))))
}

/// Power sums Tr(E^n), n = 1..count.
pub fn power_traces(e: &CMat, count: usize) -> Vec<C64> {
    (1..=count).map(|n| mat_pow(e, n).trace()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{kron, pauli_z};
    use crate::rng::{haar_unitary, random_hermitian, stream};
    use crate::tensornet::{canonicalize, projective_rep, transfer_analysis};

    fn identity_mpu(d: usize) -> MPUTensor {
        let tensors = (0..d * d)
            .map(|k| CMat::from_element(1, 1, c(if k / d == k % d { 1.0 } else { 0.0 }, 0.0)))
            .collect();
        MPUTensor::new(d, tensors).unwrap()
    }

    fn random_bilayer(seed: u64) -> MPUTensor {
        let mut s = stream(seed, "bilayer", 0);
        let u = haar_unitary(&mut s, 4);
        let v = haar_unitary(&mut s, 4);
        bilayer_circuit(2, &u, &v).unwrap()
    }

    fn qubit_phase_mpu(seed: u64) -> MPUTensor {
        let mut s = stream(seed, "phase", 0);
        let w = haar_unitary(&mut s, 2);
        let phase: Vec<Vec<f64>> = (0..2).map(|_| (0..2).map(|_| crate::rng::uniform(&mut s, -3.0, 3.0)).collect()).collect();
        phase_gate_mpu(&w, &[0, 1], &phase).unwrap()
    }

    #[test]
    fn identity_and_scaled() {
        let id = identity_mpu(2);
        id.validate(&[1, 2, 3]).unwrap();
        assert_eq!(id.simpleness_k0(3).unwrap().0, 1);
        let mut bad = random_bilayer(3);
        for t in &mut bad.tensors {
            *t *= c(1.1, 0.0);
        }
        assert!(matches!(bad.validate(&[2]), Err(Error::NotUnitary(_))));
    }

    #[test]
    fn bilayer_valid_and_simple() {
        let m = random_bilayer(11);
        assert_eq!(m.bond, 4);
        m.validate(&[1, 2, 3, 4]).unwrap();
        let b = m.block(2).unwrap();
        b.validate(&[1, 2]).unwrap();
        let (k0, _) = m.simpleness_k0(2).unwrap();
        assert!(k0 <= 2, "{k0}");
    }

    #[test]
    fn phase_mpu_spreading() {
        let m = qubit_phase_mpu(5);
        m.validate(&[2, 3, 4, 5]).unwrap();
        let (k0, _) = m.simpleness_k0(3).unwrap();
        let sites = 4 * k0 + 3;
        let u = m.dense(sites).unwrap();
        let mut s = stream(5, "op", 0);
        let o = random_hermitian(&mut s, 2);
        let centre = sites / 2;
        let op = &u * embed_site(&o, 2, sites, centre) * u.adjoint();
        let window: Vec<usize> = (centre - k0..=centre + k0).collect();
        assert!(outside_window_residual(&op, 2, sites, &window) < 1e-9);
        // a smaller window does not contain the support
        assert!(outside_window_residual(&op, 2, sites, &[centre]) > 1e-3);
    }

    #[test]
    fn apply_preserves_transfer_spectrum() {
        let p: f64 = 0.3;
        let q: f64 = 0.2;
        let mps = crate::tensornet::UniformMPS::new(vec![
            CMat::identity(2, 2) * c(((1.0 - p) * (1.0 - q)).sqrt(), 0.0),
            crate::numerics::pauli_x() * c((q * (1.0 - p)).sqrt(), 0.0),
            crate::numerics::pauli_y() * c(0.0, (p * (1.0 - q)).sqrt()),
            pauli_z() * c((p * q).sqrt(), 0.0),
        ])
        .unwrap();
        let m = random_bilayer(2);
        let out = m.apply_raw(&mps).unwrap();
        let before = power_traces(&mps.transfer_matrix(), 12);
        let after = power_traces(&out.transfer_matrix(), 12);
        for (a, b) in before.iter().zip(&after) {
            assert!((a - b).norm() < 1e-9, "{a} {b}");
        }
        let can = canonicalize(&out).unwrap();
        let mu0 = transfer_analysis(&mps).unwrap().mu;
        let mu1 = transfer_analysis(&can).unwrap().mu;
        assert!((mu0 - mu1).abs() < 1e-9);
    }

    #[test]
    fn symmetric_phase_mpu_keeps_class() {
        let p = 0.49;
        let mps = crate::tensornet::UniformMPS::new(vec![
            CMat::identity(2, 2) * c(1.0 - p, 0.0),
            crate::numerics::pauli_x() * c((p * (1.0 - p)).sqrt(), 0.0),
            crate::numerics::pauli_y() * c(0.0, (p * (1.0 - p)).sqrt()),
            pauli_z() * c(p, 0.0),
        ])
        .unwrap();
        let w = CMat::from_diagonal(&CVec::from_vec(vec![c(1.0, 0.0), C64::from_polar(1.0, 0.4), C64::from_polar(1.0, -1.1), C64::from_polar(1.0, 2.0)]));
        let m = phase_gate_mpu(&w, &[0, 1, 0, 1], &[vec![0.0, 0.3, -0.7, 1.2], vec![0.5, -0.2, 0.9, 0.0]]).unwrap();
        let za = kron(&pauli_z(), &CMat::identity(2, 2));
        let zb = kron(&CMat::identity(2, 2), &pauli_z());
        assert!(m.symmetry_residual(&za, 3).unwrap() < 1e-12);
        let out = m.apply(&mps).unwrap();
        assert_eq!(projective_rep(&out, &za, &zb, 2).unwrap().nu, 1);
    }

    #[test]
    fn stability_lemma() {
        let mut s = stream(9, "stab", 0);
        let u = haar_unitary(&mut s, 16);
        let h = random_hermitian(&mut s, 16);
        let up = &u * crate::numerics::evolution_operator(&h, 0.05).unwrap();
        let psi0 = CVec::from_fn(16, |_, _| c(crate::rng::normal(&mut s), crate::rng::normal(&mut s)));
        let (lhs, rhs) = reduced_density_stability_check(&u, &up, &psi0, 2, 2).unwrap();
        assert!(lhs <= rhs + 1e-10);
        let phase = &u * c(0.0, 1.0);
        let (lhs, rhs) = reduced_density_stability_check(&u, &phase, &psi0, 2, 2).unwrap();
        assert!(lhs < 1e-12 && rhs > 1.0);
    }
}
