//! Translation-invariant MPS: canonical form, transfer channel, entanglement spectra, virtual symmetry.
//!
//! Vectorization is column-stacking, vec(X)[a + D b] = X[a, b], so the channel
//! E(X) = sum_j A_j X A_j^dagger has matrix sum_j conj(A_j) (x) A_j.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{
    c, general_eig, herm_eig, herm_fn, mat_pow, max_abs, svd, unvectorize, vectorize, CMat, CVec, C64,
};
use crate::spectrum::{SpectrumReport, CLUSTER_TOL};

/// Relative threshold below which Gram eigenvalues count as zero.
pub const ZERO_DROP: f64 = 1e-12;
/// Relative width within which Lambda eigenvalues are treated as exactly degenerate.
pub const LAMBDA_SNAP: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct UniformMPS {
    pub d: usize,
    pub bond: usize,
    pub tensors: Vec<CMat>,
    pub canonical: bool,
}

impl UniformMPS {
    pub fn new(tensors: Vec<CMat>) -> Result<Self> {
        let d = tensors.len();
        if d == 0 {
            return Err(Error::InvalidParameter("no site tensors".into()));
        }
        let bond = tensors[0].nrows();
        for a in &tensors {
            if a.shape() != (bond, bond) {
                return Err(Error::DimensionMismatch(format!("tensor shape {:?}", a.shape())));
            }
            if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::NonFinite);
            }
        }
        let mut mps = UniformMPS { d, bond, tensors, canonical: false };
        mps.canonical = mps.unital_residual() < 1e-10;
        Ok(mps)
    }

    /// ||sum_j A_j A_j^dagger - 1||_max.
    pub fn unital_residual(&self) -> f64 {
        let mut s = CMat::zeros(self.bond, self.bond);
        for a in &self.tensors {
            s += a * a.adjoint();
        }
        max_abs(&(s - CMat::identity(self.bond, self.bond)))
    }

    pub fn transfer_matrix(&self) -> CMat {
        let dd = self.bond * self.bond;
        let mut t = CMat::zeros(dd, dd);
        for a in &self.tensors {
            t += a.conjugate().kronecker(a);
        }
        t
    }

    /// Basis change A_j -> W^dagger A_j W.
    pub fn gauge(&self, w: &CMat) -> UniformMPS {
        let winv = w.clone().try_inverse().expect("invertible gauge");
        let tensors = self.tensors.iter().map(|a| &winv * a * w).collect();
        UniformMPS { d: self.d, bond: self.bond, tensors, canonical: self.canonical }
    }

    /// Dense periodic state sum Tr(A_{s1} ... A_{sL}) |s1 ... sL>, first site most significant.
    pub fn dense_ring_state(&self, sites: usize) -> Result<CVec> {
        let dim = (self.d as u128).pow(sites as u32);
        if dim > 1 << 24 {
            return Err(Error::SizeOverflow(format!("d^L = {dim}")));
        }
        let mut out = CVec::zeros(dim as usize);
        let id = CMat::identity(self.bond, self.bond);
        fill_traces(&self.tensors, &id, sites, 0, &mut out);
        Ok(out)
    }
}

fn fill_traces(tensors: &[CMat], prefix: &CMat, remaining: usize, index: usize, out: &mut CVec) {
    if remaining == 0 {
        out[index] = prefix.trace();
        return;
    }
    let d = tensors.len();
    for (j, a) in tensors.iter().enumerate() {
        fill_traces(tensors, &(prefix * a), remaining - 1, index * d + j, out);
    }
}

fn sorted_by_modulus(values: &[C64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&i, &j| values[j].norm().total_cmp(&values[i].norm()));
    idx
}

/// Leading eigenpair of a transfer-type matrix; errors if the top modulus is not unique.
fn leading_fixed_point(t: &CMat, d: usize) -> Result<(C64, CMat)> {
    let e = general_eig(t);
    let order = sorted_by_modulus(&e.values);
    let top = e.values[order[0]];
    if order.len() > 1 {
        let second = e.values[order[1]].norm();
        if second >= top.norm() * (1.0 - 1e-8) {
            return Err(Error::NonInjective(format!(
                "leading transfer eigenvalues {:.3e} and {:.3e} not separated",
                top.norm(),
                second
            )));
        }
    }
    let v = e.right_vectors.column(order[0]).into_owned();
    Ok((top, hermitian_positive(&unvectorize(&v, d))))
}

/// Fix the arbitrary phase of an eigen-matrix so it is Hermitian with positive trace.
fn hermitian_positive(x: &CMat) -> CMat {
    let tr = x.trace();
    let phase = if tr.norm() > 1e-14 {
        tr / tr.norm()
    } else {
        let (i, _) = (0..x.nrows())
            .map(|i| (i, x[(i, i)].norm()))
            .fold((0, -1.0), |m, v| if v.1 > m.1 { v } else { m });
        x[(i, i)] / x[(i, i)].norm()
    };
    let y = x / phase;
    (&y + y.adjoint()) * c(0.5, 0.0)
}

fn restrict(mps: &UniformMPS, basis: &CMat) -> UniformMPS {
    let tensors = mps.tensors.iter().map(|a| basis.adjoint() * a * basis).collect();
    UniformMPS { d: mps.d, bond: basis.ncols(), tensors, canonical: false }
}

fn support(x: &CMat) -> Result<Option<CMat>> {
    let e = herm_eig(x)?;
    let max = e.values.iter().cloned().fold(0.0f64, |m, v| m.max(v.abs()));
    let keep: Vec<usize> = (0..e.values.len()).filter(|&i| e.values[i] > 1e-12 * max).collect();
    if keep.len() == e.values.len() {
        return Ok(None);
    }
    let mut b = CMat::zeros(x.nrows(), keep.len());
    for (col, &i) in keep.iter().enumerate() {
        b.set_column(col, &e.vectors.column(i));
    }
    Ok(Some(b))
}

/// Gauge to the unital form sum_j A_j A_j^dagger = 1, dropping virtual subspaces the fixed points do not see.
pub fn canonicalize(mps: &UniformMPS) -> Result<UniformMPS> {
    let mut cur = mps.clone();
    for _ in 0..16 {
        let t = cur.transfer_matrix();
        let (_, r) = leading_fixed_point(&t, cur.bond)?;
        if let Some(b) = support(&r)? {
            cur = restrict(&cur, &b);
            continue;
        }
        let (_, l) = leading_fixed_point(&t.adjoint(), cur.bond)?;
        if let Some(b) = support(&l)? {
            cur = restrict(&cur, &b);
            continue;
        }
        let (eta, r) = leading_fixed_point(&t, cur.bond)?;
        let eta = eta.re;
        let r_half = herm_fn(&r, |x| c(x.max(0.0).sqrt(), 0.0))?;
        let r_inv_half = herm_fn(&r, |x| c(1.0 / x.sqrt(), 0.0))?;
        let scale = c(1.0 / eta.sqrt(), 0.0);
        let tensors: Vec<CMat> = cur.tensors.iter().map(|a| &r_inv_half * a * &r_half * scale).collect();
        let out = UniformMPS::new(tensors)?;
        if out.unital_residual() > 1e-10 {
            return Err(Error::ConvergenceFailure(format!("unital residual {:.3e}", out.unital_residual())));
        }
        return Ok(out);
    }
    Err(Error::NonInjective("support compression did not settle".into()))
}

#[derive(Debug, Clone)]
pub struct TransferChannel {
    pub matrix: CMat,
    /// Descending by modulus.
    pub spectrum: Vec<C64>,
    pub mu: f64,
    /// Left fixed point, Hermitian, positive, trace one.
    pub lambda: CMat,
    /// Eigenvalues of Lambda, descending, with near-equal values snapped to their mean.
    pub lambda_values: Vec<f64>,
    /// Unitary whose columns diagonalize Lambda in the order of `lambda_values`.
    pub lambda_basis: CMat,
}

impl TransferChannel {
    /// Matrix of E^infinity(X) = Tr(Lambda X) 1.
    pub fn infinity(&self) -> CMat {
        let d = self.lambda.nrows();
        vectorize(&CMat::identity(d, d)) * vectorize(&self.lambda).adjoint()
    }
}

pub fn transfer_analysis(mps: &UniformMPS) -> Result<TransferChannel> {
    if !mps.canonical {
        return Err(Error::NonInjective("transfer analysis needs the unital gauge".into()));
    }
    let t = mps.transfer_matrix();
    let e = general_eig(&t);
    let order = sorted_by_modulus(&e.values);
    let spectrum: Vec<C64> = order.iter().map(|&i| e.values[i]).collect();
    if (spectrum[0] - c(1.0, 0.0)).norm() > 1e-8 {
        return Err(Error::NonInjective(format!("leading eigenvalue {}", spectrum[0])));
    }
    let mu = spectrum.get(1).map(|z| z.norm()).unwrap_or(0.0);
    if mu >= 1.0 - 1e-8 {
        return Err(Error::NonInjective(format!("subleading modulus {mu}")));
    }
    let (_, l) = leading_fixed_point(&t.adjoint(), mps.bond)?;
    let eig = herm_eig(&l)?;
    let neg = eig.values.iter().cloned().fold(0.0f64, f64::min);
    let total: f64 = eig.values.iter().map(|v| v.max(0.0)).sum();
    if neg < -1e-12 * total {
        return Err(Error::NonInjective(format!("fixed point has negative weight {neg:.3e}")));
    }
    let dim = mps.bond;
    let mut vals: Vec<f64> = eig.values.iter().map(|v| v.max(0.0) / total).collect();
    let mut basis = eig.vectors.clone();
    // descending order
    vals.reverse();
    let cols: Vec<usize> = (0..dim).rev().collect();
    basis = CMat::from_fn(dim, dim, |i, j| basis[(i, cols[j])]);
    snap_degenerate(&mut vals);
    let mut diag = CMat::zeros(dim, dim);
    for i in 0..dim {
        diag[(i, i)] = c(vals[i], 0.0);
    }
    let lambda = &basis * diag * basis.adjoint();
    Ok(TransferChannel { matrix: t, spectrum, mu, lambda, lambda_values: vals, lambda_basis: basis })
}

/// Replace runs of values within LAMBDA_SNAP (relative) by their mean; keeps the sum.
fn snap_degenerate(vals: &mut [f64]) {
    let mut start = 0;
    while start < vals.len() {
        let mut end = start + 1;
        while end < vals.len() && (vals[end - 1] - vals[end]).abs() <= LAMBDA_SNAP * vals[start].abs() {
            end += 1;
        }
        let mean = vals[start..end].iter().sum::<f64>() / (end - start) as f64;
        for v in &mut vals[start..end] {
            *v = mean;
        }
        start = end;
    }
}

/// Infinite-chain half cut: all products lambda_a lambda_b.
pub fn es_infinite(mps: &UniformMPS) -> Result<SpectrumReport> {
    let ch = transfer_analysis(mps)?;
    let mut vals = Vec::new();
    for a in &ch.lambda_values {
        for b in &ch.lambda_values {
            vals.push(a * b);
        }
    }
    Ok(SpectrumReport::from_values(vals, CLUSTER_TOL))
}

/// Canonical tensors rotated so that Lambda is diagonal, with the channel data.
fn lambda_frame(mps: &UniformMPS) -> Result<(UniformMPS, TransferChannel)> {
    let ch = transfer_analysis(mps)?;
    let rotated = mps.gauge(&ch.lambda_basis);
    let mut rotated = rotated;
    rotated.canonical = true;
    let mut ch2 = ch.clone();
    ch2.matrix = rotated.transfer_matrix();
    let dim = mps.bond;
    ch2.lambda = CMat::from_fn(dim, dim, |i, j| if i == j { c(ch.lambda_values[i], 0.0) } else { c(0.0, 0.0) });
    ch2.lambda_basis = CMat::identity(dim, dim);
    Ok((rotated, ch2))
}

/// (E - E^infinity)^l in the Lambda eigenbasis, by repeated squaring of the difference.
fn deviation_power(ch: &TransferChannel, l: usize) -> CMat {
    let n = &ch.matrix - ch.infinity();
    mat_pow(&n, l)
}

/// Segment of length l embedded in the infinite chain.
pub fn es_segment(mps: &UniformMPS, l: usize) -> Result<SpectrumReport> {
    if l == 0 {
        return Err(Error::InvalidGeometry("segment length 0".into()));
    }
    let (_, ch) = lambda_frame(mps)?;
    let nl = deviation_power(&ch, l);
    Ok(segment_from_power(&ch.lambda_values, &nl))
}

/// Same as `es_segment` with a caller-supplied (E - E^infinity)^l in the Lambda eigenbasis.
pub fn segment_from_power(lambda: &[f64], nl: &CMat) -> SpectrumReport {
    let dim = lambda.len();
    let dd = dim * dim;
    let pair = |a: usize, b: usize| a * dim + b;
    let mut p = CMat::zeros(dd, dd);
    let mut diag = vec![0.0; dd];
    for a in 0..dim {
        for b in 0..dim {
            diag[pair(a, b)] = lambda[a] * lambda[b];
            for ap in 0..dim {
                for bp in 0..dim {
                    let w = (lambda[a] * lambda[ap]).sqrt();
                    p[(pair(a, b), pair(ap, bp))] = nl[(ap + dim * a, bp + dim * b)] * w;
                }
            }
        }
    }
    let p = (&p + p.adjoint()) * c(0.5, 0.0);
    let mut m = p.clone();
    for i in 0..dd {
        m[(i, i)] += diag[i];
    }
    let vals = herm_eig(&m).map(|e| e.values).unwrap_or_default();
    let max = vals.iter().cloned().fold(0.0f64, f64::max);
    let kept: Vec<f64> = vals.into_iter().filter(|&v| v > ZERO_DROP * max).collect();
    let mut rep = SpectrumReport::from_values(kept, CLUSTER_TOL);
    rep.top_deviations = Some(top_cluster_deviations(&diag, &p));
    rep
}

/// Eigenvalue offsets of D + P inside the top exact-degenerate block of the diagonal D,
/// from the Schur complement S(delta) = P_cc + P_cr (zeta + delta - D_rr - P_rr)^{-1} P_rc.
fn top_cluster_deviations(diag: &[f64], p: &CMat) -> Vec<f64> {
    let top = diag.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let cl: Vec<usize> = (0..diag.len()).filter(|&i| (diag[i] - top).abs() <= LAMBDA_SNAP * top).collect();
    let rest: Vec<usize> = (0..diag.len()).filter(|i| !cl.contains(i)).collect();
    let sub = |rows: &[usize], cols: &[usize]| CMat::from_fn(rows.len(), cols.len(), |i, j| p[(rows[i], cols[j])]);
    let pcc = sub(&cl, &cl);
    let eigs = |s: &CMat| -> Vec<f64> {
        let h = (s + s.adjoint()) * c(0.5, 0.0);
        let mut v = herm_eig(&h).map(|e| e.values).unwrap_or_default();
        v.reverse();
        v
    };
    if rest.is_empty() {
        return eigs(&pcc);
    }
    let pcr = sub(&cl, &rest);
    let prc = sub(&rest, &cl);
    let prr = sub(&rest, &rest);
    let mut delta = 0.0;
    let mut out = eigs(&pcc);
    for _ in 0..4 {
        let mut a = -prr.clone();
        for (k, &i) in rest.iter().enumerate() {
            a[(k, k)] += c(top + delta - diag[i], 0.0);
        }
        let Some(ainv) = a.try_inverse() else { break };
        let s = &pcc + &pcr * ainv * &prc;
        out = eigs(&s);
        delta = out.iter().sum::<f64>() / out.len() as f64;
    }
    out
}

/// Ring of L sites cut into l and L - l: spectrum of K^{1/2} G K^{1/2} / Tr E^L with Gram matrices G, K.
pub fn es_finite_ring(mps: &UniformMPS, l: usize, sites: usize) -> Result<SpectrumReport> {
    if l == 0 || l >= sites {
        return Err(Error::InvalidGeometry(format!("need 1 <= l < L, got l = {l}, L = {sites}")));
    }
    let t = mps.transfer_matrix();
    let ta = mat_pow(&t, l);
    let tb = mat_pow(&t, sites - l);
    let norm = mat_pow(&t, sites).trace().re;
    let (g, k) = ring_grams(&ta, &tb, mps.bond);
    let vals = gram_spectrum(&g, &k, norm)?;
    Ok(SpectrumReport::from_values(vals, CLUSTER_TOL))
}

/// Gram matrices of the segment and of its complement, both indexed by the bond pair a D + b.
pub fn ring_grams(ta: &CMat, tb: &CMat, dim: usize) -> (CMat, CMat) {
    let dd = dim * dim;
    let pair = |a: usize, b: usize| a * dim + b;
    let mut g = CMat::zeros(dd, dd);
    let mut k = CMat::zeros(dd, dd);
    for a in 0..dim {
        for b in 0..dim {
            for ap in 0..dim {
                for bp in 0..dim {
                    g[(pair(a, b), pair(ap, bp))] = ta[(a * dim + ap, b * dim + bp)];
                    k[(pair(a, b), pair(ap, bp))] = tb[(bp * dim + b, ap * dim + a)];
                }
            }
        }
    }
    (g, k)
}

/// Nonzero spectrum of K^{1/2} G K^{1/2} / norm, descending.
pub fn gram_spectrum(g: &CMat, k: &CMat, norm: f64) -> Result<Vec<f64>> {
    let gh = (g + g.adjoint()) * c(0.5, 0.0);
    let kh = (k + k.adjoint()) * c(0.5, 0.0);
    let ks = herm_fn(&kh, |x| c(x.max(0.0).sqrt(), 0.0))?;
    let m = &ks * gh * &ks;
    let m = (&m + m.adjoint()) * c(0.5 / norm, 0.0);
    let mut vals = herm_eig(&m)?.values;
    vals.reverse();
    let max = vals.first().cloned().unwrap_or(0.0);
    Ok(vals.into_iter().filter(|&v| v > ZERO_DROP * max).collect())
}

/// Squared Schmidt coefficients of a dense pure state across the cut after the first `l` sites.
pub fn dense_schmidt_spectrum(psi: &CVec, d: usize, l: usize, sites: usize) -> Result<Vec<f64>> {
    let rows = d.pow(l as u32);
    let cols = d.pow((sites - l) as u32);
    if rows * cols != psi.len() {
        return Err(Error::DimensionMismatch("state length".into()));
    }
    let norm2 = psi.norm_squared();
    // row-major reshape: first l sites are the most significant digits
    let m = CMat::from_fn(rows, cols, |i, j| psi[i * cols + j]);
    let s = svd(&m)?;
    let max = s.singular_values.first().map(|x| x * x).unwrap_or(0.0);
    Ok(s
        .singular_values
        .iter()
        .map(|x| x * x / norm2)
        .filter(|&v| v > ZERO_DROP * max / norm2)
        .collect())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProjectiveRep {
    pub order: usize,
    pub v_a: Vec<Vec<(f64, f64)>>,
    pub v_b: Vec<Vec<(f64, f64)>>,
    /// Phase of V_b V_a V_b^{-1} V_a^{-1}.
    pub commutator_phase: (f64, f64),
    pub nu: usize,
}

fn to_pairs(m: &CMat) -> Vec<Vec<(f64, f64)>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| (m[(i, j)].re, m[(i, j)].im)).collect()).collect()
}

/// Virtual unitary V_g with sum_j' (rho_g)_{j j'} A_j' = e^{i theta} V_g^dagger A_j V_g.
pub fn virtual_unitary(mps: &UniformMPS, rho: &CMat) -> Result<CMat> {
    if rho.shape() != (mps.d, mps.d) {
        return Err(Error::DimensionMismatch("physical representation".into()));
    }
    let dim = mps.bond;
    let mut t = CMat::zeros(dim * dim, dim * dim);
    for j in 0..mps.d {
        let mut b = CMat::zeros(dim, dim);
        for jp in 0..mps.d {
            b += &mps.tensors[jp] * rho[(j, jp)];
        }
        t += mps.tensors[j].conjugate().kronecker(&b);
    }
    let e = general_eig(&t);
    let order = sorted_by_modulus(&e.values);
    let lead = e.values[order[0]].norm();
    if (lead - 1.0).abs() > 1e-8 {
        return Err(Error::NotSymmetric(lead));
    }
    let x = unvectorize(&e.right_vectors.column(order[0]).into_owned(), dim);
    // E_g(X) = X for X = V^dagger up to a phase
    let vd = x.adjoint();
    let s = svd(&vd)?;
    let mean = s.singular_values.iter().sum::<f64>() / dim as f64;
    let spread = s.singular_values.iter().fold(0.0f64, |m, v| m.max((v / mean - 1.0).abs()));
    if spread > 1e-6 {
        return Err(Error::NonUnitaryV(spread));
    }
    Ok(&s.u * s.v.adjoint())
}

/// Class nu in Z_r of the projective action of two commuting Z_r generators.
pub fn projective_rep(mps: &UniformMPS, rho_a: &CMat, rho_b: &CMat, r: usize) -> Result<ProjectiveRep> {
    let va = virtual_unitary(mps, rho_a)?;
    let vb = virtual_unitary(mps, rho_b)?;
    let comm = &vb * &va * vb.adjoint() * va.adjoint();
    let dim = mps.bond;
    let phase = comm.trace() / c(dim as f64, 0.0);
    let res = max_abs(&(&comm - CMat::identity(dim, dim) * phase));
    if res > 1e-6 || (phase.norm() - 1.0).abs() > 1e-6 {
        return Err(Error::NonUnitaryV(res));
    }
    let frac = phase.arg() / (2.0 * std::f64::consts::PI) * r as f64;
    let nu = (frac.round() as i64).rem_euclid(r as i64) as usize;
    Ok(ProjectiveRep {
        order: r,
        v_a: to_pairs(&va),
        v_b: to_pairs(&vb),
        commutator_phase: (phase.re, phase.im),
        nu,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{kron, pauli_x, pauli_y, pauli_z};
    use crate::spectrum::mb_gap;

    pub(crate) fn z2z2(p: f64, q: f64) -> UniformMPS {
        let id = CMat::identity(2, 2);
        UniformMPS::new(vec![
            id * c(((1.0 - p) * (1.0 - q)).sqrt(), 0.0),
            pauli_x() * c((q * (1.0 - p)).sqrt(), 0.0),
            pauli_y() * c(0.0, (p * (1.0 - q)).sqrt()),
            pauli_z() * c((p * q).sqrt(), 0.0),
        ])
        .unwrap()
    }

    #[test]
    fn z2z2_channel() {
        let m = z2z2(0.49, 0.49);
        assert!(m.canonical);
        let ch = transfer_analysis(&m).unwrap();
        assert!((ch.mu - 0.02).abs() < 1e-12);
        assert!(ch.lambda_values.iter().all(|&v| (v - 0.5).abs() < 1e-12));
        let es = es_segment(&z2z2(0.5, 0.5), 3).unwrap();
        assert_eq!(es.values.len(), 4);
        assert!(es.values.iter().all(|&v| (v - 0.25).abs() < 1e-14));
    }

    #[test]
    fn canonicalize_random() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let tensors: Vec<CMat> = (0..2)
            .map(|_| CMat::from_fn(3, 3, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)))
            .collect();
        let m = UniformMPS::new(tensors).unwrap();
        let cm = canonicalize(&m).unwrap();
        assert!(cm.unital_residual() < 1e-12);
        // same state up to normalization on a small ring
        let a = m.dense_ring_state(5).unwrap();
        let b = cm.dense_ring_state(5).unwrap();
        let overlap = a.dotc(&b).norm() / (a.norm() * b.norm());
        assert!((overlap - 1.0).abs() < 1e-10);
    }

    #[test]
    fn segment_matches_long_ring() {
        let m = z2z2(0.3, 0.2);
        let inf = es_segment(&m, 2).unwrap();
        let ring = es_finite_ring(&m, 2, 120).unwrap();
        for (a, b) in inf.values.iter().zip(ring.values.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn ring_gram_matches_dense() {
        let m = z2z2(0.3, 0.45);
        let psi = m.dense_ring_state(6).unwrap();
        let dense = dense_schmidt_spectrum(&psi, 4, 3, 6).unwrap();
        let gram = es_finite_ring(&m, 3, 6).unwrap();
        assert_eq!(dense.len(), gram.values.len());
        for (a, b) in dense.iter().zip(gram.values.iter()) {
            assert!((a - b).abs() < 1e-12, "{a} {b}");
        }
    }

    #[test]
    fn z2z2_projective_class() {
        let m = z2z2(0.49, 0.49);
        let za = kron(&pauli_z(), &CMat::identity(2, 2));
        let zb = kron(&CMat::identity(2, 2), &pauli_z());
        let rep = projective_rep(&m, &za, &zb, 2).unwrap();
        assert_eq!(rep.nu, 1);
    }

    #[test]
    fn mb_gap_small_at_large_l() {
        let m = z2z2(0.49, 0.49);
        let es = es_segment(&m, 8).unwrap();
        let g = mb_gap(&es, 2).unwrap();
        assert!(g <= 2f64.sqrt() * 2.0 * 0.02f64.powi(8) + 1e-30, "{g}");
    }
}
