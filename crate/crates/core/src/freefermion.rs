//! Free-fermion quenches: Bloch models, Fermi projectors, correlation-matrix spectra.

use std::sync::OnceLock;

use gauss_quad::legendre::GaussLegendre;
use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numerics::{
    evolution_operator, general_eig, herm_eig, herm_fn, max_abs, pfaffian, spectral_norm, c, CMat,
    RMat, C64, I,
};
use crate::spectrum::{sp_gap_values, SpectrumReport, CLUSTER_TOL};

pub const DEFAULT_GAP_TOL: f64 = 1e-8;
/// Gauss-Legendre nodes on each side of the rectangular Riesz contour.
pub const CONTOUR_NODES_PER_SIDE: usize = 128;

/// Translation-invariant hopping model H(k) = sum_n e^{ikn} H_n.
#[derive(Debug, Clone)]
pub struct BlochModel {
    pub bands: usize,
    components: Vec<(i64, CMat)>,
    /// Largest |Im k| at which the Fourier series is trusted; `None` for finite range.
    pub strip: Option<f64>,
}

impl BlochModel {
    /// Builds the model from H_0 and the hops H_n for n >= 1; H_{-n} is filled in as H_n^dagger.
    pub fn from_hops(h0: CMat, hops: Vec<(i64, CMat)>) -> Result<Self> {
        let d = h0.nrows();
        let mut comps = vec![(0, h0)];
        for (n, h) in hops {
            if n <= 0 {
                return Err(Error::InvalidParameter(format!("hop index {n} must be positive")));
            }
            comps.push((-n, h.adjoint()));
            comps.push((n, h));
        }
        Self::from_components(d, comps)
    }

    /// Accepts any component list; entries with equal n are summed and H_{-n} = H_n^dagger is enforced.
    pub fn from_components(bands: usize, comps: Vec<(i64, CMat)>) -> Result<Self> {
        let mut merged: Vec<(i64, CMat)> = Vec::new();
        for (n, h) in comps {
            if h.shape() != (bands, bands) {
                return Err(Error::DimensionMismatch(format!("hop {n} has shape {:?}", h.shape())));
            }
            if h.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::NonFinite);
            }
            match merged.iter_mut().find(|(m, _)| *m == n) {
                Some((_, acc)) => *acc += h,
                None => merged.push((n, h)),
            }
        }
        merged.sort_by_key(|(n, _)| *n);
        let zero = CMat::zeros(bands, bands);
        for (n, h) in &merged {
            let partner = merged.iter().find(|(m, _)| *m == -n).map(|(_, g)| g).unwrap_or(&zero);
            let res = max_abs(&(h.adjoint() - partner));
            if res > 1e-12 * max_abs(h).max(1.0) {
                return Err(Error::NotHermitian(res));
            }
        }
        Ok(BlochModel { bands, components: merged, strip: None })
    }

    pub fn components(&self) -> &[(i64, CMat)] {
        &self.components
    }

    pub fn range(&self) -> usize {
        self.components.iter().map(|(n, _)| n.unsigned_abs() as usize).max().unwrap_or(0)
    }

    pub fn at(&self, k: C64) -> CMat {
        let mut h = CMat::zeros(self.bands, self.bands);
        for (n, hn) in &self.components {
            h += hn * (I * k * (*n as f64)).exp();
        }
        h
    }

    pub fn at_real(&self, k: f64) -> CMat {
        let h = self.at(c(k, 0.0));
        (&h + h.adjoint()) * c(0.5, 0.0)
    }

    /// Real-space matrix on `cells` unit cells; block (j, j+n) holds H_n.
    pub fn real_space(&self, cells: usize, boundary: Boundary) -> Result<RealSpaceHamiltonian> {
        if cells == 0 {
            return Err(Error::InvalidGeometry("zero cells".into()));
        }
        let d = self.bands;
        let mut m = CMat::zeros(cells * d, cells * d);
        for j in 0..cells {
            for (n, hn) in &self.components {
                let target = j as i64 + n;
                let jj = match boundary {
                    Boundary::Periodic => target.rem_euclid(cells as i64) as usize,
                    Boundary::Open => {
                        if target < 0 || target >= cells as i64 {
                            continue;
                        }
                        target as usize
                    }
                };
                let mut blk = m.view_mut((j * d, jj * d), (d, d));
                blk += hn;
            }
        }
        RealSpaceHamiltonian::new(cells, d, m, boundary)
    }
}

pub fn bloch_at(model: &BlochModel, k: C64) -> Result<CMat> {
    if let Some(s) = model.strip {
        if k.im.abs() > s {
            return Err(Error::StripExceeded(format!("|Im k| = {} > {}", k.im.abs(), s)));
        }
    }
    Ok(model.at(k))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    Periodic,
    Open,
}

#[derive(Debug, Clone)]
pub struct RealSpaceHamiltonian {
    pub cells: usize,
    pub bands: usize,
    pub matrix: CMat,
    pub boundary: Boundary,
}

impl RealSpaceHamiltonian {
    pub fn new(cells: usize, bands: usize, matrix: CMat, boundary: Boundary) -> Result<Self> {
        let n = cells * bands;
        if matrix.shape() != (n, n) {
            return Err(Error::DimensionMismatch(format!("{:?} for {n} orbitals", matrix.shape())));
        }
        let res = crate::numerics::hermiticity_residual(&matrix);
        if res > 1e-12 * max_abs(&matrix).max(1.0) {
            return Err(Error::NotHermitian(res));
        }
        Ok(RealSpaceHamiltonian { cells, bands, matrix, boundary })
    }
}

#[derive(Debug, Clone)]
pub enum FermiProjector {
    RealSpace { matrix: CMat, cells: usize, bands: usize },
    /// P(k_i) on the uniform grid k_i = 2 pi i / N_k (infinite chain).
    KResolved { ks: Vec<f64>, mats: Vec<CMat>, bands: usize },
}

impl FermiProjector {
    pub fn bands(&self) -> usize {
        match self {
            FermiProjector::RealSpace { bands, .. } | FermiProjector::KResolved { bands, .. } => *bands,
        }
    }

    /// Trace of P (per unit cell for the k-resolved form).
    pub fn occupied_count(&self) -> f64 {
        match self {
            FermiProjector::RealSpace { matrix, .. } => matrix.trace().re,
            FermiProjector::KResolved { mats, .. } => {
                mats.iter().map(|m| m.trace().re).sum::<f64>() / mats.len() as f64
            }
        }
    }

    /// max ||P^2 - P|| over all stored matrices.
    pub fn idempotency_residual(&self) -> f64 {
        let r = |m: &CMat| max_abs(&(m * m - m));
        match self {
            FermiProjector::RealSpace { matrix, .. } => r(matrix),
            FermiProjector::KResolved { mats, .. } => mats.iter().map(r).fold(0.0, f64::max),
        }
    }
}

/// Negative-energy projector of a finite Hamiltonian.
pub fn fermi_projector(h: &RealSpaceHamiltonian) -> Result<FermiProjector> {
    fermi_projector_tol(h, DEFAULT_GAP_TOL)
}

pub fn fermi_projector_tol(h: &RealSpaceHamiltonian, gap_tol: f64) -> Result<FermiProjector> {
    let matrix = occupied_projector(&h.matrix, gap_tol)?;
    Ok(FermiProjector::RealSpace { matrix, cells: h.cells, bands: h.bands })
}

fn occupied_projector(h: &CMat, gap_tol: f64) -> Result<CMat> {
    let e = herm_eig(h)?;
    let min_abs = e.values.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if min_abs < gap_tol {
        return Err(Error::GapClosure(min_abs));
    }
    let n = h.nrows();
    let occ: Vec<usize> = (0..n).filter(|&i| e.values[i] < 0.0).collect();
    let mut v = CMat::zeros(n, occ.len());
    for (col, &i) in occ.iter().enumerate() {
        v.set_column(col, &e.vectors.column(i));
    }
    Ok(&v * v.adjoint())
}

fn gl_rule() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| {
        GaussLegendre::new(CONTOUR_NODES_PER_SIDE)
            .expect("degree >= 2")
            .as_node_weight_pairs()
            .to_vec()
    })
}

/// (1/2 pi i) times the contour integral of (z - H)^{-1} around the rectangle, counterclockwise.
pub fn riesz_projector(h: &CMat, left: f64, right: f64, half_height: f64) -> Result<CMat> {
    let n = h.nrows();
    let corners = [
        c(left, -half_height),
        c(right, -half_height),
        c(right, half_height),
        c(left, half_height),
    ];
    let mut acc = CMat::zeros(n, n);
    let id = CMat::identity(n, n);
    for s in 0..4 {
        let a = corners[s];
        let b = corners[(s + 1) % 4];
        let half = (b - a) * 0.5;
        let mid = (a + b) * 0.5;
        for &(x, w) in gl_rule() {
            let z = mid + half * x;
            let resolvent = (&id * z - h).try_inverse().ok_or(Error::ContourSingular(f64::INFINITY))?;
            let nrm = resolvent.norm();
            if nrm > 1e12 {
                return Err(Error::ContourSingular(nrm));
            }
            acc += resolvent * (half * w);
        }
    }
    Ok(acc / c(0.0, 2.0 * std::f64::consts::PI))
}

/// Projector onto the negative-energy bands at (possibly complex) k.
pub fn bloch_projector(model: &BlochModel, k: C64) -> Result<CMat> {
    bloch_projector_tol(model, k, DEFAULT_GAP_TOL)
}

pub fn bloch_projector_tol(model: &BlochModel, k: C64, gap_tol: f64) -> Result<CMat> {
    let h_real = model.at_real(k.re);
    if k.im == 0.0 {
        return occupied_projector(&h_real, gap_tol);
    }
    let real_spec = herm_eig(&h_real)?;
    let min_abs = real_spec.values.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if min_abs < gap_tol {
        return Err(Error::GapClosure(min_abs));
    }
    let h = bloch_at(model, k)?;
    let vals = general_eig(&h).values;
    let occ_max = vals.iter().filter(|z| z.re < 0.0).map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    let unocc_min = vals.iter().filter(|z| z.re >= 0.0).map(|z| z.re).fold(f64::INFINITY, f64::min);
    // a band touching Re z = 0 or changing sides means the contour would cut through it
    let min_re = vals.iter().fold(f64::INFINITY, |m, z| m.min(z.re.abs()));
    let occ_real = real_spec.values.iter().filter(|&&e| e < 0.0).count();
    let occ_complex = vals.iter().filter(|z| z.re < 0.0).count();
    if min_re < gap_tol || occ_real != occ_complex {
        return Err(Error::ContourSingular(1.0 / min_re.max(f64::MIN_POSITIVE)));
    }
    if occ_max == f64::NEG_INFINITY {
        return Ok(CMat::zeros(h.nrows(), h.nrows()));
    }
    let right = if unocc_min.is_finite() { 0.5 * (occ_max + unocc_min) } else { occ_max + 1.0 };
    let left = vals.iter().map(|z| z.re).fold(f64::INFINITY, f64::min) - 1.0;
    let half_height = vals.iter().map(|z| z.im.abs()).fold(0.0, f64::max) + 1.0;
    riesz_projector(&h, left, right, half_height)
}

/// Occupied-band sum of |u^R><u^L| from the biorthogonal eigen-decomposition.
pub fn bloch_projector_biorth(model: &BlochModel, k: C64) -> Result<CMat> {
    let e = general_eig(&bloch_at(model, k)?);
    let n = model.bands;
    let mut p = CMat::zeros(n, n);
    for (a, z) in e.values.iter().enumerate() {
        if z.re < 0.0 {
            p += e.right_vectors.column(a) * e.left_vectors.column(a).adjoint();
        }
    }
    Ok(p)
}

pub fn k_grid(nk: usize) -> Vec<f64> {
    (0..nk).map(|i| 2.0 * std::f64::consts::PI * i as f64 / nk as f64).collect()
}

/// Ground-state projector of the infinite chain on an N_k-point grid.
pub fn ground_projector_kgrid(model: &BlochModel, nk: usize) -> Result<FermiProjector> {
    let ks = k_grid(nk);
    let mats = ks
        .par_iter()
        .map(|&k| occupied_projector(&model.at_real(k), DEFAULT_GAP_TOL))
        .collect::<Result<Vec<_>>>()?;
    Ok(FermiProjector::KResolved { ks, mats, bands: model.bands })
}

pub enum Generator<'a> {
    RealSpace(&'a RealSpaceHamiltonian),
    Bloch(&'a BlochModel),
}

/// P(t) = e^{-iHt} P e^{iHt}, in real space or k by k.
pub fn evolve_projector(p0: &FermiProjector, gen: Generator<'_>, t: f64) -> Result<FermiProjector> {
    match (p0, gen) {
        (FermiProjector::RealSpace { matrix, cells, bands }, Generator::RealSpace(h)) => {
            if h.matrix.shape() != matrix.shape() {
                return Err(Error::DimensionMismatch("projector vs Hamiltonian".into()));
            }
            let u = evolution_operator(&h.matrix, t)?;
            Ok(FermiProjector::RealSpace {
                matrix: &u * matrix * u.adjoint(),
                cells: *cells,
                bands: *bands,
            })
        }
        (FermiProjector::KResolved { ks, mats, bands }, Generator::Bloch(model)) => {
            if model.bands != *bands {
                return Err(Error::DimensionMismatch("band count".into()));
            }
            let out = ks
                .par_iter()
                .zip(mats.par_iter())
                .map(|(&k, p)| {
                    let u = evolution_operator(&model.at_real(k), t)?;
                    Ok(&u * p * u.adjoint())
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(FermiProjector::KResolved { ks: ks.clone(), mats: out, bands: *bands })
        }
        _ => Err(Error::DimensionMismatch("real-space and k-resolved forms mixed".into())),
    }
}

/// <j|P|j'> = B_{j-j'} on the infinite chain, for |j-j'| <= max_sep (index r + max_sep).
pub fn toeplitz_blocks(ks: &[f64], mats: &[CMat], max_sep: usize) -> Vec<CMat> {
    let nk = ks.len() as f64;
    let d = mats[0].nrows();
    (0..=2 * max_sep)
        .into_par_iter()
        .map(|idx| {
            let r = idx as f64 - max_sep as f64;
            let mut b = CMat::zeros(d, d);
            for (k, p) in ks.iter().zip(mats) {
                b += p * C64::from_polar(1.0 / nk, k * r);
            }
            b
        })
        .collect()
}

/// Correlation matrix restricted to the first `l` cells.
pub fn subsystem_correlation(p: &FermiProjector, l: usize) -> Result<CMat> {
    if l == 0 {
        return Err(Error::InvalidGeometry("empty subsystem".into()));
    }
    match p {
        FermiProjector::RealSpace { matrix, cells, bands } => {
            if l >= *cells {
                return Err(Error::InvalidGeometry(format!("l = {l} not below L = {cells}")));
            }
            Ok(matrix.view((0, 0), (l * bands, l * bands)).into_owned())
        }
        FermiProjector::KResolved { ks, mats, bands } => {
            if ks.len() < 8 * l {
                return Err(Error::GridTooCoarse { nk: ks.len(), l });
            }
            let d = *bands;
            let blocks = toeplitz_blocks(ks, mats, l - 1);
            let mut m = CMat::zeros(l * d, l * d);
            for j in 0..l {
                for jp in 0..l {
                    let idx = (j as i64 - jp as i64 + (l as i64 - 1)) as usize;
                    m.view_mut((j * d, jp * d), (d, d)).copy_from(&blocks[idx]);
                }
            }
            Ok(m)
        }
    }
}

/// Single-particle entanglement spectrum of the leading `l` cells.
pub fn sp_es(p: &FermiProjector, l: usize) -> Result<SpectrumReport> {
    let m = subsystem_correlation(p, l)?;
    let herm = (&m + m.adjoint()) * c(0.5, 0.0);
    let vals: Vec<f64> = herm_eig(&herm)?.values.into_iter().map(|x| x.clamp(0.0, 1.0)).collect();
    let mut rep = SpectrumReport::from_values(vals, CLUSTER_TOL);
    rep.gap = sp_gap_values(&rep.values)?;
    Ok(rep)
}

/// Many-body spectrum from single-particle values, keeping the `mode_cap` most entangled modes.
pub fn mb_es_from_sp(report: &SpectrumReport, mode_cap: usize) -> Result<SpectrumReport> {
    if mode_cap > 20 {
        return Err(Error::CapTooLarge(mode_cap));
    }
    let mut modes = report.values.clone();
    modes.sort_by(|a, b| b.min(1.0 - b).total_cmp(&a.min(1.0 - a)));
    let cap = mode_cap.min(modes.len());
    let frozen: f64 = modes[cap..].iter().map(|x| x.max(1.0 - x)).product();
    let mut vals = vec![frozen];
    for &xi in &modes[..cap] {
        let mut next = Vec::with_capacity(vals.len() * 2);
        for v in &vals {
            next.push(v * (1.0 - xi));
            next.push(v * xi);
        }
        vals = next;
    }
    Ok(SpectrumReport::from_values(vals, CLUSTER_TOL))
}

/// Returns W with W U W^T = 1 for a symmetric unitary U (C = U K squares to +1).
pub fn takagi_symmetric_unitary(u: &CMat) -> Result<CMat> {
    let n = u.nrows();
    let asym = max_abs(&(u - u.transpose()));
    let unit = max_abs(&(u * u.adjoint() - CMat::identity(n, n)));
    if asym > 1e-10 || unit > 1e-10 {
        return Err(Error::NotParticleHole(asym.max(unit)));
    }
    let re = u.map(|z| z.re);
    let im = u.map(|z| z.im);
    for mix in [0.618_033_988_749_895, 1.414_213_562_373_095, 0.271_828_182_845_904] {
        let s = &re + &im * mix;
        let eig = s.symmetric_eigen();
        let o = eig.eigenvectors;
        let oc = o.map(|x| c(x, 0.0));
        let dmat = oc.transpose() * u * &oc;
        let off = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .filter(|(i, j)| i != j)
            .fold(0.0f64, |m, (i, j)| m.max(dmat[(i, j)].norm()));
        if off < 1e-9 {
            let mut w = oc.transpose();
            for i in 0..n {
                let ph = C64::from_polar(1.0, -0.5 * dmat[(i, i)].arg());
                for j in 0..n {
                    w[(i, j)] *= ph;
                }
            }
            return Ok(w);
        }
    }
    Err(Error::ConvergenceFailure("simultaneous diagonalization of symmetric unitary".into()))
}

/// Real skew matrix R with W(1-2P)W^dagger = iR, W acting cell by cell.
pub fn real_skew_form(p: &CMat, bands: usize, u_cell: &CMat) -> Result<RMat> {
    let n = p.nrows();
    if n % bands != 0 || u_cell.shape() != (bands, bands) {
        return Err(Error::DimensionMismatch("cell structure".into()));
    }
    let w_cell = takagi_symmetric_unitary(u_cell)?;
    let cells = n / bands;
    let mut w = CMat::zeros(n, n);
    for j in 0..cells {
        w.view_mut((j * bands, j * bands), (bands, bands)).copy_from(&w_cell);
    }
    let hflat = CMat::identity(n, n) - p * c(2.0, 0.0);
    let hp = &w * hflat * w.adjoint();
    let re_res = hp.iter().fold(0.0f64, |m, z| m.max(z.re.abs()));
    if re_res > 1e-8 {
        return Err(Error::NotParticleHole(re_res));
    }
    let r = hp.map(|z| z.im);
    Ok((&r - r.transpose()) * 0.5)
}

/// Z2 index sign(Pf R) of a particle-hole symmetric projector on a periodic ring with an even number of cells.
pub fn z2_index(p: &FermiProjector, u_cell: &CMat) -> Result<i32> {
    let (matrix, cells, bands) = match p {
        FermiProjector::RealSpace { matrix, cells, bands } => (matrix, *cells, *bands),
        _ => return Err(Error::InvalidGeometry("z2_index needs a real-space projector".into())),
    };
    if cells % 2 != 0 {
        return Err(Error::InvalidGeometry("z2_index needs an even number of cells".into()));
    }
    let r = real_skew_form(matrix, bands, u_cell)?;
    let pf = pfaffian(&r)?;
    Ok(if pf < 0.0 { -1 } else { 1 })
}

#[derive(Debug, Clone)]
pub struct HalfChainReport {
    pub r_d: RMat,
    pub r_o: RMat,
    pub anticommutator_norm: f64,
    pub square_residual: f64,
    pub interior_pairs_degenerate: bool,
    /// Spectrum of (1 - iR_d)/2, i.e. the half-chain single-particle ES.
    pub es: SpectrumReport,
    /// ||M^2 + 1|| for M = (-R_o^2)^{-1/2} R_o when R_o is invertible.
    pub a_residual: Option<f64>,
}

pub fn halfchain_structure(p: &FermiProjector, u_cell: &CMat) -> Result<HalfChainReport> {
    let (matrix, cells, bands) = match p {
        FermiProjector::RealSpace { matrix, cells, bands } => (matrix, *cells, *bands),
        _ => return Err(Error::NotSymmetricBipartition("needs a real-space projector".into())),
    };
    if cells % 2 != 0 || cells < 2 {
        return Err(Error::NotSymmetricBipartition(format!("L = {cells} is not even")));
    }
    let r = real_skew_form(matrix, bands, u_cell)?;
    let n = r.nrows();
    let h = n / 2;
    let mut r_d = RMat::zeros(n, n);
    let mut r_o = RMat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if (i < h) == (j < h) {
                r_d[(i, j)] = r[(i, j)];
            } else {
                r_o[(i, j)] = r[(i, j)];
            }
        }
    }
    let anti = &r_d * &r_o + &r_o * &r_d;
    let anticommutator_norm = anti.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let sq = &r_d * &r_d + &r_o * &r_o + RMat::identity(n, n);
    let square_residual = sq.iter().fold(0.0f64, |m, x| m.max(x.abs()));

    let block = r_d.view((0, 0), (h, h)).into_owned();
    let ird = block.map(|x| c(0.0, x));
    let vals = herm_eig(&((&ird + ird.adjoint()) * c(0.5, 0.0)))?.values;
    let interior: Vec<f64> = vals.iter().cloned().filter(|x| x.abs() < 1.0 - 1e-7).collect();
    let interior_pairs_degenerate = interior.len() % 2 == 0
        && interior.chunks(2).all(|pair| (pair[0] - pair[1]).abs() < 1e-9);
    let es_vals: Vec<f64> = vals.iter().map(|x| (0.5 * (1.0 - x)).clamp(0.0, 1.0)).collect();
    let mut es = SpectrumReport::from_values(es_vals, CLUSTER_TOL);
    es.gap = sp_gap_values(&es.values)?;

    let roc = r_o.map(|x| c(x, 0.0));
    let neg_sq = -(&roc * &roc);
    let min_sv = roc.clone().singular_values().iter().cloned().fold(f64::INFINITY, f64::min);
    let a_residual = if min_sv > 1e-8 {
        let inv_sqrt = herm_fn(&((&neg_sq + neg_sq.adjoint()) * c(0.5, 0.0)), |e| c(1.0 / e.sqrt(), 0.0))?;
        let m = inv_sqrt * &roc;
        Some(max_abs(&(&m * &m + CMat::identity(n, n))))
    } else {
        None
    };
    Ok(HalfChainReport {
        r_d,
        r_o,
        anticommutator_norm,
        square_residual,
        interior_pairs_degenerate,
        es,
        a_residual,
    })
}

/// max over cell pairs of the gap between the length-L ring projector and its image sum of infinite-chain entries.
pub fn finite_size_identity_residual(model: &BlochModel, cells: usize, n_max: usize, nk: usize) -> Result<f64> {
    if cells < 4 {
        return Err(Error::InvalidGeometry(format!("L = {cells} below 4")));
    }
    let ring = model.real_space(cells, Boundary::Periodic)?;
    let p_l = match fermi_projector(&ring)? {
        FermiProjector::RealSpace { matrix, .. } => matrix,
        _ => unreachable!(),
    };
    let inf = ground_projector_kgrid(model, nk)?;
    let (ks, mats) = match &inf {
        FermiProjector::KResolved { ks, mats, .. } => (ks, mats),
        _ => unreachable!(),
    };
    let max_sep = (n_max + 1) * cells;
    let blocks = toeplitz_blocks(ks, mats, max_sep);
    let d = model.bands;
    let mut worst = 0.0f64;
    for j in 0..cells {
        for jp in 0..cells {
            let mut acc = CMat::zeros(d, d);
            for n in -(n_max as i64)..=(n_max as i64) {
                let r = j as i64 - jp as i64 - n * cells as i64;
                acc += &blocks[(r + max_sep as i64) as usize];
            }
            let diff = p_l.view((j * d, jp * d), (d, d)).into_owned() - acc;
            worst = worst.max(spectral_norm(&diff));
        }
    }
    Ok(worst)
}

/// Stability of an (anti)unitary (anti)symmetry under symmetric quenches: stable iff a*b = +1.
pub fn symmetry_dynamical_stability(unitary: bool, symmetric: bool) -> bool {
    unitary == symmetric
}

/// Quadratic Hamiltonian as a dense Fock-space operator (orbital i is bit i).
pub fn fock_hamiltonian(h: &CMat) -> DMatrix<C64> {
    let n = h.nrows();
    let dim = 1usize << n;
    let mut out = DMatrix::zeros(dim, dim);
    for s in 0..dim {
        for i in 0..n {
            for j in 0..n {
                let hij = h[(i, j)];
                if hij == c(0.0, 0.0) {
                    continue;
                }
                // c_i^dagger c_j |s>
                if s >> j & 1 == 0 {
                    continue;
                }
                let s1 = s ^ (1 << j);
                let mut sign = if (s & ((1 << j) - 1)).count_ones() % 2 == 1 { -1.0 } else { 1.0 };
                if s1 >> i & 1 == 1 {
                    continue;
                }
                let s2 = s1 | (1 << i);
                if (s1 & ((1 << i) - 1)).count_ones() % 2 == 1 {
                    sign = -sign;
                }
                out[(s2, s)] += hij * sign;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{pauli_x, pauli_z};

    fn ssh(j1: f64, j2: f64) -> BlochModel {
        let h0 = pauli_x() * c(-j1, 0.0);
        let h1 = CMat::from_row_slice(2, 2, &[c(0., 0.), c(0., 0.), c(-j2, 0.), c(0., 0.)]);
        BlochModel::from_hops(h0, vec![(1, h1)]).unwrap()
    }

    #[test]
    fn bloch_at_examples() {
        let m = ssh(0.5, 1.0);
        let h = m.at(c(0.0, 0.0));
        assert!((h[(0, 1)] - c(-1.5, 0.0)).norm() < 1e-14 && h[(0, 0)].norm() < 1e-14);
        let hp = m.at(c(std::f64::consts::PI, 0.0));
        assert!((hp[(0, 1)].norm() - 0.5).abs() < 1e-14);
        let e = herm_eig(&m.at_real(0.0)).unwrap();
        assert!((e.values[0] + 1.5).abs() < 1e-14 && (e.values[1] - 1.5).abs() < 1e-14);
        let k = c(0.7, 0.4);
        let a = m.at(k);
        let b = m.at(k.conj());
        assert!(max_abs(&(a.adjoint() - b)) < 1e-12);
    }

    #[test]
    fn projector_at_zero_and_complex_k() {
        let m = ssh(0.5, 1.0);
        let p = bloch_projector(&m, c(0.0, 0.0)).unwrap();
        let half = CMat::from_element(2, 2, c(0.5, 0.0));
        assert!(max_abs(&(p - half)) < 1e-12);
        let k = c(0.3, 0.4);
        let pc = bloch_projector(&m, k).unwrap();
        let pb = bloch_projector_biorth(&m, k).unwrap();
        assert!(max_abs(&(&pc - &pb)) < 1e-8);
        assert!(max_abs(&(&pc * &pc - &pc)) < 1e-10);
        let pcc = bloch_projector(&m, k.conj()).unwrap();
        assert!(max_abs(&(pcc.adjoint() - &pc)) < 1e-9);
    }

    #[test]
    fn gap_closure_detected() {
        let m = ssh(1.0, 1.0);
        assert!(matches!(bloch_projector(&m, c(std::f64::consts::PI, 0.0)), Err(Error::GapClosure(_))));
    }

    #[test]
    fn dimerized_open_chain_es() {
        let m = ssh(0.0, 1.0);
        let h = m.real_space(10, Boundary::Open).unwrap();
        // open ends carry zero modes, so use a ring instead
        assert!(fermi_projector(&h).is_err());
        let ring = m.real_space(10, Boundary::Periodic).unwrap();
        let p = fermi_projector(&ring).unwrap();
        for l in 1..5 {
            let es = sp_es(&p, l).unwrap();
            let halves = es.values.iter().filter(|x| (*x - 0.5).abs() < 1e-12).count();
            assert_eq!(halves, 2);
            assert!(es.values.iter().all(|x| (*x - 0.5).abs() < 1e-12 || *x < 1e-12 || *x > 1.0 - 1e-12));
        }
    }

    #[test]
    fn trivial_hamiltonian_projector() {
        let h = crate::numerics::kron(&pauli_z(), &CMat::identity(3, 3)) * c(-1.0, 0.0);
        let rs = RealSpaceHamiltonian::new(3, 2, h, Boundary::Periodic).unwrap();
        let p = fermi_projector(&rs).unwrap();
        assert!((p.occupied_count() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn no_quench_keeps_projector() {
        let m = ssh(0.5, 1.0);
        let ring = m.real_space(8, Boundary::Periodic).unwrap();
        let p0 = fermi_projector(&ring).unwrap();
        let pt = evolve_projector(&p0, Generator::RealSpace(&ring), 3.7).unwrap();
        if let (FermiProjector::RealSpace { matrix: a, .. }, FermiProjector::RealSpace { matrix: b, .. }) = (&p0, &pt) {
            assert!(max_abs(&(a - b)) < 1e-10);
        }
        let pk = ground_projector_kgrid(&m, 256).unwrap();
        let pk_t = evolve_projector(&pk, Generator::Bloch(&ssh(1.0, 0.5)), 10.0).unwrap();
        assert!(pk_t.idempotency_residual() < 1e-10);
    }

    #[test]
    fn toeplitz_edge_modes() {
        let m = ssh(0.5, 1.0);
        let p = ground_projector_kgrid(&m, 1024).unwrap();
        let es = sp_es(&p, 40).unwrap();
        let near: Vec<&f64> = es.values.iter().filter(|x| (*x - 0.5).abs() < 1e-9).collect();
        assert_eq!(near.len(), 2);
        assert!(matches!(sp_es(&p, 200), Err(Error::GridTooCoarse { .. })));
    }

    #[test]
    fn mb_from_sp_small() {
        let r = SpectrumReport::from_values(vec![0.5], 1e-8);
        assert_eq!(mb_es_from_sp(&r, 4).unwrap().values, vec![0.5, 0.5]);
        let r = SpectrumReport::from_values(vec![0.5, 0.5], 1e-8);
        assert_eq!(mb_es_from_sp(&r, 4).unwrap().values, vec![0.25; 4]);
        assert!(matches!(mb_es_from_sp(&r, 21), Err(Error::CapTooLarge(21))));
    }

    #[test]
    fn z2_index_limits() {
        let u = pauli_z();
        for (j1, j2, want) in [(0.5, 1.0, -1), (1.0, 0.5, 1), (0.0, 1.0, -1), (1.0, 0.0, 1)] {
            for cells in [4, 6, 8] {
                let ring = ssh(j1, j2).real_space(cells, Boundary::Periodic).unwrap();
                let p = fermi_projector(&ring).unwrap();
                assert_eq!(z2_index(&p, &u).unwrap(), want, "J1={j1} J2={j2} L={cells}");
            }
        }
    }

    #[test]
    fn halfchain_pinned_after_quench() {
        let l = 10;
        let ring0 = ssh(0.5, 1.0).real_space(2 * l, Boundary::Periodic).unwrap();
        let ring = ssh(1.0, 0.5).real_space(2 * l, Boundary::Periodic).unwrap();
        let p0 = fermi_projector(&ring0).unwrap();
        for t in [0.0, 1.3, 7.9] {
            let p = evolve_projector(&p0, Generator::RealSpace(&ring), t).unwrap();
            let rep = halfchain_structure(&p, &pauli_z()).unwrap();
            assert!(rep.anticommutator_norm < 1e-10);
            assert!(rep.square_residual < 1e-10);
            assert!(rep.interior_pairs_degenerate);
            assert!(rep.es.gap < 1e-10, "gap {}", rep.es.gap);
        }
    }

    #[test]
    fn finite_size_identity() {
        let m = ssh(0.5, 1.0);
        let r = finite_size_identity_residual(&m, 24, 6, 4096).unwrap();
        assert!(r < 1e-6, "{r}");
        let r0 = finite_size_identity_residual(&m, 8, 0, 4096).unwrap();
        let r1 = finite_size_identity_residual(&m, 12, 0, 4096).unwrap();
        assert!(r1 < r0);
    }

    #[test]
    fn stability_table() {
        assert!(symmetry_dynamical_stability(true, true));
        assert!(!symmetry_dynamical_stability(true, false));
        assert!(symmetry_dynamical_stability(false, false));
    }
}
