//! Dense complex linear algebra shared by the physics modules.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;
pub type RMat = DMatrix<f64>;

/// Dense complex matrix; kept as an alias so every module shares nalgebra storage.
pub type ComplexMatrix = CMat;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Build a matrix from row-major entries, rejecting NaN/Inf.
pub fn from_row_major(rows: usize, cols: usize, entries: &[C64]) -> Result<CMat> {
    if entries.len() != rows * cols {
        return Err(Error::DimensionMismatch(format!(
            "{} entries for {rows}x{cols}",
            entries.len()
        )));
    }
    if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(CMat::from_row_slice(rows, cols, entries))
}

pub fn max_abs(a: &CMat) -> f64 {
    a.iter().fold(0.0, |m, z| m.max(z.norm()))
}

pub fn hermiticity_residual(a: &CMat) -> f64 {
    max_abs(&(a - a.adjoint()))
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

pub fn pauli_x() -> CMat {
    CMat::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)])
}

pub fn pauli_y() -> CMat {
    CMat::from_row_slice(2, 2, &[c(0., 0.), c(0., -1.), c(0., 1.), c(0., 0.)])
}

pub fn pauli_z() -> CMat {
    CMat::from_row_slice(2, 2, &[c(1., 0.), c(0., 0.), c(0., 0.), c(-1., 0.)])
}

/// Eigen-decomposition of a Hermitian matrix, values ascending.
#[derive(Debug, Clone)]
pub struct HermEig {
    pub values: Vec<f64>,
    pub vectors: CMat,
}

pub fn herm_eig(a: &CMat) -> Result<HermEig> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch("herm_eig needs a square matrix".into()));
    }
    let n = a.nrows();
    if n == 0 {
        return Ok(HermEig { values: vec![], vectors: CMat::zeros(0, 0) });
    }
    let scale = max_abs(a).max(1.0);
    let res = hermiticity_residual(a);
    if res >= 1e-10 * scale {
        return Err(Error::NotHermitian(res));
    }
    let sym = (a + a.adjoint()) * c(0.5, 0.0);
    let eig = sym
        .try_symmetric_eigen(f64::EPSILON, 100_000)
        .ok_or_else(|| Error::ConvergenceFailure("Hermitian eigensolver".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = CMat::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(i));
    }
    Ok(HermEig { values, vectors })
}

/// Eigenvalues only, ascending.
pub fn herm_eigvals(a: &CMat) -> Result<Vec<f64>> {
    Ok(herm_eig(a)?.values)
}

/// Apply a real function to a Hermitian matrix through its spectrum.
pub fn herm_fn(a: &CMat, f: impl Fn(f64) -> C64) -> Result<CMat> {
    let e = herm_eig(a)?;
    let n = a.nrows();
    let mut scaled = e.vectors.clone();
    for j in 0..n {
        let fj = f(e.values[j]);
        for i in 0..n {
            scaled[(i, j)] *= fj;
        }
    }
    Ok(&scaled * e.vectors.adjoint())
}

/// exp(-i H t) for Hermitian H.
pub fn evolution_operator(h: &CMat, t: f64) -> Result<CMat> {
    herm_fn(h, |e| C64::from_polar(1.0, -e * t))
}

/// Square root of a positive semidefinite Hermitian matrix (negative noise clipped).
pub fn psd_sqrt(a: &CMat) -> Result<CMat> {
    herm_fn(a, |e| c(e.max(0.0).sqrt(), 0.0))
}

/// Eigen-decomposition of a general square matrix with biorthonormal left vectors.
#[derive(Debug, Clone)]
pub struct BiorthEig {
    pub values: Vec<C64>,
    /// Columns are right eigenvectors, each of unit 2-norm.
    pub right_vectors: CMat,
    /// Columns are left eigenvectors u^L with (u^L_a)^dagger u^R_b = delta_ab.
    pub left_vectors: CMat,
    pub defective_flag: bool,
}

/// Group indices whose values lie within `tol` of each other (single linkage).
pub fn cluster_complex(values: &[C64], tol: f64) -> Vec<Vec<usize>> {
    let n = values.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while p[r] != r {
            r = p[r];
        }
        let mut x = i;
        while p[x] != r {
            let nx = p[x];
            p[x] = r;
            x = nx;
        }
        r
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if (values[i] - values[j]).norm() < tol {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[rj] = ri;
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut root_slot = vec![usize::MAX; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        if root_slot[r] == usize::MAX {
            root_slot[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[root_slot[r]].push(i);
    }
    groups
}

/// Complex Schur form with an iteration cap. Exactly structured inputs (nilpotent companions,
/// permutation-like blocks) can stall the QR sweep, so on failure the matrix is rotated by a
/// fixed Householder reflector, which keeps the spectrum, and the factorization is retried.
fn robust_schur(a: &CMat) -> (CMat, CMat) {
    let n = a.nrows();
    let cap = 200 * n.max(10);
    if let Some(s) = a.clone().try_schur(f64::EPSILON, cap) {
        return s.unpack();
    }
    for attempt in 1..=4 {
        let v = CVec::from_fn(n, |i, _| c(1.0 + 0.37 * ((i * attempt) % 7) as f64, 0.11 * (i + attempt) as f64));
        let w = CMat::identity(n, n) - (&v * v.adjoint()) * c(2.0 / v.norm_squared(), 0.0);
        let rotated = w.adjoint() * a * &w;
        if let Some(s) = rotated.try_schur(f64::EPSILON, cap) {
            let (q, t) = s.unpack();
            return (w * q, t);
        }
    }
    let jitter = CMat::from_fn(n, n, |i, j| c(1e-14 * max_abs(a).max(1.0) * (((i * 31 + j * 17) % 13) as f64 / 13.0), 0.0));
    (a + jitter).schur().unpack()
}

pub fn general_eig(a: &CMat) -> BiorthEig {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "general_eig needs a square matrix");
    if n == 0 {
        return BiorthEig {
            values: vec![],
            right_vectors: CMat::zeros(0, 0),
            left_vectors: CMat::zeros(0, 0),
            defective_flag: false,
        };
    }
    let (q, t) = robust_schur(a);
    let values: Vec<C64> = (0..n).map(|i| t[(i, i)]).collect();
    let tnorm = t.norm().max(f64::MIN_POSITIVE);
    let smin = (f64::EPSILON * tnorm).max(f64::MIN_POSITIVE * 1e10);

    let mut x = CMat::zeros(n, n);
    for k in 0..n {
        let lam = values[k];
        x[(k, k)] = c(1.0, 0.0);
        for i in (0..k).rev() {
            let mut s = c(0.0, 0.0);
            for j in (i + 1)..=k {
                s += t[(i, j)] * x[(j, k)];
            }
            let mut den = t[(i, i)] - lam;
            if den.norm() < smin {
                den = c(smin, 0.0);
            }
            x[(i, k)] = -s / den;
        }
        // rescale to avoid overflow in long back-substitutions
        let nrm = x.column(k).norm();
        if nrm > 0.0 {
            let inv = 1.0 / nrm;
            for i in 0..=k {
                x[(i, k)] *= inv;
            }
        }
    }
    let mut right = &q * x;
    for k in 0..n {
        let nrm = right.column(k).norm();
        if nrm > 0.0 {
            let inv = c(1.0 / nrm, 0.0);
            for i in 0..n {
                right[(i, k)] *= inv;
            }
        }
    }

    let scale = max_abs(a).max(1.0);
    let tol = 1e-8 * scale;
    let mut defective = false;
    for group in cluster_complex(&values, tol) {
        if group.len() < 2 {
            continue;
        }
        let mean = group.iter().map(|&i| values[i]).sum::<C64>() / c(group.len() as f64, 0.0);
        let shifted = a - CMat::identity(n, n) * mean;
        let r = numerical_rank(&shifted, tol);
        if n - r < group.len() {
            defective = true;
        }
    }
    let sv = right.clone().singular_values();
    let smin_v = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if smin_v < 1e-10 {
        defective = true;
    }
    let left = match right.clone().try_inverse() {
        Some(inv) if !defective => inv.adjoint(),
        _ => pseudo_inverse(&right, 1e-12).adjoint(),
    };
    BiorthEig { values, right_vectors: right, left_vectors: left, defective_flag: defective }
}

pub fn numerical_rank(a: &CMat, tol: f64) -> usize {
    a.clone().singular_values().iter().filter(|&&s| s > tol).count()
}

pub fn pseudo_inverse(a: &CMat, rel_tol: f64) -> CMat {
    let s = svd(a).expect("svd of finite matrix");
    let smax = s.singular_values.first().cloned().unwrap_or(0.0);
    let k = s.singular_values.len();
    let mut vs = s.v.clone();
    for j in 0..k {
        let sj = s.singular_values[j];
        let inv = if sj > rel_tol * smax { 1.0 / sj } else { 0.0 };
        for i in 0..vs.nrows() {
            vs[(i, j)] *= c(inv, 0.0);
        }
    }
    vs * s.u.adjoint()
}

#[derive(Debug, Clone)]
pub struct Svd {
    /// Descending, nonnegative.
    pub singular_values: Vec<f64>,
    pub u: CMat,
    pub v: CMat,
}

/// Thin SVD with A = U diag(s) V^dagger.
pub fn svd(a: &CMat) -> Result<Svd> {
    let (m, n) = a.shape();
    let k = m.min(n);
    if k == 0 {
        return Ok(Svd { singular_values: vec![], u: CMat::zeros(m, 0), v: CMat::zeros(n, 0) });
    }
    let d = a
        .clone()
        .try_svd(true, true, f64::EPSILON, 100_000)
        .ok_or_else(|| Error::ConvergenceFailure("svd".into()))?;
    let u0 = d.u.expect("requested u");
    let vt = d.v_t.expect("requested v_t");
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| d.singular_values[j].total_cmp(&d.singular_values[i]));
    let mut u = CMat::zeros(m, k);
    let mut v = CMat::zeros(n, k);
    let mut s = Vec::with_capacity(k);
    for (col, &i) in order.iter().enumerate() {
        s.push(d.singular_values[i]);
        u.set_column(col, &u0.column(i));
        v.set_column(col, &vt.row(i).adjoint());
    }
    Ok(Svd { singular_values: s, u, v })
}

pub fn spectral_norm(a: &CMat) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone().singular_values().iter().cloned().fold(0.0, f64::max)
}

/// Pfaffian of a real skew-symmetric matrix by Householder tridiagonalization.
pub fn pfaffian(r: &RMat) -> Result<f64> {
    let n = r.nrows();
    if n != r.ncols() {
        return Err(Error::DimensionMismatch("pfaffian needs a square matrix".into()));
    }
    let scale = r.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    let skew = (r + r.transpose()).iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if skew >= 1e-10 * scale {
        return Err(Error::NotSkewSymmetric(skew));
    }
    if n % 2 == 1 {
        return Err(Error::OddDimension(n));
    }
    if n == 0 {
        return Ok(1.0);
    }
    let mut a = (r - r.transpose()) * 0.5;
    let mut pf = 1.0;
    for i in 0..n.saturating_sub(2) {
        let m = n - i - 1;
        let x: Vec<f64> = (0..m).map(|j| a[(i + 1 + j, i)]).collect();
        let sigma: f64 = x[1..].iter().map(|v| v * v).sum();
        let alpha;
        if sigma == 0.0 {
            alpha = x[0];
        } else {
            let norm_x = (x[0] * x[0] + sigma).sqrt();
            let mut v = x.clone();
            if x[0] <= 0.0 {
                v[0] -= norm_x;
                alpha = norm_x;
            } else {
                v[0] += norm_x;
                alpha = -norm_x;
            }
            let vn = v.iter().map(|t| t * t).sum::<f64>().sqrt();
            for t in v.iter_mut() {
                *t /= vn;
            }
            // A' = H A H on the trailing block, H = 1 - 2 v v^T
            let mut w = vec![0.0; m];
            for (p, wp) in w.iter_mut().enumerate() {
                let mut s = 0.0;
                for q in 0..m {
                    s += a[(i + 1 + p, i + 1 + q)] * v[q];
                }
                *wp = 2.0 * s;
            }
            for p in 0..m {
                for q in 0..m {
                    a[(i + 1 + p, i + 1 + q)] += v[p] * w[q] - w[p] * v[q];
                }
            }
            // reflector has determinant -1
            pf = -pf;
        }
        a[(i + 1, i)] = alpha;
        a[(i, i + 1)] = -alpha;
        for j in (i + 2)..n {
            a[(j, i)] = 0.0;
            a[(i, j)] = 0.0;
        }
        if i % 2 == 0 {
            pf *= -alpha;
        }
    }
    pf *= a[(n - 2, n - 1)];
    Ok(pf)
}

/// Weyl perturbation data: largest eigenvalue shift and the spectral norm of the difference.
pub fn weyl_shift(o: &CMat, o2: &CMat) -> Result<(f64, f64)> {
    if o.shape() != o2.shape() {
        return Err(Error::DimensionMismatch(format!("{:?} vs {:?}", o.shape(), o2.shape())));
    }
    let a = herm_eigvals(o)?;
    let b = herm_eigvals(o2)?;
    let shift = a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let diff = o - o2;
    let norm = herm_eigvals(&((&diff + diff.adjoint()) * c(0.5, 0.0)))?
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    Ok((shift, norm))
}

/// Real symmetric/Hermitian clustering of sorted (descending) values.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub value: f64,
    pub multiplicity: usize,
    pub width: f64,
}

/// Agglomerative clustering of descending values with an absolute threshold between neighbours.
pub fn cluster_sorted(values: &[f64], tol: f64) -> Vec<Cluster> {
    let mut out: Vec<Cluster> = Vec::new();
    let mut start = 0;
    for i in 1..=values.len() {
        if i == values.len() || (values[i - 1] - values[i]).abs() > tol {
            if i > start {
                let seg = &values[start..i];
                let hi = seg.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lo = seg.iter().cloned().fold(f64::INFINITY, f64::min);
                out.push(Cluster {
                    value: seg.iter().sum::<f64>() / seg.len() as f64,
                    multiplicity: seg.len(),
                    width: hi - lo,
                });
            }
            start = i;
        }
    }
    out
}

/// Orthonormal basis of the column space (QR on the columns, rank by tolerance).
pub fn orthonormal_columns(a: &CMat, rel_tol: f64) -> CMat {
    let s = svd(a).expect("svd");
    let smax = s.singular_values.first().cloned().unwrap_or(0.0);
    let r = s.singular_values.iter().filter(|&&x| x > rel_tol * smax).count();
    s.u.columns(0, r).into_owned()
}

/// Matrix power by repeated squaring.
pub fn mat_pow(a: &CMat, mut e: usize) -> CMat {
    let n = a.nrows();
    let mut result = CMat::identity(n, n);
    let mut base = a.clone();
    while e > 0 {
        if e & 1 == 1 {
            result = &result * &base;
        }
        e >>= 1;
        if e > 0 {
            base = &base * &base;
        }
    }
    result
}

/// Column-stacking vectorization: vec(X)[a + D b] = X[a, b].
pub fn vectorize(x: &CMat) -> CVec {
    CVec::from_column_slice(x.as_slice())
}

pub fn unvectorize(v: &CVec, d: usize) -> CMat {
    CMat::from_column_slice(d, d, v.as_slice())
}

/// Maximize a unimodal function on [a, b] by golden-section search; returns (argmax, max).
pub fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, iters: usize) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..iters {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1);
        }
    }
    if f1 > f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Grid scan followed by golden-section refinement around the best node.
pub fn scan_max(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> (f64, f64) {
    let h = (b - a) / n as f64;
    let (mut best_x, mut best) = (a, f64::NEG_INFINITY);
    for i in 0..=n {
        let x = a + h * i as f64;
        let v = f(x);
        if v > best {
            best = v;
            best_x = x;
        }
    }
    let (x, v) = golden_max(&f, best_x - h, best_x + h, 60);
    if v > best {
        (x, v)
    } else {
        (best_x, best)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pauli_x_spectrum() {
        let e = herm_eig(&pauli_x()).unwrap();
        assert!((e.values[0] + 1.0).abs() < 1e-14 && (e.values[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn identity_spectrum() {
        let e = herm_eig(&identity(3)).unwrap();
        assert!(e.values.iter().all(|v| (v - 1.0).abs() < 1e-14));
    }

    #[test]
    fn rejects_non_hermitian() {
        let a = CMat::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(0., 0.), c(0., 0.)]);
        assert!(matches!(herm_eig(&a), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn jordan_block_is_defective() {
        let a = CMat::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(0., 0.), c(0., 0.)]);
        assert!(general_eig(&a).defective_flag);
    }

    #[test]
    fn diagonal_general_eig() {
        let a = CMat::from_diagonal(&CVec::from_vec(vec![c(2., 0.), c(0., 3.)]));
        let e = general_eig(&a);
        assert!(!e.defective_flag);
        let mut v = e.values.clone();
        v.sort_by(|x, y| x.re.total_cmp(&y.re));
        assert!((v[0] - c(0., 3.)).norm() < 1e-14 && (v[1] - c(2., 0.)).norm() < 1e-14);
    }

    #[test]
    fn svd_of_diag() {
        let a = CMat::from_diagonal(&CVec::from_vec(vec![c(-2., 0.), c(1., 0.)]));
        let s = svd(&a).unwrap();
        assert!((s.singular_values[0] - 2.0).abs() < 1e-14);
        assert!((s.singular_values[1] - 1.0).abs() < 1e-14);
        let z = svd(&CMat::zeros(3, 2)).unwrap();
        assert!(z.singular_values.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn small_pfaffians() {
        let a = RMat::from_row_slice(2, 2, &[0., 1., -1., 0.]);
        assert!((pfaffian(&a).unwrap() - 1.0).abs() < 1e-14);
        let mut b = RMat::zeros(4, 4);
        b[(0, 1)] = 2.;
        b[(1, 0)] = -2.;
        b[(2, 3)] = 3.;
        b[(3, 2)] = -3.;
        assert!((pfaffian(&b).unwrap() - 6.0).abs() < 1e-13);
        assert!(matches!(pfaffian(&RMat::zeros(3, 3)), Err(Error::OddDimension(3))));
    }

    #[test]
    fn weyl_uniform_shift() {
        let o = pauli_x();
        let (s, n) = weyl_shift(&o, &o).unwrap();
        assert!(s < 1e-15 && n < 1e-15);
        let o2 = &o + identity(2) * c(0.3, 0.);
        let (s, n) = weyl_shift(&o, &o2).unwrap();
        assert!((s - 0.3).abs() < 1e-14 && (n - 0.3).abs() < 1e-14);
    }

    #[test]
    fn clusters() {
        let cl = cluster_sorted(&[0.5, 0.5, 0.3, 0.1 + 1e-10, 0.1], 1e-8);
        assert_eq!(cl.len(), 3);
        assert_eq!(cl[0].multiplicity, 2);
        assert_eq!(cl[2].multiplicity, 2);
    }
}
