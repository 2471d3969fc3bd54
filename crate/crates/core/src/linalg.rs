//! Small dense-banded linear algebra kernels: a factored tridiagonal solver
//! for the time stepper and a symmetric banded matrix with Cholesky and
//! Jacobi-preconditioned conjugate gradients for the normal equations.

use crate::error::{Error, Result};

/// LU factors of a tridiagonal matrix (Thomas algorithm, no pivoting).
#[derive(Debug, Clone)]
pub struct TridiagonalLu {
    lower: Vec<f64>,
    // modified upper diagonal and inverted pivots
    upper: Vec<f64>,
    inv_pivot: Vec<f64>,
}

impl TridiagonalLu {
    /// Factors the matrix with sub-diagonal `lower[i]` (row i+1, col i),
    /// diagonal `diag` and super-diagonal `upper[i]` (row i, col i+1).
    pub fn factor(lower: &[f64], diag: &[f64], upper: &[f64]) -> Option<Self> {
        let n = diag.len();
        let scale = diag
            .iter()
            .fold(0.0_f64, |m, d| m.max(d.abs()))
            .max(f64::MIN_POSITIVE);
        let mut c = vec![0.0; n.saturating_sub(1)];
        let mut inv_pivot = vec![0.0; n];
        let mut prev_c = 0.0;
        for i in 0..n {
            let l = if i > 0 { lower[i - 1] } else { 0.0 };
            let p = diag[i] - l * prev_c;
            if !p.is_finite() || p.abs() <= 1e-14 * scale {
                return None;
            }
            inv_pivot[i] = 1.0 / p;
            if i + 1 < n {
                c[i] = upper[i] * inv_pivot[i];
                prev_c = c[i];
            }
        }
        Some(Self {
            lower: lower.to_vec(),
            upper: c,
            inv_pivot,
        })
    }

    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        let n = rhs.len();
        rhs[0] *= self.inv_pivot[0];
        for i in 1..n {
            rhs[i] = (rhs[i] - self.lower[i - 1] * rhs[i - 1]) * self.inv_pivot[i];
        }
        for i in (0..n - 1).rev() {
            rhs[i] -= self.upper[i] * rhs[i + 1];
        }
    }
}

/// Symmetric banded matrix, lower band stored row by row.
///
/// Row `i` keeps columns `i-kd..=i` at positions `0..=kd`; the diagonal sits
/// at position `kd`. Entries left of column 0 are unused padding.
#[derive(Debug, Clone, PartialEq)]
pub struct SymBandMatrix {
    n: usize,
    kd: usize,
    data: Vec<f64>,
}

impl SymBandMatrix {
    pub fn zeros(n: usize, kd: usize) -> Self {
        Self {
            n,
            kd,
            data: vec![0.0; n * (kd + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.kd
    }

    fn pos(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.kd);
        i * (self.kd + 1) + self.kd - (i - j)
    }

    /// Entry `(i, j)` of the full symmetric matrix.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.kd {
            0.0
        } else {
            self.data[self.pos(i, j)]
        }
    }

    /// Adds `v` to the entry `(i, j)` with `j <= i`.
    pub fn add_lower(&mut self, i: usize, j: usize, v: f64) {
        let p = self.pos(i, j);
        self.data[p] += v;
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.data[self.pos(i, i)]).collect()
    }

    /// Computes `out = A x`.
    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let w = self.kd + 1;
        for i in 0..self.n {
            let j0 = i.saturating_sub(self.kd);
            let row = &self.data[i * w + self.kd - (i - j0)..(i + 1) * w];
            let mut acc = 0.0;
            for (a, j) in row.iter().zip(j0..=i) {
                acc += a * x[j];
                if j != i {
                    out[j] += a * x[i];
                }
            }
            out[i] += acc;
        }
    }

    /// Symmetric scaling `D A D` with `D = diag(d)`.
    pub fn scale_symmetric(&mut self, d: &[f64]) {
        let w = self.kd + 1;
        for i in 0..self.n {
            let j0 = i.saturating_sub(self.kd);
            for j in j0..=i {
                self.data[i * w + self.kd - (i - j)] *= d[i] * d[j];
            }
        }
    }

    /// In-place banded Cholesky factorization `A = L L^T`.
    pub fn cholesky(mut self) -> Result<BandCholesky> {
        let kd = self.kd;
        let w = kd + 1;
        for i in 0..self.n {
            let j0 = i.saturating_sub(kd);
            for j in j0..=i {
                // columns shared by rows i and j that precede j
                let k0 = j0.max(j.saturating_sub(kd));
                let mut sum = self.data[i * w + kd - (i - j)];
                if k0 < j {
                    let len = j - k0;
                    let ri = i * w + kd - (i - k0);
                    let rj = j * w + kd - (j - k0);
                    let (a, b) = (&self.data[ri..ri + len], &self.data[rj..rj + len]);
                    sum -= dot(a, b);
                }
                if i == j {
                    if !(sum > 0.0) || !sum.is_finite() {
                        return Err(Error::NotPositiveDefinite {
                            index: i,
                            pivot: sum,
                        });
                    }
                    self.data[i * w + kd] = sum.sqrt();
                } else {
                    self.data[i * w + kd - (i - j)] = sum / self.data[j * w + kd];
                }
            }
        }
        Ok(BandCholesky { factor: self })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four accumulators let the compiler vectorize
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        for l in 0..4 {
            acc[l] += a[4 * c + l] * b[4 * c + l];
        }
    }
    let mut s = acc[0] + acc[1] + acc[2] + acc[3];
    for k in chunks * 4..a.len() {
        s += a[k] * b[k];
    }
    s
}

/// Cholesky factor of a [`SymBandMatrix`].
#[derive(Debug, Clone)]
pub struct BandCholesky {
    factor: SymBandMatrix,
}

impl BandCholesky {
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let l = &self.factor;
        let (kd, w) = (l.kd, l.kd + 1);
        for i in 0..l.n {
            let j0 = i.saturating_sub(kd);
            let row = &l.data[i * w + kd - (i - j0)..i * w + kd];
            let s = dot(row, &b[j0..i]);
            b[i] = (b[i] - s) / l.data[i * w + kd];
        }
        for i in (0..l.n).rev() {
            b[i] /= l.data[i * w + kd];
            let xi = b[i];
            let j0 = i.saturating_sub(kd);
            let row = &l.data[i * w + kd - (i - j0)..i * w + kd];
            for (a, bj) in row.iter().zip(&mut b[j0..i]) {
                *bj -= a * xi;
            }
        }
    }
}

pub(crate) fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Outcome of an iterative or refined direct solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Solves `A x = b` by banded Cholesky on the Jacobi-equilibrated matrix,
/// followed by a few steps of iterative refinement.
pub fn solve_direct(a: &SymBandMatrix, b: &[f64], tol: f64) -> Result<(Vec<f64>, SolveStats)> {
    let n = a.dim();
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return Ok((
            vec![0.0; n],
            SolveStats {
                iterations: 0,
                relative_residual: 0.0,
            },
        ));
    }
    let d = jacobi_scaling(a)?;
    let mut scaled = a.clone();
    scaled.scale_symmetric(&d);
    let chol = scaled.cholesky()?;

    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut ax = vec![0.0; n];
    let mut best = f64::INFINITY;
    let mut steps = 0;
    const MAX_REFINEMENTS: usize = 4;
    loop {
        // correction on the scaled system: (D A D) (D^-1 dx) = D r
        let mut c: Vec<f64> = r.iter().zip(&d).map(|(ri, di)| ri * di).collect();
        chol.solve_in_place(&mut c);
        x.iter_mut()
            .zip(c.iter().zip(&d))
            .for_each(|(xi, (ci, di))| *xi += ci * di);
        steps += 1;
        a.matvec(&x, &mut ax);
        r.iter_mut()
            .zip(b.iter().zip(&ax))
            .for_each(|(ri, (bi, axi))| *ri = bi - axi);
        let res = norm2(&r) / bnorm;
        let stalled = res > 0.5 * best;
        best = best.min(res);
        if res <= 0.01 * tol || stalled || steps > MAX_REFINEMENTS {
            break;
        }
    }
    Ok((
        x,
        SolveStats {
            iterations: steps,
            relative_residual: best,
        },
    ))
}

fn jacobi_scaling(a: &SymBandMatrix) -> Result<Vec<f64>> {
    a.diagonal()
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            if v > 0.0 && v.is_finite() {
                Ok(1.0 / v.sqrt())
            } else {
                Err(Error::NotPositiveDefinite { index: i, pivot: v })
            }
        })
        .collect()
}

/// Conjugate gradients with the diagonal (Jacobi) preconditioner.
pub fn solve_pcg(
    a: &SymBandMatrix,
    b: &[f64],
    tol: f64,
    max_iterations: usize,
) -> Result<(Vec<f64>, SolveStats)> {
    let n = a.dim();
    let bnorm = norm2(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok((
            x,
            SolveStats {
                iterations: 0,
                relative_residual: 0.0,
            },
        ));
    }
    let inv_diag: Vec<f64> = jacobi_scaling(a)?.iter().map(|d| d * d).collect();
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, m)| r * m).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut res = 1.0;
    for it in 1..=max_iterations {
        a.matvec(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if !(pap > 0.0) {
            return Err(Error::NotPositiveDefinite {
                index: it,
                pivot: pap,
            });
        }
        let step = rz / pap;
        for k in 0..n {
            x[k] += step * p[k];
            r[k] -= step * ap[k];
        }
        res = norm2(&r) / bnorm;
        if res <= tol {
            // confirm with the true residual
            a.matvec(&x, &mut ap);
            let true_res = b
                .iter()
                .zip(&ap)
                .map(|(b, a)| (b - a) * (b - a))
                .sum::<f64>()
                .sqrt()
                / bnorm;
            if true_res <= tol {
                return Ok((
                    x,
                    SolveStats {
                        iterations: it,
                        relative_residual: true_res,
                    },
                ));
            }
            res = true_res;
        }
        z.iter_mut()
            .zip(r.iter().zip(&inv_diag))
            .for_each(|(z, (r, m))| *z = r * m);
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        p.iter_mut().zip(&z).for_each(|(p, z)| *p = z + beta * *p);
    }
    Err(Error::NotConverged {
        iterations: max_iterations,
        residual: res,
    })
}

/// Upper-triangular band factor `R` of a weighted least-squares system,
/// built row by row with Givens rotations.
///
/// Unlike the normal equations this does not square the condition number,
/// which matters once row weights span hundreds of orders of magnitude.
#[derive(Debug, Clone)]
pub struct BandQr {
    n: usize,
    kd: usize,
    /// Row `i` holds `R[i, i..=i + kd]`.
    r: Vec<f64>,
    qtb: Vec<f64>,
    residual_sq: f64,
    work: Vec<f64>,
}

impl BandQr {
    pub fn new(n: usize, kd: usize) -> Self {
        Self {
            n,
            kd,
            r: vec![0.0; n * (kd + 1)],
            qtb: vec![0.0; n],
            residual_sq: 0.0,
            work: vec![0.0; kd + 1],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Folds in the row `sum_k a_k z_k = rhs` (entries sorted by column,
    /// spanning at most `kd + 1` columns).
    pub fn add_row(&mut self, entries: &[(usize, f64)], mut rhs: f64) {
        let Some(&(j0, _)) = entries.first() else {
            self.residual_sq += rhs * rhs;
            return;
        };
        let w = self.kd + 1;
        let v = &mut self.work;
        v.iter_mut().for_each(|x| *x = 0.0);
        for &(j, a) in entries {
            v[j - j0] += a;
        }
        for j in j0..self.n {
            let lead = v[0];
            if lead != 0.0 {
                let row = &mut self.r[j * w..(j + 1) * w];
                let d = row[0];
                let rho = d.hypot(lead);
                let (c, s) = (d / rho, lead / rho);
                for (rk, vk) in row.iter_mut().zip(v.iter_mut()) {
                    let (a, b) = (*rk, *vk);
                    *rk = c * a + s * b;
                    *vk = c * b - s * a;
                }
                let (a, b) = (self.qtb[j], rhs);
                self.qtb[j] = c * a + s * b;
                rhs = c * b - s * a;
            }
            v.rotate_left(1);
            v[w - 1] = 0.0;
            if v.iter().all(|x| *x == 0.0) {
                break;
            }
        }
        self.residual_sq += rhs * rhs;
    }

    /// Sum of squared residuals of the least-squares solution.
    pub fn residual_sq(&self) -> f64 {
        self.residual_sq
    }

    fn diag(&self, i: usize) -> Result<f64> {
        let d = self.r[i * (self.kd + 1)];
        if d != 0.0 && d.is_finite() {
            Ok(d)
        } else {
            Err(Error::NotPositiveDefinite { index: i, pivot: d })
        }
    }

    /// Least-squares solution `R z = Q^T b`.
    pub fn solve(&self) -> Result<Vec<f64>> {
        let mut z = self.qtb.clone();
        self.back_substitute(&mut z)?;
        Ok(z)
    }

    fn back_substitute(&self, z: &mut [f64]) -> Result<()> {
        let w = self.kd + 1;
        for i in (0..self.n).rev() {
            let hi = (i + w).min(self.n);
            let row = &self.r[i * w..i * w + (hi - i)];
            let s = dot(&row[1..], &z[i + 1..hi]);
            z[i] = (z[i] - s) / self.diag(i)?;
        }
        Ok(())
    }

    /// Solves `R^T R x = b` in place.
    pub fn solve_normal_in_place(&self, b: &mut [f64]) -> Result<()> {
        let w = self.kd + 1;
        for i in 0..self.n {
            b[i] /= self.diag(i)?;
            let bi = b[i];
            let hi = (i + w).min(self.n);
            for (k, bk) in b[i + 1..hi].iter_mut().enumerate() {
                *bk -= self.r[i * w + k + 1] * bi;
            }
        }
        self.back_substitute(b)
    }
}

/// Least-squares solve from a [`BandQr`] followed by refinement against the
/// normal equations `A x = b` (corrected semi-normal equations).
pub fn solve_qr_refined(
    qr: &BandQr,
    a: &SymBandMatrix,
    b: &[f64],
    tol: f64,
) -> Result<(Vec<f64>, SolveStats)> {
    let n = a.dim();
    let bnorm = norm2(b);
    let mut x = qr.solve()?;
    if bnorm == 0.0 {
        return Ok((
            vec![0.0; n],
            SolveStats {
                iterations: 0,
                relative_residual: 0.0,
            },
        ));
    }
    let mut ax = vec![0.0; n];
    let mut r = vec![0.0; n];
    let mut best_x = x.clone();
    let mut best = f64::INFINITY;
    let mut steps = 0;
    const MAX_REFINEMENTS: usize = 4;
    loop {
        a.matvec(&x, &mut ax);
        r.iter_mut()
            .zip(b.iter().zip(&ax))
            .for_each(|(ri, (bi, axi))| *ri = bi - axi);
        let res = norm2(&r) / bnorm;
        if res < best {
            best = res;
            best_x.copy_from_slice(&x);
        } else {
            break;
        }
        if res <= 0.01 * tol || steps >= MAX_REFINEMENTS {
            break;
        }
        qr.solve_normal_in_place(&mut r)?;
        x.iter_mut().zip(&r).for_each(|(xi, ci)| *xi += ci);
        steps += 1;
    }
    Ok((
        best_x,
        SolveStats {
            iterations: steps + 1,
            relative_residual: best,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dense_from_band(a: &SymBandMatrix) -> Vec<Vec<f64>> {
        (0..a.dim())
            .map(|i| (0..a.dim()).map(|j| a.get(i, j)).collect())
            .collect()
    }

    fn random_spd(n: usize, kd: usize, seed: u64) -> SymBandMatrix {
        // B^T B + I with banded B keeps a band of width 2*kd
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
        let mut next = || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let b: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| if i.abs_diff(j) <= kd / 2 { next() } else { 0.0 })
                    .collect()
            })
            .collect();
        let mut a = SymBandMatrix::zeros(n, kd);
        for i in 0..n {
            for j in i.saturating_sub(kd)..=i {
                let v: f64 = (0..n).map(|k| b[k][i] * b[k][j]).sum();
                a.add_lower(i, j, v + if i == j { 1.0 } else { 0.0 });
            }
        }
        a
    }

    #[test]
    fn tridiagonal_solves_poisson() {
        let n = 20;
        let (l, d, u) = (vec![-1.0; n - 1], vec![2.0; n], vec![-1.0; n - 1]);
        let lu = TridiagonalLu::factor(&l, &d, &u).unwrap();
        let x: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut b: Vec<f64> = (0..n)
            .map(|i| {
                2.0 * x[i]
                    - if i > 0 { x[i - 1] } else { 0.0 }
                    - if i + 1 < n { x[i + 1] } else { 0.0 }
            })
            .collect();
        lu.solve_in_place(&mut b);
        for (a, e) in b.iter().zip(&x) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn tridiagonal_detects_singularity() {
        assert!(TridiagonalLu::factor(&[1.0], &[1.0, 1.0], &[1.0]).is_none());
    }

    #[test]
    fn matvec_matches_dense() {
        let a = random_spd(12, 4, 3);
        let dense = dense_from_band(&a);
        let x: Vec<f64> = (0..12).map(|i| i as f64 - 3.0).collect();
        let mut y = vec![0.0; 12];
        a.matvec(&x, &mut y);
        for i in 0..12 {
            let e: f64 = (0..12).map(|j| dense[i][j] * x[j]).sum();
            assert!((y[i] - e).abs() < 1e-12 * (1.0 + e.abs()));
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let mut a = SymBandMatrix::zeros(2, 1);
        a.add_lower(0, 0, 1.0);
        a.add_lower(1, 0, 2.0);
        a.add_lower(1, 1, 1.0);
        assert!(matches!(
            a.cholesky(),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn qr_matches_dense_least_squares() {
        // overdetermined: fit y = a + b x at x = 0, 1, 2, 3 with weights
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys = [1.0, 2.9, 5.2, 7.1];
        let ws = [1.0f64, 1e6, 1.0, 1e-6];
        let mut qr = BandQr::new(2, 1);
        let mut n = SymBandMatrix::zeros(2, 1);
        let mut r = vec![0.0; 2];
        for k in 0..4 {
            let sw = ws[k].sqrt();
            qr.add_row(&[(0, sw), (1, sw * xs[k])], sw * ys[k]);
            n.add_lower(0, 0, ws[k]);
            n.add_lower(1, 0, ws[k] * xs[k]);
            n.add_lower(1, 1, ws[k] * xs[k] * xs[k]);
            r[0] += ws[k] * ys[k];
            r[1] += ws[k] * xs[k] * ys[k];
        }
        let (z, stats) = solve_qr_refined(&qr, &n, &r, 1e-12).unwrap();
        let det = n.get(0, 0) * n.get(1, 1) - n.get(1, 0).powi(2);
        let z0 = (n.get(1, 1) * r[0] - n.get(1, 0) * r[1]) / det;
        let z1 = (n.get(0, 0) * r[1] - n.get(1, 0) * r[0]) / det;
        assert!(
            (z[0] - z0).abs() < 1e-9 && (z[1] - z1).abs() < 1e-9,
            "{z:?} {z0} {z1}"
        );
        assert!(stats.relative_residual < 1e-12);
        let res: f64 = (0..4)
            .map(|k| ws[k] * (z[0] + z[1] * xs[k] - ys[k]).powi(2))
            .sum();
        assert!((qr.residual_sq() - res).abs() < 1e-9 * res.max(1.0));
    }

    proptest! {
        #[test]
        fn qr_solves_banded_systems(seed in 0u64..1000, n in 3usize..30, kd in 1usize..5) {
            // square banded rows: the least-squares solution is the exact solution
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut qr = BandQr::new(n, kd);
            let mut a = SymBandMatrix::zeros(n, kd);
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut rows = Vec::new();
            for i in 0..n {
                let hi = (i + kd).min(n - 1);
                let row: Vec<(usize, f64)> = (i..=hi)
                    .map(|j| (j, if j == i { 2.0 + rng.random::<f64>() } else { rng.random_range(-0.5..0.5) }))
                    .collect();
                let rhs: f64 = row.iter().map(|(j, v)| v * x[*j]).sum();
                qr.add_row(&row, rhs);
                rows.push((row, rhs));
            }
            let mut b = vec![0.0; n];
            for (row, rhs) in &rows {
                for (p, &(ip, ap)) in row.iter().enumerate() {
                    b[ip] += ap * rhs;
                    for &(iq, aq) in &row[..=p] {
                        a.add_lower(ip.max(iq), ip.min(iq), ap * aq);
                    }
                }
            }
            let (z, _) = solve_qr_refined(&qr, &a, &b, 1e-12).unwrap();
            for i in 0..n {
                prop_assert!((z[i] - x[i]).abs() < 1e-8);
            }
            prop_assert!(qr.residual_sq() < 1e-20);
        }

        #[test]
        fn direct_and_pcg_agree(seed in 0u64..1000, n in 3usize..40, kd in 1usize..6) {
            let a = random_spd(n, kd, seed);
            let b: Vec<f64> = (0..n).map(|i| ((i * 7 + seed as usize) % 11) as f64 - 5.0).collect();
            let (x1, s1) = solve_direct(&a, &b, 1e-12).unwrap();
            let (x2, s2) = solve_pcg(&a, &b, 1e-11, 10 * n).unwrap();
            prop_assert!(s1.relative_residual <= 1e-12);
            prop_assert!(s2.relative_residual <= 1e-11);
            let scale = norm2(&x1).max(1e-300);
            let diff: Vec<f64> = x1.iter().zip(&x2).map(|(a, b)| a - b).collect();
            prop_assert!(norm2(&diff) / scale < 1e-8);
        }
    }
}
