//! Complex linear-algebra primitives used by the receivers.
//!
//! Matrices are `nalgebra::DMatrix<Complex64>` (column-major). The hot loops
//! work directly on column slices so that an N×N_r received matrix is walked
//! contiguously.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;

/// Columns of the N×N DFT matrix selected by integer tap delays.
///
/// Column `i` holds `ω^{m·delays[i]}` for `m = 0..n`, with `ω = e^{−j2π/n}`.
#[derive(Debug, Clone, PartialEq)]
pub struct DftSubmatrix {
    n: usize,
    delays: Vec<usize>,
    columns: CMatrix,
}

impl DftSubmatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn delays(&self) -> &[usize] {
        &self.delays
    }

    pub fn num_taps(&self) -> usize {
        self.delays.len()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.columns
    }

    /// Column `i` as a contiguous slice of length `n`.
    pub fn column(&self, i: usize) -> &[C64] {
        &self.columns.as_slice()[i * self.n..(i + 1) * self.n]
    }

    /// Position of `delay` in the tap grid.
    pub fn index_of_delay(&self, delay: usize) -> Option<usize> {
        self.delays.iter().position(|&d| d == delay)
    }
}

/// `ω^{k}` for `ω = e^{−j2π/n}`, reducing the exponent modulo `n` first so
/// large products keep full precision.
pub fn dft_twiddle(n: usize, k: u64) -> C64 {
    let r = (k % n as u64) as f64;
    C64::from_polar(1.0, -2.0 * PI * r / n as f64)
}

pub fn build_dft_submatrix(n: usize, delays: &[usize]) -> Result<DftSubmatrix> {
    if n == 0 {
        return Err(Error::invalid("FFT size must be at least 1"));
    }
    if delays.is_empty() {
        return Err(Error::invalid("at least one tap delay is required"));
    }
    for (i, &d) in delays.iter().enumerate() {
        if d >= n {
            return Err(Error::invalid(format!(
                "tap delay {d} out of range [0, {}]",
                n - 1
            )));
        }
        if delays[..i].contains(&d) {
            return Err(Error::invalid(format!("duplicate tap delay {d}")));
        }
    }
    let l = delays.len();
    let mut data = Vec::with_capacity(n * l);
    for &d in delays {
        for m in 0..n {
            data.push(dft_twiddle(n, m as u64 * d as u64));
        }
    }
    Ok(DftSubmatrix {
        n,
        delays: delays.to_vec(),
        columns: CMatrix::from_vec(n, l, data),
    })
}

/// Dominant left singular vectors and singular values of a matrix.
///
/// Each vector is only defined up to a unit-modulus phase.
#[derive(Debug, Clone)]
pub struct SvdBasis {
    pub left_vectors: Vec<Vec<C64>>,
    pub singular_values: Vec<f64>,
}

impl SvdBasis {
    pub fn rank(&self) -> usize {
        self.left_vectors.len()
    }
}

// Below this ratio σ_k/σ_1 the Gram route loses too many digits.
const GRAM_MIN_RATIO: f64 = 1e-4;

/// Top-`k` left singular vectors of `y`.
///
/// Uses the eigen-decomposition of the small Gram matrix (`Y^H Y` for tall
/// inputs), which costs `O(N·N_r²)`. If the requested spectrum reaches down to
/// near-zero singular values the full SVD is used instead.
pub fn top_left_singular_vectors(y: &CMatrix, k: usize) -> Result<SvdBasis> {
    let (n, nr) = y.shape();
    let kmax = n.min(nr);
    if k == 0 || k > kmax {
        return Err(Error::invalid(format!(
            "requested {k} singular vectors, must be in [1, {kmax}]"
        )));
    }
    if nr <= n {
        if let Some(basis) = svd_via_column_gram(y, k) {
            return Ok(basis);
        }
        Ok(svd_dense(y, k))
    } else {
        Ok(svd_via_row_gram(y, k))
    }
}

fn sorted_eigen(g: CMatrix) -> (Vec<f64>, CMatrix) {
    let eig = g.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, c| {
        eig.eigenvectors[(r, order[c])]
    });
    (values, vectors)
}

fn svd_via_column_gram(y: &CMatrix, k: usize) -> Option<SvdBasis> {
    let (n, nr) = y.shape();
    let cols = y.as_slice();
    let mut g = CMatrix::zeros(nr, nr);
    for i in 0..nr {
        let ci = &cols[i * n..(i + 1) * n];
        for j in i..nr {
            let cj = &cols[j * n..(j + 1) * n];
            let s = dot_conj(ci, cj);
            g[(i, j)] = s;
            g[(j, i)] = s.conj();
        }
    }
    let (values, vectors) = sorted_eigen(g);
    let sigma: Vec<f64> = values.iter().map(|&v| v.max(0.0).sqrt()).collect();
    if sigma[0] == 0.0 || sigma[k - 1] <= GRAM_MIN_RATIO * sigma[0] {
        return None;
    }
    let mut left = Vec::with_capacity(k);
    for (i, &s) in sigma.iter().enumerate().take(k) {
        let mut u = vec![C64::new(0.0, 0.0); n];
        for r in 0..nr {
            let w = vectors[(r, i)] / s;
            axpy(w, &cols[r * n..(r + 1) * n], &mut u);
        }
        left.push(u);
    }
    orthonormalize(&mut left);
    Some(SvdBasis {
        left_vectors: left,
        singular_values: sigma[..k].to_vec(),
    })
}

fn svd_via_row_gram(y: &CMatrix, k: usize) -> SvdBasis {
    let g = y * y.adjoint();
    let (values, vectors) = sorted_eigen(g);
    SvdBasis {
        left_vectors: (0..k)
            .map(|i| vectors.column(i).iter().copied().collect())
            .collect(),
        singular_values: values[..k].iter().map(|&v| v.max(0.0).sqrt()).collect(),
    }
}

fn svd_dense(y: &CMatrix, k: usize) -> SvdBasis {
    let svd = y.clone().svd(true, false);
    let u = svd.u.expect("left vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    SvdBasis {
        left_vectors: order[..k]
            .iter()
            .map(|&i| u.column(i).iter().copied().collect())
            .collect(),
        singular_values: order[..k].iter().map(|&i| svd.singular_values[i]).collect(),
    }
}

/// Modified Gram-Schmidt, in place.
fn orthonormalize(vs: &mut [Vec<C64>]) {
    for i in 0..vs.len() {
        let (done, rest) = vs.split_at_mut(i);
        let v = &mut rest[0];
        for q in done.iter() {
            let p = dot_conj(q, v);
            axpy(-p, q, v);
        }
        let norm = norm2(v);
        if norm > 0.0 {
            v.iter_mut().for_each(|z| *z /= norm);
        }
    }
}

/// `Σ conj(a_i)·b_i`
pub fn dot_conj(a: &[C64], b: &[C64]) -> C64 {
    let mut re = 0.0;
    let mut im = 0.0;
    for (x, y) in a.iter().zip(b) {
        re += x.re * y.re + x.im * y.im;
        im += x.re * y.im - x.im * y.re;
    }
    C64::new(re, im)
}

/// `y += a·x`
pub fn axpy(a: C64, x: &[C64], y: &mut [C64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn norm2(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn frobenius_sq(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

/// Solves `A·X = B` for Hermitian positive-definite `A` by Cholesky.
///
/// `a` is row-major `n×n` (overwritten by the factor), `b` is row-major
/// `n×nrhs` (overwritten by the solution). Returns `false` when `A` is not
/// numerically positive definite.
pub fn cholesky_solve(a: &mut [C64], n: usize, b: &mut [C64], nrhs: usize) -> bool {
    let max_diag = (0..n).map(|i| a[i * n + i].re.abs()).fold(0.0, f64::max);
    let floor = 64.0 * f64::EPSILON * max_diag;
    for j in 0..n {
        let mut s = a[j * n + j].re;
        for k in 0..j {
            s -= a[j * n + k].norm_sqr();
        }
        if !(s > floor) || !s.is_finite() {
            return false;
        }
        let d = s.sqrt();
        a[j * n + j] = C64::new(d, 0.0);
        for i in j + 1..n {
            let mut v = a[i * n + j];
            for k in 0..j {
                v -= a[i * n + k] * a[j * n + k].conj();
            }
            a[i * n + j] = v / d;
        }
    }
    for c in 0..nrhs {
        for i in 0..n {
            let mut v = b[i * nrhs + c];
            for k in 0..i {
                v -= a[i * n + k] * b[k * nrhs + c];
            }
            b[i * nrhs + c] = v / a[i * n + i].re;
        }
        for i in (0..n).rev() {
            let mut v = b[i * nrhs + c];
            for k in i + 1..n {
                v -= a[k * n + i].conj() * b[k * nrhs + c];
            }
            b[i * nrhs + c] = v / a[i * n + i].re;
        }
    }
    true
}

/// Regularized least-squares time-domain channel for a diagonal symbol
/// estimate:
///
/// `Ĥ = (F_L^H X̂^H X̂ F_L + μ I_L)^{-1} F_L^H X̂^H Y_f`
///
/// The Gram matrix is formed from the diagonal directly in `O(L²N)` and the
/// system is solved by Cholesky; no inverse is formed.
pub fn regularized_ls_channel(
    x_hat: &[C64],
    f: &DftSubmatrix,
    y: &CMatrix,
    mu: f64,
) -> Result<CMatrix> {
    let n = f.n();
    let (yn, nr) = y.shape();
    if x_hat.len() != n || yn != n {
        return Err(Error::invalid(format!(
            "dimension mismatch: symbols {}, DFT rows {n}, received rows {yn}",
            x_hat.len()
        )));
    }
    if !(mu >= 0.0) {
        return Err(Error::invalid(format!("regularization must be >= 0, got {mu}")));
    }
    let l = f.num_taps();
    // w_l = conj(X̂ f_l): row l of (X̂ F_L)^H.
    let w: Vec<Vec<C64>> = (0..l)
        .map(|i| {
            f.column(i)
                .iter()
                .zip(x_hat)
                .map(|(fi, xi)| (fi * xi).conj())
                .collect()
        })
        .collect();
    let mut gram = vec![C64::new(0.0, 0.0); l * l];
    for i in 0..l {
        for j in i..l {
            let g = dot_conj(&w[j], &w[i]);
            gram[i * l + j] = g;
            gram[j * l + i] = g.conj();
        }
        gram[i * l + i] = C64::new(gram[i * l + i].re + mu, 0.0);
    }
    let cols = y.as_slice();
    let mut rhs = vec![C64::new(0.0, 0.0); l * nr];
    for (i, wi) in w.iter().enumerate() {
        for r in 0..nr {
            rhs[i * nr + r] = wi
                .iter()
                .zip(&cols[r * n..(r + 1) * n])
                .map(|(a, b)| a * b)
                .sum();
        }
    }
    if !cholesky_solve(&mut gram, l, &mut rhs, nr) {
        return Err(Error::SingularSystem(format!(
            "channel Gram matrix is not positive definite (mu = {mu})"
        )));
    }
    Ok(CMatrix::from_fn(l, nr, |i, r| rhs[i * nr + r]))
}

/// `B = F_L·H` for an `L×N_r` time-domain channel.
pub fn freq_response(f: &DftSubmatrix, h: &CMatrix) -> CMatrix {
    let n = f.n();
    let nr = h.ncols();
    let mut b = CMatrix::zeros(n, nr);
    {
        let out = b.as_mut_slice();
        for r in 0..nr {
            let col = &mut out[r * n..(r + 1) * n];
            for i in 0..f.num_taps() {
                axpy(h[(i, r)], f.column(i), col);
            }
        }
    }
    b
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use crate::channel::complex_gaussian;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> CMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        CMatrix::from_fn(rows, cols, |_, _| complex_gaussian(&mut rng, 1.0))
    }

    fn rel_err(a: &CMatrix, b: &CMatrix) -> f64 {
        (a - b).norm() / b.norm()
    }

    #[test]
    fn zero_delay_is_all_ones() {
        let f = build_dft_submatrix(8, &[0]).unwrap();
        assert!(f.column(0).iter().all(|z| (z - C64::new(1.0, 0.0)).norm() < 1e-15));
    }

    #[test]
    fn unit_delay_quarter_roots() {
        let f = build_dft_submatrix(4, &[1]).unwrap();
        let expect = [
            C64::new(1.0, 0.0),
            C64::new(0.0, -1.0),
            C64::new(-1.0, 0.0),
            C64::new(0.0, 1.0),
        ];
        for (z, e) in f.column(0).iter().zip(expect) {
            assert!((z - e).norm() < 1e-15);
        }
    }

    #[test]
    fn adjacent_columns_orthogonal_by_direct_summation() {
        let f = build_dft_submatrix(1024, &[0, 1, 2, 3]).unwrap();
        // Independent oracle: geometric series summed term by term with
        // freshly evaluated exponentials.
        let n = 1024;
        let mut acc = C64::new(0.0, 0.0);
        for m in 0..n {
            let (d0, d1) = (0, 1);
            let a = C64::from_polar(1.0, -2.0 * PI * (m * d0) as f64 / n as f64);
            let b = C64::from_polar(1.0, -2.0 * PI * (m * d1) as f64 / n as f64);
            acc += a.conj() * b;
        }
        assert!(acc.norm() < 1e-9);
        assert!(dot_conj(f.column(0), f.column(1)).norm() < 1e-9);
    }

    #[test]
    fn gram_of_dft_columns_is_n_identity() {
        let f = build_dft_submatrix(256, &[0, 3, 17, 200]).unwrap();
        let g = f.matrix().adjoint() * f.matrix();
        let expect = CMatrix::identity(4, 4) * C64::new(256.0, 0.0);
        assert!(rel_err(&g, &expect) < 1e-9);
    }

    #[test]
    fn rejects_bad_delays() {
        let err = build_dft_submatrix(8, &[0, 3, 3]).unwrap_err();
        assert!(err.to_string().contains('3'), "{err}");
        let err = build_dft_submatrix(8, &[8]).unwrap_err();
        assert!(err.to_string().contains('8'), "{err}");
    }

    #[test]
    fn rank_one_singular_structure() {
        let a: Vec<C64> = (0..6).map(|i| C64::new(1.0 + i as f64, 0.5 * i as f64)).collect();
        let b: Vec<C64> = (0..3).map(|i| C64::new(2.0 - i as f64, 1.0)).collect();
        let y = CMatrix::from_fn(6, 3, |i, j| a[i] * b[j]);
        let basis = top_left_singular_vectors(&y, 2).unwrap();
        let na = norm2(&a);
        let nb = norm2(&b);
        assert!((basis.singular_values[0] - na * nb).abs() < 1e-10 * na * nb);
        assert!(basis.singular_values[1].abs() < 1e-6);
        // |<u1, a/|a|>| = 1
        let overlap = dot_conj(&basis.left_vectors[0], &a).norm() / na;
        assert!((overlap - 1.0).abs() < 1e-12);
    }

    #[test]
    fn diagonal_singular_values() {
        let mut y = CMatrix::zeros(6, 3);
        y[(0, 0)] = C64::new(3.0, 0.0);
        y[(1, 1)] = C64::new(2.0, 0.0);
        y[(2, 2)] = C64::new(1.0, 0.0);
        let basis = top_left_singular_vectors(&y, 3).unwrap();
        for (s, e) in basis.singular_values.iter().zip([3.0, 2.0, 1.0]) {
            assert!((s - e).abs() < 1e-12);
        }
    }

    #[test]
    fn reconstruction_matches_dense_svd_oracle() {
        let y = random_matrix(64, 16, 7);
        let basis = top_left_singular_vectors(&y, 16).unwrap();
        // Oracle: nalgebra's bidiagonalization SVD.
        let oracle = y.clone().svd(false, false);
        let mut sv: Vec<f64> = oracle.singular_values.iter().copied().collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        for (s, e) in basis.singular_values.iter().zip(&sv) {
            assert!((s - e).abs() < 1e-10 * sv[0]);
        }
        // Σ σ_i u_i v_i^H with v_i = Y^H u_i / σ_i  ==  Σ u_i u_i^H Y
        let mut recon = CMatrix::zeros(64, 16);
        for (u, s) in basis.left_vectors.iter().zip(&basis.singular_values) {
            let uc = CMatrix::from_column_slice(64, 1, u);
            let v = y.adjoint() * &uc / C64::new(*s, 0.0);
            recon += &uc * v.adjoint() * C64::new(*s, 0.0);
        }
        assert!(rel_err(&recon, &y) < 1e-8);
        let energy: f64 = basis.singular_values.iter().map(|s| s * s).sum();
        assert!((energy - frobenius_sq(&y)).abs() < 1e-8 * frobenius_sq(&y));
    }

    #[test]
    fn wide_matrix_uses_row_gram() {
        let y = random_matrix(8, 20, 3);
        let basis = top_left_singular_vectors(&y, 8).unwrap();
        let energy: f64 = basis.singular_values.iter().map(|s| s * s).sum();
        assert!((energy - frobenius_sq(&y)).abs() < 1e-8 * frobenius_sq(&y));
    }

    #[test]
    fn singular_vector_count_is_checked() {
        let y = random_matrix(10, 4, 1);
        assert!(top_left_singular_vectors(&y, 0).is_err());
        assert!(top_left_singular_vectors(&y, 5).is_err());
    }

    #[test]
    fn ls_with_perfect_model_and_identity_symbols() {
        let n = 32;
        let f = build_dft_submatrix(n, &[0]).unwrap();
        let h = random_matrix(1, 5, 11);
        let y = f.matrix() * &h;
        let x = vec![C64::new(1.0, 0.0); n];
        let est = regularized_ls_channel(&x, &f, &y, 0.0).unwrap();
        assert!(rel_err(&est, &h) < 1e-12);
    }

    #[test]
    fn zero_symbols_without_regularization_are_singular() {
        let f = build_dft_submatrix(16, &[0, 1]).unwrap();
        let y = random_matrix(16, 3, 2);
        let x = vec![C64::new(0.0, 0.0); 16];
        assert!(matches!(
            regularized_ls_channel(&x, &f, &y, 0.0),
            Err(Error::SingularSystem(_))
        ));
        assert!(regularized_ls_channel(&x, &f, &y, 0.1).is_ok());
    }

    #[test]
    fn tiny_regularization_is_continuous() {
        let f = build_dft_submatrix(48, &[0, 1, 5]).unwrap();
        let y = random_matrix(48, 6, 21);
        let x: Vec<C64> = random_matrix(48, 1, 22).iter().copied().collect();
        let a = regularized_ls_channel(&x, &f, &y, 0.0).unwrap();
        let b = regularized_ls_channel(&x, &f, &y, 1e-12).unwrap();
        assert!(rel_err(&b, &a) < 1e-6);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let mut a = vec![
            C64::new(1.0, 0.0),
            C64::new(2.0, 0.0),
            C64::new(2.0, 0.0),
            C64::new(1.0, 0.0),
        ];
        let mut b = vec![C64::new(1.0, 0.0); 2];
        assert!(!cholesky_solve(&mut a, 2, &mut b, 1));
    }

    #[test]
    fn freq_response_matches_matrix_product() {
        let f = build_dft_submatrix(64, &[0, 2, 9]).unwrap();
        let h = random_matrix(3, 7, 5);
        let b = freq_response(&f, &h);
        assert!(rel_err(&b, &(f.matrix() * &h)) < 1e-13);
    }
}
