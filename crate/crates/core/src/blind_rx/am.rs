//! One alternating-minimization step: regularized least squares for the
//! channel given the symbols, then per-subcarrier combining for the symbols
//! given the channel.

use crate::error::{Error, Result};
use crate::numerics::{
    cholesky_solve, dot_conj, freq_response, frobenius_sq, regularized_ls_channel, CMatrix,
    DftSubmatrix, C64,
};

#[derive(Debug, Clone)]
pub struct AmStep {
    /// `L×N_r`
    pub h_hat: CMatrix,
    pub x_next: Vec<C64>,
    /// `‖Y − diag(x_next)·F_L·Ĥ‖_F`
    pub residual: f64,
    /// Subcarriers with zero combining gain (their symbol is set to 0).
    pub zero_gain: Vec<usize>,
}

impl AmStep {
    pub fn objective(&self, mu: f64) -> f64 {
        self.residual * self.residual + mu * frobenius_sq(&self.h_hat)
    }
}

/// Maximal-ratio combining against a frequency-domain channel `b` (`N×N_r`):
/// `x(n) = Σ_r y(n,r)·b*(n,r) / Σ_r |b(n,r)|²`.
///
/// Returns the symbols and the subcarriers with zero gain, whose symbol is 0.
pub fn mrc_from_channel(y: &CMatrix, b: &CMatrix) -> (Vec<C64>, Vec<usize>) {
    let (n, nr) = y.shape();
    let ys = y.as_slice();
    let bs = b.as_slice();
    let mut num = vec![C64::new(0.0, 0.0); n];
    let mut den = vec![0.0; n];
    for r in 0..nr {
        let yc = &ys[r * n..(r + 1) * n];
        let bc = &bs[r * n..(r + 1) * n];
        for i in 0..n {
            num[i] += yc[i] * bc[i].conj();
            den[i] += bc[i].norm_sqr();
        }
    }
    let mut zero = Vec::new();
    let x = num
        .iter()
        .zip(&den)
        .enumerate()
        .map(|(i, (a, &d))| {
            if d > 0.0 {
                a / d
            } else {
                zero.push(i);
                C64::new(0.0, 0.0)
            }
        })
        .collect();
    (x, zero)
}

/// `‖Y − Σ_u diag(x_u)·B_u‖_F`
fn residual_norm(y: &CMatrix, parts: &[(&[C64], &CMatrix)]) -> f64 {
    let (n, nr) = y.shape();
    let ys = y.as_slice();
    let mut e = vec![C64::new(0.0, 0.0); n];
    let mut acc = 0.0;
    for r in 0..nr {
        e.copy_from_slice(&ys[r * n..(r + 1) * n]);
        for (x, b) in parts {
            let bc = &b.as_slice()[r * n..(r + 1) * n];
            for ((ei, xi), bi) in e.iter_mut().zip(&x[..n]).zip(bc) {
                *ei -= xi * bi;
            }
        }
        acc += e.iter().map(|z| z.norm_sqr()).sum::<f64>();
    }
    acc.sqrt()
}

pub fn am_step_single(y: &CMatrix, x_hat: &[C64], f: &DftSubmatrix, mu: f64) -> Result<AmStep> {
    if y.nrows() != f.n() || x_hat.len() != f.n() {
        return Err(Error::invalid(format!(
            "dimension mismatch: received rows {}, symbols {}, FFT size {}",
            y.nrows(),
            x_hat.len(),
            f.n()
        )));
    }
    let h_hat = regularized_ls_channel(x_hat, f, y, mu)?;
    let b = freq_response(f, &h_hat);
    let (x_next, zero_gain) = mrc_from_channel(y, &b);
    let residual = residual_norm(y, &[(&x_next, &b)]);
    Ok(AmStep {
        h_hat,
        x_next,
        residual,
        zero_gain,
    })
}

#[derive(Debug, Clone)]
pub struct MultiAmStep {
    /// One `L×N_r` block per user.
    pub h_hat: Vec<CMatrix>,
    pub x_next: Vec<Vec<C64>>,
    pub residual: f64,
    pub zero_gain: Vec<usize>,
}

impl MultiAmStep {
    pub fn objective(&self, mu: f64) -> f64 {
        self.residual * self.residual + mu * self.h_hat.iter().map(frobenius_sq).sum::<f64>()
    }
}

/// Stacked regularized least squares for all users' channels at once:
/// `Ĥ = (A^H A + μI)^{-1} A^H Y` with `A = [X̂(1)F_L … X̂(N_u)F_L]`.
///
/// The `N_u·L` square Gram matrix is built from the diagonals in
/// `O((N_u L)²·N)`.
pub fn regularized_ls_channel_multi(
    x_hat: &[Vec<C64>],
    f: &DftSubmatrix,
    y: &CMatrix,
    mu: f64,
) -> Result<Vec<CMatrix>> {
    let n = f.n();
    let (yn, nr) = y.shape();
    if yn != n || x_hat.iter().any(|x| x.len() != n) {
        return Err(Error::invalid("dimension mismatch between symbols, DFT and received matrix"));
    }
    if !(mu >= 0.0) {
        return Err(Error::invalid(format!("regularization must be >= 0, got {mu}")));
    }
    if x_hat.len() == 1 {
        return Ok(vec![regularized_ls_channel(&x_hat[0], f, y, mu)?]);
    }
    let l = f.num_taps();
    let k = x_hat.len() * l;
    let w: Vec<Vec<C64>> = x_hat
        .iter()
        .flat_map(|x| {
            (0..l).map(move |i| {
                f.column(i).iter().zip(x).map(|(fi, xi)| (fi * xi).conj()).collect()
            })
        })
        .collect();
    let mut gram = vec![C64::new(0.0, 0.0); k * k];
    for i in 0..k {
        for j in i..k {
            let g = dot_conj(&w[j], &w[i]);
            gram[i * k + j] = g;
            gram[j * k + i] = g.conj();
        }
        gram[i * k + i] = C64::new(gram[i * k + i].re + mu, 0.0);
    }
    let cols = y.as_slice();
    let mut rhs = vec![C64::new(0.0, 0.0); k * nr];
    for (i, wi) in w.iter().enumerate() {
        for r in 0..nr {
            rhs[i * nr + r] = wi
                .iter()
                .zip(&cols[r * n..(r + 1) * n])
                .map(|(a, b)| a * b)
                .sum();
        }
    }
    if !cholesky_solve(&mut gram, k, &mut rhs, nr) {
        return Err(Error::SingularSystem(format!(
            "stacked channel Gram matrix is not positive definite (mu = {mu})"
        )));
    }
    Ok((0..x_hat.len())
        .map(|u| CMatrix::from_fn(l, nr, |i, r| rhs[(u * l + i) * nr + r]))
        .collect())
}

/// Multi-user step: stacked channel solve, then for each subcarrier the
/// regularized least-squares symbol vector
/// `x̂^T(n) = y_n^T B_n^H (B_n B_n^H + μI)^{-1}`.
pub fn am_step_multi(
    y: &CMatrix,
    x_hat: &[Vec<C64>],
    f: &DftSubmatrix,
    mu: f64,
) -> Result<MultiAmStep> {
    let nu = x_hat.len();
    let (n, nr) = y.shape();
    if nu == 0 {
        return Err(Error::invalid("at least one user is required"));
    }
    if nu * f.num_taps() > nr {
        return Err(Error::invalid(format!(
            "{nu} users × {} taps exceeds {nr} receive antennas",
            f.num_taps()
        )));
    }
    let h_hat = regularized_ls_channel_multi(x_hat, f, y, mu)?;
    let b: Vec<CMatrix> = h_hat.iter().map(|h| freq_response(f, h)).collect();
    let ys = y.as_slice();
    // gram[(u·nu + v)·n + i] = Σ_r b_u(i,r)·conj(b_v(i,r)), upper triangle.
    let mut gram = vec![C64::new(0.0, 0.0); nu * nu * n];
    let mut proj = vec![C64::new(0.0, 0.0); nu * n];
    for r in 0..nr {
        let yc = &ys[r * n..(r + 1) * n];
        for u in 0..nu {
            let bu = &b[u].as_slice()[r * n..(r + 1) * n];
            let p = &mut proj[u * n..(u + 1) * n];
            for ((pi, bi), yi) in p.iter_mut().zip(bu).zip(yc) {
                *pi += bi * yi.conj();
            }
            for v in u..nu {
                let bv = &b[v].as_slice()[r * n..(r + 1) * n];
                let g = &mut gram[(u * nu + v) * n..(u * nu + v + 1) * n];
                for ((gi, bi), vi) in g.iter_mut().zip(bu).zip(bv) {
                    *gi += bi * vi.conj();
                }
            }
        }
    }
    let mut x_next = vec![vec![C64::new(0.0, 0.0); n]; nu];
    let mut zero_gain = Vec::new();
    let mut m = vec![C64::new(0.0, 0.0); nu * nu];
    let mut z = vec![C64::new(0.0, 0.0); nu];
    for i in 0..n {
        for u in 0..nu {
            for v in u..nu {
                let g = gram[(u * nu + v) * n + i];
                m[u * nu + v] = g;
                m[v * nu + u] = g.conj();
            }
            m[u * nu + u] = C64::new(m[u * nu + u].re + mu, 0.0);
            z[u] = proj[u * n + i];
        }
        if cholesky_solve(&mut m, nu, &mut z, 1) {
            for u in 0..nu {
                x_next[u][i] = z[u].conj();
            }
        } else if mu == 0.0 {
            return Err(Error::SingularSystem(format!(
                "per-subcarrier channel matrix at subcarrier {i} is rank deficient"
            )));
        } else {
            zero_gain.push(i);
        }
    }
    let parts: Vec<(&[C64], &CMatrix)> = x_next.iter().map(|x| x.as_slice()).zip(b.iter()).collect();
    let residual = residual_norm(y, &parts);
    Ok(MultiAmStep {
        h_hat,
        x_next,
        residual,
        zero_gain,
    })
}
