//! Effective-channel covariance and the analytic detection probabilities.
//!
//! The stacked effective channel `g = vec[F_1ᴴ H_1 W_1, …, F_Kᴴ H_K W_K]` is
//! `CN(0, R)`. The rank of `R` sets the diversity order of the missed-detection
//! curve and the product of its nonzero eigenvalues sets the coding gain.
//! False alarms do not depend on the codebook at all: under `H0` the GLRT
//! statistic is `Beta(K N_r N_t, K N_r (L - N_t))`.

use nalgebra::DMatrix;

use crate::channel::{steering, PathSet};
use crate::codebook::Codebook;
use crate::linalg::{conj, hermitian_eigen, kron};
use crate::{domain, CMatrix, Complex, Error, Real, Result};

/// Relative eigenvalue threshold for the numerical rank.
pub const RANK_REL_TOL: f64 = 1e-10;
/// Accepted Hermitian defect of inputs to [`hermitian_eigenvalues`].
pub const HERMITIAN_TOL: f64 = 1e-10;

/// Which channel model produced a covariance.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelTag {
    SinglePath { theta_r: f64, theta_t: f64 },
    Iid,
    General(PathSet),
}

/// Covariance `R` of the stacked effective channel.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveCovariance<T: Real> {
    pub r: CMatrix<T>,
    pub rank: usize,
    /// Nonincreasing eigenvalues.
    pub eigs: Vec<T>,
    pub eigvecs: CMatrix<T>,
    pub model: ModelTag,
}

impl<T: Real> EffectiveCovariance<T> {
    pub fn new(r: CMatrix<T>, model: ModelTag) -> Result<Self> {
        let (eigs, eigvecs) = hermitian_eigen(&r, T::lit(HERMITIAN_TOL))?;
        let rank = numerical_rank(&eigs);
        Ok(Self {
            r,
            rank,
            eigs,
            eigvecs,
            model,
        })
    }

    pub fn dim(&self) -> usize {
        self.r.nrows()
    }

    /// The `rank` largest eigenvalues.
    pub fn nonzero_eigs(&self) -> &[T] {
        &self.eigs[..self.rank]
    }

    pub fn trace(&self) -> T {
        crate::linalg::trace(&self.r).re
    }

    /// `S = U_r diag(sqrt(λ))` with `S Sᴴ ≈ R` (dimension × rank).
    pub fn sqrt_factor(&self) -> CMatrix<T> {
        let mut s = CMatrix::zeros(self.dim(), self.rank);
        for i in 0..self.rank {
            let root = Complex::new(self.eigs[i].max(T::zero()).sqrt(), T::zero());
            s.set_column(i, &(self.eigvecs.column(i) * root));
        }
        s
    }
}

/// Count of eigenvalues above `dim · max_eig · 1e-10`.
pub fn numerical_rank<T: Real>(eigs: &[T]) -> usize {
    let top = eigs.iter().fold(T::zero(), |m, &v| m.max(v));
    if !(top > T::zero()) {
        return 0;
    }
    let eps = T::from_usize_lossy(eigs.len()) * top * T::lit(RANK_REL_TOL);
    eigs.iter().filter(|&&v| v > eps).count()
}

/// Eigenvalues of a Hermitian matrix, nonincreasing, with the numerical rank.
pub fn hermitian_eigenvalues<T: Real>(h: &CMatrix<T>) -> Result<(Vec<T>, usize)> {
    let (eigs, _) = hermitian_eigen(h, T::lit(HERMITIAN_TOL))?;
    let rank = numerical_rank(&eigs);
    Ok((eigs, rank))
}

fn check_psi<T: Real>(cb: &Codebook<T>, psi: &DMatrix<T>) -> Result<()> {
    if psi.shape() != (cb.k, cb.k) {
        return Err(Error::Dimension(format!(
            "ψ is {}x{}, codebook has K = {}",
            psi.nrows(),
            psi.ncols(),
            cb.k
        )));
    }
    Ok(())
}

fn assemble_blocks<T: Real>(k: usize, block: usize, mut f: impl FnMut(usize, usize) -> CMatrix<T>) -> CMatrix<T> {
    let mut r = CMatrix::zeros(k * block, k * block);
    for a in 0..k {
        for b in 0..k {
            r.view_mut((a * block, b * block), (block, block)).copy_from(&f(a, b));
        }
    }
    r
}

/// `R_{k,l} = (W_kᵀ ⊗ F_kᴴ) E{vec H_k vec H_lᴴ} (W_l* ⊗ F_l)` with
/// `E{vec H_k vec H_lᴴ} = ψ_{k,l} Σ_p β_p c_p c_pᴴ`, `c_p = v*(θ_t) ⊗ u(θ_r)`.
pub fn build_r_general<T: Real>(
    cb: &Codebook<T>,
    paths: &PathSet,
    beta: &[f64],
    psi: &DMatrix<T>,
) -> Result<EffectiveCovariance<T>> {
    check_psi(cb, psi)?;
    if beta.len() != paths.len() {
        return Err(Error::Dimension(format!(
            "{} path powers for {} paths",
            beta.len(),
            paths.len()
        )));
    }
    let c: Vec<CMatrix<T>> = (0..paths.len())
        .map(|p| {
            let v = steering::<T>(paths.theta_t[p], cb.mt);
            let u = steering::<T>(paths.theta_r[p], cb.mr);
            let v_conj = CMatrix::from_iterator(cb.mt, 1, v.iter().map(|z| z.conj()));
            let u = CMatrix::from_column_slice(cb.mr, 1, u.as_slice());
            kron(&v_conj, &u)
        })
        .collect();
    // Project each c_p through the per-slot Kronecker operator once.
    let projected: Vec<Vec<CMatrix<T>>> = (0..cb.k)
        .map(|k| {
            let op = kron(&cb.w[k].transpose(), &cb.f[k].adjoint());
            c.iter().map(|cp| &op * cp).collect()
        })
        .collect();
    let block = cb.nr * cb.nt;
    let r = assemble_blocks(cb.k, block, |a, b| {
        let mut acc = CMatrix::zeros(block, block);
        for (p, &bp) in beta.iter().enumerate() {
            acc += &projected[a][p] * projected[b][p].adjoint() * Complex::new(T::lit(bp), T::zero());
        }
        acc * Complex::new(psi[(a, b)], T::zero())
    });
    EffectiveCovariance::new(r, ModelTag::General(paths.clone()))
}

/// Single-path covariance `R = A Ψ Aᴴ` and its `K × K` companion
/// `R~ = Ψ diag(a_kᴴ a_k)`, which shares the nonzero spectrum when `Ψ` is
/// invertible.
#[derive(Debug, Clone, PartialEq)]
pub struct SinglePathCovariance<T: Real> {
    pub cov: EffectiveCovariance<T>,
    /// `a_k = W_kᵀ v*(θ_t) ⊗ F_kᴴ u(θ_r)` for each slot.
    pub a: Vec<CMatrix<T>>,
    /// `a_kᴴ a_k`, the product of transmit and receive patterns.
    pub gains: Vec<T>,
    pub reduced: DMatrix<T>,
}

impl<T: Real> SinglePathCovariance<T> {
    /// Eigenvalues of `R~`, nonincreasing. `R~` is similar to the symmetric
    /// `D^{1/2} Ψ D^{1/2}`, which is what gets decomposed.
    pub fn reduced_eigenvalues(&self) -> Vec<T> {
        let k = self.gains.len();
        let sym = DMatrix::from_fn(k, k, |a, b| {
            if self.gains[b] > T::zero() {
                self.gains[a].sqrt() * self.reduced[(a, b)] / self.gains[b].sqrt()
            } else {
                T::zero()
            }
        });
        crate::linalg::symmetric_eigen(&sym).0
    }
}

pub fn build_r_single_path<T: Real>(
    cb: &Codebook<T>,
    theta_r: f64,
    theta_t: f64,
    psi: &DMatrix<T>,
) -> Result<SinglePathCovariance<T>> {
    check_psi(cb, psi)?;
    let v = steering::<T>(theta_t, cb.mt);
    let u = steering::<T>(theta_r, cb.mr);
    let v_conj = CMatrix::from_iterator(cb.mt, 1, v.iter().map(|z| z.conj()));
    let u = CMatrix::from_column_slice(cb.mr, 1, u.as_slice());
    let a: Vec<CMatrix<T>> = (0..cb.k)
        .map(|k| kron(&(cb.w[k].transpose() * &v_conj), &(cb.f[k].adjoint() * &u)))
        .collect();
    let gains: Vec<T> = a.iter().map(|ak| ak.norm_squared()).collect();
    let block = cb.nr * cb.nt;
    let r = assemble_blocks(cb.k, block, |x, y| {
        &a[x] * a[y].adjoint() * Complex::new(psi[(x, y)], T::zero())
    });
    let reduced = DMatrix::from_fn(cb.k, cb.k, |x, y| psi[(x, y)] * gains[y]);
    let cov = EffectiveCovariance::new(r, ModelTag::SinglePath { theta_r, theta_t })?;
    Ok(SinglePathCovariance { cov, a, gains, reduced })
}

/// Rich-scattering covariance with blocks `ψ_{k,l} (W_kᵀ W_l*) ⊗ (F_kᴴ F_l)`.
pub fn build_r_iid<T: Real>(cb: &Codebook<T>, psi: &DMatrix<T>) -> Result<EffectiveCovariance<T>> {
    check_psi(cb, psi)?;
    let block = cb.nr * cb.nt;
    let r = assemble_blocks(cb.k, block, |a, b| {
        let tx = cb.w[a].transpose() * conj(&cb.w[b]);
        let rx = cb.f[a].adjoint() * &cb.f[b];
        kron(&tx, &rx) * Complex::new(psi[(a, b)], T::zero())
    });
    EffectiveCovariance::new(r, ModelTag::Iid)
}

/// `ln C(n, k)` as a sum of logs.
pub fn ln_choose<T: Real>(n: usize, k: usize) -> T {
    if k > n {
        return T::min_value().unwrap();
    }
    let k = k.min(n - k);
    (1..=k).fold(T::zero(), |acc, i| {
        acc + (T::from_usize_lossy(n - k + i) / T::from_usize_lossy(i)).ln()
    })
}

/// `ln Σ e^{x_i}` without overflow.
pub fn log_sum_exp<T: Real>(terms: &[T]) -> T {
    let top = terms.iter().fold(T::min_value().unwrap(), |m, &v| m.max(v));
    if !top.is_finite() {
        return top;
    }
    let s = terms.iter().fold(T::zero(), |acc, &v| acc + (v - top).exp());
    top + s.ln()
}

/// `ln P_FA(γ)` for `P_FA = Σ_{m < K N_r N_t} C(n, m) γ^m (1-γ)^{n-m}` with
/// `n = K L N_r - 1`, the upper tail of `Beta(K N_r N_t, K N_r (L - N_t))`.
pub fn ln_fa_closed_form<T: Real>(gamma: T, k: usize, l: usize, nr: usize, nt: usize) -> T {
    let n = k * l * nr - 1;
    let a = k * nr * nt;
    if gamma <= T::zero() {
        return T::zero();
    }
    if gamma >= T::one() {
        return T::min_value().unwrap();
    }
    let lg = gamma.ln();
    let l1g = (T::one() - gamma).ln();
    let terms: Vec<T> = (0..a.min(n + 1))
        .map(|m| ln_choose::<T>(n, m) + T::from_usize_lossy(m) * lg + T::from_usize_lossy(n - m) * l1g)
        .collect();
    log_sum_exp(&terms).min(T::zero())
}

pub fn fa_closed_form<T: Real>(gamma: T, k: usize, l: usize, nr: usize, nt: usize) -> T {
    let ln = ln_fa_closed_form(gamma, k, l, nr, nt);
    if ln <= T::min_value().unwrap() {
        T::zero()
    } else {
        ln.exp()
    }
}

/// Probability together with its natural log, for values that underflow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogProb<T: Real> {
    pub value: T,
    pub ln: T,
}

impl<T: Real> LogProb<T> {
    pub fn from_ln(ln: T) -> Self {
        Self { value: ln.exp(), ln }
    }
}

/// High-SNR missed-detection model of a fixed covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsymptoticMd<T: Real> {
    pub rank: usize,
    /// `Σ ln λ_m` over the nonzero eigenvalues.
    pub ln_eig_product: T,
    pub k: usize,
    pub l: usize,
    pub nr: usize,
    pub nt: usize,
}

impl<T: Real> AsymptoticMd<T> {
    pub fn new(cov: &EffectiveCovariance<T>, k: usize, l: usize, nr: usize, nt: usize) -> Result<Self> {
        if cov.rank == 0 {
            return Err(Error::ZeroRank);
        }
        let ln_eig_product = cov.nonzero_eigs().iter().fold(T::zero(), |a, &v| a + v.ln());
        Ok(Self {
            rank: cov.rank,
            ln_eig_product,
            k,
            l,
            nr,
            nt,
        })
    }

    /// `(N_t ν γ / (L (1-γ)))^r · C(K L N_r - 1, r) · Π λ_m⁻¹`.
    pub fn value(&self, gamma: T, noise_var: T) -> Result<LogProb<T>> {
        if !(gamma > T::zero() && gamma < T::one()) {
            return domain("threshold must lie in (0, 1)");
        }
        if !(noise_var > T::zero()) {
            return domain("noise variance must be positive");
        }
        let base =
            T::from_usize_lossy(self.nt) * noise_var * gamma / (T::from_usize_lossy(self.l) * (T::one() - gamma));
        let ln = T::from_usize_lossy(self.rank) * base.ln() + ln_choose::<T>(self.k * self.l * self.nr - 1, self.rank)
            - self.ln_eig_product;
        Ok(LogProb::from_ln(ln))
    }
}

#[allow(clippy::too_many_arguments)]
pub fn asymptotic_md<T: Real>(
    cov: &EffectiveCovariance<T>,
    gamma: T,
    noise_var: T,
    k: usize,
    l: usize,
    nr: usize,
    nt: usize,
) -> Result<LogProb<T>> {
    AsymptoticMd::new(cov, k, l, nr, nt)?.value(gamma, noise_var)
}

/// Ratio `X / Y` of independent sums of exponentials with means `lambda`
/// (numerator) and `sigma` (denominator).
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizedFRatio<T: Real> {
    pub lambda: Vec<T>,
    pub sigma: Vec<T>,
}

impl<T: Real> GeneralizedFRatio<T> {
    pub fn new(lambda: Vec<T>, sigma: Vec<T>) -> Result<Self> {
        if lambda.is_empty() || sigma.is_empty() {
            return domain("need at least one numerator and one denominator component");
        }
        if lambda.iter().chain(&sigma).any(|v| !(*v > T::zero())) {
            return domain("component variances must be positive");
        }
        Ok(Self { lambda, sigma })
    }
}

/// Complete homogeneous symmetric polynomial `h_n(σ) = Σ_{|k| = n} Π σ_i^{k_i}`.
pub fn complete_homogeneous<T: Real>(sigma: &[T], n: usize) -> T {
    // h[m] over the first j variables: h_j[m] = h_{j-1}[m] + σ_j h_j[m-1].
    let mut h = vec![T::zero(); n + 1];
    h[0] = T::one();
    for &s in sigma {
        for m in 1..=n {
            let prev = h[m - 1];
            h[m] += s * prev;
        }
    }
    h[n]
}

/// Small-`t` approximation `t^M Π λ_m⁻¹ h_M(σ)` of `P{X/Y < t}`.
pub fn lemma1_cdf<T: Real>(ratio: &GeneralizedFRatio<T>, t: T) -> Result<T> {
    if !(t > T::zero()) {
        return domain("t must be positive");
    }
    let m = ratio.lambda.len();
    let first = ratio.sigma[0];
    let h = if ratio.sigma.iter().all(|&s| s == first) {
        // Stars and bars: C(M + N - 1, M) σ^M.
        (ln_choose::<T>(m + ratio.sigma.len() - 1, m) + T::from_usize_lossy(m) * first.ln()).exp()
    } else {
        complete_homogeneous(&ratio.sigma, m)
    };
    let inv: T = ratio.lambda.iter().fold(T::one(), |acc, &l| acc / l);
    Ok(t.powi(m as i32) * inv * h)
}

/// `E{Y^n} = n! h_n(σ)` for `Y` a sum of exponentials with means `σ`.
pub fn chi_moment<T: Real>(sigma: &[T], n: usize) -> T {
    let fact = (1..=n).fold(T::one(), |a, i| a * T::from_usize_lossy(i));
    fact * complete_homogeneous(sigma, n)
}
