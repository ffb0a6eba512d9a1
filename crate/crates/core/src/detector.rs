//! Frame synthesis and the GLRT synchronization detector.
//!
//! Under `H1` the UT observes `Y_k = F_kᴴ H_k W_k X_k + F_kᴴ Z_k`; under `H0`
//! only the filtered noise `F_kᴴ Z_k`. The GLRT over the unknown effective
//! channel `G_k = F_kᴴ H_k W_k` and noise variance reduces to the ratio of
//! the energy projected onto the row space of `X_k` to the total energy,
//! both whitened by `(F_kᴴ F_k)⁻¹`.

use crate::analysis::fa_closed_form;
use crate::channel::ChannelRealization;
use crate::codebook::Codebook;
use crate::{domain, rng, CMatrix, Complex, Error, Real, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hypothesis {
    /// Synchronization signal present and aligned.
    H1,
    /// Noise only.
    H0,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Detected,
    NotDetected,
}

/// Transmitted synchronization signal, one `N_t × L` block per slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SyncSignal<T: Real> {
    pub x: Vec<CMatrix<T>>,
    pub l: usize,
}

impl<T: Real> SyncSignal<T> {
    pub fn nt(&self) -> usize {
        self.x[0].nrows()
    }

    pub fn k(&self) -> usize {
        self.x.len()
    }
}

/// `X_k` built from the first `N_t` rows of the `L`-point harmonic matrix
/// `e^{j2π i n / L}`, scaled by `1/sqrt(N_t)` so that `X Xᴴ = (L/N_t) I`.
pub fn make_sync_signal<T: Real>(nt: usize, l: usize, k: usize) -> Result<SyncSignal<T>> {
    if nt == 0 || k == 0 {
        return domain("N_t and K must be positive");
    }
    if nt > l {
        return domain(format!("N_t = {nt} exceeds sequence length L = {l}"));
    }
    let scale = 1.0 / (nt as f64).sqrt();
    let x = CMatrix::from_fn(nt, l, |i, n| {
        let a = std::f64::consts::TAU * ((i * n) % l) as f64 / l as f64;
        Complex::new(T::lit(scale * a.cos()), T::lit(scale * a.sin()))
    });
    Ok(SyncSignal { x: vec![x; k], l })
}

/// Observation over `K` slots.
#[derive(Debug, Clone, PartialEq)]
pub struct SyncFrame<T: Real> {
    pub y: Vec<CMatrix<T>>,
    pub hypothesis: Hypothesis,
    pub noise_var: T,
}

fn check_dims<T: Real>(cb: &Codebook<T>, signal: &SyncSignal<T>) -> Result<()> {
    if signal.k() != cb.k {
        return Err(Error::Dimension(format!(
            "signal spans {} slots, codebook has K = {}",
            signal.k(),
            cb.k
        )));
    }
    if signal.nt() != cb.nt {
        return Err(Error::Dimension(format!(
            "signal has {} streams, codebook has N_t = {}",
            signal.nt(),
            cb.nt
        )));
    }
    Ok(())
}

/// Draws one frame. Noise entries are `CN(0, ν)` from the seeded stream; the
/// same seed gives the same unit-variance noise for every `ν`.
pub fn synthesize<T: Real>(
    cb: &Codebook<T>,
    signal: &SyncSignal<T>,
    channel: &ChannelRealization<T>,
    noise_var: T,
    hypothesis: Hypothesis,
    seed: u64,
) -> Result<SyncFrame<T>> {
    check_dims(cb, signal)?;
    if !(noise_var >= T::zero()) {
        return domain("noise variance must be nonnegative");
    }
    if channel.h.len() != cb.k {
        return Err(Error::Dimension(format!(
            "channel spans {} slots, codebook has K = {}",
            channel.h.len(),
            cb.k
        )));
    }
    if channel.h.iter().any(|h| h.shape() != (cb.mr, cb.mt)) {
        return Err(Error::Dimension(format!(
            "channel matrices must be {}x{}",
            cb.mr, cb.mt
        )));
    }
    let mut stream = rng::stream(seed);
    let sd = Complex::new(noise_var.sqrt(), T::zero());
    let y = (0..cb.k)
        .map(|k| {
            let z = CMatrix::from_fn(cb.mr, signal.l, |_, _| rng::complex_normal::<T, _>(&mut stream) * sd);
            let fh = cb.f[k].adjoint();
            let noise = &fh * z;
            match hypothesis {
                Hypothesis::H1 => &fh * &channel.h[k] * &cb.w[k] * &signal.x[k] + noise,
                Hypothesis::H0 => noise,
            }
        })
        .collect();
    Ok(SyncFrame {
        y,
        hypothesis,
        noise_var,
    })
}

/// GLRT statistic, its raw log-likelihood-ratio form and an optional decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorOutput<T: Real> {
    /// Normalized statistic in `[0, 1]`.
    pub t: T,
    /// Maximized log-likelihood ratio, `-K L N_r ln(1 - t)`.
    pub t_raw: T,
    pub decision: Option<Decision>,
    pub gamma: Option<T>,
}

impl<T: Real> DetectorOutput<T> {
    /// Detected iff `t > γ`; a tie is not a detection.
    pub fn decide(self, gamma: T) -> Self {
        let decision = if self.t > gamma {
            Decision::Detected
        } else {
            Decision::NotDetected
        };
        Self {
            decision: Some(decision),
            gamma: Some(gamma),
            ..self
        }
    }
}

fn inverse<T: Real>(m: CMatrix<T>, what: &str) -> Result<CMatrix<T>> {
    m.try_inverse()
        .ok_or_else(|| Error::Domain(format!("{what} is singular")))
}

fn trace_re<T: Real>(m: &CMatrix<T>) -> T {
    crate::linalg::trace(m).re
}

/// Scores a frame.
///
/// `t = Σ tr(Y Xᴴ (X Xᴴ)⁻¹ X Yᴴ (Fᴴ F)⁻¹) / Σ tr(Y Yᴴ (Fᴴ F)⁻¹)`. The raw form is
/// evaluated separately from the two maximized log-likelihoods.
pub fn glrt_statistic<T: Real>(
    frame: &SyncFrame<T>,
    cb: &Codebook<T>,
    signal: &SyncSignal<T>,
) -> Result<DetectorOutput<T>> {
    check_dims(cb, signal)?;
    if frame.y.len() != cb.k {
        return Err(Error::Dimension(format!(
            "frame spans {} slots, codebook has K = {}",
            frame.y.len(),
            cb.k
        )));
    }
    let mut projected = T::zero();
    let mut total = T::zero();
    let mut whiteners = Vec::with_capacity(cb.k);
    let mut gains = Vec::with_capacity(cb.k);
    for k in 0..cb.k {
        let y = &frame.y[k];
        let x = &signal.x[k];
        if y.shape() != (cb.nr, signal.l) {
            return Err(Error::Dimension(format!(
                "slot {} observation is {}x{}, expected {}x{}",
                k + 1,
                y.nrows(),
                y.ncols(),
                cb.nr,
                signal.l
            )));
        }
        let ff_inv = inverse(cb.f[k].adjoint() * &cb.f[k], "combiner Gram matrix")?;
        let xx_inv = inverse(x * x.adjoint(), "signal Gram matrix")?;
        let yx = y * x.adjoint();
        let g_hat = &yx * xx_inv;
        projected += trace_re(&(&g_hat * yx.adjoint() * &ff_inv));
        total += trace_re(&(y * y.adjoint() * &ff_inv));
        whiteners.push(ff_inv);
        gains.push(g_hat);
    }
    if !(total > T::zero()) {
        return Err(Error::UndefinedStatistic);
    }
    let t = (projected / total).max(T::zero()).min(T::one());
    let t_raw = raw_log_likelihood_ratio(frame, cb, signal, &whiteners, &gains);
    Ok(DetectorOutput {
        t,
        t_raw,
        decision: None,
        gamma: None,
    })
}

/// `max_{G,ν} ln f(Y|H1) - max_ν ln f(Y|H0)` with the maximizers plugged
/// into the Gaussian log-densities.
fn raw_log_likelihood_ratio<T: Real>(
    frame: &SyncFrame<T>,
    cb: &Codebook<T>,
    signal: &SyncSignal<T>,
    whiteners: &[CMatrix<T>],
    gains: &[CMatrix<T>],
) -> T {
    let l = signal.l;
    let n_obs = T::from_usize_lossy(cb.k * l * cb.nr);
    let ln_det: T =
        cb.f.iter()
            .map(|f| {
                let g = f.adjoint() * f;
                g.determinant().re.ln()
            })
            .fold(T::zero(), |a, b| a + b);
    let log_density = |residual_energy: T, nu: T| {
        -n_obs * (T::pi() * nu).ln() - T::from_usize_lossy(l) * ln_det - residual_energy / nu
    };
    // H1: G_hat = Y Xᴴ (X Xᴴ)⁻¹ and the residual is Y - G_hat X.
    let mut e1 = T::zero();
    let mut e0 = T::zero();
    for k in 0..cb.k {
        let y = &frame.y[k];
        let resid = y - &gains[k] * &signal.x[k];
        e1 += trace_re(&(&resid * resid.adjoint() * &whiteners[k]));
        e0 += trace_re(&(y * y.adjoint() * &whiteners[k]));
    }
    let nu1 = e1 / n_obs;
    let nu0 = e0 / n_obs;
    if !(nu1 > T::zero()) {
        return T::max_value().unwrap();
    }
    log_density(e1, nu1) - log_density(e0, nu0)
}

/// Threshold `γ` whose closed-form false-alarm probability equals `p_fa`,
/// found by bisection on the strictly decreasing `P_FA(γ)`.
pub fn threshold_from_fa<T: Real>(p_fa: T, k: usize, l: usize, nr: usize, nt: usize) -> Result<T> {
    if !(p_fa > T::zero() && p_fa < T::one()) {
        return domain("target false-alarm probability must lie in (0, 1)");
    }
    if k == 0 || nr == 0 || nt == 0 || nt >= l {
        return domain(format!(
            "need K, N_r, N_t >= 1 and N_t < L, got K={k} L={l} N_r={nr} N_t={nt}"
        ));
    }
    let mut lo = T::zero();
    let mut hi = T::one();
    for _ in 0..200 {
        let mid = (lo + hi) * T::lit(0.5);
        if mid <= lo || mid >= hi {
            break;
        }
        if fa_closed_form(mid, k, l, nr, nt) > p_fa {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo + hi) * T::lit(0.5))
}
