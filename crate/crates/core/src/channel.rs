//! Geometric multipath channel with Jakes-correlated path gains.
//!
//! Path angles are drawn once per drop and held for all `K` slots. The gain
//! of every path follows a complex Gaussian process across slots with
//! correlation `ψ_{k,l} = J0(2π f_d T_s |k - l|)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::linalg::{clamp_eigenvalues, symmetric_eigen};
use crate::{domain, rng, CMatrix, CVector, Complex, Error, Real, Result};

/// Relative eigenvalue floor used when factoring `ψ`.
pub const PSI_CLAMP: f64 = 1e-10;

pub const SPEED_OF_LIGHT: f64 = 3e8;

/// Doppler shift `v f_c / c` for a speed in km/h and a carrier in Hz.
pub fn doppler_hz(speed_kmh: f64, carrier_hz: f64) -> f64 {
    speed_kmh / 3.6 * carrier_hz / SPEED_OF_LIGHT
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelModel {
    Geometric,
    Iid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelConfig {
    pub mt: usize,
    pub mr: usize,
    pub beta: Vec<f64>,
    pub doppler_hz: f64,
    pub slot_interval_s: f64,
    pub k: usize,
    pub model: ChannelModel,
}

impl ChannelConfig {
    /// Validates the configuration. Path powers must sum to one.
    pub fn new(
        mt: usize,
        mr: usize,
        beta: Vec<f64>,
        doppler_hz: f64,
        slot_interval_s: f64,
        k: usize,
        model: ChannelModel,
    ) -> Result<Self> {
        if mt == 0 || mr == 0 || k == 0 {
            return domain("antenna and slot counts must be positive");
        }
        if beta.is_empty() {
            return domain("need at least one path");
        }
        if beta.iter().any(|&b| !(b >= 0.0) || !b.is_finite()) {
            return domain("path powers must be finite and nonnegative");
        }
        let total: f64 = beta.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return domain(format!("path powers sum to {total}, expected 1"));
        }
        if !(doppler_hz >= 0.0) || !doppler_hz.is_finite() {
            return domain(format!("Doppler {doppler_hz} must be >= 0"));
        }
        if !(slot_interval_s > 0.0) || !slot_interval_s.is_finite() {
            return domain(format!("slot interval {slot_interval_s} must be > 0"));
        }
        Ok(Self {
            mt,
            mr,
            beta,
            doppler_hz,
            slot_interval_s,
            k,
            model,
        })
    }

    /// `P` equal-power paths.
    pub fn uniform(
        mt: usize,
        mr: usize,
        paths: usize,
        doppler_hz: f64,
        slot_interval_s: f64,
        k: usize,
        model: ChannelModel,
    ) -> Result<Self> {
        if paths == 0 {
            return domain("need at least one path");
        }
        Self::new(
            mt,
            mr,
            vec![1.0 / paths as f64; paths],
            doppler_hz,
            slot_interval_s,
            k,
            model,
        )
    }

    /// 64 × 16 array, 30 km/h at 30 GHz, 0.5 ms slot spacing.
    pub fn outdoor_default(paths: usize, k: usize) -> Result<Self> {
        Self::uniform(
            64,
            16,
            paths,
            doppler_hz(30.0, 30e9),
            0.5e-3,
            k,
            ChannelModel::Geometric,
        )
    }

    pub fn paths(&self) -> usize {
        self.beta.len()
    }

    /// `f_d T_s`.
    pub fn normalized_doppler(&self) -> f64 {
        self.doppler_hz * self.slot_interval_s
    }
}

/// `v(θ)_m = e^{j2πmθ}` for `m = 0..M`.
pub fn steering<T: Real>(theta: f64, m: usize) -> CVector<T> {
    CVector::from_fn(m, |i, _| {
        let turns = (i as f64 * theta).fract();
        let a = std::f64::consts::TAU * turns;
        Complex::new(T::lit(a.cos()), T::lit(a.sin()))
    })
}

/// Bessel function of the first kind, order zero.
///
/// Power series up to `|x| = 12`, Hankel's asymptotic expansion beyond,
/// summed until the terms stop shrinking.
pub fn bessel_j0<T: Real>(x: T) -> T {
    let x = x.abs();
    let eps = T::default_epsilon();
    if x <= T::lit(12.0) {
        let q = x * x / T::lit(4.0);
        let mut term = T::one();
        let mut sum = T::one();
        let mut k = 1usize;
        loop {
            let kk = T::from_usize_lossy(k);
            term = -term * q / (kk * kk);
            sum += term;
            if term.abs() <= eps * T::lit(1e-3) * sum.abs().max(T::one()) || k > 200 {
                break;
            }
            k += 1;
        }
        return sum;
    }
    // a_k = Π_{i=1..k} (-(2i-1)^2) / (k! 8^k); P = Σ (-1)^j a_{2j} x^{-2j},
    // Q = Σ (-1)^j a_{2j+1} x^{-(2j+1)}.
    let mut p = T::one();
    let mut q = T::zero();
    let mut a = T::one();
    let mut last = T::max_value().unwrap();
    for k in 1..60usize {
        let odd = T::from_usize_lossy(2 * k - 1);
        a = a * (-(odd * odd)) / (T::from_usize_lossy(k) * T::lit(8.0) * x);
        let mag = a.abs();
        if mag >= last || mag <= eps * T::lit(1e-3) {
            break;
        }
        last = mag;
        let sign = if (k / 2) % 2 == 0 { T::one() } else { -T::one() };
        if k % 2 == 0 {
            p += sign * a;
        } else {
            q += sign * a;
        }
    }
    let chi = x - T::frac_pi_4();
    (T::lit(2.0) / (T::pi() * x)).sqrt() * (p * chi.cos() - q * chi.sin())
}

/// Jakes correlation across slots and its square-root factor.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalCorrelation<T: Real> {
    pub psi: DMatrix<T>,
    /// `S` with `S Sᵀ` equal to `ψ` after clamping tiny eigenvalues.
    pub sqrt_factor: DMatrix<T>,
    pub eigenvalues: Vec<T>,
    pub rank: usize,
}

impl<T: Real> TemporalCorrelation<T> {
    pub fn k(&self) -> usize {
        self.psi.nrows()
    }

    pub fn is_full_rank(&self) -> bool {
        self.rank == self.k()
    }

    /// Wraps an explicit correlation matrix, factoring it the same way.
    pub fn from_matrix(psi: DMatrix<T>) -> Result<Self> {
        if !psi.is_square() || psi.nrows() == 0 {
            return Err(Error::Dimension("ψ must be square and non-empty".into()));
        }
        let (values, vectors) = symmetric_eigen(&psi);
        let clamped = clamp_eigenvalues(&values, T::lit(PSI_CLAMP));
        let rank = clamped.iter().filter(|&&v| v > T::zero()).count();
        let roots = DVector::from_iterator(clamped.len(), clamped.iter().map(|v| v.sqrt()));
        let sqrt_factor = &vectors * DMatrix::from_diagonal(&roots);
        Ok(Self {
            psi,
            sqrt_factor,
            eigenvalues: values,
            rank,
        })
    }

    /// `ψ` after eigenvalue clamping, i.e. `S Sᵀ`.
    pub fn clamped(&self) -> DMatrix<T> {
        &self.sqrt_factor * self.sqrt_factor.transpose()
    }
}

/// Toeplitz `ψ_{k,l} = J0(2π f_d T_s |k-l|)` and its factor.
pub fn correlation_matrix<T: Real>(config: &ChannelConfig) -> TemporalCorrelation<T> {
    let k = config.k;
    let step = std::f64::consts::TAU * config.normalized_doppler();
    let lags: Vec<T> = (0..k).map(|d| bessel_j0(T::lit(step * d as f64))).collect();
    let psi = DMatrix::from_fn(k, k, |a, b| lags[a.abs_diff(b)]);
    TemporalCorrelation::from_matrix(psi).expect("square by construction")
}

/// Arrival and departure virtual angles, one pair per path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    pub theta_r: Vec<f64>,
    pub theta_t: Vec<f64>,
}

impl PathSet {
    pub fn new(theta_r: Vec<f64>, theta_t: Vec<f64>) -> Result<Self> {
        if theta_r.len() != theta_t.len() || theta_r.is_empty() {
            return Err(Error::Dimension(format!(
                "need equal non-empty angle lists, got {} and {}",
                theta_r.len(),
                theta_t.len()
            )));
        }
        Ok(Self { theta_r, theta_t })
    }

    pub fn len(&self) -> usize {
        self.theta_r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta_r.is_empty()
    }
}

/// Angles i.i.d. uniform on `[0, 1)`; per path the arrival angle is drawn
/// before the departure angle.
pub fn sample_paths(config: &ChannelConfig, seed: u64) -> Result<PathSet> {
    use rand::Rng;
    if config.model != ChannelModel::Geometric {
        return domain("path angles are only defined for the geometric model");
    }
    let mut stream = rng::stream(seed);
    let mut theta_r = Vec::with_capacity(config.paths());
    let mut theta_t = Vec::with_capacity(config.paths());
    for _ in 0..config.paths() {
        theta_r.push(stream.random::<f64>());
        theta_t.push(stream.random::<f64>());
    }
    PathSet::new(theta_r, theta_t)
}

/// Path gains and the per-slot channel matrices of one realization.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization<T: Real> {
    /// `P × K` gains; empty (`0 × K`) for the i.i.d. model.
    pub alpha: CMatrix<T>,
    /// `K` matrices of size `M_r × M_t`.
    pub h: Vec<CMatrix<T>>,
}

impl<T: Real> ChannelRealization<T> {
    /// All-zero channel (signal absent).
    pub fn zero(mr: usize, mt: usize, k: usize) -> Self {
        Self {
            alpha: CMatrix::zeros(0, k),
            h: vec![CMatrix::zeros(mr, mt); k],
        }
    }
}

fn correlated_gains<T: Real>(sqrt_factor: &DMatrix<T>, scale: T, stream: &mut rng::Stream) -> Vec<Complex<T>> {
    let k = sqrt_factor.nrows();
    let xi: Vec<Complex<T>> = (0..sqrt_factor.ncols())
        .map(|_| rng::complex_normal::<T, _>(stream))
        .collect();
    (0..k)
        .map(|row| {
            let mut acc = Complex::new(T::zero(), T::zero());
            for (c, x) in xi.iter().enumerate() {
                acc += *x * sqrt_factor[(row, c)];
            }
            acc * scale
        })
        .collect()
}

/// Draws `α_p = sqrt(β_p) S ξ_p` for every path and assembles
/// `H_k = Σ_p α_{p,k} u(θ_{r,p}) v(θ_{t,p})ᴴ`.
pub fn realize_channel<T: Real>(
    config: &ChannelConfig,
    paths: &PathSet,
    corr: &TemporalCorrelation<T>,
    seed: u64,
) -> Result<ChannelRealization<T>> {
    if paths.len() != config.paths() {
        return Err(Error::Dimension(format!(
            "config has {} paths but the path set has {}",
            config.paths(),
            paths.len()
        )));
    }
    if corr.k() != config.k {
        return Err(Error::Dimension(format!(
            "correlation covers {} slots, config has K = {}",
            corr.k(),
            config.k
        )));
    }
    let mut stream = rng::stream(seed);
    let k = config.k;
    let mut alpha = CMatrix::zeros(config.paths(), k);
    for (p, &beta) in config.beta.iter().enumerate() {
        let gains = correlated_gains(&corr.sqrt_factor, T::lit(beta.sqrt()), &mut stream);
        for (slot, g) in gains.into_iter().enumerate() {
            alpha[(p, slot)] = g;
        }
    }
    let outer: Vec<CMatrix<T>> = (0..paths.len())
        .map(|p| {
            let u = steering::<T>(paths.theta_r[p], config.mr);
            let v = steering::<T>(paths.theta_t[p], config.mt);
            &u * v.adjoint()
        })
        .collect();
    let h = (0..k)
        .map(|slot| {
            let mut hk = CMatrix::zeros(config.mr, config.mt);
            for (p, o) in outer.iter().enumerate() {
                hk += o * alpha[(p, slot)];
            }
            hk
        })
        .collect();
    Ok(ChannelRealization { alpha, h })
}

/// Rich-scattering limit: every entry of `H` is an independent
/// `S`-correlated Gaussian sequence across slots, so
/// `E{vec(H_k) vec(H_l)ᴴ} = ψ_{k,l} I`.
pub fn iid_channel<T: Real>(
    config: &ChannelConfig,
    corr: &TemporalCorrelation<T>,
    seed: u64,
) -> Result<ChannelRealization<T>> {
    if corr.k() != config.k {
        return Err(Error::Dimension(format!(
            "correlation covers {} slots, config has K = {}",
            corr.k(),
            config.k
        )));
    }
    let mut stream = rng::stream(seed);
    let mut h = vec![CMatrix::zeros(config.mr, config.mt); config.k];
    // Column-major over (row, col) matches vec(H).
    for c in 0..config.mt {
        for r in 0..config.mr {
            let gains = correlated_gains(&corr.sqrt_factor, T::one(), &mut stream);
            for (slot, g) in gains.into_iter().enumerate() {
                h[slot][(r, c)] = g;
            }
        }
    }
    Ok(ChannelRealization {
        alpha: CMatrix::zeros(0, config.k),
        h,
    })
}
