//! Omnidirectional synchronization for mmWave massive MIMO.
//!
//! The crate builds constant-modulus precoding and combining codebooks from
//! Golay complementary pairs and Golay-Hadamard matrices, simulates the
//! downlink synchronization signal over a geometric multipath channel with
//! Jakes temporal correlation, scores frames with the GLRT detector and
//! predicts missed-detection and false-alarm probabilities analytically.
//!
//! Matrix and probability code is generic over the real scalar type through
//! [`Real`] (implemented for `f32` and `f64`). The Monte Carlo driver and the
//! aliases re-exported at the crate root use `f64`.
//!
//! ```
//! use omnisync::codebook::{build_omni_codebook, beam_pattern, AngleGrid, SlotSchedule};
//!
//! let sched = SlotSchedule::new(vec![vec![1]]).unwrap();
//! let cb = build_omni_codebook::<f64>(64, 2, 16, 2, 1, &sched, &sched).unwrap();
//! let grid = AngleGrid::new(512).unwrap();
//! let pattern = beam_pattern(&cb.w[0], &grid);
//! assert!(pattern.iter().all(|p| (p - 2.0).abs() < 1e-9));
//! ```

pub mod analysis;
pub mod channel;
pub mod codebook;
pub mod detector;
pub mod linalg;
pub mod montecarlo;
pub mod rng;

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

pub use nalgebra::Complex;

/// Real scalar the numerical core is generic over.
pub trait Real: RealField + FromPrimitive + ToPrimitive + Copy + Send + Sync + 'static {
    /// Lossy conversion from an `f64` literal.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite real")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Complex dense matrix.
pub type CMatrix<T> = nalgebra::DMatrix<Complex<T>>;
/// Complex dense column vector.
pub type CVector<T> = nalgebra::DVector<Complex<T>>;

pub type Codebook = codebook::Codebook<f64>;
pub type AngleGrid = codebook::AngleGrid;
pub type ChannelRealization = channel::ChannelRealization<f64>;
pub type TemporalCorrelation = channel::TemporalCorrelation<f64>;
pub type SyncSignal = detector::SyncSignal<f64>;
pub type SyncFrame = detector::SyncFrame<f64>;
pub type DetectorOutput = detector::DetectorOutput<f64>;
pub type EffectiveCovariance = analysis::EffectiveCovariance<f64>;

/// Errors raised by the numerical core.
#[derive(Debug, thiserror::Error, PartialEq)]
pub enum Error {
    /// An argument is outside the operation's domain.
    #[error("domain error: {0}")]
    Domain(String),
    /// Matrix or list sizes do not agree.
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    /// The GLRT ratio has a zero denominator (all-zero observation).
    #[error("test statistic undefined: observation has zero energy")]
    UndefinedStatistic,
    /// The effective covariance has rank zero, so no signal is present.
    #[error("effective covariance has rank zero")]
    ZeroRank,
    /// Combinatorial enumeration would exceed the supported size.
    #[error("unsupported: {0}")]
    Unsupported(String),
    /// A matrix factorization did not produce a usable result.
    #[error("factorization failed: {0}")]
    Factorization(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
