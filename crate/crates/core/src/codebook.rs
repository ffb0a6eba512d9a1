//! Golay-based omnidirectional codebooks and the baseline beamformers.
//!
//! A codebook holds one precoder `W_k` (`M_t × N_t`) and one combiner `F_k`
//! (`M_r × N_r`) per synchronization slot. The omnidirectional design takes
//! columns `n` and `n + M/2` of a scaled Golay-Hadamard matrix, so each pair
//! of columns is a Golay complementary pair and the slot's beam pattern is
//! flat at `N` over every angle.

use std::fmt::Write as _;

use nalgebra::{ComplexField, DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{domain, rng, CMatrix, CVector, Complex, Error, Real, Result};

/// Tolerance on `|pattern - N|` for per-slot flatness.
pub const FLATNESS_TOL: f64 = 1e-9;
/// Tolerance on entry moduli, unitarity and cross-slot orthogonality.
pub const MATRIX_TOL: f64 = 1e-12;
/// Tolerance on the grid-averaged coverage.
pub const AVERAGE_COVERAGE_TOL: f64 = 1e-6;
/// Grid density used by [`verify_codebook`].
pub const VERIFY_GRID: usize = 8192;
/// Grid density used for CSV pattern export.
pub const EXPORT_GRID: usize = 512;

pub fn is_power_of_two(m: usize) -> bool {
    m >= 1 && m.is_power_of_two()
}

fn require_power_of_two(m: usize, what: &str) -> Result<()> {
    if is_power_of_two(m) {
        Ok(())
    } else {
        domain(format!("{what} = {m} is not a power of two"))
    }
}

/// A ±1 sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinarySequence {
    entries: Vec<i8>,
}

impl BinarySequence {
    pub fn new(entries: Vec<i8>) -> Result<Self> {
        if entries.is_empty() {
            return domain("binary sequence must be non-empty");
        }
        if let Some(bad) = entries.iter().find(|&&e| e != 1 && e != -1) {
            return domain(format!("binary sequence entry {bad} is not ±1"));
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[i8] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Aperiodic autocorrelation `r_l = Σ_m s_m s_{m+l}` for `l = 0..len-1`.
    pub fn autocorrelation(&self) -> Vec<i64> {
        let s = &self.entries;
        (0..s.len())
            .map(|l| {
                s[..s.len() - l]
                    .iter()
                    .zip(&s[l..])
                    .map(|(&a, &b)| i64::from(a) * i64::from(b))
                    .sum()
            })
            .collect()
    }
}

/// Two equal-length binary sequences with complementary autocorrelations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GolayPair {
    pub first: BinarySequence,
    pub second: BinarySequence,
}

impl GolayPair {
    /// Checks the complementary property and builds the pair.
    pub fn new(first: BinarySequence, second: BinarySequence) -> Result<Self> {
        if first.len() != second.len() {
            return Err(Error::Dimension(format!(
                "pair lengths differ: {} vs {}",
                first.len(),
                second.len()
            )));
        }
        let pair = Self { first, second };
        if !pair.is_complementary() {
            return domain("sequences are not a Golay complementary pair");
        }
        Ok(pair)
    }

    pub fn len(&self) -> usize {
        self.first.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Lag-wise sum of the two autocorrelations.
    pub fn autocorrelation_sum(&self) -> Vec<i64> {
        self.first
            .autocorrelation()
            .into_iter()
            .zip(self.second.autocorrelation())
            .map(|(a, b)| a + b)
            .collect()
    }

    /// `2M` at lag zero and zero elsewhere.
    pub fn is_complementary(&self) -> bool {
        let m = self.len() as i64;
        self.autocorrelation_sum()
            .iter()
            .enumerate()
            .all(|(l, &r)| if l == 0 { r == 2 * m } else { r == 0 })
    }
}

/// Golay-Rudin-Shapiro pair of length `m`, grown from `([1], [1])` by
/// `a' = [a; b]`, `b' = [a; -b]`.
pub fn golay_pair(m: usize) -> Result<GolayPair> {
    require_power_of_two(m, "Golay pair length")?;
    let mut a = vec![1i8];
    let mut b = vec![1i8];
    while a.len() < m {
        let mut a_next = a.clone();
        a_next.extend_from_slice(&b);
        let mut b_next = a;
        b_next.extend(b.iter().map(|e| -e));
        a = a_next;
        b = b_next;
    }
    Ok(GolayPair {
        first: BinarySequence { entries: a },
        second: BinarySequence { entries: b },
    })
}

/// `M × M` ±1 matrix whose columns `n` and `n + M/2` are Golay pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GolayHadamardMatrix {
    order: usize,
    entries: DMatrix<i32>,
    companion: DMatrix<i32>,
}

impl GolayHadamardMatrix {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn entries(&self) -> &DMatrix<i32> {
        &self.entries
    }

    pub fn companion(&self) -> &DMatrix<i32> {
        &self.companion
    }

    /// Column `n` (1-based) as a binary sequence.
    pub fn column(&self, n: usize) -> BinarySequence {
        BinarySequence {
            entries: self.entries.column(n - 1).iter().map(|&e| e as i8).collect(),
        }
    }

    /// Columns `n` and `n + M/2` (1-based `n` in `1..=M/2`).
    pub fn column_pair(&self, n: usize) -> Result<GolayPair> {
        let half = self.order / 2;
        if self.order < 2 || n == 0 || n > half {
            return domain(format!("column index {n} outside 1..={half}"));
        }
        Ok(GolayPair {
            first: self.column(n),
            second: self.column(n + half),
        })
    }

    /// `Pᵀ P` in exact integer arithmetic.
    pub fn gram(&self) -> DMatrix<i64> {
        let p = self.entries.map(i64::from);
        p.transpose() * p
    }
}

/// Golay-Hadamard matrix of order `m` and its companion, from
/// `P = [[P, P], [P~, -P~]]`, `P~ = [[P, P], [-P~, P~]]` with `P_1 = P~_1 = [1]`.
pub fn golay_hadamard(m: usize) -> Result<GolayHadamardMatrix> {
    require_power_of_two(m, "Golay-Hadamard order")?;
    let mut p = DMatrix::from_element(1, 1, 1i32);
    let mut pt = p.clone();
    while p.nrows() < m {
        let h = p.nrows();
        let mut p_next = DMatrix::zeros(2 * h, 2 * h);
        let mut pt_next = DMatrix::zeros(2 * h, 2 * h);
        p_next.view_mut((0, 0), (h, h)).copy_from(&p);
        p_next.view_mut((0, h), (h, h)).copy_from(&p);
        p_next.view_mut((h, 0), (h, h)).copy_from(&pt);
        p_next.view_mut((h, h), (h, h)).copy_from(&(-&pt));
        pt_next.view_mut((0, 0), (h, h)).copy_from(&p);
        pt_next.view_mut((0, h), (h, h)).copy_from(&p);
        pt_next.view_mut((h, 0), (h, h)).copy_from(&(-&pt));
        pt_next.view_mut((h, h), (h, h)).copy_from(&pt);
        p = p_next;
        pt = pt_next;
    }
    Ok(GolayHadamardMatrix {
        order: m,
        entries: p,
        companion: pt,
    })
}

/// Per-slot base column indices (1-based, each in `1..=M/2`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SlotSchedule {
    base_indices: Vec<Vec<usize>>,
}

impl SlotSchedule {
    pub fn new(base_indices: Vec<Vec<usize>>) -> Result<Self> {
        for (k, slot) in base_indices.iter().enumerate() {
            if slot.is_empty() {
                return domain(format!("slot {} has no indices", k + 1));
            }
            if slot.contains(&0) {
                return domain(format!("slot {} uses index 0; indices are 1-based", k + 1));
            }
            for (i, a) in slot.iter().enumerate() {
                if slot[i + 1..].contains(a) {
                    return domain(format!("slot {} repeats index {a}", k + 1));
                }
            }
        }
        Ok(Self { base_indices })
    }

    /// Slot `k` (1-based) uses indices `((k-1)q + j) mod (M/2) + 1` for
    /// `j < q = N/2`. With `N = 2` this is `((k))` modulo `M/2` mapped into
    /// `1..=M/2`.
    pub fn cyclic(k: usize, m: usize, n: usize) -> Result<Self> {
        require_power_of_two(m, "antenna count")?;
        if m < 2 || n < 2 || n % 2 != 0 || n > m {
            return domain(format!("need even 2 <= N <= M, got N = {n}, M = {m}"));
        }
        let half = m / 2;
        let q = n / 2;
        let slots = (0..k)
            .map(|slot| (0..q).map(|j| (slot * q + j) % half + 1).collect())
            .collect();
        Self::new(slots)
    }

    pub fn slots(&self) -> usize {
        self.base_indices.len()
    }

    pub fn slot(&self, k: usize) -> &[usize] {
        &self.base_indices[k]
    }

    pub fn base_indices(&self) -> &[Vec<usize>] {
        &self.base_indices
    }

    fn check_fits(&self, m: usize, n: usize, side: &str) -> Result<()> {
        for (k, slot) in self.base_indices.iter().enumerate() {
            if slot.len() != n / 2 {
                return domain(format!(
                    "{side} slot {} has {} indices, expected N/2 = {}",
                    k + 1,
                    slot.len(),
                    n / 2
                ));
            }
            if let Some(bad) = slot.iter().find(|&&i| i > m / 2) {
                return domain(format!("{side} slot {} index {bad} outside 1..={}", k + 1, m / 2));
            }
        }
        Ok(())
    }
}

/// Outcome of the cross-slot disjointness check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchedulePairCheck {
    pub k: usize,
    pub l: usize,
    pub tx_disjoint: bool,
    pub rx_disjoint: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScheduleReport {
    pub pairs: Vec<SchedulePairCheck>,
    pub pass: bool,
}

/// For each slot pair `k < l`, records whether the transmit or the receive
/// index sets are disjoint. Passes iff every pair has at least one.
pub fn verify_schedule(tx: &SlotSchedule, rx: &SlotSchedule, k: usize) -> ScheduleReport {
    let disjoint = |a: &[usize], b: &[usize]| a.iter().all(|i| !b.contains(i));
    let mut pairs = Vec::new();
    for a in 0..k {
        for b in a + 1..k {
            let tx_disjoint = disjoint(tx.slot(a % tx.slots()), tx.slot(b % tx.slots()));
            let rx_disjoint = disjoint(rx.slot(a % rx.slots()), rx.slot(b % rx.slots()));
            pairs.push(SchedulePairCheck {
                k: a + 1,
                l: b + 1,
                tx_disjoint,
                rx_disjoint,
            });
        }
    }
    let pass = pairs.iter().all(|p| p.tx_disjoint || p.rx_disjoint);
    ScheduleReport { pairs, pass }
}

/// How a codebook was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Design {
    OmniGolay,
    QuasiOmniZc,
    DftSweep,
    RandomPhase,
    Explicit,
}

impl Design {
    pub fn label(self) -> &'static str {
        match self {
            Design::OmniGolay => "omni-golay",
            Design::QuasiOmniZc => "quasi-omni-zc",
            Design::DftSweep => "dft-sweep",
            Design::RandomPhase => "random-phase",
            Design::Explicit => "explicit",
        }
    }
}

impl std::fmt::Display for Design {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for Design {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "omni-golay" => Ok(Design::OmniGolay),
            "quasi-omni-zc" => Ok(Design::QuasiOmniZc),
            "dft-sweep" => Ok(Design::DftSweep),
            "random-phase" => Ok(Design::RandomPhase),
            "explicit" => Ok(Design::Explicit),
            other => domain(format!("unknown design `{other}`")),
        }
    }
}

/// Per-slot precoders and combiners.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook<T: Real> {
    pub mt: usize,
    pub nt: usize,
    pub mr: usize,
    pub nr: usize,
    pub k: usize,
    pub design: Design,
    pub schedule_t: Option<SlotSchedule>,
    pub schedule_r: Option<SlotSchedule>,
    pub w: Vec<CMatrix<T>>,
    pub f: Vec<CMatrix<T>>,
}

impl<T: Real> Codebook<T> {
    /// Assembles a codebook from explicit per-slot matrices.
    pub fn from_parts(
        design: Design,
        w: Vec<CMatrix<T>>,
        f: Vec<CMatrix<T>>,
        schedule_t: Option<SlotSchedule>,
        schedule_r: Option<SlotSchedule>,
    ) -> Result<Self> {
        if w.is_empty() || w.len() != f.len() {
            return Err(Error::Dimension(format!(
                "need the same positive number of precoders and combiners, got {} and {}",
                w.len(),
                f.len()
            )));
        }
        let (mt, nt) = w[0].shape();
        let (mr, nr) = f[0].shape();
        if w.iter().any(|m| m.shape() != (mt, nt)) || f.iter().any(|m| m.shape() != (mr, nr)) {
            return Err(Error::Dimension("slot matrices differ in shape".into()));
        }
        if nt == 0 || nr == 0 || nt > mt || nr > mr {
            return Err(Error::Dimension(format!(
                "need 1 <= N <= M, got W {mt}x{nt}, F {mr}x{nr}"
            )));
        }
        Ok(Self {
            mt,
            nt,
            mr,
            nr,
            k: w.len(),
            design,
            schedule_t,
            schedule_r,
            w,
            f,
        })
    }

    /// Replaces the receive side with the combiners of `other`.
    pub fn with_combiners_of(self, other: &Codebook<T>, design: Design) -> Result<Self> {
        if other.k != self.k {
            return Err(Error::Dimension(format!(
                "slot counts differ: {} vs {}",
                self.k, other.k
            )));
        }
        Codebook::from_parts(
            design,
            self.w,
            other.f.clone(),
            self.schedule_t,
            other.schedule_r.clone(),
        )
    }
}

fn scaled_columns<T: Real>(p: &GolayHadamardMatrix, indices: &[usize]) -> CMatrix<T> {
    let m = p.order();
    let scale = T::one() / T::from_usize_lossy(m).sqrt();
    let cols: Vec<usize> = indices.iter().flat_map(|&n| [n - 1, n - 1 + m / 2]).collect();
    CMatrix::from_fn(m, cols.len(), |row, c| {
        Complex::new(T::from_i32(p.entries()[(row, cols[c])]).unwrap() * scale, T::zero())
    })
}

fn check_side(m: usize, n: usize, side: &str) -> Result<()> {
    require_power_of_two(m, &format!("M_{side}"))?;
    if n % 2 != 0 {
        return domain(format!("N_{side} = {n} must be even"));
    }
    if n < 2 || n > m {
        return domain(format!("N_{side} = {n} must satisfy 2 <= N <= M = {m}"));
    }
    Ok(())
}

/// Omnidirectional codebook: slot `k` takes columns `n` and `n + M/2` of
/// `P_M / sqrt(M)` for each base index `n` of the slot.
pub fn build_omni_codebook<T: Real>(
    mt: usize,
    nt: usize,
    mr: usize,
    nr: usize,
    k: usize,
    schedule_t: &SlotSchedule,
    schedule_r: &SlotSchedule,
) -> Result<Codebook<T>> {
    check_side(mt, nt, "t")?;
    check_side(mr, nr, "r")?;
    if k == 0 {
        return domain("K must be at least 1");
    }
    if schedule_t.slots() != k || schedule_r.slots() != k {
        return domain(format!(
            "schedules cover {} and {} slots, expected K = {k}",
            schedule_t.slots(),
            schedule_r.slots()
        ));
    }
    schedule_t.check_fits(mt, nt, "transmit")?;
    schedule_r.check_fits(mr, nr, "receive")?;
    let pt = golay_hadamard(mt)?;
    let pr = golay_hadamard(mr)?;
    let w = (0..k).map(|s| scaled_columns(&pt, schedule_t.slot(s))).collect();
    let f = (0..k).map(|s| scaled_columns(&pr, schedule_r.slot(s))).collect();
    Codebook::from_parts(
        Design::OmniGolay,
        w,
        f,
        Some(schedule_t.clone()),
        Some(schedule_r.clone()),
    )
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Zadoff-Chu column of length `len` with the given root, scaled to
/// modulus `1/sqrt(len)`.
pub fn zc_precoder<T: Real>(len: usize, root: u64) -> Result<CVector<T>> {
    if len == 0 {
        return domain("ZC length must be positive");
    }
    if gcd(root, len as u64) != 1 {
        return domain(format!("ZC root {root} is not coprime with length {len}"));
    }
    let l = len as u64;
    let scale = 1.0 / (len as f64).sqrt();
    Ok(CVector::from_fn(len, |n, _| {
        let n = n as u64;
        // Phase numerator reduced mod 2L keeps the argument small and exact.
        let num = if len % 2 == 0 {
            (root % (2 * l)) * ((n * n) % (2 * l)) % (2 * l)
        } else {
            (root % (2 * l)) * ((n * (n + 1)) % (2 * l)) % (2 * l)
        };
        let phase = -std::f64::consts::PI * num as f64 / len as f64;
        Complex::new(T::lit(scale * phase.cos()), T::lit(scale * phase.sin()))
    }))
}

fn dft_column<T: Real>(m: usize, k: usize) -> CMatrix<T> {
    let scale = 1.0 / (m as f64).sqrt();
    CMatrix::from_fn(m, 1, |row, _| {
        let phase = std::f64::consts::TAU * ((k * row) % m) as f64 / m as f64;
        Complex::new(T::lit(scale * phase.cos()), T::lit(scale * phase.sin()))
    })
}

fn trivial_side<T: Real>(k: usize) -> Vec<CMatrix<T>> {
    vec![CMatrix::from_element(1, 1, Complex::new(T::one(), T::zero())); k]
}

/// Beam sweep over DFT columns: slot `k` (1-based) steers to `θ = k / M_t`.
/// The receive side is a single antenna.
pub fn dft_sweep_codebook<T: Real>(mt: usize, k: usize) -> Result<Codebook<T>> {
    if k == 0 || k > mt {
        return domain(format!("need 1 <= K <= M_t, got K = {k}, M_t = {mt}"));
    }
    let w = (1..=k).map(|slot| dft_column(mt, slot)).collect();
    Codebook::from_parts(Design::DftSweep, w, trivial_side(k), None, None)
}

/// The same ZC precoder in every slot; single receive antenna.
pub fn zc_codebook<T: Real>(len: usize, root: u64, k: usize) -> Result<Codebook<T>> {
    if k == 0 {
        return domain("K must be at least 1");
    }
    let v = zc_precoder::<T>(len, root)?;
    let w = vec![CMatrix::from_column_slice(len, 1, v.as_slice()); k];
    Codebook::from_parts(Design::QuasiOmniZc, w, trivial_side(k), None, None)
}

/// `M × N` matrices per slot with entries `e^{jφ}/sqrt(M)`, phases i.i.d.
/// uniform from the seeded stream. The receive side is a single antenna.
pub fn random_phase_codebook<T: Real>(m: usize, n: usize, k: usize, seed: u64) -> Result<Codebook<T>> {
    let w = random_phase_side(m, n, k, seed)?;
    Codebook::from_parts(Design::RandomPhase, w, trivial_side(k), None, None)
}

/// Random-phase matrices for one side of a link.
pub fn random_phase_side<T: Real>(m: usize, n: usize, k: usize, seed: u64) -> Result<Vec<CMatrix<T>>> {
    if m == 0 || n == 0 || k == 0 || n > m {
        return domain(format!("need 1 <= N <= M and K >= 1, got M={m} N={n} K={k}"));
    }
    let mut stream = rng::stream(seed);
    let scale = 1.0 / (m as f64).sqrt();
    Ok((0..k)
        .map(|_| {
            let mut mat = CMatrix::zeros(m, n);
            for c in 0..n {
                for r in 0..m {
                    let phi = rng::uniform_phase(&mut stream);
                    mat[(r, c)] = Complex::new(T::lit(scale * phi.cos()), T::lit(scale * phi.sin()));
                }
            }
            mat
        })
        .collect())
}

/// Standard-basis precoders `W_k = e_k` for `k = 1..=m`; single receive
/// antenna. These are flat but not constant-modulus.
pub fn standard_basis_codebook<T: Real>(m: usize) -> Result<Codebook<T>> {
    if m == 0 {
        return domain("M must be positive");
    }
    let w = (0..m)
        .map(|k| {
            let mut e = CMatrix::zeros(m, 1);
            e[(k, 0)] = Complex::new(T::one(), T::zero());
            e
        })
        .collect();
    Codebook::from_parts(Design::Explicit, w, trivial_side(m), None, None)
}

/// `G` equally spaced virtual angles `g / G`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AngleGrid {
    points: usize,
}

impl AngleGrid {
    pub fn new(points: usize) -> Result<Self> {
        if points < 2 {
            return domain(format!("angle grid needs at least 2 points, got {points}"));
        }
        Ok(Self { points })
    }

    /// Grid that satisfies `G >= 2 M` for the given array size.
    pub fn for_array(points: usize, m: usize) -> Result<Self> {
        if points < 2 * m {
            return domain(format!(
                "grid of {points} points undersamples an array of {m} antennas (need >= {})",
                2 * m
            ));
        }
        Self::new(points)
    }

    pub fn len(&self) -> usize {
        self.points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn theta(&self, g: usize) -> f64 {
        g as f64 / self.points as f64
    }

    pub fn thetas(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.points).map(|g| self.theta(g))
    }
}

/// `vᴴ(θ) W Wᴴ v(θ) = ‖Wᴴ v(θ)‖²` at every grid point, with
/// `v(θ)_m = e^{j2πmθ}`.
pub fn beam_pattern<T: Real>(w: &CMatrix<T>, grid: &AngleGrid) -> Vec<T> {
    let g_len = grid.len();
    let twiddle: Vec<Complex<T>> = (0..g_len)
        .map(|i| {
            let a = std::f64::consts::TAU * i as f64 / g_len as f64;
            Complex::new(T::lit(a.cos()), T::lit(a.sin()))
        })
        .collect();
    let (m, n) = w.shape();
    (0..g_len)
        .map(|g| {
            let mut power = T::zero();
            for c in 0..n {
                let mut acc = Complex::new(T::zero(), T::zero());
                for r in 0..m {
                    acc += w[(r, c)].conj() * twiddle[(r * g) % g_len];
                }
                power += acc.norm_sqr();
            }
            power
        })
        .collect()
}

/// Largest `| |entry| - 1/sqrt(M) |` over all slots of one side.
pub fn modulus_deviation<T: Real>(mats: &[CMatrix<T>]) -> f64 {
    mats.iter()
        .map(|m| {
            let target = 1.0 / (m.nrows() as f64).sqrt();
            m.iter()
                .map(|z| (z.modulus().as_f64() - target).abs())
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

/// Largest `|pattern - N|` over the grid and all slots of one side.
pub fn flatness_deviation<T: Real>(mats: &[CMatrix<T>], grid: &AngleGrid) -> f64 {
    mats.iter()
        .map(|m| {
            let n = m.ncols() as f64;
            beam_pattern(m, grid)
                .into_iter()
                .map(|p| (p.as_f64() - n).abs())
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

/// Largest entry of `Wᴴ W - I` over all slots of one side.
pub fn unitarity_deviation<T: Real>(mats: &[CMatrix<T>]) -> f64 {
    mats.iter()
        .map(|m| {
            let gram = m.adjoint() * m;
            let eye = CMatrix::<T>::identity(m.ncols(), m.ncols());
            crate::linalg::max_abs_diff(&gram, &eye).as_f64()
        })
        .fold(0.0, f64::max)
}

/// For each slot pair the smaller of `max|W_kᴴ W_l|` and `max|F_kᴴ F_l|`;
/// returns the worst pair (zero when `K = 1`).
pub fn cross_slot_deviation<T: Real>(cb: &Codebook<T>) -> f64 {
    let mut worst = 0.0f64;
    for a in 0..cb.k {
        for b in a + 1..cb.k {
            let tx = crate::linalg::max_abs(&(cb.w[a].adjoint() * &cb.w[b])).as_f64();
            let rx = crate::linalg::max_abs(&(cb.f[a].adjoint() * &cb.f[b])).as_f64();
            worst = worst.max(tx.min(rx));
        }
    }
    worst
}

/// Average coverage `(1/(K N_r N_t)) Σ_k tx_k(θ_t) rx_k(θ_r)` on the product
/// grid. Returns `(max pointwise |value - 1|, |grid mean - 1|)`.
pub fn average_coverage<T: Real>(cb: &Codebook<T>, grid: &AngleGrid) -> (f64, f64) {
    let g = grid.len();
    let tx: Vec<Vec<f64>> =
        cb.w.iter()
            .map(|w| beam_pattern(w, grid).into_iter().map(Real::as_f64).collect())
            .collect();
    let rx: Vec<Vec<f64>> =
        cb.f.iter()
            .map(|f| beam_pattern(f, grid).into_iter().map(Real::as_f64).collect())
            .collect();
    let norm = (cb.k * cb.nr * cb.nt) as f64;
    let mut worst = 0.0f64;
    let mut total = 0.0f64;
    for it in 0..g {
        for ir in 0..g {
            let v: f64 = (0..cb.k).map(|k| tx[k][it] * rx[k][ir]).sum::<f64>() / norm;
            worst = worst.max((v - 1.0).abs());
            total += v;
        }
    }
    (worst, (total / (g * g) as f64 - 1.0).abs())
}

/// One verified condition.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub deviation: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    fn new(name: &'static str, deviation: f64, tolerance: f64) -> Self {
        Self {
            name,
            deviation,
            tolerance,
            pass: deviation <= tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodebookReport {
    pub checks: Vec<Check>,
}

impl CodebookReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Checks constant modulus, per-slot flatness, unitarity, cross-slot
/// orthogonality and pointwise average coverage.
///
/// Flatness uses a `flat_grid`-point grid; the average coverage product grid
/// uses `coverage_grid` points per axis.
pub fn verify_codebook<T: Real>(cb: &Codebook<T>, flat_grid: usize, coverage_grid: usize) -> Result<CodebookReport> {
    let m = cb.mt.max(cb.mr);
    let flat = AngleGrid::for_array(flat_grid, m)?;
    let cover = AngleGrid::for_array(coverage_grid, m)?;
    let modulus = modulus_deviation(&cb.w).max(modulus_deviation(&cb.f));
    let unitary = unitarity_deviation(&cb.w).max(unitarity_deviation(&cb.f));
    let (pointwise, _) = average_coverage(cb, &cover);
    let mut checks = vec![
        Check::new("constant-modulus", modulus, MATRIX_TOL),
        Check::new("flatness-tx", flatness_deviation(&cb.w, &flat), FLATNESS_TOL),
        Check::new("flatness-rx", flatness_deviation(&cb.f, &flat), FLATNESS_TOL),
        Check::new("unitarity", unitary, MATRIX_TOL),
        Check::new("cross-slot-orthogonality", cross_slot_deviation(cb), MATRIX_TOL),
        Check::new("average-coverage", pointwise, FLATNESS_TOL),
    ];
    if let (Some(t), Some(r)) = (&cb.schedule_t, &cb.schedule_r) {
        let report = verify_schedule(t, r, cb.k);
        checks.push(Check::new(
            "schedule-disjointness",
            if report.pass { 0.0 } else { 1.0 },
            0.0,
        ));
    }
    Ok(CodebookReport { checks })
}

/// CSV with header `theta,slot,side,power`; slots are 1-based.
pub fn pattern_csv<T: Real>(cb: &Codebook<T>, grid: &AngleGrid) -> String {
    let mut out = String::from("theta,slot,side,power\n");
    for (side, mats) in [("tx", &cb.w), ("rx", &cb.f)] {
        for (k, m) in mats.iter().enumerate() {
            for (g, p) in beam_pattern(m, grid).into_iter().enumerate() {
                writeln!(out, "{},{},{},{}", grid.theta(g), k + 1, side, p.as_f64()).unwrap();
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedules {
    pub tx: Option<SlotSchedule>,
    pub rx: Option<SlotSchedule>,
}

type JsonMatrix = Vec<Vec<[f64; 2]>>;

/// On-disk codebook: matrices are row-major lists of `[re, im]` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodebookDoc {
    pub mt: usize,
    pub nt: usize,
    pub mr: usize,
    pub nr: usize,
    pub k: usize,
    pub design: Design,
    pub schedules: Schedules,
    pub w: Vec<JsonMatrix>,
    pub f: Vec<JsonMatrix>,
}

fn to_rows<T: Real>(m: &CMatrix<T>) -> JsonMatrix {
    (0..m.nrows())
        .map(|r| {
            (0..m.ncols())
                .map(|c| [m[(r, c)].re.as_f64(), m[(r, c)].im.as_f64()])
                .collect()
        })
        .collect()
}

fn from_rows<T: Real>(rows: &JsonMatrix, what: &str) -> Result<CMatrix<T>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if nrows == 0 || ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Dimension(format!(
            "{what} is not a non-empty rectangular matrix"
        )));
    }
    Ok(CMatrix::from_fn(nrows, ncols, |r, c| {
        Complex::new(T::lit(rows[r][c][0]), T::lit(rows[r][c][1]))
    }))
}

impl<T: Real> Codebook<T> {
    pub fn to_doc(&self) -> CodebookDoc {
        CodebookDoc {
            mt: self.mt,
            nt: self.nt,
            mr: self.mr,
            nr: self.nr,
            k: self.k,
            design: self.design,
            schedules: Schedules {
                tx: self.schedule_t.clone(),
                rx: self.schedule_r.clone(),
            },
            w: self.w.iter().map(to_rows).collect(),
            f: self.f.iter().map(to_rows).collect(),
        }
    }

    pub fn from_doc(doc: &CodebookDoc) -> Result<Self> {
        let w = doc
            .w
            .iter()
            .enumerate()
            .map(|(k, m)| from_rows(m, &format!("w[{k}]")))
            .collect::<Result<Vec<_>>>()?;
        let f = doc
            .f
            .iter()
            .enumerate()
            .map(|(k, m)| from_rows(m, &format!("f[{k}]")))
            .collect::<Result<Vec<_>>>()?;
        let cb = Codebook::from_parts(doc.design, w, f, doc.schedules.tx.clone(), doc.schedules.rx.clone())?;
        if (cb.mt, cb.nt, cb.mr, cb.nr, cb.k) != (doc.mt, doc.nt, doc.mr, doc.nr, doc.k) {
            return Err(Error::Dimension(format!(
                "header says mt={} nt={} mr={} nr={} k={} but matrices are {}x{}, {}x{}, K={}",
                doc.mt, doc.nt, doc.mr, doc.nr, doc.k, cb.mt, cb.nt, cb.mr, cb.nr, cb.k
            )));
        }
        Ok(cb)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_doc()).expect("codebook serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: CodebookDoc = serde_json::from_str(text).map_err(|e| Error::Domain(format!("codebook JSON: {e}")))?;
        Self::from_doc(&doc)
    }
}

/// Ensemble mean of the pattern, used by tests of the random design.
pub fn mean_pattern<T: Real>(mats: &[CMatrix<T>], grid: &AngleGrid) -> Vec<f64> {
    let mut acc = vec![0.0; grid.len()];
    for m in mats {
        for (a, p) in acc.iter_mut().zip(beam_pattern(m, grid)) {
            *a += p.as_f64();
        }
    }
    acc.iter().map(|a| a / mats.len() as f64).collect()
}

/// Draws a random unitary `n × n` matrix (QR of a complex Gaussian matrix).
pub fn random_unitary<T: Real, R: Rng + ?Sized>(n: usize, stream: &mut R) -> CMatrix<T> {
    let g = CMatrix::from_fn(n, n, |_, _| rng::complex_normal::<T, _>(stream));
    let qr = g.qr();
    let q = qr.q();
    let r = qr.r();
    let phases = DVector::from_fn(n, |i, _| {
        let d = r[(i, i)];
        let mag = d.modulus();
        if mag > T::zero() {
            d / Complex::new(mag, T::zero())
        } else {
            Complex::new(T::one(), T::zero())
        }
    });
    q * CMatrix::from_diagonal(&phases)
}
