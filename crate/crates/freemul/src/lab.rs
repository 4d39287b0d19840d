//! Monte Carlo laboratory: Haar-rotated products `A^{1/2} U B U* A^{1/2}`, their spectra,
//! singular vectors and resolvent entries, and the empirical statistics compared with
//! the deterministic predictions.

use faer::{c64, Mat};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use freemul_core::{QuantileTable, SpectralMeasure, SpikedModel};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ensemble {
    Unitary,
    Orthogonal,
}

/// Matrix entry type the sampler and decompositions are generic over.
pub trait Entry: faer::traits::ComplexField<Real = f64> + Copy + Send + Sync {
    fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> Self;
    fn modulus_sq(self) -> f64;
    /// `x / |x|`, or one at zero.
    fn unit_phase(self) -> Self;
    fn times(self, s: f64) -> Self;
    fn to_c64(self) -> c64;
}

impl Entry for f64 {
    fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.sample(StandardNormal)
    }
    fn modulus_sq(self) -> f64 {
        self * self
    }
    fn unit_phase(self) -> Self {
        if self < 0.0 {
            -1.0
        } else {
            1.0
        }
    }
    fn times(self, s: f64) -> Self {
        self * s
    }
    fn to_c64(self) -> c64 {
        c64::new(self, 0.0)
    }
}

impl Entry for c64 {
    fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c64::new(re, im) * core::f64::consts::FRAC_1_SQRT_2
    }
    fn modulus_sq(self) -> f64 {
        self.norm_sqr()
    }
    fn unit_phase(self) -> Self {
        let r = self.norm();
        if r == 0.0 {
            c64::new(1.0, 0.0)
        } else {
            self / r
        }
    }
    fn times(self, s: f64) -> Self {
        self * s
    }
    fn to_c64(self) -> c64 {
        self
    }
}

/// Independent generator for one trial: the stream index is the trial number.
pub fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

/// Haar-distributed matrix from the QR factorisation of a Gaussian matrix, with the
/// columns of `Q` multiplied by the phases of `diag(R)`.
pub fn haar<T: Entry, R: Rng + ?Sized>(n: usize, rng: &mut R) -> Mat<T> {
    haar_columns(n, n, rng)
}

/// First `k` columns of the matrix [`haar`] would return from the same generator state.
pub fn haar_columns<T: Entry, R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Mat<T> {
    // column-major fill: the first k columns use the first n·k draws
    let mut g = Mat::<T>::zeros(n, k);
    for j in 0..k {
        for i in 0..n {
            g[(i, j)] = T::gaussian(rng);
        }
    }
    let qr = g.qr();
    let r = qr.thin_R();
    let phases: Vec<T> = (0..k).map(|j| r[(j, j)].unit_phase()).collect();
    let mut q = qr.compute_thin_Q();
    for (j, p) in phases.iter().enumerate() {
        for i in 0..n {
            q[(i, j)] = q[(i, j)] * *p;
        }
    }
    q
}

pub enum HaarMatrix {
    Real(Mat<f64>),
    Complex(Mat<c64>),
}

impl HaarMatrix {
    pub fn n(&self) -> usize {
        match self {
            HaarMatrix::Real(m) => m.nrows(),
            HaarMatrix::Complex(m) => m.nrows(),
        }
    }

    pub fn entry(&self, i: usize, j: usize) -> c64 {
        match self {
            HaarMatrix::Real(m) => c64::new(m[(i, j)], 0.0),
            HaarMatrix::Complex(m) => m[(i, j)],
        }
    }

    /// `‖U*U − I‖_F / √n`.
    pub fn unitarity_defect(&self) -> f64 {
        fn defect<T: Entry>(u: &Mat<T>) -> f64 {
            let n = u.nrows();
            let p = u.adjoint() * u;
            let mut acc = 0.0;
            for j in 0..n {
                for i in 0..n {
                    let d = p[(i, j)].to_c64() - if i == j { c64::new(1.0, 0.0) } else { c64::new(0.0, 0.0) };
                    acc += d.norm_sqr();
                }
            }
            acc.sqrt() / (n as f64).sqrt()
        }
        match self {
            HaarMatrix::Real(m) => defect(m),
            HaarMatrix::Complex(m) => defect(m),
        }
    }
}

pub fn sample_haar<R: Rng + ?Sized>(n: usize, ensemble: Ensemble, rng: &mut R) -> HaarMatrix {
    match ensemble {
        Ensemble::Orthogonal => HaarMatrix::Real(haar(n, rng)),
        Ensemble::Unitary => HaarMatrix::Complex(haar(n, rng)),
    }
}

/// Diagonal model `(A, B)` of dimension `n` with a fixed seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInstance {
    pub n: usize,
    /// Descending.
    pub a_diag: Vec<f64>,
    /// Descending.
    pub b_diag: Vec<f64>,
    pub ensemble: Ensemble,
    pub seed: u64,
    /// Coordinate of each A-spike in `a_diag`, in declaration order.
    pub a_spikes: Vec<usize>,
    pub b_spikes: Vec<usize>,
}

fn sort_descending(values: &[f64], tracked: usize) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]));
    let sorted = order.iter().map(|&i| values[i]).collect();
    let mut position = vec![0; values.len()];
    for (p, &i) in order.iter().enumerate() {
        position[i] = p;
    }
    (sorted, position[..tracked].to_vec())
}

impl ModelInstance {
    pub fn new(a_diag: Vec<f64>, b_diag: Vec<f64>, ensemble: Ensemble, seed: u64) -> Result<Self> {
        Self::with_spikes(a_diag, b_diag, 0, 0, ensemble, seed)
    }

    // The first `r` entries of `a_diag` (and `s` of `b_diag`) are the spiked ones.
    fn with_spikes(
        a_diag: Vec<f64>,
        b_diag: Vec<f64>,
        r: usize,
        s: usize,
        ensemble: Ensemble,
        seed: u64,
    ) -> Result<Self> {
        let n = a_diag.len();
        if n < 2 || b_diag.len() != n {
            return Err(Error::Config("diagonals must have a common length n >= 2".into()));
        }
        if a_diag.iter().chain(&b_diag).any(|x| !(*x > 0.0 && x.is_finite())) {
            return Err(Error::Config("diagonal entries must be positive".into()));
        }
        let (a_diag, a_spikes) = sort_descending(&a_diag, r);
        let (b_diag, b_spikes) = sort_descending(&b_diag, s);
        Ok(Self { n, a_diag, b_diag, ensemble, seed, a_spikes, b_spikes })
    }

    /// Diagonals made of the `n`-quantiles of the two measures.
    pub fn from_measures(
        mu_a: &SpectralMeasure,
        mu_b: &SpectralMeasure,
        n: usize,
        ensemble: Ensemble,
        seed: u64,
    ) -> Result<Self> {
        Self::new(mu_a.quantile_diagonal(n), mu_b.quantile_diagonal(n), ensemble, seed)
    }

    /// Quantile diagonals with the top entries replaced by the spiked values.
    pub fn from_spiked(model: &SpikedModel, ensemble: Ensemble, seed: u64) -> Result<Self> {
        let n = model.n();
        let mut a = model.mu_a().quantile_diagonal(n);
        let mut b = model.mu_b().quantile_diagonal(n);
        let a_hat = model.a_hat();
        let b_hat = model.b_hat();
        a[..a_hat.len()].copy_from_slice(&a_hat);
        b[..b_hat.len()].copy_from_slice(&b_hat);
        Self::with_spikes(a, b, a_hat.len(), b_hat.len(), ensemble, seed)
    }

    pub fn spike_count(&self) -> usize {
        self.a_spikes.len() + self.b_spikes.len()
    }
}

/// Eigenvectors stored in the precision of the sampled ensemble.
#[derive(Debug, Clone)]
pub enum Vectors {
    Real(Mat<f64>),
    Complex(Mat<c64>),
}

impl Vectors {
    pub fn modulus_sq(&self, i: usize, k: usize) -> f64 {
        match self {
            Vectors::Real(m) => m[(i, k)] * m[(i, k)],
            Vectors::Complex(m) => m[(i, k)].norm_sqr(),
        }
    }

    /// `max_i |u_k(i)|²`.
    pub fn peak(&self, k: usize) -> f64 {
        let n = match self {
            Vectors::Real(m) => m.nrows(),
            Vectors::Complex(m) => m.nrows(),
        };
        (0..n).map(|i| self.modulus_sq(i, k)).fold(0.0, f64::max)
    }
}

/// Spectrum of `H̃ = A^{1/2} U B U* A^{1/2}` (descending) with, optionally, the left and
/// right singular vectors of `Y = A^{1/2} U B^{1/2}`.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub eigenvalues: Vec<f64>,
    /// Columns `u_k`, ordered like `eigenvalues`.
    pub left: Option<Vectors>,
    /// Columns `v_k = Y* u_k / √λ_k`.
    pub right: Option<Vectors>,
}

fn build_y<T: Entry>(u: &Mat<T>, a: &[f64], b: &[f64]) -> Mat<T> {
    let n = u.nrows();
    let sa: Vec<f64> = a.iter().map(|x| x.sqrt()).collect();
    let sb: Vec<f64> = b.iter().map(|x| x.sqrt()).collect();
    Mat::from_fn(n, n, |i, j| u[(i, j)].times(sa[i] * sb[j]))
}

fn decompose_generic<T: Entry>(u: &Mat<T>, a: &[f64], b: &[f64], vectors: bool) -> Result<(Vec<f64>, Option<(Mat<T>, Mat<T>)>)> {
    let n = u.nrows();
    let y = build_y(u, a, b);
    let h = &y * y.adjoint();
    if !vectors {
        let mut ev = h
            .self_adjoint_eigenvalues(faer::Side::Lower)
            .map_err(|_| Error::DecompositionFailure)?;
        ev.reverse();
        return Ok((ev, None));
    }
    let evd = h.self_adjoint_eigen(faer::Side::Lower).map_err(|_| Error::DecompositionFailure)?;
    let s = evd.S();
    let ev: Vec<f64> = (0..n).rev().map(|k| faer::traits::math_utils::real(&s[k])).collect();
    let uv = evd.U();
    let left = Mat::<T>::from_fn(n, n, |i, k| uv[(i, n - 1 - k)]);
    let mut right = y.adjoint() * &left;
    for (k, &lambda) in ev.iter().enumerate() {
        let scale = 1.0 / lambda.max(f64::MIN_POSITIVE).sqrt();
        for i in 0..n {
            right[(i, k)] = right[(i, k)].times(scale);
        }
    }
    Ok((ev, Some((left, right))))
}

fn companion_generic<T: Entry>(u: &Mat<T>, a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    let y = build_y(u, a, b);
    let h = y.adjoint() * &y;
    let mut ev = h
        .self_adjoint_eigenvalues(faer::Side::Lower)
        .map_err(|_| Error::DecompositionFailure)?;
    ev.reverse();
    Ok(ev)
}

/// `(high, low)` when the first half of `d` equals `high` and the second half `low < high`.
fn halves(d: &[f64]) -> Option<(f64, f64)> {
    let n = d.len();
    if n % 2 != 0 {
        return None;
    }
    let (hi, lo) = (d[0], d[n - 1]);
    let split = d[..n / 2].iter().all(|x| *x == hi) && d[n / 2..].iter().all(|x| *x == lo);
    (split && hi > lo).then_some((hi, lo))
}

// A = a_hi P + a_lo (1 − P), B = b_hi Q + b_lo (1 − Q) with rank P = rank Q = n/2. In the
// plane spanned by a principal pair of the two ranges, with cosine c, the restriction of
// A^{1/2} B A^{1/2} has determinant a_hi a_lo b_hi b_lo and the trace below. The cosines
// are the singular values of the top-left n/2 block of U.
fn halves_spectrum<T: Entry>(u_half: &Mat<T>, a: (f64, f64), b: (f64, f64)) -> Result<Vec<f64>> {
    let k = u_half.ncols();
    let block = u_half.as_ref().submatrix(0, 0, k, k).to_owned();
    let cosines = block.singular_values().map_err(|_| Error::DecompositionFailure)?;
    let det = a.0 * a.1 * b.0 * b.1;
    let mut ev = Vec::with_capacity(2 * k);
    for c in cosines {
        let c2 = c.min(1.0) * c.min(1.0);
        let trace = b.1 * (a.0 + a.1) + (b.0 - b.1) * (a.0 * c2 + a.1 * (1.0 - c2));
        let root = (trace * trace - 4.0 * det).max(0.0).sqrt();
        let top = 0.5 * (trace + root);
        ev.push(top);
        ev.push(det / top);
    }
    ev.sort_by(|x, y| y.total_cmp(x));
    Ok(ev)
}

/// Samples the Haar matrix of trial `trial` and decomposes the model built from it.
///
/// Without eigenvectors, diagonals that take two values on equal halves are handled
/// through the principal angles between the two spectral subspaces, which needs only the
/// first `n/2` Haar columns and an `n/2 × n/2` singular value decomposition.
pub fn build_and_decompose(inst: &ModelInstance, trial: usize, vectors: bool) -> Result<Decomposition> {
    faer::set_global_parallelism(faer::Par::Seq);
    let mut rng = trial_rng(inst.seed, trial);
    if !vectors {
        if let (Some(a), Some(b)) = (halves(&inst.a_diag), halves(&inst.b_diag)) {
            let k = inst.n / 2;
            let eigenvalues = match inst.ensemble {
                Ensemble::Orthogonal => halves_spectrum(&haar_columns::<f64, _>(inst.n, k, &mut rng), a, b)?,
                Ensemble::Unitary => halves_spectrum(&haar_columns::<c64, _>(inst.n, k, &mut rng), a, b)?,
            };
            return Ok(Decomposition { eigenvalues, left: None, right: None });
        }
    }
    match sample_haar(inst.n, inst.ensemble, &mut rng) {
        HaarMatrix::Real(u) => {
            let (eigenvalues, vecs) = decompose_generic(&u, &inst.a_diag, &inst.b_diag, vectors)?;
            let (left, right) = match vecs {
                Some((l, r)) => (Some(Vectors::Real(l)), Some(Vectors::Real(r))),
                None => (None, None),
            };
            Ok(Decomposition { eigenvalues, left, right })
        }
        HaarMatrix::Complex(u) => {
            let (eigenvalues, vecs) = decompose_generic(&u, &inst.a_diag, &inst.b_diag, vectors)?;
            let (left, right) = match vecs {
                Some((l, r)) => (Some(Vectors::Complex(l)), Some(Vectors::Complex(r))),
                None => (None, None),
            };
            Ok(Decomposition { eigenvalues, left, right })
        }
    }
}

/// Spectrum of `B^{1/2} U* A U B^{1/2}` for the same Haar sample as `build_and_decompose`.
pub fn companion_eigenvalues(inst: &ModelInstance, trial: usize) -> Result<Vec<f64>> {
    faer::set_global_parallelism(faer::Par::Seq);
    let mut rng = trial_rng(inst.seed, trial);
    match sample_haar(inst.n, inst.ensemble, &mut rng) {
        HaarMatrix::Real(u) => companion_generic(&u, &inst.a_diag, &inst.b_diag),
        HaarMatrix::Complex(u) => companion_generic(&u, &inst.a_diag, &inst.b_diag),
    }
}

/// Runs `build_and_decompose` for trials `0..trials`, in parallel, in trial order.
pub fn decompose_trials(inst: &ModelInstance, trials: usize, vectors: bool) -> Result<Vec<Decomposition>> {
    (0..trials)
        .into_par_iter()
        .map(|t| build_and_decompose(inst, t, vectors))
        .collect()
}

/// Diagonal resolvent entries `Σ_k |w_k(i)|² / (λ_k − z)` over the eigen-indices not in
/// `skip`.
pub fn resolvent_diagonal(eigenvalues: &[f64], vectors: &Vectors, z: Complex64, skip: &[usize]) -> Vec<Complex64> {
    let n = eigenvalues.len();
    let weights: Vec<Complex64> = eigenvalues
        .iter()
        .enumerate()
        .map(|(k, &l)| if skip.contains(&k) { Complex64::new(0.0, 0.0) } else { 1.0 / (l - z) })
        .collect();
    (0..n)
        .map(|i| (0..n).map(|k| weights[k] * vectors.modulus_sq(i, k)).sum())
        .collect()
}

// Full resolvent matrix U diag(1/(λ − z)) U*.
fn resolvent_matrix(eigenvalues: &[f64], vectors: &Vectors, z: Complex64) -> Mat<c64> {
    fn build<T: Entry>(u: &Mat<T>, eigenvalues: &[f64], z: Complex64) -> Mat<c64> {
        let n = u.nrows();
        let uc = Mat::<c64>::from_fn(n, n, |i, k| u[(i, k)].to_c64());
        let scaled = Mat::<c64>::from_fn(n, n, |i, k| uc[(i, k)] / (eigenvalues[k] - z));
        &scaled * uc.adjoint()
    }
    match vectors {
        Vectors::Real(u) => build(u, eigenvalues, z),
        Vectors::Complex(u) => build(u, eigenvalues, z),
    }
}

/// Theoretical subordination values at one spectral parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryPoint {
    pub z: Complex64,
    pub omega_a: Complex64,
    pub omega_b: Complex64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalLawRecord {
    pub trial: usize,
    pub z: Complex64,
    /// `max_i |zG_ii + 1 − a_i/(a_i − Ω_B)|`.
    pub diag_dev_a: f64,
    /// `max_μ |z𝒢_μμ + 1 − b_μ/(b_μ − Ω_A)|`.
    pub diag_dev_b: f64,
    /// `max_{i≠j} |G_ij|` with `G_ij = √(a_i/a_j) G̃_ij`.
    pub offdiag_max: f64,
    /// `|N⁻¹ Σ_i (zG_ii + 1 − a_i/(a_i − Ω_B))|`.
    pub averaged_dev: f64,
}

/// Resolvent entries of one decomposition against the theoretical limits.
pub fn local_law_check(
    inst: &ModelInstance,
    dec: &Decomposition,
    trial: usize,
    points: &[TheoryPoint],
) -> Result<Vec<LocalLawRecord>> {
    let (left, right) = match (&dec.left, &dec.right) {
        (Some(l), Some(r)) => (l, r),
        _ => return Err(Error::Config("local law check needs eigenvectors".into())),
    };
    let n = inst.n;
    let mut out = Vec::with_capacity(points.len());
    for p in points {
        let z = p.z;
        let ga = resolvent_diagonal(&dec.eigenvalues, left, z, &[]);
        let gb = resolvent_diagonal(&dec.eigenvalues, right, z, &[]);
        let mut diag_dev_a: f64 = 0.0;
        let mut sum = Complex64::new(0.0, 0.0);
        for (i, g) in ga.iter().enumerate() {
            let a = inst.a_diag[i];
            let d = z * g + 1.0 - a / (a - p.omega_b);
            diag_dev_a = diag_dev_a.max(d.norm());
            sum += d;
        }
        let mut diag_dev_b: f64 = 0.0;
        for (mu, g) in gb.iter().enumerate() {
            let b = inst.b_diag[mu];
            diag_dev_b = diag_dev_b.max((z * g + 1.0 - b / (b - p.omega_a)).norm());
        }
        let full = resolvent_matrix(&dec.eigenvalues, left, z);
        let mut offdiag_max: f64 = 0.0;
        for j in 0..n {
            for i in 0..n {
                if i != j {
                    let v = full[(i, j)].norm() * (inst.a_diag[i] / inst.a_diag[j]).sqrt();
                    offdiag_max = offdiag_max.max(v);
                }
            }
        }
        out.push(LocalLawRecord {
            trial,
            z,
            diag_dev_a,
            diag_dev_b,
            offdiag_max,
            averaged_dev: (sum / n as f64).norm(),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RigidityRecord {
    pub trial: usize,
    /// `|λ_i − γ_i| i^{1/3} n^{2/3}` for `i = 1..=⌊c n⌋`.
    pub ratios: Vec<f64>,
    pub max_ratio: f64,
    /// One-based index attaining `max_ratio`.
    pub argmax: usize,
}

/// Eigenvalue-to-quantile distances at the edge scale, for the top `fraction·n` indices.
/// The first `skip` eigenvalues (outliers) are left out.
pub fn rigidity_check(dec: &Decomposition, trial: usize, gammas: &QuantileTable, fraction: f64, skip: usize) -> RigidityRecord {
    let n = gammas.n as f64;
    let count = ((fraction * n).floor() as usize).min(gammas.n);
    let mut ratios = Vec::with_capacity(count);
    for i in 1..=count {
        let lambda = dec.eigenvalues[skip + i - 1];
        ratios.push((lambda - gammas.gammas[i - 1]).abs() * (i as f64).cbrt() * n.powf(2.0 / 3.0));
    }
    let (argmax, max_ratio) = ratios
        .iter()
        .enumerate()
        .fold((0, 0.0), |(bi, bv), (i, &v)| if v > bv { (i + 1, v) } else { (bi, bv) });
    RigidityRecord { trial, ratios, max_ratio, argmax }
}

/// `n · max_k max(max_i |u_k(i)|², max_μ |v_k(μ)|²)` over the top `fraction·n` singular
/// vectors, leaving out the indices in `excluded`.
pub fn delocalization_check(dec: &Decomposition, fraction: f64, excluded: &[usize]) -> Result<f64> {
    let (left, right) = match (&dec.left, &dec.right) {
        (Some(l), Some(r)) => (l, r),
        _ => return Err(Error::Config("delocalization check needs eigenvectors".into())),
    };
    let n = dec.eigenvalues.len();
    let count = ((fraction * n as f64).floor() as usize).clamp(1, n);
    let mut stat: f64 = 0.0;
    for k in (0..count).filter(|k| !excluded.contains(k)) {
        stat = stat.max(left.peak(k)).max(right.peak(k));
    }
    Ok(n as f64 * stat)
}

/// Spike estimator `mean(d) − N⁻¹ Σ_{i ≥ skip} d_i / (λ g_i + 1)` from known diagonal
/// entries `d` (descending) and resolvent diagonals `g` at the outlier `λ`.
pub fn spike_estimate(diag: &[f64], skip: usize, lambda: f64, resolvent_diag: &[Complex64]) -> f64 {
    let n = diag.len() as f64;
    let trace = diag.iter().sum::<f64>() / n;
    let tail: Complex64 = diag
        .iter()
        .zip(resolvent_diag)
        .skip(skip)
        .map(|(d, g)| *d / (lambda * g + 1.0))
        .sum();
    trace - tail.re / n
}

/// Which matrix a spike estimate refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpikeSide {
    A,
    B,
}

/// Estimates the spike behind the outlier with eigen-index `outlier` (zero-based) from
/// an observed decomposition and the known unspiked diagonals. The resolvent leaves out
/// the `r + s` outlier components.
pub fn estimate_spike(
    dec: &Decomposition,
    side: SpikeSide,
    known_diag: &[f64],
    outlier: usize,
    spike_total: usize,
    e_plus: f64,
) -> Result<f64> {
    let lambda = dec.eigenvalues[outlier];
    if lambda <= e_plus + 1e-9 {
        return Err(Error::OutlierInsideBulk { value: lambda, edge: e_plus });
    }
    let vectors = match side {
        SpikeSide::A => dec.left.as_ref(),
        SpikeSide::B => dec.right.as_ref(),
    }
    .ok_or_else(|| Error::Config("spike estimation needs eigenvectors".into()))?;
    let skip: Vec<usize> = (0..spike_total).collect();
    let g = resolvent_diagonal(&dec.eigenvalues, vectors, Complex64::new(lambda, 0.0), &skip);
    Ok(spike_estimate(known_diag, spike_total, lambda, &g))
}

/// Number of localized singular vectors, `#{k < c n : max_i |w_k(i)|² > ω}`, among the
/// left (`r̂`) and right (`ŝ`) vectors.
pub fn estimate_spike_counts(dec: &Decomposition, omega: f64, fraction: f64) -> Result<(usize, usize)> {
    let (left, right) = match (&dec.left, &dec.right) {
        (Some(l), Some(r)) => (l, r),
        _ => return Err(Error::Config("spike counting needs eigenvectors".into())),
    };
    let n = dec.eigenvalues.len();
    let count = ((fraction * n as f64).floor() as usize).clamp(1, n);
    let r = (0..count).filter(|&k| left.peak(k) > omega).count();
    let s = (0..count).filter(|&k| right.peak(k) > omega).count();
    Ok((r, s))
}

/// Default localization threshold `10 log(n) / n`.
pub fn default_localization_threshold(n: usize) -> f64 {
    10.0 * (n as f64).ln() / n as f64
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Kolmogorov distance between the empirical law of `samples` and a continuous CDF.
pub fn kolmogorov_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in v.iter().enumerate() {
        let f = cdf(*x);
        d = d.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs());
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_unitary_is_a_phase() {
        let mut rng = trial_rng(3, 0);
        let u = sample_haar(1, Ensemble::Unitary, &mut rng);
        assert!((u.entry(0, 0).norm() - 1.0).abs() < 1e-14);
        assert!(u.entry(0, 0).im.abs() > 0.0);
    }

    #[test]
    fn haar_columns_are_orthonormal() {
        let mut rng = trial_rng(11, 2);
        for ens in [Ensemble::Unitary, Ensemble::Orthogonal] {
            let u = sample_haar(50, ens, &mut rng);
            assert!(u.unitarity_defect() < 1e-13);
            for k in 0..50 {
                let norm: f64 = (0..50).map(|i| u.entry(i, k).norm_sqr()).sum();
                assert!((norm - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn second_moment_of_an_entry() {
        let n = 200;
        let samples = 2000;
        let mut rng = trial_rng(5, 0);
        let vals: Vec<f64> = (0..samples)
            .map(|_| sample_haar(n, Ensemble::Unitary, &mut rng).entry(0, 0).norm_sqr())
            .collect();
        let mean = vals.iter().sum::<f64>() / samples as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (samples - 1) as f64;
        let se = (var / samples as f64).sqrt();
        assert!((mean - 1.0 / n as f64).abs() < 3.0 * se, "{mean} ± {se}");
    }

    #[test]
    fn identity_model_has_unit_spectrum() {
        let inst = ModelInstance::new(vec![1.0; 20], vec![1.0; 20], Ensemble::Orthogonal, 1).unwrap();
        let dec = build_and_decompose(&inst, 0, true).unwrap();
        assert!(dec.eigenvalues.iter().all(|l| (l - 1.0).abs() < 1e-12));
        let z = Complex64::new(1.5, 0.3);
        let pts = [TheoryPoint { z, omega_a: z, omega_b: z }];
        let rec = local_law_check(&inst, &dec, 0, &pts).unwrap();
        assert!(rec[0].diag_dev_a < 1e-12 && rec[0].diag_dev_b < 1e-12);
        assert!(rec[0].offdiag_max < 1e-12);
    }

    #[test]
    fn scalar_a_scales_the_spectrum_of_b() {
        let b: Vec<f64> = (1..=12).map(|k| 0.5 + k as f64 / 4.0).collect();
        let inst = ModelInstance::new(vec![2.5; 12], b.clone(), Ensemble::Unitary, 9).unwrap();
        let dec = build_and_decompose(&inst, 4, false).unwrap();
        for (l, bk) in dec.eigenvalues.iter().zip(&inst.b_diag) {
            assert!((l - 2.5 * bk).abs() < 1e-12);
        }
    }

    #[test]
    fn two_level_shortcut_matches_dense_spectrum() {
        let a: Vec<f64> = (0..60).map(|k| if k < 30 { 3.0 } else { 1.0 }).collect();
        let b: Vec<f64> = (0..60).map(|k| if k < 30 { 2.0 } else { 0.5 }).collect();
        for ens in [Ensemble::Unitary, Ensemble::Orthogonal] {
            let inst = ModelInstance::new(a.clone(), b.clone(), ens, 21).unwrap();
            let fast = build_and_decompose(&inst, 3, false).unwrap();
            let dense = build_and_decompose(&inst, 3, true).unwrap();
            for (x, y) in fast.eigenvalues.iter().zip(&dense.eigenvalues) {
                assert!((x - y).abs() < 1e-10, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn leading_columns_do_not_depend_on_the_rest() {
        let full: Mat<f64> = haar(12, &mut trial_rng(2, 1));
        let part: Mat<f64> = haar_columns(12, 5, &mut trial_rng(2, 1));
        for j in 0..5 {
            for i in 0..12 {
                assert!((full[(i, j)] - part[(i, j)]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn companion_spectrum_matches() {
        let a: Vec<f64> = (0..40).map(|k| 1.0 + (k % 3) as f64).collect();
        let b: Vec<f64> = (0..40).map(|k| 0.5 + (k % 5) as f64 * 0.3).collect();
        for ens in [Ensemble::Unitary, Ensemble::Orthogonal] {
            let inst = ModelInstance::new(a.clone(), b.clone(), ens, 17).unwrap();
            let dec = build_and_decompose(&inst, 1, true).unwrap();
            let other = companion_eigenvalues(&inst, 1).unwrap();
            for (x, y) in dec.eigenvalues.iter().zip(&other) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn ward_identity() {
        let a: Vec<f64> = (0..30).map(|k| 1.0 + 2.0 * (k % 2) as f64).collect();
        let inst = ModelInstance::new(a.clone(), a, Ensemble::Unitary, 4).unwrap();
        let dec = build_and_decompose(&inst, 0, true).unwrap();
        let left = dec.left.as_ref().unwrap();
        let z = Complex64::new(3.0, 0.05);
        let full = resolvent_matrix(&dec.eigenvalues, left, z);
        for i in 0..30 {
            let row: f64 = (0..30).map(|j| full[(i, j)].norm_sqr()).sum();
            assert!((row - full[(i, i)].im / z.im).abs() < 1e-9 * row.max(1.0));
        }
    }

    #[test]
    fn reconstruction_and_right_vectors() {
        let a: Vec<f64> = (0..25).map(|k| 1.0 + 0.1 * k as f64).collect();
        let b: Vec<f64> = (0..25).map(|k| 2.0 - 0.05 * k as f64).collect();
        let inst = ModelInstance::new(a, b, Ensemble::Orthogonal, 8).unwrap();
        let dec = build_and_decompose(&inst, 0, true).unwrap();
        let Some(Vectors::Real(u)) = &dec.left else { panic!() };
        let Some(Vectors::Real(v)) = &dec.right else { panic!() };
        let mut rng = trial_rng(8, 0);
        let HaarMatrix::Real(haar) = sample_haar(25, Ensemble::Orthogonal, &mut rng) else { panic!() };
        let y = build_y(&haar, &inst.a_diag, &inst.b_diag);
        let h = &y * y.transpose();
        let lam = Mat::<f64>::from_fn(25, 25, |i, j| if i == j { dec.eigenvalues[i] } else { 0.0 });
        let rebuilt = u * &lam * u.transpose();
        let diff = (&h - &rebuilt).norm_l2();
        assert!(diff / h.norm_l2() < 1e-10);
        // Y v_k = √λ_k u_k
        let yv = &y * v;
        for k in 0..25 {
            for i in 0..25 {
                assert!((yv[(i, k)] - dec.eigenvalues[k].sqrt() * u[(i, k)]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn two_dimensional_delocalization_bound() {
        let inst = ModelInstance::new(vec![3.0, 1.0], vec![2.0, 1.0], Ensemble::Orthogonal, 2).unwrap();
        let dec = build_and_decompose(&inst, 0, true).unwrap();
        assert!(delocalization_check(&dec, 1.0, &[]).unwrap() <= 2.0 + 1e-12);
    }

    #[test]
    fn vacuous_threshold_counts_nothing() {
        let a: Vec<f64> = (0..30).map(|k| 1.0 + (k % 2) as f64).collect();
        let inst = ModelInstance::new(a.clone(), a, Ensemble::Orthogonal, 6).unwrap();
        let dec = build_and_decompose(&inst, 0, true).unwrap();
        assert_eq!(estimate_spike_counts(&dec, 1.0, 0.4).unwrap(), (0, 0));
    }

    #[test]
    fn estimator_on_limiting_resolvent() {
        // With zG_ii + 1 = a_i / (a_i − Ω) the estimator is exact algebra.
        let a: Vec<f64> = (0..100).map(|k| 3.0 - 0.02 * k as f64).collect();
        let (lambda, omega, skip) = (9.5, 4.2, 3);
        let g: Vec<Complex64> = a
            .iter()
            .map(|&ai| Complex64::new((ai / (ai - omega) - 1.0) / lambda, 0.0))
            .collect();
        let est = spike_estimate(&a, skip, lambda, &g);
        let n = a.len() as f64;
        let target = a[..skip].iter().sum::<f64>() / n + (1.0 - skip as f64 / n) * omega;
        assert!((est - target).abs() < 1e-12);
    }

    #[test]
    fn spikes_are_tracked_through_sorting() {
        let inst = ModelInstance::with_spikes(vec![2.0, 5.0, 3.0, 1.0], vec![1.0; 4], 2, 0, Ensemble::Orthogonal, 0)
            .unwrap();
        assert_eq!(inst.a_diag, vec![5.0, 3.0, 2.0, 1.0]);
        assert_eq!(inst.a_spikes, vec![2, 0]);
    }

    #[test]
    fn median_and_kolmogorov() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        let s: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect();
        assert!((kolmogorov_distance(&s, |x| x.clamp(0.0, 1.0)) - 0.005).abs() < 1e-12);
    }
}
