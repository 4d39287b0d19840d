//! Outliers of finite-rank multiplicative spikes.
//!
//! The `r` largest entries `a_1 ≥ … ≥ a_r` of the diagonal matrix built from `μ_A` are
//! replaced by `â_i = a_i (1 + d^a_i)`, and likewise for `μ_B`. An A-spike produces an
//! outlier at `Ω_B⁻¹(â_i)` once `â_i` exceeds `Ω_B(E₊)`; B-spikes mirror this with `Ω_A`.

use alloc::vec::Vec;

use num_complex::Complex64;

use crate::convolution::{find_upper_edge, Edge};
use crate::error::{Error, Result};
use crate::measures::SpectralMeasure;
use crate::roots::newton_bisect;
use crate::subordination::{solve_at, stability, SolverConfig, SubordinationSolution};

const MAX_SPIKES: usize = 32;
const MAX_STRENGTH: f64 = 1e3;
const TIE_RTOL: f64 = 1e-12;

/// A declared spike, by its zero-based position in `d_a` or `d_b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SpikeLabel {
    FromA(usize),
    FromB(usize),
}

/// Selects `Ω_A` or `Ω_B`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    A,
    B,
}

#[derive(Debug, Clone)]
pub struct SpikedModel {
    mu_a: SpectralMeasure,
    mu_b: SpectralMeasure,
    d_a: Vec<f64>,
    d_b: Vec<f64>,
    n: usize,
    a_base: Vec<f64>,
    b_base: Vec<f64>,
    a_next: f64,
    b_next: f64,
    edge: Edge,
    cfg: SolverConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    /// Spikes producing an outlier, `â > Ω(E₊)`.
    pub outliers: Vec<SpikeLabel>,
    /// Supercritical spikes, `â ≥ Ω(E₊) + n^{-1/3}`.
    pub supercritical: Vec<SpikeLabel>,
    /// `(label, π)` with ranks `1..=r+s` by decreasing predicted location.
    pub ranks: Vec<(SpikeLabel, usize)>,
}

impl Classification {
    pub fn rank_of(&self, label: SpikeLabel) -> Option<usize> {
        self.ranks.iter().find(|(l, _)| *l == label).map(|(_, r)| *r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutlierPrediction {
    pub label: SpikeLabel,
    pub pi_index: usize,
    pub location: f64,
    pub fluctuation: f64,
    pub supercritical: bool,
}

/// What a gap in the non-overlap table is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GapTarget {
    Spike(SpikeLabel),
    /// The largest unperturbed entry `a_{r+1}`.
    BulkA,
    /// The largest unperturbed entry `b_{s+1}`.
    BulkB,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapEntry {
    pub from: SpikeLabel,
    pub to: GapTarget,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeltaTable {
    /// Pairwise gaps from every supercritical spike.
    pub entries: Vec<GapEntry>,
    /// `δ_𝔞(S)` for every declared spike.
    pub per_label: Vec<(SpikeLabel, f64)>,
}

impl DeltaTable {
    pub fn delta(&self, label: SpikeLabel) -> Option<f64> {
        self.per_label.iter().find(|(l, _)| *l == label).map(|(_, d)| *d)
    }

    fn gap(&self, from: SpikeLabel, to: GapTarget) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.from == from && e.to == to)
            .map(|e| e.value)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OverlapPrediction {
    pub set_s: Vec<SpikeLabel>,
    /// `(i, g_a)` for A-spikes in `S`: predicted `|⟨û, e_i⟩|²`.
    pub g_a_diag: Vec<(usize, f64)>,
    /// `(j, g_b)` for B-spikes in `S`: predicted `|⟨v̂, e_j⟩|²`.
    pub g_b_diag: Vec<(usize, f64)>,
    pub delta_table: DeltaTable,
    pub assumption_ok: bool,
    /// Unscaled error size `n^{-1/2} (â − Ω(E₊))^{-1/2} + 1 / (n δ²)` per spike in `S`.
    pub error_scale: Vec<(SpikeLabel, f64)>,
}

impl OverlapPrediction {
    pub fn error_envelope(&self, label: SpikeLabel, multiplier: f64) -> Option<f64> {
        self.error_scale
            .iter()
            .find(|(l, _)| *l == label)
            .map(|(_, e)| multiplier * e)
    }
}

impl SpikedModel {
    pub fn new(
        mu_a: SpectralMeasure,
        mu_b: SpectralMeasure,
        d_a: Vec<f64>,
        d_b: Vec<f64>,
        n: usize,
    ) -> Result<Self> {
        Self::with_config(mu_a, mu_b, d_a, d_b, n, SolverConfig::default())
    }

    pub fn with_config(
        mu_a: SpectralMeasure,
        mu_b: SpectralMeasure,
        d_a: Vec<f64>,
        d_b: Vec<f64>,
        n: usize,
        cfg: SolverConfig,
    ) -> Result<Self> {
        let (r, s) = (d_a.len(), d_b.len());
        if r > MAX_SPIKES || s > MAX_SPIKES {
            return Err(Error::InvalidModel("at most 32 spikes per side"));
        }
        if n <= r.max(s) {
            return Err(Error::InvalidModel("dimension must exceed the number of spikes"));
        }
        if d_a.iter().chain(&d_b).any(|d| !(*d >= 0.0 && *d <= MAX_STRENGTH)) {
            return Err(Error::InvalidModel("spike strengths must lie in [0, 1e3]"));
        }
        let top = |mu: &SpectralMeasure, k: usize| -> Vec<f64> {
            (1..=k)
                .map(|i| mu.quantile(1.0 - (i as f64 - 0.5) / n as f64))
                .collect()
        };
        let mut a_top = top(&mu_a, r + 1);
        let mut b_top = top(&mu_b, s + 1);
        let a_next = a_top.pop().unwrap_or(mu_a.support_hi());
        let b_next = b_top.pop().unwrap_or(mu_b.support_hi());
        let edge = find_upper_edge(&mu_a, &mu_b, &cfg)?;
        Ok(Self {
            mu_a,
            mu_b,
            d_a,
            d_b,
            n,
            a_base: a_top,
            b_base: b_top,
            a_next,
            b_next,
            edge,
            cfg,
        })
    }

    pub fn mu_a(&self) -> &SpectralMeasure {
        &self.mu_a
    }

    pub fn mu_b(&self) -> &SpectralMeasure {
        &self.mu_b
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d_a(&self) -> &[f64] {
        &self.d_a
    }

    pub fn d_b(&self) -> &[f64] {
        &self.d_b
    }

    pub fn edge(&self) -> Edge {
        self.edge
    }

    pub fn e_plus(&self) -> f64 {
        self.edge.location
    }

    /// `â_i = a_i (1 + d^a_i)` in declaration order.
    pub fn a_hat(&self) -> Vec<f64> {
        self.a_base.iter().zip(&self.d_a).map(|(a, d)| a * (1.0 + d)).collect()
    }

    pub fn b_hat(&self) -> Vec<f64> {
        self.b_base.iter().zip(&self.d_b).map(|(b, d)| b * (1.0 + d)).collect()
    }

    /// Base entries `a_1..a_r` the A-spikes are attached to.
    pub fn a_base(&self) -> &[f64] {
        &self.a_base
    }

    pub fn b_base(&self) -> &[f64] {
        &self.b_base
    }

    pub fn labels(&self) -> Vec<SpikeLabel> {
        (0..self.d_a.len())
            .map(SpikeLabel::FromA)
            .chain((0..self.d_b.len()).map(SpikeLabel::FromB))
            .collect()
    }

    /// Spike value and the threshold it is compared with.
    pub fn spike_value(&self, label: SpikeLabel) -> (f64, f64) {
        match label {
            SpikeLabel::FromA(i) => (self.a_base[i] * (1.0 + self.d_a[i]), self.edge.omega_b),
            SpikeLabel::FromB(j) => (self.b_base[j] * (1.0 + self.d_b[j]), self.edge.omega_a),
        }
    }

    /// `Ω(E₊)` for the chosen side.
    pub fn omega_at_edge(&self, side: Side) -> f64 {
        match side {
            Side::A => self.edge.omega_a,
            Side::B => self.edge.omega_b,
        }
    }

    /// Real subordination solution at `x > E₊`.
    pub fn real_solution(&self, x: f64) -> Result<SubordinationSolution> {
        solve_at(&self.mu_a, &self.mu_b, Complex64::new(x, 0.0), None, &self.cfg)
    }

    /// `(Ω(x), Ω′(x))` on the real line above the spectrum.
    pub fn omega_forward(&self, side: Side, x: f64) -> Result<(f64, f64)> {
        let sol = self.real_solution(x)?;
        self.forward_from(side, &sol)
    }

    fn forward_from(&self, side: Side, sol: &SubordinationSolution) -> Result<(f64, f64)> {
        let st = stability(&self.mu_a, &self.mu_b, sol)?;
        Ok(match side {
            Side::A => (sol.omega_a.re, st.omega_a_prime.re),
            Side::B => (sol.omega_b.re, st.omega_b_prime.re),
        })
    }

    /// `x ∈ (E₊, ∞)` with `Ω(x) = target`.
    pub fn omega_inverse(&self, side: Side, target: f64) -> Result<f64> {
        let threshold = self.omega_at_edge(side);
        if !(target > threshold + 1e-12) {
            return Err(Error::SubcriticalTarget { target, threshold });
        }
        let lo = self.e_plus();
        let mut width = lo.abs().max(1.0) * 0.25;
        let mut hi = lo + width;
        loop {
            let (w, _) = self.omega_forward(side, hi)?;
            if w > target {
                break;
            }
            width *= 2.0;
            hi = lo + width;
            if width > 1e9 * lo.abs().max(1.0) {
                return Err(Error::InversionOutOfRange { value: target });
            }
        }
        let mut failure = None;
        let x = newton_bisect(
            |x| {
                if x == lo {
                    return (threshold - target, f64::NAN);
                }
                match self.omega_forward(side, x) {
                    Ok((w, dw)) => (w - target, dw),
                    Err(e) => {
                        failure = Some(e);
                        (f64::NAN, f64::NAN)
                    }
                }
            },
            lo,
            hi,
            1e-15,
            200,
        );
        match (x, failure) {
            (Some(x), _) => Ok(x),
            (None, Some(e)) => Err(e),
            (None, None) => Err(Error::InversionOutOfRange { value: target }),
        }
    }

    fn inverse_for(&self, label: SpikeLabel) -> Result<f64> {
        let (value, _) = self.spike_value(label);
        match label {
            SpikeLabel::FromA(_) => self.omega_inverse(Side::B, value),
            SpikeLabel::FromB(_) => self.omega_inverse(Side::A, value),
        }
    }

    fn n_f(&self) -> f64 {
        self.n as f64
    }

    pub fn classify(&self) -> Result<Classification> {
        let cut = self.n_f().powf(-1.0 / 3.0);
        let mut outliers = Vec::new();
        let mut supercritical = Vec::new();
        let mut keyed = Vec::new();
        for label in self.labels() {
            let (value, threshold) = self.spike_value(label);
            let location = if value > threshold {
                outliers.push(label);
                if value >= threshold + cut {
                    supercritical.push(label);
                }
                self.inverse_for(label)?
            } else {
                self.e_plus()
            };
            keyed.push((label, location));
        }
        keyed.sort_by(|(l1, x1), (l2, x2)| {
            if (x1 - x2).abs() <= TIE_RTOL * x1.abs().max(x2.abs()) {
                l1.cmp(l2)
            } else {
                x2.total_cmp(x1)
            }
        });
        let ranks = keyed.iter().enumerate().map(|(k, (l, _))| (*l, k + 1)).collect();
        Ok(Classification { outliers, supercritical, ranks })
    }

    /// Predicted location and fluctuation size for every declared spike.
    pub fn predict_outliers(&self) -> Result<Vec<OutlierPrediction>> {
        let cls = self.classify()?;
        let n = self.n_f();
        let mut out = Vec::new();
        for (label, pi_index) in &cls.ranks {
            let supercritical = cls.supercritical.contains(label);
            let (value, threshold) = self.spike_value(*label);
            let (location, fluctuation) = if supercritical {
                (self.inverse_for(*label)?, (value - threshold).sqrt() / n.sqrt())
            } else {
                (self.e_plus(), n.powf(-2.0 / 3.0))
            };
            out.push(OutlierPrediction {
                label: *label,
                pi_index: *pi_index,
                location,
                fluctuation,
                supercritical,
            });
        }
        Ok(out)
    }

    /// Gaps of the non-overlap condition for the index set `set_s`.
    pub fn nonoverlap_deltas(&self, set_s: &[SpikeLabel]) -> Result<DeltaTable> {
        let cls = self.classify()?;
        let a_hat = self.a_hat();
        let b_hat = self.b_hat();
        // Ω_A(Ω_B⁻¹(â_i)) and Ω_B(Ω_A⁻¹(b̂_j)) for supercritical spikes
        let mut cross = Vec::new();
        for &label in &cls.supercritical {
            let x = self.inverse_for(label)?;
            let other = match label {
                SpikeLabel::FromA(_) => self.omega_forward(Side::A, x)?.0,
                SpikeLabel::FromB(_) => self.omega_forward(Side::B, x)?.0,
            };
            cross.push((label, other));
        }
        let mut entries = Vec::new();
        for &(from, other) in &cross {
            let own = self.spike_value(from).0;
            for to in self.labels() {
                if to == from {
                    continue;
                }
                let value = match (from, to) {
                    (SpikeLabel::FromA(_), SpikeLabel::FromA(k)) => (own - a_hat[k]).abs(),
                    (SpikeLabel::FromA(_), SpikeLabel::FromB(j)) => (b_hat[j] - other).abs(),
                    (SpikeLabel::FromB(_), SpikeLabel::FromA(i)) => (a_hat[i] - other).abs(),
                    (SpikeLabel::FromB(_), SpikeLabel::FromB(k)) => (own - b_hat[k]).abs(),
                };
                entries.push(GapEntry { from, to: GapTarget::Spike(to), value });
            }
            let (bulk_a, bulk_b) = match from {
                SpikeLabel::FromA(_) => ((own - self.a_next).abs(), (self.b_next - other).abs()),
                SpikeLabel::FromB(_) => ((self.a_next - other).abs(), (own - self.b_next).abs()),
            };
            entries.push(GapEntry { from, to: GapTarget::BulkA, value: bulk_a });
            entries.push(GapEntry { from, to: GapTarget::BulkB, value: bulk_b });
        }
        let mut table = DeltaTable { entries, per_label: Vec::new() };
        for label in self.labels() {
            let delta = if set_s.contains(&label) {
                let mut d = f64::INFINITY;
                for to in self.labels() {
                    if to != label && !set_s.contains(&to) {
                        if let Some(g) = table.gap(label, GapTarget::Spike(to)) {
                            d = d.min(g);
                        }
                    }
                }
                for bulk in [GapTarget::BulkA, GapTarget::BulkB] {
                    if let Some(g) = table.gap(label, bulk) {
                        d = d.min(g);
                    }
                }
                d
            } else {
                set_s
                    .iter()
                    .filter_map(|&from| table.gap(from, GapTarget::Spike(label)))
                    .fold(f64::INFINITY, f64::min)
            };
            table.per_label.push((label, delta));
        }
        Ok(table)
    }

    /// Diagonal overlaps `g_a`, `g_b` for the spikes in `set_s`, with the non-overlap
    /// check at exponents `tau1`, `tau2`.
    pub fn predict_overlaps(&self, set_s: &[SpikeLabel], tau1: f64, tau2: f64) -> Result<OverlapPrediction> {
        let cls = self.classify()?;
        for label in set_s {
            if !cls.supercritical.contains(label) {
                return Err(Error::SubcriticalInS {
                    rank: cls.rank_of(*label).unwrap_or(0),
                });
            }
        }
        let table = self.nonoverlap_deltas(set_s)?;
        let n = self.n_f();
        let mut g_a_diag = Vec::new();
        let mut g_b_diag = Vec::new();
        let mut error_scale = Vec::new();
        let mut assumption_ok = true;
        for &label in set_s {
            let (value, threshold) = self.spike_value(label);
            let x = self.inverse_for(label)?;
            let side = match label {
                SpikeLabel::FromA(_) => Side::B,
                SpikeLabel::FromB(_) => Side::A,
            };
            let (_, slope) = self.omega_forward(side, x)?;
            let g = value / (slope * x);
            match label {
                SpikeLabel::FromA(i) => g_a_diag.push((i, g)),
                SpikeLabel::FromB(j) => g_b_diag.push((j, g)),
            }
            let gap = value - threshold;
            let delta = table.delta(label).unwrap_or(f64::INFINITY);
            error_scale.push((label, 1.0 / (n.sqrt() * gap.sqrt()) + 1.0 / (n * delta * delta)));
            let gap_ok = gap >= n.powf(-1.0 / 3.0 + tau1);
            let sep_ok = delta >= n.powf(-0.5 + tau2) / gap.sqrt();
            assumption_ok &= gap_ok && sep_ok;
        }
        Ok(OverlapPrediction {
            set_s: set_s.to_vec(),
            g_a_diag,
            g_b_diag,
            delta_table: table,
            assumption_ok,
            error_scale,
        })
    }
}

/// Default exponents of the non-overlap assumption.
pub const DEFAULT_TAU1: f64 = 1.0 / 3.0;
pub const DEFAULT_TAU2: f64 = 1.0 / 2.0;
