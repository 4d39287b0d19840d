//! Theory-versus-simulation runs shared by the command line and the test suites.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use freemul_core::convolution::{
    assemble, density_point, edge_clustered_grid, find_lower_edge, find_upper_edge, quantiles, solve_point,
};
use freemul_core::spiked::{DEFAULT_TAU1, DEFAULT_TAU2};
use freemul_core::{ConvolutionResult, SolverConfig, SpectralMeasure, SpikeLabel, SpikedModel};

use crate::error::Result;
use crate::lab::{
    decompose_trials, default_localization_threshold, delocalization_check, estimate_spike, estimate_spike_counts,
    kolmogorov_distance, local_law_check, median, rigidity_check, Decomposition, Ensemble, LocalLawRecord,
    ModelInstance, RigidityRecord, SpikeSide, TheoryPoint,
};

/// Fraction of the spectrum covered by rigidity, delocalization and spike counting.
pub const EDGE_FRACTION: f64 = 0.4;

/// Density on `grid`, evaluated point by point in parallel and assembled in grid order.
pub fn density_parallel(
    mu_a: &SpectralMeasure,
    mu_b: &SpectralMeasure,
    grid: &[f64],
    eval_eta: f64,
    cfg: &SolverConfig,
) -> Result<ConvolutionResult> {
    let lower = find_lower_edge(mu_a, mu_b, cfg)?;
    let upper = find_upper_edge(mu_a, mu_b, cfg)?;
    let edges = (lower.location, upper.location);
    let points: Vec<_> = grid
        .par_iter()
        .map(|&x| density_point(mu_a, mu_b, x, eval_eta, edges, cfg))
        .collect();
    Ok(assemble(grid, points, edges, eval_eta))
}

/// Density on a grid clustered at both edges, used for CDFs and quantiles.
pub fn reference_density(mu_a: &SpectralMeasure, mu_b: &SpectralMeasure, count: usize, cfg: &SolverConfig) -> Result<ConvolutionResult> {
    let lower = find_lower_edge(mu_a, mu_b, cfg)?;
    let upper = find_upper_edge(mu_a, mu_b, cfg)?;
    let grid = edge_clustered_grid(lower.location, upper.location, count);
    density_parallel(mu_a, mu_b, &grid, freemul_core::convolution::DEFAULT_EVAL_ETA, cfg)
}

/// Spike as it appears in reports: side and one-based index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub side: SpikeSide,
    pub index: usize,
}

impl From<SpikeLabel> for LabelRecord {
    fn from(l: SpikeLabel) -> Self {
        match l {
            SpikeLabel::FromA(i) => Self { side: SpikeSide::A, index: i + 1 },
            SpikeLabel::FromB(j) => Self { side: SpikeSide::B, index: j + 1 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikePrediction {
    pub label: LabelRecord,
    pub strength: f64,
    pub spike_value: f64,
    pub threshold: f64,
    pub outlier: bool,
    pub supercritical: bool,
    pub pi_index: usize,
    pub location: f64,
    pub fluctuation: f64,
    pub overlap: Option<f64>,
    pub delta: Option<f64>,
    pub error_scale: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub n: usize,
    pub e_plus: f64,
    pub omega_a_at_edge: f64,
    pub omega_b_at_edge: f64,
    pub assumption_ok: bool,
    pub spikes: Vec<SpikePrediction>,
}

/// Outlier locations for every declared spike and overlaps for the supercritical ones,
/// with the non-overlap exponents at their defaults.
pub fn predict(model: &SpikedModel) -> Result<PredictionSet> {
    let cls = model.classify()?;
    let outliers = model.predict_outliers()?;
    let overlaps = if cls.supercritical.is_empty() {
        None
    } else {
        Some(model.predict_overlaps(&cls.supercritical, DEFAULT_TAU1, DEFAULT_TAU2)?)
    };
    let mut spikes = Vec::new();
    for label in model.labels() {
        let p = outliers.iter().find(|p| p.label == label).expect("every label is predicted");
        let (spike_value, threshold) = model.spike_value(label);
        let strength = match label {
            SpikeLabel::FromA(i) => model.d_a()[i],
            SpikeLabel::FromB(j) => model.d_b()[j],
        };
        let (overlap, delta, error_scale) = match (&overlaps, label) {
            (Some(o), _) if o.set_s.contains(&label) => {
                let g = match label {
                    SpikeLabel::FromA(i) => o.g_a_diag.iter().find(|(k, _)| *k == i).map(|x| x.1),
                    SpikeLabel::FromB(j) => o.g_b_diag.iter().find(|(k, _)| *k == j).map(|x| x.1),
                };
                (g, o.delta_table.delta(label), o.error_envelope(label, 1.0))
            }
            _ => (None, None, None),
        };
        spikes.push(SpikePrediction {
            label: label.into(),
            strength,
            spike_value,
            threshold,
            outlier: cls.outliers.contains(&label),
            supercritical: p.supercritical,
            pi_index: p.pi_index,
            location: p.location,
            fluctuation: p.fluctuation,
            overlap,
            delta,
            error_scale,
        });
    }
    let edge = model.edge();
    Ok(PredictionSet {
        n: model.n(),
        e_plus: edge.location,
        omega_a_at_edge: edge.omega_a,
        omega_b_at_edge: edge.omega_b,
        assumption_ok: overlaps.map(|o| o.assumption_ok).unwrap_or(true),
        spikes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalLawSummary {
    pub e_minus: f64,
    pub e_plus: f64,
    pub mean_top: f64,
    pub mean_bottom: f64,
    pub ks_pooled: f64,
    pub ks_per_trial: Vec<f64>,
}

/// Edge and Kolmogorov distance of the (outlier-free part of the) spectra against the
/// computed law.
pub fn global_law(decs: &[Decomposition], reference: &ConvolutionResult, skip_top: usize) -> GlobalLawSummary {
    let bulk = |d: &Decomposition| d.eigenvalues[skip_top..].to_vec();
    let cdf = |x: f64| reference.cdf(x);
    let ks_per_trial: Vec<f64> = decs.iter().map(|d| kolmogorov_distance(&bulk(d), cdf)).collect();
    let pooled: Vec<f64> = decs.iter().flat_map(bulk).collect();
    let t = decs.len() as f64;
    GlobalLawSummary {
        e_minus: reference.e_minus,
        e_plus: reference.e_plus,
        mean_top: decs.iter().map(|d| d.eigenvalues[skip_top]).sum::<f64>() / t,
        mean_bottom: decs.iter().map(|d| *d.eigenvalues.last().unwrap()).sum::<f64>() / t,
        ks_pooled: kolmogorov_distance(&pooled, cdf),
        ks_per_trial,
    }
}

/// Subordination values at `E₊ + i n^{-1/3}`.
pub fn edge_theory_point(mu_a: &SpectralMeasure, mu_b: &SpectralMeasure, e_plus: f64, n: usize, cfg: &SolverConfig) -> Result<TheoryPoint> {
    let eta = (n as f64).powf(-1.0 / 3.0);
    let sol = solve_point(mu_a, mu_b, e_plus, eta, cfg)?;
    Ok(TheoryPoint { z: Complex64::new(e_plus, eta), omega_a: sol.omega_a, omega_b: sol.omega_b })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierTrial {
    pub trial: usize,
    /// Eigenvalue matched to each supercritical spike, in the order of `labels`.
    pub eigenvalues: Vec<f64>,
    /// `|λ̂ − location| / fluctuation`.
    pub normalized_deviation: Vec<f64>,
    /// `|⟨û, e_i⟩|²` for A-spikes, `|⟨v̂, e_j⟩|²` for B-spikes.
    pub overlaps: Vec<f64>,
    pub estimates: Vec<f64>,
    pub r_hat: usize,
    pub s_hat: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierSummary {
    pub labels: Vec<LabelRecord>,
    pub spike_values: Vec<f64>,
    pub locations: Vec<f64>,
    pub fluctuations: Vec<f64>,
    pub predicted_overlaps: Vec<f64>,
    pub localization_threshold: f64,
    pub declared_counts: (usize, usize),
    pub trials: Vec<OutlierTrial>,
    pub median_location_error: Vec<f64>,
    pub median_overlap_error: Vec<f64>,
    pub median_estimate_error: Vec<f64>,
    /// Trials in which the spike counts match the declared `(r, s)`.
    pub counts_recovered: usize,
}

/// Compares decompositions of a spiked instance with the predictions for its
/// supercritical spikes.
pub fn outlier_experiment(model: &SpikedModel, inst: &ModelInstance, decs: &[Decomposition]) -> Result<OutlierSummary> {
    let pred = predict(model)?;
    let n = model.n();
    let base_a = model.mu_a().quantile_diagonal(n);
    let base_b = model.mu_b().quantile_diagonal(n);
    let spike_total = inst.spike_count();
    let omega = default_localization_threshold(n);
    let chosen: Vec<&SpikePrediction> = pred.spikes.iter().filter(|s| s.supercritical).collect();
    let mut trials = Vec::with_capacity(decs.len());
    for (t, dec) in decs.iter().enumerate() {
        let mut row = OutlierTrial {
            trial: t,
            eigenvalues: Vec::new(),
            normalized_deviation: Vec::new(),
            overlaps: Vec::new(),
            estimates: Vec::new(),
            r_hat: 0,
            s_hat: 0,
        };
        for s in &chosen {
            let k = s.pi_index - 1;
            let lambda = dec.eigenvalues[k];
            row.eigenvalues.push(lambda);
            row.normalized_deviation.push((lambda - s.location).abs() / s.fluctuation);
            let (vectors, coord, known) = match s.label.side {
                SpikeSide::A => (dec.left.as_ref(), inst.a_spikes[s.label.index - 1], &base_a),
                SpikeSide::B => (dec.right.as_ref(), inst.b_spikes[s.label.index - 1], &base_b),
            };
            let vectors = vectors.ok_or_else(|| crate::Error::Config("outlier experiment needs eigenvectors".into()))?;
            row.overlaps.push(vectors.modulus_sq(coord, k));
            row.estimates.push(estimate_spike(dec, s.label.side, known, k, spike_total, pred.e_plus)?);
        }
        let (r_hat, s_hat) = estimate_spike_counts(dec, omega, EDGE_FRACTION)?;
        row.r_hat = r_hat;
        row.s_hat = s_hat;
        trials.push(row);
    }
    let column = |f: &dyn Fn(&OutlierTrial, usize) -> f64| -> Vec<f64> {
        (0..chosen.len())
            .map(|c| median(&trials.iter().map(|t| f(t, c)).collect::<Vec<_>>()))
            .collect()
    };
    let median_location_error = column(&|t, c| (t.eigenvalues[c] - chosen[c].location).abs());
    let median_overlap_error = column(&|t, c| (t.overlaps[c] - chosen[c].overlap.unwrap_or(f64::NAN)).abs());
    let median_estimate_error = column(&|t, c| (t.estimates[c] - chosen[c].spike_value).abs());
    let declared = (model.d_a().len(), model.d_b().len());
    let counts_recovered = trials.iter().filter(|t| (t.r_hat, t.s_hat) == declared).count();
    Ok(OutlierSummary {
        labels: chosen.iter().map(|s| s.label).collect(),
        spike_values: chosen.iter().map(|s| s.spike_value).collect(),
        locations: chosen.iter().map(|s| s.location).collect(),
        fluctuations: chosen.iter().map(|s| s.fluctuation).collect(),
        predicted_overlaps: chosen.iter().map(|s| s.overlap.unwrap_or(f64::NAN)).collect(),
        localization_threshold: omega,
        declared_counts: declared,
        trials,
        median_location_error,
        median_overlap_error,
        median_estimate_error,
        counts_recovered,
    })
}

/// One acceptance-style comparison `value ≤ bound`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub passed: bool,
}

impl Check {
    pub fn at_most(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self { name: name.into(), value, bound, passed: value <= bound }
    }
}

/// What a simulation run should measure.
#[derive(Debug, Clone)]
pub struct SimulationPlan {
    pub n: usize,
    pub trials: usize,
    pub seed: u64,
    pub ensemble: Ensemble,
    /// Singular vectors, local laws, rigidity and delocalization.
    pub vectors: bool,
    pub reference_points: usize,
}

impl SimulationPlan {
    pub fn new(n: usize, trials: usize, seed: u64) -> Self {
        Self { n, trials, seed, ensemble: Ensemble::Orthogonal, vectors: true, reference_points: 4001 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub n: usize,
    pub trials: usize,
    pub seed: u64,
    pub ensemble: Ensemble,
    pub eigenvalue_rows: Vec<Vec<f64>>,
    pub global_law: GlobalLawSummary,
    pub local_law_errors: Vec<LocalLawRecord>,
    pub rigidity: Vec<RigidityRecord>,
    pub deloc_max: Vec<f64>,
    pub outliers: Option<OutlierSummary>,
    pub checks: Vec<Check>,
}

/// Samples `plan.trials` instances of the (possibly spiked) model and compares them with
/// the deterministic predictions.
pub fn simulate(
    mu_a: &SpectralMeasure,
    mu_b: &SpectralMeasure,
    spiked: Option<&SpikedModel>,
    plan: &SimulationPlan,
    cfg: &SolverConfig,
) -> Result<SimulationReport> {
    let inst = match spiked {
        Some(m) => ModelInstance::from_spiked(m, plan.ensemble, plan.seed)?,
        None => ModelInstance::from_measures(mu_a, mu_b, plan.n, plan.ensemble, plan.seed)?,
    };
    let outliers_expected = match spiked {
        Some(m) => m.classify()?.outliers.len(),
        None => 0,
    };
    let decs = decompose_trials(&inst, plan.trials, plan.vectors)?;
    let reference = reference_density(mu_a, mu_b, plan.reference_points, cfg)?;
    let global = global_law(&decs, &reference, outliers_expected);
    let n = plan.n as f64;
    let polylog = 10.0 * n.ln();
    let mut checks = vec![
        Check::at_most("edge |mean λ_1 − E₊|", (global.mean_top - global.e_plus).abs(), 0.02),
        Check::at_most("global law Kolmogorov distance", global.ks_pooled, 0.02),
    ];
    let mut local_law_errors = Vec::new();
    let mut rigidity = Vec::new();
    let mut deloc_max = Vec::new();
    let mut outliers = None;
    if plan.vectors {
        let point = edge_theory_point(mu_a, mu_b, global.e_plus, plan.n, cfg)?;
        let gammas = quantiles(&reference, plan.n);
        let excluded: Vec<usize> = (0..outliers_expected).collect();
        for (t, dec) in decs.iter().enumerate() {
            local_law_errors.extend(local_law_check(&inst, dec, t, &[point])?);
            rigidity.push(rigidity_check(dec, t, &gammas, EDGE_FRACTION, outliers_expected));
            deloc_max.push(delocalization_check(dec, EDGE_FRACTION, &excluded)?);
        }
        let avg: Vec<f64> = local_law_errors.iter().map(|r| r.averaged_dev).collect();
        let off: Vec<f64> = local_law_errors.iter().map(|r| r.offdiag_max).collect();
        let rig: Vec<f64> = rigidity.iter().map(|r| r.max_ratio).collect();
        checks.push(Check::at_most("local law averaged deviation", median(&avg), 10.0 * n.powf(-2.0 / 3.0)));
        checks.push(Check::at_most("local law off-diagonal maximum", median(&off), 10.0 * n.powf(-1.0 / 3.0)));
        checks.push(Check::at_most("rigidity max ratio", median(&rig), polylog));
        checks.push(Check::at_most("delocalization statistic", median(&deloc_max), polylog));
        if let Some(model) = spiked {
            if !model.classify()?.supercritical.is_empty() {
                let summary = outlier_experiment(model, &inst, &decs)?;
                for (c, label) in summary.labels.iter().enumerate() {
                    let root_gap = summary.fluctuations[c] * n.sqrt();
                    let tag = format!("{:?}{}", label.side, label.index);
                    checks.push(Check::at_most(
                        format!("outlier location {tag}"),
                        summary.median_location_error[c],
                        5.0 * summary.fluctuations[c],
                    ));
                    checks.push(Check::at_most(
                        format!("outlier overlap {tag}"),
                        summary.median_overlap_error[c],
                        5.0 / (n.sqrt() * root_gap),
                    ));
                    checks.push(Check::at_most(format!("spike estimate {tag}"), summary.median_estimate_error[c], 0.05));
                }
                let t = plan.trials as f64;
                checks.push(Check::at_most(
                    "spike counts missed (fraction of trials)",
                    1.0 - summary.counts_recovered as f64 / t,
                    0.2,
                ));
                outliers = Some(summary);
            }
        }
    }
    Ok(SimulationReport {
        n: plan.n,
        trials: plan.trials,
        seed: plan.seed,
        ensemble: plan.ensemble,
        eigenvalue_rows: decs.into_iter().map(|d| d.eigenvalues).collect(),
        global_law: global,
        local_law_errors,
        rigidity,
        deloc_max,
        outliers,
        checks,
    })
}
