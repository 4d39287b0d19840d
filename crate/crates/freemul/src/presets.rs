//! Bundled scenarios.

use freemul_core::{Side, SpectralMeasure, SpikedModel};

use crate::error::{Error, Result};
use crate::formats::SpikeSpec;

pub const PRESET_NAMES: [&str; 4] = ["two-atom", "smooth", "spiked", "multi-spike"];

/// Distance of the single spike above its threshold in the `spiked` preset.
pub const SPIKE_GAP: f64 = 0.5;

/// Dimension the spiked presets are built for when none is given.
pub const DEFAULT_SPIKED_N: usize = 2000;

#[derive(Debug, Clone)]
pub struct Preset {
    pub name: &'static str,
    pub mu_a: SpectralMeasure,
    pub mu_b: SpectralMeasure,
    pub spikes: Option<SpikeSpec>,
}

/// `½(δ_1 + δ_3)`.
pub fn two_atom() -> SpectralMeasure {
    SpectralMeasure::atomic([(1.0, 0.5), (3.0, 0.5)]).expect("valid measure")
}

/// Semicircle laws on `[0.5, 1.5]` and `[0.4, 1.6]`.
pub fn smooth_pair() -> (SpectralMeasure, SpectralMeasure) {
    (
        SpectralMeasure::semicircle(1.0, 0.5, 201).expect("valid measure"),
        SpectralMeasure::semicircle(1.0, 0.6, 201).expect("valid measure"),
    )
}

/// Looks up a preset; `n` sets the dimension of spiked presets.
pub fn preset(name: &str, n: Option<usize>) -> Result<Preset> {
    let n = n.unwrap_or(DEFAULT_SPIKED_N);
    match name {
        "two-atom" => Ok(Preset { name: "two-atom", mu_a: two_atom(), mu_b: two_atom(), spikes: None }),
        "smooth" => {
            let (mu_a, mu_b) = smooth_pair();
            Ok(Preset { name: "smooth", mu_a, mu_b, spikes: None })
        }
        "spiked" => {
            let (mu_a, mu_b) = smooth_pair();
            let d = single_spike_strength(&mu_a, &mu_b, n, SPIKE_GAP)?;
            Ok(Preset { name: "spiked", mu_a, mu_b, spikes: Some(SpikeSpec { d_a: vec![d], d_b: vec![], n }) })
        }
        // The two-atom base keeps bulk vectors spread over whole eigenspaces of A and B,
        // so only the outlier vectors cross the localization threshold.
        "multi-spike" => Ok(Preset {
            name: "multi-spike",
            mu_a: two_atom(),
            mu_b: two_atom(),
            spikes: Some(SpikeSpec { d_a: vec![1.5, 0.8], d_b: vec![3.0], n }),
        }),
        other => Err(Error::Config(format!(
            "unknown preset '{other}' (expected one of {})",
            PRESET_NAMES.join(", ")
        ))),
    }
}

/// Strength `d` putting `â_1 = a_1 (1 + d)` at `Ω_B(E₊) + gap`.
pub fn single_spike_strength(mu_a: &SpectralMeasure, mu_b: &SpectralMeasure, n: usize, gap: f64) -> Result<f64> {
    let base = SpikedModel::new(mu_a.clone(), mu_b.clone(), vec![0.0], vec![], n)?;
    let threshold = base.omega_at_edge(Side::B);
    Ok((threshold + gap) / base.a_base()[0] - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_presets_load() {
        for name in PRESET_NAMES {
            let p = preset(name, Some(500)).unwrap();
            assert_eq!(p.name, name);
        }
        assert!(preset("nope", None).is_err());
    }

    #[test]
    fn spiked_preset_sits_at_the_requested_gap() {
        let p = preset("spiked", Some(2000)).unwrap();
        let s = p.spikes.unwrap();
        let model = SpikedModel::new(p.mu_a, p.mu_b, s.d_a, s.d_b, s.n).unwrap();
        let (value, threshold) = model.spike_value(freemul_core::SpikeLabel::FromA(0));
        assert!((value - threshold - SPIKE_GAP).abs() < 1e-12);
    }
}
