//! Compactly supported probability measures on `(0, ∞)` and their transforms.

use alloc::vec::Vec;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::roots::newton_bisect;

const ATOM_MERGE_RTOL: f64 = 1e-12;
const ATOM_WEIGHT_TOL: f64 = 1e-12;
const DENSITY_MASS_TOL: f64 = 1e-8;
const REAL_COLLISION_TOL: f64 = 1e-14;
const POLE_TOL: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasureKind {
    Atomic,
    GriddedDensity,
}

/// A probability measure on `[support_lo, support_hi] ⊂ (0, ∞)`.
///
/// Atomic measures keep their atoms sorted by decreasing location. A gridded density is
/// the piecewise-linear interpolant of its values, and its transforms integrate that
/// interpolant exactly, so boundary values on the real axis recover the density itself.
/// Its mass and moments agree with the trapezoid rule on the stored grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralMeasure {
    kind: MeasureKind,
    atoms: Vec<(f64, f64)>,
    grid: Vec<f64>,
    values: Vec<f64>,
    nodes: Vec<(f64, f64)>,
    support_lo: f64,
    support_hi: f64,
}

/// Stieltjes, M- and L-transform of a measure at one point, plus the first two
/// derivatives of the L-transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformValue {
    pub m: Complex64,
    pub big_m: Complex64,
    pub l: Complex64,
    pub l1: Complex64,
    pub l2: Complex64,
}

impl TransformValue {
    /// Derivative of the M-transform, `d/dz (z L(z))`.
    pub fn m_prime(&self, z: Complex64) -> Complex64 {
        self.l + z * self.l1
    }
}

impl SpectralMeasure {
    /// Atomic measure from `(location, weight)` pairs. Weights must sum to one.
    pub fn atomic(atoms: impl Into<Vec<(f64, f64)>>) -> Result<Self> {
        let atoms = atoms.into();
        let total = check_atoms(&atoms)?;
        if (total - 1.0).abs() > ATOM_WEIGHT_TOL {
            return Err(Error::InvalidMeasure("atom weights do not sum to 1"));
        }
        Ok(Self::from_checked_atoms(atoms))
    }

    /// Atomic measure with weights rescaled to sum to one.
    pub fn atomic_normalized(atoms: impl Into<Vec<(f64, f64)>>) -> Result<Self> {
        let mut atoms = atoms.into();
        let total = check_atoms(&atoms)?;
        for a in atoms.iter_mut() {
            a.1 /= total;
        }
        Ok(Self::from_checked_atoms(atoms))
    }

    pub fn point_mass(x: f64) -> Result<Self> {
        Self::atomic([(x, 1.0)])
    }

    /// Equal-weight atomic measure on the given values.
    pub fn empirical_from_samples(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidMeasure("no samples"));
        }
        if let Some(&v) = values.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
            return Err(Error::NonPositiveSample { value: v });
        }
        let w = 1.0 / values.len() as f64;
        let atoms: Vec<(f64, f64)> = values.iter().map(|&x| (x, w)).collect();
        Ok(Self::from_checked_atoms(atoms))
    }

    /// Gridded density; the trapezoid integral must equal one within `1e-8`.
    pub fn density(grid: impl Into<Vec<f64>>, values: impl Into<Vec<f64>>) -> Result<Self> {
        let (grid, values) = (grid.into(), values.into());
        let mass = check_density(&grid, &values)?;
        if (mass - 1.0).abs() > DENSITY_MASS_TOL {
            return Err(Error::InvalidMeasure("density does not integrate to 1"));
        }
        Ok(Self::from_checked_density(grid, values))
    }

    /// Gridded density rescaled so that its trapezoid integral is one.
    pub fn density_normalized(grid: impl Into<Vec<f64>>, values: impl Into<Vec<f64>>) -> Result<Self> {
        let (grid, mut values) = (grid.into(), values.into());
        let mass = check_density(&grid, &values)?;
        for v in values.iter_mut() {
            *v /= mass;
        }
        Ok(Self::from_checked_density(grid, values))
    }

    /// Density proportional to `f` sampled at `count` uniform points of `[lo, hi]`.
    pub fn density_from_fn(lo: f64, hi: f64, count: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        if count < 2 || !(lo > 0.0) || !(hi > lo) {
            return Err(Error::InvalidMeasure("bad density grid specification"));
        }
        let h = (hi - lo) / (count - 1) as f64;
        let grid: Vec<f64> = (0..count)
            .map(|i| if i + 1 == count { hi } else { lo + h * i as f64 })
            .collect();
        let values: Vec<f64> = grid.iter().map(|&x| f(x)).collect();
        Self::density_normalized(grid, values)
    }

    /// Semicircle-shaped density centred at `center` with half-width `radius`.
    pub fn semicircle(center: f64, radius: f64, count: usize) -> Result<Self> {
        Self::density_from_fn(center - radius, center + radius, count, |x| {
            let t = (x - center) / radius;
            (1.0 - t * t).max(0.0).sqrt()
        })
    }

    fn from_checked_atoms(mut atoms: Vec<(f64, f64)>) -> Self {
        atoms.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
        for (x, w) in atoms {
            match merged.last_mut() {
                Some(last) if last.0 - x <= ATOM_MERGE_RTOL * last.0 => last.1 += w,
                _ => merged.push((x, w)),
            }
        }
        let support_hi = merged[0].0;
        let support_lo = merged[merged.len() - 1].0;
        Self {
            kind: MeasureKind::Atomic,
            nodes: merged.clone(),
            atoms: merged,
            grid: Vec::new(),
            values: Vec::new(),
            support_lo,
            support_hi,
        }
    }

    fn from_checked_density(grid: Vec<f64>, values: Vec<f64>) -> Self {
        let w = trapezoid_weights(&grid);
        let mut nodes: Vec<(f64, f64)> = grid
            .iter()
            .zip(&values)
            .zip(&w)
            .filter(|((_, v), _)| **v > 0.0)
            .map(|((x, v), w)| (*x, v * w))
            .collect();
        nodes.reverse();
        Self {
            kind: MeasureKind::GriddedDensity,
            atoms: Vec::new(),
            support_lo: grid[0],
            support_hi: grid[grid.len() - 1],
            grid,
            values,
            nodes,
        }
    }

    pub fn kind(&self) -> MeasureKind {
        self.kind
    }

    /// Atoms sorted by decreasing location (empty for densities).
    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Quadrature nodes `(location, mass)` in decreasing location order.
    pub fn nodes(&self) -> &[(f64, f64)] {
        &self.nodes
    }

    pub fn support_lo(&self) -> f64 {
        self.support_lo
    }

    pub fn support_hi(&self) -> f64 {
        self.support_hi
    }

    pub fn mean(&self) -> f64 {
        self.nodes.iter().map(|(x, w)| x * w).sum()
    }

    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        self.nodes.iter().map(|(x, w)| w * (x - mean) * (x - mean)).sum()
    }

    /// Distance from `z` to the set where the measure lives: the atoms for atomic
    /// measures, the grid hull for densities.
    pub fn support_distance(&self, z: Complex64) -> f64 {
        match self.kind {
            MeasureKind::Atomic => self
                .atoms
                .iter()
                .map(|(x, _)| (z - x).norm())
                .fold(f64::INFINITY, f64::min),
            MeasureKind::GriddedDensity => hull_distance(z, self.support_lo, self.support_hi),
        }
    }

    /// Distance from `z` to the interval `[support_lo, support_hi]`.
    pub fn hull_distance(&self, z: Complex64) -> f64 {
        hull_distance(z, self.support_lo, self.support_hi)
    }

    fn check_argument(&self, z: Complex64) -> Result<()> {
        if !(z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::SupportCollision { z });
        }
        if z.im != 0.0 {
            return Ok(());
        }
        let hit = match self.kind {
            MeasureKind::Atomic => self
                .atoms
                .iter()
                .any(|(x, _)| (z.re - x).abs() <= REAL_COLLISION_TOL * x.max(1.0)),
            MeasureKind::GriddedDensity => {
                let tol = REAL_COLLISION_TOL * self.support_hi.max(1.0);
                z.re >= self.support_lo - tol && z.re <= self.support_hi + tol
            }
        };
        if hit {
            Err(Error::SupportCollision { z })
        } else {
            Ok(())
        }
    }

    /// `∫ dμ(x) / (x − z)`.
    pub fn stieltjes(&self, z: Complex64) -> Result<Complex64> {
        self.check_argument(z)?;
        Ok(self.moments(z)[0])
    }

    /// Stieltjes, M- and L-transforms with the first two derivatives of L.
    pub fn transforms(&self, z: Complex64) -> Result<TransformValue> {
        self.check_argument(z)?;
        let [s1, s2, s3, t1, t2, t3] = self.moments(z);
        let m = s1;
        let denom = 1.0 + z * m;
        if denom.norm() <= POLE_TOL || t1.norm() <= POLE_TOL {
            return Err(Error::MTransformPole { z });
        }
        let big_m = z * m / denom;
        let l = big_m / z;
        // L = s1 / t1 with t1 = 1 + z s1 evaluated without cancellation.
        let inv = t1.inv();
        let num1 = s2 * t1 - s1 * t2;
        let l1 = num1 * inv * inv;
        let l2 = (2.0 * s3 * t1 - 2.0 * s1 * t3) * inv * inv - 2.0 * t2 * num1 * inv * inv * inv;
        Ok(TransformValue { m, big_m, l, l1, l2 })
    }

    // [s_1, s_2, s_3, t_1, t_2, t_3] with s_k = ∫ (x − z)^{-k} dμ and t_k = ∫ x (x − z)^{-k} dμ.
    fn moments(&self, z: Complex64) -> [Complex64; 6] {
        let zero = Complex64::new(0.0, 0.0);
        let mut out = [zero; 6];
        match self.kind {
            MeasureKind::Atomic => {
                for &(x, w) in &self.nodes {
                    let r = (x - z).inv();
                    let r2 = r * r;
                    let r3 = r2 * r;
                    out[0] += w * r;
                    out[1] += w * r2;
                    out[2] += w * r3;
                    out[3] += (w * x) * r;
                    out[4] += (w * x) * r2;
                    out[5] += (w * x) * r3;
                }
            }
            MeasureKind::GriddedDensity => {
                for (x, v) in self.grid.windows(2).zip(self.values.windows(2)) {
                    if v[0] == 0.0 && v[1] == 0.0 {
                        continue;
                    }
                    let mid = 0.5 * (x[0] + x[1]);
                    let half = 0.5 * (x[1] - x[0]);
                    let seg = segment_moments(mid, half, v[0], v[1], z);
                    for k in 0..3 {
                        out[k] += seg[k];
                    }
                }
                let mass: f64 = self.nodes.iter().map(|n| n.1).sum();
                out[3] = mass + z * out[0];
                out[4] = out[0] + z * out[1];
                out[5] = out[1] + z * out[2];
            }
        }
        out
    }

    /// M-transform alone.
    pub fn m_transform(&self, z: Complex64) -> Result<Complex64> {
        self.transforms(z).map(|t| t.big_m)
    }

    /// Real M-transform with its derivative at a real point outside the support.
    pub fn m_transform_real(&self, x: f64) -> Result<(f64, f64)> {
        let z = Complex64::new(x, 0.0);
        let t = self.transforms(z)?;
        Ok((t.big_m.re, t.m_prime(z).re))
    }

    /// Inverse of the real M-transform on `(support_hi, ∞)`, where it increases.
    pub fn m_inverse_above(&self, value: f64) -> Result<f64> {
        let lo = self.support_hi * (1.0 + 1e-9);
        let hi = 1e6 * self.support_hi.max(1.0);
        self.m_inverse_on(value, lo, hi)
    }

    /// Inverse of the real M-transform on `(0, support_lo)`, where it increases from 0.
    pub fn m_inverse_below(&self, value: f64) -> Result<f64> {
        if !(value > 0.0) {
            return Err(Error::InversionOutOfRange { value });
        }
        let hi = self.support_lo * (1.0 - 1e-9);
        let lo = (1e-9 * self.support_lo).min(hi * 0.5);
        self.m_inverse_on(value, lo, hi)
    }

    fn m_inverse_on(&self, value: f64, lo: f64, hi: f64) -> Result<f64> {
        let (mlo, _) = self.m_transform_real(lo)?;
        let (mhi, _) = self.m_transform_real(hi)?;
        if !(value >= mlo && value <= mhi) {
            return Err(Error::InversionOutOfRange { value });
        }
        newton_bisect(
            |x| match self.m_transform_real(x) {
                Ok((m, dm)) => (m - value, dm),
                Err(_) => (f64::NAN, f64::NAN),
            },
            lo,
            hi,
            1e-15,
            300,
        )
        .ok_or(Error::InversionOutOfRange { value })
    }

    /// The measure pushed forward by `x ↦ c x`.
    pub fn dilate(&self, c: f64) -> Result<Self> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::InvalidMeasure("dilation factor must be positive"));
        }
        Ok(match self.kind {
            MeasureKind::Atomic => {
                Self::from_checked_atoms(self.atoms.iter().map(|&(x, w)| (c * x, w)).collect())
            }
            MeasureKind::GriddedDensity => Self::from_checked_density(
                self.grid.iter().map(|x| c * x).collect(),
                self.values.iter().map(|v| v / c).collect(),
            ),
        })
    }

    /// Dilation of the measure with mean one.
    pub fn normalize_mean(&self) -> Result<Self> {
        self.dilate(1.0 / self.mean())
    }

    /// `μ((−∞, x])`.
    pub fn cdf(&self, x: f64) -> f64 {
        match self.kind {
            MeasureKind::Atomic => self.atoms.iter().filter(|a| a.0 <= x).map(|a| a.1).sum(),
            MeasureKind::GriddedDensity => self.density_cdf(x),
        }
    }

    /// `μ((−∞, x))`.
    pub fn cdf_left(&self, x: f64) -> f64 {
        match self.kind {
            MeasureKind::Atomic => self.atoms.iter().filter(|a| a.0 < x).map(|a| a.1).sum(),
            MeasureKind::GriddedDensity => self.density_cdf(x),
        }
    }

    fn density_cdf(&self, x: f64) -> f64 {
        let g = &self.grid;
        if x <= g[0] {
            return 0.0;
        }
        let mut acc = 0.0;
        for i in 0..g.len() - 1 {
            let h = g[i + 1] - g[i];
            let (r0, r1) = (self.values[i], self.values[i + 1]);
            if x < g[i + 1] {
                let t = x - g[i];
                return acc + r0 * t + (r1 - r0) * t * t / (2.0 * h);
            }
            acc += 0.5 * h * (r0 + r1);
        }
        acc
    }

    /// Breakpoints of the CDF: atom locations or grid points, increasing.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self.kind {
            MeasureKind::Atomic => self.atoms.iter().rev().map(|a| a.0).collect(),
            MeasureKind::GriddedDensity => self.grid.clone(),
        }
    }

    /// Smallest `x` with `cdf(x) ≥ p`.
    pub fn quantile(&self, p: f64) -> f64 {
        let p = p.clamp(0.0, 1.0);
        match self.kind {
            MeasureKind::Atomic => {
                let mut acc = 0.0;
                for &(x, w) in self.atoms.iter().rev() {
                    acc += w;
                    if acc >= p - 1e-13 {
                        return x;
                    }
                }
                self.support_hi
            }
            MeasureKind::GriddedDensity => {
                let g = &self.grid;
                let mut acc = 0.0;
                for i in 0..g.len() - 1 {
                    let h = g[i + 1] - g[i];
                    let (r0, r1) = (self.values[i], self.values[i + 1]);
                    let cell = 0.5 * h * (r0 + r1);
                    if acc + cell >= p && cell > 0.0 {
                        let target = p - acc;
                        let (a, b) = (g[i], g[i + 1]);
                        return crate::roots::bisect(
                            |x| self.density_cdf(x) - acc - target,
                            a,
                            b,
                            1e-15,
                            200,
                        )
                        .unwrap_or(if target <= 0.0 { a } else { b });
                    }
                    acc += cell;
                }
                self.support_hi
            }
        }
    }

    /// The `n` values `q_i = quantile(1 − (i − ½)/n)`, `i = 1..n`, in decreasing order: a
    /// diagonal matrix whose spectral distribution approximates the measure.
    pub fn quantile_diagonal(&self, n: usize) -> Vec<f64> {
        (1..=n)
            .map(|i| self.quantile(1.0 - (i as f64 - 0.5) / n as f64))
            .collect()
    }
}

/// Lévy distance between the CDFs of two measures.
pub fn levy_distance(mu1: &SpectralMeasure, mu2: &SpectralMeasure) -> f64 {
    let feasible = |eps: f64| -> bool {
        dominated(mu1, mu2, eps) && dominated(mu2, mu1, eps)
    };
    if feasible(0.0) {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

// F_upper(x) ≤ F_lower(x + ε) + ε for all x.
fn dominated(lower: &SpectralMeasure, upper: &SpectralMeasure, eps: f64) -> bool {
    let slack = 1e-14;
    let mut candidates = upper.breakpoints();
    candidates.extend(lower.breakpoints().into_iter().map(|b| b - eps));
    candidates.iter().all(|&x| {
        upper.cdf(x) <= lower.cdf(x + eps) + eps + slack
            && upper.cdf_left(x) <= lower.cdf_left(x + eps) + eps + slack
    })
}

// ∫ ρ(t) (t − z)^{-k} dt over [mid − half, mid + half] for k = 1, 2, 3, with ρ linear
// from `lo` to `hi`. Distant segments (small q = half / (mid − z)) use series in q so the
// leading terms do not cancel.
fn segment_moments(mid: f64, half: f64, lo: f64, hi: f64, z: Complex64) -> [Complex64; 3] {
    let w = mid - z;
    let q = half / w;
    let p = (w - half) * (w + half);
    // I0 = ∫ du/(u + w) and I1 = ∫ u du/(u + w) on [−half, half], with w-derivatives.
    let d_i0 = -2.0 * half / p;
    let dd_i0 = 4.0 * half * w / (p * p);
    let dd_i1 = -4.0 * half * half * half / (p * p);
    let (i0, i1, d_i1) = if q.norm() < 0.5 {
        // a = atanh(q)/q − 1 and b = q²/(1 − q²) − a, summed as series in q².
        let q2 = q * q;
        let (mut a, mut b) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
        let mut pow = q2;
        for j in 1..200 {
            let odd = (2 * j + 1) as f64;
            a += pow / odd;
            b += pow * ((2 * j) as f64 / odd);
            pow *= q2;
            if pow.norm() < 1e-18 {
                break;
            }
        }
        (2.0 * q * (1.0 + a), -2.0 * half * a, 2.0 * q * b)
    } else {
        let i0 = (w + half).ln() - (w - half).ln();
        (i0, 2.0 * half - w * i0, -i0 - w * d_i0)
    };
    let level = 0.5 * (lo + hi);
    let slope = (hi - lo) / (2.0 * half);
    [
        level * i0 + slope * i1,
        -(level * d_i0 + slope * d_i1),
        0.5 * (level * dd_i0 + slope * dd_i1),
    ]
}

fn hull_distance(z: Complex64, lo: f64, hi: f64) -> f64 {
    let dx = if z.re < lo {
        lo - z.re
    } else if z.re > hi {
        z.re - hi
    } else {
        0.0
    };
    dx.hypot(z.im)
}

fn check_atoms(atoms: &[(f64, f64)]) -> Result<f64> {
    if atoms.is_empty() {
        return Err(Error::InvalidMeasure("no atoms"));
    }
    let mut total = 0.0;
    for &(x, w) in atoms {
        if !(x > 0.0) || !x.is_finite() {
            return Err(Error::InvalidMeasure("atom location must be positive"));
        }
        if !(w > 0.0) || !w.is_finite() {
            return Err(Error::InvalidMeasure("atom weight must be positive"));
        }
        total += w;
    }
    Ok(total)
}

fn check_density(grid: &[f64], values: &[f64]) -> Result<f64> {
    if grid.len() < 2 || grid.len() != values.len() {
        return Err(Error::InvalidMeasure("grid and values must have equal length ≥ 2"));
    }
    if !(grid[0] > 0.0) {
        return Err(Error::InvalidMeasure("grid must be positive"));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) || !grid[grid.len() - 1].is_finite() {
        return Err(Error::InvalidMeasure("grid must be strictly increasing"));
    }
    if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidMeasure("density values must be nonnegative"));
    }
    let mass: f64 = trapezoid_weights(grid).iter().zip(values).map(|(w, v)| w * v).sum();
    if !(mass > 0.0) {
        return Err(Error::InvalidMeasure("density has zero mass"));
    }
    Ok(mass)
}

pub(crate) fn trapezoid_weights(grid: &[f64]) -> Vec<f64> {
    let n = grid.len();
    let mut w = alloc::vec![0.0; n];
    for i in 0..n - 1 {
        let h = 0.5 * (grid[i + 1] - grid[i]);
        w[i] += h;
        w[i + 1] += h;
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn two_atom() -> SpectralMeasure {
        SpectralMeasure::atomic([(1.0, 0.5), (3.0, 0.5)]).unwrap()
    }

    #[test]
    fn stieltjes_of_point_mass() {
        let m = SpectralMeasure::point_mass(1.0).unwrap().stieltjes(c(0.0, 2.0)).unwrap();
        assert!((m - c(0.2, 0.4)).norm() < 1e-15);
    }

    #[test]
    fn stieltjes_of_two_atoms() {
        let m = two_atom().stieltjes(c(0.0, 2.0)).unwrap();
        let expected = 0.5 * (c(1.0, 2.0) / 5.0 + c(3.0, 2.0) / 13.0);
        assert!((m - expected).norm() < 1e-15);
        assert!((m.re - 0.215_384_615_384_615_4).abs() < 1e-12);
        assert!((m.im - 0.276_923_076_923_076_9).abs() < 1e-12);
    }

    #[test]
    fn gridded_stieltjes_converges_under_refinement() {
        let coarse = SpectralMeasure::semicircle(2.0, 1.0, 10_001).unwrap();
        let fine = SpectralMeasure::semicircle(2.0, 1.0, 100_001).unwrap();
        let z = c(2.0, 1.0);
        let d = (coarse.stieltjes(z).unwrap() - fine.stieltjes(z).unwrap()).norm();
        assert!(d < 1e-6, "{d}");
    }

    #[test]
    fn interpolant_moments_match_fine_quadrature() {
        let mu = SpectralMeasure::density_normalized(vec![1.0, 1.5, 3.0], vec![0.2, 0.8, 0.4]).unwrap();
        // Midpoint rule on the interpolant with a million cells per segment.
        let brute = |z: Complex64, k: i32| -> Complex64 {
            let mut acc = Complex64::new(0.0, 0.0);
            for (x, v) in mu.grid().windows(2).zip(mu.values().windows(2)) {
                let cells = 1_000_000;
                let h = (x[1] - x[0]) / cells as f64;
                for i in 0..cells {
                    let t = x[0] + (i as f64 + 0.5) * h;
                    let rho = v[0] + (v[1] - v[0]) * (t - x[0]) / (x[1] - x[0]);
                    acc += rho * h * (t - z).powi(-k);
                }
            }
            acc
        };
        for z in [Complex64::new(2.0, 0.3), Complex64::new(40.0, 5.0), Complex64::new(1.2, 1e-3)] {
            let m = mu.moments(z);
            for k in 0..3 {
                let want = brute(z, k as i32 + 1);
                assert!((m[k] - want).norm() <= 1e-6 * want.norm(), "z = {z}, k = {k}: {} vs {want}", m[k]);
            }
        }
    }

    #[test]
    fn density_boundary_value_is_the_density() {
        let mu = SpectralMeasure::density(vec![1.0, 2.0, 3.0], vec![0.25, 0.75, 0.25]).unwrap();
        let m = mu.stieltjes(Complex64::new(1.5, 1e-10)).unwrap();
        assert!((m.im / core::f64::consts::PI - 0.5).abs() < 1e-8, "{m}");
    }

    #[test]
    fn point_mass_m_transform_is_scaling() {
        let z = c(3.0, 1.0);
        let t = SpectralMeasure::point_mass(2.0).unwrap().transforms(z).unwrap();
        assert!((t.big_m - c(1.5, 0.5)).norm() < 1e-14);
        let t = SpectralMeasure::point_mass(1.0).unwrap().transforms(c(2.0, 1.0)).unwrap();
        assert!((t.big_m - c(2.0, 1.0)).norm() < 1e-14);
        assert!((t.l - c(1.0, 0.0)).norm() < 1e-14);
        assert!(t.l1.norm() < 1e-14 && t.l2.norm() < 1e-14);
    }

    #[test]
    fn l_derivative_matches_finite_difference() {
        let mu = two_atom();
        let z = c(5.0, 0.0);
        let h = 1e-6;
        let t = mu.transforms(z).unwrap();
        let lp = mu.transforms(z + h).unwrap().l;
        let lm = mu.transforms(z - h).unwrap().l;
        let fd = (lp - lm) / (2.0 * h);
        assert!((t.l1 - fd).norm() <= 1e-7 * t.l1.norm(), "{} vs {}", t.l1, fd);
    }

    #[test]
    fn m_identity_is_exact() {
        let mu = two_atom();
        let z = c(0.7, 0.3);
        let t = mu.transforms(z).unwrap();
        assert_eq!(t.big_m, z * t.m / (1.0 + z * t.m));
        assert_eq!(t.l, t.big_m / z);
    }

    #[test]
    fn support_collision() {
        let mu = two_atom();
        assert!(matches!(mu.stieltjes(c(3.0, 0.0)), Err(Error::SupportCollision { .. })));
        let d = SpectralMeasure::semicircle(2.0, 1.0, 101).unwrap();
        assert!(matches!(d.stieltjes(c(2.5, 0.0)), Err(Error::SupportCollision { .. })));
        assert!(d.stieltjes(c(3.5, 0.0)).is_ok());
    }

    #[test]
    fn m_transform_pole_between_atoms() {
        // I1(x) = ½ (1/(1−x) + 3/(3−x)) vanishes at x = 1.5
        let mu = two_atom();
        assert!(matches!(mu.transforms(c(1.5, 0.0)), Err(Error::MTransformPole { .. })));
    }

    #[test]
    fn empirical_measures() {
        let mu = SpectralMeasure::empirical_from_samples(&[2.0, 1.0, 3.0]).unwrap();
        assert_eq!(mu.atoms().len(), 3);
        assert_eq!(mu.atoms()[0].0, 3.0);
        assert_eq!(mu.atoms()[2].0, 1.0);
        assert!(mu.atoms().iter().all(|a| (a.1 - 1.0 / 3.0).abs() < 1e-15));
        let one = SpectralMeasure::empirical_from_samples(&[1.0]).unwrap();
        assert_eq!(one.atoms(), &[(1.0, 1.0)]);
        let merged = SpectralMeasure::empirical_from_samples(&[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(merged.atoms().len(), 1);
        assert!((merged.atoms()[0].1 - 1.0).abs() < 1e-15);
        assert!(matches!(
            SpectralMeasure::empirical_from_samples(&[1.0, -2.0]),
            Err(Error::NonPositiveSample { value }) if value == -2.0
        ));
    }

    #[test]
    fn rejects_bad_measures() {
        assert!(SpectralMeasure::atomic([(1.0, 0.5)]).is_err());
        assert!(SpectralMeasure::atomic([(0.0, 1.0)]).is_err());
        assert!(SpectralMeasure::density(vec![1.0, 2.0], vec![0.5, 0.5]).is_err());
        assert!(SpectralMeasure::density(vec![1.0, 2.0], vec![1.0, 1.0]).is_ok());
        assert!(SpectralMeasure::density(vec![2.0, 1.0], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn levy_of_shifted_point_masses() {
        let a = SpectralMeasure::point_mass(1.0).unwrap();
        let b = SpectralMeasure::point_mass(1.5).unwrap();
        assert!((levy_distance(&a, &b) - 0.5).abs() < 1e-12);
        assert_eq!(levy_distance(&a, &a), 0.0);
    }

    #[test]
    fn real_m_inverse_round_trip() {
        let mu = two_atom();
        for x in [3.2, 4.0, 10.0, 100.0] {
            let (m, _) = mu.m_transform_real(x).unwrap();
            let back = mu.m_inverse_above(m).unwrap();
            assert!((back - x).abs() < 1e-9 * x, "{x} -> {back}");
        }
        for x in [0.1, 0.5, 0.9] {
            let (m, _) = mu.m_transform_real(x).unwrap();
            let back = mu.m_inverse_below(m).unwrap();
            assert!((back - x).abs() < 1e-10, "{x} -> {back}");
        }
    }

    #[test]
    fn quantile_diagonal_of_two_atoms() {
        let d = two_atom().quantile_diagonal(6);
        assert_eq!(d, vec![3.0, 3.0, 3.0, 1.0, 1.0, 1.0]);
        let u = SpectralMeasure::density(vec![1.0, 2.0], vec![1.0, 1.0]).unwrap();
        let q = u.quantile_diagonal(4);
        for (a, b) in q.iter().zip([1.875, 1.625, 1.375, 1.125]) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
