//! Density, edges and quantiles of `μ_A ⊠ μ_B`.

use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::measures::SpectralMeasure;
use crate::roots::bisect;
use crate::subordination::{solve_path, SolverConfig, SubordinationSolution};

/// Default height at which the density is read off.
pub const DEFAULT_EVAL_ETA: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub location: f64,
    pub omega_a: f64,
    pub omega_b: f64,
    /// The edge sits at the end of the admissible parameter range instead of at a
    /// critical point; the density does not vanish like a square root there.
    pub hard: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PointStatus {
    Converged,
    Failed(Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvolutionResult {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub stieltjes_row: Vec<Complex64>,
    pub status: Vec<PointStatus>,
    pub e_minus: f64,
    pub e_plus: f64,
    pub eval_eta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantileTable {
    pub n: usize,
    /// `γ_1 ≥ … ≥ γ_n`.
    pub gammas: Vec<f64>,
}

impl ConvolutionResult {
    pub fn all_converged(&self) -> bool {
        self.status.iter().all(|s| *s == PointStatus::Converged)
    }

    /// Trapezoid integral of the density.
    pub fn mass(&self) -> f64 {
        self.grid
            .windows(2)
            .zip(self.density.windows(2))
            .map(|(x, r)| 0.5 * (x[1] - x[0]) * (r[0] + r[1]))
            .sum()
    }

    /// CDF obtained from the cumulative trapezoid integral, normalised to total mass one.
    pub fn cdf(&self, x: f64) -> f64 {
        let g = &self.grid;
        if x <= g[0] {
            return 0.0;
        }
        let total = self.mass();
        let mut acc = 0.0;
        for i in 0..g.len() - 1 {
            let h = g[i + 1] - g[i];
            let (r0, r1) = (self.density[i], self.density[i + 1]);
            if x < g[i + 1] {
                let t = x - g[i];
                acc += r0 * t + (r1 - r0) * t * t / (2.0 * h);
                return (acc / total).min(1.0);
            }
            acc += 0.5 * h * (r0 + r1);
        }
        1.0
    }
}

/// `2000`-point uniform grid over `[0.9 a_N b_N, 1.1 a_1 b_1]`.
pub fn default_grid(mu_a: &SpectralMeasure, mu_b: &SpectralMeasure, count: usize) -> Vec<f64> {
    let lo = 0.9 * mu_a.support_lo() * mu_b.support_lo();
    let hi = 1.1 * mu_a.support_hi() * mu_b.support_hi();
    uniform_grid(lo, hi, count)
}

pub fn uniform_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => alloc::vec![0.5 * (lo + hi)],
        _ => {
            let h = (hi - lo) / (count - 1) as f64;
            (0..count)
                .map(|i| if i + 1 == count { hi } else { lo + h * i as f64 })
                .collect()
        }
    }
}

/// Chebyshev-type grid on `[lo, hi]`, clustered towards both ends.
pub fn edge_clustered_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count < 2 {
        return uniform_grid(lo, hi, count);
    }
    (0..count)
        .map(|i| {
            let t = PI * i as f64 / (count - 1) as f64;
            lo + (hi - lo) * 0.5 * (1.0 - t.cos())
        })
        .collect()
}

/// Stieltjes transform of `μ_A ⊠ μ_B` from a converged solution.
pub fn stieltjes_from_solution(mu_a: &SpectralMeasure, sol: &SubordinationSolution) -> Result<Complex64> {
    let m = mu_a.m_transform(sol.omega_b)?;
    Ok(m / (sol.z * (1.0 - m)))
}

/// Solution of the subordination system at `x + iη`, reached by continuation from the
/// upper half-plane. `eta = 0` polishes on the real line when a real solution exists and
/// otherwise keeps the smallest positive height reached.
pub fn solve_point(
    mu_a: &SpectralMeasure,
    mu_b: &SpectralMeasure,
    x: f64,
    eta: f64,
    cfg: &SolverConfig,
) -> Result<SubordinationSolution> {
    if eta > 0.0 {
        let path = solve_path(mu_a, mu_b, x, &[eta], cfg)?;
        return Ok(path[0]);
    }
    let high = cfg.eta_high_for(mu_a, mu_b);
    let tiny = 1e-12 * high;
    match solve_path(mu_a, mu_b, x, &[tiny, 0.0], cfg) {
        Ok(path) => Ok(path[1]),
        // Degenerate pairs such as a point mass against a density keep Ω within
        // `support_margin` of the axis at tiny heights; retry higher up.
        Err(_) => solve_path(mu_a, mu_b, x, &[tiny], cfg)
            .or_else(|_| solve_path(mu_a, mu_b, x, &[1e-8 * high], cfg))
            .map(|p| p[0]),
    }
}

/// `(ρ(x), m_⊠(x + iη))` at one grid point.
///
/// Points outside `[e_minus, e_plus]` are evaluated on the real line, where the density
/// vanishes, falling back to height `eta` if no real solution is found.
pub fn density_point(
    mu_a: &SpectralMeasure,
    mu_b: &SpectralMeasure,
    x: f64,
    eta: f64,
    edges: (f64, f64),
    cfg: &SolverConfig,
) -> Result<(f64, Complex64)> {
    let outside = x > edges.1 || x < edges.0;
    let sol = if outside {
        solve_point(mu_a, mu_b, x, 0.0, cfg).or_else(|_| solve_point(mu_a, mu_b, x, eta, cfg))?
    } else {
        solve_point(mu_a, mu_b, x, eta, cfg)?
    };
    let m = stieltjes_from_solution(mu_a, &sol)?;
    Ok(((m.im / PI).max(0.0), m))
}

/// Density of `μ_A ⊠ μ_B` on `grid` at height `eval_eta` (0 for the real-line limit).
pub fn density(
    mu_a: &SpectralMeasure,
    mu_b: &SpectralMeasure,
    grid: &[f64],
    eval_eta: f64,
    cfg: &SolverConfig,
) -> Result<ConvolutionResult> {
    let lower = find_lower_edge(mu_a, mu_b, cfg)?;
    let upper = find_upper_edge(mu_a, mu_b, cfg)?;
    let edges = (lower.location, upper.location);
    let points: Vec<Result<(f64, Complex64)>> = grid
        .iter()
        .map(|&x| density_point(mu_a, mu_b, x, eval_eta, edges, cfg))
        .collect();
    Ok(assemble(grid, points, edges, eval_eta))
}

/// Collects per-point results in grid order; failed points get density 0.
pub fn assemble(
    grid: &[f64],
    points: Vec<Result<(f64, Complex64)>>,
    edges: (f64, f64),
    eval_eta: f64,
) -> ConvolutionResult {
    let mut density = Vec::with_capacity(grid.len());
    let mut stieltjes_row = Vec::with_capacity(grid.len());
    let mut status = Vec::with_capacity(grid.len());
    for p in points {
        match p {
            Ok((rho, m)) => {
                density.push(rho);
                stieltjes_row.push(m);
                status.push(PointStatus::Converged);
            }
            Err(e) => {
                density.push(0.0);
                stieltjes_row.push(Complex64::new(f64::NAN, f64::NAN));
                status.push(PointStatus::Failed(e));
            }
        }
    }
    ConvolutionResult {
        grid: grid.to_vec(),
        density,
        stieltjes_row,
        status,
        e_minus: edges.0,
        e_plus: edges.1,
        eval_eta,
    }
}

// z̃(Ω) = Ω g(M_B(Ω)) / M_B(Ω) with g = M_A⁻¹ on the branch `above`, and its derivative.
fn edge_curve(
    mu_a: &SpectralMeasure,
    mu_b: &SpectralMeasure,
    omega: f64,
    above: bool,
) -> Result<(f64, f64, f64)> {
    let (mb, mbp) = mu_b.m_transform_real(omega)?;
    let g = if above {
        mu_a.m_inverse_above(mb)?
    } else {
        mu_a.m_inverse_below(mb)?
    };
    let (_, map) = mu_a.m_transform_real(g)?;
    let gp = 1.0 / map;
    let value = omega * g / mb;
    let slope = g / mb + omega * gp * mbp / mb - omega * g * mbp / (mb * mb);
    Ok((value, slope, g))
}

/// Upper edge `E₊` with the real subordination values there.
///
/// `E₊` is the minimum of `z̃₊(Ω)` over real `Ω` above the support of `μ_B`; when
/// `z̃₊` increases on the whole admissible range the minimum is its left end.
pub fn find_upper_edge(mu_a: &SpectralMeasure, mu_b: &SpectralMeasure, _cfg: &SolverConfig) -> Result<Edge> {
    let b_hi = mu_b.support_hi();
    let mut lo = b_hi * (1.0 + 1e-9);
    let (ma_edge, _) = mu_a.m_transform_real(mu_a.support_hi() * (1.0 + 1e-9))?;
    if let Ok(w) = mu_b.m_inverse_above(ma_edge) {
        lo = lo.max(w * (1.0 + 1e-12));
    }
    let hi = 50.0 * b_hi.max(lo);
    let slope = |w: f64| edge_curve(mu_a, mu_b, w, true).map(|c| c.1);

    // Scan on a geometric mesh for the last sign change from − to +.
    const SCAN: usize = 400;
    let ratio = (hi / lo).powf(1.0 / SCAN as f64);
    let mut prev_w = lo;
    let mut prev_s = slope(lo).map_err(|_| Error::EdgeBracketFailure)?;
    let mut bracket = None;
    for k in 1..=SCAN {
        let w = if k == SCAN { hi } else { lo * ratio.powi(k as i32) };
        let s = slope(w).map_err(|_| Error::EdgeBracketFailure)?;
        if prev_s < 0.0 && s >= 0.0 {
            bracket = Some((prev_w, w));
        }
        prev_w = w;
        prev_s = s;
    }
    if prev_s < 0.0 {
        return Err(Error::EdgeBracketFailure);
    }
    let (omega, hard) = match bracket {
        Some((a, b)) => {
            let w = bisect(|w| slope(w).unwrap_or(f64::NAN), a, b, 1e-15, 200)
                .ok_or(Error::EdgeBracketFailure)?;
            (w, false)
        }
        None => (lo, true),
    };
    let (location, _, g) = edge_curve(mu_a, mu_b, omega, true)?;
    Ok(Edge { location, omega_a: omega, omega_b: g, hard })
}

/// Lower edge `E₋`: the maximum of `z̃(Ω)` over real `Ω` in `(0, b_N)`, reached at the
/// first critical point.
pub fn find_lower_edge(mu_a: &SpectralMeasure, mu_b: &SpectralMeasure, _cfg: &SolverConfig) -> Result<Edge> {
    let b_lo = mu_b.support_lo();
    let mut hi = b_lo * (1.0 - 1e-9);
    let (ma_edge, _) = mu_a.m_transform_real(mu_a.support_lo() * (1.0 - 1e-9))?;
    if let Ok(w) = mu_b.m_inverse_below(ma_edge) {
        hi = hi.min(w * (1.0 - 1e-12));
    }
    let lo = 1e-6 * hi;
    let slope = |w: f64| edge_curve(mu_a, mu_b, w, false).map(|c| c.1);

    const SCAN: usize = 400;
    let ratio = (hi / lo).powf(1.0 / SCAN as f64);
    let mut prev_w = lo;
    let mut prev_s = slope(lo).map_err(|_| Error::EdgeBracketFailure)?;
    if prev_s <= 0.0 {
        return Err(Error::EdgeBracketFailure);
    }
    let mut bracket = None;
    for k in 1..=SCAN {
        let w = if k == SCAN { hi } else { lo * ratio.powi(k as i32) };
        let s = slope(w).map_err(|_| Error::EdgeBracketFailure)?;
        if prev_s > 0.0 && s <= 0.0 {
            bracket = Some((prev_w, w));
            break;
        }
        prev_w = w;
        prev_s = s;
    }
    let (omega, hard) = match bracket {
        Some((a, b)) => {
            let w = bisect(|w| slope(w).unwrap_or(f64::NAN), a, b, 1e-15, 200)
                .ok_or(Error::EdgeBracketFailure)?;
            (w, false)
        }
        None => (hi, true),
    };
    let (location, _, g) = edge_curve(mu_a, mu_b, omega, false)?;
    Ok(Edge { location, omega_a: omega, omega_b: g, hard })
}

/// `γ_j` with `∫_{γ_j}^∞ ρ = j / n`, from the cumulative trapezoid integral taken from the
/// top of the grid and clamped to `[e_minus, e_plus]`.
pub fn quantiles(result: &ConvolutionResult, n: usize) -> QuantileTable {
    let g = &result.grid;
    let r = &result.density;
    let total = result.mass();
    let k = g.len();
    // tail[i] = ∫_{g[i]}^{g[k-1]} ρ
    let mut tail = alloc::vec![0.0; k];
    for i in (0..k - 1).rev() {
        tail[i] = tail[i + 1] + 0.5 * (g[i + 1] - g[i]) * (r[i] + r[i + 1]);
    }
    let mut gammas = Vec::with_capacity(n);
    let mut cell = k - 1;
    for j in 1..=n {
        let target = total * j as f64 / n as f64;
        while cell > 0 && tail[cell - 1] < target {
            cell -= 1;
        }
        let gamma = if cell == 0 {
            g[0]
        } else {
            // Solve inside [g[cell-1], g[cell]] on the exact integral of the linear interpolant.
            let (x0, x1) = (g[cell - 1], g[cell]);
            let (r0, r1) = (r[cell - 1], r[cell]);
            let h = x1 - x0;
            let need = target - tail[cell];
            // ∫_{x}^{x1} (linear) = need, with s = x1 − x.
            let f = |s: f64| r1 * s - (r1 - r0) * s * s / (2.0 * h) - need;
            match bisect(f, 0.0, h, 1e-15, 200) {
                Some(s) => x1 - s,
                None => {
                    if need <= 0.0 {
                        x1
                    } else {
                        x0
                    }
                }
            }
        };
        gammas.push(gamma.clamp(result.e_minus, result.e_plus));
    }
    for j in 1..gammas.len() {
        if gammas[j] > gammas[j - 1] {
            gammas[j] = gammas[j - 1];
        }
    }
    QuantileTable { n, gammas }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_quantiles() {
        let grid = uniform_grid(1.0, 2.0, 101);
        let result = ConvolutionResult {
            density: alloc::vec![1.0; grid.len()],
            stieltjes_row: alloc::vec![Complex64::new(0.0, 0.0); grid.len()],
            status: alloc::vec![PointStatus::Converged; grid.len()],
            grid,
            e_minus: 1.0,
            e_plus: 2.0,
            eval_eta: 0.0,
        };
        let q = quantiles(&result, 4);
        for (a, b) in q.gammas.iter().zip([1.75, 1.5, 1.25, 1.0]) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn point_mass_dilates_edges() {
        let a = SpectralMeasure::point_mass(2.0).unwrap();
        let b = SpectralMeasure::semicircle(2.0, 1.0, 401).unwrap();
        let cfg = SolverConfig::default();
        let up = find_upper_edge(&a, &b, &cfg).unwrap();
        assert!((up.location - 6.0).abs() < 1e-6, "{up:?}");
        let low = find_lower_edge(&a, &b, &cfg).unwrap();
        assert!((low.location - 2.0).abs() < 1e-6, "{low:?}");
    }
}
