//! Subordination functions of `μ_A ⊠ μ_B`.
//!
//! The pair `(Ω_A, Ω_B)` at a spectral point `z` is the root of
//!
//! ```text
//! Φ_A(ω₁, ω₂) = L_A(ω₂) − ω₁ / z
//! Φ_B(ω₁, ω₂) = L_B(ω₁) − ω₂ / z
//! ```
//!
//! with `ω₁ = Ω_A`, `ω₂ = Ω_B` and `L_μ(ω) = M_μ(ω) / ω`.

use alloc::vec::Vec;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::measures::{SpectralMeasure, TransformValue};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Target residual `max(|Φ_A|, |Φ_B|)`.
    pub tol: f64,
    /// Residual below which the damped fixed point hands over to Newton.
    pub newton_switch: f64,
    pub max_iter: usize,
    /// Minimal distance between an iterate and the support it is evaluated against.
    pub support_margin: f64,
    /// Attach a Kantorovich certificate computed where Newton starts.
    pub certify: bool,
    /// Largest allowed ratio between consecutive continuation steps, `η_{k+1} / η_k`.
    pub eta_ratio: f64,
    /// Starting height for continuation; `None` means `10 · a₁ · b₁`.
    pub eta_high: Option<f64>,
    /// Relative jump `|ΔΩ| / max(|Ω|, 1)` treated as a branch jump.
    pub continuation_jump: f64,
    /// Number of step halvings allowed per continuation step.
    pub max_halvings: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-11,
            newton_switch: 1e-3,
            max_iter: 200,
            support_margin: 1e-8,
            certify: false,
            eta_ratio: 0.7,
            eta_high: None,
            continuation_jump: 0.5,
            max_halvings: 30,
        }
    }
}

impl SolverConfig {
    pub fn with_certificate(mut self) -> Self {
        self.certify = true;
        self
    }

    pub fn eta_high_for(&self, mu_a: &SpectralMeasure, mu_b: &SpectralMeasure) -> f64 {
        self.eta_high
            .unwrap_or(10.0 * mu_a.support_hi() * mu_b.support_hi())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KantorovichCertificate {
    pub b: f64,
    pub l: f64,
    pub t_star: f64,
    /// Radius of the ball around the starting point on which `l` is valid.
    pub radius: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubordinationSolution {
    pub z: Complex64,
    pub omega_a: Complex64,
    pub omega_b: Complex64,
    pub residual: f64,
    pub iterations: usize,
    pub certificate: Option<KantorovichCertificate>,
    /// Point where the Newton phase started; the certificate refers to it.
    pub newton_start: Option<(Complex64, Complex64)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityReport {
    pub s_ab: Complex64,
    pub t_a: Complex64,
    pub t_b: Complex64,
    pub omega_a_prime: Complex64,
    pub omega_b_prime: Complex64,
}

/// `(Φ_A, Φ_B)` at `(ω₁, ω₂, z)`.
pub fn phi(
    mu_a: &SpectralMeasure,
    mu_b: &SpectralMeasure,
    omega_a: Complex64,
    omega_b: Complex64,
    z: Complex64,
) -> Result<(Complex64, Complex64)> {
    let la = mu_a.transforms(omega_b)?.l;
    let lb = mu_b.transforms(omega_a)?.l;
    Ok((la - omega_a / z, lb - omega_b / z))
}

struct Eval {
    fa: Complex64,
    fb: Complex64,
    ta: TransformValue,
    tb: TransformValue,
    residual: f64,
}

struct Problem<'a> {
    mu_a: &'a SpectralMeasure,
    mu_b: &'a SpectralMeasure,
    z: Complex64,
    cfg: &'a SolverConfig,
}

impl Problem<'_> {
    fn admissible(&self, wa: Complex64, wb: Complex64) -> bool {
        let finite = wa.re.is_finite() && wa.im.is_finite() && wb.re.is_finite() && wb.im.is_finite();
        finite
            && self.mu_a.support_distance(wb) > self.cfg.support_margin
            && self.mu_b.support_distance(wa) > self.cfg.support_margin
            && (self.z.im <= 0.0 || (wa.im >= 0.0 && wb.im >= 0.0))
    }

    fn eval(&self, wa: Complex64, wb: Complex64) -> Result<Eval> {
        if !self.admissible(wa, wb) {
            return Err(Error::LeftAdmissibleRegion { z: self.z });
        }
        let ta = self.mu_a.transforms(wb)?;
        let tb = self.mu_b.transforms(wa)?;
        let fa = ta.l - wa / self.z;
        let fb = tb.l - wb / self.z;
        let residual = fa.norm().max(fb.norm());
        Ok(Eval { fa, fb, ta, tb, residual })
    }

    fn newton_step(&self, e: &Eval) -> (Complex64, Complex64) {
        let zi = self.z.inv();
        let a = e.ta.l1;
        let b = e.tb.l1;
        let det = zi * zi - a * b;
        ((e.fa * zi + a * e.fb) / det, (e.fb * zi + b * e.fa) / det)
    }
}

fn below_arg(w: Complex64, z: Complex64) -> bool {
    z.im > 0.0 && w.arg() < z.arg() - 1e-12
}

/// Solves the subordination system at `z`.
///
/// Without a guess the iteration starts from `(z / mean_A, z / mean_B)`, the large-`|z|`
/// asymptote of the solution. Real `z` without a guess is reached by continuation from
/// the upper half-plane.
pub fn solve_at(
    mu_a: &SpectralMeasure,
    mu_b: &SpectralMeasure,
    z: Complex64,
    guess: Option<(Complex64, Complex64)>,
    cfg: &SolverConfig,
) -> Result<SubordinationSolution> {
    if z.im < 0.0 || z.norm() == 0.0 || !z.re.is_finite() || !z.im.is_finite() {
        return Err(Error::LeftAdmissibleRegion { z });
    }
    let (wa, wb) = match guess {
        Some(g) => g,
        None if z.im == 0.0 => {
            let schedule = [cfg.eta_high_for(mu_a, mu_b), 0.0];
            let path = solve_path(mu_a, mu_b, z.re, &schedule, cfg)?;
            return Ok(path[path.len() - 1]);
        }
        None => (z / mu_a.mean(), z / mu_b.mean()),
    };
    let p = Problem { mu_a, mu_b, z, cfg };
    let mut cur = (wa, wb);
    let mut e = p.eval(cur.0, cur.1)?;
    let mut iterations = 0;

    // Damped Jacobi fixed point: (Ω_A, Ω_B) ← (z L_A(Ω_B), z L_B(Ω_A)).
    let mut best = e.residual;
    let mut stalled = 0;
    while z.im > 0.0 && e.residual > cfg.newton_switch && e.residual > cfg.tol {
        if iterations >= cfg.max_iter {
            return Err(Error::NoConvergence { z, iterations, residual: e.residual });
        }
        iterations += 1;
        let mut next = (z * e.ta.l, z * e.tb.l);
        if below_arg(next.0, z) || below_arg(next.1, z) {
            next = (0.5 * (cur.0 + next.0), 0.5 * (cur.1 + next.1));
        }
        cur = next;
        e = p.eval(cur.0, cur.1)?;
        if e.residual < 0.9 * best {
            best = e.residual;
            stalled = 0;
        } else {
            stalled += 1;
            if stalled > 20 {
                break;
            }
        }
    }

    let newton_start = cur;
    let certificate = if cfg.certify {
        Some(certificate_at(mu_a, mu_b, z, cur, &e))
    } else {
        None
    };

    while e.residual > cfg.tol {
        if iterations >= cfg.max_iter {
            return Err(Error::NoConvergence { z, iterations, residual: e.residual });
        }
        iterations += 1;
        let (da, db) = p.newton_step(&e);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=30 {
            let trial = (cur.0 + t * da, cur.1 + t * db);
            if let Ok(te) = p.eval(trial.0, trial.1) {
                if te.residual < e.residual || te.residual <= cfg.tol {
                    accepted = Some((trial, te));
                    break;
                }
            }
            t *= 0.5;
        }
        match accepted {
            Some((trial, te)) => {
                cur = trial;
                e = te;
            }
            None => {
                return Err(Error::NoConvergence { z, iterations, residual: e.residual });
            }
        }
    }

    // One more full step: the residual is relative to Ω/z, so identities scaled by
    // |zΩ| only reach absolute accuracy near machine precision.
    if e.residual > 0.0 {
        let (da, db) = p.newton_step(&e);
        if let Ok(te) = p.eval(cur.0 + da, cur.1 + db) {
            if te.residual < e.residual {
                cur = (cur.0 + da, cur.1 + db);
                e = te;
                iterations += 1;
            }
        }
    }

    Ok(SubordinationSolution {
        z,
        omega_a: cur.0,
        omega_b: cur.1,
        residual: e.residual,
        iterations,
        certificate,
        newton_start: Some(newton_start),
    })
}

/// Kantorovich data `(b, L, t_*)` for Newton started at `x0`.
pub fn kantorovich(
    mu_a: &SpectralMeasure,
    mu_b: &SpectralMeasure,
    z: Complex64,
    x0: (Complex64, Complex64),
) -> Result<KantorovichCertificate> {
    let cfg = SolverConfig::default();
    let p = Problem { mu_a, mu_b, z, cfg: &cfg };
    let e = p.eval(x0.0, x0.1)?;
    Ok(certificate_at(mu_a, mu_b, z, x0, &e))
}

fn certificate_at(
    mu_a: &SpectralMeasure,
    mu_b: &SpectralMeasure,
    z: Complex64,
    (wa, wb): (Complex64, Complex64),
    e: &Eval,
) -> KantorovichCertificate {
    const C: f64 = 0.5;
    let zi = z.inv();
    let a = e.ta.l1;
    let b = e.tb.l1;
    let det = zi * zi - a * b;
    // J⁻¹ = [[−1/z, −a], [−b, −1/z]] / det
    let jinv_norm = ((2.0 * zi.norm_sqr() + a.norm_sqr() + b.norm_sqr()).sqrt()) / det.norm();
    let step = ((e.fa * zi + a * e.fb) / det, (e.fb * zi + b * e.fa) / det);
    let b_val = (step.0.norm_sqr() + step.1.norm_sqr()).sqrt();

    let dist_a = mu_a.hull_distance(wb);
    let dist_b = mu_b.hull_distance(wa);
    let floor = 0.5 * (1.0 - C) * z.norm();
    let mut radius = dist_a.min(dist_b).min(wa.norm() - floor).min(wb.norm() - floor);
    if z.im > 0.0 {
        radius = radius.min(wa.im).min(wb.im);
    }
    radius *= 0.5;

    let spread = |mu: &SpectralMeasure| mu.variance() / (mu.mean() * mu.mean());
    let lip = if radius > 0.0 {
        let ca = 2.0 * spread(mu_a) / (dist_a - radius).powi(3);
        let cb = 2.0 * spread(mu_b) / (dist_b - radius).powi(3);
        jinv_norm * ca.max(cb)
    } else {
        f64::INFINITY
    };
    let h = 2.0 * b_val * lip;
    let t_star = if lip == 0.0 {
        b_val
    } else if h < 1.0 {
        (1.0 - (1.0 - h).sqrt()) / lip
    } else {
        f64::INFINITY
    };
    KantorovichCertificate {
        b: b_val,
        l: lip,
        t_star,
        radius,
        passed: h < 1.0 && t_star <= radius,
    }
}

/// Geometric schedule from `eta_high` down to `eta_low` with ratio `ratio`, ending exactly
/// at `eta_low` (which may be 0).
pub fn geometric_schedule(eta_high: f64, eta_low: f64, ratio: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let floor = if eta_low > 0.0 { eta_low } else { 1e-12 * eta_high };
    let mut eta = eta_high;
    while eta > floor {
        out.push(eta);
        eta *= ratio;
    }
    out.push(eta_low);
    out
}

/// Solves along `z = E + iη` for the decreasing schedule, each solution seeding the next.
///
/// Steps coarser than `cfg.eta_ratio` are refined internally, failing steps are halved,
/// and a final `η = 0` entry is a real Newton polish of the η → 0 limit. One solution is
/// returned per schedule entry.
pub fn solve_path(
    mu_a: &SpectralMeasure,
    mu_b: &SpectralMeasure,
    e: f64,
    eta_schedule: &[f64],
    cfg: &SolverConfig,
) -> Result<Vec<SubordinationSolution>> {
    validate_schedule(eta_schedule)?;
    let mut out = Vec::with_capacity(eta_schedule.len());
    let high = cfg.eta_high_for(mu_a, mu_b).max(eta_schedule[0]);
    let mut prev = solve_at(mu_a, mu_b, Complex64::new(e, high), None, cfg)?;
    for &target in eta_schedule {
        prev = advance(mu_a, mu_b, e, prev, target, cfg)?;
        out.push(prev);
    }
    Ok(out)
}

fn validate_schedule(s: &[f64]) -> Result<()> {
    if s.is_empty() {
        return Err(Error::InvalidSchedule("empty"));
    }
    for (i, &eta) in s.iter().enumerate() {
        let last = i + 1 == s.len();
        if !eta.is_finite() || eta < 0.0 || (eta == 0.0 && !last) {
            return Err(Error::InvalidSchedule("heights must be positive, only the last may be 0"));
        }
        if i > 0 && !(eta < s[i - 1]) {
            return Err(Error::InvalidSchedule("heights must strictly decrease"));
        }
    }
    Ok(())
}

// Moves a converged solution at height `prev.z.im` down to `target`.
fn advance(
    mu_a: &SpectralMeasure,
    mu_b: &SpectralMeasure,
    e: f64,
    mut prev: SubordinationSolution,
    target: f64,
    cfg: &SolverConfig,
) -> Result<SubordinationSolution> {
    let floor = if target > 0.0 { target } else { 1e-10 * e.abs().max(1e-3) };
    let mut eta = prev.z.im;
    let mut ratio = cfg.eta_ratio;
    let mut halvings = 0;
    while eta > floor {
        let next = (eta * ratio).max(floor);
        match step(mu_a, mu_b, &prev, Complex64::new(e, next), cfg) {
            Ok(sol) => {
                prev = sol;
                eta = next;
                halvings = 0;
                ratio = (ratio * ratio).max(cfg.eta_ratio);
            }
            Err(err) => {
                halvings += 1;
                if halvings > cfg.max_halvings {
                    return Err(err);
                }
                ratio = ratio.sqrt();
            }
        }
    }
    if target == 0.0 {
        let z = Complex64::new(e, 0.0);
        let guess = (
            Complex64::new(prev.omega_a.re, 0.0),
            Complex64::new(prev.omega_b.re, 0.0),
        );
        let sol = solve_at(mu_a, mu_b, z, Some(guess), cfg)?;
        check_jump(&prev, &sol, cfg)?;
        prev = sol;
    } else if prev.z.im != target {
        prev = step(mu_a, mu_b, &prev, Complex64::new(e, target), cfg)?;
    }
    Ok(prev)
}

fn step(
    mu_a: &SpectralMeasure,
    mu_b: &SpectralMeasure,
    prev: &SubordinationSolution,
    z: Complex64,
    cfg: &SolverConfig,
) -> Result<SubordinationSolution> {
    let scale = z / prev.z;
    let guess = (prev.omega_a * scale, prev.omega_b * scale);
    let sol = solve_at(mu_a, mu_b, z, Some(guess), cfg)?;
    check_jump(prev, &sol, cfg)?;
    Ok(sol)
}

fn check_jump(
    prev: &SubordinationSolution,
    sol: &SubordinationSolution,
    cfg: &SolverConfig,
) -> Result<()> {
    let rel = |a: Complex64, b: Complex64| (a - b).norm() / a.norm().max(1.0);
    let jump = rel(prev.omega_a, sol.omega_a).max(rel(prev.omega_b, sol.omega_b));
    if jump > cfg.continuation_jump {
        return Err(Error::BranchJump {
            eta_from: prev.z.im,
            eta_to: sol.z.im,
            jump,
        });
    }
    Ok(())
}

/// Stability function, its second-order companions and the derivatives of `Ω_A`, `Ω_B`.
pub fn stability(
    mu_a: &SpectralMeasure,
    mu_b: &SpectralMeasure,
    sol: &SubordinationSolution,
) -> Result<StabilityReport> {
    let z = sol.z;
    let ta = mu_a.transforms(sol.omega_b)?;
    let tb = mu_b.transforms(sol.omega_a)?;
    let s_ab = z * z * tb.l1 * ta.l1 - 1.0;
    let t_a = 0.5 * (z * tb.l2 * ta.l1 + (z * tb.l1) * (z * tb.l1) * ta.l2);
    let t_b = 0.5 * (z * ta.l2 * tb.l1 + (z * ta.l1) * (z * ta.l1) * tb.l2);
    if s_ab.norm() < 1e-13 {
        return Err(Error::StabilityDegenerate { modulus: s_ab.norm() });
    }
    let a = z * ta.l1;
    let b = z * tb.l1;
    let omega_a_prime = -(sol.omega_a + a * sol.omega_b) / (z * s_ab);
    let omega_b_prime = -(sol.omega_b + b * sol.omega_a) / (z * s_ab);
    Ok(StabilityReport { s_ab, t_a, t_b, omega_a_prime, omega_b_prime })
}

/// `S_AB` without the degeneracy check, for use at edges.
pub fn stability_function(
    mu_a: &SpectralMeasure,
    mu_b: &SpectralMeasure,
    z: Complex64,
    omega_a: Complex64,
    omega_b: Complex64,
) -> Result<Complex64> {
    let la1 = mu_a.transforms(omega_b)?.l1;
    let lb1 = mu_b.transforms(omega_a)?.l1;
    Ok(z * z * lb1 * la1 - 1.0)
}
