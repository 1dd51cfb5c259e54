//! Mutual-coupling-aware optimization of diagonal reactive RIS loads.
//!
//! The optimizer maximizes the end-to-end channel gain over purely
//! reactive loads `Z_S = diag(jX_n)`, `X_n ∈ [x_min, x_max]`, with the
//! channel evaluated either on the coupled model (full `Z_SS`) or on the
//! coupling-unaware baseline (its diagonal). The algorithm is projected
//! cyclic coordinate ascent with a golden-section line search per
//! coordinate and three deterministic starts: resonant loads, the
//! open-circuit corner, and the coupling-unaware solution. Accepted
//! iterates never decrease the objective; ties break toward smaller |X|.
//!
//! A truncated Neumann series is available as a cheap approximate
//! evaluation of the load-dependent inverse.

use crate::metasurface::ImpedanceBlocks;
use crate::multiport::{channel_impedance, solve};
use crate::{CMat, EmError, Result};
use num_complex::Complex64;

/// Channel-gain objective. Both variants are the squared Frobenius norm
/// of H; the SISO tag documents intent for single-port links.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    /// `‖H‖²_F` over all Rx/Tx port pairs.
    SumGain,
    /// `|h|²` for a 1x1 channel.
    SisoGain,
}

/// Which mutual-coupling model the channel evaluation uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelFidelity {
    /// Full `Z_SS` (off-diagonal coupling included).
    Coupled,
    /// Diagonal of `Z_SS` only (coupling ignored).
    Uncoupled,
}

/// A load-optimization problem over one set of impedance blocks.
#[derive(Debug, Clone)]
pub struct OptimizationProblem {
    pub blocks: ImpedanceBlocks,
    pub z0: f64,
    pub objective: Objective,
    /// Reactance box `[x_min, x_max]` (ohms).
    pub x_min: f64,
    pub x_max: f64,
    pub model: ModelFidelity,
    /// Evaluate the load-dependent inverse with a truncated Neumann
    /// series of this order instead of an exact solve.
    pub neumann_order: Option<usize>,
}

impl OptimizationProblem {
    /// Default reactance box `[-20 Z0, 20 Z0]` around the blocks.
    pub fn new(blocks: ImpedanceBlocks, z0: f64, objective: Objective) -> Self {
        OptimizationProblem {
            blocks,
            z0,
            objective,
            x_min: -20.0 * z0,
            x_max: 20.0 * z0,
            model: ModelFidelity::Coupled,
            neumann_order: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x_min < self.x_max) || !self.x_min.is_finite() || !self.x_max.is_finite() {
            return Err(EmError::invalid("need finite x_min < x_max"));
        }
        Ok(())
    }
}

/// Optimization outcome: reactances, achieved objective, and the
/// monotone trace of accepted objective values.
#[derive(Debug, Clone)]
pub struct OptimizationResult {
    pub reactances: Vec<f64>,
    pub objective: f64,
    pub trace: Vec<f64>,
    pub evaluations: usize,
}

/// Truncated Neumann-series inverse `(A + Δ)⁻¹ ≈ Σ_{i≤k} (-A⁻¹Δ)^i A⁻¹`.
#[derive(Debug, Clone)]
pub struct NeumannInverse {
    pub inv: CMat,
    /// Power-iteration estimate of the spectral radius of `A⁻¹Δ`.
    pub spectral_radius: f64,
    /// Set when the series cannot converge (`ρ ≥ 1`).
    pub diverging: bool,
}

/// Order-`k` Neumann approximation of `(A + Δ)⁻¹`. Order 0 returns
/// `A⁻¹`; the error decreases geometrically with `k` while the spectral
/// radius of `A⁻¹Δ` stays below one.
pub fn neumann_inverse(a: &CMat, delta: &CMat, k: usize) -> Result<NeumannInverse> {
    let n = a.nrows();
    if a.ncols() != n || delta.nrows() != n || delta.ncols() != n {
        return Err(EmError::invalid("A and Delta must be square and conformant"));
    }
    let a_inv = solve(a, &CMat::identity(n, n), "Neumann base matrix A")?;
    let t = -(&a_inv) * delta; // iteration matrix
    let rho = spectral_radius_estimate(&t);
    let mut term = a_inv.clone();
    let mut sum = a_inv.clone();
    for _ in 0..k {
        term = &t * term;
        sum += &term;
    }
    Ok(NeumannInverse { inv: sum, spectral_radius: rho, diverging: rho >= 1.0 })
}

fn spectral_radius_estimate(t: &CMat) -> f64 {
    let n = t.nrows();
    if n == 0 {
        return 0.0;
    }
    // Deterministic power iteration.
    let mut v = crate::CVec::from_fn(n, |i, _| {
        Complex64::new(1.0 + (i as f64) * 0.1, 0.3 - (i as f64) * 0.07)
    });
    v /= Complex64::new(v.norm(), 0.0);
    let mut lambda = 0.0;
    for _ in 0..50 {
        let w = t * &v;
        let norm = w.norm();
        if norm < 1e-300 {
            return 0.0;
        }
        lambda = norm;
        v = w / Complex64::new(norm, 0.0);
    }
    lambda
}

/// Squared Frobenius norm of a channel matrix; zero iff H = 0.
pub fn gain(h: &CMat) -> f64 {
    h.iter().map(|z| z.norm_sqr()).sum()
}

fn model_blocks(problem: &OptimizationProblem) -> ImpedanceBlocks {
    match problem.model {
        ModelFidelity::Coupled => problem.blocks.clone(),
        ModelFidelity::Uncoupled => {
            let mut b = problem.blocks.clone();
            let n = b.z_ss.nrows();
            b.z_ss = CMat::from_fn(n, n, |i, j| {
                if i == j { problem.blocks.z_ss[(i, i)] } else { Complex64::default() }
            });
            b
        }
    }
}

fn diag_loads(x: &[f64]) -> CMat {
    let n = x.len();
    CMat::from_fn(n, n, |i, j| {
        if i == j { Complex64::new(0.0, x[i]) } else { Complex64::default() }
    })
}

/// Exact or Neumann-approximated objective at a reactance vector.
/// Returns `None` when the subsystem is singular (step rejected).
fn evaluate(blocks: &ImpedanceBlocks, problem: &OptimizationProblem, x: &[f64]) -> Option<f64> {
    let z_s = diag_loads(x);
    let h = match problem.neumann_order {
        None => channel_impedance(blocks, &z_s, problem.z0).ok()?.h,
        Some(k) => {
            let a = {
                let n = z_s.nrows();
                CMat::from_fn(n, n, |i, j| {
                    if i == j { blocks.z_ss[(i, i)] + z_s[(i, i)] } else { Complex64::default() }
                })
            };
            let delta = {
                let n = z_s.nrows();
                CMat::from_fn(n, n, |i, j| {
                    if i == j { Complex64::default() } else { blocks.z_ss[(i, j)] }
                })
            };
            let nm = neumann_inverse(&a, &delta, k).ok()?;
            let scale = Complex64::new(1.0 / (2.0 * problem.z0), 0.0);
            (&blocks.z_rt - &blocks.z_rs * &nm.inv * &blocks.z_st) * scale
        }
    };
    let g = gain(&h);
    g.is_finite().then_some(g)
}

/// Objective value of a given reactance vector under the problem's
/// model fidelity — the hook for cross-model comparisons (e.g. scoring
/// a coupling-unaware solution on the coupled model).
pub fn evaluate_loads(problem: &OptimizationProblem, x: &[f64]) -> Result<f64> {
    if x.len() != problem.blocks.n_ris() {
        return Err(EmError::invalid("reactance vector does not match the RIS port count"));
    }
    let blocks = model_blocks(problem);
    evaluate(&blocks, problem, x)
        .ok_or_else(|| EmError::invalid("channel evaluation failed at the given loads"))
}

const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Golden-section maximization of a 1-D slice; returns (x, value).
fn line_search(
    mut f: impl FnMut(f64) -> Option<f64>,
    lo: f64,
    hi: f64,
    iters: usize,
) -> Option<(f64, f64)> {
    let mut a = lo;
    let mut b = hi;
    let mut x1 = b - GOLDEN * (b - a);
    let mut x2 = a + GOLDEN * (b - a);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    for _ in 0..iters {
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - GOLDEN * (b - a);
            f1 = f(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + GOLDEN * (b - a);
            f2 = f(x2)?;
        }
    }
    // Tie toward smaller |X|.
    if f1 > f2 || (f1 == f2 && x1.abs() <= x2.abs()) {
        Some((x1, f1))
    } else {
        Some((x2, f2))
    }
}

/// Projected cyclic coordinate ascent from one starting point.
fn ascend(
    blocks: &ImpedanceBlocks,
    problem: &OptimizationProblem,
    start: Vec<f64>,
    budget: &mut usize,
    trace: &mut Vec<f64>,
) -> Option<(Vec<f64>, f64)> {
    let mut x = start;
    let mut evals_left = *budget;
    let mut best = {
        if evals_left == 0 {
            return None;
        }
        evals_left -= 1;
        evaluate(blocks, problem, &x)?
    };
    trace.push(best);
    let n = x.len();
    let line_iters = 36; // box shrinks by ~1e-8 of its width
    'sweeps: loop {
        let mut improved = false;
        for i in 0..n {
            let per_coord = line_iters + 2;
            if evals_left < per_coord {
                break 'sweeps;
            }
            let mut used = 0usize;
            let result = line_search(
                |xi| {
                    used += 1;
                    let mut trial = x.clone();
                    trial[i] = xi;
                    evaluate(blocks, problem, &trial)
                },
                problem.x_min,
                problem.x_max,
                line_iters,
            );
            evals_left = evals_left.saturating_sub(used);
            if let Some((xi, val)) = result {
                let accept = val > best * (1.0 + 1e-12)
                    || (val >= best && xi.abs() < x[i].abs());
                if val > best * (1.0 + 1e-9) {
                    improved = true;
                }
                if accept {
                    x[i] = xi;
                    best = val;
                    trace.push(best);
                }
            }
        }
        if !improved {
            break;
        }
    }
    *budget = evals_left;
    Some((x, best))
}

/// Optimize the diagonal reactive loads of the RIS.
///
/// Three deterministic starts (resonant loads, open-circuit corner, and
/// the coupling-unaware solution) are ascended within the shared
/// evaluation budget; the best outcome wins, earlier start on ties.
pub fn optimize_loads(problem: &OptimizationProblem, budget: usize) -> Result<OptimizationResult> {
    problem.validate()?;
    if budget == 0 {
        return Err(EmError::invalid("evaluation budget must be at least 1"));
    }
    let n = problem.blocks.n_ris();
    if n == 0 {
        return Err(EmError::invalid("no RIS ports to optimize"));
    }
    let clamp = |x: f64| x.clamp(problem.x_min, problem.x_max);
    let resonant: Vec<f64> =
        (0..n).map(|i| clamp(-problem.blocks.z_ss[(i, i)].im)).collect();
    let open_corner = vec![problem.x_max; n];

    // Coupling-unaware solution, ascended on the diagonal model, then
    // used as a third start (and as the baseline the coupled run cannot
    // undercut, since it sits in the feasible set).
    let unaware_problem = OptimizationProblem {
        model: ModelFidelity::Uncoupled,
        neumann_order: None,
        ..problem.clone()
    };
    let unaware_blocks = model_blocks(&unaware_problem);
    let mut unaware_budget = budget;
    let mut unaware_trace = Vec::new();
    let unaware = ascend(
        &unaware_blocks,
        &unaware_problem,
        resonant.clone(),
        &mut unaware_budget,
        &mut unaware_trace,
    )
    .map(|(x, _)| x)
    .unwrap_or_else(|| resonant.clone());

    let blocks = model_blocks(problem);
    let mut remaining = budget;
    let mut evaluations = 0usize;
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut trace = Vec::new();
    for start in [resonant, open_corner, unaware] {
        let before = remaining;
        let mut local_trace = Vec::new();
        let outcome = ascend(&blocks, problem, start, &mut remaining, &mut local_trace);
        evaluations += before - remaining;
        if let Some((x, val)) = outcome {
            let better = match &best {
                None => true,
                Some((_, b)) => val > *b,
            };
            if better {
                best = Some((x, val));
                trace = local_trace;
            }
        }
        if remaining == 0 {
            break;
        }
    }
    let (reactances, objective) =
        best.ok_or_else(|| EmError::invalid("budget exhausted before any evaluation"))?;
    Ok(OptimizationResult { reactances, objective, trace, evaluations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn neumann_zero_perturbation_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 4;
        let a = CMat::from_fn(n, n, |i, j| {
            if i == j {
                c(rng.gen_range(2.0..4.0), rng.gen_range(-1.0..1.0))
            } else {
                c(rng.gen_range(-0.2..0.2), 0.0)
            }
        });
        let delta = CMat::zeros(n, n);
        for k in [0, 1, 5] {
            let nm = neumann_inverse(&a, &delta, k).unwrap();
            let check = &a * &nm.inv;
            assert!(crate::max_rel_diff(&check, &CMat::identity(n, n)) <= 1e-12);
        }
    }

    #[test]
    fn neumann_scalar_geometric_series() {
        let a = CMat::from_element(1, 1, c(1.0, 0.0));
        let delta = CMat::from_element(1, 1, c(0.5, 0.0));
        let nm = neumann_inverse(&a, &delta, 3).unwrap();
        // 1 - 0.5 + 0.25 - 0.125 = 0.625 vs exact 2/3.
        assert_relative_eq!(nm.inv[(0, 0)].re, 0.625, max_relative = 1e-14);
        let err = (nm.inv[(0, 0)].re - 2.0 / 3.0).abs();
        assert_relative_eq!(err, 1.0 / 24.0, max_relative = 1e-10);
        assert!(!nm.diverging);
        assert_relative_eq!(nm.spectral_radius, 0.5, max_relative = 1e-6);
    }

    #[test]
    fn neumann_error_decays_geometrically() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 6;
        let a = CMat::identity(n, n) * c(3.0, 1.0);
        let mut delta = CMat::from_fn(n, n, |_, _| {
            c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        // Scale Δ so the iteration matrix has spectral radius 0.3.
        let rho0 = neumann_inverse(&a, &delta, 0).unwrap().spectral_radius;
        delta *= c(0.3 / rho0, 0.0);
        let exact = (&a + &delta).lu().try_inverse().unwrap();
        let mut prev_err = f64::INFINITY;
        for k in 1..=5 {
            let nm = neumann_inverse(&a, &delta, k).unwrap();
            let err = crate::max_rel_diff(&exact, &nm.inv);
            let ratio = err / prev_err;
            if k > 1 {
                assert!((0.2..=0.4).contains(&ratio), "k={k}: ratio {ratio}");
            }
            prev_err = err;
        }
    }

    #[test]
    fn neumann_divergence_flagged() {
        let a = CMat::identity(2, 2) * c(1.0, 0.0);
        let delta = CMat::identity(2, 2) * c(2.0, 0.0);
        let nm = neumann_inverse(&a, &delta, 2).unwrap();
        assert!(nm.diverging);
    }

    #[test]
    fn gain_values() {
        assert_eq!(gain(&CMat::zeros(2, 3)), 0.0);
        assert_eq!(gain(&CMat::identity(2, 2)), 2.0);
        assert_eq!(gain(&CMat::from_element(1, 1, c(3.0, 4.0))), 25.0);
    }

    fn siso_blocks(z_ss: Complex64) -> ImpedanceBlocks {
        ImpedanceBlocks {
            z_rt: CMat::zeros(1, 1),
            z_st: CMat::from_element(1, 1, c(12.0, -7.0)),
            z_rs: CMat::from_element(1, 1, c(9.0, 4.0)),
            z_ss: CMat::from_element(1, 1, z_ss),
            z_ot: CMat::zeros(0, 1),
            z_so: CMat::zeros(1, 0),
            z_ro: CMat::zeros(1, 0),
            z_oo: CMat::zeros(0, 0),
            env_loads: vec![],
        }
    }

    #[test]
    fn single_element_closed_form_stationary_point() {
        // Blocked direct link: |h|² ∝ 1/|z_SS + jX|², maximized at
        // X* = -Im(z_SS).
        let z_ss = c(42.0, 35.0);
        let problem =
            OptimizationProblem::new(siso_blocks(z_ss), 50.0, Objective::SisoGain);
        let result = optimize_loads(&problem, 20_000).unwrap();
        let x_star = -z_ss.im;
        assert!(
            (result.reactances[0] - x_star).abs() <= 0.01 * x_star.abs(),
            "found {} vs closed form {x_star}",
            result.reactances[0]
        );
    }

    /// Synthetic blocks whose per-element path products are real and
    /// positive, making the uncoupled objective separable.
    fn aligned_blocks(n: usize) -> ImpedanceBlocks {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let z_rs = CMat::from_fn(1, n, |_, _| c(rng.gen_range(2.0..9.0), 0.0));
        let z_st = CMat::from_fn(n, 1, |_, _| c(rng.gen_range(2.0..9.0), 0.0));
        let z_ss = CMat::from_fn(n, n, |i, j| {
            if i == j {
                c(rng.gen_range(30.0..80.0), rng.gen_range(-60.0..60.0))
            } else {
                c(rng.gen_range(-8.0..8.0), rng.gen_range(-8.0..8.0))
            }
        });
        // Make the negative of each path term real: with resonant loads
        // the uncoupled channel is -Σ z_rs z_st / (2 Z0 R_n), so flip
        // signs to align all contributions.
        ImpedanceBlocks {
            z_rt: CMat::zeros(1, 1),
            z_st,
            z_rs,
            z_ss,
            z_ot: CMat::zeros(0, 1),
            z_so: CMat::zeros(n, 0),
            z_ro: CMat::zeros(1, 0),
            z_oo: CMat::zeros(0, 0),
            env_loads: vec![],
        }
    }

    #[test]
    fn uncoupled_model_resonates_each_element() {
        let n = 5;
        let blocks = aligned_blocks(n);
        let mut problem = OptimizationProblem::new(blocks.clone(), 50.0, Objective::SumGain);
        problem.model = ModelFidelity::Uncoupled;
        let result = optimize_loads(&problem, 50_000).unwrap();
        for i in 0..n {
            let x_star = -blocks.z_ss[(i, i)].im;
            assert!(
                (result.reactances[i] - x_star).abs() <= 0.02 * x_star.abs().max(10.0),
                "element {i}: {} vs {x_star}",
                result.reactances[i]
            );
        }
    }

    #[test]
    fn trace_is_monotone_and_loads_reactive() {
        let blocks = aligned_blocks(6);
        let problem = OptimizationProblem::new(blocks, 50.0, Objective::SumGain);
        let result = optimize_loads(&problem, 30_000).unwrap();
        for w in result.trace.windows(2) {
            assert!(w[1] >= w[0], "trace must be monotone");
        }
        // Loads are reactances by construction; the diagonal matrix
        // built from them has exactly zero real part.
        let z_s = diag_loads(&result.reactances);
        assert!(z_s.iter().all(|z| z.re == 0.0));
        assert!(result.evaluations <= 30_000);
    }

    #[test]
    fn coupled_aware_beats_unaware_on_coupled_model() {
        let blocks = aligned_blocks(8);
        let problem = OptimizationProblem::new(blocks.clone(), 50.0, Objective::SumGain);
        let coupled = optimize_loads(&problem, 60_000).unwrap();

        let mut unaware_problem = problem.clone();
        unaware_problem.model = ModelFidelity::Uncoupled;
        let unaware = optimize_loads(&unaware_problem, 60_000).unwrap();
        let unaware_on_coupled =
            evaluate(&blocks, &problem, &unaware.reactances).unwrap();
        assert!(
            coupled.objective >= unaware_on_coupled,
            "coupled-aware {} vs unaware-evaluated-coupled {unaware_on_coupled}",
            coupled.objective
        );
    }

    #[test]
    fn neumann_evaluation_converges_to_exact() {
        let blocks = aligned_blocks(5);
        // Shrink the off-diagonal coupling so the series converges.
        let mut weak = blocks.clone();
        for i in 0..5 {
            for j in 0..5 {
                if i != j {
                    weak.z_ss[(i, j)] *= c(0.3, 0.0);
                }
            }
        }
        let exact_problem = OptimizationProblem::new(weak.clone(), 50.0, Objective::SumGain);
        let x: Vec<f64> = (0..5).map(|i| -weak.z_ss[(i, i)].im * 0.8).collect();
        let exact = evaluate(&weak, &exact_problem, &x).unwrap();
        let mut prev = f64::INFINITY;
        for k in [0, 1, 2, 4, 8] {
            let mut p = exact_problem.clone();
            p.neumann_order = Some(k);
            let approx = evaluate(&weak, &p, &x).unwrap();
            let err = (approx - exact).abs() / exact;
            assert!(err <= prev * 1.001, "k={k}: err {err} prev {prev}");
            prev = err;
        }
        assert!(prev <= 1e-6, "order-8 Neumann error {prev}");
    }
}
