//! End-to-end channel assembly from impedance blocks.
//!
//! The same physical link is expressed three ways: the impedance form
//! `H_Z = (Z_RT - Z_RS (Z_SS + Z_S)⁻¹ Z_ST) / (2 Z0)`, the scattering
//! form `H_S = S_RT + S_RS (I - Γ_S S_emc)⁻¹ Γ_S S_ST`, and the
//! communication-theory baseline `H_CT = H_RT + H_RS Γ_H H_ST` which
//! drops mutual coupling and structural scattering. The first two are
//! algebraically equivalent; the third coincides with them only when
//! `S_emc = 0`. The impedance form as written already embodies the
//! unilateral approximation (no back-action on the transmitter); there is
//! no separate code path for it.

use crate::metasurface::ImpedanceBlocks;
use crate::{CMat, EmError, Result};
use num_complex::Complex64;

/// Condition-number threshold above which a subsystem is reported as
/// degenerate instead of silently solved.
pub const COND_LIMIT: f64 = 1e12;

/// Solve `A X = B` by LU with partial pivoting, reporting the condition
/// number when `A` is (near-)singular.
pub fn solve(a: &CMat, b: &CMat, context: &str) -> Result<CMat> {
    let lu = a.clone().lu();
    let inv = lu.try_inverse().ok_or_else(|| EmError::Singular {
        context: context.to_string(),
        cond: f64::INFINITY,
    })?;
    let norm1 = |m: &CMat| {
        (0..m.ncols())
            .map(|j| m.column(j).iter().map(|z| z.norm()).sum::<f64>())
            .fold(0.0f64, f64::max)
    };
    let cond = norm1(a) * norm1(&inv);
    if cond >= COND_LIMIT {
        return Err(EmError::Singular { context: context.to_string(), cond });
    }
    Ok(&inv * b)
}

/// Which formulation produced a channel matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Formulation {
    Impedance,
    Scattering,
    CommTheory,
}

impl std::fmt::Display for Formulation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Formulation::Impedance => write!(f, "impedance"),
            Formulation::Scattering => write!(f, "scattering"),
            Formulation::CommTheory => write!(f, "comm-theory"),
        }
    }
}

/// An end-to-end channel matrix (Rx-ports x Tx-ports) with its
/// formulation tag and a human-readable provenance note.
#[derive(Debug, Clone)]
pub struct ChannelModel {
    pub h: CMat,
    pub formulation: Formulation,
    pub provenance: String,
}

/// Impedance-form channel.
///
/// With no RIS ports this reduces to `Z_RT / (2 Z0)`.
pub fn channel_impedance(
    blocks: &ImpedanceBlocks,
    z_s: &CMat,
    z0: f64,
) -> Result<ChannelModel> {
    let ns = blocks.n_ris();
    if z_s.nrows() != ns || z_s.ncols() != ns {
        return Err(EmError::invalid("Z_S shape does not match the RIS port count"));
    }
    let scale = Complex64::new(1.0 / (2.0 * z0), 0.0);
    let h = if ns == 0 {
        &blocks.z_rt * scale
    } else {
        let inner = solve(&(&blocks.z_ss + z_s), &blocks.z_st, "Z_emc + Z_S")?;
        (&blocks.z_rt - &blocks.z_rs * inner) * scale
    };
    Ok(ChannelModel {
        h,
        formulation: Formulation::Impedance,
        provenance: format!(
            "impedance blocks ({} Tx, {} RIS, {} Rx ports), Z0 = {z0} ohm",
            blocks.n_tx(),
            ns,
            blocks.n_rx()
        ),
    })
}

/// Scattering blocks derived from the impedance blocks.
#[derive(Debug, Clone)]
pub struct ScatteringBlocks {
    pub s_rt: CMat,
    pub s_rs: CMat,
    pub s_st: CMat,
    pub s_emc: CMat,
}

/// Convert impedance blocks to scattering blocks.
///
/// `S_RS` is computed from its definition and cross-checked against the
/// algebraic simplification `S_RS = Z_RS (Z_SS + Z0 I)⁻¹`; `S_emc` is
/// the reflection matrix of the self/mutual impedances.
pub fn z_to_s(blocks: &ImpedanceBlocks, z0: f64) -> Result<ScatteringBlocks> {
    let ns = blocks.n_ris();
    let z0c = Complex64::new(z0, 0.0);
    let eye = CMat::identity(ns, ns);
    let zp = &blocks.z_ss + &eye * z0c;
    let zm = &blocks.z_ss - &eye * z0c;
    let s_emc = solve(&zp, &zm, "Z_SS + Z0 I")?;
    let s_st = solve(&zp, &blocks.z_st, "Z_SS + Z0 I")?;
    let scale = Complex64::new(1.0 / (2.0 * z0), 0.0);
    let s_rs = &blocks.z_rs * scale * (&eye - &s_emc);
    debug_assert!(
        {
            let simplified = (solve(&zp.transpose(), &blocks.z_rs.transpose(), "Z_SS + Z0 I")?)
                .transpose();
            crate::max_rel_diff(&s_rs, &simplified) <= 1e-10
        },
        "S_RS simplification mismatch"
    );
    let s_rt = &blocks.z_rt * scale - &blocks.z_rs * scale * solve(&zp, &blocks.z_st, "Z_SS + Z0 I")?;
    Ok(ScatteringBlocks { s_rt, s_rs, s_st, s_emc })
}

/// Scattering-form channel. `Γ_S = 0` returns `S_RT` alone.
pub fn channel_scattering(s: &ScatteringBlocks, gamma_s: &CMat) -> Result<ChannelModel> {
    let ns = s.s_emc.nrows();
    if gamma_s.nrows() != ns || gamma_s.ncols() != ns {
        return Err(EmError::invalid("Gamma_S shape does not match the RIS port count"));
    }
    let eye = CMat::identity(ns, ns);
    let h = if ns == 0 {
        s.s_rt.clone()
    } else {
        let inner = solve(
            &(&eye - gamma_s * &s.s_emc),
            &(gamma_s * &s.s_st),
            "I - Gamma_S S_emc (coupling resonance)",
        )?;
        &s.s_rt + &s.s_rs * inner
    };
    Ok(ChannelModel {
        h,
        formulation: Formulation::Scattering,
        provenance: format!("scattering blocks ({ns} RIS ports)"),
    })
}

/// Communication-theory baseline `H_CT = H_RT + H_RS Γ_H H_ST`.
///
/// The usual comparison protocol feeds the scenario's S-blocks in as the
/// H-blocks; the provenance records what was supplied.
pub fn channel_ct(
    h_rt: &CMat,
    h_rs: &CMat,
    h_st: &CMat,
    gamma_h: &CMat,
    provenance: impl Into<String>,
) -> Result<ChannelModel> {
    if h_rs.ncols() != gamma_h.nrows() || gamma_h.ncols() != h_st.nrows() {
        return Err(EmError::invalid("H_CT block shapes do not conform"));
    }
    Ok(ChannelModel {
        h: h_rt + h_rs * gamma_h * h_st,
        formulation: Formulation::CommTheory,
        provenance: provenance.into(),
    })
}

/// Structural scattering `S_StSc = -(Z_RS/(2Z0)) (Z_SS + Z0 I)⁻¹ Z_ST`:
/// the wave the surface re-radiates even at zero reflection coefficient.
///
/// Equals `H_S(Γ_S = 0) - Z_RT/(2Z0)`.
pub fn structural_scattering(blocks: &ImpedanceBlocks, z0: f64) -> Result<CMat> {
    let ns = blocks.n_ris();
    let zp = &blocks.z_ss + CMat::identity(ns, ns) * Complex64::new(z0, 0.0);
    let inner = solve(&zp, &blocks.z_st, "Z_SS + Z0 I")?;
    Ok(-(&blocks.z_rs) * inner * Complex64::new(1.0 / (2.0 * z0), 0.0))
}

/// Channel with environment scatterers folded in, plus the effective
/// correction `Z_SOS` to the RIS self/mutual block.
#[derive(Debug, Clone)]
pub struct EnvironmentChannel {
    pub channel: ChannelModel,
    /// Correction added to `Z_SS` by the eliminated environment ports;
    /// zero when the environment is empty or infinitely far away.
    pub z_sos: CMat,
    /// The eliminated (effective) blocks over {T, S, R}.
    pub effective: ImpedanceBlocks,
}

/// Eliminate the environment ports by a Schur complement onto {T, S, R}
/// and assemble the impedance-form channel from the effective blocks.
///
/// Environment loads (material loads) terminate the O ports. With an
/// empty environment this is identical to [`channel_impedance`].
pub fn assemble_with_environment(
    blocks: &ImpedanceBlocks,
    z_s: &CMat,
    z0: f64,
) -> Result<EnvironmentChannel> {
    let no = blocks.n_env();
    let ns = blocks.n_ris();
    if no == 0 {
        let channel = channel_impedance(blocks, z_s, z0)?;
        return Ok(EnvironmentChannel {
            channel,
            z_sos: CMat::zeros(ns, ns),
            effective: blocks.clone(),
        });
    }
    if blocks.env_loads.len() != no {
        return Err(EmError::invalid("environment load count mismatch"));
    }
    let mut m = blocks.z_oo.clone();
    for (i, load) in blocks.env_loads.iter().enumerate() {
        m[(i, i)] += load;
    }
    // O-port reciprocity gives the transposed blocks for free.
    let z_os = blocks.z_so.transpose();
    let z_or = blocks.z_ro.transpose();
    let minv_ot = solve(&m, &blocks.z_ot, "Z_OO + env loads")?;
    let minv_os = solve(&m, &z_os, "Z_OO + env loads")?;
    let minv_or = solve(&m, &z_or, "Z_OO + env loads")?;

    let z_sos = -(&blocks.z_so) * &minv_os;
    let effective = ImpedanceBlocks {
        z_rt: &blocks.z_rt - &blocks.z_ro * &minv_ot,
        z_st: &blocks.z_st - &blocks.z_so * &minv_ot,
        z_rs: &blocks.z_rs - &blocks.z_ro * &minv_os,
        z_ss: &blocks.z_ss + &z_sos,
        z_ot: CMat::zeros(0, blocks.n_tx()),
        z_so: CMat::zeros(ns, 0),
        z_ro: CMat::zeros(blocks.n_rx(), 0),
        z_oo: CMat::zeros(0, 0),
        env_loads: vec![],
    };
    let _ = minv_or; // kept for symmetry; z_rs elimination used minv_os
    let mut channel = channel_impedance(&effective, z_s, z0)?;
    channel.provenance = format!(
        "{} (after Schur elimination of {no} environment ports)",
        channel.provenance
    );
    Ok(EnvironmentChannel { channel, z_sos, effective })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::max_rel_diff;
    
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Random reciprocal (symmetric) impedance blocks with passive
    /// diagonals over nt + ns + nr (+ no) ports.
    pub(crate) fn random_blocks(
        rng: &mut ChaCha8Rng,
        nt: usize,
        ns: usize,
        nr: usize,
        no: usize,
    ) -> ImpedanceBlocks {
        let n = nt + ns + nr + no;
        let mut full = CMat::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let z = Complex64::new(rng.gen_range(-30.0..30.0), rng.gen_range(-30.0..30.0));
                full[(i, j)] = z;
                full[(j, i)] = z;
            }
        }
        for i in 0..n {
            full[(i, i)] = Complex64::new(rng.gen_range(30.0..90.0), rng.gen_range(-40.0..40.0));
        }
        let t = 0..nt;
        let s = nt..nt + ns;
        let r = nt + ns..nt + ns + nr;
        let o = nt + ns + nr..n;
        let sub = |rows: &std::ops::Range<usize>, cols: &std::ops::Range<usize>| {
            CMat::from_fn(rows.len(), cols.len(), |i, j| {
                full[(rows.start + i, cols.start + j)]
            })
        };
        let env_loads = (0..no)
            .map(|_| Complex64::new(rng.gen_range(0.0..5.0), rng.gen_range(-50.0..50.0)))
            .collect();
        ImpedanceBlocks {
            z_rt: sub(&r, &t),
            z_st: sub(&s, &t),
            z_rs: sub(&r, &s),
            z_ss: sub(&s, &s),
            z_ot: sub(&o, &t),
            z_so: sub(&s, &o),
            z_ro: sub(&r, &o),
            z_oo: sub(&o, &o),
            env_loads,
        }
    }

    pub(crate) fn reactive_loads(rng: &mut ChaCha8Rng, ns: usize) -> CMat {
        CMat::from_fn(ns, ns, |i, j| {
            if i == j {
                Complex64::new(0.0, rng.gen_range(-200.0..200.0))
            } else {
                Complex64::default()
            }
        })
    }

    #[test]
    fn no_ris_path_reduces_to_direct_link() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut blocks = random_blocks(&mut rng, 2, 3, 2, 0);
        let z0 = 50.0;
        blocks.z_rs.fill(Complex64::default());
        let zs = reactive_loads(&mut rng, 3);
        let h = channel_impedance(&blocks, &zs, z0).unwrap();
        let direct = &blocks.z_rt * Complex64::new(1.0 / (2.0 * z0), 0.0);
        assert!(max_rel_diff(&h.h, &direct) <= 1e-14);
    }

    #[test]
    fn siso_scalar_channel() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut blocks = random_blocks(&mut rng, 1, 1, 1, 0);
        blocks.z_rt[(0, 0)] = Complex64::default();
        let z0 = 50.0;
        let x = 17.0;
        let zs = CMat::from_element(1, 1, Complex64::new(0.0, x));
        let h = channel_impedance(&blocks, &zs, z0).unwrap();
        let expect = -blocks.z_rs[(0, 0)] * blocks.z_st[(0, 0)]
            / (2.0 * z0 * (blocks.z_ss[(0, 0)] + Complex64::new(0.0, x)));
        assert!((h.h[(0, 0)] - expect).norm() <= 1e-14 * expect.norm());
    }

    #[test]
    fn scattering_blocks_matched_self_impedance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut blocks = random_blocks(&mut rng, 2, 3, 2, 0);
        let z0 = 50.0;
        blocks.z_ss = CMat::identity(3, 3) * Complex64::new(z0, 0.0);
        let s = z_to_s(&blocks, z0).unwrap();
        assert!(s.s_emc.iter().all(|z| z.norm() <= 1e-12));
        let scale = Complex64::new(1.0 / (2.0 * z0), 0.0);
        assert!(max_rel_diff(&s.s_st, &(&blocks.z_st * scale)) <= 1e-12);
        assert!(max_rel_diff(&s.s_rs, &(&blocks.z_rs * scale)) <= 1e-12);
    }

    #[test]
    fn scalar_reactive_self_impedance_reflection() {
        let z0 = 50.0;
        let mut blocks = random_blocks(&mut ChaCha8Rng::seed_from_u64(4), 1, 1, 1, 0);
        blocks.z_ss[(0, 0)] = Complex64::new(0.0, z0);
        let s = z_to_s(&blocks, z0).unwrap();
        assert!((s.s_emc[(0, 0)] - Complex64::i()).norm() <= 1e-14);
    }

    #[test]
    fn scattering_block_definitions_re_evaluated() {
        // Straight-line re-evaluation of the four relations.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let blocks = random_blocks(&mut rng, 3, 4, 2, 0);
        let z0 = 50.0;
        let s = z_to_s(&blocks, z0).unwrap();
        let eye = CMat::identity(4, 4);
        let zp = &blocks.z_ss + &eye * Complex64::new(z0, 0.0);
        let zp_inv = zp.clone().lu().try_inverse().unwrap();
        let scale = Complex64::new(1.0 / (2.0 * z0), 0.0);
        let s_rt = &blocks.z_rt * scale - &blocks.z_rs * scale * &zp_inv * &blocks.z_st;
        assert!(max_rel_diff(&s.s_rt, &s_rt) <= 1e-11);
        let s_rs = &blocks.z_rs * &zp_inv;
        assert!(max_rel_diff(&s.s_rs, &s_rs) <= 1e-11);
    }

    #[test]
    fn gamma_zero_returns_s_rt() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let blocks = random_blocks(&mut rng, 2, 4, 3, 0);
        let s = z_to_s(&blocks, 50.0).unwrap();
        let h = channel_scattering(&s, &CMat::zeros(4, 4)).unwrap();
        assert!(max_rel_diff(&h.h, &s.s_rt) <= 1e-14);
    }

    #[test]
    fn impedance_and_scattering_forms_agree() {
        let z0 = 50.0;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for (nt, ns, nr) in [(1, 1, 1), (2, 4, 2), (4, 16, 4), (3, 8, 1)] {
            let blocks = random_blocks(&mut rng, nt, ns, nr, 0);
            let zs = reactive_loads(&mut rng, ns);
            let hz = channel_impedance(&blocks, &zs, z0).unwrap();
            let s = z_to_s(&blocks, z0).unwrap();
            let gamma = crate::metasurface::gamma_from_loads(&zs, z0).unwrap();
            let hs = channel_scattering(&s, &gamma).unwrap();
            let err = max_rel_diff(&hz.h, &hs.h);
            assert!(err <= 1e-10, "({nt},{ns},{nr}): rel err {err:.3e}");
        }
    }

    #[test]
    fn ct_equals_consistent_models_iff_matched() {
        let z0 = 50.0;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut blocks = random_blocks(&mut rng, 2, 3, 2, 0);
        let zs = reactive_loads(&mut rng, 3);
        let gamma = crate::metasurface::gamma_from_loads(&zs, z0).unwrap();

        // Coupled scenario: H_CT (fed with the S-blocks) differs from H_S.
        let s = z_to_s(&blocks, z0).unwrap();
        let hs = channel_scattering(&s, &gamma).unwrap();
        let hct = channel_ct(&s.s_rt, &s.s_rs, &s.s_st, &gamma, "S-blocks").unwrap();
        assert!(max_rel_diff(&hs.h, &hct.h) > 1e-6);

        // Matched self-impedances: S_emc = 0 and the models coincide.
        blocks.z_ss = CMat::identity(3, 3) * Complex64::new(z0, 0.0);
        let s = z_to_s(&blocks, z0).unwrap();
        let hs = channel_scattering(&s, &gamma).unwrap();
        let hct = channel_ct(&s.s_rt, &s.s_rs, &s.s_st, &gamma, "S-blocks").unwrap();
        assert!(max_rel_diff(&hs.h, &hct.h) <= 1e-12);
    }

    #[test]
    fn ct_gamma_zero_returns_h_rt() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let blocks = random_blocks(&mut rng, 2, 3, 2, 0);
        let s = z_to_s(&blocks, 50.0).unwrap();
        let h = channel_ct(&s.s_rt, &s.s_rs, &s.s_st, &CMat::zeros(3, 3), "S-blocks").unwrap();
        assert!(max_rel_diff(&h.h, &s.s_rt) == 0.0);
    }

    #[test]
    fn structural_scattering_two_path_consistency() {
        let z0 = 50.0;
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let blocks = random_blocks(&mut rng, 2, 5, 3, 0);
        let st = structural_scattering(&blocks, z0).unwrap();
        // Path 2: H_S at Γ_S = 0 minus the direct term.
        let s = z_to_s(&blocks, z0).unwrap();
        let hs0 = channel_scattering(&s, &CMat::zeros(5, 5)).unwrap();
        let direct = &blocks.z_rt * Complex64::new(1.0 / (2.0 * z0), 0.0);
        assert!(max_rel_diff(&st, &(&hs0.h - &direct)) <= 1e-12);
    }

    #[test]
    fn structural_scattering_with_matched_self_impedances() {
        let z0 = 50.0;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut blocks = random_blocks(&mut rng, 1, 2, 1, 0);
        blocks.z_ss = CMat::identity(2, 2) * Complex64::new(z0, 0.0);
        let st = structural_scattering(&blocks, z0).unwrap();
        let expect = -(&blocks.z_rs) * &blocks.z_st * Complex64::new(1.0 / (4.0 * z0 * z0), 0.0);
        assert!(max_rel_diff(&st, &expect) <= 1e-12);
    }

    #[test]
    fn blocked_direct_link_still_scatters() {
        let z0 = 50.0;
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut blocks = random_blocks(&mut rng, 2, 3, 2, 0);
        blocks.z_rt.fill(Complex64::default());
        let s = z_to_s(&blocks, z0).unwrap();
        let st = structural_scattering(&blocks, z0).unwrap();
        assert!(max_rel_diff(&s.s_rt, &st) <= 1e-12);
        assert!(st.iter().any(|z| z.norm() > 1e-6));
    }

    #[test]
    fn open_circuit_invisibility() {
        let z0 = 50.0;
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let blocks = random_blocks(&mut rng, 2, 4, 2, 0);
        let huge = CMat::identity(4, 4) * Complex64::new(1e9 * z0, 0.0);
        let h = channel_impedance(&blocks, &huge, z0).unwrap();
        let direct = &blocks.z_rt * Complex64::new(1.0 / (2.0 * z0), 0.0);
        assert!(max_rel_diff(&h.h, &direct) <= 1e-6);
    }

    #[test]
    fn reciprocity_of_end_to_end_channel() {
        // Swapping the Tx and Rx port groups transposes H_Z.
        let z0 = 50.0;
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let blocks = random_blocks(&mut rng, 3, 4, 2, 0);
        let zs = reactive_loads(&mut rng, 4);
        let h = channel_impedance(&blocks, &zs, z0).unwrap();
        let swapped = ImpedanceBlocks {
            z_rt: blocks.z_rt.transpose(),
            z_st: blocks.z_rs.transpose(),
            z_rs: blocks.z_st.transpose(),
            z_ss: blocks.z_ss.clone(),
            z_ot: CMat::zeros(0, 2),
            z_so: CMat::zeros(4, 0),
            z_ro: CMat::zeros(3, 0),
            z_oo: CMat::zeros(0, 0),
            env_loads: vec![],
        };
        let h_swapped = channel_impedance(&swapped, &zs, z0).unwrap();
        assert!(max_rel_diff(&h.h, &h_swapped.h.transpose()) <= 1e-10);
    }

    #[test]
    fn amplitude_phase_entanglement() {
        // Single-element RIS with unit-modulus Γ_S: the effective
        // scattering amplitude still varies with the reactance whenever
        // the self-resistance is positive.
        let z0 = 50.0;
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let mut blocks = random_blocks(&mut rng, 1, 1, 1, 0);
        blocks.z_rt[(0, 0)] = Complex64::default();
        assert!(blocks.z_ss[(0, 0)].re > 0.0);
        let mut amps = Vec::new();
        for i in 0..41 {
            let x = -10.0 * z0 + i as f64 * (20.0 * z0 / 40.0);
            let zs = CMat::from_element(1, 1, Complex64::new(0.0, x));
            let h = channel_impedance(&blocks, &zs, z0).unwrap();
            amps.push(h.h[(0, 0)].norm());
        }
        let (lo, hi) = amps
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(l, h), &a| (l.min(a), h.max(a)));
        assert!(hi > 1.01 * lo, "amplitude must vary by >= 1% (got {lo}..{hi})");
    }

    #[test]
    fn empty_environment_matches_plain_channel() {
        let z0 = 50.0;
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let blocks = random_blocks(&mut rng, 2, 3, 2, 0);
        let zs = reactive_loads(&mut rng, 3);
        let plain = channel_impedance(&blocks, &zs, z0).unwrap();
        let env = assemble_with_environment(&blocks, &zs, z0).unwrap();
        assert!(max_rel_diff(&plain.h, &env.channel.h) <= 1e-14);
        assert!(env.z_sos.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn schur_elimination_matches_brute_force() {
        // Eliminating O then S must equal eliminating (S, O) jointly.
        let z0 = 50.0;
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for (nt, ns, nr, no) in [(2, 3, 2, 2), (4, 32, 4, 24), (1, 8, 1, 4)] {
            let blocks = random_blocks(&mut rng, nt, ns, nr, no);
            let zs = reactive_loads(&mut rng, ns);
            let env = assemble_with_environment(&blocks, &zs, z0).unwrap();

            // Brute force: full (S+O)-subsystem inversion in one shot.
            let m = ns + no;
            let mut inner = CMat::zeros(m, m);
            inner.view_mut((0, 0), (ns, ns)).copy_from(&(&blocks.z_ss + &zs));
            inner.view_mut((0, ns), (ns, no)).copy_from(&blocks.z_so);
            inner.view_mut((ns, 0), (no, ns)).copy_from(&blocks.z_so.transpose());
            let mut z_oo = blocks.z_oo.clone();
            for (i, l) in blocks.env_loads.iter().enumerate() {
                z_oo[(i, i)] += l;
            }
            inner.view_mut((ns, ns), (no, no)).copy_from(&z_oo);
            let mut right = CMat::zeros(m, nt);
            right.view_mut((0, 0), (ns, nt)).copy_from(&blocks.z_st);
            right.view_mut((ns, 0), (no, nt)).copy_from(&blocks.z_ot);
            let mut left = CMat::zeros(nr, m);
            left.view_mut((0, 0), (nr, ns)).copy_from(&blocks.z_rs);
            left.view_mut((0, ns), (nr, no)).copy_from(&blocks.z_ro);
            let sol = inner.lu().solve(&right).unwrap();
            let h_brute =
                (&blocks.z_rt - left * sol) * Complex64::new(1.0 / (2.0 * z0), 0.0);
            let err = max_rel_diff(&env.channel.h, &h_brute);
            assert!(err <= 1e-10, "({nt},{ns},{nr},{no}): rel err {err:.3e}");
        }
    }

    #[test]
    fn singular_load_reported_with_condition_number() {
        let z0 = 50.0;
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let mut blocks = random_blocks(&mut rng, 1, 1, 1, 0);
        blocks.z_ss[(0, 0)] = Complex64::new(0.0, 30.0);
        let zs = CMat::from_element(1, 1, Complex64::new(0.0, -30.0));
        let r = channel_impedance(&blocks, &zs, z0);
        assert!(matches!(r, Err(EmError::Singular { .. })));
    }

    #[test]
    fn relabeling_invariance() {
        // Permuting RIS element order (P Z P^T on the S blocks) leaves
        // the channel unchanged.
        let z0 = 50.0;
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let blocks = random_blocks(&mut rng, 2, 4, 2, 0);
        let zs = reactive_loads(&mut rng, 4);
        let perm = [2usize, 0, 3, 1];
        let permuted = ImpedanceBlocks {
            z_rt: blocks.z_rt.clone(),
            z_st: CMat::from_fn(4, 2, |i, j| blocks.z_st[(perm[i], j)]),
            z_rs: CMat::from_fn(2, 4, |i, j| blocks.z_rs[(i, perm[j])]),
            z_ss: CMat::from_fn(4, 4, |i, j| blocks.z_ss[(perm[i], perm[j])]),
            z_ot: CMat::zeros(0, 2),
            z_so: CMat::zeros(4, 0),
            z_ro: CMat::zeros(2, 0),
            z_oo: CMat::zeros(0, 0),
            env_loads: vec![],
        };
        let zs_perm = CMat::from_fn(4, 4, |i, j| zs[(perm[i], perm[j])]);
        let h1 = channel_impedance(&blocks, &zs, z0).unwrap();
        let h2 = channel_impedance(&permuted, &zs_perm, z0).unwrap();
        assert!(max_rel_diff(&h1.h, &h2.h) <= 1e-12);
    }
}
