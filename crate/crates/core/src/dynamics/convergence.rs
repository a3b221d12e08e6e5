use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::system::{empirical_curve, simulate_single, ParticleState, SimConfig};
use super::Domain;
use crate::error::{Error, Result};
use crate::kernels::AdmissibleField;
use crate::measures::DiscreteMeasure;
use crate::wasserstein::w1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub n: usize,
    pub replicate: usize,
    pub sup_w1: f64,
}

/// Parameters shared by every run of a study.
#[derive(Debug, Clone)]
pub struct StudySetup<'a> {
    pub kernel: &'a AdmissibleField,
    pub external: &'a AdmissibleField,
    pub domain: Option<&'a Domain>,
    pub config: &'a SimConfig,
    pub stride: usize,
    pub seed: u64,
}

fn stream_rng(seed: u64, replicate: usize, slot: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((replicate as u64) << 32) | slot as u64);
    rng
}

/// For each replicate, draws a fresh population for every `N`, simulates all
/// of them, and records `sup_t W1(ρ^N(t), ρ^{Nmax}(t))` over the strided
/// snapshot grid, where `ρ^{Nmax}` is the same replicate's largest run (so
/// its own row is zero).
///
/// Random streams are keyed by `(seed, replicate, N index)` so the table does
/// not depend on thread scheduling.
pub fn convergence_study<S>(
    sampler: S,
    ns: &[usize],
    replicates: usize,
    setup: &StudySetup<'_>,
) -> Result<Vec<ConvergenceRow>>
where
    S: Fn(usize, &mut ChaCha8Rng) -> Result<DiscreteMeasure> + Sync,
{
    if ns.is_empty() || ns.windows(2).any(|w| w[1] <= w[0]) || ns[0] == 0 {
        return Err(Error::InvalidParameter("Ns must be positive and strictly increasing".into()));
    }
    if replicates == 0 {
        return Err(Error::InvalidParameter("need at least one replicate".into()));
    }
    let run = |mu: DiscreteMeasure| -> Result<Vec<DiscreteMeasure>> {
        let tr = simulate_single(
            &ParticleState::from_measure(&mu),
            setup.kernel,
            setup.external,
            setup.domain,
            setup.config,
        )?;
        Ok(empirical_curve(&tr, setup.stride)?.snapshots().to_vec())
    };

    let per_rep: Vec<Result<Vec<ConvergenceRow>>> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let curves = ns
                .iter()
                .enumerate()
                .map(|(slot, &n)| run(sampler(n, &mut stream_rng(setup.seed, r, slot))?))
                .collect::<Result<Vec<_>>>()?;
            let reference = curves.last().unwrap();
            ns.iter()
                .zip(&curves)
                .map(|(&n, snaps)| {
                    let mut sup = 0.0f64;
                    for (a, b) in snaps.iter().zip(reference) {
                        sup = sup.max(w1(a, b)?);
                    }
                    Ok(ConvergenceRow { n, replicate: r, sup_w1: sup })
                })
                .collect()
        })
        .collect();
    let mut rows = Vec::new();
    for r in per_rep {
        rows.extend(r?);
    }
    Ok(rows)
}

/// Median of `sup_w1` for each `N`, in order of first appearance.
pub fn medians(rows: &[ConvergenceRow]) -> Vec<(usize, f64)> {
    let mut ns: Vec<usize> = Vec::new();
    for r in rows {
        if !ns.contains(&r.n) {
            ns.push(r.n);
        }
    }
    ns.into_iter()
        .map(|n| {
            let mut v: Vec<f64> = rows.iter().filter(|r| r.n == n).map(|r| r.sup_w1).collect();
            v.sort_by(f64::total_cmp);
            let m = v.len();
            let med = if m % 2 == 1 { v[m / 2] } else { 0.5 * (v[m / 2 - 1] + v[m / 2]) };
            (n, med)
        })
        .collect()
}

pub fn write_convergence_csv<W: Write>(rows: &[ConvergenceRow], mut out: W) -> Result<()> {
    writeln!(out, "N,replicate,sup_t_W1")?;
    for r in rows {
        writeln!(out, "{},{},{}", r.n, r.replicate, r.sup_w1)?;
    }
    Ok(())
}
