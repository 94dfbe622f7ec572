use rand::distr::Distribution;
use rand::RngCore;
use rand_distr::{Beta, Uniform};

use super::{Particle, PriorSpec, ProposalSpec};
use crate::bias::ReportingProb;
use crate::ensemble::CheckpointStore;
use crate::error::{Error, Result};
use crate::rng::SplitMix;

const TAG_POOL: u64 = 0x706f_6f6c;

/// The `r` replicate seeds shared by every parameter draw in `window`.
pub fn seed_pool(master_seed: u64, window: u32, r: usize) -> Vec<u64> {
    let mut rng = SplitMix::stream(&[master_seed, window as u64, TAG_POOL]);
    (0..r).map(|_| rng.next_u64()).collect()
}

fn particle_id(draw: usize, replicate: usize, replicates: usize) -> u64 {
    (draw * replicates + replicate) as u64
}

/// `n` independent `(θ, ρ)` draws from the product prior, each crossed with
/// every seed in `pool`; particle `i·R + r` pairs draw `i` with seed `r`.
pub fn sample_prior(
    spec: &PriorSpec,
    n: usize,
    pool: &[u64],
    rng_seed: u64,
) -> Result<Vec<Particle>> {
    spec.validate()?;
    if n == 0 || pool.is_empty() {
        return Err(Error::InvalidPrior(
            "need at least one draw and one seed".into(),
        ));
    }
    let theta = Uniform::new_inclusive(spec.theta_lo, spec.theta_hi)
        .map_err(|e| Error::InvalidPrior(e.to_string()))?;
    let rho =
        Beta::new(spec.rho_alpha, spec.rho_beta).map_err(|e| Error::InvalidPrior(e.to_string()))?;
    let mut rng = SplitMix::seed_from_u64(rng_seed);
    let mut out = Vec::with_capacity(n * pool.len());
    for i in 0..n {
        let t = theta.sample(&mut rng);
        let r = ReportingProb::new(rho.sample(&mut rng).max(f64::MIN_POSITIVE))?;
        out.extend(pool.iter().enumerate().map(|(j, &seed)| Particle {
            id: particle_id(i, j, pool.len()),
            window: 1,
            theta: t,
            rho: r,
            seed,
            log_weight: 0.0,
            weight: 0.0,
            lineage: Vec::new(),
        }));
    }
    Ok(out)
}

/// Uniform on `(lo, hi]`, or `hi` itself when the interval is empty.
fn uniform_upper_closed(rng: &mut SplitMix, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return hi;
    }
    hi - (hi - lo) * rng.next_f64()
}

/// Children of resampled `ancestors` for the next window.
///
/// Draw `j` jitters ancestor `j mod K`: `θ' ~ U(θ − δ, θ + δ)` cut to
/// `theta_range`, `ρ' ~ U(ρ − δ⁻, ρ + δ⁺)` cut to `(0, 1]`. Each draw is
/// crossed with `pool`. Every ancestor must have a stored end state.
pub fn propose_next_window(
    ancestors: &[Particle],
    n: usize,
    pool: &[u64],
    spec: &ProposalSpec,
    theta_range: (f64, f64),
    rng_seed: u64,
    store: &CheckpointStore,
) -> Result<Vec<Particle>> {
    spec.validate()?;
    if ancestors.is_empty() || n == 0 || pool.is_empty() {
        return Err(Error::InvalidArgument(
            "proposal needs ancestors, draws and seeds".into(),
        ));
    }
    for a in ancestors {
        if !store.contains(a.checkpoint_ref()) {
            let mut lineage = a.lineage.clone();
            lineage.push(a.id);
            return Err(Error::MissingCheckpoint {
                window: a.window,
                particle: a.id,
                lineage,
            });
        }
    }
    let (lo, hi) = theta_range;
    let mut rng = SplitMix::seed_from_u64(rng_seed);
    let mut out = Vec::with_capacity(n * pool.len());
    for j in 0..n {
        let a = &ancestors[j % ancestors.len()];
        let theta = uniform_upper_closed(
            &mut rng,
            (a.theta - spec.theta_half_width).max(lo),
            (a.theta + spec.theta_half_width).min(hi),
        );
        let rho = uniform_upper_closed(
            &mut rng,
            (a.rho.get() - spec.rho_below).max(0.0),
            (a.rho.get() + spec.rho_above).min(1.0),
        );
        let rho = ReportingProb::new(rho)?;
        let mut lineage = a.lineage.clone();
        lineage.push(a.id);
        out.extend(pool.iter().enumerate().map(|(r, &seed)| Particle {
            id: particle_id(j, r, pool.len()),
            window: a.window + 1,
            theta,
            rho,
            seed,
            log_weight: 0.0,
            weight: 0.0,
            lineage: lineage.clone(),
        }));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::CheckpointRef;
    use crate::sim::{init_state, Checkpoint, SimParams};

    fn store_with(refs: &[CheckpointRef]) -> CheckpointStore {
        let mut s = init_state(100, 1, SimParams::default(), 1).unwrap();
        let t = s.advance(2).unwrap();
        let c = Checkpoint::save(&s).unwrap();
        let mut store = CheckpointStore::in_memory();
        for &r in refs {
            store.put(r, &c, &t).unwrap();
        }
        store
    }

    fn ancestor(id: u64, theta: f64, rho: f64) -> Particle {
        Particle {
            id,
            window: 1,
            theta,
            rho: ReportingProb::new(rho).unwrap(),
            seed: 0,
            log_weight: 0.0,
            weight: 1.0,
            lineage: vec![],
        }
    }

    #[test]
    fn prior_counts_and_support() {
        let spec = PriorSpec {
            replicates: 3,
            ..PriorSpec::default()
        };
        let pool = seed_pool(5, 1, 3);
        let ps = sample_prior(&spec, 7, &pool, 11).unwrap();
        assert_eq!(ps.len(), 21);
        for (k, p) in ps.iter().enumerate() {
            assert_eq!(p.id, k as u64);
            assert_eq!(p.seed, pool[k % 3]);
            assert_eq!(p.theta, ps[k - k % 3].theta);
            assert!((0.1..=0.5).contains(&p.theta));
        }
        let single = sample_prior(
            &PriorSpec {
                replicates: 1,
                ..spec
            },
            1,
            &pool[..1],
            2,
        )
        .unwrap();
        assert_eq!(single.len(), 1);
        assert!((0.1..=0.5).contains(&single[0].theta));
    }

    #[test]
    fn prior_beta_mean() {
        let spec = PriorSpec {
            replicates: 1,
            ..PriorSpec::default()
        };
        let ps = sample_prior(&spec, 100_000, &[0], 2024).unwrap();
        let mean = ps.iter().map(|p| p.rho.get()).sum::<f64>() / ps.len() as f64;
        // Beta(4, 1): mean 0.8, sd sqrt(4/150), so 3 standard errors ≈ 0.0015
        assert!((mean - 0.8).abs() < 0.004, "{mean}");
    }

    #[test]
    fn zero_jitter_inherits() {
        let store = store_with(&[CheckpointRef::new(1, 4)]);
        let spec = ProposalSpec {
            theta_half_width: 0.0,
            rho_below: 0.0,
            rho_above: 0.0,
        };
        let kids = propose_next_window(
            &[ancestor(4, 0.37, 0.62)],
            5,
            &[1, 2],
            &spec,
            (0.1, 0.5),
            3,
            &store,
        )
        .unwrap();
        assert_eq!(kids.len(), 10);
        for k in &kids {
            assert_eq!(k.theta, 0.37);
            assert_eq!(k.rho.get(), 0.62);
            assert_eq!(k.window, 2);
            assert_eq!(k.lineage, vec![4]);
            assert_eq!(k.parent_ref(), Some(CheckpointRef::new(1, 4)));
        }
    }

    #[test]
    fn jitter_is_truncated() {
        let store = store_with(&[CheckpointRef::new(1, 0)]);
        let spec = ProposalSpec {
            theta_half_width: 0.05,
            rho_below: 0.05,
            rho_above: 0.15,
        };
        let kids = propose_next_window(
            &[ancestor(0, 0.11, 0.95)],
            2000,
            &[9],
            &spec,
            (0.1, 0.5),
            3,
            &store,
        )
        .unwrap();
        assert!(kids.iter().all(|k| (0.1..=0.16).contains(&k.theta)));
        assert!(kids.iter().all(|k| k.rho.get() > 0.9 && k.rho.get() <= 1.0));
    }

    #[test]
    fn symmetric_jitter_mean() {
        let store = store_with(&[CheckpointRef::new(1, 0)]);
        let spec = ProposalSpec {
            theta_half_width: 0.05,
            ..ProposalSpec::default()
        };
        let n = 20_000;
        let kids = propose_next_window(
            &[ancestor(0, 0.3, 0.5)],
            n,
            &[1],
            &spec,
            (0.1, 0.5),
            8,
            &store,
        )
        .unwrap();
        let mean = kids.iter().map(|k| k.theta).sum::<f64>() / n as f64;
        let se = 0.1 / 12f64.sqrt() / (n as f64).sqrt();
        assert!((mean - 0.3).abs() < 3.0 * se, "{mean}");
        let rho_mean = kids.iter().map(|k| k.rho.get()).sum::<f64>() / n as f64;
        assert!(rho_mean > 0.5, "upward-skewed rho jitter: {rho_mean}");
    }

    #[test]
    fn cycles_through_ancestors() {
        let store = store_with(&[CheckpointRef::new(1, 0), CheckpointRef::new(1, 1)]);
        let kids = propose_next_window(
            &[ancestor(0, 0.2, 0.5), ancestor(1, 0.4, 0.5)],
            4,
            &[1],
            &ProposalSpec::default(),
            (0.1, 0.5),
            1,
            &store,
        )
        .unwrap();
        let anc: Vec<_> = kids.iter().map(|k| k.ancestor().unwrap()).collect();
        assert_eq!(anc, vec![0, 1, 0, 1]);
    }

    #[test]
    fn missing_ancestor_checkpoint_reports_lineage() {
        let mut a = ancestor(6, 0.3, 0.5);
        a.window = 2;
        a.lineage = vec![3];
        let err = propose_next_window(
            &[a],
            1,
            &[1],
            &ProposalSpec::default(),
            (0.1, 0.5),
            1,
            &CheckpointStore::in_memory(),
        )
        .unwrap_err();
        match err {
            Error::MissingCheckpoint {
                window,
                particle,
                lineage,
            } => {
                assert_eq!((window, particle, lineage), (2, 6, vec![3, 6]));
            }
            e => panic!("{e}"),
        }
    }
}
