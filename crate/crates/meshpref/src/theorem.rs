//! Empirical check that the gap between the paired and unpaired empirical
//! CS divergences shrinks at the O(1/sqrt(m) + 1/sqrt(n)) rate.
//!
//! A scenario fixes a prompt distribution (uniform on [0, 1]) and two
//! conditional Gaussians whose means depend linearly on the prompt. The
//! paired divergence conditions both populations on one prompt list; the
//! unpaired divergence draws a second independent prompt list for the
//! second population. Everything else, including the observation noise
//! streams and the kernel bandwidth, is shared, so the measured gap
//! isolates the pairing of prompts.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::csdiv::{median_bandwidth, EmbeddingBatch};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    /// Dimension of the observation space.
    pub dim: usize,
    /// Fixed mean offset between the two conditionals.
    pub offset: Vec<f64>,
    /// Prompt-feature shift applied to both conditional means.
    pub prompt_shift: Vec<f64>,
    /// Isotropic observation noise scale.
    pub noise_sigma: f64,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            dim: 2,
            offset: vec![1.0, 0.0],
            prompt_shift: vec![4.0, 4.0],
            noise_sigma: 0.25,
        }
    }
}

impl Scenario {
    fn check(&self) -> Result<()> {
        if self.dim == 0
            || self.offset.len() != self.dim
            || self.prompt_shift.len() != self.dim
            || self.noise_sigma <= 0.0
        {
            return Err(Error::InvalidHarnessConfig(
                "scenario dim/offset/prompt_shift/noise_sigma inconsistent".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Report {
    pub sizes: Vec<usize>,
    /// gaps[i][t] = |D_paired - D_unpaired| at sizes[i], trial t.
    pub gaps: Vec<Vec<f64>>,
    pub median_gaps: Vec<f64>,
    /// Least-squares slope of log median gap against log m.
    pub fitted_slope: f64,
    /// Smallest C with gap <= C (1/sqrt(m) + 1/sqrt(n)) over all trials.
    pub fitted_c: f64,
    pub bandwidth: f64,
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; one value per call keeps draw counts predictable
    let u1: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn draw_prompts(m: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..m).map(|_| rng.gen()).collect()
}

/// Conditional sample: row i ~ N(base + prompt_shift * c_i, noise^2 I).
fn draw_conditional(
    scenario: &Scenario,
    base: &[f64],
    prompts: &[f64],
    rng: &mut ChaCha8Rng,
) -> Array2<f64> {
    let d = scenario.dim;
    let mut out = Array2::zeros((prompts.len(), d));
    for (i, &c) in prompts.iter().enumerate() {
        for j in 0..d {
            out[[i, j]] = base[j]
                + scenario.prompt_shift[j] * c
                + scenario.noise_sigma * standard_normal(rng);
        }
    }
    out
}

/// Kernel sum over all ordered pairs of one flat row-major sample,
/// exploiting symmetry: diagonal contributes 1 per row, off-diagonal pairs
/// are counted twice.
fn symmetric_kernel_sum(a: &[f64], d: usize, inv_two_sigma_sq: f64) -> f64 {
    let n = a.len() / d;
    let mut off = 0.0;
    for i in 0..n {
        let ai = &a[i * d..(i + 1) * d];
        for j in (i + 1)..n {
            let bj = &a[j * d..(j + 1) * d];
            let mut sq = 0.0;
            for k in 0..d {
                let t = ai[k] - bj[k];
                sq += t * t;
            }
            off += (sq * inv_two_sigma_sq).exp();
        }
    }
    n as f64 + 2.0 * off
}

fn cross_kernel_sum(a: &[f64], b: &[f64], d: usize, inv_two_sigma_sq: f64) -> f64 {
    let mut total = 0.0;
    for ai in a.chunks_exact(d) {
        let mut row = 0.0;
        for bj in b.chunks_exact(d) {
            let mut sq = 0.0;
            for k in 0..d {
                let t = ai[k] - bj[k];
                sq += t * t;
            }
            row += (sq * inv_two_sigma_sq).exp();
        }
        total += row;
    }
    total
}

/// Gap between paired and unpaired divergences for one (size, trial) cell.
/// Exposed so the white-box coincidence check can inject identical prompt
/// lists.
///
/// Both estimates share the same first-population sample (same prompts and
/// noise seed), so its self-term cancels exactly in the difference; only
/// the second-population self-term and the cross-term are computed, once
/// per prompt list.
pub fn paired_unpaired_gap(
    scenario: &Scenario,
    prompts: &[f64],
    prompts_independent: &[f64],
    noise_seed_x: u64,
    noise_seed_y: u64,
    sigma: f64,
) -> Result<f64> {
    if sigma <= 0.0 || !sigma.is_finite() {
        return Err(Error::InvalidBandwidth(sigma));
    }
    let d = scenario.dim;
    let zero = vec![0.0; d];
    let mut rng_x = ChaCha8Rng::seed_from_u64(noise_seed_x);
    let x = draw_conditional(scenario, &zero, prompts, &mut rng_x);
    // one noise stream for both second-population draws, matching a run
    // that differs only in the prompt list
    let mut rng_y = ChaCha8Rng::seed_from_u64(noise_seed_y);
    let y_paired = draw_conditional(scenario, &scenario.offset, prompts, &mut rng_y);
    let mut rng_y = ChaCha8Rng::seed_from_u64(noise_seed_y);
    let y_indep = draw_conditional(
        scenario,
        &scenario.offset,
        prompts_independent,
        &mut rng_y,
    );

    let xs = x.as_slice().expect("standard layout");
    let inv = -1.0 / (2.0 * sigma * sigma);
    let estimate = |y: &Array2<f64>| -> f64 {
        let ys = y.as_slice().expect("standard layout");
        let syy = symmetric_kernel_sum(ys, d, inv);
        let sxy = cross_kernel_sum(xs, ys, d, inv);
        let n = (y.nrows() * y.nrows()) as f64;
        let mn = (x.nrows() * y.nrows()) as f64;
        (syy / n).ln() - 2.0 * (sxy / mn).ln()
    };
    Ok((estimate(&y_paired) - estimate(&y_indep)).abs())
}

fn median(sorted_copy: &mut [f64]) -> f64 {
    sorted_copy.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted_copy.len();
    if n % 2 == 1 {
        sorted_copy[n / 2]
    } else {
        0.5 * (sorted_copy[n / 2 - 1] + sorted_copy[n / 2])
    }
}

pub fn default_sizes() -> Vec<usize> {
    vec![50, 100, 200, 400, 800, 1600, 3200]
}

/// Runs the ladder: per (size, trial), the absolute gap between the paired
/// and unpaired divergence estimates. The bandwidth is the median heuristic
/// computed once on a reference draw at the largest size and then held
/// fixed, so the statistic rather than the estimator varies with m.
pub fn run_theorem1(
    sizes: &[usize],
    trials: usize,
    seed: u64,
    scenario: &Scenario,
) -> Result<Theorem1Report> {
    scenario.check()?;
    if sizes.len() < 2 || sizes.iter().any(|&s| s < 10) {
        return Err(Error::InvalidHarnessConfig(
            "need at least 2 sizes, each at least 10".into(),
        ));
    }
    if sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidHarnessConfig(
            "sizes must be strictly increasing".into(),
        ));
    }
    if trials < 5 {
        return Err(Error::InvalidHarnessConfig(
            "need at least 5 trials".into(),
        ));
    }

    // fixed bandwidth from a reference draw at the largest size
    let m_max = *sizes.last().unwrap();
    let sigma = {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xb4d_5eed);
        let zero = vec![0.0; scenario.dim];
        let prompts_x = draw_prompts(m_max, &mut rng);
        let prompts_y = draw_prompts(m_max, &mut rng);
        let x = EmbeddingBatch::new(draw_conditional(scenario, &zero, &prompts_x, &mut rng))?;
        let y = EmbeddingBatch::new(draw_conditional(
            scenario,
            &scenario.offset,
            &prompts_y,
            &mut rng,
        ))?;
        median_bandwidth(&x, &y)
    };

    // common random numbers across the ladder: each trial draws one master
    // prompt list and noise seed pair at the largest size, and every size
    // evaluates on prefixes of that draw, so the per-trial gap varies
    // smoothly in m instead of resampling at every rung
    let mut gaps: Vec<Vec<f64>> = vec![Vec::with_capacity(trials); sizes.len()];
    let mut seed_rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..trials {
        let prompt_seed: u64 = seed_rng.gen();
        let noise_seed_x: u64 = seed_rng.gen();
        let noise_seed_y: u64 = seed_rng.gen();
        let mut prng = ChaCha8Rng::seed_from_u64(prompt_seed);
        let prompts = draw_prompts(m_max, &mut prng);
        let prompts_independent = draw_prompts(m_max, &mut prng);
        for (si, &m) in sizes.iter().enumerate() {
            gaps[si].push(paired_unpaired_gap(
                scenario,
                &prompts[..m],
                &prompts_independent[..m],
                noise_seed_x,
                noise_seed_y,
                sigma,
            )?);
        }
    }

    let median_gaps: Vec<f64> = gaps.iter().map(|row| median(&mut row.clone())).collect();

    // log-log least squares of median gap against m
    let pts: Vec<(f64, f64)> = sizes
        .iter()
        .zip(&median_gaps)
        .filter(|&(_, &g)| g > 0.0)
        .map(|(&m, &g)| ((m as f64).ln(), g.ln()))
        .collect();
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let fitted_slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);

    let fitted_c = sizes
        .iter()
        .zip(&gaps)
        .flat_map(|(&m, row)| {
            let bound = 2.0 / (m as f64).sqrt();
            row.iter().map(move |g| g / bound)
        })
        .fold(0.0, f64::max);

    Ok(Theorem1Report {
        sizes: sizes.to_vec(),
        gaps,
        median_gaps,
        fitted_slope,
        fitted_c,
        bandwidth: sigma,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn invalid_configs_error() {
        let s = Scenario::default();
        assert!(run_theorem1(&[100], 20, 1, &s).is_err());
        assert!(run_theorem1(&[5, 100], 20, 1, &s).is_err());
        assert!(run_theorem1(&[100, 50], 20, 1, &s).is_err());
        assert!(run_theorem1(&[50, 100], 3, 1, &s).is_err());
        let bad = Scenario {
            offset: vec![1.0],
            ..Scenario::default()
        };
        assert!(run_theorem1(&[50, 100], 20, 1, &bad).is_err());
    }

    #[test]
    fn identical_prompt_lists_coincide_exactly() {
        let s = Scenario::default();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let prompts = draw_prompts(60, &mut rng);
        let gap = paired_unpaired_gap(&s, &prompts, &prompts, 11, 12, 1.0).unwrap();
        assert!(gap < 1e-12, "gap {gap}");
    }

    #[test]
    fn zero_offset_degenerate_case_shrinks() {
        let s = Scenario {
            offset: vec![0.0, 0.0],
            ..Scenario::default()
        };
        let report = run_theorem1(&[100, 400, 1600], 10, 42, &s).unwrap();
        assert!(report.gaps.iter().flatten().all(|&g| g >= 0.0));
        assert!(
            report.median_gaps[2] < report.median_gaps[0],
            "medians {:?}",
            report.median_gaps
        );
    }

    #[test]
    fn fitted_c_bounds_every_gap() {
        let s = Scenario::default();
        let report = run_theorem1(&[50, 100, 200], 8, 3, &s).unwrap();
        for (&m, row) in report.sizes.iter().zip(&report.gaps) {
            let bound = report.fitted_c * 2.0 / (m as f64).sqrt();
            for &g in row {
                assert!(g <= bound + 1e-12);
            }
        }
    }

    #[test]
    fn short_ladder_slope_is_negative() {
        let s = Scenario::default();
        let report = run_theorem1(&[50, 100, 200, 400], 10, 7, &s).unwrap();
        assert!(
            report.fitted_slope < -0.1,
            "slope {} not decreasing",
            report.fitted_slope
        );
    }

    #[test]
    fn same_seed_identical_report() {
        let s = Scenario::default();
        let a = run_theorem1(&[50, 100], 5, 21, &s).unwrap();
        let b = run_theorem1(&[50, 100], 5, 21, &s).unwrap();
        assert_eq!(a, b);
    }
}
