//! Sequential model-based tuning: a shifted Halton initial design followed by
//! expected-improvement proposals under a Gaussian-process surrogate.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

use super::cv::cross_validate;
use super::tree::Rows;
use super::{ParamSpace, RfHyperparams};
use crate::csvutil::{fmt_f64, writer};
use crate::error::{Error, Result};
use crate::seeding::SeedKey;

const HALTON_BASES: [u32; 4] = [2, 3, 5, 7];

/// Smallest objective scale for the surrogate, relative to the mean score.
const SCALE_FLOOR: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoConfig {
    pub iterations: usize,
    pub initial: usize,
    pub candidates: usize,
    pub folds: usize,
    /// Kernel lengthscale on the unit-scaled parameters.
    pub lengthscale: f64,
    pub noise: f64,
}

impl Default for BoConfig {
    fn default() -> Self {
        BoConfig {
            iterations: 25,
            initial: 8,
            candidates: 512,
            folds: 5,
            lengthscale: 0.25,
            noise: 1e-6,
        }
    }
}

impl BoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.initial == 0 || self.iterations < self.initial {
            return Err(Error::config(format!(
                "optimization budget {} must cover the {} initial points (and at least one)",
                self.iterations, self.initial
            )));
        }
        if self.candidates == 0 || !(self.lengthscale > 0.0) || !(self.noise >= 0.0) {
            return Err(Error::config(
                "candidates, lengthscale must be positive, noise >= 0",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoPhase {
    Initial,
    Acquisition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoEntry {
    pub iteration: usize,
    pub phase: BoPhase,
    pub params: RfHyperparams,
    pub cv_mae: f64,
    /// Best CV MAE seen up to and including this iteration.
    pub incumbent_mae: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoTrace {
    pub entries: Vec<BoEntry>,
}

impl BoTrace {
    /// Index of the first entry with the lowest CV MAE.
    pub fn best_index(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, e) in self.entries.iter().enumerate() {
            if best.is_none_or(|b| e.cv_mae < self.entries[b].cv_mae) {
                best = Some(i);
            }
        }
        best
    }

    pub fn best(&self) -> Option<&BoEntry> {
        self.best_index().map(|i| &self.entries[i])
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = writer(path)?;
        w.write_record([
            "iteration",
            "phase",
            "n_estimators",
            "max_depth",
            "min_samples_split",
            "min_samples_leaf",
            "max_features",
            "cv_mae",
            "incumbent_mae",
        ])?;
        for e in &self.entries {
            let p = &e.params;
            w.write_record([
                e.iteration.to_string(),
                match e.phase {
                    BoPhase::Initial => "initial".into(),
                    BoPhase::Acquisition => "acquisition".into(),
                },
                p.n_estimators.to_string(),
                p.max_depth.to_string(),
                p.min_samples_split.to_string(),
                p.min_samples_leaf.to_string(),
                fmt_f64(p.max_features),
                fmt_f64(e.cv_mae),
                fmt_f64(e.incumbent_mae),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn radical_inverse(mut i: u64, base: u32) -> f64 {
    let b = u64::from(base);
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= b as f64;
        r += f * (i % b) as f64;
        i /= b;
    }
    r
}

/// Halton points 1..=n with a Cranley-Patterson rotation.
fn shifted_halton(n: usize, shift: [f64; 4]) -> Vec<[f64; 4]> {
    (1..=n as u64)
        .map(|i| {
            let mut p = [0.0; 4];
            for d in 0..4 {
                p[d] = (radical_inverse(i, HALTON_BASES[d]) + shift[d]).fract();
            }
            p
        })
        .collect()
}

fn decode(space: &ParamSpace, u: [f64; 4]) -> RfHyperparams {
    let mut v = [0usize; 4];
    for (d, (lo, hi)) in space.bounds().into_iter().enumerate() {
        let x = lo as f64 + u[d].clamp(0.0, 1.0) * (hi - lo) as f64;
        v[d] = (x.round() as usize).clamp(lo, hi);
    }
    space.from_array(v)
}

fn encode(space: &ParamSpace, hp: &RfHyperparams) -> [f64; 4] {
    let v = hp.as_array();
    let mut u = [0.0; 4];
    for (d, (lo, hi)) in space.bounds().into_iter().enumerate() {
        u[d] = if hi > lo {
            (v[d] - lo) as f64 / (hi - lo) as f64
        } else {
            0.0
        };
    }
    u
}

fn sq_dist(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lower-triangular Cholesky factor, row-major.
fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= 0.0 {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(l)
}

fn forward_sub(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut x = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[i * n + k] * x[k]).sum();
        x[i] = (b[i] - s) / l[i * n + i];
    }
    x
}

fn backward_sub(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| l[k * n + i] * x[k]).sum();
        x[i] = (b[i] - s) / l[i * n + i];
    }
    x
}

/// Zero-mean GP on standardized observations with a unit-variance
/// squared-exponential kernel.
struct Gp {
    points: Vec<[f64; 4]>,
    l: Vec<f64>,
    alpha: Vec<f64>,
    lengthscale: f64,
}

impl Gp {
    fn kernel(&self, a: &[f64; 4], b: &[f64; 4]) -> f64 {
        (-sq_dist(a, b) / (2.0 * self.lengthscale * self.lengthscale)).exp()
    }

    fn fit(points: Vec<[f64; 4]>, y: &[f64], lengthscale: f64, noise: f64) -> Result<Gp> {
        let n = points.len();
        let mut gp = Gp {
            points,
            l: Vec::new(),
            alpha: Vec::new(),
            lengthscale,
        };
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                k[i * n + j] = gp.kernel(&gp.points[i], &gp.points[j]);
            }
        }
        // Coincident points make the kernel matrix singular at tiny noise;
        // grow the diagonal until the factorization succeeds.
        let mut jitter = noise;
        for _ in 0..12 {
            let mut kn = k.clone();
            for i in 0..n {
                kn[i * n + i] += jitter;
            }
            if let Some(l) = cholesky(&kn, n) {
                gp.alpha = backward_sub(&l, n, &forward_sub(&l, n, y));
                gp.l = l;
                return Ok(gp);
            }
            jitter = (jitter * 10.0).max(1e-10);
        }
        Err(Error::Training(
            "surrogate kernel matrix is not positive definite".into(),
        ))
    }

    fn posterior(&self, x: &[f64; 4]) -> (f64, f64) {
        let n = self.points.len();
        let ks: Vec<f64> = self.points.iter().map(|p| self.kernel(p, x)).collect();
        let mean = ks.iter().zip(&self.alpha).map(|(a, b)| a * b).sum();
        let v = forward_sub(&self.l, n, &ks);
        let var = (1.0 - v.iter().map(|a| a * a).sum::<f64>()).max(0.0);
        (mean, var.sqrt())
    }
}

/// Expected improvement below `best` for a Gaussian with `mean`, `sd`.
pub(crate) fn expected_improvement(mean: f64, sd: f64, best: f64) -> f64 {
    let imp = best - mean;
    if sd <= 1e-12 {
        return imp.max(0.0);
    }
    let z = imp / sd;
    let cdf = 0.5 * libm::erfc(-z / std::f64::consts::SQRT_2);
    let pdf = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    imp * cdf + sd * pdf
}

/// Minimizes the k-fold CV MAE over `space`. Every evaluation uses the same
/// fold assignment. Returns the trace and the incumbent.
pub fn bayes_opt(
    rows: Rows<'_>,
    space: &ParamSpace,
    config: &BoConfig,
    seed: u64,
) -> Result<(BoTrace, RfHyperparams)> {
    config.validate()?;
    space.validate()?;
    let key = SeedKey::new(seed).with_str("bayes-opt");
    let cv_seed = key.with_str("cv").value();
    let mut entries: Vec<BoEntry> = Vec::with_capacity(config.iterations);
    let mut incumbent = f64::INFINITY;
    let mut record =
        |params: RfHyperparams, phase: BoPhase, entries: &mut Vec<BoEntry>| -> Result<()> {
            let cv = cross_validate(rows, &params, config.folds, cv_seed)?;
            if !cv.mean_mae.is_finite() {
                return Err(Error::Training("cross-validation MAE is not finite".into()));
            }
            incumbent = incumbent.min(cv.mean_mae);
            log::debug!(
                "bo {} {:?} cv_mae {}",
                entries.len() + 1,
                params,
                cv.mean_mae
            );
            entries.push(BoEntry {
                iteration: entries.len() + 1,
                phase,
                params,
                cv_mae: cv.mean_mae,
                incumbent_mae: incumbent,
            });
            Ok(())
        };

    let mut shift_rng = key.with_str("shift").rng();
    let shift = [(); 4].map(|_| shift_rng.random::<f64>());
    for u in shifted_halton(config.initial, shift) {
        record(decode(space, u), BoPhase::Initial, &mut entries)?;
    }

    let mut cand_rng = key.with_str("candidates").rng();
    while entries.len() < config.iterations {
        let y: Vec<f64> = entries.iter().map(|e| e.cv_mae).collect();
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / y.len() as f64;
        // Floor the scale so that a plateau of near-identical scores is not
        // blown up into apparent structure.
        let sd = var
            .sqrt()
            .max(SCALE_FLOOR * mean.abs())
            .max(f64::MIN_POSITIVE);
        let ys: Vec<f64> = y.iter().map(|v| (v - mean) / sd).collect();
        let best = ys.iter().cloned().fold(f64::INFINITY, f64::min);
        let points: Vec<[f64; 4]> = entries.iter().map(|e| encode(space, &e.params)).collect();
        let gp = Gp::fit(points, &ys, config.lengthscale, config.noise)?;

        let mut chosen: Option<(f64, RfHyperparams)> = None;
        let mut fallback: Option<RfHyperparams> = None;
        for _ in 0..config.candidates {
            let u = [(); 4].map(|_| cand_rng.random::<f64>());
            let hp = decode(space, u);
            if entries.iter().any(|e| e.params == hp) {
                continue;
            }
            fallback.get_or_insert(hp);
            let (m, s) = gp.posterior(&encode(space, &hp));
            let ei = expected_improvement(m, s, best);
            if chosen.is_none_or(|(b, _)| ei > b) {
                chosen = Some((ei, hp));
            }
        }
        let hp = match (chosen, fallback) {
            (Some((_, hp)), _) => hp,
            (None, Some(hp)) => hp,
            (None, None) => decode(space, [(); 4].map(|_| cand_rng.random::<f64>())),
        };
        record(hp, BoPhase::Acquisition, &mut entries)?;
    }
    let trace = BoTrace { entries };
    let best = trace.best().expect("at least one evaluation").params;
    Ok((trace, best))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn halton_first_points() {
        let p = shifted_halton(3, [0.0; 4]);
        assert_eq!(p[0], [0.5, 1.0 / 3.0, 0.2, 1.0 / 7.0]);
        assert_eq!(p[1][0], 0.25);
        assert_eq!(p[2][1], 1.0 / 9.0);
    }

    #[test]
    fn encode_decode_round_trip() {
        let s = ParamSpace::default();
        for u in shifted_halton(20, [0.3, 0.1, 0.7, 0.9]) {
            let hp = decode(&s, u);
            assert!(s.contains(&hp));
            assert_eq!(decode(&s, encode(&s, &hp)), hp);
        }
        assert_eq!(decode(&s, [0.0; 4]).as_array(), [50, 3, 30, 30]);
        assert_eq!(decode(&s, [1.0; 4]).as_array(), [800, 12, 500, 500]);
    }

    #[test]
    fn expected_improvement_limits() {
        assert_eq!(expected_improvement(1.0, 0.0, 0.0), 0.0);
        assert_eq!(expected_improvement(-1.0, 0.0, 0.0), 1.0);
        // Standard normal at the incumbent: EI = pdf(0).
        let ei = expected_improvement(0.0, 1.0, 0.0);
        assert!((ei - 0.398_942_280_401_432_7).abs() < 1e-15);
    }

    #[test]
    fn gp_interpolates_observations() {
        let pts = vec![
            [0.1, 0.2, 0.3, 0.4],
            [0.9, 0.8, 0.1, 0.5],
            [0.5, 0.5, 0.5, 0.5],
        ];
        let y = [1.0, -0.5, 0.25];
        let gp = Gp::fit(pts.clone(), &y, 0.25, 1e-6).unwrap();
        for (p, v) in pts.iter().zip(y) {
            let (m, s) = gp.posterior(p);
            assert!((m - v).abs() < 1e-4);
            assert!(s < 1e-2);
        }
        // Duplicate points still factor with added jitter.
        let gp = Gp::fit(vec![pts[0], pts[0]], &[1.0, 1.0], 0.25, 0.0).unwrap();
        assert!(gp.posterior(&pts[0]).0.is_finite());
    }

    #[test]
    fn budget_below_initial_is_config_error() {
        let x = vec![vec![0.0]; 10];
        let y = vec![0.0; 10];
        let c = BoConfig {
            iterations: 4,
            ..Default::default()
        };
        let r = bayes_opt(Rows::new(&x, &y).unwrap(), &ParamSpace::default(), &c, 0);
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn small_search_is_deterministic_and_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x: Vec<Vec<f64>> = (0..80)
            .map(|_| (0..3).map(|_| rng.random::<f64>()).collect())
            .collect();
        let y: Vec<f64> = x.iter().map(|r| 4.0 * r[0] + r[1]).collect();
        let rows = Rows::new(&x, &y).unwrap();
        let space = ParamSpace {
            n_estimators: (2, 8),
            max_depth: (1, 5),
            min_samples_split: (2, 30),
            min_samples_leaf: (1, 20),
            max_features: 1.0,
        };
        let c = BoConfig {
            iterations: 7,
            initial: 4,
            candidates: 64,
            folds: 3,
            ..Default::default()
        };
        let (t1, best) = bayes_opt(rows, &space, &c, 3).unwrap();
        let (t2, _) = bayes_opt(rows, &space, &c, 3).unwrap();
        assert_eq!(t1, t2);
        assert_eq!(t1.entries.len(), 7);
        assert!(t1.entries.iter().all(|e| space.contains(&e.params)));
        for w in t1.entries.windows(2) {
            assert!(w[1].incumbent_mae <= w[0].incumbent_mae);
        }
        assert_eq!(t1.best().unwrap().params, best);
        assert_eq!(
            t1.best().unwrap().cv_mae,
            t1.entries.last().unwrap().incumbent_mae
        );
    }
}
