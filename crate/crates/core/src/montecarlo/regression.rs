//! Shared-design least squares: one Gram factorization per time slice,
//! reused across every regression target of that slice.

use rayon::prelude::*;

use super::basis::RegressionBasis;
use crate::error::{Error, Result};

const ASSEMBLY_CHUNK: usize = 8192;

#[derive(Debug, Clone)]
pub struct FitDiagnostics {
    /// Crude condition estimate from the Cholesky diagonal.
    pub cond_estimate: f64,
    /// In-sample R^2 per target.
    pub r_squared: Vec<f64>,
}

/// Fitted values for each target, sharing one design matrix.
#[derive(Debug, Clone)]
pub struct StepFit {
    pub coeffs: Vec<Vec<f64>>,
    pub fitted: Vec<Vec<f64>>,
    pub diagnostics: FitDiagnostics,
}

struct Partial {
    gram: Vec<f64>,
    rhs: Vec<Vec<f64>>,
}

/// Regress every target on the basis features of the states `w` (row-major,
/// `dim` entries per path) at time `t`. Deterministic under any thread
/// count: paths are chunked at fixed boundaries and partial sums are
/// combined in chunk order.
pub fn fit_targets(
    basis: &RegressionBasis,
    w: &[f64],
    t: f64,
    targets: &[&[f64]],
) -> Result<StepFit> {
    let dim = basis.dim();
    let paths = w.len() / dim;
    basis.check_paths(t, paths)?;
    let b = basis.feature_count(t);
    let n_targets = targets.len();
    for target in targets {
        if target.len() != paths {
            return Err(Error::domain("regression target length mismatch"));
        }
    }

    let partials: Vec<Partial> = (0..paths.div_ceil(ASSEMBLY_CHUNK))
        .into_par_iter()
        .map(|chunk| {
            let lo = chunk * ASSEMBLY_CHUNK;
            let hi = (lo + ASSEMBLY_CHUNK).min(paths);
            let mut gram = vec![0.0; b * b];
            let mut rhs = vec![vec![0.0; b]; n_targets];
            let mut feats = vec![0.0; b];
            for p in lo..hi {
                basis.features_into(&w[p * dim..(p + 1) * dim], t, &mut feats);
                for i in 0..b {
                    let fi = feats[i];
                    if fi == 0.0 {
                        continue;
                    }
                    for j in i..b {
                        gram[i * b + j] += fi * feats[j];
                    }
                    for (tr, target) in targets.iter().enumerate() {
                        rhs[tr][i] += fi * target[p];
                    }
                }
            }
            Partial { gram, rhs }
        })
        .collect();

    let mut gram = vec![0.0; b * b];
    let mut rhs = vec![vec![0.0; b]; n_targets];
    for part in &partials {
        for (g, pg) in gram.iter_mut().zip(&part.gram) {
            *g += pg;
        }
        for (r, pr) in rhs.iter_mut().zip(&part.rhs) {
            for (a, pa) in r.iter_mut().zip(pr) {
                *a += pa;
            }
        }
    }
    for i in 0..b {
        for j in 0..i {
            gram[i * b + j] = gram[j * b + i];
        }
    }

    // Cholesky G = L L^T.
    let mut l = gram.clone();
    let trace: f64 = (0..b).map(|i| gram[i * b + i]).sum();
    let floor = trace.max(1.0) * 1e-13;
    for i in 0..b {
        for j in 0..=i {
            let mut s = l[i * b + j];
            for k in 0..j {
                s -= l[i * b + k] * l[j * b + k];
            }
            if i == j {
                if s <= floor {
                    return Err(Error::Basis(
                        "singular design matrix; lower the polynomial degree or bin count".into(),
                    ));
                }
                l[i * b + i] = s.sqrt();
            } else {
                l[i * b + j] = s / l[j * b + j];
            }
        }
    }
    let diag_max = (0..b).map(|i| l[i * b + i]).fold(f64::MIN, f64::max);
    let diag_min = (0..b).map(|i| l[i * b + i]).fold(f64::MAX, f64::min);
    let cond_estimate = (diag_max / diag_min) * (diag_max / diag_min);

    let mut coeffs = Vec::with_capacity(n_targets);
    for r in &rhs {
        // Forward then backward substitution.
        let mut x = r.clone();
        for i in 0..b {
            for k in 0..i {
                x[i] -= l[i * b + k] * x[k];
            }
            x[i] /= l[i * b + i];
        }
        for i in (0..b).rev() {
            for k in i + 1..b {
                x[i] -= l[k * b + i] * x[k];
            }
            x[i] /= l[i * b + i];
        }
        coeffs.push(x);
    }

    let fitted: Vec<Vec<f64>> = coeffs
        .par_iter()
        .map(|c| {
            let mut out = vec![0.0; paths];
            out.chunks_mut(ASSEMBLY_CHUNK)
                .enumerate()
                .for_each(|(chunk, slot)| {
                    let lo = chunk * ASSEMBLY_CHUNK;
                    let mut feats = vec![0.0; b];
                    for (o, s) in slot.iter_mut().enumerate() {
                        let p = lo + o;
                        basis.features_into(&w[p * dim..(p + 1) * dim], t, &mut feats);
                        *s = feats.iter().zip(c).map(|(a, b)| a * b).sum();
                    }
                });
            out
        })
        .collect();

    let r_squared = targets
        .iter()
        .zip(&fitted)
        .map(|(target, fit)| {
            let n = paths as f64;
            let mean = target.iter().sum::<f64>() / n;
            let sst: f64 = target.iter().map(|v| (v - mean) * (v - mean)).sum();
            let ssr: f64 = target.iter().zip(fit).map(|(v, f)| (v - f) * (v - f)).sum();
            if sst <= 0.0 {
                1.0
            } else {
                1.0 - ssr / sst
            }
        })
        .collect();

    Ok(StepFit {
        coeffs,
        fitted,
        diagnostics: FitDiagnostics {
            cond_estimate,
            r_squared,
        },
    })
}
