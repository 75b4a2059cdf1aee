//! Feature bases for conditional-expectation regression.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisFamily {
    /// All monomials in the standardized coordinates up to this total degree.
    Polynomial { degree: usize },
    /// Indicator cells of a uniform grid over [-3 sqrt(t), 3 sqrt(t)]^d.
    PiecewiseConstant { bins: usize },
}

#[derive(Debug, Clone)]
pub struct RegressionBasis {
    family: BasisFamily,
    dim: usize,
    /// Multi-indices for the polynomial family.
    exponents: Vec<Vec<usize>>,
}

fn multi_indices(dim: usize, degree: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![0; dim]];
    for _ in 0..degree {
        let mut extended = Vec::new();
        for idx in &out {
            let total: usize = idx.iter().sum();
            if total < degree {
                for a in 0..dim {
                    let mut next = idx.clone();
                    next[a] += 1;
                    extended.push(next);
                }
            }
        }
        for e in extended {
            if !out.contains(&e) {
                out.push(e);
            }
        }
    }
    out.sort();
    out
}

impl RegressionBasis {
    pub fn polynomial(dim: usize, degree: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::domain("basis dimension must be >= 1"));
        }
        Ok(RegressionBasis {
            family: BasisFamily::Polynomial { degree },
            dim,
            exponents: multi_indices(dim, degree),
        })
    }

    pub fn piecewise_constant(dim: usize, bins: usize) -> Result<Self> {
        if dim == 0 || bins == 0 {
            return Err(Error::domain(
                "piecewise basis needs dim >= 1 and bins >= 1",
            ));
        }
        Ok(RegressionBasis {
            family: BasisFamily::PiecewiseConstant { bins },
            dim,
            exponents: Vec::new(),
        })
    }

    /// Engine default: cubic polynomials for d <= 2, 16 bins per dimension
    /// beyond that.
    pub fn default_for(dim: usize) -> Result<Self> {
        if dim <= 2 {
            Self::polynomial(dim, 3)
        } else {
            Self::piecewise_constant(dim, 16)
        }
    }

    pub fn family(&self) -> BasisFamily {
        self.family
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of features at interior times; at t = 0 the state is
    /// degenerate and only the intercept survives.
    pub fn feature_count(&self, t: f64) -> usize {
        if t <= 0.0 {
            return 1;
        }
        match self.family {
            BasisFamily::Polynomial { .. } => self.exponents.len(),
            BasisFamily::PiecewiseConstant { bins } => bins.pow(self.dim as u32),
        }
    }

    /// Guard against overfit: feature count may not exceed N / 20.
    pub fn check_paths(&self, t: f64, paths: usize) -> Result<()> {
        let b = self.feature_count(t);
        if b > 1 && b * 20 > paths {
            return Err(Error::Basis(format!(
                "{b} features for {paths} paths exceeds the N/20 guard; lower the degree or bin count"
            )));
        }
        Ok(())
    }

    /// Fill `out` (length `feature_count(t)`) with the features of state `w`.
    pub fn features_into(&self, w: &[f64], t: f64, out: &mut [f64]) {
        if t <= 0.0 {
            out[0] = 1.0;
            return;
        }
        let scale = t.sqrt().recip();
        match self.family {
            BasisFamily::Polynomial { .. } => {
                for (slot, exps) in out.iter_mut().zip(&self.exponents) {
                    let mut v = 1.0;
                    for (a, &e) in exps.iter().enumerate() {
                        let x = w[a] * scale;
                        for _ in 0..e {
                            v *= x;
                        }
                    }
                    *slot = v;
                }
            }
            BasisFamily::PiecewiseConstant { bins } => {
                out.iter_mut().for_each(|v| *v = 0.0);
                let mut cell = 0usize;
                for a in 0..self.dim {
                    // Standardized state spans about [-3, 3].
                    let u = (w[a] * scale + 3.0) / 6.0;
                    let b = ((u * bins as f64) as isize).clamp(0, bins as isize - 1) as usize;
                    cell = cell * bins + b;
                }
                out[cell] = 1.0;
            }
        }
    }
}
