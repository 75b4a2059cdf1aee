//! Generators f and generating functions g, with declared growth tags and
//! the transformation combinators used to regularize them.
//!
//! The scalar generator f and the vector generating function g are tied by
//! f(s, y, z) = z . g(s, y, z). Engines only ever evaluate these objects
//! pointwise, so both are plain evaluators plus metadata: a growth tag that
//! is validated on probe grids, a continuity flag, and (for f) an optional
//! gradient-at-zero oracle.

mod catalog;
mod convert;
pub mod quadrature;
mod transform;

pub use catalog::generator_builtin;
pub use convert::{f_to_g, g_to_f, hat_generator};
pub use transform::{
    clamp_factor, clamp_y, inf_convolve, mollify, mollify_scalar, mollify_with_bound_override,
    sup_error_delta, truncate_nm, InfConvolutionSpec, MollifierSpec, Quadrature, TruncationSpec,
};

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Evaluation context: time, value pair (y, z) and the driver state W.
#[derive(Debug, Clone, Copy)]
pub struct GenCtx<'a> {
    pub t: f64,
    pub y: f64,
    pub z: &'a [f64],
    pub w: &'a [f64],
}

impl<'a> GenCtx<'a> {
    pub fn new(t: f64, y: f64, z: &'a [f64], w: &'a [f64]) -> Self {
        GenCtx { t, y, z, w }
    }
}

#[inline]
pub fn znorm(z: &[f64]) -> f64 {
    z.iter().map(|v| v * v).sum::<f64>().sqrt()
}

type BoundEval = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;

/// Nonnegative adapted bound process phi with a declared BMO budget.
#[derive(Clone)]
pub struct RandomBound {
    eval: BoundEval,
    budget: f64,
    label: String,
}

impl fmt::Debug for RandomBound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RandomBound")
            .field("label", &self.label)
            .field("budget", &self.budget)
            .finish()
    }
}

impl RandomBound {
    pub fn new(
        label: impl Into<String>,
        budget: f64,
        eval: impl Fn(f64, &[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        RandomBound {
            eval: Arc::new(eval),
            budget,
            label: label.into(),
        }
    }

    pub fn constant(value: f64, budget: f64) -> Self {
        Self::new(format!("const({value})"), budget, move |_, _| value)
    }

    /// phi(t, w) = amp * |tanh(w_1)|, bounded by amp.
    pub fn abs_tanh(amp: f64, budget: f64) -> Self {
        Self::new(format!("abs_tanh({amp})"), budget, move |_, w| {
            amp * w[0].tanh().abs()
        })
    }

    #[inline]
    pub fn value(&self, t: f64, w: &[f64]) -> f64 {
        (self.eval)(t, w)
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

/// Declared growth of a generating function g.
#[derive(Debug, Clone)]
pub enum GrowthG {
    /// |g| <= M everywhere.
    Bounded(f64),
    /// |g(s, ., z)| <= c (|z| + phi_s); phi = None means phi = 0.
    Linear { c: f64, phi: Option<RandomBound> },
}

/// Declared growth of a generator f.
#[derive(Debug, Clone)]
pub enum GrowthF {
    /// |f| <= M everywhere.
    Bounded(f64),
    /// |f(s, y, z)| <= c |z| (|z| + phi_s).
    Subquadratic { c: f64, phi: Option<RandomBound> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Continuity {
    Everywhere,
    /// Continuous at every (y, z) with z != 0; no claim on the z = 0 slice.
    OffZero,
}

type GEval = Arc<dyn Fn(&GenCtx<'_>, &mut [f64]) + Send + Sync>;
type FEval = Arc<dyn Fn(&GenCtx<'_>) -> f64 + Send + Sync>;
type Grad0 = Arc<dyn Fn(f64, f64, &[f64]) -> Vec<f64> + Send + Sync>;

/// Vector generating function g: (t, y, z, w) -> R^d.
#[derive(Clone)]
pub struct GeneratorG {
    eval: GEval,
    dim: usize,
    growth: GrowthG,
    continuity: Continuity,
    label: String,
}

impl fmt::Debug for GeneratorG {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GeneratorG")
            .field("label", &self.label)
            .field("dim", &self.dim)
            .field("growth", &self.growth)
            .field("continuity", &self.continuity)
            .finish()
    }
}

impl GeneratorG {
    pub fn new(
        label: impl Into<String>,
        dim: usize,
        growth: GrowthG,
        continuity: Continuity,
        eval: impl Fn(&GenCtx<'_>, &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        GeneratorG {
            eval: Arc::new(eval),
            dim,
            growth,
            continuity,
            label: label.into(),
        }
    }

    #[inline]
    pub fn eval_into(&self, ctx: &GenCtx<'_>, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim);
        (self.eval)(ctx, out)
    }

    pub fn eval(&self, ctx: &GenCtx<'_>) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(ctx, &mut out);
        out
    }

    /// Scalar shortcut for d = 1.
    #[inline]
    pub fn eval1(&self, t: f64, y: f64, z: f64, w: f64) -> f64 {
        let zs = [z];
        let ws = [w];
        let mut out = [0.0];
        (self.eval)(&GenCtx::new(t, y, &zs, &ws), &mut out);
        out[0]
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn growth(&self) -> &GrowthG {
        &self.growth
    }

    pub fn continuity(&self) -> Continuity {
        self.continuity
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn bounded_by(&self) -> Option<f64> {
        match &self.growth {
            GrowthG::Bounded(m) => Some(*m),
            GrowthG::Linear { .. } => None,
        }
    }

    pub fn random_bound(&self) -> Option<&RandomBound> {
        match &self.growth {
            GrowthG::Linear { phi, .. } => phi.as_ref(),
            GrowthG::Bounded(_) => None,
        }
    }
}

/// Scalar generator f: (t, y, z, w) -> R.
#[derive(Clone)]
pub struct GeneratorF {
    eval: FEval,
    dim: usize,
    growth: GrowthF,
    grad0: Option<Grad0>,
    label: String,
}

impl fmt::Debug for GeneratorF {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GeneratorF")
            .field("label", &self.label)
            .field("dim", &self.dim)
            .field("growth", &self.growth)
            .field("has_grad0", &self.grad0.is_some())
            .finish()
    }
}

impl GeneratorF {
    pub fn new(
        label: impl Into<String>,
        dim: usize,
        growth: GrowthF,
        eval: impl Fn(&GenCtx<'_>) -> f64 + Send + Sync + 'static,
    ) -> Self {
        GeneratorF {
            eval: Arc::new(eval),
            dim,
            growth,
            grad0: None,
            label: label.into(),
        }
    }

    /// Attach the gradient-at-zero oracle (t, y, w) -> grad_z f(., y, 0).
    pub fn with_grad0(
        mut self,
        grad0: impl Fn(f64, f64, &[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        self.grad0 = Some(Arc::new(grad0));
        self
    }

    #[inline]
    pub fn eval(&self, ctx: &GenCtx<'_>) -> f64 {
        (self.eval)(ctx)
    }

    #[inline]
    pub fn eval1(&self, t: f64, y: f64, z: f64, w: f64) -> f64 {
        let zs = [z];
        let ws = [w];
        (self.eval)(&GenCtx::new(t, y, &zs, &ws))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn growth(&self) -> &GrowthF {
        &self.growth
    }

    pub fn grad0(&self) -> Option<&Grad0> {
        self.grad0.as_ref()
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn bounded_by(&self) -> Option<f64> {
        match &self.growth {
            GrowthF::Bounded(m) => Some(*m),
            GrowthF::Subquadratic { .. } => None,
        }
    }

    /// Same evaluator under a different declared growth tag. The caller owns
    /// the claim; probe checks will hold it to account.
    pub fn retagged(&self, growth: GrowthF) -> GeneratorF {
        GeneratorF {
            growth,
            ..self.clone()
        }
    }
}

/// Probe grid over (y, z) used to validate growth tags and transformation
/// invariants: y spread over [-k_y, k_y], z on radial shells.
#[derive(Debug, Clone)]
pub struct ProbeGrid {
    pub points: Vec<(f64, Vec<f64>)>,
}

impl ProbeGrid {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Keep only probes with |z| >= min_znorm (compacts avoiding z = 0).
    pub fn away_from_zero(&self, min_znorm: f64) -> ProbeGrid {
        ProbeGrid {
            points: self
                .points
                .iter()
                .filter(|(_, z)| znorm(z) >= min_znorm)
                .cloned()
                .collect(),
        }
    }
}

/// Deterministic unit directions in R^d: +-axes, then normalized corners.
pub fn unit_directions(dim: usize, count: usize) -> Vec<Vec<f64>> {
    let mut dirs = Vec::new();
    for a in 0..dim {
        for sign in [1.0, -1.0] {
            let mut v = vec![0.0; dim];
            v[a] = sign;
            dirs.push(v);
        }
    }
    if dim > 1 {
        let corner = (dim as f64).sqrt().recip();
        for mask in 0..(1usize << dim) {
            let v: Vec<f64> = (0..dim)
                .map(|a| if mask >> a & 1 == 1 { -corner } else { corner })
                .collect();
            dirs.push(v);
        }
    }
    dirs.truncate(count.max(2 * dim));
    dirs
}

/// Default probe grid: 9 y-points in [-k_y, k_y] x shells {0, 0.1, 0.5, 1, 2, 5, 10}
/// x up to 8 directions.
pub fn default_probe_grid(dim: usize, k_y: f64) -> ProbeGrid {
    let ys: Vec<f64> = (0..9).map(|i| -k_y + 2.0 * k_y * i as f64 / 8.0).collect();
    let shells = [0.0, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0];
    let dirs = unit_directions(dim, 8);
    let mut points = Vec::new();
    for &y in &ys {
        points.push((y, vec![0.0; dim]));
        for &r in &shells[1..] {
            for dir in &dirs {
                points.push((y, dir.iter().map(|d| d * r).collect()));
            }
        }
    }
    ProbeGrid { points }
}

/// Contexts (t, w) used when a probe check needs the driver state.
pub fn default_probe_contexts(dim: usize, horizon: f64) -> Vec<(f64, Vec<f64>)> {
    vec![
        (0.0, vec![0.0; dim]),
        (0.5 * horizon, vec![1.0; dim]),
        (0.5 * horizon, vec![-1.0; dim]),
    ]
}

/// Validate a generating-function growth tag on a probe grid.
pub fn check_growth_g(
    g: &GeneratorG,
    grid: &ProbeGrid,
    contexts: &[(f64, Vec<f64>)],
) -> Result<()> {
    let tol = 1e-9;
    let mut out = vec![0.0; g.dim()];
    for (t, w) in contexts {
        for (y, z) in &grid.points {
            g.eval_into(&GenCtx::new(*t, *y, z, w), &mut out);
            let gn = znorm(&out);
            let ok = match &g.growth {
                GrowthG::Bounded(m) => gn <= *m + tol,
                GrowthG::Linear { c, phi } => {
                    let p = phi.as_ref().map_or(0.0, |p| p.value(*t, w));
                    gn <= c * (znorm(z) + p) + tol
                }
            };
            if !ok {
                return Err(Error::domain(format!(
                    "generator '{}' violates its growth tag at y={y}, |z|={} (|g|={gn})",
                    g.label(),
                    znorm(z)
                )));
            }
        }
    }
    Ok(())
}

/// Validate a generator growth tag on a probe grid.
pub fn check_growth_f(
    f: &GeneratorF,
    grid: &ProbeGrid,
    contexts: &[(f64, Vec<f64>)],
) -> Result<()> {
    let tol = 1e-9;
    for (t, w) in contexts {
        for (y, z) in &grid.points {
            let v = f.eval(&GenCtx::new(*t, *y, z, w));
            let ok = match &f.growth {
                GrowthF::Bounded(m) => v.abs() <= *m + tol,
                GrowthF::Subquadratic { c, phi } => {
                    let p = phi.as_ref().map_or(0.0, |p| p.value(*t, w));
                    v.abs() <= c * znorm(z) * (znorm(z) + p) + tol
                }
            };
            if !ok {
                return Err(Error::domain(format!(
                    "generator '{}' violates its growth tag at y={y}, |z|={}",
                    f.label(),
                    znorm(z)
                )));
            }
        }
    }
    Ok(())
}
