//! Conversions between the generator f and the generating function g.
//!
//! f(z) = z . g(z) admits a continuous g exactly when f(., y, 0) = 0 and f is
//! differentiable in z at 0; then
//!     g(z) = z / |z|^2 (f(z) - z . grad) + grad,   g(0) = grad,
//! with grad = grad_z f(., y, 0). Dropping the differentiability requirement
//! gives the hat form z / |z|^2 1_{z != 0} f, which is 0 at z = 0 and only
//! continuous off z = 0.

use super::{Continuity, GenCtx, GeneratorF, GeneratorG, GrowthF, GrowthG, RandomBound};
use crate::error::{Error, Result};

const FD_STEP: f64 = 1e-5;
const DIRECTIONAL_TOL: f64 = 1e-3;
const ZERO_SLICE_TOL: f64 = 1e-10;

fn linear_tag_from_f(growth: &GrowthF) -> GrowthG {
    match growth {
        GrowthF::Bounded(m) => GrowthG::Linear {
            c: m.max(1.0),
            phi: Some(RandomBound::constant(1.0, 1.0)),
        },
        GrowthF::Subquadratic { c, phi } => GrowthG::Linear {
            c: *c,
            phi: phi.clone(),
        },
    }
}

fn subquadratic_tag_from_g(growth: &GrowthG) -> GrowthF {
    match growth {
        GrowthG::Bounded(m) => GrowthF::Subquadratic {
            c: m.max(1.0),
            phi: Some(RandomBound::constant(1.0, 1.0)),
        },
        GrowthG::Linear { c, phi } => GrowthF::Subquadratic {
            c: *c,
            phi: phi.clone(),
        },
    }
}

/// f(s, y, z) := z . g(s, y, z). The zero slice f(., y, 0) = 0 is exact, and
/// the gradient-at-zero oracle is g(., y, 0) itself.
pub fn g_to_f(g: &GeneratorG) -> GeneratorF {
    let dim = g.dim();
    let growth = subquadratic_tag_from_g(g.growth());
    let g_eval = g.clone();
    let g_grad = g.clone();
    GeneratorF::new(format!("z.{}", g.label()), dim, growth, move |ctx| {
        if ctx.z.iter().all(|&v| v == 0.0) {
            return 0.0;
        }
        let vals = g_eval.eval(ctx);
        ctx.z.iter().zip(&vals).map(|(a, b)| a * b).sum()
    })
    .with_grad0(move |t, y, w| {
        let zeros = vec![0.0; dim];
        g_grad.eval(&GenCtx::new(t, y, &zeros, w))
    })
}

/// Gradient of f in z at z = 0, via the oracle when present, otherwise by
/// central differences with a directional-agreement differentiability check.
fn gradient_at_zero(f: &GeneratorF, t: f64, y: f64, w: &[f64]) -> Result<Vec<f64>> {
    let dim = f.dim();
    if let Some(oracle) = f.grad0() {
        return Ok(oracle(t, y, w));
    }
    let mut grad = vec![0.0; dim];
    let mut zp = vec![0.0; dim];
    for a in 0..dim {
        zp.iter_mut().for_each(|v| *v = 0.0);
        zp[a] = FD_STEP;
        let up = f.eval(&GenCtx::new(t, y, &zp, w));
        zp[a] = -FD_STEP;
        let dn = f.eval(&GenCtx::new(t, y, &zp, w));
        grad[a] = (up - dn) / (2.0 * FD_STEP);
    }
    // Differentiability at 0: one-sided slopes along every direction must
    // both match u . grad. Central differences alone would average away a
    // kink like f = |z|.
    let zeros = vec![0.0; dim];
    let f0 = f.eval(&GenCtx::new(t, y, &zeros, w));
    for dir in super::unit_directions(dim, 8) {
        let expected: f64 = dir.iter().zip(&grad).map(|(a, b)| a * b).sum();
        for sign in [1.0, -1.0] {
            let zs: Vec<f64> = dir.iter().map(|d| sign * d * FD_STEP).collect();
            let slope = (f.eval(&GenCtx::new(t, y, &zs, w)) - f0) / (sign * FD_STEP);
            if (slope - expected).abs() > DIRECTIONAL_TOL {
                return Err(Error::NotRepresentable(format!(
                    "'{}' is not differentiable at z = 0 (one-sided slope {slope:.6} vs {expected:.6})",
                    f.label()
                )));
            }
        }
    }
    Ok(grad)
}

/// Continuous g with z . g = f. Fails when f(., y, 0) != 0 or f has no
/// z-derivative at 0; both conditions are necessary.
pub fn f_to_g(f: &GeneratorF) -> Result<GeneratorG> {
    let dim = f.dim();
    // Zero-slice check on a few probe instances.
    for (t, w) in super::default_probe_contexts(dim, 1.0) {
        for y in [-1.0, 0.0, 0.7] {
            let zeros = vec![0.0; dim];
            let v = f.eval(&GenCtx::new(t, y, &zeros, &w));
            if v.abs() > ZERO_SLICE_TOL {
                return Err(Error::NotRepresentable(format!(
                    "'{}' has f(., y, 0) = {v:.3e} != 0",
                    f.label()
                )));
            }
            gradient_at_zero(f, t, y, &w)?;
        }
    }
    let growth = linear_tag_from_f(f.growth());
    let f_inner = f.clone();
    Ok(GeneratorG::new(
        format!("{}/z", f.label()),
        dim,
        growth,
        Continuity::Everywhere,
        move |ctx, out| {
            let grad = gradient_at_zero(&f_inner, ctx.t, ctx.y, ctx.w)
                .expect("differentiability verified at construction");
            let n2: f64 = ctx.z.iter().map(|v| v * v).sum();
            if n2 == 0.0 {
                out.copy_from_slice(&grad);
                return;
            }
            let fv = f_inner.eval(ctx);
            let zdotg: f64 = ctx.z.iter().zip(&grad).map(|(a, b)| a * b).sum();
            let scale = (fv - zdotg) / n2;
            for (o, (zi, gi)) in out.iter_mut().zip(ctx.z.iter().zip(&grad)) {
                *o = zi * scale + gi;
            }
        },
    ))
}

/// The hat form: g(z) = z / |z|^2 1_{z != 0} f(z), zero at z = 0.
pub fn hat_generator(f: &GeneratorF) -> GeneratorG {
    let growth = linear_tag_from_f(f.growth());
    let f_inner = f.clone();
    GeneratorG::new(
        format!("hat({})", f.label()),
        f.dim(),
        growth,
        Continuity::OffZero,
        move |ctx, out| {
            let n2: f64 = ctx.z.iter().map(|v| v * v).sum();
            if n2 == 0.0 {
                out.iter_mut().for_each(|v| *v = 0.0);
                return;
            }
            let scale = f_inner.eval(ctx) / n2;
            for (o, zi) in out.iter_mut().zip(ctx.z) {
                *o = zi * scale;
            }
        },
    )
}
