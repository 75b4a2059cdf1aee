//! Regularizing transformations: Gaussian mollification, y-clamping,
//! two-sided truncation and inf-convolution.

use std::sync::Arc;

use super::quadrature::gauss_hermite;
use super::{
    unit_directions, znorm, Continuity, GenCtx, GeneratorF, GeneratorG, GrowthF, GrowthG, ProbeGrid,
};
use crate::error::{Error, Result};
use crate::rng::CounterRng;

/// Quadrature backend for the mollification integral over R^{1+d}.
#[derive(Debug, Clone)]
pub enum Quadrature {
    GaussHermite { nodes: usize },
    MonteCarlo { samples: usize, seed: u64 },
}

/// Gaussian kernel scale and quadrature choice.
#[derive(Debug, Clone)]
pub struct MollifierSpec {
    pub epsilon: f64,
    pub quadrature: Quadrature,
}

impl MollifierSpec {
    pub fn gauss_hermite(epsilon: f64, nodes: usize) -> Self {
        MollifierSpec {
            epsilon,
            quadrature: Quadrature::GaussHermite { nodes },
        }
    }

    /// Default: 21 Gauss-Hermite nodes per dimension.
    pub fn with_epsilon(epsilon: f64) -> Self {
        Self::gauss_hermite(epsilon, 21)
    }
}

/// Offsets (dy, dz) with probability weights; weights sum to 1.
struct KernelTable {
    dy: Vec<f64>,
    dz: Vec<Vec<f64>>,
    weight: Vec<f64>,
}

/// Tensor quadrature of the centered Gaussian with variance eps per
/// coordinate over (y, z) in R^{1+d}. Falls back to antithetic Monte Carlo
/// when the tensor grid would be too large (1 + d > 4).
fn kernel_table(spec: &MollifierSpec, dim: usize) -> Result<KernelTable> {
    if !(spec.epsilon > 0.0) {
        return Err(Error::domain("mollifier epsilon must be > 0"));
    }
    let dims = dim + 1;
    let scale = (2.0 * spec.epsilon).sqrt();
    match &spec.quadrature {
        Quadrature::GaussHermite { nodes } if dims <= 4 => {
            let q = gauss_hermite(*nodes)?;
            let w = q.normalized_weights();
            let n = q.nodes.len();
            let total = n.pow(dims as u32);
            let mut table = KernelTable {
                dy: Vec::with_capacity(total),
                dz: Vec::with_capacity(total),
                weight: Vec::with_capacity(total),
            };
            for flat in 0..total {
                let mut rest = flat;
                let mut weight = 1.0;
                let mut offs = [0.0; 4];
                for o in offs.iter_mut().take(dims) {
                    let idx = rest % n;
                    rest /= n;
                    weight *= w[idx];
                    *o = scale * q.nodes[idx];
                }
                table.dy.push(offs[0]);
                table.dz.push(offs[1..dims].to_vec());
                table.weight.push(weight);
            }
            Ok(table)
        }
        Quadrature::GaussHermite { .. } => {
            // d + 1 > 4: tensor grids explode, use the Monte Carlo fallback.
            kernel_table(
                &MollifierSpec {
                    epsilon: spec.epsilon,
                    quadrature: Quadrature::MonteCarlo {
                        samples: 4096,
                        seed: 0x6d6f6c6c,
                    },
                },
                dim,
            )
        }
        Quadrature::MonteCarlo { samples, seed } => {
            let n = (*samples).max(2) & !1usize; // even, for antithetic pairs
            let rng = CounterRng::new(*seed);
            let mut table = KernelTable {
                dy: Vec::with_capacity(n),
                dz: Vec::with_capacity(n),
                weight: vec![1.0 / n as f64; n],
            };
            for s in 0..n / 2 {
                let mut offs = vec![0.0; dims];
                for (a, o) in offs.iter_mut().enumerate() {
                    *o = scale * rng.normal((s * dims + a) as u64);
                }
                table.dy.push(offs[0]);
                table.dz.push(offs[1..].to_vec());
                // Antithetic mirror keeps odd symmetry exact.
                table.dy.push(-offs[0]);
                table.dz.push(offs[1..].iter().map(|v| -v).collect());
            }
            Ok(table)
        }
    }
}

fn mollify_inner(g: &GeneratorG, spec: &MollifierSpec, growth: GrowthG) -> Result<GeneratorG> {
    let dim = g.dim();
    let table = Arc::new(kernel_table(spec, dim)?);
    let inner = g.clone();
    let label = format!("mollify({}, eps={})", g.label(), spec.epsilon);
    Ok(GeneratorG::new(
        label,
        dim,
        growth,
        Continuity::Everywhere,
        move |ctx, out| {
            out.iter_mut().for_each(|v| *v = 0.0);
            let mut shifted = vec![0.0; dim];
            let mut val = vec![0.0; dim];
            for i in 0..table.weight.len() {
                for (a, s) in shifted.iter_mut().enumerate() {
                    *s = ctx.z[a] - table.dz[i][a];
                }
                let sub = GenCtx::new(ctx.t, ctx.y - table.dy[i], &shifted, ctx.w);
                inner.eval_into(&sub, &mut val);
                let wt = table.weight[i];
                for (o, v) in out.iter_mut().zip(&val) {
                    *o += wt * v;
                }
            }
        },
    ))
}

/// Gaussian mollification of a bounded generating function. The smoothed
/// function keeps the same bound; unbounded inputs are rejected because the
/// convolution integral need not exist for them.
pub fn mollify(g: &GeneratorG, spec: &MollifierSpec) -> Result<GeneratorG> {
    match g.growth() {
        GrowthG::Bounded(m) => mollify_inner(g, spec, GrowthG::Bounded(*m)),
        GrowthG::Linear { .. } => Err(Error::domain(format!(
            "mollify requires a bounded generating function, '{}' is tagged linear",
            g.label()
        ))),
    }
}

/// Test-only escape hatch: mollify an unbounded g, keeping its growth tag.
/// Quadrature only ever probes a compact neighbourhood, which is why this is
/// acceptable in controlled tests.
pub fn mollify_with_bound_override(g: &GeneratorG, spec: &MollifierSpec) -> Result<GeneratorG> {
    mollify_inner(g, spec, g.growth().clone())
}

/// Kernel-smooth a scalar generator with the same Gaussian kernel.
pub fn mollify_scalar(f: &GeneratorF, spec: &MollifierSpec) -> Result<GeneratorF> {
    let dim = f.dim();
    let table = Arc::new(kernel_table(spec, dim)?);
    let inner = f.clone();
    let label = format!("mollify({}, eps={})", f.label(), spec.epsilon);
    Ok(GeneratorF::new(
        label,
        dim,
        inner.growth().clone(),
        move |ctx| {
            let mut shifted = vec![0.0; dim];
            let mut acc = 0.0;
            for i in 0..table.weight.len() {
                for (a, s) in shifted.iter_mut().enumerate() {
                    *s = ctx.z[a] - table.dz[i][a];
                }
                let sub = GenCtx::new(ctx.t, ctx.y - table.dy[i], &shifted, ctx.w);
                acc += table.weight[i] * inner.eval(&sub);
            }
            acc
        },
    ))
}

/// Grid maximum of |f_eps - f| over the probe points (a lower bound of the
/// true sup; refinement can only increase it).
pub fn sup_error_delta(f: &GeneratorF, f_eps: &GeneratorF, grid: &ProbeGrid) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::domain("sup_error_delta needs a nonempty probe grid"));
    }
    let w = vec![0.0; f.dim()];
    let mut sup = 0.0f64;
    for (y, z) in &grid.points {
        let ctx = GenCtx::new(0.0, *y, z, &w);
        sup = sup.max((f_eps.eval(&ctx) - f.eval(&ctx)).abs());
    }
    Ok(sup)
}

/// Freeze the y-argument outside [-k_y, k_y].
pub fn clamp_y(g: &GeneratorG, k_y: f64) -> Result<GeneratorG> {
    if !(k_y > 0.0) {
        return Err(Error::domain("clamp_y needs k_y > 0"));
    }
    let inner = g.clone();
    Ok(GeneratorG::new(
        format!("clamp_y({}, {k_y})", g.label()),
        g.dim(),
        g.growth().clone(),
        g.continuity(),
        move |ctx, out| {
            let clamped = GenCtx::new(ctx.t, ctx.y.clamp(-k_y, k_y), ctx.z, ctx.w);
            inner.eval_into(&clamped, out)
        },
    ))
}

/// Two-sided truncation levels (lower -n, upper m).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TruncationSpec {
    pub n: u32,
    pub m: u32,
}

impl TruncationSpec {
    pub fn new(n: u32, m: u32) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::domain("truncation levels must be >= 1"));
        }
        Ok(TruncationSpec { n, m })
    }
}

/// The truncated pair
///   f_nm = (-n) v (|z| . ((-n) v (f / |z|) ^ m)) ^ m,
///   g_nm = z / |z|^2 1_{z != 0} f_nm,
/// pointwise non-decreasing in m and non-increasing in n, with
/// |g_nm| <= max(n, m).
pub fn truncate_nm(f: &GeneratorF, spec: TruncationSpec) -> (GeneratorF, GeneratorG) {
    let lo = -(spec.n as f64);
    let hi = spec.m as f64;
    let inner = f.clone();
    let f_nm = GeneratorF::new(
        format!("trunc({}, n={}, m={})", f.label(), spec.n, spec.m),
        f.dim(),
        GrowthF::Bounded(lo.abs().max(hi)),
        move |ctx| {
            let zn = znorm(ctx.z);
            if zn == 0.0 {
                return 0.0;
            }
            let ratio = (inner.eval(ctx) / zn).clamp(lo, hi);
            (zn * ratio).clamp(lo, hi)
        },
    );
    let f_for_g = f_nm.clone();
    let g_nm = GeneratorG::new(
        format!("trunc-g({}, n={}, m={})", f.label(), spec.n, spec.m),
        f.dim(),
        GrowthG::Bounded(lo.abs().max(hi)),
        Continuity::OffZero,
        move |ctx, out| {
            let n2: f64 = ctx.z.iter().map(|v| v * v).sum();
            if n2 == 0.0 {
                out.iter_mut().for_each(|v| *v = 0.0);
                return;
            }
            let scale = f_for_g.eval(ctx) / n2;
            for (o, zi) in out.iter_mut().zip(ctx.z) {
                *o = zi * scale;
            }
        },
    );
    (f_nm, g_nm)
}

/// Penalty clamp factor n / (0 v (t - n) ^ 1): infinity on [0, n],
/// n / (t - n) on (n, n + 1], constant n beyond.
pub fn clamp_factor(n: u32, t: f64) -> f64 {
    let nf = n as f64;
    if t <= nf {
        f64::INFINITY
    } else {
        nf / (t - nf).min(1.0)
    }
}

/// Inf-convolution search specification: penalty index n, the y-box [-k_y, k_y]
/// of the inner infimum, and the finite candidate layout (radial shells around
/// the evaluation point).
#[derive(Debug, Clone)]
pub struct InfConvolutionSpec {
    pub n: u32,
    pub k_y: f64,
    pub radii: Vec<f64>,
    pub directions: usize,
}

impl InfConvolutionSpec {
    pub fn new(n: u32, k_y: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::domain("inf-convolution index n must be >= 1"));
        }
        if !(k_y > 0.0) {
            return Err(Error::domain("inf-convolution needs k_y > 0"));
        }
        Ok(InfConvolutionSpec {
            n,
            k_y,
            // Shared across the whole family: identical candidate sets keep
            // the ordering f_n <= f_{n+1} exact even after discretization.
            radii: vec![0.25, 0.5, 1.0, 2.0, 4.0, 8.0],
            directions: 8,
        })
    }
}

/// Inf-convolution minorant
///   f_n(y, z) = inf over the candidate set of f(y^, z^) + phi_n(|z|) |(y,z)-(y^,z^)|,
/// with the conventions inf/0 * 0 = 0 (the anchor survives) and
/// inf/0 * r = infinity. The infimum runs over a finite candidate set (the
/// anchor plus radial shells, y-part clamped into [-k_y, k_y]), so the value
/// is an upper bound of the true infimum; boundedness, equality on |z| <= n
/// and the family ordering all survive the discretization exactly.
/// The y-argument is clamped into [-k_y, k_y] up front, matching the domain
/// restriction of the construction.
pub fn inf_convolve(f: &GeneratorF, spec: &InfConvolutionSpec) -> Result<GeneratorF> {
    let m_bound = match f.growth() {
        GrowthF::Bounded(m) => *m,
        GrowthF::Subquadratic { .. } => {
            return Err(Error::domain(format!(
                "inf_convolve requires a bounded generator, '{}' is tagged subquadratic",
                f.label()
            )))
        }
    };
    let dim = f.dim();
    let n = spec.n;
    let k_y = spec.k_y;
    let offsets: Vec<(f64, Vec<f64>)> = {
        let dirs = unit_directions(dim + 1, spec.directions);
        let mut offs = Vec::with_capacity(spec.radii.len() * dirs.len());
        for &r in &spec.radii {
            for dir in &dirs {
                offs.push((r * dir[0], dir[1..].iter().map(|v| r * v).collect()));
            }
        }
        offs
    };
    let inner = f.clone();
    Ok(GeneratorF::new(
        format!("infconv({}, n={n})", f.label()),
        dim,
        GrowthF::Bounded(m_bound),
        move |ctx| {
            let y0 = ctx.y.clamp(-k_y, k_y);
            let anchor = inner.eval(&GenCtx::new(ctx.t, y0, ctx.z, ctx.w));
            let zn = znorm(ctx.z);
            let rate = clamp_factor(n, zn);
            if rate.is_infinite() {
                // Every displaced candidate costs infinity; only the anchor
                // survives, so f_n = f on the closed ball |z| <= n.
                return anchor;
            }
            let mut best = anchor;
            let mut cz = vec![0.0; dim];
            for (dy, dz) in &offsets {
                let cy = (y0 + dy).clamp(-k_y, k_y);
                for (a, c) in cz.iter_mut().enumerate() {
                    *c = ctx.z[a] + dz[a];
                }
                let dy_eff = cy - y0;
                let dist2: f64 = dy_eff * dy_eff
                    + cz.iter()
                        .zip(ctx.z)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>();
                if dist2 == 0.0 {
                    continue;
                }
                let cand = inner.eval(&GenCtx::new(ctx.t, cy, &cz, ctx.w)) + rate * dist2.sqrt();
                if cand < best {
                    best = cand;
                }
            }
            best
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{default_probe_grid, GrowthG};

    fn bounded_f(
        label: &str,
        m: f64,
        f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> GeneratorF {
        GeneratorF::new(label, 1, GrowthF::Bounded(m), move |ctx| f(ctx.y, ctx.z[0]))
    }

    fn half_square_probe_bounded(m: f64) -> GeneratorF {
        // 0.5 z^2 declared bounded for probe-limited tests.
        bounded_f("half z^2", m, |_, z| 0.5 * z * z)
    }

    #[test]
    fn mollified_constant_is_constant() {
        let g = GeneratorG::new(
            "const",
            1,
            GrowthG::Bounded(0.7),
            Continuity::Everywhere,
            |_, out| {
                out[0] = 0.7;
            },
        );
        let gm = mollify(&g, &MollifierSpec::with_epsilon(0.3)).unwrap();
        for z in [-2.0, 0.0, 1.5] {
            assert!((gm.eval1(0.0, 0.0, z, 0.0) - 0.7).abs() < 1e-13);
        }
    }

    #[test]
    fn mollified_identity_under_override() {
        // Test-only override: the identity is not bounded, but the kernel has
        // mean zero so smoothing leaves it fixed.
        let g = GeneratorG::new(
            "id",
            1,
            GrowthG::Linear { c: 1.0, phi: None },
            Continuity::Everywhere,
            |ctx, out| {
                out[0] = ctx.z[0];
            },
        );
        assert!(mollify(&g, &MollifierSpec::with_epsilon(0.1)).is_err());
        let gm = mollify_with_bound_override(&g, &MollifierSpec::with_epsilon(0.1)).unwrap();
        for z in [-1.0, 0.0, 0.4, 2.0] {
            assert!((gm.eval1(0.0, 0.0, z, 0.0) - z).abs() < 1e-8, "z={z}");
        }
    }

    #[test]
    fn mollified_sign_vanishes_at_zero() {
        let g = GeneratorG::new(
            "sign",
            1,
            GrowthG::Bounded(1.0),
            Continuity::OffZero,
            |ctx, out| {
                out[0] = if ctx.z[0] > 0.0 {
                    1.0
                } else if ctx.z[0] < 0.0 {
                    -1.0
                } else {
                    0.0
                };
            },
        );
        for quad in [
            Quadrature::GaussHermite { nodes: 21 },
            Quadrature::MonteCarlo {
                samples: 2000,
                seed: 3,
            },
        ] {
            let gm = mollify(
                &g,
                &MollifierSpec {
                    epsilon: 0.05,
                    quadrature: quad.clone(),
                },
            )
            .unwrap();
            let at_zero = gm.eval1(0.0, 0.0, 0.0, 0.0);
            assert!(
                at_zero.abs() < 1e-13,
                "{quad:?}: mollified sign at 0 = {at_zero:e}"
            );
        }
    }

    #[test]
    fn mollification_keeps_bound_and_is_lipschitz_on_probes() {
        let g = GeneratorG::new(
            "sign",
            1,
            GrowthG::Bounded(1.0),
            Continuity::OffZero,
            |ctx, out| {
                out[0] = ctx.z[0].signum() * if ctx.z[0] == 0.0 { 0.0 } else { 1.0 };
            },
        );
        let eps = 0.04;
        let gm = mollify(&g, &MollifierSpec::with_epsilon(eps)).unwrap();
        // |grad of the smoothed g| <= M sqrt(2 (d+1) / (pi eps)). The
        // quadrature object tracks the smooth mollification at probe
        // resolution (it is a finite sum of shifted copies below that).
        let lip = (2.0 * 2.0 / (std::f64::consts::PI * eps)).sqrt();
        let h = 0.25;
        let mut z = -2.0;
        while z < 2.0 {
            let a = gm.eval1(0.0, 0.0, z, 0.0);
            let b = gm.eval1(0.0, 0.0, z + h, 0.0);
            assert!(a.abs() <= 1.0 + 1e-12);
            assert!((b - a).abs() <= lip * h * (1.0 + 1e-6), "slope at {z}");
            z += h;
        }
    }

    #[test]
    fn sup_error_delta_trivials() {
        let f0 = bounded_f("zero", 0.0, |_, _| 0.0);
        let f3 = bounded_f("0.3", 0.3, |_, _| 0.3);
        let grid = default_probe_grid(1, 1.0);
        assert_eq!(sup_error_delta(&f0, &f0, &grid).unwrap(), 0.0);
        assert!((sup_error_delta(&f0, &f3, &grid).unwrap() - 0.3).abs() < 1e-15);
        let empty = ProbeGrid { points: vec![] };
        assert!(sup_error_delta(&f0, &f3, &empty).is_err());
    }

    #[test]
    fn mollified_quadratic_matches_closed_form() {
        // Gaussian smoothing of 0.5 z^2 adds exactly eps/2; Gauss-Hermite
        // integrates the quadratic exactly.
        let eps = 0.01;
        let f = half_square_probe_bounded(4.5);
        let fm = mollify_scalar(&f, &MollifierSpec::with_epsilon(eps)).unwrap();
        let mut z = -3.0;
        while z <= 3.0 {
            let want = 0.5 * z * z + 0.5 * eps;
            assert!((fm.eval1(0.0, 0.0, z, 0.0) - want).abs() < 1e-8, "z={z}");
            z += 0.25;
        }
        // Grid sup distance to the original stays within the stated budget.
        let grid = ProbeGrid {
            points: (0..61)
                .map(|i| (0.0, vec![-3.0 + 0.1 * i as f64]))
                .collect(),
        };
        let delta = sup_error_delta(&f, &fm, &grid).unwrap();
        assert!(delta <= 0.02, "delta={delta}");
        assert!((delta - 0.5 * eps).abs() < 1e-8);
    }

    #[test]
    fn mollification_handles_higher_dimensions() {
        // d = 2 exercises the 3-dimensional tensor grid; d = 4 exceeds the
        // tensor budget and falls back to antithetic Monte Carlo. Constants
        // are fixed points of both quadratures.
        for d in [2usize, 4] {
            let g = GeneratorG::new("const-d", d, GrowthG::Bounded(0.7), Continuity::Everywhere, |_, out| {
                out.iter_mut().for_each(|v| *v = 0.0);
                out[0] = 0.7;
            });
            let gm = mollify(&g, &MollifierSpec::gauss_hermite(0.2, 9)).unwrap();
            let z = vec![0.3; d];
            let w = vec![0.0; d];
            let vals = gm.eval(&GenCtx::new(0.0, 0.1, &z, &w));
            assert!((vals[0] - 0.7).abs() < 1e-12, "d={d}: {vals:?}");
            for v in &vals[1..] {
                assert!(v.abs() < 1e-12);
            }
        }
        // Odd symmetry survives the Monte Carlo fallback in d = 4.
        let sign4 = GeneratorG::new("sign4", 4, GrowthG::Bounded(1.0), Continuity::OffZero, |ctx, out| {
            let n = znorm(ctx.z);
            out.iter_mut().enumerate().for_each(|(j, v)| {
                *v = if n == 0.0 { 0.0 } else { ctx.z[j] / n };
            });
        });
        let gm = mollify(&sign4, &MollifierSpec::with_epsilon(0.1)).unwrap();
        let zeros = vec![0.0; 4];
        let vals = gm.eval(&GenCtx::new(0.0, 0.0, &zeros, &zeros));
        for v in &vals {
            assert!(v.abs() < 1e-12, "{vals:?}");
        }
    }

    #[test]
    fn smoothing_error_shrinks_with_the_kernel_scale() {
        // f = z . g for the radial-sign field; z times the smoothed g must
        // approach f uniformly on the probe window as eps drops.
        let g = GeneratorG::new(
            "sign3",
            1,
            GrowthG::Bounded(0.3),
            Continuity::OffZero,
            |ctx, out| {
                out[0] = 0.3
                    * if ctx.z[0] > 0.0 {
                        1.0
                    } else if ctx.z[0] < 0.0 {
                        -1.0
                    } else {
                        0.0
                    };
            },
        );
        let f = crate::generators::g_to_f(&g);
        let grid = ProbeGrid {
            points: (0..61)
                .map(|i| (0.0, vec![-3.0 + 0.1 * i as f64]))
                .collect(),
        };
        let mut deltas = Vec::new();
        for eps in [1.0, 0.1, 0.01] {
            let gm = mollify(&g, &MollifierSpec::with_epsilon(eps)).unwrap();
            let f_eps = crate::generators::g_to_f(&gm);
            deltas.push(sup_error_delta(&f, &f_eps, &grid).unwrap());
        }
        assert!(deltas[0] > deltas[1] && deltas[1] > deltas[2], "{deltas:?}");
        assert!(deltas[2] < 0.05, "{deltas:?}");
    }

    #[test]
    fn clamp_y_freezes_outside_box() {
        let g = GeneratorG::new(
            "y e1",
            1,
            GrowthG::Linear { c: 10.0, phi: None },
            Continuity::Everywhere,
            |ctx, out| {
                out[0] = ctx.y;
            },
        );
        let gc = clamp_y(&g, 1.0).unwrap();
        assert_eq!(gc.eval1(0.0, 5.0, 0.3, 0.0), 1.0);
        assert_eq!(gc.eval1(0.0, -7.0, 0.3, 0.0), -1.0);
        assert_eq!(gc.eval1(0.0, 0.4, 0.3, 0.0), 0.4);
        assert!(clamp_y(&g, 0.0).is_err());
    }

    #[test]
    fn truncation_examples() {
        let f = half_square_probe_bounded(1e9);
        let (f11, g11) = truncate_nm(&f, TruncationSpec::new(1, 1).unwrap());
        assert_eq!(f11.eval1(0.0, 0.0, 4.0, 0.0), 1.0);
        assert_eq!(f11.eval1(0.0, 0.0, 0.0, 0.0), 0.0);
        assert_eq!(g11.eval1(0.0, 0.0, 0.0, 0.0), 0.0);

        let fneg = bounded_f("-z^2", 1e9, |_, z| -z * z);
        let (f25, _) = truncate_nm(&fneg, TruncationSpec::new(2, 5).unwrap());
        assert_eq!(f25.eval1(0.0, 0.0, 1.0, 0.0), -1.0);
    }

    #[test]
    fn truncation_is_monotone_in_levels() {
        let f = half_square_probe_bounded(1e9);
        let probes = [-6.0, -2.5, -0.4, 0.0, 0.7, 3.0, 9.0];
        for n in 1..4u32 {
            for m in 1..4u32 {
                let (fnm, gnm) = truncate_nm(&f, TruncationSpec::new(n, m).unwrap());
                let (fnm1, _) = truncate_nm(&f, TruncationSpec::new(n, m + 1).unwrap());
                let (fn1m, _) = truncate_nm(&f, TruncationSpec::new(n + 1, m).unwrap());
                for &z in &probes {
                    let a = fnm.eval1(0.0, 0.0, z, 0.0);
                    assert!(a <= fnm1.eval1(0.0, 0.0, z, 0.0));
                    assert!(fn1m.eval1(0.0, 0.0, z, 0.0) <= a);
                    let gv = gnm.eval1(0.0, 0.0, z, 0.0);
                    assert!(gv.abs() <= (n.max(m)) as f64 + 1e-12);
                }
            }
        }
    }

    #[test]
    fn clamp_factor_piecewise_values() {
        assert!(clamp_factor(1, 0.5).is_infinite());
        assert_eq!(clamp_factor(1, 1.5), 2.0);
        assert_eq!(clamp_factor(1, 3.0), 1.0);
        assert!(clamp_factor(3, 3.0).is_infinite());
        assert_eq!(clamp_factor(3, 3.5), 6.0);
        assert_eq!(clamp_factor(3, 10.0), 3.0);
    }

    #[test]
    fn inf_convolution_equals_f_inside_ball() {
        let f = half_square_probe_bounded(4.5);
        let spec = InfConvolutionSpec::new(3, 1.0).unwrap();
        let f3 = inf_convolve(&f, &spec).unwrap();
        assert_eq!(f3.eval1(0.0, 0.0, 2.0, 0.0), 2.0);
        assert_eq!(f3.eval1(0.0, 0.5, -3.0, 0.0), f.eval1(0.0, 0.5, -3.0, 0.0));
    }

    #[test]
    fn inf_convolution_bounded_and_below_f() {
        let m = 1.0;
        let f = bounded_f("tanh z^2", m, |_, z| (z * z).tanh());
        let spec = InfConvolutionSpec::new(1, 1.0).unwrap();
        let f1 = inf_convolve(&f, &spec).unwrap();
        for z in [-8.0, -3.0, 2.0, 5.0, 12.0] {
            let v = f1.eval1(0.0, 0.0, z, 0.0);
            assert!(v.abs() <= m + 1e-12);
            assert!(v <= f.eval1(0.0, 0.0, z, 0.0) + 1e-15);
        }
    }

    #[test]
    fn inf_convolution_family_is_monotone() {
        let f = bounded_f("sin z", 1.0, |y, z| (z + 0.3 * y).sin());
        let probes: Vec<(f64, f64)> = (0..40)
            .flat_map(|i| {
                let z = -10.0 + 0.5 * i as f64;
                [(-0.8, z), (0.0, z), (0.9, z)]
            })
            .collect();
        let family: Vec<GeneratorF> = (1..5)
            .map(|n| inf_convolve(&f, &InfConvolutionSpec::new(n, 1.0).unwrap()).unwrap())
            .collect();
        for &(y, z) in &probes {
            let base = f.eval1(0.0, y, z, 0.0);
            for w in family.windows(2) {
                let a = w[0].eval1(0.0, y, z, 0.0);
                let b = w[1].eval1(0.0, y, z, 0.0);
                assert!(a <= b, "f_n > f_n+1 at y={y} z={z}");
                assert!(b <= base, "f_n+1 > f at y={y} z={z}");
            }
        }
    }

    #[test]
    fn inf_convolution_rejects_untagged_unbounded() {
        let f = GeneratorF::new(
            "quad",
            1,
            GrowthF::Subquadratic { c: 0.5, phi: None },
            |ctx| 0.5 * ctx.z[0] * ctx.z[0],
        );
        assert!(inf_convolve(&f, &InfConvolutionSpec::new(2, 1.0).unwrap()).is_err());
    }
}
