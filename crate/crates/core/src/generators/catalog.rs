//! Named generating functions accepted in configuration files.

use std::collections::BTreeMap;

use super::{znorm, Continuity, GeneratorG, GrowthG, RandomBound};
use crate::error::{Error, Result};

/// Catalog: `zero`, `constant_b` (param `b`), `half_z`, `sign_c` (param `c`),
/// `random_bound_linear` (param `a`, needs an attached phi process),
/// `y_coupled` (params `b`, `kappa`, `clamp`).
pub fn generator_builtin(
    name: &str,
    params: &BTreeMap<String, f64>,
    dim: usize,
    phi: Option<RandomBound>,
) -> Result<GeneratorG> {
    if dim == 0 {
        return Err(Error::domain("generator dimension must be >= 1"));
    }
    let get = |key: &str| -> Result<f64> {
        params
            .get(key)
            .copied()
            .ok_or_else(|| Error::domain(format!("generator '{name}' needs parameter '{key}'")))
    };
    match name {
        "zero" => Ok(GeneratorG::new(
            "zero",
            dim,
            GrowthG::Bounded(0.0),
            Continuity::Everywhere,
            |_, out| {
                out.iter_mut().for_each(|v| *v = 0.0);
            },
        )),
        "constant_b" => {
            let b = get("b")?;
            Ok(GeneratorG::new(
                format!("constant_b({b})"),
                dim,
                GrowthG::Bounded(b.abs()),
                Continuity::Everywhere,
                move |_, out| {
                    out.iter_mut().for_each(|v| *v = 0.0);
                    out[0] = b;
                },
            ))
        }
        "half_z" => Ok(GeneratorG::new(
            "half_z",
            dim,
            GrowthG::Linear { c: 0.5, phi: None },
            Continuity::Everywhere,
            |ctx, out| {
                for (o, zi) in out.iter_mut().zip(ctx.z) {
                    *o = 0.5 * zi;
                }
            },
        )),
        "sign_c" => {
            let c = get("c")?;
            Ok(GeneratorG::new(
                format!("sign_c({c})"),
                dim,
                GrowthG::Bounded(c.abs()),
                Continuity::OffZero,
                move |ctx, out| {
                    let n = znorm(ctx.z);
                    if n == 0.0 {
                        // Hat convention: the radial unit field vanishes at 0.
                        out.iter_mut().for_each(|v| *v = 0.0);
                    } else {
                        for (o, zi) in out.iter_mut().zip(ctx.z) {
                            *o = c * zi / n;
                        }
                    }
                },
            ))
        }
        "random_bound_linear" => {
            let a = get("a")?;
            let phi = phi.ok_or_else(|| {
                Error::domain("random_bound_linear needs an attached random bound process")
            })?;
            let phi_inner = phi.clone();
            Ok(GeneratorG::new(
                format!("random_bound_linear(a={a}, phi={})", phi.label()),
                dim,
                GrowthG::Linear {
                    c: a.abs().max(1.0),
                    phi: Some(phi),
                },
                Continuity::Everywhere,
                move |ctx, out| {
                    for (o, zi) in out.iter_mut().zip(ctx.z) {
                        *o = a * zi;
                    }
                    out[0] += phi_inner.value(ctx.t, ctx.w);
                },
            ))
        }
        "y_coupled" => {
            let b = get("b")?;
            let kappa = get("kappa")?;
            let clamp = get("clamp")?;
            if !(clamp > 0.0) {
                return Err(Error::domain("y_coupled needs clamp > 0"));
            }
            Ok(GeneratorG::new(
                format!("y_coupled(b={b}, kappa={kappa}, clamp={clamp})"),
                dim,
                GrowthG::Bounded(b.abs() + kappa.abs() * clamp),
                Continuity::Everywhere,
                move |ctx, out| {
                    out.iter_mut().for_each(|v| *v = 0.0);
                    out[0] = b + kappa * ctx.y.clamp(-clamp, clamp);
                },
            ))
        }
        other => Err(Error::domain(format!("unknown generator '{other}'"))),
    }
}
