//! Turn configuration blocks into engine objects.

use measure_bsde_core::generators::{
    clamp_y, g_to_f, generator_builtin, hat_generator, inf_convolve, mollify, truncate_nm,
    GeneratorF, GeneratorG, GrowthF, InfConvolutionSpec, MollifierSpec, RandomBound,
    TruncationSpec,
};
use measure_bsde_core::lattice::{ConvergenceCriterion, SolveOptions};
use measure_bsde_core::montecarlo::{DensityForm, McOptions, RegressionBasis};
use measure_bsde_core::terminal::{terminal_builtin, TerminalCondition};
use measure_bsde_core::{Error, Result};

use crate::config::{
    BasisConfig, CriterionConfig, DensityFormConfig, GeneratorConfig, PhiConfig, RunConfig,
    SolverConfig, TerminalConfig,
};

pub fn build_terminal(cfg: &TerminalConfig) -> Result<TerminalCondition> {
    terminal_builtin(&cfg.name, &cfg.params)
}

fn build_phi(cfg: &PhiConfig) -> Result<RandomBound> {
    match cfg.kind.as_str() {
        "const" => Ok(RandomBound::constant(cfg.value, cfg.budget)),
        "abs_tanh" => Ok(RandomBound::abs_tanh(cfg.value, cfg.budget)),
        other => Err(Error::domain(format!("unknown phi kind '{other}'"))),
    }
}

/// Generator plus, when a transformation produced one, the matching scalar
/// generator with a trustworthy growth tag.
pub struct GeneratorPair {
    pub g: GeneratorG,
    pub f: Option<GeneratorF>,
}

impl GeneratorPair {
    pub fn scalar(&self) -> GeneratorF {
        self.f.clone().unwrap_or_else(|| g_to_f(&self.g))
    }
}

fn parse_numbers(arg: &str) -> Result<Vec<f64>> {
    arg.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::domain(format!("bad transform argument '{s}'")))
        })
        .collect()
}

/// Apply one stack entry like "clamp_y:1.0" / "truncate:3,5" /
/// "mollify:0.05" / "infconv:2,1.0".
fn apply_transform(
    state: GeneratorPair,
    entry: &str,
    terminal_bound: Option<f64>,
) -> Result<GeneratorPair> {
    let (op, args) = entry
        .split_once(':')
        .ok_or_else(|| Error::domain(format!("transform '{entry}' needs arguments after ':'")))?;
    let nums = parse_numbers(args)?;
    match op {
        "clamp_y" => {
            if nums.len() != 1 {
                return Err(Error::domain("clamp_y takes one argument"));
            }
            Ok(GeneratorPair {
                g: clamp_y(&state.g, nums[0])?,
                f: None,
            })
        }
        "truncate" => {
            if nums.len() != 2 {
                return Err(Error::domain("truncate takes n,m"));
            }
            let spec = TruncationSpec::new(nums[0] as u32, nums[1] as u32)?;
            let (f, g) = truncate_nm(&state.scalar(), spec);
            Ok(GeneratorPair { g, f: Some(f) })
        }
        "mollify" => {
            if nums.len() != 1 {
                return Err(Error::domain("mollify takes epsilon"));
            }
            Ok(GeneratorPair {
                g: mollify(&state.g, &MollifierSpec::with_epsilon(nums[0]))?,
                f: None,
            })
        }
        "infconv" => {
            let n = nums
                .first()
                .copied()
                .ok_or_else(|| Error::domain("infconv takes n[,k_y]"))? as u32;
            let k_y = match nums.get(1) {
                Some(v) => *v,
                None => terminal_bound.ok_or_else(|| {
                    Error::domain("infconv needs an explicit k_y when the terminal is unbounded")
                })?,
            };
            let f_n = inf_convolve(&state.scalar(), &InfConvolutionSpec::new(n, k_y)?)?;
            let g = hat_generator(&f_n);
            Ok(GeneratorPair { g, f: Some(f_n) })
        }
        other => Err(Error::domain(format!("unknown transform '{other}'"))),
    }
}

pub fn build_generator(
    cfg: &GeneratorConfig,
    dim: usize,
    terminal_bound: Option<f64>,
) -> Result<GeneratorPair> {
    let phi = cfg.phi.as_ref().map(build_phi).transpose()?;
    let base = generator_builtin(&cfg.name, &cfg.params, dim, phi)?;
    let mut state = GeneratorPair { g: base, f: None };
    for entry in &cfg.transform {
        state = apply_transform(state, entry, terminal_bound)?;
    }
    Ok(state)
}

/// Re-tag a scalar generator as bounded by its max over an inspection
/// window (used by the regularize tabulation, whose checks are grid-local).
pub fn window_bounded_f(f: &GeneratorF, ys: &[f64], zs: &[f64]) -> GeneratorF {
    let mut m = 0.0f64;
    for &y in ys {
        for &z in zs {
            m = m.max(f.eval1(0.0, y, z, 0.0).abs());
        }
    }
    f.retagged(GrowthF::Bounded(m))
}

pub fn build_solve_options(cfg: &SolverConfig) -> SolveOptions {
    SolveOptions {
        tol: cfg.tol.expect("tol resolved at load"),
        max_iter: cfg.max_iter,
        damping: cfg.damping,
        clip: cfg.clip,
        z_eps: cfg.z_eps,
        criterion: match cfg.criterion {
            CriterionConfig::Measure => ConvergenceCriterion::Measure,
            CriterionConfig::Almost => ConvergenceCriterion::AlmostMeasure,
        },
        allow_unbounded_terminal: cfg.allow_unbounded,
    }
}

pub fn build_mc_options(cfg: &SolverConfig) -> McOptions {
    McOptions {
        tol: cfg.tol.expect("tol resolved at load"),
        max_iter: cfg.max_iter,
        damping: cfg.damping,
        clip: cfg.clip,
        z_eps: cfg.z_eps,
        bootstrap_resamples: 200,
        criterion: match cfg.criterion {
            CriterionConfig::Measure => ConvergenceCriterion::Measure,
            CriterionConfig::Almost => ConvergenceCriterion::AlmostMeasure,
        },
        density_form: match cfg.density_form {
            DensityFormConfig::Product => DensityForm::Product,
            DensityFormConfig::Exponential => DensityForm::Exponential,
        },
        allow_unbounded_terminal: cfg.allow_unbounded,
    }
}

pub fn build_basis(cfg: Option<&BasisConfig>, dim: usize) -> Result<RegressionBasis> {
    match cfg {
        None => RegressionBasis::default_for(dim),
        Some(b) => match b.family.as_str() {
            "default" => RegressionBasis::default_for(dim),
            "polynomial" => RegressionBasis::polynomial(dim, b.degree),
            "piecewise_constant" => RegressionBasis::piecewise_constant(dim, b.bins),
            other => Err(Error::domain(format!("unknown basis family '{other}'"))),
        },
    }
}

pub fn require_terminal(cfg: &RunConfig) -> Result<TerminalCondition> {
    let t = cfg
        .terminal
        .as_ref()
        .ok_or_else(|| Error::domain("this command needs a 'terminal' block"))?;
    build_terminal(t)
}

pub fn require_generator(cfg: &RunConfig, terminal_bound: Option<f64>) -> Result<GeneratorPair> {
    let g = cfg
        .generator
        .as_ref()
        .ok_or_else(|| Error::domain("this command needs a 'generator' block"))?;
    build_generator(g, cfg.model.d, terminal_bound)
}
