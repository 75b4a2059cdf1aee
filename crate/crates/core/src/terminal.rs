//! Terminal conditions xi and the built-in catalog.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::paths::PathView;
use crate::tree::{FullTree, MarkovLattice, TreeTopology};

type StateFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type PathFn = Arc<dyn Fn(&PathView<'_>) -> f64 + Send + Sync>;

/// Evaluator backing: a function of the terminal state W^1_T, or a
/// functional of the whole discrete path.
#[derive(Clone)]
pub enum TerminalKind {
    State(StateFn),
    Path(PathFn),
}

/// Terminal variable xi with an optional uniform bound.
///
/// A missing bound marks unbounded terminals; engines reject those unless a
/// test-only override is set.
#[derive(Clone)]
pub struct TerminalCondition {
    kind: TerminalKind,
    bound: Option<f64>,
    label: String,
}

impl fmt::Debug for TerminalCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TerminalCondition")
            .field("label", &self.label)
            .field("bound", &self.bound)
            .finish()
    }
}

impl TerminalCondition {
    pub fn from_state(
        label: impl Into<String>,
        bound: Option<f64>,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        TerminalCondition {
            kind: TerminalKind::State(Arc::new(f)),
            bound,
            label: label.into(),
        }
    }

    pub fn from_path(
        label: impl Into<String>,
        bound: Option<f64>,
        f: impl Fn(&PathView<'_>) -> f64 + Send + Sync + 'static,
    ) -> Self {
        TerminalCondition {
            kind: TerminalKind::Path(Arc::new(f)),
            bound,
            label: label.into(),
        }
    }

    pub fn bound(&self) -> Option<f64> {
        self.bound
    }

    pub fn is_bounded(&self) -> bool {
        self.bound.is_some()
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn kind(&self) -> &TerminalKind {
        &self.kind
    }

    /// True when xi depends on the path only through W^1_T.
    pub fn is_state_functional(&self) -> bool {
        matches!(self.kind, TerminalKind::State(_))
    }

    pub fn eval_state(&self, w_terminal: f64) -> Result<f64> {
        match &self.kind {
            TerminalKind::State(f) => Ok(f(w_terminal)),
            TerminalKind::Path(_) => Err(Error::domain(format!(
                "terminal '{}' is path-dependent; a state engine cannot evaluate it",
                self.label
            ))),
        }
    }

    pub fn eval_path(&self, view: &PathView<'_>) -> f64 {
        match &self.kind {
            TerminalKind::State(f) => f(view.w_terminal()),
            TerminalKind::Path(f) => f(view),
        }
    }

    /// Leaf values on a full tree (exact for both kinds).
    pub fn leaf_values_full(&self, tree: &FullTree) -> Vec<f64> {
        let steps = tree.grid().steps();
        let times = tree.grid().times();
        (0..tree.width(steps))
            .map(|i| {
                let w = tree.leaf_path(i);
                let view = PathView {
                    times,
                    w: &w,
                    dim: 1,
                };
                self.eval_path(&view)
            })
            .collect()
    }

    /// Leaf values on a Markov lattice; path-dependent terminals are rejected.
    pub fn leaf_values_markov(&self, lat: &MarkovLattice) -> Result<Vec<f64>> {
        let steps = lat.grid().steps();
        (0..lat.width(steps))
            .map(|i| self.eval_state(lat.w_at(steps, i)))
            .collect()
    }
}

/// Build a terminal condition from the catalog.
///
/// Names: `constant` (param `c`), `tanh_WT`, `sin_WT`,
/// `indicator_above` (param `level`), `clipped_WT` (param `clip`),
/// `raw_WT` (unbounded, test-only).
pub fn terminal_builtin(name: &str, params: &BTreeMap<String, f64>) -> Result<TerminalCondition> {
    let get = |key: &str| -> Result<f64> {
        params
            .get(key)
            .copied()
            .ok_or_else(|| Error::domain(format!("terminal '{name}' needs parameter '{key}'")))
    };
    match name {
        "constant" => {
            let c = get("c")?;
            Ok(TerminalCondition::from_state(
                format!("constant({c})"),
                Some(c.abs()),
                move |_| c,
            ))
        }
        "tanh_WT" => Ok(TerminalCondition::from_state(
            "tanh_WT",
            Some(1.0),
            f64::tanh,
        )),
        "sin_WT" => Ok(TerminalCondition::from_state("sin_WT", Some(1.0), f64::sin)),
        "indicator_above" => {
            let level = get("level")?;
            Ok(TerminalCondition::from_state(
                format!("indicator_above({level})"),
                Some(1.0),
                move |w| if w >= level { 1.0 } else { 0.0 },
            ))
        }
        "clipped_WT" => {
            let clip = get("clip")?;
            if !(clip > 0.0) {
                return Err(Error::domain("clipped_WT needs clip > 0"));
            }
            Ok(TerminalCondition::from_state(
                format!("clipped_WT({clip})"),
                Some(clip),
                move |w| w.clamp(-clip, clip),
            ))
        }
        "raw_WT" => Ok(TerminalCondition::from_state("raw_WT", None, |w| w)),
        other => Err(Error::domain(format!("unknown terminal '{other}'"))),
    }
}
