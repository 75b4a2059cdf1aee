//! BMO-norm estimation and the quantitative exponential-moment bounds.
//!
//! The BMO norm used throughout is the conditional-energy form
//! sup_t || E[ int_t^T |Z_s|^2 ds | F_t] ||_inf^{1/2}. On a lattice the sup
//! is an exact max over nodes; under Monte Carlo it is approximated by a
//! per-step regression and a high quantile, which is an honest lower proxy
//! for an essential supremum and is flagged as such.

use crate::error::{Error, Result};
use crate::montecarlo::{fit_targets, RegressionBasis};
use crate::tree::{LevelProcess, TreeTopology};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BmoMethod {
    LatticeExact,
    /// Quantile level used as the sup proxy.
    McQuantile(f64),
}

#[derive(Debug, Clone, Copy)]
pub struct NegativeMomentBound {
    pub r: f64,
    pub c: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct ReverseHolder {
    pub p: f64,
    /// p - 1 tracked separately: for large norms the admissible excess drops
    /// below the f64 resolution around 1, where `p` alone would read 1.0.
    pub p_minus_one: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct AprioriBound {
    pub beta: f64,
    pub k_bound: f64,
}

/// Norm estimate plus every derived exponent for one control process.
#[derive(Debug, Clone)]
pub struct BmoReport {
    pub norm_estimate: f64,
    pub method: BmoMethod,
    pub negative_moment: NegativeMomentBound,
    pub reverse_holder: ReverseHolder,
    pub apriori: Option<AprioriBound>,
}

/// Exact conditional remaining energy, maximized over every node.
pub fn bmo_norm_lattice<T: TreeTopology>(top: &T, z: &LevelProcess) -> f64 {
    let steps = top.steps();
    let dt = top.grid().dt();
    let mut tail = vec![0.0; top.width(steps)];
    let mut worst = 0.0f64;
    for k in (0..steps).rev() {
        let mut cur = vec![0.0; top.width(k)];
        for (i, slot) in cur.iter_mut().enumerate() {
            let zv = z.at(k, i);
            *slot = zv * zv * dt + 0.5 * (tail[top.child_up(k, i)] + tail[top.child_dn(k, i)]);
            worst = worst.max(*slot);
        }
        tail = cur;
    }
    worst.sqrt()
}

/// Exact lattice BMO norm of a scalar state function, e.g. a random bound
/// process phi(t, W).
pub fn bmo_norm_state_fn<T: TreeTopology>(top: &T, f: impl Fn(f64, f64) -> f64) -> f64 {
    let steps = top.steps();
    let mut z = LevelProcess {
        levels: Vec::with_capacity(steps),
    };
    for k in 0..steps {
        let t = top.grid().time(k);
        z.levels
            .push((0..top.width(k)).map(|i| f(t, top.w_at(k, i))).collect());
    }
    bmo_norm_lattice(top, &z)
}

/// Monte Carlo BMO proxy: regress the remaining energy on the step-k
/// features and take the `quantile` of the fitted values, maximized over
/// steps. A finite sample cannot attain an essential sup, so this reads as
/// a lower estimate.
pub fn bmo_norm_mc(
    basis: &RegressionBasis,
    states: &[Vec<f64>],
    times: &[f64],
    z: &[Vec<f64>],
    dt: f64,
    quantile: f64,
) -> Result<f64> {
    if !(0.0 < quantile && quantile < 1.0) {
        return Err(Error::domain("quantile must lie in (0, 1)"));
    }
    let steps = z.len();
    if steps == 0 {
        return Ok(0.0);
    }
    let d = basis.dim();
    let paths = z[0].len() / d;
    let mut tail = vec![0.0; paths];
    let mut per_step_tail: Vec<Vec<f64>> = vec![Vec::new(); steps];
    for k in (0..steps).rev() {
        for p in 0..paths {
            let cell: f64 = (0..d)
                .map(|j| {
                    let v = z[k][p * d + j];
                    v * v
                })
                .sum();
            tail[p] += cell * dt;
        }
        per_step_tail[k] = tail.clone();
    }
    let mut worst = 0.0f64;
    for k in 0..steps {
        let fit = fit_targets(basis, &states[k], times[k], &[&per_step_tail[k]])?;
        let mut fitted = fit.fitted.into_iter().next().unwrap();
        fitted.sort_by(|a, b| a.total_cmp(b));
        let idx = ((quantile * paths as f64) as usize).min(paths - 1);
        worst = worst.max(fitted[idx].max(0.0));
    }
    Ok(worst.sqrt())
}

/// Exponent r < 0 and constant C = sqrt(2) with E[E(M)_T^r] <= C for every
/// M = Z . W with ||Z||_BMO <= k: r = 1/4 - sqrt(1/16 + 1/(4 k^2)).
pub fn negative_moment_bound(k: f64) -> Result<NegativeMomentBound> {
    if !(k > 0.0) {
        return Err(Error::domain("BMO bound k must be > 0"));
    }
    let r = 0.25 - (1.0 / 16.0 + 1.0 / (4.0 * k * k)).sqrt();
    Ok(NegativeMomentBound {
        r,
        c: std::f64::consts::SQRT_2,
    })
}

/// Phi(p) = (1 + ln((2p - 1) / (2(p - 1))) / p^2)^{1/2} - 1 for p > 1;
/// decreasing, with Phi(1+) = infinity.
pub fn reverse_holder_phi(p: f64) -> Result<f64> {
    if !(p > 1.0) {
        return Err(Error::domain("reverse Holder exponent needs p > 1"));
    }
    Ok(phi_from_delta(p - 1.0))
}

/// Phi written in delta = p - 1: ln((1 + 2 delta) / (2 delta)) stays
/// accurate down to subnormal delta.
fn phi_from_delta(delta: f64) -> f64 {
    let p = 1.0 + delta;
    let log_ratio = (1.0 + 2.0 * delta).ln() - (2.0 * delta).ln();
    (1.0 + log_ratio / (p * p)).sqrt() - 1.0
}

fn bound_from_delta(delta: f64, k: f64) -> f64 {
    let p = 1.0 + delta;
    let a = 2.0 * delta / (1.0 + 2.0 * delta);
    let denom = 1.0 - a * (p * p * k * (2.0 + k)).exp();
    if denom <= 0.0 {
        f64::INFINITY
    } else {
        2.0 / denom
    }
}

/// The printed moment bound 2 / (1 - 2(p-1)(2p-1)^{-1} exp(p^2 k (2 + k))),
/// finite exactly when k < Phi(p). The norm enters the exponential linearly,
/// as printed in the source inequality.
pub fn reverse_holder_bound_at(p: f64, k: f64) -> Result<f64> {
    if !(k > 0.0) {
        return Err(Error::domain("BMO bound k must be > 0"));
    }
    if k >= reverse_holder_phi(p)? {
        return Err(Error::domain(format!(
            "p = {p} is not admissible for k = {k}"
        )));
    }
    let bound = bound_from_delta(p - 1.0, k);
    if !bound.is_finite() {
        return Err(Error::domain("bound denominator not positive"));
    }
    Ok(bound)
}

/// Largest admissible p, found by bisecting log(p - 1) over
/// [-660, ln(63)] (60 iterations, then a retreat into the strict interior
/// so the bound stays finite). Existence uses Phi(1+) = infinity; in
/// delta-space the admissible excess is representable for every practical k
/// even when 1 + delta rounds to 1.
pub fn reverse_holder_exponent(k: f64) -> Result<ReverseHolder> {
    if !(k > 0.0) {
        return Err(Error::domain("BMO bound k must be > 0"));
    }
    let mut lo_log = -660.0f64; // delta ~ 1e-287, Phi ~ 24.7
    let mut hi_log = 63f64.ln();
    if phi_from_delta(lo_log.exp()) <= k {
        return Err(Error::domain(format!(
            "no representable exponent for k = {k}; the admissible p - 1 underflows"
        )));
    }
    if phi_from_delta(hi_log.exp()) > k {
        lo_log = hi_log;
    } else {
        for _ in 0..60 {
            let mid = 0.5 * (lo_log + hi_log);
            if phi_from_delta(mid.exp()) > k {
                lo_log = mid;
            } else {
                hi_log = mid;
            }
        }
    }
    // Retreat until the exponential-moment denominator is safely positive.
    let mut delta = lo_log.exp() * (1.0 - 1e-6);
    let mut bound = bound_from_delta(delta, k);
    while !bound.is_finite() {
        delta *= 0.5;
        bound = bound_from_delta(delta, k);
    }
    Ok(ReverseHolder {
        p: 1.0 + delta,
        p_minus_one: delta,
        bound,
    })
}

/// Constants of the a priori control bound for drift growth
/// X <= psi^2 + |Z| phi + C |Z|^2: beta = 2C + 3 and
/// K^2 = e^{2 beta ||Y||} (2 + beta (||psi||^2 + ||phi||^2 / 2)) / beta.
///
/// Assembly: bound e^{beta Y_s} above by e^{beta ||Y||} everywhere it helps
/// and below by e^{-beta ||Y||} where it hurts; the factor e^{2 beta ||Y||}
/// on the psi-term is what that conservative chain yields. Loose but valid;
/// callers assert the inequality, never tightness.
pub fn apriori_z_bound(c: f64, norm_psi: f64, norm_phi: f64, y_sup: f64) -> Result<AprioriBound> {
    for (name, v) in [("C", c), ("psi", norm_psi), ("phi", norm_phi), ("Y", y_sup)] {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::domain(format!(
                "apriori input {name} must be >= 0, got {v}"
            )));
        }
    }
    let beta = 2.0 * c + 3.0;
    let psi_tilde_sq = norm_psi * norm_psi + 0.5 * norm_phi * norm_phi;
    let k_sq = (2.0 * beta * y_sup).exp() * (2.0 + beta * psi_tilde_sq) / beta;
    Ok(AprioriBound {
        beta,
        k_bound: k_sq.sqrt(),
    })
}

/// One row of the dual-norm witness scan.
#[derive(Debug, Clone, Copy)]
pub struct DualLpRow {
    pub n: f64,
    pub m: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone)]
pub struct DualLpReport {
    /// E_Q[Y^p]^{1/p}, computed directly.
    pub lhs: f64,
    /// Best witness ratio E_Q[Y X] / E_Q[X^q]^{1/q} over the (n, m) grid.
    pub best: f64,
    /// lhs - best >= 0, shrinking along the grid.
    pub gap: f64,
    pub rows: Vec<DualLpRow>,
}

/// Dual characterization of the L^p norm on a finite distribution, with the
/// witnesses X_nm = (1/m + Y ^ n)^{p-1}.
pub fn dual_lp_check(samples: &[(f64, f64)], p: f64) -> Result<DualLpReport> {
    if !(p > 1.0) {
        return Err(Error::domain("dual check needs p > 1"));
    }
    if samples.is_empty() {
        return Err(Error::domain("dual check needs a nonempty distribution"));
    }
    let total_prob: f64 = samples.iter().map(|(_, pr)| pr).sum();
    if (total_prob - 1.0).abs() > 1e-9 || samples.iter().any(|(v, pr)| *v < 0.0 || *pr < 0.0) {
        return Err(Error::domain("samples must be a distribution over Y >= 0"));
    }
    let q = p / (p - 1.0);
    let lhs = samples
        .iter()
        .map(|(v, pr)| pr * v.powf(p))
        .sum::<f64>()
        .powf(1.0 / p);
    let mut rows = Vec::new();
    let mut best = 0.0f64;
    for np in 0..8 {
        let n = (1u64 << np) as f64;
        for mp in 0..6 {
            let m = 10f64.powi(mp);
            let mut num = 0.0;
            let mut den = 0.0;
            for (v, pr) in samples {
                let x = (1.0 / m + v.min(n)).powf(p - 1.0);
                num += pr * v * x;
                den += pr * x.powf(q);
            }
            let ratio = if den > 0.0 {
                num / den.powf(1.0 / q)
            } else {
                0.0
            };
            best = best.max(ratio);
            rows.push(DualLpRow { n, m, ratio });
        }
    }
    Ok(DualLpReport {
        lhs,
        best,
        gap: lhs - best,
        rows,
    })
}

#[derive(Debug, Clone)]
pub struct FatouReport {
    pub limit_norm: f64,
    pub member_norms: Vec<f64>,
    /// Min over the last third of the sequence (the liminf proxy).
    pub tail_min: f64,
    pub pass: bool,
}

/// Fatou property of BMO norms along a sequence Z^n -> Z:
/// ||Z|| <= liminf ||Z^n||, realized as min over the reported tail.
pub fn fatou_bmo_check<T: TreeTopology>(
    top: &T,
    members: &[LevelProcess],
    limit: &LevelProcess,
) -> Result<FatouReport> {
    if members.is_empty() {
        return Err(Error::domain("fatou check needs at least one member"));
    }
    let member_norms: Vec<f64> = members.iter().map(|z| bmo_norm_lattice(top, z)).collect();
    let limit_norm = bmo_norm_lattice(top, limit);
    let tail_start = members.len() - members.len().div_ceil(3);
    let tail_min = member_norms[tail_start..]
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    Ok(FatouReport {
        limit_norm,
        tail_min,
        pass: limit_norm <= tail_min + 1e-9,
        member_norms,
    })
}

/// One member of the empirical exponential-moment panel.
#[derive(Debug, Clone, Copy)]
pub struct ExponentialMomentRow {
    pub member: usize,
    pub bmo_norm: f64,
    pub neg_moment: f64,
    pub neg_bound: f64,
    pub pos_moment: f64,
    pub pos_bound: f64,
    pub pass: bool,
}

/// Exact lattice check of both exponential-moment bounds on a family of
/// integrands with exact BMO norms <= k_cap. `slack` absorbs the O(dt)
/// difference between the discrete product exponential and its continuous
/// limit; it shrinks under step doubling.
pub fn exponential_moment_check<T: TreeTopology>(
    top: &T,
    members: &[LevelProcess],
    k_cap: f64,
    slack: f64,
) -> Result<Vec<ExponentialMomentRow>> {
    let neg = negative_moment_bound(k_cap)?;
    let rh = reverse_holder_exponent(k_cap)?;
    let h = top.grid().sqrt_dt();
    let mut rows = Vec::with_capacity(members.len());
    for (idx, z) in members.iter().enumerate() {
        let norm = bmo_norm_lattice(top, z);
        if norm > k_cap + 1e-12 {
            return Err(Error::domain(format!(
                "member {idx} has BMO norm {norm} beyond the cap {k_cap}"
            )));
        }
        for level in &z.levels {
            for v in level {
                if v.abs() * h >= 1.0 {
                    return Err(Error::InvalidDensity(
                        "member integrand violates one-step positivity".into(),
                    ));
                }
            }
        }
        let neg_moment = crate::lattice::density_moment(top, z, neg.r);
        let pos_moment = crate::lattice::density_moment(top, z, rh.p);
        let pass = neg_moment <= neg.c + slack && pos_moment <= rh.bound + slack;
        rows.push(ExponentialMomentRow {
            member: idx,
            bmo_norm: norm,
            neg_moment,
            neg_bound: neg.c,
            pos_moment,
            pos_bound: rh.bound,
            pass,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::{build_lattice, MarkovLattice};

    #[test]
    fn formula_values_match_independent_evaluation() {
        let nm = negative_moment_bound(1.0).unwrap();
        assert!((nm.r - (1.0 - 5f64.sqrt()) / 4.0).abs() < 1e-15);
        assert!((nm.r + 0.309_016_994_374_947_4).abs() < 1e-12);
        assert!((nm.c - 2f64.sqrt()).abs() < 1e-15);

        let nm2 = negative_moment_bound(2.0).unwrap();
        assert!((nm2.r - (0.25 - 0.125f64.sqrt())).abs() < 1e-15);
        assert!((nm2.r + 0.103_553_390_593_273_76).abs() < 1e-12);

        let phi2 = reverse_holder_phi(2.0).unwrap();
        assert!((phi2 - 0.04946).abs() < 1e-4, "phi(2) = {phi2}");

        let bound = reverse_holder_bound_at(2.0, 0.04).unwrap();
        assert!((bound - 26.3).abs() < 0.1, "bound = {bound}");
    }

    #[test]
    fn rejects_nonpositive_k() {
        assert!(negative_moment_bound(0.0).is_err());
        assert!(negative_moment_bound(-1.0).is_err());
        assert!(reverse_holder_exponent(0.0).is_err());
    }

    #[test]
    fn negative_exponent_is_monotone_in_k() {
        let mut last = f64::NEG_INFINITY;
        for k in [0.1, 0.5, 1.0, 2.0, 10.0] {
            let r = negative_moment_bound(k).unwrap().r;
            assert!(r < 0.0);
            assert!(r > last, "r must increase with k");
            last = r;
        }
    }

    #[test]
    fn admissible_exponent_is_monotone_in_k() {
        let mut last = f64::INFINITY;
        for k in [0.01, 0.04, 0.2, 1.0, 10.0] {
            let rh = reverse_holder_exponent(k).unwrap();
            assert!(rh.p_minus_one > 0.0);
            assert!(rh.bound.is_finite() && rh.bound > 0.0);
            assert!(
                rh.p_minus_one <= last * (1.0 + 1e-12),
                "p must not increase with k"
            );
            last = rh.p_minus_one;
        }
        // k = 0.04 admits p = 2 (phi(2) > 0.04).
        assert!(reverse_holder_exponent(0.04).unwrap().p >= 2.0);
        // k = 10: p very close to 1, bound still finite.
        let big = reverse_holder_exponent(10.0).unwrap();
        assert!(big.p < 1.01);
        assert!(big.p_minus_one < 1e-50 && big.p_minus_one > 0.0);
        assert!(big.bound.is_finite());
    }

    #[test]
    fn apriori_beta_values() {
        assert_eq!(apriori_z_bound(0.0, 0.0, 0.0, 0.0).unwrap().beta, 3.0);
        assert_eq!(apriori_z_bound(1.0, 0.0, 0.0, 0.0).unwrap().beta, 5.0);
        let b = apriori_z_bound(0.0, 0.0, 0.0, 0.0).unwrap();
        assert!(b.k_bound.is_finite() && b.k_bound > 0.0);
        assert!(apriori_z_bound(-0.1, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn lattice_norm_of_constants() {
        let lat = MarkovLattice::build(1.0, 16).unwrap();
        let z1 = LevelProcess::constant(&lat, 15, 1.0);
        assert!((bmo_norm_lattice(&lat, &z1) - 1.0).abs() < 1e-12);
        let z0 = LevelProcess::constant(&lat, 15, 0.0);
        assert_eq!(bmo_norm_lattice(&lat, &z0), 0.0);
    }

    #[test]
    fn lattice_norm_matches_brute_force_enumeration() {
        // Independent oracle: enumerate all paths of the full tree and
        // average the remaining energy per node.
        let tree = build_lattice(1.0, 8).unwrap();
        let mut z = LevelProcess { levels: Vec::new() };
        for k in 0..8 {
            z.levels
                .push((0..tree.width(k)).map(|i| 2.0 * tree.w_at(k, i)).collect());
        }
        let fast = bmo_norm_lattice(&tree, &z);
        let dt = tree.grid().dt();
        let leaves = tree.width(8);
        let mut worst = 0.0f64;
        for k in 0..8 {
            for i in 0..tree.width(k) {
                // Paths through (k, i) are the leaves whose index starts
                // with the bits of i.
                let shift = 8 - k;
                let lo = i << shift;
                let hi = (i + 1) << shift;
                let mut acc = 0.0;
                for leaf in lo..hi {
                    let mut energy = 0.0;
                    for s in k..8 {
                        let node = leaf >> (8 - s);
                        energy += (2.0 * tree.w_at(s, node)).powi(2) * dt;
                    }
                    acc += energy;
                }
                worst = worst.max(acc / (hi - lo) as f64);
            }
        }
        let _ = leaves;
        assert!(
            (fast - worst.sqrt()).abs() < 1e-12,
            "{fast} vs {}",
            worst.sqrt()
        );
    }

    #[test]
    fn dual_lp_two_point_example() {
        let report = dual_lp_check(&[(1.0, 0.5), (3.0, 0.5)], 2.0).unwrap();
        assert!((report.lhs - 5f64.sqrt()).abs() < 1e-12);
        assert!(report.gap >= -1e-12);
        assert!(report.gap < 1e-3, "gap = {}", report.gap);
        // Witnesses with small n and m are strictly worse.
        let coarse = report
            .rows
            .iter()
            .find(|r| r.n == 1.0 && r.m == 1.0)
            .unwrap()
            .ratio;
        assert!(coarse < report.best);
    }

    #[test]
    fn dual_lp_degenerate_cases() {
        let zero = dual_lp_check(&[(0.0, 1.0)], 2.0).unwrap();
        assert_eq!(zero.lhs, 0.0);
        assert!(zero.best.abs() < 1e-12);
        let constant = dual_lp_check(&[(2.5, 1.0)], 3.0).unwrap();
        assert!((constant.lhs - 2.5).abs() < 1e-12);
        assert!((constant.best - 2.5).abs() < 1e-3);
    }

    #[test]
    fn fatou_property_on_perturbed_sequences() {
        // Odd-symmetric base: the max-energy node has a mirror image, so a
        // constant shift of either sign can only raise the max.
        let lat = MarkovLattice::build(1.0, 4).unwrap();
        let mut base = LevelProcess { levels: Vec::new() };
        for k in 0..4 {
            base.levels
                .push((0..lat.width(k)).map(|i| lat.w_at(k, i)).collect());
        }
        // Constant sequence: equality.
        let rep = fatou_bmo_check(&lat, &vec![base.clone(); 5], &base).unwrap();
        assert!(rep.pass);
        assert!((rep.limit_norm - rep.tail_min).abs() < 1e-12);

        // Alternating-sign 1/n perturbations.
        let members: Vec<LevelProcess> = (1..=8)
            .map(|n| {
                let mut m = base.clone();
                let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
                for level in m.levels.iter_mut() {
                    for v in level.iter_mut() {
                        *v += sign / n as f64;
                    }
                }
                m
            })
            .collect();
        let rep = fatou_bmo_check(&lat, &members, &base).unwrap();
        assert!(rep.pass, "{rep:?}");

        // Truncations of the limit: norms nondecreasing, and the tail caps
        // exceed max |Z| so the tail members equal the limit exactly.
        let members: Vec<LevelProcess> = (1..=8)
            .map(|n| {
                let cap = 0.3 * n as f64;
                let mut m = base.clone();
                for level in m.levels.iter_mut() {
                    for v in level.iter_mut() {
                        *v = v.clamp(-cap, cap);
                    }
                }
                m
            })
            .collect();
        let rep = fatou_bmo_check(&lat, &members, &base).unwrap();
        assert!(rep.pass, "{rep:?}");
        for w in rep.member_norms.windows(2) {
            assert!(w[0] <= w[1] + 1e-12);
        }
    }

    #[test]
    fn exponential_moment_panel_on_scaled_family() {
        let lat = MarkovLattice::build(1.0, 32).unwrap();
        let k_cap = 1.0;
        let members: Vec<LevelProcess> = (0..10)
            .map(|i| {
                let mut z = LevelProcess { levels: Vec::new() };
                for k in 0..32 {
                    let amp = 0.1 + 0.09 * i as f64;
                    z.levels.push(
                        (0..lat.width(k))
                            .map(|node| amp * (lat.w_at(k, node) + 0.3 * i as f64).tanh())
                            .collect(),
                    );
                }
                z
            })
            .collect();
        let rows = exponential_moment_check(&lat, &members, k_cap, 0.05).unwrap();
        assert_eq!(rows.len(), 10);
        for row in &rows {
            assert!(row.bmo_norm <= k_cap + 1e-12);
            assert!(row.pass, "{row:?}");
        }
    }

    #[test]
    fn discretization_slack_shrinks_under_step_doubling() {
        // E[E(Z.W)^r] for Z = 1 converges to exp(r(r-1)/2) as dt -> 0.
        let k_cap = 1.0;
        let r = negative_moment_bound(k_cap).unwrap().r;
        let continuous = (r * (r - 1.0) / 2.0).exp();
        let mut errs = Vec::new();
        for steps in [8usize, 16, 32, 64] {
            let lat = MarkovLattice::build(1.0, steps).unwrap();
            let z = LevelProcess::constant(&lat, steps - 1, 1.0);
            let m = crate::lattice::density_moment(&lat, &z, r);
            errs.push((m - continuous).abs());
        }
        for w in errs.windows(2) {
            assert!(w[1] < w[0], "slack should shrink: {errs:?}");
        }
    }

    #[test]
    fn mc_norm_close_to_lattice_on_matched_process() {
        // Z with mild state dependence: the conditional-energy function is
        // nearly flat in w, so the tree ess-sup and the Gaussian
        // 0.999-quantile proxy agree. (For strongly state-dependent
        // integrands the two functionals genuinely differ at coarse dt: the
        // tree support and the Gaussian tail disagree, and a polynomial fit
        // extrapolates at the extremes.)
        use crate::grid::TimeGrid;
        use crate::paths::simulate_paths;
        let steps = 16;
        let lat = MarkovLattice::build(1.0, steps).unwrap();
        let zfun = |w: f64| 0.8 * (1.0 + 0.05 * w.tanh());
        let exact = bmo_norm_state_fn(&lat, move |_, w| zfun(w));

        let grid = TimeGrid::new(1.0, steps).unwrap();
        let e = simulate_paths(&grid, 1, 40_000, 99).unwrap();
        let paths = e.paths();
        let mut states: Vec<Vec<f64>> = vec![vec![0.0; paths]];
        for k in 0..steps {
            let prev = &states[k];
            states.push((0..paths).map(|p| prev[p] + e.increment(p, k, 0)).collect());
        }
        let z: Vec<Vec<f64>> = (0..steps)
            .map(|k| (0..paths).map(|p| zfun(states[k][p])).collect())
            .collect();
        let basis = RegressionBasis::polynomial(1, 3).unwrap();
        let times: Vec<f64> = grid.times().to_vec();
        let est = bmo_norm_mc(&basis, &states, &times, &z, grid.dt(), 0.999).unwrap();
        let rel = (est - exact).abs() / exact;
        assert!(rel < 0.05, "exact {exact}, proxy {est}");
    }
}
