//! Agreement between the regression Monte Carlo engine and the exact
//! lattice oracle on matched one-dimensional problems.

use std::collections::BTreeMap;

use measure_bsde_core::bmo::{bmo_norm_lattice, reverse_holder_exponent};
use measure_bsde_core::generators::{g_to_f, generator_builtin, truncate_nm, TruncationSpec};
use measure_bsde_core::lattice::{solve_measure_solution_markov, SolveOptions};
use measure_bsde_core::montecarlo::{mc_solve, McOptions, RegressionBasis};
use measure_bsde_core::terminal::terminal_builtin;
use measure_bsde_core::tree::MarkovLattice;
use measure_bsde_core::{simulate_paths, TimeGrid};

fn params(kv: &[(&str, f64)]) -> BTreeMap<String, f64> {
    kv.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

#[test]
fn bayes_consistency_of_mc_against_the_lattice() {
    // Same (g, xi, K): the MC value must sit within 3 CI plus the
    // discretization gap c / K, with c calibrated by step doubling on the
    // lattice itself.
    let g = generator_builtin("half_z", &params(&[]), 1, None).unwrap();
    let xi = terminal_builtin("tanh_WT", &params(&[])).unwrap();
    let steps = 32;

    let opts = SolveOptions {
        tol: 1e-11,
        ..SolveOptions::default()
    };
    let y_k =
        solve_measure_solution_markov(&MarkovLattice::build(1.0, steps).unwrap(), &g, &xi, &opts)
            .unwrap()
            .y0;
    let y_2k = solve_measure_solution_markov(
        &MarkovLattice::build(1.0, 2 * steps).unwrap(),
        &g,
        &xi,
        &opts,
    )
    .unwrap()
    .y0;
    // First-order refinement: |Y_K - Y_2K| ~ c/(2K).
    let c = 2.0 * steps as f64 * (y_k - y_2k).abs();

    let grid = TimeGrid::new(1.0, steps).unwrap();
    let ensemble = simulate_paths(&grid, 1, 50_000, 314).unwrap();
    let basis = RegressionBasis::default_for(1).unwrap();
    let sol = mc_solve(&g, &xi, &ensemble, &basis, &McOptions::default()).unwrap();
    assert!(sol.report.converged);
    let gap = (sol.report.y0 - y_k).abs();
    let budget = 3.0 * sol.report.y0_ci_half + c / steps as f64;
    assert!(
        gap <= budget,
        "gap {gap:.4e} beyond 3ci + c/K = {budget:.4e}"
    );
}

#[test]
fn truncated_family_keeps_density_moments_bounded() {
    // Sample moments of the terminal density stay uniformly bounded along
    // the truncation family, and the admissible-exponent moment respects
    // the reverse Holder bound evaluated at the family's exact norm cap.
    let base = generator_builtin("half_z", &params(&[]), 1, None).unwrap();
    let f = g_to_f(&base);
    let xi = terminal_builtin("tanh_WT", &params(&[])).unwrap();
    let steps = 16;
    let lat = MarkovLattice::build(1.0, steps).unwrap();
    let grid = TimeGrid::new(1.0, steps).unwrap();
    let ensemble = simulate_paths(&grid, 1, 30_000, 77).unwrap();
    let basis = RegressionBasis::default_for(1).unwrap();
    let opts = SolveOptions {
        tol: 1e-11,
        ..SolveOptions::default()
    };

    let mut norm_cap = 0.0f64;
    let mut fwd_moments = Vec::new();
    let mut inv_moments = Vec::new();
    let mut densities = Vec::new();
    for n in 1..=3u32 {
        let (_, g_nm) = truncate_nm(&f, TruncationSpec::new(n, n).unwrap());
        let exact = solve_measure_solution_markov(&lat, &g_nm, &xi, &opts).unwrap();
        norm_cap = norm_cap.max(bmo_norm_lattice(&lat, &exact.z));

        let sol = mc_solve(&g_nm, &xi, &ensemble, &basis, &McOptions::default()).unwrap();
        assert!(sol.report.converged);
        // Rebuild the terminal density from the converged drift.
        let paths = ensemble.paths();
        let mut r = vec![1.0; paths];
        for k in 0..steps {
            for (p, rp) in r.iter_mut().enumerate() {
                *rp *= 1.0 + sol.zeta[k][p] * ensemble.increment(p, k, 0);
            }
        }
        let m2 = r.iter().map(|v| v * v).sum::<f64>() / paths as f64;
        let inv2 = r.iter().map(|v| 1.0 / v).sum::<f64>() / paths as f64;
        fwd_moments.push(m2);
        inv_moments.push(inv2);
        densities.push(r);
    }
    let spread = |xs: &[f64]| {
        let max = xs.iter().copied().fold(f64::MIN, f64::max);
        let min = xs.iter().copied().fold(f64::MAX, f64::min);
        max / min
    };
    assert!(
        spread(&fwd_moments) < 1.5,
        "E[R^2] blows up along the family: {fwd_moments:?}"
    );
    assert!(
        spread(&inv_moments) < 1.5,
        "E_Q[R^-1] blows up along the family: {inv_moments:?}"
    );

    // Reverse Holder at the exact norm cap of the family.
    let rh = reverse_holder_exponent(norm_cap).unwrap();
    for r in &densities {
        let mp = r.iter().map(|v| v.powf(rh.p)).sum::<f64>() / r.len() as f64;
        assert!(
            mp <= rh.bound + 0.05,
            "E[R^p] = {mp} beyond the bound {} at p = {}",
            rh.bound,
            rh.p
        );
    }
}
