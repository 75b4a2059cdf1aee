//! Property tests for the structural invariants the engines rely on.

use proptest::prelude::*;

use measure_bsde_core::bmo::dual_lp_check;
use measure_bsde_core::generators::{
    f_to_g, g_to_f, hat_generator, truncate_nm, GenCtx, GeneratorF, GrowthF, TruncationSpec,
};
use measure_bsde_core::lattice::{conditional_expectation, density_moment, DensityProcess};
use measure_bsde_core::tree::{FullTree, LevelProcess, TreeTopology};

fn quad_linear_f(a: f64, b: f64) -> GeneratorF {
    GeneratorF::new(
        format!("{a} z^2 + {b} z"),
        1,
        GrowthF::Subquadratic {
            c: a.abs() + b.abs() + 1.0,
            phi: None,
        },
        move |ctx| a * ctx.z[0] * ctx.z[0] + b * ctx.z[0],
    )
    .with_grad0(move |_, _, _| vec![b])
}

proptest! {
    #[test]
    fn tower_property_for_random_leaves(
        leaves in prop::collection::vec(-5.0f64..5.0, 16),
        j in 0usize..2,
        mid in 2usize..4,
    ) {
        let tree = FullTree::build(1.0, 4).unwrap();
        let inner = conditional_expectation(&tree, &leaves, 4, mid, None).unwrap();
        let two_step = conditional_expectation(&tree, &inner, mid, j, None).unwrap();
        let direct = conditional_expectation(&tree, &leaves, 4, j, None).unwrap();
        for i in 0..tree.width(j) {
            prop_assert!((two_step[i] - direct[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn density_has_unit_expectation_for_any_clipped_drift(
        drift in prop::collection::vec(-0.9f64..0.9, 1 + 2 + 4 + 8),
    ) {
        let tree = FullTree::build(1.0, 4).unwrap();
        let h = tree.grid().sqrt_dt();
        let mut zeta = LevelProcess { levels: Vec::new() };
        let mut cursor = 0;
        for k in 0..4 {
            let width = tree.width(k);
            zeta.levels.push(
                drift[cursor..cursor + width].iter().map(|v| v / h).collect(),
            );
            cursor += width;
        }
        let density = DensityProcess::from_zeta(&tree, &zeta).unwrap();
        prop_assert!((density.terminal_expectation(&tree) - 1.0).abs() < 1e-12);
        prop_assert!(density.min_terminal() > 0.0);
        prop_assert!((density_moment(&tree, &zeta, 1.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn truncation_family_is_monotone_everywhere(
        a in 0.05f64..2.0,
        b in -1.5f64..1.5,
        z in -12.0f64..12.0,
        n in 1u32..5,
        m in 1u32..5,
    ) {
        let f = quad_linear_f(a, b);
        let (f_nm, g_nm) = truncate_nm(&f, TruncationSpec::new(n, m).unwrap());
        let (f_nm1, _) = truncate_nm(&f, TruncationSpec::new(n, m + 1).unwrap());
        let (f_n1m, _) = truncate_nm(&f, TruncationSpec::new(n + 1, m).unwrap());
        let v = f_nm.eval1(0.0, 0.0, z, 0.0);
        prop_assert!(v <= f_nm1.eval1(0.0, 0.0, z, 0.0));
        prop_assert!(f_n1m.eval1(0.0, 0.0, z, 0.0) <= v);
        prop_assert!(v.abs() <= n.max(m) as f64 + 1e-12);
        // |g_nm| <= max(n, m) and z . g_nm = f_nm.
        let gv = g_nm.eval1(0.0, 0.0, z, 0.0);
        prop_assert!(gv.abs() <= n.max(m) as f64 + 1e-12);
        prop_assert!((z * gv - v).abs() <= 1e-12 * v.abs().max(1.0));
    }

    #[test]
    fn conversion_round_trip_on_probes(
        a in 0.05f64..1.5,
        b in -1.0f64..1.0,
        z in -8.0f64..8.0,
    ) {
        let f = quad_linear_f(a, b);
        let g = f_to_g(&f).unwrap();
        let back = g_to_f(&g);
        let ctx_z = [z];
        let ctx_w = [0.0];
        let ctx = GenCtx::new(0.3, 0.1, &ctx_z, &ctx_w);
        let lhs = back.eval(&ctx);
        let rhs = f.eval(&ctx);
        prop_assert!((lhs - rhs).abs() <= 1e-9 * rhs.abs().max(1.0));
        // z . hat(f) = f including z = 0.
        let ghat = hat_generator(&f);
        let hv = z * ghat.eval1(0.3, 0.1, z, 0.0);
        prop_assert!((hv - rhs).abs() <= 1e-12 * rhs.abs().max(1.0));
        prop_assert_eq!(ghat.eval1(0.3, 0.1, 0.0, 0.0), 0.0);
    }

    #[test]
    fn dual_lp_witness_never_beats_the_norm(
        values in prop::collection::vec(0.0f64..20.0, 2..6),
        p in 1.1f64..4.0,
    ) {
        let prob = 1.0 / values.len() as f64;
        let dist: Vec<(f64, f64)> = values.iter().map(|v| (*v, prob)).collect();
        let report = dual_lp_check(&dist, p).unwrap();
        prop_assert!(report.gap >= -1e-9, "witness beat the norm: {}", report.gap);
        prop_assert!(report.best <= report.lhs + 1e-9);
    }
}
