use std::collections::BTreeSet;

use proptest::prelude::*;

use svbounds::blockview::{block_transform, hmt_pair};
use svbounds::bounds::forward_bound;
use svbounds::extract::{extract, CountingMatrix, Method};
use svbounds::harness::{run_experiment, BoundColumn, ExperimentConfig};
use svbounds::kernels::singular_values;
use svbounds::sketching::sketch_subspaces;
use svbounds::synthgen::{assemble_synthetic, gaussian_matrix, haar_orthonormal, stream_rng, sv_profile, ProfileKind};

fn decay(exponential: bool) -> ProfileKind {
    if exponential {
        ProfileKind::Exponential
    } else {
        ProfileKind::Algebraic
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn singular_values_are_orthogonally_invariant(
        seed in any::<u64>(),
        rows in 2usize..30,
        cols in 1usize..20,
    ) {
        prop_assume!(rows >= cols);
        let a = gaussian_matrix(rows, cols, &mut stream_rng(seed, 7));
        let u = haar_orthonormal(rows, rows, seed ^ 1).unwrap();
        let v = haar_orthonormal(cols, cols, seed ^ 2).unwrap();
        let s0 = singular_values(&a).unwrap();
        let s1 = singular_values(&(&u * &a * v.transpose())).unwrap();
        for (x, y) in s0.iter().zip(&s1) {
            prop_assert!((x - y).abs() <= 1e-10 * s0[0]);
        }
    }

    /// A bound below Weyl's needs `τ_i < 1`.
    #[test]
    fn beating_weyl_requires_small_tau(
        seed in any::<u64>(),
        n in 20usize..60,
        r in 2usize..8,
        exponential in any::<bool>(),
        q in 1usize..=2,
    ) {
        let t = assemble_synthetic(&sv_profile(decay(exponential), n).unwrap(), n, seed).unwrap();
        let s = sketch_subspaces(&t.a, r, 0, q, seed).unwrap();
        let p = block_transform(&t.a, &s).unwrap();
        for method in [Method::Rr, Method::Gn] {
            let rep = forward_bound(&p, method, t.sigma()).unwrap();
            for e in rep.entries.iter().filter(|e| e.applicable && e.bound < rep.weyl) {
                prop_assert!(e.tau < 1.0, "{method}: tau {} bound {} weyl {}", e.tau, e.bound, rep.weyl);
            }
        }
    }

    #[test]
    fn forward_bounds_dominate_errors(
        seed in any::<u64>(),
        n in 20usize..60,
        r in 2usize..8,
        ell in 0usize..4,
        exponential in any::<bool>(),
    ) {
        let t = assemble_synthetic(&sv_profile(decay(exponential), n).unwrap(), n, seed).unwrap();
        let s = sketch_subspaces(&t.a, r, ell, 1, seed).unwrap();
        let p = block_transform(&t.a, &s).unwrap();
        let hp = block_transform(&t.a, &hmt_pair(&t.a, &s).unwrap()).unwrap();
        let tol = 1e-10 * t.sigma()[0];
        for method in Method::ALL {
            let part = if method == Method::Hmt { &hp } else { &p };
            let rep = forward_bound(part, method, t.sigma()).unwrap();
            let got = match extract(&CountingMatrix::new(&t.a).unwrap(), &s, method) {
                Ok(g) => g,
                Err(_) => continue,
            };
            for (k, e) in rep.entries.iter().enumerate() {
                let err = (t.sigma()[k] - got.sigma_hat[k]).abs();
                prop_assert!(err <= rep.weyl + tol);
                if e.applicable {
                    prop_assert!(err <= e.bound + tol, "{method} i={}: {err:e} > {:e}", k + 1, e.bound);
                }
            }
        }
    }
}

/// Every rigorous bound column, every method, across sizes, decays,
/// oversampling and power steps.
#[test]
fn soundness_sweep() {
    let mut instances = 0;
    for (n, r, trials) in [(100, 10, 4), (400, 50, 3)] {
        for exponential in [true, false] {
            for ell in [0, r / 2] {
                for q in [1, 2] {
                    let cfg = ExperimentConfig {
                        m: n,
                        n,
                        r,
                        ell,
                        q,
                        decay: decay(exponential),
                        trials,
                        seed: 900 + n as u64,
                        ..ExperimentConfig::default()
                    };
                    let rep = run_experiment(&cfg).unwrap();
                    assert_eq!(rep.failed_trials(), 0, "{cfg}");
                    assert!(rep.violations.is_empty(), "{cfg}: {:?}", rep.violations);
                    instances += trials;
                }
            }
        }
    }
    assert!(instances >= 50);
}

#[test]
fn more_power_steps_do_not_hurt_sigma_1() {
    let profile = sv_profile(ProfileKind::Exponential, 200).unwrap();
    let mut medians = Vec::new();
    for q in 1..=3 {
        let mut errs: Vec<f64> = (0..20)
            .map(|seed| {
                let t = assemble_synthetic(&profile, 200, seed).unwrap();
                let s = sketch_subspaces(&t.a, 20, 0, q, seed).unwrap();
                let got = extract(&CountingMatrix::new(&t.a).unwrap(), &s, Method::Gn).unwrap();
                (t.sigma()[0] - got.sigma_hat[0]).abs()
            })
            .collect();
        errs.sort_by(f64::total_cmp);
        medians.push(0.5 * (errs[9] + errs[10]));
    }
    assert!(medians.windows(2).all(|w| w[1] <= w[0]), "{medians:?}");
}

#[test]
fn improved_bound_is_reported_not_enforced() {
    let cfg = ExperimentConfig {
        m: 100,
        n: 100,
        r: 10,
        ell: 5,
        trials: 3,
        methods: [Method::Gn].into_iter().collect(),
        bounds: [BoundColumn::Improved].into_iter().collect::<BTreeSet<_>>(),
        ..ExperimentConfig::default()
    };
    let rep = run_experiment(&cfg).unwrap();
    assert!(rep.violations.is_empty());
    assert!(rep.data_rows().all(|d| d.bounds.improved.is_some()));
}
