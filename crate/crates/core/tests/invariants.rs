use crosslearn::gaussian::{self, SufficientStats, DEFAULT_TOL};
use crosslearn::linalg;
use crosslearn::sir::{sir_simulate, SirParams};
use crosslearn::solvers::project_coupled_ball;
use crosslearn::{parametric_slacks, ParamBundle};
use proptest::prelude::*;

const PROJ_TOL: f64 = 1e-10;

fn bundle_strategy() -> impl Strategy<Value = ParamBundle> {
    (1usize..5, 1usize..4).prop_flat_map(|(t, d)| {
        (
            prop::collection::vec(prop::collection::vec(-5.0f64..5.0, d), t),
            prop::collection::vec(-5.0f64..5.0, d),
        )
            .prop_map(|(per_task, centroid)| ParamBundle::new(per_task, centroid).unwrap())
    })
}

fn means_strategy() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (2usize..6, 1usize..4)
        .prop_flat_map(|(t, d)| prop::collection::vec(prop::collection::vec(-4.0f64..4.0, d), t))
}

fn perturb(b: &ParamBundle, shift: &[f64]) -> ParamBundle {
    let mut k = 0;
    let mut next = || {
        k += 1;
        shift[(k - 1) % shift.len()]
    };
    let per_task = b.per_task.iter().map(|p| p.iter().map(|x| x + next()).collect()).collect();
    let centroid = b.centroid.iter().map(|x| x + next()).collect();
    ParamBundle::new(per_task, centroid).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projection_is_feasible(v in bundle_strategy(), eps in 0.0f64..3.0) {
        let z = project_coupled_ball(&v, eps, PROJ_TOL).unwrap();
        for s in parametric_slacks(&z, eps) {
            prop_assert!(s <= 1e-9, "slack {s}");
        }
    }

    #[test]
    fn projection_is_idempotent(v in bundle_strategy(), eps in 0.0f64..3.0) {
        let z = project_coupled_ball(&v, eps, PROJ_TOL).unwrap();
        let zz = project_coupled_ball(&z, eps, PROJ_TOL).unwrap();
        prop_assert!(z.distance(&zz) <= 1e-6, "moved by {}", z.distance(&zz));
    }

    #[test]
    fn projection_is_nonexpansive(
        v in bundle_strategy(),
        shift in prop::collection::vec(-2.0f64..2.0, 1..8),
        eps in 0.0f64..3.0,
    ) {
        let w = perturb(&v, &shift);
        let pv = project_coupled_ball(&v, eps, PROJ_TOL).unwrap();
        let pw = project_coupled_ball(&w, eps, PROJ_TOL).unwrap();
        prop_assert!(pv.distance(&pw) <= v.distance(&w) + 1e-6);
    }

    #[test]
    fn projection_does_not_beat_feasible_points(v in bundle_strategy(), eps in 0.0f64..3.0) {
        // any feasible bundle is at least as far from v as the projection
        let c = linalg::mean(&v.per_task);
        let per_task = v.per_task.iter().map(|p| linalg::project_ball(p, &c, eps)).collect();
        let feasible = ParamBundle::new(per_task, c).unwrap();
        let z = project_coupled_ball(&v, eps, PROJ_TOL).unwrap();
        prop_assert!(z.distance(&v) <= feasible.distance(&v) + 1e-6);
    }

    #[test]
    fn gaussian_estimate_is_feasible_and_certified(means in means_strategy(), eps in 0.0f64..4.0) {
        let stats = SufficientStats::from_means(means).unwrap();
        let b = gaussian::crosslearn_gaussian(&stats, eps, DEFAULT_TOL).unwrap();
        for s in parametric_slacks(&b, eps) {
            prop_assert!(s <= 1e-9);
        }
        let cert = gaussian::kkt_certificate(&stats, eps, &b).unwrap();
        prop_assert!(cert.passes(), "{cert:?}");
    }

    #[test]
    fn gaussian_endpoints(means in means_strategy()) {
        let stats = SufficientStats::from_means(means.clone()).unwrap();
        let zero = gaussian::crosslearn_gaussian(&stats, 0.0, DEFAULT_TOL).unwrap();
        let grand = linalg::mean(&means);
        for theta in &zero.per_task {
            prop_assert!(linalg::dist(theta, &grand) <= 1e-6);
        }
        let spread = means.iter().map(|m| linalg::dist(m, &grand)).fold(0.0, f64::max);
        let wide = gaussian::crosslearn_gaussian(&stats, 2.0 * spread + 1.0, DEFAULT_TOL).unwrap();
        for (theta, m) in wide.per_task.iter().zip(&means) {
            prop_assert!(linalg::dist(theta, m) <= 1e-12);
        }
    }

    #[test]
    fn fit_improves_with_radius(means in means_strategy(), a in 0.0f64..3.0, b in 0.0f64..3.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let stats = SufficientStats::from_means(means.clone()).unwrap();
        let fit = |eps: f64| {
            let b = gaussian::crosslearn_gaussian(&stats, eps, DEFAULT_TOL).unwrap();
            b.per_task.iter().zip(&means).map(|(t, m)| linalg::dist_sq(t, m)).sum::<f64>()
        };
        prop_assert!(fit(hi) <= fit(lo) + 1e-9);
    }

    #[test]
    fn ball_projection_lands_in_ball(
        p in prop::collection::vec(-10.0f64..10.0, 3),
        c in prop::collection::vec(-10.0f64..10.0, 3),
        r in 0.0f64..5.0,
    ) {
        let q = linalg::project_ball(&p, &c, r);
        prop_assert!(linalg::dist(&q, &c) <= r + 1e-12);
        if linalg::dist(&p, &c) <= r {
            prop_assert_eq!(q, p);
        }
    }

    #[test]
    fn sir_conserves_population(beta in 0.0f64..1.5, gamma in 0.0f64..1.0, frac in 1e-4f64..0.1) {
        let n = 1e5;
        let traj = sir_simulate(SirParams { beta, gamma }, n * (1.0 - frac), n * frac, 0.0, n, 60, 0.1).unwrap();
        for k in 0..traj.s.len() {
            let total = traj.s[k] + traj.i[k] + traj.r[k];
            prop_assert!((total - n).abs() <= 1e-6 * n);
            prop_assert!(traj.s[k] >= -1e-9 && traj.i[k] >= -1e-9);
            if k > 0 {
                prop_assert!(traj.s[k] <= traj.s[k - 1] + 1e-9);
                prop_assert!(traj.r[k] >= traj.r[k - 1] - 1e-9);
            }
        }
    }
}
