use proptest::prelude::*;

use manifold_walk::expr::parse;
use manifold_walk::geometry::{catalog, metric_at, ChartPoint, ManifoldPoint};
use manifold_walk::retraction::RetractionKind;
use manifold_walk::sampling::{sample_tangent, RandomStream};
use manifold_walk::walk::{map_ensemble, run_walk, WalkCheckpoint, WalkConfig, Walker};

fn config() -> ProptestConfig {
    ProptestConfig {
        cases: 24,
        ..ProptestConfig::default()
    }
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn projected_walks_stay_on_the_manifold(
        seed in any::<u64>(),
        eps in 0.02f64..0.3,
        name in prop::sample::select(vec!["sphere:dim=2", "sphere:dim=3", "ellipsoid", "genus2"]),
    ) {
        let m = catalog::lookup(name).unwrap();
        let traj = run_walk(&m, &WalkConfig::new(eps, 200, RetractionKind::ProjectNewton, seed)).unwrap();
        let e = traj.epsilon;
        for p in &traj.points {
            let r = m.constraint_residual(&m.ambient(&p.point).unwrap()).unwrap();
            prop_assert!(r <= e * e * e, "residual {r} at step {}", p.index);
        }
    }

    #[test]
    fn chart_walks_embed_on_the_torus(seed in any::<u64>(), eps in 0.02f64..0.5) {
        let m = catalog::lookup("torus:R=1.1").unwrap();
        let traj = run_walk(&m, &WalkConfig::new(eps, 200, RetractionKind::ParamChristoffel, seed)).unwrap();
        for p in &traj.points {
            let x = m.ambient(&p.point).unwrap();
            let rho = (x[0] * x[0] + x[1] * x[1]).sqrt();
            prop_assert!(((rho - 1.1).powi(2) + x[2] * x[2] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn recorded_times_and_indices(seed in any::<u64>(), steps in 1usize..300, every in 1usize..20) {
        let m = catalog::lookup("flat-torus").unwrap();
        let mut cfg = WalkConfig::new(0.1, steps, RetractionKind::ParamChristoffel, seed);
        cfg.record_every = every;
        let traj = run_walk(&m, &cfg).unwrap();
        prop_assert_eq!(traj.points.len(), cfg.recorded_len());
        prop_assert_eq!(traj.points.last().unwrap().index, steps);
        for w in traj.points.windows(2) {
            prop_assert!(w[0].index < w[1].index);
        }
        for p in &traj.points {
            prop_assert!(p.index % every == 0 || p.index == steps);
            prop_assert_eq!(p.time, traj.epsilon * traj.epsilon * p.index as f64);
        }
    }

    #[test]
    fn restarts_halve_the_stepsize(seed in any::<u64>(), eps in 0.5f64..2.0) {
        let m = catalog::lookup("genus2").unwrap();
        let mut cfg = WalkConfig::new(eps, 60, RetractionKind::ProjectNewton, seed);
        cfg.max_restarts = 12;
        let traj = run_walk(&m, &cfg).unwrap();
        let mut e = eps;
        for r in &traj.restarts {
            prop_assert_eq!(r.old_epsilon, e);
            prop_assert_eq!(r.new_epsilon, e / 2.0);
            e /= 2.0;
        }
        prop_assert_eq!(traj.epsilon, e);
        prop_assert_eq!(traj.points.len(), 61);
        prop_assert_eq!(traj.points[0].index, 0);
    }

    #[test]
    fn checkpoints_replay_exactly(seed in any::<u64>(), cut in 0usize..80) {
        let m = catalog::lookup("ellipsoid").unwrap();
        let cfg = WalkConfig::new(0.2, 80, RetractionKind::ProjectNewton, seed);
        let whole = run_walk(&m, &cfg).unwrap();

        let mut w = Walker::new(&m, cfg.clone()).unwrap();
        while w.index() < cut {
            w.step().unwrap();
        }
        let text = serde_json::to_string(&w.checkpoint()).unwrap();
        let cp: WalkCheckpoint = serde_json::from_str(&text).unwrap();
        let mut w = Walker::resume(&m, cfg, &cp).unwrap();
        while !w.is_done() {
            w.step().unwrap();
        }
        prop_assert_eq!(w.current(), whole.final_point());
    }

    #[test]
    fn ensembles_ignore_the_schedule(seed in any::<u64>(), walkers in 1usize..12, threads in 2usize..5) {
        let m = catalog::lookup("sphere-param").unwrap();
        let cfg = WalkConfig::new(0.15, 25, RetractionKind::ParamChristoffel, seed);
        let a = map_ensemble(&m, &cfg, walkers, 1, |j, t| (j, t)).unwrap();
        let b = map_ensemble(&m, &cfg, walkers, threads, |j, t| (j, t)).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn chart_tangents_have_unit_length(seed in any::<u64>(), s in 0.0f64..6.28, t in 0.0f64..6.28) {
        let m = catalog::lookup("torus:R=1.1").unwrap();
        let p = ChartPoint::new(0, vec![s, t]);
        let g = metric_at(&m, &p).unwrap();
        let mut rng = RandomStream::new(seed, 0);
        let v = sample_tangent(&m, &ManifoldPoint::Chart(p), &mut rng).unwrap();
        prop_assert!((g.inner(&v, &v) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn expressions_print_and_reparse(
        a in -3.0f64..3.0,
        b in 0.1f64..3.0,
        x in -1.0f64..1.0,
        y in -1.0f64..1.0,
    ) {
        let text = format!("{a}*sin(x1)^2 + exp({b}*x2) / (1 + x1^2) - sqrt({b} + x2^2)");
        let ast = parse(&text, 2).unwrap();
        let again = parse(&ast.to_string(), 2).unwrap();
        prop_assert_eq!(&ast, &again);
        let p = [x, y];
        prop_assert_eq!(ast.eval(&p).unwrap(), again.eval(&p).unwrap());
    }

    #[test]
    fn jets_match_central_differences(x in -1.0f64..1.0, y in -1.0f64..1.0) {
        let ast = parse("x1^2*x2 + cos(x1 - 2*x2) + log(2 + x2^2)", 2).unwrap();
        let jet = ast.eval_jet(&[x, y]).unwrap();
        let h = 1e-5;
        let f = |u: f64, v: f64| ast.eval(&[u, v]).unwrap();
        let gx = (f(x + h, y) - f(x - h, y)) / (2.0 * h);
        let gy = (f(x, y + h) - f(x, y - h)) / (2.0 * h);
        prop_assert!((jet.grad()[0] - gx).abs() < 1e-8);
        prop_assert!((jet.grad()[1] - gy).abs() < 1e-8);
        let hxy = (f(x + h, y + h) - f(x + h, y - h) - f(x - h, y + h) + f(x - h, y - h)) / (4.0 * h * h);
        prop_assert!((jet.hess(0, 1) - hxy).abs() < 1e-4);
        prop_assert_eq!(jet.hess(0, 1), jet.hess(1, 0));
    }
}
