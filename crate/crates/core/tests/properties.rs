mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use splatprio::image::{Image, LabelMask};
use splatprio::io::ply::{gaussians_from_table, gaussians_to_table, PlyTable};
use splatprio::metrics::MetricsReport;
use splatprio::math::Rgb;
use splatprio::optim::{hybrid_score, normalize_grad_scores, prune_count, prune_step, ImportanceState};
use splatprio::priority::{render_priority, render_single_pass, select_occluders, PriorityConfig};
use splatprio::raster::{render_gaussians, RasterConfig};
use splatprio::scene::{Gaussian, SceneModel};
use splatprio::semantic::{compute_semantic_scores, labels, SemanticClassTable, SemanticMask};

fn world(seed: u64, n: usize) -> Vec<Gaussian> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    common::random_world(&mut rng, n, 32, 32, 32.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn hybrid_is_affine_in_s_sem(s_grad in 0.0..=1.0f64, alpha in 0.0..=1.0f64, a in 0.0..=1.0f64, b in 0.0..=1.0f64) {
        prop_assume!((a - b).abs() > 1e-3);
        let slope = (hybrid_score(a, s_grad, alpha) - hybrid_score(b, s_grad, alpha)) / (a - b);
        prop_assert!((slope - alpha).abs() < 1e-9);
    }

    #[test]
    fn critical_gaussian_outranks_weak_noncritical(g in 0.0..(2.0 / 3.0 - 1e-9f64)) {
        prop_assert!(hybrid_score(1.0, 0.0, 0.4) > hybrid_score(0.0, g, 0.4));
    }

    #[test]
    fn prune_keeps_the_highest_scores(
        seed in any::<u64>(),
        n in 0usize..1000,
        rate in 0.0..0.99f64,
        alpha in 0.0..=1.0f64,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut scene = SceneModel::from_static(common::random_world(&mut rng, n, 16, 16, 16.0), Rgb::zeros());
        let mut state = ImportanceState::new(&scene, alpha);
        for (i, r) in state.raw_grad_accum.iter_mut().enumerate() {
            *r = ((i as u64).wrapping_mul(seed | 1) % 97) as f64;
        }
        normalize_grad_scores(&mut state);
        let before: Vec<_> = state.ids.iter().copied().zip(state.s_hybrid.iter().copied()).collect();
        let ev = prune_step(&mut scene, &mut state, rate, 1).unwrap();
        prop_assert_eq!(ev.count_after, n - prune_count(rate, n));
        prop_assert_eq!(scene.gaussian_count(), ev.count_after);
        let removed: std::collections::HashSet<_> = ev.removed.iter().copied().collect();
        let max_removed = before.iter().filter(|(id, _)| removed.contains(id)).map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        let min_kept = before.iter().filter(|(id, _)| !removed.contains(id)).map(|p| p.1).fold(f64::INFINITY, f64::min);
        prop_assert!(max_removed <= min_kept);
    }

    #[test]
    fn ply_round_trip_is_lossless(seed in any::<u64>(), n in 0usize..40) {
        let w: Vec<Gaussian> = world(seed, n)
            .into_iter()
            .map(|mut g| {
                let coeffs = 4;
                g.sh.resize(coeffs, Rgb::new(0.01, -0.02, 0.03));
                g
            })
            .collect();
        let bytes = gaussians_to_table(&w).unwrap().to_bytes();
        prop_assert_eq!(gaussians_from_table(&PlyTable::from_bytes(&bytes).unwrap()).unwrap(), w);
    }

    #[test]
    fn truncated_ply_is_an_error(seed in any::<u64>(), n in 1usize..10, cut in 1usize..200) {
        let w: Vec<Gaussian> = world(seed, n).into_iter().map(|mut g| { g.sh.truncate(1); g }).collect();
        let bytes = gaussians_to_table(&w).unwrap().to_bytes();
        let cut = cut.min(bytes.len());
        prop_assert!(PlyTable::from_bytes(&bytes[..bytes.len() - cut]).is_err());
    }

    #[test]
    fn metrics_regions_partition_pixels(seed in any::<u64>(), w in 1usize..20, h in 1usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = Image::new(w, h);
        let mut b = Image::new(w, h);
        for v in a.data.iter_mut().chain(b.data.iter_mut()) {
            *v = rng.random_range(0.0..1.0);
        }
        let mask: Vec<bool> = (0..w * h).map(|_| rng.random_bool(0.3)).collect();
        let r = MetricsReport::compare(&a, &b, Some(&mask)).unwrap();
        prop_assert_eq!(r.pixels_critical + r.pixels_noncritical, r.pixels_global);
        prop_assert_eq!(r.psnr_critical.is_none(), r.pixels_critical == 0);
        prop_assert_eq!(r.psnr_noncritical.is_none(), r.pixels_noncritical == 0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn rendering_ignores_worker_count(seed in any::<u64>(), n in 0usize..60) {
        let w = world(seed, n);
        let cam = common::camera(32, 32, 32.0);
        let serial = RasterConfig { parallel: false, ..RasterConfig::default() };
        let a = render_gaussians(&w, &cam, Rgb::zeros(), &RasterConfig::default(), None).0;
        let b = render_gaussians(&w, &cam, Rgb::zeros(), &serial, None).0;
        prop_assert!(a.color.data.iter().zip(&b.color.data).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn priority_pass_is_sound(seed in any::<u64>(), n in 0usize..80) {
        let w = world(seed, n);
        let cam = common::camera(32, 32, 32.0);
        let cfg = PriorityConfig::default();
        let (single, ss) = render_single_pass(&w, &cam, Rgb::zeros(), &cfg.raster);
        let (_, ps, _) = render_priority(&w, &cam, Rgb::zeros(), &cfg);
        prop_assert!(ps.fragments_shaded + ps.fragments_culled_earlyz <= ps.fragments_binned);
        prop_assert!(ps.fragments_shaded <= ss.fragments_shaded);
        prop_assert_eq!(ps.prepass_sh_evaluations, 0);

        let off = PriorityConfig { opacity_threshold: 1.01, ..PriorityConfig::default() };
        let (img, os, _) = render_priority(&w, &cam, Rgb::zeros(), &off);
        prop_assert_eq!(os.fragments_culled_earlyz, 0);
        prop_assert!(img.color.data.iter().zip(&single.color.data).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn culling_is_monotone(seed in any::<u64>(), n in 0usize..80, e1 in 0.0..0.5f64, e2 in 0.0..0.5f64, o1 in 0.0..1.0f64, o2 in 0.0..1.0f64) {
        let w = world(seed, n);
        let cam = common::camera(32, 32, 32.0);
        let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
        let culled = |eps: f64| {
            let cfg = PriorityConfig { rel_epsilon: eps, ..PriorityConfig::default() };
            render_priority(&w, &cam, Rgb::zeros(), &cfg).1.fragments_culled_earlyz
        };
        prop_assert!(culled(hi) <= culled(lo));
        let (olo, ohi) = if o1 <= o2 { (o1, o2) } else { (o2, o1) };
        prop_assert!(select_occluders(&w, 0.5, ohi).len() <= select_occluders(&w, 0.5, olo).len());
    }

    #[test]
    fn semantic_scores_stay_in_unit_interval(seed in any::<u64>(), n in 0usize..40, views in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scene = SceneModel::from_static(common::random_world(&mut rng, n, 16, 16, 16.0), Rgb::zeros());
        let cams: Vec<_> = (0..views as u32).map(|i| { let mut c = common::camera(16, 16, 16.0); c.id = i; c }).collect();
        let masks: Vec<SemanticMask> = cams
            .iter()
            .map(|c| {
                let mut m = LabelMask::new(16, 16, labels::ROAD);
                for l in m.labels.iter_mut() {
                    if rng.random_bool(0.4) {
                        *l = labels::VEHICLE;
                    }
                }
                SemanticMask { view_id: c.id, mask: m }
            })
            .collect();
        let scores = compute_semantic_scores(&scene, &cams, &masks, &SemanticClassTable::default()).unwrap();
        for (s, critical) in scores {
            prop_assert!((0.0..=1.0).contains(&s));
            prop_assert_eq!(critical, s >= 0.5);
        }
    }
}
