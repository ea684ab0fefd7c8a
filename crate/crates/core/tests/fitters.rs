use primfit::fitters::{
    discard_small, em_fit, em_fit_traced, oracle_fit, ransac_fit, ransac_hybrid, vote_types, EmConfig, EmCriterion,
    Inject, RansacConfig, DISCARD_FRACTION,
};
use primfit::metrics::{evaluate, p_coverage, DEFAULT_SCALE_EDGES};
use primfit::synthgen::{generate_scene, scene_from_regions, stream_rng, Region, SceneSpec};
use primfit::{Fit, FitMeta, FittedPrimitive, Membership, PrimType, Primitive, Vec3};
use proptest::prelude::*;
use rand::Rng;

type V = Vec3<f64>;

fn fit_with(membership: Membership, types: &[PrimType]) -> Fit {
    Fit {
        primitives: types
            .iter()
            .map(|&t| FittedPrimitive {
                params: match t {
                    PrimType::Plane => Primitive::plane(V::new(0.0, 0.0, 1.0), 0.0),
                    _ => Primitive::sphere(V::zero(), 1.0),
                },
                confidence: 1.0,
            })
            .collect(),
        membership,
        per_point_types: None,
        normals: None,
        meta: FitMeta::default(),
        diagnostics: Vec::new(),
    }
}

#[test]
fn discard_examples() {
    let n = 10_000;
    let mut data = vec![0.0; n * 3];
    // Column 0 empty, column 1 mean 0.0049, column 2 mean 0.0051.
    for i in 0..49 {
        data[i * 3 + 1] = 1.0;
    }
    for i in 0..51 {
        data[(100 + i) * 3 + 2] = 1.0;
    }
    let w = Membership::from_row_major(n, 3, data).unwrap();
    let fit = fit_with(w, &[PrimType::Plane, PrimType::Sphere, PrimType::Plane]);
    let out = discard_small(&fit, DISCARD_FRACTION);
    assert_eq!(out.primitives.len(), 1);
    assert_eq!(out.membership.k(), 1);
    assert_eq!(out.membership.column(0), fit.membership.column(2));
    assert_eq!(out.diagnostics.len(), 2);

    let kept = discard_small(&out, DISCARD_FRACTION);
    assert_eq!(kept.primitives, out.primitives);
    assert_eq!(kept.membership, out.membership);
}

#[test]
fn vote_examples() {
    let w = Membership::from_labels(&[Some(0), Some(0), Some(1), None], 2);
    let t = vec![[0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 1.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0]];
    assert_eq!(vote_types(&t, &w), vec![PrimType::Cylinder, PrimType::Sphere]);
    assert_eq!(vote_types(&vec![[0.25; 4]; 4], &w), vec![PrimType::Plane, PrimType::Plane]);
    let w = Membership::from_labels(&vec![Some(0); 10], 1);
    let mut t = vec![[0.0, 0.0, 0.0, 1.0]; 10];
    for row in t.iter_mut().take(4) {
        *row = [0.0, 1.0, 0.0, 0.0];
    }
    assert_eq!(vote_types(&t, &w), vec![PrimType::Cone]);
}

fn single_plane_scene(noise: f64) -> primfit::Scene {
    let spec = SceneSpec {
        n_points: 2000,
        m_samples: 128,
        noise_amplitude: noise,
        ..SceneSpec::default()
    };
    let r = Region::Rectangle {
        origin: V::zero(),
        u: V::new(1.0, 0.0, 0.0),
        v: V::new(0.0, 0.6, 0.8),
        half_u: 0.7,
        half_v: 0.4,
    };
    scene_from_regions(&[r], &spec, 1).unwrap()
}

#[test]
fn ransac_single_plane() {
    let scene = single_plane_scene(0.0);
    let cfg = RansacConfig {
        distance_epsilon: 0.005,
        ..RansacConfig::default()
    };
    let fit = ransac_fit(&scene.cloud.positions, scene.cloud.normals.as_ref().unwrap(), &cfg).unwrap();
    assert_eq!(fit.primitives.len(), 1);
    assert_eq!(fit.primitives[0].prim_type(), PrimType::Plane);
    assert_eq!(p_coverage(&scene.cloud.positions, &fit.params(), 0.005), 100.0);
}

fn two_spheres(seed: u64) -> primfit::Scene {
    let mut rng = stream_rng(seed, 99);
    let mut c = || V::new(rng.gen_range(-0.05..0.05), rng.gen_range(-0.05..0.05), rng.gen_range(-0.05..0.05));
    let regions = [
        Region::SphereCap {
            center: V::new(-0.6, 0.0, 0.0) + c(),
            pole: V::new(0.0, 0.0, 1.0),
            radius: 0.35,
            min_cos: -1.0,
        },
        Region::SphereCap {
            center: V::new(0.6, 0.1, 0.0) + c(),
            pole: V::new(0.0, 0.0, 1.0),
            radius: 0.3,
            min_cos: -1.0,
        },
    ];
    let spec = SceneSpec {
        n_points: 4000,
        m_samples: 128,
        ..SceneSpec::default()
    };
    scene_from_regions(&regions, &spec, seed).unwrap()
}

#[test]
fn ransac_recovers_two_spheres() {
    let seeds = 20;
    let mut ok = 0;
    for seed in 0..seeds {
        let scene = two_spheres(seed);
        let cfg = RansacConfig { seed, ..RansacConfig::default() };
        let fit = ransac_fit(&scene.cloud.positions, scene.cloud.normals.as_ref().unwrap(), &cfg).unwrap();
        let found = scene.surfaces.iter().all(|s| {
            let PrimitiveParams::Sphere { c, .. } = s.params else { unreachable!() };
            fit.params().iter().any(|p| matches!(p, PrimitiveParams::Sphere { c: q, .. } if (*q - c).norm() < 1e-2))
        });
        ok += usize::from(found);
    }
    assert!(ok * 100 >= 95 * seeds as usize, "{ok} of {seeds}");
}

use primfit::PrimitiveParams;

#[test]
fn ransac_misses_primitive_below_min_inliers() {
    let big = Region::Rectangle {
        origin: V::zero(),
        u: V::new(1.0, 0.0, 0.0),
        v: V::new(0.0, 1.0, 0.0),
        half_u: 0.8,
        half_v: 0.8,
    };
    let small = Region::SphereCap {
        center: V::new(0.0, 0.0, 0.6),
        pole: V::new(0.0, 0.0, 1.0),
        radius: 0.08,
        min_cos: -1.0,
    };
    let spec = SceneSpec {
        n_points: 5000,
        m_samples: 128,
        ..SceneSpec::default()
    };
    let scene = scene_from_regions(&[big, small], &spec, 3).unwrap();
    let count = scene.membership.column_sum(1) as usize;
    let frac = scene.surfaces[1].area_fraction;
    assert!((0.02..=0.05).contains(&frac), "{frac}");
    let cfg = RansacConfig {
        min_inliers: count + 1,
        ..RansacConfig::default()
    };
    let fit = ransac_fit(&scene.cloud.positions, scene.cloud.normals.as_ref().unwrap(), &cfg).unwrap();
    assert!(fit.params().iter().all(|p| p.prim_type() == PrimType::Plane));
    let (m, _) = evaluate(&scene, &fit, &[0.01], &DEFAULT_SCALE_EDGES);
    assert!(m.matched <= 1);
    // The oracle still recovers it.
    let oracle = oracle_fit(&scene);
    let (m, _) = evaluate(&scene, &oracle, &[0.01], &DEFAULT_SCALE_EDGES);
    assert!(m.sk_coverage["0.01"] > 95.0);
}

#[test]
fn ransac_is_deterministic() {
    let scene = generate_scene(&SceneSpec { n_points: 3000, ..SceneSpec::default() }, 4).unwrap();
    let cfg = RansacConfig { seed: 11, ..RansacConfig::default() };
    let a = ransac_hybrid(&scene, &cfg, Inject::default()).unwrap();
    let b = ransac_hybrid(&scene, &cfg, Inject::default()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn injected_membership_is_kept() {
    let scene = generate_scene(&SceneSpec { n_points: 3000, ..SceneSpec::default() }, 5).unwrap();
    let inject = Inject::parse("w,t").unwrap();
    let fit = ransac_hybrid(&scene, &RansacConfig::default(), inject).unwrap();
    assert_eq!(fit.meta.method, "ransac+inject[w,t]");
    assert_eq!(fit.types(), scene.surface_types());
    let (m, _) = evaluate(&scene, &fit, &[0.01], &DEFAULT_SCALE_EDGES);
    assert_eq!(m.seg_mean_iou, Some(1.0));
    assert!(fit.normals.is_some());
    assert!(Inject::parse("w,x").is_err());
    assert_eq!(Inject::parse("").unwrap(), Inject::default());
}

#[test]
fn em_fixed_point_from_ground_truth() {
    for seed in 0..5 {
        let spec = SceneSpec { n_points: 3000, noise_amplitude: 0.0, ..SceneSpec::default() };
        let scene = generate_scene(&spec, seed).unwrap();
        let init = oracle_fit(&scene);
        let (out, trace) = em_fit_traced(&scene.cloud.positions, scene.cloud.normals.as_deref(), &init, &EmConfig::default()).unwrap();
        assert_eq!(trace.steps.len(), 1);
        assert_eq!(trace.steps[0].changed, 0, "seed {seed}");
        assert_eq!(out.membership, init.membership);
    }
}

fn perturbed_plane_sphere_init(seed: u64) -> (primfit::Scene, Fit) {
    let spec = SceneSpec {
        n_points: 2000,
        m_samples: 64,
        type_mix: [0.5, 0.5, 0.0, 0.0],
        k_range: (2, 6),
        ..SceneSpec::default()
    };
    let scene = generate_scene(&spec, seed).unwrap();
    let mut init = oracle_fit(&scene);
    let mut rng = stream_rng(seed, 77);
    for p in &mut init.primitives {
        let v: Vec<f64> = p.params.to_vec().iter().map(|x| x + rng.gen_range(-0.02..0.02)).collect();
        p.params = match Primitive::from_slice(p.prim_type(), &v).unwrap() {
            PrimitiveParams::Plane { a, d } => Primitive::plane(a.normalize(), d),
            s => s,
        };
    }
    (scene, init)
}

#[test]
fn hard_em_energy_is_monotone() {
    let cfg = EmConfig {
        hard_assign: true,
        distance_cap: None,
        criterion: EmCriterion::AlgebraicEnergy,
        ..EmConfig::default()
    };
    for seed in 0..20 {
        let (scene, init) = perturbed_plane_sphere_init(seed);
        let (_, trace) = em_fit_traced(&scene.cloud.positions, None, &init, &cfg).unwrap();
        let mut prev = trace.initial_energy;
        for s in &trace.steps {
            assert!(s.energy_after_assign <= prev + 1e-9, "seed {seed}");
            assert!(s.energy_after_update <= s.energy_after_assign + 1e-9, "seed {seed}");
            prev = s.energy_after_update;
        }
    }
}

#[test]
fn soft_em_rows_are_distributions() {
    let (scene, init) = perturbed_plane_sphere_init(3);
    let cfg = EmConfig { hard_assign: false, distance_cap: None, iterations: 3, ..EmConfig::default() };
    let out = em_fit(&scene.cloud.positions, None, &init, &cfg).unwrap();
    for i in 0..scene.n() {
        let s: f64 = out.membership.row(i).iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }
}

#[test]
fn em_drops_collapsed_columns() {
    let scene = generate_scene(&SceneSpec { n_points: 2000, ..SceneSpec::default() }, 6).unwrap();
    let mut init = oracle_fit(&scene);
    init.primitives.push(FittedPrimitive {
        params: Primitive::sphere(V::new(30.0, 0.0, 0.0), 0.1),
        confidence: 0.0,
    });
    let k = init.membership.k();
    let mut cols: Vec<usize> = (0..k).collect();
    cols.push(0);
    init.membership = init.membership.select_columns(&cols);
    for i in 0..scene.n() {
        init.membership.set(i, k, 0.0);
    }
    let (out, trace) = em_fit_traced(&scene.cloud.positions, scene.cloud.normals.as_deref(), &init, &EmConfig::default()).unwrap();
    assert_eq!(trace.steps[0].collapsed, vec![k]);
    assert_eq!(out.primitives.len(), k);
    assert!(out.diagnostics.iter().any(|d| d.starts_with("ColumnCollapsed")));
    assert!(em_fit(&scene.cloud.positions, None, &Fit::empty(scene.n(), FitMeta::default()), &EmConfig::default()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn discard_is_idempotent(n in 1usize..60, k in 0usize..5, seed in 0u64..1000, thr in 0.0f64..0.5) {
        let mut rng = stream_rng(seed, 0);
        let data: Vec<f64> = (0..n * k).map(|_| if rng.gen_bool(0.3) { rng.gen_range(0.0..1.0) } else { 0.0 }).collect();
        let w = Membership::from_row_major(n, k, data).unwrap();
        let fit = fit_with(w, &vec![PrimType::Plane; k]);
        let once = discard_small(&fit, thr);
        let twice = discard_small(&once, thr);
        prop_assert_eq!(&once.primitives, &twice.primitives);
        prop_assert_eq!(&once.membership, &twice.membership);
    }
}
