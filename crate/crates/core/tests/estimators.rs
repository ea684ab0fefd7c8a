use std::f64::consts::PI;

use primfit::estimators::{distance, estimate_all, fit, fit_cone, fit_cylinder, fit_plane, fit_sphere, EstimatorInput};
use primfit::gradcheck::{random_segment, run_trials};
use primfit::{MembershipMatrix, PrimType, Primitive, Vec3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type V = Vec3<f64>;

fn unit(rng: &mut ChaCha8Rng) -> V {
    loop {
        let v = V::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        if v.norm() > 0.2 && v.norm() < 1.0 {
            return v.normalize();
        }
    }
}

fn perp_basis(a: V) -> (V, V) {
    let helper = if a[0].abs() < 0.9 { V::new(1.0, 0.0, 0.0) } else { V::new(0.0, 1.0, 0.0) };
    let u = a.cross(&helper).normalize();
    (u, a.cross(&u))
}

/// Exact samples and outward normals of a random primitive of type `t`.
fn exact_samples(t: PrimType, rng: &mut ChaCha8Rng, n: usize) -> (Primitive, Vec<V>, Vec<V>) {
    let center = V::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5));
    let a = unit(rng);
    let (u, v) = perp_basis(a);
    let mut pts = Vec::new();
    let mut nrm = Vec::new();
    let prim = match t {
        PrimType::Plane => {
            for _ in 0..n {
                pts.push(center + u * rng.gen_range(-1.0..1.0) + v * rng.gen_range(-0.7..0.7));
                nrm.push(a);
            }
            Primitive::plane(a, a.dot(&center))
        }
        PrimType::Sphere => {
            let r: f64 = rng.gen_range(0.2..0.9);
            for _ in 0..n {
                let d = unit(rng);
                pts.push(center + d * r);
                nrm.push(d);
            }
            Primitive::sphere(center, r)
        }
        PrimType::Cylinder => {
            let r: f64 = rng.gen_range(0.2..0.9);
            for _ in 0..n {
                let phi = rng.gen_range(0.0..2.0 * PI);
                let d = u * phi.cos() + v * phi.sin();
                pts.push(center + a * rng.gen_range(-1.0..1.0) + d * r);
                nrm.push(d);
            }
            let c = center - a * a.dot(&center);
            Primitive::cylinder(a, c, r)
        }
        PrimType::Cone => {
            let theta: f64 = rng.gen_range(0.2..1.2);
            for _ in 0..n {
                let phi = rng.gen_range(0.0..2.0 * PI);
                let d = u * phi.cos() + v * phi.sin();
                let s = rng.gen_range(0.2..1.0);
                pts.push(center + (a * theta.cos() + d * theta.sin()) * s);
                nrm.push(d * theta.cos() - a * theta.sin());
            }
            Primitive::cone(center, a, theta)
        }
    };
    (prim, pts, nrm)
}

fn assert_params_close(t: PrimType, got: &Primitive, want: &Primitive, tol: f64, cos_tol: f64) {
    if let (Some(a), Some(b)) = (got.axis(), want.axis()) {
        assert!(a.dot(&b).abs() > 1.0 - cos_tol, "{t}: axis {a:?} vs {b:?}");
    }
    match (got, want) {
        (Primitive::Plane { a, d }, Primitive::Plane { a: b, d: e }) => {
            let s = a.dot(b).signum();
            assert!((d - s * e).abs() < tol, "plane offset {d} vs {e}");
        }
        (Primitive::Sphere { c, r }, Primitive::Sphere { c: c2, r: r2 }) => {
            assert!((*c - *c2).norm() < tol && (r - r2).abs() < tol, "sphere {c:?} {r} vs {c2:?} {r2}");
        }
        (Primitive::Cylinder { c, r, .. }, Primitive::Cylinder { c: c2, r: r2, .. }) => {
            assert!((*c - *c2).norm() < tol, "cylinder center {c:?} vs {c2:?}");
            assert!((r - r2).abs() < tol);
        }
        (Primitive::Cone { c, a, theta }, Primitive::Cone { c: c2, a: a2, theta: t2 }) => {
            assert!((*c - *c2).norm() < tol && (theta - t2).abs() < tol, "cone {c:?} {theta} vs {c2:?} {t2}");
            assert!(a.dot(a2) > 0.0, "cone axis must point into the cone");
        }
        _ => panic!("type mismatch"),
    }
}

#[test]
fn zero_residual_recovery_every_type() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for t in PrimType::ALL {
        for _ in 0..50 {
            let (truth, pts, nrm) = exact_samples(t, &mut rng, 80);
            let w = vec![rng.gen_range(0.1..1.0); pts.len()];
            let est = fit(t, &EstimatorInput::new(&pts, Some(&nrm), &w)).unwrap();
            assert!(!est.trivialized);
            assert_params_close(t, &est.params, &truth, 1e-7, 1e-10);
            for p in &pts {
                assert!(distance(p, &est.params) < 1e-7);
            }
        }
    }
}

#[test]
fn plane_axis_aligned_examples() {
    let pts: Vec<V> = (0..20).map(|i| V::new((i % 5) as f64, (i / 5) as f64 * 0.7, 2.0)).collect();
    let w: Vec<f64> = (0..20).map(|i| 0.1 + 0.04 * i as f64).collect();
    let est = fit_plane(&EstimatorInput::new(&pts, None, &w)).unwrap();
    let Primitive::Plane { a, d } = est.params else { panic!() };
    assert!((a - V::new(0.0, 0.0, 1.0)).norm() < 1e-9 && (d - 2.0).abs() < 1e-9);

    let sphere: Vec<V> = {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        (0..100).map(|_| unit(&mut rng)).collect()
    };
    let est = fit_sphere(&EstimatorInput::new(&sphere, None, &[1.0; 100])).unwrap();
    let Primitive::Sphere { c, r } = est.params else { panic!() };
    assert!(c.norm() < 1e-9 && (r - 1.0).abs() < 1e-9);
}

#[test]
fn plane_ignores_negligible_cluster() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let (_, a_pts, _) = exact_samples(PrimType::Plane, &mut rng, 40);
    let (_, b_pts, _) = exact_samples(PrimType::Plane, &mut rng, 40);
    let mut pts = a_pts.clone();
    pts.extend(&b_pts);
    let w: Vec<f64> = (0..80).map(|i| if i < 40 { 1.0 } else { 1e-9 }).collect();
    let both = fit_plane(&EstimatorInput::new(&pts, None, &w)).unwrap().params;
    let alone = fit_plane(&EstimatorInput::new(&a_pts, None, &[1.0; 40])).unwrap().params;
    let (va, vb) = (both.to_vec(), alone.to_vec());
    for k in 0..4 {
        assert!((va[k] - vb[k]).abs() < 1e-6);
    }
}

#[test]
fn noisy_plane_residual_small() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let (truth, clean, nrm) = exact_samples(PrimType::Plane, &mut rng, 500);
    let noisy: Vec<V> = clean.iter().zip(&nrm).map(|(p, n)| *p + *n * rng.gen_range(-0.01..0.01)).collect();
    let est = fit_plane(&EstimatorInput::new(&noisy, None, &[1.0; 500])).unwrap();
    let mean = clean.iter().map(|p| distance(p, &est.params)).sum::<f64>() / 500.0;
    assert!(mean < 0.01);
    assert!(truth.axis().unwrap().dot(&est.params.axis().unwrap()).abs() > 0.999);
}

fn plane_energy(pts: &[V], w: &[f64], a: V, d: f64) -> f64 {
    pts.iter().zip(w).map(|(p, wi)| wi * (a.dot(p) - d).powi(2)).sum()
}

fn sphere_energy(pts: &[V], w: &[f64], c: V, r2: f64) -> f64 {
    pts.iter().zip(w).map(|(p, wi)| wi * ((*p - c).norm_squared() - r2).powi(2)).sum()
}

#[test]
fn plane_and_sphere_are_energy_minimizers() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    for _ in 0..20 {
        let (_, clean, nrm) = exact_samples(PrimType::Plane, &mut rng, 60);
        let pts: Vec<V> = clean.iter().zip(&nrm).map(|(p, n)| *p + *n * rng.gen_range(-0.05..0.05)).collect();
        let w: Vec<f64> = (0..60).map(|_| rng.gen_range(0.1..1.0)).collect();
        let Primitive::Plane { a, d } = fit_plane(&EstimatorInput::new(&pts, None, &w)).unwrap().params else {
            panic!()
        };
        let e0 = plane_energy(&pts, &w, a, d);
        for _ in 0..100 {
            let a2 = (a + unit(&mut rng) * 1e-3).normalize();
            let d2 = d + rng.gen_range(-1e-3..1e-3);
            assert!(e0 <= plane_energy(&pts, &w, a2, d2) + 1e-12);
        }

        let (_, clean, nrm) = exact_samples(PrimType::Sphere, &mut rng, 60);
        let pts: Vec<V> = clean.iter().zip(&nrm).map(|(p, n)| *p + *n * rng.gen_range(-0.05..0.05)).collect();
        let Primitive::Sphere { c, r } = fit_sphere(&EstimatorInput::new(&pts, None, &w)).unwrap().params else {
            panic!()
        };
        let e0 = sphere_energy(&pts, &w, c, r * r);
        for _ in 0..100 {
            let c2 = c + unit(&mut rng) * 1e-3;
            let r2 = r * r + rng.gen_range(-1e-3..1e-3);
            assert!(e0 <= sphere_energy(&pts, &w, c2, r2) + 1e-12);
        }
    }
}

#[test]
fn coplanar_sphere_segment_trivializes() {
    let pts: Vec<V> = (0..30).map(|i| V::new((i % 6) as f64 * 0.1, (i / 6) as f64 * 0.1, 0.3)).collect();
    let est = fit_sphere(&EstimatorInput::new(&pts, None, &[1.0; 30])).unwrap();
    assert!(est.trivialized);
    let Primitive::Sphere { c, r } = est.params else { panic!() };
    assert_eq!(c, V::zero());
    assert!(r.is_finite());
}

#[test]
fn cylinder_with_parallel_normals_trivializes() {
    let pts: Vec<V> = (0..30).map(|i| V::new((i % 6) as f64 * 0.1, (i / 6) as f64 * 0.1, 0.0)).collect();
    let nrm = vec![V::new(0.0, 0.0, 1.0); 30];
    let est = fit_cylinder(&EstimatorInput::new(&pts, Some(&nrm), &[1.0; 30])).unwrap();
    let a = est.params.axis().unwrap();
    assert!(a.dot(&V::new(0.0, 0.0, 1.0)).abs() < 1e-9);
    assert!(est.trivialized);
    assert!(est.params.is_finite());
}

#[test]
fn cylinder_tolerates_perturbed_normals() {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    let (truth, pts, nrm) = exact_samples(PrimType::Cylinder, &mut rng, 200);
    let max_tilt = 1f64.to_radians();
    let nrm: Vec<V> = nrm.iter().map(|n| (*n + unit(&mut rng) * (max_tilt * 0.5)).normalize()).collect();
    let est = fit_cylinder(&EstimatorInput::new(&pts, Some(&nrm), &[1.0; 200])).unwrap();
    let cos = truth.axis().unwrap().dot(&est.params.axis().unwrap()).abs();
    assert!(cos.min(1.0).acos() < 2.0 * max_tilt);
}

#[test]
fn cone_theta_under_point_noise() {
    let mut rng = ChaCha8Rng::seed_from_u64(26);
    for _ in 0..20 {
        let (truth, clean, nrm) = exact_samples(PrimType::Cone, &mut rng, 100);
        let pts: Vec<V> = clean.iter().zip(&nrm).map(|(p, n)| *p + *n * rng.gen_range(-0.01..0.01)).collect();
        let est = fit_cone(&EstimatorInput::new(&pts, Some(&nrm), &[1.0; 100])).unwrap();
        let (Primitive::Cone { theta, .. }, Primitive::Cone { theta: t0, .. }) = (est.params, truth) else {
            panic!()
        };
        assert!((theta - t0).abs() < 0.05, "theta {theta} vs {t0}");
    }
}

#[test]
fn near_cylinder_cone_stays_finite() {
    let mut rng = ChaCha8Rng::seed_from_u64(27);
    let (_, pts, nrm) = exact_samples(PrimType::Cylinder, &mut rng, 100);
    let est = fit_cone(&EstimatorInput::new(&pts, Some(&nrm), &[1.0; 100])).unwrap();
    assert!(est.params.is_finite());
    let Primitive::Cone { theta, .. } = est.params else { panic!() };
    assert!(est.trivialized || (1e-4..=PI / 2.0 - 1e-4).contains(&theta));
    let (_, g) = primfit::estimators::fit_with_gradient(PrimType::Cone, &EstimatorInput::new(&pts, Some(&nrm), &[1.0; 100])).unwrap();
    assert!(g.is_finite());
}

#[test]
fn estimate_all_isolates_failing_columns() {
    let mut rng = ChaCha8Rng::seed_from_u64(28);
    let (p1, a, na) = exact_samples(PrimType::Sphere, &mut rng, 50);
    let (p2, b, nb) = exact_samples(PrimType::Cone, &mut rng, 50);
    let pts: Vec<V> = a.iter().chain(&b).copied().collect();
    let nrm: Vec<V> = na.iter().chain(&nb).copied().collect();
    let labels: Vec<Option<usize>> = (0..100).map(|i| Some(i / 50)).collect();
    let mut w = MembershipMatrix::from_labels(&labels, 3);
    w.set(0, 0, 1.0);
    let out = estimate_all(&pts, Some(&nrm), &w, &[PrimType::Sphere, PrimType::Cone, PrimType::Plane]).unwrap();
    assert_params_close(PrimType::Sphere, &out[0].as_ref().unwrap().params, &p1, 1e-7, 1e-10);
    assert_params_close(PrimType::Cone, &out[1].as_ref().unwrap().params, &p2, 1e-7, 1e-10);
    assert!(out[2].is_err());
}

#[test]
fn soft_membership_close_to_binary() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let (s1, a, na) = exact_samples(PrimType::Plane, &mut rng, 60);
    let (s2, b, nb) = exact_samples(PrimType::Sphere, &mut rng, 60);
    let pts: Vec<V> = a.iter().chain(&b).copied().collect();
    let nrm: Vec<V> = na.iter().chain(&nb).copied().collect();
    let prims = [s1, s2];
    let temp = 0.01;
    let mut soft = MembershipMatrix::zeros(120, 2);
    for (i, p) in pts.iter().enumerate() {
        let logits: Vec<f64> = prims.iter().map(|q| -distance(p, q) / temp).collect();
        let m = logits.iter().cloned().fold(f64::MIN, f64::max);
        let z: f64 = logits.iter().map(|l| (l - m).exp()).sum();
        for j in 0..2 {
            soft.set(i, j, (logits[j] - m).exp() / z);
        }
    }
    let types = [PrimType::Plane, PrimType::Sphere];
    let fits = estimate_all(&pts, Some(&nrm), &soft, &types).unwrap();
    for j in 0..2 {
        let got = fits[j].as_ref().unwrap().params;
        assert_params_close(types[j], &got, &prims[j], 1e-3, 1e-6);
    }
}

#[test]
fn gradients_match_finite_differences_every_type() {
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    for t in PrimType::ALL {
        let s = run_trials(t, 10, 30, 1e-3, &mut rng);
        assert_eq!((s.failures, s.errors, s.non_finite), (0, 0, 0), "{s:?}");
    }
}

#[test]
fn single_precision_estimators() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for t in PrimType::ALL {
        let seg = random_segment(t, 60, &mut rng);
        let p: Vec<Vec3<f32>> = seg.points.iter().map(|v| v.cast()).collect();
        let n: Vec<Vec3<f32>> = seg.normals.iter().map(|v| v.cast()).collect();
        let w: Vec<f32> = seg.weights.iter().map(|&v| v as f32).collect();
        let e32 = fit(t, &EstimatorInput::new(&p, Some(&n), &w)).unwrap().params.cast::<f64>().to_vec();
        let e64 = fit(t, &seg.input()).unwrap().params.to_vec();
        for (a, b) in e32.iter().zip(&e64) {
            assert!((a - b).abs() < 1e-2, "{t}: {a} vs {b}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weight_scale_invariance(seed in 0u64..100_000, ti in 0usize..4, s in 0.01f64..100.0) {
        let t = PrimType::from_index(ti).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let seg = random_segment(t, 40, &mut rng);
        let ws: Vec<f64> = seg.weights.iter().map(|w| w * s).collect();
        let a = fit(t, &seg.input()).unwrap().params.to_vec();
        let b = fit(t, &EstimatorInput::new(&seg.points, Some(&seg.normals), &ws)).unwrap().params.to_vec();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-9, "{t}: {x} vs {y}");
        }
    }

    #[test]
    fn distance_nonnegative_and_zero_on_surface(seed in 0u64..100_000, ti in 0usize..4) {
        let t = PrimType::from_index(ti).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (prim, pts, nrm) = exact_samples(t, &mut rng, 5);
        for (p, n) in pts.iter().zip(&nrm) {
            prop_assert!(distance(p, &prim) < 1e-9);
            let h = rng.gen_range(0.001..0.05);
            let off = *p + *n * h;
            let d = distance(&off, &prim);
            prop_assert!(d >= 0.0);
            prop_assert!((d - h).abs() < 1e-9, "{t}: offset {h} measured {d}");
        }
        let q = V::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
        prop_assert!(distance(&q, &prim) >= 0.0);
    }
}

#[test]
fn degenerate_suite_is_finite() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let out = primfit::gradcheck::run_degenerate_suite(&mut rng);
    assert_eq!(out.len(), 9);
    for o in &out {
        assert!(o.passed, "{o:?}");
        assert!(!o.rejected, "{o:?}");
    }
}
