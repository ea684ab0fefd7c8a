//! Central finite-difference verification of the estimator Jacobians.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::estimators::{fit, fit_with_gradient, EstimatorInput};
use crate::geom::Vec3;
use crate::numeric::Jacobian;
use crate::types::PrimType;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-6;
/// Entries smaller than this in both the analytic and numeric derivative
/// are compared absolutely rather than relatively.
pub const RELATIVE_FLOOR: f64 = 1e-4;

/// `|analytic - numeric| / max(|analytic|, |numeric|, RELATIVE_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Which input block a derivative column belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum InputBlock {
    Weights,
    Points,
    Normals,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradCheck {
    pub max_relative_error: f64,
    /// Where the largest error occurred: (block, output row, input column).
    pub worst: Option<(InputBlock, usize, usize)>,
    pub all_finite: bool,
    pub trivialized: bool,
}

/// A weighted segment for one estimator.
#[derive(Clone, Debug)]
pub struct Segment {
    pub points: Vec<Vec3<f64>>,
    pub normals: Vec<Vec3<f64>>,
    pub weights: Vec<f64>,
}

impl Segment {
    pub fn input(&self) -> EstimatorInput<'_, f64> {
        EstimatorInput::new(&self.points, Some(&self.normals), &self.weights)
    }
}

/// Compares the analytic Jacobian of estimator `t` with central differences
/// over every weight, point coordinate and normal coordinate.
pub fn check_segment(t: PrimType, seg: &Segment) -> Result<GradCheck> {
    let (est, grad) = fit_with_gradient(t, &seg.input())?;
    let base = est.params.to_vec();
    let outputs = base.len();
    let mut report = GradCheck {
        max_relative_error: 0.0,
        worst: None,
        all_finite: grad.is_finite() && est.params.is_finite(),
        trivialized: est.trivialized,
    };

    let eval = |s: &Segment| -> Option<Vec<f64>> { fit(t, &s.input()).ok().map(|e| e.params.to_vec()) };
    let mut compare = |block: InputBlock, col: usize, jac: &Jacobian<f64>, plus: Option<Vec<f64>>, minus: Option<Vec<f64>>| {
        let (Some(plus), Some(minus)) = (plus, minus) else {
            return;
        };
        for r in 0..outputs {
            let fd = (plus[r] - minus[r]) / (2.0 * FD_STEP);
            let err = relative_error(jac.get(r, col), fd);
            if !(err <= report.max_relative_error) {
                report.max_relative_error = err;
                report.worst = Some((block, r, col));
            }
        }
    };

    let mut work = seg.clone();
    for i in 0..seg.weights.len() {
        work.weights[i] = seg.weights[i] + FD_STEP;
        let plus = eval(&work);
        work.weights[i] = seg.weights[i] - FD_STEP;
        let minus = eval(&work);
        work.weights[i] = seg.weights[i];
        compare(InputBlock::Weights, i, &grad.d_weights, plus, minus);
    }
    for i in 0..seg.points.len() {
        for k in 0..3 {
            let col = 3 * i + k;
            work.points[i][k] = seg.points[i][k] + FD_STEP;
            let plus = eval(&work);
            work.points[i][k] = seg.points[i][k] - FD_STEP;
            let minus = eval(&work);
            work.points[i][k] = seg.points[i][k];
            compare(InputBlock::Points, col, &grad.d_points, plus, minus);

            if let Some(jn) = &grad.d_normals {
                work.normals[i][k] = seg.normals[i][k] + FD_STEP;
                let plus = eval(&work);
                work.normals[i][k] = seg.normals[i][k] - FD_STEP;
                let minus = eval(&work);
                work.normals[i][k] = seg.normals[i][k];
                compare(InputBlock::Normals, col, jn, plus, minus);
            }
        }
    }
    Ok(report)
}

fn unit_vector(rng: &mut ChaCha8Rng) -> Vec3<f64> {
    loop {
        let v = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v * (1.0 / n);
        }
    }
}

fn perturb_unit(rng: &mut ChaCha8Rng, n: Vec3<f64>, amount: f64) -> Vec3<f64> {
    let jitter = Vec3::new(
        rng.gen_range(-amount..amount),
        rng.gen_range(-amount..amount),
        rng.gen_range(-amount..amount),
    );
    (n + jitter).normalize()
}

/// A random, well-conditioned segment of `n` points for estimator `t`: points
/// near a random primitive with slightly jittered positions and normals and
/// weights in `[0.2, 1]`.
pub fn random_segment(t: PrimType, n: usize, rng: &mut ChaCha8Rng) -> Segment {
    let noise = 0.01;
    let mut points = Vec::with_capacity(n);
    let mut normals = Vec::with_capacity(n);
    let center = Vec3::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5));
    let axis = unit_vector(rng);
    let u = axis.any_orthonormal();
    let v = axis.cross(&u);
    for _ in 0..n {
        let (p, nrm) = match t {
            PrimType::Plane => {
                // Anisotropic patch so the in-plane spectrum is separated.
                let s = rng.gen_range(-1.0..1.0);
                let q = rng.gen_range(-0.5..0.5);
                (center + u * s + v * q, axis)
            }
            PrimType::Sphere => {
                let d = unit_vector(rng);
                let d = if d.dot(&axis) < -0.2 { -d } else { d };
                (center + d * 0.6, d)
            }
            PrimType::Cylinder => {
                let phi = rng.gen_range(0.0..1.6 * std::f64::consts::PI);
                let h = rng.gen_range(-0.6..0.6);
                let radial = u * phi.cos() + v * phi.sin();
                (center + axis * h + radial * 0.4, radial)
            }
            PrimType::Cone => {
                let theta: f64 = 0.5;
                let phi = rng.gen_range(0.0..1.6 * std::f64::consts::PI);
                let s = rng.gen_range(0.3..1.0);
                let radial = u * phi.cos() + v * phi.sin();
                let dir = axis * theta.cos() + radial * theta.sin();
                let nrm = radial * theta.cos() - axis * theta.sin();
                (center + dir * s, nrm)
            }
        };
        let eta = rng.gen_range(-noise..noise);
        points.push(p + nrm * eta);
        normals.push(perturb_unit(rng, nrm, 0.02));
    }
    let weights = (0..n).map(|_| rng.gen_range(0.2..1.0)).collect();
    Segment { points, normals, weights }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradCheckSummary {
    pub estimator: PrimType,
    pub trials: usize,
    pub max_relative_error: f64,
    pub failures: usize,
    pub non_finite: usize,
    pub errors: usize,
}

/// Runs `trials` random segments for `t`; a trial fails when its maximum
/// relative error reaches `tolerance` or any entry is non-finite.
pub fn run_trials(t: PrimType, trials: usize, points_per_segment: usize, tolerance: f64, rng: &mut ChaCha8Rng) -> GradCheckSummary {
    let mut summary = GradCheckSummary {
        estimator: t,
        trials,
        max_relative_error: 0.0,
        failures: 0,
        non_finite: 0,
        errors: 0,
    };
    for _ in 0..trials {
        let seg = random_segment(t, points_per_segment, rng);
        match check_segment(t, &seg) {
            Ok(r) => {
                summary.max_relative_error = summary.max_relative_error.max(r.max_relative_error);
                if !r.all_finite {
                    summary.non_finite += 1;
                }
                if !r.all_finite || !(r.max_relative_error < tolerance) {
                    summary.failures += 1;
                }
            }
            Err(_) => summary.errors += 1,
        }
    }
    summary
}

/// A hand-built ill-posed segment.
#[derive(Clone, Debug)]
pub struct DegenerateCase {
    pub name: &'static str,
    pub estimator: PrimType,
    pub segment: Segment,
    /// Required trivialization flag, when the case pins one.
    pub expect_trivialized: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DegenerateOutcome {
    pub name: &'static str,
    pub estimator: PrimType,
    pub all_finite: bool,
    pub trivialized: bool,
    pub expect_trivialized: Option<bool>,
    /// Estimator refused the input (a precondition error).
    pub rejected: bool,
    pub passed: bool,
}

fn grid_points(n: usize, z: impl Fn(usize) -> f64) -> Vec<Vec3<f64>> {
    (0..n).map(|i| Vec3::new((i % 6) as f64 * 0.1, (i / 6) as f64 * 0.1, z(i))).collect()
}

/// Repeated Gram eigenvalues, rank-deficient and (near-)coplanar segments,
/// parallel normals and apex-at-infinity cones.
pub fn degenerate_cases(rng: &mut ChaCha8Rng) -> Vec<DegenerateCase> {
    let seg = |points: Vec<Vec3<f64>>, normals: Vec<Vec3<f64>>| {
        let weights = vec![1.0; points.len()];
        Segment { points, normals, weights }
    };
    let up = |n: usize| vec![Vec3::new(0.0, 0.0, 1.0); n];
    let mut cases = Vec::new();

    // The eight cube corners: isotropic Gram matrix, triple eigenvalue.
    let cube: Vec<Vec3<f64>> = (0..8)
        .map(|i| Vec3::new(f64::from(i & 1), f64::from((i >> 1) & 1), f64::from((i >> 2) & 1)))
        .collect();
    cases.push(DegenerateCase {
        name: "plane isotropic spectrum",
        estimator: PrimType::Plane,
        segment: seg(cube.clone(), up(8)),
        expect_trivialized: None,
    });
    let line: Vec<Vec3<f64>> = (0..12).map(|i| Vec3::new(i as f64 * 0.1, 0.0, 0.0)).collect();
    cases.push(DegenerateCase {
        name: "plane collinear points",
        estimator: PrimType::Plane,
        segment: seg(line, up(12)),
        expect_trivialized: None,
    });
    cases.push(DegenerateCase {
        name: "sphere coplanar points",
        estimator: PrimType::Sphere,
        segment: seg(grid_points(30, |_| 0.3), up(30)),
        expect_trivialized: Some(true),
    });
    let jitter: Vec<f64> = (0..30).map(|_| rng.gen_range(-1e-9..1e-9)).collect();
    cases.push(DegenerateCase {
        name: "sphere near-coplanar points",
        estimator: PrimType::Sphere,
        segment: seg(grid_points(30, |i| 0.3 + jitter[i]), up(30)),
        expect_trivialized: Some(true),
    });
    cases.push(DegenerateCase {
        name: "cylinder parallel normals",
        estimator: PrimType::Cylinder,
        segment: seg(grid_points(30, |_| 0.0), up(30)),
        expect_trivialized: Some(true),
    });
    // Normals of a tube: the cone apex recedes to infinity.
    let tube: Vec<(Vec3<f64>, Vec3<f64>)> = (0..40)
        .map(|i| {
            let phi = i as f64 * 0.5;
            let radial = Vec3::new(phi.cos(), phi.sin(), 0.0);
            (radial * 0.3 + Vec3::new(0.0, 0.0, (i % 7) as f64 * 0.05), radial)
        })
        .collect();
    cases.push(DegenerateCase {
        name: "cone with cylinder normals",
        estimator: PrimType::Cone,
        segment: seg(tube.iter().map(|x| x.0).collect(), tube.iter().map(|x| x.1).collect()),
        expect_trivialized: None,
    });
    let tilt: f64 = 1e-6;
    let near: Vec<(Vec3<f64>, Vec3<f64>)> = tube
        .iter()
        .map(|(p, n)| (*p, (*n * tilt.cos() - Vec3::new(0.0, 0.0, 1.0) * tilt.sin()).normalize()))
        .collect();
    cases.push(DegenerateCase {
        name: "cone near-cylinder",
        estimator: PrimType::Cone,
        segment: seg(near.iter().map(|x| x.0).collect(), near.iter().map(|x| x.1).collect()),
        expect_trivialized: None,
    });
    cases.push(DegenerateCase {
        name: "cone identical normals",
        estimator: PrimType::Cone,
        segment: seg(grid_points(30, |_| 0.0), up(30)),
        expect_trivialized: None,
    });
    cases.push(DegenerateCase {
        name: "cone isotropic points",
        estimator: PrimType::Cone,
        segment: seg(cube, (0..8).map(|i| Vec3::unit(i % 3)).collect()),
        expect_trivialized: None,
    });
    cases
}

/// Runs every degenerate case: parameters and Jacobians must be finite and
/// the trivialization flag must match where pinned. A precondition error
/// counts as a pass only when no flag is pinned.
pub fn run_degenerate_suite(rng: &mut ChaCha8Rng) -> Vec<DegenerateOutcome> {
    degenerate_cases(rng)
        .into_iter()
        .map(|c| match fit_with_gradient(c.estimator, &c.segment.input()) {
            Ok((est, grad)) => {
                let all_finite = est.params.is_finite() && grad.is_finite();
                let flag_ok = c.expect_trivialized.map_or(true, |f| f == est.trivialized);
                DegenerateOutcome {
                    name: c.name,
                    estimator: c.estimator,
                    all_finite,
                    trivialized: est.trivialized,
                    expect_trivialized: c.expect_trivialized,
                    rejected: false,
                    passed: all_finite && flag_ok,
                }
            }
            Err(_) => DegenerateOutcome {
                name: c.name,
                estimator: c.estimator,
                all_finite: true,
                trivialized: false,
                expect_trivialized: c.expect_trivialized,
                rejected: true,
                passed: c.expect_trivialized.is_none(),
            },
        })
        .collect()
}
