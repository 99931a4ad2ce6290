//! End-to-end segmentation of correspondence data.

use homf::eval;
use homf::geometry::{Correspondence, Dataset, ModelKind, Point2};
use homf::pipeline::{self, HomfConfig};
use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn apply(h: &Matrix3<f64>, p: Point2) -> Point2 {
    let v = h * Vector3::new(p.x, p.y, 1.0);
    Point2::new(v.x / v.z, v.y / v.z)
}

fn two_planes(seed: u64) -> (Dataset, Vec<i32>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.5).unwrap();
    let hs = [
        Matrix3::new(1.05, 0.08, 30.0, -0.06, 0.98, -12.0, 1e-4, -5e-5, 1.0),
        Matrix3::new(0.92, -0.12, -40.0, 0.10, 1.07, 25.0, -8e-5, 1e-4, 1.0),
    ];
    let mut corrs = Vec::new();
    let mut labels = Vec::new();
    for (k, h) in hs.iter().enumerate() {
        let x0 = if k == 0 { 0.0 } else { 250.0 };
        for _ in 0..150 {
            let p = Point2::new(rng.random_range(x0..x0 + 250.0), rng.random_range(0.0..400.0));
            let q = apply(h, p);
            let q = Point2::new(q.x + noise.sample(&mut rng), q.y + noise.sample(&mut rng));
            corrs.push(Correspondence::new(p, q));
            labels.push(k as i32);
        }
    }
    for _ in 0..100 {
        let p = Point2::new(rng.random_range(0.0..500.0), rng.random_range(0.0..400.0));
        let q = Point2::new(rng.random_range(-50.0..550.0), rng.random_range(-50.0..450.0));
        corrs.push(Correspondence::new(p, q));
        labels.push(-1);
    }
    (Dataset::Correspondences(corrs), labels)
}

#[test]
fn segments_two_planar_motions() {
    let mut errors = Vec::new();
    for seed in 0..3 {
        let (data, gt) = two_planes(seed);
        let cfg = HomfConfig::new(ModelKind::Homography, 2).with_seed(seed);
        let fit = pipeline::fit(&data, &cfg).unwrap();
        assert!(fit.failure.is_none());
        errors.push(eval::misclassification(&fit.labels.labels, &gt).unwrap());
    }
    errors.sort_by(f64::total_cmp);
    assert!(errors[1] <= 10.0, "{errors:?}");
}

// Two rigid motions of random 3D points seen by a fixed and a moving camera.
fn two_motions(seed: u64) -> (Dataset, Vec<i32>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.3).unwrap();
    let f = 500.0;
    let project = |x: Vector3<f64>| Point2::new(f * x.x / x.z + 320.0, f * x.y / x.z + 240.0);
    let motions = [
        (nalgebra::Rotation3::from_euler_angles(0.02, 0.15, -0.03), Vector3::new(1.0, 0.1, 0.05)),
        (nalgebra::Rotation3::from_euler_angles(-0.1, -0.05, 0.08), Vector3::new(-0.2, 0.9, 0.1)),
    ];
    let mut corrs = Vec::new();
    let mut labels = Vec::new();
    for (k, (r, t)) in motions.iter().enumerate() {
        for _ in 0..120 {
            let x = Vector3::new(
                rng.random_range(-2.0..2.0),
                rng.random_range(-1.5..1.5),
                rng.random_range(4.0..8.0),
            );
            let a = project(x);
            let b = project(r * x + t);
            corrs.push(Correspondence::new(
                Point2::new(a.x + noise.sample(&mut rng), a.y + noise.sample(&mut rng)),
                Point2::new(b.x + noise.sample(&mut rng), b.y + noise.sample(&mut rng)),
            ));
            labels.push(k as i32);
        }
    }
    for _ in 0..60 {
        let a = Point2::new(rng.random_range(0.0..640.0), rng.random_range(0.0..480.0));
        let b = Point2::new(rng.random_range(0.0..640.0), rng.random_range(0.0..480.0));
        corrs.push(Correspondence::new(a, b));
        labels.push(-1);
    }
    (Dataset::Correspondences(corrs), labels)
}

#[test]
fn segments_two_rigid_motions() {
    let (data, gt) = two_motions(4);
    let cfg = HomfConfig::new(ModelKind::Fundamental, 2).with_seed(4);
    let fit = pipeline::fit(&data, &cfg).unwrap();
    assert_eq!(fit.models.len(), 2);
    let err = eval::misclassification(&fit.labels.labels, &gt).unwrap();
    assert!(err <= 20.0, "misclassification {err}");
}
