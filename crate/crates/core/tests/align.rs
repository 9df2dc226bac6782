mod common;

use common::*;
use freeocc::align::{alignment_residual, umeyama_align};
use freeocc::geometry::{apply_similarity, SimilarityTransform, Vec3};
use proptest::prelude::*;
use rand::Rng;

fn cloud(seed: u64, n: usize) -> Vec<Vec3> {
    let mut r = rng(seed);
    (0..n).map(|_| Vec3::from_fn(|_, _| r.random_range(-3.0..3.0))).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn residual_is_invariant_to_common_rigid_motion(seed in any::<u64>(), n in 3usize..40, scale in any::<bool>()) {
        let mut r = rng(seed);
        let src = cloud(seed, n);
        let dst: Vec<Vec3> = cloud(seed ^ 1, n);
        let q = random_similarity(&mut r, false);
        let qs: Vec<Vec3> = src.iter().map(|p| apply_similarity(&q, p)).collect();
        let qd: Vec<Vec3> = dst.iter().map(|p| apply_similarity(&q, p)).collect();
        let a = umeyama_align(&src, &dst, scale).unwrap();
        let b = umeyama_align(&qs, &qd, scale).unwrap();
        let ea = alignment_residual(&a, &src, &dst);
        let eb = alignment_residual(&b, &qs, &qd);
        prop_assert!((ea - eb).abs() <= 1e-9, "{} vs {}", ea, eb);
    }

    #[test]
    fn never_worse_than_identity_and_never_reflects(seed in any::<u64>(), n in 3usize..40, scale in any::<bool>()) {
        let src = cloud(seed, n);
        // mirrored target invites a reflection
        let dst: Vec<Vec3> = cloud(seed ^ 7, n).iter().map(|p| Vec3::new(-p.x, p.y, p.z)).collect();
        let t = umeyama_align(&src, &dst, scale).unwrap();
        let id = alignment_residual(&SimilarityTransform::identity(), &src, &dst);
        prop_assert!(alignment_residual(&t, &src, &dst) <= id + 1e-12);
        prop_assert!((t.rotation.to_matrix().determinant() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn rejects_too_few_or_collinear_points() {
    let p = cloud(1, 2);
    assert!(umeyama_align(&p, &p, true).is_err());
    let line: Vec<Vec3> = (0..5).map(|i| Vec3::new(i as f64, 0.0, 0.0)).collect();
    assert!(umeyama_align(&line, &line, true).is_err());
}
