use gridlift::gln::{KernelPlan, LrSchedule};
use gridlift::metrics::{auc, mpjpe, pa_mpjpe, pck, Alignment};
use gridlift::sgt::{
    format_layout, parse_layout, random_sgt, sgt_forward, sgt_inverse, shuffle_layout, GridSpec, ShuffleMode,
    SkeletonTopology,
};
use gridlift::tensor_engine::rng::seeded;
use gridlift::tensor_engine::Tensor;
use nalgebra::{Rotation3, Unit, Vector3};
use proptest::prelude::*;
use rand::Rng;

fn poses(n: usize, j: usize, c: usize, seed: u64) -> Tensor {
    let mut rng = seeded(seed);
    Tensor::from_fn(&[n, j, c], |_| rng.random_range(-800.0..800.0))
}

fn rigid(t: &Tensor, axis: [f64; 3], angle: f64, shift: [f64; 3]) -> Tensor {
    let rot = Rotation3::from_axis_angle(&Unit::new_normalize(Vector3::from(axis)), angle);
    let mut out = t.clone();
    for p in out.data_mut().chunks_exact_mut(3) {
        let q = rot * Vector3::new(p[0], p[1], p[2]) + Vector3::from(shift);
        p.copy_from_slice(q.as_slice());
    }
    out
}

fn shuffled_samples(t: &Tensor, seed: u64) -> Tensor {
    let [n, j, c] = *t.shape() else { panic!("rank 3") };
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = seeded(seed);
    for i in (1..n).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let mut data = Vec::with_capacity(t.len());
    for &i in &order {
        data.extend_from_slice(&t.data()[i * j * c..(i + 1) * j * c]);
    }
    Tensor::new(&[n, j, c], data).unwrap()
}

fn axis() -> impl Strategy<Value = [f64; 3]> {
    [-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64]
        .prop_filter("non-zero axis", |a| a.iter().map(|v| v * v).sum::<f64>() > 1e-3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn grid_round_trip_is_exact(rows in 1usize..8, cols in 1usize..8, frac in 0.0..1.0f64, n in 1usize..4, c in 1usize..4, seed: u64) {
        let grid = GridSpec::new(rows, cols).unwrap();
        let joints = 1 + ((grid.cells() - 1) as f64 * frac) as usize;
        let s = random_sgt(joints, grid, &mut seeded(seed)).unwrap();
        let g = poses(n, joints, c, seed ^ 1);
        let back = sgt_inverse(&s, &sgt_forward(&s, &g).unwrap()).unwrap();
        prop_assert_eq!(back.data(), g.data());
    }

    #[test]
    fn random_assignments_cover_every_joint_once_per_cell(rows in 1usize..8, cols in 1usize..8, seed: u64) {
        let grid = GridSpec::new(rows, cols).unwrap();
        let joints = grid.cells().min(17);
        let s = random_sgt(joints, grid, &mut seeded(seed)).unwrap();
        prop_assert!(s.is_covering());
        prop_assert!(s.rows_one_hot());
    }

    #[test]
    fn shuffles_keep_the_joint_multiset(mode in prop_oneof![Just(ShuffleMode::Row), Just(ShuffleMode::Column), Just(ShuffleMode::Global)], seed: u64) {
        let s = random_sgt(17, GridSpec::default(), &mut seeded(seed)).unwrap();
        let t = shuffle_layout(&s, mode, &mut seeded(seed ^ 7)).unwrap();
        prop_assert_eq!(s.coverage(), t.coverage());
        prop_assert!(t.rows_one_hot());
        let again = shuffle_layout(&s, mode, &mut seeded(seed ^ 7)).unwrap();
        prop_assert_eq!(t, again);
    }

    #[test]
    fn layout_text_round_trips(seed: u64) {
        let topology = SkeletonTopology::h36m17();
        let s = random_sgt(17, GridSpec::default(), &mut seeded(seed)).unwrap();
        prop_assert_eq!(parse_layout(&format_layout(&s, &topology), &topology, None).unwrap(), s);
    }

    #[test]
    fn mpjpe_ignores_a_shared_rigid_motion(seed: u64, ax in axis(), angle in -3.0..3.0f64, shift in [-1e3..1e3f64, -1e3..1e3f64, -1e3..1e3f64]) {
        let (pred, gt) = (poses(4, 17, 3, seed), poses(4, 17, 3, seed ^ 3));
        let before = mpjpe(&pred, &gt).unwrap();
        let after = mpjpe(&rigid(&pred, ax, angle, shift), &rigid(&gt, ax, angle, shift)).unwrap();
        prop_assert!((before - after).abs() <= 1e-9, "{} vs {}", before, after);
    }

    #[test]
    fn aligned_error_never_exceeds_raw_error(seed: u64, rigid_only: bool) {
        let (pred, gt) = (poses(3, 17, 3, seed), poses(3, 17, 3, seed ^ 5));
        let alignment = if rigid_only { Alignment::Rigid } else { Alignment::Similarity };
        prop_assert!(pa_mpjpe(&pred, &gt, alignment).unwrap() <= mpjpe(&pred, &gt).unwrap() + 1e-9);
    }

    #[test]
    fn aligned_error_vanishes_on_a_moved_copy(seed: u64, ax in axis(), angle in -3.0..3.0f64, shift in [-1e3..1e3f64, -1e3..1e3f64, -1e3..1e3f64]) {
        let gt = poses(2, 17, 3, seed);
        let pred = rigid(&gt, ax, angle, shift);
        prop_assert!(pa_mpjpe(&pred, &gt, Alignment::Rigid).unwrap() <= 1e-9);
    }

    #[test]
    fn pck_grows_with_the_threshold(seed: u64, a in 0.0..400.0f64, b in 0.0..400.0f64) {
        let (pred, gt) = (poses(3, 17, 3, seed), poses(3, 17, 3, seed ^ 9));
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(pck(&pred, &gt, lo).unwrap() <= pck(&pred, &gt, hi).unwrap());
    }

    #[test]
    fn metrics_ignore_sample_order(seed: u64) {
        let (pred, gt) = (poses(6, 17, 3, seed), poses(6, 17, 3, seed ^ 11));
        let (p2, g2) = (shuffled_samples(&pred, seed), shuffled_samples(&gt, seed));
        prop_assert!((mpjpe(&pred, &gt).unwrap() - mpjpe(&p2, &g2).unwrap()).abs() <= 1e-9);
        prop_assert!((pa_mpjpe(&pred, &gt, Alignment::Similarity).unwrap() - pa_mpjpe(&p2, &g2, Alignment::Similarity).unwrap()).abs() <= 1e-9);
        prop_assert!((auc(&pred, &gt).unwrap() - auc(&p2, &g2).unwrap()).abs() <= 1e-9);
    }

    #[test]
    fn kernel_plans_print_and_parse_back(blocks in 0usize..4, sizes in proptest::collection::vec(prop_oneof![Just(1usize), Just(3), Just(5)], 8)) {
        let text = std::iter::once(sizes[0].to_string())
            .chain((0..blocks).map(|b| format!("{}{}", sizes[1 + 2 * b], sizes[2 + 2 * b])))
            .chain(std::iter::once(sizes[7].to_string()))
            .collect::<Vec<_>>()
            .join("-");
        let plan: KernelPlan = text.parse().unwrap();
        prop_assert_eq!(plan.blocks(), blocks);
        prop_assert_eq!(plan.to_string(), text);
    }

    #[test]
    fn step_schedule_is_piecewise_constant(epoch in 0usize..100) {
        let s = LrSchedule::Step { every: 10, factor: 0.1 };
        let expected = 1e-3 * 0.1f64.powi((epoch / 10) as i32);
        prop_assert_eq!(s.lr(1e-3, epoch), expected);
        prop_assert_eq!(s.lr(1e-3, epoch - epoch % 10), expected);
    }
}

#[test]
fn trivial_pck_and_auc_cases_are_exact() {
    let gt = poses(2, 17, 3, 1);
    assert_eq!(pck(&gt, &gt, 150.0).unwrap(), 100.0);
    assert_eq!(auc(&gt, &gt).unwrap(), 100.0);
    let mut far = gt.clone();
    far.data_mut().iter_mut().for_each(|v| *v += 1e4);
    assert_eq!(pck(&far, &gt, 150.0).unwrap(), 0.0);
    assert_eq!(auc(&far, &gt).unwrap(), 0.0);
}
