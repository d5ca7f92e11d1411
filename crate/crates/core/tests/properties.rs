use locprior_core::geometry::SquareBox;
use locprior_core::multiscale::CorrelationNorm;
use locprior_core::*;
use proptest::prelude::*;

fn tensor(c: usize, h: usize, w: usize) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(-4.0f32..4.0, c * h * w).prop_map(move |d| Tensor::new(vec![c, h, w], d).unwrap())
}

fn query_and_kernel() -> impl Strategy<Value = (Tensor, Tensor)> {
    (1usize..4, 4usize..10, 4usize..10, 1usize..5, 1usize..5)
        .prop_flat_map(|(c, h, w, kh, kw)| (tensor(c, h, w), tensor(c, kh, kw)))
}

fn rotation() -> impl Strategy<Value = Rotation3> {
    (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0, -3.1f64..3.1).prop_filter_map("degenerate axis", |(x, y, z, a)| {
        (x * x + y * y + z * z > 1e-3).then(|| Rotation3::from_axis_angle([x, y, z], a))
    })
}

fn close(a: f32, b: f32, tol: f32) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #[test]
    fn correlation_is_linear_in_the_query((q, k) in query_and_kernel(), a in -3.0f32..3.0, b in -3.0f32..3.0) {
        let q2 = q.map(|v| v * 0.5 - 1.0);
        let mixed = Tensor::new(q.dims().to_vec(), q.data().iter().zip(q2.data()).map(|(x, y)| a * x + b * y).collect()).unwrap();
        let lhs = cross_correlate(&mixed, &k, Padding::Same).unwrap();
        let r1 = cross_correlate(&q, &k, Padding::Same).unwrap();
        let r2 = cross_correlate(&q2, &k, Padding::Same).unwrap();
        for i in 0..lhs.len() {
            let rhs = a * r1.data()[i] + b * r2.data()[i];
            prop_assert!((lhs.data()[i] - rhs).abs() <= 1e-3 * (1.0 + rhs.abs()));
        }
    }

    #[test]
    fn resizing_a_constant_keeps_it(v in -10.0f32..10.0, h in 1usize..9, w in 1usize..9, nh in 1usize..20, nw in 1usize..20) {
        let t = Tensor::from_fn(2, h, w, |_, _, _| v).unwrap();
        let r = resize_bilinear(&t, nh, nw).unwrap();
        prop_assert_eq!(r.dims(), &[2, nh, nw]);
        prop_assert!(r.data().iter().all(|&x| close(x, v, 1e-6)));
    }

    #[test]
    fn dilation_keeps_the_nonzero_values(k in (1usize..3, 1usize..6).prop_flat_map(|(c, s)| tensor(c, s, s)), rate in 1usize..4) {
        let d = dilate_kernel(&k, rate).unwrap();
        let (c, s, _) = k.chw();
        prop_assert_eq!(d.dims(), &[c, s * rate - rate + 1, s * rate - rate + 1]);
        let mut a: Vec<f32> = k.data().iter().copied().filter(|&v| v != 0.0).collect();
        let mut b: Vec<f32> = d.data().iter().copied().filter(|&v| v != 0.0).collect();
        a.sort_by(f32::total_cmp);
        b.sort_by(f32::total_cmp);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn stack_then_slice_round_trips(maps in (1usize..6, 1usize..8, 1usize..8)
        .prop_flat_map(|(n, h, w)| prop::collection::vec(tensor(1, h, w), n)))
    {
        let s = stack_maps(&maps).unwrap();
        for (i, m) in maps.iter().enumerate() {
            prop_assert_eq!(s.channel(i), m.data());
        }
    }

    #[test]
    fn geodesic_is_symmetric_and_left_invariant(a in rotation(), b in rotation(), g in rotation()) {
        let d = geodesic_distance(&a, &b);
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert!((d - geodesic_distance(&b, &a)).abs() < 1e-9);
        prop_assert!((d - geodesic_distance(&g.mul(&a), &g.mul(&b))).abs() < 1e-6);
        prop_assert!(geodesic_distance(&a, &a) < 1e-6);
    }

    #[test]
    fn iou_is_symmetric_and_scale_invariant(
        ca in prop::array::uniform2(-50.0f64..50.0), sa in 1.0f64..40.0,
        cb in prop::array::uniform2(-50.0f64..50.0), sb in 1.0f64..40.0,
        k in 0.1f64..10.0,
    ) {
        let (a, b) = (SquareBox::new(ca, sa), SquareBox::new(cb, sb));
        let iou = box_iou(&a, &b);
        prop_assert!((0.0..=1.0).contains(&iou));
        prop_assert!((iou - box_iou(&b, &a)).abs() < 1e-12);
        let scaled = |x: &SquareBox| SquareBox::new([x.center[0] * k, x.center[1] * k], x.size * k);
        prop_assert!((iou - box_iou(&scaled(&a), &scaled(&b))).abs() < 1e-9);
    }

    #[test]
    fn weight_of_a_normalized_map_is_its_maximum(m in (2usize..12, 2usize..12).prop_flat_map(|(h, w)| tensor(1, h, w))) {
        let n = normalize_map(&m);
        prop_assert!((map_weight(&n) - n.max() as f64).abs() < 1e-5 * (1.0 + n.max().abs() as f64));
    }

    #[test]
    fn zncc_scores_stay_bounded((q, k) in (1usize..4, 4usize..10, 2usize..5)
        .prop_flat_map(|(c, h, s)| (tensor(c, h, h + 1), tensor(c, s, s))))
    {
        let cfg = KernelDistributionConfig::identity().with_normalization(CorrelationNorm::Zncc);
        let bank = KernelBank::new(&k, &cfg).unwrap();
        let fm = FeatureMap { tensor: q, stride: 8, image_size: (64, 64) };
        let s = bank.correlate(&fm).unwrap();
        prop_assert!(s.tensor.data().iter().all(|v| v.abs() <= 1.0 + 1e-4));
    }
}
