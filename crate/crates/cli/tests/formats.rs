use proptest::prelude::*;
use qis_cli::formats::{
    decode_pnm, decode_stack, encode_ppm, encode_stack, read_image, read_stack, write_image, write_stack,
    BitDepth, ReadOptions,
};
use qis_core::{simulate_stack, test_scene, CfaMask, ColorImage, ColorSpace, Plane, Readout, SensorConfig};

#[test]
fn bundled_scene_matches_generator() {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("assets/test_scene_256.ppm");
    let img = read_image(&path, ReadOptions::default()).unwrap();
    assert_eq!(img, test_scene(256, 256).to_color_image());
}

#[test]
fn simulated_stacks_rewrite_identically() {
    let dir = tempfile::tempdir().unwrap();
    let scene = test_scene(40, 24);
    for (i, readout) in [Readout::SingleBit { threshold: 2 }, Readout::MultiBit { bits: 5 }].into_iter().enumerate() {
        let cfg = SensorConfig::new(3.0, 7, readout, 9);
        let stack = simulate_stack(&scene, &CfaMask::rggb(40, 24), &cfg).unwrap();
        let a = dir.path().join(format!("a{i}.qisf"));
        let b = dir.path().join(format!("b{i}.qisf"));
        write_stack(&a, &stack).unwrap();
        let back = read_stack(&a).unwrap();
        assert_eq!(back, stack);
        write_stack(&b, &back).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }
}

#[test]
fn writes_are_atomic_on_failure() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("no/such/dir/out.ppm");
    let img = test_scene(4, 4).to_color_image();
    assert!(write_image(&missing, &img, BitDepth::Eight).is_err());
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

fn eight_bit_image() -> impl Strategy<Value = (usize, usize, Vec<u8>)> {
    (1usize..12, 1usize..12).prop_flat_map(|(w, h)| (Just(w), Just(h), proptest::collection::vec(any::<u8>(), w * h * 3)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn eight_bit_images_round_trip((w, h, bytes) in eight_bit_image()) {
        let mut file = format!("P6\n{w} {h}\n255\n").into_bytes();
        file.extend(&bytes);
        let img = decode_pnm(&file).unwrap().to_color_image(ReadOptions::default());
        prop_assert_eq!(encode_ppm(&img, BitDepth::Eight), file);
    }

    #[test]
    fn sixteen_bit_planes_round_trip(vals in proptest::collection::vec(0u16..=u16::MAX, 3 * 6)) {
        let planes: [Plane; 3] = std::array::from_fn(|c| {
            Plane::new(3, 2, vals[c * 6..(c + 1) * 6].iter().map(|&v| f64::from(v) / 65535.0).collect()).unwrap()
        });
        let img = ColorImage::from_planes(planes, ColorSpace::Linear).unwrap();
        let bytes = encode_ppm(&img, BitDepth::Sixteen);
        let back = decode_pnm(&bytes).unwrap().to_color_image(ReadOptions::default());
        prop_assert_eq!(encode_ppm(&back, BitDepth::Sixteen), bytes);
    }

    #[test]
    fn decoders_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..128)) {
        let _ = decode_pnm(&bytes);
        let _ = decode_stack(&bytes);
        let mut q = b"QISF\x01\x00".to_vec();
        q.extend(&bytes);
        let _ = decode_stack(&q);
    }

    #[test]
    fn truncated_stacks_rejected(cut in 0usize..(35 + 4 * 4 * 2)) {
        let scene = test_scene(4, 4);
        let cfg = SensorConfig::new(2.0, 2, Readout::SingleBit { threshold: 1 }, 1);
        let bytes = encode_stack(&simulate_stack(&scene, &CfaMask::rggb(4, 4), &cfg).unwrap());
        prop_assert!(decode_stack(&bytes[..cut]).is_err());
    }
}
