mod common;

use common::*;
use osteo_core::imaging::{histogram, multi_otsu, otsu_threshold, Image};
use osteo_core::GrayImage;

fn image(seed: u64, w: usize, h: usize) -> (GrayImage, Vec<u8>) {
    let data = random_suite_image(seed, w, h);
    (Image::from_u8(w, h, &data).unwrap(), data)
}

#[test]
fn otsu_matches_exact_brute_force() {
    for seed in 0..300 {
        let (img, data) = image(seed, 48, 40);
        let hist = byte_histogram(&data);
        assert_eq!(histogram(&img), hist, "8-bit data must land in its own bin");
        let want = otsu_brute(&hist);
        match otsu_threshold(&img) {
            Ok(o) => {
                let k = want.unwrap();
                assert_eq!(o.bin as usize, k, "seed {seed}");
                assert_eq!(o.threshold, k as f64 / 255.0);
                let expected: Vec<bool> = data.iter().map(|&b| b as usize > k).collect();
                assert_eq!(o.mask.bits(), &expected[..]);
            }
            Err(e) => {
                assert!(want.is_none(), "seed {seed}: {e}");
            }
        }
    }
}

#[test]
fn multi_otsu_three_classes_matches_exact_brute_force() {
    for seed in 0..60 {
        let (img, data) = image(seed, 32, 32);
        let want = multi_otsu3_brute(&byte_histogram(&data));
        match multi_otsu(&img, 3) {
            Ok(m) => {
                let [k1, k2] = want.unwrap();
                assert_eq!(m.bins, vec![k1 as u8, k2 as u8], "seed {seed}");
                for (&b, &label) in data.iter().zip(m.class_map.labels()) {
                    let expected = (b as usize > k1) as u8 + (b as usize > k2) as u8;
                    assert_eq!(label, expected);
                }
            }
            Err(e) => assert!(want.is_none(), "seed {seed}: {e}"),
        }
    }
}

#[test]
fn multi_otsu_four_classes_matches_exact_brute_force() {
    for seed in [1u64, 3, 5] {
        let (img, data) = image(seed, 16, 16);
        let want = multi_otsu4_brute(&byte_histogram(&data)).unwrap();
        let got = multi_otsu(&img, 4).unwrap();
        assert_eq!(
            got.bins,
            want.iter().map(|&k| k as u8).collect::<Vec<_>>(),
            "seed {seed}"
        );
    }
}

#[test]
fn tri_level_image() {
    let img = GrayImage::from_fn(30, 10, |x, _| [0.1, 0.5, 0.9][x / 10]);
    let data: Vec<u8> = img.to_u8();
    let o = otsu_threshold(&img).unwrap();
    assert_eq!(Some(o.bin as usize), otsu_brute(&byte_histogram(&data)));
    let m = multi_otsu(&img, 3).unwrap();
    for x in 0..30 {
        assert_eq!(m.class_map.get(x, 5) as usize, x / 10);
    }
}
