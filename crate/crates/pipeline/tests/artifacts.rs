use hsfuse_core::container::read_cube;
use hsfuse_core::HsiCube;
use hsfuse_pipeline::artifacts::{emit_error_map, emit_rgb, error_map, rgb_composite};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// (width, height, maxval, pixel bytes) of a binary P5/P6 file.
fn read_pnm(path: &std::path::Path) -> (String, usize, usize, Vec<u8>) {
    let bytes = std::fs::read(path).unwrap();
    let mut fields = Vec::new();
    let mut i = 0;
    while fields.len() < 4 {
        while bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        let start = i;
        while !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        fields.push(String::from_utf8(bytes[start..i].to_vec()).unwrap());
    }
    assert_eq!(fields[3], "255");
    (fields[0].clone(), fields[1].parse().unwrap(), fields[2].parse().unwrap(), bytes[i + 1..].to_vec())
}

#[test]
fn identical_cubes_give_a_zero_map() {
    let dir = tempfile::tempdir().unwrap();
    let x = HsiCube::from_fn((3, 5, 4), |(b, r, c)| (b * 20 + r * 4 + c) as f32 / 80.0).unwrap();
    let (pgm, raw) = emit_error_map(&x, &x, &dir.path().join("same")).unwrap();
    let (magic, w, h, px) = read_pnm(&pgm);
    assert_eq!((magic.as_str(), w, h), ("P5", 4, 5));
    assert!(px.iter().all(|&p| p == 0));
    let (m, _) = read_cube(&raw).unwrap();
    assert!(m.data().iter().all(|&v| v == 0.0));
}

#[test]
fn single_pixel_error_lights_one_pixel() {
    let dir = tempfile::tempdir().unwrap();
    let r = HsiCube::filled((4, 6, 7), 0.5).unwrap();
    let x = HsiCube::from_fn(r.dim(), |(b, i, j)| if (b, i, j) == (2, 3, 5) { 0.9 } else { 0.5 }).unwrap();
    let (pgm, _) = emit_error_map(&x, &r, &dir.path().join("one")).unwrap();
    let (_, w, _, px) = read_pnm(&pgm);
    let lit: Vec<usize> = px.iter().enumerate().filter(|(_, &p)| p != 0).map(|(k, _)| k).collect();
    assert_eq!(lit, vec![3 * w + 5]);
    assert_eq!(px[3 * w + 5], 255);
}

#[test]
fn raw_map_matches_mean_absolute_difference() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = HsiCube::from_fn((5, 9, 8), |_| rng.gen::<f32>()).unwrap();
    let r = HsiCube::from_fn((5, 9, 8), |_| rng.gen::<f32>()).unwrap();
    let (_, raw) = emit_error_map(&x, &r, &dir.path().join("rand")).unwrap();
    let (m, _) = read_cube(&raw).unwrap();
    assert_eq!(m.dim(), (1, 9, 8));
    for i in 0..9 {
        for j in 0..8 {
            let mut acc = 0.0f64;
            for b in 0..5 {
                acc += (x.data()[[b, i, j]] as f64 - r.data()[[b, i, j]] as f64).abs();
            }
            assert!((m.data()[[0, i, j]] as f64 - acc / 5.0).abs() < 1e-6);
        }
    }
    assert_eq!(error_map(&x, &r).unwrap().len(), 72);
}

#[test]
fn constant_cube_is_uniform_gray() {
    let dir = tempfile::tempdir().unwrap();
    let x = HsiCube::filled((102, 4, 3), 0.3).unwrap();
    let p = emit_rgb(&x, [10, 30, 60], &dir.path().join("flat")).unwrap();
    let (magic, w, h, px) = read_pnm(&p);
    assert_eq!((magic.as_str(), w, h), ("P6", 3, 4));
    assert!(px.iter().all(|&v| v == 128));
}

#[test]
fn band_triples_map_to_blue_green_red() {
    // each band is a flat field except the three chosen ones
    for (l, bands) in [(102usize, [10usize, 30, 60]), (128, [12, 20, 29])] {
        let x = HsiCube::from_fn((l, 2, 2), |(b, r, c)| {
            let k = (r * 2 + c) as f32;
            if b == bands[0] {
                k
            } else if b == bands[1] {
                3.0 - k
            } else if b == bands[2] {
                if k == 0.0 { 1.0 } else { 0.0 }
            } else {
                0.5
            }
        })
        .unwrap();
        let img = rgb_composite(&x, bands).unwrap();
        assert_eq!(img.get_pixel(0, 0).0, [255, 255, 0]);
        assert_eq!(img.get_pixel(1, 1).0, [0, 0, 255]);
        assert!(rgb_composite(&x, [0, 1, l]).is_err());
    }
}
