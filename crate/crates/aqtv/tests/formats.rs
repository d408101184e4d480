use aqtv::flo::{decode_flo, encode_flo};
use aqtv::image_io::{decode_pgm, decode_png, encode_pgm, encode_pgm_ascii, encode_png_gray};
use aqtv::{read_flo, read_image, write_flo, write_image, write_rgb};
use aqtv_core::metrics::{flow_to_color, FlowField, RgbImage};
use aqtv_core::raster::Raster;
use proptest::prelude::*;

fn bytes_image() -> impl Strategy<Value = Raster> {
    (1usize..12, 1usize..12).prop_flat_map(|(w, h)| {
        prop::collection::vec(any::<u8>(), w * h)
            .prop_map(move |b| Raster::new(w, h, b.iter().map(|&v| v as f64 / 255.0).collect()))
    })
}

#[test]
fn ascii_and_binary_pgm_agree() {
    let img = Raster::from_fn(5, 3, |x, y| ((7 * x + 31 * y) % 256) as f64 / 255.0);
    let a = decode_pgm(&encode_pgm_ascii(&img)).unwrap();
    let b = decode_pgm(&encode_pgm(&img)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a, img);
}

#[test]
fn files_round_trip_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let img = Raster::from_fn(4, 2, |x, y| (x * 60 + y * 7) as f64 / 255.0);
    for name in ["a.pgm", "a.png"] {
        let p = dir.path().join(name);
        write_image(&img, &p).unwrap();
        let first = std::fs::read(&p).unwrap();
        let back = read_image(&p).unwrap();
        assert_eq!(back, img);
        write_image(&back, &p).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), first);
    }
    let flow = FlowField::from_fn(3, 2, |x, y| [x as f64 * 0.5 - 1.0, y as f64 * 0.25]);
    let p = dir.path().join("f.flo");
    write_flo(&flow, &p).unwrap();
    assert_eq!(read_flo(&p).unwrap(), flow);
    assert!(read_image(&dir.path().join("a.bmp")).is_err());
}

#[test]
fn colour_output_formats() {
    let dir = tempfile::tempdir().unwrap();
    let rgb = flow_to_color(&FlowField::zeros(2, 2), None);
    write_rgb(&rgb, &dir.path().join("c.ppm")).unwrap();
    write_rgb(&rgb, &dir.path().join("c.png")).unwrap();
    let ppm = std::fs::read(dir.path().join("c.ppm")).unwrap();
    assert!(ppm.starts_with(b"P6\n2 2\n255\n"));
    assert_eq!(ppm.len(), 11 + 12);
    let img = RgbImage { width: 1, height: 1, data: vec![[0, 0, 0]] };
    assert!(write_rgb(&img, &dir.path().join("c.pgm")).is_err());
}

proptest! {
    #[test]
    fn pgm_round_trip_is_bit_exact(img in bytes_image()) {
        let bytes = encode_pgm(&img);
        let back = decode_pgm(&bytes).unwrap();
        prop_assert_eq!(&back, &img);
        prop_assert_eq!(encode_pgm(&back), bytes);
        prop_assert_eq!(decode_pgm(&encode_pgm_ascii(&img)).unwrap(), img);
    }

    #[test]
    fn png_round_trip_is_bit_exact(img in bytes_image()) {
        let bytes = encode_png_gray(&img).unwrap();
        let back = decode_png(&bytes).unwrap();
        prop_assert_eq!(&back, &img);
        prop_assert_eq!(encode_png_gray(&back).unwrap(), bytes);
    }

    #[test]
    fn flo_round_trip_is_bit_exact(vals in prop::collection::vec((any::<f32>(), any::<f32>()), 1..30)) {
        prop_assume!(vals.iter().all(|(a, b)| !a.is_nan() && !b.is_nan()));
        let flow = FlowField::new(vals.len(), 1, vals.iter().map(|&(a, b)| [a as f64, b as f64]).collect());
        let bytes = encode_flo(&flow);
        let back = decode_flo(&bytes).unwrap();
        prop_assert_eq!(&back, &flow);
        prop_assert_eq!(encode_flo(&back), bytes);
    }
}
