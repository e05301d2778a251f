use kmpigment::io::raster::{error_scale_path, read_png_bytes};
use kmpigment::io::{read_csv_matrix, read_envi, read_mask_png, write_csv_matrix, write_envi_with, write_error_png, write_mask_png, Interleave, NamedTable};
use kmpigment::synth::synth_scene;
use kmpigment::{ClassMap, PixelMask};

#[test]
fn envi_round_trip_in_every_interleave() {
    let scene = synth_scene(2, 13, 9, 0.01, 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for il in [Interleave::Bsq, Interleave::Bil, Interleave::Bip] {
        let hdr = dir.path().join(format!("{il:?}.hdr"));
        let img = dir.path().join(format!("{il:?}.img"));
        write_envi_with(&scene.cube, &hdr, &img, il).unwrap();
        let back = read_envi(&hdr, &img).unwrap();
        assert_eq!(back, scene.cube, "{il:?}");
    }
}

#[test]
fn envi_rejects_truncated_data() {
    let scene = synth_scene(1, 8, 8, 0.0, 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (hdr, img) = (dir.path().join("c.hdr"), dir.path().join("c.img"));
    write_envi_with(&scene.cube, &hdr, &img, Interleave::Bsq).unwrap();
    let bytes = std::fs::read(&img).unwrap();
    std::fs::write(&img, &bytes[..bytes.len() - 4]).unwrap();
    assert!(read_envi(&hdr, &img).is_err());
}

#[test]
fn mask_png_round_trip() {
    let mask = PixelMask::from_fn(19, 7, |r, c| (r * 3 + c) % 5 == 0);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.png");
    write_mask_png(&mask, &path).unwrap();
    assert_eq!(read_mask_png(&path).unwrap(), mask);
}

#[test]
fn csv_round_trip_is_exact() {
    let mut t = NamedTable::new(vec!["a".into(), "b".into()]);
    t.rows.push(vec![0.1 + 0.2, 1e-300]);
    t.rows.push(vec![-3.0, f64::MAX]);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    write_csv_matrix(&t, &path).unwrap();
    assert_eq!(read_csv_matrix(&path).unwrap(), t);
}

#[test]
fn error_png_scales_to_the_maximum() {
    let map = ClassMap {
        width: 3,
        height: 1,
        k: 1,
        labels: vec![Some(0), Some(0), None],
        rmse: vec![0.02, 0.01, 0.0],
        class_means: vec![vec![0.5]],
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("e.png");
    write_error_png(&map, &path).unwrap();
    let (w, h, channels, bytes) = read_png_bytes(&path).unwrap();
    assert_eq!((w, h, channels), (3, 1, 1));
    assert_eq!(bytes, vec![255, 128, 0]);
    let side = std::fs::read_to_string(error_scale_path(&path)).unwrap();
    assert!(side.contains("max_rmse = 0.02"), "{side}");
}
