mod common;

use common::*;
use pqsm::ply::{read_ply, write_ply};
use pqsm::cloud::bounding_box as bounding_box_of;
use pqsm::{load_ply, save_ply, Error, PlyFormat, Point, PointCloud};
use proptest::prelude::*;
use rand::Rng;

fn parse(text: &str) -> pqsm::Result<PointCloud> {
    read_ply(text.as_bytes())
}

fn bits(c: &PointCloud) -> Vec<([u64; 3], [u8; 3])> {
    c.points().iter().map(|p| (p.position.map(f64::to_bits), p.color)).collect()
}

#[test]
fn one_ascii_vertex() {
    let c = parse(
        "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n0 0 0 255 0 0\n",
    )
    .unwrap();
    assert_eq!(c.points(), &[Point::new([0.0; 3], [255, 0, 0])]);
}

#[test]
fn short_color_names_and_extra_properties() {
    let c = parse(
        "ply\nformat ascii 1.0\ncomment scanner output\nelement vertex 2\nproperty double x\nproperty double y\n\
         property double z\nproperty float nx\nproperty float ny\nproperty float nz\nproperty uchar r\n\
         property uchar g\nproperty uchar b\nproperty uchar alpha\nelement face 0\n\
         property list uchar int vertex_indices\nend_header\n1 2 3 0 0 1 10 20 30 255\n-1 -2 -3.5 1 0 0 1 2 3 0\n",
    )
    .unwrap();
    assert_eq!(c.points()[1], Point::new([-1.0, -2.0, -3.5], [1, 2, 3]));
}

#[test]
fn colorless_cloud_is_rejected() {
    let r = parse("ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\nend_header\n0 0 0\n");
    assert!(matches!(r, Err(Error::ColorlessCloud)));
}

#[test]
fn malformed_input_reports_the_line() {
    let header = "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\n\
                  property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n";
    match parse(&format!("{header}0 0 0 1 2 3\n0 zero 0 1 2 3\n")) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 12),
        other => panic!("unexpected {other:?}"),
    }
    assert!(matches!(parse(&format!("{header}0 0 0 1 2 3\n")), Err(Error::Truncated { expected: 2, found: 1 })));
    match parse("ply\nformat ascii 1.0\nelement vertex x\nend_header\n") {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("unexpected {other:?}"),
    }
    assert!(matches!(parse("plx\n"), Err(Error::Parse { line: 1, .. })));
    let big = parse("ply\nformat binary_big_endian 1.0\nelement vertex 0\nend_header\n");
    assert!(big.unwrap_err().to_string().contains("big_endian"));
}

#[test]
fn truncated_binary_body() {
    let mut rng = rng(1);
    let cloud = random_cloud(&mut rng, 10, 1.0);
    let mut bytes = Vec::new();
    write_ply(&cloud, &mut bytes, PlyFormat::BinaryLittleEndian).unwrap();
    bytes.truncate(bytes.len() - 5);
    assert!(matches!(read_ply(&bytes[..]), Err(Error::Truncated { expected: 10, .. })));
}

#[test]
fn missing_file_names_the_path() {
    let err = load_ply("/nonexistent/dir/cloud.ply").unwrap_err();
    assert!(err.to_string().contains("/nonexistent/dir/cloud.ply"), "{err}");
}

#[test]
fn round_trips_in_both_formats() {
    let mut rng = rng(2);
    let dir = tempfile::tempdir().unwrap();
    for n in [1, 1000, 10_000] {
        let cloud = random_cloud(&mut rng, n, 1e3);
        let path = dir.path().join(format!("c{n}.ply"));
        save_ply(&cloud, &path, PlyFormat::BinaryLittleEndian).unwrap();
        assert_eq!(bits(&load_ply(&path).unwrap()), bits(&cloud));
        save_ply(&cloud, &path, PlyFormat::Ascii).unwrap();
        let back = load_ply(&path).unwrap();
        for (a, b) in cloud.points().iter().zip(back.points()) {
            assert_eq!(a.color, b.color);
            for k in 0..3 {
                assert!((a.position[k] - b.position[k]).abs() <= 1e-6 * a.position[k].abs().max(1e-300));
            }
        }
    }
}

#[test]
fn float_coordinates_widen_exactly() {
    let mut bytes = b"ply\nformat binary_little_endian 1.0\nelement vertex 1\nproperty float x\nproperty float y\n\
property float z\nproperty uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n"
        .to_vec();
    for v in [0.1f32, -2.5, 1e-7] {
        bytes.extend(v.to_le_bytes());
    }
    bytes.extend([7, 8, 9]);
    let c = read_ply(&bytes[..]).unwrap();
    assert_eq!(c.points()[0].position, [0.1f32 as f64, -2.5, 1e-7f32 as f64]);
}

#[test]
fn bounding_box_examples() {
    let c = PointCloud::new(vec![Point::new([0.0; 3], [0; 3]), Point::new([1.0, 2.0, 3.0], [0; 3])]).unwrap();
    let b = bounding_box_of(&c);
    assert_eq!((b.min_corner, b.max_corner), ([0.0; 3], [1.0, 2.0, 3.0]));
    let single = PointCloud::new(vec![Point::new([5.0; 3], [0; 3])]).unwrap();
    let b = bounding_box_of(&single);
    assert_eq!((b.min_corner, b.max_corner, b.max_side()), ([5.0; 3], [5.0; 3], 0.0));
    let mut rng = rng(3);
    let c = random_cloud(&mut rng, 100, 1.0);
    let b = bounding_box_of(&c);
    assert!(c.positions().all(|p| b.contains(p)));
    for a in 0..3 {
        assert!(c.positions().any(|p| p[a] == b.min_corner[a]));
        assert!(c.positions().any(|p| p[a] == b.max_corner[a]));
    }
}

fn arb_cloud() -> impl Strategy<Value = PointCloud> {
    prop::collection::vec((prop::array::uniform3(any::<f64>().prop_filter("finite", |v| v.is_finite())), prop::array::uniform3(any::<u8>())), 1..200)
        .prop_map(|v| PointCloud::new(v.into_iter().map(|(p, c)| Point::new(p, c)).collect()).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn binary_round_trip_is_bit_exact(cloud in arb_cloud(), with_saliency in any::<bool>(), seed in any::<u64>()) {
        let cloud = if with_saliency {
            let mut rng = rng(seed);
            let s: Vec<f64> = (0..cloud.len()).map(|_| rng.random::<f64>() * 1e3).collect();
            PointCloud::with_saliency(cloud.points().to_vec(), s).unwrap()
        } else {
            cloud
        };
        let mut bytes = Vec::new();
        write_ply(&cloud, &mut bytes, PlyFormat::BinaryLittleEndian).unwrap();
        let back = read_ply(&bytes[..]).unwrap();
        prop_assert_eq!(bits(&back), bits(&cloud));
        prop_assert_eq!(back.saliency().map(|s| s.iter().map(|v| v.to_bits()).collect::<Vec<_>>()),
                        cloud.saliency().map(|s| s.iter().map(|v| v.to_bits()).collect::<Vec<_>>()));
    }

    #[test]
    fn bounding_box_ignores_order(cloud in arb_cloud(), seed in any::<u64>()) {
        let mut rng = rng(seed);
        let mut pts = cloud.points().to_vec();
        for i in (1..pts.len()).rev() {
            pts.swap(i, rng.random_range(0..=i));
        }
        let shuffled = PointCloud::new(pts).unwrap();
        prop_assert_eq!(bounding_box_of(&cloud), bounding_box_of(&shuffled));
    }
}
