use hnoma::config::ScenarioConfig;
use hnoma::imaging::*;
use hnoma::montecarlo::RunOptions;
use hnoma::noma::Scheme;
use hnoma::Error;
use proptest::prelude::*;

const PAIR: &str = r#"
[scenario]
seed = 5
[users]
distances = [2.0, 1.0]
alphas = [0.8, 0.2]
[modulation]
orders = [4, 4]
[channel]
exponent = 1
[image]
snr_db = 25
"#;

fn cfg(overrides: &[&str]) -> ScenarioConfig {
    let o: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    ScenarioConfig::load(PAIR, &o).unwrap()
}

fn pair(w: usize, h: usize) -> (GrayImage, GrayImage) {
    (
        synthetic_image(Synthetic::Noise { beta: 2.0 }, w, h, 1).unwrap(),
        synthetic_image(Synthetic::Checkerboard { cell: 4 }, w, h, 2).unwrap(),
    )
}

#[test]
fn noiseless_link_reproduces_both_images() {
    let (far, near) = pair(33, 17);
    for scheme in [Scheme::Tnoma, Scheme::Hnoma] {
        let r = transmit_image_pair(&far, &near, &cfg(&["channel.noiseless=true", "users.alphas=[0.95, 0.05]"]), scheme, RunOptions::default())
            .unwrap();
        assert_eq!(r.recon_far, far);
        assert_eq!(r.recon_near, near);
        assert!(r.reports.iter().all(|p| p.psnr_db.is_infinite() && p.mse == 0.0));
    }
}

#[test]
fn reconstruction_is_seeded() {
    let (far, near) = pair(64, 64);
    let c = cfg(&["image.snr_db=15"]);
    let a = transmit_image_pair(&far, &near, &c, Scheme::Hnoma, RunOptions { workers: 1 }).unwrap();
    let b = transmit_image_pair(&far, &near, &c, Scheme::Hnoma, RunOptions { workers: 6 }).unwrap();
    assert_eq!(a, b);
    assert!(a.reports[0].psnr_db.is_finite());
    let c2 = cfg(&["image.snr_db=15", "scenario.seed=6"]);
    let other = transmit_image_pair(&far, &near, &c2, Scheme::Hnoma, RunOptions::default()).unwrap();
    assert_ne!(a.recon_far, other.recon_far);
}

#[test]
fn psnr_rises_with_snr() {
    let (far, near) = pair(64, 64);
    let lo = transmit_image_pair(&far, &near, &cfg(&["image.snr_db=10"]), Scheme::Tnoma, RunOptions::default()).unwrap();
    let hi = transmit_image_pair(&far, &near, &cfg(&["image.snr_db=40"]), Scheme::Tnoma, RunOptions::default()).unwrap();
    for u in 0..2 {
        assert!(hi.reports[u].psnr_db > lo.reports[u].psnr_db, "{:?} {:?}", lo.reports, hi.reports);
    }
}

#[test]
fn rejects_wrong_user_count_and_size_mismatch() {
    let (far, near) = pair(8, 8);
    let three = cfg(&["users.distances=[3.0, 2.0, 1.0]", "users.alphas=[0.6, 0.3, 0.1]", "modulation.orders=[4, 4, 4]"]);
    let err = transmit_image_pair(&far, &near, &three, Scheme::Tnoma, RunOptions::default()).unwrap_err();
    assert!(matches!(err, Error::InvalidConfig(_)), "{err:?}");
    let small = synthetic_image(Synthetic::Gradient, 8, 7, 0).unwrap();
    assert!(transmit_image_pair(&far, &small, &cfg(&[]), Scheme::Tnoma, RunOptions::default()).is_err());
}

#[test]
fn full_size_payload_parses_and_short_one_does_not() {
    let mut data = b"P5\n# test\n512 512\n255\n".to_vec();
    let header = data.len();
    data.extend((0..512 * 512).map(|i| (i % 251) as u8));
    let img = parse_pgm(&data).unwrap();
    assert_eq!((img.width(), img.height()), (512, 512));
    assert_eq!(img.pixels()[252], 1);
    data.pop();
    match parse_pgm(&data) {
        Err(Error::Parse { offset, .. }) => assert_eq!(offset, header + 512 * 512 - 1),
        other => panic!("{other:?}"),
    }
}

#[test]
fn bad_headers_are_located() {
    assert!(matches!(parse_pgm(b"P2\n1 1\n255\n\0"), Err(Error::Parse { offset: 0, .. })));
    assert!(matches!(parse_pgm(b"P5\n1 1\n65535\n\0\0"), Err(Error::Parse { offset: 7, .. })));
}

#[test]
fn file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.pgm");
    let img = synthetic_image(Synthetic::Gradient, 40, 30, 0).unwrap();
    write_pgm(&img, &path).unwrap();
    assert_eq!(read_pgm(&path).unwrap(), img);
    assert!(read_pgm(dir.path().join("missing.pgm")).is_err());
}

#[test]
fn synthetic_images_are_deterministic() {
    for kind in [Synthetic::Gradient, Synthetic::Checkerboard { cell: 3 }, Synthetic::Noise { beta: 2.5 }] {
        assert_eq!(synthetic_image(kind, 20, 10, 9).unwrap(), synthetic_image(kind, 20, 10, 9).unwrap());
    }
    assert_ne!(
        synthetic_image(Synthetic::Noise { beta: 2.0 }, 20, 10, 1).unwrap(),
        synthetic_image(Synthetic::Noise { beta: 2.0 }, 20, 10, 2).unwrap()
    );
    assert!(synthetic_image(Synthetic::Gradient, 0, 10, 0).is_err());
}

proptest! {
    #[test]
    fn pgm_and_bits_round_trip(px in proptest::collection::vec(any::<u8>(), 16 * 16)) {
        let img = GrayImage::new(16, 16, px).unwrap();
        prop_assert_eq!(&parse_pgm(&encode_pgm(&img)).unwrap(), &img);
        let bits = image_to_bits(&img);
        prop_assert_eq!(bits.len(), 16 * 16 * 8);
        prop_assert_eq!(&bits_to_image(&bits, 16, 16).unwrap(), &img);
        prop_assert!(psnr(&img, &img).unwrap().is_infinite());
    }
}
