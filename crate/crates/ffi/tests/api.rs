use std::ffi::{CStr, CString};
use std::ptr;

use discseg::loss::{loss_backward, LossConfig};
use discseg::maps::{EmbeddingMap, LabelMap};
use discseg::toynet::{forward, network_input, NetConfig, NetParams};
use discseg_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(dseg_last_error()) }.to_string_lossy().into_owned()
}

fn fixture() -> (EmbeddingMap, LabelMap) {
    let emb = EmbeddingMap::from_fn(3, 4, 2, |y, x, d| ((y * 7 + x * 3 + d * 5) % 11) as f64 * 0.3);
    let labels = LabelMap::from_vec(3, 4, vec![1, 1, 2, 2, 1, 0, 2, 2, 3, 3, 0, 3]).unwrap();
    (emb, labels)
}

#[test]
fn loss_matches_library() {
    let (emb, labels) = fixture();
    let cfg = dseg_loss_config_default();
    let mut out = DsegLossBreakdown::default();
    let mut grad = vec![0.0; emb.as_slice().len()];
    let status = unsafe {
        dseg_loss(emb.as_slice().as_ptr(), labels.as_slice().as_ptr(), 3, 4, 2, &cfg, &mut out, grad.as_mut_ptr())
    };
    assert_eq!(status, DsegStatus::Ok);
    let (b, g) = loss_backward(&emb, &labels, &LossConfig::default()).unwrap();
    assert_eq!(out.total, b.total);
    assert_eq!(out.l_var, b.l_var);
    assert_eq!(grad, g.as_slice());
}

#[test]
fn null_and_shape_errors_set_status_and_message() {
    let cfg = dseg_loss_config_default();
    let mut out = DsegLossBreakdown::default();
    let status = unsafe { dseg_loss(ptr::null(), ptr::null(), 2, 2, 2, &cfg, &mut out, ptr::null_mut()) };
    assert_eq!(status, DsegStatus::NullPointer);
    assert!(last_error().contains("embedding"), "{}", last_error());

    let bad = [f64::NAN; 8];
    let labels = [1u32; 4];
    let status = unsafe { dseg_loss(bad.as_ptr(), labels.as_ptr(), 2, 2, 2, &cfg, &mut out, ptr::null_mut()) };
    assert_eq!(status, DsegStatus::NonFinite);

    let bad_cfg = DsegLossConfig { delta_v: -1.0, ..cfg };
    let emb = [0.0; 8];
    let status = unsafe { dseg_loss(emb.as_ptr(), labels.as_ptr(), 2, 2, 2, &bad_cfg, &mut out, ptr::null_mut()) };
    assert_eq!(status, DsegStatus::InvalidArgument);
    assert!(!last_error().is_empty());

    let status = unsafe { dseg_loss(emb.as_ptr(), labels.as_ptr(), 2, 2, 2, &cfg, &mut out, ptr::null_mut()) };
    assert_eq!(status, DsegStatus::Ok);
    assert_eq!(last_error(), "");
}

#[test]
fn clustering_recovers_separated_groups() {
    // two tight groups far apart; pixel 5 is background
    let emb: Vec<f64> = [[0.0, 0.0], [0.1, 0.0], [0.0, 0.1], [5.0, 5.0], [5.1, 5.0], [9.0, 9.0]].concat();
    let fg = [1u8, 1, 1, 1, 1, 0];
    let cfg = DsegClusterConfig { min_cluster_size: 1, ..dseg_cluster_config_default() };
    let mut labels = [0u32; 6];
    let mut count = 0usize;
    let status = unsafe {
        dseg_mean_shift(emb.as_ptr(), fg.as_ptr(), 2, 3, 2, &cfg, DsegNorm::L2, labels.as_mut_ptr(), &mut count)
    };
    assert_eq!(status, DsegStatus::Ok);
    assert_eq!(count, 2);
    assert_eq!(labels, [1, 1, 1, 2, 2, 0]);

    let centers = [5.0, 5.0, 0.0, 0.0];
    let status = unsafe {
        dseg_cluster_known_centers(
            emb.as_ptr(),
            fg.as_ptr(),
            2,
            3,
            2,
            centers.as_ptr(),
            2,
            0.5,
            DsegNorm::L2,
            labels.as_mut_ptr(),
            &mut count,
        )
    };
    assert_eq!(status, DsegStatus::Ok);
    assert_eq!(labels, [2, 2, 2, 1, 1, 0]);
}

#[test]
fn score_of_identical_maps() {
    let gt = [1u32, 1, 2, 0];
    let mut s = DsegImageScore::default();
    assert_eq!(unsafe { dseg_score(gt.as_ptr(), gt.as_ptr(), 2, 2, &mut s) }, DsegStatus::Ok);
    assert_eq!((s.sbd, s.ap50, s.pred_count, s.gt_count), (1.0, 1.0, 2, 2));
    let empty = [0u32; 4];
    assert_eq!(unsafe { dseg_score(empty.as_ptr(), gt.as_ptr(), 2, 2, &mut s) }, DsegStatus::Ok);
    assert_eq!(s.sbd, 0.0);
}

#[test]
fn scene_handle_lifecycle() {
    let cfg = DsegSticksConfig { image_size: 32, stick_length: 20.0, seed: 3, ..dseg_sticks_config_default() };
    let mut scene = ptr::null_mut();
    assert_eq!(unsafe { dseg_scene_generate(&cfg, &mut scene) }, DsegStatus::Ok);
    let n = unsafe { dseg_scene_size(scene) };
    assert_eq!(n, 32);
    let mut rgb = vec![0.0; n * n * 3];
    let mut labels = vec![0u32; n * n];
    assert_eq!(unsafe { dseg_scene_copy(scene, rgb.as_mut_ptr(), labels.as_mut_ptr()) }, DsegStatus::Ok);
    let direct = discseg::synthdata::generate_scene(&discseg::synthdata::SticksConfig {
        image_size: 32,
        stick_length: 20.0,
        seed: 3,
        ..Default::default()
    })
    .unwrap();
    assert_eq!(rgb, direct.image.as_slice());
    assert_eq!(labels, direct.instances.as_slice());
    unsafe { dseg_scene_free(scene) };
    unsafe { dseg_scene_free(ptr::null_mut()) };
    assert_eq!(unsafe { dseg_scene_size(ptr::null()) }, 0);
}

#[test]
fn network_from_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let params =
        NetParams::init(&NetConfig { hidden_channels: 4, num_layers: 2, out_dims: 3, ..NetConfig::default() }).unwrap();
    discseg::io::save_checkpoint(dir.path(), &params, None).unwrap();
    let path = CString::new(dir.path().to_str().unwrap()).unwrap();
    let mut net = ptr::null_mut();
    assert_eq!(unsafe { dseg_net_load(path.as_ptr(), &mut net) }, DsegStatus::Ok);
    assert_eq!(unsafe { dseg_net_out_dims(net) }, 3);

    let image = discseg::synthdata::RgbImage::from_vec(5, 6, (0..90).map(|i| (i % 7) as f64 / 7.0).collect()).unwrap();
    let mut emb = vec![0.0; 5 * 6 * 3];
    assert_eq!(unsafe { dseg_net_embed(net, image.as_slice().as_ptr(), 5, 6, emb.as_mut_ptr()) }, DsegStatus::Ok);
    let (expected, _) = forward(&params, &network_input(&image)).unwrap();
    assert_eq!(emb, expected.as_slice());
    unsafe { dseg_net_free(net) };

    let missing = CString::new("/nonexistent/checkpoint").unwrap();
    let mut net = ptr::null_mut();
    assert_eq!(unsafe { dseg_net_load(missing.as_ptr(), &mut net) }, DsegStatus::Io);
    assert!(net.is_null());
    assert!(last_error().contains("net.cfg"), "{}", last_error());
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(dseg_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}
