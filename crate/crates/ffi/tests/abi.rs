use std::ffi::{CStr, CString};
use std::ptr;

use vomask_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(vomask_last_error()).to_string_lossy().into_owned() }
}

fn mask(frames: usize, h: usize, w: usize, data: &[u8]) -> *mut VomaskMask {
    let mut m = ptr::null_mut();
    let s = unsafe { vomask_mask_new(frames, h, w, data.as_ptr(), &mut m) };
    assert_eq!(s, VomaskStatus::Ok);
    m
}

fn bytes(m: *const VomaskMask) -> Vec<u8> {
    let (mut f, mut h, mut w) = (0, 0, 0);
    unsafe {
        assert_eq!(vomask_mask_dims(m, &mut f, &mut h, &mut w), VomaskStatus::Ok);
        let mut buf = vec![0u8; f * h * w];
        assert_eq!(vomask_mask_copy(m, buf.as_mut_ptr(), buf.len()), VomaskStatus::Ok);
        buf
    }
}

#[test]
fn compress_single_pixel() {
    let mut data = vec![0u8; 9 * 2 * 2];
    data[4 * 4 + 3] = 1;
    let m = mask(9, 2, 2, &data);
    let mut out = ptr::null_mut();
    unsafe {
        assert_eq!(vomask_compress(m, 4, VomaskCompressionMode::Union, &mut out), VomaskStatus::Ok);
        let b = bytes(out);
        assert_eq!(b.len(), 3 * 4);
        assert_eq!(b.iter().position(|&v| v == 1), Some(4 + 3));
        vomask_mask_free(out);

        let mut near = ptr::null_mut();
        assert_eq!(vomask_compress(m, 4, VomaskCompressionMode::Nearest, &mut near), VomaskStatus::Ok);
        assert!(bytes(near).iter().all(|&v| v == 0));
        vomask_mask_free(near);
        vomask_mask_free(m);
    }
}

#[test]
fn errors_carry_codes_and_messages() {
    let mut out = ptr::null_mut();
    unsafe {
        let s = vomask_mask_new(1, 1, 2, [0u8, 2].as_ptr(), &mut out);
        assert_eq!(s, VomaskStatus::InvalidArgument);
        assert!(out.is_null());
        assert!(!last_error().is_empty());

        assert_eq!(vomask_mask_dims(ptr::null(), ptr::null_mut(), ptr::null_mut(), ptr::null_mut()), VomaskStatus::NullPointer);

        let a = mask(1, 1, 2, &[0, 1]);
        let b = mask(1, 2, 1, &[0, 1]);
        assert_eq!(vomask_union(a, b, &mut out), VomaskStatus::DimensionMismatch);
        assert_eq!(vomask_erode(a, 0, &mut out), VomaskStatus::InvalidArgument);
        vomask_mask_free(a);
        vomask_mask_free(b);
        vomask_mask_free(ptr::null_mut());
    }
}

#[test]
fn mseq_round_trip_and_format_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("m.mseq").to_str().unwrap()).unwrap();
    let data: Vec<u8> = (0..3 * 5 * 7).map(|i| (i % 3 == 0) as u8).collect();
    let m = mask(3, 5, 7, &data);
    unsafe {
        assert_eq!(vomask_mseq_write(m, path.as_ptr()), VomaskStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(vomask_mseq_read(path.as_ptr(), &mut back), VomaskStatus::Ok);
        assert_eq!(bytes(back), data);
        vomask_mask_free(back);
        vomask_mask_free(m);

        std::fs::write(dir.path().join("bad.mseq"), b"XSEQ\x01").unwrap();
        let bad = CString::new(dir.path().join("bad.mseq").to_str().unwrap()).unwrap();
        assert_eq!(vomask_mseq_read(bad.as_ptr(), &mut back), VomaskStatus::Format);
        assert!(last_error().contains("magic"));
        let missing = CString::new(dir.path().join("none.mseq").to_str().unwrap()).unwrap();
        assert_eq!(vomask_mseq_read(missing.as_ptr(), &mut back), VomaskStatus::Io);
    }
}

#[test]
fn json_driven_generation_and_degradation() {
    let spec = CString::new(r#"{"frames": 10, "height": 16, "width": 16, "shape": "full_frame", "dynamics": "full_span", "seed": 3}"#).unwrap();
    let mut m = ptr::null_mut();
    unsafe {
        assert_eq!(vomask_randmask(spec.as_ptr(), &mut m), VomaskStatus::Ok);
        let mut n = 0;
        assert_eq!(vomask_mask_count(m, &mut n), VomaskStatus::Ok);
        assert_eq!(n, 10 * 16 * 16);

        let deg = CString::new(r#"{"drop_rate": 0.5, "seed": 1}"#).unwrap();
        let mut d = ptr::null_mut();
        assert_eq!(vomask_degrade(m, deg.as_ptr(), &mut d), VomaskStatus::Ok);
        assert_eq!(vomask_mask_count(d, &mut n), VomaskStatus::Ok);
        assert_eq!(n, 5 * 16 * 16);

        let bad = CString::new(r#"{"drop_rate": 0.5, "bogus": 1}"#).unwrap();
        let mut x = ptr::null_mut();
        assert_eq!(vomask_degrade(m, bad.as_ptr(), &mut x), VomaskStatus::Json);
        vomask_mask_free(d);
        vomask_mask_free(m);
    }
}

#[test]
fn metrics_through_handles() {
    let a: Vec<u8> = vec![100; 2 * 16 * 16];
    let b: Vec<u8> = vec![110; 2 * 16 * 16];
    let (mut fa, mut fb) = (ptr::null_mut(), ptr::null_mut());
    unsafe {
        assert_eq!(vomask_frames_new(2, 16, 16, 1, a.as_ptr(), &mut fa), VomaskStatus::Ok);
        assert_eq!(vomask_frames_new(2, 16, 16, 1, b.as_ptr(), &mut fb), VomaskStatus::Ok);
        let mut v = 0.0;
        assert_eq!(vomask_psnr(fa, fb, ptr::null(), &mut v), VomaskStatus::Ok);
        assert!((v - 28.1308).abs() < 1e-3);
        assert_eq!(vomask_ssim(fa, fa, ptr::null(), &mut v), VomaskStatus::Ok);
        assert!((v - 1.0).abs() < 1e-9);
        assert_eq!(vomask_temporal_flicker(fa, ptr::null(), &mut v), VomaskStatus::Ok);
        assert_eq!(v, 0.0);

        let mut data = vec![0u8; 2 * 16 * 16];
        for t in 0..2 {
            for y in 4..8 {
                for x in 4..8 {
                    data[t * 256 + y * 16 + x] = 1;
                }
            }
        }
        let m = mask(2, 16, 16, &data);
        let mut json = ptr::null_mut();
        assert_eq!(vomask_evaluate(fa, fa, m, ptr::null(), &mut json), VomaskStatus::Ok);
        let report: serde_json::Value = serde_json::from_str(CStr::from_ptr(json).to_str().unwrap()).unwrap();
        assert_eq!(report["metrics"]["psnr"], 100.0);
        vomask_string_free(json);

        let strict = CString::new(r#"{"require_paired": true}"#).unwrap();
        assert_eq!(vomask_evaluate(fa, ptr::null(), m, strict.as_ptr(), &mut json), VomaskStatus::InvalidArgument);

        vomask_mask_free(m);
        vomask_frames_free(fa);
        vomask_frames_free(fb);
    }
}
