use std::ffi::{CStr, CString};
use std::f64::consts::PI;
use std::ptr;

use stratlab_ffi::*;

fn cstr(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(stratlab_last_error()) }.to_string_lossy().into_owned()
}

struct Handle(*mut StratlabModel);

impl Drop for Handle {
    fn drop(&mut self) {
        unsafe { stratlab_model_free(self.0) };
    }
}

fn cone(alpha: f64) -> Handle {
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { stratlab_model_flat_cone(alpha, 1.0, &mut m) }, StratlabStatus::Ok);
    Handle(m)
}

#[test]
fn cone_distances_follow_the_law_of_cosines() {
    let m = cone(PI);
    let (p, q) = (cstr(r#"{"radial":{"r":0.5,"angle":0.0}}"#), cstr(r#"{"radial":{"r":0.5,"angle":1.0}}"#));
    let mut d = 0.0;
    assert_eq!(unsafe { stratlab_distance(m.0, p.as_ptr(), q.as_ptr(), &mut d) }, StratlabStatus::Ok);
    // link angle 1 on a circle of radius 1/2 is a cone angle of 1/2
    let oracle = (0.25f64 + 0.25 - 2.0 * 0.25 * 0.5f64.cos()).sqrt();
    assert!((d - oracle).abs() < 1e-12, "{d} vs {oracle}");
    let apex = cstr("apex");
    assert_eq!(unsafe { stratlab_distance(m.0, apex.as_ptr(), p.as_ptr(), &mut d) }, StratlabStatus::Ok);
    assert!((d - 0.5).abs() < 1e-15);
}

#[test]
fn classification_flags_and_json() {
    let wide = cone(3.0 * PI);
    let (mut rcd, mut ind) = (true, true);
    assert_eq!(unsafe { stratlab_classify(wide.0, 0.0, 2.0, &mut rcd, &mut ind) }, StratlabStatus::Ok);
    assert!(!rcd && !ind);
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { stratlab_classify_json(wide.0, 0.0, 2.0, &mut s) }, StratlabStatus::Ok);
    let text = unsafe { CStr::from_ptr(s) }.to_str().unwrap().to_string();
    unsafe { stratlab_string_free(s) };
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["is_rcd"], false);
    assert!(v["reasons"][0].as_str().unwrap().starts_with("angle 3π > 2π"));

    let mut susp = ptr::null_mut();
    assert_eq!(unsafe { stratlab_model_spherical_suspension(2, PI, &mut susp) }, StratlabStatus::Ok);
    let susp = Handle(susp);
    assert_eq!(unsafe { stratlab_classify(susp.0, 1.0, 2.0, &mut rcd, &mut ind) }, StratlabStatus::Ok);
    assert!(rcd && !ind);
}

#[test]
fn model_json_round_trip() {
    let m = cone(PI / 2.0);
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { stratlab_model_to_json(m.0, &mut s) }, StratlabStatus::Ok);
    let mut back = ptr::null_mut();
    assert_eq!(unsafe { stratlab_model_from_json(s, &mut back) }, StratlabStatus::Ok);
    unsafe { stratlab_string_free(s) };
    let back = Handle(back);
    let mut dim = 0;
    assert_eq!(unsafe { stratlab_model_dim(back.0, &mut dim) }, StratlabStatus::Ok);
    assert_eq!(dim, 2);
}

#[test]
fn apex_ball_volume() {
    let m = cone(PI);
    let c = cstr("apex");
    let (mut v, mut se) = (0.0, 0.0);
    assert_eq!(unsafe { stratlab_ball_volume(m.0, c.as_ptr(), 0.5, 10_000, 3, &mut v, &mut se) }, StratlabStatus::Ok);
    let oracle = PI / 2.0 * 0.25;
    assert!((v - oracle).abs() <= 3.0 * se + 1e-12, "{v} vs {oracle}");
}

#[test]
fn errors_are_reported_with_codes() {
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { stratlab_model_flat_cone(-1.0, 1.0, &mut m) }, StratlabStatus::Domain);
    assert!(m.is_null());
    assert!(last_error().contains("domain"), "{}", last_error());

    assert_eq!(unsafe { stratlab_model_flat_cone(PI, 1.0, ptr::null_mut()) }, StratlabStatus::NullPointer);
    assert_eq!(last_error(), "out is null");

    let bad = cstr("{\"family\": \"torus\", \"params\": {}}");
    assert_eq!(unsafe { stratlab_model_from_json(bad.as_ptr(), &mut m) }, StratlabStatus::Config);

    let m = cone(PI);
    let pole = cstr("pole");
    let mut d = 0.0;
    assert_eq!(unsafe { stratlab_distance(m.0, pole.as_ptr(), pole.as_ptr(), &mut d) }, StratlabStatus::Config);
    let invalid = [0xffu8, 0];
    assert_eq!(
        unsafe { stratlab_distance(m.0, invalid.as_ptr().cast(), pole.as_ptr(), &mut d) },
        StratlabStatus::InvalidUtf8
    );
    unsafe { stratlab_model_free(ptr::null_mut()) };
    unsafe { stratlab_string_free(ptr::null_mut()) };
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(stratlab_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_entry_point() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/stratlab.h")).unwrap();
    for name in [
        "stratlab_last_error",
        "stratlab_version",
        "stratlab_model_from_json",
        "stratlab_model_flat_cone",
        "stratlab_model_spherical_suspension",
        "stratlab_model_free",
        "stratlab_model_dim",
        "stratlab_model_to_json",
        "stratlab_distance",
        "stratlab_classify",
        "stratlab_classify_json",
        "stratlab_ball_volume",
        "stratlab_string_free",
        "typedef struct StratlabModel StratlabModel",
        "STRATLAB_STATUS_NUMERICAL = 9",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
    // compile the header as C when a compiler is around
    if let Ok(out) = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c"])
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/include/stratlab.h"))
        .output()
    {
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
}
