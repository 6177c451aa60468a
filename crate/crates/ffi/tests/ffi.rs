use std::ffi::{CStr, CString};
use std::ptr;

use ivf_rabitq_ffi::*;

fn data(rows: usize, dims: usize) -> Vec<f32> {
    (0..rows * dims)
        .map(|i| {
            let mut z = (i as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
            z ^= z >> 31;
            (z >> 40) as f32 / (1u64 << 24) as f32 * 10.0 - 5.0
        })
        .collect()
}

fn last_error() -> String {
    let p = ivrq_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn build(rows: usize, dims: usize) -> *mut IvrqIndex {
    let x = data(rows, dims);
    let mut p = ivrq_build_params_default();
    p.n_clusters = 8;
    p.bits = 5;
    let mut idx = ptr::null_mut();
    let st = unsafe { ivrq_index_build(x.as_ptr(), rows, dims, &p, &mut idx) };
    assert_eq!(st, IvrqStatus::Ok);
    assert!(ivrq_last_error_message().is_null());
    idx
}

#[test]
fn build_search_and_accessors() {
    let (rows, dims) = (400, 12);
    let idx = build(rows, dims);
    unsafe {
        assert_eq!(ivrq_index_dims(idx), dims);
        assert_eq!(ivrq_index_len(idx), rows);
        assert_eq!(ivrq_index_bits(idx), 5);
        assert_eq!(ivrq_index_n_clusters(idx), 8);
    }
    let x = data(rows, dims);
    let mut sp = ivrq_search_params_default();
    sp.k = 3;
    sp.n_probe = 8;
    for mode in [IvrqIpMode::Lut, IvrqIpMode::Bitwise] {
        sp.ip_mode = mode;
        let mut ids = vec![0i64; 2 * sp.k];
        let mut dists = vec![0f32; 2 * sp.k];
        let st = unsafe { ivrq_index_search(idx, x.as_ptr(), 2, dims, &sp, ids.as_mut_ptr(), dists.as_mut_ptr()) };
        assert_eq!(st, IvrqStatus::Ok);
        assert_eq!(ids[0], 0);
        assert_eq!(ids[3], 1);
        assert!(dists[..3].windows(2).all(|w| w[0] <= w[1]));
    }
    unsafe { ivrq_index_free(idx) };
}

#[test]
fn short_results_are_padded() {
    let idx = build(20, 4);
    let mut sp = ivrq_search_params_default();
    sp.k = 30;
    sp.n_probe = 8;
    let q = data(1, 4);
    let mut ids = vec![0i64; 30];
    let mut dists = vec![0f32; 30];
    let st = unsafe { ivrq_index_search(idx, q.as_ptr(), 1, 4, &sp, ids.as_mut_ptr(), dists.as_mut_ptr()) };
    assert_eq!(st, IvrqStatus::Ok);
    assert!(ids[..20].iter().all(|&i| (0..20).contains(&i)));
    assert!(ids[20..].iter().all(|&i| i == -1));
    assert!(dists[20..].iter().all(|d| d.is_infinite()));
    unsafe { ivrq_index_free(idx) };
}

#[test]
fn save_and_load() {
    let idx = build(300, 8);
    let path = std::env::temp_dir().join(format!("ivrq-ffi-{}.bin", std::process::id()));
    let c_path = CString::new(path.to_str().unwrap()).unwrap();
    let mut back = ptr::null_mut();
    unsafe {
        assert_eq!(ivrq_index_save(idx, c_path.as_ptr()), IvrqStatus::Ok);
        assert_eq!(ivrq_index_load(c_path.as_ptr(), &mut back), IvrqStatus::Ok);
        assert_eq!(ivrq_index_len(back), 300);
        assert_eq!(ivrq_index_dims(back), 8);
        ivrq_index_free(back);
        ivrq_index_free(idx);
    }
    std::fs::remove_file(path).unwrap();
}

#[test]
fn errors_are_reported() {
    let mut idx = ptr::null_mut();
    unsafe {
        assert_eq!(
            ivrq_index_build(ptr::null(), 1, 1, ptr::null(), &mut idx),
            IvrqStatus::NullPointer
        );
        assert!(last_error().contains("data"));

        let x = data(10, 4);
        let mut p = ivrq_build_params_default();
        p.bits = 9;
        assert_eq!(ivrq_index_build(x.as_ptr(), 10, 4, &p, &mut idx), IvrqStatus::InvalidArgument);
        assert!(idx.is_null());

        let missing = CString::new("/nonexistent/ivrq.bin").unwrap();
        assert_eq!(ivrq_index_load(missing.as_ptr(), &mut idx), IvrqStatus::Io);
        assert!(!last_error().is_empty());

        let path = std::env::temp_dir().join(format!("ivrq-ffi-bad-{}.bin", std::process::id()));
        std::fs::write(&path, b"not an index at all, not even close").unwrap();
        let c_path = CString::new(path.to_str().unwrap()).unwrap();
        assert_eq!(ivrq_index_load(c_path.as_ptr(), &mut idx), IvrqStatus::Format);
        std::fs::remove_file(path).unwrap();

        assert_eq!(ivrq_index_dims(ptr::null()), 0);
        ivrq_index_free(ptr::null_mut());
    }

    let idx = build(50, 4);
    let sp = ivrq_search_params_default();
    let q = data(1, 5);
    let mut ids = vec![0i64; sp.k];
    let mut dists = vec![0f32; sp.k];
    unsafe {
        let st = ivrq_index_search(idx, q.as_ptr(), 1, 5, &sp, ids.as_mut_ptr(), dists.as_mut_ptr());
        assert_eq!(st, IvrqStatus::DimensionMismatch);
        let st = ivrq_index_search(idx, q.as_ptr(), 1, 4, ptr::null(), ids.as_mut_ptr(), dists.as_mut_ptr());
        assert_eq!(st, IvrqStatus::NullPointer);
        ivrq_index_free(idx);
    }
}

#[test]
fn header_declares_every_function() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/ivf_rabitq.h")).unwrap();
    for name in [
        "ivrq_build_params_default",
        "ivrq_search_params_default",
        "ivrq_index_build",
        "ivrq_index_load",
        "ivrq_index_save",
        "ivrq_index_free",
        "ivrq_index_dims",
        "ivrq_index_len",
        "ivrq_index_bits",
        "ivrq_index_n_clusters",
        "ivrq_index_search",
        "ivrq_last_error_message",
        "typedef struct IvrqIndex IvrqIndex;",
    ] {
        assert!(header.contains(name), "{name}");
    }
}

#[test]
fn header_compiles_as_c() {
    let dir = std::env::temp_dir().join(format!("ivrq-ffi-c-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let src = dir.join("use.c");
    std::fs::write(
        &src,
        r#"#include "ivf_rabitq.h"
int main(void) {
    IvrqBuildParams bp = ivrq_build_params_default();
    IvrqSearchParams sp = ivrq_search_params_default();
    IvrqIndex *idx = NULL;
    float x[8] = {0};
    IvrqStatus st = ivrq_index_build(x, 2, 4, &bp, &idx);
    sp.ip_mode = IVRQ_IP_MODE_BITWISE;
    ivrq_index_free(idx);
    return st == IVRQ_STATUS_OK ? 0 : (int)sp.k;
}
"#,
    )
    .unwrap();
    let out = std::process::Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-c", "-o"])
        .arg(dir.join("use.o"))
        .arg("-I")
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/include"))
        .arg(&src)
        .output()
        .expect("a C compiler named cc");
    std::fs::remove_dir_all(&dir).unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
