use std::ffi::{CStr, CString};
use std::path::Path;
use std::ptr;

use lutlm::encoder::{count_parameters, init_params, ModelConfig, Variant};
use lutlm::latent::latent_distribution;
use lutlm::model::{extract_features, text_example};
use lutlm::planted;
use lutlm::preprocess::MAX_LEN;
use lutlm::trainer::{model_config_text, save_checkpoint, Checkpoint};
use lutlm_ffi::*;

fn write_model(dir: &Path, variant: Variant) -> (CString, Checkpoint) {
    let vocab = planted::vocabulary();
    let mut config = ModelConfig::desk(variant, vocab.len());
    config.hidden = 16;
    config.ffn = 32;
    config.heads = 2;
    let mut params = init_params::<f32>(&config, 9).unwrap();
    // make the category distribution non-uniform
    for (i, x) in params.get_mut("latent.bias_matrix").into_iter().flat_map(|t| t.data_mut()).enumerate() {
        *x += (i % 7) as f32 * 0.1;
    }
    let ck = Checkpoint {
        config,
        vocab,
        step: 3,
        params,
    };
    let path = dir.join(format!("{}.lutlm", variant.name()));
    save_checkpoint(&path, &ck).unwrap();
    (CString::new(path.to_str().unwrap()).unwrap(), ck)
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(lutlm_last_error()) }.to_string_lossy().into_owned()
}

fn open(path: &CString) -> *mut LutlmModel {
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { lutlm_model_open(path.as_ptr(), &mut m) }, LutlmStatus::Ok);
    assert!(!m.is_null());
    m
}

#[test]
fn features_match_library() {
    let dir = tempfile::tempdir().unwrap();
    let (path, ck) = write_model(dir.path(), Variant::Latent);
    let m = open(&path);
    let (mut v, mut h, mut l) = (0usize, 0usize, 0usize);
    assert_eq!(unsafe { lutlm_model_dims(m, &mut v, &mut h, &mut l) }, LutlmStatus::Ok);
    assert_eq!((v, h, l), (ck.vocab.len(), 16, 2));
    assert_eq!(unsafe { lutlm_model_checksum_ok(m) }, 1);

    let text = "mike was born in boston . mike loves tacos and soda !";
    let mut dist = vec![0f32; l];
    let mut cls = vec![0f32; h];
    let c_text = CString::new(text).unwrap();
    let status = unsafe {
        lutlm_model_features(m, c_text.as_ptr(), dist.as_mut_ptr(), l, cls.as_mut_ptr(), h)
    };
    assert_eq!(status, LutlmStatus::Ok, "{}", last_error());

    let ex = text_example(text, &ck.vocab, MAX_LEN).unwrap();
    let expected = extract_features(&ck.params, &ck.config, &ex).unwrap();
    assert_eq!(cls, expected.classification);
    assert_eq!(dist, expected.distribution.unwrap());
    assert!((dist.iter().sum::<f32>() - 1.0).abs() < 1e-5);

    let ids: Vec<u32> = ex.unmasked_ids_full.clone();
    let mut out = vec![0f32; 2];
    let status = unsafe { lutlm_latent_distribution(m, ids.as_ptr(), ids.len(), out.as_mut_ptr(), 2) };
    assert_eq!(status, LutlmStatus::Ok);
    let b = ck.params.require("latent.bias_matrix").unwrap();
    assert_eq!(out, latent_distribution(b, &ids).unwrap());

    // empty multiset gives the uniform distribution
    let status = unsafe { lutlm_latent_distribution(m, ptr::null(), 0, out.as_mut_ptr(), 2) };
    assert_eq!(status, LutlmStatus::Ok);
    assert_eq!(out, vec![0.5, 0.5]);
    unsafe { lutlm_model_free(m) };
}

#[test]
fn argument_errors() {
    let dir = tempfile::tempdir().unwrap();
    let (path, _) = write_model(dir.path(), Variant::Latent);
    let m = open(&path);
    let text = CString::new("go lakers !").unwrap();
    let mut small = [0f32; 1];
    let mut cls = [0f32; 16];
    let status = unsafe {
        lutlm_model_features(m, text.as_ptr(), small.as_mut_ptr(), 1, cls.as_mut_ptr(), 16)
    };
    assert_eq!(status, LutlmStatus::BufferTooSmall);
    assert!(last_error().contains("needs 2"));

    let status = unsafe { lutlm_model_features(m, ptr::null(), small.as_mut_ptr(), 2, cls.as_mut_ptr(), 16) };
    assert_eq!(status, LutlmStatus::NullArgument);

    let bad = [0xffu8, 0xfe, 0];
    let status = unsafe {
        lutlm_model_features(m, bad.as_ptr().cast(), small.as_mut_ptr(), 2, cls.as_mut_ptr(), 16)
    };
    assert_eq!(status, LutlmStatus::InvalidUtf8);

    let ids = [u32::MAX];
    let mut out = [0f32; 2];
    let status = unsafe { lutlm_latent_distribution(m, ids.as_ptr(), 1, out.as_mut_ptr(), 2) };
    assert_eq!(status, LutlmStatus::InvalidInput);
    assert!(last_error().contains("outside vocabulary"));

    assert_eq!(
        unsafe { lutlm_model_dims(ptr::null(), ptr::null_mut(), ptr::null_mut(), ptr::null_mut()) },
        LutlmStatus::NullArgument
    );
    unsafe { lutlm_model_free(m) };
    unsafe { lutlm_model_free(ptr::null_mut()) };
}

#[test]
fn base_model_has_no_distribution() {
    let dir = tempfile::tempdir().unwrap();
    let (path, _) = write_model(dir.path(), Variant::Base);
    let m = open(&path);
    let text = CString::new("go lakers !").unwrap();
    let mut cls = [0f32; 16];
    let status = unsafe { lutlm_model_features(m, text.as_ptr(), ptr::null_mut(), 0, cls.as_mut_ptr(), 16) };
    assert_eq!(status, LutlmStatus::Ok);
    let mut out = [0f32; 2];
    let status = unsafe { lutlm_latent_distribution(m, ptr::null(), 0, out.as_mut_ptr(), 2) };
    assert_eq!(status, LutlmStatus::InvalidInput);
    unsafe { lutlm_model_free(m) };
}

#[test]
fn open_failures() {
    let dir = tempfile::tempdir().unwrap();
    let missing = CString::new(dir.path().join("none.lutlm").to_str().unwrap()).unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { lutlm_model_open(missing.as_ptr(), &mut m) }, LutlmStatus::Io);
    assert!(m.is_null());

    let junk = dir.path().join("junk.lutlm");
    std::fs::write(&junk, b"XXXXXX and some more bytes").unwrap();
    let junk = CString::new(junk.to_str().unwrap()).unwrap();
    assert_eq!(unsafe { lutlm_model_open(junk.as_ptr(), &mut m) }, LutlmStatus::Format);
    assert!(last_error().contains("not a checkpoint"));

    assert_eq!(unsafe { lutlm_model_open(junk.as_ptr(), ptr::null_mut()) }, LutlmStatus::NullArgument);
}

#[test]
fn corrupted_payload_still_opens() {
    let dir = tempfile::tempdir().unwrap();
    let (path, _) = write_model(dir.path(), Variant::Latent);
    let p = Path::new(path.to_str().unwrap());
    let mut bytes = std::fs::read(p).unwrap();
    let at = bytes.len() - 40;
    bytes[at] ^= 0x01;
    std::fs::write(p, bytes).unwrap();
    let m = open(&path);
    assert_eq!(unsafe { lutlm_model_checksum_ok(m) }, 0);
    unsafe { lutlm_model_free(m) };
}

#[test]
fn parameter_counts() {
    for v in Variant::ALL {
        let config = ModelConfig::paper(v);
        let text = CString::new(model_config_text(&config)).unwrap();
        let (mut reported, mut total) = (0u64, 0u64);
        let status = unsafe { lutlm_count_parameters(text.as_ptr(), &mut reported, &mut total) };
        assert_eq!(status, LutlmStatus::Ok, "{}", last_error());
        let c = count_parameters(&config);
        assert_eq!((reported, total), (c.reported as u64, c.total as u64));
    }
    let text = CString::new("variant = latent\nhidden = 64\n").unwrap();
    let status = unsafe { lutlm_count_parameters(text.as_ptr(), ptr::null_mut(), ptr::null_mut()) };
    assert_eq!(status, LutlmStatus::InvalidInput);
    let text = CString::new("colour = blue\n").unwrap();
    let status = unsafe { lutlm_count_parameters(text.as_ptr(), ptr::null_mut(), ptr::null_mut()) };
    assert_eq!(status, LutlmStatus::InvalidInput);
    assert!(last_error().contains("unknown key"));
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(lutlm_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/lutlm.h")).unwrap();
    for f in [
        "lutlm_last_error",
        "lutlm_version",
        "lutlm_model_open",
        "lutlm_model_free",
        "lutlm_model_dims",
        "lutlm_model_checksum_ok",
        "lutlm_model_features",
        "lutlm_latent_distribution",
        "lutlm_count_parameters",
        "LUTLM_STATUS_BUFFER_TOO_SMALL",
    ] {
        assert!(header.contains(f), "{f} missing from header");
    }
}

#[test]
fn header_compiles_as_c() {
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("probe.c");
    std::fs::write(
        &src,
        "#include \"lutlm.h\"\nint main(void) { LutlmModel *m = 0; return (int)lutlm_model_dims(m, 0, 0, 0); }\n",
    )
    .unwrap();
    let status = match std::process::Command::new("cc")
        .arg("-fsyntax-only")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(&include)
        .arg(&src)
        .status()
    {
        Ok(s) => s,
        Err(_) => {
            eprintln!("no C compiler; skipped");
            return;
        }
    };
    assert!(status.success());
}
