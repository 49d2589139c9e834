//! The C surface against the Rust API it wraps, plus a real C program
//! compiled against the generated header.

use std::ffi::CString;
use std::path::{Path, PathBuf};
use std::process::Command;

use rxnemb::chem::parse_reaction;
use rxnemb::encoder::{write_checkpoint, EncoderConfig, InferenceSession, ModelCheckpoint};
use rxnemb_ffi::*;

fn small_model(dir: &Path) -> (PathBuf, ModelCheckpoint) {
    let cfg = EncoderConfig {
        gnn_hidden: 8,
        gnn_layers: 2,
        d_model: 8,
        tf_layers: 1,
        tf_heads: 2,
        ffn_dim: 16,
        emb_dim: 12,
        ..EncoderConfig::default()
    };
    let model = ModelCheckpoint::init(cfg, 5).unwrap();
    let path = dir.join("m.ckpt");
    write_checkpoint(std::fs::File::create(&path).unwrap(), &model).unwrap();
    (path, model)
}

#[test]
fn handle_lifecycle_matches_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let (path, model) = small_model(dir.path());
    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    let mut h: *mut RxnembModel = std::ptr::null_mut();
    assert_eq!(unsafe { rxnemb_model_load(cpath.as_ptr(), &mut h) }, RxnembStatus::Ok);
    assert!(!h.is_null());
    assert_eq!(unsafe { rxnemb_model_emb_dim(h) }, 12);

    let smiles = "CC(=O)O.OCC>>CC(=O)OCC.O";
    let rxn = parse_reaction(smiles, "x").unwrap();
    let mut session = InferenceSession::new(&model);
    let want = session.embedding(&rxn).unwrap().values;
    let want_p = session.probability(&rxn).unwrap();

    let cs = CString::new(smiles).unwrap();
    let mut got = vec![0f32; 12];
    assert_eq!(unsafe { rxnemb_embed(h, cs.as_ptr(), got.as_mut_ptr(), got.len()) }, RxnembStatus::Ok);
    assert_eq!(got, want);
    let mut p = -1.0;
    assert_eq!(unsafe { rxnemb_classify(h, cs.as_ptr(), &mut p) }, RxnembStatus::Ok);
    assert_eq!(p, want_p);

    let mut short = vec![0f32; 11];
    assert_eq!(unsafe { rxnemb_embed(h, cs.as_ptr(), short.as_mut_ptr(), 11) }, RxnembStatus::BufferTooSmall);
    assert!(short.iter().all(|&v| v == 0.0));
    let bad = CString::new("C(>>C").unwrap();
    assert_eq!(unsafe { rxnemb_classify(h, bad.as_ptr(), &mut p) }, RxnembStatus::BadSmiles);
    assert_eq!(unsafe { rxnemb_embed(std::ptr::null(), cs.as_ptr(), got.as_mut_ptr(), 12) }, RxnembStatus::NullPointer);
    unsafe { rxnemb_model_free(h) };

    std::fs::write(dir.path().join("junk.ckpt"), b"not a model").unwrap();
    let junk = CString::new(dir.path().join("junk.ckpt").to_str().unwrap()).unwrap();
    let mut h2: *mut RxnembModel = std::ptr::null_mut();
    assert_eq!(unsafe { rxnemb_model_load(junk.as_ptr(), &mut h2) }, RxnembStatus::BadModel);
    assert!(h2.is_null());
}

const C_PROGRAM: &str = r#"
#include <stdio.h>
#include <string.h>
#include "rxnemb.h"

int main(int argc, char **argv) {
    RxnembModel *m = NULL;
    if (rxnemb_model_load(argv[1], &m) != RXNEMB_STATUS_OK) { puts(rxnemb_last_error()); return 1; }
    size_t dim = rxnemb_model_emb_dim(m);
    float emb[64];
    if (dim > 64 || rxnemb_embed(m, "CCO>>CC=O", emb, dim) != RXNEMB_STATUS_OK) return 2;
    double p = -1.0;
    if (rxnemb_classify(m, "CCO>>CC=O", &p) != RXNEMB_STATUS_OK || p < 0.0 || p > 1.0) return 3;
    if (rxnemb_classify(m, "C1CC>>C", &p) != RXNEMB_STATUS_BAD_SMILES) return 4;
    if (rxnemb_last_error() == NULL) return 5;
    size_t need = 0;
    char buf[128];
    if (rxnemb_write_smiles("OCC>>C=CO", buf, sizeof buf, &need) != RXNEMB_STATUS_OK) return 6;
    rxnemb_model_free(m);
    printf("%s %zu %s %.3f\n", rxnemb_version(), dim, buf, emb[0]);
    return 0;
}
"#;

/// Compiles and runs the program above; skipped only when no C compiler is
/// installed.
#[test]
fn c_program_links_against_the_header() {
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let header_dir = manifest.join("include");
    assert!(header_dir.join("rxnemb.h").exists(), "header is generated by the build script");
    let profile_dir = Path::new(env!("CARGO_TARGET_TMPDIR")).parent().unwrap().join("debug");
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    if Command::new(&cc).arg("--version").output().is_err() {
        eprintln!("skipping: no C compiler");
        return;
    }
    let lib = [profile_dir.join("deps/librxnemb_ffi.a"), profile_dir.join("librxnemb_ffi.a")]
        .into_iter()
        .find(|p| p.exists())
        .expect("static library is built alongside the tests");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let exe = dir.path().join("main");
    let status = Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Werror", "-o"])
        .arg(&exe)
        .arg(&src)
        .arg("-I")
        .arg(&header_dir)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .status()
        .unwrap();
    assert!(status.success(), "C compile failed");
    let (model_path, _) = small_model(dir.path());
    let out = Command::new(&exe).arg(&model_path).output().unwrap();
    assert!(out.status.success(), "C program exited with {:?}", out.status.code());
    let line = String::from_utf8(out.stdout).unwrap();
    assert!(line.starts_with(env!("CARGO_PKG_VERSION")), "{line}");
    assert!(line.contains(" 12 "), "{line}");
}
