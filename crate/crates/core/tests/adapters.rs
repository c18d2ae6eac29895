//! The external-process adapter protocol, exercised against small
//! python stubs. Skipped when no python3 is available.

use std::io::Write;
use std::process::Command;

use ritc_core::encoders::{EncoderPair, ProcessEncoder};
use ritc_core::{ProcessVqa, RasterImage, VqaBackend};

fn python3_available() -> bool {
    Command::new("python3").arg("--version").output().map(|o| o.status.success()).unwrap_or(false)
}

fn write_script(dir: &std::path::Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    let mut f = std::fs::File::create(&path).unwrap();
    f.write_all(body.as_bytes()).unwrap();
    format!("python3 {}", path.display())
}

#[test]
fn vqa_adapter_round_trips_questions() {
    if !python3_available() {
        eprintln!("skipping: python3 not available");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let cmd = write_script(
        dir.path(),
        "vqa_stub.py",
        r#"import sys, json
for line in sys.stdin:
    req = json.loads(line)
    words = req["question"].rstrip("?").split()
    assert req["image_png_base64"], "image payload expected"
    print(json.dumps({"answer": "near the " + words[-1]}), flush=True)
"#,
    );
    let backend = ProcessVqa::spawn(&cmd).unwrap();
    assert!(backend.id().starts_with("external:"));
    let img = RasterImage::filled(6, 6, [0.2, 0.4, 0.6]);
    let a1 = backend.answer(&img, "What is around the cat?").unwrap();
    assert_eq!(a1, "near the cat");
    let a2 = backend.answer(&img, "What is around the cat?").unwrap();
    assert_eq!(a1, a2);
    assert_eq!(backend.answer(&img, "What scene is the dog in?").unwrap(), "near the in");
}

#[test]
fn encoder_adapter_handshakes_and_embeds() {
    if !python3_available() {
        eprintln!("skipping: python3 not available");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let cmd = write_script(
        dir.path(),
        "encoder_stub.py",
        r#"import sys, json, hashlib
print(json.dumps({"dim": 4}), flush=True)
for line in sys.stdin:
    req = json.loads(line)
    if "text" in req:
        h = hashlib.sha256(req["text"].encode()).digest()
        emb = [b / 255.0 for b in h[:4]]
    else:
        emb = [1.0, 0.5, 0.25, 0.125]
    print(json.dumps({"embedding": emb}), flush=True)
"#,
    );
    let encoder = ProcessEncoder::spawn(&cmd).unwrap();
    assert_eq!(encoder.dim(), 4);
    let t1 = encoder.encode_text("a photo of train").unwrap();
    let t2 = encoder.encode_text("a photo of train").unwrap();
    assert_eq!(t1, t2);
    assert_eq!(t1.len(), 4);
    let img = RasterImage::filled(6, 6, [0.9, 0.1, 0.1]);
    let v = encoder.encode_image(&img).unwrap();
    assert_eq!(v, vec![1.0, 0.5, 0.25, 0.125]);
}

#[test]
fn encoder_adapter_rejects_wrong_dimension() {
    if !python3_available() {
        eprintln!("skipping: python3 not available");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let cmd = write_script(
        dir.path(),
        "bad_encoder.py",
        r#"import sys, json
print(json.dumps({"dim": 3}), flush=True)
for line in sys.stdin:
    print(json.dumps({"embedding": [1.0, 2.0]}), flush=True)
"#,
    );
    let encoder = ProcessEncoder::spawn(&cmd).unwrap();
    assert!(encoder.encode_text("x").is_err());
}
