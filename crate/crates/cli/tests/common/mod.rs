#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use seld_core::dataset_io::{write_foa_wav, write_label_csv, WavEncoding};
use seld_core::synth::demo_scene;

pub fn seld(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_seld"))
        .args(args)
        .output()
        .expect("seld binary runs")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        stdout(out),
        stderr(out)
    );
}

pub fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 temp path")
}

/// Writes the bundled demo scene as `demo.wav` + `demo.csv` and a manifest
/// listing it. Returns (manifest, wav, labels).
pub fn write_demo(dir: &Path) -> (PathBuf, PathBuf, PathBuf) {
    let scene = demo_scene();
    let wav = dir.join("demo.wav");
    let csv = dir.join("demo.csv");
    write_foa_wav(&scene.clip, &wav, WavEncoding::Float32).unwrap();
    write_label_csv(&scene.events, &csv).unwrap();
    let manifest = dir.join("manifest.txt");
    std::fs::write(&manifest, "demo.wav,demo.csv,test\n").unwrap();
    (manifest, wav, csv)
}
