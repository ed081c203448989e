use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use uxnet::wav::{read_wav, write_wav, WavFormat};
use uxnet::Checkpoint;
use uxnet_core::model::{Model, ModelConfig};

fn uxnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uxnet")).args(args).output().unwrap()
}

fn tiny_checkpoint(dir: &Path, in_channels: usize) -> String {
    let cfg = ModelConfig {
        in_channels,
        ..ModelConfig::preset("tiny").unwrap()
    };
    let path = dir.join("tiny.uxnt");
    Checkpoint::from_model(&Model::new(cfg, 5).unwrap()).save(&path).unwrap();
    path.to_str().unwrap().to_owned()
}

fn tone(len: usize) -> Vec<f32> {
    (0..len).map(|i| (0.3 * (i as f32 * 0.07).sin()) + 0.2 * (i as f32 * 0.91).cos()).collect()
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(uxnet(&[]).status.code(), Some(2));
    assert_eq!(uxnet(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(uxnet(&["bench", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(uxnet(&["--help"]).status.code(), Some(0));
}

#[test]
fn runtime_errors_exit_with_one() {
    let out = uxnet(&["inspect", "--model", "/nonexistent/model.uxnt"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error:"));
    assert_eq!(uxnet(&["bench", "--config", "nope", "--no-timing"]).status.code(), Some(1));
}

#[test]
fn separate_writes_one_file_per_source() {
    let dir = tempfile::tempdir().unwrap();
    let model = tiny_checkpoint(dir.path(), 1);
    let input = dir.path().join("mix.wav");
    write_wav(&input, &[tone(1237)], 8000, WavFormat::Pcm16).unwrap();
    let out_dir = dir.path().join("out");
    let out = uxnet(&[
        "separate",
        "--model",
        &model,
        "--in",
        input.to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut files: Vec<_> = std::fs::read_dir(&out_dir).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    assert_eq!(files.len(), 2);
    for f in files {
        assert_eq!(read_wav(&f, Some(8000)).unwrap().len(), 1237);
    }
}

#[test]
fn separate_rejects_wrong_rate() {
    let dir = tempfile::tempdir().unwrap();
    let model = tiny_checkpoint(dir.path(), 1);
    let input = dir.path().join("mix.wav");
    write_wav(&input, &[tone(100)], 16000, WavFormat::Pcm16).unwrap();
    let out = uxnet(&["separate", "--model", &model, "--in", input.to_str().unwrap(), "--out-dir", "x"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("16000"));
}

#[test]
fn stream_matches_separate() {
    let dir = tempfile::tempdir().unwrap();
    let model_path = tiny_checkpoint(dir.path(), 2);
    let len = 1001;
    let mix = vec![tone(len), tone(len).iter().map(|v| -0.5 * v).collect()];
    let mut child = Command::new(env!("CARGO_BIN_EXE_uxnet"))
        .args(["stream", "--model", &model_path])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut bytes = Vec::new();
    for t in 0..len {
        for ch in &mix {
            bytes.extend_from_slice(&ch[t].to_le_bytes());
        }
    }
    child.stdin.take().unwrap().write_all(&bytes).unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    let streamed: Vec<f32> = out
        .stdout
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    assert_eq!(streamed.len(), 2 * len);
    let model = Checkpoint::load(Path::new(&model_path)).unwrap().into_model().unwrap();
    let offline = model.separate_waveform(&mix).unwrap();
    for t in 0..len {
        for c in 0..2 {
            assert!((streamed[2 * t + c] - offline[c][t]).abs() <= 1e-5, "sample {t} source {c}");
        }
    }
}

#[test]
fn bench_reports_table_fields() {
    let out = uxnet(&["bench", "--config", "ulnet256", "--no-timing"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("Parameters (M): 0.80"), "{text}");
    assert!(text.contains("FFPF (M):"));
    assert!(text.contains("blocks.0:"));
    let json = uxnet(&["bench", "--config", "tiny", "--json", "--seconds", "0.05"]);
    let text = String::from_utf8(json.stdout).unwrap();
    for line in text.lines() {
        serde_json::from_str::<serde_json::Value>(line).unwrap();
    }
    assert!(text.contains("\"rtf\""));
}

#[test]
fn inspect_lists_tensors() {
    let dir = tempfile::tempdir().unwrap();
    let model = tiny_checkpoint(dir.path(), 1);
    let out = uxnet(&["inspect", "--model", &model]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("latent = 32"));
    assert!(text.contains("encoder.weight: [16, 32]"), "{text}");
}

#[test]
fn synth_then_train_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let out = uxnet(&[
        "synth",
        "--out",
        data.to_str().unwrap(),
        "--train",
        "4",
        "--val",
        "2",
        "--test",
        "2",
        "--duration",
        "0.25",
        "--anechoic",
        "--speakers",
        "4",
        "--per-speaker",
        "2",
        "--seed",
        "3",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read_to_string(data.join("manifest.jsonl")).unwrap().lines().count(), 8);
    let mut checkpoints = Vec::new();
    for run in ["a", "b"] {
        let run_dir = dir.path().join(run);
        let out = uxnet(&[
            "train",
            "--preset",
            "tiny",
            "--epochs",
            "2",
            "--seed",
            "7",
            "--set",
            "batch_size=2",
            "--data",
            data.to_str().unwrap(),
            "--out",
            run_dir.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        assert!(String::from_utf8_lossy(&out.stdout).contains("test_si_snri"));
        assert_eq!(std::fs::read_to_string(run_dir.join("train.jsonl")).unwrap().lines().count(), 2);
        checkpoints.push(std::fs::read(run_dir.join("best.uxnt")).unwrap());
    }
    assert_eq!(checkpoints[0], checkpoints[1]);
}

#[test]
fn train_rejects_unknown_settings() {
    let out = uxnet(&["train", "--set", "wibble=1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("wibble"));
}
