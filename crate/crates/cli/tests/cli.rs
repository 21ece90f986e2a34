use std::path::Path;
use std::process::{Command, Output};

use rand::SeedableRng;
use rand_distr::{Distribution, Gamma, StandardNormal};

fn mbrir(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mbrir"))
        .args(args)
        .env_remove("MBRIR_WORKERS")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_wav(path: &Path, samples: &[f32], fs: u32) {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: fs,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut w = hound::WavWriter::create(path, spec).unwrap();
    for s in samples {
        w.write_sample(*s).unwrap();
    }
    w.finalize().unwrap();
}

#[test]
fn unknown_verb_is_a_usage_error() {
    let o = mbrir(&["frobnicate"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    assert_eq!(code(&mbrir(&[])), 2);
    assert_eq!(code(&mbrir(&["render", "--bogus"])), 2);
}

#[test]
fn help_lists_every_verb() {
    let o = mbrir(&["--help"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    for verb in ["sample-rooms", "render", "validate", "mix", "fit-gamma"] {
        assert!(text.contains(verb), "{verb}");
    }
}

#[test]
fn fit_gamma_recovers_synthetic_parameters() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("t60s.csv");
    let truth = [(1.5, 0.3), (2.0, 0.25), (3.0, 0.15), (2.5, 0.2), (4.0, 0.1), (5.0, 0.07)];
    let centers = [125, 250, 500, 1000, 2000, 4000];
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let mut text = String::from("band,t60_s\n");
    for (c, (k, s)) in centers.iter().zip(truth) {
        let g = Gamma::new(k, s).unwrap();
        for _ in 0..20_000 {
            let v: f64 = g.sample(&mut rng);
            text.push_str(&format!("{c},{v}\n"));
        }
    }
    std::fs::write(&csv, text).unwrap();
    let o = mbrir(&["fit-gamma", "--in", p(&csv)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = String::from_utf8_lossy(&o.stdout);
    let rows: Vec<Vec<f64>> = out
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|f| f.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 6);
    for (row, (k, s)) in rows.iter().zip(truth) {
        assert!((row[1] / k - 1.0).abs() < 0.05, "{row:?}");
        assert!((row[2] / s - 1.0).abs() < 0.05, "{row:?}");
    }
}

#[test]
fn fit_gamma_rejects_thin_bands() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("t.csv");
    std::fs::write(&csv, "1,0.4\n2,0.5\n").unwrap();
    let o = mbrir(&["fit-gamma", "--in", p(&csv)]);
    assert_eq!(code(&o), 1);
}

#[test]
fn sample_rooms_is_idempotent_and_honors_config() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a.jsonl");
    let b = tmp.path().join("b.jsonl");
    let c = tmp.path().join("c.jsonl");
    let toml = tmp.path().join("params.toml");
    std::fs::write(&toml, "t60_bounds_s = [0.2, 0.3]\n").unwrap();
    assert_eq!(code(&mbrir(&["--seed", "4", "sample-rooms", "--count", "20", "--out", p(&a)])), 0);
    assert_eq!(code(&mbrir(&["sample-rooms", "--count", "20", "--out", p(&b), "--seed", "4"])), 0);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(std::fs::read_to_string(&a).unwrap().lines().count(), 20);
    let o = mbrir(&["--seed", "4", "--config", p(&toml), "sample-rooms", "--count", "20", "--out", p(&c)]);
    assert_eq!(code(&o), 0);
    for line in std::fs::read_to_string(&c).unwrap().lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        for t in v["t60_bands_s"].as_array().unwrap() {
            let t = t.as_f64().unwrap();
            assert!((0.2..=0.3).contains(&t), "{t}");
        }
    }
    std::fs::write(&toml, "speed_of_sound = -1\n").unwrap();
    assert_eq!(code(&mbrir(&["--config", p(&toml), "sample-rooms", "--count", "1", "--out", p(&c)])), 2);
}

#[test]
fn render_then_validate_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let configs = tmp.path().join("configs.jsonl");
    let toml = tmp.path().join("params.toml");
    // keep renders short
    std::fs::write(&toml, "t60_bounds_s = [0.1, 0.6]\n").unwrap();
    let out = tmp.path().join("out");
    let report = tmp.path().join("report.jsonl");
    let o = mbrir(&["--seed", "7", "--config", p(&toml), "sample-rooms", "--count", "10", "--variant", "mb", "--out", p(&configs)]);
    assert_eq!(code(&o), 0);
    let o = mbrir(&["--seed", "7", "render", "--configs", p(&configs), "--out", p(&out), "--workers", "2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let manifest = std::fs::read_to_string(out.join("manifest.jsonl")).unwrap();
    assert_eq!(manifest.lines().count(), 10);
    let ids: Vec<String> = manifest
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["id"].as_str().unwrap().to_string())
        .collect();
    let mut sorted = ids.clone();
    sorted.sort();
    assert_eq!(ids, sorted);
    let o = mbrir(&["validate", "--rir", p(&out.join("rirs")), "--report", p(&report)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    assert_eq!(std::fs::read_to_string(&report).unwrap().lines().count(), 10);
    let o = mbrir(&["validate", "--rir", p(&out.join("rirs")), "--band", "3", "--report", p(&report)]);
    assert_eq!(code(&o), 0);
    let first: serde_json::Value =
        serde_json::from_str(std::fs::read_to_string(&report).unwrap().lines().next().unwrap()).unwrap();
    assert_eq!(first["t60_bands_s"].as_array().unwrap().len(), 1);
    assert_eq!(code(&mbrir(&["validate", "--rir", p(&out.join("rirs")), "--band", "9", "--report", p(&report)])), 2);
}

#[test]
fn worker_env_and_variant_override() {
    let tmp = tempfile::tempdir().unwrap();
    let configs = tmp.path().join("configs.jsonl");
    let toml = tmp.path().join("params.toml");
    std::fs::write(&toml, "t60_bounds_s = [0.1, 0.3]\n").unwrap();
    assert_eq!(code(&mbrir(&["--config", p(&toml), "sample-rooms", "--count", "2", "--out", p(&configs)])), 0);
    let out = tmp.path().join("out");
    let o = Command::new(env!("CARGO_BIN_EXE_mbrir"))
        .args(["render", "--configs", p(&configs), "--out", p(&out), "--variant", "sb", "--variant", "mb"])
        .env("MBRIR_WORKERS", "2")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let mut names: Vec<String> = std::fs::read_dir(out.join("rirs"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(names, ["room000000-mb.wav", "room000000-sb.wav", "room000001-mb.wav", "room000001-sb.wav"]);
}

#[test]
fn validate_flags_noise() {
    let tmp = tempfile::tempdir().unwrap();
    let wav = tmp.path().join("noise.wav");
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
    let x: Vec<f32> = (0..48_000)
        .map(|_| {
            let v: f64 = StandardNormal.sample(&mut rng);
            0.1 * v as f32
        })
        .collect();
    write_wav(&wav, &x, 48_000);
    let o = mbrir(&["validate", "--rir", p(&wav), "--report", p(&tmp.path().join("r.jsonl"))]);
    assert_eq!(code(&o), 1);
}

#[test]
fn mix_writes_pairs_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let (speech, noise, rirs) = (tmp.path().join("s"), tmp.path().join("n"), tmp.path().join("r"));
    for d in [&speech, &noise, &rirs] {
        std::fs::create_dir(d).unwrap();
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let mut gauss = |n: usize, rms: f32| -> Vec<f32> {
        (0..n)
            .map(|_| {
                let v: f64 = StandardNormal.sample(&mut rng);
                rms * v as f32
            })
            .collect()
    };
    // 16 kHz speech gets resampled to 48 kHz
    write_wav(&speech.join("a.wav"), &gauss(16_000 * 5, 0.1), 16_000);
    write_wav(&speech.join("b.wav"), &gauss(48_000 * 6, 0.1), 48_000);
    write_wav(&noise.join("n.wav"), &gauss(48_000 * 5, 0.05), 48_000);
    let mut h = vec![0.0f32; 4800];
    for (i, v) in h.iter_mut().enumerate().skip(100) {
        *v = (-(i as f32) / 500.0).exp() * if i % 7 == 0 { 0.3 } else { -0.1 };
    }
    h[100] = 1.0;
    write_wav(&rirs.join("h.wav"), &h, 48_000);
    let out = tmp.path().join("mix");
    let args = [
        "--seed", "5", "mix", "--speech-dir", p(&speech), "--noise-dir", p(&noise), "--rir-dir", p(&rirs), "--count", "3",
        "--model", "b", "--out", p(&out),
    ];
    let o = mbrir(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let lines: Vec<serde_json::Value> = std::fs::read_to_string(out.join("mixtures.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0]["model"], "REVERB_SUM");
    assert_eq!(lines[0]["onset_shift_samples"], 100);
    assert!(lines[0]["speech_path"].as_str().unwrap().ends_with("a.wav"));
    assert!(lines[1]["speech_path"].as_str().unwrap().ends_with("b.wav"));
    for l in &lines {
        let dir = out.join(l["id"].as_str().unwrap());
        let x = hound::WavReader::open(dir.join("x.wav")).unwrap();
        assert_eq!(x.spec().sample_rate, 48_000);
        assert_eq!(x.len(), 192_000);
        assert!(dir.join("y.wav").exists());
    }
    let first = std::fs::read(out.join("mix000000/x.wav")).unwrap();
    let again = tmp.path().join("mix2");
    let mut args2 = args;
    args2[args2.len() - 1] = p(&again);
    assert_eq!(code(&mbrir(&args2)), 0);
    assert_eq!(first, std::fs::read(again.join("mix000000/x.wav")).unwrap());
}
