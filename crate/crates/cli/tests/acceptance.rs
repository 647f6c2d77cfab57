//! End-to-end acceptance checks. Each test prints one `PASS`/`FAIL` line
//! and then asserts, so the summary is visible even when a check fails.

use std::io::{BufRead, BufReader, Write as _};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use splatcap_core::camera::Camera;
use splatcap_core::colmap::{parse_colmap, write_colmap, ColmapFiles, ColmapFormat};
use splatcap_core::gaussian::{Splat, SplatCloud};
use splatcap_core::image::ImageBuffer;
use splatcap_core::optim::{backward, param_slice, param_slice_mut, ParamGroup};
use splatcap_core::ply::{read_splat_ply, write_splat_ply, write_splat_ply_ascii};
use splatcap_core::raster::{render, render_reference};
use splatcap_core::synthetic::{
    bench_scene, random_cloud, random_scene, random_sparse_model, synthetic_scene, write_synthetic_fixture,
};

/// Serializes the checks so wall-clock limits are measured without
/// contention from the others.
static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

/// Writes past the test harness capture so the line lands in the log.
fn verdict(name: &str, pass: bool, detail: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "[acceptance] {name}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
    let _ = out.flush();
}

fn splatcap() -> Command {
    Command::new(env!("CARGO_BIN_EXE_splatcap"))
}

fn run_ok(cmd: &mut Command) -> String {
    let out = cmd.output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn value_of(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(key))
        .unwrap_or_else(|| panic!("no `{key}` in {text}"))
        .trim()
        .parse()
        .unwrap()
}

#[test]
fn oracle_equivalence() {
    let _guard = serial();
    let start = Instant::now();
    let mut worst = 0.0f64;
    for seed in 0..200u64 {
        let count = 1 + (seed as usize * 37) % 64;
        let (cloud, cam) = random_scene(seed, count, 64, 64);
        let bg = [0.1, 0.2, 0.3].map(|v| v * (seed % 4) as f64);
        let (tiled, _) = render(&cloud, &cam, bg).unwrap();
        let reference = render_reference(&cloud, &cam, bg).unwrap();
        worst = worst.max(tiled.max_abs_diff(&reference));
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst <= 1e-5 && secs < 60.0;
    verdict(
        "oracle equivalence",
        pass,
        &format!("200 scenes, max abs diff {worst:.2e} <= 1e-5, {secs:.1} s < 60 s"),
    );
    assert!(pass);
}

fn weighted_sum(cloud: &SplatCloud, cam: &Camera, bg: [f64; 3], weights: &ImageBuffer) -> f64 {
    let img = render_reference(cloud, cam, bg).unwrap();
    img.pixels()
        .iter()
        .zip(weights.pixels())
        .map(|(p, w)| p[0] * w[0] + p[1] * w[1] + p[2] * w[2])
        .sum()
}

#[test]
fn gradient_suite() {
    let _guard = serial();
    const EPS: f64 = 1e-4;
    let start = Instant::now();
    let (mut checked, mut passed) = (0usize, 0usize);
    for seed in 0..50u64 {
        let (cloud, cam) = random_scene(5000 + seed, 1 + (seed as usize % 8), 16, 16);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = ImageBuffer::new(16, 16, [0.0; 3]);
        for px in weights.pixels_mut() {
            *px = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        }
        let bg = [0.2, 0.1, 0.3];
        let analytic = backward(&cloud, &cam, bg, &weights).unwrap().grads;
        for (i, grad) in analytic.iter().enumerate() {
            for group in ParamGroup::ALL {
                for k in 0..param_slice(&cloud.splats[i], group).len() {
                    let shifted = |d: f64| {
                        let mut c = cloud.clone();
                        param_slice_mut(&mut c.splats[i], group)[k] += d;
                        weighted_sum(&c, &cam, bg, &weights)
                    };
                    let fd = (shifted(EPS) - shifted(-EPS)) / (2.0 * EPS);
                    let an = grad.group(group)[k];
                    if an.abs().max(fd.abs()) <= 1e-6 {
                        continue;
                    }
                    checked += 1;
                    if (an - fd).abs() / an.abs().max(fd.abs()) < 1e-3 {
                        passed += 1;
                    }
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let frac = passed as f64 / checked.max(1) as f64;
    let pass = checked > 0 && frac >= 0.99 && secs < 300.0;
    verdict(
        "gradient suite",
        pass,
        &format!(
            "50 scenes, {passed}/{checked} = {:.2}% within 1e-3 (need 99%), {secs:.1} s < 300 s",
            100.0 * frac
        ),
    );
    assert!(pass);
}

fn fixture(dir: &Path, seed: u64) -> PathBuf {
    let root = dir.join(format!("fixture{seed}"));
    write_synthetic_fixture(&synthetic_scene(seed).unwrap(), &root).unwrap();
    root
}

fn train(data: &Path, out: &Path, extra: &[&str]) -> String {
    run_ok(
        splatcap()
            .arg("train")
            .arg(data)
            .arg("--out")
            .arg(out)
            .args(["--seed", "7", "--quiet"])
            .args(extra),
    )
}

#[test]
fn synthetic_recovery() {
    let _guard = serial();
    let dir = tempfile::tempdir().unwrap();
    let data = fixture(dir.path(), 7);
    let init = data.join("init.ply");
    let start = Instant::now();
    let text = train(
        &data,
        &dir.path().join("out"),
        &["--iterations", "2000", "--init", init.to_str().unwrap()],
    );
    let secs = start.elapsed().as_secs_f64();
    let psnr = value_of(&text, "final_psnr: ");
    let pass = psnr > 30.0 && secs < 600.0;
    verdict(
        "synthetic recovery",
        pass,
        &format!("20 splats, 8 views, 2000 iterations: PSNR {psnr:.2} dB > 30 dB, {secs:.1} s < 600 s"),
    );
    assert!(pass);
}

fn mutate(rng: &mut ChaCha8Rng, input: &[u8]) -> Vec<u8> {
    let mut out = input.to_vec();
    for _ in 0..rng.random_range(1..6) {
        match rng.random_range(0..6) {
            0 if !out.is_empty() => {
                let i = rng.random_range(0..out.len());
                out[i] = rng.random();
            }
            1 if !out.is_empty() => {
                let n = rng.random_range(0..out.len());
                out.truncate(n);
            }
            2 => {
                let i = rng.random_range(0..=out.len());
                let extra: Vec<u8> = (0..rng.random_range(1..16)).map(|_| rng.random()).collect();
                out.splice(i..i, extra);
            }
            3 if !out.is_empty() => {
                let i = rng.random_range(0..out.len());
                let j = (i + rng.random_range(1..64)).min(out.len());
                out.drain(i..j);
            }
            4 if out.len() >= 8 => {
                let i = rng.random_range(0..out.len() - 7);
                let v: u64 = [u64::MAX, 1 << 40, 0, 7][rng.random_range(0..4)];
                out[i..i + 8].copy_from_slice(&v.to_le_bytes());
            }
            _ => {
                if let Some(p) = out.iter().position(|b| b.is_ascii_digit()) {
                    out[p] = b'9';
                    out.insert(p, b'9');
                }
            }
        }
    }
    out.truncate(1 << 20);
    out
}

fn bits(cloud: &SplatCloud) -> Vec<u64> {
    let one = |s: &Splat| {
        s.position
            .iter()
            .chain(&s.log_scale)
            .chain(&s.rotation)
            .chain(std::iter::once(&s.opacity_logit))
            .chain(s.sh.iter().flatten())
            .map(|v| v.to_bits())
            .collect::<Vec<_>>()
    };
    let mut v = vec![u64::from(cloud.active_sh_degree), cloud.len() as u64];
    v.extend(cloud.splats.iter().flat_map(one));
    v
}

#[test]
fn format_suite() {
    let _guard = serial();
    let mut ply_ok = 0;
    for seed in 0..1000u64 {
        let cloud = random_cloud(seed, (seed as usize * 7) % 40);
        let binary = read_splat_ply(&write_splat_ply(&cloud)).unwrap();
        let ascii = read_splat_ply(&write_splat_ply_ascii(&cloud)).unwrap();
        if bits(&binary) == bits(&cloud) && bits(&ascii) == bits(&cloud) {
            ply_ok += 1;
        }
    }
    let mut colmap_ok = 0;
    for seed in 0..100u64 {
        let model = random_sparse_model(seed);
        let text = parse_colmap(&write_colmap(&model, ColmapFormat::Text));
        let binary = parse_colmap(&write_colmap(&model, ColmapFormat::Binary));
        if matches!((&text, &binary), (Ok(t), Ok(b)) if t == b && *t == model) {
            colmap_ok += 1;
        }
    }

    let ply_seeds = [
        write_splat_ply(&random_cloud(5, 30)),
        write_splat_ply_ascii(&random_cloud(6, 4)),
        write_splat_ply(&SplatCloud::default()),
    ];
    let colmap_seeds = [
        write_colmap(&random_sparse_model(3), ColmapFormat::Text),
        write_colmap(&random_sparse_model(4), ColmapFormat::Binary),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut crashes, mut hangs, mut slowest) = (0, 0, Duration::ZERO);
    const FUZZ: usize = 10_000;
    for i in 0..FUZZ {
        let t = Instant::now();
        let outcome = if i % 2 == 0 {
            let pick = rng.random_range(0..ply_seeds.len());
            let input = mutate(&mut rng, &ply_seeds[pick]);
            catch_unwind(AssertUnwindSafe(|| drop(read_splat_ply(&input))))
        } else {
            let base = &colmap_seeds[rng.random_range(0..colmap_seeds.len())];
            let files = ColmapFiles {
                format: base.format,
                cameras: mutate(&mut rng, &base.cameras),
                images: mutate(&mut rng, &base.images),
                points3d: mutate(&mut rng, &base.points3d),
            };
            catch_unwind(AssertUnwindSafe(|| drop(parse_colmap(&files))))
        };
        let elapsed = t.elapsed();
        slowest = slowest.max(elapsed);
        crashes += usize::from(outcome.is_err());
        hangs += usize::from(elapsed > Duration::from_secs(1));
    }
    let pass = ply_ok == 1000 && colmap_ok == 100 && crashes == 0 && hangs == 0;
    verdict(
        "format suite",
        pass,
        &format!(
            "PLY round trips {ply_ok}/1000, COLMAP parity {colmap_ok}/100, fuzz {FUZZ} inputs: {crashes} crashes, {hangs} hangs (slowest {:.1} ms)",
            slowest.as_secs_f64() * 1000.0
        ),
    );
    assert!(pass);
}

#[test]
fn determinism() {
    let _guard = serial();
    let dir = tempfile::tempdir().unwrap();
    let data = fixture(dir.path(), 7);
    let run = |name: &str| {
        let out = dir.path().join(name);
        train(&data, &out, &["--iterations", "2000"]);
        std::fs::read(out.join("model.ply")).unwrap()
    };
    let (a, b) = (run("a"), run("b"));
    let pass = a == b;
    verdict(
        "determinism",
        pass,
        &format!("two `train --seed 7` runs of 2000 iterations, model.ply {} vs {} bytes, identical: {pass}", a.len(), b.len()),
    );
    assert!(pass);
}

struct Server(Child);

impl Server {
    fn start(config: &Path) -> (Server, String) {
        let mut child = splatcap()
            .args(["serve", "--config"])
            .arg(config)
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .unwrap();
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
        let base = line.trim().strip_prefix("listening on ").expect(&line).to_string();
        (Server(child), base)
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

const LEGAL: [(&str, &str); 10] = [
    ("queued", "extracting"),
    ("queued", "sfm"),
    ("queued", "training"),
    ("extracting", "sfm"),
    ("sfm", "training"),
    ("training", "ready"),
    ("queued", "failed"),
    ("extracting", "failed"),
    ("sfm", "failed"),
    ("training", "failed"),
];

fn order(state: &str) -> usize {
    ["queued", "extracting", "sfm", "training", "ready", "failed"]
        .iter()
        .position(|s| *s == state)
        .unwrap()
}

#[test]
fn service_end_to_end() {
    let _guard = serial();
    let dir = tempfile::tempdir().unwrap();
    let data = fixture(dir.path(), 7);
    let script = |name: &str, body: &str| {
        let path = dir.path().join(name);
        std::fs::write(&path, format!("#!/bin/sh\nset -e\n{body}\n")).unwrap();
        path
    };
    let extract = script("extract.sh", &format!("cp \"{}\"/*.png \"$2/\"", data.join("images").display()));
    let sfm = script(
        "sfm.sh",
        &format!("mkdir -p \"$2/sparse/0\"\ncp \"{}\"/* \"$2/sparse/0/\"", data.join("sparse/0").display()),
    );
    let config = dir.path().join("service.toml");
    std::fs::write(
        &config,
        format!(
            "listen = \"127.0.0.1:0\"\ndata_root = \"{}\"\nextractor_command = \"sh {} {{input}} {{output}}\"\nsfm_command = \"sh {} {{input}} {{output}}\"\n[train]\niterations = 1500\nseed = 7\n",
            dir.path().join("data").display(),
            extract.display(),
            sfm.display()
        ),
    )
    .unwrap();

    let start = Instant::now();
    let limit = Duration::from_secs(15 * 60);
    let client = reqwest::blocking::Client::new();
    let (server, base) = Server::start(&config);
    let mut video = vec![0, 0, 0, 0x18];
    video.extend_from_slice(b"ftypisom");
    video.resize(8192, 1);
    let form = reqwest::blocking::multipart::Form::new()
        .part("capture", reqwest::blocking::multipart::Part::bytes(video).file_name("capture.mp4"));
    let resp = client.post(format!("{base}/jobs")).multipart(form).send().unwrap();
    assert_eq!(resp.status(), 202);
    let job: Value = resp.json().unwrap();
    assert_eq!(job["state"], "queued");
    let id = job["id"].as_str().unwrap().to_string();

    let poll = |base: &str| -> Value {
        let resp = client.get(format!("{base}/jobs/{id}")).send().unwrap();
        assert_eq!(resp.status(), 200, "job lost");
        resp.json().unwrap()
    };
    let mut observed = vec!["queued".to_string()];
    let mut record = |job: &Value| {
        let state = job["state"].as_str().unwrap().to_string();
        let last = observed.last().unwrap();
        assert!(order(&state) >= order(last), "state regressed {last} -> {state}");
        if *last != state {
            observed.push(state);
        }
    };

    // Kill the server without warning partway through training.
    let mut last_iteration = 0;
    loop {
        let job = poll(&base);
        record(&job);
        if let Some(it) = job["progress"]["iteration"].as_u64() {
            assert!(it >= last_iteration);
            last_iteration = it;
            if it >= 100 {
                break;
            }
        }
        assert_ne!(job["state"], "failed", "{job}");
        assert_ne!(job["state"], "ready", "training finished before the restart");
        assert!(start.elapsed() < limit);
        std::thread::sleep(Duration::from_millis(50));
    }
    drop(server);

    let (_server, base) = Server::start(&config);
    let job = loop {
        let job = poll(&base);
        record(&job);
        let state = job["state"].as_str().unwrap();
        if state == "ready" || state == "failed" {
            break job;
        }
        assert!(start.elapsed() < limit, "not ready within 15 minutes");
        std::thread::sleep(Duration::from_millis(100));
    };
    let secs = start.elapsed().as_secs_f64();
    assert_eq!(job["state"], "ready", "{job}");

    let log: Vec<(String, String)> = job["transitions"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| (t["from"].as_str().unwrap().into(), t["to"].as_str().unwrap().into()))
        .collect();
    let chained = log.windows(2).all(|w| w[0].1 == w[1].0) && log.first().is_some_and(|t| t.0 == "queued");
    let legal = chained && log.iter().all(|(f, t)| LEGAL.contains(&(f.as_str(), t.as_str())));
    let full_path = log
        .iter()
        .map(|(f, t)| format!("{f}->{t}"))
        .collect::<Vec<_>>()
        .join(" ");

    let model = client.get(format!("{base}/jobs/{id}/model.ply")).send().unwrap();
    assert_eq!(model.status(), 200);
    let bytes = model.bytes().unwrap();
    let on_disk = std::fs::read(dir.path().join("data/jobs").join(&id).join("model.ply")).unwrap();
    let cloud = read_splat_ply(&bytes).unwrap();
    let scene = synthetic_scene(7).unwrap();
    let (img, _) = render(&cloud, &scene.dataset.views[0].camera, [0.0; 3]).unwrap();
    let renders = img.pixels().iter().any(|p| p.iter().any(|c| *c > 0.05));

    let pass = legal && bytes[..] == on_disk[..] && !cloud.is_empty() && renders && secs < limit.as_secs_f64();
    verdict(
        "service end-to-end",
        pass,
        &format!(
            "killed at iteration {last_iteration}, resumed to ready in {secs:.1} s; transitions [{full_path}]; model {} splats",
            cloud.len()
        ),
    );
    assert!(pass);
}

#[test]
fn bench_sanity() {
    let _guard = serial();
    let dir = tempfile::tempdir().unwrap();
    let mut medians = Vec::new();
    let mut lines = Vec::new();
    for count in [10_000, 20_000] {
        let (cloud, _) = bench_scene(count, 1);
        let path = dir.path().join(format!("bench{count}.ply"));
        std::fs::write(&path, write_splat_ply(&cloud)).unwrap();
        let text = run_ok(
            splatcap()
                .arg("bench")
                .arg(&path)
                .args(["--resolution", "640x480", "--frames", "15"]),
        );
        let median = value_of(&text, "median_ms: ");
        let fps = value_of(&text, "fps_median: ");
        medians.push(median);
        lines.push(format!("{count} splats {median:.2} ms ({fps:.1} fps)"));
    }
    let ratio = medians[1] / medians[0];
    let pass = ratio <= 3.0;
    verdict(
        "bench sanity",
        pass,
        &format!("{}; ratio {ratio:.2} <= 3", lines.join(", ")),
    );
    assert!(pass);
}
