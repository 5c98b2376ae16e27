use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sep_core::fddem::FddemConfig;
use sep_core::io;
use sep_core::rng::seeded;
use sep_core::{ParamStore, Tensor};
use tempfile::TempDir;

fn sep(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sep")).args(["--threads", "1"]).args(args).output().unwrap()
}

fn randn(shape: [usize; 4], seed: u64) -> Tensor {
    Tensor::randn(shape, 0.0, 1.0, &mut seeded(seed)).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Keys of a JSON object line in emission order.
fn key_order(line: &str) -> Vec<String> {
    let v: serde_json::Value = serde_json::from_str(line).unwrap();
    let mut keys: Vec<(usize, String)> =
        v.as_object().unwrap().keys().map(|k| (line.find(&format!("\"{k}\":")).unwrap(), k.clone())).collect();
    keys.sort();
    keys.into_iter().map(|(_, k)| k).collect()
}

fn json_lines(o: &Output) -> Vec<serde_json::Value> {
    String::from_utf8_lossy(&o.stdout).lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn missing_input_exits_2_naming_the_path() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "c.cfg", "[msgrb]\n");
    let missing = dir.path().join("nowhere.sept");
    let out = dir.path().join("y.sept");
    let o = sep(&["forward", "--config", s(&cfg), "--input", s(&missing), "--output", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nowhere.sept"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn config_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let x = dir.path().join("x.sept");
    io::save_tensor(&x, &randn([1, 4, 6, 6], 1)).unwrap();
    let out = dir.path().join("y.sept");
    for (i, text) in ["[msgrb]\nkernels = 4", "[warp]\n", "[ldconv]\npoints = 0", "[fft2]\n"].iter().enumerate() {
        let cfg = write(dir.path(), &format!("bad{i}.cfg"), text);
        let o = sep(&["forward", "--config", s(&cfg), "--input", s(&x), "--output", s(&out)]);
        assert_eq!(o.status.code(), Some(2), "{text}: {}", stderr(&o));
        assert!(!stderr(&o).is_empty());
    }
    let o = sep(&["forward", "--config", s(&dir.path().join("absent.cfg")), "--input", s(&x), "--output", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn shape_errors_exit_3() {
    let dir = TempDir::new().unwrap();
    let x = dir.path().join("x.sept");
    io::save_tensor(&x, &randn([1, 3, 6, 6], 2)).unwrap();
    let out = dir.path().join("y.sept");
    let cases = [
        "[chain]\ninput = 1x4x6x6\n[msgrb]\n",
        "[ca2neck]\n",
        "[fddem]\nreduction = 4\n",
        "[msgrb]\n[ldconv]\nout_channels = 8\n[dysample]\n[ca2neck]\n",
    ];
    for (i, text) in cases.iter().enumerate() {
        let cfg = write(dir.path(), &format!("shape{i}.cfg"), text);
        let o = sep(&["forward", "--config", s(&cfg), "--input", s(&x), "--output", s(&out)]);
        assert_eq!(o.status.code(), Some(3), "{text}: {}", stderr(&o));
    }
    assert!(!out.exists());
}

#[test]
fn non_finite_input_exits_4() {
    let dir = TempDir::new().unwrap();
    let mut bytes = io::tensor_to_bytes(&Tensor::<f64>::zeros([1, 1, 2, 2]).unwrap());
    let n = bytes.len();
    bytes[n - 8..].copy_from_slice(&f64::NAN.to_le_bytes());
    let x = dir.path().join("nan.sept");
    std::fs::write(&x, bytes).unwrap();
    let cfg = write(dir.path(), "c.cfg", "[dysample]\n");
    let out = dir.path().join("y.sept");
    let o = sep(&["forward", "--config", s(&cfg), "--input", s(&x), "--output", s(&out)]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn fresh_msgrb_chain_returns_input_payload() {
    let dir = TempDir::new().unwrap();
    let x = dir.path().join("x.sept");
    io::save_tensor(&x, &randn([2, 6, 9, 7], 3)).unwrap();
    let cfg = write(dir.path(), "c.cfg", "[chain]\nseed = 4\n[msgrb]\n[msgrb]\nkernels = 3,5\n");
    let out = dir.path().join("y.sept");
    let o = sep(&["forward", "--config", s(&cfg), "--input", s(&x), "--output", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(std::fs::read(&x).unwrap(), std::fs::read(&out).unwrap());
    let stats = &json_lines(&o)[0];
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(key_order(stdout.lines().next().unwrap()), ["shape", "min", "max", "mean", "l2", "wall_ms", "seed"]);
    assert_eq!(stats["seed"], 4);
    assert_eq!(stats["shape"], serde_json::json!([2, 6, 9, 7]));
}

fn gelu(v: f64) -> f64 {
    0.5 * v * (1.0 + libm::erf(v / std::f64::consts::SQRT_2))
}

/// Zero-padded 3×3 convolution with bias.
fn conv3(x: &Tensor, w: &Tensor, b: &Tensor) -> Tensor {
    let [n, ci, h, wd] = x.shape();
    let co = w.shape()[0];
    Tensor::from_fn([n, co, h, wd], |bn, o, i, j| {
        let mut acc = b.at(0, o, 0, 0);
        for c in 0..ci {
            for u in 0..3 {
                for v in 0..3 {
                    let (r, q) = (i as isize + u as isize - 1, j as isize + v as isize - 1);
                    if r >= 0 && q >= 0 && (r as usize) < h && (q as usize) < wd {
                        acc += w.at(o, c, u, v) * x.at(bn, c, r as usize, q as usize);
                    }
                }
            }
        }
        acc
    })
    .unwrap()
}

#[test]
fn fddem_without_frequency_path_reports_spatial_branch_mean() {
    let dir = TempDir::new().unwrap();
    let (c, h, w) = (4, 6, 5);
    let x = randn([2, c, h, w], 5);
    let mut store = ParamStore::new();
    for (k, spec) in (10..).zip(FddemConfig::new(c, h, w).specs()) {
        let t = match spec.name.as_str() {
            n if n.starts_with("spatial.") => randn(spec.shape, k),
            n if n.ends_with(".re") => Tensor::ones(spec.shape).unwrap(),
            _ => Tensor::zeros(spec.shape).unwrap(),
        };
        store.insert(spec.name.clone(), t);
    }
    io::save_params(&dir.path().join("w.sepp"), &store).unwrap();
    let xp = dir.path().join("x.sept");
    io::save_tensor(&xp, &x).unwrap();
    let cfg = write(dir.path(), "c.cfg", "[fddem]\nparams = file:w.sepp\n");
    let out = dir.path().join("y.sept");
    let o = sep(&["forward", "--config", s(&cfg), "--input", s(&xp), "--output", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let get = |n: &str| store.get(n).unwrap();
    let hidden = conv3(&x, get("spatial.conv1.weight"), get("spatial.conv1.bias")).map("gelu", gelu).unwrap();
    let want = x.add(&conv3(&hidden, get("spatial.conv2.weight"), get("spatial.conv2.bias"))).unwrap();
    let want_mean = want.data().iter().sum::<f64>() / want.numel() as f64;
    let got_mean = json_lines(&o)[0]["mean"].as_f64().unwrap();
    assert!((got_mean - want_mean).abs() <= 1e-12, "{got_mean} vs {want_mean}");
    let y: Tensor = io::load_tensor(&out).unwrap();
    assert!(y.max_abs_diff(&want).unwrap() <= 1e-12);
}

#[test]
fn param_files_are_validated() {
    let dir = TempDir::new().unwrap();
    let mut store = ParamStore::<f64>::new();
    store.insert("expand.weight", Tensor::zeros([1, 1, 1, 1]).unwrap());
    io::save_params(&dir.path().join("w.sepp"), &store).unwrap();
    let x = dir.path().join("x.sept");
    io::save_tensor(&x, &randn([1, 4, 6, 6], 6)).unwrap();
    let out = dir.path().join("y.sept");
    for text in ["[msgrb]\nparams = file:w.sepp\n", "[msgrb]\nparams = file:none.sepp\n"] {
        let cfg = write(dir.path(), "c.cfg", text);
        let o = sep(&["forward", "--config", s(&cfg), "--input", s(&x), "--output", s(&out)]);
        assert_eq!(o.status.code(), Some(2), "{text}");
        assert!(stderr(&o).contains(".sepp"), "{}", stderr(&o));
    }
}

#[test]
fn pyramid_directories_round_trip_through_a_fresh_neck() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("in");
    std::fs::create_dir(&input).unwrap();
    for (l, shape) in [[1, 4, 8, 8], [1, 8, 4, 4], [1, 16, 2, 2]].into_iter().enumerate() {
        io::save_tensor(&input.join(format!("level{l}.sept")), &randn(shape, 20 + l as u64)).unwrap();
    }
    let cfg = write(dir.path(), "c.cfg", "[ca2neck]\n");
    let out = dir.path().join("out");
    let o = sep(&["forward", "--config", s(&cfg), "--input", s(&input), "--output", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(json_lines(&o).len(), 3);
    for l in 0..3 {
        let f = format!("level{l}.sept");
        assert_eq!(std::fs::read(input.join(&f)).unwrap(), std::fs::read(out.join(&f)).unwrap());
    }
}

#[test]
fn f32_configs_cast_inputs() {
    let dir = TempDir::new().unwrap();
    let x = dir.path().join("x.sept");
    io::save_tensor(&x, &randn([1, 2, 4, 4], 7)).unwrap();
    let cfg = write(dir.path(), "c.cfg", "[chain]\ndtype = f32\n[dysample]\nscale = 3\n");
    let out = dir.path().join("y.sept");
    let o = sep(&["forward", "--config", s(&cfg), "--input", s(&x), "--output", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let y: Tensor<f32> = io::load_tensor(&out).unwrap();
    assert_eq!(y.shape(), [1, 2, 12, 12]);
}

#[test]
fn props_filter_and_fault_injection() {
    let all = sep(&["props"]);
    assert_eq!(all.status.code(), Some(0));
    let suites: std::collections::BTreeSet<String> =
        json_lines(&all).iter().map(|v| v["suite"].as_str().unwrap().to_string()).collect();
    assert_eq!(suites.len(), 6);

    let spectral = sep(&["props", "--filter", "spectral"]);
    assert_eq!(spectral.status.code(), Some(0));
    let lines = json_lines(&spectral);
    assert!(!lines.is_empty() && lines.iter().all(|v| v["suite"] == "spectral"));
    let stdout = String::from_utf8_lossy(&spectral.stdout);
    assert_eq!(key_order(stdout.lines().next().unwrap()), ["suite", "property", "seed", "pass", "metric"]);

    let faulty = sep(&["props", "--filter", "spectral", "--inject-fault"]);
    assert_eq!(faulty.status.code(), Some(1));
    let lines = json_lines(&faulty);
    assert_eq!(lines.len(), json_lines(&spectral).len(), "suite must run to completion");
    let parseval = lines.iter().find(|v| v["property"] == "parseval").unwrap();
    assert_eq!(parseval["pass"], false);

    assert_eq!(sep(&["props", "--filter", "optics"]).status.code(), Some(2));
}

#[test]
fn gradcheck_reports_every_parameter() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "c.cfg", "[chain]\nseed = 8\ninput = 1x4x6x6\n[msgrb]\nparams = random\n[ldconv]\nparams = random\nstride = 2\n");
    let o = sep(&["gradcheck", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let lines = json_lines(&o);
    let names: Vec<&str> = lines.iter().filter_map(|v| v["param"].as_str()).collect();
    assert!(names.contains(&"m0.expand.weight") && names.contains(&"m1.offset.weight"));
    assert!(names.contains(&"input.level0"));
    assert!(lines.iter().filter(|v| v.get("param").is_some()).all(|v| v["pass"] == true));
    assert_eq!(lines.last().unwrap()["seed"], 8);

    let no_input = write(dir.path(), "n.cfg", "[msgrb]\n");
    assert_eq!(sep(&["gradcheck", "--config", s(&no_input)]).status.code(), Some(2));
}

#[test]
fn bench_schema_and_repeat_contract() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "c.cfg", "[chain]\ndtype = f32\ninput = 1x4x8x8\n[fft2]\n[dft2]\n[msgrb]\n[dysample]\n");
    let o = sep(&["bench", "--config", s(&cfg), "--repeats", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let records: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let records = records.as_array().unwrap();
    let modules: Vec<&str> = records.iter().map(|r| r["module"].as_str().unwrap()).collect();
    assert_eq!(modules, ["fft2", "dft2", "msgrb", "dysample"]);
    for r in records {
        assert!(r["min_ms"].as_f64().unwrap() <= r["median_ms"].as_f64().unwrap());
    }
    assert_eq!(records[3]["input_shape"], serde_json::json!([1, 4, 8, 8]));

    for repeats in ["1", "2"] {
        assert_eq!(sep(&["bench", "--config", s(&cfg), "--repeats", repeats]).status.code(), Some(2));
    }
}

#[test]
fn seed_flag_overrides_config_and_reproduces() {
    let dir = TempDir::new().unwrap();
    let x = dir.path().join("x.sept");
    io::save_tensor(&x, &randn([1, 4, 6, 6], 9)).unwrap();
    let cfg = write(dir.path(), "c.cfg", "[chain]\nseed = 1\n[msgrb]\nparams = random\n");
    let run = |seed: &str, name: &str| {
        let out = dir.path().join(name);
        let o = sep(&["forward", "--config", s(&cfg), "--input", s(&x), "--output", s(&out), "--seed", seed]);
        assert_eq!(o.status.code(), Some(0));
        (std::fs::read(out).unwrap(), json_lines(&o)[0]["seed"].as_u64().unwrap())
    };
    let (a, sa) = run("5", "a.sept");
    let (b, _) = run("5", "b.sept");
    let (c, sc) = run("6", "c.sept");
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!((sa, sc), (5, 6));
}
