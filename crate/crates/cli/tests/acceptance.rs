//! Acceptance gate: one PASS/FAIL line per criterion, exit status 1 if any fail.
//! Runs single-threaded so results are reproducible.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::Rng;
use sep_core::fddem::{fddem_forward, FddemConfig, FddemParams};
use sep_core::io;
use sep_core::msgrb::{msgrb_forward, MsgrbConfig, MsgrbParams};
use sep_core::neck::{
    dysample_forward, ldconv_forward, DysampleConfig, DysampleParams, LdconvConfig, LdconvParams,
};
use sep_core::rng::seeded;
use sep_core::spectral::{fft2_with, ifft2, FftPath};
use sep_core::{Source, Tensor};

const SEP: &str = env!("CARGO_BIN_EXE_sep");

type Verdict = (bool, String);

fn randn(shape: [usize; 4], seed: u64) -> Tensor {
    Tensor::randn(shape, 0.0, 1.0, &mut seeded(seed)).unwrap()
}

/// Literal double sum `Σ_x Σ_y f(x,y)·exp(−2πi(ux/H + vy/W))` for one plane,
/// with exact integer phase reduction.
fn dft_oracle(plane: &[f64], h: usize, w: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(h * w);
    for u in 0..h {
        for v in 0..w {
            let (mut re, mut im) = (0.0, 0.0);
            for x in 0..h {
                for y in 0..w {
                    let turns = ((u * x) % h) as f64 / h as f64 + ((v * y) % w) as f64 / w as f64;
                    let angle = -2.0 * std::f64::consts::PI * turns;
                    re += plane[x * w + y] * angle.cos();
                    im += plane[x * w + y] * angle.sin();
                }
            }
            out.push((re, im));
        }
    }
    out
}

fn fft_round_trip() -> Verdict {
    let start = Instant::now();
    let mut rng = seeded(101);
    let mut worst = 0.0f64;
    for case in 0..100 {
        let (h, w) = (rng.random_range(1..=64), rng.random_range(1..=64));
        let x = randn([1, 1, h, w], 1000 + case);
        let back = ifft2(&fft2_with(&x, FftPath::Auto).unwrap()).unwrap();
        worst = worst.max(back.max_abs_diff(&x).unwrap());
    }
    let secs = start.elapsed().as_secs_f64();
    (worst <= 1e-10 && secs < 10.0, format!("max abs err {worst:.3e}, {secs:.2}s over 100 planes"))
}

fn dft_oracle_equivalence() -> Verdict {
    let mut worst = 0.0f64;
    for (k, n) in [4usize, 7, 8, 12, 16, 32].into_iter().enumerate() {
        for (h, w) in [(n, n), (n, 4)] {
            let x = randn([1, 1, h, w], 200 + k as u64);
            let want = dft_oracle(x.data(), h, w);
            for path in [FftPath::Auto, FftPath::Naive] {
                let got = fft2_with(&x, path).unwrap();
                for (i, &(re, im)) in want.iter().enumerate() {
                    worst = worst.max((got.re.data()[i] - re).abs()).max((got.im.data()[i] - im).abs());
                }
            }
        }
    }
    (worst <= 1e-10, format!("max abs err {worst:.3e} over sizes 4,7,8,12,16,32, fast and naive"))
}

fn parseval() -> Verdict {
    let mut rng = seeded(303);
    let mut worst = 0.0f64;
    for case in 0..100 {
        let (h, w) = (rng.random_range(1..=32), rng.random_range(1..=32));
        let x = randn([1, 1, h, w], 3000 + case);
        let f = fft2_with(&x, FftPath::Auto).unwrap();
        let spatial: f64 = x.data().iter().map(|v| v * v).sum();
        let spectral: f64 =
            f.re.data().iter().zip(f.im.data()).map(|(a, b)| a * a + b * b).sum::<f64>() / (h * w) as f64;
        worst = worst.max((spatial - spectral).abs() / spatial);
    }
    (worst <= 1e-9, format!("max relative err {worst:.3e} over 100 planes"))
}

/// Half-pixel bilinear resize with border clamping.
fn resize_oracle(x: &Tensor, s: usize) -> Tensor {
    let [n, c, h, w] = x.shape();
    let src = |o: usize, len: usize| ((o as f64 + 0.5) / s as f64 - 0.5).clamp(0.0, (len - 1) as f64);
    Tensor::from_fn([n, c, s * h, s * w], |b, ch, i, j| {
        let (r, q) = (src(i, h), src(j, w));
        let (r0, q0) = (r.floor() as usize, q.floor() as usize);
        let (r1, q1) = ((r0 + 1).min(h - 1), (q0 + 1).min(w - 1));
        let (fr, fq) = (r - r0 as f64, q - q0 as f64);
        (1.0 - fr) * ((1.0 - fq) * x.at(b, ch, r0, q0) + fq * x.at(b, ch, r0, q1))
            + fr * ((1.0 - fq) * x.at(b, ch, r1, q0) + fq * x.at(b, ch, r1, q1))
    })
    .unwrap()
}

fn identity_at_init() -> Verdict {
    let x = randn([2, 8, 12, 10], 404);
    let fddem = FddemParams::new(FddemConfig::new(8, 12, 10), Source::Init, 1).unwrap();
    let fddem_err = fddem_forward(&x, &fddem).unwrap().max_abs_diff(&x).unwrap();
    let msgrb = MsgrbParams::new(MsgrbConfig::new(8), Source::Init, 2).unwrap();
    let msgrb_err = msgrb_forward(&x, &msgrb).unwrap().max_abs_diff(&x).unwrap();

    let dysample = DysampleParams::new(DysampleConfig::new(8, 2), Source::Init, 3).unwrap();
    let dysample_err = dysample_forward(&x, &dysample).unwrap().max_abs_diff(&resize_oracle(&x, 2)).unwrap();

    let (ci, co, h, w) = (8, 5, 12, 10);
    let k = randn([co, ci, 3, 3], 405);
    let mut ld = LdconvParams::new(LdconvConfig::new(ci, co, 9, 1), Source::Init, 4).unwrap();
    let mix = Tensor::from_fn([co, ci * 9, 1, 1], |o, cn, _, _| k.at(o, cn / 9, (cn % 9) / 3, cn % 3)).unwrap();
    ld.block_mut().set("mix.weight", mix).unwrap();
    let y = ldconv_forward(&x, &ld).unwrap();
    let mut ld_err = 0.0f64;
    for b in 0..2 {
        for o in 0..co {
            for i in 1..h - 1 {
                for j in 1..w - 1 {
                    let mut want = 0.0;
                    for c in 0..ci {
                        for u in 0..3 {
                            for v in 0..3 {
                                want += k.at(o, c, u, v) * x.at(b, c, i + u - 1, j + v - 1);
                            }
                        }
                    }
                    ld_err = ld_err.max((y.at(b, o, i, j) - want).abs());
                }
            }
        }
    }
    let pass = fddem_err <= 1e-12 && msgrb_err <= 1e-12 && dysample_err <= 1e-10 && ld_err <= 1e-10;
    (
        pass,
        format!(
            "fddem {fddem_err:.3e}, msgrb {msgrb_err:.3e}, dysample vs resize {dysample_err:.3e}, \
             ldconv N=9 interior {ld_err:.3e}"
        ),
    )
}

fn sep(args: &[&str]) -> std::process::Output {
    Command::new(SEP).args(["--threads", "1"]).args(args).output().expect("spawn sep")
}

fn gradient_certification(dir: &Path) -> Verdict {
    let configs = [
        ("fddem", "1x4x8x8", "[fddem]"),
        ("msgrb", "1x4x8x8", "[msgrb]"),
        ("ldconv", "1x2x8x8", "[ldconv]\npoints = 5"),
        ("dysample", "1x4x8x8", "[dysample]"),
        ("ca2neck", "1x4x8x8;1x8x4x4;1x16x2x2", "[ca2neck]"),
    ];
    let start = Instant::now();
    let mut notes = Vec::new();
    let mut pass = true;
    for (name, input, section) in configs {
        let path = dir.join(format!("grad_{name}.cfg"));
        let text = format!("[chain]\nseed = 11\ninput = {input}\n{section}\nparams = random\n");
        std::fs::write(&path, text).unwrap();
        let out = sep(&["gradcheck", "--config", path.to_str().unwrap()]);
        let stdout = String::from_utf8_lossy(&out.stdout);
        let worst = stdout
            .lines()
            .filter_map(|l| serde_json::from_str::<serde_json::Value>(l).ok())
            .filter(|v| v.get("param").is_some())
            .map(|v| v["max_rel_err"].as_f64().unwrap_or(f64::INFINITY))
            .fold(0.0, f64::max);
        let ok = out.status.code() == Some(0) && worst <= 1e-4;
        pass &= ok;
        notes.push(format!("{name} {worst:.2e}"));
    }
    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(300);
    (pass, format!("max rel err {} in {:.1}s", notes.join(", "), elapsed.as_secs_f64()))
}

fn scope_bound() -> Verdict {
    let cfg = DysampleConfig::new(4, 2);
    let (n, h, w) = (2, 6, 5);
    let map = cfg.grid_map(n, h, w);
    let [_, k, _, _] = map.offsets_shape;
    let mut rng = seeded(606);
    let params = DysampleParams::<f64>::new(cfg.clone(), Source::Random, 7).unwrap();
    let x = randn([n, 4, h, w], 607).map("scale", |v| 8.0 * v).unwrap();
    let fixtures = [
        Tensor::full([n, k, h, w], 1.0).unwrap(),
        Tensor::full([n, k, h, w], -1.0).unwrap(),
        Tensor::from_fn([n, k, h, w], |_, _, _, _| rng.random_range(-1.0..=1.0)).unwrap(),
        params.offset_head(&x).unwrap().map("clamp", |v| v.clamp(-1.0, 1.0)).unwrap(),
    ];
    let mut worst = 0.0f64;
    for f in &fixtures {
        let grid = map.apply(f).unwrap();
        for (g, b) in grid.coords().iter().zip(&map.base) {
            worst = worst.max((g - b).abs());
        }
    }
    (worst <= 0.25, format!("max per-axis deviation {worst} (bound 0.25)"))
}

fn linear_growth() -> Verdict {
    let ci = 6;
    let counts: Vec<usize> = [1, 5, 9, 13]
        .into_iter()
        .map(|n| {
            LdconvParams::<f64>::new(LdconvConfig::new(ci, 4, n, 2), Source::Init, 0)
                .unwrap()
                .mixing_weights_per_output()
                .unwrap()
        })
        .collect();
    (counts == [ci, 5 * ci, 9 * ci, 13 * ci], format!("C_in = {ci}, per-output counts {counts:?}"))
}

fn fft_speed() -> Verdict {
    let x = randn([1, 8, 64, 64], 808).cast::<f32>().unwrap();
    let time = |path| {
        let mut t: Vec<f64> = (0..5)
            .map(|_| {
                let start = Instant::now();
                std::hint::black_box(fft2_with(&x, path).unwrap());
                start.elapsed().as_secs_f64()
            })
            .collect();
        t.sort_by(f64::total_cmp);
        t[2]
    };
    fft2_with(&x, FftPath::Auto).unwrap();
    let fast = time(FftPath::Auto);
    let naive = time(FftPath::Naive);
    let ratio = naive / fast;
    (ratio >= 10.0, format!("median fast {:.3} ms, naive {:.1} ms, ratio {ratio:.0}x", fast * 1e3, naive * 1e3))
}

/// Drops `wall_ms`/`median_ms`/`min_ms` so reports compare on content.
fn non_timing(stdout: &[u8]) -> Vec<serde_json::Value> {
    let text = String::from_utf8_lossy(stdout);
    let strip = |mut v: serde_json::Value| {
        if let Some(o) = v.as_object_mut() {
            for k in ["wall_ms", "median_ms", "min_ms"] {
                o.remove(k);
            }
        }
        v
    };
    match serde_json::from_str::<serde_json::Value>(&text) {
        Ok(serde_json::Value::Array(items)) => items.into_iter().map(strip).collect(),
        _ => text.lines().map(|l| strip(serde_json::from_str(l).unwrap())).collect(),
    }
}

fn determinism(dir: &Path) -> Verdict {
    let input = dir.join("det_in.sept");
    io::save_tensor(&input, &randn([1, 4, 8, 8], 909)).unwrap();
    let pyramid = dir.join("det_pyr");
    std::fs::create_dir_all(&pyramid).unwrap();
    for (l, s) in [[1, 4, 8, 8], [1, 8, 4, 4], [1, 16, 2, 2]].into_iter().enumerate() {
        io::save_tensor(&pyramid.join(format!("level{l}.sept")), &randn(s, 910 + l as u64)).unwrap();
    }
    let chains = [
        ("chain", "input = 1x4x8x8\n[fddem]\nparams = random\n[msgrb]\nparams = random\n[ldconv]\nparams = random\nstride = 2\n[dysample]\nparams = random\n", &input),
        ("neck", "[ca2neck]\nparams = random\n", &pyramid),
    ];
    let mut failures = Vec::new();
    for (name, body, src) in chains {
        let cfg = dir.join(format!("det_{name}.cfg"));
        std::fs::write(&cfg, format!("[chain]\nseed = 21\n{body}")).unwrap();
        let mut runs = Vec::new();
        for run in 0..2 {
            let out = dir.join(format!("det_{name}_{run}.out"));
            let o = sep(&["forward", "--config", cfg.to_str().unwrap(), "--input", src.to_str().unwrap(), "--output", out.to_str().unwrap()]);
            let bytes: Vec<Vec<u8>> = if out.is_dir() {
                (0..3).map(|l| std::fs::read(out.join(format!("level{l}.sept"))).unwrap()).collect()
            } else {
                vec![std::fs::read(&out).unwrap_or_default()]
            };
            runs.push((o.status.code(), bytes, non_timing(&o.stdout)));
        }
        if runs[0].0 != Some(0) || runs[0] != runs[1] {
            failures.push(format!("forward {name}"));
        }
    }
    let grad_cfg = dir.join("det_grad.cfg");
    std::fs::write(&grad_cfg, "[chain]\nseed = 5\ninput = 1x4x6x6\n[msgrb]\nparams = random\n").unwrap();
    let bench_cfg = dir.join("det_bench.cfg");
    std::fs::write(&bench_cfg, "[chain]\ninput = 1x4x8x8\n[msgrb]\n[fft2]\n").unwrap();
    let commands: [Vec<&str>; 3] = [
        vec!["gradcheck", "--config", grad_cfg.to_str().unwrap()],
        vec!["props", "--seed", "9"],
        vec!["bench", "--config", bench_cfg.to_str().unwrap(), "--repeats", "3"],
    ];
    for args in &commands {
        let (a, b) = (sep(args), sep(args));
        if a.status.code() != Some(0) || a.status.code() != b.status.code() || non_timing(&a.stdout) != non_timing(&b.stdout) {
            failures.push(args[0].to_string());
        }
    }
    (
        failures.is_empty(),
        if failures.is_empty() {
            "forward (4-module chain, 3-level neck), gradcheck, props, bench repeat identically".to_string()
        } else {
            format!("differing runs: {}", failures.join(", "))
        },
    )
}

fn main() {
    rayon::ThreadPoolBuilder::new().num_threads(1).build_global().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let criteria: [(&str, &dyn Fn() -> Verdict); 9] = [
        ("fft round trip", &fft_round_trip),
        ("dft oracle equivalence", &dft_oracle_equivalence),
        ("parseval", &parseval),
        ("identity at initialization", &identity_at_init),
        ("gradient certification", &|| gradient_certification(dir.path())),
        ("scope-factor bound", &scope_bound),
        ("ldconv linear parameter growth", &linear_growth),
        ("fft performance", &fft_speed),
        ("determinism", &|| determinism(dir.path())),
    ];
    let total = criteria.len();
    let mut failed = 0;
    for (name, check) in criteria {
        let (pass, detail) = check();
        println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        failed += usize::from(!pass);
    }
    println!("acceptance: {} of {total} criteria passed", total - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
