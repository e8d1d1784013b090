//! Acceptance suite: one PASS/FAIL line per criterion. Exits nonzero if any
//! criterion fails.

mod common;

use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use common::*;
use resnet_lab::activation::{accumulate_piece, explicit_eval, trace_forward};
use resnet_lab::conv::{conv1d_direct, conv2d_direct, conv_mc_direct, toeplitz_1d, toeplitz_2d, toeplitz_mc, FilterMask2D};
use resnet_lab::diagnostics::{
    cauchy_tail_test, diagnose, filter_norm_bound, partial_sum_weights, product_bound, DiagnoseOptions,
    NormSequence, Verdict,
};
use resnet_lab::generator::{generate, perturb_identity};
use resnet_lab::model::{DenseNetWeights, Weights};
use resnet_lab::tensor::{norm_induced, vec_stack, vector_norm, ImageStack, Matrix};
use resnet_lab::Exec;

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(name: &str, limit: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let out = f();
    let elapsed = start.elapsed();
    let in_time = elapsed <= limit;
    let pass = out.pass && in_time;
    println!(
        "{} {name}: {} [{:.2}s, limit {}s]",
        if pass { "PASS" } else { "FAIL" },
        out.detail,
        elapsed.as_secs_f64(),
        limit.as_secs()
    );
    pass
}

fn conv_toeplitz_equivalence() -> Outcome {
    let mut r = rng(1);
    let (mut dev1, mut dev2, mut devmc) = (0.0_f64, 0.0_f64, 0.0_f64);
    for _ in 0..100 {
        let d = 1 + r.index(8);
        let f = r.index(3).min(d - 1);
        let w = r.signed_vec(2 * f + 1);
        let x = r.signed_vec(d);
        let direct = conv1d_direct(&x, &mask1d(&w));
        let lowered = toeplitz_1d(&mask1d(&w), d).unwrap().matvec(&x).unwrap();
        dev1 = dev1.max(max_dev(&direct, &lowered)).max(max_dev(&direct, &ref_conv1d(&x, &w)));
    }
    for _ in 0..100 {
        let d = 1 + r.index(8);
        let f = r.index(3).min(d - 1);
        let w = random_kernel_rows(&mut r, f);
        let x = random_grid(&mut r, d);
        let k = FilterMask2D::from_rows(&w).unwrap();
        let direct = conv2d_direct(&Matrix::from_rows(&x).unwrap(), &k).unwrap();
        let flat: Vec<f64> = x.iter().flatten().copied().collect();
        let lowered = toeplitz_2d(&k, d).unwrap().matvec(&flat).unwrap();
        let direct_flat: Vec<f64> = direct.to_rows().into_iter().flatten().collect();
        let oracle: Vec<f64> = ref_conv2d(&x, &w).into_iter().flatten().collect();
        dev2 = dev2.max(max_dev(&direct_flat, &lowered)).max(max_dev(&direct_flat, &oracle));
    }
    for _ in 0..100 {
        let d = 1 + r.index(8);
        let f = r.index(3).min(d - 1);
        let (c_out, c_in) = (1 + r.index(3), 1 + r.index(3));
        let w = random_filter_rows(&mut r, f, c_out, c_in);
        let x: Vec<Vec<Vec<f64>>> = (0..c_in).map(|_| random_grid(&mut r, d)).collect();
        let filter = filter_from_rows(&w);
        let stack = ImageStack::new(d, x.iter().map(|g| Matrix::from_rows(g).unwrap()).collect()).unwrap();
        let direct = vec_stack(&conv_mc_direct(&stack, &filter).unwrap());
        let lowered = toeplitz_mc(&filter, d).unwrap().matvec(&flatten(&x)).unwrap();
        devmc = devmc.max(max_dev(&direct, &lowered)).max(max_dev(&direct, &flatten(&ref_conv_mc(&x, &w))));
    }
    let worst = dev1.max(dev2).max(devmc);
    Outcome {
        pass: worst <= 1e-12,
        detail: format!("max deviation 1-D {dev1:.2e}, 2-D {dev2:.2e}, multi-channel {devmc:.2e} (<= 1e-12)"),
    }
}

fn closed_form_oracle() -> Outcome {
    let mut r = rng(2);
    let mut worst = 0.0_f64;
    for _ in 0..200 {
        let n = r.index(5);
        let d_res = 1 + r.index(12);
        let net = random_net(&mut r, n, 3, d_res, 12);
        let dense = to_dense(&net);
        let x = r.unit_vec(d_res);
        let explicit = explicit_eval(&dense, &x, n).unwrap();
        let recursive = dense.forward_network(&x, n as isize).unwrap();
        worst = worst.max(max_dev(&explicit, &recursive)).max(max_dev(&explicit, &ref_forward(&net, &x, n)));
    }
    Outcome {
        pass: worst <= 1e-10,
        detail: format!("200 pairs, max |explicit - recursive| = {worst:.2e} (<= 1e-10)"),
    }
}

fn filter_bound_certification() -> Outcome {
    let mut r = rng(3);
    let mut worst_ratio = 0.0_f64;
    let mut worst_rayleigh = 0.0_f64;
    let mut violations = 0;
    for _ in 0..100 {
        let f = r.index(3);
        let d = (3 + r.index(6)).max(f + 1);
        let (c_out, c_in) = (1 + r.index(3), 1 + r.index(3));
        let w = filter_from_rows(&random_filter_rows(&mut r, f, c_out, c_in));
        let t = toeplitz_mc(&w, d).unwrap();
        for p in [1.0, f64::INFINITY] {
            let exact = norm_induced(&t, p).unwrap();
            let bound = filter_norm_bound(&w, p).unwrap();
            worst_ratio = worst_ratio.max(exact / bound);
            if exact > bound * (1.0 + 1e-12) {
                violations += 1;
            }
        }
        let b2 = filter_norm_bound(&w, 2.0).unwrap();
        for _ in 0..10 {
            let x = r.signed_vec(t.cols());
            let q = vector_norm(&t.matvec(&x).unwrap(), 2.0) / vector_norm(&x, 2.0);
            worst_rayleigh = worst_rayleigh.max(q / b2);
            if q > b2 * (1.0 + 1e-12) {
                violations += 1;
            }
        }
    }
    Outcome {
        pass: violations == 0,
        detail: format!(
            "{violations} violations; max exact/bound at p in {{1,inf}} = {worst_ratio:.6}, max p=2 quotient/bound over 1000 vectors = {worst_rayleigh:.6}"
        ),
    }
}

fn convergent_fixture() -> Outcome {
    let w = generate(&convergent_config()).unwrap();
    let opts = DiagnoseOptions::default();
    let report = diagnose(&w, &opts).unwrap();
    let s1 = *report.s1.last().unwrap();
    let rel = (s1 - BASEL).abs() / BASEL;
    let dense = w.dense().unwrap();
    let depths: Vec<usize> = (200..=400).collect();
    let tails = cauchy_tail_test(&dense, opts.samples, &depths, opts.seed).unwrap();
    let tail_max = tails[1..].iter().fold(0.0_f64, |a, &b| a.max(b));
    let span = cauchy_tail_test(&dense, opts.samples, &[200, 400], opts.seed).unwrap()[1];
    let ok_s1 = rel <= 0.01;
    let ok_verdict = report.verdict == Verdict::Converged;
    let ok_tail = tail_max < 1e-6;
    Outcome {
        pass: ok_s1 && ok_verdict && ok_tail,
        detail: format!(
            "S1_400 = {s1:.6} vs pi^2/6 = {BASEL:.6} (rel {rel:.2e}, {}); verdict {} ({}); max consecutive tail over depths 201..=400 = {tail_max:.3e} ({}; |N_400 - N_200| = {span:.3e})",
            ok(ok_s1),
            report.verdict,
            ok(ok_verdict),
            if ok_tail { "< 1e-6" } else { "not < 1e-6" },
        ),
    }
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "failed"
    }
}

fn divergent_controls() -> Outcome {
    let flat = generate(&constant_norm_config()).unwrap();
    let ns = NormSequence::from_weights(&flat, 1.0, Exec::default()).unwrap();
    let worst_linear = (0..ns.len())
        .map(|n| (partial_sum_weights(&ns, n).unwrap() - (n + 1) as f64).abs())
        .fold(0.0_f64, f64::max);
    let flat_verdict = diagnose(&flat, &DiagnoseOptions::default()).unwrap().verdict;

    let biased = generate(&constant_bias_config()).unwrap();
    let report = diagnose(&biased, &DiagnoseOptions::default()).unwrap();
    let s1 = *report.s1.last().unwrap();
    let s2_half = report.s2[200];
    let s2 = *report.s2.last().unwrap();
    let s1_bounded = s1 < BASEL + 1e-9;
    let s2_unbounded = s2 >= 1.9 * s2_half && s2 >= 400.0;

    let pass = worst_linear <= 1e-12 * 401.0
        && flat_verdict == Verdict::Diverged
        && s1_bounded
        && s2_unbounded
        && report.verdict == Verdict::Diverged;
    Outcome {
        pass,
        detail: format!(
            "constant norms: max |S1_n - (n+1)| = {worst_linear:.1e}, verdict {flat_verdict}; constant biases: S1_400 = {s1:.4} (bounded {}), S2_200 = {s2_half:.1}, S2_400 = {s2:.1} (linear {}), verdict {}",
            ok(s1_bounded),
            ok(s2_unbounded),
            report.verdict
        ),
    }
}

fn proof_chain() -> Outcome {
    let mut fixtures: Vec<(&str, Weights)> = vec![
        ("convergent", generate(&convergent_config()).unwrap()),
        ("constant-norm", generate(&constant_norm_config()).unwrap()),
        ("constant-bias", generate(&constant_bias_config()).unwrap()),
        ("conv", generate(&conv_config(40, 9)).unwrap()),
    ];
    let id = perturb_identity(&fixtures[0].1, 0.0, 1.0).unwrap();
    let eps = perturb_identity(&fixtures[0].1, 0.1, 1.0).unwrap();
    fixtures.push(("identity", id));
    fixtures.push(("perturbed-identity", eps));
    let mut checked = 0;
    let mut worst = 0.0_f64;
    let mut bad = Vec::new();
    for (name, w) in &fixtures {
        for p in [1.0, 2.0, f64::INFINITY] {
            let ns = NormSequence::from_weights(w, p, Exec::default()).unwrap();
            for n in 0..ns.len() {
                let pb = product_bound(&ns, 0, n).unwrap();
                let e = partial_sum_weights(&ns, n).unwrap().exp();
                worst = worst.max(pb / e);
                checked += 1;
                if pb > e * (1.0 + 1e-12) {
                    bad.push(format!("{name} p={p} n={n}"));
                }
            }
        }
    }
    Outcome {
        pass: bad.is_empty(),
        detail: format!(
            "{checked} (fixture, p, depth) triples, max productBound/exp(S1) = {worst:.6}; violations: {}",
            if bad.is_empty() { "none".to_string() } else { bad.join(", ") }
        ),
    }
}

fn jacobian_check() -> Outcome {
    let mut r = rng(7);
    let mut accepted = 0;
    let mut tried = 0;
    let mut worst = 0.0_f64;
    let h = 1e-7;
    while accepted < 50 && tried < 10_000 {
        tried += 1;
        let n = 1 + r.index(4);
        let d = 1 + r.index(8);
        let net: DenseNetWeights = to_dense(&random_net(&mut r, n, 3, d, 8));
        let x: Vec<f64> = (0..d).map(|_| r.range(0.05, 0.95)).collect();
        let trace = trace_forward(&net, &x, n).unwrap();
        if trace.margin <= 1e-6 {
            continue;
        }
        accepted += 1;
        let a = accumulate_piece(&net, &trace, n).unwrap().a;
        for j in 0..d {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let fp = net.forward_network(&xp, n as isize).unwrap();
            let fm = net.forward_network(&xm, n as isize).unwrap();
            for i in 0..d {
                let fd = (fp[i] - fm[i]) / (2.0 * h);
                worst = worst.max((fd - a.get(i, j)).abs());
            }
        }
    }
    Outcome {
        pass: accepted == 50 && worst <= 1e-5,
        detail: format!("{accepted} interior points (margin > 1e-6, {tried} drawn), max |FD - A| = {worst:.2e} (<= 1e-5)"),
    }
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_resnet-lab");
    let cfg = dir.path().join("config.json");
    let mut config = serde_json::to_value(convergent_config()).unwrap();
    config["spec"]["n"] = 120.into();
    std::fs::write(&cfg, config.to_string()).unwrap();
    let run = |tag: &str, extra: &[&str]| -> (Vec<u8>, Vec<u8>) {
        let weights = dir.path().join(format!("w-{tag}.json"));
        let csv = dir.path().join(format!("d-{tag}.csv"));
        let st = Command::new(bin)
            .args(extra)
            .args(["gen", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&weights)
            .output()
            .unwrap();
        assert!(st.status.success(), "gen failed: {}", String::from_utf8_lossy(&st.stderr));
        let st = Command::new(bin)
            .args(extra)
            .args(["diagnose", "--samples", "32", "--seed", "5", "--weights"])
            .arg(&weights)
            .arg("--out-csv")
            .arg(&csv)
            .output()
            .unwrap();
        assert!(st.status.success(), "diagnose failed: {}", String::from_utf8_lossy(&st.stderr));
        (std::fs::read(weights).unwrap(), std::fs::read(csv).unwrap())
    };
    let a = run("a", &[]);
    let b = run("b", &[]);
    let c = run("c", &["--sequential"]);
    let same_weights = a.0 == b.0 && a.0 == c.0;
    let same_csv = a.1 == b.1 && a.1 == c.1;
    Outcome {
        pass: same_weights && same_csv,
        detail: format!(
            "weight files ({} bytes) identical: {}; CSV ({} bytes) identical: {} (two runs plus a sequential run)",
            a.0.len(),
            same_weights,
            a.1.len(),
            same_csv
        ),
    }
}

fn main() -> ExitCode {
    let secs = Duration::from_secs;
    let results = [
        check("conv/Toeplitz equivalence", secs(10), conv_toeplitz_equivalence),
        check("closed-form affine piece vs recursive forward", secs(30), closed_form_oracle),
        check("filter norm bound certification", secs(30), filter_bound_certification),
        check("convergent fixture (alpha=2, s=1, q=1, d_res=16, depth 400)", secs(120), convergent_fixture),
        check("divergent controls", secs(120), divergent_controls),
        check("productBound <= exp(S1) on every fixture", secs(60), proof_chain),
        check("finite-difference Jacobian vs accumulated A", secs(60), jacobian_check),
        check("determinism of weight files and CSV", secs(120), determinism),
    ];
    let failed = results.iter().filter(|&&p| !p).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
