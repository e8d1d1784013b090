use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use resnet_lab::activation::{explicit_eval, trace_forward, PatternTrace};
use resnet_lab::conv::{conv_mc_direct, toeplitz_mc};
use resnet_lab::diagnostics::{diagnose_with, DiagnoseOptions, Tolerances};
use resnet_lab::generator::{generate_with, GeneratorConfig};
use resnet_lab::io::{load_weights, save_weights};
use resnet_lab::manifest::{manifest_path, ManifestBuilder};
use resnet_lab::model::{forward_resnet, pad_input, DenseNetWeights, Weights};
use resnet_lab::rng::Stream;
use resnet_lab::tensor::{global_average_pool, vec_stack, ImageStack};
use resnet_lab::{Error, Exec};

const EXIT_BAD_INPUT: u8 = 2;
const EXIT_BAD_WEIGHTS: u8 = 3;
const EXIT_INVARIANT: u8 = 4;

#[derive(Parser)]
#[command(name = "resnet-lab", version, about = "Generate, verify and diagnose residual networks")]
struct Cli {
    /// Run every loop on the current thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a weight file from a generator config.
    Gen(GenArgs),
    /// Check the conv/matrix and closed-form/recursive equivalences.
    Verify(VerifyArgs),
    /// Norm partial sums, product bound, tail test and verdict.
    Diagnose(DiagnoseArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    weights: PathBuf,
    #[arg(long, default_value_t = 50)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-10)]
    tolerance: f64,
    /// Write the activation pattern of every trial input as JSON.
    #[arg(long)]
    trace_out: Option<PathBuf>,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[arg(long)]
    weights: PathBuf,
    /// Norm index in [1, inf]; `inf` is accepted.
    #[arg(long, default_value = "1", value_parser = parse_p)]
    p: f64,
    /// `a,b,c` or `start:stop[:step]` (stop inclusive); default all blocks.
    #[arg(long, value_parser = parse_depths)]
    depths: Option<Depths>,
    #[arg(long, default_value_t = 64)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_csv: PathBuf,
    /// Full JSON report; defaults to the CSV path with a `.report.json` extension.
    #[arg(long)]
    out_json: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-8)]
    tolerance_cauchy: f64,
    #[arg(long, default_value_t = 1e-6)]
    tolerance_tail: f64,
}

#[derive(Clone, Debug)]
struct Depths(Vec<usize>);

fn parse_p(s: &str) -> Result<f64, String> {
    let p = match s.trim().to_ascii_lowercase().as_str() {
        "inf" | "infinity" | "∞" => f64::INFINITY,
        t => t.parse::<f64>().map_err(|e| format!("{s}: {e}"))?,
    };
    if p.is_nan() || p < 1.0 {
        return Err(format!("p must lie in [1, inf], got {s}"));
    }
    Ok(p)
}

fn parse_depths(s: &str) -> Result<Depths, String> {
    let num = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("{t:?}: {e}"));
    if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        let (start, stop, step) = match parts.as_slice() {
            [a, b] => (num(a)?, num(b)?, 1),
            [a, b, c] => (num(a)?, num(b)?, num(c)?),
            _ => return Err(format!("expected start:stop[:step], got {s}")),
        };
        if step == 0 || stop < start {
            return Err(format!("empty or invalid range {s}"));
        }
        Ok(Depths((start..=stop).step_by(step).collect()))
    } else {
        Ok(Depths(s.split(',').map(num).collect::<Result<_, _>>()?))
    }
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl std::fmt::Display) -> Self {
        Failure {
            code,
            message: message.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let exec = if cli.sequential { Exec::Sequential } else { Exec::default() };
    let args: Vec<String> = std::env::args().collect();
    let result = match cli.command {
        Command::Gen(a) => cmd_gen(a, exec, args),
        Command::Verify(a) => cmd_verify(a, exec),
        Command::Diagnose(a) => cmd_diagnose(a, exec, args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn load(path: &Path) -> Result<Weights, Failure> {
    load_weights(path).map_err(|e| Failure::new(EXIT_BAD_WEIGHTS, format!("{}: {e}", path.display())))
}

fn write_out(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::new(EXIT_BAD_INPUT, format!("{}: {e}", path.display())))
}

fn cmd_gen(a: GenArgs, exec: Exec, args: Vec<String>) -> Result<(), Failure> {
    let text = std::fs::read_to_string(&a.config)
        .map_err(|e| Failure::new(EXIT_BAD_INPUT, format!("{}: {e}", a.config.display())))?;
    let cfg = GeneratorConfig::from_json(&text)
        .map_err(|e| Failure::new(EXIT_BAD_INPUT, format!("{}: {e}", a.config.display())))?;
    let weights = generate_with(&cfg, exec).map_err(|e| match e {
        Error::DegenerateDraw { .. } => Failure::new(EXIT_INVARIANT, e),
        _ => Failure::new(EXIT_BAD_INPUT, e),
    })?;
    let mut manifest = ManifestBuilder::start("gen", args).config_path(&a.config).seed(cfg.seed);
    save_weights(&weights, &a.out).map_err(|e| Failure::new(EXIT_BAD_INPUT, format!("{}: {e}", a.out.display())))?;
    manifest.output(&a.out);
    let mpath = manifest_path(&a.out);
    manifest
        .finish()
        .save(&mpath)
        .map_err(|e| Failure::new(EXIT_BAD_INPUT, format!("{}: {e}", mpath.display())))?;
    println!("wrote {} ({} blocks)", a.out.display(), weights.spec().n + 1);
    Ok(())
}

#[derive(Serialize)]
struct TraceRecord {
    input: Vec<f64>,
    trace: PatternTrace,
}

struct Suite {
    name: &'static str,
    cases: usize,
    max_dev: f64,
}

fn max_dev(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn verify_suites(w: &Weights, dense: &DenseNetWeights, trials: usize, seed: u64, exec: Exec) -> resnet_lab::Result<Vec<Suite>> {
    let n = dense.n();
    let d_res = dense.d_res();
    let mut suites = Vec::new();

    let devs = exec.try_map(trials, |i| -> resnet_lab::Result<f64> {
        let x = Stream::new(seed, i as u64).unit_vec(d_res);
        let explicit = explicit_eval(dense, &x, n)?;
        let recursive = dense.forward_network(&x, n as isize)?;
        Ok(max_dev(&explicit, &recursive))
    })?;
    suites.push(Suite {
        name: "explicit-vs-recursive",
        cases: trials,
        max_dev: devs.into_iter().fold(0.0, f64::max),
    });

    match w {
        Weights::Matrix(net) => {
            let d_in = net.spec.d_in;
            let devs = exec.try_map(trials, |i| -> resnet_lab::Result<f64> {
                let x = Stream::new(seed, (trials + i) as u64).unit_vec(d_in);
                let direct = net.forward(&x)?;
                let h = dense.forward_network(&pad_input(&x, d_res), n as isize)?;
                Ok(max_dev(&direct, &net.output.apply(&h)?))
            })?;
            suites.push(Suite {
                name: "sampling-embedding",
                cases: trials,
                max_dev: devs.into_iter().fold(0.0, f64::max),
            });
        }
        Weights::Conv(net) => {
            let d = net.d();
            let c_in = net.spec.c[0][0];
            let c_res = net.spec.residual_units();
            let devs = exec.try_map(trials, |i| -> resnet_lab::Result<f64> {
                let v = Stream::new(seed, (trials + i) as u64).unit_vec(d * d * c_in);
                let x = ImageStack::from_vec_stack(&v, d, c_in)?;
                let features = vec_stack(&net.forward_features(&x)?);
                let lowered = dense.forward_network(&pad_input(&v, d_res), n as isize)?;
                let out_conv = forward_resnet(net, &x)?;
                let out_mat = net.output.apply(&global_average_pool(&lowered, d, c_res)?)?;
                Ok(max_dev(&features, &lowered).max(max_dev(&out_conv, &out_mat)))
            })?;
            suites.push(Suite {
                name: "conv-vs-matrix",
                cases: trials,
                max_dev: devs.into_iter().fold(0.0, f64::max),
            });

            let layers: Vec<_> = std::iter::once(&net.sampling).chain(net.blocks.iter().flatten()).collect();
            let devs = exec.try_map(layers.len(), |i| -> resnet_lab::Result<f64> {
                let f = &layers[i].filter;
                let v = Stream::new(seed, (2 * trials + i) as u64).signed_vec(d * d * f.c_in());
                let x = ImageStack::from_vec_stack(&v, d, f.c_in())?;
                let direct = vec_stack(&conv_mc_direct(&x, f)?);
                let lowered = toeplitz_mc(f, d)?.matvec(&v)?;
                Ok(max_dev(&direct, &lowered))
            })?;
            suites.push(Suite {
                name: "layer-toeplitz",
                cases: layers.len(),
                max_dev: devs.into_iter().fold(0.0, f64::max),
            });
        }
    }
    Ok(suites)
}

fn cmd_verify(a: VerifyArgs, exec: Exec) -> Result<(), Failure> {
    let w = load(&a.weights)?;
    let dense = w.dense().map_err(|e| Failure::new(EXIT_BAD_WEIGHTS, e))?;
    let suites = verify_suites(&w, &dense, a.trials, a.seed, exec).map_err(|e| Failure::new(EXIT_INVARIANT, e))?;

    if let Some(path) = &a.trace_out {
        let n = dense.n();
        let records = (0..a.trials)
            .map(|i| {
                let input = Stream::new(a.seed, i as u64).unit_vec(dense.d_res());
                let trace = trace_forward(&dense, &input, n)?;
                Ok(TraceRecord { input, trace })
            })
            .collect::<resnet_lab::Result<Vec<_>>>()
            .map_err(|e| Failure::new(EXIT_INVARIANT, e))?;
        let text = serde_json::to_string(&records).map_err(|e| Failure::new(EXIT_INVARIANT, e))? + "\n";
        write_out(path, &text)?;
    }

    let mut ok = true;
    for s in &suites {
        let pass = s.max_dev <= a.tolerance;
        ok &= pass;
        println!(
            "{:<22} cases={:<5} max_dev={:.3e} {}",
            s.name,
            s.cases,
            s.max_dev,
            if pass { "ok" } else { "FAILED" }
        );
    }
    if ok {
        Ok(())
    } else {
        Err(Failure::new(EXIT_INVARIANT, format!("deviation above tolerance {:e}", a.tolerance)))
    }
}

fn cmd_diagnose(a: DiagnoseArgs, exec: Exec, args: Vec<String>) -> Result<(), Failure> {
    let w = load(&a.weights)?;
    let opts = DiagnoseOptions {
        p: a.p,
        depths: a.depths.map(|d| d.0),
        samples: a.samples,
        seed: a.seed,
        tolerances: Tolerances {
            cauchy: a.tolerance_cauchy,
            tail: a.tolerance_tail,
            ..Tolerances::default()
        },
    };
    let mut report = diagnose_with(&w, &opts, exec).map_err(|e| match e {
        Error::InvalidConfig(_) | Error::DepthOutOfRange { .. } | Error::InvalidNormIndex(_) => Failure::new(EXIT_BAD_INPUT, e),
        _ => Failure::new(EXIT_INVARIANT, e),
    })?;

    let json_path = a.out_json.clone().unwrap_or_else(|| a.out_csv.with_extension("report.json"));
    let mpath = manifest_path(&a.out_csv);
    report.manifest = Some(mpath.display().to_string());

    let mut manifest = ManifestBuilder::start("diagnose", args).seed(a.seed);
    let mut csv = Vec::new();
    report.write_csv(&mut csv).map_err(|e| Failure::new(EXIT_INVARIANT, e))?;
    write_out(&a.out_csv, &String::from_utf8_lossy(&csv))?;
    manifest.output(&a.out_csv);
    write_out(&json_path, &report.to_json().map_err(|e| Failure::new(EXIT_INVARIANT, e))?)?;
    manifest.output(&json_path);
    manifest
        .finish()
        .save(&mpath)
        .map_err(|e| Failure::new(EXIT_BAD_INPUT, format!("{}: {e}", mpath.display())))?;

    let last = report.depths.len() - 1;
    println!(
        "depth {}: S1={:.6} S2={:.6} productBound={:.6} tail={:.3e}",
        report.depths[last], report.s1[last], report.s2[last], report.product_bound[last], report.tail[last]
    );
    let exp = |e: Option<f64>| e.map_or("-".to_string(), |v| format!("{v:.3}"));
    println!(
        "trends: S1 {:?} (beta {}), S2 {:?} (beta {}), tail {:?} (beta {})",
        report.s1_trend.trend,
        exp(report.s1_trend.exponent),
        report.s2_trend.trend,
        exp(report.s2_trend.exponent),
        report.tail_trend.trend,
        exp(report.tail_trend.exponent)
    );
    println!("verdict: {}", report.verdict);

    let violations = report.invariant_violations();
    if !violations.is_empty() {
        return Err(Failure::new(EXIT_INVARIANT, violations.join("; ")));
    }
    Ok(())
}
