use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use semisparse::imageio::{self, LoadOptions, SaveOptions};
use semisparse::metrics::{default_crop, mae, psnr};
use semisparse::pipelines::{
    detail_enhance, hdr_compress, multiscale_decompose, standard_levels, stylize,
    validate_levels, EdgeThreshold, HdrOptions, ScaleLevel, StylizeOptions,
};
use semisparse::priors::{semisparsity_report_files, ReportOptions};
use semisparse::synth::{gen_ramp_steps_image, gen_signal, Layout, SignalSpec, DEFAULT_RAMP_SIGMA};
use semisparse::{smooth, Field, Shape, SolverTrace};
use serde::{Deserialize, Serialize};

use crate::args::*;
use crate::config::{pick, FileConfig};
use crate::verify;
use crate::{CliError, EXIT_NUMERICAL, EXIT_OK};

type Outcome = Result<i32, CliError>;

pub(crate) fn dispatch(cli: &Cli) -> Outcome {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let v = cli.verbose;
    match &cli.command {
        Command::Smooth(a) => cmd_smooth(a, &file, v),
        Command::Enhance(a) => cmd_enhance(a, &file),
        Command::Multiscale(a) => cmd_multiscale(a, &file),
        Command::Hdr(a) => cmd_hdr(a, &file),
        Command::Stylize(a) => cmd_stylize(a, &file),
        Command::Stats(a) => cmd_stats(a, &file),
        Command::Synth(a) => cmd_synth(a, &file),
        Command::Verify(a) => cmd_verify(a, &file),
    }
}

fn load(path: &Path) -> Result<Field, CliError> {
    imageio::load(path, &LoadOptions::default()).map_err(|e| with_path(e, path))
}

/// Integer formats are clamped to `[0, 1]`; the others are written as is.
fn save(field: &Field, path: &Path) -> Result<(), CliError> {
    let opts = SaveOptions {
        clamp: true,
        ..Default::default()
    };
    imageio::save(field, path, &opts).map_err(|e| with_path(e, path))
}

fn with_path(e: semisparse::Error, path: &Path) -> CliError {
    match CliError::from(e) {
        CliError::Io(m) if !m.contains(&*path.to_string_lossy()) => {
            CliError::Io(format!("{}: {m}", path.display()))
        }
        other => other,
    }
}

fn print_trace(trace: &SolverTrace) {
    println!("{:>5} {:>12} {:>12} {:>16} {:>9} {:>9}", "iter", "beta", "alpha", "energy", "nnz", "ms");
    for r in &trace.records {
        println!(
            "{:>5} {:>12.5e} {:>12.5e} {:>16.9e} {:>9} {:>9.1}",
            r.iteration,
            r.beta,
            r.alpha,
            r.energy,
            r.nonzeros,
            r.elapsed.as_secs_f64() * 1e3
        );
    }
}

fn cmd_smooth(a: &SmoothArgs, file: &FileConfig, verbose: u8) -> Outcome {
    let config = file.solver(&a.solver)?;
    let f = load(&a.io.input)?;
    let reference = a.reference.as_deref().map(load).transpose()?;
    let (u, trace) = smooth(&f, &config)?;
    save(&u, &a.io.output)?;
    if verbose > 0 {
        print_trace(&trace);
    }
    println!("iterations={}", trace.iterations());
    if let Some(last) = trace.last() {
        println!("beta={:.9e}", last.beta);
        println!("energy={:.9e}", last.energy);
        println!("nonzeros={}", last.nonzeros);
    }
    println!("mae_input={:.9e}", mae(&u, &f)?);
    if let Some(r) = reference {
        let crop = pick(a.crop, file.crop, default_crop(&r));
        println!("psnr={:.4}", psnr(&u, &r, crop, 1.0)?);
        println!("mae={:.9e}", mae(&u, &r)?);
    }
    Ok(EXIT_OK)
}

fn cmd_enhance(a: &EnhanceArgs, file: &FileConfig) -> Outcome {
    let config = file.solver(&a.solver)?;
    let boost = pick(a.boost, file.boost, 3.5);
    let log_domain = pick(a.log_domain, file.log_domain, true);
    let f = load(&a.io.input)?;
    let out = detail_enhance(&f, &config, boost, log_domain)?;
    save(&out, &a.io.output)?;
    println!("boost={boost}");
    println!("log_domain={log_domain}");
    Ok(EXIT_OK)
}

fn parse_levels(arg: &str) -> Result<Vec<ScaleLevel>, CliError> {
    let text = if arg.trim_start().starts_with('[') {
        arg.to_string()
    } else {
        std::fs::read_to_string(arg).map_err(|e| CliError::Io(format!("{arg}: {e}")))?
    };
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("--levels: {e}")))
}

fn cmd_multiscale(a: &MultiscaleArgs, file: &FileConfig) -> Outcome {
    let levels = match (&a.levels, &file.levels) {
        (Some(s), _) => parse_levels(s)?,
        (None, Some(l)) => l.clone(),
        (None, None) => standard_levels(),
    };
    validate_levels(&levels)?;
    let f = load(&a.io.input)?;
    let d = multiscale_decompose(&f, &levels)?;
    let gains: Vec<f64> = levels.iter().map(|l| l.gain).collect();
    let out = d.recombine(&gains)?;
    save(&out, &a.io.output)?;
    if let Some(dir) = &a.layers {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        save(&d.base, &dir.join("base.ssf"))?;
        for (i, detail) in d.details.iter().enumerate() {
            save(detail, &dir.join(format!("detail_{i}.ssf")))?;
        }
    }
    println!("levels={}", levels.len());
    Ok(EXIT_OK)
}

fn cmd_hdr(a: &HdrArgs, file: &FileConfig) -> Outcome {
    let config = file.solver(&a.solver)?;
    let d = HdrOptions::default();
    let opts = HdrOptions {
        target_range: pick(a.target_range, file.target_range, d.target_range),
        saturation: pick(a.saturation, file.saturation, d.saturation),
    };
    let f = load(&a.io.input)?;
    let r = hdr_compress(&f, &config, &opts)?;
    save(&r.output, &a.io.output)?;
    println!("base_scale={:.9e}", r.scale);
    Ok(EXIT_OK)
}

fn cmd_stylize(a: &StylizeArgs, file: &FileConfig) -> Outcome {
    let config = file.solver(&a.solver)?;
    let d = StylizeOptions::default();
    let opts = StylizeOptions {
        dog_sigma: pick(a.dog_sigma, file.dog_sigma, d.dog_sigma),
        dog_k: pick(a.dog_k, file.dog_k, d.dog_k),
        edge_tau: pick(a.edge_tau, file.edge_tau, d.edge_tau),
        mode: a.mode.or(file.mode).map_or(d.mode, Into::into),
        threshold: match a.soft.or(file.soft) {
            Some(phi) => EdgeThreshold::Soft { phi },
            None => d.threshold,
        },
    };
    let f = load(&a.io.input)?;
    let out = stylize(&f, &config, &opts)?;
    save(&out, &a.io.output)?;
    Ok(EXIT_OK)
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn cmd_stats(a: &StatsArgs, file: &FileConfig) -> Outcome {
    let d = ReportOptions::default();
    let opts = ReportOptions {
        epsilon: pick(a.epsilon, file.epsilon, d.epsilon),
        bins: pick(a.bins, file.bins, d.bins),
        range: (d.range.0, pick(a.range_max, file.range_max, d.range.1)),
        normalization: a.normalization.or(file.normalization).map_or(d.normalization, Into::into),
        max_order: pick(a.max_order, file.max_order, d.max_order),
    };
    let report = semisparsity_report_files(&a.inputs, &opts, &LoadOptions::default())?;
    if report.skipped > 0 {
        eprintln!("warning: skipped {} unreadable or too small inputs", report.skipped);
    }
    match &a.output {
        Some(p) => {
            let mut out = create(p)?;
            report.write_ratio_csv(&mut out)?;
            out.flush()?;
        }
        None => report.write_ratio_csv(std::io::stdout().lock())?,
    }
    if let Some(p) = &a.histogram {
        let mut out = create(p)?;
        report.write_histogram_csv(&mut out)?;
        out.flush()?;
    }
    Ok(EXIT_OK)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ImageSpec {
    height: usize,
    width: usize,
    #[serde(default = "one")]
    channels: usize,
    layout: Layout,
    sigma: f64,
    seed: u64,
}

fn one() -> usize {
    1
}

/// Contents of a `--spec` file: a signal spec or an image spec.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum SynthSpec {
    Signal(SignalSpec),
    Image(ImageSpec),
}

impl SynthSpec {
    fn set_noise(&mut self, sigma: Option<f64>, seed: Option<u64>) {
        let (s, d) = match self {
            SynthSpec::Signal(sp) => (&mut sp.sigma, &mut sp.seed),
            SynthSpec::Image(sp) => (&mut sp.sigma, &mut sp.seed),
        };
        if let Some(v) = sigma {
            *s = v;
        }
        if let Some(v) = seed {
            *d = v;
        }
    }

    fn generate(&self) -> Result<(Field, Field), CliError> {
        Ok(match self {
            SynthSpec::Signal(sp) => gen_signal(sp)?,
            SynthSpec::Image(sp) => {
                let shape = Shape::new(sp.height, sp.width);
                gen_ramp_steps_image(shape, sp.channels, &sp.layout, sp.sigma, sp.seed)?
            }
        })
    }
}

#[derive(Serialize)]
struct Provenance<'a> {
    generator: &'static str,
    version: &'static str,
    noise: &'static str,
    preset: Option<&'static str>,
    spec: &'a SynthSpec,
    output: String,
    clean: Option<String>,
}

fn file_name(p: &Path) -> String {
    p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned())
}

fn sidecar_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_os_string();
    s.push(".json");
    PathBuf::from(s)
}

fn cmd_synth(a: &SynthArgs, file: &FileConfig) -> Outcome {
    let seed = a.seed.or(file.seed);
    let sigma = a.sigma.or(file.sigma);
    let (mut spec, preset) = match &a.spec {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
            let spec: SynthSpec = serde_json::from_str(&text)
                .map_err(|e| CliError::Usage(format!("{}: not a signal or image spec: {e}", p.display())))?;
            (spec, None)
        }
        None => match a.preset.unwrap_or(PresetArg::RampSteps) {
            PresetArg::RampSteps => {
                let h = pick(a.height, file.height, 256);
                let w = pick(a.width, file.width, 256);
                let spec = SynthSpec::Image(ImageSpec {
                    height: h,
                    width: w,
                    channels: pick(a.channels, file.channels, 1),
                    layout: Layout::ramp_steps(Shape::new(h, w)),
                    sigma: DEFAULT_RAMP_SIGMA,
                    seed: 0,
                });
                (spec, Some("ramp-steps"))
            }
            PresetArg::Mixed => {
                let n = pick(a.length, file.length, 512);
                (SynthSpec::Signal(SignalSpec::mixed(n, 0.05, 0)?), Some("mixed"))
            }
            PresetArg::Step => {
                let n = pick(a.length, file.length, 10);
                (SynthSpec::Signal(SignalSpec::step(n, 0.2, 0.8, 0.05, 0)), Some("step"))
            }
        },
    };
    spec.set_noise(sigma, seed);
    let (noisy, clean) = spec.generate()?;
    save(&noisy, &a.output)?;
    if let Some(p) = &a.clean {
        save(&clean, p)?;
    }
    let prov = Provenance {
        generator: "semisparse synth",
        version: env!("CARGO_PKG_VERSION"),
        noise: "ChaCha8Rng::seed_from_u64(seed), Box-Muller pairs, planar sample order",
        preset,
        spec: &spec,
        output: file_name(&a.output),
        clean: a.clean.as_deref().map(file_name),
    };
    let mut side = create(&sidecar_path(&a.output))?;
    serde_json::to_writer_pretty(&mut side, &prov).map_err(|e| CliError::Io(e.to_string()))?;
    writeln!(side)?;
    side.flush()?;
    Ok(EXIT_OK)
}

fn report(ok: bool, line: String, failed: &mut usize) {
    println!("{} {line}", if ok { "PASS" } else { "FAIL" });
    if !ok {
        *failed += 1;
    }
}

fn cmd_verify(a: &VerifyArgs, file: &FileConfig) -> Outcome {
    let seed = pick(a.seed, file.seed, 1);
    let instances = pick(a.instances, file.instances, 30);
    let mut failed = 0;

    let d = verify::dense_solve(instances, seed)?;
    report(
        d.worst <= 1e-8,
        format!("dense-solve instances={} worst_rel={:.3e} (limit 1e-8)", d.instances, d.worst),
        &mut failed,
    );

    let w = verify::w_step_grid();
    report(
        w.mismatches == 0,
        format!("w-step cases={} ties={} mismatches={}", w.cases, w.ties, w.mismatches),
        &mut failed,
    );

    let cfg = semisparse::SolverConfig::new(0.02, 0.1).with_order(1).with_pad(0);
    let e = verify::support_enum(20, seed, &cfg)?;
    report(
        e.worst <= 1.1,
        format!(
            "support-enum instances={} worst_ratio={:.4} (limit 1.1, order 1)",
            e.ratios.len(),
            e.worst
        ),
        &mut failed,
    );

    let b = verify::block_descent(20, seed)?;
    report(
        b.worst_increase <= 1e-10,
        format!(
            "block-descent runs={} pairs={} worst_rel_increase={:.3e} (limit 1e-10)",
            b.runs, b.pairs, b.worst_increase
        ),
        &mut failed,
    );

    if failed > 0 {
        eprintln!("verify: {failed} check(s) failed");
        return Ok(EXIT_NUMERICAL);
    }
    Ok(EXIT_OK)
}
