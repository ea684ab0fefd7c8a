use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use primfit::fitters::{discard_small, em_fit, oracle_fit, ransac_hybrid, EmConfig, Inject, RansacConfig, DISCARD_FRACTION};
use primfit::gradcheck::{run_degenerate_suite, run_trials};
use primfit::io::{self, BatchEntry, BatchManifest};
use primfit::metrics::{evaluate, DEFAULT_SCALE_EDGES};
use primfit::report::{aggregate, compare, render_comparison, render_table, DatasetReport, ShapeEntry};
use primfit::synthgen::{generate_scene, stream_rng, SceneSpec};
use primfit::{Fit, PrimType, Scene};

use crate::manifest::{self, MANIFEST_NAME};
use crate::{Command, CompareArgs, EvalArgs, FitArgs, GenerateArgs, GradcheckArgs, Outcome};

pub const BATCH_NAME: &str = "batch.json";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TXT: &str = "report.txt";

/// Caps the worker pool at `PRIMFIT_THREADS` when set.
pub fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("PRIMFIT_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| anyhow!("PRIMFIT_THREADS must be a positive integer, got '{v}'"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

pub fn run(cmd: Command) -> Result<Outcome> {
    match cmd {
        Command::Generate(a) => generate(a),
        Command::Fit(a) => fit(a),
        Command::Eval(a) => eval(a),
        Command::Gradcheck(a) => gradcheck(a),
        Command::Compare(a) => compare_cmd(a),
    }
}

fn parse_k(s: &str) -> Result<(usize, usize)> {
    let parse = |x: &str| x.trim().parse::<usize>().with_context(|| format!("bad primitive count '{x}'"));
    match s.split_once("..") {
        Some((lo, hi)) => Ok((parse(lo)?, parse(hi.trim_start_matches('='))?)),
        None => {
            let k = parse(s)?;
            Ok((k, k))
        }
    }
}

fn parse_mix(s: &str) -> Result<[f64; 4]> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>().with_context(|| format!("bad type-mix entry '{x}'")))
        .collect::<Result<_>>()?;
    v.try_into().map_err(|v: Vec<f64>| anyhow!("type mix needs 4 entries, got {}", v.len()))
}

fn generate(a: GenerateArgs) -> Result<Outcome> {
    let started = manifest::wall_clock();
    let mut spec: SceneSpec = match &a.config {
        Some(p) => io::read_json(p).with_context(|| format!("reading {}", p.display()))?,
        None => SceneSpec::default(),
    };
    if let Some(v) = a.n {
        spec.n_points = v;
    }
    if let Some(v) = a.m {
        spec.m_samples = v;
    }
    if let Some(v) = a.noise {
        spec.noise_amplitude = v;
    }
    if let Some(v) = &a.k {
        spec.k_range = parse_k(v)?;
    }
    if let Some(v) = &a.mix {
        spec.type_mix = parse_mix(v)?;
    }
    if let Some(v) = a.outliers {
        spec.outlier_fraction = v;
    }
    if let Some(v) = a.min_area {
        spec.min_area_fraction = v;
    }
    spec.validate()?;
    fs::create_dir_all(&a.out)?;
    let seeds: Vec<u64> = (0..a.count).map(|i| a.seed.wrapping_add(i)).collect();
    let results: Vec<Result<PathBuf>> = seeds
        .par_iter()
        .map(|&seed| {
            let scene = generate_scene(&spec, seed)?;
            let path = a.out.join(io::scene_file_name(seed));
            io::write_scene(&path, &scene)?;
            Ok(path)
        })
        .collect();
    let mut outputs = Vec::new();
    let mut entries = Vec::new();
    for (seed, r) in seeds.iter().zip(results) {
        let path = r.with_context(|| format!("scene seed {seed}"))?;
        entries.push(BatchEntry {
            seed: *seed,
            path: io::scene_file_name(*seed),
        });
        outputs.push(path);
    }
    let batch = BatchManifest {
        schema: 1,
        spec: spec.clone(),
        scenes: entries,
    };
    let batch_path = a.out.join(BATCH_NAME);
    io::write_json(&batch_path, &batch)?;
    outputs.push(batch_path);
    let inputs: Vec<PathBuf> = a.config.iter().cloned().collect();
    manifest::write(&a.out, serde_json::to_value(&spec)?, Some(a.seed), &inputs, &outputs, started)?;
    println!("wrote {} scenes to {}", seeds.len(), a.out.display());
    Ok(Outcome::Success)
}

/// Scene (or fit) files of a directory in name order, skipping manifests.
pub fn json_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading directory {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().map(|n| n.to_string_lossy().to_string()).unwrap_or_default();
            p.is_file() && name.ends_with(".json") && !name.starts_with('.') && name != BATCH_NAME && name != MANIFEST_NAME
        })
        .collect();
    files.sort();
    Ok(files)
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct FitConfig {
    seed: u64,
    ransac: RansacConfig,
    em: EmConfig,
    discard: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Method {
    Oracle,
    Ransac,
    RansacEm,
}

impl Method {
    fn parse(s: &str) -> Result<Self> {
        match s {
            "oracle" => Ok(Method::Oracle),
            "ransac" => Ok(Method::Ransac),
            "ransac+em" => Ok(Method::RansacEm),
            other => bail!("unknown method '{other}', expected oracle, ransac or ransac+em"),
        }
    }
}

/// Seed of the RANSAC run on one scene.
fn scene_seed(run: u64, scene: u64) -> u64 {
    run ^ scene.rotate_left(32)
}

fn fit_scene(scene: &Scene, method: Method, inject: Inject, cfg: &FitConfig) -> Result<Fit> {
    if method == Method::Oracle {
        return Ok(oracle_fit(scene));
    }
    let rc = RansacConfig {
        seed: scene_seed(cfg.seed, scene.seed),
        ..cfg.ransac.clone()
    };
    let mut fit = ransac_hybrid(scene, &rc, inject)?;
    if method == Method::RansacEm && !fit.primitives.is_empty() {
        let normals = fit.normals.clone().or_else(|| scene.cloud.normals.clone());
        let label = fit.meta.method.replacen("ransac", "ransac+em", 1);
        fit = em_fit(&scene.cloud.positions, normals.as_deref(), &fit, &cfg.em)?;
        fit.meta.method = label;
        fit.meta.config = serde_json::to_value(cfg)?;
    }
    Ok(discard_small(&fit, cfg.discard.unwrap_or(DISCARD_FRACTION)))
}

fn fit(a: FitArgs) -> Result<Outcome> {
    let started = manifest::wall_clock();
    let method = Method::parse(&a.method)?;
    let inject = Inject::parse(&a.inject)?;
    if method == Method::Oracle && inject != Inject::default() {
        bail!("--inject applies to the ransac methods only");
    }
    let mut cfg: FitConfig = match &a.config {
        Some(p) => io::read_json(p).with_context(|| format!("reading {}", p.display()))?,
        None => FitConfig::default(),
    };
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    let r = &mut cfg.ransac;
    if let Some(v) = a.distance_epsilon {
        r.distance_epsilon = v;
    }
    if let Some(v) = a.normal_epsilon_deg {
        r.normal_epsilon_deg = v;
    }
    if let Some(v) = a.min_inliers {
        r.min_inliers = v;
    }
    if let Some(v) = a.candidates {
        r.max_candidates_per_round = v;
    }
    if let Some(v) = a.rounds {
        r.rounds = v;
    }
    let e = &mut cfg.em;
    if let Some(v) = a.em_iterations {
        e.iterations = v;
    }
    if a.em_soft {
        e.hard_assign = false;
    }
    if let Some(v) = a.em_temperature {
        e.temperature = v;
    }
    if let Some(v) = a.em_cap {
        e.distance_cap = (v > 0.0).then_some(v);
    }
    if let Some(v) = a.discard {
        cfg.discard = Some(v);
    }
    cfg.ransac.validate()?;
    cfg.em.validate()?;

    let files = json_files(&a.scenes)?;
    if files.is_empty() {
        bail!("no scene files in {}", a.scenes.display());
    }
    fs::create_dir_all(&a.out)?;
    let results: Vec<Result<PathBuf>> = files
        .par_iter()
        .map(|f| {
            let scene = io::read_scene(f).with_context(|| format!("reading {}", f.display()))?;
            let fit = fit_scene(&scene, method, inject, &cfg).with_context(|| format!("fitting {}", f.display()))?;
            let out = a.out.join(f.file_name().expect("file path"));
            io::write_fit(&out, &fit)?;
            Ok(out)
        })
        .collect();
    let mut outputs = Vec::new();
    let mut failed = 0;
    for r in results {
        match r {
            Ok(p) => outputs.push(p),
            Err(e) => {
                failed += 1;
                eprintln!("failed: {e:#}");
            }
        }
    }
    let mut snapshot = serde_json::to_value(&cfg)?;
    snapshot["method"] = serde_json::json!(a.method);
    snapshot["inject"] = serde_json::json!(inject.label());
    manifest::write(&a.out, snapshot, Some(cfg.seed), &files, &outputs, started)?;
    println!("fitted {} of {} scenes with {}", outputs.len(), files.len(), a.method);
    Ok(if failed == 0 { Outcome::Success } else { Outcome::Partial })
}

fn eval(a: EvalArgs) -> Result<Outcome> {
    let started = manifest::wall_clock();
    if a.eps.is_empty() || a.eps.iter().any(|e| !(*e > 0.0)) {
        bail!("coverage thresholds must be positive");
    }
    let edges = a.scale_edges.clone().unwrap_or_else(|| DEFAULT_SCALE_EDGES.to_vec());
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[0] < w[1])) {
        bail!("scale edges must be increasing with at least two entries");
    }
    let files = json_files(&a.gt)?;
    if files.is_empty() {
        bail!("no scene files in {}", a.gt.display());
    }
    let results: Vec<(String, Result<(ShapeEntry, String)>)> = files
        .par_iter()
        .map(|f| {
            let id = f.file_stem().expect("file path").to_string_lossy().to_string();
            let r = (|| {
                let pred_path = a.pred.join(f.file_name().expect("file path"));
                if !pred_path.exists() {
                    bail!("missing prediction {}", pred_path.display());
                }
                let scene = io::read_scene(f)?;
                let fit = io::read_fit(&pred_path)?;
                if fit.membership.n() != scene.n() {
                    bail!("prediction has {} rows for {} points", fit.membership.n(), scene.n());
                }
                let (metrics, scale_bins) = evaluate(&scene, &fit, &a.eps, &edges);
                Ok((
                    ShapeEntry {
                        id: id.clone(),
                        metrics,
                        scale_bins,
                    },
                    fit.meta.method,
                ))
            })();
            (id, r)
        })
        .collect();
    let mut shapes = Vec::new();
    let mut failed = BTreeMap::new();
    let mut methods = Vec::new();
    for (id, r) in results {
        match r {
            Ok((s, m)) => {
                shapes.push(s);
                methods.push(m);
            }
            Err(e) => {
                eprintln!("failed shape {id}: {e:#}");
                failed.insert(id, format!("{e:#}"));
            }
        }
    }
    let label = a.method.clone().or_else(|| methods.first().cloned()).unwrap_or_else(|| "unknown".into());
    let report = aggregate(&label, shapes, failed);
    fs::create_dir_all(&a.out)?;
    let json_path = a.out.join(REPORT_JSON);
    let txt_path = a.out.join(REPORT_TXT);
    io::write_json(&json_path, &report)?;
    let table = render_table(&[&report]);
    io::write_atomic(&txt_path, table.as_bytes())?;
    print!("{table}");
    let config = serde_json::json!({ "eps": a.eps, "scale_edges": edges, "method": label });
    let mut inputs = vec![a.pred.clone(), a.gt.clone()];
    inputs.sort();
    manifest::write(&a.out, config, None, &inputs, &[json_path, txt_path], started)?;
    Ok(if report.failed.is_empty() { Outcome::Success } else { Outcome::Partial })
}

#[derive(Serialize)]
struct GradcheckReport {
    schema: u32,
    tolerance: f64,
    trials: Vec<primfit::gradcheck::GradCheckSummary>,
    degenerate: Vec<primfit::gradcheck::DegenerateOutcome>,
    passed: bool,
}

fn gradcheck(a: GradcheckArgs) -> Result<Outcome> {
    let started = manifest::wall_clock();
    let types: Vec<PrimType> = if a.estimator == "all" {
        PrimType::ALL.to_vec()
    } else {
        vec![PrimType::ALL
            .into_iter()
            .find(|t| t.name() == a.estimator)
            .ok_or_else(|| anyhow!("unknown estimator '{}'", a.estimator))?]
    };
    if a.trials == 0 || a.points < 8 {
        bail!("need at least one trial and eight points per segment");
    }
    let trials: Vec<_> = types
        .iter()
        .map(|&t| {
            let mut rng = stream_rng(a.seed, 1 + t.index() as u64);
            run_trials(t, a.trials, a.points, a.tolerance, &mut rng)
        })
        .collect();
    let degenerate: Vec<_> = run_degenerate_suite(&mut stream_rng(a.seed, 0))
        .into_iter()
        .filter(|o| types.contains(&o.estimator))
        .collect();
    let passed = trials.iter().all(|s| s.failures == 0 && s.errors == 0) && degenerate.iter().all(|o| o.passed);
    for s in &trials {
        let ok = s.failures == 0 && s.errors == 0;
        println!(
            "{} {:<8} trials {:>4}  max rel err {:.3e}  failures {}  non-finite {}  errors {}",
            if ok { "PASS" } else { "FAIL" },
            s.estimator.name(),
            s.trials,
            s.max_relative_error,
            s.failures,
            s.non_finite,
            s.errors
        );
    }
    for o in &degenerate {
        println!(
            "{} {:<8} degenerate: {}  finite {}  trivialized {}",
            if o.passed { "PASS" } else { "FAIL" },
            o.estimator.name(),
            o.name,
            o.all_finite,
            o.trivialized
        );
    }
    if let Some(dir) = &a.out {
        let report = GradcheckReport {
            schema: 1,
            tolerance: a.tolerance,
            trials,
            degenerate,
            passed,
        };
        let path = dir.join("gradcheck.json");
        io::write_json(&path, &report)?;
        let config = serde_json::json!({ "estimator": a.estimator, "trials": a.trials, "points": a.points, "tolerance": a.tolerance });
        manifest::write(dir, config, Some(a.seed), &[], &[path], started)?;
    }
    Ok(if passed { Outcome::Success } else { Outcome::Partial })
}

fn compare_cmd(a: CompareArgs) -> Result<Outcome> {
    let started = manifest::wall_clock();
    let ra: DatasetReport = io::read_json(&a.report_a).with_context(|| format!("reading {}", a.report_a.display()))?;
    let rb: DatasetReport = io::read_json(&a.report_b).with_context(|| format!("reading {}", a.report_b.display()))?;
    let c = compare(&ra, &rb)?;
    let text = render_comparison(&c);
    print!("{text}");
    if let Some(dir) = &a.out {
        let path = dir.join("comparison.json");
        io::write_json(&path, &c)?;
        let txt = dir.join("comparison.txt");
        io::write_atomic(&txt, text.as_bytes())?;
        manifest::write(dir, serde_json::Value::Null, None, &[a.report_a.clone(), a.report_b.clone()], &[path, txt], started)?;
    }
    Ok(Outcome::Success)
}
