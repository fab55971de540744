use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use log::info;
use serde_json::json;
use ttde::basis::{BasisFamily, GridSpec};
use ttde::compress::{Algo, CompressSpec, Ranks};
use ttde::density::DensityModel;
use ttde::estimator::{self, fit_density, SampleSet};
use ttde::io::{load_model, read_samples, save_model, write_samples, Provenance};
use ttde::metrics::{rel_l2, rel_l2_to_grid, second_moment_error};
use ttde::models::{gl1d_grid_truth, gm_grid_truth, gm_sample, langevin_sample, GlSpec, GmSpec, LangevinConfig};
use ttde::preprocess::{fit_general, GeneralFit, Marginals, Rotation};

use crate::config::{self, BenchConfig, EvalConfig, FitConfig, GenConfig, SampleConfig};
use crate::{BenchArgs, CliError, EvalArgs, FitArgs, GenArgs, SampleArgs};

fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn parse_algo(name: &str) -> Result<Algo, CliError> {
    Algo::parse(name).ok_or_else(|| CliError::Config(format!("unknown algo `{name}`")))
}

fn perfect_square(d: usize) -> Option<usize> {
    let m = (d as f64).sqrt().round() as usize;
    (m * m == d).then_some(m)
}

/// Samples from the configured law, on the law's own box.
pub fn draw(cfg: &GenConfig) -> Result<SampleSet, CliError> {
    let gl = match cfg.model.as_str() {
        "gm" => return Ok(gm_sample(&GmSpec::new(cfg.d), cfg.n, cfg.seed)?),
        "gl1d" => GlSpec::gl1d(cfg.d),
        "gl2d" => {
            let m = perfect_square(cfg.d)
                .ok_or_else(|| CliError::Config(format!("gl2d needs a square d, got {}", cfg.d)))?;
            GlSpec::gl2d(m)
        }
        other => return Err(CliError::Config(format!("unknown model `{other}`"))),
    };
    let l = &cfg.langevin;
    let lc = LangevinConfig {
        step: l.step.unwrap_or(5e-3 / gl.beta),
        burn_in: l.burn_in,
        thinning: l.thinning,
        chains: l.chains,
        seed: cfg.seed,
    };
    Ok(langevin_sample(&gl, &lc, cfg.n, gl.grid())?)
}

pub fn gen(a: GenArgs) -> Result<(), CliError> {
    let mut c: GenConfig = config::load(a.config.as_deref(), "gen")?;
    set(&mut c.model, a.model);
    set(&mut c.d, a.d);
    set(&mut c.n, a.n);
    set(&mut c.seed, a.seed);
    if a.step.is_some() {
        c.langevin.step = a.step;
    }
    let s = draw(&c)?;
    write_samples(&a.out, &s)?;
    config::write_manifest(&a.out, &config::manifest("gen", &c, c.seed))
}

/// Symmetric box `[-L, L]` with `L` the padded data extent rounded up to a
/// whole number of cells.
fn covering_box(data: &[f64], mesh: f64, pad: f64) -> Result<GridSpec, CliError> {
    if !(mesh > 0.0) || !(pad >= 0.0) {
        return Err(CliError::Config(format!("mesh {mesh} and pad {pad}")));
    }
    let extent = data.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if !extent.is_finite() {
        return Err(CliError::Numeric("non-finite sample".into()));
    }
    let cells = ((extent + pad) / mesh).ceil().max(1.0);
    Ok(GridSpec::symmetric(cells * mesh, mesh)?)
}

fn compress_spec(c: &FitConfig) -> Result<CompressSpec, CliError> {
    let algo = parse_algo(&c.algo)?;
    let mut spec = CompressSpec::new(algo, Ranks::Uniform(c.rank))
        .with_cluster_order(c.cluster_order)
        .with_seed(c.seed);
    if let Some(r) = c.rtilde {
        spec = spec.with_sketch_size(r);
    }
    Ok(spec)
}

/// Fits `data` (row-major with `d` columns) under the given settings.
pub fn fit_model(data: Vec<f64>, d: usize, c: &FitConfig) -> Result<DensityModel, CliError> {
    let grid = match c.half_width {
        Some(l) => GridSpec::symmetric(l, c.mesh)?,
        None => covering_box(&data, c.mesh, c.pad)?,
    };
    let s = SampleSet::with_uniform_box(data, d, grid)?;
    let spec = compress_spec(c)?;
    let model = match c.pca {
        Some(latent) => fit_general(
            &s,
            &GeneralFit {
                latent_dim: latent,
                n: c.nbasis,
                alpha: c.alpha,
                compress: spec,
                rotation: Rotation::Pca,
                marginals: Marginals::Kde { bandwidth: None },
                mesh: c.mesh,
                pad: c.pad,
            },
        )?,
        None => {
            let bases = vec![BasisFamily::fourier(c.nbasis, grid.hi)?; d];
            fit_density(&s, &bases, c.alpha, &spec)?
        }
    };
    Ok(model)
}

pub fn fit(a: FitArgs) -> Result<(), CliError> {
    let mut c: FitConfig = config::load(a.config.as_deref(), "fit")?;
    set(&mut c.algo, a.algo);
    set(&mut c.rank, a.rank);
    set(&mut c.nbasis, a.nbasis);
    set(&mut c.alpha, a.alpha);
    set(&mut c.cluster_order, a.cluster_order);
    set(&mut c.seed, a.seed);
    set(&mut c.mesh, a.mesh);
    set(&mut c.pad, a.pad);
    if a.rtilde.is_some() {
        c.rtilde = a.rtilde;
    }
    if a.half_width.is_some() {
        c.half_width = a.half_width;
    }
    if a.pca.is_some() {
        c.pca = a.pca;
    }
    let (data, d) = read_samples(&a.input)?;
    let start = Instant::now();
    let model = fit_model(data, d, &c)?;
    info!("fit {} in {:.3} s", c.algo, start.elapsed().as_secs_f64());
    let m = config::manifest("fit", &c, c.seed);
    let prov = Provenance {
        config_hash: m.config_hash.clone(),
        seed: c.seed,
    };
    save_model(&a.out, &model, &prov)?;
    config::write_manifest(&a.out, &m)
}

pub fn sample(a: SampleArgs) -> Result<(), CliError> {
    let mut c: SampleConfig = config::load(a.config.as_deref(), "sample")?;
    set(&mut c.count, a.count);
    set(&mut c.seed, a.seed);
    let (model, _) = load_model(&a.model)?;
    let (s, diag) = model.conditional_sample(c.count, c.seed)?;
    info!("clipped mass per sample {:.3e}", diag.clipped_per_sample());
    write_samples(&a.out, &s)?;
    config::write_manifest(&a.out, &config::manifest("sample", &c, c.seed))
}

/// The half-width and mesh shared by every dimension of `model`, if any.
fn shared_symmetric_box(model: &DensityModel) -> Option<(f64, f64)> {
    let g = model.dims().first()?.grid;
    let tol = 1e-9 * g.hi.abs().max(1.0);
    let same = model.dims().iter().all(|x| x.grid == g);
    (same && model.pca().is_none() && (g.lo + g.hi).abs() < tol).then_some((g.hi, g.mesh))
}

/// Relative L² error against the exact law on the model's own box.
fn truth_error(model: &DensityModel, truth: &str) -> Result<f64, CliError> {
    let (l, mesh) = shared_symmetric_box(model).ok_or_else(|| {
        CliError::Config("an exact truth needs a model on one symmetric box without PCA".into())
    })?;
    let grid_truth = match truth {
        "gm" => {
            let mut gm = GmSpec::new(model.d());
            gm.half_width = l;
            gm.mesh = mesh;
            gm_grid_truth(&gm)?
        }
        "gl1d" => {
            let mut gl = GlSpec::gl1d(model.d());
            gl.half_width = l;
            gl.mesh = mesh;
            gl1d_grid_truth(&gl)?
        }
        other => return Err(CliError::Config(format!("unknown truth `{other}`"))),
    };
    Ok(rel_l2_to_grid(model, &grid_truth)?)
}

pub fn evaluate(model: &DensityModel, c: &EvalConfig, reference: Option<&Path>) -> Result<f64, CliError> {
    match (c.metric.as_str(), c.truth.as_deref(), reference) {
        ("rel-l2", Some(t), None) => truth_error(model, t),
        ("rel-l2", None, Some(p)) => Ok(rel_l2(model, &load_model(p)?.0)?),
        ("rel-l2", _, _) => Err(CliError::Config("rel-l2 takes exactly one of --truth and --reference".into())),
        ("second-moment", None, Some(p)) => {
            let (data, d) = read_samples(p)?;
            let r = SampleSet::with_bounding_box(data, d, 1.0, 1.0)?;
            let (x, _) = model.conditional_sample(c.count, c.seed)?;
            Ok(second_moment_error(&x, &r)?)
        }
        ("second-moment", _, _) => Err(CliError::Config("second-moment takes --reference samples only".into())),
        (other, _, _) => Err(CliError::Config(format!("unknown metric `{other}`"))),
    }
}

pub fn eval(a: EvalArgs) -> Result<(), CliError> {
    let mut c: EvalConfig = config::load(a.config.as_deref(), "eval")?;
    set(&mut c.metric, a.metric);
    set(&mut c.count, a.count);
    set(&mut c.seed, a.seed);
    if a.truth.is_some() {
        c.truth = a.truth;
    }
    let (model, prov) = load_model(&a.model)?;
    let value = evaluate(&model, &c, a.reference.as_deref())?;
    let hash = config::config_hash("eval", &c);
    let line = json!({
        "metric": c.metric,
        "value": value,
        "config_hash": hash,
        "seed": c.seed,
        "model_config_hash": prov.config_hash,
    })
    .to_string();
    match &a.out {
        Some(p) => {
            std::fs::write(p, line + "\n").map_err(|e| io_err(p, e))?;
            config::write_manifest(p, &config::manifest("eval", &c, c.seed))?;
        }
        None => println!("{line}"),
    }
    if let Some(p) = &a.csv {
        let fresh = !p.exists();
        let mut f = OpenOptions::new().create(true).append(true).open(p).map_err(|e| io_err(p, e))?;
        let nbasis = model.dims().first().map_or(0, |x| x.basis.n());
        let rank = model.coeff().ranks().iter().copied().max().unwrap_or(1);
        let mut text = String::new();
        if fresh {
            text.push_str("d,nbasis,rank,metric,value\n");
        }
        text.push_str(&format!("{},{nbasis},{rank},{},{value:e}\n", model.d(), c.metric));
        f.write_all(text.as_bytes()).map_err(|e| io_err(p, e))?;
    }
    Ok(())
}

/// One timed compression of a fresh GM sample; returns wall seconds.
fn time_fit(algo: Algo, c: &BenchConfig, d: usize, n: usize, seed: u64) -> Result<f64, CliError> {
    let gm = GmSpec::new(d);
    let s = gm_sample(&gm, n, seed)?;
    let bases = vec![BasisFamily::fourier(c.nbasis, gm.half_width)?; d];
    let spec = CompressSpec::new(algo, Ranks::Uniform(c.rank)).with_seed(seed);
    let start = Instant::now();
    estimator::fit(&s, &bases, c.alpha, &spec)?;
    Ok(start.elapsed().as_secs_f64())
}

/// Rows `(param, wall_seconds, algo)`; each time is the fastest of `reps`.
pub fn bench_rows(c: &BenchConfig) -> Result<Vec<(usize, f64, &'static str)>, CliError> {
    if c.reps == 0 || c.values.is_empty() || c.algos.is_empty() {
        return Err(CliError::Config("bench needs values, algos and reps > 0".into()));
    }
    let algos: Vec<Algo> = c.algos.iter().map(|a| parse_algo(a)).collect::<Result<_, _>>()?;
    let mut rows = Vec::new();
    for &v in &c.values {
        let (d, n) = match c.sweep.as_str() {
            "n" => (c.d, v),
            "d" => (v, c.n),
            other => return Err(CliError::Config(format!("unknown sweep `{other}`"))),
        };
        for &algo in &algos {
            let mut best = f64::INFINITY;
            for rep in 0..c.reps {
                best = best.min(time_fit(algo, c, d, n, c.seed + rep as u64)?);
            }
            info!("{} {}={v}: {best:.4} s", algo.name(), c.sweep);
            rows.push((v, best, algo.name()));
        }
    }
    Ok(rows)
}

pub fn bench(a: BenchArgs) -> Result<(), CliError> {
    let mut c: BenchConfig = config::load(a.config.as_deref(), "bench")?;
    set(&mut c.sweep, a.sweep);
    set(&mut c.values, a.values);
    set(&mut c.algos, a.algos);
    set(&mut c.d, a.d);
    set(&mut c.n, a.n);
    set(&mut c.rank, a.rank);
    set(&mut c.nbasis, a.nbasis);
    set(&mut c.alpha, a.alpha);
    set(&mut c.reps, a.reps);
    set(&mut c.seed, a.seed);
    let rows = bench_rows(&c)?;
    let mut text = format!("{},wall_seconds,algo\n", c.sweep);
    for (v, t, algo) in rows {
        text.push_str(&format!("{v},{t:e},{algo}\n"));
    }
    match &a.out {
        Some(p) => {
            std::fs::write(p, text).map_err(|e| io_err(p, e))?;
            config::write_manifest(p, &config::manifest("bench", &c, c.seed))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ttde::TtdeError;

    #[test]
    fn saved_model_evaluates_like_the_fitted_one() {
        let g = GenConfig {
            d: 3,
            n: 1500,
            seed: 2,
            ..GenConfig::default()
        };
        let s = draw(&g).unwrap();
        let c = FitConfig {
            nbasis: 9,
            rtilde: Some(50),
            ..FitConfig::default()
        };
        let model = fit_model(s.data().to_vec(), 3, &c).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.tttn");
        save_model(&p, &model, &Provenance::default()).unwrap();
        let back = load_model(&p).unwrap().0;
        let e = EvalConfig {
            truth: Some("gm".into()),
            ..EvalConfig::default()
        };
        let (a, b) = (evaluate(&model, &e, None).unwrap(), evaluate(&back, &e, None).unwrap());
        assert!((a - b).abs() <= 1e-12 * a.abs());
        let sm = EvalConfig {
            metric: "second-moment".into(),
            count: 500,
            ..EvalConfig::default()
        };
        let data = dir.path().join("x.ttde");
        write_samples(&data, &s).unwrap();
        let (a, b) = (
            evaluate(&model, &sm, Some(&data)).unwrap(),
            evaluate(&back, &sm, Some(&data)).unwrap(),
        );
        assert!((a - b).abs() <= 1e-12 * a.abs());
    }

    #[test]
    fn covering_box_snaps_to_the_mesh() {
        let g = covering_box(&[0.33, -1.42, 0.9], 0.1, 0.1).unwrap();
        assert!((g.hi - 1.6).abs() < 1e-12 && (g.lo + 1.6).abs() < 1e-12);
        assert!(covering_box(&[0.1], 0.0, 0.1).is_err());
    }

    #[test]
    fn ttde_errors_map_to_exit_classes() {
        let c: CliError = TtdeError::Format("bad magic".into()).into();
        let n: CliError = TtdeError::Numerical("svd".into()).into();
        let m: CliError = TtdeError::MemoryCap { entries: 10, cap: 1 }.into();
        assert_eq!((c.exit_code(), n.exit_code(), m.exit_code()), (2, 3, 3));
    }
}
