//! The five subcommands: simulate, map, sample, gibbs, bench.

use crate::config::{FileConfig, ModelConfig};
use crate::error::{CliError, CliResult};
use crate::io;
use crate::manifest::{prepare_out_dir, Manifest};
use mlndlm::compositional::clr_from_alr_coords;
use mlndlm::{
    cu_pipeline, effective_sample_size, gibbs_chain, map_estimate, simulate, CountDataset,
    GibbsSample, ModelSpec, OptimizationResult, SimConfig,
};
use nalgebra::DMatrix;
use serde_json::json;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

fn write_err(e: std::io::Error) -> CliError {
    CliError::Io(e.to_string())
}

pub struct DataArgs<'a> {
    pub data: &'a Path,
    pub metadata: &'a Path,
    pub zero_is_missing: bool,
}

fn load_dataset(args: &DataArgs) -> CliResult<io::LoadedData> {
    let mut loaded = io::read_counts_and_metadata(args.data, args.metadata)?;
    if args.zero_is_missing {
        for t in 0..loaded.data.t_total() {
            if loaded.data.observed[t] && loaded.data.column_total(t) == 0 {
                loaded.data.observed[t] = false;
            }
        }
    }
    Ok(loaded)
}

fn validated_spec(config: &FileConfig, data: &CountDataset) -> CliResult<ModelSpec> {
    let spec = config.model_spec()?;
    let report = mlndlm::validate(&spec, data);
    if !report.is_ok() {
        return Err(CliError::Validation(report.issues.join("\n")));
    }
    Ok(spec)
}

fn write_trajectory(out_dir: &Path, result: &OptimizationResult) -> CliResult<()> {
    let mut w = io::create(&out_dir.join("trajectory.csv"))?;
    writeln!(w, "iter,objective,grad_norm,seconds").map_err(write_err)?;
    for point in &result.trajectory {
        writeln!(
            w,
            "{},{},{},{}",
            point.iter,
            io::fmt17(point.objective),
            io::fmt17(point.grad_norm),
            io::fmt17(point.seconds)
        )
        .map_err(write_err)?;
    }
    Ok(())
}

fn convergence_notes(manifest: &mut Manifest, result: &OptimizationResult) {
    manifest.note("converged", json!(result.converged));
    manifest.note("iterations", json!(result.iterations));
    if let Some(last) = result.trajectory.last() {
        manifest.note("final_objective", json!(last.objective));
        manifest.note("final_grad_norm", json!(last.grad_norm));
    }
    if let Some(d) = &result.diagnostic {
        manifest.note("diagnostic", json!(d));
    }
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

pub fn cmd_simulate(config_path: &Path, out_dir: &Path, force: bool, threads: usize) -> CliResult<()> {
    let config = FileConfig::load(config_path)?;
    let sim_section = config
        .sim
        .as_ref()
        .ok_or_else(|| CliError::Validation("config needs a [sim] section".into()))?;
    let sim_config: SimConfig = sim_section.to_config()?;
    prepare_out_dir(out_dir, force)?;

    let start = Instant::now();
    let (data, spec, truth) = simulate(&sim_config)?;
    let sim_seconds = start.elapsed().as_secs_f64();

    let categories: Vec<String> = (1..=data.d()).map(|d| format!("c{d}")).collect();
    io::write_counts(&out_dir.join("counts.csv"), &data, &categories)?;
    io::write_metadata(&out_dir.join("metadata.csv"), &data)?;
    io::write_matrix(&out_dir.join("truth_eta.csv"), &truth.eta, "d")?;

    let mut w = io::create(&out_dir.join("truth_theta.csv"))?;
    writeln!(w, "t,state,dim,value").map_err(write_err)?;
    for (t, theta) in truth.theta.iter().enumerate() {
        for q in 0..theta.nrows() {
            for d in 0..theta.ncols() {
                writeln!(
                    w,
                    "{},{},{},{}",
                    t + 1,
                    q + 1,
                    d + 1,
                    io::fmt17(theta[(q, d)])
                )
                .map_err(write_err)?;
            }
        }
    }
    drop(w);

    let mut w = io::create(&out_dir.join("truth_sigma.csv"))?;
    writeln!(w, "row,col,value").map_err(write_err)?;
    for i in 0..truth.sigma.nrows() {
        for j in 0..truth.sigma.ncols() {
            writeln!(w, "{},{},{}", i + 1, j + 1, io::fmt17(truth.sigma[(i, j)]))
                .map_err(write_err)?;
        }
    }
    drop(w);

    // The generating model doubles as the fitting prior.
    let model_toml = toml::to_string_pretty(&crate::config::FileConfig {
        model: Some(crate::config::ModelSection::Explicit(ModelConfig::from_spec(
            &spec,
        ))),
        ..Default::default()
    })
    .map_err(|e| CliError::Io(format!("model serialization: {e}")))?;
    std::fs::write(out_dir.join("model.toml"), model_toml)
        .map_err(|e| CliError::Io(e.to_string()))?;

    let mut manifest = Manifest::new("simulate", Some(sim_config.seed), threads);
    manifest.stamp_input("config", config_path)?;
    manifest.timing("simulate", sim_seconds);
    manifest.note("d", json!(sim_config.d));
    manifest.note("t_total", json!(sim_config.t_total));
    manifest.note("sparsity", json!(mlndlm::sparsity_report(&data)));
    manifest.note("n_observed", json!(data.n_observed()));
    for name in [
        "counts.csv",
        "metadata.csv",
        "truth_eta.csv",
        "truth_theta.csv",
        "truth_sigma.csv",
        "model.toml",
    ] {
        manifest.stamp_output(out_dir, name)?;
    }
    manifest.write(out_dir)
}

// ---------------------------------------------------------------------------
// map
// ---------------------------------------------------------------------------

pub fn cmd_map(
    data_args: &DataArgs,
    config_path: &Path,
    out_dir: &Path,
    force: bool,
    threads: usize,
) -> CliResult<()> {
    let config = FileConfig::load(config_path)?;
    let loaded = load_dataset(data_args)?;
    let spec = validated_spec(&config, &loaded.data)?;
    let optimizer = config.optimizer_config()?;
    prepare_out_dir(out_dir, force)?;

    let start = Instant::now();
    let result = map_estimate(&spec, &loaded.data, &optimizer)?;
    let map_seconds = start.elapsed().as_secs_f64();

    io::write_matrix(&out_dir.join("eta_hat.csv"), result.eta_hat.matrix(), "d")?;
    write_trajectory(out_dir, &result)?;

    let mut manifest = Manifest::new("map", None, threads);
    manifest.stamp_input("data", data_args.data)?;
    manifest.stamp_input("metadata", data_args.metadata)?;
    manifest.stamp_input("config", config_path)?;
    manifest.timing("map", map_seconds);
    convergence_notes(&mut manifest, &result);
    manifest.note("init_mode", json!(format!("{:?}", optimizer.init_mode)));
    manifest.stamp_output(out_dir, "eta_hat.csv")?;
    manifest.write(out_dir)?;

    if !result.converged {
        return Err(CliError::Numerical(format!(
            "optimizer did not converge: {}",
            result.diagnostic.unwrap_or_default()
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// sample
// ---------------------------------------------------------------------------

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let w = pos - lo as f64;
    sorted[lo] * (1.0 - w) + sorted[hi] * w
}

/// CLR summaries of per-draw state rows: columns (t, state, dim, mean,
/// lower, upper), intervals computed in CLR space.
fn write_theta_clr_summary<'a, I>(
    path: &Path,
    theta_draws: I,
    n_draws: usize,
    t_total: usize,
    q_dim: usize,
    p: usize,
) -> CliResult<()>
where
    I: Fn(usize, usize) -> &'a DMatrix<f64>,
{
    let d = p + 1;
    let mut w = io::create(path)?;
    writeln!(w, "t,state,dim,mean,lower,upper").map_err(write_err)?;
    let mut cells: Vec<Vec<f64>> = vec![Vec::with_capacity(n_draws); d];
    for t in 0..t_total {
        for q in 0..q_dim {
            for cell in &mut cells {
                cell.clear();
            }
            for s in 0..n_draws {
                let theta = theta_draws(s, t);
                let row: Vec<f64> = (0..p).map(|i| theta[(q, i)]).collect();
                let clr = clr_from_alr_coords(&row);
                for (dim, &v) in clr.iter().enumerate() {
                    cells[dim].push(v);
                }
            }
            for dim in 0..d {
                let mean = cells[dim].iter().sum::<f64>() / n_draws as f64;
                cells[dim].sort_by(|a, b| a.partial_cmp(b).unwrap());
                writeln!(
                    w,
                    "{},{},{},{},{},{}",
                    t + 1,
                    q + 1,
                    dim + 1,
                    io::fmt17(mean),
                    io::fmt17(quantile(&cells[dim], 0.025)),
                    io::fmt17(quantile(&cells[dim], 0.975))
                )
                .map_err(write_err)?;
            }
        }
    }
    Ok(())
}

pub fn cmd_sample(
    data_args: &DataArgs,
    config_path: &Path,
    out_dir: &Path,
    force: bool,
    threads: usize,
) -> CliResult<()> {
    let config = FileConfig::load(config_path)?;
    let loaded = load_dataset(data_args)?;
    let spec = validated_spec(&config, &loaded.data)?;
    let optimizer = config.optimizer_config()?;
    let dmdb = config.dmdb_config();
    prepare_out_dir(out_dir, force)?;

    let start = Instant::now();
    let draws = cu_pipeline(&spec, &loaded.data, &dmdb, &optimizer)?;
    let sample_seconds = start.elapsed().as_secs_f64();

    io::write_matrix(&out_dir.join("eta_hat.csv"), draws.eta_hat.matrix(), "d")?;
    write_trajectory(out_dir, &draws.map_result)?;

    // Long-format eta draws.
    let mut w = io::create(&out_dir.join("draws.csv"))?;
    writeln!(w, "draw,t,dim,value").map_err(write_err)?;
    for (s, eta) in draws.eta.iter().enumerate() {
        for t in 0..eta.ncols() {
            for dim in 0..eta.nrows() {
                writeln!(
                    w,
                    "{},{},{},{}",
                    s + 1,
                    t + 1,
                    dim + 1,
                    io::fmt17(eta[(dim, t)])
                )
                .map_err(write_err)?;
            }
        }
    }
    drop(w);

    let t_total = loaded.data.t_total();
    write_theta_clr_summary(
        &out_dir.join("summary_clr.csv"),
        |s, t| &draws.theta[s].theta[t],
        draws.eta.len(),
        t_total,
        spec.q(),
        spec.p(),
    )?;
    io::write_draw_cache(&out_dir.join("draws.bin"), &draws.eta, &draws.theta)?;

    let mut manifest = Manifest::new("sample", Some(dmdb.seed), threads);
    manifest.stamp_input("data", data_args.data)?;
    manifest.stamp_input("metadata", data_args.metadata)?;
    manifest.stamp_input("config", config_path)?;
    manifest.timing("sample", sample_seconds);
    manifest.note("num_samples", json!(dmdb.num_samples));
    convergence_notes(&mut manifest, &draws.map_result);
    for name in ["eta_hat.csv", "draws.csv", "summary_clr.csv", "draws.bin"] {
        manifest.stamp_output(out_dir, name)?;
    }
    manifest.write(out_dir)?;

    if !draws.map_result.converged {
        return Err(CliError::Numerical("MAP stage did not converge".into()));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// gibbs
// ---------------------------------------------------------------------------

pub fn cmd_gibbs(
    data_args: &DataArgs,
    config_path: &Path,
    iterations: Option<usize>,
    out_dir: &Path,
    force: bool,
    threads: usize,
) -> CliResult<()> {
    let config = FileConfig::load(config_path)?;
    let loaded = load_dataset(data_args)?;
    let spec = validated_spec(&config, &loaded.data)?;
    let prior = config.hyperprior()?;
    let gibbs_section = config.gibbs.clone().unwrap_or_default();
    let iterations = iterations
        .or(gibbs_section.iterations)
        .ok_or_else(|| CliError::Validation("gibbs needs --iterations or [gibbs].iterations".into()))?;
    let seed = gibbs_section.seed.unwrap_or(config.dmdb_config().seed);
    let options =
        gibbs_section.to_options(config.optimizer_config()?, config.dmdb_config().alpha);
    prepare_out_dir(out_dir, force)?;

    let start = Instant::now();
    let run = gibbs_chain(&spec, &loaded.data, &prior, iterations, seed, &options)?;
    let gibbs_seconds = start.elapsed().as_secs_f64();
    let samples: &[GibbsSample] = &run.samples;
    if samples.is_empty() {
        let (iter, msg) = run.failure.expect("empty run must carry a failure");
        return Err(CliError::Numerical(format!(
            "gibbs chain failed at iteration {iter} with no samples: {msg}"
        )));
    }

    // w chain.
    let q_dim = spec.q();
    let mut w = io::create(&out_dir.join("w_chain.csv"))?;
    let header: Vec<String> = std::iter::once("iter".to_string())
        .chain((1..=q_dim).map(|q| format!("w_{q}")))
        .collect();
    writeln!(w, "{}", header.join(",")).map_err(write_err)?;
    for (i, sample) in samples.iter().enumerate() {
        let mut row = vec![(i + 1).to_string()];
        for &wq in &sample.w {
            row.push(io::fmt17(wq));
        }
        writeln!(w, "{}", row.join(",")).map_err(write_err)?;
    }
    drop(w);

    let t_total = loaded.data.t_total();
    write_theta_clr_summary(
        &out_dir.join("summary_clr.csv"),
        |s, t| &samples[s].theta[t],
        samples.len(),
        t_total,
        q_dim,
        spec.p(),
    )?;

    // Sigma posterior mean over the chain.
    let p = spec.p();
    let mut sigma_mean = DMatrix::zeros(p, p);
    for sample in samples {
        sigma_mean += &sample.sigma;
    }
    sigma_mean /= samples.len() as f64;
    io::write_matrix(&out_dir.join("sigma_mean.csv"), &sigma_mean, "d")?;

    // ESS per hyperparameter, plus NEff/s from wall time.
    let mut ess_report = serde_json::Map::new();
    for q in 0..q_dim {
        let chain: Vec<f64> = samples.iter().map(|s| s.w[q]).collect();
        let entry = match effective_sample_size(&chain) {
            Ok(est) => json!({
                "ess": est.ess,
                "tau": est.tau,
                "degenerate": est.degenerate,
                "neff_per_second": est.ess / gibbs_seconds,
            }),
            Err(e) => json!({ "error": e.to_string() }),
        };
        ess_report.insert(format!("w_{}", q + 1), entry);
    }
    let ess_json = json!({
        "chain_length": samples.len(),
        "wall_seconds": gibbs_seconds,
        "parameters": ess_report,
    });
    std::fs::write(
        out_dir.join("ess.json"),
        serde_json::to_string_pretty(&ess_json).expect("serializable"),
    )
    .map_err(|e| CliError::Io(e.to_string()))?;

    let mut manifest = Manifest::new("gibbs", Some(seed), threads);
    manifest.stamp_input("data", data_args.data)?;
    manifest.stamp_input("metadata", data_args.metadata)?;
    manifest.stamp_input("config", config_path)?;
    manifest.timing("gibbs", gibbs_seconds);
    manifest.note("iterations_requested", json!(iterations));
    manifest.note("iterations_completed", json!(samples.len()));
    if let Some((iter, msg)) = &run.failure {
        manifest.note("failure", json!({ "iteration": iter, "error": msg }));
    }
    for name in ["w_chain.csv", "summary_clr.csv", "sigma_mean.csv", "ess.json"] {
        manifest.stamp_output(out_dir, name)?;
    }
    manifest.write(out_dir)?;

    if let Some((iter, msg)) = run.failure {
        return Err(CliError::Numerical(format!(
            "gibbs chain aborted at iteration {iter} (partial chain saved): {msg}"
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

pub fn cmd_bench(config_path: &Path, out_dir: &Path, force: bool, threads: usize) -> CliResult<()> {
    let config = FileConfig::load(config_path)?;
    let bench = config.bench.clone().unwrap_or_default();
    let optimizer = config.optimizer_config()?;
    prepare_out_dir(out_dir, force)?;

    let mut results = io::create(&out_dir.join("results.csv"))?;
    writeln!(results, "d,t,rep,iters,sec_per_iter,total_sec").map_err(write_err)?;
    let mut failures: Vec<String> = Vec::new();
    let mut rows: Vec<(usize, usize, Vec<(usize, f64)>)> = Vec::new();

    let start = Instant::now();
    for &d in &bench.d_values {
        for &t in &bench.t_values {
            let mut cell = Vec::new();
            for rep in 0..bench.reps {
                let mut sim = SimConfig::new(
                    d,
                    t,
                    bench
                        .seed
                        .wrapping_add((d * 1_000_003 + t * 101 + rep) as u64),
                );
                if let Some(c) = bench.counts_per_timepoint {
                    sim.counts_per_timepoint = c;
                }
                if let Some(m) = bench.missing_fraction {
                    sim.missing_fraction = m;
                }
                let outcome = (|| -> CliResult<(usize, f64)> {
                    let (data, spec, _) = simulate(&sim)?;
                    let run_start = Instant::now();
                    let result = map_estimate(&spec, &data, &optimizer)?;
                    let total = run_start.elapsed().as_secs_f64();
                    Ok((result.iterations.max(1), total))
                })();
                match outcome {
                    Ok((iters, total)) => {
                        writeln!(
                            results,
                            "{d},{t},{rep},{iters},{},{}",
                            io::fmt17(total / iters as f64),
                            io::fmt17(total)
                        )
                        .map_err(write_err)?;
                        cell.push((iters, total));
                    }
                    Err(e) => {
                        failures.push(format!("d={d},t={t},rep={rep}: {e}"));
                    }
                }
            }
            rows.push((d, t, cell));
        }
    }
    drop(results);
    let bench_seconds = start.elapsed().as_secs_f64();

    let mut summary = io::create(&out_dir.join("summary.csv"))?;
    writeln!(
        summary,
        "d,t,runs,mean_iters,mean_sec_per_iter,mean_total_sec,sd_total_sec"
    )
    .map_err(write_err)?;
    for (d, t, cell) in &rows {
        if cell.is_empty() {
            continue;
        }
        let n = cell.len() as f64;
        let mean_iters = cell.iter().map(|c| c.0 as f64).sum::<f64>() / n;
        let mean_total = cell.iter().map(|c| c.1).sum::<f64>() / n;
        let sd_total =
            (cell.iter().map(|c| (c.1 - mean_total).powi(2)).sum::<f64>() / n).sqrt();
        let mean_spi = cell.iter().map(|c| c.1 / c.0 as f64).sum::<f64>() / n;
        writeln!(
            summary,
            "{d},{t},{},{},{},{},{}",
            cell.len(),
            io::fmt17(mean_iters),
            io::fmt17(mean_spi),
            io::fmt17(mean_total),
            io::fmt17(sd_total)
        )
        .map_err(write_err)?;
    }
    drop(summary);

    if !failures.is_empty() {
        std::fs::write(out_dir.join("failures.txt"), failures.join("\n"))
            .map_err(|e| CliError::Io(e.to_string()))?;
    }

    let mut manifest = Manifest::new("bench", Some(bench.seed), threads);
    manifest.stamp_input("config", config_path)?;
    manifest.timing("bench", bench_seconds);
    manifest.note("grid_d", json!(bench.d_values));
    manifest.note("grid_t", json!(bench.t_values));
    manifest.note("reps", json!(bench.reps));
    manifest.note("failures", json!(failures.len()));
    for name in ["results.csv", "summary.csv"] {
        manifest.stamp_output(out_dir, name)?;
    }
    manifest.write(out_dir)
}
