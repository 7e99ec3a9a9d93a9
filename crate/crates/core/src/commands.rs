//! The work behind each `cfr` subcommand, kept free of argument parsing so
//! tests and other front ends can call it directly.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use walkdir::WalkDir;

use crate::data::{load_dataset, predict, train_test_split, Dataset};
use crate::error::{CfrError, Result};
use crate::memetic::{run, MaConfig, RunResult};
use crate::model::ContinuedFraction;
use crate::reference::{make_gamma_dataset, GammaDatasetSpec};
use crate::report::{
    median, medians, performance_profiles, write_medians, write_profiles, write_rows, ErrorTable, MedianRow,
    ProfileCurve, ResultRow,
};

pub const EXIT_INPUT: i32 = 2;
pub const EXIT_PARTIAL: i32 = 3;
pub const MAX_GAMMA_DEPTH: usize = 12;

/// The split RNG runs on its own ChaCha stream so that changing the split
/// never shifts the search's random numbers.
const SPLIT_STREAM: u64 = 1;

#[derive(Clone, Debug)]
pub struct DataOptions {
    pub target_column: String,
    pub train_fraction: f64,
    pub delimiter: Option<u8>,
}

impl Default for DataOptions {
    fn default() -> Self {
        Self { target_column: "target".into(), train_fraction: 0.75, delimiter: None }
    }
}

pub fn split_for_seed(ds: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SPLIT_STREAM);
    train_test_split(ds, train_fraction, &mut rng)
}

pub fn result_row(dataset: &str, run_index: usize, config: &MaConfig, res: &RunResult) -> ResultRow {
    ResultRow {
        dataset: dataset.to_string(),
        run_index,
        seed: res.seed,
        config_hash: config.fingerprint(),
        train_mse: res.train.mse,
        test_mse: res.test.mse,
        train_nmse: res.train.nmse,
        test_nmse: res.test.nmse,
        n_vars_used: res.train.n_vars_used,
        depth: config.depth,
        wall_seconds: res.wall_seconds,
        generations: config.generations,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).map_err(|e| CfrError::Load { path: path.to_path_buf(), message: e.to_string() })?;
    Ok(BufWriter::new(f))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CfrError::Load { path: dir.to_path_buf(), message: e.to_string() })
}

#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub row: ResultRow,
    pub model: ContinuedFraction,
    pub formula: String,
    pub model_path: PathBuf,
}

/// One seeded run. Writes `model.cfr`, `formula.txt` and `result.tsv` into `out`.
pub fn cmd_train(dataset: &Path, data: &DataOptions, config: &MaConfig, out: &Path) -> Result<TrainOutput> {
    let ds = load_dataset(dataset, &data.target_column, data.delimiter)?;
    let (train, test) = split_for_seed(&ds, data.train_fraction, config.seed)?;
    let res = run(&train, &test, config)?;
    let row = result_row(ds.source_name(), 0, config, &res);

    ensure_dir(out)?;
    let model_path = out.join("model.cfr");
    let formula = res.best.render(Some(ds.feature_names()));
    fs::write(&model_path, res.best.to_text())?;
    fs::write(out.join("formula.txt"), format!("{formula}\n"))?;
    let mut w = create(&out.join("result.tsv"))?;
    write_rows(&mut w, std::slice::from_ref(&row))?;
    w.flush()?;
    Ok(TrainOutput { row, model: res.best, formula, model_path })
}

/// Expands directories into the dataset files they contain, sorted by path.
pub fn collect_datasets(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let is_data = |p: &Path| {
        let name = p.file_name().map(|n| n.to_string_lossy().to_string()).unwrap_or_default();
        [".tsv", ".csv", ".tsv.gz", ".csv.gz", ".txt"].iter().any(|e| name.ends_with(e))
    };
    let mut files = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let mut found: Vec<PathBuf> = WalkDir::new(input)
                .into_iter()
                .filter_map(|e| e.ok())
                .filter(|e| e.file_type().is_file() && is_data(e.path()))
                .map(|e| e.into_path())
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(input.clone());
        }
    }
    if files.is_empty() {
        return Err(CfrError::invalid("no dataset files found"));
    }
    Ok(files)
}

#[derive(Clone, Debug, Default)]
pub struct BenchmarkOutput {
    pub rows: Vec<ResultRow>,
    pub medians: Vec<MedianRow>,
    /// Datasets that failed to load or run, with the reason.
    pub failures: Vec<(PathBuf, String)>,
}

/// `runs` runs per dataset with seeds `config.seed + i`, each on a fresh
/// split. Writes `results.tsv` and `medians.tsv` into `out`. Failing datasets
/// are skipped and listed in the output.
pub fn cmd_benchmark(
    inputs: &[PathBuf],
    data: &DataOptions,
    config: &MaConfig,
    runs: usize,
    jobs: Option<usize>,
    out: &Path,
) -> Result<BenchmarkOutput> {
    if runs == 0 {
        return Err(CfrError::invalid("runs must be at least 1"));
    }
    config.validate()?;
    let files = collect_datasets(inputs)?;
    let mut output = BenchmarkOutput::default();
    let mut loaded = Vec::new();
    for f in files {
        match load_dataset(&f, &data.target_column, data.delimiter) {
            Ok(ds) => loaded.push((f, ds)),
            Err(e) => output.failures.push((f, e.to_string())),
        }
    }

    let tasks: Vec<(usize, usize)> = (0..loaded.len()).flat_map(|d| (0..runs).map(move |i| (d, i))).collect();
    let work = || {
        tasks
            .par_iter()
            .map(|&(d, i)| {
                let ds = &loaded[d].1;
                let cfg = MaConfig { seed: config.seed.wrapping_add(i as u64), ..config.clone() };
                let (train, test) = split_for_seed(ds, data.train_fraction, cfg.seed)?;
                let res = run(&train, &test, &cfg)?;
                Ok(result_row(ds.source_name(), i, &cfg, &res))
            })
            .collect::<Vec<Result<ResultRow>>>()
    };
    let results = match jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CfrError::invalid(format!("cannot start {n} workers: {e}")))?
            .install(work),
        None => work(),
    };

    let mut results = results.into_iter();
    for (path, _) in &loaded {
        let chunk: Vec<Result<ResultRow>> = results.by_ref().take(runs).collect();
        match chunk.into_iter().collect::<Result<Vec<_>>>() {
            Ok(rows) => output.rows.extend(rows),
            Err(e) => output.failures.push((path.clone(), e.to_string())),
        }
    }
    output.medians = medians(&output.rows);

    ensure_dir(out)?;
    let mut w = create(&out.join("results.tsv"))?;
    write_rows(&mut w, &output.rows)?;
    w.flush()?;
    let mut w = create(&out.join("medians.tsv"))?;
    write_medians(&mut w, &output.medians)?;
    w.flush()?;
    Ok(output)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DepthSummary {
    pub depth: usize,
    pub runs: usize,
    pub median_train_mse: f64,
    pub best_train_mse: f64,
}

#[derive(Clone, Debug)]
pub struct GammaDemoOutput {
    pub rows: Vec<ResultRow>,
    pub depths: Vec<DepthSummary>,
    /// Lowest-training-MSE model for each depth.
    pub best_models: Vec<ContinuedFraction>,
    pub dataset: Dataset,
}

/// Fits the Gamma function on its full 873-point grid for each depth.
///
/// Writes `gamma_runs.tsv` (every run), `gamma_depths.tsv` (median training
/// MSE per depth) and `gamma_values.tsv` (x, Gamma(x) and the best model's
/// prediction per depth; values near poles are written unclipped).
pub fn cmd_gamma_demo(
    depths: &[usize],
    runs: usize,
    config: &MaConfig,
    jobs: Option<usize>,
    out: &Path,
    write_dataset: bool,
) -> Result<GammaDemoOutput> {
    if depths.is_empty() || runs == 0 {
        return Err(CfrError::invalid("need at least one depth and one run"));
    }
    if let Some(&d) = depths.iter().find(|&&d| d > MAX_GAMMA_DEPTH) {
        return Err(CfrError::invalid(format!("depth {d} outside 0..={MAX_GAMMA_DEPTH}")));
    }
    config.validate()?;
    let ds = make_gamma_dataset(&GammaDatasetSpec::default())?;

    let tasks: Vec<(usize, usize)> = depths.iter().flat_map(|&d| (0..runs).map(move |i| (d, i))).collect();
    let work = || {
        tasks
            .par_iter()
            .map(|&(depth, i)| {
                let cfg = MaConfig { depth, seed: config.seed.wrapping_add(i as u64), ..config.clone() };
                run(&ds, &ds, &cfg).map(|r| (result_row("gamma", i, &cfg, &r), r.best))
            })
            .collect::<Result<Vec<_>>>()
    };
    let results = match jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CfrError::invalid(format!("cannot start {n} workers: {e}")))?
            .install(work)?,
        None => work()?,
    };

    let mut summaries = Vec::new();
    let mut best_models = Vec::new();
    for (k, &depth) in depths.iter().enumerate() {
        let group = &results[k * runs..(k + 1) * runs];
        let mses: Vec<f64> = group.iter().map(|(r, _)| r.train_mse).collect();
        let (best_row, best_model) =
            group.iter().min_by(|a, b| a.0.train_mse.total_cmp(&b.0.train_mse)).expect("runs >= 1");
        summaries.push(DepthSummary {
            depth,
            runs,
            median_train_mse: median(&mses).unwrap_or(f64::NAN),
            best_train_mse: best_row.train_mse,
        });
        best_models.push(best_model.clone());
    }
    let rows: Vec<ResultRow> = results.into_iter().map(|(r, _)| r).collect();

    ensure_dir(out)?;
    let mut w = create(&out.join("gamma_runs.tsv"))?;
    write_rows(&mut w, &rows)?;
    w.flush()?;

    let mut w = create(&out.join("gamma_depths.tsv"))?;
    writeln!(w, "depth\truns\tmedian_train_mse\tbest_train_mse")?;
    for s in &summaries {
        writeln!(w, "{}\t{}\t{:?}\t{:?}", s.depth, s.runs, s.median_train_mse, s.best_train_mse)?;
    }
    w.flush()?;

    let predictions: Vec<Vec<f64>> = best_models.iter().map(|m| predict(m, &ds)).collect();
    let mut w = create(&out.join("gamma_values.tsv"))?;
    write!(w, "x\tgamma")?;
    for d in depths {
        write!(w, "\tdepth_{d}")?;
    }
    writeln!(w)?;
    for (i, row) in ds.rows().enumerate() {
        write!(w, "{:?}\t{:?}", row[1], ds.targets()[i])?;
        for p in &predictions {
            write!(w, "\t{:?}", p[i])?;
        }
        writeln!(w)?;
    }
    w.flush()?;

    if write_dataset {
        let mut w = create(&out.join("gamma.tsv"))?;
        ds.write_tsv(&mut w, "target")?;
        w.flush()?;
    }
    Ok(GammaDemoOutput { rows, depths: summaries, best_models, dataset: ds })
}

/// Reads an algorithm-by-dataset error table and writes the profile curves
/// to `out`, or returns them only when `out` is `None`.
pub fn cmd_profile(table: &Path, out: Option<&Path>) -> Result<Vec<ProfileCurve>> {
    let f = File::open(table).map_err(|e| CfrError::Load { path: table.to_path_buf(), message: e.to_string() })?;
    let curves = performance_profiles(&ErrorTable::read(BufReader::new(f))?)?;
    if let Some(out) = out {
        let mut w = create(out)?;
        write_profiles(&mut w, &curves)?;
        w.flush()?;
    }
    Ok(curves)
}

/// Formula for a saved model, plain or LaTeX.
pub fn cmd_render(model: &Path, latex: bool, names: Option<&[String]>) -> Result<String> {
    let text = fs::read_to_string(model).map_err(|e| CfrError::Load { path: model.to_path_buf(), message: e.to_string() })?;
    let cf = ContinuedFraction::from_text(&text)?;
    if let Some(n) = names {
        if n.len() != cf.n_vars() {
            return Err(CfrError::DimensionMismatch { expected: cf.n_vars(), got: n.len() });
        }
    }
    Ok(if latex { cf.render_latex(names) } else { cf.render(names) })
}
