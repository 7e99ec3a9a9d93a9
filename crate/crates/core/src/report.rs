//! Result rows, per-dataset medians and performance profiles, all read and
//! written as tab-separated text with a header line.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use crate::error::{CfrError, Result};

pub const RESULT_HEADER: [&str; 12] = [
    "dataset",
    "run_index",
    "seed",
    "config_hash",
    "train_mse",
    "test_mse",
    "train_nmse",
    "test_nmse",
    "n_vars_used",
    "depth",
    "wall_seconds",
    "generations",
];

/// One training run.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub dataset: String,
    pub run_index: usize,
    pub seed: u64,
    pub config_hash: String,
    pub train_mse: f64,
    pub test_mse: f64,
    pub train_nmse: f64,
    pub test_nmse: f64,
    pub n_vars_used: usize,
    pub depth: usize,
    pub wall_seconds: f64,
    pub generations: usize,
}

impl ResultRow {
    fn cells(&self) -> Vec<String> {
        vec![
            self.dataset.clone(),
            self.run_index.to_string(),
            self.seed.to_string(),
            self.config_hash.clone(),
            format!("{:?}", self.train_mse),
            format!("{:?}", self.test_mse),
            format!("{:?}", self.train_nmse),
            format!("{:?}", self.test_nmse),
            self.n_vars_used.to_string(),
            self.depth.to_string(),
            format!("{:.3}", self.wall_seconds),
            self.generations.to_string(),
        ]
    }
}

pub fn write_rows<W: Write>(mut out: W, rows: &[ResultRow]) -> Result<()> {
    writeln!(out, "{}", RESULT_HEADER.join("\t"))?;
    for r in rows {
        writeln!(out, "{}", r.cells().join("\t"))?;
    }
    Ok(())
}

pub fn read_rows<R: BufRead>(input: R) -> Result<Vec<ResultRow>> {
    let mut rows = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let c: Vec<&str> = line.split('\t').collect();
        if c.len() != RESULT_HEADER.len() {
            return Err(parse_err(i, 1, format!("expected {} columns, found {}", RESULT_HEADER.len(), c.len())));
        }
        let num = |col: usize| -> Result<f64> {
            c[col].parse().map_err(|_| parse_err(i, col + 1, format!("bad number {:?}", c[col])))
        };
        let int = |col: usize| -> Result<u64> {
            c[col].parse().map_err(|_| parse_err(i, col + 1, format!("bad integer {:?}", c[col])))
        };
        rows.push(ResultRow {
            dataset: c[0].to_string(),
            run_index: int(1)? as usize,
            seed: int(2)?,
            config_hash: c[3].to_string(),
            train_mse: num(4)?,
            test_mse: num(5)?,
            train_nmse: num(6)?,
            test_nmse: num(7)?,
            n_vars_used: int(8)? as usize,
            depth: int(9)? as usize,
            wall_seconds: num(10)?,
            generations: int(11)? as usize,
        });
    }
    Ok(rows)
}

fn parse_err(line_index: usize, column: usize, message: String) -> CfrError {
    CfrError::Parse { line: line_index + 1, column, message }
}

/// Middle order statistic; the mean of the two middle values for even counts.
/// `None` for an empty slice. NaN sorts last.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 })
}

#[derive(Clone, Debug, PartialEq)]
pub struct MedianRow {
    pub dataset: String,
    pub runs: usize,
    pub train_mse: f64,
    pub test_mse: f64,
    pub train_nmse: f64,
    pub test_nmse: f64,
}

/// One median row per dataset, in order of first appearance.
pub fn medians(rows: &[ResultRow]) -> Vec<MedianRow> {
    let mut order: Vec<&str> = Vec::new();
    let mut groups: BTreeMap<&str, Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        let g = groups.entry(&r.dataset).or_default();
        if g.is_empty() {
            order.push(&r.dataset);
        }
        g.push(r);
    }
    order
        .into_iter()
        .map(|name| {
            let g = &groups[name];
            let m = |f: fn(&ResultRow) -> f64| median(&g.iter().map(|r| f(r)).collect::<Vec<_>>()).unwrap_or(f64::NAN);
            MedianRow {
                dataset: name.to_string(),
                runs: g.len(),
                train_mse: m(|r| r.train_mse),
                test_mse: m(|r| r.test_mse),
                train_nmse: m(|r| r.train_nmse),
                test_nmse: m(|r| r.test_nmse),
            }
        })
        .collect()
}

pub fn write_medians<W: Write>(mut out: W, rows: &[MedianRow]) -> Result<()> {
    writeln!(out, "dataset\truns\tmedian_train_mse\tmedian_test_mse\tmedian_train_nmse\tmedian_test_nmse")?;
    for m in rows {
        writeln!(
            out,
            "{}\t{}\t{:?}\t{:?}\t{:?}\t{:?}",
            m.dataset, m.runs, m.train_mse, m.test_mse, m.train_nmse, m.test_nmse
        )?;
    }
    Ok(())
}

/// Mean error of each algorithm on each dataset.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ErrorTable {
    pub algorithms: Vec<String>,
    pub datasets: Vec<String>,
    /// `errors[a][d]`; `None` marks a missing cell.
    pub errors: Vec<Vec<Option<f64>>>,
}

impl ErrorTable {
    /// Reads a wide table: header `algorithm<TAB>dataset...`, then one row per
    /// algorithm. Empty, `NA` or `-` cells are missing.
    pub fn read<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines().enumerate().filter(|(_, l)| l.as_ref().map_or(true, |l| !l.trim().is_empty()));
        let Some((_, header)) = lines.next() else {
            return Err(CfrError::invalid("error table is empty"));
        };
        let header = header?;
        let datasets: Vec<String> = header.split('\t').skip(1).map(|s| s.trim().to_string()).collect();
        if datasets.is_empty() {
            return Err(CfrError::invalid("error table has no dataset columns"));
        }
        let mut table = ErrorTable { datasets, ..Default::default() };
        for (i, line) in lines {
            let line = line?;
            let mut cells = line.split('\t');
            let name = cells.next().unwrap_or_default().trim().to_string();
            let mut row = Vec::with_capacity(table.datasets.len());
            for d in 0..table.datasets.len() {
                let cell = cells.next().map(str::trim).unwrap_or("");
                row.push(match cell {
                    "" | "NA" | "-" => None,
                    s => Some(s.parse().map_err(|_| parse_err(i, d + 2, format!("bad number {s:?}")))?),
                });
            }
            if cells.next().is_some() {
                return Err(parse_err(i, table.datasets.len() + 2, "more cells than header columns".into()));
            }
            table.algorithms.push(name);
            table.errors.push(row);
        }
        if table.algorithms.is_empty() {
            return Err(CfrError::invalid("error table has no algorithm rows"));
        }
        Ok(table)
    }
}

/// Performance profile of one algorithm: the fraction `y` of datasets on
/// which it is within `x` percent of the best error.
#[derive(Clone, Debug, PartialEq)]
pub struct ProfileCurve {
    pub algorithm: String,
    /// Sorted by `x`; one point per distinct ratio.
    pub points: Vec<(f64, f64)>,
}

impl ProfileCurve {
    /// Step-function value at `x`.
    pub fn y_at(&self, x: f64) -> f64 {
        self.points.iter().take_while(|p| p.0 <= x).last().map_or(0.0, |p| p.1)
    }
}

/// Builds one curve per algorithm with `tau = 100 (err - best) / best`.
pub fn performance_profiles(table: &ErrorTable) -> Result<Vec<ProfileCurve>> {
    let nd = table.datasets.len();
    let mut best = vec![f64::INFINITY; nd];
    for (a, row) in table.algorithms.iter().zip(&table.errors) {
        for (d, cell) in row.iter().enumerate() {
            let e = cell.ok_or_else(|| {
                CfrError::invalid(format!("missing error for algorithm {a:?} on dataset {:?}", table.datasets[d]))
            })?;
            best[d] = best[d].min(e);
        }
    }
    if let Some(d) = best.iter().position(|&b| !(b > 0.0)) {
        return Err(CfrError::invalid(format!(
            "best error on dataset {:?} is {}; profiles need positive errors",
            table.datasets[d], best[d]
        )));
    }
    Ok(table
        .algorithms
        .iter()
        .zip(&table.errors)
        .map(|(a, row)| {
            let mut taus: Vec<f64> = row.iter().zip(&best).map(|(e, b)| 100.0 * (e.unwrap() - b) / b).collect();
            taus.sort_by(f64::total_cmp);
            let mut points: Vec<(f64, f64)> = Vec::new();
            for (i, &t) in taus.iter().enumerate() {
                let y = (i + 1) as f64 / nd as f64;
                match points.last_mut() {
                    Some(p) if p.0 == t => p.1 = y,
                    _ => points.push((t, y)),
                }
            }
            ProfileCurve { algorithm: a.clone(), points }
        })
        .collect())
}

pub fn write_profiles<W: Write>(mut out: W, curves: &[ProfileCurve]) -> Result<()> {
    writeln!(out, "algorithm\tx\ty")?;
    for c in curves {
        for (x, y) in &c.points {
            writeln!(out, "{}\t{:?}\t{:?}", c.algorithm, x, y)?;
        }
    }
    Ok(())
}

pub fn read_profiles<R: BufRead>(input: R) -> Result<Vec<ProfileCurve>> {
    let mut curves: Vec<ProfileCurve> = Vec::new();
    for (i, line) in input.lines().enumerate().skip(1) {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let c: Vec<&str> = line.split('\t').collect();
        if c.len() != 3 {
            return Err(parse_err(i, 1, format!("expected 3 columns, found {}", c.len())));
        }
        let x: f64 = c[1].parse().map_err(|_| parse_err(i, 2, format!("bad number {:?}", c[1])))?;
        let y: f64 = c[2].parse().map_err(|_| parse_err(i, 3, format!("bad number {:?}", c[2])))?;
        match curves.last_mut() {
            Some(cur) if cur.algorithm == c[0] => cur.points.push((x, y)),
            _ => curves.push(ProfileCurve { algorithm: c[0].to_string(), points: vec![(x, y)] }),
        }
    }
    Ok(curves)
}
