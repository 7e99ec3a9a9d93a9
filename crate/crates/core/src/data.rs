//! Datasets, splitting, and the MSE family of scores.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use rand::seq::index;
use rand::Rng;

use crate::error::{CfrError, Result};
use crate::model::ContinuedFraction;

/// A regression dataset held as a dense row-major feature matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    n_cols: usize,
    targets: Vec<f64>,
    feature_names: Vec<String>,
    source_name: String,
}

impl Dataset {
    pub fn new(
        rows: Vec<Vec<f64>>,
        targets: Vec<f64>,
        feature_names: Vec<String>,
        source_name: impl Into<String>,
    ) -> Result<Self> {
        let n_cols = feature_names.len();
        let mut features = Vec::with_capacity(rows.len() * n_cols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n_cols {
                return Err(CfrError::invalid(format!("row {i} has {} values, expected {n_cols}", row.len())));
            }
            features.extend_from_slice(row);
        }
        Self::from_flat(features, targets, feature_names, source_name)
    }

    /// Builds a dataset from a row-major matrix with `feature_names.len()` columns.
    pub fn from_flat(
        features: Vec<f64>,
        targets: Vec<f64>,
        feature_names: Vec<String>,
        source_name: impl Into<String>,
    ) -> Result<Self> {
        let n_cols = feature_names.len();
        if n_cols == 0 {
            return Err(CfrError::invalid("dataset has no feature columns"));
        }
        if targets.is_empty() {
            return Err(CfrError::invalid("dataset has no rows"));
        }
        if features.len() != targets.len() * n_cols {
            return Err(CfrError::DimensionMismatch { expected: targets.len() * n_cols, got: features.len() });
        }
        if let Some(p) = features.iter().chain(&targets).position(|v| !v.is_finite()) {
            return Err(CfrError::invalid(format!("non-finite value at flat position {p}")));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = feature_names.iter().find(|n| !seen.insert(n.as_str())) {
            return Err(CfrError::invalid(format!("duplicate feature name {dup:?}")));
        }
        Ok(Self { features, n_cols, targets, feature_names, source_name: source_name.into() })
    }

    pub fn n_rows(&self) -> usize {
        self.targets.len()
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.features.chunks_exact(self.n_cols)
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn source_name(&self) -> &str {
        &self.source_name
    }

    /// New dataset made of the given rows, in the given order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.n_cols);
        let mut targets = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            targets.push(self.targets[i]);
        }
        Dataset {
            features,
            n_cols: self.n_cols,
            targets,
            feature_names: self.feature_names.clone(),
            source_name: self.source_name.clone(),
        }
    }

    /// Writes a tab-separated file with a header and the target as the last column.
    pub fn write_tsv<W: Write>(&self, out: W, target_column: &str) -> Result<()> {
        let mut w = csv::WriterBuilder::new().delimiter(b'\t').from_writer(out);
        let mut header = self.feature_names.clone();
        header.push(target_column.to_string());
        w.write_record(&header).map_err(csv_io)?;
        for (row, y) in self.rows().zip(&self.targets) {
            let rec: Vec<String> = row.iter().chain(std::iter::once(y)).map(|v| format!("{v:?}")).collect();
            w.write_record(&rec).map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_io(e: csv::Error) -> CfrError {
    CfrError::Io(std::io::Error::other(e))
}

/// Loads a delimiter-separated file with a header row. `.gz` files are
/// decompressed on the fly. With `delimiter = None` the header decides: tab
/// if it contains one, comma otherwise.
pub fn load_dataset(path: &Path, target_column: &str, delimiter: Option<u8>) -> Result<Dataset> {
    let load_err = |message: String| CfrError::Load { path: path.to_path_buf(), message };
    let file = File::open(path).map_err(|e| load_err(e.to_string()))?;
    let raw: Box<dyn Read> = if path.extension().is_some_and(|e| e == "gz") {
        Box::new(GzDecoder::new(file))
    } else {
        Box::new(file)
    };
    let mut reader = BufReader::new(raw);
    let mut header_line = String::new();
    reader.read_line(&mut header_line).map_err(|e| load_err(e.to_string()))?;
    if header_line.trim().is_empty() {
        return Err(load_err("missing header row".into()));
    }
    let delim = delimiter.unwrap_or(if header_line.contains('\t') { b'\t' } else { b',' });

    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delim)
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(header_line.as_bytes().chain(reader));
    let headers: Vec<String> =
        rdr.headers().map_err(|e| load_err(e.to_string()))?.iter().map(str::to_string).collect();
    let target_idx = headers
        .iter()
        .position(|h| h == target_column)
        .ok_or_else(|| load_err(format!("target column {target_column:?} not found in header")))?;
    let feature_names: Vec<String> =
        headers.iter().enumerate().filter(|&(j, _)| j != target_idx).map(|(_, h)| h.clone()).collect();

    let mut features = Vec::new();
    let mut targets = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let line = r + 2;
        let rec = rec.map_err(|e| load_err(format!("row {line}: {e}")))?;
        if rec.len() == 1 && rec.get(0) == Some("") {
            continue;
        }
        if rec.len() != headers.len() {
            return Err(load_err(format!("row {line}: expected {} fields, found {}", headers.len(), rec.len())));
        }
        for (j, cell) in rec.iter().enumerate() {
            let v: f64 = cell
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| load_err(format!("row {line}, column {:?}: not a finite number: {cell:?}", headers[j])))?;
            if j == target_idx {
                targets.push(v);
            } else {
                features.push(v);
            }
        }
    }
    let source = path
        .file_name()
        .map(|n| dataset_name(&n.to_string_lossy()))
        .unwrap_or_default();
    Dataset::from_flat(features, targets, feature_names, source).map_err(|e| load_err(e.to_string()))
}

/// `foo.tsv.gz` -> `foo`.
pub fn dataset_name(file_name: &str) -> String {
    let mut s = file_name;
    for ext in [".gz", ".tsv", ".csv", ".txt"] {
        if let Some(stripped) = s.strip_suffix(ext) {
            s = stripped;
        }
    }
    s.to_string()
}

/// Rows in the train part for a split of `n` rows: `ceil(f * n)`, capped at
/// `n - 1` so the test part is never empty.
pub fn train_size(n: usize, train_fraction: f64) -> usize {
    ((train_fraction * n as f64).ceil() as usize).clamp(1, n - 1)
}

/// Random partition into train and test parts.
pub fn train_test_split<R: Rng + ?Sized>(ds: &Dataset, train_fraction: f64, rng: &mut R) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(CfrError::invalid(format!("train fraction must be in (0, 1), got {train_fraction}")));
    }
    let n = ds.n_rows();
    if n < 2 {
        return Err(CfrError::invalid("need at least two rows to split"));
    }
    let perm = index::sample(rng, n, n).into_vec();
    let k = train_size(n, train_fraction);
    Ok((ds.select(&perm[..k]), ds.select(&perm[k..])))
}

/// `ceil(fraction * n)` rows drawn uniformly without replacement.
pub fn subsample<R: Rng + ?Sized>(ds: &Dataset, fraction: f64, rng: &mut R) -> Dataset {
    assert!(fraction > 0.0 && fraction <= 1.0, "subsample fraction must be in (0, 1]");
    let n = ds.n_rows();
    let k = ((fraction * n as f64).ceil() as usize).clamp(1, n);
    let mut idx = index::sample(rng, n, k).into_vec();
    idx.sort_unstable();
    ds.select(&idx)
}

/// Mean squared error. Any non-finite prediction makes the score `+inf`.
pub fn mse(y: &[f64], yhat: &[f64]) -> Result<f64> {
    if y.len() != yhat.len() {
        return Err(CfrError::DimensionMismatch { expected: y.len(), got: yhat.len() });
    }
    if y.is_empty() {
        return Err(CfrError::invalid("mse of empty vectors"));
    }
    let mut sum = 0.0;
    for (a, b) in y.iter().zip(yhat) {
        if !b.is_finite() {
            return Ok(f64::INFINITY);
        }
        sum += (a - b) * (a - b);
    }
    Ok(sum / y.len() as f64)
}

/// Sample variance with the `n - 1` denominator.
pub fn variance(y: &[f64]) -> Result<f64> {
    if y.len() < 2 {
        return Err(CfrError::invalid("variance needs at least two values"));
    }
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    Ok(y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0))
}

/// MSE normalised by the target variance.
pub fn nmse(y: &[f64], yhat: &[f64]) -> Result<f64> {
    let var = variance(y)?;
    if var <= 0.0 {
        return Err(CfrError::DegenerateTarget);
    }
    Ok(mse(y, yhat)? / var)
}

/// `mse * (1 + delta * n_vars_used)`.
pub fn adjusted_mse(mse_value: f64, n_vars_used: usize, delta: f64) -> f64 {
    mse_value * (1.0 + delta * n_vars_used as f64)
}

/// Predictions for every row; non-finite outcomes become NaN.
pub fn predict(cf: &ContinuedFraction, ds: &Dataset) -> Vec<f64> {
    ds.rows().map(|x| cf.eval_unchecked(x).unwrap_or(f64::NAN)).collect()
}

/// The guiding function: adjusted MSE of `cf` on `ds`, `+inf` if any
/// prediction is non-finite.
pub fn guiding(cf: &ContinuedFraction, ds: &Dataset, delta: f64) -> f64 {
    let mut sum = 0.0;
    for (x, y) in ds.rows().zip(ds.targets()) {
        match cf.eval_unchecked(x) {
            Some(p) => sum += (y - p) * (y - p),
            None => return f64::INFINITY,
        }
    }
    let m = sum / ds.n_rows() as f64;
    if m.is_finite() {
        adjusted_mse(m, cf.n_used_variables(), delta)
    } else {
        f64::INFINITY
    }
}

/// Scores of one model on one dataset.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metrics {
    pub mse: f64,
    pub nmse: f64,
    pub adjusted_mse: f64,
    pub n_vars_used: usize,
}

impl Metrics {
    pub fn compute(cf: &ContinuedFraction, ds: &Dataset, delta: f64) -> Result<Self> {
        let yhat = predict(cf, ds);
        let m = mse(ds.targets(), &yhat)?;
        let n_vars_used = cf.n_used_variables();
        Ok(Self {
            mse: m,
            nmse: nmse(ds.targets(), &yhat)?,
            adjusted_mse: adjusted_mse(m, n_vars_used, delta),
            n_vars_used,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeSet;

    fn numbered(n: usize) -> Dataset {
        let rows = (0..n).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let targets = (0..n).map(|i| i as f64 * 0.5).collect();
        Dataset::new(rows, targets, vec!["a".into(), "b".into()], "numbered").unwrap()
    }

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn load_tab_and_comma_agree() {
        let dir = tempfile::tempdir().unwrap();
        let tsv = write(dir.path(), "d.tsv", "a\tb\ttarget\n1\t2\t3\n4\t5\t6\n7\t8\t9\n");
        let csv = write(dir.path(), "d.csv", "a,b,target\n1,2,3\n4,5,6\n7,8,9\n");
        let t = load_dataset(&tsv, "target", None).unwrap();
        let c = load_dataset(&csv, "target", None).unwrap();
        assert_eq!((t.n_rows(), t.n_cols()), (3, 2));
        assert_eq!(t.row(1), &[4.0, 5.0]);
        assert_eq!(t.targets(), &[3.0, 6.0, 9.0]);
        assert_eq!(t.features, c.features);
        assert_eq!(t.targets, c.targets);
        assert_eq!(t.source_name(), "d");
    }

    #[test]
    fn target_column_may_be_anywhere() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "d.csv", "y,a,b\n3,1,2\n6,4,5\n");
        let ds = load_dataset(&p, "y", None).unwrap();
        assert_eq!(ds.feature_names(), &["a".to_string(), "b".to_string()]);
        assert_eq!(ds.targets(), &[3.0, 6.0]);
    }

    #[test]
    fn load_errors() {
        let dir = tempfile::tempdir().unwrap();
        let missing = write(dir.path(), "m.csv", "a,b,c\n1,2,3\n");
        let err = load_dataset(&missing, "target", None).unwrap_err().to_string();
        assert!(err.contains("target"), "{err}");

        let text = write(dir.path(), "t.csv", "a,target\n1,2\nfoo,3\n");
        let err = load_dataset(&text, "target", None).unwrap_err().to_string();
        assert!(err.contains("row 3") && err.contains("\"a\""), "{err}");

        let ragged = write(dir.path(), "r.csv", "a,target\n1,2\n3\n");
        let err = load_dataset(&ragged, "target", None).unwrap_err().to_string();
        assert!(err.contains("row 3"), "{err}");

        assert!(load_dataset(&dir.path().join("nope.csv"), "target", None).is_err());
    }

    #[test]
    fn gz_round_trip() {
        use flate2::write::GzEncoder;
        let dir = tempfile::tempdir().unwrap();
        let ds = numbered(5);
        let p = dir.path().join("n.tsv.gz");
        let mut enc = GzEncoder::new(File::create(&p).unwrap(), flate2::Compression::default());
        ds.write_tsv(&mut enc, "target").unwrap();
        enc.finish().unwrap();
        let back = load_dataset(&p, "target", None).unwrap();
        assert_eq!(back.features, ds.features);
        assert_eq!(back.source_name(), "n");
    }

    #[test]
    fn split_sizes_and_partition() {
        let ds = numbered(100);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (tr, te) = train_test_split(&ds, 0.75, &mut rng).unwrap();
        assert_eq!((tr.n_rows(), te.n_rows()), (75, 25));
        let mut all: Vec<f64> = tr.rows().chain(te.rows()).map(|r| r[0]).collect();
        all.sort_by(f64::total_cmp);
        assert_eq!(all, (0..100).map(|i| i as f64).collect::<Vec<_>>());

        let mut rng2 = ChaCha8Rng::seed_from_u64(1);
        let (tr2, te2) = train_test_split(&ds, 0.75, &mut rng2).unwrap();
        assert_eq!(tr, tr2);
        assert_eq!(te, te2);

        assert!(train_test_split(&numbered(1), 0.75, &mut rng).is_err());
        assert!(train_test_split(&ds, 1.0, &mut rng).is_err());
        let (tr, te) = train_test_split(&numbered(2), 0.75, &mut rng).unwrap();
        assert_eq!((tr.n_rows(), te.n_rows()), (1, 1));
    }

    #[test]
    fn subsample_sizes() {
        let ds = numbered(200);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert_eq!(subsample(&ds, 0.2, &mut rng).n_rows(), 40);
        let full = subsample(&ds, 1.0, &mut rng);
        assert_eq!(full, ds);
    }

    #[test]
    fn subsample_draws_differ() {
        let ds = numbered(200);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sets: Vec<Vec<u64>> = (0..100)
            .map(|_| subsample(&ds, 0.2, &mut rng).rows().map(|r| r[0] as u64).collect())
            .collect();
        let distinct: BTreeSet<&Vec<u64>> = sets.iter().collect();
        assert_eq!(distinct.len(), 100);
    }

    #[test]
    fn mse_cases() {
        assert_eq!(mse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse(&[0.0, 0.0], &[1.0, -1.0]).unwrap(), 1.0);
        assert!((mse(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(mse(&[1.0, 2.0], &[1.0, f64::NAN]).unwrap(), f64::INFINITY);
        assert!(mse(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn nmse_cases() {
        assert_eq!(nmse(&[0.0, 2.0], &[0.0, 2.0]).unwrap(), 0.0);
        assert_eq!(nmse(&[0.0, 2.0], &[1.0, 1.0]).unwrap(), 0.5);
        let y = [1.0, 4.0, 2.0, 8.0];
        let mean = 3.75;
        assert!((nmse(&y, &[mean; 4]).unwrap() - 0.75).abs() < 1e-15);
        assert!(matches!(nmse(&[2.0, 2.0, 2.0], &[1.0, 1.0, 1.0]), Err(CfrError::DegenerateTarget)));
    }

    #[test]
    fn adjusted_mse_cases() {
        assert!((adjusted_mse(1.0, 3, 0.1) - 1.3).abs() < 1e-15);
        assert_eq!(adjusted_mse(0.7, 0, 0.1), 0.7);
        assert_eq!(adjusted_mse(0.0, 9, 0.1), 0.0);
    }

    proptest! {
        #[test]
        fn adjusted_mse_monotone_in_vars(m in 0.0f64..1e6, k in 0usize..50, delta in 1e-6f64..2.0) {
            prop_assert!(adjusted_mse(m, k + 1, delta) >= adjusted_mse(m, k, delta));
            prop_assert!(adjusted_mse(m, k, delta) >= m);
        }

        #[test]
        fn mse_non_negative(v in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..40)) {
            let (y, yhat): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
            prop_assert!(mse(&y, &yhat).unwrap() >= 0.0);
        }
    }
}
