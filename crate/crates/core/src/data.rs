//! Datasets, CSV ingestion, standardization, splitting and synthetic
//! corruption generators.
//!
//! Every seeded routine draws from [`ChaCha8Rng`] seeded with
//! `seed_from_u64`, so outputs are bit-reproducible across platforms.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Name of the label column in CSV files.
pub const LABEL_COLUMN: &str = "label";

/// Standard deviations below this are replaced by 1.0.
pub const STD_FLOOR: f64 = 1e-12;

pub(crate) fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Feature matrix (row-major, one row per instance) with binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    n_features: usize,
    labels: Vec<u8>,
}

impl Dataset {
    /// Builds a dataset from a row-major feature buffer.
    pub fn new(features: Vec<f64>, n_features: usize, labels: Vec<u8>) -> Result<Self> {
        if features.len() != labels.len() * n_features {
            return Err(Error::LengthMismatch {
                expected: labels.len() * n_features,
                found: features.len(),
            });
        }
        if let Some(row) = labels.iter().position(|&y| y > 1) {
            return Err(Error::InvalidLabel {
                row,
                value: f64::from(labels[row]),
            });
        }
        if let Some(pos) = features.iter().position(|x| !x.is_finite()) {
            let row = pos.checked_div(n_features).unwrap_or(0);
            let col = pos.checked_rem(n_features).unwrap_or(0);
            return Err(Error::NonFinite(format!(
                "feature at row {row}, column {col}"
            )));
        }
        Ok(Self {
            features,
            n_features,
            labels,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<u8>) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.len() != labels.len() {
            return Err(Error::LengthMismatch {
                expected: rows.len(),
                found: labels.len(),
            });
        }
        let mut features = Vec::with_capacity(rows.len() * d);
        for row in rows {
            if row.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: row.len(),
                });
            }
            features.extend_from_slice(row);
        }
        Self::new(features, d, labels)
    }

    /// Number of instances.
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    /// Iterates over `(features, label)` pairs.
    pub fn iter(&self) -> impl Iterator<Item = (&[f64], u8)> + '_ {
        (0..self.len()).map(move |i| (self.row(i), self.labels[i]))
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// `(positives, negatives)`
    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.labels.iter().filter(|&&y| y == 1).count();
        (pos, self.len() - pos)
    }

    /// Copies the given rows, in the given order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.n_features);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Dataset {
            features,
            n_features: self.n_features,
            labels,
        }
    }
}

/// Per-feature mean and (floored) population standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizerStats {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

/// Fractions of a random partition plus the seed of its permutation.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitSpec {
    fractions: Vec<f64>,
    seed: u64,
}

impl SplitSpec {
    pub fn new(fractions: Vec<f64>, seed: u64) -> Result<Self> {
        if fractions.is_empty() {
            return Err(Error::invalid("split needs at least one fraction"));
        }
        if let Some(f) = fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
            return Err(Error::invalid(format!("split fraction {f} outside (0, 1]")));
        }
        let total: f64 = fractions.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "split fractions sum to {total}, not 1"
            )));
        }
        Ok(Self { fractions, seed })
    }

    /// Fractions proportional to the given part sizes, e.g. `[469, 50, 50]`.
    pub fn from_counts(counts: &[usize], seed: u64) -> Result<Self> {
        let total: usize = counts.iter().sum();
        if total == 0 || counts.contains(&0) {
            return Err(Error::invalid("split counts must all be positive"));
        }
        let fractions = counts.iter().map(|&c| c as f64 / total as f64).collect();
        Self::new(fractions, seed)
    }

    pub fn fractions(&self) -> &[f64] {
        &self.fractions
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Part sizes for `n` instances: floor of `fraction * n`, then the
    /// remainder goes one at a time to the parts with the largest fractional
    /// parts (lowest index first on ties).
    pub fn part_sizes(&self, n: usize) -> Vec<usize> {
        let raw: Vec<f64> = self.fractions.iter().map(|f| f * n as f64).collect();
        // The slack absorbs products like (469/569) * 569 = 468.99999999999994.
        let mut sizes: Vec<usize> = raw
            .iter()
            .map(|r| ((r + 1e-9).floor() as usize).min(n))
            .collect();
        let mut order: Vec<usize> = (0..sizes.len()).collect();
        order.sort_by(|&a, &b| {
            let fa = raw[a] - sizes[a] as f64;
            let fb = raw[b] - sizes[b] as f64;
            fb.total_cmp(&fa).then(a.cmp(&b))
        });
        let mut assigned: usize = sizes.iter().sum();
        let mut k = 0;
        while assigned < n {
            sizes[order[k % order.len()]] += 1;
            assigned += 1;
            k += 1;
        }
        while assigned > n {
            let largest = (0..sizes.len())
                .max_by_key(|&i| (sizes[i], usize::MAX - i))
                .unwrap();
            sizes[largest] -= 1;
            assigned -= 1;
        }
        sizes
    }
}

fn parse_error(path: &Path, line: u64, column: &str, value: &str, expected: &'static str) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        column: column.to_string(),
        value: value.to_string(),
        expected,
    }
}

/// Reads a headed CSV file with a `label` column; every other column is a
/// feature, kept in header order.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let csv_err = |e: csv::Error| Error::Csv {
        path: path.to_path_buf(),
        line: e.position().map_or(0, |p| p.line()),
        message: e.to_string(),
    };

    let header = reader.headers().map_err(csv_err)?.clone();
    let label_idx = header
        .iter()
        .position(|h| h == LABEL_COLUMN)
        .ok_or_else(|| Error::MissingColumn {
            path: path.to_path_buf(),
            column: LABEL_COLUMN,
        })?;
    let width = header.len();
    let n_features = width - 1;

    let mut features = Vec::new();
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != width {
            return Err(Error::RaggedRow {
                path: path.to_path_buf(),
                line,
                expected: width,
                found: record.len(),
            });
        }
        for (j, cell) in record.iter().enumerate() {
            if j == label_idx {
                let label = match cell.parse::<f64>() {
                    Ok(0.0) => 0,
                    Ok(1.0) => 1,
                    _ => return Err(parse_error(path, line, &header[j], cell, "a 0/1 label")),
                };
                labels.push(label);
            } else {
                match cell.parse::<f64>() {
                    Ok(v) if v.is_finite() => features.push(v),
                    _ => return Err(parse_error(path, line, &header[j], cell, "a finite real")),
                }
            }
        }
    }
    if labels.is_empty() {
        return Err(Error::NoInstances(path.to_path_buf()));
    }
    Dataset::new(features, n_features, labels)
}

/// Writes `f1,…,fd,label` with shortest round-trip float formatting.
pub fn write_csv(path: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    let path = path.as_ref();
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
    let mut header: Vec<String> = (1..=data.n_features()).map(|j| format!("f{j}")).collect();
    header.push(LABEL_COLUMN.to_string());
    writeln!(out, "{}", header.join(",")).map_err(io_err)?;
    for (row, y) in data.iter() {
        for x in row {
            write!(out, "{x:?},").map_err(io_err)?;
        }
        writeln!(out, "{y}").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

pub fn standardize_fit(data: &Dataset) -> Result<StandardizerStats> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = data.len() as f64;
    let d = data.n_features();
    let mut mean = vec![0.0; d];
    for (row, _) in data.iter() {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for (row, _) in data.iter() {
        for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
            *v += (x - m) * (x - m);
        }
    }
    let scale = var
        .into_iter()
        .map(|v| {
            let sd = (v / n).sqrt();
            if sd < STD_FLOOR {
                1.0
            } else {
                sd
            }
        })
        .collect();
    Ok(StandardizerStats { mean, scale })
}

pub fn standardize_apply(data: &Dataset, stats: &StandardizerStats) -> Result<Dataset> {
    let d = data.n_features();
    for len in [stats.mean.len(), stats.scale.len()] {
        if len != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: len,
            });
        }
    }
    if let Some(s) = stats.scale.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
        return Err(Error::invalid(format!(
            "standardizer scale {s} is not positive"
        )));
    }
    let features = data
        .iter()
        .flat_map(|(row, _)| {
            row.iter()
                .zip(&stats.mean)
                .zip(&stats.scale)
                .map(|((x, m), s)| (x - m) / s)
        })
        .collect();
    Dataset::new(features, d, data.labels.clone())
}

/// Appends a trailing constant-1 feature, giving the linear score an intercept.
pub fn append_bias(data: &Dataset) -> Dataset {
    let d = data.n_features();
    let mut features = Vec::with_capacity(data.len() * (d + 1));
    for (row, _) in data.iter() {
        features.extend_from_slice(row);
        features.push(1.0);
    }
    Dataset {
        features,
        n_features: d + 1,
        labels: data.labels.clone(),
    }
}

/// Shuffled index partition of `0..n` following `spec`.
pub fn split_indices(n: usize, spec: &SplitSpec) -> Result<Vec<Vec<usize>>> {
    let parts = spec.fractions().len();
    if n < parts {
        return Err(Error::invalid(format!(
            "cannot split {n} instances into {parts} parts"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng_from_seed(spec.seed()));
    let mut out = Vec::with_capacity(parts);
    let mut start = 0;
    for size in spec.part_sizes(n) {
        out.push(perm[start..start + size].to_vec());
        start += size;
    }
    Ok(out)
}

pub fn split(data: &Dataset, spec: &SplitSpec) -> Result<Vec<Dataset>> {
    Ok(split_indices(data.len(), spec)?
        .iter()
        .map(|idx| data.select(idx))
        .collect())
}

/// Flips the labels of `k` distinct uniformly chosen instances. Returns the
/// corrupted dataset and the flipped indices in ascending order.
pub fn flip_labels(data: &Dataset, k: usize, seed: u64) -> Result<(Dataset, Vec<usize>)> {
    let n = data.len();
    if k > n {
        return Err(Error::invalid(format!("cannot flip {k} of {n} labels")));
    }
    let mut flipped = index::sample(&mut rng_from_seed(seed), n, k).into_vec();
    flipped.sort_unstable();
    let mut out = data.clone();
    for &i in &flipped {
        out.labels[i] = 1 - out.labels[i];
    }
    Ok((out, flipped))
}

/// Downsamples one class so that `#pos / #neg` matches `pos_to_neg_ratio`
/// up to rounding. Kept instances stay in their original order.
pub fn subsample_by_class(data: &Dataset, pos_to_neg_ratio: f64, seed: u64) -> Result<Dataset> {
    if !(pos_to_neg_ratio > 0.0 && pos_to_neg_ratio.is_finite()) {
        return Err(Error::invalid(format!(
            "class ratio {pos_to_neg_ratio} must be positive and finite"
        )));
    }
    let (pos_idx, neg_idx): (Vec<usize>, Vec<usize>) =
        (0..data.len()).partition(|&i| data.labels[i] == 1);
    if pos_idx.is_empty() {
        return Err(Error::MissingClass("positive"));
    }
    if neg_idx.is_empty() {
        return Err(Error::MissingClass("negative"));
    }
    let (pos, neg) = (pos_idx.len() as f64, neg_idx.len() as f64);
    let mut rng = rng_from_seed(seed);
    let (keep_pos, keep_neg) = if pos / neg > pos_to_neg_ratio {
        let target = (pos_to_neg_ratio * neg).round() as usize;
        (pick(&pos_idx, target, &mut rng), neg_idx)
    } else {
        let target = (pos / pos_to_neg_ratio).round() as usize;
        (pos_idx, pick(&neg_idx, target, &mut rng))
    };
    if keep_pos.is_empty() || keep_neg.is_empty() {
        return Err(Error::invalid(format!(
            "ratio {pos_to_neg_ratio} unattainable from {pos} positives and {neg} negatives"
        )));
    }
    let mut keep: Vec<usize> = keep_pos.into_iter().chain(keep_neg).collect();
    keep.sort_unstable();
    Ok(data.select(&keep))
}

fn pick(from: &[usize], k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    index::sample(rng, from.len(), k.min(from.len()))
        .into_iter()
        .map(|i| from[i])
        .collect()
}

/// Two isotropic unit-variance Gaussian classes centred at `±separation / 2`
/// on the first axis. Positives come first.
pub fn make_gaussian_blobs(
    n: usize,
    d: usize,
    separation: f64,
    pos_fraction: f64,
    seed: u64,
) -> Result<Dataset> {
    if n < 2 || d < 1 {
        return Err(Error::invalid(format!(
            "blobs need n >= 2 and d >= 1 (got n={n}, d={d})"
        )));
    }
    if !separation.is_finite() || separation < 0.0 {
        return Err(Error::invalid(format!(
            "separation {separation} must be finite and >= 0"
        )));
    }
    if !(pos_fraction > 0.0 && pos_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "positive fraction {pos_fraction} outside (0, 1)"
        )));
    }
    let n_pos = (n as f64 * pos_fraction).round() as usize;
    if n_pos == 0 || n_pos == n {
        return Err(Error::invalid(format!(
            "positive fraction {pos_fraction} leaves a class empty at n={n}"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let mut features = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let y = u8::from(i < n_pos);
        let shift = if y == 1 {
            separation / 2.0
        } else {
            -separation / 2.0
        };
        for j in 0..d {
            let z: f64 = StandardNormal.sample(&mut rng);
            features.push(if j == 0 { z + shift } else { z });
        }
        labels.push(y);
    }
    Dataset::new(features, d, labels)
}
