//! Multi-view datasets, deterministic synthetic generators, label corruption
//! models, CSV ingestion and fold splitting.
//!
//! # Randomness
//!
//! Every generator is a pure function of its parameters and a [`Seed`]. A seed
//! expands into ChaCha20 streams (`rand_chacha::ChaCha20Rng` keyed by
//! `seed_from_u64(seed)`, then `set_stream(id)`), one per purpose, so that e.g.
//! changing the noise level never shifts the sampled inputs:
//!
//! | stream | id | used for |
//! |---|---|---|
//! | [`Stream::Inputs`] | 1 | input coordinates |
//! | [`Stream::Noise`] | 2 | additive label noise |
//! | [`Stream::Corruption`] | 3 | sign-flip subsets and binary flips |
//! | [`Stream::Masking`] | 4 | label masking |
//! | [`Stream::Direction`] | 5 | random separating directions |

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{HlrError, Result};

/// One input `x = [x¹, …, xᵐ]`, split into `m` views.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiViewSample {
    pub views: Vec<Vec<f64>>,
}

impl MultiViewSample {
    pub fn new(views: Vec<Vec<f64>>) -> Self {
        MultiViewSample { views }
    }

    pub fn single(x: Vec<f64>) -> Self {
        MultiViewSample { views: vec![x] }
    }

    pub fn n_views(&self) -> usize {
        self.views.len()
    }

    pub fn view_dims(&self) -> Vec<usize> {
        self.views.iter().map(Vec::len).collect()
    }
}

/// Inputs plus (partially removable) labels.
///
/// Labels live at the leading positions `0..labels.len()`; `label_mask[i]`
/// says whether sample `i` currently carries its label. Removing a label
/// flips the mask and never reorders samples, so indices always refer to the
/// original positions.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<MultiViewSample>,
    labels: Vec<f64>,
    label_mask: Vec<bool>,
}

impl Dataset {
    /// Labels are attached to the first `labels.len()` samples.
    pub fn new(samples: Vec<MultiViewSample>, labels: Vec<f64>) -> Result<Self> {
        if labels.len() > samples.len() {
            return Err(HlrError::dimension(format!(
                "{} labels for {} samples",
                labels.len(),
                samples.len()
            )));
        }
        let mut label_mask = vec![false; samples.len()];
        label_mask[..labels.len()].fill(true);
        let ds = Dataset {
            samples,
            labels,
            label_mask,
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Builds a dataset from per-sample optional labels, keeping positions.
    pub fn from_optional_labels(
        samples: Vec<MultiViewSample>,
        labels: Vec<Option<f64>>,
    ) -> Result<Self> {
        if labels.len() != samples.len() {
            return Err(HlrError::dimension(format!(
                "{} label slots for {} samples",
                labels.len(),
                samples.len()
            )));
        }
        let prefix = labels.iter().rposition(Option::is_some).map_or(0, |p| p + 1);
        let label_mask: Vec<bool> = labels.iter().map(Option::is_some).collect();
        let values = labels[..prefix].iter().map(|l| l.unwrap_or(0.0)).collect();
        let ds = Dataset {
            samples,
            labels: values,
            label_mask,
        };
        ds.validate()?;
        Ok(ds)
    }

    fn validate(&self) -> Result<()> {
        if let Some(first) = self.samples.first() {
            let dims = first.view_dims();
            if dims.is_empty() {
                return Err(HlrError::domain("samples must have at least one view"));
            }
            for (i, s) in self.samples.iter().enumerate() {
                if s.view_dims() != dims {
                    return Err(HlrError::dimension(format!(
                        "sample {i} has view dimensions {:?}, expected {:?}",
                        s.view_dims(),
                        dims
                    )));
                }
                if s.views.iter().flatten().any(|v| !v.is_finite()) {
                    return Err(HlrError::domain(format!("sample {i} has a non-finite entry")));
                }
            }
        }
        if let Some(i) = self.labelled_indices().into_iter().find(|&i| !self.labels[i].is_finite()) {
            return Err(HlrError::domain(format!("label {i} is not finite")));
        }
        Ok(())
    }

    pub fn samples(&self) -> &[MultiViewSample] {
        &self.samples
    }

    pub fn n(&self) -> usize {
        self.samples.len()
    }

    pub fn n_views(&self) -> usize {
        self.samples.first().map_or(0, MultiViewSample::n_views)
    }

    pub fn view_dims(&self) -> Vec<usize> {
        self.samples.first().map_or_else(Vec::new, MultiViewSample::view_dims)
    }

    pub fn label_mask(&self) -> &[bool] {
        &self.label_mask
    }

    /// Number of currently retained labels.
    pub fn n_labelled(&self) -> usize {
        self.label_mask.iter().filter(|&&b| b).count()
    }

    pub fn labelled_indices(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.label_mask[i]).collect()
    }

    pub fn label(&self, i: usize) -> Option<f64> {
        if self.label_mask.get(i).copied().unwrap_or(false) {
            Some(self.labels[i])
        } else {
            None
        }
    }

    /// Per-sample labels, `None` for unlabelled positions.
    pub fn optional_labels(&self) -> Vec<Option<f64>> {
        (0..self.n()).map(|i| self.label(i)).collect()
    }

    /// Labels of the currently labelled samples, in index order.
    pub fn labelled_values(&self) -> Vec<f64> {
        self.labelled_indices().into_iter().map(|i| self.labels[i]).collect()
    }

    /// Copy of the dataset restricted to the labels selected by `mask`.
    ///
    /// `mask` may only switch labels off.
    pub fn with_label_mask(&self, mask: &[bool]) -> Result<Dataset> {
        if mask.len() != self.n() {
            return Err(HlrError::dimension(format!(
                "mask of length {} for {} samples",
                mask.len(),
                self.n()
            )));
        }
        if let Some(i) = (0..self.n()).find(|&i| mask[i] && !self.label_mask[i]) {
            return Err(HlrError::domain(format!("sample {i} has no label to retain")));
        }
        let mut ds = self.clone();
        ds.label_mask = mask.to_vec();
        Ok(ds)
    }

    /// Copy with the label at each listed index replaced.
    fn with_labels_mapped(&self, mut f: impl FnMut(usize, f64) -> f64) -> Dataset {
        let mut ds = self.clone();
        for i in self.labelled_indices() {
            ds.labels[i] = f(i, self.labels[i]);
        }
        ds
    }

    fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let samples = indices.iter().map(|&i| self.samples[i].clone()).collect();
        let labels = indices.iter().map(|&i| self.label(i)).collect();
        Dataset::from_optional_labels(samples, labels)
    }
}

/// Seed of the deterministic generators. See the module docs for the stream layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seed(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Inputs = 1,
    Noise = 2,
    Corruption = 3,
    Masking = 4,
    Direction = 5,
}

impl Seed {
    pub fn rng(self, stream: Stream) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.0);
        rng.set_stream(stream as u64);
        rng
    }

    /// Independent child seed (splitmix64 finalizer over `seed + k·φ`).
    pub fn child(self, k: u64) -> Seed {
        let mut z = self
            .0
            .wrapping_add(k.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        Seed(z ^ (z >> 31))
    }
}

/// Single-view, fully labelled data with `x ~ U[0,1]^d` and
/// `y = βᵀx + ε`, `ε ~ N(0, noise_std²)`.
pub fn gen_linear_uniform(
    n: usize,
    d: usize,
    beta: &[f64],
    noise_std: f64,
    seed: Seed,
) -> Result<Dataset> {
    if beta.len() != d {
        return Err(HlrError::dimension(format!(
            "beta has length {}, expected d = {d}",
            beta.len()
        )));
    }
    if !(noise_std >= 0.0 && noise_std.is_finite()) {
        return Err(HlrError::domain(format!("noise_std must be >= 0, got {noise_std}")));
    }
    let mut inputs = seed.rng(Stream::Inputs);
    let mut noise_rng = seed.rng(Stream::Noise);
    let noise = Normal::new(0.0, noise_std).map_err(|e| HlrError::domain(e.to_string()))?;
    let mut samples = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..d).map(|_| inputs.random::<f64>()).collect();
        let clean: f64 = x.iter().zip(beta).map(|(a, b)| a * b).sum();
        let eps = if noise_std > 0.0 { noise.sample(&mut noise_rng) } else { 0.0 };
        labels.push(clean + eps);
        samples.push(MultiViewSample::single(x));
    }
    Dataset::new(samples, labels)
}

/// Unit-norm random direction in `R^d`.
pub fn random_direction(d: usize, seed: Seed) -> Vec<f64> {
    let mut rng = seed.rng(Stream::Direction);
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    loop {
        let v: Vec<f64> = (0..d).map(|_| std.sample(&mut rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Linearly separable binary data: `x ~ U[-1,1]^d`, `y = sign(directionᵀx)`
/// with ties mapped to `+1`.
pub fn gen_binary_separable(n: usize, direction: &[f64], seed: Seed) -> Result<Dataset> {
    let d = direction.len();
    if d == 0 {
        return Err(HlrError::domain("separating direction must be non-empty"));
    }
    let mut rng = seed.rng(Stream::Inputs);
    let mut samples = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let s: f64 = x.iter().zip(direction).map(|(a, b)| a * b).sum();
        labels.push(if s >= 0.0 { 1.0 } else { -1.0 });
        samples.push(MultiViewSample::single(x));
    }
    Dataset::new(samples, labels)
}

/// Negates the labels of a uniformly random subset of exactly `⌊rate·ℓ⌋`
/// labelled samples. Returns the corrupted dataset and the flipped indices.
pub fn corrupt_sign_flip(
    dataset: &Dataset,
    rate: f64,
    seed: Seed,
) -> Result<(Dataset, BTreeSet<usize>)> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(HlrError::domain(format!("corruption rate must be in [0,1], got {rate}")));
    }
    let labelled = dataset.labelled_indices();
    let count = (rate * labelled.len() as f64).floor() as usize;
    let mut rng = seed.rng(Stream::Corruption);
    let corrupted: BTreeSet<usize> = sample_indices(&mut rng, labelled.len(), count)
        .into_iter()
        .map(|k| labelled[k])
        .collect();
    let ds = dataset.with_labels_mapped(|i, y| if corrupted.contains(&i) { -y } else { y });
    Ok((ds, corrupted))
}

/// Flips each `+1` label with probability `rho_plus` and each `−1` with
/// probability `rho_minus`, independently.
pub fn flip_binary_labels(
    dataset: &Dataset,
    rho_plus: f64,
    rho_minus: f64,
    seed: Seed,
) -> Result<Dataset> {
    for (name, p) in [("rho_plus", rho_plus), ("rho_minus", rho_minus)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(HlrError::domain(format!("{name} must be in [0,1], got {p}")));
        }
    }
    if let Some(i) = dataset
        .labelled_indices()
        .into_iter()
        .find(|&i| dataset.labels[i] != 1.0 && dataset.labels[i] != -1.0)
    {
        return Err(HlrError::domain(format!(
            "label {i} = {} is not in {{-1, +1}}",
            dataset.labels[i]
        )));
    }
    let mut rng = seed.rng(Stream::Corruption);
    // one draw per labelled sample so the stream position never depends on the rates
    Ok(dataset.with_labels_mapped(|_, y| {
        let u: f64 = rng.random();
        let p = if y > 0.0 { rho_plus } else { rho_minus };
        if u < p {
            -y
        } else {
            y
        }
    }))
}

/// Which labels [`mask_labels`] keeps.
#[derive(Debug, Clone, PartialEq)]
pub enum Keep {
    Indices(BTreeSet<usize>),
    /// Keeps a random subset of `⌊fraction·ℓ⌋` labels.
    Fraction(f64),
}

/// Drops labels outside `keep`; the inputs stay as unlabelled samples.
pub fn mask_labels(dataset: &Dataset, keep: &Keep, seed: Seed) -> Result<Dataset> {
    let labelled = dataset.labelled_indices();
    let keep: BTreeSet<usize> = match keep {
        Keep::Indices(set) => {
            if let Some(i) = set.iter().find(|&&i| !dataset.label_mask.get(i).copied().unwrap_or(false)) {
                return Err(HlrError::domain(format!("index {i} is not labelled")));
            }
            set.clone()
        }
        Keep::Fraction(f) => {
            if !(0.0..=1.0).contains(f) {
                return Err(HlrError::domain(format!("keep fraction must be in [0,1], got {f}")));
            }
            let count = (f * labelled.len() as f64).floor() as usize;
            let mut rng = seed.rng(Stream::Masking);
            sample_indices(&mut rng, labelled.len(), count)
                .into_iter()
                .map(|k| labelled[k])
                .collect()
        }
    };
    let mask: Vec<bool> = (0..dataset.n()).map(|i| keep.contains(&i)).collect();
    dataset.with_label_mask(&mask)
}

/// Leave-one-fold-out pairs over contiguous, equispaced blocks of the
/// labelled samples. Block sizes differ by at most one.
///
/// The training side keeps every non-test sample (unlabelled ones included);
/// the test side holds the held-out labelled block.
pub fn split_folds(dataset: &Dataset, folds: usize) -> Result<Vec<(Dataset, Dataset)>> {
    let labelled = dataset.labelled_indices();
    if folds < 2 {
        return Err(HlrError::domain(format!(
            "need at least 2 folds for a non-empty training set, got {folds}"
        )));
    }
    if folds > labelled.len() {
        return Err(HlrError::domain(format!(
            "{folds} folds requested for {} labelled samples",
            labelled.len()
        )));
    }
    let base = labelled.len() / folds;
    let extra = labelled.len() % folds;
    let mut out = Vec::with_capacity(folds);
    let mut start = 0;
    for f in 0..folds {
        let size = base + usize::from(f < extra);
        let test_idx = &labelled[start..start + size];
        start += size;
        let in_test: BTreeSet<usize> = test_idx.iter().copied().collect();
        let train_idx: Vec<usize> = (0..dataset.n()).filter(|i| !in_test.contains(i)).collect();
        out.push((dataset.subset(&train_idx)?, dataset.subset(test_idx)?));
    }
    Ok(out)
}

fn parse_field(field: &str, row: usize, column: usize) -> Result<f64> {
    field.parse::<f64>().map_err(|_| HlrError::Parse {
        row,
        column,
        message: format!("cannot parse {field:?} as a number"),
    })
}

/// Reads a CSV dataset. See [`load_csv`].
pub fn read_csv<R: Read>(reader: R, view_dims: &[usize], labelled: bool) -> Result<Dataset> {
    if view_dims.is_empty() || view_dims.contains(&0) {
        return Err(HlrError::domain(format!("invalid view dimensions {view_dims:?}")));
    }
    let n_features: usize = view_dims.iter().sum();
    let width = n_features + usize::from(labelled);
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut labelled_rows = Vec::new();
    let mut unlabelled_rows = Vec::new();
    for (k, record) in rdr.records().enumerate() {
        let row = k + 1;
        let record = record.map_err(|e| HlrError::Parse {
            row,
            column: 0,
            message: e.to_string(),
        })?;
        if k == 0 && record.iter().any(|f| !f.is_empty() && f.parse::<f64>().is_err()) {
            continue; // header line
        }
        if record.len() == 1 && record[0].is_empty() {
            continue; // blank line
        }
        if record.len() != width {
            return Err(HlrError::Parse {
                row,
                column: record.len().min(width) + 1,
                message: format!("expected {width} fields, found {}", record.len()),
            });
        }
        let mut views = Vec::with_capacity(view_dims.len());
        let mut col = 0;
        for &d in view_dims {
            let mut v = Vec::with_capacity(d);
            for _ in 0..d {
                v.push(parse_field(&record[col], row, col + 1)?);
                col += 1;
            }
            views.push(v);
        }
        let sample = MultiViewSample::new(views);
        if labelled && !record[col].is_empty() {
            labelled_rows.push((sample, parse_field(&record[col], row, col + 1)?));
        } else {
            unlabelled_rows.push(sample);
        }
    }
    let labels = labelled_rows.iter().map(|(_, y)| *y).collect();
    let samples = labelled_rows
        .into_iter()
        .map(|(s, _)| s)
        .chain(unlabelled_rows)
        .collect();
    Dataset::new(samples, labels)
}

/// Loads a comma-separated dataset.
///
/// Each row holds the concatenated views (sliced by `view_dims`) followed by
/// the label when `labelled` is set. An empty label field marks the row as
/// unlabelled; such rows are moved after all labelled rows. A first row with
/// any non-numeric field is treated as a header.
pub fn load_csv(path: impl AsRef<Path>, view_dims: &[usize], labelled: bool) -> Result<Dataset> {
    let file = std::fs::File::open(path.as_ref())?;
    read_csv(std::io::BufReader::new(file), view_dims, labelled)
}

/// Writes rows in the format read by [`read_csv`] (label column always present).
pub fn write_csv<W: Write>(dataset: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    for (i, s) in dataset.samples.iter().enumerate() {
        let mut fields: Vec<String> = s.views.iter().flatten().map(|v| v.to_string()).collect();
        fields.push(dataset.label(i).map_or_else(String::new, |y| y.to_string()));
        w.write_record(&fields).map_err(|e| HlrError::Format(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path.as_ref())?;
    write_csv(dataset, std::io::BufWriter::new(file))
}
