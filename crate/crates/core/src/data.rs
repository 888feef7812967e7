//! Dataset directories and the synthetic generators.
//!
//! A dataset directory holds a TOML `manifest`, one headerless CSV file per
//! view (`view_1.csv`, `view_2.csv`, ...) and optionally `labels.csv` with one
//! integer id per line. See `docs/formats.md` for the exact layout.

use std::f64::consts::PI;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::FeatureMatrix;

pub const MANIFEST_FILE: &str = "manifest";
pub const LABELS_FILE: &str = "labels.csv";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct MultiViewDataset {
    pub views: Vec<FeatureMatrix>,
    pub truth: Option<Vec<usize>>,
    pub names: Vec<String>,
    pub n_clusters: usize,
}

impl MultiViewDataset {
    pub fn new(
        views: Vec<FeatureMatrix>,
        truth: Option<Vec<usize>>,
        names: Vec<String>,
        n_clusters: usize,
    ) -> Result<Self> {
        let first = views.first().ok_or_else(|| Error::domain("a dataset needs at least one view"))?;
        let n = first.nrows();
        if let Some(x) = views.iter().find(|x| x.nrows() != n) {
            return Err(Error::LengthMismatch {
                left: n,
                right: x.nrows(),
            });
        }
        if names.len() != views.len() {
            return Err(Error::LengthMismatch {
                left: views.len(),
                right: names.len(),
            });
        }
        if n_clusters == 0 {
            return Err(Error::domain("a dataset needs at least one cluster"));
        }
        if let Some(t) = &truth {
            if t.len() != n {
                return Err(Error::LengthMismatch { left: n, right: t.len() });
            }
            if let Some(&bad) = t.iter().find(|&&l| l >= n_clusters) {
                return Err(Error::domain(format!("truth label {bad} outside 0..{n_clusters}")));
            }
        }
        Ok(Self {
            views,
            truth,
            names,
            n_clusters,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.views[0].nrows()
    }

    pub fn n_views(&self) -> usize {
        self.views.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewEntry {
    pub file: String,
    pub rows: usize,
    pub cols: usize,
    #[serde(default)]
    pub name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub n: usize,
    pub c: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<String>,
    pub views: Vec<ViewEntry>,
}

fn manifest_error(path: &Path, message: impl Into<String>) -> Error {
    Error::Manifest {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn shape_error(path: &Path, message: impl Into<String>) -> Error {
    Error::Shape {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn parse_error(path: &Path, row: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        row,
        message: message.into(),
    }
}

pub fn read_manifest(dir: &Path) -> Result<DatasetManifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| manifest_error(&path, e.to_string()))?;
    let manifest: DatasetManifest = toml::from_str(&text).map_err(|e| manifest_error(&path, e.to_string()))?;
    if manifest.version != MANIFEST_VERSION {
        return Err(manifest_error(
            &path,
            format!("unsupported version {}, expected {MANIFEST_VERSION}", manifest.version),
        ));
    }
    if manifest.views.is_empty() {
        return Err(manifest_error(&path, "no views listed"));
    }
    if manifest.c == 0 || manifest.n == 0 {
        return Err(manifest_error(&path, "n and c must be positive"));
    }
    if let Some(v) = manifest.views.iter().find(|v| v.rows != manifest.n) {
        return Err(manifest_error(
            &path,
            format!("view {} declares {} rows but n = {}", v.file, v.rows, manifest.n),
        ));
    }
    Ok(manifest)
}

fn csv_reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

/// Reads a numeric CSV and checks it is exactly `rows × cols`.
pub fn read_matrix(path: &Path, rows: usize, cols: usize) -> Result<Array2<f64>> {
    let mut data = Vec::with_capacity(rows * cols);
    let mut seen = 0;
    for (i, record) in csv_reader(path)?.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| parse_error(path, row, e.to_string()))?;
        if record.len() != cols {
            return Err(shape_error(path, format!("row {row} has {} columns, expected {cols}", record.len())));
        }
        for cell in record.iter() {
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_error(path, row, format!("not a number: {cell:?}")))?;
            if !v.is_finite() {
                return Err(parse_error(path, row, format!("non-finite value {cell:?}")));
            }
            data.push(v);
        }
        seen += 1;
    }
    if seen != rows {
        return Err(shape_error(path, format!("found {seen} rows, expected {rows}")));
    }
    Array2::from_shape_vec((rows, cols), data).map_err(|e| shape_error(path, e.to_string()))
}

/// Reads one integer id per line; ids must lie in `0..c` when `c` is given.
pub fn read_labels(path: &Path, c: Option<usize>) -> Result<Vec<usize>> {
    let mut labels = Vec::new();
    for (i, record) in csv_reader(path)?.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| parse_error(path, row, e.to_string()))?;
        if record.len() != 1 {
            return Err(parse_error(path, row, format!("expected one id, found {} cells", record.len())));
        }
        let cell = &record[0];
        let id: usize = cell
            .parse()
            .map_err(|_| parse_error(path, row, format!("not a cluster id: {cell:?}")))?;
        if let Some(c) = c {
            if id >= c {
                return Err(parse_error(path, row, format!("cluster id {id} outside 0..{c}")));
            }
        }
        labels.push(id);
    }
    Ok(labels)
}

pub fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut out = String::with_capacity(labels.len() * 3);
    for l in labels {
        out.push_str(&l.to_string());
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn write_matrix(path: &Path, x: &Array2<f64>) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for row in x.outer_iter() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(w, "{}", line.join(",")).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_dataset(dir: &Path) -> Result<MultiViewDataset> {
    let manifest = read_manifest(dir)?;
    let mut views = Vec::with_capacity(manifest.views.len());
    let mut names = Vec::with_capacity(manifest.views.len());
    for (k, entry) in manifest.views.iter().enumerate() {
        let x = read_matrix(&dir.join(&entry.file), entry.rows, entry.cols)?;
        let path = dir.join(&entry.file);
        views.push(FeatureMatrix::new(x).map_err(|e| shape_error(&path, e.to_string()))?);
        names.push(entry.name.clone().unwrap_or_else(|| format!("view_{}", k + 1)));
    }
    let truth = match &manifest.labels {
        Some(file) => {
            let path = dir.join(file);
            let labels = read_labels(&path, Some(manifest.c))?;
            if labels.len() != manifest.n {
                return Err(shape_error(&path, format!("found {} labels, expected {}", labels.len(), manifest.n)));
            }
            Some(labels)
        }
        None => None,
    };
    MultiViewDataset::new(views, truth, names, manifest.c)
}

pub fn save_dataset(ds: &MultiViewDataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(ds.n_views());
    for (k, (x, name)) in ds.views.iter().zip(&ds.names).enumerate() {
        let file = format!("view_{}.csv", k + 1);
        write_matrix(&dir.join(&file), x.as_array())?;
        entries.push(ViewEntry {
            file,
            rows: x.nrows(),
            cols: x.ncols(),
            name: Some(name.clone()),
        });
    }
    let labels = match &ds.truth {
        Some(t) => {
            write_labels(&dir.join(LABELS_FILE), t)?;
            Some(LABELS_FILE.to_string())
        }
        None => None,
    };
    let manifest = DatasetManifest {
        version: MANIFEST_VERSION,
        n: ds.n_samples(),
        c: ds.n_clusters,
        labels,
        views: entries,
    };
    let path = dir.join(MANIFEST_FILE);
    let text = toml::to_string(&manifest).map_err(|e| manifest_error(&path, e.to_string()))?;
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

/// `[Re(F x), Im(F x)]` for every row, with `F` the unnormalized DFT.
pub fn dft_view(x: &Array2<f64>) -> Array2<f64> {
    let (n, d) = x.dim();
    let fft = rustfft::FftPlanner::<f64>::new().plan_fft_forward(d);
    let mut out = Array2::zeros((n, 2 * d));
    let mut buf = vec![Complex64::new(0.0, 0.0); d];
    for (i, row) in x.outer_iter().enumerate() {
        for (b, &v) in buf.iter_mut().zip(row.iter()) {
            *b = Complex64::new(v, 0.0);
        }
        fft.process(&mut buf);
        for (j, z) in buf.iter().enumerate() {
            out[[i, j]] = z.re;
            out[[i, d + j]] = z.im;
        }
    }
    out
}

fn noise(noise: f64) -> Result<Normal<f64>> {
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::domain(format!("noise must be finite and >= 0, got {noise}")));
    }
    Normal::new(0.0, noise).map_err(|e| Error::domain(e.to_string()))
}

fn toy_dataset(coords: Array2<f64>, truth: Vec<usize>, c: usize) -> Result<MultiViewDataset> {
    let spectrum = dft_view(&coords);
    MultiViewDataset::new(
        vec![FeatureMatrix::new(coords)?, FeatureMatrix::new(spectrum)?],
        Some(truth),
        vec!["coords".into(), "dft".into()],
        c,
    )
}

fn linspace(count: usize, stop: f64) -> impl Iterator<Item = f64> {
    let step = if count > 1 { stop / (count - 1) as f64 } else { 0.0 };
    (0..count).map(move |i| i as f64 * step)
}

/// Two interleaved unit half-circles, `n/2` points each, class 0 first.
pub fn gen_two_moon(n: usize, noise_sd: f64, seed: u64) -> Result<MultiViewDataset> {
    if n == 0 || n % 2 == 1 {
        return Err(Error::domain(format!("two-moon needs a positive even n, got {n}")));
    }
    let dist = noise(noise_sd)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = n / 2;
    let mut coords = Array2::zeros((n, 2));
    let mut truth = Vec::with_capacity(n);
    for (i, t) in linspace(half, PI).enumerate() {
        coords[[i, 0]] = t.cos();
        coords[[i, 1]] = t.sin();
        coords[[half + i, 0]] = 1.0 - t.cos();
        coords[[half + i, 1]] = 0.5 - t.sin();
    }
    for i in 0..n {
        truth.push(usize::from(i >= half));
        coords[[i, 0]] += dist.sample(&mut rng);
        coords[[i, 1]] += dist.sample(&mut rng);
    }
    toy_dataset(coords, truth, 2)
}

/// Class sizes differing by at most one, larger classes first.
fn near_equal_sizes(n: usize, c: usize) -> Vec<usize> {
    (0..c).map(|j| n / c + usize::from(j < n % c)).collect()
}

/// Three concentric rings of radii 1, 2 and 3.
pub fn gen_three_ring(n: usize, noise_sd: f64, seed: u64) -> Result<MultiViewDataset> {
    if n < 3 {
        return Err(Error::domain(format!("three-ring needs n >= 3, got {n}")));
    }
    let dist = noise(noise_sd)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coords = Array2::zeros((n, 2));
    let mut truth = Vec::with_capacity(n);
    let mut row = 0;
    for (ring, size) in near_equal_sizes(n, 3).into_iter().enumerate() {
        let radius = (ring + 1) as f64;
        for i in 0..size {
            let t = 2.0 * PI * i as f64 / size as f64;
            coords[[row, 0]] = radius * t.cos() + dist.sample(&mut rng);
            coords[[row, 1]] = radius * t.sin() + dist.sample(&mut rng);
            truth.push(ring);
            row += 1;
        }
    }
    toy_dataset(coords, truth, 3)
}

/// Sizes proportional to `imbalance^(-j/(c-1))`, so the largest class is
/// `imbalance` times the smallest. Largest-remainder rounding, each at least 1.
fn geometric_sizes(n: usize, c: usize, imbalance: f64) -> Vec<usize> {
    let weights: Vec<f64> = (0..c)
        .map(|j| imbalance.powf(-(j as f64) / (c - 1) as f64))
        .collect();
    let total: f64 = weights.iter().sum();
    let spare = n - c;
    let exact: Vec<f64> = weights.iter().map(|w| w / total * spare as f64).collect();
    let mut sizes: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..c).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())));
    let missing = spare - sizes.iter().sum::<usize>();
    for &j in order.iter().take(missing) {
        sizes[j] += 1;
    }
    sizes.iter().map(|s| s + 1).collect()
}

fn random_rotation(dims: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let g = DMatrix::from_fn(dims, dims, |_, _| normal.sample(rng));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    // fix column signs so the factorization is unique
    for j in 0..dims {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Unit-variance Gaussian blobs whose centers sit on a circle, adjacent
/// centers `separation` apart. Views after the first are random rotations of
/// the first plus independent noise of standard deviation 0.1.
pub fn gen_blobs(
    n: usize,
    c: usize,
    dims: usize,
    separation: f64,
    imbalance: f64,
    views: usize,
    seed: u64,
) -> Result<MultiViewDataset> {
    if c < 2 || n < c || dims == 0 || views == 0 {
        return Err(Error::domain(format!(
            "blobs need c >= 2, n >= c, dims >= 1 and views >= 1; got n={n} c={c} dims={dims} views={views}"
        )));
    }
    if !(separation >= 0.0 && separation.is_finite()) {
        return Err(Error::domain(format!("separation must be finite and >= 0, got {separation}")));
    }
    if !(imbalance >= 1.0 && imbalance.is_finite()) {
        return Err(Error::domain(format!("imbalance must be >= 1, got {imbalance}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let radius = separation / (2.0 * (PI / c as f64).sin());
    let center = |j: usize| -> (f64, f64) {
        if dims == 1 {
            (j as f64 * separation, 0.0)
        } else {
            let t = 2.0 * PI * j as f64 / c as f64;
            (radius * t.cos(), radius * t.sin())
        }
    };

    let mut base = Array2::zeros((n, dims));
    let mut truth = Vec::with_capacity(n);
    let mut row = 0;
    for (j, size) in geometric_sizes(n, c, imbalance).into_iter().enumerate() {
        let (cx, cy) = center(j);
        for _ in 0..size {
            for d in 0..dims {
                base[[row, d]] = unit.sample(&mut rng);
            }
            base[[row, 0]] += cx;
            if dims > 1 {
                base[[row, 1]] += cy;
            }
            truth.push(j);
            row += 1;
        }
    }

    let small = Normal::new(0.0, 0.1).expect("valid sd");
    let mut all = vec![FeatureMatrix::new(base.clone())?];
    for _ in 1..views {
        let rot = random_rotation(dims, &mut rng);
        let mut x = Array2::zeros((n, dims));
        for i in 0..n {
            for a in 0..dims {
                let mut acc = 0.0;
                for b in 0..dims {
                    acc += rot[(a, b)] * base[[i, b]];
                }
                x[[i, a]] = acc + small.sample(&mut rng);
            }
        }
        all.push(FeatureMatrix::new(x)?);
    }
    let names = (1..=views).map(|v| format!("view_{v}")).collect();
    MultiViewDataset::new(all, Some(truth), names, c)
}

/// Path of the `k`-th (1-based) view file in a dataset directory.
pub fn view_path(dir: &Path, k: usize) -> PathBuf {
    dir.join(format!("view_{k}.csv"))
}
