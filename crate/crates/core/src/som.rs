//! Self-organizing map over window feature vectors.
//!
//! A rectangular grid of neurons, each with a weight vector the length of
//! the feature spec. Training pulls the best-matching unit and every neuron
//! within a shrinking square (Chebyshev) bubble toward each sample.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::GridPolicy;
use crate::features::{decode_value, FeatureBound, FeatureId, FeatureVectorSpec, FeatureWindow};

const FORMAT_TAG: &str = "tripx-som";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SomError {
    #[error("grid must be at least 1x1, got {rows}x{cols}")]
    BadDimensions { rows: usize, cols: usize },
    #[error("vector has {got} values, spec has {expected}")]
    SpecMismatch { expected: usize, got: usize },
    #[error("no training samples")]
    EmptySamples,
    #[error("trip has no windows")]
    NoWindows,
    #[error("trip has {got} windows, grid needs {need}")]
    TooFewWindows { got: usize, need: usize },
    #[error("k = {k} outside 1..={f}")]
    BadK { k: usize, f: usize },
    #[error("codebook line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("codebook version mismatch: {0}")]
    VersionMismatch(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SomCodebook {
    rows: usize,
    cols: usize,
    spec: FeatureVectorSpec,
    /// Row-major neurons, `spec.len()` weights each.
    weights: Vec<f64>,
    trained: bool,
    seed: u64,
}

/// Training schedule. The learning rate falls linearly from `alpha0` to 0
/// over the epochs; the bubble radius falls linearly from `radius0` and is
/// floored to an integer, never going below `min_radius`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainParams {
    pub epochs: usize,
    pub alpha0: f64,
    /// Defaults to half the longer grid side.
    pub radius0: Option<f64>,
    pub min_radius: f64,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            epochs: 500,
            alpha0: 0.5,
            radius0: None,
            min_radius: 0.0,
        }
    }
}

pub fn init_codebook(
    spec: &FeatureVectorSpec,
    rows: usize,
    cols: usize,
    seed: u64,
) -> Result<SomCodebook, SomError> {
    if rows == 0 || cols == 0 {
        return Err(SomError::BadDimensions { rows, cols });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights = (0..rows * cols * spec.len())
        .map(|_| rng.random::<f64>())
        .collect();
    Ok(SomCodebook {
        rows,
        cols,
        spec: spec.clone(),
        weights,
        trained: false,
        seed,
    })
}

impl SomCodebook {
    /// Build a codebook from explicit weights (one vector per neuron).
    pub fn from_weights(
        spec: &FeatureVectorSpec,
        rows: usize,
        cols: usize,
        weights: Vec<Vec<f64>>,
        seed: u64,
    ) -> Result<Self, SomError> {
        if rows == 0 || cols == 0 || weights.len() != rows * cols {
            return Err(SomError::BadDimensions { rows, cols });
        }
        let f = spec.len();
        if let Some(w) = weights.iter().find(|w| w.len() != f) {
            return Err(SomError::SpecMismatch {
                expected: f,
                got: w.len(),
            });
        }
        Ok(Self {
            rows,
            cols,
            spec: spec.clone(),
            weights: weights.concat(),
            trained: false,
            seed,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn neurons(&self) -> usize {
        self.rows * self.cols
    }

    pub fn dim(&self) -> usize {
        self.spec.len()
    }

    pub fn spec(&self) -> &FeatureVectorSpec {
        &self.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    pub fn weight(&self, neuron: usize) -> &[f64] {
        let f = self.dim();
        &self.weights[neuron * f..(neuron + 1) * f]
    }

    /// (row, col) of a neuron.
    pub fn position(&self, neuron: usize) -> (usize, usize) {
        (neuron / self.cols, neuron % self.cols)
    }

    fn check(&self, x: &[f64]) -> Result<(), SomError> {
        if x.len() != self.dim() {
            return Err(SomError::SpecMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    fn nearest(&self, x: &[f64]) -> (usize, f64) {
        let f = self.dim();
        let mut best = (0, f64::INFINITY);
        for (n, w) in self.weights.chunks_exact(f).enumerate() {
            let d2: f64 = w.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
            if d2 < best.1 {
                best = (n, d2);
            }
        }
        best
    }

    /// Best matching unit: the neuron nearest to `x` in Euclidean distance,
    /// lowest index on ties. Returns the index and the distance.
    pub fn bmu(&self, x: &[f64]) -> Result<(usize, f64), SomError> {
        self.check(x)?;
        let (n, d2) = self.nearest(x);
        Ok((n, d2.sqrt()))
    }

    pub fn train(&mut self, samples: &[Vec<f64>], params: &TrainParams) -> Result<(), SomError> {
        if samples.is_empty() {
            return Err(SomError::EmptySamples);
        }
        for s in samples {
            self.check(s)?;
        }
        let f = self.dim();
        let epochs = params.epochs;
        let radius0 = params
            .radius0
            .unwrap_or(self.rows.max(self.cols) as f64 / 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x005e_ed0f_5a4d);
        let mut order: Vec<usize> = (0..samples.len()).collect();
        for e in 0..epochs {
            let decay = 1.0 - e as f64 / epochs as f64;
            let alpha = params.alpha0 * decay;
            let radius = (radius0 * decay).floor().max(params.min_radius) as usize;
            order.shuffle(&mut rng);
            for &i in &order {
                let x = &samples[i];
                let (b, _) = self.nearest(x);
                let (br, bc) = self.position(b);
                let r_lo = br.saturating_sub(radius);
                let r_hi = (br + radius).min(self.rows - 1);
                let c_lo = bc.saturating_sub(radius);
                let c_hi = (bc + radius).min(self.cols - 1);
                for r in r_lo..=r_hi {
                    for c in c_lo..=c_hi {
                        let n = r * self.cols + c;
                        let w = &mut self.weights[n * f..(n + 1) * f];
                        for (wj, xj) in w.iter_mut().zip(x) {
                            *wj += alpha * (xj - *wj);
                        }
                    }
                }
            }
        }
        self.trained = true;
        Ok(())
    }

    /// Train on feature windows.
    pub fn train_windows(
        &mut self,
        samples: &[FeatureWindow],
        params: &TrainParams,
    ) -> Result<(), SomError> {
        let v: Vec<Vec<f64>> = samples.iter().map(|w| w.values.clone()).collect();
        self.train(&v, params)
    }
}

/// Stack a trip's windows into a fixed-height grid. `Pad` repeats the last
/// window up to `n` rows; both policies drop windows beyond `n`. `Truncate`
/// refuses trips shorter than `n`.
pub fn trip_to_grid(
    windows: &[FeatureWindow],
    n: usize,
    policy: GridPolicy,
) -> Result<Vec<Vec<f64>>, SomError> {
    let Some(last) = windows.last() else {
        return Err(SomError::NoWindows);
    };
    if windows.len() < n && policy == GridPolicy::Truncate {
        return Err(SomError::TooFewWindows {
            got: windows.len(),
            need: n,
        });
    }
    Ok((0..n)
        .map(|u| windows.get(u).unwrap_or(last).values.clone())
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerativeEvent {
    pub id: FeatureId,
    pub weight: f64,
    /// The window's own value of the feature, decoded.
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerativeEvents {
    pub k: usize,
    pub bmu: usize,
    pub distance: f64,
    pub events: Vec<GenerativeEvent>,
}

impl GenerativeEvents {
    pub fn ids(&self) -> Vec<FeatureId> {
        self.events.iter().map(|e| e.id).collect()
    }
}

/// Which BMU weights may be reported.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FGenOptions {
    pub k: usize,
    /// Weights below this are dropped; 0 keeps everything.
    pub min_weight: f64,
    /// Skip the raw measurement slots.
    pub explanatory_only: bool,
}

impl FGenOptions {
    /// Plain top-k over every slot.
    pub fn top(k: usize) -> Self {
        Self {
            k,
            min_weight: 0.0,
            explanatory_only: false,
        }
    }
}

/// Top-k features of the BMU's weight vector, heaviest first (spec order
/// on ties).
pub fn extract_f_gen(
    codebook: &SomCodebook,
    x: &FeatureWindow,
    opts: &FGenOptions,
) -> Result<GenerativeEvents, SomError> {
    let f = codebook.dim();
    if opts.k == 0 || opts.k > f {
        return Err(SomError::BadK { k: opts.k, f });
    }
    let (bmu, distance) = codebook.bmu(&x.values)?;
    let w = codebook.weight(bmu);
    let ids: Vec<FeatureId> = codebook.spec.ids().collect();
    let mut slots: Vec<usize> = (0..f)
        .filter(|&i| !opts.explanatory_only || ids[i].is_explanatory())
        .filter(|&i| w[i] >= opts.min_weight)
        .collect();
    slots.sort_by(|&a, &b| w[b].total_cmp(&w[a]).then(a.cmp(&b)));
    slots.truncate(opts.k);
    let events = slots
        .into_iter()
        .map(|i| GenerativeEvent {
            id: ids[i],
            weight: w[i],
            value: decode_value(ids[i], x.raw.get(i).copied().unwrap_or(w[i])),
        })
        .collect();
    Ok(GenerativeEvents {
        k: opts.k,
        bmu,
        distance,
        events,
    })
}

/// Text form: a header of `key value` lines, one `feature` line per slot,
/// then `weights` and one line per neuron. Floats are written in shortest
/// round-trip form, so a save/load cycle is bit-exact.
pub fn write_codebook(cb: &SomCodebook) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{FORMAT_TAG} {FORMAT_VERSION}");
    let _ = writeln!(s, "rows {}", cb.rows);
    let _ = writeln!(s, "cols {}", cb.cols);
    let _ = writeln!(s, "features {}", cb.dim());
    let _ = writeln!(s, "seed {}", cb.seed);
    let _ = writeln!(s, "spec {}", cb.spec.hash());
    let _ = writeln!(s, "trained {}", cb.trained);
    for b in cb.spec.bounds() {
        let _ = writeln!(s, "feature {} {:?} {:?}", b.id.code(), b.min, b.max);
    }
    s.push_str("weights\n");
    for n in 0..cb.neurons() {
        let line: Vec<String> = cb.weight(n).iter().map(|v| format!("{v:?}")).collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    s
}

pub fn save_codebook(cb: &SomCodebook, path: impl AsRef<Path>) -> Result<(), SomError> {
    std::fs::write(path, write_codebook(cb))?;
    Ok(())
}

pub fn load_codebook(path: impl AsRef<Path>) -> Result<SomCodebook, SomError> {
    parse_codebook(&std::fs::read_to_string(path)?)
}

/// Load and insist the stored spec equals `spec`.
pub fn load_codebook_for(
    path: impl AsRef<Path>,
    spec: &FeatureVectorSpec,
) -> Result<SomCodebook, SomError> {
    let cb = load_codebook(path)?;
    if cb.spec.hash() != spec.hash() {
        return Err(SomError::VersionMismatch(format!(
            "codebook spec {} ({} features), expected {} ({} features)",
            cb.spec.hash(),
            cb.dim(),
            spec.hash(),
            spec.len()
        )));
    }
    Ok(cb)
}

pub fn parse_codebook(text: &str) -> Result<SomCodebook, SomError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let mut next = |what: &str| {
        lines.next().ok_or_else(|| SomError::Parse {
            line: 0,
            message: format!("unexpected end of file, expected {what}"),
        })
    };
    let perr = |line: usize, message: String| SomError::Parse { line, message };

    let (ln, head) = next("header")?;
    let mut parts = head.split_whitespace();
    if parts.next() != Some(FORMAT_TAG) {
        return Err(perr(ln, "not a codebook file".into()));
    }
    let version: u32 = parts
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| perr(ln, "missing version".into()))?;
    if version != FORMAT_VERSION {
        return Err(SomError::VersionMismatch(format!(
            "file version {version}, supported {FORMAT_VERSION}"
        )));
    }

    fn field<'a>(
        next: &mut dyn FnMut(&str) -> Result<(usize, &'a str), SomError>,
        key: &str,
    ) -> Result<(usize, &'a str), SomError> {
        let (ln, line) = next(key)?;
        match line.split_once(' ') {
            Some((k, v)) if k == key => Ok((ln, v.trim())),
            _ => Err(SomError::Parse {
                line: ln,
                message: format!("expected `{key}`"),
            }),
        }
    }
    fn num<T: std::str::FromStr>((ln, v): (usize, &str)) -> Result<T, SomError> {
        v.parse().map_err(|_| SomError::Parse {
            line: ln,
            message: format!("bad number `{v}`"),
        })
    }

    let rows: usize = num(field(&mut next, "rows")?)?;
    let cols: usize = num(field(&mut next, "cols")?)?;
    let f: usize = num(field(&mut next, "features")?)?;
    let seed: u64 = num(field(&mut next, "seed")?)?;
    let (_, hash) = field(&mut next, "spec")?;
    let hash = hash.to_string();
    let trained: bool = num(field(&mut next, "trained")?)?;
    if rows == 0 || cols == 0 {
        return Err(SomError::BadDimensions { rows, cols });
    }

    let mut bounds = Vec::with_capacity(f);
    loop {
        let (ln, line) = next("feature or weights")?;
        if line == "weights" {
            break;
        }
        let p: Vec<&str> = line.split_whitespace().collect();
        if p.len() != 4 || p[0] != "feature" {
            return Err(perr(ln, "expected `feature <id> <min> <max>`".into()));
        }
        let id: FeatureId = p[1].parse().map_err(|e| perr(ln, format!("{e}")))?;
        bounds.push(FeatureBound {
            id,
            min: num((ln, p[2]))?,
            max: num((ln, p[3]))?,
        });
    }
    if bounds.len() != f {
        return Err(SomError::VersionMismatch(format!(
            "header declares {f} features, file lists {}",
            bounds.len()
        )));
    }
    let spec = FeatureVectorSpec::new(bounds).map_err(|e| perr(0, e.to_string()))?;
    if spec.hash() != hash {
        return Err(SomError::VersionMismatch(format!(
            "spec hash {hash} does not match listed features ({})",
            spec.hash()
        )));
    }

    let mut weights = Vec::with_capacity(rows * cols * f);
    for _ in 0..rows * cols {
        let (ln, line) = next("neuron weights")?;
        let before = weights.len();
        for v in line.split_whitespace() {
            let w: f64 = num((ln, v))?;
            if !w.is_finite() {
                return Err(perr(ln, "non-finite weight".into()));
            }
            weights.push(w);
        }
        if weights.len() - before != f {
            return Err(SomError::VersionMismatch(format!(
                "line {ln}: {} weights, spec has {f}",
                weights.len() - before
            )));
        }
    }
    Ok(SomCodebook {
        rows,
        cols,
        spec,
        weights,
        trained,
        seed,
    })
}
