//! Multilayer perceptron state, forward propagation, and prediction.
//!
//! A network is an ordered list of weight matrices with no bias terms; layer
//! `l` maps activations through `H_l = Z_{l-1} W_l`, `Z_l = tanh(H_l)`. The
//! most recent forward pass caches every `(H_l, Z_l)` pair because the
//! training rules consume both.
//!
//! # Checkpoint format
//!
//! [`save_checkpoint`] writes a flat little-endian binary container:
//!
//! ```text
//! bytes 0..6   magic "ERMLP1"
//! u64          init seed
//! u32          number of layer dims (L+1, at least 2)
//! u64 * (L+1)  layer dims
//! f64 * ...    weight matrices in layer order, row-major
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

const CHECKPOINT_MAGIC: &[u8; 6] = b"ERMLP1";

/// Rows processed per block during cache-free inference, to bound transient
/// memory on wide hidden layers.
const INFERENCE_CHUNK: usize = 4096;

/// Weight initialization recipe. Identical seed and dims give bit-identical
/// weights.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct InitSpec {
    pub seed: u64,
    pub scheme: InitScheme,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    /// I.i.d. Gaussian entries with per-layer standard deviation
    /// 1/sqrt(fan_in).
    GaussianFanIn,
}

impl InitSpec {
    pub fn new(seed: u64) -> Self {
        InitSpec {
            seed,
            scheme: InitScheme::GaussianFanIn,
        }
    }
}

/// Cached intermediate values from the most recent forward pass:
/// `input` is Z_0, `pre[l]` is H_{l+1} and `act[l]` is Z_{l+1} in 1-based
/// layer terms.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub input: Matrix,
    pub pre: Vec<Matrix>,
    pub act: Vec<Matrix>,
}

/// Dense multilayer perceptron: weights plus the optional forward cache.
#[derive(Debug, Clone)]
pub struct MlpState {
    layer_dims: Vec<usize>,
    weights: Vec<Matrix>,
    seed: u64,
    cache: Option<ForwardCache>,
}

/// Draw initial weights for the given layer dimensions.
pub fn init(layer_dims: &[usize], spec: InitSpec) -> Result<MlpState> {
    if layer_dims.len() < 2 {
        return Err(Error::config(format!(
            "a network needs at least input and output dims, got {:?}",
            layer_dims
        )));
    }
    if layer_dims.contains(&0) {
        return Err(Error::config(format!(
            "layer dims must all be positive, got {:?}",
            layer_dims
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut weights = Vec::with_capacity(layer_dims.len() - 1);
    for w in layer_dims.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let std = match spec.scheme {
            InitScheme::GaussianFanIn => 1.0 / (fan_in as f64).sqrt(),
        };
        let normal = Normal::new(0.0, std).expect("positive std");
        let data: Vec<f64> = (0..fan_in * fan_out)
            .map(|_| normal.sample(&mut rng))
            .collect();
        weights.push(Matrix::new(fan_in, fan_out, data)?);
    }
    Ok(MlpState {
        layer_dims: layer_dims.to_vec(),
        weights,
        seed: spec.seed,
        cache: None,
    })
}

impl MlpState {
    /// Build a state from explicit weight matrices; dims are derived from the
    /// shape chain, which must be consistent.
    pub fn from_weights(weights: Vec<Matrix>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::config("at least one weight matrix required"));
        }
        let mut layer_dims = vec![weights[0].rows()];
        for (i, w) in weights.iter().enumerate() {
            if w.rows() != layer_dims[i] {
                return Err(Error::shape(
                    "MlpState::from_weights",
                    format!(
                        "layer {} expects {} input rows but weight is {}x{}",
                        i + 1,
                        layer_dims[i],
                        w.rows(),
                        w.cols()
                    ),
                ));
            }
            layer_dims.push(w.cols());
        }
        Ok(MlpState {
            layer_dims,
            weights,
            seed: 0,
            cache: None,
        })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    /// Number of weight layers L.
    pub fn depth(&self) -> usize {
        self.weights.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn weight(&self, layer: usize) -> &Matrix {
        &self.weights[layer]
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    /// Replace one layer's weight matrix. Shape mismatches are programmer
    /// error and panic.
    pub fn set_weight(&mut self, layer: usize, w: Matrix) {
        assert_eq!(
            w.shape(),
            self.weights[layer].shape(),
            "replacement weight shape mismatch at layer {layer}"
        );
        self.weights[layer] = w;
    }

    pub fn cache(&self) -> Option<&ForwardCache> {
        self.cache.as_ref()
    }

    pub(crate) fn take_cache(&mut self) -> Option<ForwardCache> {
        self.cache.take()
    }

    pub(crate) fn set_cache(&mut self, cache: ForwardCache) {
        self.cache = Some(cache);
    }

    pub fn invalidate_cache(&mut self) {
        self.cache = None;
    }

    /// Full forward pass. Returns the output Z_L and caches every layer's
    /// pre-activation and activation.
    pub fn forward(&mut self, x: &Matrix) -> Result<Matrix> {
        self.check_input_width(x)?;
        let depth = self.depth();
        let mut pre = Vec::with_capacity(depth);
        let mut act = Vec::with_capacity(depth);
        let mut z = x.clone();
        for w in &self.weights {
            let h = z.matmul(w)?;
            z = h.tanh_activation();
            pre.push(h);
            act.push(z.clone());
        }
        self.cache = Some(ForwardCache {
            input: x.clone(),
            pre,
            act,
        });
        Ok(z)
    }

    /// Cache-free forward pass for evaluation. Processes the input in row
    /// blocks so wide hidden layers do not allocate sample-count-sized
    /// intermediates.
    pub fn forward_inference(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input_width(x)?;
        let out_dim = *self.layer_dims.last().unwrap();
        let mut out = vec![0.0; x.rows() * out_dim];
        let mut start = 0;
        while start < x.rows() {
            let stop = (start + INFERENCE_CHUNK).min(x.rows());
            let block = Matrix::new(
                stop - start,
                x.cols(),
                x.as_slice()[start * x.cols()..stop * x.cols()].to_vec(),
            )?;
            let mut z = block;
            for w in &self.weights {
                z = z.matmul(w)?.tanh_activation();
            }
            out[start * out_dim..stop * out_dim].copy_from_slice(z.as_slice());
            start = stop;
        }
        Matrix::new(x.rows(), out_dim, out)
    }

    fn check_input_width(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.layer_dims[0] {
            return Err(Error::shape(
                "forward",
                format!(
                    "input is {}x{} but the first layer expects width {}",
                    x.rows(),
                    x.cols(),
                    self.layer_dims[0]
                ),
            ));
        }
        Ok(())
    }
}

/// Per-row argmax with ties broken toward the lowest index.
pub fn predict_classes(y: &Matrix) -> Vec<usize> {
    (0..y.rows())
        .map(|r| {
            let row = y.row(r);
            let mut best = 0;
            for (j, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

pub fn save_checkpoint(state: &MlpState, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&state.seed.to_le_bytes())?;
    w.write_all(&(state.layer_dims.len() as u32).to_le_bytes())?;
    for &d in &state.layer_dims {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    for m in &state.weights {
        for v in m.as_slice() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<MlpState> {
    let file_name = path.display().to_string();
    let mut r = Offset::new(BufReader::new(File::open(path)?));

    let mut magic = [0u8; 6];
    r.read_exact_at(&mut magic, &file_name)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::format(&file_name, 0, "bad magic, expected ERMLP1"));
    }
    let seed = r.read_u64(&file_name)?;
    let ndims = r.read_u32(&file_name)? as usize;
    if ndims < 2 {
        return Err(Error::format(
            &file_name,
            r.offset,
            format!("need at least 2 layer dims, got {ndims}"),
        ));
    }
    let mut layer_dims = Vec::with_capacity(ndims);
    for _ in 0..ndims {
        let d = r.read_u64(&file_name)? as usize;
        if d == 0 {
            return Err(Error::format(&file_name, r.offset, "zero layer dim"));
        }
        layer_dims.push(d);
    }
    let mut weights = Vec::with_capacity(ndims - 1);
    for w in layer_dims.windows(2) {
        let (rows, cols) = (w[0], w[1]);
        let mut data = vec![0.0; rows * cols];
        for v in data.iter_mut() {
            *v = r.read_f64(&file_name)?;
        }
        let at = r.offset;
        weights.push(
            Matrix::new(rows, cols, data)
                .map_err(|e| Error::format(&file_name, at, e.to_string()))?,
        );
    }
    let mut trailing = [0u8; 1];
    if r.inner.read(&mut trailing)? != 0 {
        return Err(Error::format(&file_name, r.offset, "trailing bytes"));
    }
    Ok(MlpState {
        layer_dims,
        weights,
        seed,
        cache: None,
    })
}

/// Reader wrapper that tracks the byte offset for error reporting.
struct Offset<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> Offset<R> {
    fn new(inner: R) -> Self {
        Offset { inner, offset: 0 }
    }

    fn read_exact_at(&mut self, buf: &mut [u8], file: &str) -> Result<()> {
        let at = self.offset;
        self.inner
            .read_exact(buf)
            .map_err(|_| Error::format(file, at, "unexpected end of file"))?;
        self.offset += buf.len() as u64;
        Ok(())
    }

    fn read_u32(&mut self, file: &str) -> Result<u32> {
        let mut b = [0u8; 4];
        self.read_exact_at(&mut b, file)?;
        Ok(u32::from_le_bytes(b))
    }

    fn read_u64(&mut self, file: &str) -> Result<u64> {
        let mut b = [0u8; 8];
        self.read_exact_at(&mut b, file)?;
        Ok(u64::from_le_bytes(b))
    }

    fn read_f64(&mut self, file: &str) -> Result<f64> {
        let mut b = [0u8; 8];
        self.read_exact_at(&mut b, file)?;
        Ok(f64::from_le_bytes(b))
    }
}
