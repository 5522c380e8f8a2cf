//! Deterministic maps from raw inputs `x` to interpretable features `z`.

use std::fmt::Debug;
use std::sync::Arc;

use crate::data::FeatureKind;
use crate::error::{dim_check, Error, Result};
use crate::numkit::Matrix;

/// A pure feature map `z = phi(x)`.
pub trait FeatureMap: Send + Sync + Debug {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    /// `out.len() == output_dim()`, `x.len() == input_dim()`.
    fn map_into(&self, x: &[f64], out: &mut [f64]);

    fn map(&self, x: &[f64]) -> Result<Vec<f64>> {
        dim_check!(
            x.len() == self.input_dim(),
            "feature map expects {} inputs, got {}",
            self.input_dim(),
            x.len()
        );
        let mut out = vec![0.0; self.output_dim()];
        self.map_into(x, &mut out);
        Ok(out)
    }

    fn map_rows(&self, xs: &Matrix) -> Result<Matrix> {
        dim_check!(
            xs.cols() == self.input_dim(),
            "feature map expects {} inputs, got {}",
            self.input_dim(),
            xs.cols()
        );
        let mut out = Matrix::zeros(xs.rows(), self.output_dim());
        for r in 0..xs.rows() {
            self.map_into(xs.row(r), out.row_mut(r));
        }
        Ok(out)
    }
}

fn square_side(len: usize) -> Result<usize> {
    let side = (len as f64).sqrt().round() as usize;
    if side * side != len || side == 0 {
        return Err(Error::Dimension(format!(
            "input length {len} is not a square image"
        )));
    }
    Ok(side)
}

/// Average pooling of a square image onto a `grid × grid` lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelPool {
    side: usize,
    grid: usize,
}

impl PixelPool {
    pub fn new(input_dim: usize, grid: usize) -> Result<Self> {
        let side = square_side(input_dim)?;
        if grid == 0 || side % grid != 0 {
            return Err(Error::Parameter(format!(
                "pool grid {grid} does not divide image side {side}"
            )));
        }
        Ok(PixelPool { side, grid })
    }
}

impl FeatureMap for PixelPool {
    fn input_dim(&self) -> usize {
        self.side * self.side
    }

    fn output_dim(&self) -> usize {
        self.grid * self.grid
    }

    fn map_into(&self, x: &[f64], out: &mut [f64]) {
        let cell = self.side / self.grid;
        let norm = 1.0 / (cell * cell) as f64;
        for gr in 0..self.grid {
            for gc in 0..self.grid {
                let mut s = 0.0;
                for r in gr * cell..(gr + 1) * cell {
                    for c in gc * cell..(gc + 1) * cell {
                        s += x[r * self.side + c];
                    }
                }
                out[gr * self.grid + gc] = s * norm;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HogParams {
    /// Cell edge in pixels.
    pub cell: usize,
    /// Unsigned orientation bins over [0, 180) degrees.
    pub bins: usize,
    /// Block edge in cells; blocks slide by one cell.
    pub block: usize,
    pub epsilon: f64,
}

impl Default for HogParams {
    fn default() -> Self {
        HogParams {
            cell: 4,
            bins: 9,
            block: 2,
            epsilon: 1e-6,
        }
    }
}

/// Histogram of oriented gradients over a square image.
///
/// Gradients use centered differences with edge replication. Each pixel
/// votes its magnitude into the two nearest orientation bins (bin centers
/// at `k * 180 / bins` degrees). Cell histograms are grouped into
/// overlapping blocks, each L2-normalized as `v / sqrt(|v|^2 + eps^2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Hog {
    side: usize,
    params: HogParams,
}

impl Hog {
    pub fn new(input_dim: usize, params: HogParams) -> Result<Self> {
        let side = square_side(input_dim)?;
        if params.cell == 0 || side % params.cell != 0 {
            return Err(Error::Parameter(format!(
                "cell size {} does not divide image side {side}",
                params.cell
            )));
        }
        if params.bins == 0 || params.block == 0 || params.block > side / params.cell {
            return Err(Error::Parameter(format!("invalid HOG parameters {params:?}")));
        }
        Ok(Hog { side, params })
    }

    fn cells(&self) -> usize {
        self.side / self.params.cell
    }

    fn blocks(&self) -> usize {
        self.cells() - self.params.block + 1
    }

    /// Per-cell orientation histograms, `cells × cells × bins`, unnormalized.
    pub fn cell_histograms(&self, x: &[f64]) -> Vec<f64> {
        let (side, p) = (self.side, &self.params);
        let cells = self.cells();
        let mut hist = vec![0.0; cells * cells * p.bins];
        let px = |r: usize, c: usize| x[r * side + c];
        let bin_width = 180.0 / p.bins as f64;
        for r in 0..side {
            for c in 0..side {
                let gx = px(r, (c + 1).min(side - 1)) - px(r, c.saturating_sub(1));
                let gy = px((r + 1).min(side - 1), c) - px(r.saturating_sub(1), c);
                let mag = (gx * gx + gy * gy).sqrt();
                if mag == 0.0 {
                    continue;
                }
                let mut angle = gy.atan2(gx).to_degrees();
                if angle < 0.0 {
                    angle += 180.0;
                }
                if angle >= 180.0 {
                    angle -= 180.0;
                }
                let pos = angle / bin_width;
                let lo = pos.floor() as usize % p.bins;
                let hi = (lo + 1) % p.bins;
                let frac = pos - pos.floor();
                let base = ((r / p.cell) * cells + c / p.cell) * p.bins;
                hist[base + lo] += mag * (1.0 - frac);
                hist[base + hi] += mag * frac;
            }
        }
        hist
    }
}

impl FeatureMap for Hog {
    fn input_dim(&self) -> usize {
        self.side * self.side
    }

    fn output_dim(&self) -> usize {
        let b = self.blocks();
        b * b * self.params.block * self.params.block * self.params.bins
    }

    fn map_into(&self, x: &[f64], out: &mut [f64]) {
        let p = &self.params;
        let cells = self.cells();
        let hist = self.cell_histograms(x);
        let block_len = p.block * p.block * p.bins;
        let mut o = 0;
        for br in 0..self.blocks() {
            for bc in 0..self.blocks() {
                let start = o;
                for cr in br..br + p.block {
                    for cc in bc..bc + p.block {
                        let base = (cr * cells + cc) * p.bins;
                        out[o..o + p.bins].copy_from_slice(&hist[base..base + p.bins]);
                        o += p.bins;
                    }
                }
                let block = &mut out[start..start + block_len];
                let norm = (block.iter().map(|v| v * v).sum::<f64>() + p.epsilon * p.epsilon).sqrt();
                block.iter_mut().for_each(|v| *v /= norm);
            }
        }
    }
}

/// Means over consecutive coordinate blocks; the feature map of the
/// synthetic generator.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockMean {
    input_dim: usize,
    block: usize,
}

impl BlockMean {
    pub fn new(input_dim: usize, block: usize) -> Result<Self> {
        if block == 0 || input_dim % block != 0 {
            return Err(Error::Parameter(format!(
                "block {block} does not divide input dim {input_dim}"
            )));
        }
        Ok(BlockMean { input_dim, block })
    }
}

impl FeatureMap for BlockMean {
    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn output_dim(&self) -> usize {
        self.input_dim / self.block
    }

    fn map_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, chunk) in out.iter_mut().zip(x.chunks_exact(self.block)) {
            *o = chunk.iter().sum::<f64>() / self.block as f64;
        }
    }
}

/// Per-column affine standardization with statistics frozen at fit time.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

/// Smallest column scale, relative to the widest column.
pub const SCALE_FLOOR: f64 = 0.1;

impl Standardizer {
    /// Column scales are floored at a tenth of the widest column's spread,
    /// so near-constant columns (image borders) cannot dominate distances.
    /// A matrix with no spread at all gets unit scale.
    pub fn fit(z: &Matrix) -> Result<Self> {
        if z.rows() == 0 {
            return Err(Error::Parameter("cannot standardize zero rows".into()));
        }
        let n = z.rows() as f64;
        let mean: Vec<f64> = z.column_sums().into_iter().map(|s| s / n).collect();
        let mut var = vec![0.0; z.cols()];
        for r in 0..z.rows() {
            for (j, v) in z.row(r).iter().enumerate() {
                let d = v - mean[j];
                var[j] += d * d;
            }
        }
        let spread: Vec<f64> = var.into_iter().map(|v| (v / n).sqrt()).collect();
        let widest = spread.iter().copied().fold(0.0, f64::max);
        let floor = if widest > 1e-12 { SCALE_FLOOR * widest } else { 1.0 };
        let scale = spread.into_iter().map(|s| s.max(floor)).collect();
        Ok(Standardizer { mean, scale })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply_in_place(&self, z: &mut [f64]) {
        for ((v, m), s) in z.iter_mut().zip(&self.mean).zip(&self.scale) {
            *v = (*v - m) / s;
        }
    }

    pub fn apply(&self, z: &Matrix) -> Result<Matrix> {
        dim_check!(z.cols() == self.dim(), "standardizer has {} columns, got {}", self.dim(), z.cols());
        let mut out = z.clone();
        for r in 0..out.rows() {
            self.apply_in_place(out.row_mut(r));
        }
        Ok(out)
    }
}

/// `phi` followed by standardization.
#[derive(Debug, Clone)]
pub struct Standardized {
    inner: Arc<dyn FeatureMap>,
    stats: Standardizer,
}

impl Standardized {
    pub fn new(inner: Arc<dyn FeatureMap>, stats: Standardizer) -> Result<Self> {
        dim_check!(
            inner.output_dim() == stats.dim(),
            "standardizer has {} columns, map outputs {}",
            stats.dim(),
            inner.output_dim()
        );
        Ok(Standardized { inner, stats })
    }

    pub fn stats(&self) -> &Standardizer {
        &self.stats
    }

    pub fn inner(&self) -> &Arc<dyn FeatureMap> {
        &self.inner
    }
}

impl FeatureMap for Standardized {
    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }

    fn output_dim(&self) -> usize {
        self.inner.output_dim()
    }

    fn map_into(&self, x: &[f64], out: &mut [f64]) {
        self.inner.map_into(x, out);
        self.stats.apply_in_place(out);
    }
}

/// `phi` restricted to a subset of its output coordinates.
#[derive(Debug, Clone)]
pub struct Subsampled {
    inner: Arc<dyn FeatureMap>,
    kept: Vec<usize>,
}

impl Subsampled {
    pub fn new(inner: Arc<dyn FeatureMap>, kept: Vec<usize>) -> Result<Self> {
        super::corrupt::validate_kept_dims(&kept, inner.output_dim())?;
        Ok(Subsampled { inner, kept })
    }
}

impl FeatureMap for Subsampled {
    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }

    fn output_dim(&self) -> usize {
        self.kept.len()
    }

    fn map_into(&self, x: &[f64], out: &mut [f64]) {
        let mut full = vec![0.0; self.inner.output_dim()];
        self.inner.map_into(x, &mut full);
        for (o, &k) in out.iter_mut().zip(&self.kept) {
            *o = full[k];
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureParams {
    pub pool_grid: usize,
    pub hog: HogParams,
}

impl Default for FeatureParams {
    fn default() -> Self {
        FeatureParams {
            pool_grid: 7,
            hog: HogParams::default(),
        }
    }
}

/// The unstandardized feature map for `kind` over inputs of `input_dim`.
pub fn feature_map(kind: FeatureKind, input_dim: usize, params: &FeatureParams) -> Result<Arc<dyn FeatureMap>> {
    match kind {
        FeatureKind::Pxl => Ok(Arc::new(PixelPool::new(input_dim, params.pool_grid)?)),
        FeatureKind::Hog => Ok(Arc::new(Hog::new(input_dim, params.hog)?)),
        FeatureKind::Synthetic => Err(Error::Parameter(
            "synthetic features have no image feature map".into(),
        )),
    }
}

/// `Z = phi(X)` for image rows.
pub fn extract_features(x: &Matrix, kind: FeatureKind, params: &FeatureParams) -> Result<Matrix> {
    feature_map(kind, x.cols(), params)?.map_rows(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pooling_constant_image() {
        let x = Matrix::filled(1, 784, 1.0);
        let z = extract_features(&x, FeatureKind::Pxl, &FeatureParams::default()).unwrap();
        assert_eq!(z.shape(), (1, 49));
        assert!(z.as_slice().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn pooling_averages_cells() {
        // 4x4 image pooled to 2x2
        let img: Vec<f64> = (0..16).map(|i| i as f64).collect();
        let pool = PixelPool::new(16, 2).unwrap();
        assert_eq!(pool.map(&img).unwrap(), vec![2.5, 4.5, 10.5, 12.5]);
    }

    #[test]
    fn non_square_input_rejected() {
        let x = Matrix::zeros(1, 30);
        assert!(matches!(
            extract_features(&x, FeatureKind::Pxl, &FeatureParams::default()),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            extract_features(&x, FeatureKind::Hog, &FeatureParams::default()),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn hog_of_constant_image_is_zero() {
        let hog = Hog::new(784, HogParams::default()).unwrap();
        let x = vec![0.7; 784];
        assert!(hog.cell_histograms(&x).iter().all(|&v| v == 0.0));
        let z = hog.map(&x).unwrap();
        assert_eq!(z.len(), 6 * 6 * 4 * 9);
        assert!(z.iter().all(|&v| v == 0.0));
    }

    /// Brute-force oracle: recompute every pixel's gradient directly and
    /// count which orientation bin receives the most magnitude.
    #[test]
    fn vertical_edge_votes_into_horizontal_gradient_bin() {
        let side = 28;
        let x: Vec<f64> = (0..side * side)
            .map(|i| if i % side >= 14 { 1.0 } else { 0.0 })
            .collect();
        let mut oracle = [0.0f64; 9];
        for r in 0..side {
            for c in 0..side {
                let right = x[r * side + (c + 1).min(side - 1)];
                let left = x[r * side + c.saturating_sub(1)];
                let down = x[(r + 1).min(side - 1) * side + c];
                let up = x[r.saturating_sub(1) * side + c];
                let (gx, gy) = (right - left, down - up);
                if gx != 0.0 || gy != 0.0 {
                    let deg = gy.atan2(gx).to_degrees().rem_euclid(180.0);
                    oracle[((deg / 20.0).round() as usize) % 9] += (gx * gx + gy * gy).sqrt();
                }
            }
        }
        assert!(oracle[0] > 0.0 && oracle[1..].iter().all(|&v| v == 0.0));

        let hog = Hog::new(784, HogParams::default()).unwrap();
        let hist = hog.cell_histograms(&x);
        let mut totals = [0.0; 9];
        for (i, v) in hist.iter().enumerate() {
            totals[i % 9] += v;
        }
        assert!((totals[0] - oracle[0]).abs() < 1e-12);
        assert!(totals[1..].iter().all(|&v| v == 0.0));

        let z = hog.map(&x).unwrap();
        let energy0: f64 = z.iter().enumerate().filter(|(i, _)| i % 9 == 0).map(|(_, v)| v * v).sum();
        let total: f64 = z.iter().map(|v| v * v).sum();
        assert!(energy0 / total > 0.999);
    }

    #[test]
    fn hog_blocks_are_unit_norm_when_nonzero() {
        let x: Vec<f64> = (0..784).map(|i| ((i * 37) % 101) as f64 / 100.0).collect();
        let hog = Hog::new(784, HogParams::default()).unwrap();
        let z = hog.map(&x).unwrap();
        for block in z.chunks(36) {
            let n: f64 = block.iter().map(|v| v * v).sum();
            assert!((n - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn extraction_is_deterministic() {
        let x = Matrix::from_fn(3, 784, |r, c| ((r * 784 + c) % 17) as f64 / 16.0);
        let p = FeatureParams::default();
        for kind in [FeatureKind::Pxl, FeatureKind::Hog] {
            let a = extract_features(&x, kind, &p).unwrap();
            let b = extract_features(&x, kind, &p).unwrap();
            assert!(a.as_slice().iter().zip(b.as_slice()).all(|(u, v)| u.to_bits() == v.to_bits()));
        }
    }

    #[test]
    fn standardizer_centers_and_scales() {
        let z = Matrix::from_rows(&[vec![1.0, 5.0], vec![3.0, 5.0]]).unwrap();
        let s = Standardizer::fit(&z).unwrap();
        let out = s.apply(&z).unwrap();
        assert_eq!(out.as_slice(), &[-1.0, 0.0, 1.0, 0.0]);
    }
}
