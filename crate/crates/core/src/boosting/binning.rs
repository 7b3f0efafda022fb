//! Quantile binning of features into at most 256 bins.

use nalgebra::DMatrix;
use rayon::prelude::*;

/// Rows used to place bin boundaries on large inputs.
const BOUNDARY_SAMPLE: usize = 200_000;

/// Upper bin boundaries per feature. Bin `b` holds `boundaries[b-1] < x <= boundaries[b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBins {
    boundaries: Vec<Vec<f64>>,
    max_bins: usize,
}

impl FeatureBins {
    /// Features with at most `max_bins` distinct values get one bin per value,
    /// which makes histogram split finding exact for them.
    pub fn fit(x: &DMatrix<f64>, max_bins: usize) -> Self {
        let max_bins = max_bins.clamp(2, 256);
        let n = x.nrows();
        let stride = n.div_ceil(BOUNDARY_SAMPLE).max(1);
        let boundaries = (0..x.ncols())
            .into_par_iter()
            .map(|j| {
                let col = x.column(j);
                let mut values: Vec<f64> = col.iter().step_by(stride).copied().collect();
                values.sort_by(f64::total_cmp);
                feature_boundaries(&values, max_bins)
            })
            .collect();
        FeatureBins { boundaries, max_bins }
    }

    pub fn num_features(&self) -> usize {
        self.boundaries.len()
    }

    pub fn num_bins(&self, feature: usize) -> usize {
        self.boundaries[feature].len() + 1
    }

    pub fn max_bins(&self) -> usize {
        self.max_bins
    }

    /// Threshold such that `x <= threshold` exactly when `bin(x) <= bin`.
    pub fn threshold(&self, feature: usize, bin: usize) -> f64 {
        self.boundaries[feature][bin]
    }

    pub fn bin(&self, feature: usize, value: f64) -> u8 {
        self.boundaries[feature].partition_point(|&t| t < value) as u8
    }

    /// Row-major binned copy of `x`.
    pub fn transform(&self, x: &DMatrix<f64>) -> BinnedMatrix {
        let (n, p) = (x.nrows(), x.ncols());
        let mut codes = vec![0u8; n * p];
        codes.par_chunks_mut(p.max(1) * 4096).enumerate().for_each(|(chunk, out)| {
            let start = chunk * 4096;
            for (r, row) in out.chunks_mut(p.max(1)).enumerate() {
                for (j, code) in row.iter_mut().enumerate() {
                    *code = self.bin(j, x[(start + r, j)]);
                }
            }
        });
        BinnedMatrix { n, p, codes }
    }
}

fn feature_boundaries(sorted: &[f64], max_bins: usize) -> Vec<f64> {
    let mut distinct: Vec<(f64, usize)> = Vec::new();
    for &v in sorted {
        match distinct.last_mut() {
            Some((last, count)) if *last == v => *count += 1,
            _ => distinct.push((v, 1)),
        }
    }
    let cut_after: Vec<usize> = if distinct.len() <= max_bins {
        (0..distinct.len().saturating_sub(1)).collect()
    } else {
        let total = sorted.len() as f64;
        let per_bin = total / max_bins as f64;
        let mut cuts = Vec::new();
        let mut seen = 0usize;
        for (i, &(_, count)) in distinct.iter().enumerate().take(distinct.len() - 1) {
            seen += count;
            if seen as f64 >= per_bin * (cuts.len() + 1) as f64 && cuts.len() + 1 < max_bins {
                cuts.push(i);
            }
        }
        cuts
    };
    cut_after
        .into_iter()
        .map(|i| {
            let (lo, hi) = (distinct[i].0, distinct[i + 1].0);
            let mid = lo + (hi - lo) / 2.0;
            if mid < hi {
                mid
            } else {
                lo
            }
        })
        .collect()
}

/// Row-major `n × p` matrix of bin codes.
#[derive(Debug, Clone)]
pub struct BinnedMatrix {
    n: usize,
    p: usize,
    codes: Vec<u8>,
}

impl BinnedMatrix {
    pub fn nrows(&self) -> usize {
        self.n
    }

    pub fn ncols(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[u8] {
        &self.codes[i * self.p..(i + 1) * self.p]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.codes[i * self.p + j]
    }
}
