use crate::types::Dataset;

/// Dense row-major copy of a training subset. Labels are kept both as
/// {0,1} and as {-1,+1}.
pub(crate) struct Design {
    pub n: usize,
    pub d: usize,
    pub x: Vec<f64>,
    pub y01: Vec<f64>,
    pub ypm: Vec<f64>,
}

impl Design {
    pub fn new(dataset: &Dataset, indices: &[usize]) -> Self {
        let d = dataset.dim();
        let mut x = Vec::with_capacity(indices.len() * d);
        let mut y01 = Vec::with_capacity(indices.len());
        for &i in indices {
            let s = dataset.sample(i);
            x.extend_from_slice(&s.measurements);
            y01.push(f64::from(s.label.bit()));
        }
        let ypm = y01.iter().map(|&y| 2.0 * y - 1.0).collect();
        Design {
            n: indices.len(),
            d,
            x,
            y01,
            ypm,
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    /// `X w + b`
    pub fn margins(&self, w: &[f64], b: f64) -> Vec<f64> {
        (0..self.n).map(|i| dot(self.row(i), w) + b).collect()
    }

    /// `Xᵀ v`
    pub fn transpose_times(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.d];
        for (i, &vi) in v.iter().enumerate() {
            if vi != 0.0 {
                axpy(vi, self.row(i), &mut out);
            }
        }
        out
    }

    /// Column-major copy for coordinate-wise solvers.
    pub fn columns(&self) -> Vec<f64> {
        let mut cols = vec![0.0; self.n * self.d];
        for i in 0..self.n {
            for (j, &v) in self.row(i).iter().enumerate() {
                cols[j * self.n + i] = v;
            }
        }
        cols
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
