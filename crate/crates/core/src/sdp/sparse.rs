/// Compressed sparse row matrix with `u32` column indices.
#[derive(Debug, Clone, Default)]
pub(crate) struct Csr {
    pub ncols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<u32>,
    pub data: Vec<f64>,
}

impl Csr {
    pub fn new(ncols: usize) -> Self {
        Self {
            ncols,
            indptr: vec![0],
            indices: Vec::new(),
            data: Vec::new(),
        }
    }

    pub fn nrows(&self) -> usize {
        self.indptr.len() - 1
    }

    pub fn push_row(&mut self, entries: impl IntoIterator<Item = (usize, f64)>) {
        for (j, v) in entries {
            debug_assert!(j < self.ncols);
            self.indices.push(j as u32);
            self.data.push(v);
        }
        self.indptr.push(self.indices.len());
    }

    #[inline]
    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        (&self.indices[a..b], &self.data[a..b])
    }

    /// `out = self · x`
    pub fn mul_vec(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate().take(self.nrows()) {
            let (idx, val) = self.row(i);
            let mut acc = 0.0;
            for (&j, &v) in idx.iter().zip(val) {
                acc += v * x[j as usize];
            }
            *o = acc;
        }
    }

    /// `out += selfᵀ · y`
    pub fn tmul_vec_add(&self, y: &[f64], out: &mut [f64]) {
        for (i, &yi) in y.iter().enumerate().take(self.nrows()) {
            if yi == 0.0 {
                continue;
            }
            let (idx, val) = self.row(i);
            for (&j, &v) in idx.iter().zip(val) {
                out[j as usize] += v * yi;
            }
        }
    }

    pub fn scale(&mut self, row_scale: &[f64], col_scale: &[f64]) {
        for i in 0..self.nrows() {
            let (a, b) = (self.indptr[i], self.indptr[i + 1]);
            let r = row_scale[i];
            for k in a..b {
                self.data[k] *= r * col_scale[self.indices[k] as usize];
            }
        }
    }

    pub fn row_inf_norms(&self) -> Vec<f64> {
        (0..self.nrows())
            .map(|i| self.row(i).1.iter().fold(0.0_f64, |m, v| m.max(v.abs())))
            .collect()
    }

    pub fn col_inf_norms_into(&self, out: &mut [f64]) {
        for (&j, &v) in self.indices.iter().zip(&self.data) {
            let o = &mut out[j as usize];
            *o = o.max(v.abs());
        }
    }

    /// Column-compressed copy: for every column, the `(row, value)` pairs.
    pub fn transpose(&self) -> Csr {
        let mut counts = vec![0usize; self.ncols + 1];
        for &j in &self.indices {
            counts[j as usize + 1] += 1;
        }
        for j in 0..self.ncols {
            counts[j + 1] += counts[j];
        }
        let mut next = counts.clone();
        let mut indices = vec![0u32; self.indices.len()];
        let mut data = vec![0.0; self.data.len()];
        for i in 0..self.nrows() {
            let (idx, val) = self.row(i);
            for (&j, &v) in idx.iter().zip(val) {
                let pos = next[j as usize];
                indices[pos] = i as u32;
                data[pos] = v;
                next[j as usize] += 1;
            }
        }
        Csr {
            ncols: self.nrows(),
            indptr: counts,
            indices,
            data,
        }
    }
}
