use serde::Serialize;

/// Compressed sparse row matrix.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CsrMatrix {
    n_cols: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    pub fn new(n_cols: usize) -> Self {
        CsrMatrix { n_cols, row_ptr: vec![0], cols: Vec::new(), vals: Vec::new() }
    }

    /// Appends a row given as `(column, value)` pairs sorted by column.
    pub fn push_row(&mut self, entries: impl IntoIterator<Item = (u32, f64)>) {
        for (c, v) in entries {
            debug_assert!((c as usize) < self.n_cols);
            self.cols.push(c);
            self.vals.push(v);
        }
        self.row_ptr.push(self.cols.len());
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let mut m = CsrMatrix::new(rows.first().map_or(0, Vec::len));
        for r in rows {
            m.push_row(r.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, v)| (j as u32, *v)));
        }
        m
    }

    pub fn n_rows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().zip(&self.vals[r]).map(|(c, v)| (*c as usize, *v))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|(c, _)| *c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_rows()];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let r = self.row_ptr[i]..self.row_ptr[i + 1];
            *yi = self.cols[r.clone()].iter().zip(&self.vals[r]).map(|(c, v)| v * x[*c as usize]).sum();
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.n_rows())
            .map(|i| {
                let mut r = vec![0.0; self.n_cols];
                for (j, v) in self.row(i) {
                    r[j] = v;
                }
                r
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_round_trip_and_product() {
        let d = vec![vec![1.0, 0.0, 2.0], vec![0.0, 0.0, 0.0], vec![0.0, 3.0, -1.0]];
        let m = CsrMatrix::from_dense(&d);
        assert_eq!(m.nnz(), 4);
        assert_eq!(m.to_dense(), d);
        assert_eq!(m.mul_vec(&[1.0, 2.0, 3.0]), vec![7.0, 0.0, 3.0]);
        assert_eq!(m.get(2, 1), 3.0);
        assert_eq!(m.get(1, 1), 0.0);
    }
}
