//! Compressed sparse column matrices, built from triplets. Used for the
//! constraint matrix of standard-form programs and the interior-point KKT
//! systems.

#[derive(Clone, Debug)]
pub struct Csc {
    nrows: usize,
    ncols: usize,
    pub colptr: Vec<usize>,
    pub rowind: Vec<usize>,
    pub values: Vec<f64>,
}

impl Csc {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Csc {
            nrows,
            ncols,
            colptr: vec![0; ncols + 1],
            rowind: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn from_parts(
        nrows: usize,
        ncols: usize,
        colptr: Vec<usize>,
        rowind: Vec<usize>,
        values: Vec<f64>,
    ) -> Self {
        assert_eq!(colptr.len(), ncols + 1);
        assert_eq!(rowind.len(), values.len());
        assert_eq!(*colptr.last().unwrap(), rowind.len());
        Csc {
            nrows,
            ncols,
            colptr,
            rowind,
            values,
        }
    }

    /// Builds from (row, col, value) triplets, summing duplicate positions.
    /// Explicit zeros keep their structural slot.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut order: Vec<usize> = (0..triplets.len()).collect();
        order.sort_unstable_by_key(|&k| {
            let (r, c, _) = triplets[k];
            (c, r)
        });
        let mut colptr = vec![0usize; ncols + 1];
        let mut rowind = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        for &k in &order {
            let (r, c, v) = triplets[k];
            assert!(r < nrows && c < ncols, "triplet ({r},{c}) out of bounds");
            rowind.push(r);
            values.push(v);
            colptr[c + 1] += 1;
        }
        for c in 0..ncols {
            colptr[c + 1] += colptr[c];
        }
        let mut m = Csc {
            nrows,
            ncols,
            colptr,
            rowind,
            values,
        };
        m.sum_duplicates();
        m
    }

    /// Merge adjacent duplicate (row) entries inside each column.
    fn sum_duplicates(&mut self) {
        let mut w_ri = Vec::with_capacity(self.rowind.len());
        let mut w_v = Vec::with_capacity(self.values.len());
        let mut new_colptr = vec![0usize; self.ncols + 1];
        for c in 0..self.ncols {
            let start = self.colptr[c];
            let end = self.colptr[c + 1];
            let mut last_row = usize::MAX;
            for k in start..end {
                let r = self.rowind[k];
                let v = self.values[k];
                if r == last_row {
                    let idx = w_v.len() - 1;
                    w_v[idx] += v;
                } else {
                    w_ri.push(r);
                    w_v.push(v);
                    last_row = r;
                }
            }
            new_colptr[c + 1] = w_ri.len();
        }
        self.colptr = new_colptr;
        self.rowind = w_ri;
        self.values = w_v;
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn col(&self, c: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.colptr[c]..self.colptr[c + 1];
        range.map(move |k| (self.rowind[k], self.values[k]))
    }

    /// y = A x
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        y.iter_mut().for_each(|v| *v = 0.0);
        for c in 0..self.ncols {
            let xc = x[c];
            if xc == 0.0 {
                continue;
            }
            for k in self.colptr[c]..self.colptr[c + 1] {
                y[self.rowind[k]] += self.values[k] * xc;
            }
        }
    }

    /// y = A' x
    pub fn matvec_t(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.ncols];
        self.matvec_t_into(x, &mut y);
        y
    }

    pub fn matvec_t_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.nrows);
        assert_eq!(y.len(), self.ncols);
        for c in 0..self.ncols {
            let mut acc = 0.0;
            for k in self.colptr[c]..self.colptr[c + 1] {
                acc += self.values[k] * x[self.rowind[k]];
            }
            y[c] = acc;
        }
    }

    pub fn transpose(&self) -> Csc {
        let mut count = vec![0usize; self.nrows + 1];
        for &r in &self.rowind {
            count[r + 1] += 1;
        }
        for i in 0..self.nrows {
            count[i + 1] += count[i];
        }
        let mut colptr = count.clone();
        let mut rowind = vec![0usize; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for c in 0..self.ncols {
            for k in self.colptr[c]..self.colptr[c + 1] {
                let r = self.rowind[k];
                let dst = colptr[r];
                rowind[dst] = c;
                values[dst] = self.values[k];
                colptr[r] += 1;
            }
        }
        Csc {
            nrows: self.ncols,
            ncols: self.nrows,
            colptr: count,
            rowind,
            values,
        }
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.nnz());
        for c in 0..self.ncols {
            for k in self.colptr[c]..self.colptr[c + 1] {
                out.push((self.rowind[k], c, self.values[k]));
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}
