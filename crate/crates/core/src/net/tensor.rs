use crate::error::{Error, Result};

/// Dense row-major matrix of doubles.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, v: f64) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![v; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values for a {rows}x{cols} tensor",
                data.len()
            )));
        }
        Ok(Tensor { rows, cols, data })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `self * w + b` with `b` broadcast over rows.
    pub fn affine(&self, w: &Tensor, b: &Tensor) -> Tensor {
        assert_eq!(self.cols, w.rows, "affine: inner dimensions");
        assert_eq!(b.len(), w.cols, "affine: bias width");
        let mut out = Tensor::zeros(self.rows, w.cols);
        for i in 0..self.rows {
            let x = self.row(i);
            let o = &mut out.data[i * w.cols..(i + 1) * w.cols];
            o.copy_from_slice(&b.data);
            for (k, &xk) in x.iter().enumerate() {
                if xk != 0.0 {
                    for (ov, wv) in o.iter_mut().zip(w.row(k)) {
                        *ov += xk * wv;
                    }
                }
            }
        }
        out
    }

    /// `self^T * g`, accumulated into `acc`.
    pub fn t_matmul_into(&self, g: &Tensor, acc: &mut Tensor) {
        assert_eq!(self.rows, g.rows);
        assert_eq!(acc.shape(), (self.cols, g.cols));
        for i in 0..self.rows {
            let gi = g.row(i);
            for (k, &xk) in self.row(i).iter().enumerate() {
                if xk != 0.0 {
                    for (a, gv) in acc.row_mut(k).iter_mut().zip(gi) {
                        *a += xk * gv;
                    }
                }
            }
        }
    }

    /// `self * w^T`.
    pub fn matmul_t(&self, w: &Tensor) -> Tensor {
        assert_eq!(self.cols, w.cols);
        let mut out = Tensor::zeros(self.rows, w.rows);
        for i in 0..self.rows {
            let g = self.row(i);
            for k in 0..w.rows {
                out.data[i * w.rows + k] = g.iter().zip(w.row(k)).map(|(a, b)| a * b).sum();
            }
        }
        out
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn hconcat(&self, other: &Tensor) -> Tensor {
        assert_eq!(self.rows, other.rows);
        let cols = self.cols + other.cols;
        let mut data = Vec::with_capacity(self.rows * cols);
        for i in 0..self.rows {
            data.extend_from_slice(self.row(i));
            data.extend_from_slice(other.row(i));
        }
        Tensor {
            rows: self.rows,
            cols,
            data,
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_and_transposes() {
        let x = Tensor::from_vec(2, 3, vec![1.0, 2.0, 3.0, -1.0, 0.0, 4.0]).unwrap();
        let w = Tensor::from_vec(3, 2, vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap();
        let b = Tensor::from_vec(1, 2, vec![0.5, -0.5]).unwrap();
        let y = x.affine(&w, &b);
        assert_eq!(y.data, vec![4.5, 4.5, 3.5, 3.5]);
        let g = Tensor::filled(2, 2, 1.0);
        let mut acc = Tensor::zeros(3, 2);
        x.t_matmul_into(&g, &mut acc);
        assert_eq!(acc.data, vec![0.0, 0.0, 2.0, 2.0, 7.0, 7.0]);
        assert_eq!(g.matmul_t(&w).data, vec![1.0, 1.0, 2.0, 1.0, 1.0, 2.0]);
        let c = x.hconcat(&y.map(|v| -v));
        assert_eq!(c.shape(), (2, 5));
        assert_eq!(c.row(1), &[-1.0, 0.0, 4.0, -3.5, -3.5]);
    }

    #[test]
    fn shape_checked() {
        assert!(Tensor::from_vec(2, 2, vec![0.0; 3]).is_err());
    }
}
