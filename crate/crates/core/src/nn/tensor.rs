use super::Real;

/// Dense NCHW tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self {
            n,
            c,
            h,
            w,
            data: vec![T::zero(); n * c * h * w],
        }
    }

    pub fn from_vec(n: usize, c: usize, h: usize, w: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), n * c * h * w, "tensor data does not match shape");
        Self { n, c, h, w, data }
    }

    pub fn shape(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.shape() == other.shape()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Elements per sample.
    pub fn sample_len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn sample(&self, i: usize) -> &[T] {
        let s = self.sample_len();
        &self.data[i * s..(i + 1) * s]
    }

    pub fn sample_mut(&mut self, i: usize) -> &mut [T] {
        let s = self.sample_len();
        &mut self.data[i * s..(i + 1) * s]
    }

    pub fn add(&self, other: &Self) -> Self {
        assert!(self.same_shape(other));
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| a + b).collect();
        self.with_data(data)
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert!(self.same_shape(other));
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| a - b).collect();
        self.with_data(data)
    }

    pub fn add_assign(&mut self, other: &Self) {
        assert!(self.same_shape(other));
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&self, k: T) -> Self {
        self.with_data(self.data.iter().map(|&v| v * k).collect())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Same shape, new contents.
    pub fn with_data(&self, data: Vec<T>) -> Self {
        Self::from_vec(self.n, self.c, self.h, self.w, data)
    }

    /// Stacks equally shaped samples into one batch.
    pub fn stack(samples: &[Self]) -> Self {
        assert!(!samples.is_empty(), "cannot stack an empty batch");
        let first = &samples[0];
        let mut data = Vec::with_capacity(samples.len() * first.sample_len() * first.n);
        let mut n = 0;
        for s in samples {
            assert_eq!([s.c, s.h, s.w], [first.c, first.h, first.w]);
            data.extend_from_slice(&s.data);
            n += s.n;
        }
        Self::from_vec(n, first.c, first.h, first.w, data)
    }

    /// Splits a batch into single-sample tensors.
    pub fn unstack(&self) -> Vec<Self> {
        (0..self.n)
            .map(|i| Self::from_vec(1, self.c, self.h, self.w, self.sample(i).to_vec()))
            .collect()
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            n: self.n,
            c: self.c,
            h: self.h,
            w: self.w,
            data: self.data.iter().map(|v| U::from_f64_lossy(v.as_f64())).collect(),
        }
    }
}
