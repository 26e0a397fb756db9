//! Dense row-major tensors and tail-padding masks.
//!
//! Every layer input, output, parameter and gradient in this crate is a
//! [`Tensor`]: a shape vector plus a flat `f64` buffer. Batches of
//! variable-length sequences carry a [`Mask`] describing how many leading
//! positions of each row are real data; everything past that is zero padding.

/// Dense n-dimensional array of `f64` in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Zero-filled tensor.
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    /// Wraps an existing buffer. Panics if the buffer length does not match
    /// the product of the extents.
    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Self {
        let n: usize = shape.iter().product();
        assert_eq!(
            data.len(),
            n,
            "shape {:?} expects {} elements, got {}",
            shape,
            n,
            data.len()
        );
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn dim(&self, axis: usize) -> usize {
        self.shape[axis]
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Row `r` of a 2-D tensor as a contiguous slice.
    pub fn row2(&self, r: usize) -> &[f64] {
        let w = self.shape[1];
        &self.data[r * w..(r + 1) * w]
    }

    pub fn row2_mut(&mut self, r: usize) -> &mut [f64] {
        let w = self.shape[1];
        &mut self.data[r * w..(r + 1) * w]
    }

    /// Innermost row `[b, c, :]` of a 3-D tensor as a contiguous slice.
    pub fn row3(&self, b: usize, c: usize) -> &[f64] {
        let (ch, l) = (self.shape[1], self.shape[2]);
        let base = (b * ch + c) * l;
        &self.data[base..base + l]
    }

    pub fn row3_mut(&mut self, b: usize, c: usize) -> &mut [f64] {
        let (ch, l) = (self.shape[1], self.shape[2]);
        let base = (b * ch + c) * l;
        &mut self.data[base..base + l]
    }

    pub fn get2(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.shape[1] + c]
    }

    pub fn set2(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.shape[1] + c] = v;
    }

    pub fn get3(&self, b: usize, c: usize, l: usize) -> f64 {
        self.data[(b * self.shape[1] + c) * self.shape[2] + l]
    }

    pub fn set3(&mut self, b: usize, c: usize, l: usize, v: f64) {
        self.data[(b * self.shape[1] + c) * self.shape[2] + l] = v;
    }

    pub fn fill(&mut self, v: f64) {
        self.data.fill(v);
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `self += scale * other`, elementwise. Shapes must match.
    pub fn add_scaled(&mut self, scale: f64, other: &Tensor) {
        assert_eq!(self.shape, other.shape, "add_scaled shape mismatch");
        axpy(&mut self.data, scale, &other.data);
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }
}

/// Validity mask for a `[batch, max_len]` padded batch.
///
/// Each row is a prefix of ones followed by zeros, so the mask is stored as
/// one valid-prefix length per batch member. Constructing from an explicit
/// indicator rejects masks with interior zeros.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    max_len: usize,
    valid: Vec<usize>,
}

impl Mask {
    /// Mask with every position valid.
    pub fn full(batch: usize, len: usize) -> Self {
        Mask {
            max_len: len,
            valid: vec![len; batch],
        }
    }

    /// Mask from per-row valid lengths. Panics if a length exceeds `max_len`.
    pub fn from_lengths(lengths: &[usize], max_len: usize) -> Self {
        for (i, &l) in lengths.iter().enumerate() {
            assert!(
                l <= max_len,
                "mask row {} has valid length {} > max_len {}",
                i,
                l,
                max_len
            );
        }
        Mask {
            max_len,
            valid: lengths.to_vec(),
        }
    }

    /// Mask from a binary indicator tensor of shape `[batch, max_len]`.
    /// Returns `None` when a row is not a prefix of ones followed by zeros.
    pub fn from_indicator(indicator: &Tensor) -> Option<Self> {
        if indicator.rank() != 2 {
            return None;
        }
        let (batch, max_len) = (indicator.dim(0), indicator.dim(1));
        let mut valid = Vec::with_capacity(batch);
        for b in 0..batch {
            let row = indicator.row2(b);
            let ones = row.iter().take_while(|&&v| v == 1.0).count();
            if row[ones..].iter().any(|&v| v != 0.0) {
                return None;
            }
            valid.push(ones);
        }
        Some(Mask { max_len, valid })
    }

    pub fn batch(&self) -> usize {
        self.valid.len()
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    /// Number of valid leading positions in row `b`.
    pub fn valid_len(&self, b: usize) -> usize {
        self.valid[b]
    }

    pub fn is_valid(&self, b: usize, l: usize) -> bool {
        l < self.valid[b]
    }

    /// Total count of valid positions across the batch.
    pub fn total_valid(&self) -> usize {
        self.valid.iter().sum()
    }
}

/// `y[i] += a * x[i]`. The zip keeps the loop free of bounds checks so it
/// vectorizes; accumulation order is fixed, so results are deterministic.
#[inline]
pub(crate) fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * *xi;
    }
}

/// Dot product with four independent accumulators. The association order is
/// fixed, so the result is deterministic across runs.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let (mut s0, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        s0 += x[0] * y[0];
        s1 += x[1] * y[1];
        s2 += x[2] * y[2];
        s3 += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += x * y;
    }
    ((s0 + s1) + (s2 + s3)) + tail
}
