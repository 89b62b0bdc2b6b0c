//! Dense row-major tensors.
//!
//! Storage is a flat `Vec<Real>` plus a shape; there are no strides or views.
//! Elementwise operations require exactly equal shapes (no broadcasting).
//! Every matrix product accumulates each output element over the inner
//! dimension in index order, so results are bit-reproducible.

use std::fmt;

use crate::{Error, Real, Result};

#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<Real>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.data.len() <= 16 {
            write!(f, "Tensor{:?} {:?}", self.shape, self.data)
        } else {
            write!(f, "Tensor{:?} [{} values]", self.shape, self.data.len())
        }
    }
}

/// Elementwise binary operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Elementwise {
    Add,
    Sub,
    Hadamard,
}

/// Right-hand operand of [`elementwise`].
#[derive(Debug, Clone, Copy)]
pub enum Operand<'a> {
    Tensor(&'a Tensor),
    Scalar(Real),
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<Real>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::dimension(format!(
                "shape {:?} needs {} values, got {}",
                shape,
                expected,
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn filled(shape: &[usize], value: Real) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn zeros_like(other: &Tensor) -> Self {
        Tensor::zeros(&other.shape)
    }

    pub fn vector(data: Vec<Real>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn scalar(value: Real) -> Self {
        Tensor {
            shape: vec![],
            data: vec![value],
        }
    }

    /// Builds a matrix from equal-length rows.
    pub fn from_rows<R: AsRef<[Real]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != cols {
                return Err(Error::dimension(format!(
                    "row {i} has {} values, expected {cols}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Tensor::new(vec![rows.len(), cols], data)
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Tensor::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[Real] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Real] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Real> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    /// Leading extent; 1 for scalars.
    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(1)
    }

    /// Number of values per leading index.
    pub fn row_len(&self) -> usize {
        self.shape.iter().skip(1).product()
    }

    /// Trailing extent; 1 for vectors and scalars.
    pub fn cols(&self) -> usize {
        if self.shape.len() >= 2 {
            self.shape[self.shape.len() - 1]
        } else {
            1
        }
    }

    pub fn row(&self, i: usize) -> &[Real] {
        let w = self.row_len();
        &self.data[i * w..(i + 1) * w]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [Real] {
        let w = self.row_len();
        &mut self.data[i * w..(i + 1) * w]
    }

    pub fn get(&self, i: usize, j: usize) -> Real {
        self.data[i * self.cols() + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: Real) {
        let c = self.cols();
        self.data[i * c + j] = value;
    }

    /// Returns the single value of a one-element tensor.
    pub fn item(&self) -> Real {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(Error::dimension(format!(
                "cannot reshape {:?} into {:?}",
                self.shape, shape
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    /// Copies rows `[start, end)` of the leading axis.
    pub fn slice_rows(&self, start: usize, end: usize) -> Tensor {
        let w = self.row_len();
        let mut shape = self.shape.clone();
        shape[0] = end - start;
        Tensor {
            shape,
            data: self.data[start * w..end * w].to_vec(),
        }
    }

    /// Gathers the given rows of the leading axis, in order.
    pub fn select_rows(&self, indices: &[usize]) -> Tensor {
        let w = self.row_len();
        let mut data = Vec::with_capacity(indices.len() * w);
        for &i in indices {
            data.extend_from_slice(&self.data[i * w..(i + 1) * w]);
        }
        let mut shape = self.shape.clone();
        shape[0] = indices.len();
        Tensor { shape, data }
    }

    pub fn map(&self, f: impl Fn(Real) -> Real) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn sum(&self) -> Real {
        self.data.iter().sum()
    }

    pub fn norm(&self) -> Real {
        self.data.iter().map(|x| x * x).sum::<Real>().sqrt()
    }

    pub fn max_abs(&self) -> Real {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn transpose(&self) -> Result<Tensor> {
        if self.ndim() != 2 {
            return Err(Error::dimension(format!(
                "transpose needs a matrix, got shape {:?}",
                self.shape
            )));
        }
        let (r, c) = (self.shape[0], self.shape[1]);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Ok(Tensor {
            shape: vec![c, r],
            data: out,
        })
    }

    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        matmul(self, other)
    }

    pub fn dot(&self, other: &Tensor) -> Result<Real> {
        dot(self, other)
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        elementwise(Elementwise::Add, self, Operand::Tensor(other))
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        elementwise(Elementwise::Sub, self, Operand::Tensor(other))
    }

    pub fn hadamard(&self, other: &Tensor) -> Result<Tensor> {
        elementwise(Elementwise::Hadamard, self, Operand::Tensor(other))
    }

    pub fn scale(&self, factor: Real) -> Tensor {
        self.map(|x| x * factor)
    }

    pub fn scale_in_place(&mut self, factor: Real) {
        self.data.iter_mut().for_each(|x| *x *= factor);
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: Real, other: &Tensor) -> Result<()> {
        check_same_shape(self, other, "axpy")?;
        for (y, x) in self.data.iter_mut().zip(&other.data) {
            *y += alpha * x;
        }
        Ok(())
    }

    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        check_same_shape(self, other, "add_assign")?;
        for (y, x) in self.data.iter_mut().zip(&other.data) {
            *y += x;
        }
        Ok(())
    }

    /// Sums over the leading axis.
    pub fn sum_rows(&self) -> Tensor {
        let w = self.row_len();
        let mut out = vec![0.0; w];
        for row in self.data.chunks_exact(w.max(1)) {
            for (o, x) in out.iter_mut().zip(row) {
                *o += x;
            }
        }
        Tensor {
            shape: self.shape[1..].to_vec(),
            data: out,
        }
    }

    /// Appends a column filled with `value` to a matrix.
    pub fn append_column(&self, value: Real) -> Result<Tensor> {
        if self.ndim() != 2 {
            return Err(Error::dimension(format!(
                "append_column needs a matrix, got shape {:?}",
                self.shape
            )));
        }
        let (r, c) = (self.shape[0], self.shape[1]);
        let mut data = Vec::with_capacity(r * (c + 1));
        for row in self.data.chunks_exact(c.max(1)).take(r) {
            data.extend_from_slice(&row[..c]);
            data.push(value);
        }
        if c == 0 {
            data = vec![value; r];
        }
        Ok(Tensor {
            shape: vec![r, c + 1],
            data,
        })
    }
}

fn check_same_shape(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    if a.shape != b.shape {
        return Err(Error::dimension(format!(
            "{what}: shapes {:?} and {:?} differ",
            a.shape, b.shape
        )));
    }
    Ok(())
}

/// Sum of elementwise products over the flattened tensors.
pub fn dot(a: &Tensor, b: &Tensor) -> Result<Real> {
    check_same_shape(a, b, "dot")?;
    Ok(a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum())
}

pub fn elementwise(op: Elementwise, a: &Tensor, b: Operand<'_>) -> Result<Tensor> {
    let f: fn(Real, Real) -> Real = match op {
        Elementwise::Add => |x, y| x + y,
        Elementwise::Sub => |x, y| x - y,
        Elementwise::Hadamard => |x, y| x * y,
    };
    let data = match b {
        Operand::Scalar(s) => a.data.iter().map(|&x| f(x, s)).collect(),
        Operand::Tensor(b) => {
            check_same_shape(a, b, "elementwise")?;
            a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect()
        }
    };
    Ok(Tensor {
        shape: a.shape.clone(),
        data,
    })
}

/// Arithmetic mean over the leading (sample) axis.
pub fn reduce_mean(a: &Tensor) -> Result<Tensor> {
    if a.ndim() == 0 || a.shape[0] == 0 {
        return Err(Error::Degenerate(format!(
            "mean over an empty leading axis (shape {:?})",
            a.shape
        )));
    }
    let n = a.shape[0] as Real;
    let mut s = a.sum_rows();
    s.scale_in_place(1.0 / n);
    Ok(s)
}

fn matrix_dims(t: &Tensor, name: &str) -> Result<(usize, usize)> {
    match t.shape.as_slice() {
        [r, c] => Ok((*r, *c)),
        _ => Err(Error::dimension(format!(
            "{name} must be a matrix, got shape {:?}",
            t.shape
        ))),
    }
}

/// `a · b` for `a: m×k`, `b: k×n`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = matrix_dims(a, "left operand")?;
    let (k2, n) = matrix_dims(b, "right operand")?;
    if k != k2 {
        return Err(Error::dimension(format!(
            "matmul: {:?} · {:?}",
            a.shape, b.shape
        )));
    }
    let mut out = vec![0.0; m * n];
    gemm(m, k, n, &a.data, k, 1, &b.data, &mut out);
    Ok(Tensor {
        shape: vec![m, n],
        data: out,
    })
}

/// `aᵀ · b` for `a: k×m`, `b: k×n`, without materializing the transpose.
pub fn matmul_tn(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (k, m) = matrix_dims(a, "left operand")?;
    let (k2, n) = matrix_dims(b, "right operand")?;
    if k != k2 {
        return Err(Error::dimension(format!(
            "matmul_tn: {:?}ᵀ · {:?}",
            a.shape, b.shape
        )));
    }
    let mut out = vec![0.0; m * n];
    gemm(m, k, n, &a.data, 1, m, &b.data, &mut out);
    Ok(Tensor {
        shape: vec![m, n],
        data: out,
    })
}

/// `a · bᵀ` for `a: m×k`, `b: n×k`.
pub fn matmul_nt(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (_, k) = matrix_dims(a, "left operand")?;
    let (_, k2) = matrix_dims(b, "right operand")?;
    if k != k2 {
        return Err(Error::dimension(format!(
            "matmul_nt: {:?} · {:?}ᵀ",
            a.shape, b.shape
        )));
    }
    matmul(a, &b.transpose()?)
}

const MR: usize = 6;
#[cfg(not(feature = "single-precision"))]
const NR: usize = 16;
// Twice the lanes per register, so twice the columns per tile.
#[cfg(feature = "single-precision")]
const NR: usize = 32;

/// `out = A · B` where `A[i][p] = a[i * row_stride + p * inner_stride]` and
/// `B` is row-major `k×n`.
///
/// Every output element is accumulated over `p = 0..k` strictly in order,
/// starting from zero, so the result is bitwise equal to the textbook triple
/// loop. Speed comes from keeping an `MR×NR` tile of accumulators in registers
/// while streaming a packed `k×NR` panel of `B`.
/// `acc + x·b` over one tile row. Written as a whole-array map so LLVM keeps
/// the row in vector registers for both precisions.
#[inline(always)]
fn axpy_tile(acc: [Real; NR], x: Real, b: &[Real; NR]) -> [Real; NR] {
    std::array::from_fn(|c| acc[c] + x * b[c])
}

#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[Real],
    row_stride: usize,
    inner_stride: usize,
    b: &[Real],
    out: &mut [Real],
) {
    if m == 0 || n == 0 {
        return;
    }
    let a_at = |i: usize, p: usize| a[i * row_stride + p * inner_stride];
    let full_cols = n - n % NR;
    let full_rows = m - m % MR;
    let panels = full_cols / NR;
    // packed[q][p][c] = B[p][q * NR + c]
    let mut packed = vec![0.0; panels * k * NR];
    for (q, dst) in packed.chunks_exact_mut(k * NR).enumerate() {
        for p in 0..k {
            dst[p * NR..(p + 1) * NR].copy_from_slice(&b[p * n + q * NR..p * n + (q + 1) * NR]);
        }
    }
    let mut a_pack = vec![0.0; k * MR];

    for i0 in (0..full_rows).step_by(MR) {
        for p in 0..k {
            for r in 0..MR {
                a_pack[p * MR + r] = a_at(i0 + r, p);
            }
        }
        for (q, panel) in packed.chunks_exact(k * NR).enumerate() {
            let mut acc = [[0.0 as Real; NR]; MR];
            for (av, bv) in a_pack.chunks_exact(MR).zip(panel.chunks_exact(NR)) {
                let bv: &[Real; NR] = bv.try_into().expect("panel rows hold NR values");
                for (row, &x) in acc.iter_mut().zip(av) {
                    *row = axpy_tile(*row, x, bv);
                }
            }
            let j0 = q * NR;
            for (r, row) in acc.iter().enumerate() {
                out[(i0 + r) * n + j0..(i0 + r) * n + j0 + NR].copy_from_slice(row);
            }
        }
    }
    for i in full_rows..m {
        for (q, panel) in packed.chunks_exact(k * NR).enumerate() {
            let mut acc = [0.0 as Real; NR];
            for (p, bv) in panel.chunks_exact(NR).enumerate() {
                let x = a_at(i, p);
                for c in 0..NR {
                    acc[c] += x * bv[c];
                }
            }
            out[i * n + q * NR..i * n + (q + 1) * NR].copy_from_slice(&acc);
        }
    }
    if full_cols < n {
        for i in 0..m {
            let c = &mut out[i * n + full_cols..(i + 1) * n];
            for p in 0..k {
                let x = a_at(i, p);
                for (cv, bv) in c.iter_mut().zip(&b[p * n + full_cols..(p + 1) * n]) {
                    *cv += x * bv;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(rows: &[&[Real]]) -> Tensor {
        Tensor::from_rows(rows).unwrap()
    }

    /// Textbook triple loop used as the reference product.
    fn naive(a: &Tensor, b: &Tensor) -> Tensor {
        let (r, k, c) = (a.shape()[0], a.shape()[1], b.shape()[1]);
        let mut out = Tensor::zeros(&[r, c]);
        for i in 0..r {
            for j in 0..c {
                let mut s = 0.0;
                for p in 0..k {
                    s += a.get(i, p) * b.get(p, j);
                }
                out.set(i, j, s);
            }
        }
        out
    }

    #[test]
    fn matmul_examples() {
        let x = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(matmul(&Tensor::identity(2), &x).unwrap(), x);
        assert_eq!(
            matmul(&m(&[&[1.0, 2.0]]), &m(&[&[3.0], &[4.0]])).unwrap(),
            m(&[&[11.0]])
        );
        let any = Tensor::new(vec![3, 4], (0..12).map(|v| v as Real).collect()).unwrap();
        assert_eq!(
            matmul(&Tensor::zeros(&[2, 3]), &any).unwrap(),
            Tensor::zeros(&[2, 4])
        );
    }

    #[test]
    fn matmul_shape_mismatch_names_both_shapes() {
        let err = matmul(&Tensor::zeros(&[2, 3]), &Tensor::zeros(&[2, 3])).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]"), "{msg}");
        assert!(matches!(err, Error::Dimension(_)));
    }

    #[test]
    fn blocked_kernel_is_bitwise_equal_to_naive_order() {
        // Sizes straddle both block edges.
        let a = Tensor::new(vec![7, 300], (0..2100).map(|v| ((v * 37 % 101) as Real).sin()).collect()).unwrap();
        let b = Tensor::new(vec![300, 261], (0..78300).map(|v| ((v * 13 % 97) as Real).cos()).collect()).unwrap();
        assert_eq!(matmul(&a, &b).unwrap(), naive(&a, &b));
        let at = a.transpose().unwrap();
        assert_eq!(matmul_tn(&at, &b).unwrap(), naive(&a, &b));
        let bt = b.transpose().unwrap();
        assert_eq!(matmul_nt(&a, &bt).unwrap(), naive(&a, &b));
    }

    #[test]
    fn dot_examples() {
        let e = Tensor::vector(vec![1.0, 0.0, 0.0]);
        assert_eq!(dot(&e, &Tensor::vector(vec![5.0, 6.0, 7.0])).unwrap(), 5.0);
        let x = Tensor::vector(vec![3.0, 4.0]);
        assert_eq!(dot(&x, &x).unwrap(), 25.0);
        assert!(dot(&x, &e).is_err());
    }

    #[test]
    fn elementwise_examples() {
        let a = Tensor::vector(vec![1.0, 2.0]);
        let b = Tensor::vector(vec![3.0, 4.0]);
        assert_eq!(a.hadamard(&b).unwrap().data(), &[3.0, 8.0]);
        assert_eq!(
            elementwise(Elementwise::Add, &a, Operand::Scalar(0.0)).unwrap(),
            a
        );
        assert_eq!(Tensor::vector(vec![2.0, 4.0]).scale(0.5).data(), &[1.0, 2.0]);
        assert!(a.add(&Tensor::vector(vec![1.0])).is_err());
    }

    #[test]
    fn reduce_mean_examples() {
        let x = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(reduce_mean(&x).unwrap().data(), &[2.0, 3.0]);
        let one = m(&[&[5.0, -1.0]]);
        assert_eq!(reduce_mean(&one).unwrap().data(), &[5.0, -1.0]);
        let row: [Real; 2] = [0.25, 7.0];
        let copies = m(&[&row[..]; 5]);
        assert_eq!(reduce_mean(&copies).unwrap().data(), &[0.25, 7.0]);
        assert!(matches!(
            reduce_mean(&Tensor::zeros(&[0, 3])),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn append_column_adds_constant_feature() {
        let x = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(
            x.append_column(1.0).unwrap(),
            m(&[&[1.0, 2.0, 1.0], &[3.0, 4.0, 1.0]])
        );
    }

    fn mat(r: usize, c: usize) -> impl Strategy<Value = Tensor> {
        prop::collection::vec(-2.0..2.0 as Real, r * c)
            .prop_map(move |d| Tensor::new(vec![r, c], d).unwrap())
    }

    fn rel(a: &Tensor, b: &Tensor) -> Real {
        a.sub(b).unwrap().norm() / a.norm().max(b.norm()).max(1e-300)
    }

    proptest! {
        #[test]
        fn matmul_is_associative(a in mat(4, 5), b in mat(5, 3), c in mat(3, 6)) {
            let left = matmul(&matmul(&a, &b).unwrap(), &c).unwrap();
            let right = matmul(&a, &matmul(&b, &c).unwrap()).unwrap();
            prop_assert!(rel(&left, &right) <= 1e-10);
        }

        #[test]
        fn adjoint_identity(mm in mat(6, 4), a in mat(6, 1), b in mat(4, 1)) {
            let lhs = dot(&a, &matmul(&mm, &b).unwrap()).unwrap();
            let rhs = dot(&matmul(&mm.transpose().unwrap(), &a).unwrap(), &b).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(rhs.abs()).max(1.0));
        }

        #[test]
        fn dot_is_symmetric(a in mat(3, 3), b in mat(3, 3)) {
            prop_assert_eq!(dot(&a, &b).unwrap(), dot(&b, &a).unwrap());
        }

        #[test]
        fn matmul_is_bit_reproducible(a in mat(9, 7), b in mat(7, 5)) {
            prop_assert_eq!(matmul(&a, &b).unwrap(), matmul(&a, &b).unwrap());
        }
    }
}
