//! Small dense matrix kernels used by the convolution and linear layers.
//! All matrices are row-major slices; every routine accumulates into `c`.

use super::Real;

#[inline(always)]
fn axpy<T: Real>(c: &mut [T], s: T, b: &[T]) {
    let n = c.len().min(b.len());
    let (c, b) = (&mut c[..n], &b[..n]);
    for i in 0..n {
        c[i] += s * b[i];
    }
}

#[inline(always)]
fn axpy4<T: Real>(c: [&mut [T]; 4], s: [T; 4], b: &[T]) {
    let n = b.len();
    let [c0, c1, c2, c3] = c;
    let (c0, c1, c2, c3) = (&mut c0[..n], &mut c1[..n], &mut c2[..n], &mut c3[..n]);
    for i in 0..n {
        let v = b[i];
        c0[i] += s[0] * v;
        c1[i] += s[1] * v;
        c2[i] += s[2] * v;
        c3[i] += s[3] * v;
    }
}

/// Fixed-order dot product with eight partial sums.
#[inline]
pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [T::zero(); 8];
    let chunks = n / 8;
    for k in 0..chunks {
        let (x, y) = (&a[k * 8..k * 8 + 8], &b[k * 8..k * 8 + 8]);
        for j in 0..8 {
            acc[j] += x[j] * y[j];
        }
    }
    let mut tail = T::zero();
    for i in chunks * 8..n {
        tail += a[i] * b[i];
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// `c[m×n] += a[m×k] · b[k×n]`
pub(crate) fn gemm_nn<T: Real>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T]) {
    gemm_rows(m, k, n, |i, l| a[i * k + l], b, c);
}

/// `c[m×n] += aᵀ · b` with `a` stored as `[k×m]`.
pub(crate) fn gemm_tn<T: Real>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T]) {
    gemm_rows(m, k, n, |i, l| a[l * m + i], b, c);
}

fn gemm_rows<T: Real>(
    m: usize,
    k: usize,
    n: usize,
    coef: impl Fn(usize, usize) -> T,
    b: &[T],
    c: &mut [T],
) {
    let mut rows = c[..m * n].chunks_mut(n);
    let mut i = 0;
    while i + 4 <= m {
        let (r0, r1, r2, r3) = (
            rows.next().unwrap(),
            rows.next().unwrap(),
            rows.next().unwrap(),
            rows.next().unwrap(),
        );
        for l in 0..k {
            let s = [coef(i, l), coef(i + 1, l), coef(i + 2, l), coef(i + 3, l)];
            if s.iter().all(|v| v.is_zero()) {
                continue;
            }
            axpy4([&mut *r0, &mut *r1, &mut *r2, &mut *r3], s, &b[l * n..(l + 1) * n]);
        }
        i += 4;
    }
    for row in rows {
        for l in 0..k {
            let s = coef(i, l);
            if !s.is_zero() {
                axpy(row, s, &b[l * n..(l + 1) * n]);
            }
        }
        i += 1;
    }
}

/// `c[m×k] += a[m×n] · bᵀ` with `b` stored as `[k×n]`.
pub(crate) fn gemm_nt<T: Real>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T]) {
    for i in 0..m {
        let ar = &a[i * n..(i + 1) * n];
        for j in 0..k {
            c[i * k + j] += dot(ar, &b[j * n..(j + 1) * n]);
        }
    }
}
