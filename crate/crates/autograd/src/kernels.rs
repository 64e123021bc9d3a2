//! Dense kernels behind the graph ops: GEMM wrappers and im2col/col2im.

/// `c = alpha * op(a) * op(b) + beta * c`, all row-major.
///
/// `op(a)` is `m x k`, `op(b)` is `k x n`. With `trans_a` the slice `a` holds
/// a `k x m` matrix; likewise for `trans_b`.
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    trans_a: bool,
    trans_b: bool,
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    b: &[f64],
    beta: f64,
    c: &mut [f64],
) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for v in c.iter_mut() {
            *v *= beta;
        }
        return;
    }
    let (rsa, csa) = if trans_a { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the asserts above pin every slice to the exact extent the
    // strides address, so all reads and writes stay in bounds.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Geometry of a square-kernel sliding window over one image.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Window {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_height: usize,
    pub out_width: usize,
}

impl Window {
    pub fn rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    pub fn cols(&self) -> usize {
        self.out_height * self.out_width
    }

    #[inline]
    fn source(&self, o: usize, k: usize) -> Option<usize> {
        let i = (o * self.stride + k) as isize - self.padding as isize;
        (i >= 0).then_some(i as usize)
    }
}

/// Unfold `img` (`C x H x W`) into `cols` (`C*k*k x Ho*Wo`).
pub fn im2col(img: &[f64], win: &Window, cols: &mut [f64]) {
    debug_assert_eq!(img.len(), win.channels * win.height * win.width);
    debug_assert_eq!(cols.len(), win.rows() * win.cols());
    let ncols = win.cols();
    let k = win.kernel;
    for c in 0..win.channels {
        let plane = &img[c * win.height * win.width..(c + 1) * win.height * win.width];
        for kh in 0..k {
            for kw in 0..k {
                let row = (c * k + kh) * k + kw;
                let dst = &mut cols[row * ncols..(row + 1) * ncols];
                for oh in 0..win.out_height {
                    let line = &mut dst[oh * win.out_width..(oh + 1) * win.out_width];
                    match win.source(oh, kh).filter(|&ih| ih < win.height) {
                        None => line.fill(0.0),
                        Some(ih) => {
                            let src = &plane[ih * win.width..(ih + 1) * win.width];
                            for (ow, v) in line.iter_mut().enumerate() {
                                *v = match win.source(ow, kw) {
                                    Some(iw) if iw < win.width => src[iw],
                                    _ => 0.0,
                                };
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-add `cols` back into `img`.
pub fn col2im(cols: &[f64], win: &Window, img: &mut [f64]) {
    debug_assert_eq!(img.len(), win.channels * win.height * win.width);
    debug_assert_eq!(cols.len(), win.rows() * win.cols());
    let ncols = win.cols();
    let k = win.kernel;
    for c in 0..win.channels {
        let plane = &mut img[c * win.height * win.width..(c + 1) * win.height * win.width];
        for kh in 0..k {
            for kw in 0..k {
                let row = (c * k + kh) * k + kw;
                let src = &cols[row * ncols..(row + 1) * ncols];
                for oh in 0..win.out_height {
                    let Some(ih) = win.source(oh, kh).filter(|&ih| ih < win.height) else {
                        continue;
                    };
                    let dst = &mut plane[ih * win.width..(ih + 1) * win.width];
                    let line = &src[oh * win.out_width..(oh + 1) * win.out_width];
                    for (ow, v) in line.iter().enumerate() {
                        if let Some(iw) = win.source(ow, kw) {
                            if iw < win.width {
                                dst[iw] += v;
                            }
                        }
                    }
                }
            }
        }
    }
}
