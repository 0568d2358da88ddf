use super::{Real, Tensor};

/// Source index for output position `i` of a reflection-padded axis of length `len`.
#[inline]
fn reflect(i: usize, pad: usize, len: usize) -> usize {
    let s = i as isize - pad as isize;
    let last = len as isize - 1;
    let r = if s < 0 {
        -s
    } else if s > last {
        2 * last - s
    } else {
        s
    };
    r as usize
}

/// Mirror-pads every plane by `pad` on each side, excluding the edge pixel
/// from the mirror. Requires `pad < h` and `pad < w`.
pub fn reflection_pad<T: Real>(x: &Tensor<T>, pad: usize) -> Tensor<T> {
    assert!(
        pad < x.h && pad < x.w,
        "reflection pad {pad} too large for {}x{}",
        x.h,
        x.w
    );
    let (oh, ow) = (x.h + 2 * pad, x.w + 2 * pad);
    let cols: Vec<usize> = (0..ow).map(|j| reflect(j, pad, x.w)).collect();
    let mut out = Tensor::zeros(x.n, x.c, oh, ow);
    for plane in 0..x.n * x.c {
        let src = &x.data[plane * x.h * x.w..(plane + 1) * x.h * x.w];
        let dst = &mut out.data[plane * oh * ow..(plane + 1) * oh * ow];
        for i in 0..oh {
            let row = &src[reflect(i, pad, x.h) * x.w..][..x.w];
            for (d, &j) in dst[i * ow..(i + 1) * ow].iter_mut().zip(&cols) {
                *d = row[j];
            }
        }
    }
    out
}

/// Folds the gradient of a padded tensor back onto the unpadded input shape.
pub fn reflection_pad_backward<T: Real>(grad: &Tensor<T>, pad: usize) -> Tensor<T> {
    let (h, w) = (grad.h - 2 * pad, grad.w - 2 * pad);
    let cols: Vec<usize> = (0..grad.w).map(|j| reflect(j, pad, w)).collect();
    let mut out = Tensor::zeros(grad.n, grad.c, h, w);
    for plane in 0..grad.n * grad.c {
        let src = &grad.data[plane * grad.h * grad.w..(plane + 1) * grad.h * grad.w];
        let dst = &mut out.data[plane * h * w..(plane + 1) * h * w];
        for i in 0..grad.h {
            let r = reflect(i, pad, h);
            for (&g, &j) in src[i * grad.w..(i + 1) * grad.w].iter().zip(&cols) {
                dst[r * w + j] += g;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mirrors_without_repeating_the_edge() {
        let x = Tensor::from_vec(1, 1, 3, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]);
        let y = reflection_pad(&x, 2);
        assert_eq!((y.h, y.w), (7, 7));
        // middle row of the padded output: 6 5 4 5 6 5 4
        assert_eq!(&y.data[3 * 7..4 * 7], &[6.0, 5.0, 4.0, 5.0, 6.0, 5.0, 4.0]);
        // top-left corner reflects both axes
        assert_eq!(y.data[0], 9.0);
    }

    #[test]
    fn backward_is_adjoint() {
        let x = Tensor::from_vec(1, 2, 4, 5, (0..40).map(|v| (v as f64).sqrt()).collect());
        let y = reflection_pad(&x, 3);
        let g = y.with_data((0..y.len()).map(|v| ((v * 13 % 7) as f64) - 3.0).collect());
        let lhs: f64 = y.data.iter().zip(&g.data).map(|(a, b)| a * b).sum();
        let gx = reflection_pad_backward(&g, 3);
        let rhs: f64 = x.data.iter().zip(&gx.data).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }
}
