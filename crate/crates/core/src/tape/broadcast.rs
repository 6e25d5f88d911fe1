use alloc::vec;
use alloc::vec::Vec;

/// Numpy-style broadcast of two shapes.
pub(crate) fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i + a.len() >= rank { a[i + a.len() - rank] } else { 1 };
        let db = if i + b.len() >= rank { b[i + b.len() - rank] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

/// Strides of `input` laid over `out`, zero on broadcast axes.
pub(crate) fn broadcast_strides(input: &[usize], out: &[usize]) -> Vec<usize> {
    let rank = out.len();
    let mut strides = vec![0; rank];
    let mut acc = 1;
    for k in (0..input.len()).rev() {
        let axis = k + rank - input.len();
        if input[k] != 1 {
            strides[axis] = acc;
        }
        acc *= input[k];
    }
    strides
}

/// Visits every flat index of `out` together with the matching flat offsets
/// under each set of strides.
pub(crate) fn walk2(out: &[usize], sa: &[usize], sb: &[usize], mut f: impl FnMut(usize, usize, usize)) {
    let total: usize = out.iter().product();
    let rank = out.len();
    let mut idx = vec![0usize; rank];
    let (mut oa, mut ob) = (0usize, 0usize);
    for flat in 0..total {
        f(flat, oa, ob);
        for axis in (0..rank).rev() {
            idx[axis] += 1;
            oa += sa[axis];
            ob += sb[axis];
            if idx[axis] < out[axis] {
                break;
            }
            oa -= sa[axis] * out[axis];
            ob -= sb[axis] * out[axis];
            idx[axis] = 0;
        }
    }
}

/// Sums `grad` (shaped `out`) down to `input`'s shape.
pub(crate) fn reduce_to(grad: &[f64], out: &[usize], input: &[usize]) -> Vec<f64> {
    let n: usize = input.iter().product();
    if input == out {
        return grad.to_vec();
    }
    let mut acc = vec![0.0; n];
    let strides = broadcast_strides(input, out);
    walk2(out, &strides, &strides, |flat, off, _| acc[off] += grad[flat]);
    acc
}
