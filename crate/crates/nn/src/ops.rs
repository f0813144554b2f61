//! Parameter-light layers: ReLU, average pooling, global average pooling,
//! the fully connected classifier, and row softmax.

use crate::{Error, Result, Scalar, Tensor};

pub fn relu_forward<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Gradient of ReLU given the forward input; the derivative at 0 is taken as 0.
pub fn relu_backward<T: Scalar>(x: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    if x.shape() != grad_out.shape() {
        return Err(Error::Shape("relu grad shape".into()));
    }
    let data = x
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&xv, &g)| if xv > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::from_vec(x.shape(), data)
}

fn pool_out(len: usize, k: usize, s: usize) -> Result<usize> {
    if k == 0 || s == 0 || len < k {
        return Err(Error::Shape(format!(
            "cannot pool length {len} with window {k} stride {s}"
        )));
    }
    Ok((len - k) / s + 1)
}

pub fn avgpool_out_size(h: usize, w: usize, k: usize, s: usize) -> Result<(usize, usize)> {
    Ok((pool_out(h, k, s)?, pool_out(w, k, s)?))
}

pub fn avgpool_forward<T: Scalar>(x: &Tensor<T>, k: usize, s: usize) -> Result<Tensor<T>> {
    let [b, c, h, w] = x.dims4()?;
    let (ho, wo) = avgpool_out_size(h, w, k, s)?;
    let norm = T::lit(1.0 / (k * k) as f64);
    let mut out = Tensor::zeros(&[b, c, ho, wo]);
    for (i, dst) in out.data_mut().chunks_mut(ho * wo).enumerate() {
        let src = x.plane(i / c, i % c);
        for oy in 0..ho {
            for ox in 0..wo {
                let mut acc = T::zero();
                for ky in 0..k {
                    let row = &src[(oy * s + ky) * w..];
                    for kx in 0..k {
                        acc += row[ox * s + kx];
                    }
                }
                dst[oy * wo + ox] = acc * norm;
            }
        }
    }
    Ok(out)
}

pub fn avgpool_backward<T: Scalar>(in_dims: [usize; 4], grad_out: &Tensor<T>, k: usize, s: usize) -> Result<Tensor<T>> {
    let [b, c, h, w] = in_dims;
    let (ho, wo) = avgpool_out_size(h, w, k, s)?;
    if grad_out.shape() != [b, c, ho, wo] {
        return Err(Error::Shape("avgpool grad shape".into()));
    }
    let norm = T::lit(1.0 / (k * k) as f64);
    let mut gx = Tensor::zeros(&in_dims);
    for (i, dst) in gx.data_mut().chunks_mut(h * w).enumerate() {
        let g = grad_out.plane(i / c, i % c);
        for oy in 0..ho {
            for ox in 0..wo {
                let v = g[oy * wo + ox] * norm;
                for ky in 0..k {
                    for kx in 0..k {
                        dst[(oy * s + ky) * w + ox * s + kx] += v;
                    }
                }
            }
        }
    }
    Ok(gx)
}

/// `(B, C, H, W) -> (B, C)` spatial mean.
pub fn gap_forward<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let [b, c, h, w] = x.dims4()?;
    let norm = T::lit(1.0 / (h * w) as f64);
    let data = x
        .data()
        .chunks(h * w)
        .map(|p| p.iter().copied().sum::<T>() * norm)
        .collect();
    Tensor::from_vec(&[b, c], data)
}

pub fn gap_backward<T: Scalar>(in_dims: [usize; 4], grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    let [b, c, h, w] = in_dims;
    if grad_out.shape() != [b, c] {
        return Err(Error::Shape("global-average-pool grad shape".into()));
    }
    let norm = T::lit(1.0 / (h * w) as f64);
    let mut data = Vec::with_capacity(b * c * h * w);
    for &g in grad_out.data() {
        data.extend(std::iter::repeat_n(g * norm, h * w));
    }
    Tensor::from_vec(&in_dims, data)
}

/// `y = x Wᵀ + b` with `W` of shape `(out, in)`.
pub fn linear_forward<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: Option<&Tensor<T>>) -> Result<Tensor<T>> {
    let [n, fin] = x.dims2()?;
    let [fout, win] = w.dims2()?;
    if win != fin {
        return Err(Error::Shape(format!("linear layer expects {win} features, got {fin}")));
    }
    let mut out = Tensor::zeros(&[n, fout]);
    for i in 0..n {
        let xi = &x.data()[i * fin..(i + 1) * fin];
        for o in 0..fout {
            let wo = &w.data()[o * fin..(o + 1) * fin];
            let mut v = crate::dot(xi, wo);
            if let Some(b) = b {
                v += b.data()[o];
            }
            out.data_mut()[i * fout + o] = v;
        }
    }
    Ok(out)
}

/// Returns `(grad_x, grad_w, grad_b)`.
pub fn linear_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let [n, fin] = x.dims2()?;
    let [fout, _] = w.dims2()?;
    if grad_out.shape() != [n, fout] {
        return Err(Error::Shape("linear grad shape".into()));
    }
    let mut gx = Tensor::zeros(&[n, fin]);
    let mut gw = Tensor::zeros(&[fout, fin]);
    let mut gb = Tensor::zeros(&[fout]);
    for i in 0..n {
        let xi = &x.data()[i * fin..(i + 1) * fin];
        for o in 0..fout {
            let g = grad_out.data()[i * fout + o];
            gb.data_mut()[o] += g;
            crate::axpy(g, xi, &mut gw.data_mut()[o * fin..(o + 1) * fin]);
            crate::axpy(
                g,
                &w.data()[o * fin..(o + 1) * fin],
                &mut gx.data_mut()[i * fin..(i + 1) * fin],
            );
        }
    }
    Ok((gx, gw, gb))
}

/// Row-wise softmax of a `(rows, classes)` tensor, max-subtracted.
pub fn softmax<T: Scalar>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    let [_, k] = logits.dims2()?;
    let mut out = logits.clone();
    for row in out.data_mut().chunks_mut(k) {
        let m = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    Ok(out)
}

/// Vector-Jacobian product of softmax: `dx = p ⊙ (g - <g, p>)` per row.
pub fn softmax_backward<T: Scalar>(probs: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    let [_, k] = probs.dims2()?;
    if probs.shape() != grad_out.shape() {
        return Err(Error::Shape("softmax grad shape".into()));
    }
    let mut out = Tensor::zeros(probs.shape());
    for ((dst, p), g) in out
        .data_mut()
        .chunks_mut(k)
        .zip(probs.data().chunks(k))
        .zip(grad_out.data().chunks(k))
    {
        let inner = crate::dot(p, g);
        for i in 0..k {
            dst[i] = p[i] * (g[i] - inner);
        }
    }
    Ok(out)
}
