use crate::{Error, ParamStore, Result, Scalar};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Coupled L2 decay: `wd * θ` is added to the gradient before the moments.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-5,
        }
    }
}

/// One bias-corrected Adam update over every parameter in the store.
///
/// Every parameter must have received a gradient since the last
/// [`ParamStore::zero_grads`]; a missing one is reported by name and nothing
/// is updated.
pub fn adam_step<T: Scalar>(store: &mut ParamStore<T>, cfg: &AdamConfig) -> Result<()> {
    if let Some((name, _)) = store.iter().find(|(_, p)| !p.has_grad) {
        return Err(Error::MissingGrad(name.to_string()));
    }
    store.step_count += 1;
    let t = store.step_count as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let (b1, b2) = (T::lit(cfg.beta1), T::lit(cfg.beta2));
    let (one, wd, lr, eps) = (T::one(), T::lit(cfg.weight_decay), T::lit(cfg.lr), T::lit(cfg.eps));
    let (bc1, bc2) = (T::lit(bc1), T::lit(bc2));
    for (_, p) in store.iter_mut() {
        let n = p.value.len();
        for i in 0..n {
            let theta = p.value.data()[i];
            let g = p.grad.data()[i] + wd * theta;
            let m = b1 * p.adam_m.data()[i] + (one - b1) * g;
            let v = b2 * p.adam_v.data()[i] + (one - b2) * g * g;
            p.adam_m.data_mut()[i] = m;
            p.adam_v.data_mut()[i] = v;
            let m_hat = m / bc1;
            let v_hat = v / bc2;
            p.value.data_mut()[i] = theta - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ParamKind;
    use crate::Tensor;

    fn scalar_store(theta: f64, grad: f64) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.add("p", ParamKind::FcWeight, Tensor::full(&[1], theta)).unwrap();
        s.accumulate_grad("p", &Tensor::full(&[1], grad)).unwrap();
        s
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut s = scalar_store(0.7, 0.0);
        let cfg = AdamConfig {
            weight_decay: 0.0,
            ..Default::default()
        };
        adam_step(&mut s, &cfg).unwrap();
        assert_eq!(s.value("p").unwrap().data(), &[0.7]);
        assert_eq!(s.step_count, 1);
    }

    #[test]
    fn first_step_matches_hand_formula() {
        let (theta, g) = (0.3, -0.02);
        let cfg = AdamConfig {
            lr: 1e-3,
            weight_decay: 0.0,
            ..Default::default()
        };
        let mut s = scalar_store(theta, g);
        adam_step(&mut s, &cfg).unwrap();
        // m_hat = g, v_hat = g^2 after bias correction
        let expect = theta - cfg.lr * g / (g.abs() + cfg.eps);
        assert!((s.value("p").unwrap().data()[0] - expect).abs() < 1e-15);
    }

    #[test]
    fn missing_gradient_is_an_error() {
        let mut s = ParamStore::<f32>::new();
        s.add("w", ParamKind::ConvWeight, Tensor::zeros(&[3])).unwrap();
        assert!(matches!(
            adam_step(&mut s, &AdamConfig::default()),
            Err(Error::MissingGrad(n)) if n == "w"
        ));
        assert_eq!(s.step_count, 0);
    }
}
