use crate::nn::{Graph, NnError, Real, Tensor, Var};
use crate::unet::UNet;

/// Probability clamp used by the cross-entropy term.
pub const BCE_EPS: f64 = 1e-7;

/// Mean binary cross-entropy over every pixel.
pub fn cross_entropy_loss<T: Real>(pred: &Tensor<T>, label: &Tensor<T>) -> Result<f64, NnError> {
    let mut g = Graph::new();
    let p = g.constant(pred.clone());
    let l = g.binary_cross_entropy(p, label, T::lit(BCE_EPS))?;
    Ok(g.value(l).item().as_f64())
}

/// `(lambda / 2) * sum(W^2)` over the weight-decayed parameters.
pub fn l2_penalty<T: Real>(model: &UNet<T>, lambda: f64) -> f64 {
    let params = model.params();
    let sq: f64 = model
        .decayed_indices()
        .into_iter()
        .map(|i| params[i].value.data().iter().map(|v| v.as_f64().powi(2)).sum::<f64>())
        .sum();
    lambda / 2.0 * sq
}

#[derive(Clone, Copy, Debug)]
pub struct LossVars {
    pub total: Var,
    pub ce: Var,
    pub l2: Var,
}

/// Cross-entropy plus the L2 term on the bound parameters `pv`.
pub fn total_loss<T: Real>(
    g: &mut Graph<T>,
    model: &UNet<T>,
    pv: &[Var],
    pred: Var,
    label: &Tensor<T>,
    lambda: f64,
) -> Result<LossVars, NnError> {
    let ce = g.binary_cross_entropy(pred, label, T::lit(BCE_EPS))?;
    let decayed: Vec<Var> = model.decayed_indices().into_iter().map(|i| pv[i]).collect();
    let l2 = g.sum_squares(&decayed, T::lit(lambda / 2.0))?;
    let total = g.add(ce, l2)?;
    Ok(LossVars { total, ce, l2 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Parameter, Shape};
    use crate::unet::UNetConfig;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn perfect_prediction_is_free() {
        let label = Tensor::from_vec([1, 1, 2, 2], vec![1.0f64, 0.0, 0.0, 1.0]).unwrap();
        assert!(cross_entropy_loss(&label, &label).unwrap() < 1e-6);
    }

    #[test]
    fn half_confidence_costs_ln2() {
        let p = Tensor::from_vec([1, 1, 1, 1], vec![0.5f64]).unwrap();
        let y = Tensor::from_vec([1, 1, 1, 1], vec![1.0f64]).unwrap();
        assert!((cross_entropy_loss(&p, &y).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn matches_wide_accumulation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 2 * 32 * 32;
        let p: Vec<f32> = (0..n).map(|_| rng.gen_range(0.001f32..0.999)).collect();
        let y: Vec<f32> = (0..n).map(|_| rng.gen_range(0..2) as f32).collect();
        let oracle = -p
            .iter()
            .zip(&y)
            .map(|(&p, &y)| {
                let p = p as f64;
                y as f64 * p.ln() + (1.0 - y as f64) * (1.0 - p).ln()
            })
            .sum::<f64>()
            / n as f64;
        let shape = Shape::new(2, 1, 32, 32);
        let got = cross_entropy_loss(&Tensor::from_vec(shape, p).unwrap(), &Tensor::from_vec(shape, y).unwrap()).unwrap();
        assert!((got - oracle).abs() / oracle < 1e-5);
    }

    fn tiny() -> UNet<f64> {
        UNet::build_seeded(UNetConfig { base_filters: 2, depth: 2, ..UNetConfig::default() }, 1).unwrap()
    }

    #[test]
    fn l2_of_zero_and_single_tensor() {
        let mut m = tiny();
        for p in m.params_mut() {
            p.value.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        assert_eq!(l2_penalty(&m, 1e-4), 0.0);
        let target = m.decayed_indices()[0];
        let mut w = vec![0.0f64; 12];
        w[0] = 3.0;
        w[7] = 4.0;
        m.params_mut()[target] = Parameter::kernel("k", Tensor::from_vec([1, 1, 3, 4], w).unwrap());
        assert!((l2_penalty(&m, 1e-4) - 0.00125).abs() < 1e-18);
    }

    #[test]
    fn l2_matches_traversal_by_name() {
        let m = tiny();
        let brute: f64 = m
            .params()
            .iter()
            .filter(|p| p.name.ends_with(".kernel"))
            .flat_map(|p| p.value.data().iter())
            .map(|v| v * v)
            .sum::<f64>()
            * 1e-4
            / 2.0;
        assert!((l2_penalty(&m, 1e-4) - brute).abs() <= 1e-15 * brute.max(1.0));
    }

    #[test]
    fn total_is_exact_sum_of_parts() {
        let m = tiny();
        let mut g = Graph::new();
        let pv = m.bind(&mut g);
        let p = g.constant(Tensor::full([1, 1, 4, 4], 0.3f64));
        let label = Tensor::full([1, 1, 4, 4], 1.0f64);
        let lv = total_loss(&mut g, &m, &pv, p, &label, 1e-4).unwrap();
        let (t, c, l) = (g.value(lv.total).item(), g.value(lv.ce).item(), g.value(lv.l2).item());
        assert_eq!(t, c + l);
        assert!((l - l2_penalty(&m, 1e-4)).abs() < 1e-15);
    }
}
