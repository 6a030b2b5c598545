use super::{Graph, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    pub max_rel_error: f64,
}

/// Relative error floor so entries whose true gradient is ~0 do not blow up.
const REL_FLOOR: f64 = 1e-6;

/// Compares the reverse-mode gradient of a scalar function against central
/// finite differences with step `eps`, in 64-bit precision.
pub fn grad_check<F>(f: F, x: &Tensor<f64>, eps: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, Var) -> Result<Var>,
{
    let eval = |input: &Tensor<f64>| -> Result<f64> {
        let mut g = Graph::new();
        let v = g.constant(input.clone());
        let out = f(&mut g, v)?;
        scalar(&g, out)
    };

    let mut g = Graph::new();
    let v = g.param(x.clone());
    let out = f(&mut g, v)?;
    scalar(&g, out)?;
    g.backward(out)?;
    let analytic: Vec<f64> = match g.grad(v) {
        Some(t) => t.data().to_vec(),
        None => vec![0.0; x.numel()],
    };

    let mut numeric = Vec::with_capacity(x.numel());
    let mut probe = x.clone();
    for i in 0..x.numel() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + eps;
        let plus = eval(&probe)?;
        probe.data_mut()[i] = orig - eps;
        let minus = eval(&probe)?;
        probe.data_mut()[i] = orig;
        numeric.push((plus - minus) / (2.0 * eps));
    }

    let max_rel_error = analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR))
        .fold(0.0, f64::max);
    Ok(GradCheckReport {
        analytic,
        numeric,
        max_rel_error,
    })
}

fn scalar(g: &Graph<f64>, out: Var) -> Result<f64> {
    let t = g.value(out);
    if t.numel() != 1 {
        return Err(Error::invalid(format!(
            "grad_check needs a scalar-valued function, got shape {:?}",
            t.shape()
        )));
    }
    Ok(t.data()[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{PoolKind, Rng};

    fn random(shape: &[usize], rng: &mut Rng) -> Tensor<f64> {
        Tensor::from_fn(shape, |_| rng.uniform() * 2.0 - 1.0)
    }

    #[test]
    fn non_scalar_rejected() {
        let x = Tensor::<f64>::zeros(&[2, 2]);
        assert!(grad_check(|_, x| Ok(x), &x, 1e-4).is_err());
    }

    // Every differentiable op on random inputs in [-1, 1].
    #[test]
    fn every_op_passes() {
        let mut rng = Rng::new(11);
        let x = random(&[3, 4], &mut rng);
        let w = random(&[4, 5], &mut rng);
        let w_nt = random(&[2, 4], &mut rng);
        let other = random(&[3, 4], &mut rng);
        let bias = random(&[4], &mut rng);
        let weights = random(&[3, 4], &mut rng);
        let sq = random(&[3, 3], &mut rng);

        type Case = Box<dyn Fn(&mut Graph<f64>, Var) -> Result<Var>>;
        let weigh = |g: &mut Graph<f64>, y: Var, w: &Tensor<f64>| -> Result<Var> {
            let c = g.constant(w.clone());
            let m = g.mul(y, c)?;
            Ok(g.sum(m))
        };
        let cases: Vec<(&str, Case)> = vec![
            ("matmul", Box::new({ let w = w.clone(); move |g, x| { let c = g.constant(w.clone()); let y = g.matmul(x, c)?; let s = g.mul(y, y)?; Ok(g.sum(s)) } })),
            ("matmul_nt", Box::new({ let w = w_nt.clone(); move |g, x| { let c = g.constant(w.clone()); let y = g.matmul_nt(x, c)?; let s = g.mul(y, y)?; Ok(g.sum(s)) } })),
            ("add", Box::new({ let o = other.clone(); let wt = weights.clone(); move |g, x| { let c = g.constant(o.clone()); let y = g.add(x, c)?; weigh(g, y, &wt) } })),
            ("add_row", Box::new({ let b = bias.clone(); let wt = weights.clone(); move |g, x| { let c = g.constant(b.clone()); let y = g.add_row(x, c)?; let y = g.mul(y, y)?; weigh(g, y, &wt) } })),
            ("mul", Box::new({ let o = other.clone(); move |g, x| { let c = g.constant(o.clone()); let y = g.mul(x, c)?; let y = g.mul(y, x)?; Ok(g.sum(y)) } })),
            ("scale_mean", Box::new(|g, x| { let y = g.scale(x, 3.0); let y = g.mul(y, y)?; Ok(g.mean(y)) })),
            ("transpose", Box::new({ let wt = weights.clone(); move |g, x| { let t = g.transpose(x)?; let y = g.matmul(x, t)?; let y = g.slice_cols(y, 0, 3)?; let _ = &wt; Ok(g.sum(y)) } })),
            ("softmax", Box::new({ let wt = weights.clone(); move |g, x| { let y = g.softmax(x); weigh(g, y, &wt) } })),
            ("causal_mask", Box::new({ let wt = sq.clone(); move |g, x| { let s = g.slice_cols(x, 0, 3)?; let m = g.causal_mask(s, 0)?; let y = g.softmax(m); weigh(g, y, &wt) } })),
            ("layer_norm", Box::new({ let b = bias.clone(); let wt = weights.clone(); move |g, x| { let gain = g.constant(b.clone()); let bb = g.constant(b.clone()); let y = g.layer_norm(x, gain, bb)?; weigh(g, y, &wt) } })),
            ("embedding", Box::new(|g, x| { let e = g.embedding(x, &[2, 0, 2, 1])?; let y = g.mul(e, e)?; Ok(g.sum(y)) })),
            ("concat_rows", Box::new({ let o = other.clone(); move |g, x| { let c = g.constant(o.clone()); let y = g.concat_rows(&[x, c, x])?; let y = g.mul(y, y)?; Ok(g.sum(y)) } })),
            ("concat_cols", Box::new({ let o = other.clone(); move |g, x| { let c = g.constant(o.clone()); let a = g.slice_cols(x, 1, 2)?; let y = g.concat_cols(&[a, c, x])?; let y = g.mul(y, y)?; Ok(g.sum(y)) } })),
            ("slice_rows", Box::new(|g, x| { let y = g.slice_rows(x, 1, 2)?; let y = g.mul(y, y)?; Ok(g.sum(y)) })),
            ("relu", Box::new({ let wt = weights.clone(); move |g, x| { let y = g.relu(x); weigh(g, y, &wt) } })),
            ("gelu", Box::new({ let wt = weights.clone(); move |g, x| { let y = g.gelu(x); weigh(g, y, &wt) } })),
            ("cross_entropy", Box::new(|g, x| g.cross_entropy(x, &[1, 3, 0]))),
            ("rel_gather", Box::new({ let wt = weights.clone(); move |g, x| { let y = g.rel_gather(x, 1)?; weigh(g, y, &wt) } })),
            ("pool_sum", Box::new({ let wt = weights.clone(); move |g, x| { let y = g.segment_pool(x, &[0, 0, 2], PoolKind::Sum)?; weigh(g, y, &wt) } })),
            ("pool_mean", Box::new({ let wt = weights.clone(); move |g, x| { let y = g.segment_pool(x, &[0, 0, 2], PoolKind::Mean)?; weigh(g, y, &wt) } })),
            ("pool_max", Box::new({ let wt = weights.clone(); move |g, x| { let y = g.segment_pool(x, &[0, 0, 2], PoolKind::Max)?; weigh(g, y, &wt) } })),
        ];
        for (name, f) in cases {
            let report = grad_check(f, &x, 1e-4).unwrap();
            assert!(
                report.max_rel_error < 1e-3,
                "{name}: rel error {}",
                report.max_rel_error
            );
        }
    }
}
