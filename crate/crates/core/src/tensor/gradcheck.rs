use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Gradients, ParamSet};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    pub eps: f64,
    /// Coordinates checked per tensor; tensors at most this large are checked exhaustively.
    pub coords_per_tensor: usize,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions { eps: 1e-5, coords_per_tensor: 8, seed: 0 }
    }
}

/// Compares the analytic gradient of `f` with central differences.
///
/// `f` returns the loss and its gradient for a parameter set. The result is
/// the maximum over checked coordinates of
/// `|analytic - numeric| / max(1, |analytic|)`.
pub fn finite_diff_check<F>(f: F, params: &ParamSet<f64>, opts: &GradCheckOptions) -> Result<f64>
where
    F: Fn(&ParamSet<f64>) -> Result<(f64, Gradients<f64>)>,
{
    let (loss, grads) = f(params)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite("loss at the base point".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut probe = params.clone();
    let mut worst = 0.0f64;
    for id in params.ids() {
        let n = params.get(id).len();
        let coords: Vec<usize> = if n <= opts.coords_per_tensor {
            (0..n).collect()
        } else {
            let mut c = sample(&mut rng, n, opts.coords_per_tensor).into_vec();
            c.sort_unstable();
            c
        };
        let analytic = grads.dense(id);
        for k in coords {
            let orig = params.get(id).data()[k];
            probe.get_mut(id).data_mut()[k] = orig + opts.eps;
            let (up, _) = f(&probe)?;
            probe.get_mut(id).data_mut()[k] = orig - opts.eps;
            let (down, _) = f(&probe)?;
            probe.get_mut(id).data_mut()[k] = orig;
            if !up.is_finite() || !down.is_finite() {
                return Err(Error::NonFinite(format!("loss while perturbing {}[{k}]", params.name(id))));
            }
            let numeric = (up - down) / (2.0 * opts.eps);
            let a = analytic[k];
            let rel = (a - numeric).abs() / a.abs().max(1.0);
            if rel > worst {
                log::debug!("{}[{k}]: analytic {a:e} numeric {numeric:e}", params.name(id));
                worst = rel;
            }
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{lstm_step, LstmParams, Tape, Tensor};
    use rand::Rng;

    #[test]
    fn quadratic() {
        let mut ps = ParamSet::new();
        let id = ps.insert("theta", Tensor::vector(vec![3.0]));
        let f = |p: &ParamSet<f64>| {
            let mut tape = Tape::new(p);
            let t = tape.param(id);
            let sq = tape.mul(t, t);
            let loss = tape.sum(sq);
            let l = tape.scalar(loss);
            Ok((l, tape.backward(loss)?))
        };
        let (_, g) = f(&ps).unwrap();
        assert_eq!(g.dense(id), vec![6.0]);
        let err = finite_diff_check(f, &ps, &GradCheckOptions::default()).unwrap();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn non_finite_loss_is_error() {
        let mut ps = ParamSet::new();
        let id = ps.insert("theta", Tensor::vector(vec![-1.0]));
        let f = |p: &ParamSet<f64>| {
            let mut tape = Tape::new(p);
            let t = tape.param(id);
            let l = tape.ln(t);
            let loss = tape.sum(l);
            Ok((tape.scalar(loss), Gradients::zeros_like(p)))
        };
        assert!(matches!(finite_diff_check(f, &ps, &GradCheckOptions::default()), Err(Error::NonFinite(_))));
    }

    #[test]
    fn lstm_step_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut ps = ParamSet::<f64>::new();
        let p = LstmParams::register(&mut ps, "l", 3, 2);
        let x = ps.insert("x", Tensor::vector(vec![0.0; 3]));
        let h0 = ps.insert("h0", Tensor::vector(vec![0.0; 2]));
        let c0 = ps.insert("c0", Tensor::vector(vec![0.0; 2]));
        let ids: Vec<_> = ps.ids().collect();
        for id in ids {
            for v in ps.get_mut(id).data_mut() {
                *v = rng.random_range(-0.8..0.8);
            }
        }
        let target = vec![0.3, -0.5];
        let f = |ps: &ParamSet<f64>| {
            let mut tape = Tape::new(ps);
            let (xv, hv, cv) = (tape.param(x), tape.param(h0), tape.param(c0));
            let (h, c) = lstm_step(&mut tape, &p, hv, cv, xv)?;
            let t = tape.vector(target.clone());
            let d = tape.sub(h, t);
            let sq = tape.mul(d, d);
            let s1 = tape.sum(sq);
            let s2 = tape.sum(c);
            let loss = tape.add_all(&[s1, s2]);
            Ok((tape.scalar(loss), tape.backward(loss)?))
        };
        let opts = GradCheckOptions { coords_per_tensor: 64, ..Default::default() };
        let err = finite_diff_check(f, &ps, &opts).unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn every_op_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut ps = ParamSet::<f64>::new();
        let w = ps.insert("w", Tensor::matrix(3, 4, (0..12).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap());
        let e = ps.insert("e", Tensor::matrix(5, 4, (0..20).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap());
        let a = ps.insert("a", Tensor::vector((0..4).map(|_| rng.random_range(-1.0..1.0)).collect()));
        let b = ps.insert("b", Tensor::vector((0..3).map(|_| rng.random_range(-1.0..1.0)).collect()));
        let f = |ps: &ParamSet<f64>| {
            let mut tape = Tape::new(ps);
            let (wv, av, bv) = (tape.param(w), tape.param(a), tape.param(b));
            let r1 = tape.lookup(e, 1);
            let r3 = tape.lookup(e, 3);
            let x = tape.add(av, r1);
            let y = tape.matvec(wv, x);
            let y = tape.sub(y, bv);
            let t = tape.tanh(y);
            let s = tape.sigmoid(t);
            let m = tape.mul(s, bv);
            let back = tape.matvec_t(wv, m);
            let cat = tape.concat(&[back, s]);
            let sl = tape.slice(cat, 2, 4);
            let sc = tape.scale(sl, 0.7);
            let dm = tape.mul_const(sc, vec![1.0, 0.0, 1.25, 1.25]);
            let ac = tape.add_const(dm, &[0.1, 0.2, 0.3, 0.4]);
            let st = tape.stack(&[ac, r3, av]);
            let mv = tape.matvec(st, r1);
            let sm = tape.softmax(mv, None)?;
            let ls = tape.log_softmax(mv, Some(&[true, false, true]))?;
            let g = tape.gather(ls, &[0, 2]);
            let l1 = tape.sum(g);
            let ce = tape.cross_entropy(mv, 1, None)?;
            let rows = tape.matvec_rows(wv, &[2, 0], x);
            let sm2 = tape.gather(sm, &[0, 1]);
            let d = tape.dot(rows, sm2);
            let p0 = tape.pick(sm, 0);
            let lg = tape.ln(p0);
            let shifted = tape.add_const(ls, &[-0.5, 0.0, -0.5]);
            let neg = tape.gather(shifted, &[0, 2]);
            let l1m = tape.log1m_exp(neg);
            let l2 = tape.sum(l1m);
            let loss = tape.add_all(&[l1, ce, d, lg, l2]);
            Ok((tape.scalar(loss), tape.backward(loss)?))
        };
        let opts = GradCheckOptions { coords_per_tensor: 64, ..Default::default() };
        let err = finite_diff_check(f, &ps, &opts).unwrap();
        assert!(err < 1e-6, "{err}");
    }
}
