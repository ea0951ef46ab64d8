use super::{ParamId, ParamSet, Real, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Weights of one LSTM direction.
///
/// `w` is `4h × (input + h)` acting on `[input; prev_h]`, `b` has `4h`
/// entries. Gate blocks are stacked as input, forget, candidate, output.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LstmParams {
    pub w: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl LstmParams {
    /// Registers zero-initialised weights under `{prefix}.w` / `{prefix}.b`.
    pub fn register<T: Real>(params: &mut ParamSet<T>, prefix: &str, input: usize, hidden: usize) -> Self {
        let w = params.insert(format!("{prefix}.w"), Tensor::zeros(&[4 * hidden, input + hidden]));
        let b = params.insert(format!("{prefix}.b"), Tensor::zeros(&[4 * hidden]));
        LstmParams { w, b, input, hidden }
    }

    pub fn lookup<T: Real>(params: &ParamSet<T>, prefix: &str) -> Result<Self> {
        let w = params.require(&format!("{prefix}.w"))?;
        let b = params.require(&format!("{prefix}.b"))?;
        let wt = params.get(w);
        let hidden = wt.rows() / 4;
        if wt.rows() != 4 * hidden || wt.cols() <= hidden || params.get(b).len() != 4 * hidden {
            return Err(Error::Shape(format!("malformed LSTM weights under {prefix}")));
        }
        Ok(LstmParams { w, b, input: wt.cols() - hidden, hidden })
    }

    /// Index range of the forget-gate block inside the bias.
    pub fn forget_gate(&self) -> std::ops::Range<usize> {
        self.hidden..2 * self.hidden
    }
}

/// One LSTM transition: returns `(h, c)`.
pub fn lstm_step<T: Real>(
    tape: &mut Tape<'_, T>,
    p: &LstmParams,
    prev_h: Var,
    prev_c: Var,
    input: Var,
) -> Result<(Var, Var)> {
    let h = p.hidden;
    let dims = (tape.value(prev_h).len(), tape.value(prev_c).len(), tape.value(input).len());
    if dims != (h, h, p.input) {
        return Err(Error::Shape(format!(
            "lstm_step expects h={h}, c={h}, x={}, got {dims:?}",
            p.input
        )));
    }
    let w = tape.param(p.w);
    let b = tape.param(p.b);
    let xh = tape.concat(&[input, prev_h]);
    let z = tape.matvec(w, xh);
    let z = tape.add(z, b);
    let zi = tape.slice(z, 0, h);
    let zf = tape.slice(z, h, h);
    let zg = tape.slice(z, 2 * h, h);
    let zo = tape.slice(z, 3 * h, h);
    let i = tape.sigmoid(zi);
    let f = tape.sigmoid(zf);
    let g = tape.tanh(zg);
    let o = tape.sigmoid(zo);
    let keep = tape.mul(f, prev_c);
    let write = tape.mul(i, g);
    let c = tape.add(keep, write);
    let tc = tape.tanh(c);
    let h = tape.mul(o, tc);
    Ok((h, c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sig(v: f64) -> f64 {
        1.0 / (1.0 + (-v).exp())
    }

    #[test]
    fn zero_everything_gives_zero_state() {
        let mut ps = ParamSet::<f64>::new();
        let p = LstmParams::register(&mut ps, "l", 3, 2);
        for k in p.forget_gate() {
            ps.get_mut(p.b).data_mut()[k] = 1.0;
        }
        let mut tape = Tape::new(&ps);
        let z2 = tape.zeros(2);
        let z2b = tape.zeros(2);
        let x = tape.zeros(3);
        let (h, c) = lstm_step(&mut tape, &p, z2, z2b, x).unwrap();
        assert_eq!(tape.value(h), &[0.0, 0.0]);
        assert_eq!(tape.value(c), &[0.0, 0.0]);
    }

    #[test]
    fn forget_gate_scales_memory() {
        let mut ps = ParamSet::<f64>::new();
        let p = LstmParams::register(&mut ps, "l", 2, 2);
        for k in p.forget_gate() {
            ps.get_mut(p.b).data_mut()[k] = 0.7;
        }
        let mut tape = Tape::new(&ps);
        let h0 = tape.vector(vec![0.3, -0.2]);
        let c0 = tape.vector(vec![1.5, -2.0]);
        let x = tape.vector(vec![0.4, 0.9]);
        let (_, c) = lstm_step(&mut tape, &p, h0, c0, x).unwrap();
        assert!((tape.value(c)[0] - sig(0.7) * 1.5).abs() < 1e-15);
        assert!((tape.value(c)[1] - sig(0.7) * -2.0).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_error() {
        let mut ps = ParamSet::<f64>::new();
        let p = LstmParams::register(&mut ps, "l", 2, 2);
        let mut tape = Tape::new(&ps);
        let h0 = tape.zeros(2);
        let c0 = tape.zeros(2);
        let x = tape.zeros(3);
        assert!(matches!(lstm_step(&mut tape, &p, h0, c0, x), Err(Error::Shape(_))));
    }

    #[test]
    fn matches_scalar_gate_oracle() {
        let (input, hidden) = (3usize, 4usize);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut ps = ParamSet::<f64>::new();
        let p = LstmParams::register(&mut ps, "l", input, hidden);
        for v in ps.get_mut(p.w).data_mut() {
            *v = rng.random_range(-0.5..0.5);
        }
        for v in ps.get_mut(p.b).data_mut() {
            *v = rng.random_range(-0.5..0.5);
        }
        let x: Vec<f64> = (0..input).map(|_| rng.random_range(-1.0..1.0)).collect();
        let h0: Vec<f64> = (0..hidden).map(|_| rng.random_range(-1.0..1.0)).collect();
        let c0: Vec<f64> = (0..hidden).map(|_| rng.random_range(-1.0..1.0)).collect();

        // Explicit gate formulas, one unit at a time.
        let w = ps.get(p.w).data().to_vec();
        let b = ps.get(p.b).data().to_vec();
        let cols = input + hidden;
        let pre = |row: usize| {
            let mut s = b[row];
            for k in 0..input {
                s += w[row * cols + k] * x[k];
            }
            for k in 0..hidden {
                s += w[row * cols + input + k] * h0[k];
            }
            s
        };
        let mut want_h = vec![0.0; hidden];
        let mut want_c = vec![0.0; hidden];
        for u in 0..hidden {
            let i = sig(pre(u));
            let f = sig(pre(hidden + u));
            let g = pre(2 * hidden + u).tanh();
            let o = sig(pre(3 * hidden + u));
            want_c[u] = f * c0[u] + i * g;
            want_h[u] = o * want_c[u].tanh();
        }

        let mut tape = Tape::new(&ps);
        let hv = tape.vector(h0.clone());
        let cv = tape.vector(c0.clone());
        let xv = tape.vector(x.clone());
        let (h, c) = lstm_step(&mut tape, &p, hv, cv, xv).unwrap();
        for u in 0..hidden {
            assert!((tape.value(h)[u] - want_h[u]).abs() < 1e-14);
            assert!((tape.value(c)[u] - want_c[u]).abs() < 1e-14);
        }
    }
}
