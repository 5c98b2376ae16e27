//! Reverse-mode differentiation over the operator set and a
//! finite-difference harness that certifies it.

mod gradcheck;
mod tape;

pub use gradcheck::{gradcheck, GradReport, GradcheckConfig};
pub use tape::{backward, Gradients, GridMap, Tape, Value, Var};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::broadcast::BinaryOp;
    use crate::params::ParamStore;
    use crate::rng::seeded;
    use crate::tensor::Tensor;

    #[test]
    fn identity_chain_has_unit_gradient() {
        let mut tape = Tape::new();
        let x = tape.param("x", Tensor::<f64>::full([1, 2, 3, 3], 0.7).unwrap()).unwrap();
        let y = tape.scale(x, 1.0).unwrap();
        let g = backward(&tape, y, None).unwrap();
        assert_eq!(g.get("x").unwrap(), &Tensor::ones([1, 2, 3, 3]).unwrap());
    }

    #[test]
    fn sigmoid_at_zero_has_quarter_gradient() {
        let mut tape = Tape::new();
        let x = tape.param("x", Tensor::<f64>::zeros([1, 3, 2, 2]).unwrap()).unwrap();
        let s = tape.sigmoid(x).unwrap();
        let loss = tape.sum(s).unwrap();
        let g = backward(&tape, loss, None).unwrap();
        assert!(g.get("x").unwrap().data().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn unreachable_leaves_get_zeros() {
        let mut tape = Tape::new();
        let x = tape.param("x", Tensor::<f64>::ones([1, 1, 2, 2]).unwrap()).unwrap();
        tape.param("unused", Tensor::<f64>::ones([1, 3, 1, 1]).unwrap()).unwrap();
        let loss = tape.sum(x).unwrap();
        let g = backward(&tape, loss, None).unwrap();
        assert_eq!(g.get("unused").unwrap(), &Tensor::zeros([1, 3, 1, 1]).unwrap());
        assert!(tape.param("x", Tensor::<f64>::ones([1, 1, 1, 1]).unwrap()).is_err());
    }

    #[test]
    fn two_paths_accumulate() {
        let mut rng = seeded(31);
        let xt = Tensor::<f64>::randn([1, 2, 3, 3], 0.0, 1.0, &mut rng).unwrap();
        let path = |both: [bool; 2]| {
            let mut tape = Tape::new();
            let x = tape.param("x", xt.clone()).unwrap();
            let a = tape.gelu(x).unwrap();
            let b = tape.silu(x).unwrap();
            let b = tape.mul(b, x).unwrap();
            let out = match both {
                [true, true] => tape.add(a, b).unwrap(),
                [true, false] => a,
                _ => b,
            };
            let loss = tape.sum(out).unwrap();
            backward(&tape, loss, None).unwrap().get("x").unwrap().clone()
        };
        let total = path([true, true]);
        let sum = path([true, false]).add(&path([false, true])).unwrap();
        assert!(total.max_abs_diff(&sum).unwrap() <= 1e-12);
    }

    #[test]
    fn seed_shape_is_checked() {
        let mut tape = Tape::new();
        let x = tape.param("x", Tensor::<f64>::ones([1, 1, 2, 2]).unwrap()).unwrap();
        let bad = Tensor::ones([1, 1, 1, 1]).unwrap();
        assert!(matches!(backward(&tape, x, Some(bad)), Err(crate::Error::Dimension { .. })));
        assert!(backward(&Tape::<f64>::new(), x, None).is_err());
    }

    #[test]
    fn linear_gradcheck_is_exact() {
        let mut rng = seeded(32);
        let xt = Tensor::<f64>::randn([1, 1, 4, 4], 0.0, 1.0, &mut rng).unwrap();
        let mut params = ParamStore::new();
        params.insert("w", Tensor::<f64>::randn([1, 1, 4, 4], 0.0, 1.0, &mut rng).unwrap());
        let f = |tape: &mut Tape<f64>, p: &ParamStore<f64>| {
            let w = tape.param("w", p.get("w")?.clone())?;
            let x = tape.input(xt.clone());
            let y = tape.binary(BinaryOp::Mul, w, x)?;
            tape.sum(y)
        };
        let mut tape = Tape::new();
        let out = f(&mut tape, &params).unwrap();
        assert_eq!(backward(&tape, out, None).unwrap().get("w").unwrap(), &xt);
        let reports = gradcheck(f, &params, &GradcheckConfig::default()).unwrap();
        assert!(reports[0].pass && reports[0].max_rel_err <= 1e-10, "{:?}", reports[0]);
        assert!((reports[0].cosine - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gradcheck_flags_instead_of_failing() {
        // At the unperturbed point the closure returns a constant, so the tape
        // gradient is zero while the central difference sees w².
        let mut params = ParamStore::new();
        params.insert("w", Tensor::<f64>::full([1, 1, 1, 2], 1.5).unwrap());
        let f = |tape: &mut Tape<f64>, p: &ParamStore<f64>| {
            let w = tape.param("w", p.get("w")?.clone())?;
            let sq = tape.mul(w, w)?;
            let out = tape.sum(sq)?;
            if p.get("w")?.data()[0] == 1.5 && p.get("w")?.data()[1] == 1.5 {
                let c = tape.input(Tensor::full([1, 1, 1, 1], 4.5)?);
                return Ok(c);
            }
            Ok(out)
        };
        let reports = gradcheck(f, &params, &GradcheckConfig::default()).unwrap();
        assert!(!reports[0].pass);
        let json = reports[0].to_json();
        assert!(json.starts_with("{\"param\":\"w\",\"max_abs_err\":"));
        assert!(json.ends_with("\"pass\":false}"));

        let bad = GradcheckConfig { eps: 1e-2, ..Default::default() };
        assert!(gradcheck(f, &params, &bad).is_err());
    }

    #[test]
    fn primitive_gradients_pass_gradcheck() {
        let mut rng = seeded(33);
        let mut params = ParamStore::new();
        params.insert("x", Tensor::<f64>::randn([1, 2, 6, 6], 0.0, 1.0, &mut rng).unwrap());
        params.insert("w", Tensor::<f64>::randn([3, 2, 3, 3], 0.0, 1.0, &mut rng).unwrap());
        params.insert("b", Tensor::<f64>::randn([1, 3, 1, 1], 0.0, 1.0, &mut rng).unwrap());
        params.insert("dw", Tensor::<f64>::randn([3, 1, 5, 5], 0.0, 1.0, &mut rng).unwrap());
        let proj = Tensor::<f64>::randn([1, 3, 3, 3], 0.0, 1.0, &mut rng).unwrap();
        let f = |tape: &mut Tape<f64>, p: &ParamStore<f64>| {
            let x = tape.param("x", p.get("x")?.clone())?;
            let w = tape.param("w", p.get("w")?.clone())?;
            let b = tape.param("b", p.get("b")?.clone())?;
            let dw = tape.param("dw", p.get("dw")?.clone())?;
            let y = tape.conv2d(x, w, Some(b), 2, 1)?;
            let y = tape.gelu(y)?;
            let y = tape.depthwise_conv2d(y, dw)?;
            let r = tape.input(proj.clone());
            let y = tape.mul(y, r)?;
            tape.sum(y)
        };
        let cfg = GradcheckConfig::default();
        for r in gradcheck(f, &params, &cfg).unwrap() {
            assert!(r.max_rel_err <= 1e-6, "{r:?}");
        }
    }
}
