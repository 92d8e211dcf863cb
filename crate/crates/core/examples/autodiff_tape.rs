//! A tiny regression model on the autodiff tape: forward, backward, a few
//! plain gradient steps, and a finite-difference check of the gradient.

use submatch::tensor::{finite_difference_check, ParamStore, Tape, Tensor, TensorError, Var};

fn loss(tape: &mut Tape, p: &ParamStore) -> Result<Var, TensorError> {
    let x = tape.constant(Tensor::matrix(4, 2, vec![0.0, 1.0, 1.0, 0.0, 1.0, 1.0, 2.0, -1.0])?)?;
    let y = tape.constant(Tensor::matrix(4, 1, vec![1.0, -1.0, 0.5, 2.0])?)?;
    let w = tape.param_by_name(p, "w")?;
    let b = tape.param_by_name(p, "b")?;
    let h = tape.matmul(x, w)?;
    let h = tape.add_row(h, b)?;
    let h = tape.elu(h)?;
    let r = tape.sub(h, y)?;
    let sq = tape.square(r)?;
    tape.mean_all(sq)
}

fn main() -> Result<(), TensorError> {
    let mut p = ParamStore::new();
    p.init("w", &[2, 1], 3)?;
    p.init("b", &[1, 1], 3)?;

    for step in 0..5 {
        p.zero_grads();
        let mut tape = Tape::new();
        let l = loss(&mut tape, &p)?;
        println!("step {step}: loss {:.6}", tape.scalar_value(l));
        tape.backward(l, &mut p)?;
        for id in p.ids() {
            let g = p.grad(id).clone();
            for (v, d) in p.value_mut(id).data_mut().iter_mut().zip(g.data()) {
                *v -= 0.1 * d;
            }
        }
    }

    let report = finite_difference_check(&mut p, loss, 1e-5, 3, 0)?;
    println!("max relative error {:.2e} over {} coordinates", report.max_rel_error, report.coordinates_checked);
    Ok(())
}
