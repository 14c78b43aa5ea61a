use super::{Matrix, Tape, TensorError, Var};
use crate::num::Scalar;

pub const DEFAULT_EPS: f64 = 1e-5;

fn eval<T: Scalar, F>(f: &F, params: &[Matrix<T>]) -> Result<(Tape<T>, Vec<Var>, Var), TensorError>
where
    F: Fn(&mut Tape<T>, &[Var]) -> Result<Var, TensorError>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.leaf(p.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let v = tape.value(out);
    if v.shape() != (1, 1) {
        return Err(TensorError::Invalid(format!(
            "grad_check: output must be 1x1, got {}x{}",
            v.rows(),
            v.cols()
        )));
    }
    if !v.get(0, 0).is_finite() {
        return Err(TensorError::NonFinite(format!("{}", v.get(0, 0))));
    }
    Ok((tape, vars, out))
}

/// Largest relative error `|a - n| / (|a| + |n| + 1e-8)` between tape gradients `a`
/// and central differences `n` over every entry of every parameter.
pub fn grad_check<T: Scalar, F>(f: F, params: &[Matrix<T>], eps: T) -> Result<T, TensorError>
where
    F: Fn(&mut Tape<T>, &[Var]) -> Result<Var, TensorError>,
{
    if eps.partial_cmp(&T::zero()) != Some(std::cmp::Ordering::Greater) {
        return Err(TensorError::Invalid("grad_check: eps must be positive".into()));
    }
    let (tape, vars, out) = eval(&f, params)?;
    let grads = tape.backward(out)?;
    let guard = T::lit(1e-8);
    let two = T::lit(2.0);
    let mut worst = T::zero();
    let mut work: Vec<Matrix<T>> = params.to_vec();
    for (pi, &var) in vars.iter().enumerate() {
        let analytic = grads.get(var);
        for k in 0..params[pi].data().len() {
            let orig = params[pi].data()[k];
            work[pi].data_mut()[k] = orig + eps;
            let (t1, _, o1) = eval(&f, &work)?;
            work[pi].data_mut()[k] = orig - eps;
            let (t2, _, o2) = eval(&f, &work)?;
            work[pi].data_mut()[k] = orig;
            let numeric = (t1.value(o1).get(0, 0) - t2.value(o2).get(0, 0)) / (two * eps);
            let a = analytic.data()[k];
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs() + guard);
            if rel > worst {
                worst = rel;
            }
        }
    }
    Ok(worst)
}
