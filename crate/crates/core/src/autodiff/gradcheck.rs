use super::{AutodiffError, Tape, Tensor, Var};

fn evaluate<F>(f: &F, inputs: &[Tensor]) -> Result<f64, AutodiffError>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, AutodiffError>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let value = tape
        .value(out)
        .item()
        .ok_or_else(|| AutodiffError::NonScalarLoss(tape.shape(out).to_vec()))?;
    if !value.is_finite() {
        return Err(AutodiffError::NonFinite("function value"));
    }
    Ok(value)
}

/// Compares reverse-mode gradients of the scalar function `f` against central
/// finite differences with step `eps`.
///
/// Returns the largest elementwise relative error, using
/// `max(|analytic|, |numeric|, 1e-8)` as the denominator.
pub fn gradcheck<F>(f: F, inputs: &[Tensor], eps: f64) -> Result<f64, AutodiffError>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, AutodiffError>,
{
    if !(eps > 0.0) {
        return Err(AutodiffError::InvalidStep(eps));
    }
    if inputs.iter().any(|t| !t.is_finite()) {
        return Err(AutodiffError::NonFinite("input"));
    }

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let grads = tape.backward(out)?;

    let mut worst: f64 = 0.0;
    let mut probe = inputs.to_vec();
    for (i, var) in vars.iter().enumerate() {
        let analytic = grads.get_or_zeros(*var);
        if !analytic.is_finite() {
            return Err(AutodiffError::NonFinite("analytic gradient"));
        }
        for j in 0..inputs[i].numel() {
            let orig = inputs[i].data()[j];
            probe[i].data_mut()[j] = orig + eps;
            let up = evaluate(&f, &probe)?;
            probe[i].data_mut()[j] = orig - eps;
            let down = evaluate(&f, &probe)?;
            probe[i].data_mut()[j] = orig;

            let numeric = (up - down) / (2.0 * eps);
            let a = analytic.data()[j];
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    Ok(worst)
}
