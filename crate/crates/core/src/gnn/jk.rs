use crate::autodiff::{Tape, Var};

use super::GnnError;

/// Readout parameters. `projections[t]` maps layer `t` to the common width
/// when its own width differs. The LSTM uses gate order input, forget, cell,
/// output: `w_x` is `[width, 4h]`, `w_h` is `[h, 4h]`, `bias` is `[4h]`, and
/// `score` is `[h, 1]`.
#[derive(Clone, Debug)]
pub struct JkVars {
    pub projections: Vec<Option<Var>>,
    pub w_x: Var,
    pub w_h: Var,
    pub bias: Var,
    pub score: Var,
}

/// Runs an LSTM over each node's layer sequence, turns the hidden states into
/// one score per layer, and returns the softmax-weighted sum of the layer
/// embeddings together with the `[nodes, T]` attention matrix.
pub fn jk_lstm_attention(tape: &mut Tape, layers: &[Var], vars: &JkVars) -> Result<(Var, Var), GnnError> {
    if layers.is_empty() {
        return Err(GnnError::EmptyReadout);
    }
    let hidden = tape.shape(vars.w_h)[0];
    let mut inputs = Vec::with_capacity(layers.len());
    for (t, &h) in layers.iter().enumerate() {
        inputs.push(match vars.projections.get(t).copied().flatten() {
            Some(p) => tape.matmul(h, p)?,
            None => h,
        });
    }

    let mut state: Option<(Var, Var)> = None;
    let mut scores = Vec::with_capacity(layers.len());
    for &x in &inputs {
        let mut gates = tape.matmul(x, vars.w_x)?;
        if let Some((h, _)) = state {
            let rec = tape.matmul(h, vars.w_h)?;
            gates = tape.add(gates, rec)?;
        }
        let gates = tape.add_row(gates, vars.bias)?;
        let i = tape.slice_cols(gates, 0, hidden)?;
        let i = tape.sigmoid(i);
        let g = tape.slice_cols(gates, 2 * hidden, hidden)?;
        let g = tape.tanh(g);
        let o = tape.slice_cols(gates, 3 * hidden, hidden)?;
        let o = tape.sigmoid(o);
        let mut c = tape.mul(i, g)?;
        if let Some((_, c_prev)) = state {
            let f = tape.slice_cols(gates, hidden, hidden)?;
            let f = tape.sigmoid(f);
            let kept = tape.mul(f, c_prev)?;
            c = tape.add(c, kept)?;
        }
        let tc = tape.tanh(c);
        let h = tape.mul(o, tc)?;
        scores.push(tape.matmul(h, vars.score)?);
        state = Some((h, c));
    }

    let scores = tape.concat(&scores)?;
    let alpha = tape.softmax(scores);
    let mut out: Option<Var> = None;
    for (t, &x) in inputs.iter().enumerate() {
        let a = tape.slice_cols(alpha, t, 1)?;
        let term = tape.mul_col(x, a)?;
        out = Some(match out {
            Some(acc) => tape.add(acc, term)?,
            None => term,
        });
    }
    Ok((out.expect("at least one layer"), alpha))
}
