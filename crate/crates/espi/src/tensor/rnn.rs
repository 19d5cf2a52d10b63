//! LSTM and GRU cells assembled from tape primitives.

use super::{Tape, TensorError, Var};

/// Tape handles for one LSTM direction. Gates are input/forget/candidate/output,
/// each with its own input and recurrent weight matrix plus bias.
#[derive(Clone, Copy)]
pub struct LstmVars {
    pub wx_i: Var,
    pub wh_i: Var,
    pub b_i: Var,
    pub wx_f: Var,
    pub wh_f: Var,
    pub b_f: Var,
    pub wx_g: Var,
    pub wh_g: Var,
    pub b_g: Var,
    pub wx_o: Var,
    pub wh_o: Var,
    pub b_o: Var,
}

fn lstm_gate(
    tape: &mut Tape,
    wx: Var,
    x: Var,
    wh: Var,
    h: Var,
    b: Var,
) -> Result<Var, TensorError> {
    let a = tape.matvec(wx, x)?;
    let r = tape.matvec(wh, h)?;
    let s = tape.add(a, r)?;
    tape.add(s, b)
}

/// One LSTM step: sigmoid input/forget/output gates, tanh candidate.
pub fn lstm_cell(
    tape: &mut Tape,
    h_prev: Var,
    c_prev: Var,
    x: Var,
    p: &LstmVars,
) -> Result<(Var, Var), TensorError> {
    let i = lstm_gate(tape, p.wx_i, x, p.wh_i, h_prev, p.b_i)?;
    let i = tape.sigmoid(i);
    let f = lstm_gate(tape, p.wx_f, x, p.wh_f, h_prev, p.b_f)?;
    let f = tape.sigmoid(f);
    let g = lstm_gate(tape, p.wx_g, x, p.wh_g, h_prev, p.b_g)?;
    let g = tape.tanh(g);
    let o = lstm_gate(tape, p.wx_o, x, p.wh_o, h_prev, p.b_o)?;
    let o = tape.sigmoid(o);

    let fc = tape.mul(f, c_prev)?;
    let ig = tape.mul(i, g)?;
    let c = tape.add(fc, ig)?;
    let tc = tape.tanh(c);
    let h = tape.mul(o, tc)?;
    Ok((h, c))
}

/// Run independent forward and backward LSTMs over a sequence from zero
/// initial states. Returns per-step hidden states for each direction;
/// `backward[t]` is the backward state at input position `t`.
pub fn bilstm_sequence(
    tape: &mut Tape,
    inputs: &[Var],
    fwd: &LstmVars,
    bwd: &LstmVars,
    hidden: usize,
) -> Result<(Vec<Var>, Vec<Var>), TensorError> {
    assert!(!inputs.is_empty(), "bilstm_sequence needs at least one input");
    let mut fwd_states = Vec::with_capacity(inputs.len());
    let mut h = tape.zeros_leaf(hidden);
    let mut c = tape.zeros_leaf(hidden);
    for x in inputs {
        let (nh, nc) = lstm_cell(tape, h, c, *x, fwd)?;
        fwd_states.push(nh);
        h = nh;
        c = nc;
    }
    let mut bwd_states = vec![fwd_states[0]; inputs.len()];
    let mut h = tape.zeros_leaf(hidden);
    let mut c = tape.zeros_leaf(hidden);
    for (t, x) in inputs.iter().enumerate().rev() {
        let (nh, nc) = lstm_cell(tape, h, c, *x, bwd)?;
        bwd_states[t] = nh;
        h = nh;
        c = nc;
    }
    Ok((fwd_states, bwd_states))
}

/// Tape handles for a GRU cell: update gate z, reset gate r, candidate h~.
#[derive(Clone, Copy)]
pub struct GruVars {
    pub wx_z: Var,
    pub wh_z: Var,
    pub b_z: Var,
    pub wx_r: Var,
    pub wh_r: Var,
    pub b_r: Var,
    pub wx_h: Var,
    pub wh_h: Var,
    pub b_h: Var,
}

/// One GRU step: `h' = (1 - z) * h_prev + z * tanh(Wh x + Uh (r * h_prev) + bh)`.
pub fn gru_cell(tape: &mut Tape, h_prev: Var, x: Var, p: &GruVars) -> Result<Var, TensorError> {
    let z = lstm_gate_like(tape, p.wx_z, x, p.wh_z, h_prev, p.b_z)?;
    let z = tape.sigmoid(z);
    let r = lstm_gate_like(tape, p.wx_r, x, p.wh_r, h_prev, p.b_r)?;
    let r = tape.sigmoid(r);

    let rh = tape.mul(r, h_prev)?;
    let cand = lstm_gate_like(tape, p.wx_h, x, p.wh_h, rh, p.b_h)?;
    let cand = tape.tanh(cand);

    let keep = tape.one_minus(z);
    let a = tape.mul(keep, h_prev)?;
    let b = tape.mul(z, cand)?;
    tape.add(a, b)
}

fn lstm_gate_like(
    tape: &mut Tape,
    wx: Var,
    x: Var,
    wh: Var,
    h: Var,
    b: Var,
) -> Result<Var, TensorError> {
    let a = tape.matvec(wx, x)?;
    let r = tape.matvec(wh, h)?;
    let s = tape.add(a, r)?;
    tape.add(s, b)
}
