//! GRU and LSTM cells over time-major sequence batches.
//!
//! A sequence batch of `t` steps and `b` sequences is an `(t·b) × d` matrix
//! whose rows `s·b .. (s+1)·b` hold step `s`.
//!
//! GRU gate columns are `[r | z | ĥ]`:
//! r = σ(x W_r + h U_r + b_r), z = σ(x W_z + h U_z + b_z),
//! ĥ = tanh(x W_h + (r ⊙ h) U_h + b_h), h' = (1 − z) ⊙ h + z ⊙ ĥ.
//!
//! LSTM gate columns are `[i | f | o | g]`:
//! c' = f ⊙ c + i ⊙ g, h' = o ⊙ tanh(c').

use std::fmt;
use std::str::FromStr;

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView2, ArrayViewMut2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::activation::{sigmoid_inplace, tanh, tanh_inplace};
use crate::RnnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Gru,
    Lstm,
}

impl CellKind {
    pub fn gates(self) -> usize {
        match self {
            CellKind::Gru => 3,
            CellKind::Lstm => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CellKind::Gru => "gru",
            CellKind::Lstm => "lstm",
        }
    }
}

impl fmt::Display for CellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CellKind {
    type Err = RnnError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "gru" => Ok(CellKind::Gru),
            "lstm" => Ok(CellKind::Lstm),
            _ => Err(RnnError::Spec(format!("unknown cell kind {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellParams {
    pub kind: CellKind,
    /// input_dim × gates·hidden
    pub w: Array2<f64>,
    /// hidden × gates·hidden
    pub u: Array2<f64>,
    pub b: Array1<f64>,
}

impl CellParams {
    pub fn zeros(kind: CellKind, input_dim: usize, hidden: usize) -> Self {
        let g = kind.gates() * hidden;
        Self {
            kind,
            w: Array2::zeros((input_dim, g)),
            u: Array2::zeros((hidden, g)),
            b: Array1::zeros(g),
        }
    }

    /// Uniform in ±1/√hidden for every weight and bias.
    pub fn random(kind: CellKind, input_dim: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let k = 1.0 / (hidden as f64).sqrt();
        let mut p = Self::zeros(kind, input_dim, hidden);
        for v in p.w.iter_mut().chain(p.u.iter_mut()).chain(p.b.iter_mut()) {
            *v = rng.gen_range(-k..k);
        }
        p
    }

    pub fn input_dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn hidden(&self) -> usize {
        self.u.nrows()
    }

    fn check(&self, kind: CellKind, x: &ArrayView2<f64>, h: &ArrayView2<f64>) -> Result<(), RnnError> {
        if self.kind != kind {
            return Err(RnnError::Shape(format!("{} step on a {} cell", kind, self.kind)));
        }
        if x.ncols() != self.input_dim() || h.ncols() != self.hidden() || x.nrows() != h.nrows() {
            return Err(RnnError::Shape(format!(
                "x {:?} / h {:?} against cell {}→{}",
                x.shape(),
                h.shape(),
                self.input_dim(),
                self.hidden()
            )));
        }
        Ok(())
    }

    /// One GRU step for a batch of rows.
    pub fn gru_step(&self, x: ArrayView2<f64>, h: ArrayView2<f64>) -> Result<Array2<f64>, RnnError> {
        self.check(CellKind::Gru, &x, &h)?;
        let mut gates = x.dot(&self.w) + &self.b;
        let mut rh = Array2::zeros(h.raw_dim());
        let mut out = Array2::zeros(h.raw_dim());
        gru_cell(&self.u, gates.view_mut(), h, rh.view_mut(), out.view_mut());
        Ok(out)
    }

    /// One LSTM step; returns (h, c).
    pub fn lstm_step(
        &self,
        x: ArrayView2<f64>,
        h: ArrayView2<f64>,
        c: ArrayView2<f64>,
    ) -> Result<(Array2<f64>, Array2<f64>), RnnError> {
        self.check(CellKind::Lstm, &x, &h)?;
        if c.shape() != h.shape() {
            return Err(RnnError::Shape(format!("c {:?} vs h {:?}", c.shape(), h.shape())));
        }
        let mut gates = x.dot(&self.w) + &self.b;
        let mut tc = Array2::zeros(h.raw_dim());
        let (mut h_new, mut c_new) = (Array2::zeros(h.raw_dim()), Array2::zeros(h.raw_dim()));
        lstm_cell(&self.u, gates.view_mut(), h, c, c_new.view_mut(), tc.view_mut(), h_new.view_mut());
        Ok((h_new, c_new))
    }
}

/// `gates` holds the input projection plus bias on entry and the activated
/// `[r | z | ĥ]` on exit.
fn gru_cell(
    u: &Array2<f64>,
    gates: ArrayViewMut2<f64>,
    h: ArrayView2<f64>,
    mut rh: ArrayViewMut2<f64>,
    mut h_new: ArrayViewMut2<f64>,
) {
    let hid = h.ncols();
    let (mut rz, mut hc) = gates.split_at(Axis(1), 2 * hid);
    general_mat_mul(1.0, &h, &u.slice(s![.., ..2 * hid]), 1.0, &mut rz);
    sigmoid_inplace(rz.view_mut());
    let (r, z) = rz.view().split_at(Axis(1), hid);
    Zip::from(&mut rh).and(&r).and(&h).for_each(|o, &r, &h| *o = r * h);
    general_mat_mul(1.0, &rh, &u.slice(s![.., 2 * hid..]), 1.0, &mut hc);
    tanh_inplace(hc.view_mut());
    Zip::from(&mut h_new)
        .and(&h)
        .and(&z)
        .and(&hc)
        .for_each(|o, &hp, &z, &hc| *o = (1.0 - z) * hp + z * hc);
}

/// As [`gru_cell`], with gates `[i | f | o | g]`.
fn lstm_cell(
    u: &Array2<f64>,
    mut gates: ArrayViewMut2<f64>,
    h: ArrayView2<f64>,
    c: ArrayView2<f64>,
    mut c_new: ArrayViewMut2<f64>,
    mut tc: ArrayViewMut2<f64>,
    mut h_new: ArrayViewMut2<f64>,
) {
    let hid = h.ncols();
    general_mat_mul(1.0, &h, u, 1.0, &mut gates);
    sigmoid_inplace(gates.slice_mut(s![.., ..3 * hid]));
    tanh_inplace(gates.slice_mut(s![.., 3 * hid..]));
    let i = gates.slice(s![.., ..hid]);
    let f = gates.slice(s![.., hid..2 * hid]);
    let o = gates.slice(s![.., 2 * hid..3 * hid]);
    let g = gates.slice(s![.., 3 * hid..]);
    Zip::from(&mut c_new)
        .and(&f)
        .and(&c)
        .and(&i)
        .and(&g)
        .for_each(|cn, &f, &c, &i, &g| *cn = f * c + i * g);
    Zip::from(&mut h_new)
        .and(&mut tc)
        .and(&c_new)
        .and(&o)
        .for_each(|hn, tc, &cn, &o| {
            *tc = tanh(cn);
            *hn = o * *tc;
        });
}

/// Activations kept for backpropagation through one layer.
pub(crate) enum SeqCache {
    Gru {
        /// (t+1)·b × hidden, first block is the zero initial state
        hs: Array2<f64>,
        /// activated `[r | z | ĥ]`
        gates: Array2<f64>,
        rh: Array2<f64>,
    },
    Lstm {
        hs: Array2<f64>,
        cs: Array2<f64>,
        gates: Array2<f64>,
        tc: Array2<f64>,
    },
}

/// Splits a state matrix into the block for step `t` and the one after it.
fn step_pair(states: &mut Array2<f64>, t: usize, batch: usize) -> (ArrayViewMut2<'_, f64>, ArrayViewMut2<'_, f64>) {
    states.multi_slice_mut((s![t * batch..(t + 1) * batch, ..], s![(t + 1) * batch..(t + 2) * batch, ..]))
}

/// Runs a cell over every step from zero state; returns all hidden states
/// (t·b × hidden) and, if asked, the cache for [`backward_seq`].
pub(crate) fn forward_seq(
    p: &CellParams,
    x: &Array2<f64>,
    steps: usize,
    batch: usize,
    keep: bool,
) -> (Array2<f64>, Option<SeqCache>) {
    let hid = p.hidden();
    let mut gates = x.dot(&p.w) + &p.b;
    let mut hs = Array2::zeros(((steps + 1) * batch, hid));
    let rows = |s: usize| s * batch..(s + 1) * batch;
    // per-step scratch unless every step is kept
    let scratch_rows = |keep: bool| if keep { steps * batch } else { batch };
    let at = |keep: bool, t: usize| if keep { rows(t) } else { rows(0) };
    match p.kind {
        CellKind::Gru => {
            let mut rh = Array2::zeros((scratch_rows(keep), hid));
            for t in 0..steps {
                let (h, h_new) = step_pair(&mut hs, t, batch);
                gru_cell(
                    &p.u,
                    gates.slice_mut(s![rows(t), ..]),
                    h.view(),
                    rh.slice_mut(s![at(keep, t), ..]),
                    h_new,
                );
            }
            let out = hs.slice(s![batch.., ..]).to_owned();
            (out, keep.then_some(SeqCache::Gru { hs, gates, rh }))
        }
        CellKind::Lstm => {
            let mut cs = Array2::zeros(((steps + 1) * batch, hid));
            let mut tc = Array2::zeros((scratch_rows(keep), hid));
            for t in 0..steps {
                let (h, h_new) = step_pair(&mut hs, t, batch);
                let (c, c_new) = step_pair(&mut cs, t, batch);
                lstm_cell(
                    &p.u,
                    gates.slice_mut(s![rows(t), ..]),
                    h.view(),
                    c.view(),
                    c_new,
                    tc.slice_mut(s![at(keep, t), ..]),
                    h_new,
                );
            }
            let out = hs.slice(s![batch.., ..]).to_owned();
            (out, keep.then_some(SeqCache::Lstm { hs, cs, gates, tc }))
        }
    }
}

/// Backpropagation through time. `d_out` is dL/dh for every step's output;
/// accumulates parameter gradients into `grads` and returns dL/dx.
pub(crate) fn backward_seq(
    p: &CellParams,
    x: &Array2<f64>,
    cache: &SeqCache,
    d_out: &Array2<f64>,
    steps: usize,
    batch: usize,
    grads: &mut CellParams,
) -> Array2<f64> {
    let hid = p.hidden();
    let gates = p.kind.gates();
    let rows = |s: usize| s * batch..(s + 1) * batch;
    let mut da = Array2::<f64>::zeros((steps * batch, gates * hid));
    let mut dh_next = Array2::<f64>::zeros((batch, hid));
    let mut dh = Array2::<f64>::zeros((batch, hid));
    match cache {
        SeqCache::Gru { hs, gates, rh } => {
            let u_rz_t = p.u.slice(s![.., ..2 * hid]).t().to_owned();
            let u_h_t = p.u.slice(s![.., 2 * hid..]).t().to_owned();
            let mut drh = Array2::<f64>::zeros((batch, hid));
            for t in (0..steps).rev() {
                let h_prev = hs.slice(s![rows(t), ..]);
                let act = gates.slice(s![rows(t), ..]);
                let (r, z, hc) = (
                    act.slice(s![.., ..hid]),
                    act.slice(s![.., hid..2 * hid]),
                    act.slice(s![.., 2 * hid..]),
                );
                Zip::from(&mut dh)
                    .and(&d_out.slice(s![rows(t), ..]))
                    .and(&dh_next)
                    .for_each(|dh, &d, &n| *dh = d + n);
                let mut blk = da.slice_mut(s![rows(t), ..]);
                let (mut da_rz, mut da_h) = blk.view_mut().split_at(Axis(1), 2 * hid);
                let (mut da_r, mut da_z) = da_rz.view_mut().split_at(Axis(1), hid);
                Zip::from(&mut da_h)
                    .and(&mut da_z)
                    .and(&dh)
                    .and(&z)
                    .and(&hc)
                    .and(&h_prev)
                    .for_each(|dah, daz, &dh, &z, &hc, &hp| {
                        *dah = dh * z * (1.0 - hc * hc);
                        *daz = dh * (hc - hp) * z * (1.0 - z);
                    });
                general_mat_mul(1.0, &da_h, &u_h_t, 0.0, &mut drh);
                Zip::from(&mut da_r)
                    .and(&mut dh_next)
                    .and(&dh)
                    .and(&z)
                    .and(&drh)
                    .and(&r)
                    .for_each(|dar, dhp, &dh, &z, &drh, &r| {
                        *dar = drh * r * (1.0 - r);
                        *dhp = dh * (1.0 - z) + drh * r;
                    });
                Zip::from(&mut da_r).and(&h_prev).for_each(|dar, &hp| *dar *= hp);
                general_mat_mul(1.0, &da_rz, &u_rz_t, 1.0, &mut dh_next);
            }
            let h_prev_all = hs.slice(s![..steps * batch, ..]);
            let mut gu_rz = grads.u.slice_mut(s![.., ..2 * hid]);
            general_mat_mul(1.0, &h_prev_all.t(), &da.slice(s![.., ..2 * hid]), 1.0, &mut gu_rz);
            let mut gu_h = grads.u.slice_mut(s![.., 2 * hid..]);
            general_mat_mul(1.0, &rh.t(), &da.slice(s![.., 2 * hid..]), 1.0, &mut gu_h);
            accumulate_input_grads(x, &da, grads);
        }
        SeqCache::Lstm { hs, cs, gates, tc } => {
            let u_t = p.u.t().to_owned();
            let mut dc_next = Array2::<f64>::zeros((batch, hid));
            for t in (0..steps).rev() {
                let act = gates.slice(s![rows(t), ..]);
                let (i, f, o, g) = (
                    act.slice(s![.., ..hid]),
                    act.slice(s![.., hid..2 * hid]),
                    act.slice(s![.., 2 * hid..3 * hid]),
                    act.slice(s![.., 3 * hid..]),
                );
                let c_prev = cs.slice(s![rows(t), ..]);
                let tc = tc.slice(s![rows(t), ..]);
                Zip::from(&mut dh)
                    .and(&d_out.slice(s![rows(t), ..]))
                    .and(&dh_next)
                    .for_each(|dh, &d, &n| *dh = d + n);
                let mut blk = da.slice_mut(s![rows(t), ..]);
                let (mut d_if, mut d_og) = blk.view_mut().split_at(Axis(1), 2 * hid);
                let (mut d_i, mut d_f) = d_if.view_mut().split_at(Axis(1), hid);
                let (mut d_o, mut d_g) = d_og.view_mut().split_at(Axis(1), hid);
                Zip::from(&mut d_o)
                    .and(&mut dc_next)
                    .and(&dh)
                    .and(&o)
                    .and(&tc)
                    .for_each(|d_o, dc, &dh, &o, &tc| {
                        *d_o = dh * tc * o * (1.0 - o);
                        *dc += dh * o * (1.0 - tc * tc);
                    });
                Zip::from(&mut d_i)
                    .and(&mut d_g)
                    .and(&dc_next)
                    .and(&i)
                    .and(&g)
                    .for_each(|d_i, d_g, &dc, &i, &g| {
                        *d_i = dc * g * i * (1.0 - i);
                        *d_g = dc * i * (1.0 - g * g);
                    });
                Zip::from(&mut d_f)
                    .and(&mut dc_next)
                    .and(&f)
                    .and(&c_prev)
                    .for_each(|d_f, dc, &f, &cp| {
                        *d_f = *dc * cp * f * (1.0 - f);
                        *dc *= f;
                    });
                general_mat_mul(1.0, &blk, &u_t, 0.0, &mut dh_next);
            }
            general_mat_mul(1.0, &hs.slice(s![..steps * batch, ..]).t(), &da, 1.0, &mut grads.u);
            accumulate_input_grads(x, &da, grads);
        }
    }
    da.dot(&p.w.t())
}

fn accumulate_input_grads(x: &Array2<f64>, da: &Array2<f64>, grads: &mut CellParams) {
    general_mat_mul(1.0, &x.t(), da, 1.0, &mut grads.w);
    for row in da.rows() {
        grads.b += &row;
    }
}
