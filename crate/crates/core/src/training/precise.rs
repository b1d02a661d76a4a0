//! Central differences of the s2e loss evaluated in 128-bit arithmetic.
//!
//! In `f64` the loss carries roundoff near 1e-16, which a step of 1e-5
//! amplifies to ~1e-11 in the difference quotient. That swamps the smallest
//! gradient coordinates. Here every intermediate is an MPFR float, so the
//! quotient is limited only by truncation error.

use rug::ops::NegAssign;
use rug::Float;

use crate::corpus::{ClusterSet, Span};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::params::ParamSet;
use crate::s2e::S2eParams;

use super::loss::GoldTargets;

pub const PRECISION: u32 = 128;

type Grid = Vec<Vec<Float>>;

fn big(v: f64) -> Float {
    Float::with_val(PRECISION, v)
}

fn grid(m: &Matrix) -> Grid {
    (0..m.rows())
        .map(|r| m.row(r).iter().map(|&v| big(v)).collect())
        .collect()
}

fn gelu(z: &Float) -> Float {
    let mut arg = Float::with_val(PRECISION, z / Float::with_val(PRECISION, 2u32).sqrt());
    arg.neg_assign();
    let erfc = arg.erfc();
    Float::with_val(PRECISION, z * erfc) / 2u32
}

fn dot(a: &[Float], b: &[Float]) -> Float {
    let mut acc = Float::new(PRECISION);
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// `B · v`
fn mat_vec(b: &Grid, v: &[Float]) -> Vec<Float> {
    b.iter().map(|row| dot(row, v)).collect()
}

fn log_sum_exp(values: &[Float]) -> Float {
    let max = values.iter().max_by(|a, b| a.total_cmp(b)).expect("non-empty").clone();
    let mut sum = Float::new(PRECISION);
    for v in values {
        sum += Float::with_val(PRECISION, v - &max).exp();
    }
    max + sum.ln()
}

struct Projection {
    pre: Grid,
    out: Grid,
}

impl Projection {
    fn new(x: &Grid, w: &Matrix) -> Projection {
        let weights = grid(w);
        let pre: Grid = x
            .iter()
            .map(|row| weights.iter().map(|wr| dot(wr, row)).collect())
            .collect();
        let out = pre.iter().map(|row| row.iter().map(gelu).collect()).collect();
        Projection { pre, out }
    }
}

struct Small {
    v_start: Vec<Float>,
    v_end: Vec<Float>,
    b_mention: Grid,
    b: [Grid; 4],
}

struct Oracle<'a> {
    x: Grid,
    proj: [Projection; 4],
    small: Small,
    spans: &'a [Span],
    targets: GoldTargets,
}

impl Oracle<'_> {
    fn loss(&self) -> Float {
        let [ms, me, a_s, a_e] = &self.proj;
        let s = &self.small;
        let k = self.spans.len();
        let fm: Vec<Float> = self
            .spans
            .iter()
            .map(|sp| {
                let u = &ms.out[sp.start];
                let w = &me.out[sp.end];
                dot(&s.v_start, u) + dot(&s.v_end, w) + dot(u, &mat_vec(&s.b_mention, w))
            })
            .collect();
        // right-hand products B·a for each query
        let rhs: Vec<[Vec<Float>; 4]> = self
            .spans
            .iter()
            .map(|sp| {
                let qs = &a_s.out[sp.start];
                let qe = &a_e.out[sp.end];
                [
                    mat_vec(&s.b[0], qs),
                    mat_vec(&s.b[1], qe),
                    mat_vec(&s.b[2], qs),
                    mat_vec(&s.b[3], qe),
                ]
            })
            .collect();
        let mut total = Float::new(PRECISION);
        for j in 0..k {
            let mut scores = vec![Float::new(PRECISION)];
            for i in 0..j {
                let cs = &a_s.out[self.spans[i].start];
                let ce = &a_e.out[self.spans[i].end];
                let r = &rhs[j];
                let fa = dot(cs, &r[0]) + dot(cs, &r[1]) + dot(ce, &r[2]) + dot(ce, &r[3]);
                scores.push(Float::with_val(PRECISION, &fm[i] + &fm[j]) + fa);
            }
            let gold = &self.targets.antecedents[j];
            let positive = if gold.is_empty() {
                Float::new(PRECISION)
            } else {
                let picked: Vec<Float> = gold.iter().map(|&i| scores[i + 1].clone()).collect();
                log_sum_exp(&picked)
            };
            total += log_sum_exp(&scores) - positive;
        }
        if k > 0 {
            total /= k as u32;
        }
        total
    }

    /// Difference quotient for `W[r][c]` of projection `p`: only column `r`
    /// of that projection changes.
    fn weight_quotient(&mut self, p: usize, r: usize, c: usize, h: &Float) -> Float {
        let n = self.x.len();
        let saved: Vec<Float> = (0..n).map(|t| self.proj[p].out[t][r].clone()).collect();
        let eval = |sign: i32, oracle: &mut Oracle| {
            for t in 0..n {
                let shift = Float::with_val(PRECISION, &oracle.x[t][c] * h) * sign;
                let z = Float::with_val(PRECISION, &oracle.proj[p].pre[t][r] + shift);
                oracle.proj[p].out[t][r] = gelu(&z);
            }
            oracle.loss()
        };
        let up = eval(1, self);
        let down = eval(-1, self);
        for (t, v) in saved.into_iter().enumerate() {
            self.proj[p].out[t][r] = v;
        }
        (up - down) / Float::with_val(PRECISION, h * 2u32)
    }
}

fn small_entry(small: &mut Small, tensor: usize, r: usize, c: usize) -> &mut Float {
    match tensor {
        2 => &mut small.v_start[r],
        3 => &mut small.v_end[r],
        4 => &mut small.b_mention[r][c],
        7..=10 => &mut small.b[tensor - 7][r][c],
        _ => unreachable!("tensor {tensor} is a projection weight"),
    }
}

/// Central differences `(L(θ + h·e_i) − L(θ − h·e_i)) / 2h` of the s2e loss
/// with the candidate list held fixed, every loss evaluated at 128 bits.
pub fn precise_numeric_gradient(
    x: &Matrix,
    candidates: &[Span],
    gold: &ClusterSet,
    params: &S2eParams,
    h: f64,
) -> Result<S2eParams> {
    if !(h > 0.0) {
        return Err(Error::Precondition(format!("step h = {h} must be positive")));
    }
    if x.cols() != params.input_dim() {
        return Err(Error::Dimension(format!(
            "embedding width {} but head expects {}",
            x.cols(),
            params.input_dim()
        )));
    }
    let xg = grid(x);
    let proj = [
        Projection::new(&xg, &params.w_mention_start),
        Projection::new(&xg, &params.w_mention_end),
        Projection::new(&xg, &params.w_antecedent_start),
        Projection::new(&xg, &params.w_antecedent_end),
    ];
    let small = Small {
        v_start: grid(&params.v_start).into_iter().map(|mut r| r.remove(0)).collect(),
        v_end: grid(&params.v_end).into_iter().map(|mut r| r.remove(0)).collect(),
        b_mention: grid(&params.b_mention),
        b: [
            grid(&params.b_start_start),
            grid(&params.b_start_end),
            grid(&params.b_end_start),
            grid(&params.b_end_end),
        ],
    };
    let mut oracle = Oracle {
        x: xg,
        proj,
        small,
        spans: candidates,
        targets: GoldTargets::new(candidates, gold),
    };
    let hb = big(h);
    let two_h = Float::with_val(PRECISION, &hb * 2u32);

    let mut grads = params.zeros_like();
    // tensor order: w_ms, w_me, v_s, v_e, b_m, w_as, w_ae, b_ss, b_se, b_es, b_ee
    for (tensor, (_, g)) in grads.tensors_mut().into_iter().enumerate() {
        let cols = g.cols();
        for idx in 0..g.len() {
            let (r, c) = (idx / cols, idx % cols);
            let quotient = match tensor {
                0 | 1 => oracle.weight_quotient(tensor, r, c, &hb),
                5 | 6 => oracle.weight_quotient(tensor - 3, r, c, &hb),
                _ => {
                    let original = small_entry(&mut oracle.small, tensor, r, c).clone();
                    *small_entry(&mut oracle.small, tensor, r, c) = Float::with_val(PRECISION, &original + &hb);
                    let up = oracle.loss();
                    *small_entry(&mut oracle.small, tensor, r, c) = Float::with_val(PRECISION, &original - &hb);
                    let down = oracle.loss();
                    *small_entry(&mut oracle.small, tensor, r, c) = original;
                    (up - down) / &two_h
                }
            };
            g.as_mut_slice()[idx] = quotient.to_f64();
        }
    }
    Ok(grads)
}
