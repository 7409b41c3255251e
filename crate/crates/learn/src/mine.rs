//! Neural lower bound on mutual information (Donsker–Varadhan form).
//!
//! The statistics network `T` scores concatenated pairs `[u, v]`. Joint pairs
//! keep rows aligned; product pairs pair `u` with a row permutation of `v`.

use std::f64::consts::LN_2;

use ndarray::{concatenate, Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{LearnError, Result};
use crate::network::{Network, Output};
use crate::tape::{Tape, Var};

pub fn joint_pairs(u: &Array2<f64>, v: &Array2<f64>) -> Array2<f64> {
    concatenate(Axis(1), &[u.view(), v.view()]).expect("pair halves share a row count")
}

/// Row permutation drawn from `rng`, used to break the pairing.
pub fn shuffled_rows(n: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    perm
}

pub fn product_pairs(u: &Array2<f64>, v: &Array2<f64>, perm: &[usize]) -> Array2<f64> {
    joint_pairs(u, &v.select(Axis(0), perm))
}

/// `mean_joint[T] - log mean_product[exp T]` in nats, recorded on the tape.
pub fn dv_bound(tape: &mut Tape, estimator: &Network, params: &[Var], joint: Var, product: Var) -> Var {
    let tj = estimator.forward(tape, params, joint, Output::Full);
    let tp = estimator.forward(tape, params, product, Output::Full);
    let first = tape.mean(tj);
    let second = tape.log_mean_exp(tp);
    tape.sub(first, second)
}

/// The bound in bits.
pub fn mi_lower_bound(estimator: &Network, joint: &Array2<f64>, product: &Array2<f64>) -> Result<f64> {
    if joint.nrows() == 0 || product.nrows() == 0 {
        return Err(LearnError::Shape("MI bound needs nonempty joint and product samples".into()));
    }
    if estimator.output_width() != 1 {
        return Err(LearnError::Shape("statistics network must emit one value".into()));
    }
    let tj = estimator.predict(joint, Output::Full);
    let tp = estimator.predict(product, Output::Full);
    let m = tp.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let lme = m + tp.mapv(|v| (v - m).exp()).mean().expect("nonempty").ln();
    let nats = tj.mean().expect("nonempty") - lme;
    if !nats.is_finite() {
        return Err(LearnError::Divergence { phase: "mi_lower_bound".into(), epoch: 0, loss: nats });
    }
    Ok(nats / LN_2)
}
