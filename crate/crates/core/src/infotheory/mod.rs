//! Exact discrete information-theory oracle.
//!
//! Entropies and mutual information by dense summation, the constructive
//! task-nuisance decomposition, brute-force certification of minimal
//! sufficient representations, and the augmentation-condition checks — all
//! at alphabet sizes small enough to enumerate.

mod decompose;
mod joint;
mod search;
mod theorems;

pub use decompose::{task_nuisance_decompose, Decomposition};
pub use joint::{Channel, DiscreteJoint, Variable, MI_CLAMP, TABLE_TOL};
pub use search::{
    decode_map, search_min_sufficient, MapResult, SearchCertificate, SearchOutcome,
    SUFFICIENCY_TOL, TIE_TOL,
};
pub use theorems::{
    check_symmetric_sufficiency, check_theorem_conditions, SymmetryReport, TheoremReport,
    ASSUMPTION_TOL,
};

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::SeedStream;

/// An additive-decomposition instance: X = h1(Y) + h2(N) with the nuisance
/// resampled to produce X' = X - h2(N) + h2(N').
///
/// h1 spaces the label offsets so symbol values never collide across
/// classes, and h2 is injective, so X is a bijection of (Y, N) and the
/// labeling map pi: X -> Y is deterministic.
#[derive(Debug, Clone)]
pub struct AdditiveInstance {
    /// Joint over (X, Y, N, Xp).
    pub joint: DiscreteJoint,
    pub h1: Vec<i64>,
    pub h2: Vec<i64>,
    /// Symbol value of each X index.
    pub x_symbols: Vec<i64>,
    pub p_y: Vec<f64>,
    pub p_n: Vec<f64>,
}

/// Builds a random additive instance with `ny` classes and `nn` nuisance
/// symbols, deterministic under `seed`.
pub fn build_additive_instance(ny: usize, nn: usize, seed: u64) -> Result<AdditiveInstance> {
    if ny == 0 || nn == 0 {
        return Err(Error::InvalidParam("empty alphabet".into()));
    }
    let streams = SeedStream::new(seed);
    let mut rng = streams.stream("additive", 0);

    // injective h2 into 0..2*nn: shuffle and take a prefix
    let mut pool: Vec<i64> = (0..(2 * nn) as i64).collect();
    for i in (1..pool.len()).rev() {
        let j = rng.random_range(0..=i);
        pool.swap(i, j);
    }
    let h2: Vec<i64> = pool.into_iter().take(nn).collect();
    let span = *h2.iter().max().expect("non-empty") + 1;
    let h1: Vec<i64> = (0..ny as i64).map(|y| y * span).collect();

    let mut p_y: Vec<f64> = (0..ny).map(|_| rng.random_range(0.05..1.0)).collect();
    let sy: f64 = p_y.iter().sum();
    p_y.iter_mut().for_each(|p| *p /= sy);
    let mut p_n: Vec<f64> = (0..nn).map(|_| rng.random_range(0.05..1.0)).collect();
    let sn: f64 = p_n.iter().sum();
    p_n.iter_mut().for_each(|p| *p /= sn);

    let mut x_symbols: Vec<i64> = Vec::new();
    for &a in &h1 {
        for &b in &h2 {
            x_symbols.push(a + b);
        }
    }
    x_symbols.sort_unstable();
    x_symbols.dedup();
    let nx = x_symbols.len();
    let sym_index = |v: i64| x_symbols.binary_search(&v).expect("symbol in alphabet");

    // joint over (X, Y, N, Xp): mass P(y) P(n) P(n')
    let sizes = [nx, ny, nn, nx];
    let mut table = vec![0.0; nx * ny * nn * nx];
    for yi in 0..ny {
        for ni in 0..nn {
            let xi = sym_index(h1[yi] + h2[ni]);
            for npi in 0..nn {
                let xpi = sym_index(h1[yi] + h2[npi]);
                let idx = ((xi * sizes[1] + yi) * sizes[2] + ni) * sizes[3] + xpi;
                table[idx] += p_y[yi] * p_n[ni] * p_n[npi];
            }
        }
    }
    let joint = DiscreteJoint::new(
        vec![("X".to_string(), nx), ("Y".to_string(), ny), ("N".to_string(), nn), ("Xp".to_string(), nx)],
        table,
    )?;
    Ok(AdditiveInstance { joint, h1, h2, x_symbols, p_y, p_n })
}

impl AdditiveInstance {
    /// The deterministic labeling pi: for every x in the support, the unique
    /// y with P(x, y) > 0. Errors if any x maps to two labels.
    pub fn labeling(&self) -> Result<Vec<Option<usize>>> {
        let xy = self.joint.marginal(&["X", "Y"])?;
        let nx = self.x_symbols.len();
        let ny = self.p_y.len();
        let mut pi = vec![None; nx];
        for xi in 0..nx {
            for yi in 0..ny {
                if xy.prob(&[xi, yi])? > 0.0 {
                    if let Some(prev) = pi[xi] {
                        if prev != yi {
                            return Err(Error::BadTable(format!(
                                "x index {xi} maps to labels {prev} and {yi}"
                            )));
                        }
                    }
                    pi[xi] = Some(yi);
                }
            }
        }
        Ok(pi)
    }

    /// Nuisance-variation invariance: for every y and every pair of nuisance
    /// symbols, both h1(y)+h2(n1) and h1(y)+h2(n2) carry label y.
    pub fn check_label_invariance(&self) -> Result<bool> {
        let pi = self.labeling()?;
        for (yi, &a) in self.h1.iter().enumerate() {
            for &b1 in &self.h2 {
                for &b2 in &self.h2 {
                    let x1 = self.x_symbols.binary_search(&(a + b1)).expect("in alphabet");
                    let x2 = self.x_symbols.binary_search(&(a + b2)).expect("in alphabet");
                    if pi[x1] != Some(yi) || pi[x2] != Some(yi) {
                        return Ok(false);
                    }
                }
            }
        }
        Ok(true)
    }

    pub fn theorem_report(&self) -> Result<TheoremReport> {
        check_theorem_conditions(&self.joint, "X", "Y", "N", "Xp")
    }
}

/// Random (X, Xp, Y) joint satisfying the exchangeability premises: given
/// each y, the pair distribution is symmetrized, which also equalizes the
/// conditional marginals.
pub fn random_symmetric_triple(nx: usize, ny: usize, seed: u64) -> Result<DiscreteJoint> {
    let streams = SeedStream::new(seed);
    let mut rng = streams.stream("symmetric", 0);
    let mut p_y: Vec<f64> = (0..ny).map(|_| rng.random_range(0.05..1.0)).collect();
    let sy: f64 = p_y.iter().sum();
    p_y.iter_mut().for_each(|p| *p /= sy);

    let mut table = vec![0.0; nx * nx * ny];
    for (yi, &py) in p_y.iter().enumerate() {
        let mut q = vec![0.0; nx * nx];
        for u in 0..nx {
            for v in 0..=u {
                let w = rng.random_range(0.01..1.0);
                q[u * nx + v] = w;
                q[v * nx + u] = w;
            }
        }
        let qs: f64 = q.iter().sum();
        for u in 0..nx {
            for v in 0..nx {
                table[(u * nx + v) * ny + yi] = py * q[u * nx + v] / qs;
            }
        }
    }
    DiscreteJoint::new(vec![("X", nx), ("Xp", nx), ("Y", ny)], table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn additive_instance_satisfies_both_conditions_exactly() {
        for seed in [0, 1, 7, 42] {
            let inst = build_additive_instance(3, 4, seed).unwrap();
            let rep = inst.theorem_report().unwrap();
            assert!(rep.assumption_met, "seed {seed}: H(Y|X) = {}", rep.h_y_given_x);
            assert!(
                rep.cond_a_slack.abs() <= 1e-9,
                "seed {seed}: slack {}",
                rep.cond_a_slack
            );
            assert!(
                rep.cond_b_epsilon <= 1e-9,
                "seed {seed}: epsilon {}",
                rep.cond_b_epsilon
            );
            assert!(rep.residual <= 1e-9, "seed {seed}: residual {}", rep.residual);
        }
    }

    #[test]
    fn additive_instance_label_invariance() {
        let inst = build_additive_instance(2, 5, 3).unwrap();
        assert!(inst.check_label_invariance().unwrap());
    }

    #[test]
    fn data_processing_inequality_through_channels() {
        for seed in 0..10 {
            let inst = build_additive_instance(2, 3, seed).unwrap();
            // any deterministic channel on Xp cannot gain nuisance information
            let nx = inst.x_symbols.len();
            let mut rng = SeedStream::new(seed).stream("dpi-map", 0);
            let map: Vec<usize> = (0..nx).map(|_| rng.random_range(0..3usize)).collect();
            let ch = Channel::deterministic(&map, 3).unwrap();
            let ext = inst.joint.extend_with_channel("Xp", &ch, "Z").unwrap();
            let i_zn = ext.mutual_information(&["Z"], &["N"]).unwrap();
            let i_xpn = ext.mutual_information(&["Xp"], &["N"]).unwrap();
            assert!(i_zn <= i_xpn + 1e-10, "seed {seed}: {i_zn} > {i_xpn}");
        }
    }

    #[test]
    fn symmetric_triple_is_a_valid_distribution() {
        let j = random_symmetric_triple(4, 3, 11).unwrap();
        let sum: f64 = j.table().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }
}
