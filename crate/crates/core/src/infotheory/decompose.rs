//! Constructive task-nuisance decomposition.
//!
//! For any joint over (X, Y) with discrete Y there is an N independent of Y
//! with X = d(Y, N). The witness used here is the inverse-CDF coupling: N is
//! uniform on [0, 1] discretized to the coarsest grid refining every
//! conditional CDF of X given y, under a fixed symbol ordering.

use crate::error::{Error, Result};
use crate::infotheory::joint::DiscreteJoint;

/// Witnessed decomposition: N's alphabet, the map d, and the extended joint.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub n_size: usize,
    /// Interval masses of N (a distribution).
    pub p_n: Vec<f64>,
    /// d[y][n] -> x index; rows for zero-mass y are all zero and unused.
    pub d: Vec<Vec<usize>>,
    /// Joint over (X, Y, N) whose (X, Y) marginal matches the input.
    pub extended: DiscreteJoint,
    /// Verified I(N ∧ Y).
    pub i_ny: f64,
    /// Verified H(X | Y, N).
    pub h_x_given_yn: f64,
}

const CHECK_TOL: f64 = 1e-12;
const BREAKPOINT_MERGE: f64 = 1e-15;

/// Builds the nuisance witness for a two-variable joint.
pub fn task_nuisance_decompose(joint: &DiscreteJoint, x: &str, y: &str) -> Result<Decomposition> {
    let nx = joint.size_of(x)?;
    let ny = joint.size_of(y)?;
    let xy = joint.marginal(&[x, y])?;
    let p_y = joint.marginal(&[y])?;

    // conditional CDFs of X given each y with mass
    let mut cdfs: Vec<Option<Vec<f64>>> = vec![None; ny];
    for yi in 0..ny {
        let py = p_y.table()[yi];
        if py == 0.0 {
            continue; // degenerate row skipped
        }
        let mut cdf = Vec::with_capacity(nx);
        let mut acc = 0.0;
        for xi in 0..nx {
            acc += xy.prob(&[xi, yi])? / py;
            cdf.push(acc);
        }
        // force exact closure so the final interval always lands
        if let Some(last) = cdf.last_mut() {
            *last = 1.0;
        }
        cdfs[yi] = Some(cdf);
    }

    // coarsest grid refining every conditional CDF
    let mut breakpoints = vec![0.0, 1.0];
    for cdf in cdfs.iter().flatten() {
        breakpoints.extend(cdf.iter().copied());
    }
    breakpoints.retain(|&b| (0.0..=1.0).contains(&b));
    breakpoints.sort_by(|a, b| a.partial_cmp(b).unwrap());
    breakpoints.dedup_by(|a, b| (*a - *b).abs() <= BREAKPOINT_MERGE);

    let mut intervals = Vec::new();
    for w in breakpoints.windows(2) {
        if w[1] - w[0] > 0.0 {
            intervals.push((w[0], w[1]));
        }
    }
    let n_size = intervals.len();
    let p_n: Vec<f64> = intervals.iter().map(|(a, b)| b - a).collect();

    // d(y, n): the unique CDF step of y containing the interval midpoint
    let mut d = vec![vec![0usize; n_size]; ny];
    for yi in 0..ny {
        if let Some(cdf) = &cdfs[yi] {
            for (ni, &(a, b)) in intervals.iter().enumerate() {
                let mid = 0.5 * (a + b);
                let xi = cdf.partition_point(|&c| c <= mid).min(nx - 1);
                d[yi][ni] = xi;
            }
        }
    }

    // extended joint P(x, y, n) = P(y) P(n) [d(y, n) = x]
    let mut table = vec![0.0; nx * ny * n_size];
    for yi in 0..ny {
        let py = p_y.table()[yi];
        if py == 0.0 {
            continue;
        }
        for ni in 0..n_size {
            let xi = d[yi][ni];
            table[(xi * ny + yi) * n_size + ni] += py * p_n[ni];
        }
    }
    let extended = DiscreteJoint::new(
        vec![(x.to_string(), nx), (y.to_string(), ny), ("N".to_string(), n_size)],
        table,
    )?;

    // verify the lemma's two conditions and marginal consistency
    let i_ny = extended.mutual_information(&["N"], &[y])?;
    let h_x_given_yn = extended.conditional_entropy(&[x], &[y, "N"])?;
    if i_ny.abs() > CHECK_TOL {
        return Err(Error::BadTable(format!("decomposition failed: I(N;Y) = {i_ny}")));
    }
    if h_x_given_yn.abs() > CHECK_TOL {
        return Err(Error::BadTable(format!(
            "decomposition failed: H(X|Y,N) = {h_x_given_yn}"
        )));
    }
    let back = extended.marginal(&[x, y])?;
    for (i, (a, b)) in back.table().iter().zip(xy.table()).enumerate() {
        if (a - b).abs() > 1e-11 {
            return Err(Error::BadTable(format!(
                "decomposition failed: marginal mismatch {a} vs {b} at {i}"
            )));
        }
    }

    Ok(Decomposition { n_size, p_n, d, extended, i_ny, h_x_given_yn })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_x_equals_y() {
        let j = DiscreteJoint::new(
            vec![("X", 2), ("Y", 2)],
            vec![0.3, 0.0, 0.0, 0.7],
        )
        .unwrap();
        let dec = task_nuisance_decompose(&j, "X", "Y").unwrap();
        assert!(dec.i_ny.abs() <= 1e-12);
        assert!(dec.h_x_given_yn.abs() <= 1e-12);
        // X is a function of Y alone: a single nuisance symbol suffices
        assert_eq!(dec.n_size, 1);
    }

    #[test]
    fn independent_x_carries_everything_in_n() {
        // X uniform(4) independent of Y uniform(2)
        let j = DiscreteJoint::new(vec![("X", 4), ("Y", 2)], vec![0.125; 8]).unwrap();
        let dec = task_nuisance_decompose(&j, "X", "Y").unwrap();
        let h_n = dec.extended.entropy(&["N"]).unwrap();
        let h_x = j.entropy(&["X"]).unwrap();
        assert!(h_n >= h_x - 1e-12);
    }

    #[test]
    fn random_joint_passes_both_checks() {
        let j = DiscreteJoint::random(vec![("X", 3), ("Y", 3)], 7).unwrap();
        let dec = task_nuisance_decompose(&j, "X", "Y").unwrap();
        assert!(dec.i_ny.abs() <= 1e-12);
        assert!(dec.h_x_given_yn.abs() <= 1e-12);
    }

    #[test]
    fn zero_mass_row_is_skipped() {
        // y = 1 has zero probability
        let j = DiscreteJoint::new(
            vec![("X", 2), ("Y", 2)],
            vec![0.4, 0.0, 0.6, 0.0],
        )
        .unwrap();
        let dec = task_nuisance_decompose(&j, "X", "Y").unwrap();
        assert!(dec.i_ny.abs() <= 1e-12);
        assert!(dec.h_x_given_yn.abs() <= 1e-12);
    }
}
