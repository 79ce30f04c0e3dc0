//! Brute-force certification of (epsilon-)minimal sufficient representations.
//!
//! Enumerates every deterministic map f: X -> {0..k-1}, keeps those with
//! I(f(X) ∧ Y) = I(X ∧ Y) up to 1e-9, and returns the first (in enumeration
//! order) whose I(f(X) ∧ X) is within 1e-12 of the smallest achieved. The
//! enumeration partitions across workers and merges chunk results in index
//! order, so the outcome is scheduling-independent.

use crate::error::{Error, Result};
use crate::infotheory::joint::{entropy_of, DiscreteJoint};
use crate::parallel;

/// Sufficiency tolerance on |I(Z ∧ Y) - I(X ∧ Y)|.
pub const SUFFICIENCY_TOL: f64 = 1e-9;
/// Two I(Z ∧ X) values closer than this count as tied; enumeration order wins.
pub const TIE_TOL: f64 = 1e-12;

const MAX_X: usize = 8;
const ENUM_CHUNK: u64 = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct MapResult {
    /// f(x) for each x in alphabet order.
    pub assignment: Vec<usize>,
    pub i_zy: f64,
    pub i_zx: f64,
}

#[derive(Debug, Clone)]
pub struct SearchCertificate {
    pub best: MapResult,
    /// Every sufficient map, sorted ascending by I(Z ∧ X) then assignment.
    pub ledger: Vec<MapResult>,
    pub i_xy: f64,
    pub num_maps: u64,
    pub num_sufficient: u64,
    pub epsilon_requested: f64,
    /// best.i_zx minus the smallest sufficient I(Z ∧ X); zero by construction.
    pub epsilon_certified: f64,
}

#[derive(Debug, Clone)]
pub enum SearchOutcome {
    Found(Box<SearchCertificate>),
    /// No deterministic map with codomain k is sufficient.
    NoSufficientMap { i_xy: f64, num_maps: u64 },
}

/// Exhaustive epsilon-minimal sufficient search over deterministic maps.
pub fn search_min_sufficient(
    joint: &DiscreteJoint,
    x: &str,
    y: &str,
    k: usize,
    epsilon: f64,
) -> Result<SearchOutcome> {
    let nx = joint.size_of(x)?;
    let ny = joint.size_of(y)?;
    if nx > MAX_X {
        return Err(Error::AlphabetTooLarge {
            detail: format!("|X| = {nx} exceeds the exhaustive-search cap {MAX_X}"),
        });
    }
    if k == 0 || k > nx {
        return Err(Error::AlphabetTooLarge {
            detail: format!("codomain k = {k} must satisfy 1 <= k <= |X| = {nx}"),
        });
    }
    if epsilon < 0.0 {
        return Err(Error::InvalidParam(format!("epsilon {epsilon} < 0")));
    }

    // dense P(x, y) in x-major order
    let xy = joint.marginal(&[x, y])?;
    let mut p_xy = vec![0.0; nx * ny];
    for xi in 0..nx {
        for yi in 0..ny {
            p_xy[xi * ny + yi] = xy.prob(&[xi, yi])?;
        }
    }
    let p_x: Vec<f64> = (0..nx)
        .map(|xi| p_xy[xi * ny..(xi + 1) * ny].iter().sum())
        .collect();
    let p_y: Vec<f64> = (0..ny)
        .map(|yi| (0..nx).map(|xi| p_xy[xi * ny + yi]).sum())
        .collect();
    let h_y = entropy_of(&p_y);
    let i_xy = {
        let h_x = entropy_of(&p_x);
        let h_xy = entropy_of(&p_xy);
        (h_x + h_y - h_xy).max(0.0)
    };

    let num_maps = (k as u64).checked_pow(nx as u32).ok_or_else(|| Error::AlphabetTooLarge {
        detail: format!("k^|X| = {k}^{nx} overflows"),
    })?;

    struct ChunkOut {
        sufficient: Vec<(u64, MapResult)>,
    }

    let chunks = parallel::map_ranges(num_maps, ENUM_CHUNK, |range| {
        let mut sufficient = Vec::new();
        for code in range {
            let assignment = decode_map(code, nx, k);
            let (i_zy, i_zx) = map_information(&assignment, &p_xy, nx, ny, k, h_y);
            if (i_zy - i_xy).abs() <= SUFFICIENCY_TOL {
                sufficient.push((code, MapResult { assignment, i_zy, i_zx }));
            }
        }
        ChunkOut { sufficient }
    });

    let mut all: Vec<(u64, MapResult)> = Vec::new();
    for c in chunks {
        all.extend(c.sufficient);
    }
    let num_sufficient = all.len() as u64;
    if all.is_empty() {
        return Ok(SearchOutcome::NoSufficientMap { i_xy, num_maps });
    }

    let min_izx = all
        .iter()
        .map(|(_, r)| r.i_zx)
        .fold(f64::INFINITY, f64::min);
    // first map (enumeration order) within the tie tolerance of the minimum
    let best = all
        .iter()
        .find(|(_, r)| r.i_zx <= min_izx + TIE_TOL)
        .expect("non-empty sufficient set")
        .1
        .clone();

    let mut ledger: Vec<MapResult> = all.into_iter().map(|(_, r)| r).collect();
    ledger.sort_by(|a, b| {
        a.i_zx
            .partial_cmp(&b.i_zx)
            .unwrap()
            .then_with(|| a.assignment.cmp(&b.assignment))
    });

    let epsilon_certified = best.i_zx - min_izx;
    Ok(SearchOutcome::Found(Box::new(SearchCertificate {
        best,
        ledger,
        i_xy,
        num_maps,
        num_sufficient,
        epsilon_requested: epsilon,
        epsilon_certified,
    })))
}

/// Base-k decode of a map index; x = 0 is the lowest digit.
pub fn decode_map(code: u64, nx: usize, k: usize) -> Vec<usize> {
    let mut out = vec![0; nx];
    let mut c = code;
    for slot in out.iter_mut() {
        *slot = (c % k as u64) as usize;
        c /= k as u64;
    }
    out
}

/// I(Z ∧ Y) and I(Z ∧ X) for a deterministic z = f(x).
///
/// Z is a function of X, so I(Z ∧ X) = H(Z) exactly.
fn map_information(
    assignment: &[usize],
    p_xy: &[f64],
    nx: usize,
    ny: usize,
    k: usize,
    h_y: f64,
) -> (f64, f64) {
    let mut p_zy = vec![0.0; k * ny];
    for xi in 0..nx {
        let z = assignment[xi];
        for yi in 0..ny {
            p_zy[z * ny + yi] += p_xy[xi * ny + yi];
        }
    }
    let p_z: Vec<f64> = (0..k)
        .map(|z| p_zy[z * ny..(z + 1) * ny].iter().sum())
        .collect();
    let h_z = entropy_of(&p_z);
    let h_zy = entropy_of(&p_zy);
    let i_zy = (h_z + h_y - h_zy).max(0.0);
    (i_zy, h_z)
}
