//! Exact probability tables over named finite variables.
//!
//! Everything is dense f64 summation in nats; 0 * log 0 := 0 throughout.

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::SeedStream;

/// Table-sum tolerance.
pub const TABLE_TOL: f64 = 1e-12;
/// Mutual information values above this negative slack clamp to zero.
pub const MI_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub size: usize,
}

/// Dense joint distribution over finite variables, row-major with the last
/// variable fastest.
#[derive(Debug, Clone)]
pub struct DiscreteJoint {
    vars: Vec<Variable>,
    table: Vec<f64>,
}

impl DiscreteJoint {
    pub fn new(vars: Vec<(impl Into<String>, usize)>, table: Vec<f64>) -> Result<Self> {
        let vars: Vec<Variable> = vars
            .into_iter()
            .map(|(name, size)| Variable { name: name.into(), size })
            .collect();
        if vars.is_empty() {
            return Err(Error::BadTable("no variables".into()));
        }
        for v in &vars {
            if v.size == 0 {
                return Err(Error::BadTable(format!("variable {} has empty alphabet", v.name)));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for v in &vars {
            if !seen.insert(v.name.clone()) {
                return Err(Error::BadTable(format!("duplicate variable {}", v.name)));
            }
        }
        let numel: usize = vars.iter().map(|v| v.size).product();
        if table.len() != numel {
            return Err(Error::BadTable(format!(
                "table has {} entries, variables want {numel}",
                table.len()
            )));
        }
        if table.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::BadTable("negative or non-finite probability".into()));
        }
        let sum: f64 = table.iter().sum();
        if (sum - 1.0).abs() > TABLE_TOL {
            return Err(Error::BadTable(format!("table sums to {sum}, expected 1")));
        }
        Ok(DiscreteJoint { vars, table })
    }

    /// Random strictly-positive joint, deterministic under seed.
    pub fn random(vars: Vec<(impl Into<String>, usize)>, seed: u64) -> Result<Self> {
        let vars: Vec<(String, usize)> = vars.into_iter().map(|(n, s)| (n.into(), s)).collect();
        let numel: usize = vars.iter().map(|(_, s)| s).product();
        let mut rng = SeedStream::new(seed).stream("joint", 0);
        let mut raw: Vec<f64> = (0..numel).map(|_| rng.random_range(0.01..1.0)).collect();
        let sum: f64 = raw.iter().sum();
        for v in &mut raw {
            *v /= sum;
        }
        DiscreteJoint::new(vars, raw)
    }

    pub fn variables(&self) -> &[Variable] {
        &self.vars
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn var_index(&self, name: &str) -> Result<usize> {
        self.vars
            .iter()
            .position(|v| v.name == name)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    pub fn size_of(&self, name: &str) -> Result<usize> {
        Ok(self.vars[self.var_index(name)?].size)
    }

    fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.vars.len()];
        for i in (0..self.vars.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * self.vars[i + 1].size;
        }
        strides
    }

    /// Probability of a full assignment (indices in variable order).
    pub fn prob(&self, assignment: &[usize]) -> Result<f64> {
        if assignment.len() != self.vars.len() {
            return Err(Error::BadTable(format!(
                "assignment has {} indices, want {}",
                assignment.len(),
                self.vars.len()
            )));
        }
        let strides = self.strides();
        let mut idx = 0;
        for ((&a, v), &s) in assignment.iter().zip(&self.vars).zip(&strides) {
            if a >= v.size {
                return Err(Error::BadTable(format!("index {a} out of range for {}", v.name)));
            }
            idx += a * s;
        }
        Ok(self.table[idx])
    }

    /// Marginal over the named variables, in the order given.
    pub fn marginal(&self, names: &[&str]) -> Result<DiscreteJoint> {
        if names.is_empty() {
            return Err(Error::EmptyInput("marginal"));
        }
        let keep: Vec<usize> = names
            .iter()
            .map(|n| self.var_index(n))
            .collect::<Result<_>>()?;
        let kept_vars: Vec<Variable> = keep.iter().map(|&i| self.vars[i].clone()).collect();
        let out_numel: usize = kept_vars.iter().map(|v| v.size).product();
        let mut out = vec![0.0; out_numel];
        let strides = self.strides();
        let mut out_strides = vec![1; keep.len()];
        for i in (0..keep.len().saturating_sub(1)).rev() {
            out_strides[i] = out_strides[i + 1] * kept_vars[i + 1].size;
        }
        for (flat, &p) in self.table.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let mut out_idx = 0;
            for (pos, &vi) in keep.iter().enumerate() {
                let coord = (flat / strides[vi]) % self.vars[vi].size;
                out_idx += coord * out_strides[pos];
            }
            out[out_idx] += p;
        }
        Ok(DiscreteJoint { vars: kept_vars, table: out })
    }

    /// Entropy (nats) of the marginal over `names`.
    pub fn entropy(&self, names: &[&str]) -> Result<f64> {
        let m = self.marginal(names)?;
        Ok(entropy_of(&m.table))
    }

    /// H(target | given).
    pub fn conditional_entropy(&self, target: &[&str], given: &[&str]) -> Result<f64> {
        let both = union(target, given);
        Ok(self.entropy(&both)? - self.entropy(given)?)
    }

    /// I(a ∧ b) = H(a) + H(b) - H(a, b), clamped at zero within tolerance.
    pub fn mutual_information(&self, a: &[&str], b: &[&str]) -> Result<f64> {
        let both = union(a, b);
        let mi = self.entropy(a)? + self.entropy(b)? - self.entropy(&both)?;
        Ok(clamp_mi(mi))
    }

    /// I(a ∧ b | given).
    pub fn conditional_mi(&self, a: &[&str], b: &[&str], given: &[&str]) -> Result<f64> {
        let ag = union(a, given);
        let bg = union(b, given);
        let abg = union(&ag, b);
        let mi = self.entropy(&ag)? + self.entropy(&bg)? - self.entropy(&abg)?
            - self.entropy(given)?;
        Ok(clamp_mi(mi))
    }

    /// Appends a new variable drawn from `channel` applied to `input`.
    pub fn extend_with_channel(
        &self,
        input: &str,
        channel: &Channel,
        new_name: &str,
    ) -> Result<DiscreteJoint> {
        let vi = self.var_index(input)?;
        if self.vars[vi].size != channel.input_size {
            return Err(Error::BadTable(format!(
                "channel input {} does not match variable {input} of size {}",
                channel.input_size, self.vars[vi].size
            )));
        }
        if self.vars.iter().any(|v| v.name == new_name) {
            return Err(Error::BadTable(format!("variable {new_name} already exists")));
        }
        let strides = self.strides();
        let mut vars = self.vars.clone();
        vars.push(Variable { name: new_name.to_string(), size: channel.output_size });
        let mut table = vec![0.0; self.table.len() * channel.output_size];
        for (flat, &p) in self.table.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let x = (flat / strides[vi]) % self.vars[vi].size;
            for z in 0..channel.output_size {
                let w = channel.prob(x, z);
                if w > 0.0 {
                    table[flat * channel.output_size + z] += p * w;
                }
            }
        }
        Ok(DiscreteJoint { vars, table })
    }

    /// Plain-text serialization: header of `name size` pairs, then one
    /// probability per line in row-major order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, v) in self.vars.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            out.push_str(&format!("{} {}", v.name, v.size));
        }
        out.push('\n');
        for p in &self.table {
            out.push_str(&format!("{p:.17e}\n"));
        }
        out
    }

    /// Parses the plain-text table format; `#` lines and blanks are skipped.
    pub fn parse_text(text: &str) -> Result<DiscreteJoint> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines.next().ok_or_else(|| Error::BadTable("empty table file".into()))?;
        let tokens: Vec<&str> = header.split_whitespace().collect();
        if tokens.is_empty() || tokens.len() % 2 != 0 {
            return Err(Error::BadTable(format!(
                "header must be `name size` pairs, got `{header}`"
            )));
        }
        let mut vars = Vec::new();
        for pair in tokens.chunks(2) {
            let size: usize = pair[1]
                .parse()
                .map_err(|_| Error::BadTable(format!("bad alphabet size `{}`", pair[1])))?;
            vars.push((pair[0].to_string(), size));
        }
        let mut table = Vec::new();
        for line in lines {
            let p: f64 = line
                .parse()
                .map_err(|_| Error::BadTable(format!("bad probability `{line}`")))?;
            table.push(p);
        }
        DiscreteJoint::new(vars, table)
    }
}

fn union<'a>(a: &[&'a str], b: &[&'a str]) -> Vec<&'a str> {
    let mut out: Vec<&str> = a.to_vec();
    for n in b {
        if !out.contains(n) {
            out.push(n);
        }
    }
    out
}

pub(crate) fn entropy_of(table: &[f64]) -> f64 {
    let mut h = 0.0;
    for &p in table {
        if p > 0.0 {
            h -= p * p.ln();
        }
    }
    h
}

fn clamp_mi(mi: f64) -> f64 {
    if mi < 0.0 && mi > -MI_CLAMP {
        0.0
    } else {
        mi
    }
}

/// Row-stochastic conditional table; deterministic maps are 0/1 rows.
#[derive(Debug, Clone)]
pub struct Channel {
    pub input_size: usize,
    pub output_size: usize,
    rows: Vec<f64>,
}

impl Channel {
    pub fn new(input_size: usize, output_size: usize, rows: Vec<f64>) -> Result<Self> {
        if rows.len() != input_size * output_size {
            return Err(Error::BadTable(format!(
                "channel table has {} entries, want {}",
                rows.len(),
                input_size * output_size
            )));
        }
        if rows.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::BadTable("negative or non-finite channel entry".into()));
        }
        for r in 0..input_size {
            let sum: f64 = rows[r * output_size..(r + 1) * output_size].iter().sum();
            if (sum - 1.0).abs() > TABLE_TOL {
                return Err(Error::BadTable(format!("channel row {r} sums to {sum}")));
            }
        }
        Ok(Channel { input_size, output_size, rows })
    }

    pub fn deterministic(map: &[usize], output_size: usize) -> Result<Self> {
        let mut rows = vec![0.0; map.len() * output_size];
        for (x, &z) in map.iter().enumerate() {
            if z >= output_size {
                return Err(Error::BadTable(format!("map value {z} >= {output_size}")));
            }
            rows[x * output_size + z] = 1.0;
        }
        Channel::new(map.len(), output_size, rows)
    }

    pub fn prob(&self, x: usize, z: usize) -> f64 {
        self.rows[x * self.output_size + z]
    }
}
