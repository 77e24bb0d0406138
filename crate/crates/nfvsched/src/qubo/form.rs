//! The bare quadratic form: an upper-triangular sparse matrix plus a
//! constant offset, with energy evaluation and a line-based text format for
//! exchanging problems and results with external samplers.

use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum QuboError {
    #[error("grid must have at least one slot")]
    BadHorizon,
    #[error(transparent)]
    Penalty(#[from] crate::qubo::penalty::PenaltyError),
    #[error("expected {want} bits, got {got}")]
    WrongBitCount { got: usize, want: usize },
    #[error("bit {index} is {value}, expected 0 or 1")]
    NonBinaryBit { index: usize, value: u8 },
    #[error("problem text line {line}: {detail}")]
    BadProblemLine { line: usize, detail: String },
    #[error("result line: {0}")]
    BadResultLine(String),
    #[error("coefficient for ({i}, {j}) must be finite")]
    NonFiniteCoefficient { i: u32, j: u32 },
    #[error("variable index {idx} out of range for {n} variables")]
    IndexOutOfRange { idx: u32, n: usize },
    #[error("model and schedule shapes disagree: {0}")]
    ShapeMismatch(String),
    #[error("too many variables for the sparse index type: {0}")]
    TooManyVariables(usize),
}

/// Linear terms and symmetric neighbor lists, the shape the samplers want
/// for incremental energy updates.
pub struct Adjacency {
    pub diag: Vec<f64>,
    pub neighbors: Vec<Vec<(u32, f64)>>,
}

/// `energy(b) = offset + sum over entries (i, j, c) of c * b[i] * b[j]`,
/// with `i <= j` and diagonal entries acting as linear terms.
#[derive(Debug, Clone, PartialEq)]
pub struct Qubo {
    n: usize,
    entries: Vec<(u32, u32, f64)>,
    offset: f64,
}

impl Qubo {
    /// Builds a form from arbitrary coefficient terms. Mirrored index pairs
    /// are folded into the upper triangle and accumulated; exact zeros are
    /// dropped.
    pub fn new(
        n: usize,
        terms: impl IntoIterator<Item = (u32, u32, f64)>,
        offset: f64,
    ) -> Result<Qubo, QuboError> {
        if n > u32::MAX as usize {
            return Err(QuboError::TooManyVariables(n));
        }
        let mut map: HashMap<(u32, u32), f64> = HashMap::new();
        for (i, j, c) in terms {
            if !c.is_finite() {
                return Err(QuboError::NonFiniteCoefficient { i, j });
            }
            let key = if i <= j { (i, j) } else { (j, i) };
            if key.1 as usize >= n {
                return Err(QuboError::IndexOutOfRange { idx: key.1, n });
            }
            *map.entry(key).or_insert(0.0) += c;
        }
        let mut entries: Vec<(u32, u32, f64)> = map
            .into_iter()
            .filter(|&(_, c)| c != 0.0)
            .map(|((i, j), c)| (i, j, c))
            .collect();
        entries.sort_unstable_by_key(|&(i, j, _)| (i, j));
        Ok(Qubo { n, entries, offset })
    }

    pub fn n_vars(&self) -> usize {
        self.n
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// Nonzero coefficients, upper triangular, sorted by `(i, j)`.
    pub fn entries(&self) -> &[(u32, u32, f64)] {
        &self.entries
    }

    pub fn num_diagonal(&self) -> usize {
        self.entries.iter().filter(|&&(i, j, _)| i == j).count()
    }

    pub fn num_off_diagonal(&self) -> usize {
        self.entries.len() - self.num_diagonal()
    }

    pub fn coefficient(&self, i: u32, j: u32) -> f64 {
        let key = if i <= j { (i, j) } else { (j, i) };
        self.entries
            .binary_search_by_key(&key, |&(a, b, _)| (a, b))
            .map(|k| self.entries[k].2)
            .unwrap_or(0.0)
    }

    fn check_bits(&self, bits: &[u8]) -> Result<(), QuboError> {
        if bits.len() != self.n {
            return Err(QuboError::WrongBitCount {
                got: bits.len(),
                want: self.n,
            });
        }
        if let Some(index) = bits.iter().position(|&b| b > 1) {
            return Err(QuboError::NonBinaryBit {
                index,
                value: bits[index],
            });
        }
        Ok(())
    }

    pub fn energy(&self, bits: &[u8]) -> Result<f64, QuboError> {
        self.check_bits(bits)?;
        let mut e = self.offset;
        for &(i, j, c) in &self.entries {
            if bits[i as usize] == 1 && bits[j as usize] == 1 {
                e += c;
            }
        }
        Ok(e)
    }

    pub fn adjacency(&self) -> Adjacency {
        let mut diag = vec![0.0; self.n];
        let mut neighbors = vec![Vec::new(); self.n];
        for &(i, j, c) in &self.entries {
            if i == j {
                diag[i as usize] = c;
            } else {
                neighbors[i as usize].push((j, c));
                neighbors[j as usize].push((i, c));
            }
        }
        Adjacency { diag, neighbors }
    }

    /// Renders the problem in the line format external samplers consume:
    ///
    /// ```text
    /// p qubo 0 <vars> <diagonal entries> <off-diagonal entries>
    /// c offset <constant>
    /// <i> <i> <coefficient>   (diagonal lines first)
    /// <i> <j> <coefficient>
    /// ```
    ///
    /// Indices are zero based and coefficients round-trip through `f64`
    /// parsing unchanged.
    pub fn to_problem_text(&self) -> String {
        let ndiag = self.num_diagonal();
        let mut out = String::new();
        writeln!(
            out,
            "p qubo 0 {} {} {}",
            self.n,
            ndiag,
            self.entries.len() - ndiag
        )
        .unwrap();
        writeln!(out, "c offset {}", self.offset).unwrap();
        for &(i, j, c) in self.entries.iter().filter(|&&(i, j, _)| i == j) {
            writeln!(out, "{i} {j} {c}").unwrap();
        }
        for &(i, j, c) in self.entries.iter().filter(|&&(i, j, _)| i != j) {
            writeln!(out, "{i} {j} {c}").unwrap();
        }
        out
    }

    /// Parses the format `to_problem_text` writes.
    pub fn from_problem_text(text: &str) -> Result<Qubo, QuboError> {
        let bad = |line: usize, detail: &str| QuboError::BadProblemLine {
            line,
            detail: detail.to_string(),
        };
        let mut n = None;
        let mut offset = 0.0;
        let mut terms = Vec::new();
        for (lz, raw) in text.lines().enumerate() {
            let line = lz + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() {
                continue;
            }
            let fields: Vec<&str> = trimmed.split_whitespace().collect();
            match fields[0] {
                "p" => {
                    if fields.len() != 6 || fields[1] != "qubo" || fields[2] != "0" {
                        return Err(bad(line, "malformed problem header"));
                    }
                    n = Some(
                        fields[3]
                            .parse::<usize>()
                            .map_err(|_| bad(line, "bad variable count"))?,
                    );
                }
                "c" => {
                    if fields.len() == 3 && fields[1] == "offset" {
                        offset = fields[2]
                            .parse::<f64>()
                            .map_err(|_| bad(line, "bad offset value"))?;
                    }
                }
                _ => {
                    if fields.len() != 3 {
                        return Err(bad(line, "expected `i j coefficient`"));
                    }
                    let i = fields[0]
                        .parse::<u32>()
                        .map_err(|_| bad(line, "bad row index"))?;
                    let j = fields[1]
                        .parse::<u32>()
                        .map_err(|_| bad(line, "bad column index"))?;
                    let c = fields[2]
                        .parse::<f64>()
                        .map_err(|_| bad(line, "bad coefficient"))?;
                    terms.push((i, j, c));
                }
            }
        }
        let n = n.ok_or_else(|| bad(0, "missing problem header"))?;
        Qubo::new(n, terms, offset)
    }

    /// Parses a sampler result: one line of `n_vars` space-separated 0/1
    /// values. Blank lines are ignored.
    pub fn parse_result_text(&self, text: &str) -> Result<Vec<u8>, QuboError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let line = lines
            .next()
            .ok_or_else(|| QuboError::BadResultLine("empty result".into()))?;
        if lines.next().is_some() {
            return Err(QuboError::BadResultLine(
                "expected exactly one line of bits".into(),
            ));
        }
        let bits: Vec<u8> = line
            .split_whitespace()
            .map(|tok| match tok {
                "0" => Ok(0),
                "1" => Ok(1),
                other => Err(QuboError::BadResultLine(format!(
                    "token {other:?} is not 0 or 1"
                ))),
            })
            .collect::<Result<_, _>>()?;
        if bits.len() != self.n {
            return Err(QuboError::WrongBitCount {
                got: bits.len(),
                want: self.n,
            });
        }
        Ok(bits)
    }

    /// Renders bits in the format `parse_result_text` reads.
    pub fn format_result_text(bits: &[u8]) -> String {
        let mut out = bits
            .iter()
            .map(|b| b.to_string())
            .collect::<Vec<_>>()
            .join(" ");
        out.push('\n');
        out
    }
}
