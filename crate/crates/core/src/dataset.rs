//! Choice observations and datasets.
//!
//! An observation records that a consumer of some type was shown an assortment of
//! items and chose one of them. A dataset is an ordered sequence of observations
//! together with the catalog dimensions (m consumer types, n items).
//!
//! Text format (whitespace-separated, 0-based indices):
//! ```text
//! m n T
//! i j k j1 j2 ... jk
//! ```
//! one line per observation, where `i` is the type, `j` the chosen item, `k` the
//! assortment size, and `j1 < j2 < ... < jk` the assortment members (which include
//! `j`).

use crate::error::{invalid, parse_err, Result};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

/// One assortment-choice event: type `type_index` chose `chosen_item` out of
/// `assortment`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChoiceObservation {
    type_index: usize,
    chosen_item: usize,
    assortment: Vec<usize>,
}

impl ChoiceObservation {
    /// Builds an observation, sorting the assortment ascending. Fails if the
    /// assortment is empty, contains duplicates, or does not contain the chosen
    /// item.
    pub fn new(type_index: usize, chosen_item: usize, mut assortment: Vec<usize>) -> Result<Self> {
        if assortment.is_empty() {
            return Err(invalid("assortment must be nonempty"));
        }
        assortment.sort_unstable();
        if assortment.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("assortment contains duplicate items"));
        }
        if !assortment.contains(&chosen_item) {
            return Err(invalid(format!(
                "chosen item {chosen_item} is not in the assortment"
            )));
        }
        Ok(Self {
            type_index,
            chosen_item,
            assortment,
        })
    }

    pub fn type_index(&self) -> usize {
        self.type_index
    }

    pub fn chosen_item(&self) -> usize {
        self.chosen_item
    }

    /// Assortment members in ascending order.
    pub fn assortment(&self) -> &[usize] {
        &self.assortment
    }
}

/// An ordered collection of observations over an m-by-n catalog.
#[derive(Debug, Clone, PartialEq)]
pub struct ChoiceDataset {
    m: usize,
    n: usize,
    observations: Vec<ChoiceObservation>,
}

impl ChoiceDataset {
    /// Validates that every observation's indices respect the catalog dimensions.
    pub fn new(m: usize, n: usize, observations: Vec<ChoiceObservation>) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(invalid("catalog dimensions must be positive"));
        }
        for (t, obs) in observations.iter().enumerate() {
            if obs.type_index >= m {
                return Err(invalid(format!(
                    "observation {t}: type index {} out of range for m = {m}",
                    obs.type_index
                )));
            }
            if let Some(&item) = obs.assortment.iter().find(|&&j| j >= n) {
                return Err(invalid(format!(
                    "observation {t}: item index {item} out of range for n = {n}"
                )));
            }
        }
        Ok(Self { m, n, observations })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of observations T.
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn observations(&self) -> &[ChoiceObservation] {
        &self.observations
    }

    /// Largest assortment size present, or 0 for an empty dataset.
    pub fn max_assortment_size(&self) -> usize {
        self.observations
            .iter()
            .map(|o| o.assortment.len())
            .max()
            .unwrap_or(0)
    }

    /// Serializes to the dataset text format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} {} {}", self.m, self.n, self.observations.len());
        for obs in &self.observations {
            let _ = write!(
                out,
                "{} {} {}",
                obs.type_index,
                obs.chosen_item,
                obs.assortment.len()
            );
            for &j in &obs.assortment {
                let _ = write!(out, " {j}");
            }
            out.push('\n');
        }
        out
    }

    /// Parses the dataset text format, reporting 1-based line numbers on failure.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| parse_err(1, "missing header line"))?;
        let header_fields = parse_fields::<usize>(header, 1)?;
        let [m, n, t] = header_fields[..] else {
            return Err(parse_err(1, format!(
                "expected 3 header fields `m n T`, found {}",
                header_fields.len()
            )));
        };
        let mut observations = Vec::with_capacity(t);
        for _ in 0..t {
            let (idx, line) = lines
                .next()
                .ok_or_else(|| parse_err(t + 1, format!("expected {t} observation lines")))?;
            let lineno = idx + 1;
            let fields = parse_fields::<usize>(line, lineno)?;
            if fields.len() < 3 {
                return Err(parse_err(lineno, "expected `i j k j1 ... jk`"));
            }
            let (i, j, k) = (fields[0], fields[1], fields[2]);
            if fields.len() != 3 + k {
                return Err(parse_err(
                    lineno,
                    format!("assortment size {k} but {} members listed", fields.len() - 3),
                ));
            }
            let assortment = fields[3..].to_vec();
            if !assortment.windows(2).all(|w| w[0] < w[1]) {
                return Err(parse_err(lineno, "assortment members must be strictly ascending"));
            }
            let obs = ChoiceObservation::new(i, j, assortment)
                .map_err(|e| parse_err(lineno, e.to_string()))?;
            observations.push(obs);
        }
        if let Some((idx, line)) = lines.next() {
            if !line.trim().is_empty() {
                return Err(parse_err(idx + 1, "trailing content after last observation"));
            }
        }
        Self::new(m, n, observations).map_err(|e| parse_err(1, e.to_string()))
    }

    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_text(&text)
    }
}

fn parse_fields<T: std::str::FromStr>(line: &str, lineno: usize) -> Result<Vec<T>> {
    line.split_whitespace()
        .map(|tok| {
            tok.parse::<T>()
                .map_err(|_| parse_err(lineno, format!("invalid value `{tok}`")))
        })
        .collect()
}
