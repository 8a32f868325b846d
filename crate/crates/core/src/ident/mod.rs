//! The hybrid restriction scheme on contemporaneous loadings: instrument
//! rows carry the positive-diagonal convention, selected macro rows carry
//! sign and zero restrictions, and unrestricted rows may load freely with
//! optionally time-varying coefficients.
//!
//! Two places where the published grid and the surrounding prose disagree
//! are resolved in favor of the grid: the 10-year yield is ZERO under the
//! first identified shock (the prose leaves it unrestricted) and output is
//! FREE under the second (the prose pins it to zero). Override files exist
//! precisely so either variant can be run.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Constraint on one loading entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Restriction {
    /// Entry strictly positive.
    Pos,
    /// Entry strictly negative.
    Neg,
    /// Entry pinned to exactly 0.0 (never sampled).
    Zero,
    /// Entry unrestricted.
    Free,
}

impl Restriction {
    pub fn symbol(&self) -> char {
        match self {
            Restriction::Pos => '+',
            Restriction::Neg => '-',
            Restriction::Zero => '0',
            Restriction::Free => '.',
        }
    }

    pub fn from_symbol(c: char) -> Option<Restriction> {
        match c {
            '+' => Some(Restriction::Pos),
            '-' => Some(Restriction::Neg),
            '0' => Some(Restriction::Zero),
            '.' => Some(Restriction::Free),
            _ => None,
        }
    }

    pub fn is_restricted(&self) -> bool {
        !matches!(self, Restriction::Free)
    }
}

/// An (m+n) x r grid of restrictions with shock labels and a per-row
/// time-variation mask. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct RestrictionScheme {
    grid: Vec<Restriction>, // row-major
    pub row_labels: Vec<String>,
    pub shock_labels: Vec<String>,
    pub tv_mask: Vec<bool>,
}

impl RestrictionScheme {
    pub fn new(
        grid: Vec<Vec<Restriction>>,
        row_labels: Vec<String>,
        shock_labels: Vec<String>,
        tv_mask: Vec<bool>,
    ) -> Result<RestrictionScheme> {
        let rows = grid.len();
        let r = shock_labels.len();
        if row_labels.len() != rows || tv_mask.len() != rows {
            return Err(Error::argument(format!(
                "scheme has {rows} grid rows but {} labels and {} tv flags",
                row_labels.len(),
                tv_mask.len()
            )));
        }
        let mut flat = Vec::with_capacity(rows * r);
        for (i, row) in grid.iter().enumerate() {
            if row.len() != r {
                return Err(Error::argument(format!(
                    "scheme row {:?} has {} entries, expected {r}",
                    row_labels[i],
                    row.len()
                )));
            }
            flat.extend_from_slice(row);
        }
        Ok(RestrictionScheme {
            grid: flat,
            row_labels,
            shock_labels,
            tv_mask,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.row_labels.len()
    }

    pub fn n_shocks(&self) -> usize {
        self.shock_labels.len()
    }

    pub fn entry(&self, row: usize, shock: usize) -> Restriction {
        self.grid[row * self.n_shocks() + shock]
    }

    pub fn row(&self, row: usize) -> &[Restriction] {
        let r = self.n_shocks();
        &self.grid[row * r..(row + 1) * r]
    }

    /// Indices of rows flagged time-varying.
    pub fn tv_rows(&self) -> Vec<usize> {
        self.tv_mask
            .iter()
            .enumerate()
            .filter_map(|(i, tv)| tv.then_some(i))
            .collect()
    }

    /// Check both structural invariants given the instrument count `m`,
    /// macro count `n`, and factor count `r`. Returns every violation.
    pub fn validate(&self, m: usize, n: usize, r: usize) -> Vec<String> {
        let mut violations = Vec::new();
        if self.n_rows() != m + n {
            violations.push(format!(
                "scheme has {} rows but data has {} (m={m} instruments + n={n} macro)",
                self.n_rows(),
                m + n
            ));
            return violations;
        }
        if self.n_shocks() != r {
            violations.push(format!(
                "scheme has {} shock columns but r={r} factors requested",
                self.n_shocks()
            ));
            return violations;
        }
        if r < m {
            violations.push(format!(
                "r={r} factors cannot cover m={m} instruments (need r >= m)"
            ));
        }
        for i in 0..m.min(self.n_rows()) {
            for j in 0..self.n_shocks() {
                let e = self.entry(i, j);
                if j == i && e != Restriction::Pos {
                    violations.push(format!(
                        "instrument row {:?} must be POS on its own shock column {j}, found {:?}",
                        self.row_labels[i], e
                    ));
                }
                if j != i && e != Restriction::Zero {
                    violations.push(format!(
                        "instrument row {:?}, shock {j}: instrument off-diagonal must be ZERO, found {:?}",
                        self.row_labels[i], e
                    ));
                }
            }
        }
        for i in 0..self.n_rows() {
            if self.tv_mask[i] {
                if i < m {
                    violations.push(format!(
                        "instrument row {:?} cannot be time-varying",
                        self.row_labels[i]
                    ));
                } else if self.row(i).iter().any(Restriction::is_restricted) {
                    violations.push(format!(
                        "row {:?} is time-varying but carries sign/zero restrictions",
                        self.row_labels[i]
                    ));
                }
            }
        }
        violations
    }
}

/// The default grid: two instruments with the positive-diagonal convention,
/// seven sign-restricted core rows, residual shocks free on macro rows, and
/// all OTHER rows free with time-varying loadings.
///
/// Core rows are labeled Target/Path shock first; extra shocks beyond the
/// two identified columns are residual columns.
pub fn default_scheme(m: usize, n_core: usize, n_other: usize, r: usize) -> Result<RestrictionScheme> {
    if m != 2 || n_core != 7 {
        return Err(Error::argument(format!(
            "default scheme is defined for 2 instruments and 7 core rows, got m={m}, n_core={n_core}"
        )));
    }
    if r < m {
        return Err(Error::argument(format!("need r >= {m}, got {r}")));
    }
    use Restriction::{Free, Neg, Pos, Zero};
    let core_names = ["RGDP", "PCE", "FFR", "GS1", "GS10", "M2REAL", "SP500"];
    // (Target column, Path column) for each core row.
    let core_identified: [(Restriction, Restriction); 7] = [
        (Neg, Free),  // RGDP
        (Neg, Zero),  // PCE
        (Pos, Zero),  // FFR
        (Pos, Free),  // GS1
        (Zero, Pos),  // GS10
        (Neg, Free),  // M2REAL
        (Neg, Free),  // SP500
    ];

    let mut grid = Vec::new();
    let mut labels = Vec::new();
    let mut tv = Vec::new();

    for (i, name) in ["Target", "Path"].iter().enumerate() {
        let mut row = vec![Zero; r];
        row[i] = Pos;
        grid.push(row);
        labels.push(name.to_string());
        tv.push(false);
    }
    for (name, (target, path)) in core_names.iter().zip(core_identified.iter()) {
        let mut row = vec![Free; r];
        row[0] = *target;
        row[1] = *path;
        grid.push(row);
        labels.push(name.to_string());
        tv.push(false);
    }
    for idx in 0..n_other {
        grid.push(vec![Free; r]);
        labels.push(format!("OTHER{}", idx + 1));
        tv.push(true);
    }

    let mut shocks = vec!["Target shock".to_string(), "Path shock".to_string()];
    for k in 0..r - 2 {
        shocks.push(format!("Residual shock {}", k + 1));
    }
    RestrictionScheme::new(grid, labels, shocks, tv)
}

#[derive(Debug, Serialize, Deserialize)]
struct SchemeRowConfig {
    name: String,
    pattern: String,
    #[serde(default)]
    tv: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct SchemeConfig {
    shocks: Vec<String>,
    rows: Vec<SchemeRowConfig>,
}

/// Parse a scheme from its JSON config form:
/// `{"shocks": [..], "rows": [{"name", "pattern", "tv"}, ..]}` where pattern
/// is whitespace-separated symbols from `+ - 0 .`.
pub fn parse_scheme(text: &str) -> Result<RestrictionScheme> {
    let config: SchemeConfig = serde_json::from_str(text).map_err(|e| Error::Json {
        path: "<scheme>".to_string(),
        source: e,
    })?;
    let r = config.shocks.len();
    if r == 0 {
        return Err(Error::schema("scheme declares no shocks".to_string()));
    }
    let mut grid = Vec::new();
    let mut labels = Vec::new();
    let mut tv = Vec::new();
    for row in &config.rows {
        let mut entries = Vec::with_capacity(r);
        for (pos, token) in row.pattern.split_whitespace().enumerate() {
            let mut chars = token.chars();
            let (c, rest) = (chars.next().unwrap(), chars.next());
            if rest.is_some() {
                return Err(Error::schema(format!(
                    "row {:?}: symbol {token:?} at position {pos} is not one of + - 0 .",
                    row.name
                )));
            }
            let restriction = Restriction::from_symbol(c).ok_or_else(|| {
                Error::schema(format!(
                    "row {:?}: unknown symbol {c:?} at position {pos} (allowed: + - 0 .)",
                    row.name
                ))
            })?;
            entries.push(restriction);
        }
        if entries.len() != r {
            return Err(Error::schema(format!(
                "row {:?} has {} symbols but scheme declares {r} shocks",
                row.name,
                entries.len()
            )));
        }
        grid.push(entries);
        labels.push(row.name.clone());
        tv.push(row.tv);
    }
    RestrictionScheme::new(grid, labels, config.shocks, tv)
}

/// Serialize a scheme back to its JSON config form.
pub fn scheme_to_json(scheme: &RestrictionScheme) -> String {
    let config = SchemeConfig {
        shocks: scheme.shock_labels.clone(),
        rows: (0..scheme.n_rows())
            .map(|i| SchemeRowConfig {
                name: scheme.row_labels[i].clone(),
                pattern: scheme
                    .row(i)
                    .iter()
                    .map(|e| e.symbol().to_string())
                    .collect::<Vec<_>>()
                    .join(" "),
                tv: scheme.tv_mask[i],
            })
            .collect(),
    };
    serde_json::to_string_pretty(&config).expect("scheme serialization")
}
