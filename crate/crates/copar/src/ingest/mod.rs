//! Long-format dataset loading.
//!
//! Input rows are `year,series,count` where `series` is a group label or the
//! reserved label `AUX` for the auxiliary population. Years are assembled
//! into a contiguous range; cells a group never reported are structural
//! zeros, so a group absent before its first positive year counts as not yet
//! formed.

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

use crate::model::{formation_indicators, InitConvention, ModelError, Panel};

/// Reserved series label for the auxiliary population.
pub const AUX_LABEL: &str = "AUX";

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: {message}")]
    Row { line: usize, message: String },
    #[error("line {line}: duplicate entry for series {series:?}, year {year}")]
    Duplicate {
        line: usize,
        series: String,
        year: i64,
    },
    #[error("no auxiliary series rows (reserved label {AUX_LABEL:?})")]
    MissingAux,
    #[error("need at least 2 groups, got {0}")]
    TooFewGroups(usize),
    #[error("need at least 2 distinct years, got {0}")]
    TooFewYears(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("reading file: {0}")]
    Io(#[from] std::io::Error),
}

/// Per-group, per-step formation (`B`), persistence (`A`), and combined (`C`)
/// indicator values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndicatorTrack {
    pub a: Vec<Vec<u8>>,
    pub b: Vec<Vec<u8>>,
    pub c: Vec<Vec<u8>>,
}

impl IndicatorTrack {
    pub fn from_panel(panel: &Panel, convention: InitConvention) -> Self {
        let g = panel.n_groups();
        let steps = panel.n_steps();
        let mut a = vec![Vec::with_capacity(steps); g];
        let mut b = vec![Vec::with_capacity(steps); g];
        let mut c = vec![Vec::with_capacity(steps); g];
        for i in 0..g {
            let row = panel.x_row(i);
            for t in 0..steps {
                let (ai, bi) = formation_indicators(&row[..t], convention);
                a[i].push(ai);
                b[i].push(bi);
                c[i].push(ai + bi);
            }
        }
        Self { a, b, c }
    }
}

/// A loaded panel with its indicator track and assembly metadata.
#[derive(Debug, Clone)]
pub struct LoadedPanel {
    pub panel: Panel,
    pub track: IndicatorTrack,
    pub first_year: i64,
    pub last_year: i64,
    /// Missing `(group, year)` cells filled as structural zeros.
    pub structural_zeros: usize,
    pub warnings: Vec<String>,
}

pub fn load_long_csv_path(path: &Path) -> Result<LoadedPanel, IngestError> {
    let text = std::fs::read_to_string(path)?;
    load_long_csv(&text)
}

/// Parse and assemble a long-format dataset. Interval violations (a group
/// positive again after splitting) are reported as warnings, not errors.
pub fn load_long_csv(text: &str) -> Result<LoadedPanel, IngestError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(IngestError::Row {
        line: 1,
        message: "empty file".into(),
    })?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols != ["year", "series", "count"] {
        return Err(IngestError::Row {
            line: 1,
            message: format!("expected header year,series,count, got {header:?}"),
        });
    }

    // (series, year) -> count, with group order preserved by first appearance.
    let mut cells: BTreeMap<(String, i64), u64> = BTreeMap::new();
    let mut group_order: Vec<String> = Vec::new();
    let mut years: Vec<i64> = Vec::new();
    let mut saw_aux = false;
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = idx + 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(IngestError::Row {
                line: line_no,
                message: format!("expected 3 fields, got {}", fields.len()),
            });
        }
        let year: i64 = fields[0].parse().map_err(|_| IngestError::Row {
            line: line_no,
            message: format!("year must be an integer, got {:?}", fields[0]),
        })?;
        let series = fields[1].to_string();
        if series.is_empty() {
            return Err(IngestError::Row {
                line: line_no,
                message: "empty series label".into(),
            });
        }
        let raw_count: i64 = fields[2].parse().map_err(|_| IngestError::Row {
            line: line_no,
            message: format!("count must be an integer, got {:?}", fields[2]),
        })?;
        if raw_count < 0 {
            return Err(IngestError::Row {
                line: line_no,
                message: format!("negative count {raw_count}"),
            });
        }
        if series == AUX_LABEL {
            saw_aux = true;
        } else if !group_order.iter().any(|g| g == &series) {
            group_order.push(series.clone());
        }
        if cells
            .insert((series.clone(), year), raw_count as u64)
            .is_some()
        {
            return Err(IngestError::Duplicate {
                line: line_no,
                series,
                year,
            });
        }
        years.push(year);
    }
    if !saw_aux {
        return Err(IngestError::MissingAux);
    }
    if group_order.len() < 2 {
        return Err(IngestError::TooFewGroups(group_order.len()));
    }
    let first_year = *years.iter().min().expect("nonempty");
    let last_year = *years.iter().max().expect("nonempty");
    let n_steps = (last_year - first_year + 1) as usize;
    if n_steps < 2 {
        return Err(IngestError::TooFewYears(n_steps));
    }

    let mut structural_zeros = 0usize;
    let mut warnings = Vec::new();
    let mut x: Vec<Vec<u64>> = Vec::with_capacity(group_order.len());
    for label in &group_order {
        let mut row = Vec::with_capacity(n_steps);
        for year in first_year..=last_year {
            match cells.get(&(label.clone(), year)) {
                Some(&count) => row.push(count),
                None => {
                    structural_zeros += 1;
                    row.push(0);
                }
            }
        }
        x.push(row);
    }
    let mut y = Vec::with_capacity(n_steps);
    let mut aux_gaps = 0usize;
    for year in first_year..=last_year {
        match cells.get(&(AUX_LABEL.to_string(), year)) {
            Some(&count) => y.push(count),
            None => {
                aux_gaps += 1;
                y.push(0);
            }
        }
    }
    if aux_gaps > 0 {
        warnings.push(format!(
            "auxiliary series missing for {aux_gaps} year(s); filled with 0"
        ));
    }

    let panel = Panel::new(x, y, Some(group_order.clone()))?;
    for (group, step) in panel.interval_violations() {
        warnings.push(format!(
            "series {:?} is positive again in {} after having split; \
             the splitting model treats such data as impossible",
            group_order[group],
            first_year + step as i64
        ));
    }
    let track = IndicatorTrack::from_panel(&panel, InitConvention::NotYetFormed);
    Ok(LoadedPanel {
        panel,
        track,
        first_year,
        last_year,
        structural_zeros,
        warnings,
    })
}
