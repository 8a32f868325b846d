//! Strict CSV ingestion. The expected layout is a UTF-8, comma-separated file
//! whose first column is headed `date` and holds `YYYY-MM` stamps, with one
//! column per mnemonic. Empty cells mark months without an observation for
//! that variable (legal for instruments, which are zero-filled at assembly);
//! any non-empty cell must parse as a finite number.

use std::path::Path;

use crate::data::meta::VariableMeta;
use crate::error::{Error, Result};
use crate::month::Month;
use crate::scalar::Scalar;

/// One raw series: observations at (possibly non-contiguous) months, in
/// strictly increasing date order.
#[derive(Debug, Clone)]
pub struct RawSeries<F> {
    pub mnemonic: String,
    pub observations: Vec<(Month, F)>,
}

impl<F: Scalar> RawSeries<F> {
    pub fn first_date(&self) -> Option<Month> {
        self.observations.first().map(|(m, _)| *m)
    }

    pub fn last_date(&self) -> Option<Month> {
        self.observations.last().map(|(m, _)| *m)
    }

    /// True when the series has an observation for every month of its span.
    pub fn is_contiguous(&self) -> bool {
        self.observations
            .windows(2)
            .all(|w| w[1].0.diff(&w[0].0) == 1)
    }
}

/// Load raw series for every schema variable from a CSV file.
///
/// The returned collection is ordered like `schema`. Extra columns in the
/// file are ignored; a schema mnemonic missing from the header is an error.
pub fn load_csv<F: Scalar>(path: &Path, schema: &[VariableMeta]) -> Result<Vec<RawSeries<F>>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_csv(&text, schema)
}

/// Parse CSV text directly; `load_csv` is the file-backed wrapper.
pub fn parse_csv<F: Scalar>(text: &str, schema: &[VariableMeta]) -> Result<Vec<RawSeries<F>>> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::schema("empty CSV file".to_string()))?;
    let headers: Vec<&str> = header.split(',').map(str::trim).collect();
    if headers.first().map(|h| h.to_ascii_lowercase()) != Some("date".to_string()) {
        return Err(Error::schema(format!(
            "first CSV column must be \"date\", found {:?}",
            headers.first().unwrap_or(&"")
        )));
    }

    // Map each schema variable to its column position.
    let mut positions = Vec::with_capacity(schema.len());
    for meta in schema {
        meta.validate()?;
        let pos = headers
            .iter()
            .position(|h| *h == meta.mnemonic)
            .ok_or_else(|| {
                Error::schema(format!("column {:?} missing from CSV header", meta.mnemonic))
            })?;
        positions.push(pos);
    }

    let mut series: Vec<RawSeries<F>> = schema
        .iter()
        .map(|m| RawSeries {
            mnemonic: m.mnemonic.clone(),
            observations: Vec::new(),
        })
        .collect();

    let mut prev_date: Option<Month> = None;
    for (line_idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let row = line_idx + 1; // 1-based, counting the header as row 1
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        let date: Month = cells[0].parse().map_err(|e: Error| Error::Parse {
            row,
            column: "date".to_string(),
            message: e.to_string(),
        })?;
        if let Some(prev) = prev_date {
            if date == prev {
                return Err(Error::Parse {
                    row,
                    column: "date".to_string(),
                    message: format!("duplicate date {date}"),
                });
            }
            if date < prev {
                return Err(Error::Parse {
                    row,
                    column: "date".to_string(),
                    message: format!("dates not increasing: {date} after {prev}"),
                });
            }
        }
        prev_date = Some(date);

        for (k, meta) in schema.iter().enumerate() {
            let cell = cells.get(positions[k]).copied().unwrap_or("");
            if cell.is_empty() {
                continue; // gap for this variable this month
            }
            let value: f64 = cell.parse().map_err(|_| Error::Parse {
                row,
                column: meta.mnemonic.clone(),
                message: format!("cannot parse {cell:?} as a number"),
            })?;
            if !value.is_finite() {
                return Err(Error::Parse {
                    row,
                    column: meta.mnemonic.clone(),
                    message: format!("non-finite value {cell:?}"),
                });
            }
            series[k].observations.push((date, F::cast(value)));
        }
    }
    Ok(series)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::meta::Role;

    fn schema2() -> Vec<VariableMeta> {
        vec![
            VariableMeta::new("Target", Role::Instrument, 1),
            VariableMeta::new("RGDP", Role::Core, 1),
        ]
    }

    #[test]
    fn three_row_file_parses_to_two_series() {
        let text = "date,Target,RGDP\n1995-01,0.1,2.0\n1995-02,-0.2,2.1\n1995-03,0.0,2.2\n";
        let series = parse_csv::<f64>(text, &schema2()).unwrap();
        assert_eq!(series.len(), 2);
        assert_eq!(series[0].observations.len(), 3);
        assert_eq!(series[1].observations.len(), 3);
        assert_eq!(series[1].observations[2].1, 2.2);
    }

    #[test]
    fn missing_schema_column_named_in_error() {
        let text = "date,Target,RGDP\n1995-01,0.1,2.0\n";
        let mut schema = schema2();
        schema.push(VariableMeta::new("Path", Role::Instrument, 1));
        let err = parse_csv::<f64>(text, &schema).unwrap_err();
        assert!(err.to_string().contains("Path"), "{err}");
    }

    #[test]
    fn month_13_rejected_with_row_position() {
        let text = "date,Target,RGDP\n1995-01,0.1,2.0\n2020-13,0.2,2.1\n";
        let err = parse_csv::<f64>(text, &schema2()).unwrap_err();
        match err {
            Error::Parse { row, .. } => assert_eq!(row, 3),
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn duplicate_dates_rejected() {
        let text = "date,Target,RGDP\n1995-01,0.1,2.0\n1995-01,0.2,2.1\n";
        assert!(parse_csv::<f64>(text, &schema2()).is_err());
    }

    #[test]
    fn bad_cell_reports_row_and_column() {
        let text = "date,Target,RGDP\n1995-01,0.1,2.0\n1995-02,abc,2.1\n";
        let err = parse_csv::<f64>(text, &schema2()).unwrap_err();
        match err {
            Error::Parse { row, column, .. } => {
                assert_eq!(row, 3);
                assert_eq!(column, "Target");
            }
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn empty_cells_become_gaps() {
        let text = "date,Target,RGDP\n1995-01,,2.0\n1995-02,0.5,2.1\n";
        let series = parse_csv::<f64>(text, &schema2()).unwrap();
        assert_eq!(series[0].observations.len(), 1);
        assert!(!series[0].is_contiguous() || series[0].observations.len() == 1);
        assert_eq!(series[1].observations.len(), 2);
    }
}
