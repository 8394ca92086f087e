use std::io::{Read, Write};

use super::PipelineError;
use crate::density::{DistressVector, FeatureUnit};
use crate::NUM_CLASSES;

/// Rows of an id column, nine feature columns `<prefix>1..<prefix>9` and
/// an optional target column.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub ids: Vec<String>,
    pub features: Vec<DistressVector>,
    pub targets: Option<Vec<f64>>,
}

/// Reads a feature CSV. The id is the first column. When `target` is given,
/// rows with an empty target cell are skipped.
pub fn read_feature_table<R: Read>(
    reader: R,
    prefix: &str,
    unit: FeatureUnit,
    target: Option<&str>,
) -> Result<FeatureTable, PipelineError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| PipelineError::Table(e.to_string()))?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| PipelineError::Table(format!("missing column {name:?}")))
    };
    let feature_cols: Vec<usize> = (1..=NUM_CLASSES).map(|k| col(&format!("{prefix}{k}"))).collect::<Result<_, _>>()?;
    let target_col = target.map(col).transpose()?;

    let mut table = FeatureTable { ids: vec![], features: vec![], targets: target.map(|_| vec![]) };
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| PipelineError::Table(format!("line {line}: {e}")))?;
        let num = |c: usize| -> Result<f64, PipelineError> {
            let cell = rec.get(c).unwrap_or("");
            cell.parse::<f64>().map_err(|_| {
                PipelineError::Table(format!("line {line}: column {:?}: not a number: {cell:?}", &headers[c]))
            })
        };
        if let Some(tc) = target_col {
            if rec.get(tc).unwrap_or("").is_empty() {
                continue;
            }
        }
        let mut values = [0.0; NUM_CLASSES];
        for (slot, &c) in values.iter_mut().zip(&feature_cols) {
            *slot = num(c)?;
        }
        let d = DistressVector::new(values, unit).map_err(|e| PipelineError::Table(format!("line {line}: {e}")))?;
        table.ids.push(rec.get(0).unwrap_or("").to_string());
        table.features.push(d);
        if let (Some(tc), Some(t)) = (target_col, table.targets.as_mut()) {
            t.push(num(tc)?);
        }
    }
    Ok(table)
}

/// Writes one comma-separated line; cells are assumed not to need quoting.
pub fn write_csv_row<W: Write>(out: &mut W, cells: &[String]) -> std::io::Result<()> {
    writeln!(out, "{}", cells.join(","))
}
