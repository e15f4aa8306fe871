use std::path::Path;

use crate::failure::Failure;

/// A numeric CSV table with a header row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn read(path: &Path) -> Result<Self, Failure> {
        let what = path.display().to_string();
        let file = std::fs::File::open(path).map_err(|e| Failure::data(format!("cannot open {what}: {e}")))?;
        Self::from_reader(file, &what)
    }

    pub fn from_reader<R: std::io::Read>(reader: R, what: &str) -> Result<Self, Failure> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
        let columns: Vec<String> = rdr
            .headers()
            .map_err(|e| Failure::data(format!("{what}: cannot read header: {e}")))?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        if columns.is_empty() || columns.iter().all(String::is_empty) {
            return Err(Failure::data(format!("{what}: missing header row")));
        }
        let mut rows = Vec::new();
        for (i, record) in rdr.records().enumerate() {
            let row = i + 1;
            let record = record.map_err(|e| Failure::data(format!("{what}: row {row}: {e}")))?;
            if record.len() != columns.len() {
                return Err(Failure::data(format!(
                    "{what}: row {row} has {} fields, header has {}",
                    record.len(),
                    columns.len()
                )));
            }
            let mut values = Vec::with_capacity(columns.len());
            for (field, name) in record.iter().zip(&columns) {
                let field = field.trim();
                if field.is_empty() {
                    return Err(Failure::data(format!("{what}: row {row}: missing value in column '{name}'")));
                }
                let v: f64 = field
                    .parse()
                    .map_err(|_| Failure::data(format!("{what}: row {row}: column '{name}' is not a number: '{field}'")))?;
                if !v.is_finite() {
                    return Err(Failure::data(format!("{what}: row {row}: column '{name}' is not finite")));
                }
                values.push(v);
            }
            rows.push(values);
        }
        if rows.is_empty() {
            return Err(Failure::data(format!("{what}: no observations")));
        }
        Ok(Dataset { columns, rows })
    }

    pub fn ncols(&self) -> usize {
        self.columns.len()
    }

    pub fn expect_columns(&self, n: usize, what: &str) -> Result<(), Failure> {
        if self.ncols() != n {
            return Err(Failure::data(format!("{what} needs {n} column(s), found {}", self.ncols())));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<Dataset, Failure> {
        Dataset::from_reader(s.as_bytes(), "input")
    }

    #[test]
    fn reads_header_and_rows() {
        let d = parse("x,y\n1,2\n3.5,-4e-1\n").unwrap();
        assert_eq!(d.columns, ["x", "y"]);
        assert_eq!(d.rows, vec![vec![1.0, 2.0], vec![3.5, -0.4]]);
    }

    #[test]
    fn rejects_missing_and_ragged_rows_with_their_index() {
        let e = parse("x,y\n1,2\n3,\n").unwrap_err();
        assert!(e.message.contains("row 2") && e.message.contains("'y'"), "{}", e.message);
        let e = parse("x,y\n1,2\n3\n").unwrap_err();
        assert!(e.message.contains("row 2"), "{}", e.message);
        let e = parse("x\n1\nabc\n").unwrap_err();
        assert!(e.message.contains("row 2") && e.message.contains("abc"));
        assert!(parse("x\nNaN\n").is_err());
        assert!(parse("x\n").is_err());
        assert!(parse("x\n1,5\n").is_err());
    }

    #[test]
    fn comma_decimals_are_not_accepted() {
        assert!(parse("x\n\"1,5\"\n").is_err());
    }
}
