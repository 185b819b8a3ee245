//! Minimal CSV reading for the toolkit's own column formats.

/// A parsed numeric CSV table.
#[derive(Debug, Clone)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.headers.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[idx]).collect())
    }
}

/// Parse a comma-separated numeric table. Errors carry 1-based line numbers.
pub fn parse_table(text: &str) -> Result<Table, String> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| "empty CSV: no header line".to_string())?;
    let headers: Vec<String> = header.split(',').map(|h| h.trim().to_string()).collect();
    if headers.iter().any(|h| h.is_empty()) {
        return Err("line 1: empty column name in header".into());
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != headers.len() {
            return Err(format!(
                "line {}: expected {} fields, got {}",
                idx + 1,
                headers.len(),
                fields.len()
            ));
        }
        let mut row = Vec::with_capacity(fields.len());
        for f in fields {
            row.push(
                f.parse::<f64>()
                    .map_err(|e| format!("line {}: bad number {f:?}: {e}", idx + 1))?,
            );
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err("CSV has no data rows".into());
    }
    Ok(Table { headers, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_indexes_columns() {
        let t = parse_table("a,b\n1,2\n3,4\n").unwrap();
        assert_eq!(t.column("b").unwrap(), vec![2.0, 4.0]);
        assert!(t.column("c").is_none());
    }

    #[test]
    fn diagnostics_carry_line_numbers() {
        let err = parse_table("a,b\n1\n").unwrap_err();
        assert!(err.contains("line 2"), "{err}");
        let err = parse_table("a,b\n1,x\n").unwrap_err();
        assert!(err.contains("line 2"), "{err}");
        assert!(parse_table("").is_err());
        assert!(parse_table("a,b\n").is_err());
    }
}
