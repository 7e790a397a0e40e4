/// 17 significant digits; parses back to the identical `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn parse_row(line: &str, cols: usize) -> std::result::Result<Vec<f64>, String> {
    let vals: Vec<f64> = line
        .split_whitespace()
        .map(|s| s.parse::<f64>().map_err(|e| format!("{s:?}: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    if vals.len() != cols {
        return Err(format!("expected {cols} values, got {}", vals.len()));
    }
    Ok(vals)
}
