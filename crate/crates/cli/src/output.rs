//! Trajectory export: CSV with a mandatory header and 17-significant-digit
//! floats for bit-stable round trips, or the full JSON document.

use std::io::Write;

use holomech::traj::Trajectory;

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_csv(traj: &Trajectory, w: &mut dyn Write) -> std::io::Result<()> {
    let mut header = vec!["t".to_string()];
    header.extend(traj.labels.iter().cloned());
    header.extend(traj.diagnostic_labels.iter().cloned());
    writeln!(w, "{}", header.join(","))?;
    for s in &traj.samples {
        let mut row = vec![fmt(s.t)];
        row.extend(s.state.iter().map(|v| fmt(*v)));
        row.extend(s.diagnostics.iter().map(|v| fmt(*v)));
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn write_json(traj: &Trajectory, w: &mut dyn Write) -> std::io::Result<()> {
    let text = serde_json::to_string_pretty(traj).expect("trajectory serializes");
    writeln!(w, "{text}")
}

/// Re-load an exported CSV: header plus float rows of equal width.
pub fn read_csv(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>), String> {
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or("empty file")?
        .split(',')
        .map(|s| s.to_string())
        .collect();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|cell| {
                cell.parse::<f64>()
                    .map_err(|e| format!("row {}: bad float '{cell}': {e}", i + 2))
            })
            .collect::<Result<_, String>>()?;
        if row.len() != header.len() {
            return Err(format!(
                "row {} has {} cells, header has {}",
                i + 2,
                row.len(),
                header.len()
            ));
        }
        rows.push(row);
    }
    Ok((header, rows))
}
