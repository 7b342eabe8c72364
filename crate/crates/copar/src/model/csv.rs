//! Panel CSV format: header `t,y,x1,...,xg`, one row per step, plain
//! nonnegative integers.

use super::{ModelError, Panel};

pub fn write_panel_csv(panel: &Panel) -> String {
    let g = panel.n_groups();
    let mut out = String::from("t,y");
    for i in 1..=g {
        out.push_str(&format!(",x{i}"));
    }
    out.push('\n');
    for t in 0..panel.n_steps() {
        out.push_str(&format!("{t},{}", panel.y(t)));
        for i in 0..g {
            out.push_str(&format!(",{}", panel.x(i, t)));
        }
        out.push('\n');
    }
    out
}

pub fn parse_panel_csv(text: &str) -> Result<Panel, ModelError> {
    let err = |line: usize, message: String| ModelError::PanelCsv { line, message };
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| err(1, "empty file".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.len() < 4 || cols[0] != "t" || cols[1] != "y" {
        return Err(err(
            1,
            format!("expected header t,y,x1,...,xg with at least 2 groups, got {header:?}"),
        ));
    }
    let g = cols.len() - 2;
    for (i, col) in cols[2..].iter().enumerate() {
        let expected = format!("x{}", i + 1);
        if *col != expected {
            return Err(err(1, format!("expected column {expected}, got {col:?}")));
        }
    }

    let mut x: Vec<Vec<u64>> = vec![Vec::new(); g];
    let mut y = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = idx + 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != g + 2 {
            return Err(err(
                line_no,
                format!("expected {} fields, got {}", g + 2, fields.len()),
            ));
        }
        let parse = |field: &str, what: &str| -> Result<u64, ModelError> {
            field.parse::<u64>().map_err(|_| {
                err(
                    line_no,
                    format!("{what} must be a nonnegative integer, got {field:?}"),
                )
            })
        };
        let t = parse(fields[0], "t")?;
        if t as usize != y.len() {
            return Err(err(
                line_no,
                format!("expected t = {}, got {t}", y.len()),
            ));
        }
        y.push(parse(fields[1], "y")?);
        for (i, field) in fields[2..].iter().enumerate() {
            x[i].push(parse(field, &format!("x{}", i + 1))?);
        }
    }
    if y.is_empty() {
        return Err(err(1, "no data rows".into()));
    }
    Panel::new(x, y, None)
}
