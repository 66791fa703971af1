//! Fixed-width numeric text and the trajectory CSV schema.

use std::fmt::Write as _;

use contraflow::flow::{Sample, Trajectory};

/// C-style `%.17g`: 17 significant digits, trailing zeros dropped, and
/// scientific notation when the exponent is below -4 or at least 17.
pub fn g17(v: f64) -> String {
    const P: i32 = 17;
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{:.*e}", (P - 1) as usize, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..P).contains(&exp) {
        let fixed = format!("{:.*}", (P - 1 - exp) as usize, v);
        strip_zeros(&fixed).to_string()
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", strip_zeros(mantissa), exp.abs())
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn cell(v: Option<f64>) -> String {
    v.map(g17).unwrap_or_default()
}

pub fn csv_header(n: usize, m: usize) -> String {
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=n).map(|i| format!("x{i}")));
    cols.extend((1..=m).map(|i| format!("h{i}")));
    cols.extend((1..=m).map(|i| format!("lambda{i}")));
    cols.extend(["s", "U", "margin", "rhs_norm"].map(String::from));
    cols.join(",")
}

fn csv_row(s: &Sample, m: usize) -> String {
    let mut cells = vec![g17(s.t)];
    cells.extend(s.x.iter().map(|v| g17(*v)));
    // lambda is empty for raw runs
    cells.extend((0..m).map(|i| cell(s.h.get(i).copied())));
    cells.extend((0..m).map(|i| cell(s.lambda.get(i).copied())));
    cells.push(g17(s.s));
    cells.push(cell(s.u));
    cells.push(cell(s.margin));
    cells.push(g17(s.rhs_norm));
    cells.join(",")
}

pub fn trajectory_csv(traj: &Trajectory, n: usize, m: usize) -> String {
    let mut out = csv_header(n, m);
    out.push('\n');
    for s in &traj.samples {
        writeln!(out, "{}", csv_row(s, m)).expect("writing to a String");
    }
    out
}

/// Reads `t` and `x1..xn` back from a trajectory CSV.
pub fn read_states(text: &str, n: usize) -> Result<Vec<(f64, Vec<f64>)>, String> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines.next().ok_or("empty CSV")?.split(',').map(str::trim).collect();
    let col = |name: &str| header.iter().position(|h| *h == name).ok_or(format!("CSV has no `{name}` column"));
    let t_col = col("t")?;
    let x_cols = (1..=n).map(|i| col(&format!("x{i}"))).collect::<Result<Vec<_>, _>>()?;
    let mut out = Vec::new();
    for (k, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        let num = |c: usize| -> Result<f64, String> {
            cells
                .get(c)
                .and_then(|s| s.parse().ok())
                .ok_or(format!("row {}: bad value in column {}", k + 1, header[c]))
        };
        let t = num(t_col)?;
        let x = x_cols.iter().map(|&c| num(c)).collect::<Result<Vec<_>, _>>()?;
        out.push((t, x));
    }
    Ok(out)
}

/// Gnuplot script drawing states, residuals and the sliding energy from `csv`.
pub fn gnuplot_script(csv: &str, png: &str, n: usize, m: usize) -> String {
    let mut s = String::new();
    s.push_str("set datafile separator ','\nset key autotitle columnhead\n");
    writeln!(s, "set terminal pngcairo size 900,{}", if m > 0 { 900 } else { 600 }).unwrap();
    writeln!(s, "set output '{png}'").unwrap();
    writeln!(s, "set multiplot layout {},1", if m > 0 { 3 } else { 2 }).unwrap();
    s.push_str("set xlabel 't'\n");
    writeln!(s, "plot for [i=2:{}] '{csv}' using 1:i with lines", n + 1).unwrap();
    if m > 0 {
        writeln!(s, "plot for [i={}:{}] '{csv}' using 1:i with lines", n + 2, n + m + 1).unwrap();
    }
    let s_col = n + 2 * m + 2;
    s.push_str("set logscale y\n");
    writeln!(s, "plot '{csv}' using 1:{s_col} with lines, '' using 1:{} with lines", s_col + 3).unwrap();
    s.push_str("unset multiplot\n");
    s
}
