//! CSV, plot-script and report emission.

use contact_reduce::integrate::Trajectory;
use std::io::Write;
use std::path::Path;

/// 17 significant digits: round-trips f64 exactly.
pub fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

/// Columns: t, tau (when present), state coordinates by name, then
/// diagnostics.
pub fn write_csv(
    path: &Path,
    traj: &Trajectory,
    var_names: &[String],
    diagnostics: &[(String, Vec<f64>)],
) -> anyhow::Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    let with_tau = traj.samples.iter().all(|s| s.tau.is_some());
    let mut header = vec!["t".to_string()];
    if with_tau {
        header.push("tau".into());
    }
    header.extend_from_slice(var_names);
    for (name, _) in diagnostics {
        header.push(name.clone());
    }
    writeln!(f, "{}", header.join(","))?;
    for (i, s) in traj.samples.iter().enumerate() {
        let mut row = vec![fmt(s.t)];
        if with_tau {
            row.push(fmt(s.tau.unwrap()));
        }
        row.extend(s.state.iter().map(|v| fmt(*v)));
        for (_, col) in diagnostics {
            row.push(fmt(col[i]));
        }
        writeln!(f, "{}", row.join(","))?;
    }
    f.flush()?;
    Ok(())
}

/// Companion gnuplot script referencing the CSV columns.
pub fn write_plot_script(
    path: &Path,
    csv_name: &str,
    var_names: &[String],
    has_tau: bool,
) -> anyhow::Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "# gnuplot script; run: gnuplot -p {}", path.display())?;
    writeln!(f, "set datafile separator ','")?;
    writeln!(f, "set key autotitle columnhead")?;
    writeln!(f, "set xlabel 't'")?;
    let first_state_col = if has_tau { 3 } else { 2 };
    let plots: Vec<String> = var_names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            format!(
                "'{csv_name}' using 1:{} with lines title '{name}'",
                first_state_col + i
            )
        })
        .collect();
    writeln!(f, "plot {}", plots.join(", \\\n     "))?;
    f.flush()?;
    Ok(())
}

pub struct ReportLine {
    pub key: String,
    pub value: f64,
    pub tolerance: Option<f64>,
}

/// Flat key-value report; acceptance-relevant numbers carry their tolerance
/// and a pass/fail flag.
pub fn render_report(lines: &[ReportLine]) -> (String, bool) {
    let mut out = String::new();
    let mut all_pass = true;
    for l in lines {
        match l.tolerance {
            Some(tol) => {
                let pass = l.value < tol;
                all_pass &= pass;
                out.push_str(&format!(
                    "{} = {:.6e} (tol {:.1e}) {}\n",
                    l.key,
                    l.value,
                    tol,
                    if pass { "PASS" } else { "FAIL" }
                ));
            }
            None => out.push_str(&format!("{} = {:.6e}\n", l.key, l.value)),
        }
    }
    out.push_str(&format!(
        "verdict = {}\n",
        if all_pass { "pass" } else { "fail" }
    ));
    (out, all_pass)
}
