//! Two-column CSV extracts of a run report.

use crate::run::RunReport;
use crate::CliError;

pub const QUANTITIES: [&str; 20] = [
    "volume",
    "r",
    "min-scalar",
    "max-scalar",
    "einstein-residual",
    "drift",
    "entropy",
    "energy",
    "f",
    "w",
    "entropy-spectral",
    "energy-spectral",
    "f-spectral",
    "w-spectral",
    "log-partition",
    "fluctuation",
    "rel-error",
    "trace",
    "geometric",
    "estimate",
];

fn missing(q: &str, stage: &str) -> CliError {
    CliError::Validation(format!("quantity '{q}' needs the {stage} stage, which the report does not contain"))
}

/// (abscissa, value) rows as CSV; the header names both columns.
pub fn emit_plot_data(r: &RunReport, quantity: &str) -> Result<String, CliError> {
    let rows: Vec<(f64, f64)>;
    let x: &str;
    match quantity {
        "volume" | "r" | "min-scalar" | "max-scalar" | "einstein-residual" | "drift" => {
            let f = r.flow.as_ref().ok_or_else(|| missing(quantity, "flow"))?;
            x = "chi";
            rows = f
                .rows
                .iter()
                .map(|row| {
                    let v = match quantity {
                        "volume" => row.volume,
                        "r" => row.r,
                        "min-scalar" => row.min_scalar,
                        "max-scalar" => row.max_scalar,
                        "einstein-residual" => row.einstein_residual,
                        _ => row.drift,
                    };
                    (row.chi, v)
                })
                .collect();
        }
        "entropy" | "energy" | "f" | "w" | "entropy-spectral" | "energy-spectral" | "f-spectral" | "w-spectral" | "log-partition" | "fluctuation" => {
            let f = r.functionals.as_ref().ok_or_else(|| missing(quantity, "functionals"))?;
            x = "chi";
            rows = f
                .rows
                .iter()
                .map(|row| {
                    let (base, form) = match quantity.strip_suffix("-spectral") {
                        Some(b) => (b, &row.spectral),
                        None => (quantity, &row.standard),
                    };
                    let v = match base {
                        "entropy" => form.entropy,
                        "energy" => form.average_energy,
                        "f" => form.f,
                        "w" => form.w,
                        "log-partition" => row.log_partition,
                        _ => row.fluctuation,
                    };
                    (row.chi, v)
                })
                .collect();
        }
        "rel-error" | "geometric" => {
            let s = r.spectral.as_ref().ok_or_else(|| missing(quantity, "spectral"))?;
            let c = s.comparison.as_ref().ok_or_else(|| {
                CliError::Validation(format!("quantity '{quantity}': no spectral comparison in the report ({})", s.comparison_note.clone().unwrap_or_default()))
            })?;
            x = "lambda";
            rows = c.rows.iter().map(|row| (row.lambda, if quantity == "rel-error" { row.rel_error } else { row.geometric })).collect();
        }
        "trace" => {
            let s = r.spectral.as_ref().ok_or_else(|| missing(quantity, "spectral"))?;
            x = "lambda";
            rows = s.spectral.points.iter().map(|p| (p.lambda, p.value)).collect();
        }
        "estimate" => {
            let s = r.spectral.as_ref().ok_or_else(|| missing(quantity, "spectral"))?;
            if s.estimates.is_empty() {
                return Err(CliError::Validation("quantity 'estimate': the report has no heat-kernel estimates".into()));
            }
            x = "lambda";
            rows = s.estimates.iter().map(|e| (e.lambda, e.value)).collect();
        }
        other => return Err(CliError::Validation(format!("unknown quantity '{other}' (known: {})", QUANTITIES.join(", ")))),
    }
    let mut out = format!("{x},{quantity}\n");
    for (a, v) in rows {
        out.push_str(&format!("{a},{v}\n"));
    }
    Ok(out)
}
