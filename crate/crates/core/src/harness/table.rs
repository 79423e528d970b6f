use std::io::Write;

use crate::asymptotics::fit_poly;
use crate::ddm_ops::SchemeKind;
use crate::error::Result;

use super::cases::HRule;

/// `log(E_prev / E) / log(eps_prev / eps)`.
pub fn convergence_order(e_prev: f64, e: f64, eps_prev: f64, eps: f64) -> f64 {
    (e_prev / e).ln() / (eps_prev / eps).ln()
}

/// Least-squares slope of `log E` against `log eps`.
pub fn fitted_order(eps: &[f64], errors: &[f64]) -> Option<f64> {
    if eps.len() < 2 {
        return None;
    }
    let xs: Vec<f64> = eps.iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    if eps.len() == 2 {
        return Some((ys[0] - ys[1]) / (xs[0] - xs[1]));
    }
    fit_poly(&xs, &ys, 1).ok().map(|f| f.slope())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub eps: f64,
    pub e2: f64,
    pub k2: Option<f64>,
    pub einf: f64,
    pub kinf: Option<f64>,
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    pub case_id: String,
    pub scheme: SchemeKind,
    pub h_rule: HRule,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    /// Builds the table from `(eps, E2, Einf, iterations, residual)`, filling in the orders.
    pub fn from_errors(
        case_id: &str,
        scheme: SchemeKind,
        h_rule: HRule,
        data: &[(f64, f64, f64, usize, f64)],
    ) -> Self {
        let rows = data
            .iter()
            .enumerate()
            .map(|(i, &(eps, e2, einf, iterations, residual))| {
                let prev = i.checked_sub(1).map(|j| data[j]);
                ConvergenceRow {
                    eps,
                    e2,
                    k2: prev.map(|p| convergence_order(p.1, e2, p.0, eps)),
                    einf,
                    kinf: prev.map(|p| convergence_order(p.2, einf, p.0, eps)),
                    iterations,
                    residual,
                }
            })
            .collect();
        ConvergenceTable {
            case_id: case_id.to_string(),
            scheme,
            h_rule,
            rows,
        }
    }

    pub fn eps(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.eps).collect()
    }

    pub fn fitted_order_l2(&self) -> Option<f64> {
        fitted_order(
            &self.eps(),
            &self.rows.iter().map(|r| r.e2).collect::<Vec<_>>(),
        )
    }

    pub fn fitted_order_linf(&self) -> Option<f64> {
        fitted_order(
            &self.eps(),
            &self.rows.iter().map(|r| r.einf).collect::<Vec<_>>(),
        )
    }

    pub fn write_csv<W: Write>(&self, out: W, with_solver: bool) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["epsilon", "E2", "k2", "Einf", "kinf"];
        if with_solver {
            header.extend(["iterations", "residual"]);
        }
        w.write_record(&header)?;
        let opt = |k: Option<f64>| k.map(|v| format!("{v:.6}")).unwrap_or_default();
        for r in &self.rows {
            let mut rec = vec![
                format!("{}", r.eps),
                format!("{:.6e}", r.e2),
                opt(r.k2),
                format!("{:.6e}", r.einf),
                opt(r.kinf),
            ];
            if with_solver {
                rec.push(r.iterations.to_string());
                rec.push(format!("{:.3e}", r.residual));
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self, with_solver: bool) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf, with_solver)
            .expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}
