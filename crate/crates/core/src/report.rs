//! Row-oriented numeric tables for CSV output. Numbers are written with 17
//! significant digits so that they parse back to the same `f64`.

use crate::bifurcation::{BifurcationPoint, BranchOutcome};
use crate::sde::EmpiricalLaw;
use crate::sensitivity::DerivativeReport;

/// `x` with 17 significant digits.
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Self { header: header.iter().map(|h| h.as_ref().to_string()).collect(), rows: Vec::new() }
    }

    pub fn push_numbers(&mut self, fields: &[f64]) {
        self.push(fields.iter().map(|x| format_f64(*x)).collect());
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.header.len(), "row width must match the header");
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

pub fn derivative_table(reports: &[DerivativeReport]) -> Table {
    let mut t = Table::new(&DerivativeReport::CSV_HEADER);
    for r in reports {
        t.push_numbers(&r.csv_fields());
    }
    t
}

/// Branch table with a trailing `status` column. Subcritical rows carry
/// `gamma_star = 0` (the uniform state) and NaN for undefined fields.
pub fn branch_table(outcomes: &[BranchOutcome]) -> Table {
    let mut header: Vec<&str> = BifurcationPoint::CSV_HEADER.to_vec();
    header.push("status");
    let mut t = Table::new(&header);
    for o in outcomes {
        let (fields, status) = match o {
            BranchOutcome::Synchronized(p) => (p.csv_fields(), "synchronized"),
            BranchOutcome::NoSynchronizedEquilibrium { kappa, kappa_c } => {
                ([*kappa, *kappa_c, 0.0, 0.0, 0.0, f64::NAN, 0.0], "no synchronized equilibrium")
            }
        };
        let mut row: Vec<String> = fields.iter().map(|x| format_f64(*x)).collect();
        row.push(status.to_string());
        t.push(row);
    }
    t
}

pub fn histogram_table(law: &EmpiricalLaw) -> Table {
    let mut t = Table::new(&["bin_center", "mass", "reference_density_mass"]);
    for ((c, m), r) in law.bin_centers().iter().zip(&law.masses).zip(&law.reference_masses) {
        t.push_numbers(&[*c, *m, *r]);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formatting_round_trips() {
        for x in [0.1, 1.0 / 3.0, std::f64::consts::PI, 1e-300, -2.5e17] {
            assert_eq!(format_f64(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn subcritical_rows_are_labelled() {
        let t = branch_table(&[BranchOutcome::NoSynchronizedEquilibrium { kappa: 1.4, kappa_c: 1.5 }]);
        assert_eq!(t.header.last().unwrap(), "status");
        assert_eq!(t.rows[0][2].parse::<f64>().unwrap(), 0.0);
        assert_eq!(t.rows[0][7], "no synchronized equilibrium");
    }
}
