use super::MetricsError;

pub const REPORT_HEADER: [&str; 8] = ["label", "n_trials", "cr", "var", "rr", "maxdd", "mse_zeta", "zeta"];

/// One evaluated agent. `maxdd` is kept signed (`<= 0`) in memory and
/// written to CSV as a magnitude.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub label: String,
    pub n_trials: usize,
    pub cr: f64,
    pub var: f64,
    pub rr: f64,
    pub maxdd: Option<f64>,
    pub mse_to_target: Option<f64>,
    pub zeta: Option<f64>,
    pub returns: Option<Vec<f64>>,
}

impl EvalReport {
    /// `annualization * cr / sqrt(var)`, or a signed infinity when the
    /// variance is zero (0 for a zero mean).
    pub fn risk_return(cr: f64, var: f64, annualization: f64) -> f64 {
        if var > 0.0 {
            annualization * cr / var.sqrt()
        } else if cr == 0.0 {
            0.0
        } else {
            f64::INFINITY.copysign(cr)
        }
    }

    pub fn rr_degenerate(&self) -> bool {
        !(self.var > 0.0)
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn parse_f64(field: &str, row: usize) -> Result<f64, MetricsError> {
    field
        .parse()
        .map_err(|_| MetricsError::Csv(format!("row {row}: cannot parse {field:?} as a number")))
}

fn parse_opt(field: &str, row: usize) -> Result<Option<f64>, MetricsError> {
    if field.is_empty() {
        Ok(None)
    } else {
        parse_f64(field, row).map(Some)
    }
}

pub fn write_report_csv(reports: &[EvalReport]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(REPORT_HEADER).expect("in-memory write");
    for r in reports {
        w.write_record([
            r.label.clone(),
            r.n_trials.to_string(),
            r.cr.to_string(),
            r.var.to_string(),
            r.rr.to_string(),
            fmt_opt(r.maxdd.map(|d| 0.0 - d)),
            fmt_opt(r.mse_to_target),
            fmt_opt(r.zeta),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}

pub fn read_report_csv(text: &str) -> Result<Vec<EvalReport>, MetricsError> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| MetricsError::Csv(e.to_string()))?;
    if header.iter().ne(REPORT_HEADER) {
        return Err(MetricsError::Csv(format!("unexpected header {header:?}")));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| MetricsError::Csv(e.to_string()))?;
        let n_trials = rec[1]
            .parse()
            .map_err(|_| MetricsError::Csv(format!("row {row}: bad n_trials {:?}", &rec[1])))?;
        out.push(EvalReport {
            label: rec[0].to_string(),
            n_trials,
            cr: parse_f64(&rec[2], row)?,
            var: parse_f64(&rec[3], row)?,
            rr: parse_f64(&rec[4], row)?,
            maxdd: parse_opt(&rec[5], row)?.map(|d| 0.0 - d),
            mse_to_target: parse_opt(&rec[6], row)?,
            zeta: parse_opt(&rec[7], row)?,
            returns: None,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn report(cr: f64, var: f64, maxdd: Option<f64>, zeta: Option<f64>) -> EvalReport {
        EvalReport {
            label: "equm,z=4".into(),
            n_trials: 10,
            cr,
            var,
            rr: EvalReport::risk_return(cr, var, 1.0),
            maxdd,
            mse_to_target: zeta.map(|z| (z - cr) * (z - cr) + var),
            zeta,
            returns: None,
        }
    }

    #[test]
    fn header_and_magnitude() {
        let text = write_report_csv(&[report(1.0, 0.0, Some(-0.25), None)]);
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("label,n_trials,cr,var,rr,maxdd,mse_zeta,zeta"));
        assert_eq!(lines.next(), Some("\"equm,z=4\",10,1,0,inf,0.25,,"));
    }

    #[test]
    fn rejects_wrong_header() {
        assert!(read_report_csv("a,b\n1,2\n").is_err());
    }

    proptest! {
        #[test]
        fn round_trip(cr in -1e6f64..1e6, var in 0.0f64..1e6, dd in proptest::option::of(-1.0f64..=0.0),
                      zeta in proptest::option::of(prop_oneof![Just(f64::INFINITY), 0.1f64..100.0])) {
            let r = report(cr, var, dd, zeta);
            let back = read_report_csv(&write_report_csv(std::slice::from_ref(&r))).unwrap();
            prop_assert_eq!(back.len(), 1);
            prop_assert_eq!(back[0].cr.to_bits(), r.cr.to_bits());
            prop_assert_eq!(back[0].var.to_bits(), r.var.to_bits());
            prop_assert_eq!(back[0].rr.to_bits(), r.rr.to_bits());
            prop_assert_eq!(back[0].maxdd.map(|d| d.abs()), r.maxdd.map(|d| d.abs()));
            prop_assert_eq!(back[0].zeta, r.zeta);
            prop_assert_eq!(&back[0].label, &r.label);
        }
    }
}
