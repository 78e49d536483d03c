use std::io::{self, BufRead, Write};

use serde::Serialize;

pub const TRACE_HEADER: &str = "k,sigma,sigma_s,rho,beta,primal_res,dual_change,loss,mse,ms";

/// One row of a solver trace. `beta` compares against the previous state,
/// which at k = 1 is the initial one.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterationRecord {
    pub k: usize,
    pub sigma: f64,
    pub sigma_s: f64,
    /// Penalty used during this iteration.
    pub rho: f64,
    pub beta: f64,
    /// ‖x − z‖.
    pub primal_res: f64,
    /// ‖u − u_prev‖.
    pub dual_change: f64,
    /// ℓ at the estimate.
    pub loss: f64,
    /// Mean squared error of the estimate when the truth is known.
    pub mse: Option<f64>,
    pub ms: f64,
}

impl IterationRecord {
    pub fn is_finite(&self) -> bool {
        [
            self.sigma,
            self.sigma_s,
            self.rho,
            self.beta,
            self.primal_res,
            self.dual_change,
            self.loss,
            self.ms,
        ]
        .iter()
        .chain(self.mse.iter())
        .all(|v| v.is_finite())
    }

    fn csv_row(&self) -> String {
        let mse = self.mse.map(|m| m.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.k,
            self.sigma,
            self.sigma_s,
            self.rho,
            self.beta,
            self.primal_res,
            self.dual_change,
            self.loss,
            mse,
            self.ms
        )
    }
}

/// Header plus one row per record. Floats use the shortest round-trip form,
/// so equal traces give identical bytes.
pub fn write_trace_csv<W: Write>(records: &[IterationRecord], mut out: W) -> io::Result<()> {
    writeln!(out, "{TRACE_HEADER}")?;
    for r in records {
        writeln!(out, "{}", r.csv_row())?;
    }
    out.flush()
}

pub fn read_trace_csv<R: BufRead>(input: R) -> io::Result<Vec<IterationRecord>> {
    let bad = |msg: String| io::Error::new(io::ErrorKind::InvalidData, msg);
    let mut lines = input.lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    if header != TRACE_HEADER {
        return Err(bad(format!("unexpected header {header:?}")));
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 10 {
            return Err(bad(format!("row {} has {} fields", i + 1, f.len())));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| bad(format!("row {}: {e}", i + 1)))
        };
        out.push(IterationRecord {
            k: f[0]
                .parse()
                .map_err(|e| bad(format!("row {}: {e}", i + 1)))?,
            sigma: num(f[1])?,
            sigma_s: num(f[2])?,
            rho: num(f[3])?,
            beta: num(f[4])?,
            primal_res: num(f[5])?,
            dual_change: num(f[6])?,
            loss: num(f[7])?,
            mse: if f[8].is_empty() {
                None
            } else {
                Some(num(f[8])?)
            },
            ms: num(f[9])?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let recs = vec![
            IterationRecord {
                k: 1,
                sigma: 10.0,
                sigma_s: 0.0316,
                rho: 100.0,
                beta: 0.123456789,
                primal_res: 1e-9,
                dual_change: 0.5,
                loss: 12.0,
                mse: Some(0.01),
                ms: 0.0,
            },
            IterationRecord {
                k: 2,
                sigma: 9.9,
                sigma_s: 0.0317,
                rho: 120.0,
                beta: 0.1,
                primal_res: 2e-9,
                dual_change: 0.25,
                loss: 11.0,
                mse: None,
                ms: 0.0,
            },
        ];
        let mut buf = Vec::new();
        write_trace_csv(&recs, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(TRACE_HEADER));
        assert!(text.lines().nth(2).unwrap().contains(",,"));
        assert_eq!(read_trace_csv(&buf[..]).unwrap(), recs);
    }
}
