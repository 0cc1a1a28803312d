//! Per-epoch metric records and their CSV form.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;
use std::time::Instant;

use ndarray::Array1;

use crate::error::{OptError, Result};
use crate::linalg;

pub const CSV_HEADER: [&str; 7] = ["step", "grads", "proxes", "bits", "f_gap", "dist_sq", "wall_ns"];

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct TraceRow {
    pub step: u64,
    pub grads: u64,
    pub proxes: u64,
    /// Estimated communicated bits; fractional because of `log2` terms.
    pub bits: f64,
    pub f_gap: f64,
    pub dist_sq: f64,
    pub wall_ns: u64,
}

impl TraceRow {
    /// Equality on everything but `wall_ns`, treating NaN as equal to NaN.
    pub fn same_metrics(&self, o: &TraceRow) -> bool {
        let eq = |a: f64, b: f64| a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan());
        self.step == o.step
            && self.grads == o.grads
            && self.proxes == o.proxes
            && eq(self.bits, o.bits)
            && eq(self.f_gap, o.f_gap)
            && eq(self.dist_sq, o.dist_sq)
    }
}

#[derive(Clone, Debug, Default)]
pub struct MetricTrace {
    pub rows: Vec<TraceRow>,
    pub metadata: BTreeMap<String, String>,
    pub warnings: Vec<String>,
    /// Extra named series (e.g. iterate deviation, constraint residual),
    /// one value per recorded row unless stated otherwise.
    pub aux: BTreeMap<String, Vec<f64>>,
    pub final_x: Option<Array1<f64>>,
}

impl MetricTrace {
    pub fn new() -> Self {
        let mut t = MetricTrace::default();
        t.metadata.insert("version".into(), env!("CARGO_PKG_VERSION").into());
        t
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    pub fn dist_sq(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.dist_sq).collect()
    }

    pub fn f_gap(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.f_gap).collect()
    }

    pub fn push_aux(&mut self, name: &str, v: f64) {
        self.aux.entry(name.to_string()).or_default().push(v);
    }

    /// Row-wise equality ignoring wall-clock time.
    pub fn same_metrics(&self, o: &MetricTrace) -> bool {
        self.rows.len() == o.rows.len() && self.rows.iter().zip(&o.rows).all(|(a, b)| a.same_metrics(b))
    }

    pub fn write_csv_to<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(w);
        let io = |e: csv::Error| OptError::Io(e.to_string());
        wr.write_record(CSV_HEADER).map_err(io)?;
        for r in &self.rows {
            wr.write_record([
                r.step.to_string(),
                r.grads.to_string(),
                r.proxes.to_string(),
                fmt_f64(r.bits),
                fmt_f64(r.f_gap),
                fmt_f64(r.dist_sq),
                r.wall_ns.to_string(),
            ])
            .map_err(io)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv_to(std::io::BufWriter::new(f))
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv_to(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }

    /// Reads the rows back; metadata is not part of the CSV.
    pub fn read_csv_from<R: Read>(r: R) -> Result<MetricTrace> {
        let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
        let headers = rd.headers().map_err(|e| OptError::Io(e.to_string()))?;
        if headers.iter().ne(CSV_HEADER.iter().copied()) {
            return Err(OptError::Parse {
                line: 1,
                msg: format!("unexpected header {headers:?}"),
            });
        }
        let mut t = MetricTrace::default();
        for (k, rec) in rd.records().enumerate() {
            let line = k + 2;
            let rec = rec.map_err(|e| OptError::Parse {
                line,
                msg: e.to_string(),
            })?;
            let int = |i: usize| -> Result<u64> {
                rec[i].parse().map_err(|_| OptError::Parse {
                    line,
                    msg: format!("bad integer {:?} in column {}", &rec[i], CSV_HEADER[i]),
                })
            };
            let flt = |i: usize| -> Result<f64> {
                rec[i].parse().map_err(|_| OptError::Parse {
                    line,
                    msg: format!("bad float {:?} in column {}", &rec[i], CSV_HEADER[i]),
                })
            };
            t.rows.push(TraceRow {
                step: int(0)?,
                grads: int(1)?,
                proxes: int(2)?,
                bits: flt(3)?,
                f_gap: flt(4)?,
                dist_sq: flt(5)?,
                wall_ns: int(6)?,
            });
        }
        Ok(t)
    }

    pub fn read_csv(path: &Path) -> Result<MetricTrace> {
        MetricTrace::read_csv_from(std::fs::File::open(path)?)
    }
}

/// 17 significant digits; enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

/// Known optimum used for the `f_gap` and `dist_sq` columns.
#[derive(Clone, Debug)]
pub struct Reference {
    pub x: Array1<f64>,
    pub f: f64,
}

/// Operation counters carried by every solver.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Counters {
    pub grads: u64,
    pub proxes: u64,
    pub bits: f64,
}

/// Builds a trace as a solver runs.
pub struct Recorder<'a> {
    objective: Box<dyn Fn(&Array1<f64>) -> f64 + 'a>,
    reference: Option<&'a Reference>,
    start: Instant,
    pub counters: Counters,
    pub trace: MetricTrace,
}

impl<'a> Recorder<'a> {
    /// `objective` is the full composite objective, used only when a
    /// reference is available.
    pub fn new<F>(objective: F, reference: Option<&'a Reference>) -> Self
    where
        F: Fn(&Array1<f64>) -> f64 + 'a,
    {
        Recorder {
            objective: Box::new(objective),
            reference,
            start: Instant::now(),
            counters: Counters::default(),
            trace: MetricTrace::new(),
        }
    }

    pub fn record(&mut self, step: u64, x: &Array1<f64>) {
        let (f_gap, dist_sq) = match self.reference {
            Some(r) => ((self.objective)(x) - r.f, linalg::dist_sq(x, &r.x)),
            None => (f64::NAN, f64::NAN),
        };
        self.trace.rows.push(TraceRow {
            step,
            grads: self.counters.grads,
            proxes: self.counters.proxes,
            bits: self.counters.bits,
            f_gap,
            dist_sq,
            wall_ns: self.start.elapsed().as_nanos() as u64,
        });
    }

    pub fn warn(&mut self, msg: impl Into<String>) {
        self.trace.warnings.push(msg.into());
    }

    pub fn finish(mut self, x: Array1<f64>) -> MetricTrace {
        self.trace.final_x = Some(x);
        self.trace
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_trace_is_header_only() {
        assert_eq!(
            MetricTrace::new().to_csv_string(),
            "step,grads,proxes,bits,f_gap,dist_sq,wall_ns\n"
        );
    }

    #[test]
    fn nan_and_inf_round_trip() {
        let mut t = MetricTrace::new();
        t.rows.push(TraceRow {
            f_gap: f64::NAN,
            dist_sq: f64::INFINITY,
            ..Default::default()
        });
        let back = MetricTrace::read_csv_from(t.to_csv_string().as_bytes()).unwrap();
        assert!(back.same_metrics(&t));
    }

    #[test]
    fn rejects_wrong_header() {
        assert!(MetricTrace::read_csv_from("a,b\n".as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn csv_round_trip_bitwise(rows in proptest::collection::vec(
            (0u64..1000, 0u64..1_000_000, 0u64..1000, any::<f64>(), any::<f64>(), any::<f64>(), any::<u64>()), 0..20)) {
            let mut t = MetricTrace::new();
            for (step, grads, proxes, bits, f_gap, dist_sq, wall_ns) in rows {
                t.rows.push(TraceRow { step, grads, proxes, bits, f_gap, dist_sq, wall_ns });
            }
            let s = t.to_csv_string();
            prop_assert!(!s.contains('\r'));
            let back = MetricTrace::read_csv_from(s.as_bytes()).unwrap();
            prop_assert!(back.same_metrics(&t));
            prop_assert_eq!(back.to_csv_string(), s);
        }
    }
}
