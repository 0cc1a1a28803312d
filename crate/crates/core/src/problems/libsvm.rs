//! LIBSVM text format: `label idx:val idx:val ...`, 1-based indices.

use ndarray::Array2;

use crate::error::{OptError, Result};

/// Sorted `(index, value)` pairs, 0-based.
pub type SparseRow = Vec<(usize, f64)>;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub rows: Vec<SparseRow>,
    pub labels: Vec<f64>,
    pub n_features: usize,
}

impl Dataset {
    pub fn new(rows: Vec<SparseRow>, labels: Vec<f64>, n_features: usize) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(OptError::Dimension(format!(
                "{} rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        for (r, row) in rows.iter().enumerate() {
            for w in row.windows(2) {
                if w[0].0 >= w[1].0 {
                    return Err(OptError::Domain(format!("row {r}: indices not increasing")));
                }
            }
            if let Some(&(j, _)) = row.last() {
                if j >= n_features {
                    return Err(OptError::Domain(format!(
                        "row {r}: index {j} out of range for {n_features} features"
                    )));
                }
            }
        }
        Ok(Dataset {
            rows,
            labels,
            n_features,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.rows.len()
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut a = Array2::zeros((self.n_samples(), self.n_features));
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                a[[i, j]] = v;
            }
        }
        a
    }

    pub fn from_dense(a: &Array2<f64>, labels: Vec<f64>) -> Result<Self> {
        let rows = a
            .rows()
            .into_iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(j, v)| (j, *v))
                    .collect()
            })
            .collect();
        Dataset::new(rows, labels, a.ncols())
    }

    /// Rows `idx` in the given order.
    pub fn select(&self, idx: &[usize]) -> Dataset {
        Dataset {
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            n_features: self.n_features,
        }
    }
}

fn err(line: usize, msg: impl Into<String>) -> OptError {
    OptError::Parse { line, msg: msg.into() }
}

pub fn parse_libsvm(text: &[u8]) -> Result<Dataset> {
    let text = std::str::from_utf8(text).map_err(|e| err(0, format!("not utf-8: {e}")))?;
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut n_features = 0usize;

    for (lineno, raw) in text.split('\n').enumerate() {
        let line_no = lineno + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        let line = match line.find('#') {
            Some(p) => &line[..p],
            None => line,
        };
        let mut tokens = line.split_ascii_whitespace();
        let Some(label_tok) = tokens.next() else {
            continue;
        };
        let label: f64 = label_tok
            .parse()
            .map_err(|_| err(line_no, format!("bad label `{label_tok}`")))?;

        let mut row: SparseRow = Vec::new();
        for tok in tokens {
            let (i, v) = tok
                .split_once(':')
                .ok_or_else(|| err(line_no, format!("malformed pair `{tok}`")))?;
            let idx: usize = i.parse().map_err(|_| err(line_no, format!("bad index `{i}`")))?;
            if idx == 0 {
                return Err(err(line_no, "indices are 1-based"));
            }
            let val: f64 = v.parse().map_err(|_| err(line_no, format!("bad value `{v}`")))?;
            if let Some(&(prev, _)) = row.last() {
                if idx - 1 <= prev {
                    return Err(err(line_no, format!("index {idx} not increasing")));
                }
            }
            row.push((idx - 1, val));
            n_features = n_features.max(idx);
        }
        rows.push(row);
        labels.push(label);
    }

    remap_labels(&mut labels);
    Ok(Dataset {
        rows,
        labels,
        n_features,
    })
}

/// {-1,+1} and {1,2} label sets become {0,1}; anything else is kept.
fn remap_labels(labels: &mut [f64]) {
    if labels.is_empty() {
        return;
    }
    if labels.iter().all(|&l| l == -1.0 || l == 1.0) {
        for l in labels.iter_mut() {
            *l = if *l > 0.0 { 1.0 } else { 0.0 };
        }
    } else if labels.iter().all(|&l| l == 1.0 || l == 2.0) {
        for l in labels.iter_mut() {
            *l -= 1.0;
        }
    }
}

/// Inverse of [`parse_libsvm`] for datasets whose labels are already
/// normalized. Uses shortest round-trip float formatting.
pub fn serialize(ds: &Dataset) -> String {
    let mut out = String::new();
    for (row, label) in ds.rows.iter().zip(&ds.labels) {
        out.push_str(&format!("{label}"));
        for &(j, v) in row {
            out.push_str(&format!(" {}:{}", j + 1, v));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_row() {
        let ds = parse_libsvm(b"1 1:2.0 3:1.0\n").unwrap();
        assert_eq!(ds.n_samples(), 1);
        assert_eq!(ds.rows[0], vec![(0, 2.0), (2, 1.0)]);
        assert_eq!(ds.labels, vec![1.0]);
        assert_eq!(ds.n_features, 3);
    }

    #[test]
    fn empty_input() {
        let ds = parse_libsvm(b"").unwrap();
        assert_eq!(ds.n_samples(), 0);
        assert_eq!(ds.n_features, 0);
    }

    // naive reference: split on spaces and colons, no comment handling
    fn reference(text: &str) -> (Vec<Vec<(usize, f64)>>, Vec<f64>) {
        let mut rows = vec![];
        let mut labels = vec![];
        for line in text.lines() {
            let parts: Vec<&str> = line.split(' ').collect();
            labels.push(parts[0].parse::<f64>().unwrap());
            rows.push(
                parts[1..]
                    .iter()
                    .map(|p| {
                        let (a, b) = p.split_once(':').unwrap();
                        (a.parse::<usize>().unwrap() - 1, b.parse::<f64>().unwrap())
                    })
                    .collect(),
            );
        }
        (rows, labels)
    }

    #[test]
    fn pm_one_labels_remapped() {
        let text = "-1 2:5\n+1 1:1\n";
        let ds = parse_libsvm(text.as_bytes()).unwrap();
        let (rows, labels) = reference(text);
        assert_eq!(ds.rows, rows);
        let mapped: Vec<f64> = labels.iter().map(|&l| if l > 0.0 { 1.0 } else { 0.0 }).collect();
        assert_eq!(ds.labels, mapped);
        assert_eq!(ds.n_features, 2);
    }

    #[test]
    fn one_two_labels_remapped() {
        let ds = parse_libsvm(b"2 1:1\n1 1:3\n").unwrap();
        assert_eq!(ds.labels, vec![1.0, 0.0]);
    }

    #[test]
    fn regression_labels_kept() {
        let ds = parse_libsvm(b"0.5 1:1\n3 2:1\n").unwrap();
        assert_eq!(ds.labels, vec![0.5, 3.0]);
    }

    #[test]
    fn comments_and_crlf() {
        let ds = parse_libsvm(b"# header\r\n1 1:1 # trailing\r\n\r\n0 2:4\r\n").unwrap();
        assert_eq!(ds.n_samples(), 2);
        assert_eq!(ds.rows[1], vec![(1, 4.0)]);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = parse_libsvm(b"1 1:1\n1 3:1 2:1\n").unwrap_err();
        assert!(matches!(e, OptError::Parse { line: 2, .. }), "{e:?}");
        let e = parse_libsvm(b"1 1:1\n\n1 x:1\n").unwrap_err();
        assert!(matches!(e, OptError::Parse { line: 3, .. }));
        let e = parse_libsvm(b"1 11\n").unwrap_err();
        assert!(matches!(e, OptError::Parse { line: 1, .. }));
        let e = parse_libsvm(b"abc 1:1\n").unwrap_err();
        assert!(matches!(e, OptError::Parse { line: 1, .. }));
        let e = parse_libsvm(b"1 0:1\n").unwrap_err();
        assert!(matches!(e, OptError::Parse { line: 1, .. }));
    }

    #[test]
    fn dense_roundtrip() {
        let ds = parse_libsvm(b"1 1:2 3:-1\n0 2:0.5\n").unwrap();
        let back = Dataset::from_dense(&ds.to_dense(), ds.labels.clone()).unwrap();
        assert_eq!(back, ds);
    }
}
