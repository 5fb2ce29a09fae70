//! Plain-text matrix and subalgebra files.
//!
//! Matrix: a `rows cols` line followed by `rows * cols` lines of `re im`
//! in row-major order. Subalgebra: an `ambient_dim dim` line followed by
//! `dim` matrices. Blank lines and lines starting with `#` are ignored.

use std::fmt::Write as _;
use std::path::Path;

use crate::algebra::Subalgebra;
use crate::error::{Error, Result};
use crate::linalg::{Matrix, ToleranceProfile, C64};

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            inner: text.lines().enumerate(),
            last: 0,
        }
    }

    fn next_fields(&mut self) -> Result<Vec<&'a str>> {
        for (i, line) in self.inner.by_ref() {
            self.last = i + 1;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            return Ok(t.split_whitespace().collect());
        }
        Err(Error::Parse {
            line: self.last + 1,
            msg: "unexpected end of input".into(),
        })
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            line: self.last,
            msg: msg.into(),
        }
    }

    fn pair<T: std::str::FromStr>(&mut self) -> Result<(T, T)> {
        let f = self.next_fields()?;
        if f.len() != 2 {
            return Err(self.err(format!("expected 2 fields, found {}", f.len())));
        }
        let a = f[0].parse().map_err(|_| self.err(format!("bad number {:?}", f[0])))?;
        let b = f[1].parse().map_err(|_| self.err(format!("bad number {:?}", f[1])))?;
        Ok((a, b))
    }

    fn matrix(&mut self) -> Result<Matrix> {
        let (rows, cols): (usize, usize) = self.pair()?;
        if rows == 0 || cols == 0 {
            return Err(self.err("matrix dimensions must be positive"));
        }
        let mut entries = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            let (re, im): (f64, f64) = self.pair()?;
            if !re.is_finite() || !im.is_finite() {
                return Err(self.err("non-finite entry"));
            }
            entries.push(C64::new(re, im));
        }
        Ok(Matrix::from_row_slice(rows, cols, &entries))
    }

    fn finish(&mut self) -> Result<()> {
        match self.next_fields() {
            Ok(_) => Err(self.err("trailing content")),
            Err(_) => Ok(()),
        }
    }
}

pub fn write_matrix(out: &mut String, x: &Matrix) {
    let _ = writeln!(out, "{} {}", x.nrows(), x.ncols());
    for i in 0..x.nrows() {
        for j in 0..x.ncols() {
            let z = x[(i, j)];
            let _ = writeln!(out, "{} {}", z.re, z.im);
        }
    }
}

pub fn matrix_to_string(x: &Matrix) -> String {
    let mut s = String::new();
    write_matrix(&mut s, x);
    s
}

pub fn parse_matrix(text: &str) -> Result<Matrix> {
    let mut lines = Lines::new(text);
    let m = lines.matrix()?;
    lines.finish()?;
    Ok(m)
}

pub fn subalgebra_to_string(a: &Subalgebra) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{} {}", a.ambient_dim(), a.dim());
    for b in a.basis() {
        write_matrix(&mut s, b);
    }
    s
}

/// Parses a subalgebra file; the listed matrices may be any spanning set
/// of a unital *-algebra and are re-orthonormalized.
pub fn parse_subalgebra(text: &str, tol: &ToleranceProfile) -> Result<Subalgebra> {
    let mut lines = Lines::new(text);
    let (n, dim): (usize, usize) = lines.pair()?;
    if n == 0 || dim == 0 {
        return Err(lines.err("dimensions must be positive"));
    }
    let mut mats = Vec::with_capacity(dim);
    for _ in 0..dim {
        let m = lines.matrix()?;
        if m.shape() != (n, n) {
            return Err(lines.err(format!("expected a {n}x{n} matrix, found {:?}", m.shape())));
        }
        mats.push(m);
    }
    lines.finish()?;
    Subalgebra::from_basis_checked(n, &mats, tol)
}

pub fn read_subalgebra(path: &Path, tol: &ToleranceProfile) -> Result<Subalgebra> {
    parse_subalgebra(&std::fs::read_to_string(path)?, tol)
}

pub fn write_subalgebra(path: &Path, a: &Subalgebra) -> Result<()> {
    std::fs::write(path, subalgebra_to_string(a))?;
    Ok(())
}

/// Rows of `[re, im]` pairs, for JSON output.
pub fn matrix_to_rows(x: &Matrix) -> Vec<Vec<[f64; 2]>> {
    (0..x.nrows())
        .map(|i| (0..x.ncols()).map(|j| [x[(i, j)].re, x[(i, j)].im]).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn matrix_text_layout() {
        let x = Matrix::from_row_slice(1, 2, &[C64::new(0.5, -1.0), C64::new(3.0, 0.0)]);
        assert_eq!(matrix_to_string(&x), "1 2\n0.5 -1\n3 0\n");
    }

    #[test]
    fn parse_rejects_malformed_input() {
        assert!(matches!(parse_matrix("2 2\n1 0\n"), Err(Error::Parse { .. })));
        assert!(matches!(parse_matrix("1 1\n1 x\n"), Err(Error::Parse { .. })));
        assert!(matches!(parse_matrix("1 1\n1 0\n5 5\n"), Err(Error::Parse { .. })));
        assert!(matches!(parse_matrix("1 1\nNaN 0\n"), Err(Error::Parse { .. })));
        let m = parse_matrix("# comment\n1 1\n\n2.5e-1 1E2\n").unwrap();
        assert_eq!(m[(0, 0)], C64::new(0.25, 100.0));
    }

    #[test]
    fn subalgebra_file_must_span_an_algebra() {
        let tol = ToleranceProfile::default();
        let text = "2 1\n2 2\n0 0\n1 0\n0 0\n0 0\n";
        assert!(matches!(parse_subalgebra(text, &tol), Err(Error::NotAnAlgebra(_))));
        let a = Subalgebra::diagonal(3);
        let back = parse_subalgebra(&subalgebra_to_string(&a), &tol).unwrap();
        assert_eq!(back.dim(), 3);
        assert!(back.span_distance(&a) < 1e-15);
    }

    proptest! {
        #[test]
        fn matrix_text_round_trips_exactly(
            rows in 1usize..4,
            cols in 1usize..4,
            seed in any::<u64>(),
        ) {
            let mut r = crate::rng::seeded(seed);
            let x = Matrix::from_fn(rows, cols, |_, _| crate::rng::complex_gaussian(&mut r) * 1e3);
            let back = parse_matrix(&matrix_to_string(&x)).unwrap();
            prop_assert_eq!(back, x);
        }
    }
}
