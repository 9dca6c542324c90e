//! Two-party matrix multiplication built from scalar-product rounds.
//!
//! `U = (A * B + V) mod N` is assembled cell by cell: entry `(i, j)` comes
//! from one full protocol run on row i of `A` against column j of `B` with
//! the masking offset `V[i][j]`, using fresh randomness per cell.

use crate::protocol::{
    run_protocol, AliceStrategy, BobStrategy, ProtocolError, ProtocolParams, Transcript,
};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MatmulError {
    #[error("matrices must have at least one row and column")]
    EmptyMatrix,
    #[error("row {0} has a different length than the first row")]
    RaggedMatrix(usize),
    #[error("left matrix is {k}x{n}, so the right matrix needs {n} rows, got {got}")]
    InnerDimensionMismatch { k: usize, n: usize, got: usize },
    #[error("offset matrix must be {rows}x{cols}, got {got_rows}x{got_cols}")]
    OffsetShapeMismatch { rows: usize, cols: usize, got_rows: usize, got_cols: usize },
    #[error("entry {value} is outside [0, {bound})")]
    EntryOutOfRange { value: u64, bound: u64 },
    #[error("protocol run for cell ({row}, {col}) ended without an output")]
    DetectedAt { row: usize, col: usize },
    #[error("csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

/// Validated inputs: `a` is k x n, `b` is n x c, `v` is k x c, and every
/// entry lies in `[0, 2^m)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatrixInput {
    a: Vec<Vec<u64>>,
    b: Vec<Vec<u64>>,
    v: Vec<Vec<u64>>,
    m: u32,
}

fn shape_of(mat: &[Vec<u64>]) -> Result<(usize, usize), MatmulError> {
    let rows = mat.len();
    if rows == 0 || mat[0].is_empty() {
        return Err(MatmulError::EmptyMatrix);
    }
    let cols = mat[0].len();
    for (i, row) in mat.iter().enumerate() {
        if row.len() != cols {
            return Err(MatmulError::RaggedMatrix(i));
        }
    }
    Ok((rows, cols))
}

impl MatrixInput {
    pub fn new(
        a: Vec<Vec<u64>>,
        b: Vec<Vec<u64>>,
        v: Vec<Vec<u64>>,
        m: u32,
    ) -> Result<Self, MatmulError> {
        let (k, n) = shape_of(&a)?;
        let (b_rows, c) = shape_of(&b)?;
        if b_rows != n {
            return Err(MatmulError::InnerDimensionMismatch { k, n, got: b_rows });
        }
        let (v_rows, v_cols) = shape_of(&v)?;
        if (v_rows, v_cols) != (k, c) {
            return Err(MatmulError::OffsetShapeMismatch {
                rows: k,
                cols: c,
                got_rows: v_rows,
                got_cols: v_cols,
            });
        }
        let params = ProtocolParams::new(m, n)?;
        let bound = params.output_modulus();
        for mat in [&a, &b, &v] {
            for row in mat.iter() {
                for &value in row {
                    if value >= bound {
                        return Err(MatmulError::EntryOutOfRange { value, bound });
                    }
                }
            }
        }
        Ok(MatrixInput { a, b, v, m })
    }

    /// Rows of the left matrix.
    pub fn rows(&self) -> usize {
        self.a.len()
    }

    /// Shared inner dimension: columns of `a`, rows of `b`.
    pub fn inner(&self) -> usize {
        self.a[0].len()
    }

    /// Columns of the right matrix.
    pub fn cols(&self) -> usize {
        self.b[0].len()
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    fn row_of_a(&self, i: usize) -> Vec<u64> {
        self.a[i].clone()
    }

    fn col_of_b(&self, j: usize) -> Vec<u64> {
        self.b.iter().map(|row| row[j]).collect()
    }
}

/// One cell's protocol run, kept for reproduction.
#[derive(Debug, Clone, Serialize)]
pub struct CellRun {
    pub row: usize,
    pub col: usize,
    pub seed: u64,
    pub transcript: Transcript,
}

/// The assembled product plus every cell's transcript.
#[derive(Debug, Clone, Serialize)]
pub struct MatmulOutcome {
    pub u: Vec<Vec<u64>>,
    pub cells: Vec<CellRun>,
}

fn cell_seed(seed: u64, row: usize, col: usize) -> u64 {
    let mut z = seed ^ (((row as u64) << 32) | col as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs one scalar-product exchange per output cell and assembles
/// `U[i][j] = (row_i(a) . col_j(b) + v[i][j]) mod N`. Aborts with the cell
/// position if any run ends without an output.
pub fn run_matmul(input: &MatrixInput, seed: u64) -> Result<MatmulOutcome, MatmulError> {
    let params = ProtocolParams::new(input.m(), input.inner())?;
    let mut u = vec![vec![0u64; input.cols()]; input.rows()];
    let mut cells = Vec::with_capacity(input.rows() * input.cols());
    for i in 0..input.rows() {
        let x = input.row_of_a(i);
        for j in 0..input.cols() {
            let y = input.col_of_b(j);
            let run_seed = cell_seed(seed, i, j);
            let out = run_protocol(
                &x,
                &y,
                input.v[i][j],
                &params,
                &AliceStrategy::Honest,
                &BobStrategy::Honest,
                run_seed,
            )?;
            let value = out
                .transcript
                .output
                .ok_or(MatmulError::DetectedAt { row: i, col: j })?;
            u[i][j] = value;
            cells.push(CellRun { row: i, col: j, seed: run_seed, transcript: out.transcript });
        }
    }
    Ok(MatmulOutcome { u, cells })
}

/// Classical reference product `(a * b + v) mod N`.
pub fn plain_matmul_oracle(input: &MatrixInput) -> Vec<Vec<u64>> {
    let nn = 1u64 << input.m();
    let mut u = vec![vec![0u64; input.cols()]; input.rows()];
    for i in 0..input.rows() {
        for j in 0..input.cols() {
            let dot: u64 = (0..input.inner()).map(|t| input.a[i][t] * input.b[t][j]).sum();
            u[i][j] = (dot + input.v[i][j]) % nn;
        }
    }
    u
}

/// Renders a matrix as CSV: a `k,n,m` header, the sizes, then one row per
/// line.
pub fn matrix_to_csv(mat: &[Vec<u64>], m: u32) -> Result<String, MatmulError> {
    let (rows, cols) = shape_of(mat)?;
    let mut out = String::from("k,n,m\n");
    out.push_str(&format!("{rows},{cols},{m}\n"));
    for row in mat {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    Ok(out)
}

/// Parses the CSV format written by [`matrix_to_csv`].
pub fn matrix_from_csv(text: &str) -> Result<(Vec<Vec<u64>>, u32), MatmulError> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| MatmulError::Csv("empty input".to_string()))?;
    if header.trim() != "k,n,m" {
        return Err(MatmulError::Csv(format!("expected header k,n,m, got {header:?}")));
    }
    let sizes = lines.next().ok_or_else(|| MatmulError::Csv("missing size line".to_string()))?;
    let parts: Vec<&str> = sizes.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(MatmulError::Csv(format!("size line needs k,n,m, got {sizes:?}")));
    }
    let parse = |s: &str| {
        s.parse::<u64>().map_err(|_| MatmulError::Csv(format!("bad integer {s:?}")))
    };
    let rows = parse(parts[0])? as usize;
    let cols = parse(parts[1])? as usize;
    let m = parse(parts[2])? as u32;
    let mut mat = Vec::with_capacity(rows);
    for _ in 0..rows {
        let line = lines
            .next()
            .ok_or_else(|| MatmulError::Csv(format!("expected {rows} data rows")))?;
        let row: Vec<u64> = line
            .split(',')
            .map(|s| parse(s.trim()))
            .collect::<Result<_, _>>()?;
        if row.len() != cols {
            return Err(MatmulError::Csv(format!(
                "row has {} entries, expected {cols}",
                row.len()
            )));
        }
        mat.push(row);
    }
    if lines.next().is_some() {
        return Err(MatmulError::Csv("trailing data after matrix rows".to_string()));
    }
    Ok((mat, m))
}
