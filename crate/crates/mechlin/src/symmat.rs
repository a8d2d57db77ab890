//! Small symbolic matrix helpers over `Expr` (dense, n ≤ 6 territory).
//! Inversion goes through adjugate/determinant, which is exact and keeps
//! every entry a closed-form expression.

use crate::expr::nf::simplify;
use crate::expr::Expr;

pub type SymMatrix = Vec<Vec<Expr>>;
pub type SymVector = Vec<Expr>;

pub fn identity(n: usize) -> SymMatrix {
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if i == j { Expr::one() } else { Expr::zero() })
                .collect()
        })
        .collect()
}

pub fn transpose(a: &SymMatrix) -> SymMatrix {
    let rows = a.len();
    let cols = if rows == 0 { 0 } else { a[0].len() };
    (0..cols)
        .map(|j| (0..rows).map(|i| a[i][j].clone()).collect())
        .collect()
}

pub fn matvec(a: &SymMatrix, x: &SymVector) -> SymVector {
    a.iter()
        .map(|row| {
            simplify(&Expr::add(
                row.iter()
                    .zip(x)
                    .map(|(aij, xj)| aij.clone() * xj.clone())
                    .collect(),
            ))
        })
        .collect()
}

pub fn matmul(a: &SymMatrix, b: &SymMatrix) -> SymMatrix {
    let n = a.len();
    let p = if b.is_empty() { 0 } else { b[0].len() };
    let k_dim = b.len();
    (0..n)
        .map(|i| {
            (0..p)
                .map(|j| {
                    simplify(&Expr::add(
                        (0..k_dim)
                            .map(|k| a[i][k].clone() * b[k][j].clone())
                            .collect(),
                    ))
                })
                .collect()
        })
        .collect()
}

/// Determinant by cofactor expansion along the first row, with minors
/// simplified as they are formed.
pub fn det(a: &SymMatrix) -> Expr {
    let n = a.len();
    match n {
        0 => Expr::one(),
        1 => simplify(&a[0][0]),
        _ => {
            let mut terms = Vec::with_capacity(n);
            for j in 0..n {
                if a[0][j].is_const_zero() {
                    continue;
                }
                let minor = minor_matrix(a, 0, j);
                let cof = det(&minor);
                let signed = if j % 2 == 0 {
                    a[0][j].clone() * cof
                } else {
                    Expr::neg(a[0][j].clone() * cof)
                };
                terms.push(signed);
            }
            simplify(&Expr::add(terms))
        }
    }
}

fn minor_matrix(a: &SymMatrix, row: usize, col: usize) -> SymMatrix {
    a.iter()
        .enumerate()
        .filter(|(i, _)| *i != row)
        .map(|(_, r)| {
            r.iter()
                .enumerate()
                .filter(|(j, _)| *j != col)
                .map(|(_, e)| e.clone())
                .collect()
        })
        .collect()
}

/// Adjugate (transposed cofactor matrix): `a * adjugate(a) = det(a) * I`.
pub fn adjugate(a: &SymMatrix) -> SymMatrix {
    let n = a.len();
    if n == 1 {
        return vec![vec![Expr::one()]];
    }
    let mut adj = vec![vec![Expr::zero(); n]; n];
    for i in 0..n {
        for j in 0..n {
            let cof = det(&minor_matrix(a, i, j));
            let signed = if (i + j) % 2 == 0 {
                cof
            } else {
                Expr::neg(cof)
            };
            adj[j][i] = simplify(&signed);
        }
    }
    adj
}

/// Symbolic inverse as (adjugate / det, det).  The caller decides whether
/// the determinant's zero-verdict is acceptable.
pub fn inverse(a: &SymMatrix) -> (SymMatrix, Expr) {
    let d = det(a);
    let adj = adjugate(a);
    let inv = adj
        .iter()
        .map(|row| {
            row.iter()
                .map(|e| simplify(&Expr::div(e.clone(), d.clone())))
                .collect()
        })
        .collect();
    (inv, d)
}

/// Jacobian ∂φ^i/∂x^j of a vector of expressions in n variables.
pub fn jacobian(phi: &[Expr], n: usize) -> SymMatrix {
    phi.iter()
        .map(|p| {
            (1..=n)
                .map(|j| simplify(&crate::expr::diff::diff(p, j)))
                .collect()
        })
        .collect()
}
