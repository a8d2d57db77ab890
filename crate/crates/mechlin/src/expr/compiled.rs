//! Straight-line compiled evaluator for simulation inner loops.
//!
//! Expressions are flattened into a register program with hash-consed
//! subexpressions (each distinct subtree computed once).  Parameters are
//! resolved to constants at compile time; variables index into a flat
//! `[x..., v...]` slice.  Runtime does no error checking — domain problems
//! surface as non-finite values, which the simulator watches for.

use super::{exp_as_i64, Expr, Func};
use num::ToPrimitive;
use std::collections::HashMap;

type Reg = u32;

#[derive(Clone, Copy, Debug)]
enum Instr {
    Var { dst: Reg, index: u32 },
    Const { dst: Reg, value: f64 },
    Add { dst: Reg, a: Reg, b: Reg },
    Mul { dst: Reg, a: Reg, b: Reg },
    Powi { dst: Reg, a: Reg, k: i32 },
    Powf { dst: Reg, a: Reg, p: f64 },
    Sin { dst: Reg, a: Reg },
    Cos { dst: Reg, a: Reg },
    Tan { dst: Reg, a: Reg },
    Exp { dst: Reg, a: Reg },
    Ln { dst: Reg, a: Reg },
}

#[derive(Clone, Debug, thiserror::Error)]
pub enum CompileError {
    #[error("parameter '{0}' has no bound value")]
    UnboundParam(String),
    #[error("variable x{0} exceeds the declared input width {1}")]
    VarOutOfRange(usize, usize),
}

/// Several expressions compiled into one shared program (common
/// subexpressions across components are computed once).
#[derive(Clone, Debug)]
pub struct CompiledVec {
    prog: Vec<Instr>,
    outputs: Vec<Reg>,
    n_slots: usize,
    n_inputs: usize,
}

/// A single compiled expression.
#[derive(Clone, Debug)]
pub struct CompiledProgram {
    inner: CompiledVec,
}

impl CompiledProgram {
    pub fn compile(
        e: &Expr,
        n_inputs: usize,
        params: &std::collections::BTreeMap<String, f64>,
    ) -> Result<CompiledProgram, CompileError> {
        Ok(CompiledProgram {
            inner: CompiledVec::compile(std::slice::from_ref(e), n_inputs, params)?,
        })
    }

    pub fn eval(&self, inputs: &[f64], scratch: &mut Vec<f64>) -> f64 {
        let mut out = [0.0];
        self.inner.eval_into(inputs, scratch, &mut out);
        out[0]
    }
}

impl CompiledVec {
    pub fn compile(
        exprs: &[Expr],
        n_inputs: usize,
        params: &std::collections::BTreeMap<String, f64>,
    ) -> Result<CompiledVec, CompileError> {
        let mut b = Builder {
            prog: Vec::new(),
            slots: HashMap::new(),
            next: 0,
            n_inputs,
            params,
        };
        let mut outputs = Vec::with_capacity(exprs.len());
        for e in exprs {
            outputs.push(b.emit(e)?);
        }
        Ok(CompiledVec {
            prog: b.prog,
            outputs,
            n_slots: b.next as usize,
            n_inputs,
        })
    }

    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    pub fn instruction_count(&self) -> usize {
        self.prog.len()
    }

    /// Evaluate all outputs; `scratch` is resized once and reused across
    /// calls.  `out` must have `len()` entries.
    pub fn eval_into(&self, inputs: &[f64], scratch: &mut Vec<f64>, out: &mut [f64]) {
        debug_assert!(inputs.len() >= self.n_inputs);
        debug_assert_eq!(out.len(), self.outputs.len());
        if scratch.len() < self.n_slots {
            scratch.resize(self.n_slots, 0.0);
        }
        let s = &mut scratch[..];
        for ins in &self.prog {
            match *ins {
                Instr::Var { dst, index } => s[dst as usize] = inputs[index as usize],
                Instr::Const { dst, value } => s[dst as usize] = value,
                Instr::Add { dst, a, b } => s[dst as usize] = s[a as usize] + s[b as usize],
                Instr::Mul { dst, a, b } => s[dst as usize] = s[a as usize] * s[b as usize],
                Instr::Powi { dst, a, k } => s[dst as usize] = s[a as usize].powi(k),
                Instr::Powf { dst, a, p } => s[dst as usize] = s[a as usize].powf(p),
                Instr::Sin { dst, a } => s[dst as usize] = s[a as usize].sin(),
                Instr::Cos { dst, a } => s[dst as usize] = s[a as usize].cos(),
                Instr::Tan { dst, a } => s[dst as usize] = s[a as usize].tan(),
                Instr::Exp { dst, a } => s[dst as usize] = s[a as usize].exp(),
                Instr::Ln { dst, a } => s[dst as usize] = s[a as usize].ln(),
            }
        }
        for (o, reg) in out.iter_mut().zip(&self.outputs) {
            *o = s[*reg as usize];
        }
    }
}

struct Builder<'a> {
    prog: Vec<Instr>,
    slots: HashMap<Expr, Reg>,
    next: Reg,
    n_inputs: usize,
    params: &'a std::collections::BTreeMap<String, f64>,
}

impl<'a> Builder<'a> {
    fn fresh(&mut self) -> Reg {
        let r = self.next;
        self.next += 1;
        r
    }

    fn emit(&mut self, e: &Expr) -> Result<Reg, CompileError> {
        if let Some(&r) = self.slots.get(e) {
            return Ok(r);
        }
        let dst = match e {
            Expr::Const(c) => {
                let dst = self.fresh();
                self.prog.push(Instr::Const {
                    dst,
                    value: c.to_f64().unwrap_or(f64::NAN),
                });
                dst
            }
            Expr::Var(i) => {
                if *i > self.n_inputs {
                    return Err(CompileError::VarOutOfRange(*i, self.n_inputs));
                }
                let dst = self.fresh();
                self.prog.push(Instr::Var {
                    dst,
                    index: (*i - 1) as u32,
                });
                dst
            }
            Expr::Param(name) => {
                let value = *self
                    .params
                    .get(name)
                    .ok_or_else(|| CompileError::UnboundParam(name.clone()))?;
                let dst = self.fresh();
                self.prog.push(Instr::Const { dst, value });
                dst
            }
            Expr::Add(ts) => self.fold_binary(ts, true)?,
            Expr::Mul(ts) => self.fold_binary(ts, false)?,
            Expr::Pow(b, r) => {
                let a = self.emit(b)?;
                let dst = self.fresh();
                match exp_as_i64(r).and_then(|k| i32::try_from(k).ok()) {
                    Some(k) => self.prog.push(Instr::Powi { dst, a, k }),
                    None => self.prog.push(Instr::Powf {
                        dst,
                        a,
                        p: r.to_f64().unwrap_or(f64::NAN),
                    }),
                }
                dst
            }
            Expr::Apply(f, arg) => {
                let a = self.emit(arg)?;
                match f {
                    Func::Sec => {
                        let c = self.fresh();
                        self.prog.push(Instr::Cos { dst: c, a });
                        let dst = self.fresh();
                        self.prog.push(Instr::Powi { dst, a: c, k: -1 });
                        dst
                    }
                    _ => {
                        let dst = self.fresh();
                        let ins = match f {
                            Func::Sin => Instr::Sin { dst, a },
                            Func::Cos => Instr::Cos { dst, a },
                            Func::Tan => Instr::Tan { dst, a },
                            Func::Exp => Instr::Exp { dst, a },
                            Func::Ln => Instr::Ln { dst, a },
                            Func::Sec => unreachable!(),
                        };
                        self.prog.push(ins);
                        dst
                    }
                }
            }
        };
        self.slots.insert(e.clone(), dst);
        Ok(dst)
    }

    fn fold_binary(
        &mut self,
        terms: &[std::sync::Arc<Expr>],
        additive: bool,
    ) -> Result<Reg, CompileError> {
        let mut acc = self.emit(&terms[0])?;
        for t in &terms[1..] {
            let rhs = self.emit(t)?;
            let dst = self.fresh();
            self.prog.push(if additive {
                Instr::Add { dst, a: acc, b: rhs }
            } else {
                Instr::Mul { dst, a: acc, b: rhs }
            });
            acc = dst;
        }
        Ok(acc)
    }
}
