//! Plain-text checkpoints.
//!
//! ```text
//! distgan-checkpoint 1
//! step <global step>
//! set <name> <tensor count> t <adam step>
//! param <name> <d0,d1,..>
//! value <v> <v> ...
//! m <v> ...
//! v <v> ...
//! optimizer <name> <tensor count> t <adam step>
//! moment <d0,d1,..>
//! m <v> ...
//! v <v> ...
//! ```
//!
//! Numbers are written with 17 significant digits, which round-trips every
//! `f64` exactly.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::nn::{AdamState, ParameterSet};
use crate::tensor::Tensor;

const MAGIC: &str = "distgan-checkpoint 1";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub step: u64,
    pub sets: Vec<(String, ParameterSet)>,
    /// Optimizer states that are not owned by any parameter set.
    pub optimizers: Vec<(String, AdamState)>,
}

fn shape_str(shape: &[usize]) -> String {
    if shape.is_empty() {
        "-".to_string()
    } else {
        shape.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
    }
}

fn push_values(out: &mut String, key: &str, t: &Tensor) {
    out.push_str(key);
    for v in t.data() {
        // infallible for String
        let _ = write!(out, " {v:.16e}");
    }
    out.push('\n');
}

impl Checkpoint {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(MAGIC);
        out.push('\n');
        let _ = writeln!(out, "step {}", self.step);
        for (name, set) in &self.sets {
            let _ = writeln!(out, "set {name} {} t {}", set.len(), set.adam.t);
            for (i, (pname, value)) in set.names.iter().zip(&set.values).enumerate() {
                let _ = writeln!(out, "param {pname} {}", shape_str(value.shape()));
                push_values(&mut out, "value", value);
                push_values(&mut out, "m", &set.adam.m[i]);
                push_values(&mut out, "v", &set.adam.v[i]);
            }
        }
        for (name, st) in &self.optimizers {
            let _ = writeln!(out, "optimizer {name} {} t {}", st.m.len(), st.t);
            for (m, v) in st.m.iter().zip(&st.v) {
                let _ = writeln!(out, "moment {}", shape_str(m.shape()));
                push_values(&mut out, "m", m);
                push_values(&mut out, "v", v);
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = Lines {
            inner: text.lines().enumerate(),
            line: 0,
        };
        let first = lines.next_line()?;
        if first != MAGIC {
            return Err(lines.err(format!("expected `{MAGIC}`")));
        }
        let step_line = lines.next_line()?;
        let step = match step_line.split_once(' ') {
            Some(("step", v)) => v.parse().map_err(|e| lines.err(format!("bad step: {e}")))?,
            _ => return Err(lines.err("expected `step <n>`".into())),
        };
        let mut ck = Checkpoint {
            step,
            sets: Vec::new(),
            optimizers: Vec::new(),
        };
        while let Some(header) = lines.next_opt() {
            let toks: Vec<&str> = header.split_whitespace().collect();
            match toks.as_slice() {
                ["set", name, count, "t", t] => {
                    let count: usize = lines.num(count)?;
                    let t: u64 = lines.num(t)?;
                    let mut set = ParameterSet {
                        names: Vec::new(),
                        values: Vec::new(),
                        adam: AdamState {
                            m: Vec::new(),
                            v: Vec::new(),
                            t,
                        },
                    };
                    for _ in 0..count {
                        let l = lines.next_line()?;
                        let toks: Vec<&str> = l.split_whitespace().collect();
                        let (pname, shape) = match toks.as_slice() {
                            ["param", pname, shape] => (pname.to_string(), lines.shape(shape)?),
                            _ => return Err(lines.err("expected `param <name> <shape>`".into())),
                        };
                        set.names.push(pname);
                        set.values.push(lines.tensor("value", &shape)?);
                        set.adam.m.push(lines.tensor("m", &shape)?);
                        set.adam.v.push(lines.tensor("v", &shape)?);
                    }
                    ck.sets.push((name.to_string(), set));
                }
                ["optimizer", name, count, "t", t] => {
                    let count: usize = lines.num(count)?;
                    let t: u64 = lines.num(t)?;
                    let mut st = AdamState {
                        m: Vec::new(),
                        v: Vec::new(),
                        t,
                    };
                    for _ in 0..count {
                        let l = lines.next_line()?;
                        let shape = match l.split_once(' ') {
                            Some(("moment", s)) => lines.shape(s)?,
                            _ => return Err(lines.err("expected `moment <shape>`".into())),
                        };
                        st.m.push(lines.tensor("m", &shape)?);
                        st.v.push(lines.tensor("v", &shape)?);
                    }
                    ck.optimizers.push((name.to_string(), st));
                }
                _ => return Err(lines.err(format!("unexpected line `{header}`"))),
            }
        }
        Ok(ck)
    }
}

struct Lines<'a, I: Iterator<Item = (usize, &'a str)>> {
    inner: I,
    line: usize,
}

impl<'a, I: Iterator<Item = (usize, &'a str)>> Lines<'a, I> {
    fn next_opt(&mut self) -> Option<&'a str> {
        for (i, l) in self.inner.by_ref() {
            self.line = i + 1;
            if !l.trim().is_empty() {
                return Some(l.trim_end());
            }
        }
        None
    }

    fn next_line(&mut self) -> Result<&'a str> {
        self.next_opt().ok_or_else(|| self.err("unexpected end of checkpoint".into()))
    }

    fn err(&self, msg: String) -> Error {
        Error::Checkpoint {
            line: self.line,
            msg,
        }
    }

    fn num<T: std::str::FromStr>(&self, s: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        s.parse().map_err(|e| self.err(format!("bad number `{s}`: {e}")))
    }

    fn shape(&self, s: &str) -> Result<Vec<usize>> {
        if s == "-" {
            return Ok(Vec::new());
        }
        s.split(',').map(|d| self.num(d)).collect()
    }

    fn tensor(&mut self, key: &str, shape: &[usize]) -> Result<Tensor> {
        let l = self.next_line()?;
        let mut toks = l.split_whitespace();
        if toks.next() != Some(key) {
            return Err(self.err(format!("expected `{key}` row")));
        }
        let data = toks.map(|t| self.num::<f64>(t)).collect::<Result<Vec<_>>>()?;
        Tensor::new(shape.to_vec(), data).map_err(|e| self.err(e.to_string()))
    }
}
