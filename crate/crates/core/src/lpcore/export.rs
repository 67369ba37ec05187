//! Plain-text dump of a standard-form program.
//!
//! Layout, one token group per line:
//!
//! ```text
//! gds-lp 1
//! vars <n> eq <neq> ub <nub>
//! layout <l> <p>            (or: layout none)
//! c
//! <n lines, one value each>
//! beq
//! <neq lines>
//! bub
//! <nub lines>
//! aeq <nnz>
//! <row> <col> <value>       (nnz lines, zero based, row-major order)
//! aub <nnz>
//! <row> <col> <value>
//! end
//! ```
//!
//! The program is `min c'z  s.t.  Aeq z = beq,  Aub z <= bub,  z >= 0`.
//! Values are written in shortest round-trip decimal form.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};

use super::{LinearProgram, VarLayout};
use crate::error::{GdsError, Result};

fn io_err(e: std::io::Error) -> GdsError {
    GdsError::Io {
        path: "<lp dump>".into(),
        source: e,
    }
}

pub fn write_standard_form<W: Write>(lp: &LinearProgram, mut out: W) -> Result<()> {
    let n = lp.num_vars();
    let mut body = || -> std::io::Result<()> {
        writeln!(out, "gds-lp 1")?;
        writeln!(out, "vars {} eq {} ub {}", n, lp.aeq.nrows(), lp.aub.nrows())?;
        match &lp.layout {
            Some(lay) => writeln!(out, "layout {} {}", lay.l(), lay.p())?,
            None => writeln!(out, "layout none")?,
        }
        for (name, v) in [("c", &lp.c), ("beq", &lp.beq), ("bub", &lp.bub)] {
            writeln!(out, "{name}")?;
            for x in v.iter() {
                writeln!(out, "{x}")?;
            }
        }
        for (name, m) in [("aeq", &lp.aeq), ("aub", &lp.aub)] {
            let nnz = m.iter().filter(|&&v| v != 0.0).count();
            writeln!(out, "{name} {nnz}")?;
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    let v = m[(i, j)];
                    if v != 0.0 {
                        writeln!(out, "{i} {j} {v}")?;
                    }
                }
            }
        }
        writeln!(out, "end")
    };
    body().map_err(io_err)
}

pub fn read_standard_form<R: BufRead>(input: R) -> Result<LinearProgram> {
    let mut lines = input.lines();
    let mut next = || -> Result<String> {
        match lines.next() {
            Some(Ok(l)) => Ok(l),
            Some(Err(e)) => Err(io_err(e)),
            None => Err(GdsError::Parse("unexpected end of lp dump".into())),
        }
    };
    let bad = |what: &str| GdsError::Parse(format!("malformed lp dump: {what}"));
    let num = |s: &str| -> Result<f64> {
        s.trim()
            .parse::<f64>()
            .map_err(|_| GdsError::Parse(format!("bad number '{s}'")))
    };
    let int = |s: &str| -> Result<usize> {
        s.trim()
            .parse::<usize>()
            .map_err(|_| GdsError::Parse(format!("bad count '{s}'")))
    };

    if next()?.trim() != "gds-lp 1" {
        return Err(bad("header"));
    }
    let dims = next()?;
    let tok: Vec<&str> = dims.split_whitespace().collect();
    if tok.len() != 6 || tok[0] != "vars" || tok[2] != "eq" || tok[4] != "ub" {
        return Err(bad("dimension line"));
    }
    let (n, neq, nub) = (int(tok[1])?, int(tok[3])?, int(tok[5])?);
    let lay_line = next()?;
    let tok: Vec<&str> = lay_line.split_whitespace().collect();
    let layout = match tok.as_slice() {
        ["layout", "none"] => None,
        ["layout", l, p] => Some(VarLayout::new(int(l)?, int(p)?)),
        _ => return Err(bad("layout line")),
    };
    let mut vecs = Vec::new();
    for (name, len) in [("c", n), ("beq", neq), ("bub", nub)] {
        if next()?.trim() != name {
            return Err(bad(name));
        }
        let mut v = DVector::zeros(len);
        for k in 0..len {
            v[k] = num(&next()?)?;
        }
        vecs.push(v);
    }
    let mut mats = Vec::new();
    for (name, rows) in [("aeq", neq), ("aub", nub)] {
        let head = next()?;
        let tok: Vec<&str> = head.split_whitespace().collect();
        if tok.len() != 2 || tok[0] != name {
            return Err(bad(name));
        }
        let mut m = DMatrix::zeros(rows, n);
        for _ in 0..int(tok[1])? {
            let line = next()?;
            let t: Vec<&str> = line.split_whitespace().collect();
            if t.len() != 3 {
                return Err(bad("matrix entry"));
            }
            let (i, j) = (int(t[0])?, int(t[1])?);
            if i >= rows || j >= n {
                return Err(bad("entry index out of range"));
            }
            m[(i, j)] = num(t[2])?;
        }
        mats.push(m);
    }
    if next()?.trim() != "end" {
        return Err(bad("trailer"));
    }
    let bub = vecs.pop().unwrap();
    let beq = vecs.pop().unwrap();
    let c = vecs.pop().unwrap();
    let aub = mats.pop().unwrap();
    let aeq = mats.pop().unwrap();
    let eq_blocks = match &layout {
        Some(lay) => vec![("transform".to_string(), 0..lay.l())],
        None => Vec::new(),
    };
    let lp = LinearProgram {
        c,
        aeq,
        beq,
        aub,
        bub,
        layout,
        eq_blocks,
    };
    lp.validate()?;
    Ok(lp)
}
