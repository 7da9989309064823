//! Runtime values, object storage and the canonical memory snapshot.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

pub type ObjId = u32;

/// Address of a (sub)object: an object plus array indices and field numbers.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Loc {
    pub obj: ObjId,
    pub path: Vec<u32>,
}

impl Loc {
    pub fn root(obj: ObjId) -> Loc {
        Loc { obj, path: Vec::new() }
    }

    pub fn child(&self, i: u32) -> Loc {
        let mut path = self.path.clone();
        path.push(i);
        Loc { obj: self.obj, path }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Uninit,
    Int(i64),
    Double(f64),
    Bool(bool),
    Str(Arc<str>),
    Ptr(Option<Loc>),
    Array(Vec<Value>),
    Struct(Vec<Value>),
}

impl Value {
    pub fn truthy(&self) -> bool {
        match self {
            Value::Int(i) => *i != 0,
            Value::Double(d) => *d != 0.0,
            Value::Bool(b) => *b,
            Value::Ptr(p) => p.is_some(),
            Value::Str(_) => true,
            Value::Uninit | Value::Array(_) | Value::Struct(_) => false,
        }
    }
}

/// Identity of an object that is stable across schedules: the task that
/// allocated it and the allocation's ordinal within that task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct ObjKey {
    pub task: u32,
    pub ordinal: u32,
}

pub const GLOBAL_TASK: u32 = u32::MAX;

#[derive(Debug, Clone)]
pub struct Object {
    pub value: Value,
    pub alive: bool,
    pub name: Arc<str>,
    pub key: ObjKey,
}

/// Schedule-independent form of an address, used for depend clauses.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LocKey {
    pub obj: ObjKey,
    pub path: Vec<u32>,
}

/// A value with addresses replaced by printable names. Doubles compare by
/// bit pattern.
#[derive(Debug, Clone, Serialize)]
pub enum Cell {
    Uninit,
    Int(i64),
    Double(f64),
    Bool(bool),
    Str(String),
    Ptr(Option<String>),
    Array(Vec<Cell>),
    Struct(Vec<Cell>),
}

impl PartialEq for Cell {
    fn eq(&self, other: &Cell) -> bool {
        match (self, other) {
            (Cell::Uninit, Cell::Uninit) => true,
            (Cell::Int(a), Cell::Int(b)) => a == b,
            (Cell::Double(a), Cell::Double(b)) => a.to_bits() == b.to_bits(),
            (Cell::Bool(a), Cell::Bool(b)) => a == b,
            (Cell::Str(a), Cell::Str(b)) => a == b,
            (Cell::Ptr(a), Cell::Ptr(b)) => a == b,
            (Cell::Array(a), Cell::Array(b)) | (Cell::Struct(a), Cell::Struct(b)) => a == b,
            _ => false,
        }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Uninit => f.write_str("?"),
            Cell::Int(i) => write!(f, "{i}"),
            Cell::Double(d) => write!(f, "{d:?}"),
            Cell::Bool(b) => write!(f, "{b}"),
            Cell::Str(s) => write!(f, "{s:?}"),
            Cell::Ptr(None) => f.write_str("null"),
            Cell::Ptr(Some(p)) => f.write_str(p),
            Cell::Array(items) | Cell::Struct(items) => {
                let (open, close) = if matches!(self, Cell::Array(_)) { ('[', ']') } else { ('{', '}') };
                write!(f, "{open}")?;
                for (i, c) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{c}")?;
                }
                write!(f, "{close}")
            }
        }
    }
}

impl Cell {
    /// Converts back to a runtime value; pointers have no meaning outside
    /// the run that produced them.
    pub fn to_value(&self) -> Option<Value> {
        Some(match self {
            Cell::Uninit => Value::Uninit,
            Cell::Int(i) => Value::Int(*i),
            Cell::Double(d) => Value::Double(*d),
            Cell::Bool(b) => Value::Bool(*b),
            Cell::Str(s) => Value::Str(s.as_str().into()),
            Cell::Ptr(None) => Value::Ptr(None),
            Cell::Ptr(Some(_)) => return None,
            Cell::Array(items) => Value::Array(items.iter().map(Cell::to_value).collect::<Option<_>>()?),
            Cell::Struct(items) => Value::Struct(items.iter().map(Cell::to_value).collect::<Option<_>>()?),
        })
    }
}

/// Observable outcome of a run: globals, the entry function's parameters
/// and top-level locals, its return value, and everything printed.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct MemoryState {
    pub cells: BTreeMap<String, Cell>,
    pub stdout: String,
}

impl MemoryState {
    pub fn get(&self, name: &str) -> Option<&Cell> {
        self.cells.get(name)
    }

    /// First differing cell, for divergence reports.
    pub fn first_difference(&self, other: &MemoryState) -> Option<String> {
        for (k, v) in &self.cells {
            match other.cells.get(k) {
                Some(w) if w == v => {}
                Some(w) => return Some(format!("{k}: {v} vs {w}")),
                None => return Some(format!("{k}: {v} vs <absent>")),
            }
        }
        if let Some(k) = other.cells.keys().find(|k| !self.cells.contains_key(*k)) {
            return Some(format!("{k}: <absent> vs {}", other.cells[k]));
        }
        if self.stdout != other.stdout {
            return Some(format!("stdout: {:?} vs {:?}", self.stdout, other.stdout));
        }
        None
    }
}

/// C `printf` for the conversions the subset uses.
pub fn format_printf(fmt: &str, args: &[Value]) -> Result<String, String> {
    let mut out = String::new();
    let mut chars = fmt.chars().peekable();
    let mut next = 0usize;
    let mut arg = |conv: char| -> Result<Value, String> {
        let v = args.get(next).cloned().ok_or_else(|| format!("printf: missing argument for %{conv}"))?;
        next += 1;
        Ok(v)
    };
    while let Some(c) = chars.next() {
        if c != '%' {
            out.push(c);
            continue;
        }
        let mut flags = String::new();
        while let Some(&f) = chars.peek() {
            if "-+ 0#".contains(f) {
                flags.push(f);
                chars.next();
            } else {
                break;
            }
        }
        let mut width = String::new();
        while let Some(&d) = chars.peek().filter(|d| d.is_ascii_digit()) {
            width.push(d);
            chars.next();
        }
        let mut precision = None;
        if chars.peek() == Some(&'.') {
            chars.next();
            let mut p = String::new();
            while let Some(&d) = chars.peek().filter(|d| d.is_ascii_digit()) {
                p.push(d);
                chars.next();
            }
            precision = Some(p.parse::<usize>().unwrap_or(0));
        }
        while matches!(chars.peek(), Some('l' | 'h' | 'z')) {
            chars.next();
        }
        let conv = chars.next().ok_or("printf: dangling %")?;
        let body = match conv {
            '%' => "%".to_string(),
            'd' | 'i' | 'u' => num_i64(&arg(conv)?).to_string(),
            'x' => format!("{:x}", num_i64(&arg(conv)?)),
            'c' => char::from_u32(num_i64(&arg(conv)?) as u32).unwrap_or('?').to_string(),
            'f' | 'F' => format!("{:.*}", precision.unwrap_or(6), num_f64(&arg(conv)?)),
            'e' => c_exp(num_f64(&arg(conv)?), precision.unwrap_or(6)),
            's' => match arg(conv)? {
                Value::Str(s) => s.to_string(),
                other => return Err(format!("printf: %s given {other:?}")),
            },
            other => return Err(format!("printf: unsupported conversion %{other}")),
        };
        let width: usize = width.parse().unwrap_or(0);
        if body.len() >= width {
            out.push_str(&body);
        } else if flags.contains('-') {
            out.push_str(&body);
            out.push_str(&" ".repeat(width - body.len()));
        } else if flags.contains('0') && conv != 's' && conv != 'c' {
            let (sign, digits) = body.strip_prefix('-').map_or(("", body.as_str()), |d| ("-", d));
            out.push_str(sign);
            out.push_str(&"0".repeat(width - body.len()));
            out.push_str(digits);
        } else {
            out.push_str(&" ".repeat(width - body.len()));
            out.push_str(&body);
        }
    }
    Ok(out)
}

fn c_exp(v: f64, prec: usize) -> String {
    let s = format!("{v:.prec$e}");
    // Rust prints `1.5e2`; C wants `1.5e+02`.
    match s.split_once('e') {
        Some((m, e)) => {
            let (sign, digits) = e.strip_prefix('-').map_or(('+', e), |d| ('-', d));
            format!("{m}e{sign}{digits:0>2}")
        }
        None => s,
    }
}

pub fn num_i64(v: &Value) -> i64 {
    match v {
        Value::Int(i) => *i,
        Value::Bool(b) => *b as i64,
        Value::Double(d) => *d as i64,
        _ => 0,
    }
}

pub fn num_f64(v: &Value) -> f64 {
    match v {
        Value::Int(i) => *i as f64,
        Value::Bool(b) => *b as i64 as f64,
        Value::Double(d) => *d,
        _ => 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn printf_conversions() {
        let args = [Value::Int(42), Value::Double(2.5), Value::Str("ab".into()), Value::Int(7)];
        assert_eq!(format_printf("%d|%.3f|%s|%3d%%", &args).unwrap(), "42|2.500|ab|  7%");
        assert_eq!(format_printf("%05d %-3d|", &[Value::Int(-42), Value::Int(1)]).unwrap(), "-0042 1  |");
        assert_eq!(format_printf("%f", &[Value::Double(0.016343)]).unwrap(), "0.016343");
        assert_eq!(format_printf("%e", &[Value::Double(150.0)]).unwrap(), "1.500000e+02");
        assert!(format_printf("%d", &[]).is_err());
    }

    #[test]
    fn cells_compare_doubles_bitwise() {
        assert_ne!(Cell::Double(0.0), Cell::Double(-0.0));
        assert_eq!(Cell::Double(f64::NAN), Cell::Double(f64::NAN));
        assert_eq!(Cell::Array(vec![Cell::Int(1)]).to_string(), "[1]");
    }
}
