//! On-disk formats: a binary tensor container and a textual sampling-plan
//! file. Both round-trip bit-identically.
//!
//! Tensor container: magic `T3D1`, three little-endian u64 dims, then
//! n1*n2*n3 little-endian f64 values in the tensor's flat layout
//! (k*n1*n2 + i*n2 + j). Plan file: one `key value` header line per field,
//! then the two observation slabs as `i,j,k,value` rows. Floating-point
//! text uses the shortest decimal that parses back to the same bits.

use std::fs;
use std::path::Path;

use crate::error::Error;
use crate::sampling::{CcsPlan, Observation, ObservationSet};
use crate::tensor::{DenseTensor3, IndexSet};
use crate::Result;

const MAGIC: &[u8; 4] = b"T3D1";
const HEADER_LEN: usize = 4 + 3 * 8;
const PLAN_MAGIC: &str = "tccs-plan v1";

fn parse_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        offset: offset as u64,
        message: message.into(),
    }
}

// ---------------------------------------------------------------------------
// tensor container
// ---------------------------------------------------------------------------

pub fn tensor_to_bytes(t: &DenseTensor3) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * t.len());
    out.extend_from_slice(MAGIC);
    for d in [t.n1(), t.n2(), t.n3()] {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in t.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn tensor_from_bytes(bytes: &[u8]) -> Result<DenseTensor3> {
    if bytes.len() < 4 {
        return Err(parse_err(0, "file too short for the T3D1 magic"));
    }
    if &bytes[..4] != MAGIC {
        return Err(parse_err(0, "bad magic; not a T3D1 tensor file"));
    }
    if bytes.len() < HEADER_LEN {
        return Err(parse_err(4, "file too short for the three u64 dims"));
    }
    let mut dims = [0usize; 3];
    for (d, chunk) in dims.iter_mut().zip(bytes[4..HEADER_LEN].chunks_exact(8)) {
        let raw = u64::from_le_bytes(chunk.try_into().unwrap());
        *d = usize::try_from(raw)
            .map_err(|_| parse_err(4, format!("dimension {raw} does not fit in memory")))?;
    }
    let [n1, n2, n3] = dims;
    if n1 == 0 || n2 == 0 || n3 == 0 {
        return Err(parse_err(4, format!("zero dimension in header {n1}x{n2}x{n3}")));
    }
    let count = n1
        .checked_mul(n2)
        .and_then(|p| p.checked_mul(n3))
        .ok_or_else(|| parse_err(4, "dimension product overflows"))?;
    let payload = &bytes[HEADER_LEN..];
    let have = payload.len() / 8;
    if payload.len() % 8 != 0 || have < count {
        return Err(parse_err(
            HEADER_LEN + 8 * have.min(count),
            format!("truncated payload: header promises {count} values, found {have}"),
        ));
    }
    if have > count {
        return Err(parse_err(
            HEADER_LEN + 8 * count,
            format!("{} trailing bytes after the payload", payload.len() - 8 * count),
        ));
    }
    let data: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    DenseTensor3::from_vec(n1, n2, n3, data)
}

pub fn write_tensor(path: &Path, t: &DenseTensor3) -> Result<()> {
    fs::write(path, tensor_to_bytes(t))?;
    Ok(())
}

pub fn read_tensor(path: &Path) -> Result<DenseTensor3> {
    tensor_from_bytes(&fs::read(path)?)
}

// ---------------------------------------------------------------------------
// plan file
// ---------------------------------------------------------------------------

/// Shortest decimal that parses back to the same f64 bits.
fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

fn fmt_indices(ix: &[usize]) -> String {
    ix.iter()
        .map(|i| i.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn plan_to_string(plan: &CcsPlan) -> Result<String> {
    let (n1, n2, n3) = plan.shape();
    if plan.i_set().is_with_replacement() != plan.j_set().is_with_replacement() {
        return Err(Error::Parameter(
            "plan file has a single mode field; mixed index-set modes are not representable"
                .into(),
        ));
    }
    let mode = if plan.i_set().is_with_replacement() {
        "with-replacement"
    } else {
        "without-replacement"
    };
    let mut out = String::new();
    out.push_str(PLAN_MAGIC);
    out.push('\n');
    out.push_str(&format!("dims {n1} {n2} {n3}\n"));
    out.push_str(&format!("mode {mode}\n"));
    out.push_str(&format!("i {}\n", fmt_indices(plan.i_set().indices())));
    out.push_str(&format!("j {}\n", fmt_indices(plan.j_set().indices())));
    out.push_str(&format!("p_r {}\n", fmt_f64(plan.p_r())));
    out.push_str(&format!("p_c {}\n", fmt_f64(plan.p_c())));
    out.push_str(&format!("seed {}\n", plan.seed()));
    out.push_str(&format!("captured {}\n", plan.is_captured()));
    for (name, slab) in [("omega_r", plan.omega_r()), ("omega_c", plan.omega_c())] {
        let dedup = if slab.is_dedup() { "dedup" } else { "raw" };
        out.push_str(&format!("{name} {} {dedup}\n", slab.len()));
        for o in slab.entries() {
            out.push_str(&format!("{},{},{},{}\n", o.i, o.j, o.k, fmt_f64(o.value)));
        }
    }
    Ok(out)
}

/// Line-oriented reader that tracks the byte offset of every line it rejects.
struct Lines<'a> {
    rest: &'a str,
    offset: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Lines { rest: text, offset: 0 }
    }

    /// Next line without its newline, plus the byte offset it started at.
    fn next(&mut self) -> Option<(usize, &'a str)> {
        if self.rest.is_empty() {
            return None;
        }
        let start = self.offset;
        let (line, consumed) = match self.rest.find('\n') {
            Some(pos) => (&self.rest[..pos], pos + 1),
            None => (self.rest, self.rest.len()),
        };
        self.rest = &self.rest[consumed..];
        self.offset += consumed;
        Some((start, line))
    }
}

fn expect_field<'a>(lines: &mut Lines<'a>, key: &str) -> Result<(usize, &'a str)> {
    let end = lines.offset;
    let (at, line) = lines
        .next()
        .ok_or_else(|| parse_err(end, format!("file ended before the `{key}` field")))?;
    match line.split_once(' ') {
        Some((k, rest)) if k == key => Ok((at, rest)),
        _ => Err(parse_err(
            at,
            format!("expected a `{key}` field, found {line:?}"),
        )),
    }
}

fn parse_usize(at: usize, s: &str, what: &str) -> Result<usize> {
    s.parse()
        .map_err(|_| parse_err(at, format!("bad {what}: {s:?}")))
}

fn parse_f64(at: usize, s: &str, what: &str) -> Result<f64> {
    s.parse()
        .map_err(|_| parse_err(at, format!("bad {what}: {s:?}")))
}

fn parse_indices(at: usize, s: &str) -> Result<Vec<usize>> {
    s.split(' ')
        .filter(|t| !t.is_empty())
        .map(|t| parse_usize(at, t, "index"))
        .collect()
}

fn parse_slab(
    lines: &mut Lines<'_>,
    key: &str,
    shape: (usize, usize, usize),
) -> Result<ObservationSet> {
    let (at, rest) = expect_field(lines, key)?;
    let (count_s, dedup_s) = rest
        .split_once(' ')
        .ok_or_else(|| parse_err(at, format!("`{key}` wants `<count> <dedup|raw>`")))?;
    let count = parse_usize(at, count_s, "observation count")?;
    let dedup = match dedup_s {
        "dedup" => true,
        "raw" => false,
        other => return Err(parse_err(at, format!("bad dedup mode {other:?}"))),
    };
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let end = lines.offset;
        let (at, line) = lines
            .next()
            .ok_or_else(|| parse_err(end, format!("file ended inside the `{key}` slab")))?;
        let mut parts = line.split(',');
        let mut take = |what: &str| -> Result<&str> {
            parts
                .next()
                .ok_or_else(|| parse_err(at, format!("observation row missing {what}")))
        };
        let i = parse_usize(at, take("i")?, "i")?;
        let j = parse_usize(at, take("j")?, "j")?;
        let k = parse_usize(at, take("k")?, "k")?;
        let value = parse_f64(at, take("value")?, "value")?;
        if parts.next().is_some() {
            return Err(parse_err(at, "observation row has extra fields"));
        }
        entries.push(Observation { i, j, k, value });
    }
    ObservationSet::from_entries(shape, entries, dedup)
}

pub fn plan_from_str(text: &str) -> Result<CcsPlan> {
    let mut lines = Lines::new(text);
    let (at, first) = lines
        .next()
        .ok_or_else(|| parse_err(0, "empty plan file"))?;
    if first != PLAN_MAGIC {
        return Err(parse_err(at, format!("expected `{PLAN_MAGIC}`, found {first:?}")));
    }

    let (at, dims_s) = expect_field(&mut lines, "dims")?;
    let dims = parse_indices(at, dims_s)?;
    let [n1, n2, n3]: [usize; 3] = dims
        .try_into()
        .map_err(|_| parse_err(at, "dims wants exactly three numbers"))?;
    let shape = (n1, n2, n3);

    let (at, mode) = expect_field(&mut lines, "mode")?;
    let with_replacement = match mode {
        "with-replacement" => true,
        "without-replacement" => false,
        other => return Err(parse_err(at, format!("bad mode {other:?}"))),
    };
    let build_set = |at: usize, ix: Vec<usize>, bound: usize| -> Result<IndexSet> {
        let set = if with_replacement {
            IndexSet::with_replacement(ix, bound)
        } else {
            IndexSet::without_replacement(ix, bound)
        };
        set.map_err(|e| parse_err(at, e.to_string()))
    };

    let (at, i_s) = expect_field(&mut lines, "i")?;
    let i_set = build_set(at, parse_indices(at, i_s)?, n1)?;
    let (at, j_s) = expect_field(&mut lines, "j")?;
    let j_set = build_set(at, parse_indices(at, j_s)?, n2)?;

    let (at, p_r_s) = expect_field(&mut lines, "p_r")?;
    let p_r = parse_f64(at, p_r_s, "p_r")?;
    let (at, p_c_s) = expect_field(&mut lines, "p_c")?;
    let p_c = parse_f64(at, p_c_s, "p_c")?;
    let (at, seed_s) = expect_field(&mut lines, "seed")?;
    let seed: u64 = seed_s
        .parse()
        .map_err(|_| parse_err(at, format!("bad seed: {seed_s:?}")))?;
    let (at, cap_s) = expect_field(&mut lines, "captured")?;
    let captured = match cap_s {
        "true" => true,
        "false" => false,
        other => return Err(parse_err(at, format!("bad captured flag {other:?}"))),
    };

    let omega_r = parse_slab(&mut lines, "omega_r", shape)?;
    let omega_c = parse_slab(&mut lines, "omega_c", shape)?;
    if let Some((at, line)) = lines.next() {
        return Err(parse_err(at, format!("trailing content {line:?}")));
    }

    CcsPlan::from_parts(shape, i_set, j_set, omega_r, omega_c, p_r, p_c, seed, captured)
}

pub fn write_plan(path: &Path, plan: &CcsPlan) -> Result<()> {
    fs::write(path, plan_to_string(plan)?)?;
    Ok(())
}

pub fn read_plan(path: &Path) -> Result<CcsPlan> {
    let bytes = fs::read(path)?;
    let text = std::str::from_utf8(&bytes)
        .map_err(|e| parse_err(e.valid_up_to(), "plan file is not UTF-8"))?;
    plan_from_str(text)
}
