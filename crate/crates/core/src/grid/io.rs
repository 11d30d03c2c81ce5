//! Grid data files.
//!
//! Binary layout: one ASCII header line `n;N_1,...,N_n;L_1,...,L_n` terminated by `\n`,
//! followed by `prod N_j` complex samples in storage order, each written as two
//! little-endian IEEE-754 `f64` values (real part, then imaginary part).

use std::io::{BufRead, Write};

use num_complex::Complex64;

use super::{GridFunction, GridSpec};
use crate::error::{Error, Result};

pub fn header_line(spec: &GridSpec) -> String {
    let points: Vec<String> = spec.points().iter().map(|p| p.to_string()).collect();
    let lengths: Vec<String> = spec.box_lengths().iter().map(|l| format!("{l:?}")).collect();
    format!("{};{};{}", spec.dim(), points.join(","), lengths.join(","))
}

pub fn parse_header(line: &str) -> Result<GridSpec> {
    let fields: Vec<&str> = line.trim_end_matches(['\n', '\r']).split(';').collect();
    if fields.len() != 3 {
        return Err(Error::Format(format!("header needs 3 ';'-separated fields, got {}", fields.len())));
    }
    let n: usize = fields[0]
        .trim()
        .parse()
        .map_err(|_| Error::Format(format!("bad dimension field '{}'", fields[0])))?;
    let points = fields[1]
        .split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| Error::Format(format!("bad points field '{}'", fields[1])))?;
    let lengths = fields[2]
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| Error::Format(format!("bad box_lengths field '{}'", fields[2])))?;
    if points.len() != n || lengths.len() != n {
        return Err(Error::Format(format!(
            "header declares {n} axes but lists {} points and {} lengths",
            points.len(),
            lengths.len()
        )));
    }
    GridSpec::new(points, lengths)
}

pub fn write_binary<W: Write>(u: &GridFunction, mut w: W) -> Result<()> {
    writeln!(w, "{}", header_line(u.spec()))?;
    let mut buf = Vec::with_capacity(16 * u.samples().len());
    for z in u.samples() {
        buf.extend_from_slice(&z.re.to_le_bytes());
        buf.extend_from_slice(&z.im.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_binary<R: BufRead>(mut r: R) -> Result<GridFunction> {
    let mut header = String::new();
    r.read_line(&mut header)?;
    let spec = parse_header(&header)?;
    let mut bytes = vec![0u8; 16 * spec.len()];
    r.read_exact(&mut bytes)
        .map_err(|e| Error::Format(format!("sample block shorter than header promises: {e}")))?;
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::Format("trailing bytes after sample block".into()));
    }
    let samples = bytes
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().unwrap());
            let im = f64::from_le_bytes(c[8..].try_into().unwrap());
            Complex64::new(re, im)
        })
        .collect();
    GridFunction::new(spec, samples)
}

/// CSV with columns `x1,...,xn,re,im`, LF line endings.
pub fn write_csv<W: Write>(u: &GridFunction, mut w: W) -> Result<()> {
    let spec = u.spec();
    let mut header: Vec<String> = (1..=spec.dim()).map(|j| format!("x{j}")).collect();
    header.push("re".into());
    header.push("im".into());
    writeln!(w, "{}", header.join(","))?;
    let mut err = None;
    spec.for_each_point(|flat, x| {
        if err.is_some() {
            return;
        }
        let z = u.samples()[flat];
        let mut row: Vec<String> = x.iter().map(|v| format!("{v:?}")).collect();
        row.push(format!("{:?}", z.re));
        row.push(format!("{:?}", z.im));
        if let Err(e) = writeln!(w, "{}", row.join(",")) {
            err = Some(e);
        }
    });
    match err {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}
