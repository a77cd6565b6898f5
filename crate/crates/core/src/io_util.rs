use std::io::{Read, Write};

use crate::error::{Error, Result};

pub(crate) fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub(crate) fn write_f64s(w: &mut impl Write, xs: &[f64]) -> Result<()> {
    let mut buf = Vec::with_capacity(xs.len() * 8);
    for x in xs {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

const MAX_PAYLOAD: usize = 1 << 28;

pub(crate) fn read_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    if n > MAX_PAYLOAD {
        return Err(Error::Format(format!("implausible payload length {n}")));
    }
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

pub(crate) fn write_usizes(w: &mut impl Write, xs: &[usize]) -> Result<()> {
    w.write_all(&(xs.len() as u64).to_le_bytes())?;
    for &x in xs {
        w.write_all(&(x as u64).to_le_bytes())?;
    }
    Ok(())
}

pub(crate) fn read_usizes(r: &mut impl Read) -> Result<Vec<usize>> {
    let n = read_u64(r)? as usize;
    if n > 1 << 20 {
        return Err(Error::Format(format!("implausible list length {n}")));
    }
    (0..n).map(|_| Ok(read_u64(r)? as usize)).collect()
}
