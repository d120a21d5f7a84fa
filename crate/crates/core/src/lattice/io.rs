//! Flat binary and CSV layouts for lattice fields.
//!
//! Binary: three little-endian `u64` words `(d, N, components)` followed by
//! `components * N^d` little-endian `f64` values, component-major, sites in
//! linear-index order (coordinate 0 fastest).

use std::io::{Read, Write};

use super::{ScalarField, TorusLattice, VectorField};
use crate::error::{Error, Result};

pub fn write_binary<W: Write>(
    mut w: W,
    lattice: &TorusLattice,
    components: usize,
    values: &[f64],
) -> Result<()> {
    if values.len() != components * lattice.num_sites() {
        return Err(Error::Format(format!(
            "expected {} values, got {}",
            components * lattice.num_sites(),
            values.len()
        )));
    }
    for word in [lattice.dim(), lattice.side(), components] {
        w.write_all(&(word as u64).to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(values.len() * 8);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Reads a field written by [`write_binary`]; returns `(lattice, components, values)`.
pub fn read_binary<R: Read>(mut r: R) -> Result<(TorusLattice, usize, Vec<f64>)> {
    let mut header = [0u8; 24];
    r.read_exact(&mut header)
        .map_err(|_| Error::Format("truncated header".into()))?;
    let word = |k: usize| u64::from_le_bytes(header[8 * k..8 * k + 8].try_into().unwrap()) as usize;
    let (d, n, components) = (word(0), word(1), word(2));
    let lattice = TorusLattice::new(d, n)?;
    let count = components * lattice.num_sites();
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != 8 * count {
        return Err(Error::Format(format!(
            "expected {} payload bytes, got {}",
            8 * count,
            bytes.len()
        )));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((lattice, components, values))
}

/// CSV with columns `site, c0..c{d-1}, v0..v{components-1}`.
pub fn write_csv<W: Write>(
    mut w: W,
    lattice: &TorusLattice,
    components: usize,
    values: &[f64],
) -> Result<()> {
    let d = lattice.dim();
    let n = lattice.num_sites();
    let mut header = vec!["site".to_string()];
    header.extend((0..d).map(|k| format!("c{k}")));
    header.extend((0..components).map(|k| format!("v{k}")));
    writeln!(w, "{}", header.join(","))?;
    for x in 0..n {
        let c = lattice.coords(x);
        write!(w, "{x}")?;
        for ck in &c[..d] {
            write!(w, ",{ck}")?;
        }
        for k in 0..components {
            write!(w, ",{:e}", values[k * n + x])?;
        }
        writeln!(w)?;
    }
    Ok(())
}

impl ScalarField {
    pub fn write_binary<W: Write>(&self, w: W) -> Result<()> {
        write_binary(w, self.lattice(), 1, self.values())
    }

    pub fn read_binary<R: Read>(r: R) -> Result<Self> {
        let (lat, comps, values) = read_binary(r)?;
        if comps != 1 {
            return Err(Error::Format(format!("expected 1 component, got {comps}")));
        }
        ScalarField::new(lat, values)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_csv(w, self.lattice(), 1, self.values())
    }
}

impl VectorField {
    pub fn write_binary<W: Write>(&self, w: W) -> Result<()> {
        write_binary(w, self.lattice(), self.lattice().dim(), self.values())
    }

    pub fn read_binary<R: Read>(r: R) -> Result<Self> {
        let (lat, comps, values) = read_binary(r)?;
        if comps != lat.dim() {
            return Err(Error::Format(format!(
                "expected {} components, got {comps}",
                lat.dim()
            )));
        }
        VectorField::new(lat, values)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_csv(w, self.lattice(), self.lattice().dim(), self.values())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn binary_round_trip(d in 1usize..=3, n in 2usize..5, seed in any::<u32>()) {
            let lat = TorusLattice::new(d, n).unwrap();
            let g = VectorField::new(
                lat,
                (0..lat.num_edges()).map(|k| ((k as u64 * 2654435761 + seed as u64) % 1000) as f64 / 7.0 - 50.0).collect(),
            ).unwrap();
            let mut buf = Vec::new();
            g.write_binary(&mut buf).unwrap();
            prop_assert_eq!(buf.len(), 24 + 8 * lat.num_edges());
            let back = VectorField::read_binary(buf.as_slice()).unwrap();
            prop_assert_eq!(back, g);
        }
    }

    #[test]
    fn header_layout() {
        let lat = TorusLattice::new(2, 3).unwrap();
        let u = ScalarField::constant(lat, 1.5);
        let mut buf = Vec::new();
        u.write_binary(&mut buf).unwrap();
        assert_eq!(&buf[..8], &2u64.to_le_bytes());
        assert_eq!(&buf[8..16], &3u64.to_le_bytes());
        assert_eq!(&buf[16..24], &1u64.to_le_bytes());
        assert_eq!(&buf[24..32], &1.5f64.to_le_bytes());
    }

    #[test]
    fn truncated_input_is_rejected() {
        let lat = TorusLattice::new(1, 4).unwrap();
        let mut buf = Vec::new();
        ScalarField::zeros(lat).write_binary(&mut buf).unwrap();
        buf.pop();
        assert!(ScalarField::read_binary(buf.as_slice()).is_err());
        assert!(VectorField::read_binary(&buf[..10]).is_err());
    }

    #[test]
    fn csv_rows() {
        let lat = TorusLattice::new(2, 2).unwrap();
        let u = ScalarField::from_fn(lat, |x| x as f64);
        let mut buf = Vec::new();
        u.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "site,c0,c1,v0");
        assert_eq!(lines[4], "3,1,1,3e0");
    }
}
