//! Binary field snapshots.
//!
//! Layout (all little-endian): magic "HFLW", version u32, n u32, shape as n
//! u32s, periods as n f64s, Lie dimension u32, field count u32, then per
//! field a length-prefixed name, the form degree u32, and the raw f64 data
//! in `[site][comp][lie]` order.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use super::{Field, Grid};

const MAGIC: &[u8; 4] = b"HFLW";
const VERSION: u32 = 1;

fn w_u32(w: &mut impl Write, v: u32) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn w_f64(w: &mut impl Write, v: f64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn r_u32(r: &mut impl Read) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn r_f64(r: &mut impl Read) -> io::Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn bad(msg: &str) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.to_string())
}

pub fn write_snapshot(path: &Path, fields: &[(&str, &Field)]) -> io::Result<()> {
    assert!(!fields.is_empty());
    let grid = &fields[0].1.grid;
    let lie = fields[0].1.lie;
    for (_, f) in fields {
        assert!(Arc::ptr_eq(&f.grid, grid) || f.grid == *grid);
        assert_eq!(f.lie, lie);
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w_u32(&mut w, VERSION)?;
    w_u32(&mut w, grid.n as u32)?;
    for &s in &grid.shape {
        w_u32(&mut w, s as u32)?;
    }
    for &l in &grid.periods {
        w_f64(&mut w, l)?;
    }
    w_u32(&mut w, lie as u32)?;
    w_u32(&mut w, fields.len() as u32)?;
    for (name, f) in fields {
        let nb = name.as_bytes();
        w_u32(&mut w, nb.len() as u32)?;
        w.write_all(nb)?;
        w_u32(&mut w, f.k as u32)?;
        let mut buf = Vec::with_capacity(8 << 12);
        for chunk in f.data.chunks(1 << 12) {
            buf.clear();
            for v in chunk {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
    }
    w.flush()
}

pub fn read_snapshot(path: &Path) -> io::Result<(Arc<Grid>, Vec<(String, Field)>)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(bad("not a field snapshot"));
    }
    if r_u32(&mut r)? != VERSION {
        return Err(bad("unsupported snapshot version"));
    }
    let n = r_u32(&mut r)? as usize;
    if n == 0 || n > 16 {
        return Err(bad("implausible dimension"));
    }
    let mut shape = Vec::with_capacity(n);
    for _ in 0..n {
        let s = r_u32(&mut r)? as usize;
        if s < 4 {
            return Err(bad("axis shorter than the stencil"));
        }
        shape.push(s);
    }
    let mut periods = Vec::with_capacity(n);
    for _ in 0..n {
        let l = r_f64(&mut r)?;
        if !(l > 0.0) {
            return Err(bad("nonpositive period"));
        }
        periods.push(l);
    }
    let grid = Grid::new(&shape, &periods);
    let lie = r_u32(&mut r)? as usize;
    if lie == 0 || lie > 64 {
        return Err(bad("implausible Lie dimension"));
    }
    let count = r_u32(&mut r)? as usize;
    if count > 64 {
        return Err(bad("implausible field count"));
    }
    let mut fields = Vec::with_capacity(count);
    for _ in 0..count {
        let len = r_u32(&mut r)? as usize;
        if len > 256 {
            return Err(bad("implausible field name"));
        }
        let mut nb = vec![0u8; len];
        r.read_exact(&mut nb)?;
        let name = String::from_utf8(nb).map_err(|_| bad("field name not utf-8"))?;
        let k = r_u32(&mut r)? as usize;
        if k > n {
            return Err(bad("form degree exceeds dimension"));
        }
        let mut f = Field::zeros(&grid, k, lie);
        let mut buf = vec![0u8; 8 << 12];
        let mut filled = 0usize;
        while filled < f.data.len() {
            let take = (f.data.len() - filled).min(1 << 12);
            let bytes = &mut buf[..8 * take];
            r.read_exact(bytes)?;
            for (i, v) in f.data[filled..filled + take].iter_mut().enumerate() {
                *v = f64::from_le_bytes(bytes[8 * i..8 * i + 8].try_into().unwrap());
            }
            filled += take;
        }
        fields.push((name, f));
    }
    Ok((grid, fields))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn roundtrip_preserves_bytes() {
        let g = Grid::new(&[4, 6, 5], &[1.0, 2.5, 0.75]);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut a = Field::zeros(&g, 1, 3);
        let mut phi = Field::zeros(&g, 0, 3);
        for v in a.data.iter_mut().chain(phi.data.iter_mut()) {
            *v = rng.gen_range(-5.0..5.0);
        }
        let dir = std::env::temp_dir().join("holoflow-snap-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("state.hflw");
        write_snapshot(&path, &[("A", &a), ("Phi0", &phi)]).unwrap();
        let (g2, fields) = read_snapshot(&path).unwrap();
        assert_eq!(*g2, *g);
        assert_eq!(fields.len(), 2);
        assert_eq!(fields[0].0, "A");
        assert_eq!(fields[0].1.data, a.data);
        assert_eq!(fields[1].0, "Phi0");
        assert_eq!(fields[1].1.k, 0);
        assert_eq!(fields[1].1.data, phi.data);
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn rejects_garbage() {
        let dir = std::env::temp_dir().join("holoflow-snap-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("garbage.hflw");
        std::fs::write(&path, b"not a snapshot at all").unwrap();
        assert!(read_snapshot(&path).is_err());
        std::fs::remove_file(&path).ok();
    }
}
