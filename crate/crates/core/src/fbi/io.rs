//! Text and binary formats for sampled functions and transform fields.
//!
//! Binary layout (all little endian):
//!
//! ```text
//! magic   4 bytes  "MLSF"
//! version u32      1
//! dim     u32      1 or 2
//! per axis: count u64, origin f64, spacing f64, support_lo u64, support_hi u64
//! values  count₁·…·count_dim pairs (re f64, im f64), row-major
//! ```

use std::io::{Read, Write};

use num_complex::Complex64;

use super::{Axis, FBIField, FbiError, SampledFunction};

const MAGIC: &[u8; 4] = b"MLSF";
const VERSION: u32 = 1;

/// CSV with columns `y1[,y2],re,im`, one row per grid point.
pub fn write_sampled_csv<W: Write>(u: &SampledFunction, w: W) -> Result<(), FbiError> {
    let mut out = csv::Writer::from_writer(w);
    let mut header: Vec<String> = (1..=u.dim()).map(|d| format!("y{d}")).collect();
    header.extend(["re".into(), "im".into()]);
    out.write_record(&header)?;
    for (flat, v) in u.values().iter().enumerate() {
        let mut row: Vec<String> = u.coords_of(flat).iter().map(|c| c.to_string()).collect();
        row.push(v.re.to_string());
        row.push(v.im.to_string());
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads the CSV written by [`write_sampled_csv`]. Rows must cover a full
/// uniform grid in row-major order.
pub fn read_sampled_csv<R: Read>(r: R) -> Result<SampledFunction, FbiError> {
    let mut rdr = csv::Reader::from_reader(r);
    let dim = rdr.headers()?.len().checked_sub(2).unwrap_or(0);
    if !(1..=2).contains(&dim) {
        return Err(FbiError::Format(format!(
            "expected 3 or 4 columns, found {}",
            dim + 2
        )));
    }
    let mut coords: Vec<Vec<f64>> = vec![Vec::new(); dim];
    let mut values = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let nums: Vec<f64> = rec
            .iter()
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| FbiError::Format(format!("not a number: '{s}'")))
            })
            .collect::<Result<_, _>>()?;
        if nums.len() != dim + 2 {
            return Err(FbiError::Format("ragged row".into()));
        }
        for d in 0..dim {
            coords[d].push(nums[d]);
        }
        values.push(Complex64::new(nums[dim], nums[dim + 1]));
    }
    let axes = infer_axes(&coords)?;
    SampledFunction::from_values(axes, values)
}

fn infer_axes(coords: &[Vec<f64>]) -> Result<Vec<Axis>, FbiError> {
    let n = coords.first().map_or(0, Vec::len);
    let mut axes = Vec::with_capacity(coords.len());
    let mut stride = n;
    for c in coords {
        // Distinct values in first-seen order along this axis.
        let mut distinct: Vec<f64> = Vec::new();
        for &v in c {
            if distinct.last() != Some(&v) && !distinct.contains(&v) {
                distinct.push(v);
            }
        }
        let count = distinct.len();
        if count < 2 {
            return Err(FbiError::Format("each axis needs at least 2 points".into()));
        }
        stride /= count;
        let spacing = (distinct[count - 1] - distinct[0]) / (count - 1) as f64;
        let axis = Axis::new(distinct[0], spacing, count)?;
        for (i, &v) in c.iter().enumerate() {
            let k = (i / stride.max(1)) % count;
            if (v - axis.coord(k)).abs() > 1e-9 * spacing.max(1.0) {
                return Err(FbiError::Format(
                    "rows do not form a uniform row-major grid".into(),
                ));
            }
        }
        axes.push(axis);
    }
    if axes.iter().map(|a| a.count).product::<usize>() != n {
        return Err(FbiError::Format("grid is not a full product".into()));
    }
    Ok(axes)
}

pub fn write_sampled_binary<W: Write>(u: &SampledFunction, mut w: W) -> Result<(), FbiError> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(u.dim() as u32).to_le_bytes())?;
    for (a, &(lo, hi)) in u.axes().iter().zip(u.support()) {
        w.write_all(&(a.count as u64).to_le_bytes())?;
        w.write_all(&a.origin.to_le_bytes())?;
        w.write_all(&a.spacing.to_le_bytes())?;
        w.write_all(&(lo as u64).to_le_bytes())?;
        w.write_all(&(hi as u64).to_le_bytes())?;
    }
    for v in u.values() {
        w.write_all(&v.re.to_le_bytes())?;
        w.write_all(&v.im.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, FbiError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, FbiError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64, FbiError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub fn read_sampled_binary<R: Read>(mut r: R) -> Result<SampledFunction, FbiError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(FbiError::Format("bad magic".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(FbiError::Format(format!("unsupported version {version}")));
    }
    let dim = read_u32(&mut r)? as usize;
    if !(1..=2).contains(&dim) {
        return Err(FbiError::Format(format!("bad dimension {dim}")));
    }
    let mut axes = Vec::with_capacity(dim);
    let mut support = Vec::with_capacity(dim);
    for _ in 0..dim {
        let count = read_u64(&mut r)? as usize;
        let origin = read_f64(&mut r)?;
        let spacing = read_f64(&mut r)?;
        axes.push(Axis::new(origin, spacing, count)?);
        support.push((read_u64(&mut r)? as usize, read_u64(&mut r)? as usize));
    }
    let n: usize = axes.iter().map(|a| a.count).product();
    let mut values = Vec::with_capacity(n);
    for _ in 0..n {
        let re = read_f64(&mut r)?;
        let im = read_f64(&mut r)?;
        values.push(Complex64::new(re, im));
    }
    SampledFunction::new(axes, values, support)
}

/// Long-format CSV of a transform field: per complex coordinate `x_re, x_im`,
/// then `lambda, re, im, phi0`. The `re, im` columns hold the reduced values
/// `e^{−λΦ₀} Tu`.
pub fn write_field_csv<W: Write>(f: &FBIField, w: W) -> Result<(), FbiError> {
    let mut out = csv::Writer::from_writer(w);
    let dim = f.grid().dim();
    let mut header = Vec::new();
    for d in 1..=dim {
        if dim == 1 {
            header.extend(["x_re".to_string(), "x_im".to_string()]);
        } else {
            header.extend([format!("x{d}_re"), format!("x{d}_im")]);
        }
    }
    header.extend(["lambda", "re", "im", "phi0"].map(String::from));
    out.write_record(&header)?;
    for p in 0..f.grid().len() {
        let pt = f.grid().point(p);
        for (l, lam) in f.lambdas().iter().enumerate() {
            let v = f.reduced(p, l);
            let mut row: Vec<String> = pt
                .iter()
                .flat_map(|z| [z.re.to_string(), z.im.to_string()])
                .collect();
            row.extend([
                lam.to_string(),
                v.re.to_string(),
                v.im.to_string(),
                f.phi0()[p].to_string(),
            ]);
            out.write_record(&row)?;
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample2() -> SampledFunction {
        let a = Axis::span(-1.0, 1.0, 5).unwrap();
        let b = Axis::span(0.0, 0.75, 4).unwrap();
        SampledFunction::from_fn_2d([a, b], [(-0.5, 0.5), (0.2, 0.6)], |x, y| {
            Complex64::new(x + 0.1, y * y - 0.3)
        })
        .unwrap()
    }

    #[test]
    fn binary_roundtrip() {
        let u = sample2();
        let mut buf = Vec::new();
        write_sampled_binary(&u, &mut buf).unwrap();
        assert_eq!(buf.len(), 12 + 2 * 40 + 20 * 16);
        let v = read_sampled_binary(buf.as_slice()).unwrap();
        assert_eq!(u, v);
        buf[0] = b'X';
        assert!(read_sampled_binary(buf.as_slice()).is_err());
    }

    #[test]
    fn csv_roundtrip() {
        let u = sample2();
        let mut buf = Vec::new();
        write_sampled_csv(&u, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("y1,y2,re,im\n"));
        let v = read_sampled_csv(buf.as_slice()).unwrap();
        assert_eq!(u.values(), v.values());
        assert_eq!(u.support(), v.support());
        for (a, b) in u.axes().iter().zip(v.axes()) {
            assert_eq!(a.count, b.count);
            assert!((a.spacing - b.spacing).abs() < 1e-15);
        }
    }

    #[test]
    fn csv_rejects_garbage() {
        assert!(read_sampled_csv("y1,re,im\n0,1,x\n".as_bytes()).is_err());
        assert!(read_sampled_csv("a,b\n1,2\n".as_bytes()).is_err());
    }
}
