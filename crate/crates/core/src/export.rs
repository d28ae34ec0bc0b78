//! CSV and PGM writers for images and sinograms.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::fbp::Sinogram;
use crate::recon::ImageField;

/// `x,y,value` rows in storage order.
pub fn write_image_csv<W: Write>(image: &ImageField, out: &mut W) -> Result<()> {
    writeln!(out, "x,y,value")?;
    for (i, x) in image.xs.iter().enumerate() {
        for (j, y) in image.ys.iter().enumerate() {
            writeln!(out, "{x:.6},{y:.6},{:.10e}", image.get(i, j))?;
        }
    }
    Ok(())
}

/// `r,theta_deg,value,measured` rows.
pub fn write_sinogram_csv<W: Write>(sino: &Sinogram, out: &mut W) -> Result<()> {
    writeln!(out, "r,theta_deg,value,measured")?;
    let (nr, nt) = sino.dims();
    for k in 0..nt {
        for i in 0..nr {
            let idx = k * nr + i;
            writeln!(
                out,
                "{:.6},{:.1},{:.10e},{}",
                sino.rs[i],
                sino.thetas[k].to_degrees(),
                sino.values[idx],
                u8::from(sino.measured[idx])
            )?;
        }
    }
    Ok(())
}

/// Binary 8-bit PGM of a `width x height` raster given row by row from the
/// top, with gray levels spread linearly over `[min, max]`.
pub fn encode_pgm(raster: &[f64], width: usize, height: usize) -> (Vec<u8>, f64, f64) {
    assert_eq!(raster.len(), width * height);
    let lo = raster.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raster.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let mut bytes = format!("P5\n{width} {height}\n255\n").into_bytes();
    bytes.extend(raster.iter().map(|&v| {
        if span > 0.0 {
            (255.0 * (v - lo) / span).round().clamp(0.0, 255.0) as u8
        } else {
            0
        }
    }));
    (bytes, lo, hi)
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".minmax.txt");
    PathBuf::from(s)
}

fn write_pgm_file(path: &Path, raster: &[f64], width: usize, height: usize) -> Result<()> {
    let (bytes, lo, hi) = encode_pgm(raster, width, height);
    std::fs::write(path, bytes)?;
    std::fs::write(sidecar(path), format!("min {lo:.10e}\nmax {hi:.10e}\n"))?;
    Ok(())
}

/// Image as PGM with `x` to the right and `y` up, plus a `.minmax.txt`
/// sidecar.
pub fn write_image_pgm(image: &ImageField, path: &Path) -> Result<()> {
    let (nx, ny) = image.dims();
    let raster: Vec<f64> = (0..ny)
        .rev()
        .flat_map(|j| (0..nx).map(move |i| (i, j)))
        .map(|(i, j)| image.get(i, j))
        .collect();
    write_pgm_file(path, &raster, nx, ny)
}

/// Sinogram as PGM with `r` down the rows and angle across the columns.
pub fn write_sinogram_pgm(sino: &Sinogram, path: &Path) -> Result<()> {
    let (nr, nt) = sino.dims();
    let raster: Vec<f64> = (0..nr).flat_map(|i| (0..nt).map(move |k| sino.get(i, k))).collect();
    write_pgm_file(path, &raster, nt, nr)
}

/// Buffered file writer.
pub fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}
