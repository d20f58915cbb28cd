//! CSV dumps of the coupling matrix and the perturbative amplitudes.
//!
//! Numbers are written with 17 significant digits so they round-trip.

use std::io::{self, Write};

use num_complex::Complex64;

use crate::coupling::CouplingMatrix;
use crate::perturb::PairTable;

/// `{:.16e}`: 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn row(out: &mut impl Write, idx: &[usize], z: Complex64) -> io::Result<()> {
    for i in idx {
        write!(out, "{i},")?;
    }
    writeln!(out, "{},{}", fmt_f64(z.re), fmt_f64(z.im))
}

/// Columns `mu,nu,re,im`, every entry including the diagonal.
pub fn write_z_csv(out: &mut impl Write, z: &CouplingMatrix) -> io::Result<()> {
    writeln!(out, "mu,nu,re,im")?;
    for mu in 0..z.len() {
        for nu in 0..z.len() {
            row(out, &[mu, nu], z.get(mu, nu))?;
        }
    }
    Ok(())
}

/// Columns `mu,re,im`.
pub fn write_u_csv(out: &mut impl Write, u: &[Complex64]) -> io::Result<()> {
    writeln!(out, "mu,re,im")?;
    for (mu, x) in u.iter().enumerate() {
        row(out, &[mu], *x)?;
    }
    Ok(())
}

/// Columns `mu,nu,re,im` for `mu < nu`.
pub fn write_v_csv(out: &mut impl Write, v: &PairTable) -> io::Result<()> {
    writeln!(out, "mu,nu,re,im")?;
    for (mu, nu, x) in v.iter() {
        row(out, &[mu, nu], x)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Ensemble, Vec3};

    #[test]
    fn values_round_trip() {
        let ens = Ensemble::new(vec![Vec3::zeros(), Vec3::new(1.0, 0.3, 0.2)], Vec3::new(0.0, 0.0, 1.0)).unwrap();
        let z = crate::coupling::coupling_matrix(&ens).unwrap();
        let mut buf = Vec::new();
        write_z_csv(&mut buf, &z).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "mu,nu,re,im");
        assert_eq!(lines.len(), 5);
        let f: Vec<&str> = lines[2].split(',').collect();
        assert_eq!((f[0], f[1]), ("0", "1"));
        let back = Complex64::new(f[2].parse().unwrap(), f[3].parse().unwrap());
        assert_eq!(back, z.get(0, 1));
    }

    #[test]
    fn pair_rows_are_upper_triangle() {
        let v = PairTable::from_fn(3, |i, j| Complex64::new(i as f64, j as f64 / 3.0));
        let mut buf = Vec::new();
        write_v_csv(&mut buf, &v).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.contains("1,2,1.0000000000000000e0,6.6666666666666663e-1"));
        let mut buf = Vec::new();
        write_u_csv(&mut buf, &[Complex64::new(0.1, -2.0)]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "mu,re,im\n0,1.0000000000000001e-1,-2.0000000000000000e0\n");
    }
}
