//! Phase-space grid and real-valued fields.
//!
//! The computational domain is the periodic rectangle [-Lx, Lx) x [-Lv, Lv)
//! sampled on a uniform Nx x Nv lattice, x-major. Frequencies are stored as
//! integers n with physical frequency pi*n/L, so dyadic annulus membership
//! tests are exact.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::scalar::{from_usize, lit, Scalar};

pub const FIELD_MAGIC: &[u8; 6] = b"KSPDE1";

/// Uniform periodic lattice on [-Lx, Lx) x [-Lv, Lv).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseGrid<S: Scalar> {
    pub lx: S,
    pub lv: S,
    pub nx: usize,
    pub nv: usize,
}

fn is_pow2(n: usize) -> bool {
    n != 0 && n & (n - 1) == 0
}

/// Builds a grid, rejecting non-power-of-two sizes and non-positive lengths.
pub fn make_grid<S: Scalar>(lx: S, lv: S, nx: usize, nv: usize) -> Result<PhaseGrid<S>> {
    if !(lx > S::zero()) || !(lv > S::zero()) {
        return Err(Error::Config(format!(
            "domain half-widths must be positive, got Lx={:?}, Lv={:?}",
            lx.to_f64(),
            lv.to_f64()
        )));
    }
    if nx < 8 || nv < 8 || !is_pow2(nx) || !is_pow2(nv) {
        return Err(Error::Config(format!(
            "grid sizes must be powers of two >= 8, got Nx={nx}, Nv={nv}"
        )));
    }
    Ok(PhaseGrid { lx, lv, nx, nv })
}

impl<S: Scalar> PhaseGrid<S> {
    /// Grid spacing in x: 2*Lx/Nx.
    pub fn hx(&self) -> S {
        lit::<S>(2.0) * self.lx / from_usize(self.nx)
    }

    /// Grid spacing in v: 2*Lv/Nv.
    pub fn hv(&self) -> S {
        lit::<S>(2.0) * self.lv / from_usize(self.nv)
    }

    /// Cell area hx*hv, the quadrature weight of every node.
    pub fn cell(&self) -> S {
        self.hx() * self.hv()
    }

    pub fn x(&self, i: usize) -> S {
        -self.lx + self.hx() * from_usize(i)
    }

    pub fn v(&self, j: usize) -> S {
        -self.lv + self.hv() * from_usize(j)
    }

    /// Signed integer frequency for FFT bin `k` along an axis of length `n`.
    pub fn freq_index(k: usize, n: usize) -> i64 {
        if k < n / 2 {
            k as i64
        } else {
            k as i64 - n as i64
        }
    }

    /// Physical x-frequency of FFT bin `k`: pi * n_k / Lx.
    pub fn kx(&self, k: usize) -> S {
        S::PI() * lit::<S>(Self::freq_index(k, self.nx) as f64) / self.lx
    }

    /// Physical v-frequency of FFT bin `k`: pi * n_k / Lv.
    pub fn kv(&self, k: usize) -> S {
        S::PI() * lit::<S>(Self::freq_index(k, self.nv) as f64) / self.lv
    }

    /// Largest anisotropic radius r such that the ball
    /// {|xi|^(1/th1) + |eta|^(1/th2) <= r} fits inside the frequency lattice.
    pub fn aniso_nyquist_radius(&self, theta: (S, S)) -> S {
        let xi_max = S::PI() * from_usize::<S>(self.nx / 2) / self.lx;
        let eta_max = S::PI() * from_usize::<S>(self.nv / 2) / self.lv;
        let rx = xi_max.powf(S::one() / theta.0);
        let rv = eta_max.powf(S::one() / theta.1);
        rx.min(rv)
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.nx == other.nx && self.nv == other.nv
    }
}

/// Real field sampled on a [`PhaseGrid`], x-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct Field<S: Scalar> {
    pub grid: PhaseGrid<S>,
    pub values: Array2<S>,
}

impl<S: Scalar> Field<S> {
    pub fn zeros(grid: PhaseGrid<S>) -> Self {
        Field {
            grid,
            values: Array2::zeros((grid.nx, grid.nv)),
        }
    }

    pub fn constant(grid: PhaseGrid<S>, c: S) -> Self {
        Field {
            grid,
            values: Array2::from_elem((grid.nx, grid.nv), c),
        }
    }

    /// Samples f(x, v) at every node.
    pub fn from_fn(grid: PhaseGrid<S>, f: impl Fn(S, S) -> S) -> Self {
        let mut values = Array2::zeros((grid.nx, grid.nv));
        for i in 0..grid.nx {
            let x = grid.x(i);
            for j in 0..grid.nv {
                values[(i, j)] = f(x, grid.v(j));
            }
        }
        Field { grid, values }
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|a| a.is_finite())
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Field {
            grid: self.grid,
            values: self.values.mapv(&f),
        }
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(S, S) -> S) -> Self {
        assert!(self.grid.same_shape(&other.grid), "field shape mismatch");
        let mut out = self.clone();
        ndarray::Zip::from(&mut out.values)
            .and(&other.values)
            .for_each(|a, &b| *a = f(*a, b));
        out
    }

    pub fn scaled(&self, c: S) -> Self {
        self.map(|a| a * c)
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn axpy(&mut self, c: S, other: &Self) {
        assert!(self.grid.same_shape(&other.grid), "field shape mismatch");
        ndarray::Zip::from(&mut self.values)
            .and(&other.values)
            .for_each(|a, &b| *a += c * b);
    }

    /// Plain lattice sum (no quadrature weight).
    pub fn sum(&self) -> S {
        crate::stats::pairwise_sum_iter(self.values.iter().copied())
    }

    /// Total mass hx*hv*sum f.
    pub fn mass(&self) -> S {
        self.sum() * self.grid.cell()
    }

    pub fn min(&self) -> S {
        self.values.iter().copied().fold(S::infinity(), S::min)
    }

    pub fn max(&self) -> S {
        self.values.iter().copied().fold(S::neg_infinity(), S::max)
    }

    /// L1 norm of the positive part.
    pub fn positive_mass(&self) -> S {
        crate::stats::pairwise_sum_iter(self.values.iter().map(|&a| a.max(S::zero())))
            * self.grid.cell()
    }

    /// Periodic circular shift by whole cells: result(i,j) = self(i+mx, j+mv).
    pub fn rolled(&self, mx: i64, mv: i64) -> Self {
        let (nx, nv) = (self.grid.nx as i64, self.grid.nv as i64);
        let mut out = Self::zeros(self.grid);
        for i in 0..nx {
            let si = (i + mx).rem_euclid(nx) as usize;
            for j in 0..nv {
                let sj = (j + mv).rem_euclid(nv) as usize;
                out.values[(i as usize, j as usize)] = self.values[(si, sj)];
            }
        }
        out
    }

    /// Second moments (mean, variances, covariance) of |f| as a density.
    pub fn moments(&self) -> FieldMoments<S> {
        let g = &self.grid;
        let mut m = S::zero();
        let (mut mx, mut mv) = (S::zero(), S::zero());
        for i in 0..g.nx {
            let x = g.x(i);
            for j in 0..g.nv {
                let w = self.values[(i, j)];
                m += w;
                mx += w * x;
                mv += w * g.v(j);
            }
        }
        let m = m * g.cell();
        let mean_x = mx * g.cell() / m;
        let mean_v = mv * g.cell() / m;
        let (mut vx, mut vv, mut cxv) = (S::zero(), S::zero(), S::zero());
        for i in 0..g.nx {
            let dx = g.x(i) - mean_x;
            for j in 0..g.nv {
                let dv = g.v(j) - mean_v;
                let w = self.values[(i, j)];
                vx += w * dx * dx;
                vv += w * dv * dv;
                cxv += w * dx * dv;
            }
        }
        FieldMoments {
            mass: m,
            mean_x,
            mean_v,
            var_x: vx * g.cell() / m,
            var_v: vv * g.cell() / m,
            cov_xv: cxv * g.cell() / m,
        }
    }

    /// Fraction of |f|-mass lying within `margin`*L of either boundary.
    /// The torus-truncation monitor: experiments require this to stay tiny.
    pub fn boundary_mass_fraction(&self, margin: S) -> S {
        let g = &self.grid;
        let x_cut = g.lx * (S::one() - margin);
        let v_cut = g.lv * (S::one() - margin);
        let mut near = S::zero();
        let mut total = S::zero();
        for i in 0..g.nx {
            let x = g.x(i);
            for j in 0..g.nv {
                let a = self.values[(i, j)].abs();
                total += a;
                if x.abs() > x_cut || g.v(j).abs() > v_cut {
                    near += a;
                }
            }
        }
        if total == S::zero() {
            S::zero()
        } else {
            near / total
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FieldMoments<S: Scalar> {
    pub mass: S,
    pub mean_x: S,
    pub mean_v: S,
    pub var_x: S,
    pub var_v: S,
    pub cov_xv: S,
}

/// Grid-quadrature L^p norm: (hx*hv*sum |f|^p)^(1/p); max |f| for p = inf.
pub fn lp_norm<S: Scalar>(field: &Field<S>, p: S) -> S {
    assert!(
        p >= S::one() || p == S::infinity(),
        "lp_norm requires p >= 1 or p = inf"
    );
    if p == S::infinity() {
        return field
            .values
            .iter()
            .fold(S::zero(), |acc, &a| acc.max(a.abs()));
    }
    let two = lit::<S>(2.0);
    let s = if p == two {
        crate::stats::pairwise_sum_iter(field.values.iter().map(|&a| a * a))
    } else if p == S::one() {
        crate::stats::pairwise_sum_iter(field.values.iter().map(|&a| a.abs()))
    } else {
        crate::stats::pairwise_sum_iter(field.values.iter().map(|&a| a.abs().powf(p)))
    };
    (s * field.grid.cell()).powf(S::one() / p)
}

/// L2 inner product <f, g> with quadrature weight.
pub fn inner<S: Scalar>(f: &Field<S>, g: &Field<S>) -> S {
    assert!(f.grid.same_shape(&g.grid), "field shape mismatch");
    crate::stats::pairwise_sum_iter(f.values.iter().zip(g.values.iter()).map(|(&a, &b)| a * b))
        * f.grid.cell()
}

/// Writes the binary dump: magic "KSPDE1", Nx:u32, Nv:u32, Lx:f64, Lv:f64
/// (little-endian) followed by Nx*Nv float64 values in x-major order.
pub fn write_field_binary<S: Scalar>(field: &Field<S>, path: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_all(FIELD_MAGIC)?;
    w.write_all(&(field.grid.nx as u32).to_le_bytes())?;
    w.write_all(&(field.grid.nv as u32).to_le_bytes())?;
    w.write_all(&field.grid.lx.to_f64().unwrap().to_le_bytes())?;
    w.write_all(&field.grid.lv.to_f64().unwrap().to_le_bytes())?;
    for i in 0..field.grid.nx {
        for j in 0..field.grid.nv {
            w.write_all(&field.values[(i, j)].to_f64().unwrap().to_le_bytes())?;
        }
    }
    Ok(())
}

/// Reads a binary field dump written by [`write_field_binary`].
pub fn read_field_binary<S: Scalar>(path: &Path) -> Result<Field<S>> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 6];
    r.read_exact(&mut magic)?;
    if &magic != FIELD_MAGIC {
        return Err(Error::Config(format!(
            "bad field magic {:?}, expected {:?}",
            magic, FIELD_MAGIC
        )));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let nx = u32::from_le_bytes(b4) as usize;
    r.read_exact(&mut b4)?;
    let nv = u32::from_le_bytes(b4) as usize;
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let lx = f64::from_le_bytes(b8);
    r.read_exact(&mut b8)?;
    let lv = f64::from_le_bytes(b8);
    let grid = make_grid::<S>(lit(lx), lit(lv), nx, nv)?;
    let mut field = Field::zeros(grid);
    for i in 0..nx {
        for j in 0..nv {
            r.read_exact(&mut b8)?;
            field.values[(i, j)] = lit(f64::from_le_bytes(b8));
        }
    }
    Ok(field)
}

/// CSV export: header `x,v,value`, one row per node in x-major order.
pub fn write_field_csv<S: Scalar>(field: &Field<S>, path: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "x,v,value")?;
    for i in 0..field.grid.nx {
        let x = field.grid.x(i).to_f64().unwrap();
        for j in 0..field.grid.nv {
            writeln!(
                w,
                "{},{},{}",
                x,
                field.grid.v(j).to_f64().unwrap(),
                field.values[(i, j)].to_f64().unwrap()
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_spacing() {
        let g = make_grid(8.0, 8.0, 128, 128).unwrap();
        assert_eq!(g.hx(), 0.125);
        assert_eq!(g.hv(), 0.125);
        let g = make_grid(std::f64::consts::PI, std::f64::consts::PI, 64, 64).unwrap();
        assert!((g.hx() - 2.0 * std::f64::consts::PI / 64.0).abs() < 1e-15);
    }

    #[test]
    fn grid_rejects_bad_sizes() {
        assert!(make_grid(8.0, 8.0, 7, 128).is_err());
        assert!(make_grid(8.0, 8.0, 128, 48).is_err());
        assert!(make_grid(-1.0, 8.0, 128, 128).is_err());
        assert!(make_grid(8.0, 0.0, 128, 128).is_err());
        assert!(make_grid(8.0, 8.0, 4, 4).is_err());
    }

    #[test]
    fn lp_norm_of_indicator_is_domain_measure() {
        let g = make_grid(8.0f64, 8.0, 64, 64).unwrap();
        let one = Field::constant(g, 1.0);
        // |domain| = 4 Lx Lv = 256
        assert!((lp_norm(&one, 1.0) - 256.0).abs() < 1e-10);
        let zero = Field::zeros(g);
        for p in [1.0, 2.0, f64::INFINITY] {
            assert_eq!(lp_norm(&zero, p), 0.0);
        }
    }

    #[test]
    fn lp_norm_gaussian_matches_analytic() {
        // ||exp(-x^2-v^2)||_2 = sqrt(pi/2) via the 1-D x 1-D product integral
        let g = make_grid(8.0f64, 8.0, 256, 256).unwrap();
        let f = Field::from_fn(g, |x, v| (-x * x - v * v).exp());
        let exact = (std::f64::consts::PI / 2.0).sqrt();
        assert!((lp_norm(&f, 2.0) - exact).abs() < 1e-6);
    }

    #[test]
    fn binary_roundtrip() {
        let g = make_grid(2.0, 4.0, 16, 8).unwrap();
        let f = Field::from_fn(g, |x, v| x * v + 0.5);
        let dir = std::env::temp_dir().join("skelab_grid_test");
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("f.bin");
        write_field_binary(&f, &p).unwrap();
        let f2: Field<f64> = read_field_binary(&p).unwrap();
        assert_eq!(f.values, f2.values);
        assert_eq!(f.grid, f2.grid);
    }

    #[test]
    fn boundary_monitor_flags_edge_mass() {
        let g = make_grid(8.0f64, 8.0, 64, 64).unwrap();
        let centered = Field::from_fn(g, |x, v| (-(x * x + v * v)).exp());
        assert!(centered.boundary_mass_fraction(0.5) < 1e-6);
        let edge = Field::from_fn(g, |x, _| if x > 7.0 { 1.0 } else { 0.0 });
        assert!(edge.boundary_mass_fraction(0.5) > 0.9);
    }
}
