//! Computational domain, source segment and lattice indexing.
//!
//! The domain is the rectangle `(-R, R) x (a, b)` with point sources on the
//! segment `{(alpha, 0) : |alpha| < d}` below it. Lattice indices in the
//! public functions of this module are 1-based so that `(1, 1)` is the
//! corner `(-R, a)` and `(T_x + 1, T_x + 1)` the corner `(R, b)`.

use crate::error::{Error, Result};

/// Validated geometry and discretization parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainConfig {
    /// Half-width `R` of the rectangle.
    pub half_width: f64,
    /// Lower edge `a`.
    pub y_min: f64,
    /// Upper edge `b`.
    pub y_max: f64,
    /// Half-length `d` of the source segment.
    pub source_half_len: f64,
    /// Lattice subdivisions per axis, `T_x`.
    pub cells: usize,
    /// Subdivisions of the source segment, `T_alpha`.
    pub source_cells: usize,
    /// Basis truncation order `N`.
    pub basis_len: usize,
}

impl DomainConfig {
    pub fn new(
        half_width: f64,
        y_min: f64,
        y_max: f64,
        source_half_len: f64,
        cells: usize,
        source_cells: usize,
        basis_len: usize,
    ) -> Result<Self> {
        let cfg = Self {
            half_width,
            y_min,
            y_max,
            source_half_len,
            cells,
            source_cells,
            basis_len,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.half_width, self.y_min, self.y_max, self.source_half_len]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Config("geometry values must be finite".into()));
        }
        if self.half_width <= 0.0 {
            return Err(Error::Config(format!("R must be positive, got {}", self.half_width)));
        }
        if self.y_min <= 0.0 || self.y_max <= self.y_min {
            return Err(Error::Config(format!(
                "need b > a > 0, got a = {}, b = {}",
                self.y_min, self.y_max
            )));
        }
        if self.source_half_len <= 0.0 {
            return Err(Error::Config(format!(
                "d must be positive, got {}",
                self.source_half_len
            )));
        }
        if self.cells < 2 {
            return Err(Error::Config(format!("T_x must be at least 2, got {}", self.cells)));
        }
        if self.source_cells < 2 {
            return Err(Error::Config(format!(
                "T_alpha must be at least 2, got {}",
                self.source_cells
            )));
        }
        if self.basis_len < 1 {
            return Err(Error::Config("N must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of lattice points per axis, `T_x + 1`.
    pub fn points_per_axis(&self) -> usize {
        self.cells + 1
    }

    /// Total number of unknowns `(T_x + 1)^2 N`.
    pub fn unknowns(&self) -> usize {
        self.points_per_axis().pow(2) * self.basis_len
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x > -self.half_width && x < self.half_width && y > self.y_min && y < self.y_max
    }
}

/// Uniform lattice over the closed rectangle.
#[derive(Debug, Clone)]
pub struct Grid {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub hx: f64,
    pub hy: f64,
}

impl Grid {
    pub fn len_per_axis(&self) -> usize {
        self.xs.len()
    }

    /// Lattice point with 1-based indices.
    pub fn lattice_point(&self, i: usize, j: usize) -> Result<(f64, f64)> {
        let n = self.len_per_axis();
        if i == 0 || j == 0 || i > n || j > n {
            return Err(Error::Index(format!("lattice point ({i}, {j}) outside 1..={n}")));
        }
        Ok((self.xs[i - 1], self.ys[j - 1]))
    }

    /// True if the 0-based lattice point lies on the boundary of the rectangle.
    pub fn on_boundary(&self, i: usize, j: usize) -> bool {
        let last = self.len_per_axis() - 1;
        i == 0 || j == 0 || i == last || j == last
    }

    /// 0-based boundary lattice points in lexicographic `(i, j)` order.
    pub fn boundary_points(&self) -> Vec<(usize, usize)> {
        let n = self.len_per_axis();
        let mut out = Vec::with_capacity(4 * (n - 1));
        for i in 0..n {
            for j in 0..n {
                if self.on_boundary(i, j) {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

/// Build the `(T_x + 1) x (T_x + 1)` lattice of the domain.
pub fn build_grid(config: &DomainConfig) -> Result<Grid> {
    config.validate()?;
    let t = config.cells;
    let hx = 2.0 * config.half_width / t as f64;
    let hy = (config.y_max - config.y_min) / t as f64;
    // endpoints are pinned so the last node is exactly R and b
    let xs = (0..=t)
        .map(|i| if i == t { config.half_width } else { -config.half_width + i as f64 * hx })
        .collect();
    let ys = (0..=t)
        .map(|j| if j == t { config.y_max } else { config.y_min + j as f64 * hy })
        .collect();
    Ok(Grid { xs, ys, hx, hy })
}

/// Flat unknown index `(i - 1)(T_x + 1)N + (j - 1)N + n`, all 1-based.
pub fn flat_index(i: usize, j: usize, n: usize, config: &DomainConfig) -> Result<usize> {
    let p = config.points_per_axis();
    let nb = config.basis_len;
    if i == 0 || j == 0 || n == 0 || i > p || j > p || n > nb {
        return Err(Error::Index(format!(
            "(i, j, n) = ({i}, {j}, {n}) outside 1..={p} x 1..={p} x 1..={nb}"
        )));
    }
    Ok((i - 1) * p * nb + (j - 1) * nb + n)
}

/// Inverse of [`flat_index`].
pub fn unflat_index(flat: usize, config: &DomainConfig) -> Result<(usize, usize, usize)> {
    let total = config.unknowns();
    if flat == 0 || flat > total {
        return Err(Error::Index(format!("flat index {flat} outside 1..={total}")));
    }
    let p = config.points_per_axis();
    let nb = config.basis_len;
    let k = flat - 1;
    Ok((k / (p * nb) + 1, (k / nb) % p + 1, k % nb + 1))
}

/// Source positions on the segment.
#[derive(Debug, Clone)]
pub struct SourceSet {
    pub alphas: Vec<f64>,
}

impl SourceSet {
    pub fn spacing(&self) -> f64 {
        self.alphas[1] - self.alphas[0]
    }
}

/// `alpha_i = -d + (i - 1) 2d / T_alpha`, `i = 1..=T_alpha + 1`.
pub fn source_positions(config: &DomainConfig) -> Result<SourceSet> {
    config.validate()?;
    let d = config.source_half_len;
    let t = config.source_cells;
    let step = 2.0 * d / t as f64;
    let alphas = (0..=t)
        .map(|i| if i == t { d } else { -d + i as f64 * step })
        .collect();
    Ok(SourceSet { alphas })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn full_size_config() -> DomainConfig {
        DomainConfig::new(1.0, 1.0, 3.0, 3.5, 150, 100, 15).unwrap()
    }

    #[test]
    fn grid_corners_and_spacing() {
        let cfg = full_size_config();
        let g = build_grid(&cfg).unwrap();
        assert_eq!(g.lattice_point(1, 1).unwrap(), (-1.0, 1.0));
        assert_eq!(g.lattice_point(151, 151).unwrap(), (1.0, 3.0));
        assert!((g.hx - 2.0 / 150.0).abs() < 1e-15);
        assert!((g.hx * 150.0 - 2.0).abs() < 1e-14);
        assert!((g.hy * 150.0 - 2.0).abs() < 1e-14);
        assert_eq!(g.xs.len() * g.ys.len(), 151 * 151);
        assert!(g.lattice_point(0, 1).is_err());
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(DomainConfig::new(0.0, 1.0, 3.0, 3.5, 10, 10, 3).is_err());
        assert!(DomainConfig::new(1.0, 0.0, 3.0, 3.5, 10, 10, 3).is_err());
        assert!(DomainConfig::new(1.0, 3.0, 3.0, 3.5, 10, 10, 3).is_err());
        assert!(DomainConfig::new(1.0, 1.0, 3.0, -1.0, 10, 10, 3).is_err());
        assert!(DomainConfig::new(1.0, 1.0, 3.0, 3.5, 1, 10, 3).is_err());
        assert!(DomainConfig::new(1.0, 1.0, 3.0, 3.5, 10, 1, 3).is_err());
        assert!(DomainConfig::new(1.0, 1.0, 3.0, 3.5, 10, 10, 0).is_err());
    }

    #[test]
    fn flat_index_examples() {
        let cfg = full_size_config();
        assert_eq!(flat_index(1, 1, 1, &cfg).unwrap(), 1);
        assert_eq!(flat_index(2, 1, 1, &cfg).unwrap(), 2266);
        assert!(flat_index(152, 1, 1, &cfg).is_err());
        assert!(flat_index(1, 1, 16, &cfg).is_err());
        assert!(unflat_index(0, &cfg).is_err());
    }

    #[test]
    fn flat_index_is_bijective_on_small_lattices() {
        for (t, n) in [(2, 1), (3, 2), (4, 2), (5, 3)] {
            let cfg = DomainConfig::new(1.0, 1.0, 2.0, 1.0, t, 4, n).unwrap();
            let mut seen = vec![false; cfg.unknowns()];
            for i in 1..=t + 1 {
                for j in 1..=t + 1 {
                    for k in 1..=n {
                        let f = flat_index(i, j, k, &cfg).unwrap();
                        assert!(!seen[f - 1]);
                        seen[f - 1] = true;
                        assert_eq!(unflat_index(f, &cfg).unwrap(), (i, j, k));
                    }
                }
            }
            assert!(seen.iter().all(|&s| s));
        }
    }

    #[test]
    fn sources_on_segment() {
        let s = source_positions(&full_size_config()).unwrap();
        assert_eq!(s.alphas.len(), 101);
        assert_eq!(s.alphas[0], -3.5);
        assert_eq!(s.alphas[100], 3.5);
        assert!((s.spacing() - 0.07).abs() < 1e-14);
    }

    #[test]
    fn boundary_point_count() {
        let cfg = DomainConfig::new(1.0, 1.0, 3.0, 3.5, 6, 10, 2).unwrap();
        let g = build_grid(&cfg).unwrap();
        assert_eq!(g.boundary_points().len(), 4 * 6);
    }
}
