//! Ground-truth attenuation functions for the numerical tests.

use crate::domain::DomainConfig;
use crate::error::{Error, Result};

/// Smooth unit bump `exp(-|x|^2 / (1 - |x|^2))` on the unit disc, 0 outside.
pub fn bump_template(x: f64, y: f64) -> f64 {
    let r2 = x * x + y * y;
    if r2 < 1.0 {
        (-r2 / (1.0 - r2)).exp()
    } else {
        0.0
    }
}

/// `weight * template((p - center) / radius)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bump {
    pub weight: f64,
    pub center: (f64, f64),
    pub radius: f64,
}

impl Bump {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.weight * bump_template((x - self.center.0) / self.radius, (y - self.center.1) / self.radius)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Axis {
    X,
    Y,
}

/// Open half-plane `coord > value` (or `<` when `above` is false).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfPlane {
    pub axis: Axis,
    pub above: bool,
    pub value: f64,
}

impl HalfPlane {
    fn contains(&self, x: f64, y: f64) -> bool {
        let c = match self.axis {
            Axis::X => x,
            Axis::Y => y,
        };
        if self.above {
            c > self.value
        } else {
            c < self.value
        }
    }
}

/// `weight` times the indicator of
/// `{inner < |x - cx| + |y - cy| < outer} ∩ cuts`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandRegion {
    pub weight: f64,
    pub center: (f64, f64),
    pub inner: f64,
    pub outer: f64,
    pub cuts: Vec<HalfPlane>,
}

impl BandRegion {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let l1 = (x - self.center.0).abs() + (y - self.center.1).abs();
        if l1 > self.inner && l1 < self.outer && self.cuts.iter().all(|c| c.contains(x, y)) {
            self.weight
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PhantomKind {
    BumpSum(Vec<Bump>),
    CharSet(Vec<BandRegion>),
    /// Constant value on the whole domain.
    Uniform(f64),
}

/// Attenuation function supported in the rectangle `(-R, R) x (a, b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    pub kind: PhantomKind,
    half_width: f64,
    y_min: f64,
    y_max: f64,
}

impl Phantom {
    pub fn new(kind: PhantomKind, domain: &DomainConfig) -> Self {
        Self {
            kind,
            half_width: domain.half_width,
            y_min: domain.y_min,
            y_max: domain.y_max,
        }
    }

    pub fn zero(domain: &DomainConfig) -> Self {
        Self::new(PhantomKind::BumpSum(Vec::new()), domain)
    }

    /// Value at `(x, y)`; zero outside the open domain.
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        if !(x > -self.half_width && x < self.half_width && y > self.y_min && y < self.y_max) {
            return 0.0;
        }
        match &self.kind {
            PhantomKind::BumpSum(bumps) => bumps.iter().map(|b| b.eval(x, y)).sum(),
            PhantomKind::CharSet(regions) => regions.iter().map(|r| r.eval(x, y)).sum(),
            PhantomKind::Uniform(v) => *v,
        }
    }

    pub fn bounds(&self) -> (f64, f64, f64) {
        (self.half_width, self.y_min, self.y_max)
    }
}

/// A localized feature whose extreme value is scored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inclusion {
    /// Numbering used in the comparison tables (1 for Test 1, 2..=4 for Test 2).
    pub number: u32,
    pub center: (f64, f64),
    pub radius: f64,
    /// Extreme value of the true function inside the inclusion.
    pub value: f64,
}

impl Inclusion {
    pub fn sign(&self) -> f64 {
        self.value.signum()
    }
}

/// Geometry and ground truth of one of the four numerical tests.
#[derive(Debug, Clone)]
pub struct TestCase {
    pub id: u32,
    pub half_width: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub source_half_len: f64,
    pub kind: PhantomKind,
    pub inclusions: Vec<Inclusion>,
}

impl TestCase {
    pub fn phantom(&self, domain: &DomainConfig) -> Phantom {
        Phantom::new(self.kind.clone(), domain)
    }
}

fn band(weight: f64, cuts: Vec<HalfPlane>) -> BandRegion {
    BandRegion {
        weight,
        center: (0.0, 4.5),
        inner: 0.3,
        outer: 0.6,
        cuts,
    }
}

/// The four test definitions.
pub fn test_case(id: u32) -> Result<TestCase> {
    let d = 3.5;
    let tc = match id {
        1 => {
            let bump = Bump { weight: 1.0, center: (0.0, 2.0), radius: 0.2 };
            TestCase {
                id,
                half_width: 1.0,
                y_min: 1.0,
                y_max: 3.0,
                source_half_len: d,
                kind: PhantomKind::BumpSum(vec![bump]),
                inclusions: vec![Inclusion { number: 1, center: bump.center, radius: bump.radius, value: 1.0 }],
            }
        }
        2 => {
            let bumps = vec![
                Bump { weight: -6.0, center: (-0.4, 4.0), radius: 0.2 },
                Bump { weight: 5.0, center: (-0.1, 3.5714), radius: 0.23 },
                Bump { weight: 6.0, center: (0.4, 4.0), radius: 0.18 },
            ];
            let inclusions = bumps
                .iter()
                .zip(2..)
                .map(|(b, number)| Inclusion { number, center: b.center, radius: b.radius, value: b.weight })
                .collect();
            TestCase {
                id,
                half_width: 1.0,
                y_min: 3.0,
                y_max: 5.0,
                source_half_len: d,
                kind: PhantomKind::BumpSum(bumps),
                inclusions,
            }
        }
        3 => TestCase {
            id,
            half_width: 1.0,
            y_min: 3.5,
            y_max: 5.5,
            source_half_len: d,
            kind: PhantomKind::CharSet(vec![band(
                1.0,
                vec![
                    HalfPlane { axis: Axis::X, above: true, value: 0.3 },
                    HalfPlane { axis: Axis::Y, above: true, value: 4.5 },
                ],
            )]),
            inclusions: Vec::new(),
        },
        4 => TestCase {
            id,
            half_width: 1.0,
            y_min: 3.5,
            y_max: 5.5,
            source_half_len: d,
            kind: PhantomKind::CharSet(vec![
                band(1.0, vec![HalfPlane { axis: Axis::Y, above: true, value: 4.5 }]),
                band(-1.0, vec![HalfPlane { axis: Axis::Y, above: false, value: 4.5 }]),
            ]),
            inclusions: Vec::new(),
        },
        other => return Err(Error::UnknownTest(other)),
    };
    Ok(tc)
}
