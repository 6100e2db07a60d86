//! Computational domain, measured boundary patch and the perturbed index.
//!
//! The box `[-side/2, side/2]^3` carries a node lattice `x_i = -side/2 + i h`,
//! `i = 0..=grid_n`. Unknowns of the finite-difference solver live on the
//! `(grid_n - 1)^3` interior nodes; a voxel is the dual cell around an interior
//! node, so voxel fields and solver fields share one indexing.
//!
//! Boundary cells are the face-interior nodes of the six faces. Edge and
//! corner nodes never enter the 7-point stencil, so every boundary cell belongs
//! to exactly one face and has an exact outward normal.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::vec3::{dist, Vec3};
use crate::{Error, Result};

const PLACEMENT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub side: f64,
    pub grid_n: usize,
}

impl Default for Domain {
    fn default() -> Self {
        Domain { side: 1.0, grid_n: 32 }
    }
}

impl Domain {
    pub fn new(side: f64, grid_n: usize) -> Result<Self> {
        if grid_n < 8 {
            return Err(Error::InvalidArgument(format!("grid_n = {grid_n} < 8")));
        }
        if !(side > 0.0 && side.is_finite()) {
            return Err(Error::InvalidArgument(format!("side = {side} must be positive")));
        }
        Ok(Domain { side, grid_n })
    }

    /// Unit box with `grid_n` cells per axis.
    pub fn unit(grid_n: usize) -> Result<Self> {
        Domain::new(1.0, grid_n)
    }

    pub fn h(&self) -> f64 {
        self.side / self.grid_n as f64
    }

    pub fn half_side(&self) -> f64 {
        0.5 * self.side
    }

    /// Interior nodes per axis.
    pub fn m(&self) -> usize {
        self.grid_n - 1
    }

    /// Coordinate of lattice node `i` (`0..=grid_n`).
    pub fn node(&self, i: usize) -> f64 {
        -self.half_side() + i as f64 * self.h()
    }

    /// Coordinate of interior index `i` (`0..m`).
    pub fn interior(&self, i: usize) -> f64 {
        self.node(i + 1)
    }

    pub fn interior_point(&self, ijk: [usize; 3]) -> Vec3 {
        [self.interior(ijk[0]), self.interior(ijk[1]), self.interior(ijk[2])]
    }

    pub fn n_interior(&self) -> usize {
        let m = self.m();
        m * m * m
    }

    pub fn index(&self, ijk: [usize; 3]) -> usize {
        let m = self.m();
        (ijk[0] * m + ijk[1]) * m + ijk[2]
    }

    pub fn unindex(&self, p: usize) -> [usize; 3] {
        let m = self.m();
        [p / (m * m), (p / m) % m, p % m]
    }

    /// Distance from a point to the box boundary (negative outside).
    pub fn boundary_distance(&self, x: &Vec3) -> f64 {
        let a = self.half_side();
        x.iter().map(|c| a - c.abs()).fold(f64::INFINITY, f64::min)
    }

    /// Radius of the circumscribed ball.
    pub fn radius(&self) -> f64 {
        self.half_side() * 3f64.sqrt()
    }
}

// ---------------------------------------------------------------------------
// Faces and the partial boundary
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Face {
    #[serde(rename = "x-")]
    XMinus,
    #[serde(rename = "x+")]
    XPlus,
    #[serde(rename = "y-")]
    YMinus,
    #[serde(rename = "y+")]
    YPlus,
    #[serde(rename = "z-")]
    ZMinus,
    #[serde(rename = "z+")]
    ZPlus,
}

impl Face {
    pub const ALL: [Face; 6] = [
        Face::XMinus,
        Face::XPlus,
        Face::YMinus,
        Face::YPlus,
        Face::ZMinus,
        Face::ZPlus,
    ];

    pub fn axis(self) -> usize {
        (self as usize) / 2
    }

    pub fn sign(self) -> f64 {
        if (self as usize) % 2 == 0 {
            -1.0
        } else {
            1.0
        }
    }

    pub fn normal(self) -> Vec3 {
        let mut n = [0.0; 3];
        n[self.axis()] = self.sign();
        n
    }

    /// The two tangential axes in increasing order.
    pub fn tangential(self) -> [usize; 2] {
        match self.axis() {
            0 => [1, 2],
            1 => [0, 2],
            _ => [0, 1],
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Face::XMinus => "x-",
            Face::XPlus => "x+",
            Face::YMinus => "y-",
            Face::YPlus => "y+",
            Face::ZMinus => "z-",
            Face::ZPlus => "z+",
        }
    }
}

impl fmt::Display for Face {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryCell {
    pub face: Face,
    /// Tangential interior indices along `face.tangential()`.
    pub a: usize,
    pub b: usize,
    pub position: Vec3,
    pub normal: Vec3,
    pub weight: f64,
    /// Distances from the node to the cell edges: `[a-, a+, b-, b+]`.
    pub extent: [f64; 4],
}

impl BoundaryCell {
    /// Interior node at `depth` (1 or 2) steps inward along the normal.
    pub fn inward(&self, domain: &Domain, depth: usize) -> [usize; 3] {
        let m = domain.m();
        let mut ijk = [0usize; 3];
        let [ta, tb] = self.face.tangential();
        ijk[ta] = self.a;
        ijk[tb] = self.b;
        ijk[self.face.axis()] = if self.face.sign() < 0.0 { depth - 1 } else { m - depth };
        ijk
    }
}

/// All boundary cells of the box together with the measured patch `Gamma`.
///
/// Cells not in `Gamma` form its exact complement.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialBoundary {
    pub domain: Domain,
    pub faces: Vec<Face>,
    pub cells: Vec<BoundaryCell>,
    in_gamma: Vec<bool>,
    gamma: Vec<usize>,
}

pub fn boundary_mesh(domain: &Domain, faces: &[Face]) -> Result<PartialBoundary> {
    if faces.is_empty() {
        return Err(Error::EmptyGamma);
    }
    let mut flags = [false; 6];
    for f in faces {
        flags[*f as usize] = true;
    }
    let m = domain.m();
    let h = domain.h();
    let w1 = |i: usize| if i == 0 || i + 1 == m { 1.5 * h } else { h };
    let lo = |i: usize| if i == 0 { h } else { 0.5 * h };
    let hi = |i: usize| if i + 1 == m { h } else { 0.5 * h };

    let mut cells = Vec::with_capacity(6 * m * m);
    for face in Face::ALL {
        let [ta, tb] = face.tangential();
        for a in 0..m {
            for b in 0..m {
                let mut p = [0.0; 3];
                p[face.axis()] = face.sign() * domain.half_side();
                p[ta] = domain.interior(a);
                p[tb] = domain.interior(b);
                cells.push(BoundaryCell {
                    face,
                    a,
                    b,
                    position: p,
                    normal: face.normal(),
                    weight: w1(a) * w1(b),
                    extent: [lo(a), hi(a), lo(b), hi(b)],
                });
            }
        }
    }
    let mut sorted: Vec<Face> = Face::ALL.iter().copied().filter(|f| flags[*f as usize]).collect();
    sorted.dedup();
    Ok(PartialBoundary::from_cells(*domain, sorted, cells))
}

impl PartialBoundary {
    fn from_cells(domain: Domain, faces: Vec<Face>, cells: Vec<BoundaryCell>) -> Self {
        let in_gamma: Vec<bool> = cells.iter().map(|c| faces.contains(&c.face)).collect();
        let gamma = (0..cells.len()).filter(|&i| in_gamma[i]).collect();
        PartialBoundary { domain, faces, cells, in_gamma, gamma }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn in_gamma(&self, cell: usize) -> bool {
        self.in_gamma[cell]
    }

    /// Indices of the `Gamma` cells, in cell order.
    pub fn gamma(&self) -> &[usize] {
        &self.gamma
    }

    pub fn gamma_len(&self) -> usize {
        self.gamma.len()
    }

    pub fn gamma_area(&self) -> f64 {
        compensated_sum(self.gamma.iter().map(|&i| self.cells[i].weight))
    }

    pub fn total_area(&self) -> f64 {
        compensated_sum(self.cells.iter().map(|c| c.weight))
    }

    /// Same geometry with the boundary cells listed in the order `perm`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let mut seen = vec![false; self.len()];
        if perm.len() != self.len() {
            return Err(Error::InvalidArgument("permutation length mismatch".into()));
        }
        for &p in perm {
            if p >= self.len() || seen[p] {
                return Err(Error::InvalidArgument("not a permutation".into()));
            }
            seen[p] = true;
        }
        let cells = perm.iter().map(|&p| self.cells[p].clone()).collect();
        Ok(PartialBoundary::from_cells(self.domain, self.faces.clone(), cells))
    }

    /// True when both describe the same grid and the same patch in the same order.
    pub fn same_layout(&self, other: &PartialBoundary) -> bool {
        self.domain == other.domain
            && self.faces == other.faces
            && self.cells.len() == other.cells.len()
            && self
                .cells
                .iter()
                .zip(&other.cells)
                .all(|(a, b)| a.face == b.face && a.a == b.a && a.b == b.b)
    }
}

// ---------------------------------------------------------------------------
// Index fields
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Ball,
    Cube,
}

impl Shape {
    /// Volume of the unit-scale shape: unit-radius ball or unit-side cube.
    pub fn unit_volume(self) -> f64 {
        match self {
            Shape::Ball => 4.0 * std::f64::consts::PI / 3.0,
            Shape::Cube => 1.0,
        }
    }

    pub fn unit_diameter(self) -> f64 {
        match self {
            Shape::Ball => 2.0,
            Shape::Cube => 3f64.sqrt(),
        }
    }

    /// Membership of a point given in unit-scale coordinates.
    pub fn contains(self, p: &Vec3) -> bool {
        match self {
            Shape::Ball => p[0] * p[0] + p[1] * p[1] + p[2] * p[2] <= 1.0,
            Shape::Cube => p.iter().all(|c| c.abs() <= 0.5),
        }
    }

    /// Half-width of the axis-aligned bounding box at unit scale.
    fn half_extent(self) -> f64 {
        match self {
            Shape::Ball => 1.0,
            Shape::Cube => 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inclusion {
    pub center: Vec3,
    pub shape: Shape,
    /// Constant index inside the inclusion.
    pub index: f64,
}

/// Known smooth background index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Background {
    Constant { value: f64 },
    /// `base + amplitude cos^2(pi r / 2R)` for `r < R`, `base` elsewhere.
    Bump { base: f64, amplitude: f64, center: Vec3, radius: f64 },
}

impl Default for Background {
    fn default() -> Self {
        Background::Constant { value: 1.0 }
    }
}

impl Background {
    pub fn value_at(&self, x: &Vec3) -> f64 {
        match self {
            Background::Constant { value } => *value,
            Background::Bump { base, amplitude, center, radius } => {
                let r = dist(x, center);
                if r < *radius {
                    let c = (0.5 * std::f64::consts::PI * r / radius).cos();
                    base + amplitude * c * c
                } else {
                    *base
                }
            }
        }
    }
}

/// Real samples on the interior nodes, indexed like [`Domain::index`].
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelField {
    pub domain: Domain,
    pub values: Vec<f64>,
}

impl VoxelField {
    pub fn from_fn(domain: Domain, f: impl Fn(&Vec3) -> f64) -> Self {
        let values = (0..domain.n_interior()).map(|p| f(&domain.interior_point(domain.unindex(p)))).collect();
        VoxelField { domain, values }
    }

    pub fn constant(domain: Domain, value: f64) -> Self {
        VoxelField { domain, values: vec![value; domain.n_interior()] }
    }

    pub fn get(&self, ijk: [usize; 3]) -> f64 {
        self.values[self.domain.index(ijk)]
    }

    pub fn dims(&self) -> [usize; 3] {
        let m = self.domain.m();
        [m, m, m]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefractiveMedium {
    pub domain: Domain,
    pub background: Background,
    /// Common scale of all inclusions.
    pub alpha: f64,
    pub inclusions: Vec<Inclusion>,
    pub c0: f64,
}

impl RefractiveMedium {
    pub fn homogeneous(domain: Domain, value: f64) -> Self {
        RefractiveMedium {
            domain,
            background: Background::Constant { value },
            alpha: 0.05,
            inclusions: Vec::new(),
            c0: 0.15,
        }
    }

    pub fn without_inclusions(&self) -> Self {
        RefractiveMedium { inclusions: Vec::new(), ..self.clone() }
    }

    pub fn with_alpha(&self, alpha: f64) -> Self {
        RefractiveMedium { alpha, ..self.clone() }
    }

    pub fn background_field(&self) -> VoxelField {
        VoxelField::from_fn(self.domain, |x| self.background.value_at(x))
    }

    /// Unit-scale volume `|B_j|` times `alpha^3` times `(n(z_j) - n_j)`.
    pub fn contrast_coefficient(&self, j: usize) -> f64 {
        let inc = &self.inclusions[j];
        self.alpha.powi(3) * (self.background.value_at(&inc.center) - inc.index) * inc.shape.unit_volume()
    }
}

// ---------------------------------------------------------------------------
// Placement
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    PairTooClose { first: usize, second: usize, distance: f64, c0: f64 },
    TooCloseToBoundary { inclusion: usize, distance: f64, c0: f64 },
    TooLarge { inclusion: usize, diameter: f64, c0: f64 },
    NotInside { inclusion: usize },
    BackgroundNotKnownNearBoundary { distance: f64, c0: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::PairTooClose { first, second, distance, c0 } => {
                write!(f, "pair ({}, {}): separation {distance} < {c0}", first + 1, second + 1)
            }
            Violation::TooCloseToBoundary { inclusion, distance, c0 } => {
                write!(f, "inclusion {}: boundary distance {distance} < {c0}", inclusion + 1)
            }
            Violation::TooLarge { inclusion, diameter, c0 } => {
                write!(f, "inclusion {}: scaled diameter {diameter} >= {c0}", inclusion + 1)
            }
            Violation::NotInside { inclusion } => {
                write!(f, "inclusion {}: not strictly inside the domain", inclusion + 1)
            }
            Violation::BackgroundNotKnownNearBoundary { distance, c0 } => {
                write!(f, "background varies at boundary distance {distance} < {c0}")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PlacementReport {
    pub violations: Vec<Violation>,
}

impl PlacementReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for PlacementReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return f.write_str("ok");
        }
        let parts: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        f.write_str(&parts.join("; "))
    }
}

pub fn validate_placement(medium: &RefractiveMedium) -> PlacementReport {
    let mut violations = Vec::new();
    let c0 = medium.c0;
    let incs = &medium.inclusions;
    for i in 0..incs.len() {
        for j in i + 1..incs.len() {
            let d = dist(&incs[i].center, &incs[j].center);
            if d < c0 - PLACEMENT_TOL {
                violations.push(Violation::PairTooClose { first: i, second: j, distance: d, c0 });
            }
        }
    }
    for (i, inc) in incs.iter().enumerate() {
        let d = medium.domain.boundary_distance(&inc.center);
        if d < c0 - PLACEMENT_TOL {
            violations.push(Violation::TooCloseToBoundary { inclusion: i, distance: d, c0 });
        }
        let diameter = medium.alpha * inc.shape.unit_diameter();
        if diameter >= c0 {
            violations.push(Violation::TooLarge { inclusion: i, diameter, c0 });
        }
        if d <= medium.alpha * inc.shape.half_extent() {
            violations.push(Violation::NotInside { inclusion: i });
        }
    }
    if let Background::Bump { center, radius, .. } = &medium.background {
        let d = medium.domain.boundary_distance(center) - radius;
        if d < c0 - PLACEMENT_TOL {
            violations.push(Violation::BackgroundNotKnownNearBoundary { distance: d, c0 });
        }
    }
    PlacementReport { violations }
}

/// Neumaier summation.
fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        comp += if sum.abs() >= v.abs() { (sum - t) + v } else { (v - t) + sum };
        sum = t;
    }
    sum + comp
}

/// Voxel field of `n_alpha`: `n_j` on voxels whose node lies in `z_j + alpha B_j`.
pub fn build_perturbed_index(medium: &RefractiveMedium) -> Result<VoxelField> {
    let mut field = medium.background_field();
    let domain = medium.domain;
    let m = domain.m() as isize;
    let h = domain.h();
    let mut owner: Vec<Option<usize>> = vec![None; domain.n_interior()];
    for (j, inc) in medium.inclusions.iter().enumerate() {
        let reach = medium.alpha * inc.shape.half_extent();
        let mut range = [(0isize, 0isize); 3];
        for ax in 0..3 {
            let lo = ((inc.center[ax] - reach + domain.half_side()) / h).floor() as isize - 2;
            let hi = ((inc.center[ax] + reach + domain.half_side()) / h).ceil() as isize;
            range[ax] = (lo.max(0), hi.min(m - 1));
        }
        for i in range[0].0..=range[0].1 {
            for k in range[1].0..=range[1].1 {
                for l in range[2].0..=range[2].1 {
                    let ijk = [i as usize, k as usize, l as usize];
                    let x = domain.interior_point(ijk);
                    let p = [
                        (x[0] - inc.center[0]) / medium.alpha,
                        (x[1] - inc.center[1]) / medium.alpha,
                        (x[2] - inc.center[2]) / medium.alpha,
                    ];
                    if !inc.shape.contains(&p) {
                        continue;
                    }
                    let idx = domain.index(ijk);
                    if let Some(first) = owner[idx] {
                        return Err(Error::Overlap { first, second: j, voxel: ijk });
                    }
                    owner[idx] = Some(j);
                    field.values[idx] = inc.index;
                }
            }
        }
    }
    Ok(field)
}
