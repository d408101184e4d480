//! Balanced quad-tree meshes over a rectangle.
//!
//! The domain is covered by an `nx x ny` grid of square root cells; each root
//! is the top of a quad-tree. A cell is addressed by [`CellKey`]: its level and
//! its integer position in the level's uniform grid. `y` grows towards the
//! south (image row order), so the south neighbour of a cell centred at
//! `(x, y)` is centred at `(x, y + h)`.
//!
//! Leaves are numbered by a depth-first walk: roots in row-major order, then
//! children in the order north-west, north-east, south-west, south-east.
//! Every assembled operator depends on this numbering.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::raster::Raster;

/// Index of a leaf in [`QuadMesh::cells`].
pub type CellId = usize;

/// Deepest refinement level accepted below a root cell.
pub const MAX_LEVEL: u8 = 24;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MeshError {
    #[error("mesh needs at least one cell per axis (got {nx}x{ny})")]
    ZeroCells { nx: usize, ny: usize },
    #[error("domain {width}x{height} does not split into square {nx}x{ny} cells")]
    NonSquareCells { width: f64, height: f64, nx: usize, ny: usize },
    #[error("invalid leaf set: {0}")]
    InvalidLeaves(&'static str),
    #[error("cell {cell} violates the 2:1 balance constraint")]
    Unbalanced { cell: CellId },
    #[error("grid function and target mesh are not related by refinement")]
    MeshMismatch,
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("cell {cell} is not aligned with the {width}x{height} raster")]
    MisalignedRaster { cell: CellId, width: usize, height: usize },
    #[error("raster of {width}x{height} pixels has non-square pixels on this domain")]
    RasterAspect { width: usize, height: usize },
}

/// Physical rectangle `[x0, x0 + width] x [y0, y0 + height]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Domain {
    pub x0: f64,
    pub y0: f64,
    pub width: f64,
    pub height: f64,
}

impl Domain {
    pub const fn new(x0: f64, y0: f64, width: f64, height: f64) -> Self {
        Self { x0, y0, width, height }
    }

    pub const fn unit_square() -> Self {
        Self::new(0.0, 0.0, 1.0, 1.0)
    }

    /// `[0, width] x [0, height]` in pixel units.
    pub fn pixels(width: usize, height: usize) -> Self {
        Self::new(0.0, 0.0, width as f64, height as f64)
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }
}

/// Position of a cell in the uniform grid of its level.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellKey {
    pub level: u8,
    pub ix: u32,
    pub iy: u32,
}

impl CellKey {
    pub const fn new(level: u8, ix: u32, iy: u32) -> Self {
        Self { level, ix, iy }
    }

    pub fn parent(&self) -> Option<CellKey> {
        (self.level > 0).then(|| CellKey::new(self.level - 1, self.ix >> 1, self.iy >> 1))
    }

    /// Ancestor at `level` (`self` when the levels agree).
    pub fn ancestor(&self, level: u8) -> CellKey {
        debug_assert!(level <= self.level);
        let shift = self.level - level;
        CellKey::new(level, self.ix >> shift, self.iy >> shift)
    }

    /// Children in numbering order: NW, NE, SW, SE.
    pub fn children(&self) -> [CellKey; 4] {
        let (l, x, y) = (self.level + 1, 2 * self.ix, 2 * self.iy);
        [
            CellKey::new(l, x, y),
            CellKey::new(l, x + 1, y),
            CellKey::new(l, x, y + 1),
            CellKey::new(l, x + 1, y + 1),
        ]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    North,
    East,
    South,
    West,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::North, Direction::East, Direction::South, Direction::West];

    fn index(self) -> usize {
        self as usize
    }

    fn offset(self) -> (i64, i64) {
        match self {
            Direction::North => (0, -1),
            Direction::East => (1, 0),
            Direction::South => (0, 1),
            Direction::West => (-1, 0),
        }
    }

    pub fn opposite(self) -> Direction {
        match self {
            Direction::North => Direction::South,
            Direction::East => Direction::West,
            Direction::South => Direction::North,
            Direction::West => Direction::East,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Forward,
    Backward,
}

/// Direction in which the `side` difference along `axis` looks.
pub fn stencil_direction(axis: Axis, side: Side) -> Direction {
    match (axis, side) {
        (Axis::X, Side::Forward) => Direction::East,
        (Axis::X, Side::Backward) => Direction::West,
        (Axis::Y, Side::Forward) => Direction::South,
        (Axis::Y, Side::Backward) => Direction::North,
    }
}

/// Neighbour configuration seen by a one-sided difference.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeClass {
    /// Facing neighbour of equal size.
    Regular,
    /// Two half-size neighbours face the cell.
    Dangling1,
    /// Fine cell beside a double-size neighbour; its companion fine cell on
    /// the same coarse edge lies north (x differences) or east (y differences).
    Dangling2,
    /// As [`NodeClass::Dangling2`] with the companion south or west.
    Dangling3,
    /// Forward difference at the domain boundary.
    BoundaryNeumann,
    /// Backward difference at the domain boundary.
    BoundaryDirichlet,
}

/// Cells used by a one-sided stencil.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Facing {
    Boundary,
    Same(CellId),
    /// Two finer neighbours, ordered north-to-south or west-to-east.
    Finer(CellId, CellId),
    /// Coarser neighbour plus the companion fine cell sharing its edge.
    Coarser { neighbor: CellId, companion: CellId, class: NodeClass },
}

/// A leaf of the mesh.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cell {
    pub key: CellKey,
    pub center: [f64; 2],
    pub h: f64,
}

impl Cell {
    #[inline]
    pub fn area(&self) -> f64 {
        self.h * self.h
    }

    /// `[xmin, ymin, xmax, ymax]`
    pub fn bounds(&self) -> [f64; 4] {
        let r = 0.5 * self.h;
        [self.center[0] - r, self.center[1] - r, self.center[0] + r, self.center[1] + r]
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
struct Adjacent {
    ids: [CellId; 2],
    len: u8,
}

impl Adjacent {
    fn as_slice(&self) -> &[CellId] {
        &self.ids[..self.len as usize]
    }
}

/// Immutable, 2:1 balanced quad-tree mesh.
#[derive(Clone, Debug)]
pub struct QuadMesh {
    domain: Domain,
    roots: (u32, u32),
    root_h: f64,
    cells: Vec<Cell>,
    adjacency: Vec<[Adjacent; 4]>,
    index: BTreeMap<CellKey, CellId>,
}

impl PartialEq for QuadMesh {
    fn eq(&self, other: &Self) -> bool {
        self.domain == other.domain
            && self.roots == other.roots
            && self.cells.len() == other.cells.len()
            && self.cells.iter().zip(&other.cells).all(|(a, b)| a.key == b.key)
    }
}

impl QuadMesh {
    /// Uniform `nx x ny` grid of square cells covering `domain`.
    pub fn new_uniform(nx: usize, ny: usize, domain: Domain) -> Result<Self, MeshError> {
        let leaves = (0..ny as u32).flat_map(|iy| (0..nx as u32).map(move |ix| CellKey::new(0, ix, iy)));
        Self::from_leaves(domain, nx, ny, leaves)
    }

    /// Builds a mesh from an explicit leaf set, checking tiling and balance.
    pub fn from_leaves(
        domain: Domain,
        nx: usize,
        ny: usize,
        leaves: impl IntoIterator<Item = CellKey>,
    ) -> Result<Self, MeshError> {
        if nx == 0 || ny == 0 {
            return Err(MeshError::ZeroCells { nx, ny });
        }
        let root_h = domain.width / nx as f64;
        let hy = domain.height / ny as f64;
        if !(root_h > 0.0) || (root_h - hy).abs() > 1e-12 * root_h.max(hy) {
            return Err(MeshError::NonSquareCells { width: domain.width, height: domain.height, nx, ny });
        }
        let leaves: BTreeSet<CellKey> = leaves.into_iter().collect();
        build(domain, (nx as u32, ny as u32), root_h, &leaves)
    }

    #[inline]
    pub fn domain(&self) -> Domain {
        self.domain
    }

    /// Root grid size `(nx, ny)`.
    #[inline]
    pub fn roots(&self) -> (usize, usize) {
        (self.roots.0 as usize, self.roots.1 as usize)
    }

    #[inline]
    pub fn root_h(&self) -> f64 {
        self.root_h
    }

    #[inline]
    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    #[inline]
    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    #[inline]
    pub fn cell(&self, id: CellId) -> &Cell {
        &self.cells[id]
    }

    pub fn id_of(&self, key: CellKey) -> Option<CellId> {
        self.index.get(&key).copied()
    }

    /// Edge neighbours of `id` in `dir`: none at the boundary, one of equal or
    /// double size, or two of half size.
    pub fn neighbors(&self, id: CellId, dir: Direction) -> &[CellId] {
        self.adjacency[id][dir.index()].as_slice()
    }

    pub fn max_level(&self) -> u8 {
        self.cells.iter().map(|c| c.key.level).max().unwrap_or(0)
    }

    pub fn min_level(&self) -> u8 {
        self.cells.iter().map(|c| c.key.level).min().unwrap_or(0)
    }

    pub fn total_area(&self) -> f64 {
        self.cells.iter().map(Cell::area).sum()
    }

    /// Largest level difference between edge-adjacent leaves.
    pub fn max_adjacent_level_difference(&self) -> u8 {
        let mut worst = 0;
        for (id, cell) in self.cells.iter().enumerate() {
            for dir in Direction::ALL {
                for &nb in self.neighbors(id, dir) {
                    worst = worst.max(cell.key.level.abs_diff(self.cells[nb].key.level));
                }
            }
        }
        worst
    }

    /// Leaf that equals or contains the cell `key`.
    pub fn containing_leaf(&self, key: CellKey) -> Option<CellId> {
        (0..=key.level).rev().find_map(|l| self.index.get(&key.ancestor(l)).copied())
    }

    fn same_roots(&self, other: &QuadMesh) -> bool {
        self.roots == other.roots && self.domain == other.domain
    }

    /// For every leaf of `fine`, the leaf of `self` containing it. Fails unless
    /// `fine` refines `self`.
    pub fn ancestors_in(&self, fine: &QuadMesh) -> Result<Vec<CellId>, MeshError> {
        if !self.same_roots(fine) {
            return Err(MeshError::MeshMismatch);
        }
        fine.cells.iter().map(|c| self.containing_leaf(c.key).ok_or(MeshError::MeshMismatch)).collect()
    }

    /// True when every leaf of `self` lies inside a leaf of `coarse`.
    pub fn is_refinement_of(&self, coarse: &QuadMesh) -> bool {
        coarse.ancestors_in(self).is_ok()
    }

    /// Classifies the stencil of `id` for the difference along `axis`.
    pub fn classify(&self, id: CellId, axis: Axis, side: Side) -> NodeClass {
        match self.facing(id, axis, side) {
            Facing::Boundary => match side {
                Side::Forward => NodeClass::BoundaryNeumann,
                Side::Backward => NodeClass::BoundaryDirichlet,
            },
            Facing::Same(_) => NodeClass::Regular,
            Facing::Finer(..) => NodeClass::Dangling1,
            Facing::Coarser { class, .. } => class,
        }
    }

    /// Neighbour cells involved in the `side` difference along `axis`.
    pub fn facing(&self, id: CellId, axis: Axis, side: Side) -> Facing {
        let dir = stencil_direction(axis, side);
        let cell = &self.cells[id];
        match *self.neighbors(id, dir) {
            [] => Facing::Boundary,
            [a, b] => Facing::Finer(a, b),
            [nb] if self.cells[nb].key.level == cell.key.level => Facing::Same(nb),
            [nb] => {
                let k = cell.key;
                // The companion is the sibling that shares the coarse edge.
                let (companion, class) = match axis {
                    Axis::X if k.iy % 2 == 1 => (CellKey::new(k.level, k.ix, k.iy - 1), NodeClass::Dangling2),
                    Axis::X => (CellKey::new(k.level, k.ix, k.iy + 1), NodeClass::Dangling3),
                    Axis::Y if k.ix % 2 == 0 => (CellKey::new(k.level, k.ix + 1, k.iy), NodeClass::Dangling2),
                    Axis::Y => (CellKey::new(k.level, k.ix - 1, k.iy), NodeClass::Dangling3),
                };
                let companion = self.id_of(companion).expect("balanced mesh: companion of a dangling node is a leaf");
                Facing::Coarser { neighbor: nb, companion, class }
            }
            _ => unreachable!("at most two neighbours per direction"),
        }
    }

    /// Refines every cell in `marked` into four children, then refines further
    /// until no two edge-adjacent leaves differ by more than one level.
    pub fn refine(&self, marked: &[CellId]) -> QuadMesh {
        if marked.is_empty() {
            return self.clone();
        }
        let mut leaves: BTreeSet<CellKey> = self.cells.iter().map(|c| c.key).collect();
        let mut work = Vec::new();
        for &id in marked {
            let key = self.cells[id].key;
            if leaves.remove(&key) {
                for child in key.children() {
                    leaves.insert(child);
                    work.push(child);
                }
            }
        }
        let (nx, ny) = self.roots;
        while let Some(key) = work.pop() {
            if key.level < 2 || !leaves.contains(&key) {
                continue;
            }
            for dir in Direction::ALL {
                let Some(nkey) = shifted(key, dir, nx, ny) else { continue };
                let found = (0..=nkey.level).rev().map(|l| nkey.ancestor(l)).find(|a| leaves.contains(a));
                if let Some(coarse) = found {
                    if coarse.level + 1 < key.level {
                        leaves.remove(&coarse);
                        for child in coarse.children() {
                            leaves.insert(child);
                            work.push(child);
                        }
                        // The neighbour may still be too coarse.
                        work.push(key);
                    }
                }
            }
        }
        build(self.domain, self.roots, self.root_h, &leaves).expect("refinement preserves tiling and balance")
    }

    /// Refines every leaf once.
    pub fn refine_all(&self) -> QuadMesh {
        let all: Vec<CellId> = (0..self.n_cells()).collect();
        self.refine(&all)
    }

    /// Pixel index block `[x0, x1) x [y0, y1)` covered by `id` on a raster
    /// spanning the domain.
    pub fn pixel_block(&self, id: CellId, width: usize, height: usize) -> Result<[usize; 4], MeshError> {
        let px = self.domain.width / width as f64;
        let py = self.domain.height / height as f64;
        if (px - py).abs() > 1e-12 * px.max(py) {
            return Err(MeshError::RasterAspect { width, height });
        }
        let b = self.cells[id].bounds();
        let snap = |v: f64| -> Option<usize> {
            let r = crate::math::round(v);
            ((v - r).abs() <= 1e-9 * (1.0 + r.abs()) && r >= 0.0).then_some(r as usize)
        };
        let misaligned = MeshError::MisalignedRaster { cell: id, width, height };
        let x0 = snap((b[0] - self.domain.x0) / px).ok_or(misaligned.clone())?;
        let x1 = snap((b[2] - self.domain.x0) / px).ok_or(misaligned.clone())?;
        let y0 = snap((b[1] - self.domain.y0) / py).ok_or(misaligned.clone())?;
        let y1 = snap((b[3] - self.domain.y0) / py).ok_or(misaligned.clone())?;
        if x1 <= x0 || y1 <= y0 || x1 > width || y1 > height {
            return Err(misaligned);
        }
        Ok([x0, x1, y0, y1])
    }
}

fn shifted(key: CellKey, dir: Direction, nx: u32, ny: u32) -> Option<CellKey> {
    let (dx, dy) = dir.offset();
    let x = key.ix as i64 + dx;
    let y = key.iy as i64 + dy;
    let w = (nx as i64) << key.level;
    let h = (ny as i64) << key.level;
    (x >= 0 && y >= 0 && x < w && y < h).then(|| CellKey::new(key.level, x as u32, y as u32))
}

fn build(domain: Domain, roots: (u32, u32), root_h: f64, leaves: &BTreeSet<CellKey>) -> Result<QuadMesh, MeshError> {
    let (nx, ny) = roots;
    let mut internal = BTreeSet::new();
    for key in leaves {
        if key.level > MAX_LEVEL {
            return Err(MeshError::InvalidLeaves("refinement level too deep"));
        }
        if (key.ix as u64) >= (nx as u64) << key.level || (key.iy as u64) >= (ny as u64) << key.level {
            return Err(MeshError::InvalidLeaves("leaf outside the root grid"));
        }
        let mut k = *key;
        while let Some(p) = k.parent() {
            if !internal.insert(p) {
                break;
            }
            k = p;
        }
    }

    let mut cells = Vec::with_capacity(leaves.len());
    let mut stack = Vec::new();
    for iy in 0..ny {
        for ix in 0..nx {
            stack.push(CellKey::new(0, ix, iy));
            while let Some(key) = stack.pop() {
                if leaves.contains(&key) {
                    if internal.contains(&key) {
                        return Err(MeshError::InvalidLeaves("overlapping leaves"));
                    }
                    let h = root_h / (1u64 << key.level) as f64;
                    let center = [domain.x0 + (key.ix as f64 + 0.5) * h, domain.y0 + (key.iy as f64 + 0.5) * h];
                    cells.push(Cell { key, center, h });
                } else if internal.contains(&key) {
                    let c = key.children();
                    // Reverse so that NW is visited first.
                    stack.extend([c[3], c[2], c[1], c[0]]);
                } else {
                    return Err(MeshError::InvalidLeaves("leaves do not cover the domain"));
                }
            }
        }
    }
    if cells.len() != leaves.len() {
        return Err(MeshError::InvalidLeaves("overlapping leaves"));
    }

    let index: BTreeMap<CellKey, CellId> = cells.iter().enumerate().map(|(i, c)| (c.key, i)).collect();
    let mut adjacency = vec![[Adjacent::default(); 4]; cells.len()];
    for (id, cell) in cells.iter().enumerate() {
        for dir in Direction::ALL {
            let Some(nkey) = shifted(cell.key, dir, nx, ny) else { continue };
            let adj = &mut adjacency[id][dir.index()];
            if let Some(&nb) = index.get(&nkey) {
                *adj = Adjacent { ids: [nb, 0], len: 1 };
                continue;
            }
            if let Some(parent) = nkey.parent() {
                if let Some(&nb) = index.get(&parent) {
                    *adj = Adjacent { ids: [nb, 0], len: 1 };
                    continue;
                }
            }
            let c = nkey.children();
            // Children touching the shared edge, ordered N->S or W->E.
            let pair = match dir {
                Direction::East => [c[0], c[2]],
                Direction::West => [c[1], c[3]],
                Direction::South => [c[0], c[1]],
                Direction::North => [c[2], c[3]],
            };
            match (index.get(&pair[0]), index.get(&pair[1])) {
                (Some(&a), Some(&b)) => *adj = Adjacent { ids: [a, b], len: 2 },
                _ => return Err(MeshError::Unbalanced { cell: id }),
            }
        }
    }
    Ok(QuadMesh { domain, roots, root_h, cells, adjacency, index })
}

/// Per-cell values with `channels` components, stored channel-major: the
/// value of channel `k` on cell `i` sits at `k * N + i`.
///
/// Gradient-like fields of an `m`-channel function use `2m` channels ordered
/// `(x, y)` per original channel.
#[derive(Clone, Debug)]
pub struct GridFunction {
    mesh: Arc<QuadMesh>,
    channels: usize,
    values: Vec<f64>,
}

impl PartialEq for GridFunction {
    fn eq(&self, other: &Self) -> bool {
        self.channels == other.channels && self.values == other.values && same_mesh(&self.mesh, &other.mesh)
    }
}

pub(crate) fn same_mesh(a: &Arc<QuadMesh>, b: &Arc<QuadMesh>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

impl GridFunction {
    pub fn new(mesh: Arc<QuadMesh>, channels: usize, values: Vec<f64>) -> Result<Self, MeshError> {
        assert!(channels >= 1, "grid functions need at least one channel");
        let expected = channels * mesh.n_cells();
        if values.len() != expected {
            return Err(MeshError::LengthMismatch { expected, got: values.len() });
        }
        Ok(Self { mesh, channels, values })
    }

    pub fn zeros(mesh: Arc<QuadMesh>, channels: usize) -> Self {
        Self::constant(mesh, channels, 0.0)
    }

    pub fn constant(mesh: Arc<QuadMesh>, channels: usize, value: f64) -> Self {
        let n = mesh.n_cells() * channels;
        Self::new(mesh, channels, vec![value; n]).expect("length by construction")
    }

    /// `f(cell, channel)` on every cell.
    pub fn from_fn(mesh: Arc<QuadMesh>, channels: usize, mut f: impl FnMut(&Cell, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(channels * mesh.n_cells());
        for k in 0..channels {
            values.extend(mesh.cells().iter().map(|c| f(c, k)));
        }
        Self::new(mesh, channels, values).expect("length by construction")
    }

    #[inline]
    pub fn mesh(&self) -> &Arc<QuadMesh> {
        &self.mesh
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn n_cells(&self) -> usize {
        self.mesh.n_cells()
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn value(&self, cell: CellId, channel: usize) -> f64 {
        self.values[channel * self.n_cells() + cell]
    }

    pub fn channel(&self, channel: usize) -> &[f64] {
        let n = self.n_cells();
        &self.values[channel * n..(channel + 1) * n]
    }

    /// Same mesh and channel count, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self, MeshError> {
        Self::new(self.mesh.clone(), self.channels, values)
    }

    /// Mesh-weighted inner product `sum_i h_i^2 sum_k v_ki w_ki`.
    pub fn inner(&self, other: &GridFunction) -> f64 {
        assert!(self.channels == other.channels && self.n_cells() == other.n_cells());
        weighted_dot(&self.mesh, &self.values, &other.values)
    }

    pub fn norm(&self) -> f64 {
        crate::math::sqrt(self.inner(self))
    }

    /// `<v_k, 1>` for channel `k`: the integral of the piecewise-constant
    /// interpolant.
    pub fn integral(&self, channel: usize) -> f64 {
        self.mesh.cells().iter().zip(self.channel(channel)).map(|(c, v)| c.area() * v).sum()
    }

    /// Copies each value onto the leaves of `fine` it contains.
    pub fn project_fine(&self, fine: &Arc<QuadMesh>) -> Result<GridFunction, MeshError> {
        let parent = self.mesh.ancestors_in(fine)?;
        let n = self.n_cells();
        let mut values = Vec::with_capacity(self.channels * fine.n_cells());
        for k in 0..self.channels {
            values.extend(parent.iter().map(|&p| self.values[k * n + p]));
        }
        GridFunction::new(fine.clone(), self.channels, values)
    }

    /// Averages onto the leaves of `coarse`, which `self`'s mesh must refine.
    /// Averages are area-weighted, i.e. the arithmetic mean of the children
    /// for one-step refinements.
    pub fn project_coarse(&self, coarse: &Arc<QuadMesh>) -> Result<GridFunction, MeshError> {
        let parent = coarse.ancestors_in(&self.mesh)?;
        let nc = coarse.n_cells();
        let nf = self.n_cells();
        let mut covered = vec![0.0; nc];
        for (cell, &p) in self.mesh.cells().iter().zip(&parent) {
            covered[p] += cell.area();
        }
        for (c, area) in coarse.cells().iter().zip(&covered) {
            if (c.area() - area).abs() > 1e-9 * c.area() {
                return Err(MeshError::MeshMismatch);
            }
        }
        let mut values = vec![0.0; self.channels * nc];
        for k in 0..self.channels {
            for (i, (cell, &p)) in self.mesh.cells().iter().zip(&parent).enumerate() {
                values[k * nc + p] += cell.area() * self.values[k * nf + i];
            }
            for (p, c) in coarse.cells().iter().enumerate() {
                values[k * nc + p] /= c.area();
            }
        }
        GridFunction::new(coarse.clone(), self.channels, values)
    }

    /// Piecewise-constant evaluation of one channel on a `width x height`
    /// pixel raster spanning the domain.
    pub fn to_raster(&self, channel: usize, width: usize, height: usize) -> Result<Raster, MeshError> {
        let mut out = Raster::filled(width, height, 0.0);
        for (id, v) in self.channel(channel).iter().enumerate() {
            let [x0, x1, y0, y1] = self.mesh.pixel_block(id, width, height)?;
            for y in y0..y1 {
                for x in x0..x1 {
                    out.set(x, y, *v);
                }
            }
        }
        Ok(out)
    }
}

pub(crate) fn weighted_dot(mesh: &QuadMesh, a: &[f64], b: &[f64]) -> f64 {
    let n = mesh.n_cells();
    debug_assert_eq!(a.len(), b.len());
    debug_assert_eq!(a.len() % n, 0);
    let mut acc = 0.0;
    for (j, (x, y)) in a.iter().zip(b).enumerate() {
        acc += mesh.cells[j % n].area() * x * y;
    }
    acc
}

/// Piecewise-constant L2 projection of a raster spanning the mesh domain:
/// each cell gets the mean of the pixels it covers.
pub fn sample_image(image: &Raster, mesh: &Arc<QuadMesh>) -> Result<GridFunction, MeshError> {
    let mut values = Vec::with_capacity(mesh.n_cells());
    for id in 0..mesh.n_cells() {
        let [x0, x1, y0, y1] = mesh.pixel_block(id, image.width(), image.height())?;
        let mut acc = 0.0;
        for y in y0..y1 {
            for x in x0..x1 {
                acc += image.get(x, y);
            }
        }
        values.push(acc / ((x1 - x0) * (y1 - y0)) as f64);
    }
    GridFunction::new(mesh.clone(), 1, values)
}
