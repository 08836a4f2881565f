use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Boundary {
    /// Fluid fills `[base, base + h(x1, x2)]` below a box of height `cap`.
    FreeSurface { cap: f64 },
    /// Fluid fills the slab `[base, base + lid_height]`.
    RigidLid { lid_height: f64 },
}

/// Rectangular footprint `[0, L1] x [0, L2]` split into `n1 x n2` columns.
///
/// Vertical extents are measured from the cost model's base coordinate
/// (0, or `p_h` in pressure coordinates).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluidDomain {
    footprint: [f64; 2],
    grid: [usize; 2],
    boundary: Boundary,
}

const RIGID_VOLUME_TOL: f64 = 1e-9;

impl FluidDomain {
    pub fn free_surface(footprint: [f64; 2], cap: f64, grid: [usize; 2]) -> Result<Self> {
        Self::new(footprint, grid, Boundary::FreeSurface { cap })
    }

    pub fn rigid_lid(footprint: [f64; 2], lid_height: f64, grid: [usize; 2]) -> Result<Self> {
        Self::new(footprint, grid, Boundary::RigidLid { lid_height })
    }

    pub fn new(footprint: [f64; 2], grid: [usize; 2], boundary: Boundary) -> Result<Self> {
        if !footprint.iter().all(|l| l.is_finite() && *l > 0.0) {
            return Err(Error::InvalidDomain(format!(
                "footprint {footprint:?} must have positive finite sides"
            )));
        }
        if grid[0] == 0 || grid[1] == 0 {
            return Err(Error::InvalidDomain(format!(
                "grid {grid:?} needs at least one column per axis"
            )));
        }
        let area = footprint[0] * footprint[1];
        match boundary {
            Boundary::FreeSurface { cap } => {
                if !(cap.is_finite() && cap > 0.0) {
                    return Err(Error::InvalidDomain(format!("cap {cap} must be positive")));
                }
                if !(area * cap > 1.0) {
                    return Err(Error::InvalidDomain(format!(
                        "cap too low: box volume {} must exceed the unit fluid volume",
                        area * cap
                    )));
                }
            }
            Boundary::RigidLid { lid_height } => {
                if !(lid_height.is_finite() && lid_height > 0.0) {
                    return Err(Error::InvalidDomain(format!(
                        "lid height {lid_height} must be positive"
                    )));
                }
                if (area * lid_height - 1.0).abs() > RIGID_VOLUME_TOL {
                    return Err(Error::InvalidDomain(format!(
                        "rigid-lid volume {} must equal 1",
                        area * lid_height
                    )));
                }
            }
        }
        Ok(Self {
            footprint,
            grid,
            boundary,
        })
    }

    pub fn footprint(&self) -> [f64; 2] {
        self.footprint
    }

    pub fn grid(&self) -> [usize; 2] {
        self.grid
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn is_free_surface(&self) -> bool {
        matches!(self.boundary, Boundary::FreeSurface { .. })
    }

    /// Vertical extent of the box: the cap, or the lid height.
    pub fn thickness(&self) -> f64 {
        match self.boundary {
            Boundary::FreeSurface { cap } => cap,
            Boundary::RigidLid { lid_height } => lid_height,
        }
    }

    pub fn footprint_area(&self) -> f64 {
        self.footprint[0] * self.footprint[1]
    }

    pub fn column_count(&self) -> usize {
        self.grid[0] * self.grid[1]
    }

    pub fn spacing(&self) -> [f64; 2] {
        [
            self.footprint[0] / self.grid[0] as f64,
            self.footprint[1] / self.grid[1] as f64,
        ]
    }

    pub fn column_area(&self) -> f64 {
        let [d1, d2] = self.spacing();
        d1 * d2
    }

    /// Row-major column index: `index = j1 * n2 + j2`.
    pub fn column_index(&self, j1: usize, j2: usize) -> usize {
        j1 * self.grid[1] + j2
    }

    pub fn column_coords(&self, index: usize) -> (usize, usize) {
        (index / self.grid[1], index % self.grid[1])
    }

    pub fn column_center(&self, index: usize) -> [f64; 2] {
        let (j1, j2) = self.column_coords(index);
        let [d1, d2] = self.spacing();
        [(j1 as f64 + 0.5) * d1, (j2 as f64 + 0.5) * d2]
    }

    /// Diameter of the physical box.
    pub fn diameter(&self) -> f64 {
        let [l1, l2] = self.footprint;
        let h = self.thickness();
        (l1 * l1 + l2 * l2 + h * h).sqrt()
    }

    /// Same geometry at a different column resolution.
    pub fn with_grid(&self, grid: [usize; 2]) -> Result<Self> {
        Self::new(self.footprint, grid, self.boundary)
    }
}
