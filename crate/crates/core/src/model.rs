//! Physical model: a square lattice of Kerr resonators with coherent
//! two-photon driving, nearest-neighbour hopping and single-photon loss.
//!
//! All energies and rates are in units of the hopping `J`, times in `1/J`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::C64;

/// Spatial dimension used by every lattice in this crate.
pub const DIMENSION: usize = 2;

/// Lattice spacing; fixes the length unit.
pub const LATTICE_SPACING: f64 = 1.0;

fn default_hop() -> f64 {
    1.0
}

fn default_periodic() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Detuning between half the pump frequency and the cavity frequency.
    pub delta: f64,
    /// Kerr nonlinearity.
    pub u_kerr: f64,
    /// Two-photon drive amplitude (taken real).
    pub g_drive: f64,
    /// Hopping strength.
    #[serde(default = "default_hop")]
    pub j_hop: f64,
    /// Single-photon loss rate.
    pub gamma: f64,
    /// Lattice side lengths, `[Lx, Ly]`.
    pub dims: Vec<usize>,
    /// Periodic boundary conditions in both directions.
    #[serde(default = "default_periodic")]
    pub periodic: bool,
}

impl ModelParams {
    /// The working point `U = gamma = J = 1`, `Delta = -1` on an `L x L`
    /// periodic lattice with drive `g`.
    pub fn standard(side: usize, g: f64) -> Self {
        ModelParams {
            delta: -1.0,
            u_kerr: 1.0,
            g_drive: g,
            j_hop: 1.0,
            gamma: 1.0,
            dims: vec![side, side],
            periodic: true,
        }
    }

    /// A single isolated resonator (open 1x1 lattice, no neighbours).
    pub fn single_site(delta: f64, u_kerr: f64, g: f64, gamma: f64) -> Self {
        ModelParams {
            delta,
            u_kerr,
            g_drive: g,
            j_hop: 1.0,
            gamma,
            dims: vec![1, 1],
            periodic: false,
        }
    }

    pub fn with_drive(&self, g: f64) -> Self {
        ModelParams {
            g_drive: g,
            ..self.clone()
        }
    }

    pub fn n_sites(&self) -> usize {
        self.dims.iter().product()
    }

    /// Hopping prefactor `J / (2d)` multiplying each bond.
    pub fn hop_prefactor(&self) -> f64 {
        self.j_hop / (2 * DIMENSION) as f64
    }

    /// Checks the parameter invariants. The Kerr term may be zero: the
    /// quadratic model is the exactness oracle for the Gaussian integrator.
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("delta", self.delta),
            ("u_kerr", self.u_kerr),
            ("g_drive", self.g_drive),
            ("j_hop", self.j_hop),
            ("gamma", self.gamma),
        ];
        for (name, value) in fields {
            if !value.is_finite() {
                return Err(Error::InvalidParams(format!("{name} must be finite")));
            }
        }
        if self.gamma < 0.0 {
            return Err(Error::InvalidParams("gamma must be >= 0".into()));
        }
        if self.u_kerr < 0.0 {
            return Err(Error::InvalidParams("u_kerr must be >= 0".into()));
        }
        if self.j_hop <= 0.0 {
            return Err(Error::InvalidParams("j_hop must be > 0".into()));
        }
        if self.dims.len() != DIMENSION {
            return Err(Error::Geometry(format!(
                "expected {DIMENSION} lattice dimensions, got {}",
                self.dims.len()
            )));
        }
        Ok(())
    }
}

/// Nearest-neighbour connectivity of a 2D lattice stored in CSR form.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeGraph {
    dims: [usize; 2],
    periodic: bool,
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    hop: f64,
}

impl LatticeGraph {
    pub fn n_sites(&self) -> usize {
        self.dims[0] * self.dims[1]
    }

    pub fn dims(&self) -> [usize; 2] {
        self.dims
    }

    pub fn is_periodic(&self) -> bool {
        self.periodic
    }

    /// `J / (2d)`.
    pub fn hop(&self) -> f64 {
        self.hop
    }

    #[inline]
    pub fn neighbors(&self, site: usize) -> &[usize] {
        &self.neighbors[self.offsets[site]..self.offsets[site + 1]]
    }

    /// Row-major site index.
    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.dims[0] + x
    }

    /// `sum_{j in nn(i)} x_j`, without the hopping prefactor.
    #[inline]
    pub fn neighbor_sum(&self, values: &[C64], site: usize) -> C64 {
        self.neighbors(site)
            .iter()
            .fold(C64::new(0.0, 0.0), |acc, &j| acc + values[j])
    }

    /// Dense `N x N` hopping matrix with entries `J/(2d)` on bonds.
    pub fn coupling_matrix(&self) -> Vec<f64> {
        let n = self.n_sites();
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            for &j in self.neighbors(i) {
                m[i * n + j] += self.hop;
            }
        }
        m
    }
}

/// Builds the nearest-neighbour graph for `params.dims`.
pub fn build_lattice(params: &ModelParams) -> Result<LatticeGraph> {
    if params.dims.len() != DIMENSION {
        return Err(Error::Geometry(format!(
            "only {DIMENSION}D lattices are supported, got dims {:?}",
            params.dims
        )));
    }
    let (lx, ly) = (params.dims[0], params.dims[1]);
    if lx == 0 || ly == 0 {
        return Err(Error::Geometry("lattice sides must be positive".into()));
    }
    if params.periodic && (lx < 3 || ly < 3) {
        return Err(Error::Geometry(format!(
            "periodic lattices need L >= 3 in every direction (got {lx}x{ly}); \
             smaller sides would double-count bonds"
        )));
    }

    let n = lx * ly;
    let mut offsets = Vec::with_capacity(n + 1);
    let mut neighbors = Vec::with_capacity(n * 2 * DIMENSION);
    offsets.push(0);
    for y in 0..ly {
        for x in 0..lx {
            let mut push = |nx: isize, ny: isize| {
                let (wx, wy) = if params.periodic {
                    (nx.rem_euclid(lx as isize), ny.rem_euclid(ly as isize))
                } else if nx < 0 || ny < 0 || nx >= lx as isize || ny >= ly as isize {
                    return;
                } else {
                    (nx, ny)
                };
                neighbors.push(wy as usize * lx + wx as usize);
            };
            let (xi, yi) = (x as isize, y as isize);
            push(xi - 1, yi);
            push(xi + 1, yi);
            push(xi, yi - 1);
            push(xi, yi + 1);
            offsets.push(neighbors.len());
        }
    }

    Ok(LatticeGraph {
        dims: [lx, ly],
        periodic: params.periodic,
        offsets,
        neighbors,
        hop: params.hop_prefactor(),
    })
}

/// Time derivative of a uniform mean-field amplitude:
/// `i(Delta+J) a - iU|a|^2 a - iG a* - (gamma/2) a`.
pub fn mean_field_drift(alpha: C64, params: &ModelParams) -> C64 {
    let i = C64::i();
    i * (params.delta + params.j_hop) * alpha - i * params.u_kerr * alpha.norm_sqr() * alpha
        - i * params.g_drive * alpha.conj()
        - 0.5 * params.gamma * alpha
}

/// Drive above which the uniform vacuum is linearly unstable,
/// `sqrt((Delta+J)^2 + gamma^2/4)`.
pub fn vacuum_stability_threshold(params: &ModelParams) -> f64 {
    let detuning = params.delta + params.j_hop;
    (detuning * detuning + 0.25 * params.gamma * params.gamma).sqrt()
}

/// Roots of [`mean_field_drift`], found by Newton iteration from a polar grid
/// of starting points. Always contains the vacuum; non-trivial roots come in
/// `+-alpha_0` pairs.
pub fn mean_field_fixed_points(params: &ModelParams) -> Result<Vec<C64>> {
    params.validate()?;
    let mut roots: Vec<C64> = vec![C64::new(0.0, 0.0)];
    for ir in 1..=12 {
        let r = 0.25 * ir as f64;
        for ia in 0..16 {
            let phase = std::f64::consts::TAU * ia as f64 / 16.0;
            let Some(root) = newton_root(C64::from_polar(r, phase), params) else {
                continue;
            };
            if roots.iter().all(|z| (z - root).norm() > 1e-8) {
                roots.push(root);
            }
        }
    }
    Ok(roots)
}

fn newton_root(start: C64, params: &ModelParams) -> Option<C64> {
    let i = C64::i();
    let c1 = i * (params.delta + params.j_hop) - 0.5 * params.gamma;
    let mut z = start;
    for _ in 0..200 {
        let f = mean_field_drift(z, params);
        if f.norm() < 1e-14 {
            return Some(z);
        }
        // Wirtinger derivatives: df = a dz + b dz*
        let a = c1 - 2.0 * i * params.u_kerr * z.norm_sqr();
        let b = -i * params.u_kerr * z * z - i * params.g_drive;
        let dx = a + b;
        let dy = i * (a - b);
        let det = dx.re * dy.im - dy.re * dx.im;
        if det.abs() < 1e-300 {
            return None;
        }
        let sx = (dy.im * f.re - dy.re * f.im) / det;
        let sy = (-dx.im * f.re + dx.re * f.im) / det;
        z -= C64::new(sx, sy);
        if !z.re.is_finite() || !z.im.is_finite() || z.norm() > 1e3 {
            return None;
        }
    }
    (mean_field_drift(z, params).norm() <= 1e-10).then_some(z)
}
