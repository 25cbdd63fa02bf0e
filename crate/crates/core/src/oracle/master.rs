use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::C64;

use super::fock::{FockDensityMatrix, FockSpace};
#[cfg(test)]
use super::fock::max_abs;

/// Photon cutoff for the working point `U = gamma = 1`, `Delta = -1`, `G <= 0.9`.
pub const DEFAULT_CUTOFF: usize = 20;

/// Largest superoperator dimension handled by dense linear algebra.
const DENSE_LIMIT: usize = 2500;

/// Lindblad generator `L(rho) = -i(H_eff rho - rho H_eff^dag) + sum_j c_j rho c_j^dag`
/// with `c_j = sqrt(gamma) a_j` and `H_eff = H - (i/2) sum_j c_j^dag c_j`.
#[derive(Debug, Clone)]
pub struct Generator {
    pub params: ModelParams,
    pub space: FockSpace,
    hamiltonian: DMatrix<C64>,
    h_eff: DMatrix<C64>,
    jumps: Vec<DMatrix<C64>>,
    max_rate: f64,
}

/// Builds the generator for one site, or for two sites coupled by a single
/// bond `-(J/2d)(a_1^dag a_2 + h.c.)`.
pub fn build_generator(params: &ModelParams, n_max: usize, n_sites: usize) -> Result<Generator> {
    params.validate()?;
    let space = FockSpace::new(n_max, n_sites)?;
    let dim = space.dim();
    let mut hamiltonian = DMatrix::<C64>::zeros(dim, dim);
    let mut jumps = Vec::with_capacity(n_sites);
    let ops: Vec<DMatrix<C64>> = (0..n_sites).map(|s| space.annihilation(s)).collect();
    for a in &ops {
        let ad = a.adjoint();
        let n = &ad * a;
        let a2 = a * a;
        let ad2 = a2.adjoint();
        hamiltonian += &n * C64::from(-params.delta)
            + &ad2 * &a2 * C64::from(0.5 * params.u_kerr)
            + (&ad2 + &a2) * C64::from(0.5 * params.g_drive);
        jumps.push(a * C64::from(params.gamma.sqrt()));
    }
    if n_sites == 2 {
        let bond = ops[0].adjoint() * &ops[1];
        hamiltonian -= (&bond + bond.adjoint()) * C64::from(params.hop_prefactor());
    }
    let mut h_eff = hamiltonian.clone();
    for c in &jumps {
        h_eff -= c.adjoint() * c * C64::new(0.0, 0.5);
    }
    let row_norm = |m: &DMatrix<C64>| {
        (0..m.nrows())
            .map(|i| m.row(i).iter().map(|z| z.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    };
    let max_rate = 2.0 * row_norm(&h_eff) + jumps.iter().map(|c| row_norm(c).powi(2)).sum::<f64>();
    Ok(Generator {
        params: params.clone(),
        space,
        hamiltonian,
        h_eff,
        jumps,
        max_rate,
    })
}

impl Generator {
    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn hamiltonian(&self) -> &DMatrix<C64> {
        &self.hamiltonian
    }

    /// `L(x)` for any operator `x`.
    pub fn apply(&self, x: &DMatrix<C64>) -> DMatrix<C64> {
        let mut out = (&self.h_eff * x - x * self.h_eff.adjoint()) * C64::new(0.0, -1.0);
        for c in &self.jumps {
            out += c * x * c.adjoint();
        }
        out
    }

    /// `L(rho)` for Hermitian `rho`, saving one product.
    fn apply_hermitian(&self, rho: &DMatrix<C64>) -> DMatrix<C64> {
        let hr = &self.h_eff * rho;
        let mut out = (&hr - hr.adjoint()) * C64::new(0.0, -1.0);
        for c in &self.jumps {
            out += c * rho * c.adjoint();
        }
        out
    }

    /// RK4 step size safely inside the stability region.
    fn max_dt(&self) -> f64 {
        (2.5 / self.max_rate).min(0.05)
    }

    fn rk4(&self, rho: &mut DMatrix<C64>, dt: f64) {
        let half = C64::from(0.5 * dt);
        let k1 = self.apply_hermitian(rho);
        let k2 = self.apply_hermitian(&(&*rho + &k1 * half));
        let k3 = self.apply_hermitian(&(&*rho + &k2 * half));
        let k4 = self.apply_hermitian(&(&*rho + &k3 * C64::from(dt)));
        *rho += (k1 + (k2 + k3) * C64::from(2.0) + k4) * C64::from(dt / 6.0);
    }

    /// Propagates the Hermitian operator `rho` by `duration`.
    pub fn propagate(&self, rho: &mut DMatrix<C64>, duration: f64) {
        if duration <= 0.0 {
            return;
        }
        let n = (duration / self.max_dt()).ceil().max(1.0) as usize;
        let dt = duration / n as f64;
        for _ in 0..n {
            self.rk4(rho, dt);
        }
    }

    /// Real coordinates of a Hermitian matrix: diagonal, then `(Re, Im)` of
    /// each upper-triangle entry.
    fn to_real(&self, rho: &DMatrix<C64>) -> DVector<f64> {
        let d = self.dim();
        let mut x = DVector::zeros(d * d);
        let mut k = d;
        for p in 0..d {
            x[p] = rho[(p, p)].re;
            for q in p + 1..d {
                x[k] = rho[(p, q)].re;
                x[k + 1] = rho[(p, q)].im;
                k += 2;
            }
        }
        x
    }

    fn from_real(&self, x: &DVector<f64>) -> DMatrix<C64> {
        let d = self.dim();
        let mut rho = DMatrix::zeros(d, d);
        let mut k = d;
        for p in 0..d {
            rho[(p, p)] = C64::from(x[p]);
            for q in p + 1..d {
                let z = C64::new(x[k], x[k + 1]);
                rho[(p, q)] = z;
                rho[(q, p)] = z.conj();
                k += 2;
            }
        }
        rho
    }

    /// The generator as a real matrix acting on Hermitian coordinates. Its
    /// spectrum is the spectrum of `L`.
    pub fn real_superoperator(&self) -> Result<DMatrix<f64>> {
        let n = self.dim() * self.dim();
        if n > DENSE_LIMIT {
            return Err(Error::InvalidParams(format!(
                "dense superoperator of size {n} exceeds {DENSE_LIMIT}; use time evolution"
            )));
        }
        let mut m = DMatrix::zeros(n, n);
        let mut e = DVector::zeros(n);
        for col in 0..n {
            e[col] = 1.0;
            let image = self.to_real(&self.apply_hermitian(&self.from_real(&e)));
            m.set_column(col, &image);
            e[col] = 0.0;
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SteadyMethod {
    /// Long-time RK4 integration from vacuum until the residual is small.
    #[default]
    Integrate,
    /// Direct solve of `L(rho) = 0` with unit trace.
    NullSpace,
}

/// Residual `||L(rho)||_F` below which a state counts as stationary.
const STEADY_RESIDUAL: f64 = 1e-8;
/// Longest integration attempted by [`steady_state`].
const STEADY_MAX_TIME: f64 = 5000.0;

pub fn steady_state(generator: &Generator, method: SteadyMethod) -> Result<FockDensityMatrix> {
    let rho = match method {
        SteadyMethod::Integrate => {
            let mut rho = FockDensityMatrix::vacuum(generator.space).rho;
            let mut t = 0.0;
            loop {
                if generator.apply_hermitian(&rho).norm() <= STEADY_RESIDUAL {
                    break rho;
                }
                if t >= STEADY_MAX_TIME {
                    return Err(Error::NoConvergence(format!(
                        "steady state residual above {STEADY_RESIDUAL:e} after t = {t}"
                    )));
                }
                generator.propagate(&mut rho, 1.0);
                t += 1.0;
            }
        }
        SteadyMethod::NullSpace => {
            let d = generator.dim();
            let mut m = generator.real_superoperator()?;
            let mut rhs = DVector::zeros(d * d);
            // Replace the (redundant) first equation by the trace condition.
            m.row_mut(0).fill(0.0);
            for p in 0..d {
                m[(0, p)] = 1.0;
            }
            rhs[0] = 1.0;
            let x = m
                .lu()
                .solve(&rhs)
                .ok_or_else(|| Error::NoConvergence("Liouvillian null space is degenerate".into()))?;
            let rho = generator.from_real(&x);
            let residual = generator.apply(&rho).norm();
            if residual > STEADY_RESIDUAL {
                return Err(Error::NoConvergence(format!("null-space residual {residual:e}")));
            }
            rho
        }
    };
    Ok(FockDensityMatrix {
        space: generator.space,
        rho,
    })
}

/// Density matrices at each of `times` (increasing, from `t = 0`).
pub fn evolve(generator: &Generator, initial: &FockDensityMatrix, times: &[f64]) -> Result<Vec<FockDensityMatrix>> {
    if initial.space != generator.space {
        return Err(Error::InvalidParams("initial state lives in a different Fock space".into()));
    }
    let mut rho = initial.rho.clone();
    let mut t = 0.0;
    let mut out = Vec::with_capacity(times.len());
    for &target in times {
        if !(target >= t) {
            return Err(Error::InvalidParams("evolution times must be increasing and >= 0".into()));
        }
        generator.propagate(&mut rho, target - t);
        t = target;
        out.push(FockDensityMatrix {
            space: generator.space,
            rho: rho.clone(),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum GapMethod {
    /// Evolve from a coherent state and fit the decay of `<a>(t)` over
    /// `[t_start, t_end]` sampled every `dt`.
    DecayFit { t_start: f64, t_end: f64, dt: f64 },
    /// Dense eigenvalues of the superoperator (single site only).
    Spectral,
}

impl Default for GapMethod {
    fn default() -> Self {
        GapMethod::DecayFit {
            t_start: 10.0,
            t_end: 30.0,
            dt: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapEstimate {
    pub rate: f64,
    /// Coefficient of determination of the fit (1 for the spectral method).
    pub r_squared: f64,
}

/// Initial displacement of the decay-fit run.
const DECAY_AMPLITUDE: C64 = C64::new(0.0, 1.0);

pub fn liouvillian_gap(generator: &Generator, method: GapMethod) -> Result<GapEstimate> {
    match method {
        GapMethod::Spectral => spectral_gap(generator),
        GapMethod::DecayFit { t_start, t_end, dt } => {
            if !(t_start >= 0.0 && t_end > t_start && dt > 0.0) {
                return Err(Error::InvalidParams("decay-fit window must satisfy 0 <= t_start < t_end".into()));
            }
            let space = generator.space;
            let ket = super::sse::coherent_product(space, DECAY_AMPLITUDE);
            let rho0 = FockDensityMatrix::pure(space, &ket)?;
            let n = ((t_end - t_start) / dt).round() as usize + 1;
            let times: Vec<f64> = (0..n).map(|k| t_start + k as f64 * dt).collect();
            let a = space.annihilation(0);
            let signal: Vec<C64> = evolve(generator, &rho0, &times)?
                .iter()
                .map(|r| r.expect(&a))
                .collect();
            let (rate, r_squared) = prony_slowest_rate(&signal, dt)?;
            if r_squared < 0.99 {
                return Err(Error::Fit(format!(
                    "ambiguous decay fit: R^2 = {r_squared:.4} over [{t_start}, {t_end}]"
                )));
            }
            Ok(GapEstimate { rate, r_squared })
        }
    }
}

fn spectral_gap(generator: &Generator) -> Result<GapEstimate> {
    let eig = generator.real_superoperator()?.complex_eigenvalues();
    let mut re: Vec<f64> = eig.iter().map(|z| z.re).collect();
    re.sort_by(|a, b| b.total_cmp(a));
    if re.len() < 2 || re[0].abs() > 1e-8 {
        return Err(Error::NoConvergence(format!(
            "no stationary eigenvalue found (largest real part {:e})",
            re.first().copied().unwrap_or(f64::NAN)
        )));
    }
    Ok(GapEstimate {
        rate: -re[1],
        r_squared: 1.0,
    })
}

/// Slowest decay rate of a uniformly sampled sum of complex exponentials by
/// linear prediction of increasing order. Returns the rate and the `R^2` of
/// the prediction.
fn prony_slowest_rate(x: &[C64], dt: f64) -> Result<(f64, f64)> {
    let mean = x.iter().sum::<C64>() / x.len() as f64;
    let ss_tot: f64 = x.iter().map(|z| (z - mean).norm_sqr()).sum();
    let scale: f64 = x.iter().map(|z| z.norm_sqr()).sum();
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::Fit("decay signal vanishes".into()));
    }
    let mut best = None;
    for order in 1..=3usize {
        if x.len() < 3 * order + 2 {
            break;
        }
        let rows = x.len() - order;
        let a = DMatrix::from_fn(rows, order, |r, c| x[r + order - 1 - c]);
        let b = DVector::from_fn(rows, |r, _| x[r + order]);
        let ah = a.adjoint();
        let coef = match (&ah * &a).lu().solve(&(&ah * &b)) {
            Some(c) => c,
            None => break,
        };
        let resid = &b - &a * &coef;
        let ss_res: f64 = resid.iter().map(|z| z.norm_sqr()).sum();
        // Roots of z^order - c_0 z^{order-1} - ... - c_{order-1}.
        let mut companion = DMatrix::<C64>::zeros(order, order);
        for c in 0..order {
            companion[(0, c)] = coef[c];
        }
        for r in 1..order {
            companion[(r, r - 1)] = C64::from(1.0);
        }
        let roots = companion.eigenvalues().ok_or_else(|| Error::Fit("root finding failed".into()))?;
        let slowest = roots.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let rate = -slowest.ln() / dt;
        let r2 = 1.0 - ss_res / ss_tot.max(f64::MIN_POSITIVE);
        best = Some((rate, r2));
        if ss_res <= 1e-14 * scale {
            break;
        }
    }
    best.ok_or_else(|| Error::Fit("too few samples for a decay fit".into()))
}
