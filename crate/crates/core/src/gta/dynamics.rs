use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{LatticeGraph, ModelParams};
use crate::C64;

use super::state::diagonal_tolerance;
use super::GaussianState;

/// Homodyne unraveling of the loss channels: each site's output is measured
/// along the quadrature `e^{-i theta} a + e^{i theta} a^dag`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Unraveling {
    #[serde(default)]
    pub quadrature_angle: f64,
}

/// Drift rates and noise matrix of the Ito equations
/// `d alpha = A dt + B dW`, `du = U dt`, `dv = V dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct Drift {
    pub alpha: Vec<C64>,
    pub u: Vec<C64>,
    pub v: Vec<C64>,
    /// Row-major `N x N`, `B_ij = sqrt(gamma) (e^{-i theta} u_ij + e^{i theta} v_ji)`.
    pub noise: Vec<C64>,
}

/// Euler-Maruyama integrator with preallocated work buffers.
///
/// The covariance drifts are the Wick-closed moment flows of the lossy Kerr
/// lattice minus the Ito corrections `B B^T` (for `u`) and `B^* B^T`
/// (for `v`). With `W = e^{-i theta} u + e^{i theta} v` one has `B = sqrt(gamma) W^T`,
/// so the corrections are `gamma W^T W` and `gamma W^dag W`, assembled from
/// three real products of the real and imaginary parts of `W`.
pub struct EmStepper<'a> {
    params: &'a ModelParams,
    lattice: &'a LatticeGraph,
    phase: C64,
    n: usize,
    diag: Vec<C64>,
    pump: Vec<C64>,
    w: Vec<C64>,
    wr: Vec<f64>,
    wi: Vec<f64>,
    xx: Vec<f64>,
    yy: Vec<f64>,
    xy: Vec<f64>,
    hop_u: Vec<C64>,
    hop_v: Vec<C64>,
    da: Vec<C64>,
    du: Vec<C64>,
    dv: Vec<C64>,
    kick: Vec<C64>,
}

impl<'a> EmStepper<'a> {
    pub fn new(
        params: &'a ModelParams,
        lattice: &'a LatticeGraph,
        unraveling: Unraveling,
    ) -> Result<Self> {
        params.validate()?;
        if !unraveling.quadrature_angle.is_finite() {
            return Err(Error::InvalidParams("quadrature angle must be finite".into()));
        }
        let n = lattice.n_sites();
        if n != params.n_sites() {
            return Err(Error::Geometry(format!(
                "lattice has {n} sites but parameters describe {}",
                params.n_sites()
            )));
        }
        let zeros = || vec![C64::new(0.0, 0.0); n * n];
        Ok(EmStepper {
            params,
            lattice,
            phase: C64::from_polar(1.0, -unraveling.quadrature_angle),
            n,
            diag: vec![C64::new(0.0, 0.0); n],
            pump: vec![C64::new(0.0, 0.0); n],
            w: zeros(),
            wr: vec![0.0; n * n],
            wi: vec![0.0; n * n],
            xx: vec![0.0; n * n],
            yy: vec![0.0; n * n],
            xy: vec![0.0; n * n],
            hop_u: zeros(),
            hop_v: zeros(),
            da: vec![C64::new(0.0, 0.0); n],
            du: zeros(),
            dv: zeros(),
            kick: vec![C64::new(0.0, 0.0); n],
        })
    }

    pub fn n_sites(&self) -> usize {
        self.n
    }

    /// Fills `da`, `du`, `dv` and `w` for drive `g`.
    fn rates(&mut self, s: &GaussianState, g: f64) {
        let n = self.n;
        let p = self.params;
        let i1 = C64::i();
        let hop = self.lattice.hop();
        let half_gamma = 0.5 * p.gamma;

        for i in 0..n {
            let a = s.alpha[i];
            let uii = s.u[i * n + i];
            let vii = s.v[i * n + i].re;
            let kerr = a.norm_sqr() * a + a.conj() * uii + 2.0 * vii * a;
            self.da[i] = i1 * p.delta * a - i1 * p.u_kerr * kerr - i1 * g * a.conj()
                + i1 * hop * self.lattice.neighbor_sum(&s.alpha, i)
                - half_gamma * a;
            self.diag[i] = C64::new(-half_gamma, p.delta - 2.0 * p.u_kerr * (a.norm_sqr() + vii));
            self.pump[i] = -i1 * (p.u_kerr * (a * a + uii) + g);
        }

        // Neighbour sums (A u)_ij and (A v)_ij as row combinations.
        for i in 0..n {
            let (hu, hv) = (
                &mut self.hop_u[i * n..(i + 1) * n],
                &mut self.hop_v[i * n..(i + 1) * n],
            );
            hu.fill(C64::new(0.0, 0.0));
            hv.fill(C64::new(0.0, 0.0));
            for &k in self.lattice.neighbors(i) {
                let (ru, rv) = (&s.u[k * n..(k + 1) * n], &s.v[k * n..(k + 1) * n]);
                for j in 0..n {
                    hu[j] += ru[j];
                    hv[j] += rv[j];
                }
            }
        }

        let conj_phase = self.phase.conj();
        for idx in 0..n * n {
            let w = self.phase * s.u[idx] + conj_phase * s.v[idx];
            self.w[idx] = w;
            self.wr[idx] = w.re;
            self.wi[idx] = w.im;
        }
        gram(n, &self.wr, &self.wr, &mut self.xx);
        gram(n, &self.wi, &self.wi, &mut self.yy);
        gram(n, &self.wr, &self.wi, &mut self.xy);

        let ih = i1 * hop;
        let gamma = p.gamma;
        for i in 0..n {
            for j in i..n {
                let ij = i * n + j;
                let ji = j * n + i;
                let (di, dj) = (self.diag[i], self.diag[j]);
                let (qi, qj) = (self.pump[i], self.pump[j]);
                let (uij, vij, vji) = (s.u[ij], s.v[ij], s.v[ji]);

                let ito_u = C64::new(self.xx[ij] - self.yy[ij], self.xy[ij] + self.xy[ji]);
                let ito_v = C64::new(self.xx[ij] + self.yy[ij], self.xy[ij] - self.xy[ji]);

                let mut du = (di + dj) * uij + ih * (self.hop_u[ij] + self.hop_u[ji])
                    + qi * vij
                    + qj * vji
                    - gamma * ito_u;
                if i == j {
                    du += qi;
                }
                let mut dv = (di.conj() + dj) * vij - ih * self.hop_v[ij]
                    + ih * self.hop_v[ji].conj()
                    + qi.conj() * uij
                    + uij.conj() * qj
                    - gamma * ito_v;
                if i == j {
                    dv.im = 0.0;
                }
                self.du[ij] = du;
                self.du[ji] = du;
                self.dv[ij] = dv;
                self.dv[ji] = dv.conj();
            }
        }
    }

    /// `(B dW)_i = sqrt(gamma) sum_k W_ki dW_k`.
    fn noise_kick(&mut self, dw: &[f64]) {
        let n = self.n;
        let sg = self.params.gamma.sqrt();
        self.kick.fill(C64::new(0.0, 0.0));
        for (k, &dwk) in dw.iter().enumerate() {
            let row = &self.w[k * n..(k + 1) * n];
            for (kick, &wki) in self.kick.iter_mut().zip(row) {
                *kick += wki * dwk;
            }
        }
        for kick in &mut self.kick {
            *kick *= sg;
        }
    }

    /// One Ito Euler-Maruyama step of length `h` at drive `g` with per-site
    /// Wiener increments `dw`. Only `alpha` receives noise.
    pub fn step(&mut self, s: &mut GaussianState, g: f64, h: f64, dw: &[f64]) -> Result<()> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidParams(format!("timestep must be positive, got {h}")));
        }
        if dw.len() != self.n || s.n_sites() != self.n {
            return Err(Error::Geometry("state, noise and lattice sizes differ".into()));
        }
        self.rates(s, g);
        self.noise_kick(dw);

        for ((a, da), kick) in s.alpha.iter_mut().zip(&self.da).zip(&self.kick) {
            *a += h * da + kick;
        }
        for (u, du) in s.u.iter_mut().zip(&self.du) {
            *u += h * du;
        }
        for (v, dv) in s.v.iter_mut().zip(&self.dv) {
            *v += h * dv;
        }
        s.t += h;
        self.post_step_checks(s, h)
    }

    fn post_step_checks(&self, s: &GaussianState, h: f64) -> Result<()> {
        let finite = |z: &C64| z.re.is_finite() && z.im.is_finite();
        if !s.alpha.iter().all(finite) {
            return Err(Error::NonFinite { what: "alpha", t: s.t });
        }
        if !s.u.iter().all(finite) {
            return Err(Error::NonFinite { what: "u", t: s.t });
        }
        if !s.v.iter().all(finite) {
            return Err(Error::NonFinite { what: "v", t: s.t });
        }
        let n = self.n;
        let floor = diagonal_tolerance(h);
        for i in 0..n {
            let d = s.v[i * n + i].re;
            if d < floor {
                return Err(Error::Invariant {
                    what: format!("negative occupation v[{i},{i}]"),
                    t: s.t,
                    value: d,
                });
            }
        }
        Ok(())
    }

    /// Rates at drive `g` without stepping.
    pub fn drift(&mut self, s: &GaussianState, g: f64) -> Drift {
        self.rates(s, g);
        let n = self.n;
        let sg = self.params.gamma.sqrt();
        let mut noise = vec![C64::new(0.0, 0.0); n * n];
        for i in 0..n {
            for k in 0..n {
                noise[i * n + k] = sg * self.w[k * n + i];
            }
        }
        Drift {
            alpha: self.da.clone(),
            u: self.du.clone(),
            v: self.dv.clone(),
            noise,
        }
    }
}

/// `out = a^T b` for row-major `n x n` matrices.
fn gram(n: usize, a: &[f64], b: &[f64], out: &mut [f64]) {
    let ni = n as isize;
    // SAFETY: all three slices hold n*n elements and the strides describe
    // in-bounds row-major (or transposed) views of them.
    unsafe {
        matrixmultiply::dgemm(
            n,
            n,
            n,
            1.0,
            a.as_ptr(),
            1,
            ni,
            b.as_ptr(),
            ni,
            1,
            0.0,
            out.as_mut_ptr(),
            ni,
            1,
        );
    }
}

/// Drift and noise coefficients at the drive stored in `params`.
pub fn drift_and_noise(
    state: &GaussianState,
    params: &ModelParams,
    lattice: &LatticeGraph,
    unraveling: Unraveling,
) -> Result<Drift> {
    let mut stepper = EmStepper::new(params, lattice, unraveling)?;
    if state.n_sites() != stepper.n_sites() {
        return Err(Error::Geometry("state and lattice sizes differ".into()));
    }
    let d = stepper.drift(state, params.g_drive);
    let finite = |z: &C64| z.re.is_finite() && z.im.is_finite();
    if !(d.alpha.iter().all(finite)
        && d.u.iter().all(finite)
        && d.v.iter().all(finite)
        && d.noise.iter().all(finite))
    {
        return Err(Error::NonFinite { what: "drift", t: state.t });
    }
    Ok(d)
}

/// Single Euler-Maruyama step at the drive stored in `params`.
pub fn em_step(
    state: &GaussianState,
    params: &ModelParams,
    lattice: &LatticeGraph,
    unraveling: Unraveling,
    h: f64,
    dw: &[f64],
) -> Result<GaussianState> {
    let mut stepper = EmStepper::new(params, lattice, unraveling)?;
    let mut next = state.clone();
    stepper.step(&mut next, params.g_drive, h, dw)?;
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gta::{gaussian_moment, Ladder};
    use crate::model::{build_lattice, mean_field_drift};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_state(n: usize, rng: &mut ChaCha8Rng) -> GaussianState {
        let mut c = || C64::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
        let alpha: Vec<C64> = (0..n).map(|_| c()).collect();
        let mut u = vec![C64::new(0.0, 0.0); n * n];
        let mut v = vec![C64::new(0.0, 0.0); n * n];
        for i in 0..n {
            for j in i..n {
                let x = 0.3 * c();
                u[i * n + j] = x;
                u[j * n + i] = x;
                let y = if i == j { C64::new(0.2 + x.norm(), 0.0) } else { 0.2 * c() };
                v[i * n + j] = y;
                v[j * n + i] = y.conj();
            }
        }
        GaussianState { alpha, u, v, t: 0.0 }
    }

    #[test]
    fn vacuum_without_drive_is_stationary() {
        let p = ModelParams::standard(3, 0.0);
        let g = build_lattice(&p).unwrap();
        let s = GaussianState::vacuum(9);
        let d = drift_and_noise(&s, &p, &g, Unraveling::default()).unwrap();
        assert!(d.alpha.iter().chain(&d.u).chain(&d.v).chain(&d.noise).all(|z| *z == C64::new(0.0, 0.0)));
        let next = em_step(&s, &p, &g, Unraveling::default(), 1e-3, &[0.1; 9]).unwrap();
        assert_eq!(next.alpha, s.alpha);
        assert_eq!(next.u, s.u);
        assert_eq!(next.v, s.v);
        assert_eq!(next.t, 1e-3);
    }

    #[test]
    fn coherent_uniform_state_follows_mean_field() {
        let p = ModelParams::standard(4, 0.8);
        let g = build_lattice(&p).unwrap();
        let c = C64::new(0.2, 0.9);
        let s = GaussianState::polarized(16, c);
        let d = drift_and_noise(&s, &p, &g, Unraveling::default()).unwrap();
        let mf = mean_field_drift(c, &p);
        for a in &d.alpha {
            assert!((a - mf).norm() < 1e-14);
        }
    }

    #[test]
    fn noise_independent_of_displacement() {
        let p = ModelParams::standard(3, 0.7);
        let g = build_lattice(&p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s1 = random_state(9, &mut rng);
        let mut s2 = s1.clone();
        for a in &mut s2.alpha {
            *a = C64::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        }
        let un = Unraveling { quadrature_angle: 0.4 };
        let b1 = drift_and_noise(&s1, &p, &g, un).unwrap().noise;
        let b2 = drift_and_noise(&s2, &p, &g, un).unwrap().noise;
        assert_eq!(b1, b2);
    }

    /// Flow of `<a_i a_j>` and `<a_i^dag a_j>` obtained by Wick-closing the
    /// Heisenberg equations operator by operator; the Gaussian drift must
    /// equal it minus the displacement part and the Ito correction.
    #[test]
    fn covariance_drift_matches_wick_closed_flow() {
        use Ladder::*;
        let mut p = ModelParams::standard(3, 0.63);
        p.delta = -0.7;
        p.u_kerr = 1.3;
        p.gamma = 0.9;
        let g = build_lattice(&p).unwrap();
        let n = 9;
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let s = random_state(n, &mut rng);
        let un = Unraveling { quadrature_angle: 0.3 };
        let d = drift_and_noise(&s, &p, &g, un).unwrap();
        let i1 = C64::i();
        let hop = g.hop();
        let m = |ops: &[Ladder]| gaussian_moment(ops, &s).unwrap();

        // d/dt <X a_i Y> where a_i is replaced by its Heisenberg rate.
        let rate_a = |pre: &[Ladder], i: usize, post: &[Ladder]| -> C64 {
            let with = |mid: &[Ladder]| {
                let ops: Vec<Ladder> = pre.iter().chain(mid).chain(post).copied().collect();
                m(&ops)
            };
            let mut r = (i1 * p.delta - 0.5 * p.gamma) * with(&[Annihilate(i)])
                - i1 * p.u_kerr * with(&[Create(i), Annihilate(i), Annihilate(i)])
                - i1 * p.g_drive * with(&[Create(i)]);
            for &k in g.neighbors(i) {
                r += i1 * hop * with(&[Annihilate(k)]);
            }
            r
        };
        let rate_adag = |pre: &[Ladder], i: usize, post: &[Ladder]| -> C64 {
            let with = |mid: &[Ladder]| {
                let ops: Vec<Ladder> = pre.iter().chain(mid).chain(post).copied().collect();
                m(&ops)
            };
            let mut r = (-i1 * p.delta - 0.5 * p.gamma) * with(&[Create(i)])
                + i1 * p.u_kerr * with(&[Create(i), Create(i), Annihilate(i)])
                + i1 * p.g_drive * with(&[Annihilate(i)]);
            for &k in g.neighbors(i) {
                r -= i1 * hop * with(&[Create(k)]);
            }
            r
        };

        let w: Vec<C64> = (0..n * n)
            .map(|k| C64::from_polar(1.0, -0.3) * s.u[k] + C64::from_polar(1.0, 0.3) * s.v[k])
            .collect();
        let b = |i: usize, k: usize| p.gamma.sqrt() * w[k * n + i];

        for i in 0..n {
            for j in 0..n {
                let flow_u = rate_a(&[], i, &[Annihilate(j)]) + rate_a(&[Annihilate(i)], j, &[]);
                let flow_v = rate_adag(&[], i, &[Annihilate(j)]) + rate_a(&[Create(i)], j, &[]);
                let mut ito_u = C64::new(0.0, 0.0);
                let mut ito_v = C64::new(0.0, 0.0);
                for k in 0..n {
                    ito_u += b(i, k) * b(j, k);
                    ito_v += b(i, k).conj() * b(j, k);
                }
                let (ai, aj) = (s.alpha[i], s.alpha[j]);
                let (dai, daj) = (d.alpha[i], d.alpha[j]);
                let expect_u = flow_u - dai * aj - ai * daj - ito_u;
                let expect_v = flow_v - dai.conj() * aj - ai.conj() * daj - ito_v;
                assert!((d.u[i * n + j] - expect_u).norm() < 1e-12, "u[{i},{j}]");
                assert!((d.v[i * n + j] - expect_v).norm() < 1e-12, "v[{i},{j}]");
            }
            let expect_a = rate_a(&[], i, &[]);
            assert!((d.alpha[i] - expect_a).norm() < 1e-13);
        }
    }

    #[test]
    fn step_preserves_structure_exactly() {
        let p = ModelParams::standard(4, 0.8);
        let g = build_lattice(&p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut s = random_state(16, &mut rng);
        let mut st = EmStepper::new(&p, &g, Unraveling::default()).unwrap();
        for _ in 0..200 {
            let dw: Vec<f64> = (0..16).map(|_| rng.random_range(-0.03..0.03)).collect();
            st.step(&mut s, 0.8, 1e-3, &dw).unwrap();
        }
        s.check_invariants().unwrap();
    }

    #[test]
    fn rejects_bad_timestep() {
        let p = ModelParams::standard(3, 0.1);
        let g = build_lattice(&p).unwrap();
        let s = GaussianState::vacuum(9);
        assert!(em_step(&s, &p, &g, Unraveling::default(), 0.0, &[0.0; 9]).is_err());
        assert!(em_step(&s, &p, &g, Unraveling::default(), -1e-3, &[0.0; 9]).is_err());
    }
}
