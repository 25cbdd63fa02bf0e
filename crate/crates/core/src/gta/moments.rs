use crate::error::{Error, Result};
use crate::C64;

use super::GaussianState;

/// A creation or annihilation operator acting on one site.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ladder {
    Create(usize),
    Annihilate(usize),
}

impl Ladder {
    fn site(self) -> usize {
        match self {
            Ladder::Create(i) | Ladder::Annihilate(i) => i,
        }
    }

    fn mean(self, s: &GaussianState) -> C64 {
        match self {
            Ladder::Create(i) => s.alpha[i].conj(),
            Ladder::Annihilate(i) => s.alpha[i],
        }
    }
}

/// Ordered central pair moment `<delta_p delta_q>`.
fn pair(p: Ladder, q: Ladder, s: &GaussianState) -> C64 {
    use Ladder::*;
    match (p, q) {
        (Annihilate(i), Annihilate(j)) => s.u_at(i, j),
        (Create(i), Annihilate(j)) => s.v_at(i, j),
        (Annihilate(i), Create(j)) => {
            s.v_at(j, i) + if i == j { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) }
        }
        (Create(i), Create(j)) => s.u_at(i, j).conj(),
    }
}

fn central(ops: &[Ladder], s: &GaussianState) -> C64 {
    match ops.len() {
        0 => C64::new(1.0, 0.0),
        2 => pair(ops[0], ops[1], s),
        4 => {
            pair(ops[0], ops[1], s) * pair(ops[2], ops[3], s)
                + pair(ops[0], ops[2], s) * pair(ops[1], ops[3], s)
                + pair(ops[0], ops[3], s) * pair(ops[1], ops[2], s)
        }
        _ => C64::new(0.0, 0.0),
    }
}

/// Expectation of an ordered operator product (at most four ladder
/// operators) in a displaced Gaussian state, by Wick factorisation of the
/// central fluctuations. Odd central moments vanish.
pub fn gaussian_moment(ops: &[Ladder], state: &GaussianState) -> Result<C64> {
    if ops.len() > 4 {
        return Err(Error::UnsupportedMoment(format!(
            "order {} exceeds 4",
            ops.len()
        )));
    }
    let n = state.n_sites();
    if let Some(op) = ops.iter().find(|op| op.site() >= n) {
        return Err(Error::UnsupportedMoment(format!(
            "site {} out of range for {n} sites",
            op.site()
        )));
    }

    let m = ops.len();
    let mut total = C64::new(0.0, 0.0);
    let mut fluct = Vec::with_capacity(m);
    for mask in 0u32..(1 << m) {
        if mask.count_ones() % 2 == 1 {
            continue;
        }
        fluct.clear();
        let mut prefactor = C64::new(1.0, 0.0);
        for (k, &op) in ops.iter().enumerate() {
            if mask & (1 << k) != 0 {
                fluct.push(op);
            } else {
                prefactor *= op.mean(state);
            }
        }
        total += prefactor * central(&fluct, state);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::Ladder::*;
    use super::*;

    fn single(alpha: C64, u: C64, v: f64) -> GaussianState {
        GaussianState {
            alpha: vec![alpha],
            u: vec![u],
            v: vec![C64::new(v, 0.0)],
            t: 0.0,
        }
    }

    #[test]
    fn number_operator() {
        let s = single(C64::new(0.4, -0.7), C64::new(0.1, 0.2), 0.3);
        let n = gaussian_moment(&[Create(0), Annihilate(0)], &s).unwrap();
        assert!((n - C64::new(0.3 + s.alpha[0].norm_sqr(), 0.0)).norm() < 1e-15);
    }

    #[test]
    fn second_factorial_moment_closed_form() {
        let a = C64::new(0.4, -0.7);
        let u = C64::new(0.1, 0.25);
        let v = 0.3;
        let s = single(a, u, v);
        let got = gaussian_moment(&[Create(0), Create(0), Annihilate(0), Annihilate(0)], &s).unwrap();
        let n2 = a.norm_sqr();
        let expect = n2 * n2 + 4.0 * n2 * v + 2.0 * v * v + u.norm_sqr()
            + a.conj() * a.conj() * u
            + a * a * u.conj();
        assert!((got - expect).norm() < 1e-14, "{got} vs {expect}");
    }

    #[test]
    fn thermal_factorial_moment() {
        let nbar = 0.8;
        let s = single(C64::new(0.0, 0.0), C64::new(0.0, 0.0), nbar);
        let got = gaussian_moment(&[Create(0), Create(0), Annihilate(0), Annihilate(0)], &s).unwrap();
        assert!((got.re - 2.0 * nbar * nbar).abs() < 1e-15 && got.im == 0.0);
    }

    #[test]
    fn squeezed_vacuum_statistics() {
        let r: f64 = 0.6;
        let (sh, ch) = (r.sinh(), r.cosh());
        let s = single(C64::new(0.0, 0.0), C64::from_polar(sh * ch, 0.9), sh * sh);
        let got = gaussian_moment(&[Create(0), Create(0), Annihilate(0), Annihilate(0)], &s).unwrap();
        let expect = sh * sh * (3.0 * sh * sh + 1.0);
        assert!((got.re - expect).abs() < 1e-13 && got.im.abs() < 1e-14);
    }

    #[test]
    fn anti_normal_order_adds_commutator() {
        let s = single(C64::new(0.5, 0.5), C64::new(0.0, 0.0), 0.2);
        let an = gaussian_moment(&[Annihilate(0), Create(0)], &s).unwrap();
        let nm = gaussian_moment(&[Create(0), Annihilate(0)], &s).unwrap();
        assert!((an - nm - 1.0).norm() < 1e-15);
    }

    #[test]
    fn odd_central_moments_vanish() {
        let s = single(C64::new(0.0, 0.0), C64::new(0.3, 0.1), 0.4);
        let m3 = gaussian_moment(&[Create(0), Annihilate(0), Annihilate(0)], &s).unwrap();
        assert_eq!(m3, C64::new(0.0, 0.0));
    }

    #[test]
    fn order_five_rejected() {
        let s = GaussianState::vacuum(1);
        let ops = [Annihilate(0); 5];
        assert!(matches!(gaussian_moment(&ops, &s), Err(Error::UnsupportedMoment(_))));
        assert!(gaussian_moment(&[Annihilate(3)], &s).is_err());
    }
}
