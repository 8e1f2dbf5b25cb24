//! The compact pseudo-Hermitian model: the Heisenberg nilmanifold Nil³.
//!
//! Coordinates `(x, y, z)` on the fundamental domain `[0,1)³`, contact form
//! `θ = dz − y dx`, horizontal frame `X = ∂x + y ∂z`, `Y = ∂y` and Reeb field
//! `T = ∂z`. With this frame `[X, Y] = −T` and `dθ(X, Y) = 1`. The quotient is by
//! the lattice generated by
//!
//! * `τ1(x, y, z) = (x + 1, y, z)`
//! * `τ2(x, y, z) = (x, y + 1, z + x)`
//! * `τ3(x, y, z) = (x, y, z + 1)`

use crate::scalar::Real;

pub type Point<T> = [T; 3];
pub type Vector<T> = [T; 3];

/// Horizontal frame and Reeb field at a point, as coordinate triples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame<T> {
    pub x: Vector<T>,
    pub y: Vector<T>,
    pub t: Vector<T>,
}

/// Pseudo-Hermitian model manifold together with its structure constants.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    pub name: String,
    /// Pseudo-Hermitian torsion (identically zero: Nil³ is Sasakian).
    pub torsion: T,
    /// Webster Ricci curvature (identically zero for Nil³).
    pub webster_ricci: T,
    /// Density of `θ ∧ dθ` against `dx ∧ dy ∧ dz`.
    pub volume_density: T,
    /// Half the real dimension minus one half: `dim M = 2m + 1`.
    pub m: usize,
}

impl<T: Real> Default for Model<T> {
    fn default() -> Self {
        Self::nil3()
    }
}

impl<T: Real> Model<T> {
    pub fn nil3() -> Self {
        Model {
            name: "nil3".to_string(),
            torsion: T::zero(),
            webster_ricci: T::zero(),
            volume_density: T::one(),
            m: 1,
        }
    }

    /// Looks a model up by its configuration name.
    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "nil3" => Some(Self::nil3()),
            _ => None,
        }
    }

    /// Homogeneous dimension `2m + 2` of the CC metric.
    pub fn homogeneous_dimension(&self) -> usize {
        2 * self.m + 2
    }

    pub fn frame_at(&self, p: Point<T>) -> Frame<T> {
        let (o, l) = (T::zero(), T::one());
        Frame {
            x: [l, o, p[1]],
            y: [o, l, o],
            t: [o, o, l],
        }
    }

    /// Coefficients of `θ` in the basis `dx, dy, dz`.
    pub fn theta_at(&self, p: Point<T>) -> [T; 3] {
        [-p[1], T::zero(), T::one()]
    }

    pub fn theta_apply(&self, p: Point<T>, v: Vector<T>) -> T {
        dot(self.theta_at(p), v)
    }

    /// `dθ = dx ∧ dy` evaluated on a pair of vectors.
    pub fn dtheta(&self, _p: Point<T>, v: Vector<T>, w: Vector<T>) -> T {
        v[0] * w[1] - v[1] * w[0]
    }

    /// `J_b` on the horizontal frame: `J X = Y`, `J Y = −X`, `J T = 0`.
    pub fn j_b(&self, p: Point<T>, v: Vector<T>) -> Vector<T> {
        // Decompose v = a X + b Y + c T, then map to a Y − b X.
        let f = self.frame_at(p);
        let a = v[0];
        let b = v[1];
        let mut out = [T::zero(); 3];
        for i in 0..3 {
            out[i] = a * f.y[i] - b * f.x[i];
        }
        out
    }

    /// Levi form `L_θ(v, w) = dθ(v, J_b w)` on horizontal vectors.
    pub fn levi_form(&self, p: Point<T>, v: Vector<T>, w: Vector<T>) -> T {
        self.dtheta(p, v, self.j_b(p, w))
    }

    /// Jacobians of the frame coefficient functions, `jac[f][i][j] = ∂_j F^i`.
    fn frame_jacobians(&self) -> [[[T; 3]; 3]; 3] {
        let o = T::zero();
        let mut jx = [[o; 3]; 3];
        jx[2][1] = T::one(); // X^z = y
        [jx, [[o; 3]; 3], [[o; 3]; 3]]
    }

    /// Coordinate Lie brackets `([X,Y], [X,T], [Y,T])` at `p`.
    pub fn brackets(&self, p: Point<T>) -> (Vector<T>, Vector<T>, Vector<T>) {
        let f = self.frame_at(p);
        let [jx, jy, jt] = self.frame_jacobians();
        let br = |a: Vector<T>, ja: &[[T; 3]; 3], b: Vector<T>, jb: &[[T; 3]; 3]| {
            let mut out = [T::zero(); 3];
            for i in 0..3 {
                for j in 0..3 {
                    out[i] = out[i] + a[j] * jb[i][j] - b[j] * ja[i][j];
                }
            }
            out
        };
        (
            br(f.x, &jx, f.y, &jy),
            br(f.x, &jx, f.t, &jt),
            br(f.y, &jy, f.t, &jt),
        )
    }
}

/// One of the three lattice generators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Deck {
    Tau1,
    Tau2,
    Tau3,
}

impl Deck {
    pub const ALL: [Deck; 3] = [Deck::Tau1, Deck::Tau2, Deck::Tau3];

    pub fn apply<T: Real>(self, p: Point<T>) -> Point<T> {
        let [x, y, z] = p;
        match self {
            Deck::Tau1 => [x + T::one(), y, z],
            Deck::Tau2 => [x, y + T::one(), z + x],
            Deck::Tau3 => [x, y, z + T::one()],
        }
    }

    pub fn apply_inverse<T: Real>(self, p: Point<T>) -> Point<T> {
        let [x, y, z] = p;
        match self {
            Deck::Tau1 => [x - T::one(), y, z],
            Deck::Tau2 => [x, y - T::one(), z - x],
            Deck::Tau3 => [x, y, z - T::one()],
        }
    }

    /// Pushforward of a tangent vector (the maps are affine, so this is point independent).
    pub fn push<T: Real>(self, v: Vector<T>) -> Vector<T> {
        match self {
            Deck::Tau2 => [v[0], v[1], v[2] + v[0]],
            _ => v,
        }
    }
}

/// Representative of the lattice orbit of `p` in `[0,1)³`. Idempotent.
pub fn canonical_rep<T: Real>(p: Point<T>) -> Point<T> {
    let [mut x, mut y, mut z] = p;
    let ny = y.floor();
    y = y - ny;
    z = z - ny * x;
    x = x - x.floor();
    z = z - z.floor();
    [wrap_unit(x), wrap_unit(y), wrap_unit(z)]
}

// Rounding can leave exactly 1.0 after subtracting the floor of a tiny negative.
fn wrap_unit<T: Real>(v: T) -> T {
    if v >= T::one() {
        v - T::one()
    } else {
        v
    }
}

/// Residuals of deck invariance at `p`: the pulled-back contact form and the pushed
/// frame compared with the frame at the image point. Returns the max abs deviation.
pub fn deck_invariance_residual<T: Real>(model: &Model<T>, deck: Deck, p: Point<T>) -> T {
    let q = deck.apply(p);
    let fp = model.frame_at(p);
    let fq = model.frame_at(q);
    let mut worst = T::zero();
    for (vp, vq) in [(fp.x, fq.x), (fp.y, fq.y), (fp.t, fq.t)] {
        let pushed = deck.push(vp);
        for i in 0..3 {
            worst = worst.max((pushed[i] - vq[i]).abs());
        }
    }
    // (τ*θ)_p(e_i) = θ_q(dτ e_i)
    for i in 0..3 {
        let mut e = [T::zero(); 3];
        e[i] = T::one();
        let pulled = model.theta_apply(q, deck.push(e));
        worst = worst.max((pulled - model.theta_apply(p, e)).abs());
    }
    worst
}

#[inline]
pub(crate) fn dot<T: Real>(a: [T; 3], b: [T; 3]) -> T {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn frame_at_origin_and_interior() {
        let m = Model::<f64>::nil3();
        let f = m.frame_at([0.0, 0.0, 0.0]);
        assert_eq!(f.x, [1.0, 0.0, 0.0]);
        assert_eq!(f.y, [0.0, 1.0, 0.0]);
        assert_eq!(f.t, [0.0, 0.0, 1.0]);
        assert_eq!(m.frame_at([0.25, 0.5, 0.75]).x, [1.0, 0.0, 0.5]);
    }

    #[test]
    fn contact_form_annihilates_horizontal_frame() {
        let m = Model::<f64>::nil3();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let p = [rng.gen(), rng.gen(), rng.gen()];
            let f = m.frame_at(p);
            assert!(m.theta_apply(p, f.x).abs() <= 1e-12);
            assert!(m.theta_apply(p, f.y).abs() <= 1e-12);
            assert!((m.theta_apply(p, f.t) - 1.0).abs() <= 1e-12);
            assert!((m.levi_form(p, f.x, f.x) - 1.0).abs() <= 1e-12);
            assert!((m.levi_form(p, f.y, f.y) - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn bracket_relations() {
        let m = Model::<f64>::nil3();
        let (xy, xt, yt) = m.brackets([0.3, 0.7, 0.1]);
        assert_eq!(xy, [0.0, 0.0, -1.0]);
        assert_eq!(xt, [0.0; 3]);
        assert_eq!(yt, [0.0; 3]);
        // dθ(X, Y) = 1 with this normalization
        let f = m.frame_at([0.3, 0.7, 0.1]);
        assert_eq!(m.dtheta([0.3, 0.7, 0.1], f.x, f.y), 1.0);
    }

    #[test]
    fn canonical_rep_examples() {
        let close = |a: [f64; 3], b: [f64; 3]| a.iter().zip(b).all(|(u, v)| (u - v).abs() < 1e-12);
        assert!(close(canonical_rep([1.2, 0.3, 0.4]), [0.2, 0.3, 0.4]));
        assert!(close(canonical_rep([0.2, 1.3, 0.4]), [0.2, 0.3, 0.2]));
        assert_eq!(canonical_rep([0.5, 0.5, 0.5]), [0.5, 0.5, 0.5]);
    }

    #[test]
    fn canonical_rep_is_idempotent_and_orbit_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let p: [f64; 3] = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
            let c = canonical_rep(p);
            assert!(c.iter().all(|v| (0.0..1.0).contains(v)));
            let cc = canonical_rep(c);
            for i in 0..3 {
                assert!((c[i] - cc[i]).abs() < 1e-12);
            }
            for d in Deck::ALL {
                let q = canonical_rep(d.apply(p));
                for i in 0..3 {
                    let diff = (q[i] - c[i]).abs();
                    assert!(diff.min(1.0 - diff) < 1e-9, "{d:?} {p:?}");
                }
            }
        }
    }

    #[test]
    fn deck_invariance_of_structure() {
        let m = Model::<f64>::nil3();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for d in Deck::ALL {
            for _ in 0..1000 {
                let p = [rng.gen(), rng.gen(), rng.gen()];
                assert!(deck_invariance_residual(&m, d, p) <= 1e-12);
                let back = d.apply_inverse(d.apply(p));
                assert!((0..3).all(|i| (back[i] - p[i]).abs() < 1e-15));
            }
        }
    }

    #[test]
    fn volume_density_is_one() {
        // θ ∧ dθ = (dz − y dx) ∧ dx ∧ dy = dz ∧ dx ∧ dy = dx ∧ dy ∧ dz
        let m = Model::<f64>::nil3();
        let p = [0.1, 0.9, 0.4];
        let e = |i: usize| {
            let mut v = [0.0; 3];
            v[i] = 1.0;
            v
        };
        // (θ ∧ dθ)(e_x, e_y, e_z) via the alternating sum over the θ slot
        let th = |v| m.theta_apply(p, v);
        let dt = |v, w| m.dtheta(p, v, w);
        let vol = th(e(0)) * dt(e(1), e(2)) - th(e(1)) * dt(e(0), e(2)) + th(e(2)) * dt(e(0), e(1));
        assert_eq!(vol, m.volume_density);
    }
}
