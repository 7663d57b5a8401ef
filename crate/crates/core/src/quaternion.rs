//! Quaternion algebra: the Hamilton product and its 4x4 real matrix form.

use std::ops::{Add, Mul, Neg, Sub};

/// `r + a i + b j + c k`
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Quaternion {
    pub r: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Quaternion {
    pub const ZERO: Quaternion = Quaternion::new(0.0, 0.0, 0.0, 0.0);
    pub const ONE: Quaternion = Quaternion::new(1.0, 0.0, 0.0, 0.0);
    pub const I: Quaternion = Quaternion::new(0.0, 1.0, 0.0, 0.0);
    pub const J: Quaternion = Quaternion::new(0.0, 0.0, 1.0, 0.0);
    pub const K: Quaternion = Quaternion::new(0.0, 0.0, 0.0, 1.0);

    pub const fn new(r: f64, a: f64, b: f64, c: f64) -> Self {
        Quaternion { r, a, b, c }
    }

    pub fn from_array(v: [f64; 4]) -> Self {
        Quaternion::new(v[0], v[1], v[2], v[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.r, self.a, self.b, self.c]
    }

    pub fn norm(self) -> f64 {
        (self.r * self.r + self.a * self.a + self.b * self.b + self.c * self.c).sqrt()
    }

    pub fn scale(self, k: f64) -> Self {
        Quaternion::new(self.r * k, self.a * k, self.b * k, self.c * k)
    }

    pub fn conj(self) -> Self {
        Quaternion::new(self.r, -self.a, -self.b, -self.c)
    }

    pub fn is_finite(self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

impl Add for Quaternion {
    type Output = Quaternion;
    fn add(self, o: Quaternion) -> Quaternion {
        Quaternion::new(self.r + o.r, self.a + o.a, self.b + o.b, self.c + o.c)
    }
}

impl Sub for Quaternion {
    type Output = Quaternion;
    fn sub(self, o: Quaternion) -> Quaternion {
        Quaternion::new(self.r - o.r, self.a - o.a, self.b - o.b, self.c - o.c)
    }
}

impl Neg for Quaternion {
    type Output = Quaternion;
    fn neg(self) -> Quaternion {
        self.scale(-1.0)
    }
}

impl Mul for Quaternion {
    type Output = Quaternion;
    fn mul(self, q: Quaternion) -> Quaternion {
        qmul(self, q)
    }
}

/// Hamilton product `p q` (non-commutative).
pub fn qmul(p: Quaternion, q: Quaternion) -> Quaternion {
    Quaternion {
        r: p.r * q.r - p.a * q.a - p.b * q.b - p.c * q.c,
        a: p.r * q.a + p.a * q.r + p.b * q.c - p.c * q.b,
        b: p.r * q.b - p.a * q.c + p.b * q.r + p.c * q.a,
        c: p.r * q.c + p.a * q.b - p.b * q.a + p.c * q.r,
    }
}

/// Which weight bank feeds output component `row` from input component
/// `col`, and with which sign. Banks are indexed M=0, rho=1, f=2, tau=3
/// (the r, i, j, k parts of the weight quaternion).
pub const HAMILTON_LAYOUT: [[(usize, f64); 4]; 4] = [
    [(0, 1.0), (1, -1.0), (2, -1.0), (3, -1.0)],
    [(1, 1.0), (0, 1.0), (3, -1.0), (2, 1.0)],
    [(2, 1.0), (3, 1.0), (0, 1.0), (1, -1.0)],
    [(3, 1.0), (2, -1.0), (1, 1.0), (0, 1.0)],
];

/// The real 4x4 matrix of left multiplication by `w`:
/// `hamilton_matrix(w) * vec(q) == vec(w q)`.
pub fn hamilton_matrix(w: Quaternion) -> [[f64; 4]; 4] {
    let banks = w.to_array();
    let mut m = [[0.0; 4]; 4];
    for (row, layout) in HAMILTON_LAYOUT.iter().enumerate() {
        for (col, &(bank, sign)) in layout.iter().enumerate() {
            m[row][col] = sign * banks[bank];
        }
    }
    m
}

pub fn mat_vec(m: &[[f64; 4]; 4], v: [f64; 4]) -> [f64; 4] {
    let mut out = [0.0; 4];
    for (o, row) in out.iter_mut().zip(m) {
        *o = row.iter().zip(&v).map(|(a, b)| a * b).sum();
    }
    out
}

pub fn mat_mul(a: &[[f64; 4]; 4], b: &[[f64; 4]; 4]) -> [[f64; 4]; 4] {
    let mut out = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = (0..4).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}
