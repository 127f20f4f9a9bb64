//! Mass-spring cloth: a `cols × rows` particle lattice with structural,
//! shear and bend springs, integrated by semi-implicit Euler.

use super::EnvConfig;

pub type Vec3 = [f64; 3];

#[inline]
pub(crate) fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub(crate) fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub(crate) fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Spring {
    pub a: usize,
    pub b: usize,
    pub rest: f64,
    pub k: f64,
}

/// Particle positions and velocities, row-major (`index = row * cols + col`).
/// Column 0 is the `-x` edge and row 0 the `-y` edge.
#[derive(Clone, Debug, PartialEq)]
pub struct ClothState {
    pub cols: usize,
    pub rows: usize,
    pub positions: Vec<Vec3>,
    pub velocities: Vec<Vec3>,
    pub pinned: Vec<bool>,
}

impl ClothState {
    /// Flat sheet on the table, centred on the origin, at rest.
    pub fn flat(cfg: &EnvConfig) -> Self {
        let s = cfg.spacing();
        let (cols, rows) = (cfg.cols, cfg.rows);
        let x0 = -0.5 * s * (cols - 1) as f64;
        let y0 = -0.5 * s * (rows - 1) as f64;
        let mut positions = Vec::with_capacity(cols * rows);
        for r in 0..rows {
            for c in 0..cols {
                positions.push([x0 + s * c as f64, y0 + s * r as f64, cfg.table_height]);
            }
        }
        let n = positions.len();
        Self {
            cols,
            rows,
            positions,
            velocities: vec![[0.0; 3]; n],
            pinned: vec![false; n],
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn index(&self, col: usize, row: usize) -> usize {
        row * self.cols + col
    }

    pub fn is_finite(&self) -> bool {
        self.positions.iter().chain(&self.velocities).all(|p| p.iter().all(|v| v.is_finite()))
    }
}

/// Physical constants derived once from the configuration.
#[derive(Clone, Debug)]
pub struct ClothModel {
    pub mass: f64,
    pub springs: Vec<Spring>,
    /// Axial damping coefficient per unit stiffness (seconds).
    pub damping: f64,
    pub drag: f64,
    pub gravity: f64,
    pub friction: f64,
    pub table_height: f64,
    pub dt: f64,
}

impl ClothModel {
    pub fn new(cfg: &EnvConfig) -> Self {
        let s = cfg.spacing();
        let n = cfg.cols * cfg.rows;
        let mass = cfg.cloth_mass / n as f64;
        let k = mass * cfg.stiffness_omega * cfg.stiffness_omega;
        let mut springs = Vec::new();
        let idx = |c: usize, r: usize| r * cfg.cols + c;
        for r in 0..cfg.rows {
            for c in 0..cfg.cols {
                let mut add = |dc: isize, dr: isize, rest: f64, k: f64| {
                    let (c2, r2) = (c as isize + dc, r as isize + dr);
                    if c2 >= 0 && r2 >= 0 && (c2 as usize) < cfg.cols && (r2 as usize) < cfg.rows {
                        springs.push(Spring {
                            a: idx(c, r),
                            b: idx(c2 as usize, r2 as usize),
                            rest,
                            k,
                        });
                    }
                };
                add(1, 0, s, k);
                add(0, 1, s, k);
                add(1, 1, s * 2f64.sqrt(), k * cfg.shear_ratio);
                add(1, -1, s * 2f64.sqrt(), k * cfg.shear_ratio);
                add(2, 0, 2.0 * s, k * cfg.bend_ratio);
                add(0, 2, 2.0 * s, k * cfg.bend_ratio);
            }
        }
        Self {
            mass,
            springs,
            damping: cfg.dt,
            drag: cfg.air_drag,
            gravity: cfg.gravity,
            friction: cfg.friction,
            table_height: cfg.table_height,
            dt: cfg.dt,
        }
    }

    /// Kinetic + elastic + gravitational energy, with height measured from the
    /// table.
    pub fn energy(&self, st: &ClothState) -> f64 {
        let kinetic: f64 = st.velocities.iter().map(|v| 0.5 * self.mass * dot(*v, *v)).sum();
        let elastic: f64 = self
            .springs
            .iter()
            .map(|sp| {
                let ext = norm(sub(st.positions[sp.b], st.positions[sp.a])) - sp.rest;
                0.5 * sp.k * ext * ext
            })
            .sum();
        let potential: f64 = st
            .positions
            .iter()
            .map(|p| self.mass * self.gravity * (p[2] - self.table_height))
            .sum();
        kinetic + elastic + potential
    }

    /// One integration substep. Pinned particles are moved to `pin_targets`
    /// with velocity `pin_velocity`.
    pub fn substep(&self, st: &mut ClothState, forces: &mut Vec<Vec3>, pins: &[(usize, Vec3, Vec3)]) {
        let n = st.len();
        forces.clear();
        forces.resize(n, [0.0, 0.0, -self.mass * self.gravity]);
        for (f, v) in forces.iter_mut().zip(&st.velocities) {
            for k in 0..3 {
                f[k] -= self.drag * self.mass * v[k];
            }
        }
        for sp in &self.springs {
            let d = sub(st.positions[sp.b], st.positions[sp.a]);
            let len = norm(d);
            if len < 1e-12 {
                continue;
            }
            let u = [d[0] / len, d[1] / len, d[2] / len];
            let rel_v = dot(sub(st.velocities[sp.b], st.velocities[sp.a]), u);
            let mag = sp.k * ((len - sp.rest) + self.damping * rel_v);
            for k in 0..3 {
                forces[sp.a][k] += mag * u[k];
                forces[sp.b][k] -= mag * u[k];
            }
        }
        let inv_m = 1.0 / self.mass;
        for i in 0..n {
            if st.pinned[i] {
                continue;
            }
            let v = &mut st.velocities[i];
            for k in 0..3 {
                v[k] += self.dt * forces[i][k] * inv_m;
            }
            let p = &mut st.positions[i];
            for k in 0..3 {
                p[k] += self.dt * v[k];
            }
            if p[2] < self.table_height {
                p[2] = self.table_height;
                if v[2] < 0.0 {
                    let dvn = -v[2];
                    v[2] = 0.0;
                    let vt = (v[0] * v[0] + v[1] * v[1]).sqrt();
                    if vt > 0.0 {
                        let scale = (vt - self.friction * dvn).max(0.0) / vt;
                        v[0] *= scale;
                        v[1] *= scale;
                    }
                }
            }
        }
        for &(i, target, vel) in pins {
            st.positions[i] = target;
            st.velocities[i] = vel;
        }
    }
}
