//! Cone kernels for the interior-point method: zero, nonnegative, and
//! second-order cones with Nesterov-Todd scaling.
//!
//! All operations act on consecutive slices of the composite cone. Each
//! block stores its scaling state; `e` denotes the block identity
//! (`1...1` for the nonnegative cone, `(1, 0...0)` per second-order
//! cone).

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConeBlock {
    /// Equality rows: `s = 0`, dual free.
    Zero { dim: usize },
    /// Componentwise inequalities.
    NonNeg { dim: usize },
    /// `s_0 >= ||s_1..||`, dimension includes the bound component.
    Soc { dim: usize },
}

impl ConeBlock {
    pub fn dim(&self) -> usize {
        match *self {
            ConeBlock::Zero { dim } | ConeBlock::NonNeg { dim } | ConeBlock::Soc { dim } => dim,
        }
    }
}

/// Barrier degree: nonnegative components count 1 each, each second-order
/// cone counts 1, equality rows count 0.
pub fn degree(blocks: &[ConeBlock]) -> usize {
    blocks
        .iter()
        .map(|b| match *b {
            ConeBlock::Zero { .. } => 0,
            ConeBlock::NonNeg { dim } => dim,
            ConeBlock::Soc { .. } => 1,
        })
        .sum()
}

pub fn total_dim(blocks: &[ConeBlock]) -> usize {
    blocks.iter().map(|b| b.dim()).sum()
}

/// Sets `v` to the composite identity element.
pub fn unit_init(blocks: &[ConeBlock], v: &mut [f64]) {
    let mut o = 0;
    for b in blocks {
        match *b {
            ConeBlock::Zero { dim } => v[o..o + dim].fill(0.0),
            ConeBlock::NonNeg { dim } => v[o..o + dim].fill(1.0),
            ConeBlock::Soc { dim } => {
                v[o..o + dim].fill(0.0);
                v[o] = 1.0;
            }
        }
        o += b.dim();
    }
}

fn jnorm(v: &[f64]) -> f64 {
    let sq = v[0] * v[0] - v[1..].iter().map(|x| x * x).sum::<f64>();
    sq.max(0.0).sqrt()
}

/// Scaling state for one second-order cone block.
#[derive(Debug, Clone, Default)]
struct SocScaling {
    /// normalized point, jnorm(w) = 1
    w: Vec<f64>,
    /// eta = sqrt(jnorm(s)/jnorm(z))
    eta: f64,
    /// lambda = W z = W^{-T} s
    lambda: Vec<f64>,
}

/// Nesterov-Todd scalings for the composite cone.
#[derive(Debug, Clone, Default)]
pub struct Scalings {
    /// nonneg: w_i^2 = s_i / z_i, stored flat over nonneg components
    nn_w2: Vec<f64>,
    /// nonneg lambda_i = sqrt(s_i z_i)
    nn_lambda: Vec<f64>,
    socs: Vec<SocScaling>,
}

impl Scalings {
    /// Recomputes the scaling at a strictly interior pair `(s, z)`.
    /// Fails when either point has left the cone interior numerically.
    pub fn update(&mut self, blocks: &[ConeBlock], s: &[f64], z: &[f64]) -> Result<(), ()> {
        self.nn_w2.clear();
        self.nn_lambda.clear();
        self.socs.clear();
        let mut o = 0;
        for b in blocks {
            match *b {
                ConeBlock::Zero { dim } => {
                    o += dim;
                }
                ConeBlock::NonNeg { dim } => {
                    for i in o..o + dim {
                        if s[i] <= 0.0 || z[i] <= 0.0 {
                            return Err(());
                        }
                        self.nn_w2.push(s[i] / z[i]);
                        self.nn_lambda.push((s[i] * z[i]).sqrt());
                    }
                    o += dim;
                }
                ConeBlock::Soc { dim } => {
                    let sb = &s[o..o + dim];
                    let zb = &z[o..o + dim];
                    let sn = jnorm(sb);
                    let zn = jnorm(zb);
                    if sn <= 0.0 || zn <= 0.0 || sb[0] <= 0.0 || zb[0] <= 0.0 {
                        return Err(());
                    }
                    let mut gamma2 = 0.5;
                    let mut dot = sb[0] * zb[0] / (sn * zn);
                    for i in 1..dim {
                        dot += sb[i] * zb[i] / (sn * zn);
                    }
                    gamma2 += 0.5 * dot;
                    if gamma2 <= 0.0 {
                        return Err(());
                    }
                    let gamma = gamma2.sqrt();
                    let mut w = vec![0.0; dim];
                    w[0] = (sb[0] / sn + zb[0] / zn) / (2.0 * gamma);
                    for i in 1..dim {
                        w[i] = (sb[i] / sn - zb[i] / zn) / (2.0 * gamma);
                    }
                    let eta = (sn / zn).sqrt();
                    let mut sc = SocScaling { w, eta, lambda: vec![0.0; dim] };
                    let mut lambda = vec![0.0; dim];
                    soc_mul_w(&sc, zb, &mut lambda);
                    sc.lambda = lambda;
                    self.socs.push(sc);
                    o += dim;
                }
            }
        }
        Ok(())
    }

    /// `out = W v` blockwise (identityless zero blocks give 0).
    pub fn mul_w(&self, blocks: &[ConeBlock], v: &[f64], out: &mut [f64]) {
        self.apply(blocks, v, out, false)
    }

    /// `out = W^{-1} v` (= `W^{-T} v`, W is symmetric).
    pub fn mul_winv(&self, blocks: &[ConeBlock], v: &[f64], out: &mut [f64]) {
        self.apply(blocks, v, out, true)
    }

    fn apply(&self, blocks: &[ConeBlock], v: &[f64], out: &mut [f64], inverse: bool) {
        let mut o = 0;
        let mut nn = 0;
        let mut ns = 0;
        for b in blocks {
            match *b {
                ConeBlock::Zero { dim } => {
                    out[o..o + dim].fill(0.0);
                    o += dim;
                }
                ConeBlock::NonNeg { dim } => {
                    for i in 0..dim {
                        let w = self.nn_w2[nn + i].sqrt();
                        out[o + i] = if inverse { v[o + i] / w } else { v[o + i] * w };
                    }
                    nn += dim;
                    o += dim;
                }
                ConeBlock::Soc { dim } => {
                    let sc = &self.socs[ns];
                    if inverse {
                        soc_mul_winv(sc, &v[o..o + dim], &mut out[o..o + dim]);
                    } else {
                        soc_mul_w(sc, &v[o..o + dim], &mut out[o..o + dim]);
                    }
                    ns += 1;
                    o += dim;
                }
            }
        }
    }

    /// Writes the NT matrix `H = W'W` blockwise through `put(local_index,
    /// value)` where `local_index` enumerates: one entry per nonneg/zero
    /// component, then dense upper triangles per SOC block (column-major).
    /// The slot layout is fixed by [`h_slot_count`].
    pub fn fill_h(&self, blocks: &[ConeBlock], mut put: impl FnMut(usize, f64)) {
        let mut slot = 0;
        let mut nn = 0;
        let mut ns = 0;
        for b in blocks {
            match *b {
                ConeBlock::Zero { dim } => {
                    for _ in 0..dim {
                        put(slot, 0.0);
                        slot += 1;
                    }
                }
                ConeBlock::NonNeg { dim } => {
                    for i in 0..dim {
                        put(slot, self.nn_w2[nn + i]);
                        slot += 1;
                    }
                    nn += dim;
                }
                ConeBlock::Soc { dim } => {
                    // H = eta^2 (2 w w' - J), J = diag(1, -1, ..., -1)
                    let sc = &self.socs[ns];
                    let e2 = sc.eta * sc.eta;
                    for j in 0..dim {
                        for i in 0..=j {
                            let mut v = 2.0 * sc.w[i] * sc.w[j];
                            if i == j {
                                v -= if i == 0 { 1.0 } else { -1.0 };
                            }
                            put(slot, e2 * v);
                            slot += 1;
                        }
                    }
                    ns += 1;
                }
            }
        }
    }

    /// `out = lambda o lambda` (the affine complementarity target).
    pub fn lambda_sq(&self, blocks: &[ConeBlock], out: &mut [f64]) {
        let mut o = 0;
        let mut nn = 0;
        let mut ns = 0;
        for b in blocks {
            match *b {
                ConeBlock::Zero { dim } => {
                    out[o..o + dim].fill(0.0);
                    o += dim;
                }
                ConeBlock::NonNeg { dim } => {
                    for i in 0..dim {
                        out[o + i] = self.nn_lambda[nn + i] * self.nn_lambda[nn + i];
                    }
                    nn += dim;
                    o += dim;
                }
                ConeBlock::Soc { dim } => {
                    let l = &self.socs[ns].lambda;
                    jmul(l, l, &mut out[o..o + dim]);
                    ns += 1;
                    o += dim;
                }
            }
        }
    }

    /// `out = W (lambda \ d)`: the slack offset entering the reduced KKT
    /// right-hand side and the recovery `ds = out - H dz`.
    pub fn shift(&self, blocks: &[ConeBlock], d: &[f64], out: &mut [f64]) {
        let mut o = 0;
        let mut nn = 0;
        let mut ns = 0;
        for b in blocks {
            match *b {
                ConeBlock::Zero { dim } => {
                    out[o..o + dim].fill(0.0);
                    o += dim;
                }
                ConeBlock::NonNeg { dim } => {
                    for i in 0..dim {
                        let lam = self.nn_lambda[nn + i];
                        let w = self.nn_w2[nn + i].sqrt();
                        out[o + i] = w * d[o + i] / lam;
                    }
                    nn += dim;
                    o += dim;
                }
                ConeBlock::Soc { dim } => {
                    let sc = &self.socs[ns];
                    let mut u = vec![0.0; dim];
                    jdiv(&sc.lambda, &d[o..o + dim], &mut u);
                    soc_mul_w(sc, &u, &mut out[o..o + dim]);
                    ns += 1;
                    o += dim;
                }
            }
        }
    }

    /// Mehrotra correction: `out += (W^{-T} ds) o (W dz)` blockwise.
    pub fn add_correction(
        &self,
        blocks: &[ConeBlock],
        ds: &[f64],
        dz: &[f64],
        out: &mut [f64],
    ) {
        let mut o = 0;
        let mut ns = 0;
        for b in blocks {
            match *b {
                ConeBlock::Zero { dim } => {
                    o += dim;
                }
                ConeBlock::NonNeg { dim } => {
                    for i in 0..dim {
                        // (ds/w) * (w dz) = ds*dz
                        out[o + i] += ds[o + i] * dz[o + i];
                    }
                    o += dim;
                }
                ConeBlock::Soc { dim } => {
                    let sc = &self.socs[ns];
                    let mut a = vec![0.0; dim];
                    let mut bb = vec![0.0; dim];
                    let mut c = vec![0.0; dim];
                    soc_mul_winv(sc, &ds[o..o + dim], &mut a);
                    soc_mul_w(sc, &dz[o..o + dim], &mut bb);
                    jmul(&a, &bb, &mut c);
                    for i in 0..dim {
                        out[o + i] += c[i];
                    }
                    ns += 1;
                    o += dim;
                }
            }
        }
    }

    /// Subtracts `sigma*mu` times the identity.
    pub fn sub_sigma_mu(&self, blocks: &[ConeBlock], sigma_mu: f64, out: &mut [f64]) {
        let mut o = 0;
        for b in blocks {
            match *b {
                ConeBlock::Zero { dim } => o += dim,
                ConeBlock::NonNeg { dim } => {
                    for i in 0..dim {
                        out[o + i] -= sigma_mu;
                    }
                    o += dim;
                }
                ConeBlock::Soc { dim } => {
                    out[o] -= sigma_mu;
                    o += dim;
                }
            }
        }
    }
}

/// Slots needed by [`Scalings::fill_h`].
pub fn h_slot_count(blocks: &[ConeBlock]) -> usize {
    blocks
        .iter()
        .map(|b| match *b {
            ConeBlock::Zero { dim } | ConeBlock::NonNeg { dim } => dim,
            ConeBlock::Soc { dim } => dim * (dim + 1) / 2,
        })
        .sum()
}

/// Jordan product for the second-order cone.
fn jmul(u: &[f64], v: &[f64], out: &mut [f64]) {
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    out[0] = dot;
    for i in 1..u.len() {
        out[i] = u[0] * v[i] + v[0] * u[i];
    }
}

/// Solves `lambda o u = d` for `u`.
fn jdiv(lambda: &[f64], d: &[f64], out: &mut [f64]) {
    let a = lambda[0];
    let bb: f64 = lambda[1..].iter().map(|x| x * x).sum();
    let det = a * a - bb;
    let bd: f64 = lambda[1..].iter().zip(&d[1..]).map(|(x, y)| x * y).sum();
    let u0 = (a * d[0] - bd) / det;
    out[0] = u0;
    for i in 1..lambda.len() {
        out[i] = (d[i] - u0 * lambda[i]) / a;
    }
}

/// `out = W v` for one SOC block:
/// `W = eta [ w0, wbar'; wbar, I + wbar wbar'/(1+w0) ]`.
fn soc_mul_w(sc: &SocScaling, v: &[f64], out: &mut [f64]) {
    let w = &sc.w;
    let dim = w.len();
    let dot: f64 = w[1..].iter().zip(&v[1..]).map(|(a, b)| a * b).sum();
    out[0] = sc.eta * (w[0] * v[0] + dot);
    let k = (v[0] + dot / (1.0 + w[0])) * sc.eta;
    for i in 1..dim {
        out[i] = sc.eta * v[i] + k * w[i];
    }
}

/// `out = W^{-1} v`; the inverse flips the sign of `wbar` and of eta's
/// exponent.
fn soc_mul_winv(sc: &SocScaling, v: &[f64], out: &mut [f64]) {
    let w = &sc.w;
    let dim = w.len();
    let ei = 1.0 / sc.eta;
    let dot: f64 = w[1..].iter().zip(&v[1..]).map(|(a, b)| a * b).sum();
    out[0] = ei * (w[0] * v[0] - dot);
    let k = (-v[0] + dot / (1.0 + w[0])) * ei;
    for i in 1..dim {
        out[i] = ei * v[i] + k * w[i];
    }
}

/// Largest `alpha <= cap` with `v + alpha*dv` in the cone, blockwise.
pub fn step_length(blocks: &[ConeBlock], v: &[f64], dv: &[f64], cap: f64) -> f64 {
    let mut alpha = cap;
    let mut o = 0;
    for b in blocks {
        match *b {
            ConeBlock::Zero { dim } => {
                o += dim;
            }
            ConeBlock::NonNeg { dim } => {
                for i in o..o + dim {
                    if dv[i] < 0.0 {
                        alpha = alpha.min(-v[i] / dv[i]);
                    }
                }
                o += dim;
            }
            ConeBlock::Soc { dim } => {
                let s = &v[o..o + dim];
                let d = &dv[o..o + dim];
                // boundary of (s0+a d0)^2 - ||sbar + a dbar||^2 = 0
                let a = d[0] * d[0] - d[1..].iter().map(|x| x * x).sum::<f64>();
                let b2 = s[0] * d[0] - s[1..].iter().zip(&d[1..]).map(|(x, y)| x * y).sum::<f64>();
                let c = (s[0] * s[0] - s[1..].iter().map(|x| x * x).sum::<f64>()).max(0.0);
                alpha = alpha.min(smallest_positive_root(a, 2.0 * b2, c));
                if d[0] < 0.0 {
                    alpha = alpha.min(-s[0] / d[0]);
                }
                o += dim;
            }
        }
    }
    alpha.max(0.0)
}

/// Smallest positive root of `a x^2 + b x + c = 0` with `c >= 0`;
/// infinity when the quadratic stays nonnegative for `x >= 0`.
fn smallest_positive_root(a: f64, b: f64, c: f64) -> f64 {
    const INF: f64 = f64::INFINITY;
    if a.abs() < 1e-300 {
        if b < 0.0 {
            return -c / b;
        }
        return INF;
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        // no real roots: sign never changes; positive at 0 since c >= 0
        return if a > 0.0 { INF } else { 0.0 };
    }
    let sq = disc.sqrt();
    // stable split
    let q = -0.5 * (b + b.signum() * sq);
    let (mut r1, mut r2) = (q / a, if q != 0.0 { c / q } else { INF });
    if r1 > r2 {
        std::mem::swap(&mut r1, &mut r2);
    }
    if r1 > 0.0 {
        r1
    } else if r2 > 0.0 {
        r2
    } else {
        INF
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn interior_pair(dim: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
        // deterministic "random" interior points
        let mut s = vec![0.0; dim];
        let mut z = vec![0.0; dim];
        let mut state = seed;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 33) as f64 / (1u64 << 31) as f64) - 1.0
        };
        for i in 1..dim {
            s[i] = next();
            z[i] = next();
        }
        s[0] = s[1..].iter().map(|x| x * x).sum::<f64>().sqrt() + 0.5 + next().abs();
        z[0] = z[1..].iter().map(|x| x * x).sum::<f64>().sqrt() + 0.5 + next().abs();
        (s, z)
    }

    #[test]
    fn nt_scaling_maps_s_and_z_to_lambda() {
        for dim in [2usize, 3, 4, 7] {
            for seed in 1..5u64 {
                let (s, z) = interior_pair(dim, seed * 97 + dim as u64);
                let blocks = [ConeBlock::Soc { dim }];
                let mut sc = Scalings::default();
                sc.update(&blocks, &s, &z).unwrap();

                let mut wz = vec![0.0; dim];
                sc.mul_w(&blocks, &z, &mut wz);
                let mut wis = vec![0.0; dim];
                sc.mul_winv(&blocks, &s, &mut wis);
                for i in 0..dim {
                    assert!((wz[i] - wis[i]).abs() < 1e-10, "W z != W^-T s at {i}");
                }

                // H z = W(Wz) must reproduce s
                let mut wwz = vec![0.0; dim];
                sc.mul_w(&blocks, &wz, &mut wwz);
                for i in 0..dim {
                    assert!((wwz[i] - s[i]).abs() < 1e-9 * (1.0 + s[i].abs()));
                }
            }
        }
    }

    #[test]
    fn fill_h_matches_w_squared() {
        let dim = 4;
        let (s, z) = interior_pair(dim, 12345);
        let blocks = [ConeBlock::Soc { dim }];
        let mut sc = Scalings::default();
        sc.update(&blocks, &s, &z).unwrap();

        let mut h = vec![0.0; h_slot_count(&blocks)];
        sc.fill_h(&blocks, |i, v| h[i] = v);
        // reconstruct dense H from the upper triangle
        let mut dense = vec![vec![0.0; dim]; dim];
        let mut slot = 0;
        for j in 0..dim {
            for i in 0..=j {
                dense[i][j] = h[slot];
                dense[j][i] = h[slot];
                slot += 1;
            }
        }
        // compare column action with W(W e_j)
        for j in 0..dim {
            let mut e = vec![0.0; dim];
            e[j] = 1.0;
            let mut we = vec![0.0; dim];
            sc.mul_w(&blocks, &e, &mut we);
            let mut wwe = vec![0.0; dim];
            sc.mul_w(&blocks, &we, &mut wwe);
            for i in 0..dim {
                assert!((dense[i][j] - wwe[i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn jordan_div_inverts_mul() {
        let l = vec![2.0, 0.3, -0.4, 0.1];
        let d = vec![1.0, -0.2, 0.5, 0.9];
        let mut u = vec![0.0; 4];
        jdiv(&l, &d, &mut u);
        let mut back = vec![0.0; 4];
        jmul(&l, &u, &mut back);
        for i in 0..4 {
            assert!((back[i] - d[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn composite_blocks_keep_their_own_scalings() {
        let blocks = [
            ConeBlock::Zero { dim: 2 },
            ConeBlock::NonNeg { dim: 3 },
            ConeBlock::Soc { dim: 3 },
            ConeBlock::Soc { dim: 4 },
        ];
        let m = total_dim(&blocks);
        let mut s = vec![0.0; m];
        let mut z = vec![0.0; m];
        for i in 2..5 {
            s[i] = 0.5 + i as f64 * 0.3;
            z[i] = 1.7 - i as f64 * 0.2;
        }
        let (s1, z1) = interior_pair(3, 5);
        let (s2, z2) = interior_pair(4, 23);
        s[5..8].copy_from_slice(&s1);
        z[5..8].copy_from_slice(&z1);
        s[8..12].copy_from_slice(&s2);
        z[8..12].copy_from_slice(&z2);

        let mut sc = Scalings::default();
        sc.update(&blocks, &s, &z).unwrap();
        let mut wz = vec![0.0; m];
        let mut wis = vec![0.0; m];
        sc.mul_w(&blocks, &z, &mut wz);
        sc.mul_winv(&blocks, &s, &mut wis);
        for i in 0..m {
            assert!(
                (wz[i] - wis[i]).abs() < 1e-10,
                "NT identity broken at {i}: {} vs {}",
                wz[i],
                wis[i]
            );
        }
    }

    #[test]
    fn step_length_hits_boundaries() {
        let blocks = [ConeBlock::NonNeg { dim: 2 }, ConeBlock::Soc { dim: 3 }];
        let v = vec![1.0, 2.0, 1.0, 0.0, 0.0];
        let dv = vec![-1.0, -0.5, 0.0, 1.0, 0.0];
        // nonneg part allows 1.0; soc part: (1, a, 0) stays in cone until a = 1
        let a = step_length(&blocks, &v, &dv, 10.0);
        assert!((a - 1.0).abs() < 1e-12);
    }
}
