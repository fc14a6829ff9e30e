//! The gauged Gaussian fermionic PEPS.
//!
//! Every site carries `4F` virtual modes, one per leg and flavor, in the order
//! `r1, u1, l1, d1, r2, u2, l2, d2`. The site state is `exp(T a^dag a^dag)|0>`;
//! since `T` is summed over all ordered pairs its pairing matrix is `2T`. Links carry
//! `exp(sum W_ab in_a^dag out_b^dag)` between the outgoing leg (`r` or `u`) of `x` and
//! the incoming leg (`l` or `d`) of `x + e_i`. Gauging with `q = 1` negates the
//! outgoing modes, which flips the sign of every pair on that link.

use std::f64::consts::FRAC_PI_4;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{majorana_cov_derivative, majorana_cov_from_m, CMat, PairingMatrix, RMat};
use crate::lattice::{Dir, GaugeConfig, Lattice};

/// `eta = e^{i pi/4}`, so that `eta^4 = -1`.
pub fn eta() -> C64 {
    C64::from_polar(1.0, FRAC_PI_4)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Leg {
    R = 0,
    U = 1,
    L = 2,
    D = 3,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnsatzParams {
    f: usize,
    params: Vec<C64>,
}

pub fn n_params(f: usize) -> Result<usize> {
    match f {
        1 => Ok(2),
        2 => Ok(8),
        _ => Err(Error::Domain(format!("F = {f} not supported"))),
    }
}

impl AnsatzParams {
    /// `F = 1`: `(y, z)`. `F = 2`: `(z1, y1, z2, y2, a, b, c, d)`.
    pub fn new(f: usize, params: Vec<C64>) -> Result<Self> {
        let n = n_params(f)?;
        if params.len() != n {
            return Err(Error::Domain(format!("F = {f} takes {n} parameters, got {}", params.len())));
        }
        Ok(AnsatzParams { f, params })
    }

    /// All parameters zero: the strong-coupling product state.
    pub fn psi_e(f: usize) -> Result<Self> {
        Self::new(f, vec![C64::new(0.0, 0.0); n_params(f)?])
    }

    /// `b = e^{i pi/4} / 2`, so `b^4 = -1/16`: the toric-code state.
    pub fn psi_b() -> Self {
        let mut p = vec![C64::new(0.0, 0.0); 8];
        p[5] = 0.5 * eta();
        AnsatzParams { f: 2, params: p }
    }

    pub fn flavors(&self) -> usize {
        self.f
    }

    pub fn values(&self) -> &[C64] {
        &self.params
    }

    /// Real and imaginary parts interleaved.
    pub fn to_real(&self) -> Vec<f64> {
        self.params.iter().flat_map(|c| [c.re, c.im]).collect()
    }

    pub fn from_real(f: usize, x: &[f64]) -> Result<Self> {
        if x.len() % 2 == 1 {
            return Err(Error::Domain("odd real parameter vector".into()));
        }
        Self::new(f, x.chunks(2).map(|c| C64::new(c[0], c[1])).collect())
    }
}

/// The site matrix `T` (`4F x 4F`).
pub fn build_t(p: &AnsatzParams) -> CMat {
    let i = C64::new(0.0, 1.0);
    let o = C64::new(0.0, 0.0);
    let v = &p.params;
    if p.f == 1 {
        let (y, z) = (v[0], v[1]);
        #[rustfmt::skip]
        let t = CMat::from_row_slice(4, 4, &[
            o, -z, -i * y, -i * z,
            z, o, -i * z, y,
            i * y, i * z, o, z,
            i * z, -y, -z, o,
        ]);
        return t;
    }
    let (z1, y1, z2, y2, a, b, c, d) = (v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7]);
    #[rustfmt::skip]
    let t = CMat::from_row_slice(8, 8, &[
        o, -z1, -i * y1, -i * z1, i * a, i * b, i * c, i * d,
        z1, o, -i * z1, y1, -d, -a, -b, -c,
        i * y1, i * z1, o, z1, -i * c, -i * d, -i * a, -i * b,
        i * z1, -y1, -z1, o, b, c, d, a,
        -i * a, d, i * c, -b, o, -z2, -i * y2, -i * z2,
        -i * b, a, i * d, -c, z2, o, -i * z2, y2,
        -i * c, b, i * a, -d, i * y2, i * z2, o, z2,
        -i * d, c, i * b, -a, i * z2, -y2, -z2, o,
    ]);
    t
}

/// `R = (+)_F eta * P` with `P` the cyclic permutation taking `r -> u -> l -> d`.
pub fn rotation_matrix(f: usize) -> CMat {
    let n = 4 * f;
    let mut r = CMat::zeros(n, n);
    for m in 0..f {
        for k in 0..4 {
            r[(4 * m + k, 4 * m + (k + 1) % 4)] = eta();
        }
    }
    r
}

/// Link matrices `(W^1, W^2)`.
pub fn link_w(f: usize) -> (CMat, CMat) {
    let e2 = eta() * eta();
    if f == 1 {
        (CMat::from_element(1, 1, C64::new(1.0, 0.0)), CMat::from_element(1, 1, e2))
    } else {
        let one = C64::new(1.0, 0.0);
        let o = C64::new(0.0, 0.0);
        let sx = CMat::from_row_slice(2, 2, &[o, one, one, o]);
        let w2 = &sx * e2;
        (sx, w2)
    }
}

/// Virtual modes of one link, in ascending global order.
#[derive(Clone, Debug)]
pub struct LinkInfo {
    pub link: usize,
    pub dir: Dir,
    /// Global Dirac modes.
    pub modes: Vec<usize>,
    /// Global Majorana indices (`2m`, `2m+1` for each mode).
    pub maj: Vec<usize>,
    /// Local positions (into `modes`) of the outgoing leg.
    pub out_local: Vec<usize>,
    /// `(in_local, out_local, coefficient)` pairs of the link state.
    pub pairs: Vec<(usize, usize, C64)>,
    /// Majorana covariance of the link state for `q = 0` and `q = 1`.
    pub cov: [RMat; 2],
    /// The other Majoranas of the two endpoint sites.
    pub rest: Vec<usize>,
}

impl LinkInfo {
    /// Local pairing matrix of the link state with gauge bit `q`.
    pub fn pairing(&self, q: u8) -> CMat {
        let n = self.modes.len();
        let s = if q == 1 { -1.0 } else { 1.0 };
        let mut m = CMat::zeros(n, n);
        for &(i, o, c) in &self.pairs {
            m[(i, o)] += c * s;
            m[(o, i)] -= c * s;
        }
        m
    }
}

/// Parameter independent data: lattice, flavor count and the link states.
#[derive(Clone, Debug)]
pub struct Geometry {
    lat: Lattice,
    f: usize,
    links: Vec<LinkInfo>,
}

impl Geometry {
    pub fn new(lat: &Lattice, f: usize) -> Result<Self> {
        n_params(f)?;
        let (w1, w2) = link_w(f);
        let per_site = 4 * f;
        let mut links = Vec::with_capacity(lat.n_links());
        for l in 0..lat.n_links() {
            let dir = lat.link_dir(l);
            let (s, t) = lat.link_ends(l);
            let (out_leg, in_leg, w) = match dir {
                Dir::X => (Leg::R, Leg::L, &w1),
                Dir::Y => (Leg::U, Leg::D, &w2),
            };
            let out_modes: Vec<usize> = (0..f).map(|b| s * per_site + b * 4 + out_leg as usize).collect();
            let in_modes: Vec<usize> = (0..f).map(|a| t * per_site + a * 4 + in_leg as usize).collect();
            let mut modes: Vec<usize> = out_modes.iter().chain(&in_modes).copied().collect();
            modes.sort_unstable();
            let pos = |m: usize| modes.iter().position(|&x| x == m).unwrap();
            let mut pairs = Vec::new();
            for a in 0..f {
                for b in 0..f {
                    let c = w[(a, b)];
                    if c.norm() > 0.0 {
                        pairs.push((pos(in_modes[a]), pos(out_modes[b]), c));
                    }
                }
            }
            let out_local = out_modes.iter().map(|&m| pos(m)).collect();
            let maj: Vec<usize> = modes.iter().flat_map(|&m| [2 * m, 2 * m + 1]).collect();
            let mut rest: Vec<usize> = [s, t]
                .iter()
                .flat_map(|&x| (0..2 * per_site).map(move |k| 2 * per_site * x + k))
                .filter(|k| !maj.contains(k))
                .collect();
            rest.sort_unstable();
            let mut info = LinkInfo {
                link: l,
                dir,
                modes,
                maj,
                out_local,
                pairs,
                cov: [RMat::zeros(0, 0), RMat::zeros(0, 0)],
                rest,
            };
            for q in 0..2u8 {
                let pm = PairingMatrix::new(info.pairing(q))?;
                info.cov[q as usize] = majorana_cov_from_m(&pm)?.into_matrix();
            }
            links.push(info);
        }
        Ok(Geometry { lat: lat.clone(), f, links })
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lat
    }

    pub fn flavors(&self) -> usize {
        self.f
    }

    pub fn link(&self, l: usize) -> &LinkInfo {
        &self.links[l]
    }

    pub fn links(&self) -> &[LinkInfo] {
        &self.links
    }

    pub fn n_modes(&self) -> usize {
        4 * self.f * self.lat.n_sites()
    }

    /// Majoranas per site, `8F`.
    pub fn site_block(&self) -> usize {
        8 * self.f
    }

    /// Global Dirac mode of `(site, leg, flavor)`.
    pub fn mode(&self, site: usize, leg: Leg, flavor: usize) -> usize {
        site * 4 * self.f + flavor * 4 + leg as usize
    }

    /// `Gamma_in(Q)`: direct sum of the link covariances.
    pub fn gamma_in(&self, config: &GaugeConfig) -> Result<RMat> {
        config.check(&self.lat)?;
        let n = 2 * self.n_modes();
        let mut g = RMat::zeros(n, n);
        for info in &self.links {
            let c = &info.cov[config.get(info.link) as usize];
            for (a, &i) in info.maj.iter().enumerate() {
                for (b, &j) in info.maj.iter().enumerate() {
                    g[(i, j)] = c[(a, b)];
                }
            }
        }
        Ok(g)
    }

    /// Change of the link block when its bit goes from `q` to `1 - q`.
    pub fn flip_delta(&self, link: usize, q: u8) -> RMat {
        let info = &self.links[link];
        &info.cov[(1 - q) as usize] - &info.cov[q as usize]
    }

    /// Pairing matrix of all link states for `config` (for oracles).
    pub fn link_pairing(&self, config: &GaugeConfig) -> CMat {
        let n = self.n_modes();
        let mut m = CMat::zeros(n, n);
        for info in &self.links {
            let s = if config.get(info.link) == 1 { -1.0 } else { 1.0 };
            for &(i, o, c) in &info.pairs {
                let (gi, go) = (info.modes[i], info.modes[o]);
                m[(gi, go)] += c * s;
                m[(go, gi)] -= c * s;
            }
        }
        m
    }
}

/// A parameter point together with its site covariance and derivatives.
#[derive(Clone, Debug)]
pub struct Ansatz {
    params: AnsatzParams,
    t: CMat,
    site_cov: RMat,
}

impl Ansatz {
    pub fn new(geo: &Geometry, params: AnsatzParams) -> Result<Self> {
        if params.f != geo.f {
            return Err(Error::Domain("flavor count of parameters and geometry differ".into()));
        }
        let t = build_t(&params);
        let pm = PairingMatrix::new(&t * C64::new(2.0, 0.0))?;
        let site_cov = majorana_cov_from_m(&pm)?.into_matrix();
        Ok(Ansatz { params, t, site_cov })
    }

    pub fn params(&self) -> &AnsatzParams {
        &self.params
    }

    pub fn t(&self) -> &CMat {
        &self.t
    }

    /// Majorana covariance of one site, `8F x 8F`.
    pub fn site_cov(&self) -> &RMat {
        &self.site_cov
    }

    /// The block diagonal covariance `D` of all sites.
    pub fn full_d(&self, geo: &Geometry) -> RMat {
        let b = geo.site_block();
        let n = b * geo.lat.n_sites();
        let mut d = RMat::zeros(n, n);
        for s in 0..geo.lat.n_sites() {
            d.view_mut((s * b, s * b), (b, b)).copy_from(&self.site_cov);
        }
        d
    }

    /// Site pairing matrix of all sites (for oracles).
    pub fn site_pairing(&self, geo: &Geometry) -> CMat {
        let b = 4 * geo.f;
        let n = geo.n_modes();
        let mut m = CMat::zeros(n, n);
        for s in 0..geo.lat.n_sites() {
            m.view_mut((s * b, s * b), (b, b)).copy_from(&(&self.t * C64::new(2.0, 0.0)));
        }
        m
    }

    /// `dD_site / dx_k` for the interleaved real parameters `x`.
    pub fn site_cov_derivatives(&self) -> Result<Vec<RMat>> {
        let np = self.params.params.len();
        let pm = PairingMatrix::new(&self.t * C64::new(2.0, 0.0))?;
        let mut out = Vec::with_capacity(2 * np);
        for k in 0..np {
            let mut e = vec![C64::new(0.0, 0.0); np];
            e[k] = C64::new(1.0, 0.0);
            let tk = build_t(&AnsatzParams { f: self.params.f, params: e });
            let dm = &tk * C64::new(2.0, 0.0);
            out.push(majorana_cov_derivative(&pm, &dm)?);
            out.push(majorana_cov_derivative(&pm, &(&dm * C64::new(0.0, 1.0)))?);
        }
        Ok(out)
    }
}

/// `R^T T R - T`, which vanishes for rotation invariant site tensors.
pub fn rotation_defect(t: &CMat) -> f64 {
    let r = rotation_matrix(t.nrows() / 4);
    (r.transpose() * t * &r - t).iter().map(|x| x.norm()).fold(0.0, f64::max)
}

pub fn is_antisymmetric(t: &CMat, tol: f64) -> bool {
    (t + t.transpose()).iter().all(|x| x.norm() < tol)
}
