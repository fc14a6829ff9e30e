//! Periodic square lattice, gauge configurations and their symmetry actions.
//!
//! Sites are numbered `x1 + L*x2`. The link `(x, i)` starts at site `x` and points
//! along `e_i`; it has index `2*site + (i-1)`, so direction 1 is `0` and direction 2
//! is `1` in code. Plaquettes are labelled by their lower-left site.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Direction of a link.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Dir {
    /// `e_1`, horizontal.
    X,
    /// `e_2`, vertical.
    Y,
}

impl Dir {
    pub fn index(self) -> usize {
        match self {
            Dir::X => 0,
            Dir::Y => 1,
        }
    }

    pub fn from_index(i: usize) -> Dir {
        if i == 0 {
            Dir::X
        } else {
            Dir::Y
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Lattice {
    l: usize,
}

impl Lattice {
    /// Builds an `L x L` periodic lattice. `L = 1` is refused since both links of
    /// the only plaquette would coincide.
    pub fn new(l: usize) -> Result<Self> {
        if l < 2 {
            return Err(Error::InvalidSize(format!("lattice extent {l} < 2")));
        }
        Ok(Lattice { l })
    }

    pub fn extent(&self) -> usize {
        self.l
    }

    pub fn n_sites(&self) -> usize {
        self.l * self.l
    }

    pub fn n_links(&self) -> usize {
        2 * self.l * self.l
    }

    pub fn n_plaquettes(&self) -> usize {
        self.l * self.l
    }

    /// Site at coordinates taken modulo `L`.
    pub fn site(&self, x1: i64, x2: i64) -> usize {
        let l = self.l as i64;
        (x1.rem_euclid(l) + l * x2.rem_euclid(l)) as usize
    }

    pub fn coords(&self, site: usize) -> (i64, i64) {
        ((site % self.l) as i64, (site / self.l) as i64)
    }

    pub fn link(&self, site: usize, dir: Dir) -> usize {
        2 * site + dir.index()
    }

    pub fn link_site(&self, link: usize) -> usize {
        link / 2
    }

    pub fn link_dir(&self, link: usize) -> Dir {
        Dir::from_index(link % 2)
    }

    /// The two endpoints `(x, x + e_i)` of a link.
    pub fn link_ends(&self, link: usize) -> (usize, usize) {
        let s = self.link_site(link);
        let (x1, x2) = self.coords(s);
        let t = match self.link_dir(link) {
            Dir::X => self.site(x1 + 1, x2),
            Dir::Y => self.site(x1, x2 + 1),
        };
        (s, t)
    }

    /// Links of the plaquette with lower-left corner `p`: bottom, right, top, left.
    pub fn plaquette_links(&self, p: usize) -> [usize; 4] {
        let (x1, x2) = self.coords(p);
        [
            self.link(p, Dir::X),
            self.link(self.site(x1 + 1, x2), Dir::Y),
            self.link(self.site(x1, x2 + 1), Dir::X),
            self.link(p, Dir::Y),
        ]
    }

    /// The four links touching a site: `(x,1)`, `(x,2)`, `(x-e1,1)`, `(x-e2,2)`.
    pub fn star_links(&self, site: usize) -> [usize; 4] {
        let (x1, x2) = self.coords(site);
        [
            self.link(site, Dir::X),
            self.link(site, Dir::Y),
            self.link(self.site(x1 - 1, x2), Dir::X),
            self.link(self.site(x1, x2 - 1), Dir::Y),
        ]
    }

    /// Boundary of the `r1 x r2` rectangle anchored at `origin`, walked counterclockwise.
    ///
    /// When an extent equals `L` the two opposite sides coincide and those links
    /// appear twice, which leaves loop products unchanged.
    pub fn wilson_loop_links(&self, origin: usize, r1: usize, r2: usize) -> Result<Vec<usize>> {
        if r1 == 0 || r2 == 0 || r1 > self.l || r2 > self.l {
            return Err(Error::Domain(format!(
                "loop extent {r1}x{r2} outside 1..={}",
                self.l
            )));
        }
        let (x1, x2) = self.coords(origin);
        let mut out = Vec::with_capacity(2 * (r1 + r2));
        for k in 0..r1 as i64 {
            out.push(self.link(self.site(x1 + k, x2), Dir::X));
        }
        for m in 0..r2 as i64 {
            out.push(self.link(self.site(x1 + r1 as i64, x2 + m), Dir::Y));
        }
        for k in (0..r1 as i64).rev() {
            out.push(self.link(self.site(x1 + k, x2 + r2 as i64), Dir::X));
        }
        for m in (0..r2 as i64).rev() {
            out.push(self.link(self.site(x1, x2 + m), Dir::Y));
        }
        Ok(out)
    }

    /// Links of a spanning tree of the sites. Fixing these to zero picks one
    /// representative per gauge orbit.
    pub fn spanning_tree(&self) -> Vec<usize> {
        let l = self.l as i64;
        let mut out = Vec::with_capacity(self.n_sites() - 1);
        for x2 in 0..l {
            for x1 in 0..l - 1 {
                out.push(self.link(self.site(x1, x2), Dir::X));
            }
        }
        for x2 in 0..l - 1 {
            out.push(self.link(self.site(0, x2), Dir::Y));
        }
        out.sort_unstable();
        out
    }
}

/// One bit `q` per link; the link state is the `Q` eigenstate with eigenvalue `(-1)^q`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GaugeConfig {
    q: Vec<u8>,
}

impl GaugeConfig {
    pub fn zeros(lat: &Lattice) -> Self {
        GaugeConfig {
            q: vec![0; lat.n_links()],
        }
    }

    pub fn from_bits(bits: Vec<u8>) -> Self {
        GaugeConfig {
            q: bits.into_iter().map(|b| b & 1).collect(),
        }
    }

    /// Config whose link `l` is bit `l` of `mask`.
    pub fn from_mask(lat: &Lattice, mask: u128) -> Self {
        GaugeConfig {
            q: (0..lat.n_links()).map(|l| ((mask >> l) & 1) as u8).collect(),
        }
    }

    pub fn mask(&self) -> u128 {
        self.q
            .iter()
            .enumerate()
            .fold(0u128, |m, (l, &b)| m | ((b as u128) << l))
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn get(&self, link: usize) -> u8 {
        self.q[link]
    }

    pub fn set(&mut self, link: usize, v: u8) {
        self.q[link] = v & 1;
    }

    pub fn flip(&mut self, link: usize) {
        self.q[link] ^= 1;
    }

    pub fn bits(&self) -> &[u8] {
        &self.q
    }

    /// `(-1)^q` summed into a product over the given links.
    pub fn loop_sign(&self, links: &[usize]) -> i32 {
        if links.iter().map(|&l| self.q[l] as u32).sum::<u32>() % 2 == 0 {
            1
        } else {
            -1
        }
    }

    pub fn plaquette(&self, lat: &Lattice, p: usize) -> i32 {
        self.loop_sign(&lat.plaquette_links(p))
    }

    pub fn check(&self, lat: &Lattice) -> Result<()> {
        if self.q.len() != lat.n_links() {
            return Err(Error::Domain(format!(
                "config has {} links, lattice has {}",
                self.q.len(),
                lat.n_links()
            )));
        }
        Ok(())
    }
}

/// A permutation of links combined with bit flips: `out[perm[l]] = in[l] ^ flip[l]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SymmetryAction {
    pub perm: Vec<usize>,
    pub flip: Vec<u8>,
}

impl SymmetryAction {
    pub fn identity(lat: &Lattice) -> Self {
        SymmetryAction {
            perm: (0..lat.n_links()).collect(),
            flip: vec![0; lat.n_links()],
        }
    }

    /// Gauss-law generator `V(x)`: flips every link of the star of `x`.
    pub fn gauge(lat: &Lattice, site: usize) -> Self {
        let mut a = Self::identity(lat);
        for l in lat.star_links(site) {
            a.flip[l] ^= 1;
        }
        a
    }

    pub fn translation(lat: &Lattice, d1: i64, d2: i64) -> Self {
        let mut perm = vec![0; lat.n_links()];
        for s in 0..lat.n_sites() {
            let (x1, x2) = lat.coords(s);
            let t = lat.site(x1 + d1, x2 + d2);
            perm[2 * s] = 2 * t;
            perm[2 * s + 1] = 2 * t + 1;
        }
        SymmetryAction {
            perm,
            flip: vec![0; lat.n_links()],
        }
    }

    /// Rotation by `pi/2`: `x -> (-x2, x1)`, `(x,1) -> (Lx, 2)`, `(x,2) -> (Lx - e1, 1)`.
    pub fn rotation(lat: &Lattice) -> Self {
        let mut perm = vec![0; lat.n_links()];
        for s in 0..lat.n_sites() {
            let (x1, x2) = lat.coords(s);
            let (y1, y2) = (-x2, x1);
            perm[lat.link(s, Dir::X)] = lat.link(lat.site(y1, y2), Dir::Y);
            perm[lat.link(s, Dir::Y)] = lat.link(lat.site(y1 - 1, y2), Dir::X);
        }
        SymmetryAction {
            perm,
            flip: vec![0; lat.n_links()],
        }
    }

    pub fn apply(&self, c: &GaugeConfig) -> GaugeConfig {
        let mut q = vec![0u8; c.q.len()];
        for (l, &b) in c.q.iter().enumerate() {
            q[self.perm[l]] = b ^ self.flip[l];
        }
        GaugeConfig { q }
    }

    /// `self` after `other`.
    pub fn compose(&self, other: &SymmetryAction) -> SymmetryAction {
        let n = self.perm.len();
        let mut perm = vec![0; n];
        let mut flip = vec![0; n];
        for l in 0..n {
            let m = other.perm[l];
            perm[l] = self.perm[m];
            flip[l] = other.flip[l] ^ self.flip[m];
        }
        SymmetryAction { perm, flip }
    }
}

pub fn gauge_transform(lat: &Lattice, c: &GaugeConfig, site: usize) -> GaugeConfig {
    SymmetryAction::gauge(lat, site).apply(c)
}

pub fn translate_config(lat: &Lattice, c: &GaugeConfig, d1: i64, d2: i64) -> GaugeConfig {
    SymmetryAction::translation(lat, d1, d2).apply(c)
}

pub fn rotate_config(lat: &Lattice, c: &GaugeConfig) -> GaugeConfig {
    SymmetryAction::rotation(lat).apply(c)
}
