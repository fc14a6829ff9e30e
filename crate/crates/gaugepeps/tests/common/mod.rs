#![allow(dead_code)]

use gaugepeps::ansatz::{Ansatz, AnsatzParams, Geometry};
use gaugepeps::fock::gaussian_overlap_pfaffian;
use gaugepeps::gaussian::CMat;
use gaugepeps::lattice::{Dir, GaugeConfig, Lattice};
use num_complex::Complex64 as C64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn random_params(f: usize, rng: &mut ChaCha8Rng, scale: f64) -> AnsatzParams {
    let n = if f == 1 { 2 } else { 8 };
    let v = (0..n)
        .map(|_| C64::new(rng.random_range(-scale..scale), rng.random_range(-scale..scale)))
        .collect();
    AnsatzParams::new(f, v).unwrap()
}

pub fn random_pairing(n: usize, rng: &mut ChaCha8Rng, scale: f64) -> CMat {
    let mut m = CMat::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let z = C64::new(rng.random_range(-scale..scale), rng.random_range(-scale..scale));
            m[(i, j)] = z;
            m[(j, i)] = -z;
        }
    }
    m
}

pub fn random_config(lat: &Lattice, rng: &mut ChaCha8Rng) -> GaugeConfig {
    GaugeConfig::from_bits((0..lat.n_links()).map(|_| rng.random_range(0..2u8)).collect())
}

/// Signed `psi(Q)` for every configuration, indexed by mask.
pub fn all_amplitudes(geo: &Geometry, ans: &Ansatz) -> Vec<C64> {
    let lat = geo.lattice();
    let sp = ans.site_pairing(geo);
    (0..1u128 << lat.n_links())
        .map(|m| gaussian_overlap_pfaffian(&sp, &geo.link_pairing(&GaugeConfig::from_mask(lat, m))).unwrap())
        .collect()
}

/// Image of every link under translation by `(d1, d2)`.
pub fn translation(lat: &Lattice, d1: i64, d2: i64) -> Vec<usize> {
    (0..lat.n_links())
        .map(|l| {
            let (x1, x2) = lat.coords(lat.link_site(l));
            lat.link(lat.site(x1 + d1, x2 + d2), lat.link_dir(l))
        })
        .collect()
}

/// Image of every link under the rotation `(x1, x2) -> (-x2, x1)` about site 0.
pub fn rotation(lat: &Lattice) -> Vec<usize> {
    (0..lat.n_links())
        .map(|l| {
            let (x1, x2) = lat.coords(lat.link_site(l));
            match lat.link_dir(l) {
                Dir::X => lat.link(lat.site(-x2, x1), Dir::Y),
                Dir::Y => lat.link(lat.site(-x2 - 1, x1), Dir::X),
            }
        })
        .collect()
}

pub fn map_config(c: &GaugeConfig, image: &[usize]) -> GaugeConfig {
    let mut out = c.clone();
    for (l, &t) in image.iter().enumerate() {
        out.set(t, c.get(l));
    }
    out
}

/// Gauge transformation at the sites in `mask`: flips every star link once per endpoint.
pub fn gauge_transform(lat: &Lattice, c: &GaugeConfig, mask: usize) -> GaugeConfig {
    let mut out = c.clone();
    for s in 0..lat.n_sites() {
        if mask >> s & 1 == 1 {
            for l in lat.star_links(s) {
                out.flip(l);
            }
        }
    }
    out
}
