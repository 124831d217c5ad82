//! Composite channel generation.
//!
//! Each user's composite channel stacks the cascaded AP→IRS→user rows
//! `diag(h_r^H) F` on top of the direct AP→user row `h_d^H`, giving an
//! `(N+1) × M` matrix. Direct links are Rayleigh faded, IRS links Rician with
//! a line-of-sight term from half-wavelength uniform linear arrays (AP array
//! along x, IRS array along y).

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{db_to_linear, ModelError, SystemConfig};
use crate::numerics::{c64, CMatrix, C64};

pub type Point = [f64; 3];

/// Composite channels of every IU and EU.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    /// `H_k`, one `(N+1) × M` matrix per IU.
    pub info: Vec<CMatrix>,
    /// `G_j`, one `(N+1) × M` matrix per EU.
    pub energy: Vec<CMatrix>,
    pub iu_positions: Vec<Point>,
    pub eu_positions: Vec<Point>,
}

impl ChannelSet {
    /// Wraps explicit channel matrices (no geometry attached).
    pub fn from_matrices(info: Vec<CMatrix>, energy: Vec<CMatrix>) -> Result<Self, ModelError> {
        let shape = info.first().or(energy.first()).map(|m| m.shape());
        if let Some(shape) = shape {
            for m in info.iter().chain(energy.iter()) {
                if m.shape() != shape {
                    return Err(ModelError::Shape(format!("channel shape {:?} differs from {:?}", m.shape(), shape)));
                }
                if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                    return Err(ModelError::Shape("non-finite channel entry".into()));
                }
            }
        }
        Ok(Self { iu_positions: vec![[0.0; 3]; info.len()], eu_positions: vec![[0.0; 3]; energy.len()], info, energy })
    }

    pub fn num_iu(&self) -> usize {
        self.info.len()
    }

    pub fn num_eu(&self) -> usize {
        self.energy.len()
    }

    /// `N + 1`.
    pub fn rows(&self) -> usize {
        self.info.first().or(self.energy.first()).map_or(1, |m| m.nrows())
    }

    pub fn antennas(&self) -> usize {
        self.info.first().or(self.energy.first()).map_or(0, |m| m.ncols())
    }

    /// Restricts to the first `k` IUs and `j` EUs.
    pub fn truncated(&self, k: usize, j: usize) -> Self {
        Self {
            info: self.info[..k].to_vec(),
            energy: self.energy[..j].to_vec(),
            iu_positions: self.iu_positions[..k].to_vec(),
            eu_positions: self.eu_positions[..j].to_vec(),
        }
    }
}

/// Large-scale power gain `C0 / d^α`.
pub fn path_gain(c0_db: f64, distance: f64, exponent: f64) -> f64 {
    db_to_linear(c0_db) / distance.powf(exponent)
}

fn distance(a: &Point, b: &Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Cosine of the angle between the link `from → to` and `axis`.
fn axis_cosine(from: &Point, to: &Point, axis: usize) -> f64 {
    let d = distance(from, to);
    if d == 0.0 {
        0.0
    } else {
        (to[axis] - from[axis]) / d
    }
}

/// Half-wavelength ULA response.
fn ula_response(n: usize, cosine: f64) -> Vec<C64> {
    (0..n).map(|i| C64::from_polar(1.0, PI * i as f64 * cosine)).collect()
}

/// One CN(0, 1) draw.
pub fn complex_gaussian(rng: &mut impl Rng) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    c64(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Uniform point in the horizontal disk of radius `radius` around `center`.
fn point_in_disk(rng: &mut impl Rng, center: &Point, radius: f64) -> Point {
    let r = radius * rng.random::<f64>().sqrt();
    let phi = 2.0 * PI * rng.random::<f64>();
    [center[0] + r * phi.cos(), center[1] + r * phi.sin(), center[2]]
}

struct LinkModel {
    c0_db: f64,
    kappa: f64,
}

impl LinkModel {
    fn rayleigh(&self, rng: &mut impl Rng, n: usize, gain: f64) -> Vec<C64> {
        (0..n).map(|_| complex_gaussian(rng) * gain.sqrt()).collect()
    }

    fn rician_los_weight(&self) -> (f64, f64) {
        ((self.kappa / (1.0 + self.kappa)).sqrt(), (1.0 / (1.0 + self.kappa)).sqrt())
    }
}

/// Draws all channels of a scenario. Deterministic for a fixed seed.
pub fn generate_channels(cfg: &SystemConfig, rng_seed: u64) -> Result<ChannelSet, ModelError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let g = &cfg.geometry;
    let (m, n) = (cfg.antennas, cfg.irs_elements);
    let link = LinkModel { c0_db: cfg.path_loss_ref_db, kappa: db_to_linear(cfg.rician_factor_db) };
    let (w_los, w_nlos) = link.rician_los_weight();

    let iu_positions: Vec<Point> =
        (0..cfg.info_users).map(|_| point_in_disk(&mut rng, &g.iu_center, g.iu_radius)).collect();
    let eu_positions: Vec<Point> =
        (0..cfg.energy_users).map(|_| point_in_disk(&mut rng, &g.eu_center, g.eu_radius)).collect();

    // AP -> IRS, N x M.
    let d_ai = distance(&g.ap, &g.irs);
    let gain_ai = path_gain(link.c0_db, d_ai, cfg.exponent_irs);
    let ap_dep = ula_response(m, axis_cosine(&g.ap, &g.irs, 0));
    let irs_arr = ula_response(n, axis_cosine(&g.irs, &g.ap, 1));
    let f = CMatrix::from_fn(n, m, |r, c| {
        let los = irs_arr[r] * ap_dep[c].conj();
        (los * w_los + complex_gaussian(&mut rng) * w_nlos) * gain_ai.sqrt()
    });

    let composite = |pos: &Point, rng: &mut ChaCha8Rng| -> CMatrix {
        // IRS -> user row h_r^H (1 x N), Rician.
        let d_iu = distance(&g.irs, pos);
        let gain_r = path_gain(link.c0_db, d_iu, cfg.exponent_irs);
        let irs_dep = ula_response(n, axis_cosine(&g.irs, pos, 1));
        let hr_row: Vec<C64> =
            (0..n).map(|i| (irs_dep[i].conj() * w_los + complex_gaussian(rng) * w_nlos) * gain_r.sqrt()).collect();
        // AP -> user row h_d^H (1 x M), Rayleigh.
        let gain_d = path_gain(link.c0_db, distance(&g.ap, pos), cfg.exponent_direct);
        let hd_row = link.rayleigh(rng, m, gain_d);
        let mut h = CMatrix::zeros(n + 1, m);
        for r in 0..n {
            for c in 0..m {
                h[(r, c)] = hr_row[r] * f[(r, c)];
            }
        }
        for c in 0..m {
            h[(n, c)] = hd_row[c];
        }
        h
    };

    let info = iu_positions.iter().map(|p| composite(p, &mut rng)).collect();
    let energy = eu_positions.iter().map(|p| composite(p, &mut rng)).collect();
    Ok(ChannelSet { info, energy, iu_positions, eu_positions })
}
