//! Geometry-driven channel generation: Rayleigh fading on top of distance
//! path loss, plus dB/dBm conversions.
//!
//! Random streams are derived from the scenario seed with ChaCha8 stream ids,
//! so each entity owns an independent, reproducible sequence:
//!
//! | stream id   | contents                                   |
//! |-------------|--------------------------------------------|
//! | 0           | cellular user positions                    |
//! | 1           | cellular-to-BS fading `h^cb`               |
//! | 2 + 2l      | D2D pair `l` positions (TX, then RX)       |
//! | 3 + 2l      | D2D pair `l` fading (`h^db`, `h^dd`, `h^cd`)|
//!
//! Adding a pair therefore never perturbs the draws of the existing ones.

use std::io::Write;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::scenario::ScenarioConfig;

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkKind {
    /// `37.6 log10(d[km]) + 128.1`
    Cellular,
    /// `40 log10(d[km]) + 148`
    D2d,
}

pub fn path_loss_db(kind: LinkKind, distance_m: f64) -> Result<f64> {
    if !(distance_m > 0.0) || !distance_m.is_finite() {
        return Err(Error::InvalidArgument(format!("path loss needs a positive distance, got {distance_m}")));
    }
    let km = (distance_m / 1000.0).log10();
    Ok(match kind {
        LinkKind::Cellular => 37.6 * km + 128.1,
        LinkKind::D2d => 40.0 * km + 148.0,
    })
}

/// Per-entity random streams for one scenario seed.
#[derive(Debug, Clone, Copy)]
pub struct RngStreams {
    seed: u64,
}

impl RngStreams {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    fn stream(&self, id: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(id);
        rng
    }

    pub fn cellular_geometry(&self) -> ChaCha8Rng {
        self.stream(0)
    }

    pub fn cellular_fading(&self) -> ChaCha8Rng {
        self.stream(1)
    }

    pub fn pair_geometry(&self, pair: usize) -> ChaCha8Rng {
        self.stream(2 + 2 * pair as u64)
    }

    pub fn pair_fading(&self, pair: usize) -> ChaCha8Rng {
        self.stream(3 + 2 * pair as u64)
    }
}

pub type Point = (f64, f64);

fn distance(a: Point, b: Point) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

/// Node positions in meters; the base station sits at the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeGeometry {
    pub bs_position: Point,
    pub cell_user_positions: Vec<Point>,
    pub d2d_tx_positions: Vec<Point>,
    pub d2d_rx_positions: Vec<Point>,
}

/// Uniform point on the annulus `r_min <= r <= r_max` around `center`.
fn uniform_annulus(center: Point, r_min: f64, r_max: f64, rng: &mut impl Rng) -> Point {
    let u: f64 = rng.random();
    let r = (r_min * r_min + u * (r_max * r_max - r_min * r_min)).sqrt();
    let theta = rng.random_range(0.0..std::f64::consts::TAU);
    (center.0 + r * theta.cos(), center.1 + r * theta.sin())
}

pub fn sample_geometry(cfg: &ScenarioConfig, streams: &RngStreams) -> NodeGeometry {
    let origin = (0.0, 0.0);
    let radius = cfg.cell_radius_m;
    let mut rng = streams.cellular_geometry();
    let cell_user_positions = (0..cfg.users).map(|_| uniform_annulus(origin, 0.0, radius, &mut rng)).collect();
    let (d_min, d_max) = cfg.d2d_distance_range_m;
    let mut d2d_tx_positions = Vec::with_capacity(cfg.d2d_pairs);
    let mut d2d_rx_positions = Vec::with_capacity(cfg.d2d_pairs);
    for pair in 0..cfg.d2d_pairs {
        let mut rng = streams.pair_geometry(pair);
        let tx = uniform_annulus(origin, 0.0, radius, &mut rng);
        d2d_tx_positions.push(tx);
        d2d_rx_positions.push(uniform_annulus(tx, d_min, d_max, &mut rng));
    }
    NodeGeometry { bs_position: origin, cell_user_positions, d2d_tx_positions, d2d_rx_positions }
}

/// Small-scale fading model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fading {
    /// Unit-variance circularly-symmetric complex Gaussian.
    #[default]
    Rayleigh,
    /// Fading fixed to 1, leaving pure path loss.
    Unit,
}

impl Fading {
    fn draw(self, rng: &mut impl Rng) -> Complex64 {
        match self {
            Fading::Rayleigh => rayleigh_sample(rng),
            Fading::Unit => Complex64::new(1.0, 0.0),
        }
    }
}

/// One draw of `CN(0, 1)`.
pub fn rayleigh_sample(rng: &mut impl Rng) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Complex channel gains of one realization.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    /// `cell_to_bs[j][k]`: user `j` to the BS on subcarrier `k`.
    pub cell_to_bs: Vec<Vec<Complex64>>,
    /// D2D transmitter `l` to the BS.
    pub d2d_to_bs: Vec<Complex64>,
    /// D2D transmitter `l` to its own receiver.
    pub d2d_pair: Vec<Complex64>,
    /// `cell_to_d2d[j][l]`: user `j` to D2D receiver `l`.
    pub cell_to_d2d: Vec<Vec<Complex64>>,
    pub noise_power_w: f64,
}

impl ChannelRealization {
    pub fn users(&self) -> usize {
        self.cell_to_bs.len()
    }

    pub fn subcarriers(&self) -> usize {
        self.cell_to_bs.first().map_or(0, Vec::len)
    }

    pub fn pairs(&self) -> usize {
        self.d2d_pair.len()
    }

    /// One row per link: `type,i,j,re,im`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["type", "i", "j", "re", "im"])?;
        let mut row = |kind: &str, i: usize, j: usize, h: Complex64| {
            w.write_record([kind.to_string(), i.to_string(), j.to_string(), h.re.to_string(), h.im.to_string()])
        };
        for (j, gains) in self.cell_to_bs.iter().enumerate() {
            for (k, &h) in gains.iter().enumerate() {
                row("cb", j, k, h)?;
            }
        }
        for (l, &h) in self.d2d_to_bs.iter().enumerate() {
            row("db", l, 0, h)?;
        }
        for (l, &h) in self.d2d_pair.iter().enumerate() {
            row("dd", l, 0, h)?;
        }
        for (j, gains) in self.cell_to_d2d.iter().enumerate() {
            for (l, &h) in gains.iter().enumerate() {
                row("cd", j, l, h)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn gain(kind: LinkKind, a: Point, b: Point, fading: Fading, rng: &mut impl Rng) -> Complex64 {
    // coincident nodes are clamped to 1 m, the smallest configured pair distance
    let d = distance(a, b).max(1.0);
    let pl = path_loss_db(kind, d).expect("distance clamped positive");
    fading.draw(rng) * db_to_linear(-pl).sqrt()
}

/// Links that end at the BS use the cellular model; device-to-device links use the D2D model.
pub fn sample_channels(cfg: &ScenarioConfig, geo: &NodeGeometry, streams: &RngStreams, fading: Fading) -> Result<ChannelRealization> {
    if geo.cell_user_positions.len() != cfg.users
        || geo.d2d_tx_positions.len() != cfg.d2d_pairs
        || geo.d2d_rx_positions.len() != cfg.d2d_pairs
    {
        return Err(Error::Dimension("geometry does not match scenario counts".into()));
    }
    let bs = geo.bs_position;
    let mut rng = streams.cellular_fading();
    let cell_to_bs = geo
        .cell_user_positions
        .iter()
        .map(|&p| (0..cfg.subcarriers).map(|_| gain(LinkKind::Cellular, p, bs, fading, &mut rng)).collect())
        .collect();

    let mut d2d_to_bs = Vec::with_capacity(cfg.d2d_pairs);
    let mut d2d_pair = Vec::with_capacity(cfg.d2d_pairs);
    let mut cell_to_d2d = vec![Vec::with_capacity(cfg.d2d_pairs); cfg.users];
    for l in 0..cfg.d2d_pairs {
        let mut rng = streams.pair_fading(l);
        let (tx, rx) = (geo.d2d_tx_positions[l], geo.d2d_rx_positions[l]);
        d2d_to_bs.push(gain(LinkKind::Cellular, tx, bs, fading, &mut rng));
        d2d_pair.push(gain(LinkKind::D2d, tx, rx, fading, &mut rng));
        for (j, &p) in geo.cell_user_positions.iter().enumerate() {
            cell_to_d2d[j].push(gain(LinkKind::D2d, p, rx, fading, &mut rng));
        }
    }
    Ok(ChannelRealization { cell_to_bs, d2d_to_bs, d2d_pair, cell_to_d2d, noise_power_w: cfg.noise_power_w() })
}

/// Geometry and Rayleigh channels for `seed`.
pub fn draw_realization(cfg: &ScenarioConfig, seed: u64) -> Result<(NodeGeometry, ChannelRealization)> {
    let streams = RngStreams::new(seed);
    let geo = sample_geometry(cfg, &streams);
    let ch = sample_channels(cfg, &geo, &streams, Fading::Rayleigh)?;
    Ok((geo, ch))
}
