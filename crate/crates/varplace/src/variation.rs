//! Within-die threshold-voltage variation maps.
//!
//! The die is split into an N×N fragment grid. The systematic component is a
//! zero-mean Gaussian field with a spherical correlogram over fragment-center
//! distances (in chip-length units); the random component is i.i.d. Gaussian.
//! Both carry σ/√2 so the superposed field has total standard deviation σ.
//! Fragments are classified HVT/LVT against μ + 1.3σ and the classification
//! is compressed into maximal homogeneous rectangles (the R-map) consumed by
//! the global placer.

use std::fmt;
use std::io::{BufRead, Write};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VariationError {
    #[error("invalid variation parameters: {0}")]
    InvalidParams(String),
    #[error("covariance factorization failed: matrix numerically non-PSD even after regularization")]
    NotPsd,
    #[error("malformed map file: {0}")]
    MalformedFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Parameters of the variation model. `sigma` is the total V_th standard
/// deviation; the systematic and random components each get σ/√2.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VariationParams {
    /// Nominal V_th in volts (μ).
    pub mu: f64,
    /// Total V_th standard deviation in volts (σ).
    pub sigma: f64,
    /// Correlation distance φ as a fraction of chip length.
    pub phi: f64,
    /// Fragment grid dimension N.
    pub grid_n: usize,
    pub seed: u64,
    /// Supply voltage in volts.
    pub vdd: f64,
    /// Alpha-power-law exponent.
    pub alpha: f64,
}

impl Default for VariationParams {
    fn default() -> Self {
        // 3σ = 55% of μ.
        let mu = 0.22;
        VariationParams {
            mu,
            sigma: 0.55 * mu / 3.0,
            phi: 0.5,
            grid_n: 300,
            seed: 1,
            vdd: 1.1,
            alpha: 1.3,
        }
    }
}

impl VariationParams {
    pub fn validate(&self) -> Result<(), VariationError> {
        if !(self.mu > 0.0 && self.mu < self.vdd) {
            return Err(VariationError::InvalidParams(format!(
                "mu {} must lie in (0, vdd = {})",
                self.mu, self.vdd
            )));
        }
        if self.sigma <= 0.0 {
            return Err(VariationError::InvalidParams("sigma must be positive".into()));
        }
        if !(self.phi > 0.0 && self.phi <= 1.0) {
            return Err(VariationError::InvalidParams(format!(
                "phi {} must lie in (0, 1]",
                self.phi
            )));
        }
        if self.grid_n < 2 {
            return Err(VariationError::InvalidParams("grid_n must be at least 2".into()));
        }
        Ok(())
    }

    /// Systematic (equally, random) component standard deviation σ/√2.
    pub fn sigma_sys(&self) -> f64 {
        self.sigma / std::f64::consts::SQRT_2
    }

    /// HVT/LVT classification threshold μ + 1.3σ.
    pub fn class_threshold(&self) -> f64 {
        self.mu + 1.3 * self.sigma
    }

    fn clamp_bounds(&self) -> (f64, f64) {
        (0.05 * self.vdd, 0.9 * self.vdd)
    }
}

/// Spherical correlogram: 1 − 3r/(2φ) + r³/(2φ³) for r ≤ φ, zero beyond.
/// Distances are in chip-length units.
pub fn correlogram(r: f64, phi: f64) -> f64 {
    debug_assert!(r >= 0.0 && phi > 0.0);
    if r >= phi {
        0.0
    } else {
        let t = r / phi;
        1.0 - 1.5 * t + 0.5 * t * t * t
    }
}

/// Effective channel length as a multiple of its nominal value,
/// L_eff / L_eff_nominal = 1 + (V_th − μ) / (2μ).
pub fn leff_from_vth(vth: f64, p: &VariationParams) -> f64 {
    debug_assert!(vth > 0.0);
    1.0 + (vth - p.mu) / (2.0 * p.mu)
}

/// An N×N map of V_th values in volts.
#[derive(Debug, Clone)]
pub struct VariationGrid {
    pub n: usize,
    /// Row-major: index y * n + x.
    pub values: Vec<f64>,
    pub params: VariationParams,
}

impl VariationGrid {
    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.n + x]
    }

    /// Fragment containing a point of the unit chip square, edges clamped.
    pub fn fragment_of_unit(&self, ux: f64, uy: f64) -> (usize, usize) {
        let clamp = |v: f64| ((v * self.n as f64) as isize).clamp(0, self.n as isize - 1) as usize;
        (clamp(ux), clamp(uy))
    }
}

/// Fragment classification per the μ + 1.3σ rule. A fragment with V_th
/// exactly at the threshold is LVT (the HVT test is strict).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RegionClass {
    Hvt,
    Lvt,
}

impl fmt::Display for RegionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RegionClass::Hvt => write!(f, "HVT"),
            RegionClass::Lvt => write!(f, "LVT"),
        }
    }
}

/// N×N HVT/LVT classification (the LH-map).
#[derive(Debug, Clone)]
pub struct ClassGrid {
    pub n: usize,
    pub cls: Vec<RegionClass>,
}

impl ClassGrid {
    #[inline]
    pub fn at(&self, x: usize, y: usize) -> RegionClass {
        self.cls[y * self.n + x]
    }
}

/// Axis-aligned homogeneous rectangle of fragments, inclusive bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegionBlock {
    pub lx: usize,
    pub ux: usize,
    pub ly: usize,
    pub uy: usize,
    pub cls: RegionClass,
}

impl RegionBlock {
    pub fn area(&self) -> usize {
        (self.ux - self.lx + 1) * (self.uy - self.ly + 1)
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.lx && x <= self.ux && y >= self.ly && y <= self.uy
    }
}

/// Rectangular decomposition of a class grid: disjoint homogeneous blocks
/// covering all N² fragments.
#[derive(Debug, Clone)]
pub struct RMap {
    pub n: usize,
    pub blocks: Vec<RegionBlock>,
}

impl RMap {
    /// Index of the block containing a fragment, if any.
    pub fn block_of(&self, x: usize, y: usize) -> Option<usize> {
        self.blocks.iter().position(|b| b.contains(x, y))
    }

    /// Per-fragment class reconstructed from the blocks.
    pub fn class_grid(&self) -> ClassGrid {
        let mut cls = vec![RegionClass::Lvt; self.n * self.n];
        for b in &self.blocks {
            for y in b.ly..=b.uy {
                for x in b.lx..=b.ux {
                    cls[y * self.n + x] = b.cls;
                }
            }
        }
        ClassGrid { n: self.n, cls }
    }

    pub fn lvt_area_fraction(&self) -> f64 {
        let lvt: usize = self
            .blocks
            .iter()
            .filter(|b| b.cls == RegionClass::Lvt)
            .map(|b| b.area())
            .sum();
        lvt as f64 / (self.n * self.n) as f64
    }
}

/// Reusable sampler for the systematic field. Factorizing the covariance is
/// the expensive part, so batch users construct this once and draw many
/// seeds from it.
pub struct FieldSampler {
    n: usize,
    inner: SamplerInner,
}

enum SamplerInner {
    /// Cholesky factor of the N²×N² correlation matrix.
    Dense { l: DMatrix<f64> },
    /// Coarse-lattice factor plus bilinear interpolation weights and the
    /// per-point residual std that restores unit total variance.
    Coarse {
        l: DMatrix<f64>,
        coarse_n: usize,
        /// Per fine fragment: 4 (coarse index, weight) pairs.
        weights: Vec<[(usize, f64); 4]>,
        resid_std: Vec<f64>,
    },
}

/// Largest grid factorized densely; beyond this the coarse path is used.
pub const DENSE_GRID_LIMIT: usize = 96;
/// Coarse lattice dimension for grids above `DENSE_GRID_LIMIT`.
pub const COARSE_GRID_N: usize = 64;

fn fragment_center(i: usize, n: usize) -> (f64, f64) {
    ((i % n) as f64, (i / n) as f64)
}

fn correlation_matrix(n: usize, phi: f64) -> DMatrix<f64> {
    let dim = n * n;
    let inv_n = 1.0 / n as f64;
    let mut m = DMatrix::<f64>::zeros(dim, dim);
    for a in 0..dim {
        let (ax, ay) = fragment_center(a, n);
        for b in 0..=a {
            let (bx, by) = fragment_center(b, n);
            let dx = (ax - bx) * inv_n;
            let dy = (ay - by) * inv_n;
            let rho = correlogram((dx * dx + dy * dy).sqrt(), phi);
            m[(a, b)] = rho;
            m[(b, a)] = rho;
        }
        m[(a, a)] += 1e-10;
    }
    m
}

impl FieldSampler {
    pub fn new(n: usize, phi: f64) -> Result<Self, VariationError> {
        if n < 2 {
            return Err(VariationError::InvalidParams("grid_n must be at least 2".into()));
        }
        if n <= DENSE_GRID_LIMIT {
            let m = correlation_matrix(n, phi);
            let l = m.cholesky().ok_or(VariationError::NotPsd)?.unpack();
            return Ok(FieldSampler {
                n,
                inner: SamplerInner::Dense { l },
            });
        }

        let cn = COARSE_GRID_N;
        let m = correlation_matrix(cn, phi);
        let l = m.cholesky().ok_or(VariationError::NotPsd)?.unpack();

        // Bilinear interpolation from coarse fragment centers, clamped at the
        // chip boundary. The residual std per fine point tops the interpolated
        // variance back up to 1 (correlation scale).
        let mut weights = Vec::with_capacity(n * n);
        let mut resid_std = Vec::with_capacity(n * n);
        let cnf = cn as f64;
        for idx in 0..n * n {
            let (fx, fy) = (idx % n, idx / n);
            // Fine center in coarse fractional coordinates.
            let u = ((fx as f64 + 0.5) / n as f64) * cnf - 0.5;
            let v = ((fy as f64 + 0.5) / n as f64) * cnf - 0.5;
            let i0 = (u.floor() as isize).clamp(0, cn as isize - 2) as usize;
            let j0 = (v.floor() as isize).clamp(0, cn as isize - 2) as usize;
            let wx = (u - i0 as f64).clamp(0.0, 1.0);
            let wy = (v - j0 as f64).clamp(0.0, 1.0);
            let pts = [
                (j0 * cn + i0, (1.0 - wx) * (1.0 - wy)),
                (j0 * cn + i0 + 1, wx * (1.0 - wy)),
                ((j0 + 1) * cn + i0, (1.0 - wx) * wy),
                ((j0 + 1) * cn + i0 + 1, wx * wy),
            ];
            // Variance of the interpolated value at correlation scale.
            let mut var = 0.0;
            for &(a, wa) in &pts {
                let (ax, ay) = fragment_center(a, cn);
                for &(b, wb) in &pts {
                    let (bx, by) = fragment_center(b, cn);
                    let dx = (ax - bx) / cnf;
                    let dy = (ay - by) / cnf;
                    var += wa * wb * correlogram((dx * dx + dy * dy).sqrt(), phi);
                }
            }
            weights.push(pts);
            resid_std.push((1.0 - var).max(0.0).sqrt());
        }
        Ok(FieldSampler {
            n,
            inner: SamplerInner::Coarse {
                l,
                coarse_n: cn,
                weights,
                resid_std,
            },
        })
    }

    pub fn grid_n(&self) -> usize {
        self.n
    }

    /// One zero-mean sample with standard deviation `sigma_sys` per fragment.
    pub fn sample(&self, sigma_sys: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(0);
        match &self.inner {
            SamplerInner::Dense { l } => {
                let dim = self.n * self.n;
                let z: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
                lower_tri_mul(l, &z)
                    .into_iter()
                    .map(|v| v * sigma_sys)
                    .collect()
            }
            SamplerInner::Coarse {
                l,
                coarse_n,
                weights,
                resid_std,
            } => {
                let cdim = coarse_n * coarse_n;
                let z: Vec<f64> = (0..cdim).map(|_| StandardNormal.sample(&mut rng)).collect();
                let coarse = lower_tri_mul(l, &z);
                let mut resid_rng = ChaCha8Rng::seed_from_u64(seed);
                resid_rng.set_stream(1);
                weights
                    .iter()
                    .zip(resid_std)
                    .map(|(pts, &rs)| {
                        let interp: f64 = pts.iter().map(|&(a, w)| w * coarse[a]).sum();
                        let extra: f64 = StandardNormal.sample(&mut resid_rng);
                        sigma_sys * (interp + rs * extra)
                    })
                    .collect()
            }
        }
    }
}

/// y = L z for a lower-triangular factor, walking the column-major storage
/// and skipping the zero upper half.
fn lower_tri_mul(l: &DMatrix<f64>, z: &[f64]) -> Vec<f64> {
    let dim = z.len();
    let data = l.as_slice();
    let mut out = vec![0.0; dim];
    for (j, &zj) in z.iter().enumerate() {
        let col = &data[j * dim + j..(j + 1) * dim];
        for (k, &v) in col.iter().enumerate() {
            out[j + k] += v * zj;
        }
    }
    out
}

/// Systematic component only: zero-mean field with std σ_sys = σ/√2.
pub fn gen_systematic(p: &VariationParams) -> Result<VariationGrid, VariationError> {
    p.validate()?;
    let sampler = FieldSampler::new(p.grid_n, p.phi)?;
    Ok(gen_systematic_with(&sampler, p))
}

/// Systematic component drawn through a pre-built sampler.
pub fn gen_systematic_with(sampler: &FieldSampler, p: &VariationParams) -> VariationGrid {
    assert_eq!(sampler.grid_n(), p.grid_n);
    VariationGrid {
        n: p.grid_n,
        values: sampler.sample(p.sigma_sys(), p.seed),
        params: p.clone(),
    }
}

/// Full V_th map: μ plus systematic plus random component, clamped to
/// [0.05·V_DD, 0.9·V_DD].
pub fn gen_map(p: &VariationParams) -> Result<VariationGrid, VariationError> {
    p.validate()?;
    let sampler = FieldSampler::new(p.grid_n, p.phi)?;
    Ok(gen_map_with(&sampler, p))
}

/// Full V_th map drawn through a pre-built sampler.
pub fn gen_map_with(sampler: &FieldSampler, p: &VariationParams) -> VariationGrid {
    assert_eq!(sampler.grid_n(), p.grid_n);
    let sys = sampler.sample(p.sigma_sys(), p.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    rng.set_stream(2);
    let sigma_rand = p.sigma_sys();
    let (lo, hi) = p.clamp_bounds();
    let values = sys
        .into_iter()
        .map(|s| {
            let r: f64 = StandardNormal.sample(&mut rng);
            (p.mu + s + sigma_rand * r).clamp(lo, hi)
        })
        .collect();
    VariationGrid {
        n: p.grid_n,
        values,
        params: p.clone(),
    }
}

/// HVT/LVT classification: a fragment is HVT iff V_th > μ + 1.3σ.
pub fn classify_regions(g: &VariationGrid) -> ClassGrid {
    let t = g.params.class_threshold();
    ClassGrid {
        n: g.n,
        cls: g
            .values
            .iter()
            .map(|&v| if v > t { RegionClass::Hvt } else { RegionClass::Lvt })
            .collect(),
    }
}

/// Compress a class grid into maximal homogeneous rectangles with a
/// deterministic row-major greedy sweep: at each uncovered fragment, grow the
/// widest same-class run, then extend it downward while the whole strip stays
/// homogeneous and uncovered.
pub fn build_rmap(lh: &ClassGrid) -> RMap {
    let n = lh.n;
    let mut covered = vec![false; n * n];
    let mut blocks = Vec::new();
    for y in 0..n {
        for x in 0..n {
            if covered[y * n + x] {
                continue;
            }
            let c = lh.at(x, y);
            let mut ux = x;
            while ux + 1 < n && !covered[y * n + ux + 1] && lh.at(ux + 1, y) == c {
                ux += 1;
            }
            let mut uy = y;
            'down: while uy + 1 < n {
                for xx in x..=ux {
                    if covered[(uy + 1) * n + xx] || lh.at(xx, uy + 1) != c {
                        break 'down;
                    }
                }
                uy += 1;
            }
            for yy in y..=uy {
                for xx in x..=ux {
                    covered[yy * n + xx] = true;
                }
            }
            blocks.push(RegionBlock {
                lx: x,
                ux,
                ly: y,
                uy,
                cls: c,
            });
        }
    }
    RMap { n, blocks }
}

/// Drop placement-irrelevant speckle from an R-map: LVT blocks smaller than
/// `min_area` become HVT, then HVT blocks smaller than `bridge_area` that are
/// bordered by LVT on at least three sides become LVT. Geometry is untouched,
/// so the result stays disjoint and covering.
pub fn filter_blocks(m: &RMap, min_area: usize, bridge_area: usize) -> RMap {
    let n = m.n;
    let mut blocks = m.blocks.clone();
    for b in blocks.iter_mut() {
        if b.cls == RegionClass::Lvt && b.area() < min_area {
            b.cls = RegionClass::Hvt;
        }
    }
    // Fragment classes after the first rule, for adjacency checks.
    let interim = RMap {
        n,
        blocks: blocks.clone(),
    }
    .class_grid();
    let is_lvt = |x: usize, y: usize| interim.at(x, y) == RegionClass::Lvt;
    for b in blocks.iter_mut() {
        if b.cls != RegionClass::Hvt || b.area() >= bridge_area {
            continue;
        }
        let mut lvt_sides = 0;
        if b.lx > 0 && (b.ly..=b.uy).all(|y| is_lvt(b.lx - 1, y)) {
            lvt_sides += 1;
        }
        if b.ux + 1 < n && (b.ly..=b.uy).all(|y| is_lvt(b.ux + 1, y)) {
            lvt_sides += 1;
        }
        if b.ly > 0 && (b.lx..=b.ux).all(|x| is_lvt(x, b.ly - 1)) {
            lvt_sides += 1;
        }
        if b.uy + 1 < n && (b.lx..=b.ux).all(|x| is_lvt(x, b.uy + 1)) {
            lvt_sides += 1;
        }
        if lvt_sides >= 3 {
            b.cls = RegionClass::Lvt;
        }
    }
    RMap { n, blocks }
}

/// Write a map file: one JSON header line followed by N CSV rows of volts.
pub fn write_map<W: Write>(
    w: &mut W,
    g: &VariationGrid,
    extra_header: &[(&str, String)],
) -> Result<(), VariationError> {
    let p = &g.params;
    let mut header = format!(
        "{{\"n\": {}, \"mu\": {}, \"sigma\": {}, \"phi\": {}, \"seed\": {}, \"vdd\": {}, \"alpha\": {}",
        g.n, p.mu, p.sigma, p.phi, p.seed, p.vdd, p.alpha
    );
    for (k, v) in extra_header {
        header.push_str(&format!(", \"{k}\": {v}"));
    }
    header.push('}');
    writeln!(w, "{header}")?;
    for y in 0..g.n {
        let row: Vec<String> = (0..g.n).map(|x| g.at(x, y).to_string()).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
struct MapHeader {
    n: usize,
    mu: f64,
    sigma: f64,
    phi: f64,
    seed: u64,
    vdd: f64,
    alpha: f64,
}

/// Read a map file produced by `write_map`.
pub fn read_map<R: BufRead>(r: &mut R) -> Result<VariationGrid, VariationError> {
    let mut header = String::new();
    r.read_line(&mut header)?;
    let h: MapHeader = serde_json::from_str(header.trim())
        .map_err(|e| VariationError::MalformedFile(format!("bad header: {e}")))?;
    let params = VariationParams {
        mu: h.mu,
        sigma: h.sigma,
        phi: h.phi,
        grid_n: h.n,
        seed: h.seed,
        vdd: h.vdd,
        alpha: h.alpha,
    };
    let mut values = Vec::with_capacity(h.n * h.n);
    for (li, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: Result<Vec<f64>, _> = line
            .trim()
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect();
        let row =
            row.map_err(|e| VariationError::MalformedFile(format!("row {}: {e}", li + 2)))?;
        if row.len() != h.n {
            return Err(VariationError::MalformedFile(format!(
                "row {} has {} values, expected {}",
                li + 2,
                row.len(),
                h.n
            )));
        }
        values.extend(row);
    }
    if values.len() != h.n * h.n {
        return Err(VariationError::MalformedFile(format!(
            "got {} values, expected {}",
            values.len(),
            h.n * h.n
        )));
    }
    Ok(VariationGrid {
        n: h.n,
        values,
        params,
    })
}

/// Write an R-map as CSV rows `lx,ux,ly,uy,cls`.
pub fn write_rmap<W: Write>(
    w: &mut W,
    m: &RMap,
    comment: Option<&str>,
) -> Result<(), VariationError> {
    if let Some(c) = comment {
        writeln!(w, "# {c}")?;
    }
    writeln!(w, "# n={}", m.n)?;
    for b in &m.blocks {
        writeln!(w, "{},{},{},{},{}", b.lx, b.ux, b.ly, b.uy, b.cls)?;
    }
    Ok(())
}

/// Read an R-map written by `write_rmap`.
pub fn read_rmap<R: BufRead>(r: &mut R) -> Result<RMap, VariationError> {
    let mut n = None;
    let mut blocks = Vec::new();
    for line in r.lines() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        if let Some(rest) = t.strip_prefix('#') {
            if let Some(v) = rest.trim().strip_prefix("n=") {
                n = Some(v.trim().parse::<usize>().map_err(|e| {
                    VariationError::MalformedFile(format!("bad n header: {e}"))
                })?);
            }
            continue;
        }
        let parts: Vec<&str> = t.split(',').collect();
        if parts.len() != 5 {
            return Err(VariationError::MalformedFile(format!("bad block row: {t}")));
        }
        let num = |s: &str| {
            s.trim()
                .parse::<usize>()
                .map_err(|e| VariationError::MalformedFile(format!("bad block row `{t}`: {e}")))
        };
        let cls = match parts[4].trim() {
            "HVT" => RegionClass::Hvt,
            "LVT" => RegionClass::Lvt,
            other => return Err(VariationError::MalformedFile(format!("bad class `{other}`"))),
        };
        blocks.push(RegionBlock {
            lx: num(parts[0])?,
            ux: num(parts[1])?,
            ly: num(parts[2])?,
            uy: num(parts[3])?,
            cls,
        });
    }
    let n = n.ok_or_else(|| VariationError::MalformedFile("missing `# n=` header".into()))?;
    Ok(RMap { n, blocks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn correlogram_anchor_points() {
        assert_eq!(correlogram(0.0, 0.5), 1.0);
        assert!((correlogram(0.5, 0.5)).abs() < 1e-15);
        assert!((correlogram(0.25, 0.5) - 0.3125).abs() < 1e-15);
        assert_eq!(correlogram(0.7, 0.5), 0.0);
    }

    #[test]
    fn correlogram_nonincreasing() {
        let phi = 0.37;
        let mut prev = f64::INFINITY;
        for k in 0..=1000 {
            let r = k as f64 * 0.001;
            let v = correlogram(r, phi);
            assert!(v <= prev + 1e-15, "increased at r={r}");
            assert!((0.0..=1.0).contains(&v));
            prev = v;
        }
        assert_eq!(correlogram(phi, phi), 0.0);
    }

    #[test]
    fn leff_anchor_points() {
        let p = VariationParams::default();
        assert!((leff_from_vth(0.22, &p) - 1.0).abs() < 1e-15);
        assert!((leff_from_vth(0.264, &p) - 1.1).abs() < 1e-12);
        assert!((leff_from_vth(0.176, &p) - 0.9).abs() < 1e-12);
    }

    #[test]
    fn leff_affine_slope() {
        let p = VariationParams::default();
        let slope = (leff_from_vth(0.3, &p) - leff_from_vth(0.2, &p)) / 0.1;
        assert!((slope - 1.0 / (2.0 * p.mu)).abs() < 1e-9);
    }

    fn small_params(n: usize, seed: u64) -> VariationParams {
        VariationParams {
            grid_n: n,
            seed,
            ..VariationParams::default()
        }
    }

    #[test]
    fn systematic_deterministic_per_seed() {
        let p = small_params(8, 42);
        let a = gen_systematic(&p).unwrap();
        let b = gen_systematic(&p).unwrap();
        assert_eq!(a.values, b.values);
        let p2 = small_params(8, 43);
        assert_ne!(a.values, gen_systematic(&p2).unwrap().values);
    }

    #[test]
    fn systematic_iid_in_zero_correlation_limit() {
        // N=2 with phi ~ 0: four i.i.d. samples; cross-correlation near zero.
        let sampler = FieldSampler::new(2, 1e-9).unwrap();
        let trials = 10_000;
        let mut sums = [0.0f64; 4];
        let mut prods = [[0.0f64; 4]; 4];
        for seed in 0..trials {
            let s = sampler.sample(1.0, seed);
            for i in 0..4 {
                sums[i] += s[i];
                for j in 0..4 {
                    prods[i][j] += s[i] * s[j];
                }
            }
        }
        let t = trials as f64;
        for i in 0..4 {
            for j in 0..4 {
                if i == j {
                    continue;
                }
                let cov = prods[i][j] / t - sums[i] / t * (sums[j] / t);
                let vi = prods[i][i] / t - (sums[i] / t).powi(2);
                let vj = prods[j][j] / t - (sums[j] / t).powi(2);
                let rho = cov / (vi * vj).sqrt();
                assert!(rho.abs() < 0.05, "rho[{i}][{j}] = {rho}");
            }
        }
    }

    /// Pooled empirical correlation over seeds at horizontal offset `d`.
    fn empirical_rho(sampler: &FieldSampler, n: usize, d: usize, seeds: u64) -> f64 {
        let mut sxy = 0.0;
        let mut sxx = 0.0;
        let mut syy = 0.0;
        for seed in 0..seeds {
            let s = sampler.sample(1.0, seed);
            for y in 0..n {
                for x in 0..n - d {
                    let a = s[y * n + x];
                    let b = s[y * n + x + d];
                    sxy += a * b;
                    sxx += a * a;
                    syy += b * b;
                }
            }
        }
        sxy / (sxx * syy).sqrt()
    }

    #[test]
    fn systematic_matches_correlogram_n32() {
        let n = 32;
        let phi = 0.5;
        let sampler = FieldSampler::new(n, phi).unwrap();
        for r in [0.1f64, 0.25, 0.4] {
            let d = (r * n as f64).round() as usize;
            let actual_r = d as f64 / n as f64;
            let rho_hat = empirical_rho(&sampler, n, d, 200);
            let expected = correlogram(actual_r, phi);
            assert!(
                (rho_hat - expected).abs() < 0.08,
                "r={actual_r}: empirical {rho_hat} vs expected {expected}"
            );
        }
    }

    #[test]
    fn map_near_constant_when_sigma_tiny() {
        let mut p = small_params(8, 7);
        p.sigma = 1e-12;
        let g = gen_map(&p).unwrap();
        for &v in &g.values {
            assert!((v - p.mu).abs() < 1e-9);
        }
    }

    #[test]
    fn map_variance_superposes() {
        let n = 32;
        let sampler = FieldSampler::new(n, 0.5).unwrap();
        let mut p = small_params(n, 0);
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        let mut count = 0usize;
        for seed in 0..100 {
            p.seed = seed;
            let g = gen_map_with(&sampler, &p);
            for &v in &g.values {
                sum += v;
                sum2 += v * v;
                count += 1;
            }
        }
        let mean = sum / count as f64;
        let var = sum2 / count as f64 - mean * mean;
        assert!((mean - p.mu).abs() < 0.01 * p.mu, "mean {mean}");
        let sigma2 = p.sigma * p.sigma;
        assert!(
            (var - sigma2).abs() < 0.05 * sigma2,
            "var {var} vs sigma^2 {sigma2}"
        );
    }

    #[test]
    fn gen_map_matches_sampler_path() {
        let p = small_params(16, 9);
        let direct = gen_map(&p).unwrap();
        let sampler = FieldSampler::new(p.grid_n, p.phi).unwrap();
        let via = gen_map_with(&sampler, &p);
        assert_eq!(direct.values, via.values);
    }

    #[test]
    fn classify_threshold_cases() {
        let p = VariationParams {
            sigma: 0.0403,
            ..VariationParams::default()
        };
        // threshold = 0.22 + 1.3 * 0.0403 = 0.27239
        let mk = |v: f64| VariationGrid {
            n: 2,
            values: vec![v; 4],
            params: p.clone(),
        };
        assert_eq!(classify_regions(&mk(0.28)).at(0, 0), RegionClass::Hvt);
        assert_eq!(classify_regions(&mk(0.25)).at(0, 0), RegionClass::Lvt);
        let t = p.class_threshold();
        assert_eq!(classify_regions(&mk(t)).at(0, 0), RegionClass::Lvt);
    }

    fn grid_from(rows: &[&str]) -> ClassGrid {
        let n = rows.len();
        let mut cls = Vec::with_capacity(n * n);
        for r in rows {
            assert_eq!(r.len(), n);
            for ch in r.chars() {
                cls.push(if ch == 'H' {
                    RegionClass::Hvt
                } else {
                    RegionClass::Lvt
                });
            }
        }
        ClassGrid { n, cls }
    }

    fn check_partition(m: &RMap, lh: &ClassGrid) {
        let n = m.n;
        let mut seen = vec![false; n * n];
        for b in &m.blocks {
            assert!(b.lx <= b.ux && b.ly <= b.uy);
            for y in b.ly..=b.uy {
                for x in b.lx..=b.ux {
                    assert!(!seen[y * n + x], "overlap at ({x},{y})");
                    seen[y * n + x] = true;
                    assert_eq!(lh.at(x, y), b.cls, "class mismatch at ({x},{y})");
                }
            }
        }
        assert!(seen.iter().all(|&s| s), "not covering");
    }

    #[test]
    fn rmap_all_lvt_single_block() {
        let lh = grid_from(&["LLLL", "LLLL", "LLLL", "LLLL"]);
        let m = build_rmap(&lh);
        assert_eq!(m.blocks.len(), 1);
        assert_eq!(
            m.blocks[0],
            RegionBlock {
                lx: 0,
                ux: 3,
                ly: 0,
                uy: 3,
                cls: RegionClass::Lvt
            }
        );
    }

    #[test]
    fn rmap_checkerboard_unit_blocks() {
        let lh = grid_from(&["HL", "LH"]);
        let m = build_rmap(&lh);
        assert_eq!(m.blocks.len(), 4);
        check_partition(&m, &lh);
    }

    /// Reference sweep written independently of `build_rmap`: walks a flat
    /// cursor and marks ownership instead of a covered bitmap.
    fn reference_sweep(lh: &ClassGrid) -> Vec<RegionBlock> {
        let n = lh.n;
        let mut owner: Vec<Option<usize>> = vec![None; n * n];
        let mut out: Vec<RegionBlock> = Vec::new();
        let mut cursor = 0usize;
        while cursor < n * n {
            if owner[cursor].is_some() {
                cursor += 1;
                continue;
            }
            let y = cursor / n;
            let x = cursor % n;
            let cls = lh.at(x, y);
            let mut ux = x;
            loop {
                let nx = ux + 1;
                if nx >= n || owner[y * n + nx].is_some() || lh.at(nx, y) != cls {
                    break;
                }
                ux = nx;
            }
            let mut uy = y;
            loop {
                let ny = uy + 1;
                if ny >= n {
                    break;
                }
                let ok = (x..=ux).all(|xx| owner[ny * n + xx].is_none() && lh.at(xx, ny) == cls);
                if !ok {
                    break;
                }
                uy = ny;
            }
            let id = out.len();
            for yy in y..=uy {
                for xx in x..=ux {
                    owner[yy * n + xx] = Some(id);
                }
            }
            out.push(RegionBlock {
                lx: x,
                ux,
                ly: y,
                uy,
                cls,
            });
        }
        out
    }

    #[test]
    fn rmap_matches_reference_on_random_grids() {
        for seed in 0..50u64 {
            let n = 10;
            let cls: Vec<RegionClass> = (0..n * n)
                .map(|i| {
                    if crate::stream::bernoulli(seed, i as u64, 0, 0, 0.5) {
                        RegionClass::Hvt
                    } else {
                        RegionClass::Lvt
                    }
                })
                .collect();
            let lh = ClassGrid { n, cls };
            let m = build_rmap(&lh);
            check_partition(&m, &lh);
            assert_eq!(m.blocks, reference_sweep(&lh));
        }
    }

    #[test]
    fn filter_small_lvt_becomes_hvt() {
        let lh = grid_from(&["HHHH", "HLHH", "HHHH", "HHHH"]);
        let m = build_rmap(&lh);
        let f = filter_blocks(&m, 4, 0);
        assert!(f.blocks.iter().all(|b| b.cls == RegionClass::Hvt));
        check_partition(&f, &f.class_grid());
    }

    #[test]
    fn filter_zero_thresholds_identity() {
        let lh = grid_from(&["HL", "LH"]);
        let m = build_rmap(&lh);
        let f = filter_blocks(&m, 0, 0);
        assert_eq!(f.blocks, m.blocks);
    }

    #[test]
    fn filter_bridges_thin_hvt_strip() {
        let mut rows = Vec::new();
        for y in 0..10 {
            let mut row = String::new();
            for x in 0..10 {
                row.push(if x == 4 && (2..8).contains(&y) { 'H' } else { 'L' });
            }
            rows.push(row);
        }
        let refs: Vec<&str> = rows.iter().map(|s| s.as_str()).collect();
        let lh = grid_from(&refs);
        let m = build_rmap(&lh);
        let f = filter_blocks(&m, 0, 8);
        assert!(
            f.blocks.iter().all(|b| b.cls == RegionClass::Lvt),
            "strip should be absorbed: {:?}",
            f.blocks
                .iter()
                .filter(|b| b.cls == RegionClass::Hvt)
                .collect::<Vec<_>>()
        );
    }

    #[test]
    fn map_file_round_trip() {
        let p = small_params(6, 11);
        let g = gen_map(&p).unwrap();
        let mut buf = Vec::new();
        write_map(&mut buf, &g, &[]).unwrap();
        let back = read_map(&mut std::io::BufReader::new(&buf[..])).unwrap();
        assert_eq!(back.n, g.n);
        assert_eq!(back.values, g.values);
        assert_eq!(back.params.seed, p.seed);
    }

    #[test]
    fn rmap_file_round_trip() {
        let lh = grid_from(&["HL", "LH"]);
        let m = build_rmap(&lh);
        let mut buf = Vec::new();
        write_rmap(&mut buf, &m, Some("test")).unwrap();
        let back = read_rmap(&mut std::io::BufReader::new(&buf[..])).unwrap();
        assert_eq!(back.n, m.n);
        assert_eq!(back.blocks, m.blocks);
    }
}
