//! FFT cross-correlation velocimetry on square interrogation windows.
//!
//! Pixel coordinates are continuous with pixel `i` covering `[i, i + 1)`;
//! physical coordinates are pixel coordinates divided by `px_per_length`.
//! Rows grow downward, so positive `v` moves toward larger row index.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::flowdata::{Grid, VelocityField};

/// 16-bit particle image.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u16>,
    pub t: f64,
}

impl ParticleImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u16>, t: f64) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::Dimension(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
            t,
        })
    }

    pub fn blank(width: usize, height: usize, t: f64) -> Self {
        Self {
            width,
            height,
            pixels: vec![0; width * height],
            t,
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u16 {
        self.pixels[y * self.width + x]
    }
}

/// Two exposures separated by the laser interval.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePair {
    pub a: ParticleImage,
    pub b: ParticleImage,
    pub dt_pair: f64,
}

impl ImagePair {
    pub fn new(a: ParticleImage, b: ParticleImage, dt_pair: f64) -> Result<Self> {
        if a.width != b.width || a.height != b.height {
            return Err(Error::Dimension("image pair frames differ in size".into()));
        }
        if !(dt_pair > 0.0) {
            return Err(Error::InvalidArgument("dt_pair must be positive".into()));
        }
        Ok(Self { a, b, dt_pair })
    }

    /// The same pair with the frames exchanged.
    pub fn swapped(&self) -> ImagePair {
        ImagePair {
            a: self.b.clone(),
            b: self.a.clone(),
            dt_pair: self.dt_pair,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct PivConfig {
    /// Interrogation window edge, pixels (power of two).
    pub window: usize,
    /// Fractional window overlap in `[0, 1)`.
    pub overlap: f64,
    /// Magnification, pixels per length unit.
    pub px_per_length: f64,
    /// Largest accepted displacement magnitude per axis, pixels.
    pub search: usize,
}

impl Default for PivConfig {
    fn default() -> Self {
        Self {
            window: 32,
            overlap: 0.75,
            px_per_length: 5000.0,
            search: 16,
        }
    }
}

impl PivConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.window.is_power_of_two() || self.window < 4 {
            return Err(Error::InvalidArgument("window must be a power of two >= 4".into()));
        }
        if !(0.0..1.0).contains(&self.overlap) {
            return Err(Error::InvalidArgument("overlap must lie in [0, 1)".into()));
        }
        if !(self.px_per_length > 0.0) {
            return Err(Error::InvalidArgument("px_per_length must be positive".into()));
        }
        if self.search == 0 || self.search > self.window / 2 {
            return Err(Error::InvalidArgument("search must lie in 1..=window/2".into()));
        }
        Ok(())
    }

    /// Window stride in pixels, `window * (1 - overlap)`.
    pub fn stride(&self) -> usize {
        ((self.window as f64 * (1.0 - self.overlap)).round() as usize).max(1)
    }
}

/// Window tiling of an image: grid point `(ix, iy)` owns the window whose
/// top-left pixel is `(ix * stride, iy * stride)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PivLayout {
    pub cfg: PivConfig,
    pub width: usize,
    pub height: usize,
    grid: Arc<Grid>,
}

impl PivLayout {
    pub fn new(width: usize, height: usize, cfg: PivConfig) -> Result<Self> {
        Self::with_mask(width, height, cfg, None)
    }

    pub fn with_mask(width: usize, height: usize, cfg: PivConfig, mask: Option<Vec<bool>>) -> Result<Self> {
        cfg.validate()?;
        if width < cfg.window || height < cfg.window {
            return Err(Error::InvalidArgument("image smaller than one window".into()));
        }
        let stride = cfg.stride();
        let nx = (width - cfg.window) / stride + 1;
        let ny = (height - cfg.window) / stride + 1;
        let d = stride as f64 / cfg.px_per_length;
        let grid = match mask {
            Some(m) => Grid::with_mask(nx, ny, d, d, m)?,
            None => Grid::new(nx, ny, d, d)?,
        };
        Ok(Self {
            cfg,
            width,
            height,
            grid: Arc::new(grid),
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn window_origin(&self, grid_index: usize) -> (usize, usize) {
        let (ix, iy) = self.grid.coords(grid_index);
        let s = self.cfg.stride();
        (ix * s, iy * s)
    }

    /// Window center in continuous pixel coordinates.
    pub fn center_px(&self, grid_index: usize) -> (f64, f64) {
        let (x0, y0) = self.window_origin(grid_index);
        let h = self.cfg.window as f64 / 2.0;
        (x0 as f64 + h, y0 as f64 + h)
    }

    /// Window center in physical units.
    pub fn position(&self, grid_index: usize) -> (f64, f64) {
        let (x, y) = self.center_px(grid_index);
        (x / self.cfg.px_per_length, y / self.cfg.px_per_length)
    }

    /// Physical position of grid point (0, 0).
    pub fn origin(&self) -> (f64, f64) {
        self.position(0)
    }

    /// Pixel displacement to velocity for the pair interval.
    pub fn px_to_velocity(&self, d_px: f64, dt_pair: f64) -> f64 {
        d_px / self.cfg.px_per_length / dt_pair
    }
}

/// Sub-pixel displacement of one window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowVector {
    pub dx: f64,
    pub dy: f64,
    pub valid: bool,
    /// Gaussian fit failed and the parabolic fallback was used.
    pub fallback: bool,
}

impl WindowVector {
    const INVALID: WindowVector = WindowVector {
        dx: 0.0,
        dy: 0.0,
        valid: false,
        fallback: false,
    };
}

// Four partial sums break the add dependency chain.
fn sum(xs: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let mut chunks = xs.chunks_exact(4);
    for c in &mut chunks {
        for i in 0..4 {
            acc[i] += c[i];
        }
    }
    (acc[0] + acc[2]) + (acc[1] + acc[3]) + chunks.remainder().iter().sum::<f64>()
}

/// FFT correlation engine for `n x n` windows. Reusable without allocation.
pub struct Correlator {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    buf: Vec<Complex64>,
    tmp: Vec<Complex64>,
    held: Vec<Complex64>,
    scratch: Vec<Complex64>,
    map: Vec<f64>,
    map2: Vec<f64>,
    wa: Vec<f64>,
    wb: Vec<f64>,
}

impl std::fmt::Debug for Correlator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Correlator").field("n", &self.n).finish()
    }
}

impl Correlator {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let scratch_len = fwd
            .get_inplace_scratch_len()
            .max(inv.get_inplace_scratch_len());
        let zeros = vec![Complex64::default(); n * n];
        Self {
            n,
            fwd,
            inv,
            buf: zeros.clone(),
            tmp: zeros.clone(),
            held: zeros,
            scratch: vec![Complex64::default(); scratch_len],
            map: vec![0.0; n * n],
            map2: vec![0.0; n * n],
            wa: vec![0.0; n * n],
            wb: vec![0.0; n * n],
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    /// Circular cross-correlation `R(d) = sum_x a(x) b(x + d)` of the
    /// mean-removed blocks (row-major, `n * n`). The returned map is row-major
    /// with displacement `(dx, dy)` at `[(dy + n/2) * n + dx + n/2]`.
    /// Returns `None` for a blank (zero-variance) block.
    pub fn correlate(&mut self, a: &[f64], b: &[f64]) -> Option<&[f64]> {
        if !self.cross_spectrum(a, b) {
            return None;
        }
        std::mem::swap(&mut self.buf, &mut self.tmp);
        self.fft2(false);
        unpack(&self.buf, &mut self.map, self.n, |z| z.re);
        Some(&self.map)
    }

    /// Sub-pixel displacements of the windows at `origins` (top-left pixels)
    /// in `pair`, frame b relative to frame a. Windows are processed two at a
    /// time: both correlation maps are real, so one inverse transform of
    /// `P1 + i P2` yields them as its real and imaginary parts.
    pub fn displacements(&mut self, pair: &ImagePair, origins: &[(usize, usize)], search: usize, out: &mut [WindowVector]) {
        assert_eq!(origins.len(), out.len());
        let n = self.n;
        let mut pending: Option<usize> = None;
        for (j, &origin) in origins.iter().enumerate() {
            self.extract(pair, origin);
            let (wa, wb) = (std::mem::take(&mut self.wa), std::mem::take(&mut self.wb));
            let ok = self.cross_spectrum(&wa, &wb);
            (self.wa, self.wb) = (wa, wb);
            if !ok {
                out[j] = WindowVector::INVALID;
                continue;
            }
            match pending.take() {
                None => {
                    std::mem::swap(&mut self.held, &mut self.tmp);
                    pending = Some(j);
                }
                Some(i) => {
                    for ((o, &p), &q) in self.buf.iter_mut().zip(&self.held).zip(&self.tmp) {
                        *o = Complex64::new(p.re - q.im, p.im + q.re);
                    }
                    self.fft2(false);
                    unpack(&self.buf, &mut self.map, n, |z| z.re);
                    unpack(&self.buf, &mut self.map2, n, |z| z.im);
                    out[i] = locate_peak(&self.map, n, search);
                    out[j] = locate_peak(&self.map2, n, search);
                }
            }
        }
        if let Some(i) = pending {
            std::mem::swap(&mut self.buf, &mut self.held);
            self.fft2(false);
            unpack(&self.buf, &mut self.map, n, |z| z.re);
            out[i] = locate_peak(&self.map, n, search);
        }
    }

    /// Displacement of the single window at `origin`.
    pub fn window_displacement(&mut self, pair: &ImagePair, origin: (usize, usize), search: usize) -> WindowVector {
        let mut out = [WindowVector::INVALID];
        self.displacements(pair, &[origin], search, &mut out);
        out[0]
    }

    fn extract(&mut self, pair: &ImagePair, (x0, y0): (usize, usize)) {
        let n = self.n;
        let w = pair.a.width;
        for y in 0..n {
            let row = (y0 + y) * w + x0;
            let (ra, rb) = (&pair.a.pixels[row..row + n], &pair.b.pixels[row..row + n]);
            let dst = y * n..(y + 1) * n;
            for (d, &p) in self.wa[dst.clone()].iter_mut().zip(ra) {
                *d = p as f64;
            }
            for (d, &p) in self.wb[dst].iter_mut().zip(rb) {
                *d = p as f64;
            }
        }
    }

    // Spectrum of the correlation of the mean-removed blocks into `tmp`
    // (transposed layout, scaled by 4). False for a constant block.
    fn cross_spectrum(&mut self, a: &[f64], b: &[f64]) -> bool {
        let n = self.n;
        let nn = n * n;
        assert_eq!(a.len(), nn);
        assert_eq!(b.len(), nn);
        if a.iter().all(|&v| v == a[0]) || b.iter().all(|&v| v == b[0]) {
            return false;
        }
        let ma = sum(a) / nn as f64;
        let mb = sum(b) / nn as f64;
        for ((o, &x), &y) in self.buf.iter_mut().zip(a).zip(b) {
            // pack both real blocks into one complex transform
            *o = Complex64::new(x - ma, y - mb);
        }
        self.fft2(true);
        // With Z = A + iB and M = conj(Z(-k)): A = (Z + M)/2, B = (Z - M)/(2i).
        // 4 conj(A) B expands to the real form below.
        // The spectrum layout is transposed, and -k is symmetric under it.
        let mask = n - 1;
        for r in 0..n {
            let nr = ((n - r) & mask) * n;
            let row = &self.buf[r * n..(r + 1) * n];
            let neg = &self.buf[nr..nr + n];
            let out = &mut self.tmp[r * n..(r + 1) * n];
            let cross = |z: Complex64, w: Complex64| {
                let (sr, si) = (z.re + w.re, z.im - w.im);
                let (dr, di) = (z.re - w.re, z.im + w.im);
                Complex64::new(sr * di - si * dr, -(sr * dr + si * di))
            };
            out[0] = cross(row[0], neg[0]);
            for ((o, &z), &w) in out[1..].iter_mut().zip(&row[1..]).zip(neg[1..].iter().rev()) {
                *o = cross(z, w);
            }
        }
        true
    }

    // Row transforms, transpose, row transforms. Applying it twice restores
    // the original layout.
    fn fft2(&mut self, forward: bool) {
        let n = self.n;
        let plan = if forward { &self.fwd } else { &self.inv };
        plan.process_with_scratch(&mut self.buf, &mut self.scratch);
        transpose::transpose(&self.buf, &mut self.tmp, n, n);
        std::mem::swap(&mut self.buf, &mut self.tmp);
        plan.process_with_scratch(&mut self.buf, &mut self.scratch);
    }
}

// Max with independent lanes; NaN entries are ignored.
fn row_max(xs: &[f64]) -> f64 {
    let mut acc = [f64::NEG_INFINITY; 4];
    let mut chunks = xs.chunks_exact(4);
    for c in &mut chunks {
        for i in 0..4 {
            acc[i] = if c[i] > acc[i] { c[i] } else { acc[i] };
        }
    }
    let mut m = acc.iter().fold(f64::NEG_INFINITY, |m, &v| if v > m { v } else { m });
    for &v in chunks.remainder() {
        if v > m {
            m = v;
        }
    }
    m
}

// Centers the zero lag and undoes the scaling of the spectrum.
fn unpack(src: &[Complex64], map: &mut [f64], n: usize, part: impl Fn(&Complex64) -> f64) {
    let h = n / 2;
    let norm = 0.25 / (n * n) as f64;
    for y in 0..n {
        let s = &src[y * n..(y + 1) * n];
        let my = (y + h) & (n - 1);
        let (lo, hi) = map[my * n..(my + 1) * n].split_at_mut(h);
        for (d, z) in hi.iter_mut().zip(&s[..h]) {
            *d = part(z) * norm;
        }
        for (d, z) in lo.iter_mut().zip(&s[h..]) {
            *d = part(z) * norm;
        }
    }
}

/// Integer argmax within the search radius followed by the sub-pixel fit.
/// Peaks on the map border or outside the search radius are invalid.
///
/// The fit samples are divided by the window overlap fraction `1 - |d|/n`,
/// which removes the bias toward zero displacement of a flat window.
pub fn locate_peak(map: &[f64], n: usize, search: usize) -> WindowVector {
    let h = n as isize / 2;
    let s = search as isize;
    let lo = (h - s).max(0) as usize;
    let hi = ((h + s) as usize).min(n - 1);
    // First row holding the largest value, then its first occurrence there:
    // the row-major first maximum.
    let mut best = f64::NEG_INFINITY;
    let mut best_row = lo;
    for my in lo..=hi {
        let m = row_max(&map[my * n + lo..=my * n + hi]);
        if m > best {
            best = m;
            best_row = my;
        }
    }
    let row = &map[best_row * n + lo..=best_row * n + hi];
    let best_ix = (lo + row.iter().position(|&v| v == best).unwrap_or(0), best_row);
    let (mx, my) = best_ix;
    let dx0 = mx as isize - h;
    let dy0 = my as isize - h;
    let on_edge = mx == 0 || my == 0 || mx == n - 1 || my == n - 1 || dx0.abs() == s || dy0.abs() == s;
    if !best.is_finite() || on_edge {
        return WindowVector {
            dx: dx0 as f64,
            dy: dy0 as f64,
            valid: false,
            fallback: false,
        };
    }
    let overlap = |d: isize| 1.0 - d.unsigned_abs() as f64 / n as f64;
    let fit = |m: f64, m0: f64, p: f64, d: isize| {
        subpixel_offset(m / overlap(d - 1), m0 / overlap(d), p / overlap(d + 1))
    };
    let (ddx, fx) = fit(map[my * n + mx - 1], best, map[my * n + mx + 1], dx0);
    let (ddy, fy) = fit(map[(my - 1) * n + mx], best, map[(my + 1) * n + mx], dy0);
    WindowVector {
        dx: dx0 as f64 + ddx,
        dy: dy0 as f64 + ddy,
        valid: true,
        fallback: fx || fy,
    }
}

/// Three-point Gaussian peak offset; falls back to a parabola (flagged) when
/// any sample is non-positive.
pub fn subpixel_offset(m_minus: f64, m0: f64, m_plus: f64) -> (f64, bool) {
    if m_minus > 0.0 && m0 > 0.0 && m_plus > 0.0 {
        let (lm, l0, lp) = (m_minus.ln(), m0.ln(), m_plus.ln());
        let den = 2.0 * lm - 4.0 * l0 + 2.0 * lp;
        if den != 0.0 {
            return ((lm - lp) / den, false);
        }
        return (0.0, false);
    }
    let den = 2.0 * m_minus - 4.0 * m0 + 2.0 * m_plus;
    if den == 0.0 {
        return (0.0, true);
    }
    (((m_minus - m_plus) / den).clamp(-0.5, 0.5), true)
}

/// Per-call bookkeeping of the sparse path.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SparseStats {
    pub invalid: usize,
    pub fallback: usize,
}

/// Processes only the windows of the selected points. Invalid vectors repeat
/// the last valid value of their channel.
#[derive(Debug)]
pub struct SparsePiv {
    layout: PivLayout,
    origins: Vec<(usize, usize)>,
    last: Vec<f64>,
    vectors: Vec<WindowVector>,
    correlator: Correlator,
}

impl SparsePiv {
    pub fn new(layout: PivLayout, points: &[usize]) -> Result<Self> {
        let grid = layout.grid().clone();
        let mut origins = Vec::with_capacity(points.len());
        for &g in points {
            if grid.active_index(g).is_none() {
                return Err(Error::BadIndex(g));
            }
            origins.push(layout.window_origin(g));
        }
        let n = layout.cfg.window;
        Ok(Self {
            correlator: Correlator::new(n),
            last: vec![0.0; 2 * points.len()],
            vectors: vec![WindowVector::INVALID; points.len()],
            origins,
            layout,
        })
    }

    pub fn p(&self) -> usize {
        self.origins.len()
    }

    pub fn layout(&self) -> &PivLayout {
        &self.layout
    }

    pub fn reset(&mut self) {
        self.last.fill(0.0);
    }

    /// Writes `[u_1, v_1, u_2, v_2, ...]` (velocity units) into `out`.
    pub fn process(&mut self, pair: &ImagePair, out: &mut [f64]) -> Result<SparseStats> {
        if out.len() != 2 * self.origins.len() {
            return Err(Error::Dimension("output length must be 2p".into()));
        }
        if pair.a.width != self.layout.width || pair.a.height != self.layout.height {
            return Err(Error::Dimension("image size differs from layout".into()));
        }
        let mut stats = SparseStats::default();
        let search = self.layout.cfg.search;
        self.correlator.displacements(pair, &self.origins, search, &mut self.vectors);
        for (j, wv) in self.vectors.iter().enumerate() {
            if wv.valid {
                self.last[2 * j] = self.layout.px_to_velocity(wv.dx, pair.dt_pair);
                self.last[2 * j + 1] = self.layout.px_to_velocity(wv.dy, pair.dt_pair);
                if wv.fallback {
                    stats.fallback += 1;
                }
            } else {
                stats.invalid += 1;
            }
            out[2 * j] = self.last[2 * j];
            out[2 * j + 1] = self.last[2 * j + 1];
        }
        if stats.invalid == self.origins.len() && !self.origins.is_empty() {
            return Err(Error::AllVectorsInvalid);
        }
        Ok(stats)
    }
}

/// One-shot sparse PIV of `points` (grid indices) in selection order.
pub fn sparse_piv(pair: &ImagePair, layout: &PivLayout, points: &[usize]) -> Result<Vec<f64>> {
    let mut s = SparsePiv::new(layout.clone(), points)?;
    let mut y = vec![0.0; 2 * points.len()];
    s.process(pair, &mut y)?;
    Ok(y)
}

/// Full-field result with the validity of each active point.
#[derive(Debug, Clone, PartialEq)]
pub struct FullPivResult {
    pub field: VelocityField,
    pub valid: Vec<bool>,
}

/// PIV at every active grid point. Invalid vectors are replaced by the mean of
/// their valid 8-neighbors (zero when none).
pub fn full_piv(pair: &ImagePair, layout: &PivLayout) -> Result<FullPivResult> {
    let grid = layout.grid().clone();
    let n_active = grid.n_active();
    let mut corr = Correlator::new(layout.cfg.window);
    let mut u = vec![0.0; n_active];
    let mut v = vec![0.0; n_active];
    let mut valid = vec![false; n_active];
    let origins: Vec<_> = grid.active_indices().iter().map(|&g| layout.window_origin(g)).collect();
    let mut vectors = vec![WindowVector::INVALID; n_active];
    corr.displacements(pair, &origins, layout.cfg.search, &mut vectors);
    for (a, wv) in vectors.iter().enumerate() {
        if wv.valid {
            u[a] = layout.px_to_velocity(wv.dx, pair.dt_pair);
            v[a] = layout.px_to_velocity(wv.dy, pair.dt_pair);
            valid[a] = true;
        }
    }
    if n_active > 0 && !valid.iter().any(|&b| b) {
        return Err(Error::AllVectorsInvalid);
    }
    let (nx, ny) = (grid.nx() as isize, grid.ny() as isize);
    let mut fill = Vec::new();
    for (a, &g) in grid.active_indices().iter().enumerate() {
        if valid[a] {
            continue;
        }
        let (ix, iy) = grid.coords(g);
        let (mut su, mut sv, mut cnt) = (0.0, 0.0, 0usize);
        for oy in -1..=1isize {
            for ox in -1..=1isize {
                let (jx, jy) = (ix as isize + ox, iy as isize + oy);
                if (ox, oy) == (0, 0) || jx < 0 || jy < 0 || jx >= nx || jy >= ny {
                    continue;
                }
                if let Some(b) = grid.active_index((jy * nx + jx) as usize) {
                    if valid[b] {
                        su += u[b];
                        sv += v[b];
                        cnt += 1;
                    }
                }
            }
        }
        if cnt > 0 {
            fill.push((a, su / cnt as f64, sv / cnt as f64));
        }
    }
    for (a, fu, fv) in fill {
        u[a] = fu;
        v[a] = fv;
    }
    Ok(FullPivResult {
        field: VelocityField::new(grid, u, v)?,
        valid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_block(n: usize, seed: u64) -> Vec<f64> {
        let mut s = seed;
        (0..n * n)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (s >> 33) as f64 / (1u64 << 31) as f64
            })
            .collect()
    }

    fn shift(block: &[f64], n: usize, dx: isize, dy: isize) -> Vec<f64> {
        // out(x) = in(x - d)
        let mut out = vec![0.0; n * n];
        let ni = n as isize;
        for y in 0..ni {
            for x in 0..ni {
                let sx = (x - dx).rem_euclid(ni);
                let sy = (y - dy).rem_euclid(ni);
                out[(y * ni + x) as usize] = block[(sy * ni + sx) as usize];
            }
        }
        out
    }

    #[test]
    fn fft_map_matches_direct_sum() {
        let n = 8;
        let a = random_block(n, 5);
        let b = random_block(n, 6);
        let mut c = Correlator::new(n);
        let map = c.correlate(&a, &b).unwrap().to_vec();
        let ma = a.iter().sum::<f64>() / 64.0;
        let mb = b.iter().sum::<f64>() / 64.0;
        let h = n as isize / 2;
        for dy in -h..h {
            for dx in -h..h {
                let mut acc = 0.0;
                for y in 0..n as isize {
                    for x in 0..n as isize {
                        let xb = (x + dx).rem_euclid(n as isize);
                        let yb = (y + dy).rem_euclid(n as isize);
                        acc += (a[(y * 8 + x) as usize] - ma) * (b[(yb * 8 + xb) as usize] - mb);
                    }
                }
                let got = map[((dy + h) * 8 + dx + h) as usize];
                assert!((got - acc).abs() < 1e-10, "d = ({dx}, {dy}): {got} vs {acc}");
            }
        }
    }

    #[test]
    fn autocorrelation_peaks_at_zero() {
        let a = random_block(16, 3);
        let mut c = Correlator::new(16);
        let map = c.correlate(&a, &a).unwrap().to_vec();
        let (i, _) = map.iter().enumerate().fold((0, f64::MIN), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
        assert_eq!(i, 8 * 16 + 8);
    }

    #[test]
    fn circular_shift_recovered() {
        let a = random_block(16, 11);
        let b = shift(&a, 16, 3, -2);
        let mut c = Correlator::new(16);
        c.correlate(&a, &b).unwrap();
        let wv = locate_peak(&c.map, 16, 8);
        assert!(wv.valid);
        assert!((wv.dx - 3.0).abs() < 0.5 && (wv.dy + 2.0).abs() < 0.5);
        assert_eq!(wv.dx.round(), 3.0);
        assert_eq!(wv.dy.round(), -2.0);
    }

    #[test]
    fn blank_window_is_invalid() {
        let mut c = Correlator::new(8);
        assert!(c.correlate(&[5.0; 64], &random_block(8, 1)).is_none());
    }

    #[test]
    fn symmetric_peak_has_zero_offset() {
        assert_eq!(subpixel_offset(0.5, 1.0, 0.5), (0.0, false));
        let (d, fb) = subpixel_offset(-0.1, 1.0, 0.3);
        assert!(fb);
        assert!(d > 0.0);
    }

    #[test]
    fn gaussian_center_recovered() {
        let g = |x: f64| (-(x - 0.3).powi(2) / (2.0 * 0.8f64.powi(2))).exp();
        let (d, fb) = subpixel_offset(g(-1.0), g(0.0), g(1.0));
        assert!(!fb);
        assert!((d - 0.3).abs() < 1e-3);
    }

    #[test]
    fn layout_tiling_counts() {
        let layout = PivLayout::new(512, 256, PivConfig::default()).unwrap();
        assert_eq!(layout.cfg.stride(), 8);
        assert_eq!(layout.grid().nx(), (512 - 32) / 8 + 1);
        assert_eq!(layout.grid().ny(), (256 - 32) / 8 + 1);
        assert_eq!(layout.center_px(0), (16.0, 16.0));
    }

    #[test]
    fn config_validation() {
        let bad = PivConfig {
            window: 24,
            ..PivConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = PivConfig {
            overlap: 1.0,
            ..PivConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
