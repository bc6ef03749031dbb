use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{PathSeed, Purpose, TimeGrid};
use crate::error::{Error, Result};

/// How the OU recursion is started at the left end of the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OuInit {
    /// `z(t_start) ~ N(0, σ²/2)`.
    #[default]
    Stationary,
    /// `z(t_start) = 0`; relies on a long history for stationarity.
    Zero,
}

/// Brownian samples plus the per-cell randomness needed downstream.
#[derive(Debug, Clone)]
pub struct BrownianPath {
    grid: TimeGrid,
    seed: PathSeed,
    w: Vec<f64>,
    // unit-strength OU innovation of each cell, jointly Gaussian with dw
    innov: Vec<f64>,
    // uniforms for the bridge maxima of w(s)+s and -w(s)+s in each cell
    bridge_up: Vec<f64>,
    bridge_dn: Vec<f64>,
    init_std: f64,
}

impl BrownianPath {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn seed(&self) -> PathSeed {
        self.seed
    }
}

fn uniform_open0(rng: &mut ChaCha20Rng) -> f64 {
    1.0 - rng.random::<f64>()
}

/// Samples a Brownian path on `grid`, pinned at `w(0) = 0`.
///
/// Cells right of the origin are drawn outward from a forward stream, cells
/// left of it outward from a backward stream, so a longer window only appends
/// samples.
pub fn sample_brownian(grid: &TimeGrid, seed: PathSeed) -> Result<BrownianPath> {
    let i0 = grid.zero_index().ok_or_else(|| {
        Error::config(format!(
            "grid [{}, {}] must contain t = 0",
            grid.t_start(),
            grid.t_end()
        ))
    })?;
    let n = grid.n_steps();
    let dt = grid.dt();
    let sq = dt.sqrt();
    let em = (-dt).exp();
    let c = (1.0 - em) / sq;
    let var_i = (1.0 - em * em) / 2.0;
    let d = (var_i - c * c).max(0.0).sqrt();

    let mut dw = vec![0.0; n];
    let mut innov = vec![0.0; n];
    let mut bridge_up = vec![0.0; n];
    let mut bridge_dn = vec![0.0; n];

    let mut fill = |cells: &mut dyn Iterator<Item = usize>, cell_p: Purpose, bridge_p: Purpose| {
        let mut rng = seed.stream(cell_p);
        let mut brng = seed.stream(bridge_p);
        for i in cells {
            let x1: f64 = rng.sample(StandardNormal);
            let x2: f64 = rng.sample(StandardNormal);
            dw[i] = sq * x1;
            innov[i] = c * x1 + d * x2;
            bridge_up[i] = uniform_open0(&mut brng);
            bridge_dn[i] = uniform_open0(&mut brng);
        }
    };
    fill(&mut (i0..n), Purpose::ForwardCells, Purpose::ForwardBridge);
    fill(&mut (0..i0).rev(), Purpose::BackwardCells, Purpose::BackwardBridge);

    let mut w = vec![0.0; n + 1];
    for i in i0..n {
        w[i + 1] = w[i] + dw[i];
    }
    for i in (0..i0).rev() {
        w[i] = w[i + 1] - dw[i];
    }
    let init_std = seed.stream(Purpose::StationaryInit).sample(StandardNormal);
    Ok(BrownianPath {
        grid: *grid,
        seed,
        w,
        innov,
        bridge_up,
        bridge_dn,
        init_std,
    })
}

/// A Brownian path with the OU process it drives and its path functionals.
#[derive(Debug, Clone)]
pub struct NoisePath {
    bm: BrownianPath,
    sigma: f64,
    z: Vec<f64>,
    zint: Vec<f64>,
    k_tilde: f64,
    k_tilde_neg: f64,
    k_tilde_grid: f64,
    z0: f64,
}

/// Fills in `z` by the exact OU recursion `z(t+Δ) = e^{-Δ} z(t) + σ I_Δ`.
pub fn derive_ou(bm: BrownianPath, sigma: f64, init: OuInit) -> Result<NoisePath> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::domain(format!("sigma must be >= 0, got {sigma}")));
    }
    let em = (-bm.grid.dt()).exp();
    let mut z = Vec::with_capacity(bm.w.len());
    let z_start = match init {
        OuInit::Stationary => sigma * std::f64::consts::FRAC_1_SQRT_2 * bm.init_std,
        OuInit::Zero => 0.0,
    };
    z.push(z_start);
    for &i in &bm.innov {
        let last = *z.last().unwrap();
        z.push(em * last + sigma * i);
    }
    Ok(NoisePath::from_parts(bm, sigma, z))
}

fn bridge_max(a: f64, b: f64, dt: f64, u: f64) -> f64 {
    0.5 * (a + b + ((b - a) * (b - a) - 2.0 * dt * u.ln()).sqrt())
}

impl NoisePath {
    pub(crate) fn from_parts(bm: BrownianPath, sigma: f64, z: Vec<f64>) -> Self {
        let grid = bm.grid;
        let dt = grid.dt();
        let i0 = grid.zero_index().expect("noise grids contain the origin");
        let mut zint = vec![0.0; z.len()];
        for i in i0..grid.n_steps() {
            zint[i + 1] = zint[i] + 0.5 * dt * (z[i] + z[i + 1]);
        }
        for i in (0..i0).rev() {
            zint[i] = zint[i + 1] - 0.5 * dt * (z[i] + z[i + 1]);
        }

        let sup_bridge = |sign: f64, u: &[f64]| {
            (0..i0)
                .map(|i| {
                    let a = sign * bm.w[i] + grid.time(i);
                    let b = sign * bm.w[i + 1] + grid.time(i + 1);
                    bridge_max(a, b, dt, u[i])
                })
                .fold(0.0_f64, f64::max)
        };
        let k_tilde = sup_bridge(1.0, &bm.bridge_up);
        let k_tilde_neg = sup_bridge(-1.0, &bm.bridge_dn);
        let k_tilde_grid = (0..=i0)
            .map(|i| bm.w[i] + grid.time(i))
            .fold(0.0_f64, f64::max);

        // trapezoid of -σ ∫ e^s ω(s) ds over the stored history
        let f = |i: usize| grid.time(i).exp() * bm.w[i];
        let z0 = -sigma * dt * (0..i0).map(|i| 0.5 * (f(i) + f(i + 1))).sum::<f64>();

        Self {
            bm,
            sigma,
            z,
            zint,
            k_tilde,
            k_tilde_neg,
            k_tilde_grid,
            z0,
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.bm.grid
    }

    pub fn seed(&self) -> PathSeed {
        self.bm.seed
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn w(&self) -> &[f64] {
        &self.bm.w
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    /// Trapezoid values of `∫₀^{t_i} z`.
    pub fn z_integral(&self) -> &[f64] {
        &self.zint
    }

    /// Length of the stored history `[-tail_T, 0]`.
    pub fn tail_t(&self) -> f64 {
        -self.grid().t_start()
    }

    pub fn zero_index(&self) -> usize {
        self.grid().zero_index().expect("noise grids contain the origin")
    }

    /// Grid value of z at the origin, the one the dynamics see.
    pub fn z_origin(&self) -> f64 {
        self.z[self.zero_index()]
    }

    /// Quadrature value of `z(0)` from the Brownian history.
    pub fn z0(&self) -> f64 {
        self.z0
    }

    /// `K̃(ω) = sup_{s≤0} ω(s)+s`, continuous supremum of the sampled path.
    pub fn k_tilde(&self) -> f64 {
        self.k_tilde
    }

    /// `K̃(-ω)`.
    pub fn k_tilde_neg(&self) -> f64 {
        self.k_tilde_neg
    }

    /// Grid-only supremum of `ω(s)+s`; a lower bound for [`k_tilde`](Self::k_tilde).
    pub fn k_tilde_grid(&self) -> f64 {
        self.k_tilde_grid
    }

    /// `K(ω) = K̃(ω) + 1`.
    pub fn k(&self) -> f64 {
        self.k_tilde + 1.0
    }

    /// `K±(ω) = K(ω) + K(-ω)`.
    pub fn k_pm(&self) -> f64 {
        self.k_tilde + self.k_tilde_neg + 2.0
    }

    /// Linear interpolation of z at an arbitrary time inside the grid.
    pub fn z_at(&self, t: f64) -> f64 {
        interp(self.grid(), &self.z, t)
    }

    /// Linear interpolation of `∫₀ᵗ z`.
    pub fn z_integral_at(&self, t: f64) -> f64 {
        interp(self.grid(), &self.zint, t)
    }

    pub fn w_at(&self, t: f64) -> f64 {
        interp(self.grid(), &self.bm.w, t)
    }

    pub(crate) fn brownian(&self) -> &BrownianPath {
        &self.bm
    }
}

fn interp(grid: &TimeGrid, v: &[f64], t: f64) -> f64 {
    let x = (t - grid.t_start()) / grid.dt();
    let n = grid.n_steps();
    if x <= 0.0 {
        return v[0];
    }
    if x >= n as f64 {
        return v[n];
    }
    let i = (x.floor() as usize).min(n - 1);
    let f = x - i as f64;
    v[i] + f * (v[i + 1] - v[i])
}

/// Quadrature value of z(0) with its truncation bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZAtZero {
    pub value: f64,
    /// `σ e^{-T}(K̃+T+1)` for the dropped tail `(-∞, -T]`.
    pub truncation_bound: f64,
}

impl ZAtZero {
    pub fn within(&self, tol: f64) -> bool {
        self.truncation_bound <= tol
    }
}

pub fn z_at_zero(path: &NoisePath) -> ZAtZero {
    let tail = path.tail_t();
    let k = path.k_tilde().max(path.k_tilde_neg());
    ZAtZero {
        value: path.z0(),
        truncation_bound: path.sigma() * (-tail).exp() * (k + tail + 1.0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KFunctionals {
    pub k_tilde: f64,
    pub k_pm: f64,
    pub k2: f64,
}

/// `K̃`, `K±` and `K₂ = sup_{τ≤0} |1 - e^{ντ+σω(τ)}| / (σ e^{η|τ|})`.
pub fn compute_k_functionals(path: &NoisePath, nu: f64, eta: f64) -> Result<KFunctionals> {
    let sigma = path.sigma();
    if !(sigma > 0.0) {
        return Err(Error::domain("K2 divides by sigma, which is 0"));
    }
    let grid = path.grid();
    let k2 = (0..=path.zero_index())
        .map(|i| {
            let t = grid.time(i);
            (-(nu * t + sigma * path.w()[i]).exp_m1()).abs() / (sigma * (eta * t.abs()).exp())
        })
        .fold(0.0_f64, f64::max);
    Ok(KFunctionals {
        k_tilde: path.k_tilde(),
        k_pm: path.k_pm(),
        k2,
    })
}

/// Constant `C(η)` with `K₂ ≤ C e^{σK±}(1+K±)` whenever `|ν|+σ < η/2` and `|ν| ≤ σ`.
///
/// From `|1-e^x| ≤ |x|e^{|x|}` and `|ω(τ)| ≤ K± + |τ|`; the leftover
/// `sup_s 2s e^{-ηs/2}` equals `4/(eη)`.
pub fn k2_bound_constant(eta: f64) -> f64 {
    (4.0 / (std::f64::consts::E * eta)).max(1.0)
}

/// Path of `θ_{t_shift} ω` on the window `[-past, future]`.
pub fn shift_path(path: &NoisePath, t_shift: f64, past: f64, future: f64) -> Result<NoisePath> {
    let grid = path.grid();
    let lo = grid.index_of(t_shift - past).map_err(|_| {
        Error::range(format!(
            "shifted window starts at {} before the stored grid start {}",
            t_shift - past,
            grid.t_start()
        ))
    })?;
    let hi = grid.index_of(t_shift + future).map_err(|_| {
        Error::range(format!(
            "shifted window ends at {} after the stored grid end {}",
            t_shift + future,
            grid.t_end()
        ))
    })?;
    let s = grid.index_of(t_shift)?;
    let new_grid = TimeGrid::two_sided(past, future, grid.dt())?;
    let bm = &path.bm;
    let w0 = bm.w[s];
    let shifted = BrownianPath {
        grid: new_grid,
        seed: bm.seed,
        w: bm.w[lo..=hi].iter().map(|w| w - w0).collect(),
        innov: bm.innov[lo..hi].to_vec(),
        bridge_up: bm.bridge_up[lo..hi].to_vec(),
        bridge_dn: bm.bridge_dn[lo..hi].to_vec(),
        init_std: bm.init_std,
    };
    Ok(NoisePath::from_parts(
        shifted,
        path.sigma,
        path.z[lo..=hi].to_vec(),
    ))
}

impl BrownianPath {
    pub(crate) fn raw_parts(&self) -> [&[f64]; 4] {
        [&self.w, &self.innov, &self.bridge_up, &self.bridge_dn]
    }

    pub(crate) fn init_std(&self) -> f64 {
        self.init_std
    }

    pub(crate) fn from_raw(
        grid: TimeGrid,
        seed: PathSeed,
        w: Vec<f64>,
        innov: Vec<f64>,
        bridge_up: Vec<f64>,
        bridge_dn: Vec<f64>,
        init_std: f64,
    ) -> Result<Self> {
        let n = grid.n_steps();
        if w.len() != n + 1 || innov.len() != n || bridge_up.len() != n || bridge_dn.len() != n {
            return Err(Error::Format("array lengths do not match the grid".into()));
        }
        if grid.zero_index().is_none() {
            return Err(Error::Format("grid does not contain t = 0".into()));
        }
        Ok(Self {
            grid,
            seed,
            w,
            innov,
            bridge_up,
            bridge_dn,
            init_std,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(past: f64, future: f64, dt: f64, sigma: f64, idx: u64) -> NoisePath {
        let g = TimeGrid::two_sided(past, future, dt).unwrap();
        derive_ou(sample_brownian(&g, PathSeed::new(11, idx)).unwrap(), sigma, OuInit::Stationary)
            .unwrap()
    }

    #[test]
    fn pinned_and_reproducible() {
        let g = TimeGrid::new(0.0, 1.0, 0.5).unwrap();
        let a = sample_brownian(&g, PathSeed::new(1, 0)).unwrap();
        let b = sample_brownian(&g, PathSeed::new(1, 0)).unwrap();
        assert_eq!(a.w()[0], 0.0);
        assert_eq!(a.w(), b.w());
        let p = path(3.0, 2.0, 0.01, 1.0, 4);
        assert_eq!(p.w()[p.zero_index()], 0.0);
    }

    #[test]
    fn longer_history_keeps_the_overlap() {
        let a = path(2.0, 1.0, 0.01, 1.0, 9);
        let b = path(5.0, 3.0, 0.01, 1.0, 9);
        let (ia, ib) = (a.zero_index(), b.zero_index());
        for k in -200i64..=100 {
            let x = a.w()[(ia as i64 + k) as usize];
            let y = b.w()[(ib as i64 + k) as usize];
            assert_eq!(x, y);
        }
    }

    #[test]
    fn brownian_variance_at_one() {
        let g = TimeGrid::new(0.0, 1.0, 0.05).unwrap();
        let n = 10_000;
        let vals: Vec<f64> = (0..n)
            .map(|i| *sample_brownian(&g, PathSeed::new(2, i)).unwrap().w().last().unwrap())
            .collect();
        let mean = vals.iter().sum::<f64>() / n as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        // standard error of the sample variance of N(0,1) is sqrt(2/n)
        assert!((var - 1.0).abs() < 3.0 * (2.0 / n as f64).sqrt(), "var = {var}");
    }

    #[test]
    fn noiseless_ou_is_pure_decay() {
        let g = TimeGrid::two_sided(1.0, 1.0, 0.1).unwrap();
        let bm = sample_brownian(&g, PathSeed::new(3, 0)).unwrap();
        let p = derive_ou(bm.clone(), 0.0, OuInit::Zero).unwrap();
        assert!(p.z().iter().all(|&z| z == 0.0));
        let p = derive_ou(bm, 0.0, OuInit::Stationary).unwrap();
        assert_eq!(p.z()[0], 0.0);
    }

    #[test]
    fn stationary_variance() {
        let p = path(0.0, 4000.0, 0.01, 1.0, 5);
        let z = p.z();
        let n = z.len() as f64;
        let mean = z.iter().sum::<f64>() / n;
        let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        // correlation time 1: roughly 4000/2 effective samples
        let se = 0.5 * (2.0 / 2000.0_f64).sqrt();
        assert!((var - 0.5).abs() < 3.0 * se, "var = {var}");
    }

    #[test]
    fn ou_integral_identity() {
        let dt = 0.01;
        let p = path(5.0, 5.0, dt, 0.7, 6);
        let i0 = p.zero_index();
        let worst = (i0..p.z().len())
            .map(|i| {
                (p.z()[i] - p.z()[i0] + p.z_integral()[i] - p.sigma() * p.w()[i]).abs()
            })
            .fold(0.0, f64::max);
        // residual is a sum of per-step O(dt^2)-variance errors; generous envelope
        assert!(worst < 5.0 * dt, "worst = {worst}");
    }

    #[test]
    fn z_quadrature_matches_path_value() {
        let dt = 0.005;
        let sigma = 0.8;
        for idx in 0..20 {
            let p = path(50.0, 0.0, dt, sigma, idx);
            let diff = (p.z0() - p.z_origin()).abs();
            assert!(diff < 10.0 * sigma * dt, "diff {diff}");
        }
    }

    #[test]
    fn z_at_zero_oracles() {
        // ω ≡ 0
        let g = TimeGrid::two_sided(50.0, 0.0, 0.01).unwrap();
        let n = g.n_steps();
        let zeros = BrownianPath::from_raw(
            g,
            PathSeed::new(0, 0),
            vec![0.0; n + 1],
            vec![0.0; n],
            vec![0.5; n],
            vec![0.5; n],
            0.0,
        )
        .unwrap();
        assert_eq!(derive_ou(zeros, 1.0, OuInit::Zero).unwrap().z0(), 0.0);

        // ω(s) = s: -σ ∫ e^s s ds = σ
        let w: Vec<f64> = g.times().collect();
        let lin = BrownianPath::from_raw(
            g,
            PathSeed::new(0, 0),
            w,
            vec![0.0; n],
            vec![0.5; n],
            vec![0.5; n],
            0.0,
        )
        .unwrap();
        let p = derive_ou(lin, 2.0, OuInit::Zero).unwrap();
        let z = z_at_zero(&p);
        assert!((z.value - 2.0).abs() < 1e-4, "{}", z.value);
        assert!(z.within(1e-12));
    }

    #[test]
    fn k_functionals_basic() {
        let g = TimeGrid::two_sided(10.0, 0.0, 0.01).unwrap();
        let n = g.n_steps();
        let bm = BrownianPath::from_raw(
            g,
            PathSeed::new(0, 0),
            vec![0.0; n + 1],
            vec![0.0; n],
            vec![1.0; n],
            vec![1.0; n],
            0.0,
        )
        .unwrap();
        let p = derive_ou(bm, 1.0, OuInit::Zero).unwrap();
        assert!(p.k_tilde().abs() < 1e-15);
        assert!((p.k_pm() - 2.0).abs() < 1e-15);
        assert!(compute_k_functionals(&derive_ou(p.brownian().clone(), 0.0, OuInit::Zero).unwrap(), 0.0, 1.0).is_err());
    }

    #[test]
    fn pathwise_bounds() {
        for idx in 0..50 {
            let p = path(50.0, 0.0, 0.01, 0.3, idx);
            assert!(p.k_tilde() >= p.k_tilde_grid());
            assert!(p.k_tilde_grid() >= 0.0);
            let z = z_at_zero(&p);
            assert!(z.value <= p.sigma() * (p.k_tilde_neg() + 1.0));
            let eta = 1.0;
            let k = compute_k_functionals(&p, 0.1, eta).unwrap();
            let bound = k2_bound_constant(eta) * (p.sigma() * k.k_pm).exp() * (1.0 + k.k_pm);
            assert!(k.k2 <= bound, "{} > {}", k.k2, bound);
        }
    }

    #[test]
    fn shift_is_consistent() {
        let p = path(10.0, 10.0, 0.01, 0.5, 7);
        let same = shift_path(&p, 0.0, 10.0, 10.0).unwrap();
        assert_eq!(same.w(), p.w());
        assert_eq!(same.z(), p.z());
        assert_eq!(same.k_tilde(), p.k_tilde());

        let s = shift_path(&p, 2.5, 5.0, 1.0).unwrap();
        assert_eq!(s.w()[s.zero_index()], 0.0);
        assert_eq!(s.z_origin(), p.z()[p.grid().index_of(2.5).unwrap()]);
        assert!(matches!(shift_path(&p, -8.0, 5.0, 1.0), Err(Error::Range(_))));
        assert!(matches!(shift_path(&p, 9.5, 1.0, 1.0), Err(Error::Range(_))));
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]

        #[test]
        fn bounds_hold_for_any_seed(idx in 0u64..1_000_000, sigma in 0.01f64..0.5) {
            let p = path(20.0, 0.0, 0.01, sigma, idx);
            proptest::prop_assert!(p.k_tilde() >= p.k_tilde_grid());
            proptest::prop_assert!(p.k_tilde_neg() >= 0.0);
            proptest::prop_assert!(p.z0() <= sigma * (p.k_tilde_neg() + 1.0));
            // K± splits into the forward and backward tails
            proptest::prop_assert!((p.k_pm() - (p.k() + p.k_tilde_neg() + 1.0)).abs() < 1e-12);
        }
    }
}
