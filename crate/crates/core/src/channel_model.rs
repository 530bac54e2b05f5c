//! Geometric channel generation for the double-IRS uplink and the derived
//! cascaded quantities.
//!
//! Link naming follows the uplink direction: `G1` is IRS 1 -> BS, `G2` is
//! IRS 2 -> BS, `D` is IRS 1 -> IRS 2, `u[k]` is user k -> IRS 1 and
//! `u_tilde[k]` is user k -> IRS 2. The user -> IRS 2 -> IRS 1 -> BS path and
//! the direct user -> BS links are not modelled.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::json;
use crate::linalg::{scale_columns, CMat, CVec, C64, ONE, ZERO};
use crate::random::{cn, cn_matrix, cn_vector, mix_seed, rng_from_seed};

/// Entries of `d_bar`, `u_1` and `u_tilde_1` below this modulus are treated as zero.
pub const SINGULARITY_THRESHOLD: f64 = 1e-12;

/// Tolerance used when checking unit-modulus reflection coefficients.
pub const MODULUS_TOL: f64 = 1e-9;

fn default_n() -> usize {
    25
}
fn default_m() -> usize {
    20
}
fn default_k() -> usize {
    1
}
fn default_tx_power() -> f64 {
    15.0
}
fn default_noise_power() -> f64 {
    -65.0
}
fn default_gamma0() -> f64 {
    -30.0
}
fn default_alpha_near() -> f64 {
    2.2
}
fn default_alpha_far() -> f64 {
    3.0
}
fn default_bs() -> [f64; 3] {
    [1.0, 0.0, 2.0]
}
fn default_irs1() -> [f64; 3] {
    [0.0, 49.5, 1.0]
}
fn default_irs2() -> [f64; 3] {
    [0.0, 0.5, 1.0]
}
fn default_user_center() -> [f64; 3] {
    [1.0, 50.0, 0.0]
}
fn default_spread() -> f64 {
    1.0
}
fn default_elements() -> usize {
    1
}

/// Scenario parameters. Powers are in dBm, `gamma0_db` in dB, positions in metres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// BS antennas.
    #[serde(default = "default_n")]
    pub n: usize,
    /// Subsurfaces of IRS 1 (near the users).
    #[serde(default = "default_m")]
    pub m1: usize,
    /// Subsurfaces of IRS 2 (near the BS).
    #[serde(default = "default_m")]
    pub m2: usize,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_tx_power")]
    pub tx_power_dbm: f64,
    #[serde(default = "default_noise_power")]
    pub noise_power_dbm: f64,
    /// Path loss at 1 m.
    #[serde(default = "default_gamma0")]
    pub gamma0_db: f64,
    /// Exponent for user cluster <-> IRS 1 and IRS 2 <-> BS.
    #[serde(default = "default_alpha_near")]
    pub alpha_near: f64,
    /// Exponent for every other link.
    #[serde(default = "default_alpha_far")]
    pub alpha_far: f64,
    #[serde(default = "default_bs")]
    pub bs_position: [f64; 3],
    #[serde(default = "default_irs1")]
    pub irs1_position: [f64; 3],
    #[serde(default = "default_irs2")]
    pub irs2_position: [f64; 3],
    #[serde(default = "default_user_center")]
    pub user_center: [f64; 3],
    /// Users are dropped uniformly in a horizontal disc of this radius.
    #[serde(default = "default_spread")]
    pub user_spread_radius: f64,
    /// Co-phased reflecting elements per subsurface. Each subsurface coefficient
    /// of a link terminating at an IRS is scaled by this count (coherent
    /// aggregation), so single-reflection cascades gain `E` in amplitude and
    /// double-reflection cascades `E^2`. `1` keeps pure subsurface-level statistics.
    #[serde(default = "default_elements")]
    pub elements_per_subsurface: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            n: default_n(),
            m1: default_m(),
            m2: default_m(),
            k: default_k(),
            tx_power_dbm: default_tx_power(),
            noise_power_dbm: default_noise_power(),
            gamma0_db: default_gamma0(),
            alpha_near: default_alpha_near(),
            alpha_far: default_alpha_far(),
            bs_position: default_bs(),
            irs1_position: default_irs1(),
            irs2_position: default_irs2(),
            user_center: default_user_center(),
            user_spread_radius: default_spread(),
            elements_per_subsurface: default_elements(),
            seed: 0,
        }
    }
}

impl SystemConfig {
    /// Small profile used by the test suites: N = 8, M1 = M2 = 8, K = 3.
    pub fn desk() -> Self {
        Self {
            n: 8,
            m1: 8,
            m2: 8,
            k: 3,
            ..Self::default()
        }
    }

    /// Noise power normalized by the user transmit power (linear).
    pub fn sigma2(&self) -> f64 {
        10f64.powf((self.noise_power_dbm - self.tx_power_dbm) / 10.0)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.n == 0 || self.m1 == 0 || self.m2 == 0 || self.k == 0 {
            return bad("n, m1, m2 and k must all be at least 1");
        }
        if self.elements_per_subsurface == 0 {
            return bad("elements_per_subsurface must be at least 1");
        }
        let scalars = [
            self.tx_power_dbm,
            self.noise_power_dbm,
            self.gamma0_db,
            self.alpha_near,
            self.alpha_far,
            self.user_spread_radius,
        ];
        if scalars.iter().any(|x| !x.is_finite()) {
            return bad("powers, path-loss parameters and spread radius must be finite");
        }
        if self.user_spread_radius < 0.0 {
            return bad("user_spread_radius must be non-negative");
        }
        let positions = [
            self.bs_position,
            self.irs1_position,
            self.irs2_position,
            self.user_center,
        ];
        if positions.iter().flatten().any(|x| !x.is_finite()) {
            return bad("positions must be finite");
        }
        let s2 = self.sigma2();
        if !(s2 > 0.0 && s2.is_finite()) {
            return bad("normalized noise power must be positive and finite");
        }
        Ok(())
    }
}

/// Linear gain `gamma0 / d^alpha` with `gamma0` given in dB.
pub fn path_loss(distance: f64, alpha: f64, gamma0_db: f64) -> Result<f64> {
    if !distance.is_finite() || distance <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "path loss needs a positive distance, got {distance}"
        )));
    }
    Ok(10f64.powf(gamma0_db / 10.0) / distance.powf(alpha))
}

pub fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Raw per-link channels for one fading draw.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChannelRealization {
    /// IRS 1 -> BS, `N x M1`.
    #[serde(with = "json::matrix")]
    pub g1: CMat,
    /// IRS 2 -> BS, `N x M2`.
    #[serde(with = "json::matrix")]
    pub g2: CMat,
    /// IRS 1 -> IRS 2, `M2 x M1`.
    #[serde(with = "json::matrix")]
    pub d: CMat,
    /// User k -> IRS 1, length `M1`.
    #[serde(with = "json::vector_list")]
    pub u: Vec<CVec>,
    /// User k -> IRS 2, length `M2`.
    #[serde(with = "json::vector_list")]
    pub u_tilde: Vec<CVec>,
    pub user_positions: Vec<[f64; 3]>,
}

/// Per-link variances used by [`gen_channels`], before element aggregation.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkGains {
    pub g1: f64,
    pub g2: f64,
    pub d: f64,
    pub u: Vec<f64>,
    pub u_tilde: Vec<f64>,
}

pub fn link_gains(config: &SystemConfig, user_positions: &[[f64; 3]]) -> Result<LinkGains> {
    let pl =
        |a: &[f64; 3], b: &[f64; 3], alpha: f64| path_loss(distance(a, b), alpha, config.gamma0_db);
    let c = config;
    Ok(LinkGains {
        g1: pl(&c.irs1_position, &c.bs_position, c.alpha_far)?,
        g2: pl(&c.irs2_position, &c.bs_position, c.alpha_near)?,
        d: pl(&c.irs1_position, &c.irs2_position, c.alpha_far)?,
        u: user_positions
            .iter()
            .map(|p| pl(p, &c.irs1_position, c.alpha_near))
            .collect::<Result<_>>()?,
        u_tilde: user_positions
            .iter()
            .map(|p| pl(p, &c.irs2_position, c.alpha_far))
            .collect::<Result<_>>()?,
    })
}

/// Draws one Rayleigh-faded realization. Deterministic in `(config, trial_seed)`.
pub fn gen_channels(config: &SystemConfig, trial_seed: u64) -> Result<ChannelRealization> {
    config.validate()?;
    let mut rng = rng_from_seed(mix_seed(&[config.seed, trial_seed]));

    let center = config.user_center;
    let user_positions: Vec<[f64; 3]> = (0..config.k)
        .map(|_| {
            let r = config.user_spread_radius * rng.random::<f64>().sqrt();
            let phi = 2.0 * std::f64::consts::PI * rng.random::<f64>();
            [
                center[0] + r * phi.cos(),
                center[1] + r * phi.sin(),
                center[2],
            ]
        })
        .collect();
    let gains = link_gains(config, &user_positions)?;

    let (n, m1, m2) = (config.n, config.m1, config.m2);
    let agg = config.elements_per_subsurface as f64;
    let g1 = cn_matrix(&mut rng, n, m1, gains.g1);
    let g2 = cn_matrix(&mut rng, n, m2, gains.g2);
    let d = cn_matrix(&mut rng, m2, m1, gains.d) * C64::new(agg, 0.0);
    let mut u = Vec::with_capacity(config.k);
    let mut u_tilde = Vec::with_capacity(config.k);
    for k in 0..config.k {
        u.push(cn_vector(&mut rng, m1, gains.u[k]) * C64::new(agg, 0.0));
        u_tilde.push(cn_vector(&mut rng, m2, gains.u_tilde[k]) * C64::new(agg, 0.0));
    }
    Ok(ChannelRealization {
        g1,
        g2,
        d,
        u,
        u_tilde,
        user_positions,
    })
}

/// IRS reflection coefficients for one symbol period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectionState {
    #[serde(with = "json::vector")]
    pub theta1: CVec,
    #[serde(with = "json::vector")]
    pub theta2: CVec,
}

impl ReflectionState {
    /// Each IRS must be either fully ON (every entry unit modulus) or fully OFF
    /// (every entry zero).
    pub fn new(theta1: CVec, theta2: CVec) -> Result<Self> {
        check_on_off(&theta1, "theta1")?;
        check_on_off(&theta2, "theta2")?;
        Ok(Self { theta1, theta2 })
    }

    pub fn all_on(m1: usize, m2: usize) -> Self {
        Self {
            theta1: CVec::from_element(m1, ONE),
            theta2: CVec::from_element(m2, ONE),
        }
    }
}

fn check_on_off(v: &CVec, what: &str) -> Result<()> {
    let all_zero = v.iter().all(|x| *x == ZERO);
    let all_unit = v.iter().all(|x| (x.norm() - 1.0).abs() <= MODULUS_TOL);
    if all_zero || all_unit {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "{what}: reflection entries must all have modulus 1 (ON) or all be 0 (OFF)"
        )))
    }
}

impl ChannelRealization {
    pub fn n(&self) -> usize {
        self.g1.nrows()
    }
    pub fn m1(&self) -> usize {
        self.g1.ncols()
    }
    pub fn m2(&self) -> usize {
        self.g2.ncols()
    }
    pub fn k(&self) -> usize {
        self.u.len()
    }

    /// `G2 Phi2 D Phi1 u_k + G2 Phi2 u~_k + G1 Phi1 u_k`, evaluated on the raw links.
    pub fn effective_channel(&self, k: usize, refl: &ReflectionState) -> Result<CVec> {
        self.check_user(k)?;
        check_reflection_dims(refl, self.m1(), self.m2())?;
        let t1u = refl.theta1.component_mul(&self.u[k]);
        let at_irs2 = (&self.d * &t1u + &self.u_tilde[k]).component_mul(&refl.theta2);
        Ok(&self.g2 * at_irs2 + &self.g1 * t1u)
    }

    fn check_user(&self, k: usize) -> Result<()> {
        if k >= self.k() {
            return Err(Error::InvalidArgument(format!(
                "user index {k} out of range (K = {})",
                self.k()
            )));
        }
        Ok(())
    }
}

fn check_reflection_dims(refl: &ReflectionState, m1: usize, m2: usize) -> Result<()> {
    if refl.theta1.len() != m1 || refl.theta2.len() != m2 {
        return Err(Error::DimensionMismatch(format!(
            "reflection lengths ({}, {}) do not match (M1, M2) = ({m1}, {m2})",
            refl.theta1.len(),
            refl.theta2.len()
        )));
    }
    Ok(())
}

/// Cascaded CSI of one user: `R` (`N x M1`), `R~` (`N x M2`) and `Q_m` (`N x M2`, m = 1..M1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserCsi {
    #[serde(with = "json::matrix")]
    pub r: CMat,
    #[serde(with = "json::matrix")]
    pub r_tilde: CMat,
    #[serde(with = "json::matrix_list")]
    pub q: Vec<CMat>,
}

impl UserCsi {
    pub fn zeros(n: usize, m1: usize, m2: usize) -> Self {
        Self {
            r: CMat::zeros(n, m1),
            r_tilde: CMat::zeros(n, m2),
            q: vec![CMat::zeros(n, m2); m1],
        }
    }

    /// All coefficients stacked as `[vec R; vec R~; vec Q_1; ...]`.
    pub fn stacked(&self) -> CVec {
        let mut all: Vec<C64> = Vec::new();
        all.extend_from_slice(self.r.as_slice());
        all.extend_from_slice(self.r_tilde.as_slice());
        for q in &self.q {
            all.extend_from_slice(q.as_slice());
        }
        CVec::from_vec(all)
    }

    /// Effective channel of this user for the given reflections.
    pub fn effective_channel(&self, refl: &ReflectionState) -> Result<CVec> {
        check_reflection_dims(refl, self.r.ncols(), self.r_tilde.ncols())?;
        let mut h = &self.r * &refl.theta1 + &self.r_tilde * &refl.theta2;
        for (m, q) in self.q.iter().enumerate() {
            h += q * &refl.theta2 * refl.theta1[m];
        }
        Ok(h)
    }
}

/// Derived cascaded quantities of a realization, user index 0 being the reference user.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CascadedChannelSet {
    pub users: Vec<UserCsi>,
    /// `u~_1 + sum_m d~_{1,m}`.
    #[serde(with = "json::vector")]
    pub d_bar: CVec,
    /// `G2 diag(d_bar)`, the superimposed IRS-2 related CSI.
    #[serde(with = "json::matrix")]
    pub q_bar: CMat,
    /// `G1 u_1`.
    #[serde(with = "json::vector")]
    pub g1: CVec,
    /// Scaling matrix `[e_0, e_1, ..., e_M1]`, `M2 x (M1 + 1)`.
    #[serde(with = "json::matrix")]
    pub e: CMat,
    /// `diag(u_1)^{-1} u_k`.
    #[serde(with = "json::vector_list")]
    pub b: Vec<CVec>,
    /// `diag(u~_1)^{-1} u~_k`.
    #[serde(with = "json::vector_list")]
    pub b_tilde: Vec<CVec>,
}

fn check_nonsingular(v: &CVec, what: &'static str) -> Result<()> {
    for (index, x) in v.iter().enumerate() {
        if x.norm() < SINGULARITY_THRESHOLD {
            return Err(Error::DegenerateChannel {
                what,
                index,
                modulus: x.norm(),
            });
        }
    }
    Ok(())
}

fn entry_div(a: &CVec, b: &CVec) -> CVec {
    a.zip_map(b, |x, y| x / y)
}

pub fn cascade(real: &ChannelRealization) -> Result<CascadedChannelSet> {
    let (n, m1, m2, k) = (real.n(), real.m1(), real.m2(), real.k());
    if real.g2.nrows() != n || real.d.shape() != (m2, m1) || k == 0 {
        return Err(Error::DimensionMismatch(
            "inconsistent link dimensions".into(),
        ));
    }
    if real.u.iter().any(|u| u.len() != m1) || real.u_tilde.iter().any(|u| u.len() != m2) {
        return Err(Error::DimensionMismatch(
            "user channel lengths do not match M1/M2".into(),
        ));
    }
    if real.u_tilde.len() != k {
        return Err(Error::DimensionMismatch(
            "u and u_tilde hold different user counts".into(),
        ));
    }

    let users: Vec<UserCsi> = (0..k)
        .map(|kk| {
            // d~_{k,m} = d_m u_{k,m}
            let d_tilde = scale_columns(&real.d, &real.u[kk]);
            UserCsi {
                r: scale_columns(&real.g1, &real.u[kk]),
                r_tilde: scale_columns(&real.g2, &real.u_tilde[kk]),
                q: (0..m1)
                    .map(|m| scale_columns(&real.g2, &d_tilde.column(m).into_owned()))
                    .collect(),
            }
        })
        .collect();

    let u1 = &real.u[0];
    let ut1 = &real.u_tilde[0];
    let d_tilde1 = scale_columns(&real.d, u1);
    let mut d_bar = ut1.clone();
    for m in 0..m1 {
        d_bar += d_tilde1.column(m);
    }
    check_nonsingular(&d_bar, "d_bar")?;
    check_nonsingular(u1, "u_1")?;
    check_nonsingular(ut1, "u_tilde_1")?;

    let mut e = CMat::zeros(m2, m1 + 1);
    e.set_column(0, &entry_div(ut1, &d_bar));
    for m in 0..m1 {
        e.set_column(m + 1, &entry_div(&d_tilde1.column(m).into_owned(), &d_bar));
    }

    Ok(CascadedChannelSet {
        q_bar: scale_columns(&real.g2, &d_bar),
        g1: &real.g1 * u1,
        d_bar,
        e,
        b: real.u.iter().map(|uk| entry_div(uk, u1)).collect(),
        b_tilde: real.u_tilde.iter().map(|uk| entry_div(uk, ut1)).collect(),
        users,
    })
}

impl CascadedChannelSet {
    pub fn n(&self) -> usize {
        self.q_bar.nrows()
    }
    pub fn m1(&self) -> usize {
        self.e.ncols() - 1
    }
    pub fn m2(&self) -> usize {
        self.q_bar.ncols()
    }
    pub fn k(&self) -> usize {
        self.users.len()
    }

    /// Stacked scalings `Lambda = [lambda_2, ..., lambda_K]` with `lambda_k = [b_k; b~_k]`.
    pub fn lambda(&self) -> CMat {
        let (m1, m2) = (self.m1(), self.m2());
        let mut out = CMat::zeros(m1 + m2, self.k().saturating_sub(1));
        for kk in 1..self.k() {
            let mut col = out.column_mut(kk - 1);
            col.rows_mut(0, m1).copy_from(&self.b[kk]);
            col.rows_mut(m1, m2).copy_from(&self.b_tilde[kk]);
        }
        out
    }

    /// Composite CSI `F = [Q_bar E, R_1]` of the reference user.
    pub fn composite(&self) -> CMat {
        let m1 = self.m1();
        let qe = &self.q_bar * &self.e;
        let mut f = CMat::zeros(self.n(), 2 * m1 + 1);
        f.columns_mut(0, m1 + 1).copy_from(&qe);
        f.columns_mut(m1 + 1, m1).copy_from(&self.users[0].r);
        f
    }

    /// Stacked form for the reference user: `[Q_bar diag(theta2) E, R] [1; theta1; theta1]`.
    pub fn effective_channel_reference(&self, refl: &ReflectionState) -> Result<CVec> {
        check_reflection_dims(refl, self.m1(), self.m2())?;
        let mut t = CVec::zeros(self.m1() + 1);
        t[0] = ONE;
        t.rows_mut(1, self.m1()).copy_from(&refl.theta1);
        let qd = scale_columns(&self.q_bar, &refl.theta2);
        Ok(qd * (&self.e * t) + &self.users[0].r * &refl.theta1)
    }
}

/// `sum_m Q_{k,m} theta2 theta1_m + R~_k theta2 + R_k theta1`.
pub fn effective_channel(
    cc: &CascadedChannelSet,
    k: usize,
    refl: &ReflectionState,
) -> Result<CVec> {
    let user = cc.users.get(k).ok_or_else(|| {
        Error::InvalidArgument(format!("user index {k} out of range (K = {})", cc.k()))
    })?;
    user.effective_channel(refl)
}

/// `h * pilot + v` with `v ~ CN(0, sigma2 I)`.
pub fn receive<R: Rng + ?Sized>(h: &CVec, pilot: C64, sigma2: f64, rng: &mut R) -> CVec {
    let mut z = h * pilot;
    if sigma2 > 0.0 {
        for x in z.iter_mut() {
            *x += cn(rng, sigma2);
        }
    }
    z
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{rel_error, rel_error_vec};
    use crate::random::random_phases;

    fn unit_scalar_realization() -> ChannelRealization {
        let one = CMat::from_element(1, 1, ONE);
        ChannelRealization {
            g1: one.clone(),
            g2: one.clone(),
            d: one,
            u: vec![CVec::from_element(1, ONE)],
            u_tilde: vec![CVec::from_element(1, ONE)],
            user_positions: vec![[0.0; 3]],
        }
    }

    fn small_config(n: usize, m1: usize, m2: usize, k: usize) -> SystemConfig {
        SystemConfig {
            n,
            m1,
            m2,
            k,
            gamma0_db: 0.0,
            alpha_near: 0.0,
            alpha_far: 0.0,
            ..SystemConfig::default()
        }
    }

    #[test]
    fn path_loss_values() {
        assert!((path_loss(1.0, 3.0, -30.0).unwrap() - 1.0e-3).abs() < 1e-18);
        assert!((path_loss(1.0, 7.3, -12.0).unwrap() - 10f64.powf(-1.2)).abs() < 1e-15);
        let got = path_loss(10.0, 2.2, -30.0).unwrap();
        assert!((got - 6.3096e-6).abs() / 6.3096e-6 < 1e-4, "{got}");
        assert!(matches!(
            path_loss(0.0, 2.0, -30.0),
            Err(Error::InvalidArgument(_))
        ));
        assert!(path_loss(-1.0, 2.0, -30.0).is_err());
    }

    #[test]
    fn default_geometry_inter_irs_link() {
        let c = SystemConfig::default();
        let d = distance(&c.irs1_position, &c.irs2_position);
        assert!((d - 49.0).abs() < 1e-12);
        let gains = link_gains(&c, &[c.user_center]).unwrap();
        assert!((gains.d - 1e-3 * 49f64.powi(-3)).abs() < 1e-20);
    }

    #[test]
    fn sigma2_from_powers() {
        let c = SystemConfig::default();
        assert!((c.sigma2() - 1e-8).abs() < 1e-20);
        let bad = SystemConfig { n: 0, ..c };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn gen_channels_is_deterministic_and_shaped() {
        let c = small_config(3, 2, 4, 2);
        let a = gen_channels(&c, 17).unwrap();
        let b = gen_channels(&c, 17).unwrap();
        assert_eq!(a.g1, b.g1);
        assert_eq!(a.d, b.d);
        assert_eq!(a.u_tilde, b.u_tilde);
        assert_eq!(a.g2.shape(), (3, 4));
        assert_eq!(a.d.shape(), (4, 2));
        assert_eq!(a.u.len(), 2);
        let other = gen_channels(&c, 18).unwrap();
        assert_ne!(a.g1, other.g1);
    }

    #[test]
    fn unit_path_loss_gives_unit_variance() {
        let c = small_config(20, 20, 20, 1);
        let mut sum = 0.0;
        let mut count = 0usize;
        for t in 0..50 {
            let r = gen_channels(&c, t).unwrap();
            for m in [&r.g1, &r.g2, &r.d] {
                sum += m.iter().map(|x| x.norm_sqr()).sum::<f64>();
                count += m.len();
            }
        }
        let var = sum / count as f64;
        assert!((var - 1.0).abs() < 0.02, "{var}");
    }

    #[test]
    fn scalar_all_ones_cascade() {
        let cc = cascade(&unit_scalar_realization()).unwrap();
        assert_eq!(cc.d_bar[0], C64::new(2.0, 0.0));
        assert_eq!(cc.q_bar[(0, 0)], C64::new(2.0, 0.0));
        assert_eq!(cc.e[(0, 0)], C64::new(0.5, 0.0));
        assert_eq!(cc.e[(0, 1)], C64::new(0.5, 0.0));
        assert_eq!(cc.users[0].r_tilde[(0, 0)], ONE);
        assert_eq!(cc.users[0].q[0][(0, 0)], ONE);
        assert_eq!(cc.b[0][0], ONE);
        assert_eq!(cc.b_tilde[0][0], ONE);
        let h = effective_channel(&cc, 0, &ReflectionState::all_on(1, 1)).unwrap();
        assert_eq!(h[0], C64::new(3.0, 0.0));
        let off = ReflectionState::new(CVec::zeros(1), CVec::zeros(1)).unwrap();
        assert_eq!(effective_channel(&cc, 0, &off).unwrap()[0], ZERO);
    }

    #[test]
    fn superposition_and_scaling_identities() {
        let c = small_config(4, 3, 2, 3);
        let real = gen_channels(&c, 5).unwrap();
        let cc = cascade(&real).unwrap();
        let u1 = &cc.users[0];
        let mut sum = u1.r_tilde.clone();
        for q in &u1.q {
            sum += q;
        }
        assert!(rel_error(&sum, &cc.q_bar) < 1e-12);
        let mut esum = cc.e.column(0).into_owned();
        for m in 1..=c.m1 {
            esum += cc.e.column(m);
        }
        assert!(rel_error_vec(&esum, &CVec::from_element(c.m2, ONE)) < 1e-12);
        assert!(
            rel_error(
                &u1.r_tilde,
                &scale_columns(&cc.q_bar, &cc.e.column(0).into_owned())
            ) < 1e-12
        );
        for m in 0..c.m1 {
            let qm = scale_columns(&cc.q_bar, &cc.e.column(m + 1).into_owned());
            assert!(rel_error(&u1.q[m], &qm) < 1e-12);
        }
        for k in 1..c.k {
            let uk = &cc.users[k];
            assert!(rel_error(&uk.r, &scale_columns(&u1.r, &cc.b[k])) < 1e-12);
            assert!(rel_error(&uk.r_tilde, &scale_columns(&u1.r_tilde, &cc.b_tilde[k])) < 1e-12);
            for m in 0..c.m1 {
                assert!(rel_error(&uk.q[m], &(&u1.q[m] * cc.b[k][m])) < 1e-12);
            }
        }
    }

    #[test]
    fn three_channel_forms_agree() {
        let c = small_config(5, 3, 4, 2);
        let real = gen_channels(&c, 9).unwrap();
        let cc = cascade(&real).unwrap();
        let mut rng = rng_from_seed(1);
        for _ in 0..20 {
            let refl = ReflectionState::new(random_phases(&mut rng, 3), random_phases(&mut rng, 4))
                .unwrap();
            let raw = real.effective_channel(0, &refl).unwrap();
            let casc = effective_channel(&cc, 0, &refl).unwrap();
            let stacked = cc.effective_channel_reference(&refl).unwrap();
            assert!(rel_error_vec(&casc, &raw) < 1e-10);
            assert!(rel_error_vec(&stacked, &raw) < 1e-10);
            let raw2 = real.effective_channel(1, &refl).unwrap();
            assert!(rel_error_vec(&effective_channel(&cc, 1, &refl).unwrap(), &raw2) < 1e-10);
        }
    }

    #[test]
    fn degenerate_reference_is_rejected() {
        let mut real = unit_scalar_realization();
        real.u[0][0] = ZERO;
        assert!(matches!(
            cascade(&real),
            Err(Error::DegenerateChannel { what: "u_1", .. })
        ));
        let mut real = unit_scalar_realization();
        real.u_tilde[0][0] = C64::new(-1.0, 0.0); // d_bar = -1 + 1 = 0
        assert!(matches!(
            cascade(&real),
            Err(Error::DegenerateChannel { what: "d_bar", .. })
        ));
    }

    #[test]
    fn mixed_on_off_is_rejected() {
        let mixed = CVec::from_vec(vec![ONE, ZERO]);
        assert!(ReflectionState::new(mixed, CVec::from_element(1, ONE)).is_err());
        let half = CVec::from_vec(vec![C64::new(0.5, 0.0)]);
        assert!(ReflectionState::new(CVec::from_element(1, ONE), half).is_err());
    }

    #[test]
    fn receive_noise_statistics() {
        let h = CVec::from_vec(vec![C64::new(1.0, -2.0), C64::new(0.5, 0.25)]);
        let mut rng = rng_from_seed(3);
        assert_eq!(receive(&h, ONE, 0.0, &mut rng), h);
        assert_eq!(receive(&h, -ONE, 0.0, &mut rng), -h.clone());
        let zero = CVec::zeros(1);
        let draws = 10_000;
        let var = (0..draws)
            .map(|_| receive(&zero, ONE, 0.01, &mut rng)[0].norm_sqr())
            .sum::<f64>()
            / draws as f64;
        assert!((0.0094..=0.0106).contains(&var), "{var}");
    }

    mod props {
        use super::*;
        use crate::linalg::rel_error_vec;
        use crate::random::{random_phases, rng_from_seed};
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn channel_forms_agree_for_any_geometry(seed in any::<u64>(), n in 1usize..7,
                                                    m1 in 1usize..6, m2 in 1usize..6,
                                                    k in 1usize..4) {
                let c = small_config(n, m1, m2, k);
                let real = gen_channels(&c, seed).unwrap();
                let cc = cascade(&real).unwrap();
                let mut rng = rng_from_seed(seed ^ 0x5eed);
                let refl = ReflectionState::new(random_phases(&mut rng, m1),
                                                random_phases(&mut rng, m2)).unwrap();
                for user in 0..k {
                    let raw = real.effective_channel(user, &refl).unwrap();
                    let casc = effective_channel(&cc, user, &refl).unwrap();
                    prop_assert!(rel_error_vec(&casc, &raw) < 1e-10);
                }
                let stacked = cc.effective_channel_reference(&refl).unwrap();
                prop_assert!(rel_error_vec(&stacked, &real.effective_channel(0, &refl).unwrap()) < 1e-10);
            }

            #[test]
            fn same_trial_seed_same_channel(seed in any::<u64>()) {
                let c = small_config(3, 2, 2, 2);
                let (a, b) = (gen_channels(&c, seed).unwrap(), gen_channels(&c, seed).unwrap());
                prop_assert_eq!(&a.g1, &b.g1);
                prop_assert_eq!(&a.g2, &b.g2);
                prop_assert_eq!(&a.d, &b.d);
                prop_assert_eq!(&a.u, &b.u);
                prop_assert_eq!(&a.u_tilde, &b.u_tilde);
            }
        }
    }
}
