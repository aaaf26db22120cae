//! Synthetic ground-truth link: booster → (span → amplifier) × N with the last
//! amplifier acting as preamp.
//!
//! Per-channel power is tracked in dBm through every stage. Each amplifier adds
//! ASE, each span adds incoherent self-channel NLI (`η·P³` at the span input),
//! and both noise terms then see the same downstream gains and losses as the
//! signal. The per-batch Q-factor is the receiver GSNR of the batch's central
//! channel minus a fixed 16QAM offset.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{db_to_lin, dbm_to_watt, lin_to_db, Scalar};

/// Planck constant, J·s.
pub const PLANCK: f64 = 6.62607e-34;

/// GSNR → Q offset for 16QAM, dB.
pub const QAM16_OFFSET_DB: f64 = 3.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiberSpan {
    pub length_km: f64,
    pub loss_db_per_km: f64,
    /// Incoherent NLI coefficient η in W⁻² (`P_nli = η·P³`, P in W).
    #[serde(rename = "nli_coeff_per_w2")]
    pub nli_coeff: f64,
}

impl FiberSpan {
    pub fn loss_db(&self) -> f64 {
        self.length_km * self.loss_db_per_km
    }

    fn validate(&self, idx: usize) -> Result<()> {
        if !(self.length_km > 0.0) {
            return Err(Error::InvalidLink(format!("spans[{idx}].length_km must be > 0")));
        }
        if !(self.loss_db_per_km > 0.0) {
            return Err(Error::InvalidLink(format!("spans[{idx}].loss_db_per_km must be > 0")));
        }
        if !(self.nli_coeff >= 0.0) {
            return Err(Error::InvalidLink(format!(
                "spans[{idx}].nli_coeff_per_w2 must be >= 0"
            )));
        }
        Ok(())
    }
}

impl Default for FiberSpan {
    fn default() -> Self {
        Self {
            length_km: 80.0,
            loss_db_per_km: 0.2,
            nli_coeff: 1000.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AmpRole {
    Booster,
    Inline,
    Preamp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub spans: Vec<FiberSpan>,
    pub oa_roles: Vec<AmpRole>,
    pub nf_db: f64,
    pub center_freq_thz: f64,
    /// Transmit-side insertion loss ahead of the booster, dB. The launch power
    /// is referenced before this loss.
    pub input_loss_db: f64,
    /// Per amplifier `[min, max]` gain, dB.
    pub gain_bounds_db: Vec<[f64; 2]>,
    /// `[min, max]` tilt shared by all amplifiers, dB.
    pub tilt_bounds_db: [f64; 2],
}

impl LinkSpec {
    /// Booster + `n_spans` amplified spans with identical spans and bounds.
    pub fn uniform(n_spans: usize, span: FiberSpan, gain_bounds: [f64; 2], tilt_bounds: [f64; 2]) -> Self {
        let n_oa = n_spans + 1;
        Self {
            spans: vec![span; n_spans],
            oa_roles: Self::default_roles(n_oa),
            nf_db: 5.0,
            center_freq_thz: 193.4,
            input_loss_db: 16.0,
            gain_bounds_db: vec![gain_bounds; n_oa],
            tilt_bounds_db: tilt_bounds,
        }
    }

    pub fn default_roles(n_oa: usize) -> Vec<AmpRole> {
        (0..n_oa)
            .map(|i| match i {
                0 => AmpRole::Booster,
                i if i + 1 == n_oa => AmpRole::Preamp,
                _ => AmpRole::Inline,
            })
            .collect()
    }

    pub fn n_oa(&self) -> usize {
        self.spans.len() + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.spans.is_empty() {
            return Err(Error::InvalidLink("spans must be nonempty".into()));
        }
        for (i, s) in self.spans.iter().enumerate() {
            s.validate(i)?;
        }
        let n_oa = self.n_oa();
        if self.oa_roles.len() != n_oa {
            return Err(Error::InvalidLink(format!(
                "oa_roles has {} entries, expected {n_oa}",
                self.oa_roles.len()
            )));
        }
        if self.oa_roles != Self::default_roles(n_oa) {
            return Err(Error::InvalidLink("oa_roles must be booster, inline..., preamp".into()));
        }
        if self.gain_bounds_db.len() != n_oa {
            return Err(Error::InvalidLink(format!(
                "gain_bounds_db has {} entries, expected {n_oa}",
                self.gain_bounds_db.len()
            )));
        }
        for (i, b) in self.gain_bounds_db.iter().enumerate() {
            check_bound(b, &format!("gain_bounds_db[{i}]"))?;
        }
        check_bound(&self.tilt_bounds_db, "tilt_bounds_db")?;
        if !self.nf_db.is_finite() || !self.center_freq_thz.is_finite() || self.center_freq_thz <= 0.0 {
            return Err(Error::InvalidLink(
                "nf_db/center_freq_thz must be finite, center > 0".into(),
            ));
        }
        if !self.input_loss_db.is_finite() {
            return Err(Error::InvalidLink("input_loss_db must be finite".into()));
        }
        Ok(())
    }

    /// Gain bounds in tenths of dB, shrunk inward to the 0.1 dB grid.
    pub fn gain_bounds_tenths(&self, oa: usize) -> (i32, i32) {
        bound_tenths(&self.gain_bounds_db[oa])
    }

    pub fn tilt_bounds_tenths(&self) -> (i32, i32) {
        bound_tenths(&self.tilt_bounds_db)
    }
}

impl Default for LinkSpec {
    /// Six 80 km spans at 0.2 dB/km, NF 5 dB, η = 1000 W⁻², 193.4 THz, gains
    /// within ±1.5 dB of span loss and tilts within ±0.5 dB.
    fn default() -> Self {
        Self::uniform(6, FiberSpan::default(), [14.5, 17.5], [-0.5, 0.5])
    }
}

fn check_bound(b: &[f64; 2], name: &str) -> Result<()> {
    if !(b[0].is_finite() && b[1].is_finite() && b[0] <= b[1]) {
        return Err(Error::InvalidLink(format!("{name} must be finite with min <= max")));
    }
    let (lo, hi) = bound_tenths(b);
    if lo > hi {
        return Err(Error::InvalidLink(format!("{name} contains no 0.1 dB grid point")));
    }
    Ok(())
}

fn bound_tenths(b: &[f64; 2]) -> (i32, i32) {
    ((b[0] * 10.0 - 1e-9).ceil() as i32, (b[1] * 10.0 + 1e-9).floor() as i32)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelPlan {
    pub n_batches: usize,
    pub channels_per_batch: usize,
    pub spacing_ghz: f64,
    pub symbol_rate_gbaud: f64,
    pub launch_power_dbm: f64,
    pub loaded_batches: BTreeSet<usize>,
    /// Batches carrying live traffic; monitored during reconfiguration.
    pub existing_batches: BTreeSet<usize>,
}

impl ChannelPlan {
    /// Six batches of seven channels at 75 GHz, 63.9 GBd, 0 dBm, all loaded.
    pub fn full_load() -> Self {
        Self {
            n_batches: 6,
            channels_per_batch: 7,
            spacing_ghz: 75.0,
            symbol_rate_gbaud: 63.9,
            launch_power_dbm: 0.0,
            loaded_batches: (0..6).collect(),
            existing_batches: BTreeSet::new(),
        }
    }

    pub fn with_loading(
        mut self,
        loaded: impl IntoIterator<Item = usize>,
        existing: impl IntoIterator<Item = usize>,
    ) -> Self {
        self.loaded_batches = loaded.into_iter().collect();
        self.existing_batches = existing.into_iter().collect();
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_batches == 0 || self.channels_per_batch == 0 {
            return Err(Error::InvalidPlan(
                "n_batches and channels_per_batch must be >= 1".into(),
            ));
        }
        if !(self.spacing_ghz > 0.0) || !(self.symbol_rate_gbaud > 0.0) {
            return Err(Error::InvalidPlan(
                "spacing_ghz and symbol_rate_gbaud must be > 0".into(),
            ));
        }
        if !self.launch_power_dbm.is_finite() {
            return Err(Error::InvalidPlan("launch_power_dbm must be finite".into()));
        }
        if let Some(b) = self.loaded_batches.iter().find(|&&b| b >= self.n_batches) {
            return Err(Error::InvalidPlan(format!("loaded batch {b} >= n_batches")));
        }
        if !self.existing_batches.is_subset(&self.loaded_batches) {
            return Err(Error::InvalidPlan(
                "existing_batches must be a subset of loaded_batches".into(),
            ));
        }
        Ok(())
    }

    pub fn total_channels(&self) -> usize {
        self.n_batches * self.channels_per_batch
    }

    /// Index within a batch of the channel whose Q represents the batch.
    pub fn central_offset(&self) -> usize {
        self.channels_per_batch / 2
    }

    /// Frequency of global channel index `idx` on the full grid, THz.
    pub fn channel_freq_thz<T: Scalar>(&self, center_thz: f64, idx: usize) -> T {
        let mid = T::lit((self.total_channels() as f64 - 1.0) / 2.0);
        T::lit(center_thz) + (T::lit(idx as f64) - mid) * T::lit(self.spacing_ghz * 1e-3)
    }

    /// Edges of the full grid (all batches, loaded or not), THz.
    pub fn band_thz<T: Scalar>(&self, center_thz: f64) -> (T, T) {
        (
            self.channel_freq_thz(center_thz, 0),
            self.channel_freq_thz(center_thz, self.total_channels() - 1),
        )
    }
}

/// One emitted grid slot.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridChannel<T> {
    pub batch: usize,
    pub channel: usize,
    pub freq_thz: T,
}

/// Loaded channels of `plan` on a contiguous grid centred on `center_thz`.
pub fn channel_grid<T: Scalar>(plan: &ChannelPlan, center_thz: f64) -> Vec<GridChannel<T>> {
    plan.loaded_batches
        .iter()
        .flat_map(|&batch| {
            (0..plan.channels_per_batch).map(move |channel| GridChannel {
                batch,
                channel,
                freq_thz: plan.channel_freq_thz(center_thz, batch * plan.channels_per_batch + channel),
            })
        })
        .collect()
}

/// Gains and tilts of every amplifier on the 0.1 dB grid, stored as integer
/// tenths of a dB.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "OAConfigDb", into = "OAConfigDb")]
pub struct OAConfig {
    gains: Vec<i32>,
    tilts: Vec<i32>,
}

#[derive(Serialize, Deserialize)]
struct OAConfigDb {
    gains_db: Vec<f64>,
    tilts_db: Vec<f64>,
}

impl TryFrom<OAConfigDb> for OAConfig {
    type Error = Error;
    fn try_from(v: OAConfigDb) -> Result<Self> {
        OAConfig::from_db(&v.gains_db, &v.tilts_db)
    }
}

impl From<OAConfig> for OAConfigDb {
    fn from(c: OAConfig) -> Self {
        OAConfigDb {
            gains_db: c.gains_db(),
            tilts_db: c.tilts_db(),
        }
    }
}

fn to_tenths(v: f64, what: &str) -> Result<i32> {
    let t = v * 10.0;
    let r = t.round();
    if !v.is_finite() || (t - r).abs() > 1e-6 {
        return Err(Error::InvalidConfig(format!(
            "{what} = {v} is not a multiple of 0.1 dB"
        )));
    }
    Ok(r as i32)
}

impl OAConfig {
    pub fn from_tenths(gains: Vec<i32>, tilts: Vec<i32>) -> Result<Self> {
        if gains.len() != tilts.len() || gains.is_empty() {
            return Err(Error::InvalidConfig(format!(
                "gains ({}) and tilts ({}) must have equal nonzero length",
                gains.len(),
                tilts.len()
            )));
        }
        Ok(Self { gains, tilts })
    }

    pub fn from_db(gains_db: &[f64], tilts_db: &[f64]) -> Result<Self> {
        let gains = gains_db
            .iter()
            .enumerate()
            .map(|(i, &g)| to_tenths(g, &format!("gains_db[{i}]")))
            .collect::<Result<_>>()?;
        let tilts = tilts_db
            .iter()
            .enumerate()
            .map(|(i, &t)| to_tenths(t, &format!("tilts_db[{i}]")))
            .collect::<Result<_>>()?;
        Self::from_tenths(gains, tilts)
    }

    pub fn uniform(n_oa: usize, gain_db: f64, tilt_db: f64) -> Result<Self> {
        Self::from_db(&vec![gain_db; n_oa], &vec![tilt_db; n_oa])
    }

    pub fn n_oa(&self) -> usize {
        self.gains.len()
    }

    pub fn gain_db(&self, oa: usize) -> f64 {
        self.gains[oa] as f64 / 10.0
    }

    pub fn tilt_db(&self, oa: usize) -> f64 {
        self.tilts[oa] as f64 / 10.0
    }

    pub fn gains_db(&self) -> Vec<f64> {
        (0..self.n_oa()).map(|i| self.gain_db(i)).collect()
    }

    pub fn tilts_db(&self) -> Vec<f64> {
        (0..self.n_oa()).map(|i| self.tilt_db(i)).collect()
    }

    pub fn gains_tenths(&self) -> &[i32] {
        &self.gains
    }

    pub fn tilts_tenths(&self) -> &[i32] {
        &self.tilts
    }

    pub fn gains_tenths_mut(&mut self) -> &mut [i32] {
        &mut self.gains
    }

    pub fn tilts_tenths_mut(&mut self) -> &mut [i32] {
        &mut self.tilts
    }

    pub fn check_bounds(&self, link: &LinkSpec) -> Result<()> {
        if self.n_oa() != link.n_oa() {
            return Err(Error::InvalidConfig(format!(
                "config has {} amplifiers, link has {}",
                self.n_oa(),
                link.n_oa()
            )));
        }
        let (tlo, thi) = link.tilt_bounds_tenths();
        for oa in 0..self.n_oa() {
            let (lo, hi) = link.gain_bounds_tenths(oa);
            if !(lo..=hi).contains(&self.gains[oa]) {
                return Err(Error::InvalidConfig(format!(
                    "gain of OA {oa} = {} dB outside {:?}",
                    self.gain_db(oa),
                    link.gain_bounds_db[oa]
                )));
            }
            if !(tlo..=thi).contains(&self.tilts[oa]) {
                return Err(Error::InvalidConfig(format!(
                    "tilt of OA {oa} = {} dB outside {:?}",
                    self.tilt_db(oa),
                    link.tilt_bounds_db
                )));
            }
        }
        Ok(())
    }
}

/// Per-batch Q-factor in dB; `None` for batches that are not loaded.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QVector<T> {
    pub q_db: Vec<Option<T>>,
}

impl<T: Scalar> QVector<T> {
    pub fn get(&self, batch: usize) -> Option<T> {
        self.q_db.get(batch).copied().flatten()
    }

    pub fn loaded(&self) -> impl Iterator<Item = (usize, T)> + '_ {
        self.q_db.iter().enumerate().filter_map(|(b, q)| q.map(|q| (b, q)))
    }

    /// Minimum over `batches`; `None` if the set is empty or any batch is absent.
    pub fn min_over<'a>(&self, batches: impl IntoIterator<Item = &'a usize>) -> Option<T> {
        let mut out: Option<T> = None;
        for &b in batches {
            let q = self.get(b)?;
            out = Some(match out {
                Some(m) if m <= q => m,
                _ => q,
            });
        }
        out
    }

    pub fn min_loaded(&self) -> Option<T> {
        self.loaded().map(|(_, q)| q).reduce(|a, b| if b < a { b } else { a })
    }
}

/// Gain of amplifier `oa` at `freq_thz`: `gain + tilt·(f − f_mid)/(f_max − f_mid)`.
pub fn per_channel_gain<T: Scalar>(config: &OAConfig, oa: usize, freq_thz: T, band: (T, T)) -> Result<T> {
    let (f_min, f_max) = band;
    if !(f_min < f_max) || freq_thz < f_min || freq_thz > f_max {
        return Err(Error::FrequencyOutOfBand {
            freq_thz: freq_thz.as_f64(),
            min_thz: f_min.as_f64(),
            max_thz: f_max.as_f64(),
        });
    }
    let f_mid = (f_min + f_max) / T::lit(2.0);
    Ok(T::lit(config.gain_db(oa)) + T::lit(config.tilt_db(oa)) * (freq_thz - f_mid) / (f_max - f_mid))
}

/// Signal power (dBm) of one channel at every stage boundary, in order
/// `[amp 0 out, span 0 out, amp 1 out, …, span S-1 out, amp S out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelPowers<T> {
    pub channel: GridChannel<T>,
    pub stage_dbm: Vec<T>,
}

/// Full noise budget of one channel at the receiver.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelBudget<T> {
    pub powers: ChannelPowers<T>,
    /// Linear gain of each amplifier for this channel.
    pub amp_gain_lin: Vec<T>,
    pub signal_w: T,
    pub ase_w: T,
    pub nli_w: T,
}

impl<T: Scalar> ChannelBudget<T> {
    pub fn gsnr_db(&self) -> T {
        lin_to_db(self.signal_w / (self.ase_w + self.nli_w))
    }

    pub fn q_db(&self) -> T {
        self.gsnr_db() - T::lit(QAM16_OFFSET_DB)
    }
}

fn check_dims(link: &LinkSpec, config: &OAConfig) -> Result<()> {
    if config.n_oa() != link.n_oa() {
        return Err(Error::InvalidConfig(format!(
            "config has {} amplifiers, link has {}",
            config.n_oa(),
            link.n_oa()
        )));
    }
    Ok(())
}

/// Budget for a single channel.
pub fn channel_budget<T: Scalar>(
    link: &LinkSpec,
    plan: &ChannelPlan,
    config: &OAConfig,
    channel: GridChannel<T>,
) -> Result<ChannelBudget<T>> {
    check_dims(link, config)?;
    let band = plan.band_thz::<T>(link.center_freq_thz);
    let n_oa = link.n_oa();

    let mut stage_dbm = Vec::with_capacity(2 * link.spans.len() + 1);
    let mut amp_out = Vec::with_capacity(n_oa);
    let mut amp_gain_db = Vec::with_capacity(n_oa);

    let mut p = T::lit(plan.launch_power_dbm - link.input_loss_db);
    for oa in 0..n_oa {
        if oa > 0 {
            p = p - T::lit(link.spans[oa - 1].loss_db());
            stage_dbm.push(p);
        }
        let g = per_channel_gain(config, oa, channel.freq_thz, band)?;
        p = p + g;
        amp_gain_db.push(g);
        amp_out.push(p);
        stage_dbm.push(p);
    }
    let rx = p;

    let nf_lin = db_to_lin(T::lit(link.nf_db));
    let hv_b = T::lit(PLANCK) * channel.freq_thz * T::lit(1e12) * T::lit(plan.symbol_rate_gbaud * 1e9);
    let amp_gain_lin: Vec<T> = amp_gain_db.iter().map(|&g| db_to_lin(g)).collect();

    let ase_w = amp_gain_lin
        .iter()
        .zip(&amp_out)
        .map(|(&g, &out)| {
            let injected = nf_lin * hv_b * (g - T::one()).max(T::zero());
            injected * db_to_lin(rx - out)
        })
        .sum();

    // Span s is fed by amplifier s.
    let nli_w = link
        .spans
        .iter()
        .zip(&amp_out)
        .map(|(span, &p_in)| {
            let w = dbm_to_watt(p_in);
            T::lit(span.nli_coeff) * w * w * w * db_to_lin(rx - p_in)
        })
        .sum();

    Ok(ChannelBudget {
        powers: ChannelPowers { channel, stage_dbm },
        amp_gain_lin,
        signal_w: dbm_to_watt(rx),
        ase_w,
        nli_w,
    })
}

/// Per-channel signal power at every stage boundary, for every loaded channel.
pub fn propagate<T: Scalar>(link: &LinkSpec, plan: &ChannelPlan, config: &OAConfig) -> Result<Vec<ChannelPowers<T>>> {
    channel_grid::<T>(plan, link.center_freq_thz)
        .into_iter()
        .map(|ch| channel_budget(link, plan, config, ch).map(|b| b.powers))
        .collect()
}

/// Receiver ASE power (W) per loaded channel, in grid order.
pub fn accumulate_ase<T: Scalar>(link: &LinkSpec, plan: &ChannelPlan, config: &OAConfig) -> Result<Vec<T>> {
    channel_grid::<T>(plan, link.center_freq_thz)
        .into_iter()
        .map(|ch| channel_budget(link, plan, config, ch).map(|b| b.ase_w))
        .collect()
}

/// Receiver NLI power (W) per loaded channel, in grid order.
pub fn estimate_nli<T: Scalar>(link: &LinkSpec, plan: &ChannelPlan, config: &OAConfig) -> Result<Vec<T>> {
    channel_grid::<T>(plan, link.center_freq_thz)
        .into_iter()
        .map(|ch| channel_budget(link, plan, config, ch).map(|b| b.nli_w))
        .collect()
}

/// ASE injected by one amplifier: `NF·h·ν·(G − 1)·B`, zero for `G ≤ 1`.
pub fn single_amp_ase_w<T: Scalar>(nf_db: f64, gain_db: T, freq_thz: T, symbol_rate_gbaud: f64) -> T {
    db_to_lin(T::lit(nf_db))
        * T::lit(PLANCK)
        * freq_thz
        * T::lit(1e12)
        * (db_to_lin(gain_db) - T::one()).max(T::zero())
        * T::lit(symbol_rate_gbaud * 1e9)
}

/// Q-factor of each loaded batch, read on the batch's central channel.
pub fn evaluate_q<T: Scalar>(link: &LinkSpec, plan: &ChannelPlan, config: &OAConfig) -> Result<QVector<T>> {
    check_dims(link, config)?;
    let mut q_db = vec![None; plan.n_batches];
    let offset = plan.central_offset();
    for &batch in &plan.loaded_batches {
        let idx = batch * plan.channels_per_batch + offset;
        let ch = GridChannel {
            batch,
            channel: offset,
            freq_thz: plan.channel_freq_thz(link.center_freq_thz, idx),
        };
        q_db[batch] = Some(channel_budget(link, plan, config, ch)?.q_db());
    }
    Ok(QVector { q_db })
}

/// The link and plan bundled as a pure Q-factor oracle.
#[derive(Clone, Debug, PartialEq)]
pub struct LinkOracle {
    pub link: LinkSpec,
    pub plan: ChannelPlan,
}

impl LinkOracle {
    pub fn new(link: LinkSpec, plan: ChannelPlan) -> Result<Self> {
        link.validate()?;
        plan.validate()?;
        Ok(Self { link, plan })
    }

    pub fn with_plan(&self, plan: ChannelPlan) -> Result<Self> {
        Self::new(self.link.clone(), plan)
    }

    pub fn q<T: Scalar>(&self, config: &OAConfig) -> Result<QVector<T>> {
        evaluate_q(&self.link, &self.plan, config)
    }
}
