//! Stochastic SEIR epidemic simulator with symptom, detection, hospital and
//! ICU compartments.
//!
//! Discrete-time chain binomial with a one-day step. Every day consumes a
//! fixed number of uniforms from a ChaCha8 stream seeded with the seed
//! label, and every binomial is drawn by exact inversion of a single
//! uniform. Runs that share a seed therefore share their random numbers,
//! which is what makes outputs at nearby parameters positively correlated.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Fixed (non-calibrated) part of the parameterization. Rates are per day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FixedBlock {
    pub symptomatic_fraction: f64,
    /// Share of symptomatic cases that become severe.
    pub severe_fraction: f64,
    pub detection_fraction: f64,
    /// Infectiousness of detected cases relative to undetected ones.
    pub detected_infectiousness: f64,
    /// Exit rate from the presymptomatic stage.
    pub presymptomatic_rate: f64,
    /// Severe symptomatic to hospital.
    pub hospitalization_rate: f64,
    pub hospital_exit_rate: f64,
    /// Share of hospital exits that go to the ICU (the rest recover).
    pub critical_fraction: f64,
    pub icu_exit_rate: f64,
    /// Share of ICU exits that die (the rest move to post-ICU care).
    pub death_fraction: f64,
    /// Recovery rate for asymptomatic, mild and post-ICU cases.
    pub recovery_rate: f64,
    pub population: u64,
    pub initial_exposed: u64,
}

impl Default for FixedBlock {
    fn default() -> Self {
        FixedBlock {
            symptomatic_fraction: 0.6,
            severe_fraction: 0.1,
            detection_fraction: 0.3,
            detected_infectiousness: 0.3,
            presymptomatic_rate: 0.5,
            hospitalization_rate: 0.25,
            hospital_exit_rate: 1.0 / 7.0,
            critical_fraction: 0.25,
            icu_exit_rate: 1.0 / 7.0,
            death_fraction: 0.4,
            recovery_rate: 1.0 / 7.0,
            population: 100_000,
            initial_exposed: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeirParams {
    pub beta: f64,
    pub kappa_a: f64,
    pub kappa_s: f64,
    pub fixed: FixedBlock,
}

impl SeirParams {
    pub fn new(beta: f64, kappa_a: f64, kappa_s: f64) -> Self {
        SeirParams {
            beta,
            kappa_a,
            kappa_s,
            fixed: FixedBlock::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let f = &self.fixed;
        let rates = [
            ("beta", self.beta),
            ("kappa_a", self.kappa_a),
            ("kappa_s", self.kappa_s),
            ("presymptomatic_rate", f.presymptomatic_rate),
            ("hospitalization_rate", f.hospitalization_rate),
            ("hospital_exit_rate", f.hospital_exit_rate),
            ("icu_exit_rate", f.icu_exit_rate),
            ("recovery_rate", f.recovery_rate),
        ];
        for (name, v) in rates {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be a finite non-negative rate, got {v}")));
            }
        }
        let fractions = [
            ("symptomatic_fraction", f.symptomatic_fraction),
            ("severe_fraction", f.severe_fraction),
            ("detection_fraction", f.detection_fraction),
            ("detected_infectiousness", f.detected_infectiousness),
            ("critical_fraction", f.critical_fraction),
            ("death_fraction", f.death_fraction),
        ];
        for (name, v) in fractions {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if f.population < 1 {
            return Err(Error::invalid("population must be at least 1"));
        }
        if f.initial_exposed > f.population {
            return Err(Error::invalid("initial_exposed exceeds the population"));
        }
        Ok(())
    }
}

/// Physical ranges of the three calibration inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParamRanges {
    pub beta: (f64, f64),
    pub kappa_a: (f64, f64),
    pub kappa_s: (f64, f64),
}

impl Default for ParamRanges {
    fn default() -> Self {
        ParamRanges {
            beta: (0.1, 1.0),
            kappa_a: (0.1, 0.5),
            kappa_s: (0.1, 0.5),
        }
    }
}

impl ParamRanges {
    fn as_array(&self) -> [(f64, f64); 3] {
        [self.beta, self.kappa_a, self.kappa_s]
    }

    pub fn validate(&self) -> Result<()> {
        for (lo, hi) in self.as_array() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi && lo >= 0.0) {
                return Err(Error::invalid(format!("invalid parameter range [{lo}, {hi}]")));
            }
        }
        Ok(())
    }
}

/// Maps `u` in the unit cube to `(beta, kappa_a, kappa_s)`.
pub fn from_unit_cube(u: &[f64], ranges: &ParamRanges, fixed: &FixedBlock) -> Result<SeirParams> {
    if u.len() != 3 {
        return Err(Error::invalid(format!("expected 3 unit-cube coordinates, got {}", u.len())));
    }
    if let Some(v) = u.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::invalid(format!("unit-cube coordinate {v} outside [0, 1]")));
    }
    ranges.validate()?;
    let [b, ka, ks] = ranges.as_array();
    let map = |(lo, hi): (f64, f64), v: f64| lo + v * (hi - lo);
    Ok(SeirParams {
        beta: map(b, u[0]),
        kappa_a: map(ka, u[1]),
        kappa_s: map(ks, u[2]),
        fixed: fixed.clone(),
    })
}

pub fn to_unit_cube(params: &SeirParams, ranges: &ParamRanges) -> Result<[f64; 3]> {
    ranges.validate()?;
    let vals = [params.beta, params.kappa_a, params.kappa_s];
    let mut u = [0.0; 3];
    for (i, ((lo, hi), v)) in ranges.as_array().into_iter().zip(vals).enumerate() {
        if !(lo..=hi).contains(&v) {
            return Err(Error::invalid(format!("parameter {v} outside its range [{lo}, {hi}]")));
        }
        u[i] = (v - lo) / (hi - lo);
    }
    Ok(u)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CompartmentState {
    pub s: u64,
    pub e: u64,
    pub as_u: u64,
    pub as_d: u64,
    pub p_u: u64,
    pub p_d: u64,
    pub sm_u: u64,
    pub sm_d: u64,
    pub ss_u: u64,
    pub ss_d: u64,
    pub h: u64,
    pub c: u64,
    pub hp: u64,
    pub d: u64,
    pub r: u64,
    pub cum_hosp: u64,
    pub cum_death: u64,
}

impl CompartmentState {
    pub fn initial(fixed: &FixedBlock) -> Self {
        CompartmentState {
            s: fixed.population - fixed.initial_exposed,
            e: fixed.initial_exposed,
            ..Default::default()
        }
    }

    pub fn compartments(&self) -> [u64; 15] {
        [
            self.s, self.e, self.as_u, self.as_d, self.p_u, self.p_d, self.sm_u, self.sm_d, self.ss_u,
            self.ss_d, self.h, self.c, self.hp, self.d, self.r,
        ]
    }

    pub fn total(&self) -> u64 {
        self.compartments().iter().sum()
    }

    /// Advances one day. All flows are computed from the start-of-day state
    /// and consume exactly [`UNIFORMS_PER_DAY`] uniforms.
    pub fn step<R: Rng + ?Sized>(&mut self, p: &SeirParams, rng: &mut R) {
        let f = &p.fixed;
        let mut draw = |n: u64, prob: f64| binomial_inv(n, prob, rng.random::<f64>());
        let exit = |rate: f64| 1.0 - (-rate).exp();
        let share = |a: f64, b: f64| if a + b > 0.0 { a / (a + b) } else { 0.0 };

        let undetected = (self.as_u + self.p_u + self.sm_u + self.ss_u) as f64;
        let detected = (self.as_d + self.p_d + self.sm_d + self.ss_d) as f64;
        let lambda = p.beta * (undetected + f.detected_infectiousness * detected) / f.population as f64;
        let infected = draw(self.s, exit(lambda));

        let to_as_rate = (1.0 - f.symptomatic_fraction) * p.kappa_a;
        let to_p_rate = f.symptomatic_fraction * p.kappa_s;
        let e_out = draw(self.e, exit(to_as_rate + to_p_rate));
        let to_as = draw(e_out, share(to_as_rate, to_p_rate));
        let to_p = e_out - to_as;
        let as_d_in = draw(to_as, f.detection_fraction);
        let p_d_in = draw(to_p, f.detection_fraction);

        let as_u_out = draw(self.as_u, exit(f.recovery_rate));
        let as_d_out = draw(self.as_d, exit(f.recovery_rate));

        let p_u_out = draw(self.p_u, exit(f.presymptomatic_rate));
        let p_u_severe = draw(p_u_out, f.severe_fraction);
        let p_d_out = draw(self.p_d, exit(f.presymptomatic_rate));
        let p_d_severe = draw(p_d_out, f.severe_fraction);

        let sm_u_out = draw(self.sm_u, exit(f.recovery_rate));
        let sm_d_out = draw(self.sm_d, exit(f.recovery_rate));
        let ss_u_out = draw(self.ss_u, exit(f.hospitalization_rate));
        let ss_d_out = draw(self.ss_d, exit(f.hospitalization_rate));

        let h_out = draw(self.h, exit(f.hospital_exit_rate));
        let h_critical = draw(h_out, f.critical_fraction);
        let c_out = draw(self.c, exit(f.icu_exit_rate));
        let c_death = draw(c_out, f.death_fraction);
        let hp_out = draw(self.hp, exit(f.recovery_rate));

        let hosp_in = ss_u_out + ss_d_out;
        self.s -= infected;
        self.e = self.e + infected - e_out;
        self.as_u = self.as_u + (to_as - as_d_in) - as_u_out;
        self.as_d = self.as_d + as_d_in - as_d_out;
        self.p_u = self.p_u + (to_p - p_d_in) - p_u_out;
        self.p_d = self.p_d + p_d_in - p_d_out;
        self.sm_u = self.sm_u + (p_u_out - p_u_severe) - sm_u_out;
        self.sm_d = self.sm_d + (p_d_out - p_d_severe) - sm_d_out;
        self.ss_u = self.ss_u + p_u_severe - ss_u_out;
        self.ss_d = self.ss_d + p_d_severe - ss_d_out;
        self.h = self.h + hosp_in - h_out;
        self.c = self.c + h_critical - c_out;
        self.hp = self.hp + (c_out - c_death) - hp_out;
        self.d += c_death;
        self.r += as_u_out + as_d_out + sm_u_out + sm_d_out + (h_out - h_critical) + hp_out;
        self.cum_hosp += hosp_in;
        self.cum_death += c_death;
    }
}

/// Uniforms drawn by one call to [`CompartmentState::step`].
pub const UNIFORMS_PER_DAY: usize = 21;

/// Inverse CDF of Binomial(n, p) at `u`: the smallest `k` with
/// `P(X <= k) >= u`.
pub fn binomial_inv(n: u64, p: f64, u: f64) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    if p > 0.5 {
        return n - binomial_inv(n, 1.0 - p, 1.0 - u);
    }
    let q = 1.0 - p;
    let ratio = p / q;
    let nf = n as f64;
    if nf * p < 30.0 {
        let mut pmf = (nf * q.ln()).exp();
        let mut cdf = pmf;
        let mut k = 0u64;
        while cdf < u && k < n {
            pmf *= (nf - k as f64) / (k as f64 + 1.0) * ratio;
            k += 1;
            cdf += pmf;
            if pmf == 0.0 && k as f64 > nf * p {
                break;
            }
        }
        return k;
    }
    // Start from the mode and walk outwards.
    let m = (((nf + 1.0) * p).floor() as u64).min(n);
    let mf = m as f64;
    let pmf_m = (ln_gamma(nf + 1.0) - ln_gamma(mf + 1.0) - ln_gamma(nf - mf + 1.0) + mf * p.ln() + (nf - mf) * q.ln()).exp();
    let mut cdf_m = pmf_m;
    let mut pmf = pmf_m;
    let mut k = m;
    while k > 0 {
        pmf *= k as f64 / (nf - k as f64 + 1.0) / ratio;
        k -= 1;
        cdf_m += pmf;
        if pmf < 1e-18 * cdf_m {
            break;
        }
    }
    let mut k = m;
    let mut pmf = pmf_m;
    let mut cdf = cdf_m;
    if u <= cdf {
        while k > 0 && u <= cdf - pmf {
            cdf -= pmf;
            pmf *= k as f64 / (nf - k as f64 + 1.0) / ratio;
            k -= 1;
        }
    } else {
        while cdf < u && k < n {
            pmf *= (nf - k as f64) / (k as f64 + 1.0) * ratio;
            k += 1;
            cdf += pmf;
            if pmf == 0.0 {
                break;
            }
        }
    }
    k
}

/// Daily states for days `0..=horizon_days`.
pub fn run_daily(params: &SeirParams, seed: u64, horizon_days: u32) -> Result<Vec<CompartmentState>> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = CompartmentState::initial(&params.fixed);
    let mut out = Vec::with_capacity(horizon_days as usize + 1);
    out.push(state);
    for _ in 0..horizon_days {
        state.step(params, &mut rng);
        out.push(state);
    }
    Ok(out)
}

/// One simulator run sampled at the output days.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// Unit-cube parameters.
    pub x: Vec<f64>,
    pub seed: u64,
    /// Output days.
    pub times: Vec<u32>,
    pub hosp: Vec<u64>,
    pub death: Vec<u64>,
}

impl Trajectory {
    /// CSV rows `run_id, seed, x1..x3, t, cum_hosp, cum_death`.
    pub fn csv_rows(&self, run_id: usize) -> Vec<String> {
        let xs: Vec<String> = self.x.iter().map(|v| v.to_string()).collect();
        self.times
            .iter()
            .zip(self.hosp.iter().zip(&self.death))
            .map(|(t, (h, d))| format!("{run_id},{},{},{t},{h},{d}", self.seed, xs.join(",")))
            .collect()
    }
}

pub const DEFAULT_HORIZON: u32 = 100;
pub const DEFAULT_OUTPUT_DAYS: [u32; 5] = [20, 40, 60, 80, 100];

pub fn simulate(params: &SeirParams, seed: u64, horizon_days: u32, output_times: &[u32]) -> Result<Trajectory> {
    if output_times.is_empty() {
        return Err(Error::invalid("no output times"));
    }
    if output_times.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("output times must be strictly increasing"));
    }
    let last = *output_times.last().unwrap();
    if last > horizon_days {
        return Err(Error::invalid(format!("output day {last} beyond the {horizon_days}-day horizon")));
    }
    let states = run_daily(params, seed, horizon_days)?;
    let pick = |f: fn(&CompartmentState) -> u64| output_times.iter().map(|&t| f(&states[t as usize])).collect();
    Ok(Trajectory {
        x: Vec::new(),
        seed,
        times: output_times.to_vec(),
        hosp: pick(|s| s.cum_hosp),
        death: pick(|s| s.cum_death),
    })
}
