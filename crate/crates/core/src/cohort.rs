//! Synthetic subject cohort: covariate generation matched to the sample
//! moments, the BRET and SVO preference models, and the linear-index
//! distancing propensity used by bot agents.

use crate::error::{Error, Result};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subject {
    pub id: usize,
    pub age: f64,
    pub female: bool,
    pub education: f64,
    pub employed: bool,
    pub religious: bool,
    /// Boxes collected in the bomb risk elicitation task, in [0, 100].
    pub bret_score: f64,
    pub svo_angle: f64,
    pub svo_prosocial: bool,
    pub hubei: bool,
    /// Distance from Wuhan in 100s of km.
    pub distance_wuhan: f64,
    /// Average government response index over the lockdown window.
    pub oxcgrt_avg: f64,
}

/// Sample moments the generator aims at. Defaults reproduce the subject
/// pool: 414 subjects, roughly half from Hubei.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentTargets {
    pub age_mean: f64,
    pub age_sd: f64,
    pub female: f64,
    pub education_mean: f64,
    pub education_sd: f64,
    pub employed: f64,
    pub religious: f64,
    pub bret_mean: f64,
    pub prosocial: f64,
    pub hubei: f64,
    /// Distance distribution inside/outside Hubei (100s of km).
    pub distance_hubei_mean: f64,
    pub distance_hubei_sd: f64,
    pub distance_other_mean: f64,
    pub distance_other_sd: f64,
    /// Index distribution inside/outside Hubei; the two-cluster structure
    /// makes the distance/index correlation negative.
    pub oxcgrt_hubei_mean: f64,
    pub oxcgrt_other_mean: f64,
    pub oxcgrt_sd: f64,
}

impl Default for MomentTargets {
    fn default() -> Self {
        MomentTargets {
            age_mean: 35.13,
            age_sd: 10.23,
            female: 0.47,
            education_mean: 18.7,
            education_sd: 1.48,
            employed: 0.76,
            religious: 0.14,
            bret_mean: 41.76,
            prosocial: 0.49,
            hubei: 0.49,
            distance_hubei_mean: 0.9,
            distance_hubei_sd: 0.7,
            distance_other_mean: 8.8,
            distance_other_sd: 3.5,
            oxcgrt_hubei_mean: 75.8,
            oxcgrt_other_mean: 58.0,
            oxcgrt_sd: 4.0,
        }
    }
}

impl MomentTargets {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("female", self.female),
            ("employed", self.employed),
            ("religious", self.religious),
            ("prosocial", self.prosocial),
            ("hubei", self.hubei),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InfeasibleTarget(format!(
                    "proportion {name} = {p} outside [0, 1]"
                )));
            }
        }
        if !(0.0..=100.0).contains(&self.bret_mean) {
            return Err(Error::InfeasibleTarget(format!(
                "bret_mean = {} outside [0, 100]",
                self.bret_mean
            )));
        }
        for (name, v) in [
            ("age_sd", self.age_sd),
            ("education_sd", self.education_sd),
            ("distance_hubei_sd", self.distance_hubei_sd),
            ("distance_other_sd", self.distance_other_sd),
            ("oxcgrt_sd", self.oxcgrt_sd),
        ] {
            if v < 0.0 {
                return Err(Error::InfeasibleTarget(format!("{name} = {v} is negative")));
            }
        }
        Ok(())
    }
}

fn truncated_normal<R: Rng + ?Sized>(rng: &mut R, mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    let dist = Normal::new(mean, sd).expect("validated sd");
    loop {
        let x = dist.sample(rng);
        if (lo..=hi).contains(&x) {
            return x;
        }
    }
}

/// Empirical-style BRET mixture: a spike at the risk-neutral 50, a cautious
/// low tail, a broad middle band, and a risk-seeking upper band. Mixture mean
/// is about 41.4, near the sample's 41.76 with a comparable spread.
fn draw_bret<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u: f64 = rng.gen();
    let boxes: u32 = if u < 0.20 {
        50
    } else if u < 0.35 {
        rng.gen_range(0..=15)
    } else if u < 0.75 {
        rng.gen_range(12..=48)
    } else {
        rng.gen_range(50..=96)
    };
    f64::from(boxes)
}

/// Draws a seed-deterministic cohort whose sample moments approach the
/// targets as n grows.
pub fn gen_subjects(n: usize, targets: &MomentTargets, seed: u64) -> Result<Vec<Subject>> {
    if n == 0 {
        return Err(Error::InfeasibleTarget("cohort size must be positive".into()));
    }
    targets.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut subjects = Vec::with_capacity(n);
    for id in 0..n {
        let hubei = rng.gen::<f64>() < targets.hubei;
        let (d_mean, d_sd, ox_mean) = if hubei {
            (
                targets.distance_hubei_mean,
                targets.distance_hubei_sd,
                targets.oxcgrt_hubei_mean,
            )
        } else {
            (
                targets.distance_other_mean,
                targets.distance_other_sd,
                targets.oxcgrt_other_mean,
            )
        };
        let prosocial = rng.gen::<f64>() < targets.prosocial;
        let svo_angle = if prosocial {
            rng.gen_range(22.45..57.15)
        } else {
            rng.gen_range(-12.04..22.45)
        };
        subjects.push(Subject {
            id,
            age: truncated_normal(&mut rng, targets.age_mean, targets.age_sd, 18.0, 80.0),
            female: rng.gen::<f64>() < targets.female,
            education: truncated_normal(
                &mut rng,
                targets.education_mean,
                targets.education_sd,
                9.0,
                25.0,
            ),
            employed: rng.gen::<f64>() < targets.employed,
            religious: rng.gen::<f64>() < targets.religious,
            bret_score: draw_bret(&mut rng),
            svo_angle,
            svo_prosocial: prosocial,
            hubei,
            distance_wuhan: truncated_normal(&mut rng, d_mean, d_sd, 0.0, 35.0),
            oxcgrt_avg: truncated_normal(&mut rng, ox_mean, targets.oxcgrt_sd, 0.0, 100.0),
        });
    }
    Ok(subjects)
}

/// Integer argmax over m in [0, 100] of (1 - m/100) * (0.1 m)^r, ties broken
/// toward the smaller m. The continuous optimum is 100 r / (1 + r).
pub fn bret_optimal_boxes(r: f64) -> Result<u32> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::BadRiskExponent(r));
    }
    let utility = |m: u32| (1.0 - f64::from(m) / 100.0) * (0.1 * f64::from(m)).powf(r);
    let mut best = 0u32;
    let mut best_u = utility(0);
    for m in 1..=100u32 {
        let u = utility(m);
        if u > best_u {
            best = m;
            best_u = u;
        }
    }
    Ok(best)
}

/// One BRET play: bomb uniform over the 100 boxes; 0.1 yuan per collected
/// box, nothing if the bomb was collected.
pub fn bret_simulate<R: Rng + ?Sized>(m: u32, rng: &mut R) -> Result<f64> {
    if m > 100 {
        return Err(Error::BadBoxCount(i64::from(m)));
    }
    let bomb = rng.gen_range(0..100u32);
    Ok(if bomb < m { 0.0 } else { 0.1 * f64::from(m) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SvoCategory {
    Altruist,
    Prosocial,
    Individualist,
    Competitive,
}

pub const SVO_ALTRUIST_CUTOFF: f64 = 57.15;
pub const SVO_PROSOCIAL_CUTOFF: f64 = 22.45;
pub const SVO_INDIVIDUALIST_CUTOFF: f64 = -12.04;

/// SVO angle from mean allocations to self and other, plus the category by
/// the standard slider-measure cutoffs.
pub fn svo_classify(mean_self: f64, mean_other: f64) -> Result<(f64, SvoCategory)> {
    let dx = mean_self - 50.0;
    let dy = mean_other - 50.0;
    if dx == 0.0 && dy == 0.0 {
        return Err(Error::UndefinedAngle);
    }
    let angle = dy.atan2(dx).to_degrees();
    Ok((angle, classify_angle(angle)))
}

/// Category of an already-computed SVO angle in degrees.
pub fn classify_angle(angle: f64) -> SvoCategory {
    if angle >= SVO_ALTRUIST_CUTOFF {
        SvoCategory::Altruist
    } else if angle >= SVO_PROSOCIAL_CUTOFF {
        SvoCategory::Prosocial
    } else if angle >= SVO_INDIVIDUALIST_CUTOFF {
        SvoCategory::Individualist
    } else {
        SvoCategory::Competitive
    }
}

/// Treatment state entering the propensity index.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreatmentContext {
    pub fine: bool,
    pub nudge: bool,
    pub superspreader: bool,
}

/// Named coefficient set for the linear-index propensity. The residence term
/// is whichever of "hubei", "distance", or "oxcgrt" the set contains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub name: String,
    pub coeffs: BTreeMap<String, f64>,
}

impl Calibration {
    fn from_pairs(name: &str, pairs: &[(&str, f64)]) -> Self {
        Calibration {
            name: name.to_string(),
            coeffs: pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }

    /// Distance-from-Wuhan specification.
    pub fn m1() -> Self {
        Self::from_pairs(
            "m1",
            &[
                ("intercept", 0.192),
                ("fine", 0.0341),
                ("nudge", 0.0605),
                ("superspreader", -0.0491),
                ("female", 0.0110),
                ("age", 0.0014),
                ("education", 0.0241),
                ("employed", 0.1040),
                ("religious", 0.0344),
                ("risk", -0.0004),
                ("prosocial", 0.0287),
                ("distance", -0.0070),
            ],
        )
    }

    /// Hubei-dummy specification.
    pub fn m2() -> Self {
        Self::from_pairs(
            "m2",
            &[
                ("intercept", 0.101),
                ("fine", 0.0343),
                ("nudge", 0.0603),
                ("superspreader", -0.0494),
                ("female", 0.0060),
                ("age", 0.0018),
                ("education", 0.0243),
                ("employed", 0.1050),
                ("religious", 0.0349),
                ("risk", -0.0004),
                ("prosocial", 0.0286),
                ("hubei", 0.0852),
            ],
        )
    }

    /// Response-index specification.
    pub fn m3() -> Self {
        Self::from_pairs(
            "m3",
            &[
                ("intercept", -0.389),
                ("fine", 0.0343),
                ("nudge", 0.0603),
                ("superspreader", -0.0481),
                ("female", 0.0086),
                ("age", 0.0019),
                ("education", 0.0241),
                ("employed", 0.1030),
                ("religious", 0.0308),
                ("risk", -0.0005),
                ("prosocial", 0.0302),
                ("oxcgrt", 0.0076),
            ],
        )
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "m1" => Ok(Self::m1()),
            "m2" => Ok(Self::m2()),
            "m3" => Ok(Self::m3()),
            other => Err(Error::Other(format!("unknown calibration {other:?}"))),
        }
    }

    /// Flat key=value text form, one coefficient per line.
    pub fn to_text(&self) -> String {
        let mut out = format!("name={}\n", self.name);
        for (k, v) in &self.coeffs {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut name = String::from("custom");
        let mut coeffs = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Other(format!("calibration line {} has no '='", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            if key == "name" {
                name = value.to_string();
            } else {
                let v: f64 = value.parse().map_err(|_| {
                    Error::Other(format!("bad coefficient value {value:?} for {key:?}"))
                })?;
                coeffs.insert(key.to_string(), v);
            }
        }
        Ok(Calibration { name, coeffs })
    }
}

/// Pre-clipping linear index of the distancing propensity.
pub fn propensity_index(
    subject: &Subject,
    context: &TreatmentContext,
    calibration: &Calibration,
) -> Result<f64> {
    let get = |key: &str| -> Result<f64> {
        calibration
            .coeffs
            .get(key)
            .copied()
            .ok_or_else(|| Error::MissingCoefficient(key.to_string()))
    };
    let b = |flag: bool| if flag { 1.0 } else { 0.0 };
    let mut index = get("intercept")?
        + get("fine")? * b(context.fine)
        + get("nudge")? * b(context.nudge)
        + get("superspreader")? * b(context.superspreader)
        + get("female")? * b(subject.female)
        + get("age")? * subject.age
        + get("education")? * subject.education
        + get("employed")? * b(subject.employed)
        + get("religious")? * b(subject.religious)
        + get("risk")? * subject.bret_score
        + get("prosocial")? * b(subject.svo_prosocial);
    if let Some(c) = calibration.coeffs.get("hubei") {
        index += c * b(subject.hubei);
    }
    if let Some(c) = calibration.coeffs.get("distance") {
        index += c * subject.distance_wuhan;
    }
    if let Some(c) = calibration.coeffs.get("oxcgrt") {
        index += c * subject.oxcgrt_avg;
    }
    Ok(index)
}

/// Distancing probability: the linear index clipped to [0, 1].
pub fn propensity(
    subject: &Subject,
    context: &TreatmentContext,
    calibration: &Calibration,
) -> Result<f64> {
    Ok(propensity_index(subject, context, calibration)?.clamp(0.0, 1.0))
}

pub const COHORT_CSV_HEADER: [&str; 12] = [
    "id",
    "age",
    "female",
    "education",
    "employed",
    "religious",
    "bret_score",
    "svo_angle",
    "svo_prosocial",
    "hubei",
    "distance_wuhan",
    "oxcgrt_avg",
];

pub fn write_cohort_csv<W: std::io::Write>(subjects: &[Subject], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COHORT_CSV_HEADER)?;
    for s in subjects {
        let b = |flag: bool| if flag { "1" } else { "0" };
        w.write_record([
            s.id.to_string(),
            format!("{}", s.age),
            b(s.female).to_string(),
            format!("{}", s.education),
            b(s.employed).to_string(),
            b(s.religious).to_string(),
            format!("{}", s.bret_score),
            format!("{}", s.svo_angle),
            b(s.svo_prosocial).to_string(),
            b(s.hubei).to_string(),
            format!("{}", s.distance_wuhan),
            format!("{}", s.oxcgrt_avg),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_cohort_csv<R: std::io::Read>(input: R) -> Result<Vec<Subject>> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers()?.clone();
    for want in COHORT_CSV_HEADER {
        if !headers.iter().any(|h| h == want) {
            return Err(Error::MissingCsvColumn(want.to_string()));
        }
    }
    let idx = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let mut subjects = Vec::new();
    for record in r.records() {
        let record = record?;
        let field = |name: &str| -> Result<f64> {
            record[idx(name)]
                .parse()
                .map_err(|_| Error::Other(format!("bad value in column {name:?}")))
        };
        subjects.push(Subject {
            id: field("id")? as usize,
            age: field("age")?,
            female: field("female")? != 0.0,
            education: field("education")?,
            employed: field("employed")? != 0.0,
            religious: field("religious")? != 0.0,
            bret_score: field("bret_score")?,
            svo_angle: field("svo_angle")?,
            svo_prosocial: field("svo_prosocial")? != 0.0,
            hubei: field("hubei")? != 0.0,
            distance_wuhan: field("distance_wuhan")?,
            oxcgrt_avg: field("oxcgrt_avg")?,
        });
    }
    Ok(subjects)
}
