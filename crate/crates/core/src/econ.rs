//! Regression pipeline: panel construction from session logs, linear
//! probability models with group-clustered errors, Swamy-Arora random
//! effects, logit/probit maximum likelihood, average marginal effects, and
//! fully interacted subgroup models.

use crate::cohort::Subject;
use crate::error::{Error, Result};
use crate::graph::{EnvironmentKind, HUB};
use crate::session::{Intervention, Part, SessionLog};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelRow {
    pub subject_id: usize,
    pub group_id: usize,
    pub part: Part,
    /// 1-based round within the part.
    pub round: usize,
    /// Binary distancing outcome.
    pub y: f64,
    pub covariates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelDataset {
    pub covariate_names: Vec<String>,
    pub rows: Vec<PanelRow>,
}

impl PanelDataset {
    pub fn column(&self, name: &str) -> Result<usize> {
        self.covariate_names
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    pub fn n_subjects(&self) -> usize {
        let mut ids: Vec<usize> = self.rows.iter().map(|r| r.subject_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    }

    pub fn n_clusters(&self) -> usize {
        let mut ids: Vec<usize> = self.rows.iter().map(|r| r.group_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PanelOptions {
    /// Rounds discarded at the start of each part (10 for the main
    /// specifications, 0 for the all-rounds robustness variant).
    pub drop_first: usize,
    /// Replace the environment dummy with per-round hub/recipient dummies.
    pub role_dummies: bool,
}

impl Default for PanelOptions {
    fn default() -> Self {
        PanelOptions {
            drop_first: 10,
            role_dummies: false,
        }
    }
}

/// Covariate order of the default specification.
pub const PANEL_COVARIATES: [&str; 11] = [
    "fine",
    "nudge",
    "superspreader",
    "female",
    "age",
    "education",
    "employed",
    "religious",
    "risk",
    "prosocial",
    "hubei",
];

/// Long-format panel: one row per (subject, part, kept round). Subjects are
/// matched by global id `group_index * 6 + agent_id`; agents without a
/// matching subject record are dropped (listwise deletion). Only agents who
/// made every decision of a part enter that part's rows.
pub fn build_panel(
    logs: &[SessionLog],
    subjects: &[Subject],
    options: &PanelOptions,
) -> Result<PanelDataset> {
    let mut names: Vec<String> = if options.role_dummies {
        vec![
            "fine".into(),
            "nudge".into(),
            "hub".into(),
            "recipient".into(),
        ]
    } else {
        vec!["fine".into(), "nudge".into(), "superspreader".into()]
    };
    names.extend(
        [
            "female",
            "age",
            "education",
            "employed",
            "religious",
            "risk",
            "prosocial",
            "hubei",
        ]
        .map(String::from),
    );

    let find = |id: usize| subjects.iter().find(|s| s.id == id);
    if !logs.is_empty() && logs.iter().enumerate().all(|(g, log)| {
        log.agents
            .iter()
            .all(|a| find(g * crate::session::AGENTS_PER_GROUP + a.id).is_none())
    }) {
        return Err(Error::Other(
            "no subject ids match the logs' global agent ids".into(),
        ));
    }

    let mut rows = Vec::new();
    for (group_id, log) in logs.iter().enumerate() {
        let env = log.config.environment;
        let superspreader = env == EnvironmentKind::Superspreader;
        for agent in &log.agents {
            let subject_id = group_id * crate::session::AGENTS_PER_GROUP + agent.id;
            let Some(subject) = find(subject_id) else {
                continue;
            };
            let b = |flag: bool| if flag { 1.0 } else { 0.0 };
            for part in [Part::Baseline, Part::Intervention] {
                let Some(seq) = log.role_action_sequence(agent.id, part) else {
                    continue;
                };
                let fine = part == Part::Intervention
                    && log.config.intervention == Intervention::Fine;
                let nudge = part == Part::Intervention
                    && log.config.intervention == Intervention::Nudge;
                for (idx, &(role, action)) in seq.iter().enumerate() {
                    let round = idx + 1;
                    if round <= options.drop_first {
                        continue;
                    }
                    let mut covariates = vec![b(fine), b(nudge)];
                    if options.role_dummies {
                        covariates.push(b(superspreader && role == HUB));
                        covariates.push(b(superspreader && role != HUB));
                    } else {
                        covariates.push(b(superspreader));
                    }
                    covariates.extend([
                        b(subject.female),
                        subject.age,
                        subject.education,
                        b(subject.employed),
                        b(subject.religious),
                        subject.bret_score,
                        b(subject.svo_prosocial),
                        b(subject.hubei),
                    ]);
                    rows.push(PanelRow {
                        subject_id,
                        group_id,
                        part,
                        round,
                        y: b(action),
                        covariates,
                    });
                }
            }
        }
    }
    Ok(PanelDataset {
        covariate_names: names,
        rows,
    })
}

pub fn write_panel_csv<W: std::io::Write>(data: &PanelDataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![
        "subject_id".to_string(),
        "group_id".to_string(),
        "part".to_string(),
        "round".to_string(),
        "y".to_string(),
    ];
    header.extend(data.covariate_names.clone());
    w.write_record(&header)?;
    for row in &data.rows {
        let mut rec = vec![
            row.subject_id.to_string(),
            row.group_id.to_string(),
            match row.part {
                Part::Baseline => "baseline".to_string(),
                Part::Intervention => "intervention".to_string(),
            },
            row.round.to_string(),
            format!("{}", row.y),
        ];
        rec.extend(row.covariates.iter().map(|v| format!("{v}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_panel_csv<R: std::io::Read>(input: R) -> Result<PanelDataset> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers()?.clone();
    let fixed = ["subject_id", "group_id", "part", "round", "y"];
    for want in fixed {
        if !headers.iter().any(|h| h == want) {
            return Err(Error::MissingCsvColumn(want.to_string()));
        }
    }
    let covariate_names: Vec<String> = headers
        .iter()
        .filter(|h| !fixed.contains(h))
        .map(String::from)
        .collect();
    let mut rows = Vec::new();
    for record in r.records() {
        let record = record?;
        let get = |name: &str| -> &str {
            &record[headers.iter().position(|h| h == name).unwrap()]
        };
        let parse = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::Other(format!("bad numeric field {s:?}")))
        };
        let part = match get("part") {
            "baseline" => Part::Baseline,
            "intervention" => Part::Intervention,
            other => return Err(Error::Other(format!("bad part {other:?}"))),
        };
        let mut covariates = Vec::with_capacity(covariate_names.len());
        for name in &covariate_names {
            covariates.push(parse(get(name))?);
        }
        rows.push(PanelRow {
            subject_id: parse(get("subject_id"))? as usize,
            group_id: parse(get("group_id"))? as usize,
            part,
            round: parse(get("round"))? as usize,
            y: parse(get("y"))?,
            covariates,
        });
    }
    Ok(PanelDataset {
        covariate_names,
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelTag {
    Lpm,
    ReLpm,
    Logit,
    Probit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClusterCorrection {
    /// G/(G-1) * (N-1)/(N-K) small-sample factor (default convention).
    Cr1,
    Cr0,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model_tag: ModelTag,
    /// "intercept" followed by the requested covariates.
    pub names: Vec<String>,
    pub beta: Vec<f64>,
    /// Row-major covariance matrix.
    pub vcov: Vec<Vec<f64>>,
    pub se: Vec<f64>,
    pub n_obs: usize,
    pub n_subjects: usize,
    pub n_clusters: usize,
    /// Estimator diagnostics (clamped variance components, damping, ...).
    pub notes: Vec<String>,
}

impl FitResult {
    pub fn coefficient(&self, name: &str) -> Result<(f64, f64)> {
        let i = self
            .names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))?;
        Ok((self.beta[i], self.se[i]))
    }
}

/// Intercept-first design matrix for the requested covariates.
fn design(data: &PanelDataset, formula: &[&str]) -> Result<(DMatrix<f64>, DVector<f64>, Vec<String>)> {
    let cols: Vec<usize> = formula
        .iter()
        .map(|name| data.column(name))
        .collect::<Result<_>>()?;
    let n = data.rows.len();
    let k = cols.len() + 1;
    let mut x = DMatrix::zeros(n, k);
    let mut y = DVector::zeros(n);
    for (i, row) in data.rows.iter().enumerate() {
        x[(i, 0)] = 1.0;
        for (j, &c) in cols.iter().enumerate() {
            x[(i, j + 1)] = row.covariates[c];
        }
        y[i] = row.y;
    }
    let mut names = vec!["intercept".to_string()];
    names.extend(formula.iter().map(|s| s.to_string()));
    Ok((x, y, names))
}

/// Flags columns lying in the span of the preceding ones (modified
/// Gram-Schmidt residual test).
fn collinear_columns(x: &DMatrix<f64>, names: &[String]) -> Vec<String> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut flagged = Vec::new();
    for j in 0..x.ncols() {
        let col = x.column(j).into_owned();
        let norm0 = col.norm();
        let mut resid = col;
        for b in &basis {
            let proj = b.dot(&resid);
            resid -= b * proj;
        }
        if resid.norm() <= 1e-8 * norm0.max(1.0) {
            flagged.push(names[j].clone());
        } else {
            let n = resid.norm();
            basis.push(resid / n);
        }
    }
    flagged
}

fn cluster_ids(data: &PanelDataset) -> Vec<usize> {
    data.rows.iter().map(|r| r.group_id).collect()
}

fn sandwich(
    bread: &DMatrix<f64>,
    x: &DMatrix<f64>,
    scores: &DVector<f64>,
    clusters: &[usize],
    factor: f64,
) -> DMatrix<f64> {
    let k = x.ncols();
    let mut ids: Vec<usize> = clusters.to_vec();
    ids.sort_unstable();
    ids.dedup();
    let mut meat = DMatrix::zeros(k, k);
    for g in &ids {
        let mut sg: DVector<f64> = DVector::zeros(k);
        for (i, cid) in clusters.iter().enumerate() {
            if cid == g {
                for j in 0..k {
                    sg[j] += x[(i, j)] * scores[i];
                }
            }
        }
        meat += &sg * sg.transpose();
    }
    bread * meat * bread * factor
}

fn finish_fit(
    model_tag: ModelTag,
    names: Vec<String>,
    beta: DVector<f64>,
    vcov: DMatrix<f64>,
    data: &PanelDataset,
    notes: Vec<String>,
) -> FitResult {
    let k = beta.len();
    let se: Vec<f64> = (0..k).map(|i| vcov[(i, i)].max(0.0).sqrt()).collect();
    FitResult {
        model_tag,
        names,
        beta: beta.iter().copied().collect(),
        vcov: (0..k)
            .map(|i| (0..k).map(|j| vcov[(i, j)]).collect())
            .collect(),
        se,
        n_obs: data.rows.len(),
        n_subjects: data.n_subjects(),
        n_clusters: data.n_clusters(),
        notes,
    }
}

/// OLS with cluster-robust covariance at the group level.
pub fn fit_lpm_cluster(
    data: &PanelDataset,
    formula: &[&str],
    correction: ClusterCorrection,
) -> Result<FitResult> {
    let (x, y, names) = design(data, formula)?;
    fit_lpm_cluster_design(data, x, y, names, ModelTag::Lpm, correction, Vec::new())
}

fn fit_lpm_cluster_design(
    data: &PanelDataset,
    x: DMatrix<f64>,
    y: DVector<f64>,
    names: Vec<String>,
    model_tag: ModelTag,
    correction: ClusterCorrection,
    notes: Vec<String>,
) -> Result<FitResult> {
    let n = x.nrows();
    let k = x.ncols();
    if n < k {
        return Err(Error::RankDeficient(vec!["n < k".into()]));
    }
    let clusters = cluster_ids(data);
    let g = data.n_clusters();
    if g < 2 {
        return Err(Error::TooFewClusters { need: 2, got: g });
    }
    let flagged = collinear_columns(&x, &names);
    if !flagged.is_empty() {
        return Err(Error::RankDeficient(flagged));
    }
    let xtx = x.transpose() * &x;
    let bread = xtx
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::RankDeficient(vec!["X'X not invertible".into()]))?;
    let beta = &bread * x.transpose() * &y;
    let resid = &y - &x * &beta;
    let factor = match correction {
        ClusterCorrection::Cr1 => {
            let (gf, nf, kf) = (g as f64, n as f64, k as f64);
            gf / (gf - 1.0) * (nf - 1.0) / (nf - kf)
        }
        ClusterCorrection::Cr0 => 1.0,
    };
    let vcov = sandwich(&bread, &x, &resid, &clusters, factor);
    Ok(finish_fit(model_tag, names, beta, vcov, data, notes))
}

/// Swamy-Arora quasi-demeaned feasible GLS, then the clustered LPM on the
/// transformed data. Degenerates to pooled OLS when the within degrees of
/// freedom vanish or the subject-level variance estimate is non-positive.
pub fn fit_re_lpm(
    data: &PanelDataset,
    formula: &[&str],
    correction: ClusterCorrection,
) -> Result<FitResult> {
    let (x, y, names) = design(data, formula)?;
    let n = x.nrows();
    let k = x.ncols();
    if n == 0 {
        return Err(Error::DegenerateOutcome("empty panel".into()));
    }

    // Subject index blocks.
    let mut subject_rows: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for (i, row) in data.rows.iter().enumerate() {
        subject_rows.entry(row.subject_id).or_default().push(i);
    }
    let m = subject_rows.len();
    let mut notes = Vec::new();

    // Within (fixed-effects) residual variance.
    let within_df = n as isize - m as isize - (k as isize - 1);
    let mut theta_by_subject: std::collections::BTreeMap<usize, f64> = Default::default();
    if within_df <= 0 || subject_rows.values().all(|rows| rows.len() < 2) {
        notes.push("within variance undefined; theta = 0 (pooled OLS)".into());
        for &sid in subject_rows.keys() {
            theta_by_subject.insert(sid, 0.0);
        }
    } else {
        let mut xw = x.clone();
        let mut yw = y.clone();
        for rows in subject_rows.values() {
            let t = rows.len() as f64;
            for j in 0..k {
                let mean = rows.iter().map(|&i| x[(i, j)]).sum::<f64>() / t;
                for &i in rows {
                    xw[(i, j)] -= mean;
                }
            }
            let ymean = rows.iter().map(|&i| y[i]).sum::<f64>() / t;
            for &i in rows {
                yw[i] -= ymean;
            }
        }
        // Demeaning kills the intercept; solve on the slope block.
        let xs = xw.columns(1, k - 1).into_owned();
        let beta_w = (xs.transpose() * &xs)
            .try_inverse()
            .map(|inv| inv * xs.transpose() * &yw);
        let sigma_e2 = match beta_w {
            Some(bw) => {
                let resid = &yw - &xs * bw;
                resid.norm_squared() / within_df as f64
            }
            None => {
                notes.push("within design singular; theta = 0 (pooled OLS)".into());
                f64::NAN
            }
        };
        if sigma_e2.is_nan() {
            for &sid in subject_rows.keys() {
                theta_by_subject.insert(sid, 0.0);
            }
        } else {
            // Between regression on subject means.
            let mut xb = DMatrix::zeros(m, k);
            let mut yb = DVector::zeros(m);
            for (row_i, rows) in subject_rows.values().enumerate() {
                let t = rows.len() as f64;
                for j in 0..k {
                    xb[(row_i, j)] = rows.iter().map(|&i| x[(i, j)]).sum::<f64>() / t;
                }
                yb[row_i] = rows.iter().map(|&i| y[i]).sum::<f64>() / t;
            }
            let t_bar = n as f64 / m as f64;
            let between_df = m as isize - k as isize;
            let sigma_v2 = if between_df <= 0 {
                notes.push("between df <= 0; subject variance set to 0".into());
                0.0
            } else {
                let flagged = collinear_columns(&xb, &names);
                if !flagged.is_empty() {
                    notes.push(format!(
                        "between design collinear in {flagged:?}; subject variance set to 0"
                    ));
                    0.0
                } else {
                    let inv = (xb.transpose() * &xb).try_inverse().unwrap();
                    let bb = inv * xb.transpose() * &yb;
                    let resid = &yb - &xb * bb;
                    let s_between = resid.norm_squared() / between_df as f64;
                    let raw = s_between - sigma_e2 / t_bar;
                    if raw < 0.0 {
                        notes.push(format!(
                            "subject variance estimate {raw:.3e} clamped to 0"
                        ));
                        0.0
                    } else {
                        raw
                    }
                }
            };
            for (sid, rows) in &subject_rows {
                let t = rows.len() as f64;
                let theta = if sigma_v2 == 0.0 {
                    0.0
                } else {
                    1.0 - (sigma_e2 / (sigma_e2 + t * sigma_v2)).sqrt()
                };
                theta_by_subject.insert(*sid, theta);
            }
        }
    }

    // Quasi-demean all columns (the intercept becomes 1 - theta).
    let mut xq = x.clone();
    let mut yq = y.clone();
    for (sid, rows) in &subject_rows {
        let theta = theta_by_subject[sid];
        if theta == 0.0 {
            continue;
        }
        let t = rows.len() as f64;
        for j in 0..k {
            let mean = rows.iter().map(|&i| x[(i, j)]).sum::<f64>() / t;
            for &i in rows {
                xq[(i, j)] -= theta * mean;
            }
        }
        let ymean = rows.iter().map(|&i| y[i]).sum::<f64>() / t;
        for &i in rows {
            yq[i] -= theta * ymean;
        }
    }
    fit_lpm_cluster_design(data, xq, yq, names, ModelTag::ReLpm, correction, notes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Link {
    Logit,
    Probit,
}

/// erf by W. J. Cody's rational approximations (1969), accurate to about
/// 1e-12 in double precision.
pub fn erf(x: f64) -> f64 {
    1.0 - erfc(x)
}

pub fn erfc(x: f64) -> f64 {
    let ax = x.abs();
    let v = if ax < 0.46875 {
        // erf via P/Q on [0, 0.46875).
        const P: [f64; 5] = [
            3.209377589138469472562e3,
            3.774852376853020208137e2,
            1.138641541510501556495e2,
            3.161123743870565596947e0,
            1.857777061846031526730e-1,
        ];
        const Q: [f64; 5] = [
            2.844236833439170622273e3,
            1.282616526077372275645e3,
            2.440246379344441733056e2,
            2.360129095234412093499e1,
            1.0,
        ];
        let z = x * x;
        let mut num = P[4];
        let mut den = Q[4];
        for i in (0..4).rev() {
            num = num * z + P[i];
            den = den * z + Q[i];
        }
        return 1.0 - x * num / den;
    } else if ax < 4.0 {
        const P: [f64; 9] = [
            1.23033935479799725272e3,
            2.05107837782607146532e3,
            1.71204761263407058314e3,
            8.81952221241769090411e2,
            2.98635138197400131132e2,
            6.61191906371416294775e1,
            8.88314979438837594118e0,
            5.64188496988670089180e-1,
            2.15311535474403846343e-8,
        ];
        const Q: [f64; 9] = [
            1.23033935480374942043e3,
            3.43936767414372163696e3,
            4.36261909014324715820e3,
            3.29079923573345962678e3,
            1.62138957456669018874e3,
            5.37181101862009857509e2,
            1.17693950891312499305e2,
            1.57449261107098347253e1,
            1.0,
        ];
        let mut num = P[8];
        let mut den = Q[8];
        for i in (0..8).rev() {
            num = num * ax + P[i];
            den = den * ax + Q[i];
        }
        (-ax * ax).exp() * num / den
    } else if ax < 26.5 {
        const P: [f64; 6] = [
            -6.58749161529837803157e-4,
            -1.60837851487422766278e-2,
            -1.25781726111229246204e-1,
            -3.60344899949804439429e-1,
            -3.05326634961232344035e-1,
            -1.63153871373020978498e-2,
        ];
        const Q: [f64; 6] = [
            2.33520497626869185443e-3,
            6.05183413124413191178e-2,
            5.27905102951428412248e-1,
            1.87295284992346047209e0,
            2.56852019228982242072e0,
            1.0,
        ];
        let z = 1.0 / (ax * ax);
        let mut num = P[5];
        let mut den = Q[5];
        for i in (0..5).rev() {
            num = num * z + P[i];
            den = den * z + Q[i];
        }
        let frac = z * num / den;
        (-ax * ax).exp() * (std::f64::consts::FRAC_1_PI.sqrt() + frac) / ax
    } else {
        0.0
    };
    if x < 0.0 {
        2.0 - v
    } else {
        v
    }
}

/// Standard normal CDF via erfc.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

const MLE_MAX_ITER: usize = 100;
const MLE_GRAD_TOL: f64 = 1e-8;

/// Damped Newton maximum likelihood with a cluster-robust sandwich
/// covariance (factor G/(G-1)).
pub fn fit_binary_mle(data: &PanelDataset, formula: &[&str], link: Link) -> Result<FitResult> {
    let (x, y, names) = design(data, formula)?;
    let n = x.nrows();
    let k = x.ncols();
    if n == 0 {
        return Err(Error::DegenerateOutcome("empty panel".into()));
    }
    let ones = y.iter().filter(|&&v| v == 1.0).count();
    if ones == 0 || ones == n {
        return Err(Error::Separation);
    }
    let flagged = collinear_columns(&x, &names);
    if !flagged.is_empty() {
        return Err(Error::RankDeficient(flagged));
    }
    let g = data.n_clusters();
    if g < 2 {
        return Err(Error::TooFewClusters { need: 2, got: g });
    }

    let loglik = |beta: &DVector<f64>| -> f64 {
        let xb = &x * beta;
        let mut ll = 0.0;
        for i in 0..n {
            let p = match link {
                Link::Logit => logistic(xb[i]),
                Link::Probit => normal_cdf(xb[i]),
            }
            .clamp(1e-12, 1.0 - 1e-12);
            ll += if y[i] == 1.0 { p.ln() } else { (1.0 - p).ln() };
        }
        ll
    };

    let mut beta = DVector::zeros(k);
    let mut notes = Vec::new();
    let mut converged = false;
    for _ in 0..MLE_MAX_ITER {
        let xb = &x * &beta;
        let mut grad = DVector::zeros(k);
        let mut hess = DMatrix::zeros(k, k);
        let mut scores = DVector::zeros(n);
        for i in 0..n {
            let (score_i, w_i) = score_weight(xb[i], y[i], link);
            scores[i] = score_i;
            for a in 0..k {
                grad[a] += x[(i, a)] * score_i;
                for c in 0..k {
                    hess[(a, c)] += x[(i, a)] * w_i * x[(i, c)];
                }
            }
        }
        if grad.amax() < MLE_GRAD_TOL {
            converged = true;
            break;
        }
        let step = hess
            .clone()
            .try_inverse()
            .ok_or(Error::Separation)?
            * &grad;
        // Damping: halve until the likelihood improves. The tolerance is
        // relative so that full Newton steps are still accepted once the
        // improvement falls below float resolution near the optimum.
        let ll0 = loglik(&beta);
        let tol = 1e-9 * ll0.abs().max(1.0);
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand = &beta + &step * scale;
            if loglik(&cand) >= ll0 - tol {
                beta = cand;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            notes.push("line search stalled".into());
            break;
        }
        if scale < 1.0 {
            notes.push(format!("damped step (scale {scale})"));
        }
        if beta.amax() > 1e3 {
            return Err(Error::Separation);
        }
    }
    if !converged {
        // Final gradient check after the last step.
        let xb = &x * &beta;
        let mut grad: DVector<f64> = DVector::zeros(k);
        for i in 0..n {
            let (score_i, _) = score_weight(xb[i], y[i], link);
            for a in 0..k {
                grad[a] += x[(i, a)] * score_i;
            }
        }
        if grad.amax() < MLE_GRAD_TOL {
            converged = true;
        }
    }
    if !converged {
        return Err(Error::NoConvergence(MLE_MAX_ITER));
    }

    // A perfectly classified fit means the likelihood has no interior
    // maximum; the finite beta is an artifact of the stopping rule.
    {
        let xb = &x * &beta;
        let separated = (0..n).all(|i| {
            let p = match link {
                Link::Logit => logistic(xb[i]),
                Link::Probit => normal_cdf(xb[i]),
            };
            (y[i] - p).abs() < 1e-6
        });
        if separated {
            return Err(Error::Separation);
        }
    }

    // Sandwich at the optimum.
    let xb = &x * &beta;
    let mut hess = DMatrix::zeros(k, k);
    let mut scores = DVector::zeros(n);
    for i in 0..n {
        let (score_i, w_i) = score_weight(xb[i], y[i], link);
        scores[i] = score_i;
        for a in 0..k {
            for c in 0..k {
                hess[(a, c)] += x[(i, a)] * w_i * x[(i, c)];
            }
        }
    }
    let bread = hess.try_inverse().ok_or(Error::Separation)?;
    let factor = g as f64 / (g as f64 - 1.0);
    let clusters = cluster_ids(data);
    let vcov = sandwich(&bread, &x, &scores, &clusters, factor);
    let tag = match link {
        Link::Logit => ModelTag::Logit,
        Link::Probit => ModelTag::Probit,
    };
    Ok(finish_fit(tag, names, beta, vcov, data, notes))
}

/// Per-observation score and expected-information weight.
fn score_weight(xb: f64, y: f64, link: Link) -> (f64, f64) {
    match link {
        Link::Logit => {
            let p = logistic(xb);
            (y - p, p * (1.0 - p))
        }
        Link::Probit => {
            // Observed information (always positive), for quadratic Newton
            // convergence; the expected-information variant is only linear
            // under misspecification.
            let d = normal_pdf(xb);
            if y == 1.0 {
                let p = normal_cdf(xb).max(1e-300);
                let r = d / p;
                (r, r * (r + xb))
            } else {
                let q = (1.0 - normal_cdf(xb)).max(1e-300);
                let r = d / q;
                (-r, r * (r - xb))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalEffect {
    pub name: String,
    pub ame: f64,
    pub se: f64,
}

/// Average marginal effects with delta-method standard errors. For the LPM
/// the AME is the coefficient itself.
pub fn average_marginal_effects(
    fit: &FitResult,
    data: &PanelDataset,
    formula: &[&str],
) -> Result<Vec<MarginalEffect>> {
    let k = fit.beta.len();
    match fit.model_tag {
        ModelTag::Lpm | ModelTag::ReLpm => Ok(fit
            .names
            .iter()
            .zip(&fit.beta)
            .zip(&fit.se)
            .skip(1)
            .map(|((name, &b), &se)| MarginalEffect {
                name: name.clone(),
                ame: b,
                se,
            })
            .collect()),
        ModelTag::Logit | ModelTag::Probit => {
            let (x, _, _) = design(data, formula)?;
            let n = x.nrows();
            let beta = DVector::from_column_slice(&fit.beta);
            let xb = &x * &beta;
            // mean_w = mean f'(xb); dmean[j] = mean f''(xb) x_j.
            let mut mean_w = 0.0;
            let mut dmean = DVector::zeros(k);
            for i in 0..n {
                let (w, wprime) = match fit.model_tag {
                    ModelTag::Logit => {
                        let p = logistic(xb[i]);
                        (p * (1.0 - p), p * (1.0 - p) * (1.0 - 2.0 * p))
                    }
                    ModelTag::Probit => {
                        let d = normal_pdf(xb[i]);
                        (d, -xb[i] * d)
                    }
                    _ => unreachable!(),
                };
                mean_w += w;
                for j in 0..k {
                    dmean[j] += wprime * x[(i, j)];
                }
            }
            mean_w /= n as f64;
            dmean /= n as f64;
            let vcov = DMatrix::from_fn(k, k, |i, j| fit.vcov[i][j]);
            let mut out = Vec::new();
            for target in 1..k {
                let ame = fit.beta[target] * mean_w;
                // Jacobian of ame wrt the full coefficient vector.
                let mut jac = DVector::zeros(k);
                for j in 0..k {
                    jac[j] = fit.beta[target] * dmean[j];
                }
                jac[target] += mean_w;
                let var = (jac.transpose() * &vcov * &jac)[(0, 0)].max(0.0);
                out.push(MarginalEffect {
                    name: fit.names[target].clone(),
                    ame,
                    se: var.sqrt(),
                });
            }
            Ok(out)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupEffects {
    pub split_dummy: String,
    /// AMEs for rows with dummy = 0 and dummy = 1 respectively.
    pub group0: Vec<MarginalEffect>,
    pub group1: Vec<MarginalEffect>,
    pub n0: usize,
    pub n1: usize,
}

/// Fits the fully interacted model (every column including the intercept
/// crossed with the split dummy) and reports per-group effects. The
/// coefficient blocks are numerically identical to fitting the two
/// subsamples separately.
pub fn subgroup_effects(
    data: &PanelDataset,
    formula: &[&str],
    split_dummy: &str,
    correction: ClusterCorrection,
) -> Result<SubgroupEffects> {
    let split_col = data.column(split_dummy)?;
    let mut n1 = 0usize;
    let mut n0 = 0usize;
    for row in &data.rows {
        let v = row.covariates[split_col];
        if v == 1.0 {
            n1 += 1;
        } else if v == 0.0 {
            n0 += 1;
        } else {
            return Err(Error::Other(format!(
                "split dummy {split_dummy:?} takes non-binary value {v}"
            )));
        }
    }
    if n0 == 0 || n1 == 0 {
        return Err(Error::OneSidedDummy(split_dummy.to_string()));
    }
    let base: Vec<&str> = formula.iter().copied().filter(|f| *f != split_dummy).collect();
    let (x, y, names) = design(data, &base)?;
    let n = x.nrows();
    let k = x.ncols();
    // Block design: [X * (1 - d) | X * d].
    let mut xi = DMatrix::zeros(n, 2 * k);
    for (i, row) in data.rows.iter().enumerate() {
        let d = row.covariates[split_col];
        for j in 0..k {
            xi[(i, j)] = x[(i, j)] * (1.0 - d);
            xi[(i, k + j)] = x[(i, j)] * d;
        }
    }
    let mut inames: Vec<String> = names.iter().map(|s| format!("{s}:g0")).collect();
    inames.extend(names.iter().map(|s| format!("{s}:g1")));
    let fit = fit_lpm_cluster_design(
        data,
        xi,
        y,
        inames,
        ModelTag::Lpm,
        correction,
        Vec::new(),
    )?;
    let effects = |offset: usize| -> Vec<MarginalEffect> {
        (1..k)
            .map(|j| MarginalEffect {
                name: names[j].clone(),
                ame: fit.beta[offset + j],
                se: fit.se[offset + j],
            })
            .collect()
    };
    Ok(SubgroupEffects {
        split_dummy: split_dummy.to_string(),
        group0: effects(0),
        group1: effects(k),
        n0,
        n1,
    })
}
