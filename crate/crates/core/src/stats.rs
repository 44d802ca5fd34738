//! Evaluation arithmetic for the pre/post knowledge tests: descriptive
//! statistics, mean-centered Levene's test and pooled/Welch independent
//! samples t-tests, with the published raw scores embedded.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor, StudentsT};

use crate::error::{Error, Result};

/// Highest score on the seven-question knowledge test.
pub const MAX_SCORE: u32 = 7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySample {
    pub group_name: String,
    pub scores: Vec<u32>,
}

impl StudySample {
    pub fn new(group_name: impl Into<String>, scores: Vec<u32>) -> Result<Self> {
        let group_name = group_name.into();
        if scores.is_empty() {
            return Err(Error::Config(format!("group {group_name} has no scores")));
        }
        if let Some(s) = scores.iter().find(|&&s| s > MAX_SCORE) {
            return Err(Error::Config(format!(
                "group {group_name}: score {s} outside 0..={MAX_SCORE}"
            )));
        }
        Ok(StudySample { group_name, scores })
    }

    fn values(&self) -> Vec<f64> {
        self.scores.iter().map(|&s| s as f64).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatsSummary {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub se: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub df: f64,
    pub p_two_tailed: f64,
    pub mean_difference: f64,
    pub se_difference: f64,
    pub ci95: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TTestVariant {
    Pooled,
    Welch,
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample variance with the `n − 1` denominator.
fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64
}

fn summarize(x: &[f64]) -> Result<StatsSummary> {
    if x.len() < 2 {
        return Err(Error::Degenerate(format!("need n ≥ 2, got {}", x.len())));
    }
    let sd = variance(x).sqrt();
    Ok(StatsSummary {
        n: x.len(),
        mean: mean(x),
        sd,
        se: sd / (x.len() as f64).sqrt(),
    })
}

pub fn describe(sample: &StudySample) -> Result<StatsSummary> {
    summarize(&sample.values())
}

pub fn student_t_cdf(t: f64, df: f64) -> Result<f64> {
    if df.is_nan() || df <= 0.0 {
        return Err(Error::Config(format!(
            "degrees of freedom must be > 0, got {df}"
        )));
    }
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Config(e.to_string()))?;
    Ok(dist.cdf(t))
}

pub fn f_cdf(f: f64, df1: f64, df2: f64) -> Result<f64> {
    if !(df1 > 0.0 && df2 > 0.0) {
        return Err(Error::Config(format!(
            "degrees of freedom must be > 0, got ({df1}, {df2})"
        )));
    }
    if f <= 0.0 {
        return Ok(0.0);
    }
    if f.is_infinite() {
        return Ok(1.0);
    }
    let dist = FisherSnedecor::new(df1, df2).map_err(|e| Error::Config(e.to_string()))?;
    Ok(dist.cdf(f))
}

fn t_quantile(p: f64, df: f64) -> Result<f64> {
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Config(e.to_string()))?;
    Ok(dist.inverse_cdf(p))
}

fn two_tailed(t: f64, df: f64) -> Result<f64> {
    if t.is_infinite() {
        return Ok(0.0);
    }
    Ok((2.0 * (1.0 - student_t_cdf(t.abs(), df)?)).clamp(0.0, 1.0))
}

/// Levene's test with deviations from each group's mean. Only `statistic`,
/// `df` (the denominator degrees of freedom; numerator is 1) and
/// `p_two_tailed` (the upper F tail) are meaningful; the difference fields
/// are zero.
///
/// When every deviation equals its group's mean deviation the within-group
/// sum of squares vanishes: `F = +∞, p = 0` if the group means of the
/// deviations differ, `F = 0, p = 1` if they coincide.
pub fn levene_test(g1: &StudySample, g2: &StudySample) -> Result<TestResult> {
    let (a, b) = (g1.values(), g2.values());
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Degenerate(
            "Levene's test needs n ≥ 2 per group".into(),
        ));
    }
    let dev = |x: &[f64]| {
        let m = mean(x);
        x.iter().map(|v| (v - m).abs()).collect::<Vec<_>>()
    };
    let (za, zb) = (dev(&a), dev(&b));
    let n = (za.len() + zb.len()) as f64;
    let grand = (za.iter().sum::<f64>() + zb.iter().sum::<f64>()) / n;
    let (ma, mb) = (mean(&za), mean(&zb));
    let between = za.len() as f64 * (ma - grand).powi(2) + zb.len() as f64 * (mb - grand).powi(2);
    let within: f64 = za.iter().map(|z| (z - ma).powi(2)).sum::<f64>()
        + zb.iter().map(|z| (z - mb).powi(2)).sum::<f64>();
    let df2 = n - 2.0;
    let (statistic, p) = if between == 0.0 {
        (0.0, 1.0)
    } else if within == 0.0 {
        (f64::INFINITY, 0.0)
    } else {
        let f = between / (within / df2);
        (f, 1.0 - f_cdf(f, 1.0, df2)?)
    };
    Ok(TestResult {
        statistic,
        df: df2,
        p_two_tailed: p.clamp(0.0, 1.0),
        mean_difference: 0.0,
        se_difference: 0.0,
        ci95: [0.0, 0.0],
    })
}

/// Independent samples t-test of `mean(g1) − mean(g2)`. When both groups
/// have zero variance the standard error is zero: equal means give
/// `t = 0, p = 1`; different means give `t = ±∞, p = 0`, and Welch falls
/// back to the pooled degrees of freedom.
pub fn t_test(g1: &StudySample, g2: &StudySample, variant: TTestVariant) -> Result<TestResult> {
    let (a, b) = (g1.values(), g2.values());
    let (s1, s2) = (summarize(&a)?, summarize(&b)?);
    let (n1, n2) = (s1.n as f64, s2.n as f64);
    let (v1, v2) = (s1.sd * s1.sd, s2.sd * s2.sd);
    let md = s1.mean - s2.mean;
    let pooled_df = n1 + n2 - 2.0;
    let (se, df) = match variant {
        TTestVariant::Pooled => {
            let sp2 = ((n1 - 1.0) * v1 + (n2 - 1.0) * v2) / pooled_df;
            ((sp2 * (1.0 / n1 + 1.0 / n2)).sqrt(), pooled_df)
        }
        TTestVariant::Welch => {
            let (w1, w2) = (v1 / n1, v2 / n2);
            let se = (w1 + w2).sqrt();
            let df = if w1 + w2 == 0.0 {
                pooled_df
            } else {
                (w1 + w2).powi(2) / (w1 * w1 / (n1 - 1.0) + w2 * w2 / (n2 - 1.0))
            };
            (se, df)
        }
    };
    if se == 0.0 {
        let (t, p) = if md == 0.0 {
            (0.0, 1.0)
        } else {
            (md.signum() * f64::INFINITY, 0.0)
        };
        return Ok(TestResult {
            statistic: t,
            df,
            p_two_tailed: p,
            mean_difference: md,
            se_difference: 0.0,
            ci95: [md, md],
        });
    }
    let t = md / se;
    let half = t_quantile(0.975, df)? * se;
    Ok(TestResult {
        statistic: t,
        df,
        p_two_tailed: two_tailed(t, df)?,
        mean_difference: md,
        se_difference: se,
        ci95: [md - half, md + half],
    })
}

// ---------------------------------------------------------------------------
// Score tables
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub group: String,
    pub pid: u32,
    pub pre: u32,
    pub post: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Pre,
    Post,
}

/// Pre/post scores for any number of groups, rows in input order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StudyData {
    pub rows: Vec<ScoreRow>,
}

pub const SCROLLYTELLING: &str = "scrollytelling";
pub const ONLINE_ARTICLES: &str = "online_articles";

const ONLINE_PRE: [u32; 24] = [
    2, 4, 4, 4, 4, 2, 3, 3, 4, 3, 3, 3, 5, 3, 4, 2, 4, 4, 4, 1, 0, 3, 1, 3,
];
const ONLINE_POST: [u32; 24] = [
    3, 3, 5, 4, 3, 3, 4, 4, 3, 3, 3, 3, 3, 2, 4, 4, 3, 2, 6, 7, 6, 7, 6, 4,
];
const SCROLLY_PRE: [u32; 26] = [
    2, 1, 3, 3, 3, 4, 3, 2, 4, 3, 4, 1, 1, 5, 3, 3, 4, 4, 3, 4, 3, 5, 2, 2, 2, 2,
];
const SCROLLY_POST: [u32; 26] = [
    7, 5, 7, 7, 5, 3, 6, 7, 6, 2, 7, 7, 7, 7, 7, 5, 5, 5, 7, 5, 7, 7, 6, 7, 2, 6,
];

/// The published raw scores by participant id: scrollytelling first, then
/// online articles.
pub fn embedded_study_data() -> StudyData {
    let group = |name: &str, pre: &[u32], post: &[u32]| {
        pre.iter()
            .zip(post)
            .enumerate()
            .map(|(i, (&pre, &post))| ScoreRow {
                group: name.to_owned(),
                pid: i as u32 + 1,
                pre,
                post,
            })
            .collect::<Vec<_>>()
    };
    let mut rows = group(SCROLLYTELLING, &SCROLLY_PRE, &SCROLLY_POST);
    rows.extend(group(ONLINE_ARTICLES, &ONLINE_PRE, &ONLINE_POST));
    StudyData { rows }
}

impl StudyData {
    pub fn new(rows: Vec<ScoreRow>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for r in &rows {
            if r.pre > MAX_SCORE || r.post > MAX_SCORE {
                return Err(Error::Config(format!(
                    "{} pid {}: score outside 0..={MAX_SCORE}",
                    r.group, r.pid
                )));
            }
            if !seen.insert((r.group.as_str(), r.pid)) {
                return Err(Error::Config(format!(
                    "{} pid {} appears twice",
                    r.group, r.pid
                )));
            }
        }
        Ok(StudyData { rows })
    }

    /// Group names in order of first appearance.
    pub fn groups(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.group.as_str()) {
                out.push(&r.group);
            }
        }
        out
    }

    pub fn sample(&self, group: &str, phase: Phase) -> Result<StudySample> {
        let scores = self
            .rows
            .iter()
            .filter(|r| r.group == group)
            .map(|r| match phase {
                Phase::Pre => r.pre,
                Phase::Post => r.post,
            })
            .collect();
        StudySample::new(group, scores)
    }

    /// Reads `group,pid,pre,post` with a header row.
    pub fn from_csv(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["group", "pid", "pre", "post"] {
            return Err(Error::Config(format!(
                "expected header group,pid,pre,post, got {}",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let rows = rdr
            .deserialize()
            .collect::<std::result::Result<Vec<ScoreRow>, _>>()?;
        StudyData::new(rows)
    }

    pub fn to_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStatistics {
    pub group: String,
    pub n: usize,
    pub pre_test_mean: f64,
    pub post_test_mean: f64,
    pub std_deviation: f64,
    pub se_mean: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeveneRow {
    pub f: f64,
    pub sig: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTestRow {
    pub t: f64,
    pub df: f64,
    pub sig_two_tailed: f64,
    pub mean_difference: f64,
    pub std_error_difference: f64,
    pub ci95_lower: f64,
    pub ci95_upper: f64,
}

impl From<TestResult> for TTestRow {
    fn from(r: TestResult) -> Self {
        TTestRow {
            t: r.statistic,
            df: r.df,
            sig_two_tailed: r.p_two_tailed,
            mean_difference: r.mean_difference,
            std_error_difference: r.se_difference,
            ci95_lower: r.ci95[0],
            ci95_upper: r.ci95[1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndependentSamplesTest {
    pub levene: LeveneRow,
    pub equal_variances_assumed: TTestRow,
    pub equal_variances_not_assumed: TTestRow,
}

/// Group statistics (sd and se of the post test) and the post-test
/// comparison of the first group against the second.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub group_statistics: Vec<GroupStatistics>,
    pub independent_samples_test: IndependentSamplesTest,
}

pub fn study_report(data: &StudyData) -> Result<StudyReport> {
    let groups = data.groups();
    if groups.len() != 2 {
        return Err(Error::Config(format!(
            "expected exactly 2 groups, found {}",
            groups.len()
        )));
    }
    let mut stats = Vec::new();
    let mut post = Vec::new();
    for g in &groups {
        let pre = describe(&data.sample(g, Phase::Pre)?)?;
        let sample = data.sample(g, Phase::Post)?;
        let s = describe(&sample)?;
        stats.push(GroupStatistics {
            group: g.to_string(),
            n: s.n,
            pre_test_mean: pre.mean,
            post_test_mean: s.mean,
            std_deviation: s.sd,
            se_mean: s.se,
        });
        post.push(sample);
    }
    let lev = levene_test(&post[0], &post[1])?;
    Ok(StudyReport {
        group_statistics: stats,
        independent_samples_test: IndependentSamplesTest {
            levene: LeveneRow {
                f: lev.statistic,
                sig: lev.p_two_tailed,
            },
            equal_variances_assumed: t_test(&post[0], &post[1], TTestVariant::Pooled)?.into(),
            equal_variances_not_assumed: t_test(&post[0], &post[1], TTestVariant::Welch)?.into(),
        },
    })
}
