//! Multi-run protocol reports and their CSV / Markdown renderings.

use std::fmt::Write as _;

use super::metrics::harmonic_mean;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Protocol {
    Zsl,
    Truze,
    Gzsl,
    FewShot,
    BaseNovel,
}

impl Protocol {
    pub const ALL: [Protocol; 5] = [
        Protocol::Zsl,
        Protocol::Truze,
        Protocol::Gzsl,
        Protocol::FewShot,
        Protocol::BaseNovel,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Protocol::Zsl => "zsl",
            Protocol::Truze => "truze",
            Protocol::Gzsl => "gzsl",
            Protocol::FewShot => "fewshot",
            Protocol::BaseNovel => "base-novel",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown protocol `{s}`")))
    }

    /// Names of the paired metrics and their harmonic mean, if any.
    pub fn pair_names(self) -> Option<[&'static str; 3]> {
        match self {
            Protocol::Gzsl => Some(["u", "s", "H"]),
            Protocol::BaseNovel => Some(["base", "novel", "HM"]),
            _ => None,
        }
    }
}

/// Metrics of a single run (one seed, and one K for few-shot).
#[derive(Clone, Debug, PartialEq)]
pub struct RunMetrics {
    pub seed: u64,
    pub k: Option<usize>,
    pub top1: f64,
    pub top5: f64,
    pub mean_class: f64,
    /// `(u, s)` for GZSL, `(base, novel)` for base-to-novel.
    pub pair: Option<(f64, f64)>,
    /// Some label-space class had no evaluation video.
    pub empty_classes: bool,
}

impl RunMetrics {
    /// Harmonic mean of the pair, always recomputed.
    pub fn harmonic(&self) -> Option<f64> {
        self.pair.map(|(a, b)| harmonic_mean(a, b))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summary {
    pub mean: f64,
    /// Population standard deviation; only with at least two runs.
    pub std: Option<f64>,
    pub runs: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = (n >= 2).then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt());
        Self { mean, std, runs: n }
    }

    fn percent(&self) -> String {
        match self.std {
            Some(s) => format!("{:.1} ± {:.1}", 100.0 * self.mean, 100.0 * s),
            None => format!("{:.1}", 100.0 * self.mean),
        }
    }
}

/// Aggregate of the paired metrics. `harmonic` is recomputed from the two
/// means, so it always equals `harmonic_mean(first.mean, second.mean)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairSummary {
    pub first: Summary,
    pub second: Summary,
    /// Spread of the per-run harmonic means.
    pub harmonic_std: Option<f64>,
}

impl PairSummary {
    pub fn harmonic(&self) -> f64 {
        harmonic_mean(self.first.mean, self.second.mean)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolReport {
    pub protocol: Protocol,
    pub runs: Vec<RunMetrics>,
    pub fingerprint: String,
}

impl ProtocolReport {
    pub fn seeds(&self) -> Vec<u64> {
        let mut out: Vec<u64> = Vec::new();
        for r in &self.runs {
            if !out.contains(&r.seed) {
                out.push(r.seed);
            }
        }
        out
    }

    /// Distinct K values in run order (empty unless few-shot).
    pub fn ks(&self) -> Vec<usize> {
        let mut out: Vec<usize> = Vec::new();
        for k in self.runs.iter().filter_map(|r| r.k) {
            if !out.contains(&k) {
                out.push(k);
            }
        }
        out
    }

    fn select(&self, k: Option<usize>) -> impl Iterator<Item = &RunMetrics> {
        self.runs.iter().filter(move |r| k.is_none() || r.k == k)
    }

    pub fn top1(&self, k: Option<usize>) -> Summary {
        Summary::of(&self.select(k).map(|r| r.top1).collect::<Vec<_>>())
    }

    pub fn top5(&self) -> Summary {
        Summary::of(&self.runs.iter().map(|r| r.top5).collect::<Vec<_>>())
    }

    pub fn mean_class(&self) -> Summary {
        Summary::of(&self.runs.iter().map(|r| r.mean_class).collect::<Vec<_>>())
    }

    pub fn pair(&self) -> Option<PairSummary> {
        let pairs: Vec<(f64, f64)> = self.runs.iter().map(|r| r.pair).collect::<Option<_>>()?;
        if pairs.is_empty() {
            return None;
        }
        let first = Summary::of(&pairs.iter().map(|p| p.0).collect::<Vec<_>>());
        let second = Summary::of(&pairs.iter().map(|p| p.1).collect::<Vec<_>>());
        let h = Summary::of(&pairs.iter().map(|p| harmonic_mean(p.0, p.1)).collect::<Vec<_>>());
        Some(PairSummary {
            first,
            second,
            harmonic_std: h.std,
        })
    }

    /// One row per (run, metric): `protocol,seed,k,metric,value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("protocol,seed,k,metric,value\n");
        for r in &self.runs {
            let k = r.k.map(|k| k.to_string()).unwrap_or_default();
            let mut row = |metric: &str, value: f64| {
                let _ = writeln!(out, "{},{},{},{},{}", self.protocol.name(), r.seed, k, metric, value);
            };
            row("top1", r.top1);
            if self.protocol != Protocol::FewShot {
                row("top5", r.top5);
                row("mean_class", r.mean_class);
            }
            if let (Some([a, b, h]), Some((x, y))) = (self.protocol.pair_names(), r.pair) {
                row(a, x);
                row(b, y);
                row(h, harmonic_mean(x, y));
            }
        }
        out
    }

    /// Parses the output of [`Self::to_csv`]. Harmonic-mean rows are
    /// ignored and recomputed from their inputs.
    pub fn from_csv(text: &str, fingerprint: &str) -> Result<Self> {
        let bad = |line: usize, what: &str| Error::Config(format!("report csv line {line}: {what}"));
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, "protocol,seed,k,metric,value")) => {}
            _ => return Err(bad(1, "missing header protocol,seed,k,metric,value")),
        }
        let mut protocol = None;
        let mut runs: Vec<RunMetrics> = Vec::new();
        for (i, line) in lines {
            let n = i + 1;
            let cells: Vec<&str> = line.split(',').collect();
            let [p, seed, k, metric, value] = cells[..] else {
                return Err(bad(n, "expected 5 cells"));
            };
            let p = Protocol::parse(p)?;
            if *protocol.get_or_insert(p) != p {
                return Err(bad(n, "mixed protocols"));
            }
            let seed: u64 = seed.parse().map_err(|_| bad(n, "bad seed"))?;
            let k: Option<usize> = if k.is_empty() {
                None
            } else {
                Some(k.parse().map_err(|_| bad(n, "bad k"))?)
            };
            let value: f64 = value.parse().map_err(|_| bad(n, "bad value"))?;
            let run = match runs.last_mut() {
                Some(r) if r.seed == seed && r.k == k && metric != "top1" => r,
                _ => {
                    runs.push(RunMetrics {
                        seed,
                        k,
                        top1: 0.0,
                        top5: 0.0,
                        mean_class: 0.0,
                        pair: None,
                        empty_classes: false,
                    });
                    runs.last_mut().expect("just pushed")
                }
            };
            let names = p.pair_names();
            match metric {
                "top1" => run.top1 = value,
                "top5" => run.top5 = value,
                "mean_class" => run.mean_class = value,
                m if names.is_some_and(|x| x[0] == m) => run.pair = Some((value, run.pair.map_or(0.0, |q| q.1))),
                m if names.is_some_and(|x| x[1] == m) => run.pair = Some((run.pair.map_or(0.0, |q| q.0), value)),
                m if names.is_some_and(|x| x[2] == m) => {}
                other => return Err(bad(n, &format!("unknown metric `{other}`"))),
            }
        }
        let protocol = protocol.ok_or_else(|| bad(2, "no rows"))?;
        Ok(Self {
            protocol,
            runs,
            fingerprint: fingerprint.to_string(),
        })
    }

    /// LaTeX table rows for the paired protocols, e.g. `Base & Novel & HM`.
    pub fn latex_rows(&self) -> Option<[String; 2]> {
        let pair = self.pair()?;
        let header = match self.protocol {
            Protocol::Gzsl => "u & s & H",
            _ => "Base & Novel & HM",
        };
        Some([
            header.to_string(),
            format!(
                "{:.1} & {:.1} & {:.1}",
                100.0 * pair.first.mean,
                100.0 * pair.second.mean,
                100.0 * pair.harmonic()
            ),
        ])
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        let seeds = self.seeds();
        let _ = writeln!(out, "# {} report\n", self.protocol.name());
        let _ = writeln!(out, "- runs: {}", seeds.len());
        let _ = writeln!(
            out,
            "- seeds: {}",
            seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(", ")
        );
        let _ = writeln!(out, "- config fingerprint: `{}`", self.fingerprint);
        if self.runs.iter().any(|r| r.empty_classes) {
            let _ = writeln!(out, "- warning: some classes had no evaluation videos and were left out of mean-class accuracy");
        }
        out.push('\n');
        match self.protocol {
            Protocol::Zsl | Protocol::Truze => {
                let headline = if self.protocol == Protocol::Truze { "mean-class" } else { "top-1" };
                let _ = writeln!(out, "Headline metric: {headline} (all values in %, mean ± population std).\n");
                out.push_str("| Top-1 | Top-5 | Mean-class |\n|---|---|---|\n");
                let _ = writeln!(
                    out,
                    "| {} | {} | {} |",
                    self.top1(None).percent(),
                    self.top5().percent(),
                    self.mean_class().percent()
                );
            }
            Protocol::Gzsl | Protocol::BaseNovel => {
                let [a, b, h] = self.protocol.pair_names().expect("paired protocol");
                let title = |s: &str| {
                    let mut c = s.chars();
                    c.next().map(|f| f.to_uppercase().collect::<String>() + c.as_str()).unwrap_or_default()
                };
                let _ = writeln!(out, "| {} | {} | {} |\n|---|---|---|", title(a), title(b), h);
                if let Some(p) = self.pair() {
                    let hs = Summary {
                        mean: p.harmonic(),
                        std: p.harmonic_std,
                        runs: p.first.runs,
                    };
                    let _ = writeln!(out, "| {} | {} | {} |", p.first.percent(), p.second.percent(), hs.percent());
                }
            }
            Protocol::FewShot => {
                let ks = self.ks();
                out.push_str("| Method |");
                for k in &ks {
                    let _ = write!(out, " K={k} |");
                }
                out.push_str("\n|---|");
                out.push_str(&"---|".repeat(ks.len()));
                out.push_str("\n| TP |");
                for &k in &ks {
                    let _ = write!(out, " {} |", self.top1(Some(k)).percent());
                }
                out.push('\n');
            }
        }
        out
    }
}
