use std::collections::HashSet;

use rust_decimal::prelude::FromPrimitive;
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use super::{enumerate_relations, EvalError, Extraction, Extractor, RelationTriple};
use crate::table::TableSet;

const HUNDRED: Decimal = Decimal::ONE_HUNDRED;

fn percent(part: usize, whole: usize) -> Decimal {
    if whole == 0 {
        Decimal::ZERO
    } else {
        HUNDRED * Decimal::from(part) / Decimal::from(whole)
    }
}

/// Count of extracted facts and the percentage found in the tables.
pub fn rg(extracted: &[RelationTriple], table_relations: &HashSet<RelationTriple>) -> (Decimal, Decimal) {
    let supported = extracted.iter().filter(|e| table_relations.contains(e)).count();
    (Decimal::from(extracted.len()), percent(supported, extracted.len()))
}

/// Precision, recall and F1 of `gen` against `gold`, as sets.
pub fn cs(gen: &[RelationTriple], gold: &[RelationTriple]) -> (Decimal, Decimal, Decimal) {
    let gen: HashSet<&RelationTriple> = gen.iter().collect();
    let gold: HashSet<&RelationTriple> = gold.iter().collect();
    let common = gen.intersection(&gold).count();
    let p = percent(common, gen.len());
    let r = percent(common, gold.len());
    // harmonic mean of p and r, computed from counts so that it is exactly
    // symmetric in its arguments
    let f = if common == 0 {
        Decimal::ZERO
    } else {
        percent(2 * common, gen.len() + gold.len())
    };
    (p, r, f)
}

/// Optimal string alignment distance: insertions, deletions,
/// substitutions and transpositions of adjacent elements, with no element
/// edited more than once.
pub fn dld<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let (n, m) = (a.len(), b.len());
    let mut d = vec![vec![0usize; m + 1]; n + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=m {
        d[0][j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let cost = usize::from(a[i - 1] != b[j - 1]);
            let mut best = (d[i - 1][j] + 1)
                .min(d[i][j - 1] + 1)
                .min(d[i - 1][j - 1] + cost);
            if i > 1 && j > 1 && a[i - 1] == b[j - 2] && a[i - 2] == b[j - 1] {
                best = best.min(d[i - 2][j - 2] + 1);
            }
            d[i][j] = best;
        }
    }
    d[n][m]
}

/// Ordering similarity: 100 · (1 − dld / longer length); 100 for two
/// empty sequences.
pub fn co<T: PartialEq>(gen: &[T], gold: &[T]) -> Decimal {
    let longest = gen.len().max(gold.len());
    if longest == 0 {
        return HUNDRED;
    }
    HUNDRED - percent(dld(gen, gold), longest)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleMetrics {
    pub rg_count: Decimal,
    pub rg_precision: Decimal,
    pub cs_precision: Decimal,
    pub cs_recall: Decimal,
    pub cs_f1: Decimal,
    pub co_dld: Decimal,
    pub seconds: Decimal,
    /// Milli-USD; absent when no pricing was configured.
    pub cost_milli_usd: Option<Decimal>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleScore {
    pub metrics: SampleMetrics,
    pub generated: Extraction,
    pub gold: Extraction,
}

/// Scores a generated report against its gold report over the tables'
/// relations. `seconds` and `cost` describe the generation run.
pub fn score_sample(
    gen_report: &str,
    gold_report: &str,
    ts: &TableSet,
    extractor: &Extractor<'_>,
    seconds: f64,
    cost: Option<Decimal>,
) -> Result<SampleScore, EvalError> {
    let candidates = enumerate_relations(ts)?;
    let generated = extractor.extract(gen_report, &candidates)?;
    let gold = extractor.extract(gold_report, &candidates)?;
    let gen_triples = generated.triples();
    let gold_triples = gold.triples();
    let table_relations: HashSet<RelationTriple> = candidates.into_iter().collect();
    let (rg_count, rg_precision) = rg(&gen_triples, &table_relations);
    let (cs_precision, cs_recall, cs_f1) = cs(&gen_triples, &gold_triples);
    let metrics = SampleMetrics {
        rg_count,
        rg_precision,
        cs_precision,
        cs_recall,
        cs_f1,
        co_dld: co(&gen_triples, &gold_triples),
        seconds: Decimal::from_f64(seconds).unwrap_or_default().round_dp(3),
        cost_milli_usd: cost,
    };
    Ok(SampleScore {
        metrics,
        generated,
        gold,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusMetrics {
    pub n: usize,
    pub mean: SampleMetrics,
}

/// Field-wise means. The mean cost is present only if every sample has one.
pub fn aggregate(samples: &[SampleMetrics]) -> Result<CorpusMetrics, EvalError> {
    if samples.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    let n = Decimal::from(samples.len());
    let mean = |f: fn(&SampleMetrics) -> Decimal| samples.iter().map(f).sum::<Decimal>() / n;
    let cost = samples
        .iter()
        .map(|s| s.cost_milli_usd)
        .sum::<Option<Decimal>>()
        .map(|c| c / n);
    Ok(CorpusMetrics {
        n: samples.len(),
        mean: SampleMetrics {
            rg_count: mean(|s| s.rg_count),
            rg_precision: mean(|s| s.rg_precision),
            cs_precision: mean(|s| s.cs_precision),
            cs_recall: mean(|s| s.cs_recall),
            cs_f1: mean(|s| s.cs_f1),
            co_dld: mean(|s| s.co_dld),
            seconds: mean(|s| s.seconds),
            cost_milli_usd: cost,
        },
    })
}

/// Metric column headers in report order.
pub const METRIC_COLUMNS: [&str; 8] = [
    "RG #", "RG P%", "CS P%", "CS R%", "CS F%", "CO DLD%", "Time", "Cost",
];

fn cells(m: &SampleMetrics) -> [String; 8] {
    let two = |d: Decimal| format!("{:.2}", d.round_dp(2));
    [
        two(m.rg_count),
        two(m.rg_precision),
        two(m.cs_precision),
        two(m.cs_recall),
        two(m.cs_f1),
        two(m.co_dld),
        two(m.seconds),
        m.cost_milli_usd.map(two).unwrap_or_else(|| "-".into()),
    ]
}

fn rows<'a>(
    samples: &'a [(String, SampleMetrics)],
    corpus: &CorpusMetrics,
) -> Vec<Vec<String>> {
    let mut out: Vec<Vec<String>> = samples
        .iter()
        .map(|(id, m)| std::iter::once(id.clone()).chain(cells(m)).collect())
        .collect();
    out.push(std::iter::once("mean".to_string()).chain(cells(&corpus.mean)).collect());
    out
}

/// One CSV row per sample followed by the mean row; values rounded to two
/// decimals.
pub fn metrics_csv(samples: &[(String, SampleMetrics)], corpus: &CorpusMetrics) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let header = std::iter::once("sample").chain(METRIC_COLUMNS);
    w.write_record(header).expect("in-memory write");
    for row in rows(samples, corpus) {
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory write")).expect("utf-8 input")
}

/// The same content as [`metrics_csv`] as a space-aligned text table.
pub fn metrics_table(samples: &[(String, SampleMetrics)], corpus: &CorpusMetrics) -> String {
    let mut all = vec![std::iter::once("sample")
        .chain(METRIC_COLUMNS)
        .map(String::from)
        .collect::<Vec<_>>()];
    all.extend(rows(samples, corpus));
    let widths: Vec<usize> = (0..all[0].len())
        .map(|c| all.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let line = |r: &Vec<String>| {
        r.iter()
            .enumerate()
            .map(|(c, s)| {
                if c == 0 {
                    format!("{s:<w$}", w = widths[c])
                } else {
                    format!("{s:>w$}", w = widths[c])
                }
            })
            .collect::<Vec<_>>()
            .join("  ")
    };
    let mut out = vec![line(&all[0])];
    out.push(widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  "));
    let last = all.len() - 1;
    for (i, r) in all.iter().enumerate().skip(1) {
        if i == last {
            out.push(widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  "));
        }
        out.push(line(r));
    }
    out.join("\n") + "\n"
}
