//! Markdown renderings of run and matrix results.

use std::fmt::Write;

use super::summary::{ci_3dp, StatisticalReport};
use super::{CellCostReport, CellVerdict, PhaseTimings};
use crate::costing::{Category, CostBreakdown};
use crate::telemetry::{MetricsTable, Tier};

fn usd(x: f64) -> String {
    format!("{x:.6}")
}

fn pct(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".to_string(), |v| format!("{v:+.2}%"))
}

fn cost_table(out: &mut String, series: &[(&str, &CostBreakdown)]) {
    out.push_str("| Cell | Tier |");
    for c in Category::ALL {
        let _ = write!(out, " {} |", c.as_str());
    }
    out.push_str(" Total |\n|---|---|");
    for _ in Category::ALL {
        out.push_str("---:|");
    }
    out.push_str("---:|\n");
    for (name, b) in series {
        for t in Tier::ALL {
            let tc = b.tier(t);
            let _ = write!(out, "| {name} | {t} |");
            for c in Category::ALL {
                let _ = write!(out, " {} |", usd(tc.get(c)));
            }
            let _ = writeln!(out, " {} |", usd(tc.total()));
        }
        let _ = writeln!(out, "| {name} | all | | | | | | **{}** |", usd(b.total()));
    }
}

/// Report for one run.
pub fn cell_report(
    verdict: &CellVerdict,
    table: &MetricsTable,
    costs: &CellCostReport,
    timings: &PhaseTimings,
) -> String {
    let mut out = String::new();
    let a = &verdict.accuracy;
    let _ = writeln!(out, "# Run {}\n", verdict.run_id);
    let _ = writeln!(
        out,
        "Backend `{}`, profile `{}`, seed {}, k = {}, threshold {}.\n",
        verdict.backend, verdict.profile, verdict.seed, verdict.k, verdict.threshold
    );

    out.push_str("## Answers\n\n| n | correct | wrong | idk | accuracy | 95% CI |\n|---:|---:|---:|---:|---:|---|\n");
    let (lo, hi) = ci_3dp(&verdict.wilson);
    let _ = writeln!(
        out,
        "| {} | {} | {} | {} | {:.3} | [{lo:.3}, {hi:.3}] |\n",
        a.n, a.correct, a.wrong, a.idk, a.accuracy
    );

    let l = &verdict.load;
    let _ = writeln!(
        out,
        "## Loading\n\n{} of {} turns sent, {} records created, {} skipped, {} failed.\n",
        l.turns_sent, l.turns_total, l.records_created, l.skipped, l.failed
    );

    out.push_str("## Phase wall time\n\n| Phase | Seconds |\n|---|---:|\n");
    let _ = writeln!(out, "| loading | {:.2} |", timings.loading_ms / 1000.0);
    let _ = writeln!(out, "| qa | {:.2} |\n", timings.qa_ms / 1000.0);

    out.push_str(
        "## Resources\n\n| Phase | Tier | CPU min | RAM MB | Disk MB | Net MB | Minutes | Tokens | p50 ms | p95 ms |\n\
         |---|---|---:|---:|---:|---:|---:|---:|---:|---:|\n",
    );
    for r in &table.rows {
        let _ = writeln!(
            out,
            "| {} | {} | {:.4} | {:.1} | {:.3} | {:.3} | {:.3} | {} | {:.1} | {:.1} |",
            r.phase,
            r.tier,
            r.cpu_minutes,
            r.ram_mb,
            r.disk_mb,
            r.network_mb,
            r.duration_minutes,
            r.tokens.total_tokens,
            r.latency.p50_ms,
            r.latency.p95_ms
        );
    }
    out.push('\n');

    let t = &verdict.tokens;
    let _ = writeln!(
        out,
        "## Tokens\n\nProxy counted {} tokens over {} requests; responses reported {}. {}\n",
        t.proxy_total.total_tokens,
        t.proxy_requests,
        t.responses_total.total_tokens,
        if t.conserved { "The counts agree." } else { "**The counts disagree.**" }
    );

    let _ = writeln!(out, "## Cost (USD, model `{}`)\n", costs.model);
    cost_table(&mut out, &[(verdict.run_id.as_str(), &costs.breakdown)]);
    out
}

/// Report over several cells: accuracy, pairwise tests, cost and verdicts.
pub fn stats_report(report: &StatisticalReport) -> String {
    let mut out = String::new();
    out.push_str("## Accuracy\n\n| Cell | correct | wrong | idk | n | accuracy | 95% CI |\n|---|---:|---:|---:|---:|---:|---|\n");
    for c in &report.cells {
        let a = &c.accuracy;
        let (lo, hi) = ci_3dp(&c.wilson);
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {:.3} | [{lo:.3}, {hi:.3}] |",
            c.name, a.correct, a.wrong, a.idk, a.n, a.accuracy
        );
    }
    out.push('\n');

    if !report.comparisons.is_empty() {
        let _ = writeln!(
            out,
            "## Two-proportion z-tests (alpha = {})\n\n| A | B | z | p | significant |\n|---|---|---:|---:|---|",
            report.alpha
        );
        for c in &report.comparisons {
            let _ = writeln!(
                out,
                "| {} | {} | {:.3} | {:.4} | {} |",
                c.a,
                c.b,
                c.z,
                c.p_value,
                if c.significant { "yes" } else { "no" }
            );
        }
        out.push('\n');
    }

    let costed: Vec<(&str, &CostBreakdown)> = report
        .cells
        .iter()
        .filter_map(|c| c.cost.as_ref().map(|k| (c.name.as_str(), &k.breakdown)))
        .collect();
    if !costed.is_empty() {
        out.push_str("## Cost (USD)\n\n");
        cost_table(&mut out, &costed);
        out.push('\n');
    }

    if !report.verdicts.is_empty() {
        out.push_str("## Verdicts\n\n| Experiment | Base | Other | Base USD | Other USD | Cost delta | Verdict | Rationale |\n|---|---|---|---:|---:|---:|---|---|\n");
        for v in &report.verdicts {
            let rationale: Vec<String> = v
                .pareto
                .rationale
                .iter()
                .map(|r| serde_json::to_value(r).ok().and_then(|x| x.as_str().map(str::to_string)).unwrap_or_default())
                .collect();
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {} | {} | {} | {} |",
                v.experiment,
                v.tco.a,
                v.tco.b,
                usd(v.tco.total_a_usd),
                usd(v.tco.total_b_usd),
                pct(v.tco.total_delta_pct),
                v.pareto.summary(),
                rationale.join(", ")
            );
        }
        out.push('\n');
        let _ = writeln!(
            out,
            "Overall: {}.",
            report
                .overall_dominant
                .as_deref()
                .map_or_else(|| "no single dominant system".to_string(), |d| format!("{d} dominant"))
        );
    }
    out
}
