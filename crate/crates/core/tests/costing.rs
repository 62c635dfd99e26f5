use std::path::Path;

use memharness_core::costing::{compute_cost, tco_compare, Category, PricingModel};
use memharness_core::experiment::CountsFile;
use memharness_core::telemetry::{read_metrics_csv, Tier};

fn fixture(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

/// Spreadsheet-style recomputation straight from the CSV cells, one formula
/// per column, with the default prices typed in.
fn by_hand(path: &Path) -> (f64, f64) {
    let (vcpu_h, ram_gb_h, disk_gb_h, net_gb) = (0.04048, 0.004445, 0.000109, 0.09);
    let (in_1k, out_1k) = (0.00015, 0.0006);
    let mut r = csv::Reader::from_path(path).unwrap();
    let h = r.headers().unwrap().clone();
    let col = |rec: &csv::StringRecord, name: &str| -> f64 {
        rec[h.iter().position(|c| c == name).unwrap()].parse().unwrap()
    };
    let (mut total, mut edge) = (0.0, 0.0);
    for rec in r.records() {
        let rec = rec.unwrap();
        let hours = col(&rec, "duration_minutes") / 60.0;
        let row = col(&rec, "cpu_minutes") / 60.0 * vcpu_h
            + col(&rec, "ram_mb") / 1024.0 * hours * ram_gb_h
            + col(&rec, "disk_mb") / 1024.0 * hours * disk_gb_h
            + col(&rec, "network_mb") / 1024.0 * net_gb
            + col(&rec, "prompt_tokens") / 1000.0 * in_1k
            + col(&rec, "completion_tokens") / 1000.0 * out_1k;
        total += row;
        if &rec[h.iter().position(|c| c == "tier").unwrap()] == "edge" {
            edge += row;
        }
    }
    (total, edge)
}

#[test]
fn metrics_csv_cost_matches_the_hand_formula() {
    let path = fixture("metrics_sample.csv");
    let table = read_metrics_csv(&path).unwrap();
    let cost = compute_cost(&table, &PricingModel::default_model(), "gpt-4o-mini").unwrap();
    let (total, edge) = by_hand(&path);
    assert!((cost.total() - total).abs() < 1e-12, "{} vs {total}", cost.total());
    assert!((cost.tier(Tier::Edge).total() - edge).abs() < 1e-12);
    // Token spend: 16000 in, 3500 out.
    let tokens = 16.0 * 0.00015 + 3.5 * 0.0006;
    assert!((cost.category_total(Category::Tokens) - tokens).abs() < 1e-12);
}

/// Totals recomputed from the recorded resource and token figures with the
/// default prices. Pinned to 2 decimals of a percent.
#[test]
fn recorded_cells_recompute_to_pinned_deltas() {
    let counts = CountsFile::load(&fixture("paper_counts.json")).unwrap();
    let costs = counts.costs(&PricingModel::default_model()).unwrap();
    let by_name = |n: &str| {
        let i = counts.cells.iter().position(|c| c.name == n).unwrap();
        costs[i].clone().unwrap()
    };
    for (exp, expected) in [("unconstrained", 40.79), ("constrained", 5.89)] {
        let mem0 = by_name(&format!("mem0-{exp}"));
        let graphiti = by_name(&format!("graphiti-{exp}"));
        let t = tco_compare("mem0", &mem0, "graphiti", &graphiti);
        let d = t.total_delta_pct.unwrap();
        assert!((d - expected).abs() < 0.01, "{exp}: {d}");
    }
}
