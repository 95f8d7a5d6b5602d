use std::fs;
use std::path::PathBuf;

use calum_core::report::{emit_comparison_table, emit_results_table, format_delta, format_pct, ComparisonFamily, TableFormat};
use calum_core::AggregateMetrics;
use proptest::prelude::*;

fn fixture(name: &str) -> String {
    fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/report").join(name)).unwrap()
}

fn table2() -> Vec<AggregateMetrics> {
    serde_json::from_str(&fixture("table2_aggregates.json")).unwrap()
}

fn table5() -> Vec<ComparisonFamily> {
    serde_json::from_str(&fixture("table5_families.json")).unwrap()
}

#[test]
fn roberta_base_mnli_cell() {
    let cells = table2();
    let c = cells.iter().find(|c| c.model == "RoBERTa_base" && c.task == "mnli").unwrap();
    assert_eq!(
        [format_pct(c.acc_val.mean), format_pct(c.c_reverse.mean), format_pct(c.c_signal.mean)],
        ["87.2", "60.3", "98.6"]
    );
    let md = emit_results_table(&cells, TableFormat::Markdown).unwrap();
    assert!(md.contains("| RoBERTa_base | 87.2 | 60.3 | 98.6 |"));
}

#[test]
fn results_table_matches_golden_files() {
    assert_eq!(emit_results_table(&table2(), TableFormat::Markdown).unwrap(), fixture("table2.md"));
    assert_eq!(emit_results_table(&table2(), TableFormat::Csv).unwrap(), fixture("table2.csv"));
}

#[test]
fn comparison_table_matches_golden_files() {
    let md = emit_comparison_table(&table5(), TableFormat::Markdown).unwrap();
    assert_eq!(md, fixture("table5.md"));
    assert!(md.contains("| 66.4 | 92.2 |  |"));
    assert!(md.contains("| 86.5 | 96.1 | +20.1 |"));
    assert_eq!(emit_comparison_table(&table5(), TableFormat::Csv).unwrap(), fixture("table5.csv"));
}

#[test]
fn markdown_and_csv_share_numbers() {
    let md = emit_results_table(&table2(), TableFormat::Markdown).unwrap();
    let csv = emit_results_table(&table2(), TableFormat::Csv).unwrap();
    let from_md: Vec<&str> = md.lines().skip(2).flat_map(|l| l.trim_matches(['|', ' ']).split(" | ")).collect();
    let from_csv: Vec<&str> = csv.lines().skip(1).flat_map(|l| l.split(',')).collect();
    assert_eq!(from_md, from_csv);
}

#[test]
fn identical_variants_give_zero_deltas() {
    let mut fam = table5().remove(0);
    fam.para = fam.single.clone();
    fam.all = fam.single.clone();
    let md = emit_comparison_table(&[fam], TableFormat::Markdown).unwrap();
    let para = md.lines().nth(3).unwrap();
    assert_eq!(para.matches("| 0.0 |").count(), 3, "{para}");
}

#[test]
fn ragged_input_is_refused() {
    let mut cells = table2();
    cells.pop();
    assert!(emit_results_table(&cells, TableFormat::Markdown).is_err());
    assert!(emit_results_table(&[], TableFormat::Csv).is_err());
}

#[test]
fn edge_values() {
    assert_eq!(format_pct(1.0), "100.0");
    assert_eq!(format_pct(0.0), "0.0");
    assert_eq!(format_pct(0.8725), "87.3");
    assert_eq!(format_pct(0.8724999), "87.2");
    assert_eq!(format_delta(0.664, 0.865), "+20.1");
    assert_eq!(format_delta(0.5, 0.5), "0.0");
    assert_eq!(format_delta(0.755, 0.729), "-2.6");
}

proptest! {
    #[test]
    fn rendered_value_is_within_half_a_tenth(x in 0.0f64..=1.0) {
        let s = format_pct(x);
        let parsed: f64 = s.parse().unwrap();
        prop_assert!((parsed - 100.0 * x).abs() <= 0.05 + 1e-9, "{} -> {}", x, s);
        let (_, frac) = s.split_once('.').unwrap();
        prop_assert_eq!(frac.len(), 1);
    }
}
