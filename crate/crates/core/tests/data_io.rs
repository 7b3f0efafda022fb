use anchorboost::data::read_csv;
use anchorboost::{load_csv, AnchorScm, AnchorSpec, CsvSchema, Task};

#[test]
fn simulated_data_round_trips_through_csv() {
    let d = AnchorScm::canonical().generate(30, 1.0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    d.write_csv(std::fs::File::create(&path).unwrap()).unwrap();
    let back = load_csv(&path, &CsvSchema::new("y", &["env"], Task::Regression)).unwrap();
    assert_eq!(back.features(), d.features());
    assert_eq!(back.outcome(), d.outcome());
    assert_eq!(back.anchor(), d.anchor());
}

#[test]
fn missing_anchor_column_is_named() {
    let text = "x,y\n1,2\n";
    let err = read_csv(text.as_bytes(), &CsvSchema::new("y", &["site"], Task::Regression)).unwrap_err();
    assert!(err.to_string().contains("'site'"), "{err}");
}

#[test]
fn bad_cell_reports_row_and_column() {
    let text = "x,y,e\n1,2,a\n1,oops,b\n";
    let err = read_csv(text.as_bytes(), &CsvSchema::new("y", &["e"], Task::Regression)).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("row 2") && msg.contains("'y'"), "{msg}");
}

#[test]
fn classification_labels_are_mapped_to_signs() {
    let text = "x,y,e\n1,0,a\n2,1,b\n3,-1,a\n";
    let d = read_csv(text.as_bytes(), &CsvSchema::new("y", &["e"], Task::Classification)).unwrap();
    assert_eq!(d.outcome(), &[-1.0, 1.0, -1.0]);
    let bad = "x,y,e\n1,2,a\n";
    assert!(read_csv(bad.as_bytes(), &CsvSchema::new("y", &["e"], Task::Classification)).is_err());
}

#[test]
fn numeric_anchor_columns_are_continuous() {
    let text = "x,y,a1,a2\n1,2,0.5,1\n2,3,0.1,2\n3,1,0.3,0\n";
    let d = read_csv(text.as_bytes(), &CsvSchema::new("y", &["a1", "a2"], Task::Regression)).unwrap();
    assert!(matches!(d.anchor(), AnchorSpec::Continuous { .. }));
    assert_eq!(d.column_names(), ["x"]);
}

#[test]
fn groups_are_read_and_kept_out_of_features() {
    let text = "pid,x,y,e\np1,1,2,a\np1,2,3,a\np2,3,1,b\n";
    let mut schema = CsvSchema::new("y", &["e"], Task::Regression);
    schema.group = Some("pid".into());
    let d = read_csv(text.as_bytes(), &schema).unwrap();
    assert_eq!(d.groups().unwrap(), ["p1", "p1", "p2"]);
    assert_eq!(d.column_names(), ["x"]);
}
