use std::fs;

use vqsel::store::{ScoreTable, FEATURES_FILE, MANIFEST_FILE, SCORES_FILE};
use vqsel::{load_feature_store, Error, FeatureStore, VideoRecord};

fn three_records() -> FeatureStore {
    let frames = [2usize, 1, 3];
    let records = frames
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let feats = (0..t * 4)
                .map(|k| (i * 100 + k) as f32 * 0.5 - 3.0)
                .collect();
            VideoRecord::new(format!("v{i}"), 4, feats)
                .unwrap()
                .with_scores(Some(1.0 + i as f64), (i != 1).then_some(2.5))
        })
        .collect();
    FeatureStore::new(4, records).unwrap()
}

#[test]
fn round_trip_preserves_features_and_scores() {
    let dir = tempfile::tempdir().unwrap();
    let store = three_records();
    store.write_dir(dir.path()).unwrap();
    let blob = fs::read(dir.path().join(FEATURES_FILE)).unwrap();
    assert_eq!(blob.len(), (2 + 1 + 3) * 4 * 4);

    let mut loaded = load_feature_store(dir.path().join(MANIFEST_FILE)).unwrap();
    assert_eq!(loaded.len(), 3);
    assert_eq!(loaded.records()[2].num_frames(), 3);
    for (a, b) in store.records().iter().zip(loaded.records()) {
        assert_eq!(a.features(), b.features());
    }
    // scores live in their own file
    assert_eq!(loaded.records()[0].mos, None);
    loaded
        .apply_scores(&ScoreTable::read(dir.path().join(SCORES_FILE)).unwrap())
        .unwrap();
    assert_eq!(loaded, store);
}

#[test]
fn writing_twice_gives_identical_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    three_records().write_dir(a.path()).unwrap();
    three_records().write_dir(b.path()).unwrap();
    for name in [MANIFEST_FILE, FEATURES_FILE, SCORES_FILE] {
        assert_eq!(
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn truncated_blob_names_first_short_record() {
    let dir = tempfile::tempdir().unwrap();
    three_records().write_dir(dir.path()).unwrap();
    let path = dir.path().join(FEATURES_FILE);
    let blob = fs::read(&path).unwrap();
    // v0 (32 bytes) stays whole, v1 loses its last float
    fs::write(&path, &blob[..32 + 12]).unwrap();
    match load_feature_store(dir.path().join(MANIFEST_FILE)) {
        Err(Error::Truncated {
            id,
            offset,
            needed,
            blob_len,
        }) => {
            assert_eq!(id, "v1");
            assert_eq!((offset, needed, blob_len), (32, 16, 44));
        }
        other => panic!("expected truncation error, got {other:?}"),
    }
}

#[test]
fn non_finite_value_is_located() {
    let dir = tempfile::tempdir().unwrap();
    let records = vec![
        VideoRecord::new("v1", 2, vec![0.0, 1.0]).unwrap(),
        VideoRecord::new("v2", 2, vec![0.0, 1.0, 2.0, 3.0]).unwrap(),
    ];
    FeatureStore::new(2, records)
        .unwrap()
        .write_dir(dir.path())
        .unwrap();
    let path = dir.path().join(FEATURES_FILE);
    let mut blob = fs::read(&path).unwrap();
    // second float of v2's frame 0
    blob[12..16].copy_from_slice(&f32::NAN.to_le_bytes());
    fs::write(&path, blob).unwrap();
    let err = load_feature_store(dir.path().join(MANIFEST_FILE)).unwrap_err();
    assert!(
        matches!(&err, Error::NonFinite { id, frame: 0, offset: 12 } if id == "v2"),
        "{err:?}"
    );
    assert!(err.to_string().contains("\"v2\""));
}

#[test]
fn malformed_inputs_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join(MANIFEST_FILE);
    assert!(matches!(
        load_feature_store(&manifest),
        Err(Error::Io { .. })
    ));

    fs::write(&manifest, "{\"dim\": 2, \"records\": [{\"id\": \"a\"}]}").unwrap();
    fs::write(dir.path().join(FEATURES_FILE), []).unwrap();
    assert!(matches!(
        load_feature_store(&manifest),
        Err(Error::Manifest { .. })
    ));

    fs::write(
        &manifest,
        "{\"dim\": 1, \"records\": [{\"id\": \"a\", \"num_frames\": 1, \"offset_bytes\": 0},\
         {\"id\": \"a\", \"num_frames\": 1, \"offset_bytes\": 0}]}",
    )
    .unwrap();
    fs::write(dir.path().join(FEATURES_FILE), 1.0f32.to_le_bytes()).unwrap();
    assert!(matches!(
        load_feature_store(&manifest),
        Err(Error::DuplicateId(_))
    ));
}

#[test]
fn scores_for_unknown_ids_are_rejected() {
    let mut store = three_records();
    let table = ScoreTable::from_reader("id,mos,base_pred\nv0,1,2\nzz,3,4\n".as_bytes()).unwrap();
    assert!(matches!(store.apply_scores(&table), Err(Error::UnknownId(id)) if id == "zz"));
}
