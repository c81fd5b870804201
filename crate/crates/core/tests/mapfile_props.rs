use artic_core::allocator::CorrelationMap;
use artic_core::{mapfile, Error};
use proptest::prelude::*;

fn map() -> impl Strategy<Value = CorrelationMap> {
    (1usize..8, 1usize..8, 1u16..128).prop_flat_map(|(rows, cols, patch)| {
        prop::collection::vec(-1.0f32..=1.0, rows * cols)
            .prop_map(move |values| CorrelationMap::new(rows, cols, patch, values).unwrap())
    })
}

proptest! {
    #[test]
    fn encode_decode_roundtrip(m in map()) {
        let bytes = mapfile::encode(&m).unwrap();
        prop_assert_eq!(bytes.len(), mapfile::HEADER_LEN + 4 * m.rows() * m.cols());
        prop_assert_eq!(mapfile::decode(&bytes).unwrap(), m);
    }

    #[test]
    fn truncated_files_are_rejected(m in map(), cut in 1usize..16) {
        let bytes = mapfile::encode(&m).unwrap();
        let cut = cut.min(bytes.len());
        prop_assert!(mapfile::decode(&bytes[..bytes.len() - cut]).is_err());
    }
}

#[test]
fn files_roundtrip_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.artc");
    let m = CorrelationMap::new(2, 3, 64, vec![1.0, 0.5, 0.0, -0.25, -1.0, 0.125]).unwrap();
    mapfile::save(&m, &path).unwrap();
    assert_eq!(mapfile::load(&path).unwrap(), m);
}

#[test]
fn missing_file_names_the_path() {
    let err = mapfile::load("/definitely/not/here.artc").unwrap_err();
    assert!(matches!(err, Error::MissingFile(_)));
    assert!(err.to_string().contains("/definitely/not/here.artc"));
}

#[test]
fn header_layout_is_little_endian() {
    let m = CorrelationMap::new(1, 2, 16, vec![1.0, -1.0]).unwrap();
    let bytes = mapfile::encode(&m).unwrap();
    assert_eq!(&bytes[..4], b"ARTC");
    assert_eq!(&bytes[4..14], &[1, 0, 1, 0, 2, 0, 16, 0, 0, 0]);
    assert_eq!(&bytes[14..18], &1.0f32.to_le_bytes());
    assert_eq!(&bytes[18..22], &(-1.0f32).to_le_bytes());
}
