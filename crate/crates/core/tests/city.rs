mod common;

use proptest::prelude::*;
use smartcity_core::city::{
    load_city, load_city_file, normalize_key, CityError, Gazetteer, PlaceKind, DEFAULT_SLOT_LENGTH,
};
use smartcity_core::city::Coordinate;

#[test]
fn toy_map_loads_cleanly() {
    let g = load_city_file(common::fixture("tandil_toy.json"), DEFAULT_SLOT_LENGTH).unwrap();
    assert!(g.warnings().is_empty(), "{:?}", g.warnings());
    assert_eq!((g.node_count(), g.edge_count(), g.blocks().len()), (49, 84, 84));
    assert!(g.is_strongly_connected());
    assert_eq!(g.blocks().iter().filter(|b| b.in_metered_zone).count(), 40);
    assert_eq!(g.block("b015").unwrap().capacity, 0);
    assert_eq!(g.gazetteer().len(), 65);
    for b in g.blocks() {
        assert_eq!(b.capacity, b.derive_capacity(DEFAULT_SLOT_LENGTH));
    }
}

#[test]
fn unit_square_fixture() {
    let g = load_city_file(common::fixture("unit_square.json"), DEFAULT_SLOT_LENGTH).unwrap();
    assert_eq!(g.node_count(), 4);
    assert!(g.gazetteer().lookup("este & sur").is_some());
}

#[test]
fn schema_errors_are_reported() {
    assert!(matches!(load_city("{", 5.0), Err(CityError::Schema(_))));
    let dangling = r#"{"origin": {"lat": 0, "lon": 0},
        "nodes": [{"id": "a", "lat": 0, "lon": 0}],
        "edges": [{"id": "e", "from": "a", "to": "b", "street": "X"}]}"#;
    assert!(matches!(load_city(dangling, 5.0), Err(CityError::DanglingEndpoint { .. })));
}

fn word() -> impl Strategy<Value = String> {
    proptest::string::string_regex("[a-zA-ZáéíóúñÁÉÍÓÚÑ]{1,8}").unwrap()
}

proptest! {
    #[test]
    fn gazetteer_round_trip(words in proptest::collection::vec(word(), 1..4), x in -1e4f64..1e4, y in -1e4f64..1e4) {
        let key = words.join(" ");
        let mut g = Gazetteer::new();
        g.register(&key, Coordinate::new(x, y), PlaceKind::Street).unwrap();
        let spaced = format!("  {}  ", words.join("   ").to_uppercase());
        prop_assert_eq!(g.resolve_location(&spaced), Some(Coordinate::new(x, y)));
        prop_assert_eq!(normalize_key(&normalize_key(&key)), normalize_key(&key));
    }

    #[test]
    fn projection_round_trip(lat in -60f64..60.0, lon in -170f64..170.0, dx in -3000f64..3000.0, dy in -3000f64..3000.0) {
        use smartcity_core::city::GeoPoint;
        let origin = GeoPoint { lat, lon };
        let c = Coordinate::new(dx, dy);
        let back = origin.project(origin.unproject(c));
        prop_assert!((back.x - dx).abs() < 1e-6 && (back.y - dy).abs() < 1e-6);
    }
}
