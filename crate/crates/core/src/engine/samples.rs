//! Ready-made building models for tests, examples and synthetic experiments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::model::*;

pub fn layer(thickness: f64, conductivity: f64, density: f64, specific_heat: f64) -> Layer {
    Layer { thickness, conductivity, density, specific_heat }
}

pub fn window(name: &str, area: f64, shgc: f64, orientation: Orientation) -> Window {
    Window { name: name.into(), area, u_value: 2.0, shgc, orientation }
}

/// One zone with a single massless exterior wall of 50 m².
///
/// `conductivity_scale` multiplies the wall's layer conductivity.
pub fn massless_box(conductivity_scale: f64) -> BuildingModel {
    BuildingModel {
        schema_version: BUILDING_SCHEMA_VERSION,
        name: "massless-box".into(),
        site: Site::default(),
        zones: vec![Zone {
            name: "box".into(),
            air_capacitance: 1.0e5,
            volume: 100.0,
            infiltration_ach: 0.0,
            solar_to_air_fraction: 1.0,
            lep_radiative_fraction: 0.0,
            surfaces: vec![Surface {
                name: "wall".into(),
                area: 50.0,
                layers: vec![layer(0.1, 0.05 * conductivity_scale, 0.0, 0.0)],
                exterior: true,
                solar_absorptance: 0.0,
                exterior_film: 25.0,
                interior_film: 8.0,
                solar_gain_share: 0.0,
                orientation: None,
            }],
            windows: vec![],
        }],
    }
}

fn exterior_wall(name: &str, area: f64, azimuth: f64, share: f64) -> Surface {
    Surface {
        name: name.into(),
        area,
        layers: vec![
            layer(0.025, 0.7, 1860.0, 840.0),  // stucco
            layer(0.05, 0.045, 30.0, 1200.0),  // insulation
            layer(0.0127, 0.16, 800.0, 1090.0), // gypsum
        ],
        exterior: true,
        solar_absorptance: 0.6,
        exterior_film: 25.0,
        interior_film: 8.0,
        solar_gain_share: share,
        orientation: Some(Orientation::vertical(azimuth)),
    }
}

/// Single-zone analog of a three-storey, ~4,980 m² medium office.
pub fn medium_office() -> BuildingModel {
    let (length, depth, height, floors) = (49.9, 33.3, 3.96, 3.0);
    let floor_area = length * depth * floors;
    let volume = floor_area * height;
    let wwr = 0.33;
    let wall_h = height * floors;
    let facades = [("south", 180.0, length), ("north", 0.0, length), ("east", 90.0, depth), ("west", 270.0, depth)];

    let mut surfaces = Vec::new();
    let mut windows = Vec::new();
    for (name, az, width) in facades {
        let gross = width * wall_h;
        surfaces.push(exterior_wall(&format!("wall_{name}"), gross * (1.0 - wwr), az, 0.05));
        windows.push(Window {
            name: format!("glazing_{name}"),
            area: gross * wwr,
            u_value: 2.0,
            shgc: 0.4,
            orientation: Orientation::vertical(az),
        });
    }
    surfaces.push(Surface {
        name: "roof".into(),
        area: length * depth,
        layers: vec![
            layer(0.01, 0.16, 1120.0, 1460.0),  // membrane
            layer(0.1, 0.045, 30.0, 1200.0),    // insulation
            layer(0.0015, 45.0, 7680.0, 420.0), // metal deck
        ],
        exterior: true,
        solar_absorptance: 0.7,
        exterior_film: 25.0,
        interior_film: 8.0,
        solar_gain_share: 0.1,
        orientation: Some(Orientation::HORIZONTAL),
    });
    surfaces.push(Surface {
        name: "internal_mass".into(),
        area: 2.0 * length * depth,
        layers: vec![layer(0.1, 1.4, 2300.0, 880.0)],
        exterior: false,
        solar_absorptance: 0.0,
        exterior_film: 0.0,
        interior_film: 8.0,
        solar_gain_share: 0.6,
        orientation: None,
    });

    BuildingModel {
        schema_version: BUILDING_SCHEMA_VERSION,
        name: "medium-office".into(),
        site: Site::default(),
        zones: vec![Zone {
            name: "office".into(),
            air_capacitance: AIR_DENSITY * AIR_SPECIFIC_HEAT * volume * 3.0,
            volume,
            infiltration_ach: 0.15,
            solar_to_air_fraction: 0.1,
            lep_radiative_fraction: 0.4,
            surfaces,
            windows,
        }],
    }
}

/// Adds a 10 cm concrete layer to the inside of every exterior wall.
pub fn with_added_wall_mass(mut model: BuildingModel) -> BuildingModel {
    for s in model.zones.iter_mut().flat_map(|z| z.surfaces.iter_mut()) {
        if s.exterior && s.orientation.is_some_and(|o| o.tilt > 45.0) {
            s.layers.push(layer(0.1, 1.4, 2300.0, 880.0));
        }
    }
    model
}

/// A random but valid multi-zone model, for property tests.
pub fn random_model(seed: u64) -> BuildingModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_zones = rng.random_range(1..=3);
    let zones = (0..n_zones)
        .map(|zi| {
            let n_surf = rng.random_range(1..=4);
            let solar_to_air = rng.random_range(0.0..0.5);
            let mut shares: Vec<f64> = (0..n_surf).map(|_| rng.random_range(0.1..1.0)).collect();
            let total: f64 = shares.iter().sum();
            shares.iter_mut().for_each(|s| *s *= (1.0 - solar_to_air) / total);
            let surfaces = shares
                .iter()
                .enumerate()
                .map(|(si, share)| {
                    let n_layers = rng.random_range(1..=3);
                    let exterior = si == 0 || rng.random_bool(0.6);
                    Surface {
                        name: format!("s{si}"),
                        area: rng.random_range(5.0..200.0),
                        layers: (0..n_layers)
                            .map(|_| {
                                let massless = rng.random_bool(0.2);
                                layer(
                                    rng.random_range(0.01..0.2),
                                    rng.random_range(0.03..2.0),
                                    if massless { 0.0 } else { rng.random_range(20.0..2400.0) },
                                    rng.random_range(800.0..1500.0),
                                )
                            })
                            .collect(),
                        exterior,
                        solar_absorptance: rng.random_range(0.2..0.9),
                        exterior_film: rng.random_range(10.0..30.0),
                        interior_film: rng.random_range(3.0..9.0),
                        solar_gain_share: *share,
                        orientation: Some(Orientation {
                            azimuth: rng.random_range(0.0..360.0),
                            tilt: rng.random_range(0.0..90.0),
                        }),
                    }
                })
                .collect();
            let windows = (0..rng.random_range(0..=2))
                .map(|wi| Window {
                    name: format!("w{wi}"),
                    area: rng.random_range(1.0..30.0),
                    u_value: rng.random_range(1.0..5.0),
                    shgc: rng.random_range(0.2..0.8),
                    orientation: Orientation::vertical(rng.random_range(0.0..360.0)),
                })
                .collect();
            let volume = rng.random_range(50.0..2000.0);
            Zone {
                name: format!("zone{zi}"),
                air_capacitance: AIR_DENSITY * AIR_SPECIFIC_HEAT * volume * rng.random_range(1.0..5.0),
                volume,
                infiltration_ach: rng.random_range(0.0..1.0),
                solar_to_air_fraction: solar_to_air,
                lep_radiative_fraction: rng.random_range(0.0..0.7),
                surfaces,
                windows,
            }
        })
        .collect();
    BuildingModel { schema_version: BUILDING_SCHEMA_VERSION, name: format!("random-{seed}"), site: Site::default(), zones }
}
