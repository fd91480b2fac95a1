//! Reduction of a [`BuildingModel`] to a linear RC network.
//!
//! Every material layer becomes a T-section (half resistance, capacitor,
//! half resistance). Films are pure resistors between massless surface
//! nodes and the outdoor boundary or the zone air node. Windows and
//! infiltration are conductances straight from the air node to outdoors.

use nalgebra::{DMatrix, DVector};

use super::model::{BuildingModel, Orientation, Site, AIR_DENSITY, AIR_SPECIFIC_HEAT};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Air,
    ExteriorFace,
    Layer(usize),
    InteriorFace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub zone: usize,
    pub kind: NodeKind,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct WindowGeometry {
    pub area: f64,
    pub shgc: f64,
    pub orientation: Orientation,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct OpaqueGeometry {
    pub node: usize,
    pub area: f64,
    pub absorptance: f64,
    pub orientation: Orientation,
}

/// Where each zone's inputs enter the network.
#[derive(Debug, Clone, PartialEq)]
pub struct ZoneCoupling {
    pub name: String,
    pub air_node: usize,
    /// (node, fraction) for transmitted solar; fractions sum to 1.
    pub solar_split: Vec<(usize, f64)>,
    /// (node, fraction) for lights/equipment/people heat; fractions sum to 1.
    pub lep_split: Vec<(usize, f64)>,
    pub(crate) windows: Vec<WindowGeometry>,
    pub(crate) opaque: Vec<OpaqueGeometry>,
}

/// Linear network `C dT/dt = -G T + g_out T_out + injections`.
///
/// `conductance` is symmetric and already includes the boundary
/// conductances `g_out` on its diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceSystem {
    pub nodes: Vec<Node>,
    pub conductance: DMatrix<f64>,
    pub capacitance: DVector<f64>,
    pub outdoor_coupling: DVector<f64>,
    pub zones: Vec<ZoneCoupling>,
    pub site: Site,
}

struct Builder {
    nodes: Vec<Node>,
    caps: Vec<f64>,
    edges: Vec<(usize, usize, f64)>,
    outdoor: Vec<(usize, f64)>,
}

impl Builder {
    fn node(&mut self, zone: usize, kind: NodeKind, label: String, cap: f64) -> usize {
        self.nodes.push(Node { zone, kind, label });
        self.caps.push(cap);
        self.nodes.len() - 1
    }

    fn link(&mut self, a: usize, b: usize, resistance: f64) {
        self.edges.push((a, b, 1.0 / resistance));
    }

    fn to_outdoors(&mut self, a: usize, conductance: f64) {
        if conductance > 0.0 {
            self.outdoor.push((a, conductance));
        }
    }
}

/// Builds the RC network of a validated model.
pub fn discretize(model: &BuildingModel) -> Result<StateSpaceSystem> {
    model.validate()?;
    let mut b = Builder { nodes: Vec::new(), caps: Vec::new(), edges: Vec::new(), outdoor: Vec::new() };
    let mut zones = Vec::with_capacity(model.zones.len());

    for (zi, zone) in model.zones.iter().enumerate() {
        let air = b.node(zi, NodeKind::Air, format!("{}/air", zone.name), zone.air_capacitance);
        let infiltration = AIR_DENSITY * AIR_SPECIFIC_HEAT * zone.infiltration_ach * zone.volume / 3600.0;
        let glazing: f64 = zone.windows.iter().map(|w| w.u_value * w.area).sum();
        b.to_outdoors(air, infiltration + glazing);

        let mut solar_split = vec![(air, zone.solar_to_air_fraction)];
        let mut interior_faces = Vec::new();
        let mut opaque = Vec::new();

        for s in &zone.surfaces {
            let prefix = format!("{}/{}", zone.name, s.name);
            let mut prev: Option<(usize, f64)> = None;
            if s.exterior {
                let ext = b.node(zi, NodeKind::ExteriorFace, format!("{prefix}/outside"), 0.0);
                b.to_outdoors(ext, s.exterior_film * s.area);
                if let Some(orientation) = s.orientation {
                    if s.solar_absorptance > 0.0 {
                        opaque.push(OpaqueGeometry { node: ext, area: s.area, absorptance: s.solar_absorptance, orientation });
                    }
                }
                prev = Some((ext, 0.0));
            }
            for (li, layer) in s.layers.iter().enumerate() {
                let r = layer.resistance(s.area);
                let n = b.node(zi, NodeKind::Layer(li), format!("{prefix}/layer{li}"), layer.capacitance(s.area));
                if let Some((p, r_carry)) = prev {
                    b.link(p, n, r_carry + r / 2.0);
                }
                prev = Some((n, r / 2.0));
            }
            let inside = b.node(zi, NodeKind::InteriorFace, format!("{prefix}/inside"), 0.0);
            let (last, r_carry) = prev.expect("validated surfaces have layers");
            b.link(last, inside, r_carry);
            b.link(inside, air, 1.0 / (s.interior_film * s.area));
            if s.solar_gain_share > 0.0 {
                solar_split.push((inside, s.solar_gain_share));
            }
            interior_faces.push((inside, s.area));
        }

        let total_area: f64 = interior_faces.iter().map(|(_, a)| a).sum();
        let mut lep_split = vec![(air, 1.0 - zone.lep_radiative_fraction)];
        if zone.lep_radiative_fraction > 0.0 {
            lep_split.extend(interior_faces.iter().map(|(n, a)| (*n, zone.lep_radiative_fraction * a / total_area)));
        }

        zones.push(ZoneCoupling {
            name: zone.name.clone(),
            air_node: air,
            solar_split,
            lep_split,
            windows: zone
                .windows
                .iter()
                .map(|w| WindowGeometry { area: w.area, shgc: w.shgc, orientation: w.orientation })
                .collect(),
            opaque,
        });
    }

    let n = b.nodes.len();
    let mut g = DMatrix::zeros(n, n);
    for &(i, j, c) in &b.edges {
        g[(i, i)] += c;
        g[(j, j)] += c;
        g[(i, j)] -= c;
        g[(j, i)] -= c;
    }
    let mut g_out = DVector::zeros(n);
    for &(i, c) in &b.outdoor {
        g_out[i] += c;
        g[(i, i)] += c;
    }
    for i in 0..n {
        let connected = (0..n).any(|j| j != i && g[(i, j)] != 0.0) || g_out[i] > 0.0;
        if !connected {
            return Err(Error::SingularNetwork(format!("node {} has no conductance to anything", b.nodes[i].label)));
        }
    }

    Ok(StateSpaceSystem {
        nodes: b.nodes,
        conductance: g,
        capacitance: DVector::from_vec(b.caps),
        outdoor_coupling: g_out,
        zones,
        site: model.site,
    })
}

impl StateSpaceSystem {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn air_nodes(&self) -> Vec<usize> {
        self.zones.iter().map(|z| z.air_node).collect()
    }

    /// Steady-state heat (W) that holds zone `zone` 1 K above outdoors with every other
    /// air node at outdoor temperature: the zone's building load coefficient.
    pub fn steady_state_blc(&self, zone: usize) -> Result<f64> {
        let air = self.air_nodes();
        let unknown: Vec<usize> = (0..self.len()).filter(|i| !air.contains(i)).collect();
        let mut fixed = DVector::zeros(self.len());
        fixed[self.zones[zone].air_node] = 1.0;
        let mut t = fixed.clone();
        if !unknown.is_empty() {
            let guu = self.conductance.select_rows(&unknown).select_columns(&unknown);
            let rhs = -(self.conductance.select_rows(&unknown) * &fixed);
            let xu = guu
                .lu()
                .solve(&rhs)
                .ok_or_else(|| Error::SingularNetwork("steady-state conductance block is singular".into()))?;
            for (k, &i) in unknown.iter().enumerate() {
                t[i] = xu[k];
            }
        }
        let a = self.zones[zone].air_node;
        Ok((self.conductance.row(a) * &t)[0])
    }

    /// Building-total load coefficient (W/K).
    pub fn total_blc(&self) -> Result<f64> {
        (0..self.zones.len()).map(|z| self.steady_state_blc(z)).sum()
    }
}
