use std::path::Path;

use geo::Intersects;
use geojson::{Feature, FeatureCollection, GeoJson, Geometry, JsonObject};

use crate::error::{Error, Result};

/// Polygonal region read from GeoJSON; boundary points count as inside.
pub struct Mask(geo::Geometry<f64>);

impl Mask {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let gj: GeoJson = text.parse().map_err(|e: geojson::Error| Error::InvalidArgument(e.to_string()))?;
        let g = geo::Geometry::<f64>::try_from(gj).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Ok(Mask(g))
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        self.0.intersects(&geo::Point::new(p[0], p[1]))
    }
}

/// Point features carrying numeric properties, one per location.
pub fn points_geojson(coords: &[[f64; 2]], columns: &[&str], values: &[Vec<f64>]) -> String {
    let features = coords.iter().zip(values).map(|(c, row)| {
        let mut props = JsonObject::new();
        for (name, v) in columns.iter().zip(row) {
            props.insert((*name).to_string(), serde_json::json!(v));
        }
        Feature {
            geometry: Some(Geometry::new_point([c[0], c[1]])),
            properties: Some(props),
            ..Default::default()
        }
    });
    GeoJson::from(FeatureCollection::new(features)).to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_with_hole() {
        let m = Mask::parse(
            r#"{"type":"Feature","properties":{},"geometry":{"type":"Polygon","coordinates":[
                [[0,0],[4,0],[4,4],[0,4],[0,0]],[[1,1],[2,1],[2,2],[1,2],[1,1]]]}}"#,
        )
        .unwrap();
        assert!(m.contains([0.5, 0.5]));
        assert!(m.contains([4.0, 2.0]));
        assert!(!m.contains([1.5, 1.5]));
        assert!(!m.contains([5.0, 1.0]));
        assert!(Mask::parse("{\"type\":\"Nope\"}").is_err());
    }

    #[test]
    fn writes_points() {
        let s = points_geojson(&[[1.0, 2.0]], &["mean"], &[vec![0.25]]);
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["features"][0]["geometry"]["coordinates"], serde_json::json!([1.0, 2.0]));
        assert_eq!(v["features"][0]["properties"]["mean"], 0.25);
    }
}
