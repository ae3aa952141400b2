//! Two-dimensional projections of evaluated points for external plotting.

use msopt::RatedPoint;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

const ORTHONORMAL_TOL: f64 = 1e-9;

/// A projection plane: a pair of coordinate axes, or two orthonormal
/// directions.
#[derive(Clone, Debug, PartialEq)]
pub enum PlaneSpec {
    Coordinates(usize, usize),
    Directions(Vec<f64>, Vec<f64>),
}

impl FromStr for PlaneSpec {
    type Err = String;

    /// `"i:j"` or `"u1,u2,…|v1,v2,…"`.
    fn from_str(s: &str) -> Result<Self, String> {
        let number_list = |part: &str| -> Result<Vec<f64>, String> {
            part.split(',')
                .map(|x| x.trim().parse::<f64>().map_err(|e| format!("`{x}` in plane `{s}`: {e}")))
                .collect()
        };
        if let Some((u, v)) = s.split_once('|') {
            return Ok(PlaneSpec::Directions(number_list(u)?, number_list(v)?));
        }
        let (i, j) = s
            .split_once(':')
            .ok_or_else(|| format!("plane `{s}` is neither `i:j` nor `u…|v…`"))?;
        let index = |x: &str| x.trim().parse::<usize>().map_err(|e| format!("`{x}` in plane `{s}`: {e}"));
        Ok(PlaneSpec::Coordinates(index(i)?, index(j)?))
    }
}

/// A checked plane, ready to project points of a given dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct Plane {
    pub name: String,
    u: Vec<f64>,
    v: Vec<f64>,
}

impl PlaneSpec {
    pub fn resolve(&self, dim: usize) -> Result<Plane, String> {
        match self {
            PlaneSpec::Coordinates(i, j) => {
                if *i >= dim || *j >= dim || i == j {
                    return Err(format!("coordinate plane {i}:{j} invalid for dimension {dim}"));
                }
                let axis = |k: usize| (0..dim).map(|m| if m == k { 1.0 } else { 0.0 }).collect();
                Ok(Plane {
                    name: format!("x{i}-x{j}"),
                    u: axis(*i),
                    v: axis(*j),
                })
            }
            PlaneSpec::Directions(u, v) => {
                if u.len() != dim || v.len() != dim {
                    return Err(format!("plane directions need {dim} components"));
                }
                let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
                let orthonormal = (dot(u, u) - 1.0).abs() <= ORTHONORMAL_TOL
                    && (dot(v, v) - 1.0).abs() <= ORTHONORMAL_TOL
                    && dot(u, v).abs() <= ORTHONORMAL_TOL;
                if !orthonormal {
                    return Err("plane directions must be orthonormal".into());
                }
                Ok(Plane {
                    name: String::new(),
                    u: u.clone(),
                    v: v.clone(),
                })
            }
        }
    }
}

impl Plane {
    /// Extent `[lo, hi]` of `⟨x, w⟩` over the unit cube.
    fn extent(w: &[f64]) -> (f64, f64) {
        let lo = w.iter().map(|c| c.min(0.0)).sum();
        let hi = w.iter().map(|c| c.max(0.0)).sum();
        (lo, hi)
    }

    /// Unit-square coordinates of a cube point. Both axes share the scale
    /// of the longer extent, so shapes are preserved; the shorter axis is
    /// centred.
    pub fn project(&self, x: &[f64]) -> (f64, f64) {
        let (ulo, uhi) = Self::extent(&self.u);
        let (vlo, vhi) = Self::extent(&self.v);
        let scale = (uhi - ulo).max(vhi - vlo);
        let coord = |w: &[f64], lo: f64, hi: f64| {
            let raw: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum();
            (raw - lo) / scale + (1.0 - (hi - lo) / scale) / 2.0
        };
        (coord(&self.u, ulo, uhi), coord(&self.v, vlo, vhi))
    }
}

/// Writes one `<plane>.tsv` per plane into `out_dir`, with columns
/// `u v value eval_index`, one row per history point.
pub fn export_projections(history: &[RatedPoint], planes: &[PlaneSpec], out_dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    anyhow::ensure!(!history.is_empty(), "no evaluated points to project");
    let dim = history[0].position.len();
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    for (k, spec) in planes.iter().enumerate() {
        let mut plane = spec.resolve(dim).map_err(anyhow::Error::msg)?;
        if plane.name.is_empty() {
            plane.name = format!("plane{k}");
        }
        let path = out_dir.join(format!("{}.tsv", plane.name));
        let mut w = std::io::BufWriter::new(std::fs::File::create(&path)?);
        writeln!(w, "u\tv\tvalue\teval_index")?;
        for p in history {
            let (u, v) = plane.project(&p.position);
            writeln!(w, "{u}\t{v}\t{}\t{}", p.value, p.eval_index)?;
        }
        w.flush()?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_both_forms() {
        assert_eq!("0:3".parse::<PlaneSpec>().unwrap(), PlaneSpec::Coordinates(0, 3));
        assert_eq!(
            "1,0|0,1".parse::<PlaneSpec>().unwrap(),
            PlaneSpec::Directions(vec![1.0, 0.0], vec![0.0, 1.0])
        );
        assert!("0-1".parse::<PlaneSpec>().is_err());
        assert!("a:1".parse::<PlaneSpec>().is_err());
    }

    #[test]
    fn coordinate_plane_reads_coordinates() {
        let plane = PlaneSpec::Coordinates(0, 1).resolve(3).unwrap();
        assert_eq!(plane.project(&[0.2, 0.7, 0.9]), (0.2, 0.7));
    }

    #[test]
    fn centre_maps_to_centre() {
        let h = 0.5f64.sqrt();
        let third = (1.0f64 / 3.0).sqrt();
        let planes = [
            PlaneSpec::Directions(vec![h, h, 0.0], vec![0.0, 0.0, 1.0]),
            PlaneSpec::Directions(vec![h, -h, 0.0], vec![third, third, third]),
        ];
        for spec in planes {
            let (u, v) = spec.resolve(3).unwrap().project(&[0.5; 3]);
            assert!((u - 0.5).abs() < 1e-12 && (v - 0.5).abs() < 1e-12, "{u} {v}");
        }
    }

    #[test]
    fn oblique_projection_stays_in_unit_square() {
        let h = 0.5f64.sqrt();
        let plane = PlaneSpec::Directions(vec![h, -h, 0.0], vec![0.0, 0.0, 1.0]).resolve(3).unwrap();
        for corner in 0..8 {
            let x: Vec<f64> = (0..3).map(|b| f64::from((corner >> b) & 1)).collect();
            let (u, v) = plane.project(&x);
            assert!((-1e-12..=1.0 + 1e-12).contains(&u) && (-1e-12..=1.0 + 1e-12).contains(&v));
        }
    }

    #[test]
    fn rejects_non_orthonormal_planes() {
        assert!(PlaneSpec::Directions(vec![1.0, 0.0], vec![1.0, 0.0]).resolve(2).is_err());
        assert!(PlaneSpec::Directions(vec![2.0, 0.0], vec![0.0, 1.0]).resolve(2).is_err());
        assert!(PlaneSpec::Directions(vec![1.0], vec![0.0, 1.0]).resolve(2).is_err());
        assert!(PlaneSpec::Coordinates(1, 1).resolve(2).is_err());
        assert!(PlaneSpec::Coordinates(0, 2).resolve(2).is_err());
    }

    #[test]
    fn one_row_per_point() {
        let dir = tempfile::tempdir().unwrap();
        let history: Vec<RatedPoint> = (0..7).map(|i| RatedPoint::new(vec![0.1 * i as f64, 0.5], i as f64, i)).collect();
        let files = export_projections(&history, &[PlaneSpec::Coordinates(1, 0)], dir.path()).unwrap();
        let text = std::fs::read_to_string(&files[0]).unwrap();
        assert_eq!(text.lines().count(), 1 + history.len());
        assert!(files[0].ends_with("x1-x0.tsv"));
        assert!(export_projections(&[], &[PlaneSpec::Coordinates(0, 1)], dir.path()).is_err());
    }
}
