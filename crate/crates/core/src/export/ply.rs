//! ASCII PLY with `x y z sigma semantic` float vertex properties.

use std::fmt::Write as _;
use std::path::Path;

use super::FruitPointCloud;
use crate::geom::Vec3;
use crate::{Error, Result};

const PROPERTIES: [&str; 5] = ["x", "y", "z", "sigma", "semantic"];

pub fn to_ply_string(cloud: &FruitPointCloud) -> String {
    let mut s = String::new();
    s.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(s, "element vertex {}", cloud.len());
    for p in PROPERTIES {
        let _ = writeln!(s, "property float {p}");
    }
    s.push_str("end_header\n");
    for i in 0..cloud.len() {
        let p = cloud.points[i];
        let _ = writeln!(
            s,
            "{} {} {} {} {}",
            p.x() as f32,
            p.y() as f32,
            p.z() as f32,
            cloud.sigma[i] as f32,
            cloud.semantic[i] as f32
        );
    }
    s
}

pub fn write_ply(cloud: &FruitPointCloud, path: &Path) -> Result<()> {
    std::fs::write(path, to_ply_string(cloud)).map_err(|e| Error::io(path, e))
}

pub fn read_ply(path: &Path) -> Result<FruitPointCloud> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_ply(&text, path)
}

/// Parses the ASCII vertex layout written by [`write_ply`]. Vertex
/// properties may come in any order; `sigma` and `semantic` are optional and
/// unknown scalar properties are skipped. Errors carry 1-based line numbers.
pub fn parse_ply(text: &str, path: &Path) -> Result<FruitPointCloud> {
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let mut next = |what: &str| lines.next().ok_or_else(|| err(0, format!("unexpected end of file, expected {what}")));

    let (n, l) = next("magic")?;
    if l != "ply" {
        return Err(err(n, format!("bad magic {l:?}, expected \"ply\"")));
    }
    let mut vertices: Option<usize> = None;
    let mut props: Vec<String> = Vec::new();
    let mut in_vertex = false;
    let mut saw_format = false;
    loop {
        let (n, l) = next("end_header")?;
        let words: Vec<&str> = l.split_whitespace().collect();
        match words.as_slice() {
            ["end_header"] => break,
            [] | ["comment", ..] | ["obj_info", ..] => {}
            ["format", "ascii", "1.0"] => saw_format = true,
            ["format", ..] => return Err(err(n, format!("unsupported format {l:?}"))),
            ["element", "vertex", count] => {
                let c = count
                    .parse()
                    .map_err(|_| err(n, format!("bad vertex count {count:?}")))?;
                vertices = Some(c);
                in_vertex = true;
            }
            ["element", _, count] => {
                if count.parse::<usize>().map_err(|_| err(n, format!("bad element count {count:?}")))? != 0 {
                    return Err(err(n, "only vertex elements are supported".into()));
                }
                in_vertex = false;
            }
            ["property", ty, name] => {
                if !matches!(*ty, "float" | "float32" | "double" | "float64") {
                    return Err(err(n, format!("unsupported property type {ty:?}")));
                }
                if in_vertex {
                    props.push(name.to_string());
                }
            }
            _ => return Err(err(n, format!("unrecognized header line {l:?}"))),
        }
    }
    if !saw_format {
        return Err(err(0, "missing `format ascii 1.0` line".into()));
    }
    let count = vertices.ok_or_else(|| err(0, "missing `element vertex` line".into()))?;
    let col = |name: &str| props.iter().position(|p| p == name);
    let (Some(cx), Some(cy), Some(cz)) = (col("x"), col("y"), col("z")) else {
        return Err(err(0, "vertex element lacks x, y or z".into()));
    };
    let (cs, cm) = (col("sigma"), col("semantic"));

    let mut cloud = FruitPointCloud::default();
    for i in 0..count {
        let (n, l) = next(&format!("vertex {} of {count}", i + 1))
            .map_err(|_| err(0, format!("truncated body: {i} of {count} vertices present")))?;
        let vals: Vec<f64> = l
            .split_whitespace()
            .map(|w| w.parse::<f64>().map_err(|_| err(n, format!("bad number {w:?}"))))
            .collect::<Result<_>>()?;
        if vals.len() != props.len() {
            return Err(err(n, format!("expected {} values, found {}", props.len(), vals.len())));
        }
        cloud.push(
            Vec3::new(vals[cx], vals[cy], vals[cz]),
            cs.map_or(0.0, |c| vals[c]),
            cm.map_or(0.0, |c| vals[c]),
        );
    }
    for (n, l) in lines {
        if !l.is_empty() {
            return Err(err(n, "unexpected data after the last vertex".into()));
        }
    }
    Ok(cloud)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> FruitPointCloud {
        let mut c = FruitPointCloud::default();
        c.push(Vec3::new(0.1, -0.2, 0.3), 12.5, 0.97);
        c.push(Vec3::new(1.0 / 3.0, 2.0 / 7.0, -0.123456789), 400.0, 0.9999);
        c
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ply");
        let c = sample();
        write_ply(&c, &path).unwrap();
        let back = read_ply(&path).unwrap();
        assert_eq!(back.len(), 2);
        for i in 0..2 {
            for a in 0..3 {
                let (x, y) = (c.points[i][a], back.points[i][a]);
                assert!((x - y).abs() <= f32::EPSILON as f64 * x.abs().max(1e-30));
            }
            assert!((c.sigma[i] - back.sigma[i]).abs() <= f32::EPSILON as f64 * c.sigma[i]);
            assert!((c.semantic[i] - back.semantic[i]).abs() <= f32::EPSILON as f64);
        }
    }

    #[test]
    fn empty_cloud_is_valid() {
        let s = to_ply_string(&FruitPointCloud::default());
        assert!(s.contains("element vertex 0\n"));
        assert!(parse_ply(&s, Path::new("e.ply")).unwrap().is_empty());
    }

    #[test]
    fn rejects_wrong_magic() {
        let s = to_ply_string(&sample()).replacen("ply", "plx", 1);
        match parse_ply(&s, Path::new("m.ply")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn reports_line_numbers() {
        let s = to_ply_string(&sample());
        let bad = s.replace("12.5", "twelve");
        match parse_ply(&bad, Path::new("b.ply")) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 10);
                assert!(message.contains("twelve"));
            }
            other => panic!("{other:?}"),
        }
        let truncated: String = s.lines().take(10).map(|l| format!("{l}\n")).collect();
        let e = parse_ply(&truncated, Path::new("t.ply")).unwrap_err();
        assert!(e.to_string().contains("truncated"), "{e}");
        let short = s.replace(" 0.97", "");
        match parse_ply(&short, Path::new("s.ply")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 10),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn accepts_reordered_and_extra_properties() {
        let s = "ply\nformat ascii 1.0\ncomment x\nelement vertex 1\nproperty float semantic\nproperty double w\nproperty float z\nproperty float y\nproperty float x\nend_header\n0.5 9 3 2 1\n";
        let c = parse_ply(s, Path::new("r.ply")).unwrap();
        assert_eq!(c.points[0], Vec3::new(1.0, 2.0, 3.0));
        assert_eq!(c.semantic[0], 0.5);
        assert_eq!(c.sigma[0], 0.0);
    }
}
