//! Mesh writers: binary PLY (lossless, with labels), OBJ and glTF.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use nalgebra::Point3;
use serde_json::json;

use crate::config::ExportFormat;
use crate::error::{Error, Result};
use crate::geometry::{Label, Rgb, TriangleMesh};

fn to_u8(c: f32) -> u8 {
    (c.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Binary little-endian PLY: double positions, byte colors and, when the
/// mesh is labelled, an int `label` per vertex.
pub fn write_ply(mesh: &TriangleMesh, mut w: impl Write) -> Result<()> {
    let labels = mesh.labels();
    let mut header = format!(
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\n\
property double x\nproperty double y\nproperty double z\n\
property uchar red\nproperty uchar green\nproperty uchar blue\n",
        mesh.vertex_count()
    );
    if labels.is_some() {
        header.push_str("property int label\n");
    }
    header.push_str(&format!(
        "element face {}\nproperty list uchar int vertex_indices\nend_header\n",
        mesh.face_count()
    ));
    w.write_all(header.as_bytes())?;
    let mut buf = Vec::with_capacity(mesh.vertex_count() * 31 + mesh.face_count() * 13);
    for (i, (v, c)) in mesh.vertices().iter().zip(mesh.colors()).enumerate() {
        for k in 0..3 {
            buf.extend_from_slice(&v[k].to_le_bytes());
        }
        buf.extend(c.iter().map(|&x| to_u8(x)));
        if let Some(l) = labels {
            buf.extend_from_slice(&i32::from(l[i]).to_le_bytes());
        }
    }
    for f in mesh.faces() {
        buf.push(3);
        for &i in f {
            buf.extend_from_slice(&(i as i32).to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

/// Read a PLY written by [`write_ply`].
pub fn read_ply(r: impl Read) -> Result<TriangleMesh> {
    let mut r = BufReader::new(r);
    let bad = |m: &str| Error::invalid(format!("PLY: {m}"));
    let mut line = String::new();
    let (mut nv, mut nf, mut labelled) = (None, None, false);
    loop {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(bad("header not terminated"));
        }
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["end_header"] => break,
            ["format", fmt, _] if *fmt != "binary_little_endian" => return Err(bad("only binary_little_endian is supported")),
            ["element", "vertex", n] => nv = n.parse::<usize>().ok(),
            ["element", "face", n] => nf = n.parse::<usize>().ok(),
            ["property", "int", "label"] => labelled = true,
            _ => {}
        }
    }
    let (nv, nf) = (nv.ok_or_else(|| bad("no vertex count"))?, nf.ok_or_else(|| bad("no face count"))?);
    let mut body = Vec::new();
    r.read_to_end(&mut body)?;
    let stride = 27 + if labelled { 4 } else { 0 };
    if body.len() != nv * stride + nf * 13 {
        return Err(bad("body length does not match the header"));
    }
    let f64_at = |o: usize| f64::from_le_bytes(body[o..o + 8].try_into().expect("8 bytes"));
    let i32_at = |o: usize| i32::from_le_bytes(body[o..o + 4].try_into().expect("4 bytes"));
    let mut vertices = Vec::with_capacity(nv);
    let mut colors: Vec<Rgb> = Vec::with_capacity(nv);
    let mut labels: Vec<Label> = Vec::new();
    for i in 0..nv {
        let o = i * stride;
        vertices.push(Point3::new(f64_at(o), f64_at(o + 8), f64_at(o + 16)));
        colors.push([0, 1, 2].map(|k| body[o + 24 + k] as f32 / 255.0));
        if labelled {
            let l = i32_at(o + 27);
            labels.push(Label::try_from(l).map_err(|_| bad("label out of range"))?);
        }
    }
    let mut faces = Vec::with_capacity(nf);
    let base = nv * stride;
    for i in 0..nf {
        let o = base + i * 13;
        if body[o] != 3 {
            return Err(bad("only triangles are supported"));
        }
        let idx = [0, 1, 2].map(|k| i32_at(o + 1 + 4 * k));
        if idx.iter().any(|&x| x < 0) {
            return Err(bad("negative vertex index"));
        }
        faces.push(idx.map(|x| x as u32));
    }
    TriangleMesh::new(vertices, faces, colors, labelled.then_some(labels))
}

/// Wavefront OBJ with per-vertex colors appended to `v` lines.
pub fn write_obj(mesh: &TriangleMesh, mut w: impl Write) -> Result<()> {
    let mut out = String::new();
    use std::fmt::Write as _;
    for (v, c) in mesh.vertices().iter().zip(mesh.colors()) {
        let _ = writeln!(out, "v {} {} {} {:.4} {:.4} {:.4}", v.x, v.y, v.z, c[0], c[1], c[2]);
    }
    for f in mesh.faces() {
        let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    w.write_all(out.as_bytes())?;
    Ok(())
}

/// glTF 2.0 JSON with one embedded base64 buffer: f32 positions, f32 vertex
/// colors and u32 indices.
pub fn write_gltf(mesh: &TriangleMesh, mut w: impl Write) -> Result<()> {
    let nv = mesh.vertex_count();
    let mut bin = Vec::with_capacity(nv * 24 + mesh.face_count() * 12);
    let mut min = [f32::INFINITY; 3];
    let mut max = [f32::NEG_INFINITY; 3];
    for v in mesh.vertices() {
        for k in 0..3 {
            let x = v[k] as f32;
            min[k] = min[k].min(x);
            max[k] = max[k].max(x);
            bin.extend_from_slice(&x.to_le_bytes());
        }
    }
    for c in mesh.colors() {
        for x in c {
            bin.extend_from_slice(&x.to_le_bytes());
        }
    }
    for f in mesh.faces() {
        for i in f {
            bin.extend_from_slice(&i.to_le_bytes());
        }
    }
    if nv == 0 {
        min = [0.0; 3];
        max = [0.0; 3];
    }
    let (pos_len, col_len, idx_len) = (nv * 12, nv * 12, mesh.face_count() * 12);
    let doc = json!({
        "asset": {"version": "2.0", "generator": "spaceblender"},
        "scene": 0,
        "scenes": [{"nodes": [0]}],
        "nodes": [{"mesh": 0}],
        "meshes": [{"primitives": [{
            "attributes": {"POSITION": 0, "COLOR_0": 1},
            "indices": 2,
            "mode": 4
        }]}],
        "buffers": [{
            "byteLength": bin.len(),
            "uri": format!("data:application/octet-stream;base64,{}", B64.encode(&bin))
        }],
        "bufferViews": [
            {"buffer": 0, "byteOffset": 0, "byteLength": pos_len, "target": 34962},
            {"buffer": 0, "byteOffset": pos_len, "byteLength": col_len, "target": 34962},
            {"buffer": 0, "byteOffset": pos_len + col_len, "byteLength": idx_len, "target": 34963}
        ],
        "accessors": [
            {"bufferView": 0, "componentType": 5126, "count": nv, "type": "VEC3", "min": min, "max": max},
            {"bufferView": 1, "componentType": 5126, "count": nv, "type": "VEC3"},
            {"bufferView": 2, "componentType": 5125, "count": mesh.face_count() * 3, "type": "SCALAR"}
        ]
    });
    serde_json::to_writer(&mut w, &doc)?;
    Ok(())
}

pub fn export_mesh(mesh: &TriangleMesh, path: impl AsRef<Path>, format: ExportFormat) -> Result<()> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    match format {
        ExportFormat::Ply => write_ply(mesh, file),
        ExportFormat::Obj => write_obj(mesh, file),
        ExportFormat::Gltf => write_gltf(mesh, file),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad() -> TriangleMesh {
        TriangleMesh::new(
            vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(1.0, 1.0, 0.1),
                Point3::new(0.0, 1.0, -0.25),
            ],
            vec![[0, 1, 2], [0, 2, 3]],
            vec![[0.0, 0.5, 1.0], [0.2, 0.2, 0.2], [1.0, 0.0, 0.0], [0.1, 0.9, 0.3]],
            Some(vec![0, 3, 5, 28]),
        )
        .unwrap()
    }

    #[test]
    fn ply_round_trip() {
        let mesh = quad();
        let mut bytes = Vec::new();
        write_ply(&mesh, &mut bytes).unwrap();
        let back = read_ply(bytes.as_slice()).unwrap();
        assert_eq!(back.vertices(), mesh.vertices());
        assert_eq!(back.faces(), mesh.faces());
        assert_eq!(back.labels(), mesh.labels());
        for (a, b) in back.colors().iter().zip(mesh.colors()) {
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() <= 1.0 / 255.0);
            }
        }
    }

    #[test]
    fn obj_and_gltf_are_well_formed() {
        let mesh = quad();
        let mut obj = Vec::new();
        write_obj(&mesh, &mut obj).unwrap();
        let text = String::from_utf8(obj).unwrap();
        assert_eq!(text.lines().filter(|l| l.starts_with("v ")).count(), 4);
        assert!(text.contains("f 1 3 4"));
        let mut gltf = Vec::new();
        write_gltf(&mesh, &mut gltf).unwrap();
        let doc: serde_json::Value = serde_json::from_slice(&gltf).unwrap();
        assert_eq!(doc["accessors"][2]["count"], 6);
        let uri = doc["buffers"][0]["uri"].as_str().unwrap();
        let bin = B64.decode(uri.split_once(',').unwrap().1).unwrap();
        assert_eq!(bin.len(), 4 * 12 * 2 + 2 * 12);
        assert_eq!(f32::from_le_bytes(bin[12..16].try_into().unwrap()), 1.0);
    }
}
