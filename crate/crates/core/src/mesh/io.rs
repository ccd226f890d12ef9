//! Plain-text mesh format, one record per line:
//!
//! ```text
//! meta grid_h <h>
//! meta eta <eta>                     (thick meshes only)
//! node <id> <x> <y>
//! tri <id> <n0> <n1> <n2> <label>    (label: outer | inclusion:<i> | membrane:<i>)
//! loop <comp> <n0> <n1> ... <n0>
//! ```
//!
//! Ids are 0-based and must be contiguous. Lines end with LF.

use std::fmt::Write as _;
use std::path::Path;

use super::{on_unit_square_boundary, InterfaceLoop, Mesh, MeshError, RegionLabel, Triangle};

pub fn write_mesh_string(mesh: &Mesh) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "meta grid_h {}", mesh.grid_h);
    if let Some(eta) = mesh.eta {
        let _ = writeln!(s, "meta eta {eta}");
    }
    for (i, p) in mesh.nodes.iter().enumerate() {
        let _ = writeln!(s, "node {i} {} {}", p[0], p[1]);
    }
    for (i, t) in mesh.triangles.iter().enumerate() {
        let [a, b, c] = t.nodes;
        let _ = writeln!(s, "tri {i} {a} {b} {c} {}", t.label);
    }
    for l in &mesh.loops {
        let _ = write!(s, "loop {}", l.component_id);
        for v in l.node_ids.iter().chain(l.node_ids.first()) {
            let _ = write!(s, " {v}");
        }
        s.push('\n');
    }
    s
}

pub fn write_mesh(mesh: &Mesh, path: &Path) -> Result<(), MeshError> {
    std::fs::write(path, write_mesh_string(mesh)).map_err(|e| MeshError::Io(e.to_string()))
}

pub fn read_mesh(path: &Path) -> Result<Mesh, MeshError> {
    let text = std::fs::read_to_string(path).map_err(|e| MeshError::Io(e.to_string()))?;
    read_mesh_str(&text)
}

fn perr(line: usize, message: impl Into<String>) -> MeshError {
    MeshError::ParseError {
        line,
        message: message.into(),
    }
}

fn field<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T, MeshError> {
    let tok = tok.ok_or_else(|| perr(line, format!("missing {what}")))?;
    tok.parse()
        .map_err(|_| perr(line, format!("cannot parse {what} from '{tok}'")))
}

pub fn read_mesh_str(text: &str) -> Result<Mesh, MeshError> {
    let line_count = text.lines().count();
    if !text.is_empty() && !text.ends_with('\n') {
        return Err(perr(line_count, "truncated file: last line has no line ending"));
    }
    let mut grid_h = None;
    let mut eta = None;
    let mut nodes: Vec<[f64; 2]> = Vec::new();
    let mut tris: Vec<(usize, [usize; 3], RegionLabel)> = Vec::new();
    let mut loops: Vec<(usize, usize, Vec<usize>)> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let mut toks = raw.split_whitespace();
        let Some(kind) = toks.next() else { continue };
        match kind {
            "meta" => {
                let key: String = field(toks.next(), line, "meta key")?;
                let val: f64 = field(toks.next(), line, "meta value")?;
                match key.as_str() {
                    "grid_h" => grid_h = Some(val),
                    "eta" => eta = Some(val),
                    _ => return Err(perr(line, format!("unknown meta key '{key}'"))),
                }
            }
            "node" => {
                let id: usize = field(toks.next(), line, "node id")?;
                if id != nodes.len() {
                    return Err(perr(line, format!("node id {id} out of sequence")));
                }
                let x: f64 = field(toks.next(), line, "x coordinate")?;
                let y: f64 = field(toks.next(), line, "y coordinate")?;
                if !x.is_finite() || !y.is_finite() {
                    return Err(perr(line, "non-finite coordinate"));
                }
                nodes.push([x, y]);
            }
            "tri" => {
                let id: usize = field(toks.next(), line, "triangle id")?;
                if id != tris.len() {
                    return Err(perr(line, format!("triangle id {id} out of sequence")));
                }
                let a = field(toks.next(), line, "vertex")?;
                let b = field(toks.next(), line, "vertex")?;
                let c = field(toks.next(), line, "vertex")?;
                let label_tok = toks.next().ok_or_else(|| perr(line, "missing region label"))?;
                let label: RegionLabel = label_tok.parse().map_err(|e: String| perr(line, e))?;
                tris.push((line, [a, b, c], label));
            }
            "loop" => {
                let comp: usize = field(toks.next(), line, "component id")?;
                let ids = toks
                    .by_ref()
                    .map(|t| t.parse::<usize>().map_err(|_| perr(line, format!("bad node id '{t}'"))))
                    .collect::<Result<Vec<_>, _>>()?;
                if ids.len() < 4 || ids.first() != ids.last() {
                    return Err(perr(line, "loop must list at least 3 nodes and repeat the first at the end"));
                }
                loops.push((line, comp, ids[..ids.len() - 1].to_vec()));
            }
            other => return Err(perr(line, format!("unknown record '{other}'"))),
        }
        if toks.next().is_some() {
            return Err(perr(line, "trailing tokens"));
        }
    }

    let grid_h = grid_h.ok_or_else(|| perr(line_count, "missing 'meta grid_h' record"))?;
    if nodes.is_empty() || tris.is_empty() {
        return Err(perr(line_count, "truncated file: no nodes or no triangles"));
    }
    let n = nodes.len();
    let mut triangles = Vec::with_capacity(tris.len());
    for (line, vs, label) in tris {
        if let Some(&bad) = vs.iter().find(|&&v| v >= n) {
            return Err(perr(line, format!("triangle references node {bad} but only {n} nodes exist")));
        }
        triangles.push(Triangle { nodes: vs, label });
    }
    let mut mesh_loops = Vec::with_capacity(loops.len());
    for (line, comp, ids) in loops {
        if let Some(&bad) = ids.iter().find(|&&v| v >= n) {
            return Err(perr(line, format!("loop references node {bad} but only {n} nodes exist")));
        }
        let l = InterfaceLoop::from_nodes(comp, ids, &nodes).map_err(|e| perr(line, e.to_string()))?;
        mesh_loops.push(l);
    }
    let boundary_nodes = (0..n).filter(|&v| on_unit_square_boundary(nodes[v])).collect();
    let mesh = Mesh {
        nodes,
        triangles,
        boundary_nodes,
        loops: mesh_loops,
        grid_h,
        eta,
    };
    let area = mesh.total_area();
    if (area - 1.0).abs() > 1e-9 {
        return Err(perr(
            line_count,
            format!("truncated file: triangles cover area {area}, expected 1"),
        ));
    }
    let comps: std::collections::BTreeSet<usize> =
        mesh.triangles.iter().filter_map(|t| t.label.component()).collect();
    for c in comps {
        if !mesh.loops.iter().any(|l| l.component_id == c) {
            return Err(perr(line_count, format!("truncated file: no loop for component {c}")));
        }
    }
    mesh.validate().map_err(|e| perr(line_count, e.to_string()))?;
    Ok(mesh)
}
