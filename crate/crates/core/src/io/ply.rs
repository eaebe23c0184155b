//! Binary little-endian PLY in the common splat layout, plus `s_sem`,
//! `critical` and `id` extension properties.
//!
//! Writers emit `double` for every real-valued field so that a round trip is
//! bit-exact; readers accept any scalar type per property.

use std::fs;
use std::path::Path;

use log::warn;
use nalgebra::Quaternion;

use crate::error::{Error, Result};
use crate::math::{Rgb, Vec3};
use crate::scene::{Gaussian, GaussianId, ObjectGaussian, Splat};
use crate::sh::{degree_for_len, TimeVaryingSh};

/// Header comment identifying files written by this crate.
pub const PLY_MAGIC: &str = "splatprio ply v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Self::I8 => "char",
            Self::U8 => "uchar",
            Self::I16 => "short",
            Self::U16 => "ushort",
            Self::I32 => "int",
            Self::U32 => "uint",
            Self::F32 => "float",
            Self::F64 => "double",
        }
    }

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }

    fn read(self, b: &[u8]) -> f64 {
        match self {
            Self::I8 => b[0] as i8 as f64,
            Self::U8 => b[0] as f64,
            Self::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Self::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Self::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }

    fn write(self, v: f64, out: &mut Vec<u8>) {
        match self {
            Self::I8 => out.push(v as i8 as u8),
            Self::U8 => out.push(v as u8),
            Self::I16 => out.extend((v as i16).to_le_bytes()),
            Self::U16 => out.extend((v as u16).to_le_bytes()),
            Self::I32 => out.extend((v as i32).to_le_bytes()),
            Self::U32 => out.extend((v as u32).to_le_bytes()),
            Self::F32 => out.extend((v as f32).to_le_bytes()),
            Self::F64 => out.extend(v.to_le_bytes()),
        }
    }
}

/// One vertex element held as a dense row-major table of `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct PlyTable {
    pub properties: Vec<(String, Scalar)>,
    pub comments: Vec<String>,
    pub rows: usize,
    pub values: Vec<f64>,
}

impl PlyTable {
    pub fn new(properties: Vec<(String, Scalar)>) -> Self {
        Self {
            properties,
            comments: vec![PLY_MAGIC.to_string()],
            rows: 0,
            values: Vec::new(),
        }
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.properties.iter().position(|(n, _)| n == name)
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let w = self.properties.len();
        &self.values[r * w..(r + 1) * w]
    }

    pub fn push_row(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.properties.len(), "row width");
        self.values.extend_from_slice(row);
        self.rows += 1;
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut header = String::from("ply\nformat binary_little_endian 1.0\n");
        for c in &self.comments {
            header.push_str(&format!("comment {c}\n"));
        }
        header.push_str(&format!("element vertex {}\n", self.rows));
        for (name, ty) in &self.properties {
            header.push_str(&format!("property {} {name}\n", ty.name()));
        }
        header.push_str("end_header\n");
        let row_bytes: usize = self.properties.iter().map(|(_, t)| t.size()).sum();
        let mut out = header.into_bytes();
        out.reserve(row_bytes * self.rows);
        for r in 0..self.rows {
            for ((_, ty), v) in self.properties.iter().zip(self.row(r)) {
                ty.write(*v, &mut out);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let err = |offset: usize, message: String| Error::Ply {
            offset: offset as u64,
            message,
        };
        let mut pos = 0;
        let next_line = |pos: &mut usize| -> Result<(usize, String)> {
            let start = *pos;
            let end = bytes[start..]
                .iter()
                .position(|&b| b == b'\n')
                .ok_or_else(|| err(start, "unterminated header".into()))?;
            *pos = start + end + 1;
            let line = std::str::from_utf8(&bytes[start..start + end])
                .map_err(|_| err(start, "header is not valid UTF-8".into()))?;
            Ok((start, line.trim_end_matches('\r').to_string()))
        };

        let (at, magic) = next_line(&mut pos)?;
        if magic != "ply" {
            return Err(err(at, format!("expected 'ply' magic, found '{magic}'")));
        }
        let mut table = Self {
            properties: Vec::new(),
            comments: Vec::new(),
            rows: 0,
            values: Vec::new(),
        };
        let mut seen_format = false;
        let mut seen_vertex = false;
        loop {
            let (at, line) = next_line(&mut pos)?;
            let mut words = line.split_whitespace();
            match words.next() {
                Some("format") => {
                    let fmt: Vec<&str> = words.collect();
                    if fmt != ["binary_little_endian", "1.0"] {
                        return Err(err(at, format!("unsupported format '{}'", fmt.join(" "))));
                    }
                    seen_format = true;
                }
                Some("comment") | Some("obj_info") => {
                    let text = line.split_once(' ').map_or("", |(_, rest)| rest);
                    table.comments.push(text.to_string());
                }
                Some("element") => {
                    let (name, count) = (words.next(), words.next());
                    let count: usize = count
                        .and_then(|c| c.parse().ok())
                        .ok_or_else(|| err(at, format!("bad element line '{line}'")))?;
                    if name != Some("vertex") || seen_vertex {
                        return Err(err(at, format!("unsupported element '{}'", name.unwrap_or(""))));
                    }
                    seen_vertex = true;
                    table.rows = count;
                }
                Some("property") => {
                    if !seen_vertex {
                        return Err(err(at, "property before element".into()));
                    }
                    let ty = words.next().unwrap_or("");
                    if ty == "list" {
                        return Err(err(at, "list properties are not supported".into()));
                    }
                    let ty = Scalar::parse(ty).ok_or_else(|| err(at, format!("unknown property type '{ty}'")))?;
                    let name = words
                        .next()
                        .ok_or_else(|| err(at, "property without a name".into()))?;
                    table.properties.push((name.to_string(), ty));
                }
                Some("end_header") => break,
                _ => return Err(err(at, format!("unexpected header line '{line}'"))),
            }
        }
        if !seen_format {
            return Err(err(pos, "missing format line".into()));
        }
        if !seen_vertex {
            return Err(err(pos, "missing vertex element".into()));
        }

        let row_bytes: usize = table.properties.iter().map(|(_, t)| t.size()).sum();
        let body = &bytes[pos..];
        let complete = body.len().checked_div(row_bytes).unwrap_or(usize::MAX);
        if complete < table.rows {
            return Err(err(
                pos + complete * row_bytes,
                format!("truncated body: vertex {} of {} is incomplete", complete, table.rows),
            ));
        }
        table.values.reserve(table.rows * table.properties.len());
        let mut at = 0;
        for _ in 0..table.rows {
            for (_, ty) in &table.properties {
                table.values.push(ty.read(&body[at..]));
                at += ty.size();
            }
        }
        if at < body.len() {
            warn!("ignoring {} trailing bytes after the PLY body", body.len() - at);
        }
        Ok(table)
    }
}

fn rest_names(coeffs: usize) -> Vec<String> {
    (0..3 * (coeffs - 1)).map(|i| format!("f_rest_{i}")).collect()
}

fn core_properties(coeffs: usize) -> Vec<(String, Scalar)> {
    let mut names: Vec<String> = ["x", "y", "z", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3", "opacity"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    names.extend((0..3).map(|c| format!("f_dc_{c}")));
    names.extend(rest_names(coeffs));
    let mut props: Vec<(String, Scalar)> = names.into_iter().map(|n| (n, Scalar::F64)).collect();
    props.push(("s_sem".into(), Scalar::F64));
    props.push(("critical".into(), Scalar::U8));
    props.push(("id".into(), Scalar::U32));
    props
}

/// Coefficients laid out as `f_dc_0..2` then `f_rest_*` channel-major.
fn push_sh(row: &mut Vec<f64>, sh: &[Rgb]) {
    row.extend(sh[0].iter());
    for c in 0..3 {
        row.extend(sh[1..].iter().map(|k| k[c]));
    }
}

fn push_core<A>(row: &mut Vec<f64>, g: &Splat<A>, sh: &[Rgb]) {
    row.extend(g.mean.iter());
    row.extend(g.log_scale.iter());
    let q = &g.rotation.coords;
    row.extend([q.w, q.x, q.y, q.z]);
    row.push(g.opacity_logit);
    push_sh(row, sh);
}

fn push_extensions<A>(row: &mut Vec<f64>, g: &Splat<A>) -> Result<()> {
    row.push(g.s_sem);
    row.push(g.critical as u8 as f64);
    let id = u32::try_from(g.id.0).map_err(|_| Error::Config(format!("gaussian id {} does not fit a PLY uint", g.id.0)))?;
    row.push(id as f64);
    Ok(())
}

fn uniform_sh_len(mut lens: impl Iterator<Item = usize>) -> Result<usize> {
    let first = lens.next().unwrap_or(1);
    if lens.any(|l| l != first) {
        return Err(Error::Config("all Gaussians in one PLY must share an SH degree".into()));
    }
    degree_for_len(first).ok_or(Error::ShLength { expected: 9, got: first })?;
    Ok(first)
}

pub fn gaussians_to_table(gaussians: &[Gaussian]) -> Result<PlyTable> {
    let coeffs = uniform_sh_len(gaussians.iter().map(|g| g.sh.len()))?;
    let mut table = PlyTable::new(core_properties(coeffs));
    let mut row = Vec::with_capacity(table.properties.len());
    for g in gaussians {
        row.clear();
        push_core(&mut row, g, &g.sh);
        push_extensions(&mut row, g)?;
        table.push_row(&row);
    }
    Ok(table)
}

/// Column lookup shared by the static and object readers.
struct Columns {
    core: Vec<usize>,
    coeffs: usize,
    s_sem: Option<usize>,
    critical: Option<usize>,
    id: Option<usize>,
}

impl Columns {
    fn resolve(table: &PlyTable) -> Result<Self> {
        let required = |name: &str| {
            table.column(name).ok_or_else(|| Error::Ply {
                offset: 0,
                message: format!("missing required property '{name}'"),
            })
        };
        let mut core = Vec::new();
        for name in ["x", "y", "z", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3", "opacity", "f_dc_0", "f_dc_1", "f_dc_2"] {
            core.push(required(name)?);
        }
        let rest = table.properties.iter().filter(|(n, _)| n.starts_with("f_rest_")).count();
        let coeffs = 1 + rest / 3;
        if rest % 3 != 0 || degree_for_len(coeffs).is_none() {
            return Err(Error::Ply {
                offset: 0,
                message: format!("{rest} f_rest properties do not form an SH block of degree ≤ 2"),
            });
        }
        for name in rest_names(coeffs) {
            core.push(required(&name)?);
        }
        let cols = Self {
            core,
            coeffs,
            s_sem: table.column("s_sem"),
            critical: table.column("critical"),
            id: table.column("id"),
        };
        if cols.s_sem.is_none() || cols.critical.is_none() {
            warn!("PLY lacks s_sem/critical properties; defaulting to 0/false");
        }
        Ok(cols)
    }

    fn sh(&self, row: &[f64], first: usize) -> Vec<Rgb> {
        let n = self.coeffs;
        let at = |k: usize| row[self.core[first + k]];
        let mut sh = vec![Rgb::new(at(0), at(1), at(2))];
        for j in 1..n {
            sh.push(Rgb::new(at(3 + (j - 1)), at(3 + (n - 1) + (j - 1)), at(3 + 2 * (n - 1) + (j - 1))));
        }
        sh
    }

    fn splat<A>(&self, row: &[f64], index: usize, sh: A) -> Splat<A> {
        let v = |k: usize| row[self.core[k]];
        Splat {
            id: GaussianId(self.id.map_or(index as u64, |c| row[c] as u64)),
            mean: Vec3::new(v(0), v(1), v(2)),
            log_scale: Vec3::new(v(3), v(4), v(5)),
            rotation: Quaternion::new(v(6), v(7), v(8), v(9)),
            opacity_logit: v(10),
            sh,
            s_sem: self.s_sem.map_or(0.0, |c| row[c]),
            critical: self.critical.is_some_and(|c| row[c] != 0.0),
        }
    }
}

pub fn gaussians_from_table(table: &PlyTable) -> Result<Vec<Gaussian>> {
    let cols = Columns::resolve(table)?;
    Ok((0..table.rows)
        .map(|r| {
            let row = table.row(r);
            cols.splat(row, r, cols.sh(row, 11))
        })
        .collect())
}

fn fourier_names(order: usize, coeffs: usize) -> Vec<String> {
    let mut names = Vec::new();
    for kind in ["cos", "sin"] {
        for m in 1..=order {
            names.extend((0..3 * coeffs).map(|i| format!("t_{kind}_{m}_{i}")));
        }
    }
    names
}

/// Object-frame Gaussians with their Fourier appearance terms, stored as
/// `t_cos_<m>_<i>` / `t_sin_<m>_<i>` in the same channel-major layout as the
/// SH block, plus a per-vertex `t_period`.
pub fn object_gaussians_to_table(gaussians: &[ObjectGaussian]) -> Result<PlyTable> {
    let coeffs = uniform_sh_len(gaussians.iter().map(|g| g.sh.base.len()))?;
    let order = gaussians.first().map_or(0, |g| g.sh.order());
    if gaussians.iter().any(|g| g.sh.order() != order) {
        return Err(Error::Config("all object Gaussians must share a Fourier order".into()));
    }
    let mut props = core_properties(coeffs);
    props.extend(fourier_names(order, coeffs).into_iter().map(|n| (n, Scalar::F64)));
    props.push(("t_period".into(), Scalar::F64));
    let mut table = PlyTable::new(props);
    let mut row = Vec::new();
    for g in gaussians {
        row.clear();
        push_core(&mut row, g, &g.sh.base);
        push_extensions(&mut row, g)?;
        for terms in [&g.sh.cos, &g.sh.sin] {
            for block in terms.iter() {
                push_sh(&mut row, block);
            }
        }
        row.push(g.sh.period);
        table.push_row(&row);
    }
    Ok(table)
}

pub fn object_gaussians_from_table(table: &PlyTable) -> Result<Vec<ObjectGaussian>> {
    let cols = Columns::resolve(table)?;
    let period = table.column("t_period").ok_or_else(|| Error::Ply {
        offset: 0,
        message: "missing required property 't_period'".into(),
    })?;
    let n = 3 * cols.coeffs;
    let cos_count = table.properties.iter().filter(|(p, _)| p.starts_with("t_cos_")).count();
    if cos_count % n != 0 {
        return Err(Error::Ply {
            offset: 0,
            message: format!("{cos_count} t_cos properties do not match {} SH coefficients", cols.coeffs),
        });
    }
    let order = cos_count / n;
    let names = fourier_names(order, cols.coeffs);
    let mut fourier = Vec::with_capacity(names.len());
    for name in &names {
        fourier.push(table.column(name).ok_or_else(|| Error::Ply {
            offset: 0,
            message: format!("missing required property '{name}'"),
        })?);
    }
    let block = |row: &[f64], first: usize| -> Vec<Rgb> {
        let c = cols.coeffs;
        let at = |k: usize| row[fourier[first + k]];
        let mut sh = vec![Rgb::new(at(0), at(1), at(2))];
        for j in 1..c {
            sh.push(Rgb::new(at(3 + (j - 1)), at(3 + (c - 1) + (j - 1)), at(3 + 2 * (c - 1) + (j - 1))));
        }
        sh
    };
    Ok((0..table.rows)
        .map(|r| {
            let row = table.row(r);
            let cos = (0..order).map(|m| block(row, m * n)).collect();
            let sin = (0..order).map(|m| block(row, (order + m) * n)).collect();
            let sh = TimeVaryingSh {
                base: cols.sh(row, 11),
                cos,
                sin,
                period: row[period],
            };
            cols.splat(row, r, sh)
        })
        .collect())
}

pub fn save_ply(gaussians: &[Gaussian], path: &Path) -> Result<()> {
    fs::write(path, gaussians_to_table(gaussians)?.to_bytes())?;
    Ok(())
}

pub fn load_ply(path: &Path) -> Result<Vec<Gaussian>> {
    gaussians_from_table(&PlyTable::from_bytes(&fs::read(path)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(n: usize) -> Vec<Gaussian> {
        (0..n)
            .map(|i| {
                let f = i as f64;
                Splat {
                    id: GaussianId(i as u64 * 3),
                    mean: Vec3::new(f * 0.1, -f / 7.0, 1.0 / (f + 3.0)),
                    log_scale: Vec3::new(-2.0 - f * 1e-3, -1.5, -3.3),
                    rotation: Quaternion::new(0.9, 0.1 * f.sin(), 0.2, -0.3),
                    opacity_logit: f.cos(),
                    sh: (0..4).map(|k| Rgb::new(k as f64 * 0.3, f / 11.0, -0.1)).collect(),
                    s_sem: (f / n as f64).fract(),
                    critical: i % 3 == 0,
                }
            })
            .collect()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let g = sample(17);
        let bytes = gaussians_to_table(&g).unwrap().to_bytes();
        let back = gaussians_from_table(&PlyTable::from_bytes(&bytes).unwrap()).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn truncated_body_names_offset() {
        let table = gaussians_to_table(&sample(3)).unwrap();
        let bytes = table.to_bytes();
        let row: usize = table.properties.iter().map(|(_, t)| t.size()).sum();
        let header = bytes.len() - 3 * row;
        match PlyTable::from_bytes(&bytes[..bytes.len() - 5]) {
            Err(Error::Ply { offset, .. }) => assert_eq!(offset as usize, header + 2 * row),
            other => panic!("expected ply error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_ascii_and_missing_properties() {
        let ascii = b"ply\nformat ascii 1.0\nelement vertex 0\nend_header\n";
        assert!(matches!(PlyTable::from_bytes(ascii), Err(Error::Ply { .. })));
        let bare = b"ply\nformat binary_little_endian 1.0\nelement vertex 0\nproperty float x\nend_header\n";
        let table = PlyTable::from_bytes(bare).unwrap();
        assert!(gaussians_from_table(&table).is_err());
    }
}
