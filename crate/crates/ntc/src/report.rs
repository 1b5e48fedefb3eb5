//! JSON reports and aligned plain-text tables.

use ntc_core::metrics::MetricReport;
use ntc_core::pyramid::{grid_geometry, mips_for_level, num_feature_levels};
use ntc_core::texture::mip_count;
use ntc_core::{CompressedTexture, Profile, StorageReport};
use serde::{Deserialize, Serialize};

const MIB: f64 = 1024.0 * 1024.0;

/// Left-aligned first column, right-aligned others, two spaces apart.
pub fn table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: &mut dyn Iterator<Item = &str>| {
        let mut s = String::new();
        for (i, (cell, w)) in cells.zip(&widths).enumerate() {
            if i == 0 {
                s.push_str(&format!("{cell:<w$}"));
            } else {
                s.push_str(&format!("  {cell:>w$}"));
            }
        }
        s.trim_end().to_string() + "\n"
    };
    let mut out = line(&mut headers.iter().copied());
    let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
    out.push_str(&line(&mut rule.iter().map(String::as_str)));
    for row in rows {
        out.push_str(&line(&mut row.iter().map(String::as_str)));
    }
    out
}

fn db(v: Option<f64>) -> String {
    v.map_or_else(|| "identical".into(), |d| format!("{d:.2}"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MipJson {
    pub mip: usize,
    pub width: usize,
    pub mse: f64,
    pub psnr_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextureJson {
    pub name: String,
    pub mse: f64,
    pub psnr_db: Option<f64>,
}

/// Metric report; `psnr_db` is null when the chains are identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsJson {
    pub psnr_db: Option<f64>,
    pub identical: bool,
    pub mse: f64,
    pub one_minus_ssim: f64,
    pub min_mip_res: usize,
    pub per_mip: Vec<MipJson>,
    pub per_texture: Vec<TextureJson>,
    pub bppc: Option<f64>,
    pub lpips: Option<f64>,
    pub flip: Option<f64>,
}

impl MetricsJson {
    pub fn new(m: &MetricReport, min_mip_res: usize) -> Self {
        Self {
            psnr_db: m.psnr_db,
            identical: m.identical,
            mse: m.mse,
            one_minus_ssim: m.one_minus_ssim,
            min_mip_res,
            per_mip: m
                .per_mip_psnr
                .iter()
                .map(|p| MipJson {
                    mip: p.mip,
                    width: p.width,
                    mse: p.mse,
                    psnr_db: p.psnr_db,
                })
                .collect(),
            per_texture: m
                .per_texture_psnr
                .iter()
                .map(|t| TextureJson {
                    name: t.name.clone(),
                    mse: t.mse,
                    psnr_db: t.psnr_db,
                })
                .collect(),
            bppc: m.bppc,
            lpips: m.lpips,
            flip: m.flip,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorageJson {
    pub level_grid_bytes: Vec<u64>,
    pub level0_grid_bytes: u64,
    pub grid_bytes_total: u64,
    pub network_bytes: u64,
    pub header_bytes: u64,
    pub total_bytes: u64,
    pub bppc: f64,
    pub bppc_level0: f64,
}

impl From<&StorageReport> for StorageJson {
    fn from(s: &StorageReport) -> Self {
        Self {
            level_grid_bytes: s.level_grid_bytes.clone(),
            level0_grid_bytes: s.level0_grid_bytes,
            grid_bytes_total: s.grid_bytes_total,
            network_bytes: s.network_bytes,
            header_bytes: s.header_bytes,
            total_bytes: s.total_bytes,
            bppc: s.bppc,
            bppc_level0: s.bppc_level0,
        }
    }
}

/// What `ntc eval` emits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metrics: MetricsJson,
    pub storage: StorageJson,
}

impl EvalReport {
    pub fn new(metrics: &MetricReport, storage: &StorageReport, min_mip_res: usize) -> Self {
        let mut m = MetricsJson::new(metrics, min_mip_res);
        m.bppc = Some(storage.bppc);
        Self {
            metrics: m,
            storage: storage.into(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_table(&self) -> String {
        let m = &self.metrics;
        let mut out = format!(
            "PSNR      {} dB (mips down to {}x{})\n1-SSIM    {:.5}\nBPPC      {:.4}\nLPIPS     n/a\nFLIP      n/a\n\n",
            db(m.psnr_db),
            m.min_mip_res,
            m.min_mip_res,
            m.one_minus_ssim,
            self.storage.bppc
        );
        let rows: Vec<Vec<String>> = m
            .per_mip
            .iter()
            .map(|p| {
                vec![
                    p.mip.to_string(),
                    format!("{0}x{0}", p.width),
                    format!("{:.3e}", p.mse),
                    db(p.psnr_db),
                ]
            })
            .collect();
        out.push_str(&table(&["mip", "size", "mse", "psnr_db"], &rows));
        out.push('\n');
        let rows: Vec<Vec<String>> = m
            .per_texture
            .iter()
            .map(|t| vec![t.name.clone(), format!("{:.3e}", t.mse), db(t.psnr_db)])
            .collect();
        out.push_str(&table(&["texture", "mse", "psnr_db"], &rows));
        out
    }
}

/// One feature level: grid resolutions and the mips it predicts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelRow {
    pub level: usize,
    pub g0_res: usize,
    pub g1_res: usize,
    pub first_mip: usize,
    pub last_mip: usize,
}

impl LevelRow {
    pub fn cells(&self) -> Vec<String> {
        let mips: Vec<String> = (self.first_mip..=self.last_mip).map(|m| m.to_string()).collect();
        vec![
            self.level.to_string(),
            format!("{0}x{0}", self.g0_res),
            format!("{0}x{0}", self.g1_res),
            mips.join(","),
        ]
    }
}

pub fn level_rows(profile: &Profile, width: usize) -> Vec<LevelRow> {
    let num_mips = mip_count(width);
    (0..num_feature_levels(num_mips))
        .map(|level| {
            let (g0_res, g1_res) = grid_geometry(profile, width, level);
            let (first_mip, last_mip) = mips_for_level(level, num_mips);
            LevelRow {
                level,
                g0_res,
                g1_res,
                first_mip,
                last_mip,
            }
        })
        .collect()
}

pub fn level_table(profile: &Profile, width: usize) -> String {
    let rows: Vec<Vec<String>> = level_rows(profile, width).iter().map(LevelRow::cells).collect();
    table(&["level", "G0 grid", "G1 grid", "predicted mips"], &rows)
}

pub fn storage_table(s: &StorageReport) -> String {
    let bytes = |b: u64| vec![b.to_string(), format!("{:.4}", b as f64 / MIB)];
    let mut rows = Vec::new();
    for (j, &b) in s.level_grid_bytes.iter().enumerate() {
        rows.push([vec![format!("grids, level {j}")], bytes(b)].concat());
    }
    rows.push([vec!["grids, total".into()], bytes(s.grid_bytes_total)].concat());
    rows.push([vec!["network (f32)".into()], bytes(s.network_bytes)].concat());
    rows.push([vec!["header".into()], bytes(s.header_bytes)].concat());
    rows.push([vec!["total".into()], bytes(s.total_bytes)].concat());
    let mut out = table(&["part", "bytes", "MiB"], &rows);
    out.push_str(&format!(
        "BPPC {:.4} (level 0 grids only: {:.4})\n",
        s.bppc, s.bppc_level0
    ));
    out
}

/// Header fields, level table, parameter counts and storage.
pub fn info_text(ct: &CompressedTexture) -> String {
    let h = ct.header();
    let m = &ct.model;
    let p = ct.profile();
    let mut out = format!(
        "resolution    {}x{}\nchannels      {}\nmips          {}\nprofile       {} (g0_ratio {}, C0 {} @ {} bit, C1 {} @ {} bit)\n\
         decoder       {} hidden layers of {}, {:?}\naddressing    {:?}\n",
        h.width,
        h.height,
        h.channels,
        h.num_mips,
        p.name,
        p.g0_ratio,
        p.c0,
        p.b0,
        p.c1,
        p.b1,
        h.hidden_layers,
        h.hidden_width,
        m.activation,
        m.address_mode
    );
    let names: Vec<String> = ct
        .names
        .iter()
        .map(|s| format!("{} [{}..{})", s.name, s.start, s.start + s.len))
        .collect();
    out.push_str(&format!("textures      {}\n\n", names.join(", ")));
    out.push_str(&level_table(p, ct.width()));
    out.push_str(&format!(
        "\ngrid scalars   {}\nnetwork params {}\n\n",
        m.pyramid.scalar_count(),
        m.weights.param_count()
    ));
    out.push_str(&storage_table(&ct.storage_report()));
    out
}

/// One row of a channel sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub channels: usize,
    pub psnr_db: Option<f64>,
    pub one_minus_ssim: f64,
    pub bppc: f64,
    pub total_bytes: u64,
}

pub fn sweep_table(rows: &[SweepRow]) -> String {
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.channels.to_string(),
                db(r.psnr_db),
                format!("{:.5}", r.one_minus_ssim),
                format!("{:.4}", r.bppc),
                r.total_bytes.to_string(),
            ]
        })
        .collect();
    table(&["channels", "psnr_db", "1-ssim", "bppc", "bytes"], &cells)
}
