use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use anyhow::{Context, Result};
use scid::io::{self, Manifest};
use scid::{
    build_frame_matrices, estimate, identify_oracle, monte_carlo, seed, simulate_ensemble, McConfig,
};

use crate::config::{stream, RunConfig};
use crate::Mode;

fn write(dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

fn cells_label(cells: &[(usize, usize)]) -> String {
    cells
        .iter()
        .map(|(a, b)| format!("{a},{b}"))
        .collect::<Vec<_>>()
        .join(";")
}

pub fn gen(cfg: &RunConfig) -> Result<()> {
    let grid = cfg.grid()?;
    let cover = cfg.cover(&grid)?;
    let (w, attempt) = cfg.weights(&cover)?;
    let fm = build_frame_matrices(&w, &cover)?;
    let sf = cfg.scattering(&grid, &cover)?;

    let mut m = cfg.manifest("gen");
    m.set_float("B", grid.b())
        .set("cells", cells_label(cover.cells()))
        .set("occupied", cover.occupied())
        .set_float("cond", fm.cond());
    if let Some(a) = attempt {
        m.set("weights_attempt", a);
    }
    write(&cfg.out, "manifest.txt", m.to_text())?;
    write(&cfg.out, "mask.txt", io::write_mask(&cover, &grid))?;
    write(&cfg.out, "weights.csv", io::write_weights(&w))?;
    write(&cfg.out, "scattering.csv", io::write_scattering(&sf))
}

pub fn sound(cfg: &RunConfig) -> Result<()> {
    let l = cfg.l()?;
    let grid = cfg.grid()?;
    let cover = cfg.cover(&grid)?;
    let (w, _) = cfg.weights(&cover)?;
    let sf = cfg.scattering(&grid, &cover)?;
    let seed_base = seed::mix(cfg.seed, stream::ECHOES);
    let ens = simulate_ensemble(&sf, &w, l, seed_base)?;

    fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    let path = cfg.out.join("echoes.bin");
    let file = fs::File::create(&path).with_context(|| format!("writing {}", path.display()))?;
    io::write_ensemble(&ens, BufWriter::new(file))?;

    let mut m = cfg.manifest("sound");
    m.set("echo_seed_base", seed_base)
        .set("samples_per_echo", grid.total_samples());
    write(&cfg.out, "sound_manifest.txt", m.to_text())
}

pub fn identify(cfg: &RunConfig, mode: Mode) -> Result<()> {
    let grid = cfg.grid()?;
    let cover = cfg.cover(&grid)?;
    let (w, _) = cfg.weights(&cover)?;
    let mut m = cfg.manifest("identify");

    let (raw, cond) = match mode {
        Mode::Oracle => {
            let sf = cfg.scattering(&grid, &cover)?;
            let fm = build_frame_matrices(&w, &cover)?;
            let rec = identify_oracle(&sf, &w)?;
            m.set("mode", "oracle")
                .set_float("max_relative_error", rec.max_relative_error(&sf)?);
            (rec, fm.cond())
        }
        Mode::Estimate => {
            let path = cfg.echoes_path();
            let file =
                fs::File::open(&path).with_context(|| format!("reading {}", path.display()))?;
            let ens = io::read_ensemble(&grid, BufReader::new(file))
                .with_context(|| format!("reading {}", path.display()))?;
            let est = estimate(&ens, &w, &cover)?;
            m.set("mode", "estimate").set("L", ens.len());
            if cfg.truth_known() {
                let sf = cfg.scattering(&grid, &cover)?;
                m.set_float("max_relative_error", est.raw.max_relative_error(&sf)?);
            }
            (est.raw, est.cond)
        }
    };
    let (clamped, report) = raw.clamped();
    m.set_float("cond", cond)
        .set_float("max_abs_imag", report.max_abs_imag)
        .set("clamped_negative_points", report.negative_points)
        .set("zeroed_padding_points", report.padding_points);
    write(
        &cfg.out,
        "reconstruction.csv",
        io::write_scattering(&clamped),
    )?;
    write(&cfg.out, "identify_manifest.txt", m.to_text())
}

pub fn analyze(cfg: &RunConfig) -> Result<()> {
    let grid = cfg.grid()?;
    let cover = cfg.cover(&grid)?;
    let (w, _) = cfg.weights(&cover)?;
    let sf = cfg.scattering(&grid, &cover)?;
    let mc = McConfig {
        l: cfg.l()?,
        trials: cfg.trials,
        seed: seed::mix(cfg.seed, stream::MONTE_CARLO),
        scaling_check: cfg.scaling,
    };
    let report = monte_carlo(&sf, &w, &cover, mc)?;

    let mut m: Manifest = cfg.manifest("analyze");
    m.set("trials", mc.trials)
        .set("mc_seed", mc.seed)
        .set_float("bound", report.bound)
        .set_float("cover_averaged_variance", report.cover_averaged_variance)
        .set("unbiased", report.unbiased())
        .set("bound_holds", report.bound_holds())
        .set("trials_within_bound", report.trials_within_bound());
    if let Some(s) = report.slack_ratio() {
        m.set_float("slack_ratio", s);
    }
    if let Some(sc) = &report.scaling {
        m.set_float("scaling_ratio", sc.ratio)
            .set("scaling_passed", sc.passed);
    }
    write(&cfg.out, "report.txt", report.to_text())?;
    write(&cfg.out, "analyze_manifest.txt", m.to_text())
}
