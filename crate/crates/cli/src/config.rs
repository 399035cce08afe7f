//! Run configuration: a flat `key=value` file merged with command-line overrides.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use scid::io::{self, Manifest};
use scid::{
    build_cover, build_frame_matrices, build_grid, random_weights, seed, Cover, Grid,
    ScatteringFunction, WeightSequence,
};

/// Every key the config file and overrides accept.
pub const KEYS: &[&str] = &[
    "J",
    "T",
    "n_t",
    "n_g",
    "n_a",
    "n_b",
    "mask",
    "cells",
    "scattering",
    "generator",
    "weights",
    "echoes",
    "seed",
    "L",
    "trials",
    "scaling",
    "out",
];

/// Independent seed streams derived from the master seed.
pub mod stream {
    pub const WEIGHTS: u64 = 1;
    pub const SCATTERING: u64 = 2;
    pub const ECHOES: u64 = 3;
    pub const MONTE_CARLO: u64 = 4;
}

/// Weight draws are retried until the frame condition number is below this.
pub const WEIGHTS_MAX_COND: f64 = 1e6;
const WEIGHTS_ATTEMPTS: u64 = 64;

#[derive(Debug, Clone, PartialEq)]
pub enum CoverSpec {
    Mask(PathBuf),
    Cells(Vec<(usize, usize)>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScatteringSource {
    File(PathBuf),
    Constant(f64),
    /// Uniform on (0, 1] per occupied point, seeded from the master seed.
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub j: usize,
    pub t: f64,
    pub n_t: usize,
    pub n_g: usize,
    pub n_a: usize,
    pub n_b: usize,
    pub cover: CoverSpec,
    pub scattering: ScatteringSource,
    /// `scattering` or `generator` was given rather than defaulted.
    pub scattering_explicit: bool,
    pub weights: Option<PathBuf>,
    pub echoes: Option<PathBuf>,
    pub seed: u64,
    pub l: Option<usize>,
    pub trials: usize,
    pub scaling: bool,
    pub out: PathBuf,
}

fn parse<T: FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<Option<T>> {
    map.get(key)
        .map(|v| {
            v.parse::<T>()
                .map_err(|_| anyhow!("config key `{key}`: cannot parse `{v}`"))
        })
        .transpose()
}

fn required<T: FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<T> {
    parse(map, key)?.ok_or_else(|| anyhow!("missing config key `{key}`"))
}

/// `a,b;a,b;...`
pub fn parse_cells(text: &str) -> Result<Vec<(usize, usize)>> {
    text.split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|pair| {
            let (a, b) = pair
                .split_once(',')
                .ok_or_else(|| anyhow!("cell `{pair}` is not `a,b`"))?;
            Ok((a.trim().parse()?, b.trim().parse()?))
        })
        .collect::<Result<Vec<_>>>()
        .context("config key `cells`")
}

pub fn parse_generator(text: &str) -> Result<ScatteringSource> {
    match text.split_once(':') {
        None if text == "random" => Ok(ScatteringSource::Random),
        Some(("constant", v)) => {
            let v: f64 = v
                .parse()
                .map_err(|_| anyhow!("generator constant `{v}` is not a number"))?;
            Ok(ScatteringSource::Constant(v))
        }
        _ => bail!("unknown generator `{text}` (expected `random` or `constant:VALUE`)"),
    }
}

impl RunConfig {
    /// Merges the config file (if any) with overrides; overrides win.
    pub fn load(path: Option<&Path>, overrides: &BTreeMap<String, String>) -> Result<Self> {
        let mut map = match path {
            Some(p) => {
                let text = fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                Manifest::parse(&text)?.0
            }
            None => BTreeMap::new(),
        };
        map.extend(overrides.iter().map(|(k, v)| (k.clone(), v.clone())));
        if let Some(k) = map.keys().find(|k| !KEYS.contains(&k.as_str())) {
            bail!("unknown config key `{k}`");
        }
        Self::from_map(&map)
    }

    fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        let cover = match (map.get("mask"), map.get("cells")) {
            (Some(_), Some(_)) => bail!("give either `mask` or `cells`, not both"),
            (Some(p), None) => CoverSpec::Mask(p.into()),
            (None, Some(c)) => CoverSpec::Cells(parse_cells(c)?),
            (None, None) => bail!("missing config key `mask` or `cells`"),
        };
        let scattering = match (map.get("scattering"), map.get("generator")) {
            (Some(_), Some(_)) => bail!("give either `scattering` or `generator`, not both"),
            (Some(p), None) => ScatteringSource::File(p.into()),
            (None, Some(g)) => parse_generator(g)?,
            (None, None) => ScatteringSource::Random,
        };
        let scaling = match map.get("scaling").map(String::as_str) {
            None | Some("false") | Some("0") => false,
            Some("true") | Some("1") => true,
            Some(other) => bail!("config key `scaling`: expected true/false, got `{other}`"),
        };
        let cfg = RunConfig {
            j: required(map, "J")?,
            t: parse(map, "T")?.unwrap_or(1.0),
            n_t: required(map, "n_t")?,
            n_g: required(map, "n_g")?,
            n_a: required(map, "n_a")?,
            n_b: required(map, "n_b")?,
            cover,
            scattering,
            scattering_explicit: map.contains_key("scattering") || map.contains_key("generator"),
            weights: map.get("weights").map(PathBuf::from),
            echoes: map.get("echoes").map(PathBuf::from),
            seed: parse(map, "seed")?.unwrap_or(0),
            l: parse(map, "L")?,
            trials: parse(map, "trials")?.unwrap_or(50),
            scaling,
            out: map
                .get("out")
                .map_or_else(|| PathBuf::from("out"), PathBuf::from),
        };
        // grid invariants are enforced on load
        cfg.grid()?;
        Ok(cfg)
    }

    pub fn grid(&self) -> Result<Grid> {
        Ok(build_grid(
            self.j, self.t, self.n_t, self.n_g, self.n_a, self.n_b,
        )?)
    }

    pub fn cover(&self, grid: &Grid) -> Result<Cover> {
        let mask = match &self.cover {
            CoverSpec::Mask(p) => io::parse_mask(&read(p)?)?,
            CoverSpec::Cells(cells) => {
                let mut mask = vec![vec![false; grid.n_b()]; grid.n_a()];
                for &(a, b) in cells {
                    if a >= grid.n_a() || b >= grid.n_b() {
                        bail!(
                            "cell ({a}, {b}) outside the {}×{} box",
                            grid.n_a(),
                            grid.n_b()
                        );
                    }
                    mask[a][b] = true;
                }
                mask
            }
        };
        Ok(build_cover(grid, &mask)?)
    }

    pub fn l(&self) -> Result<usize> {
        match self.l {
            Some(0) => bail!("L must be at least 1"),
            Some(l) => Ok(l),
            None => bail!("missing config key `L`"),
        }
    }

    /// Weights from the `weights` file, or drawn from the master seed.
    /// Returns the weights and the draw attempt (`None` when read from file).
    pub fn weights(&self, cover: &Cover) -> Result<(WeightSequence, Option<u64>)> {
        if let Some(p) = &self.weights {
            let w = io::read_weights(&read(p)?)?;
            if w.j() != self.j {
                bail!("weights file has J = {}, config has J = {}", w.j(), self.j);
            }
            return Ok((w, None));
        }
        let base = seed::mix(self.seed, stream::WEIGHTS);
        for attempt in 0..WEIGHTS_ATTEMPTS {
            let w = random_weights(self.j, seed::mix(base, attempt))?;
            if let Ok(fm) = build_frame_matrices(&w, cover) {
                if fm.cond() < WEIGHTS_MAX_COND {
                    return Ok((w, Some(attempt)));
                }
            }
        }
        Err(scid::Error::IllConditioned {
            cond: f64::INFINITY,
        }
        .into())
    }

    pub fn scattering(&self, grid: &Grid, cover: &Cover) -> Result<ScatteringFunction> {
        Ok(match &self.scattering {
            ScatteringSource::File(p) => io::read_scattering(&read(p)?, grid, cover)?,
            ScatteringSource::Constant(v) => ScatteringFunction::constant(grid, cover, *v)?,
            ScatteringSource::Random => {
                ScatteringFunction::random(grid, cover, seed::mix(self.seed, stream::SCATTERING))
            }
        })
    }

    pub fn truth_known(&self) -> bool {
        self.scattering_explicit
    }

    pub fn generator_label(&self) -> String {
        match &self.scattering {
            ScatteringSource::File(p) => format!("file:{}", p.display()),
            ScatteringSource::Constant(v) => format!("constant:{v}"),
            ScatteringSource::Random => "random".into(),
        }
    }

    pub fn echoes_path(&self) -> PathBuf {
        self.echoes
            .clone()
            .unwrap_or_else(|| self.out.join("echoes.bin"))
    }

    /// Config echo shared by every manifest.
    pub fn manifest(&self, command: &str) -> Manifest {
        let mut m = Manifest::new();
        m.set("command", command)
            .set("J", self.j)
            .set_float("T", self.t)
            .set("n_t", self.n_t)
            .set("n_g", self.n_g)
            .set("n_a", self.n_a)
            .set("n_b", self.n_b)
            .set("seed", self.seed)
            .set("rng", seed::GENERATOR)
            .set("scattering", self.generator_label());
        if let Some(l) = self.l {
            m.set("L", l);
        }
        m
    }
}

pub fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}
