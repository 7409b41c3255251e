//! Observation encoding and the on-disk dataset format.
//!
//! An observation is the concatenation of three codebook vectors, one per
//! latent in the order `(z_c, z_f, z_s)`, plus isotropic Gaussian noise.
//! Datasets are CSV files with header `env,y,z_c,z_f,z_s,x_0..x_{D-1}`.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{ENV, FAKE, INVARIANT, LABEL, SPURIOUS};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CodebookKind {
    #[default]
    OneHot,
    /// Random unit-norm Gaussian directions.
    Gaussian,
}

/// Per-latent multiplier applied to codebook vectors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentScales {
    pub z_c: f64,
    pub z_f: f64,
    pub z_s: f64,
}

impl Default for LatentScales {
    fn default() -> Self {
        Self { z_c: 1.0, z_f: 1.0, z_s: 1.0 }
    }
}

impl LatentScales {
    fn as_array(&self) -> [f64; 3] {
        [self.z_c, self.z_f, self.z_s]
    }
}

/// Fixed vectors for every state of each latent. Generated once per benchmark.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    pub kind: CodebookKind,
    pub num_classes: usize,
    pub obs_dim: usize,
    pub z_c: Vec<Vec<f64>>,
    pub z_f: Vec<Vec<f64>>,
    pub z_s: Vec<Vec<f64>>,
}

impl Codebook {
    pub fn generate(
        kind: CodebookKind,
        num_classes: usize,
        obs_dim: usize,
        scales: LatentScales,
        seed: u64,
    ) -> Result<Self> {
        if kind == CodebookKind::OneHot && obs_dim < num_classes {
            return Err(Error::config("obs_dim", format!("one-hot needs obs_dim >= {num_classes}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(0xC0DE);
        let mut block = |scale: f64| -> Vec<Vec<f64>> {
            (0..num_classes)
                .map(|k| match kind {
                    CodebookKind::OneHot => {
                        let mut v = vec![0.0; obs_dim];
                        v[k] = scale;
                        v
                    }
                    CodebookKind::Gaussian => {
                        let v: Vec<f64> = (0..obs_dim).map(|_| StandardNormal.sample(&mut rng)).collect();
                        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
                        v.into_iter().map(|x| scale * x / norm).collect()
                    }
                })
                .collect()
        };
        let [c, f, s] = scales.as_array();
        Ok(Self { kind, num_classes, obs_dim, z_c: block(c), z_f: block(f), z_s: block(s) })
    }

    pub fn width(&self) -> usize {
        3 * self.obs_dim
    }

    fn blocks(&self) -> [&Vec<Vec<f64>>; 3] {
        [&self.z_c, &self.z_f, &self.z_s]
    }

    /// Noise-free encoding of a latent triple.
    pub fn encode(&self, latents: Latents) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.width());
        for (block, state) in self.blocks().into_iter().zip(latents.as_array()) {
            x.extend_from_slice(&block[state]);
        }
        x
    }

    /// Nearest codebook entry per block.
    pub fn decode(&self, x: &[f64]) -> Latents {
        let mut out = [0usize; 3];
        for (b, block) in self.blocks().into_iter().enumerate() {
            let seg = &x[b * self.obs_dim..(b + 1) * self.obs_dim];
            let dist = |v: &Vec<f64>| v.iter().zip(seg).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            out[b] = (0..block.len())
                .min_by(|&i, &j| dist(&block[i]).total_cmp(&dist(&block[j])))
                .unwrap_or(0);
        }
        Latents { z_c: out[0], z_f: out[1], z_s: out[2] }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("codebooks always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cb: Codebook = serde_json::from_str(text)?;
        for (name, block) in [("z_c", &cb.z_c), ("z_f", &cb.z_f), ("z_s", &cb.z_s)] {
            if block.len() != cb.num_classes || block.iter().any(|v| v.len() != cb.obs_dim) {
                return Err(Error::Malformed(format!("codebook block {name} has the wrong shape")));
            }
            if block.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::Malformed(format!("codebook block {name} has non-finite entries")));
            }
        }
        Ok(cb)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Latents {
    pub z_c: usize,
    pub z_f: usize,
    pub z_s: usize,
}

impl Latents {
    fn as_array(&self) -> [usize; 3] {
        [self.z_c, self.z_f, self.z_s]
    }
}

/// Encodes a latent triple with additive `N(0, noise_sigma²)` noise drawn from `noise_seed`.
pub fn encode_observation(latents: Latents, codebook: &Codebook, noise_sigma: f64, noise_seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    encode_with(latents, codebook, noise_sigma, &mut rng)
}

pub(crate) fn encode_with(latents: Latents, codebook: &Codebook, noise_sigma: f64, rng: &mut impl Rng) -> Vec<f64> {
    let mut x = codebook.encode(latents);
    if noise_sigma > 0.0 {
        let normal = Normal::new(0.0, noise_sigma).expect("noise scale is validated");
        x.iter_mut().for_each(|v| *v += normal.sample(rng));
    }
    x
}

#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub y: usize,
    pub latents: Latents,
    pub x: Vec<f64>,
}

impl Row {
    /// Integer value of a named column; `E` reads the dataset's environment id.
    pub fn column(&self, name: &str, env_id: usize) -> Option<usize> {
        match name {
            ENV => Some(env_id),
            LABEL => Some(self.y),
            INVARIANT => Some(self.latents.z_c),
            FAKE => Some(self.latents.z_f),
            SPURIOUS => Some(self.latents.z_s),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvironmentDataset {
    pub env_id: usize,
    pub num_classes: usize,
    /// Seed used to generate the rows, when known.
    pub seed: Option<u64>,
    pub rows: Vec<Row>,
}

impl EnvironmentDataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn x_dim(&self) -> usize {
        self.rows.first().map_or(0, |r| r.x.len())
    }

    /// Splits off the trailing `fraction` of rows (rounded down).
    pub fn split_tail(&self, fraction: f64) -> (EnvironmentDataset, EnvironmentDataset) {
        let cut = self.rows.len() - (self.rows.len() as f64 * fraction).floor() as usize;
        let part = |rows: &[Row]| EnvironmentDataset { rows: rows.to_vec(), ..self.clone_empty() };
        (part(&self.rows[..cut]), part(&self.rows[cut..]))
    }

    fn clone_empty(&self) -> EnvironmentDataset {
        EnvironmentDataset { env_id: self.env_id, num_classes: self.num_classes, seed: self.seed, rows: Vec::new() }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let d = self.x_dim();
        let mut header: Vec<String> = ["env", "y", "z_c", "z_f", "z_s"].map(String::from).to_vec();
        header.extend((0..d).map(|i| format!("x_{i}")));
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![
                self.env_id.to_string(),
                r.y.to_string(),
                r.latents.z_c.to_string(),
                r.latents.z_f.to_string(),
                r.latents.z_s.to_string(),
            ];
            // `Display` for f64 is the shortest round-tripping form.
            rec.extend(r.x.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R, num_classes: usize) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers()?.clone();
        let fixed = ["env", "y", "z_c", "z_f", "z_s"];
        if header.len() < fixed.len() || header.iter().zip(fixed).any(|(h, f)| h != f) {
            return Err(Error::Malformed("header must start with env,y,z_c,z_f,z_s".into()));
        }
        for (i, h) in header.iter().skip(fixed.len()).enumerate() {
            if h != format!("x_{i}") {
                return Err(Error::Malformed(format!("unexpected column `{h}`")));
            }
        }
        let mut env_id = None;
        let mut rows = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            if rec.len() != header.len() {
                return Err(Error::Malformed(format!("row {line} has {} fields", rec.len())));
            }
            let int = |i: usize| -> Result<usize> {
                rec[i].parse().map_err(|_| Error::Malformed(format!("row {line}: bad integer `{}`", &rec[i])))
            };
            let env = int(0)?;
            if *env_id.get_or_insert(env) != env {
                return Err(Error::Malformed(format!("row {line}: mixed environments")));
            }
            let (y, z_c, z_f, z_s) = (int(1)?, int(2)?, int(3)?, int(4)?);
            if [y, z_c, z_f, z_s].iter().any(|&v| v >= num_classes) {
                return Err(Error::Malformed(format!("row {line}: state outside 0..{num_classes}")));
            }
            let x = (fixed.len()..rec.len())
                .map(|i| {
                    rec[i]
                        .parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| Error::Malformed(format!("row {line}: bad number `{}`", &rec[i])))
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(Row { y, latents: Latents { z_c, z_f, z_s }, x });
        }
        let env_id = env_id.ok_or(Error::EmptyDataset)?;
        Ok(Self { env_id, num_classes, seed: None, rows })
    }
}
