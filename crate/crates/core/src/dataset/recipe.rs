//! Test-set recipes and their manifests.
//!
//! * `png`: demosaiced crops, locally hue-modified at every angle.
//! * `b-jpg`: hue modification, then one JPEG compression at the chosen quality.
//! * `a-jpg`: JPEG at the chosen quality, hue modification, then JPEG again at 75.
//!
//! The JPEG recipes spread `per_angle` images over each angle and keep
//! `pristine` untouched controls.

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::convex::{random_convex_mask, DEFAULT_BOX};
use super::forgery::apply_local_hue_mod;
use crate::colorops::{jpeg_decode, jpeg_encode, jpeg_roundtrip, simulate_camera, CfaPattern, HueAngle, ImageRaster};
use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::rng::stream_seed;

/// Quality of the second compression in the `a-jpg` recipe.
pub const SECOND_PASS_QUALITY: u8 = 75;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Recipe {
    #[serde(rename = "png")]
    Png,
    #[serde(rename = "b-jpg")]
    BeforeJpeg,
    #[serde(rename = "a-jpg")]
    AfterJpeg,
}

impl Recipe {
    pub fn name(self) -> &'static str {
        match self {
            Recipe::Png => "png",
            Recipe::BeforeJpeg => "b-jpg",
            Recipe::AfterJpeg => "a-jpg",
        }
    }

    pub fn is_jpeg(self) -> bool {
        self != Recipe::Png
    }
}

impl fmt::Display for Recipe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Recipe {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "png" => Ok(Recipe::Png),
            "b-jpg" => Ok(Recipe::BeforeJpeg),
            "a-jpg" => Ok(Recipe::AfterJpeg),
            other => Err(Error::Parameter(format!(
                "unknown recipe {other:?} (expected png, b-jpg or a-jpg)"
            ))),
        }
    }
}

/// Angles 30, 60, ..., 330.
pub fn default_angles() -> Vec<HueAngle> {
    (30..=330).step_by(30).map(HueAngle::new).collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TestSetParams {
    pub angles: Vec<HueAngle>,
    /// First compression quality; required by the JPEG recipes.
    pub qf: Option<u8>,
    /// Modified images per angle in the JPEG recipes.
    pub per_angle: usize,
    /// Unmodified controls in the JPEG recipes.
    pub pristine: usize,
    pub crop_height: usize,
    pub crop_width: usize,
    pub box_size: usize,
    pub cfa: CfaPattern,
}

impl Default for TestSetParams {
    fn default() -> Self {
        Self {
            angles: default_angles(),
            qf: None,
            per_angle: 10,
            pristine: 10,
            crop_height: 768,
            crop_width: 1024,
            box_size: DEFAULT_BOX,
            cfa: CfaPattern::GBRG,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ForgeryCase {
    pub id: String,
    pub image: ImageRaster,
    pub mask: Mask,
    pub angle: HueAngle,
    pub recipe: Recipe,
    pub qf_history: Vec<u8>,
    pub source_index: usize,
    pub seed: u64,
    /// Final JPEG bitstream for the JPEG recipes; `image` is its decoding.
    pub jpeg_bytes: Option<Vec<u8>>,
}

/// One line of `manifest.jsonl`. Paths are relative to the manifest's directory.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: String,
    pub image: PathBuf,
    pub mask: PathBuf,
    pub recipe: Recipe,
    pub angle: HueAngle,
    pub qf_history: Vec<u8>,
    pub seed: u64,
    pub source: usize,
}

struct Plan {
    source: usize,
    angle: HueAngle,
}

fn plan(recipe: Recipe, n_sources: usize, params: &TestSetParams) -> Result<Vec<Plan>> {
    if params.angles.iter().any(|a| a.is_zero()) {
        return Err(Error::Parameter("modification angles must be non-zero".into()));
    }
    match recipe {
        Recipe::Png => Ok(params
            .angles
            .iter()
            .flat_map(|&angle| (0..n_sources).map(move |source| Plan { source, angle }))
            .collect()),
        Recipe::BeforeJpeg | Recipe::AfterJpeg => {
            let needed = params.angles.len() * params.per_angle + params.pristine;
            if n_sources < needed {
                return Err(Error::Parameter(format!(
                    "recipe {recipe} needs {needed} source images ({} angles x {} + {} pristine), got {n_sources}",
                    params.angles.len(),
                    params.per_angle,
                    params.pristine
                )));
            }
            let mut out = Vec::with_capacity(needed);
            for (a, &angle) in params.angles.iter().enumerate() {
                for i in 0..params.per_angle {
                    out.push(Plan {
                        source: a * params.per_angle + i,
                        angle,
                    });
                }
            }
            let first_pristine = params.angles.len() * params.per_angle;
            out.extend((0..params.pristine).map(|i| Plan {
                source: first_pristine + i,
                angle: HueAngle::ZERO,
            }));
            Ok(out)
        }
    }
}

/// Synthesizes every case of `recipe` from `sources`. Case `i` draws its mask
/// from a stream derived from (`seed`, `i`), so output depends only on the inputs.
pub fn make_test_set(
    recipe: Recipe,
    sources: &[ImageRaster],
    params: &TestSetParams,
    seed: u64,
) -> Result<Vec<ForgeryCase>> {
    let (ch, cw) = (params.crop_height, params.crop_width);
    if ch % 2 != 0 || cw % 2 != 0 {
        return Err(Error::Parameter(format!("crop {ch}x{cw} must have even sides")));
    }
    if ch < params.box_size || cw < params.box_size {
        return Err(Error::Parameter(format!(
            "crop {ch}x{cw} smaller than the {0}x{0} forgery box",
            params.box_size
        )));
    }
    if let Some((i, s)) = sources.iter().enumerate().find(|(_, s)| s.height() < ch || s.width() < cw) {
        return Err(Error::Dimension(format!(
            "source {i} is {}x{}, smaller than the {ch}x{cw} crop",
            s.height(),
            s.width()
        )));
    }
    let qf = match (recipe.is_jpeg(), params.qf) {
        (true, None) => return Err(Error::Parameter(format!("recipe {recipe} needs a quality factor"))),
        (true, Some(q)) if !(1..=100).contains(&q) => {
            return Err(Error::Parameter(format!("quality factor {q} outside [1, 100]")))
        }
        (_, q) => q,
    };
    let plans = plan(recipe, sources.len(), params)?;

    plans
        .par_iter()
        .enumerate()
        .map(|(index, p)| {
            let case_seed = stream_seed(seed, index as u64);
            let base = simulate_camera(&sources[p.source].crop(0, 0, ch, cw)?, params.cfa)?;
            let mask = if p.angle.is_zero() {
                Mask::new(ch, cw)
            } else {
                random_convex_mask(ch, cw, params.box_size, case_seed)?
            };
            let (image, qf_history, jpeg_bytes) = match recipe {
                Recipe::Png => (apply_local_hue_mod(&base, &mask, p.angle)?, Vec::new(), None),
                Recipe::BeforeJpeg => {
                    let q = qf.expect("checked above");
                    let forged = apply_local_hue_mod(&base, &mask, p.angle)?;
                    let bytes = jpeg_encode(&forged, q)?;
                    (jpeg_decode(&bytes)?, vec![q], Some(bytes))
                }
                Recipe::AfterJpeg => {
                    let q = qf.expect("checked above");
                    let first = jpeg_roundtrip(&base, q)?;
                    let forged = apply_local_hue_mod(&first, &mask, p.angle)?;
                    let bytes = jpeg_encode(&forged, SECOND_PASS_QUALITY)?;
                    (jpeg_decode(&bytes)?, vec![q, SECOND_PASS_QUALITY], Some(bytes))
                }
            };
            Ok(ForgeryCase {
                id: format!("{}-{index:05}", recipe.name()),
                image,
                mask,
                angle: p.angle,
                recipe,
                qf_history,
                source_index: p.source,
                seed: case_seed,
                jpeg_bytes,
            })
        })
        .collect()
}

pub const MANIFEST_FILE: &str = "manifest.jsonl";

/// Writes images, masks and `manifest.jsonl` under `dir`.
pub fn write_test_set(cases: &[ForgeryCase], dir: &Path) -> Result<Vec<ManifestRecord>> {
    for sub in ["images", "masks"] {
        let p = dir.join(sub);
        fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
    }
    let records = cases
        .par_iter()
        .map(|case| {
            let image = match &case.jpeg_bytes {
                Some(bytes) => {
                    let rel = PathBuf::from("images").join(format!("{}.jpg", case.id));
                    let path = dir.join(&rel);
                    fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
                    rel
                }
                None => {
                    let rel = PathBuf::from("images").join(format!("{}.png", case.id));
                    case.image.save_png(&dir.join(&rel))?;
                    rel
                }
            };
            let mask = PathBuf::from("masks").join(format!("{}.png", case.id));
            case.mask.save_png(&dir.join(&mask))?;
            Ok(ManifestRecord {
                id: case.id.clone(),
                image,
                mask,
                recipe: case.recipe,
                angle: case.angle,
                qf_history: case.qf_history.clone(),
                seed: case.seed,
                source: case.source_index,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    write_manifest(&records, &dir.join(MANIFEST_FILE))?;
    Ok(records)
}

pub fn write_manifest(records: &[ManifestRecord], path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRecord>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ManifestRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Manifest(format!("{}:{}: {e}", path.display(), n + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::colorops::hue_rotate;

    fn small_params() -> TestSetParams {
        TestSetParams {
            crop_height: 64,
            crop_width: 80,
            box_size: 32,
            ..Default::default()
        }
    }

    fn sources(n: usize) -> Vec<ImageRaster> {
        (0..n)
            .map(|i| {
                ImageRaster::from_fn(70, 90, |y, x| {
                    [(x * 3 + i * 17) as u8, (y * 2 + x) as u8, ((y + i * 7) % 256) as u8]
                })
                .unwrap()
            })
            .collect()
    }

    #[test]
    fn png_has_one_case_per_angle_and_source() {
        let cases = make_test_set(Recipe::Png, &sources(3), &small_params(), 7).unwrap();
        assert_eq!(cases.len(), 33);
        assert!(cases.iter().all(|c| c.qf_history.is_empty() && !c.angle.is_zero()));
        assert!(cases.iter().all(|c| c.mask.count() > 0));
    }

    #[test]
    fn png_leaves_background_untouched() {
        let src = sources(1);
        let params = small_params();
        let cases = make_test_set(Recipe::Png, &src, &params, 3).unwrap();
        let base = simulate_camera(&src[0].crop(0, 0, 64, 80).unwrap(), params.cfa).unwrap();
        for c in &cases {
            let rotated = hue_rotate(&base, c.angle);
            for y in 0..64 {
                for x in 0..80 {
                    let expect = if c.mask.get(y, x) { rotated.get(y, x) } else { base.get(y, x) };
                    assert_eq!(c.image.get(y, x), expect);
                }
            }
        }
    }

    #[test]
    fn before_jpeg_counts_and_controls() {
        let params = TestSetParams {
            angles: vec![HueAngle::new(90), HueAngle::new(180)],
            per_angle: 2,
            pristine: 1,
            qf: Some(80),
            ..small_params()
        };
        let cases = make_test_set(Recipe::BeforeJpeg, &sources(5), &params, 1).unwrap();
        assert_eq!(cases.len(), 5);
        assert_eq!(cases.iter().filter(|c| c.angle.is_zero()).count(), 1);
        for c in &cases {
            assert_eq!(c.qf_history, vec![80]);
            assert_eq!(c.mask.count() > 0, !c.angle.is_zero());
        }
    }

    #[test]
    fn after_jpeg_ends_with_75() {
        let params = TestSetParams {
            angles: vec![HueAngle::new(60)],
            per_angle: 1,
            pristine: 1,
            qf: Some(90),
            ..small_params()
        };
        let cases = make_test_set(Recipe::AfterJpeg, &sources(2), &params, 1).unwrap();
        assert!(cases.iter().all(|c| c.qf_history == vec![90, 75]));
    }

    #[test]
    fn errors() {
        let p = small_params();
        assert!(matches!(make_test_set(Recipe::BeforeJpeg, &sources(200), &p, 1), Err(Error::Parameter(_))));
        let p = TestSetParams { qf: Some(75), ..small_params() };
        assert!(matches!(make_test_set(Recipe::BeforeJpeg, &sources(3), &p, 1), Err(Error::Parameter(_))));
        let tiny = vec![ImageRaster::new(10, 10).unwrap()];
        assert!(matches!(make_test_set(Recipe::Png, &tiny, &small_params(), 1), Err(Error::Dimension(_))));
        assert!("c-jpg".parse::<Recipe>().is_err());
    }

    #[test]
    fn write_and_reread_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let params = TestSetParams { angles: vec![HueAngle::new(120)], per_angle: 1, pristine: 1, qf: Some(85), ..small_params() };
        let cases = make_test_set(Recipe::BeforeJpeg, &sources(2), &params, 11).unwrap();
        let records = write_test_set(&cases, dir.path()).unwrap();
        let back = read_manifest(&dir.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(records, back);
        for (r, c) in back.iter().zip(&cases) {
            assert_eq!(ImageRaster::load(&dir.path().join(&r.image)).unwrap(), c.image);
            assert_eq!(Mask::load_png(&dir.path().join(&r.mask)).unwrap(), c.mask);
        }
    }

    #[test]
    fn reproducible() {
        let a = make_test_set(Recipe::Png, &sources(2), &small_params(), 5).unwrap();
        let b = make_test_set(Recipe::Png, &sources(2), &small_params(), 5).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.image, y.image);
            assert_eq!(x.mask, y.mask);
        }
    }
}
