//! Post-fit diagnostics: plane-similarity CSV, recomputed symmetry
//! losses, and grayscale images of plane channels and attention maps.

use std::io::Write;

use crate::harness::image::GrayImage;
use crate::harness::model::Model;
use crate::planes::similarity_matrix;
use crate::regularizers::{attention_symmetry_loss, feature_symmetry_loss};
use crate::Result;

const PLANE_NAMES: [&str; 3] = ["xy", "xz", "yz"];

fn channel_labels(channels: usize) -> Vec<String> {
    let mut labels = Vec::with_capacity(3 * channels);
    for plane in PLANE_NAMES {
        for c in 0..channels {
            labels.push(format!("{plane}_c{c}"));
        }
    }
    labels
}

/// Cosine similarity between all geometry plane channels, one labeled
/// row and column per channel (3C×3C values).
pub fn write_similarity_csv<W: Write>(model: &Model, w: &mut W) -> Result<()> {
    let planes = model.geometry.planes();
    let sim = similarity_matrix(planes)?;
    let labels = channel_labels(model.geometry.channels());
    write!(w, "channel")?;
    for l in &labels {
        write!(w, ",{l}")?;
    }
    writeln!(w)?;
    for (i, l) in labels.iter().enumerate() {
        write!(w, "{l}")?;
        for j in 0..labels.len() {
            write!(w, ",{}", sim.get(i, j))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Symmetry losses recomputed from the stored model, as `metric,value`
/// rows; matches the tail of the training trajectories by construction.
pub fn write_symmetry_csv<W: Write>(model: &Model, w: &mut W) -> Result<()> {
    let rg = feature_symmetry_loss(&model.geometry);
    writeln!(w, "metric,value")?;
    writeln!(w, "feature_symmetry_total,{}", rg.value)?;
    writeln!(w, "feature_symmetry_yz,{}", rg.yz_term)?;
    writeln!(w, "feature_symmetry_xz,{}", rg.xz_term)?;
    if let Some(vsa) = &model.vsa {
        let (_, fwd) = vsa.attend(&model.geometry)?;
        let maps = fwd.maps();
        let ra = attention_symmetry_loss(maps[2], maps[1]);
        writeln!(w, "attention_symmetry_total,{}", ra.value)?;
        writeln!(w, "attention_symmetry_yz,{}", ra.yz_term)?;
        writeln!(w, "attention_symmetry_xz,{}", ra.xz_term)?;
    }
    Ok(())
}

/// Min-max normalized grayscale raster of one `resolution²` field;
/// constant fields map to mid-gray. The first index is the image row.
fn field_image(resolution: usize, value: impl Fn(usize, usize) -> f64) -> Result<GrayImage> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..resolution {
        for j in 0..resolution {
            let v = value(i, j);
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    let mut img = GrayImage::new(resolution, resolution)?;
    for i in 0..resolution {
        for j in 0..resolution {
            let px = if hi > lo {
                ((value(i, j) - lo) / (hi - lo) * 255.0).round() as u8
            } else {
                128
            };
            img.set(j, i, px);
        }
    }
    Ok(img)
}

/// One image per geometry channel plus the attention maps when
/// present, as `(file stem, image)` pairs.
pub fn channel_images(model: &Model) -> Result<Vec<(String, GrayImage)>> {
    let n = model.geometry.resolution();
    let mut out = Vec::new();
    for (name, plane) in PLANE_NAMES.iter().zip(model.geometry.planes()) {
        for c in 0..plane.channels() {
            out.push((
                format!("geometry_{name}_c{c:02}"),
                field_image(n, |i, j| plane.get(i, j, c))?,
            ));
        }
    }
    if let Some(vsa) = &model.vsa {
        let (_, fwd) = vsa.attend(&model.geometry)?;
        for (name, map) in PLANE_NAMES.iter().zip(fwd.maps()) {
            out.push((format!("attention_{name}"), field_image(n, |i, j| map.get(i, j))?));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::model::Model;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zero_model(use_vsa: bool) -> Model {
        let mut rng = ChaCha8Rng::seed_from_u64(120);
        Model::init(6, 3, 8, use_vsa, true, &mut rng).unwrap()
    }

    fn random_model() -> Model {
        let mut rng = ChaCha8Rng::seed_from_u64(121);
        let mut model = zero_model(true);
        let params: Vec<f64> =
            (0..model.param_count()).map(|_| rng.random_range(-0.7..0.7)).collect();
        model.set_params(&params).unwrap();
        model
    }

    #[test]
    fn zero_model_similarity_is_all_zero() {
        let model = zero_model(true);
        let mut buf = Vec::new();
        write_similarity_csv(&model, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        let header = lines.next().unwrap();
        assert!(header.starts_with("channel,xy_c0,"));
        assert_eq!(header.split(',').count(), 1 + 9);
        for line in lines {
            let mut cells = line.split(',');
            cells.next();
            assert!(cells.all(|c| c == "0"));
        }
    }

    #[test]
    fn similarity_csv_is_symmetric_with_unit_diagonal_when_trained() {
        let model = random_model();
        let mut buf = Vec::new();
        write_similarity_csv(&model, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let rows: Vec<Vec<f64>> = text
            .lines()
            .skip(1)
            .map(|l| l.split(',').skip(1).map(|c| c.parse().unwrap()).collect())
            .collect();
        let dim = rows.len();
        for i in 0..dim {
            assert!((rows[i][i] - 1.0).abs() < 1e-9);
            for j in 0..dim {
                assert!((rows[i][j] - rows[j][i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn symmetry_csv_matches_direct_recomputation() {
        let model = random_model();
        let mut buf = Vec::new();
        write_symmetry_csv(&model, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let value_of = |metric: &str| -> f64 {
            text.lines()
                .find(|l| l.starts_with(metric))
                .unwrap()
                .split(',')
                .nth(1)
                .unwrap()
                .parse()
                .unwrap()
        };
        let rg = feature_symmetry_loss(&model.geometry);
        assert_eq!(value_of("feature_symmetry_total,"), rg.value);
        assert_eq!(value_of("feature_symmetry_yz,"), rg.yz_term);
        let (_, fwd) = model.vsa.as_ref().unwrap().attend(&model.geometry).unwrap();
        let maps = fwd.maps();
        let ra = attention_symmetry_loss(maps[2], maps[1]);
        assert_eq!(value_of("attention_symmetry_total,"), ra.value);
        // a vsa-free model omits the attention rows
        let plain = zero_model(false);
        let mut buf = Vec::new();
        write_symmetry_csv(&plain, &mut buf).unwrap();
        assert!(!String::from_utf8(buf).unwrap().contains("attention"));
    }

    #[test]
    fn channel_images_cover_planes_and_maps() {
        let model = random_model();
        let images = channel_images(&model).unwrap();
        // 3 planes × 3 channels + 3 attention maps
        assert_eq!(images.len(), 12);
        assert!(images.iter().any(|(n, _)| n == "geometry_xy_c00"));
        assert!(images.iter().any(|(n, _)| n == "attention_yz"));
        for (_, img) in &images {
            assert_eq!(img.width(), 6);
            assert_eq!(img.height(), 6);
        }
        // zero planes normalize to constant mid-gray
        let flat = channel_images(&zero_model(true)).unwrap();
        let (_, img) = flat.iter().find(|(n, _)| n == "geometry_xz_c01").unwrap();
        assert!(img.pixels().iter().all(|&p| p == 128));
    }
}
