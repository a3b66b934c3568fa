use std::path::Path;

use hmix_core::elicit::build_pool;
use hmix_core::hmix::{export_hmix, HmixStore, Record};
use hmix_core::mix::sweep_grid;
use hmix_core::train::{generate_shapes, read_cifar_batch, ShapesConfig, SHAPE_CLASSES};
use hmix_core::{sweep_stimuli, Endpoint, ImageTensor, MixCoefficient};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cli::{ImageSource, MixArgs};
use crate::config::{output_path, require, resolve};
use crate::error::{from_core, CliError, Result};
use crate::io::{self, file_stem_for, Table};
use crate::manifest::RunRecorder;
use crate::pool::write_pool;

pub const CIFAR10_CLASSES: [&str; 10] = [
    "airplane", "automobile", "bird", "cat", "deer", "dog", "frog", "horse", "ship", "truck",
];

type Labeled = Vec<(String, usize, ImageTensor)>;

/// Class-per-subdirectory PNG folder; classes are the sorted subdirectory names.
fn read_image_dir(dir: &Path) -> Result<(Labeled, Vec<String>)> {
    let read = |p: &Path| -> Result<Vec<std::path::PathBuf>> {
        let mut v: Vec<_> = std::fs::read_dir(p)
            .map_err(|e| CliError::io(p, e))?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()
            .map_err(|e| CliError::io(p, e))?;
        v.sort();
        Ok(v)
    };
    let classes: Vec<_> = read(dir)?.into_iter().filter(|p| p.is_dir()).collect();
    let mut names = Vec::new();
    let mut images = Vec::new();
    for (c, class_dir) in classes.iter().enumerate() {
        let name = class_dir.file_name().unwrap_or_default().to_string_lossy().to_string();
        for file in read(class_dir)? {
            if file.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
                let stem = file.file_stem().unwrap_or_default().to_string_lossy();
                images.push((format!("{name}-{stem}"), c, io::read_png(&file)?));
            }
        }
        names.push(name);
    }
    if images.is_empty() {
        return Err(CliError::invalid(dir.display(), "no PNG files in class subdirectories"));
    }
    Ok((images, names))
}

fn names_or(given: &Option<Vec<String>>, default: &[&str]) -> Vec<String> {
    given
        .clone()
        .unwrap_or_else(|| default.iter().map(|s| s.to_string()).collect())
}

pub fn run(args: &MixArgs, config: Option<&Path>) -> Result<()> {
    let (a, resolved) = resolve("mix", args, config, &[])?;
    let out = output_path(&require(a.out.clone(), "out")?);
    let seed = a.seed.unwrap_or(0);
    let grid_values = a
        .grid
        .clone()
        .unwrap_or_else(|| sweep_grid().iter().map(|c| c.value()).collect());
    let grid = grid_values
        .iter()
        .map(|&v| MixCoefficient::new(v))
        .collect::<hmix_core::Result<Vec<_>>>()
        .map_err(|e| CliError::invalid("grid", e))?;

    let mut rec = RunRecorder::start("mix", resolved);
    rec.seeds([seed]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (images, names) = match a.source.unwrap_or(ImageSource::Shapes) {
        ImageSource::Shapes => {
            let shapes = generate_shapes(a.count.unwrap_or(200), &ShapesConfig::default(), &mut rng)
                .map_err(|e| CliError::invalid("shapes", e))?;
            let imgs = (0..shapes.data.len())
                .map(|i| (shapes.data.ids()[i].clone(), shapes.classes[i], shapes.data.image(i)))
                .collect();
            (imgs, names_or(&a.class_names, &SHAPE_CLASSES))
        }
        ImageSource::Cifar => {
            let input = require(a.input.clone(), "input")?;
            rec.input(&input);
            let data = read_cifar_batch(io::open(&input)?, "cifar-").map_err(from_core(&input))?;
            let classes = data.hard_targets();
            let imgs = (0..data.len())
                .map(|i| (data.ids()[i].clone(), classes[i], data.image(i)))
                .collect();
            (imgs, names_or(&a.class_names, &CIFAR10_CLASSES))
        }
        ImageSource::Images => {
            let input = require(a.input.clone(), "input")?;
            rec.input(&input);
            read_image_dir(&input)?
        }
    };
    let pool = build_pool(&images, names, a.pairs.unwrap_or(10), &mut rng).map_err(|e| CliError::invalid("pool", e))?;

    io::create_dir(&out)?;
    write_pool(&out, &pool, &grid_values)?;
    let mut index = Table::new(&["pair_id", "lambda_f", "path"]);
    let mut n_stimuli = 0;
    for p in pool.pairs() {
        let end = |id: &str, class, image: &ImageTensor| Endpoint {
            id: id.to_string(),
            class,
            image: image.clone(),
        };
        let a_end = end(&p.info.endpoint_a_id, p.info.class_a, &p.image_a);
        let b_end = end(&p.info.endpoint_b_id, p.info.class_b, &p.image_b);
        let sweep = sweep_stimuli(&p.info.pair_id, &a_end, &b_end, &grid).map_err(|e| CliError::invalid("grid", e))?;
        for s in sweep {
            let rel = format!(
                "stimuli/{}/lambda-{:.4}.png",
                file_stem_for(&s.pair_id),
                s.lambda_f.value()
            );
            io::write_png(&out.join(&rel), &s.mixed_image)?;
            index.row(vec![s.pair_id.clone(), s.lambda_f.value().to_string(), rel]);
            n_stimuli += 1;
        }
    }
    index.write(&out.join("stimuli.tsv"))?;
    let store = HmixStore::from_records(pool.pairs().iter().map(|p| Record::Pair(p.info.clone())))
        .map_err(|e| CliError::invalid("pairs", e))?;
    let pairs_path = out.join("pairs.hmix");
    export_hmix(&store, &pairs_path).map_err(from_core(&pairs_path))?;
    rec.finish(&out)?;
    println!("{} pairs, {n_stimuli} stimuli written to {}", pool.len(), out.display());
    Ok(())
}
