//! Command-line harness around the symfield library: fit models to
//! analytic shapes under partial visibility, analyze and export them,
//! render meshes, and score point-cloud metrics.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use symfield::dmtet::{TetGrid, TriMesh};
use symfield::harness::render::{render_shaded, render_silhouette};
use symfield::harness::{analyze, run_fit, Model, RunConfig, TargetShape, VisibilitySpec};
use symfield::metrics::{chamfer, coverage, mmd, sample_mesh_surface, PointCloud};
use symfield::triplane::Point3;
use symfield::{Error, Result};

// distinct sampling streams for the two sides of a comparison
const GEN_SALT: u64 = 0x67656e5f73616d70;
const REF_SALT: u64 = 0x7265665f73616d70;

#[derive(Parser)]
#[command(
    name = "symfield",
    version,
    about = "Symmetric-triplane field fitting and analysis harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model to an analytic shape and write model, mesh and reports
    Fit(FitArgs),
    /// Write similarity/symmetry CSVs and per-channel images for a model
    Analyze(AnalyzeArgs),
    /// Render a mesh or a fitted model to a PGM/PPM image
    Render(RenderArgs),
    /// Score generated meshes against references (chamfer, COV, MMD)
    Metrics(MetricsArgs),
    /// Dump a model's planes, kernels, decoders and mesh to separate files
    Export(ExportArgs),
}

#[derive(Args)]
struct FitArgs {
    /// Target shape: sphere, capsule-chair or winged
    #[arg(long)]
    shape: Option<String>,
    /// Visible azimuth interval in degrees, half-open, e.g. 0:120
    #[arg(long, value_name = "A:B")]
    azimuth_range: Option<String>,
    /// Also treat the z-mirrored azimuth interval as visible
    #[arg(long)]
    mirror_augment: bool,
    /// Weight of the feature-plane symmetry term
    #[arg(long)]
    alpha: Option<f64>,
    /// Weight of the attention-map symmetry term
    #[arg(long)]
    beta: Option<f64>,
    /// Disable the per-plane spatial attention module
    #[arg(long)]
    no_vsa: bool,
    /// Query texture through the plain (non-mirror-averaged) path
    #[arg(long)]
    no_tex_sym: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    steps: Option<usize>,
    /// Optional `key = value` config file applied before the flags
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Output directory for model.stml, mesh.obj, summary.csv, trace.csv
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Serialized model produced by `fit`
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    /// Output directory for similarity.csv, symmetry.csv and images
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args)]
struct RenderArgs {
    /// Serialized model to mesh and render
    #[arg(long, value_name = "FILE", conflicts_with = "mesh")]
    model: Option<PathBuf>,
    /// OBJ mesh to render directly
    #[arg(long, value_name = "FILE")]
    mesh: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0)]
    azimuth: f64,
    #[arg(long, default_value_t = 0.0)]
    elevation: f64,
    /// Image width and height in pixels
    #[arg(long, default_value_t = 256)]
    size: usize,
    /// Interpolate vertex colors instead of a binary silhouette
    #[arg(long)]
    shaded: bool,
    /// Tet grid resolution used when meshing a model
    #[arg(long, default_value_t = 32)]
    tet_resolution: usize,
    /// Output image: P5 PGM for silhouettes, P6 PPM for shaded renders
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Args)]
struct MetricsArgs {
    /// Generated OBJ mesh (repeatable)
    #[arg(long, value_name = "FILE", required = true)]
    generated: Vec<PathBuf>,
    /// Reference OBJ mesh (repeatable)
    #[arg(long, value_name = "FILE")]
    reference: Vec<PathBuf>,
    /// Analytic reference shape, meshed at --tet-resolution
    #[arg(long, conflicts_with = "reference")]
    shape: Option<String>,
    /// Surface samples per mesh
    #[arg(long, default_value_t = 4096)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 32)]
    tet_resolution: usize,
    /// Report per-region chamfer for this visible interval (single pair only)
    #[arg(long, value_name = "A:B")]
    azimuth_range: Option<String>,
    #[arg(long)]
    mirror_augment: bool,
    /// CSV report path; stdout when omitted
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    /// Serialized model produced by `fit`
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    /// Tet grid resolution for the exported mesh
    #[arg(long, default_value_t = 32)]
    tet_resolution: usize,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit(args) => cmd_fit(args),
        Command::Analyze(args) => cmd_analyze(args),
        Command::Render(args) => cmd_render(args),
        Command::Metrics(args) => cmd_metrics(args),
        Command::Export(args) => cmd_export(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

/// Defaults, then the config file, then explicit flags.
fn build_config(args: &FitArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path)?;
        cfg.apply_text(&text)?;
    }
    if let Some(shape) = &args.shape {
        cfg.shape = TargetShape::from_name(shape)?;
    }
    if let Some(range) = &args.azimuth_range {
        let (a, b) = VisibilitySpec::parse_range(range)?;
        cfg.visibility = VisibilitySpec::new(a, b, cfg.visibility.mirror_augment)?;
    }
    if args.mirror_augment {
        cfg.visibility = VisibilitySpec::new(
            cfg.visibility.min_deg(),
            cfg.visibility.max_deg(),
            true,
        )?;
    }
    if let Some(alpha) = args.alpha {
        cfg.objective.alpha = alpha;
    }
    if let Some(beta) = args.beta {
        cfg.objective.beta = beta;
    }
    if args.no_vsa {
        cfg.use_vsa = false;
    }
    if args.no_tex_sym {
        cfg.use_tex_sym = false;
    }
    if let Some(seed) = args.seed {
        cfg.objective.seed = seed;
    }
    if let Some(steps) = args.steps {
        cfg.objective.steps = steps;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_fit(args: FitArgs) -> Result<()> {
    let cfg = build_config(&args)?;
    fs::create_dir_all(&args.out)?;
    let outcome = run_fit(&cfg)?;

    outcome.model.save(&args.out.join("model.stml"))?;
    write_out(&args.out.join("mesh.obj"), |w| outcome.mesh.write_obj(w))?;
    write_out(&args.out.join("summary.csv"), |w| {
        outcome.report.write_summary_csv(w)
    })?;
    write_out(&args.out.join("trace.csv"), |w| {
        outcome.report.write_trace_csv(w)
    })?;

    let r = &outcome.report;
    println!(
        "fit {} in {:.1}s ({} steps, seed {})",
        cfg.shape.name(),
        r.wall_clock_seconds,
        cfg.objective.steps,
        cfg.objective.seed
    );
    println!(
        "final loss {:.6e}, mesh {} vertices / {} triangles",
        r.final_loss, r.mesh_vertices, r.mesh_triangles
    );
    match r.chamfer_hidden {
        Some(hidden) => println!(
            "chamfer total {:.6e}, visible {:.6e}, hidden {:.6e}",
            r.chamfer_total, r.chamfer_visible, hidden
        ),
        None => println!(
            "chamfer total {:.6e}, visible {:.6e}, hidden n/a",
            r.chamfer_total, r.chamfer_visible
        ),
    }
    println!("wrote model.stml, mesh.obj, summary.csv, trace.csv to {}", args.out.display());
    Ok(())
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<()> {
    let model = Model::load(&args.model)?;
    fs::create_dir_all(&args.out)?;
    write_out(&args.out.join("similarity.csv"), |w| {
        analyze::write_similarity_csv(&model, w)
    })?;
    write_out(&args.out.join("symmetry.csv"), |w| {
        analyze::write_symmetry_csv(&model, w)
    })?;
    let images = analyze::channel_images(&model)?;
    let count = images.len();
    for (name, img) in images {
        write_out(&args.out.join(format!("{name}.pgm")), |w| img.write_pgm(w))?;
    }
    println!(
        "wrote similarity.csv, symmetry.csv and {count} channel images to {}",
        args.out.display()
    );
    Ok(())
}

fn cmd_render(args: RenderArgs) -> Result<()> {
    let mesh = match (&args.model, &args.mesh) {
        (Some(path), None) => Model::load(path)?.extract_mesh(args.tet_resolution)?,
        (None, Some(path)) => TriMesh::read_obj(BufReader::new(File::open(path)?))?,
        _ => {
            return Err(Error::InvalidInput(
                "pass exactly one of --model or --mesh".into(),
            ))
        }
    };
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    if args.shaded {
        let img = render_shaded(&mesh, args.azimuth, args.elevation, args.size)?;
        write_out(&args.out, |w| img.write_ppm(w))?;
    } else {
        let img = render_silhouette(&mesh, args.azimuth, args.elevation, args.size)?;
        write_out(&args.out, |w| img.write_pgm(w))?;
    }
    println!(
        "rendered {}x{} {} at azimuth {}, elevation {} to {}",
        args.size,
        args.size,
        if args.shaded { "shaded view" } else { "silhouette" },
        args.azimuth,
        args.elevation,
        args.out.display()
    );
    Ok(())
}

fn cmd_metrics(args: MetricsArgs) -> Result<()> {
    let mut generated = Vec::new();
    for (i, path) in args.generated.iter().enumerate() {
        let mesh = TriMesh::read_obj(BufReader::new(File::open(path)?))?;
        let cloud = sample_mesh_surface(&mesh, args.samples, args.seed ^ GEN_SALT ^ i as u64)?;
        generated.push((path_label(path), cloud));
    }

    let mut reference = Vec::new();
    if let Some(name) = &args.shape {
        let shape = TargetShape::from_name(name)?;
        let mut grid = TetGrid::new(args.tet_resolution)?;
        grid.populate_analytic(|p| shape.sdf(Point3::new(p[0], p[1], p[2])));
        let mesh = grid.marching_tets()?;
        let cloud = sample_mesh_surface(&mesh, args.samples, args.seed ^ REF_SALT)?;
        reference.push((name.clone(), cloud));
    } else {
        for (i, path) in args.reference.iter().enumerate() {
            let mesh = TriMesh::read_obj(BufReader::new(File::open(path)?))?;
            let cloud = sample_mesh_surface(&mesh, args.samples, args.seed ^ REF_SALT ^ i as u64)?;
            reference.push((path_label(path), cloud));
        }
    }
    if reference.is_empty() {
        return Err(Error::InvalidInput(
            "pass at least one --reference mesh or an analytic --shape".into(),
        ));
    }

    let mut report = String::from("metric,generated,reference,value\n");
    for (gname, gcloud) in &generated {
        for (rname, rcloud) in &reference {
            let d = chamfer(gcloud, rcloud);
            report.push_str(&format!("chamfer,{gname},{rname},{d}\n"));
        }
    }
    let gen_clouds: Vec<PointCloud> = generated.iter().map(|(_, c)| c.clone()).collect();
    let ref_clouds: Vec<PointCloud> = reference.iter().map(|(_, c)| c.clone()).collect();
    report.push_str(&format!("cov,,,{}\n", coverage(&gen_clouds, &ref_clouds)?));
    report.push_str(&format!("mmd,,,{}\n", mmd(&gen_clouds, &ref_clouds)?));

    if let Some(range) = &args.azimuth_range {
        if generated.len() != 1 || reference.len() != 1 {
            return Err(Error::InvalidInput(
                "--azimuth-range breakdown needs exactly one generated and one reference mesh"
                    .into(),
            ));
        }
        let (a, b) = VisibilitySpec::parse_range(range)?;
        let vis = VisibilitySpec::new(a, b, args.mirror_augment)?;
        let regional =
            symfield::harness::fit::regional_chamfer(&ref_clouds[0], &gen_clouds[0], &vis);
        let gname = &generated[0].0;
        let rname = &reference[0].0;
        report.push_str(&format!("chamfer_total,{gname},{rname},{}\n", regional.total));
        match regional.visible {
            Some(v) => report.push_str(&format!("chamfer_visible,{gname},{rname},{v}\n")),
            None => report.push_str(&format!("chamfer_visible,{gname},{rname},na\n")),
        }
        match regional.hidden {
            Some(v) => report.push_str(&format!("chamfer_hidden,{gname},{rname},{v}\n")),
            None => report.push_str(&format!("chamfer_hidden,{gname},{rname},na\n")),
        }
        report.push_str(&format!(
            "visible_count,{gname},{rname},{}\n",
            regional.visible_count
        ));
        report.push_str(&format!(
            "hidden_count,{gname},{rname},{}\n",
            regional.hidden_count
        ));
    }

    match &args.out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(path, report.as_bytes())?;
            println!("wrote metrics report to {}", path.display());
        }
        None => print!("{report}"),
    }
    Ok(())
}

fn cmd_export(args: ExportArgs) -> Result<()> {
    let model = Model::load(&args.model)?;
    fs::create_dir_all(&args.out)?;

    let plane_names = ["xy", "xz", "yz"];
    for (name, plane) in plane_names.iter().zip(model.geometry.planes()) {
        write_out(&args.out.join(format!("geometry_{name}.stpl")), |w| plane.write_to(w))?;
    }
    for (name, plane) in plane_names.iter().zip(model.texture.planes()) {
        write_out(&args.out.join(format!("texture_{name}.stpl")), |w| plane.write_to(w))?;
    }
    let mut written = 6;
    if let Some(vsa) = &model.vsa {
        write_out(&args.out.join("attention.stvk"), |w| vsa.write_to(w))?;
        written += 1;
    }
    write_out(&args.out.join("sdf_decoder.stmd"), |w| model.sdf_decoder.write_to(w))?;
    write_out(&args.out.join("color_decoder.stmd"), |w| model.color_decoder.write_to(w))?;
    written += 2;

    let mesh = model.extract_mesh(args.tet_resolution)?;
    write_out(&args.out.join("mesh.obj"), |w| mesh.write_obj(w))?;
    written += 1;

    println!("exported {written} files to {}", args.out.display());
    Ok(())
}

fn path_label(path: &Path) -> String {
    path.display().to_string()
}

/// Writes through a buffered file, creating it fresh.
fn write_out<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<()>,
{
    let mut w = BufWriter::new(File::create(path)?);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}
