use std::fs;
use std::net::SocketAddr;
use std::path::Path;

use flashlab::dataset::{synthesize, Manifest, SceneConfig, SceneRecord, Split, SplitRatios};
use flashlab::formation::{relight, AmbientLight, DecompositionResult};
use flashlab::highres::{guided_sr, upscaled_ratio, PassThrough, RatioModel};
use flashlab::imgcore::{read_pfm, write_pfm, write_png, LinearImage};
use flashlab::networks::{EncoderDecoder, Task};
use flashlab::trainer::{
    evaluate, infer_decompose, infer_generate, train, white_balanced_ambient, GuideMaps, TrainConfig,
};
use flashlab::Error;
use flashlab_service::{serve, SceneStore, ServeConfig};

use crate::{
    Cli, Command, DecomposeArgs, EvalArgs, GenerateArgs, RelightArgs, ServeArgs, SourceArgs, SplitArg, SrArgs,
    SynthArgs, TaskArg, TrainArgs,
};

pub enum CliError {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Runtime(e)
    }
}

type Result<T> = std::result::Result<T, CliError>;

pub fn run(cli: Cli) -> Result<()> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot configure {} threads: {e}", cli.threads)))?;
    }
    let seed = cli.seed;
    match cli.command {
        Command::Synth(a) => synth(a, seed),
        Command::Train(a) => train_cmd(a, seed),
        Command::Eval(a) => eval(a),
        Command::Decompose(a) => decompose(a),
        Command::Generate(a) => generate(a),
        Command::Relight(a) => relight_cmd(a),
        Command::Sr(a) => sr(a),
        Command::Serve(a) => serve_cmd(a),
    }
}

fn synth(a: SynthArgs, seed: u64) -> Result<()> {
    let config = SceneConfig { resolution: a.res, ..SceneConfig::default() };
    let ratios = SplitRatios { train: a.train_fraction, val: a.val_fraction, test: a.test_fraction };
    let m = synthesize(&a.out, a.count, &config, ratios, seed)?;
    println!("wrote {} scenes to {}", m.records.len(), a.out.display());
    Ok(())
}

fn task(t: TaskArg) -> Task {
    match t {
        TaskArg::Decomposition => Task::Decomposition,
        TaskArg::Generation => Task::Generation,
        TaskArg::Sr => Task::Sr,
    }
}

fn split(s: SplitArg) -> Split {
    match s {
        SplitArg::Train => Split::Train,
        SplitArg::Val => Split::Val,
        SplitArg::Test => Split::Test,
    }
}

fn train_cmd(a: TrainArgs, seed: u64) -> Result<()> {
    let cfg = TrainConfig {
        epochs: a.epochs,
        lr: a.lr,
        batch_size: a.batch_size,
        seed,
        decomposer: a.decomposer,
        width: a.width,
        levels: a.levels,
        checkpoint_every: a.checkpoint_every,
        cycle: !a.no_cycle,
        sr_low_res: a.sr_low_res,
        sr_crop: a.sr_crop,
        max_train: a.max_train,
        ..TrainConfig::new(task(a.task), a.data, a.ckpt_out)
    };
    if let Err(Error::Config(msg)) = cfg.validate() {
        return Err(CliError::Usage(msg));
    }
    let report = train(&cfg)?;
    println!(
        "{} trained for {} epochs: val loss {:.6} -> {:.6} (best epoch {})",
        report.task,
        report.history.len(),
        report.first_val_loss(),
        report.final_val_loss(),
        report.best_epoch
    );
    for (name, m) in &report.val_metrics {
        println!("  {name}: PSNR {:.3} dB, SSIM {:.4}", m.psnr_db, m.ssim);
    }
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let report = evaluate(&a.ckpt, &a.data, split(a.split))?;
    let bytes = serde_json::to_vec_pretty(&report).map_err(Error::from)?;
    fs::write(&a.out, bytes).map_err(|e| Error::Io { path: a.out.clone(), source: e })?;
    for (name, m) in &report.mean {
        let b = &report.baseline_mean[name];
        println!(
            "{name}: PSNR {:.3} dB (baseline {:.3}), SSIM {:.4} (baseline {:.4})",
            m.psnr_db, b.psnr_db, m.ssim, b.ssim
        );
    }
    Ok(())
}

/// Guide maps from a dataset scene or from explicit files.
enum Guides {
    Scene(Box<SceneRecord>),
    Files { albedo: LinearImage, normals: LinearImage, depth: LinearImage },
}

impl Guides {
    fn load(s: &SourceArgs) -> Result<Self> {
        if let (Some(root), Some(id)) = (&s.data, &s.scene) {
            let m = Manifest::load(root)?;
            let rec = m.get(id).ok_or_else(|| CliError::Usage(format!("no scene {id} in {}", root.display())))?;
            return Ok(Guides::Scene(Box::new(rec.load(root)?)));
        }
        let need = |p: &Option<std::path::PathBuf>, flag: &str| match p {
            Some(p) => Ok(read_pfm(p)?),
            None => Err(CliError::Usage(format!("--{flag} is required without --data/--scene"))),
        };
        Ok(Guides::Files {
            albedo: need(&s.albedo, "albedo")?,
            normals: need(&s.normals, "normals")?,
            depth: need(&s.depth, "depth")?,
        })
    }

    fn maps(&self) -> GuideMaps<'_> {
        match self {
            Guides::Scene(r) => GuideMaps::of(r),
            Guides::Files { albedo, normals, depth } => GuideMaps { albedo, normals, depth },
        }
    }

    fn record(&self) -> Option<&SceneRecord> {
        match self {
            Guides::Scene(r) => Some(r),
            Guides::Files { .. } => None,
        }
    }
}

fn decompose(a: DecomposeArgs) -> Result<()> {
    let guides = Guides::load(&a.source)?;
    let photo = match (guides.record(), &a.input) {
        (Some(r), _) => r.photo.clone(),
        (None, Some(p)) => read_pfm(p)?,
        (None, None) => return Err(CliError::Usage("--input is required without --data/--scene".into())),
    };
    let net = EncoderDecoder::<f32>::load(&a.ckpt)?;
    let d = infer_decompose(&net, &photo, guides.maps())?;
    d.save_dir(&a.out)?;
    println!(
        "decomposed into {} (ambient {:.0} K, {} of {} pixels valid)",
        a.out.display(),
        d.ambient.kelvin,
        d.valid.count_valid(),
        d.valid.as_slice().len()
    );
    Ok(())
}

fn generate(a: GenerateArgs) -> Result<()> {
    let guides = Guides::load(&a.source)?;
    let (no_flash, ambient) = match guides.record() {
        Some(r) => (white_balanced_ambient(r)?, r.components.ambient),
        None => {
            let path = a
                .no_flash
                .as_ref()
                .ok_or_else(|| CliError::Usage("--no-flash is required without --data/--scene".into()))?;
            let kelvin = a
                .kelvin
                .ok_or_else(|| CliError::Usage("--kelvin is required without --data/--scene".into()))?;
            (read_pfm(path)?, AmbientLight::from_kelvin(kelvin)?)
        }
    };
    let net = EncoderDecoder::<f32>::load(&a.ckpt)?;
    let (f, p) = infer_generate(&net, &no_flash, guides.maps(), ambient.c_a)?;
    fs::create_dir_all(&a.out).map_err(|e| Error::Io { path: a.out.clone(), source: e })?;
    write_pfm(&f, a.out.join("F.pfm"))?;
    write_pfm(&p, a.out.join("P.pfm"))?;
    println!("wrote F.pfm and P.pfm to {}", a.out.display());
    Ok(())
}

fn write_image(img: &LinearImage, path: &Path) -> Result<()> {
    let is_pfm = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pfm"));
    if is_pfm {
        write_pfm(img, path)?;
    } else {
        write_png(img, path)?;
    }
    Ok(())
}

fn relight_cmd(a: RelightArgs) -> Result<()> {
    let owned;
    let d: &DecompositionResult = match (&a.decomposition, &a.scene) {
        (Some(dir), _) => {
            owned = DecompositionResult::load_dir(dir)?;
            &owned
        }
        (None, Some(id)) => {
            let store = SceneStore::open(&a.data)?;
            if !store.contains(id) {
                return Err(CliError::Usage(format!("no scene {id} in {}", a.data.display())));
            }
            owned = store
                .decomposition(id)
                .cloned()
                .ok_or_else(|| Error::Config(format!("scene {id} has no decomposition")))?;
            &owned
        }
        (None, None) => return Err(CliError::Usage("--scene or --decomposition is required".into())),
    };
    let img = relight(d, a.kappa, a.alpha, a.kelvin).map_err(|e| match e {
        Error::OutOfRange(m) => CliError::Usage(m),
        e => CliError::Runtime(e),
    })?;
    write_image(&img, &a.out)?;
    println!("wrote {}", a.out.display());
    Ok(())
}

fn sr(a: SrArgs) -> Result<()> {
    let photo = read_pfm(&a.input)?;
    let a_low = read_pfm(&a.lowres)?;
    let net = a.ckpt.as_ref().map(EncoderDecoder::<f32>::load).transpose()?;
    let model: &dyn RatioModel = match &net {
        Some(n) => n,
        None => &PassThrough,
    };
    let hr = guided_sr(&photo, &a_low, model)?;
    write_pfm(&hr, &a.out)?;
    if let Some(path) = &a.ratio_out {
        let ratio = model.predict(&upscaled_ratio(&photo, &a_low)?, &photo)?;
        write_pfm(&ratio, path)?;
    }
    println!("wrote {}", a.out.display());
    Ok(())
}

fn serve_cmd(a: ServeArgs) -> Result<()> {
    let bind: SocketAddr = format!("{}:{}", a.bind, a.port)
        .parse()
        .map_err(|e| CliError::Usage(format!("invalid bind address {}:{}: {e}", a.bind, a.port)))?;
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Error::Io { path: a.data.clone(), source: e })?;
    rt.block_on(serve(ServeConfig { root: a.data, bind, ui_dir: a.ui_dir }))?;
    Ok(())
}
