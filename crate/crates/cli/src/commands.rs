use std::fs;
use std::path::{Path, PathBuf};

use log::info;

use cstn::data_io::synthetic::save_scene;
use cstn::data_io::{
    generate_synthetic_pair, load_binary_png, load_difference_raw, load_pair, load_raster, save_binary_png,
    save_difference_raw, save_raster_png, save_raw, save_scalar_png, ImagePair, LoadOptions, RasterImage,
    SensorProfiles,
};
use cstn::detector::{detect_changes, image_styles, otsu_threshold};
use cstn::metrics::{
    classification_metrics, confusion_counts, extract_features, fid, kid, roc_pr_curves, write_curve_csv,
    ConfusionCounts, ExtractorRegistry, MetricsReport,
};
use cstn::model::{content_encode, decode};
use cstn::trainer::{fit, load_checkpoint, save_checkpoint, write_loss_csv};
use cstn::{Domain, ModelParameters, Patch};

use crate::config::RunConfig;
use crate::output::Outputs;
use crate::CliError;

fn require_file(path: &Path, flag: &str) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{flag}: no such file {}", path.display())))
    }
}

fn load_inputs(cfg: &RunConfig, x: &Path, y: &Path) -> Result<(Patch<f32>, Patch<f32>), CliError> {
    require_file(x, "--x")?;
    require_file(y, "--y")?;
    let ImagePair { x, y } = load_pair(
        x,
        y,
        LoadOptions {
            resample_to: cfg.resample,
            normalize: cfg.normalize,
        },
    )?;
    Ok((x.to_patch(Domain::X)?, y.to_patch(Domain::Y)?))
}

fn load_model(path: &Path) -> Result<ModelParameters<f32>, CliError> {
    require_file(path, "--checkpoint")?;
    Ok(load_checkpoint(path)?)
}

pub fn synth(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    if !(cfg.change > 0.0 && cfg.change < 0.5) {
        return Err(CliError::Usage(format!("--change must lie in (0, 0.5), got {}", cfg.change)));
    }
    let scene = generate_synthetic_pair(cfg.seed, cfg.size, cfg.size, cfg.change, &SensorProfiles::default())
        .map_err(|e| CliError::Usage(format!("--size {}: {e}", cfg.size)))?;
    let mut outputs = Outputs::create(out)?;
    for name in ["x.raw", "y.raw", "gt.png", "meta.json"] {
        outputs.file(name);
    }
    save_scene(out, &scene)?;
    outputs.commit();
    println!(
        "wrote {}x{} scene with {} changed pixels to {}",
        cfg.size,
        cfg.size,
        scene.gt.count_ones(),
        out.display()
    );
    Ok(())
}

pub fn train(cfg: &RunConfig, x: &Path, y: &Path, out: &Path) -> Result<(), CliError> {
    let train = cfg.train()?;
    let (x, y) = load_inputs(cfg, x, y)?;
    let arch = cfg.arch(x.channels(), y.channels());
    let mut outputs = Outputs::create(out)?;
    let result = fit(&x, &y, &arch, &train)?;
    save_checkpoint(&outputs.file("checkpoint.raw"), &result.params)?;
    write_loss_csv(&outputs.file("loss.csv"), &result.history)?;
    save_binary_png(&outputs.file("mask.png"), &result.mask)?;
    fs::write(outputs.file("config.txt"), cfg.to_config_string())?;
    outputs.commit();
    if let (Some(first), Some(last)) = (result.history.first(), result.history.last()) {
        println!("total loss {:.6} -> {:.6}", first.loss.total, last.loss.total);
    }
    Ok(())
}

pub fn detect(cfg: &RunConfig, x: &Path, y: &Path, checkpoint: &Path, out: &Path) -> Result<(), CliError> {
    let params = load_model(checkpoint)?;
    let (x, y) = load_inputs(cfg, x, y)?;
    let filter = cfg.filter();
    filter.validate()?;
    let det = detect_changes(&params, &x, &y, filter)?;
    let mut outputs = Outputs::create(out)?;
    save_difference_raw(&outputs.file("di.raw"), &det.difference)?;
    save_scalar_png(&outputs.file("di.png"), &det.difference)?;
    save_binary_png(&outputs.file("cm.png"), &det.change_map)?;
    outputs.commit();
    println!("threshold {}", det.threshold.threshold);
    info!("{} of {} pixels flagged as changed", det.change_map.count_ones(), det.change_map.data().len());
    Ok(())
}

fn write_image(outputs: &mut Outputs, stem: &str, patch: &Patch<f32>) -> Result<(), CliError> {
    let img = RasterImage::from_patch(patch);
    save_raw(&outputs.file(&format!("{stem}.raw")), &img)?;
    if matches!(img.channels(), 1 | 3) {
        save_raster_png(&outputs.file(&format!("{stem}.png")), &img)?;
    }
    Ok(())
}

pub fn translate(
    cfg: &RunConfig,
    x: &Path,
    y: &Path,
    checkpoint: &Path,
    cycle: bool,
    out: &Path,
) -> Result<(), CliError> {
    let params = load_model(checkpoint)?;
    let (x, y) = load_inputs(cfg, x, y)?;
    if (x.height(), x.width()) != (y.height(), y.width()) {
        return Err(CliError::Usage("--x and --y differ in size".into()));
    }
    let (sx, sy) = image_styles(&params, &x, &y)?;
    let cx = content_encode(&params, &x)?;
    let cy = content_encode(&params, &y)?;
    let y_hat = decode(&params, &cx, &sy, Domain::Y)?;
    let x_hat = decode(&params, &cy, &sx, Domain::X)?;

    let mut outputs = Outputs::create(out)?;
    write_image(&mut outputs, "x_to_y", &y_hat)?;
    write_image(&mut outputs, "y_to_x", &x_hat)?;
    if cycle {
        let (sx_t, sy_t) = image_styles(&params, &x_hat, &y_hat)?;
        let x_back = decode(&params, &content_encode(&params, &y_hat)?, &sx_t, Domain::X)?;
        let y_back = decode(&params, &content_encode(&params, &x_hat)?, &sy_t, Domain::Y)?;
        write_image(&mut outputs, "x_cycle", &x_back)?;
        write_image(&mut outputs, "y_cycle", &y_back)?;
    }
    outputs.commit();
    Ok(())
}

pub struct EvalInputs {
    pub cm: Option<PathBuf>,
    pub gt: Option<PathBuf>,
    pub di: Option<PathBuf>,
    pub counts: Option<String>,
    pub real: Vec<PathBuf>,
    pub translated: Vec<PathBuf>,
}

fn parse_counts(text: &str) -> Result<ConfusionCounts, CliError> {
    let v: Vec<u64> = text
        .split(',')
        .map(|s| s.trim().parse())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::Usage(format!("--counts: expected TP,FP,TN,FN, got '{text}'")))?;
    let [tp, fp, tn, fn_] = v[..] else {
        return Err(CliError::Usage(format!("--counts: expected four values, got {}", v.len())));
    };
    Ok(ConfusionCounts { tp, fp, tn, fn_ })
}

fn load_images(paths: &[PathBuf], flag: &str) -> Result<Vec<RasterImage>, CliError> {
    paths
        .iter()
        .map(|p| {
            require_file(p, flag)?;
            Ok(load_raster(p)?)
        })
        .collect()
}

pub fn evaluate(cfg: &RunConfig, inputs: &EvalInputs, out: &Path) -> Result<(), CliError> {
    let mut report = MetricsReport::default();
    let gt = match &inputs.gt {
        Some(p) => {
            require_file(p, "--gt")?;
            Some(load_binary_png(p)?)
        }
        None => None,
    };
    let need_gt = |flag: &str| CliError::Usage(format!("{flag} needs --gt"));

    if let Some(text) = &inputs.counts {
        report.counts = Some(parse_counts(text)?);
    } else if let Some(p) = &inputs.cm {
        require_file(p, "--cm")?;
        let cm = load_binary_png(p)?;
        report.counts = Some(confusion_counts(&cm, gt.as_ref().ok_or_else(|| need_gt("--cm"))?)?);
    }
    if let Some(c) = &report.counts {
        report.classification = Some(classification_metrics(c)?);
    }

    let mut curves = None;
    if let Some(p) = &inputs.di {
        require_file(p, "--di")?;
        let di = load_difference_raw(p)?;
        let c = roc_pr_curves(&di, gt.as_ref().ok_or_else(|| need_gt("--di"))?)?;
        report.auc = Some(c.auc);
        report.ap = Some(c.ap);
        report.threshold = Some(otsu_threshold(&di)?.threshold);
        curves = Some(c);
    }

    if !inputs.real.is_empty() || !inputs.translated.is_empty() {
        if inputs.real.is_empty() || inputs.translated.is_empty() {
            return Err(CliError::Usage("--real and --translated must be given together".into()));
        }
        let extractor = ExtractorRegistry::default().get(&cfg.extractor)?;
        let real = extract_features(&load_images(&inputs.real, "--real")?, extractor.as_ref())?;
        let translated = extract_features(&load_images(&inputs.translated, "--translated")?, extractor.as_ref())?;
        report.fid = Some(fid(&real, &translated)?);
        report.kid = Some(kid(&real, &translated, false)?);
    }

    if report == MetricsReport::default() {
        return Err(CliError::Usage(
            "nothing to evaluate: pass --counts, --cm with --gt, --di with --gt, or --real with --translated".into(),
        ));
    }

    let mut outputs = Outputs::create(out)?;
    report.write_json(&outputs.file("report.json"))?;
    if let Some(c) = &curves {
        write_curve_csv(&outputs.file("roc.csv"), &c.roc)?;
        write_curve_csv(&outputs.file("pr.csv"), &c.pr)?;
    }
    outputs.commit();
    if let Some(m) = &report.classification {
        println!("OE {} OA {:.4} F1 {:.4} KC {:.4}", m.oe, m.oa, m.f1, m.kc);
    }
    if let (Some(auc), Some(ap)) = (report.auc, report.ap) {
        println!("AUC {auc:.4} AP {ap:.4}");
    }
    if let (Some(f), Some(k)) = (report.fid, report.kid) {
        println!("FID {f:.6} KID {k:.6}");
    }
    Ok(())
}
