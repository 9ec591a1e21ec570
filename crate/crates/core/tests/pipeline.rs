use std::fs;
use std::path::{Path, PathBuf};

use seqsr_core::pipeline::{
    frame_file_name, Pipeline, PipelineConfig, ProvenanceReport, UpsampleManifest, UpsamplerConfig,
};
use seqsr_core::raster::{self, RasterImage};
use seqsr_core::{synthetic, CameraPose, Error, FrameId, MeasureKind, OrderingConfig};

fn scene(root: &Path, poses: &[CameraPose], size: usize) -> PathBuf {
    synthetic::write_dataset(&root.join("scene"), poses, size, size).unwrap();
    PathBuf::from("scene/transforms.json")
}

fn pose_only(min_len: usize) -> OrderingConfig {
    OrderingConfig {
        select_measure: MeasureKind::PoseAngleToOrigin,
        min_subseq_len: min_len,
        ..OrderingConfig::object_centric()
    }
}

fn config(dataset: PathBuf, scale: usize, ordering: OrderingConfig) -> PipelineConfig {
    PipelineConfig {
        dataset,
        scale_factor: scale,
        ordering,
        ..PipelineConfig::default()
    }
}

fn ring_pipeline(root: &Path, n: usize, size: usize, scale: usize) -> Pipeline {
    let dataset = scene(root, &synthetic::uniform_ring(n, 4.0), size);
    Pipeline::new(root, config(dataset, scale, pose_only(8))).unwrap()
}

#[test]
fn degrade_sizes_and_idempotence() {
    let dir = tempfile::tempdir().unwrap();
    let p = ring_pipeline(dir.path(), 3, 96, 4);
    let sidecar = p.degrade().unwrap();
    assert_eq!(sidecar.frames.len(), 3);
    assert!(sidecar.frames.iter().all(|f| f.source_size == [96, 96] && f.output_size == [24, 24]));
    let lr = raster::read_png(&p.layout().lr_frame(FrameId(1))).unwrap();
    assert_eq!((lr.dimensions(), lr.channels()), ((24, 24), 3));
    let bytes = |p: &Pipeline| {
        (0..3)
            .map(|i| fs::read(p.layout().lr_frame(FrameId(i))).unwrap())
            .chain([fs::read(p.layout().lr_manifest()).unwrap()])
            .collect::<Vec<_>>()
    };
    let first = bytes(&p);
    p.degrade().unwrap();
    assert_eq!(first, bytes(&p));
}

#[test]
fn degrade_rounds_odd_sizes_up() {
    let dir = tempfile::tempdir().unwrap();
    let p = ring_pipeline(dir.path(), 2, 90, 4);
    let sidecar = p.degrade().unwrap();
    let (w, h) = raster::downscaled_size(90, 90, 4);
    assert_eq!((w, h), (23, 23));
    assert_eq!(sidecar.frames[0].output_size, [w, h]);
    assert_eq!(raster::png_dimensions(&p.layout().lr_frame(FrameId(0))).unwrap(), (w, h));
}

#[test]
fn dense_ring_is_covered_in_the_first_round() {
    let dir = tempfile::tempdir().unwrap();
    let p = ring_pipeline(dir.path(), 100, 8, 2);
    p.degrade().unwrap();
    let outcome = p.plan().unwrap();
    let plan = &outcome.plan;
    assert_eq!(plan.coverage.len(), 100);
    assert!(plan.subsequences.iter().all(|s| s.round == 0 && s.len() == 100));
    assert_eq!(plan.rounds[0].covered_total, 100);
    assert_eq!(outcome.report.total_misalignments, 0);
    assert_eq!(outcome.manifest.subsequences.len(), plan.subsequences.len());
    let plan_bytes = fs::read(p.layout().plan()).unwrap();
    let manifest_bytes = fs::read(p.layout().upsample_manifest()).unwrap();
    p.plan().unwrap();
    assert_eq!(plan_bytes, fs::read(p.layout().plan()).unwrap());
    assert_eq!(manifest_bytes, fs::read(p.layout().upsample_manifest()).unwrap());
}

#[test]
fn steps_need_their_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let p = ring_pipeline(dir.path(), 3, 16, 2);
    assert!(p.plan().is_err());
    p.degrade().unwrap();
    assert!(p.upsample().is_err());
    assert!(p.aggregate().is_err());
}

#[test]
fn reference_upsampler_keeps_constants() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let img = RasterImage::filled(16, 16, 3, 100.0 / 255.0).unwrap();
    let poses = synthetic::uniform_ring(3, 4.0);
    fs::create_dir_all(root.join("flat")).unwrap();
    let mut frames = Vec::new();
    for (i, pose) in poses.iter().enumerate() {
        raster::write_png(&img, &root.join(format!("flat/{i}.png"))).unwrap();
        frames.push(serde_json::json!({ "file_path": format!("./{i}.png"), "transform_matrix": pose.transform }));
    }
    fs::write(root.join("flat/transforms.json"), serde_json::to_vec(&serde_json::json!({ "frames": frames })).unwrap()).unwrap();
    let p = Pipeline::new(root, config("flat/transforms.json".into(), 2, pose_only(1))).unwrap();
    p.degrade().unwrap();
    p.plan().unwrap();
    let summary = p.upsample().unwrap();
    assert_eq!(summary.invocations, 0);
    let manifest = p.load_upsample_manifest().unwrap();
    for f in manifest.subsequences.iter().flat_map(|c| &c.frames) {
        let hr = raster::read_png(&p.layout().out.join(&f.output_path)).unwrap();
        assert_eq!(hr.dimensions(), (16, 16));
        assert!(raster::to_bytes(&hr).iter().all(|&b| b == 100));
    }
}

fn external(p: &Pipeline, command: &str, per_subsequence: bool) -> Pipeline {
    let mut cfg = p.config().clone();
    cfg.upsampler = UpsamplerConfig::External {
        command: command.into(),
        per_subsequence,
        timeout_secs: Some(60),
    };
    Pipeline::new(p.root(), cfg).unwrap()
}

#[test]
fn failing_upsampler_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let p = ring_pipeline(dir.path(), 12, 16, 2);
    p.degrade().unwrap();
    p.plan().unwrap();
    match external(&p, "false {manifest} {outdir}", false).upsample() {
        Err(Error::Upsampler(_)) => {}
        other => panic!("expected an upsampler error, got {other:?}"),
    }
    let first = p.load_upsample_manifest().unwrap().subsequences[0].subseq_id;
    for per_subsequence in [false, true] {
        match external(&p, "true {manifest} {outdir}", per_subsequence).upsample() {
            Err(Error::Subsequence { subseq_id, reason }) => {
                assert_eq!(subseq_id, first);
                assert!(reason.contains("missing output"), "{reason}");
            }
            other => panic!("expected a missing output, got {other:?}"),
        }
    }
}

#[test]
fn external_upsampler_sees_manifest_and_outdir() {
    let dir = tempfile::tempdir().unwrap();
    let p = ring_pipeline(dir.path(), 12, 16, 2);
    p.degrade().unwrap();
    p.plan().unwrap();
    p.upsample().unwrap();
    let stash = dir.path().join("stash");
    fs::rename(p.layout().upsampled_dir(), &stash).unwrap();
    let command = format!("test -f {{manifest}} && cp -r '{}'/. {{outdir}}/", stash.display());
    let summary = external(&p, &command, true).upsample().unwrap();
    assert_eq!(summary.invocations, summary.subsequences);
    assert!(fs::read_dir(p.layout().out.clone()).unwrap().all(|e| !e
        .unwrap()
        .file_name()
        .to_string_lossy()
        .starts_with(".upsample")));
}

#[test]
fn wrong_output_size_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = ring_pipeline(dir.path(), 12, 16, 2);
    p.degrade().unwrap();
    p.plan().unwrap();
    let manifest = p.load_upsample_manifest().unwrap();
    let out = &p.layout().out;
    for f in manifest.subsequences.iter().flat_map(|c| &c.frames) {
        let dst = out.join(&f.output_path);
        fs::create_dir_all(dst.parent().unwrap()).unwrap();
        fs::copy(out.join(&f.lr_path), dst).unwrap();
    }
    match manifest.verify_outputs(out) {
        Err(Error::Subsequence { reason, .. }) => assert!(reason.contains("expected 16x16"), "{reason}"),
        other => panic!("expected a size error, got {other:?}"),
    }
}

#[test]
fn aggregation_takes_the_earliest_clip() {
    let dir = tempfile::tempdir().unwrap();
    let p = ring_pipeline(dir.path(), 12, 16, 2);
    p.degrade().unwrap();
    let plan = p.plan().unwrap().plan;
    assert!(plan.subsequences.len() > 1);
    let manifest = UpsampleManifest::read(&p.layout().upsample_manifest()).unwrap();
    let out = &p.layout().out;
    for clip in &manifest.subsequences {
        let mark = RasterImage::filled(16, 16, 3, (clip.subseq_id + 1) as f64 / 255.0).unwrap();
        for f in &clip.frames {
            raster::write_png(&mark, &out.join(&f.output_path)).unwrap();
        }
    }
    let summary = p.aggregate().unwrap();
    assert_eq!((summary.frames, summary.width, summary.height), (12, 16, 16));
    let provenance: ProvenanceReport =
        serde_json::from_slice(&fs::read(p.layout().provenance()).unwrap()).unwrap();
    assert_eq!(provenance.frames.len(), 12);
    for entry in &provenance.frames {
        let expected = plan.coverage.provenance(entry.frame_id).unwrap();
        assert_eq!((entry.round, entry.subseq_id, entry.position), (expected.round, expected.subseq_id, expected.position));
        let earliest = plan
            .subsequences
            .iter()
            .filter(|s| s.frames.contains(&entry.frame_id))
            .map(|s| (s.round, s.subseq_id))
            .min()
            .unwrap();
        assert_eq!((entry.round, entry.subseq_id), earliest);
        let hr = raster::read_png(&p.layout().hr_dir().join(frame_file_name(entry.frame_id))).unwrap();
        let byte = raster::to_bytes(&hr)[0] as usize;
        assert_eq!(byte - 1, entry.subseq_id);
    }
    let hr_manifest = seqsr_core::dataset::load_pose_manifest(&p.layout().hr_manifest()).unwrap();
    assert_eq!(hr_manifest.len(), 12);
}

#[test]
fn eval_of_ground_truth_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let p = ring_pipeline(dir.path(), 3, 32, 2);
    let dataset = p.config().dataset.clone();
    let report = p.eval(Some(&dataset), Some(&dataset)).unwrap();
    assert_eq!(report.mean_psnr, f64::INFINITY);
    assert!((report.mean_ssim - 1.0).abs() < 1e-12);
    let json = fs::read_to_string(p.layout().metrics_json()).unwrap();
    assert!(json.contains("\"inf\""));
    let csv = fs::read_to_string(p.layout().metrics_csv()).unwrap();
    assert!(csv.lines().last().unwrap().starts_with("mean,99,"));
}

#[test]
fn transparent_pixels_do_not_count() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let p = ring_pipeline(root, 2, 32, 2);
    let dataset = p.config().dataset.clone();
    let set = seqsr_core::dataset::load_pose_manifest(&root.join(&dataset)).unwrap();
    for f in &set.frames {
        let img = f.image().unwrap().into_owned();
        let noisy = RasterImage::from_fn(32, 32, 4, |x, y, c| {
            if c < 3 && img.get(x, y, 3) == 0.0 {
                ((x * 7 + y * 3 + c) % 11) as f64 / 10.0
            } else {
                img.get(x, y, c)
            }
        })
        .unwrap();
        assert_ne!(noisy, img);
        raster::write_png(&noisy, &f.source_path.with_extension("noisy.png")).unwrap();
    }
    let mut manifest = seqsr_core::dataset::PoseManifest::read(&root.join(&dataset)).unwrap();
    for f in &mut manifest.frames {
        f.file_path = format!("{}.noisy.png", f.file_path);
    }
    manifest.write(&root.join("scene/noisy.json")).unwrap();
    let report = p.eval(Some(Path::new("scene/noisy.json")), Some(&dataset)).unwrap();
    assert_eq!(report.mean_psnr, f64::INFINITY);
}

#[test]
fn full_run_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let p = ring_pipeline(dir.path(), 12, 48, 4);
    let summary = p.run().unwrap();
    assert_eq!(summary.degraded, 12);
    assert_eq!((summary.aggregate.width, summary.aggregate.height), (48, 48));
    let l = p.layout();
    for path in [
        l.lr_manifest(),
        l.degrade_sidecar(),
        l.plan(),
        l.upsample_manifest(),
        l.report(),
        l.hr_manifest(),
        l.provenance(),
        l.metrics_json(),
        l.metrics_csv(),
    ] {
        assert!(path.is_file(), "{}", path.display());
    }
    assert!(summary.eval.mean_psnr > 10.0);
    assert!(summary.eval.frames.iter().all(|f| f.total_loss.is_some()));
}
