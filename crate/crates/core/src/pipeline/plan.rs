use std::fs;

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::dataset::{load_pose_manifest, FrameId, MultiViewSet};
use crate::error::{Error, Result};
use crate::fsutil;
use crate::orb::{cache, extract_orb, DescriptorSet};
use crate::ordering::{
    count_misalignments, greedy_order, multi_threshold_plan, Plan, PlanReport, MISALIGNMENT_THRESHOLD,
};
use crate::raster;
use crate::similarity::{FrameFeatures, ScoreMatrix};

use super::{require, Pipeline, UpsampleManifest};

#[derive(Clone, Debug)]
pub struct PlanOutcome {
    pub plan: Plan,
    pub manifest: UpsampleManifest,
    pub report: PlanReport,
}

impl Pipeline {
    pub(super) fn load_lr(&self) -> Result<MultiViewSet> {
        let path = self.layout.lr_manifest();
        require(&path, "degrade")?;
        load_pose_manifest(&path)
    }

    fn origin(&self) -> Vector3<f64> {
        Vector3::from(self.config.ordering.scene_origin)
    }

    /// Descriptors for every LR frame, read from the cache when still valid.
    fn descriptors(&self, set: &MultiViewSet) -> Result<Vec<DescriptorSet>> {
        set.frames
            .par_iter()
            .map(|f| {
                let bytes = fs::read(&f.source_path).map_err(|e| Error::io(&f.source_path, e))?;
                let key = cache::cache_key(&self.config.orb, &bytes);
                let path = self.layout.orb_cache(f.frame_id);
                if let Some(set) = cache::load(&path, &key)? {
                    if set.frame_id == f.frame_id {
                        return Ok(set);
                    }
                }
                let img = raster::read_png(&f.source_path)?;
                let set = extract_orb(f.frame_id, &img, &self.config.orb);
                cache::store(&path, &set, &key)?;
                Ok(set)
            })
            .collect()
    }

    fn features(&self, set: &MultiViewSet) -> Result<FrameFeatures> {
        let ordering = &self.config.ordering;
        let descriptors = if ordering.needs_descriptors() {
            Some(self.descriptors(set)?)
        } else {
            None
        };
        Ok(FrameFeatures {
            poses: set.poses(),
            descriptors,
            origin: self.origin(),
            min_matches: ordering.min_matches,
        })
    }

    /// Select and threshold score tables for the configured measures.
    fn score_matrices(&self, features: &FrameFeatures) -> Result<(ScoreMatrix, ScoreMatrix)> {
        let ordering = &self.config.ordering;
        let select = ScoreMatrix::compute(features, ordering.select_measure)?;
        let threshold = if ordering.threshold_by_center_rank {
            ScoreMatrix::center_rank(&features.poses)
        } else if ordering.threshold_measure == ordering.select_measure {
            select.clone()
        } else {
            ScoreMatrix::compute(features, ordering.threshold_measure)?
        };
        Ok((select, threshold))
    }

    fn build_report(&self, plan: &Plan, features: &FrameFeatures, select: &ScoreMatrix) -> PlanReport {
        let mut report = PlanReport::build(plan, &features.poses, &features.origin);
        let full = greedy_order(select, None, FrameId(0));
        report.full_greedy_misalignments = Some(
            count_misalignments(&full.frames, &features.poses, &features.origin, MISALIGNMENT_THRESHOLD).count,
        );
        report
    }

    /// Orders the LR frames into clips and writes the plan, the upsample
    /// manifest and the plan report.
    pub fn plan(&self) -> Result<PlanOutcome> {
        let set = self.load_lr()?;
        let features = self.features(&set)?;
        let (select, threshold) = self.score_matrices(&features)?;
        let plan = multi_threshold_plan(&select, &threshold, &self.config.ordering)?;
        fsutil::write_json(&self.layout.plan(), &plan)?;

        let manifest = UpsampleManifest::build(&plan, &self.layout, self.config.scale_factor)?;
        manifest.write(&self.layout.upsample_manifest())?;

        let report = self.build_report(&plan, &features, &select);
        fsutil::write_json(&self.layout.report(), &report)?;
        log::info!(
            "planned {} clips over {} frames, {} misalignments",
            plan.subsequences.len(),
            plan.frame_count,
            report.total_misalignments
        );
        Ok(PlanOutcome {
            plan,
            manifest,
            report,
        })
    }

    pub fn load_plan(&self) -> Result<Plan> {
        let path = self.layout.plan();
        require(&path, "plan")?;
        let plan: Plan = fsutil::read_json(&path)?;
        plan.validate()?;
        Ok(plan)
    }

    /// Rebuilds `report.json` from the stored plan.
    pub fn report(&self) -> Result<PlanReport> {
        let plan = self.load_plan()?;
        let set = self.load_lr()?;
        if set.len() != plan.frame_count {
            return Err(Error::Config(format!(
                "plan has {} frames, LR dataset {}",
                plan.frame_count,
                set.len()
            )));
        }
        let features = self.features(&set)?;
        let select = ScoreMatrix::compute(&features, self.config.ordering.select_measure)?;
        let report = self.build_report(&plan, &features, &select);
        fsutil::write_json(&self.layout.report(), &report)?;
        Ok(report)
    }
}
