//! Head-normalized keypoint accuracy and the evaluation protocols.
//!
//! PCKh@α counts a (frame, joint) pair as correct when its error is at most
//! `α · h`, where `h` is the ground-truth head segment length in that frame
//! times a configurable factor. The comparison is inclusive and is done
//! without dividing, so boundary cases are exact.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::infer::{upsample, InferConfig, Model};
use crate::io::write_atomic;
use crate::rng::{derive_seed, with_workers};
use crate::sequence::{downsample, embed, restrict, PoseSequence};
use crate::topology::SkeletonTopology;

/// Thresholds of the AUC: `0.00, 0.01, …, 1.00`.
pub const AUC_STEPS: usize = 101;

pub fn auc_thresholds() -> Vec<f64> {
    (0..AUC_STEPS).map(|i| i as f64 / (AUC_STEPS - 1) as f64).collect()
}

/// Error and head size of every scored (frame, joint) pair.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct JointErrors {
    pub errors: Vec<f64>,
    pub heads: Vec<f64>,
    /// Frames dropped because their head size was zero or unavailable.
    pub excluded_frames: usize,
}

impl JointErrors {
    /// Scores `pred` against `gt` on pairs where `gt` is available and
    /// `select` (if given) is true.
    pub fn compute(
        pred: &PoseSequence,
        gt: &PoseSequence,
        topo: &SkeletonTopology,
        select: Option<&[bool]>,
        head_factor: f64,
    ) -> Result<Self> {
        let mut out = Self::default();
        out.extend(pred, gt, topo, select, head_factor, |_, _, _, _| {})?;
        Ok(out)
    }

    /// Appends the pairs of one sequence, reporting each to `visit` as
    /// `(frame, joint, error, head)`.
    fn extend(
        &mut self,
        pred: &PoseSequence,
        gt: &PoseSequence,
        topo: &SkeletonTopology,
        select: Option<&[bool]>,
        head_factor: f64,
        mut visit: impl FnMut(usize, usize, f64, f64),
    ) -> Result<()> {
        if pred.frames() != gt.frames() || pred.joints() != gt.joints() || gt.joints() != topo.joint_count() {
            return Err(Error::Shape("prediction, ground truth and topology disagree".into()));
        }
        if select.is_some_and(|s| s.len() != gt.mask().len()) {
            return Err(Error::Shape("selection mask length mismatch".into()));
        }
        let (a, b) = topo
            .head_pair()
            .ok_or_else(|| Error::Topology(format!("topology {:?} has no head pair", topo.name())))?;
        let j = gt.joints();
        for f in 0..gt.frames() {
            if !(gt.is_available(f, a) && gt.is_available(f, b)) {
                self.excluded_frames += 1;
                continue;
            }
            let (pa, pb) = (gt.position(f, a), gt.position(f, b));
            let head = head_factor * (pa[0] - pb[0]).hypot(pa[1] - pb[1]);
            if !(head > 0.0) {
                self.excluded_frames += 1;
                continue;
            }
            for k in 0..j {
                if !gt.is_available(f, k) || select.is_some_and(|s| !s[f * j + k]) {
                    continue;
                }
                let (p, q) = (pred.position(f, k), gt.position(f, k));
                let e = (p[0] - q[0]).hypot(p[1] - q[1]);
                self.errors.push(e);
                self.heads.push(head);
                visit(f, k, e, head);
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.errors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn pckh(&self, alpha: f64) -> Result<f64> {
        if self.is_empty() {
            return Err(Error::EmptyMask("no scored joints"));
        }
        let hits = self.errors.iter().zip(&self.heads).filter(|(e, h)| **e <= alpha * **h).count();
        Ok(hits as f64 / self.len() as f64)
    }

    pub fn curve(&self) -> Result<Vec<f64>> {
        auc_thresholds().into_iter().map(|a| self.pckh(a)).collect()
    }

    pub fn auc(&self) -> Result<f64> {
        Ok(self.curve()?.iter().sum::<f64>() / AUC_STEPS as f64)
    }

    pub fn mpjpe(&self) -> Result<f64> {
        if self.is_empty() {
            return Err(Error::EmptyMask("no scored joints"));
        }
        Ok(self.errors.iter().sum::<f64>() / self.len() as f64)
    }
}

/// Fraction of pairs within `alpha` head sizes.
pub fn pckh(pred: &PoseSequence, gt: &PoseSequence, topo: &SkeletonTopology, alpha: f64) -> Result<f64> {
    JointErrors::compute(pred, gt, topo, None, 1.0)?.pckh(alpha)
}

/// Mean PCKh over the 101 thresholds in `[0, 1]`.
pub fn auc(pred: &PoseSequence, gt: &PoseSequence, topo: &SkeletonTopology) -> Result<f64> {
    JointErrors::compute(pred, gt, topo, None, 1.0)?.auc()
}

/// Which joints a row is scored on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointSet {
    /// Joints absent from the reduced input.
    Missing,
    /// Every joint of the full topology.
    All,
    /// Only the joints of the reduced input.
    Input,
}

impl JointSet {
    pub fn name(self) -> &'static str {
        match self {
            JointSet::Missing => "missing",
            JointSet::All => "all",
            JointSet::Input => "input",
        }
    }

    fn includes(self, is_input: bool) -> bool {
        match self {
            JointSet::Missing => !is_input,
            JointSet::All => true,
            JointSet::Input => is_input,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    pub joints: JointSet,
    #[serde(rename = "pckh@0.1")]
    pub pckh_01: f64,
    #[serde(rename = "pckh@0.5")]
    pub pckh_05: f64,
    #[serde(rename = "pckh@1.0")]
    pub pckh_10: f64,
    pub auc: f64,
    pub mpjpe: f64,
    pub scored: usize,
    pub excluded_frames: usize,
    /// PCKh at each AUC threshold.
    pub curve: Vec<f64>,
}

impl ReportRow {
    fn from_errors(method: &str, joints: JointSet, e: &JointErrors) -> Result<Self> {
        let curve = e.curve()?;
        Ok(Self {
            method: method.to_string(),
            joints,
            pckh_01: e.pckh(0.1)?,
            pckh_05: e.pckh(0.5)?,
            pckh_10: e.pckh(1.0)?,
            auc: curve.iter().sum::<f64>() / AUC_STEPS as f64,
            mpjpe: e.mpjpe()?,
            scored: e.len(),
            excluded_frames: e.excluded_frames,
            curve,
        })
    }
}

/// One scored pair in the audit dump.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRecord {
    pub method: String,
    pub sequence: usize,
    pub frame: usize,
    pub joint: usize,
    /// The joint was part of the reduced input.
    pub input: bool,
    pub error: f64,
    pub head: f64,
}

pub const ERRORS_HEADER: &str = "method,sequence,frame,joint,input,error,head_size";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub experiment: String,
    pub sequences: usize,
    pub head_factor: f64,
    pub rows: Vec<ReportRow>,
}

impl Report {
    pub fn row(&self, method: &str, joints: JointSet) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.method == method && r.joints == joints)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let r: Self = serde_json::from_str(&text).map_err(|e| Error::format(path, e))?;
        if r.rows.iter().any(|row| row.curve.len() != AUC_STEPS) {
            return Err(Error::format(path, format!("every curve needs {AUC_STEPS} points")));
        }
        Ok(r)
    }

    /// Writes `report.json` and `errors.csv` into `dir`.
    pub fn write(&self, dir: &Path, errors: &[ErrorRecord]) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_atomic(&dir.join("report.json"), self.to_json().as_bytes())?;
        write_atomic(&dir.join("errors.csv"), errors_csv(errors).as_bytes())
    }

    /// Rebuilds every row from a per-pair dump.
    pub fn recompute(experiment: &str, sequences: usize, head_factor: f64, errors: &[ErrorRecord], layout: &[(String, JointSet)]) -> Result<Self> {
        let rows = layout
            .iter()
            .map(|(method, joints)| {
                let mut e = JointErrors::default();
                for r in errors.iter().filter(|r| &r.method == method && joints.includes(r.input)) {
                    e.errors.push(r.error);
                    e.heads.push(r.head);
                }
                ReportRow::from_errors(method, *joints, &e)
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            experiment: experiment.into(),
            sequences,
            head_factor,
            rows,
        })
    }
}

pub fn errors_csv(errors: &[ErrorRecord]) -> String {
    let mut s = format!("{ERRORS_HEADER}\n");
    for r in errors {
        writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.method, r.sequence, r.frame, r.joint, r.input as u8, r.error, r.head
        )
        .expect("write to string");
    }
    s
}

pub fn parse_errors_csv(text: &str, origin: &Path) -> Result<Vec<ErrorRecord>> {
    let mut lines = text.lines();
    if lines.next() != Some(ERRORS_HEADER) {
        return Err(Error::format(origin, "unexpected error dump header"));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let bad = || Error::format(origin, format!("bad row {}", i + 2));
            let c: Vec<&str> = line.split(',').collect();
            if c.len() != 7 {
                return Err(bad());
            }
            Ok(ErrorRecord {
                method: c[0].to_string(),
                sequence: c[1].parse().map_err(|_| bad())?,
                frame: c[2].parse().map_err(|_| bad())?,
                joint: c[3].parse().map_err(|_| bad())?,
                input: c[4] == "1",
                error: c[5].parse().map_err(|_| bad())?,
                head: c[6].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub infer: InferConfig,
    pub head_factor: f64,
    pub workers: Option<usize>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            infer: InferConfig::default(),
            head_factor: 1.0,
            workers: None,
        }
    }
}

/// The method variants of the upsampling table, best first.
pub fn upsampling_variants(base: &InferConfig) -> Vec<(&'static str, InferConfig)> {
    vec![
        ("full", *base),
        ("w/o overlap", InferConfig { overlap: false, ..*base }),
        ("w/o encoder-init", InferConfig { encoder_init: false, ..*base }),
        ("w/o P.A.", InferConfig { procrustes: false, ..*base }),
    ]
}

fn input_joints(full: &SkeletonTopology, reduced: &SkeletonTopology) -> Result<Vec<bool>> {
    let mut keep = vec![false; full.joint_count()];
    for id in reduced.embedding_into(full)? {
        keep[id] = true;
    }
    Ok(keep)
}

/// Scores `pred` against `gt` over all joints, dumping every pair.
fn score(
    method: &str,
    seq: usize,
    pred: &PoseSequence,
    gt: &PoseSequence,
    topo: &SkeletonTopology,
    input: &[bool],
    select: Option<&[bool]>,
    head_factor: f64,
) -> Result<Vec<ErrorRecord>> {
    let mut records = Vec::new();
    JointErrors::default().extend(pred, gt, topo, select, head_factor, |frame, joint, error, head| {
        records.push(ErrorRecord {
            method: method.to_string(),
            sequence: seq,
            frame,
            joint,
            input: input[joint],
            error,
            head,
        })
    })?;
    Ok(records)
}

fn upsample_each(
    model: &Model,
    inputs: &[PoseSequence],
    reduced: &SkeletonTopology,
    cfg: &InferConfig,
    workers: Option<usize>,
) -> Result<Vec<PoseSequence>> {
    with_workers(workers, || {
        inputs
            .par_iter()
            .enumerate()
            .map(|(i, x)| {
                let cfg = InferConfig {
                    seed: derive_seed(cfg.seed, &[i as u64]),
                    ..*cfg
                };
                Ok(upsample(model, x, reduced, &cfg, None)?.output)
            })
            .collect()
    })
}

/// Downsamples full-topology ground truth to `reduced`, upsamples it back
/// with every method variant and scores the result. Rows are emitted for
/// the missing joints and for all joints.
pub fn eval_upsampling(
    gt: &[PoseSequence],
    model: &Model,
    reduced: &SkeletonTopology,
    opts: &EvalOptions,
) -> Result<(Report, Vec<ErrorRecord>)> {
    let full = &model.topology;
    let input = input_joints(full, reduced)?;
    let inputs = gt
        .iter()
        .map(|s| restrict(&downsample(s, full, reduced)?, full, reduced))
        .collect::<Result<Vec<_>>>()?;
    let truth: Vec<PoseSequence> = gt.iter().map(PoseSequence::denormalized).collect();
    let mut errors = Vec::new();
    let mut layout = Vec::new();
    for (name, cfg) in upsampling_variants(&opts.infer) {
        let outputs = upsample_each(model, &inputs, reduced, &cfg, opts.workers)?;
        for (i, (out, t)) in outputs.iter().zip(&truth).enumerate() {
            errors.extend(score(name, i, out, t, full, &input, None, opts.head_factor)?);
        }
        layout.push((name.to_string(), JointSet::Missing));
        layout.push((name.to_string(), JointSet::All));
    }
    let report = Report::recompute("upsampling", gt.len(), opts.head_factor, &errors, &layout)?;
    Ok((report, errors))
}

/// Upsamples externally estimated reduced-topology poses and scores them
/// against full-topology ground truth. The baseline row scores the raw
/// estimates on their own joints.
pub fn eval_hpe(
    pred: &[PoseSequence],
    gt: &[PoseSequence],
    model: &Model,
    reduced: &SkeletonTopology,
    opts: &EvalOptions,
) -> Result<(Report, Vec<ErrorRecord>)> {
    if pred.len() != gt.len() {
        return Err(Error::Shape(format!(
            "{} estimates paired with {} ground-truth sequences",
            pred.len(),
            gt.len()
        )));
    }
    let full = &model.topology;
    for (i, (p, g)) in pred.iter().zip(gt).enumerate() {
        if p.frames() != g.frames() {
            return Err(Error::Shape(format!(
                "pair {i}: estimate has {} frames, ground truth {}",
                p.frames(),
                g.frames()
            )));
        }
    }
    let input = input_joints(full, reduced)?;
    let truth: Vec<PoseSequence> = gt.iter().map(PoseSequence::denormalized).collect();
    let mut errors = Vec::new();
    for (i, (p, t)) in pred.iter().zip(&truth).enumerate() {
        let raw = embed(&p.denormalized(), reduced, full)?;
        errors.extend(score("baseline", i, &raw, t, full, &input, Some(raw.mask()), opts.head_factor)?);
    }
    let outputs = upsample_each(model, pred, reduced, &opts.infer, opts.workers)?;
    for (i, (out, t)) in outputs.iter().zip(&truth).enumerate() {
        errors.extend(score("jumps", i, out, t, full, &input, None, opts.head_factor)?);
    }
    let layout = [
        ("baseline".to_string(), JointSet::Input),
        ("jumps".to_string(), JointSet::Input),
        ("jumps".to_string(), JointSet::Missing),
        ("jumps".to_string(), JointSet::All),
    ];
    let report = Report::recompute("hpe", gt.len(), opts.head_factor, &errors, &layout)?;
    Ok((report, errors))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transform::AffineTransform2D;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn topo() -> SkeletonTopology {
        SkeletonTopology::mpi_inf_3dhp_28()
    }

    fn random_pose(rng: &mut impl Rng, f: usize) -> PoseSequence {
        PoseSequence::from_fn(f, 28, |_, _| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).unwrap()
    }

    #[test]
    fn perfect_prediction_scores_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let gt = random_pose(&mut rng, 5);
        for a in [0.0, 0.3, 1.0] {
            assert_eq!(pckh(&gt, &gt, &topo(), a).unwrap(), 1.0);
        }
        assert_eq!(auc(&gt, &gt, &topo()).unwrap(), 1.0);
    }

    #[test]
    fn threshold_is_inclusive() {
        let t = topo();
        let (a, b) = t.head_pair().unwrap();
        // Head of length 1 along x; every prediction 2 units off along y.
        let gt = PoseSequence::from_fn(3, 28, |_, j| {
            if j == a {
                [0.0, 0.0]
            } else if j == b {
                [1.0, 0.0]
            } else {
                [j as f64, 0.5]
            }
        })
        .unwrap();
        let pred = gt.transformed(&AffineTransform2D::scale_translate(1.0, [0.0, 2.0]).unwrap());
        assert_eq!(pckh(&pred, &gt, &t, 1.0).unwrap(), 0.0);
        assert_eq!(pckh(&pred, &gt, &t, 2.0).unwrap(), 1.0);
        assert!(auc(&pred, &gt, &t).unwrap() <= 1.0 / 101.0);
    }

    #[test]
    fn zero_head_frames_are_excluded() {
        let t = topo();
        let (a, b) = t.head_pair().unwrap();
        let gt = PoseSequence::from_fn(2, 28, |f, j| if f == 0 && (j == a || j == b) { [0.0, 0.0] } else { [j as f64, f as f64] }).unwrap();
        let e = JointErrors::compute(&gt, &gt, &t, None, 1.0).unwrap();
        assert_eq!(e.excluded_frames, 1);
        assert_eq!(e.len(), 28);
    }

    #[test]
    fn curve_is_monotone_and_bounds_auc() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let gt = random_pose(&mut rng, 4);
        let pred = random_pose(&mut rng, 4);
        let e = JointErrors::compute(&pred, &gt, &topo(), None, 1.0).unwrap();
        let c = e.curve().unwrap();
        assert!(c.windows(2).all(|w| w[0] <= w[1]));
        let a = e.auc().unwrap();
        assert!(c[0] <= a && a <= c[100]);
    }

    #[test]
    fn csv_round_trip_recomputes_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let gt = random_pose(&mut rng, 3);
        let pred = random_pose(&mut rng, 3);
        let input: Vec<bool> = (0..28).map(|j| j % 3 == 0).collect();
        let records = score("m", 0, &pred, &gt, &topo(), &input, None, 1.0).unwrap();
        let layout = [("m".to_string(), JointSet::All), ("m".to_string(), JointSet::Missing)];
        let a = Report::recompute("x", 1, 1.0, &records, &layout).unwrap();
        let parsed = parse_errors_csv(&errors_csv(&records), Path::new("e.csv")).unwrap();
        let b = Report::recompute("x", 1, 1.0, &parsed, &layout).unwrap();
        assert_eq!(a, b);
        let direct = JointErrors::compute(&pred, &gt, &topo(), None, 1.0).unwrap();
        assert_eq!(a.rows[0].auc, direct.auc().unwrap());
    }
}
