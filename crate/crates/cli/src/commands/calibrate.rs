use std::collections::BTreeSet;

use fairdecide::protocol::{
    accuracy_at_half, roc_auc, BundleParts, ModelDescriptor, Performance, Provenance, SensitiveAttribute,
};
use fairdecide::{
    assemble_bundle, build_task_spec, calibration_error, estimate_baseline, fit_calibration, BundleMode,
    CalibrationFunction, CalibrationReport, CellKey, DeliverableBundle, GroupId, GroupScope, LabeledInstance,
};

use super::{file_stem, write_json};
use crate::config::RunConfig;
use crate::error::CliError;
use crate::table::{read_table, write_table};

pub struct Calibrated {
    pub functions: Vec<CalibrationFunction>,
    pub reports: Vec<CalibrationReport>,
    pub bundle: DeliverableBundle,
}

/// Fits calibration on the scored table, writes the calibrated table, the
/// function files, their reports and the deliverable bundle for the mode.
pub fn calibrate(cfg: &RunConfig) -> Result<Calibrated, CliError> {
    let fairness = cfg.mode == BundleMode::Fairness;
    let required: &[&str] = if fairness { &["y", "group"] } else { &["y"] };
    let scored = cfg.path(&cfg.paths.scored);
    let table = read_table(&scored, required)?;
    let instances = table.instances;
    let groups: BTreeSet<GroupId> = instances.iter().map(|i| i.group.clone()).collect();

    let scopes: Vec<GroupScope> = if fairness {
        groups.iter().cloned().map(GroupScope::Group).collect()
    } else {
        vec![GroupScope::Global]
    };
    let functions = scopes
        .into_iter()
        .map(|s| fit_calibration(&instances, s, cfg.calibration_bins))
        .collect::<Result<Vec<_>, _>>()?;
    let calibrated: Vec<LabeledInstance> = instances
        .iter()
        .map(|i| {
            let f = functions.iter().find(|f| f.group_scope.admits(i)).expect("a function per group");
            i.clone().with_calibrated(f.apply(i.raw_score))
        })
        .collect();
    write_table(&cfg.path(&cfg.paths.calibrated), &calibrated)?;

    let dir = cfg.path(&cfg.paths.calibration_dir);
    let mut reports = Vec::new();
    for f in &functions {
        let name = match &f.group_scope {
            GroupScope::Global => "global".to_string(),
            GroupScope::Group(g) => format!("group-{}", file_stem(g.as_str())),
        };
        write_json(&dir.join(format!("{name}.json")), f)?;
        reports.push(calibration_error(f, &instances)?);
    }
    write_json(&cfg.path(&cfg.paths.calibration_report), &reports)?;

    let mut baselines = Vec::new();
    if fairness {
        for g in &groups {
            baselines.push(estimate_baseline(&calibrated, &CellKey::group(g.clone()), cfg.baseline_bins)?);
        }
        let cells: BTreeSet<CellKey> = calibrated.iter().filter(|i| i.stratum.is_some()).map(|i| i.cell()).collect();
        for c in &cells {
            baselines.push(estimate_baseline(&calibrated, c, cfg.baseline_bins)?);
        }
    }
    let attribute = fairness.then(|| SensitiveAttribute { name: cfg.task.sensitive_attribute.clone(), groups });
    let task = build_task_spec(
        cfg.mode,
        cfg.task.target_definition(),
        attribute,
        cfg.strata.clone(),
        cfg.task.population_note.clone(),
    )?;
    let parts = BundleParts {
        scored_data_ref: cfg.paths.calibrated.to_string_lossy().into_owned(),
        model: ModelDescriptor { name: cfg.task.model_name.clone(), score_column: "score".into() },
        performance: Performance {
            accuracy_at_half: accuracy_at_half(&calibrated),
            roc_auc: roc_auc(&instances),
            calibration: reports.clone(),
        },
        calibration: functions.clone(),
        baselines,
        provenance: Provenance {
            estimation_set: cfg.paths.scored.to_string_lossy().into_owned(),
            instance_count: instances.len(),
            created_at: None,
        },
    };
    let bundle = assemble_bundle(&task, parts)?;
    write_json(&cfg.path(&cfg.paths.bundle), &bundle)?;
    Ok(Calibrated { functions, reports, bundle })
}
