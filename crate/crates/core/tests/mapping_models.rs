use footpedal_core::eval::{classify_sample, evaluate_trials, trial_accuracy};
use footpedal_core::mapping::{
    calibrate_global_ica, calibrate_knn, calibrate_local_ica, calibrate_statics, estimate_deadbands, map,
    CalibrationOptions, CalibrationSet, Deadbands, ModelKind,
};
use footpedal_core::synth::{generate_trial, NoiseSpec};
use footpedal_core::{Channel, DirectionLabel, Plant};

fn calibration(plant: &Plant, noise: &NoiseSpec, seed: u64) -> CalibrationSet {
    let trials = DirectionLabel::SINGLE
        .iter()
        .map(|&d| generate_trial(plant, 1, d, 0, noise, 2.0, seed + d as u64).unwrap())
        .collect();
    CalibrationSet::new(trials).unwrap()
}

fn argmax(v: [f64; 4]) -> usize {
    (0..4).max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs())).unwrap()
}

#[test]
fn noiseless_statics_deadbands_are_zero() {
    let plant = Plant::default();
    let calib = calibration(&plant, &NoiseSpec::zero(), 1);
    let m = calibrate_statics(&calib, &plant, &CalibrationOptions::default()).unwrap();
    assert_eq!(m.deadbands, Deadbands::default());
}

#[test]
fn pitch_channel_deadband_tracks_sensor_noise() {
    // Fz is the difference of two cells, so its noise is σ·√2; the max of
    // ~900 off-axis samples sits near 3.2 standard deviations.
    let plant = Plant::default();
    let sigma = 0.05;
    let noise = NoiseSpec { sigma, ..NoiseSpec::zero() };
    let calib = calibration(&plant, &noise, 11);
    let m = calibrate_statics(&calib, &plant, &CalibrationOptions::default()).unwrap();
    let ratio = m.deadbands.fz / (sigma * 2f64.sqrt());
    assert!((2.0..=6.0).contains(&ratio), "ε_z/σ = {ratio}");
}

#[test]
fn deadbands_grow_with_safety_factor() {
    let plant = Plant::default();
    let noise = NoiseSpec { sigma: 0.05, ..NoiseSpec::zero() };
    let calib = calibration(&plant, &noise, 2);
    let m = calibrate_statics(&calib, &plant, &CalibrationOptions::default()).unwrap();
    let mut prev = [0.0; 4];
    for f in [0.5, 1.0, 1.5, 3.0] {
        let e = estimate_deadbands(&calib, &m, f).unwrap().to_array();
        for c in 0..4 {
            assert!(e[c] > prev[c]);
        }
        prev = e;
    }
}

#[test]
fn forward_frame_is_fy_dominant_under_all_command_models() {
    let plant = Plant::default();
    let calib = calibration(&plant, &NoiseSpec::zero(), 3);
    let opts = CalibrationOptions::default();
    let fwd = &calib.trials().iter().find(|t| t.direction == DirectionLabel::F).unwrap().frames[75];
    for m in [
        calibrate_statics(&calib, &plant, &opts).unwrap(),
        calibrate_global_ica(&calib, &plant, &opts).unwrap(),
        calibrate_local_ica(&calib, &plant, &opts).unwrap(),
    ] {
        let c = map(fwd, &m).unwrap();
        assert_eq!(argmax(c.to_array()), Channel::Fy.index(), "{}", m.kind.name());
        assert!(c.fy > 0.0);
        assert_eq!(classify_sample(&c, &m.deadbands), DirectionLabel::F, "{}", m.kind.name());
    }
}

#[test]
fn models_agree_on_dominant_channel_for_single_axis_frames() {
    let plant = Plant::default();
    let calib = calibration(&plant, &NoiseSpec::zero(), 4);
    let opts = CalibrationOptions::default();
    let models = [
        calibrate_statics(&calib, &plant, &opts).unwrap(),
        calibrate_global_ica(&calib, &plant, &opts).unwrap(),
        calibrate_local_ica(&calib, &plant, &opts).unwrap(),
    ];
    for t in calib.trials() {
        let want = t.direction.channel().unwrap().index();
        for f in &t.frames {
            let labels: Vec<_> = models.iter().map(|m| classify_sample(&map(f, m).unwrap(), &m.deadbands)).collect();
            if labels.iter().all(|l| *l == DirectionLabel::Neutral) {
                continue;
            }
            for m in &models {
                let c = map(f, m).unwrap();
                if classify_sample(&c, &m.deadbands) != DirectionLabel::Neutral {
                    assert_eq!(argmax(c.to_array()), want, "{} on {}", m.kind.name(), t.direction);
                }
            }
        }
    }
}

#[test]
fn ica_calibration_is_deterministic() {
    let plant = Plant::default();
    let calib = calibration(&plant, &NoiseSpec { sigma: 0.05, ..NoiseSpec::zero() }, 5);
    let opts = CalibrationOptions::default();
    assert_eq!(
        calibrate_global_ica(&calib, &plant, &opts).unwrap(),
        calibrate_global_ica(&calib, &plant, &opts).unwrap()
    );
    assert_eq!(
        calibrate_local_ica(&calib, &plant, &opts).unwrap(),
        calibrate_local_ica(&calib, &plant, &opts).unwrap()
    );
}

#[test]
fn assignments_are_bijections_with_unit_signs() {
    let plant = Plant::default();
    let calib = calibration(&plant, &NoiseSpec { sigma: 0.05, ..NoiseSpec::zero() }, 6);
    let opts = CalibrationOptions::default();
    let g = calibrate_global_ica(&calib, &plant, &opts).unwrap();
    let ModelKind::GlobalIca { block } = &g.kind else { panic!() };
    let mut ch = block.channels.clone();
    ch.sort();
    assert_eq!(ch, Channel::ALL.to_vec());
    assert!(block.signs.iter().all(|s| s.abs() == 1.0));
    let l = calibrate_local_ica(&calib, &plant, &opts).unwrap();
    let ModelKind::LocalIca { blocks } = &l.kind else { panic!() };
    let mut a = blocks[0].channels.clone();
    a.sort();
    assert_eq!(a, vec![Channel::Fx, Channel::M]);
    let mut b = blocks[1].channels.clone();
    b.sort();
    assert_eq!(b, vec![Channel::Fy, Channel::Fz]);
}

#[test]
fn noiseless_trials_score_full_marks() {
    let plant = Plant::default();
    let calib = calibration(&plant, &NoiseSpec::zero(), 7);
    let opts = CalibrationOptions::default();
    let m = calibrate_global_ica(&calib, &plant, &opts).unwrap();
    for t in calib.trials() {
        assert_eq!(trial_accuracy(t, &m, &m.deadbands).unwrap().accuracy(), Some(100.0));
    }
}

#[test]
fn knn_scores_its_own_training_trials() {
    let plant = Plant::default();
    let trials: Vec<_> = DirectionLabel::TARGETS
        .iter()
        .map(|&d| generate_trial(&plant, 1, d, 0, &NoiseSpec::zero(), 2.0, 1).unwrap())
        .collect();
    let m = calibrate_knn(&trials, &plant, &CalibrationOptions::default()).unwrap();
    let r = evaluate_trials(&trials, &m, &m.deadbands).unwrap();
    for s in &r.directions {
        assert_eq!(s.mean, Some(100.0), "{}", s.direction);
    }
}
