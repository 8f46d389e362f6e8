use std::collections::BTreeMap;

use proptest::prelude::*;

use footpedal_core::codec::{decode_stream, encode_frame, encode_stream, RawFrame};
use footpedal_core::eval::{classify_sample, AccuracyReport, Counts};
use footpedal_core::mapping::{knn_fit, knn_predict_features, Deadbands, FeatureMode};
use footpedal_core::mechanics::{
    elastic_energy, forward_pose_closed_form, guide_lengths, reconstruct_statics, StaticsOptions,
};
use footpedal_core::synth::{generate_trial, inverse_sense, in_hold, NoiseSpec};
use footpedal_core::workspace::is_reachable;
use footpedal_core::{Command64, DirectionLabel, Plant, Pose64};

fn plant() -> Plant {
    Plant::default()
}

fn wrench_at(p: &Plant, pose: &Pose64) -> Command64 {
    let frame = inverse_sense(pose, &p.geom, &p.springs).unwrap();
    reconstruct_statics(&frame, &p.geom, &p.springs, &StaticsOptions::default(), None).unwrap().wrench
}

/// Unit-box pose scaled by the motion limits.
fn pose_in_box(p: &Plant, u: [f64; 4]) -> Pose64 {
    let l = p.geom.limits;
    Pose64::new(u[0] * l.x_max, u[1] * l.y_max, u[2] * l.yaw_max, u[3] * l.pitch_max)
}

fn label() -> impl Strategy<Value = DirectionLabel> {
    prop::sample::select(DirectionLabel::TARGETS.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn closed_form_round_trip(u in prop::array::uniform4(-1.0f64..1.0)) {
        let p = plant();
        let pose = pose_in_box(&p, u);
        prop_assume!(is_reachable(&pose, &p.geom, &p.springs));
        let back = forward_pose_closed_form(&guide_lengths(&pose, &p.geom).unwrap(), &p.geom).unwrap();
        prop_assert!((back.x - pose.x).abs() < 1e-9);
        prop_assert!((back.y - pose.y).abs() < 1e-9);
        prop_assert!((back.yaw - pose.yaw).abs() < 1e-9);
    }

    #[test]
    fn lateral_mirror_flips_fx_and_m(u in prop::array::uniform4(-1.0f64..1.0)) {
        let p = plant();
        let pose = pose_in_box(&p, u);
        prop_assume!(is_reachable(&pose, &p.geom, &p.springs));
        let mirrored = Pose64::new(-pose.x, pose.y, -pose.yaw, pose.pitch);
        let (a, b) = (wrench_at(&p, &pose), wrench_at(&p, &mirrored));
        prop_assert!((a.fx + b.fx).abs() < 1e-9);
        prop_assert!((a.fy - b.fy).abs() < 1e-9);
        prop_assert!((a.fz - b.fz).abs() < 1e-12);
        prop_assert!((a.m + b.m).abs() < 1e-9);
    }

    #[test]
    fn energy_nondecreasing_along_rays(dir in prop::array::uniform4(-1.0f64..1.0)) {
        let p = plant();
        let mut prev = 0.0;
        for k in 1..=60 {
            let t = k as f64 / 60.0;
            let pose = pose_in_box(&p, dir.map(|d| d * t));
            if !is_reachable(&pose, &p.geom, &p.springs) {
                break;
            }
            let e = elastic_energy(&pose, &p.geom, &p.springs).unwrap()
                - elastic_energy(&Pose64::home(), &p.geom, &p.springs).unwrap();
            prop_assert!(e >= prev - 1e-12, "t = {t}: {e} < {prev}");
            prev = e;
        }
    }

    #[test]
    fn planar_force_grows_along_translation_rays(angle in 0.0f64..std::f64::consts::TAU) {
        let p = plant();
        let mut prev = 0.0;
        for k in 1..=60 {
            let t = k as f64 / 60.0;
            let pose = pose_in_box(&p, [t * angle.cos(), t * angle.sin(), 0.0, 0.0]);
            if !is_reachable(&pose, &p.geom, &p.springs) {
                break;
            }
            let w = wrench_at(&p, &pose);
            let mag = w.fx.hypot(w.fy);
            prop_assert!(mag >= prev - 1e-12);
            prev = mag;
        }
    }

    #[test]
    fn classification_is_scale_consistent(
        v in prop::array::uniform4(-10.0f64..10.0),
        eps in prop::array::uniform4(0.0f64..3.0),
        s in 1e-3f64..1e3,
    ) {
        let b = Deadbands::new(eps);
        let a = classify_sample(&Command64::from_array(v), &b);
        let c = classify_sample(&Command64::from_array(v.map(|x| x * s)), &b.scaled(s));
        prop_assert_eq!(a, c);
    }

    #[test]
    fn knn_k1_invariant_to_uniform_scaling(
        pts in prop::collection::vec((prop::array::uniform3(-5.0f64..5.0), label()), 1..30),
        q in prop::array::uniform3(-5.0f64..5.0),
        s in 1e-2f64..1e2,
    ) {
        let (f, l): (Vec<Vec<f64>>, Vec<DirectionLabel>) = pts.iter().map(|(p, l)| (p.to_vec(), *l)).unzip();
        let scaled: Vec<Vec<f64>> = f.iter().map(|p| p.iter().map(|x| x * s).collect()).collect();
        let a = knn_fit(f, l.clone(), 1, FeatureMode::Raw).unwrap();
        let b = knn_fit(scaled, l, 1, FeatureMode::Raw).unwrap();
        let qs: Vec<f64> = q.iter().map(|x| x * s).collect();
        prop_assert_eq!(knn_predict_features(&a, &q).unwrap(), knn_predict_features(&b, &qs).unwrap());
    }

    #[test]
    fn pooled_accuracy_is_count_weighted(counts in prop::collection::vec((0u64..50, 1u64..50), 1..6)) {
        let trials: Vec<Counts> = counts.iter().map(|&(c, extra)| Counts { correct: c, total: c + extra }).collect();
        let pooled = trials.iter().fold(Counts::default(), |a, b| a + *b);
        let mut cells = BTreeMap::new();
        cells.insert((DirectionLabel::L, 1), pooled);
        let r = AccuracyReport::from_cells("m", cells);
        // Σ acc_i·t_i / Σ t_i, compared as exact rationals.
        let num: u64 = trials.iter().map(|c| c.correct).sum();
        let den: u64 = trials.iter().map(|c| c.total).sum();
        let weighted: f64 = trials.iter().map(|c| c.accuracy().unwrap() * c.total as f64).sum::<f64>() / den as f64;
        prop_assert_eq!((pooled.correct, pooled.total), (num, den));
        prop_assert!((r.grand_mean.unwrap() - weighted).abs() < 1e-9);
        prop_assert_eq!(r.grand_mean.unwrap(), 100.0 * num as f64 / den as f64);
    }

    #[test]
    fn grand_mean_ignores_insertion_order(
        entries in prop::collection::vec((label(), 1u32..6, 0u64..20, 1u64..20), 1..40),
        seed in any::<u64>(),
    ) {
        let build = |order: &[usize]| {
            let mut cells: BTreeMap<(DirectionLabel, u32), Counts> = BTreeMap::new();
            for &i in order {
                let (d, s, c, extra) = entries[i];
                let e = cells.entry((d, s)).or_default();
                *e += Counts { correct: c, total: c + extra };
            }
            AccuracyReport::from_cells("m", cells)
        };
        let fwd: Vec<usize> = (0..entries.len()).collect();
        let mut shuffled = fwd.clone();
        let mut x = seed | 1;
        for i in (1..shuffled.len()).rev() {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            shuffled.swap(i, (x % (i as u64 + 1)) as usize);
        }
        prop_assert_eq!(build(&fwd).grand_mean, build(&shuffled).grand_mean);
    }

    #[test]
    fn frame_codec_round_trip(seq in any::<u8>(), counts in prop::array::uniform8(any::<u16>())) {
        let f = RawFrame { sequence: seq, counts };
        let (out, d) = decode_stream(&encode_frame(&f));
        prop_assert_eq!(out, vec![f]);
        prop_assert_eq!(d.checksum_failures, 0);
    }

    #[test]
    fn decoder_accepts_only_checksummed_frames(bytes in prop::collection::vec(any::<u8>(), 0..600)) {
        let (out, _) = decode_stream(&bytes);
        for f in out {
            let b = encode_frame(&f);
            prop_assert_eq!(b[19], b[..19].iter().fold(0, |a, x| a ^ x));
        }
    }

    #[test]
    fn stream_prefix_garbage_is_skipped(junk in prop::collection::vec(0u8..0xAA, 0..40), n in 1usize..20) {
        let frames: Vec<RawFrame> = (0..n).map(|k| RawFrame { sequence: k as u8, counts: [k as u16 * 3; 8] }).collect();
        let mut bytes = junk.clone();
        bytes.extend(encode_stream(&frames));
        let (out, d) = decode_stream(&bytes);
        prop_assert_eq!(out, frames);
        prop_assert_eq!(d.skipped_bytes, junk.len() as u64);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn generated_forces_nonnegative_and_saturate_only_in_hold(
        d in label(),
        seed in any::<u64>(),
        sigma in 0.0f64..0.3,
    ) {
        let p = plant();
        let noise = NoiseSpec { sigma, ..NoiseSpec::zero() };
        let t = generate_trial(&p, 1, d, 0, &noise, 2.0, seed).unwrap();
        for f in &t.frames {
            prop_assert!(f.forces.iter().all(|&v| v >= 0.0));
        }
        let clean = generate_trial(&p, 1, d, 0, &NoiseSpec::zero(), 0.0, seed).unwrap();
        for (k, f) in clean.frames.iter().enumerate() {
            let saturated = (0..6).any(|i| f.forces[i] >= p.springs.saturation_force(i) * (1.0 - 1e-9));
            prop_assert!(!saturated || in_hold(k), "sample {k} saturated outside the hold");
        }
    }
}
