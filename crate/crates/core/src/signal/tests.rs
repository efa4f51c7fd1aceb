use super::*;
use approx::assert_abs_diff_eq;
use proptest::prelude::*;

fn silent(hr: f64) -> SynthParams {
    SynthParams::with_heart_rate(hr)
}

#[test]
fn zero_morphology_is_zero() {
    let mut p = SynthParams::default();
    for w in &mut p.waves {
        w.amplitude_mv = 0.0;
    }
    for phase in [-PI, -1.0, 0.0, 2.5] {
        assert_eq!(beat_value(&p, phase), 0.0);
    }
}

#[test]
fn r_peak_value_matches_hand_sum() {
    // five Gaussian terms summed at theta = 0 with the default morphology
    let p = SynthParams::default();
    assert_abs_diff_eq!(beat_value(&p, 0.0), 0.9838101485420561, epsilon = 1e-12);
    let mut shifted = p.clone();
    shifted.baseline_mv = 0.2;
    assert_abs_diff_eq!(
        beat_value(&shifted, 0.0),
        1.183_810_148_542_056,
        epsilon = 1e-12
    );
}

#[test]
fn beat_value_is_pure() {
    let p = SynthParams::default();
    let q = p.clone();
    assert_eq!(
        beat_value(&p, 0.731).to_bits(),
        beat_value(&q, 0.731).to_bits()
    );
}

#[test]
fn wrap_phase_range() {
    assert_eq!(wrap_phase(PI), -PI);
    assert_eq!(wrap_phase(-PI), -PI);
    assert_abs_diff_eq!(wrap_phase(3.0 * PI + 0.5), -PI + 0.5, epsilon = 1e-12);
    assert_abs_diff_eq!(wrap_phase(-0.25), -0.25);
}

#[test]
fn sample_count_exact() {
    let s = generate_analog(&silent(60.0), 250.0, 60.0).unwrap();
    assert_eq!(s.len(), 15000);
    assert_eq!(sample_count(100.0, 0.29), 29);
    assert_eq!(sample_count(250.0, 0.1), 25);
}

#[test]
fn invalid_timing_rejected() {
    let p = silent(60.0);
    assert!(generate_analog(&p, 0.0, 1.0).is_err());
    assert!(generate_analog(&p, 250.0, -1.0).is_err());
    assert!(generate_analog(&p, f64::NAN, 1.0).is_err());
}

#[test]
fn invalid_params_rejected() {
    let mut p = silent(10.0);
    assert_eq!(p.validate().unwrap_err().field, "heart_rate_bpm");
    p = silent(60.0);
    p.waves.swap(0, 1);
    assert_eq!(p.validate().unwrap_err().field, "waves");
    p = silent(60.0);
    p.waves[2].width_rad = 0.0;
    assert_eq!(p.validate().unwrap_err().field, "width_rad");
    p = silent(60.0);
    p.noise.mains_hz = 55.0;
    assert_eq!(p.validate().unwrap_err().field, "mains_hz");
    assert!(WaveParams::new(1.0, PI, 0.1).is_err());
    assert!(LeadEvent::new(3.0, 2.0, LeadWhich::Plus).is_err());
}

fn autocorr_peak(xs: &[f64], lags: std::ops::Range<usize>) -> usize {
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let c: Vec<f64> = xs.iter().map(|x| x - mean).collect();
    lags.max_by(|&a, &b| {
        let r = |lag: usize| {
            (0..c.len() - lag).map(|i| c[i] * c[i + lag]).sum::<f64>() / (c.len() - lag) as f64
        };
        r(a).partial_cmp(&r(b)).unwrap()
    })
    .unwrap()
}

#[test]
fn autocorrelation_peaks_at_one_beat() {
    let s = generate_analog(&silent(60.0), 250.0, 30.0).unwrap();
    let xs: Vec<f64> = s.iter().map(|x| x.value_mv).collect();
    assert_eq!(autocorr_peak(&xs, 100..400), 250);
}

#[test]
fn noise_free_output_is_periodic() {
    for (hr, period) in [(60.0, 250usize), (120.0, 125), (75.0, 200)] {
        let s = generate_analog(&silent(hr), 250.0, 20.0).unwrap();
        for i in 0..s.len() - period {
            assert!(
                (s[i].value_mv - s[i + period].value_mv).abs() <= 1e-9,
                "hr {hr} index {i}"
            );
        }
    }
}

#[test]
fn first_r_peak_half_a_beat_in() {
    let s = generate_analog(&silent(60.0), 250.0, 1.0).unwrap();
    let peak = (0..s.len())
        .max_by(|&a, &b| s[a].value_mv.partial_cmp(&s[b].value_mv).unwrap())
        .unwrap();
    assert_eq!(peak, 125);
}

#[test]
fn lead_flags_follow_event_interval() {
    let mut p = silent(60.0);
    p.lead_events
        .push(LeadEvent::new(2.0, 3.0, LeadWhich::Plus).unwrap());
    let s = generate_analog(&p, 250.0, 5.0).unwrap();
    for (i, x) in s.iter().enumerate() {
        let inside = (500..750).contains(&i);
        assert_eq!(x.lead_state.plus_off(), inside, "index {i}");
        assert!(!x.lead_state.minus_off());
        if inside {
            assert_eq!(x.value_mv, p.lead_off_mv);
        }
    }
}

#[test]
fn overlapping_events_union() {
    let mut p = silent(60.0);
    p.lead_events.push("1:3:plus".parse().unwrap());
    p.lead_events.push("2:4:minus".parse().unwrap());
    let s = generate_analog(&p, 100.0, 5.0).unwrap();
    assert_eq!(s[150].lead_state, LeadState::PLUS_OFF);
    assert_eq!(s[250].lead_state, LeadState::BOTH_OFF);
    assert_eq!(s[350].lead_state, LeadState::MINUS_OFF);
    assert_eq!(s[450].lead_state, LeadState::ATTACHED);
}

#[test]
fn lead_event_parse_errors() {
    assert!("2:3".parse::<LeadEvent>().is_err());
    assert!("2:x:plus".parse::<LeadEvent>().is_err());
    assert!("2:3:sideways".parse::<LeadEvent>().is_err());
    let e: LeadEvent = "0.5:1.25:both".parse().unwrap();
    assert_eq!((e.start_s, e.end_s, e.which), (0.5, 1.25, LeadWhich::Both));
}

#[test]
fn white_noise_statistics() {
    let mut p = silent(60.0);
    for w in &mut p.waves {
        w.amplitude_mv = 0.0;
    }
    p.frontend_gain = 1.0;
    p.noise = NoiseConfig::white(0.5);
    p.seed = 42;
    let s = generate_analog(&p, 1000.0, 40.0).unwrap();
    let n = s.len() as f64;
    let mean = s.iter().map(|x| x.value_mv).sum::<f64>() / n;
    let var = s.iter().map(|x| (x.value_mv - mean).powi(2)).sum::<f64>() / n;
    assert!(mean.abs() < 0.01, "mean {mean}");
    assert!((var.sqrt() - 0.5).abs() < 0.01, "sd {}", var.sqrt());
}

#[test]
fn seeds_change_noise_and_only_noise() {
    let mut a = silent(60.0);
    a.noise = NoiseConfig::white(0.05);
    let mut b = a.clone();
    b.seed = 7;
    let sa = generate_analog(&a, 250.0, 2.0).unwrap();
    let sb = generate_analog(&b, 250.0, 2.0).unwrap();
    assert_ne!(sa, sb);
    let again = generate_analog(&a, 250.0, 2.0).unwrap();
    assert_eq!(sa, again);
}

#[test]
fn range_generation_matches_whole() {
    let mut p = silent(72.0);
    p.noise = NoiseConfig {
        white_sigma_mv: 0.03,
        baseline_wander_amp_mv: 0.1,
        mains_amp_mv: 0.02,
        ..NoiseConfig::default()
    };
    let whole = generate_range(&p, 250.0, 0, 10_000, Execution::Sequential).unwrap();
    let mut pieces = Vec::new();
    for (start, len) in [(0u64, 37u64), (37, 5000), (5037, 4963)] {
        pieces.extend(generate_range(&p, 250.0, start, len, Execution::Sequential).unwrap());
    }
    assert_eq!(whole, pieces);
    let par = generate_range(&p, 250.0, 0, 10_000, Execution::Parallel).unwrap();
    assert_eq!(whole, par);
}

#[test]
fn quantize_examples() {
    let adc = AdcConfig::default();
    assert_eq!(quantize(0.0, &adc), 2048);
    assert_eq!(quantize(1650.0, &adc), 4095);
    assert_eq!(quantize(9999.0, &adc), 4095);
    assert_eq!(quantize(-1650.1, &adc), 0);
    assert_eq!(quantize(f64::NAN, &adc), 0);
}

#[test]
fn dequantize_examples() {
    let adc = AdcConfig::default();
    // (2048.5 / 4096 * 3.3 - 1.65) * 1000 and (0.5 / 4096 * 3.3 - 1.65) * 1000
    assert_abs_diff_eq!(
        dequantize(2048, &adc).unwrap(),
        0.40283203125,
        epsilon = 1e-9
    );
    assert_abs_diff_eq!(
        dequantize(0, &adc).unwrap(),
        -1649.59716796875,
        epsilon = 1e-9
    );
    assert!(dequantize(4096, &adc).is_err());
    assert_abs_diff_eq!(adc.lsb_mv(), 3300.0 / 4096.0);
}

#[test]
fn round_trip_sweep_within_half_lsb() {
    for adc in [
        AdcConfig::default(),
        AdcConfig::new(3.3, 8, 1.0).unwrap(),
        AdcConfig::new(5.0, 16, 2.5).unwrap(),
    ] {
        let half = adc.lsb_mv() / 2.0;
        let lo = -adc.baseline_v * 1000.0;
        let hi = (adc.vref_v - adc.baseline_v) * 1000.0;
        let steps = 200_000;
        for k in 0..steps {
            let x = lo + (hi - lo) * k as f64 / steps as f64;
            let back = dequantize(quantize(x, &adc), &adc).unwrap();
            assert!((back - x).abs() <= half + 1e-9, "x {x} back {back}");
        }
    }
}

#[test]
fn adc_validation() {
    assert!(AdcConfig::new(3.3, 7, 1.0).is_err());
    assert!(AdcConfig::new(3.3, 17, 1.0).is_err());
    assert!(AdcConfig::new(3.3, 12, 3.4).is_err());
    assert!(AdcConfig::new(0.0, 12, 0.0).is_err());
}

#[test]
fn analog_text_round_trip() {
    let mut p = silent(60.0);
    p.noise = NoiseConfig::white(0.1);
    let s = generate_analog(&p, 250.0, 1.0).unwrap();
    let mut buf = Vec::new();
    write_analog_text(&mut buf, &s).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text
        .lines()
        .all(|l| l.split(' ').count() == 2 && !l.contains(',')));
    let back = read_analog_text(&buf[..]).unwrap();
    assert_eq!(back.len(), s.len());
    for (a, b) in s.iter().zip(&back) {
        assert_eq!(a.t_s, b.t_s);
        assert_eq!(a.value_mv, b.value_mv);
    }
    assert!(read_analog_text(&b"1 2 3\n"[..]).is_err());
}

proptest! {
    #[test]
    fn quantize_monotone(a in -3000.0f64..3000.0, b in -3000.0f64..3000.0) {
        let adc = AdcConfig::default();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(quantize(lo, &adc) <= quantize(hi, &adc));
    }

    #[test]
    fn round_trip_half_lsb(x in -1650.0f64..1649.99) {
        let adc = AdcConfig::default();
        let back = dequantize(quantize(x, &adc), &adc).unwrap();
        prop_assert!((back - x).abs() <= adc.lsb_mv() / 2.0 + 1e-9);
    }

    #[test]
    fn count_is_floor_rate_times_duration(rate in 1u32..2000, tenths in 1u32..200) {
        let d = tenths as f64 / 10.0;
        let s = generate_analog(&silent(60.0), rate as f64, d).unwrap();
        prop_assert_eq!(s.len() as u64, (rate as u64 * tenths as u64) / 10);
    }

    #[test]
    fn lead_flag_iff_covered(start in 0.0f64..4.0, len in 0.01f64..2.0) {
        let mut p = silent(60.0);
        p.lead_events.push(LeadEvent::new(start, start + len, LeadWhich::Minus).unwrap());
        let s = generate_analog(&p, 100.0, 6.0).unwrap();
        for x in &s {
            let covered = x.t_s >= start && x.t_s < start + len;
            prop_assert_eq!(x.lead_state.minus_off(), covered);
            prop_assert!(!x.lead_state.plus_off());
        }
    }
}
