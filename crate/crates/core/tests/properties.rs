use std::io::Cursor;

use proptest::prelude::*;

use chainsense::estimator::{estimator_sensitivities, EstimatorSpec, Observable};
use chainsense::protocol::{run_protocol, FloorPolicy, ProtocolConfig, ProtocolTrace};
use chainsense::records::{read_csv, read_json, write_csv, write_json, Record};
use chainsense::thermo::{self, Parameter, Provenance};
use chainsense::validation;
use chainsense::{ChainSpec, Model};

fn xx_spec() -> impl Strategy<Value = ChainSpec> {
    (1usize..=40, 0.3f64..2.0, -2.5f64..2.5, 0.05f64..50.0)
        .prop_map(|(half, j, h, beta)| ChainSpec::xx(2 * half, j, h, beta).unwrap())
}

fn small_spec() -> impl Strategy<Value = ChainSpec> {
    (prop_oneof![Just(2usize), Just(4), Just(6)], -1.5f64..1.5, 0.0f64..=1.0, 0.1f64..30.0, any::<bool>())
        .prop_map(|(n, h, gamma, beta, xx)| {
            if xx {
                ChainSpec::xx(n, 1.0, h, beta).unwrap()
            } else {
                ChainSpec::xy(n, 1.0, h, gamma, beta).unwrap()
            }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn qfi_is_nonnegative_and_finite(s in xx_spec()) {
        let f = thermo::qfi_h(&s).value;
        prop_assert!(f.is_finite() && f >= 0.0);
        let fj = thermo::qfi_j(&s).unwrap().value;
        prop_assert!(fj.is_finite() && fj >= 0.0);
        prop_assert!(thermo::log_partition(&s).is_finite());
    }

    #[test]
    fn field_reversal_symmetry(s in xx_spec()) {
        let m = s.with_h(-s.h);
        let scale = s.n as f64;
        prop_assert!((thermo::magnetization_z(&s) + thermo::magnetization_z(&m)).abs() < 1e-9 * scale);
        let (a, b) = (thermo::qfi_h(&s).value, thermo::qfi_h(&m).value);
        prop_assert!(validation::rel_diff(a, b, validation::qfi_floor(&s)) < 1e-9);
        prop_assert!((thermo::log_partition(&s) - thermo::log_partition(&m)).abs() < 1e-9 * scale.max(thermo::log_partition(&s).abs()));
    }

    #[test]
    fn susceptibility_identity_holds(half in 2usize..=32, j in 0.5f64..1.5, h in -1.5f64..1.5, beta in 0.2f64..5.0) {
        let s = ChainSpec::xx(2 * half, j, h, beta).unwrap();
        prop_assert!(validation::susceptibility_identity(&s).unwrap() < 1e-6);
    }

    #[test]
    fn magnetization_increases_with_field(s in xx_spec(), dh in 0.01f64..0.5) {
        // χ_h = 𝓕(h)/β ≥ 0
        let up = s.with_h(s.h + dh);
        prop_assert!(thermo::magnetization_z(&up) >= thermo::magnetization_z(&s) - 1e-12 * s.n as f64);
    }

    #[test]
    fn closed_form_estimators_obey_the_bound(s in xx_spec()) {
        let ests = [
            EstimatorSpec::new(Observable::Jz, Parameter::H).unwrap(),
            EstimatorSpec::new(Observable::Jz, Parameter::J).unwrap(),
            EstimatorSpec::new(Observable::OJ, Parameter::J).unwrap(),
            EstimatorSpec::new(Observable::OJ, Parameter::H).unwrap(),
        ];
        let f = estimator_sensitivities(&s, &ests).unwrap();
        let qh = thermo::qfi_h(&s).value;
        let qj = thermo::qfi_j(&s).unwrap().value;
        for (e, r) in ests.iter().zip(&f) {
            let q = if e.target == Parameter::H { qh } else { qj };
            prop_assert!(r.value <= q * (1.0 + 1e-9) + validation::qfi_floor(&s), "{}: {} > {}", e.label(), r.value, q);
        }
        prop_assert!(validation::rel_diff(f[0].value, qh, validation::qfi_floor(&s)) < 1e-10);
        prop_assert!(validation::rel_diff(f[2].value, qj, validation::qfi_floor(&s)) < 1e-10);
    }

    #[test]
    fn csv_and_json_round_trip_bit_exactly(
        values in prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 1..20),
        h in any::<f64>().prop_filter("finite", |v| v.is_finite()),
    ) {
        let s = ChainSpec::xx(4, 1.0, 0.5, 1.0).unwrap();
        let recs: Vec<Record> = values
            .iter()
            .map(|&v| Record { h, ..Record::new(&s, "q", v, Provenance::Oracle) })
            .collect();
        let mut c = Vec::new();
        write_csv(&mut c, &recs, None).unwrap();
        let (back, _) = read_csv(Cursor::new(c)).unwrap();
        let mut j = Vec::new();
        write_json(&mut j, &recs, None).unwrap();
        let doc = read_json(Cursor::new(j)).unwrap();
        for ((a, b), orig) in back.iter().zip(&doc.records).zip(&recs) {
            prop_assert_eq!(a.value.to_bits(), orig.value.to_bits());
            prop_assert_eq!(b.value.to_bits(), orig.value.to_bits());
            prop_assert_eq!(a.h.to_bits(), orig.h.to_bits());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn oracle_estimators_obey_the_bound(s in small_spec()) {
        let mut ests = vec![
            EstimatorSpec::new(Observable::Jz, Parameter::H).unwrap(),
            EstimatorSpec::new(Observable::JxSquared, Parameter::H).unwrap(),
        ];
        if s.model == Model::XX {
            ests.push(EstimatorSpec::new(Observable::OJ, Parameter::H).unwrap());
        }
        let f = estimator_sensitivities(&s, &ests).unwrap();
        let q = thermo::qfi_h(&s).value;
        for (e, r) in ests.iter().zip(&f) {
            prop_assert!(r.value <= q * (1.0 + 1e-9) + validation::qfi_floor(&s), "{} on {:?}: {} > {}", e.label(), s, r.value, q);
        }
    }

    #[test]
    fn free_fermions_match_the_oracle(s in small_spec()) {
        let r = validation::oracle_residuals(&[s]).unwrap();
        prop_assert!(r.log_z < 1e-10);
        prop_assert!(r.magnetization < 1e-8);
        prop_assert!(r.qfi_h_xx < 1e-8 && r.qfi_j < 1e-8 && r.qfi_h_xy < 1e-6, "{:?} {:?}", s, r);
    }

    #[test]
    fn protocol_is_reproducible(seed in any::<u64>(), n in 50usize..500) {
        let cfg = ProtocolConfig {
            n: 2 * n,
            beta: 50.0,
            nu: 10,
            k_max: 3,
            floor_policy: FloorPolicy::RunToKmax,
            seed,
            ..Default::default()
        };
        let a = run_protocol(&cfg).unwrap();
        let b = run_protocol(&cfg).unwrap();
        prop_assert_eq!(&a, &b);
        let mut buf = Vec::new();
        a.write_jsonl(&mut buf).unwrap();
        prop_assert_eq!(ProtocolTrace::read_jsonl(Cursor::new(buf)).unwrap(), a);
    }
}
