//! The experiment registry: each named experiment runs with exact
//! oracles where available and reports pass/fail against its pinned
//! thresholds.

use crate::reports::{trials_to_csv, ExperimentReport};
use crate::Settings;
use qdel::fhe::{self, NandGate};
use qdel::games::{
    self, dephasing_invariance_check, empirical_advantage, gauss_collapse_exp, ind_cpa_cd_exp,
    lhl_check, run_trials, strong_gauss_collapse_exp, uncertainty_check, uncertainty_suite,
    CollapseParams, GameRng, HonestCdDeleter, HonestPreimageDeleter, HonestStrongDeleter,
    InvalidWitnessAdversary,
};
use qdel::gaussian::{poisson_check, sample_uniform_mat, sample_uniform_vec};
use qdel::modq::generates_full_group;
use qdel::states::duality_check;
use rand::SeedableRng;
use serde_json::json;

pub fn run(name: &str, settings: &Settings) -> Result<ExperimentReport, String> {
    match name {
        "duality" => duality(settings),
        "poisson" => poisson(settings),
        "lhl" => lhl(settings),
        "dephasing" => dephasing(settings),
        "uncertainty" => uncertainty(settings),
        "gauss-collapse" => gauss_collapse(settings),
        "strong-gauss-collapse" => strong_gauss_collapse(settings),
        "ind-cpa-cd" => ind_cpa_cd(settings),
        "fhe-pipeline" => fhe_pipeline(settings),
        other => Err(format!(
            "unknown experiment {other:?}; expected one of gauss-collapse, \
             strong-gauss-collapse, ind-cpa-cd, dephasing, uncertainty, lhl, \
             duality, poisson, fhe-pipeline"
        )),
    }
}

fn full_rank_matrix(n: usize, m: usize, q: i64, rng: &mut GameRng) -> qdel::modq::ZqMat {
    loop {
        let a = sample_uniform_mat(n, m, q, rng);
        if generates_full_group(&a) {
            return a;
        }
    }
}

fn duality(settings: &Settings) -> Result<ExperimentReport, String> {
    let (q, m, sigma) = (29i64, 2usize, 4.6f64);
    let trials = settings.trials.clamp(1, 50);
    let mut report = ExperimentReport::new(
        "duality",
        json!({"q": q, "m": m, "sigma": sigma}),
        settings.seed,
        trials,
    );
    let mut rng = GameRng::seed_from_u64(settings.seed);
    let mut td_max = 0.0f64;
    let mut bound_min = f64::INFINITY;
    for _ in 0..trials {
        let a = full_rank_matrix(1, m, q, &mut rng);
        let y = sample_uniform_vec(1, q, &mut rng);
        let rep = duality_check(&a, &y, sigma, settings.budget).map_err(|e| e.to_string())?;
        td_max = td_max.max(rep.td);
        bound_min = bound_min.min(rep.bound);
    }
    report.metric("td", td_max);
    report.metric("bound", bound_min);
    report.pass = td_max <= bound_min;
    Ok(report)
}

fn poisson(settings: &Settings) -> Result<ExperimentReport, String> {
    let (n, m, q, sigma) = (1usize, 2usize, 13i64, 3.0f64);
    let trials = settings.trials.clamp(1, 200);
    let mut report = ExperimentReport::new(
        "poisson",
        json!({"n": n, "m": m, "q": q, "sigma": sigma}),
        settings.seed,
        trials,
    );
    let mut rng = GameRng::seed_from_u64(settings.seed);
    let mut max_err = 0.0f64;
    for _ in 0..trials {
        let a = full_rank_matrix(n, m, q, &mut rng);
        let v = sample_uniform_vec(m, q, &mut rng);
        let w = sample_uniform_vec(m, q, &mut rng);
        let (_, _, err) = poisson_check(&a, &v, &w, sigma, q).map_err(|e| e.to_string())?;
        max_err = max_err.max(err);
    }
    report.metric("abs_err", max_err);
    report.pass = max_err <= 1e-6;
    Ok(report)
}

fn lhl(settings: &Settings) -> Result<ExperimentReport, String> {
    let (n, m, q) = (1usize, 10usize, 13i64);
    let trials = settings.trials.max(100);
    let mut report = ExperimentReport::new(
        "lhl",
        json!({"n": n, "m": m, "q": q}),
        settings.seed,
        trials,
    );
    let mut rng = GameRng::seed_from_u64(settings.seed);
    let tv = lhl_check(n, m, q, trials, &mut rng);
    let mut rng2 = GameRng::seed_from_u64(settings.seed.wrapping_add(1));
    let tv_negative_control = lhl_check(n, 1, q, trials.min(2000), &mut rng2);
    report.metric("tv", tv);
    report.metric("tv_m1_negative_control", tv_negative_control);
    report.pass = tv <= 0.05 && tv_negative_control >= 0.2;
    Ok(report)
}

fn dephasing(settings: &Settings) -> Result<ExperimentReport, String> {
    let (q, m, sigma) = (29i64, 2usize, 4.6f64);
    let inv_alpha = 10.0;
    let mut report = ExperimentReport::new(
        "dephasing",
        json!({"n": 1, "m": m, "q": q, "sigma": sigma, "inv_alpha": inv_alpha}),
        settings.seed,
        1,
    );
    let mut rng = GameRng::seed_from_u64(settings.seed);
    let a = full_rank_matrix(1, m, q, &mut rng);
    let y = sample_uniform_vec(1, q, &mut rng);
    let rep = dephasing_invariance_check(&a, &y, sigma, 1.0 / inv_alpha, settings.budget)
        .map_err(|e| e.to_string())?;
    report.metric("td", rep.td);
    report.metric("bound", rep.bound);
    report.metric("in_window", rep.in_window);
    report.pass = rep.in_window && rep.td <= rep.bound + 1e-12;
    Ok(report)
}

fn uncertainty(settings: &Settings) -> Result<ExperimentReport, String> {
    let suite = uncertainty_suite();
    let mut report = ExperimentReport::new(
        "uncertainty",
        json!({"suite_size": suite.len()}),
        settings.seed,
        suite.len(),
    );
    let mut violations = 0usize;
    let mut max_ratio = 0.0f64;
    for (_, spec, s_set) in &suite {
        let rep = uncertainty_check(spec, s_set).map_err(|e| e.to_string())?;
        if !rep.ok {
            violations += 1;
        }
        max_ratio = max_ratio.max(rep.pguess_ideal / rep.pguess_analytic_bound);
    }
    report.metric("cases", suite.len());
    report.metric("violations", violations);
    report.metric("max_pguess_over_bound", max_ratio);
    report.pass = violations == 0;
    Ok(report)
}

fn gauss_collapse(settings: &Settings) -> Result<ExperimentReport, String> {
    let params = CollapseParams {
        n: 1,
        m: 2,
        q: 13,
        sigma: 3.0,
        budget: settings.budget,
    };
    let trials = settings.trials.max(10);
    let mut report = ExperimentReport::new(
        "gauss-collapse",
        serde_json::to_value(params).unwrap(),
        settings.seed,
        trials,
    );
    let records = run_trials(trials, settings.seed, |b, rng| {
        let mut adv = HonestPreimageDeleter::new();
        gauss_collapse_exp(b, &mut adv, &params, rng)
    })
    .map_err(|e| e.to_string())?;
    // schema audit on a fresh run
    let mut rng = GameRng::seed_from_u64(settings.seed);
    let mut adv = HonestPreimageDeleter::new();
    let probe = gauss_collapse_exp(0, &mut adv, &params, &mut rng).map_err(|e| e.to_string())?;
    let schema_ok =
        probe.transcript_tags() == games::expected_schema("gauss-collapse").unwrap().to_vec();
    report.metric("schema_ok", schema_ok);
    report.metric("advantage_honest", empirical_advantage(&records));
    report.trial_csv = Some(trials_to_csv(&records));
    report.pass = schema_ok;
    Ok(report)
}

fn strong_gauss_collapse(settings: &Settings) -> Result<ExperimentReport, String> {
    let params = CollapseParams {
        n: 1,
        m: 2,
        q: 29,
        sigma: 5.0,
        budget: settings.budget,
    };
    let trials = settings.trials.max(10);
    let mut report = ExperimentReport::new(
        "strong-gauss-collapse",
        serde_json::to_value(params).unwrap(),
        settings.seed,
        trials,
    );
    // honest deleters obtain the trapdoor
    let honest = run_trials(trials, settings.seed, |b, rng| {
        let mut adv = HonestStrongDeleter;
        strong_gauss_collapse_exp(b, &mut adv, &params, rng)
    })
    .map_err(|e| e.to_string())?;
    let got = honest
        .iter()
        .filter(|r| r.b == 0 && r.verify_ok == Some(true))
        .count() as f64
        / honest.iter().filter(|r| r.b == 0).count().max(1) as f64;
    // rejected witnesses never see the trapdoor
    let mut leaks = 0usize;
    for i in 0..trials {
        let mut rng = GameRng::seed_from_u64(settings.seed.wrapping_add(1000 + i as u64));
        let mut adv = InvalidWitnessAdversary;
        let res = strong_gauss_collapse_exp((i % 2) as u8, &mut adv, &params, &mut rng)
            .map_err(|e| e.to_string())?;
        if res.released_secret() {
            leaks += 1;
        }
    }
    let mut rng = GameRng::seed_from_u64(settings.seed);
    let mut adv = HonestStrongDeleter;
    let probe =
        strong_gauss_collapse_exp(0, &mut adv, &params, &mut rng).map_err(|e| e.to_string())?;
    let schema_ok = probe.transcript_tags()
        == games::expected_schema("strong-gauss-collapse")
            .unwrap()
            .to_vec();
    report.metric("schema_ok", schema_ok);
    report.metric("honest_trapdoor_rate", got);
    report.metric("trapdoor_leaks_on_reject", leaks);
    report.trial_csv = Some(trials_to_csv(&honest));
    report.pass = schema_ok && leaks == 0 && got >= 0.99;
    Ok(report)
}

fn ind_cpa_cd(settings: &Settings) -> Result<ExperimentReport, String> {
    let scheme = settings.config.scheme.as_deref().unwrap_or("pke");
    let trials = settings.trials.max(100);
    let (params_json, records) = match scheme {
        "pke" => {
            let params = crate::default_pke_params(settings)?;
            let records = run_trials(trials, settings.seed, |b, rng| {
                let mut adv = HonestCdDeleter::new();
                ind_cpa_cd_exp(b, &mut adv, &params, rng)
            })
            .map_err(|e| e.to_string())?;
            (serde_json::to_value(params).unwrap(), records)
        }
        "fhe" => {
            let params = crate::default_fhe_params(settings)?;
            let records = run_trials(trials, settings.seed, |b, rng| {
                let mut adv = games::HonestFheCdDeleter;
                games::ind_cpa_cd_fhe_exp(b, &mut adv, &params, rng)
            })
            .map_err(|e| e.to_string())?;
            (serde_json::to_value(params).unwrap(), records)
        }
        other => return Err(format!("bad scheme {other:?}; expected pke or fhe")),
    };
    let mut report = ExperimentReport::new("ind-cpa-cd", params_json, settings.seed, trials);
    let adv = empirical_advantage(&records);
    let accept =
        records.iter().filter(|r| r.verify_ok == Some(true)).count() as f64 / records.len() as f64;
    let schema_ok = {
        let mut rng = GameRng::seed_from_u64(settings.seed);
        let tags = if scheme == "pke" {
            let params = crate::default_pke_params(settings)?;
            let mut adv_h = HonestCdDeleter::new();
            ind_cpa_cd_exp(0, &mut adv_h, &params, &mut rng)
                .map_err(|e| e.to_string())?
                .transcript_tags()
                .iter()
                .map(|s| s.to_string())
                .collect::<Vec<_>>()
        } else {
            let params = crate::default_fhe_params(settings)?;
            let mut adv_h = games::HonestFheCdDeleter;
            games::ind_cpa_cd_fhe_exp(0, &mut adv_h, &params, &mut rng)
                .map_err(|e| e.to_string())?
                .transcript_tags()
                .iter()
                .map(|s| s.to_string())
                .collect::<Vec<_>>()
        };
        tags == games::expected_schema("ind-cpa-cd").unwrap().to_vec()
    };
    report.metric("scheme", scheme);
    report.metric("schema_ok", schema_ok);
    report.metric("advantage", adv);
    report.metric("accept_rate", accept);
    report.trial_csv = Some(trials_to_csv(&records));
    report.pass = schema_ok && adv <= 0.05 && accept >= 0.95;
    Ok(report)
}

fn fhe_pipeline(settings: &Settings) -> Result<ExperimentReport, String> {
    let params = crate::default_fhe_params(settings)?;
    let circuit = settings.config.circuit.clone().unwrap_or_else(|| {
        vec![NandGate {
            i: "c1".into(),
            j: "c2".into(),
            out: "c12".into(),
        }]
    });
    let trials = settings.trials.clamp(4, 200);
    let mut report = ExperimentReport::new(
        "fhe-pipeline",
        json!({"params": serde_json::to_value(params).unwrap(), "circuit": serde_json::to_value(&circuit).unwrap()}),
        settings.seed,
        trials,
    );
    let mut y_correct = 0usize;
    let mut accepted = 0usize;
    let mut td_max = 0.0f64;
    for t in 0..trials {
        let mut rng = GameRng::seed_from_u64(settings.seed.wrapping_add(t as u64));
        let kp = fhe::fhe_keygen(&params, &mut rng).map_err(|e| e.to_string())?;
        let bits = [(t % 2) as u8, ((t / 2) % 2) as u8];
        let (vk, ct) = fhe::quantum_fhe_encrypt(&kp.pk, &bits, &params, &mut rng)
            .map_err(|e| e.to_string())?;
        let original = ct.state.clone();
        let (evaluated, transcript) =
            fhe::eval(&circuit, &ct, &params).map_err(|e| e.to_string())?;
        let outcome = fhe::extract_protocol(&evaluated, &transcript, &kp.sk, &params, &mut rng)
            .map_err(|e| e.to_string())?;
        let expect = 1 - bits[0] * bits[1];
        if outcome.y == expect {
            y_correct += 1;
        }
        let td = outcome
            .ciphertext
            .state
            .trace_distance_pure(&original)
            .map_err(|e| e.to_string())?;
        td_max = td_max.max(td);
        let cert =
            fhe::fhe_delete(&outcome.ciphertext, &params, &mut rng).map_err(|e| e.to_string())?;
        if fhe::fhe_verify(&vk, &cert, &params) {
            accepted += 1;
        }
    }
    let y_rate = y_correct as f64 / trials as f64;
    let accept_rate = accepted as f64 / trials as f64;
    report.metric("y_correct_rate", y_rate);
    report.metric("verify_accept_rate", accept_rate);
    report.metric("max_rewind_trace_distance", td_max);
    report.pass = y_rate >= 0.95 && accept_rate >= 0.95 && td_max <= 0.05;
    Ok(report)
}
