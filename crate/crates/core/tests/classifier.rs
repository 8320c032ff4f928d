mod common;

use std::collections::BTreeSet;
use std::sync::Arc;

use chrono::{TimeZone, Utc};
use common::{project, FakeServer, ScriptedBackend};
use isomatrix_core::classifier::{
    mock_classify, BackendConfig, BackendFailure, BackendKind, Classifier, ErrorKind, MockBackend, PromptTemplate,
};
use isomatrix_core::clock::FixedClock;
use isomatrix_core::model::Provenance;
use isomatrix_core::taxonomy::{CellKey, Issue, Purpose, Scale, TaxonomyDocument};

const VALID: &str = r#"{"contributions":[{"issue":"health","purpose":"wellbeing","scale":"local","score":3,"rationale":"improves access to care"}]}"#;

fn config(max_retries: u32) -> BackendConfig {
    BackendConfig {
        max_retries,
        backoff_base_ms: 1,
        ..BackendConfig::default()
    }
}

fn classifier(backend: Arc<ScriptedBackend>, cfg: BackendConfig) -> Classifier {
    let tax = Arc::new(TaxonomyDocument::builtin());
    let template = PromptTemplate::builtin(&tax);
    Classifier::new(backend, cfg, tax, template).unwrap()
}

fn mock_classifier(cfg: BackendConfig) -> Classifier {
    let tax = Arc::new(TaxonomyDocument::builtin());
    let template = PromptTemplate::builtin(&tax);
    Classifier::new(Arc::new(MockBackend), cfg, tax, template)
        .unwrap()
        .with_clock(Arc::new(FixedClock(Utc.timestamp_opt(1_700_000_000, 0).unwrap())))
}

fn triples(a: &isomatrix_core::Assessment) -> BTreeSet<(Issue, Purpose, Scale, u8)> {
    a.contributions
        .iter()
        .map(|c| (c.cell.issue, c.cell.purpose, c.scale, c.score.value()))
        .collect()
}

// Expected sets below were read off assets/mock_keywords.json by hand.

#[test]
fn mock_community_garden() {
    let a = mock_classifier(config(0)).classify(&project("g", "A community garden in the courtyard")).unwrap();
    let cells = triples(&a);
    assert!(cells.contains(&(Issue::Biodiversity, Purpose::Environment, Scale::Local, 3)));
    assert!(cells.contains(&(Issue::LivingTogether, Purpose::SocialCohesion, Scale::Local, 3)));
    assert_eq!(a.provenance, Provenance::Mock);
}

#[test]
fn mock_classify_examples() {
    let a = mock_classify(&project("t", "Plant trees along the street"));
    assert_eq!(
        triples(&a),
        BTreeSet::from([(Issue::Biodiversity, Purpose::Environment, Scale::Local, 3)])
    );
    assert!(mock_classify(&project("e", "")).contributions.is_empty());
    let a = mock_classify(&project("s", "solar panels for the school"));
    assert_eq!(
        triples(&a),
        BTreeSet::from([
            (Issue::Education, Purpose::Wellbeing, Scale::Local, 3),
            (Issue::Infrastructure, Purpose::ResourceUse, Scale::Local, 3),
        ])
    );
    assert_eq!(mock_classify(&project("s", "solar panels for the school")), a);
}

#[test]
fn mock_backend_is_byte_deterministic() {
    let p = project("d", "Bike lanes and a compost point next to the school, with solar lighting.");
    let a = serde_json::to_vec(&mock_classifier(config(0)).classify(&p).unwrap()).unwrap();
    let b = serde_json::to_vec(&mock_classifier(config(0)).classify(&p).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn malformed_every_time_exhausts_retries() {
    let backend = Arc::new(ScriptedBackend::new(vec![Ok("this is not json".into())]));
    let err = classifier(backend.clone(), config(2)).classify(&project("p", "text")).unwrap_err();
    assert_eq!(err.kind, ErrorKind::ExhaustedRetries);
    assert_eq!(err.attempts, 3);
    assert_eq!(backend.calls(), 3);
    assert!(err.detail.contains("malformed_output"));
}

#[test]
fn client_error_is_not_retried() {
    let backend = Arc::new(ScriptedBackend::new(vec![Err(BackendFailure::Status {
        code: 401,
        body: "bad key".into(),
    })]));
    let err = classifier(backend.clone(), config(5)).classify(&project("p", "text")).unwrap_err();
    assert_eq!(err.kind, ErrorKind::HttpStatus);
    assert_eq!(err.status, Some(401));
    assert_eq!(err.attempts, 1);
    assert_eq!(backend.calls(), 1);
}

#[test]
fn transient_failures_then_success() {
    let backend = Arc::new(ScriptedBackend::new(vec![
        Err(BackendFailure::Transport("connection reset".into())),
        Err(BackendFailure::Status { code: 503, body: String::new() }),
        Ok("{\"broken".into()),
        Ok(VALID.into()),
    ]));
    let a = classifier(backend.clone(), config(3)).classify(&project("p", "text")).unwrap();
    assert_eq!(backend.calls(), 4);
    assert_eq!(a.contributions.len(), 1);
    assert_eq!(a.provenance, Provenance::Llm);
    assert_eq!(a.model_id, "scripted");
}

#[test]
fn schema_violation_is_not_retried() {
    let backend = Arc::new(ScriptedBackend::new(vec![Ok(
        r#"{"contributions":[{"issue":"health","purpose":"wellbeing","scale":"local","score":7,"rationale":"x"}]}"#.into(),
    )]));
    let err = classifier(backend.clone(), config(3)).classify(&project("p", "text")).unwrap_err();
    assert_eq!(err.kind, ErrorKind::SchemaViolation);
    assert_eq!(backend.calls(), 1);
}

#[test]
fn zero_retries_means_one_attempt() {
    let backend = Arc::new(ScriptedBackend::new(vec![Err(BackendFailure::Transport("down".into()))]));
    let err = classifier(backend.clone(), config(0)).classify(&project("p", "text")).unwrap_err();
    assert_eq!((err.kind, err.attempts), (ErrorKind::ExhaustedRetries, 1));
}

#[test]
fn empty_description_never_reaches_backend() {
    let backend = Arc::new(ScriptedBackend::new(vec![Ok(VALID.into())]));
    let err = classifier(backend.clone(), config(2)).classify(&project("p", "")).unwrap_err();
    assert_eq!(err.kind, ErrorKind::InvalidInput);
    assert_eq!(backend.calls(), 0);
}

#[test]
fn cache_hit_skips_backend() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = BackendConfig {
        cache_dir: Some(dir.path().join("cache")),
        ..config(0)
    };
    let backend = Arc::new(ScriptedBackend::new(vec![Ok(VALID.into())]));
    let c = classifier(backend.clone(), cfg.clone());
    let p = project("p", "clinic");
    let first = c.classify(&p).unwrap();
    assert_eq!(backend.calls(), 1);
    let second = c.classify(&p).unwrap();
    assert_eq!(backend.calls(), 1);
    assert_eq!(first, second);

    // A new classifier over the same cache directory also hits.
    let fresh = Arc::new(ScriptedBackend::new(vec![Ok(VALID.into())]));
    assert_eq!(classifier(fresh.clone(), cfg.clone()).classify(&p).unwrap(), first);
    assert_eq!(fresh.calls(), 0);

    // Editing the description misses.
    classifier(fresh.clone(), cfg).classify(&project("p", "clinic and school")).unwrap();
    assert_eq!(fresh.calls(), 1);
}

#[test]
fn cache_key_follows_prompt_version() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = BackendConfig {
        cache_dir: Some(dir.path().to_path_buf()),
        ..config(0)
    };
    let tax = TaxonomyDocument::builtin();
    let mut edited = tax.clone();
    edited.issues[3].definition.push_str(" Also mental health.");

    let backend = Arc::new(ScriptedBackend::new(vec![Ok(VALID.into())]));
    let original = Classifier::new(backend.clone(), cfg.clone(), Arc::new(tax.clone()), PromptTemplate::builtin(&tax)).unwrap();
    let changed =
        Classifier::new(backend.clone(), cfg, Arc::new(edited.clone()), PromptTemplate::builtin(&edited)).unwrap();
    let p = project("p", "clinic");
    assert_ne!(original.cache_key_for(&p), changed.cache_key_for(&p));
    original.classify(&p).unwrap();
    changed.classify(&p).unwrap();
    assert_eq!(backend.calls(), 2);
    assert_ne!(original.template().version, changed.template().version);
}

#[test]
fn batch_sequential_in_order() {
    let backend = Arc::new(ScriptedBackend::new(vec![Ok(VALID.into())]));
    let c = classifier(backend.clone(), config(0));
    let projects: Vec<_> = (0..10).map(|i| project(&format!("p{i:02}"), "text")).collect();
    let out = c.classify_batch(&projects, 1);
    assert_eq!(out.iter().map(|(id, _)| id.clone()).collect::<Vec<_>>(), projects.iter().map(|p| p.id.clone()).collect::<Vec<_>>());
    assert_eq!(backend.calls(), 10);
    assert_eq!(backend.peak.load(std::sync::atomic::Ordering::SeqCst), 1);
}

#[test]
fn batch_isolates_failures() {
    let c = mock_classifier(config(0));
    let mut projects: Vec<_> = (0..10).map(|i| project(&format!("p{i}"), "community garden")).collect();
    projects[4].description = String::new();
    let out = c.classify_batch(&projects, 3);
    assert_eq!(out.iter().filter(|(_, r)| r.is_ok()).count(), 9);
    assert_eq!(out[4].0, "p4");
    assert!(out[4].1.is_err());
    assert!(c.classify_batch(&[], 4).is_empty());
}

#[test]
fn batch_bounds_parallelism() {
    for parallelism in [1, 2, 4] {
        let backend = Arc::new(ScriptedBackend::new(vec![Ok(VALID.into())]).with_delay(5));
        let c = classifier(backend.clone(), config(0));
        let projects: Vec<_> = (0..16).map(|i| project(&format!("p{i}"), "text")).collect();
        let out = c.classify_batch(&projects, parallelism);
        let peak = backend.peak.load(std::sync::atomic::Ordering::SeqCst);
        assert!(peak <= parallelism, "peak {peak} > {parallelism}");
        assert_eq!(out.len(), 16);
        for (i, (id, r)) in out.iter().enumerate() {
            assert_eq!(id, &format!("p{i}"));
            assert_eq!(&r.as_ref().unwrap().project_id, id);
        }
    }
}

#[test]
fn remote_backend_round_trip() {
    let payload = serde_json::json!({
        "choices": [{"message": {"role": "assistant", "tool_calls": [{
            "id": "call_1", "type": "function",
            "function": {"name": "record_contributions", "arguments": VALID}
        }]}}]
    })
    .to_string();
    let server = FakeServer::start(vec![(500, "{}".into()), (200, "not json".into()), (200, payload)]);
    std::env::set_var("ISOMATRIX_TEST_KEY", "sk-test");
    let cfg = BackendConfig {
        endpoint_url: server.url.clone(),
        model_id: "gpt-3.5-turbo".into(),
        api_key_env_name: "ISOMATRIX_TEST_KEY".into(),
        backend_kind: BackendKind::Remote,
        timeout_seconds: 5,
        ..config(3)
    };
    let tax = Arc::new(TaxonomyDocument::builtin());
    let template = PromptTemplate::builtin(&tax);
    let c = Classifier::from_config(cfg, tax, template.clone()).unwrap();
    let a = c.classify(&project("r1", "A new health clinic")).unwrap();
    assert_eq!(a.contributions[0].cell, CellKey::new(Issue::Health, Purpose::Wellbeing));
    assert_eq!(a.provenance, Provenance::Llm);
    assert_eq!(a.model_id, "gpt-3.5-turbo");
    assert_eq!(a.prompt_version, template.version);

    let requests = server.requests.lock().unwrap();
    assert_eq!(requests.len(), 3);
    let (headers, body) = &requests[2];
    assert!(headers.to_ascii_lowercase().contains("authorization: bearer sk-test"));
    let body: serde_json::Value = serde_json::from_str(body).unwrap();
    assert_eq!(body["model"], "gpt-3.5-turbo");
    assert_eq!(body["temperature"], 0.0);
    assert_eq!(body["messages"][0]["role"], "system");
    assert_eq!(body["messages"][1]["content"], "Project r1\n\nA new health clinic");
    assert_eq!(body["tools"][0]["function"]["name"], "record_contributions");
}

#[test]
fn remote_backend_client_error() {
    let server = FakeServer::start(vec![(400, r#"{"error":"bad request"}"#.into())]);
    let cfg = BackendConfig {
        endpoint_url: server.url.clone(),
        backend_kind: BackendKind::Remote,
        api_key_env_name: "ISOMATRIX_UNSET_KEY".into(),
        timeout_seconds: 5,
        ..config(3)
    };
    let tax = Arc::new(TaxonomyDocument::builtin());
    let c = Classifier::from_config(cfg, tax.clone(), PromptTemplate::builtin(&tax)).unwrap();
    let err = c.classify(&project("r", "text")).unwrap_err();
    assert_eq!((err.kind, err.status, err.attempts), (ErrorKind::HttpStatus, Some(400), 1));
    assert_eq!(server.requests.lock().unwrap().len(), 1);
}

#[test]
fn remote_backend_unreachable_is_transport() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    drop(listener);
    let cfg = BackendConfig {
        endpoint_url: url,
        backend_kind: BackendKind::Remote,
        timeout_seconds: 2,
        ..config(1)
    };
    let tax = Arc::new(TaxonomyDocument::builtin());
    let c = Classifier::from_config(cfg, tax.clone(), PromptTemplate::builtin(&tax)).unwrap();
    let err = c.classify(&project("r", "text")).unwrap_err();
    assert_eq!((err.kind, err.attempts), (ErrorKind::ExhaustedRetries, 2));
    assert!(err.detail.contains("transport"));
}
