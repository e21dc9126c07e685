use std::sync::OnceLock;

use jsonschema::Validator;
use serde_json::Value;

use super::Stage;

const STATUS_CHECK: &str = include_str!("../../resources/schemas/status_check.v1.json");
const GUIDANCE: &str = include_str!("../../resources/schemas/guidance.v1.json");
const PACKET: &str = include_str!("../../resources/schemas/packet.v1.json");

/// Response schema document for a stage.
pub fn schema_for(stage: Stage) -> &'static Value {
    static SCHEMAS: OnceLock<[Value; 3]> = OnceLock::new();
    let all = SCHEMAS.get_or_init(|| {
        [STATUS_CHECK, GUIDANCE, PACKET].map(|s| serde_json::from_str(s).expect("bundled schema is JSON"))
    });
    &all[stage as usize]
}

fn validator(stage: Stage) -> &'static Validator {
    static VALIDATORS: OnceLock<[Validator; 3]> = OnceLock::new();
    let all = VALIDATORS
        .get_or_init(|| Stage::ALL.map(|s| jsonschema::validator_for(schema_for(s)).expect("bundled schema compiles")));
    &all[stage as usize]
}

/// Checks a parsed payload against the stage schema. Errors are rendered
/// as `path: message`.
pub fn validate_payload(stage: Stage, payload: &Value) -> Result<(), Vec<String>> {
    let errors: Vec<String> =
        validator(stage).iter_errors(payload).map(|e| format!("{}: {}", e.instance_path, e)).collect();
    if errors.is_empty() {
        Ok(())
    } else {
        Err(errors)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn packet() -> Value {
        json!({
            "tick": 4, "trigger": "correction", "ems_mode": 2,
            "stick_op": {"axis": "x", "direction": "+", "magnitude": "firm"},
            "instruments": ["attitude indicator"], "rationale": "r", "provenance": ["a#0000"]
        })
    }

    #[test]
    fn packet_schema_accepts_valid_and_rejects_invariant_breaks() {
        assert!(validate_payload(Stage::Format, &packet()).is_ok());
        let mut p = packet();
        p["ems_mode"] = json!(3);
        assert!(validate_payload(Stage::Format, &p).is_err());
        let mut p = packet();
        p["instruments"] = json!([]);
        assert!(validate_payload(Stage::Format, &p).is_err());
        let mut p = packet();
        p["instruments"] = json!(["compass"]);
        assert!(validate_payload(Stage::Format, &p).is_err());
        let none = json!({"tick": 1, "trigger": null, "ems_mode": null, "stick_op": null,
                          "instruments": [], "rationale": "", "provenance": []});
        assert!(validate_payload(Stage::Format, &none).is_ok());
        let mut bad = none.clone();
        bad["ems_mode"] = json!(2);
        assert!(validate_payload(Stage::Format, &bad).is_err());
        let pre = json!({"tick": 1, "trigger": "pre_start", "ems_mode": 3,
                         "stick_op": {"axis": "x", "direction": "-", "magnitude": "light"},
                         "instruments": [], "rationale": "", "provenance": []});
        assert!(validate_payload(Stage::Format, &pre).is_ok());
    }

    #[test]
    fn status_schema_requires_known_metrics() {
        let ok = json!({"tick": 0, "status": "nominal", "worst_metric": null, "assessments": []});
        assert!(validate_payload(Stage::StatusCheck, &ok).is_ok());
        let bad = json!({"tick": 0, "status": "fine", "worst_metric": "torque", "assessments": []});
        assert_eq!(validate_payload(Stage::StatusCheck, &bad).unwrap_err().len(), 2);
    }
}
