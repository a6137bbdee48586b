use csp2c_core::codegen::{encoding_section, Family};
use csp2c_core::verifier::{
    all_versions, cross_version_equivalence_with, differential_check, differential_check_with,
    VerifyConfig, VerifyStatus,
};
use csp2c_core::{emit_concrete_driver, parse_document, version_to_spec};

const TERNARY: &str = r#"<instance format="XCSP3" type="CSP">
  <variables><array id="x" size="[6]"> 0 1 </array></variables>
  <constraints>
    <group>
      <extension><list> %0 %1 %2 </list><conflicts> (0,0,0) (0,1,0)</conflicts></extension>
      <args> x[0] x[1] x[2] </args>
      <args> x[3] x[4] x[5] </args>
    </group>
    <extension><list> x[0] x[5] </list><supports> (1,0) (0,1) (1,1) </supports></extension>
  </constraints>
</instance>"#;

const INTENSIONAL: &str = r#"<instance format="XCSP3" type="CSP">
  <variables>
    <array id="x" size="[3]"> -1..2 </array>
    <var id="y"> 0 2 5 </var>
  </variables>
  <constraints>
    <allDifferent> x[] </allDifferent>
    <intension> eq(y,dist(x[0],x[2])) </intension>
    <intension> or(lt(mul(x[0],x[1]),0),and(x[2],ne(y,neg(x[1])))) </intension>
  </constraints>
</instance>"#;

#[test]
fn every_version_matches_the_oracle() {
    let cfg = VerifyConfig::default();
    for (xml, family) in [(TERNARY, Family::Extensional), (INTENSIONAL, Family::Intensional)] {
        let csp = parse_document(xml).unwrap();
        let r = differential_check(&csp, &all_versions(family), &cfg).unwrap();
        assert_eq!(r.status, VerifyStatus::Pass, "{:?}", r.mismatches);
        assert_eq!(r.assignments_checked as u128, csp.search_space());
        assert!(r.oracle_accepted > 0);
        assert!(r.accepting_sets_agree());
        assert_eq!(r.accepting.len(), family.version_count() as usize);
    }
}

#[test]
fn injected_fault_is_detected() {
    let csp = parse_document(INTENSIONAL).unwrap();
    let versions = [
        version_to_spec(Family::Intensional, 1).unwrap(),
        version_to_spec(Family::Intensional, 2).unwrap(),
    ];
    let corrupt = |c: &_, s: csp2c_core::TransformSpec| {
        let mut p = emit_concrete_driver(c, s)?;
        if s.version() == Some(2) {
            let line = encoding_section(&p.source)
                .into_iter()
                .find(|l| l.contains("!="))
                .unwrap()
                .to_string();
            p.source = p.source.replacen(&line, &line.replacen("!=", "==", 1), 1);
        }
        Ok(p)
    };
    let cfg = VerifyConfig::default();
    let r = differential_check_with(&csp, &versions, &cfg, corrupt).unwrap();
    assert_eq!(r.status, VerifyStatus::Fail);
    assert!(r.mismatches.iter().all(|m| m.version == "I2"));
    assert!(!cross_version_equivalence_with(&csp, &versions, &cfg, corrupt).unwrap());
}
