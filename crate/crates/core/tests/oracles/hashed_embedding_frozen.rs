// @generated by hashed_embedding.py
pub const ORACLE_AAAA: &[(usize, f64)] = &[(290, 0.8944271909999159), (345, -0.4472135954999579)];
pub const ORACLE_ZZZZ: &[(usize, f64)] = &[(261, -0.4472135954999579), (285, -0.8944271909999159)];
pub const ORACLE_DIST_AZ: f64 = 1.414213562373095;
