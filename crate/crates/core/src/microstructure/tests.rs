use super::*;
use crate::grid::spatial_stats;
use crate::models::{Component, Family};
use crate::synthesis::simulate_field;
use proptest::prelude::*;

const EPS: f64 = 1e-12;

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn brute_force(seeds: &[(f64, f64)], spec: &GridSpec) -> Vec<usize> {
    let mut out = Vec::new();
    for j in 0..spec.ny {
        for i in 0..spec.nx {
            let (x, y) = (spec.x(i), spec.y(j));
            let d: Vec<f64> = seeds.iter().map(|s| (x - s.0).powi(2) + (y - s.1).powi(2)).collect();
            let min = d.iter().cloned().fold(f64::INFINITY, f64::min);
            out.push(d.iter().position(|&v| v == min).unwrap());
        }
    }
    out
}

#[test]
fn single_grain_owns_everything() {
    let spec = GridSpec::new(10, 7, 1.0, 1.0).unwrap();
    let t = voronoi_tessellation(1, spec, 3).unwrap();
    assert!(t.grain_map.iter().all(|&g| g == 0));
    assert_eq!(t.node_counts(), vec![70]);
}

#[test]
fn quadrant_seeds() {
    let spec = GridSpec::new(8, 8, 1.0, 1.0).unwrap();
    let seeds = vec![(1.5, 1.5), (5.5, 1.5), (1.5, 5.5), (5.5, 5.5)];
    let t = Tessellation::from_seeds(seeds.clone(), spec).unwrap();
    assert_eq!(t.grain_map, brute_force(&seeds, &spec));
    for j in 0..8 {
        for i in 0..8 {
            assert_eq!(t.grain_at(i, j), (i / 4) + 2 * (j / 4));
        }
    }
    assert_eq!(t.node_counts(), vec![16; 4]);
}

#[test]
fn ties_go_to_lowest_index() {
    let spec = GridSpec::new(3, 2, 1.0, 1.0).unwrap();
    // node x = 1 is equidistant from both seeds
    let t = Tessellation::from_seeds(vec![(2.0, 0.5), (0.0, 0.5)], spec).unwrap();
    assert_eq!(t.grain_at(1, 0), 0);
    assert_eq!(t.grain_at(0, 0), 1);
    let dup = Tessellation::from_seeds(vec![(0.0, 0.0), (0.0, 0.0)], spec);
    assert!(matches!(dup, Err(Error::DegenerateTessellation { empty: 1, .. })));
}

#[test]
fn hundred_grains_are_all_nonempty() {
    let spec = GridSpec::new(100, 100, 10.0, 10.0).unwrap();
    let t = voronoi_tessellation(100, spec, 42).unwrap();
    let counts = t.node_counts();
    assert!(counts.iter().all(|&c| c >= 1));
    assert_eq!(counts.iter().sum::<usize>(), 10_000);
    assert_eq!(counts.iter().sum::<usize>() as f64 / 100.0, 100.0);
    assert_eq!(t.grain_map, brute_force(&t.seeds, &spec));
    assert_eq!(t.domain, (1000.0, 1000.0));
    assert_eq!(voronoi_tessellation(100, spec, 42).unwrap(), t);
}

#[test]
fn too_many_grains() {
    let spec = GridSpec::new(2, 2, 1.0, 1.0).unwrap();
    assert!(voronoi_tessellation(5, spec, 0).is_err());
    assert!(voronoi_tessellation(0, spec, 0).is_err());
    // four grains on four nodes need one seed per node
    let t = voronoi_tessellation(4, spec, 0).unwrap();
    assert_eq!(t.node_counts(), vec![1; 4]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn grain_map_matches_brute_force(n in 1usize..20, nx in 2usize..40, ny in 2usize..40, seed in 0u64..1000) {
        let spec = GridSpec::new(nx, ny, 1.5, 0.5).unwrap();
        prop_assume!(n <= spec.len());
        let t = voronoi_tessellation(n, spec, seed).unwrap();
        prop_assert_eq!(&t.grain_map, &brute_force(&t.seeds, &spec));
    }
}

#[test]
fn grain_diameter() {
    let d = equivalent_grain_diameter(1.0e6, 100).unwrap();
    assert_eq!(format!("{d:.1}"), "112.8");
    assert!((equivalent_grain_diameter(PI / 4.0, 1).unwrap() - 1.0).abs() < 1e-15);
    let e = equivalent_grain_diameter(640_000.0, 64).unwrap();
    assert!((e - d).abs() < 1e-12);
    assert!(equivalent_grain_diameter(0.0, 3).is_err());
    assert!(equivalent_grain_diameter(1.0, 0).is_err());
}

#[test]
fn orientations_are_deterministic_and_in_range() {
    let a = sample_orientations(500, 9, OrientationLaw::SphereUniform).unwrap();
    assert_eq!(a, sample_orientations(500, 9, OrientationLaw::SphereUniform).unwrap());
    assert_ne!(a, sample_orientations(500, 10, OrientationLaw::SphereUniform).unwrap());
    for o in &a {
        assert!((0.0..2.0 * PI).contains(&o.phi1));
        assert!((0.0..2.0 * PI).contains(&o.phi2));
        assert!((0.0..=PI).contains(&o.phi));
    }
    assert!(sample_orientations(0, 1, OrientationLaw::SphereUniform).is_err());
}

#[test]
fn sphere_uniform_cosine_mean() {
    let o = sample_orientations(100_000, 5, OrientationLaw::SphereUniform).unwrap();
    let m = o.iter().map(|o| o.phi.cos()).sum::<f64>() / o.len() as f64;
    assert!(m.abs() < 0.01, "{m}");
}

#[test]
fn literal_uniform_deciles_are_flat() {
    // 10⁶ draws keep the per-decile noise near 0.3%
    let n = 1_000_000;
    let o = sample_orientations(n, 6, OrientationLaw::LiteralUniform).unwrap();
    let mut bins = [0usize; 10];
    for x in &o {
        bins[((x.phi / PI * 10.0) as usize).min(9)] += 1;
    }
    for b in bins {
        let rel = (b as f64 - n as f64 / 10.0).abs() / (n as f64 / 10.0);
        assert!(rel < 0.02, "{bins:?}");
    }
}

#[test]
fn slip_table_is_well_formed() {
    let s = slip_systems_bcc24();
    assert_eq!(s.len(), 24);
    assert_eq!(s.iter().filter(|x| x.family == SlipFamily::Planes110).count(), 12);
    assert_eq!(s.iter().filter(|x| x.family == SlipFamily::Planes112).count(), 12);
    for x in &s {
        assert!((dot(x.normal, x.normal) - 1.0).abs() < EPS);
        assert!((dot(x.direction, x.direction) - 1.0).abs() < EPS);
        assert!(dot(x.normal, x.direction).abs() < EPS);
    }
    for a in 0..24 {
        for b in a + 1..24 {
            let (p, q) = (&s[a], &s[b]);
            let same_n = (dot(p.normal, q.normal).abs() - 1.0).abs() < EPS;
            let same_m = (dot(p.direction, q.direction).abs() - 1.0).abs() < EPS;
            assert!(!(same_n && same_m), "systems {a} and {b} coincide");
        }
    }
}

#[test]
fn schmid_tensor_properties() {
    for sys in slip_systems_bcc24() {
        let r = schmid_tensor(&sys);
        assert!((r[0][0] + r[1][1] + r[2][2]).abs() < EPS);
        for (i, row) in r.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                assert_eq!(*v, r[j][i]);
            }
        }
    }
    let sys = SlipSystem {
        normal: unit([0.0, 1.0, 1.0]),
        direction: unit([1.0, 1.0, -1.0]),
        family: SlipFamily::Planes110,
    };
    let r = schmid_tensor(&sys);
    assert!((r[2][2] + 1.0 / 6f64.sqrt()).abs() < EPS);
    assert!((r[2][2] + 0.40825).abs() < 1e-5);
}

#[test]
fn zero_and_hydrostatic_stress() {
    let o = sample_orientations(5, 1, OrientationLaw::SphereUniform).unwrap();
    let mut hydro = [[0.0; 3]; 3];
    for (i, row) in hydro.iter_mut().enumerate() {
        row[i] = 3.5;
    }
    for sys in slip_systems_bcc24() {
        for or in &o {
            assert_eq!(resolved_shear(&[[0.0; 3]; 3], &sys, or), 0.0);
            assert!(resolved_shear(&hydro, &sys, or).abs() < EPS);
        }
    }
}

#[test]
fn schmid_factors_under_axis_three_tension() {
    let s = slip_systems_bcc24();
    let load = uniaxial(2);
    let id = Orientation::IDENTITY;
    let family_max = |f: SlipFamily| {
        s.iter()
            .filter(|x| x.family == f)
            .map(|x| resolved_shear(&load, x, &id).abs())
            .fold(0.0, f64::max)
    };
    // {110} planes reach 1/√6; the {112} family reaches 2/√18
    assert!((family_max(SlipFamily::Planes110) - 1.0 / 6f64.sqrt()).abs() < EPS);
    assert!((family_max(SlipFamily::Planes112) - 2.0 / 18f64.sqrt()).abs() < EPS);
    assert!((max_schmid_factor(&id, &s) - 2.0 / 18f64.sqrt()).abs() < EPS);
}

#[test]
fn rotation_is_orthonormal_and_bunge() {
    let o = Orientation { phi1: 0.3, phi: 1.1, phi2: -0.7 };
    let g = o.matrix();
    for i in 0..3 {
        for j in 0..3 {
            let d: f64 = (0..3).map(|k| g[i][k] * g[j][k]).sum();
            assert!((d - if i == j { 1.0 } else { 0.0 }).abs() < EPS);
        }
    }
    // a pure phi1 rotation turns the crystal x axis by phi1 about sample z
    let r = Orientation { phi1: 0.5, phi: 0.0, phi2: 0.0 };
    let v = r.to_sample([1.0, 0.0, 0.0]);
    assert!((v[0] - 0.5f64.cos()).abs() < EPS && (v[1] - 0.5f64.sin()).abs() < EPS);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn resolved_shear_is_linear(
        a in -3.0f64..3.0, b in -3.0f64..3.0,
        s1 in proptest::array::uniform6(-100.0f64..100.0),
        s2 in proptest::array::uniform6(-100.0f64..100.0),
        angles in proptest::array::uniform3(0.0f64..std::f64::consts::TAU),
        k in 0usize..24,
    ) {
        let sym = |v: [f64; 6]| [[v[0], v[3], v[4]], [v[3], v[1], v[5]], [v[4], v[5], v[2]]];
        let (t1, t2) = (sym(s1), sym(s2));
        let mut c = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                c[i][j] = a * t1[i][j] + b * t2[i][j];
            }
        }
        let o = Orientation { phi1: angles[0], phi: angles[1] / 2.0, phi2: angles[2] };
        let sys = slip_systems_bcc24()[k];
        let lhs = resolved_shear(&c, &sys, &o);
        let rhs = a * resolved_shear(&t1, &sys, &o) + b * resolved_shear(&t2, &sys, &o);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs().max(rhs.abs())));
    }
}

fn params(gain: f64, sigma: f64, seed: u64) -> SurrogateParams {
    SurrogateParams {
        base_mean: 720.0,
        schmid_gain: gain,
        intra_model: PsdModel::single(Family::Gaussian, Component::new(sigma, 30.0, 30.0)).unwrap(),
        seed,
    }
}

#[test]
fn surrogate_degenerate_cases() {
    let spec = GridSpec::new(40, 40, 10.0, 10.0).unwrap();
    let t = voronoi_tessellation(12, spec, 1).unwrap();
    let o = sample_orientations(12, 1, OrientationLaw::SphereUniform).unwrap();
    let flat = surrogate_stress_field(&t, &o, &params(0.0, 0.0, 2)).unwrap();
    assert!(flat.values().iter().all(|&v| v == 720.0));

    let p = params(0.0, 40.0, 2);
    let f = surrogate_stress_field(&t, &o, &p).unwrap();
    let w = simulate_field(&intra_plan(&p, spec)).unwrap();
    let expect: Vec<f64> = w.values().iter().map(|v| 720.0 + v).collect();
    assert_eq!(f.values(), &expect[..]);

    assert!(surrogate_stress_field(&t, &o[..11], &p).is_err());
}

#[test]
fn surrogate_plateaus_follow_grains() {
    let spec = GridSpec::new(30, 30, 10.0, 10.0).unwrap();
    let t = voronoi_tessellation(9, spec, 5).unwrap();
    let o = sample_orientations(9, 5, OrientationLaw::SphereUniform).unwrap();
    let f = surrogate_stress_field(&t, &o, &params(300.0, 0.0, 0)).unwrap();
    let g = grain_response(&o);
    assert!(g.iter().sum::<f64>().abs() < 1e-12);
    for (k, &v) in f.values().iter().enumerate() {
        assert!((v - 720.0 - 300.0 * g[t.grain_map[k]]).abs() < 1e-9);
    }
}

#[test]
fn surrogate_cv_calibration() {
    let spec = GridSpec::new(100, 100, 10.0, 10.0).unwrap();
    let cfg = SurrogateConfig::default();
    for seed in 0..5 {
        let t = voronoi_tessellation(100, spec, seed).unwrap();
        let o = sample_orientations(100, seed, cfg.orientation_law).unwrap();
        let f = surrogate_stress_field(&t, &o, &cfg.params(seed).unwrap()).unwrap();
        let cv = spatial_stats(&f).cv.unwrap();
        assert!((0.09..=0.13).contains(&cv), "seed {seed}: cv {cv}");
    }
}

#[test]
fn config_and_orientation_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("s.json");
    std::fs::write(
        &cfg_path,
        r#"{"base_mean": 700, "schmid_gain": 10,
            "intra": {"family": "exponential", "sigma": 5, "lx": 20, "ly": 20},
            "orientation_law": "literal-uniform"}"#,
    )
    .unwrap();
    let cfg = load_surrogate_config(&cfg_path).unwrap();
    assert_eq!(cfg.orientation_law, OrientationLaw::LiteralUniform);
    assert_eq!(cfg.params(4).unwrap().intra_model.parameters(), vec![5.0, 20.0, 20.0, 0.0, 0.0]);

    let o = sample_orientations(7, 3, OrientationLaw::SphereUniform).unwrap();
    let p = dir.path().join("o.csv");
    save_orientations(&o, &p).unwrap();
    let text = std::fs::read_to_string(&p).unwrap();
    assert!(text.starts_with("grain,phi1,Phi,phi2\n0,"));
    assert_eq!(load_orientations(&p).unwrap(), o);
}
