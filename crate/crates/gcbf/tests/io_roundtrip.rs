use gcbf::cloud_io::{
    load_cloud, read_dataset_csv, read_points_csv, write_cloud_csv, write_dataset_csv,
    write_points_csv,
};
use gcbf::field_file::{read_field, write_field};
use gcbf::model_file::{load_model, save_model};
use gcbf_core::cbf::AnyModel;
use gcbf_core::eval::ScalarField;
use gcbf_core::pointcloud::make_safety_samples;
use gcbf_core::shapes::sphere_cloud;
use gcbf_core::{
    GpModel, KernelFamily, KernelSpec, Observations, PointCloud, SparseGpModel, SurfaceModel, Vec3,
};
use proptest::prelude::*;

fn point() -> impl Strategy<Value = Vec3> {
    (-10.0..10.0f64, -10.0..10.0f64, -10.0..10.0f64).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn cloud() -> impl Strategy<Value = PointCloud> {
    prop::collection::vec((point(), point()), 1..60).prop_filter_map("zero normal", |v| {
        let (p, n): (Vec<_>, Vec<_>) = v.into_iter().unzip();
        PointCloud::new(p, n).ok()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn cloud_csv_round_trips_bit_for_bit(c in cloud()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        write_cloud_csv(&path, &c).unwrap();
        let back = load_cloud(&path, None).unwrap();
        prop_assert_eq!(back.points(), c.points());
        // Stored normals are already unit length, so renormalizing may move
        // them by an ulp at most.
        for (a, b) in back.normals().iter().zip(c.normals()) {
            prop_assert!((a - b).norm() < 1e-15);
        }
    }

    #[test]
    fn points_csv_round_trips(p in prop::collection::vec(point(), 1..80)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        write_points_csv(&path, &p).unwrap();
        prop_assert_eq!(read_points_csv(&path).unwrap(), p);
    }

    #[test]
    fn dataset_csv_round_trips(n in 4usize..40, seed in 0u64..1000) {
        let c = sphere_cloud(Vec3::new(0.1, 0.2, 0.3), 0.4, 60);
        let d = make_safety_samples(&c, n, n / 2, n / 4, 0.02, seed).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        write_dataset_csv(&path, &d).unwrap();
        prop_assert_eq!(read_dataset_csv(&path).unwrap(), d);
    }

    #[test]
    fn field_round_trips(
        origin in point(),
        dims in (2usize..6, 2usize..6, 2usize..6),
        h in 0.01..1.0f64,
        seed in any::<u32>(),
    ) {
        let dims = [dims.0, dims.1, dims.2];
        let f = ScalarField::from_fn(origin, Vec3::new(h, 2.0 * h, 0.5 * h), dims, |p| {
            (p.x * 1.3 + p.y * 0.7 + f64::from(seed) * 1e-3).sin() * p.z
        }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.txt");
        write_field(&path, &f).unwrap();
        prop_assert_eq!(read_field(&path).unwrap(), f);
    }

    #[test]
    fn reloaded_models_predict_identically(
        matern in any::<bool>(),
        l in 0.2..1.0f64,
        data in prop::collection::vec((point(), -1.0..1.0f64), 5..40),
        queries in prop::collection::vec(point(), 10),
        seed in 0u64..50,
    ) {
        let family = if matern { KernelFamily::Matern32 } else { KernelFamily::SquaredExp };
        let spec = KernelSpec::isotropic(family, l * 5.0, 1.3, 0.02);
        let (x, y): (Vec<Vec3>, Vec<f64>) = data.into_iter().unzip();
        let obs = Observations::new(&x, &y).unwrap();
        let full = AnyModel::Full(GpModel::fit(spec.clone(), obs).unwrap());
        let sparse = AnyModel::Sparse(SparseGpModel::fit(spec, obs, x.len() / 2, seed).unwrap());
        let dir = tempfile::tempdir().unwrap();
        for (name, m) in [("full.json", full), ("sparse.json", sparse)] {
            let path = dir.path().join(name);
            save_model(&path, &m, None).unwrap();
            let back = load_model(&path).unwrap();
            for q in &queries {
                let (m0, v0) = m.predict(q);
                let (m1, v1) = back.predict(q);
                prop_assert!((m0 - m1).abs() <= 1e-12 && (v0 - v1).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn sparse_documents_record_pseudo_inputs() {
    let c = sphere_cloud(Vec3::zeros(), 0.5, 40);
    let d = make_safety_samples(&c, 40, 20, 20, 0.05, 1).unwrap();
    let m = SparseGpModel::fit(
        KernelSpec::squared_exp_iso(0.3, 1.0, 0.01),
        Observations::from(&d),
        16,
        4,
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    save_model(&path, &AnyModel::Sparse(m.clone()), None).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["format_version"], 1);
    assert_eq!(v["kind"], "sparse");
    assert_eq!(v["pseudo_inputs"].as_array().unwrap().len(), 16);
    assert_eq!(load_model(&path).unwrap().centers(), m.pseudo_inputs());
}
