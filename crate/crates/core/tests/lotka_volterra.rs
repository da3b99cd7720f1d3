use chronos::erk::builtin_table;
use chronos::harness::lotka_volterra::*;
use chronos::harness::report::fit_slope;

#[test]
fn adjoint_gradients_match_discrete_finite_differences() {
    let fd = fd_gradient_check(&lv_table(4).unwrap(), 0.005, 1e-6, LV_CHECKPOINT_INTERVAL).unwrap();
    let (e_y0, e_p) = fd.relative_errors();
    assert!(e_y0 <= 1e-5 && e_p <= 1e-5, "{e_y0:e} {e_p:e}");
}

#[test]
fn gradient_slopes_match_method_order() {
    let reference = LvReference::compute().unwrap();
    let rows = run_lotka_volterra(&[3, 4, 5], &LV_STEP_SIZES, &reference).unwrap();
    assert_eq!(rows.len(), 12);
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(r.h, LV_STEP_SIZES[i % 4]);
        assert_eq!(r.order, 3 + i / 4);
    }
    for order in [3, 4, 5] {
        let s = lv_slopes(&rows, order, &reference);
        for q in [1, 2] {
            let v = s[q].unwrap();
            assert!((v - order as f64).abs() <= 0.3, "order {order} quantity {q}: {v}");
        }
    }
}

#[test]
fn forcing_method_is_first_order() {
    let reference = LvReference::compute().unwrap();
    let steps: Vec<f64> = (6..12).map(|i| 0.5f64.powi(i)).collect();
    let errors = forcing_convergence("erk2-3stage", &steps, &reference.y_final).unwrap();
    let slope = fit_slope(&errors).unwrap();
    assert!((slope - 1.0).abs() <= 0.2, "{slope}");
}

#[test]
fn study_tables_have_the_nominal_orders() {
    for order in [3, 4, 5] {
        assert_eq!(lv_table(order).unwrap().order(), order);
    }
    assert!(lv_table(2).is_err());
    assert_eq!(builtin_table("zonneveld4").unwrap().b(), builtin_table("rk4").unwrap().b().iter().chain([0.0].iter()).cloned().collect::<Vec<_>>().as_slice());
}
