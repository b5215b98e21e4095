use dar_core::grid_scan::Position2D;
use dar_core::rope::{apply_rotation, rotation_table, Position4D, RopeMode, RotationTable};
use ndarray::{Array1, Array2};
use proptest::prelude::*;

const HEAD_DIM: usize = 16;

fn pos() -> impl Strategy<Value = Position2D> {
    (-40i32..40, -40i32..40).prop_map(|(x, y)| Position2D { x, y })
}

fn pos4() -> impl Strategy<Value = Position4D> {
    (pos(), pos()).prop_map(|(cur, nxt)| Position4D { cur, nxt })
}

fn vector() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, HEAD_DIM)
}

fn shift(p: Position2D, d: Position2D) -> Position2D {
    Position2D {
        x: p.x + d.x,
        y: p.y + d.y,
    }
}

fn rotate(v: &[f64], table: &RotationTable, row: usize) -> Array1<f64> {
    let mut x = v.to_vec();
    table.rotate_in_place(row, &mut x, false);
    Array1::from(x)
}

fn modes() -> impl Strategy<Value = RopeMode> {
    prop_oneof![Just(RopeMode::TwoD), Just(RopeMode::FourD)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn rotation_preserves_norm(mode in modes(), p in pos4(), v in vector()) {
        let table = rotation_table(&[p], HEAD_DIM, mode).unwrap();
        let x = Array2::from_shape_vec((1, HEAD_DIM), v.clone()).unwrap();
        let y = apply_rotation(x.view(), &table).unwrap();
        let n0: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        let n1: f64 = y.iter().map(|a| a * a).sum::<f64>().sqrt();
        prop_assert!((n0 - n1).abs() <= 1e-10 * n0.max(1.0));
    }

    #[test]
    fn scores_depend_only_on_relative_position(
        mode in modes(), a in pos4(), b in pos4(), d in pos(), q in vector(), k in vector()
    ) {
        let sa = Position4D { cur: shift(a.cur, d), nxt: shift(a.nxt, d) };
        let sb = Position4D { cur: shift(b.cur, d), nxt: shift(b.nxt, d) };
        let table = rotation_table(&[a, b, sa, sb], HEAD_DIM, mode).unwrap();
        let s0 = rotate(&q, &table, 0).dot(&rotate(&k, &table, 1));
        let s1 = rotate(&q, &table, 2).dot(&rotate(&k, &table, 3));
        prop_assert!((s0 - s1).abs() <= 1e-8, "{s0} vs {s1}");
    }

    #[test]
    fn four_d_rows_see_the_next_position(cur in pos(), n1 in pos(), n2 in pos()) {
        prop_assume!(n1 != n2);
        let table = rotation_table(
            &[Position4D { cur, nxt: n1 }, Position4D { cur, nxt: n2 }],
            HEAD_DIM,
            RopeMode::FourD,
        ).unwrap();
        let differs = (0..table.slots()).any(|j| {
            let (c1, s1) = table.entry(0, j);
            let (c2, s2) = table.entry(1, j);
            (c1 - c2).abs() > 1e-12 || (s1 - s2).abs() > 1e-12
        });
        prop_assert!(differs);
    }

    #[test]
    fn two_d_ignores_the_next_position(cur in pos(), n1 in pos(), n2 in pos()) {
        let table = rotation_table(
            &[Position4D { cur, nxt: n1 }, Position4D { cur, nxt: n2 }],
            HEAD_DIM,
            RopeMode::TwoD,
        ).unwrap();
        for j in 0..table.slots() {
            prop_assert_eq!(table.entry(0, j), table.entry(1, j));
        }
    }

    #[test]
    fn conjugate_undoes_rotation(mode in modes(), p in pos4(), v in vector()) {
        let table = rotation_table(&[p], HEAD_DIM, mode).unwrap();
        let mut x = v.clone();
        table.rotate_in_place(0, &mut x, false);
        table.rotate_in_place(0, &mut x, true);
        for (a, b) in x.iter().zip(&v) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
