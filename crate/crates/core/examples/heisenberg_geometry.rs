//! Group law, Koranyi gauge and ball volumes on H^1.
use planelike::heis::{
    ball_volume_estimate, build_integer_base, group_inv, group_mul, koranyi_dist, koranyi_gauge,
    parse_rational, GroupPoint, KoranyiBall,
};

fn main() -> planelike::Result<()> {
    let a = GroupPoint::new(vec![1.0, 0.0], 0.0);
    let b = GroupPoint::new(vec![0.0, 1.0], 0.0);
    let ab = group_mul(&a, &b)?;
    let ba = group_mul(&b, &a)?;
    println!("a*b = {:?}, b*a = {:?}", ab, ba);
    println!("a*a^-1 = {:?}", group_mul(&a, &group_inv(&a))?);
    println!(
        "|a*b| = {:.6}, d(a, b) = {:.6}",
        koranyi_gauge(&ab),
        koranyi_dist(&a, &b)?
    );

    let exact = std::f64::consts::PI.powi(2) / 2.0;
    for r in [1.0, 2.0, 4.0] {
        let ball = KoranyiBall::new(GroupPoint::new(vec![0.3, -1.2], 0.7), r)?;
        let v = ball_volume_estimate(&ball, 1_000_000, 7)?;
        println!(
            "r = {r}: volume {v:.4}, r^4 * pi^2 / 2 = {:.4}",
            exact * r.powi(4)
        );
    }

    for omega in [["1", "0"], ["1", "2"], ["2", "3"]] {
        let q: Vec<_> = omega
            .iter()
            .map(|s| parse_rational(s))
            .collect::<Result<_, _>>()?;
        let base = build_integer_base(&q)?;
        let ks: Vec<_> = base.vectors().iter().map(|k| k.0.clone()).collect();
        println!(
            "omega = ({}, {}): lattice basis {:?}, theta = {}",
            omega[0],
            omega[1],
            ks,
            base.theta()
        );
    }
    Ok(())
}
