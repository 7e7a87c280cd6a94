use bdod_core::geometry::{Triangle, Vec3};
use bdod_core::quadrature::{near_singular_integral, singular_panel_integral, AdaptiveOptions};
use num_complex::Complex64 as C64;

const FOUR_PI: f64 = 4.0 * std::f64::consts::PI;

/// Composite Simpson rule with `n` (even) intervals.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// `int 1/(4 pi |x - y|) dy` over a triangle in the plane z = 0 for a target
/// at height `h` above the in-plane point `p` (inside the triangle), with the
/// radial integral done in closed form: `int_0^R rho / sqrt(rho^2 + h^2)`.
fn polar_reference(tri: &Triangle, p: Vec3, h: f64) -> f64 {
    let mut total = 0.0;
    for (a, b) in [(tri.a, tri.b), (tri.b, tri.c), (tri.c, tri.a)] {
        let (ua, ub) = (a - p, b - p);
        let (ta, tb) = (ua.y.atan2(ua.x), ub.y.atan2(ub.x));
        let mut dt = tb - ta;
        if dt < 0.0 {
            dt += 2.0 * std::f64::consts::PI;
        }
        // Distance from p to the edge line and the direction of its foot.
        let e = (b - a).normalized();
        let foot = ua - e * ua.dot(e);
        let (d, tf) = (foot.norm(), foot.y.atan2(foot.x));
        let radial = |t: f64| {
            let r = d / (t - tf).cos();
            (r * r + h * h).sqrt() - h
        };
        total += simpson(radial, ta, ta + dt, 200_000);
    }
    total / FOUR_PI
}

#[test]
fn singular_integral_at_right_angle_vertex() {
    let tri = Triangle::new(Vec3::ZERO, Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0));
    let v = singular_panel_integral(&tri, Vec3::ZERO).unwrap();
    // int_0^{pi/2} dtheta / (cos + sin) = sqrt(2) ln(1 + sqrt(2)).
    let exact = 2f64.sqrt() * (1.0 + 2f64.sqrt()).ln() / FOUR_PI;
    assert!((v - exact).abs() < 1e-6 * exact, "{v} {exact}");
}

#[test]
fn singular_integral_at_interior_point() {
    let tri = Triangle::new(Vec3::ZERO, Vec3::new(1.0, 0.1, 0.0), Vec3::new(0.3, 0.8, 0.0));
    let p = Vec3::new(0.45, 0.3, 0.0);
    let v = singular_panel_integral(&tri, p).unwrap();
    let exact = polar_reference(&tri, p, 0.0);
    assert!((v - exact).abs() < 1e-8 * exact, "{v} {exact}");
}

#[test]
fn near_singular_integral_at_tenth_of_diameter() {
    let tri = Triangle::new(Vec3::ZERO, Vec3::new(1.0, 0.1, 0.0), Vec3::new(0.3, 0.8, 0.0));
    let p = tri.centroid();
    let h = 0.1 * tri.diameter();
    let x = p + Vec3::new(0.0, 0.0, h);
    let v = near_singular_integral(
        &tri,
        x,
        |y| C64::new(1.0 / (FOUR_PI * (x - y).norm()), 0.0),
        AdaptiveOptions::default(),
    )
    .unwrap();
    let exact = polar_reference(&tri, p, h);
    assert!((v.re - exact).abs() < 1e-5 * exact, "{} {exact}", v.re);
    assert_eq!(v.im, 0.0);
}
