//! Quadrature rules and closed-form power-weight integrals.
//!
//! Power weights `y^gamma` are integrated against polynomials in closed form;
//! everything else goes through Gauss rules. The first slab of a graded mesh
//! touches the weight singularity at `y = 0`, and [`singular_slab_quad`]
//! absorbs `y^gamma` there through the substitution `u = (y/b)^(1+gamma)`.

use crate::error::{Error, Result};
use crate::weight::{PowerWeight, Weight};

/// A one-dimensional rule: `sum(weights[i] * g(nodes[i]))` approximates an
/// integral over `interval`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quad1D {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub interval: (f64, f64),
}

impl Quad1D {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, mut g: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * g(x))
            .sum()
    }

    /// Affine map of a rule on `(-1, 1)` (or any interval) onto `(lo, hi)`.
    pub fn mapped(&self, lo: f64, hi: f64) -> Quad1D {
        let (a, b) = self.interval;
        let scale = (hi - lo) / (b - a);
        Quad1D {
            nodes: self.nodes.iter().map(|&x| lo + (x - a) * scale).collect(),
            weights: self.weights.iter().map(|&w| w * scale).collect(),
            interval: (lo, hi),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }
}

/// Exact `∫_{y0}^{y1} y^(gamma+k) dy`.
pub fn power_integral(y0: f64, y1: f64, gamma: f64, k: u32) -> Result<f64> {
    if !(y0 >= 0.0) || !(y1 > y0) {
        return Err(Error::Domain(format!(
            "power_integral needs 0 <= y0 < y1, got ({y0}, {y1})"
        )));
    }
    let p = gamma + k as f64 + 1.0;
    if y0 == 0.0 {
        if p <= 0.0 {
            return Err(Error::DivergentIntegral(format!(
                "∫_0 y^{} dy diverges at the origin",
                p - 1.0
            )));
        }
        return Ok(y1.powf(p) / p);
    }
    let log_ratio = (y1 / y0).ln();
    if p == 0.0 {
        return Ok(log_ratio);
    }
    Ok(y0.powf(p) * (p * log_ratio).exp_m1() / p)
}

/// Shifted moments `∫_{y0}^{y1} y^gamma (y - y0)^k dy` for `k = 0, 1, 2`.
///
/// Evaluated without catastrophic cancellation on thin slabs far from the
/// origin (binomial series in `(y1 - y0)/y0`), and by expanding into
/// [`power_integral`] terms otherwise.
pub fn shifted_moments(y0: f64, y1: f64, gamma: f64) -> Result<[f64; 3]> {
    let width = y1 - y0;
    if y0 > 0.0 && width / y0 <= 0.5 {
        let tau = width / y0;
        let scale = y0.powf(gamma);
        let mut out = [0.0; 3];
        for (k, slot) in out.iter_mut().enumerate() {
            let mut binom = 1.0;
            let mut tau_m = 1.0;
            let mut sum = 0.0;
            for m in 0..400usize {
                let term = binom * tau_m / (m + k + 1) as f64;
                sum += term;
                if term.abs() <= 1e-18 * sum.abs() && m > 2 {
                    break;
                }
                binom *= (gamma - m as f64) / (m + 1) as f64;
                tau_m *= tau;
            }
            *slot = scale * width.powi(k as i32 + 1) * sum;
        }
        return Ok(out);
    }
    let p0 = power_integral(y0, y1, gamma, 0)?;
    let p1 = power_integral(y0, y1, gamma, 1)?;
    let p2 = power_integral(y0, y1, gamma, 2)?;
    Ok([p0, p1 - y0 * p0, p2 - 2.0 * y0 * p1 + y0 * y0 * p0])
}

/// Gauss–Legendre rule on `(-1, 1)`, exact for polynomials of degree `2*order - 1`.
pub fn gauss_legendre(order: usize) -> Result<Quad1D> {
    if !(1..=64).contains(&order) {
        return Err(Error::UnsupportedOrder {
            order,
            supported: "1..=64",
        });
    }
    let n = order;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Ok(Quad1D {
        nodes,
        weights,
        interval: (-1.0, 1.0),
    })
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss–Legendre rule mapped onto `(lo, hi)`.
pub fn gauss_on(lo: f64, hi: f64, order: usize) -> Result<Quad1D> {
    Ok(gauss_legendre(order)?.mapped(lo, hi))
}

/// Rule on `(0, b)` that absorbs the weight `y^gamma`: `sum w_i g(y_i)`
/// approximates `∫_0^b y^gamma g(y) dy`.
pub fn singular_slab_quad(b: f64, gamma: f64, order: usize) -> Result<Quad1D> {
    if gamma <= -1.0 {
        return Err(Error::DivergentIntegral(format!(
            "weight y^{gamma} is not integrable at the origin"
        )));
    }
    if gamma > 0.0 {
        return Err(Error::Domain(format!(
            "singular_slab_quad expects gamma in (-1, 0], got {gamma}; use a plain Gauss rule"
        )));
    }
    if !(b > 0.0) {
        return Err(Error::Domain(format!("slab height must be positive, got {b}")));
    }
    let unit = gauss_legendre(order)?.mapped(0.0, 1.0);
    let p = 1.0 + gamma;
    let factor = b.powf(p) / p;
    Ok(Quad1D {
        nodes: unit.nodes.iter().map(|&u| b * u.powf(1.0 / p)).collect(),
        weights: unit.weights.iter().map(|&w| w * factor).collect(),
        interval: (0.0, b),
    })
}

/// Rule for plain integrals `∫_{y0}^{y1} g(y) dy` whose integrand may behave
/// like `y^gamma` near `y = 0` (`gamma ∈ (-1, 0]`). Slabs away from the origin
/// and `gamma == 0` get plain Gauss–Legendre.
pub fn slab_rule(y0: f64, y1: f64, gamma: f64, order: usize) -> Result<Quad1D> {
    if y0 > 0.0 || gamma == 0.0 {
        return gauss_on(y0, y1, order);
    }
    let mut q = singular_slab_quad(y1, gamma, order)?;
    for (w, &y) in q.weights.iter_mut().zip(&q.nodes) {
        *w *= y.powf(-gamma);
    }
    Ok(q)
}

/// Points and weights on the reference triangle `(0,0), (1,0), (0,1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleRule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

/// Symmetric triangle rules exact for total degree `order ∈ {1, 2, 3, 4}`.
pub fn triangle_quad(order: usize) -> Result<TriangleRule> {
    let rule = match order {
        1 => TriangleRule {
            points: vec![[1.0 / 3.0, 1.0 / 3.0]],
            weights: vec![0.5],
        },
        2 => {
            let a = 1.0 / 6.0;
            let b = 2.0 / 3.0;
            TriangleRule {
                points: vec![[a, a], [b, a], [a, b]],
                weights: vec![1.0 / 6.0; 3],
            }
        }
        3 => {
            // Strang–Fix six-point rule.
            let (a, b, c) = (0.659_027_622_374_092, 0.231_933_368_553_031, 0.109_039_009_072_877);
            let bary = [[a, b, c], [a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]];
            TriangleRule {
                points: bary.iter().map(|l| [l[1], l[2]]).collect(),
                weights: vec![1.0 / 12.0; 6],
            }
        }
        4 => {
            // Dunavant degree-4 six-point rule.
            let a1 = 0.445_948_490_915_964_9;
            let w1 = 0.223_381_589_678_011_5;
            let a2 = 0.091_576_213_509_770_74;
            let w2 = 0.109_951_743_655_321_9;
            let mut points = Vec::with_capacity(6);
            let mut weights = Vec::with_capacity(6);
            for (a, w) in [(a1, w1), (a2, w2)] {
                let b = 1.0 - 2.0 * a;
                points.extend([[a, a], [b, a], [a, b]]);
                weights.extend([0.5 * w; 3]);
            }
            TriangleRule { points, weights }
        }
        _ => {
            return Err(Error::UnsupportedOrder {
                order,
                supported: "1, 2, 3, 4",
            })
        }
    };
    Ok(rule)
}

/// Collapsed (Duffy) tensor Gauss rule on the reference triangle with
/// `order` points per direction; exact for total degree `2*order - 2`.
pub fn triangle_collapsed_gauss(order: usize) -> Result<TriangleRule> {
    let q = gauss_legendre(order)?.mapped(0.0, 1.0);
    let mut points = Vec::with_capacity(order * order);
    let mut weights = Vec::with_capacity(order * order);
    for (u, wu) in q.iter() {
        for (v, wv) in q.iter() {
            points.push([u, v * (1.0 - u)]);
            weights.push(wu * wv * (1.0 - u));
        }
    }
    Ok(TriangleRule { points, weights })
}

/// Axis-aligned box: base extents (zero, one or two directions) times a `y` range.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisBox {
    pub base: Vec<(f64, f64)>,
    pub y: (f64, f64),
}

/// `(avg w)·(avg 1/w)` over a box, the quantity whose supremum over boxes is
/// the strong A₂ constant.
pub fn a2_product(rect: &AxisBox, w: &Weight) -> Result<f64> {
    let (y0, y1) = rect.y;
    if !(y1 > y0) || rect.base.iter().any(|&(a, b)| !(b > a)) {
        return Err(Error::Domain(format!("degenerate box {rect:?}")));
    }
    match w {
        Weight::Power(PowerWeight { gamma }) => {
            // The base directions factor out of both averages.
            let len = y1 - y0;
            let avg_w = power_integral(y0, y1, *gamma, 0)? / len;
            let avg_inv = power_integral(y0, y1, -*gamma, 0)? / len;
            Ok(avg_w * avg_inv)
        }
        Weight::Callback { order, .. } => {
            let mut rules = Vec::with_capacity(rect.base.len() + 1);
            for &(a, b) in &rect.base {
                rules.push(gauss_on(a, b, *order)?);
            }
            rules.push(gauss_on(y0, y1, *order)?);
            let volume: f64 = rect
                .base
                .iter()
                .map(|&(a, b)| b - a)
                .product::<f64>()
                * (y1 - y0);
            let mut sum_w = 0.0;
            let mut sum_inv = 0.0;
            let mut idx = vec![0usize; rules.len()];
            loop {
                let mut point = [0.0; 3];
                let mut weight = 1.0;
                for (d, rule) in rules.iter().enumerate() {
                    let (x, wq) = (rule.nodes[idx[d]], rule.weights[idx[d]]);
                    weight *= wq;
                    if d + 1 == rules.len() {
                        point[2] = x;
                    } else {
                        point[d] = x;
                    }
                }
                let value = w.eval(&point);
                if !(value > 0.0) || !value.is_finite() {
                    return Err(Error::DivergentIntegral(format!(
                        "weight is {value} at {point:?}"
                    )));
                }
                sum_w += weight * value;
                sum_inv += weight / value;
                // odometer increment
                let mut d = 0;
                loop {
                    if d == idx.len() {
                        return Ok((sum_w / volume) * (sum_inv / volume));
                    }
                    idx[d] += 1;
                    if idx[d] < rules[d].len() {
                        break;
                    }
                    idx[d] = 0;
                    d += 1;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn power_integral_examples() {
        assert_relative_eq!(power_integral(0.0, 1.0, 0.0, 0).unwrap(), 1.0);
        assert_relative_eq!(power_integral(0.0, 1.0, -0.5, 0).unwrap(), 2.0, epsilon = 1e-15);
        // (0.5^3.6 - 0.25^3.6)/3.6 evaluated independently with mpmath at 30 digits
        let expected = 0.021_018_907_818_765_256_f64;
        let got = power_integral(0.25, 0.5, 0.6, 2).unwrap();
        assert_relative_eq!(got, expected, max_relative = 1e-12);
    }

    #[test]
    fn power_integral_log_branch_and_divergence() {
        let got = power_integral(1.0, std::f64::consts::E, -1.0, 0).unwrap();
        assert_relative_eq!(got, 1.0, epsilon = 1e-15);
        assert!(matches!(
            power_integral(0.0, 1.0, -1.0, 0),
            Err(Error::DivergentIntegral(_))
        ));
        assert!(matches!(
            power_integral(0.0, 1.0, -1.5, 0),
            Err(Error::DivergentIntegral(_))
        ));
    }

    #[test]
    fn shifted_moments_match_plain_gauss_on_thin_and_wide_slabs() {
        // Oracle: composite Gauss on pieces shrinking geometrically towards
        // y0 = 0, plain Gauss otherwise.
        let oracle = |y0: f64, y1: f64, g: &dyn Fn(f64) -> f64| -> f64 {
            if y0 > 0.0 {
                return gauss_on(y0, y1, 30).unwrap().integrate(g);
            }
            let mut hi = y1;
            let mut sum = 0.0;
            for _ in 0..120 {
                let lo = hi * 0.5;
                sum += gauss_on(lo, hi, 20).unwrap().integrate(g);
                hi = lo;
            }
            sum
        };
        for &(y0, y1) in &[(4.0, 4.01), (1.0, 1.4), (0.3, 1.0), (0.0, 0.2)] {
            for &gamma in &[-0.6, 0.0, 0.6] {
                let m = shifted_moments(y0, y1, gamma).unwrap();
                for k in 0..3 {
                    let r = oracle(y0, y1, &|y: f64| y.powf(gamma) * (y - y0).powi(k as i32));
                    assert_relative_eq!(m[k], r, max_relative = 1e-12);
                }
            }
        }
    }

    #[test]
    fn gauss_legendre_classical_values() {
        let q1 = gauss_legendre(1).unwrap();
        assert_eq!(q1.nodes, vec![0.0]);
        assert_relative_eq!(q1.weights[0], 2.0);
        let q2 = gauss_legendre(2).unwrap();
        assert_relative_eq!(q2.nodes[1], 1.0 / 3f64.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(q2.nodes[0], -1.0 / 3f64.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(q2.weights[0], 1.0, epsilon = 1e-15);
        let q5 = gauss_legendre(5).unwrap();
        assert!(q5.integrate(|x| x.powi(9)).abs() < 1e-14);
        assert!(gauss_legendre(0).is_err());
        assert!(gauss_legendre(65).is_err());
    }

    #[test]
    fn gauss_legendre_exactness_degree() {
        for order in [1usize, 2, 3, 7, 16, 33, 64] {
            let q = gauss_legendre(order).unwrap();
            let sum: f64 = q.weights.iter().sum();
            assert_relative_eq!(sum, 2.0, epsilon = 1e-13);
            for deg in 0..(2 * order).min(40) {
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                let got = q.integrate(|x| x.powi(deg as i32));
                assert!((got - exact).abs() < 1e-13, "order {order} degree {deg}: {got} vs {exact}");
            }
        }
    }

    #[test]
    fn singular_slab_quad_examples() {
        for &(b, gamma) in &[(0.3, -0.6), (1.0, -0.5), (2.5, 0.0), (1e-6, -0.9)] {
            let q = singular_slab_quad(b, gamma, 4).unwrap();
            let sum: f64 = q.weights.iter().sum();
            assert_relative_eq!(sum, b.powf(1.0 + gamma) / (1.0 + gamma), max_relative = 1e-13);
        }
        let q = singular_slab_quad(1.0, -0.5, 16).unwrap();
        let exact = power_integral(0.0, 1.0, -0.5, 1).unwrap();
        assert!((q.integrate(|y| y) - exact).abs() < 1e-10);
        assert_relative_eq!(exact, 2.0 / 3.0, epsilon = 1e-15);
        assert!(singular_slab_quad(1.0, -1.0, 8).is_err());
        assert!(singular_slab_quad(1.0, 0.3, 8).is_err());
    }

    #[test]
    fn singular_slab_quad_cosine_against_refinement_oracle() {
        // Oracle: split (0, 0.1) geometrically towards the origin and use a
        // plain Gauss rule on every piece; the innermost piece is bounded
        // analytically (cos ≈ 1 there).
        let (b, gamma) = (0.1_f64, -0.6_f64);
        let mut reference = 0.0;
        let mut hi = b;
        for _ in 0..80 {
            let lo = hi * 0.5;
            reference += gauss_on(lo, hi, 20)
                .unwrap()
                .integrate(|y| y.powf(gamma) * y.cos());
            hi = lo;
        }
        reference += hi.powf(1.0 + gamma) / (1.0 + gamma);
        let q = singular_slab_quad(b, gamma, 24).unwrap();
        assert!((q.integrate(f64::cos) - reference).abs() < 1e-9);
    }

    #[test]
    fn triangle_rules() {
        let r1 = triangle_quad(1).unwrap();
        assert_eq!(r1.weights, vec![0.5]);
        for order in 1..=4 {
            let r = triangle_quad(order).unwrap();
            let lin: f64 = r
                .points
                .iter()
                .zip(&r.weights)
                .map(|(p, w)| w * (p[0] + p[1]))
                .sum();
            assert_relative_eq!(lin, 1.0 / 3.0, epsilon = 1e-14);
        }
        let r4 = triangle_quad(4).unwrap();
        let got: f64 = r4
            .points
            .iter()
            .zip(&r4.weights)
            .map(|(p, w)| w * p[0] * p[0] * p[1] * p[1])
            .sum();
        assert_relative_eq!(got, 1.0 / 180.0, epsilon = 1e-14);
        assert!(triangle_quad(5).is_err());
    }

    fn factorial(n: u32) -> f64 {
        (1..=n).map(f64::from).product()
    }

    #[test]
    fn triangle_rules_exact_up_to_their_degree() {
        // ∫_T x^a y^b = a! b! / (a + b + 2)!
        for order in 1..=4usize {
            let r = triangle_quad(order).unwrap();
            for a in 0..=order as u32 {
                for b in 0..=(order as u32 - a) {
                    let exact = factorial(a) * factorial(b) / factorial(a + b + 2);
                    let got: f64 = r
                        .points
                        .iter()
                        .zip(&r.weights)
                        .map(|(p, w)| w * p[0].powi(a as i32) * p[1].powi(b as i32))
                        .sum();
                    assert!((got - exact).abs() < 1e-14, "order {order} x^{a} y^{b}");
                }
            }
        }
        let rc = triangle_collapsed_gauss(5).unwrap();
        for a in 0..=8u32 {
            for b in 0..=(8 - a) {
                let exact = factorial(a) * factorial(b) / factorial(a + b + 2);
                let got: f64 = rc
                    .points
                    .iter()
                    .zip(&rc.weights)
                    .map(|(p, w)| w * p[0].powi(a as i32) * p[1].powi(b as i32))
                    .sum();
                assert!((got - exact).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn a2_product_examples() {
        let unit = AxisBox {
            base: vec![(0.0, 1.0)],
            y: (0.0, 1.0),
        };
        let one = Weight::Power(PowerWeight { gamma: 0.0 });
        assert_relative_eq!(a2_product(&unit, &one).unwrap(), 1.0);
        let sqrt = Weight::Power(PowerWeight { gamma: 0.5 });
        assert_relative_eq!(a2_product(&unit, &sqrt).unwrap(), 4.0 / 3.0, epsilon = 1e-14);
        let small = AxisBox {
            base: vec![(0.0, 1.0)],
            y: (0.0, 0.125),
        };
        assert_relative_eq!(
            a2_product(&small, &sqrt).unwrap(),
            a2_product(&unit, &sqrt).unwrap(),
            max_relative = 1e-12
        );
        let divergent = Weight::Power(PowerWeight { gamma: 1.0 });
        assert!(a2_product(&unit, &divergent).is_err());
    }

    #[test]
    fn a2_product_callback_matches_power() {
        let b = AxisBox {
            base: vec![(0.0, 0.5), (0.25, 1.0)],
            y: (0.5, 2.0),
        };
        let cb = Weight::callback(|p: &[f64; 3]| p[2].powf(0.7), 12);
        let pw = Weight::Power(PowerWeight { gamma: 0.7 });
        assert_relative_eq!(
            a2_product(&b, &cb).unwrap(),
            a2_product(&b, &pw).unwrap(),
            max_relative = 1e-10
        );
        let constant = Weight::callback(|_: &[f64; 3]| 3.0, 4);
        assert_relative_eq!(a2_product(&b, &constant).unwrap(), 1.0, epsilon = 1e-13);
    }
}
