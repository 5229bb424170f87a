//! Strong Wolfe line search (bracketing followed by zoom with safeguarded
//! cubic interpolation).

/// One trial point: `φ(α)`, `φ'(α)` and whatever the caller wants to keep
/// (typically the point and its full gradient).
#[derive(Debug, Clone)]
pub struct Trial<T> {
    pub alpha: f64,
    pub value: f64,
    pub slope: f64,
    pub payload: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WolfeParams {
    pub c1: f64,
    pub c2: f64,
    pub max_evals: usize,
}

impl Default for WolfeParams {
    fn default() -> Self {
        WolfeParams { c1: 1e-4, c2: 0.9, max_evals: 40 }
    }
}

#[derive(Debug, Clone)]
pub enum LineSearchOutcome<T> {
    /// Both strong Wolfe conditions hold.
    Wolfe(Trial<T>),
    /// Only sufficient decrease holds (the evaluation budget ran out).
    Decrease(Trial<T>),
    Failed,
}

impl<T> LineSearchOutcome<T> {
    pub fn accepted(self) -> Option<Trial<T>> {
        match self {
            LineSearchOutcome::Wolfe(t) | LineSearchOutcome::Decrease(t) => Some(t),
            LineSearchOutcome::Failed => None,
        }
    }
}

struct End {
    alpha: f64,
    value: f64,
    slope: f64,
}

fn cubic_minimizer(lo: &End, hi: &End) -> Option<f64> {
    if !(hi.value.is_finite() && hi.slope.is_finite()) {
        return None;
    }
    let d1 = lo.slope + hi.slope - 3.0 * (lo.value - hi.value) / (lo.alpha - hi.alpha);
    let disc = d1 * d1 - lo.slope * hi.slope;
    if !(disc >= 0.0) {
        return None;
    }
    let d2 = (hi.alpha - lo.alpha).signum() * disc.sqrt();
    let a = hi.alpha - (hi.alpha - lo.alpha) * (hi.slope + d2 - d1) / (hi.slope - lo.slope + 2.0 * d2);
    a.is_finite().then_some(a)
}

/// Searches along a descent direction. `eval(α)` returns `None` when the
/// objective is not finite there; such points are treated as `+∞`.
///
/// `f0` and `slope0 < 0` describe `φ(0)`; `alpha0` is the first trial step.
pub fn strong_wolfe<T, E>(
    mut eval: impl FnMut(f64) -> Result<Option<(f64, f64, T)>, E>,
    f0: f64,
    slope0: f64,
    alpha0: f64,
    params: &WolfeParams,
) -> Result<LineSearchOutcome<T>, E> {
    if !(slope0 < 0.0) || !(alpha0 > 0.0) {
        return Ok(LineSearchOutcome::Failed);
    }
    let armijo = |alpha: f64, value: f64| value <= f0 + params.c1 * alpha * slope0;
    let curvature = |slope: f64| slope.abs() <= -params.c2 * slope0;

    let mut evals = 0;
    let mut prev = End { alpha: 0.0, value: f0, slope: slope0 };
    let mut best: Option<Trial<T>> = None;
    let mut alpha = alpha0;

    // Bracketing phase.
    let (mut lo, mut hi) = loop {
        if evals >= params.max_evals {
            return Ok(finish(best));
        }
        evals += 1;
        let Some((value, slope, payload)) = eval(alpha)? else {
            break (prev, End { alpha, value: f64::INFINITY, slope: f64::NAN });
        };
        let here = End { alpha, value, slope };
        if !armijo(alpha, value) || (evals > 1 && value >= prev.value) {
            break (prev, here);
        }
        let trial = Trial { alpha, value, slope, payload };
        if curvature(slope) {
            return Ok(LineSearchOutcome::Wolfe(trial));
        }
        best = Some(trial);
        if slope >= 0.0 {
            break (here, prev);
        }
        prev = here;
        alpha *= 2.0;
    };

    // Zoom phase: `lo` satisfies sufficient decrease with the lowest value
    // seen; the minimizer lies between `lo` and `hi`.
    while evals < params.max_evals {
        let width = hi.alpha - lo.alpha;
        if width.abs() <= 1e-16 * lo.alpha.abs().max(1e-300) || width == 0.0 {
            break;
        }
        let left = lo.alpha + 0.1 * width;
        let right = hi.alpha - 0.1 * width;
        let (a_min, a_max) = if left < right { (left, right) } else { (right, left) };
        let alpha = match cubic_minimizer(&lo, &hi) {
            Some(a) if a >= a_min && a <= a_max => a,
            _ => lo.alpha + 0.5 * width,
        };
        evals += 1;
        let Some((value, slope, payload)) = eval(alpha)? else {
            hi = End { alpha, value: f64::INFINITY, slope: f64::NAN };
            continue;
        };
        if !armijo(alpha, value) || value >= lo.value {
            hi = End { alpha, value, slope };
            continue;
        }
        let trial = Trial { alpha, value, slope, payload };
        if curvature(slope) {
            return Ok(LineSearchOutcome::Wolfe(trial));
        }
        best = Some(trial);
        let here = End { alpha, value, slope };
        if slope * (hi.alpha - lo.alpha) >= 0.0 {
            hi = lo;
        }
        lo = here;
    }
    Ok(finish(best))
}

fn finish<T>(best: Option<Trial<T>>) -> LineSearchOutcome<T> {
    match best {
        Some(t) => LineSearchOutcome::Decrease(t),
        None => LineSearchOutcome::Failed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type NoErr = std::convert::Infallible;

    fn search(f: impl Fn(f64) -> (f64, f64), alpha0: f64, params: &WolfeParams) -> LineSearchOutcome<()> {
        let (f0, s0) = f(0.0);
        strong_wolfe::<(), NoErr>(
            |a| {
                let (v, s) = f(a);
                Ok(v.is_finite().then_some((v, s, ())))
            },
            f0,
            s0,
            alpha0,
            params,
        )
        .unwrap()
    }

    #[test]
    fn unit_step_on_exact_quadratic() {
        // φ(α) = ½(1 − α)², minimum at α = 1.
        let out = search(|a| (0.5 * (1.0 - a) * (1.0 - a), a - 1.0), 1.0, &WolfeParams::default());
        match out {
            LineSearchOutcome::Wolfe(t) => assert_eq!(t.alpha, 1.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn overshoot_is_zoomed_to_wolfe_point() {
        let p = WolfeParams { c2: 0.1, ..WolfeParams::default() };
        let out = search(|a| (0.5 * (1.0 - a) * (1.0 - a), a - 1.0), 10.0, &p);
        let t = match out {
            LineSearchOutcome::Wolfe(t) => t,
            other => panic!("{other:?}"),
        };
        assert!(t.slope.abs() <= 0.1 && t.value <= 0.5);
    }

    #[test]
    fn short_step_is_extended() {
        let p = WolfeParams { c2: 0.1, ..WolfeParams::default() };
        let out = search(|a| (0.5 * (100.0 - a).powi(2), a - 100.0), 1.0, &p);
        let t = out.accepted().unwrap();
        assert!((t.alpha - 100.0).abs() <= 10.0);
    }

    #[test]
    fn non_finite_region_is_backed_out_of() {
        let f = |a: f64| if a > 0.5 { (f64::NAN, f64::NAN) } else { (-a, -1.0) };
        let t = search(f, 1.0, &WolfeParams::default()).accepted().unwrap();
        assert!(t.alpha <= 0.5 && t.value < 0.0);
    }

    #[test]
    fn ascent_direction_fails() {
        assert!(matches!(search(|a| (a, 1.0), 1.0, &WolfeParams::default()), LineSearchOutcome::Failed));
    }

    #[test]
    fn cubic_interpolation_on_quadratic_is_exact() {
        let lo = End { alpha: 0.0, value: 0.5, slope: -1.0 };
        let hi = End { alpha: 3.0, value: 2.0, slope: 2.0 };
        assert!((cubic_minimizer(&lo, &hi).unwrap() - 1.0).abs() < 1e-12);
    }
}
