//! Line-oriented run configuration: `section.key = value`, `#` comments.
//!
//! ```text
//! n = 1
//! omega = 1 2
//! potential.kind = quartic
//! potential.amplitude = 0.5
//! cell.m = 10
//! ```
//!
//! Lists are whitespace or comma separated. Unknown or repeated keys are
//! rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::heis::parse_rational;
use crate::potential::{ModulationSpec, PotentialKind, PotentialSpec};
use crate::solver::SolveConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Solve,
    Refine,
    Analyze,
    Sequence,
    Gamma,
    Verify,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Solve => "solve",
            Mode::Refine => "refine",
            Mode::Analyze => "analyze",
            Mode::Sequence => "sequence",
            Mode::Gamma => "gamma",
            Mode::Verify => "verify",
        }
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "solve" => Mode::Solve,
            "refine" => Mode::Refine,
            "analyze" => Mode::Analyze,
            "sequence" => Mode::Sequence,
            "gamma" => Mode::Gamma,
            "verify" => Mode::Verify,
            _ => return Err(format!("unknown mode {s:?}")),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellParams {
    pub m: f64,
    pub l: f64,
    pub p: u32,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridParams {
    /// Transverse nodes; rounded up to a multiple of `|k^j|^2` where needed.
    pub ns: usize,
    pub da: f64,
    pub nt: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisParams {
    pub theta: f64,
    pub theta0: f64,
    pub radii: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub window: f64,
    pub kmax: i64,
    pub r0: f64,
    pub m0_bound: f64,
    /// Slab enlargement used by the enlarge check; defaults to `M`.
    pub a_extra: Option<f64>,
    /// Field to analyze instead of solving.
    pub input: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub n: usize,
    pub omega: Vec<BigRational>,
    pub potential: PotentialSpec,
    pub cell: CellParams,
    pub grid: GridParams,
    pub solver: SolveConfig,
    pub analysis: AnalysisParams,
    pub denominators: Vec<u64>,
    pub gamma_ns: Vec<u32>,
    /// Start field for the solve (instead of the ramp).
    pub restart: Option<PathBuf>,
}

impl RunConfig {
    pub fn omega_f64(&self) -> Vec<f64> {
        self.omega
            .iter()
            .map(|q| q.to_f64().unwrap_or(f64::NAN))
            .collect()
    }
}

const KEYS: &[&str] = &[
    "mode",
    "n",
    "omega",
    "potential.kind",
    "potential.d",
    "potential.ell",
    "potential.mean",
    "potential.amplitude",
    "potential.frequency",
    "cell.m",
    "cell.l",
    "cell.p",
    "cell.delta",
    "grid.ns",
    "grid.da",
    "grid.nt",
    "solver.tol",
    "solver.max_iters",
    "solver.seed",
    "solver.max_refine_passes",
    "solver.restart",
    "analysis.theta",
    "analysis.theta0",
    "analysis.radii",
    "analysis.epsilons",
    "analysis.window",
    "analysis.kmax",
    "analysis.r0",
    "analysis.m0_bound",
    "analysis.a_extra",
    "analysis.input",
    "sequence.denominators",
    "gamma.ns",
];

const REQUIRED: &[&str] = &["n", "omega", "potential.kind"];

struct Entries {
    map: BTreeMap<String, (usize, String)>,
}

fn err(line: usize, message: impl Into<String>) -> Error {
    Error::Config {
        line,
        message: message.into(),
    }
}

impl Entries {
    fn line(&self, key: &str) -> usize {
        self.map.get(key).map(|v| v.0).unwrap_or(0)
    }

    fn raw(&self, key: &str) -> Option<(usize, &str)> {
        self.map.get(key).map(|(l, v)| (*l, v.as_str()))
    }

    fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.raw(key) {
            None => Ok(default),
            Some((line, v)) => v
                .parse()
                .map_err(|_| err(line, format!("{key}: cannot parse {v:?}"))),
        }
    }

    fn list<T: FromStr>(&self, key: &str, default: Vec<T>) -> Result<Vec<T>> {
        match self.raw(key) {
            None => Ok(default),
            Some((line, v)) => {
                let items: Vec<&str> = v
                    .split(|c: char| c == ',' || c.is_whitespace())
                    .filter(|s| !s.is_empty())
                    .collect();
                if items.is_empty() {
                    return Err(err(line, format!("{key}: empty list")));
                }
                items
                    .into_iter()
                    .map(|s| {
                        s.parse()
                            .map_err(|_| err(line, format!("{key}: cannot parse {s:?}")))
                    })
                    .collect()
            }
        }
    }
}

fn lex(text: &str) -> Result<Entries> {
    let mut map: BTreeMap<String, (usize, String)> = BTreeMap::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let Some((key, value)) = body.split_once('=') else {
            return Err(err(line, format!("expected `key = value`, got {body:?}")));
        };
        let (key, value) = (key.trim(), value.trim());
        if !KEYS.contains(&key) {
            return Err(err(line, format!("unknown key {key:?}")));
        }
        if value.is_empty() {
            return Err(err(line, format!("{key}: missing value")));
        }
        if let Some((first, _)) = map.get(key) {
            return Err(err(
                line,
                format!("duplicate key {key:?} (first set on line {first})"),
            ));
        }
        map.insert(key.to_string(), (line, value.to_string()));
    }
    Ok(Entries { map })
}

fn check(cond: bool, line: usize, message: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(err(line, message))
    }
}

/// Default radius ladder: `4 * 2^(j/4)`, `j = 0..=8`.
pub fn default_radii() -> Vec<f64> {
    (0..=8).map(|j| 4.0 * 2f64.powf(j as f64 / 4.0)).collect()
}

/// Reads and parses a config file; bytes that are not UTF-8 are reported
/// with their line.
pub fn load_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let bytes = std::fs::read(path)?;
    let text = String::from_utf8(bytes).map_err(|e| {
        let ok = e.utf8_error().valid_up_to();
        let line = e.as_bytes()[..ok].iter().filter(|b| **b == b'\n').count() + 1;
        err(line, "not valid UTF-8")
    })?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let e = lex(text)?;
    for key in REQUIRED {
        if !e.map.contains_key(*key) {
            let last = text.lines().count();
            return Err(err(last, format!("missing required key {key:?}")));
        }
    }

    let mode: Mode = match e.raw("mode") {
        None => Mode::Solve,
        Some((line, v)) => v.parse().map_err(|m: String| err(line, m))?,
    };
    let n: usize = e.get("n", 1)?;
    check((1..=4).contains(&n), e.line("n"), "n must lie in 1..=4")?;

    let (oline, otext) = e.raw("omega").expect("required");
    let omega = otext
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(parse_rational)
        .collect::<Result<Vec<_>>>()
        .map_err(|x| err(oline, format!("omega: {x}")))?;
    check(omega.len() == 2 * n, oline, "omega must have 2n entries")?;
    check(omega.iter().any(|q| !q.is_zero()), oline, "omega must be nonzero")?;

    let kline = e.line("potential.kind");
    let kind = PotentialKind::parse(e.raw("potential.kind").expect("required").1)
        .ok_or_else(|| err(kline, "potential.kind must be quartic, power_d or indicator"))?;
    let default_d = match kind {
        PotentialKind::Quartic => 2.0,
        PotentialKind::PowerD => 1.0,
        PotentialKind::Indicator => 0.0,
    };
    let d: f64 = e.get("potential.d", default_d)?;
    let mean: f64 = e.get("potential.mean", 1.0)?;
    let amplitude: f64 = e.get("potential.amplitude", 0.0)?;
    let frequency: Vec<u32> = e.list("potential.frequency", vec![1; 2 * n])?;
    check(
        frequency.len() == 2 * n,
        e.line("potential.frequency"),
        "potential.frequency must have 2n entries",
    )?;
    check(
        amplitude >= 0.0,
        e.line("potential.amplitude"),
        "potential.amplitude must be nonnegative",
    )?;
    check(
        mean > amplitude,
        e.line("potential.mean").max(e.line("potential.amplitude")),
        "potential.mean must exceed potential.amplitude",
    )?;
    let potential = PotentialSpec {
        kind,
        d,
        modulation: ModulationSpec {
            amplitude,
            mean,
            frequency,
            squared: false,
        },
        ell: e.get("potential.ell", 0.5)?,
    };
    potential
        .validate()
        .map_err(|x| err(e.line("potential.d").max(kline), x.to_string()))?;

    let m: f64 = e.get("cell.m", 10.0)?;
    check(m >= 10.0, e.line("cell.m"), "cell.m must be at least 10")?;
    let l: f64 = e.get("cell.l", m + 12.0)?;
    check(l > m, e.line("cell.l"), "cell.l must exceed cell.m")?;
    let p: u32 = e.get("cell.p", 1)?;
    check(p >= 1, e.line("cell.p"), "cell.p must be positive")?;
    let delta: f64 = e.get("cell.delta", 0.1)?;
    check(
        delta > 0.0 && delta < 0.5,
        e.line("cell.delta"),
        "delta must lie in (0, 1/2)",
    )?;

    let ns: usize = e.get("grid.ns", 16)?;
    let nt: usize = e.get("grid.nt", 16)?;
    let da: f64 = e.get("grid.da", 1.0 / 32.0)?;
    check(
        ns >= 8 && ns % 2 == 0,
        e.line("grid.ns"),
        "grid.ns must be even and at least 8",
    )?;
    check(nt >= 8, e.line("grid.nt"), "grid.nt must be at least 8")?;
    check(
        da > 0.0 && da < l / 4.0,
        e.line("grid.da"),
        "grid.da must lie in (0, L/4)",
    )?;

    let base = SolveConfig::default();
    let solver = SolveConfig {
        tol: e.get("solver.tol", base.tol)?,
        max_iters: e.get("solver.max_iters", base.max_iters)?,
        seed: e.get("solver.seed", base.seed)?,
        max_refine_passes: e.get("solver.max_refine_passes", base.max_refine_passes)?,
        d0_mode: kind == PotentialKind::Indicator,
        accelerated: true,
    };
    check(
        solver.tol > 0.0,
        e.line("solver.tol"),
        "solver.tol must be positive",
    )?;
    check(
        solver.max_iters >= 1,
        e.line("solver.max_iters"),
        "solver.max_iters must be at least 1",
    )?;

    let in_unit = |v: f64| v > 0.0 && v < 1.0;
    let analysis = AnalysisParams {
        theta: e.get("analysis.theta", 0.9)?,
        theta0: e.get("analysis.theta0", 0.9)?,
        radii: e.list("analysis.radii", default_radii())?,
        epsilons: e.list("analysis.epsilons", vec![1.0, 0.5, 0.25])?,
        window: e.get("analysis.window", 4.0)?,
        kmax: e.get("analysis.kmax", 2)?,
        r0: e.get("analysis.r0", 1.0)?,
        m0_bound: e.get("analysis.m0_bound", 8.0)?,
        a_extra: match e.raw("analysis.a_extra") {
            None => None,
            Some(_) => Some(e.get("analysis.a_extra", 0.0)?),
        },
        input: e.raw("analysis.input").map(|(_, v)| PathBuf::from(v)),
    };
    check(
        in_unit(analysis.theta),
        e.line("analysis.theta"),
        "analysis.theta must lie in (0, 1)",
    )?;
    check(
        in_unit(analysis.theta0),
        e.line("analysis.theta0"),
        "analysis.theta0 must lie in (0, 1)",
    )?;
    check(
        analysis.radii.iter().all(|r| *r > 0.0) && analysis.radii.windows(2).all(|w| w[1] > w[0]),
        e.line("analysis.radii"),
        "analysis.radii must be positive and increasing",
    )?;
    check(
        analysis.epsilons.iter().all(|v| *v > 0.0 && *v <= 1.0)
            && analysis.epsilons.windows(2).all(|w| w[1] < w[0]),
        e.line("analysis.epsilons"),
        "analysis.epsilons must lie in (0, 1] and decrease",
    )?;
    check(
        analysis.window > 0.0,
        e.line("analysis.window"),
        "analysis.window must be positive",
    )?;
    check(
        analysis.kmax >= 1,
        e.line("analysis.kmax"),
        "analysis.kmax must be at least 1",
    )?;
    check(
        analysis.r0 > 0.0,
        e.line("analysis.r0"),
        "analysis.r0 must be positive",
    )?;
    check(
        analysis.m0_bound > 0.0,
        e.line("analysis.m0_bound"),
        "analysis.m0_bound must be positive",
    )?;
    if let Some(a) = analysis.a_extra {
        check(
            a >= 0.0,
            e.line("analysis.a_extra"),
            "analysis.a_extra must be nonnegative",
        )?;
    }

    let denominators: Vec<u64> = e.list("sequence.denominators", vec![2, 5, 13])?;
    check(
        denominators.iter().all(|&q| q >= 1) && denominators.windows(2).all(|w| w[1] > w[0]),
        e.line("sequence.denominators"),
        "sequence.denominators must be positive and increasing",
    )?;
    let gamma_ns: Vec<u32> = e.list("gamma.ns", vec![1, 2, 4])?;
    check(
        gamma_ns.iter().all(|&v| v >= 1) && gamma_ns.windows(2).all(|w| w[1] > w[0]),
        e.line("gamma.ns"),
        "gamma.ns must be positive and increasing",
    )?;
    if mode == Mode::Gamma {
        check(
            kind == PotentialKind::Quartic,
            kline,
            "gamma mode needs the quartic kind",
        )?;
    }

    Ok(RunConfig {
        mode,
        n,
        omega,
        potential,
        cell: CellParams { m, l, p, delta },
        grid: GridParams { ns, da, nt },
        solver,
        analysis,
        denominators,
        gamma_ns,
        restart: e.raw("solver.restart").map(|(_, v)| PathBuf::from(v)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "n = 1\nomega = 1 0\npotential.kind = quartic\n";

    fn line_of(r: Result<RunConfig>) -> (usize, String) {
        match r {
            Err(Error::Config { line, message }) => (line, message),
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_fills_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.mode, Mode::Solve);
        assert_eq!(
            c.cell,
            CellParams {
                m: 10.0,
                l: 22.0,
                p: 1,
                delta: 0.1
            }
        );
        assert_eq!(c.analysis.theta, 0.9);
        assert_eq!(c.analysis.theta0, 0.9);
        assert_eq!(c.potential.d, 2.0);
        assert_eq!(c.denominators, vec![2, 5, 13]);
    }

    #[test]
    fn full_config() {
        let text = "# reference\nmode = verify\nn = 1\nomega = 1/2, 3\npotential.kind = quartic\n\
                    potential.mean = 1.5\npotential.amplitude = 0.5 # modulated\ncell.m = 12\n\
                    grid.ns = 24\nanalysis.radii = 4 8 16\ngamma.ns = 1 2\n";
        let c = parse_config(text).unwrap();
        assert_eq!(c.mode, Mode::Verify);
        assert_eq!(c.omega_f64(), vec![0.5, 3.0]);
        assert_eq!(c.cell.l, 24.0);
        assert_eq!(c.potential.modulation.amplitude, 0.5);
        assert_eq!(c.analysis.radii, vec![4.0, 8.0, 16.0]);
    }

    #[test]
    fn rejects_delta() {
        let (line, msg) = line_of(parse_config(&format!("{MINIMAL}cell.delta = 0.7\n")));
        assert_eq!(line, 4);
        assert!(msg.contains("delta must lie in (0, 1/2)"), "{msg}");
    }

    #[test]
    fn rejects_duplicates_with_both_lines() {
        let (line, msg) = line_of(parse_config(&format!("{MINIMAL}cell.m = 12\n\ncell.m = 13\n")));
        assert_eq!(line, 6);
        assert!(msg.contains("line 4"), "{msg}");
    }

    #[test]
    fn malformed_inputs() {
        let cases = [
            ("n = 1\nomega = 1 0\n", "missing required"),
            (&format!("{MINIMAL}bogus = 1\n") as &str, "unknown key"),
            (&format!("{MINIMAL}cell.m\n"), "expected"),
            (&format!("{MINIMAL}cell.m = \n"), "missing value"),
            (&format!("{MINIMAL}cell.m = ten\n"), "cannot parse"),
            (&format!("{MINIMAL}cell.m = 5\n"), "at least 10"),
            (&format!("{MINIMAL}cell.l = 9\n"), "exceed"),
            ("n = 1\nomega = 1\npotential.kind = quartic\n", "2n entries"),
            ("n = 1\nomega = 0 0\npotential.kind = quartic\n", "nonzero"),
            ("n = 1\nomega = 1 x\npotential.kind = quartic\n", "omega"),
            ("n = 1\nomega = 1 0\npotential.kind = sextic\n", "potential.kind"),
            (&format!("{MINIMAL}potential.amplitude = 2\n"), "exceed"),
            (&format!("{MINIMAL}potential.d = 1\n"), "d = 2"),
            (&format!("{MINIMAL}mode = fly\n"), "unknown mode"),
            (&format!("{MINIMAL}analysis.theta = 1.5\n"), "theta"),
            (&format!("{MINIMAL}analysis.radii = 4 2\n"), "increasing"),
            (&format!("{MINIMAL}analysis.epsilons = 1 2\n"), "decrease"),
            (&format!("{MINIMAL}grid.ns = 7\n"), "even"),
            (&format!("{MINIMAL}solver.tol = -1\n"), "positive"),
            (&format!("{MINIMAL}sequence.denominators = 5 2\n"), "increasing"),
            (
                "mode = gamma\nn = 1\nomega = 1 0\npotential.kind = indicator\n",
                "quartic",
            ),
        ];
        for (text, needle) in cases {
            let (_, msg) = line_of(parse_config(text));
            assert!(msg.contains(needle), "{text:?}: {msg}");
        }
    }

    proptest::proptest! {
        #[test]
        fn parsing_is_total(text in "\\PC{0,200}") {
            if let Err(e) = parse_config(&text) {
                proptest::prop_assert!(matches!(e, Error::Config { .. }), "{:?}", e);
            }
        }

        #[test]
        fn parsing_is_total_on_near_misses(
            lines in proptest::collection::vec(
                (proptest::sample::select(KEYS.to_vec()), "[-0-9a-z ./,]{0,12}"),
                0..8,
            )
        ) {
            let mut text = MINIMAL.to_string();
            for (k, v) in &lines {
                text.push_str(&format!("{k} = {v}\n"));
            }
            match parse_config(&text) {
                Ok(c) => proptest::prop_assert!(c.cell.delta > 0.0 && c.cell.delta < 0.5),
                Err(Error::Config { line, .. }) => proptest::prop_assert!(line >= 1),
                Err(e) => proptest::prop_assert!(false, "unexpected {e:?}"),
            }
        }
    }
}
