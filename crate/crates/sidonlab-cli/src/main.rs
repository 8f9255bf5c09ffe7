//! `sidonlab` — the command-line front end of the library: parse
//! inputs, run one operation, emit a certificate artifact.
//!
//! Every invocation writes a single artifact to stdout (and to
//! `--output` when given).  The artifact embeds the tool version, the
//! seed, a SHA-256 hash of the input, and the wall time; with a fixed
//! seed the bytes are identical across runs except for the wall-time
//! field.  Exit codes are a contract: 0 success, 2 domain error
//! (including malformed JSON, reported with its position), 3 capacity
//! error, 4 extraction failure, 1 internal error.
//!
//! Character sets are given inline or as file paths, in the form
//! `{"family":"Z","elements":[1,2,4]}`; elements may be bare integers
//! (ℤ only), canonical text keys (`"e0^1*e3^-2"`, `"r0*r2"`), or
//! objects `{"n": …}` / `{"character": "…"}`.  Polynomials are term
//! lists `[{"character":{"family":"Z","n":1},"re":1.0,"im":0.0},…]`.
//! Weighted sets add a weight: `{"elements":[{"n":1,"w":0.7},…]}`.

use clap::{Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use sidonlab::{
    auto_r, canonical_set, cb_extract, certified_sup_norm, count_relations_height_gt,
    enumerate_relations, extract_qi_random, is_quasi_independent, lp_norm_detailed,
    max_height_relation, parse_character, rademacher_extremal, riesz_product, riesz_star,
    riesz_star_coefficient, rudin_scan, run_all, steinhaus_sandwich_mc, verify_sidon_witness,
    Capacity, Character, CriterionReport, Error, ExtractParams, Family, FourierExpansion, QiOracle,
    RieszParams, WeightedSet,
};
use std::f64::consts::TAU;
use std::path::PathBuf;
use std::time::Instant;
use std::{env, fmt, fs, process};

// ---------------------------------------------------------------------
// Command line
// ---------------------------------------------------------------------

#[derive(Parser)]
#[command(
    name = "sidonlab",
    version,
    about = "Quasi-independent sets, Riesz-product witnesses, and certified Sidon constants",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Seed for every randomized step (recorded in the artifact).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Artifact format; csv applies to tabular scans only.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,

    /// Search budget override: a single integer (uniform) or a JSON
    /// object with any of dp_states, enum_leaves, expansion_terms.
    /// Falls back to the SIDONLAB_CAPACITY environment variable.
    #[arg(long, global = true)]
    capacity: Option<String>,

    /// Numerical tolerance override (command-specific default).
    #[arg(long, global = true)]
    tol: Option<f64>,

    /// Also write the artifact bytes to this path.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Human,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PhaseChoice {
    /// z_λ ≡ 1.
    Unit,
    /// Independent uniform unimodular z_λ drawn from the seed.
    Random,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OracleChoice {
    Auto,
    Exact,
    Random,
}

impl From<OracleChoice> for QiOracle {
    fn from(c: OracleChoice) -> QiOracle {
        match c {
            OracleChoice::Auto => QiOracle::Auto,
            OracleChoice::Exact => QiOracle::Exact,
            OracleChoice::Random => QiOracle::Random,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Decide quasi-independence and report the witness relation.
    QiCheck {
        /// Character set, inline JSON or a file path.
        #[arg(long)]
        set: String,
    },
    /// Enumerate, count, or maximize relations on a set.
    Relations {
        #[arg(long)]
        set: String,
        /// List every relation of exactly this height.
        #[arg(long)]
        height: Option<u32>,
        /// Count relations of height strictly above this value.
        #[arg(long)]
        count_above: Option<u32>,
        /// Report a maximal-height relation.
        #[arg(long)]
        max_height: bool,
        /// Height cap for --max-height.
        #[arg(long)]
        cap: Option<u32>,
    },
    /// Expand a Riesz product R_{a,z} (or its starred slice R*).
    Riesz {
        #[arg(long)]
        set: String,
        /// Coupling a ∈ (0,1].
        #[arg(long)]
        a: f64,
        /// Expand the starred slice instead of the full product.
        #[arg(long)]
        star: bool,
        /// Query a single starred coefficient R̂*(γ) by character key.
        #[arg(long)]
        gamma: Option<String>,
        #[arg(long, value_enum, default_value_t = PhaseChoice::Unit)]
        phases: PhaseChoice,
    },
    /// Build and verify a Sidon witness measure for a set.
    Witness {
        #[arg(long)]
        set: String,
        /// Coupling a ∈ (0,1]; 1/√3 ≈ 0.57735 realizes S = 3√3.
        #[arg(long)]
        a: f64,
        #[arg(long, value_enum, default_value_t = PhaseChoice::Unit)]
        phases: PhaseChoice,
    },
    /// Certified norms of a polynomial: ‖·‖_A, ‖·‖₂, ‖·‖_p, ‖·‖_∞.
    Norms {
        /// Fourier expansion, inline JSON or a file path.
        #[arg(long)]
        poly: String,
        /// Also compute ‖f‖_p for this p ≥ 1.
        #[arg(long)]
        p: Option<f64>,
        /// Sup-norm grid selection; only "auto" (doubling with a
        /// Bernstein correction) certifies, so only "auto" is accepted.
        #[arg(long, default_value = "auto")]
        grid: String,
        /// Compare against the Steinhaus companion under this
        /// hypothesis constant S ≥ 1 (Monte Carlo, seeded).
        #[arg(long)]
        steinhaus: Option<f64>,
    },
    /// Scan ‖f‖_p/(√p‖f‖₂) over several p (the (CR) ratio).
    Rudin {
        #[arg(long)]
        poly: String,
        /// Comma-separated list of p values, e.g. 2,4,6,8.
        #[arg(long, default_value = "2,4,6,8")]
        ps: String,
    },
    /// The extremal Rademacher polynomial of length m and its certified
    /// ratio m·sin(π/2m) → π/2.
    Rademacher {
        #[arg(long)]
        m: u32,
    },
    /// Extract a quasi-independent subset by Bernoulli selection at
    /// density η = 1/(4Ce) plus maximal-relation removal.
    ExtractQi {
        #[arg(long)]
        set: String,
        /// Rudin constant hypothesis C.
        #[arg(long = "C", alias = "c", default_value_t = 1.0)]
        c: f64,
        /// Acceptance proportion override (default η/4 = 1/(16Ce)).
        #[arg(long)]
        b: Option<f64>,
        #[arg(long, default_value_t = 64)]
        max_attempts: u32,
    },
    /// Run the three-stage pipeline from a weighted set to a Sidon
    /// subset with a verified certificate.
    CbExtract {
        /// Weighted set, inline JSON or a file path.
        #[arg(long)]
        input: String,
        /// Gradation ratio R > 1, or "auto" for the a-priori choice.
        #[arg(long = "R", alias = "r", default_value = "auto")]
        r: String,
        /// Rudin constant hypothesis C.
        #[arg(long = "C", alias = "c", default_value_t = 1.0)]
        c: f64,
        /// Acceptance proportion override (default η/4 = 1/(16Ce)).
        #[arg(long)]
        b: Option<f64>,
        #[arg(long, value_enum, default_value_t = OracleChoice::Auto)]
        oracle: OracleChoice,
        #[arg(long, default_value_t = 64)]
        max_attempts: u32,
        /// Write the full stage-by-stage trace to this path.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run the acceptance suite; any failing criterion → exit 1.
    Selftest {
        /// Shrink the randomized corpora (completes well under 60 s).
        #[arg(long)]
        quick: bool,
    },
}

// ---------------------------------------------------------------------
// Errors and exit codes
// ---------------------------------------------------------------------

enum CliError {
    Lib(Error),
    Json {
        context: String,
        source: serde_json::Error,
    },
    Io {
        context: String,
        source: std::io::Error,
    },
    Usage(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Lib(e) => match e {
                Error::Domain(_)
                | Error::NotQuasiIndependent(_)
                | Error::UnsupportedCertification(_) => 2,
                Error::Capacity(_) => 3,
                Error::Extraction { .. } => 4,
                Error::Internal(_) => 1,
            },
            CliError::Json { .. } | CliError::Io { .. } | CliError::Usage(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Lib(e) => write!(f, "{e}"),
            CliError::Json { context, source } => {
                write!(f, "malformed JSON in {context}: {source}")
            }
            CliError::Io { context, source } => write!(f, "i/o error {context}: {source}"),
            CliError::Usage(msg) => write!(f, "usage error: {msg}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

// ---------------------------------------------------------------------
// Inputs
// ---------------------------------------------------------------------

/// A raw input payload: inline JSON text or the contents of a file.
struct Payload {
    raw: String,
    origin: String,
}

fn load_payload(arg: &str, flag: &str) -> Result<Payload, CliError> {
    let trimmed = arg.trim_start();
    if trimmed.starts_with('{') || trimmed.starts_with('[') {
        Ok(Payload {
            raw: arg.to_string(),
            origin: format!("inline {flag}"),
        })
    } else {
        let raw = fs::read_to_string(arg).map_err(|source| CliError::Io {
            context: format!("reading {flag} file {arg}"),
            source,
        })?;
        Ok(Payload {
            raw,
            origin: arg.to_string(),
        })
    }
}

fn parse_set(payload: &Payload) -> Result<(Family, Vec<Character>), CliError> {
    #[derive(serde::Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Wire {
        family: Family,
        elements: Vec<Value>,
    }
    let wire: Wire = serde_json::from_str(&payload.raw).map_err(|source| CliError::Json {
        context: payload.origin.clone(),
        source,
    })?;
    let mut set = Vec::with_capacity(wire.elements.len());
    for v in &wire.elements {
        set.push(element_to_character(v, wire.family)?);
    }
    Ok((wire.family, set))
}

fn element_to_character(v: &Value, family: Family) -> Result<Character, CliError> {
    match v {
        Value::Number(n) => {
            if family != Family::Z {
                return Err(usage(format!(
                    "bare integer element {n} needs the Z family; use a character key"
                )));
            }
            let int = n
                .as_i64()
                .map(i128::from)
                .or_else(|| n.as_u64().map(i128::from))
                .ok_or_else(|| {
                    usage(format!(
                        "element {n} is not a 64-bit integer; write it as a string \
                         to keep full precision"
                    ))
                })?;
            Ok(Character::z(int))
        }
        Value::String(key) => Ok(parse_character(key, family)?),
        Value::Object(map) => {
            for k in map.keys() {
                if k != "n" && k != "character" && k != "w" {
                    return Err(usage(format!("unknown element field {k:?}")));
                }
            }
            match (map.get("n"), map.get("character")) {
                (Some(n), None) => element_to_character(n, family),
                (None, Some(Value::String(key))) => Ok(parse_character(key, family)?),
                (None, Some(other)) => Err(usage(format!(
                    "character key must be a string, got {other}"
                ))),
                (Some(_), Some(_)) => Err(usage("element has both \"n\" and \"character\"")),
                (None, None) => Err(usage("element object needs \"n\" or \"character\"")),
            }
        }
        other => Err(usage(format!("unrecognized element {other}"))),
    }
}

fn parse_poly(payload: &Payload) -> Result<FourierExpansion, CliError> {
    serde_json::from_str(&payload.raw).map_err(|source| CliError::Json {
        context: payload.origin.clone(),
        source,
    })
}

fn parse_weighted(payload: &Payload) -> Result<WeightedSet, CliError> {
    serde_json::from_str(&payload.raw).map_err(|source| CliError::Json {
        context: payload.origin.clone(),
        source,
    })
}

fn resolve_capacity(flag: &Option<String>) -> Result<Capacity, CliError> {
    let source = flag.clone().or_else(|| env::var("SIDONLAB_CAPACITY").ok());
    let Some(text) = source else {
        return Ok(Capacity::default());
    };
    let text = text.trim();
    if let Ok(n) = text.parse::<u64>() {
        return Ok(Capacity::uniform(n));
    }
    let v: Value = serde_json::from_str(text).map_err(|source| CliError::Json {
        context: "capacity override".into(),
        source,
    })?;
    let Some(obj) = v.as_object() else {
        return Err(usage(
            "capacity override must be an integer or a JSON object",
        ));
    };
    let mut cap = Capacity::default();
    for (k, val) in obj {
        let n = val.as_u64().ok_or_else(|| {
            usage(format!(
                "capacity field {k:?} must be a non-negative integer"
            ))
        })?;
        match k.as_str() {
            "dp_states" => cap.dp_states = n,
            "enum_leaves" => cap.enum_leaves = n,
            "expansion_terms" => cap.expansion_terms = n,
            other => return Err(usage(format!("unknown capacity field {other:?}"))),
        }
    }
    Ok(cap)
}

fn phase_params(
    a: f64,
    set: &[Character],
    choice: PhaseChoice,
    seed: u64,
) -> Result<RieszParams, CliError> {
    match choice {
        PhaseChoice::Unit => Ok(RieszParams::with_unit_phases(a)?),
        PhaseChoice::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let phases = canonical_set(set)?
                .into_iter()
                .map(|ch| {
                    let t: f64 = rng.gen();
                    (ch, Complex64::from_polar(1.0, TAU * t))
                })
                .collect();
            Ok(RieszParams::new(a, phases)?)
        }
    }
}

fn sha256_hex(data: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(data.as_bytes());
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

// ---------------------------------------------------------------------
// Artifacts
// ---------------------------------------------------------------------

#[derive(Serialize)]
struct Artifact<'a> {
    tool_version: &'static str,
    command: &'a str,
    seed: u64,
    input_hash: &'a str,
    wall_time_ms: u128,
    result: &'a Value,
}

/// What a subcommand hands back to the emitter.
struct Outcome {
    command: &'static str,
    result: Value,
    input_hash: String,
    human: String,
    /// Table rows (header first) for the formats that are tabular.
    csv: Option<Vec<String>>,
    exit: i32,
}

impl Outcome {
    fn new(command: &'static str, result: Value, input_hash: String, human: String) -> Self {
        Outcome {
            command,
            result,
            input_hash,
            human,
            csv: None,
            exit: 0,
        }
    }
}

// ---------------------------------------------------------------------
// Dispatch
// ---------------------------------------------------------------------

fn run(cli: Cli) -> Result<i32, CliError> {
    let start = Instant::now();
    let capacity = resolve_capacity(&cli.capacity)?;
    let outcome = dispatch(&cli.command, cli.seed, cli.tol, &capacity)?;
    let wall_time_ms = start.elapsed().as_millis();

    let rendered = match cli.format {
        Format::Json => {
            let artifact = Artifact {
                tool_version: env!("CARGO_PKG_VERSION"),
                command: outcome.command,
                seed: cli.seed,
                input_hash: &outcome.input_hash,
                wall_time_ms,
                result: &outcome.result,
            };
            let mut text =
                serde_json::to_string_pretty(&artifact).map_err(|source| CliError::Json {
                    context: "artifact serialization".into(),
                    source,
                })?;
            text.push('\n');
            text
        }
        Format::Csv => {
            let Some(rows) = &outcome.csv else {
                return Err(usage(format!(
                    "csv output applies to tabular scans only, not to {}",
                    outcome.command
                )));
            };
            let mut text = String::new();
            text.push_str(&format!("# tool_version={}\n", env!("CARGO_PKG_VERSION")));
            text.push_str(&format!("# command={}\n", outcome.command));
            text.push_str(&format!("# seed={}\n", cli.seed));
            text.push_str(&format!("# input_hash={}\n", outcome.input_hash));
            text.push_str(&format!("# wall_time_ms={wall_time_ms}\n"));
            for row in rows {
                text.push_str(row);
                text.push('\n');
            }
            text
        }
        Format::Human => format!(
            "{}\n— sidonlab v{} · {} · seed {} · input sha256 {} · {} ms\n",
            outcome.human,
            env!("CARGO_PKG_VERSION"),
            outcome.command,
            cli.seed,
            &outcome.input_hash[..16.min(outcome.input_hash.len())],
            wall_time_ms
        ),
    };

    print!("{rendered}");
    if let Some(path) = &cli.output {
        fs::write(path, rendered.as_bytes()).map_err(|source| CliError::Io {
            context: format!("writing artifact to {}", path.display()),
            source,
        })?;
    }
    Ok(outcome.exit)
}

fn dispatch(
    command: &Command,
    seed: u64,
    tol: Option<f64>,
    capacity: &Capacity,
) -> Result<Outcome, CliError> {
    match command {
        Command::QiCheck { set } => cmd_qi_check(set, capacity),
        Command::Relations {
            set,
            height,
            count_above,
            max_height,
            cap,
        } => cmd_relations(set, *height, *count_above, *max_height, *cap, capacity),
        Command::Riesz {
            set,
            a,
            star,
            gamma,
            phases,
        } => cmd_riesz(set, *a, *star, gamma.as_deref(), *phases, seed, capacity),
        Command::Witness { set, a, phases } => {
            cmd_witness(set, *a, *phases, seed, tol.unwrap_or(1e-9), capacity)
        }
        Command::Norms {
            poly,
            p,
            grid,
            steinhaus,
        } => cmd_norms(
            poly,
            *p,
            grid,
            *steinhaus,
            seed,
            tol.unwrap_or(1e-6),
            capacity,
        ),
        Command::Rudin { poly, ps } => cmd_rudin(poly, ps, capacity),
        Command::Rademacher { m } => cmd_rademacher(*m),
        Command::ExtractQi {
            set,
            c,
            b,
            max_attempts,
        } => cmd_extract_qi(set, *c, *b, *max_attempts, seed, capacity),
        Command::CbExtract {
            input,
            r,
            c,
            b,
            oracle,
            max_attempts,
            trace,
        } => cmd_cb_extract(
            input,
            r,
            *c,
            *b,
            (*oracle).into(),
            *max_attempts,
            trace.as_deref(),
            seed,
            capacity,
        ),
        Command::Selftest { quick } => cmd_selftest(*quick, capacity),
    }
}

// ---------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------

fn cmd_qi_check(set: &str, capacity: &Capacity) -> Result<Outcome, CliError> {
    let payload = load_payload(set, "--set")?;
    let (_, chars) = parse_set(&payload)?;
    let outcome = is_quasi_independent(&chars, capacity)?;
    let result = json!({
        "qi": outcome.is_qi(),
        "method": outcome.method(),
        "size": chars.len(),
        "witness": outcome.witness(),
    });
    let human = match outcome.witness() {
        None => format!(
            "quasi-independent ({} elements, decided by {:?})",
            chars.len(),
            outcome.method()
        ),
        Some(w) => format!(
            "NOT quasi-independent: witness relation of height {} ({:?})",
            w.height(),
            outcome.method()
        ),
    };
    Ok(Outcome::new(
        "qi-check",
        result,
        sha256_hex(&payload.raw),
        human,
    ))
}

fn cmd_relations(
    set: &str,
    height: Option<u32>,
    count_above: Option<u32>,
    max_height: bool,
    cap: Option<u32>,
    capacity: &Capacity,
) -> Result<Outcome, CliError> {
    let payload = load_payload(set, "--set")?;
    let (_, chars) = parse_set(&payload)?;
    let modes = height.is_some() as u8 + count_above.is_some() as u8 + max_height as u8;
    if modes != 1 {
        return Err(usage(
            "choose exactly one of --height, --count-above, --max-height",
        ));
    }
    if cap.is_some() && !max_height {
        return Err(usage("--cap applies to --max-height only"));
    }
    let (result, human) = if let Some(d) = height {
        let relations = enumerate_relations(&chars, d, capacity)?;
        let human = format!("{} relation(s) of height {}", relations.len(), d);
        (
            json!({"mode": "enumerate", "height": d, "count": relations.len(), "relations": relations}),
            human,
        )
    } else if let Some(l) = count_above {
        let count = count_relations_height_gt(&chars, l, capacity)?;
        (
            json!({"mode": "count", "above": l, "count": count}),
            format!("{count} relation(s) of height > {l}"),
        )
    } else {
        let max = max_height_relation(&chars, cap, capacity)?;
        let human = match &max {
            None => "no relation (quasi-independent within the cap)".to_string(),
            Some(r) => format!("maximal relation height {}", r.height()),
        };
        (json!({"mode": "max", "cap": cap, "max": max}), human)
    };
    Ok(Outcome::new(
        "relations",
        result,
        sha256_hex(&payload.raw),
        human,
    ))
}

fn cmd_riesz(
    set: &str,
    a: f64,
    star: bool,
    gamma: Option<&str>,
    phases: PhaseChoice,
    seed: u64,
    capacity: &Capacity,
) -> Result<Outcome, CliError> {
    let payload = load_payload(set, "--set")?;
    let (family, chars) = parse_set(&payload)?;
    let params = phase_params(a, &chars, phases, seed)?;
    let (result, human) = if let Some(key) = gamma {
        let gamma = parse_character(key, family)?;
        let c = riesz_star_coefficient(&chars, &params, &gamma, capacity)?;
        (
            json!({"a": a, "gamma": gamma, "coefficient": {"re": c.re, "im": c.im, "abs": c.norm()}}),
            format!(
                "R̂*({key}) = {:.12} + {:.12}i (|·| = {:.12})",
                c.re,
                c.im,
                c.norm()
            ),
        )
    } else {
        let expansion = if star {
            riesz_star(&chars, &params, capacity)?
        } else {
            riesz_product(&chars, &params, capacity)?
        };
        let human = format!(
            "{} expansion: {} terms, ‖·‖_A = {:.12}",
            if star {
                "starred slice"
            } else {
                "Riesz product"
            },
            expansion.len(),
            expansion.norm_a()
        );
        (
            json!({"a": a, "star": star, "terms": expansion.len(), "expansion": expansion}),
            human,
        )
    };
    Ok(Outcome::new(
        "riesz",
        result,
        sha256_hex(&payload.raw),
        human,
    ))
}

fn cmd_witness(
    set: &str,
    a: f64,
    phases: PhaseChoice,
    seed: u64,
    tol: f64,
    capacity: &Capacity,
) -> Result<Outcome, CliError> {
    let payload = load_payload(set, "--set")?;
    let (_, chars) = parse_set(&payload)?;
    let params = phase_params(a, &chars, phases, seed)?;
    let witness = verify_sidon_witness(&chars, &params, capacity)?;
    let certified = witness.min_margin >= witness.guarantee - tol
        && witness.off_support_max <= witness.off_support_cap + tol
        && witness.total_variation.map_or(true, |tv| tv <= 1.0 + tol);
    let human = format!(
        "min margin {:.6} vs guarantee {:.6}; off-support {:.3e} ≤ {:.3e}; S ≤ {:.6}; certified: {}",
        witness.min_margin,
        witness.guarantee,
        witness.off_support_max,
        witness.off_support_cap,
        witness.sidon_bound,
        certified
    );
    let result = json!({"certified": certified, "tol": tol, "witness": witness});
    Ok(Outcome::new(
        "witness",
        result,
        sha256_hex(&payload.raw),
        human,
    ))
}

fn cmd_norms(
    poly: &str,
    p: Option<f64>,
    grid: &str,
    steinhaus: Option<f64>,
    seed: u64,
    tol: f64,
    capacity: &Capacity,
) -> Result<Outcome, CliError> {
    if grid != "auto" {
        return Err(usage(
            "only --grid auto certifies (the grid doubles until the Bernstein \
             correction meets the tolerance); fixed grids are not offered",
        ));
    }
    let payload = load_payload(poly, "--poly")?;
    let f = parse_poly(&payload)?;
    let norm_a = f.norm_a();
    let l2 = f.l2_norm();
    let lp = match p {
        Some(p) => Some(lp_norm_detailed(&f, p, seed, capacity)?),
        None => None,
    };
    let sup = match f.family() {
        Family::ZoplusN => None,
        _ => Some(certified_sup_norm(&f, tol, capacity)?),
    };
    let sandwich = match steinhaus {
        Some(s_hyp) => {
            let p = p.unwrap_or(4.0);
            Some(steinhaus_sandwich_mc(&f, p, s_hyp, seed, capacity)?)
        }
        None => None,
    };
    let mut human = format!("‖f‖_A = {norm_a:.12}, ‖f‖₂ = {l2:.12}");
    if let Some(e) = &lp {
        human.push_str(&format!(
            ", ‖f‖_{} = {:.12}{}",
            e.p,
            e.value,
            if e.exact { " (exact)" } else { "" }
        ));
    }
    if let Some(s) = &sup {
        human.push_str(&format!(", ‖f‖_∞ ∈ [{:.12}, {:.12}]", s.lower, s.upper));
    }
    if let Some(s) = &sandwich {
        human.push_str(&format!(
            "; Steinhaus sandwich at S = {}: lower_ok {}, upper_ok {}",
            s.s_hyp, s.lower_ok, s.upper_ok
        ));
    }
    let result = json!({
        "family": f.family(),
        "terms": f.len(),
        "norm_a": norm_a,
        "l2": l2,
        "lp": lp,
        "sup": sup,
        "steinhaus": sandwich,
    });
    Ok(Outcome::new(
        "norms",
        result,
        sha256_hex(&payload.raw),
        human,
    ))
}

fn cmd_rudin(poly: &str, ps: &str, capacity: &Capacity) -> Result<Outcome, CliError> {
    let payload = load_payload(poly, "--poly")?;
    let f = parse_poly(&payload)?;
    let ps: Vec<f64> = ps
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| usage(format!("bad p value {s:?} in --ps")))
        })
        .collect::<Result<_, _>>()?;
    let rows = rudin_scan(&f, &ps, capacity)?;
    let mut csv = vec!["p,ratio".to_string()];
    for (p, ratio) in &rows {
        csv.push(format!("{p},{ratio}"));
    }
    let human = rows
        .iter()
        .map(|(p, ratio)| format!("p = {p}: ‖f‖_p/(√p‖f‖₂) = {ratio:.9}"))
        .collect::<Vec<_>>()
        .join("\n");
    let result = json!({
        "rows": rows.iter().map(|(p, ratio)| json!({"p": p, "ratio": ratio})).collect::<Vec<_>>(),
    });
    let mut outcome = Outcome::new("rudin", result, sha256_hex(&payload.raw), human);
    outcome.csv = Some(csv);
    Ok(outcome)
}

fn cmd_rademacher(m: u32) -> Result<Outcome, CliError> {
    let extremal = rademacher_extremal(m)?;
    let human = format!(
        "m = {m}: ratio {:.12} = m·sin(π/2m) (sup {} exact), → π/2 ≈ 1.570796",
        extremal.ratio, extremal.sup
    );
    let result = serde_json::to_value(&extremal).map_err(|source| CliError::Json {
        context: "rademacher serialization".into(),
        source,
    })?;
    Ok(Outcome::new(
        "rademacher",
        result,
        sha256_hex(&format!("m={m}")),
        human,
    ))
}

fn cmd_extract_qi(
    set: &str,
    c: f64,
    b: Option<f64>,
    max_attempts: u32,
    seed: u64,
    capacity: &Capacity,
) -> Result<Outcome, CliError> {
    let payload = load_payload(set, "--set")?;
    let (_, chars) = parse_set(&payload)?;
    let mut params = ExtractParams::new(c, 4.0, seed)?;
    params.b = b;
    params.max_attempts = max_attempts;
    params.validate()?;
    let extraction = extract_qi_random(&chars, &params, capacity)?;
    let ratio = extraction.subset.len() as f64 / chars.len() as f64;
    let human = format!(
        "kept {} of {} elements (ratio {:.4}) in {} attempt(s); η = {:.6}; verified by {:?}",
        extraction.subset.len(),
        chars.len(),
        ratio,
        extraction.attempts,
        extraction.eta,
        extraction.verified_by
    );
    let result = json!({
        "input_size": chars.len(),
        "ratio": ratio,
        "extraction": extraction,
    });
    Ok(Outcome::new(
        "extract-qi",
        result,
        sha256_hex(&payload.raw),
        human,
    ))
}

#[allow(clippy::too_many_arguments)]
fn cmd_cb_extract(
    input: &str,
    r: &str,
    c: f64,
    b: Option<f64>,
    oracle: QiOracle,
    max_attempts: u32,
    trace: Option<&std::path::Path>,
    seed: u64,
    capacity: &Capacity,
) -> Result<Outcome, CliError> {
    let payload = load_payload(input, "--input")?;
    let weighted = parse_weighted(&payload)?;
    let r = if r == "auto" {
        auto_r() as f64
    } else {
        r.parse::<f64>()
            .map_err(|_| usage(format!("--R takes a number or \"auto\", got {r:?}")))?
    };
    let params = ExtractParams {
        c_rudin: c,
        r,
        b,
        max_attempts,
        seed,
    };
    params.validate()?;
    let extraction = cb_extract(&weighted, &params, oracle, capacity)?;
    if let Some(path) = trace {
        let mut text =
            serde_json::to_string_pretty(&extraction.trace).map_err(|source| CliError::Json {
                context: "trace serialization".into(),
                source,
            })?;
        text.push('\n');
        fs::write(path, text).map_err(|source| CliError::Io {
            context: format!("writing trace to {}", path.display()),
            source,
        })?;
    }
    let cert = &extraction.certificate;
    let human = format!(
        "Sidon subset of {} elements; mass ratio {:.6} ≥ theoretical c {:.6}; \
         b achieved {:.4}; R = {}; base_done: {}",
        cert.output_size, cert.ratio, cert.theoretical_c, cert.b_achieved, cert.r, cert.base_done
    );
    let result = json!({
        "subset": extraction.subset,
        "certificate": cert,
        "trace_written": trace.map(|p| p.display().to_string()),
    });
    Ok(Outcome::new(
        "cb-extract",
        result,
        sha256_hex(&payload.raw),
        human,
    ))
}

fn cmd_selftest(quick: bool, capacity: &Capacity) -> Result<Outcome, CliError> {
    let reports: Vec<CriterionReport> = run_all(quick, capacity);
    let passed = reports.iter().all(|r| r.passed);
    let human = reports
        .iter()
        .map(|r| {
            format!(
                "criterion {} ({}): {} [{} ms] — {}",
                r.id,
                r.name,
                if r.passed { "PASS" } else { "FAIL" },
                r.millis,
                r.details
            )
        })
        .collect::<Vec<_>>()
        .join("\n");
    let csv = std::iter::once("id,name,passed,millis".to_string())
        .chain(
            reports
                .iter()
                .map(|r| format!("{},{},{},{}", r.id, r.name, r.passed, r.millis)),
        )
        .collect();
    let result = json!({"passed": passed, "quick": quick, "criteria": reports});
    let mut outcome = Outcome::new(
        "selftest",
        result,
        sha256_hex(&format!("quick={quick}")),
        human,
    );
    outcome.csv = Some(csv);
    outcome.exit = if passed { 0 } else { 1 };
    Ok(outcome)
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => process::exit(code),
        Err(e) => {
            eprintln!("sidonlab: {e}");
            process::exit(e.exit_code());
        }
    }
}
