//! Command-line front end: key management, scheme operations on file
//! artifacts, and the experiment runner with machine-readable reports.
//!
//! Exit codes: 0 success/pass, 1 domain failure (verification reject or
//! threshold miss), 2 usage error.

mod experiments;
mod reports;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qdel::fhe::{self, FheParams};
use qdel::modq::ZqVec;
use qdel::pke::{self, ParamMode, PkeParams};
use qdel::sim::{read_snapshot, write_snapshot};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_OK: u8 = 0;
const EXIT_DOMAIN: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(
    name = "qdel",
    about = "Dual-Regev encryption with certified deletion",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scheme {
    Pke,
    Fhe,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Strict,
    Sandbox,
}

impl From<Mode> for ParamMode {
    fn from(m: Mode) -> ParamMode {
        match m {
            Mode::Strict => ParamMode::Strict,
            Mode::Sandbox => ParamMode::Sandbox,
        }
    }
}

/// Flags shared by every command that touches randomness or budgets.
#[derive(Args)]
struct CommonOpts {
    /// Config file (JSON) supplying defaults for parameters.
    #[arg(long)]
    config: Option<PathBuf>,
    /// RNG seed; mandatory for reproducible artifacts.
    #[arg(long)]
    seed: Option<u64>,
    /// Trial count for experiments.
    #[arg(long)]
    trials: Option<usize>,
    /// Parameter mode.
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Sparse-state support budget override.
    #[arg(long)]
    budget: Option<usize>,
    /// Worker threads for parallel trials.
    #[arg(long)]
    jobs: Option<usize>,
    /// Output path for the primary artifact.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a key pair and write it as JSON.
    Keygen {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long, value_enum, default_value = "pke")]
        scheme: Scheme,
    },
    /// Encrypt a bit; writes the ciphertext snapshot and verification key.
    Encrypt {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long, value_enum, default_value = "pke")]
        scheme: Scheme,
        /// Key file produced by `keygen`.
        #[arg(long)]
        key: PathBuf,
        /// Plaintext bit.
        #[arg(long)]
        bit: u8,
        /// Where to write the verification key.
        #[arg(long)]
        vk_out: Option<PathBuf>,
    },
    /// Decrypt a ciphertext snapshot (measures it).
    Decrypt {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long, value_enum, default_value = "pke")]
        scheme: Scheme,
        #[arg(long)]
        key: PathBuf,
        /// Ciphertext snapshot produced by `encrypt`.
        #[arg(long)]
        ct: PathBuf,
    },
    /// Measure a ciphertext in the Fourier basis; writes the certificate.
    Delete {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long, value_enum, default_value = "pke")]
        scheme: Scheme,
        #[arg(long)]
        ct: PathBuf,
        /// Verification key file (for bookkeeping in the certificate).
        #[arg(long)]
        vk: PathBuf,
    },
    /// Verify a deletion certificate against a verification key.
    Verify {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long, value_enum, default_value = "pke")]
        scheme: Scheme,
        #[arg(long)]
        vk: PathBuf,
        #[arg(long)]
        cert: PathBuf,
    },
    /// Run a named experiment and write its report.
    Experiment {
        #[command(flatten)]
        common: CommonOpts,
        /// One of: gauss-collapse, strong-gauss-collapse, ind-cpa-cd,
        /// dephasing, uncertainty, lhl, duality, poisson, fhe-pipeline.
        name: String,
    },
}

/// JSON config mirroring the command-line surface.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub experiment: Option<String>,
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub mode: Option<String>,
    pub budget: Option<usize>,
    pub jobs: Option<usize>,
    pub out: Option<String>,
    /// Scheme selector for the ind-cpa-cd experiment: "pke" or "fhe".
    pub scheme: Option<String>,
    pub pke: Option<PkeParams>,
    pub fhe: Option<FheParams>,
    pub circuit: Option<Vec<fhe::NandGate>>,
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, String> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| format!("cannot read config {}: {e}", p.display()))?;
            serde_json::from_str(&text).map_err(|e| format!("bad config: {e}"))
        }
    }
}

/// Resolved run settings after merging config and flags.
pub struct Settings {
    pub config: RunConfig,
    pub seed: u64,
    pub trials: usize,
    pub budget: usize,
    pub jobs: usize,
    pub out: Option<PathBuf>,
    pub mode: ParamMode,
}

fn resolve(common: &CommonOpts) -> Result<Settings, String> {
    let config = load_config(common.config.as_deref())?;
    let seed = common
        .seed
        .or(config.seed)
        .ok_or_else(|| "--seed is required (reproducibility contract)".to_string())?;
    let trials = common.trials.or(config.trials).unwrap_or(100);
    let budget = common
        .budget
        .or(config.budget)
        .unwrap_or(qdel::DEFAULT_SUPPORT_BUDGET);
    let jobs = common.jobs.or(config.jobs).unwrap_or(1);
    let mode = match (&common.mode, config.mode.as_deref()) {
        (Some(m), _) => (*m).into(),
        (None, Some("strict")) => ParamMode::Strict,
        (None, Some("sandbox")) | (None, None) => ParamMode::Sandbox,
        (None, Some(other)) => return Err(format!("bad mode in config: {other}")),
    };
    let out = common
        .out
        .clone()
        .or_else(|| config.out.as_ref().map(PathBuf::from));
    Ok(Settings {
        config,
        seed,
        trials,
        budget,
        jobs,
        out,
        mode,
    })
}

fn default_pke_params(settings: &Settings) -> Result<PkeParams, String> {
    let params = match settings.config.pke {
        Some(p) => p,
        None => match settings.mode {
            // toy window parameters; strict uses the classical-twin shape
            ParamMode::Sandbox => PkeParams::new(8, 1, 29, 2, 1.0 / 5.4, ParamMode::Sandbox)
                .map_err(|e| e.to_string())?,
            ParamMode::Strict => PkeParams::new(16, 2, 521, 40, 1.0 / 28.0, ParamMode::Strict)
                .map_err(|e| e.to_string())?,
        },
    };
    Ok(params.with_budget(settings.budget))
}

fn default_fhe_params(settings: &Settings) -> Result<FheParams, String> {
    let params = match settings.config.fhe {
        Some(p) => p,
        None => FheParams::new(4, 1, 3, 1, 1, 1.0 / 12.0, ParamMode::Sandbox)
            .map_err(|e| e.to_string())?,
    };
    Ok(params.with_budget(settings.budget))
}

fn write_text(path: &Path, text: &str) -> Result<(), String> {
    std::fs::write(path, text).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("bad JSON in {}: {e}", path.display()))
}

fn to_json_pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

#[derive(Serialize, Deserialize)]
struct PkeKeyFile {
    params: PkeParams,
    keypair: pke::PkeKeyPair,
}

#[derive(Serialize, Deserialize)]
struct FheKeyFile {
    params: FheParams,
    keypair: fhe::FheKeyPair,
}

fn run() -> Result<u8, String> {
    let cli = Cli::parse();
    match cli.command {
        Command::Keygen { common, scheme } => {
            let settings = resolve(&common)?;
            let mut rng = seeded(settings.seed);
            let out = settings
                .out
                .clone()
                .unwrap_or_else(|| PathBuf::from("key.json"));
            match scheme {
                Scheme::Pke => {
                    let params = default_pke_params(&settings)?;
                    let keypair = pke::keygen(&params, &mut rng).map_err(|e| e.to_string())?;
                    write_text(&out, &to_json_pretty(&PkeKeyFile { params, keypair }))?;
                }
                Scheme::Fhe => {
                    let params = default_fhe_params(&settings)?;
                    let keypair = fhe::fhe_keygen(&params, &mut rng).map_err(|e| e.to_string())?;
                    write_text(&out, &to_json_pretty(&FheKeyFile { params, keypair }))?;
                }
            }
            println!("wrote {}", out.display());
            Ok(EXIT_OK)
        }
        Command::Encrypt {
            common,
            scheme,
            key,
            bit,
            vk_out,
        } => {
            let settings = resolve(&common)?;
            let mut rng = seeded(settings.seed);
            let out = settings
                .out
                .clone()
                .unwrap_or_else(|| PathBuf::from("ct.qst"));
            let vk_path = vk_out.unwrap_or_else(|| PathBuf::from("vk.json"));
            match scheme {
                Scheme::Pke => {
                    let kf: PkeKeyFile = read_json(&key)?;
                    let params = kf.params.with_budget(settings.budget);
                    let (vk, ct) = pke::encrypt(&kf.keypair.pk, bit, &params, &mut rng)
                        .map_err(|e| e.to_string())?;
                    write_text(&out, &write_snapshot(&ct.state))?;
                    write_text(&vk_path, &to_json_pretty(&vk))?;
                }
                Scheme::Fhe => {
                    let kf: FheKeyFile = read_json(&key)?;
                    let params = kf.params.with_budget(settings.budget);
                    let (vk, ct) =
                        fhe::quantum_fhe_encrypt(&kf.keypair.pk, &[bit], &params, &mut rng)
                            .map_err(|e| e.to_string())?;
                    write_text(&out, &write_snapshot(&ct.state))?;
                    write_text(&vk_path, &to_json_pretty(&vk))?;
                }
            }
            println!("wrote {} and {}", out.display(), vk_path.display());
            Ok(EXIT_OK)
        }
        Command::Decrypt {
            common,
            scheme,
            key,
            ct,
        } => {
            let settings = resolve(&common)?;
            let mut rng = seeded(settings.seed);
            let text = std::fs::read_to_string(&ct)
                .map_err(|e| format!("cannot read {}: {e}", ct.display()))?;
            let state = read_snapshot(&text).map_err(|e| e.to_string())?;
            let bit = match scheme {
                Scheme::Pke => {
                    let kf: PkeKeyFile = read_json(&key)?;
                    let vk = pke::VerificationKey {
                        a: kf.keypair.pk.clone(),
                        y: ZqVec::zero(kf.params.n, kf.params.q),
                    };
                    pke::decrypt(&kf.keypair.sk, pke::PkeCiphertext { state, vk }, &mut rng)
                        .map_err(|e| e.to_string())?
                }
                Scheme::Fhe => {
                    let kf: FheKeyFile = read_json(&key)?;
                    let systems = infer_systems(&state);
                    let ct = fhe::QuantumFheCiphertext {
                        state,
                        systems,
                        vk: fhe::FheVerificationKey {
                            a: kf.keypair.pk.clone(),
                            per_system: vec![],
                        },
                    };
                    let first = ct
                        .input_systems()
                        .first()
                        .cloned()
                        .ok_or_else(|| "ciphertext has no systems".to_string())?;
                    fhe::quantum_fhe_decrypt(&kf.keypair.sk, &ct, &first, &kf.params, &mut rng)
                        .map_err(|e| e.to_string())?
                }
            };
            println!("{bit}");
            Ok(EXIT_OK)
        }
        Command::Delete {
            common,
            scheme,
            ct,
            vk,
        } => {
            let settings = resolve(&common)?;
            let mut rng = seeded(settings.seed);
            let out = settings
                .out
                .clone()
                .unwrap_or_else(|| PathBuf::from("cert.json"));
            let text = std::fs::read_to_string(&ct)
                .map_err(|e| format!("cannot read {}: {e}", ct.display()))?;
            let state = read_snapshot(&text).map_err(|e| e.to_string())?;
            match scheme {
                Scheme::Pke => {
                    let vk: pke::VerificationKey = read_json(&vk)?;
                    let cert_state = pke::PkeCiphertext { state, vk };
                    let (cert, _) = pke::delete(cert_state, &mut rng).map_err(|e| e.to_string())?;
                    write_text(&out, &to_json_pretty(&cert))?;
                }
                Scheme::Fhe => {
                    let vkey: fhe::FheVerificationKey = read_json(&vk)?;
                    let q = vkey.a.q();
                    let m_plus_1 = vkey.a.rows();
                    let params = FheParams::new(
                        4,
                        vkey.a.cols(),
                        q,
                        m_plus_1 - 1,
                        1,
                        0.05,
                        ParamMode::Sandbox,
                    )
                    .map_err(|e| e.to_string())?
                    .with_budget(settings.budget);
                    let systems = infer_systems(&state);
                    let ct = fhe::QuantumFheCiphertext {
                        state,
                        systems,
                        vk: vkey,
                    };
                    let cert =
                        fhe::fhe_delete(&ct, &params, &mut rng).map_err(|e| e.to_string())?;
                    write_text(&out, &to_json_pretty(&cert))?;
                }
            }
            println!("wrote {}", out.display());
            Ok(EXIT_OK)
        }
        Command::Verify {
            common,
            scheme,
            vk,
            cert,
        } => {
            let settings = resolve(&common)?;
            let ok = match scheme {
                Scheme::Pke => {
                    let vk: pke::VerificationKey = read_json(&vk)?;
                    let cert: pke::DeletionCertificate = read_json(&cert)?;
                    let params = default_pke_params(&settings)?;
                    pke::verify(&vk, &cert, &params)
                }
                Scheme::Fhe => {
                    let vk: fhe::FheVerificationKey = read_json(&vk)?;
                    let cert: fhe::FheDeletionCertificate = read_json(&cert)?;
                    let params = default_fhe_params(&settings)?;
                    fhe::fhe_verify(&vk, &cert, &params)
                }
            };
            if ok {
                println!("accept");
                Ok(EXIT_OK)
            } else {
                println!("reject");
                Ok(EXIT_DOMAIN)
            }
        }
        Command::Experiment { common, name } => {
            let settings = resolve(&common)?;
            if settings.jobs > 0 {
                // a dedicated pool honors --jobs without hijacking the
                // global default in other commands
                rayon::ThreadPoolBuilder::new()
                    .num_threads(settings.jobs)
                    .build_global()
                    .ok();
            }
            let report = experiments::run(&name, &settings)?;
            let text = reports::render(&report);
            match &settings.out {
                Some(path) => {
                    write_text(path, &text)?;
                    if let Some(csv) = &report.trial_csv {
                        let csv_path = path.with_extension("trials.csv");
                        write_text(&csv_path, csv)?;
                    }
                    println!("wrote {}", path.display());
                }
                None => print!("{text}"),
            }
            Ok(if report.pass { EXIT_OK } else { EXIT_DOMAIN })
        }
    }
}

/// All snapshot registers named `sys.col` are grouped into systems.
fn infer_systems(state: &qdel::sim::SparseState) -> Vec<fhe::SystemInfo> {
    let mut names: Vec<String> = state
        .layout()
        .registers()
        .iter()
        .filter_map(|r| r.name.split_once('.').map(|(sys, _)| sys.to_string()))
        .collect();
    names.dedup();
    names
        .into_iter()
        .map(|name| fhe::SystemInfo {
            name,
            kind: fhe::SystemKind::Input,
        })
        .collect()
}

fn seeded(seed: u64) -> ChaCha20Rng {
    use rand::SeedableRng;
    ChaCha20Rng::seed_from_u64(seed)
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => ExitCode::from(code),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}
