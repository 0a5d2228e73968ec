//! `hashrank`: build hash indexes over vecs datasets, search them, and run
//! recall–time sweeps.
//!
//! ```bash
//! hashrank gt --base sift_base.fvecs --query sift_query.fvecs --k 100 --out gt.ivecs
//! hashrank build --base sift_base.fvecs --bits 1024 --clusters 1000 --tables 32 --seed 7 --out sift.hln
//! hashrank bench --index sift.hln --query sift_query.fvecs --gt gt.ivecs --sweep "L=500:500:10000" --csv sweep.csv
//! ```

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hashrank_core::eval::{parse_sweep, SweepOptions};
use hashrank_core::io::{
    read_code_file, read_ground_truth, read_vecs_auto, write_code_file, write_ground_truth,
    write_results, write_sweep_csv, ResultFormat, Results,
};
use hashrank_core::quantizer::DEFAULT_KMEANS_ITERS;
use hashrank_core::{
    brute_force_ground_truth, load_index, run_sweep, save_index, search_with, BuildConfig, Error,
    HashIndex, ModeSet, PackedCodes, Result, SearchMode, SearchParams, SearchScratch,
};

#[derive(Parser, Debug)]
#[command(
    name = "hashrank",
    version,
    about = "Hash-index approximate nearest neighbor search"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Exact K nearest neighbors by brute force, written as ivecs.
    Gt {
        #[arg(long)]
        base: PathBuf,
        #[arg(long)]
        query: PathBuf,
        #[arg(long, default_value_t = 100)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train random-projection codes and build an index file.
    Build {
        #[arg(long)]
        base: PathBuf,
        /// Code length l.
        #[arg(long, default_value_t = 1024)]
        bits: usize,
        #[command(flatten)]
        layout: Layout,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build an index file from codes produced by an external hasher.
    ImportCodes {
        #[arg(long)]
        base: PathBuf,
        /// uint8 vecs code file (with optional `.meta.json` sidecar).
        #[arg(long)]
        codes: PathBuf,
        /// Code length; defaults to the sidecar, else 8 × bytes per record.
        #[arg(long)]
        bits: Option<usize>,
        #[command(flatten)]
        layout: Layout,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the base codes of an index, or the codes of `--query` vectors.
    ExportCodes {
        #[arg(long)]
        index: PathBuf,
        /// Encode these vectors with the index's projection instead.
        #[arg(long)]
        query: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Search every query and write the result ids and distances.
    Search {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        query: PathBuf,
        #[arg(long, default_value_t = 100)]
        k: usize,
        /// hamming, bucket, quantized or kmeansqi.
        #[arg(long, default_value = "quantized")]
        mode: SearchMode,
        /// Pool size L.
        #[arg(long, default_value_t = 1000)]
        pool: usize,
        /// Clusters probed C.
        #[arg(long, default_value_t = 10)]
        nprobe: usize,
        #[command(flatten)]
        codes: QueryCodes,
        /// csv or ivecs; defaults from the output extension.
        #[arg(long)]
        format: Option<ResultFormat>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recall–time sweep over a parameter grid, written as CSV.
    Bench {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        query: PathBuf,
        /// Ground truth ivecs (from `gt`).
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, default_value_t = 100)]
        k: usize,
        /// Grid such as `L=500:500:10000;C=10,20`.
        #[arg(long, default_value = "L=500:500:10000")]
        sweep: String,
        /// Modes to sweep; defaults to every mode the index supports.
        #[arg(long)]
        mode: Option<ModeSet>,
        /// C when not swept.
        #[arg(long, default_value_t = 10)]
        nprobe: usize,
        /// L when not swept.
        #[arg(long, default_value_t = 1000)]
        pool: usize,
        /// Count query encoding time in the per-query search time.
        #[arg(long)]
        include_coding: bool,
        /// Run queries on all cores; recall only, timings are left blank.
        #[arg(long)]
        parallel: bool,
        /// Skip the untimed warm-up pass.
        #[arg(long)]
        no_warmup: bool,
        #[command(flatten)]
        codes: QueryCodes,
        #[arg(long)]
        csv: PathBuf,
    },
}

#[derive(Args, Debug)]
struct Layout {
    /// kmeans clusters k.
    #[arg(long, default_value_t = 1000)]
    clusters: usize,
    /// Bucket tables m_t.
    #[arg(long, default_value_t = 32)]
    tables: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_KMEANS_ITERS)]
    kmeans_iters: usize,
    /// Comma list of modes to prepare, or `all`.
    #[arg(long, default_value = "all")]
    mode: ModeSet,
}

impl Layout {
    fn config(&self, bits: usize) -> BuildConfig {
        BuildConfig {
            bits,
            clusters: self.clusters,
            tables: self.tables,
            seed: self.seed,
            kmeans_iters: self.kmeans_iters,
            modes: self.mode,
        }
    }
}

#[derive(Args, Debug)]
struct QueryCodes {
    /// Precomputed query codes; required for indexes built by import-codes.
    #[arg(long)]
    query_codes: Option<PathBuf>,
}

impl QueryCodes {
    fn load(&self, index: &HashIndex, queries: usize) -> Result<Option<PackedCodes>> {
        let Some(path) = &self.query_codes else {
            return Ok(None);
        };
        let codes = read_code_file(path, Some(index.bits()))?;
        if codes.len() != queries {
            return Err(Error::InvalidArgument(format!(
                "{} holds {} codes for {queries} queries",
                path.display(),
                codes.len()
            )));
        }
        Ok(Some(codes))
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gt {
            base,
            query,
            k,
            out,
        } => {
            let base = read_vecs_auto(&base)?;
            let queries = read_vecs_auto(&query)?;
            let gt = brute_force_ground_truth(&base, &queries, k)?;
            write_ground_truth(&out, &gt)?;
            eprintln!(
                "wrote {k} neighbors for {} queries to {}",
                gt.queries(),
                out.display()
            );
        }
        Command::Build {
            base,
            bits,
            layout,
            out,
        } => {
            let base = read_vecs_auto(&base)?;
            let index = HashIndex::build(base, &layout.config(bits))?;
            save_index(&index, &out)?;
            eprintln!("{}", describe(&index, &out));
        }
        Command::ImportCodes {
            base,
            codes,
            bits,
            layout,
            out,
        } => {
            let base = read_vecs_auto(&base)?;
            let codes = read_code_file(&codes, bits)?;
            let bits = codes.bits();
            let index = HashIndex::build_with_codes(base, codes, &layout.config(bits))?;
            save_index(&index, &out)?;
            eprintln!("{}", describe(&index, &out));
        }
        Command::ExportCodes { index, query, out } => {
            let index = load_index(&index)?;
            match query {
                None => write_code_file(&out, index.codes())?,
                Some(path) => {
                    let encoder = index.encoder().ok_or_else(|| {
                        Error::InvalidArgument(
                            "index holds imported codes; no projection to encode queries with"
                                .into(),
                        )
                    })?;
                    let queries = read_vecs_auto(&path)?;
                    write_code_file(&out, &encoder.encode_batch(&queries)?)?;
                }
            }
        }
        Command::Search {
            index,
            query,
            k,
            mode,
            pool,
            nprobe,
            codes,
            format,
            out,
        } => {
            let index = load_index(&index)?;
            let queries = read_vecs_auto(&query)?;
            let query_codes = codes.load(&index, queries.rows())?;
            let params = SearchParams::new(mode, k, pool, nprobe);
            let mut scratch = SearchScratch::for_index(&index);
            let records = (0..queries.rows())
                .map(|qi| {
                    let code = query_codes.as_ref().map(|c| c.bit_code(qi));
                    search_with(
                        &index,
                        queries.row(qi),
                        code.as_ref(),
                        &params,
                        &mut scratch,
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            let short = records.iter().filter(|r| r.pool_short).count();
            if short > 0 {
                eprintln!("warning: {short} queries located fewer than L={pool} candidates");
            }
            let format = format.unwrap_or_else(|| ResultFormat::from_path(&out));
            write_results(Results::Queries(&records), &out, format)?;
        }
        Command::Bench {
            index,
            query,
            gt,
            k,
            sweep,
            mode,
            nprobe,
            pool,
            include_coding,
            parallel,
            no_warmup,
            codes,
            csv,
        } => {
            let index = load_index(&index)?;
            let queries = read_vecs_auto(&query)?;
            let truth = read_ground_truth(&gt)?;
            let query_codes = codes.load(&index, queries.rows())?;
            let modes: Vec<SearchMode> = mode.unwrap_or(index.modes()).iter().collect();
            let mut template = SearchParams::new(SearchMode::HammingRanking, k, pool, nprobe);
            template.include_coding = include_coding;
            let grid = parse_sweep(&sweep, &modes, &template)?;
            let options = SweepOptions {
                warmup: !no_warmup,
                parallel,
            };
            let mut records = Vec::with_capacity(grid.len());
            let mut failed = 0;
            for (params, outcome) in grid.iter().zip(run_sweep(
                &index,
                &queries,
                query_codes.as_ref(),
                &truth,
                &grid,
                &options,
            )) {
                match outcome {
                    Ok(r) => records.push(r),
                    Err(e) => {
                        failed += 1;
                        eprintln!(
                            "error: {} L={} C={} K={}: {e}",
                            params.mode, params.pool, params.nprobe, params.k
                        );
                    }
                }
            }
            write_sweep_csv(
                std::io::BufWriter::new(std::fs::File::create(&csv)?),
                &records,
            )?;
            if failed > 0 {
                return Err(Error::InvalidArgument(format!(
                    "{failed} of {} sweep points failed",
                    grid.len()
                )));
            }
        }
    }
    Ok(())
}

fn describe(index: &HashIndex, out: &std::path::Path) -> String {
    format!(
        "wrote {}: n={} m={} l={} modes={}",
        out.display(),
        index.len(),
        index.dim(),
        index.bits(),
        index.modes()
    )
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
