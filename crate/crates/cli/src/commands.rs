use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use vidseek_core::dedup::{dedup_catalog, DedupConfig};
use vidseek_core::engine::{Engine, EngineOptions, SearchHit};
use vidseek_core::index::{
    default_m, default_nlist, encode_pq, train_ivf, train_pq, write_index, IvfParams, PqParams, SpaceIndex,
    DEFAULT_NPROBE,
};
use vidseek_core::store::{ingest as ingest_manifest, write_atomic, CatalogDir};
use vidseek_core::synth::{write_corpus, SynthSpec};
use vidseek_server::{run_search, Config, Embedders, SearchRequest};

use crate::error::{CliError, FlagContext};
use crate::{BuildIndexArgs, DedupArgs, IndexKind, IngestArgs, SearchArgs, ServeArgs, SynthArgs};

type Result<T> = std::result::Result<T, CliError>;

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let line = serde_json::to_string(value).plain()?;
    println!("{line}");
    Ok(())
}

fn open_catalog(path: &Path) -> Result<CatalogDir> {
    let dir = CatalogDir::new(path);
    if !dir.is_ingested() {
        return Err(CliError::flag(
            "--catalog",
            format!("{} is not an ingested catalog directory", path.display()),
        ));
    }
    Ok(dir)
}

pub fn ingest(args: IngestArgs) -> Result<()> {
    if !args.manifest.is_file() {
        return Err(CliError::flag(
            "--manifest",
            format!("{} does not exist", args.manifest.display()),
        ));
    }
    let report = ingest_manifest(&args.manifest, &CatalogDir::new(&args.out)).plain()?;
    print_json(&report)
}

pub fn dedup(args: DedupArgs) -> Result<()> {
    let config = DedupConfig::new(&args.space, args.delta).flag("--delta")?;
    let dir = open_catalog(&args.catalog)?;
    let catalog = dir.load_catalog().flag("--catalog")?;
    let matrix = dir.load_space(&catalog, &args.space).flag("--space")?;
    let (catalog, report) = dedup_catalog(catalog, &matrix, &config).flag("--space")?;
    let path = dir.dedup_report_path();
    let bytes = serde_json::to_vec_pretty(&report).plain()?;
    write_atomic(&path, &bytes).plain()?;
    dir.save_catalog(&catalog).plain()?;
    print_json(&json!({
        "space": args.space,
        "delta": args.delta,
        "total_frames": report.total_frames,
        "total_removed": report.total_removed,
        "report": path,
    }))
}

/// Flag checks that need nothing from disk.
fn validate_index_flags(args: &BuildIndexArgs) -> Result<()> {
    let positive = |flag: &'static str, v: Option<usize>| match v {
        Some(0) => Err(CliError::flag(flag, format!("{flag} must be at least 1"))),
        _ => Ok(()),
    };
    positive("--nlist", args.nlist)?;
    positive("--nprobe", args.nprobe)?;
    positive("--m", args.m)?;
    let unused = |flag: &'static str, set: bool, kind: &str| {
        if set {
            Err(CliError::flag(flag, format!("{flag} does not apply to --kind {kind}")))
        } else {
            Ok(())
        }
    };
    match args.kind {
        IndexKind::Flat => {
            unused("--nlist", args.nlist.is_some(), "flat")?;
            unused("--nprobe", args.nprobe.is_some(), "flat")?;
            unused("--m", args.m.is_some(), "flat")?;
        }
        IndexKind::Ivf => unused("--m", args.m.is_some(), "ivf")?,
        IndexKind::Ivfpq => {}
    }
    if let (Some(nlist), Some(nprobe)) = (args.nlist, args.nprobe) {
        if nprobe > nlist {
            return Err(CliError::flag(
                "--nprobe",
                format!("--nprobe {nprobe} exceeds --nlist {nlist}"),
            ));
        }
    }
    Ok(())
}

pub fn build_index(args: BuildIndexArgs) -> Result<()> {
    validate_index_flags(&args)?;
    let dir = open_catalog(&args.catalog)?;
    let catalog = dir.load_catalog().flag("--catalog")?;
    let matrix = dir.load_space(&catalog, &args.space).flag("--space")?;

    let nlist = args.nlist.unwrap_or_else(|| default_nlist(matrix.len()));
    if args.kind != IndexKind::Flat && nlist > matrix.len() {
        return Err(CliError::flag(
            "--nlist",
            format!(
                "--nlist {nlist} exceeds the {} rows of space {}",
                matrix.len(),
                args.space
            ),
        ));
    }
    let ivf_params = || IvfParams {
        default_nprobe: args.nprobe.unwrap_or(DEFAULT_NPROBE),
        ..IvfParams::new(nlist, args.seed)
    };
    let index = match args.kind {
        IndexKind::Flat => SpaceIndex::flat(&matrix),
        IndexKind::Ivf => SpaceIndex::Ivf(train_ivf(&matrix, ivf_params()).flag("--nlist")?),
        IndexKind::Ivfpq => {
            let m = args.m.unwrap_or_else(|| default_m(matrix.dim()));
            let ivf = train_ivf(&matrix, ivf_params()).flag("--nlist")?;
            let codebook = train_pq(&matrix, PqParams::new(m, args.seed)).flag("--m")?;
            let codes = encode_pq(&codebook, &matrix).plain()?;
            SpaceIndex::IvfPq { ivf, codebook, codes }
        }
    };
    let path = dir.index_path(&args.space);
    write_index(&path, &index).plain()?;
    let mut out = json!({
        "space": args.space,
        "kind": index.kind(),
        "rows": index.rows(),
        "path": path,
    });
    if let Some(ivf) = index.ivf() {
        out["nlist"] = Value::from(ivf.nlist());
        out["default_nprobe"] = Value::from(ivf.default_nprobe());
        out["seed"] = Value::from(ivf.seed());
    }
    if let SpaceIndex::IvfPq { codebook, .. } = &index {
        out["m"] = Value::from(codebook.m());
        out["ksub"] = Value::from(codebook.ksub());
    }
    print_json(&out)
}

/// Reads `--query-vec`: a bare array needs exactly one space in `spaces`.
fn read_query_vectors(path: &Path, spaces: &[String]) -> Result<BTreeMap<String, Vec<f32>>> {
    let text = std::fs::read_to_string(path).flag("--query-vec")?;
    let value: Value = serde_json::from_str(&text).flag("--query-vec")?;
    if value.is_array() {
        let [space] = spaces else {
            return Err(CliError::flag(
                "--query-vec",
                "a bare vector needs exactly one space in --spaces; use an object keyed by space id",
            ));
        };
        let v: Vec<f32> = serde_json::from_value(value).flag("--query-vec")?;
        return Ok(BTreeMap::from([(space.clone(), v)]));
    }
    serde_json::from_value(value).flag("--query-vec")
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()
        .plain()
}

pub fn search(args: SearchArgs) -> Result<()> {
    if args.query_text.is_none() && args.query_vec.is_none() {
        return Err(CliError::flag(
            "--query-text",
            "one of --query-text or --query-vec is required",
        ));
    }
    if args.classes_from_text && args.query_text.is_none() {
        return Err(CliError::flag(
            "--classes-from-text",
            "--classes-from-text needs --query-text",
        ));
    }
    if args.top == Some(0) {
        return Err(CliError::flag("--top", "--top must be at least 1"));
    }
    let config = Config::load(args.config.as_deref()).flag("--config")?;
    let query_vectors = match &args.query_vec {
        Some(p) => read_query_vectors(p, &args.spaces)?,
        None => BTreeMap::new(),
    };
    let dir = open_catalog(&args.catalog)?;
    let engine = Engine::open(
        dir,
        EngineOptions {
            palette_size: config.palette_size,
            nprobe: config.nprobe,
        },
    )
    .flag("--catalog")?;
    let request = SearchRequest {
        query_text: args.query_text,
        query_vectors,
        spaces: args.spaces,
        fusion: args.fusion.into(),
        normalization: args.normalization.into(),
        top: args.top,
        object_classes: args.object_classes,
        classes_from_text: args.classes_from_text,
        match_mode: args.match_mode.into(),
        include_deduped: args.include_deduped,
        nprobe: args.nprobe,
        timing: false,
    };
    let embedders = Embedders::from_config(&config);
    let (body, _) = runtime()?.block_on(run_search(&engine, &embedders, &request, config.default_top))?;
    let hits = body.response.flatten();
    let mut out = std::io::stdout().lock();
    if args.pretty {
        write_table(&mut out, &hits).plain()?;
    } else {
        for hit in hits {
            writeln!(out, "{}", serde_json::to_string(hit).plain()?).plain()?;
        }
    }
    Ok(())
}

fn write_table(out: &mut impl Write, hits: &[&SearchHit]) -> std::io::Result<()> {
    writeln!(
        out,
        "{:>5}  {:>9}  {:>8}  {:<12}  {:>10}  image",
        "rank", "score", "frame", "video", "time"
    )?;
    for h in hits {
        writeln!(
            out,
            "{:>5}  {:>9.5}  {:>8}  {:<12}  {:>10}  {}",
            h.rank,
            h.score,
            h.frame_id,
            h.video_id,
            format_ms(h.timestamp_ms),
            h.image_path
        )?;
    }
    Ok(())
}

fn format_ms(ms: u64) -> String {
    let s = ms / 1000;
    format!("{}:{:02}.{:03}", s / 60, s % 60, ms % 1000)
}

pub fn serve(args: ServeArgs) -> Result<()> {
    let mut config = Config::load(args.config.as_deref()).flag("--config")?;
    if let Some(bind) = args.bind {
        config.bind = bind;
    }
    let catalog = args
        .catalog
        .or_else(|| config.catalog.clone())
        .ok_or_else(|| CliError::flag("--catalog", "--catalog is required (or set catalog in the config)"))?;
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    tokio::runtime::Runtime::new()
        .plain()?
        .block_on(vidseek_server::serve(config, CatalogDir::new(catalog)))
        .plain()
}

pub fn synth(args: SynthArgs) -> Result<()> {
    let manifest = write_corpus(&SynthSpec::small(args.seed), &args.out).flag("--out")?;
    print_json(&json!({ "manifest": manifest }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minutes_seconds_millis() {
        assert_eq!(format_ms(0), "0:00.000");
        assert_eq!(format_ms(61_250), "1:01.250");
    }

    #[test]
    fn bare_vector_needs_one_space() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("q.json");
        std::fs::write(&p, "[1, 0, 0]").unwrap();
        let m = read_query_vectors(&p, &["clip".into()]).unwrap();
        assert_eq!(m["clip"], vec![1.0, 0.0, 0.0]);
        let e = read_query_vectors(&p, &["a".into(), "b".into()]).unwrap_err();
        assert_eq!(e.flag, Some("--query-vec"));
        std::fs::write(&p, r#"{"a": [1], "b": [0, 1]}"#).unwrap();
        assert_eq!(read_query_vectors(&p, &[]).unwrap().len(), 2);
    }
}
