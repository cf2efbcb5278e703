//! Read-only HTTP view of one exported directory.

use std::collections::HashMap;
use std::future::Future;
use std::io::Cursor;
use std::path::{Component, Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Request, State};
use axum::http::{header, HeaderMap, Method, StatusCode, Uri};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use tokio::net::TcpListener;

use trajmap_core::document::{decode_pgm, GraphDocument, GRAPH_FILE};

pub const PGM_TYPE: &str = "image/x-portable-graymap";
const JSON_TYPE: &str = "application/json";
const INDEX_HTML: &str = include_str!("index.html");

struct Thumb {
    pgm: Bytes,
    png: Bytes,
}

/// Everything a server hands out, read once at startup and never written.
pub struct Site {
    graph: Bytes,
    trajectories: Bytes,
    thumbs: HashMap<String, Thumb>,
    ui_dir: Option<PathBuf>,
}

impl Site {
    /// Loads and validates `graph.json` and every thumbnail under `dir`.
    /// `ui_dir`, when given, is served for every non-API path.
    pub fn load(dir: &Path, ui_dir: Option<PathBuf>) -> Result<Self> {
        let path = dir.join(GRAPH_FILE);
        let graph = std::fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
        let text = std::str::from_utf8(&graph).with_context(|| format!("{} is not UTF-8", path.display()))?;
        let doc = GraphDocument::from_json(text)?;
        doc.validate().with_context(|| format!("validating {}", path.display()))?;

        let mut thumbs = HashMap::with_capacity(doc.nodes.len());
        for node in &doc.nodes {
            let p = dir.join(&node.thumbnail_ref);
            let pgm = std::fs::read(&p).with_context(|| format!("reading {}", p.display()))?;
            let png = pgm_to_png(&pgm).with_context(|| format!("converting {}", p.display()))?;
            thumbs.insert(
                node.node_id.clone(),
                Thumb {
                    pgm: pgm.into(),
                    png: png.into(),
                },
            );
        }
        let mut trajectories = serde_json::to_vec_pretty(&doc.trajectories)?;
        trajectories.push(b'\n');
        Ok(Site {
            graph: graph.into(),
            trajectories: trajectories.into(),
            thumbs,
            ui_dir,
        })
    }
}

pub fn pgm_to_png(pgm: &[u8]) -> Result<Vec<u8>> {
    let g = decode_pgm(pgm)?;
    let img = image::GrayImage::from_raw(g.width as u32, g.height as u32, g.pixels).context("raster size mismatch")?;
    let mut out = Vec::new();
    img.write_to(&mut Cursor::new(&mut out), image::ImageFormat::Png)?;
    Ok(out)
}

pub fn router(site: Arc<Site>) -> Router {
    Router::new()
        .route("/api/graph", get(graph))
        .route("/api/trajectories", get(trajectories))
        .route("/api/nodes/{id}/image", get(node_image))
        .fallback(asset)
        .layer(middleware::from_fn(read_only))
        .with_state(site)
}

/// Serves until `shutdown` resolves.
pub async fn serve(listener: TcpListener, site: Site, shutdown: impl Future<Output = ()> + Send + 'static) -> Result<()> {
    axum::serve(listener, router(Arc::new(site)))
        .with_graceful_shutdown(shutdown)
        .await?;
    Ok(())
}

async fn read_only(req: Request, next: Next) -> Response {
    if matches!(*req.method(), Method::GET | Method::HEAD) {
        next.run(req).await
    } else {
        (StatusCode::METHOD_NOT_ALLOWED, [(header::ALLOW, "GET, HEAD")]).into_response()
    }
}

fn not_found() -> Response {
    (StatusCode::NOT_FOUND, "not found\n").into_response()
}

async fn graph(State(site): State<Arc<Site>>) -> Response {
    ([(header::CONTENT_TYPE, JSON_TYPE)], site.graph.clone()).into_response()
}

async fn trajectories(State(site): State<Arc<Site>>) -> Response {
    ([(header::CONTENT_TYPE, JSON_TYPE)], site.trajectories.clone()).into_response()
}

fn wants_png(headers: &HeaderMap) -> bool {
    headers
        .get_all(header::ACCEPT)
        .iter()
        .filter_map(|v| v.to_str().ok())
        .flat_map(|v| v.split(','))
        .any(|m| m.split(';').next().unwrap_or("").trim().eq_ignore_ascii_case("image/png"))
}

async fn node_image(State(site): State<Arc<Site>>, UrlPath(id): UrlPath<String>, headers: HeaderMap) -> Response {
    let Some(thumb) = site.thumbs.get(&id) else {
        return not_found();
    };
    let (kind, body) = if wants_png(&headers) {
        ("image/png", thumb.png.clone())
    } else {
        (PGM_TYPE, thumb.pgm.clone())
    };
    ([(header::CONTENT_TYPE, kind), (header::VARY, "Accept")], body).into_response()
}

fn asset_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()) {
        Some("html") => "text/html; charset=utf-8",
        Some("js" | "mjs") => "text/javascript; charset=utf-8",
        Some("css") => "text/css; charset=utf-8",
        Some("json" | "map") => JSON_TYPE,
        Some("svg") => "image/svg+xml",
        Some("png") => "image/png",
        Some("ico") => "image/x-icon",
        Some("wasm") => "application/wasm",
        _ => "application/octet-stream",
    }
}

async fn asset(State(site): State<Arc<Site>>, uri: Uri) -> Response {
    let path = uri.path();
    if path == "/api" || path.starts_with("/api/") {
        return not_found();
    }
    let rel = match path.trim_start_matches('/') {
        "" => "index.html",
        p => p,
    };
    let Some(dir) = &site.ui_dir else {
        return if rel == "index.html" {
            ([(header::CONTENT_TYPE, "text/html; charset=utf-8")], INDEX_HTML).into_response()
        } else {
            not_found()
        };
    };
    let rel = Path::new(rel);
    if !rel.components().all(|c| matches!(c, Component::Normal(_))) {
        return not_found();
    }
    match tokio::fs::read(dir.join(rel)).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, asset_type(rel))], bytes).into_response(),
        Err(_) => not_found(),
    }
}
