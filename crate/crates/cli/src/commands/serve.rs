use std::net::{IpAddr, SocketAddr};
use std::path::Path;

use hmix_core::elicit::{PlanOptions, SessionManager};

use crate::cli::ServeArgs;
use crate::config::{require, resolve};
use crate::error::{from_core, CliError, Result};
use crate::pool::load_pool;
use crate::server::{router, serve, AppState};

pub fn run(args: &ServeArgs, config: Option<&Path>) -> Result<()> {
    let (a, _) = resolve("serve", args, config, &[])?;
    let pool_dir = require(a.pool.clone(), "pool")?;
    let state = require(a.state.clone(), "state")?;
    let host: IpAddr = a
        .host
        .as_deref()
        .unwrap_or("127.0.0.1")
        .parse()
        .map_err(|e| CliError::Usage(format!("bad host: {e}")))?;
    let addr = SocketAddr::new(host, a.port.unwrap_or(8080));
    if let Some(ui) = &a.ui {
        if !ui.is_dir() {
            return Err(CliError::Missing(ui.clone()));
        }
    }

    let pool = load_pool(&pool_dir)?;
    let manager = SessionManager::open(pool, a.seed.unwrap_or(0), &state)
        .map_err(from_core(&state))?
        .with_plan_options(PlanOptions {
            infer_trials: a.infer_trials,
        });
    let app = router(AppState::new(manager), a.ui.clone());
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Other(format!("runtime: {e}")))?;
    runtime
        .block_on(serve(app, addr))
        .map_err(|e| CliError::Other(format!("{addr}: {e}")))
}
