//! Running an axum router in the background with a shutdown switch.

use std::net::SocketAddr;

use axum::Router;
use tokio::net::TcpListener;
use tokio::sync::watch;

/// Handle to a router served on the current runtime. Dropping it stops the
/// server after in-flight requests finish.
#[derive(Debug)]
pub struct ServerHandle {
    addr: SocketAddr,
    stop: watch::Sender<bool>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn shutdown(&self) {
        let _ = self.stop.send(true);
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.shutdown();
    }
}

/// Serves `router` on `listener` from a spawned task.
pub fn spawn_router(listener: TcpListener, router: Router) -> std::io::Result<ServerHandle> {
    let addr = listener.local_addr()?;
    let (stop, rx) = watch::channel(false);
    tokio::spawn(serve_until(listener, router, rx));
    Ok(ServerHandle { addr, stop })
}

/// Serves until `stop` flips to true.
pub async fn serve_until(listener: TcpListener, router: Router, mut stop: watch::Receiver<bool>) {
    let res = axum::serve(listener, router)
        .with_graceful_shutdown(async move {
            let _ = stop.wait_for(|s| *s).await;
        })
        .await;
    if let Err(e) = res {
        tracing::error!("server stopped: {e}");
    }
}

/// HTTP client for `url`. Loopback targets bypass any proxy configured in
/// the environment so local traffic always takes the direct path.
pub fn http_client(url: &str, timeout: Option<std::time::Duration>) -> reqwest::Client {
    let loopback = reqwest::Url::parse(url)
        .ok()
        .and_then(|u| u.host_str().map(str::to_owned))
        .is_some_and(|h| {
            h == "localhost"
                || h.trim_matches(['[', ']'])
                    .parse::<std::net::IpAddr>()
                    .is_ok_and(|ip| ip.is_loopback())
        });
    let mut b = reqwest::Client::builder();
    if loopback {
        b = b.no_proxy();
    }
    if let Some(t) = timeout {
        b = b.timeout(t);
    }
    b.build().expect("static client configuration")
}
