//! One line per record on stderr: `ts=<unix seconds> level=<LEVEL> key=value ...`.

use std::io::Write;
use std::time::{SystemTime, UNIX_EPOCH};

pub fn init() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format(|buf, record| {
            let ts = SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs_f64())
                .unwrap_or(0.0);
            writeln!(buf, "ts={ts:.3} level={} {}", record.level(), record.args())
        })
        .init();
}
