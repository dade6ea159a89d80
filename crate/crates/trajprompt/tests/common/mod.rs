#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use trajprompt_core::ingest::RawCheckIn;
use trajprompt_core::Timestamp;

pub const CATEGORIES: [&str; 12] = [
    "Coffee Shop",
    "Art Museum",
    "Office",
    "Bar",
    "Italian Restaurant",
    "Gym / Fitness Center",
    "Airport",
    "Subway",
    "Park",
    "Ice Cream Shop",
    "Hotel",
    "University",
];

pub struct SyntheticLog {
    pub checkins: Vec<RawCheckIn>,
}

/// Seeded log: `users` users, `pois` POIs, `n` check-ins arranged in bursts
/// of 1-6 visits a few hours apart, spread over about a year.
pub fn synthetic_log(seed: u64, users: usize, pois: usize, n: usize) -> SyntheticLog {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = Timestamp::from_ymd_hms(2012, 4, 1, 0, 0, 0).unwrap().0;
    let poi_cat: Vec<usize> = (0..pois).map(|_| rng.random_range(0..CATEGORIES.len())).collect();
    let poi_pos: Vec<(f64, f64)> =
        (0..pois).map(|_| (40.5 + rng.random::<f64>() * 0.4, -74.2 + rng.random::<f64>() * 0.5)).collect();
    let user_offset: Vec<i32> = (0..users).map(|_| [-300, -240, 0, 540][rng.random_range(0..4)]).collect();
    // Each user favours a handful of POIs.
    let favourites: Vec<Vec<usize>> =
        (0..users).map(|_| (0..6).map(|_| rng.random_range(0..pois)).collect()).collect();

    let mut checkins = Vec::with_capacity(n);
    while checkins.len() < n {
        let u = rng.random_range(0..users);
        let mut t = base + rng.random_range(0..360 * 86_400i64);
        let burst = rng.random_range(1..=6).min(n - checkins.len());
        for _ in 0..burst {
            let p = if rng.random_bool(0.6) {
                favourites[u][rng.random_range(0..favourites[u].len())]
            } else {
                rng.random_range(0..pois)
            };
            let seq = checkins.len() as u64;
            checkins.push(RawCheckIn {
                raw_user_key: format!("u{u}"),
                raw_poi_key: format!("p{p:04x}"),
                raw_category_key: format!("c{}", poi_cat[p]),
                category_name: CATEGORIES[poi_cat[p]].to_string(),
                timestamp: Timestamp(t),
                utc_offset_minutes: user_offset[u],
                latitude: poi_pos[p].0,
                longitude: poi_pos[p].1,
                seq,
            });
            t += rng.random_range(600..6 * 3600);
        }
    }
    SyntheticLog { checkins }
}

impl SyntheticLog {
    /// CSV with the default column names and RFC 3339 timestamps.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("user_id,poi_id,category_id,category_name,latitude,longitude,timestamp,offset\n");
        for c in &self.checkins {
            s.push_str(&format!(
                "{},{},{},\"{}\",{},{},{},{}\n",
                c.raw_user_key,
                c.raw_poi_key,
                c.raw_category_key,
                c.category_name,
                c.latitude,
                c.longitude,
                c.timestamp.to_rfc3339(),
                c.utc_offset_minutes
            ));
        }
        s
    }
}

/// The schema matching [`SyntheticLog::to_csv`], as a TOML table body.
pub const CSV_SCHEMA_TOML: &str = "[ingest.schema]\nutc_offset_minutes = \"offset\"\n";

#[derive(Clone, Debug)]
pub struct Request {
    pub path: String,
    pub headers: Vec<(String, String)>,
    pub body: Value,
}

impl Request {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers.iter().find(|(k, _)| k.eq_ignore_ascii_case(name)).map(|(_, v)| v.as_str())
    }
}

pub struct Reply {
    pub status: u16,
    pub body: Value,
    pub delay: Duration,
}

impl Reply {
    pub fn ok(body: Value) -> Self {
        Reply { status: 200, body, delay: Duration::ZERO }
    }
    pub fn status(status: u16) -> Self {
        Reply { status, body: json!({"error": "scripted"}), delay: Duration::ZERO }
    }
    pub fn delayed(mut self, d: Duration) -> Self {
        self.delay = d;
        self
    }
}

type Handler = dyn Fn(usize, &Request) -> Reply + Send + Sync;

/// Minimal HTTP/1.1 server on 127.0.0.1; one thread per connection, every
/// response closes the connection.
pub struct MockServer {
    pub base_url: String,
    pub hits: Arc<AtomicUsize>,
    pub requests: Arc<Mutex<Vec<Request>>>,
}

fn read_request(stream: &mut TcpStream) -> Option<Request> {
    let mut reader = BufReader::new(stream.try_clone().ok()?);
    let mut line = String::new();
    reader.read_line(&mut line).ok()?;
    let path = line.split_whitespace().nth(1)?.to_string();
    let mut headers = Vec::new();
    let mut len = 0usize;
    loop {
        let mut h = String::new();
        reader.read_line(&mut h).ok()?;
        let h = h.trim_end();
        if h.is_empty() {
            break;
        }
        if let Some((k, v)) = h.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                len = v.trim().parse().ok()?;
            }
            headers.push((k.trim().to_string(), v.trim().to_string()));
        }
    }
    let mut body = vec![0u8; len];
    reader.read_exact(&mut body).ok()?;
    Some(Request { path, headers, body: serde_json::from_slice(&body).unwrap_or(Value::Null) })
}

impl MockServer {
    pub fn start(handler: impl Fn(usize, &Request) -> Reply + Send + Sync + 'static) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let handler: Arc<Handler> = Arc::new(handler);
        let hits = Arc::new(AtomicUsize::new(0));
        let requests = Arc::new(Mutex::new(Vec::new()));
        let (h2, r2) = (hits.clone(), requests.clone());
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { continue };
                let (handler, hits, requests) = (handler.clone(), h2.clone(), r2.clone());
                thread::spawn(move || {
                    let Some(req) = read_request(&mut stream) else { return };
                    let n = hits.fetch_add(1, Ordering::SeqCst);
                    requests.lock().unwrap().push(req.clone());
                    let reply = handler(n, &req);
                    thread::sleep(reply.delay);
                    let body = reply.body.to_string();
                    let head = format!(
                        "HTTP/1.1 {} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
                        reply.status,
                        body.len()
                    );
                    let _ = stream.write_all(head.as_bytes());
                    let _ = stream.write_all(body.as_bytes());
                    let _ = stream.flush();
                });
            }
        });
        MockServer { base_url: format!("http://{addr}"), hits, requests }
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }
}

/// Embeddings response: one deterministic vector per input.
pub fn embeddings_reply(req: &Request, dim: usize) -> Reply {
    let embedder = trajprompt_core::HashingEmbedder::new(dim, 1);
    let inputs = req.body["input"].as_array().cloned().unwrap_or_default();
    let data: Vec<Value> = inputs
        .iter()
        .enumerate()
        .map(|(i, t)| json!({"object": "embedding", "index": i, "embedding": embedder.embed_one(t.as_str().unwrap()).unwrap()}))
        .collect();
    Reply::ok(json!({"object": "list", "data": data}))
}

pub fn completion_reply(text: &str) -> Reply {
    Reply::ok(json!({"choices": [{"index": 0, "text": text, "finish_reason": "stop"}]}))
}

pub fn chat_reply(text: &str) -> Reply {
    Reply::ok(json!({"choices": [{"index": 0, "message": {"role": "assistant", "content": text}}]}))
}

/// Writes `data.csv` (the standard synthetic log) and `config.toml` into
/// `dir`; `extra` is appended to the config. Returns the config path.
pub fn write_fixture(dir: &std::path::Path, extra: &str) -> std::path::PathBuf {
    let log = synthetic_log(7, 200, 150, 5000);
    std::fs::write(dir.join("data.csv"), log.to_csv()).unwrap();
    let cfg = format!("seed = 11\noutput_dir = \"out\"\n{extra}\n[ingest]\ninput = \"data.csv\"\n{CSV_SCHEMA_TOML}");
    let path = dir.join("config.toml");
    std::fs::write(&path, cfg).unwrap();
    path
}

pub fn record(id: u64, user: u32, target: u32, question: &str) -> trajprompt_core::PromptRecord {
    trajprompt_core::PromptRecord {
        question: question.to_string(),
        answer: format!("<answer>: At 2012-05-01 09:00, user {user} will visit POI id {target}."),
        meta: trajprompt_core::prompt::PromptMeta {
            trajectory_id: id,
            user_id: user,
            target_poi_id: target,
            target_time: Timestamp(1_335_862_800),
            variant: trajprompt_core::Variant::Full,
            history_trajectory_ids: vec![],
        },
    }
}
