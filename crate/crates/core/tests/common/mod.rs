#![allow(dead_code)]

use std::f64::consts::PI;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdout, Command, Output, Stdio};
use std::sync::mpsc;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use rand::Rng;
use sha2::{Digest, Sha256};
use socialbot::codec::{FieldType, MessageSchema, MessageValue, Primitive, SchemaDef, SchemaRegistry, TypeRef, Value};

// ---------------------------------------------------------------- codec

fn random_primitive(rng: &mut impl Rng) -> Primitive {
    Primitive::ALL[rng.gen_range(0..Primitive::ALL.len())]
}

/// Registers a fresh random schema named `rand/S<idx>` that may nest
/// earlier ones, and returns it.
pub fn random_schema(rng: &mut impl Rng, reg: &SchemaRegistry, idx: usize) -> Arc<MessageSchema> {
    let mut def = SchemaDef::new(format!("rand/S{idx}"));
    for f in 0..rng.gen_range(0..7) {
        let leaf = if idx > 0 && rng.gen_bool(0.2) {
            TypeRef::Named(format!("rand/S{}", rng.gen_range(0..idx)))
        } else {
            TypeRef::Primitive(random_primitive(rng))
        };
        let ty = match rng.gen_range(0..4) {
            0 => TypeRef::Array(Box::new(leaf)),
            1 if matches!(leaf, TypeRef::Primitive(_)) => TypeRef::Array(Box::new(TypeRef::Array(Box::new(leaf)))),
            _ => leaf,
        };
        def = def.field(format!("f{f}"), ty);
    }
    reg.register(def).expect("random schema registers");
    reg.get(&format!("rand/S{idx}")).unwrap()
}

fn random_float64(rng: &mut impl Rng) -> f64 {
    match rng.gen_range(0..10) {
        0 => f64::NAN,
        1 => f64::INFINITY,
        2 => -0.0,
        3 => f64::from_bits(rng.gen()),
        _ => rng.gen_range(-1e6..1e6),
    }
}

pub fn random_value(rng: &mut impl Rng, ty: &FieldType, depth: usize) -> Value {
    match ty {
        FieldType::Primitive(p) => match p {
            Primitive::Bool => Value::Bool(rng.gen()),
            Primitive::I8 => Value::I8(rng.gen()),
            Primitive::I16 => Value::I16(rng.gen()),
            Primitive::I32 => Value::I32(rng.gen()),
            Primitive::I64 => Value::I64(rng.gen()),
            Primitive::U8 => Value::U8(rng.gen()),
            Primitive::U16 => Value::U16(rng.gen()),
            Primitive::U32 => Value::U32(rng.gen()),
            Primitive::U64 => Value::U64(rng.gen()),
            Primitive::F32 => Value::F32(random_float64(rng) as f32),
            Primitive::F64 => Value::F64(random_float64(rng)),
            Primitive::String => {
                let n = rng.gen_range(0..12);
                Value::String((0..n).map(|_| rng.gen::<char>()).collect())
            }
            Primitive::Bytes => {
                let n = rng.gen_range(0..40);
                Value::Bytes((0..n).map(|_| rng.gen()).collect())
            }
        },
        FieldType::Array(inner) => {
            let n = if depth > 3 { 0 } else { rng.gen_range(0..5) };
            Value::Array((0..n).map(|_| random_value(rng, inner, depth + 1)).collect())
        }
        FieldType::Message(s) => Value::Message(s.fields.iter().map(|f| random_value(rng, &f.ty, depth + 1)).collect()),
    }
}

pub fn random_message(rng: &mut impl Rng, schema: &Arc<MessageSchema>) -> MessageValue {
    let fields = schema.fields.iter().map(|f| random_value(rng, &f.ty, 0)).collect();
    MessageValue::new(schema.clone(), fields).expect("generated value conforms")
}

// ---------------------------------------------------------------- dsp

/// Straight-line MFCC: naive DFT, filters and DCT written out from their
/// definitions without touching the library's plan.
pub fn mfcc_oracle(x: &[f64]) -> Vec<f64> {
    const N: usize = 512;
    const SR: f64 = 16_000.0;
    const MELS: usize = 26;
    const COEFFS: usize = 13;
    assert_eq!(x.len(), N);
    let mut y = vec![0.0; N];
    for n in 0..N {
        let pre = if n == 0 { x[0] } else { x[n] - 0.97 * x[n - 1] };
        let w = 0.54 - 0.46 * (2.0 * PI * n as f64 / (N as f64 - 1.0)).cos();
        y[n] = pre * w;
    }
    let mut mag = vec![0.0; N / 2 + 1];
    for (k, m) in mag.iter_mut().enumerate() {
        let (mut re, mut im) = (0.0, 0.0);
        for (n, v) in y.iter().enumerate() {
            let phase = -2.0 * PI * ((k * n) % N) as f64 / N as f64;
            re += v * phase.cos();
            im += v * phase.sin();
        }
        *m = (re * re + im * im).sqrt();
    }
    let mel = |hz: f64| 2595.0 * (1.0 + hz / 700.0).log10();
    let inv = |m: f64| 700.0 * (10f64.powf(m / 2595.0) - 1.0);
    let top = mel(SR / 2.0);
    let edge = |i: usize| inv(top * i as f64 / (MELS + 1) as f64);
    let mut log_energy = vec![0.0; MELS];
    for (m, e) in log_energy.iter_mut().enumerate() {
        let (l, c, r) = (edge(m), edge(m + 1), edge(m + 2));
        let mut acc = 0.0;
        for (k, v) in mag.iter().enumerate() {
            let f = k as f64 * SR / N as f64;
            let w = if f > l && f <= c {
                (f - l) / (c - l)
            } else if f > c && f < r {
                (r - f) / (r - c)
            } else {
                0.0
            };
            acc += w * v;
        }
        *e = acc.max(1e-10).ln();
    }
    (0..COEFFS)
        .map(|i| {
            let scale = if i == 0 { (1.0 / MELS as f64).sqrt() } else { (2.0 / MELS as f64).sqrt() };
            scale * (0..MELS).map(|m| log_energy[m] * (PI * i as f64 * (m as f64 + 0.5) / MELS as f64).cos()).sum::<f64>()
        })
        .collect()
}

/// Largest per-coefficient relative error between two MFCC vectors.
pub fn max_rel_err(got: &[f64], want: &[f64]) -> f64 {
    got.iter().zip(want).map(|(g, w)| (g - w).abs() / w.abs().max(1e-9)).fold(0.0, f64::max)
}

// ---------------------------------------------------------------- processes

pub fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_socialbot"))
}

pub fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

pub fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

pub fn cli(args: &[&str]) -> Output {
    Command::new(bin()).args(args).env_remove("SOCIALBOT_BUS").output().expect("run socialbot")
}

/// A long-running `socialbot` child whose stdout lines are readable.
pub struct Proc {
    pub child: Child,
    lines: mpsc::Receiver<String>,
}

impl Proc {
    pub fn spawn(args: &[&str], dir: &Path) -> Proc {
        Self::spawn_env(args, dir, &[])
    }

    pub fn spawn_env(args: &[&str], dir: &Path, env: &[(&str, &str)]) -> Proc {
        let mut cmd = Command::new(bin());
        cmd.args(args).current_dir(dir).stdout(Stdio::piped()).stderr(Stdio::inherit()).env_remove("SOCIALBOT_BUS");
        for (k, v) in env {
            cmd.env(k, v);
        }
        let mut child = cmd.spawn().expect("spawn socialbot");
        let out: ChildStdout = child.stdout.take().unwrap();
        let (tx, lines) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(out).lines().map_while(Result::ok) {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Proc { child, lines }
    }

    /// Next stdout line containing `needle`.
    pub fn wait_for(&self, needle: &str, timeout: Duration) -> String {
        let deadline = std::time::Instant::now() + timeout;
        loop {
            let left = deadline.saturating_duration_since(std::time::Instant::now());
            match self.lines.recv_timeout(left) {
                Ok(l) if l.contains(needle) => return l,
                Ok(_) => {}
                Err(_) => panic!("no line containing {needle:?} within {timeout:?}"),
            }
        }
    }

    pub fn interrupt(&self) {
        unsafe {
            libc::kill(self.child.id() as i32, libc::SIGINT);
        }
    }

    /// Waits for exit, killing the child after `timeout`.
    pub fn finish(mut self, timeout: Duration) -> Option<i32> {
        let deadline = std::time::Instant::now() + timeout;
        while std::time::Instant::now() < deadline {
            if let Some(status) = self.child.try_wait().unwrap() {
                return status.code();
            }
            thread::sleep(Duration::from_millis(20));
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
        None
    }
}

impl Drop for Proc {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

// ---------------------------------------------------------------- http

/// Minimal HTTP/1.1 exchange; returns status and body.
pub fn http(addr: SocketAddr, method: &str, path: &str, body: &[u8]) -> (u16, Vec<u8>) {
    let mut s = TcpStream::connect(addr).expect("connect http");
    s.set_read_timeout(Some(Duration::from_secs(10))).unwrap();
    write!(
        s,
        "{method} {path} HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n",
        body.len()
    )
    .unwrap();
    s.write_all(body).unwrap();
    let mut raw = Vec::new();
    s.read_to_end(&mut raw).unwrap();
    let split = raw.windows(4).position(|w| w == b"\r\n\r\n").expect("http header end");
    let head = String::from_utf8_lossy(&raw[..split]).to_string();
    let status = head.split_whitespace().nth(1).unwrap().parse().unwrap();
    let mut body = raw[split + 4..].to_vec();
    if head.to_ascii_lowercase().contains("transfer-encoding: chunked") {
        body = dechunk(&body);
    }
    (status, body)
}

fn dechunk(mut b: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    loop {
        let line_end = b.windows(2).position(|w| w == b"\r\n").unwrap();
        let n = usize::from_str_radix(std::str::from_utf8(&b[..line_end]).unwrap().trim(), 16).unwrap();
        if n == 0 {
            return out;
        }
        out.extend_from_slice(&b[line_end + 2..line_end + 2 + n]);
        b = &b[line_end + 4 + n..];
    }
}

pub fn http_json(addr: SocketAddr, method: &str, path: &str, body: &str) -> (u16, serde_json::Value) {
    let (st, b) = http(addr, method, path, body.as_bytes());
    (st, serde_json::from_slice(&b).unwrap_or(serde_json::Value::Null))
}

// ---------------------------------------------------------------- source checksum

/// SHA-256 over every file under `src/` and `packages/` of the core crate,
/// in sorted path order.
pub fn core_checksum() -> String {
    fn walk(dir: &Path, out: &mut Vec<PathBuf>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(&p, out);
            } else {
                out.push(p);
            }
        }
    }
    let root = crate_dir();
    let mut files = Vec::new();
    walk(&root.join("src"), &mut files);
    walk(&root.join("packages"), &mut files);
    files.sort();
    let mut h = Sha256::new();
    for f in files {
        h.update(f.strip_prefix(&root).unwrap().to_string_lossy().as_bytes());
        h.update(std::fs::read(&f).unwrap());
    }
    format!("{:x}", h.finalize())
}
