#![allow(dead_code)]

use std::io::BufReader;
use std::thread::JoinHandle;

use corpus_sieve::corpus::SentencePair;
use corpus_sieve::scoring::mock::{self, MockConfig};
use corpus_sieve::scoring::RemoteScorer;
use corpus_sieve::Result;

/// Connects a client to a mock scorer running on its own thread over OS pipes.
pub fn mock_session(config: MockConfig) -> (Result<RemoteScorer>, JoinHandle<std::io::Result<()>>) {
    let (req_r, req_w) = std::io::pipe().unwrap();
    let (resp_r, resp_w) = std::io::pipe().unwrap();
    let server = std::thread::spawn(move || mock::serve(&config, req_r, resp_w));
    (RemoteScorer::connect(BufReader::new(resp_r), req_w), server)
}

pub fn pairs(n: u64) -> Vec<SentencePair> {
    (0..n)
        .map(|i| {
            let src = "x".repeat((i % 17 + 1) as usize);
            let tgt = "y".repeat((i * 7 % 23) as usize);
            SentencePair::new(i, src, tgt).unwrap()
        })
        .collect()
}
