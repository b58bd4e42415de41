//! Offline stand-in for a chat-completion endpoint.
//!
//! Each article has a latent quality in [1, 4]. Every exchange perturbs it
//! with bounded uniform noise drawn from a stream seeded by
//! (seed, article, iteration), splits the mass between the two adjacent
//! star levels, and renders a reply in the shape the requested strategy
//! expects.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::{RecordKey, Transport, TransportFailure, WireReply};
use crate::corpus::{Article, ProxyTable};
use crate::prompting::Strategy;

#[derive(Debug, Clone)]
pub struct SimulatedEndpoint {
    latent: HashMap<String, f64>,
    seed: u64,
    noise: f64,
    model: String,
}

impl SimulatedEndpoint {
    pub fn new(latent: HashMap<String, f64>, seed: u64, noise: f64) -> Self {
        SimulatedEndpoint {
            latent,
            seed,
            noise: noise.abs(),
            model: "simulated".into(),
        }
    }

    /// Latent quality of each article is its department's proxy mean.
    /// Articles without a proxy entry get 2.5.
    pub fn from_proxy(articles: &[Article], proxy: &ProxyTable, seed: u64, noise: f64) -> Self {
        let latent = articles
            .iter()
            .map(|a| {
                let q = proxy.get(&a.department_id, a.unit).unwrap_or(2.5);
                (a.id.clone(), q)
            })
            .collect();
        Self::new(latent, seed, noise)
    }

    fn rng_for(&self, key: &RecordKey) -> ChaCha8Rng {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update(key.article_id.as_bytes());
        hasher.update(b"\0");
        hasher.update(key.strategy.as_str().as_bytes());
        hasher.update(key.iteration.to_le_bytes());
        let digest = hasher.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        ChaCha8Rng::from_seed(seed)
    }

    /// Noisy quality for one exchange, clamped to [1, 4].
    pub fn quality(&self, key: &RecordKey) -> f64 {
        let base = self.latent.get(&key.article_id).copied().unwrap_or(2.5);
        let mut rng = self.rng_for(key);
        let jitter = if self.noise > 0.0 {
            rng.gen_range(-self.noise..=self.noise)
        } else {
            0.0
        };
        (base + jitter).clamp(1.0, 4.0)
    }

    /// Probability over 1..=4 that puts all mass on the two levels around `q`.
    pub fn distribution(q: f64) -> [f64; 4] {
        let lo = q.floor().clamp(1.0, 4.0);
        let frac = q - lo;
        let mut p = [0.0; 4];
        let lo_idx = lo as usize - 1;
        if lo_idx == 3 || frac <= 0.0 {
            p[lo_idx] = 1.0;
        } else {
            p[lo_idx] = 1.0 - frac;
            p[lo_idx + 1] = frac;
        }
        p
    }

    fn token_reply(&self, p: [f64; 4]) -> Value {
        let winner = argmax_low(&p);
        let mut digit_alts: Vec<(String, f64)> = p
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > 1e-12)
            .map(|(i, &v)| ((i + 1).to_string(), v.ln()))
            .collect();
        digit_alts.push((" ".into(), -17.4));
        digit_alts.push((" three".into(), -19.6));
        digit_alts.sort_by(|a, b| b.1.total_cmp(&a.1));
        digit_alts.truncate(5);
        let chosen = winner.to_string();
        let chosen_lp = p[winner - 1].ln();

        let position = |token: &str, logprob: f64, alts: &[(String, f64)]| {
            json!({
                "token": token,
                "logprob": logprob,
                "top_logprobs": alts
                    .iter()
                    .map(|(t, l)| json!({"token": t, "logprob": l}))
                    .collect::<Vec<_>>(),
            })
        };
        let content = vec![
            position(
                "Score",
                -0.25,
                &[
                    ("Score".into(), -0.25),
                    ("**".into(), -1.5),
                    ("I".into(), -6.1),
                ],
            ),
            position(":", 0.0, &[(":".into(), 0.0), (":\n".into(), -20.7)]),
            position(" ", -0.002, &[(" ".into(), -0.002), (" **".into(), -6.0)]),
            position(&chosen, chosen_lp, &digit_alts),
            position(
                "*\n\n",
                -0.001,
                &[("*\n\n".into(), -0.001), ("**".into(), -7.0)],
            ),
        ];
        json!({
            "model": self.model,
            "choices": [{
                "index": 0,
                "message": {"role": "assistant", "content": format!("Score: {winner}*\n\n")},
                "logprobs": {"content": content},
                "finish_reason": "length",
            }],
        })
    }

    fn table_reply(&self, p: [f64; 4]) -> Value {
        // whole multiples of 5 that still sum to 100
        let mut pct: Vec<i64> = p.iter().map(|v| ((v * 20.0).round() as i64) * 5).collect();
        let drift = 100 - pct.iter().sum::<i64>();
        let top = argmax_low(&p) - 1;
        pct[top] += drift;
        let content = format!(
            "1*: {}%\n2*: {}%\n3*: {}%\n4*: {}%",
            pct[0], pct[1], pct[2], pct[3]
        );
        self.plain_reply(content)
    }

    fn standard_reply(&self, p: [f64; 4]) -> Value {
        let winner = argmax_low(&p);
        let content = format!(
            "The article is clearly argued and the methods are appropriate, \
             although its reach beyond the immediate field is limited. \
             Weighing originality, significance and rigour together, \
             I would score this article {winner}*."
        );
        self.plain_reply(content)
    }

    fn plain_reply(&self, content: String) -> Value {
        json!({
            "model": self.model,
            "choices": [{
                "index": 0,
                "message": {"role": "assistant", "content": content},
                "finish_reason": "stop",
            }],
        })
    }
}

fn argmax_low(p: &[f64; 4]) -> usize {
    let mut best = 0;
    for i in 1..4 {
        if p[i] > p[best] {
            best = i;
        }
    }
    best + 1
}

impl Transport for SimulatedEndpoint {
    fn post_chat(&self, _body: &Value, key: &RecordKey) -> Result<WireReply, TransportFailure> {
        let p = Self::distribution(self.quality(key));
        let reply = match key.strategy {
            Strategy::TokenScore => self.token_reply(p),
            Strategy::ClassificationTable => self.table_reply(p),
            Strategy::Standard => self.standard_reply(p),
        };
        Ok(WireReply {
            status: 200,
            body: reply.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(iteration: u32) -> RecordKey {
        RecordKey {
            article_id: "a".into(),
            strategy: Strategy::TokenScore,
            iteration,
        }
    }

    #[test]
    fn distribution_expectation_is_quality() {
        for q in [1.0, 1.3, 2.0, 2.75, 3.5, 3.99, 4.0] {
            let p = SimulatedEndpoint::distribution(q);
            let e: f64 = p.iter().enumerate().map(|(i, v)| (i + 1) as f64 * v).sum();
            assert!((e - q).abs() < 1e-12, "{q}");
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn noise_is_bounded_and_deterministic() {
        let sim = SimulatedEndpoint::new([("a".to_string(), 2.5)].into(), 9, 0.2);
        for i in 1..50 {
            let q = sim.quality(&key(i));
            assert!((2.3..=2.7).contains(&q));
            assert_eq!(q, sim.quality(&key(i)));
        }
        assert_ne!(sim.quality(&key(1)), sim.quality(&key(2)));
    }

    #[test]
    fn table_reply_sums_to_100() {
        let sim = SimulatedEndpoint::new(HashMap::new(), 1, 0.0);
        let body = sim.table_reply(SimulatedEndpoint::distribution(2.33));
        let content = body["choices"][0]["message"]["content"].as_str().unwrap();
        let total: i64 = content
            .lines()
            .map(|l| {
                l.split(": ")
                    .nth(1)
                    .unwrap()
                    .trim_end_matches('%')
                    .parse::<i64>()
                    .unwrap()
            })
            .sum();
        assert_eq!(total, 100);
    }
}
