use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use super::{Gateway, GatewayError, RecordKey, ResponseRecord};
use crate::corpus::Article;
use crate::prompting::{build_prompt, PromptBundle, Strategy, SystemInstructionSet};

#[derive(Debug, Clone, PartialEq)]
pub struct ItemFailure {
    pub article_id: String,
    pub iteration: u32,
    pub retryable: bool,
    pub message: String,
}

#[derive(Debug, Default)]
pub struct BatchOutcome {
    /// Stored records for the requested (article, iteration) pairs, in
    /// article order then iteration order.
    pub records: Vec<ResponseRecord>,
    pub failures: Vec<ItemFailure>,
    pub fetched: usize,
    pub skipped: usize,
}

/// Runs `iterations` exchanges per article with at most `concurrency_limit`
/// requests in flight. Pairs already present in the store are skipped, so a
/// rerun after an interruption only fetches what is missing. Per-item
/// failures are collected rather than aborting the batch.
pub fn run_batch(
    gateway: &Gateway,
    articles: &[Article],
    strategy: Strategy,
    instructions: &SystemInstructionSet,
    iterations: u32,
    concurrency_limit: usize,
) -> Result<BatchOutcome, GatewayError> {
    if iterations == 0 {
        return Err(GatewayError::InvalidRequest(
            "iterations must be at least 1".into(),
        ));
    }
    let existing = gateway.store().load_index()?;
    let mut outcome = BatchOutcome::default();

    let mut pending: Vec<(usize, u32, PromptBundle)> = Vec::new();
    for (idx, article) in articles.iter().enumerate() {
        let bundle = match build_prompt(strategy, article, instructions) {
            Ok(b) => b,
            Err(e) => {
                for iteration in 1..=iterations {
                    outcome.failures.push(ItemFailure {
                        article_id: article.id.clone(),
                        iteration,
                        retryable: false,
                        message: e.to_string(),
                    });
                }
                continue;
            }
        };
        for iteration in 1..=iterations {
            let key = RecordKey {
                article_id: article.id.clone(),
                strategy,
                iteration,
            };
            if existing.contains(&key) {
                outcome.skipped += 1;
            } else {
                pending.push((idx, iteration, bundle.clone()));
            }
        }
    }

    let next = AtomicUsize::new(0);
    type Finished = (usize, u32, Result<ResponseRecord, GatewayError>);
    let results: Mutex<Vec<Finished>> = Mutex::new(Vec::with_capacity(pending.len()));
    let workers = concurrency_limit.max(1).min(pending.len());
    thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some((idx, iteration, bundle)) = pending.get(i) else {
                    break;
                };
                let result = gateway.send(bundle, &articles[*idx].id, *iteration);
                results
                    .lock()
                    .expect("results lock")
                    .push((*idx, *iteration, result));
            });
        }
    });

    let mut fresh: Vec<(usize, u32, ResponseRecord)> = Vec::new();
    let mut results = results.into_inner().expect("results lock");
    results.sort_by_key(|(idx, it, _)| (*idx, *it));
    for (idx, iteration, result) in results {
        match result {
            Ok(record) => {
                outcome.fetched += 1;
                fresh.push((idx, iteration, record));
            }
            Err(GatewayError::Store(e)) => return Err(GatewayError::Store(e)),
            Err(e) => outcome.failures.push(ItemFailure {
                article_id: articles[idx].id.clone(),
                iteration,
                retryable: e.is_retryable(),
                message: e.to_string(),
            }),
        }
    }

    let mut fresh = fresh.into_iter().peekable();
    for (idx, article) in articles.iter().enumerate() {
        for iteration in 1..=iterations {
            let key = RecordKey {
                article_id: article.id.clone(),
                strategy,
                iteration,
            };
            if let Some(record) = existing.get(&key) {
                outcome.records.push(record.clone());
            } else if fresh
                .peek()
                .is_some_and(|(i, it, _)| *i == idx && *it == iteration)
            {
                outcome.records.push(fresh.next().expect("peeked").2);
            }
        }
    }
    Ok(outcome)
}
