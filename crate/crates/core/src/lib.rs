//! Research quality scoring from chat-completion models.
//!
//! Articles are scored on the four-level 1*..4* scale. Two strategies turn a
//! model's uncertainty into a probability distribution over the levels:
//! asking for an explicit percentage table, or reading the top-k token
//! log-probabilities at the first score token of a short answer. The
//! expected level of that distribution is the article's weighted score.
//! Scores are evaluated by Spearman correlation against departmental
//! proxy means and by how well the stated probabilities predict the
//! model's own repeated answers.

pub mod analytics;
pub mod cli;
pub mod corpus;
pub mod gateway;
pub mod parsing;
pub mod prompting;
pub mod scoring;
