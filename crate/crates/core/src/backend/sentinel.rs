//! Refusal sentinels.
//!
//! A reply is a sentinel only when, after dropping punctuation, collapsing
//! whitespace and ignoring case, nothing but the sentinel remains. Replies
//! that merely mention the phrase are ordinary text.

pub const NO_INFORMATION: &str = "NO INFORMATION";
pub const NO_ANSWER: &str = "NO ANSWER";

fn squash(text: &str) -> String {
    let cleaned: String = text
        .chars()
        .map(|c| if crate::eval::is_punct(c) { ' ' } else { c })
        .collect();
    cleaned.split_whitespace().collect::<Vec<_>>().join(" ").to_uppercase()
}

pub fn is_sentinel(reply: &str, sentinel: &str) -> bool {
    squash(reply) == sentinel
}

pub fn is_no_information(reply: &str) -> bool {
    is_sentinel(reply, NO_INFORMATION)
}

pub fn is_no_answer(reply: &str) -> bool {
    is_sentinel(reply, NO_ANSWER)
}
