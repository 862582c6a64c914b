//! A fake model for smoke tests: answers correctly with a fixed probability
//! and phrases its answers the way chat models tend to.

use compcomp_core::eval::PredictionRecord;
use compcomp_core::qagen::{Format, QAItem, YES};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const LETTERS: &[char] = &['A', 'B', 'C', 'D', 'E', 'F', 'G', 'H'];

fn letters(items: &[usize]) -> String {
    items.iter().map(|&i| LETTERS[i].to_string()).collect::<Vec<_>>().join(", ")
}

fn answer(item: &QAItem, right: bool, rng: &mut ChaCha8Rng) -> String {
    match item.format {
        Format::Binary => {
            let gold_yes = item.gold.first().map(String::as_str) == Some(YES);
            let say_yes = gold_yes == right;
            match (say_yes, rng.gen_range(0..3)) {
                (true, 0) => "Yes.".into(),
                (true, 1) => "yes, that is correct".into(),
                (true, _) => "True".into(),
                (false, 0) => "No.".into(),
                (false, 1) => "no, I do not think so".into(),
                (false, _) => "False".into(),
            }
        }
        Format::Mcq | Format::Maq => {
            let gold: Vec<usize> = (0..item.candidates.len())
                .filter(|&i| item.gold.contains(&item.candidates[i]))
                .collect();
            let picked = if right {
                gold
            } else {
                let wrong: Vec<usize> = (0..item.candidates.len()).filter(|i| !gold.contains(i)).collect();
                let k = if item.format == Format::Mcq { 1 } else { rng.gen_range(1..=wrong.len().max(1)) };
                let mut pick: Vec<usize> = wrong.choose_multiple(rng, k).copied().collect();
                pick.sort_unstable();
                pick
            };
            match rng.gen_range(0..3) {
                0 => letters(&picked),
                1 => format!("The answer is {}", letters(&picked)),
                _ => format!("Answer: ({})", letters(&picked)),
            }
        }
        Format::Open => {
            let gold = item.gold.first().cloned().unwrap_or_default();
            if right {
                gold
            } else {
                // the first few words only
                gold.split_whitespace().take(3).collect::<Vec<_>>().join(" ")
            }
        }
    }
}

/// One prediction per item, right with probability `accuracy`.
pub fn predict(items: &[QAItem], accuracy: f64, seed: u64) -> Vec<PredictionRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    items
        .iter()
        .map(|item| {
            let right = rng.gen_bool(accuracy.clamp(0.0, 1.0));
            PredictionRecord {
                qid: item.qid.clone(),
                prediction: answer(item, right, &mut rng),
            }
        })
        .collect()
}
