use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Action, Dataset, Horizons};

/// Temporal train/test split of every user's questions and answers.
///
/// Test events stay in the full log, so intensities at test time condition
/// on all earlier events, including other users' questions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Split {
    /// Per-user ends of the training windows.
    pub train: Horizons,
    /// Global indices of test events, in time order.
    pub test_events: Vec<usize>,
    /// `(user, action)` pairs with fewer than two events, kept entirely in training.
    pub all_train: Vec<(usize, Action)>,
}

impl Split {
    /// Score the whole log: nothing is training data.
    pub fn whole(dataset: &Dataset) -> Self {
        Split {
            train: Horizons::uniform(dataset.num_users(), 0.0),
            test_events: (0..dataset.len()).collect(),
            all_train: Vec::new(),
        }
    }
}

/// Put the earliest `ceil(fraction * n)` events of every user and action in
/// training. Events tied in time with the last training event join it.
pub fn split_train_test(dataset: &Dataset, fraction: f64) -> Result<Split> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!("train fraction must lie in (0, 1), got {fraction}")));
    }
    let u = dataset.num_users();
    let horizon = dataset.horizon();
    let mut train = Horizons::uniform(u, horizon);
    let mut test_events = Vec::new();
    let mut all_train = Vec::new();
    for user in 0..u {
        for action in [Action::Question, Action::Answer] {
            let idx = dataset.user_events(user, action);
            let n = idx.len();
            if n < 2 {
                all_train.push((user, action));
                continue;
            }
            let mut n_train = ((fraction * n as f64).ceil() as usize).clamp(1, n);
            let time = |i: usize| dataset.event(idx[i]).time;
            while n_train < n && time(n_train) == time(n_train - 1) {
                n_train += 1;
            }
            if n_train < n {
                let end = time(n_train - 1);
                match action {
                    Action::Question => train.question_end[user] = end,
                    Action::Answer => train.answer_end[user] = end,
                }
                test_events.extend_from_slice(&idx[n_train..]);
            }
        }
    }
    test_events.sort_unstable();
    Ok(Split { train, test_events, all_train })
}
