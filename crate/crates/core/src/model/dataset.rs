use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The two activity types a user can perform.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Question,
    Answer,
}

impl Action {
    pub fn as_str(self) -> &'static str {
        match self {
            Action::Question => "q",
            Action::Answer => "a",
        }
    }
}

/// Payload of an event: a question carries its tag, an answer carries the
/// global index of the question it answers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mark {
    Question { tag: usize },
    Answer { parent: usize },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Event {
    pub time: f64,
    pub user: usize,
    pub mark: Mark,
    /// Whether the event advances the user's badge progress.
    pub counts_toward_badge: bool,
}

impl Event {
    pub fn question(time: f64, user: usize, tag: usize) -> Self {
        Event { time, user, mark: Mark::Question { tag }, counts_toward_badge: true }
    }

    pub fn answer(time: f64, user: usize, parent: usize) -> Self {
        Event { time, user, mark: Mark::Answer { parent }, counts_toward_badge: true }
    }

    pub fn action(&self) -> Action {
        match self.mark {
            Mark::Question { .. } => Action::Question,
            Mark::Answer { .. } => Action::Answer,
        }
    }

    pub fn tag(&self) -> Option<usize> {
        match self.mark {
            Mark::Question { tag } => Some(tag),
            Mark::Answer { .. } => None,
        }
    }

    pub fn parent(&self) -> Option<usize> {
        match self.mark {
            Mark::Answer { parent } => Some(parent),
            Mark::Question { .. } => None,
        }
    }
}

/// Time-ordered global event log over `[0, horizon]`.
///
/// Construction validates every invariant and builds per-user and global
/// question views; the value is immutable afterwards.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    events: Vec<Event>,
    horizon: f64,
    num_users: usize,
    num_tags: usize,
    user_questions: Vec<Vec<usize>>,
    user_answers: Vec<Vec<usize>>,
    questions: Vec<usize>,
    question_times: Vec<f64>,
}

impl Dataset {
    pub fn new(events: Vec<Event>, horizon: f64, num_users: usize, num_tags: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidDataset(format!("horizon must be positive and finite, got {horizon}")));
        }
        if num_users == 0 || num_tags == 0 {
            return Err(Error::InvalidDataset("num_users and num_tags must be positive".into()));
        }
        let mut user_questions = vec![Vec::new(); num_users];
        let mut user_answers = vec![Vec::new(); num_users];
        let mut questions = Vec::new();
        let mut question_times = Vec::new();
        let mut last = 0.0_f64;
        for (i, e) in events.iter().enumerate() {
            if !e.time.is_finite() || e.time < 0.0 {
                return Err(Error::InvalidDataset(format!("event {i}: time {} is not a nonnegative number", e.time)));
            }
            if e.time > horizon {
                return Err(Error::InvalidDataset(format!("event {i}: time {} exceeds horizon {horizon}", e.time)));
            }
            if e.time < last {
                return Err(Error::InvalidDataset(format!("event {i}: time {} is earlier than its predecessor {last}", e.time)));
            }
            last = e.time;
            if e.user >= num_users {
                return Err(Error::InvalidDataset(format!("event {i}: user {} out of range (U={num_users})", e.user)));
            }
            match e.mark {
                Mark::Question { tag } => {
                    if tag >= num_tags {
                        return Err(Error::InvalidDataset(format!("event {i}: tag {tag} out of range (K={num_tags})")));
                    }
                    user_questions[e.user].push(i);
                    questions.push(i);
                    question_times.push(e.time);
                }
                Mark::Answer { parent } => {
                    if parent >= i {
                        return Err(Error::InvalidDataset(format!("event {i}: parent {parent} does not precede the answer")));
                    }
                    let p = &events[parent];
                    if p.action() != Action::Question {
                        return Err(Error::InvalidDataset(format!("event {i}: parent {parent} is not a question")));
                    }
                    if p.time >= e.time {
                        return Err(Error::InvalidDataset(format!(
                            "event {i}: parent {parent} at t={} is not strictly earlier than t={}",
                            p.time, e.time
                        )));
                    }
                    user_answers[e.user].push(i);
                }
            }
        }
        Ok(Dataset { events, horizon, num_users, num_tags, user_questions, user_answers, questions, question_times })
    }

    pub fn empty(horizon: f64, num_users: usize, num_tags: usize) -> Result<Self> {
        Dataset::new(Vec::new(), horizon, num_users, num_tags)
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn event(&self, index: usize) -> &Event {
        &self.events[index]
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_tags(&self) -> usize {
        self.num_tags
    }

    /// Global indices of the user's events of one type, in time order.
    pub fn user_events(&self, user: usize, action: Action) -> &[usize] {
        match action {
            Action::Question => &self.user_questions[user],
            Action::Answer => &self.user_answers[user],
        }
    }

    /// Global indices of all questions in time order.
    pub fn questions(&self) -> &[usize] {
        &self.questions
    }

    pub fn question_times(&self) -> &[f64] {
        &self.question_times
    }

    /// Positions (into [`Dataset::questions`]) of questions asked strictly before `t`
    /// and no more than `max_lag` earlier.
    pub fn question_window(&self, t: f64, max_lag: f64) -> std::ops::Range<usize> {
        let end = self.question_times.partition_point(|&q| q < t);
        let start = self.question_times[..end].partition_point(|&q| t - q > max_lag);
        start..end
    }

    /// Number of questions asked strictly before `t`.
    pub fn questions_before(&self, t: f64) -> usize {
        self.question_times.partition_point(|&q| q < t)
    }

    /// Prefix of the log with all events at or before `t_end`, observed over `[0, t_end]`.
    pub fn truncate(&self, t_end: f64) -> Result<Dataset> {
        let n = self.events.partition_point(|e| e.time <= t_end);
        Dataset::new(self.events[..n].to_vec(), t_end, self.num_users, self.num_tags)
    }

    /// Users ids carried by at least one event.
    pub fn active_users(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.num_users).filter(|&u| !self.user_questions[u].is_empty() || !self.user_answers[u].is_empty())
    }
}

/// Per-user observation ends for the question and answer processes.
///
/// A user's events of a type after its end are treated as history only:
/// they still drive other intensities but are not scored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Horizons {
    pub question_end: Vec<f64>,
    pub answer_end: Vec<f64>,
}

impl Horizons {
    pub fn uniform(num_users: usize, horizon: f64) -> Self {
        Horizons { question_end: vec![horizon; num_users], answer_end: vec![horizon; num_users] }
    }

    pub fn end(&self, user: usize, action: Action) -> f64 {
        match action {
            Action::Question => self.question_end[user],
            Action::Answer => self.answer_end[user],
        }
    }

    pub fn validate(&self, dataset: &Dataset) -> Result<()> {
        let u = dataset.num_users();
        if self.question_end.len() != u || self.answer_end.len() != u {
            return Err(Error::InvalidArgument(format!("horizons cover {} users, dataset has {u}", self.question_end.len())));
        }
        for &end in self.question_end.iter().chain(&self.answer_end) {
            if !(end.is_finite() && end >= 0.0 && end <= dataset.horizon()) {
                return Err(Error::InvalidArgument(format!("observation end {end} outside [0, {}]", dataset.horizon())));
            }
        }
        Ok(())
    }

    /// The user's events of a type that fall inside its observation window.
    pub fn observed<'a>(&self, dataset: &'a Dataset, user: usize, action: Action) -> &'a [usize] {
        let all = dataset.user_events(user, action);
        let end = self.end(user, action);
        let n = all.partition_point(|&i| dataset.event(i).time <= end);
        &all[..n]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Dataset {
        Dataset::new(
            vec![Event::question(0.5, 0, 1), Event::question(1.0, 1, 0), Event::answer(2.0, 0, 1), Event::answer(2.5, 1, 0)],
            3.0,
            2,
            2,
        )
        .unwrap()
    }

    #[test]
    fn views_are_consistent() {
        let d = toy();
        assert_eq!(d.user_events(0, Action::Question), &[0]);
        assert_eq!(d.user_events(0, Action::Answer), &[2]);
        assert_eq!(d.questions(), &[0, 1]);
        assert_eq!(d.questions_before(1.0), 1);
        assert_eq!(d.question_window(2.0, 1.2), 1..2);
        assert_eq!(d.question_window(2.0, 10.0), 0..2);
    }

    #[test]
    fn rejects_answer_to_answer() {
        let err = Dataset::new(
            vec![Event::question(0.0, 0, 0), Event::answer(1.0, 0, 0), Event::answer(2.0, 0, 1)],
            3.0,
            1,
            1,
        )
        .unwrap_err();
        assert!(err.to_string().contains("not a question"));
    }

    #[test]
    fn rejects_simultaneous_parent() {
        let err = Dataset::new(vec![Event::question(1.0, 0, 0), Event::answer(1.0, 0, 0)], 3.0, 1, 1).unwrap_err();
        assert!(err.to_string().contains("strictly earlier"));
    }

    #[test]
    fn rejects_out_of_range_ids_and_unsorted() {
        assert!(Dataset::new(vec![Event::question(1.0, 3, 0)], 3.0, 1, 1).is_err());
        assert!(Dataset::new(vec![Event::question(1.0, 0, 5)], 3.0, 1, 1).is_err());
        assert!(Dataset::new(vec![Event::question(4.0, 0, 0)], 3.0, 1, 1).is_err());
        assert!(Dataset::new(vec![Event::question(2.0, 0, 0), Event::question(1.0, 0, 0)], 3.0, 1, 1).is_err());
    }

    #[test]
    fn truncate_keeps_prefix() {
        let d = toy().truncate(2.0).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.horizon(), 2.0);
    }

    #[test]
    fn observed_respects_horizons() {
        let d = toy();
        let mut h = Horizons::uniform(2, 3.0);
        h.answer_end[0] = 1.5;
        assert!(h.observed(&d, 0, Action::Answer).is_empty());
        assert_eq!(h.observed(&d, 1, Action::Answer), &[3]);
    }
}
