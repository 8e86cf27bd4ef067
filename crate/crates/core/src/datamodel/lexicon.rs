use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Domain {
    pub id: usize,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Task {
    pub id: usize,
    pub name: String,
    pub domain: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Step {
    pub id: usize,
    pub label: String,
    pub task: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct LexiconFile {
    pub domains: Vec<Domain>,
    pub tasks: Vec<Task>,
    pub steps: Vec<Step>,
}

/// Three-level domain / task / step taxonomy.
///
/// Steps and tasks are indexed by dense ids `0..K` and `0..M`. The canonical
/// step order of a task is the order its steps appear in the source file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicon {
    domains: Vec<Domain>,
    tasks: Vec<Task>,
    steps: Vec<Step>,
    step_task: Vec<usize>,
    task_steps: Vec<Vec<usize>>,
}

fn check_dense(kind: &str, ids: impl Iterator<Item = usize>, n: usize) -> Result<()> {
    let mut seen = HashSet::with_capacity(n);
    for id in ids {
        if !seen.insert(id) {
            return Err(Error::invalid(format!("duplicate {kind} id {id}")));
        }
    }
    if let Some(missing) = (0..n).find(|id| !seen.contains(id)) {
        return Err(Error::invalid(format!(
            "{kind} ids must be dense 0..{}; missing {missing}",
            n.saturating_sub(1)
        )));
    }
    Ok(())
}

impl Lexicon {
    pub fn new(domains: Vec<Domain>, tasks: Vec<Task>, steps: Vec<Step>) -> Result<Self> {
        check_dense("domain", domains.iter().map(|d| d.id), domains.len())?;
        check_dense("task", tasks.iter().map(|t| t.id), tasks.len())?;
        check_dense("step", steps.iter().map(|s| s.id), steps.len())?;
        if tasks.is_empty() {
            return Err(Error::invalid("lexicon has no tasks"));
        }
        for t in &tasks {
            if t.domain >= domains.len() {
                return Err(Error::invalid(format!(
                    "task {} references unknown domain {}",
                    t.id, t.domain
                )));
            }
        }
        let mut task_steps = vec![Vec::new(); tasks.len()];
        for s in &steps {
            if s.task >= tasks.len() {
                return Err(Error::invalid(format!(
                    "step {} references unknown task {}",
                    s.id, s.task
                )));
            }
            task_steps[s.task].push(s.id);
        }
        if let Some(empty) = task_steps.iter().position(Vec::is_empty) {
            return Err(Error::invalid(format!("empty task {empty}: no steps")));
        }

        let mut domains = domains;
        let mut tasks = tasks;
        domains.sort_by_key(|d| d.id);
        tasks.sort_by_key(|t| t.id);
        let mut sorted_steps = steps;
        sorted_steps.sort_by_key(|s| s.id);
        let step_task = sorted_steps.iter().map(|s| s.task).collect();

        Ok(Lexicon {
            domains,
            tasks,
            steps: sorted_steps,
            step_task,
            task_steps,
        })
    }

    /// Total number of steps, `K`.
    pub fn num_steps(&self) -> usize {
        self.steps.len()
    }

    pub fn num_tasks(&self) -> usize {
        self.tasks.len()
    }

    pub fn domains(&self) -> &[Domain] {
        &self.domains
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn task_of(&self, step: usize) -> usize {
        self.step_task[step]
    }

    /// Steps of `task` in canonical (file) order.
    pub fn steps_of(&self, task: usize) -> &[usize] {
        &self.task_steps[task]
    }

    pub fn membership(&self) -> MembershipMatrix {
        MembershipMatrix::from_lexicon(self)
    }
}

/// Binary `K x M` step-to-task matrix: entry `(i, j)` is 1 iff step `i`
/// belongs to task `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct MembershipMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    task_sizes: Vec<usize>,
}

impl MembershipMatrix {
    pub fn from_lexicon(lexicon: &Lexicon) -> Self {
        let (rows, cols) = (lexicon.num_steps(), lexicon.num_tasks());
        let mut data = vec![0.0; rows * cols];
        for (i, &task) in lexicon.step_task.iter().enumerate() {
            data[i * cols + task] = 1.0;
        }
        let task_sizes = lexicon.task_steps.iter().map(Vec::len).collect();
        MembershipMatrix {
            rows,
            cols,
            data,
            task_sizes,
        }
    }

    pub fn num_steps(&self) -> usize {
        self.rows
    }

    pub fn num_tasks(&self) -> usize {
        self.cols
    }

    pub fn get(&self, step: usize, task: usize) -> f64 {
        self.data[step * self.cols + task]
    }

    pub fn row(&self, step: usize) -> &[f64] {
        &self.data[step * self.cols..(step + 1) * self.cols]
    }

    /// Column of `task` as a length-`K` indicator vector.
    pub fn column(&self, task: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, task)).collect()
    }

    pub fn task_size(&self, task: usize) -> usize {
        self.task_sizes[task]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn lexicon(step_tasks: &[usize]) -> Lexicon {
        let n_tasks = step_tasks.iter().max().map_or(0, |m| m + 1);
        Lexicon::new(
            vec![Domain {
                id: 0,
                name: "d".into(),
            }],
            (0..n_tasks)
                .map(|id| Task {
                    id,
                    name: format!("t{id}"),
                    domain: 0,
                })
                .collect(),
            step_tasks
                .iter()
                .enumerate()
                .map(|(id, &task)| Step {
                    id,
                    label: format!("s{id}"),
                    task,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn membership_matches_definition() {
        let w = lexicon(&[0, 0, 1]).membership();
        let rows: Vec<Vec<f64>> = (0..3).map(|i| w.row(i).to_vec()).collect();
        assert_eq!(rows, vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]);
    }

    #[test]
    fn single_task_is_all_ones_column() {
        let w = lexicon(&[0, 0, 0, 0]).membership();
        assert_eq!(w.num_tasks(), 1);
        assert_eq!(w.column(0), vec![1.0; 4]);
    }

    #[test]
    fn rows_sum_to_one_and_columns_to_task_size() {
        let lex = lexicon(&[2, 0, 1, 1, 0, 2, 2]);
        let w = lex.membership();
        for i in 0..w.num_steps() {
            assert_eq!(w.row(i).iter().sum::<f64>(), 1.0);
        }
        for j in 0..w.num_tasks() {
            assert_eq!(
                w.column(j).iter().sum::<f64>(),
                lex.steps_of(j).len() as f64
            );
            assert_eq!(w.task_size(j), lex.steps_of(j).len());
        }
    }

    #[test]
    fn rejects_unknown_task() {
        let err = Lexicon::new(
            vec![Domain {
                id: 0,
                name: "d".into(),
            }],
            vec![Task {
                id: 0,
                name: "t".into(),
                domain: 0,
            }],
            vec![
                Step {
                    id: 0,
                    label: "a".into(),
                    task: 0,
                },
                Step {
                    id: 1,
                    label: "b".into(),
                    task: 3,
                },
            ],
        )
        .unwrap_err();
        assert!(err.to_string().contains("unknown task"), "{err}");
    }

    #[test]
    fn rejects_empty_task() {
        let err = Lexicon::new(
            vec![Domain {
                id: 0,
                name: "d".into(),
            }],
            vec![
                Task {
                    id: 0,
                    name: "t0".into(),
                    domain: 0,
                },
                Task {
                    id: 1,
                    name: "t1".into(),
                    domain: 0,
                },
            ],
            vec![Step {
                id: 0,
                label: "a".into(),
                task: 0,
            }],
        )
        .unwrap_err();
        assert!(err.to_string().contains("empty task"), "{err}");
    }

    #[test]
    fn rejects_duplicate_and_sparse_ids() {
        let dup = Lexicon::new(
            vec![Domain {
                id: 0,
                name: "d".into(),
            }],
            vec![Task {
                id: 0,
                name: "t".into(),
                domain: 0,
            }],
            vec![
                Step {
                    id: 0,
                    label: "a".into(),
                    task: 0,
                },
                Step {
                    id: 0,
                    label: "b".into(),
                    task: 0,
                },
            ],
        )
        .unwrap_err();
        assert!(dup.to_string().contains("duplicate step id"), "{dup}");

        let sparse = Lexicon::new(
            vec![Domain {
                id: 0,
                name: "d".into(),
            }],
            vec![Task {
                id: 0,
                name: "t".into(),
                domain: 0,
            }],
            vec![
                Step {
                    id: 0,
                    label: "a".into(),
                    task: 0,
                },
                Step {
                    id: 2,
                    label: "b".into(),
                    task: 0,
                },
            ],
        )
        .unwrap_err();
        assert!(sparse.to_string().contains("dense"), "{sparse}");
    }

    #[test]
    fn canonical_order_follows_file_order() {
        let lex = Lexicon::new(
            vec![Domain {
                id: 0,
                name: "d".into(),
            }],
            vec![Task {
                id: 0,
                name: "t".into(),
                domain: 0,
            }],
            vec![
                Step {
                    id: 1,
                    label: "b".into(),
                    task: 0,
                },
                Step {
                    id: 0,
                    label: "a".into(),
                    task: 0,
                },
            ],
        )
        .unwrap();
        assert_eq!(lex.steps_of(0), &[1, 0]);
        assert_eq!(lex.steps()[0].label, "a");
    }
}
