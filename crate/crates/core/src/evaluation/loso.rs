use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One leave-one-subject-out fold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LosoFold {
    pub fold_index: usize,
    pub train: Vec<String>,
    pub test: String,
}

/// One fold per subject, in subject-id order.
pub fn loso_split(subject_ids: &[String]) -> Result<Vec<LosoFold>> {
    let mut ids: Vec<&String> = subject_ids.iter().collect();
    ids.sort();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::invalid(format!("duplicate subject id {:?}", w[0])));
    }
    if ids.len() < 2 {
        return Err(Error::invalid(format!(
            "leave-one-subject-out needs at least 2 subjects, got {}",
            ids.len()
        )));
    }
    Ok(ids
        .iter()
        .enumerate()
        .map(|(k, test)| LosoFold {
            fold_index: k,
            train: ids.iter().filter(|s| *s != test).map(|s| s.to_string()).collect(),
            test: test.to_string(),
        })
        .collect())
}
