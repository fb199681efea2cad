use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

pub const SKILL_DECAY: f64 = 0.9;
pub const MAX_SKILLS: usize = 15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillRecord {
    /// Sorted tool names joined by '+'.
    pub skill_id: String,
    pub tools: Vec<String>,
    pub success_rate: f64,
    pub applications: u64,
}

/// Tool combinations mined from correct predictions.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SkillSet {
    pub skills: BTreeMap<String, SkillRecord>,
}

pub fn skill_key<'a>(tools: impl IntoIterator<Item = &'a str>) -> (String, Vec<String>) {
    let sorted: BTreeSet<&str> = tools.into_iter().collect();
    let v: Vec<String> = sorted.iter().map(|s| s.to_string()).collect();
    (v.join("+"), v)
}

impl SkillSet {
    pub fn len(&self) -> usize {
        self.skills.len()
    }

    pub fn is_empty(&self) -> bool {
        self.skills.is_empty()
    }

    /// Feeds one episode. Correct episodes upsert their tool set; an
    /// incorrect episode only decays a skill that already exists.
    pub fn observe<'a>(&mut self, tools: impl IntoIterator<Item = &'a str>, correct: bool) {
        let (key, list) = skill_key(tools);
        if list.len() < 2 {
            return;
        }
        let x = if correct { 1.0 } else { 0.0 };
        match self.skills.get_mut(&key) {
            Some(s) => {
                s.success_rate = SKILL_DECAY * s.success_rate + (1.0 - SKILL_DECAY) * x;
                s.applications += 1;
            }
            None if correct => {
                self.skills.insert(
                    key.clone(),
                    SkillRecord {
                        skill_id: key,
                        tools: list,
                        success_rate: 1.0,
                        applications: 1,
                    },
                );
                self.evict();
            }
            None => {}
        }
    }

    fn evict(&mut self) {
        while self.skills.len() > MAX_SKILLS {
            let worst = self
                .skills
                .values()
                .min_by(|a, b| a.success_rate.total_cmp(&b.success_rate))
                .map(|s| s.skill_id.clone())
                .expect("non-empty");
            self.skills.remove(&worst);
        }
    }

    /// Highest success rate; ties go to the earlier key.
    pub fn best(&self) -> Option<&SkillRecord> {
        self.skills
            .values()
            .fold(None, |acc: Option<&SkillRecord>, s| match acc {
                Some(a) if a.success_rate >= s.success_rate => Some(a),
                _ => Some(s),
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dedup_and_min_tools() {
        let mut s = SkillSet::default();
        s.observe(["b", "a"], true);
        s.observe(["a", "b"], true);
        assert_eq!(s.len(), 1);
        assert_eq!(s.skills["a+b"].applications, 2);
        s.observe(["a"], true);
        assert_eq!(s.len(), 1);
        s.observe(["c", "d"], false);
        assert_eq!(s.len(), 1);
        s.observe(["a", "b"], false);
        assert!((s.skills["a+b"].success_rate - 0.9).abs() < 1e-15);
    }

    #[test]
    fn evicts_minimum() {
        let mut s = SkillSet::default();
        for i in 0..15 {
            s.observe([format!("t{i:02}").as_str(), "x"], true);
        }
        s.observe(["t03", "x"], false);
        s.observe(["new", "x"], true);
        assert_eq!(s.len(), MAX_SKILLS);
        assert!(!s.skills.contains_key("t03+x"));
        assert!(s.skills.contains_key("new+x"));
    }
}
