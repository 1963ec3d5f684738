//! Supervised Michigan-style learning classifier system (UCS/ExSTraCS family)
//! and QRF rule compaction.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{normalize, LearnerSpec};
use crate::data::FeatureKind;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LcsParams {
    pub max_rules: usize,
    pub iterations: usize,
    pub nu: f64,
    pub p_spec: f64,
    pub theta_ga: f64,
    pub chi: f64,
    pub mu: f64,
    pub theta_sub: u64,
    pub theta_del: u64,
    pub delta: f64,
    pub beta: f64,
    pub cover_width: f64,
    pub mutate_width: f64,
}

impl Default for LcsParams {
    fn default() -> Self {
        LcsParams {
            max_rules: 2000,
            iterations: 200_000,
            nu: 5.0,
            p_spec: 0.5,
            theta_ga: 25.0,
            chi: 0.8,
            mu: 0.04,
            theta_sub: 20,
            theta_del: 20,
            delta: 0.1,
            beta: 0.2,
            cover_width: 0.25,
            mutate_width: 0.1,
        }
    }
}

impl LcsParams {
    pub fn from_spec(spec: &LearnerSpec) -> Result<Self> {
        let d = LcsParams::default();
        let p = LcsParams {
            max_rules: spec.int("max_rules", d.max_rules as i64)?.max(0) as usize,
            iterations: spec.int("iterations", d.iterations as i64)?.max(0) as usize,
            nu: spec.real("nu", d.nu)?,
            p_spec: spec.real("p_spec", d.p_spec)?,
            theta_ga: spec.real("theta_ga", d.theta_ga)?,
            chi: spec.real("chi", d.chi)?,
            mu: spec.real("mu", d.mu)?,
            theta_sub: spec.int("theta_sub", d.theta_sub as i64)?.max(0) as u64,
            theta_del: spec.int("theta_del", d.theta_del as i64)?.max(0) as u64,
            delta: spec.real("delta", d.delta)?,
            beta: spec.real("beta", d.beta)?,
            cover_width: spec.real("cover_width", d.cover_width)?,
            mutate_width: spec.real("mutate_width", d.mutate_width)?,
        };
        if p.max_rules == 0 || !(0.0..=1.0).contains(&p.p_spec) || !(0.0..=1.0).contains(&p.chi) || !(0.0..=1.0).contains(&p.mu)
        {
            return Err(Error::config("LCS parameters out of range"));
        }
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cond {
    /// Categorical: the attribute must equal this value.
    Eq(f64),
    /// Quantitative: closed interval.
    Range([f64; 2]),
}

impl Cond {
    fn matches(&self, v: f64) -> bool {
        match self {
            Cond::Eq(t) => v == *t,
            Cond::Range([lo, hi]) => *lo <= v && v <= *hi,
        }
    }

    /// `self` accepts everything `other` accepts.
    fn covers(&self, other: &Cond) -> bool {
        match (self, other) {
            (Cond::Eq(a), Cond::Eq(b)) => a == b,
            (Cond::Range([a, b]), Cond::Range([c, d])) => a <= c && d <= b,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    /// Specified attributes, sorted by feature index.
    pub condition: Vec<(usize, Cond)>,
    pub action: u8,
    pub numerosity: u32,
    pub match_count: u64,
    pub correct_count: u64,
    pub accuracy: f64,
    pub fitness: f64,
    pub init_timestamp: u64,
    pub ga_timestamp: u64,
    pub ave_correct_set_size: f64,
}

impl Rule {
    pub fn matches(&self, row: &[f64]) -> bool {
        self.condition.iter().all(|(f, c)| c.matches(row[*f]))
    }

    fn same_condition(&self, other: &Rule) -> bool {
        self.action == other.action && self.condition == other.condition
    }

    /// More general than `other` on every attribute and strictly broader overall.
    fn is_more_general(&self, other: &Rule) -> bool {
        if self.condition.len() > other.condition.len() {
            return false;
        }
        let all = self.condition.iter().all(|(f, c)| {
            other.condition.iter().find(|(g, _)| g == f).is_some_and(|(_, oc)| c.covers(oc))
        });
        all && self.condition != other.condition
    }

    fn vote(&self) -> f64 {
        self.fitness * f64::from(self.numerosity)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LcsModel {
    pub rules: Vec<Rule>,
    pub params: LcsParams,
    #[serde(default)]
    pub compacted: bool,
}

impl LcsModel {
    pub fn population_size(&self) -> u64 {
        self.rules.iter().map(|r| u64::from(r.numerosity)).sum()
    }

    fn score_row(&self, row: &[f64]) -> Option<f64> {
        let (mut v1, mut total) = (0.0, 0.0);
        let mut matched = false;
        for r in self.rules.iter().filter(|r| r.matches(row)) {
            matched = true;
            total += r.vote();
            if r.action == 1 {
                v1 += r.vote();
            }
        }
        match (matched, total > 0.0) {
            (true, true) => Some(v1 / total),
            _ => None,
        }
    }

    /// Class-1 scores and the number of instances no rule voted on.
    pub fn predict(&self, x: &Matrix) -> (Vec<f64>, usize) {
        let mut misses = 0;
        let scores = (0..x.rows())
            .map(|r| {
                self.score_row(x.row(r)).unwrap_or_else(|| {
                    misses += 1;
                    0.5
                })
            })
            .collect();
        (scores, misses)
    }

    /// Fitness-times-numerosity over the rules specifying each feature.
    pub fn importance(&self, p: usize) -> Vec<f64> {
        let mut imp = vec![0.0; p];
        for r in &self.rules {
            for (f, _) in &r.condition {
                imp[*f] += r.vote();
            }
        }
        normalize(&mut imp);
        imp
    }
}

struct Trainer<'a> {
    x: &'a Matrix,
    y: &'a [u8],
    categorical: Vec<bool>,
    range: Vec<f64>,
    p: LcsParams,
    rng: ChaCha8Rng,
    pop: Vec<Rule>,
    micro: u64,
}

impl Trainer<'_> {
    fn specify(&mut self, f: usize, v: f64) -> Cond {
        if self.categorical[f] {
            Cond::Eq(v)
        } else {
            let w = self.p.cover_width * self.range[f];
            Cond::Range([v - w, v + w])
        }
    }

    fn cover(&mut self, row: usize, t: u64) -> Rule {
        let vals = self.x.row(row);
        let n = vals.len();
        let mut condition = Vec::new();
        for (f, &v) in vals.iter().enumerate() {
            if self.rng.random::<f64>() < self.p.p_spec {
                let c = self.specify(f, v);
                condition.push((f, c));
            }
        }
        if condition.is_empty() {
            let f = self.rng.random_range(0..n);
            let c = self.specify(f, vals[f]);
            condition.push((f, c));
        }
        Rule {
            condition,
            action: self.y[row],
            numerosity: 1,
            match_count: 0,
            correct_count: 0,
            accuracy: 1.0,
            fitness: 1.0,
            init_timestamp: t,
            ga_timestamp: t,
            ave_correct_set_size: 1.0,
        }
    }

    fn insert(&mut self, rule: Rule) {
        self.micro += u64::from(rule.numerosity);
        if let Some(existing) = self.pop.iter_mut().find(|r| r.same_condition(&rule)) {
            existing.numerosity += rule.numerosity;
        } else {
            self.pop.push(rule);
        }
    }

    fn update(&mut self, matches: &[usize], correct: &[usize]) {
        let correct_size: f64 = correct.iter().map(|&i| f64::from(self.pop[i].numerosity)).sum();
        let nu = self.p.nu;
        let beta = self.p.beta;
        for &i in matches {
            let r = &mut self.pop[i];
            r.match_count += 1;
            r.accuracy = r.correct_count as f64 / r.match_count as f64;
            r.fitness = r.accuracy.powf(nu);
        }
        for &i in correct {
            let r = &mut self.pop[i];
            r.correct_count += 1;
            r.accuracy = r.correct_count as f64 / r.match_count as f64;
            r.fitness = r.accuracy.powf(nu);
            if (r.match_count as f64) < 1.0 / beta {
                r.ave_correct_set_size += (correct_size - r.ave_correct_set_size) / r.match_count as f64;
            } else {
                r.ave_correct_set_size += beta * (correct_size - r.ave_correct_set_size);
            }
        }
    }

    fn tournament(&mut self, set: &[usize]) -> usize {
        let a = set[self.rng.random_range(0..set.len())];
        let b = set[self.rng.random_range(0..set.len())];
        if self.pop[b].fitness > self.pop[a].fitness {
            b
        } else {
            a
        }
    }

    fn mutate(&mut self, rule: &mut Rule, row: usize) {
        let vals = self.x.row(row).to_vec();
        for (f, &v) in vals.iter().enumerate() {
            if self.rng.random::<f64>() >= self.p.mu {
                continue;
            }
            match rule.condition.iter().position(|(g, _)| *g == f) {
                None => {
                    let c = self.specify(f, v);
                    let at = rule.condition.partition_point(|(g, _)| *g < f);
                    rule.condition.insert(at, (f, c));
                }
                Some(k) => {
                    let generalize = self.categorical[f] || self.rng.random::<f64>() < 0.5;
                    if generalize {
                        if rule.condition.len() > 1 {
                            rule.condition.remove(k);
                        }
                    } else if let Cond::Range([lo, hi]) = &mut rule.condition[k].1 {
                        let shift = self.rng.random_range(-1.0..=1.0) * self.p.mutate_width * self.range[f];
                        if self.rng.random::<bool>() {
                            *lo = (*lo + shift).min(v);
                        } else {
                            *hi = (*hi + shift).max(v);
                        }
                    }
                }
            }
        }
    }

    fn crossover(&mut self, a: &mut Rule, b: &mut Rule) {
        let mut feats: Vec<usize> = a.condition.iter().chain(&b.condition).map(|(f, _)| *f).collect();
        feats.sort_unstable();
        feats.dedup();
        for f in feats {
            if self.rng.random::<bool>() {
                let ia = a.condition.iter().position(|(g, _)| *g == f);
                let ib = b.condition.iter().position(|(g, _)| *g == f);
                let ca = ia.map(|k| a.condition.remove(k));
                let cb = ib.map(|k| b.condition.remove(k));
                if let Some(c) = cb {
                    let at = a.condition.partition_point(|(g, _)| *g < f);
                    a.condition.insert(at, c);
                }
                if let Some(c) = ca {
                    let at = b.condition.partition_point(|(g, _)| *g < f);
                    b.condition.insert(at, c);
                }
            }
        }
    }

    fn ga(&mut self, correct: &[usize], row: usize, t: u64) {
        for &i in correct {
            self.pop[i].ga_timestamp = t;
        }
        let pa = self.tournament(correct);
        let pb = self.tournament(correct);
        let mut ca = self.pop[pa].clone();
        let mut cb = self.pop[pb].clone();
        if self.rng.random::<f64>() < self.p.chi {
            self.crossover(&mut ca, &mut cb);
        }
        for child in [&mut ca, &mut cb] {
            self.mutate(child, row);
        }
        let (acc, fit) = (
            0.5 * (self.pop[pa].accuracy + self.pop[pb].accuracy),
            0.5 * (self.pop[pa].fitness + self.pop[pb].fitness),
        );
        for mut child in [ca, cb] {
            if child.condition.is_empty() {
                continue;
            }
            child.numerosity = 1;
            child.match_count = 0;
            child.correct_count = 0;
            child.accuracy = acc;
            child.fitness = fit;
            child.init_timestamp = t;
            child.ga_timestamp = t;
            let subsumer = [pa, pb].into_iter().find(|&q| {
                let parent = &self.pop[q];
                parent.action == child.action
                    && parent.match_count >= self.p.theta_sub
                    && parent.accuracy >= child.accuracy
                    && parent.is_more_general(&child)
            });
            match subsumer {
                Some(q) => {
                    self.pop[q].numerosity += 1;
                    self.micro += 1;
                }
                None => self.insert(child),
            }
        }
    }

    fn delete(&mut self) {
        while self.micro > self.p.max_rules as u64 {
            let total_num: f64 = self.pop.iter().map(|r| f64::from(r.numerosity)).sum();
            let mean_fit = self.pop.iter().map(|r| r.vote()).sum::<f64>() / total_num;
            let votes: Vec<f64> = self
                .pop
                .iter()
                .map(|r| {
                    let mut v = r.ave_correct_set_size * f64::from(r.numerosity);
                    if r.match_count > self.p.theta_del && r.fitness < self.p.delta * mean_fit {
                        v *= mean_fit / r.fitness.max(1e-12);
                    }
                    v
                })
                .collect();
            let total: f64 = votes.iter().sum();
            let mut pick = self.rng.random::<f64>() * total;
            let mut k = votes.len() - 1;
            for (i, v) in votes.iter().enumerate() {
                if pick < *v {
                    k = i;
                    break;
                }
                pick -= v;
            }
            self.micro -= 1;
            if self.pop[k].numerosity > 1 {
                self.pop[k].numerosity -= 1;
            } else {
                self.pop.remove(k);
            }
        }
    }

    fn run(&mut self) {
        let n = self.x.rows();
        let mut order: Vec<usize> = (0..n).collect();
        let mut pos = n;
        for t in 0..self.p.iterations as u64 {
            if pos == n {
                order.shuffle(&mut self.rng);
                pos = 0;
            }
            let row = order[pos];
            pos += 1;
            let vals = self.x.row(row);
            let label = self.y[row];
            let mut matches: Vec<usize> = (0..self.pop.len()).filter(|&i| self.pop[i].matches(vals)).collect();
            let mut correct: Vec<usize> = matches.iter().copied().filter(|&i| self.pop[i].action == label).collect();
            if correct.is_empty() {
                let rule = self.cover(row, t);
                self.micro += 1;
                self.pop.push(rule);
                let k = self.pop.len() - 1;
                matches.push(k);
                correct.push(k);
            }
            self.update(&matches, &correct);
            let (mut num, mut stamp) = (0.0, 0.0);
            for &i in &correct {
                let r = &self.pop[i];
                num += f64::from(r.numerosity);
                stamp += (t - r.ga_timestamp) as f64 * f64::from(r.numerosity);
            }
            if stamp / num > self.p.theta_ga {
                self.ga(&correct, row, t);
            }
            self.delete();
        }
    }
}

pub fn fit(spec: &LearnerSpec, x: &Matrix, y: &[u8], kinds: &[FeatureKind]) -> Result<LcsModel> {
    let params = LcsParams::from_spec(spec)?;
    if x.cols() == 0 {
        return Err(Error::data("LCS needs at least one feature"));
    }
    let range = (0..x.cols())
        .map(|j| {
            let col = x.column(j);
            col.iter().copied().fold(f64::NEG_INFINITY, f64::max) - col.iter().copied().fold(f64::INFINITY, f64::min)
        })
        .collect();
    let mut tr = Trainer {
        x,
        y,
        categorical: kinds.iter().map(|k| *k == FeatureKind::Categorical).collect(),
        range,
        p: params,
        rng: ChaCha8Rng::seed_from_u64(spec.seed),
        pop: Vec::new(),
        micro: 0,
    };
    tr.run();
    Ok(LcsModel { rules: tr.pop, params, compacted: false })
}

/// Two-stage QRF compaction: drop inexperienced or inaccurate rules, then
/// greedily keep the strongest rules that add correct coverage.
pub fn qrf_compact(model: &LcsModel, x: &Matrix, y: &[u8]) -> LcsModel {
    let survivors: Vec<&Rule> = model.rules.iter().filter(|r| r.match_count > 0 && r.accuracy > 0.5).collect();
    let mut order: Vec<usize> = (0..survivors.len()).collect();
    order.sort_by(|&a, &b| survivors[b].vote().total_cmp(&survivors[a].vote()).then(a.cmp(&b)));
    let correct_cover: Vec<Vec<usize>> = survivors
        .iter()
        .map(|r| (0..x.rows()).filter(|&i| r.action == y[i] && r.matches(x.row(i))).collect())
        .collect();
    let mut coverable = vec![false; x.rows()];
    for c in &correct_cover {
        for &i in c {
            coverable[i] = true;
        }
    }
    let mut remaining = coverable.iter().filter(|&&c| c).count();
    let mut covered = vec![false; x.rows()];
    let mut kept = Vec::new();
    for k in order {
        if remaining == 0 {
            break;
        }
        let fresh: Vec<usize> = correct_cover[k].iter().copied().filter(|&i| !covered[i]).collect();
        if fresh.is_empty() {
            continue;
        }
        for i in fresh {
            covered[i] = true;
            remaining -= 1;
        }
        kept.push(survivors[k].clone());
    }
    if kept.is_empty() {
        log::warn!("rule compaction removed every rule; keeping the fittest");
        if let Some(best) = model.rules.iter().reduce(|a, b| if b.fitness > a.fitness { b } else { a }) {
            kept.push(best.clone());
        }
    }
    LcsModel { rules: kept, params: model.params, compacted: true }
}
